// SPDX-License-Identifier: Apache-2.0

//! The full-space heat kernel `Z(t, x)` and related radial integrals.
//!
//! For a radial symbol `g` the inverse Fourier transform at `‖x‖ = p^β` is the
//! sphere series
//!
//! ```text
//! p^{-nβ} [ (1 - p^{-n}) Σ_{j ≥ 0} p^{-nj} g(p^{-(β+j)}) - g(p^{-(β-1)}) ]
//! ```
//!
//! The weights `(1 - p^{-n}) p^{-nj}` sum to one, so any constant can be
//! subtracted from `g` without changing the value. The heat kernel uses
//! `g - 1 = expm1(-ϰ t A_w)`, which keeps small-`t` evaluations free of
//! cancellation.
//!
//! Sign convention: the positive operator `𝒲u(x) = ϰ ∫ (u(x) - u(x-y)) / w(‖y‖) dy`
//! has symbol `ϰ A_w`, and `Z` is the kernel of `e^{-t𝒲}`.

use crate::error::{Error, Result};
use crate::padic::SpaceConfig;
use crate::spectral::{compensated_sum, Spectrum, ROUNDOFF_FLOOR};

/// Envelope of `|g(p^e) - limit|` below a window: at most `constant · p^{rate·e}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TailEnvelope {
    pub constant: f64,
    pub rate: f64,
}

/// A radial function `g(‖ξ‖)` stored at `‖ξ‖ = p^e` for `e` in a window,
/// together with its value at `ξ = 0` and an envelope for smaller norms.
#[derive(Clone, Debug, PartialEq)]
pub struct RadialFunction {
    e_min: i64,
    values: Vec<f64>,
    limit: f64,
    tail: TailEnvelope,
}

impl RadialFunction {
    pub fn new(e_min: i64, values: Vec<f64>, limit: f64, tail: TailEnvelope) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("radial function needs at least one stored value"));
        }
        if values.iter().any(|v| !v.is_finite()) || !limit.is_finite() {
            return Err(Error::invalid("radial function values must be finite"));
        }
        Ok(RadialFunction {
            e_min,
            values,
            limit,
            tail,
        })
    }

    pub fn from_fn(e_min: i64, e_max: i64, f: impl Fn(i64) -> f64, limit: f64, tail: TailEnvelope) -> Result<Self> {
        Self::new(e_min, (e_min..=e_max).map(f).collect(), limit, tail)
    }

    /// `e^{-ϰ t A_w(ξ)}` on the window, with the envelope implied by `A_w ≤ C₄ ‖ξ‖^{α-n}`.
    pub fn heat_symbol(spectrum: &Spectrum, t: f64, e_min: i64, e_max: i64) -> Result<Self> {
        let kt = spectrum.kappa() * t;
        let mut values = Vec::with_capacity((e_max - e_min + 1).max(0) as usize);
        for e in e_min..=e_max {
            values.push((-kt * spectrum.a_w(-e)?).exp());
        }
        let (_, c4) = spectrum.symbol_envelope();
        let params = spectrum.params();
        let rate = params.weight().alpha() - params.space().n() as f64;
        Self::new(e_min, values, 1.0, TailEnvelope { constant: kt * c4, rate })
    }

    /// Indicator of `‖ξ‖ ≤ p^{-N}`.
    pub fn ball_indicator(ball_exp: i64, e_min: i64, e_max: i64) -> Result<Self> {
        Self::from_fn(
            e_min,
            e_max,
            |e| if e <= -ball_exp { 1.0 } else { 0.0 },
            1.0,
            TailEnvelope { constant: 0.0, rate: 1.0 },
        )
    }

    pub fn window(&self) -> (i64, i64) {
        (self.e_min, self.e_min + self.values.len() as i64 - 1)
    }

    pub fn limit(&self) -> f64 {
        self.limit
    }

    /// Stored value at `‖ξ‖ = p^e`, if inside the window.
    pub fn value(&self, e: i64) -> Option<f64> {
        let idx = e - self.e_min;
        (idx >= 0).then(|| self.values.get(idx as usize).copied()).flatten()
    }

    /// Pointwise sum on the common window.
    pub fn add(&self, other: &RadialFunction) -> Result<RadialFunction> {
        if self.window() != other.window() {
            return Err(Error::Mismatch("radial functions with different windows".into()));
        }
        let rate = self.tail.rate.min(other.tail.rate);
        Self::new(
            self.e_min,
            self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect(),
            self.limit + other.limit,
            TailEnvelope {
                constant: self.tail.constant + other.tail.constant,
                rate,
            },
        )
    }
}

/// Full-space heat kernel evaluator.
#[derive(Clone, Debug)]
pub struct HeatKernel {
    spectrum: Spectrum,
}

/// Both sides of the Chapman–Kolmogorov identity at one point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChapmanKolmogorov {
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
}

impl HeatKernel {
    pub fn new(spectrum: Spectrum) -> Self {
        HeatKernel { spectrum }
    }

    pub fn spectrum(&self) -> &Spectrum {
        &self.spectrum
    }

    fn space(&self) -> SpaceConfig {
        self.spectrum.space()
    }

    fn check_time(t: f64) -> Result<()> {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::invalid(format!("t: must be positive, got {t}")));
        }
        Ok(())
    }

    /// Sphere series `p^{-nβ} ((1 - p^{-n}) Σ_{j ≥ 0} p^{-nj} h(β+j) - h(β-1))`
    /// for a radial symbol `h` with `|h(γ)| ≤ bound(γ)`, `bound` nonincreasing.
    fn sphere_series(
        &self,
        beta: i64,
        h: impl Fn(i64) -> Result<f64>,
        bound: impl Fn(i64) -> Result<f64>,
    ) -> Result<f64> {
        let space = self.space();
        let frac = space.sphere_fraction();
        let tol = self.spectrum.tolerance();
        let outer = h(beta - 1)?;
        let mut terms = Vec::new();
        let mut magnitude = outer.abs();
        let mut j = 0i64;
        loop {
            let term = space.pow_n(-j) * h(beta + j)?;
            magnitude = magnitude.max(frac * term.abs());
            terms.push(term);
            j += 1;
            // bound on Σ_{i ≥ j} p^{-ni} h(β+i), weighted by (1 - p^{-n})
            let tail = bound(beta + j)? * space.pow_n(-j);
            if tail <= tol.abs * magnitude.min(1.0) || tail <= ROUNDOFF_FLOOR * magnitude {
                break;
            }
            if terms.len() >= tol.max_terms {
                return Err(Error::SeriesBudget {
                    requested: tol.abs,
                    achieved: tail * space.pow_n(-beta),
                    terms: terms.len(),
                });
            }
        }
        let inner = compensated_sum(terms.into_iter().rev());
        Ok(space.pow_n(-beta) * (frac * inner - outer))
    }

    /// `Z(t, x)` at `‖x‖ = p^β`.
    pub fn z_full(&self, t: f64, beta: i64) -> Result<f64> {
        Self::check_time(t)?;
        let kt = self.spectrum.kappa() * t;
        // The series is unchanged by adding a constant to the symbol. Near the
        // origin expm1 terms are all close to -1 and cancel, so there the plain
        // exponential is summed instead and the subtracted term is small.
        if kt * self.spectrum.a_w(beta - 1)? >= std::f64::consts::LN_2 {
            return self.sphere_series(beta, |g| Ok((-kt * self.spectrum.a_w(g)?).exp()), |_| Ok(1.0));
        }
        self.sphere_series(
            beta,
            |g| Ok((-kt * self.spectrum.a_w(g)?).exp_m1()),
            |g| Ok((kt * self.spectrum.a_w(g)?).min(1.0)),
        )
    }

    /// `∂_t Z(t, x)` at `‖x‖ = p^β`.
    pub fn dt_z(&self, t: f64, beta: i64) -> Result<f64> {
        Self::check_time(t)?;
        let kappa = self.spectrum.kappa();
        self.sphere_series(
            beta,
            |g| {
                let a = self.spectrum.a_w(g)?;
                Ok(-kappa * a * (-kappa * t * a).exp())
            },
            |g| Ok(kappa * self.spectrum.a_w(g)?),
        )
    }

    /// `Z(t, 0) = ∫ e^{-ϰ t A_w(ξ)} dξ`, the maximum of `Z(t, ·)`.
    pub fn z_origin(&self, t: f64) -> Result<f64> {
        Self::check_time(t)?;
        let space = self.space();
        let frac = space.sphere_fraction();
        let kt = self.spectrum.kappa() * t;
        let tol = self.spectrum.tolerance();
        // large ‖ξ‖: γ < 0, summed until the exponential kills the growing measure
        let mut large = Vec::new();
        let mut prev = f64::INFINITY;
        let mut g = -1i64;
        loop {
            let term = frac * space.pow_n(-g) * (-kt * self.spectrum.a_w(g)?).exp();
            large.push(term);
            if term < prev && term <= ROUNDOFF_FLOOR * large.iter().sum::<f64>().max(1.0) {
                break;
            }
            prev = term;
            g -= 1;
            if large.len() >= tol.max_terms {
                return Err(Error::SeriesBudget {
                    requested: tol.abs,
                    achieved: term,
                    terms: large.len(),
                });
            }
        }
        // ‖ξ‖ ≤ 1 contributes 1 + Σ_{γ ≥ 0} (1 - p^{-n}) p^{-nγ} expm1(-ϰ t A_w(γ))
        let small = self.outer_series(t, 0)?;
        Ok(compensated_sum(large.into_iter().rev()) + 1.0 - small)
    }

    /// `Σ_{j≥0} (1 - p^{-n}) p^{-nj} (1 - e^{-ϰ t A_w(M+j)})`.
    fn outer_series(&self, t: f64, m: i64) -> Result<f64> {
        let space = self.space();
        let frac = space.sphere_fraction();
        let kt = self.spectrum.kappa() * t;
        let tol = self.spectrum.tolerance();
        let mut terms = Vec::new();
        let mut partial = 0.0;
        let mut j = 0i64;
        loop {
            let term = frac * space.pow_n(-j) * -(-kt * self.spectrum.a_w(m + j)?).exp_m1();
            terms.push(term);
            partial += term;
            j += 1;
            let tail = space.pow_n(-j) * (kt * self.spectrum.a_w(m + j)?).min(1.0);
            if tail <= tol.abs * partial.min(1.0) || tail <= ROUNDOFF_FLOOR * partial {
                break;
            }
            if terms.len() >= tol.max_terms {
                return Err(Error::SeriesBudget {
                    requested: tol.abs,
                    achieved: tail,
                    terms: terms.len(),
                });
            }
        }
        Ok(compensated_sum(terms.into_iter().rev()))
    }

    /// `∫_{B_M} Z(t, x) dx = p^{nM} ∫_{‖ξ‖ ≤ p^{-M}} e^{-ϰ t A_w(ξ)} dξ`.
    pub fn z_center_mass(&self, t: f64, m: i64) -> Result<f64> {
        Ok(1.0 - self.z_outer_mass(t, m)?)
    }

    /// `∫_{‖x‖ > p^M} Z(t, x) dx`, computed without cancellation.
    pub fn z_outer_mass(&self, t: f64, m: i64) -> Result<f64> {
        Self::check_time(t)?;
        self.outer_series(t, m)
    }

    /// `Σ_β Z(t, p^β) · m(S_β)` over all spheres, an independent route to `∫ Z = 1`.
    ///
    /// Spheres with `β ≤ m0` are accounted for by [`Self::z_center_mass`].
    pub fn total_mass_by_spheres(&self, t: f64, m0: i64) -> Result<f64> {
        Self::check_time(t)?;
        let space = self.space();
        let frac = space.sphere_fraction();
        let kt = self.spectrum.kappa() * t;
        let tol = self.spectrum.tolerance();
        let (_, c4) = self.spectrum.symbol_envelope();
        let q = self.spectrum.params().decay_ratio();
        let mut terms = Vec::new();
        let mut beta = m0 + 1;
        loop {
            terms.push(self.z_full(t, beta)? * space.haar_sphere(beta));
            // Z(t, p^b) m(S_b) ≤ (1 - p^{-n}) ϰ t A_w(b - 1) ≤ (1 - p^{-n}) ϰ t C₄ q^{b-1}
            let tail = frac * kt * c4 * q.powf(beta as f64) / (1.0 - q);
            if tail <= tol.abs || tail <= ROUNDOFF_FLOOR {
                break;
            }
            beta += 1;
            if terms.len() >= tol.max_terms {
                return Err(Error::SeriesBudget {
                    requested: tol.abs,
                    achieved: tail,
                    terms: terms.len(),
                });
            }
        }
        Ok(self.z_center_mass(t, m0)? + compensated_sum(terms.into_iter().rev()))
    }

    /// Upper bound `2^α max(C₁, C₂) ϰt (‖x‖ + (ϰt)^{1/(α-n)})^{-α}`.
    ///
    /// With this constant the bound holds numerically whenever `p^n ≤ 9`; for
    /// larger `p^n` it fails near the origin, badly so as `α → n`.
    pub fn upper_bound(&self, t: f64, beta: i64) -> f64 {
        let params = self.spectrum.params();
        let w = params.weight();
        let alpha = w.alpha();
        let kt = params.kappa() * t;
        let norm = self.space().pow(beta);
        2f64.powf(alpha) * w.c1().max(w.c2()) * kt * (norm + kt.powf(1.0 / (alpha - params.space().n() as f64))).powf(-alpha)
    }

    /// `(Z_t * Z_s)(x)` at `‖x‖ = p^β` by the exact sphere decomposition of an
    /// ultrametric convolution of radial functions, against `Z(t + s, x)`.
    ///
    /// Splitting `y` by `‖y‖` against `‖x‖ = p^β`:
    /// `‖y‖ < p^β` sees `f(β)`; `‖y‖ > p^β` sees `f(‖y‖)`; on the sphere
    /// `‖y‖ = p^β` the difference `x - y` covers `B_{β-1}` and the part of `S_β`
    /// outside `x + B_{β-1}`.
    pub fn chapman_kolmogorov_check(&self, t: f64, s: f64, beta: i64) -> Result<ChapmanKolmogorov> {
        Self::check_time(t)?;
        Self::check_time(s)?;
        let space = self.space();
        let frac = space.sphere_fraction();
        let tol = self.spectrum.tolerance();
        let lhs = self.z_full(t + s, beta)?;

        let f_b = self.z_full(t, beta)?;
        let g_b = self.z_full(s, beta)?;
        let f_inner = self.z_center_mass(t, beta - 1)?;
        let g_inner = self.z_center_mass(s, beta - 1)?;
        let ring = space.haar_sphere(beta) - space.haar_ball(beta - 1);

        let kappa = self.spectrum.kappa();
        let (_, c4) = self.spectrum.symbol_envelope();
        let q = self.spectrum.params().decay_ratio();
        let mut outer = Vec::new();
        let mut k = beta + 1;
        loop {
            let term = self.z_full(t, k)? * self.z_full(s, k)? * space.haar_sphere(k);
            outer.push(term);
            // Z(τ, p^k) ≤ p^{-nk} ϰ τ C₄ q^{k-1}
            let next = k + 1;
            let ratio = space.pow_n(-1) * q * q;
            let tail = frac * kappa * kappa * t * s * c4 * c4 * space.pow_n(-next) * q.powf(2.0 * (next - 1) as f64)
                / (1.0 - ratio);
            if tail <= tol.abs || tail <= ROUNDOFF_FLOOR * lhs.abs() {
                break;
            }
            k = next;
            if outer.len() >= tol.max_terms {
                return Err(Error::SeriesBudget {
                    requested: tol.abs,
                    achieved: tail,
                    terms: outer.len(),
                });
            }
        }
        let rhs = compensated_sum(
            [f_b * g_inner, g_b * f_inner, f_b * g_b * ring]
                .into_iter()
                .chain(outer.into_iter().rev()),
        );
        Ok(ChapmanKolmogorov {
            lhs,
            rhs,
            residual: (lhs - rhs).abs(),
        })
    }

    /// Inverse Fourier transform of a stored radial function at `‖x‖ = p^β`.
    ///
    /// Values below the window are replaced by the limit; the envelope bounds
    /// the error this introduces, which must stay within `tol`.
    pub fn radial_inverse_fourier(&self, g: &RadialFunction, beta: i64, tol: f64) -> Result<f64> {
        radial_inverse_fourier(self.space(), g, beta, tol)
    }
}

/// Free-standing form of [`HeatKernel::radial_inverse_fourier`].
pub fn radial_inverse_fourier(space: SpaceConfig, g: &RadialFunction, beta: i64, tol: f64) -> Result<f64> {
    let n = space.n() as f64;
    let p = space.p() as f64;
    let frac = space.sphere_fraction();
    let (e_min, e_max) = g.window();
    if g.tail.constant > 0.0 && g.tail.rate <= -n {
        return Err(Error::invalid(format!(
            "radial symbol grows like p^({}·e) near zero; the sphere series diverges",
            g.tail.rate
        )));
    }
    if -beta > e_max || 1 - beta > e_max {
        return Err(Error::invalid(format!(
            "radial function window ends at p^{e_max}, evaluation at ‖x‖ = p^{beta} needs p^{}",
            1 - beta
        )));
    }
    let env = |e: i64| g.tail.constant * p.powf(g.tail.rate * e as f64);
    // error from values below the window
    let mut err = 0.0;
    let outer = match g.value(1 - beta) {
        Some(v) => v - g.limit,
        None => {
            err += env(1 - beta);
            0.0
        }
    };
    let mut terms = Vec::new();
    let mut j = 0i64;
    while -beta - j >= e_min {
        terms.push(space.pow_n(-j) * (g.value(-beta - j).expect("inside window") - g.limit));
        j += 1;
    }
    if g.tail.constant > 0.0 {
        // Σ_{j ≥ J} p^{-nj} C p^{r(-β-j)} = C p^{-rβ} p^{-(n+r)J} / (1 - p^{-(n+r)})
        let r = g.tail.rate;
        err += frac * g.tail.constant * p.powf(-r * beta as f64) * p.powf(-(n + r) * j as f64)
            / (1.0 - p.powf(-(n + r)));
    }
    let err = err * space.pow_n(-beta);
    if err > tol {
        return Err(Error::SeriesBudget {
            requested: tol,
            achieved: err,
            terms: terms.len(),
        });
    }
    let inner = compensated_sum(terms.into_iter().rev());
    Ok(space.pow_n(-beta) * (frac * inner - outer))
}


#[cfg(test)]
mod proptests {
    use super::*;
    use crate::spectral::{KernelParams, SeriesTolerance};
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn nonnegative_and_bounded(
            p in prop::sample::select(vec![2u32, 3, 5]),
            n in 1u32..=2,
            excess in 0.3f64..2.0,
            log_t in -3.0f64..2.0,
            beta in -15i64..15,
        ) {
            let params = KernelParams::power_law(p, n, n as f64 + excess, 1.0, 1.0).unwrap();
            let k = HeatKernel::new(Spectrum::new(params, SeriesTolerance::default()));
            let t = 10f64.powf(log_t);
            let z = k.z_full(t, beta).unwrap();
            prop_assert!(z >= -1e-10);
            prop_assert!(z <= k.z_origin(t).unwrap() * (1.0 + 1e-12));
            if p.pow(n) <= 9 {
                prop_assert!(z <= k.upper_bound(t, beta));
            }
        }
    }
}
