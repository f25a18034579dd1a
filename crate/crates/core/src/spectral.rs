// SPDX-License-Identifier: Apache-2.0

//! Radial weights and the spectral quantities built from them.
//!
//! Everything here reduces to the terms `t_j = p^{nj} / w(p^j)` and their
//! suffix sums `S(j) = Σ_{i ≥ j} t_i`:
//!
//! ```text
//! A_w(γ)     = (1 - p^{-n}) S(γ + 2) + t_{γ+1}        ‖z‖ = p^{-γ}
//! λ_N        = (1 - p^{-n}) S(N + 1)
//! I_{B_N}(γ) = (1 - p^{-n}) Σ_{j=γ+2}^{N} t_j + t_{γ+1}   for γ < N, else 0
//! ```
//!
//! Since `w(p^j) ≥ C₁ p^{jα}`, the terms are dominated by `p^{j(n-α)} / C₁`,
//! which gives a closed-form bound on every truncated tail.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::sync::{Arc, RwLock};

use crate::error::{Error, Result};
use crate::padic::{NormExponent, SpaceConfig};

#[derive(Clone, Debug, PartialEq)]
enum WeightKind {
    PowerLaw { c: f64 },
    Table { first_j: i64, values: Vec<f64> },
}

/// A radial weight `j ↦ w(p^j)` with growth constants `C₁ p^{jα} ≤ w ≤ C₂ p^{jα}`.
///
/// Tabulated weights are extended outside their window by the power law
/// through the nearest tabulated value.
#[derive(Clone, Debug, PartialEq)]
pub struct RadialWeight {
    p: u32,
    alpha: f64,
    c1: f64,
    c2: f64,
    kind: WeightKind,
}

impl RadialWeight {
    /// `w(p^j) = c · p^{jα}`.
    pub fn power_law(p: u32, c: f64, alpha: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::invalid(format!("weight_c: must be positive, got {c}")));
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::invalid(format!("alpha: must be positive, got {alpha}")));
        }
        Ok(RadialWeight {
            p,
            alpha,
            c1: c,
            c2: c,
            kind: WeightKind::PowerLaw { c },
        })
    }

    /// Tabulated `w(p^j)` for `j = first_j, first_j + 1, ...`.
    pub fn from_table(p: u32, first_j: i64, values: Vec<f64>, alpha: f64, c1: f64, c2: f64) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("weight_table: no rows"));
        }
        if !(alpha > 0.0 && c1 > 0.0 && c2 >= c1) {
            return Err(Error::invalid(format!(
                "weight_table: need alpha > 0 and 0 < c1 <= c2 (alpha={alpha}, c1={c1}, c2={c2})"
            )));
        }
        for (k, pair) in values.windows(2).enumerate() {
            if !(pair[1] > pair[0]) {
                return Err(Error::invalid(format!(
                    "weight_table: w must be strictly increasing (j = {})",
                    first_j + k as i64 + 1
                )));
            }
        }
        for (k, &w) in values.iter().enumerate() {
            let j = first_j + k as i64;
            let envelope = (p as f64).powf(j as f64 * alpha);
            // relative slack for values printed with finite precision
            let slack = 1e-12;
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::invalid(format!("weight_table: w(p^{j}) = {w} is not positive")));
            }
            if w < c1 * envelope * (1.0 - slack) || w > c2 * envelope * (1.0 + slack) {
                return Err(Error::invalid(format!(
                    "weight_table: w(p^{j}) = {w} violates c1 p^(j alpha) <= w <= c2 p^(j alpha)"
                )));
            }
        }
        Ok(RadialWeight {
            p,
            alpha,
            c1,
            c2,
            kind: WeightKind::Table { first_j, values },
        })
    }

    /// Parse a weight table: rows `j,w`, metadata lines `# alpha=`, `# c1=`, `# c2=`.
    pub fn from_csv_str(p: u32, text: &str) -> Result<Self> {
        let (mut alpha, mut c1, mut c2) = (None, None, None);
        let mut rows: Vec<(i64, f64)> = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(meta) = line.strip_prefix('#') {
                if let Some((key, value)) = meta.split_once('=') {
                    let v: f64 = value
                        .trim()
                        .parse()
                        .map_err(|_| Error::Parse(format!("line {}: bad number {value:?}", lineno + 1)))?;
                    match key.trim() {
                        "alpha" => alpha = Some(v),
                        "c1" => c1 = Some(v),
                        "c2" => c2 = Some(v),
                        _ => {}
                    }
                }
                continue;
            }
            if line.eq_ignore_ascii_case("j,w") {
                continue;
            }
            let (j, w) = line
                .split_once(',')
                .ok_or_else(|| Error::Parse(format!("line {}: expected `j,w`", lineno + 1)))?;
            let j: i64 = j
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("line {}: bad j {j:?}", lineno + 1)))?;
            let w: f64 = w
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("line {}: bad w {w:?}", lineno + 1)))?;
            rows.push((j, w));
        }
        let missing = |name: &str| Error::Parse(format!("weight table is missing `# {name}=`"));
        let alpha = alpha.ok_or_else(|| missing("alpha"))?;
        let c1 = c1.ok_or_else(|| missing("c1"))?;
        let c2 = c2.ok_or_else(|| missing("c2"))?;
        rows.sort_by_key(|r| r.0);
        let first_j = rows.first().map(|r| r.0).ok_or_else(|| Error::Parse("weight table has no rows".into()))?;
        for (k, &(j, _)) in rows.iter().enumerate() {
            if j != first_j + k as i64 {
                return Err(Error::Parse(format!("weight table rows must be consecutive in j (gap at {j})")));
            }
        }
        Self::from_table(p, first_j, rows.into_iter().map(|r| r.1).collect(), alpha, c1, c2)
    }

    pub fn from_csv_path(p: u32, path: impl AsRef<Path>) -> Result<Self> {
        Self::from_csv_str(p, &std::fs::read_to_string(path)?)
    }

    pub fn p(&self) -> u32 {
        self.p
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn c1(&self) -> f64 {
        self.c1
    }

    pub fn c2(&self) -> f64 {
        self.c2
    }

    /// The power-law constant `c` when `w(p^j) = c p^{jα}` exactly.
    pub fn power_law_constant(&self) -> Option<f64> {
        match self.kind {
            WeightKind::PowerLaw { c } => Some(c),
            WeightKind::Table { .. } => None,
        }
    }

    /// Tabulated window `[j_min, j_max]`, if any.
    pub fn window(&self) -> Option<(i64, i64)> {
        match &self.kind {
            WeightKind::PowerLaw { .. } => None,
            WeightKind::Table { first_j, values } => Some((*first_j, first_j + values.len() as i64 - 1)),
        }
    }

    /// True when `w(p^j)` comes from the envelope extension of a table.
    pub fn is_extended(&self, j: i64) -> bool {
        self.window().is_some_and(|(lo, hi)| j < lo || j > hi)
    }

    /// `w(p^j)`.
    pub fn value(&self, j: i64) -> f64 {
        let p = self.p as f64;
        match &self.kind {
            WeightKind::PowerLaw { c } => c * p.powf(j as f64 * self.alpha),
            WeightKind::Table { first_j, values } => {
                let last = first_j + values.len() as i64 - 1;
                if j < *first_j {
                    values[0] * p.powf((j - first_j) as f64 * self.alpha)
                } else if j > last {
                    values[values.len() - 1] * p.powf((j - last) as f64 * self.alpha)
                } else {
                    values[(j - first_j) as usize]
                }
            }
        }
    }

    /// `p^{nj} / w(p^j)` as one power of `p^{n-α}`, so neither factor
    /// overflows when the decay is slow and `j` large.
    pub(crate) fn density(&self, n: u32, j: i64) -> f64 {
        let p = self.p as f64;
        let n = n as f64;
        let excess = n - self.alpha;
        match &self.kind {
            WeightKind::PowerLaw { c } => p.powf(j as f64 * excess) / c,
            WeightKind::Table { first_j, values } => {
                let last = first_j + values.len() as i64 - 1;
                let (anchor, v) = if j < *first_j {
                    (*first_j, values[0])
                } else if j > last {
                    (last, values[values.len() - 1])
                } else {
                    (j, values[(j - first_j) as usize])
                };
                p.powf(n * anchor as f64) / v * p.powf((j - anchor) as f64 * excess)
            }
        }
    }
}

/// Jump intensity, weight and space.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelParams {
    kappa: f64,
    weight: RadialWeight,
    space: SpaceConfig,
}

impl KernelParams {
    pub fn new(space: SpaceConfig, weight: RadialWeight, kappa: f64) -> Result<Self> {
        if !(kappa > 0.0 && kappa.is_finite()) {
            return Err(Error::invalid(format!("kappa: must be positive, got {kappa}")));
        }
        if weight.p != space.p() {
            return Err(Error::Mismatch(format!(
                "weight built for p = {} used with p = {}",
                weight.p,
                space.p()
            )));
        }
        if weight.alpha <= space.n() as f64 {
            return Err(Error::invalid(format!(
                "alpha: must exceed the dimension n = {} (got {})",
                space.n(),
                weight.alpha
            )));
        }
        Ok(KernelParams { kappa, weight, space })
    }

    /// Power-law weight `w(p^j) = c p^{jα}`.
    pub fn power_law(p: u32, n: u32, alpha: f64, c: f64, kappa: f64) -> Result<Self> {
        let space = SpaceConfig::new(p, n)?;
        Self::new(space, RadialWeight::power_law(p, c, alpha)?, kappa)
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn weight(&self) -> &RadialWeight {
        &self.weight
    }

    pub fn space(&self) -> SpaceConfig {
        self.space
    }

    /// `p^{n-α} < 1`, the ratio of the geometric majorant.
    pub fn decay_ratio(&self) -> f64 {
        (self.space.p() as f64).powf(self.space.n() as f64 - self.weight.alpha)
    }
}

/// Absolute tolerance and term budget for truncated series.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SeriesTolerance {
    pub abs: f64,
    pub max_terms: usize,
}

impl Default for SeriesTolerance {
    fn default() -> Self {
        SeriesTolerance {
            abs: 1e-16,
            max_terms: 20_000,
        }
    }
}

impl SeriesTolerance {
    pub fn new(abs: f64) -> Result<Self> {
        if !(abs > 0.0) {
            return Err(Error::invalid(format!("tolerance: must be positive, got {abs}")));
        }
        Ok(SeriesTolerance {
            abs,
            ..Default::default()
        })
    }
}

/// Relative level below which further terms cannot change a double.
pub(crate) const ROUNDOFF_FLOOR: f64 = 1.0 / (1u64 << 56) as f64;

/// Neumaier-compensated sum of `terms` taken in the given order.
pub(crate) fn compensated_sum<I: IntoIterator<Item = f64>>(terms: I) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for x in terms {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Spectral engine for one [`KernelParams`]: `A_w`, `λ_N`, `I_{B_N}`.
///
/// Suffix sums are memoized; clones share the cache.
#[derive(Clone)]
pub struct Spectrum {
    params: KernelParams,
    tol: SeriesTolerance,
    suffix_cache: Arc<RwLock<HashMap<i64, f64>>>,
}

impl fmt::Debug for Spectrum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Spectrum")
            .field("params", &self.params)
            .field("tol", &self.tol)
            .finish_non_exhaustive()
    }
}

impl Spectrum {
    pub fn new(params: KernelParams, tol: SeriesTolerance) -> Self {
        Spectrum {
            params,
            tol,
            suffix_cache: Arc::new(RwLock::new(HashMap::new())),
        }
    }

    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    pub fn space(&self) -> SpaceConfig {
        self.params.space
    }

    pub fn kappa(&self) -> f64 {
        self.params.kappa
    }

    pub fn tolerance(&self) -> SeriesTolerance {
        self.tol
    }

    /// `t_j = p^{nj} / w(p^j)`.
    pub fn term(&self, j: i64) -> f64 {
        self.params.weight.density(self.params.space.n(), j)
    }

    /// Closed-form bound on `Σ_{i ≥ j} t_i` from the `C₁` envelope.
    pub fn suffix_majorant(&self, j: i64) -> f64 {
        let q = self.params.decay_ratio();
        q.powf(j as f64) / (self.params.weight.c1 * (1.0 - q))
    }

    /// `S(j) = Σ_{i ≥ j} t_i`, summed smallest term first.
    pub fn suffix(&self, j: i64) -> Result<f64> {
        if let Some(v) = self.suffix_cache.read().expect("cache poisoned").get(&j) {
            return Ok(*v);
        }
        let mut terms = Vec::new();
        let mut partial = 0.0;
        let mut i = j;
        loop {
            let t = self.term(i);
            terms.push(t);
            partial += t;
            i += 1;
            let tail = self.suffix_majorant(i);
            // absolute below one, relative above; tiny suffixes keep full relative accuracy
            if tail <= self.tol.abs * partial.min(1.0) || tail <= ROUNDOFF_FLOOR * partial {
                break;
            }
            if terms.len() >= self.tol.max_terms {
                return Err(Error::SeriesBudget {
                    requested: self.tol.abs,
                    achieved: tail,
                    terms: terms.len(),
                });
            }
        }
        let value = compensated_sum(terms.into_iter().rev());
        self.suffix_cache.write().expect("cache poisoned").insert(j, value);
        Ok(value)
    }

    /// `A_w(z)` for `‖z‖ = p^{-γ}`.
    pub fn a_w(&self, gamma: i64) -> Result<f64> {
        Ok(self.params.space.sphere_fraction() * self.suffix(gamma + 2)? + self.term(gamma + 1))
    }

    /// `A_w(z)` for a norm exponent of `z` (`‖z‖ = p^k`, so `γ = -k`); zero at `z = 0`.
    pub fn a_w_at(&self, z_norm: NormExponent) -> Result<f64> {
        match z_norm {
            NormExponent::Finite(k) => self.a_w(-k),
            NormExponent::BelowResolution => Ok(0.0),
        }
    }

    /// `λ_N = (1 - p^{-n}) Σ_{j > N} p^{nj} / w(p^j)`.
    pub fn lambda(&self, ball_exp: i64) -> Result<f64> {
        Ok(self.params.space.sphere_fraction() * self.suffix(ball_exp + 1)?)
    }

    /// `I_{B_N}(z) = ∫_{B_N} (1 - χ(z·x)) / w(‖x‖) d^n x` for `‖z‖ = p^{-γ}`.
    ///
    /// Evaluated as the finite sum it reduces to, which equals `A_w(z) - λ_N`
    /// when `‖z‖ > p^{-N}` and vanishes otherwise.
    pub fn i_ball(&self, gamma: i64, ball_exp: i64) -> f64 {
        if gamma >= ball_exp {
            return 0.0;
        }
        let frac = self.params.space.sphere_fraction();
        let inner = compensated_sum((gamma + 2..=ball_exp).rev().map(|j| self.term(j)));
        frac * inner + self.term(gamma + 1)
    }

    pub fn i_ball_at(&self, z_norm: NormExponent, ball_exp: i64) -> f64 {
        match z_norm {
            NormExponent::Finite(k) => self.i_ball(-k, ball_exp),
            NormExponent::BelowResolution => 0.0,
        }
    }

    /// Closed form of `A_w` for power-law weights.
    pub fn a_w_closed_form(&self, gamma: i64) -> Option<f64> {
        let c = self.params.weight.power_law_constant()?;
        let q = self.params.decay_ratio();
        let frac = self.params.space.sphere_fraction();
        Some((frac * q.powf((gamma + 2) as f64) / (1.0 - q) + q.powf((gamma + 1) as f64)) / c)
    }

    /// Closed form of `λ_N` for power-law weights.
    pub fn lambda_closed_form(&self, ball_exp: i64) -> Option<f64> {
        let c = self.params.weight.power_law_constant()?;
        let q = self.params.decay_ratio();
        Some(self.params.space.sphere_fraction() * q.powf((ball_exp + 1) as f64) / (c * (1.0 - q)))
    }

    /// Constants `(C₃, C₄)` with `C₃ ‖z‖^{α-n} ≤ A_w(z) ≤ C₄ ‖z‖^{α-n}`
    /// implied by the weight's growth constants.
    pub fn symbol_envelope(&self) -> (f64, f64) {
        let q = self.params.decay_ratio();
        let shape = self.params.space.sphere_fraction() * q * q / (1.0 - q) + q;
        (shape / self.params.weight.c2, shape / self.params.weight.c1)
    }

    /// Empirical symbol constants over `‖z‖ = p^k`, `k ∈ [k_min, k_max]`.
    pub fn verify_symbol_bounds(&self, k_min: i64, k_max: i64) -> Result<SymbolBoundsReport> {
        if k_min > k_max {
            return Err(Error::invalid("empty norm range"));
        }
        let exponent = self.params.weight.alpha - self.params.space.n() as f64;
        let p = self.params.space.p() as f64;
        let (mut c3, mut c4) = (f64::INFINITY, 0.0f64);
        // A_w sums the weight up to infinity, so a table is always extended
        let extended = self.params.weight.window().is_some();
        for k in k_min..=k_max {
            let ratio = self.a_w(-k)? / p.powf(k as f64 * exponent);
            if !(ratio.is_finite() && ratio > 0.0) {
                return Err(Error::invalid(format!("symbol ratio at ‖z‖ = p^{k} is {ratio}")));
            }
            c3 = c3.min(ratio);
            c4 = c4.max(ratio);
        }
        let (env_lo, env_hi) = self.symbol_envelope();
        let slack = 1e-12;
        let within_envelope = c3 >= env_lo * (1.0 - slack) && c4 <= env_hi * (1.0 + slack);
        if !within_envelope {
            return Err(Error::invalid(format!(
                "symbol constants [{c3}, {c4}] leave the envelope [{env_lo}, {env_hi}]; the weight table is inconsistent"
            )));
        }
        Ok(SymbolBoundsReport {
            k_min,
            k_max,
            c3,
            c4,
            envelope: (env_lo, env_hi),
            extended,
        })
    }
}

/// Output of [`Spectrum::verify_symbol_bounds`].
#[derive(Clone, Debug, PartialEq)]
pub struct SymbolBoundsReport {
    pub k_min: i64,
    pub k_max: i64,
    pub c3: f64,
    pub c4: f64,
    pub envelope: (f64, f64),
    /// Some evaluated weight came from the envelope extension of a table.
    pub extended: bool,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference() -> Spectrum {
        Spectrum::new(KernelParams::power_law(2, 1, 2.0, 1.0, 1.0).unwrap(), SeriesTolerance::default())
    }

    #[test]
    fn power_law_examples() {
        let s = reference();
        assert!((s.a_w(-1).unwrap() - 1.5).abs() < 1e-15);
        assert!((s.a_w(0).unwrap() - 0.75).abs() < 1e-15);
        assert!((s.lambda(0).unwrap() - 0.5).abs() < 1e-15);
        assert!((s.i_ball(-1, 0) - 1.0).abs() < 1e-15);
        assert_eq!(s.i_ball(0, 0), 0.0);
        assert_eq!(s.i_ball(3, 0), 0.0);
    }

    #[test]
    fn scaling_ratio_is_exact_for_power_law() {
        let s = Spectrum::new(KernelParams::power_law(3, 2, 4.5, 0.7, 1.0).unwrap(), SeriesTolerance::default());
        let expected = 3f64.powf(4.5 - 2.0);
        for g in -6..6 {
            let r = s.a_w(g - 1).unwrap() / s.a_w(g).unwrap();
            assert!((r / expected - 1.0).abs() < 1e-13, "gamma {g}: {r}");
        }
    }

    #[test]
    fn lambda_telescopes_and_decreases() {
        let s = reference();
        for n in -5..8 {
            let diff = s.lambda(n).unwrap() - s.lambda(n + 1).unwrap();
            let expected = 0.5 * 2f64.powi(n as i32 + 1) / s.params().weight().value(n + 1);
            assert!((diff - expected).abs() < 1e-15);
            assert!(diff > 0.0);
        }
        assert!(s.lambda(60).unwrap() < 1e-17);
    }

    #[test]
    fn i_ball_matches_difference() {
        let s = Spectrum::new(KernelParams::power_law(3, 1, 2.5, 1.3, 2.0).unwrap(), SeriesTolerance::default());
        for big_n in -2..3 {
            for g in -6..big_n {
                let diff = s.a_w(g).unwrap() - s.lambda(big_n).unwrap();
                assert!((s.i_ball(g, big_n) - diff).abs() <= 1e-13 * diff.abs().max(1.0));
            }
        }
        // I_{B_N} tends to A_w as N grows
        let a = s.a_w(-1).unwrap();
        assert!((s.i_ball(-1, 60) - a).abs() < 1e-14);
    }

    #[test]
    fn closed_forms_agree_with_series() {
        let s = Spectrum::new(KernelParams::power_law(2, 2, 4.0, 1.0, 1.0).unwrap(), SeriesTolerance::default());
        for g in -10..10 {
            let closed = s.a_w_closed_form(g).unwrap();
            assert!((s.a_w(g).unwrap() - closed).abs() <= 1e-12 * closed);
            let lc = s.lambda_closed_form(g).unwrap();
            assert!((s.lambda(g).unwrap() - lc).abs() <= 1e-12 * lc);
        }
    }

    #[test]
    fn a_w_strictly_decreasing_in_gamma() {
        let s = reference();
        for g in -20..20 {
            assert!(s.a_w(g).unwrap() > s.a_w(g + 1).unwrap());
        }
    }

    #[test]
    fn symbol_bounds_for_power_law_are_tight() {
        let s = reference();
        let report = s.verify_symbol_bounds(-8, 8).unwrap();
        assert!((report.c3 / report.c4 - 1.0).abs() < 1e-13);
        assert!(!report.extended);
    }

    #[test]
    fn table_weight_parses_and_extends() {
        let text = "# alpha=2\n# c1=0.5\n# c2=2\nj,w\n-1,0.3\n0,1.0\n1,4.5\n";
        let w = RadialWeight::from_csv_str(2, text).unwrap();
        assert_eq!(w.window(), Some((-1, 1)));
        assert_eq!(w.value(0), 1.0);
        assert!((w.value(2) - 18.0).abs() < 1e-12);
        assert!((w.value(-2) - 0.075).abs() < 1e-15);
        assert!(w.is_extended(2) && !w.is_extended(1));
        let params = KernelParams::new(SpaceConfig::new(2, 1).unwrap(), w, 1.0).unwrap();
        let report = Spectrum::new(params, SeriesTolerance::default()).verify_symbol_bounds(-3, 3).unwrap();
        assert!(report.extended);
        assert!(report.c3 <= report.c4);
    }

    #[test]
    fn table_weight_rejects_violations() {
        assert!(RadialWeight::from_table(2, 0, vec![1.0, 0.9], 2.0, 0.1, 10.0).is_err());
        assert!(RadialWeight::from_table(2, 0, vec![1.0, 40.0], 2.0, 0.5, 2.0).is_err());
        assert!(RadialWeight::from_csv_str(2, "j,w\n0,1\n").is_err());
        assert!(KernelParams::new(SpaceConfig::new(2, 2).unwrap(), RadialWeight::power_law(2, 1.0, 2.0).unwrap(), 1.0).is_err());
    }

    #[test]
    fn series_budget_is_reported() {
        let params = KernelParams::power_law(2, 1, 1.0 + 1e-9, 1.0, 1.0).unwrap();
        let s = Spectrum::new(params, SeriesTolerance { abs: 1e-16, max_terms: 50 });
        assert!(matches!(s.a_w(0), Err(Error::SeriesBudget { .. })));
    }
}
