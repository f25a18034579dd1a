// SPDX-License-Identifier: Apache-2.0

//! The semigroup of the process restricted to `B_N`.
//!
//! Deleting all jumps of norm above `p^N` leaves a process that stays in
//! `B_N`. Its transition density is `Z_N(t, x) = e^{ϰλ_N t} Z(t, x) + c(t)`.
//! On the cells of a [`Grid`] the process is an exact finite Markov chain,
//! because jumps of norm at most `p^{-K}` do not change the cell.
//!
//! The chain generator `G` has off-diagonal entries `ϰ p^{-nK} / w(p^d)` for
//! cells at distance `p^d`. Its eigenvectors are the characters `χ(z·x)` with
//! `‖z‖ ≤ p^K`, with eigenvalues `ϰ(λ_N - A_w(z))` (zero for `‖z‖ ≤ p^{-N}`).

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::expm::expm;
use crate::kernel::HeatKernel;
use crate::padic::{character, CellIndex, Grid, NormExponent, PAdicPoint, SpaceConfig};
use crate::spectral::{compensated_sum, Spectrum, ROUNDOFF_FLOOR};

/// Default cap on the number of cells.
pub const DEFAULT_CELL_BUDGET: u64 = 65536;

/// Tolerance for the agreement of the two transition-matrix methods.
pub const METHOD_AGREEMENT_TOL: f64 = 1e-9;

/// The ball `B_N` at resolution `p^{-K}` with its kernel parameters.
#[derive(Clone, Debug)]
pub struct BallConfig {
    spectrum: Spectrum,
    grid: Grid,
}

impl BallConfig {
    pub fn new(spectrum: Spectrum, ball_exp: i64, resolution: i64) -> Result<Self> {
        Self::with_budget(spectrum, ball_exp, resolution, DEFAULT_CELL_BUDGET)
    }

    pub fn with_budget(spectrum: Spectrum, ball_exp: i64, resolution: i64, budget: u64) -> Result<Self> {
        let space = spectrum.space();
        if resolution < 1 - ball_exp {
            return Err(Error::invalid(format!(
                "resolution_K: need K >= -N + 1 (N = {ball_exp}, K = {resolution})"
            )));
        }
        let block = (space.p() as u128).pow(space.n());
        let mut cells: u128 = 1;
        for _ in 0..(ball_exp + resolution) {
            cells = cells.saturating_mul(block);
        }
        if cells > budget as u128 {
            return Err(Error::Budget {
                cells,
                limit: budget as u128,
            });
        }
        let grid = Grid::new(space, ball_exp, resolution)?;
        Ok(BallConfig { spectrum, grid })
    }

    pub fn spectrum(&self) -> &Spectrum {
        &self.spectrum
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn space(&self) -> SpaceConfig {
        self.grid.space()
    }

    pub fn ball_exp(&self) -> i64 {
        self.grid.ball_exp()
    }

    pub fn resolution(&self) -> i64 {
        self.grid.resolution()
    }

    pub fn cell_count(&self) -> usize {
        self.grid.cell_count() as usize
    }

    pub fn kappa(&self) -> f64 {
        self.spectrum.kappa()
    }

    /// `λ_N` for this ball.
    pub fn lambda(&self) -> Result<f64> {
        self.spectrum.lambda(self.ball_exp())
    }

    /// Grid carrying the frequencies `‖z‖ ≤ p^K` that are resolved on cells,
    /// known modulo `‖z‖ ≤ p^{-N}` (where the character is trivial on `B_N`).
    pub fn dual_grid(&self) -> Result<Grid> {
        Grid::new(self.space(), self.resolution(), self.ball_exp())
    }

    /// Eigenvalue `ϰ(λ_N - A_w(z))` for `‖z‖ = p^k`, `-N < k ≤ K`.
    pub fn level_eigenvalue(&self, k: i64) -> Result<f64> {
        Ok(self.kappa() * (self.lambda()? - self.spectrum.a_w(-k)?))
    }

    /// Smallest nonzero decay rate, `ϰ(A_w(p^{-N+1}) - λ_N)`.
    pub fn spectral_gap(&self) -> Result<f64> {
        Ok(-self.level_eigenvalue(1 - self.ball_exp())?)
    }

    /// Sum of `(1 - p^{-n}) p^{-nγ} f(γ)` over `γ ≥ N`, where
    /// `|f(γ)| ≤ bound(G)` for all `γ ≥ G`.
    fn ball_dual_series(
        &self,
        f: impl Fn(i64) -> Result<f64>,
        bound: impl Fn(i64) -> Result<f64>,
    ) -> Result<f64> {
        let space = self.space();
        let frac = space.sphere_fraction();
        let tol = self.spectrum.tolerance();
        let big_n = self.ball_exp();
        let mut terms = Vec::new();
        let mut magnitude: f64 = 0.0;
        let mut g = big_n;
        loop {
            let term = frac * space.pow_n(-(g - big_n)) * f(g)?;
            magnitude = magnitude.max(term.abs());
            terms.push(term);
            g += 1;
            let tail = space.pow_n(-(g - big_n)) * bound(g)?;
            if tail <= tol.abs * magnitude.min(1.0) || tail <= ROUNDOFF_FLOOR * magnitude {
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
        Ok(space.pow_n(-big_n) * compensated_sum(terms.into_iter().rev()))
    }

    /// `c(t) = p^{-nN} - e^{ϰλ_N t} ∫_{B_N} Z(t, x) dx · p^{-nN}`, evaluated as
    /// `-∫_{‖ξ‖ ≤ p^{-N}} expm1(ϰt(λ_N - A_w(ξ))) dξ`.
    pub fn c_t(&self, t: f64) -> Result<f64> {
        check_nonnegative_time(t)?;
        let kt = self.kappa() * t;
        let lambda = self.lambda()?;
        self.ball_dual_series(
            |g| Ok(-(kt * (lambda - self.spectrum.a_w(g)?)).exp_m1()),
            |g| {
                let low = (kt * (lambda - self.spectrum.a_w(g)?)).exp_m1().abs();
                Ok(low.max((kt * lambda).exp_m1().abs()))
            },
        )
    }

    /// `c′(t) = ϰ ∫_{‖ξ‖ ≤ p^{-N}} e^{ϰt(λ_N - A_w(ξ))} (A_w(ξ) - λ_N) dξ`.
    pub fn c_prime(&self, t: f64) -> Result<f64> {
        check_nonnegative_time(t)?;
        let kappa = self.kappa();
        let lambda = self.lambda()?;
        self.ball_dual_series(
            |g| {
                let a = self.spectrum.a_w(g)?;
                Ok(kappa * (a - lambda) * (kappa * t * (lambda - a)).exp())
            },
            |g| {
                let a = self.spectrum.a_w(g)?;
                Ok(kappa * lambda.max((a - lambda).abs()) * (kappa * t * lambda).exp())
            },
        )
    }

    /// `Z_N(t, x) = e^{ϰλ_N t} Z(t, x) + c(t)` at `‖x‖ = p^β ≤ p^N`.
    pub fn z_ball(&self, t: f64, beta: i64) -> Result<f64> {
        if beta > self.ball_exp() {
            return Err(Error::invalid(format!(
                "beta: need p^beta <= p^N (beta = {beta}, N = {})",
                self.ball_exp()
            )));
        }
        let kernel = HeatKernel::new(self.spectrum.clone());
        let growth = (self.kappa() * self.lambda()? * t).exp();
        Ok(growth * kernel.z_full(t, beta)? + self.c_t(t)?)
    }

    /// `∫_{B_M} Z_N(t, x) dx` for `M ≤ N`.
    pub fn z_ball_center_mass(&self, t: f64, m: i64) -> Result<f64> {
        if m > self.ball_exp() {
            return Err(Error::invalid(format!("M: need M <= N (M = {m}, N = {})", self.ball_exp())));
        }
        let kernel = HeatKernel::new(self.spectrum.clone());
        let growth = (self.kappa() * self.lambda()? * t).exp();
        Ok(growth * kernel.z_center_mass(t, m)? + self.c_t(t)? * self.space().haar_ball(m))
    }

    /// Transition probabilities between cells as a function of their distance,
    /// from the series for `Z_N`: index `0` is the self-transition and index
    /// `d + K` (for `-K < d ≤ N`) the probability of one given cell at
    /// distance `p^d`.
    pub fn transition_profile_series(&self, t: f64) -> Result<Vec<f64>> {
        check_nonnegative_time(t)?;
        let levels = (self.ball_exp() + self.resolution()) as usize;
        if t == 0.0 {
            let mut out = vec![0.0; levels + 1];
            out[0] = 1.0;
            return Ok(out);
        }
        let measure = self.grid.cell_measure();
        let mut out = Vec::with_capacity(levels + 1);
        out.push(self.z_ball_center_mass(t, -self.resolution())?);
        for d in (1 - self.resolution())..=self.ball_exp() {
            out.push(measure * self.z_ball(t, d)?);
        }
        Ok(out)
    }

    /// The same profile from the eigen-expansion:
    /// `p^{-nK} [p^{-nN} + Σ_{-N<k≤K} e^{μ_k t} ∫_{‖ξ‖ = p^k} χ(-y·ξ) dξ]`.
    pub fn transition_profile_spectral(&self, t: f64) -> Result<Vec<f64>> {
        check_nonnegative_time(t)?;
        let space = self.space();
        let (big_n, big_k) = (self.ball_exp(), self.resolution());
        let modes: Vec<(i64, f64)> = ((1 - big_n)..=big_k)
            .map(|k| Ok((k, (self.level_eigenvalue(k)? * t).exp())))
            .collect::<Result<_>>()?;
        let distances =
            std::iter::once(NormExponent::BelowResolution).chain(((1 - big_k)..=big_n).map(NormExponent::Finite));
        Ok(distances
            .map(|d| {
                let sum = compensated_sum(
                    std::iter::once(space.pow_n(-big_n))
                        .chain(modes.iter().map(|&(k, e)| e * space.character_sphere_integral(k, d))),
                );
                self.grid.cell_measure() * sum
            })
            .collect())
    }

    /// Spectrum of the generator.
    pub fn spectral_decomposition(&self) -> Result<SpectralDecomposition> {
        let space = self.space();
        let block = (space.p() as u64).pow(space.n());
        let mut levels = vec![SpectralLevel {
            norm: NormExponent::BelowResolution,
            eigenvalue: 0.0,
            multiplicity: 1,
        }];
        for k in (1 - self.ball_exp())..=self.resolution() {
            levels.push(SpectralLevel {
                norm: NormExponent::Finite(k),
                eigenvalue: self.level_eigenvalue(k)?,
                multiplicity: (block - 1) * block.pow((k + self.ball_exp() - 1) as u32),
            });
        }
        Ok(SpectralDecomposition { levels })
    }

    pub fn generator(&self) -> Result<GeneratorMatrix> {
        GeneratorMatrix::assemble(self)
    }

    /// Transition matrix `exp(tG)`.
    pub fn transition_matrix(&self, t: f64, method: TransitionMethod) -> Result<DMatrix<f64>> {
        check_nonnegative_time(t)?;
        match method {
            TransitionMethod::Spectral => {
                let profile = self.transition_profile_spectral(t)?;
                Ok(self.matrix_from_profile(&profile))
            }
            TransitionMethod::Squaring => {
                let g = self.generator()?.dense();
                Ok(expm(&(g * t)))
            }
        }
    }

    /// Both methods, returning the spectral one after checking agreement.
    pub fn transition_matrix_checked(&self, t: f64) -> Result<DMatrix<f64>> {
        let spectral = self.transition_matrix(t, TransitionMethod::Spectral)?;
        let squaring = self.transition_matrix(t, TransitionMethod::Squaring)?;
        let diff = (&spectral - &squaring).amax();
        if diff > METHOD_AGREEMENT_TOL || !diff.is_finite() {
            return Err(Error::Disagreement {
                what: format!("transition matrix at t = {t} (spectral vs squaring)"),
                diff,
                tol: METHOD_AGREEMENT_TOL,
            });
        }
        Ok(spectral)
    }

    /// Dense matrix whose entry `(a, b)` is `profile[distance index of (a, b)]`.
    pub fn matrix_from_profile(&self, profile: &[f64]) -> DMatrix<f64> {
        let m = self.cell_count();
        let k = self.resolution();
        DMatrix::from_fn(m, m, |a, b| {
            match self.grid.cell_distance(CellIndex(a as u64), CellIndex(b as u64)) {
                NormExponent::BelowResolution => profile[0],
                NormExponent::Finite(d) => profile[(d + k) as usize],
            }
        })
    }

    /// Row of the transition matrix from cell `a`, via the spectral profile.
    pub fn transition_row(&self, t: f64, from: CellIndex) -> Result<Vec<f64>> {
        let profile = self.transition_profile_spectral(t)?;
        let k = self.resolution();
        Ok(self
            .grid
            .iter_cells()
            .map(|b| match self.grid.cell_distance(from, b) {
                NormExponent::BelowResolution => profile[0],
                NormExponent::Finite(d) => profile[(d + k) as usize],
            })
            .collect())
    }

    /// `x ↦ χ(z·x)` on cell representatives; requires `z` on [`Self::dual_grid`].
    pub fn character_function(&self, z: &PAdicPoint) -> Result<Vec<Complex64>> {
        if *z.grid() != self.dual_grid()? {
            return Err(Error::Mismatch("frequency must live on the dual grid of the ball".into()));
        }
        self.grid
            .iter_cells()
            .map(|c| character(z, &self.grid.point(c)?))
            .collect()
    }
}

fn check_nonnegative_time(t: f64) -> Result<()> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::invalid(format!("t: must be nonnegative, got {t}")));
    }
    Ok(())
}

/// Which computation backs [`BallConfig::transition_matrix`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TransitionMethod {
    /// Closed-form eigen-expansion over characters.
    Spectral,
    /// Dense `exp(tG)` by scaling and squaring.
    Squaring,
}

/// A real function on the cells of a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction {
    grid: Grid,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() as u64 != grid.cell_count() {
            return Err(Error::Mismatch(format!(
                "grid function has {} values, grid has {} cells",
                values.len(),
                grid.cell_count()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("grid function value at cell {i} is not finite")));
        }
        Ok(GridFunction { grid, values })
    }

    pub fn constant(grid: Grid, value: f64) -> Self {
        GridFunction {
            grid,
            values: vec![value; grid.cell_count() as usize],
        }
    }

    pub fn indicator(grid: Grid, cell: CellIndex) -> Self {
        let mut values = vec![0.0; grid.cell_count() as usize];
        values[cell.0 as usize] = 1.0;
        GridFunction { grid, values }
    }

    pub fn from_fn(grid: Grid, f: impl Fn(CellIndex) -> f64) -> Result<Self> {
        Self::new(grid, grid.iter_cells().map(f).collect())
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// `∫ u = p^{-nK} Σ u_c`.
    pub fn mass(&self) -> f64 {
        self.grid.cell_measure() * compensated_sum(self.values.iter().copied())
    }

    pub fn l1_norm(&self) -> f64 {
        self.grid.cell_measure() * compensated_sum(self.values.iter().map(|v| v.abs()))
    }

    pub fn linf_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn l1_distance(&self, other: &GridFunction) -> Result<f64> {
        if self.grid != other.grid {
            return Err(Error::Mismatch("grid functions on different grids".into()));
        }
        Ok(self.grid.cell_measure()
            * compensated_sum(self.values.iter().zip(&other.values).map(|(a, b)| (a - b).abs())))
    }
}

/// One eigenvalue level of the generator.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpectralLevel {
    /// Norm of the frequencies in this level; below resolution for the constant mode.
    pub norm: NormExponent,
    pub eigenvalue: f64,
    pub multiplicity: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpectralDecomposition {
    pub levels: Vec<SpectralLevel>,
}

impl SpectralDecomposition {
    pub fn total_multiplicity(&self) -> u64 {
        self.levels.iter().map(|l| l.multiplicity).sum()
    }

    /// All eigenvalues with multiplicity, ascending.
    pub fn sorted_eigenvalues(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self
            .levels
            .iter()
            .flat_map(|l| std::iter::repeat_n(l.eigenvalue, l.multiplicity as usize))
            .collect();
        out.sort_by(f64::total_cmp);
        out
    }
}

/// The chain generator, stored as one jump rate per distance level.
#[derive(Clone, Debug)]
pub struct GeneratorMatrix {
    grid: Grid,
    /// `pair_rates[l - 1]` is the rate onto one cell at distance `p^{l-K}`, `1 ≤ l ≤ N + K`.
    pair_rates: Vec<f64>,
}

impl GeneratorMatrix {
    pub fn assemble(ball: &BallConfig) -> Result<Self> {
        let grid = ball.grid();
        let space = grid.space();
        let weight = ball.spectrum().params().weight();
        let k = grid.resolution();
        let pair_rates = ((1 - k)..=grid.ball_exp())
            .map(|d| ball.kappa() * space.pow_n(-k) / weight.value(d))
            .collect();
        Ok(GeneratorMatrix { grid, pair_rates })
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    /// Rate onto a single cell at distance `p^d`.
    pub fn pair_rate(&self, d: i64) -> f64 {
        self.pair_rates[(d + self.grid.resolution() - 1) as usize]
    }

    /// Total rate of jumping to some cell at distance `p^d`,
    /// `ϰ(1 - p^{-n}) p^{nd} / w(p^d)`.
    pub fn level_rate(&self, d: i64) -> f64 {
        self.pair_rate(d) * self.grid.cells_at_distance(d) as f64
    }

    /// `Σ_d` of [`Self::level_rate`]; equals `ϰ(λ_{-K} - λ_N)`.
    pub fn total_rate(&self) -> f64 {
        compensated_sum(((1 - self.grid.resolution())..=self.grid.ball_exp()).map(|d| self.level_rate(d)))
    }

    /// `Gu` through block sums over the ball hierarchy, `O(M (N + K))`.
    pub fn apply(&self, u: &GridFunction) -> Result<GridFunction> {
        if u.grid() != self.grid {
            return Err(Error::Mismatch("generator and function live on different grids".into()));
        }
        Ok(GridFunction {
            grid: self.grid,
            values: self.apply_slice(u.values()),
        })
    }

    pub(crate) fn apply_slice(&self, u: &[f64]) -> Vec<f64> {
        let space = self.grid.space();
        let block = (space.p() as usize).pow(space.n());
        let levels = self.pair_rates.len();
        // sums[l][b]: sum of u over the b-th ball of radius p^{l-K}
        let mut sums: Vec<Vec<f64>> = Vec::with_capacity(levels + 1);
        sums.push(u.to_vec());
        for l in 1..=levels {
            let next: Vec<f64> = sums[l - 1].chunks(block).map(|c| c.iter().sum()).collect();
            sums.push(next);
        }
        let counts: Vec<f64> = (1..=levels)
            .map(|l| ((block - 1) * block.pow(l as u32 - 1)) as f64)
            .collect();
        (0..u.len())
            .into_par_iter()
            .map(|a| {
                let mut acc = 0.0;
                let mut stride = 1usize;
                for l in 1..=levels {
                    let outer = sums[l][a / (stride * block)];
                    let inner = sums[l - 1][a / stride];
                    acc += self.pair_rates[l - 1] * ((outer - inner) - counts[l - 1] * u[a]);
                    stride *= block;
                }
                acc
            })
            .collect()
    }

    /// Explicit dense matrix with diagonal `-Σ` of the off-diagonal row.
    pub fn dense(&self) -> DMatrix<f64> {
        let m = self.grid.cell_count() as usize;
        let mut g = DMatrix::from_fn(m, m, |a, b| {
            match self.grid.cell_distance(CellIndex(a as u64), CellIndex(b as u64)) {
                NormExponent::BelowResolution => 0.0,
                NormExponent::Finite(d) => self.pair_rate(d),
            }
        });
        for a in 0..m {
            let off = compensated_sum(g.row(a).iter().copied());
            g[(a, a)] = -off;
        }
        g
    }

    /// Eigenvalues of the dense matrix, ascending.
    pub fn dense_eigenvalues(&self) -> Vec<f64> {
        let eig = SymmetricEigen::new(self.dense());
        let mut v: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        v.sort_by(f64::total_cmp);
        v
    }
}

/// `R_N = ϰ ∫_{‖y‖ > p^N} u(y) / w(‖y‖) dy` for `u` given on cells of a larger
/// ball; cells inside `B_N` are ignored.
pub fn restriction_constant(spectrum: &Spectrum, u: &GridFunction, ball_exp: i64) -> f64 {
    let grid = u.grid();
    let weight = spectrum.params().weight();
    let measure = grid.cell_measure();
    let terms = grid.iter_cells().filter_map(|c| match grid.cell_norm(c) {
        NormExponent::Finite(e) if e > ball_exp => Some(u.values()[c.0 as usize] / weight.value(e)),
        _ => None,
    });
    spectrum.kappa() * measure * compensated_sum(terms)
}


#[cfg(test)]
mod proptests {
    use super::*;
    use crate::spectral::{KernelParams, SeriesTolerance};
    use proptest::prelude::*;

    fn small_ball() -> impl Strategy<Value = BallConfig> {
        (prop::sample::select(vec![2u32, 3]), 1u32..=2, -1i64..=2, 1i64..=3, 0.2f64..2.0).prop_filter_map(
            "cell budget",
            |(p, n, big_n, l, excess)| {
                let params = KernelParams::power_law(p, n, n as f64 + excess, 1.0, 1.0).ok()?;
                let ball = BallConfig::new(Spectrum::new(params, SeriesTolerance::default()), big_n, l - big_n).ok()?;
                (ball.cell_count() <= 256).then_some(ball)
            },
        )
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn transition_matrix_is_symmetric_and_stochastic(ball in small_ball(), log_t in -2.0f64..1.5) {
            let t = 10f64.powf(log_t);
            let m = ball.transition_matrix(t, TransitionMethod::Spectral).unwrap();
            prop_assert!((&m - m.transpose()).abs().max() <= 1e-14);
            for row in m.row_iter() {
                prop_assert!((row.sum() - 1.0).abs() <= 1e-12);
                prop_assert!(row.iter().all(|&x| x >= -1e-12));
            }
        }

        #[test]
        fn hierarchical_apply_matches_dense(ball in small_ball(), seed in any::<u64>()) {
            let g = ball.generator().unwrap();
            let u = crate::pme::random_data(ball.grid(), seed);
            let fast = g.apply(&u).unwrap();
            let dense = g.dense() * nalgebra::DVector::from_column_slice(u.values());
            let gap = fast.values().iter().zip(dense.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            prop_assert!(gap <= 1e-12 * g.total_rate().max(1.0));
        }

        #[test]
        fn relaxes_at_the_spectral_gap(ball in small_ball()) {
            // ‖P(t) - uniform‖ decays like e^{-gap t}
            let gap = ball.spectral_gap().unwrap();
            let t = 3.0 / gap;
            let m = ball.transition_matrix(t, TransitionMethod::Spectral).unwrap();
            let uniform = 1.0 / ball.cell_count() as f64;
            let dev = m.iter().map(|x| (x - uniform).abs()).fold(0.0, f64::max);
            prop_assert!(dev <= (-gap * t).exp() * (1.0 + 1e-9));
            prop_assert!(dev >= (-gap * t).exp() / ball.cell_count() as f64 * (1.0 - 1e-9));
        }
    }
}
