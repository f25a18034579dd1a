// SPDX-License-Identifier: Apache-2.0

//! Monte Carlo simulation of the ball process and of the full process.
//!
//! The ball process is simulated as the exact cell chain: exponential waiting
//! times with the total rate, a distance level drawn proportionally to its
//! rate, and a displacement uniform on the sphere of that radius. Jumps of
//! norm at most `p^{-K}` are never drawn; they do not move the cell.
//!
//! Every path owns its random stream, keyed by `(seed, stream)` on a ChaCha
//! generator, so results do not depend on scheduling.

use std::io::Write;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Exp};
use rayon::prelude::*;

use crate::ball::BallConfig;
use crate::error::{Error, Result};
use crate::padic::{character, CellIndex, Grid, NormExponent, PAdicPoint};
use crate::spectral::{compensated_sum, Spectrum};

/// Smallest path count accepted by the transition check.
pub const MIN_CHECK_PATHS: usize = 10_000;

/// Number of null replicates behind the total-variation envelope.
pub const BOOTSTRAP_REPLICATES: usize = 400;

const ETA_DOMAIN: u64 = 0;
const LARGE_JUMP_DOMAIN: u64 = 1;
const BOOTSTRAP_DOMAIN: u64 = 2;

/// Independent generator for stream `index` of a given purpose.
pub fn stream_rng(seed: u64, domain: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index.wrapping_mul(4).wrapping_add(domain));
    rng
}

/// Jump rates per distance level `p^d`, `lo < d ≤ hi`.
#[derive(Clone, Debug, PartialEq)]
pub struct JumpRateTable {
    lo: i64,
    rates: Vec<f64>,
    cumulative: Vec<f64>,
}

impl JumpRateTable {
    /// Rates `ϰ(1 - p^{-n}) p^{nd} / w(p^d)` for `lo < d ≤ hi`; the total is
    /// checked against `ϰ(λ_lo - λ_hi)`.
    pub fn new(spectrum: &Spectrum, lo: i64, hi: i64) -> Result<Self> {
        if hi <= lo {
            return Err(Error::invalid(format!("jump levels: need lo < hi (lo = {lo}, hi = {hi})")));
        }
        let space = spectrum.space();
        let weight = spectrum.params().weight();
        let rates: Vec<f64> = ((lo + 1)..=hi)
            .map(|d| spectrum.kappa() * space.sphere_fraction() * space.pow_n(d) / weight.value(d))
            .collect();
        let table = Self::from_rates(lo, rates)?;
        let expected = spectrum.kappa() * (spectrum.lambda(lo)? - spectrum.lambda(hi)?);
        let diff = (table.total() - expected).abs();
        let tol = 1e-12 * expected.max(1.0);
        if diff > tol {
            return Err(Error::Disagreement {
                what: "total jump rate vs lambda difference".into(),
                diff,
                tol,
            });
        }
        Ok(table)
    }

    /// Rates of the ball chain: levels `-K < d ≤ N`.
    pub fn for_ball(ball: &BallConfig) -> Result<Self> {
        Self::new(ball.spectrum(), -ball.resolution(), ball.ball_exp())
    }

    /// Explicit nonnegative rates for levels `lo + 1, lo + 2, …`.
    pub fn from_rates(lo: i64, rates: Vec<f64>) -> Result<Self> {
        if rates.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
            return Err(Error::invalid("jump rates must be finite and nonnegative"));
        }
        let mut cumulative = Vec::with_capacity(rates.len());
        let mut acc = 0.0;
        for r in &rates {
            acc += r;
            cumulative.push(acc);
        }
        Ok(JumpRateTable { lo, rates, cumulative })
    }

    pub fn levels(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        self.rates.iter().enumerate().map(move |(i, &r)| (self.lo + 1 + i as i64, r))
    }

    pub fn total(&self) -> f64 {
        self.cumulative.last().copied().unwrap_or(0.0)
    }

    /// Level with probability proportional to its rate.
    pub fn sample_level<R: Rng + ?Sized>(&self, rng: &mut R) -> i64 {
        let u = rng.random::<f64>() * self.total();
        let i = self.cumulative.partition_point(|&c| c <= u).min(self.rates.len() - 1);
        self.lo + 1 + i as i64
    }
}

/// Displacement uniform over the cells at exact distance `p^d` from zero.
pub fn sample_displacement<R: Rng + ?Sized>(grid: Grid, d: i64, rng: &mut R) -> Result<PAdicPoint> {
    if d <= -grid.resolution() || d > grid.ball_exp() {
        return Err(Error::invalid(format!(
            "level: need -K < d <= N (d = {d}, N = {}, K = {})",
            grid.ball_exp(),
            grid.resolution()
        )));
    }
    let space = grid.space();
    let (p, n) = (space.p(), space.n() as usize);
    let digits = grid.digits_per_coord();
    let lead = (grid.ball_exp() - d) as usize;
    let block = (p as u64).pow(n as u32);
    let mut coords = vec![vec![0u8; digits]; n];
    // leading scale: uniform nonzero vector of n digits
    let mut v = rng.random_range(1..block);
    for coord in coords.iter_mut().rev() {
        coord[lead] = (v % p as u64) as u8;
        v /= p as u64;
    }
    for m in (lead + 1)..digits {
        for coord in coords.iter_mut() {
            coord[m] = rng.random_range(0..p) as u8;
        }
    }
    PAdicPoint::from_digits(grid, &coords)
}

/// One simulated trajectory of the cell chain.
#[derive(Clone, Debug, PartialEq)]
pub struct PathSample {
    pub seed: u64,
    pub path_index: u64,
    pub initial: CellIndex,
    pub horizon: f64,
    /// Jump times and the cell entered at each.
    pub events: Vec<(f64, CellIndex)>,
}

impl PathSample {
    pub fn cell_at(&self, t: f64) -> CellIndex {
        let k = self.events.partition_point(|&(s, _)| s <= t);
        if k == 0 { self.initial } else { self.events[k - 1].1 }
    }

    pub fn final_cell(&self) -> CellIndex {
        self.events.last().map_or(self.initial, |e| e.1)
    }

    /// Rows `path,event_time,cell`; the initial state is logged at time 0.
    pub fn write_csv_rows(&self, out: &mut impl Write) -> std::io::Result<()> {
        writeln!(out, "{},{:.16e},{}", self.path_index, 0.0, self.initial.0)?;
        for (t, c) in &self.events {
            writeln!(out, "{},{:.16e},{}", self.path_index, t, c.0)?;
        }
        Ok(())
    }
}

fn run_chain<R: Rng>(
    grid: Grid,
    table: &JumpRateTable,
    x0: &PAdicPoint,
    horizon: f64,
    rng: &mut R,
    mut on_jump: impl FnMut(f64, &PAdicPoint),
) -> Result<PAdicPoint> {
    let mut x = x0.clone();
    let total = table.total();
    if total <= 0.0 {
        return Ok(x);
    }
    let waiting = Exp::new(total).map_err(|e| Error::invalid(e.to_string()))?;
    let mut t = 0.0;
    loop {
        t += waiting.sample(rng);
        if t > horizon {
            return Ok(x);
        }
        let d = table.sample_level(rng);
        x = x.add(&sample_displacement(grid, d, rng)?)?;
        on_jump(t, &x);
    }
}

/// Exact trajectory of the cell chain from `x0` up to `horizon`.
pub fn simulate_path(
    ball: &BallConfig,
    table: &JumpRateTable,
    x0: CellIndex,
    horizon: f64,
    seed: u64,
    path_index: u64,
) -> Result<PathSample> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::invalid(format!("horizon: must be positive, got {horizon}")));
    }
    let grid = ball.grid();
    let start = grid.point(x0)?;
    let mut rng = stream_rng(seed, ETA_DOMAIN, path_index);
    let mut events = Vec::new();
    run_chain(grid, table, &start, horizon, &mut rng, |t, x| events.push((t, x.cell_index())))?;
    Ok(PathSample {
        seed,
        path_index,
        initial: x0,
        horizon,
        events,
    })
}

/// Cell of path `i` at time `t`, without recording the trajectory.
fn final_point(ball: &BallConfig, table: &JumpRateTable, x0: &PAdicPoint, t: f64, seed: u64, i: u64) -> Result<PAdicPoint> {
    let mut rng = stream_rng(seed, ETA_DOMAIN, i);
    run_chain(ball.grid(), table, x0, t, &mut rng, |_, _| {})
}

fn final_points(ball: &BallConfig, x0: CellIndex, t: f64, paths: usize, seed: u64) -> Result<Vec<PAdicPoint>> {
    let table = JumpRateTable::for_ball(ball)?;
    let start = ball.grid().point(x0)?;
    (0..paths as u64)
        .into_par_iter()
        .map(|i| final_point(ball, &table, &start, t, seed, i))
        .collect()
}

/// Counts of cells occupied at a fixed time over many paths.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalDensity {
    pub counts: Vec<u64>,
    pub paths: u64,
}

impl EmpiricalDensity {
    pub fn from_cells(cell_count: usize, cells: impl IntoIterator<Item = CellIndex>) -> Self {
        let mut counts = vec![0u64; cell_count];
        let mut paths = 0;
        for c in cells {
            counts[c.0 as usize] += 1;
            paths += 1;
        }
        EmpiricalDensity { counts, paths }
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.counts.iter().map(|&c| c as f64 / self.paths as f64).collect()
    }

    /// Binomial standard error of each probability, evaluated at `reference`.
    pub fn standard_errors(&self, reference: &[f64]) -> Vec<f64> {
        reference
            .iter()
            .map(|&q| (q * (1.0 - q) / self.paths as f64).max(0.0).sqrt())
            .collect()
    }
}

/// Distribution of cells at time `t` from `x0`, over `paths` paths.
pub fn empirical_density(ball: &BallConfig, x0: CellIndex, t: f64, paths: usize, seed: u64) -> Result<EmpiricalDensity> {
    let points = final_points(ball, x0, t, paths, seed)?;
    Ok(EmpiricalDensity::from_cells(ball.cell_count(), points.iter().map(PAdicPoint::cell_index)))
}

/// Outcome of a statistical comparison.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StatStatus {
    /// Within the 3σ envelope.
    Pass,
    /// Between 3σ and 4σ: rerun before judging.
    Warning,
    /// Beyond 4σ.
    Fail,
}

impl StatStatus {
    pub fn from_z(z: f64) -> Self {
        if z <= 3.0 {
            StatStatus::Pass
        } else if z <= 4.0 {
            StatStatus::Warning
        } else {
            StatStatus::Fail
        }
    }
}

/// Empirical vs analytic cell distribution at one time.
#[derive(Clone, Debug)]
pub struct TransitionCheckReport {
    pub density: EmpiricalDensity,
    pub analytic: Vec<f64>,
    /// Per-cell `(p̂ - p) / se`, zero where the analytic standard error vanishes.
    pub z_scores: Vec<f64>,
    pub total_variation: f64,
    /// Mean and standard deviation of the total variation under exact sampling.
    pub null_mean: f64,
    pub null_sd: f64,
    pub z: f64,
    pub status: StatStatus,
}

impl TransitionCheckReport {
    /// Upper edge of the 3σ envelope.
    pub fn envelope(&self) -> f64 {
        self.null_mean + 3.0 * self.null_sd
    }

    /// Rows `cell,count,prob,analytic,zscore`.
    pub fn write_csv(&self, out: &mut impl Write) -> std::io::Result<()> {
        writeln!(out, "cell,count,prob,analytic,zscore")?;
        let probs = self.density.probabilities();
        for (c, ((&count, p), (q, z))) in self
            .density
            .counts
            .iter()
            .zip(&probs)
            .zip(self.analytic.iter().zip(&self.z_scores))
            .enumerate()
        {
            writeln!(out, "{c},{count},{p:.16e},{q:.16e},{z:.16e}")?;
        }
        Ok(())
    }
}

pub fn total_variation(a: &[f64], b: &[f64]) -> f64 {
    0.5 * compensated_sum(a.iter().zip(b).map(|(x, y)| (x - y).abs()))
}

/// Total variation of multinomial samples of size `paths` from `probs`.
fn bootstrap_total_variation(probs: &[f64], paths: u64, replicates: usize, seed: u64) -> Result<Vec<f64>> {
    (0..replicates as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream_rng(seed, BOOTSTRAP_DOMAIN, r);
            let mut remaining = paths;
            let mut mass_left = 1.0f64;
            let mut sample = Vec::with_capacity(probs.len());
            for (i, &q) in probs.iter().enumerate() {
                let k = if i + 1 == probs.len() || remaining == 0 {
                    remaining
                } else {
                    let share = (q.max(0.0) / mass_left).clamp(0.0, 1.0);
                    Binomial::new(remaining, share)
                        .map_err(|e| Error::invalid(e.to_string()))?
                        .sample(&mut rng)
                };
                remaining -= k;
                mass_left -= q.max(0.0);
                sample.push(k as f64 / paths as f64);
            }
            Ok(total_variation(&sample, probs))
        })
        .collect()
}

/// Compare the simulated distribution at `t` with the transition matrix row.
///
/// The envelope is the 3σ band of the total variation between the exact
/// distribution and multinomial samples of the same size.
pub fn mc_transition_check(
    ball: &BallConfig,
    x0: CellIndex,
    t: f64,
    paths: usize,
    seed: u64,
) -> Result<TransitionCheckReport> {
    if paths < MIN_CHECK_PATHS {
        return Err(Error::invalid(format!("paths: need at least {MIN_CHECK_PATHS}, got {paths}")));
    }
    let density = empirical_density(ball, x0, t, paths, seed)?;
    let analytic = ball.transition_row(t, x0)?;
    let probs = density.probabilities();
    let se = density.standard_errors(&analytic);
    let z_scores = probs
        .iter()
        .zip(&analytic)
        .zip(&se)
        .map(|((p, q), s)| if *s > 0.0 { (p - q) / s } else { 0.0 })
        .collect();
    let tv = total_variation(&probs, &analytic);
    let null = bootstrap_total_variation(&analytic, paths as u64, BOOTSTRAP_REPLICATES, seed)?;
    let null_mean = compensated_sum(null.iter().copied()) / null.len() as f64;
    let null_var = compensated_sum(null.iter().map(|x| (x - null_mean).powi(2))) / (null.len() - 1) as f64;
    let null_sd = null_var.sqrt();
    let z = if null_sd > 0.0 { (tv - null_mean) / null_sd } else { 0.0 };
    Ok(TransitionCheckReport {
        density,
        analytic,
        z_scores,
        total_variation: tv,
        null_mean,
        null_sd,
        z,
        status: StatStatus::from_z(z.abs()),
    })
}

/// Sample mean of a character against its exact value.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CharacterEstimate {
    pub mean: Complex64,
    /// Standard errors of the real and imaginary parts.
    pub std_err: (f64, f64),
    pub analytic: f64,
    pub z: f64,
    pub status: StatStatus,
}

fn character_estimate(samples: &[Complex64], analytic: f64) -> CharacterEstimate {
    let n = samples.len() as f64;
    let re = compensated_sum(samples.iter().map(|c| c.re)) / n;
    let im = compensated_sum(samples.iter().map(|c| c.im)) / n;
    let var_re = compensated_sum(samples.iter().map(|c| (c.re - re).powi(2))) / (n - 1.0).max(1.0);
    let var_im = compensated_sum(samples.iter().map(|c| (c.im - im).powi(2))) / (n - 1.0).max(1.0);
    let (se_re, se_im) = ((var_re / n).sqrt(), (var_im / n).sqrt());
    // samples have modulus one; gaps at roundoff level carry no signal even
    // when a component is constant up to roundoff and its standard error is ~1e-19
    let z_of = |diff: f64, se: f64| {
        if diff.abs() <= 1e-12 {
            0.0
        } else if se > 0.0 {
            diff.abs() / se
        } else {
            f64::INFINITY
        }
    };
    let z = z_of(re - analytic, se_re).max(z_of(im, se_im));
    CharacterEstimate {
        mean: Complex64::new(re, im),
        std_err: (se_re, se_im),
        analytic,
        z,
        status: StatStatus::from_z(z),
    }
}

/// Moves `z` onto `target` (a dual grid), failing if `‖z‖` exceeds its ball.
fn to_dual(z: &PAdicPoint, target: Grid) -> Result<PAdicPoint> {
    if let NormExponent::Finite(e) = z.norm_exponent() {
        if e > target.ball_exp() {
            return Err(Error::InsufficientTruncation(format!(
                "frequency of norm p^{e} is not resolved by cells of size p^-{}",
                target.ball_exp()
            )));
        }
    }
    z.rebase(target)
}

/// `E χ(z·η_t)` for the ball process started at zero, against
/// `exp(ϰt(λ_N - A_w(z)))` (and `1` for `‖z‖ ≤ p^{-N}`).
pub fn mc_character(ball: &BallConfig, z: &PAdicPoint, t: f64, paths: usize, seed: u64) -> Result<CharacterEstimate> {
    let dual = to_dual(z, ball.dual_grid()?)?;
    let analytic = match dual.norm_exponent() {
        NormExponent::BelowResolution => 1.0,
        NormExponent::Finite(k) if k <= -ball.ball_exp() => 1.0,
        NormExponent::Finite(k) => (ball.level_eigenvalue(k)? * t).exp(),
    };
    let points = final_points(ball, CellIndex(0), t, paths, seed)?;
    let samples: Vec<Complex64> = points.iter().map(|x| character(&dual, x)).collect::<Result<_>>()?;
    Ok(character_estimate(&samples, analytic))
}

/// Compound Poisson path of the jumps with norm in `(p^N, p^{N'}]`.
#[derive(Clone, Debug, PartialEq)]
pub struct LargeJumpPath {
    pub jump_times: Vec<f64>,
    pub levels: Vec<i64>,
    /// Sum of the jumps on the grid of `B_{N'}`.
    pub position: PAdicPoint,
}

/// Jumps of norm in `(p^N, p^{N'}]` up to `horizon`, on the grid
/// `(N', K)`. Jumps above `p^{N'}` are dropped; their total rate is `ϰλ_{N'}`.
pub fn simulate_large_jumps(
    spectrum: &Spectrum,
    grid: Grid,
    ball_exp: i64,
    horizon: f64,
    seed: u64,
    path_index: u64,
) -> Result<LargeJumpPath> {
    if grid.ball_exp() <= ball_exp {
        return Err(Error::invalid(format!(
            "cap: need N' > N (N' = {}, N = {ball_exp})",
            grid.ball_exp()
        )));
    }
    let table = JumpRateTable::new(spectrum, ball_exp, grid.ball_exp())?;
    let mut rng = stream_rng(seed, LARGE_JUMP_DOMAIN, path_index);
    let mut jump_times = Vec::new();
    let mut levels = Vec::new();
    let waiting = Exp::new(table.total()).map_err(|e| Error::invalid(e.to_string()))?;
    let mut position = PAdicPoint::zero(grid);
    let mut t = 0.0;
    loop {
        t += waiting.sample(&mut rng);
        if t > horizon {
            break;
        }
        let d = table.sample_level(&mut rng);
        position = position.add(&sample_displacement(grid, d, &mut rng)?)?;
        jump_times.push(t);
        levels.push(d);
    }
    Ok(LargeJumpPath {
        jump_times,
        levels,
        position,
    })
}

/// `ξ_t = η_t + ξ_t^{(N)}` observed on the grid `(N', K)`, per path.
pub fn simulate_xi(ball: &BallConfig, cap: i64, t: f64, paths: usize, seed: u64) -> Result<Vec<PAdicPoint>> {
    let big = Grid::new(ball.space(), cap, ball.resolution())?;
    let table = JumpRateTable::for_ball(ball)?;
    let start = PAdicPoint::zero(ball.grid());
    (0..paths as u64)
        .into_par_iter()
        .map(|i| {
            let eta = final_point(ball, &table, &start, t, seed, i)?.rebase(big)?;
            let large = simulate_large_jumps(ball.spectrum(), big, ball.ball_exp(), t, seed, i)?;
            eta.add(&large.position)
        })
        .collect()
}

/// Character estimate for the reconstructed full process.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct XiCharacterEstimate {
    /// Compared against `e^{-ϰtA_w(z)}`.
    pub full: CharacterEstimate,
    /// Exact value for the process with jumps above `p^{N'}` removed.
    pub truncated_analytic: f64,
}

/// `E χ(z·ξ_t)` from [`simulate_xi`].
pub fn mc_character_xi(
    ball: &BallConfig,
    cap: i64,
    z: &PAdicPoint,
    t: f64,
    paths: usize,
    seed: u64,
) -> Result<XiCharacterEstimate> {
    let space = ball.space();
    let spectrum = ball.spectrum();
    let dual = to_dual(z, Grid::new(space, ball.resolution(), cap)?)?;
    let z_norm = dual.norm_exponent();
    let full = (-spectrum.kappa() * t * spectrum.a_w_at(z_norm)?).exp();
    // η part, then each large-jump level contributes exp(r_d t (E_d χ - 1))
    let eta_part = match z_norm {
        NormExponent::Finite(k) if k > -ball.ball_exp() => ball.level_eigenvalue(k)? * t,
        _ => 0.0,
    };
    let table = JumpRateTable::new(spectrum, ball.ball_exp(), cap)?;
    let large_part = compensated_sum(table.levels().map(|(d, r)| {
        let mean_char = space.character_sphere_integral(d, z_norm) / space.haar_sphere(d);
        r * t * (mean_char - 1.0)
    }));
    let truncated_analytic = (eta_part + large_part).exp();
    let points = simulate_xi(ball, cap, t, paths, seed)?;
    let samples: Vec<Complex64> = points.iter().map(|x| character(&dual, x)).collect::<Result<_>>()?;
    Ok(XiCharacterEstimate {
        full: character_estimate(&samples, full),
        truncated_analytic,
    })
}


#[cfg(test)]
mod proptests {
    use super::*;
    use crate::spectral::{KernelParams, SeriesTolerance};
    use proptest::prelude::*;

    fn ball() -> BallConfig {
        let params = KernelParams::power_law(3, 1, 2.0, 1.0, 1.0).unwrap();
        BallConfig::new(Spectrum::new(params, SeriesTolerance::default()), 1, 2).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn paths_are_reproducible(seed in any::<u64>(), index in 0u64..1_000_000, start in 0u64..27) {
            let b = ball();
            let table = JumpRateTable::for_ball(&b).unwrap();
            let a = simulate_path(&b, &table, CellIndex(start), 3.0, seed, index).unwrap();
            let again = simulate_path(&b, &table, CellIndex(start), 3.0, seed, index).unwrap();
            let (mut x, mut y) = (Vec::new(), Vec::new());
            a.write_csv_rows(&mut x).unwrap();
            again.write_csv_rows(&mut y).unwrap();
            prop_assert_eq!(x, y);
            // the jump chain never leaves the ball and never jumps in place
            let mut prev = CellIndex(start);
            for &(time, cell) in &a.events {
                prop_assert!(time > 0.0 && time <= 3.0);
                prop_assert!(cell.0 < 27 && cell != prev);
                prev = cell;
            }
        }

        #[test]
        fn streams_differ_across_indices(seed in any::<u64>(), i in 0u64..1000) {
            let mut a = stream_rng(seed, 0, i);
            let mut b = stream_rng(seed, 0, i + 1);
            let (x, y): (u64, u64) = (a.random(), b.random());
            prop_assert_ne!(x, y);
        }
    }
}
