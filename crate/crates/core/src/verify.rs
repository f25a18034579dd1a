// SPDX-License-Identifier: Apache-2.0

//! The property suite behind `padic verify`.
//!
//! Each criterion bundles several checks. Statistical checks that land
//! between 3σ and 4σ are rerun once with a fresh seed; a rerun within 3σ
//! passes, anything beyond 4σ fails.

use std::fmt::Write as _;
use std::io::Write as _;

use nalgebra::DVector;

use crate::ball::{BallConfig, GridFunction, TransitionMethod};
use crate::error::{Error, Result};
use crate::kernel::HeatKernel;
use crate::padic::{character, CellIndex, Grid, NormExponent, PAdicPoint, SpaceConfig};
use crate::pme::{self, Nonlinearity, SolverConfig};
use crate::sim::{self, StatStatus};
use crate::spectral::{KernelParams, SeriesTolerance, Spectrum};

/// How much of the suite to run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    /// One or two configurations per criterion; well under a minute.
    Quick,
    /// All default spaces `p ∈ {2, 3}`, `n ∈ {1, 2}` and larger balls.
    Full,
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "quick" => Ok(Preset::Quick),
            "full" => Ok(Preset::Full),
            other => Err(Error::invalid(format!("preset: expected quick or full, got {other}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Pass,
    /// A statistical check needed a rerun and passed it.
    Flaky,
    /// A deterministic check failed.
    Fail,
    /// A statistical check failed.
    StatisticalFail,
}

impl Outcome {
    pub fn passed(self) -> bool {
        matches!(self, Outcome::Pass | Outcome::Flaky)
    }

    fn label(self) -> &'static str {
        match self {
            Outcome::Pass => "PASS",
            Outcome::Flaky => "PASS (rerun)",
            Outcome::Fail => "FAIL",
            Outcome::StatisticalFail => "FAIL (statistical)",
        }
    }

    fn worst(self, other: Outcome) -> Outcome {
        let rank = |o: Outcome| match o {
            Outcome::Pass => 0,
            Outcome::Flaky => 1,
            Outcome::StatisticalFail => 2,
            Outcome::Fail => 3,
        };
        if rank(other) > rank(self) { other } else { self }
    }
}

/// Result of one numbered criterion.
#[derive(Clone, Debug)]
pub struct CriterionResult {
    pub id: u8,
    pub name: &'static str,
    pub outcome: Outcome,
    /// One line per failed or rerun check.
    pub notes: Vec<String>,
    pub checks: usize,
}

struct Checks {
    outcome: Outcome,
    notes: Vec<String>,
    count: usize,
}

impl Checks {
    fn new() -> Self {
        Checks {
            outcome: Outcome::Pass,
            notes: Vec::new(),
            count: 0,
        }
    }

    fn check(&mut self, ok: bool, what: impl FnOnce() -> String) {
        self.count += 1;
        if !ok {
            self.outcome = self.outcome.worst(Outcome::Fail);
            self.notes.push(what());
        }
    }

    fn bound(&mut self, what: &str, value: f64, limit: f64) {
        self.check(value <= limit, || format!("{what}: {value:e} > {limit:e}"));
    }

    /// Statistical check with one rerun; `run(seed)` returns a z-score.
    fn statistical(&mut self, what: &str, seed: u64, run: impl Fn(u64) -> Result<f64>) -> Result<()> {
        self.count += 1;
        let z = run(seed)?;
        match StatStatus::from_z(z) {
            StatStatus::Pass => {}
            StatStatus::Fail => {
                self.outcome = self.outcome.worst(Outcome::StatisticalFail);
                self.notes.push(format!("{what}: z = {z:.2} beyond 4σ"));
            }
            StatStatus::Warning => {
                let z2 = run(seed.wrapping_add(0x9e37_79b9))?;
                if z2 <= 3.0 {
                    self.outcome = self.outcome.worst(Outcome::Flaky);
                    self.notes.push(format!("{what}: z = {z:.2}, rerun z = {z2:.2}"));
                } else {
                    self.outcome = self.outcome.worst(Outcome::StatisticalFail);
                    self.notes.push(format!("{what}: z = {z:.2}, rerun z = {z2:.2}"));
                }
            }
        }
        Ok(())
    }

    fn finish(self, id: u8, name: &'static str) -> CriterionResult {
        CriterionResult {
            id,
            name,
            outcome: self.outcome,
            notes: self.notes,
            checks: self.count,
        }
    }
}

fn spectrum(p: u32, n: u32) -> Result<Spectrum> {
    let params = KernelParams::power_law(p, n, 2.0 * n as f64, 1.0, 1.0)?;
    Ok(Spectrum::new(params, SeriesTolerance::default()))
}

fn spaces(preset: Preset) -> Vec<(u32, u32)> {
    match preset {
        Preset::Quick => vec![(2, 1), (3, 1)],
        Preset::Full => vec![(2, 1), (3, 1), (2, 2), (3, 2)],
    }
}

fn balls(preset: Preset) -> Vec<(u32, u32, i64, i64)> {
    match preset {
        Preset::Quick => vec![(2, 1, 1, 2), (3, 1, 0, 2)],
        Preset::Full => vec![(2, 1, 1, 2), (3, 1, 0, 2), (2, 1, 3, 5), (2, 2, 1, 2), (3, 1, 2, 2), (3, 2, 1, 1)],
    }
}

/// Point with `‖z‖ = p^k` on the given grid (first coordinate `p^{-k}`).
fn frequency(grid: Grid, k: i64) -> Result<PAdicPoint> {
    let n = grid.space().n() as usize;
    let mut a = vec![0u128; n];
    a[0] = (grid.space().p() as u128).pow((grid.ball_exp() - k) as u32);
    PAdicPoint::from_scaled_integers(grid, &a)
}

/// `∫_{‖x‖ > p^J} dx / w(‖x‖)` for the power law `w = c‖x‖^α`, as a geometric sum.
fn power_law_tail(space: SpaceConfig, c: f64, alpha: f64, big_j: i64) -> f64 {
    let q = (space.p() as f64).powf(space.n() as f64 - alpha);
    space.sphere_fraction() * q.powf((big_j + 1) as f64) / (c * (1.0 - q))
}

/// `∫ (1 - Re χ(z·x)) / w(‖x‖) dx` over cells of the grid, `‖z‖ = p^k`.
fn cell_sum_symbol(grid: Grid, z: &PAdicPoint, c: f64, alpha: f64) -> Result<f64> {
    let space = grid.space();
    let mut terms = Vec::new();
    for cell in grid.iter_cells() {
        let NormExponent::Finite(e) = grid.cell_norm(cell) else { continue };
        let chi = character(z, &grid.point(cell)?)?;
        terms.push((1.0 - chi.re) * grid.cell_measure() / (c * space.pow(e).powf(alpha)));
    }
    Ok(crate::spectral::compensated_sum(terms))
}

fn criterion_spectral(preset: Preset) -> Result<CriterionResult> {
    let mut c = Checks::new();
    for (p, n) in spaces(preset) {
        let s = spectrum(p, n)?;
        let space = s.space();
        let alpha = 2.0 * n as f64;
        let extra = match (p, n) {
            (2, 1) => 14,
            (3, 1) => 8,
            (2, 2) => 6,
            _ => 4,
        };
        for k in -1..=2i64 {
            // A_w by cells out to p^J plus the geometric tail
            let big_j = -k + extra;
            let grid = Grid::new(space, big_j, k)?;
            let z = frequency(Grid::new(space, k, big_j)?, k)?;
            let brute = cell_sum_symbol(grid, &z, 1.0, alpha)? + power_law_tail(space, 1.0, alpha, big_j);
            let a = s.a_w(-k)?;
            c.bound(&format!("A_w p={p} n={n} k={k} vs cell sum"), (a - brute).abs() / a, 1e-12);
            if let Some(closed) = s.a_w_closed_form(-k) {
                c.bound(&format!("A_w p={p} n={n} k={k} vs closed form"), (a - closed).abs() / a, 1e-12);
            }
            // I_{B_N} by cells of B_N
            for big_n in -1..=1i64 {
                let res = k.max(1 - big_n);
                let ball = Grid::new(space, big_n, res)?;
                let z = frequency(Grid::new(space, res, big_n)?, k)?;
                let brute = cell_sum_symbol(ball, &z, 1.0, alpha)?;
                let i = s.i_ball(-k, big_n);
                let piecewise = if k > -big_n { a - s.lambda(big_n)? } else { 0.0 };
                c.bound(&format!("I_B p={p} n={n} k={k} N={big_n} vs cell sum"), (i - brute).abs(), 1e-10);
                c.bound(&format!("I_B p={p} n={n} k={k} N={big_n} piecewise"), (i - piecewise).abs(), 1e-10);
            }
        }
        for big_n in -2..=2i64 {
            let grid = Grid::new(space, big_n + extra, -big_n)?;
            let mut terms = Vec::new();
            for cell in grid.iter_cells() {
                if let NormExponent::Finite(e) = grid.cell_norm(cell) {
                    if e > big_n {
                        terms.push(grid.cell_measure() / space.pow(e).powf(alpha));
                    }
                }
            }
            let brute = crate::spectral::compensated_sum(terms)
                + power_law_tail(space, 1.0, alpha, big_n + extra);
            let l = s.lambda(big_n)?;
            c.bound(&format!("lambda p={p} n={n} N={big_n} vs cell sum"), (l - brute).abs() / l, 1e-12);
            if let Some(closed) = s.lambda_closed_form(big_n) {
                c.bound(&format!("lambda p={p} n={n} N={big_n} vs closed form"), (l - closed).abs() / l, 1e-12);
            }
        }
    }
    Ok(c.finish(1, "spectral formulas"))
}

fn criterion_heat_kernel(preset: Preset) -> Result<CriterionResult> {
    let mut c = Checks::new();
    for (p, n) in spaces(preset) {
        let k = HeatKernel::new(spectrum(p, n)?);
        for t in [0.01, 0.1, 1.0, 10.0] {
            let total = k.total_mass_by_spheres(t, -6)?;
            c.bound(&format!("normalization p={p} n={n} t={t}"), (total - 1.0).abs(), 1e-10);
            for beta in -6..=8 {
                let z = k.z_full(t, beta)?;
                c.check(z >= -1e-10, || format!("Z < 0 at p={p} n={n} t={t} beta={beta}: {z:e}"));
                let ub = k.upper_bound(t, beta);
                c.check(z <= ub, || format!("bound violated at p={p} n={n} t={t} beta={beta}: {z:e} > {ub:e}"));
                let h = 1e-5 * t;
                let fd = (k.z_full(t + h, beta)? - k.z_full(t - h, beta)?) / (2.0 * h);
                let d = k.dt_z(t, beta)?;
                c.bound(
                    &format!("dt_z vs difference p={p} n={n} t={t} beta={beta}"),
                    (fd - d).abs() / d.abs().max(1e-300),
                    1e-6,
                );
            }
        }
        for (t, s) in [(0.1, 0.1), (0.3, 1.0), (1.0, 2.5)] {
            for beta in -3..=3 {
                let r = k.chapman_kolmogorov_check(t, s, beta)?;
                c.bound(&format!("Chapman-Kolmogorov p={p} n={n} t={t} s={s} beta={beta}"), r.residual, 1e-8);
            }
        }
        // small t: (Z w / (ϰt) - 1) / t settles to a constant
        let w = k.spectrum().params().weight().clone();
        for beta in [0i64, 2] {
            let coef = |t: f64| -> Result<f64> {
                Ok((k.z_full(t, beta)? * w.value(beta) / (k.spectrum().kappa() * t) - 1.0) / t)
            };
            let (c3, c4) = (coef(1e-3)?, coef(1e-4)?);
            c.check(
                (c3 / c4 - 1.0).abs() <= 0.05,
                || format!("small-t constant p={p} n={n} beta={beta} drifts: {c3:e} vs {c4:e}"),
            );
        }
    }
    Ok(c.finish(2, "heat kernel"))
}

fn criterion_ball(preset: Preset, seed: u64) -> Result<CriterionResult> {
    let mut c = Checks::new();
    for (p, n, big_n, big_k) in balls(preset) {
        let ball = BallConfig::new(spectrum(p, n)?, big_n, big_k)?;
        let tag = format!("p={p} n={n} N={big_n} K={big_k}");
        c.bound(&format!("c(0) {tag}"), ball.c_t(0.0)?.abs(), 1e-10);
        c.bound(&format!("c'(0) {tag}"), ball.c_prime(0.0)?.abs(), 1e-10);
        for t in [0.05, 0.5, 2.0] {
            let mut shells = vec![ball.z_ball_center_mass(t, big_n - 40)?];
            for beta in (big_n - 39)..=big_n {
                let z = ball.z_ball(t, beta)?;
                c.check(z >= -1e-10, || format!("Z_N < 0 {tag} t={t} beta={beta}"));
                shells.push(z * ball.space().haar_sphere(beta));
            }
            let mass = crate::spectral::compensated_sum(shells);
            c.bound(&format!("normalization {tag} t={t}"), (mass - 1.0).abs(), 1e-10);
            if ball.cell_count() <= 256 {
                let series = ball.matrix_from_profile(&ball.transition_profile_series(t)?);
                let spectral = ball.transition_matrix(t, TransitionMethod::Spectral)?;
                let squaring = ball.transition_matrix(t, TransitionMethod::Squaring)?;
                c.bound(&format!("series vs spectral {tag} t={t}"), (&series - &spectral).amax(), 1e-8);
                c.bound(&format!("series vs squaring {tag} t={t}"), (&series - &squaring).amax(), 1e-8);
                c.bound(&format!("spectral vs squaring {tag} t={t}"), (&spectral - &squaring).amax(), 1e-9);
            }
        }
        if ball.cell_count() <= 256 {
            for t in [0.3, 1.5] {
                c.statistical(&format!("Monte Carlo TV {tag} t={t}"), seed, |s| {
                    Ok(sim::mc_transition_check(&ball, CellIndex(0), t, 100_000, s)?.z.abs())
                })?;
            }
        }
    }
    Ok(c.finish(3, "ball kernel three-way agreement"))
}

fn criterion_spectrum(preset: Preset) -> Result<CriterionResult> {
    let mut c = Checks::new();
    let two_state = BallConfig::new(spectrum(2, 1)?, 0, 1)?;
    let eig = two_state.generator()?.dense_eigenvalues();
    c.bound("two-state eigenvalues", (eig[0] + 1.0).abs().max(eig[1].abs()), 1e-9);
    for (p, n, big_n, big_k) in balls(preset) {
        let ball = BallConfig::new(spectrum(p, n)?, big_n, big_k)?;
        if ball.cell_count() > 256 {
            continue;
        }
        let dense = ball.generator()?.dense_eigenvalues();
        let decomposition = ball.spectral_decomposition()?;
        c.check(decomposition.total_multiplicity() == ball.cell_count() as u64, || {
            format!("multiplicities do not sum to M for p={p} n={n} N={big_n} K={big_k}")
        });
        let predicted = decomposition.sorted_eigenvalues();
        let diff = dense.iter().zip(&predicted).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        c.bound(&format!("eigenvalues p={p} n={n} N={big_n} K={big_k}"), diff, 1e-9);
    }
    Ok(c.finish(4, "generator spectrum"))
}

fn criterion_characters(preset: Preset, seed: u64) -> Result<CriterionResult> {
    let mut c = Checks::new();
    for (p, n, big_n, big_k) in balls(preset).into_iter().take(if preset == Preset::Quick { 1 } else { 3 }) {
        let ball = BallConfig::new(spectrum(p, n)?, big_n, big_k)?;
        let dual = ball.dual_grid()?;
        for k in (-big_n)..=big_k.min(1 - big_n + 1) {
            let z = frequency(dual, k)?;
            for t in [0.2, 1.0] {
                c.statistical(&format!("eta character p={p} n={n} N={big_n} k={k} t={t}"), seed, |s| {
                    Ok(sim::mc_character(&ball, &z, t, 100_000, s)?.z)
                })?;
            }
        }
        // ξ = η + large jumps up to p^{N'}; the dropped jumps change the
        // character by at most ϰ t λ_{N'}
        let cap = big_n + 12;
        let big_dual = Grid::new(ball.space(), big_k, cap)?;
        for k in (-big_n - 1)..=(1 - big_n) {
            let z = frequency(big_dual, k)?;
            let t = 0.5;
            c.statistical(&format!("xi character p={p} n={n} N={big_n} k={k}"), seed, |s| {
                Ok(sim::mc_character_xi(&ball, cap, &z, t, 100_000, s)?.full.z)
            })?;
        }
    }
    Ok(c.finish(5, "characteristic functions"))
}

fn criterion_pme(preset: Preset, seed: u64) -> Result<CriterionResult> {
    let mut c = Checks::new();
    let s = spectrum(2, 1)?;
    let ball = BallConfig::new(s.clone(), 1, 2)?;
    let grid = ball.grid();
    let trials = if preset == Preset::Quick { 100 } else { 200 };
    for m in [1.0, 2.0, 3.0] {
        let phi = Nonlinearity::power_law(1.0, m)?;
        let cfg = SolverConfig::new(0.05, 20)?;
        let constant = pme::solve_pme(&ball, &GridFunction::constant(grid, 0.8), &phi, &cfg, false)?;
        let drift = constant
            .states
            .iter()
            .flat_map(|z| z.values().iter().map(|v| (v - 0.8).abs()))
            .fold(0.0, f64::max);
        c.bound(&format!("constant data m={m}"), drift, 1e-12);

        let u0 = pme::random_data(grid, seed);
        let traj = pme::solve_pme(&ball, &u0, &phi, &cfg, false)?;
        for w in traj.states.windows(2) {
            c.bound(&format!("mass drift per step m={m}"), (w[1].mass() - w[0].mass()).abs(), 1e-12);
            c.check(w[1].linf_norm() <= w[0].linf_norm() + 1e-12, || format!("sup norm grew m={m}"));
        }

        let report = pme::accretivity_probe(&ball, &phi, &cfg, trials, 1.0, seed, 1e-10)?;
        c.check(report.violations == 0, || {
            format!("resolvent contraction m={m}: {} violations, max excess {:e}", report.violations, report.max_excess)
        });

        // comparison principle on ordered pairs
        let mut order_violations = 0;
        for i in 0..trials as u64 {
            let low = pme::random_data(grid, seed.wrapping_add(1000 + i));
            let bump = pme::random_data(grid, seed.wrapping_add(5000 + i));
            let high = GridFunction::new(grid, low.values().iter().zip(bump.values()).map(|(a, b)| a + b).collect())?;
            let zl = pme::step(&ball, &low, &phi, &cfg)?;
            let zh = pme::step(&ball, &high, &phi, &cfg)?;
            if zl.values().iter().zip(zh.values()).any(|(a, b)| a > &(b + 1e-12)) {
                order_violations += 1;
            }
        }
        c.check(order_violations == 0, || format!("comparison principle m={m}: {order_violations} violations"));

        // first order under Δt halving, against a fine reference
        let smooth = GridFunction::from_fn(grid, |cell| 1.0 + 0.5 * (cell.0 % 3) as f64)?;
        let horizon: f64 = 0.5;
        let reference = pme::solve_pme(&ball, &smooth, &phi, &SolverConfig::new(1e-4, 5000)?, false)?;
        let target = reference.states.last().expect("nonempty").clone();
        let mut errs = Vec::new();
        for dt in [0.02, 0.01, 0.005] {
            let steps = (horizon / dt).round() as usize;
            let t = pme::solve_pme(&ball, &smooth, &phi, &SolverConfig::new(dt, steps)?, false)?;
            errs.push(t.states.last().expect("nonempty").l1_distance(&target)?);
        }
        for w in errs.windows(2) {
            let ratio = w[0] / w[1];
            c.check((1.7..=2.3).contains(&ratio), || format!("halving ratio m={m}: {ratio:.3}"));
        }
    }

    // linear case against the exact semigroup, Δt = 1e-3 up to t = 1
    let linear_ball = BallConfig::new(s, 0, 2)?;
    let u0 = GridFunction::indicator(linear_ball.grid(), CellIndex(0));
    let traj = pme::solve_pme(&linear_ball, &u0, &Nonlinearity::linear(), &SolverConfig::new(1e-3, 1000)?, false)?;
    let mut worst: f64 = 0.0;
    for (t, z) in traj.times.iter().zip(&traj.states) {
        let p = linear_ball.transition_matrix(*t, TransitionMethod::Spectral)?;
        let exact = p.transpose() * DVector::from_column_slice(u0.values());
        for (a, b) in z.values().iter().zip(exact.iter()) {
            worst = worst.max((a - b).abs());
        }
    }
    c.bound("linear case vs exact semigroup at dt=1e-3", worst, 1e-6);
    Ok(c.finish(6, "porous medium solver"))
}

fn criterion_determinism(seed: u64) -> Result<CriterionResult> {
    let mut c = Checks::new();
    let ball = BallConfig::new(spectrum(3, 1)?, 1, 2)?;
    let table = sim::JumpRateTable::for_ball(&ball)?;
    let log = |threads: usize| -> Result<Vec<u8>> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::invalid(e.to_string()))?;
        pool.install(|| {
            let mut out = Vec::new();
            for i in 0..200 {
                sim::simulate_path(&ball, &table, CellIndex(0), 3.0, seed, i)?.write_csv_rows(&mut out)?;
            }
            let report = sim::mc_transition_check(&ball, CellIndex(0), 1.0, 20_000, seed)?;
            report.write_csv(&mut out)?;
            let traj = pme::solve_pme(
                &ball,
                &pme::random_data(ball.grid(), seed),
                &Nonlinearity::power_law(1.0, 2.0)?,
                &SolverConfig::new(0.05, 10)?,
                false,
            )?;
            traj.write_states_csv(&mut out)?;
            let g = ball.generator()?.apply(&pme::random_data(ball.grid(), seed + 1))?;
            for v in g.values() {
                writeln!(out, "{v:.16e}")?;
            }
            Ok(out)
        })
    };
    let a = log(2)?;
    let b = log(2)?;
    c.check(a == b, || "repeat run with the same seed and threads differs".into());
    let one = log(1)?;
    let many = log(4)?;
    c.check(numeric_close(&one, &many, 1e-12), || "outputs differ across thread counts beyond 1e-12".into());
    Ok(c.finish(7, "determinism"))
}

/// Compares two CSV byte streams field by field, numbers within `tol`.
pub fn numeric_close(a: &[u8], b: &[u8], tol: f64) -> bool {
    let (a, b) = (String::from_utf8_lossy(a), String::from_utf8_lossy(b));
    let fields = |s: &str| -> Vec<String> { s.split([',', '\n']).map(str::to_owned).collect() };
    let (fa, fb) = (fields(&a), fields(&b));
    fa.len() == fb.len()
        && fa.iter().zip(&fb).all(|(x, y)| match (x.parse::<f64>(), y.parse::<f64>()) {
            (Ok(u), Ok(v)) => (u - v).abs() <= tol * u.abs().max(1.0),
            _ => x == y,
        })
}

/// Runs every criterion.
pub fn run_suite(preset: Preset, seed: u64) -> Result<Vec<CriterionResult>> {
    Ok(vec![
        criterion_spectral(preset)?,
        criterion_heat_kernel(preset)?,
        criterion_ball(preset, seed)?,
        criterion_spectrum(preset)?,
        criterion_characters(preset, seed)?,
        criterion_pme(preset, seed)?,
        criterion_determinism(seed)?,
    ])
}

/// The pass/fail table printed by `padic verify`.
pub fn render_table(results: &[CriterionResult]) -> String {
    let mut out = String::from("criterion,name,checks,status\n");
    for r in results {
        let _ = writeln!(out, "{},{},{},{}", r.id, r.name, r.checks, r.outcome.label());
        for note in &r.notes {
            let _ = writeln!(out, "#   {note}");
        }
    }
    out
}
