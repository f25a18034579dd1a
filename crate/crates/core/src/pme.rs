// SPDX-License-Identifier: Apache-2.0

//! Implicit Euler for `∂_t u + A φ(u) = 0` on the cells of `B_N`, `A = -G`.
//!
//! Each step solves `z + Δt A φ(z) = f` in the variable `v = φ(z)`:
//! `β(v) + Δt A v = f` with `β = φ^{-1}`. The Jacobian `diag(β′(v)) + Δt A`
//! is symmetric positive definite wherever `β′ > 0`, so Newton steps use
//! preconditioned conjugate gradients on the hierarchical matvec.
//!
//! For `m > 1`, `β′(0) = ∞`. The equation is then approached through
//! `β(v) + εv + Δt A v = f` along a decreasing schedule of `ε` ending at zero.

use rand::Rng;
use rayon::prelude::*;

use crate::ball::{BallConfig, GeneratorMatrix, GridFunction};
use crate::error::{Error, Result};
use crate::padic::{CellIndex, Grid, NormExponent};
use crate::sim::stream_rng;
use crate::spectral::compensated_sum;

const PROBE_DOMAIN: u64 = 3;

/// Cap on `β′`, standing in for `+∞` at `v = 0`.
const DERIVATIVE_CAP: f64 = 1e200;

/// The constitutive function `φ`.
#[derive(Clone, Debug, PartialEq)]
pub enum Nonlinearity {
    /// `φ(s) = C s |s|^{m-1}`.
    PowerLaw { c: f64, m: f64 },
    /// Piecewise linear through `(s_i, φ_i)`, extended linearly past both ends.
    Table { s: Vec<f64>, phi: Vec<f64> },
}

impl Nonlinearity {
    pub fn power_law(c: f64, m: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::invalid(format!("phi_C: must be positive, got {c}")));
        }
        if !(m >= 1.0 && m.is_finite()) {
            return Err(Error::invalid(format!("phi_m: must be at least 1, got {m}")));
        }
        Ok(Nonlinearity::PowerLaw { c, m })
    }

    pub fn linear() -> Self {
        Nonlinearity::PowerLaw { c: 1.0, m: 1.0 }
    }

    pub fn table(s: Vec<f64>, phi: Vec<f64>) -> Result<Self> {
        if s.len() != phi.len() || s.len() < 2 {
            return Err(Error::invalid("phi table: need at least two (s, phi) pairs of equal length"));
        }
        if s.iter().chain(&phi).any(|x| !x.is_finite()) {
            return Err(Error::invalid("phi table: entries must be finite"));
        }
        if s.windows(2).any(|w| w[1] <= w[0]) || phi.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("phi table: s and phi must be strictly increasing"));
        }
        let table = Nonlinearity::Table { s, phi };
        if table.phi(0.0).abs() > 1e-14 {
            return Err(Error::invalid("phi table: need phi(0) = 0"));
        }
        Ok(table)
    }

    fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> (f64, f64) {
        let i = xs.partition_point(|&k| k <= x).clamp(1, xs.len() - 1);
        let slope = (ys[i] - ys[i - 1]) / (xs[i] - xs[i - 1]);
        (ys[i - 1] + slope * (x - xs[i - 1]), slope)
    }

    pub fn phi(&self, s: f64) -> f64 {
        match self {
            Nonlinearity::PowerLaw { c, m } => c * s.signum() * s.abs().powf(*m),
            Nonlinearity::Table { s: xs, phi } => Self::interpolate(xs, phi, s).0,
        }
    }

    /// `β = φ^{-1}`.
    pub fn beta(&self, v: f64) -> f64 {
        match self {
            Nonlinearity::PowerLaw { c, m } => v.signum() * (v.abs() / c).powf(1.0 / m),
            Nonlinearity::Table { s, phi } => Self::interpolate(phi, s, v).0,
        }
    }

    /// `β′(v)`, capped where it is infinite.
    pub fn beta_prime(&self, v: f64) -> f64 {
        match self {
            Nonlinearity::PowerLaw { c, m } => {
                if *m == 1.0 {
                    return 1.0 / c;
                }
                if v == 0.0 {
                    return DERIVATIVE_CAP;
                }
                ((v.abs() / c).powf(1.0 / m - 1.0) / (m * c)).min(DERIVATIVE_CAP)
            }
            Nonlinearity::Table { s, phi } => Self::interpolate(phi, s, v).1,
        }
    }

    /// Whether `β′` blows up at zero, which calls for `ε`-continuation.
    pub fn is_degenerate(&self) -> bool {
        matches!(self, Nonlinearity::PowerLaw { m, .. } if *m > 1.0)
    }

    /// `|φ(s)| ≤ C |s|^m` on the given samples.
    pub fn satisfies_growth(&self, c: f64, m: f64, samples: &[f64]) -> bool {
        samples
            .iter()
            .all(|&s| self.phi(s).abs() <= c * s.abs().powf(m) * (1.0 + 1e-12))
    }
}

/// Step size, step count and solver controls.
#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    pub dt: f64,
    pub steps: usize,
    /// Target for `‖z + Δt A φ(z) - f‖₁`, relative to `max(1, ‖f‖₁)`.
    pub tolerance: f64,
    pub max_newton: usize,
    /// Decreasing regularization levels, ending at zero.
    pub epsilon_schedule: Vec<f64>,
    /// Smallest line-search step before Newton counts as stalled.
    pub min_damping: f64,
    pub max_linear: usize,
    pub max_sweeps: usize,
}

impl SolverConfig {
    pub fn new(dt: f64, steps: usize) -> Result<Self> {
        let cfg = SolverConfig {
            dt,
            steps,
            tolerance: 1e-13,
            max_newton: 60,
            epsilon_schedule: vec![1e-2, 1e-4, 1e-6, 0.0],
            min_damping: 1.0 / 1024.0,
            max_linear: 2000,
            max_sweeps: 20000,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::invalid(format!("dt: must be positive, got {}", self.dt)));
        }
        if self.steps == 0 {
            return Err(Error::invalid("steps: need at least one step"));
        }
        if !(self.tolerance > 0.0) || !(self.min_damping > 0.0 && self.min_damping <= 1.0) {
            return Err(Error::invalid("tolerance and damping must be positive"));
        }
        let e = &self.epsilon_schedule;
        if e.is_empty() || e.iter().any(|x| !(*x >= 0.0)) || e.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::invalid("epsilon schedule: must be nonnegative and strictly decreasing"));
        }
        Ok(())
    }
}

/// Implicit Euler iterates `z_0 = u_0, z_1, …`.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<GridFunction>,
    /// `‖z_i - z_{i-1} + Δt A φ(z_i)‖₁` per step.
    pub residuals: Vec<f64>,
    /// `max(Δt, Σ residuals)`: the accuracy of the iterates as an ε-approximate solution.
    pub epsilon: f64,
    /// `max_i ‖z_Δt(t_i) - z_{Δt/2}(t_i)‖₁`, when the half-step run was made.
    pub halving_difference: Option<f64>,
}

impl Trajectory {
    /// Rows `t,cell,value`.
    pub fn write_states_csv(&self, out: &mut impl std::io::Write) -> std::io::Result<()> {
        writeln!(out, "t,cell,value")?;
        for (t, z) in self.times.iter().zip(&self.states) {
            for (c, v) in z.values().iter().enumerate() {
                writeln!(out, "{t:.16e},{c},{v:.16e}")?;
            }
        }
        Ok(())
    }

    /// Rows `t,mass,linf,l1_diff_prev`.
    pub fn write_summary_csv(&self, out: &mut impl std::io::Write) -> std::io::Result<()> {
        writeln!(out, "t,mass,linf,l1_diff_prev")?;
        for (i, (t, z)) in self.times.iter().zip(&self.states).enumerate() {
            let diff = if i == 0 { 0.0 } else { z.l1_distance(&self.states[i - 1]).unwrap_or(f64::NAN) };
            writeln!(out, "{t:.16e},{:.16e},{:.16e},{diff:.16e}", z.mass(), z.linf_norm())?;
        }
        Ok(())
    }
}

/// Operator `A = -G` with its diagonal.
struct Operator {
    g: GeneratorMatrix,
    diag: f64,
    measure: f64,
}

impl Operator {
    fn new(ball: &BallConfig) -> Result<Self> {
        let g = ball.generator()?;
        let diag = g.total_rate();
        Ok(Operator {
            measure: ball.grid().cell_measure(),
            g,
            diag,
        })
    }

    fn apply(&self, v: &[f64]) -> Vec<f64> {
        self.g.apply_slice(v).into_iter().map(|x| -x).collect()
    }

    fn l1(&self, r: &[f64]) -> f64 {
        self.measure * compensated_sum(r.iter().map(|x| x.abs()))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    compensated_sum(a.iter().zip(b).map(|(x, y)| x * y))
}

/// Residual `β(v) + εv + Δt A v - f`.
fn residual(op: &Operator, phi: &Nonlinearity, v: &[f64], f: &[f64], eps: f64, dt: f64) -> Vec<f64> {
    let av = op.apply(v);
    v.par_iter()
        .zip(&av)
        .zip(f)
        .map(|((&vi, &ai), &fi)| phi.beta(vi) + eps * vi + dt * ai - fi)
        .collect()
}

/// Solves `(diag(d) + Δt A) x = b` by Jacobi-preconditioned CG.
fn pcg(op: &Operator, d: &[f64], dt: f64, b: &[f64], max_iter: usize) -> Option<Vec<f64>> {
    let precond: Vec<f64> = d.iter().map(|di| 1.0 / (di + dt * op.diag)).collect();
    let matvec = |x: &[f64]| -> Vec<f64> {
        let ax = op.apply(x);
        x.iter().zip(&ax).zip(d).map(|((xi, ai), di)| di * xi + dt * ai).collect()
    };
    let b_norm = dot(b, b).sqrt();
    let mut x = vec![0.0; b.len()];
    if b_norm == 0.0 {
        return Some(x);
    }
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&precond).map(|(a, p)| a * p).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    for _ in 0..max_iter {
        let ap = matvec(&p);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return None;
        }
        let alpha = rz / pap;
        for i in 0..x.len() {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        if dot(&r, &r).sqrt() <= 1e-15 * b_norm {
            return Some(x);
        }
        z = r.iter().zip(&precond).map(|(a, p)| a * p).collect();
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..p.len() {
            p[i] = z[i] + beta * p[i];
        }
    }
    Some(x)
}

/// Damped Newton for one `ε`; returns the final residual norm.
#[allow(clippy::too_many_arguments)]
fn newton(
    op: &Operator,
    phi: &Nonlinearity,
    v: &mut [f64],
    f: &[f64],
    eps: f64,
    dt: f64,
    target: f64,
    cfg: &SolverConfig,
) -> f64 {
    let mut r = residual(op, phi, v, f, eps, dt);
    let mut norm = op.l1(&r);
    for _ in 0..cfg.max_newton {
        if norm <= target {
            break;
        }
        let d: Vec<f64> = v.iter().map(|&vi| phi.beta_prime(vi) + eps).collect();
        let rhs: Vec<f64> = r.iter().map(|x| -x).collect();
        let Some(delta) = pcg(op, &d, dt, &rhs, cfg.max_linear) else {
            return norm;
        };
        let mut step = 1.0;
        let mut accepted = false;
        while step >= cfg.min_damping {
            let trial: Vec<f64> = v.iter().zip(&delta).map(|(a, b)| a + step * b).collect();
            let r_trial = residual(op, phi, &trial, f, eps, dt);
            let n_trial = op.l1(&r_trial);
            if n_trial < norm {
                v.copy_from_slice(&trial);
                r = r_trial;
                norm = n_trial;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    norm
}

/// Scalar root of `β(x) + (ε + Δt a_d) x = rhs`, increasing in `x`.
fn scalar_solve(phi: &Nonlinearity, slope: f64, rhs: f64) -> f64 {
    let g = |x: f64| phi.beta(x) + slope * x - rhs;
    let (mut lo, mut hi) = (-1.0f64, 1.0f64);
    while g(lo) > 0.0 {
        lo *= 2.0;
    }
    while g(hi) < 0.0 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) > 0.0 { hi = mid } else { lo = mid }
    }
    0.5 * (lo + hi)
}

/// Nonlinear Gauss–Seidel; each cell update is a monotone scalar solve.
#[allow(clippy::too_many_arguments)]
fn gauss_seidel(
    op: &Operator,
    grid: Grid,
    phi: &Nonlinearity,
    v: &mut [f64],
    f: &[f64],
    eps: f64,
    dt: f64,
    target: f64,
    cfg: &SolverConfig,
) -> f64 {
    let m = v.len();
    let rate = |a: usize, b: usize| match grid.cell_distance(CellIndex(a as u64), CellIndex(b as u64)) {
        NormExponent::Finite(d) => op.g.pair_rate(d),
        NormExponent::BelowResolution => 0.0,
    };
    let mut norm = op.l1(&residual(op, phi, v, f, eps, dt));
    for _ in 0..cfg.max_sweeps {
        if norm <= target {
            break;
        }
        for a in 0..m {
            let coupling = compensated_sum((0..m).filter(|&b| b != a).map(|b| rate(a, b) * v[b]));
            v[a] = scalar_solve(phi, eps + dt * op.diag, f[a] + dt * coupling);
        }
        norm = op.l1(&residual(op, phi, v, f, eps, dt));
    }
    norm
}

/// Solves `z + Δt A φ(z) = f` and returns `z`.
pub fn resolvent_solve(
    ball: &BallConfig,
    f: &GridFunction,
    dt: f64,
    phi: &Nonlinearity,
    cfg: &SolverConfig,
) -> Result<GridFunction> {
    let op = Operator::new(ball)?;
    let v0: Vec<f64> = f.values().iter().map(|&x| phi.phi(x)).collect();
    let (z, _) = resolvent_with(&op, ball, f, v0, dt, phi, cfg)?;
    Ok(z)
}

fn resolvent_with(
    op: &Operator,
    ball: &BallConfig,
    f: &GridFunction,
    mut v: Vec<f64>,
    dt: f64,
    phi: &Nonlinearity,
    cfg: &SolverConfig,
) -> Result<(GridFunction, f64)> {
    if f.grid() != ball.grid() {
        return Err(Error::Mismatch("data and ball live on different grids".into()));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid(format!("dt: must be positive, got {dt}")));
    }
    let fv = f.values();
    let target = cfg.tolerance * f.l1_norm().max(1.0);
    let schedule: Vec<f64> = if phi.is_degenerate() {
        cfg.epsilon_schedule.clone()
    } else {
        vec![*cfg.epsilon_schedule.last().expect("validated schedule")]
    };
    let last = schedule.len() - 1;
    let mut norm = f64::INFINITY;
    for (i, &eps) in schedule.iter().enumerate() {
        // intermediate levels only need to land near the next one
        let level_target = if i == last { target } else { target.max(1e-8) };
        norm = newton(op, phi, &mut v, fv, eps, dt, level_target, cfg);
        if norm > level_target || !norm.is_finite() {
            if !norm.is_finite() {
                v = fv.iter().map(|&x| phi.phi(x)).collect();
            }
            norm = gauss_seidel(op, ball.grid(), phi, &mut v, fv, eps, dt, level_target, cfg);
        }
    }
    if !(norm <= target) {
        return Err(Error::NonConvergence {
            residual: norm,
            iterations: cfg.max_newton,
            detail: format!("resolvent with dt = {dt} after continuation and Gauss-Seidel fallback"),
        });
    }
    let z = GridFunction::new(ball.grid(), v.iter().map(|&x| phi.beta(x)).collect())?;
    Ok((z, norm))
}

/// One implicit Euler step from `z_prev`.
pub fn step(
    ball: &BallConfig,
    z_prev: &GridFunction,
    phi: &Nonlinearity,
    cfg: &SolverConfig,
) -> Result<GridFunction> {
    resolvent_solve(ball, z_prev, cfg.dt, phi, cfg)
}

fn run(ball: &BallConfig, u0: &GridFunction, dt: f64, steps: usize, phi: &Nonlinearity, cfg: &SolverConfig) -> Result<Trajectory> {
    let op = Operator::new(ball)?;
    let mut times = vec![0.0];
    let mut states = vec![u0.clone()];
    let mut residuals = Vec::with_capacity(steps);
    let mut v: Vec<f64> = u0.values().iter().map(|&x| phi.phi(x)).collect();
    for i in 1..=steps {
        let prev = states.last().expect("nonempty");
        let (z, res) = resolvent_with(&op, ball, prev, v.clone(), dt, phi, cfg)?;
        v = z.values().iter().map(|&x| phi.phi(x)).collect();
        times.push(i as f64 * dt);
        states.push(z);
        residuals.push(res);
    }
    let epsilon = dt.max(residuals.iter().sum());
    Ok(Trajectory {
        times,
        states,
        residuals,
        epsilon,
        halving_difference: None,
    })
}

/// Implicit Euler up to `cfg.steps · cfg.dt`. With `compare_half`, a run at
/// `Δt/2` is made as well and the largest `L¹` gap at common times reported.
pub fn solve_pme(
    ball: &BallConfig,
    u0: &GridFunction,
    phi: &Nonlinearity,
    cfg: &SolverConfig,
    compare_half: bool,
) -> Result<Trajectory> {
    cfg.validate()?;
    let mut traj = run(ball, u0, cfg.dt, cfg.steps, phi, cfg)?;
    if compare_half {
        let fine = run(ball, u0, cfg.dt / 2.0, 2 * cfg.steps, phi, cfg)?;
        let mut worst: f64 = 0.0;
        for (i, z) in traj.states.iter().enumerate() {
            worst = worst.max(z.l1_distance(&fine.states[2 * i])?);
        }
        traj.halving_difference = Some(worst);
    }
    Ok(traj)
}

/// Result of random resolvent contraction trials.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AccretivityReport {
    pub trials: usize,
    /// Largest `‖R f - R f̃‖₁ - ‖f - f̃‖₁`.
    pub max_excess: f64,
    /// Trials whose excess is above the tolerance.
    pub violations: usize,
    /// Largest `‖Δt A φ(R f)‖₁ / ‖f‖₁`; at most 2 by contraction against zero.
    pub max_flux_ratio: f64,
}

/// Random pairs with values in `[-amplitude, amplitude]` fed through the resolvent.
pub fn accretivity_probe(
    ball: &BallConfig,
    phi: &Nonlinearity,
    cfg: &SolverConfig,
    trials: usize,
    amplitude: f64,
    seed: u64,
    tol: f64,
) -> Result<AccretivityReport> {
    let op = Operator::new(ball)?;
    let grid = ball.grid();
    let outcomes: Vec<(f64, f64)> = (0..trials as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, PROBE_DOMAIN, i);
            let mut draw = || -> Result<GridFunction> {
                GridFunction::new(grid, (0..grid.cell_count()).map(|_| rng.random_range(-amplitude..=amplitude)).collect())
            };
            let f = draw()?;
            let g = draw()?;
            let rf = resolvent_solve(ball, &f, cfg.dt, phi, cfg)?;
            let rg = resolvent_solve(ball, &g, cfg.dt, phi, cfg)?;
            let excess = rf.l1_distance(&rg)? - f.l1_distance(&g)?;
            let flux: Vec<f64> = op
                .apply(&rf.values().iter().map(|&x| phi.phi(x)).collect::<Vec<_>>())
                .into_iter()
                .map(|x| cfg.dt * x)
                .collect();
            Ok((excess, op.l1(&flux) / f.l1_norm()))
        })
        .collect::<Result<_>>()?;
    Ok(AccretivityReport {
        trials,
        max_excess: outcomes.iter().map(|o| o.0).fold(f64::NEG_INFINITY, f64::max),
        violations: outcomes.iter().filter(|o| o.0 > tol).count(),
        max_flux_ratio: outcomes.iter().map(|o| o.1).fold(0.0, f64::max),
    })
}

/// Built-in initial data.
pub fn delta(grid: Grid) -> GridFunction {
    let mut u = GridFunction::constant(grid, 0.0).into_values();
    u[0] = 1.0 / grid.cell_measure();
    GridFunction::new(grid, u).expect("finite")
}

/// Indicator of `‖x‖ ≤ p^e`.
pub fn ball_indicator(grid: Grid, e: i64) -> GridFunction {
    GridFunction::from_fn(grid, |c| match grid.cell_norm(c) {
        NormExponent::Finite(d) if d > e => 0.0,
        _ => 1.0,
    })
    .expect("finite")
}

/// Values uniform in `[0, 1)` from the given seed.
pub fn random_data(grid: Grid, seed: u64) -> GridFunction {
    let mut rng = stream_rng(seed, PROBE_DOMAIN, u64::MAX / 4);
    GridFunction::new(grid, (0..grid.cell_count()).map(|_| rng.random::<f64>()).collect()).expect("finite")
}
