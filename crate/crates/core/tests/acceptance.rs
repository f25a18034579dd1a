// SPDX-License-Identifier: Apache-2.0

//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Every reference value is produced here from first principles: symbols by
//! summing over cells or spheres, the heat kernel by Fourier inversion sphere
//! by sphere, the ball chain from a generator assembled cell pair by cell pair
//! and exponentiated with nalgebra. The library is only ever the thing under
//! test.

use std::f64::consts::PI;
use std::process::Command;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use padic_diffusion::pme::{self, Nonlinearity, SolverConfig};
use padic_diffusion::sim::{self, CharacterEstimate};
use padic_diffusion::{
    BallConfig, CellIndex, Grid, GridFunction, HeatKernel, KernelParams, PAdicPoint, SeriesTolerance, Spectrum,
    TransitionMethod,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEED: u64 = 20_240_611;
/// Second attempt for a statistic that lands between 3σ and 4σ.
const RERUN_SEED: u64 = SEED ^ 0x5bd1_e995;
const MC_PATHS: usize = 100_000;

// ---------------------------------------------------------------- reporting

struct Criterion {
    id: u32,
    name: &'static str,
    tolerance: &'static str,
    checks: usize,
    failures: Vec<String>,
}

impl Criterion {
    fn new(id: u32, name: &'static str, tolerance: &'static str) -> Self {
        Criterion {
            id,
            name,
            tolerance,
            checks: 0,
            failures: Vec::new(),
        }
    }

    fn check(&mut self, ok: bool, what: impl FnOnce() -> String) {
        self.checks += 1;
        if !ok {
            self.failures.push(what());
        }
    }

    /// `|got - want| ≤ tol · scale`.
    fn close(&mut self, what: &str, got: f64, want: f64, tol: f64, scale: f64) {
        let diff = (got - want).abs();
        self.check(diff <= tol * scale && got.is_finite(), || {
            format!("{what}: got {got:.17e}, want {want:.17e}, |diff| = {diff:.3e} > {:.3e}", tol * scale)
        });
    }

    /// A z-like statistic with the 3σ/4σ policy: pass at ≤ 3, one re-run with
    /// a fresh seed between 3 and 4, fail beyond.
    fn statistical(&mut self, what: &str, stat: impl Fn(u64) -> f64) {
        let first = stat(SEED);
        let ok = if first <= 3.0 {
            true
        } else if first <= 4.0 {
            let second = stat(RERUN_SEED);
            println!("    note: {what} at {first:.2}σ, re-run gives {second:.2}σ");
            second <= 3.0
        } else {
            false
        };
        self.check(ok, || format!("{what}: {first:.2}σ"));
    }

    fn report(&self) -> bool {
        let pass = self.failures.is_empty();
        println!(
            "criterion {} {:<36} {}  ({} checks; {})",
            self.id,
            self.name,
            if pass { "PASS" } else { "FAIL" },
            self.checks,
            self.tolerance
        );
        for f in self.failures.iter().take(6) {
            println!("    {f}");
        }
        if self.failures.len() > 6 {
            println!("    ... {} more", self.failures.len() - 6);
        }
        pass
    }
}

// ------------------------------------------------------------------ oracles

fn pw(p: u32, e: i64) -> f64 {
    (p as f64).powi(e as i32)
}

/// Kahan summation, independent of the library's accumulator.
fn kahan(values: impl IntoIterator<Item = f64>) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for v in values {
        let y = v - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    sum
}

/// Power-law model `w(r) = c r^α` with jump intensity `ϰ/w`.
#[derive(Clone, Copy, Debug)]
struct Law {
    p: u32,
    n: u32,
    alpha: f64,
    c: f64,
    kappa: f64,
}

impl Law {
    fn standard(p: u32, n: u32) -> Self {
        Law {
            p,
            n,
            alpha: 2.0 * n as f64,
            c: 1.0,
            kappa: 1.0,
        }
    }

    fn n_i(&self) -> i64 {
        self.n as i64
    }

    fn w(&self, j: i64) -> f64 {
        self.c * (self.p as f64).powf(self.alpha * j as f64)
    }

    fn sphere(&self, j: i64) -> f64 {
        (1.0 - pw(self.p, -self.n_i())) * pw(self.p, self.n_i() * j)
    }

    /// `Σ_{j > big_j} |S_j| / w(p^j)`, summed smallest first.
    fn tail(&self, big_j: i64) -> f64 {
        // |S_j| / w(p^j) = (1 - p^{-n}) q^j / c with q = p^{n-α}; powers of q only underflow
        let q = (self.p as f64).powf(self.n as f64 - self.alpha);
        let frac = 1.0 - pw(self.p, -self.n_i());
        kahan((big_j + 1..big_j + 600).rev().map(|j| frac * q.powf(j as f64) / self.c))
    }

    /// `A_w` at `‖z‖ = p^{-γ}`: spheres up to `p^γ` see no oscillation, the
    /// sphere `p^{γ+1}` gives `p^{n(γ+1)}` (its character mean is `-1/(p^n-1)`),
    /// and spheres further out have mean zero.
    fn a_w(&self, gamma: i64) -> f64 {
        pw(self.p, self.n_i() * (gamma + 1)) / self.w(gamma + 1) + self.tail(gamma + 1)
    }

    fn lambda(&self, big_n: i64) -> f64 {
        self.tail(big_n)
    }

    fn spectrum(&self) -> Spectrum {
        let params = KernelParams::power_law(self.p, self.n, self.alpha, self.c, self.kappa).expect("valid law");
        Spectrum::new(params, SeriesTolerance::default())
    }

    fn ball(&self, big_n: i64, big_k: i64) -> BallConfig {
        BallConfig::new(self.spectrum(), big_n, big_k).expect("small ball")
    }
}

fn valuation(mut a: u64, p: u64) -> i64 {
    let mut v = 0;
    while a.is_multiple_of(p) {
        a /= p;
        v += 1;
    }
    v
}

/// `∫_{B_J} (1 - cos 2π{z·x_1}) / w(‖x‖) dx` for `z = p^γ e_1`, summed over the
/// cells of radius `p^{-L}`. With `L ≥ -γ` the integrand is constant on each
/// cell away from the origin and vanishes on the origin's cell, so the sum is
/// exact.
fn cell_sum(law: &Law, gamma: i64, big_j: i64, big_l: i64) -> f64 {
    assert!(big_l >= -gamma && big_j + big_l >= 1);
    let p = law.p as u64;
    let per = p.pow((big_j + big_l) as u32);
    let total = per.pow(law.n);
    let cell = pw(law.p, -law.n_i() * big_l);
    let period = if big_j > gamma { p.pow((big_j - gamma) as u32) } else { 1 };
    kahan((1..total).map(|idx| {
        let mut rest = idx;
        let mut v_min = i64::MAX;
        let mut first = 0;
        for i in 0..law.n {
            let a = rest % per;
            rest /= per;
            if i == 0 {
                first = a;
            }
            if a != 0 {
                v_min = v_min.min(valuation(a, p));
            }
        }
        // x_i = a_i p^{-J}; z x_1 = a_1 p^{γ-J}
        let phase = (first % period) as f64 / period as f64;
        (1.0 - (2.0 * PI * phase).cos()) * cell / law.w(big_j - v_min)
    }))
}

/// `Z(t, x)` at `‖x‖ = p^β` by inverting the symbol sphere by sphere.
fn z_oracle(law: &Law, t: f64, beta: i64) -> f64 {
    let e = |j: i64| (-law.kappa * t * law.a_w(-j)).exp();
    let inner = kahan(((-beta - 300)..=-beta).map(|j| law.sphere(j) * e(j)));
    inner - pw(law.p, -law.n_i() * beta) * e(1 - beta)
}

/// Cells of `B_N` at resolution `p^{-K}`, index digits coarsest block first.
fn ultrametric_distance(law: &Law, big_n: i64, big_k: i64, a: usize, b: usize) -> Option<i64> {
    let blocks = (big_n + big_k) as u32;
    let base = (law.p as usize).pow(law.n);
    (0..blocks).find_map(|m| {
        let scale = base.pow(blocks - 1 - m);
        ((a / scale) % base != (b / scale) % base).then_some(big_n - m as i64)
    })
}

/// Generator of the chain on `B_N / B_{-K}`: a jump into a given cell at
/// distance `p^d` has rate `ϰ |cell| / w(p^d)`.
fn generator_oracle(law: &Law, big_n: i64, big_k: i64) -> DMatrix<f64> {
    let m = (law.p as usize).pow(law.n * (big_n + big_k) as u32);
    let cell = pw(law.p, -law.n_i() * big_k);
    let mut g = DMatrix::zeros(m, m);
    for a in 0..m {
        for b in 0..m {
            if let Some(d) = ultrametric_distance(law, big_n, big_k, a, b) {
                g[(a, b)] = law.kappa * cell / law.w(d);
            }
        }
        g[(a, a)] = -kahan((0..m).filter(|&b| b != a).map(|b| g[(a, b)]));
    }
    g
}

/// Eigenvalues `{0} ∪ {ϰ(λ_N - A_w(p^k))}` with multiplicity `(1-p^{-n}) p^{n(k+N)}`.
fn eigen_oracle(law: &Law, big_n: i64, big_k: i64) -> Vec<f64> {
    let mut out = vec![0.0];
    for k in (1 - big_n)..=big_k {
        let mult = (law.p as u64).pow(law.n * (k + big_n) as u32) / (law.p as u64).pow(law.n)
            * ((law.p as u64).pow(law.n) - 1);
        let value = law.kappa * (law.lambda(big_n) - law.a_w(-k));
        out.extend(std::iter::repeat_n(value, mult as usize));
    }
    out.sort_by(f64::total_cmp);
    out
}

fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).abs().max()
}

fn frequency(grid: Grid, k: i64) -> PAdicPoint {
    let mut a = vec![0u128; grid.space().n() as usize];
    a[0] = (grid.space().p() as u128).pow((grid.ball_exp() - k) as u32);
    PAdicPoint::from_scaled_integers(grid, &a).expect("frequency on grid")
}

fn random_fn(grid: Grid, rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> GridFunction {
    GridFunction::new(grid, (0..grid.cell_count()).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

fn character_z(est: &CharacterEstimate, want: f64) -> f64 {
    let z = |diff: f64, se: f64| {
        if diff.abs() <= 1e-12 {
            0.0
        } else if se > 0.0 {
            diff.abs() / se
        } else {
            f64::INFINITY
        }
    };
    z(est.mean.re - want, est.std_err.0).max(z(est.mean.im, est.std_err.1))
}

// ---------------------------------------------------------------- criteria

fn spectral_formulas() -> Criterion {
    let mut c = Criterion::new(1, "spectral formulas", "symbols 1e-12 rel, ball integral 1e-10");
    let laws = [
        (Law::standard(2, 1), 5, 6),
        (Law::standard(3, 1), 3, 4),
        (Law::standard(2, 2), 2, 3),
        (Law::standard(3, 2), 1, 2),
        (Law { alpha: 3.0, c: 0.7, ..Law::standard(2, 1) }, 5, 6),
        (Law { alpha: 2.5, c: 1.3, kappa: 2.0, ..Law::standard(3, 1) }, 3, 4),
    ];
    for (law, extra_out, extra_in) in laws {
        let s = law.spectrum();
        for gamma in -3..=3 {
            let big_j = gamma + 1 + extra_out;
            let brute = cell_sum(&law, gamma, big_j, -gamma + extra_in) + law.tail(big_j);
            let lib = s.a_w(gamma).unwrap();
            let what = format!("A_w {law:?} gamma={gamma}");
            c.close(&format!("{what} vs cell sum"), lib, brute, 1e-12, brute);
            c.close(&format!("{what} vs sphere sum"), lib, law.a_w(gamma), 1e-12, brute);
            c.close(&format!("{what} closed form"), s.a_w_closed_form(gamma).unwrap(), brute, 1e-12, brute);
        }
        for big_n in -2..=3 {
            let want = law.lambda(big_n);
            c.close(&format!("lambda {law:?} N={big_n}"), s.lambda(big_n).unwrap(), want, 1e-12, want);
            c.close(
                &format!("lambda closed form {law:?} N={big_n}"),
                s.lambda_closed_form(big_n).unwrap(),
                want,
                1e-12,
                want,
            );
        }
        for big_n in -1..=2 {
            for gamma in (big_n - 3)..=(big_n + 2) {
                let big_l = (-gamma).max(1 - big_n) + 1;
                let brute = cell_sum(&law, gamma, big_n, big_l);
                let lib = s.i_ball(gamma, big_n);
                let what = format!("I_ball {law:?} N={big_n} gamma={gamma}");
                c.close(&what, lib, brute, 1e-10, brute.max(1.0));
                if gamma >= big_n {
                    c.check(lib == 0.0 && brute.abs() <= 1e-14, || format!("{what}: not zero ({lib}, {brute})"));
                } else {
                    let piece = law.a_w(gamma) - law.lambda(big_n);
                    c.close(&format!("{what} = A_w - lambda"), lib, piece, 1e-10, piece.max(1.0));
                }
            }
        }
    }
    c
}

fn heat_kernel() -> Criterion {
    let mut c = Criterion::new(
        2,
        "heat kernel",
        ">= -1e-10, mass 1e-10, CK 1e-8, dt 1e-6 rel, small-t constant 5%",
    );
    for law in [Law::standard(2, 1), Law::standard(3, 1), Law::standard(2, 2)] {
        let k = HeatKernel::new(law.spectrum());
        let n = law.n_i();
        for t in [0.01, 0.1, 1.0, 10.0] {
            // against Fourier inversion
            for beta in -3..=3 {
                let want = z_oracle(&law, t, beta);
                let scale = want.abs().max(1e-6 * pw(law.p, -n * beta));
                c.close(&format!("Z {law:?} t={t} beta={beta}"), k.z_full(t, beta).unwrap(), want, 1e-10, scale);
            }
            // normalization over spheres, centre ball of measure p^{n(lo-1)} at Z(t,0)
            let (lo, hi) = (-80 / n, 150 / n);
            let shells = kahan((lo..=hi).rev().map(|b| k.z_full(t, b).unwrap() * law.sphere(b)));
            let mass = shells + k.z_origin(t).unwrap() * pw(law.p, n * (lo - 1));
            c.close(&format!("mass {law:?} t={t}"), mass, 1.0, 1e-10, 1.0);
        }
        for t in [1e-3, 0.01, 0.1, 1.0, 10.0, 100.0] {
            for beta in -12..=12 {
                let z = k.z_full(t, beta).unwrap();
                c.check(z >= -1e-10, || format!("Z < 0: {law:?} t={t} beta={beta}: {z}"));
                let ub = k.upper_bound(t, beta);
                c.check(z <= ub, || format!("bound: {law:?} t={t} beta={beta}: {z} > {ub}"));
            }
        }
        for (t, s) in [(0.1, 0.2), (0.5, 0.5), (1.0, 2.0)] {
            for beta in -3..=3 {
                let ck = k.chapman_kolmogorov_check(t, s, beta).unwrap();
                c.check(ck.residual <= 1e-8, || {
                    format!("CK {law:?} t={t} s={s} beta={beta}: residual {:.3e}", ck.residual)
                });
                let want = z_oracle(&law, t + s, beta);
                c.close(
                    &format!("CK convolution {law:?} t={t} s={s} beta={beta}"),
                    ck.rhs,
                    want,
                    1e-8,
                    want.abs().max(1e-6 * pw(law.p, -n * beta)),
                );
            }
        }
        for t in [0.01, 0.1, 1.0, 10.0] {
            let h = 1e-5 * t;
            for beta in -3..=3 {
                let fd = (k.z_full(t + h, beta).unwrap() - k.z_full(t - h, beta).unwrap()) / (2.0 * h);
                let d = k.dt_z(t, beta).unwrap();
                c.close(&format!("dtZ {law:?} t={t} beta={beta}"), d, fd, 1e-6, d.abs());
            }
        }
        for beta in 0..=2 {
            let ratio = |t: f64| k.z_full(t, beta).unwrap() * law.w(beta) / (law.kappa * t);
            let (c3, c4) = ((ratio(1e-3) - 1.0).abs() / 1e-3, (ratio(1e-4) - 1.0).abs() / 1e-4);
            c.check(c3.is_finite() && (c4 / c3 - 1.0).abs() <= 0.05, || {
                format!("small-t {law:?} beta={beta}: C(1e-3) = {c3:.6}, C(1e-4) = {c4:.6}")
            });
        }
    }
    c
}

fn ball_kernel() -> Criterion {
    let mut c = Criterion::new(
        3,
        "ball kernel three-way agreement",
        "entries 1e-8, mass and c, c' 1e-10, MC TV within 3σ",
    );
    let configs = [
        (Law::standard(2, 1), 1, 3),
        (Law::standard(3, 1), 0, 2),
        (Law::standard(2, 2), 1, 1),
        (Law::standard(3, 2), 0, 2),
        (Law::standard(2, 1), 2, 4),
        (Law { alpha: 3.0, c: 0.7, kappa: 1.5, ..Law::standard(3, 1) }, 1, 2),
    ];
    for (law, big_n, big_k) in configs {
        let ball = law.ball(big_n, big_k);
        let g = generator_oracle(&law, big_n, big_k);
        let tag = format!("p={} n={} N={big_n} K={big_k}", law.p, law.n);
        for t in [0.05, 0.5, 2.0, 10.0] {
            let exact = (&g * t).exp();
            let spectral = ball.transition_matrix(t, TransitionMethod::Spectral).unwrap();
            let squaring = ball.transition_matrix(t, TransitionMethod::Squaring).unwrap();
            let series = ball.matrix_from_profile(&ball.transition_profile_series(t).unwrap());
            for (name, m) in [("spectral", &spectral), ("squaring", &squaring), ("series", &series)] {
                let d = max_abs_diff(m, &exact);
                c.check(d <= 1e-8, || format!("{name} vs exp(tG) {tag} t={t}: {d:.3e}"));
            }
            for row in spectral.row_iter() {
                c.close(&format!("row sum {tag} t={t}"), row.sum(), 1.0, 1e-12, 1.0);
            }
            c.close(
                &format!("normalization {tag} t={t}"),
                ball.z_ball_center_mass(t, big_n).unwrap(),
                1.0,
                1e-10,
                1.0,
            );
            for beta in -40..=big_n {
                let z = ball.z_ball(t, beta).unwrap();
                c.check(z >= -1e-10, || format!("Z_N < 0 {tag} t={t} beta={beta}: {z}"));
            }
        }
        c.close(&format!("c(0) {tag}"), ball.c_t(0.0).unwrap(), 0.0, 1e-10, 1.0);
        c.close(&format!("c'(0) {tag}"), ball.c_prime(0.0).unwrap(), 0.0, 1e-10, 1.0);
    }
    for (law, big_n, big_k) in [(Law::standard(2, 1), 1, 2), (Law::standard(3, 1), 0, 2)] {
        let ball = law.ball(big_n, big_k);
        let t = 1.0;
        let exact = (generator_oracle(&law, big_n, big_k) * t).exp();
        let row: Vec<f64> = exact.row(0).iter().copied().collect();
        c.statistical(&format!("MC TV p={} N={big_n} K={big_k}", law.p), |seed| {
            let report = sim::mc_transition_check(&ball, CellIndex(0), t, MC_PATHS, seed).unwrap();
            let tv = 0.5 * report.density.probabilities().iter().zip(&row).map(|(a, b)| (a - b).abs()).sum::<f64>();
            (tv - report.null_mean) / report.null_sd
        });
    }
    c
}

fn generator_spectrum() -> Criterion {
    let mut c = Criterion::new(4, "generator spectrum", "sorted eigenvalues 1e-9");
    let configs = [
        (Law::standard(2, 1), 0, 1),
        (Law::standard(2, 1), 1, 3),
        (Law::standard(3, 1), 0, 2),
        (Law::standard(3, 1), 1, 3),
        (Law::standard(2, 2), 1, 1),
        (Law::standard(3, 2), 0, 2),
        (Law { alpha: 2.5, c: 1.3, kappa: 2.0, ..Law::standard(2, 1) }, 2, 3),
    ];
    for (law, big_n, big_k) in configs {
        let ball = law.ball(big_n, big_k);
        let want = eigen_oracle(&law, big_n, big_k);
        let mut dense: Vec<f64> = SymmetricEigen::new(generator_oracle(&law, big_n, big_k)).eigenvalues.iter().copied().collect();
        dense.sort_by(f64::total_cmp);
        let tag = format!("p={} n={} N={big_n} K={big_k}", law.p, law.n);
        let generator = ball.generator().unwrap();
        let candidates = [
            ("hand-built G", dense),
            ("library dense G", generator.dense_eigenvalues()),
            ("library levels", ball.spectral_decomposition().unwrap().sorted_eigenvalues()),
        ];
        for (name, got) in candidates {
            c.check(got.len() == want.len(), || format!("{name} {tag}: {} values, want {}", got.len(), want.len()));
            let worst = got.iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            c.check(worst <= 1e-9, || format!("{name} {tag}: worst gap {worst:.3e}"));
        }
        // hierarchical matvec against the hand-built matrix
        let g = generator_oracle(&law, big_n, big_k);
        let mut rng = ChaCha8Rng::seed_from_u64(SEED);
        let u: Vec<f64> = (0..ball.cell_count()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let got = generator.apply(&GridFunction::new(ball.grid(), u.clone()).unwrap()).unwrap();
        let want_v = &g * DVector::from_vec(u);
        let worst = got.values().iter().zip(want_v.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        c.check(worst <= 1e-12, || format!("matvec {tag}: {worst:.3e}"));
    }
    let two_state = Law::standard(2, 1).ball(0, 1).spectral_decomposition().unwrap().sorted_eigenvalues();
    c.check(
        two_state.len() == 2 && (two_state[0] + 1.0).abs() <= 1e-12 && two_state[1].abs() <= 1e-12,
        || format!("two-state spectrum {two_state:?}, want [-1, 0]"),
    );
    c
}

fn characteristic_functions() -> Criterion {
    let mut c = Criterion::new(5, "characteristic functions", "within 3σ at 1e5 paths");
    for (law, big_n, big_k) in [(Law::standard(2, 1), 1, 2), (Law::standard(3, 1), 0, 2)] {
        let ball = law.ball(big_n, big_k);
        let dual = ball.dual_grid().unwrap();
        for k in (-big_n)..=big_k {
            let z = frequency(dual, k);
            for t in [0.2, 1.0] {
                let want = if k <= -big_n {
                    1.0
                } else {
                    (law.kappa * t * (law.lambda(big_n) - law.a_w(-k))).exp()
                };
                c.statistical(&format!("eta p={} N={big_n} ‖z‖=p^{k} t={t}", law.p), |seed| {
                    character_z(&sim::mc_character(&ball, &z, t, MC_PATHS, seed).unwrap(), want)
                });
            }
        }
        // full process: E χ(z·ξ_t) = exp(-ϰ t A_w(z)), jumps above p^{N+12} dropped
        let cap = big_n + 12;
        let grid = Grid::new(ball.space(), big_k, cap).unwrap();
        for k in (-big_n - 1)..=(1 - big_n) {
            let z = frequency(grid, k);
            let t = 0.5;
            let want = (-law.kappa * t * law.a_w(-k)).exp();
            c.statistical(&format!("xi p={} N={big_n} ‖z‖=p^{k}", law.p), |seed| {
                character_z(&sim::mc_character_xi(&ball, cap, &z, t, MC_PATHS, seed).unwrap().full, want)
            });
        }
    }
    c
}

fn porous_medium() -> Criterion {
    let mut c = Criterion::new(
        6,
        "porous medium solver",
        "stationary and mass 1e-12, contraction 1e-10, linear 1e-6 at dt=1e-3, ratio 1.7..2.3",
    );
    let law = Law::standard(2, 1);
    let ball = law.ball(1, 2);
    let grid = ball.grid();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    for m in [1.0, 2.0, 3.0] {
        let phi = Nonlinearity::power_law(1.0, m).unwrap();
        let cfg = SolverConfig::new(0.05, 20).unwrap();

        let constant = pme::solve_pme(&ball, &GridFunction::constant(grid, 0.8), &phi, &cfg, false).unwrap();
        let drift = constant.states.iter().flat_map(|z| z.values().iter().map(|v| (v - 0.8).abs())).fold(0.0, f64::max);
        c.check(drift <= 1e-12, || format!("constant data m={m}: drift {drift:.3e}"));

        let u0 = random_fn(grid, &mut rng, 0.0, 2.0);
        let traj = pme::solve_pme(&ball, &u0, &phi, &cfg, false).unwrap();
        for w in traj.states.windows(2) {
            let dm = (w[1].mass() - w[0].mass()).abs();
            c.check(dm <= 1e-12, || format!("mass drift m={m}: {dm:.3e}"));
            c.check(w[1].linf_norm() <= w[0].linf_norm() + 1e-12, || format!("sup norm grew m={m}"));
        }

        for trial in 0..100 {
            let dt = [0.01, 0.1, 1.0][trial % 3];
            let f = random_fn(grid, &mut rng, -1.0, 1.0);
            let g = random_fn(grid, &mut rng, -1.0, 1.0);
            let (rf, rg) = (
                pme::resolvent_solve(&ball, &f, dt, &phi, &cfg).unwrap(),
                pme::resolvent_solve(&ball, &g, dt, &phi, &cfg).unwrap(),
            );
            let excess = rf.l1_distance(&rg).unwrap() - f.l1_distance(&g).unwrap();
            c.check(excess <= 1e-10, || format!("contraction m={m} trial {trial}: excess {excess:.3e}"));

            let upper = GridFunction::new(grid, f.values().iter().map(|v| v + rng.random_range(0.0..1.0)).collect()).unwrap();
            let ru = pme::resolvent_solve(&ball, &upper, dt, &phi, &cfg).unwrap();
            let worst = rf.values().iter().zip(ru.values()).map(|(a, b)| a - b).fold(f64::NEG_INFINITY, f64::max);
            c.check(worst <= 1e-10, || format!("comparison m={m} trial {trial}: {worst:.3e}"));
        }
    }

    // linear: implicit Euler against the exact semigroup e^{tG}
    {
        let (big_n, big_k) = (0, 2);
        let ball = law.ball(big_n, big_k);
        let u0 = pme::ball_indicator(ball.grid(), -1);
        let g = generator_oracle(&law, big_n, big_k);
        let traj = pme::solve_pme(&ball, &u0, &Nonlinearity::linear(), &SolverConfig::new(1e-3, 1000).unwrap(), false).unwrap();
        let x0 = DVector::from_column_slice(u0.values());
        let worst = traj
            .times
            .iter()
            .zip(&traj.states)
            .map(|(&t, z)| {
                let exact = (&g * t).exp() * &x0;
                z.values().iter().zip(exact.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        c.check(worst <= 1e-6, || format!("linear case vs exact semigroup at dt=1e-3: sup error {worst:.3e} > 1e-6"));
    }

    // first order: error ratios under halving
    let horizon: f64 = 0.5;
    let smooth = GridFunction::from_fn(grid, |cell| 1.0 + 0.5 * (cell.0 % 3) as f64).unwrap();
    for m in [1.0, 2.0, 3.0] {
        let phi = Nonlinearity::power_law(1.0, m).unwrap();
        let reference: Vec<f64> = if m == 1.0 {
            let exact = (generator_oracle(&law, 1, 2) * horizon).exp() * DVector::from_column_slice(smooth.values());
            exact.iter().copied().collect()
        } else {
            let fine = pme::solve_pme(&ball, &smooth, &phi, &SolverConfig::new(1e-4, 5000).unwrap(), false).unwrap();
            fine.states.last().unwrap().values().to_vec()
        };
        let errs: Vec<f64> = [0.02, 0.01, 0.005]
            .iter()
            .map(|&dt| {
                let steps = (horizon / dt).round() as usize;
                let traj = pme::solve_pme(&ball, &smooth, &phi, &SolverConfig::new(dt, steps).unwrap(), false).unwrap();
                let last = traj.states.last().unwrap().values();
                grid.cell_measure() * last.iter().zip(&reference).map(|(a, b)| (a - b).abs()).sum::<f64>()
            })
            .collect();
        for w in errs.windows(2) {
            let ratio = w[0] / w[1];
            c.check((1.7..=2.3).contains(&ratio), || format!("halving ratio m={m}: {ratio:.4} (errors {errs:?})"));
        }
    }
    c
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(f)
}

fn csv_numbers(bytes: &[u8]) -> Vec<f64> {
    String::from_utf8_lossy(bytes)
        .lines()
        .skip(1)
        .flat_map(|l| l.split(',').map(|f| f.parse::<f64>().unwrap_or(f64::NAN)).collect::<Vec<_>>())
        .collect()
}

fn determinism() -> Criterion {
    let mut c = Criterion::new(7, "determinism", "byte-identical per thread count, 1e-12 across");
    let law = Law::standard(3, 1);
    let ball = law.ball(1, 2);
    let outputs = |threads: usize| {
        in_pool(threads, || {
            let mut mc = Vec::new();
            sim::mc_transition_check(&ball, CellIndex(4), 0.8, 20_000, 99).unwrap().write_csv(&mut mc).unwrap();
            let mut solve = Vec::new();
            let phi = Nonlinearity::power_law(1.0, 2.0).unwrap();
            pme::solve_pme(&ball, &pme::random_data(ball.grid(), 5), &phi, &SolverConfig::new(0.1, 10).unwrap(), false)
                .unwrap()
                .write_states_csv(&mut solve)
                .unwrap();
            (mc, solve)
        })
    };
    let (a, b, single) = (outputs(4), outputs(4), outputs(1));
    c.check(a == b, || "library outputs differ between identical 4-thread runs".into());
    for (name, x, y) in [("mc", &a.0, &single.0), ("solve", &a.1, &single.1)] {
        let (u, v) = (csv_numbers(x), csv_numbers(y));
        let worst = u.iter().zip(&v).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        c.check(u.len() == v.len() && worst <= 1e-12, || format!("{name}: 1 vs 4 threads differ by {worst:.3e}"));
    }

    let run = |threads: &str, args: &[&str]| {
        let out = Command::new(env!("CARGO_BIN_EXE_padic"))
            .args(["--threads", threads, "--prime", "2", "--ball-n", "1", "--resolution-k", "3", "--seed", "11"])
            .args(args)
            .env_remove("PADIC_SEED")
            .output()
            .expect("binary runs");
        assert!(out.status.success(), "padic {args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
        out.stdout
    };
    for args in [
        &["simulate", "--paths", "10000", "--t", "0.5"][..],
        &["solve", "--init", "random:3", "--dt", "0.05", "--steps", "8"][..],
        &["ball", "--t", "0.3,3"][..],
    ] {
        let (x, y, z) = (run("2", args), run("2", args), run("1", args));
        c.check(x == y, || format!("padic {args:?}: outputs differ between identical runs"));
        let (u, v) = (csv_numbers(&x), csv_numbers(&z));
        let worst = u.iter().zip(&v).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        c.check(u.len() == v.len() && worst <= 1e-12, || format!("padic {args:?}: 1 vs 2 threads differ by {worst:.3e}"));
    }
    c
}

fn main() {
    let criteria: [fn() -> Criterion; 7] = [
        spectral_formulas,
        heat_kernel,
        ball_kernel,
        generator_spectrum,
        characteristic_functions,
        porous_medium,
        determinism,
    ];
    let mut all = true;
    for run in criteria {
        all &= run().report();
    }
    if !all {
        std::process::exit(1);
    }
}
