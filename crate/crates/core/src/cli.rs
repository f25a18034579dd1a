// SPDX-License-Identifier: Apache-2.0

//! Command-line front end for the `padic` binary.
//!
//! Settings come from a flat `key=value` file (`--config`, `#` comments) and
//! from flags, flags winning. Every subcommand writes CSV with a header row.
//!
//! Exit codes: 0 success, 1 invalid input, 2 numerical failure, 3 failed
//! statistical check.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::ball::{BallConfig, GridFunction};
use crate::error::{Error, Result};
use crate::kernel::HeatKernel;
use crate::padic::{CellIndex, NormExponent, SpaceConfig};
use crate::pme::{self, Nonlinearity, SolverConfig};
use crate::sim::{self, StatStatus};
use crate::spectral::{KernelParams, RadialWeight, SeriesTolerance, Spectrum};
use crate::verify::{self, Outcome, Preset};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;
pub const EXIT_STATISTICAL: i32 = 3;

/// Largest matrix written by `ball --dense`.
pub const DENSE_OUTPUT_LIMIT: usize = 4096;

const KEYS: &[&str] = &[
    "prime",
    "dim",
    "alpha",
    "weight_c",
    "weight_table",
    "kappa",
    "ball_N",
    "resolution_K",
    "t_list",
    "dt",
    "steps",
    "phi_m",
    "phi_C",
    "paths",
    "seed",
    "tolerance",
    "output",
];

/// Validated settings shared by all subcommands.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl RunConfig {
    /// Parses `key=value` lines; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("config line {}: expected key=value, got {line:?}", i + 1)))?;
            cfg.set(key.trim(), value.trim())?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if !KEYS.contains(&key) {
            return Err(Error::invalid(format!("unknown config key `{key}`")));
        }
        self.values.insert(key.to_owned(), value.to_owned());
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    fn parsed<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.get(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|_| Error::invalid(format!("{key}: cannot parse {v:?}")))
            })
            .transpose()
    }

    fn or<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.parsed(key)?.unwrap_or(default))
    }

    pub fn prime(&self) -> Result<u32> {
        self.parsed("prime")?
            .ok_or_else(|| Error::invalid("missing required key `prime`"))
    }

    pub fn dim(&self) -> Result<u32> {
        self.or("dim", 1)
    }

    pub fn space(&self) -> Result<SpaceConfig> {
        SpaceConfig::new(self.prime()?, self.dim()?)
    }

    /// Kernel parameters: a power law unless `weight_table` names a CSV file.
    pub fn params(&self) -> Result<KernelParams> {
        let space = self.space()?;
        let kappa = self.or("kappa", 1.0)?;
        let weight = match self.get("weight_table") {
            Some(path) => RadialWeight::from_csv_path(space.p(), path)?,
            None => {
                let alpha = self.or("alpha", 2.0 * space.n() as f64)?;
                RadialWeight::power_law(space.p(), self.or("weight_c", 1.0)?, alpha)?
            }
        };
        KernelParams::new(space, weight, kappa)
    }

    pub fn spectrum(&self) -> Result<Spectrum> {
        let tol = match self.parsed::<f64>("tolerance")? {
            Some(t) => SeriesTolerance::new(t)?,
            None => SeriesTolerance::default(),
        };
        Ok(Spectrum::new(self.params()?, tol))
    }

    pub fn ball(&self) -> Result<BallConfig> {
        BallConfig::new(self.spectrum()?, self.or("ball_N", 0)?, self.or("resolution_K", 2)?)
    }

    pub fn t_list(&self) -> Result<Vec<f64>> {
        let raw = self.get("t_list").unwrap_or("1");
        let ts = raw
            .split([',', ' '])
            .filter(|s| !s.is_empty())
            .map(|s| s.trim().parse::<f64>().map_err(|_| Error::invalid(format!("t_list: cannot parse {s:?}"))))
            .collect::<Result<Vec<_>>>()?;
        if ts.is_empty() {
            return Err(Error::invalid("t_list: empty"));
        }
        Ok(ts)
    }

    pub fn seed(&self) -> Result<u64> {
        if let Some(s) = self.parsed("seed")? {
            return Ok(s);
        }
        match std::env::var("PADIC_SEED") {
            Ok(v) => v
                .trim()
                .parse()
                .map_err(|_| Error::invalid(format!("PADIC_SEED: cannot parse {v:?}"))),
            Err(_) => Ok(0),
        }
    }

    pub fn paths(&self) -> Result<usize> {
        self.or("paths", sim::MIN_CHECK_PATHS)
    }

    pub fn nonlinearity(&self) -> Result<Nonlinearity> {
        Nonlinearity::power_law(self.or("phi_C", 1.0)?, self.or("phi_m", 2.0)?)
    }

    pub fn solver(&self) -> Result<SolverConfig> {
        SolverConfig::new(self.or("dt", 0.01)?, self.or("steps", 100)?)
    }

    pub fn output(&self) -> Option<PathBuf> {
        self.get("output").map(PathBuf::from)
    }
}

#[derive(Parser, Debug)]
#[command(name = "padic", version, about = "Heat kernels, jump processes and porous-medium flow on p-adic balls")]
struct Cli {
    /// key=value settings file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for parallel sections
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(flatten)]
    keys: KeyFlags,
    #[command(subcommand)]
    command: Command,
}

/// One flag per configuration key.
#[derive(Args, Debug, Default)]
struct KeyFlags {
    /// Prime p (required)
    #[arg(long, global = true)]
    prime: Option<String>,
    /// Dimension n [default: 1]
    #[arg(long, global = true)]
    dim: Option<String>,
    /// Power-law exponent, must exceed n [default: 2n]
    #[arg(long, global = true)]
    alpha: Option<String>,
    /// Power-law constant c [default: 1]
    #[arg(long = "weight-c", global = true)]
    weight_c: Option<String>,
    /// CSV table `j,w` with `# alpha=`, `# c1=`, `# c2=` headers
    #[arg(long = "weight-table", global = true)]
    weight_table: Option<String>,
    /// Diffusion constant [default: 1]
    #[arg(long, global = true)]
    kappa: Option<String>,
    /// Ball radius exponent N [default: 0]
    #[arg(long = "ball-n", global = true, allow_hyphen_values = true)]
    ball_n: Option<String>,
    /// Resolution K, cells have radius p^-K [default: 2]
    #[arg(long = "resolution-k", global = true, allow_hyphen_values = true)]
    resolution_k: Option<String>,
    /// Comma-separated times
    #[arg(long = "t", global = true, alias = "t-list")]
    t_list: Option<String>,
    /// Implicit Euler step [default: 0.01]
    #[arg(long, global = true)]
    dt: Option<String>,
    /// Number of steps [default: 100]
    #[arg(long, global = true)]
    steps: Option<String>,
    /// Exponent m of phi(u) = C|u|^{m-1}u [default: 2]
    #[arg(long = "phi-m", global = true)]
    phi_m: Option<String>,
    /// Constant C of phi [default: 1]
    #[arg(long = "phi-c", global = true)]
    phi_c: Option<String>,
    /// Monte Carlo paths [default: 10000]
    #[arg(long, global = true)]
    paths: Option<String>,
    /// Base seed, else PADIC_SEED, else 0
    #[arg(long, global = true)]
    seed: Option<String>,
    /// Series tolerance
    #[arg(long, global = true)]
    tolerance: Option<String>,
    /// Output path (stdout when absent)
    #[arg(long, short, global = true)]
    output: Option<String>,
}

impl KeyFlags {
    fn apply(&self, cfg: &mut RunConfig) -> Result<()> {
        let pairs = [
            ("prime", &self.prime),
            ("dim", &self.dim),
            ("alpha", &self.alpha),
            ("weight_c", &self.weight_c),
            ("weight_table", &self.weight_table),
            ("kappa", &self.kappa),
            ("ball_N", &self.ball_n),
            ("resolution_K", &self.resolution_k),
            ("t_list", &self.t_list),
            ("dt", &self.dt),
            ("steps", &self.steps),
            ("phi_m", &self.phi_m),
            ("phi_C", &self.phi_c),
            ("paths", &self.paths),
            ("seed", &self.seed),
            ("tolerance", &self.tolerance),
            ("output", &self.output),
        ];
        for (key, value) in pairs {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        Ok(())
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Z(t, x), its bound and time derivative: `t,beta,norm,Z,upper_bound,dtZ`
    Kernel {
        /// Norm exponents: comma list or `a:b` range
        #[arg(long, default_value = "-3:3", allow_hyphen_values = true)]
        beta: String,
    },
    /// Symbol, lambda and ball integral by level: `k,norm,A_w,lambda,I_ball`
    Spectral {
        #[arg(long = "k-min", default_value_t = -3, allow_hyphen_values = true)]
        k_min: i64,
        #[arg(long = "k-max", default_value_t = 3, allow_hyphen_values = true)]
        k_max: i64,
    },
    /// Ball kernel Z_N with c and c': `t,beta,ZN,c,cprime`
    Ball {
        /// Also write the transition matrix at the first time (row-major CSV)
        #[arg(long)]
        dense: Option<PathBuf>,
    },
    /// Monte Carlo density report: `cell,count,prob,analytic,zscore`
    Simulate {
        #[arg(long)]
        horizon: Option<f64>,
        /// Starting cell index
        #[arg(long, default_value_t = 0)]
        start: u64,
        /// Write every path as `path,event_time,cell`
        #[arg(long = "path-log")]
        path_log: Option<PathBuf>,
    },
    /// Porous medium flow: states `t,cell,value`, summary `t,mass,linf,l1_diff_prev`
    Solve {
        /// `delta`, `indicator:<e>`, `random:<seed>` or a CSV file `cell,value`
        #[arg(long, default_value = "delta")]
        init: String,
        /// Summary CSV path (stderr when absent)
        #[arg(long)]
        summary: Option<PathBuf>,
        /// Also run at dt/2 and report the largest L1 gap
        #[arg(long = "compare-half")]
        compare_half: bool,
    },
    /// Property suite over all acceptance criteria
    Verify {
        #[arg(long, default_value = "quick")]
        preset: String,
    },
}

/// Failure with its exit code.
#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = if e.is_numerical() { EXIT_NUMERICAL } else { EXIT_INVALID };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure {
            code: EXIT_INVALID,
            message: e.to_string(),
        }
    }
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

fn parse_range(spec: &str) -> Result<Vec<i64>> {
    let bad = || Error::invalid(format!("beta: expected a comma list or a:b range, got {spec:?}"));
    if let Some((a, b)) = spec.split_once(':') {
        let (a, b): (i64, i64) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
        if b < a {
            return Err(bad());
        }
        return Ok((a..=b).collect());
    }
    spec.split(',').map(|s| s.trim().parse().map_err(|_| bad())).collect()
}

fn run_kernel(cfg: &RunConfig, beta: &str) -> std::result::Result<i32, Failure> {
    let kernel = HeatKernel::new(cfg.spectrum()?);
    let betas = parse_range(beta)?;
    let ts = cfg.t_list()?;
    let space = kernel.spectrum().space();
    let mut out = open_output(cfg.output().as_deref())?;
    writeln!(out, "t,beta,norm,Z,upper_bound,dtZ")?;
    for &t in &ts {
        for &b in &betas {
            let z = kernel.z_full(t, b)?;
            let ub = kernel.upper_bound(t, b);
            let d = kernel.dt_z(t, b)?;
            writeln!(out, "{t:.16e},{b},{:.16e},{z:.16e},{ub:.16e},{d:.16e}", space.pow(b))?;
        }
    }
    out.flush()?;
    Ok(EXIT_OK)
}

fn run_spectral(cfg: &RunConfig, k_min: i64, k_max: i64) -> std::result::Result<i32, Failure> {
    if k_max < k_min {
        return Err(Error::invalid("k-max: must not be below k-min").into());
    }
    let s = cfg.spectrum()?;
    let big_n: i64 = cfg.or("ball_N", 0)?;
    let space = s.space();
    let mut out = open_output(cfg.output().as_deref())?;
    writeln!(out, "k,norm,A_w,lambda,I_ball")?;
    for k in k_min..=k_max {
        let a = s.a_w_at(NormExponent::Finite(k))?;
        let l = s.lambda(k)?;
        let i = s.i_ball_at(NormExponent::Finite(k), big_n);
        writeln!(out, "{k},{:.16e},{a:.16e},{l:.16e},{i:.16e}", space.pow(k))?;
    }
    out.flush()?;
    Ok(EXIT_OK)
}

fn run_ball(cfg: &RunConfig, dense: Option<&Path>) -> std::result::Result<i32, Failure> {
    let ball = cfg.ball()?;
    let ts = cfg.t_list()?;
    let mut out = open_output(cfg.output().as_deref())?;
    writeln!(out, "t,beta,ZN,c,cprime")?;
    for &t in &ts {
        let c = ball.c_t(t)?;
        let cp = ball.c_prime(t)?;
        for beta in (1 - ball.resolution())..=ball.ball_exp() {
            let z = ball.z_ball(t, beta)?;
            writeln!(out, "{t:.16e},{beta},{z:.16e},{c:.16e},{cp:.16e}")?;
        }
    }
    out.flush()?;
    if let Some(path) = dense {
        let m = ball.cell_count();
        if m > DENSE_OUTPUT_LIMIT {
            return Err(Error::Budget {
                cells: m as u128,
                limit: DENSE_OUTPUT_LIMIT as u128,
            }
            .into());
        }
        let p = ball.transition_matrix_checked(ts[0])?;
        let mut w = BufWriter::new(File::create(path)?);
        let header: Vec<String> = (0..m).map(|j| format!("c{j}")).collect();
        writeln!(w, "{}", header.join(","))?;
        for i in 0..m {
            let row: Vec<String> = (0..m).map(|j| format!("{:.16e}", p[(i, j)])).collect();
            writeln!(w, "{}", row.join(","))?;
        }
        w.flush()?;
    }
    Ok(EXIT_OK)
}

fn run_simulate(
    cfg: &RunConfig,
    horizon: Option<f64>,
    start: u64,
    path_log: Option<&Path>,
) -> std::result::Result<i32, Failure> {
    let ball = cfg.ball()?;
    let seed = cfg.seed()?;
    let paths = cfg.paths()?;
    let t = match horizon {
        Some(h) => h,
        None => cfg.t_list()?[0],
    };
    if start >= ball.cell_count() as u64 {
        return Err(Error::invalid(format!("start: cell {start} outside the {} cells", ball.cell_count())).into());
    }
    let x0 = CellIndex(start);
    if let Some(path) = path_log {
        let table = sim::JumpRateTable::for_ball(&ball)?;
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "path,event_time,cell")?;
        for i in 0..paths as u64 {
            sim::simulate_path(&ball, &table, x0, t, seed, i)?.write_csv_rows(&mut w)?;
        }
        w.flush()?;
    }
    let mut out = open_output(cfg.output().as_deref())?;
    if paths >= sim::MIN_CHECK_PATHS {
        let report = sim::mc_transition_check(&ball, x0, t, paths, seed)?;
        report.write_csv(&mut out)?;
        out.flush()?;
        eprintln!(
            "total variation {:.6e}, 3-sigma envelope {:.6e}, z = {:.3}",
            report.total_variation,
            report.envelope(),
            report.z
        );
        if report.status == StatStatus::Fail {
            return Ok(EXIT_STATISTICAL);
        }
    } else {
        let density = sim::empirical_density(&ball, x0, t, paths, seed)?;
        let analytic = ball.transition_row(t, x0)?;
        let se = density.standard_errors(&analytic);
        writeln!(out, "cell,count,prob,analytic,zscore")?;
        for (c, ((count, p), (q, s))) in density
            .counts
            .iter()
            .zip(density.probabilities())
            .zip(analytic.iter().zip(&se))
            .enumerate()
        {
            let z = if *s > 0.0 { (p - q) / s } else { 0.0 };
            writeln!(out, "{c},{count},{p:.16e},{q:.16e},{z:.16e}")?;
        }
        out.flush()?;
    }
    Ok(EXIT_OK)
}

fn initial_data(ball: &BallConfig, init: &str) -> Result<GridFunction> {
    let grid = ball.grid();
    if init == "delta" {
        return Ok(pme::delta(grid));
    }
    if let Some(e) = init.strip_prefix("indicator:") {
        let e: i64 = e.parse().map_err(|_| Error::invalid(format!("init: bad norm exponent in {init:?}")))?;
        return Ok(pme::ball_indicator(grid, e));
    }
    if let Some(s) = init.strip_prefix("random:") {
        let s: u64 = s.parse().map_err(|_| Error::invalid(format!("init: bad seed in {init:?}")))?;
        return Ok(pme::random_data(grid, s));
    }
    let text = std::fs::read_to_string(init)
        .map_err(|e| Error::invalid(format!("init: {init:?} is not a built-in and cannot be read ({e})")))?;
    let mut values = vec![0.0; ball.cell_count()];
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || (i == 0 && line.starts_with("cell")) {
            continue;
        }
        let (c, v) = line
            .split_once(',')
            .ok_or_else(|| Error::Parse(format!("{init}: line {}: expected cell,value", i + 1)))?;
        let c: usize = c.trim().parse().map_err(|_| Error::Parse(format!("{init}: line {}: bad cell", i + 1)))?;
        let v: f64 = v.trim().parse().map_err(|_| Error::Parse(format!("{init}: line {}: bad value", i + 1)))?;
        *values
            .get_mut(c)
            .ok_or_else(|| Error::invalid(format!("{init}: cell {c} outside the {} cells", ball.cell_count())))? = v;
    }
    GridFunction::new(grid, values)
}

fn run_solve(cfg: &RunConfig, init: &str, summary: Option<&Path>, compare_half: bool) -> std::result::Result<i32, Failure> {
    let ball = cfg.ball()?;
    let phi = cfg.nonlinearity()?;
    let solver = cfg.solver()?;
    let u0 = initial_data(&ball, init)?;
    let traj = pme::solve_pme(&ball, &u0, &phi, &solver, compare_half)?;
    let mut out = open_output(cfg.output().as_deref())?;
    traj.write_states_csv(&mut out)?;
    out.flush()?;
    match summary {
        Some(path) => {
            let mut w = BufWriter::new(File::create(path)?);
            traj.write_summary_csv(&mut w)?;
            w.flush()?;
        }
        None => traj.write_summary_csv(&mut io::stderr().lock())?,
    }
    if let Some(d) = traj.halving_difference {
        eprintln!("largest L1 gap against the dt/2 run: {d:.6e}");
    }
    Ok(EXIT_OK)
}

fn run_verify(cfg: &RunConfig, preset: &str) -> std::result::Result<i32, Failure> {
    let preset: Preset = preset.parse()?;
    let results = verify::run_suite(preset, cfg.seed()?)?;
    let mut out = open_output(cfg.output().as_deref())?;
    write!(out, "{}", verify::render_table(&results))?;
    out.flush()?;
    let code = if results.iter().any(|r| r.outcome == Outcome::Fail) {
        EXIT_NUMERICAL
    } else if results.iter().any(|r| r.outcome == Outcome::StatisticalFail) {
        EXIT_STATISTICAL
    } else {
        EXIT_OK
    };
    Ok(code)
}

fn dispatch(cli: Cli) -> std::result::Result<i32, Failure> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    cli.keys.apply(&mut cfg)?;
    let body = || match &cli.command {
        Command::Kernel { beta } => run_kernel(&cfg, beta),
        Command::Spectral { k_min, k_max } => run_spectral(&cfg, *k_min, *k_max),
        Command::Ball { dense } => run_ball(&cfg, dense.as_deref()),
        Command::Simulate {
            horizon,
            start,
            path_log,
        } => run_simulate(&cfg, *horizon, *start, path_log.as_deref()),
        Command::Solve {
            init,
            summary,
            compare_half,
        } => run_solve(&cfg, init, summary.as_deref(), *compare_half),
        Command::Verify { preset } => run_verify(&cfg, preset),
    };
    match cli.threads {
        Some(0) => Err(Error::invalid("threads: need at least one").into()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::invalid(format!("threads: {e}")))?;
            pool.install(body)
        }
        None => body(),
    }
}

/// Runs the CLI on `argv` (program name first) and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_parsing() {
        let cfg = RunConfig::parse("# header\nprime = 3\n\ndim=2 # inline\nt_list=0.1, 1\n").unwrap();
        assert_eq!(cfg.prime().unwrap(), 3);
        assert_eq!(cfg.dim().unwrap(), 2);
        assert_eq!(cfg.t_list().unwrap(), vec![0.1, 1.0]);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = RunConfig::parse("prime=2\nprimes=3\n").unwrap_err();
        assert!(err.to_string().contains("primes"));
        assert!(RunConfig::parse("just text").is_err());
    }

    #[test]
    fn missing_prime_names_the_key() {
        let err = RunConfig::default().space().unwrap_err();
        assert!(err.to_string().contains("prime"));
    }

    #[test]
    fn ranges() {
        assert_eq!(parse_range("-2:1").unwrap(), vec![-2, -1, 0, 1]);
        assert_eq!(parse_range("4, -1").unwrap(), vec![4, -1]);
        assert!(parse_range("3:1").is_err());
    }
}

#[cfg(test)]
mod exit_codes {
    use super::*;

    fn run_args(args: &[&str]) -> i32 {
        run(std::iter::once("padic").chain(args.iter().copied()))
    }

    #[test]
    fn validation_errors_exit_one() {
        assert_eq!(run_args(&["kernel"]), EXIT_INVALID);
        assert_eq!(run_args(&["kernel", "--prime", "4"]), EXIT_INVALID);
        assert_eq!(run_args(&["kernel", "--prime", "2", "--t", "-1"]), EXIT_INVALID);
        assert_eq!(run_args(&["ball", "--prime", "2", "--resolution-k", "40"]), EXIT_INVALID);
        assert_eq!(run_args(&["frobnicate"]), EXIT_INVALID);
        assert_eq!(run_args(&["verify", "--preset", "huge"]), EXIT_INVALID);
    }

    #[test]
    fn successful_runs_exit_zero() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("k.csv");
        let code = run_args(&["kernel", "--prime", "3", "--t", "0.5", "--beta", "0", "-o", out.to_str().unwrap()]);
        assert_eq!(code, EXIT_OK);
        let text = std::fs::read_to_string(&out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,beta,norm,Z,upper_bound,dtZ");
        assert_eq!(lines.len(), 2);
    }

    #[test]
    fn config_file_and_flag_precedence() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("run.cfg");
        let out = dir.path().join("s.csv");
        std::fs::write(&cfg, format!("# test\nprime=2\nball_N=1\noutput={}\n", out.display())).unwrap();
        assert_eq!(run_args(&["--config", cfg.to_str().unwrap(), "spectral", "--prime", "3", "--k-min", "0", "--k-max", "0"]), EXIT_OK);
        let text = std::fs::read_to_string(&out).unwrap();
        // the flag wins: p = 3 gives A_w(1) = 1/3 + (2/3)(1/9)/(1 - 1/3)
        let a: f64 = text.lines().nth(1).unwrap().split(',').nth(2).unwrap().parse().unwrap();
        assert!((a - (1.0 / 3.0 + 1.0 / 9.0)).abs() < 1e-15);
        std::fs::write(&cfg, "prime=2\nfoo=1\n").unwrap();
        assert_eq!(run_args(&["--config", cfg.to_str().unwrap(), "kernel"]), EXIT_INVALID);
    }
}
