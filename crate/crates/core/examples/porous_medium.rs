// SPDX-License-Identifier: Apache-2.0

//! Implicit Euler for `∂u/∂t + ϰ(-Δ)φ(u) = 0` on a ball with `φ(u) = u|u|`.

use padic_diffusion::pme::{self, Nonlinearity, SolverConfig};
use padic_diffusion::{BallConfig, KernelParams, SeriesTolerance, Spectrum};

fn main() -> padic_diffusion::Result<()> {
    let s = Spectrum::new(KernelParams::power_law(2, 1, 2.0, 1.0, 1.0)?, SeriesTolerance::default());
    let ball = BallConfig::new(s, 1, 3)?;
    let phi = Nonlinearity::power_law(1.0, 2.0)?;
    let cfg = SolverConfig::new(0.05, 40)?;

    let u0 = pme::ball_indicator(ball.grid(), -1);
    let traj = pme::solve_pme(&ball, &u0, &phi, &cfg, true)?;
    for (t, u) in traj.times.iter().zip(&traj.states).step_by(8) {
        println!("t = {t:5.2}  mass {:.15}  sup {:.6}", u.mass(), u.linf_norm());
    }
    println!("largest L1 gap to the dt/2 run: {:.3e}", traj.halving_difference.unwrap_or(f64::NAN));

    let probe = pme::accretivity_probe(&ball, &phi, &cfg, 50, 1.0, 7, 1e-10)?;
    println!("accretivity: {} violations in {} trials", probe.violations, probe.trials);
    Ok(())
}
