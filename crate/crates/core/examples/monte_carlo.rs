// SPDX-License-Identifier: Apache-2.0

//! Jump paths of the ball chain, a density check against the exact
//! transition row, and a characteristic function estimate.

use padic_diffusion::sim::{self, JumpRateTable};
use padic_diffusion::{BallConfig, CellIndex, KernelParams, PAdicPoint, SeriesTolerance, Spectrum};

fn main() -> padic_diffusion::Result<()> {
    let s = Spectrum::new(KernelParams::power_law(2, 1, 2.0, 1.0, 1.0)?, SeriesTolerance::default());
    let ball = BallConfig::new(s, 1, 2)?;
    let seed = 2024;

    let table = JumpRateTable::for_ball(&ball)?;
    let path = sim::simulate_path(&ball, &table, CellIndex(0), 2.0, seed, 0)?;
    println!("one path: {} jumps, ends in cell {}", path.events.len(), path.final_cell().0);

    let report = sim::mc_transition_check(&ball, CellIndex(0), 1.0, 20_000, seed)?;
    println!(
        "TV distance {:.4e} against a 3σ envelope {:.4e} (z = {:.2}, {:?})",
        report.total_variation,
        report.envelope(),
        report.z,
        report.status
    );

    // E χ(z·X_t) = exp(-ϰ t (A_w(z) - λ_N)) for ‖z‖ = 2 on the dual grid
    let dual = ball.dual_grid()?;
    let z = PAdicPoint::from_scaled_integers(dual, &[2])?;
    let est = sim::mc_character(&ball, &z, 1.0, 20_000, seed)?;
    println!("E χ(z X_1) ≈ {:.4} ± {:.4}, exact {:.4}", est.mean, est.std_err.0, est.analytic);
    Ok(())
}
