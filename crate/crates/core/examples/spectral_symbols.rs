// SPDX-License-Identifier: Apache-2.0

//! Radial symbol `A_w`, the ball constants `λ_N` and the ball integral
//! `I_{B_N}` for a power-law weight and for a tabulated one.

use padic_diffusion::{KernelParams, RadialWeight, SeriesTolerance, SpaceConfig, Spectrum};

fn main() -> padic_diffusion::Result<()> {
    let params = KernelParams::power_law(2, 1, 2.0, 1.0, 1.0)?;
    let s = Spectrum::new(params, SeriesTolerance::default());

    println!("{:>4} {:>22} {:>22} {:>22}", "γ", "A_w(‖z‖=2^-γ)", "closed form", "I_B0");
    for gamma in -4..=3 {
        println!(
            "{gamma:>4} {:>22.16e} {:>22.16e} {:>22.16e}",
            s.a_w(gamma)?,
            s.a_w_closed_form(gamma).expect("power law"),
            s.i_ball(gamma, 0)
        );
    }
    println!("λ_0 = {} (exactly 1/2)", s.lambda(0)?);
    let (c3, c4) = s.symbol_envelope();
    println!("C3 ‖z‖^(α-n) ≤ A_w ≤ C4 ‖z‖^(α-n) with C3 = {c3:.6}, C4 = {c4:.6}");

    // a weight sampled on a window; outside it the growth envelope takes over
    let csv = "# alpha=2\n# c1=0.5\n# c2=5\nj,w\n-2,0.3\n-1,0.55\n0,1.0\n1,4.2\n2,15.0\n";
    let weight = RadialWeight::from_csv_str(2, csv)?;
    let table = Spectrum::new(KernelParams::new(SpaceConfig::new(2, 1)?, weight, 1.0)?, SeriesTolerance::default());
    println!("tabulated weight: A_w(‖z‖=1) = {:.12}, λ_0 = {:.12}", table.a_w(0)?, table.lambda(0)?);
    Ok(())
}
