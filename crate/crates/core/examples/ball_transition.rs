// SPDX-License-Identifier: Apache-2.0

//! The chain restricted to a ball: kernel `Z_N`, transition matrices by two
//! independent routes, generator and spectrum.

use padic_diffusion::{BallConfig, KernelParams, SeriesTolerance, Spectrum, TransitionMethod};

fn main() -> padic_diffusion::Result<()> {
    let s = Spectrum::new(KernelParams::power_law(3, 1, 2.0, 1.0, 1.0)?, SeriesTolerance::default());
    let ball = BallConfig::new(s, 1, 2)?;
    println!("B_1 at resolution 3^-2: {} cells, λ_1 = {:.12}", ball.cell_count(), ball.lambda()?);

    let t = 0.7;
    println!("c({t}) = {:.6e}, c'({t}) = {:.6e}", ball.c_t(t)?, ball.c_prime(t)?);
    let series = ball.transition_profile_series(t)?;
    let spectral = ball.transition_profile_spectral(t)?;
    for (i, (a, b)) in series.iter().zip(&spectral).enumerate() {
        println!("profile[{i}] series {a:.15e} spectral {b:.15e}");
    }

    let by_spectrum = ball.transition_matrix(t, TransitionMethod::Spectral)?;
    let by_squaring = ball.transition_matrix(t, TransitionMethod::Squaring)?;
    println!("max |P_spectral - exp(tQ)| = {:.3e}", (&by_spectrum - &by_squaring).abs().max());
    println!("row sums: {:?}", by_spectrum.row_iter().take(3).map(|r| r.sum()).collect::<Vec<_>>());

    let q = ball.generator()?;
    println!("total jump rate {:.12}", q.total_rate());
    for level in &ball.spectral_decomposition()?.levels {
        println!("eigenvalue {:.12} with multiplicity {}", level.eigenvalue, level.multiplicity);
    }
    Ok(())
}
