// SPDX-License-Identifier: Apache-2.0

//! The full-space heat kernel: profile, normalization, its envelope and the
//! semigroup property.

use padic_diffusion::{HeatKernel, KernelParams, SeriesTolerance, Spectrum};

fn main() -> padic_diffusion::Result<()> {
    let s = Spectrum::new(KernelParams::power_law(2, 1, 2.0, 1.0, 1.0)?, SeriesTolerance::default());
    let k = HeatKernel::new(s);
    let t = 0.5;

    println!("Z({t}, 0) = {:.12}", k.z_origin(t)?);
    println!("{:>5} {:>20} {:>20} {:>20}", "β", "Z", "bound", "∂t Z");
    for beta in -4..=6 {
        println!(
            "{beta:>5} {:>20.12e} {:>20.12e} {:>20.12e}",
            k.z_full(t, beta)?,
            k.upper_bound(t, beta),
            k.dt_z(t, beta)?
        );
    }
    println!("∫ Z dx - 1 = {:.3e}", k.total_mass_by_spheres(t, -40)? - 1.0);

    let ck = k.chapman_kolmogorov_check(0.2, 0.3, 1)?;
    println!("Z(0.2) * Z(0.3) vs Z(0.5) at ‖x‖ = 2: residual {:.3e}", ck.residual);
    Ok(())
}
