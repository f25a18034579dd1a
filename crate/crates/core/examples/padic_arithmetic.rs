// SPDX-License-Identifier: Apache-2.0

//! Points of a 3-adic ball: digits, norms, addition with carries and
//! additive characters.

use padic_diffusion::{character, character_phase, Grid, PAdicPoint, SpaceConfig};

fn main() -> padic_diffusion::Result<()> {
    let space = SpaceConfig::new(3, 1)?;
    // B_2 = {‖x‖ ≤ 9} known modulo B_{-3}: five digits per coordinate
    let grid = Grid::new(space, 2, 3)?;
    println!("cells: {}, cell measure: {}", grid.cell_count(), grid.cell_measure());

    // x = 7/9 and y = 2/9 as multiples of p^{-N} = 1/9
    let x = PAdicPoint::from_scaled_integers(grid, &[7])?;
    let y = PAdicPoint::from_scaled_integers(grid, &[2])?;
    let sum = x.add(&y)?;
    let exp = |q: &PAdicPoint| q.norm_exponent().finite().expect("nonzero");
    println!("‖x‖ = 3^{}, ‖y‖ = 3^{}", exp(&x), exp(&y));
    println!("‖x + y‖ = 3^{} (7/9 + 2/9 = 1 is a unit)", exp(&sum));
    println!("{{x}}_3 = {}/{}", x.fractional_part(0).numerator(), x.fractional_part(0).denominator());

    // ultrametric: the distance between cells is the norm of the difference
    let d = grid.cell_distance(x.cell_index(), y.cell_index());
    println!("d(x, y) = 3^{:?}", d.finite().expect("distinct cells"));

    // the dual grid swaps ball and resolution, so χ(z·x) is well defined
    let dual = Grid::new(space, 3, 2)?;
    let z = PAdicPoint::from_scaled_integers(dual, &[27 * 4])?; // z = 4
    let phase = character_phase(&z, &x)?;
    println!(
        "χ(z·x) with z·x = 28/9: phase {}/{} -> {:.6}",
        phase.numerator(),
        phase.denominator(),
        character(&z, &x)?
    );
    Ok(())
}
