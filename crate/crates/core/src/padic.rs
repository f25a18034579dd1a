// SPDX-License-Identifier: Apache-2.0

//! Truncated p-adic vectors on a ball `B_N ⊂ Q_p^n`.
//!
//! A point of `B_N` is known modulo `(p^K Z_p)^n`, so each coordinate carries
//! the `N + K` digits of
//!
//! ```text
//! x = p^{-N} (x_0 + x_1 p + x_2 p^2 + ... + x_{N+K-1} p^{N+K-1})
//! ```
//!
//! Digit position `m` holds the coefficient of `p^{-N+m}` and has norm
//! `p^{N-m}`. The cells of the grid (cosets of the resolution ball) are
//! enumerated by a flat [`CellIndex`]: the digit string is read coarsest
//! scale first, with the `n` coordinates interleaved inside each scale, as a
//! base-`p` integer. Every contiguous block of `p^{n l}` indices whose start is
//! a multiple of `p^{n l}` is then a sub-ball of radius `p^{l-K}`.

use std::f64::consts::PI;

use num_complex::Complex64;
use num_rational::Ratio;

use crate::error::{Error, Result};

/// The pair `(p, n)`: the prime and the dimension of `Q_p^n`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SpaceConfig {
    p: u32,
    n: u32,
}

fn is_prime(p: u32) -> bool {
    if p < 2 {
        return false;
    }
    let mut d = 2u32;
    while d.saturating_mul(d) <= p {
        if p.is_multiple_of(d) {
            return false;
        }
        d += 1;
    }
    true
}

impl SpaceConfig {
    pub fn new(p: u32, n: u32) -> Result<Self> {
        if !is_prime(p) {
            return Err(Error::invalid(format!("prime: {p} is not a prime")));
        }
        if n == 0 {
            return Err(Error::invalid("dim: the dimension must be at least 1"));
        }
        if p > 255 {
            return Err(Error::invalid("prime: digits are stored in u8, p must be below 256"));
        }
        Ok(SpaceConfig { p, n })
    }

    pub fn p(&self) -> u32 {
        self.p
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    /// `p^k` in floating point.
    pub fn pow(&self, k: i64) -> f64 {
        (self.p as f64).powi(k as i32)
    }

    /// `p^{n k}` in floating point.
    pub fn pow_n(&self, k: i64) -> f64 {
        self.pow(k * self.n as i64)
    }

    /// `1 - p^{-n}`, the relative measure of the unit sphere inside the unit ball.
    pub fn sphere_fraction(&self) -> f64 {
        1.0 - self.pow_n(-1)
    }

    /// Haar measure of `B_N`, i.e. `p^{nN}`.
    pub fn haar_ball(&self, ball_exp: i64) -> f64 {
        self.pow_n(ball_exp)
    }

    /// Haar measure of the sphere `S_j`, i.e. `(1 - p^{-n}) p^{nj}`.
    pub fn haar_sphere(&self, j: i64) -> f64 {
        self.sphere_fraction() * self.pow_n(j)
    }

    /// Exact `p^{nN}`.
    pub fn haar_ball_exact(&self, ball_exp: i64) -> Ratio<i128> {
        let base = (self.p as i128).pow(self.n);
        let k = ball_exp.unsigned_abs() as u32;
        if ball_exp >= 0 {
            Ratio::from_integer(base.pow(k))
        } else {
            Ratio::new(1, base.pow(k))
        }
    }

    /// Exact `(1 - p^{-n}) p^{nj}`.
    pub fn haar_sphere_exact(&self, j: i64) -> Ratio<i128> {
        self.haar_ball_exact(j) - self.haar_ball_exact(j - 1)
    }

    /// `∫_{S_j} χ(z·x) d^n x` for `‖z‖ = p^k` (or `z = 0`), in closed form.
    ///
    /// With `l = j + k`: the sphere measure when `l ≤ 0`, `-p^{n(j-1)}` when
    /// `l = 1`, and zero beyond.
    pub fn character_sphere_integral(&self, j: i64, z_norm: NormExponent) -> f64 {
        match z_norm {
            NormExponent::BelowResolution => self.haar_sphere(j),
            NormExponent::Finite(k) => match j + k {
                l if l <= 0 => self.haar_sphere(j),
                1 => -self.haar_ball(j - 1),
                _ => 0.0,
            },
        }
    }
}

/// Exponent of a p-adic norm: `Finite(e)` means `‖x‖_p = p^e`.
///
/// `BelowResolution` stands for a point whose truncated digits all vanish; it
/// orders below every finite exponent.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NormExponent {
    BelowResolution,
    Finite(i64),
}

impl NormExponent {
    pub fn finite(self) -> Option<i64> {
        match self {
            NormExponent::Finite(e) => Some(e),
            NormExponent::BelowResolution => None,
        }
    }

    /// The norm `p^e` as a real number, zero below resolution.
    pub fn to_norm(self, space: &SpaceConfig) -> f64 {
        match self {
            NormExponent::Finite(e) => space.pow(e),
            NormExponent::BelowResolution => 0.0,
        }
    }
}

/// Flat index of a cell of a [`Grid`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CellIndex(pub u64);

/// The ball `B_N` discretized into cosets of `B_{-K}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Grid {
    space: SpaceConfig,
    ball_exp: i64,
    resolution: i64,
    digits: usize,
    cells: u64,
}

impl Grid {
    pub fn new(space: SpaceConfig, ball_exp: i64, resolution: i64) -> Result<Self> {
        if resolution < 1 - ball_exp {
            return Err(Error::invalid(format!(
                "resolution_K: need K >= -N + 1 (N = {ball_exp}, K = {resolution})"
            )));
        }
        let digits = (ball_exp + resolution) as usize;
        let block = (space.p as u64).pow(space.n);
        let mut cells: u64 = 1;
        for _ in 0..digits {
            cells = cells.checked_mul(block).ok_or_else(|| {
                Error::invalid(format!(
                    "grid with {digits} digits per coordinate does not fit a 64-bit cell index"
                ))
            })?;
        }
        Ok(Grid {
            space,
            ball_exp,
            resolution,
            digits,
            cells,
        })
    }

    pub fn space(&self) -> SpaceConfig {
        self.space
    }

    /// `N`: the grid covers `‖x‖ ≤ p^N`.
    pub fn ball_exp(&self) -> i64 {
        self.ball_exp
    }

    /// `K`: cells are cosets of `‖x‖ ≤ p^{-K}`.
    pub fn resolution(&self) -> i64 {
        self.resolution
    }

    /// Digits per coordinate, `N + K`.
    pub fn digits_per_coord(&self) -> usize {
        self.digits
    }

    pub fn cell_count(&self) -> u64 {
        self.cells
    }

    /// Haar measure of one cell, `p^{-nK}`.
    pub fn cell_measure(&self) -> f64 {
        self.space.pow_n(-self.resolution)
    }

    /// Number of cells at exact distance `p^d` from a fixed cell, `-K < d ≤ N`.
    pub fn cells_at_distance(&self, d: i64) -> u64 {
        debug_assert!(d > -self.resolution && d <= self.ball_exp);
        let block = (self.space.p as u64).pow(self.space.n);
        (block - 1) * block.pow((d + self.resolution - 1) as u32)
    }

    /// Number of cells in a ball of radius `p^d` (`d ≥ -K`).
    pub fn cells_in_ball(&self, d: i64) -> u64 {
        let block = (self.space.p as u64).pow(self.space.n);
        block.pow((d + self.resolution) as u32)
    }

    /// Ultrametric distance exponent between two cells.
    ///
    /// For `a ≠ b` every pair of representatives is at the same distance, since
    /// that distance exceeds the cell radius.
    pub fn cell_distance(&self, a: CellIndex, b: CellIndex) -> NormExponent {
        if a == b {
            return NormExponent::BelowResolution;
        }
        let block = (self.space.p as u64).pow(self.space.n);
        let (mut x, mut y) = (a.0, b.0);
        let mut level = 0i64;
        while x != y {
            x /= block;
            y /= block;
            level += 1;
        }
        NormExponent::Finite(level - self.resolution)
    }

    /// Norm exponent of the cell representative.
    pub fn cell_norm(&self, a: CellIndex) -> NormExponent {
        self.cell_distance(a, CellIndex(0))
    }

    pub fn point(&self, index: CellIndex) -> Result<PAdicPoint> {
        if index.0 >= self.cells {
            return Err(Error::invalid(format!(
                "cell index {} out of range for {} cells",
                index.0, self.cells
            )));
        }
        let p = self.space.p as u64;
        let total = self.digits * self.space.n as usize;
        let mut digits = vec![0u8; total];
        let mut rest = index.0;
        for q in (0..total).rev() {
            digits[q] = (rest % p) as u8;
            rest /= p;
        }
        Ok(PAdicPoint { grid: *self, digits })
    }

    pub fn iter_cells(&self) -> impl Iterator<Item = CellIndex> {
        (0..self.cells).map(CellIndex)
    }
}

/// A point of `B_N` known modulo the resolution ball.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PAdicPoint {
    grid: Grid,
    /// `digits[m * n + i]` is digit `m` of coordinate `i`.
    digits: Vec<u8>,
}

impl PAdicPoint {
    pub fn zero(grid: Grid) -> Self {
        let total = grid.digits * grid.space.n as usize;
        PAdicPoint {
            grid,
            digits: vec![0; total],
        }
    }

    /// Build from per-coordinate digit sequences (`coords[i][m]`).
    pub fn from_digits(grid: Grid, coords: &[Vec<u8>]) -> Result<Self> {
        let n = grid.space.n as usize;
        if coords.len() != n {
            return Err(Error::invalid(format!("expected {n} coordinates, got {}", coords.len())));
        }
        let mut point = Self::zero(grid);
        for (i, c) in coords.iter().enumerate() {
            if c.len() != grid.digits {
                return Err(Error::invalid(format!(
                    "coordinate {i} has {} digits, grid needs {}",
                    c.len(),
                    grid.digits
                )));
            }
            for (m, &d) in c.iter().enumerate() {
                if d as u32 >= grid.space.p {
                    return Err(Error::invalid(format!("digit {d} out of range for p = {}", grid.space.p)));
                }
                point.digits[m * n + i] = d;
            }
        }
        Ok(point)
    }

    /// Coordinates `x_i = a_i · p^{-N}` for non-negative integers `a_i`,
    /// reduced modulo the resolution.
    pub fn from_scaled_integers(grid: Grid, values: &[u128]) -> Result<Self> {
        let n = grid.space.n as usize;
        if values.len() != n {
            return Err(Error::invalid(format!("expected {n} coordinates, got {}", values.len())));
        }
        let p = grid.space.p as u128;
        let mut point = Self::zero(grid);
        for (i, &v) in values.iter().enumerate() {
            let mut rest = v;
            for m in 0..grid.digits {
                point.digits[m * n + i] = (rest % p) as u8;
                rest /= p;
            }
        }
        Ok(point)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn digit(&self, coord: usize, position: usize) -> u8 {
        self.digits[position * self.grid.space.n as usize + coord]
    }

    fn coord_digits(&self, coord: usize) -> impl Iterator<Item = u8> + '_ {
        let n = self.grid.space.n as usize;
        (0..self.grid.digits).map(move |m| self.digits[m * n + coord])
    }

    /// Norm exponent of a single coordinate.
    pub fn coord_norm_exponent(&self, coord: usize) -> NormExponent {
        match self.coord_digits(coord).position(|d| d != 0) {
            Some(m) => NormExponent::Finite(self.grid.ball_exp - m as i64),
            None => NormExponent::BelowResolution,
        }
    }

    /// `‖x‖_p = max_i |x_i|_p`.
    pub fn norm_exponent(&self) -> NormExponent {
        match self.digits.iter().position(|&d| d != 0) {
            Some(q) => {
                let m = q / self.grid.space.n as usize;
                NormExponent::Finite(self.grid.ball_exp - m as i64)
            }
            None => NormExponent::BelowResolution,
        }
    }

    pub fn cell_index(&self) -> CellIndex {
        let p = self.grid.space.p as u64;
        CellIndex(self.digits.iter().fold(0u64, |acc, &d| acc * p + d as u64))
    }

    fn check_same_grid(&self, other: &PAdicPoint) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::Mismatch(format!(
                "points live on different grids ({:?} vs {:?})",
                self.grid, other.grid
            )));
        }
        Ok(())
    }

    /// Coordinatewise addition with carries toward finer scales; carries out
    /// of the last retained digit are dropped (coset arithmetic).
    pub fn add(&self, other: &PAdicPoint) -> Result<PAdicPoint> {
        self.check_same_grid(other)?;
        let n = self.grid.space.n as usize;
        let p = self.grid.space.p as u16;
        let mut out = PAdicPoint::zero(self.grid);
        for i in 0..n {
            let mut carry = 0u16;
            for m in 0..self.grid.digits {
                let q = m * n + i;
                let s = self.digits[q] as u16 + other.digits[q] as u16 + carry;
                out.digits[q] = (s % p) as u8;
                carry = s / p;
            }
        }
        Ok(out)
    }

    pub fn neg(&self) -> PAdicPoint {
        let n = self.grid.space.n as usize;
        let p = self.grid.space.p as u8;
        let mut out = PAdicPoint::zero(self.grid);
        for i in 0..n {
            let mut seen_nonzero = false;
            for m in 0..self.grid.digits {
                let q = m * n + i;
                let d = self.digits[q];
                out.digits[q] = if seen_nonzero {
                    p - 1 - d
                } else if d != 0 {
                    seen_nonzero = true;
                    p - d
                } else {
                    0
                };
            }
        }
        out
    }

    pub fn sub(&self, other: &PAdicPoint) -> Result<PAdicPoint> {
        self.add(&other.neg())
    }

    /// Fractional part `{x_i}_p` of one coordinate as an exact fraction.
    pub fn fractional_part(&self, coord: usize) -> RationalFraction {
        let p = self.grid.space.p;
        let negative_digits = self.grid.ball_exp.clamp(0, self.grid.digits as i64) as usize;
        let n = self.grid.space.n as usize;
        let mut numerator: u128 = 0;
        let mut scale: u128 = 1;
        for m in 0..negative_digits {
            numerator += self.digits[m * n + coord] as u128 * scale;
            scale *= p as u128;
        }
        RationalFraction::new(numerator, p, self.grid.ball_exp.max(0) as u32)
    }

    /// Re-express the point on another grid over the same space.
    ///
    /// Digits finer than the target resolution are dropped; digits coarser
    /// than the target ball are an error.
    pub fn rebase(&self, target: Grid) -> Result<PAdicPoint> {
        if target.space != self.grid.space {
            return Err(Error::Mismatch("rebase across different spaces".into()));
        }
        let n = self.grid.space.n as usize;
        let shift = target.ball_exp - self.grid.ball_exp;
        let mut out = PAdicPoint::zero(target);
        for m in 0..self.grid.digits {
            let m_target = m as i64 + shift;
            for i in 0..n {
                let d = self.digits[m * n + i];
                if d == 0 {
                    continue;
                }
                if m_target < 0 {
                    return Err(Error::invalid("point does not fit in the target ball"));
                }
                if (m_target as usize) < target.digits {
                    out.digits[m_target as usize * n + i] = d;
                }
            }
        }
        Ok(out)
    }
}

/// An element `a / p^d` of `[0, 1)`, kept in lowest terms.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RationalFraction {
    numerator: u128,
    p: u32,
    exponent: u32,
}

impl RationalFraction {
    fn new(mut numerator: u128, p: u32, mut exponent: u32) -> Self {
        if numerator == 0 {
            exponent = 0;
        }
        while exponent > 0 && numerator.is_multiple_of(p as u128) {
            numerator /= p as u128;
            exponent -= 1;
        }
        RationalFraction {
            numerator,
            p,
            exponent,
        }
    }

    pub fn numerator(&self) -> u128 {
        self.numerator
    }

    /// Exponent `d` of the denominator `p^d`.
    pub fn denominator_exponent(&self) -> u32 {
        self.exponent
    }

    pub fn denominator(&self) -> u128 {
        (self.p as u128).pow(self.exponent)
    }

    pub fn value(&self) -> f64 {
        self.numerator as f64 / self.denominator() as f64
    }
}

/// `χ(z·x) = exp(2πi Σ_i {z_i x_i}_p)`.
///
/// Both arguments are cosets, so the product is only determined when
/// `‖z‖ ≤ p^{K_x}`, `‖x‖ ≤ p^{K_z}` and `K_x + K_z ≥ 0`; otherwise this returns
/// [`Error::InsufficientTruncation`].
pub fn character(z: &PAdicPoint, x: &PAdicPoint) -> Result<Complex64> {
    let phase = character_phase(z, x)?;
    if phase.numerator == 0 {
        return Ok(Complex64::new(1.0, 0.0));
    }
    Ok(Complex64::from_polar(1.0, 2.0 * PI * phase.value()))
}

/// The phase `Σ_i {z_i x_i}_p mod 1` as an exact fraction.
pub fn character_phase(z: &PAdicPoint, x: &PAdicPoint) -> Result<RationalFraction> {
    let (gz, gx) = (z.grid, x.grid);
    if gz.space != gx.space {
        return Err(Error::Mismatch("character arguments live in different spaces".into()));
    }
    let within = |e: NormExponent, bound: i64| e.finite().is_none_or(|e| e <= bound);
    let (ez, ex) = (z.norm_exponent(), x.norm_exponent());
    let z_zero = ez == NormExponent::BelowResolution;
    let x_zero = ex == NormExponent::BelowResolution;
    let determined = (z_zero && x_zero)
        || (within(ez, gx.resolution)
            && within(ex, gz.resolution)
            && gz.resolution + gx.resolution >= 0);
    if !determined {
        return Err(Error::InsufficientTruncation(format!(
            "‖z‖ = p^{ez:?}, ‖x‖ = p^{ex:?} with resolutions K_z = {}, K_x = {}",
            gz.resolution, gx.resolution
        )));
    }
    let p = gz.space.p;
    let depth = gz.ball_exp + gx.ball_exp;
    if depth <= 0 {
        return Ok(RationalFraction::new(0, p, 0));
    }
    let modulus = (p as u128)
        .checked_pow(depth as u32)
        .filter(|&m| m <= u64::MAX as u128)
        .ok_or_else(|| Error::invalid("character: product denominator exceeds 64 bits"))?;
    let residue = |pt: &PAdicPoint, i: usize| -> u128 {
        let mut acc: u128 = 0;
        let mut scale: u128 = 1;
        for (m, d) in pt.coord_digits(i).enumerate() {
            if m as i64 >= depth {
                break;
            }
            acc += d as u128 * scale;
            scale *= p as u128;
        }
        acc % modulus
    };
    let mut total: u128 = 0;
    for i in 0..gz.space.n as usize {
        total = (total + residue(z, i) * residue(x, i) % modulus) % modulus;
    }
    Ok(RationalFraction::new(total, p, depth as u32))
}
