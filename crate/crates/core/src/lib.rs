// SPDX-License-Identifier: Apache-2.0

//! Diffusion on `Q_p^n`: p-adic arithmetic, radial spectral symbols, heat
//! kernels, finite-ball Markov semigroups, Monte Carlo paths and a porous
//! medium solver.

// `!(x > 0.0)` style guards reject NaN on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ball;
pub mod cli;
pub mod error;
pub mod expm;
pub mod kernel;
pub mod padic;
pub mod pme;
pub mod sim;
pub mod spectral;
pub mod verify;

pub use ball::{BallConfig, GeneratorMatrix, GridFunction, SpectralDecomposition, TransitionMethod};
pub use error::{Error, Result};
pub use kernel::{HeatKernel, RadialFunction, TailEnvelope};
pub use padic::{character, character_phase, CellIndex, Grid, NormExponent, PAdicPoint, SpaceConfig};
pub use spectral::{KernelParams, RadialWeight, SeriesTolerance, Spectrum};
