//! Out-of-distribution augmented training (OAT).
//!
//! The crate is `no_std` (it needs `alloc`) and carries every numeric part of
//! the system:
//!
//! * [`numerics`]: the deterministic random streams and stable scalar kernels.
//! * [`synthetic`]: Gaussian feature models, the feature-space sign adversary
//!   and the Monte Carlo verifier for the gradient results on OOD features.
//! * [`nn`]: logistic / MLP / small CNN models with exact manual backprop.
//! * [`attacks`]: FGSM, PGD and CW-margin PGD under an l-inf budget.
//! * [`data`]: in-memory datasets, synthetic image generation and OOD mining.
//! * [`training`]: standard, PGD-AT, TRADES, OAT-A/S, OAT+Mixup, OAT+UID and
//!   the randomization test.
//! * [`eval`]: clean/robust accuracy and expected-loss estimates.
//!
//! File formats, configs and the CLI live in the `oat` crate.
#![cfg_attr(not(any(feature = "std", test)), no_std)]

extern crate alloc;

pub mod attacks;
pub mod data;
pub mod error;
pub mod eval;
pub mod nn;
pub mod numerics;
pub mod synthetic;
pub mod training;

pub use error::{OatError, Result};
pub use numerics::{ProbVector, RngState};
