//! FGSM, PGD, APGD and Square attacks under an L∞ budget.
//!
//! Inputs live on the `[0, 1]` pixel scale. Attacks take any
//! [`zcp_core::Classifier`]; wrap batch-normalised networks in
//! [`zcp_core::Frozen`] so each sample is classified on its own.

pub mod batch;
pub mod config;
pub mod error;
mod eval;
pub mod gradient;
pub mod robust;
pub mod square;

pub use batch::{AdvBatch, BALL_TOL};
pub use config::{AttackConfig, AttackKind, FGSM_GRID_255, ITERATIVE_GRID_255, PGD_ALPHA};
pub use error::{AttackError, Result};
pub use gradient::{apgd, apgd_checkpoints, apgd_observed, fgsm, pgd, pgd_observed};
pub use robust::{attack, clean_accuracy, robust_accuracy};
pub use square::{p_schedule, square, square_side};
