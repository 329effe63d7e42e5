//! Three-stage estimation of sparse mean and log-variance coefficients in
//! heteroscedastic linear regression.
//!
//! 1. [`stage1`]: Lasso with heteroscedasticity-adjusted penalty loadings.
//! 2. [`stage2`]: penalized pseudo-likelihood for the log-variance.
//! 3. [`stage3`]: inverse-variance weighted penalized least squares.
//!
//! Stages 2 and 3 use folded-concave penalties ([`penalty`]) through local
//! linear approximation, with tuning by AIC/BIC over a grid ([`tuning`]).

pub mod config;
pub mod data;
pub mod error;
pub mod linalg;
pub mod lla;
pub mod oracle;
pub mod penalty;
pub mod pipeline;
pub mod sim;
pub mod stage1;
pub mod stage2;
pub mod stage3;
pub mod tuning;

pub use config::{PipelineConfig, SolverConfig, Stage1Config};
pub use data::{neg_loglik, sigma, Dataset, ModelParams};
pub use error::{HippoError, Result};
pub use oracle::KktCertificate;
pub use penalty::{Penalty, PenaltyFamily};
pub use pipeline::{df_hat, HippoConfig, HippoFit};
pub use tuning::{select, Criterion, CriterionTable, LambdaAxis, TuningGrid};
