//! Simulation designs, scoring and the Monte Carlo runner.

pub mod generate;
pub mod metrics;
pub mod rng;
pub mod study;

pub use generate::{generate, Design, SimulationSpec};
pub use metrics::{precision_recall, score, RunMetrics};
pub use study::{precision_at_recall, run_replicate, run_study, Aggregate, CurvePoint, MeanCurvePoint, Method, StudyConfig, StudyReport};
