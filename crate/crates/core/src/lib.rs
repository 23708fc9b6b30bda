//! Nuclear-norm regularized generalized trace regression.

pub mod error;
pub mod experiments;
pub mod expfam;
pub mod glm_trace;
pub mod io;
mod linsolve;
pub mod matcore;
pub mod onebit;
pub mod rrr;
pub mod simgen;
mod splitting;

pub use error::{Error, Result};
pub use expfam::{Design, ExpFamily, GeneralDesign, Problem, RrrDesign, SingletonDesign};
pub use glm_trace::{fit, objective, FitDiagnostics, FitResult, SolverConfig};
pub use matcore::DenseMatrix;
pub use onebit::{fit_onebit, predict_ratings, BinaryMatrix, OneBitConfig, PredictionRule};
pub use rrr::fit_rrr;
