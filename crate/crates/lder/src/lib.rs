//! File formats, the cross-validation harness and report emission for the
//! linear dilation-erosion regressor. The numerical core lives in `lder_core`.

pub mod csv_io;
pub mod error;
pub mod harness;
pub mod manifest;
pub mod model_io;
pub mod qp_dump;
pub mod report;
pub mod selftest;

pub use error::{Error, Result};
pub use harness::{compare_trainers, run_cv, ComparisonTable, CvResult, HarnessConfig, TrainerId};
