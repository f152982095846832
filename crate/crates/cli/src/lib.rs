//! Experiment orchestration for the qmask MPS classifier: training runs with
//! per-sweep traces, information-theoretic analysis, run comparison, and
//! static SVG plots.

pub mod analyze;
pub mod artifacts;
pub mod config;
pub mod plot;
pub mod train;

pub use analyze::{cmd_analyze, cmd_compare};
pub use config::{Config, DatasetSpec, ScoreSeries};
pub use plot::cmd_plot;
pub use train::{cmd_train, TrainOptions};
