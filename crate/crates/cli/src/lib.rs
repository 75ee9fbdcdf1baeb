//! Command-line driver: splitting, preprocessing, training, prediction and
//! evaluation over a run directory.
//!
//! ```text
//! <out>/splits/{training,testing,validation}.csv
//! <out>/conditions/{face,background,entire_frame}/<clip_id>.<frame>.png
//! <out>/models/<condition>.ckpt, <condition>.history.csv
//! <out>/predictions/<condition>.csv
//! <out>/report.{json,txt}
//! ```

pub mod args;
pub mod commands;
pub mod config;
pub mod data;
pub mod error;
pub mod report;

pub use args::Cli;
pub use commands::dispatch;
pub use error::{CliError, Result};
