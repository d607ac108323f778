//! Experiment harness around [`subdiff_core`]: run configuration, table
//! presets, file formats, parallel sweeps and verification checks. The
//! `subdiff` binary is a thin command-line layer over this crate.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checks;
pub mod config;
pub mod error;
pub mod harness;
pub mod io;
pub mod presets;

pub use config::{ConfigPatch, InversionConfig};
pub use error::{HarnessError, Result};
pub use harness::{run_rate_study, run_single, run_table, RateStudySpec, SingleRun, TableOutput};
pub use presets::{table_preset, TableSpec};
