//! Experiment harness for `grazing-core`: JSON configuration, the six
//! experiments and their CSV/JSON reports.

pub mod config;
pub mod experiments;
pub mod report;

pub use config::{load, parse, Experiment, Format, RunConfig};
pub use experiments::run;
pub use report::{Assertion, Report, Verdict};
