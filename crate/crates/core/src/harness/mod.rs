//! Configuration, experiment execution and CSV output behind the `dmsgd`
//! command line.

pub mod config;
pub mod experiment;
pub mod trace_io;

pub use config::{ConfigError, RunConfig};
pub use experiment::{
    average_traces, check_files, check_paths, run_sweep, CheckError, CheckOutcome, Experiment, HarnessError, SweepRow,
};
pub use trace_io::{TraceFile, TraceRow, TRACE_HEADER};
