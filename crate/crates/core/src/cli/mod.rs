//! Configuration, pipelines and reports behind the `etlpv` binary.

pub mod config;
pub mod pipeline;
pub mod report;

pub use config::{bundled_config, emit_config, load_config, parse_config, RunConfig};
pub use pipeline::{cmd_reproduce, cmd_synthesize, cmd_track, exit_code, resolve_out_dir, write_trace_csv, RunOptions};
pub use report::{RunReport, StageError, StageStatus};
