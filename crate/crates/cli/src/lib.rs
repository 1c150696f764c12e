//! Scenario files, built-in experiments and the `relaystab` command line.

pub mod error;
pub mod output;
pub mod presets;
pub mod run;
pub mod scenario;

pub use error::{CliError, CliResult};
pub use output::RunReport;
pub use presets::{run_preset, PRESET_IDS};
pub use run::{oracle_check, run_scenario, OracleRow};
