//! Configuration, orchestration, and file formats behind the `apfl` binary.

mod config;
mod io;
mod provenance;
mod run;

pub use config::{
    load_config, parse_config, AlphaConfig, CsvConfig, DatasetConfig, ExperimentConfig, LrConfig, LrKind,
    ModelConfig, PartitionKind, Resolved, SyntheticConfig,
};
pub use io::{format_sig9, read_metrics, read_models, write_metrics, write_metrics_to, write_models, METRICS_HEADER};
pub use provenance::{
    build_provenance, config_from_provenance, read_provenance, spec_from_provenance, write_provenance, Provenance,
};
pub use run::{
    diagnose_run, execute, gen_data, personalize_run, run_to_dir, PersonalizeSummary, DIAGNOSTICS_FILE,
    METRICS_FILE, MODELS_FILE, PROVENANCE_FILE,
};
