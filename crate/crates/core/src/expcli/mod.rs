//! Experiment configuration, cell execution, reports and the CLI commands.

mod config;
mod report;
mod run;
mod table;

use std::path::Path;

pub use config::{config_diff, parse_regimes, parse_seeds, ExperimentConfig, DEFAULT_OUTPUT};
pub use report::{
    load_cells, write_report, CellResult, ReportSummary, CURVES_HEADER, HEATMAP_HEADER,
    SUMMARY_HEADER,
};
pub use run::{
    cell_dir, ordered_domains, prepare_domains, run_cell, run_cells, CellReport, CellStatus,
    RunOptions, WORKERS_ENV,
};
pub use table::Table;

use crate::domainsynth::{write_archive, ArchiveSummary};
use crate::error::Result;

/// Writes the dataset archive for `cfg`; unchanged domains are left alone.
pub fn cmd_generate(cfg: &ExperimentConfig) -> Result<ArchiveSummary> {
    cfg.validate()?;
    write_archive(&cfg.archive_root(), &cfg.specs)
}

pub fn cmd_run(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Vec<CellReport>> {
    run_cells(cfg, opts)
}

pub fn cmd_report(out: &Path) -> Result<ReportSummary> {
    write_report(out)
}
