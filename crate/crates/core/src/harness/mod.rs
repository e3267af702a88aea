//! Experiment presets and reports.
//!
//! Every stochastic claim is evaluated over several seeds: value columns are
//! per-state medians, rates are median per-seed rates, and per-seed yes/no
//! outcomes pass on a strict majority.

pub mod config;
pub mod experiments;
pub mod properties;
pub mod reference;
pub mod report;
pub mod svg;

pub use config::{Experiment, ExperimentConfig, OUT_DIR_ENV};
pub use experiments::{
    curve_analysis, reproduce_curves, reproduce_table1, reproduce_table2, run_clean_seed, run_noisy_seed,
    run_pipeline, timing_check, timing_report,
};
pub use report::{Check, Column, RunReport};

use crate::error::Result;

/// Everything the `check` command runs.
#[derive(Debug, Clone)]
pub struct AcceptanceRun {
    pub table1: RunReport,
    pub table2: RunReport,
    /// Curves and the stabilization check, from the table-2 noisy runs.
    pub fig5: RunReport,
    pub properties: Vec<Check>,
    pub timing: Check,
}

impl AcceptanceRun {
    /// All checks, ordered by criterion (unnumbered checks last).
    pub fn checks(&self) -> Vec<&Check> {
        let mut all: Vec<&Check> = self
            .table1
            .checks
            .iter()
            .chain(&self.table2.checks)
            .chain(&self.fig5.checks)
            .chain(&self.properties)
            .chain(std::iter::once(&self.timing))
            .collect();
        all.sort_by_key(|c| c.criterion.unwrap_or(u8::MAX));
        all
    }

    pub fn all_passed(&self) -> bool {
        self.checks().iter().all(|c| c.passed)
    }

    pub fn reports(&self) -> [&RunReport; 3] {
        [&self.table1, &self.table2, &self.fig5]
    }
}

/// The table1 and table2 presets, the fig5 ordering, timing and the property suite.
pub fn acceptance_suite(cfg: &ExperimentConfig) -> Result<AcceptanceRun> {
    let table1 = reproduce_table1(cfg)?;
    let table2 = reproduce_table2(cfg)?;
    let fig5 = curve_analysis(&table2, Experiment::Fig5);
    let timing = timing_check(&table2);
    let properties = properties::property_checks(cfg)?;
    Ok(AcceptanceRun {
        table1,
        table2,
        fig5,
        properties,
        timing,
    })
}
