//! Run reports: value columns, traces, timings and pass/fail checks.

use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};

use crate::efm::PipelineArtifacts;
use crate::error::Result;
use crate::gridworld::State;
use crate::learners::TrainingTrace;
use crate::tabular::ValueTable;

use super::reference;

/// One method's state values: every seed's table plus the per-state median.
#[derive(Debug, Clone)]
pub struct Column {
    pub method: String,
    pub per_seed: Vec<ValueTable>,
    pub median: ValueTable,
}

impl Column {
    pub fn new(method: &str, per_seed: Vec<ValueTable>) -> Self {
        let median = median_table(&per_seed);
        Column {
            method: method.to_string(),
            per_seed,
            median,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SeedTrace {
    pub method: String,
    pub seed: u64,
    pub trace: TrainingTrace,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Timing {
    pub method: String,
    pub seed: u64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    /// Acceptance criterion number, if the check belongs to one.
    pub criterion: Option<u8>,
    pub name: String,
    pub passed: bool,
    pub measured: f64,
    pub limit: f64,
    pub detail: String,
}

impl Check {
    /// Passes when `measured <= limit`.
    pub fn at_most(criterion: Option<u8>, name: &str, measured: f64, limit: f64, detail: impl Into<String>) -> Self {
        Check {
            criterion,
            name: name.to_string(),
            passed: measured <= limit,
            measured,
            limit,
            detail: detail.into(),
        }
    }

    /// Passes when `measured >= limit`.
    pub fn at_least(criterion: Option<u8>, name: &str, measured: f64, limit: f64, detail: impl Into<String>) -> Self {
        Check {
            criterion,
            name: name.to_string(),
            passed: measured >= limit,
            measured,
            limit,
            detail: detail.into(),
        }
    }

    /// A yes/no check; `measured` is 1 on success.
    pub fn holds(criterion: Option<u8>, name: &str, ok: bool, detail: impl Into<String>) -> Self {
        Check {
            criterion,
            name: name.to_string(),
            passed: ok,
            measured: if ok { 1.0 } else { 0.0 },
            limit: 1.0,
            detail: detail.into(),
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        let crit = self.criterion.map(|c| format!("[{c}] ")).unwrap_or_default();
        write!(
            f,
            "{tag} {crit}{}: measured {:.4}, limit {:.4}",
            self.name, self.measured, self.limit
        )?;
        if !self.detail.is_empty() {
            write!(f, " ({})", self.detail)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunReport {
    pub experiment: String,
    pub seeds: Vec<u64>,
    pub columns: Vec<Column>,
    /// Reference table (1 or 2) that `values_<exp>.csv` deltas refer to.
    pub reference_table: Option<usize>,
    pub traces: Vec<SeedTrace>,
    pub timings: Vec<Timing>,
    pub checks: Vec<Check>,
    pub warnings: Vec<String>,
    pub pipelines: Vec<(u64, PipelineArtifacts)>,
    /// Extra files (name, contents) written next to the standard outputs.
    pub extra_files: Vec<(String, String)>,
}

impl RunReport {
    pub fn new(experiment: &str, seeds: &[u64]) -> Self {
        RunReport {
            experiment: experiment.to_string(),
            seeds: seeds.to_vec(),
            ..RunReport::default()
        }
    }

    pub fn column(&self, method: &str) -> Option<&Column> {
        self.columns.iter().find(|c| c.method == method)
    }

    pub fn traces_of<'a>(&'a self, method: &'a str) -> impl Iterator<Item = &'a SeedTrace> + 'a {
        self.traces.iter().filter(move |t| t.method == method)
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failed(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    /// Appends another report's checks, traces, timings, warnings and files.
    pub fn absorb(&mut self, other: RunReport) {
        self.extra_files.extend(other.extra_files);
        self.checks.extend(other.checks);
        self.warnings.extend(other.warnings);
        self.timings.extend(other.timings);
        self.traces.extend(other.traces);
    }

    /// `state,<method>...,delta_<method>...`. Deltas are measured minus the
    /// published column of the same name; reports without a published table
    /// use their own `vi` column instead. Blank when neither exists.
    pub fn values_csv(&self) -> String {
        let mut out = String::from("state");
        for c in &self.columns {
            let _ = write!(out, ",{}", c.method);
        }
        for c in &self.columns {
            let _ = write!(out, ",delta_{}", c.method);
        }
        out.push('\n');
        let n = self.columns.iter().map(|c| c.median.len()).max().unwrap_or(0);
        for i in 0..n {
            out.push_str(&State(i).label());
            for c in &self.columns {
                match c.median.as_slice().get(i) {
                    Some(v) => {
                        let _ = write!(out, ",{v:.6}");
                    }
                    None => out.push(','),
                }
            }
            let own_vi = self.column("vi").map(|c| c.median.as_slice());
            for c in &self.columns {
                let reference: Option<&[f64]> = match self.reference_table {
                    Some(t) => reference::column(t, &c.method).map(|r| &r[..]),
                    None => own_vi,
                };
                match reference {
                    Some(r) if i < r.len() && i < c.median.len() => {
                        let _ = write!(out, ",{:.6}", c.median.get(State(i)) - r[i]);
                    }
                    _ => out.push(','),
                }
            }
            out.push('\n');
        }
        out
    }

    /// Writes `values_<exp>.csv` (when there are columns), one trace file per
    /// method and seed, and any extra files. Returns the paths written.
    pub fn write(&self, dir: &Path, timing: bool) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        let mut put = |name: String, contents: &str| -> Result<()> {
            let path = dir.join(name);
            std::fs::write(&path, contents)?;
            written.push(path);
            Ok(())
        };
        if !self.columns.is_empty() {
            put(format!("values_{}.csv", self.experiment), &self.values_csv())?;
        }
        for t in &self.traces {
            put(format!("trace_{}_{}.csv", t.method, t.seed), &t.trace.to_csv(timing))?;
        }
        for (name, contents) in &self.extra_files {
            put(name.clone(), contents)?;
        }
        Ok(written)
    }

    /// Human-readable summary: checks, warnings and timings.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            let _ = writeln!(out, "{c}");
        }
        for w in &self.warnings {
            let _ = writeln!(out, "warning: {w}");
        }
        for t in &self.timings {
            let _ = writeln!(out, "time {} seed {}: {:.3} s", t.method, t.seed, t.seconds);
        }
        out
    }
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        0.5 * (v[mid - 1] + v[mid])
    }
}

/// Per-state median across tables of equal length.
pub fn median_table(tables: &[ValueTable]) -> ValueTable {
    let n = tables.first().map_or(0, ValueTable::len);
    ValueTable::from_vec(
        (0..n)
            .map(|i| median(&tables.iter().map(|t| t.get(State(i))).collect::<Vec<_>>()))
            .collect(),
    )
}

/// True when strictly more than half of the flags are set.
pub fn majority(flags: &[bool]) -> bool {
    2 * flags.iter().filter(|&&b| b).count() > flags.len()
}
