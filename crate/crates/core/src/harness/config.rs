//! Experiment configuration: presets plus a flat `section.key = value` file
//! format. Every key can also be given on the command line as an override.

use std::path::{Path, PathBuf};

use crate::efm::{ExplorationConfig, QSource, DEFAULT_FEATURE_ATTEMPTS};
use crate::error::{Error, Result};
use crate::features::DEFAULT_FEATURE_LAYER;
use crate::gridworld::GridSpec;
use crate::learners::{DdpnConfig, DqnConfig};
use crate::rng::derive_seed;
use crate::tabular::QLearningConfig;

/// Environment variable naming the output root.
pub const OUT_DIR_ENV: &str = "DEEPMOD_OUT";
pub const DEFAULT_OUT_DIR: &str = "out";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    Table1,
    Table2,
    Fig5,
    Fig6,
    Fig7,
    Pipeline,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Table1 => "table1",
            Experiment::Table2 => "table2",
            Experiment::Fig5 => "fig5",
            Experiment::Fig6 => "fig6",
            Experiment::Fig7 => "fig7",
            Experiment::Pipeline => "pipeline",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    /// Map file; `None` means the built-in 4×4 lake.
    pub map: Option<PathBuf>,
    pub seeds: Vec<u64>,
    pub gamma: f64,
    pub vi_tolerance: f64,
    pub vi_max_sweeps: usize,
    pub qlearning: QLearningConfig,
    pub ddpn: DdpnConfig,
    pub reduced: DdpnConfig,
    pub ddpn2: DdpnConfig,
    pub dqn: DqnConfig,
    pub explore: ExplorationConfig,
    pub n_noise: usize,
    pub layer_index: usize,
    pub feature_attempts: usize,
    pub q_source: QSource,
    /// Write real wall-clock seconds into trace CSVs. Off by default so that
    /// repeated runs produce byte-identical files.
    pub timing: bool,
    pub out_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn preset(experiment: Experiment) -> Self {
        let q_source = match experiment {
            Experiment::Table2 | Experiment::Fig7 => QSource::Dqn,
            _ => QSource::Tabular,
        };
        ExperimentConfig {
            experiment,
            map: None,
            seeds: (0..5).collect(),
            gamma: 0.9,
            vi_tolerance: 1e-6,
            vi_max_sweeps: 1000,
            qlearning: QLearningConfig::default(),
            ddpn: DdpnConfig::full(0),
            reduced: DdpnConfig::reduced(0),
            ddpn2: DdpnConfig::reduced(0),
            dqn: DqnConfig::new(0),
            explore: ExplorationConfig::new(0),
            n_noise: 20,
            layer_index: DEFAULT_FEATURE_LAYER,
            feature_attempts: DEFAULT_FEATURE_ATTEMPTS,
            q_source,
            timing: false,
            out_dir: std::env::var_os(OUT_DIR_ENV)
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR)),
        }
    }

    pub fn grid(&self) -> Result<GridSpec> {
        match &self.map {
            Some(path) => GridSpec::load_map(path),
            None => Ok(GridSpec::frozen_lake()),
        }
    }

    /// Applies every `key = value` line of `text`. Blank lines and lines
    /// starting with `#` are ignored.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i + 1,
                msg: format!("expected key = value, got {line:?}"),
            })?;
            self.set(key.trim(), value.trim()).map_err(|e| match e {
                Error::InvalidConfig(msg) => Error::Parse { line: i + 1, msg },
                other => other,
            })?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)?;
        self.apply_text(&text)
    }

    /// Applies a single `key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| Error::InvalidConfig(format!("override {assignment:?} is not key=value")))?;
        self.set(key.trim(), value.trim())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let (section, field) = key
            .split_once('.')
            .ok_or_else(|| Error::InvalidConfig(format!("key {key:?} has no section prefix")))?;
        match section {
            "experiment" => match field {
                "map" => self.map = (!value.is_empty() && value != "builtin").then(|| PathBuf::from(value)),
                "seeds" => self.seeds = parse_seeds(value)?,
                "gamma" => {
                    let g = num(key, value)?;
                    self.gamma = g;
                    self.qlearning.gamma = g;
                    self.ddpn.gamma = g;
                    self.reduced.gamma = g;
                    self.ddpn2.gamma = g;
                    self.dqn.gamma = g;
                    self.explore.guide_gamma = g;
                }
                "timing" => self.timing = flag(key, value)?,
                "out_dir" => self.out_dir = PathBuf::from(value),
                _ => return Err(unknown(key)),
            },
            "vi" => match field {
                "tolerance" => self.vi_tolerance = num(key, value)?,
                "max_sweeps" => self.vi_max_sweeps = num(key, value)?,
                _ => return Err(unknown(key)),
            },
            "qlearning" => {
                let q = &mut self.qlearning;
                match field {
                    "alpha" => q.alpha = num(key, value)?,
                    "gamma" => q.gamma = num(key, value)?,
                    "episodes" => q.episodes = num(key, value)?,
                    "epsilon0" => q.epsilon0 = num(key, value)?,
                    "epsilon_decay" => q.epsilon_decay = num(key, value)?,
                    "max_steps" => q.max_steps = num(key, value)?,
                    _ => return Err(unknown(key)),
                }
            }
            "ddpn" => set_ddpn(&mut self.ddpn, key, field, value)?,
            "reduced" => set_ddpn(&mut self.reduced, key, field, value)?,
            "ddpn2" => set_ddpn(&mut self.ddpn2, key, field, value)?,
            "dqn" => {
                let d = &mut self.dqn;
                match field {
                    "gamma" => d.gamma = num(key, value)?,
                    "learning_rate" => d.learning_rate = num(key, value)?,
                    "episodes" => d.episodes = num(key, value)?,
                    "epsilon0" => d.epsilon0 = num(key, value)?,
                    "epsilon_decay" => d.epsilon_decay = num(key, value)?,
                    "epsilon_min" => d.epsilon_min = num(key, value)?,
                    "max_steps" => d.max_steps = num(key, value)?,
                    "eval_every" => d.eval_every = num(key, value)?,
                    "test_episodes" => d.test_episodes = num(key, value)?,
                    _ => return Err(unknown(key)),
                }
            }
            "explore" => {
                let e = &mut self.explore;
                match field {
                    "epsilon0" => e.epsilon0 = num(key, value)?,
                    "epsilon_decay" => e.epsilon_decay = num(key, value)?,
                    "max_episodes" => e.max_episodes = num(key, value)?,
                    "max_steps" => e.max_steps = num(key, value)?,
                    "guide_gamma" => e.guide_gamma = num(key, value)?,
                    _ => return Err(unknown(key)),
                }
            }
            "features" => match field {
                "n_noise" => self.n_noise = num(key, value)?,
                "layer" => self.layer_index = num(key, value)?,
                "attempts" => self.feature_attempts = num(key, value)?,
                _ => return Err(unknown(key)),
            },
            "pipeline" => match field {
                "q_source" => {
                    self.q_source = match value {
                        "tabular" => QSource::Tabular,
                        "dqn" => QSource::Dqn,
                        _ => return Err(Error::InvalidConfig(format!("{key}: expected tabular or dqn"))),
                    }
                }
                _ => return Err(unknown(key)),
            },
            _ => return Err(unknown(key)),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::InvalidConfig("experiment.seeds is empty".into()));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::InvalidConfig(format!("gamma {} outside [0, 1)", self.gamma)));
        }
        self.qlearning.validate()?;
        self.ddpn.validate()?;
        self.reduced.validate()?;
        self.ddpn2.validate()?;
        self.dqn.validate()?;
        self.explore.validate()?;
        self.grid()?;
        Ok(())
    }

    pub fn ddpn_for(&self, seed: u64) -> DdpnConfig {
        DdpnConfig {
            seed: derive_seed(seed, "ddpn"),
            ..self.ddpn.clone()
        }
    }

    pub fn reduced_for(&self, seed: u64) -> DdpnConfig {
        DdpnConfig {
            seed: derive_seed(seed, "reduced"),
            ..self.reduced.clone()
        }
    }

    pub fn qlearning_for(&self, seed: u64) -> QLearningConfig {
        QLearningConfig {
            rng_seed: derive_seed(seed, "qlearning"),
            ..self.qlearning.clone()
        }
    }
}

fn set_ddpn(c: &mut DdpnConfig, key: &str, field: &str, value: &str) -> Result<()> {
    match field {
        "gamma" => c.gamma = num(key, value)?,
        "bellman_iterations" => c.bellman_iterations = num(key, value)?,
        "epochs_per_iteration" => c.epochs_per_iteration = num(key, value)?,
        "learning_rate" => c.learning_rate = num(key, value)?,
        "eval_every" => c.eval_every = num(key, value)?,
        "test_episodes" => c.test_episodes = num(key, value)?,
        "max_steps" => c.max_steps = num(key, value)?,
        "budget_floor" => c.budget_floor = num(key, value)?,
        "zero_final" => c.zero_final = flag(key, value)?,
        _ => return Err(unknown(key)),
    }
    Ok(())
}

fn unknown(key: &str) -> Error {
    Error::InvalidConfig(format!("unknown key {key:?}"))
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::InvalidConfig(format!("{key}: cannot parse {value:?}")))
}

fn flag(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::InvalidConfig(format!("{key}: expected true or false, got {value:?}"))),
    }
}

/// `0,1,2` or a half-open range `0..5`.
fn parse_seeds(value: &str) -> Result<Vec<u64>> {
    if let Some((a, b)) = value.split_once("..") {
        let lo: u64 = num("experiment.seeds", a.trim())?;
        let hi: u64 = num("experiment.seeds", b.trim())?;
        return Ok((lo..hi).collect());
    }
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| num("experiment.seeds", s))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections_and_comments() {
        let mut c = ExperimentConfig::preset(Experiment::Table1);
        c.apply_text(
            "# quick run\n\nexperiment.seeds = 3,4\nddpn.bellman_iterations=20\nreduced.learning_rate = 0.002\n\
             pipeline.q_source = dqn\nexperiment.timing = true\n",
        )
        .unwrap();
        assert_eq!(c.seeds, vec![3, 4]);
        assert_eq!(c.ddpn.bellman_iterations, 20);
        assert_eq!(c.reduced.learning_rate, 0.002);
        assert_eq!(c.q_source, QSource::Dqn);
        assert!(c.timing);
    }

    #[test]
    fn seed_ranges_and_gamma_fan_out() {
        let mut c = ExperimentConfig::preset(Experiment::Table2);
        c.apply_override("experiment.seeds=2..5").unwrap();
        c.apply_override("experiment.gamma=0.5").unwrap();
        assert_eq!(c.seeds, vec![2, 3, 4]);
        assert_eq!((c.ddpn.gamma, c.dqn.gamma, c.qlearning.gamma), (0.5, 0.5, 0.5));
    }

    #[test]
    fn bad_lines_report_their_number() {
        let mut c = ExperimentConfig::preset(Experiment::Table1);
        assert!(matches!(c.apply_text("ddpn.eval_every = 2\nnonsense\n"), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(c.apply_text("ddpn.colour = red"), Err(Error::Parse { line: 1, .. })));
        assert!(c.apply_override("gamma=0.3").is_err());
    }

    #[test]
    fn presets_validate() {
        for e in [Experiment::Table1, Experiment::Table2, Experiment::Fig5, Experiment::Fig6, Experiment::Fig7] {
            ExperimentConfig::preset(e).validate().unwrap();
        }
    }
}
