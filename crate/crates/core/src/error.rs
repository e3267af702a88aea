use crate::gridworld::{Action, State};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("state {0} is the goal; no transitions leave it")]
    TerminalStep(State),

    #[error("value iteration did not converge after {sweeps} sweeps (residual {residual:e})")]
    NotConverged { sweeps: usize, residual: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("inconsistent layer shapes: {0}")]
    Shape(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("value estimate diverged at iteration {iteration}: |V({state})| = {magnitude}")]
    Diverged {
        iteration: usize,
        state: State,
        magnitude: f64,
    },

    #[error("feature extraction: {0}")]
    Extraction(String),

    #[error("no state-value predecessor for states {0:?}")]
    Unreachable(Vec<State>),

    #[error("EFM has no entry for ({feature}, {action:?})")]
    EfmMiss { feature: String, action: Action },

    #[error("EFM conflict at ({feature}, {action:?}): two different successors observed")]
    EfmConflict { feature: String, action: Action },

    #[error("EFM coverage incomplete after {episodes} episodes; missing {missing:?}")]
    Coverage {
        episodes: usize,
        missing: Vec<(State, Action)>,
    },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn in_stage(stage: &'static str) -> impl FnOnce(Error) -> Error {
        move |source| Error::Stage {
            stage,
            source: Box::new(source),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
