//! Tabular dynamic programming: value iteration, greedy policies, Q-learning.
//!
//! Values follow the arrival convention: the value of a cell is the reward for
//! entering it plus the discounted value of the best successor,
//! `V(s) = r(s) + γ · max_a V(next(s, a))`, with the goal pinned to its reward.

use std::fmt::Write as _;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::gridworld::{step, Action, GridSpec, RewardModel, State};
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable {
    values: Vec<f64>,
}

impl ValueTable {
    pub fn zeros(n_states: usize) -> Self {
        ValueTable {
            values: vec![0.0; n_states],
        }
    }

    pub fn from_vec(values: Vec<f64>) -> Self {
        ValueTable { values }
    }

    pub fn get(&self, s: State) -> f64 {
        self.values[s.0]
    }

    pub fn set(&mut self, s: State, v: f64) {
        self.values[s.0] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Largest absolute per-state difference.
    pub fn max_abs_diff(&self, other: &ValueTable) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("state_label,value\n");
        for (i, v) in self.values.iter().enumerate() {
            let _ = writeln!(out, "{},{v}", State(i).label());
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut values = Vec::new();
        for (i, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let (label, v) = line.split_once(',').ok_or_else(|| parse_err(i, "expected 2 columns"))?;
            let s = State::from_label(label).ok_or_else(|| parse_err(i, "bad state label"))?;
            if s.0 != values.len() {
                return Err(parse_err(i, "states out of order"));
            }
            values.push(v.trim().parse().map_err(|_| parse_err(i, "bad value"))?);
        }
        Ok(ValueTable { values })
    }
}

fn parse_err(line_idx: usize, msg: &str) -> Error {
    Error::Parse {
        line: line_idx + 1,
        msg: msg.into(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    q: Vec<[f64; 4]>,
}

impl QTable {
    pub fn zeros(n_states: usize) -> Self {
        QTable {
            q: vec![[0.0; 4]; n_states],
        }
    }

    pub fn get(&self, s: State, a: Action) -> f64 {
        self.q[s.0][a.code()]
    }

    pub fn set(&mut self, s: State, a: Action, v: f64) {
        self.q[s.0][a.code()] = v;
    }

    pub fn row(&self, s: State) -> &[f64; 4] {
        &self.q[s.0]
    }

    pub fn max(&self, s: State) -> f64 {
        self.q[s.0].iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Best action, lowest encoding on ties.
    pub fn argmax(&self, s: State) -> Action {
        argmax_first(Action::ALL.iter().map(|&a| (a, self.get(s, a))))
    }

    pub fn n_states(&self) -> usize {
        self.q.len()
    }

    pub fn to_csv(&self, spec: &GridSpec) -> String {
        let mut out = String::from("state_label,action,q\n");
        for s in spec.non_terminal_states() {
            for a in Action::ALL {
                let _ = writeln!(out, "{},{},{}", s.label(), a.code(), self.get(s, a));
            }
        }
        out
    }
}

/// Deterministic argmax over (action, score) pairs; the first maximizer wins.
pub(crate) fn argmax_first(scores: impl Iterator<Item = (Action, f64)>) -> Action {
    let mut best = (Action::Up, f64::NEG_INFINITY);
    for (a, v) in scores {
        if v > best.1 {
            best = (a, v);
        }
    }
    best.0
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Policy {
    choice: Vec<Option<Action>>,
}

impl Policy {
    pub fn from_fn(spec: &GridSpec, mut f: impl FnMut(State) -> Action) -> Self {
        Policy {
            choice: spec
                .states()
                .map(|s| (!spec.is_goal(s)).then(|| f(s)))
                .collect(),
        }
    }

    pub fn get(&self, s: State) -> Option<Action> {
        self.choice.get(s.0).copied().flatten()
    }

    /// Action at a non-terminal state. Panics at the goal.
    pub fn action(&self, s: State) -> Action {
        self.get(s).expect("policy is defined on every non-terminal state")
    }

    pub fn render(&self, spec: &GridSpec) -> String {
        let mut out = String::new();
        for s in spec.states() {
            out.push(match self.get(s) {
                Some(a) => a.arrow(),
                None => 'G',
            });
            if (s.0 + 1) % spec.width() == 0 {
                out.push('\n');
            }
        }
        out
    }
}

/// One-step lookahead `argmax_a [r(s, a) + γ · value(next)]` in the true environment.
pub fn greedy_action(
    spec: &GridSpec,
    model: &RewardModel,
    s: State,
    gamma: f64,
    mut value: impl FnMut(State) -> f64,
) -> Action {
    argmax_first(Action::ALL.iter().map(|&a| {
        let next = spec.successor(s, a);
        (a, model.transition_reward(spec, next) + gamma * value(next))
    }))
}

#[derive(Debug, Clone)]
pub struct ValueIterationOutcome {
    pub values: ValueTable,
    pub sweeps: usize,
    /// Max per-state change of every sweep, in order.
    pub residuals: Vec<f64>,
}

/// Synchronous value iteration to a fixed point of the arrival recurrence.
pub fn value_iteration(
    spec: &GridSpec,
    model: &RewardModel,
    gamma: f64,
    tolerance: f64,
    max_sweeps: usize,
) -> Result<ValueIterationOutcome> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::InvalidConfig(format!("gamma {gamma} outside [0, 1)")));
    }
    if tolerance <= 0.0 {
        return Err(Error::InvalidConfig("tolerance must be positive".into()));
    }
    let mut values = ValueTable::zeros(spec.n_states());
    values.set(spec.goal(), model.goal_reward);
    let mut residuals = Vec::new();
    for sweep in 1..=max_sweeps {
        let next = bellman_backup(spec, model, gamma, &values);
        let delta = next.max_abs_diff(&values);
        values = next;
        residuals.push(delta);
        if delta < tolerance {
            return Ok(ValueIterationOutcome {
                values,
                sweeps: sweep,
                residuals,
            });
        }
    }
    Err(Error::NotConverged {
        sweeps: max_sweeps,
        residual: residuals.last().copied().unwrap_or(f64::INFINITY),
    })
}

/// One synchronous sweep of the arrival-convention Bellman operator.
pub fn bellman_backup(spec: &GridSpec, model: &RewardModel, gamma: f64, values: &ValueTable) -> ValueTable {
    let mut next = ValueTable::zeros(spec.n_states());
    for s in spec.states() {
        let v = if spec.is_goal(s) {
            model.goal_reward
        } else {
            let best = Action::ALL
                .iter()
                .map(|&a| values.get(spec.successor(s, a)))
                .fold(f64::NEG_INFINITY, f64::max);
            model.arrival_reward(spec, s) + gamma * best
        };
        next.set(s, v);
    }
    next
}

pub fn greedy_policy(spec: &GridSpec, model: &RewardModel, values: &ValueTable, gamma: f64) -> Policy {
    Policy::from_fn(spec, |s| greedy_action(spec, model, s, gamma, |n| values.get(n)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct QLearningConfig {
    pub alpha: f64,
    pub gamma: f64,
    pub episodes: usize,
    pub epsilon0: f64,
    pub epsilon_decay: f64,
    pub max_steps: usize,
    pub rng_seed: u64,
}

impl Default for QLearningConfig {
    fn default() -> Self {
        QLearningConfig {
            alpha: 0.9,
            gamma: 0.9,
            episodes: 5000,
            epsilon0: 0.9,
            epsilon_decay: 0.99,
            max_steps: 100,
            rng_seed: 0,
        }
    }
}

impl QLearningConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |x: f64| x > 0.0 && x <= 1.0;
        if !unit(self.alpha) || !unit(self.epsilon0) || !unit(self.epsilon_decay) {
            return Err(Error::InvalidConfig(
                "alpha, epsilon0 and epsilon_decay must lie in (0, 1]".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::InvalidConfig(format!("gamma {} outside [0, 1)", self.gamma)));
        }
        if self.max_steps == 0 {
            return Err(Error::InvalidConfig("max_steps must be positive".into()));
        }
        Ok(())
    }

    pub fn epsilon(&self, episode: usize) -> f64 {
        self.epsilon0 * self.epsilon_decay.powi(episode as i32)
    }
}

/// ε-greedy tabular Q-learning from the start state, zero-initialized, with a
/// zero bootstrap when the successor is the goal.
pub fn q_learning(spec: &GridSpec, model: &RewardModel, config: &QLearningConfig) -> Result<QTable> {
    config.validate()?;
    let mut q = QTable::zeros(spec.n_states());
    let mut rng = rng::seeded(config.rng_seed);
    for episode in 0..config.episodes {
        let eps = config.epsilon(episode);
        let mut s = spec.start();
        for _ in 0..config.max_steps {
            let a = if rng.gen::<f64>() < eps {
                Action::ALL[rng.gen_range(0..4)]
            } else {
                q.argmax(s)
            };
            let out = step(spec, model, s, a)?;
            let bootstrap = if out.terminal { 0.0 } else { q.max(out.next) };
            let old = q.get(s, a);
            q.set(s, a, old + config.alpha * (out.reward + config.gamma * bootstrap - old));
            if out.terminal {
                break;
            }
            s = out.next;
        }
    }
    Ok(q)
}

/// Value of each state read off the best Q-value among transitions into it.
pub fn state_values_from_q(spec: &GridSpec, q: &QTable, goal_reward: f64) -> Result<ValueTable> {
    let mut best = vec![f64::NEG_INFINITY; spec.n_states()];
    for s in spec.non_terminal_states() {
        for a in Action::ALL {
            let next = spec.successor(s, a);
            best[next.0] = best[next.0].max(q.get(s, a));
        }
    }
    best[spec.goal().0] = goal_reward;
    let missing: Vec<State> = spec.states().filter(|s| best[s.0] == f64::NEG_INFINITY).collect();
    if !missing.is_empty() {
        return Err(Error::Unreachable(missing));
    }
    Ok(ValueTable::from_vec(best))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn st(label: &str) -> State {
        State::from_label(label).unwrap()
    }

    fn lake_vi(gamma: f64) -> ValueIterationOutcome {
        value_iteration(&GridSpec::frozen_lake(), &RewardModel::dp_arrival(), gamma, 1e-6, 1000).unwrap()
    }

    #[test]
    fn value_iteration_published_cells() {
        let v = lake_vi(0.9).values;
        for (label, expected) in [
            ("A", 5.31),
            ("C", 6.56),
            ("G", 7.29),
            ("O", 9.0),
            ("P", 10.0),
            ("F", -3.44),
            ("L", -1.0),
            ("M", -2.71),
        ] {
            assert!((v.get(st(label)) - expected).abs() <= 0.01, "{label}: {}", v.get(st(label)));
        }
    }

    #[test]
    fn zero_discount_gives_arrival_rewards() {
        let spec = GridSpec::frozen_lake();
        let v = lake_vi(0.0).values;
        for s in spec.states() {
            let expected = if spec.is_goal(s) {
                10.0
            } else if spec.is_hole(s) {
                -10.0
            } else {
                0.0
            };
            assert_eq!(v.get(s), expected);
        }
    }

    #[test]
    fn non_convergence_reported() {
        let err = value_iteration(&GridSpec::frozen_lake(), &RewardModel::dp_arrival(), 0.9, 1e-9, 3);
        assert!(matches!(err, Err(Error::NotConverged { sweeps: 3, .. })));
    }

    #[test]
    fn bad_gamma_rejected() {
        let err = value_iteration(&GridSpec::frozen_lake(), &RewardModel::dp_arrival(), 1.0, 1e-6, 3);
        assert!(matches!(err, Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn residuals_contract_after_first_sweep() {
        let out = lake_vi(0.9);
        for w in out.residuals[1..].windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "{:?}", out.residuals);
        }
    }

    #[test]
    fn greedy_policy_examples() {
        let spec = GridSpec::frozen_lake();
        let model = RewardModel::dp_arrival();
        let v = lake_vi(0.9).values;
        let pi = greedy_policy(&spec, &model, &v, 0.9);
        assert_eq!(pi.action(st("O")), Action::Right);
        // B and E tie at A; Down has the lower encoding.
        assert_eq!(pi.action(st("A")), Action::Down);
        assert_eq!(pi.get(spec.goal()), None);
    }

    #[test]
    fn flat_values_pick_best_immediate_reward() {
        let spec = GridSpec::frozen_lake();
        let pi = greedy_policy(&spec, &RewardModel::dp_arrival(), &ValueTable::zeros(16), 0.9);
        // A: every move is worth 0, so Up wins the tie.
        assert_eq!(pi.action(st("A")), Action::Up);
        // B: Down enters the hole F; the others tie at 0.
        assert_eq!(pi.action(st("B")), Action::Up);
        // O: Right enters the goal.
        assert_eq!(pi.action(st("O")), Action::Right);
        // G: Right enters the hole H; Up wins the tie.
        assert_eq!(pi.action(st("G")), Action::Up);
    }

    #[test]
    fn zero_episode_q_learning_is_all_zero() {
        let spec = GridSpec::frozen_lake();
        let cfg = QLearningConfig {
            episodes: 0,
            ..Default::default()
        };
        let q = q_learning(&spec, &RewardModel::dp_arrival(), &cfg).unwrap();
        assert_eq!(q, QTable::zeros(16));
        let v = state_values_from_q(&spec, &q, 10.0).unwrap();
        for s in spec.non_terminal_states() {
            assert_eq!(v.get(s), 0.0);
        }
        assert_eq!(v.get(spec.goal()), 10.0);
    }

    #[test]
    fn alpha_one_overwrites_with_target() {
        // One random step from O with zero-initialized Q: the visited pair
        // holds exactly its one-step target r + γ·0.
        let lake = GridSpec::frozen_lake();
        let spec = GridSpec::new(4, 4, st("O"), st("P"), lake.holes().iter().copied()).unwrap();
        let model = RewardModel::dp_arrival();
        let mut saw_goal = false;
        for seed in 0..32 {
            let cfg = QLearningConfig {
                alpha: 1.0,
                episodes: 1,
                epsilon0: 1.0,
                max_steps: 1,
                rng_seed: seed,
                ..Default::default()
            };
            let q = q_learning(&spec, &model, &cfg).unwrap();
            for a in Action::ALL {
                let target = model.arrival_reward(&spec, spec.successor(st("O"), a));
                let v = q.get(st("O"), a);
                assert!(v == 0.0 || v == target);
            }
            saw_goal |= q.get(st("O"), Action::Right) == 10.0;
        }
        assert!(saw_goal);
    }

    #[test]
    fn q_learning_is_seed_deterministic() {
        let spec = GridSpec::frozen_lake();
        let cfg = QLearningConfig {
            episodes: 300,
            rng_seed: 5,
            ..Default::default()
        };
        let a = q_learning(&spec, &RewardModel::dp_arrival(), &cfg).unwrap();
        let b = q_learning(&spec, &RewardModel::dp_arrival(), &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn q_learning_matches_value_iteration() {
        let spec = GridSpec::frozen_lake();
        let cfg = QLearningConfig {
            rng_seed: 1,
            ..Default::default()
        };
        let q = q_learning(&spec, &RewardModel::dp_arrival(), &cfg).unwrap();
        let v = state_values_from_q(&spec, &q, 10.0).unwrap();
        let vi = lake_vi(0.9).values;
        assert!(v.max_abs_diff(&vi) < 0.15, "{v:?}");
        assert!((v.get(st("K")) - 8.1).abs() < 0.15);
        assert!((v.get(st("F")) + 3.44).abs() < 0.15);
    }

    #[test]
    fn value_table_csv_round_trip() {
        let v = lake_vi(0.9).values;
        let back = ValueTable::from_csv(&v.to_csv()).unwrap();
        assert_eq!(v, back);
    }
}
