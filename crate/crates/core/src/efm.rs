//! Extracted-feature transition model (EFM) and the end-to-end pipeline.
//!
//! The EFM maps `(feature, action) → (next feature, reward)`. It is built by
//! exploring the real environment and translating every visited state through
//! a [`StateFeatureMap`]; afterwards a second value network is trained by
//! fitted value iteration that only ever consults the table.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use crate::clock::Instant;

use rand::Rng as _;

use crate::encoding::{Features, NoisyOneHot, OneHot, StateEncoder};
use crate::error::{Error, Result};
use crate::features::{
    build_state_feature_map, parse_bits, FeatureVector, NoiseAugmenter, NoiseMode, StateFeatureMap,
    DEFAULT_FEATURE_LAYER,
};
use crate::gridworld::{run_episode, step, Action, GridSpec, RewardModel, RewardVariant, State};
use crate::learners::{
    dqn_q_table, train_ddpn_q_distill, train_dqn, DdpnConfig, DqnConfig, Phase, TraceRecord, TrainingTrace,
};
use crate::nn::{self, AdamState, Batch, Network};
use crate::rng::{self, derive_seed};
use crate::tabular::{
    argmax_first, q_learning, state_values_from_q, Policy, QLearningConfig, QTable, ValueTable,
};

#[derive(Debug, Clone, PartialEq)]
pub struct EfmTransition {
    pub next: FeatureVector,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Efm {
    table: BTreeMap<(FeatureVector, Action), EfmTransition>,
    coverage: BTreeSet<(State, Action)>,
    fmap_id: String,
    reward_variant: RewardVariant,
    episodes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExplorationConfig {
    pub epsilon0: f64,
    pub epsilon_decay: f64,
    pub max_episodes: usize,
    pub max_steps: usize,
    /// Discount used by the guided lookahead.
    pub guide_gamma: f64,
    pub seed: u64,
}

impl ExplorationConfig {
    pub fn new(seed: u64) -> Self {
        ExplorationConfig {
            epsilon0: 0.9,
            epsilon_decay: 0.99,
            max_episodes: 1000,
            max_steps: 100,
            guide_gamma: 0.9,
            seed,
        }
    }

    /// ε for episode `n` (0-based).
    pub fn epsilon(&self, n: usize) -> f64 {
        self.epsilon0 * self.epsilon_decay.powi(n as i32)
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |x: f64| x > 0.0 && x <= 1.0;
        if !unit(self.epsilon0) || !unit(self.epsilon_decay) || self.max_steps == 0 {
            return Err(Error::InvalidConfig(
                "exploration needs epsilon0, epsilon_decay in (0, 1] and max_steps > 0".into(),
            ));
        }
        Ok(())
    }
}

impl Efm {
    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    /// State-action pairs visited while building the table.
    pub fn coverage(&self) -> &BTreeSet<(State, Action)> {
        &self.coverage
    }

    pub fn fmap_id(&self) -> &str {
        &self.fmap_id
    }

    pub fn reward_variant(&self) -> RewardVariant {
        self.reward_variant
    }

    /// Episodes of exploration used to build the table.
    pub fn episodes(&self) -> usize {
        self.episodes
    }

    pub fn entries(&self) -> impl Iterator<Item = (&FeatureVector, Action, &EfmTransition)> {
        self.table.iter().map(|((f, a), t)| (f, *a, t))
    }

    /// Exact-match lookup; a missing key is an error, never a fallback.
    pub fn lookup(&self, f: &FeatureVector, a: Action) -> Result<&EfmTransition> {
        self.table.get(&(f.clone(), a)).ok_or_else(|| Error::EfmMiss {
            feature: f.to_string(),
            action: a,
        })
    }

    /// `f_0..f_{n-1},action,next_0..next_{n-1},reward`, one row per entry.
    pub fn to_csv(&self) -> String {
        let width = self.table.keys().next().map_or(0, |(f, _)| f.len());
        let mut out = String::new();
        let cols: Vec<String> = (0..width)
            .map(|i| format!("f_{i}"))
            .chain(std::iter::once("action".to_string()))
            .chain((0..width).map(|i| format!("next_{i}")))
            .chain(std::iter::once("reward".to_string()))
            .collect();
        out.push_str(&cols.join(","));
        out.push('\n');
        for ((f, a), t) in &self.table {
            for b in f.bits() {
                let _ = write!(out, "{b},");
            }
            let _ = write!(out, "{},", a.code());
            for b in t.next.bits() {
                let _ = write!(out, "{b},");
            }
            let _ = writeln!(out, "{}", t.reward);
        }
        out
    }

    /// Reloads a table written by [`to_csv`](Self::to_csv). Coverage and
    /// exploration counts are not stored in the file.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut table = BTreeMap::new();
        for (i, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let line_no = i + 1;
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() < 4 || cols.len() % 2 != 0 {
                return Err(Error::Parse {
                    line: line_no,
                    msg: "wrong column count".into(),
                });
            }
            let width = (cols.len() - 2) / 2;
            let f = parse_bits(cols[..width].iter().copied(), line_no)?;
            let a = cols[width]
                .parse()
                .ok()
                .and_then(Action::from_code)
                .ok_or_else(|| Error::Parse {
                    line: line_no,
                    msg: "bad action code".into(),
                })?;
            let next = parse_bits(cols[width + 1..2 * width + 1].iter().copied(), line_no)?;
            let reward = cols[2 * width + 1].trim().parse().map_err(|_| Error::Parse {
                line: line_no,
                msg: "bad reward".into(),
            })?;
            table.insert((f, a), EfmTransition { next, reward });
        }
        Ok(Efm {
            table,
            coverage: BTreeSet::new(),
            fmap_id: String::new(),
            reward_variant: RewardVariant::DpArrival,
            episodes: 0,
        })
    }
}

/// Free-function form of [`Efm::lookup`].
pub fn efm_lookup<'a>(efm: &'a Efm, f: &FeatureVector, a: Action) -> Result<&'a EfmTransition> {
    efm.lookup(f, a)
}

/// Explores with decaying ε-greedy until every non-terminal (state, action)
/// pair has been recorded. The greedy branch follows `guide_values` by
/// one-step lookahead; without a guide every action is random.
/// Greedy lookahead over the guide values, restricted to actions not yet
/// tried from `s` while any remain. Without the restriction a value-greedy
/// guide never leaves the optimal path once ε has decayed, and pairs such as
/// those in a dead-end corner stay uncovered.
fn guided_action(
    spec: &GridSpec,
    model: &RewardModel,
    s: State,
    gamma: f64,
    values: &ValueTable,
    coverage: &BTreeSet<(State, Action)>,
) -> Action {
    let untried: Vec<Action> = Action::ALL.into_iter().filter(|&a| !coverage.contains(&(s, a))).collect();
    let candidates = if untried.is_empty() { Action::ALL.to_vec() } else { untried };
    argmax_first(candidates.into_iter().map(|a| {
        let next = spec.successor(s, a);
        (a, model.transition_reward(spec, next) + gamma * values.get(next))
    }))
}

pub fn build_efm(
    spec: &GridSpec,
    model: &RewardModel,
    fmap: &StateFeatureMap,
    explore: &ExplorationConfig,
    guide_values: Option<&ValueTable>,
) -> Result<Efm> {
    explore.validate()?;
    if fmap.len() != spec.n_states() {
        return Err(Error::Dimension {
            expected: spec.n_states(),
            got: fmap.len(),
        });
    }
    let needed = spec.non_terminal_states().count() * Action::ALL.len();
    let mut rng = rng::seeded(explore.seed);
    let mut table: BTreeMap<(FeatureVector, Action), EfmTransition> = BTreeMap::new();
    let mut coverage = BTreeSet::new();
    let mut episodes = 0;

    while coverage.len() < needed && episodes < explore.max_episodes {
        let eps = explore.epsilon(episodes);
        let mut s = spec.start();
        for _ in 0..explore.max_steps {
            let a = match guide_values {
                Some(v) if rng.gen::<f64>() >= eps => guided_action(spec, model, s, explore.guide_gamma, v, &coverage),
                _ => Action::ALL[rng.gen_range(0..4)],
            };
            let out = step(spec, model, s, a)?;
            let key = (fmap.get(s).clone(), a);
            let value = EfmTransition {
                next: fmap.get(out.next).clone(),
                reward: out.reward,
            };
            match table.get(&key) {
                Some(existing) if existing != &value => {
                    return Err(Error::EfmConflict {
                        feature: key.0.to_string(),
                        action: a,
                    })
                }
                Some(_) => {}
                None => {
                    table.insert(key, value);
                }
            }
            coverage.insert((s, a));
            if out.terminal {
                break;
            }
            s = out.next;
        }
        episodes += 1;
    }

    if coverage.len() < needed {
        let missing = spec
            .non_terminal_states()
            .flat_map(|s| Action::ALL.map(|a| (s, a)))
            .filter(|p| !coverage.contains(p))
            .collect();
        return Err(Error::Coverage { episodes, missing });
    }
    Ok(Efm {
        table,
        coverage,
        fmap_id: fmap.id(),
        reward_variant: model.variant,
        episodes,
    })
}

/// `argmax_a [r + γ·V̂(f')]` over EFM lookups, lowest action code on ties.
pub fn efm_greedy_action(efm: &Efm, net: &Network, f: &FeatureVector, gamma: f64) -> Result<Action> {
    let mut scores = Vec::with_capacity(Action::ALL.len());
    for a in Action::ALL {
        let t = efm.lookup(f, a)?;
        scores.push((a, t.reward + gamma * net.predict_scalar(&t.next.to_input())?));
    }
    Ok(argmax_first(scores.into_iter()))
}

/// The EFM-greedy policy pulled back to real states through `fmap`.
pub fn efm_policy(efm: &Efm, net: &Network, fmap: &StateFeatureMap, spec: &GridSpec, gamma: f64) -> Result<Policy> {
    let mut failure = None;
    let policy = Policy::from_fn(spec, |s| {
        efm_greedy_action(efm, net, fmap.get(s), gamma).unwrap_or_else(|e| {
            failure.get_or_insert(e);
            Action::Up
        })
    });
    match failure {
        Some(e) => Err(e),
        None => Ok(policy),
    }
}

/// Fitted value iteration inside the EFM. Targets are
/// `T(f) = r_in(f) + γ·max_a V̂(f'(f, a))`, where `r_in(f)` is the reward
/// recorded for transitions into `f` (0 if none) and the goal's feature is
/// pinned to the goal reward. Evaluation rolls the EFM-greedy policy out in
/// the real environment.
pub fn train_ddpn2(
    spec: &GridSpec,
    efm: &Efm,
    config: &DdpnConfig,
    fmap: &StateFeatureMap,
) -> Result<(Network, TrainingTrace)> {
    config.validate()?;
    let goal_reward = RewardModel::dp_arrival().goal_reward;
    let goal_feature = fmap.get(spec.goal()).clone();
    let mut features: Vec<FeatureVector> = Vec::new();
    for f in fmap.entries() {
        if !features.contains(f) {
            features.push(f.clone());
        }
    }
    let mut arrival: HashMap<&FeatureVector, f64> = HashMap::new();
    for (_, _, t) in efm.entries() {
        arrival.insert(&t.next, t.reward);
    }
    let inputs: Vec<Vec<f64>> = features.iter().map(FeatureVector::to_input).collect();
    let width = inputs[0].len();

    let mut net = Network::new(&config.layer_specs(width), derive_seed(config.seed, "init"), config.zero_final)?;
    let mut adam = AdamState::new(&net, config.learning_rate);
    let mut trace = TrainingTrace::default();
    let clock = Instant::now();
    let fit_seed = derive_seed(config.seed, "fit");
    let limit = 10.0 * goal_reward;
    let mut losses = Vec::new();

    let predict_all = |net: &Network| -> Result<HashMap<FeatureVector, f64>> {
        features
            .iter()
            .zip(&inputs)
            .map(|(f, x)| Ok((f.clone(), net.predict_scalar(x)?)))
            .collect()
    };

    for it in 1..=config.bellman_iterations {
        let v = if it == 1 {
            features.iter().map(|f| (f.clone(), 0.0)).collect()
        } else {
            predict_all(&net)?
        };
        if let Some((f, x)) = v.iter().find(|(_, x)| !x.is_finite() || x.abs() > limit) {
            return Err(Error::Diverged {
                iteration: it,
                state: fmap.state_of(f).unwrap_or(State(0)),
                magnitude: x.abs(),
            });
        }
        let mut data = Vec::with_capacity(features.len());
        for (f, x) in features.iter().zip(&inputs) {
            let target = if *f == goal_feature {
                goal_reward
            } else {
                let mut best = f64::NEG_INFINITY;
                for a in Action::ALL {
                    let t = efm.lookup(f, a)?;
                    best = best.max(v[&t.next]);
                }
                arrival.get(f).copied().unwrap_or(0.0) + config.gamma * best
            };
            data.push((x.clone(), vec![target]));
        }
        let hist = nn::fit(&mut net, &mut adam, &data, config.epochs_per_iteration, Batch::Full, fit_seed ^ it as u64)?;
        if !hist.is_empty() {
            losses.push(hist.iter().sum::<f64>() / hist.len() as f64);
        }
        if it % config.eval_every == 0 {
            let reward = evaluate_efm_policy(spec, efm, &net, fmap, config)?;
            let loss = if losses.is_empty() {
                0.0
            } else {
                losses.iter().sum::<f64>() / losses.len() as f64
            };
            losses.clear();
            trace.records.push(TraceRecord {
                iteration: it,
                phase: Phase::Train,
                reward,
                loss: Some(loss),
                seconds: clock.elapsed().as_secs_f64(),
            });
        }
    }
    let reward = evaluate_efm_policy(spec, efm, &net, fmap, config)?;
    for k in 1..=config.test_episodes {
        trace.records.push(TraceRecord {
            iteration: k,
            phase: Phase::Test,
            reward,
            loss: None,
            seconds: clock.elapsed().as_secs_f64(),
        });
    }
    Ok((net, trace))
}

fn evaluate_efm_policy(
    spec: &GridSpec,
    efm: &Efm,
    net: &Network,
    fmap: &StateFeatureMap,
    config: &DdpnConfig,
) -> Result<f64> {
    let policy = efm_policy(efm, net, fmap, spec, config.gamma)?;
    Ok(run_episode(
        spec,
        &RewardModel::episode_eval(),
        |s| policy.action(s),
        config.max_steps,
        config.budget_floor,
    )
    .total_reward)
}

/// DDPN2 predictions pulled back to states.
pub fn ddpn2_state_values(net: &Network, fmap: &StateFeatureMap) -> Result<ValueTable> {
    fmap.entries()
        .iter()
        .map(|f| net.predict_scalar(&f.to_input()))
        .collect::<Result<Vec<_>>>()
        .map(ValueTable::from_vec)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QSource {
    Tabular,
    Dqn,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub master_seed: u64,
    pub noisy: bool,
    pub n_noise: usize,
    pub q_source: QSource,
    pub qlearning: QLearningConfig,
    pub dqn: DqnConfig,
    pub ddpn1: DdpnConfig,
    pub ddpn2: DdpnConfig,
    pub explore: ExplorationConfig,
    pub layer_index: usize,
    /// Training runs allowed for DDPN1 before a colliding feature map is
    /// accepted as is.
    pub feature_attempts: usize,
}

impl PipelineConfig {
    /// Defaults with every stage seeded from `master_seed`.
    pub fn new(master_seed: u64, noisy: bool) -> Self {
        let seed = |label| derive_seed(master_seed, label);
        PipelineConfig {
            master_seed,
            noisy,
            n_noise: 20,
            q_source: QSource::Tabular,
            qlearning: QLearningConfig {
                rng_seed: seed("qlearning"),
                ..QLearningConfig::default()
            },
            dqn: DqnConfig::new(seed("dqn")),
            ddpn1: DdpnConfig::full(seed("ddpn1")),
            ddpn2: DdpnConfig::reduced(seed("ddpn2")),
            explore: ExplorationConfig::new(seed("explore")),
            layer_index: DEFAULT_FEATURE_LAYER,
            feature_attempts: DEFAULT_FEATURE_ATTEMPTS,
        }
    }

    fn noise(&self, label: &str, mode: NoiseMode) -> NoiseAugmenter {
        let n = if self.noisy { self.n_noise } else { 0 };
        NoiseAugmenter::new(n, derive_seed(self.master_seed, label), mode)
    }
}

pub const DEFAULT_FEATURE_ATTEMPTS: usize = 20;

/// Seed for training attempt `attempt`; attempt 0 keeps `seed` itself.
pub fn attempt_seed(seed: u64, attempt: usize) -> u64 {
    if attempt == 0 {
        seed
    } else {
        derive_seed(seed, &format!("attempt-{attempt}"))
    }
}

/// A trained network together with the feature map read from it.
#[derive(Debug, Clone)]
pub struct FeatureSource {
    pub net: Network,
    pub trace: TrainingTrace,
    pub fmap: StateFeatureMap,
    /// Training runs consumed, including the accepted one.
    pub attempts: usize,
}

/// Calls `train(attempt)` until the extracted map is injective or
/// `max_attempts` runs have been made. Binarized codes from a value-trained
/// layer tend to follow the value ordering, so an individual run can merge
/// states; the EFM needs a lossless map. The last run is returned either way;
/// callers see collisions through [`StateFeatureMap::collisions`].
pub fn retrain_until_injective<F>(max_attempts: usize, mut train: F) -> Result<FeatureSource>
where
    F: FnMut(usize) -> Result<(Network, TrainingTrace, StateFeatureMap)>,
{
    let mut attempt = 0;
    loop {
        let (net, trace, fmap) = train(attempt)?;
        attempt += 1;
        if fmap.is_injective() || attempt >= max_attempts.max(1) {
            return Ok(FeatureSource {
                net,
                trace,
                fmap,
                attempts: attempt,
            });
        }
    }
}

#[derive(Debug, Clone)]
pub enum QEstimate {
    Tabular(QTable),
    Dqn {
        net: Network,
        trace: TrainingTrace,
        q: QTable,
    },
}

impl QEstimate {
    pub fn q_table(&self) -> &QTable {
        match self {
            QEstimate::Tabular(q) => q,
            QEstimate::Dqn { q, .. } => q,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PipelineArtifacts {
    pub q_estimate: QEstimate,
    pub q_values: ValueTable,
    pub ddpn1: Network,
    pub ddpn1_trace: TrainingTrace,
    pub ddpn1_attempts: usize,
    pub fmap: StateFeatureMap,
    pub efm: Efm,
    pub ddpn2: Network,
    pub ddpn2_trace: TrainingTrace,
    pub ddpn2_values: ValueTable,
    pub policy: Policy,
}

/// Steps (i)–(vi): Q estimation, value-network distillation, feature
/// extraction, EFM construction, EFM-only value learning, EFM-greedy acting.
pub fn run_deepmod_pipeline(spec: &GridSpec, config: &PipelineConfig) -> Result<PipelineArtifacts> {
    let dp = RewardModel::dp_arrival();

    let q_estimate = match config.q_source {
        QSource::Tabular => {
            QEstimate::Tabular(q_learning(spec, &dp, &config.qlearning).map_err(Error::in_stage("step i (Q-learning)"))?)
        }
        QSource::Dqn => {
            let mut enc = NoisyOneHot::new(spec, config.noise("dqn-noise", NoiseMode::Resample));
            let (net, trace) = train_dqn(spec, &config.dqn, &mut enc).map_err(Error::in_stage("step i (DQN)"))?;
            let mut read = NoisyOneHot::new(spec, config.noise("dqn-read", NoiseMode::FixedPerState));
            let q = dqn_q_table(&net, &mut read, spec).map_err(Error::in_stage("step i (DQN)"))?;
            QEstimate::Dqn { net, trace, q }
        }
    };
    let q_values = state_values_from_q(spec, q_estimate.q_table(), dp.goal_reward)
        .map_err(Error::in_stage("step ii (state values)"))?;

    let source = retrain_until_injective(config.feature_attempts, |attempt| {
        let ddpn1_config = DdpnConfig {
            seed: attempt_seed(config.ddpn1.seed, attempt),
            ..config.ddpn1.clone()
        };
        let mut input: Box<dyn StateEncoder> = if config.noisy {
            let base = config.noise("ddpn1-noise", NoiseMode::Resample);
            let noise = NoiseAugmenter::new(base.n_noise(), attempt_seed(base.seed(), attempt), NoiseMode::Resample);
            Box::new(NoisyOneHot::new(spec, noise))
        } else {
            Box::new(OneHot::new(spec))
        };
        let (net, trace) = train_ddpn_q_distill(spec, &ddpn1_config, input.as_mut(), &q_values)
            .map_err(Error::in_stage("step ii (DDPN1)"))?;
        let mut extract_noise = config.noise("extract-noise", NoiseMode::FixedPerState);
        let fmap = build_state_feature_map(&net, spec, config.noisy.then_some(&mut extract_noise), config.layer_index)
            .map_err(Error::in_stage("step iii (feature extraction)"))?;
        Ok((net, trace, fmap))
    })?;
    let FeatureSource {
        net: ddpn1,
        trace: ddpn1_trace,
        fmap,
        attempts: ddpn1_attempts,
    } = source;

    let efm = build_efm(spec, &dp, &fmap, &config.explore, Some(&q_values)).map_err(Error::in_stage("step iv (EFM)"))?;

    let (ddpn2, ddpn2_trace) =
        train_ddpn2(spec, &efm, &config.ddpn2, &fmap).map_err(Error::in_stage("step v (DDPN2)"))?;
    let ddpn2_values = ddpn2_state_values(&ddpn2, &fmap).map_err(Error::in_stage("step v (DDPN2)"))?;

    let policy =
        efm_policy(&efm, &ddpn2, &fmap, spec, config.ddpn2.gamma).map_err(Error::in_stage("step vi (policy)"))?;

    Ok(PipelineArtifacts {
        q_estimate,
        q_values,
        ddpn1,
        ddpn1_trace,
        ddpn1_attempts,
        fmap,
        efm,
        ddpn2,
        ddpn2_trace,
        ddpn2_values,
        policy,
    })
}

/// Reduced value network trained by fitted value iteration on feature codes
/// in the real environment (no EFM involved).
pub fn train_reduced_on_features(
    spec: &GridSpec,
    config: &DdpnConfig,
    fmap: &StateFeatureMap,
) -> Result<(Network, TrainingTrace)> {
    crate::learners::train_ddpn(spec, config, &mut Features::new(fmap))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{FeatureProvenance, StateFeatureMap};

    /// A hand-made injective map: state i gets the binary code of i in ±1.
    fn code_map(spec: &GridSpec) -> StateFeatureMap {
        let entries = spec
            .states()
            .map(|s| {
                let bits = (0..32).map(|k| if (s.0 >> (k % 8)) & 1 == 1 { 1 } else { -1 }).collect();
                FeatureVector::from_bits(bits).unwrap()
            })
            .collect();
        StateFeatureMap::new(
            entries,
            FeatureProvenance {
                checkpoint_id: "hand".into(),
                layer_index: 3,
                noise_seed: None,
            },
        )
    }

    #[test]
    fn epsilon_schedule() {
        let e = ExplorationConfig::new(0);
        assert!((e.epsilon(10) - 0.9 * 0.99f64.powi(10)).abs() < 1e-15);
        assert!((e.epsilon(10) - 0.814).abs() < 1e-3);
        for n in 0..500 {
            assert!(e.epsilon(n + 1) < e.epsilon(n));
            assert!(e.epsilon(n) > 0.0);
        }
    }

    #[test]
    fn full_coverage_has_sixty_entries() {
        let spec = GridSpec::frozen_lake();
        let fmap = code_map(&spec);
        let efm = build_efm(&spec, &RewardModel::dp_arrival(), &fmap, &ExplorationConfig::new(3), None).unwrap();
        assert_eq!(efm.len(), 60);
        assert_eq!(efm.coverage().len(), 60);
    }

    #[test]
    fn lookups_match_environment() {
        let spec = GridSpec::frozen_lake();
        let dp = RewardModel::dp_arrival();
        let fmap = code_map(&spec);
        let efm = build_efm(&spec, &dp, &fmap, &ExplorationConfig::new(4), None).unwrap();
        let o = State::from_label("O").unwrap();
        let t = efm_lookup(&efm, fmap.get(o), Action::Right).unwrap();
        assert_eq!(&t.next, fmap.get(spec.goal()));
        assert_eq!(t.reward, 10.0);
        for s in spec.non_terminal_states() {
            for a in Action::ALL {
                let out = step(&spec, &dp, s, a).unwrap();
                let t = efm.lookup(fmap.get(s), a).unwrap();
                assert_eq!(&t.next, fmap.get(out.next));
                assert_eq!(t.reward, out.reward);
            }
        }
    }

    #[test]
    fn unseen_feature_is_a_miss() {
        let spec = GridSpec::frozen_lake();
        let fmap = code_map(&spec);
        let efm = build_efm(&spec, &RewardModel::dp_arrival(), &fmap, &ExplorationConfig::new(4), None).unwrap();
        let foreign = FeatureVector::from_bits(vec![1; 32]).unwrap();
        assert!(matches!(efm.lookup(&foreign, Action::Up), Err(Error::EfmMiss { .. })));
        // The goal has no outgoing entries.
        assert!(efm.lookup(fmap.get(spec.goal()), Action::Up).is_err());
    }

    #[test]
    fn coverage_shortfall_lists_missing_pairs() {
        let spec = GridSpec::frozen_lake();
        let fmap = code_map(&spec);
        let explore = ExplorationConfig {
            max_episodes: 1,
            max_steps: 3,
            ..ExplorationConfig::new(1)
        };
        match build_efm(&spec, &RewardModel::dp_arrival(), &fmap, &explore, None) {
            Err(Error::Coverage { episodes, missing }) => {
                assert_eq!(episodes, 1);
                assert!(missing.len() >= 57);
            }
            other => panic!("expected a coverage error, got {other:?}"),
        }
    }

    #[test]
    fn zero_network_acts_on_immediate_reward() {
        let spec = GridSpec::frozen_lake();
        let fmap = code_map(&spec);
        let efm = build_efm(&spec, &RewardModel::dp_arrival(), &fmap, &ExplorationConfig::new(2), None).unwrap();
        let net = Network::new(&DdpnConfig::reduced(0).layer_specs(32), 0, true).unwrap();
        let o = State::from_label("O").unwrap();
        assert_eq!(efm_greedy_action(&efm, &net, fmap.get(o), 0.9).unwrap(), Action::Right);
        let b = State::from_label("B").unwrap();
        assert_eq!(efm_greedy_action(&efm, &net, fmap.get(b), 0.9).unwrap(), Action::Up);
    }

    #[test]
    fn csv_round_trip() {
        let spec = GridSpec::frozen_lake();
        let fmap = code_map(&spec);
        let efm = build_efm(&spec, &RewardModel::dp_arrival(), &fmap, &ExplorationConfig::new(2), None).unwrap();
        let text = efm.to_csv();
        let back = Efm::from_csv(&text).unwrap();
        assert_eq!(back.to_csv(), text);
        for (f, a, t) in efm.entries() {
            assert_eq!(back.lookup(f, a).unwrap(), t);
        }
    }

    #[test]
    fn ddpn2_on_hand_features_learns_tabular_values() {
        let spec = GridSpec::frozen_lake();
        let dp = RewardModel::dp_arrival();
        let fmap = code_map(&spec);
        let efm = build_efm(&spec, &dp, &fmap, &ExplorationConfig::new(2), None).unwrap();
        let cfg = DdpnConfig {
            bellman_iterations: 60,
            test_episodes: 2,
            ..DdpnConfig::reduced(8)
        };
        let (net, trace) = train_ddpn2(&spec, &efm, &cfg, &fmap).unwrap();
        let v = ddpn2_state_values(&net, &fmap).unwrap();
        let vi = crate::tabular::value_iteration(&spec, &dp, 0.9, 1e-6, 1000).unwrap().values;
        assert!(v.max_abs_diff(&vi) < 1.2, "{v:?}");
        assert_eq!(trace.test_success_rate(4.0), 1.0);
    }
}
