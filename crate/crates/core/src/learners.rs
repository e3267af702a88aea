//! Value networks: fitted value iteration (DDPN), supervised distillation of
//! tabular values, and a small DQN.

use std::fmt::Write as _;
use crate::clock::Instant;

use rand::Rng as _;

use crate::encoding::StateEncoder;
use crate::error::{Error, Result};
use crate::gridworld::{
    run_episode, step, Action, GridSpec, RewardModel, State, DEFAULT_BUDGET_FLOOR, DEFAULT_MAX_STEPS,
};
use crate::nn::{self, chain, Activation, AdamState, Batch, LayerSpec, Network};
use crate::rng::{self, derive_seed};
use crate::tabular::{argmax_first, bellman_backup, greedy_action, Policy, QTable, ValueTable};

/// Reward of the shortest hole-free route under the episode convention.
pub const OPTIMAL_EPISODE_REWARD: f64 = 4.0;

#[derive(Debug, Clone, PartialEq)]
pub struct DdpnConfig {
    pub hidden: Vec<(usize, Activation)>,
    pub gamma: f64,
    pub bellman_iterations: usize,
    pub epochs_per_iteration: usize,
    pub learning_rate: f64,
    pub eval_every: usize,
    pub test_episodes: usize,
    pub max_steps: usize,
    pub budget_floor: f64,
    /// Start with an all-zero output layer instead of a scaled-uniform one.
    pub zero_final: bool,
    pub seed: u64,
}

impl DdpnConfig {
    /// Three tanh layers then two ReLU layers, 32 units each.
    pub fn full(seed: u64) -> Self {
        use Activation::*;
        DdpnConfig {
            hidden: vec![(32, Tanh), (32, Tanh), (32, Tanh), (32, Relu), (32, Relu)],
            gamma: 0.9,
            bellman_iterations: 200,
            epochs_per_iteration: 50,
            learning_rate: 1e-3,
            eval_every: 2,
            test_episodes: 200,
            max_steps: DEFAULT_MAX_STEPS,
            budget_floor: DEFAULT_BUDGET_FLOOR,
            zero_final: false,
            seed,
        }
    }

    /// Two ReLU layers of 32, fed by feature codes.
    pub fn reduced(seed: u64) -> Self {
        DdpnConfig {
            hidden: vec![(32, Activation::Relu), (32, Activation::Relu)],
            ..DdpnConfig::full(seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.eval_every == 0 {
            return Err(Error::InvalidConfig("eval_every must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::InvalidConfig(format!("gamma {} outside [0, 1)", self.gamma)));
        }
        if self.max_steps == 0 {
            return Err(Error::InvalidConfig("max_steps must be positive".into()));
        }
        if self.hidden.iter().any(|&(w, _)| w == 0) {
            return Err(Error::InvalidConfig("hidden widths must be positive".into()));
        }
        Ok(())
    }

    pub fn layer_specs(&self, input_width: usize) -> Vec<LayerSpec> {
        chain(input_width, &self.hidden, (1, Activation::Identity))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DqnConfig {
    pub hidden: Vec<(usize, Activation)>,
    pub gamma: f64,
    pub learning_rate: f64,
    pub episodes: usize,
    pub epsilon0: f64,
    pub epsilon_decay: f64,
    pub epsilon_min: f64,
    pub max_steps: usize,
    pub eval_every: usize,
    pub test_episodes: usize,
    pub seed: u64,
}

impl DqnConfig {
    /// Behaviour is uniformly random by default: Q-learning is off-policy,
    /// and with only per-transition updates (no replay) the rarely chosen
    /// hole-entering actions otherwise stay badly estimated.
    pub fn new(seed: u64) -> Self {
        DqnConfig {
            hidden: DdpnConfig::full(seed).hidden,
            gamma: 0.9,
            learning_rate: 1e-4,
            episodes: 3000,
            epsilon0: 1.0,
            epsilon_decay: 1.0,
            epsilon_min: 0.0,
            max_steps: DEFAULT_MAX_STEPS,
            eval_every: 10,
            test_episodes: 200,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.eval_every == 0 || self.max_steps == 0 {
            return Err(Error::InvalidConfig("eval_every and max_steps must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::InvalidConfig(format!("gamma {} outside [0, 1)", self.gamma)));
        }
        if !(self.epsilon0 > 0.0 && self.epsilon0 <= 1.0 && self.epsilon_decay > 0.0 && self.epsilon_decay <= 1.0) {
            return Err(Error::InvalidConfig("epsilon0 and epsilon_decay must lie in (0, 1]".into()));
        }
        Ok(())
    }

    pub fn epsilon(&self, episode: usize) -> f64 {
        (self.epsilon0 * self.epsilon_decay.powi(episode as i32)).max(self.epsilon_min)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Train,
    Test,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Train => "train",
            Phase::Test => "test",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub iteration: usize,
    pub phase: Phase,
    pub reward: f64,
    /// Mean fit loss since the previous record; `None` for test episodes.
    pub loss: Option<f64>,
    /// Wall-clock seconds since training started.
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingTrace {
    pub records: Vec<TraceRecord>,
}

impl TrainingTrace {
    pub fn rewards(&self, phase: Phase) -> Vec<f64> {
        self.records.iter().filter(|r| r.phase == phase).map(|r| r.reward).collect()
    }

    pub fn train_iterations(&self) -> Vec<usize> {
        self.records
            .iter()
            .filter(|r| r.phase == Phase::Train)
            .map(|r| r.iteration)
            .collect()
    }

    /// First training iteration from which every evaluation scores `target`.
    pub fn stabilization_iteration(&self, target: f64) -> Option<usize> {
        let train: Vec<&TraceRecord> = self.records.iter().filter(|r| r.phase == Phase::Train).collect();
        let tail = train.iter().rev().take_while(|r| (r.reward - target).abs() < 1e-9).count();
        (tail > 0).then(|| train[train.len() - tail].iteration)
    }

    /// Fraction of test episodes scoring `target`.
    pub fn test_success_rate(&self, target: f64) -> f64 {
        let test = self.rewards(Phase::Test);
        if test.is_empty() {
            return 0.0;
        }
        test.iter().filter(|&&r| (r - target).abs() < 1e-9).count() as f64 / test.len() as f64
    }

    /// Wall-clock seconds at the end of training (last training record).
    pub fn training_seconds(&self) -> f64 {
        self.records
            .iter()
            .filter(|r| r.phase == Phase::Train)
            .map(|r| r.seconds)
            .fold(0.0, f64::max)
    }

    /// `iteration,phase,reward,loss,seconds`. With `timing` off the seconds
    /// column is written as 0 so that files are byte-reproducible.
    pub fn to_csv(&self, timing: bool) -> String {
        let mut out = String::from("iteration,phase,reward,loss,seconds\n");
        for r in &self.records {
            let loss = r.loss.map(|l| l.to_string()).unwrap_or_default();
            let secs = if timing { r.seconds } else { 0.0 };
            let _ = writeln!(out, "{},{},{},{},{:.6}", r.iteration, r.phase.name(), r.reward, loss, secs);
        }
        out
    }

    fn push(&mut self, iteration: usize, phase: Phase, reward: f64, loss: Option<f64>, clock: &Instant) {
        self.records.push(TraceRecord {
            iteration,
            phase,
            reward,
            loss,
            seconds: clock.elapsed().as_secs_f64(),
        });
    }
}

/// Network prediction for every state, one encoding each.
pub fn ddpn_state_values(net: &Network, encoder: &mut dyn StateEncoder, spec: &GridSpec) -> Result<ValueTable> {
    let values = spec
        .states()
        .map(|s| net.predict_scalar(&encoder.encode(spec, s)))
        .collect::<Result<Vec<f64>>>()?;
    Ok(ValueTable::from_vec(values))
}

/// One-step lookahead through the true environment using network values.
pub fn greedy_policy_from_network(
    net: &Network,
    encoder: &mut dyn StateEncoder,
    spec: &GridSpec,
    model: &RewardModel,
    gamma: f64,
) -> Result<Policy> {
    let values = ddpn_state_values(net, encoder, spec)?;
    Ok(Policy::from_fn(spec, |s| greedy_action(spec, model, s, gamma, |n| values.get(n))))
}

/// Episode reward of the network's greedy policy. Stochastic encoders are
/// re-queried at every lookahead.
fn evaluate_value_net(
    net: &Network,
    encoder: &mut dyn StateEncoder,
    spec: &GridSpec,
    gamma: f64,
    max_steps: usize,
    budget_floor: f64,
) -> Result<f64> {
    let dp = RewardModel::dp_arrival();
    let eval = RewardModel::episode_eval();
    if encoder.is_stochastic() {
        let mut failure = None;
        let result = run_episode(
            spec,
            &eval,
            |s| {
                greedy_action(spec, &dp, s, gamma, |n| {
                    net.predict_scalar(&encoder.encode(spec, n)).unwrap_or_else(|e| {
                        failure.get_or_insert(e);
                        0.0
                    })
                })
            },
            max_steps,
            budget_floor,
        );
        match failure {
            Some(e) => Err(e),
            None => Ok(result.total_reward),
        }
    } else {
        let policy = greedy_policy_from_network(net, encoder, spec, &dp, gamma)?;
        Ok(run_episode(spec, &eval, |s| policy.action(s), max_steps, budget_floor).total_reward)
    }
}

fn check_divergence(values: &ValueTable, iteration: usize, goal_reward: f64) -> Result<()> {
    let limit = 10.0 * goal_reward.abs();
    for (i, &v) in values.as_slice().iter().enumerate() {
        if !v.is_finite() || v.abs() > limit {
            return Err(Error::Diverged {
                iteration,
                state: State(i),
                magnitude: v.abs(),
            });
        }
    }
    Ok(())
}

/// Runs `epochs` full-batch epochs toward `targets`; stochastic encoders get
/// fresh inputs every epoch. Returns the mean epoch loss.
fn fit_targets(
    net: &mut Network,
    adam: &mut AdamState,
    encoder: &mut dyn StateEncoder,
    spec: &GridSpec,
    targets: &ValueTable,
    epochs: usize,
    shuffle_seed: u64,
) -> Result<f64> {
    if epochs == 0 {
        return Ok(0.0);
    }
    let build = |encoder: &mut dyn StateEncoder| -> Vec<(Vec<f64>, Vec<f64>)> {
        spec.states()
            .map(|s| (encoder.encode(spec, s), vec![targets.get(s)]))
            .collect()
    };
    let losses = if encoder.is_stochastic() {
        let mut losses = Vec::with_capacity(epochs);
        for _ in 0..epochs {
            losses.extend(nn::fit(net, adam, &build(&mut *encoder), 1, Batch::Full, shuffle_seed)?);
        }
        losses
    } else {
        nn::fit(net, adam, &build(encoder), epochs, Batch::Full, shuffle_seed)?
    };
    Ok(losses.iter().sum::<f64>() / losses.len() as f64)
}

fn run_test_phase(
    net: &Network,
    encoder: &mut dyn StateEncoder,
    spec: &GridSpec,
    config: &DdpnConfig,
    trace: &mut TrainingTrace,
    clock: &Instant,
) -> Result<()> {
    let mut cached = None;
    for k in 1..=config.test_episodes {
        let reward = match cached {
            Some(r) => r,
            None => {
                let r = evaluate_value_net(net, encoder, spec, config.gamma, config.max_steps, config.budget_floor)?;
                if !encoder.is_stochastic() {
                    cached = Some(r);
                }
                r
            }
        };
        trace.push(k, Phase::Test, reward, None, clock);
    }
    Ok(())
}

/// Synchronous fitted value iteration in the true environment.
///
/// Each Bellman iteration builds targets `T(s) = r(s) + γ·max_a V̂(next(s, a))`
/// from the current network (goal pinned to its reward) and fits the network
/// to them; every `eval_every` iterations the greedy policy is rolled out.
pub fn train_ddpn(
    spec: &GridSpec,
    config: &DdpnConfig,
    encoder: &mut dyn StateEncoder,
) -> Result<(Network, TrainingTrace)> {
    config.validate()?;
    let dp = RewardModel::dp_arrival();
    let mut net = Network::new(&config.layer_specs(encoder.width()), derive_seed(config.seed, "init"), config.zero_final)?;
    let mut adam = AdamState::new(&net, config.learning_rate);
    let mut trace = TrainingTrace::default();
    let clock = Instant::now();
    let fit_seed = derive_seed(config.seed, "fit");
    let mut loss_acc = Vec::new();

    for it in 1..=config.bellman_iterations {
        // State values start at zero; later sweeps bootstrap from the network.
        let predicted = if it == 1 {
            ValueTable::from_vec(vec![0.0; spec.n_states()])
        } else {
            ddpn_state_values(&net, encoder, spec)?
        };
        check_divergence(&predicted, it, dp.goal_reward)?;
        let targets = bellman_backup(spec, &dp, config.gamma, &predicted);
        loss_acc.push(fit_targets(
            &mut net,
            &mut adam,
            encoder,
            spec,
            &targets,
            config.epochs_per_iteration,
            fit_seed ^ it as u64,
        )?);
        if it % config.eval_every == 0 {
            let reward = evaluate_value_net(&net, encoder, spec, config.gamma, config.max_steps, config.budget_floor)?;
            let loss = loss_acc.iter().sum::<f64>() / loss_acc.len() as f64;
            loss_acc.clear();
            trace.push(it, Phase::Train, reward, Some(loss), &clock);
        }
    }
    check_divergence(&ddpn_state_values(&net, encoder, spec)?, config.bellman_iterations, dp.goal_reward)?;
    run_test_phase(&net, encoder, spec, config, &mut trace, &clock)?;
    Ok((net, trace))
}

/// Supervised regression of a value network onto fixed state values. The
/// iteration/eval schedule matches [`train_ddpn`].
pub fn train_ddpn_q_distill(
    spec: &GridSpec,
    config: &DdpnConfig,
    encoder: &mut dyn StateEncoder,
    values: &ValueTable,
) -> Result<(Network, TrainingTrace)> {
    config.validate()?;
    if values.len() != spec.n_states() {
        return Err(Error::Dimension {
            expected: spec.n_states(),
            got: values.len(),
        });
    }
    let goal_reward = RewardModel::dp_arrival().goal_reward;
    let mut net = Network::new(&config.layer_specs(encoder.width()), derive_seed(config.seed, "init"), config.zero_final)?;
    let mut adam = AdamState::new(&net, config.learning_rate);
    let mut trace = TrainingTrace::default();
    let clock = Instant::now();
    let fit_seed = derive_seed(config.seed, "fit");
    let mut loss_acc = Vec::new();

    for it in 1..=config.bellman_iterations {
        loss_acc.push(fit_targets(
            &mut net,
            &mut adam,
            encoder,
            spec,
            values,
            config.epochs_per_iteration,
            fit_seed ^ it as u64,
        )?);
        if it % config.eval_every == 0 {
            check_divergence(&ddpn_state_values(&net, encoder, spec)?, it, goal_reward)?;
            let reward = evaluate_value_net(&net, encoder, spec, config.gamma, config.max_steps, config.budget_floor)?;
            let loss = loss_acc.iter().sum::<f64>() / loss_acc.len() as f64;
            loss_acc.clear();
            trace.push(it, Phase::Train, reward, Some(loss), &clock);
        }
    }
    run_test_phase(&net, encoder, spec, config, &mut trace, &clock)?;
    Ok((net, trace))
}

/// Q-values read from a DQN, one encoding per state.
pub fn dqn_q_table(net: &Network, encoder: &mut dyn StateEncoder, spec: &GridSpec) -> Result<QTable> {
    let mut q = QTable::zeros(spec.n_states());
    for s in spec.non_terminal_states() {
        let row = net.predict(&encoder.encode(spec, s))?;
        for a in Action::ALL {
            q.set(s, a, row[a.code()]);
        }
    }
    Ok(q)
}

fn dqn_greedy(net: &Network, input: &[f64]) -> Result<Action> {
    let q = net.predict(input)?;
    Ok(argmax_first(Action::ALL.iter().map(|&a| (a, q[a.code()]))))
}

fn evaluate_dqn(net: &Network, encoder: &mut dyn StateEncoder, spec: &GridSpec, max_steps: usize) -> Result<f64> {
    let mut failure = None;
    let result = run_episode(
        spec,
        &RewardModel::episode_eval(),
        |s| {
            dqn_greedy(net, &encoder.encode(spec, s)).unwrap_or_else(|e| {
                failure.get_or_insert(e);
                Action::Up
            })
        },
        max_steps,
        DEFAULT_BUDGET_FLOOR,
    );
    match failure {
        Some(e) => Err(e),
        None => Ok(result.total_reward),
    }
}

/// Online ε-greedy Q-learning with a network: one Adam step per transition on
/// the taken action's output, toward `r + γ·max_a' Q̂(s', a')` (0 at the goal).
pub fn train_dqn(
    spec: &GridSpec,
    config: &DqnConfig,
    encoder: &mut dyn StateEncoder,
) -> Result<(Network, TrainingTrace)> {
    config.validate()?;
    let dp = RewardModel::dp_arrival();
    let specs = chain(encoder.width(), &config.hidden, (Action::ALL.len(), Activation::Identity));
    let mut net = Network::new(&specs, derive_seed(config.seed, "init"), false)?;
    let mut adam = AdamState::new(&net, config.learning_rate);
    let mut rng = rng::seeded(derive_seed(config.seed, "explore"));
    let mut trace = TrainingTrace::default();
    let clock = Instant::now();
    let limit = 10.0 * dp.goal_reward;
    let mut loss_acc = (0.0, 0usize);

    for episode in 0..config.episodes {
        let eps = config.epsilon(episode);
        let mut s = spec.start();
        for _ in 0..config.max_steps {
            let x = encoder.encode(spec, s);
            let fwd = net.forward(&x)?;
            let q = fwd.output();
            let a = if rng.gen::<f64>() < eps {
                Action::ALL[rng.gen_range(0..4)]
            } else {
                argmax_first(Action::ALL.iter().map(|&a| (a, q[a.code()])))
            };
            let out = step(spec, &dp, s, a)?;
            let bootstrap = if out.terminal {
                0.0
            } else {
                let next = net.predict(&encoder.encode(spec, out.next))?;
                next.iter().copied().fold(f64::NEG_INFINITY, f64::max)
            };
            let err = q[a.code()] - (out.reward + config.gamma * bootstrap);
            if !err.is_finite() || q[a.code()].abs() > limit {
                return Err(Error::Diverged {
                    iteration: episode,
                    state: s,
                    magnitude: q[a.code()].abs(),
                });
            }
            let mut dy = vec![0.0; q.len()];
            dy[a.code()] = 2.0 * err;
            let grads = nn::backward_from_output_grad(&net, &fwd, &dy);
            nn::adam_step(&mut net, &mut adam, &grads);
            loss_acc.0 += err * err;
            loss_acc.1 += 1;
            if out.terminal {
                break;
            }
            s = out.next;
        }
        if (episode + 1) % config.eval_every == 0 {
            let reward = evaluate_dqn(&net, encoder, spec, config.max_steps)?;
            let loss = loss_acc.0 / loss_acc.1.max(1) as f64;
            loss_acc = (0.0, 0);
            trace.push(episode + 1, Phase::Train, reward, Some(loss), &clock);
        }
    }
    for k in 1..=config.test_episodes {
        let reward = evaluate_dqn(&net, encoder, spec, config.max_steps)?;
        trace.push(k, Phase::Test, reward, None, &clock);
    }
    Ok((net, trace))
}
