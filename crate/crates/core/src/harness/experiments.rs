//! Seeded runs and the reproduction recipes built on them.

use crate::clock::Instant;

use crate::efm::{
    attempt_seed, retrain_until_injective, run_deepmod_pipeline, train_reduced_on_features, FeatureSource,
    PipelineArtifacts, PipelineConfig, QEstimate,
};
use crate::encoding::{Features, NoisyOneHot, OneHot};
use crate::error::Result;
use crate::features::{build_state_feature_map, NoiseAugmenter, NoiseMode, StateFeatureMap};
use crate::gridworld::{step, Action, GridSpec, RewardModel, State};
use crate::learners::{ddpn_state_values, train_ddpn, DdpnConfig, Phase, TrainingTrace};
use crate::nn::Network;
use crate::rng::derive_seed;
use crate::tabular::{q_learning, state_values_from_q, value_iteration, ValueTable};

use super::config::{Experiment, ExperimentConfig};
use super::reference;
use super::report::{majority, median, Check, Column, RunReport, SeedTrace, Timing};
use super::svg::{self, Panel, Series};

/// Reward of the optimal 6-step episode under the evaluation reward.
pub const OPTIMAL_RETURN: f64 = 4.0;
/// Test episodes at the end of a run that must all score [`OPTIMAL_RETURN`].
pub const FINAL_TEST_WINDOW: usize = 50;

pub const TOL_TABULAR: f64 = 0.15;
pub const TOL_CLEAN_NET: f64 = 0.5;
pub const TOL_NOISY_NET: f64 = 1.2;
pub const MIN_TEST_RATE: f64 = 0.95;
pub const MAX_STABILIZATION_RATIO: f64 = 2.0 / 3.0;
pub const MAX_VI_SECONDS: f64 = 1.0;
pub const MIN_Q_EPISODES: usize = 5000;
/// The feature-model DDPN should settle on the optimal return by this iteration.
pub const EARLY_ITERATION: f64 = 25.0;

/// A trained value network with its state values and trace.
#[derive(Debug, Clone)]
pub struct NetRun {
    pub net: Network,
    pub values: ValueTable,
    pub trace: TrainingTrace,
}

/// Full DDPN, the feature map read from it, and the reduced DDPN trained on
/// that map; one seed.
#[derive(Debug, Clone)]
pub struct DdpnStudy {
    pub seed: u64,
    pub full: NetRun,
    pub fmap: StateFeatureMap,
    pub reduced: NetRun,
    /// Full-DDPN training runs until the map was injective (or the cap hit).
    pub attempts: usize,
}

/// Clean one-hot inputs.
pub fn run_clean_seed(spec: &GridSpec, cfg: &ExperimentConfig, seed: u64) -> Result<DdpnStudy> {
    let source = retrain_until_injective(cfg.feature_attempts, |attempt| {
        let config = DdpnConfig {
            seed: attempt_seed(cfg.ddpn_for(seed).seed, attempt),
            ..cfg.ddpn.clone()
        };
        let (net, trace) = train_ddpn(spec, &config, &mut OneHot::new(spec))?;
        let fmap = build_state_feature_map(&net, spec, None, cfg.layer_index)?;
        Ok((net, trace, fmap))
    })?;
    let values = ddpn_state_values(&source.net, &mut OneHot::new(spec), spec)?;
    finish_study(spec, cfg, seed, source, values)
}

/// One-hot inputs plus `n_noise` random bits, redrawn every epoch during
/// training and fixed per state when values and features are read out.
pub fn run_noisy_seed(spec: &GridSpec, cfg: &ExperimentConfig, seed: u64) -> Result<DdpnStudy> {
    let noise = |label: &str, mode| NoiseAugmenter::new(cfg.n_noise, derive_seed(seed, label), mode);
    let source = retrain_until_injective(cfg.feature_attempts, |attempt| {
        let config = DdpnConfig {
            seed: attempt_seed(cfg.ddpn_for(seed).seed, attempt),
            ..cfg.ddpn.clone()
        };
        let train_noise = NoiseAugmenter::new(
            cfg.n_noise,
            attempt_seed(derive_seed(seed, "noise"), attempt),
            NoiseMode::Resample,
        );
        let (net, trace) = train_ddpn(spec, &config, &mut NoisyOneHot::new(spec, train_noise))?;
        let mut extract = noise("extract-noise", NoiseMode::FixedPerState);
        let fmap = build_state_feature_map(&net, spec, Some(&mut extract), cfg.layer_index)?;
        Ok((net, trace, fmap))
    })?;
    let mut read = NoisyOneHot::new(spec, noise("read-noise", NoiseMode::FixedPerState));
    let values = ddpn_state_values(&source.net, &mut read, spec)?;
    finish_study(spec, cfg, seed, source, values)
}

fn finish_study(
    spec: &GridSpec,
    cfg: &ExperimentConfig,
    seed: u64,
    source: FeatureSource,
    values: ValueTable,
) -> Result<DdpnStudy> {
    let reduced = reduced_on(spec, cfg, seed, &source.fmap)?;
    Ok(DdpnStudy {
        seed,
        full: NetRun {
            net: source.net,
            values,
            trace: source.trace,
        },
        fmap: source.fmap,
        reduced,
        attempts: source.attempts,
    })
}

fn reduced_on(spec: &GridSpec, cfg: &ExperimentConfig, seed: u64, fmap: &StateFeatureMap) -> Result<NetRun> {
    let (net, trace) = train_reduced_on_features(spec, &cfg.reduced_for(seed), fmap)?;
    let values = ddpn_state_values(&net, &mut Features::new(fmap), spec)?;
    Ok(NetRun { net, values, trace })
}

/// Pipeline settings for one master seed; stage seeds derive from it.
pub fn pipeline_config(cfg: &ExperimentConfig, seed: u64, noisy: bool) -> PipelineConfig {
    let base = PipelineConfig::new(seed, noisy);
    PipelineConfig {
        n_noise: cfg.n_noise,
        q_source: cfg.q_source,
        qlearning: crate::tabular::QLearningConfig {
            rng_seed: base.qlearning.rng_seed,
            ..cfg.qlearning.clone()
        },
        dqn: crate::learners::DqnConfig {
            seed: base.dqn.seed,
            ..cfg.dqn.clone()
        },
        ddpn1: DdpnConfig {
            seed: base.ddpn1.seed,
            ..cfg.ddpn.clone()
        },
        ddpn2: DdpnConfig {
            seed: base.ddpn2.seed,
            ..cfg.ddpn2.clone()
        },
        explore: crate::efm::ExplorationConfig {
            seed: base.explore.seed,
            ..cfg.explore.clone()
        },
        layer_index: cfg.layer_index,
        feature_attempts: cfg.feature_attempts,
        ..base
    }
}

/// Exact state values by value iteration, with the wall-clock it took.
pub fn exact_values(spec: &GridSpec, cfg: &ExperimentConfig) -> Result<(ValueTable, usize, f64)> {
    let clock = Instant::now();
    let out = value_iteration(spec, &RewardModel::dp_arrival(), cfg.gamma, cfg.vi_tolerance, cfg.vi_max_sweeps)?;
    Ok((out.values, out.sweeps, clock.elapsed().as_secs_f64()))
}

/// Whether the last [`FINAL_TEST_WINDOW`] test episodes all scored optimally.
pub fn final_tests_optimal(trace: &TrainingTrace) -> bool {
    let test = trace.rewards(Phase::Test);
    !test.is_empty()
        && test
            .iter()
            .rev()
            .take(FINAL_TEST_WINDOW)
            .all(|r| (r - OPTIMAL_RETURN).abs() < 1e-9)
}

/// Iteration from which training evaluations stay optimal; a run that never
/// settles counts as one past its last iteration.
pub fn stabilization(trace: &TrainingTrace) -> f64 {
    match trace.stabilization_iteration(OPTIMAL_RETURN) {
        Some(it) => it as f64,
        None => trace.train_iterations().last().map_or(0.0, |&it| it as f64 + 1.0),
    }
}

/// Holes strictly negative, everything else non-negative, goal maximal.
pub fn sign_structure_ok(spec: &GridSpec, values: &ValueTable) -> bool {
    if values.len() != spec.n_states() {
        return false;
    }
    let goal = values.get(spec.goal());
    spec.states().all(|s| {
        let v = values.get(s);
        (spec.is_hole(s) == (v < 0.0)) && v <= goal
    })
}

/// Number of the 60 non-terminal (state, action) keys whose EFM entry equals
/// the feature of the true successor and the true reward.
pub fn efm_oracle_matches(spec: &GridSpec, p: &PipelineArtifacts) -> Result<(usize, usize)> {
    let dp = RewardModel::dp_arrival();
    let mut total = 0;
    let mut ok = 0;
    for s in spec.non_terminal_states() {
        for a in Action::ALL {
            total += 1;
            let truth = step(spec, &dp, s, a)?;
            if let Ok(t) = p.efm.lookup(p.fmap.get(s), a) {
                if &t.next == p.fmap.get(truth.next) && t.reward == truth.reward {
                    ok += 1;
                }
            }
        }
    }
    Ok((ok, total))
}

fn max_diff_to(values: &ValueTable, reference: &[f64]) -> (f64, State) {
    values
        .as_slice()
        .iter()
        .zip(reference)
        .enumerate()
        .map(|(i, (v, r))| ((v - r).abs(), State(i)))
        .fold((0.0, State(0)), |acc, x| if x.0 > acc.0 { x } else { acc })
}

fn within(criterion: Option<u8>, name: &str, values: &ValueTable, reference: &[f64], tol: f64) -> Check {
    if values.len() != reference.len() {
        return Check::holds(criterion, name, false, format!("{} values for {} states", values.len(), reference.len()));
    }
    let (d, s) = max_diff_to(values, reference);
    Check::at_most(criterion, name, d, tol, format!("worst state {s}"))
}

fn seed_majority(criterion: Option<u8>, name: &str, flags: &[bool]) -> Check {
    let k = flags.iter().filter(|&&b| b).count();
    Check::holds(criterion, name, majority(flags), format!("{k}/{} seeds", flags.len()))
}

fn push_traces(report: &mut RunReport, method: &str, runs: impl IntoIterator<Item = (u64, TrainingTrace)>) {
    for (seed, trace) in runs {
        report.traces.push(SeedTrace {
            method: method.to_string(),
            seed,
            trace,
        });
    }
}

fn note_study(report: &mut RunReport, what: &str, s: &DdpnStudy) {
    if s.attempts > 1 {
        report
            .warnings
            .push(format!("{what} seed {}: {} training runs for an injective map", s.seed, s.attempts));
    }
    warn_collisions(report, what, s.seed, &s.fmap);
}

fn warn_collisions(report: &mut RunReport, what: &str, seed: u64, fmap: &StateFeatureMap) {
    if !fmap.is_injective() {
        let pairs: Vec<String> = fmap.collisions().iter().map(|(a, b)| format!("{a}={b}")).collect();
        report
            .warnings
            .push(format!("{what} seed {seed}: feature map merges {}", pairs.join(" ")));
    }
}

/// Q-learning, value iteration, clean DDPN and reduced DDPN on its features.
pub fn reproduce_table1(cfg: &ExperimentConfig) -> Result<RunReport> {
    cfg.validate()?;
    let spec = cfg.grid()?;
    let mut report = RunReport::new(Experiment::Table1.name(), &cfg.seeds);
    report.reference_table = Some(1);
    let (vi, sweeps, vi_secs) = exact_values(&spec, cfg)?;

    let mut q_cols = Vec::new();
    let mut studies = Vec::new();
    for &seed in &cfg.seeds {
        let q = q_learning(&spec, &RewardModel::dp_arrival(), &cfg.qlearning_for(seed))?;
        q_cols.push(state_values_from_q(&spec, &q, RewardModel::dp_arrival().goal_reward)?);
        studies.push(run_clean_seed(&spec, cfg, seed)?);
    }

    report.columns.push(Column::new("q", q_cols));
    report.columns.push(Column::new("vi", vec![vi.clone()]));
    report.columns.push(Column::new("ddpn", studies.iter().map(|s| s.full.values.clone()).collect()));
    report.columns.push(Column::new("reduced", studies.iter().map(|s| s.reduced.values.clone()).collect()));
    report.timings.push(Timing {
        method: "vi".into(),
        seed: 0,
        seconds: vi_secs,
    });
    for s in &studies {
        note_study(&mut report, "clean ddpn", s);
        report.timings.push(Timing { method: "ddpn".into(), seed: s.seed, seconds: s.full.trace.training_seconds() });
        report.timings.push(Timing { method: "reduced".into(), seed: s.seed, seconds: s.reduced.trace.training_seconds() });
    }
    push_traces(&mut report, "ddpn", studies.iter().map(|s| (s.seed, s.full.trace.clone())));
    push_traces(&mut report, "reduced", studies.iter().map(|s| (s.seed, s.reduced.trace.clone())));

    if spec == GridSpec::frozen_lake() {
        let col = |m: &str| &report.column(m).expect("column").median;
        let mut checks = vec![
            within(Some(1), "vi_vs_reference", col("vi"), &reference::TABLE1[1], TOL_TABULAR),
            Check::at_most(Some(1), "vi_seconds", vi_secs, MAX_VI_SECONDS, format!("{sweeps} sweeps")),
            Check::at_least(Some(2), "q_episodes", cfg.qlearning.episodes as f64, MIN_Q_EPISODES as f64, ""),
            within(Some(2), "q_vs_reference", col("q"), &reference::TABLE1[0], TOL_TABULAR),
            within(Some(2), "q_vs_vi", col("q"), vi.as_slice(), TOL_TABULAR),
            within(Some(3), "ddpn_vs_vi", col("ddpn"), vi.as_slice(), TOL_CLEAN_NET),
        ];
        let ddpn_ok: Vec<bool> = studies.iter().map(|s| final_tests_optimal(&s.full.trace)).collect();
        checks.push(seed_majority(Some(3), "ddpn_final_tests_optimal", &ddpn_ok));
        checks.push(within(Some(4), "reduced_vs_vi", col("reduced"), vi.as_slice(), TOL_CLEAN_NET));
        let red_ok: Vec<bool> = studies.iter().map(|s| final_tests_optimal(&s.reduced.trace)).collect();
        checks.push(seed_majority(Some(4), "reduced_final_tests_optimal", &red_ok));
        report.checks = checks;
    }
    Ok(report)
}

/// DQN, value iteration, noisy DDPN, reduced DDPN on the noisy DDPN's
/// features, and the full feature-model pipeline.
pub fn reproduce_table2(cfg: &ExperimentConfig) -> Result<RunReport> {
    cfg.validate()?;
    let spec = cfg.grid()?;
    let mut report = RunReport::new(Experiment::Table2.name(), &cfg.seeds);
    report.reference_table = Some(2);
    let (vi, _, _) = exact_values(&spec, cfg)?;

    let mut studies = Vec::new();
    let mut failed = Vec::new();
    for &seed in &cfg.seeds {
        studies.push(run_noisy_seed(&spec, cfg, seed)?);
        // A pipeline failure (e.g. an EFM conflict) is a failed seed, not an
        // aborted table.
        match run_deepmod_pipeline(&spec, &pipeline_config(cfg, seed, true)) {
            Ok(p) => report.pipelines.push((seed, p)),
            Err(e) => failed.push((seed, e.to_string())),
        }
    }

    let q_name = match cfg.q_source {
        crate::efm::QSource::Dqn => "dqn",
        crate::efm::QSource::Tabular => "q",
    };
    report
        .columns
        .push(Column::new(q_name, report.pipelines.iter().map(|(_, p)| p.q_values.clone()).collect()));
    report.columns.push(Column::new("vi", vec![vi.clone()]));
    report
        .columns
        .push(Column::new("ddpn_noisy", studies.iter().map(|s| s.full.values.clone()).collect()));
    report
        .columns
        .push(Column::new("reduced_noisy", studies.iter().map(|s| s.reduced.values.clone()).collect()));
    report.columns.push(Column::new(
        "deepmod",
        report.pipelines.iter().map(|(_, p)| p.ddpn2_values.clone()).collect(),
    ));

    for s in &studies {
        note_study(&mut report, "noisy ddpn", s);
        report.timings.push(Timing { method: "ddpn_noisy".into(), seed: s.seed, seconds: s.full.trace.training_seconds() });
        report.timings.push(Timing { method: "reduced_noisy".into(), seed: s.seed, seconds: s.reduced.trace.training_seconds() });
    }
    push_traces(&mut report, "ddpn_noisy", studies.iter().map(|s| (s.seed, s.full.trace.clone())));
    push_traces(&mut report, "reduced_noisy", studies.iter().map(|s| (s.seed, s.reduced.trace.clone())));
    add_pipeline_traces(&mut report);
    if let Some((_, p)) = report.pipelines.first() {
        report.extra_files.push(("efm.csv".into(), p.efm.to_csv()));
    }

    let col = |m: &str| report.column(m).expect("column").median.clone();
    let mut checks = vec![within(Some(5), "reduced_noisy_vs_vi", &col("reduced_noisy"), vi.as_slice(), TOL_CLEAN_NET)];
    let rates: Vec<f64> = studies.iter().map(|s| s.reduced.trace.test_success_rate(OPTIMAL_RETURN)).collect();
    checks.push(Check::at_least(
        Some(5),
        "reduced_noisy_test_rate",
        median(&rates),
        MIN_TEST_RATE,
        "median over seeds",
    ));
    checks.push(within(Some(5), "ddpn_noisy_vs_vi", &col("ddpn_noisy"), vi.as_slice(), TOL_NOISY_NET));
    checks.push(Check::holds(
        Some(5),
        "ddpn_noisy_signs",
        sign_structure_ok(&spec, &col("ddpn_noisy")),
        "holes negative, goal maximal",
    ));

    let needed = spec.non_terminal_states().count() * Action::ALL.len();
    let lost = vec![false; failed.len()];
    let completed: Vec<bool> = report.pipelines.iter().map(|_| true).chain(lost.clone()).collect();
    checks.push(seed_majority(Some(7), "pipeline_completed", &completed));
    let mut coverage: Vec<bool> = report.pipelines.iter().map(|(_, p)| p.efm.coverage().len() == needed).collect();
    coverage.extend(&lost);
    checks.push(seed_majority(Some(7), "efm_full_coverage", &coverage));
    let mut oracle = Vec::new();
    for (_, p) in &report.pipelines {
        let (ok, total) = efm_oracle_matches(&spec, p)?;
        oracle.push(ok == total && total == needed);
    }
    oracle.extend(&lost);
    checks.push(seed_majority(Some(7), "efm_oracle_all_keys", &oracle));
    checks.push(within(Some(7), "deepmod_vs_vi", &col("deepmod"), vi.as_slice(), TOL_NOISY_NET));
    let mut stable: Vec<bool> = report.pipelines.iter().map(|(_, p)| final_tests_optimal(&p.ddpn2_trace)).collect();
    stable.extend(&lost);
    checks.push(seed_majority(Some(7), "deepmod_final_tests_optimal", &stable));

    let learned = [q_name, "ddpn_noisy", "reduced_noisy", "deepmod"];
    let bad: Vec<&str> = learned.iter().copied().filter(|m| !sign_structure_ok(&spec, &col(m))).collect();
    checks.push(Check::holds(None, "learned_sign_structure", bad.is_empty(), format!("violations: {bad:?}")));
    report.checks = checks;

    for (seed, e) in failed {
        report.warnings.push(format!("pipeline seed {seed} failed: {e}"));
    }
    for (seed, p) in &report.pipelines {
        if p.ddpn1_attempts > 1 {
            report.warnings.push(format!("pipeline seed {seed}: DDPN1 needed {} runs for an injective map", p.ddpn1_attempts));
        }
    }
    let pipeline_maps: Vec<(u64, StateFeatureMap)> = report.pipelines.iter().map(|(s, p)| (*s, p.fmap.clone())).collect();
    for (seed, fmap) in pipeline_maps {
        warn_collisions(&mut report, "pipeline ddpn1", seed, &fmap);
    }
    Ok(report)
}

fn add_pipeline_traces(report: &mut RunReport) {
    let mut extra = Vec::new();
    for (seed, p) in &report.pipelines {
        extra.push(("ddpn1", *seed, p.ddpn1_trace.clone()));
        extra.push(("deepmod", *seed, p.ddpn2_trace.clone()));
        if let QEstimate::Dqn { trace, .. } = &p.q_estimate {
            extra.push(("dqn", *seed, trace.clone()));
        }
    }
    for (m, seed, t) in extra {
        push_traces(report, m, [(seed, t)]);
    }
}

/// Runs the pipeline for one seed. With the built-in map the result is
/// checked against exact values.
pub fn run_pipeline(cfg: &ExperimentConfig, seed: u64, noisy: bool) -> Result<RunReport> {
    cfg.validate()?;
    let spec = cfg.grid()?;
    let (vi, _, _) = exact_values(&spec, cfg)?;
    let p = run_deepmod_pipeline(&spec, &pipeline_config(cfg, seed, noisy))?;
    let mut report = RunReport::new(Experiment::Pipeline.name(), &[seed]);
    report.columns.push(Column::new("q_estimate", vec![p.q_values.clone()]));
    report.columns.push(Column::new("vi", vec![vi.clone()]));
    report.columns.push(Column::new("deepmod", vec![p.ddpn2_values.clone()]));
    report.extra_files.push(("efm.csv".into(), p.efm.to_csv()));
    report.extra_files.push((format!("fmap_{seed}.csv"), p.fmap.to_csv()));
    report.extra_files.push((format!("policy_{seed}.txt"), p.policy.render(&spec)));
    report.timings.push(Timing { method: "ddpn1".into(), seed, seconds: p.ddpn1_trace.training_seconds() });
    report.timings.push(Timing { method: "deepmod".into(), seed, seconds: p.ddpn2_trace.training_seconds() });

    let needed = spec.non_terminal_states().count() * Action::ALL.len();
    let (ok, total) = efm_oracle_matches(&spec, &p)?;
    report.checks.push(Check::at_least(None, "efm_coverage", p.efm.coverage().len() as f64, needed as f64, ""));
    report.checks.push(Check::at_least(None, "efm_oracle_keys", ok as f64, total as f64, ""));
    report.checks.push(within(None, "deepmod_vs_vi", &p.ddpn2_values, vi.as_slice(), TOL_NOISY_NET));
    report.checks.push(Check::holds(None, "deepmod_final_tests_optimal", final_tests_optimal(&p.ddpn2_trace), ""));
    if p.ddpn1_attempts > 1 {
        report.warnings.push(format!("DDPN1 needed {} runs for an injective map", p.ddpn1_attempts));
    }
    report.pipelines.push((seed, p));
    add_pipeline_traces(&mut report);
    Ok(report)
}

/// Figure number to experiment.
pub fn figure(fig: u8) -> Option<Experiment> {
    match fig {
        5 => Some(Experiment::Fig5),
        6 => Some(Experiment::Fig6),
        7 => Some(Experiment::Fig7),
        _ => None,
    }
}

/// Training runs for one figure, then curves, SVG and checks.
///
/// * fig5: noisy full DDPN vs reduced DDPN on its features.
/// * fig6: clean full DDPN vs reduced DDPN on its features.
/// * fig7: the feature-model DDPN of the pipeline (and DDPN1 for context).
pub fn reproduce_curves(cfg: &ExperimentConfig, fig: Experiment) -> Result<RunReport> {
    cfg.validate()?;
    let spec = cfg.grid()?;
    let mut report = RunReport::new(fig.name(), &cfg.seeds);
    match fig {
        Experiment::Fig5 | Experiment::Fig6 => {
            let (full, reduced) = if fig == Experiment::Fig5 {
                ("ddpn_noisy", "reduced_noisy")
            } else {
                ("ddpn", "reduced")
            };
            for &seed in &cfg.seeds {
                let s = if fig == Experiment::Fig5 {
                    run_noisy_seed(&spec, cfg, seed)?
                } else {
                    run_clean_seed(&spec, cfg, seed)?
                };
                report.timings.push(Timing { method: full.into(), seed, seconds: s.full.trace.training_seconds() });
                report.timings.push(Timing { method: reduced.into(), seed, seconds: s.reduced.trace.training_seconds() });
                push_traces(&mut report, full, [(seed, s.full.trace)]);
                push_traces(&mut report, reduced, [(seed, s.reduced.trace)]);
            }
        }
        Experiment::Fig7 => {
            for &seed in &cfg.seeds {
                let p = run_deepmod_pipeline(&spec, &pipeline_config(cfg, seed, true))?;
                report.pipelines.push((seed, p));
            }
            add_pipeline_traces(&mut report);
            report.traces.retain(|t| t.method != "dqn");
        }
        _ => {
            return Err(crate::error::Error::InvalidConfig(format!("{} is not a figure", fig.name())));
        }
    }
    let curves = curve_analysis(&report, fig);
    report.absorb(curves);
    if fig == Experiment::Fig5 {
        report.checks.push(timing_check(&report));
    }
    Ok(report)
}

/// Median curves, stabilization points, SVG/CSV files and figure checks from
/// traces already in `source`.
pub fn curve_analysis(source: &RunReport, fig: Experiment) -> RunReport {
    let methods: &[&str] = match fig {
        Experiment::Fig5 => &["ddpn_noisy", "reduced_noisy"],
        Experiment::Fig6 => &["ddpn", "reduced"],
        _ => &["ddpn1", "deepmod"],
    };
    let mut out = RunReport::new(fig.name(), &source.seeds);
    let mut train_series = Vec::new();
    let mut test_series = Vec::new();
    let mut csv = String::from("method,phase,index,iteration,median_reward\n");
    let mut stab = Vec::new();

    for &m in methods {
        let traces: Vec<&TrainingTrace> = source.traces_of(m).map(|t| &t.trace).collect();
        if traces.is_empty() {
            continue;
        }
        let s_med = median(&traces.iter().map(|t| stabilization(t)).collect::<Vec<_>>());
        stab.push((m, s_med, traces.len()));
        let iters = traces[0].train_iterations();
        let train = median_curve(&traces, Phase::Train);
        let test = median_curve(&traces, Phase::Test);
        for (i, r) in train.iter().enumerate() {
            let it = iters.get(i).copied().unwrap_or(i);
            csv.push_str(&format!("{m},train,{i},{it},{r}\n"));
        }
        for (i, r) in test.iter().enumerate() {
            csv.push_str(&format!("{m},test,{i},{},{r}\n", i + 1));
        }
        train_series.push(Series {
            label: m.to_string(),
            points: iters.iter().zip(&train).map(|(&x, &y)| (x as f64, y)).collect(),
            marker: Some(s_med),
        });
        test_series.push(Series {
            label: m.to_string(),
            points: test.iter().enumerate().map(|(i, &y)| ((i + 1) as f64, y)).collect(),
            marker: None,
        });
    }

    let title = format!("{}: median reward over {} seeds", fig.name(), source.seeds.len());
    let svg = svg::render(
        &title,
        &[
            Panel { title: "training".into(), x_label: "iteration".into(), series: train_series },
            Panel { title: "testing".into(), x_label: "test episode".into(), series: test_series },
        ],
    );
    let short = fig.name().trim_start_matches("fig");
    out.extra_files.push((format!("curves_{short}.svg"), svg));
    out.extra_files.push((format!("curves_{short}.csv"), csv));
    for (m, s, n) in &stab {
        out.warnings.push(format!("{m}: median stabilization iteration {s} over {n} seeds"));
    }

    let rate = |m: &str| median(&source.traces_of(m).map(|t| t.trace.test_success_rate(OPTIMAL_RETURN)).collect::<Vec<_>>());
    match fig {
        Experiment::Fig5 => {
            if let [(_, full, n), (_, reduced, _)] = stab[..] {
                out.checks.push(Check::at_least(Some(6), "fig5_seeds", n as f64, 5.0, ""));
                out.checks.push(Check::at_most(
                    Some(6),
                    "stabilization_ratio",
                    reduced / full,
                    MAX_STABILIZATION_RATIO,
                    format!("reduced {reduced} vs noisy full {full}"),
                ));
            } else {
                out.checks.push(Check::holds(Some(6), "stabilization_ratio", false, "missing traces"));
            }
        }
        Experiment::Fig6 => {
            for m in methods {
                out.checks.push(Check::at_least(None, &format!("{m}_test_constant"), rate(m), 1.0, "median over seeds"));
            }
        }
        _ => {
            out.checks.push(Check::at_least(None, "deepmod_test_constant", rate("deepmod"), 1.0, "median over seeds"));
            if let Some((_, s, _)) = stab.iter().find(|(m, _, _)| *m == "deepmod") {
                out.checks.push(Check::at_most(None, "deepmod_stabilization", *s, EARLY_ITERATION, "median over seeds"));
            }
        }
    }
    out
}

/// Per-index median across traces; shorter traces drop out past their end.
fn median_curve(traces: &[&TrainingTrace], phase: Phase) -> Vec<f64> {
    let series: Vec<Vec<f64>> = traces.iter().map(|t| t.rewards(phase)).collect();
    let n = series.iter().map(Vec::len).max().unwrap_or(0);
    (0..n)
        .map(|i| median(&series.iter().filter_map(|s| s.get(i).copied()).collect::<Vec<_>>()))
        .collect()
}

/// Reduced-network training must be strictly faster than the noisy full
/// network (medians of the recorded timings).
pub fn timing_check(report: &RunReport) -> Check {
    let secs = |m: &str| median(&report.timings.iter().filter(|t| t.method == m).map(|t| t.seconds).collect::<Vec<_>>());
    let (reduced, full) = (secs("reduced_noisy"), secs("ddpn_noisy"));
    Check {
        criterion: Some(9),
        name: "reduced_faster_than_noisy_full".into(),
        passed: reduced < full,
        measured: reduced,
        limit: full,
        detail: "median training seconds".into(),
    }
}

/// Seconds per method for the noisy full and reduced networks.
pub fn timing_report(cfg: &ExperimentConfig) -> Result<RunReport> {
    let spec = cfg.grid()?;
    let mut report = RunReport::new("timing", &cfg.seeds);
    for &seed in &cfg.seeds {
        let s = run_noisy_seed(&spec, cfg, seed)?;
        report.timings.push(Timing { method: "ddpn_noisy".into(), seed, seconds: s.full.trace.training_seconds() });
        report.timings.push(Timing { method: "reduced_noisy".into(), seed, seconds: s.reduced.trace.training_seconds() });
    }
    report.checks.push(timing_check(&report));
    Ok(report)
}
