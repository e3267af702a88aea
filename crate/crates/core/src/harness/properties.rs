//! Seed-independent property checks run by the `check` command.

use rand::Rng as _;

use crate::error::Result;
use crate::features::{binarize, FeatureVector};
use crate::gridworld::{step, Action, GridSpec, RewardModel};
use crate::nn::{backward_mse, chain, mse, Activation, Network};
use crate::rng;

use super::config::ExperimentConfig;
use super::experiments::reproduce_table1;
use super::report::Check;

pub const FD_STEP: f64 = 1e-5;
pub const FD_MAX_REL_ERROR: f64 = 1e-4;
/// Gradients smaller than this are compared absolutely.
const FD_FLOOR: f64 = 1e-6;

/// Worst relative error between backprop and central differences over `n`
/// random networks, plus the number of parameters compared. Parameters whose
/// ±h perturbation flips a ReLU are skipped (the loss is not differentiable
/// there).
pub fn gradient_check(n_nets: usize, seed: u64) -> Result<(f64, usize)> {
    let mut rng = rng::seeded(seed);
    let acts = [Activation::Tanh, Activation::Relu, Activation::Identity];
    let mut worst: f64 = 0.0;
    let mut compared = 0;
    for k in 0..n_nets {
        let input_w = rng.gen_range(1..=6);
        let hidden: Vec<(usize, Activation)> = (0..rng.gen_range(1..=4))
            .map(|_| (rng.gen_range(1..=6), acts[rng.gen_range(0..acts.len())]))
            .collect();
        let out_w = rng.gen_range(1..=3);
        let mut net = Network::new(&chain(input_w, &hidden, (out_w, Activation::Identity)), seed ^ k as u64, false)?;
        for layer in net.layers_mut() {
            for b in &mut layer.biases {
                *b = rng.gen_range(-0.5..0.5);
            }
        }
        let x: Vec<f64> = (0..input_w).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let t: Vec<f64> = (0..out_w).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let grads = backward_mse(&net, &net.forward(&x)?, &t)?;

        let n_layers = net.layers().len();
        for l in 0..n_layers {
            for is_bias in [false, true] {
                let len = if is_bias { net.layers()[l].biases.len() } else { net.layers()[l].weights.len() };
                for i in 0..len {
                    let eval = |delta: f64| -> Result<(f64, Vec<bool>)> {
                        let mut probe = net.clone();
                        let layer = &mut probe.layers_mut()[l];
                        if is_bias {
                            layer.biases[i] += delta;
                        } else {
                            layer.weights[i] += delta;
                        }
                        let tr = probe.forward(&x)?;
                        let pattern = tr.pre.iter().flatten().map(|z| *z > 0.0).collect();
                        Ok((mse(tr.output(), &t), pattern))
                    };
                    let (plus, pp) = eval(FD_STEP)?;
                    let (minus, pm) = eval(-FD_STEP)?;
                    if pp != pm && hidden.iter().any(|h| h.1 == Activation::Relu) {
                        continue;
                    }
                    let numeric = (plus - minus) / (2.0 * FD_STEP);
                    let exact = if is_bias { grads.biases[l][i] } else { grads.weights[l][i] };
                    let rel = (exact - numeric).abs() / exact.abs().max(numeric.abs()).max(FD_FLOOR);
                    worst = worst.max(rel);
                    compared += 1;
                }
            }
        }
    }
    Ok((worst, compared))
}

/// Binarization maps every real vector to ±1 of the same length, and is a
/// fixed point on its own output.
pub fn binarization_check(samples: usize, seed: u64) -> bool {
    let mut rng = rng::seeded(seed);
    (0..samples).all(|i| {
        let n = 1 + i % 40;
        let v: Vec<f64> = (0..n)
            .map(|j| match (i + j) % 7 {
                0 => 0.0,
                1 => -0.0,
                _ => rng.gen_range(-3.0..3.0),
            })
            .collect();
        let f = binarize(&v);
        let total = f.len() == n && f.bits().iter().all(|&b| b == 1 || b == -1);
        let again: FeatureVector = binarize(&f.to_input());
        total && again == f
    })
}

/// Evaluation reward equals the arrival reward plus the step cost on every
/// transition out of every non-terminal state.
pub fn reward_decomposition_check(spec: &GridSpec) -> Result<bool> {
    let dp = RewardModel::dp_arrival();
    let ev = RewardModel::episode_eval();
    for s in spec.non_terminal_states() {
        for a in Action::ALL {
            let x = step(spec, &dp, s, a)?;
            let y = step(spec, &ev, s, a)?;
            if x.next != y.next || y.reward != x.reward + ev.step_penalty {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Runs the clean table twice on the first seed and compares every CSV
/// artifact byte for byte.
pub fn determinism_check(cfg: &ExperimentConfig) -> Result<bool> {
    let one = ExperimentConfig {
        seeds: cfg.seeds.iter().copied().take(1).collect(),
        ..cfg.clone()
    };
    let a = reproduce_table1(&one)?;
    let b = reproduce_table1(&one)?;
    let csvs = |r: &super::report::RunReport| -> Vec<String> {
        let mut v = vec![r.values_csv()];
        v.extend(r.traces.iter().map(|t| t.trace.to_csv(false)));
        v
    };
    Ok(csvs(&a) == csvs(&b))
}

pub fn property_checks(cfg: &ExperimentConfig) -> Result<Vec<Check>> {
    let (worst, compared) = gradient_check(100, 0x6ead)?;
    let spec = cfg.grid()?;
    Ok(vec![
        Check::at_most(
            Some(8),
            "gradients_vs_finite_differences",
            worst,
            FD_MAX_REL_ERROR,
            format!("100 networks, {compared} parameters"),
        ),
        Check::holds(Some(8), "binarization_total_idempotent", binarization_check(1000, 7), "1000 vectors"),
        Check::holds(Some(8), "deterministic_csv", determinism_check(cfg)?, "table1, first seed, two runs"),
        Check::holds(Some(8), "reward_decomposition", reward_decomposition_check(&spec)?, "all transitions"),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_gradient_check_passes() {
        let (worst, compared) = gradient_check(10, 3).unwrap();
        assert!(compared > 50);
        assert!(worst < FD_MAX_REL_ERROR, "{worst}");
    }

    #[test]
    fn binarization_and_rewards() {
        assert!(binarization_check(200, 1));
        assert!(reward_decomposition_check(&GridSpec::frozen_lake()).unwrap());
    }
}
