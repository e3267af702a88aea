use deepmod::features::binarize;
use deepmod::gridworld::{step, Action, GridSpec, RewardModel};
use deepmod::nn::{backward_mse, chain, mse, Activation, Network};
use deepmod::tabular::{bellman_backup, value_iteration, ValueTable};
use proptest::prelude::*;

/// Random rectangular map with one start, one goal, some holes.
fn map_strategy() -> impl Strategy<Value = String> {
    (2usize..=5, 2usize..=5)
        .prop_flat_map(|(w, h)| (Just(w), Just(h), proptest::collection::vec(0u8..4, w * h), 0..w * h, 0..w * h))
        .prop_filter("start and goal differ", |(_, _, _, s, g)| s != g)
        .prop_map(|(w, _h, cells, s, g)| {
            let mut out = String::new();
            for (i, c) in cells.iter().enumerate() {
                out.push(match i {
                    _ if i == s => 'S',
                    _ if i == g => 'G',
                    _ if *c == 0 => 'H',
                    _ => '.',
                });
                if i % w == w - 1 {
                    out.push('\n');
                }
            }
            out
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn binarize_is_total_and_idempotent(v in proptest::collection::vec(-1e6f64..1e6, 0..64)) {
        let f = binarize(&v);
        prop_assert_eq!(f.len(), v.len());
        prop_assert!(f.bits().iter().all(|&b| b == 1 || b == -1));
        prop_assert_eq!(binarize(&f.to_input()), f.clone());
        for (x, b) in v.iter().zip(f.bits()) {
            prop_assert_eq!(*b == -1, *x < 0.0);
        }
    }

    #[test]
    fn evaluation_reward_is_arrival_plus_step_cost(map in map_strategy()) {
        let spec = GridSpec::parse_map(&map).unwrap();
        let (dp, ev) = (RewardModel::dp_arrival(), RewardModel::episode_eval());
        for s in spec.non_terminal_states() {
            for a in Action::ALL {
                let x = step(&spec, &dp, s, a).unwrap();
                let y = step(&spec, &ev, s, a).unwrap();
                prop_assert_eq!(x.next, y.next);
                prop_assert_eq!(y.reward, x.reward + ev.step_penalty);
            }
        }
    }

    #[test]
    fn value_iteration_reaches_a_fixed_point(map in map_strategy(), gamma in 0.0f64..0.95) {
        let spec = GridSpec::parse_map(&map).unwrap();
        let dp = RewardModel::dp_arrival();
        let out = value_iteration(&spec, &dp, gamma, 1e-10, 10_000).unwrap();
        let again = bellman_backup(&spec, &dp, gamma, &out.values);
        prop_assert!(again.max_abs_diff(&out.values) < 1e-8);
        prop_assert_eq!(out.values.get(spec.goal()), dp.goal_reward);
        // Bounded by the geometric series of the largest reward.
        let bound = dp.goal_reward.max(-dp.hole_penalty) / (1.0 - gamma);
        prop_assert!(out.values.as_slice().iter().all(|v| v.abs() <= bound + 1e-9));
    }

    #[test]
    fn value_table_csv_round_trips(v in proptest::collection::vec(-100f64..100.0, 16)) {
        let t = ValueTable::from_vec(v);
        prop_assert_eq!(ValueTable::from_csv(&t.to_csv()).unwrap(), t);
    }

    #[test]
    fn backprop_matches_central_differences(seed in 0u64..10_000, width in 1usize..6, depth in 1usize..4) {
        let hidden = vec![(width, Activation::Tanh); depth];
        let net = Network::new(&chain(3, &hidden, (2, Activation::Identity)), seed, false).unwrap();
        let x = [0.3, -0.7, 0.5];
        let y = [0.25, -1.0];
        let g = backward_mse(&net, &net.forward(&x).unwrap(), &y).unwrap();
        let h = 1e-5;
        for l in 0..net.layers().len() {
            for i in 0..net.layers()[l].weights.len() {
                let loss = |d: f64| {
                    let mut p = net.clone();
                    p.layers_mut()[l].weights[i] += d;
                    mse(&p.predict(&x).unwrap(), &y)
                };
                let fd = (loss(h) - loss(-h)) / (2.0 * h);
                let bp = g.weights[l][i];
                prop_assert!((fd - bp).abs() / fd.abs().max(bp.abs()).max(1e-6) < 1e-4, "{fd} vs {bp}");
            }
        }
    }

    #[test]
    fn checkpoints_round_trip(seed in 0u64..1000) {
        let net = Network::new(&chain(4, &[(5, Activation::Relu), (3, Activation::Tanh)], (1, Activation::Identity)), seed, false).unwrap();
        let back = Network::from_checkpoint(&net.to_checkpoint()).unwrap();
        prop_assert_eq!(back, net);
    }
}
