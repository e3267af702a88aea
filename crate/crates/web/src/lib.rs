//! Browser bindings. Every function returns a JSON string so the page needs
//! no generated type glue beyond `wasm-bindgen`.

use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

use deepmod::efm::{build_efm, ExplorationConfig};
use deepmod::encoding::OneHot;
use deepmod::features::build_state_feature_map;
use deepmod::gridworld::{GridSpec, RewardModel};
use deepmod::learners::{ddpn_state_values, train_ddpn, DdpnConfig, Phase};
use deepmod::tabular::{greedy_policy, value_iteration};

fn err(e: impl std::fmt::Display) -> JsValue {
    JsValue::from_str(&e.to_string())
}

fn grid(map: &str) -> Result<GridSpec, JsValue> {
    if map.trim().is_empty() {
        Ok(GridSpec::frozen_lake())
    } else {
        GridSpec::parse_map(map).map_err(err)
    }
}

fn layout(spec: &GridSpec) -> Value {
    json!({
        "width": spec.width(),
        "height": spec.height(),
        "map": spec.to_map_string(),
        "labels": spec.states().map(|s| s.label()).collect::<Vec<_>>(),
    })
}

/// Value iteration on `map` (empty string: the built-in lake) with discount
/// `gamma`: state values, greedy arrows and sweep count.
#[wasm_bindgen]
pub fn solve(map: &str, gamma: f64) -> Result<String, JsValue> {
    let spec = grid(map)?;
    let dp = RewardModel::dp_arrival();
    let out = value_iteration(&spec, &dp, gamma, 1e-9, 10_000).map_err(err)?;
    let policy = greedy_policy(&spec, &dp, &out.values, gamma);
    let arrows: Vec<String> = spec
        .states()
        .map(|s| policy.get(s).map_or("·".to_string(), |a| a.arrow().to_string()))
        .collect();
    Ok(json!({
        "grid": layout(&spec),
        "values": out.values.as_slice(),
        "arrows": arrows,
        "sweeps": out.sweeps,
    })
    .to_string())
}

fn quick_config(seed: u32, iterations: u32) -> DdpnConfig {
    DdpnConfig {
        bellman_iterations: iterations.max(2) as usize,
        test_episodes: 20,
        ..DdpnConfig::full(seed as u64)
    }
}

/// Trains a clean-input DDPN by fitted value iteration and returns its
/// training reward curve and final state values.
#[wasm_bindgen]
pub fn train_curve(seed: u32, iterations: u32) -> Result<String, JsValue> {
    let spec = GridSpec::frozen_lake();
    let mut input = OneHot::new(&spec);
    let (net, trace) = train_ddpn(&spec, &quick_config(seed, iterations), &mut input).map_err(err)?;
    let values = ddpn_state_values(&net, &mut input, &spec).map_err(err)?;
    Ok(json!({
        "grid": layout(&spec),
        "iterations": trace.train_iterations(),
        "train": trace.rewards(Phase::Train),
        "test": trace.rewards(Phase::Test),
        "stabilized_at": trace.stabilization_iteration(4.0),
        "values": values.as_slice(),
    })
    .to_string())
}

/// Trains a clean DDPN, reads ±1 codes from hidden layer `layer`, and, when
/// the codes are distinct, builds the feature transition table from them.
#[wasm_bindgen]
pub fn extract_features(seed: u32, iterations: u32, layer: u32) -> Result<String, JsValue> {
    let spec = GridSpec::frozen_lake();
    let (net, _) = train_ddpn(&spec, &quick_config(seed, iterations), &mut OneHot::new(&spec)).map_err(err)?;
    let fmap = build_state_feature_map(&net, &spec, None, layer as usize).map_err(err)?;
    let codes: Vec<String> = fmap.entries().iter().map(|f| f.to_string()).collect();
    let collisions: Vec<(String, String)> = fmap.collisions().iter().map(|(a, b)| (a.label(), b.label())).collect();
    let efm = if fmap.is_injective() {
        let efm = build_efm(&spec, &RewardModel::dp_arrival(), &fmap, &ExplorationConfig::new(seed as u64), None)
            .map_err(err)?;
        json!({ "entries": efm.len(), "episodes": efm.episodes(), "csv": efm.to_csv() })
    } else {
        Value::Null
    };
    Ok(json!({
        "grid": layout(&spec),
        "codes": codes,
        "collisions": collisions,
        "injective": fmap.is_injective(),
        "efm": efm,
    })
    .to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solve_reports_lake_values() {
        let v: Value = serde_json::from_str(&solve("", 0.9).unwrap()).unwrap();
        let a = v["values"][0].as_f64().unwrap();
        assert!((a - 5.31441).abs() < 1e-6);
        assert_eq!(v["arrows"].as_array().unwrap().len(), 16);
        assert_eq!(v["arrows"][15], "·");
    }

    #[test]
    fn solve_accepts_custom_maps() {
        let v: Value = serde_json::from_str(&solve("S.\n.G\n", 0.5).unwrap()).unwrap();
        assert_eq!(v["values"].as_array().unwrap().len(), 4);
        assert_eq!(v["grid"]["width"], 2);
    }

    #[test]
    fn short_training_returns_a_curve() {
        let v: Value = serde_json::from_str(&train_curve(1, 10).unwrap()).unwrap();
        assert_eq!(v["train"].as_array().unwrap().len(), 5);
        assert_eq!(v["values"].as_array().unwrap().len(), 16);
    }

    #[test]
    fn features_have_one_code_per_state() {
        let v: Value = serde_json::from_str(&extract_features(2, 10, 3).unwrap()).unwrap();
        assert_eq!(v["codes"].as_array().unwrap().len(), 16);
        assert_eq!(v["injective"].as_bool().unwrap(), v["efm"].is_object());
    }
}
