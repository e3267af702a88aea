//! Binarized hidden-layer features, the state→feature map, and noisy inputs.

use std::collections::HashMap;
use std::fmt;
use std::fmt::Write as _;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::gridworld::{encode_one_hot, GridSpec, State};
use crate::nn::{Activation, Network};
use crate::rng::{self, fnv1a64};

/// Width of the hidden layer that features are read from.
pub const FEATURE_WIDTH: usize = 32;

/// Hidden layers are numbered from 1; the third is the last tanh layer.
pub const DEFAULT_FEATURE_LAYER: usize = 3;

/// A ±1 code read off a tanh layer.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FeatureVector(Vec<i8>);

impl FeatureVector {
    pub fn from_bits(bits: Vec<i8>) -> Result<Self> {
        if bits.iter().any(|&b| b != 1 && b != -1) {
            return Err(Error::Extraction("feature bits must be ±1".into()));
        }
        Ok(FeatureVector(bits))
    }

    pub fn bits(&self) -> &[i8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Real-valued network input: the bits cast to ±1.0.
    pub fn to_input(&self) -> Vec<f64> {
        self.0.iter().map(|&b| f64::from(b)).collect()
    }
}

impl fmt::Display for FeatureVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.0 {
            f.write_str(if b > 0 { "+" } else { "-" })?;
        }
        Ok(())
    }
}

/// `+1` if the activation is positive or zero, `-1` if negative.
pub fn binarize(activations: &[f64]) -> FeatureVector {
    FeatureVector(activations.iter().map(|&v| if v < 0.0 { -1 } else { 1 }).collect())
}

pub fn feature_input(f: &FeatureVector) -> Vec<f64> {
    f.to_input()
}

/// Post-activation of hidden layer `layer_index` (1-based), binarized.
pub fn extract_features(net: &Network, input: &[f64], layer_index: usize) -> Result<FeatureVector> {
    let layers = net.layers();
    if layer_index == 0 || layer_index >= layers.len() {
        return Err(Error::Extraction(format!(
            "hidden layer {layer_index} does not exist in a {}-layer network",
            layers.len()
        )));
    }
    let spec = layers[layer_index - 1].spec;
    if spec.activation != Activation::Tanh {
        return Err(Error::Extraction(format!(
            "hidden layer {layer_index} uses {}, not tanh",
            spec.activation.name()
        )));
    }
    if spec.fan_out != FEATURE_WIDTH {
        return Err(Error::Extraction(format!(
            "hidden layer {layer_index} has width {}, expected {FEATURE_WIDTH}",
            spec.fan_out
        )));
    }
    let trace = net.forward(input)?;
    Ok(binarize(&trace.post[layer_index - 1]))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseMode {
    /// Fresh bits on every call.
    Resample,
    /// One draw per state, cached.
    FixedPerState,
}

/// Appends `n_noise` uniform {0, 1} bits to a state encoding.
#[derive(Debug, Clone)]
pub struct NoiseAugmenter {
    n_noise: usize,
    seed: u64,
    mode: NoiseMode,
    rng: rng::Rng,
    cache: HashMap<State, Vec<f64>>,
}

impl NoiseAugmenter {
    pub fn new(n_noise: usize, seed: u64, mode: NoiseMode) -> Self {
        NoiseAugmenter {
            n_noise,
            seed,
            mode,
            rng: rng::seeded(seed),
            cache: HashMap::new(),
        }
    }

    pub fn n_noise(&self) -> usize {
        self.n_noise
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn mode(&self) -> NoiseMode {
        self.mode
    }

    pub fn augment(&mut self, encoding: &[f64], s: State) -> Vec<f64> {
        let noise = match self.mode {
            NoiseMode::Resample => draw_bits(&mut self.rng, self.n_noise),
            NoiseMode::FixedPerState => {
                let (rng, n) = (&mut self.rng, self.n_noise);
                self.cache.entry(s).or_insert_with(|| draw_bits(rng, n)).clone()
            }
        };
        let mut out = Vec::with_capacity(encoding.len() + noise.len());
        out.extend_from_slice(encoding);
        out.extend(noise);
        out
    }
}

fn draw_bits(rng: &mut rng::Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| if rng.gen::<bool>() { 1.0 } else { 0.0 }).collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureProvenance {
    /// FNV-1a hash of the source network's checkpoint text.
    pub checkpoint_id: String,
    pub layer_index: usize,
    pub noise_seed: Option<u64>,
}

/// State → feature dictionary, total over the grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateFeatureMap {
    entries: Vec<FeatureVector>,
    provenance: FeatureProvenance,
    collisions: Vec<(State, State)>,
}

impl StateFeatureMap {
    pub fn new(entries: Vec<FeatureVector>, provenance: FeatureProvenance) -> Self {
        let mut collisions = Vec::new();
        for i in 0..entries.len() {
            for j in i + 1..entries.len() {
                if entries[i] == entries[j] {
                    collisions.push((State(i), State(j)));
                }
            }
        }
        StateFeatureMap {
            entries,
            provenance,
            collisions,
        }
    }

    pub fn get(&self, s: State) -> &FeatureVector {
        &self.entries[s.0]
    }

    pub fn entries(&self) -> &[FeatureVector] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn provenance(&self) -> &FeatureProvenance {
        &self.provenance
    }

    pub fn is_injective(&self) -> bool {
        self.collisions.is_empty()
    }

    /// Pairs of states that share a feature vector.
    pub fn collisions(&self) -> &[(State, State)] {
        &self.collisions
    }

    /// First state carrying `f`, if any.
    pub fn state_of(&self, f: &FeatureVector) -> Option<State> {
        self.entries.iter().position(|e| e == f).map(State)
    }

    /// Stable identifier over the map's contents.
    pub fn id(&self) -> String {
        format!("{:016x}", fnv1a64(self.to_csv().as_bytes()))
    }

    pub fn to_csv(&self) -> String {
        let width = self.entries.first().map_or(0, FeatureVector::len);
        let mut out = String::from("state_label");
        for i in 0..width {
            let _ = write!(out, ",b_{i}");
        }
        out.push('\n');
        for (i, f) in self.entries.iter().enumerate() {
            out.push_str(&State(i).label());
            for b in f.bits() {
                let _ = write!(out, ",{b}");
            }
            out.push('\n');
        }
        out
    }

    /// Reloads entries written by [`to_csv`](Self::to_csv). Provenance is not
    /// part of the file and is supplied by the caller.
    pub fn from_csv(text: &str, provenance: FeatureProvenance) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let mut cols = line.split(',');
            let label = cols.next().unwrap_or_default();
            let s = State::from_label(label).ok_or_else(|| Error::Parse {
                line: i + 1,
                msg: format!("bad state label '{label}'"),
            })?;
            if s.0 != entries.len() {
                return Err(Error::Parse {
                    line: i + 1,
                    msg: "states out of order".into(),
                });
            }
            entries.push(parse_bits(cols, i + 1)?);
        }
        Ok(StateFeatureMap::new(entries, provenance))
    }
}

pub(crate) fn parse_bits<'a>(cols: impl Iterator<Item = &'a str>, line: usize) -> Result<FeatureVector> {
    let bits = cols
        .map(|c| c.trim().parse::<i8>())
        .collect::<std::result::Result<Vec<i8>, _>>()
        .map_err(|_| Error::Parse {
            line,
            msg: "bad feature bit".into(),
        })?;
    FeatureVector::from_bits(bits).map_err(|_| Error::Parse {
        line,
        msg: "feature bits must be ±1".into(),
    })
}

/// Reads every state's feature code from a trained network. With noise, each
/// state gets exactly one seeded draw.
pub fn build_state_feature_map(
    net: &Network,
    spec: &GridSpec,
    noise: Option<&mut NoiseAugmenter>,
    layer_index: usize,
) -> Result<StateFeatureMap> {
    let provenance = FeatureProvenance {
        checkpoint_id: format!("{:016x}", fnv1a64(net.to_checkpoint().as_bytes())),
        layer_index,
        noise_seed: noise.as_ref().map(|n| n.seed()),
    };
    let mut noise = noise;
    let entries = spec
        .states()
        .map(|s| {
            let one_hot = encode_one_hot(spec, s);
            let input = match noise.as_deref_mut() {
                Some(aug) => aug.augment(&one_hot, s),
                None => one_hot,
            };
            extract_features(net, &input, layer_index)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(StateFeatureMap::new(entries, provenance))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{chain, Activation::*};

    fn full_net(inputs: usize, seed: u64) -> Network {
        let specs = chain(inputs, &[(32, Tanh), (32, Tanh), (32, Tanh), (32, Relu), (32, Relu)], (1, Identity));
        Network::new(&specs, seed, true).unwrap()
    }

    #[test]
    fn binarize_rule() {
        let f = binarize(&[0.7, -0.3, 0.0, -0.0, 1e-300]);
        assert_eq!(f.bits(), &[1, -1, 1, 1, 1]);
    }

    #[test]
    fn binarize_is_idempotent() {
        let f = binarize(&[0.2, -0.9, 0.0, 0.4]);
        assert_eq!(binarize(&f.to_input()), f);
    }

    #[test]
    fn feature_input_casts_bits() {
        let f = FeatureVector::from_bits(vec![1, -1, 1]).unwrap();
        assert_eq!(feature_input(&f), vec![1.0, -1.0, 1.0]);
        assert!(FeatureVector::from_bits(vec![0]).is_err());
    }

    #[test]
    fn extraction_has_feature_width() {
        let net = full_net(16, 3);
        let mut x = vec![0.0; 16];
        x[4] = 1.0;
        let f = extract_features(&net, &x, 3).unwrap();
        assert_eq!(f.len(), 32);
    }

    #[test]
    fn extraction_rejects_non_tanh_and_missing_layers() {
        let net = full_net(16, 3);
        let x = vec![0.0; 16];
        assert!(extract_features(&net, &x, 4).is_err()); // ReLU
        assert!(extract_features(&net, &x, 0).is_err());
        assert!(extract_features(&net, &x, 6).is_err()); // output layer
        let narrow = Network::new(&chain(16, &[(8, Tanh)], (1, Identity)), 0, false).unwrap();
        assert!(extract_features(&narrow, &x, 1).is_err());
    }

    #[test]
    fn noise_augmentation_modes() {
        let one_hot = encode_one_hot(&GridSpec::frozen_lake(), State(2));
        let mut none = NoiseAugmenter::new(0, 1, NoiseMode::Resample);
        assert_eq!(none.augment(&one_hot, State(2)), one_hot);

        let mut fresh = NoiseAugmenter::new(20, 1, NoiseMode::Resample);
        let a = fresh.augment(&one_hot, State(2));
        assert_eq!(a.len(), 36);
        assert!(a[16..].iter().all(|&v| v == 0.0 || v == 1.0));
        let draws: Vec<_> = (0..8).map(|_| fresh.augment(&one_hot, State(2))).collect();
        assert!(draws.iter().any(|d| d != &a));

        let mut fixed = NoiseAugmenter::new(20, 1, NoiseMode::FixedPerState);
        let x = fixed.augment(&one_hot, State(2));
        fixed.augment(&one_hot, State(7));
        assert_eq!(fixed.augment(&one_hot, State(2)), x);
    }

    #[test]
    fn feature_map_is_total_and_deterministic() {
        let spec = GridSpec::frozen_lake();
        let net = full_net(36, 8);
        let build = || {
            let mut aug = NoiseAugmenter::new(20, 5, NoiseMode::FixedPerState);
            build_state_feature_map(&net, &spec, Some(&mut aug), 3).unwrap()
        };
        let m = build();
        assert_eq!(m.len(), 16);
        assert_eq!(m, build());
        assert_eq!(m.provenance().noise_seed, Some(5));
        assert_eq!(m.provenance().layer_index, 3);
    }

    #[test]
    fn collisions_are_listed() {
        let f = |b: i8| FeatureVector::from_bits(vec![b; 4]).unwrap();
        let prov = FeatureProvenance {
            checkpoint_id: "x".into(),
            layer_index: 3,
            noise_seed: None,
        };
        let m = StateFeatureMap::new(vec![f(1), f(-1), f(1)], prov);
        assert!(!m.is_injective());
        assert_eq!(m.collisions(), &[(State(0), State(2))]);
        assert_eq!(m.state_of(&f(-1)), Some(State(1)));
    }

    #[test]
    fn feature_map_csv_round_trip() {
        let spec = GridSpec::frozen_lake();
        let net = full_net(16, 21);
        let m = build_state_feature_map(&net, &spec, None, 3).unwrap();
        let back = StateFeatureMap::from_csv(&m.to_csv(), m.provenance().clone()).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_csv(), m.to_csv());
    }
}
