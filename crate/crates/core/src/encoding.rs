//! How a state is presented to a network.

use crate::features::{NoiseAugmenter, StateFeatureMap};
use crate::gridworld::{encode_one_hot, GridSpec, State};

pub trait StateEncoder {
    fn width(&self) -> usize;

    fn encode(&mut self, spec: &GridSpec, s: State) -> Vec<f64>;

    /// Whether repeated calls for one state may differ.
    fn is_stochastic(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy)]
pub struct OneHot {
    n_states: usize,
}

impl OneHot {
    pub fn new(spec: &GridSpec) -> Self {
        OneHot {
            n_states: spec.n_states(),
        }
    }
}

impl StateEncoder for OneHot {
    fn width(&self) -> usize {
        self.n_states
    }

    fn encode(&mut self, spec: &GridSpec, s: State) -> Vec<f64> {
        encode_one_hot(spec, s)
    }
}

/// One-hot state followed by noise bits.
#[derive(Debug, Clone)]
pub struct NoisyOneHot {
    n_states: usize,
    noise: NoiseAugmenter,
}

impl NoisyOneHot {
    pub fn new(spec: &GridSpec, noise: NoiseAugmenter) -> Self {
        NoisyOneHot {
            n_states: spec.n_states(),
            noise,
        }
    }
}

impl StateEncoder for NoisyOneHot {
    fn width(&self) -> usize {
        self.n_states + self.noise.n_noise()
    }

    fn encode(&mut self, spec: &GridSpec, s: State) -> Vec<f64> {
        self.noise.augment(&encode_one_hot(spec, s), s)
    }

    fn is_stochastic(&self) -> bool {
        self.noise.n_noise() > 0 && self.noise.mode() == crate::features::NoiseMode::Resample
    }
}

/// ±1 feature code looked up from a state→feature map.
#[derive(Debug, Clone)]
pub struct Features<'a> {
    map: &'a StateFeatureMap,
}

impl<'a> Features<'a> {
    pub fn new(map: &'a StateFeatureMap) -> Self {
        Features { map }
    }
}

impl StateEncoder for Features<'_> {
    fn width(&self) -> usize {
        self.map.get(State(0)).len()
    }

    fn encode(&mut self, _spec: &GridSpec, s: State) -> Vec<f64> {
        self.map.get(s).to_input()
    }
}
