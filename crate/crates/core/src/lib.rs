//! Dynamic programming over learned feature spaces.
//!
//! The crate covers the whole chain from a small deterministic gridworld to a
//! value network trained purely inside a feature-space transition model:
//!
//! * [`gridworld`]: the 4×4 lake MDP, reward conventions, episode rollouts.
//! * [`tabular`]: value iteration, greedy policies and tabular Q-learning.
//! * [`nn`]: a small dense network with exact backprop and Adam.
//! * [`learners`]: fitted value iteration (DDPN), Q distillation and a DQN.
//! * [`features`]: ±1 hidden-layer codes, the state→feature map, noisy inputs.
//! * [`efm`]: the extracted-feature transition model and the six-step pipeline.
//! * [`harness`]: experiment presets, reports, CSV/SVG output and acceptance checks.

pub mod clock;
pub mod efm;
pub mod encoding;
pub mod error;
pub mod features;
pub mod gridworld;
pub mod harness;
pub mod learners;
pub mod nn;
pub mod rng;
pub mod tabular;

pub use error::{Error, Result};
