//! Dense feedforward networks with exact backpropagation and Adam.
//!
//! Everything is `f64`. Weights are stored row-major as `fan_out × fan_in`.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Tanh,
    Relu,
    Identity,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
            Activation::Identity => x,
        }
    }

    /// Derivative in terms of the pre-activation `z` and output `y`.
    /// ReLU at exactly zero has derivative 0.
    fn derivative(self, z: f64, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
            Activation::Identity => "identity",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "tanh" => Some(Activation::Tanh),
            "relu" => Some(Activation::Relu),
            "identity" => Some(Activation::Identity),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSpec {
    pub fan_in: usize,
    pub fan_out: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn new(fan_in: usize, fan_out: usize, activation: Activation) -> Self {
        LayerSpec {
            fan_in,
            fan_out,
            activation,
        }
    }
}

/// Chains `input → hidden... → output` into layer specs.
pub fn chain(input: usize, hidden: &[(usize, Activation)], output: (usize, Activation)) -> Vec<LayerSpec> {
    let mut specs = Vec::with_capacity(hidden.len() + 1);
    let mut fan_in = input;
    for &(width, act) in hidden.iter().chain(std::iter::once(&output)) {
        specs.push(LayerSpec::new(fan_in, width, act));
        fan_in = width;
    }
    specs
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub spec: LayerSpec,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layers: Vec<Layer>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub input: Vec<f64>,
    pub pre: Vec<Vec<f64>>,
    pub post: Vec<Vec<f64>>,
}

impl ForwardTrace {
    pub fn output(&self) -> &[f64] {
        self.post.last().map_or(&self.input, Vec::as_slice)
    }
}

/// Per-parameter gradients (or Adam moments), shaped like the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(net: &Network) -> Self {
        Gradients {
            weights: net.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            biases: net.layers.iter().map(|l| vec![0.0; l.biases.len()]).collect(),
        }
    }

    fn add_scaled(&mut self, other: &Gradients, k: f64) {
        for (a, b) in self.params_mut().zip(other.params()) {
            *a += k * b;
        }
    }

    pub fn params(&self) -> impl Iterator<Item = &f64> {
        self.weights.iter().zip(&self.biases).flat_map(|(w, b)| w.iter().chain(b))
    }

    fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.weights
            .iter_mut()
            .zip(self.biases.iter_mut())
            .flat_map(|(w, b)| w.iter_mut().chain(b.iter_mut()))
    }
}

impl Network {
    /// Scaled-uniform (Glorot) weights, zero biases. With `zero_final` the
    /// output layer is all zeros so the network predicts 0 everywhere.
    pub fn new(specs: &[LayerSpec], seed: u64, zero_final: bool) -> Result<Self> {
        if specs.is_empty() {
            return Err(Error::Shape("network needs at least one layer".into()));
        }
        for (i, w) in specs.windows(2).enumerate() {
            if w[0].fan_out != w[1].fan_in {
                return Err(Error::Shape(format!(
                    "layer {i} emits {} but layer {} expects {}",
                    w[0].fan_out,
                    i + 1,
                    w[1].fan_in
                )));
            }
        }
        if specs.iter().any(|s| s.fan_in == 0 || s.fan_out == 0) {
            return Err(Error::Shape("layer widths must be positive".into()));
        }
        let mut rng = rng::seeded(seed);
        let last = specs.len() - 1;
        let layers = specs
            .iter()
            .enumerate()
            .map(|(i, &spec)| {
                let n = spec.fan_in * spec.fan_out;
                let weights = if zero_final && i == last {
                    vec![0.0; n]
                } else {
                    let limit = (6.0 / (spec.fan_in + spec.fan_out) as f64).sqrt();
                    (0..n).map(|_| rng.gen_range(-limit..limit)).collect()
                };
                Layer {
                    spec,
                    weights,
                    biases: vec![0.0; spec.fan_out],
                }
            })
            .collect();
        Ok(Network { layers })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| l.spec).collect()
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].spec.fan_in
    }

    pub fn output_width(&self) -> usize {
        self.layers[self.layers.len() - 1].spec.fan_out
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    pub fn params(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(&l.biases))
    }

    pub fn forward(&self, input: &[f64]) -> Result<ForwardTrace> {
        if input.len() != self.input_width() {
            return Err(Error::Dimension {
                expected: self.input_width(),
                got: input.len(),
            });
        }
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut post: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let x = post.last().map_or(input, Vec::as_slice);
            let z = affine(layer, x);
            let y = z.iter().map(|&v| layer.spec.activation.apply(v)).collect();
            pre.push(z);
            post.push(y);
        }
        Ok(ForwardTrace {
            input: input.to_vec(),
            pre,
            post,
        })
    }

    /// Output vector without keeping intermediate activations.
    pub fn predict(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.input_width() {
            return Err(Error::Dimension {
                expected: self.input_width(),
                got: input.len(),
            });
        }
        let mut x = input.to_vec();
        for layer in &self.layers {
            x = affine(layer, &x)
                .into_iter()
                .map(|v| layer.spec.activation.apply(v))
                .collect();
        }
        Ok(x)
    }

    pub fn predict_scalar(&self, input: &[f64]) -> Result<f64> {
        Ok(self.predict(input)?[0])
    }

    /// Versioned text dump: layer specs, then every parameter as the hex of
    /// its IEEE-754 bits, row-major, weights before biases per layer.
    pub fn to_checkpoint(&self) -> String {
        let mut out = String::from("deepmod-network v1\n");
        let _ = writeln!(out, "layers {}", self.layers.len());
        for l in &self.layers {
            let _ = writeln!(out, "{} {} {}", l.spec.fan_in, l.spec.fan_out, l.spec.activation.name());
        }
        for l in &self.layers {
            let hex: Vec<String> = l
                .weights
                .iter()
                .chain(&l.biases)
                .map(|v| format!("{:016x}", v.to_bits()))
                .collect();
            out.push_str(&hex.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn from_checkpoint(text: &str) -> Result<Self> {
        let bad = |msg: &str| Error::Checkpoint(msg.to_string());
        let mut lines = text.lines();
        if lines.next() != Some("deepmod-network v1") {
            return Err(bad("missing or unsupported header"));
        }
        let n: usize = lines
            .next()
            .and_then(|l| l.strip_prefix("layers "))
            .and_then(|n| n.parse().ok())
            .ok_or_else(|| bad("missing layer count"))?;
        let mut specs = Vec::with_capacity(n);
        for _ in 0..n {
            let line = lines.next().ok_or_else(|| bad("truncated layer specs"))?;
            let parts: Vec<&str> = line.split_whitespace().collect();
            let [fan_in, fan_out, act] = parts[..] else {
                return Err(bad("malformed layer spec"));
            };
            specs.push(LayerSpec::new(
                fan_in.parse().map_err(|_| bad("bad fan_in"))?,
                fan_out.parse().map_err(|_| bad("bad fan_out"))?,
                Activation::from_name(act).ok_or_else(|| bad("unknown activation"))?,
            ));
        }
        let mut net = Network::new(&specs, 0, false)?;
        for layer in &mut net.layers {
            let line = lines.next().ok_or_else(|| bad("truncated parameters"))?;
            let values = line
                .split_whitespace()
                .map(|h| u64::from_str_radix(h, 16).map(f64::from_bits))
                .collect::<std::result::Result<Vec<f64>, _>>()
                .map_err(|_| bad("bad parameter hex"))?;
            if values.len() != layer.weights.len() + layer.biases.len() {
                return Err(bad("parameter count does not match layer shape"));
            }
            let (w, b) = values.split_at(layer.weights.len());
            layer.weights.copy_from_slice(w);
            layer.biases.copy_from_slice(b);
        }
        Ok(net)
    }
}

fn affine(layer: &Layer, x: &[f64]) -> Vec<f64> {
    let fan_in = layer.spec.fan_in;
    layer
        .weights
        .chunks_exact(fan_in)
        .zip(&layer.biases)
        .map(|(row, b)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b)
        .collect()
}

/// Mean-squared error over the output dimension.
pub fn mse(output: &[f64], target: &[f64]) -> f64 {
    output.iter().zip(target).map(|(y, t)| (y - t) * (y - t)).sum::<f64>() / output.len() as f64
}

/// Exact gradient of [`mse`] with respect to every parameter.
pub fn backward_mse(net: &Network, trace: &ForwardTrace, target: &[f64]) -> Result<Gradients> {
    let output = trace.output();
    if target.len() != output.len() {
        return Err(Error::Dimension {
            expected: output.len(),
            got: target.len(),
        });
    }
    let n = output.len() as f64;
    let dy: Vec<f64> = output.iter().zip(target).map(|(y, t)| 2.0 * (y - t) / n).collect();
    Ok(backward_from_output_grad(net, trace, &dy))
}

/// Reverse accumulation from an arbitrary loss gradient at the output.
pub fn backward_from_output_grad(net: &Network, trace: &ForwardTrace, d_output: &[f64]) -> Gradients {
    let mut grads = Gradients::zeros_like(net);
    let mut delta_post = d_output.to_vec();
    for (i, layer) in net.layers.iter().enumerate().rev() {
        let act = layer.spec.activation;
        let delta: Vec<f64> = delta_post
            .iter()
            .zip(&trace.pre[i])
            .zip(&trace.post[i])
            .map(|((d, &z), &y)| d * act.derivative(z, y))
            .collect();
        let x = if i == 0 { &trace.input } else { &trace.post[i - 1] };
        let fan_in = layer.spec.fan_in;
        for (o, &d) in delta.iter().enumerate() {
            grads.biases[i][o] = d;
            if d != 0.0 {
                for (g, xv) in grads.weights[i][o * fan_in..(o + 1) * fan_in].iter_mut().zip(x) {
                    *g = d * xv;
                }
            }
        }
        if i > 0 {
            let mut prev = vec![0.0; fan_in];
            for (row, &d) in layer.weights.chunks_exact(fan_in).zip(&delta) {
                if d != 0.0 {
                    for (p, w) in prev.iter_mut().zip(row) {
                        *p += d * w;
                    }
                }
            }
            delta_post = prev;
        }
    }
    grads
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub first_moment: Gradients,
    pub second_moment: Gradients,
    pub timestep: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon_hat: f64,
}

impl AdamState {
    pub fn new(net: &Network, learning_rate: f64) -> Self {
        AdamState {
            first_moment: Gradients::zeros_like(net),
            second_moment: Gradients::zeros_like(net),
            timestep: 0,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon_hat: 1e-8,
        }
    }
}

/// One bias-corrected Adam update.
pub fn adam_step(net: &mut Network, adam: &mut AdamState, grads: &Gradients) {
    adam.timestep += 1;
    let t = adam.timestep as i32;
    let (b1, b2) = (adam.beta1, adam.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    let lr = adam.learning_rate;
    let eps = adam.epsilon_hat;
    let params = net
        .layers
        .iter_mut()
        .flat_map(|l| l.weights.iter_mut().chain(l.biases.iter_mut()));
    let m = adam.first_moment.params_mut();
    let v = adam.second_moment.params_mut();
    for (((p, m), v), &g) in params.zip(m).zip(v).zip(grads.params()) {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= lr * m_hat / (v_hat.sqrt() + eps);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Batch {
    Full,
    Size(usize),
}

/// Gradient descent on mean MSE. Returns the mean pre-update loss of each epoch.
pub fn fit(
    net: &mut Network,
    adam: &mut AdamState,
    dataset: &[(Vec<f64>, Vec<f64>)],
    epochs: usize,
    batch: Batch,
    shuffle_seed: u64,
) -> Result<Vec<f64>> {
    if dataset.is_empty() {
        return Err(Error::InvalidConfig("empty training set".into()));
    }
    let batch_size = match batch {
        Batch::Full => dataset.len(),
        Batch::Size(0) => return Err(Error::InvalidConfig("batch size must be positive".into())),
        Batch::Size(n) => n.min(dataset.len()),
    };
    let mut rng = rng::seeded(shuffle_seed);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut history = Vec::with_capacity(epochs);
    for _ in 0..epochs {
        if batch_size < dataset.len() {
            order.shuffle(&mut rng);
        }
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(batch_size) {
            let mut acc = Gradients::zeros_like(net);
            let k = 1.0 / chunk.len() as f64;
            for &i in chunk {
                let (x, t) = &dataset[i];
                let trace = net.forward(x)?;
                epoch_loss += mse(trace.output(), t);
                acc.add_scaled(&backward_mse(net, &trace, t)?, k);
            }
            adam_step(net, adam, &acc);
        }
        history.push(epoch_loss / dataset.len() as f64);
    }
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ddpn_specs() -> Vec<LayerSpec> {
        use Activation::*;
        chain(16, &[(32, Tanh), (32, Tanh), (32, Tanh), (32, Relu), (32, Relu)], (1, Identity))
    }

    #[test]
    fn parameter_count_of_five_layer_value_net() {
        let net = Network::new(&ddpn_specs(), 0, true).unwrap();
        assert_eq!(net.param_count(), 16 * 32 + 32 + 4 * (32 * 32 + 32) + 32 + 1);
        assert_eq!(net.param_count(), 4801);
    }

    #[test]
    fn zero_final_outputs_zero() {
        let net = Network::new(&ddpn_specs(), 9, true).unwrap();
        for i in 0..16 {
            let mut x = vec![0.0; 16];
            x[i] = 1.0;
            assert_eq!(net.predict_scalar(&x).unwrap(), 0.0);
        }
    }

    #[test]
    fn same_seed_same_network() {
        assert_eq!(
            Network::new(&ddpn_specs(), 4, false).unwrap(),
            Network::new(&ddpn_specs(), 4, false).unwrap()
        );
        assert_ne!(
            Network::new(&ddpn_specs(), 4, false).unwrap(),
            Network::new(&ddpn_specs(), 5, false).unwrap()
        );
    }

    #[test]
    fn inconsistent_specs_rejected() {
        let specs = [
            LayerSpec::new(4, 8, Activation::Tanh),
            LayerSpec::new(7, 1, Activation::Identity),
        ];
        assert!(matches!(Network::new(&specs, 0, false), Err(Error::Shape(_))));
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let net = Network::new(&ddpn_specs(), 0, false).unwrap();
        assert!(matches!(net.forward(&[0.0; 3]), Err(Error::Dimension { expected: 16, got: 3 })));
    }

    #[test]
    fn zero_weights_give_zero_activations() {
        let mut net = Network::new(&ddpn_specs(), 0, false).unwrap();
        for l in net.layers_mut() {
            l.weights.iter_mut().for_each(|w| *w = 0.0);
        }
        let trace = net.forward(&[1.0; 16]).unwrap();
        assert!(trace.post.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let mut net = Network::new(&[LayerSpec::new(3, 3, Activation::Identity)], 0, false).unwrap();
        let l = &mut net.layers_mut()[0];
        l.weights = vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
        assert_eq!(net.predict(&[0.5, -2.0, 3.0]).unwrap(), vec![0.5, -2.0, 3.0]);
    }

    #[test]
    fn exact_target_gives_zero_gradient() {
        let net = Network::new(&ddpn_specs(), 1, false).unwrap();
        let x = vec![0.25; 16];
        let trace = net.forward(&x).unwrap();
        let target = trace.output().to_vec();
        let g = backward_mse(&net, &trace, &target).unwrap();
        assert!(g.params().all(|&v| v == 0.0));
    }

    #[test]
    fn single_linear_neuron_closed_form() {
        let mut net = Network::new(&[LayerSpec::new(1, 1, Activation::Identity)], 0, false).unwrap();
        net.layers_mut()[0].weights = vec![1.5];
        net.layers_mut()[0].biases = vec![0.25];
        let (x, t) = (2.0, 1.0);
        let trace = net.forward(&[x]).unwrap();
        let g = backward_mse(&net, &trace, &[t]).unwrap();
        let residual = 1.5 * x + 0.25 - t;
        assert_eq!(g.weights[0][0], 2.0 * residual * x);
        assert_eq!(g.biases[0][0], 2.0 * residual);
    }

    #[test]
    fn adam_zero_gradient_is_a_no_op_on_params() {
        let mut net = Network::new(&ddpn_specs(), 2, false).unwrap();
        let before = net.clone();
        let mut adam = AdamState::new(&net, 1e-3);
        adam_step(&mut net, &mut adam, &Gradients::zeros_like(&before));
        assert_eq!(net, before);
        assert_eq!(adam.timestep, 1);
        assert!(adam.first_moment.params().all(|&v| v == 0.0));
        assert!(adam.second_moment.params().all(|&v| v == 0.0));
    }

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        let specs = [LayerSpec::new(2, 2, Activation::Identity)];
        let mut net = Network::new(&specs, 3, false).unwrap();
        let before = net.clone();
        let mut adam = AdamState::new(&net, 0.01);
        let mut g = Gradients::zeros_like(&net);
        g.weights[0] = vec![0.3, -2.0, 1e-3, -7.0];
        g.biases[0] = vec![5.0, -0.1];
        adam_step(&mut net, &mut adam, &g);
        for ((after, before), grad) in net.params().zip(before.params()).zip(g.params()) {
            let moved = after - before;
            assert!((moved + 0.01 * grad.signum()).abs() < 1e-6, "{moved} for g={grad}");
        }
        // A second identical step moves no more than the learning rate.
        let mid = net.clone();
        adam_step(&mut net, &mut adam, &g);
        for (after, before) in net.params().zip(mid.params()) {
            assert!((after - before).abs() <= 0.01 + 1e-12);
        }
    }

    #[test]
    fn fit_single_point_to_tiny_loss() {
        let specs = [LayerSpec::new(2, 1, Activation::Identity)];
        let mut net = Network::new(&specs, 0, false).unwrap();
        let mut adam = AdamState::new(&net, 0.05);
        let data = vec![(vec![1.0, -1.0], vec![3.0])];
        let hist = fit(&mut net, &mut adam, &data, 2000, Batch::Full, 0).unwrap();
        let last = mse(&net.predict(&data[0].0).unwrap(), &data[0].1);
        assert!(last < 1e-6, "{last} / {:?}", hist.last());
    }

    #[test]
    fn fit_zero_epochs_leaves_net_unchanged() {
        let mut net = Network::new(&ddpn_specs(), 0, false).unwrap();
        let before = net.clone();
        let mut adam = AdamState::new(&net, 1e-3);
        let data = vec![(vec![0.0; 16], vec![1.0])];
        let hist = fit(&mut net, &mut adam, &data, 0, Batch::Full, 0).unwrap();
        assert!(hist.is_empty());
        assert_eq!(net, before);
    }

    #[test]
    fn fit_rejects_empty_dataset() {
        let mut net = Network::new(&ddpn_specs(), 0, false).unwrap();
        let mut adam = AdamState::new(&net, 1e-3);
        assert!(fit(&mut net, &mut adam, &[], 1, Batch::Full, 0).is_err());
    }

    #[test]
    fn minibatch_fit_is_seed_deterministic() {
        let data: Vec<_> = (0..10).map(|i| (vec![i as f64 / 10.0, 1.0], vec![i as f64])).collect();
        let specs = [LayerSpec::new(2, 4, Activation::Tanh), LayerSpec::new(4, 1, Activation::Identity)];
        let run = || {
            let mut net = Network::new(&specs, 1, false).unwrap();
            let mut adam = AdamState::new(&net, 1e-2);
            fit(&mut net, &mut adam, &data, 5, Batch::Size(3), 42).unwrap();
            net
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let net = Network::new(&ddpn_specs(), 77, false).unwrap();
        let text = net.to_checkpoint();
        let back = Network::from_checkpoint(&text).unwrap();
        assert!(net.params().zip(back.params()).all(|(a, b)| a.to_bits() == b.to_bits()));
        assert_eq!(back.to_checkpoint(), text);
    }

    #[test]
    fn checkpoint_rejects_garbage() {
        assert!(Network::from_checkpoint("nope").is_err());
        let mut text = Network::new(&ddpn_specs(), 1, false).unwrap().to_checkpoint();
        text.truncate(text.len() / 2);
        assert!(Network::from_checkpoint(&text).is_err());
    }
}
