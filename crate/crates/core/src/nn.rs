//! Dense feed-forward networks with hand-written reverse-mode gradients.
//!
//! Weights are stored row-major as `outputs x inputs`. Batches are flat
//! row-major buffers of `n x width`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Relu,
    Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize, activation: Activation) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
            activation,
        }
    }

    /// He-style uniform fan-in initialization, zero bias.
    pub fn he_uniform<R: Rng + ?Sized>(
        inputs: usize,
        outputs: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let limit = (6.0 / inputs as f64).sqrt();
        let weights = (0..inputs * outputs)
            .map(|_| rng.random_range(-limit..limit))
            .collect();
        Self {
            inputs,
            outputs,
            weights,
            bias: vec![0.0; outputs],
            activation,
        }
    }

    fn forward_into(&self, x: &[f64], out: &mut [f64]) {
        let nnz = x.iter().filter(|v| **v != 0.0).count();
        if nnz * 4 < self.inputs {
            // Sparse (one-hot) input: gather the active columns only.
            out.copy_from_slice(&self.bias);
            for (i, &xi) in x.iter().enumerate().filter(|(_, v)| **v != 0.0) {
                for (o, y) in out.iter_mut().enumerate() {
                    *y += self.weights[o * self.inputs + i] * xi;
                }
            }
        } else {
            for (o, y) in out.iter_mut().enumerate() {
                *y = self.bias[o] + dot(&self.weights[o * self.inputs..(o + 1) * self.inputs], x);
            }
        }
        if self.activation == Activation::Relu {
            out.iter_mut().for_each(|y| *y = y.max(0.0));
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let tail: f64 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(x, y)| x * y)
        .sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    layers: Vec<Dense>,
}

/// Gradient of one layer, same shapes as the layer's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrad {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<DenseGrad>,
}

impl Gradients {
    pub fn slices(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weights.as_slice(), l.bias.as_slice()])
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.slices()
            .iter()
            .all(|s| s.iter().all(|v| v.is_finite()))
    }
}

/// Activations recorded by [`Mlp::forward_batch`]: `values[0]` is the input,
/// `values[k + 1]` the output of layer `k`.
#[derive(Debug, Clone)]
pub struct Trace {
    pub n: usize,
    pub values: Vec<Vec<f64>>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.values.last().expect("trace always holds the input")
    }
}

impl Mlp {
    pub fn new(layers: Vec<Dense>) -> Result<Self> {
        let net = Self { layers };
        net.validate()?;
        Ok(net)
    }

    /// Checks layer chaining, buffer sizes and parameter finiteness.
    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Usage("network needs at least one layer".into()));
        }
        for (k, l) in self.layers.iter().enumerate() {
            if l.inputs == 0 || l.outputs == 0 {
                return Err(Error::Usage(format!("layer {k} has a zero dimension")));
            }
            if l.weights.len() != l.inputs * l.outputs || l.bias.len() != l.outputs {
                return Err(Error::Usage(format!(
                    "layer {k} buffers do not match its shape"
                )));
            }
            if !l.weights.iter().chain(&l.bias).all(|v| v.is_finite()) {
                return Err(Error::Numerical(format!(
                    "layer {k} has non-finite parameters"
                )));
            }
        }
        for (k, pair) in self.layers.windows(2).enumerate() {
            if pair[0].outputs != pair[1].inputs {
                return Err(Error::Usage(format!(
                    "layer {k} outputs {} but layer {} expects {}",
                    pair[0].outputs,
                    k + 1,
                    pair[1].inputs
                )));
            }
        }
        Ok(())
    }

    /// Builds `sizes[0] -> sizes[1] -> ... ` with ReLU hidden layers and an identity output.
    pub fn he_uniform<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(Error::Usage("need at least input and output sizes".into()));
        }
        let last = sizes.len() - 2;
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(k, w)| {
                let act = if k == last {
                    Activation::Identity
                } else {
                    Activation::Relu
                };
                Dense::he_uniform(w[0], w[1], act, rng)
            })
            .collect();
        Self::new(layers)
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    /// Parameter tensors in the same order as [`Gradients::slices`].
    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weights.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }

    pub fn params(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weights.as_slice(), l.bias.as_slice()])
            .collect()
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.input_dim() {
            return Err(Error::Usage(format!(
                "input has length {}, network expects {}",
                input.len(),
                self.input_dim()
            )));
        }
        let mut cur = input.to_vec();
        for l in &self.layers {
            let mut next = vec![0.0; l.outputs];
            l.forward_into(&cur, &mut next);
            cur = next;
        }
        Ok(cur)
    }

    pub fn forward_batch(&self, input: &[f64], n: usize) -> Result<Trace> {
        if input.len() != n * self.input_dim() {
            return Err(Error::Usage(format!(
                "batch buffer has length {}, expected {} x {}",
                input.len(),
                n,
                self.input_dim()
            )));
        }
        let mut values = Vec::with_capacity(self.layers.len() + 1);
        values.push(input.to_vec());
        for l in &self.layers {
            let prev = values.last().expect("non-empty");
            let mut next = vec![0.0; n * l.outputs];
            for r in 0..n {
                l.forward_into(
                    &prev[r * l.inputs..(r + 1) * l.inputs],
                    &mut next[r * l.outputs..(r + 1) * l.outputs],
                );
            }
            values.push(next);
        }
        Ok(Trace { n, values })
    }

    /// Backpropagates `output_grad` (n x out) through a recorded forward pass.
    /// Parameter gradients are summed over the batch.
    pub fn backward_batch(
        &self,
        trace: &Trace,
        output_grad: &[f64],
    ) -> Result<(Gradients, Vec<f64>)> {
        self.backward_impl(trace, output_grad, true)
    }

    /// Like [`Mlp::backward_batch`] but skips the input gradient.
    pub fn param_gradients(&self, trace: &Trace, output_grad: &[f64]) -> Result<Gradients> {
        self.backward_impl(trace, output_grad, false)
            .map(|(g, _)| g)
    }

    fn backward_impl(
        &self,
        trace: &Trace,
        output_grad: &[f64],
        input_grad: bool,
    ) -> Result<(Gradients, Vec<f64>)> {
        let n = trace.n;
        if output_grad.len() != n * self.output_dim() || trace.values.len() != self.layers.len() + 1
        {
            return Err(Error::Usage(
                "output gradient does not match the trace".into(),
            ));
        }
        let mut grads: Vec<DenseGrad> = Vec::with_capacity(self.layers.len());
        let mut upstream = output_grad.to_vec();
        for (k, l) in self.layers.iter().enumerate().rev() {
            let x = &trace.values[k];
            let y = &trace.values[k + 1];
            if l.activation == Activation::Relu {
                for (g, &v) in upstream.iter_mut().zip(y) {
                    if v <= 0.0 {
                        *g = 0.0;
                    }
                }
            }
            let need_down = k > 0 || input_grad;
            let mut gw = vec![0.0; l.weights.len()];
            let mut gb = vec![0.0; l.outputs];
            let mut down = vec![0.0; if need_down { n * l.inputs } else { 0 }];
            for r in 0..n {
                let xr = &x[r * l.inputs..(r + 1) * l.inputs];
                let gr = &upstream[r * l.outputs..(r + 1) * l.outputs];
                let sparse = xr.iter().filter(|v| **v != 0.0).count() * 4 < l.inputs;
                for (o, &g) in gr.iter().enumerate() {
                    if g == 0.0 {
                        continue;
                    }
                    gb[o] += g;
                    let row = o * l.inputs..(o + 1) * l.inputs;
                    let gw_row = &mut gw[row.clone()];
                    if sparse {
                        for (i, &xi) in xr.iter().enumerate().filter(|(_, v)| **v != 0.0) {
                            gw_row[i] += g * xi;
                        }
                    } else {
                        for (w, &xi) in gw_row.iter_mut().zip(xr) {
                            *w += g * xi;
                        }
                    }
                    if need_down {
                        let dr = &mut down[r * l.inputs..(r + 1) * l.inputs];
                        for (d, &w) in dr.iter_mut().zip(&l.weights[row]) {
                            *d += g * w;
                        }
                    }
                }
            }
            grads.push(DenseGrad {
                weights: gw,
                bias: gb,
            });
            upstream = down;
        }
        grads.reverse();
        Ok((Gradients { layers: grads }, upstream))
    }

    /// Gradients of `output_grad . f(input)` with respect to every parameter and the input.
    pub fn backward(&self, input: &[f64], output_grad: &[f64]) -> Result<(Gradients, Vec<f64>)> {
        if input.len() != self.input_dim() {
            return Err(Error::Usage(
                "input length does not match the network".into(),
            ));
        }
        let trace = self.forward_batch(input, 1)?;
        self.backward_batch(&trace, output_grad)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam optimizer state for a fixed list of parameter tensors.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
}

impl Adam {
    pub fn new(config: AdamConfig, shapes: &[usize]) -> Self {
        Self {
            config,
            m: shapes.iter().map(|&s| vec![0.0; s]).collect(),
            v: shapes.iter().map(|&s| vec![0.0; s]).collect(),
            t: 0,
        }
    }

    pub fn for_mlp(config: AdamConfig, net: &Mlp) -> Self {
        let shapes: Vec<usize> = net.params().iter().map(|p| p.len()).collect();
        Self::new(config, &shapes)
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One bias-corrected update. Rejects non-finite gradients without touching any state.
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Usage(
                "parameter list does not match optimizer state".into(),
            ));
        }
        for ((p, g), m) in params.iter().zip(grads).zip(&self.m) {
            if p.len() != m.len() || g.len() != m.len() {
                return Err(Error::Usage(
                    "tensor shape does not match optimizer state".into(),
                ));
            }
        }
        if !grads.iter().all(|g| g.iter().all(|v| v.is_finite())) {
            return Err(Error::Numerical("non-finite gradient".into()));
        }
        self.t += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let c1 = 1.0 - beta1.powi(self.t as i32);
        let c2 = 1.0 - beta2.powi(self.t as i32);
        for (k, p) in params.iter_mut().enumerate() {
            let (m, v, g) = (&mut self.m[k], &mut self.v[k], grads[k]);
            for i in 0..p.len() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                let mh = m[i] / c1;
                let vh = v[i] / c2;
                p[i] -= lr * mh / (vh.sqrt() + eps);
            }
        }
        Ok(())
    }

    pub fn step_mlp(&mut self, net: &mut Mlp, grads: &Gradients) -> Result<()> {
        let g = grads.slices();
        let mut p = net.params_mut();
        self.step(&mut p, &g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    fn net_2_2_2() -> Mlp {
        Mlp::new(vec![
            Dense {
                inputs: 2,
                outputs: 2,
                weights: vec![1.0, -2.0, 0.5, 1.5],
                bias: vec![0.1, -0.2],
                activation: Activation::Relu,
            },
            Dense {
                inputs: 2,
                outputs: 2,
                weights: vec![2.0, 1.0, -1.0, 3.0],
                bias: vec![0.0, 0.5],
                activation: Activation::Identity,
            },
        ])
        .unwrap()
    }

    #[test]
    fn zero_network_outputs_zero() {
        let net = Mlp::new(vec![
            Dense::zeros(3, 4, Activation::Relu),
            Dense::zeros(4, 2, Activation::Identity),
        ])
        .unwrap();
        assert_eq!(net.forward(&[1.0, -2.0, 3.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn identity_layer_passes_input() {
        let mut l = Dense::zeros(3, 3, Activation::Identity);
        for i in 0..3 {
            l.weights[i * 3 + i] = 1.0;
        }
        let net = Mlp::new(vec![l]).unwrap();
        assert_eq!(
            net.forward(&[0.3, -1.0, 2.5]).unwrap(),
            vec![0.3, -1.0, 2.5]
        );
    }

    #[test]
    fn hand_computed_two_layer_net() {
        // x = (1, 0.25): h_pre = (1 - 0.5 + 0.1, 0.5 + 0.375 - 0.2) = (0.6, 0.675)
        // y = (2*0.6 + 0.675, -0.6 + 3*0.675 + 0.5) = (1.875, 1.925)
        let y = net_2_2_2().forward(&[1.0, 0.25]).unwrap();
        assert!((y[0] - 1.875).abs() < 1e-12);
        assert!((y[1] - 1.925).abs() < 1e-12);
        // x = (0, 1): h_pre = (-1.9, 1.3) -> relu (0, 1.3); y = (1.3, 4.4)
        let y = net_2_2_2().forward(&[0.0, 1.0]).unwrap();
        assert!((y[0] - 1.3).abs() < 1e-12);
        assert!((y[1] - 4.4).abs() < 1e-12);
    }

    #[test]
    fn shape_mismatch_is_usage_error() {
        let net = net_2_2_2();
        assert!(matches!(net.forward(&[1.0]), Err(Error::Usage(_))));
        assert!(matches!(
            net.backward(&[1.0, 2.0], &[1.0]),
            Err(Error::Usage(_))
        ));
        let bad = Mlp::new(vec![
            Dense::zeros(2, 3, Activation::Relu),
            Dense::zeros(2, 1, Activation::Identity),
        ]);
        assert!(bad.is_err());
    }

    #[test]
    fn identity_layer_input_gradient_is_transpose_product() {
        let l = Dense {
            inputs: 2,
            outputs: 3,
            weights: vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
            bias: vec![0.0; 3],
            activation: Activation::Identity,
        };
        let net = Mlp::new(vec![l]).unwrap();
        let (_, gx) = net.backward(&[0.7, -0.1], &[1.0, -1.0, 0.5]).unwrap();
        assert_eq!(gx, vec![1.0 - 3.0 + 2.5, 2.0 - 4.0 + 3.0]);
    }

    #[test]
    fn relu_blocks_gradient_for_negative_preactivation() {
        let net = Mlp::new(vec![Dense {
            inputs: 1,
            outputs: 1,
            weights: vec![1.0],
            bias: vec![-5.0],
            activation: Activation::Relu,
        }])
        .unwrap();
        let (g, gx) = net.backward(&[1.0], &[1.0]).unwrap();
        assert_eq!(g.layers[0].weights, vec![0.0]);
        assert_eq!(g.layers[0].bias, vec![0.0]);
        assert_eq!(gx, vec![0.0]);
    }

    #[test]
    fn batch_gradient_is_sum_of_singles() {
        let mut rng = seed::rng(4);
        let net = Mlp::he_uniform(&[3, 5, 2], &mut rng).unwrap();
        let xs = [0.2, -0.4, 1.0, 0.9, 0.1, -0.3];
        let gs = [1.0, 0.5, -0.25, 2.0];
        let t = net.forward_batch(&xs, 2).unwrap();
        let (gb, _) = net.backward_batch(&t, &gs).unwrap();
        let (g0, _) = net.backward(&xs[..3], &gs[..2]).unwrap();
        let (g1, _) = net.backward(&xs[3..], &gs[2..]).unwrap();
        for ((b, a0), a1) in gb.slices().iter().zip(g0.slices()).zip(g1.slices()) {
            for i in 0..b.len() {
                assert!((b[i] - a0[i] - a1[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn adam_zero_gradient_leaves_parameters() {
        let mut p = vec![1.0, -2.0, 3.0];
        let before = p.clone();
        let mut opt = Adam::new(AdamConfig::default(), &[3]);
        opt.step(&mut [p.as_mut_slice()], &[&[0.0, 0.0, 0.0]])
            .unwrap();
        assert_eq!(p, before);
        assert_eq!(opt.steps(), 1);
    }

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        // m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps).
        let cfg = AdamConfig {
            lr: 0.01,
            ..AdamConfig::default()
        };
        let grads = [3.0, -0.5, 1e-3];
        let mut p = vec![0.0; 3];
        let mut opt = Adam::new(cfg, &[3]);
        opt.step(&mut [p.as_mut_slice()], &[&grads]).unwrap();
        for (pi, g) in p.iter().zip(grads) {
            let expected = -cfg.lr * g / (g.abs() + cfg.eps);
            assert!((pi - expected).abs() < 1e-15);
            assert!((pi.abs() - cfg.lr).abs() < 1e-7);
        }
    }

    #[test]
    fn adam_tensors_are_independent() {
        let cfg = AdamConfig::default();
        let (ga, gb) = ([0.3, -0.2], [1.0, 2.0, -4.0]);
        let mut a = vec![0.5, 0.5];
        let mut b = vec![-1.0, 0.0, 1.0];
        let mut joint = Adam::new(cfg, &[2, 3]);
        for _ in 0..3 {
            joint
                .step(&mut [a.as_mut_slice(), b.as_mut_slice()], &[&ga, &gb])
                .unwrap();
        }
        let mut a1 = vec![0.5, 0.5];
        let mut b1 = vec![-1.0, 0.0, 1.0];
        let mut oa = Adam::new(cfg, &[2]);
        let mut ob = Adam::new(cfg, &[3]);
        for _ in 0..3 {
            oa.step(&mut [a1.as_mut_slice()], &[&ga]).unwrap();
            ob.step(&mut [b1.as_mut_slice()], &[&gb]).unwrap();
        }
        assert_eq!(a, a1);
        assert_eq!(b, b1);
    }

    #[test]
    fn adam_rejects_non_finite_gradient() {
        let mut p = vec![1.0];
        let mut opt = Adam::new(AdamConfig::default(), &[1]);
        let r = opt.step(&mut [p.as_mut_slice()], &[&[f64::NAN]]);
        assert!(matches!(r, Err(Error::Numerical(_))));
        assert_eq!(p, vec![1.0]);
        assert_eq!(opt.steps(), 0);
    }

    #[test]
    fn serde_round_trip_is_bit_exact() {
        let net = Mlp::he_uniform(&[4, 8, 3], &mut seed::rng(11)).unwrap();
        let json = serde_json::to_string(&net).unwrap();
        let back: Mlp = serde_json::from_str(&json).unwrap();
        assert_eq!(net, back);
        assert_eq!(serde_json::to_string(&back).unwrap(), json);
    }
}
