//! Fully connected network with ReLU hidden layers and a linear output, plus
//! the Adam update rule.

use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    /// Row-major `outputs x inputs`.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Dense {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Dense {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            biases: vec![0.0; outputs],
        }
    }

    /// Uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` for weights and biases.
    fn random<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (inputs as f64).sqrt();
        let mut draw = || rng.gen_range(-bound..bound);
        let weights = (0..inputs * outputs).map(|_| draw()).collect();
        let biases = (0..outputs).map(|_| draw()).collect();
        Dense {
            inputs,
            outputs,
            weights,
            biases,
        }
    }

    fn forward_into(&self, input: &[f64], batch: usize, out: &mut Vec<f64>, relu: bool) {
        // column-wise accumulation over a transposed copy vectorizes, a dot product does not
        let mut wt = vec![0.0; self.weights.len()];
        for o in 0..self.outputs {
            for i in 0..self.inputs {
                wt[i * self.outputs + o] = self.weights[o * self.inputs + i];
            }
        }
        out.clear();
        out.reserve(batch * self.outputs);
        for b in 0..batch {
            out.extend_from_slice(&self.biases);
            let x = &input[b * self.inputs..(b + 1) * self.inputs];
            let y = &mut out[b * self.outputs..(b + 1) * self.outputs];
            for (i, &xi) in x.iter().enumerate() {
                for (yo, w) in y.iter_mut().zip(&wt[i * self.outputs..(i + 1) * self.outputs]) {
                    *yo += w * xi;
                }
            }
            if relu {
                for yo in y.iter_mut() {
                    if *yo < 0.0 {
                        *yo = 0.0;
                    }
                }
            }
        }
    }
}

/// Layer outputs of one batched forward pass, kept for backpropagation.
#[derive(Clone, Debug)]
pub struct Activations {
    batch: usize,
    input: Vec<f64>,
    layers: Vec<Vec<f64>>,
}

impl Activations {
    pub fn batch(&self) -> usize {
        self.batch
    }

    /// Network output, row-major `batch x outputs`.
    pub fn output(&self) -> &[f64] {
        self.layers.last().expect("network has layers")
    }
}

/// Parameter gradients with the same shapes as the network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(net: &Mlp) -> Self {
        Gradients {
            weights: net.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            biases: net.layers.iter().map(|l| vec![0.0; l.biases.len()]).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().chain(&self.biases).flatten().all(|v| v.is_finite())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    layers: Vec<Dense>,
}

impl Mlp {
    /// `sizes = [input, hidden..., output]`.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "need at least input and output sizes");
        Mlp {
            layers: sizes.windows(2).map(|w| Dense::random(w[0], w[1], rng)).collect(),
        }
    }

    pub fn zeros(sizes: &[usize]) -> Self {
        assert!(sizes.len() >= 2, "need at least input and output sizes");
        Mlp {
            layers: sizes.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect(),
        }
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
        self.layers.last().expect("network has layers").outputs
    }

    pub fn forward(&self, input: &[f64]) -> Vec<f64> {
        self.forward_batch(input, 1).output().to_vec()
    }

    /// `inputs` is row-major `batch x input_dim`.
    pub fn forward_batch(&self, inputs: &[f64], batch: usize) -> Activations {
        assert_eq!(inputs.len(), batch * self.input_dim(), "input shape mismatch");
        let last = self.layers.len() - 1;
        let mut layers: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        for (l, layer) in self.layers.iter().enumerate() {
            let mut out = Vec::new();
            let x = if l == 0 { inputs } else { &layers[l - 1] };
            layer.forward_into(x, batch, &mut out, l != last);
            layers.push(out);
        }
        Activations {
            batch,
            input: inputs.to_vec(),
            layers,
        }
    }

    /// Gradients of a scalar loss given its gradient with respect to the
    /// network output (`batch x outputs`, row-major).
    pub fn backward(&self, acts: &Activations, d_output: &[f64]) -> Gradients {
        let batch = acts.batch;
        assert_eq!(
            d_output.len(),
            batch * self.output_dim(),
            "output gradient shape mismatch"
        );
        let mut grads = Gradients::zeros_like(self);
        let mut delta = d_output.to_vec();
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let x: &[f64] = if l == 0 { &acts.input } else { &acts.layers[l - 1] };
            let (gw, gb) = (&mut grads.weights[l], &mut grads.biases[l]);
            for b in 0..batch {
                let d = &delta[b * layer.outputs..(b + 1) * layer.outputs];
                let xb = &x[b * layer.inputs..(b + 1) * layer.inputs];
                for (o, &dv) in d.iter().enumerate() {
                    if dv == 0.0 {
                        continue;
                    }
                    gb[o] += dv;
                    for (g, xi) in gw[o * layer.inputs..(o + 1) * layer.inputs].iter_mut().zip(xb) {
                        *g += dv * xi;
                    }
                }
            }
            if l == 0 {
                break;
            }
            let mut prev = vec![0.0; batch * layer.inputs];
            for b in 0..batch {
                let d = &delta[b * layer.outputs..(b + 1) * layer.outputs];
                let p = &mut prev[b * layer.inputs..(b + 1) * layer.inputs];
                for (o, &dv) in d.iter().enumerate() {
                    if dv == 0.0 {
                        continue;
                    }
                    for (pi, wi) in p
                        .iter_mut()
                        .zip(&layer.weights[o * layer.inputs..(o + 1) * layer.inputs])
                    {
                        *pi += dv * wi;
                    }
                }
                // ReLU derivative from the stored post-activation
                for (pi, &a) in p.iter_mut().zip(&x[b * layer.inputs..(b + 1) * layer.inputs]) {
                    if a <= 0.0 {
                        *pi = 0.0;
                    }
                }
            }
            delta = prev;
        }
        grads
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.biases).all(|v| v.is_finite()))
    }
}

/// Adam with bias correction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    t: u64,
    m: Gradients,
    v: Gradients,
}

impl Adam {
    pub fn new(net: &Mlp, learning_rate: f64) -> Self {
        Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            t: 0,
            m: Gradients::zeros_like(net),
            v: Gradients::zeros_like(net),
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, net: &mut Mlp, grads: &Gradients) {
        self.t += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(self.t as i32);
        let c2 = 1.0 - b2.powi(self.t as i32);
        let lr = self.learning_rate;
        let eps = self.epsilon;
        let update = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
            for j in 0..p.len() {
                m[j] = b1 * m[j] + (1.0 - b1) * g[j];
                v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
                let mh = m[j] / c1;
                let vh = v[j] / c2;
                p[j] -= lr * mh / (vh.sqrt() + eps);
            }
        };
        for (l, layer) in net.layers.iter_mut().enumerate() {
            update(
                &mut layer.weights,
                &grads.weights[l],
                &mut self.m.weights[l],
                &mut self.v.weights[l],
            );
            update(
                &mut layer.biases,
                &grads.biases[l],
                &mut self.m.biases[l],
                &mut self.v.biases[l],
            );
        }
    }
}
