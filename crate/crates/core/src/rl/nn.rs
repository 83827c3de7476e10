//! Small dense networks with manual backpropagation, and the Adam optimizer.

use crate::error::{Error, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the output value.
    fn slope(self, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Identity => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Identity => "identity",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            "identity" | "linear" => Ok(Activation::Identity),
            other => Err(Error::Validation(format!("unknown activation `{other}`"))),
        }
    }
}

/// Fully connected network; parameters are stored flat, layer by layer, as the row-major
/// weight matrix (`out × in`) followed by the bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub sizes: Vec<usize>,
    pub activations: Vec<Activation>,
    pub params: Vec<f64>,
}

impl Mlp {
    pub fn zeros(sizes: &[usize], activations: &[Activation]) -> Result<Self> {
        if sizes.len() < 2 || activations.len() != sizes.len() - 1 || sizes.contains(&0) {
            return Err(Error::Structural("network needs one activation per layer and non-zero widths".into()));
        }
        let count = sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        Ok(Mlp { sizes: sizes.to_vec(), activations: activations.to_vec(), params: vec![0.0; count] })
    }

    /// Fan-in uniform initialization; the last layer starts small (±`last_scale`).
    pub fn new(sizes: &[usize], activations: &[Activation], last_scale: f64, rng: &mut impl Rng) -> Result<Self> {
        let mut net = Self::zeros(sizes, activations)?;
        let layers = sizes.len() - 1;
        let mut off = 0;
        for l in 0..layers {
            let (i, o) = (sizes[l], sizes[l + 1]);
            let bound = if l + 1 == layers { last_scale } else { 1.0 / (i as f64).sqrt() };
            for p in &mut net.params[off..off + i * o + o] {
                *p = rng.random_range(-bound..=bound);
            }
            off += i * o + o;
        }
        Ok(net)
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().expect("at least two layers")
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// Layer outputs, starting with the input itself.
    pub fn forward_trace(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut outs = Vec::with_capacity(self.sizes.len());
        outs.push(x.to_vec());
        let mut off = 0;
        for (l, act) in self.activations.iter().enumerate() {
            let (ni, no) = (self.sizes[l], self.sizes[l + 1]);
            let w = &self.params[off..off + ni * no];
            let b = &self.params[off + ni * no..off + ni * no + no];
            let input = &outs[l];
            let y: Vec<f64> = (0..no)
                .map(|o| {
                    let row = &w[o * ni..(o + 1) * ni];
                    act.apply(row.iter().zip(input).map(|(a, x)| a * x).sum::<f64>() + b[o])
                })
                .collect();
            outs.push(y);
            off += ni * no + no;
        }
        outs
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.forward_trace(x).pop().expect("output layer")
    }

    /// Accumulates `∂L/∂θ` into `grad` given `∂L/∂output`, and returns `∂L/∂input`.
    pub fn backward(&self, trace: &[Vec<f64>], grad_out: &[f64], grad: &mut [f64]) -> Vec<f64> {
        let layers = self.activations.len();
        let mut offsets = Vec::with_capacity(layers);
        let mut off = 0;
        for l in 0..layers {
            offsets.push(off);
            off += self.sizes[l] * self.sizes[l + 1] + self.sizes[l + 1];
        }
        let mut g = grad_out.to_vec();
        for l in (0..layers).rev() {
            let (ni, no) = (self.sizes[l], self.sizes[l + 1]);
            let off = offsets[l];
            let y = &trace[l + 1];
            let x = &trace[l];
            let dz: Vec<f64> = (0..no).map(|o| g[o] * self.activations[l].slope(y[o])).collect();
            let mut gx = vec![0.0; ni];
            for o in 0..no {
                let d = dz[o];
                if d == 0.0 {
                    continue;
                }
                let row = off + o * ni;
                for i in 0..ni {
                    grad[row + i] += d * x[i];
                    gx[i] += self.params[row + i] * d;
                }
                grad[off + ni * no + o] += d;
            }
            g = gx;
        }
        g
    }
}

/// `target ← δ·online + (1 − δ)·target`
pub fn soft_update(target: &mut Mlp, online: &Mlp, delta: f64) -> Result<()> {
    if target.sizes != online.sizes {
        return Err(Error::Structural("soft update between networks of different shapes".into()));
    }
    for (t, o) in target.params.iter_mut().zip(&online.params) {
        *t = delta * o + (1.0 - delta) * *t;
    }
    Ok(())
}

/// `y = r + γ q'`, with `q' = 0` on terminal transitions.
pub fn critic_target(reward: f64, gamma: f64, q_next: f64, terminal: bool) -> f64 {
    if terminal {
        reward
    } else {
        reward + gamma * q_next
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(lr: f64, n: usize) -> Self {
        Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    /// Descends along `grad`.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let b1t = 1.0 - self.beta1.powi(self.t as i32);
        let b2t = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let mh = self.m[i] / b1t;
            let vh = self.v[i] / b2t;
            params[i] -= self.lr * mh / (vh.sqrt() + self.eps);
        }
    }
}
