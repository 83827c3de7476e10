use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseKind {
    /// `x ← x + θ(μ − x) + σ·N(0, 1)`
    OrnsteinUhlenbeck { theta: f64, sigma: f64 },
    Gaussian { sigma: f64 },
}

impl Default for NoiseKind {
    fn default() -> Self {
        NoiseKind::OrnsteinUhlenbeck { theta: 0.15, sigma: 0.3 }
    }
}

/// Exploration noise in the squashed action space; `scale` multiplies σ (used for decay).
#[derive(Debug, Clone)]
pub struct ExplorationNoise {
    kind: NoiseKind,
    state: Vec<f64>,
}

impl ExplorationNoise {
    pub fn new(kind: NoiseKind, dim: usize) -> Self {
        ExplorationNoise { kind, state: vec![0.0; dim] }
    }

    pub fn reset(&mut self) {
        self.state.iter_mut().for_each(|x| *x = 0.0);
    }

    pub fn sample(&mut self, scale: f64, rng: &mut impl Rng) -> Vec<f64> {
        match self.kind {
            NoiseKind::OrnsteinUhlenbeck { theta, sigma } => {
                for x in &mut self.state {
                    let z: f64 = StandardNormal.sample(rng);
                    *x += -theta * *x + sigma * scale * z;
                }
                self.state.clone()
            }
            NoiseKind::Gaussian { sigma } => self
                .state
                .iter()
                .map(|_| {
                    let z: f64 = StandardNormal.sample(rng);
                    sigma * scale * z
                })
                .collect(),
        }
    }
}
