use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::seeding;

/// Shape of the per-candidate scoring function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Architecture {
    /// `logit = θ · f`.
    Linear { features: usize },
    /// `logit = v · tanh(W f + b)`.
    Mlp { features: usize, hidden: usize },
}

impl Architecture {
    pub fn features(&self) -> usize {
        match *self {
            Architecture::Linear { features } | Architecture::Mlp { features, .. } => features,
        }
    }

    pub fn n_params(&self) -> usize {
        match *self {
            Architecture::Linear { features } => features,
            Architecture::Mlp { features, hidden } => hidden * features + 2 * hidden,
        }
    }

    pub fn layers(&self) -> usize {
        match self {
            Architecture::Linear { .. } => 1,
            Architecture::Mlp { .. } => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ParamsError {
    #[error("architecture needs {expected} parameters, got {got}")]
    Length { expected: usize, got: usize },
    #[error("parameter {0} is not finite")]
    NotFinite(usize),
}

/// Flat parameter vector plus the architecture it belongs to.
///
/// MLP layout: `W` row-major (`hidden × features`), then `b`, then `v`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    pub arch: Architecture,
    pub theta: Vec<f64>,
}

impl PolicyParams {
    pub fn new(arch: Architecture, theta: Vec<f64>) -> Result<Self, ParamsError> {
        let p = Self { arch, theta };
        p.validate()?;
        Ok(p)
    }

    pub fn zeros(arch: Architecture) -> Self {
        Self { arch, theta: vec![0.0; arch.n_params()] }
    }

    /// Linear: zeros. MLP: `W ~ U(±1/√features)`, `b = 0`, `v ~ U(±0.1)`.
    pub fn init(arch: Architecture, seed: u64) -> Self {
        let mut p = Self::zeros(arch);
        if let Architecture::Mlp { features, hidden } = arch {
            let mut rng = seeding::rng(seed);
            let s = 1.0 / (features as f64).sqrt();
            for w in &mut p.theta[..hidden * features] {
                *w = rng.random_range(-s..s);
            }
            for v in &mut p.theta[hidden * features + hidden..] {
                *v = rng.random_range(-0.1..0.1);
            }
        }
        p
    }

    pub fn validate(&self) -> Result<(), ParamsError> {
        let expected = self.arch.n_params();
        if self.theta.len() != expected {
            return Err(ParamsError::Length { expected, got: self.theta.len() });
        }
        match self.theta.iter().position(|t| !t.is_finite()) {
            Some(i) => Err(ParamsError::NotFinite(i)),
            None => Ok(()),
        }
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    /// `self + scale * dir`.
    pub fn stepped(&self, dir: &[f64], scale: f64) -> PolicyParams {
        let theta = self.theta.iter().zip(dir).map(|(t, d)| t + scale * d).collect();
        PolicyParams { arch: self.arch, theta }
    }

    pub fn logit(&self, f: &[f64]) -> f64 {
        match self.arch {
            Architecture::Linear { .. } => dot(&self.theta, f),
            Architecture::Mlp { features, hidden } => {
                let (w, rest) = self.theta.split_at(hidden * features);
                let (b, v) = rest.split_at(hidden);
                (0..hidden)
                    .map(|j| v[j] * (dot(&w[j * features..(j + 1) * features], f) + b[j]).tanh())
                    .sum()
            }
        }
    }

    pub fn logits<F: AsRef<[f64]>>(&self, feats: &[F]) -> Vec<f64> {
        feats.iter().map(|f| self.logit(f.as_ref())).collect()
    }

    /// Adds `scale * ∂logit(f)/∂θ` into `out`.
    fn add_logit_grad(&self, f: &[f64], scale: f64, out: &mut [f64]) {
        match self.arch {
            Architecture::Linear { .. } => {
                for (o, x) in out.iter_mut().zip(f) {
                    *o += scale * x;
                }
            }
            Architecture::Mlp { features, hidden } => {
                let (w, rest) = self.theta.split_at(hidden * features);
                let (b, v) = rest.split_at(hidden);
                let (gw, grest) = out.split_at_mut(hidden * features);
                let (gb, gv) = grest.split_at_mut(hidden);
                for j in 0..hidden {
                    let a = (dot(&w[j * features..(j + 1) * features], f) + b[j]).tanh();
                    gv[j] += scale * a;
                    let back = scale * v[j] * (1.0 - a * a);
                    gb[j] += back;
                    for (g, x) in gw[j * features..(j + 1) * features].iter_mut().zip(f) {
                        *g += back * x;
                    }
                }
            }
        }
    }

    /// Softmax over the candidates' logits.
    pub fn probs<F: AsRef<[f64]>>(&self, feats: &[F]) -> Vec<f64> {
        softmax(&self.logits(feats))
    }

    /// `∇θ log softmax(logits)[chosen]`.
    pub fn log_prob_grad<F: AsRef<[f64]>>(&self, feats: &[F], chosen: usize) -> Vec<f64> {
        let mut g = vec![0.0; self.theta.len()];
        self.add_log_prob_grad(feats, chosen, 1.0, &mut g);
        g
    }

    /// Adds `scale * ∇θ log softmax(logits)[chosen]` into `out`.
    pub fn add_log_prob_grad<F: AsRef<[f64]>>(
        &self,
        feats: &[F],
        chosen: usize,
        scale: f64,
        out: &mut [f64],
    ) {
        if feats.len() < 2 || scale == 0.0 {
            return;
        }
        let p = self.probs(feats);
        for (i, f) in feats.iter().enumerate() {
            let coef = if i == chosen { 1.0 - p[i] } else { -p[i] };
            self.add_logit_grad(f.as_ref(), scale * coef, out);
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Max-shifted softmax; entries are strictly positive for finite logits.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|x| x / z).collect()
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|l| (l - m).exp()).sum::<f64>().ln();
    logits.iter().map(|l| l - lse).collect()
}

/// First index of the largest value.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}
