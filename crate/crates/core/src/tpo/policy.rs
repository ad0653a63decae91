use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::tokenizer::{Token, TrajTokenizer};
use crate::synthetic::{TaskContext, CURVATURE_RANGE, SPEED_RANGE};

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("policy has {found} weights, expected {expected}")]
    Shape { expected: usize, found: usize },
    #[error("non-finite weight at index {0}")]
    NonFinite(usize),
    #[error("bad featurizer: {0}")]
    Featurizer(String),
    #[error("bad tokenizer: {0}")]
    Tokenizer(String),
    #[error("cannot access {path}: {message}")]
    Io { path: String, message: String },
}

/// Maps a task context to the feature vector the logits are linear in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Featurizer {
    /// Indicator of the context id; ids at or beyond `n_contexts` map to
    /// the zero vector. Gives a per-context logit table.
    OneHot { n_contexts: usize },
    /// A bias plus Gaussian bumps on a `grid` x `grid` lattice over the
    /// normalized (speed, curvature) square.
    Rbf {
        grid: usize,
        width: f64,
        speed_range: [f64; 2],
        curvature_range: [f64; 2],
    },
    /// `rbf` features followed by a per-context indicator of height
    /// `table_scale`.
    Hybrid {
        rbf: Box<Featurizer>,
        n_contexts: usize,
        table_scale: f64,
    },
}

impl Featurizer {
    pub fn rbf(grid: usize, width: f64) -> Self {
        Featurizer::Rbf {
            grid,
            width,
            speed_range: SPEED_RANGE,
            curvature_range: CURVATURE_RANGE,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Featurizer::OneHot { n_contexts } => *n_contexts,
            Featurizer::Rbf { grid, .. } => 1 + grid * grid,
            Featurizer::Hybrid { rbf, n_contexts, .. } => rbf.dim() + n_contexts,
        }
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        let ok = match self {
            Featurizer::OneHot { n_contexts } => *n_contexts > 0,
            Featurizer::Rbf {
                grid,
                width,
                speed_range,
                curvature_range,
            } => *grid >= 2 && *width > 0.0 && speed_range[1] > speed_range[0] && curvature_range[1] > curvature_range[0],
            Featurizer::Hybrid {
                rbf,
                n_contexts,
                table_scale,
            } => {
                matches!(**rbf, Featurizer::Rbf { .. })
                    && rbf.validate().is_ok()
                    && *n_contexts > 0
                    && table_scale.is_finite()
                    && *table_scale > 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(PolicyError::Featurizer(format!("{self:?}")))
        }
    }

    pub fn features(&self, ctx: &TaskContext) -> Vec<f64> {
        match self {
            Featurizer::OneHot { n_contexts } => {
                let mut phi = vec![0.0; *n_contexts];
                if let Some(slot) = phi.get_mut(ctx.id as usize) {
                    *slot = 1.0;
                }
                phi
            }
            Featurizer::Rbf {
                grid,
                width,
                speed_range,
                curvature_range,
            } => {
                let s = (ctx.speed - speed_range[0]) / (speed_range[1] - speed_range[0]);
                let c = (ctx.curvature - curvature_range[0]) / (curvature_range[1] - curvature_range[0]);
                let step = 1.0 / (*grid - 1) as f64;
                let mut phi = Vec::with_capacity(self.dim());
                phi.push(1.0);
                for i in 0..*grid {
                    for j in 0..*grid {
                        let d2 = (s - i as f64 * step).powi(2) + (c - j as f64 * step).powi(2);
                        phi.push((-d2 / (2.0 * width * width)).exp());
                    }
                }
                phi
            }
            Featurizer::Hybrid {
                rbf,
                n_contexts,
                table_scale,
            } => {
                let mut phi = rbf.features(ctx);
                let base = phi.len();
                phi.resize(base + n_contexts, 0.0);
                if (ctx.id as usize) < *n_contexts {
                    phi[base + ctx.id as usize] = *table_scale;
                }
                phi
            }
        }
    }
}

/// Autoregressive token policy with logits linear in the context features.
///
/// At position `p` the logits are `A[p]^T phi(ctx)`, plus, when
/// `offset_window = W > 0` and `p >= 2`, an offset term: token `v` gains
/// `R[p][v - a + W]^T phi(ctx)` where `a` is the token at `p - 2` (the
/// previous waypoint on the same axis) and `|v - a| <= W`. With `W = 0` the
/// sequence distribution factorizes by position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyPolicy {
    pub tokenizer: TrajTokenizer,
    pub featurizer: Featurizer,
    pub n_positions: usize,
    #[serde(default)]
    pub offset_window: usize,
    /// `A` as `[position][feature][token]`, then `R` as
    /// `[position][feature][offset]`.
    pub weights: Vec<f64>,
}

impl ToyPolicy {
    /// All-zero weights: uniform over the vocabulary at every position.
    pub fn zeros(tokenizer: TrajTokenizer, featurizer: Featurizer, n_positions: usize) -> Self {
        Self::zeros_with_window(tokenizer, featurizer, n_positions, 0)
    }

    pub fn zeros_with_window(tokenizer: TrajTokenizer, featurizer: Featurizer, n_positions: usize, offset_window: usize) -> Self {
        let mut p = Self {
            tokenizer,
            featurizer,
            n_positions,
            offset_window,
            weights: Vec::new(),
        };
        p.weights = vec![0.0; p.n_params()];
        p
    }

    pub fn vocab(&self) -> usize {
        self.tokenizer.vocab_size()
    }

    pub fn dim(&self) -> usize {
        self.featurizer.dim()
    }

    pub fn n_offsets(&self) -> usize {
        if self.offset_window == 0 {
            0
        } else {
            2 * self.offset_window + 1
        }
    }

    pub fn n_params(&self) -> usize {
        self.n_positions * self.dim() * (self.vocab() + self.n_offsets())
    }

    pub fn index(&self, position: usize, feature: usize, token: usize) -> usize {
        (position * self.dim() + feature) * self.vocab() + token
    }

    pub fn offset_index(&self, position: usize, feature: usize, offset: usize) -> usize {
        self.n_positions * self.dim() * self.vocab() + (position * self.dim() + feature) * self.n_offsets() + offset
    }

    /// The token the offset term at `position` is relative to.
    pub fn anchor(&self, prefix: &[Token]) -> Option<Token> {
        let p = prefix.len();
        (self.offset_window > 0 && p >= 2).then(|| prefix[p - 2])
    }

    /// Token reached by offset slot `o` from `anchor`, if in the vocabulary.
    pub fn offset_target(&self, anchor: Token, o: usize) -> Option<usize> {
        let v = anchor as i64 + o as i64 - self.offset_window as i64;
        (0..self.vocab() as i64).contains(&v).then_some(v as usize)
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        self.featurizer.validate()?;
        self.tokenizer
            .validate()
            .map_err(|e| PolicyError::Tokenizer(e.to_string()))?;
        if self.weights.len() != self.n_params() {
            return Err(PolicyError::Shape {
                expected: self.n_params(),
                found: self.weights.len(),
            });
        }
        if let Some(i) = self.weights.iter().position(|w| !w.is_finite()) {
            return Err(PolicyError::NonFinite(i));
        }
        Ok(())
    }

    pub fn features(&self, ctx: &TaskContext) -> Vec<f64> {
        self.featurizer.features(ctx)
    }

    /// Context part of the logits at `position`.
    pub fn base_logits_into(&self, phi: &[f64], position: usize, out: &mut [f64]) {
        let v = self.vocab();
        out.fill(0.0);
        for (j, &f) in phi.iter().enumerate() {
            if f == 0.0 {
                continue;
            }
            let row = &self.weights[self.index(position, j, 0)..][..v];
            for (o, w) in out.iter_mut().zip(row) {
                *o += f * w;
            }
        }
    }

    /// Offset part of the logits at `position`, one entry per offset slot.
    pub fn offset_logits(&self, phi: &[f64], position: usize) -> Vec<f64> {
        let n = self.n_offsets();
        let mut out = vec![0.0; n];
        for (j, &f) in phi.iter().enumerate() {
            if f == 0.0 || n == 0 {
                continue;
            }
            let row = &self.weights[self.offset_index(position, j, 0)..][..n];
            for (o, w) in out.iter_mut().zip(row) {
                *o += f * w;
            }
        }
        out
    }

    /// Logits of the next token after `prefix`.
    pub fn logits_into(&self, phi: &[f64], prefix: &[Token], out: &mut [f64]) {
        let p = prefix.len();
        self.base_logits_into(phi, p, out);
        if let Some(a) = self.anchor(prefix) {
            add_offsets(self, a, &self.offset_logits(phi, p), out);
        }
    }

    pub fn logits(&self, phi: &[f64], prefix: &[Token]) -> Vec<f64> {
        let mut out = vec![0.0; self.vocab()];
        self.logits_into(phi, prefix, &mut out);
        out
    }

    /// Log-probabilities of the next token after `prefix`.
    pub fn next_log_probs(&self, phi: &[f64], prefix: &[Token]) -> Vec<f64> {
        let mut l = self.logits(phi, prefix);
        log_softmax_in_place(&mut l, 1.0);
        l
    }

    /// Conditional log-probability tables along `tokens`; entry `p` is the
    /// distribution at position `p` given `tokens[..p]`.
    pub fn sequence_log_probs(&self, phi: &[f64], tokens: &[Token]) -> Vec<Vec<f64>> {
        (0..tokens.len()).map(|p| self.next_log_probs(phi, &tokens[..p])).collect()
    }

    /// Sum of token log-probabilities of a response.
    pub fn sequence_logprob(&self, phi: &[f64], tokens: &[Token]) -> f64 {
        (0..tokens.len())
            .map(|p| self.next_log_probs(phi, &tokens[..p])[tokens[p] as usize])
            .sum()
    }

    /// Adds `coef * phi (x) dlogit` into `grad` for the logits at
    /// `prefix.len()`.
    pub fn accumulate_grad(&self, phi: &[f64], prefix: &[Token], dlogit: &[f64], coef: f64, grad: &mut [f64]) {
        let p = prefix.len();
        let v = self.vocab();
        let anchor = self.anchor(prefix);
        let dofs: Vec<f64> = match anchor {
            Some(a) => (0..self.n_offsets())
                .map(|o| self.offset_target(a, o).map_or(0.0, |t| dlogit[t]))
                .collect(),
            None => Vec::new(),
        };
        for (j, &f) in phi.iter().enumerate() {
            if f == 0.0 {
                continue;
            }
            let c = coef * f;
            let row = &mut grad[self.index(p, j, 0)..][..v];
            for (g, d) in row.iter_mut().zip(dlogit) {
                *g += c * d;
            }
            if !dofs.is_empty() {
                let at = self.offset_index(p, j, 0);
                for (g, d) in grad[at..at + dofs.len()].iter_mut().zip(&dofs) {
                    *g += c * d;
                }
            }
        }
    }

    /// Most likely token at each position given the decoded prefix, lowest
    /// id on ties.
    pub fn greedy(&self, phi: &[f64]) -> Vec<Token> {
        let mut tokens = Vec::with_capacity(self.n_positions);
        let mut logits = vec![0.0; self.vocab()];
        for _ in 0..self.n_positions {
            self.logits_into(phi, &tokens, &mut logits);
            tokens.push(argmax(&logits) as Token);
        }
        tokens
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), PolicyError> {
        let path = path.as_ref();
        let text = serde_json::to_string(self).expect("policy serializes");
        std::fs::write(path, text + "\n").map_err(|e| PolicyError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PolicyError> {
        let path = path.as_ref();
        let io = |message: String| PolicyError::Io {
            path: path.display().to_string(),
            message,
        };
        let text = std::fs::read_to_string(path).map_err(|e| io(e.to_string()))?;
        let policy: ToyPolicy = serde_json::from_str(&text).map_err(|e| io(e.to_string()))?;
        policy.validate()?;
        Ok(policy)
    }
}

/// Adds offset-slot logits `rel` around `anchor` into `out`.
pub fn add_offsets(policy: &ToyPolicy, anchor: Token, rel: &[f64], out: &mut [f64]) {
    for (o, r) in rel.iter().enumerate() {
        if let Some(t) = policy.offset_target(anchor, o) {
            out[t] += r;
        }
    }
}

/// First index of the maximum.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// `l <- log softmax(l / temperature)`.
pub fn log_softmax_in_place(l: &mut [f64], temperature: f64) {
    let max = l.iter().cloned().fold(f64::NEG_INFINITY, f64::max) / temperature;
    let mut sum = 0.0;
    for x in l.iter_mut() {
        *x = *x / temperature - max;
        sum += x.exp();
    }
    let lse = sum.ln();
    for x in l.iter_mut() {
        *x -= lse;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx(id: u64) -> TaskContext {
        TaskContext {
            id,
            speed: 7.0,
            curvature: 0.0,
        }
    }

    #[test]
    fn zero_policy_is_uniform() {
        let p = ToyPolicy::zeros(TrajTokenizer::default(), Featurizer::OneHot { n_contexts: 3 }, 12);
        let phi = p.features(&ctx(1));
        let lp = p.sequence_log_probs(&phi, &[7; 12]);
        assert!(lp.iter().flatten().all(|&x| (x + (323f64).ln()).abs() < 1e-12));
        assert_eq!(p.greedy(&phi), vec![0; 12]);
    }

    #[test]
    fn table_index_and_logits() {
        let mut p = ToyPolicy::zeros(TrajTokenizer::default(), Featurizer::OneHot { n_contexts: 3 }, 12);
        let i = p.index(4, 2, 100);
        p.weights[i] = 3.0;
        assert_eq!(p.logits(&p.features(&ctx(2)), &[0; 4])[100], 3.0);
        assert_eq!(p.logits(&p.features(&ctx(1)), &[0; 4])[100], 0.0);
        assert_eq!(p.greedy(&p.features(&ctx(2)))[4], 100);
    }

    #[test]
    fn offset_term_follows_anchor() {
        let mut p = ToyPolicy::zeros_with_window(TrajTokenizer::default(), Featurizer::OneHot { n_contexts: 1 }, 12, 3);
        assert_eq!(p.n_params(), 12 * (323 + 7));
        let i = p.offset_index(2, 0, 5);
        p.weights[i] = 4.0;
        let phi = [1.0];
        assert_eq!(p.logits(&phi, &[10, 70])[12], 4.0);
        assert_eq!(p.logits(&phi, &[0, 70])[2], 4.0);
        assert_eq!(p.logits(&phi, &[321, 70]).iter().sum::<f64>(), 0.0);
        assert!(p.logits(&phi, &[10]).iter().all(|&x| x == 0.0));
        let g = p.greedy(&phi);
        assert_eq!(g[2], g[0] + 2);
    }

    #[test]
    fn rbf_features() {
        let f = Featurizer::rbf(3, 0.5);
        let phi = f.features(&TaskContext {
            id: 0,
            speed: 2.0,
            curvature: -0.01,
        });
        assert_eq!(phi.len(), 10);
        assert_eq!(phi[0], 1.0);
        assert_eq!(phi[1], 1.0);
        assert!(phi[9] < phi[2]);
    }

    #[test]
    fn log_softmax_is_stable() {
        let mut l = vec![1000.0, 1000.0, -1000.0];
        log_softmax_in_place(&mut l, 1.0);
        assert!((l[0] + 2f64.ln()).abs() < 1e-12);
        assert!(l[2] < -1999.0 && l[2].is_finite());
    }
}
