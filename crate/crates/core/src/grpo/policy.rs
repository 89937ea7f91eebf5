//! The factorized toy policy: a perspective head conditioned on the
//! instruction context and a cell head conditioned on the chosen
//! perspective's features.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::GrpoError;

pub const N_PERSPECTIVES: usize = 4;

/// Linear-softmax policy: `pi(o) = pi(perspective | ctx) * pi(cell |
/// perspective, features)`.
///
/// Context and feature vectors are per-cell match masks, so `context_dim`
/// equals `n_cells`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyPolicy {
    /// [context_dim][4] logit weights for the perspective head.
    pub theta_persp: Vec<Vec<f64>>,
    /// [4][feature_dim][n_cells] logit weights for the cell head.
    pub theta_cell: Vec<Vec<Vec<f64>>>,
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

impl ToyPolicy {
    /// Zero-initialized (uniform) policy over a `n_cells`-cell environment.
    pub fn uniform(n_cells: usize) -> Self {
        ToyPolicy {
            theta_persp: vec![vec![0.0; N_PERSPECTIVES]; n_cells],
            theta_cell: vec![vec![vec![0.0; n_cells]; n_cells]; N_PERSPECTIVES],
        }
    }

    pub fn context_dim(&self) -> usize {
        self.theta_persp.len()
    }

    pub fn n_cells(&self) -> usize {
        self.theta_cell[0][0].len()
    }

    pub fn perspective_probs(&self, ctx: &[f64]) -> Vec<f64> {
        let mut logits = vec![0.0; N_PERSPECTIVES];
        for (d, row) in self.theta_persp.iter().enumerate() {
            for (k, w) in row.iter().enumerate() {
                logits[k] += ctx[d] * w;
            }
        }
        softmax(&logits)
    }

    pub fn cell_probs(&self, perspective: usize, features: &[f64]) -> Vec<f64> {
        let weights = &self.theta_cell[perspective];
        let mut logits = vec![0.0; self.n_cells()];
        for (d, row) in weights.iter().enumerate() {
            if features[d] == 0.0 {
                continue;
            }
            for (c, w) in row.iter().enumerate() {
                logits[c] += features[d] * w;
            }
        }
        softmax(&logits)
    }

    /// Log-probability of a (perspective, cell) pair under the factorization.
    pub fn logprob(&self, ctx: &[f64], features: &[f64], perspective: usize, cell: usize) -> f64 {
        self.perspective_probs(ctx)[perspective].ln() + self.cell_probs(perspective, features)[cell].ln()
    }

    /// Samples a perspective, then a cell given that perspective's features.
    /// `features_of` maps perspective index to its feature vector.
    pub fn sample<'a>(
        &self,
        ctx: &[f64],
        features_of: impl Fn(usize) -> &'a [f64],
        rng: &mut impl Rng,
    ) -> (usize, usize) {
        let perspective = sample_categorical(&self.perspective_probs(ctx), rng);
        let cell = sample_categorical(&self.cell_probs(perspective, features_of(perspective)), rng);
        (perspective, cell)
    }

    /// Shannon entropy (nats) of the perspective head for a context.
    pub fn perspective_entropy(&self, ctx: &[f64]) -> f64 {
        self.perspective_probs(ctx)
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|&p| -p * p.ln())
            .sum()
    }

    pub fn is_finite(&self) -> bool {
        self.theta_persp.iter().flatten().all(|w| w.is_finite())
            && self.theta_cell.iter().flatten().flatten().all(|w| w.is_finite())
    }

    /// Flat JSON tensor dump with a metadata block.
    pub fn save_checkpoint(&self, path: &Path) -> Result<(), GrpoError> {
        let doc = serde_json::json!({
            "theta_persp": self.theta_persp,
            "theta_cell": self.theta_cell,
            "meta": {
                "context_dim": self.context_dim(),
                "n_cells": self.n_cells(),
                "n_perspectives": N_PERSPECTIVES,
            },
        });
        std::fs::write(path, serde_json::to_string_pretty(&doc).unwrap())
            .map_err(|e| GrpoError::ConfigError(format!("checkpoint write: {e}")))
    }

    pub fn load_checkpoint(path: &Path) -> Result<Self, GrpoError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| GrpoError::ConfigError(format!("checkpoint read: {e}")))?;
        let doc: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| GrpoError::ConfigError(format!("checkpoint parse: {e}")))?;
        let policy = ToyPolicy {
            theta_persp: serde_json::from_value(doc["theta_persp"].clone())
                .map_err(|e| GrpoError::ConfigError(format!("theta_persp: {e}")))?,
            theta_cell: serde_json::from_value(doc["theta_cell"].clone())
                .map_err(|e| GrpoError::ConfigError(format!("theta_cell: {e}")))?,
        };
        if !policy.is_finite() {
            return Err(GrpoError::ConfigError("checkpoint holds non-finite weights".into()));
        }
        Ok(policy)
    }
}

pub(super) fn sample_categorical(probs: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}
