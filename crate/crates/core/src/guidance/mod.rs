//! The trainable policy/value sequence model and its replay buffer.
//!
//! The model maps a partial traversal (the search state) to a masked
//! probability distribution over next tokens and a scalar success estimate
//! in `[0, 1]`. It is a small causal self-attention encoder written directly
//! against flat `f64` parameter vectors, with a hand-derived backward pass,
//! trained online by gradient descent on `(state, pi, z)` triples harvested
//! from completed search episodes.

mod model;
mod replay;

pub use model::{GradCheckReport, ModelConfig, PolicyValueModel, PolicyValueOutput, TrainStats};
pub use replay::{ReplayBuffer, ReplayEntry};

/// Mean policy entropy `-p^T log p` (natural log) over a set of outputs.
pub fn mean_entropy(ps: &[Vec<f64>]) -> f64 {
    assert!(!ps.is_empty());
    let total: f64 = ps.iter().map(|p| entropy(p)).sum();
    total / ps.len() as f64
}

pub(crate) fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&v| v > 0.0).map(|&v| v * v.ln()).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn entropy_examples() {
        let onehot = vec![0.0, 1.0, 0.0];
        assert_eq!(mean_entropy(&[onehot]), 0.0);
        let uniform = vec![1.0 / 12.0; 12];
        let e = mean_entropy(&[uniform]);
        assert!((e - (12f64).ln()).abs() < 1e-12);
    }
}
