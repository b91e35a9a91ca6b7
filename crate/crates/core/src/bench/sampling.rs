//! Dataset generation from registry rows, noise injection, and summary
//! metrics.

use rand::Rng;
use thiserror::Error;

use crate::bench::registry::{Benchmark, RegistryError, SampleKind};
use crate::expr::evaluate;

#[derive(Clone, Debug)]
pub struct Dataset {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
    /// Benchmark name, seed, and noise level that produced this data.
    pub provenance: String,
}

#[derive(Debug, Error)]
pub enum SampleError {
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error("{0}: grid point outside the target's domain")]
    GridDomain(String),
    #[error("{0}: could not sample a valid point in {1} tries")]
    Exhausted(String, usize),
}

const MAX_TRIES: usize = 1000;

/// Samples a dataset for a registry row. `U` draws each variable uniformly
/// and resamples any point the target cannot evaluate; `E` lays an
/// inclusive evenly spaced grid per variable and fails on domain
/// violations.
pub fn sample_dataset<R: Rng>(bench: &Benchmark, rng: &mut R) -> Result<Dataset, SampleError> {
    let target = bench.target()?;
    let m = bench.n_vars()?;
    let s = &bench.sampling;
    let mut x = Vec::with_capacity(s.count);
    let mut y = Vec::with_capacity(s.count);
    match s.kind {
        SampleKind::U => {
            for _ in 0..s.count {
                let mut ok = false;
                for _ in 0..MAX_TRIES {
                    let point: Vec<f64> =
                        (0..m).map(|_| rng.gen_range(s.low..=s.high)).collect();
                    if let Ok(Some(v)) = evaluate(&target, std::slice::from_ref(&point), &[]) {
                        x.push(point);
                        y.push(v[0]);
                        ok = true;
                        break;
                    }
                }
                if !ok {
                    return Err(SampleError::Exhausted(bench.name.clone(), MAX_TRIES));
                }
            }
        }
        SampleKind::E => {
            let step = (s.high - s.low) / (s.count - 1) as f64;
            for i in 0..s.count {
                let v = if i + 1 == s.count { s.high } else { s.low + step * i as f64 };
                let point = vec![v; m];
                match evaluate(&target, std::slice::from_ref(&point), &[]) {
                    Ok(Some(out)) => {
                        x.push(point);
                        y.push(out[0]);
                    }
                    _ => return Err(SampleError::GridDomain(bench.name.clone())),
                }
            }
        }
    }
    Ok(Dataset { x, y, provenance: bench.name.clone() })
}

/// Adds uniform noise `u ~ [-level*scale, level*scale]` per point, where
/// `scale = max(y) - min(y)`.
pub fn add_noise<R: Rng>(y: &[f64], level: f64, rng: &mut R) -> Vec<f64> {
    assert!(level >= 0.0);
    let max = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = y.iter().cloned().fold(f64::INFINITY, f64::min);
    let scale = max - min;
    if level == 0.0 || scale == 0.0 {
        return y.to_vec();
    }
    let a = level * scale;
    y.iter().map(|&v| v + rng.gen_range(-a..=a)).collect()
}

/// Fraction of recovered runs.
pub fn recovery_rate(results: &[bool]) -> f64 {
    assert!(!results.is_empty());
    results.iter().filter(|&&b| b).count() as f64 / results.len() as f64
}

/// `1 - SS_res / SS_tot`; `None` when the target variance is zero.
pub fn r_squared(y: &[f64], y_hat: &[f64]) -> Option<f64> {
    assert!(y.len() >= 2 && y.len() == y_hat.len());
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let ss_tot: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return None;
    }
    let ss_res: f64 = y.iter().zip(y_hat).map(|(a, b)| (a - b).powi(2)).sum();
    Some(1.0 - ss_res / ss_tot)
}
