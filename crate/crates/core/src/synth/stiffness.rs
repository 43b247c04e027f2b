//! Hooke stiffness from force/indentation pairs via zero-intercept RANSAC.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Result, Sequence, SynthError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RansacConfig {
    /// Hypotheses tried; when there are at most this many samples every
    /// sample is tried once instead.
    pub iterations: usize,
    /// Absolute force residual for an inlier, N.
    pub inlier_tol: f64,
    pub seed: u64,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self { iterations: 200, inlier_tol: 0.1, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StiffnessFit {
    /// N/m.
    pub k: f64,
    pub inliers: usize,
    pub total: usize,
}

/// Fits `F = k x` maximizing the inlier count (ties broken by the smaller
/// inlier residual), then refits by least squares on the inliers.
pub fn estimate_stiffness(x: &[f64], f: &[f64], cfg: &RansacConfig) -> Result<StiffnessFit> {
    if x.len() != f.len() {
        return Err(SynthError::Invalid(format!("{} displacements vs {} forces", x.len(), f.len())));
    }
    if x.len() < 2 {
        return Err(SynthError::Invalid("stiffness fit needs at least two samples".into()));
    }
    if x.iter().chain(f).any(|v| !v.is_finite()) {
        return Err(SynthError::Invalid("non-finite sample".into()));
    }
    if !(cfg.inlier_tol > 0.0) {
        return Err(SynthError::Invalid(format!("inlier tolerance {}", cfg.inlier_tol)));
    }
    let usable: Vec<usize> = (0..x.len()).filter(|&i| x[i].abs() > 1e-12).collect();
    if usable.is_empty() {
        return Err(SynthError::Degenerate("all displacements are zero".into()));
    }
    let candidates: Vec<usize> = if usable.len() <= cfg.iterations {
        usable
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        (0..cfg.iterations).map(|_| usable[rng.gen_range(0..usable.len())]).collect()
    };
    let score = |k: f64| {
        let mut count = 0;
        let mut sse = 0.0;
        for i in 0..x.len() {
            let r = f[i] - k * x[i];
            if r.abs() <= cfg.inlier_tol {
                count += 1;
                sse += r * r;
            }
        }
        (count, sse)
    };
    let mut best: Option<(f64, usize, f64)> = None;
    for &i in &candidates {
        let k = f[i] / x[i];
        let (count, sse) = score(k);
        if best.map_or(true, |(_, c, s)| count > c || (count == c && sse < s)) {
            best = Some((k, count, sse));
        }
    }
    let (k0, count, _) = best.expect("at least one candidate");
    if count < 2 {
        return Err(SynthError::Degenerate("no two samples agree on a slope".into()));
    }
    let (mut sxf, mut sxx) = (0.0, 0.0);
    for i in 0..x.len() {
        if (f[i] - k0 * x[i]).abs() <= cfg.inlier_tol {
            sxf += x[i] * f[i];
            sxx += x[i] * x[i];
        }
    }
    let k = sxf / sxx;
    if !(k > 0.0 && k.is_finite()) {
        return Err(SynthError::Degenerate(format!("fitted stiffness {k}")));
    }
    Ok(StiffnessFit { k, inliers: count, total: x.len() })
}

/// `(indentation, force)` pairs from the robot log: indentation is how far
/// the tip sits inside the undeformed contact point along the force axis.
pub fn stiffness_samples(seq: &Sequence, min_force: f64) -> (Vec<f64>, Vec<f64>) {
    seq.robot_stream
        .iter()
        .filter_map(|r| {
            let f = r.force.norm();
            (f > min_force).then(|| ((r.contact - r.position).dot(&(r.force / f)), f))
        })
        .unzip()
}
