//! Mean-centered principal component projection, the reference method
//! the region features are compared against.
//!
//! Images have far more pixels than a training set has samples, so the
//! fit goes through the m x m Gram matrix of centered samples instead
//! of the full pixel-by-pixel scatter: an eigenvector u of the Gram
//! matrix lifts to the scatter eigenvector A*u with the same raw
//! eigenvalue, and `A*u / sqrt(raw)` has unit norm. Only the small
//! symmetric eigenproblem is ever solved.
//!
//! Results are made canonical so that fits are reproducible: components
//! are ordered by descending eigenvalue, and each component's sign is
//! fixed by making its largest-magnitude coordinate (lowest index on
//! ties) positive.

use std::fs;
use std::io::Read;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::projection::FeatureVector;

/// A fitted principal component projection.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenModel {
    mean: Vec<f64>,
    /// Scatter eigenvalues scaled by 1/(m-1): per-component sample
    /// variances of the training data. Descending.
    eigenvalues: Vec<f64>,
    /// Unit-norm components, one per row, aligned with `eigenvalues`.
    components: Vec<Vec<f64>>,
}

impl EigenModel {
    /// Input dimension (pixel count) the model was fitted on.
    pub fn dimension(&self) -> usize {
        self.mean.len()
    }

    /// Number of components kept.
    pub fn rank(&self) -> usize {
        self.components.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn components(&self) -> &[Vec<f64>] {
        &self.components
    }
}

/// Fraction of the largest raw eigenvalue below which a direction is
/// treated as numerical noise rather than structure.
const RANK_CUTOFF: f64 = 1e-10;

/// Fits the projection to vectorized training images, keeping at most
/// `max_components` components. The rank is further limited by what the
/// data supports: at most m - 1 directions survive centering, and
/// near-zero eigenvalues are dropped. Fewer samples than requested
/// components is therefore not an error, the model just comes out
/// smaller.
pub fn eigen_fit(samples: &[Vec<f64>], max_components: usize) -> Result<EigenModel> {
    let first = samples
        .first()
        .ok_or_else(|| Error::InvalidArgument("no training vectors".to_string()))?;
    let p = first.len();
    if p == 0 {
        return Err(Error::InvalidArgument(
            "training vectors must be non-empty".to_string(),
        ));
    }
    if let Some(bad) = samples.iter().find(|s| s.len() != p) {
        return Err(Error::DimensionMismatch {
            expected: p,
            found: bad.len(),
        });
    }
    let m = samples.len();

    let mut mean = vec![0.0; p];
    for s in samples {
        for (acc, x) in mean.iter_mut().zip(s) {
            *acc += x;
        }
    }
    for acc in &mut mean {
        *acc /= m as f64;
    }

    let centered: Vec<Vec<f64>> = samples
        .iter()
        .map(|s| s.iter().zip(&mean).map(|(x, mu)| x - mu).collect())
        .collect();

    // Gram matrix of the centered samples; each entry is an independent
    // dot product, so parallel rows stay deterministic. Only the upper
    // triangle is computed and it is mirrored exactly.
    let gram_upper: Vec<Vec<f64>> = (0..m)
        .into_par_iter()
        .map(|i| (i..m).map(|j| dot(&centered[i], &centered[j])).collect())
        .collect();
    let gram = DMatrix::from_fn(m, m, |i, j| {
        let (a, b) = if i <= j { (i, j) } else { (j, i) };
        gram_upper[a][b - a]
    });

    let eig = SymmetricEigen::new(gram);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let raw_max = eig.eigenvalues[order[0]].max(0.0);
    let rank_limit = max_components.min(m.saturating_sub(1)).min(p);

    let mut eigenvalues = Vec::new();
    let mut components = Vec::new();
    for &idx in order.iter().take(rank_limit) {
        let raw = eig.eigenvalues[idx];
        if !(raw > raw_max * RANK_CUTOFF) || raw <= 0.0 {
            break;
        }
        let u = eig.eigenvectors.column(idx);
        // Lift the Gram eigenvector into pixel space.
        let mut v = vec![0.0; p];
        for (i, c) in centered.iter().enumerate() {
            let w = u[i];
            for (acc, x) in v.iter_mut().zip(c) {
                *acc += w * x;
            }
        }
        let scale = 1.0 / raw.sqrt();
        for x in &mut v {
            *x *= scale;
        }
        // The lift is unit-norm in exact arithmetic; renormalize to
        // absorb rounding.
        let norm = dot(&v, &v).sqrt();
        if norm > 0.0 {
            for x in &mut v {
                *x /= norm;
            }
        }
        canonical_sign(&mut v);

        eigenvalues.push(raw / (m - 1) as f64);
        components.push(v);
    }

    Ok(EigenModel {
        mean,
        eigenvalues,
        components,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Flips a component, if needed, so its largest-magnitude coordinate
/// (lowest index on ties) is positive.
fn canonical_sign(v: &mut [f64]) {
    let mut lead = 0usize;
    let mut best = -1.0;
    for (i, &x) in v.iter().enumerate() {
        if x.abs() > best {
            best = x.abs();
            lead = i;
        }
    }
    if v[lead] < 0.0 {
        for x in v.iter_mut() {
            *x = -*x;
        }
    }
}

/// Projects a vectorized image onto the model's components.
pub fn eigen_project(model: &EigenModel, x: &[f64]) -> Result<FeatureVector> {
    if x.len() != model.dimension() {
        return Err(Error::DimensionMismatch {
            expected: model.dimension(),
            found: x.len(),
        });
    }
    let centered: Vec<f64> = x.iter().zip(&model.mean).map(|(a, mu)| a - mu).collect();
    Ok(model.components.iter().map(|c| dot(c, &centered)).collect())
}

/// Writes a model as little-endian binary: `dimension` and `rank` as
/// u64, then the mean, the eigenvalues, and the components row by row
/// as f64.
pub fn save_eigen_model(model: &EigenModel, path: &Path) -> Result<()> {
    let p = model.dimension();
    let r = model.rank();
    let mut bytes = Vec::with_capacity(16 + 8 * (p + r + r * p));
    bytes.extend_from_slice(&(p as u64).to_le_bytes());
    bytes.extend_from_slice(&(r as u64).to_le_bytes());
    for &x in &model.mean {
        bytes.extend_from_slice(&x.to_le_bytes());
    }
    for &x in &model.eigenvalues {
        bytes.extend_from_slice(&x.to_le_bytes());
    }
    for row in &model.components {
        for &x in row {
            bytes.extend_from_slice(&x.to_le_bytes());
        }
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Reads a model written by [`save_eigen_model`], checking the exact
/// byte length implied by the header.
pub fn load_eigen_model(path: &Path) -> Result<EigenModel> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let bad = |reason: String| Error::ModelFormat {
        path: path.to_path_buf(),
        reason,
    };

    if bytes.len() < 16 {
        return Err(bad("file shorter than its header".to_string()));
    }
    let p = u64::from_le_bytes(bytes[0..8].try_into().unwrap()) as usize;
    let r = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let expected = 16 + 8 * (p + r + r * p);
    if bytes.len() != expected {
        return Err(bad(format!(
            "expected {expected} bytes for dimension {p} rank {r}, found {}",
            bytes.len()
        )));
    }
    if p == 0 {
        return Err(bad("dimension must be at least 1".to_string()));
    }

    let mut cursor = 16usize;
    let mut take = |count: usize| {
        let out: Vec<f64> = bytes[cursor..cursor + 8 * count]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        cursor += 8 * count;
        out
    };
    let mean = take(p);
    let eigenvalues = take(r);
    let components: Vec<Vec<f64>> = (0..r).map(|_| take(p)).collect();

    if let Some(bad_val) = mean
        .iter()
        .chain(&eigenvalues)
        .chain(components.iter().flatten())
        .find(|v| !v.is_finite())
    {
        return Err(bad(format!("non-finite value {bad_val}")));
    }

    Ok(EigenModel {
        mean,
        eigenvalues,
        components,
    })
}
