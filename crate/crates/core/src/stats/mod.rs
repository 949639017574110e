//! Per-class eigen-statistics and the projection machinery built on them.
//!
//! A class is summarised by its sample mean `m`, the non-increasing
//! eigenvalues `λ` of its sample covariance, and the matching orthonormal
//! eigenvectors `V` (one per column). Latent vectors are expressed in that
//! basis as `b = Vᵀ(z − m)`, limited to `±3√λ`, and mapped back as `m + V b`.

mod bundle;
mod summation;

pub use bundle::{read_bundle, write_bundle, BUNDLE_MAGIC, BUNDLE_VERSION};
pub use summation::accurate_sum;

use std::cmp::Ordering;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::latent_io::{LatentStore, LatentVector};
use crate::scoring::AttributeClass;

/// Eigenpairs with `λ < RANK_EPSILON · λ_max` are dropped as numerical noise.
pub const RANK_EPSILON: f64 = 1e-10;
pub const ORTHONORMAL_TOLERANCE: f64 = 1e-8;
const EIGEN_MAX_ITERATIONS: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub struct ClassStats {
    class: AttributeClass,
    sample_count: u64,
    mean: Vec<f64>,
    eigenvalues: Vec<f64>,
    /// d × t, column-major; column `i` pairs with `eigenvalues[i]`.
    eigenvectors: DMatrix<f64>,
}

impl ClassStats {
    /// Assembles statistics from parts, checking shape, ordering and orthonormality.
    pub fn new(
        class: AttributeClass,
        sample_count: u64,
        mean: Vec<f64>,
        eigenvalues: Vec<f64>,
        eigenvectors: DMatrix<f64>,
    ) -> Result<Self> {
        let d = mean.len();
        if d == 0 {
            return Err(Error::InvalidDimension(0));
        }
        if eigenvectors.nrows() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: eigenvectors.nrows(),
            });
        }
        if eigenvectors.ncols() != eigenvalues.len() {
            return Err(Error::LengthMismatch {
                expected: eigenvectors.ncols(),
                got: eigenvalues.len(),
            });
        }
        if eigenvalues.len() > d {
            return Err(Error::invalid(format!(
                "{} eigenpairs exceed dimension {d}",
                eigenvalues.len()
            )));
        }
        if mean.iter().chain(&eigenvalues).chain(eigenvectors.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite class statistics".into()));
        }
        if eigenvalues.iter().any(|&l| l < 0.0) {
            return Err(Error::invalid("eigenvalues must be non-negative"));
        }
        if eigenvalues.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::invalid("eigenvalues must be sorted non-increasing"));
        }
        let err = orthonormality_error(&eigenvectors);
        if err > ORTHONORMAL_TOLERANCE {
            return Err(Error::Numeric(format!(
                "eigenvectors deviate from orthonormal by {err:e}"
            )));
        }
        Ok(ClassStats {
            class,
            sample_count,
            mean,
            eigenvalues,
            eigenvectors,
        })
    }

    pub fn class(&self) -> AttributeClass {
        self.class
    }

    pub fn sample_count(&self) -> u64 {
        self.sample_count
    }

    pub fn dimension(&self) -> usize {
        self.mean.len()
    }

    /// Number of retained eigenpairs, `t`.
    pub fn rank(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    fn check_dim(&self, got: usize) -> Result<()> {
        if got != self.dimension() {
            return Err(Error::DimensionMismatch {
                expected: self.dimension(),
                got,
            });
        }
        Ok(())
    }

    /// `Σ_i b_i v_i` over the leading `coeffs.len()` columns.
    pub(crate) fn combine_columns(&self, coeffs: &[f64]) -> Vec<f64> {
        debug_assert!(coeffs.len() <= self.rank());
        let d = self.dimension();
        let mut out = vec![0.0; d];
        for (i, &b) in coeffs.iter().enumerate() {
            let col = self.eigenvectors.column(i);
            for (o, &v) in out.iter_mut().zip(col.iter()) {
                *o += v * b;
            }
        }
        out
    }
}

/// `max |VᵀV − I|`.
pub fn orthonormality_error(v: &DMatrix<f64>) -> f64 {
    let gram = v.transpose() * v;
    let mut worst: f64 = 0.0;
    for i in 0..gram.nrows() {
        for j in 0..gram.ncols() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((gram[(i, j)] - target).abs());
        }
    }
    worst
}

/// Coefficients of a latent vector in a class eigenbasis.
#[derive(Debug, Clone, PartialEq)]
pub struct BVector {
    pub coefficients: Vec<f64>,
    pub clamped: bool,
}

impl BVector {
    pub fn len(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefficients.is_empty()
    }
}

/// Mean, covariance (divisor k − 1) and eigendecomposition of the selected records.
///
/// Samples are processed in a canonical (lexicographic) order, so the result
/// does not depend on the order of `ids` or of the store.
pub fn compute_class_stats(
    store: &LatentStore,
    ids: &[u64],
    class: AttributeClass,
) -> Result<ClassStats> {
    let mut samples = Vec::with_capacity(ids.len());
    for &id in ids {
        let v = store
            .get(id)
            .ok_or_else(|| Error::invalid(format!("id {id} is not in the store")))?;
        samples.push(v.as_slice());
    }
    fit_samples(&samples, class)
}

/// As [`compute_class_stats`], over raw sample vectors.
pub fn fit_samples(samples: &[&[f64]], class: AttributeClass) -> Result<ClassStats> {
    let k = samples.len();
    if k < 2 {
        return Err(Error::invalid(format!(
            "class {class} needs at least 2 samples, got {k}"
        )));
    }
    let d = samples[0].len();
    if let Some(bad) = samples.iter().find(|s| s.len() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: bad.len(),
        });
    }

    let mut ordered = samples.to_vec();
    ordered.sort_by(|a, b| lexicographic(a, b));

    let mut column = vec![0.0; k];
    let mean: Vec<f64> = (0..d)
        .map(|j| {
            for (slot, s) in column.iter_mut().zip(&ordered) {
                *slot = s[j];
            }
            accurate_sum(&column) / k as f64
        })
        .collect();

    let centered = DMatrix::from_fn(k, d, |i, j| ordered[i][j] - mean[j]);
    let mut cov = centered.transpose() * &centered;
    cov /= (k - 1) as f64;
    symmetrize(&mut cov);

    let (eigenvalues, eigenvectors) = sorted_eigenpairs(cov, k - 1)?;
    ClassStats::new(class, k as u64, mean, eigenvalues, eigenvectors)
}

fn lexicographic(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            Ordering::Equal => continue,
            o => return o,
        }
    }
    Ordering::Equal
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in i + 1..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

/// Descending eigenpairs of a symmetric matrix, rank-truncated and sign-normalised.
fn sorted_eigenpairs(cov: DMatrix<f64>, max_rank: usize) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let d = cov.nrows();
    let eig = SymmetricEigen::try_new(cov, f64::EPSILON, EIGEN_MAX_ITERATIONS)
        .ok_or_else(|| Error::Numeric("symmetric eigensolver did not converge".into()))?;

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .total_cmp(&eig.eigenvalues[a])
            .then(a.cmp(&b))
    });

    let lambda_max = order.first().map_or(0.0, |&i| eig.eigenvalues[i]);
    let keep: Vec<usize> = if lambda_max > 0.0 {
        order
            .into_iter()
            .take(max_rank)
            .take_while(|&i| eig.eigenvalues[i] >= RANK_EPSILON * lambda_max)
            .collect()
    } else {
        Vec::new()
    };

    let eigenvalues = keep.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(d, keep.len());
    for (c, &i) in keep.iter().enumerate() {
        let mut col = eig.eigenvectors.column(i).into_owned();
        if sign_of_largest(col.as_slice()) < 0.0 {
            col.neg_mut();
        }
        vectors.set_column(c, &col);
    }
    Ok((eigenvalues, vectors))
}

/// Sign of the largest-magnitude component; the lowest index wins ties.
fn sign_of_largest(v: &[f64]) -> f64 {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    v.get(best).map_or(1.0, |x| x.signum())
}

/// `b_i = v_i · (z − m)`.
pub fn project_b(stats: &ClassStats, z: &LatentVector) -> Result<BVector> {
    stats.check_dim(z.dim())?;
    let centered: Vec<f64> = z
        .as_slice()
        .iter()
        .zip(&stats.mean)
        .map(|(zi, mi)| zi - mi)
        .collect();
    let coefficients = stats
        .eigenvectors
        .column_iter()
        .map(|col| col.iter().zip(&centered).map(|(v, c)| v * c).sum())
        .collect();
    Ok(BVector {
        coefficients,
        clamped: false,
    })
}

/// Limits each `b_i` to `[−3√λ_i, +3√λ_i]`.
pub fn clamp_b(stats: &ClassStats, b: &BVector) -> Result<BVector> {
    if b.len() != stats.rank() {
        return Err(Error::LengthMismatch {
            expected: stats.rank(),
            got: b.len(),
        });
    }
    let coefficients = b
        .coefficients
        .iter()
        .zip(&stats.eigenvalues)
        .map(|(&bi, &l)| {
            let limit = 3.0 * l.sqrt();
            bi.max(-limit).min(limit)
        })
        .collect();
    Ok(BVector {
        coefficients,
        clamped: true,
    })
}

/// `m + V b`.
pub fn reconstruct(stats: &ClassStats, b: &BVector) -> Result<LatentVector> {
    if b.len() != stats.rank() {
        return Err(Error::LengthMismatch {
            expected: stats.rank(),
            got: b.len(),
        });
    }
    let offset = stats.combine_columns(&b.coefficients);
    Ok(LatentVector::from_vec_unchecked(
        stats.mean.iter().zip(offset).map(|(m, o)| m + o).collect(),
    ))
}

/// The leading `t′` eigenvectors of a class, `t′ = clamp(⌈β·t/100⌉, 1, t)`.
#[derive(Debug, Clone, Copy)]
pub struct TruncatedStats<'a> {
    pub source: &'a ClassStats,
    pub beta: f64,
    pub retained: usize,
}

impl TruncatedStats<'_> {
    pub fn basis(&self) -> DMatrix<f64> {
        self.source.eigenvectors.columns(0, self.retained).into_owned()
    }
}

pub fn validate_beta(beta: f64) -> Result<()> {
    if !(beta > 0.0 && beta <= 100.0) {
        return Err(Error::invalid(format!(
            "beta must be in (0, 100], got {beta}"
        )));
    }
    Ok(())
}

pub fn truncate_stats(stats: &ClassStats, beta: f64) -> Result<TruncatedStats<'_>> {
    validate_beta(beta)?;
    let t = stats.rank();
    if t == 0 {
        return Err(Error::invalid(format!(
            "class {} has no eigenvectors to truncate",
            stats.class
        )));
    }
    let raw = (beta * t as f64 / 100.0).ceil() as usize;
    Ok(TruncatedStats {
        source: stats,
        beta,
        retained: raw.clamp(1, t),
    })
}
