//! Scalar and spectral summaries of coupling matrices.
//!
//! All summaries ignore diagonal entries.

use std::io::Write;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::ingest::VolumeGrid;

/// Off-diagonal entries in row-major order.
pub fn off_diagonal(j: &DMatrix<f64>) -> Vec<f64> {
    let n = j.nrows();
    let mut out = Vec::with_capacity(n * n.saturating_sub(1));
    for r in 0..n {
        for c in 0..j.ncols() {
            if r != c {
                out.push(j[(r, c)]);
            }
        }
    }
    out
}

fn require_square(j: &DMatrix<f64>, min: usize) -> Result<()> {
    if !j.is_square() || j.nrows() < min {
        return Err(Error::validation(format!(
            "expected a square matrix with at least {min} rows, got {}x{}",
            j.nrows(),
            j.ncols()
        )));
    }
    Ok(())
}

/// Mean of `|J_ij|` over ordered pairs `i != j`.
pub fn mean_abs_coupling(j: &DMatrix<f64>) -> Result<f64> {
    require_square(j, 2)?;
    let vals = off_diagonal(j);
    Ok(vals.iter().map(|v| v.abs()).sum::<f64>() / vals.len() as f64)
}

/// `Σ J_ij J'_ij / Σ max(|J_ij|, |J'_ij|)^2` over `i != j`.
///
/// The magnitudes in the denominator keep `Q` within `[-1, 1]`, with `1`
/// exactly when `J = J'` and `-1` exactly when `J = -J'`.
pub fn similarity_q(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    require_square(a, 1)?;
    if a.shape() != b.shape() {
        return Err(Error::validation(format!(
            "similarity needs equal shapes, got {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let (mut num, mut den) = (0.0, 0.0);
    for (x, y) in off_diagonal(a).into_iter().zip(off_diagonal(b)) {
        num += x * y;
        let m = x.abs().max(y.abs());
        den += m * m;
    }
    if den == 0.0 {
        return Err(Error::UndefinedSimilarity);
    }
    Ok(num / den)
}

/// Q between pairs of independent `n x n` matrices with normal(0, sigma)
/// entries, one pair per seed `base_seed..base_seed + seeds`.
pub fn random_similarity_baseline(n: usize, sigma: f64, seeds: usize, base_seed: u64) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(Error::validation("baseline needs n >= 2"));
    }
    let normal = Normal::new(0.0, sigma)
        .ok()
        .filter(|_| sigma > 0.0)
        .ok_or_else(|| Error::validation(format!("sigma must be positive, got {sigma}")))?;
    (0..seeds as u64)
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(base_seed.wrapping_add(s));
            let a = DMatrix::from_fn(n, n, |_, _| normal.sample(&mut rng));
            let b = DMatrix::from_fn(n, n, |_, _| normal.sample(&mut rng));
            similarity_q(&a, &b)
        })
        .collect()
}

/// Mean and population standard deviation of the off-diagonal entries.
pub fn off_diagonal_moments(j: &DMatrix<f64>) -> (f64, f64) {
    let vals = off_diagonal(j);
    let moments = Moments::of(&vals);
    (moments.mean, moments.std)
}

/// `c J` with `c` chosen so the off-diagonal mean becomes `target_mean`.
pub fn rescale_to_mean(j: &DMatrix<f64>, target_mean: f64) -> Result<DMatrix<f64>> {
    require_square(j, 2)?;
    let (mean, _) = off_diagonal_moments(j);
    if mean == 0.0 {
        return Err(Error::validation("cannot rescale a matrix with zero off-diagonal mean"));
    }
    Ok(j * (target_mean / mean))
}

/// `c J` with `c` chosen so the off-diagonal standard deviation becomes
/// `target_std`.
pub fn rescale_to_std(j: &DMatrix<f64>, target_std: f64) -> Result<DMatrix<f64>> {
    require_square(j, 2)?;
    let (_, std) = off_diagonal_moments(j);
    if std == 0.0 {
        return Err(Error::validation("cannot rescale a matrix with zero off-diagonal spread"));
    }
    Ok(j * (target_std / std))
}

#[derive(Debug, Clone, Copy)]
struct Moments {
    mean: f64,
    std: f64,
    skewness: f64,
}

impl Moments {
    fn of(vals: &[f64]) -> Self {
        let n = vals.len() as f64;
        if vals.is_empty() {
            return Self {
                mean: 0.0,
                std: 0.0,
                skewness: 0.0,
            };
        }
        let mean = vals.iter().sum::<f64>() / n;
        let m2 = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let m3 = vals.iter().map(|v| (v - mean).powi(3)).sum::<f64>() / n;
        let skewness = if m2 > 0.0 { m3 / m2.powf(1.5) } else { 0.0 };
        Self {
            mean,
            std: m2.sqrt(),
            skewness,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Bins {
    /// Equal-width bins spanning the data range.
    Count(usize),
    /// Explicit ascending edges; the last bin includes its right edge.
    Edges(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    /// Values left of the first edge (explicit edges only).
    pub underflow: usize,
    /// Values right of the last edge (explicit edges only).
    pub overflow: usize,
    pub mean: f64,
    pub std: f64,
    pub skewness: f64,
}

/// Histogram of the off-diagonal couplings plus their mean, standard
/// deviation and skewness.
pub fn coupling_histogram(j: &DMatrix<f64>, bins: &Bins) -> Result<Histogram> {
    require_square(j, 1)?;
    let vals = off_diagonal(j);
    let edges = match bins {
        Bins::Count(0) => return Err(Error::validation("histogram needs at least one bin")),
        Bins::Count(k) => {
            let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let (lo, hi) = match (lo.is_finite(), lo < hi) {
                (false, _) => (0.0, 1.0),
                (true, false) => (lo - 0.5, lo + 0.5),
                (true, true) => (lo, hi),
            };
            let width = (hi - lo) / *k as f64;
            let mut e: Vec<f64> = (0..*k).map(|b| lo + b as f64 * width).collect();
            e.push(hi);
            e
        }
        Bins::Edges(e) => {
            if e.len() < 2 || e.windows(2).any(|w| w[0].partial_cmp(&w[1]) != Some(std::cmp::Ordering::Less)) {
                return Err(Error::validation("histogram edges must be strictly ascending, at least two"));
            }
            e.clone()
        }
    };
    let nbins = edges.len() - 1;
    let mut counts = vec![0; nbins];
    let (mut underflow, mut overflow) = (0, 0);
    for &v in &vals {
        if v < edges[0] {
            underflow += 1;
        } else if v > edges[nbins] {
            overflow += 1;
        } else {
            // first edge strictly greater than v, minus one; clamp the right edge into the last bin
            let b = edges.partition_point(|&e| e <= v).saturating_sub(1).min(nbins - 1);
            counts[b] += 1;
        }
    }
    let m = Moments::of(&vals);
    Ok(Histogram {
        edges,
        counts,
        underflow,
        overflow,
        mean: m.mean,
        std: m.std,
        skewness: m.skewness,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    /// Eigenvalues of the symmetrized, zero-diagonal matrix, descending.
    pub eigenvalues: Vec<f64>,
    /// Orthonormal eigenvectors as columns, in the order of `eigenvalues`.
    pub eigenvectors: DMatrix<f64>,
    /// Unit eigenvector of the largest eigenvalue, oriented so most components
    /// are non-negative.
    pub leading: DVector<f64>,
    /// Fraction of leading-vector components sharing the majority sign.
    pub sign_uniformity: f64,
}

/// `(J + J^T) / 2` with the diagonal set to zero.
pub fn symmetrize(j: &DMatrix<f64>) -> DMatrix<f64> {
    let mut s = (j + j.transpose()) * 0.5;
    s.fill_diagonal(0.0);
    s
}

/// Eigen-decomposition of the symmetrized coupling matrix. A leading
/// eigenvector with uniform sign is the market-mode signature.
pub fn spectral_summary(j: &DMatrix<f64>) -> Result<Spectrum> {
    require_square(j, 1)?;
    let eig = SymmetricEigen::new(symmetrize(j));
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let eigenvalues = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let eigenvectors = eig.eigenvectors.select_columns(&order);
    let mut leading: DVector<f64> = eigenvectors.column(0).into_owned();
    let positive = leading.iter().filter(|&&v| v > 0.0).count();
    let negative = leading.iter().filter(|&&v| v < 0.0).count();
    if negative > positive {
        leading = -leading;
    }
    let sign_uniformity = positive.max(negative) as f64 / leading.len() as f64;
    Ok(Spectrum {
        eigenvalues,
        eigenvectors,
        leading,
        sign_uniformity,
    })
}

/// Summary of one coupling matrix, serialized as `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CouplingSummary {
    pub mean_abs: f64,
    pub histogram: Histogram,
    pub skewness: f64,
    /// Factor applied to the matrix before histogramming, 1 if none.
    pub rescale_factor: f64,
    pub top_eigenvalues: Vec<f64>,
    pub sign_uniformity: f64,
    pub leading_eigenvector: Vec<f64>,
}

pub fn summarize(j: &DMatrix<f64>, bins: &Bins) -> Result<CouplingSummary> {
    let histogram = coupling_histogram(j, bins)?;
    let spectrum = spectral_summary(j)?;
    Ok(CouplingSummary {
        mean_abs: mean_abs_coupling(j)?,
        skewness: histogram.skewness,
        histogram,
        rescale_factor: 1.0,
        top_eigenvalues: spectrum.eigenvalues.iter().take(5).copied().collect(),
        sign_uniformity: spectrum.sign_uniformity,
        leading_eigenvector: spectrum.leading.iter().copied().collect(),
    })
}

impl CouplingSummary {
    pub fn write_json<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer_pretty(out, self)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activity {
    Stock(usize),
    /// Sum over all stocks.
    Aggregate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Periodogram {
    /// Cycles per second, `k / L` for `k = 0..=L/2`.
    pub frequency: Vec<f64>,
    pub power: Vec<f64>,
}

impl Periodogram {
    /// Index of the frequency bin nearest to `f`.
    pub fn nearest_bin(&self, f: f64) -> usize {
        let step = self.frequency.get(1).copied().unwrap_or(1.0);
        ((f / step).round() as usize).min(self.frequency.len() - 1)
    }
}

/// Power spectrum `|X_k|^2 / L` of the mean-removed per-second volume
/// series, days concatenated.
pub fn periodogram(grid: &VolumeGrid, which: Activity) -> Result<Periodogram> {
    let len = grid.days() * grid.day_length();
    let mut series: Vec<f64> = match which {
        Activity::Stock(i) => {
            if i >= grid.n_stocks() {
                return Err(Error::validation(format!("no stock {i} in grid")));
            }
            grid.stock_series(i).iter().map(|&v| v as f64).collect()
        }
        Activity::Aggregate => {
            let mut acc = vec![0.0; len];
            for i in 0..grid.n_stocks() {
                for (a, &v) in acc.iter_mut().zip(grid.stock_series(i)) {
                    *a += v as f64;
                }
            }
            acc
        }
    };
    Ok(power_spectrum(&mut series))
}

/// Periodogram of an arbitrary real series with unit sample spacing.
pub fn power_spectrum(series: &mut [f64]) -> Periodogram {
    let len = series.len();
    if len == 0 {
        return Periodogram {
            frequency: Vec::new(),
            power: Vec::new(),
        };
    }
    let mean = series.iter().sum::<f64>() / len as f64;
    let mut buf: Vec<Complex<f64>> = series.iter().map(|&v| Complex::new(v - mean, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(len).process(&mut buf);
    let half = len / 2;
    Periodogram {
        frequency: (0..=half).map(|k| k as f64 / len as f64).collect(),
        power: buf[..=half].iter().map(|c| c.norm_sqr() / len as f64).collect(),
    }
}
