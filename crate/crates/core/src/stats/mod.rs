//! Magnetizations, equal-time and lagged connected correlations, and the
//! four-point derivative of lagged correlations.
//!
//! Lagged products are pooled over days and never pair samples from different
//! days. The subtracted `m_i m_j` always uses whole-dataset magnetizations.
//!
//! [`significance_floor`] returns `n_samples^{-1/2}`, the size of spurious
//! connected correlations between independent spins. With sliding windows
//! (`ds < dt`) consecutive samples are strongly dependent, so this floor is
//! optimistic; it is reported as a reference scale only.

pub mod kernel;

use std::collections::BTreeMap;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::binarize::{MappingParams, SpinMatrix};
use crate::error::{Error, Result};

pub use kernel::{pair_product_sums, ProductSums};

/// Number of lags used by the derivative fit, at `k * dt / 5` for `k = 0..4`.
pub const DERIVATIVE_POINTS: usize = 4;

/// Time average of every spin column.
pub fn magnetizations(sm: &SpinMatrix) -> DVector<f64> {
    let total = sm.n_samples() as f64;
    DVector::from_iterator(
        sm.n_stocks(),
        (0..sm.n_stocks()).map(|i| (2.0 * sm.up_count(i) as f64 - total) / total),
    )
}

/// Connected correlation `C_ij(tau) = <s_i(t + tau) s_j(t)> - m_i m_j` with
/// `tau` in samples.
pub fn connected_corr(sm: &SpinMatrix, tau: usize) -> Result<DMatrix<f64>> {
    let m = magnetizations(sm);
    connected_corr_with(sm, tau, &m)
}

fn connected_corr_with(sm: &SpinMatrix, tau: usize, m: &DVector<f64>) -> Result<DMatrix<f64>> {
    if tau >= sm.samples_per_day() {
        return Err(Error::validation(format!(
            "lag {tau} samples must be below the {} samples per day",
            sm.samples_per_day()
        )));
    }
    let sums = pair_product_sums(sm, tau);
    let n = sm.n_stocks();
    let pairs = sums.pairs() as f64;
    Ok(DMatrix::from_fn(n, n, |i, j| sums.get(i, j) as f64 / pairs - m[i] * m[j]))
}

/// Ordinary least-squares slope of `ys` against `xs`.
pub fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    sxy / sxx
}

/// Elementwise least-squares slope of a sequence of matrices sampled at `xs`.
pub fn matrix_slope(xs: &[f64], mats: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let (r, c) = mats[0].shape();
    let mut ys = vec![0.0; mats.len()];
    DMatrix::from_fn(r, c, |i, j| {
        for (y, m) in ys.iter_mut().zip(mats) {
            *y = m[(i, j)];
        }
        least_squares_slope(xs, &ys)
    })
}

/// Lags, in samples, of the four-point derivative fit for window length `dt`
/// seconds: `round(k * dt / 5)` seconds converted with the window shift `ds`.
pub fn derivative_lags(dt: usize, ds: usize) -> Result<[usize; DERIVATIVE_POINTS]> {
    if dt < 5 {
        return Err(Error::validation(format!("derivative fit needs dt >= 5, got {dt}")));
    }
    let mut lags = [0; DERIVATIVE_POINTS];
    for (k, lag) in lags.iter_mut().enumerate() {
        let seconds = (k as f64 * dt as f64 / 5.0).round();
        *lag = (seconds / ds as f64).round() as usize;
    }
    if lags.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::validation(format!(
            "derivative lags {lags:?} (samples) collapse for dt={dt}, ds={ds}"
        )));
    }
    Ok(lags)
}

/// Slope of `C(tau)` fitted over the given lags (samples), with `spacing` time
/// units per sample.
pub fn corr_slope(sm: &SpinMatrix, lags: &[usize], spacing: f64) -> Result<DMatrix<f64>> {
    if lags.len() < 2 {
        return Err(Error::validation("slope fit needs at least two lags"));
    }
    let m = magnetizations(sm);
    let mats = lags
        .iter()
        .map(|&tau| connected_corr_with(sm, tau, &m))
        .collect::<Result<Vec<_>>>()?;
    let xs: Vec<f64> = lags.iter().map(|&l| l as f64 * spacing).collect();
    Ok(matrix_slope(&xs, &mats.iter().collect::<Vec<_>>()))
}

/// `dC/dtau` at zero from a linear fit through `C(0)`, `C(dt/5)`, `C(2dt/5)`
/// and `C(3dt/5)`, in units of 1/second.
pub fn corr_derivative(sm: &SpinMatrix, dt: usize) -> Result<DMatrix<f64>> {
    let ds = sm.params().ds;
    corr_slope(sm, &derivative_lags(dt, ds)?, ds as f64)
}

pub fn floor_for(n_samples: usize) -> f64 {
    1.0 / (n_samples as f64).sqrt()
}

/// `n_samples^{-1/2}`.
pub fn significance_floor(sm: &SpinMatrix) -> f64 {
    floor_for(sm.n_samples())
}

/// First and second moments of a spin dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentSet {
    pub stocks: Vec<String>,
    pub mapping: Option<MappingParams>,
    pub m: DVector<f64>,
    pub c0: DMatrix<f64>,
    /// Lagged correlations keyed by lag in seconds.
    pub lags: Vec<(usize, DMatrix<f64>)>,
    /// `dC/dtau` at zero, per second.
    pub dc: Option<DMatrix<f64>>,
    pub n_samples: usize,
}

impl MomentSet {
    /// A moment set from given magnetizations and equal-time correlations,
    /// with generated stock names.
    pub fn from_parts(m: DVector<f64>, c0: DMatrix<f64>) -> Self {
        Self {
            stocks: (0..m.len()).map(|i| format!("s{i}")).collect(),
            mapping: None,
            m,
            c0,
            lags: Vec::new(),
            dc: None,
            n_samples: 0,
        }
    }

    pub fn with_lag(mut self, tau: usize, c: DMatrix<f64>) -> Self {
        self.lags.retain(|(t, _)| *t != tau);
        self.lags.push((tau, c));
        self.lags.sort_by_key(|(t, _)| *t);
        self
    }

    pub fn with_derivative(mut self, dc: DMatrix<f64>) -> Self {
        self.dc = Some(dc);
        self
    }

    pub fn n(&self) -> usize {
        self.m.len()
    }

    pub fn lag(&self, tau: usize) -> Option<&DMatrix<f64>> {
        self.lags.iter().find(|(t, _)| *t == tau).map(|(_, c)| c)
    }

    pub fn significance_floor(&self) -> f64 {
        floor_for(self.n_samples)
    }

    pub fn write_json<W: Write>(&self, out: W) -> Result<()> {
        #[derive(Serialize)]
        struct Lag {
            tau: usize,
            c: Vec<Vec<f64>>,
        }
        #[derive(Serialize)]
        struct Doc<'a> {
            stocks: &'a [String],
            mapping: Option<MappingParams>,
            n_samples: usize,
            significance_floor: f64,
            m: Vec<f64>,
            c0: Vec<Vec<f64>>,
            lags: Vec<Lag>,
            dc: Option<Vec<Vec<f64>>>,
        }
        let doc = Doc {
            stocks: &self.stocks,
            mapping: self.mapping,
            n_samples: self.n_samples,
            significance_floor: self.significance_floor(),
            m: self.m.iter().copied().collect(),
            c0: rows(&self.c0),
            lags: self.lags.iter().map(|(tau, c)| Lag { tau: *tau, c: rows(c) }).collect(),
            dc: self.dc.as_ref().map(rows),
        };
        serde_json::to_writer_pretty(out, &doc)?;
        Ok(())
    }
}

pub(crate) fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn seconds_to_samples(seconds: usize, ds: usize) -> Result<usize> {
    if !seconds.is_multiple_of(ds) {
        return Err(Error::validation(format!(
            "lag {seconds} s is not a multiple of the window shift {ds} s"
        )));
    }
    Ok(seconds / ds)
}

/// Estimates magnetizations, `C(0)`, `C(tau)` for each lag in `lags_seconds`,
/// and, when `derivative_dt` is given, the four-point derivative. Every
/// distinct lag is computed once.
pub fn estimate_moments(sm: &SpinMatrix, lags_seconds: &[usize], derivative_dt: Option<usize>) -> Result<MomentSet> {
    let ds = sm.params().ds;
    let m = magnetizations(sm);

    let mut wanted: BTreeMap<usize, Option<DMatrix<f64>>> = BTreeMap::new();
    wanted.insert(0, None);
    let lag_samples = lags_seconds
        .iter()
        .map(|&s| seconds_to_samples(s, ds))
        .collect::<Result<Vec<_>>>()?;
    wanted.extend(lag_samples.iter().map(|&l| (l, None)));
    let deriv_lags = derivative_dt.map(|dt| derivative_lags(dt, ds)).transpose()?;
    if let Some(lags) = &deriv_lags {
        wanted.extend(lags.iter().map(|&l| (l, None)));
    }
    for (&tau, slot) in wanted.iter_mut() {
        *slot = Some(connected_corr_with(sm, tau, &m)?);
    }
    let get = |tau: usize| wanted[&tau].as_ref().expect("computed above");

    let dc = deriv_lags.map(|lags| {
        let xs: Vec<f64> = lags.iter().map(|&l| (l * ds) as f64).collect();
        let mats: Vec<&DMatrix<f64>> = lags.iter().map(|&l| get(l)).collect();
        matrix_slope(&xs, &mats)
    });
    let mut lags: Vec<(usize, DMatrix<f64>)> = lags_seconds
        .iter()
        .zip(&lag_samples)
        .map(|(&s, &l)| (s, get(l).clone()))
        .collect();
    lags.sort_by_key(|(t, _)| *t);
    lags.dedup_by_key(|(t, _)| *t);

    Ok(MomentSet {
        stocks: sm.stocks().to_vec(),
        mapping: Some(*sm.params()),
        c0: get(0).clone(),
        m,
        lags,
        dc,
        n_samples: sm.n_samples(),
    })
}
