//! Sliding-window volume thresholding into ±1 spin series.
//!
//! A stock is "up" (+1) in the window `[t, t + dt)` when the volume traded in
//! that window reaches `chi * V_av * dt`, where `V_av` is the stock's average
//! traded volume per second. Windows advance by `ds` seconds and never cross
//! a day boundary.

use std::io::Write;
use std::ops::Range;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ingest::VolumeGrid;

/// Parameters of the volume-to-spin mapping.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MappingParams {
    /// Window length in seconds.
    pub dt: usize,
    /// Threshold multiplier.
    pub chi: f64,
    /// Window shift in seconds.
    pub ds: usize,
}

impl MappingParams {
    pub fn new(dt: usize, chi: f64) -> Self {
        Self { dt, chi, ds: 1 }
    }

    pub fn validate(&self, day_length: usize) -> Result<()> {
        if self.dt == 0 || self.dt > day_length {
            return Err(Error::validation(format!(
                "window length {} must be in 1..={day_length}",
                self.dt
            )));
        }
        if self.ds == 0 {
            return Err(Error::validation("window shift must be >= 1"));
        }
        if !self.chi.is_finite() || self.chi < 0.0 {
            return Err(Error::validation(format!("chi must be finite and >= 0, got {}", self.chi)));
        }
        Ok(())
    }

    /// Windows per day: `floor((day_length - dt) / ds) + 1`.
    pub fn samples_per_day(&self, day_length: usize) -> usize {
        (day_length - self.dt) / self.ds + 1
    }
}

pub(crate) const WORD_BITS: usize = 64;

/// Binarized dataset: `days * samples_per_day` samples of N spins.
///
/// Spins are stored bit-packed per stock and per day (bit set means +1), each
/// day starting on a fresh word with the padding bits cleared. The packed
/// layout is what the correlation kernels in [`crate::stats`] consume.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinMatrix {
    params: MappingParams,
    stocks: Vec<String>,
    days: usize,
    samples_per_day: usize,
    words_per_day: usize,
    bits: Vec<u64>,
}

impl SpinMatrix {
    fn zeroed(params: MappingParams, stocks: Vec<String>, days: usize, samples_per_day: usize) -> Self {
        let words_per_day = samples_per_day.div_ceil(WORD_BITS);
        let bits = vec![0; stocks.len() * days * words_per_day];
        Self {
            params,
            stocks,
            days,
            samples_per_day,
            words_per_day,
            bits,
        }
    }

    /// Builds a matrix from row-major `samples x stocks` spins, split into
    /// `days` equal blocks.
    pub fn from_spins(params: MappingParams, stocks: Vec<String>, days: usize, spins: &[i8]) -> Result<Self> {
        let n = stocks.len();
        if n == 0 || days == 0 {
            return Err(Error::validation("spin matrix needs at least one stock and one day"));
        }
        if !spins.len().is_multiple_of(n * days) {
            return Err(Error::validation(format!(
                "{} spins do not split into {days} days of {n} stocks",
                spins.len()
            )));
        }
        let per_day = spins.len() / (n * days);
        if per_day == 0 {
            return Err(Error::validation("spin matrix needs at least one sample per day"));
        }
        let mut sm = Self::zeroed(params, stocks, days, per_day);
        for (row, sample) in spins.chunks_exact(n).enumerate() {
            for (i, &s) in sample.iter().enumerate() {
                match s {
                    1 => sm.set_up(row, i),
                    -1 => {}
                    other => return Err(Error::validation(format!("spin value {other} is not +1 or -1"))),
                }
            }
        }
        Ok(sm)
    }

    /// A single-day matrix for simulated trajectories: one sample per time
    /// step, tagged with unit mapping parameters.
    pub fn trajectory(n: usize, spins: &[i8]) -> Result<Self> {
        let stocks = (0..n).map(|i| format!("s{i}")).collect();
        Self::from_spins(MappingParams { dt: 1, chi: 0.0, ds: 1 }, stocks, 1, spins)
    }

    fn set_up(&mut self, sample: usize, stock: usize) {
        let (day, t) = (sample / self.samples_per_day, sample % self.samples_per_day);
        let w = self.day_offset(stock, day) + t / WORD_BITS;
        self.bits[w] |= 1 << (t % WORD_BITS);
    }

    fn day_offset(&self, stock: usize, day: usize) -> usize {
        (stock * self.days + day) * self.words_per_day
    }

    pub fn params(&self) -> &MappingParams {
        &self.params
    }

    pub fn stocks(&self) -> &[String] {
        &self.stocks
    }

    pub fn n_stocks(&self) -> usize {
        self.stocks.len()
    }

    pub fn days(&self) -> usize {
        self.days
    }

    pub fn samples_per_day(&self) -> usize {
        self.samples_per_day
    }

    pub fn n_samples(&self) -> usize {
        self.days * self.samples_per_day
    }

    pub fn words_per_day(&self) -> usize {
        self.words_per_day
    }

    /// Spin of `stock` at global sample index `sample`.
    pub fn get(&self, sample: usize, stock: usize) -> i8 {
        let (day, t) = (sample / self.samples_per_day, sample % self.samples_per_day);
        let w = self.bits[self.day_offset(stock, day) + t / WORD_BITS];
        if (w >> (t % WORD_BITS)) & 1 == 1 {
            1
        } else {
            -1
        }
    }

    /// Column of one stock as ±1 values.
    pub fn column(&self, stock: usize) -> Vec<i8> {
        (0..self.n_samples()).map(|t| self.get(t, stock)).collect()
    }

    /// Packed words of one stock, all days, `words_per_day` words per day.
    pub fn packed(&self, stock: usize) -> &[u64] {
        let span = self.days * self.words_per_day;
        &self.bits[stock * span..(stock + 1) * span]
    }

    /// Packed words of one stock on one day.
    pub fn packed_day(&self, stock: usize, day: usize) -> &[u64] {
        let start = self.day_offset(stock, day);
        &self.bits[start..start + self.words_per_day]
    }

    /// Number of +1 entries in a column.
    pub fn up_count(&self, stock: usize) -> usize {
        self.packed(stock).iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Sample-index range of each day.
    pub fn day_boundaries(&self) -> Vec<Range<usize>> {
        (0..self.days)
            .map(|d| d * self.samples_per_day..(d + 1) * self.samples_per_day)
            .collect()
    }

    /// Keeps the listed stocks, in the given order.
    pub fn select(&self, keep: &[usize]) -> SpinMatrix {
        let mut out = Self::zeroed(
            self.params,
            keep.iter().map(|&i| self.stocks[i].clone()).collect(),
            self.days,
            self.samples_per_day,
        );
        let span = self.days * self.words_per_day;
        for (k, &i) in keep.iter().enumerate() {
            out.bits[k * span..(k + 1) * span].copy_from_slice(self.packed(i));
        }
        out
    }

    /// Writes the matrix as CSV: a `#` metadata line, a ticker header, then
    /// one row of `+1`/`-1` per sample.
    pub fn write_csv<W: Write>(&self, mut out: W, dropped: &[String]) -> Result<()> {
        writeln!(
            out,
            "# dt={},chi={},ds={},dropped={}",
            self.params.dt,
            self.params.chi,
            self.params.ds,
            dropped.join(";")
        )?;
        writeln!(out, "{}", self.stocks.join(","))?;
        let mut line = String::new();
        for t in 0..self.n_samples() {
            line.clear();
            for i in 0..self.n_stocks() {
                if i > 0 {
                    line.push(',');
                }
                line.push_str(if self.get(t, i) == 1 { "+1" } else { "-1" });
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }
}

/// Volume traded in each window `[k*ds, k*ds + dt)` of one stock-day.
///
/// Uses prefix sums, so each window costs O(1) regardless of `dt`.
pub fn window_sums(grid: &VolumeGrid, stock: usize, day: usize, dt: usize, ds: usize) -> Result<Vec<f64>> {
    MappingParams { dt, chi: 0.0, ds }.validate(grid.day_length())?;
    Ok(running_window_sums(grid.series(stock, day), dt, ds)
        .map(|s| s as f64)
        .collect())
}

fn running_window_sums(series: &[u32], dt: usize, ds: usize) -> impl Iterator<Item = u64> + '_ {
    let mut prefix = Vec::with_capacity(series.len() + 1);
    prefix.push(0u64);
    let mut acc = 0u64;
    for &v in series {
        acc += v as u64;
        prefix.push(acc);
    }
    let windows = (series.len() - dt) / ds + 1;
    (0..windows).map(move |k| prefix[k * ds + dt] - prefix[k * ds])
}

/// +1 where the windowed volume reaches `v_th`, -1 otherwise.
pub fn threshold_spins(sums: &[f64], v_th: f64) -> Vec<i8> {
    sums.iter().map(|&s| if s >= v_th { 1 } else { -1 }).collect()
}

/// Per-stock threshold `chi * V_av * dt`.
pub fn volume_threshold(grid: &VolumeGrid, stock: usize, params: &MappingParams) -> f64 {
    params.chi * grid.average_volume_rate(stock) * params.dt as f64
}

/// Binarizes every stock and day of `grid`.
pub fn build_spin_matrix(grid: &VolumeGrid, params: MappingParams) -> Result<SpinMatrix> {
    params.validate(grid.day_length())?;
    if grid.n_stocks() == 0 || grid.days() == 0 {
        return Err(Error::validation("volume grid is empty"));
    }
    let w = params.samples_per_day(grid.day_length());
    let mut sm = SpinMatrix::zeroed(params, grid.stocks().to_vec(), grid.days(), w);
    let span = sm.days * sm.words_per_day;
    let wpd = sm.words_per_day;
    sm.bits.par_chunks_mut(span).enumerate().for_each(|(i, stock_bits)| {
        let v_th = volume_threshold(grid, i, &params);
        for (d, day_bits) in stock_bits.chunks_mut(wpd).enumerate() {
            for (t, sum) in running_window_sums(grid.series(i, d), params.dt, params.ds).enumerate() {
                if sum as f64 >= v_th {
                    day_bits[t / WORD_BITS] |= 1 << (t % WORD_BITS);
                }
            }
        }
    });
    Ok(sm)
}

/// Removes stocks whose spin series is constant (magnetization ±1), returning
/// the reduced matrix and the dropped tickers.
pub fn filter_degenerate(sm: &SpinMatrix) -> Result<(SpinMatrix, Vec<String>)> {
    let total = sm.n_samples();
    let (keep, drop): (Vec<usize>, Vec<usize>) = (0..sm.n_stocks()).partition(|&i| {
        let up = sm.up_count(i);
        up != 0 && up != total
    });
    if keep.is_empty() {
        return Err(Error::EmptyDataset { dropped: drop.len() });
    }
    let dropped = drop.iter().map(|&i| sm.stocks[i].clone()).collect();
    Ok((sm.select(&keep), dropped))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid(volumes: Vec<u32>, stocks: usize, days: usize) -> VolumeGrid {
        let day_length = volumes.len() / (stocks * days);
        let names = (0..stocks).map(|i| format!("S{i}")).collect();
        VolumeGrid::new(names, days, day_length, volumes).unwrap()
    }

    #[test]
    fn window_sum_examples() {
        let g = grid(vec![4, 0, 2, 6], 1, 1);
        assert_eq!(window_sums(&g, 0, 0, 2, 1).unwrap(), vec![4.0, 2.0, 8.0]);
        assert_eq!(window_sums(&g, 0, 0, 4, 1).unwrap(), vec![12.0]);
        assert!(window_sums(&g, 0, 0, 5, 1).is_err());
        let z = grid(vec![0; 7], 1, 1);
        assert!(window_sums(&z, 0, 0, 3, 1).unwrap().iter().all(|&s| s == 0.0));
    }

    #[test]
    fn threshold_examples() {
        assert_eq!(threshold_spins(&[4.0, 2.0, 8.0], 6.0), vec![-1, -1, 1]);
        assert_eq!(threshold_spins(&[0.0, 1.0, 100.0, 0.0], 1e-12), vec![-1, 1, 1, -1]);
        assert_eq!(threshold_spins(&[0.0, 0.0], 0.0), vec![1, 1]);
    }

    #[test]
    fn build_examples() {
        let g = grid(vec![4, 0, 2, 6], 1, 1);
        let sm = build_spin_matrix(&g, MappingParams::new(2, 1.0)).unwrap();
        assert_eq!(sm.column(0), vec![-1, -1, 1]);

        let sm = build_spin_matrix(&g, MappingParams::new(2, 0.0)).unwrap();
        assert_eq!(sm.column(0), vec![1, 1, 1]);

        let two_days = grid(vec![4, 0, 2, 6, 4, 0, 2, 6], 1, 2);
        let sm = build_spin_matrix(&two_days, MappingParams::new(2, 1.0)).unwrap();
        assert_eq!(sm.column(0), vec![-1, -1, 1, -1, -1, 1]);
        assert_eq!(sm.day_boundaries(), vec![0..3, 3..6]);
    }

    #[test]
    fn decimated_windows() {
        let g = grid((1..=10).collect(), 1, 1);
        assert_eq!(window_sums(&g, 0, 0, 3, 2).unwrap(), vec![6.0, 12.0, 18.0, 24.0]);
        let params = MappingParams { dt: 3, chi: 0.0, ds: 2 };
        assert_eq!(params.samples_per_day(10), 4);
    }

    #[test]
    fn degenerate_filtering() {
        let params = MappingParams::new(1, 1.0);
        let names = vec!["A".to_string(), "B".to_string()];
        let sm = SpinMatrix::from_spins(params, names.clone(), 1, &[-1, 1, -1, -1, -1, 1]).unwrap();
        let (kept, dropped) = filter_degenerate(&sm).unwrap();
        assert_eq!(kept.stocks(), &["B".to_string()]);
        assert_eq!(kept.column(0), vec![1, -1, 1]);
        assert_eq!(dropped, vec!["A".to_string()]);

        let sm = SpinMatrix::from_spins(params, names.clone(), 1, &[1, 1, -1, -1]).unwrap();
        let (kept, dropped) = filter_degenerate(&sm).unwrap();
        assert_eq!(kept, sm);
        assert!(dropped.is_empty());

        let sm = SpinMatrix::from_spins(params, names, 1, &[1, -1, 1, -1]).unwrap();
        assert!(matches!(filter_degenerate(&sm), Err(Error::EmptyDataset { dropped: 2 })));
    }

    #[test]
    fn csv_dump_has_metadata() {
        let sm = SpinMatrix::from_spins(MappingParams::new(2, 0.5), vec!["A".into(), "B".into()], 1, &[1, -1, -1, 1])
            .unwrap();
        let mut buf = Vec::new();
        sm.write_csv(&mut buf, &["C".into()]).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "# dt=2,chi=0.5,ds=1,dropped=C\nA,B\n+1,-1\n-1,+1\n"
        );
    }

    fn naive_sums(series: &[u32], dt: usize, ds: usize) -> Vec<f64> {
        (0..=(series.len() - dt) / ds)
            .map(|k| series[k * ds..k * ds + dt].iter().map(|&v| v as f64).sum())
            .collect()
    }

    proptest! {
        #[test]
        fn running_sums_match_naive(series in prop::collection::vec(0u32..500, 1..80), dt in 1usize..30, ds in 1usize..5) {
            prop_assume!(dt <= series.len());
            let g = grid(series.clone(), 1, 1);
            prop_assert_eq!(window_sums(&g, 0, 0, dt, ds).unwrap(), naive_sums(&series, dt, ds));
        }

        #[test]
        fn spins_monotone_in_chi(series in prop::collection::vec(0u32..50, 20..60), dt in 1usize..10, a in 0.0f64..3.0, b in 0.0f64..3.0) {
            let mut series = series;
            series.truncate(series.len() & !1);
            let g = grid(series, 1, 2);
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let s_lo = build_spin_matrix(&g, MappingParams::new(dt, lo)).unwrap();
            let s_hi = build_spin_matrix(&g, MappingParams::new(dt, hi)).unwrap();
            prop_assert_eq!(s_lo.n_samples(), 2 * ((g.day_length() - dt) + 1));
            for t in 0..s_lo.n_samples() {
                prop_assert!(s_lo.get(t, 0) >= s_hi.get(t, 0));
            }
        }

        #[test]
        fn small_chi_is_trade_indicator(series in prop::collection::vec(prop_oneof![Just(0u32), 100u32..5000], 10..60), dt in 1usize..8) {
            let g = grid(series.clone(), 1, 1);
            let sm = build_spin_matrix(&g, MappingParams::new(dt, 1e-12)).unwrap();
            let rate = g.average_volume_rate(0);
            for (t, window) in series.windows(dt).enumerate() {
                let traded = window.iter().any(|&v| v > 0);
                // a stock with no trades at all has a zero threshold
                let expected = if traded || rate == 0.0 { 1 } else { -1 };
                prop_assert_eq!(sm.get(t, 0), expected);
            }
        }
    }
}
