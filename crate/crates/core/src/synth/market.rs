//! Synthetic per-second traded volumes with a market factor, sector factors
//! and a daily activity cycle.
//!
//! Every second, stock `i` in sector `b` trades with probability
//! `logistic(logit(p0) + a_i(t))` where
//!
//! ```text
//! a_i(t) = beta_i * (daily_amplitude * sin(2π t / day_length) + g(t)) + sector * f_b(t)
//! ```
//!
//! `g`, `f_b` are independent unit-variance AR(1) processes and the market
//! loading is `beta_i = common * exp(loading_spread * z_i)` with `z_i` standard
//! normal, drawn once per stock. A trade moves
//! `100 * max(1, round(exp(volume_sigma * Z + volume_coupling * a_i(t))))`
//! shares, a log-normal lot count. With `common = 0` and one stock per sector
//! the stocks are independent.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ingest::VolumeGrid;

#[derive(Debug, Clone, PartialEq)]
pub struct MarketSpec {
    pub n_stocks: usize,
    pub days: usize,
    pub day_length: usize,
    /// Sector sizes, in stock order; must sum to `n_stocks`.
    pub sector_blocks: Vec<usize>,
    pub common_factor_strength: f64,
    /// Log-normal spread of the per-stock market loadings.
    pub loading_spread: f64,
    pub sector_factor_strength: f64,
    /// Amplitude of the daily cycle relative to the market factor.
    pub daily_amplitude: f64,
    /// Correlation time of the latent factors, in seconds.
    pub factor_timescale: f64,
    /// Trade probability per second at zero activity.
    pub base_trade_prob: f64,
    pub volume_sigma: f64,
    pub volume_coupling: f64,
    pub seed: u64,
}

impl MarketSpec {
    pub fn new(
        n_stocks: usize,
        days: usize,
        day_length: usize,
        sector_blocks: Vec<usize>,
        common_factor_strength: f64,
        seed: u64,
    ) -> Self {
        Self {
            n_stocks,
            days,
            day_length,
            sector_blocks,
            common_factor_strength,
            loading_spread: 0.0,
            sector_factor_strength: 0.2,
            daily_amplitude: 1.0,
            factor_timescale: 60.0,
            base_trade_prob: 0.3,
            volume_sigma: 1.0,
            volume_coupling: 0.5,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.sector_blocks.iter().sum::<usize>() != self.n_stocks || self.sector_blocks.contains(&0) {
            return Err(Error::validation(format!(
                "sector blocks {:?} must be positive and sum to {} stocks",
                self.sector_blocks, self.n_stocks
            )));
        }
        if self.days == 0 || self.day_length == 0 {
            return Err(Error::validation("need at least one day of positive length"));
        }
        if !(self.base_trade_prob > 0.0 && self.base_trade_prob < 1.0) {
            return Err(Error::validation("base trade probability must be in (0, 1)"));
        }
        if self.factor_timescale.is_nan() || self.factor_timescale <= 0.0 {
            return Err(Error::validation("factor timescale must be positive"));
        }
        Ok(())
    }

    fn stream(&self, tag: u64, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(tag << 32 | index);
        rng
    }

    pub fn generate(&self) -> Result<VolumeGrid> {
        self.validate()?;
        let len = self.days * self.day_length;
        let phi = (-1.0 / self.factor_timescale).exp();
        let common = ar1(&mut self.stream(1, 0), len, phi);
        let sector_of: Vec<usize> = self
            .sector_blocks
            .iter()
            .enumerate()
            .flat_map(|(b, &size)| std::iter::repeat_n(b, size))
            .collect();
        let offset = (self.base_trade_prob / (1.0 - self.base_trade_prob)).ln();
        let omega = 2.0 * std::f64::consts::PI / self.day_length as f64;
        let daily: Vec<f64> = (0..self.day_length)
            .map(|t| self.daily_amplitude * (omega * t as f64).sin())
            .collect();

        let mut volumes = vec![0u32; self.n_stocks * len];
        volumes.par_chunks_mut(len).enumerate().for_each(|(i, out)| {
            let sector = ar1(&mut self.stream(2, sector_of[i] as u64), len, phi);
            let mut rng = self.stream(3, i as u64);
            let z: f64 = StandardNormal.sample(&mut rng);
            let beta = self.common_factor_strength * (self.loading_spread * z).exp();
            for (k, cell) in out.iter_mut().enumerate() {
                let activity = beta * (daily[k % self.day_length] + common[k])
                    + self.sector_factor_strength * sector[k];
                let p = 1.0 / (1.0 + (-(offset + activity)).exp());
                if rng.random::<f64>() < p {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    let lots = (self.volume_sigma * z + self.volume_coupling * activity).exp().round().max(1.0);
                    *cell = (100.0 * lots).min(u32::MAX as f64) as u32;
                }
            }
        });
        let stocks = (0..self.n_stocks).map(|i| format!("S{i:03}")).collect();
        VolumeGrid::new(stocks, self.days, self.day_length, volumes)
    }
}

/// Stationary unit-variance AR(1) series.
fn ar1(rng: &mut impl Rng, len: usize, phi: f64) -> Vec<f64> {
    let innovation = (1.0 - phi * phi).sqrt();
    let mut x: f64 = StandardNormal.sample(rng);
    (0..len)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            x = phi * x + innovation * z;
            x
        })
        .collect()
}

/// Market volumes with default secondary settings; see [`MarketSpec`].
pub fn synth_market_volumes(
    n_stocks: usize,
    days: usize,
    day_length: usize,
    sector_blocks: &[usize],
    common_factor_strength: f64,
    seed: u64,
) -> Result<VolumeGrid> {
    MarketSpec::new(n_stocks, days, day_length, sector_blocks.to_vec(), common_factor_strength, seed).generate()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analyze::{periodogram, Activity};
    use crate::binarize::{build_spin_matrix, MappingParams};
    use crate::stats::{connected_corr, significance_floor};

    #[test]
    fn reproducible_and_seed_sensitive() {
        let a = synth_market_volumes(3, 2, 500, &[2, 1], 1.0, 5).unwrap();
        assert_eq!(a, synth_market_volumes(3, 2, 500, &[2, 1], 1.0, 5).unwrap());
        assert_ne!(a, synth_market_volumes(3, 2, 500, &[2, 1], 1.0, 6).unwrap());
        assert!(a.volumes().iter().all(|&v| v % 100 == 0));
    }

    #[test]
    fn rejects_bad_blocks() {
        assert!(synth_market_volumes(3, 1, 10, &[2, 2], 1.0, 0).is_err());
        assert!(synth_market_volumes(3, 1, 10, &[3, 0], 1.0, 0).is_err());
    }

    #[test]
    fn independent_without_common_factor() {
        let grid = synth_market_volumes(4, 4, 10_000, &[1, 1, 1, 1], 0.0, 21).unwrap();
        // non-overlapping windows
        let sm = build_spin_matrix(&grid, MappingParams { dt: 20, chi: 1.0, ds: 20 }).unwrap();
        let c = connected_corr(&sm, 0).unwrap();
        let bound = 5.0 * significance_floor(&sm);
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    assert!(c[(i, j)].abs() < bound, "C[{i},{j}] = {} vs {bound}", c[(i, j)]);
                }
            }
        }
    }

    #[test]
    fn daily_cycle_shows_in_periodogram() {
        let grid = synth_market_volumes(5, 8, 2_000, &[5], 1.0, 2).unwrap();
        let p = periodogram(&grid, Activity::Aggregate).unwrap();
        let k = p.nearest_bin(1.0 / 2_000.0);
        assert_eq!(k, 8);
        assert!(p.power[k] > p.power[k - 1] && p.power[k] > p.power[k + 1]);
    }
}
