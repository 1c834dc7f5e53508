//! Ising samplers with known couplings.
//!
//! All three samplers use the Glauber rule: a spin being updated becomes +1
//! with probability `(1 + tanh(H_i)) / 2`, where `H_i = h_i + Σ_j J_ij s_j`.
//! The equilibrium sampler leaves out `J_ii` (a constant in the energy); the
//! kinetic samplers use the full row.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};

use crate::binarize::SpinMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct IsingModel {
    pub j: DMatrix<f64>,
    pub h: DVector<f64>,
    pub seed: u64,
}

impl IsingModel {
    pub fn new(j: DMatrix<f64>, h: DVector<f64>, seed: u64) -> Result<Self> {
        if !j.is_square() || j.nrows() != h.len() || h.is_empty() {
            return Err(Error::validation(format!(
                "couplings {:?} and fields of length {} do not match",
                j.shape(),
                h.len()
            )));
        }
        if j.iter().chain(h.iter()).any(|v| !v.is_finite()) {
            return Err(Error::validation("model parameters must be finite"));
        }
        Ok(Self { j, h, seed })
    }

    /// Zero fields, zero diagonal, off-diagonal couplings i.i.d.
    /// normal(0, `std`). Couplings are drawn from a stream derived from `seed`.
    pub fn gaussian(n: usize, std: f64, symmetric: bool, seed: u64) -> Result<Self> {
        let normal = Normal::new(0.0, std).map_err(|e| Error::validation(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
        let mut j = DMatrix::zeros(n, n);
        for a in 0..n {
            for b in 0..n {
                if a == b || (symmetric && b < a) {
                    continue;
                }
                let v = normal.sample(&mut rng);
                j[(a, b)] = v;
                if symmetric {
                    j[(b, a)] = v;
                }
            }
        }
        Self::new(j, DVector::zeros(n), seed)
    }

    pub fn n(&self) -> usize {
        self.h.len()
    }

    fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }

    fn local_field(&self, s: &[i8], i: usize, skip_self: bool) -> f64 {
        let mut f = self.h[i];
        for (k, &sk) in s.iter().enumerate() {
            if !(skip_self && k == i) {
                f += self.j[(i, k)] * sk as f64;
            }
        }
        f
    }
}

/// Glauber probability of the up state in local field `field`.
fn up_probability(field: f64) -> f64 {
    0.5 * (1.0 + field.tanh())
}

fn random_state(n: usize, rng: &mut impl Rng) -> Vec<i8> {
    (0..n).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect()
}

fn draw(field: f64, rng: &mut impl Rng) -> i8 {
    if rng.random::<f64>() < up_probability(field) {
        1
    } else {
        -1
    }
}

/// Heat-bath sampling of the Boltzmann distribution
/// `P(s) ∝ exp(Σ h_i s_i + Σ_{i<j} J_ij s_i s_j)`.
///
/// One sweep updates every spin once in index order; one sample is recorded
/// per sweep after the first `burn_in` sweeps.
pub fn sample_equilibrium_glauber(model: &IsingModel, sweeps: usize, burn_in: usize) -> Result<SpinMatrix> {
    if (&model.j - model.j.transpose()).amax() > 0.0 {
        return Err(Error::validation("equilibrium sampling needs symmetric couplings"));
    }
    if sweeps <= burn_in {
        return Err(Error::validation(format!("sweeps ({sweeps}) must exceed burn-in ({burn_in})")));
    }
    let n = model.n();
    let mut rng = model.rng();
    let mut s = random_state(n, &mut rng);
    let mut out = Vec::with_capacity((sweeps - burn_in) * n);
    for sweep in 0..sweeps {
        for i in 0..n {
            s[i] = draw(model.local_field(&s, i, true), &mut rng);
        }
        if sweep >= burn_in {
            out.extend_from_slice(&s);
        }
    }
    SpinMatrix::trajectory(n, &out)
}

/// Parallel-update kinetic Ising trajectory of `steps` configurations, each
/// drawn from the previous one.
pub fn simulate_synchronous(model: &IsingModel, steps: usize) -> Result<SpinMatrix> {
    if steps == 0 {
        return Err(Error::validation("need at least one step"));
    }
    let n = model.n();
    let mut rng = model.rng();
    let mut s = random_state(n, &mut rng);
    let mut next = vec![0i8; n];
    let mut out = Vec::with_capacity(steps * n);
    for _ in 0..steps {
        for (i, slot) in next.iter_mut().enumerate() {
            *slot = draw(model.local_field(&s, i, false), &mut rng);
        }
        std::mem::swap(&mut s, &mut next);
        out.extend_from_slice(&s);
    }
    SpinMatrix::trajectory(n, &out)
}

/// Continuous-time Glauber dynamics: each spin has an independent unit-rate
/// Poisson clock. Event times are simulated exactly and the state is recorded
/// at `k * sample_interval` for `k = 1..=floor(total_time / sample_interval)`.
pub fn simulate_asynchronous(model: &IsingModel, total_time: f64, sample_interval: f64) -> Result<SpinMatrix> {
    if total_time.is_nan() || total_time <= 0.0 || sample_interval.is_nan() || sample_interval <= 0.0 {
        return Err(Error::validation("total time and sample interval must be positive"));
    }
    let samples = (total_time / sample_interval).floor() as usize;
    if samples == 0 {
        return Err(Error::validation("sample interval exceeds total time"));
    }
    let n = model.n();
    let mut rng = model.rng();
    let clock = Exp::new(n as f64).map_err(|e| Error::validation(e.to_string()))?;
    let mut s = random_state(n, &mut rng);
    let mut out = Vec::with_capacity(samples * n);
    let mut t = 0.0;
    let mut k = 1;
    while k <= samples {
        let next_event = t + clock.sample(&mut rng);
        while k <= samples && (k as f64) * sample_interval < next_event {
            out.extend_from_slice(&s);
            k += 1;
        }
        t = next_event;
        let i = rng.random_range(0..n);
        s[i] = draw(model.local_field(&s, i, false), &mut rng);
    }
    SpinMatrix::trajectory(n, &out)
}
