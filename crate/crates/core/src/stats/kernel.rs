//! Exact ±1 product sums over bit-packed spin columns.
//!
//! For two ±1 sequences of length L, `Σ a_t b_t = L - 2 * popcount(a XOR b)`
//! when +1 is encoded as a set bit. Every sum here is an exact integer.

use rayon::prelude::*;

use crate::binarize::{SpinMatrix, WORD_BITS};

/// `Σ_days Σ_t s_i(t + lag) s_j(t)` for every ordered pair, with both samples
/// inside the same day.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProductSums {
    n: usize,
    /// Row-major `n x n`; entry `(i, j)` pairs the lagged `i` with `j`.
    sums: Vec<i64>,
    /// Number of `(t + lag, t)` sample pairs summed per entry.
    pairs: usize,
}

impl ProductSums {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> i64 {
        self.sums[i * self.n + j]
    }

    pub fn pairs(&self) -> usize {
        self.pairs
    }

    pub fn as_slice(&self) -> &[i64] {
        &self.sums
    }
}

/// Computes lag-`lag` product sums. `lag` is in samples and must be smaller
/// than the number of samples per day (checked by the caller).
pub fn pair_product_sums(sm: &SpinMatrix, lag: usize) -> ProductSums {
    let n = sm.n_stocks();
    let per_day = sm.samples_per_day() - lag;
    let pairs = sm.days() * per_day;

    let sums = if lag == 0 {
        let upper: Vec<Vec<i64>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let a = sm.packed(i);
                (i..n)
                    .map(|j| pairs as i64 - 2 * xor_popcount(a, sm.packed(j)) as i64)
                    .collect()
            })
            .collect();
        let mut sums = vec![0; n * n];
        for (i, row) in upper.iter().enumerate() {
            for (k, &v) in row.iter().enumerate() {
                let j = i + k;
                sums[i * n + j] = v;
                sums[j * n + i] = v;
            }
        }
        sums
    } else {
        let lead: Vec<Vec<u64>> = (0..n).into_par_iter().map(|i| aligned_column(sm, i, lag, per_day)).collect();
        let trail: Vec<Vec<u64>> = (0..n).into_par_iter().map(|j| aligned_column(sm, j, 0, per_day)).collect();
        lead.par_iter()
            .flat_map_iter(|a| {
                trail
                    .iter()
                    .map(move |b| pairs as i64 - 2 * xor_popcount(a, b) as i64)
            })
            .collect()
    };
    ProductSums { n, sums, pairs }
}

/// Column `stock` with every day shifted so that bit `t` holds sample
/// `t + shift`, and bits at `t >= keep` cleared.
fn aligned_column(sm: &SpinMatrix, stock: usize, shift: usize, keep: usize) -> Vec<u64> {
    let wpd = sm.words_per_day();
    let mut out = vec![0u64; sm.days() * wpd];
    for (d, dst) in out.chunks_exact_mut(wpd).enumerate() {
        shift_right(sm.packed_day(stock, d), shift, dst);
        clear_from(dst, keep);
    }
    out
}

/// `dst[t] = src[t + shift]` over a little-endian bit vector; vacated high
/// bits become zero.
fn shift_right(src: &[u64], shift: usize, dst: &mut [u64]) {
    let (q, r) = (shift / WORD_BITS, shift % WORD_BITS);
    for (w, out) in dst.iter_mut().enumerate() {
        let lo = src.get(w + q).copied().unwrap_or(0);
        *out = if r == 0 {
            lo
        } else {
            let hi = src.get(w + q + 1).copied().unwrap_or(0);
            (lo >> r) | (hi << (WORD_BITS - r))
        };
    }
}

/// Clears bits `keep..` of a bit vector.
fn clear_from(words: &mut [u64], keep: usize) {
    let (q, r) = (keep / WORD_BITS, keep % WORD_BITS);
    if q < words.len() {
        words[q] &= (1u64 << r).wrapping_sub(1);
        for w in &mut words[q + 1..] {
            *w = 0;
        }
    }
}

/// `popcount(a XOR b)` over two equal-length word slices.
pub fn xor_popcount(a: &[u64], b: &[u64]) -> u64 {
    debug_assert_eq!(a.len(), b.len());
    #[cfg(target_arch = "x86_64")]
    {
        if std::arch::is_x86_feature_detected!("popcnt") {
            // SAFETY: the CPU supports POPCNT, checked just above.
            return unsafe { xor_popcount_hw(a, b) };
        }
    }
    xor_popcount_portable(a, b)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "popcnt")]
unsafe fn xor_popcount_hw(a: &[u64], b: &[u64]) -> u64 {
    xor_popcount_portable(a, b)
}

#[inline(always)]
fn xor_popcount_portable(a: &[u64], b: &[u64]) -> u64 {
    a.iter().zip(b).map(|(x, y)| (x ^ y).count_ones() as u64).sum()
}
