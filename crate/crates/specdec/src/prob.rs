//! Small numeric helpers shared across the crate.

use rand::Rng;

use crate::model::TokenId;

/// Compensated (Kahan) accumulator for long sums of small terms.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    carry: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let y = x - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum
    }
}

/// Ratio with the convention `0/0 = 1`.
///
/// Every acceptance rule in this crate funnels its probability ratio through
/// this helper so the convention lives in exactly one place. A positive
/// numerator over a zero denominator yields `+inf`, which the callers clamp
/// with `min(1, ..)`.
pub fn safe_ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        if num == 0.0 {
            1.0
        } else {
            f64::INFINITY
        }
    } else {
        num / den
    }
}

/// Total variation between two probability rows: `0.5 * sum |a - b|`.
pub fn tv_rows(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = KahanSum::new();
    for (x, y) in a.iter().zip(b.iter()) {
        acc.add((x - y).abs());
    }
    0.5 * acc.value()
}

/// Normalize `row` in place. Returns `false` when the row sums to zero.
pub(crate) fn normalize(row: &mut [f64]) -> bool {
    let mut acc = KahanSum::new();
    for &x in row.iter() {
        acc.add(x);
    }
    let sum = acc.value();
    if sum <= 0.0 || !sum.is_finite() {
        return false;
    }
    for x in row.iter_mut() {
        *x /= sum;
    }
    true
}

/// Mixed-radix index of a token sequence (big-endian, base `vocab`).
pub(crate) fn seq_index(seq: &[TokenId], vocab: usize) -> usize {
    let mut idx = 0usize;
    for t in seq {
        idx = idx * vocab + t.index();
    }
    idx
}

/// Inverse of [`seq_index`].
pub(crate) fn seq_from_index(mut idx: usize, vocab: usize, len: usize) -> Vec<TokenId> {
    let mut seq = vec![TokenId(0); len];
    for slot in seq.iter_mut().rev() {
        *slot = TokenId((idx % vocab) as u32);
        idx /= vocab;
    }
    seq
}

/// Inverse-CDF draw from a probability row using one uniform variate.
pub(crate) fn sample_index<R: Rng + ?Sized>(row: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut cum = 0.0;
    for (i, &p) in row.iter().enumerate() {
        cum += p;
        if u < cum {
            return i;
        }
    }
    // Rounding can leave `cum` marginally below one; fall back to the last
    // token that carries mass.
    row.iter()
        .rposition(|&p| p > 0.0)
        .expect("probability row has no mass")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn safe_ratio_convention() {
        assert_eq!(safe_ratio(0.0, 0.0), 1.0);
        assert_eq!(safe_ratio(0.3, 0.0), f64::INFINITY);
        assert_eq!(safe_ratio(0.1, 0.2), 0.5);
    }

    #[test]
    fn seq_index_round_trip() {
        let vocab = 3;
        for idx in 0..27 {
            let seq = seq_from_index(idx, vocab, 3);
            assert_eq!(seq_index(&seq, vocab), idx);
        }
    }

    #[test]
    fn kahan_handles_many_small_terms() {
        let mut acc = KahanSum::new();
        for _ in 0..1_000_000 {
            acc.add(1e-6);
        }
        assert!((acc.value() - 1.0).abs() < 1e-12);
    }
}
