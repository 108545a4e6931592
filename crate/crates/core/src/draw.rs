//! Keyed uniform draws.
//!
//! Every stochastic sampling decision in the engine is a pure function of a
//! run seed and the identity of the decision (member, program, day, purpose).
//! This keeps selections independent of iteration order, so a day's members
//! can be processed in any order or in parallel and still reproduce exactly.

/// Purpose tags keep draws for different decisions on the same key independent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Selection = 1,
    Overlap = 2,
    Activity = 3,
    Trigger = 4,
    Response = 5,
    Score = 6,
    Generic = 7,
}

#[inline]
pub(crate) fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes the seed, the stream tag and each key word into one 64-bit value.
#[inline]
pub fn keyed_u64(seed: u64, stream: Stream, keys: &[u64]) -> u64 {
    let mut h = splitmix64(seed ^ (stream as u64).wrapping_mul(0xA24B_AED4_963E_E407));
    for &k in keys {
        h = splitmix64(h ^ k);
    }
    h
}

/// Uniform on `[0, 1)` with 53 bits of precision.
#[inline]
pub fn keyed_unit(seed: u64, stream: Stream, keys: &[u64]) -> f64 {
    (keyed_u64(seed, stream, keys) >> 11) as f64 / (1u64 << 53) as f64
}

/// Bernoulli trial with success probability `p`.
#[inline]
pub fn keyed_bernoulli(seed: u64, stream: Stream, keys: &[u64], p: f64) -> bool {
    if p >= 1.0 {
        return true;
    }
    if p <= 0.0 {
        return false;
    }
    keyed_unit(seed, stream, keys) < p
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_key_same_draw() {
        let a = keyed_unit(9, Stream::Selection, &[1, 2, 3]);
        let b = keyed_unit(9, Stream::Selection, &[1, 2, 3]);
        assert_eq!(a.to_bits(), b.to_bits());
        assert!((0.0..1.0).contains(&a));
    }

    #[test]
    fn streams_and_seeds_differ() {
        let a = keyed_u64(9, Stream::Selection, &[1, 2, 3]);
        assert_ne!(a, keyed_u64(9, Stream::Overlap, &[1, 2, 3]));
        assert_ne!(a, keyed_u64(10, Stream::Selection, &[1, 2, 3]));
        assert_ne!(a, keyed_u64(9, Stream::Selection, &[1, 3, 2]));
    }

    #[test]
    fn bernoulli_rate_is_close() {
        let hits = (0..200_000u64)
            .filter(|&i| keyed_bernoulli(1, Stream::Generic, &[i], 0.3))
            .count();
        let freq = hits as f64 / 200_000.0;
        // 3 binomial SEs
        assert!((freq - 0.3).abs() < 3.0 * (0.3f64 * 0.7 / 200_000.0).sqrt());
    }
}
