//! Counter-based random variate generation.
//!
//! Every variate in the crate is a pure function of a key
//! `(seed, stream, row, column)`. There is no generator state to carry,
//! so a matrix of random components can be filled in any order (or in
//! parallel) and still come out bit-identical, and a simulation schedule
//! can be replayed from nothing but the seed and the stream labels.
//!
//! Streams are derived by [`chain`], which folds context words (replication
//! index, algorithm tag, iteration number, ...) into a single 64-bit stream
//! id. Distinct contexts get statistically independent sequences.

/// 64-bit finalizer with full avalanche (the SplitMix64 mixing function).
#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

const CHAIN_INIT: u64 = 0x243f_6a88_85a3_08d3;
const WORD_MUL: u64 = 0x9e37_79b9_7f4a_7c15;
const WORD_ADD: u64 = 0x6a09_e667_f3bc_c909;

/// Absorb one context word into a running hash state.
#[inline]
fn absorb(h: u64, word: u64) -> u64 {
    mix64(h ^ word.wrapping_mul(WORD_MUL).wrapping_add(WORD_ADD))
}

/// Fold context words into a stream identifier.
///
/// `chain(&[a, b])` and `chain(&[b, a])` differ, as do prefixes of different
/// lengths, so nested schedules (replication -> algorithm -> iteration) can
/// derive collision-free streams without coordination.
pub fn chain(parts: &[u64]) -> u64 {
    parts.iter().fold(CHAIN_INIT, |h, &w| absorb(h, w))
}

/// Raw 64 uniform bits for the cell `(row, col)` of stream `(seed, stream)`.
#[inline]
pub fn cell_bits(seed: u64, stream: u64, row: u64, col: u64) -> u64 {
    absorb(absorb(absorb(absorb(CHAIN_INIT, seed), stream), row), col)
}

/// Uniform variate strictly inside (0, 1).
#[inline]
pub fn cell_uniform(seed: u64, stream: u64, row: u64, col: u64) -> f64 {
    // 53 bits, centered on the cell midpoint: never exactly 0 or 1.
    ((cell_bits(seed, stream, row, col) >> 11) as f64 + 0.5) * (1.0 / 9_007_199_254_740_992.0)
}

/// Standard normal variate for a cell, via the inverse CDF.
#[inline]
pub fn cell_normal(seed: u64, stream: u64, row: u64, col: u64) -> f64 {
    inverse_normal_cdf(cell_uniform(seed, stream, row, col))
}

/// Rademacher variate (-1.0 or +1.0 with equal probability).
#[inline]
pub fn cell_sign(seed: u64, stream: u64, row: u64, col: u64) -> f64 {
    if cell_bits(seed, stream, row, col) & 1 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Inverse of the standard normal CDF (Wichura's PPND16 rational
/// approximation, accurate to about 1e-15 over (0, 1)).
#[allow(clippy::excessive_precision)]
pub fn inverse_normal_cdf(p: f64) -> f64 {
    debug_assert!(p > 0.0 && p < 1.0, "inverse_normal_cdf needs p in (0,1)");
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        let num = (((((((2.5090809287301226727e3 * r + 3.3430575583588128105e4) * r
            + 6.7265770927008700853e4)
            * r
            + 4.5921953931549871457e4)
            * r
            + 1.3731693765509461125e4)
            * r
            + 1.9715909503065514427e3)
            * r
            + 1.3314166789178437745e2)
            * r
            + 3.3871328727963666080)
            * q;
        let den = ((((((5.2264952788528545610e3 * r + 2.8729085735721942674e4) * r
            + 3.9307895800092710610e4)
            * r
            + 2.1213794301586595867e4)
            * r
            + 5.3941960214247511077e3)
            * r
            + 6.8718700749205790830e2)
            * r
            + 4.2313330701600911252e1)
            * r
            + 1.0;
        return num / den;
    }
    let r = if q < 0.0 { p } else { 1.0 - p };
    let mut r = (-r.ln()).sqrt();
    let val = if r <= 5.0 {
        r -= 1.6;
        let num = ((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r
            + 2.41780725177450611770e-1)
            * r
            + 1.27045825245236838258)
            * r
            + 3.64784832476320460504)
            * r
            + 5.76949722146069140550)
            * r
            + 4.63033784615654529590)
            * r
            + 1.42343711074968357734;
        let den = (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r
            + 1.51986665636164571966e-2)
            * r
            + 1.48103976427480074590e-1)
            * r
            + 6.89767334985100004550e-1)
            * r
            + 1.67638483018380384940)
            * r
            + 2.05319162663775882187)
            * r)
            + 1.0;
        num / den
    } else {
        r -= 5.0;
        let num = ((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r
            + 1.24266094738807843860e-3)
            * r
            + 2.65321895265761230930e-2)
            * r
            + 2.96560571828504891230e-1)
            * r
            + 1.78482653991729133580)
            * r
            + 5.46378491116411436990)
            * r
            + 6.65790464350110377720;
        let den = (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r
            + 1.84631831751005468180e-6)
            * r
            + 7.86869131145613259100e-4)
            * r
            + 1.48753612908506148525e-2)
            * r
            + 1.36929880922735805310e-1)
            * r
            + 5.99832206555887937690e-1)
            * r)
            + 1.0;
        num / den
    };
    if q < 0.0 {
        -val
    } else {
        val
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chain_is_order_and_length_sensitive() {
        assert_ne!(chain(&[1, 2]), chain(&[2, 1]));
        assert_ne!(chain(&[1]), chain(&[1, 0]));
        assert_ne!(chain(&[0]), chain(&[]));
        assert_eq!(chain(&[7, 9, 3]), chain(&[7, 9, 3]));
    }

    #[test]
    fn cells_are_deterministic_and_distinct() {
        let a = cell_bits(1, 2, 3, 4);
        assert_eq!(a, cell_bits(1, 2, 3, 4));
        assert_ne!(a, cell_bits(1, 2, 4, 3));
        assert_ne!(a, cell_bits(2, 1, 3, 4));
    }

    #[test]
    fn uniforms_strictly_inside_unit_interval() {
        for i in 0..10_000 {
            let u = cell_uniform(42, 7, i, 0);
            assert!(u > 0.0 && u < 1.0);
        }
    }

    #[test]
    fn inverse_normal_cdf_matches_reference_points() {
        // Reference values for Phi^{-1} at round probabilities.
        assert!((inverse_normal_cdf(0.5) - 0.0).abs() < 1e-15);
        assert!((inverse_normal_cdf(0.975) - 1.959_963_984_540_054).abs() < 1e-12);
        assert!((inverse_normal_cdf(0.025) + 1.959_963_984_540_054).abs() < 1e-12);
        assert!((inverse_normal_cdf(0.841_344_746_068_543) - 1.0).abs() < 1e-12);
        assert!((inverse_normal_cdf(1e-10) + 6.361_340_902_404_056).abs() < 1e-9);
    }

    #[test]
    fn normal_cells_have_unit_moments() {
        let n = 100_000;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for i in 0..n {
            let z = cell_normal(2024, 1, i, 0);
            sum += z;
            sumsq += z * z;
        }
        let mean = sum / n as f64;
        let var = sumsq / n as f64 - mean * mean;
        // 4-sigma CLT bands at n = 1e5.
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((var - 1.0).abs() < 0.02, "var {var}");
    }

    #[test]
    fn distinct_streams_are_empirically_uncorrelated() {
        let n = 1000;
        let xs: Vec<f64> = (0..n).map(|i| cell_normal(9, 1, i, 0)).collect();
        let ys: Vec<f64> = (0..n).map(|i| cell_normal(9, 2, i, 0)).collect();
        let mx = xs.iter().sum::<f64>() / n as f64;
        let my = ys.iter().sum::<f64>() / n as f64;
        let mut sxy = 0.0;
        let mut sxx = 0.0;
        let mut syy = 0.0;
        for i in 0..n as usize {
            sxy += (xs[i] - mx) * (ys[i] - my);
            sxx += (xs[i] - mx).powi(2);
            syy += (ys[i] - my).powi(2);
        }
        let r = sxy / (sxx * syy).sqrt();
        assert!(r.abs() < 0.1, "cross-stream correlation {r}");
    }

    #[test]
    fn signs_are_balanced() {
        let n = 10_000;
        let pos = (0..n).filter(|&i| cell_sign(5, 5, i, 0) > 0.0).count();
        let frac = pos as f64 / n as f64;
        assert!((frac - 0.5).abs() < 0.02, "sign fraction {frac}");
    }
}
