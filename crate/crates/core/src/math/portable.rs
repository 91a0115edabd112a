//! Bit-stable f64 helpers for the simulator.
//!
//! `libm` implementations of sin/ln differ in the last ulps between
//! platforms and versions, which would make "same seed, same bytes"
//! trace generation platform-dependent. These variants use only IEEE
//! add/mul/divide/sqrt-free arithmetic and therefore produce identical
//! bits everywhere. Accuracy is ~1e-11 absolute for `sin` (arguments up
//! to a few hundred) and ~1 ulp-ish for `ln` on (0, 1e300).

const TWO_PI_HI: f64 = 6.283185307179586;
const TWO_PI_LO: f64 = 2.449293598294707e-16;
const PI: f64 = core::f64::consts::PI;
const FRAC_PI_2: f64 = core::f64::consts::FRAC_PI_2;
const LN_2_HI: f64 = 6.93147180369123816490e-01;
const LN_2_LO: f64 = 1.90821492927058770002e-10;
const SQRT_2: f64 = core::f64::consts::SQRT_2;

/// sin(x) via 2π range reduction and an odd Taylor polynomial on [-π/2, π/2].
pub fn sin(x: f64) -> f64 {
    // reduce to r in [-π, π]
    let k = (x / TWO_PI_HI).round();
    let mut r = x - k * TWO_PI_HI - k * TWO_PI_LO;
    // fold into [-π/2, π/2]
    if r > FRAC_PI_2 {
        r = PI - r;
    } else if r < -FRAC_PI_2 {
        r = -PI - r;
    }
    let r2 = r * r;
    // 1/3!, 1/5!, ... 1/15!
    let p = 1.0
        + r2 * (-1.0 / 6.0
            + r2 * (1.0 / 120.0
                + r2 * (-1.0 / 5040.0
                    + r2 * (1.0 / 362_880.0
                        + r2 * (-1.0 / 39_916_800.0
                            + r2 * (1.0 / 6_227_020_800.0 + r2 * (-1.0 / 1_307_674_368_000.0)))))));
    r * p
}

/// Natural log via exponent extraction and the atanh series on the mantissa.
pub fn ln(x: f64) -> f64 {
    if x <= 0.0 {
        return if x == 0.0 { f64::NEG_INFINITY } else { f64::NAN };
    }
    let mut x = x;
    let mut shift = 0i64;
    if x < f64::MIN_POSITIVE {
        // scale subnormals into the normal range
        x *= 9007199254740992.0; // 2^53
        shift = -53;
    }
    let bits = x.to_bits();
    let mut e = ((bits >> 52) & 0x7ff) as i64 - 1023 + shift;
    let mut m = f64::from_bits((bits & 0x000f_ffff_ffff_ffff) | 0x3ff0_0000_0000_0000);
    if m > SQRT_2 {
        m *= 0.5;
        e += 1;
    }
    // ln(m) = 2 atanh(t), t = (m-1)/(m+1), |t| <= 3-2√2 ≈ 0.1716
    let t = (m - 1.0) / (m + 1.0);
    let t2 = t * t;
    let series = 2.0
        * t
        * (1.0
            + t2 * (1.0 / 3.0
                + t2 * (1.0 / 5.0
                    + t2 * (1.0 / 7.0
                        + t2 * (1.0 / 9.0
                            + t2 * (1.0 / 11.0
                                + t2 * (1.0 / 13.0
                                    + t2 * (1.0 / 15.0
                                        + t2 * (1.0 / 17.0
                                            + t2 * (1.0 / 19.0 + t2 * (1.0 / 21.0)))))))))));
    let ef = e as f64;
    ef * LN_2_HI + (ef * LN_2_LO + series)
}

/// Maps 64 random bits to a float in [0, 1) with 53-bit resolution.
pub fn unit_half_open(bits: u64) -> f64 {
    (bits >> 11) as f64 * (1.0 / 9007199254740992.0)
}

/// Maps 64 random bits to a float in (0, 1]; safe as a log argument.
pub fn unit_open_closed(bits: u64) -> f64 {
    ((bits >> 11) + 1) as f64 * (1.0 / 9007199254740992.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sin_matches_std_on_simulator_range() {
        let mut worst = 0.0f64;
        for i in 0..20_000 {
            let x = (i as f64 - 10_000.0) * 0.013;
            let err = (sin(x) - x.sin()).abs();
            worst = worst.max(err);
        }
        assert!(worst < 5e-11, "worst sin error {worst}");
    }

    #[test]
    fn ln_matches_std() {
        let mut worst = 0.0f64;
        for i in 1..=100_000u64 {
            let x = i as f64 / 1000.0;
            let err = (ln(x) - x.ln()).abs() / x.ln().abs().max(1e-30);
            worst = worst.max(err);
        }
        // also unit-interval arguments, the jitter path
        for i in 1..=10_000u64 {
            let x = i as f64 / 10_000.0;
            let err = (ln(x) - x.ln()).abs();
            worst = worst.max(err);
        }
        assert!(worst < 1e-13, "worst ln error {worst}");
    }

    #[test]
    fn unit_maps_are_in_range() {
        assert_eq!(unit_half_open(0), 0.0);
        assert!(unit_half_open(u64::MAX) < 1.0);
        assert!(unit_open_closed(0) > 0.0);
        assert_eq!(unit_open_closed(u64::MAX), 1.0);
    }
}
