//! Phase kernel shared by channel synthesis and the estimator.

// Polynomial coefficients are kept as published.
#![allow(clippy::excessive_precision)]

use std::f64::consts::FRAC_2_PI;

// π/2 split in two parts (fdlibm): the first has 33 significant bits so that
// `n * PIO2_HI` is exact for |n| < 2^20.
const PIO2_HI: f64 = 1.570_796_326_734_125_614_17e+00;
const PIO2_LO: f64 = 6.077_100_506_506_192_249_32e-11;

const S1: f64 = -1.666_666_666_666_663_072_95e-1;
const S2: f64 = 8.333_333_333_322_118_588_78e-3;
const S3: f64 = -1.984_126_982_958_953_859_96e-4;
const S4: f64 = 2.755_731_362_138_572_452_13e-6;
const S5: f64 = -2.505_074_776_285_780_728_66e-8;
const S6: f64 = 1.589_623_015_765_465_680_60e-10;

const C1: f64 = 4.166_666_666_666_659_292_18e-2;
const C2: f64 = -1.388_888_888_887_305_641_16e-3;
const C3: f64 = 2.480_158_728_885_170_453_48e-5;
const C4: f64 = -2.755_731_417_929_673_881_12e-7;
const C5: f64 = 2.087_570_084_197_473_167_78e-9;
const C6: f64 = -1.135_853_652_138_768_173_00e-11;

/// `1.5·2⁵²`: adding and subtracting it rounds to the nearest integer, and
/// the low mantissa bits of the sum hold that integer.
const ROUND_MAGIC: f64 = 6_755_399_441_055_744.0;

/// `(sin x, cos x)` for `|x| < 1.6e6`.
///
/// The argument is reduced modulo π/2 with a two-part constant before the
/// minimax polynomials are applied, so accuracy does not degrade for the
/// several-hundred-radian element phases of a large array. Branch-free so
/// that element loops vectorize; the result does not depend on whether they do.
#[inline(always)]
pub fn sin_cos(x: f64) -> (f64, f64) {
    debug_assert!(x.abs() < 1.6e6, "phase {x} outside the reduction range");
    let shifted = x * FRAC_2_PI + ROUND_MAGIC;
    let quadrant = shifted.to_bits();
    let n = shifted - ROUND_MAGIC;
    let y = (x - n * PIO2_HI) - n * PIO2_LO;
    let z = y * y;
    let s = y + y * z * (S1 + z * (S2 + z * (S3 + z * (S4 + z * (S5 + z * S6)))));
    let c = 1.0 - 0.5 * z + z * z * (C1 + z * (C2 + z * (C3 + z * (C4 + z * (C5 + z * C6)))));
    // Quadrant q: sin x = [s, c, −s, −c][q], cos x = [c, −s, −c, s][q].
    let swap = 0u64.wrapping_sub(quadrant & 1);
    let (sb, cb) = (s.to_bits(), c.to_bits());
    let sin_bits = (sb & !swap) | (cb & swap);
    let cos_bits = (cb & !swap) | (sb & swap);
    let sin_sign = (quadrant & 2) << 62;
    let cos_sign = ((quadrant + 1) & 2) << 62;
    (f64::from_bits(sin_bits ^ sin_sign), f64::from_bits(cos_bits ^ cos_sign))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn quadrants() {
        for k in -8..8 {
            let x = k as f64 * std::f64::consts::FRAC_PI_2;
            let (s, c) = sin_cos(x);
            assert!((s - x.sin()).abs() < 1e-15 && (c - x.cos()).abs() < 1e-15, "{x}");
        }
    }

    proptest! {
        #[test]
        fn matches_libm(x in -2.0e4f64..2.0e4) {
            let (s, c) = sin_cos(x);
            prop_assert!((s - x.sin()).abs() < 4e-15);
            prop_assert!((c - x.cos()).abs() < 4e-15);
        }
    }
}
