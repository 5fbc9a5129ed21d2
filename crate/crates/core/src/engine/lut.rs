//! Piecewise-linear sigmoid and tanh over Q8.8 inputs.
//!
//! Each table holds 257 knots spaced 1/16 apart over [-8, 8]; inputs are
//! clamped to [-8, 8) and interpolated between neighbouring knots. Knot values
//! are the correctly rounded Q8.8 images of the exact functions.

/// Knot count, one more than the number of intervals.
pub const KNOTS: usize = 257;
const LO_RAW: i32 = -2048;
const HI_RAW: i32 = 2047;
const STEP_SHIFT: u32 = 4;

#[inline]
fn interp(table: &[i16; KNOTS], x: i32) -> i32 {
    let u = x.clamp(LO_RAW, HI_RAW) - LO_RAW;
    let i = (u >> STEP_SHIFT) as usize;
    let frac = u & ((1 << STEP_SHIFT) - 1);
    let (a, b) = (table[i] as i32, table[i + 1] as i32);
    a + (((b - a) * frac + (1 << (STEP_SHIFT - 1))) >> STEP_SHIFT)
}

/// Sigmoid of a Q8.8 value, result in Q8.8 within [0, 256].
#[inline]
pub fn sigmoid_q(x: i32) -> i32 {
    interp(&SIGMOID_KNOTS, x)
}

/// Tanh of a Q8.8 value, result in Q8.8 within [-256, 256].
#[inline]
pub fn tanh_q(x: i32) -> i32 {
    interp(&TANH_KNOTS, x)
}

#[rustfmt::skip]
pub(crate) const SIGMOID_KNOTS: [i16; KNOTS] = [
    0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0,
    0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 1, 1, 1,
    1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 2, 2,
    2, 2, 2, 2, 2, 2, 2, 3, 3, 3, 3, 3, 4, 4, 4, 4,
    5, 5, 5, 6, 6, 6, 7, 7, 8, 8, 8, 9, 10, 10, 11, 11,
    12, 13, 14, 15, 15, 16, 17, 18, 19, 21, 22, 23, 24, 26, 27, 29,
    31, 32, 34, 36, 38, 40, 42, 44, 47, 49, 52, 54, 57, 60, 63, 66,
    69, 72, 75, 79, 82, 86, 89, 93, 97, 100, 104, 108, 112, 116, 120, 124,
    128, 132, 136, 140, 144, 148, 152, 156, 159, 163, 167, 170, 174, 177, 181, 184,
    187, 190, 193, 196, 199, 202, 204, 207, 209, 212, 214, 216, 218, 220, 222, 224,
    225, 227, 229, 230, 232, 233, 234, 235, 237, 238, 239, 240, 241, 241, 242, 243,
    244, 245, 245, 246, 246, 247, 248, 248, 248, 249, 249, 250, 250, 250, 251, 251,
    251, 252, 252, 252, 252, 253, 253, 253, 253, 253, 254, 254, 254, 254, 254, 254,
    254, 254, 254, 255, 255, 255, 255, 255, 255, 255, 255, 255, 255, 255, 255, 255,
    255, 255, 255, 255, 256, 256, 256, 256, 256, 256, 256, 256, 256, 256, 256, 256,
    256, 256, 256, 256, 256, 256, 256, 256, 256, 256, 256, 256, 256, 256, 256, 256,
    256,
];

#[rustfmt::skip]
pub(crate) const TANH_KNOTS: [i16; KNOTS] = [
    -256, -256, -256, -256, -256, -256, -256, -256, -256, -256, -256, -256, -256, -256, -256, -256,
    -256, -256, -256, -256, -256, -256, -256, -256, -256, -256, -256, -256, -256, -256, -256, -256,
    -256, -256, -256, -256, -256, -256, -256, -256, -256, -256, -256, -256, -256, -256, -256, -256,
    -256, -256, -256, -256, -256, -256, -256, -256, -256, -256, -256, -256, -256, -256, -256, -256,
    -256, -256, -256, -256, -256, -256, -256, -256, -256, -255, -255, -255, -255, -255, -255, -255,
    -255, -255, -254, -254, -254, -254, -253, -253, -253, -252, -252, -251, -250, -250, -249, -248,
    -247, -246, -244, -243, -241, -239, -237, -234, -232, -229, -225, -221, -217, -212, -207, -201,
    -195, -188, -180, -172, -163, -153, -142, -131, -118, -105, -92, -77, -63, -47, -32, -16,
    0, 16, 32, 47, 63, 77, 92, 105, 118, 131, 142, 153, 163, 172, 180, 188,
    195, 201, 207, 212, 217, 221, 225, 229, 232, 234, 237, 239, 241, 243, 244, 246,
    247, 248, 249, 250, 250, 251, 252, 252, 253, 253, 253, 254, 254, 254, 254, 255,
    255, 255, 255, 255, 255, 255, 255, 255, 256, 256, 256, 256, 256, 256, 256, 256,
    256, 256, 256, 256, 256, 256, 256, 256, 256, 256, 256, 256, 256, 256, 256, 256,
    256, 256, 256, 256, 256, 256, 256, 256, 256, 256, 256, 256, 256, 256, 256, 256,
    256, 256, 256, 256, 256, 256, 256, 256, 256, 256, 256, 256, 256, 256, 256, 256,
    256, 256, 256, 256, 256, 256, 256, 256, 256, 256, 256, 256, 256, 256, 256, 256,
    256,
];

#[cfg(test)]
mod tests {
    use super::*;

    fn knot_x(k: usize) -> f64 {
        -8.0 + k as f64 / 16.0
    }

    #[test]
    fn knots_match_float_functions() {
        for k in 0..KNOTS {
            let x = knot_x(k);
            let s = (256.0 / (1.0 + (-x).exp())).round_ties_even() as i16;
            let t = (256.0 * x.tanh()).round_ties_even() as i16;
            assert_eq!(SIGMOID_KNOTS[k], s, "sigmoid knot {k}");
            assert_eq!(TANH_KNOTS[k], t, "tanh knot {k}");
        }
    }

    #[test]
    fn knots_hit_exactly() {
        assert_eq!(sigmoid_q(0), 128);
        assert_eq!(tanh_q(0), 0);
        assert_eq!(sigmoid_q(-2048), SIGMOID_KNOTS[0] as i32);
        assert_eq!(tanh_q(256), TANH_KNOTS[144] as i32);
    }

    #[test]
    fn saturates_outside_range() {
        assert_eq!(sigmoid_q(i32::MAX / 2), sigmoid_q(2047));
        assert_eq!(sigmoid_q(-100_000), 0);
        assert_eq!(tanh_q(100_000), 256);
        assert_eq!(tanh_q(-100_000), -256);
    }

    #[test]
    fn monotone_and_close_to_float() {
        let (mut ps, mut pt) = (i32::MIN, i32::MIN);
        for x in -2100..2100 {
            let (s, t) = (sigmoid_q(x), tanh_q(x));
            assert!(s >= ps && t >= pt);
            ps = s;
            pt = t;
            let xf = x as f64 / 256.0;
            assert!((s as f64 / 256.0 - 1.0 / (1.0 + (-xf).exp())).abs() < 3.0 / 256.0);
            assert!((t as f64 / 256.0 - xf.tanh()).abs() < 3.0 / 256.0);
        }
    }

    #[test]
    fn odd_symmetry() {
        for x in -2047..2047 {
            assert!((tanh_q(x) + tanh_q(-x)).abs() <= 1);
            assert!((sigmoid_q(x) + sigmoid_q(-x) - 256).abs() <= 1);
        }
    }
}
