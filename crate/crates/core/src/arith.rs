//! Fixed-width two's-complement arithmetic shared by the concrete
//! evaluators (oracle, witness decoding, circuit tests).

use crate::frontend::{BinOp, UnOp};

/// Truncates `v` to `width` bits and sign-extends the result.
pub fn wrap(v: i128, width: u32) -> i64 {
    debug_assert!((1..=64).contains(&width));
    let shift = 128 - width;
    ((v << shift) >> shift) as i64
}

/// Smallest and largest representable value at `width` bits.
pub fn range(width: u32) -> (i64, i64) {
    (wrap(1i128 << (width - 1), width), wrap((1i128 << (width - 1)) - 1, width))
}

pub fn fits(v: i64, width: u32) -> bool {
    let (lo, hi) = range(width);
    (lo..=hi).contains(&v)
}

pub fn unop(op: UnOp, a: i64, width: u32) -> i64 {
    match op {
        UnOp::Not => (a == 0) as i64,
        UnOp::Neg => wrap(-(a as i128), width),
    }
}

pub fn binop(op: BinOp, a: i64, b: i64, width: u32) -> i64 {
    let (x, y) = (a as i128, b as i128);
    match op {
        BinOp::Add => wrap(x + y, width),
        BinOp::Sub => wrap(x - y, width),
        BinOp::Mul => wrap(x.wrapping_mul(y), width),
        BinOp::Eq => (a == b) as i64,
        BinOp::Ne => (a != b) as i64,
        BinOp::Lt => (a < b) as i64,
        BinOp::Le => (a <= b) as i64,
        BinOp::Gt => (a > b) as i64,
        BinOp::Ge => (a >= b) as i64,
        BinOp::And => (a != 0 && b != 0) as i64,
        BinOp::Or => (a != 0 || b != 0) as i64,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wraps_to_signed_range() {
        assert_eq!(wrap(127, 8), 127);
        assert_eq!(wrap(128, 8), -128);
        assert_eq!(wrap(255, 8), -1);
        assert_eq!(wrap(15, 4), -1);
        assert_eq!(range(4), (-8, 7));
        assert_eq!(range(64), (i64::MIN, i64::MAX));
    }

    #[test]
    fn multiplication_wraps() {
        assert_eq!(binop(BinOp::Mul, 3, 5, 8), 15);
        assert_eq!(binop(BinOp::Mul, 3, 5, 4), -1);
        assert_eq!(binop(BinOp::Mul, 100, 3, 8), 44);
        assert_eq!(binop(BinOp::Mul, i64::MAX, 2, 64), -2);
    }
}
