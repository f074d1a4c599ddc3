//! Fixed-width two's-complement bit-vector circuits, least significant
//! bit first.

use wmbmc_sat::Lit;

use super::circuit::{Circuit, FALSE, TRUE};

pub type Bv = Vec<Lit>;

impl Circuit {
    pub fn bv_const(&self, v: i64, width: usize) -> Bv {
        (0..width).map(|i| if (v >> i.min(63)) & 1 == 1 { TRUE } else { FALSE }).collect()
    }

    pub fn bv_fresh(&mut self, width: usize) -> Bv {
        (0..width).map(|_| self.fresh()).collect()
    }

    /// A boolean as the integer 0 or 1.
    pub fn bv_bool(&self, b: Lit, width: usize) -> Bv {
        let mut v = vec![FALSE; width];
        v[0] = b;
        v
    }

    fn add_with_carry(&mut self, a: &[Lit], b: &[Lit], mut carry: Lit) -> Bv {
        assert_eq!(a.len(), b.len());
        let mut out = Vec::with_capacity(a.len());
        for (&x, &y) in a.iter().zip(b) {
            let p = self.xor(x, y);
            out.push(self.xor(p, carry));
            let g = self.and(x, y);
            let t = self.and(p, carry);
            carry = self.or(g, t);
        }
        out
    }

    pub fn bv_add(&mut self, a: &[Lit], b: &[Lit]) -> Bv {
        self.add_with_carry(a, b, FALSE)
    }

    pub fn bv_sub(&mut self, a: &[Lit], b: &[Lit]) -> Bv {
        let nb: Bv = b.iter().map(|&l| !l).collect();
        self.add_with_carry(a, &nb, TRUE)
    }

    pub fn bv_neg(&mut self, a: &[Lit]) -> Bv {
        let zero = self.bv_const(0, a.len());
        self.bv_sub(&zero, a)
    }

    /// Shift-and-add multiplication, truncated to the operand width.
    pub fn bv_mul(&mut self, a: &[Lit], b: &[Lit]) -> Bv {
        let w = a.len();
        let mut acc = self.bv_const(0, w);
        for (i, &bi) in b.iter().enumerate() {
            let partial: Bv = (0..w).map(|j| if j < i { FALSE } else { self.and(a[j - i], bi) }).collect();
            acc = self.bv_add(&acc, &partial);
        }
        acc
    }

    pub fn bv_eq(&mut self, a: &[Lit], b: &[Lit]) -> Lit {
        assert_eq!(a.len(), b.len());
        let same: Vec<Lit> = a.iter().zip(b).map(|(&x, &y)| self.iff(x, y)).collect();
        self.and_all(&same)
    }

    /// Unsigned `a < b`.
    pub fn bv_ult(&mut self, a: &[Lit], b: &[Lit]) -> Lit {
        assert_eq!(a.len(), b.len());
        let mut lt = FALSE;
        for (&x, &y) in a.iter().zip(b) {
            // the most significant differing bit decides
            let differ = self.xor(x, y);
            lt = self.ite(differ, y, lt);
        }
        lt
    }

    /// Signed `a < b`: unsigned comparison with the sign bits flipped.
    pub fn bv_slt(&mut self, a: &[Lit], b: &[Lit]) -> Lit {
        let flip = |v: &[Lit]| {
            let mut v = v.to_vec();
            let last = v.len() - 1;
            v[last] = !v[last];
            v
        };
        self.bv_ult(&flip(a), &flip(b))
    }

    pub fn bv_ite(&mut self, c: Lit, t: &[Lit], e: &[Lit]) -> Bv {
        t.iter().zip(e).map(|(&x, &y)| self.ite(c, x, y)).collect()
    }

    pub fn bv_nonzero(&mut self, a: &[Lit]) -> Lit {
        self.or_all(a)
    }
}

/// Unsigned value of a bit-vector under a model.
pub fn eval_unsigned(bits: &[Lit], model: &[bool]) -> u64 {
    bits.iter().enumerate().fold(0, |acc, (i, l)| acc | (l.eval(model) as u64) << i)
}

/// Two's-complement value of a bit-vector under a model.
pub fn eval_signed(bits: &[Lit], model: &[bool]) -> i64 {
    let u = eval_unsigned(bits, model) as i128;
    crate::arith::wrap(u, bits.len() as u32)
}
