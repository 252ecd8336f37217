//! Exact sign evaluation for the small polynomial predicates behind pixel decisions.
//!
//! Lit/unlit choices in the renderer reduce to signs of expressions shaped like
//! `(a-b)*(c-d) - (e-f)*(g-h)` over f64 inputs. Plain f64 evaluation rounds, and a
//! rounded sign flips exactly at the touch configurations the renderer must get
//! right. This module keeps every intermediate as a floating-point expansion
//! (Dekker/Knuth error-free transformations), so returned signs are the
//! real-arithmetic signs of the given inputs. A certified f64 filter handles the
//! common well-separated case without the slow path.

/// Double-f64 value: `hi + lo` exactly, with `|lo| <= ulp(hi)/2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

impl Dd {
    pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };

    pub fn from_f64(x: f64) -> Dd {
        Dd { hi: x, lo: 0.0 }
    }

    /// Exact difference `a - b`.
    pub fn diff(a: f64, b: f64) -> Dd {
        let (hi, lo) = two_diff(a, b);
        Dd { hi, lo }
    }

    pub fn neg(self) -> Dd {
        Dd { hi: -self.hi, lo: -self.lo }
    }

    /// Sign of the exact value.
    pub fn sign(self) -> i8 {
        if self.hi != 0.0 {
            sign_f64(self.hi)
        } else {
            sign_f64(self.lo)
        }
    }

    pub fn approx(self) -> f64 {
        self.hi + self.lo
    }
}

fn sign_f64(x: f64) -> i8 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

/// Knuth two-sum: `a + b = hi + lo` exactly.
#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let hi = a + b;
    let bv = hi - a;
    let av = hi - bv;
    let lo = (a - av) + (b - bv);
    (hi, lo)
}

#[inline]
fn two_diff(a: f64, b: f64) -> (f64, f64) {
    let hi = a - b;
    let bv = a - hi;
    let av = hi + bv;
    let lo = (a - av) + (bv - b);
    (hi, lo)
}

/// Error-free product via fused multiply-add.
#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let hi = a * b;
    let lo = f64::mul_add(a, b, -hi);
    (hi, lo)
}

/// Nonoverlapping expansion, components in increasing magnitude order.
/// Capacity suffices for the difference of two products of `Dd` values.
#[derive(Clone, Copy, Debug)]
pub struct Expansion {
    comps: [f64; 24],
    len: usize,
}

impl Expansion {
    pub fn zero() -> Expansion {
        Expansion { comps: [0.0; 24], len: 0 }
    }

    fn push(&mut self, c: f64) {
        debug_assert!(self.len < self.comps.len());
        self.comps[self.len] = c;
        self.len += 1;
    }

    /// Shewchuk grow-expansion with zero elimination.
    fn add_scalar(&self, b: f64) -> Expansion {
        let mut out = Expansion::zero();
        let mut q = b;
        for i in 0..self.len {
            let (hi, lo) = two_sum(q, self.comps[i]);
            if lo != 0.0 {
                out.push(lo);
            }
            q = hi;
        }
        if q != 0.0 || out.len == 0 {
            out.push(q);
        }
        out
    }

    pub fn add(&self, other: &Expansion) -> Expansion {
        let mut acc = *self;
        for i in 0..other.len {
            acc = acc.add_scalar(other.comps[i]);
        }
        acc
    }

    pub fn neg(&self) -> Expansion {
        let mut out = *self;
        for i in 0..out.len {
            out.comps[i] = -out.comps[i];
        }
        out
    }

    /// Sign of the exact value: the largest-magnitude (last) nonzero component.
    pub fn sign(&self) -> i8 {
        for i in (0..self.len).rev() {
            if self.comps[i] != 0.0 {
                return sign_f64(self.comps[i]);
            }
        }
        0
    }

    pub fn approx(&self) -> f64 {
        let mut s = 0.0;
        for i in 0..self.len {
            s += self.comps[i];
        }
        s
    }
}

/// Exact product of two double-f64 values as an expansion (at most 8 components).
fn prod_dd(a: Dd, b: Dd) -> Expansion {
    let mut acc = Expansion::zero();
    for &(x, y) in &[(a.lo, b.lo), (a.lo, b.hi), (a.hi, b.lo), (a.hi, b.hi)] {
        if x == 0.0 || y == 0.0 {
            continue;
        }
        let (hi, lo) = two_prod(x, y);
        let mut term = Expansion::zero();
        if lo != 0.0 {
            term.push(lo);
        }
        term.push(hi);
        acc = acc.add(&term);
    }
    acc
}

/// Exact sign of `a*b - c*d` for double-f64 inputs. No fast path; callers on a
/// hot path should pre-filter with [`det2_sign`] style bounds.
pub fn sign_prod_diff(a: Dd, b: Dd, c: Dd, d: Dd) -> i8 {
    // Fast filter on the rounded values.
    let t1 = a.approx() * b.approx();
    let t2 = c.approx() * d.approx();
    let det = t1 - t2;
    // Each approx() has relative error <= 2^-53; the products and the final
    // subtraction add a few more ulps. 16 eps of the magnitude sum is a safe
    // certification threshold.
    let bound = 16.0 * f64::EPSILON * (t1.abs() + t2.abs());
    if det > bound {
        return 1;
    }
    if det < -bound {
        return -1;
    }
    prod_dd(a, b).add(&prod_dd(c, d).neg()).sign()
}

/// Exact sign of `(a-b)*(c-d) - (e-f)*(g-h)`.
#[allow(clippy::too_many_arguments)]
pub fn det2_sign(a: f64, b: f64, c: f64, d: f64, e: f64, f: f64, g: f64, h: f64) -> i8 {
    let da = a - b;
    let dc = c - d;
    let de = e - f;
    let dg = g - h;
    let t1 = da * dc;
    let t2 = de * dg;
    let det = t1 - t2;
    let bound = 16.0 * f64::EPSILON * (t1.abs() + t2.abs());
    if det > bound {
        return 1;
    }
    if det < -bound {
        return -1;
    }
    sign_prod_diff(Dd::diff(a, b), Dd::diff(c, d), Dd::diff(e, f), Dd::diff(g, h))
}

/// Exact sign of `a - b - c` (used for point-vs-diagonal side tests where `c`
/// is an integer-valued offset).
pub fn sign_diff3(a: f64, b: f64, c: f64) -> i8 {
    let d = Dd::diff(a, b);
    let mut e = Expansion::zero();
    if d.lo != 0.0 {
        e.push(d.lo);
    }
    e.push(d.hi);
    e.add_scalar(-c).sign()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::rngs::StdRng;
    use rand::{RngExt, SeedableRng};

    /// Exact i128 evaluation of (a-b)(c-d)-(e-f)(g-h) for inputs that are
    /// small multiples of 2^-12, so everything fits comfortably.
    fn exact_i128(vals: [i64; 8]) -> i128 {
        let [a, b, c, d, e, f, g, h] = vals.map(i128::from);
        (a - b) * (c - d) - (e - f) * (g - h)
    }

    fn to_f64(v: i64) -> f64 {
        v as f64 / 4096.0
    }

    proptest! {
        #[test]
        fn det2_matches_integer_arithmetic(vals in prop::array::uniform8(-(1i64 << 20)..(1i64 << 20))) {
            let exact = exact_i128(vals);
            let fs = vals.map(to_f64);
            let got = det2_sign(fs[0], fs[1], fs[2], fs[3], fs[4], fs[5], fs[6], fs[7]);
            let want = if exact > 0 { 1 } else if exact < 0 { -1 } else { 0 };
            prop_assert_eq!(got, want);
        }

        #[test]
        fn sign_diff3_matches_integer_arithmetic(
            a in -(1i64 << 20)..(1i64 << 20),
            b in -(1i64 << 20)..(1i64 << 20),
            c in -(1i64 << 8)..(1i64 << 8),
        ) {
            let exact = i128::from(a) - i128::from(b) - i128::from(c * 4096);
            let got = sign_diff3(to_f64(a), to_f64(b), c as f64);
            let want = if exact > 0 { 1 } else if exact < 0 { -1 } else { 0 };
            prop_assert_eq!(got, want);
        }
    }

    #[test]
    fn exact_tie_detected() {
        // (a-b)(c-d) == (e-f)(g-h) by construction: 3 * 10 == 5 * 6,
        // with the factors hidden behind cancellation-prone offsets.
        let big = 1.0e9;
        let s = det2_sign(big + 3.0, big, big + 10.0, big, big + 5.0, big, big + 6.0, big);
        assert_eq!(s, 0);
    }

    #[test]
    fn near_tie_sign_is_exact() {
        // (2^27+1)(2^27-1) = 2^54 - 1, which f64 rounds to 2^54. The true
        // determinant against 2^54 - 2, 2^54 - 1, and 2^54 is +1, 0, -1;
        // naive f64 evaluation sees +2, +1 (or 0), and 0.
        let p = 2f64.powi(27);
        let big = 2f64.powi(54);
        assert_eq!(det2_sign(p + 1.0, 0.0, p - 1.0, 0.0, big - 2.0, 0.0, 1.0, 0.0), 1);
        assert_eq!(det2_sign(p + 1.0, 0.0, p - 1.0, 0.0, big, 1.0, 1.0, 0.0), 0);
        assert_eq!(det2_sign(p + 1.0, 0.0, p - 1.0, 0.0, big, 0.0, 1.0, 0.0), -1);
    }

    #[test]
    fn random_well_separated_agrees_with_f64() {
        let mut rng = StdRng::seed_from_u64(7);
        for _ in 0..10_000 {
            let v: Vec<f64> = (0..8).map(|_| rng.random_range(-100.0..100.0)).collect();
            let det = (v[0] - v[1]) * (v[2] - v[3]) - (v[4] - v[5]) * (v[6] - v[7]);
            if det.abs() > 1e-6 {
                let got = det2_sign(v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7]);
                assert_eq!(got as f64, det.signum());
            }
        }
    }

    #[test]
    fn expansion_sum_roundtrip() {
        let a = prod_dd(Dd::diff(1.0e9 + 3.0, 1.0e9), Dd::from_f64(7.0));
        assert_eq!(a.approx(), 21.0);
        assert_eq!(a.sign(), 1);
        assert_eq!(a.add(&a.neg()).sign(), 0);
    }
}
