//! Outward-rounded interval arithmetic.
//!
//! Every operation widens its result by one ulp per rounding step, so computed
//! intervals always enclose the real-arithmetic image of their inputs. That
//! soundness is what lets the reachability masks and parameter-range bounds
//! claim "no reachable pixel is excluded" rather than "probably none".

use std::f64::consts::{FRAC_PI_2, PI, TAU};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

#[inline]
fn down(x: f64) -> f64 {
    x.next_down()
}

#[inline]
fn up(x: f64) -> f64 {
    x.next_up()
}

// Floating-point addition is exact when both operands survive subtracting
// back out of the sum. Skipping the ulp widening in that case keeps exact
// zeros exact, which downstream sign tests rely on.
#[inline]
fn add_is_exact(a: f64, b: f64, s: f64) -> bool {
    s - a == b && s - b == a
}

#[inline]
fn sum_down(a: f64, b: f64) -> f64 {
    let s = a + b;
    if add_is_exact(a, b, s) { s } else { down(s) }
}

#[inline]
fn sum_up(a: f64, b: f64) -> f64 {
    let s = a + b;
    if add_is_exact(a, b, s) { s } else { up(s) }
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Interval {
        debug_assert!(lo <= hi, "inverted interval [{lo}, {hi}]");
        debug_assert!(lo.is_finite() && hi.is_finite());
        Interval { lo, hi }
    }

    pub fn point(x: f64) -> Interval {
        Interval::new(x, x)
    }

    pub fn hull(a: Interval, b: Interval) -> Interval {
        Interval::new(a.lo.min(b.lo), a.hi.max(b.hi))
    }

    pub fn width(self) -> f64 {
        self.hi - self.lo
    }

    pub fn mid(self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn contains(self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn contains_interval(self, other: Interval) -> bool {
        self.lo <= other.lo && other.hi <= self.hi
    }

    pub fn intersects(self, other: Interval) -> bool {
        self.lo <= other.hi && other.lo <= self.hi
    }

    pub fn intersect(self, other: Interval) -> Option<Interval> {
        let lo = self.lo.max(other.lo);
        let hi = self.hi.min(other.hi);
        (lo <= hi).then(|| Interval::new(lo, hi))
    }

    pub fn inflate(self, r: f64) -> Interval {
        debug_assert!(r >= 0.0);
        Interval::new(down(self.lo - r), up(self.hi + r))
    }

    pub fn neg(self) -> Interval {
        Interval::new(-self.hi, -self.lo)
    }

    pub fn add(self, other: Interval) -> Interval {
        Interval::new(
            sum_down(self.lo, other.lo),
            sum_up(self.hi, other.hi),
        )
    }

    pub fn sub(self, other: Interval) -> Interval {
        self.add(other.neg())
    }

    pub fn add_scalar(self, x: f64) -> Interval {
        Interval::new(sum_down(self.lo, x), sum_up(self.hi, x))
    }

    pub fn mul(self, other: Interval) -> Interval {
        let p = [
            self.lo * other.lo,
            self.lo * other.hi,
            self.hi * other.lo,
            self.hi * other.hi,
        ];
        let lo = p.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Interval::new(down(lo), up(hi))
    }

    pub fn mul_scalar(self, x: f64) -> Interval {
        let (a, b) = (self.lo * x, self.hi * x);
        if x >= 0.0 {
            Interval::new(down(a), up(b))
        } else {
            Interval::new(down(b), up(a))
        }
    }

    /// Division; the divisor must exclude zero.
    pub fn div(self, other: Interval) -> Interval {
        assert!(
            other.lo > 0.0 || other.hi < 0.0,
            "interval division by [{}, {}] which contains zero",
            other.lo,
            other.hi
        );
        let p = [
            self.lo / other.lo,
            self.lo / other.hi,
            self.hi / other.lo,
            self.hi / other.hi,
        ];
        let lo = p.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Interval::new(down(lo), up(hi))
    }

    pub fn abs(self) -> Interval {
        if self.lo >= 0.0 {
            self
        } else if self.hi <= 0.0 {
            self.neg()
        } else {
            Interval::new(0.0, self.hi.max(-self.lo))
        }
    }

    /// Pointwise minimum: encloses `min(a, b)` for all `a` here, `b` there.
    pub fn min_with(self, other: Interval) -> Interval {
        Interval::new(self.lo.min(other.lo), self.hi.min(other.hi))
    }

    /// Pointwise `max(x, c)`; exact, no rounding involved.
    pub fn max_scalar(self, c: f64) -> Interval {
        Interval::new(self.lo.max(c), self.hi.max(c))
    }

    /// Arctangent; monotone, widened two ulps per side since the libm
    /// routine is faithful rather than correctly rounded.
    pub fn atan(self) -> Interval {
        Interval::new(
            down(down(self.lo.atan())).max(-FRAC_PI_2),
            up(up(self.hi.atan())).min(FRAC_PI_2),
        )
    }

    /// Does any point `c + 2k*pi` fall inside (a slightly inflated copy of)
    /// the interval? Used to detect trig extrema; inflation only widens.
    fn meets_period(self, c: f64) -> bool {
        const SLOP: f64 = 1e-9;
        let k0 = ((self.lo - c) / TAU).floor();
        (0..3).any(|j| {
            let x = c + (k0 + j as f64) * TAU;
            x >= self.lo - SLOP && x <= self.hi + SLOP
        })
    }

    pub fn sin(self) -> Interval {
        if self.width() >= TAU {
            return Interval::new(-1.0, 1.0);
        }
        let (sa, sb) = (self.lo.sin(), self.hi.sin());
        let mut lo = sa.min(sb);
        let mut hi = sa.max(sb);
        if self.meets_period(FRAC_PI_2) {
            hi = 1.0;
        }
        if self.meets_period(-FRAC_PI_2) {
            lo = -1.0;
        }
        // libm sin is faithful but not correctly rounded; two ulps of margin.
        Interval::new(down(down(lo)).max(-1.0), up(up(hi)).min(1.0))
    }

    pub fn cos(self) -> Interval {
        if self.width() >= TAU {
            return Interval::new(-1.0, 1.0);
        }
        let (ca, cb) = (self.lo.cos(), self.hi.cos());
        let mut lo = ca.min(cb);
        let mut hi = ca.max(cb);
        if self.meets_period(0.0) {
            hi = 1.0;
        }
        if self.meets_period(PI) {
            lo = -1.0;
        }
        Interval::new(down(down(lo)).max(-1.0), up(up(hi)).min(1.0))
    }
}

/// Axis-aligned box: a product of `N` intervals.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IntervalBox<const N: usize> {
    pub dims: [Interval; N],
}

impl<const N: usize> IntervalBox<N> {
    pub fn new(dims: [Interval; N]) -> Self {
        IntervalBox { dims }
    }

    pub fn point(x: [f64; N]) -> Self {
        IntervalBox { dims: x.map(Interval::point) }
    }

    pub fn from_center_radius(center: [f64; N], radius: f64) -> Self {
        IntervalBox {
            dims: center.map(|c| Interval::new(c - radius, c + radius)),
        }
    }

    pub fn center(&self) -> [f64; N] {
        self.dims.map(Interval::mid)
    }

    pub fn contains(&self, x: &[f64; N]) -> bool {
        self.dims.iter().zip(x).all(|(iv, v)| iv.contains(*v))
    }

    pub fn intersects_box(&self, other: &IntervalBox<N>) -> bool {
        self.dims
            .iter()
            .zip(&other.dims)
            .all(|(a, b)| a.intersects(*b))
    }

    pub fn contains_box(&self, other: &IntervalBox<N>) -> bool {
        self.dims
            .iter()
            .zip(&other.dims)
            .all(|(a, b)| a.contains_interval(*b))
    }

    pub fn intersect(&self, other: &IntervalBox<N>) -> Option<IntervalBox<N>> {
        let mut dims = [Interval::point(0.0); N];
        for i in 0..N {
            dims[i] = self.dims[i].intersect(other.dims[i])?;
        }
        Some(IntervalBox { dims })
    }

    pub fn hull(a: &IntervalBox<N>, b: &IntervalBox<N>) -> IntervalBox<N> {
        let mut dims = [Interval::point(0.0); N];
        for i in 0..N {
            dims[i] = Interval::hull(a.dims[i], b.dims[i]);
        }
        IntervalBox { dims }
    }

    pub fn inflate(&self, r: f64) -> IntervalBox<N> {
        IntervalBox { dims: self.dims.map(|iv| iv.inflate(r)) }
    }

    pub fn max_width(&self) -> f64 {
        self.dims
            .iter()
            .map(|iv| iv.width())
            .fold(0.0, f64::max)
    }

    /// All `2^N` corner points, lexicographic in (lo, hi) choice per axis.
    pub fn corners(&self) -> impl Iterator<Item = [f64; N]> + '_ {
        (0..(1usize << N)).map(move |mask| {
            let mut p = [0.0; N];
            for (i, v) in p.iter_mut().enumerate() {
                *v = if mask >> i & 1 == 0 {
                    self.dims[i].lo
                } else {
                    self.dims[i].hi
                };
            }
            p
        })
    }
}

/// Dense interval matrix with compile-time shape.
#[derive(Clone, Copy, Debug)]
pub struct IntervalMatrix<const R: usize, const C: usize> {
    pub data: [[Interval; C]; R],
}

impl<const R: usize, const C: usize> IntervalMatrix<R, C> {
    pub fn zeros() -> Self {
        IntervalMatrix { data: [[Interval::point(0.0); C]; R] }
    }

    pub fn from_f64(m: [[f64; C]; R]) -> Self {
        IntervalMatrix { data: m.map(|row| row.map(Interval::point)) }
    }

    pub fn get(&self, r: usize, c: usize) -> Interval {
        self.data[r][c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: Interval) {
        self.data[r][c] = v;
    }

    /// Sound product: every real matrix pair drawn entrywise from the operands
    /// has its product enclosed entrywise in the result.
    pub fn mul<const K: usize>(&self, other: &IntervalMatrix<C, K>) -> IntervalMatrix<R, K> {
        let mut out = IntervalMatrix::<R, K>::zeros();
        for r in 0..R {
            for k in 0..K {
                let mut acc = Interval::point(0.0);
                for c in 0..C {
                    acc = acc.add(self.data[r][c].mul(other.data[c][k]));
                }
                out.data[r][k] = acc;
            }
        }
        out
    }

    pub fn contains(&self, m: &[[f64; C]; R]) -> bool {
        (0..R).all(|r| (0..C).all(|c| self.data[r][c].contains(m[r][c])))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{RngExt, SeedableRng};

    fn sample(rng: &mut StdRng, iv: Interval) -> f64 {
        if iv.width() == 0.0 {
            iv.lo
        } else {
            rng.random_range(iv.lo..=iv.hi)
        }
    }

    fn rand_interval(rng: &mut StdRng) -> Interval {
        let a: f64 = rng.random_range(-10.0..10.0);
        let w: f64 = rng.random_range(0.0..5.0);
        Interval::new(a, a + w)
    }

    #[test]
    fn arithmetic_encloses_pointwise_results() {
        let mut rng = StdRng::seed_from_u64(11);
        for _ in 0..2000 {
            let (ia, ib) = (rand_interval(&mut rng), rand_interval(&mut rng));
            let (a, b) = (sample(&mut rng, ia), sample(&mut rng, ib));
            assert!(ia.add(ib).contains(a + b));
            assert!(ia.sub(ib).contains(a - b));
            assert!(ia.mul(ib).contains(a * b));
            assert!(ia.abs().contains(a.abs()));
            assert!(ia.min_with(ib).contains(a.min(b)));
            assert!(ia.max_scalar(0.0).contains(a.max(0.0)));
            let shifted = ib.add_scalar(12.0);
            assert!(ia.div(shifted).contains(a / (b + 12.0)));
            let s: f64 = rng.random_range(-3.0..3.0);
            assert!(ia.mul_scalar(s).contains(a * s));
        }
    }

    #[test]
    fn trig_encloses_pointwise_results() {
        let mut rng = StdRng::seed_from_u64(12);
        for _ in 0..2000 {
            let lo: f64 = rng.random_range(-8.0..8.0);
            let w: f64 = rng.random_range(0.0..7.0);
            let iv = Interval::new(lo, lo + w);
            let x = sample(&mut rng, iv);
            assert!(iv.sin().contains(x.sin()), "sin {iv:?} at {x}");
            assert!(iv.cos().contains(x.cos()), "cos {iv:?} at {x}");
        }
    }

    #[test]
    fn trig_catches_interior_extrema() {
        let iv = Interval::new(1.0, 2.0); // contains pi/2
        assert_eq!(iv.sin().hi, 1.0);
        assert!(iv.sin().lo <= 2.0f64.sin());
        let iv = Interval::new(3.0, 3.5); // contains pi
        assert_eq!(iv.cos().lo, -1.0);
    }

    #[test]
    fn division_by_zero_straddling_interval_panics() {
        let res = std::panic::catch_unwind(|| {
            Interval::new(1.0, 2.0).div(Interval::new(-1.0, 1.0))
        });
        assert!(res.is_err());
    }

    #[test]
    fn matrix_product_encloses_sampled_products() {
        let mut rng = StdRng::seed_from_u64(13);
        for _ in 0..200 {
            let mut a = IntervalMatrix::<2, 3>::zeros();
            let mut b = IntervalMatrix::<3, 2>::zeros();
            let mut pa = [[0.0; 3]; 2];
            let mut pb = [[0.0; 2]; 3];
            for r in 0..2 {
                for c in 0..3 {
                    let iv = rand_interval(&mut rng);
                    a.set(r, c, iv);
                    pa[r][c] = sample(&mut rng, iv);
                }
            }
            for r in 0..3 {
                for c in 0..2 {
                    let iv = rand_interval(&mut rng);
                    b.set(r, c, iv);
                    pb[r][c] = sample(&mut rng, iv);
                }
            }
            let prod = a.mul(&b);
            for r in 0..2 {
                for c in 0..2 {
                    let exact: f64 = (0..3).map(|k| pa[r][k] * pb[k][c]).sum();
                    assert!(prod.get(r, c).contains(exact));
                }
            }
        }
    }

    #[test]
    fn box_corners_enumerate_all_sign_patterns() {
        let b = IntervalBox::new([Interval::new(0.0, 1.0), Interval::new(2.0, 3.0)]);
        let corners: Vec<_> = b.corners().collect();
        assert_eq!(corners.len(), 4);
        assert!(corners.contains(&[0.0, 2.0]));
        assert!(corners.contains(&[1.0, 3.0]));
        assert_eq!(b.center(), [0.5, 2.5]);
    }
}
