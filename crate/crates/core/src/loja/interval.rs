//! Closed intervals with outward rounding.
//!
//! Sums and products are computed in round-to-nearest and widened by one ulp
//! only when an error-free transformation shows the result was inexact.

use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    lo: f64,
    hi: f64,
}

const TINY: f64 = 1e-290;

fn down(x: f64) -> f64 {
    x.next_down()
}

fn up(x: f64) -> f64 {
    x.next_up()
}

/// Enclosure of the exact sum `a + b`.
fn sum_bounds(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    if !s.is_finite() {
        return overflow_bounds(s);
    }
    let bb = s - a;
    let err = (a - (s - bb)) + (b - bb);
    match err.partial_cmp(&0.0) {
        Some(std::cmp::Ordering::Less) => (down(s), s),
        Some(std::cmp::Ordering::Greater) => (s, up(s)),
        _ => (s, s),
    }
}

/// Enclosure of the exact product `a · b`.
fn product_bounds(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    if !p.is_finite() {
        return overflow_bounds(p);
    }
    if p.abs() < TINY && a != 0.0 && b != 0.0 {
        return (down(p), up(p));
    }
    let err = a.mul_add(b, -p);
    match err.partial_cmp(&0.0) {
        Some(std::cmp::Ordering::Less) => (down(p), p),
        Some(std::cmp::Ordering::Greater) => (p, up(p)),
        _ => (p, p),
    }
}

fn overflow_bounds(v: f64) -> (f64, f64) {
    if v == f64::INFINITY {
        (f64::MAX, f64::INFINITY)
    } else if v == f64::NEG_INFINITY {
        (f64::NEG_INFINITY, f64::MIN)
    } else {
        (f64::NEG_INFINITY, f64::INFINITY)
    }
}

#[allow(clippy::should_implement_trait)]
impl Interval {
    pub const ZERO: Interval = Interval { lo: 0.0, hi: 0.0 };
    pub const ONE: Interval = Interval { lo: 1.0, hi: 1.0 };

    /// Panics if `lo > hi` or either bound is NaN.
    pub fn new(lo: f64, hi: f64) -> Self {
        assert!(lo <= hi, "invalid interval [{lo}, {hi}]");
        Interval { lo, hi }
    }

    pub fn point(x: f64) -> Self {
        Self::new(x, x)
    }

    pub fn lo(self) -> f64 {
        self.lo
    }

    pub fn hi(self) -> f64 {
        self.hi
    }

    pub fn width(self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn contains_zero(self) -> bool {
        self.contains(0.0)
    }

    pub fn add(self, o: Interval) -> Interval {
        Interval {
            lo: sum_bounds(self.lo, o.lo).0,
            hi: sum_bounds(self.hi, o.hi).1,
        }
    }

    pub fn neg(self) -> Interval {
        Interval {
            lo: -self.hi,
            hi: -self.lo,
        }
    }

    pub fn sub(self, o: Interval) -> Interval {
        self.add(o.neg())
    }

    pub fn mul(self, o: Interval) -> Interval {
        if (self.lo == 0.0 && self.hi == 0.0) || (o.lo == 0.0 && o.hi == 0.0) {
            return Interval::ZERO;
        }
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for a in [self.lo, self.hi] {
            for b in [o.lo, o.hi] {
                let (l, h) = product_bounds(a, b);
                lo = lo.min(l);
                hi = hi.max(h);
            }
        }
        Interval { lo, hi }
    }

    pub fn scale(self, s: f64) -> Interval {
        self.mul(Interval::point(s))
    }

    /// Tight square: `[0, max²]` when the interval straddles zero.
    pub fn sqr(self) -> Interval {
        if self.lo >= 0.0 {
            self.mul(self)
        } else if self.hi <= 0.0 {
            self.neg().mul(self.neg())
        } else {
            let m = self.lo.abs().max(self.hi);
            Interval {
                lo: 0.0,
                hi: product_bounds(m, m).1,
            }
        }
    }

    /// Tight integer power.
    pub fn powi(self, k: u32) -> Interval {
        match k {
            0 => Interval::ONE,
            1 => self,
            _ if k.is_multiple_of(2) => self.sqr().powi(k / 2),
            _ => self.mul(self.powi(k - 1)),
        }
    }

    /// Convex hull.
    pub fn hull(self, o: Interval) -> Interval {
        Interval {
            lo: self.lo.min(o.lo),
            hi: self.hi.max(o.hi),
        }
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{:e}, {:e}]", self.lo, self.hi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_operations_stay_points() {
        let a = Interval::point(1.5).add(Interval::point(2.25));
        assert_eq!(a, Interval::point(3.75));
        assert_eq!(Interval::point(3.0).mul(Interval::point(-0.5)), Interval::point(-1.5));
    }

    #[test]
    fn inexact_operations_are_enclosed() {
        let s = Interval::point(0.1).add(Interval::point(0.2));
        assert!(s.lo() < s.hi());
        // 0.1 + 0.2 in exact binary arithmetic lies inside the enclosure
        assert!(s.lo() <= 0.30000000000000004 && s.hi() >= 0.30000000000000004);
        let p = Interval::point(1.0 / 3.0).mul(Interval::point(3.0));
        assert!(p.contains(1.0) || p.width() > 0.0);
    }

    #[test]
    fn tight_even_powers() {
        let x = Interval::new(-2.0, 1.0);
        assert_eq!(x.sqr(), Interval::new(0.0, 4.0));
        assert_eq!(x.powi(4), Interval::new(0.0, 16.0));
        assert_eq!(x.powi(3), Interval::new(-8.0, 4.0));
        assert_eq!(x.mul(x), Interval::new(-2.0, 4.0));
    }

    #[test]
    fn overflow_is_unbounded() {
        let big = Interval::point(f64::MAX);
        let s = big.add(big);
        assert_eq!(s.hi(), f64::INFINITY);
        assert_eq!(s.lo(), f64::MAX);
    }
}
