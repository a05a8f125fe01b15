//! Forward-mode scalar types shared by every evaluation path.
//!
//! An evaluator only needs ring operations plus one composition primitive:
//! given the Taylor coefficients `c_k = φ^(k)(v) / k!` of a unary function
//! `φ` at the current value `v`, produce `φ(self)`. Plain values, first-order
//! duals, second-order duals and truncated power series all implement that
//! contract, so the chain rule lives in exactly one place per type.

use super::Func;

pub trait Scalar: Clone {
    /// A constant in the same space as `self` (same tangent dimension/order).
    fn constant_like(&self, c: f64) -> Self;
    fn value(&self) -> f64;
    /// Highest derivative order the type carries.
    fn order(&self) -> usize;
    fn add(&self, other: &Self) -> Self;
    fn sub(&self, other: &Self) -> Self;
    fn mul(&self, other: &Self) -> Self;
    fn neg(&self) -> Self;
    /// `coeffs[k]` is the k-th Taylor coefficient of φ at `self.value()`;
    /// `coeffs.len() == self.order() + 1`.
    fn compose(&self, coeffs: &[f64]) -> Self;
}

impl Scalar for f64 {
    fn constant_like(&self, c: f64) -> Self {
        c
    }
    fn value(&self) -> f64 {
        *self
    }
    fn order(&self) -> usize {
        0
    }
    fn add(&self, other: &Self) -> Self {
        self + other
    }
    fn sub(&self, other: &Self) -> Self {
        self - other
    }
    fn mul(&self, other: &Self) -> Self {
        self * other
    }
    fn neg(&self) -> Self {
        -self
    }
    fn compose(&self, coeffs: &[f64]) -> Self {
        coeffs[0]
    }
}

/// First-order dual number with a dense gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Dual {
    pub value: f64,
    pub grad: Vec<f64>,
}

impl Dual {
    pub fn variable(value: f64, index: usize, n: usize) -> Self {
        let mut grad = vec![0.0; n];
        grad[index] = 1.0;
        Dual { value, grad }
    }
}

impl Scalar for Dual {
    fn constant_like(&self, c: f64) -> Self {
        Dual {
            value: c,
            grad: vec![0.0; self.grad.len()],
        }
    }
    fn value(&self) -> f64 {
        self.value
    }
    fn order(&self) -> usize {
        1
    }
    fn add(&self, o: &Self) -> Self {
        Dual {
            value: self.value + o.value,
            grad: self.grad.iter().zip(&o.grad).map(|(a, b)| a + b).collect(),
        }
    }
    fn sub(&self, o: &Self) -> Self {
        Dual {
            value: self.value - o.value,
            grad: self.grad.iter().zip(&o.grad).map(|(a, b)| a - b).collect(),
        }
    }
    fn mul(&self, o: &Self) -> Self {
        Dual {
            value: self.value * o.value,
            grad: self
                .grad
                .iter()
                .zip(&o.grad)
                .map(|(a, b)| a * o.value + self.value * b)
                .collect(),
        }
    }
    fn neg(&self) -> Self {
        Dual {
            value: -self.value,
            grad: self.grad.iter().map(|g| -g).collect(),
        }
    }
    fn compose(&self, c: &[f64]) -> Self {
        Dual {
            value: c[0],
            grad: self.grad.iter().map(|g| c[1] * g).collect(),
        }
    }
}

/// Second-order dual number. The Hessian is stored as a packed upper
/// triangle, so the dense matrix built from it is symmetric bit for bit.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperDual {
    pub value: f64,
    pub grad: Vec<f64>,
    pub hess: Vec<f64>,
}

#[inline]
fn packed_len(n: usize) -> usize {
    n * (n + 1) / 2
}

impl HyperDual {
    pub fn variable(value: f64, index: usize, n: usize) -> Self {
        let mut grad = vec![0.0; n];
        grad[index] = 1.0;
        HyperDual {
            value,
            grad,
            hess: vec![0.0; packed_len(n)],
        }
    }

    pub fn dim(&self) -> usize {
        self.grad.len()
    }

    /// Dense symmetric Hessian, row-major.
    pub fn hessian_rows(&self) -> Vec<Vec<f64>> {
        let n = self.dim();
        let mut out = vec![vec![0.0; n]; n];
        let mut k = 0;
        for i in 0..n {
            for j in i..n {
                out[i][j] = self.hess[k];
                out[j][i] = self.hess[k];
                k += 1;
            }
        }
        out
    }

    fn outer_packed(a: &[f64], b: &[f64], f: impl Fn(f64, f64, f64, f64) -> f64) -> Vec<f64> {
        let n = a.len();
        let mut out = Vec::with_capacity(packed_len(n));
        for i in 0..n {
            for j in i..n {
                out.push(f(a[i], a[j], b[i], b[j]));
            }
        }
        out
    }
}

impl Scalar for HyperDual {
    fn constant_like(&self, c: f64) -> Self {
        HyperDual {
            value: c,
            grad: vec![0.0; self.grad.len()],
            hess: vec![0.0; self.hess.len()],
        }
    }
    fn value(&self) -> f64 {
        self.value
    }
    fn order(&self) -> usize {
        2
    }
    fn add(&self, o: &Self) -> Self {
        HyperDual {
            value: self.value + o.value,
            grad: self.grad.iter().zip(&o.grad).map(|(a, b)| a + b).collect(),
            hess: self.hess.iter().zip(&o.hess).map(|(a, b)| a + b).collect(),
        }
    }
    fn sub(&self, o: &Self) -> Self {
        HyperDual {
            value: self.value - o.value,
            grad: self.grad.iter().zip(&o.grad).map(|(a, b)| a - b).collect(),
            hess: self.hess.iter().zip(&o.hess).map(|(a, b)| a - b).collect(),
        }
    }
    fn mul(&self, o: &Self) -> Self {
        let (u, v) = (self.value, o.value);
        let cross = Self::outer_packed(&self.grad, &o.grad, |ai, aj, bi, bj| ai * bj + aj * bi);
        HyperDual {
            value: u * v,
            grad: self
                .grad
                .iter()
                .zip(&o.grad)
                .map(|(a, b)| a * v + u * b)
                .collect(),
            hess: self
                .hess
                .iter()
                .zip(&o.hess)
                .zip(cross)
                .map(|((ha, hb), x)| ha * v + u * hb + x)
                .collect(),
        }
    }
    fn neg(&self) -> Self {
        HyperDual {
            value: -self.value,
            grad: self.grad.iter().map(|g| -g).collect(),
            hess: self.hess.iter().map(|h| -h).collect(),
        }
    }
    fn compose(&self, c: &[f64]) -> Self {
        // φ'' = 2 c2
        let gg = Self::outer_packed(&self.grad, &self.grad, |ai, aj, _, _| ai * aj);
        HyperDual {
            value: c[0],
            grad: self.grad.iter().map(|g| c[1] * g).collect(),
            hess: self
                .hess
                .iter()
                .zip(gg)
                .map(|(h, g2)| c[1] * h + 2.0 * c[2] * g2)
                .collect(),
        }
    }
}

/// Why a unary function has no Taylor expansion of the requested order.
#[derive(Debug, Clone, PartialEq)]
pub(crate) enum DomainFault {
    LogNonPositive(f64),
    SqrtNegative(f64),
    SqrtNotDifferentiable,
    DivisionByZero,
}

impl std::fmt::Display for DomainFault {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DomainFault::LogNonPositive(v) => write!(f, "log of nonpositive value {v}"),
            DomainFault::SqrtNegative(v) => write!(f, "sqrt of negative value {v}"),
            DomainFault::SqrtNotDifferentiable => write!(f, "sqrt is not differentiable at 0"),
            DomainFault::DivisionByZero => write!(f, "division by zero"),
        }
    }
}

/// Taylor coefficients `c_0..=c_order` of `1/u` at `a`.
pub(crate) fn reciprocal_coeffs(a: f64, order: usize) -> Result<Vec<f64>, DomainFault> {
    if a == 0.0 {
        return Err(DomainFault::DivisionByZero);
    }
    let inv = 1.0 / a;
    let mut out = Vec::with_capacity(order + 1);
    let mut c = inv;
    for _ in 0..=order {
        out.push(c);
        c *= -inv;
    }
    Ok(out)
}

/// Taylor coefficients `c_0..=c_order` of `func` at `a`.
pub(crate) fn unary_coeffs(func: Func, a: f64, order: usize) -> Result<Vec<f64>, DomainFault> {
    let mut out = Vec::with_capacity(order + 1);
    match func {
        Func::Exp => {
            let e = a.exp();
            let mut fact = 1.0;
            for k in 0..=order {
                if k > 0 {
                    fact *= k as f64;
                }
                out.push(e / fact);
            }
        }
        Func::Log => {
            if a <= 0.0 {
                return Err(DomainFault::LogNonPositive(a));
            }
            out.push(a.ln());
            let inv = 1.0 / a;
            let mut p = 1.0;
            for k in 1..=order {
                p *= inv;
                let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
                out.push(sign * p / k as f64);
            }
        }
        Func::Sin | Func::Cos => {
            let (s, c) = a.sin_cos();
            // derivative cycle of sin: s, c, -s, -c
            let cycle = [s, c, -s, -c];
            let offset = if func == Func::Sin { 0 } else { 1 };
            let mut fact = 1.0;
            for k in 0..=order {
                if k > 0 {
                    fact *= k as f64;
                }
                out.push(cycle[(k + offset) % 4] / fact);
            }
        }
        Func::Sqrt => {
            if a < 0.0 {
                return Err(DomainFault::SqrtNegative(a));
            }
            if a == 0.0 {
                if order > 0 {
                    return Err(DomainFault::SqrtNotDifferentiable);
                }
                out.push(0.0);
                return Ok(out);
            }
            // generalized binomial: binom(1/2, k) a^(1/2 - k)
            let root = a.sqrt();
            let mut binom = 1.0;
            let mut pw = root;
            for k in 0..=order {
                if k > 0 {
                    binom *= (0.5 - (k - 1) as f64) / k as f64;
                    pw /= a;
                }
                out.push(binom * pw);
            }
        }
        Func::Flat => return Ok(flat_coeffs(a, order)),
    }
    Ok(out)
}

/// Taylor coefficients of `flat(u) = exp(-1/u²)` (0 at u = 0) at `a`.
///
/// At `a = 0`, and wherever `exp(-1/a²)` underflows to zero, the whole
/// expansion is exactly zero.
pub(crate) fn flat_coeffs(a: f64, order: usize) -> Vec<f64> {
    let mut out = vec![0.0; order + 1];
    if a == 0.0 {
        return out;
    }
    let base = (-1.0 / (a * a)).exp();
    if base == 0.0 {
        return out;
    }
    // q(t) = -1/(a+t)² = -Σ (k+1)(-t)^k / a^(k+2)
    let inv = 1.0 / a;
    let mut q = Vec::with_capacity(order + 1);
    let mut p = inv * inv;
    for k in 0..=order {
        let sign = if k % 2 == 0 { -1.0 } else { 1.0 };
        q.push(sign * (k + 1) as f64 * p);
        p *= inv;
    }
    // e = exp(q): e_0 = base, e_k = (1/k) Σ_{j=1..k} j q_j e_{k-j}
    out[0] = base;
    for k in 1..=order {
        let mut s = 0.0;
        for j in 1..=k {
            s += j as f64 * q[j] * out[k - j];
        }
        out[k] = s / k as f64;
    }
    for c in out.iter_mut() {
        if !c.is_finite() {
            *c = 0.0;
        }
    }
    out
}
