use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Exponent vector α. Ordered graded-lexicographically: lower total degree
/// first, then `x1` before `x2` before ... within a degree.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MultiIndex(Vec<u32>);

impl MultiIndex {
    pub fn new(exponents: Vec<u32>) -> Self {
        MultiIndex(exponents)
    }

    pub fn zero(n: usize) -> Self {
        MultiIndex(vec![0; n])
    }

    pub fn unit(n: usize, i: usize) -> Self {
        let mut e = vec![0; n];
        e[i] = 1;
        MultiIndex(e)
    }

    pub fn exponents(&self) -> &[u32] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// |α|
    pub fn degree(&self) -> u32 {
        self.0.iter().sum()
    }

    /// α!
    pub fn factorial(&self) -> f64 {
        self.0
            .iter()
            .map(|&a| (1..=a).map(f64::from).product::<f64>())
            .product()
    }

    pub fn add(&self, other: &MultiIndex) -> MultiIndex {
        MultiIndex(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    /// xᵅ
    pub fn monomial(&self, x: &[f64]) -> f64 {
        self.0
            .iter()
            .zip(x)
            .filter(|(&a, _)| a > 0)
            .map(|(&a, &v)| v.powi(a as i32))
            .product()
    }

    /// Every multi-index of dimension `n` with `|α| == degree`, in graded-lex
    /// order.
    pub fn all_of_degree(n: usize, degree: u32) -> Vec<MultiIndex> {
        let mut out = Vec::new();
        let mut cur = vec![0u32; n];
        fn rec(i: usize, left: u32, cur: &mut Vec<u32>, out: &mut Vec<MultiIndex>) {
            let n = cur.len();
            if i == n - 1 {
                cur[i] = left;
                out.push(MultiIndex(cur.clone()));
                return;
            }
            for a in (0..=left).rev() {
                cur[i] = a;
                rec(i + 1, left - a, cur, out);
            }
            cur[i] = 0;
        }
        if n > 0 {
            rec(0, degree, &mut cur, &mut out);
        }
        out
    }

    /// Every multi-index with `|α| <= degree`, in graded-lex order.
    pub fn all_up_to(n: usize, degree: u32) -> Vec<MultiIndex> {
        (0..=degree).flat_map(|d| Self::all_of_degree(n, d)).collect()
    }
}

impl Ord for MultiIndex {
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree()
            .cmp(&other.degree())
            .then_with(|| other.0.cmp(&self.0))
    }
}

impl PartialOrd for MultiIndex {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Sparse real polynomial in `n` variables. Zero coefficients are never
/// stored.
#[derive(Debug, Clone, PartialEq)]
pub struct SparsePolynomial {
    n: usize,
    terms: BTreeMap<MultiIndex, f64>,
}

impl SparsePolynomial {
    pub fn zero(n: usize) -> Self {
        SparsePolynomial {
            n,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(n: usize, c: f64) -> Self {
        let mut p = Self::zero(n);
        p.add_term(MultiIndex::zero(n), c);
        p
    }

    /// `x_i`
    pub fn variable(n: usize, i: usize) -> Self {
        let mut p = Self::zero(n);
        p.add_term(MultiIndex::unit(n, i), 1.0);
        p
    }

    pub fn from_terms(n: usize, terms: impl IntoIterator<Item = (Vec<u32>, f64)>) -> Result<Self> {
        let mut p = Self::zero(n);
        for (e, c) in terms {
            check_dim(n, e.len())?;
            p.add_term(MultiIndex(e), c);
        }
        Ok(p)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&MultiIndex, f64)> {
        self.terms.iter().map(|(k, &v)| (k, v))
    }

    pub fn coefficient(&self, alpha: &MultiIndex) -> f64 {
        self.terms.get(alpha).copied().unwrap_or(0.0)
    }

    /// Adds `c·xᵅ`, dropping the entry if the sum cancels to zero.
    pub fn add_term(&mut self, alpha: MultiIndex, c: f64) {
        assert_eq!(alpha.dim(), self.n, "multi-index dimension");
        if c == 0.0 {
            return;
        }
        let entry = self.terms.entry(alpha);
        match entry {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                let s = *o.get() + c;
                if s == 0.0 {
                    o.remove();
                } else {
                    *o.get_mut() = s;
                }
            }
        }
    }

    pub fn degree(&self) -> Option<u32> {
        self.terms.keys().map(MultiIndex::degree).max()
    }

    /// Lowest total degree carrying a nonzero coefficient.
    pub fn min_degree(&self) -> Option<u32> {
        self.terms.keys().map(MultiIndex::degree).min()
    }

    pub fn is_homogeneous(&self) -> bool {
        self.degree() == self.min_degree()
    }

    pub fn homogeneous_part(&self, degree: u32) -> SparsePolynomial {
        self.filter(|a| a.degree() == degree)
    }

    /// Terms with `|α| <= degree`.
    pub fn truncate(&self, degree: u32) -> SparsePolynomial {
        self.filter(|a| a.degree() <= degree)
    }

    pub fn filter(&self, keep: impl Fn(&MultiIndex) -> bool) -> SparsePolynomial {
        SparsePolynomial {
            n: self.n,
            terms: self
                .terms
                .iter()
                .filter(|(a, _)| keep(a))
                .map(|(a, &c)| (a.clone(), c))
                .collect(),
        }
    }

    /// Largest |coefficient| difference over the union of supports.
    pub fn max_abs_diff(&self, other: &SparsePolynomial) -> f64 {
        let mut m: f64 = 0.0;
        for (a, c) in self.terms() {
            m = m.max((c - other.coefficient(a)).abs());
        }
        for (a, c) in other.terms() {
            if !self.terms.contains_key(a) {
                m = m.max(c.abs());
            }
        }
        m
    }

    pub fn max_abs_coefficient(&self) -> f64 {
        self.terms.values().fold(0.0, |m, c| m.max(c.abs()))
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.n, x.len())?;
        Ok(self.terms.iter().map(|(a, c)| c * a.monomial(x)).sum())
    }

    /// Formal partial derivative with respect to `x_i`.
    pub fn partial(&self, i: usize) -> SparsePolynomial {
        let mut out = Self::zero(self.n);
        for (a, &c) in &self.terms {
            let k = a.0[i];
            if k > 0 {
                let mut e = a.0.clone();
                e[i] -= 1;
                out.add_term(MultiIndex(e), c * f64::from(k));
            }
        }
        out
    }

    pub fn gradient(&self) -> Vec<SparsePolynomial> {
        (0..self.n).map(|i| self.partial(i)).collect()
    }

    pub fn scale(&self, s: f64) -> SparsePolynomial {
        let mut out = Self::zero(self.n);
        for (a, &c) in &self.terms {
            out.add_term(a.clone(), s * c);
        }
        out
    }

    pub fn add(&self, other: &SparsePolynomial) -> SparsePolynomial {
        assert_eq!(self.n, other.n);
        let mut out = self.clone();
        for (a, &c) in &other.terms {
            out.add_term(a.clone(), c);
        }
        out
    }

    pub fn sub(&self, other: &SparsePolynomial) -> SparsePolynomial {
        self.add(&other.scale(-1.0))
    }

    pub fn mul(&self, other: &SparsePolynomial) -> SparsePolynomial {
        assert_eq!(self.n, other.n);
        let mut out = Self::zero(self.n);
        for (a, &c) in &self.terms {
            for (b, &d) in &other.terms {
                out.add_term(a.add(b), c * d);
            }
        }
        out
    }

    /// Drops coefficients with `|c| <= tol`.
    pub fn prune(&self, tol: f64) -> SparsePolynomial {
        SparsePolynomial {
            n: self.n,
            terms: self
                .terms
                .iter()
                .filter(|(_, c)| c.abs() > tol)
                .map(|(a, &c)| (a.clone(), c))
                .collect(),
        }
    }

    /// `p(x + shift)` as a polynomial in `x`.
    pub fn shifted(&self, shift: &[f64]) -> Result<SparsePolynomial> {
        check_dim(self.n, shift.len())?;
        let mut out = Self::zero(self.n);
        for (a, &c) in &self.terms {
            // Π_i (x_i + s_i)^{a_i}
            let mut acc = Self::constant(self.n, c);
            for (i, &k) in a.0.iter().enumerate() {
                if k == 0 {
                    continue;
                }
                let mut lin = Self::variable(self.n, i);
                lin.add_term(MultiIndex::zero(self.n), shift[i]);
                for _ in 0..k {
                    acc = acc.mul(&lin);
                }
            }
            out = out.add(&acc);
        }
        Ok(out)
    }

    /// Symmetric coefficient matrix of the degree-2 part, so that the
    /// quadratic part equals ½ xᵀ A x.
    pub fn quadratic_form(&self) -> Vec<Vec<f64>> {
        let n = self.n;
        let mut a = vec![vec![0.0; n]; n];
        for (alpha, &c) in &self.terms {
            if alpha.degree() != 2 {
                continue;
            }
            let idx: Vec<usize> = alpha
                .0
                .iter()
                .enumerate()
                .flat_map(|(i, &k)| std::iter::repeat_n(i, k as usize))
                .collect();
            let (i, j) = (idx[0], idx[1]);
            if i == j {
                a[i][i] = 2.0 * c;
            } else {
                a[i][j] = c;
                a[j][i] = c;
            }
        }
        a
    }

    /// Text form accepted by the expression parser.
    pub fn to_expression_text(&self) -> String {
        if self.terms.is_empty() {
            return "0".into();
        }
        self.to_string()
    }

    /// Reads the canonical text form back (`c * x1^a1 * ... ` terms joined by
    /// `+`/`-`).
    pub fn parse_text(text: &str, n: usize) -> Result<Self> {
        let e = crate::expr::Expression::parse(text, n)?;
        if e.polynomial_degree().is_none() {
            return Err(Error::InvalidArgument(format!("`{text}` is not a polynomial")));
        }
        crate::jets::taylor_jet(&e, &crate::expr::Point::origin(n), e.polynomial_degree().unwrap().max(1) as u32)
            .map(|j| {
                let mut p = j.poly.clone();
                p.add_term(MultiIndex::zero(n), j.base_value);
                p
            })
    }
}

/// Serialized as `{"n", "text", "terms": [{"alpha", "coef"}]}`.
impl Serialize for SparsePolynomial {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Term<'a> {
            alpha: &'a MultiIndex,
            coef: f64,
        }
        #[derive(Serialize)]
        struct Repr<'a> {
            n: usize,
            text: String,
            terms: Vec<Term<'a>>,
        }
        Repr {
            n: self.n,
            text: self.to_string(),
            terms: self.terms.iter().map(|(alpha, &coef)| Term { alpha, coef }).collect(),
        }
        .serialize(s)
    }
}

impl fmt::Display for SparsePolynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (k, (alpha, &c)) in self.terms.iter().enumerate() {
            let (sign, mag) = if c < 0.0 { ("-", -c) } else { ("+", c) };
            if k == 0 {
                if sign == "-" {
                    write!(f, "-")?;
                }
            } else {
                write!(f, " {sign} ")?;
            }
            write!(f, "{mag}")?;
            for (i, &a) in alpha.0.iter().enumerate() {
                if a > 0 {
                    write!(f, " * x{}^{a}", i + 1)?;
                }
            }
        }
        Ok(())
    }
}
