//! Smooth function expressions: parsing, canonical printing, and exact
//! forward-mode evaluation of values, gradients and Hessians.
//!
//! Besides the usual elementary functions the grammar has a built-in flat
//! primitive `flat(u) = exp(-1/u²)`, extended by `0` at `u = 0`. Its Taylor
//! expansion at the origin is identically zero, which every derivative channel
//! reproduces exactly.

mod ad;
mod parse;

use std::fmt;
use std::ops::Deref;

use serde::{Deserialize, Serialize, Serializer};

pub use ad::{Dual, HyperDual, Scalar};
pub(crate) use ad::{reciprocal_coeffs, unary_coeffs};

use crate::error::{check_dim, Error, Result};
use ad::DomainFault;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Exp,
    Log,
    Sin,
    Cos,
    Sqrt,
    Flat,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Sqrt => "sqrt",
            Func::Flat => "flat",
        }
    }
}

/// Expression tree node. Variables are zero-based internally and print as
/// `x1..xn`.
#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Const(f64),
    Var(usize),
    Neg(Box<Node>),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    Pow(Box<Node>, i32),
    Call(Func, Box<Node>),
}

impl fmt::Display for Node {
    /// Canonical, fully parenthesized form.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Node::Const(c) if *c < 0.0 => write!(f, "(-{})", -c),
            Node::Const(c) => write!(f, "{c}"),
            Node::Var(i) => write!(f, "x{}", i + 1),
            Node::Neg(a) => write!(f, "(-{a})"),
            Node::Add(a, b) => write!(f, "({a} + {b})"),
            Node::Sub(a, b) => write!(f, "({a} - {b})"),
            Node::Mul(a, b) => write!(f, "({a} * {b})"),
            Node::Div(a, b) => write!(f, "({a} / {b})"),
            Node::Pow(a, n) => write!(f, "({a}^{n})"),
            Node::Call(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

impl Node {
    fn max_var(&self) -> Option<usize> {
        match self {
            Node::Const(_) => None,
            Node::Var(i) => Some(*i),
            Node::Neg(a) | Node::Pow(a, _) | Node::Call(_, a) => a.max_var(),
            Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) => {
                match (a.max_var(), b.max_var()) {
                    (Some(x), Some(y)) => Some(x.max(y)),
                    (x, y) => x.or(y),
                }
            }
        }
    }

    /// Structural degree bound if the subtree is a polynomial.
    fn poly_degree(&self) -> Option<usize> {
        match self {
            Node::Const(_) => Some(0),
            Node::Var(_) => Some(1),
            Node::Neg(a) => a.poly_degree(),
            Node::Add(a, b) | Node::Sub(a, b) => Some(a.poly_degree()?.max(b.poly_degree()?)),
            Node::Mul(a, b) => Some(a.poly_degree()? + b.poly_degree()?),
            Node::Pow(a, n) if *n >= 0 => Some(a.poly_degree()? * *n as usize),
            Node::Div(a, b) => match **b {
                Node::Const(c) if c != 0.0 => a.poly_degree(),
                _ => None,
            },
            Node::Pow(..) | Node::Call(..) => None,
        }
    }

    fn eval<T: Scalar>(&self, vars: &[T]) -> Result<T> {
        let domain = |node: &Node, fault: DomainFault| Error::Domain {
            node: node.to_string(),
            reason: fault.to_string(),
        };
        Ok(match self {
            Node::Const(c) => vars[0].constant_like(*c),
            Node::Var(i) => vars[*i].clone(),
            Node::Neg(a) => a.eval(vars)?.neg(),
            Node::Add(a, b) => a.eval(vars)?.add(&b.eval(vars)?),
            Node::Sub(a, b) => a.eval(vars)?.sub(&b.eval(vars)?),
            Node::Mul(a, b) => a.eval(vars)?.mul(&b.eval(vars)?),
            Node::Div(a, b) => {
                let num = a.eval(vars)?;
                let den = b.eval(vars)?;
                let inv = reciprocal_coeffs(den.value(), den.order())
                    .map_err(|f| domain(self, f))?;
                num.mul(&den.compose(&inv))
            }
            Node::Pow(a, n) => {
                let base = a.eval(vars)?;
                let p = powi(&base, n.unsigned_abs());
                if *n < 0 {
                    let inv =
                        reciprocal_coeffs(p.value(), p.order()).map_err(|f| domain(self, f))?;
                    p.compose(&inv)
                } else {
                    p
                }
            }
            Node::Call(func, a) => {
                let arg = a.eval(vars)?;
                let coeffs =
                    unary_coeffs(*func, arg.value(), arg.order()).map_err(|f| domain(self, f))?;
                arg.compose(&coeffs)
            }
        })
    }
}

fn powi<T: Scalar>(base: &T, mut n: u32) -> T {
    let mut acc = base.constant_like(1.0);
    if n == 0 {
        return acc;
    }
    let mut sq = base.clone();
    let mut first = true;
    loop {
        if n & 1 == 1 {
            acc = if first { sq.clone() } else { acc.mul(&sq) };
            first = false;
        }
        n >>= 1;
        if n == 0 {
            return acc;
        }
        sq = sq.mul(&sq);
    }
}

/// A point of ℝⁿ with finite coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Point(Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::InvalidArgument("point must have at least one coordinate".into()));
        }
        if let Some(bad) = coords.iter().find(|c| !c.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite coordinate {bad}")));
        }
        Ok(Point(coords))
    }

    pub fn origin(n: usize) -> Self {
        Point(vec![0.0; n])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for Point {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for Point {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Point::new(v)
    }
}

impl From<Point> for Vec<f64> {
    fn from(p: Point) -> Self {
        p.0
    }
}

/// A parsed function of `n_vars` variables. Immutable and `Send + Sync`.
#[derive(Debug, Clone, PartialEq)]
pub struct Expression {
    root: Node,
    n_vars: usize,
}

impl Expression {
    pub fn parse(text: &str, n_vars: usize) -> Result<Self> {
        if n_vars == 0 {
            return Err(Error::InvalidArgument("n_vars must be positive".into()));
        }
        let root = parse::parse(text, n_vars)?;
        Ok(Expression { root, n_vars })
    }

    /// Builds an expression from a tree, checking variable bounds.
    pub fn from_node(root: Node, n_vars: usize) -> Result<Self> {
        if n_vars == 0 {
            return Err(Error::InvalidArgument("n_vars must be positive".into()));
        }
        if let Some(i) = root.max_var() {
            if i >= n_vars {
                return Err(crate::error::ParseError::VariableOutOfRange {
                    index: i + 1,
                    n_vars,
                    position: 0,
                }
                .into());
            }
        }
        Ok(Expression { root, n_vars })
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    /// Structural degree bound when the tree only uses `+ - *`, nonnegative
    /// integer powers and division by nonzero constants.
    pub fn polynomial_degree(&self) -> Option<usize> {
        self.root.poly_degree()
    }

    /// Evaluates over any forward-mode scalar; `vars.len()` must equal
    /// `n_vars`.
    pub fn eval_generic<T: Scalar>(&self, vars: &[T]) -> Result<T> {
        check_dim(self.n_vars, vars.len())?;
        self.root.eval(vars)
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        self.eval_generic(x)
    }

    /// Value and gradient in one forward pass.
    pub fn value_and_gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        check_dim(self.n_vars, x.len())?;
        let vars: Vec<Dual> = x
            .iter()
            .enumerate()
            .map(|(i, &v)| Dual::variable(v, i, self.n_vars))
            .collect();
        let d = self.root.eval(&vars)?;
        Ok((d.value, d.grad))
    }

    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.value_and_gradient(x)?.1)
    }

    pub fn second_order(&self, x: &[f64]) -> Result<HyperDual> {
        check_dim(self.n_vars, x.len())?;
        let vars: Vec<HyperDual> = x
            .iter()
            .enumerate()
            .map(|(i, &v)| HyperDual::variable(v, i, self.n_vars))
            .collect();
        self.root.eval(&vars)
    }

    /// Symmetric matrix of second partials, row-major.
    pub fn hessian(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        Ok(self.second_order(x)?.hessian_rows())
    }
}

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.root.fmt(f)
    }
}

impl Serialize for Expression {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ex(text: &str, n: usize) -> Expression {
        Expression::parse(text, n).unwrap()
    }

    #[test]
    fn parses_paper_style_inputs() {
        let e = ex("x1^2 + x2^2", 2);
        assert_eq!(e.polynomial_degree(), Some(2));
        let e = ex("x1^3 - 3*x1*x2^3 + flat(x2)", 2);
        assert_eq!(e.polynomial_degree(), None);
        assert_eq!(e.to_string(), "(((x1^3) - ((3 * x1) * (x2^3))) + flat(x2))");
    }

    #[test]
    fn rejects_bad_variables_and_syntax() {
        assert!(matches!(
            Expression::parse("x3 + 1", 2),
            Err(Error::Parse(crate::error::ParseError::VariableOutOfRange { index: 3, .. }))
        ));
        assert!(matches!(
            Expression::parse("y + 1", 2),
            Err(Error::Parse(crate::error::ParseError::UnknownIdentifier { .. }))
        ));
        let err = Expression::parse("x1 + * 2", 1).unwrap_err();
        match err {
            Error::Parse(p) => assert_eq!(p.position(), 5),
            other => panic!("{other:?}"),
        }
        assert!(Expression::parse("x1^1.5", 1).is_err());
        assert!(Expression::parse("(x1 + 1", 1).is_err());
        assert!(Expression::parse("exp x1", 1).is_err());
    }

    #[test]
    fn precedence_and_unary_minus() {
        assert_eq!(ex("-x1^2", 1).evaluate(&[3.0]).unwrap(), -9.0);
        assert_eq!(ex("2 - 3 - 4", 1).evaluate(&[0.0]).unwrap(), -5.0);
        assert_eq!(ex("8 / 4 / 2", 1).evaluate(&[0.0]).unwrap(), 1.0);
        assert_eq!(ex("x1^-2", 1).evaluate(&[2.0]).unwrap(), 0.25);
        assert_eq!(ex("1.5e2 + .5", 1).evaluate(&[0.0]).unwrap(), 150.5);
    }

    #[test]
    fn evaluates_examples() {
        assert_eq!(ex("x1^2 + x2^2", 2).evaluate(&[1.0, 2.0]).unwrap(), 5.0);
        assert_eq!(ex("flat(x1)", 1).evaluate(&[0.0]).unwrap(), 0.0);
        let v = ex("flat(x1)", 1).evaluate(&[1.0]).unwrap();
        assert!((v - 0.3678794412).abs() < 1e-10);
    }

    #[test]
    fn domain_errors_name_the_node() {
        let err = ex("log(x1)", 1).evaluate(&[0.0]).unwrap_err();
        assert!(matches!(&err, Error::Domain { node, .. } if node == "log(x1)"));
        let err = ex("1 / x1", 1).evaluate(&[0.0]).unwrap_err();
        assert!(matches!(&err, Error::Domain { node, .. } if node == "(1 / x1)"));
        assert!(ex("sqrt(x1)", 1).evaluate(&[0.0]).is_ok());
        assert!(ex("sqrt(x1)", 1).gradient(&[0.0]).is_err());
        assert!(ex("x1^-1", 1).evaluate(&[0.0]).is_err());
    }

    #[test]
    fn gradients_and_hessians() {
        assert_eq!(ex("x1^2 + x2^2", 2).gradient(&[1.0, 2.0]).unwrap(), vec![2.0, 4.0]);
        assert_eq!(ex("flat(x1)", 1).gradient(&[0.0]).unwrap(), vec![0.0]);
        assert_eq!(
            ex("0.5*(x1^2 + 3*x2^2)", 2).hessian(&[0.0, 0.0]).unwrap(),
            vec![vec![1.0, 0.0], vec![0.0, 3.0]]
        );
        assert_eq!(
            ex("0.5*(2*x1^2 + 2*x1*x2 + 5*x2^2) + flat(x1)", 2)
                .hessian(&[0.0, 0.0])
                .unwrap(),
            vec![vec![2.0, 1.0], vec![1.0, 5.0]]
        );
        assert_eq!(
            ex("x1*x2", 2).hessian(&[0.3, -1.7]).unwrap(),
            vec![vec![0.0, 1.0], vec![1.0, 0.0]]
        );
    }

    #[test]
    fn flat_channels_vanish_at_zero() {
        let e = ex("flat(x1)", 1);
        let h = e.second_order(&[0.0]).unwrap();
        assert_eq!((h.value, h.grad[0], h.hess[0]), (0.0, 0.0, 0.0));
        // tiny arguments underflow to exact zero instead of NaN
        let h = e.second_order(&[1e-200]).unwrap();
        assert_eq!((h.value, h.grad[0], h.hess[0]), (0.0, 0.0, 0.0));
    }

    #[test]
    fn canonical_print_reparses() {
        let e = ex("-x1^-2 * (3 - x2) / exp(x1) + flat(sin(x2))", 2);
        let again = ex(&e.to_string(), 2);
        assert_eq!(e, again);
    }

    #[test]
    fn serializes_as_canonical_text() {
        let e = ex("x1 * cos(x2)", 2);
        assert_eq!(serde_json::to_string(&e).unwrap(), "\"(x1 * cos(x2))\"");
    }
}
