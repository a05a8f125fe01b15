#![allow(dead_code)]

use loja_jet::jets::SparsePolynomial;
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

/// Random expression text in `x1..xn` that is defined and smooth on all of ℝⁿ.
pub fn random_expr_text(rng: &mut impl Rng, n: usize, depth: u32) -> String {
    if depth == 0 || rng.gen_bool(0.25) {
        return if rng.gen_bool(0.7) {
            format!("x{}", rng.gen_range(1..=n))
        } else {
            format!("({:.2})", rng.gen_range(-2.0..2.0))
        };
    }
    let a = random_expr_text(rng, n, depth - 1);
    match rng.gen_range(0..11) {
        0 => format!("({a} + {})", random_expr_text(rng, n, depth - 1)),
        1 => format!("({a} - {})", random_expr_text(rng, n, depth - 1)),
        2 | 3 => format!("({a} * {})", random_expr_text(rng, n, depth - 1)),
        4 => format!("({a} / (2 + cos({})))", random_expr_text(rng, n, depth - 1)),
        5 => format!("({a})^{}", rng.gen_range(2..=3)),
        6 => format!("exp(0.5*sin({a}))"),
        7 => format!("sin({a})"),
        8 => format!("cos({a})"),
        9 => format!("log(1 + ({a})^2)"),
        _ => format!("sqrt(1 + ({a})^2)"),
    }
}

pub fn random_unit_ball_point(rng: &mut impl Rng, n: usize, radius: f64) -> Vec<f64> {
    loop {
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-radius..radius)).collect();
        if x.iter().map(|v| v * v).sum::<f64>() <= radius * radius {
            return x;
        }
    }
}

/// Dense random polynomial of degree ≤ `deg` with coefficients in `[-1, 1]`.
pub fn random_poly(rng: &mut impl Rng, n: usize, deg: u32) -> SparsePolynomial {
    let mut terms = Vec::new();
    for a in loja_jet::MultiIndex::all_up_to(n, deg) {
        if rng.gen_bool(0.7) {
            terms.push((a.exponents().to_vec(), (rng.gen_range(-1.0f64..1.0) * 100.0).round() / 100.0));
        }
    }
    SparsePolynomial::from_terms(n, terms).unwrap()
}

pub fn random_orthogonal(rng: &mut impl Rng, n: usize) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    g.qr().q()
}

pub fn random_spd(rng: &mut impl Rng, n: usize, lo: f64, hi: f64) -> DMatrix<f64> {
    let q = random_orthogonal(rng, n);
    let d = DMatrix::from_diagonal(&nalgebra::DVector::from_fn(n, |_, _| rng.gen_range(lo..hi)));
    let a = &q * d * q.transpose();
    (&a + a.transpose()) * 0.5
}

pub fn to_rows(a: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..a.nrows()).map(|i| (0..a.ncols()).map(|j| a[(i, j)]).collect()).collect()
}

/// `xᵀAx` as a polynomial.
pub fn quadratic_poly(a: &DMatrix<f64>) -> SparsePolynomial {
    let n = a.nrows();
    let mut terms = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let mut e = vec![0u32; n];
            e[i] += 1;
            e[j] += 1;
            terms.push((e, a[(i, j)]));
        }
    }
    SparsePolynomial::from_terms(n, terms).unwrap()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridVerdict {
    Min,
    NotMin,
    Inconclusive,
}

pub const GRID_HALF_WIDTH: f64 = 0.1;
pub const GRID_POINTS: usize = 201;
const GRID_TOL: f64 = 1e-15;
const GRID_BANDS: usize = 6;
const INNER_BANDS: usize = 3;

/// Shell minima of `p − p(0)` over a 201×201 grid on `[-0.1, 0.1]²`, in
/// dyadic bands `(ρ/2, ρ]`, `ρ = 0.1·2^-k`, outermost first.
pub fn grid_shell_minima(p: &SparsePolynomial) -> Vec<f64> {
    let step = 2.0 * GRID_HALF_WIDTH / (GRID_POINTS - 1) as f64;
    let p0 = p.evaluate(&[0.0, 0.0]).unwrap();
    let mut mins = vec![f64::INFINITY; GRID_BANDS];
    for i in 0..GRID_POINTS {
        for j in 0..GRID_POINTS {
            let x = [-GRID_HALF_WIDTH + i as f64 * step, -GRID_HALF_WIDTH + j as f64 * step];
            let rho = (x[0] * x[0] + x[1] * x[1]).sqrt();
            if rho == 0.0 || rho > GRID_HALF_WIDTH {
                continue;
            }
            let k = (GRID_HALF_WIDTH / rho).log2().floor() as usize;
            if k < GRID_BANDS {
                let v = p.evaluate(&x).unwrap() - p0;
                mins[k] = mins[k].min(v);
            }
        }
    }
    mins
}

/// Min if every band minimum is nonnegative, not-min if one of the three
/// innermost bands has a negative minimum.
pub fn grid_oracle(p: &SparsePolynomial) -> GridVerdict {
    let mins = grid_shell_minima(p);
    if mins.iter().all(|&m| m >= -GRID_TOL) {
        GridVerdict::Min
    } else if mins[GRID_BANDS - INNER_BANDS..].iter().any(|&m| m < -GRID_TOL) {
        GridVerdict::NotMin
    } else {
        GridVerdict::Inconclusive
    }
}
