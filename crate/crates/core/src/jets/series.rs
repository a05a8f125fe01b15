//! Truncated multivariate power series (Taylor mode).

use std::collections::HashMap;
use std::sync::Arc;

use super::poly::MultiIndex;
use crate::expr::Scalar;

/// Monomial basis of total degree `<= order` in `n` variables plus the
/// truncated product table.
#[derive(Debug)]
pub(crate) struct SeriesSpace {
    pub n: usize,
    pub order: usize,
    pub monomials: Vec<MultiIndex>,
    /// (i, j, k): monomial i times monomial j lands on monomial k.
    products: Vec<(u32, u32, u32)>,
    /// Indices of the first-order monomials e_0..e_{n-1}.
    units: Vec<usize>,
}

impl SeriesSpace {
    pub fn new(n: usize, order: usize) -> Arc<Self> {
        let monomials = MultiIndex::all_up_to(n, order as u32);
        let index: HashMap<&MultiIndex, usize> =
            monomials.iter().enumerate().map(|(i, m)| (m, i)).collect();
        let mut products = Vec::new();
        for (i, a) in monomials.iter().enumerate() {
            for (j, b) in monomials.iter().enumerate() {
                if a.degree() + b.degree() <= order as u32 {
                    let k = index[&a.add(b)];
                    products.push((i as u32, j as u32, k as u32));
                }
            }
        }
        let units = (0..n).map(|i| index[&MultiIndex::unit(n, i)]).collect();
        Arc::new(SeriesSpace {
            n,
            order,
            monomials,
            products,
            units,
        })
    }

    pub fn len(&self) -> usize {
        self.monomials.len()
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Series {
    space: Arc<SeriesSpace>,
    pub coeffs: Vec<f64>,
}

impl Series {
    pub fn constant(space: &Arc<SeriesSpace>, c: f64) -> Self {
        let mut coeffs = vec![0.0; space.len()];
        coeffs[0] = c;
        Series {
            space: Arc::clone(space),
            coeffs,
        }
    }

    /// `value + t_i`
    pub fn variable(space: &Arc<SeriesSpace>, i: usize, value: f64) -> Self {
        let mut s = Self::constant(space, value);
        if space.order > 0 {
            s.coeffs[space.units[i]] = 1.0;
        }
        s
    }

    /// `value + Σ_i d_i t` in a univariate space.
    pub fn line(space: &Arc<SeriesSpace>, value: f64, slope: f64) -> Self {
        debug_assert_eq!(space.n, 1);
        let mut s = Self::constant(space, value);
        if space.order > 0 {
            s.coeffs[1] = slope;
        }
        s
    }
}

impl Scalar for Series {
    fn constant_like(&self, c: f64) -> Self {
        Series::constant(&self.space, c)
    }
    fn value(&self) -> f64 {
        self.coeffs[0]
    }
    fn order(&self) -> usize {
        self.space.order
    }
    fn add(&self, o: &Self) -> Self {
        Series {
            space: Arc::clone(&self.space),
            coeffs: self.coeffs.iter().zip(&o.coeffs).map(|(a, b)| a + b).collect(),
        }
    }
    fn sub(&self, o: &Self) -> Self {
        Series {
            space: Arc::clone(&self.space),
            coeffs: self.coeffs.iter().zip(&o.coeffs).map(|(a, b)| a - b).collect(),
        }
    }
    fn mul(&self, o: &Self) -> Self {
        let mut coeffs = vec![0.0; self.coeffs.len()];
        for &(i, j, k) in &self.space.products {
            let (a, b) = (self.coeffs[i as usize], o.coeffs[j as usize]);
            if a != 0.0 && b != 0.0 {
                coeffs[k as usize] += a * b;
            }
        }
        Series {
            space: Arc::clone(&self.space),
            coeffs,
        }
    }
    fn neg(&self) -> Self {
        Series {
            space: Arc::clone(&self.space),
            coeffs: self.coeffs.iter().map(|c| -c).collect(),
        }
    }
    fn compose(&self, c: &[f64]) -> Self {
        // φ(a0 + h) = Σ c_k h^k, Horner in h
        let mut h = self.clone();
        h.coeffs[0] = 0.0;
        let top = c.len() - 1;
        let mut acc = Series::constant(&self.space, c[top]);
        for k in (0..top).rev() {
            acc = acc.mul(&h);
            acc.coeffs[0] += c[k];
        }
        acc
    }
}
