//! Taylor jets `T^r f(z)`, remainder diagnostics and flat-class checks.
//!
//! Coefficients come from Taylor-mode propagation of truncated power series
//! through the expression tree. In up to three variables the full
//! multivariate series is propagated. Above that, each homogeneous part is
//! recovered by least squares from univariate series along the lattice
//! directions `β/r`, `|β| = r`.

pub mod poly;
mod series;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

pub use poly::{MultiIndex, SparsePolynomial};
use series::{Series, SeriesSpace};

use crate::error::{check_dim, Error, Result};
use crate::expr::{Expression, Point};
use crate::sampling::ShellSampler;
use crate::sigma::SigmaSet;

/// Coefficient tolerance for "vanishing" jet entries.
pub const JET_ZERO_TOL: f64 = 1e-9;

/// Largest dimension handled by the full multivariate series.
pub const MULTIVARIATE_MAX_DIM: usize = 3;

/// `f(z)` plus the Taylor polynomial in displacement coordinates `x − z`,
/// with terms of order `1..=degree`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Jet {
    pub center: Point,
    pub degree: u32,
    pub poly: SparsePolynomial,
    pub base_value: f64,
}

impl Jet {
    pub fn dim(&self) -> usize {
        self.center.dim()
    }

    /// `f(z) + T(x − z)`
    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        Ok(self.base_value + self.poly.evaluate(&self.displacement(x)?)?)
    }

    pub fn displacement(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), x.len())?;
        Ok(x.iter().zip(self.center.iter()).map(|(a, z)| a - z).collect())
    }

    /// Largest `|coefficient|` of orders `1..=up_to`.
    pub fn max_coefficient_up_to(&self, up_to: u32) -> f64 {
        self.poly
            .terms()
            .filter(|(a, _)| a.degree() <= up_to)
            .fold(0.0, |m, (_, c)| m.max(c.abs()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum JetMethod {
    /// Multivariate for `n <= 3`, directional otherwise.
    Auto,
    Multivariate,
    Directional,
}

pub fn taylor_jet(e: &Expression, z: &Point, r: u32) -> Result<Jet> {
    taylor_jet_with(e, z, r, JetMethod::Auto)
}

pub fn taylor_jet_with(e: &Expression, z: &Point, r: u32, method: JetMethod) -> Result<Jet> {
    check_dim(e.n_vars(), z.dim())?;
    if r == 0 {
        return Err(Error::InvalidArgument("jet degree must be positive".into()));
    }
    let n = z.dim();
    let directional = match method {
        JetMethod::Auto => n > MULTIVARIATE_MAX_DIM,
        JetMethod::Multivariate => false,
        JetMethod::Directional => true,
    };
    let (base_value, poly) = if directional {
        directional_jet(e, z, r)?
    } else {
        multivariate_jet(e, z, r)?
    };
    Ok(Jet {
        center: z.clone(),
        degree: r,
        poly,
        base_value,
    })
}

fn multivariate_jet(e: &Expression, z: &Point, r: u32) -> Result<(f64, SparsePolynomial)> {
    let n = z.dim();
    let space = SeriesSpace::new(n, r as usize);
    let vars: Vec<Series> = (0..n).map(|i| Series::variable(&space, i, z[i])).collect();
    let s = e.eval_generic(&vars)?;
    let mut poly = SparsePolynomial::zero(n);
    for (m, &c) in space.monomials.iter().zip(&s.coeffs).skip(1) {
        poly.add_term(m.clone(), c);
    }
    Ok((s.coeffs[0], poly))
}

fn directional_jet(e: &Expression, z: &Point, r: u32) -> Result<(f64, SparsePolynomial)> {
    let n = z.dim();
    let space = SeriesSpace::new(1, r as usize);
    let dirs = lattice_directions(n, r);
    // row d of `along`: t^d coefficients of f(z + t v) for every direction v
    let mut along = vec![Vec::with_capacity(dirs.len()); r as usize + 1];
    for v in &dirs {
        let vars: Vec<Series> = (0..n).map(|i| Series::line(&space, z[i], v[i])).collect();
        let s = e.eval_generic(&vars)?;
        for (d, row) in along.iter_mut().enumerate() {
            row.push(s.coeffs[d]);
        }
    }
    let base = along[0][0];
    let mut poly = SparsePolynomial::zero(n);
    for d in 1..=r {
        let monos = MultiIndex::all_of_degree(n, d);
        let a = DMatrix::from_fn(dirs.len(), monos.len(), |i, j| monos[j].monomial(&dirs[i]));
        let b = DVector::from_column_slice(&along[d as usize]);
        if b.iter().all(|&x| x == 0.0) {
            continue;
        }
        let svd = a.svd(true, true);
        let eps = 1e-13 * svd.singular_values.max();
        let c = svd
            .solve(&b, eps)
            .map_err(|m| Error::InvalidArgument(format!("directional jet solve failed: {m}")))?;
        for (m, &v) in monos.into_iter().zip(c.iter()) {
            poly.add_term(m, v);
        }
    }
    Ok((base, poly))
}

/// Unit vectors along `β` for `|β| = r`, with every sign pattern on the
/// nonzero entries (the first nonzero entry kept positive).
fn lattice_directions(n: usize, r: u32) -> Vec<Vec<f64>> {
    let mut dirs = Vec::new();
    for b in MultiIndex::all_of_degree(n, r) {
        let base: Vec<f64> = b.exponents().iter().map(|&k| f64::from(k)).collect();
        let len = base.iter().map(|v| v * v).sum::<f64>().sqrt();
        let nz: Vec<usize> = (0..n).filter(|&i| base[i] != 0.0).collect();
        for mask in 0..1u64 << (nz.len() - 1) {
            let mut v: Vec<f64> = base.iter().map(|x| x / len).collect();
            for (bit, &i) in nz.iter().skip(1).enumerate() {
                if mask >> bit & 1 == 1 {
                    v[i] = -v[i];
                }
            }
            dirs.push(v);
        }
    }
    dirs
}

/// Sampled remainder sizes on one shell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RemainderShell {
    pub radius: f64,
    /// max |R(x)| / ‖x − z‖^r
    pub value_ratio: f64,
    /// max ‖∇R(x)‖ / ‖x − z‖^(r−1)
    pub gradient_ratio: f64,
    pub samples: usize,
}

/// Sup ratios of the remainder `R = f − f(z) − T` over annular shells
/// around the jet center.
pub fn remainder_ratio(
    e: &Expression,
    jet: &Jet,
    radii: &[f64],
    samples_per_shell: usize,
    seed: u64,
) -> Result<Vec<RemainderShell>> {
    check_dim(e.n_vars(), jet.dim())?;
    let sampler = ShellSampler::new(jet.center.clone(), radii.to_vec(), samples_per_shell, seed)?;
    let grad_t = jet.poly.gradient();
    let r = jet.degree as i32;
    let mut out = Vec::with_capacity(radii.len());
    for (k, &rho) in radii.iter().enumerate() {
        let mut shell = RemainderShell {
            radius: rho,
            value_ratio: 0.0,
            gradient_ratio: 0.0,
            samples: 0,
        };
        for x in sampler.shell_points(k) {
            let Ok((fx, gx)) = e.value_and_gradient(&x) else {
                continue;
            };
            let d = jet.displacement(&x)?;
            let dist = d.iter().map(|v| v * v).sum::<f64>().sqrt();
            let rem = fx - jet.base_value - jet.poly.evaluate(&d)?;
            let mut gsq = 0.0;
            for (gi, p) in gx.iter().zip(&grad_t) {
                let v = gi - p.evaluate(&d)?;
                gsq += v * v;
            }
            shell.value_ratio = shell.value_ratio.max(rem.abs() / dist.powi(r));
            shell.gradient_ratio = shell.gradient_ratio.max(gsq.sqrt() / dist.powi(r - 1));
            shell.samples += 1;
        }
        out.push(shell);
    }
    Ok(out)
}

/// Jets of a candidate flat function at one sampled point of Σ.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SigmaJetCheck {
    pub point: Vec<f64>,
    /// max(|g(z)|, max |coefficient|)
    pub max_abs_coefficient: f64,
    pub vanishes: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Bd31Shell {
    pub radius: f64,
    /// Σ points found in the ball of this radius.
    pub sigma_points: usize,
    /// No Σ point in the ball; ratios not computed.
    pub skipped: bool,
    /// sup |g(x)| / dist(x, Σ)^r
    pub value_ratio: Option<f64>,
    /// sup ‖∇g(x)‖ / dist(x, Σ)^(r−1)
    pub gradient_ratio: Option<f64>,
    /// Samples used (those with dist(x, Σ) > 0).
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlatnessReport {
    /// Every tested Σ point has a vanishing r-jet (value included).
    pub in_class: bool,
    pub tested_points: Vec<SigmaJetCheck>,
    pub bd31_ratios: Vec<Bd31Shell>,
    pub tolerance: f64,
}

/// Number of Σ points whose jets are examined per shell.
const FLATNESS_SIGMA_POINTS: usize = 25;

/// Sampled check that `g` lies in the flat class: `g(z) = 0` and
/// `T^r g(z) ≡ 0` at Σ points near `xbar`, plus per-shell sup ratios of
/// `|g|/dist^r` and `‖∇g‖/dist^(r−1)`.
pub fn flatness_check(
    g: &Expression,
    sigma: &SigmaSet,
    xbar: &Point,
    r: u32,
    radii: &[f64],
    samples_per_shell: usize,
    seed: u64,
) -> Result<FlatnessReport> {
    check_dim(g.n_vars(), xbar.dim())?;
    check_dim(sigma.dim(), xbar.dim())?;
    if r == 0 {
        return Err(Error::InvalidArgument("r must be positive".into()));
    }
    sigma.resolve()?;
    let sampler = ShellSampler::new(xbar.clone(), radii.to_vec(), samples_per_shell, seed)?;
    let mut tested: Vec<SigmaJetCheck> = Vec::new();
    let mut shells = Vec::with_capacity(radii.len());
    let ri = r as i32;
    for (k, &rho) in radii.iter().enumerate() {
        let mut rng = sampler.shell_rng(k);
        let zs = sigma.sample_points(xbar, rho, FLATNESS_SIGMA_POINTS, &mut rng)?;
        if zs.is_empty() {
            shells.push(Bd31Shell {
                radius: rho,
                sigma_points: 0,
                skipped: true,
                value_ratio: None,
                gradient_ratio: None,
                samples: 0,
            });
            continue;
        }
        for z in &zs {
            if tested.iter().any(|t| &t.point == z) {
                continue;
            }
            let jet = taylor_jet(g, &Point::new(z.clone())?, r)?;
            let m = jet.base_value.abs().max(jet.poly.max_abs_coefficient());
            tested.push(SigmaJetCheck {
                point: z.clone(),
                max_abs_coefficient: m,
                vanishes: m <= JET_ZERO_TOL,
            });
        }
        let mut shell = Bd31Shell {
            radius: rho,
            sigma_points: zs.len(),
            skipped: false,
            value_ratio: Some(0.0),
            gradient_ratio: Some(0.0),
            samples: 0,
        };
        let (mut vr, mut gr) = (0.0f64, 0.0f64);
        for x in sampler.shell_points(k) {
            let d = sigma.distance(&x)?;
            if !(d > 0.0) || !d.is_finite() {
                continue;
            }
            let (gx, grad) = g.value_and_gradient(&x)?;
            let gn = grad.iter().map(|v| v * v).sum::<f64>().sqrt();
            vr = vr.max(gx.abs() / d.powi(ri));
            gr = gr.max(gn / d.powi(ri - 1));
            shell.samples += 1;
        }
        shell.value_ratio = Some(vr);
        shell.gradient_ratio = Some(gr);
        shells.push(shell);
    }
    let in_class = !tested.is_empty() && tested.iter().all(|t| t.vanishes);
    Ok(FlatnessReport {
        in_class,
        tested_points: tested,
        bd31_ratios: shells,
        tolerance: JET_ZERO_TOL,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ex(t: &str, n: usize) -> Expression {
        Expression::parse(t, n).unwrap()
    }

    fn coef(j: &Jet, e: &[u32]) -> f64 {
        j.poly.coefficient(&MultiIndex::new(e.to_vec()))
    }

    #[test]
    fn exp_jet() {
        let j = taylor_jet(&ex("exp(x1)", 1), &Point::origin(1), 3).unwrap();
        assert_eq!(j.base_value, 1.0);
        for (k, want) in [(1, 1.0), (2, 0.5), (3, 1.0 / 6.0)] {
            assert!((coef(&j, &[k]) - want).abs() < 1e-15);
        }
        assert_eq!(j.poly.len(), 3);
    }

    #[test]
    fn flat_remainder_drops_out() {
        let j = taylor_jet(&ex("x1^2 + flat(x1)", 1), &Point::origin(1), 2).unwrap();
        assert_eq!(j.poly.to_string(), "1 * x1^2");
        assert_eq!(j.base_value, 0.0);

        let j = taylor_jet(&ex("x1^3 - 3*x1*x2^3 + flat(x2)", 2), &Point::origin(2), 4).unwrap();
        assert_eq!(j.poly.to_string(), "1 * x1^3 - 3 * x1^1 * x2^3");
    }

    #[test]
    fn mixed_partials_are_merged() {
        // (x + y)^3 / 6 has ∂x∂x∂y = 1 etc.; coefficients are multinomials / 6
        let j = taylor_jet(&ex("(x1 + x2)^3", 2), &Point::origin(2), 3).unwrap();
        assert_eq!(coef(&j, &[2, 1]), 3.0);
        assert_eq!(coef(&j, &[1, 2]), 3.0);
        assert_eq!(coef(&j, &[3, 0]), 1.0);
    }

    #[test]
    fn directional_route_matches_multivariate() {
        let e = ex("exp(x1 - 2*x3) * cos(x2 + x4) + x1*x2*x3*x4 + flat(x4) + log(2 + x2)", 4);
        let z = Point::new(vec![0.1, -0.2, 0.3, 0.0]).unwrap();
        for r in 1..=4 {
            let a = taylor_jet_with(&e, &z, r, JetMethod::Multivariate).unwrap();
            let b = taylor_jet_with(&e, &z, r, JetMethod::Directional).unwrap();
            assert_eq!(a.base_value, b.base_value);
            let diff = a.poly.max_abs_diff(&b.poly);
            assert!(diff < 1e-10, "r = {r}: {diff}");
        }
    }

    #[test]
    fn remainder_ratio_examples() {
        let e = ex("x1^2", 1);
        let j = taylor_jet(&e, &Point::origin(1), 2).unwrap();
        for s in remainder_ratio(&e, &j, &[1e-1, 1e-2], 32, 1).unwrap() {
            assert_eq!(s.value_ratio, 0.0);
            assert_eq!(s.gradient_ratio, 0.0);
        }

        let e = ex("exp(x1)", 1);
        let j = taylor_jet(&e, &Point::origin(1), 2).unwrap();
        let s = remainder_ratio(&e, &j, &[1e-1, 1e-2, 1e-3], 64, 1).unwrap();
        // R ≈ x³/6, so |R|/x² ≈ |x|/6 <= ρ/6 (slightly above from the x⁴ term)
        for sh in &s {
            assert!(sh.value_ratio <= sh.radius / 6.0 * 1.1 && sh.value_ratio >= sh.radius / 12.0 * 0.9);
        }
        let drop = s[0].value_ratio / s[1].value_ratio;
        assert!((drop - 10.0).abs() < 1.5, "{drop}");

        assert!(remainder_ratio(&e, &j, &[], 8, 1).is_err());
    }

    #[test]
    fn flatness_examples() {
        let origin1 = Point::origin(1);
        let rep = flatness_check(&ex("flat(x1)", 1), &SigmaSet::singleton(origin1.clone()), &origin1, 2, &[1e-1, 1e-2], 64, 3).unwrap();
        assert!(rep.in_class);
        for s in &rep.bd31_ratios {
            assert!(s.value_ratio.unwrap() <= 1.0 && s.gradient_ratio.unwrap() <= 1.0);
        }

        let rep = flatness_check(&ex("x1^2", 1), &SigmaSet::singleton(origin1.clone()), &origin1, 2, &[1e-1], 16, 3).unwrap();
        assert!(!rep.in_class);

        let origin2 = Point::origin(2);
        let axis = SigmaSet::affine(origin2.clone(), vec![vec![0.0, 1.0]]).unwrap();
        for r in [2u32, 3] {
            let g = ex(&format!("x1^{} * flat(x2)", r + 1), 2);
            let rep = flatness_check(&g, &axis, &origin2, r, &[1e-1, 1e-2], 64, 5).unwrap();
            assert!(rep.in_class, "r = {r}");
            assert!(rep.tested_points.len() > 1);
            for s in &rep.bd31_ratios {
                assert!(s.value_ratio.unwrap() <= 1.0);
            }
        }
    }

    #[test]
    fn empty_sigma_neighbourhood_skips_shell() {
        let far = SigmaSet::singleton(Point::new(vec![5.0]).unwrap());
        let rep = flatness_check(&ex("flat(x1)", 1), &far, &Point::origin(1), 2, &[1e-1], 8, 1).unwrap();
        assert!(rep.bd31_ratios[0].skipped);
        assert!(!rep.in_class);
    }
}
