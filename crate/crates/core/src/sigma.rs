//! The reference set Σ and the critical set {∇f = 0}.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::expr::{Expression, Point};
use crate::sampling::sample_annulus;

const ORTHONORMAL_TOL: f64 = 1e-12;

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `offset + span(basis)` with an orthonormal basis.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineSubspace {
    offset: Point,
    basis: Vec<Vec<f64>>,
}

impl AffineSubspace {
    /// Requires `basis` to be orthonormal to within 1e-12.
    pub fn new(offset: Point, basis: Vec<Vec<f64>>) -> Result<Self> {
        let n = offset.dim();
        for (i, b) in basis.iter().enumerate() {
            check_dim(n, b.len())?;
            if (norm(b) - 1.0).abs() > ORTHONORMAL_TOL {
                return Err(Error::InvalidArgument(format!("basis vector {i} is not unit length")));
            }
            for (j, c) in basis.iter().enumerate().skip(i + 1) {
                if dot(b, c).abs() > ORTHONORMAL_TOL {
                    return Err(Error::InvalidArgument(format!(
                        "basis vectors {i} and {j} are not orthogonal"
                    )));
                }
            }
        }
        Ok(AffineSubspace { offset, basis })
    }

    /// Gram–Schmidt on `spanning`; numerically dependent vectors are dropped.
    pub fn from_spanning(offset: Point, spanning: &[Vec<f64>]) -> Result<Self> {
        let n = offset.dim();
        let mut basis: Vec<Vec<f64>> = Vec::new();
        for v in spanning {
            check_dim(n, v.len())?;
            let scale = norm(v);
            let mut w = v.clone();
            for _ in 0..2 {
                for b in &basis {
                    let d = dot(&w, b);
                    for (wi, bi) in w.iter_mut().zip(b) {
                        *wi -= d * bi;
                    }
                }
            }
            let len = norm(&w);
            if len > 1e-10 * scale.max(1e-300) {
                basis.push(w.iter().map(|x| x / len).collect());
            }
        }
        Self::new(offset, basis)
    }

    pub fn offset(&self) -> &Point {
        &self.offset
    }

    pub fn basis(&self) -> &[Vec<f64>] {
        &self.basis
    }

    /// Orthogonal projection of `x` onto the subspace.
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        let v: Vec<f64> = x.iter().zip(self.offset.iter()).map(|(a, o)| a - o).collect();
        let mut p = self.offset.to_vec();
        for b in &self.basis {
            let c = dot(&v, b);
            for (pi, bi) in p.iter_mut().zip(b) {
                *pi += c * bi;
            }
        }
        p
    }

    /// ‖(x − o) − B Bᵀ (x − o)‖
    pub fn distance(&self, x: &[f64]) -> f64 {
        let mut r: Vec<f64> = x.iter().zip(self.offset.iter()).map(|(a, o)| a - o).collect();
        let v = r.clone();
        for b in &self.basis {
            let c = dot(&v, b);
            for (ri, bi) in r.iter_mut().zip(b) {
                *ri -= c * bi;
            }
        }
        norm(&r)
    }
}

/// Result of the multi-start Newton search for {∇f = 0}.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriticalSetEstimate {
    pub points: Vec<Vec<f64>>,
    pub n_starts: usize,
    pub converged_starts: usize,
    pub tol: f64,
    /// Set when no start converged.
    pub warning: Option<String>,
}

/// Σ given as the estimated critical set of `source` in a ball.
#[derive(Debug)]
pub struct CriticalSigma {
    source: Expression,
    center: Point,
    radius: f64,
    n_starts: usize,
    tol: f64,
    cache: OnceLock<CriticalSetEstimate>,
}

impl Clone for CriticalSigma {
    fn clone(&self) -> Self {
        let cache = OnceLock::new();
        if let Some(v) = self.cache.get() {
            let _ = cache.set(v.clone());
        }
        CriticalSigma {
            source: self.source.clone(),
            center: self.center.clone(),
            radius: self.radius,
            n_starts: self.n_starts,
            tol: self.tol,
            cache,
        }
    }
}

impl CriticalSigma {
    pub fn estimate(&self) -> Option<&CriticalSetEstimate> {
        self.cache.get()
    }
}

#[derive(Debug, Clone)]
pub enum SigmaSet {
    Singleton(Point),
    Affine(AffineSubspace),
    PointCloud(Vec<Point>),
    CriticalSet(CriticalSigma),
}

impl SigmaSet {
    pub fn singleton(p: Point) -> Self {
        SigmaSet::Singleton(p)
    }

    pub fn affine(offset: Point, basis: Vec<Vec<f64>>) -> Result<Self> {
        Ok(SigmaSet::Affine(AffineSubspace::new(offset, basis)?))
    }

    pub fn point_cloud(points: Vec<Point>) -> Result<Self> {
        let Some(first) = points.first() else {
            return Err(Error::InvalidArgument("point cloud must be nonempty".into()));
        };
        let n = first.dim();
        for p in &points {
            check_dim(n, p.dim())?;
        }
        Ok(SigmaSet::PointCloud(points))
    }

    /// Lazily estimated critical set; call [`SigmaSet::resolve`] before
    /// distance queries.
    pub fn critical_set(source: Expression, center: Point, radius: f64, n_starts: usize, tol: f64) -> Result<Self> {
        check_dim(source.n_vars(), center.dim())?;
        if !(radius > 0.0) {
            return Err(Error::InvalidArgument("critical-set ball radius must be positive".into()));
        }
        Ok(SigmaSet::CriticalSet(CriticalSigma {
            source,
            center,
            radius,
            n_starts,
            tol,
            cache: OnceLock::new(),
        }))
    }

    pub fn dim(&self) -> usize {
        match self {
            SigmaSet::Singleton(p) => p.dim(),
            SigmaSet::Affine(a) => a.offset.dim(),
            SigmaSet::PointCloud(ps) => ps[0].dim(),
            SigmaSet::CriticalSet(c) => c.center.dim(),
        }
    }

    pub fn is_resolved(&self) -> bool {
        match self {
            SigmaSet::CriticalSet(c) => c.cache.get().is_some(),
            _ => true,
        }
    }

    /// Runs the critical-set estimate once; later calls are no-ops.
    pub fn resolve(&self) -> Result<()> {
        if let SigmaSet::CriticalSet(c) = self {
            if c.cache.get().is_none() {
                let est = estimate_critical_set(&c.source, &c.center, c.radius, c.n_starts, c.tol)?;
                let _ = c.cache.set(est);
            }
        }
        Ok(())
    }

    /// Euclidean distance; `∞` for an empty resolved critical set.
    pub fn distance(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        Ok(match self {
            SigmaSet::Singleton(p) => dist(p, x),
            SigmaSet::Affine(a) => a.distance(x),
            SigmaSet::PointCloud(ps) => ps.iter().map(|p| dist(p, x)).fold(f64::INFINITY, f64::min),
            SigmaSet::CriticalSet(c) => {
                let est = c.cache.get().ok_or(Error::SigmaUnresolved)?;
                est.points.iter().map(|p| dist(p, x)).fold(f64::INFINITY, f64::min)
            }
        })
    }

    /// Up to `count` points of Σ inside the closed ball `B_radius(center)`.
    pub fn sample_points(&self, center: &[f64], radius: f64, count: usize, rng: &mut impl Rng) -> Result<Vec<Vec<f64>>> {
        check_dim(self.dim(), center.len())?;
        let from_list = |pts: Vec<&[f64]>| -> Vec<Vec<f64>> {
            let inside: Vec<&[f64]> = pts.into_iter().filter(|p| dist(p, center) <= radius).collect();
            if inside.len() <= count {
                return inside.into_iter().map(<[f64]>::to_vec).collect();
            }
            // evenly strided subset keeps the choice deterministic
            (0..count)
                .map(|i| inside[i * inside.len() / count].to_vec())
                .collect()
        };
        Ok(match self {
            SigmaSet::Singleton(p) => from_list(vec![p]),
            SigmaSet::PointCloud(ps) => from_list(ps.iter().map(|p| &p[..]).collect()),
            SigmaSet::CriticalSet(c) => {
                let est = c.cache.get().ok_or(Error::SigmaUnresolved)?;
                from_list(est.points.iter().map(Vec::as_slice).collect())
            }
            SigmaSet::Affine(a) => {
                let foot = a.project(center);
                let d = dist(&foot, center);
                if d > radius {
                    return Ok(Vec::new());
                }
                let k = a.basis.len();
                if k == 0 {
                    return Ok(vec![foot]);
                }
                let reach = (radius * radius - d * d).max(0.0).sqrt();
                let mut out = vec![foot.clone()];
                let origin = vec![0.0; k];
                while out.len() < count {
                    let u = sample_annulus(rng, &origin, 0.0, reach);
                    let mut p = foot.clone();
                    for (uj, b) in u.iter().zip(&a.basis) {
                        for (pi, bi) in p.iter_mut().zip(b) {
                            *pi += uj * bi;
                        }
                    }
                    out.push(p);
                }
                out
            }
        })
    }

    pub fn spec(&self) -> SigmaSpec {
        match self {
            SigmaSet::Singleton(p) => SigmaSpec::Point {
                point: Some(p.to_vec()),
            },
            SigmaSet::Affine(a) => SigmaSpec::Affine {
                offset: Some(a.offset.to_vec()),
                basis: a.basis.clone(),
            },
            SigmaSet::PointCloud(ps) => SigmaSpec::Cloud {
                points: ps.iter().map(|p| p.to_vec()).collect(),
            },
            SigmaSet::CriticalSet(c) => SigmaSpec::Critical {
                radius: c.radius,
                n_starts: Some(c.n_starts),
                tol: Some(c.tol),
            },
        }
    }
}

pub const DEFAULT_CRITICAL_STARTS: usize = 32;
pub const DEFAULT_CRITICAL_TOL: f64 = 1e-10;

/// JSON form of Σ: `{"type": "point" | "affine" | "cloud" | "critical", ...}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum SigmaSpec {
    /// Defaults to x̄ when `point` is omitted.
    Point {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        point: Option<Vec<f64>>,
    },
    /// Rows of `basis` span the direction space; they are orthonormalized.
    Affine {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        offset: Option<Vec<f64>>,
        basis: Vec<Vec<f64>>,
    },
    Cloud { points: Vec<Vec<f64>> },
    /// Critical set of the problem function in the ball of this radius
    /// around x̄.
    Critical {
        radius: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        n_starts: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tol: Option<f64>,
    },
}

impl SigmaSpec {
    pub fn build(&self, f: &Expression, xbar: &Point) -> Result<SigmaSet> {
        let pt = |v: &Option<Vec<f64>>| -> Result<Point> {
            match v {
                Some(v) => Point::new(v.clone()),
                None => Ok(xbar.clone()),
            }
        };
        let set = match self {
            SigmaSpec::Point { point } => SigmaSet::Singleton(pt(point)?),
            SigmaSpec::Affine { offset, basis } => {
                SigmaSet::Affine(AffineSubspace::from_spanning(pt(offset)?, basis)?)
            }
            SigmaSpec::Cloud { points } => SigmaSet::point_cloud(
                points.iter().cloned().map(Point::new).collect::<Result<Vec<_>>>()?,
            )?,
            SigmaSpec::Critical { radius, n_starts, tol } => SigmaSet::critical_set(
                f.clone(),
                xbar.clone(),
                *radius,
                n_starts.unwrap_or(DEFAULT_CRITICAL_STARTS),
                tol.unwrap_or(DEFAULT_CRITICAL_TOL),
            )?,
        };
        check_dim(xbar.dim(), set.dim())?;
        Ok(set)
    }
}

const NEWTON_MAX_ITER: usize = 300;
const PINV_REL_EPS: f64 = 1e-12;
const PRIMES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let mut inv = 1.0 / base as f64;
    let mut out = 0.0;
    while i > 0 {
        out += (i % base) as f64 * inv;
        i /= base;
        inv /= base as f64;
    }
    out
}

/// Halton points in the ball (rejection from the cube), center first.
fn start_lattice(center: &[f64], radius: f64, count: usize) -> Vec<Vec<f64>> {
    let n = center.len();
    let mut out = vec![center.to_vec()];
    let mut i = 1u64;
    while out.len() < count && i < 1_000_000 {
        let u: Vec<f64> = (0..n)
            .map(|d| 2.0 * radical_inverse(i, PRIMES[d % PRIMES.len()] + 2 * (d / PRIMES.len()) as u64) - 1.0)
            .collect();
        i += 1;
        if norm(&u) <= 1.0 {
            out.push(center.iter().zip(&u).map(|(c, v)| c + radius * v).collect());
        }
    }
    out
}

fn grad_norm(e: &Expression, x: &[f64]) -> Option<f64> {
    let g = e.gradient(x).ok()?;
    let n = norm(&g);
    n.is_finite().then_some(n)
}

fn line_search(e: &Expression, x: &[f64], dir: &[f64], current: f64) -> Option<(Vec<f64>, f64)> {
    let mut alpha = 1.0;
    for _ in 0..40 {
        let y: Vec<f64> = x.iter().zip(dir).map(|(a, d)| a + alpha * d).collect();
        if let Some(gy) = grad_norm(e, &y) {
            if gy < current {
                return Some((y, gy));
            }
        }
        alpha *= 0.5;
    }
    None
}

/// Damped Newton on ∇f = 0 with a gradient-descent fallback on ½‖∇f‖².
fn newton_solve(e: &Expression, start: &[f64], center: &[f64], radius: f64) -> Option<(Vec<f64>, f64)> {
    let n = start.len();
    let mut x = start.to_vec();
    let mut gn = grad_norm(e, &x)?;
    for _ in 0..NEWTON_MAX_ITER {
        if gn == 0.0 {
            break;
        }
        let hd = e.second_order(&x).ok()?;
        let h = DMatrix::from_fn(n, n, |i, j| hd.hessian_rows()[i][j]);
        let g = DVector::from_column_slice(&hd.grad);
        let svd = h.clone().svd(true, true);
        let smax = svd.singular_values.max();
        // truncated pseudoinverse first; the untruncated one keeps
        // degenerate directions from stalling near the cutoff
        let mut next = None;
        if smax > 0.0 {
            for eps in [PINV_REL_EPS * smax, f64::MIN_POSITIVE] {
                next = svd
                    .solve(&(-&g), eps)
                    .ok()
                    .filter(|d| d.iter().all(|v| v.is_finite()))
                    .and_then(|d| line_search(e, &x, d.as_slice(), gn));
                if next.is_some() {
                    break;
                }
            }
        }
        if next.is_none() {
            let descent = -(&h * &g);
            if descent.iter().any(|v| *v != 0.0) {
                next = line_search(e, &x, descent.as_slice(), gn);
            }
        }
        match next {
            Some((y, gy)) => {
                x = y;
                gn = gy;
            }
            None => break,
        }
        if dist(&x, center) > 2.0 * radius {
            return None;
        }
    }
    Some((x, gn))
}

/// Multi-start damped Newton search for critical points of `e` in
/// `B_radius(center)`. Converged points (‖∇f‖ <= tol) are deduplicated at
/// distance `10·tol`; the center is always included if it is critical.
pub fn estimate_critical_set(
    e: &Expression,
    center: &[f64],
    radius: f64,
    n_starts: usize,
    tol: f64,
) -> Result<CriticalSetEstimate> {
    check_dim(e.n_vars(), center.len())?;
    if !(radius > 0.0) {
        return Err(Error::InvalidArgument("radius must be positive".into()));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument("tol must be positive".into()));
    }
    let dedup = 10.0 * tol;
    let mut points: Vec<Vec<f64>> = Vec::new();
    let mut converged = 0;
    if grad_norm(e, center).is_some_and(|g| g <= tol) {
        points.push(center.to_vec());
    }
    let starts = start_lattice(center, radius, n_starts.max(1));
    for s in &starts {
        let Some((x, gn)) = newton_solve(e, s, center, radius) else {
            continue;
        };
        if gn > tol || dist(&x, center) > radius {
            continue;
        }
        converged += 1;
        if points.iter().all(|p| dist(p, &x) > dedup) {
            points.push(x);
        }
    }
    let warning = (converged == 0 && points.is_empty())
        .then(|| "no start converged to a critical point in the ball".to_string());
    Ok(CriticalSetEstimate {
        points,
        n_starts: starts.len(),
        converged_starts: converged,
        tol,
        warning,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageReport {
    /// Every estimated critical point lies within `10·tol` of Σ.
    pub covered: bool,
    pub violations: Vec<Vec<f64>>,
    pub critical_points: Vec<Vec<f64>>,
    pub warning: Option<String>,
    /// Σ is assumed locally closed; not checkable numerically.
    pub locally_closed_assumed: bool,
}

/// Checks the standing assumption {∇f = 0} ∩ B ⊂ Σ on the estimated
/// critical set.
pub fn validate_sigma_covers_critical(
    e: &Expression,
    sigma: &SigmaSet,
    center: &[f64],
    radius: f64,
    n_probes: usize,
    tol: f64,
) -> Result<CoverageReport> {
    sigma.resolve()?;
    if let SigmaSet::CriticalSet(c) = sigma {
        if c.source == *e && dist(c.center.coords(), center) + radius <= c.radius {
            let points = c.estimate().map(|est| est.points.clone()).unwrap_or_default();
            return Ok(CoverageReport {
                covered: true,
                violations: Vec::new(),
                critical_points: points,
                warning: Some("sigma is the estimated critical set of f; coverage holds by construction".into()),
                locally_closed_assumed: true,
            });
        }
    }
    let est = estimate_critical_set(e, center, radius, n_probes, tol)?;
    let mut violations = Vec::new();
    for p in &est.points {
        if sigma.distance(p)? > 10.0 * tol {
            violations.push(p.clone());
        }
    }
    Ok(CoverageReport {
        covered: violations.is_empty(),
        violations,
        critical_points: est.points,
        warning: est.warning,
        locally_closed_assumed: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn p(v: &[f64]) -> Point {
        Point::new(v.to_vec()).unwrap()
    }

    #[test]
    fn distance_examples() {
        let axis = SigmaSet::affine(p(&[0.0, 0.0]), vec![vec![0.0, 1.0]]).unwrap();
        assert_eq!(axis.distance(&[3.0, 4.0]).unwrap(), 3.0);
        assert_eq!(SigmaSet::singleton(p(&[0.0, 0.0])).distance(&[3.0, 4.0]).unwrap(), 5.0);
        let cloud = SigmaSet::point_cloud(vec![p(&[1.0, 0.0]), p(&[0.0, 1.0])]).unwrap();
        assert_eq!(cloud.distance(&[0.0, 0.0]).unwrap(), 1.0);
        assert!(cloud.distance(&[0.0]).is_err());
    }

    #[test]
    fn invalid_sets_are_rejected() {
        assert!(SigmaSet::point_cloud(vec![]).is_err());
        assert!(SigmaSet::affine(p(&[0.0, 0.0]), vec![vec![1.0, 1.0]]).is_err());
        assert!(SigmaSet::affine(p(&[0.0, 0.0, 0.0]), vec![vec![1.0, 0.0, 0.0], vec![0.6, 0.8, 0.0]]).is_err());
        let a = AffineSubspace::from_spanning(p(&[0.0, 0.0, 0.0]), &[vec![1.0, 1.0, 0.0], vec![2.0, 2.0, 0.0], vec![0.0, 1.0, 0.0]]).unwrap();
        assert_eq!(a.basis().len(), 2);
    }

    #[test]
    fn unresolved_critical_set_refuses_queries() {
        let e = Expression::parse("x1^2 + x2^2", 2).unwrap();
        let s = SigmaSet::critical_set(e, p(&[0.0, 0.0]), 1.0, 8, 1e-10).unwrap();
        assert_eq!(s.distance(&[1.0, 0.0]), Err(Error::SigmaUnresolved));
        s.resolve().unwrap();
        assert!(s.distance(&[1.0, 0.0]).unwrap() <= 1.0 + 1e-9);
    }

    #[test]
    fn critical_set_of_paraboloid() {
        let e = Expression::parse("x1^2 + x2^2", 2).unwrap();
        let est = estimate_critical_set(&e, &[0.0, 0.0], 1.0, 16, 1e-10).unwrap();
        assert_eq!(est.points, vec![vec![0.0, 0.0]]);
        assert!(est.warning.is_none());
    }

    #[test]
    fn critical_set_of_cusp_polynomial() {
        // ∇f = (3x² − 3y³, −9xy²) vanishes only at the origin
        let e = Expression::parse("x1^3 - 3*x1*x2^3", 2).unwrap();
        let est = estimate_critical_set(&e, &[0.0, 0.0], 0.5, 32, 1e-10).unwrap();
        assert!(est.points.contains(&vec![0.0, 0.0]));
        for q in &est.points {
            assert!(norm(&e.gradient(q).unwrap()) <= 1e-10);
            assert!(norm(q) <= 1e-9, "stray critical point {q:?}");
        }
    }

    #[test]
    fn no_critical_point_gives_warning() {
        let e = Expression::parse("x1", 1).unwrap();
        let est = estimate_critical_set(&e, &[0.0], 1.0, 8, 1e-10).unwrap();
        assert!(est.points.is_empty());
        assert!(est.warning.is_some());
    }

    #[test]
    fn coverage_examples() {
        let origin = p(&[0.0, 0.0]);
        let e = Expression::parse("x1^2 + x2^2", 2).unwrap();
        let r = validate_sigma_covers_critical(&e, &SigmaSet::singleton(origin.clone()), &origin, 0.1, 16, 1e-10).unwrap();
        assert!(r.covered);

        let e = Expression::parse("x1^2", 2).unwrap();
        let r = validate_sigma_covers_critical(&e, &SigmaSet::singleton(origin.clone()), &origin, 0.1, 16, 1e-10).unwrap();
        assert!(!r.covered);
        for v in &r.violations {
            assert!(v[0].abs() <= 1e-9 && v[1].abs() > 0.0);
        }

        for r_deg in [2, 3] {
            let e = Expression::parse(&format!("x1^{r_deg} + x1^{}*flat(x2)", r_deg + 1), 2).unwrap();
            let axis = SigmaSet::affine(origin.clone(), vec![vec![0.0, 1.0]]).unwrap();
            let rep = validate_sigma_covers_critical(&e, &axis, &origin, 0.1, 16, 1e-10).unwrap();
            assert!(rep.covered, "r = {r_deg}: {:?}", rep.violations);
        }
    }

    #[test]
    fn affine_sampling_stays_on_subspace_and_in_ball() {
        let axis = SigmaSet::affine(p(&[0.0, 0.0]), vec![vec![0.0, 1.0]]).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let pts = axis.sample_points(&[0.05, 0.0], 0.1, 25, &mut rng).unwrap();
        assert_eq!(pts.len(), 25);
        for q in pts {
            assert_eq!(q[0], 0.0);
            assert!(dist(&q, &[0.05, 0.0]) <= 0.1 + 1e-15);
        }
    }
}
