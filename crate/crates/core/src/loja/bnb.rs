//! Interval branch-and-bound certificates for polynomial inequalities.
//!
//! The basic proof step shows `P ≥ 0` on a region by recursive bisection.
//! On each box, `P` is re-expanded at the box midpoint with interval
//! coefficients and bounded term by term, with even powers of the
//! displacement ranging over `[0, h^k]`. A box whose midpoint value is
//! provably negative disproves the claim.
//!
//! Ratio floors `num/den ≥ t` are certified by proving `num − t·den ≥ 0`
//! for a descending ladder of `t` below a sampled upper bound. When both
//! polynomials are homogeneous of the same even degree, the unit cube faces
//! `x_i = 1` are a complete chart of all directions, so the floor holds on
//! all of `ℝⁿ \ {0}`.

use std::collections::BTreeMap;

use serde::Serialize;

use super::interval::Interval;
use crate::error::{check_dim, Error, Result};
use crate::expr::Point;
use crate::jets::SparsePolynomial;
use crate::sampling::ShellSampler;

/// Polynomial with interval coefficients.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct IPoly {
    n: usize,
    terms: BTreeMap<Vec<u32>, Interval>,
}

impl IPoly {
    pub fn zero(n: usize) -> Self {
        IPoly {
            n,
            terms: BTreeMap::new(),
        }
    }

    pub fn one(n: usize) -> Self {
        let mut p = Self::zero(n);
        p.terms.insert(vec![0; n], Interval::ONE);
        p
    }

    pub fn from_poly(p: &SparsePolynomial) -> Self {
        IPoly {
            n: p.dim(),
            terms: p
                .terms()
                .map(|(a, c)| (a.exponents().to_vec(), Interval::point(c)))
                .collect(),
        }
    }

    /// `Σ x_i²`
    pub fn norm_sq(n: usize) -> Self {
        let mut p = Self::zero(n);
        for i in 0..n {
            let mut a = vec![0; n];
            a[i] = 2;
            p.terms.insert(a, Interval::ONE);
        }
        p
    }

    fn push(&mut self, a: Vec<u32>, c: Interval) {
        let slot = self.terms.entry(a).or_insert(Interval::ZERO);
        *slot = slot.add(c);
    }

    pub fn is_zero(&self) -> bool {
        self.terms.values().all(|c| c.lo() == 0.0 && c.hi() == 0.0)
    }

    pub fn add(&self, o: &IPoly) -> IPoly {
        let mut out = self.clone();
        for (a, &c) in &o.terms {
            out.push(a.clone(), c);
        }
        out
    }

    pub fn scale(&self, s: Interval) -> IPoly {
        IPoly {
            n: self.n,
            terms: self.terms.iter().map(|(a, &c)| (a.clone(), c.mul(s))).collect(),
        }
    }

    pub fn sub(&self, o: &IPoly) -> IPoly {
        self.add(&o.scale(Interval::point(-1.0)))
    }

    pub fn mul(&self, o: &IPoly) -> IPoly {
        let mut out = IPoly::zero(self.n);
        for (a, &c) in &self.terms {
            for (b, &d) in &o.terms {
                let e: Vec<u32> = a.iter().zip(b).map(|(x, y)| x + y).collect();
                out.push(e, c.mul(d));
            }
        }
        out
    }

    pub fn powi(&self, k: u32) -> IPoly {
        let mut out = IPoly::one(self.n);
        for _ in 0..k {
            out = out.mul(self);
        }
        out
    }

    pub fn partial(&self, i: usize) -> IPoly {
        let mut out = IPoly::zero(self.n);
        for (a, &c) in &self.terms {
            if a[i] > 0 {
                let mut b = a.clone();
                b[i] -= 1;
                out.push(b, c.scale(f64::from(a[i])));
            }
        }
        out
    }

    /// `‖∇p‖²`
    pub fn gradient_norm_sq(&self) -> IPoly {
        let mut out = IPoly::zero(self.n);
        for i in 0..self.n {
            let d = self.partial(i);
            out = out.add(&d.mul(&d));
        }
        out
    }

    /// Substitutes `x_i = 1`, dropping that variable.
    pub fn fix_to_one(&self, i: usize) -> IPoly {
        let mut out = IPoly::zero(self.n - 1);
        for (a, &c) in &self.terms {
            let mut b = a.clone();
            b.remove(i);
            out.push(b, c);
        }
        out
    }

    pub fn eval(&self, x: &[f64]) -> Interval {
        let mut acc = Interval::ZERO;
        for (a, &c) in &self.terms {
            let mut t = c;
            for (&xi, &k) in x.iter().zip(a) {
                if k > 0 {
                    t = t.mul(Interval::point(xi).powi(k));
                }
            }
            acc = acc.add(t);
        }
        acc
    }
}

/// Dense coefficient block used for the per-box Taylor re-expansion.
#[derive(Debug, Clone)]
struct DensePoly {
    dims: Vec<usize>,
    coeffs: Vec<Interval>,
}

const DENSE_LIMIT: usize = 1 << 22;

impl DensePoly {
    fn new(p: &IPoly) -> Result<Self> {
        let mut dims = vec![1usize; p.n];
        for a in p.terms.keys() {
            for (d, &k) in dims.iter_mut().zip(a) {
                *d = (*d).max(k as usize + 1);
            }
        }
        let size = dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d));
        let size = size
            .filter(|&s| s <= DENSE_LIMIT)
            .ok_or_else(|| Error::InvalidArgument("polynomial too large for branch-and-bound".into()))?;
        let mut coeffs = vec![Interval::ZERO; size];
        for (a, &c) in &p.terms {
            let mut idx = 0;
            for (&k, &d) in a.iter().zip(&dims) {
                idx = idx * d + k as usize;
            }
            coeffs[idx] = coeffs[idx].add(c);
        }
        Ok(DensePoly { dims, coeffs })
    }

    fn stride(&self, var: usize) -> usize {
        self.dims[var + 1..].iter().product()
    }

    /// Coefficients of `p(m + h)` in powers of `h`.
    fn shifted(&self, m: &[f64]) -> Vec<Interval> {
        let mut c = self.coeffs.clone();
        for (var, &mv) in m.iter().enumerate() {
            let d = self.dims[var];
            if d <= 1 || mv == 0.0 {
                continue;
            }
            let stride = self.stride(var);
            let block = stride * d;
            let mi = Interval::point(mv);
            for outer in (0..c.len()).step_by(block) {
                for inner in 0..stride {
                    let base = outer + inner;
                    // repeated synthetic division
                    for i in 0..d - 1 {
                        for j in (i..d - 1).rev() {
                            let hi = c[base + (j + 1) * stride];
                            c[base + j * stride] = c[base + j * stride].add(mi.mul(hi));
                        }
                    }
                }
            }
        }
        c
    }

    /// Range enclosure over the box and enclosure of the midpoint value.
    fn enclose(&self, lo: &[f64], hi: &[f64]) -> (Interval, Interval, Vec<f64>) {
        let n = self.dims.len();
        let m: Vec<f64> = lo.iter().zip(hi).map(|(a, b)| 0.5 * (a + b)).collect();
        let b = self.shifted(&m);
        let hpows: Vec<Vec<Interval>> = (0..n)
            .map(|i| {
                let h = Interval::point(lo[i]).sub(Interval::point(m[i])).hull(Interval::point(hi[i]).sub(Interval::point(m[i])));
                (0..self.dims[i]).map(|k| h.powi(k as u32)).collect()
            })
            .collect();
        let mut range = Interval::ZERO;
        let mut idx = vec![0usize; n];
        for &coef in &b {
            if !(coef.lo() == 0.0 && coef.hi() == 0.0) {
                let mut t = coef;
                for (i, &k) in idx.iter().enumerate() {
                    if k > 0 {
                        t = t.mul(hpows[i][k]);
                    }
                }
                range = range.add(t);
            }
            for i in (0..n).rev() {
                idx[i] += 1;
                if idx[i] < self.dims[i] {
                    break;
                }
                idx[i] = 0;
            }
        }
        (range, b[0], m)
    }
}

/// Limits for one branch-and-bound proof.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BnbConfig {
    /// Maximum bisection depth of a box.
    pub depth_cap: u32,
    /// Maximum boxes examined per proof attempt.
    pub box_budget: usize,
    /// Annuli examined for non-homogeneous polynomials.
    pub sweep_levels: usize,
    /// Samples used for the upper bound of the infimum.
    pub samples: usize,
    pub seed: u64,
}

impl Default for BnbConfig {
    fn default() -> Self {
        BnbConfig {
            depth_cap: 40,
            box_budget: 200_000,
            sweep_levels: 8,
            samples: 2048,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Outcome {
    Proved,
    Disproved(Vec<f64>),
    Exhausted,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Region {
    /// All directions, via the faces `x_i = 1` of `[-1, 1]ⁿ`.
    CubeFaces,
    /// `inner ≤ ‖x‖ ≤ outer`.
    Annulus { inner: f64, outer: f64 },
}

fn norm_sq_range(lo: &[f64], hi: &[f64]) -> Interval {
    lo.iter()
        .zip(hi)
        .fold(Interval::ZERO, |acc, (&a, &b)| acc.add(Interval::new(a, b).sqr()))
}

/// Proves `p ≥ 0` on the boxes `roots`, optionally intersected with an
/// annulus.
fn prove_nonnegative(
    p: &DensePoly,
    roots: Vec<(Vec<f64>, Vec<f64>)>,
    annulus: Option<(f64, f64)>,
    cfg: &BnbConfig,
    boxes: &mut usize,
) -> Outcome {
    let bounds = annulus.map(|(inner, outer)| {
        (Interval::point(inner).sqr().lo(), Interval::point(outer).sqr().hi())
    });
    let mut stack: Vec<(Vec<f64>, Vec<f64>, u32)> = roots.into_iter().map(|(l, h)| (l, h, 0)).collect();
    let start = *boxes;
    let mut exhausted = false;
    while let Some((lo, hi, depth)) = stack.pop() {
        *boxes += 1;
        let mid_in_region;
        if let Some((in2, out2)) = bounds {
            let r2 = norm_sq_range(&lo, &hi);
            if r2.lo() > out2 || r2.hi() < in2 {
                continue;
            }
            let m: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| 0.5 * (a + b)).collect();
            let mr = norm_sq_range(&m, &m);
            mid_in_region = mr.lo() >= in2 && mr.hi() <= out2;
        } else {
            mid_in_region = true;
        }
        let (range, mid_val, m) = p.enclose(&lo, &hi);
        if range.lo() >= 0.0 {
            continue;
        }
        if mid_in_region && mid_val.hi() < 0.0 {
            return Outcome::Disproved(m);
        }
        if depth >= cfg.depth_cap || *boxes - start >= cfg.box_budget {
            exhausted = true;
            break;
        }
        let k = (0..lo.len())
            .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
            .expect("branching needs at least one free variable");
        let split = 0.5 * (lo[k] + hi[k]);
        let (mut h1, mut l2) = (hi.clone(), lo.clone());
        h1[k] = split;
        l2[k] = split;
        stack.push((l2, hi, depth + 1));
        stack.push((lo, h1, depth + 1));
    }
    if exhausted {
        Outcome::Exhausted
    } else {
        Outcome::Proved
    }
}

/// Region-specific charts of `p`: one per cube face, or the single annulus
/// bounding box.
fn prove_on_region(p: &IPoly, region: Region, cfg: &BnbConfig, boxes: &mut usize) -> Result<Outcome> {
    let n = p.n;
    match region {
        Region::CubeFaces => {
            for face in 0..n {
                let q = p.fix_to_one(face);
                let dense = DensePoly::new(&q)?;
                if n == 1 {
                    *boxes += 1;
                    let v = q.eval(&[]);
                    if v.lo() >= 0.0 {
                        continue;
                    }
                    return Ok(if v.hi() < 0.0 {
                        Outcome::Disproved(vec![1.0])
                    } else {
                        Outcome::Exhausted
                    });
                }
                let root = (vec![-1.0; n - 1], vec![1.0; n - 1]);
                match prove_nonnegative(&dense, vec![root], None, cfg, boxes) {
                    Outcome::Proved => {}
                    Outcome::Disproved(mut m) => {
                        m.insert(face, 1.0);
                        return Ok(Outcome::Disproved(m));
                    }
                    Outcome::Exhausted => return Ok(Outcome::Exhausted),
                }
            }
            Ok(Outcome::Proved)
        }
        Region::Annulus { inner, outer } => {
            let dense = DensePoly::new(p)?;
            let root = (vec![-outer; n], vec![outer; n]);
            Ok(prove_nonnegative(&dense, vec![root], Some((inner, outer)), cfg, boxes))
        }
    }
}

/// Certified `t` with `num − t·den ≥ 0` on the region.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct RatioFloor {
    pub certified: Option<f64>,
    /// Smallest known value of `num/den` attained in the region (sampled or
    /// from a disproof).
    pub upper: f64,
    pub boxes: usize,
}

const LADDER_GAPS: [f64; 8] = [1e-12, 1e-10, 1e-8, 1e-6, 1e-4, 1e-2, 0.1, 0.5];
const REFINE_STEPS: usize = 24;
const REFINE_GAP: f64 = 1e-10;

pub(crate) fn certify_ratio_floor(num: &IPoly, den: &IPoly, region: Region, sampled: f64, cfg: &BnbConfig) -> Result<RatioFloor> {
    let mut upper = sampled;
    let mut boxes = 0;
    if !(upper > 0.0) || !upper.is_finite() {
        return Ok(RatioFloor {
            certified: None,
            upper,
            boxes,
        });
    }
    let attempt = |t: f64, boxes: &mut usize| -> Result<Outcome> {
        let p = num.sub(&den.scale(Interval::point(t)));
        prove_on_region(&p, region, cfg, boxes)
    };
    let ladder = LADDER_GAPS
        .iter()
        .map(|g| 1.0 - g)
        .chain((2..=40).map(|k| 0.5f64.powi(k)));
    let mut lo: Option<f64> = None;
    let mut failed = upper;
    let mut anchor = upper;
    for factor in ladder {
        let t = anchor * factor;
        match attempt(t, &mut boxes)? {
            Outcome::Proved => {
                lo = Some(t);
                break;
            }
            Outcome::Disproved(_) => {
                upper = upper.min(t);
                anchor = upper;
                failed = t;
            }
            Outcome::Exhausted => failed = t,
        }
    }
    if let Some(mut l) = lo {
        for _ in 0..REFINE_STEPS {
            if (failed - l) <= REFINE_GAP * failed {
                break;
            }
            let t = 0.5 * (l + failed);
            match attempt(t, &mut boxes)? {
                Outcome::Proved => l = t,
                Outcome::Disproved(_) => {
                    upper = upper.min(t);
                    failed = t;
                }
                Outcome::Exhausted => failed = t,
            }
        }
        lo = Some(l);
    }
    Ok(RatioFloor {
        certified: lo,
        upper,
        boxes,
    })
}

fn float_ratio<'a>(num: &'a SparsePolynomial, den: &'a SparsePolynomial) -> impl Fn(&[f64]) -> f64 + 'a {
    move |x: &[f64]| {
        let d = den.evaluate(x).unwrap_or(f64::NAN);
        let v = num.evaluate(x).unwrap_or(f64::NAN) / d;
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    }
}

fn norm_sq_power(n: usize, k: u32) -> SparsePolynomial {
    let mut s = SparsePolynomial::zero(n);
    for i in 0..n {
        let mut a = vec![0; n];
        a[i] = 2;
        s = s.add(&SparsePolynomial::from_terms(n, [(a, 1.0)]).expect("valid monomial"));
    }
    let mut out = SparsePolynomial::constant(n, 1.0);
    for _ in 0..k {
        out = out.mul(&s);
    }
    out
}

fn gradient_norm_sq(t: &SparsePolynomial) -> SparsePolynomial {
    t.gradient()
        .iter()
        .fold(SparsePolynomial::zero(t.dim()), |acc, g| acc.add(&g.mul(g)))
}

/// Sampled minimum of `num/den` on the shell `[ρ/2, ρ]`.
fn sampled_min(num: &SparsePolynomial, den: &SparsePolynomial, rho: f64, cfg: &BnbConfig) -> (f64, Vec<f64>) {
    let n = num.dim();
    let sampler = ShellSampler::new(Point::origin(n), vec![rho], cfg.samples.max(1), cfg.seed)
        .expect("one positive radius is a valid sampler");
    match sampler.minimize_on_shell(0, float_ratio(num, den)) {
        Some(m) => (m.value, m.point),
        None => (f64::INFINITY, vec![rho; n]),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundScope {
    /// Homogeneous of degree r: the bound holds at every radius.
    AllRadii,
    /// Certified only on the listed annuli.
    SweptRadiiOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradientBound {
    /// Certified `c` with `‖∇T(x)‖ ≥ c‖x‖^(r−1)` on the region.
    pub c: Option<f64>,
    /// `sqrt` of the smallest known value of `‖∇T‖²/‖x‖^(2(r−1))`.
    pub sampled_infimum: f64,
    pub homogeneous: bool,
    pub scope: BoundScope,
    /// Outer radii of the certified annuli (empty for all-radii bounds).
    pub radii: Vec<f64>,
    pub inner_fraction: f64,
    pub boxes: usize,
    pub reason: Option<String>,
}

/// Certified lower bound for `‖∇T(x)‖ / ‖x‖^(r−1)` away from the origin,
/// `T` given in displacement coordinates around `xbar`.
pub fn certified_gradient_lower_bound(
    t: &SparsePolynomial,
    xbar: &Point,
    r: u32,
    outer_radius: f64,
    inner_fraction: f64,
    depth_cap: u32,
) -> Result<GradientBound> {
    let cfg = BnbConfig {
        depth_cap,
        ..BnbConfig::default()
    };
    certified_gradient_lower_bound_with(t, xbar, r, outer_radius, inner_fraction, &cfg)
}

pub fn certified_gradient_lower_bound_with(
    t: &SparsePolynomial,
    xbar: &Point,
    r: u32,
    outer_radius: f64,
    inner_fraction: f64,
    cfg: &BnbConfig,
) -> Result<GradientBound> {
    check_dim(t.dim(), xbar.dim())?;
    if r == 0 {
        return Err(Error::InvalidArgument("r must be positive".into()));
    }
    if !(inner_fraction > 0.0 && inner_fraction < 1.0) {
        return Err(Error::InvalidArgument("inner_fraction must lie in (0, 1)".into()));
    }
    if !(outer_radius > 0.0) || !outer_radius.is_finite() {
        return Err(Error::InvalidArgument("outer_radius must be positive".into()));
    }
    let n = t.dim();
    let gf = gradient_norm_sq(t);
    let nf = norm_sq_power(n, r - 1);
    let g = IPoly::from_poly(t).gradient_norm_sq();
    let den = IPoly::norm_sq(n).powi(r - 1);
    let homogeneous = !t.is_zero() && t.is_homogeneous() && t.degree() == Some(r);
    let mut out = GradientBound {
        c: None,
        sampled_infimum: 0.0,
        homogeneous,
        scope: if homogeneous {
            BoundScope::AllRadii
        } else {
            BoundScope::SweptRadiiOnly
        },
        radii: Vec::new(),
        inner_fraction,
        boxes: 0,
        reason: None,
    };
    if g.is_zero() {
        out.reason = Some("gradient of T vanishes identically".into());
        return Ok(out);
    }
    if homogeneous {
        let (s, _) = sampled_min(&gf, &nf, 1.0, cfg);
        let floor = certify_ratio_floor(&g, &den, Region::CubeFaces, s, cfg)?;
        out.boxes = floor.boxes;
        out.sampled_infimum = floor.upper.max(0.0).sqrt();
        match floor.certified {
            Some(c2) => out.c = Some(c2.sqrt().next_down()),
            None => out.reason = Some("gradient floor not certified on the cube faces".into()),
        }
        return Ok(out);
    }
    let mut best: Option<f64> = None;
    let mut upper = f64::INFINITY;
    let mut rho = outer_radius;
    for _ in 0..cfg.sweep_levels.max(1) {
        let (s, _) = sampled_min(&gf, &nf, rho, cfg);
        let region = Region::Annulus {
            inner: rho * inner_fraction,
            outer: rho,
        };
        let floor = certify_ratio_floor(&g, &den, region, s, cfg)?;
        out.boxes += floor.boxes;
        upper = upper.min(floor.upper);
        out.radii.push(rho);
        match floor.certified {
            Some(c2) => best = Some(best.map_or(c2, |b: f64| b.min(c2))),
            None => {
                best = None;
                out.reason = Some(format!("gradient floor not certified on the annulus of radius {rho:e}"));
                break;
            }
        }
        rho *= inner_fraction;
    }
    out.sampled_infimum = upper.max(0.0).sqrt();
    out.c = best.map(|c2| c2.sqrt().next_down());
    Ok(out)
}

/// Sign of a homogeneous polynomial on the unit sphere.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "sign", rename_all = "snake_case")]
pub enum SphereSign {
    /// `H(x) ≥ m‖x‖^d` with certified `m > 0`.
    Positive { m: f64 },
    /// `H(point) < 0`, verified in interval arithmetic.
    Negative { point: Vec<f64>, value_upper: f64 },
    Inconclusive { sampled_min: f64 },
}

pub fn certified_sphere_sign(h: &SparsePolynomial, cfg: &BnbConfig) -> Result<SphereSign> {
    let n = h.dim();
    let Some(d) = h.degree().filter(|_| h.is_homogeneous() && !h.is_zero()) else {
        return Err(Error::InvalidArgument("sphere sign test needs a nonzero homogeneous polynomial".into()));
    };
    let ih = IPoly::from_poly(h);
    let unit = |x: &[f64]| -> Vec<f64> {
        let l = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        x.iter().map(|v| v / l).collect()
    };
    let objective = |x: &[f64]| -> f64 {
        let u = unit(x);
        h.evaluate(&u).unwrap_or(f64::INFINITY)
    };
    let sampler = ShellSampler::new(Point::origin(n), vec![1.0], cfg.samples.max(1), cfg.seed).expect("valid sampler");
    let (smin, spt) = sampler
        .minimize_on_shell(0, objective)
        .map(|m| (m.value, unit(&m.point)))
        .unwrap_or((f64::INFINITY, vec![1.0; n]));
    if smin < 0.0 {
        let v = ih.eval(&spt);
        if v.hi() < 0.0 {
            return Ok(SphereSign::Negative {
                point: spt,
                value_upper: v.hi(),
            });
        }
    }
    if d % 2 == 1 {
        // H(−x) = −H(x); the maximizer gives a negative direction
        let sampler2 = sampler.clone().with_seed(cfg.seed ^ 1);
        if let Some(m) = sampler2.minimize_on_shell(0, |x| -objective(x)) {
            let q: Vec<f64> = unit(&m.point).iter().map(|v| -v).collect();
            let v = ih.eval(&q);
            if v.hi() < 0.0 {
                return Ok(SphereSign::Negative {
                    point: q,
                    value_upper: v.hi(),
                });
            }
        }
        return Ok(SphereSign::Inconclusive { sampled_min: smin });
    }
    if smin > 0.0 {
        let den = IPoly::norm_sq(n).powi(d / 2);
        let floor = certify_ratio_floor(&ih, &den, Region::CubeFaces, smin, cfg)?;
        if let Some(m) = floor.certified {
            return Ok(SphereSign::Positive { m });
        }
    }
    Ok(SphereSign::Inconclusive { sampled_min: smin })
}
