//! Local-minimum verdicts.
//!
//! Paths, in order of strength: the Hessian eigenvalue test, the jet
//! reduction through a certified gradient bound of the Taylor polynomial,
//! the jet reduction through sampled horn estimates, sampled growth, and
//! sampled witnesses of descent. Sampled evidence never produces a
//! certified status.

mod perturb;
mod witness;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

pub use perturb::{admissible_epsilon, check_perturbation_stability, PerturbationMode, PerturbationReport};
pub use witness::{witness_search, ShellMinimumReport, Witness, WitnessReport, MIN_WITNESS_SHELLS, WITNESS_MARGIN};

use crate::error::{check_dim, Error, Result};
use crate::expr::{Expression, Point};
use crate::jets::{remainder_ratio, taylor_jet, Jet, SparsePolynomial, JET_ZERO_TOL};
use crate::loja::{
    certified_gradient_lower_bound_with, certified_sphere_sign, estimate_condition_with_floor, BnbConfig,
    BoundScope, Condition, GradientBound, HornParams, LojaEstimate, SphereSign, DEFAULT_C_FLOOR, DEFAULT_W_BAR,
};
use crate::sampling::{ShellSampler, DEFAULT_RADII, DEFAULT_SAMPLES_PER_SHELL, DEFAULT_SEED};
use crate::sigma::{validate_sigma_covers_critical, CoverageReport, SigmaSet, DEFAULT_CRITICAL_STARTS, DEFAULT_CRITICAL_TOL};

/// Eigenvalues below this magnitude count as zero.
pub const LAMBDA_FLOOR: f64 = 1e-10;
const SYMMETRY_TOL: f64 = 1e-12;
/// Σ points whose jets are compared in the constancy check.
const CONSTANCY_POINTS: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    CertifiedMin,
    CertifiedNotMin,
    EmpiricalMin,
    EmpiricalNotMin,
    Undecided,
}

impl Status {
    /// `Some(true)` for either min status, `Some(false)` for either not-min.
    pub fn is_min(self) -> Option<bool> {
        match self {
            Status::CertifiedMin | Status::EmpiricalMin => Some(true),
            Status::CertifiedNotMin | Status::EmpiricalNotMin => Some(false),
            Status::Undecided => None,
        }
    }

    pub fn is_certified(self) -> bool {
        matches!(self, Status::CertifiedMin | Status::CertifiedNotMin)
    }

    /// Certified statuses drop to their empirical counterpart.
    pub fn as_empirical(self) -> Status {
        match self {
            Status::CertifiedMin => Status::EmpiricalMin,
            Status::CertifiedNotMin => Status::EmpiricalNotMin,
            s => s,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Path {
    Quadratic,
    Hq3Reduction,
    GrowthIi,
    Witness,
    Oracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CertificateScope {
    /// Exact eigenvalues or an interval proof over all directions.
    Exact,
    /// Interval proof on the swept annuli only.
    SweptRadiiOnly,
    /// Interval proof for the jet; the remainder bound is sampled.
    ModuloRemainderSampling,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Certificate {
    pub c: f64,
    pub radius: Option<f64>,
    pub method: String,
    pub scope: CertificateScope,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Evidence {
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub witnesses: Vec<Witness>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness_direction: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eigenvalues: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gradient_bound: Option<GradientBound>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sphere_sign: Option<SphereSign>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub estimates: Vec<LojaEstimate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub jet: Option<Jet>,
    /// Verdict on the Taylor polynomial that was transferred.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub polynomial_verdict: Option<Box<Verdict>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Assumptions {
    /// Outcome of the critical-set coverage check, if it was run.
    pub sigma_covers_critical: Option<bool>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub coverage_violations: Vec<Vec<f64>>,
    pub locally_closed_unverified: bool,
    /// Jet constancy on Σ, checked at sampled Σ points.
    pub jet_constant_on_sigma: Option<bool>,
}

impl Default for Assumptions {
    fn default() -> Self {
        Assumptions {
            sigma_covers_critical: None,
            coverage_violations: Vec::new(),
            locally_closed_unverified: true,
            jet_constant_on_sigma: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub status: Status,
    pub path: Path,
    pub certificate: Option<Certificate>,
    pub evidence: Evidence,
    pub assumptions: Assumptions,
    /// Why the verdict is undecided, or why a path was abandoned.
    pub reason: Option<String>,
    pub notes: Vec<String>,
}

impl Verdict {
    fn new(status: Status, path: Path) -> Self {
        Verdict {
            status,
            path,
            certificate: None,
            evidence: Evidence::default(),
            assumptions: Assumptions::default(),
            reason: None,
            notes: Vec::new(),
        }
    }

    fn undecided(path: Path, reason: impl Into<String>) -> Self {
        let mut v = Self::new(Status::Undecided, path);
        v.reason = Some(reason.into());
        v
    }
}

/// Tuning for the decision pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecideConfig {
    pub radii: Vec<f64>,
    pub samples_per_shell: usize,
    pub seed: u64,
    pub w_bar: f64,
    pub c_floor: f64,
    pub check_sigma_coverage: bool,
    pub coverage_starts: usize,
    pub coverage_tol: f64,
    #[serde(skip)]
    pub bnb: BnbConfig,
}

impl Default for DecideConfig {
    fn default() -> Self {
        DecideConfig {
            radii: DEFAULT_RADII.to_vec(),
            samples_per_shell: DEFAULT_SAMPLES_PER_SHELL,
            seed: DEFAULT_SEED,
            w_bar: DEFAULT_W_BAR,
            c_floor: DEFAULT_C_FLOOR,
            check_sigma_coverage: true,
            coverage_starts: DEFAULT_CRITICAL_STARTS,
            coverage_tol: DEFAULT_CRITICAL_TOL,
            bnb: BnbConfig::default(),
        }
    }
}

impl DecideConfig {
    pub fn sampler(&self, center: &Point) -> Result<ShellSampler> {
        ShellSampler::new(center.clone(), self.radii.clone(), self.samples_per_shell, self.seed)
    }
}

/// Eigenvalue test for `½⟨Ax, x⟩`.
pub fn decide_quadratic(a: &[Vec<f64>]) -> Result<Verdict> {
    let n = a.len();
    if n == 0 {
        return Err(Error::InvalidArgument("matrix is empty".into()));
    }
    for row in a {
        check_dim(n, row.len())?;
    }
    let scale = a.iter().flatten().fold(1.0f64, |m, v| m.max(v.abs()));
    for i in 0..n {
        for j in 0..i {
            if (a[i][j] - a[j][i]).abs() > SYMMETRY_TOL * scale {
                return Err(Error::InvalidArgument(format!("matrix is not symmetric at ({}, {})", i + 1, j + 1)));
            }
        }
    }
    let m = DMatrix::from_fn(n, n, |i, j| a[i][j]);
    let eig = SymmetricEigen::new(m);
    let (k_min, &l_min) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|x, y| x.1.total_cmp(y.1))
        .expect("nonempty spectrum");
    let mut eigenvalues: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    eigenvalues.sort_by(f64::total_cmp);
    let mut v;
    if l_min <= -LAMBDA_FLOOR {
        v = Verdict::new(Status::CertifiedNotMin, Path::Quadratic);
        let mut dir: Vec<f64> = eig.eigenvectors.column(k_min).iter().copied().collect();
        let big = dir.iter().copied().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
        if big < 0.0 {
            dir.iter_mut().for_each(|x| *x = -*x);
        }
        v.certificate = Some(Certificate {
            c: l_min,
            radius: None,
            method: "symmetric_eigen: negative eigenvalue".into(),
            scope: CertificateScope::Exact,
        });
        v.evidence.witness_direction = Some(dir);
    } else if eig.eigenvalues.iter().any(|l| l.abs() < LAMBDA_FLOOR) {
        v = Verdict::undecided(Path::Quadratic, "singular quadratic form: an eigenvalue is below the floor 1e-10");
    } else {
        v = Verdict::new(Status::CertifiedMin, Path::Quadratic);
        v.certificate = Some(Certificate {
            c: l_min,
            radius: None,
            method: "symmetric_eigen: all eigenvalues positive".into(),
            scope: CertificateScope::Exact,
        });
    }
    v.evidence.eigenvalues = Some(eigenvalues);
    Ok(v)
}

/// Outcome of the nonvanishing-gradient certificate on `T^r f(x̄)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Hq3Certificate {
    /// Half the certified gradient floor of the jet.
    pub c: f64,
    /// Largest sampled radius where `‖∇R‖/‖x − x̄‖^(r−1) ≤ c` on this and all
    /// smaller shells.
    pub delta_hat: f64,
    pub fully_certified: bool,
    pub bound: GradientBound,
    pub jet: Jet,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Hq3Attempt {
    pub certificate: Option<Hq3Certificate>,
    pub reason: Option<String>,
    pub jet: Jet,
}

/// Checks that the jet has no terms below order `r` and that
/// `‖∇T^r(x)‖ ≥ 2c‖x − x̄‖^(r−1)` with an interval certificate.
pub fn certify_hq3(e: &Expression, xbar: &Point, r: u32, cfg: &DecideConfig) -> Result<Hq3Attempt> {
    check_dim(e.n_vars(), xbar.dim())?;
    let jet = taylor_jet(e, xbar, r)?;
    let fail = |reason: String, jet: Jet| Ok(Hq3Attempt {
        certificate: None,
        reason: Some(reason),
        jet,
    });
    let low = jet.max_coefficient_up_to(r.saturating_sub(1));
    if low > JET_ZERO_TOL {
        return fail(format!("jet has terms of order below {r} (max |coefficient| {low:e})"), jet);
    }
    let top = jet.poly.homogeneous_part(r);
    if top.is_zero() {
        return fail(format!("jet has no terms of order {r}"), jet);
    }
    let outer = cfg.radii.first().copied().unwrap_or(DEFAULT_RADII[0]);
    let bound = certified_gradient_lower_bound_with(&top, xbar, r, outer, 0.5, &cfg.bnb)?;
    let Some(c_full) = bound.c.filter(|&c| c > 0.0) else {
        let why = bound.reason.clone().unwrap_or_else(|| "gradient floor not certified".into());
        return fail(why, jet);
    };
    let c = c_full / 2.0;
    let top_jet = Jet {
        center: xbar.clone(),
        degree: r,
        poly: top,
        base_value: jet.base_value,
    };
    let shells = remainder_ratio(e, &top_jet, &cfg.radii, cfg.samples_per_shell, cfg.seed)?;
    let mut delta_hat = None;
    for s in shells.iter().rev() {
        if s.gradient_ratio > c {
            break;
        }
        delta_hat = Some(s.radius);
    }
    let Some(delta_hat) = delta_hat else {
        return fail("remainder gradient exceeds the halved floor on the innermost shell".into(), jet);
    };
    let fully_certified = e.polynomial_degree().is_some_and(|d| d <= r as usize) && bound.scope == BoundScope::AllRadii;
    Ok(Hq3Attempt {
        certificate: Some(Hq3Certificate {
            c,
            delta_hat,
            fully_certified,
            bound,
            jet: top_jet,
        }),
        reason: None,
        jet,
    })
}

pub fn decide_poly_min(t: &SparsePolynomial, xbar: &Point) -> Result<Verdict> {
    decide_poly_min_with(t, xbar, &DecideConfig::default())
}

/// Local minimality at the origin of the displacement polynomial `t`
/// (constant term ignored).
pub fn decide_poly_min_with(t: &SparsePolynomial, xbar: &Point, cfg: &DecideConfig) -> Result<Verdict> {
    check_dim(t.dim(), xbar.dim())?;
    let n = t.dim();
    let p = t.filter(|a| a.degree() > 0).prune(JET_ZERO_TOL);
    let Some(r0) = p.min_degree() else {
        let mut v = Verdict::new(Status::CertifiedMin, Path::Oracle);
        v.certificate = Some(Certificate {
            c: 0.0,
            radius: None,
            method: "constant polynomial".into(),
            scope: CertificateScope::Exact,
        });
        v.notes.push("polynomial is constant; the minimum is not strict".into());
        return Ok(v);
    };
    let h = p.homogeneous_part(r0);
    let mut notes = Vec::new();
    if r0 == 1 {
        // ∇T(0) ≠ 0: descend along −∇T(0)
        let g: Vec<f64> = (0..n)
            .map(|i| h.coefficient(&crate::jets::MultiIndex::unit(n, i)))
            .collect();
        let len = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut v = Verdict::new(Status::CertifiedNotMin, Path::Hq3Reduction);
        v.certificate = Some(Certificate {
            c: len,
            radius: None,
            method: "nonzero linear part".into(),
            scope: CertificateScope::Exact,
        });
        v.evidence.witness_direction = Some(g.iter().map(|x| -x / len).collect());
        return Ok(v);
    }
    if r0 == 2 {
        let q = decide_quadratic(&h.quadratic_form())?;
        if q.status != Status::Undecided {
            return Ok(q);
        }
        notes.push("quadratic part is singular".into());
    }
    let bound = certified_gradient_lower_bound_with(&h, &Point::origin(n), r0, 1.0, 0.5, &cfg.bnb)?;
    if bound.c.is_some_and(|c| c > 0.0) {
        let sign = certified_sphere_sign(&h, &cfg.bnb)?;
        let status = match &sign {
            SphereSign::Positive { .. } => Some(Status::CertifiedMin),
            SphereSign::Negative { .. } => Some(Status::CertifiedNotMin),
            SphereSign::Inconclusive { .. } => None,
        };
        if let Some(status) = status {
            let mut v = Verdict::new(status, Path::Hq3Reduction);
            v.certificate = Some(Certificate {
                c: bound.c.unwrap_or(0.0),
                radius: None,
                method: format!("interval branch-and-bound on the degree-{r0} part"),
                scope: CertificateScope::Exact,
            });
            if let SphereSign::Negative { point, .. } = &sign {
                v.evidence.witness_direction = Some(point.clone());
            }
            v.evidence.gradient_bound = Some(bound);
            v.evidence.sphere_sign = Some(sign);
            v.notes = notes;
            return Ok(v);
        }
        notes.push("sign of the lowest-order part not certified".into());
    } else {
        notes.push(format!("gradient of the degree-{r0} part not certified nonvanishing"));
    }
    let sampler = cfg.sampler(&Point::origin(n))?;
    let w = witness::witness_search_fn(|x| p.evaluate(x).ok(), 0.0, &sampler);
    let mut v = if w.found {
        Verdict::new(Status::EmpiricalNotMin, Path::Oracle)
    } else if w.all_nonnegative {
        Verdict::new(Status::EmpiricalMin, Path::Oracle)
    } else {
        Verdict::undecided(Path::Oracle, "negative values on too few consecutive shells")
    };
    v.evidence.witnesses = w.witnesses;
    v.evidence.gradient_bound = Some(bound);
    v.notes = notes;
    Ok(v)
}

/// Max coefficient difference between the jets at sampled Σ points and the
/// jet at `x̄`, all of order `r`.
fn jet_constancy(e: &Expression, xbar: &Point, r: u32, s: &SigmaSet, base: &Jet, cfg: &DecideConfig) -> Result<bool> {
    let outer = cfg.radii.first().copied().unwrap_or(DEFAULT_RADII[0]);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed);
    let points = s.sample_points(xbar, outer, CONSTANCY_POINTS, &mut rng)?;
    for z in points {
        let j = taylor_jet(e, &Point::new(z)?, r)?;
        let diff = j.poly.max_abs_diff(&base.poly).max((j.base_value - base.base_value).abs());
        if diff > JET_ZERO_TOL {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Decides whether `x̄` is a local minimum of `e`, relative to `Σ`.
pub fn decide_local_min(e: &Expression, xbar: &Point, r: u32, s: &SigmaSet, cfg: &DecideConfig) -> Result<Verdict> {
    check_dim(e.n_vars(), xbar.dim())?;
    check_dim(s.dim(), xbar.dim())?;
    if r < 2 {
        return Err(Error::InvalidArgument(
            "r must be at least 2: with r = 1 the gradient condition fails at every interior minimum".into(),
        ));
    }
    s.resolve()?;
    let sampler = cfg.sampler(xbar)?;
    let mut assumptions = Assumptions::default();
    if cfg.check_sigma_coverage {
        let outer = cfg.radii.first().copied().unwrap_or(DEFAULT_RADII[0]);
        let cov: CoverageReport =
            validate_sigma_covers_critical(e, s, xbar, outer, cfg.coverage_starts, cfg.coverage_tol)?;
        assumptions.sigma_covers_critical = Some(cov.covered);
        assumptions.coverage_violations = cov.violations;
        if !cov.covered {
            let mut v = Verdict::undecided(Path::Oracle, "sigma does not contain all estimated critical points near x̄");
            v.assumptions = assumptions;
            return Ok(v);
        }
    }
    let witnesses = witness_search(e, xbar, &sampler)?;

    let hq3 = certify_hq3(e, xbar, r, cfg)?;
    if let Some(cert) = &hq3.certificate {
        let pv = decide_poly_min_with(&hq3.jet.poly, xbar, cfg)?;
        let mut v = Verdict::new(pv.status, Path::Hq3Reduction);
        v.certificate = Some(Certificate {
            c: cert.c,
            radius: Some(cert.delta_hat),
            method: "interval branch-and-bound on the jet gradient, halved".into(),
            scope: if cert.fully_certified {
                CertificateScope::Exact
            } else if cert.bound.scope == BoundScope::SweptRadiiOnly {
                CertificateScope::SweptRadiiOnly
            } else {
                CertificateScope::ModuloRemainderSampling
            },
        });
        if !cert.fully_certified && pv.status.is_certified() {
            v.notes
                .push("transfer relies on the sampled remainder bound within delta_hat".into());
        }
        v.evidence.gradient_bound = Some(cert.bound.clone());
        v.evidence.jet = Some(hq3.jet.clone());
        v.evidence.witnesses = witnesses.witnesses.clone();
        v.evidence.witness_direction = pv.evidence.witness_direction.clone();
        v.evidence.eigenvalues = pv.evidence.eigenvalues.clone();
        v.evidence.sphere_sign = pv.evidence.sphere_sign.clone();
        v.assumptions = assumptions;
        if witnesses.found && pv.status.is_min() == Some(true) {
            v.status = Status::Undecided;
            v.reason = Some("inconsistency: certified jet reduction says min but descent witnesses were found".into());
        } else if pv.status == Status::Undecided {
            v.reason = pv.reason.clone();
        }
        v.evidence.polynomial_verdict = Some(Box::new(pv));
        return Ok(v);
    }
    let mut notes = vec![format!("jet certificate not available: {}", hq3.reason.clone().unwrap_or_default())];

    let hp = HornParams::new(r, cfg.w_bar)?;
    let horn = estimate_condition_with_floor(e, xbar, s, r, Condition::HornV, &sampler, Some(hp), cfg.c_floor)?;
    let grad = estimate_condition_with_floor(e, xbar, s, r, Condition::GradientIii, &sampler, None, cfg.c_floor)?;
    let mut estimates = vec![horn.clone(), grad];
    let mut verdict: Option<Verdict> = None;
    if horn.holds_empirically {
        let constant = jet_constancy(e, xbar, r, s, &hq3.jet, cfg)?;
        assumptions.jet_constant_on_sigma = Some(constant);
        if constant {
            let pv = decide_poly_min_with(&hq3.jet.poly, xbar, cfg)?;
            if pv.status != Status::Undecided {
                let mut v = Verdict::new(pv.status.as_empirical(), Path::Hq3Reduction);
                v.notes.push("jet reduction with sampled horn estimate and sampled jet constancy on sigma".into());
                v.evidence.polynomial_verdict = Some(Box::new(pv));
                verdict = Some(v);
            } else {
                notes.push("Taylor polynomial verdict undecided".into());
            }
        } else {
            notes.push("jet is not constant on sampled sigma points".into());
        }
    } else {
        notes.push("horn condition not supported by sampling".into());
    }
    if verdict.is_none() {
        let growth = estimate_condition_with_floor(e, xbar, s, r, Condition::GrowthIi, &sampler, None, cfg.c_floor)?;
        if growth.holds_empirically {
            verdict = Some(Verdict::new(Status::EmpiricalMin, Path::GrowthIi));
        }
        estimates.push(growth);
    }
    if witnesses.found {
        let overridden = verdict.as_ref().map(|v| v.status);
        if overridden != Some(Status::EmpiricalNotMin) {
            if let Some(prev) = overridden {
                notes.push(format!("witnesses override the {prev:?} verdict"));
            }
            let mut v = Verdict::new(Status::EmpiricalNotMin, Path::Witness);
            if let Some(prev) = verdict.take() {
                v.evidence.polynomial_verdict = prev.evidence.polynomial_verdict;
            }
            verdict = Some(v);
        }
    }
    let mut v = verdict.unwrap_or_else(|| Verdict::undecided(Path::Oracle, "no path reached a verdict"));
    v.evidence.witnesses = witnesses.witnesses;
    v.evidence.estimates = estimates;
    v.evidence.jet = Some(hq3.jet);
    v.assumptions = assumptions;
    v.notes.extend(notes);
    Ok(v)
}
