use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::expr::{Expression, Point};
use crate::loja::{estimate_condition, Condition, LojaEstimate};
use crate::sampling::ShellSampler;
use crate::sigma::SigmaSet;

/// `ε = c_hat / 2` from a growth estimate.
pub fn admissible_epsilon(growth: &LojaEstimate) -> Result<f64> {
    if growth.condition != Condition::GrowthIi {
        return Err(Error::InvalidArgument("admissible epsilon needs a growth_ii estimate".into()));
    }
    match growth.c_hat {
        Some(c) if c > 0.0 => Ok(c / 2.0),
        c => Err(Error::NotStrictGrowth {
            c_hat: c.unwrap_or(f64::NAN),
        }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationMode {
    /// `|h(x) − h(x̄)| ≤ ε·dist(x, Σ)^r`
    DistBound,
    /// `|h(x) − h(x̄)| ≤ ε·‖∇f(x)‖^r`, chained through `‖∇f‖ ≤ L̂·dist`
    GradientBound,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerturbationReport {
    pub mode: PerturbationMode,
    pub epsilon: f64,
    pub c_hat: Option<f64>,
    pub admissible_epsilon: Option<f64>,
    /// `ε < c_hat`; when false the remaining checks are not run.
    pub applicable: bool,
    /// `max ‖∇f‖/dist` (gradient mode).
    pub l_hat: Option<f64>,
    /// ε in the dist form: `ε` or `ε·L̂^r`.
    pub epsilon_effective: Option<f64>,
    /// The hypothesis on `h` in the chosen mode, on all samples.
    pub hypothesis_ok: bool,
    /// `|Δh| ≤ ε_eff·dist^r` on all samples.
    pub h_bound_ok: bool,
    pub max_h_ratio: Option<f64>,
    /// Min of `Δ(f + h)/dist^r` over samples and refined shell minima.
    pub combined_min_ratio: Option<f64>,
    /// `c_hat − ε_eff`
    pub combined_threshold: Option<f64>,
    /// `Δ(f + h) ≥ (c_hat − ε_eff)·dist^r ≥ 0` on all samples.
    pub combined_min_empirical: bool,
    pub samples: usize,
    /// Samples on Σ (dist = 0) that were skipped.
    pub skipped: usize,
    pub growth: LojaEstimate,
}

/// Sampled check that `f + h` keeps a strict-growth minimum at `x̄`.
#[allow(clippy::too_many_arguments)]
pub fn check_perturbation_stability(
    e: &Expression,
    h: &Expression,
    xbar: &Point,
    s: &SigmaSet,
    r: u32,
    epsilon: f64,
    sampler: &ShellSampler,
    mode: PerturbationMode,
) -> Result<PerturbationReport> {
    check_dim(e.n_vars(), xbar.dim())?;
    check_dim(h.n_vars(), xbar.dim())?;
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument("epsilon must be positive".into()));
    }
    let sampler = sampler.recentered(xbar.clone());
    let growth = estimate_condition(e, xbar, s, r, Condition::GrowthIi, &sampler, None)?;
    let mut report = PerturbationReport {
        mode,
        epsilon,
        c_hat: growth.c_hat,
        admissible_epsilon: admissible_epsilon(&growth).ok(),
        applicable: growth.c_hat.is_some_and(|c| epsilon < c),
        l_hat: None,
        epsilon_effective: None,
        hypothesis_ok: false,
        h_bound_ok: false,
        max_h_ratio: None,
        combined_min_ratio: None,
        combined_threshold: None,
        combined_min_empirical: false,
        samples: 0,
        skipped: 0,
        growth,
    };
    if !report.applicable {
        return Ok(report);
    }
    let c_hat = report.c_hat.expect("applicable implies c_hat");
    let ri = r as i32;
    let fbar = e.evaluate(xbar)?;
    let hbar = h.evaluate(xbar)?;

    struct Sample {
        dist: f64,
        df: f64,
        dh: f64,
        grad: f64,
    }
    let mut samples = Vec::new();
    for k in 0..sampler.radii().len() {
        for x in sampler.shell_points(k) {
            let d = s.distance(&x)?;
            if !(d > 0.0) || !d.is_finite() {
                report.skipped += 1;
                continue;
            }
            let (fx, g) = e.value_and_gradient(&x)?;
            samples.push(Sample {
                dist: d,
                df: fx - fbar,
                dh: h.evaluate(&x)? - hbar,
                grad: g.iter().map(|v| v * v).sum::<f64>().sqrt(),
            });
        }
    }
    report.samples = samples.len();
    let eps_eff = match mode {
        PerturbationMode::DistBound => {
            report.hypothesis_ok = samples.iter().all(|p| p.dh.abs() <= epsilon * p.dist.powi(ri));
            epsilon
        }
        PerturbationMode::GradientBound => {
            let l = samples.iter().map(|p| p.grad / p.dist).fold(0.0, f64::max);
            report.l_hat = Some(l);
            report.hypothesis_ok = samples.iter().all(|p| p.dh.abs() <= epsilon * p.grad.powi(ri));
            epsilon * l.powi(ri)
        }
    };
    report.epsilon_effective = Some(eps_eff);
    report.h_bound_ok = samples.iter().all(|p| p.dh.abs() <= eps_eff * p.dist.powi(ri));
    report.max_h_ratio = samples.iter().map(|p| p.dh.abs() / p.dist.powi(ri)).reduce(f64::max);

    let combined = |x: &[f64]| -> f64 {
        let Ok(d) = s.distance(x) else { return f64::INFINITY };
        if !(d > 0.0) {
            return f64::INFINITY;
        }
        match (e.evaluate(x), h.evaluate(x)) {
            (Ok(fx), Ok(hx)) => (fx - fbar + hx - hbar) / d.powi(ri),
            _ => f64::INFINITY,
        }
    };
    let mut cmin = samples
        .iter()
        .map(|p| (p.df + p.dh) / p.dist.powi(ri))
        .fold(f64::INFINITY, f64::min);
    for k in 0..sampler.radii().len() {
        if let Some(m) = sampler.minimize_on_shell(k, combined) {
            cmin = cmin.min(m.value);
        }
    }
    let threshold = c_hat - eps_eff;
    report.combined_threshold = Some(threshold);
    if cmin.is_finite() {
        report.combined_min_ratio = Some(cmin);
    }
    report.combined_min_empirical = threshold >= 0.0 && cmin.is_finite() && cmin >= threshold;
    Ok(report)
}
