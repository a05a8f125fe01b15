use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::expr::{Expression, Point};
use crate::sampling::ShellSampler;
use crate::sigma::SigmaSet;

/// `holds_empirically` threshold on `c_hat`.
pub const DEFAULT_C_FLOOR: f64 = 1e-8;
pub const DEFAULT_W_BAR: f64 = 1.0;
pub const W_BAR_SWEEP: [f64; 3] = [0.1, 1.0, 10.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    /// `f(x) − f(x̄) ≥ c·dist^r`
    GrowthIi,
    /// `‖∇f(x)‖ ≥ c·dist^(r−1)`
    GradientIii,
    /// `dist·‖∇f(x)‖ + |f(x) − f(x̄)| ≥ c·dist^r`
    MixedIv,
    /// (iii) restricted to the horn neighbourhood
    HornV,
}

impl Condition {
    pub const ALL: [Condition; 4] = [
        Condition::GrowthIi,
        Condition::GradientIii,
        Condition::MixedIv,
        Condition::HornV,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Condition::GrowthIi => "growth_ii",
            Condition::GradientIii => "gradient_iii",
            Condition::MixedIv => "mixed_iv",
            Condition::HornV => "horn_v",
        }
    }

    /// Accepts roman numerals (`ii`..`v`) or full tags.
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "ii" | "growth_ii" => Some(Condition::GrowthIi),
            "iii" | "gradient_iii" => Some(Condition::GradientIii),
            "iv" | "mixed_iv" => Some(Condition::MixedIv),
            "v" | "horn_v" => Some(Condition::HornV),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HornParams {
    r: u32,
    w_bar: f64,
}

impl HornParams {
    pub fn new(r: u32, w_bar: f64) -> Result<Self> {
        if !(w_bar > 0.0) || !w_bar.is_finite() {
            return Err(Error::InvalidArgument("w_bar must be positive".into()));
        }
        Ok(HornParams { r, w_bar })
    }

    pub fn r(&self) -> u32 {
        self.r
    }

    pub fn w_bar(&self) -> f64 {
        self.w_bar
    }
}

fn horn_test(df: f64, dist: f64, hp: &HornParams) -> bool {
    df.abs() <= hp.w_bar * dist.powi(hp.r as i32)
}

/// `|f(x) − f(x̄)| ≤ w̄·dist(x, Σ)^r`
pub fn in_horn(e: &Expression, xbar: &Point, s: &SigmaSet, hp: &HornParams, x: &Point) -> Result<bool> {
    check_dim(e.n_vars(), x.dim())?;
    let df = e.evaluate(x)? - e.evaluate(xbar)?;
    Ok(horn_test(df, s.distance(x)?, hp))
}

/// All ratios at one sample point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleRatios {
    pub point: Vec<f64>,
    pub dist: f64,
    /// `f(x) − f(x̄)`
    pub df: f64,
    pub grad_norm: f64,
    pub growth: f64,
    pub gradient: f64,
    pub mixed: f64,
    pub in_horn: bool,
}

struct Evaluator<'a> {
    e: &'a Expression,
    s: &'a SigmaSet,
    fbar: f64,
    r: i32,
    horn: Option<HornParams>,
}

impl Evaluator<'_> {
    fn at(&self, x: &[f64]) -> Option<SampleRatios> {
        let dist = self.s.distance(x).ok()?;
        if !(dist > 0.0) || !dist.is_finite() {
            return None;
        }
        let (fx, g) = self.e.value_and_gradient(x).ok()?;
        let gn = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        let df = fx - self.fbar;
        let dr = dist.powi(self.r);
        let gradient = gn / dist.powi(self.r - 1);
        let out = SampleRatios {
            point: x.to_vec(),
            dist,
            df,
            grad_norm: gn,
            growth: df / dr,
            gradient,
            // written as a sum so that mixed ≥ gradient holds in floating point
            mixed: gradient + df.abs() / dr,
            in_horn: self.horn.is_none_or(|hp| horn_test(df, dist, &hp)),
        };
        [out.growth, out.gradient, out.mixed].iter().all(|v| v.is_finite()).then_some(out)
    }

    fn ratio(&self, c: Condition, x: &[f64]) -> Option<(f64, SampleRatios)> {
        let s = self.at(x)?;
        let v = match c {
            Condition::GrowthIi => s.growth,
            Condition::GradientIii => s.gradient,
            Condition::MixedIv => s.mixed,
            Condition::HornV if s.in_horn => s.gradient,
            Condition::HornV => return None,
        };
        Some((v, s))
    }
}

/// Per-sample ratios on every shell of `sampler` (uniform samples only).
pub fn pointwise_ratios(
    e: &Expression,
    xbar: &Point,
    s: &SigmaSet,
    r: u32,
    sampler: &ShellSampler,
    w_bar: f64,
) -> Result<Vec<Vec<SampleRatios>>> {
    check_dim(e.n_vars(), xbar.dim())?;
    s.resolve()?;
    let ev = Evaluator {
        e,
        s,
        fbar: e.evaluate(xbar)?,
        r: r as i32,
        horn: Some(HornParams::new(r, w_bar)?),
    };
    let sampler = sampler.recentered(xbar.clone());
    Ok((0..sampler.radii().len())
        .map(|k| sampler.shell_points(k).iter().filter_map(|x| ev.at(x)).collect())
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShellEstimate {
    pub radius: f64,
    /// Infimum of the ratio over the shell; `None` when the shell is empty.
    pub infimum: Option<f64>,
    pub argmin: Option<Vec<f64>>,
    /// dist(argmin, Σ)
    pub dist_at_min: Option<f64>,
    /// Value fitted against dist: `‖∇f‖` for (iii)/(v), `f − f(x̄)` for (ii),
    /// `dist·‖∇f‖ + |f − f(x̄)|` for (iv).
    pub source_at_min: Option<f64>,
    /// Uniform samples with a defined ratio.
    pub samples_used: usize,
    pub empty: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExponentFit {
    pub slope: f64,
    /// `log ĉ`
    pub intercept: f64,
    /// Max absolute residual in log space.
    pub residual: f64,
}

/// Least-squares line through `(log d, log v)`.
pub fn fit_exponent(pairs: &[(f64, f64)]) -> Result<ExponentFit> {
    if pairs.len() < 2 {
        return Err(Error::InvalidArgument("need at least two points to fit".into()));
    }
    if pairs.iter().any(|&(d, v)| !(d > 0.0) || !(v > 0.0) || !d.is_finite() || !v.is_finite()) {
        return Err(Error::InvalidArgument("fit data must be positive and finite".into()));
    }
    let pts: Vec<(f64, f64)> = pairs.iter().map(|&(d, v)| (d.ln(), v.ln())).collect();
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx <= 1e-24 * (1.0 + mx * mx) {
        return Err(Error::InvalidArgument("degenerate fit: all distances equal".into()));
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = pts
        .iter()
        .map(|p| (p.1 - slope * p.0 - intercept).abs())
        .fold(0.0, f64::max);
    Ok(ExponentFit {
        slope,
        intercept,
        residual,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LojaEstimate {
    pub condition: Condition,
    pub r: u32,
    pub w_bar: Option<f64>,
    pub radii: Vec<f64>,
    pub seed: u64,
    pub shells: Vec<ShellEstimate>,
    /// Min of the per-shell infima; `None` when every shell is empty.
    pub c_hat: Option<f64>,
    pub c_floor: f64,
    pub holds_empirically: bool,
    /// Horn condition with no horn member on any shell.
    pub vacuous: bool,
    pub empty_shells: Vec<usize>,
    pub fit: Option<ExponentFit>,
    /// Largest radius such that this and every smaller shell satisfies the
    /// condition. An observed value, not a proven δ.
    pub delta_hat: Option<f64>,
}

pub fn estimate_condition(
    e: &Expression,
    xbar: &Point,
    s: &SigmaSet,
    r: u32,
    condition: Condition,
    sampler: &ShellSampler,
    hp: Option<HornParams>,
) -> Result<LojaEstimate> {
    estimate_condition_with_floor(e, xbar, s, r, condition, sampler, hp, DEFAULT_C_FLOOR)
}

#[allow(clippy::too_many_arguments)]
pub fn estimate_condition_with_floor(
    e: &Expression,
    xbar: &Point,
    s: &SigmaSet,
    r: u32,
    condition: Condition,
    sampler: &ShellSampler,
    hp: Option<HornParams>,
    c_floor: f64,
) -> Result<LojaEstimate> {
    check_dim(e.n_vars(), xbar.dim())?;
    check_dim(s.dim(), xbar.dim())?;
    if r == 0 {
        return Err(Error::InvalidArgument("r must be positive".into()));
    }
    if condition == Condition::HornV && hp.is_none() {
        return Err(Error::InvalidArgument("the horn condition needs HornParams".into()));
    }
    s.resolve()?;
    let sampler = sampler.recentered(xbar.clone());
    let ev = Evaluator {
        e,
        s,
        fbar: e.evaluate(xbar)?,
        r: r as i32,
        horn: hp,
    };
    let objective = |x: &[f64]| ev.ratio(condition, x).map_or(f64::INFINITY, |v| v.0);
    let mut shells = Vec::with_capacity(sampler.radii().len());
    for (k, &rho) in sampler.radii().iter().enumerate() {
        let used = sampler
            .shell_points(k)
            .iter()
            .filter(|x| ev.ratio(condition, x).is_some())
            .count();
        let best = sampler.minimize_on_shell(k, objective);
        let detail = best.as_ref().and_then(|b| ev.ratio(condition, &b.point));
        shells.push(match (best, detail) {
            (Some(b), Some((v, sr))) => ShellEstimate {
                radius: rho,
                infimum: Some(v),
                argmin: Some(b.point),
                dist_at_min: Some(sr.dist),
                source_at_min: Some(match condition {
                    Condition::GrowthIi => sr.df,
                    Condition::GradientIii | Condition::HornV => sr.grad_norm,
                    Condition::MixedIv => sr.dist * sr.grad_norm + sr.df.abs(),
                }),
                samples_used: used,
                empty: false,
            },
            _ => ShellEstimate {
                radius: rho,
                infimum: None,
                argmin: None,
                dist_at_min: None,
                source_at_min: None,
                samples_used: used,
                empty: true,
            },
        });
    }
    let empty_shells: Vec<usize> = shells.iter().enumerate().filter(|(_, s)| s.empty).map(|(k, _)| k).collect();
    let c_hat = shells
        .iter()
        .filter_map(|s| s.infimum)
        .fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.min(v))));
    let vacuous = condition == Condition::HornV && c_hat.is_none();
    let holds_empirically = match c_hat {
        Some(c) => c > c_floor,
        None => vacuous,
    };
    let shell_holds = |s: &ShellEstimate| s.infimum.map_or(condition == Condition::HornV, |v| v > c_floor);
    let mut delta_hat = None;
    for s in shells.iter().rev() {
        if !shell_holds(s) {
            break;
        }
        delta_hat = Some(s.radius);
    }
    let pairs: Vec<(f64, f64)> = shells
        .iter()
        .filter_map(|s| Some((s.dist_at_min?, s.source_at_min?)))
        .filter(|&(d, v)| d > 0.0 && v > 0.0)
        .collect();
    let fit = fit_exponent(&pairs).ok();
    Ok(LojaEstimate {
        condition,
        r,
        w_bar: hp.map(|h| h.w_bar),
        radii: sampler.radii().to_vec(),
        seed: sampler.seed(),
        shells,
        c_hat,
        c_floor,
        holds_empirically,
        vacuous,
        empty_shells,
        fit,
        delta_hat,
    })
}

/// Runs the horn condition for each `w̄` of [`W_BAR_SWEEP`].
pub fn horn_sweep(
    e: &Expression,
    xbar: &Point,
    s: &SigmaSet,
    r: u32,
    sampler: &ShellSampler,
) -> Result<Vec<LojaEstimate>> {
    W_BAR_SWEEP
        .iter()
        .map(|&w| estimate_condition(e, xbar, s, r, Condition::HornV, sampler, Some(HornParams::new(r, w)?)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup(t: &str, n: usize) -> (Expression, Point, SigmaSet) {
        let o = Point::origin(n);
        (Expression::parse(t, n).unwrap(), o.clone(), SigmaSet::singleton(o))
    }

    #[test]
    fn horn_membership() {
        let (e, o, s) = setup("x1^2", 1);
        let x = Point::new(vec![0.1]).unwrap();
        assert!(!in_horn(&e, &o, &s, &HornParams::new(2, 0.5).unwrap(), &x).unwrap());
        assert!(in_horn(&e, &o, &s, &HornParams::new(2, 2.0).unwrap(), &x).unwrap());
        assert!(in_horn(&e, &o, &s, &HornParams::new(2, 0.5).unwrap(), &o).unwrap());
        assert!(HornParams::new(2, 0.0).is_err());
    }

    #[test]
    fn paraboloid_constants() {
        let (e, o, s) = setup("x1^2 + x2^2", 2);
        let sampler = ShellSampler::with_defaults(o.clone());
        let iii = estimate_condition(&e, &o, &s, 2, Condition::GradientIii, &sampler, None).unwrap();
        for sh in &iii.shells {
            assert!((sh.infimum.unwrap() - 2.0).abs() < 1e-12);
        }
        assert!((iii.c_hat.unwrap() - 2.0).abs() < 1e-12);
        let ii = estimate_condition(&e, &o, &s, 2, Condition::GrowthIi, &sampler, None).unwrap();
        assert!((ii.c_hat.unwrap() - 1.0).abs() < 1e-12);
        assert!(ii.holds_empirically);
        assert_eq!(ii.delta_hat, Some(0.1));
        let fit = iii.fit.unwrap();
        assert!((fit.slope - 1.0).abs() < 1e-6, "{fit:?}");
    }

    #[test]
    fn fit_examples() {
        let pairs: Vec<(f64, f64)> = [0.1, 0.01, 0.001].iter().map(|&d: &f64| (d, d.powf(1.5))).collect();
        let f = fit_exponent(&pairs).unwrap();
        assert!((f.slope - 1.5).abs() < 1e-12 && f.residual <= 1e-10);
        assert!(fit_exponent(&[(0.1, 1.0), (0.1, 2.0)]).is_err());
        assert!(fit_exponent(&[(0.1, 1.0)]).is_err());
    }

    #[test]
    fn saddle_has_negative_growth() {
        let (e, o, s) = setup("x1^2 - x2^2", 2);
        let sampler = ShellSampler::with_defaults(o.clone());
        let ii = estimate_condition(&e, &o, &s, 2, Condition::GrowthIi, &sampler, None).unwrap();
        assert!(ii.c_hat.unwrap() < 0.0);
        assert!(!ii.holds_empirically);
        assert_eq!(ii.delta_hat, None);
    }

    #[test]
    fn horn_can_be_vacuous() {
        // |x²| ≤ 0.5 x² never holds away from 0
        let (e, o, s) = setup("x1^2", 1);
        let sampler = ShellSampler::with_defaults(o.clone());
        let v = estimate_condition(&e, &o, &s, 2, Condition::HornV, &sampler, Some(HornParams::new(2, 0.5).unwrap())).unwrap();
        assert!(v.vacuous && v.holds_empirically && v.c_hat.is_none());
    }

    #[test]
    fn singleton_and_cloud_agree() {
        let (e, o, s) = setup("x1^2 + x2^4 + x1*x2^2", 2);
        let cloud = SigmaSet::point_cloud(vec![o.clone()]).unwrap();
        let sampler = ShellSampler::with_defaults(o.clone());
        for c in [Condition::GrowthIi, Condition::GradientIii, Condition::MixedIv] {
            let a = estimate_condition(&e, &o, &s, 4, c, &sampler, None).unwrap();
            let b = estimate_condition(&e, &o, &cloud, 4, c, &sampler, None).unwrap();
            assert!((a.c_hat.unwrap() - b.c_hat.unwrap()).abs() <= 1e-12);
        }
    }

    #[test]
    fn mixed_dominates_gradient_pointwise() {
        let (e, o, s) = setup("x1^2 + x2^4", 2);
        let sampler = ShellSampler::with_defaults(o.clone());
        for shell in pointwise_ratios(&e, &o, &s, 4, &sampler, 1.0).unwrap() {
            for p in shell {
                assert!(p.mixed >= p.gradient);
            }
        }
    }
}
