use serde::Serialize;

use crate::error::{check_dim, Result};
use crate::expr::{Expression, Point};
use crate::sampling::ShellSampler;

/// A sample is a witness when `f(x) < f(x̄) − WITNESS_MARGIN`.
pub const WITNESS_MARGIN: f64 = 1e-14;
/// Witnesses must occupy this many consecutive shells.
pub const MIN_WITNESS_SHELLS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Witness {
    pub radius: f64,
    pub point: Vec<f64>,
    /// `f(point) − f(x̄)`
    pub drop: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShellMinimumReport {
    pub radius: f64,
    pub point: Option<Vec<f64>>,
    /// `min f − f(x̄)` on the shell
    pub drop: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WitnessReport {
    pub shells: Vec<ShellMinimumReport>,
    /// Witnesses of the longest run of consecutive witness shells.
    pub witnesses: Vec<Witness>,
    /// The run spans at least [`MIN_WITNESS_SHELLS`] shells.
    pub found: bool,
    /// Every shell minimum is `≥ −WITNESS_MARGIN`.
    pub all_nonnegative: bool,
}

pub(crate) fn witness_search_fn(f: impl Fn(&[f64]) -> Option<f64>, fbar: f64, sampler: &ShellSampler) -> WitnessReport {
    let objective = |x: &[f64]| f(x).map_or(f64::INFINITY, |v| v - fbar);
    let mut shells = Vec::with_capacity(sampler.radii().len());
    for (k, &rho) in sampler.radii().iter().enumerate() {
        let m = sampler.minimize_on_shell(k, objective);
        shells.push(ShellMinimumReport {
            radius: rho,
            drop: m.as_ref().map(|m| m.value),
            point: m.map(|m| m.point),
        });
    }
    let is_witness = |s: &ShellMinimumReport| s.drop.is_some_and(|d| d < -WITNESS_MARGIN);
    let (mut best, mut cur) = ((0, 0), (0, 0));
    for (k, s) in shells.iter().enumerate() {
        if is_witness(s) {
            if cur.1 == 0 {
                cur.0 = k;
            }
            cur.1 += 1;
            if cur.1 > best.1 {
                best = cur;
            }
        } else {
            cur = (0, 0);
        }
    }
    let witnesses = shells[best.0..best.0 + best.1]
        .iter()
        .map(|s| Witness {
            radius: s.radius,
            point: s.point.clone().expect("witness shells have a minimizer"),
            drop: s.drop.expect("witness shells have a value"),
        })
        .collect();
    let all_nonnegative = shells.iter().all(|s| s.drop.is_none_or(|d| d >= -WITNESS_MARGIN));
    WitnessReport {
        shells,
        witnesses,
        found: best.1 >= MIN_WITNESS_SHELLS,
        all_nonnegative,
    }
}

/// Per-shell minimizers of `f` around `x̄` and the witnesses of descent.
pub fn witness_search(e: &Expression, xbar: &Point, sampler: &ShellSampler) -> Result<WitnessReport> {
    check_dim(e.n_vars(), xbar.dim())?;
    let fbar = e.evaluate(xbar)?;
    let sampler = sampler.recentered(xbar.clone());
    Ok(witness_search_fn(|x| e.evaluate(x).ok(), fbar, &sampler))
}
