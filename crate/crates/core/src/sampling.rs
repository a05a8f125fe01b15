//! Deterministic sampling of shrinking shells around a point.
//!
//! Shell `k` is the annulus `ρ_k/2 <= ‖x − center‖ <= ρ_k`, sampled uniformly
//! by volume. Each shell draws from its own ChaCha stream derived from the
//! seed, so shells can be processed in any order with identical results.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::Point;

pub const DEFAULT_RADII: [f64; 5] = [1e-1, 3e-2, 1e-2, 3e-3, 1e-3];
pub const DEFAULT_SAMPLES_PER_SHELL: usize = 512;
pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShellSampler {
    center: Point,
    radii: Vec<f64>,
    samples_per_shell: usize,
    seed: u64,
    /// Polish the best samples of each shell with a projected compass
    /// search before reporting shell extrema.
    refine: bool,
}

impl ShellSampler {
    pub fn new(center: Point, radii: Vec<f64>, samples_per_shell: usize, seed: u64) -> Result<Self> {
        if radii.is_empty() {
            return Err(Error::InvalidArgument("radius list is empty".into()));
        }
        if radii.iter().any(|&r| !(r > 0.0) || !r.is_finite()) {
            return Err(Error::InvalidArgument("radii must be positive and finite".into()));
        }
        if radii.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::InvalidArgument("radii must be strictly decreasing".into()));
        }
        if samples_per_shell == 0 {
            return Err(Error::InvalidArgument("samples_per_shell must be at least 1".into()));
        }
        Ok(ShellSampler {
            center,
            radii,
            samples_per_shell,
            seed,
            refine: true,
        })
    }

    pub fn with_defaults(center: Point) -> Self {
        Self::new(
            center,
            DEFAULT_RADII.to_vec(),
            DEFAULT_SAMPLES_PER_SHELL,
            DEFAULT_SEED,
        )
        .expect("default sampler parameters are valid")
    }

    pub fn with_refine(mut self, refine: bool) -> Self {
        self.refine = refine;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn recentered(&self, center: Point) -> Self {
        ShellSampler {
            center,
            ..self.clone()
        }
    }

    pub fn center(&self) -> &Point {
        &self.center
    }
    pub fn radii(&self) -> &[f64] {
        &self.radii
    }
    pub fn samples_per_shell(&self) -> usize {
        self.samples_per_shell
    }
    pub fn seed(&self) -> u64 {
        self.seed
    }
    pub fn refines(&self) -> bool {
        self.refine
    }

    pub fn shell_rng(&self, shell: usize) -> ChaCha8Rng {
        let mix = (shell as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        ChaCha8Rng::seed_from_u64(self.seed ^ mix)
    }

    /// Uniform samples of shell `shell`.
    pub fn shell_points(&self, shell: usize) -> Vec<Vec<f64>> {
        let rho = self.radii[shell];
        let mut rng = self.shell_rng(shell);
        (0..self.samples_per_shell)
            .map(|_| sample_annulus(&mut rng, &self.center, rho / 2.0, rho))
            .collect()
    }

    /// Minimizes `objective` over shell `shell`: uniform samples, then (when
    /// refinement is on) a projected compass search from the best few.
    /// Returns `None` if no sample has a finite objective.
    pub fn minimize_on_shell(
        &self,
        shell: usize,
        objective: impl Fn(&[f64]) -> f64,
    ) -> Option<ShellMinimum> {
        let points = self.shell_points(shell);
        let mut scored: Vec<(f64, Vec<f64>)> = points
            .into_iter()
            .map(|p| (objective(&p), p))
            .filter(|(v, _)| v.is_finite())
            .collect();
        if scored.is_empty() {
            return None;
        }
        scored.sort_by(|a, b| a.0.total_cmp(&b.0));
        let finite = scored.len();
        let (mut best_val, mut best) = scored[0].clone();
        if self.refine {
            let rho = self.radii[shell];
            for (v, p) in scored.iter().take(REFINE_STARTS) {
                let (q, w) = compass_search(&self.center, rho, p.clone(), *v, &objective);
                if w < best_val {
                    best_val = w;
                    best = q;
                }
            }
        }
        Some(ShellMinimum {
            point: best,
            value: best_val,
            finite_samples: finite,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShellMinimum {
    pub point: Vec<f64>,
    pub value: f64,
    /// Uniform samples with a finite objective.
    pub finite_samples: usize,
}

const REFINE_STARTS: usize = 3;
const REFINE_BUDGET: usize = 4000;

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn sample_annulus(rng: &mut impl Rng, center: &[f64], inner: f64, outer: f64) -> Vec<f64> {
    let n = center.len();
    loop {
        let dir: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let len = norm(&dir);
        if len < 1e-300 {
            continue;
        }
        let u: f64 = rng.gen();
        let fn_ = n as f64;
        let lo = (inner / outer).powf(fn_);
        let radius = outer * (lo + u * (1.0 - lo)).powf(1.0 / fn_);
        return center
            .iter()
            .zip(&dir)
            .map(|(c, d)| c + radius * d / len)
            .collect();
    }
}

/// Radially clamps `x` into the annulus `[rho/2, rho]` around `center`.
fn project(center: &[f64], rho: f64, x: &mut [f64]) {
    let d: Vec<f64> = x.iter().zip(center).map(|(a, c)| a - c).collect();
    let len = norm(&d);
    if len == 0.0 {
        return;
    }
    let target = len.clamp(rho / 2.0, rho);
    if target != len {
        let s = target / len;
        for (xi, (di, ci)) in x.iter_mut().zip(d.iter().zip(center)) {
            *xi = ci + di * s;
        }
    }
}

fn poll_directions(n: usize) -> Vec<Vec<f64>> {
    let mut dirs = Vec::new();
    for i in 0..n {
        for s in [1.0, -1.0] {
            let mut d = vec![0.0; n];
            d[i] = s;
            dirs.push(d);
        }
    }
    if n <= 3 {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        for i in 0..n {
            for j in i + 1..n {
                for (si, sj) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
                    let mut d = vec![0.0; n];
                    d[i] = si * h;
                    d[j] = sj * h;
                    dirs.push(d);
                }
            }
        }
    }
    dirs
}

fn compass_search(
    center: &[f64],
    rho: f64,
    start: Vec<f64>,
    start_val: f64,
    objective: &impl Fn(&[f64]) -> f64,
) -> (Vec<f64>, f64) {
    let dirs = poll_directions(center.len());
    let mut x = start;
    let mut fx = start_val;
    let mut step = rho / 8.0;
    let mut evals = 0;
    while step > rho * 1e-12 && evals < REFINE_BUDGET {
        let mut improved = false;
        for d in &dirs {
            let mut y: Vec<f64> = x.iter().zip(d).map(|(a, b)| a + step * b).collect();
            project(center, rho, &mut y);
            let fy = objective(&y);
            evals += 1;
            if fy.is_finite() && fy < fx {
                x = y;
                fx = fy;
                improved = true;
                break;
            }
        }
        if improved {
            step *= 2.0;
        } else {
            step *= 0.5;
        }
    }
    (x, fx)
}
