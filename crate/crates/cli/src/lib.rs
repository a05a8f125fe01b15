//! Problem files in, JSON reports out.
//!
//! A problem file names a function, a point, a degree and a reference set;
//! each command runs one stage of the library on it and wraps the result in
//! a versioned report document.

use std::time::{SystemTime, UNIX_EPOCH};

use loja_jet::decide::{
    check_perturbation_stability, decide_local_min, decide_poly_min, DecideConfig, PerturbationMode, Status,
    Verdict, LAMBDA_FLOOR, MIN_WITNESS_SHELLS, WITNESS_MARGIN,
};
use loja_jet::jets::JET_ZERO_TOL;
use loja_jet::loja::{estimate_condition, horn_sweep, Condition, HornParams, DEFAULT_C_FLOOR, DEFAULT_W_BAR};
use loja_jet::sampling::{DEFAULT_RADII, DEFAULT_SAMPLES_PER_SHELL, DEFAULT_SEED};
use loja_jet::sigma::{validate_sigma_covers_critical, SigmaSpec, DEFAULT_CRITICAL_STARTS, DEFAULT_CRITICAL_TOL};
use loja_jet::{taylor_jet, Expression, Point, SigmaSet, ShellSampler};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

pub const SCHEMA: &str = "loja-jet/1";

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_UNDECIDED: i32 = 2;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Core(#[from] loja_jet::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub radii: Vec<f64>,
    pub samples_per_shell: usize,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            radii: DEFAULT_RADII.to_vec(),
            samples_per_shell: DEFAULT_SAMPLES_PER_SHELL,
            seed: DEFAULT_SEED,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationSpec {
    pub h: String,
    pub epsilon: f64,
    #[serde(default = "default_mode")]
    pub mode: PerturbationMode,
}

fn default_mode() -> PerturbationMode {
    PerturbationMode::DistBound
}

fn default_sigma() -> SigmaSpec {
    SigmaSpec::Point { point: None }
}

/// Contents of a problem file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub function: String,
    pub n_vars: usize,
    /// Defaults to the origin.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub point: Option<Vec<f64>>,
    pub r: u32,
    /// Defaults to `{x̄}`.
    #[serde(default = "default_sigma")]
    pub sigma: SigmaSpec,
    #[serde(default)]
    pub sampler: SamplerConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w_bar: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perturbation: Option<PerturbationSpec>,
}

/// A validated problem.
pub struct Problem {
    pub spec: ProblemSpec,
    pub f: Expression,
    pub xbar: Point,
    pub sigma: SigmaSet,
    pub sampler: ShellSampler,
}

/// Parses problem JSON, reporting the field path of schema violations.
pub fn parse_problem(text: &str) -> CliResult<ProblemSpec> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        if path == "." {
            CliError::Input(format!("problem file: {inner}"))
        } else {
            CliError::Input(format!("problem file: at `{path}`: {inner}"))
        }
    })
}

impl ProblemSpec {
    pub fn validate(&self) -> CliResult<Problem> {
        let field = |name: &str, e: loja_jet::Error| CliError::Input(format!("{name}: {e}"));
        let f = Expression::parse(&self.function, self.n_vars).map_err(|e| field("function", e))?;
        if self.r < 2 {
            return Err(CliError::Input("r: must be at least 2".into()));
        }
        let xbar = match &self.point {
            Some(p) => Point::new(p.clone()).map_err(|e| field("point", e))?,
            None => Point::origin(self.n_vars),
        };
        if xbar.dim() != self.n_vars {
            return Err(CliError::Input(format!(
                "point: has {} coordinates, n_vars is {}",
                xbar.dim(),
                self.n_vars
            )));
        }
        let sigma = self.sigma.build(&f, &xbar).map_err(|e| field("sigma", e))?;
        let sampler = ShellSampler::new(
            xbar.clone(),
            self.sampler.radii.clone(),
            self.sampler.samples_per_shell,
            self.sampler.seed,
        )
        .map_err(|e| field("sampler", e))?;
        if let Some(w) = self.w_bar {
            HornParams::new(self.r, w).map_err(|e| field("w_bar", e))?;
        }
        if let Some(p) = &self.perturbation {
            Expression::parse(&p.h, self.n_vars).map_err(|e| field("perturbation.h", e))?;
            if p.epsilon.is_nan() || p.epsilon <= 0.0 {
                return Err(CliError::Input("perturbation.epsilon: must be positive".into()));
            }
        }
        Ok(Problem {
            spec: self.clone(),
            f,
            xbar,
            sigma,
            sampler,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Command {
    Jet,
    Sigma,
    Loja { condition: Condition, w_bar: Option<f64> },
    Decide,
    Perturb,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Jet => "jet",
            Command::Sigma => "sigma",
            Command::Loja { .. } => "loja",
            Command::Decide => "decide",
            Command::Perturb => "perturb",
        }
    }
}

/// Result of one command, before wrapping.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub result: Value,
    pub exit_code: i32,
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report types serialize")
}

fn decide_config(p: &Problem) -> DecideConfig {
    DecideConfig {
        radii: p.spec.sampler.radii.clone(),
        samples_per_shell: p.spec.sampler.samples_per_shell,
        seed: p.spec.sampler.seed,
        w_bar: p.spec.w_bar.unwrap_or(DEFAULT_W_BAR),
        ..DecideConfig::default()
    }
}

fn verdict_exit(v: &Verdict) -> i32 {
    if v.status == Status::Undecided {
        EXIT_UNDECIDED
    } else {
        EXIT_OK
    }
}

/// Runs `command` on the problem; `seed` overrides the sampler seed.
pub fn run_problem(spec: &ProblemSpec, command: Command, seed: Option<u64>) -> CliResult<RunOutput> {
    let mut spec = spec.clone();
    if let Some(s) = seed {
        spec.sampler.seed = s;
    }
    let p = spec.validate()?;
    let r = p.spec.r;
    let (result, exit_code) = match command {
        Command::Jet => (to_value(&taylor_jet(&p.f, &p.xbar, r)?), EXIT_OK),
        Command::Sigma => {
            p.sigma.resolve()?;
            let radius = p.spec.sampler.radii[0];
            let coverage =
                validate_sigma_covers_critical(&p.f, &p.sigma, &p.xbar, radius, DEFAULT_CRITICAL_STARTS, DEFAULT_CRITICAL_TOL)?;
            let estimate = match &p.sigma {
                SigmaSet::CriticalSet(c) => c.estimate().map(to_value),
                _ => None,
            };
            let v = json!({
                "sigma": to_value(&p.sigma.spec()),
                "dim": p.sigma.dim(),
                "distance_to_point": p.sigma.distance(p.xbar.coords())?,
                "critical_estimate": estimate,
                "coverage": to_value(&coverage),
            });
            (v, EXIT_OK)
        }
        Command::Loja { condition, w_bar } => {
            let w = w_bar.or(p.spec.w_bar);
            let hp = match condition {
                Condition::HornV => Some(HornParams::new(r, w.unwrap_or(DEFAULT_W_BAR)).map_err(|e| CliError::Input(format!("w_bar: {e}")))?),
                _ => None,
            };
            let est = estimate_condition(&p.f, &p.xbar, &p.sigma, r, condition, &p.sampler, hp)?;
            let mut v = json!({ "estimate": to_value(&est) });
            if condition == Condition::HornV && w.is_none() {
                v["w_bar_sweep"] = to_value(&horn_sweep(&p.f, &p.xbar, &p.sigma, r, &p.sampler)?);
            }
            (v, EXIT_OK)
        }
        Command::Decide => {
            let v = decide_local_min(&p.f, &p.xbar, r, &p.sigma, &decide_config(&p))?;
            let code = verdict_exit(&v);
            (to_value(&v), code)
        }
        Command::Perturb => {
            let Some(ps) = &p.spec.perturbation else {
                return Err(CliError::Input("perturbation: required by the perturb command".into()));
            };
            let h = Expression::parse(&ps.h, p.spec.n_vars).map_err(|e| CliError::Input(format!("perturbation.h: {e}")))?;
            let rep = check_perturbation_stability(&p.f, &h, &p.xbar, &p.sigma, r, ps.epsilon, &p.sampler, ps.mode)?;
            (to_value(&rep), EXIT_OK)
        }
    };
    Ok(RunOutput { result, exit_code })
}

fn tolerances() -> Value {
    json!({
        "jet_zero_tol": JET_ZERO_TOL,
        "lambda_floor": LAMBDA_FLOOR,
        "witness_margin": WITNESS_MARGIN,
        "min_witness_shells": MIN_WITNESS_SHELLS,
        "c_floor": DEFAULT_C_FLOOR,
        "critical_tol": DEFAULT_CRITICAL_TOL,
    })
}

/// Wraps a command result into the report document.
pub fn report_document(command: &str, problem: Option<&ProblemSpec>, seed: Option<u64>, result: Value) -> Value {
    let timestamp = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    json!({
        "schema": SCHEMA,
        "command": command,
        "provenance": {
            "tool": env!("CARGO_PKG_NAME"),
            "version": env!("CARGO_PKG_VERSION"),
            "seed": seed,
            "tolerances": tolerances(),
        },
        "timestamp": timestamp,
        "problem": problem.map(to_value),
        "result": result,
    })
}

/// Removes the `timestamp` field so reports can be compared.
pub fn strip_timestamp(doc: &mut Value) {
    if let Some(m) = doc.as_object_mut() {
        m.remove("timestamp");
    }
}

pub const EXAMPLE_IDS: [&str; 10] = [
    "vd11_i_r2",
    "vd11_i_r3",
    "vd11_i_r4",
    "vd11_i_r5",
    "vd11_i_r6",
    "vd11_ii_pd",
    "vd11_ii_indef",
    "closing_i_r2",
    "closing_i_r3",
    "closing_ii_k3",
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExampleReport {
    pub id: String,
    pub problem: ProblemSpec,
    pub expected: String,
    pub observed: String,
    pub pass: bool,
    pub checks: Vec<Check>,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

fn check(name: &str, pass: bool, detail: String) -> Check {
    Check {
        name: name.into(),
        pass,
        detail,
    }
}

fn example_problem(id: &str) -> Option<ProblemSpec> {
    let base = |function: String, n_vars: usize, r: u32, sigma: SigmaSpec| ProblemSpec {
        function,
        n_vars,
        point: None,
        r,
        sigma,
        sampler: SamplerConfig::default(),
        w_bar: None,
        perturbation: None,
    };
    let point = default_sigma();
    if let Some(r) = id.strip_prefix("vd11_i_r") {
        let r: u32 = r.parse().ok().filter(|r| (2..=6).contains(r))?;
        return Some(base(format!("x1^{r} + flat(x1)"), 1, r, point));
    }
    if let Some(r) = id.strip_prefix("closing_i_r") {
        let r: u32 = r.parse().ok().filter(|r| (2..=3).contains(r))?;
        let sigma = SigmaSpec::Affine {
            offset: None,
            basis: vec![vec![0.0, 1.0]],
        };
        return Some(base(format!("x1^{r} + x1^{}*flat(x2)", r + 1), 2, r, sigma));
    }
    match id {
        "vd11_ii_pd" => Some(base("0.5*(x1^2 + 3*x2^2) + flat(x1)".into(), 2, 2, point)),
        "vd11_ii_indef" => Some(base("0.5*(x1^2 - x2^2) + flat(x1)".into(), 2, 2, point)),
        "closing_ii_k3" => Some(base("x1^3 - 3*x1*x2^3 + flat(x2)".into(), 2, 4, point)),
        _ => None,
    }
}

fn describe(s: Status) -> String {
    serde_json::to_value(s)
        .ok()
        .and_then(|v| v.as_str().map(str::to_owned))
        .unwrap_or_default()
}

/// Runs the named worked example and compares it with its known outcome.
pub fn reproduce_example(id: &str) -> CliResult<ExampleReport> {
    let spec = example_problem(id).ok_or_else(|| {
        CliError::Input(format!("unknown example `{id}`; known: {}", EXAMPLE_IDS.join(", ")))
    })?;
    let p = spec.validate()?;
    let r = spec.r;
    let cfg = decide_config(&p);
    let v = decide_local_min(&p.f, &p.xbar, r, &p.sigma, &cfg)?;
    let mut checks = Vec::new();
    let expected;
    if id.starts_with("vd11_i_r") || id.starts_with("closing_i_r") {
        let want_min = r % 2 == 0;
        expected = if want_min { "min" } else { "not_min" }.to_string();
        checks.push(check(
            "verdict",
            v.status.is_min() == Some(want_min),
            format!("status {}", describe(v.status)),
        ));
        let jet = taylor_jet(&p.f, &p.xbar, r)?;
        let pv = decide_poly_min(&jet.poly, &p.xbar)?;
        checks.push(check(
            "taylor_polynomial_agrees",
            pv.status.is_min() == v.status.is_min(),
            format!("polynomial status {}", describe(pv.status)),
        ));
        if id.starts_with("closing_i_r") {
            let est = estimate_condition(&p.f, &p.xbar, &p.sigma, r, Condition::GradientIii, &p.sampler, None)?;
            let c = est.c_hat.unwrap_or(f64::NAN);
            checks.push(check(
                "gradient_constant",
                c >= 0.5 * r as f64,
                format!("c_hat {c} against {}", 0.5 * r as f64),
            ));
            checks.push(check(
                "jet_constant_on_sigma",
                v.assumptions.jet_constant_on_sigma != Some(false),
                format!("{:?}", v.assumptions.jet_constant_on_sigma),
            ));
        }
    } else if id == "vd11_ii_pd" {
        expected = "certified_min".into();
        checks.push(check(
            "verdict",
            v.status == Status::CertifiedMin,
            format!("status {}", describe(v.status)),
        ));
    } else if id == "vd11_ii_indef" {
        expected = "certified_not_min with an eigenvector witness".into();
        checks.push(check(
            "verdict",
            v.status == Status::CertifiedNotMin,
            format!("status {}", describe(v.status)),
        ));
        let dir = v.evidence.witness_direction.clone().unwrap_or_default();
        let ok = dir.len() == 2 && dir[0].abs() < 1e-9 && (dir[1].abs() - 1.0).abs() < 1e-9;
        checks.push(check("witness_direction", ok, format!("{dir:?}")));
    } else {
        expected = "not_min with slope 3.5 and witnesses near (-rho, 0)".into();
        checks.push(check(
            "verdict",
            v.status.is_min() == Some(false),
            format!("status {}", describe(v.status)),
        ));
        let est = estimate_condition(&p.f, &p.xbar, &p.sigma, r, Condition::GradientIii, &p.sampler, None)?;
        let slope = est.fit.as_ref().map_or(f64::NAN, |f| f.slope);
        checks.push(check("slope", (slope - 3.5).abs() <= 0.3, format!("slope {slope}")));
        let near = v
            .evidence
            .witnesses
            .iter()
            .filter(|w| (w.point[0] + w.radius).abs() <= 0.05 * w.radius && w.point[1].abs() <= 0.2 * w.radius)
            .count();
        checks.push(check(
            "witnesses",
            near >= MIN_WITNESS_SHELLS,
            format!("{near} of {} witnesses near (-rho, 0)", v.evidence.witnesses.len()),
        ));
    }
    let pass = checks.iter().all(|c| c.pass);
    Ok(ExampleReport {
        id: id.into(),
        problem: spec,
        expected,
        observed: describe(v.status),
        pass,
        checks,
        verdict: v,
    })
}
