//! Acceptance suite: one line per criterion with its runtime.

mod common;

use std::time::Instant;

use common::*;
use loja_jet::decide::{
    check_perturbation_stability, decide_local_min, decide_poly_min, admissible_epsilon, DecideConfig,
    PerturbationMode, Status,
};
use loja_jet::jets::{flatness_check, taylor_jet, MultiIndex};
use loja_jet::loja::{certified_gradient_lower_bound, estimate_condition, pointwise_ratios, Condition};
use loja_jet::{Expression, Point, SigmaSet, ShellSampler};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;
type Criterion = (u32, &'static str, f64, fn() -> Check);

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn c1_jet_exactness() -> Check {
    let e = Expression::parse("exp(x1)", 1).map_err(err)?;
    let j = taylor_jet(&e, &Point::origin(1), 3).map_err(err)?;
    for (k, want) in [(1u32, 1.0), (2, 0.5), (3, 1.0 / 6.0)] {
        let got = j.poly.coefficient(&MultiIndex::new(vec![k]));
        ensure((got - want).abs() <= 1e-12, format!("exp coefficient {k}: {got}"))?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let n = rng.gen_range(1..=4usize);
        let r = rng.gen_range(1..=5u32);
        let p = random_poly(&mut rng, n, r);
        let e = Expression::parse(&p.to_expression_text(), n).map_err(err)?;
        let z = Point::new(random_unit_ball_point(&mut rng, n, 1.0)).map_err(err)?;
        let j = taylor_jet(&e, &z, r).map_err(err)?;
        for _ in 0..20 {
            let x = random_unit_ball_point(&mut rng, n, 1.0);
            worst = worst.max((j.evaluate(&x).map_err(err)? - p.evaluate(&x).map_err(err)?).abs());
        }
    }
    ensure(worst <= 1e-10, format!("polynomial reproduction error {worst:e}"))?;
    Ok(format!("exp jet exact, polynomial reproduction error {worst:.1e}"))
}

fn c2_differentiation() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let h = 1e-5;
    let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(1.0);
    let (mut worst_g, mut worst_h) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let n = rng.gen_range(1..=3usize);
        let text = random_expr_text(&mut rng, n, 4);
        let e = Expression::parse(&text, n).map_err(err)?;
        let x = random_unit_ball_point(&mut rng, n, 1.0);
        let g = e.gradient(&x).map_err(err)?;
        let hs = e.hessian(&x).map_err(err)?;
        for i in 0..n {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            let fd = (e.evaluate(&xp).map_err(err)? - e.evaluate(&xm).map_err(err)?) / (2.0 * h);
            worst_g = worst_g.max(rel(g[i], fd));
            let gp = e.gradient(&xp).map_err(err)?;
            let gm = e.gradient(&xm).map_err(err)?;
            for j in 0..n {
                worst_h = worst_h.max(rel(hs[j][i], (gp[j] - gm[j]) / (2.0 * h)));
            }
        }
    }
    ensure(worst_g <= 1e-6 && worst_h <= 1e-6, format!("gradient {worst_g:e}, hessian {worst_h:e}"))?;
    Ok(format!("max rel err gradient {worst_g:.1e}, hessian {worst_h:.1e}"))
}

fn c3_vd11_parity() -> Check {
    let o = Point::origin(1);
    let cfg = DecideConfig::default();
    let mut seen = Vec::new();
    for r in 2..=6u32 {
        let e = Expression::parse(&format!("x1^{r} + flat(x1)"), 1).map_err(err)?;
        let v = decide_local_min(&e, &o, r, &SigmaSet::singleton(o.clone()), &cfg).map_err(err)?;
        let t = taylor_jet(&e, &o, r).map_err(err)?;
        let pv = decide_poly_min(&t.poly, &o).map_err(err)?;
        ensure(v.status.is_min() == Some(r % 2 == 0), format!("r = {r}: {:?}", v.status))?;
        ensure(pv.status == v.status, format!("r = {r}: polynomial {:?} vs {:?}", pv.status, v.status))?;
        seen.push(format!("r{r}:{:?}", v.status));
    }
    Ok(seen.join(" "))
}

fn c4_quadratic_path() -> Check {
    let o = Point::origin(2);
    let s = SigmaSet::singleton(o.clone());
    let cfg = DecideConfig::default();
    let pd = Expression::parse("0.5*(x1^2 + 3*x2^2) + flat(x1)", 2).map_err(err)?;
    let v = decide_local_min(&pd, &o, 2, &s, &cfg).map_err(err)?;
    ensure(v.status == Status::CertifiedMin, format!("positive definite: {:?}", v.status))?;
    let ind = Expression::parse("0.5*(x1^2 - x2^2) + flat(x1)", 2).map_err(err)?;
    let v = decide_local_min(&ind, &o, 2, &s, &cfg).map_err(err)?;
    ensure(v.status == Status::CertifiedNotMin, format!("indefinite: {:?}", v.status))?;
    let w = v.evidence.witness_direction.clone().ok_or("no witness direction")?;
    ensure(w[0].abs() < 1e-9 && (w[1].abs() - 1.0).abs() < 1e-9, format!("witness direction {w:?}"))?;
    Ok(format!("certified_min; certified_not_min along {w:?}"))
}

fn c5_closing_i() -> Check {
    let o = Point::origin(2);
    let s = SigmaSet::affine(o.clone(), vec![vec![0.0, 1.0]]).map_err(err)?;
    let sampler = ShellSampler::with_defaults(o.clone());
    let mut out = Vec::new();
    for r in 2..=3u32 {
        let e = Expression::parse(&format!("x1^{r} + x1^{}*flat(x2)", r + 1), 2).map_err(err)?;
        let est = estimate_condition(&e, &o, &s, r, Condition::GradientIii, &sampler, None).map_err(err)?;
        for sh in &est.shells {
            let inf = sh.infimum.ok_or(format!("r = {r}: empty shell {}", sh.radius))?;
            ensure(inf >= 0.5 * r as f64, format!("r = {r}: shell {} infimum {inf}", sh.radius))?;
        }
        let v = decide_local_min(&e, &o, r, &s, &DecideConfig::default()).map_err(err)?;
        ensure(v.status.is_min() == Some(r % 2 == 0), format!("r = {r}: {:?}", v.status))?;
        out.push(format!("r{r}: c_hat {:.3} {:?}", est.c_hat.unwrap_or(f64::NAN), v.status));
    }
    Ok(out.join("; "))
}

fn c6_closing_ii() -> Check {
    let o = Point::origin(2);
    let s = SigmaSet::singleton(o.clone());
    let e = Expression::parse("x1^3 - 3*x1*x2^3 + flat(x2)", 2).map_err(err)?;
    let sampler = ShellSampler::with_defaults(o.clone());
    let est = estimate_condition(&e, &o, &s, 4, Condition::GradientIii, &sampler, None).map_err(err)?;
    let slope = est.fit.as_ref().ok_or("no fit")?.slope;
    ensure((slope - 3.5).abs() <= 0.3, format!("slope {slope}"))?;
    let v = decide_local_min(&e, &o, 4, &s, &DecideConfig::default()).map_err(err)?;
    ensure(v.status.is_min() == Some(false), format!("verdict {:?}", v.status))?;
    let near: Vec<f64> = v
        .evidence
        .witnesses
        .iter()
        .filter(|w| {
            let d = ((w.point[0] + w.radius).powi(2) + w.point[1].powi(2)).sqrt();
            d <= 0.05 * w.radius
        })
        .map(|w| w.radius)
        .collect();
    ensure(near.len() >= 3, format!("{} witnesses near (-rho, 0)", near.len()))?;
    Ok(format!("slope {slope:.3}, {:?}, witnesses near (-rho, 0) at {near:?}", v.status))
}

fn c7_dl1_battery() -> Check {
    let battery: [(&str, usize, u32); 10] = [
        ("x1^2 + x2^2", 2, 2),
        ("x1^4 + x2^4", 2, 4),
        ("x1^2 + x2^4", 2, 4),
        ("x1^2 + flat(x1)*x2^2", 2, 2),
        ("x1^2 + x2^4", 2, 2),
        ("x1^2 + x2^2 + x3^2", 3, 2),
        ("(x1^2 + x2^2)^2", 2, 4),
        ("x1^2 + x1*x2 + x2^2", 2, 2),
        ("1 - cos(x1) + x2^2", 2, 2),
        ("exp(x1^2 + x2^2) - 1 + x1^6", 2, 2),
    ];
    let mut summary = Vec::new();
    for (text, n, r) in battery {
        let o = Point::origin(n);
        let s = SigmaSet::singleton(o.clone());
        let e = Expression::parse(text, n).map_err(err)?;
        let sampler = ShellSampler::with_defaults(o.clone());
        let ii = estimate_condition(&e, &o, &s, r, Condition::GrowthIi, &sampler, None).map_err(err)?;
        let iii = estimate_condition(&e, &o, &s, r, Condition::GradientIii, &sampler, None).map_err(err)?;
        ensure(
            ii.holds_empirically == iii.holds_empirically,
            format!("{text}: (ii) {} vs (iii) {}", ii.holds_empirically, iii.holds_empirically),
        )?;
        let rows = pointwise_ratios(&e, &o, &s, r, &sampler, 1.0).map_err(err)?;
        for p in rows.iter().flatten() {
            ensure(p.mixed >= p.gradient, format!("{text}: mixed {} < gradient {}", p.mixed, p.gradient))?;
        }
        summary.push(if ii.holds_empirically { 'y' } else { 'n' });
    }
    Ok(format!("(ii)/(iii) agree on all 10 [{}], (iv) >= (iii) on every sample", summary.iter().collect::<String>()))
}

fn c8_bd31() -> Check {
    let o = Point::origin(1);
    let g = Expression::parse("flat(x1)", 1).map_err(err)?;
    let rep = flatness_check(&g, &SigmaSet::singleton(o.clone()), &o, 2, &[1e-1, 3e-2, 1e-2], 512, 42).map_err(err)?;
    let vals: Vec<(f64, f64)> = rep
        .bd31_ratios
        .iter()
        .map(|s| (s.value_ratio.unwrap_or(f64::NAN), s.gradient_ratio.unwrap_or(f64::NAN)))
        .collect();
    for (v, gr) in &vals {
        ensure(v.is_finite() && gr.is_finite(), format!("non-finite ratio in {vals:?}"))?;
    }
    for w in vals.windows(2) {
        ensure(w[1].0 <= w[0].0 && w[1].1 <= w[0].1, format!("ratios increase: {vals:?}"))?;
    }
    ensure(rep.in_class, "flat(x1) not recognised as flat")?;
    let shown: Vec<String> = vals.iter().map(|(a, b)| format!("({a:.2e}, {b:.2e})")).collect();
    Ok(format!("(value, gradient) ratios by shell {}", shown.join(" ")))
}

fn c9_perturbation() -> Check {
    let o = Point::origin(2);
    let s = SigmaSet::singleton(o.clone());
    let e = Expression::parse("x1^2 + x2^2", 2).map_err(err)?;
    let h = Expression::parse("0.4*(x1^2 + x2^2)*cos(x1)", 2).map_err(err)?;
    let sampler = ShellSampler::with_defaults(o.clone());
    let rep = check_perturbation_stability(&e, &h, &o, &s, 2, 0.4, &sampler, PerturbationMode::DistBound).map_err(err)?;
    let eps = admissible_epsilon(&rep.growth).map_err(err)?;
    ensure((eps - 0.5).abs() < 1e-9, format!("admissible epsilon {eps}"))?;
    ensure(rep.applicable && rep.h_bound_ok, format!("h bound: {rep:?}"))?;
    let m = rep.combined_min_ratio.ok_or("no combined ratio")?;
    ensure(m >= 0.1, format!("combined growth ratio {m}"))?;
    ensure(rep.combined_min_empirical, "combined growth check failed")?;
    Ok(format!("admissible 0.5, h_bound_ok, combined min ratio {m:.4} over {} samples", rep.samples))
}

fn c10_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let o = Point::origin(2);
    let (mut certified, mut disagreements) = (0, Vec::new());
    let mut mins = 0;
    for i in 0..20 {
        let p = oracle_instance(&mut rng, i);
        let v = decide_poly_min(&p, &o).map_err(err)?;
        let g = grid_oracle(&p);
        let agree = match v.status {
            Status::CertifiedMin => Some(g == GridVerdict::Min),
            Status::CertifiedNotMin => Some(g == GridVerdict::NotMin),
            _ => None,
        };
        if let Some(a) = agree {
            certified += 1;
            if !a {
                disagreements.push(format!("{p}: {:?} vs grid {g:?}", v.status));
            }
        }
        if v.status == Status::CertifiedMin {
            mins += 1;
        }
    }
    ensure(disagreements.is_empty(), disagreements.join("; "))?;
    ensure(certified > 0, "no certified verdicts to compare")?;
    Ok(format!("{certified}/20 certified verdicts ({mins} min), 0 disagreements"))
}

/// Degree ≤ 4 polynomials in two variables, cycling through leading orders.
fn oracle_instance(rng: &mut impl Rng, i: usize) -> loja_jet::SparsePolynomial {
    let c = |rng: &mut dyn rand::RngCore, s: f64| (rng.gen_range(-s..s) * 100.0f64).round() / 100.0;
    let mut terms = Vec::new();
    let start = match i % 4 {
        0 | 1 => {
            let sign = if i.is_multiple_of(4) { 1.0 } else { -1.0 };
            let a = rng.gen_range(0.5..2.0);
            let d = sign * rng.gen_range(0.5..2.0);
            let b = c(rng, 0.3);
            terms.extend([(vec![2, 0], a), (vec![1, 1], b), (vec![0, 2], d)]);
            3
        }
        2 => 3,
        _ => 4,
    };
    for deg in start..=4u32 {
        for k in 0..=deg {
            let s = if i % 4 == 3 { 1.0 } else { 0.3 };
            terms.push((vec![deg - k, k], c(rng, s)));
        }
    }
    loja_jet::SparsePolynomial::from_terms(2, terms).unwrap()
}

fn c11_certificate() -> Check {
    let t = loja_jet::SparsePolynomial::parse_text("x1^2 + x2^2", 2).map_err(err)?;
    let b = certified_gradient_lower_bound(&t, &Point::origin(2), 2, 1e-1, 0.5, 40).map_err(err)?;
    let c = b.c.ok_or("no certificate for x^2 + y^2")?;
    ensure((c - 2.0).abs() <= 1e-9, format!("x^2 + y^2: c = {c}"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let n = rng.gen_range(2..=3usize);
        let a = random_spd(&mut rng, n, 0.5, 2.0);
        let lmin = a.clone().symmetric_eigen().eigenvalues.min();
        let t = quadratic_poly(&a);
        let b = certified_gradient_lower_bound(&t, &Point::origin(n), 2, 1e-1, 0.5, 40).map_err(err)?;
        let c = b.c.ok_or(format!("no certificate for {t}"))?;
        ensure(c <= 2.0 * lmin + 1e-12, format!("unsound: c = {c} > 2 lambda_min = {}", 2.0 * lmin))?;
        worst = worst.max((c - 2.0 * lmin).abs());
    }
    ensure(worst <= 1e-6, format!("max |c - 2 lambda_min| = {worst:e}"))?;
    Ok(format!("x^2+y^2 c = {c}, random quadratics max |c - 2 lambda_min| = {worst:.1e}"))
}

fn main() {
    let criteria: [Criterion; 11] = [
        (1, "jet exactness", 5.0, c1_jet_exactness),
        (2, "differentiation soundness", 10.0, c2_differentiation),
        (3, "x^r + flat(x) parity", 30.0, c3_vd11_parity),
        (4, "quadratic path", 5.0, c4_quadratic_path),
        (5, "closing example (i)", 30.0, c5_closing_i),
        (6, "closing example (ii)", 30.0, c6_closing_ii),
        (7, "equivalence battery", 60.0, c7_dl1_battery),
        (8, "flat-class ratios", 5.0, c8_bd31),
        (9, "perturbation stability", 5.0, c9_perturbation),
        (10, "grid oracle agreement", 60.0, c10_oracle),
        (11, "certificate soundness", 30.0, c11_certificate),
    ];
    let mut failed = 0;
    for (id, name, limit, run) in criteria {
        let t0 = Instant::now();
        let res = run();
        let secs = t0.elapsed().as_secs_f64();
        let (ok, detail) = match res {
            Ok(d) if secs < limit => (true, d),
            Ok(d) => (false, format!("{d}; runtime over the {limit} s limit")),
            Err(e) => (false, e),
        };
        if !ok {
            failed += 1;
        }
        println!(
            "criterion {id:>2} {} {name} ({secs:.2} s, limit {limit} s): {detail}",
            if ok { "PASS" } else { "FAIL" }
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
    println!("all 11 criteria passed");
}
