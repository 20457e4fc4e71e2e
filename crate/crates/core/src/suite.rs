//! Per-model invariant checks, aggregated into a pass/fail table.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::closure::{derive_to_epsilon, verify_certificate, ClosureContext, DeriveOptions, Regularity, Scalar, Strategy};
use crate::intersect::{intersect_predicate, intersect_witness, WITNESS_TOL};
use crate::lens::{lens_profile, rbar};
use crate::manifold::{Extended, Model, Result};

#[derive(Debug, Clone, Serialize)]
pub struct SuiteResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub millis: u64,
}

fn check(cond: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

type Check = std::result::Result<String, String>;

fn distance_axioms(m: &Model, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..2000 {
        let (x, y, z) = (m.random_point(&mut rng), m.random_point(&mut rng), m.random_point(&mut rng));
        let (dxy, dyx) = (m.distance(&x, &y).map_err(err)?, m.distance(&y, &x).map_err(err)?);
        check((dxy - dyx).abs() <= 1e-12, || format!("asymmetric: {dxy} vs {dyx}"))?;
        check(m.distance(&x, &x).map_err(err)? <= 1e-12, || "d(x, x) > 0".into())?;
        let slack = m.distance(&x, &y).map_err(err)? + m.distance(&y, &z).map_err(err)? - m.distance(&x, &z).map_err(err)?;
        worst = worst.min(slack);
    }
    check(worst >= -1e-10, || format!("triangle inequality off by {worst:e}"))?;
    Ok("2000 triples".into())
}

fn exp_log(m: &Model, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let reach = match m.inj() {
        Extended::Finite(i) => 0.95 * i,
        Extended::Infinite => 3.0,
    };
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let x = m.random_point(&mut rng);
        let v = m.random_unit_tangent(&x, &mut rng);
        let t = rng.random_range(0.01..1.0) * reach;
        let y = m.exp_map(&x, &v, t).map_err(err)?;
        let d = m.distance(&x, &y).map_err(err)?;
        worst = worst.max((d - t).abs());
        let w = m.log_map(&x, &y).map_err(err)?;
        let back = m.exp_map(&x, &w, d).map_err(err)?;
        worst = worst.max(m.distance(&y, &back).map_err(err)?);
    }
    check(worst <= 1e-9, || format!("residual {worst:e}"))?;
    Ok(format!("max residual {worst:.1e}"))
}

fn radius_constants(m: &Model) -> Check {
    match (m.conv(), m.inj()) {
        (Extended::Finite(c), Extended::Finite(i)) => {
            check(c <= i / 2.0, || format!("conv {c} > inj/2"))?;
            Ok(format!("conv {c}, inj {i}"))
        }
        (Extended::Infinite, Extended::Infinite) => Ok("conv = inj = inf".into()),
        (c, i) => Err(format!("conv {c}, inj {i}")),
    }
}

fn intersections(m: &Model, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cap = m.conv().finite().unwrap_or(3.0);
    let mut nonempty = 0;
    for _ in 0..300 {
        let (r1, r2) = (rng.random_range(1e-3..1.0) * cap, rng.random_range(1e-3..1.0) * cap);
        let x1 = m.random_point(&mut rng);
        let v = m.random_unit_tangent(&x1, &mut rng);
        let x2 = m.exp_map(&x1, &v, rng.random_range(0.0..1.3) * (r1 + r2)).map_err(err)?;
        let p = intersect_predicate(m, &x1, r1, &x2, r2).map_err(err)?;
        let w = intersect_witness(m, &x1, r1, &x2, r2, WITNESS_TOL).map_err(err)?;
        check(p == w.is_some(), || format!("disagreement at r1 = {r1}, r2 = {r2}"))?;
        nonempty += p as usize;
    }
    Ok(format!("300 configurations, {nonempty} nonempty"))
}

fn lens_law(m: &Model, seed: u64) -> Check {
    let r = m.conv().finite().map_or(1.0, |c| 0.6 * c);
    let p = lens_profile(m, r, 12, 128, seed).map_err(err)?;
    let v = p.violations();
    check(v.is_empty(), || v.join("; "))?;
    Ok(format!("r = {r:.4}, 14 samples"))
}

fn rbar_bracket(m: &Model, seed: u64) -> Check {
    if !m.is_two_point_homogeneous() {
        return Ok("skipped: not two-point homogeneous".into());
    }
    let r = m.conv().finite().map_or(1.0, |c| 0.5 * c);
    let res = rbar(m, r, 1e-5 * r, 128, seed).map_err(err)?;
    check(res.lo > r && res.hi < 2.0 * r, || format!("[{}, {}] not inside (r, 2r)", res.lo, res.hi))?;
    if matches!(m, Model::Euclidean { .. }) {
        check(res.contains(3f64.sqrt() * r), || "Euclidean bracket misses sqrt3 r".into())?;
    }
    Ok(format!("r = {r:.4}: [{:.6}, {:.6}]", res.lo, res.hi))
}

fn closure_certificate(m: &Model) -> Check {
    let ctx = ClosureContext::for_model(m, Regularity::Surjective);
    let seeds = [Scalar::sqrt(2).mul(&Scalar::ratio(1, 8)).map_err(err)?, Scalar::ratio(1, 8)];
    let cert = derive_to_epsilon(&seeds, &ctx, &Scalar::ratio(1, 1_000_000), DeriveOptions::new(Strategy::A)).map_err(err)?;
    let report = verify_certificate(&cert, &ctx);
    check(report.valid, || report.failures.join("; "))?;
    Ok(format!("{} steps", cert.steps.len()))
}

/// Runs every suite for `m`; failures are recorded, not raised.
pub fn verify_suite(m: &Model, seed: u64) -> Result<Vec<SuiteResult>> {
    let suites: Vec<(&str, Box<dyn Fn() -> Check + '_>)> = vec![
        ("distance axioms", Box::new(|| distance_axioms(m, seed))),
        ("exp/log round trip", Box::new(|| exp_log(m, seed))),
        ("radius constants", Box::new(|| radius_constants(m))),
        ("sphere intersections", Box::new(|| intersections(m, seed))),
        ("lens profile law", Box::new(|| lens_law(m, seed))),
        ("r-bar bracket", Box::new(|| rbar_bracket(m, seed))),
        ("closure certificate", Box::new(|| closure_certificate(m))),
    ];
    Ok(suites
        .into_iter()
        .map(|(name, run)| {
            let start = Instant::now();
            let out = run();
            SuiteResult {
                name: name.to_string(),
                passed: out.is_ok(),
                detail: out.unwrap_or_else(|e| e),
                millis: start.elapsed().as_millis() as u64,
            }
        })
        .collect())
}
