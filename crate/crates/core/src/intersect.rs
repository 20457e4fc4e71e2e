//! Intersections of two metric spheres `S^{x₁}_{r₁} ∩ S^{x₂}_{r₂}`.
//!
//! Below the convexity radius the intersection is nonempty exactly when
//! `|r₁ − r₂| ≤ d(x₁, x₂) ≤ r₁ + r₂`, and it is a single point exactly at the
//! two tangency configurations. This module exposes both the inequality test
//! and constructive witnesses: the tangency points on the connecting geodesic,
//! and an intermediate-value search along a path on one of the spheres.

use serde::Serialize;

use crate::manifold::{Boost, Extended, GeometryError, Model, Point, Result, SphereSpec};

/// Tolerance for the distance equalities that separate tangency from
/// transversal intersection.
pub const DISTANCE_EQ_TOL: f64 = 1e-9;

/// Default residual tolerance for witnesses.
pub const WITNESS_TOL: f64 = 1e-7;

/// Bisection cap for the intermediate-value search.
pub const MAX_BISECTION_STEPS: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "class", content = "witness")]
pub enum IntersectionClass {
    Empty,
    Singleton(Point),
    Continuum(Point),
}

impl IntersectionClass {
    pub fn witness(&self) -> Option<&Point> {
        match self {
            IntersectionClass::Empty => None,
            IntersectionClass::Singleton(p) | IntersectionClass::Continuum(p) => Some(p),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            IntersectionClass::Empty => "empty",
            IntersectionClass::Singleton(_) => "singleton",
            IntersectionClass::Continuum(_) => "continuum",
        }
    }
}

fn check_positive(r1: f64, r2: f64) -> Result<()> {
    for r in [r1, r2] {
        if !(r.is_finite() && r > 0.0) {
            return Err(GeometryError::Precondition(format!(
                "radii must be positive and finite, got {r}"
            )));
        }
    }
    Ok(())
}

fn check_below_conv(m: &Model, r1: f64, r2: f64) -> Result<()> {
    check_positive(r1, r2)?;
    let conv = m.conv();
    for r in [r1, r2] {
        if !conv.exceeds(r) {
            return Err(GeometryError::Precondition(format!(
                "radius {r} is not below the convexity radius {conv} of {m}; \
                 the inequalities no longer decide nonemptiness there \
                 (antipodal centers on the unit 2-sphere with r1 in (pi/2, pi), \
                 r2 in (pi - r1, r1) satisfy them with an empty intersection)"
            )));
        }
    }
    Ok(())
}

fn inequalities_hold(d: f64, r1: f64, r2: f64) -> bool {
    (r1 - r2).abs() <= d && d <= r1 + r2
}

/// `|r₁ − r₂| ≤ d(x₁, x₂) ≤ r₁ + r₂`, for radii in `(0, conv)`.
pub fn intersect_predicate(m: &Model, x1: &Point, r1: f64, x2: &Point, r2: f64) -> Result<bool> {
    check_below_conv(m, r1, r2)?;
    let d = m.distance(x1, x2)?;
    Ok(inequalities_hold(d, r1, r2))
}

/// Which of the two sufficient hypotheses for nonemptiness hold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum WitnessHypothesis {
    /// Both radii in `(0, conv)`.
    BelowConvexity,
    /// `0 < r₂ ≤ min(r₁, inj)` and `r₁ + 2r₂ ≤ inj`, after ordering `r₂ ≤ r₁`.
    BelowInjectivity,
}

pub fn witness_hypothesis(m: &Model, r1: f64, r2: f64) -> Option<WitnessHypothesis> {
    if r1 <= 0.0 || r2 <= 0.0 {
        return None;
    }
    if m.conv().exceeds(r1) && m.conv().exceeds(r2) {
        return Some(WitnessHypothesis::BelowConvexity);
    }
    let (big, small) = if r1 >= r2 { (r1, r2) } else { (r2, r1) };
    let within = |v: f64| match m.inj() {
        Extended::Infinite => true,
        Extended::Finite(inj) => v <= inj,
    };
    if within(small) && within(big + 2.0 * small) {
        return Some(WitnessHypothesis::BelowInjectivity);
    }
    None
}

/// Finds `z` with `|d(x₁,z) − r₁| ≤ tol` and `|d(x₂,z) − r₂| ≤ tol`.
///
/// With `r₂ ≤ r₁` (the labels are swapped otherwise) and `γ` the geodesic
/// from `x₁` through `x₂`, the points `a = γ(d − r₂)` and `b = γ(d + r₂)`
/// lie on `S^{x₂}_{r₂}`; `t ↦ d(x₁, φ(t)) − r₁` is bisected along a path `φ`
/// on that sphere from `a` to `b`.
///
/// Returns `None` when the inequalities fail or the construction finds no
/// sign change. Under either [`WitnessHypothesis`] the latter cannot happen
/// when the inequalities hold, so `None` means the intersection is empty;
/// outside them `None` only reports that the construction failed. Radii must
/// stay below the injectivity radius so the sphere path exists.
pub fn intersect_witness(
    m: &Model,
    x1: &Point,
    r1: f64,
    x2: &Point,
    r2: f64,
    tol: f64,
) -> Result<Option<Point>> {
    check_positive(r1, r2)?;
    if !(tol > 0.0) {
        return Err(GeometryError::Precondition(format!("tolerance must be positive, got {tol}")));
    }
    if let Extended::Finite(inj) = m.inj() {
        if r1.min(r2) >= inj {
            return Err(GeometryError::CutLocus {
                distance: r1.min(r2),
                inj,
            });
        }
    }
    if r2 > r1 {
        return intersect_witness(m, x2, r2, x1, r1, tol);
    }
    let d = m.distance(x1, x2)?;
    if !inequalities_hold(d, r1, r2) {
        return Ok(None);
    }
    let accept = |z: &Point| -> Result<bool> {
        Ok((m.distance(x1, z)? - r1).abs() <= tol && (m.distance(x2, z)? - r2).abs() <= tol)
    };

    // Far from the vertex the hyperboloid loses accuracy: solve in the frame
    // where the path sphere is centered at the vertex.
    let recenter = Boost::to(x2).filter(|_| x2.coords()[0] > 2.0 * m.hyperbolic_scale());
    if let Some(boost) = recenter {
        let (y1, y2) = (boost.inverse(x1), boost.inverse(x2));
        if let Some(z) = intersect_witness(m, &y1, r1, &y2, r2, tol)? {
            let z = boost.forward(&z);
            if accept(&z)? {
                return Ok(Some(z));
            }
        }
    }

    // direction from x2 back to x1; a and b are built from x2, the center
    // of the path sphere, which is the better conditioned end
    let dir = m.minimizing_direction(x2, x1)?;
    if d == 0.0 {
        // concentric with equal radii: the spheres coincide
        let z = m.exp_unit(x2, &dir, r2);
        return Ok(accept(&z)?.then_some(z));
    }

    let back: Vec<f64> = dir.iter().map(|c| -c).collect();
    let a = m.exp_unit(x2, &dir, r2);
    let b = m.exp_unit(x2, &back, r2);
    if accept(&a)? {
        return Ok(Some(a));
    }
    if accept(&b)? {
        return Ok(Some(b));
    }
    let fa = m.distance(x1, &a)? - r1;
    let fb = m.distance(x1, &b)? - r1;
    if fa.signum() == fb.signum() {
        return Ok(None);
    }

    let spec = SphereSpec::new(x2.clone(), r2)?;
    let path = m.sphere_path(&spec, &a, &b)?;
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    let lo_negative = fa < 0.0;
    for _ in 0..MAX_BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        let z = path.at(mid);
        let f = m.distance(x1, &z)? - r1;
        if f.abs() <= tol && accept(&z)? {
            return Ok(Some(z));
        }
        if (f < 0.0) == lo_negative {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(GeometryError::Convergence {
        lo,
        hi,
        iterations: MAX_BISECTION_STEPS,
    })
}

/// Empty / single point / continuum, with a witness for the nonempty cases.
///
/// Tangency (`d = r₁ + r₂`, or `d = |r₁ − r₂| > 0`) is tested first with
/// tolerance [`DISTANCE_EQ_TOL`]; the witness is then the point at distance
/// `max(r₁, r₂)` along the geodesic from the larger sphere's center through
/// the other center.
pub fn classify_intersection(
    m: &Model,
    x1: &Point,
    r1: f64,
    x2: &Point,
    r2: f64,
) -> Result<IntersectionClass> {
    check_below_conv(m, r1, r2)?;
    let d = m.distance(x1, x2)?;
    if (d - (r1 + r2)).abs() <= DISTANCE_EQ_TOL {
        let dir = m.minimizing_direction(x1, x2)?;
        return Ok(IntersectionClass::Singleton(m.exp_unit(x1, &dir, r1)));
    }
    let gap = (r1 - r2).abs();
    if gap > DISTANCE_EQ_TOL && (d - gap).abs() <= DISTANCE_EQ_TOL {
        let (from, toward, r) = if r1 > r2 { (x1, x2, r1) } else { (x2, x1, r2) };
        let dir = m.minimizing_direction(from, toward)?;
        return Ok(IntersectionClass::Singleton(m.exp_unit(from, &dir, r)));
    }
    if !inequalities_hold(d, r1, r2) {
        return Ok(IntersectionClass::Empty);
    }
    match intersect_witness(m, x1, r1, x2, r2, WITNESS_TOL)? {
        Some(z) => Ok(IntersectionClass::Continuum(z)),
        None => Err(GeometryError::Internal(format!(
            "no witness found below the convexity radius (d = {d}, r1 = {r1}, r2 = {r2})"
        ))),
    }
}
