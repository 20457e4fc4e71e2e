//! Maps that preserve a distance without being isometries, and sampled
//! audits of which distances they preserve.
//!
//! An audit draws pairs at exactly the tested distance (by the exponential
//! map, or exact addition for symbolic reals) and checks the image distance.
//! It can refute preservation with a witness but can only ever report
//! consistency, never membership.

mod example4;
mod hex;

pub use example4::{example4_demo, Example4Cell, Example4Report, ExtraCase};
pub use hex::{
    check_hex_diameter, color_of_tile, hex_center, hex_color, hex_tile, min_hex_diameter, simplex_vertex,
    DEFAULT_HEX_DIAMETER,
};

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::closure::{Quadratic, Scalar};
use crate::lens::split_seed;
use crate::manifold::{dot, GeometryError, Model, Point, Result};

/// Tolerance for floating-point image distances.
pub const AUDIT_TOL: f64 = 1e-9;
/// Violations kept in a report (the counts cover all of them).
pub const MAX_WITNESSES: usize = 8;
/// Default angular radius of the caps of the sign-flip region.
pub const DEFAULT_CAP_RADIUS: f64 = std::f64::consts::PI / 8.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExampleId {
    Ex1,
    Ex2,
    Ex3,
}

impl FromStr for ExampleId {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "ex1" => Ok(ExampleId::Ex1),
            "ex2" => Ok(ExampleId::Ex2),
            "ex3" => Ok(ExampleId::Ex3),
            other => Err(format!("unknown example {other:?} (expected ex1, ex2 or ex3)")),
        }
    }
}

impl fmt::Display for ExampleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExampleId::Ex1 => "ex1",
            ExampleId::Ex2 => "ex2",
            ExampleId::Ex3 => "ex3",
        })
    }
}

/// Closed spherical cap `{x : angle(x, center) <= radius}` on a unit sphere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cap {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl Cap {
    fn contains(&self, x: &[f64]) -> bool {
        dot(&self.center, x).clamp(-1.0, 1.0).acos() <= self.radius
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExampleParams {
    None,
    /// Caps of the sign-flip region; `None` takes the default pair.
    Caps(Option<Vec<Cap>>),
    HexDiameter(f64),
}

/// A self-map (or map between model spaces) under audit.
#[derive(Debug, Clone, PartialEq)]
pub enum CandidateMap {
    /// On `Q + Q sqrt2`: adds one to rationals and fixes the rest.
    Ex1,
    /// On the unit sphere: the antipodal map on a symmetric cap union `A`,
    /// the identity elsewhere.
    Ex2 { model: Model, caps: Vec<Cap> },
    /// From the plane to E^6: the hexagonal 7-coloring followed by the
    /// vertices of a unit simplex.
    Ex3 { diameter: f64 },
}

/// A value in the domain or codomain of a [`CandidateMap`].
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum MapValue {
    Symbolic(Scalar),
    Point(Point),
    Vector(Vec<f64>),
}

pub fn build_example(id: ExampleId, params: ExampleParams) -> Result<CandidateMap> {
    match (id, params) {
        (ExampleId::Ex1, ExampleParams::None) => Ok(CandidateMap::Ex1),
        (ExampleId::Ex2, ExampleParams::None) => build_ex2(None),
        (ExampleId::Ex2, ExampleParams::Caps(caps)) => build_ex2(caps),
        (ExampleId::Ex3, ExampleParams::None) => Ok(CandidateMap::Ex3 {
            diameter: DEFAULT_HEX_DIAMETER,
        }),
        (ExampleId::Ex3, ExampleParams::HexDiameter(d)) => {
            check_hex_diameter(d)?;
            Ok(CandidateMap::Ex3 { diameter: d })
        }
        (id, p) => Err(GeometryError::Precondition(format!("parameters {p:?} do not apply to {id}"))),
    }
}

fn build_ex2(caps: Option<Vec<Cap>>) -> Result<CandidateMap> {
    let model = Model::sphere(2, 1.0)?;
    let caps = caps.unwrap_or_else(|| {
        [1.0, -1.0]
            .iter()
            .map(|&s| Cap {
                center: vec![0.0, 0.0, s],
                radius: DEFAULT_CAP_RADIUS,
            })
            .collect()
    });
    let mut normalized = Vec::with_capacity(caps.len());
    for cap in caps {
        let n = dot(&cap.center, &cap.center).sqrt();
        if cap.center.len() != 3 || !(n > 0.0) || !(cap.radius > 0.0 && cap.radius < std::f64::consts::FRAC_PI_2) {
            return Err(GeometryError::Precondition(format!(
                "cap needs a nonzero center in R^3 and a radius in (0, pi/2): {cap:?}"
            )));
        }
        normalized.push(Cap {
            center: cap.center.iter().map(|c| c / n).collect(),
            radius: cap.radius,
        });
    }
    for cap in &normalized {
        let mirrored = normalized.iter().any(|o| {
            (o.radius - cap.radius).abs() <= 1e-12 && o.center.iter().zip(&cap.center).all(|(a, b)| (a + b).abs() <= 1e-12)
        });
        if !mirrored {
            return Err(GeometryError::Precondition(format!(
                "region is not antipodally symmetric: cap {cap:?} has no antipodal partner"
            )));
        }
    }
    Ok(CandidateMap::Ex2 { model, caps: normalized })
}

fn in_q_sqrt2(x: &Scalar) -> Option<&Quadratic> {
    x.as_exact().filter(|q| q.is_rational() || q.d() == 2)
}

impl CandidateMap {
    pub fn id(&self) -> ExampleId {
        match self {
            CandidateMap::Ex1 => ExampleId::Ex1,
            CandidateMap::Ex2 { .. } => ExampleId::Ex2,
            CandidateMap::Ex3 { .. } => ExampleId::Ex3,
        }
    }

    pub fn is_bijective(&self) -> bool {
        !matches!(self, CandidateMap::Ex3 { .. })
    }

    /// Ex1 on an exact element of `Q + Q sqrt2`.
    pub fn evaluate_symbolic(&self, x: &Scalar) -> Result<Scalar> {
        self.shift_symbolic(x, 1)
    }

    fn shift_symbolic(&self, x: &Scalar, by: i64) -> Result<Scalar> {
        if !matches!(self, CandidateMap::Ex1) {
            return Err(GeometryError::InvalidModel(format!("{} does not act on symbolic reals", self.id())));
        }
        let q = in_q_sqrt2(x)
            .ok_or_else(|| GeometryError::Precondition(format!("{x} is not an exact element of Q + Q sqrt2")))?;
        if q.is_rational() {
            x.add(&Scalar::integer(by)).map_err(|e| GeometryError::Internal(e.to_string()))
        } else {
            Ok(x.clone())
        }
    }

    pub fn evaluate(&self, p: &Point) -> Result<MapValue> {
        match self {
            CandidateMap::Ex1 => Err(GeometryError::InvalidModel("ex1 acts on symbolic reals".into())),
            CandidateMap::Ex2 { model, caps } => {
                model.check_point(p)?;
                let c = p.coords();
                if caps.iter().any(|cap| cap.contains(c)) {
                    let flipped: Vec<f64> = c.iter().map(|v| -v).collect();
                    Ok(MapValue::Point(model.point(flipped)?))
                } else {
                    Ok(MapValue::Point(p.clone()))
                }
            }
            CandidateMap::Ex3 { diameter } => {
                let c = p.coords();
                if c.len() != 2 || !matches!(p.model(), Model::Euclidean { dim: 2 }) {
                    return Err(GeometryError::ModelMismatch {
                        expected: "e2".into(),
                        found: p.model().id(),
                    });
                }
                Ok(MapValue::Vector(simplex_vertex(hex_color(c[0], c[1], *diameter)?)))
            }
        }
    }

    /// Colors hit by the map on `points`; for Ex3 at most seven.
    pub fn image_colors(&self, points: &[Point]) -> Result<BTreeSet<u8>> {
        let CandidateMap::Ex3 { diameter } = self else {
            return Err(GeometryError::InvalidModel("only ex3 has a finite image".into()));
        };
        points
            .iter()
            .map(|p| hex_color(p.coords()[0], p.coords()[1], *diameter))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    /// No sampled pair contradicts preservation. Not a proof.
    Consistent,
    Refuted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// `d(x, y) = r` but `d(f x, f y) != r`.
    Forward,
    /// `d(u, v) = r` but `d(f^-1 u, f^-1 v) != r`.
    Converse,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub direction: Direction,
    pub x: MapValue,
    pub y: MapValue,
    pub image_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditReport {
    pub map: ExampleId,
    pub r: String,
    pub pairs_tested: usize,
    pub preserved_forward: usize,
    /// Absent for maps that are not bijections.
    pub preserved_converse: Option<usize>,
    pub forward: Verdict,
    pub converse: Option<Verdict>,
    pub violations: Vec<Violation>,
    pub seed: u64,
}

impl AuditReport {
    fn new(map: &CandidateMap, r: &Scalar, n: usize, seed: u64) -> Self {
        AuditReport {
            map: map.id(),
            r: r.to_string(),
            pairs_tested: n,
            preserved_forward: 0,
            preserved_converse: map.is_bijective().then_some(0),
            forward: Verdict::Consistent,
            converse: map.is_bijective().then_some(Verdict::Consistent),
            violations: Vec::new(),
            seed,
        }
    }

    fn record(&mut self, direction: Direction, ok: bool, witness: impl FnOnce() -> Violation) {
        if ok {
            match direction {
                Direction::Forward => self.preserved_forward += 1,
                Direction::Converse => *self.preserved_converse.as_mut().expect("bijective map") += 1,
            }
            return;
        }
        match direction {
            Direction::Forward => self.forward = Verdict::Refuted,
            Direction::Converse => self.converse = Some(Verdict::Refuted),
        }
        if self.violations.len() < MAX_WITNESSES {
            self.violations.push(witness());
        }
    }

    /// Both directions consistent on every sample.
    pub fn consistent(&self) -> bool {
        self.forward == Verdict::Consistent && self.converse != Some(Verdict::Refuted)
    }

    /// Re-evaluates every recorded violation against `map`.
    pub fn recheck(&self, map: &CandidateMap, r: &Scalar) -> Result<bool> {
        for v in &self.violations {
            let still = match (&v.x, &v.y) {
                (MapValue::Symbolic(x), MapValue::Symbolic(y)) => {
                    let shift = if v.direction == Direction::Forward { 1 } else { -1 };
                    let d = symbolic_distance(&map.shift_symbolic(x, shift)?, &map.shift_symbolic(y, shift)?)?;
                    symbolic_distance(x, y)? == *r && d != *r
                }
                (MapValue::Point(x), MapValue::Point(y)) => {
                    let rv = r.approx();
                    // Ex2 is an involution, so both directions replay with f.
                    let d = image_distance(&map.evaluate(x)?, &map.evaluate(y)?)?;
                    let model = x.model();
                    (model.distance(x, y)? - rv).abs() <= AUDIT_TOL && (d - rv).abs() > AUDIT_TOL
                }
                _ => false,
            };
            if !still {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

fn symbolic_distance(x: &Scalar, y: &Scalar) -> Result<Scalar> {
    let d = y.sub(x).map_err(|e| GeometryError::Internal(e.to_string()))?;
    match d.sign() {
        Ok(std::cmp::Ordering::Less) => Ok(d.neg()),
        Ok(_) => Ok(d),
        Err(e) => Err(GeometryError::Internal(e.to_string())),
    }
}

fn image_distance(a: &MapValue, b: &MapValue) -> Result<f64> {
    match (a, b) {
        (MapValue::Point(p), MapValue::Point(q)) => p.model().distance(p, q),
        (MapValue::Vector(u), MapValue::Vector(v)) => Ok(u.iter().zip(v).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()),
        _ => Err(GeometryError::Internal("mismatched image values".into())),
    }
}

/// Random element of `Q + Q sqrt2`, rational half of the time.
fn random_symbolic(rng: &mut ChaCha8Rng) -> Scalar {
    let a = (rng.random_range(-200..=200), rng.random_range(1..=24));
    if rng.random_bool(0.5) {
        Scalar::ratio(a.0, a.1)
    } else {
        let mut bn = 0;
        while bn == 0 {
            bn = rng.random_range(-12..=12);
        }
        Scalar::quadratic(a, (bn, rng.random_range(1..=12)), 2)
    }
}

/// Samples `n` pairs at distance `r` in each direction the map allows.
pub fn audit_distance(map: &CandidateMap, r: &Scalar, n: usize, seed: u64) -> Result<AuditReport> {
    match r.sign() {
        Ok(std::cmp::Ordering::Greater) => {}
        _ => return Err(GeometryError::Precondition(format!("distance {r} must be certainly positive"))),
    }
    let mut report = AuditReport::new(map, r, n, seed);
    match map {
        CandidateMap::Ex1 => {
            if in_q_sqrt2(r).is_none() {
                return Err(GeometryError::Precondition(format!(
                    "ex1 audits need r exact in Q + Q sqrt2, got {r}"
                )));
            }
            let add = |x: &Scalar| x.add(r).map_err(|e| GeometryError::Internal(e.to_string()));
            for i in 0..n {
                let mut rng = ChaCha8Rng::seed_from_u64(split_seed(seed, i as u64));
                let x = random_symbolic(&mut rng);
                let y = add(&x)?;
                let d = symbolic_distance(&map.shift_symbolic(&x, 1)?, &map.shift_symbolic(&y, 1)?)?;
                report.record(Direction::Forward, d == *r, || Violation {
                    direction: Direction::Forward,
                    x: MapValue::Symbolic(x.clone()),
                    y: MapValue::Symbolic(y.clone()),
                    image_distance: d.approx(),
                });
                let u = random_symbolic(&mut rng);
                let v = add(&u)?;
                let d = symbolic_distance(&map.shift_symbolic(&u, -1)?, &map.shift_symbolic(&v, -1)?)?;
                report.record(Direction::Converse, d == *r, || Violation {
                    direction: Direction::Converse,
                    x: MapValue::Symbolic(u.clone()),
                    y: MapValue::Symbolic(v.clone()),
                    image_distance: d.approx(),
                });
            }
        }
        CandidateMap::Ex2 { .. } | CandidateMap::Ex3 { .. } => {
            let model = match map {
                CandidateMap::Ex2 { model, .. } => *model,
                _ => Model::euclidean(2)?,
            };
            let rv = r.approx();
            if let Some(inj) = model.inj().finite() {
                if rv > inj {
                    return Err(GeometryError::Precondition(format!("distance {r} is not realized in {}", model.id())));
                }
            }
            let directions: &[Direction] = if map.is_bijective() {
                &[Direction::Forward, Direction::Converse]
            } else {
                &[Direction::Forward]
            };
            for i in 0..n {
                let mut rng = ChaCha8Rng::seed_from_u64(split_seed(seed, i as u64));
                for &dir in directions {
                    let x = match map {
                        CandidateMap::Ex3 { .. } => {
                            model.point(vec![rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0)])?
                        }
                        _ => model.random_point(&mut rng),
                    };
                    let v = model.random_unit_tangent(&x, &mut rng);
                    let y = model.exp_map(&x, &v, rv)?;
                    // The only bijection here is an involution: f^-1 = f.
                    let d = image_distance(&map.evaluate(&x)?, &map.evaluate(&y)?)?;
                    report.record(dir, (d - rv).abs() <= AUDIT_TOL, || Violation {
                        direction: dir,
                        x: MapValue::Point(x.clone()),
                        y: MapValue::Point(y.clone()),
                        image_distance: d,
                    });
                }
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn s(v: &str) -> Scalar {
        v.parse().unwrap()
    }

    #[test]
    fn ex1_examples() {
        let f = build_example(ExampleId::Ex1, ExampleParams::None).unwrap();
        assert_eq!(f.evaluate_symbolic(&s("1/2")).unwrap(), s("3/2"));
        assert_eq!(f.evaluate_symbolic(&s("sqrt2")).unwrap(), s("sqrt2"));
        assert!(f.evaluate_symbolic(&s("sqrt3")).is_err());
    }

    #[test]
    fn ex1_audits() {
        let f = build_example(ExampleId::Ex1, ExampleParams::None).unwrap();
        for r in ["1/2", "1", "7/3", "1/1000"] {
            let rep = audit_distance(&f, &s(r), 2000, 1).unwrap();
            assert!(rep.consistent(), "{r}");
            assert_eq!(rep.preserved_forward, 2000);
            assert_eq!(rep.preserved_converse, Some(2000));
        }
        let r = s("sqrt2");
        let rep = audit_distance(&f, &r, 200, 1).unwrap();
        assert_eq!(rep.forward, Verdict::Refuted);
        assert!(!rep.violations.is_empty());
        assert!(rep.recheck(&f, &r).unwrap());
    }

    #[test]
    fn ex1_pair_zero_sqrt2() {
        let f = CandidateMap::Ex1;
        let (x, y) = (s("0"), s("sqrt2"));
        let d = symbolic_distance(&f.evaluate_symbolic(&x).unwrap(), &f.evaluate_symbolic(&y).unwrap()).unwrap();
        assert_eq!(d, s("sqrt2-1"));
    }

    #[test]
    fn ex2_flips_inside_caps() {
        let f = build_example(ExampleId::Ex2, ExampleParams::None).unwrap();
        let CandidateMap::Ex2 { model, .. } = &f else { panic!() };
        let p = model.point(vec![0.1, 0.0, 1.0]).unwrap();
        let MapValue::Point(q) = f.evaluate(&p).unwrap() else { panic!() };
        assert!(q.coords().iter().zip(p.coords()).all(|(a, b)| (a + b).abs() < 1e-15));
        let e = model.point(vec![1.0, 0.0, 0.0]).unwrap();
        assert_eq!(f.evaluate(&e).unwrap(), MapValue::Point(e.clone()));
    }

    #[test]
    fn ex2_rejects_asymmetric_region() {
        let caps = vec![Cap {
            center: vec![0.0, 0.0, 1.0],
            radius: 0.3,
        }];
        assert!(build_example(ExampleId::Ex2, ExampleParams::Caps(Some(caps))).is_err());
    }

    #[test]
    fn ex2_audits() {
        let f = build_example(ExampleId::Ex2, ExampleParams::None).unwrap();
        for r in [PI / 2.0, PI] {
            let r = Scalar::interval(r, r).unwrap();
            let rep = audit_distance(&f, &r, 3000, 4).unwrap();
            assert!(rep.consistent(), "{rep:?}");
        }
        let r = s("0.7");
        let rep = audit_distance(&f, &r, 3000, 4).unwrap();
        assert_eq!(rep.forward, Verdict::Refuted);
        assert_eq!(rep.converse, Some(Verdict::Refuted));
        assert!(rep.recheck(&f, &r).unwrap());
    }

    #[test]
    fn ex3_audit_and_image() {
        let f = build_example(ExampleId::Ex3, ExampleParams::None).unwrap();
        let rep = audit_distance(&f, &s("1"), 20_000, 9).unwrap();
        assert!(rep.consistent());
        assert_eq!(rep.converse, None);
        let m = Model::euclidean(2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pts: Vec<Point> = (0..2000).map(|_| m.random_point(&mut rng)).collect();
        let colors = f.image_colors(&pts).unwrap();
        assert!(colors.len() <= 7 && colors.iter().all(|c| (1..=7).contains(c)));
        // Half a unit is not preserved: nearby points share a tile.
        let rep = audit_distance(&f, &s("1/2"), 500, 9).unwrap();
        assert_eq!(rep.forward, Verdict::Refuted);
        assert!(rep.recheck(&f, &s("1/2")).unwrap());
    }

    #[test]
    fn audit_is_deterministic() {
        let f = build_example(ExampleId::Ex2, ExampleParams::None).unwrap();
        let a = audit_distance(&f, &s("0.4"), 500, 7).unwrap();
        let b = audit_distance(&f, &s("0.4"), 500, 7).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }
}
