//! Closed-form model spaces: Euclidean space, round spheres, hyperbolic space
//! (hyperboloid model) and the unit cubic flat torus.
//!
//! Every model has an explicit metric, exponential and logarithm maps, and
//! exact convexity / injectivity radii. Points carry their model so that
//! mixing points from different spaces is caught at the call site.
//!
//! Coordinate conventions:
//!
//! * `Euclidean(n)`: `n` Cartesian coordinates.
//! * `Sphere(n, R)`: `n + 1` ambient coordinates with `|x| = R`.
//! * `Hyperbolic(n, κ)`: `n + 1` hyperboloid coordinates with
//!   `⟨x, x⟩_L = -1/|κ|` and `x₀ > 0`.
//! * `FlatTorus(n)`: `n` coordinates in `[0, 1)`.
//!
//! Tangent vectors use the same ambient coordinates as their base point.

use std::cmp::Ordering;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Tolerance for coordinate constraints (sphere norm, hyperboloid norm, tangency).
pub const CONSTRAINT_TOL: f64 = 1e-12;

/// Tolerance used when testing whether a distance has reached the cut locus.
const CUT_LOCUS_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("model mismatch: expected {expected}, found {found}")]
    ModelMismatch { expected: String, found: String },
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("invalid point for {model}: {reason}")]
    InvalidPoint { model: String, reason: String },
    #[error("invalid tangent vector: {0}")]
    InvalidTangent(String),
    #[error("distance {distance} is at or beyond the injectivity radius {inj}")]
    CutLocus { distance: f64, inj: f64 },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("no convergence after {iterations} iterations; bracket [{lo}, {hi}]")]
    Convergence { lo: f64, hi: f64, iterations: usize },
    #[error("diagnostics: {0}")]
    Diagnostics(String),
    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, GeometryError>;

/// A length that may be infinite. Used for convexity and injectivity radii.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Extended {
    Finite(f64),
    Infinite,
}

impl Extended {
    pub fn is_finite(self) -> bool {
        matches!(self, Extended::Finite(_))
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            Extended::Finite(v) => Some(v),
            Extended::Infinite => None,
        }
    }

    /// `self * factor` for a positive factor.
    pub fn scale(self, factor: f64) -> Extended {
        match self {
            Extended::Finite(v) => Extended::Finite(v * factor),
            Extended::Infinite => Extended::Infinite,
        }
    }

    /// `value < self`.
    pub fn exceeds(self, value: f64) -> bool {
        match self {
            Extended::Finite(v) => value < v,
            Extended::Infinite => value.is_finite(),
        }
    }
}

impl PartialOrd for Extended {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        match (self, other) {
            (Extended::Infinite, Extended::Infinite) => Some(Ordering::Equal),
            (Extended::Infinite, Extended::Finite(_)) => Some(Ordering::Greater),
            (Extended::Finite(_), Extended::Infinite) => Some(Ordering::Less),
            (Extended::Finite(a), Extended::Finite(b)) => a.partial_cmp(b),
        }
    }
}

impl fmt::Display for Extended {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Extended::Finite(v) => write!(f, "{v}"),
            Extended::Infinite => f.write_str("inf"),
        }
    }
}

impl Serialize for Extended {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Extended::Finite(v) => s.serialize_f64(*v),
            Extended::Infinite => s.serialize_str("inf"),
        }
    }
}

/// A model space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Model {
    Euclidean { dim: usize },
    Sphere { dim: usize, radius: f64 },
    Hyperbolic { dim: usize, curvature: f64 },
    FlatTorus { dim: usize },
}

impl Model {
    pub fn euclidean(dim: usize) -> Result<Self> {
        check_dim(dim)?;
        Ok(Model::Euclidean { dim })
    }

    pub fn sphere(dim: usize, radius: f64) -> Result<Self> {
        check_dim(dim)?;
        if !(radius.is_finite() && radius > 0.0) {
            return Err(GeometryError::InvalidModel(format!(
                "sphere radius must be positive, got {radius}"
            )));
        }
        Ok(Model::Sphere { dim, radius })
    }

    pub fn hyperbolic(dim: usize, curvature: f64) -> Result<Self> {
        check_dim(dim)?;
        if !(curvature.is_finite() && curvature < 0.0) {
            return Err(GeometryError::InvalidModel(format!(
                "hyperbolic curvature must be negative, got {curvature}"
            )));
        }
        Ok(Model::Hyperbolic { dim, curvature })
    }

    pub fn flat_torus(dim: usize) -> Result<Self> {
        check_dim(dim)?;
        Ok(Model::FlatTorus { dim })
    }

    pub fn dim(&self) -> usize {
        match *self {
            Model::Euclidean { dim }
            | Model::Sphere { dim, .. }
            | Model::Hyperbolic { dim, .. }
            | Model::FlatTorus { dim } => dim,
        }
    }

    /// Number of coordinates used to store a point.
    pub fn ambient_dim(&self) -> usize {
        match self {
            Model::Euclidean { dim } | Model::FlatTorus { dim } => *dim,
            Model::Sphere { dim, .. } | Model::Hyperbolic { dim, .. } => dim + 1,
        }
    }

    /// Short id: `e2`, `s2`, `h3`, `t2`, with `:r=` / `:k=` suffixes for
    /// non-unit sphere radius or curvature.
    pub fn id(&self) -> String {
        match *self {
            Model::Euclidean { dim } => format!("e{dim}"),
            Model::FlatTorus { dim } => format!("t{dim}"),
            Model::Sphere { dim, radius } if radius == 1.0 => format!("s{dim}"),
            Model::Sphere { dim, radius } => format!("s{dim}:r={radius}"),
            Model::Hyperbolic { dim, curvature } if curvature == -1.0 => format!("h{dim}"),
            Model::Hyperbolic { dim, curvature } => format!("h{dim}:k={curvature}"),
        }
    }

    /// Injectivity radius (the same at every point for these models).
    pub fn inj(&self) -> Extended {
        match *self {
            Model::Euclidean { .. } | Model::Hyperbolic { .. } => Extended::Infinite,
            Model::Sphere { radius, .. } => Extended::Finite(PI * radius),
            Model::FlatTorus { .. } => Extended::Finite(0.5),
        }
    }

    /// Convexity radius.
    pub fn conv(&self) -> Extended {
        match *self {
            Model::Euclidean { .. } | Model::Hyperbolic { .. } => Extended::Infinite,
            Model::Sphere { radius, .. } => Extended::Finite(PI * radius / 2.0),
            Model::FlatTorus { .. } => Extended::Finite(0.25),
        }
    }

    /// Whether the isometry group acts transitively on pairs at each distance.
    /// The flat torus is only locally so, below its convexity radius.
    pub fn is_two_point_homogeneous(&self) -> bool {
        !matches!(self, Model::FlatTorus { .. })
    }

    /// `1/sqrt(-κ)` for hyperbolic space.
    pub(crate) fn hyperbolic_scale(&self) -> f64 {
        match *self {
            Model::Hyperbolic { curvature, .. } => 1.0 / (-curvature).sqrt(),
            _ => 1.0,
        }
    }

    pub fn check_point(&self, p: &Point) -> Result<()> {
        if p.model != *self {
            return Err(GeometryError::ModelMismatch {
                expected: self.id(),
                found: p.model.id(),
            });
        }
        Ok(())
    }

    pub fn check_tangent(&self, v: &TangentVector) -> Result<()> {
        self.check_point(&v.base)?;
        if v.components.len() != self.ambient_dim() {
            return Err(GeometryError::InvalidTangent(format!(
                "expected {} components, got {}",
                self.ambient_dim(),
                v.components.len()
            )));
        }
        Ok(())
    }

    /// A canonical base point: the origin, north pole `(0, …, 0, R)`, or the
    /// hyperboloid vertex `(s, 0, …, 0)`.
    pub fn origin(&self) -> Point {
        let mut coords = vec![0.0; self.ambient_dim()];
        match *self {
            Model::Sphere { dim, radius } => coords[dim] = radius,
            Model::Hyperbolic { .. } => coords[0] = self.hyperbolic_scale(),
            _ => {}
        }
        Point {
            model: *self,
            coords,
        }
    }

    /// Builds a point, projecting onto the model's constraint set.
    pub fn point(&self, coords: Vec<f64>) -> Result<Point> {
        Point::new(*self, coords)
    }

    /// Tangent inner product at `base`.
    pub fn inner(&self, u: &[f64], v: &[f64]) -> f64 {
        match self {
            Model::Hyperbolic { .. } => minkowski(u, v),
            _ => dot(u, v),
        }
    }

    /// Orthogonal projection of an ambient vector onto `T_x`.
    fn project_tangent(&self, x: &[f64], v: &[f64]) -> Vec<f64> {
        match *self {
            Model::Sphere { radius, .. } => {
                let c = dot(x, v) / (radius * radius);
                v.iter().zip(x).map(|(vi, xi)| vi - c * xi).collect()
            }
            Model::Hyperbolic { .. } => {
                let s = self.hyperbolic_scale();
                let c = minkowski(x, v) / (s * s);
                v.iter().zip(x).map(|(vi, xi)| vi + c * xi).collect()
            }
            _ => v.to_vec(),
        }
    }

    fn tangent_norm(&self, v: &[f64]) -> f64 {
        self.inner(v, v).max(0.0).sqrt()
    }

    pub fn tangent(&self, base: &Point, components: Vec<f64>) -> Result<TangentVector> {
        self.check_point(base)?;
        if components.len() != self.ambient_dim() {
            return Err(GeometryError::InvalidTangent(format!(
                "expected {} components, got {}",
                self.ambient_dim(),
                components.len()
            )));
        }
        if components.iter().any(|c| !c.is_finite()) {
            return Err(GeometryError::InvalidTangent("non-finite component".into()));
        }
        let components = self.project_tangent(&base.coords, &components);
        Ok(TangentVector {
            base: base.clone(),
            components,
        })
    }

    /// Geodesic distance.
    pub fn distance(&self, x: &Point, y: &Point) -> Result<f64> {
        self.check_point(x)?;
        self.check_point(y)?;
        Ok(self.raw_distance(&x.coords, &y.coords))
    }

    pub(crate) fn raw_distance(&self, x: &[f64], y: &[f64]) -> f64 {
        match *self {
            Model::Euclidean { .. } => norm(&sub(x, y)),
            Model::Sphere { radius, .. } => {
                let diff = norm(&sub(x, y));
                let sum = norm(&add(x, y));
                radius * 2.0 * diff.atan2(sum)
            }
            Model::Hyperbolic { .. } => {
                let s = self.hyperbolic_scale();
                let d = sub(x, y);
                let chord = minkowski(&d, &d).max(0.0).sqrt();
                2.0 * s * (chord / (2.0 * s)).asinh()
            }
            Model::FlatTorus { .. } => x
                .iter()
                .zip(y)
                .map(|(a, b)| {
                    let w = wrap_delta(b - a);
                    w * w
                })
                .sum::<f64>()
                .sqrt(),
        }
    }

    /// `γ(t)` for the arclength geodesic with `γ(0) = x`, `γ'(0) = v/|v|`.
    /// Non-unit `v` is normalized silently; see [`Model::exp_map_strict`].
    pub fn exp_map(&self, x: &Point, v: &TangentVector, t: f64) -> Result<Point> {
        self.check_point(x)?;
        self.check_tangent(v)?;
        if v.base.coords != x.coords {
            return Err(GeometryError::InvalidTangent(
                "tangent vector is not based at the given point".into(),
            ));
        }
        let n = self.tangent_norm(&v.components);
        if n < 1e-300 {
            return Err(GeometryError::InvalidTangent("zero tangent vector".into()));
        }
        let unit: Vec<f64> = v.components.iter().map(|c| c / n).collect();
        Ok(self.exp_unit(x, &unit, t))
    }

    /// Like [`Model::exp_map`] but rejects vectors whose norm differs from 1.
    pub fn exp_map_strict(&self, x: &Point, v: &TangentVector, t: f64) -> Result<Point> {
        self.check_tangent(v)?;
        let n = self.tangent_norm(&v.components);
        if (n - 1.0).abs() > CONSTRAINT_TOL {
            return Err(GeometryError::InvalidTangent(format!(
                "expected a unit vector, norm is {n}"
            )));
        }
        self.exp_map(x, v, t)
    }

    /// Exponential map along an already unit tangent direction in ambient
    /// coordinates.
    pub(crate) fn exp_unit(&self, x: &Point, unit: &[f64], t: f64) -> Point {
        let coords = match *self {
            Model::Euclidean { .. } => x.coords.iter().zip(unit).map(|(a, u)| a + t * u).collect(),
            Model::FlatTorus { .. } => x
                .coords
                .iter()
                .zip(unit)
                .map(|(a, u)| a + t * u)
                .collect(),
            Model::Sphere { radius, .. } => {
                let th = t / radius;
                let (s, c) = th.sin_cos();
                x.coords
                    .iter()
                    .zip(unit)
                    .map(|(a, u)| a * c + radius * u * s)
                    .collect()
            }
            Model::Hyperbolic { .. } => {
                let sc = self.hyperbolic_scale();
                let th = t / sc;
                let (s, c) = (th.sinh(), th.cosh());
                x.coords
                    .iter()
                    .zip(unit)
                    .map(|(a, u)| a * c + sc * u * s)
                    .collect()
            }
        };
        Point::normalized(*self, coords)
    }

    /// Unit initial direction of some minimizing geodesic from `x` to `y`.
    ///
    /// Unlike [`Model::log_map`] this does not refuse cut-locus pairs: for
    /// antipodal points on a sphere it returns a fixed perpendicular
    /// direction, for coincident points a fixed unit vector.
    pub fn minimizing_direction(&self, x: &Point, y: &Point) -> Result<Vec<f64>> {
        self.check_point(x)?;
        self.check_point(y)?;
        let raw: Vec<f64> = match *self {
            Model::Euclidean { .. } => sub(&y.coords, &x.coords),
            Model::FlatTorus { .. } => x
                .coords
                .iter()
                .zip(&y.coords)
                .map(|(a, b)| wrap_delta(b - a))
                .collect(),
            Model::Sphere { .. } | Model::Hyperbolic { .. } => {
                self.project_tangent(&x.coords, &y.coords)
            }
        };
        let n = self.tangent_norm(&raw);
        let scale = match *self {
            Model::Sphere { radius, .. } => radius,
            Model::Hyperbolic { .. } => self.hyperbolic_scale(),
            _ => 1.0,
        };
        if n <= 1e-14 * scale {
            return Ok(self.perpendicular(&x.coords, None));
        }
        Ok(raw.into_iter().map(|c| c / n).collect())
    }

    /// A fixed unit tangent vector at `x` orthogonal to `avoid` (if given):
    /// the projected ambient basis vector of largest norm, first index on ties.
    pub(crate) fn perpendicular(&self, x: &[f64], avoid: Option<&[f64]>) -> Vec<f64> {
        let m = self.ambient_dim();
        let mut best: Option<(f64, Vec<f64>)> = None;
        for i in 0..m {
            let mut e = vec![0.0; m];
            e[i] = 1.0;
            let mut w = self.project_tangent(x, &e);
            if let Some(u) = avoid {
                let c = self.inner(&w, u);
                for (wi, ui) in w.iter_mut().zip(u) {
                    *wi -= c * ui;
                }
            }
            let n = self.tangent_norm(&w);
            if best.as_ref().is_none_or(|(bn, _)| n > *bn + 1e-15) {
                best = Some((n, w));
            }
        }
        let (n, w) = best.expect("ambient dimension is at least 2");
        w.into_iter().map(|c| c / n).collect()
    }

    /// Fixed unit tangent at `x`: the normalized projection of the ambient
    /// basis vector with the longest projection. This is the direction the
    /// lens profile and r-bar solver move along.
    pub fn reference_direction(&self, x: &Point) -> Result<TangentVector> {
        self.check_point(x)?;
        Ok(TangentVector {
            base: x.clone(),
            components: self.perpendicular(x.coords(), None),
        })
    }

    /// Inverse of the exponential map below the injectivity radius, as the
    /// unit initial direction; the length is `distance(x, y)`, matching the
    /// `(direction, t)` form of [`Model::exp_map`].
    pub fn log_map(&self, x: &Point, y: &Point) -> Result<TangentVector> {
        let d = self.distance(x, y)?;
        if let Extended::Finite(inj) = self.inj() {
            if d >= inj - CUT_LOCUS_TOL {
                return Err(GeometryError::CutLocus { distance: d, inj });
            }
        }
        if d == 0.0 {
            return Err(GeometryError::Precondition(
                "log_map of coincident points has no direction".into(),
            ));
        }
        let components = self.minimizing_direction(x, y)?;
        Ok(TangentVector {
            base: x.clone(),
            components,
        })
    }

    /// The point at `spec.radius` along `direction` from `spec.center`.
    pub fn sphere_point(&self, spec: &SphereSpec, direction: &TangentVector) -> Result<Point> {
        self.check_radius_below_inj(spec.radius)?;
        self.exp_map(&spec.center, direction, spec.radius)
    }

    fn check_radius_below_inj(&self, r: f64) -> Result<()> {
        if let Extended::Finite(inj) = self.inj() {
            if r >= inj {
                return Err(GeometryError::CutLocus { distance: r, inj });
            }
        }
        Ok(())
    }

    /// A continuous path on the metric sphere `spec` from `a` to `b`: the
    /// great-circle arc between their directions in the unit tangent sphere at
    /// the center, pushed through the exponential map.
    pub fn sphere_path(&self, spec: &SphereSpec, a: &Point, b: &Point) -> Result<SpherePath> {
        self.check_point(&spec.center)?;
        self.check_radius_below_inj(spec.radius)?;
        for (name, p) in [("a", a), ("b", b)] {
            let d = self.distance(&spec.center, p)?;
            if (d - spec.radius).abs() > 1e-9 {
                return Err(GeometryError::Precondition(format!(
                    "{name} is at distance {d} from the center, not on the sphere of radius {}",
                    spec.radius
                )));
            }
        }
        let ua = self.minimizing_direction(&spec.center, a)?;
        let ub = self.minimizing_direction(&spec.center, b)?;
        let c = self.inner(&ua, &ub).clamp(-1.0, 1.0);
        let mut w: Vec<f64> = ub.iter().zip(&ua).map(|(b, a)| b - c * a).collect();
        let wn = self.tangent_norm(&w);
        let angle;
        if wn < 1e-12 {
            if c > 0.0 {
                angle = 0.0;
                w = self.perpendicular(&spec.center.coords, Some(&ua));
            } else {
                angle = PI;
                w = self.perpendicular(&spec.center.coords, Some(&ua));
            }
        } else {
            angle = wn.atan2(c);
            w.iter_mut().for_each(|x| *x /= wn);
        }
        Ok(SpherePath {
            model: *self,
            spec: spec.clone(),
            start: ua,
            normal: w,
            angle,
        })
    }

    /// A random point. Unbounded models are sampled in a bounded region:
    /// the cube `[-2, 2]^n` (Euclidean) or the ball of radius 2 about the
    /// hyperboloid vertex.
    pub fn random_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        match *self {
            Model::Euclidean { dim } => {
                let coords = (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect();
                Point {
                    model: *self,
                    coords,
                }
            }
            Model::FlatTorus { dim } => {
                let coords = (0..dim).map(|_| rng.random_range(0.0..1.0)).collect();
                Point {
                    model: *self,
                    coords,
                }
            }
            Model::Sphere { .. } => {
                let coords: Vec<f64> = (0..self.ambient_dim())
                    .map(|_| rng.sample(StandardNormal))
                    .collect();
                if norm(&coords) < 1e-9 {
                    return self.origin();
                }
                Point::normalized(*self, coords)
            }
            Model::Hyperbolic { .. } => {
                let o = self.origin();
                let u = self.random_unit_tangent(&o, rng);
                let t = rng.random_range(0.0..2.0);
                self.exp_unit(&o, &u.components, t)
            }
        }
    }

    /// A uniformly random unit tangent vector at `x`.
    pub fn random_unit_tangent<R: Rng + ?Sized>(&self, x: &Point, rng: &mut R) -> TangentVector {
        loop {
            let raw: Vec<f64> = (0..self.ambient_dim())
                .map(|_| rng.sample(StandardNormal))
                .collect();
            let v = self.project_tangent(&x.coords, &raw);
            let n = self.tangent_norm(&v);
            if n > 1e-6 {
                return TangentVector {
                    base: x.clone(),
                    components: v.into_iter().map(|c| c / n).collect(),
                };
            }
        }
    }
}

fn check_dim(dim: usize) -> Result<()> {
    if dim < 2 {
        return Err(GeometryError::InvalidModel(format!(
            "dimension must be at least 2, got {dim}"
        )));
    }
    Ok(())
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id())
    }
}

impl FromStr for Model {
    type Err = GeometryError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || GeometryError::InvalidModel(format!("unrecognized model id `{s}`"));
        let (head, param) = match s.split_once(':') {
            Some((h, p)) => (h, Some(p)),
            None => (s, None),
        };
        let mut chars = head.chars();
        let kind = chars.next().ok_or_else(bad)?;
        let dim: usize = chars.as_str().parse().map_err(|_| bad())?;
        let value = |key: &str| -> Result<Option<f64>> {
            match param {
                None => Ok(None),
                Some(p) => {
                    let (k, v) = p.split_once('=').ok_or_else(bad)?;
                    if k != key {
                        return Err(bad());
                    }
                    v.parse().map(Some).map_err(|_| bad())
                }
            }
        };
        match kind {
            'e' if param.is_none() => Model::euclidean(dim),
            't' if param.is_none() => Model::flat_torus(dim),
            's' => Model::sphere(dim, value("r")?.unwrap_or(1.0)),
            'h' => Model::hyperbolic(dim, value("k")?.unwrap_or(-1.0)),
            _ => Err(bad()),
        }
    }
}

impl Serialize for Model {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.id())
    }
}

impl<'de> Deserialize<'de> for Model {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A point of a model space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PointRepr")]
pub struct Point {
    model: Model,
    coords: Vec<f64>,
}

#[derive(Deserialize)]
struct PointRepr {
    model: Model,
    coords: Vec<f64>,
}

impl TryFrom<PointRepr> for Point {
    type Error = GeometryError;

    fn try_from(r: PointRepr) -> Result<Self> {
        Point::new(r.model, r.coords)
    }
}

impl Point {
    /// Validates and projects coordinates onto the model.
    ///
    /// Sphere points are radially rescaled; for hyperbolic space either the
    /// `n` spatial coordinates or all `n + 1` may be given, and `x₀` is
    /// recomputed; torus coordinates are reduced mod 1.
    pub fn new(model: Model, coords: Vec<f64>) -> Result<Self> {
        let invalid = |reason: String| GeometryError::InvalidPoint {
            model: model.id(),
            reason,
        };
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(invalid("non-finite coordinate".into()));
        }
        let m = model.ambient_dim();
        let coords = match model {
            Model::Hyperbolic { dim, .. } if coords.len() == dim => {
                let mut full = Vec::with_capacity(m);
                full.push(0.0);
                full.extend(coords);
                full
            }
            Model::Hyperbolic { .. } if coords.len() == m && coords[0] < 0.0 => {
                return Err(invalid("hyperboloid points need x0 > 0".into()));
            }
            _ => coords,
        };
        if coords.len() != m {
            return Err(invalid(format!(
                "expected {m} coordinates, got {}",
                coords.len()
            )));
        }
        if let Model::Sphere { .. } = model {
            if norm(&coords) < 1e-300 {
                return Err(invalid("zero vector cannot be projected to the sphere".into()));
            }
        }
        Ok(Point::normalized(model, coords))
    }

    /// Projects onto the constraint set without validation.
    pub(crate) fn normalized(model: Model, mut coords: Vec<f64>) -> Self {
        match model {
            Model::Sphere { radius, .. } => {
                let n = norm(&coords);
                coords.iter_mut().for_each(|c| *c *= radius / n);
            }
            Model::Hyperbolic { .. } => {
                let s = model.hyperbolic_scale();
                let spatial: f64 = coords[1..].iter().map(|c| c * c).sum();
                coords[0] = (s * s + spatial).sqrt();
            }
            Model::FlatTorus { .. } => {
                for c in coords.iter_mut() {
                    let w = c.rem_euclid(1.0);
                    *c = if w >= 1.0 { 0.0 } else { w };
                }
            }
            Model::Euclidean { .. } => {}
        }
        Point { model, coords }
    }

    pub fn model(&self) -> Model {
        self.model
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    /// Residual of the model's coordinate constraint.
    pub fn constraint_residual(&self) -> f64 {
        match self.model {
            Model::Sphere { radius, .. } => (norm(&self.coords) - radius).abs(),
            Model::Hyperbolic { .. } => {
                let s = self.model.hyperbolic_scale();
                (minkowski(&self.coords, &self.coords) + s * s).abs()
            }
            Model::FlatTorus { .. } => {
                if self.coords.iter().all(|c| (0.0..1.0).contains(c)) {
                    0.0
                } else {
                    1.0
                }
            }
            Model::Euclidean { .. } => 0.0,
        }
    }
}

/// A tangent vector in ambient coordinates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TangentVector {
    pub base: Point,
    pub components: Vec<f64>,
}

impl TangentVector {
    pub fn norm(&self) -> f64 {
        self.base.model.tangent_norm(&self.components)
    }

    /// `⟨x, v⟩` (or its Minkowski analogue); zero for a valid tangent vector.
    pub fn tangency_residual(&self) -> f64 {
        match self.base.model {
            Model::Sphere { .. } => dot(&self.base.coords, &self.components).abs(),
            Model::Hyperbolic { .. } => minkowski(&self.base.coords, &self.components).abs(),
            _ => 0.0,
        }
    }
}

/// The metric sphere `S^x_r`; the open and closed balls are views of the same
/// data.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SphereSpec {
    pub center: Point,
    pub radius: f64,
}

impl SphereSpec {
    pub fn new(center: Point, radius: f64) -> Result<Self> {
        if !(radius.is_finite() && radius > 0.0) {
            return Err(GeometryError::Precondition(format!(
                "sphere radius must be positive, got {radius}"
            )));
        }
        Ok(SphereSpec { center, radius })
    }

    pub fn on_sphere(&self, p: &Point, tol: f64) -> Result<bool> {
        let d = self.center.model.distance(&self.center, p)?;
        Ok((d - self.radius).abs() <= tol)
    }

    pub fn in_open_ball(&self, p: &Point) -> Result<bool> {
        Ok(self.center.model.distance(&self.center, p)? < self.radius)
    }

    pub fn in_closed_ball(&self, p: &Point) -> Result<bool> {
        Ok(self.center.model.distance(&self.center, p)? <= self.radius)
    }
}

/// Path `φ: [0, 1] → S^c_r` returned by [`Model::sphere_path`].
#[derive(Debug, Clone)]
pub struct SpherePath {
    model: Model,
    spec: SphereSpec,
    start: Vec<f64>,
    normal: Vec<f64>,
    angle: f64,
}

impl SpherePath {
    pub fn at(&self, s: f64) -> Point {
        let (sn, cs) = (s * self.angle).sin_cos();
        let dir: Vec<f64> = self
            .start
            .iter()
            .zip(&self.normal)
            .map(|(a, n)| cs * a + sn * n)
            .collect();
        self.model.exp_unit(&self.spec.center, &dir, self.spec.radius)
    }

    /// `n + 1` equally spaced samples including both endpoints.
    pub fn samples(&self, n: usize) -> Vec<Point> {
        let n = n.max(1);
        (0..=n).map(|i| self.at(i as f64 / n as f64)).collect()
    }

    /// Angle swept in the unit tangent sphere.
    pub fn angle(&self) -> f64 {
        self.angle
    }
}

/// Signed displacement on the unit circle, in `[-1/2, 1/2]`.
fn wrap_delta(d: f64) -> f64 {
    d - d.round()
}

/// Lorentz boost of a hyperbolic model taking the hyperboloid vertex to
/// `center`. Far from the vertex the hyperboloid coordinates are badly
/// conditioned, so constructions are run near the vertex and mapped back.
pub(crate) struct Boost {
    model: Model,
    scale: f64,
    center: Vec<f64>,
}

impl Boost {
    /// `None` unless the model is hyperbolic.
    pub(crate) fn to(center: &Point) -> Option<Boost> {
        let model = center.model;
        matches!(model, Model::Hyperbolic { .. }).then(|| Boost {
            model,
            scale: model.hyperbolic_scale(),
            center: center.coords.clone(),
        })
    }

    fn map(&self, v: &[f64], sign: f64) -> Vec<f64> {
        let (c0, cs) = (self.center[0], &self.center[1..]);
        let s = self.scale;
        let (v0, vs) = (v[0], &v[1..]);
        let cv = sign * dot(cs, vs);
        let mut out = Vec::with_capacity(v.len());
        out.push((c0 * v0 + cv) / s);
        for (c, w) in cs.iter().zip(vs) {
            out.push(sign * c * v0 / s + w + sign * c * cv / (s * (c0 + s)));
        }
        out
    }

    /// Image of `p` under the boost (vertex to center).
    pub(crate) fn forward(&self, p: &Point) -> Point {
        Point::normalized(self.model, self.map(&p.coords, 1.0))
    }

    /// Preimage of `p` (center to vertex).
    pub(crate) fn inverse(&self, p: &Point) -> Point {
        Point::normalized(self.model, self.map(&p.coords, -1.0))
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn minkowski(a: &[f64], b: &[f64]) -> f64 {
    -a[0] * b[0] + a[1..].iter().zip(&b[1..]).map(|(x, y)| x * y).sum::<f64>()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn all_models() -> Vec<Model> {
        vec![
            Model::euclidean(2).unwrap(),
            Model::euclidean(3).unwrap(),
            Model::sphere(2, 1.0).unwrap(),
            Model::sphere(3, 2.0).unwrap(),
            Model::hyperbolic(2, -1.0).unwrap(),
            Model::hyperbolic(3, -0.5).unwrap(),
            Model::flat_torus(2).unwrap(),
            Model::flat_torus(3).unwrap(),
        ]
    }

    fn north() -> Point {
        Model::sphere(2, 1.0).unwrap().origin()
    }

    #[test]
    fn distance_examples() {
        let e2 = Model::euclidean(2).unwrap();
        let d = e2
            .distance(&e2.point(vec![0.0, 0.0]).unwrap(), &e2.point(vec![3.0, 4.0]).unwrap())
            .unwrap();
        assert!((d - 5.0).abs() < 1e-15);

        let s2 = Model::sphere(2, 1.0).unwrap();
        let south = s2.point(vec![0.0, 0.0, -1.0]).unwrap();
        assert!((s2.distance(&north(), &south).unwrap() - PI).abs() < 1e-15);

        let t2 = Model::flat_torus(2).unwrap();
        let d = t2
            .distance(&t2.point(vec![0.1, 0.0]).unwrap(), &t2.point(vec![0.9, 0.0]).unwrap())
            .unwrap();
        assert!((d - 0.2).abs() < 1e-12);
    }

    #[test]
    fn mismatched_models_are_rejected() {
        let e2 = Model::euclidean(2).unwrap();
        let t2 = Model::flat_torus(2).unwrap();
        let err = e2
            .distance(&e2.origin(), &t2.origin())
            .unwrap_err();
        assert!(matches!(err, GeometryError::ModelMismatch { .. }));
    }

    #[test]
    fn dimension_one_is_rejected() {
        assert!(Model::euclidean(1).is_err());
        assert!(Model::sphere(1, 1.0).is_err());
        assert!(Model::sphere(2, -1.0).is_err());
        assert!(Model::hyperbolic(2, 0.0).is_err());
    }

    #[test]
    fn model_ids_round_trip() {
        for m in all_models() {
            assert_eq!(m.id().parse::<Model>().unwrap(), m);
        }
        assert_eq!("s2".parse::<Model>().unwrap(), Model::sphere(2, 1.0).unwrap());
        assert!("q2".parse::<Model>().is_err());
        assert!("e2:r=2".parse::<Model>().is_err());
        assert!("s1".parse::<Model>().is_err());
    }

    #[test]
    fn radii_closed_forms() {
        let s = Model::sphere(2, 1.0).unwrap();
        assert_eq!(s.inj(), Extended::Finite(PI));
        assert_eq!(s.conv(), Extended::Finite(PI / 2.0));
        let t = Model::flat_torus(2).unwrap();
        assert_eq!(t.inj(), Extended::Finite(0.5));
        assert_eq!(t.conv(), Extended::Finite(0.25));
        assert_eq!(Model::euclidean(2).unwrap().conv(), Extended::Infinite);
        assert_eq!(Model::hyperbolic(2, -1.0).unwrap().inj(), Extended::Infinite);
        for m in all_models() {
            assert!(m.conv() <= m.inj().scale(0.5));
        }
    }

    #[test]
    fn exp_map_examples() {
        let s2 = Model::sphere(2, 1.0).unwrap();
        let n = north();
        let v = s2.tangent(&n, vec![0.6, 0.8, 0.0]).unwrap();
        let p = s2.exp_map(&n, &v, PI).unwrap();
        assert!((p.coords()[2] + 1.0).abs() < 1e-12);
        assert!(p.coords()[0].abs() < 1e-12 && p.coords()[1].abs() < 1e-12);

        let e2 = Model::euclidean(2).unwrap();
        let o = e2.origin();
        let v = e2.tangent(&o, vec![1.0, 0.0]).unwrap();
        assert_eq!(e2.exp_map(&o, &v, 2.5).unwrap().coords(), &[2.5, 0.0]);

        let t2 = Model::flat_torus(2).unwrap();
        let o = t2.origin();
        let v = t2.tangent(&o, vec![1.0, 0.0]).unwrap();
        let p = t2.exp_map(&o, &v, 1.25).unwrap();
        assert!((p.coords()[0] - 0.25).abs() < 1e-15 && p.coords()[1] == 0.0);
    }

    #[test]
    fn strict_exp_rejects_non_unit() {
        let e2 = Model::euclidean(2).unwrap();
        let o = e2.origin();
        let v = e2.tangent(&o, vec![2.0, 0.0]).unwrap();
        assert!(e2.exp_map_strict(&o, &v, 1.0).is_err());
        assert_eq!(e2.exp_map(&o, &v, 1.0).unwrap().coords(), &[1.0, 0.0]);
    }

    #[test]
    fn log_map_examples() {
        let e2 = Model::euclidean(2).unwrap();
        let v = e2
            .log_map(&e2.origin(), &e2.point(vec![0.0, 2.0]).unwrap())
            .unwrap();
        assert_eq!(v.components, vec![0.0, 1.0]);

        let s2 = Model::sphere(2, 1.0).unwrap();
        let eq = s2.point(vec![1.0, 0.0, 0.0]).unwrap();
        let v = s2.log_map(&north(), &eq).unwrap();
        assert!((v.components[0] - 1.0).abs() < 1e-12);
        assert!(v.components[1].abs() < 1e-12 && v.components[2].abs() < 1e-12);

        let t2 = Model::flat_torus(2).unwrap();
        let v = t2
            .log_map(&t2.origin(), &t2.point(vec![0.6, 0.0]).unwrap())
            .unwrap();
        assert!((v.components[0] + 1.0).abs() < 1e-12 && v.components[1] == 0.0);
    }

    #[test]
    fn torus_log_agrees_with_lattice_translate_search() {
        // Brute force over the 3^n nearest lattice translates of y.
        let t2 = Model::flat_torus(2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..500 {
            let x = t2.random_point(&mut rng);
            let y = t2.random_point(&mut rng);
            let mut best = (f64::INFINITY, vec![]);
            for i in -1..=1 {
                for j in -1..=1 {
                    let dx = y.coords()[0] + i as f64 - x.coords()[0];
                    let dy = y.coords()[1] + j as f64 - x.coords()[1];
                    let d = (dx * dx + dy * dy).sqrt();
                    if d < best.0 {
                        best = (d, vec![dx / d, dy / d]);
                    }
                }
            }
            assert!((t2.distance(&x, &y).unwrap() - best.0).abs() < 1e-12);
            if best.0 < 0.5 - 1e-6 {
                let v = t2.log_map(&x, &y).unwrap();
                assert!((v.components[0] - best.1[0]).abs() < 1e-9);
                assert!((v.components[1] - best.1[1]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn log_map_cut_locus_errors() {
        let s2 = Model::sphere(2, 1.0).unwrap();
        let south = s2.point(vec![0.0, 0.0, -1.0]).unwrap();
        assert!(matches!(
            s2.log_map(&north(), &south),
            Err(GeometryError::CutLocus { .. })
        ));
        let t2 = Model::flat_torus(2).unwrap();
        let p = t2.point(vec![0.5, 0.0]).unwrap();
        assert!(matches!(
            t2.log_map(&t2.origin(), &p),
            Err(GeometryError::CutLocus { .. })
        ));
    }

    #[test]
    fn sphere_point_examples() {
        let e2 = Model::euclidean(2).unwrap();
        let spec = SphereSpec::new(e2.origin(), 1.0).unwrap();
        let dir = e2.tangent(&e2.origin(), vec![1.0, 0.0]).unwrap();
        assert_eq!(e2.sphere_point(&spec, &dir).unwrap().coords(), &[1.0, 0.0]);

        let s2 = Model::sphere(2, 1.0).unwrap();
        let spec = SphereSpec::new(north(), PI / 2.0).unwrap();
        let dir = s2.tangent(&north(), vec![0.0, 1.0, 0.0]).unwrap();
        let p = s2.sphere_point(&spec, &dir).unwrap();
        assert!(p.coords()[2].abs() < 1e-12);

        let h2 = Model::hyperbolic(2, -1.0).unwrap();
        let spec = SphereSpec::new(h2.origin(), 3.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let dir = h2.random_unit_tangent(&h2.origin(), &mut rng);
        let p = h2.sphere_point(&spec, &dir).unwrap();
        assert!((h2.distance(&h2.origin(), &p).unwrap() - 3.0).abs() < 1e-10);

        let spec = SphereSpec::new(north(), PI).unwrap();
        assert!(s2.sphere_point(&spec, &s2.tangent(&north(), vec![1.0, 0.0, 0.0]).unwrap()).is_err());
    }

    #[test]
    fn sphere_path_examples() {
        let e2 = Model::euclidean(2).unwrap();
        let spec = SphereSpec::new(e2.origin(), 1.0).unwrap();
        let a = e2.point(vec![1.0, 0.0]).unwrap();
        let b = e2.point(vec![-1.0, 0.0]).unwrap();
        let path = e2.sphere_path(&spec, &a, &b).unwrap();
        let samples = path.samples(64);
        assert!(e2.distance(&samples[0], &a).unwrap() < 1e-12);
        assert!(e2.distance(&samples[64], &b).unwrap() < 1e-12);
        for p in &samples {
            assert!((e2.distance(&e2.origin(), p).unwrap() - 1.0).abs() < 1e-12);
            assert!(p.coords()[1] >= -1e-12, "upper semicircle");
        }

        let s2 = Model::sphere(2, 1.0).unwrap();
        let spec = SphereSpec::new(north(), PI / 4.0).unwrap();
        let a = s2
            .sphere_point(&spec, &s2.tangent(&north(), vec![1.0, 0.0, 0.0]).unwrap())
            .unwrap();
        let b = s2
            .sphere_point(&spec, &s2.tangent(&north(), vec![0.0, 1.0, 0.0]).unwrap())
            .unwrap();
        let path = s2.sphere_path(&spec, &a, &b).unwrap();
        for p in path.samples(50) {
            assert!((s2.distance(&north(), &p).unwrap() - PI / 4.0).abs() < 1e-9);
        }
        assert!(s2.distance(&path.at(1.0), &b).unwrap() < 1e-12);

        let t2 = Model::flat_torus(2).unwrap();
        let c = t2.point(vec![0.9, 0.05]).unwrap();
        let spec = SphereSpec::new(c.clone(), 0.2).unwrap();
        let a = t2.point(vec![0.1, 0.05]).unwrap();
        let b = t2.point(vec![0.7, 0.05]).unwrap();
        let path = t2.sphere_path(&spec, &a, &b).unwrap();
        for p in path.samples(100) {
            assert!((t2.distance(&c, &p).unwrap() - 0.2).abs() < 1e-9);
        }
        assert!(t2.distance(&path.at(1.0), &b).unwrap() < 1e-12);
    }

    #[test]
    fn sphere_path_rejects_off_sphere_endpoints() {
        let e2 = Model::euclidean(2).unwrap();
        let spec = SphereSpec::new(e2.origin(), 1.0).unwrap();
        let a = e2.point(vec![1.0, 0.0]).unwrap();
        let b = e2.point(vec![0.0, 1.1]).unwrap();
        assert!(matches!(
            e2.sphere_path(&spec, &a, &b),
            Err(GeometryError::Precondition(_))
        ));
    }

    #[test]
    fn triangle_inequality_on_sampled_triples() {
        for m in all_models() {
            let mut rng = ChaCha8Rng::seed_from_u64(7);
            for _ in 0..10_000 {
                let (x, y, z) = (
                    m.random_point(&mut rng),
                    m.random_point(&mut rng),
                    m.random_point(&mut rng),
                );
                let dxy = m.distance(&x, &y).unwrap();
                let slack = m.distance(&x, &z).unwrap() + m.distance(&z, &y).unwrap() - dxy;
                assert!(slack >= -1e-10, "{m}: slack {slack}");
                assert!((dxy - m.distance(&y, &x).unwrap()).abs() < 1e-12);
                assert!(dxy >= 0.0);
            }
            let x = m.random_point(&mut rng);
            assert!(m.distance(&x, &x).unwrap() < 1e-12);
        }
    }

    #[test]
    fn exp_log_round_trip() {
        for m in all_models() {
            let mut rng = ChaCha8Rng::seed_from_u64(19);
            let limit = m.inj().finite().map_or(4.0, |i| 0.9 * i);
            for _ in 0..2000 {
                let x = m.random_point(&mut rng);
                let v = m.random_unit_tangent(&x, &mut rng);
                let t = rng.random_range(1e-3..limit);
                let y = m.exp_map(&x, &v, t).unwrap();
                assert!(y.constraint_residual() < CONSTRAINT_TOL * 10.0);
                let d = m.distance(&x, &y).unwrap();
                assert!((d - t).abs() < 1e-10 * t.max(1.0), "{m}: {d} vs {t}");
                let u = m.log_map(&x, &y).unwrap();
                assert!(u.tangency_residual() < 1e-12);
                assert!((u.norm() - 1.0).abs() < 1e-12);
                let back = m.exp_map(&x, &u, d).unwrap();
                assert!(m.distance(&back, &y).unwrap() < 1e-9, "{m}");
            }
        }
    }

    #[test]
    fn geodesic_arclength() {
        for m in all_models() {
            let mut rng = ChaCha8Rng::seed_from_u64(23);
            let inj = m.inj().finite().unwrap_or(f64::INFINITY);
            for _ in 0..500 {
                let x = m.random_point(&mut rng);
                let v = m.random_unit_tangent(&x, &mut rng);
                let s: f64 = rng.random_range(-2.0..2.0);
                let t: f64 = rng.random_range(-2.0..2.0);
                if (s - t).abs() > inj.min(4.0) {
                    continue;
                }
                let a = m.exp_map(&x, &v, s).unwrap();
                let b = m.exp_map(&x, &v, t).unwrap();
                let d = m.distance(&a, &b).unwrap();
                assert!((d - (s - t).abs()).abs() < 1e-10 * (s - t).abs().max(1.0), "{m}");
            }
        }
    }

    #[test]
    fn torus_axis_geodesic_has_period_one() {
        let t3 = Model::flat_torus(3).unwrap();
        let x = t3.point(vec![0.3, 0.7, 0.1]).unwrap();
        let v = t3.tangent(&x, vec![0.0, 1.0, 0.0]).unwrap();
        let y = t3.exp_map(&x, &v, 1.0).unwrap();
        assert!(t3.distance(&x, &y).unwrap() < 1e-15);
        // rational direction (3, 4)/5 closes up after length 5
        let v = t3.tangent(&x, vec![0.6, 0.8, 0.0]).unwrap();
        let y = t3.exp_map(&x, &v, 5.0).unwrap();
        assert!(t3.distance(&x, &y).unwrap() < 1e-12);
    }

    #[test]
    fn point_json_round_trip() {
        let s2 = Model::sphere(2, 1.0).unwrap();
        let p = s2.point(vec![0.0, 0.6, 0.8]).unwrap();
        let js = serde_json::to_string(&p).unwrap();
        assert_eq!(js, r#"{"model":"s2","coords":[0.0,0.6,0.8]}"#);
        let q: Point = serde_json::from_str(&js).unwrap();
        assert_eq!(p, q);
        assert!(serde_json::from_str::<Point>(r#"{"model":"s2","coords":[1.0]}"#).is_err());
    }
}
