//! Diameter of the lens `D^x_r ∩ D^y_r` and the distance `r̄` at which that
//! diameter equals `r`.
//!
//! The lens is strongly convex below the convexity radius, so it is
//! star-shaped about the midpoint `m` of `x` and `y`. Its boundary is
//! parameterized by unit directions `u` at `m` through the radial function
//! `ρ(u) = sup { s : exp_m(s u) ∈ lens }`, computed by bisection. The
//! diameter is then a maximum over pairs of directions:
//!
//! 1. rejection-sample points of `D^x_r` that fall in `D^y_r` (topped up with
//!    random directions at `m` when the lens is thin),
//! 2. push each sample radially to the boundary and keep the farthest pairs,
//! 3. refine those pairs with a shrinking pattern search over directions.
//!
//! Every reported estimate is realized by two points verified to lie in the
//! lens, up to distance rounding. The error bound is the largest change in
//! the pair distance under one terminal pattern-search move, doubled, plus
//! the displacement of the realizing points when the radius is perturbed by
//! the distance rounding error (this term dominates near tangency, where the
//! boundary is only resolved to about `sqrt(r δ)`). Sample density only
//! controls which basin is found.
//!
//! Seeds: each lens evaluation uses a `ChaCha8Rng` seeded with the caller's
//! seed; profile and bisection evaluations use [`split_seed`]`(seed, index)`.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::manifold::{GeometryError, Model, Point, Result};

pub const DEFAULT_LENS_BUDGET: usize = 256;

const RADIAL_STEPS: usize = 60;
const REFINED_PAIRS: usize = 4;
const INITIAL_STEP: f64 = 0.25;
const FINAL_STEP: f64 = 1e-13;
const MAX_CLIMB_ROUNDS: usize = 200;

/// Derives an independent seed for the `index`-th evaluation.
pub fn split_seed(seed: u64, index: u64) -> u64 {
    // splitmix64 finalizer of seed + golden-ratio stride
    let mut z = seed.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Serialize)]
pub struct LensEstimate {
    pub estimate: f64,
    pub error_bound: f64,
    /// Boundary points sampled before refinement.
    pub samples: usize,
    /// The realizing pair.
    pub pair: Option<(Point, Point)>,
}

#[derive(Clone)]
struct Lens<'a> {
    model: &'a Model,
    x: &'a Point,
    y: &'a Point,
    r: f64,
    mid: Point,
    basis: Vec<Vec<f64>>,
}

impl Lens<'_> {
    fn contains(&self, p: &Point) -> bool {
        self.model.raw_distance(self.x.coords(), p.coords()) <= self.r
            && self.model.raw_distance(self.y.coords(), p.coords()) <= self.r
    }

    /// Boundary point in direction `u` (unit) from the midpoint, with the
    /// inner bisection end so the point is inside the lens.
    fn boundary(&self, u: &[f64]) -> Point {
        let (mut lo, mut hi) = (0.0_f64, 2.0 * self.r);
        let mut inside = self.mid.clone();
        for _ in 0..RADIAL_STEPS {
            let s = 0.5 * (lo + hi);
            let p = self.model.exp_unit(&self.mid, u, s);
            if self.contains(&p) {
                lo = s;
                inside = p;
            } else {
                hi = s;
            }
            if hi - lo <= f64::EPSILON * self.r {
                break;
            }
        }
        inside
    }

    fn normalize(&self, v: &mut [f64]) -> bool {
        let n = self.model.inner(v, v).max(0.0).sqrt();
        if n < 1e-300 {
            return false;
        }
        v.iter_mut().for_each(|c| *c /= n);
        true
    }

    /// Rotates `u` by angle `h` toward the part of basis vector `axis`
    /// orthogonal to it. A plain `u + h e` normalized would only turn by
    /// `h sin∠(u, e)`, which stalls the search when `u` is nearly aligned.
    fn perturb(&self, u: &[f64], axis: usize, h: f64) -> Vec<f64> {
        let e = &self.basis[axis];
        let c = self.model.inner(u, e);
        let mut perp: Vec<f64> = e.iter().zip(u).map(|(b, a)| b - c * a).collect();
        let n = self.model.inner(&perp, &perp).max(0.0).sqrt();
        if n < 1e-8 {
            return u.to_vec();
        }
        perp.iter_mut().for_each(|p| *p /= n);
        let (s, co) = h.sin_cos();
        let mut w: Vec<f64> = u.iter().zip(&perp).map(|(a, p)| co * a + s * p).collect();
        if !self.normalize(&mut w) {
            return u.to_vec();
        }
        w
    }

    fn dist(&self, a: &Point, b: &Point) -> f64 {
        self.model.raw_distance(a.coords(), b.coords())
    }
}

/// Orthonormal basis of `T_m` by Gram–Schmidt on the projected ambient
/// basis, taking the longest remaining candidate each round.
fn tangent_basis(model: &Model, m: &Point) -> Vec<Vec<f64>> {
    let amb = model.ambient_dim();
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(model.dim());
    while basis.len() < model.dim() {
        let mut best: Option<(f64, Vec<f64>)> = None;
        for i in 0..amb {
            let mut e = vec![0.0; amb];
            e[i] = 1.0;
            let mut v = model
                .tangent(m, e)
                .expect("ambient basis vector projects to a tangent")
                .components;
            for b in &basis {
                let c = model.inner(&v, b);
                v.iter_mut().zip(b).for_each(|(vi, bi)| *vi -= c * bi);
            }
            let n = model.inner(&v, &v).max(0.0).sqrt();
            if best.as_ref().is_none_or(|(bn, _)| n > *bn + 1e-15) {
                best = Some((n, v));
            }
        }
        let (n, v) = best.expect("nonempty ambient basis");
        basis.push(v.into_iter().map(|c| c / n).collect());
    }
    basis
}

fn check_radius(model: &Model, r: f64) -> Result<()> {
    if !(r.is_finite() && r > 0.0) || !model.conv().exceeds(r) {
        return Err(GeometryError::Precondition(format!(
            "lens radius must lie in (0, conv = {}), got {r}",
            model.conv()
        )));
    }
    Ok(())
}

/// Lower-bound estimate of `Diam(D^x_r ∩ D^y_r)` with an error bound.
pub fn lens_diameter(
    model: &Model,
    x: &Point,
    y: &Point,
    r: f64,
    budget: usize,
    seed: u64,
) -> Result<LensEstimate> {
    check_radius(model, r)?;
    let t = model.distance(x, y)?;
    if t > 2.0 * r * (1.0 + 1e-12) {
        return Err(GeometryError::Precondition(format!(
            "centers at distance {t} exceed 2r = {}",
            2.0 * r
        )));
    }
    let budget = budget.max(8);
    let dir = model.minimizing_direction(x, y)?;
    let mid = model.exp_unit(x, &dir, 0.5 * t);
    let lens = Lens {
        model,
        x,
        y,
        r,
        basis: tangent_basis(model, &mid),
        mid,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // 1. rejection sampling in D^x_r, kept when also in D^y_r
    let mut dirs: Vec<Vec<f64>> = Vec::with_capacity(budget);
    let n = model.dim() as f64;
    let max_attempts = 50 * budget;
    let mut attempts = 0;
    while dirs.len() < budget && attempts < max_attempts {
        attempts += 1;
        let v = model.random_unit_tangent(x, &mut rng);
        let s = r * rng.random::<f64>().powf(1.0 / n);
        let p = model.exp_unit(x, &v.components, s);
        if !lens.contains(&p) {
            continue;
        }
        let u = model.minimizing_direction(&lens.mid, &p)?;
        dirs.push(u);
    }
    while dirs.len() < budget {
        dirs.push(model.random_unit_tangent(&lens.mid, &mut rng).components);
    }

    // 2. boundary points and farthest pairs
    let boundary: Vec<Point> = dirs.iter().map(|u| lens.boundary(u)).collect();
    if boundary.iter().any(|p| !p.coords().iter().all(|c| c.is_finite())) {
        return Err(GeometryError::Internal("non-finite lens boundary point".into()));
    }
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for i in 0..boundary.len() {
        let mut best = (f64::NEG_INFINITY, 0);
        for j in 0..boundary.len() {
            let d = lens.dist(&boundary[i], &boundary[j]);
            if d > best.0 {
                best = (d, j);
            }
        }
        pairs.push((best.0, i, best.1));
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    pairs.dedup_by(|a, b| a.1 == b.2 && a.2 == b.1);

    // 3. pattern-search refinement
    let mut best: Option<Refined> = None;
    for &(_, i, j) in pairs.iter().take(REFINED_PAIRS) {
        let cand = refine(&lens, dirs[i].clone(), dirs[j].clone());
        if best.as_ref().is_none_or(|b| cand.0 > b.0) {
            best = Some(cand);
        }
    }
    let (estimate, local_err, p, q, u, w) =
        best.ok_or_else(|| GeometryError::Internal("empty lens sample".into()))?;

    // Distances carry a rounding error δ of a few ulps, so membership only
    // resolves the lens of radius r up to those of radii r ± δ. The shift of
    // the realizing boundary points between the two is charged to the bound;
    // it grows like sqrt(r δ) as the spheres approach tangency.
    let delta = 64.0 * f64::EPSILON * r.max(1.0);
    let mut shift: f64 = 0.0;
    for rr in [r - delta, r + delta] {
        let other = Lens { r: rr, ..lens.clone() };
        for (dir, pt) in [(&u, &p), (&w, &q)] {
            shift = shift.max(lens.dist(&other.boundary(dir), pt));
        }
    }
    Ok(LensEstimate {
        estimate,
        error_bound: local_err + 2.0 * shift + 2.0 * delta,
        samples: boundary.len(),
        pair: Some((p, q)),
    })
}

/// `(distance, direction of p, p, direction of q, q)` for a candidate move.
type Move = (f64, Vec<f64>, Point, Vec<f64>, Point);

/// `(distance, local error, p, q, direction of p, direction of q)`.
type Refined = (f64, f64, Point, Point, Vec<f64>, Vec<f64>);

fn refine(lens: &Lens<'_>, mut u: Vec<f64>, mut w: Vec<f64>) -> Refined {
    let mut pu = lens.boundary(&u);
    let mut pw = lens.boundary(&w);
    let mut val = lens.dist(&pu, &pw);
    let dim = lens.basis.len();
    let mut h = INITIAL_STEP;
    while h >= FINAL_STEP {
        let mut improved = true;
        let mut rounds = 0;
        while improved && rounds < MAX_CLIMB_ROUNDS {
            improved = false;
            rounds += 1;
            // Require a gain of order h^2: normalized moves can be far shorter
            // than h, and gains at rounding level are noise. Either would keep
            // the climb alive without progress.
            let floor = val + (1e-3 * h * h * lens.r).max(8.0 * f64::EPSILON * val.max(lens.r));
            // Single moves of either end, plus joint moves: near round lenses
            // the maximum sits on a flat ridge along which both ends rotate
            // together, and single moves only zig-zag along it.
            let mut best: Option<Move> = None;
            for axis in 0..dim {
                for sign in [1.0, -1.0] {
                    let nu = lens.perturb(&u, axis, sign * h);
                    let nw = lens.perturb(&w, axis, sign * h);
                    let mw = lens.perturb(&w, axis, -sign * h);
                    let (qu, qw, rw) = (lens.boundary(&nu), lens.boundary(&nw), lens.boundary(&mw));
                    let moves = [
                        (&nu, &qu, &w, &pw),
                        (&u, &pu, &nw, &qw),
                        (&nu, &qu, &mw, &rw),
                        (&nu, &qu, &nw, &qw),
                    ];
                    for (cu, cpu, cw, cpw) in moves {
                        let d = lens.dist(cpu, cpw);
                        if d > floor && best.as_ref().is_none_or(|b| d > b.0) {
                            best = Some((d, cu.clone(), cpu.clone(), cw.clone(), cpw.clone()));
                        }
                    }
                }
            }
            if let Some((d, cu, cpu, cw, cpw)) = best {
                val = d;
                (u, pu, w, pw) = (cu, cpu, cw, cpw);
                improved = true;
            }
        }
        h *= 0.5;
    }
    // terminal resolution: largest change under one move at the last step
    let h = 2.0 * h;
    let mut delta: f64 = 0.0;
    for axis in 0..dim {
        for sign in [1.0, -1.0] {
            let p = lens.boundary(&lens.perturb(&u, axis, sign * h));
            delta = delta.max((lens.dist(&p, &pw) - val).abs());
            let q = lens.boundary(&lens.perturb(&w, axis, sign * h));
            delta = delta.max((lens.dist(&pu, &q) - val).abs());
        }
    }
    (val, 2.0 * delta, pu, pw, u, w)
}

/// `(t, g(t))` samples along a geodesic, with per-sample error bounds.
#[derive(Debug, Clone, Serialize)]
pub struct LensProfile {
    pub model: String,
    pub r: f64,
    /// `(t, estimate, error_bound)` rows, `t` increasing from 0 to `2r`.
    pub samples: Vec<(f64, f64, f64)>,
    /// Largest per-sample error bound.
    pub tolerance: f64,
}

/// Evaluates `g` at `0`, `count` evenly spaced interior points and `2r`,
/// along the geodesic from the model's base point.
pub fn lens_profile(
    model: &Model,
    r: f64,
    count: usize,
    budget: usize,
    seed: u64,
) -> Result<LensProfile> {
    check_radius(model, r)?;
    let x = model.origin();
    let dir = model.perpendicular(x.coords(), None);
    let mut samples = Vec::with_capacity(count + 2);
    for i in 0..=count + 1 {
        let t = if i == count + 1 {
            2.0 * r
        } else {
            2.0 * r * i as f64 / (count + 1) as f64
        };
        let y = model.exp_unit(&x, &dir, t);
        let est = lens_diameter(model, &x, &y, r, budget, split_seed(seed, i as u64))?;
        samples.push((t, est.estimate, est.error_bound));
    }
    let tolerance = samples.iter().map(|s| s.2).fold(0.0, f64::max);
    Ok(LensProfile {
        model: model.id(),
        r,
        samples,
        tolerance,
    })
}

impl LensProfile {
    /// Checks the endpoint values `g(0) = 2r`, `g(2r) = 0`, monotone decrease
    /// and `g(t) > 2r − t` on the interior, each up to the sample error
    /// bounds. Returns a description of every violation.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let r = self.r;
        let Some(&(t0, g0, e0)) = self.samples.first() else {
            return vec!["empty profile".into()];
        };
        if t0 == 0.0 && (g0 - 2.0 * r).abs() > e0 {
            out.push(format!("g(0) = {g0}, expected 2r = {}", 2.0 * r));
        }
        let &(tn, gn, en) = self.samples.last().expect("nonempty");
        if (tn - 2.0 * r).abs() < 1e-15 && gn.abs() > en {
            out.push(format!("g(2r) = {gn}, expected 0"));
        }
        for w in self.samples.windows(2) {
            let ((t1, g1, e1), (t2, g2, e2)) = (w[0], w[1]);
            if g2 > g1 + e1 + e2 {
                out.push(format!("g increases from {g1} at t = {t1} to {g2} at t = {t2}"));
            }
        }
        for &(t, g, e) in &self.samples {
            if t > 0.0 && t < 2.0 * r && g + e <= 2.0 * r - t {
                out.push(format!("g({t}) = {g} is not above 2r - t = {}", 2.0 * r - t));
            }
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,g_estimate,error_bound\n");
        for (t, g, e) in &self.samples {
            let _ = writeln!(s, "{t},{g},{e}");
        }
        s
    }

    /// Static SVG plot of the profile with the line `2r − t` overlaid.
    pub fn to_svg(&self) -> String {
        let (w, h, pad) = (640.0, 400.0, 48.0);
        let span = 2.0 * self.r;
        let sx = |t: f64| pad + (w - 2.0 * pad) * t / span;
        let sy = |g: f64| h - pad - (h - 2.0 * pad) * g / span;
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
        );
        let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<path d="M {} {} L {} {} L {} {}" stroke="black" fill="none"/>"#,
            sx(0.0),
            sy(span),
            sx(0.0),
            sy(0.0),
            sx(span),
            sy(0.0)
        );
        let _ = writeln!(
            s,
            r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="gray" stroke-dasharray="6 4"/>"#,
            sx(0.0),
            sy(span),
            sx(span),
            sy(0.0)
        );
        let pts: Vec<String> = self
            .samples
            .iter()
            .map(|(t, g, _)| format!("{:.3},{:.3}", sx(*t), sy(*g)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" stroke="steelblue" stroke-width="2" fill="none"/>"#,
            pts.join(" ")
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="14">g(t), {} r={} (dashed: 2r - t)</text>"#,
            pad,
            pad / 2.0,
            self.model,
            self.r
        );
        s.push_str("</svg>\n");
        s
    }
}

/// Certified bracket for `r̄`, the center distance at which the lens of two
/// radius-`r` balls has diameter `r`.
#[derive(Debug, Clone, Serialize)]
pub struct RBarResult {
    pub r: f64,
    pub lo: f64,
    pub hi: f64,
    pub iterations: usize,
}

impl RBarResult {
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }
}

/// Bisection on `t ↦ g(t) − r` over `[r, 2r]`.
///
/// A midpoint moves the lower end only when the lens estimate (a lower bound)
/// exceeds `r`, and the upper end only when estimate plus error bound is
/// below `r`. Every evaluated pair is cross-checked for monotonicity.
pub fn rbar(model: &Model, r: f64, tol: f64, budget: usize, seed: u64) -> Result<RBarResult> {
    check_radius(model, r)?;
    if !(tol > 0.0) {
        return Err(GeometryError::Precondition(format!("tolerance must be positive, got {tol}")));
    }
    let x = model.origin();
    let dir = model.perpendicular(x.coords(), None);
    let mut history: Vec<(f64, f64, f64)> = Vec::new();
    let mut eval = |t: f64, index: u64| -> Result<(f64, f64)> {
        let y = model.exp_unit(&x, &dir, t);
        let e = lens_diameter(model, &x, &y, r, budget, split_seed(seed, index))?;
        for &(ht, hg, he) in &history {
            let increases = (ht < t && e.estimate > hg + he) || (t < ht && hg > e.estimate + e.error_bound);
            if increases {
                return Err(GeometryError::Diagnostics(format!(
                    "lens diameter not monotone: g({ht}) ~ {hg}, g({t}) ~ {} \
                     beyond the error bounds; raise the sampling budget",
                    e.estimate
                )));
            }
        }
        history.push((t, e.estimate, e.error_bound));
        Ok((e.estimate, e.error_bound))
    };

    let (mut lo, mut hi) = (r, 2.0 * r);
    let (g_lo, _) = eval(lo, 0)?;
    if g_lo <= r {
        return Err(GeometryError::Diagnostics(format!(
            "g(r) estimate {g_lo} is not above r = {r}; raise the sampling budget"
        )));
    }
    let (g_hi, e_hi) = eval(hi, 1)?;
    if g_hi + e_hi >= r {
        return Err(GeometryError::Diagnostics(format!(
            "g(2r) estimate {g_hi} is not below r = {r}"
        )));
    }
    let mut iterations = 0;
    while hi - lo > tol {
        iterations += 1;
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let (g, e) = eval(mid, 1 + iterations as u64)?;
        if g > r {
            lo = mid;
        } else if g + e < r {
            hi = mid;
        } else {
            return Err(GeometryError::Diagnostics(format!(
                "cannot decide the sign of g - r at t = {mid} (estimate {g}, error bound {e}); \
                 bracket [{lo}, {hi}] is wider than the tolerance {tol}"
            )));
        }
    }
    Ok(RBarResult {
        r,
        lo,
        hi,
        iterations,
    })
}
