//! Antipodal centers on the unit 2-sphere: radii above the convexity radius
//! satisfy the triangle inequalities yet the spheres do not meet.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::Serialize;

use crate::intersect::{intersect_predicate, intersect_witness, WITNESS_TOL};
use crate::manifold::{Model, Result};

#[derive(Debug, Clone, Serialize)]
pub struct Example4Cell {
    pub r1: f64,
    pub r2: f64,
    pub inequalities_hold: bool,
    pub witness_found: bool,
    /// `min |d(p, x2) - r2|` over sampled `p` on the first sphere.
    pub sampled_gap: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExtraCase {
    pub label: String,
    pub r1: f64,
    pub r2: f64,
    pub center_distance: f64,
    pub inequalities_hold: bool,
    pub witness_found: bool,
    /// Message of the predicate's precondition error, if it refused.
    pub predicate: std::result::Result<bool, String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Example4Report {
    pub grid: usize,
    pub center_distance: f64,
    pub twice_conv: f64,
    pub cells: Vec<Example4Cell>,
    pub extra: Vec<ExtraCase>,
    /// Every cell has inequalities holding and an empty intersection.
    pub all_cells_empty: bool,
}

fn strictly_between(d: f64, r1: f64, r2: f64) -> bool {
    (r1 - r2).abs() < d && d < r1 + r2
}

/// Grid of `n x n` cell midpoints over `r1 in (pi/2, pi)` and
/// `r2 in (pi - r1, r1)`, with the centers at the poles.
pub fn example4_demo(n: usize) -> Result<Example4Report> {
    let m = Model::sphere(2, 1.0)?;
    let x1 = m.origin();
    let x2 = m.point(vec![0.0, 0.0, -1.0])?;
    let d = m.distance(&x1, &x2)?;
    let twice_conv = 2.0 * m.conv().finite().expect("sphere has finite conv");

    // Points on the first sphere: latitude circle at polar angle r1.
    let ring = |r1: f64| -> Vec<crate::manifold::Point> {
        (0..64)
            .map(|k| {
                let phi = k as f64 / 64.0 * std::f64::consts::TAU;
                crate::manifold::Point::normalized(m, vec![r1.sin() * phi.cos(), r1.sin() * phi.sin(), r1.cos()])
            })
            .collect()
    };

    let mut cells = Vec::with_capacity(n * n);
    for i in 0..n {
        let r1 = FRAC_PI_2 + (i as f64 + 0.5) / n as f64 * FRAC_PI_2;
        for j in 0..n {
            let r2 = (PI - r1) + (j as f64 + 0.5) / n as f64 * (2.0 * r1 - PI);
            let witness = intersect_witness(&m, &x1, r1, &x2, r2, WITNESS_TOL)?;
            let mut gap = f64::INFINITY;
            for p in ring(r1) {
                gap = gap.min((m.distance(&p, &x2)? - r2).abs());
            }
            cells.push(Example4Cell {
                r1,
                r2,
                inequalities_hold: strictly_between(d, r1, r2),
                witness_found: witness.is_some(),
                sampled_gap: gap,
            });
        }
    }

    let mut extra = Vec::new();
    // Tangency at the edge of the range: S^{x1}_{r1} = S^{x2}_{pi - r1}.
    let (r1, r2) = (2.0, PI - 2.0);
    extra.push(ExtraCase {
        label: "r2 = pi - r1: the spheres coincide".into(),
        r1,
        r2,
        center_distance: d,
        inequalities_hold: strictly_between(d, r1, r2),
        witness_found: intersect_witness(&m, &x1, r1, &x2, r2, WITNESS_TOL)?.is_some(),
        predicate: intersect_predicate(&m, &x1, r1, &x2, r2).map_err(|e| e.to_string()),
    });
    // Below the convexity radius the intersection criterion holds again.
    let dir = m.minimizing_direction(&x1, &x2)?;
    let near = m.exp_unit(&x1, &dir, 1.5);
    let (r1, r2) = (1.0, 1.0);
    extra.push(ExtraCase {
        label: "r1 = r2 = 1 < conv, centers 1.5 apart".into(),
        r1,
        r2,
        center_distance: m.distance(&x1, &near)?,
        inequalities_hold: strictly_between(m.distance(&x1, &near)?, r1, r2),
        witness_found: intersect_witness(&m, &x1, r1, &near, r2, WITNESS_TOL)?.is_some(),
        predicate: intersect_predicate(&m, &x1, r1, &near, r2).map_err(|e| e.to_string()),
    });

    let all_cells_empty = cells.iter().all(|c| c.inequalities_hold && !c.witness_found && c.sampled_gap > 0.0);
    Ok(Example4Report {
        grid: n,
        center_distance: d,
        twice_conv,
        cells,
        extra,
        all_cells_empty,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_is_empty_despite_inequalities() {
        let rep = example4_demo(10).unwrap();
        assert_eq!(rep.cells.len(), 100);
        assert!(rep.all_cells_empty);
        assert!((rep.center_distance - rep.twice_conv).abs() < 1e-15);
        // The sampled gap is |pi - r1 - r2| on the latitude circle.
        for c in &rep.cells {
            assert!((c.sampled_gap - (c.r1 + c.r2 - PI).abs()).abs() < 1e-9);
        }
    }

    #[test]
    fn edge_and_restored_cases() {
        let rep = example4_demo(2).unwrap();
        let tangent = &rep.extra[0];
        assert!(tangent.witness_found);
        assert!(!tangent.inequalities_hold);
        assert!(tangent.predicate.is_err(), "radii above conv are refused");
        let restored = &rep.extra[1];
        assert!(restored.inequalities_hold && restored.witness_found);
        assert_eq!(restored.predicate, Ok(true));
    }

    #[test]
    fn r1_2_r2_1_5_is_empty() {
        let m = Model::sphere(2, 1.0).unwrap();
        let x1 = m.origin();
        let x2 = m.point(vec![0.0, 0.0, -1.0]).unwrap();
        assert!(strictly_between(PI, 2.0, 1.5));
        assert!(intersect_witness(&m, &x1, 2.0, &x2, 1.5, WITNESS_TOL).unwrap().is_none());
    }
}
