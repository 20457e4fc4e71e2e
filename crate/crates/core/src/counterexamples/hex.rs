//! Seven-coloring of the plane by a hexagonal tiling, and the regular unit
//! simplex it is mapped onto.

use crate::manifold::{GeometryError, Result};

/// Default tile diameter (twice the circumradius).
pub const DEFAULT_HEX_DIAMETER: f64 = 0.9;

/// Lower end of the admissible diameters: same-colored tiles are at least
/// `sqrt(7)/2` diameters apart.
pub fn min_hex_diameter() -> f64 {
    2.0 / 7f64.sqrt()
}

pub fn check_hex_diameter(d: f64) -> Result<()> {
    if d > min_hex_diameter() && d < 1.0 {
        Ok(())
    } else {
        Err(GeometryError::Precondition(format!(
            "hexagon diameter {d} outside the admissible interval ({}, 1)",
            min_hex_diameter()
        )))
    }
}

/// Axial coordinates `(q, r)` of the pointy-top tile containing `(x, y)`.
///
/// Cube rounding: each cube coordinate is rounded half away from zero and
/// the one with the largest rounding error is recomputed from the other
/// two. Points on a shared edge thus go to a fixed neighbor, which makes the
/// coloring total and deterministic.
pub fn hex_tile(x: f64, y: f64, diameter: f64) -> (i64, i64) {
    let size = 0.5 * diameter;
    let q = (3f64.sqrt() / 3.0 * x - y / 3.0) / size;
    let r = (2.0 / 3.0 * y) / size;
    let s = -q - r;
    let (mut rq, mut rr, rs) = (q.round(), r.round(), s.round());
    let (dq, dr, ds) = ((rq - q).abs(), (rr - r).abs(), (rs - s).abs());
    if dq > dr && dq > ds {
        rq = -rr - rs;
    } else if dr > ds {
        rr = -rq - rs;
    }
    (rq as i64, rr as i64)
}

/// Center of the tile with axial coordinates `(q, r)`.
pub fn hex_center(q: i64, r: i64, diameter: f64) -> (f64, f64) {
    let size = 0.5 * diameter;
    let (q, r) = (q as f64, r as f64);
    (size * 3f64.sqrt() * (q + 0.5 * r), size * 1.5 * r)
}

/// Color in `1..=7`; neighbors differ by `±1, ±2, ±3` mod 7.
pub fn color_of_tile(q: i64, r: i64) -> u8 {
    ((q - 2 * r).rem_euclid(7) + 1) as u8
}

pub fn hex_color(x: f64, y: f64, diameter: f64) -> Result<u8> {
    check_hex_diameter(diameter)?;
    if !x.is_finite() || !y.is_finite() {
        return Err(GeometryError::Precondition("point must be finite".into()));
    }
    let (q, r) = hex_tile(x, y, diameter);
    Ok(color_of_tile(q, r))
}

/// Vertex `color` (1..=7) of a regular simplex with unit edges in E^6:
/// `e_i / sqrt2` for `i <= 6` and `t (1, ..., 1)` with `t = (sqrt2 + sqrt14) / 12`.
pub fn simplex_vertex(color: u8) -> Vec<f64> {
    assert!((1..=7).contains(&color), "color {color} out of range");
    if color == 7 {
        let t = (2f64.sqrt() + 14f64.sqrt()) / 12.0;
        vec![t; 6]
    } else {
        let mut v = vec![0.0; 6];
        v[color as usize - 1] = std::f64::consts::FRAC_1_SQRT_2;
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn simplex_has_unit_edges() {
        for i in 1..=7u8 {
            for j in 1..i {
                let (a, b) = (simplex_vertex(i), simplex_vertex(j));
                let d: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
                assert!((d - 1.0).abs() < 1e-15, "{i} {j} {d}");
            }
        }
    }

    #[test]
    fn ring_around_a_tile_uses_all_colors() {
        let ring = [(0, 0), (1, 0), (-1, 0), (0, 1), (0, -1), (1, -1), (-1, 1)];
        let mut colors: Vec<u8> = ring.iter().map(|&(q, r)| color_of_tile(q, r)).collect();
        colors.sort();
        assert_eq!(colors, vec![1, 2, 3, 4, 5, 6, 7]);
        // Same answer through the point-level map at tile centers.
        for &(q, r) in &ring {
            let (x, y) = hex_center(q, r, 0.9);
            assert_eq!(hex_tile(x, y, 0.9), (q, r));
        }
    }

    #[test]
    fn same_tile_same_color() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let (q, r) = (rng.random_range(-20..20), rng.random_range(-20..20));
            let (cx, cy) = hex_center(q, r, 0.9);
            // Inscribed circle radius sqrt3/2 * size.
            let rho = 0.45 * 3f64.sqrt() / 2.0 * rng.random::<f64>() * 0.999;
            let th = rng.random::<f64>() * std::f64::consts::TAU;
            let (x, y) = (cx + rho * th.cos(), cy + rho * th.sin());
            assert_eq!(hex_tile(x, y, 0.9), (q, r));
        }
    }

    #[test]
    fn admissible_interval() {
        assert!(hex_color(0.0, 0.0, 0.9).is_ok());
        assert!(hex_color(0.0, 0.0, 0.75).is_err());
        assert!(hex_color(0.0, 0.0, 1.0).is_err());
    }

    /// Oracle for the admissible interval: the closest same-colored tiles
    /// are at distance `sqrt7/2 * D`, so unit pairs go monochromatic just
    /// below `2/sqrt7` and stay proper just above it.
    #[test]
    fn unit_pairs_are_never_monochromatic() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let sample = |d: f64, rng: &mut ChaCha8Rng, n: usize| {
            let mut mono = 0;
            for _ in 0..n {
                let (x, y) = (rng.random_range(-30.0..30.0), rng.random_range(-30.0..30.0));
                let th: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                let (a, b) = (hex_tile(x, y, d), hex_tile(x + th.cos(), y + th.sin(), d));
                if color_of_tile(a.0, a.1) == color_of_tile(b.0, b.1) {
                    mono += 1;
                }
            }
            mono
        };
        assert_eq!(sample(0.9, &mut rng, 100_000), 0);
        assert_eq!(sample(0.77, &mut rng, 100_000), 0);
        assert!(sample(0.7, &mut rng, 100_000) > 0);
        assert!(sample(1.05, &mut rng, 100_000) > 0);
    }
}
