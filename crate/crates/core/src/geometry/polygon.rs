//! Simple-polygon primitives: area, containment, exact signed distance.

use crate::{Real, Vec2};

/// Signed area (shoelace); positive for counter-clockwise winding.
pub fn signed_area(poly: &[Vec2]) -> Real {
    let n = poly.len();
    let mut acc = 0.0;
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        acc += a.x * b.y - b.x * a.y;
    }
    0.5 * acc
}

pub fn centroid(poly: &[Vec2]) -> Vec2 {
    let n = poly.len();
    let mut cx = 0.0;
    let mut cy = 0.0;
    let mut a = 0.0;
    for i in 0..n {
        let p = poly[i];
        let q = poly[(i + 1) % n];
        let w = p.x * q.y - q.x * p.y;
        cx += (p.x + q.x) * w;
        cy += (p.y + q.y) * w;
        a += w;
    }
    Vec2::new(cx / (3.0 * a), cy / (3.0 * a))
}

/// Even-odd containment test (boundary points unspecified).
pub fn contains(poly: &[Vec2], p: Vec2) -> bool {
    let n = poly.len();
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let a = poly[i];
        let b = poly[j];
        if (a.y > p.y) != (b.y > p.y) {
            let x_cross = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
            if p.x < x_cross {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

/// Exact signed distance to a simple polygon: negative inside, zero on the
/// boundary, positive outside, for either winding.
pub fn signed_distance(poly: &[Vec2], p: Vec2) -> Real {
    let n = poly.len();
    let mut d2 = Real::INFINITY;
    let mut s = 1.0;
    let mut j = n - 1;
    for i in 0..n {
        let e = poly[j] - poly[i];
        let w = p - poly[i];
        let t = (w.dot(&e) / e.dot(&e)).clamp(0.0, 1.0);
        let b = w - e * t;
        d2 = d2.min(b.dot(&b));
        let c0 = p.y >= poly[i].y;
        let c1 = p.y < poly[j].y;
        let c2 = e.x * w.y > e.y * w.x;
        if (c0 && c1 && c2) || (!c0 && !c1 && !c2) {
            s = -s;
        }
        j = i;
    }
    s * d2.sqrt()
}

/// Closest boundary point and the index of the edge `(i, i+1)` that realizes it.
pub fn closest_boundary_point(poly: &[Vec2], p: Vec2) -> (Vec2, usize) {
    let n = poly.len();
    let mut best_d2 = Real::INFINITY;
    let mut best = poly[0];
    let mut best_edge = 0;
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        let e = b - a;
        let t = ((p - a).dot(&e) / e.dot(&e)).clamp(0.0, 1.0);
        let q = a + e * t;
        let d2 = (p - q).norm_squared();
        if d2 < best_d2 {
            best_d2 = d2;
            best = q;
            best_edge = i;
        }
    }
    (best, best_edge)
}

/// Unit gradient of the signed distance at `p` (points away from the polygon).
/// On the boundary, falls back to the outward edge normal assuming CCW winding.
pub fn sdf_gradient(poly: &[Vec2], p: Vec2) -> Vec2 {
    let (q, edge) = closest_boundary_point(poly, p);
    let delta = p - q;
    let len = delta.norm();
    if len > 1e-12 {
        let sign = if signed_distance(poly, p) < 0.0 { -1.0 } else { 1.0 };
        delta * (sign / len)
    } else {
        let a = poly[edge];
        let b = poly[(edge + 1) % poly.len()];
        let e = (b - a).normalize();
        Vec2::new(e.y, -e.x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn unit_square() -> Vec<Vec2> {
        vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(1.0, 1.0),
            Vec2::new(0.0, 1.0),
        ]
    }

    #[test]
    fn square_area_and_centroid() {
        let sq = unit_square();
        assert_relative_eq!(signed_area(&sq), 1.0);
        let c = centroid(&sq);
        assert_relative_eq!(c.x, 0.5);
        assert_relative_eq!(c.y, 0.5);
    }

    #[test]
    fn square_distance_known_values() {
        let sq = unit_square();
        assert_relative_eq!(signed_distance(&sq, Vec2::new(0.5, 0.5)), -0.5, epsilon = 1e-12);
        assert_relative_eq!(signed_distance(&sq, Vec2::new(1.3, 0.5)), 0.3, epsilon = 1e-12);
        assert_relative_eq!(signed_distance(&sq, Vec2::new(2.0, 2.0)), 2.0_f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn gradient_points_outward() {
        let sq = unit_square();
        let g = sdf_gradient(&sq, Vec2::new(1.4, 0.5));
        assert_relative_eq!(g.x, 1.0, epsilon = 1e-12);
        let g_in = sdf_gradient(&sq, Vec2::new(0.9, 0.5));
        assert_relative_eq!(g_in.x, 1.0, epsilon = 1e-12);
    }

    proptest! {
        #[test]
        fn sign_matches_containment(x in -0.5f64..1.5, y in -0.5f64..1.5) {
            let sq = unit_square();
            let p = Vec2::new(x, y);
            let d = signed_distance(&sq, p);
            if d.abs() > 1e-9 {
                prop_assert_eq!(d < 0.0, contains(&sq, p));
            }
        }

        #[test]
        fn distance_is_1_lipschitz(
            ax in -0.5f64..1.5, ay in -0.5f64..1.5,
            bx in -0.5f64..1.5, by in -0.5f64..1.5,
        ) {
            let sq = unit_square();
            let a = Vec2::new(ax, ay);
            let b = Vec2::new(bx, by);
            let lhs = (signed_distance(&sq, a) - signed_distance(&sq, b)).abs();
            prop_assert!(lhs <= (a - b).norm() + 1e-12);
        }
    }
}
