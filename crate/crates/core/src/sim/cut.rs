//! Classification of material relative to the knife's swept path.
//!
//! The tip trajectory, extended vertically above its first point and below
//! its last, partitions the plane; material on the positive (outboard) side
//! counts as removed. A hard indicator is used for metrics and a smooth
//! compactly-supported weight for gradient-based planning.

use crate::{Real, Vec2};

/// Vertical extension length appended above/below the path ends. Larger than
/// any domain, so the extended polyline always spans the material.
const EXTENSION: Real = 1.0;

/// Signed lateral distance from `p` to the vertically-extended tip polyline.
/// Positive on the side swept away by a descending cut (+x of a downward
/// path). Magnitude is the Euclidean distance to the extended polyline.
pub fn signed_side_distance(path: &[Vec2], p: Vec2) -> Real {
    assert!(!path.is_empty(), "path must contain at least one pose");
    let first = path[0] + Vec2::new(0.0, EXTENSION);
    let last = path[path.len() - 1] - Vec2::new(0.0, EXTENSION);
    let mut best_d2 = Real::INFINITY;
    let mut best_cross: Real = 0.0;
    let mut prev = first;
    for i in 0..=path.len() {
        let cur = if i < path.len() { path[i] } else { last };
        let e = cur - prev;
        let len2 = e.norm_squared();
        if len2 > 1e-24 {
            let u = p - prev;
            let t = (u.dot(&e) / len2).clamp(0.0, 1.0);
            let q = prev + t * e;
            let d2 = (p - q).norm_squared();
            let cross = e.x * u.y - e.y * u.x;
            // At a joint two segments tie in distance; the one seeing the
            // point at a wider angle carries the correct side.
            if d2 < best_d2 - 1e-18 || (d2 < best_d2 + 1e-18 && cross.abs() > best_cross.abs()) {
                best_d2 = d2;
                best_cross = cross;
            }
        }
        prev = cur;
    }
    // Descending paths have e.y < 0, so cross > 0 lands on +x.
    best_cross.signum() * best_d2.sqrt()
}

/// Signed side distance together with its gradients: with respect to the
/// query point and to the (at most two) path vertices that carry the
/// nearest segment. Virtual extension endpoints fold onto the real end
/// vertices they are derived from.
#[derive(Debug, Clone, Copy)]
pub struct SideDistanceGrad {
    pub s: Real,
    pub d_point: Vec2,
    /// (path vertex index, d s / d vertex); valid up to `n_vertices`.
    pub d_vertices: [(usize, Vec2); 2],
    pub n_vertices: usize,
}

/// [`signed_side_distance`] with first derivatives. The winning segment is
/// selected by the identical rule, so `s` matches bitwise away from ties.
pub fn signed_side_distance_grad(path: &[Vec2], p: Vec2) -> SideDistanceGrad {
    assert!(!path.is_empty(), "path must contain at least one pose");
    let first = path[0] + Vec2::new(0.0, EXTENSION);
    let last = path[path.len() - 1] - Vec2::new(0.0, EXTENSION);
    let mut best_d2 = Real::INFINITY;
    let mut best_cross: Real = 0.0;
    let mut best_seg = 0usize;
    let mut best_t: Real = 0.0;
    let mut best_q = p;
    let mut prev = first;
    for i in 0..=path.len() {
        let cur = if i < path.len() { path[i] } else { last };
        let e = cur - prev;
        let len2 = e.norm_squared();
        if len2 > 1e-24 {
            let u = p - prev;
            let t = (u.dot(&e) / len2).clamp(0.0, 1.0);
            let q = prev + t * e;
            let d2 = (p - q).norm_squared();
            let cross = e.x * u.y - e.y * u.x;
            if d2 < best_d2 - 1e-18 || (d2 < best_d2 + 1e-18 && cross.abs() > best_cross.abs()) {
                best_d2 = d2;
                best_cross = cross;
                best_seg = i;
                best_t = t;
                best_q = q;
            }
        }
        prev = cur;
    }
    let sigma = best_cross.signum();
    let d = best_d2.sqrt();
    let s = sigma * d;
    if d < 1e-12 {
        // On the path: |s| is not differentiable, and the contribution of
        // such a particle to any smooth ramp has zero weight derivative.
        return SideDistanceGrad {
            s,
            d_point: Vec2::zeros(),
            d_vertices: [(0, Vec2::zeros()); 2],
            n_vertices: 0,
        };
    }
    let n_hat = (p - best_q) / d;
    let d_point = sigma * n_hat;
    let da = -sigma * (1.0 - best_t) * n_hat;
    let db = -sigma * best_t * n_hat;
    let mut out = SideDistanceGrad {
        s,
        d_point,
        d_vertices: [(0, Vec2::zeros()); 2],
        n_vertices: 0,
    };
    let mut push = |idx: usize, g: Vec2| {
        if out.n_vertices > 0 && out.d_vertices[0].0 == idx {
            out.d_vertices[0].1 += g;
        } else {
            out.d_vertices[out.n_vertices] = (idx, g);
            out.n_vertices += 1;
        }
    };
    // Segment i joins vertex i-1 to vertex i; segment 0 joins the upward
    // extension to vertex 0 and segment len joins the final vertex to the
    // downward extension. Extension endpoints translate with their vertex.
    let n = path.len();
    if best_seg == 0 {
        push(0, da);
        push(0, db);
    } else if best_seg < n {
        push(best_seg - 1, da);
        push(best_seg, db);
    } else {
        push(n - 1, da);
        push(n - 1, db);
    }
    out
}

/// Quintic smoothstep: 0 for `t <= -1`, 1 for `t >= 1`, C2 everywhere.
pub fn smoothstep_quintic(t: Real) -> Real {
    if t <= -1.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        0.5 + t * (15.0 - t * t * (10.0 - 3.0 * t * t)) / 16.0
    }
}

/// Derivative of [`smoothstep_quintic`]; identically zero outside (-1, 1).
pub fn smoothstep_quintic_deriv(t: Real) -> Real {
    if t.abs() >= 1.0 {
        0.0
    } else {
        let s = 1.0 - t * t;
        15.0 / 16.0 * s * s
    }
}

/// Mass strictly on the removed side of the path.
pub fn cut_mass_hard(positions: &[Vec2], particle_mass: Real, path: &[Vec2]) -> Real {
    let n = positions.iter().filter(|p| signed_side_distance(path, **p) > 0.0).count();
    n as Real * particle_mass
}

/// Smooth removed mass: each particle contributes by a quintic ramp of its
/// lateral distance over `width`. Exactly matches the hard count for
/// particles farther than `width` from the path.
pub fn cut_mass_soft(positions: &[Vec2], particle_mass: Real, path: &[Vec2], width: Real) -> Real {
    positions
        .iter()
        .map(|p| smoothstep_quintic(signed_side_distance(path, *p) / width))
        .sum::<Real>()
        * particle_mass
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn vertical_path_classifies_by_x() {
        let path = vec![Vec2::new(0.1, 0.2), Vec2::new(0.1, 0.05)];
        assert!(signed_side_distance(&path, Vec2::new(0.13, 0.1)) > 0.0);
        assert!(signed_side_distance(&path, Vec2::new(0.07, 0.1)) < 0.0);
        assert_relative_eq!(signed_side_distance(&path, Vec2::new(0.13, 0.1)), 0.03, epsilon = 1e-12);
        // Above and below the stored endpoints the vertical extension rules.
        assert!(signed_side_distance(&path, Vec2::new(0.12, 0.5)) > 0.0);
        assert!(signed_side_distance(&path, Vec2::new(0.08, -0.3)) < 0.0);
    }

    #[test]
    fn slanted_path_measures_perpendicular_distance() {
        let path = vec![Vec2::new(0.0, 1.0), Vec2::new(1.0, 0.0)];
        let p = Vec2::new(1.0, 1.0);
        let d = signed_side_distance(&path, p);
        assert!(d > 0.0);
        assert_relative_eq!(d, std::f64::consts::SQRT_2 / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn sign_is_consistent_around_a_corner() {
        // Descend then kick left: the region right of both legs stays positive,
        // left of both stays negative, and |s| is continuous near the joint.
        let path = vec![Vec2::new(0.1, 0.2), Vec2::new(0.1, 0.1), Vec2::new(0.05, 0.02)];
        assert!(signed_side_distance(&path, Vec2::new(0.2, 0.1)) > 0.0);
        assert!(signed_side_distance(&path, Vec2::new(0.0, 0.1)) < 0.0);
        assert!(signed_side_distance(&path, Vec2::new(0.12, 0.05)) > 0.0);
        let joint = Vec2::new(0.1, 0.1);
        let mut prev = None;
        for k in 0..200 {
            let ang = k as Real / 200.0 * std::f64::consts::TAU;
            let p = joint + 0.02 * Vec2::new(ang.cos(), ang.sin());
            let s = signed_side_distance(&path, p);
            assert!((s.abs() - 0.02).abs() < 0.02, "|s| stays within circle radius");
            if let Some(ps) = prev {
                // Continuity of |s| along the circle (sign flips crossing the path).
                let ds: Real = (s as Real).abs() - (ps as Real).abs();
                assert!(ds.abs() < 0.003);
            }
            prev = Some(s);
        }
    }

    #[test]
    fn retraced_segments_do_not_disturb_classification() {
        // Descend, back up, descend again along the same line.
        let path = vec![
            Vec2::new(0.1, 0.2),
            Vec2::new(0.1, 0.1),
            Vec2::new(0.1, 0.15),
            Vec2::new(0.1, 0.05),
        ];
        assert!(signed_side_distance(&path, Vec2::new(0.11, 0.12)) > 0.0);
        assert!(signed_side_distance(&path, Vec2::new(0.09, 0.12)) < 0.0);
    }

    #[test]
    fn hard_mass_matches_area_fraction_on_a_lattice() {
        let path = vec![Vec2::new(0.06, 0.3), Vec2::new(0.06, 0.0)];
        let mut pts = Vec::new();
        let n = 100;
        for i in 0..n {
            for j in 0..n {
                pts.push(Vec2::new(
                    (i as Real + 0.5) / n as Real * 0.1,
                    (j as Real + 0.5) / n as Real * 0.1,
                ));
            }
        }
        let m = 1.0 / pts.len() as Real;
        // 40% of the unit square of points lies right of x = 0.06.
        assert_relative_eq!(cut_mass_hard(&pts, m, &path), 0.4, epsilon = 1e-9);
    }

    #[test]
    fn soft_mass_converges_to_hard_mass() {
        let path = vec![Vec2::new(0.063, 0.3), Vec2::new(0.063, 0.0)];
        let mut pts = Vec::new();
        for i in 0..60 {
            for j in 0..60 {
                pts.push(Vec2::new((i as Real + 0.5) / 600.0, (j as Real + 0.5) / 600.0));
            }
        }
        let m = 1.0;
        let hard = cut_mass_hard(&pts, m, &path);
        let tight = cut_mass_soft(&pts, m, &path, 1e-5);
        let loose = cut_mass_soft(&pts, m, &path, 0.02);
        assert_relative_eq!(tight, hard, epsilon = 1e-9);
        assert!((loose - hard).abs() > 1.0, "wide ramp blurs the boundary");
    }

    #[test]
    fn smoothstep_endpoints_and_monotonicity() {
        assert_eq!(smoothstep_quintic(-1.0), 0.0);
        assert_eq!(smoothstep_quintic(1.0), 1.0);
        assert_relative_eq!(smoothstep_quintic(0.0), 0.5);
        assert_eq!(smoothstep_quintic(-5.0), 0.0);
        assert_eq!(smoothstep_quintic(7.0), 1.0);
        let mut prev = 0.0;
        for k in 0..=100 {
            let t = -1.0 + 2.0 * k as Real / 100.0;
            let v = smoothstep_quintic(t);
            assert!(v >= prev - 1e-15);
            prev = v;
        }
        // Derivative vanishes at the support boundary (C2 join) and matches FD.
        assert_eq!(smoothstep_quintic_deriv(1.0), 0.0);
        let h = 1e-6;
        for &t in &[-0.7, -0.2, 0.0, 0.4, 0.9] {
            let fd = (smoothstep_quintic(t + h) - smoothstep_quintic(t - h)) / (2.0 * h);
            assert_relative_eq!(smoothstep_quintic_deriv(t), fd, epsilon = 1e-8);
        }
    }

    #[test]
    fn side_distance_gradients_match_finite_differences() {
        let path = vec![
            Vec2::new(0.12, 0.20),
            Vec2::new(0.118, 0.15),
            Vec2::new(0.11, 0.10),
            Vec2::new(0.105, 0.06),
        ];
        let probes = [
            Vec2::new(0.14, 0.17),  // interior segment, right side
            Vec2::new(0.09, 0.12),  // interior segment, left side
            Vec2::new(0.13, 0.26),  // above: upward extension
            Vec2::new(0.10, 0.01),  // below: downward extension
            Vec2::new(0.1405, 0.093),
        ];
        let h = 1e-7;
        for &p in &probes {
            let g = signed_side_distance_grad(&path, p);
            assert_relative_eq!(g.s, signed_side_distance(&path, p), epsilon = 1e-15);
            // Query-point gradient.
            for (axis, dv) in [Vec2::new(h, 0.0), Vec2::new(0.0, h)].iter().enumerate() {
                let fd = (signed_side_distance(&path, p + *dv)
                    - signed_side_distance(&path, p - *dv))
                    / (2.0 * h);
                let an = if axis == 0 { g.d_point.x } else { g.d_point.y };
                assert_relative_eq!(an, fd, epsilon = 1e-6);
            }
            // Vertex gradients: move each path vertex and compare; vertices
            // not reported must have zero influence.
            for vi in 0..path.len() {
                let reported = g.d_vertices[..g.n_vertices]
                    .iter()
                    .find(|(i, _)| *i == vi)
                    .map(|(_, gv)| *gv)
                    .unwrap_or_else(Vec2::zeros);
                for (axis, dv) in [Vec2::new(h, 0.0), Vec2::new(0.0, h)].iter().enumerate() {
                    let mut hi = path.clone();
                    let mut lo = path.clone();
                    hi[vi] += *dv;
                    lo[vi] -= *dv;
                    let fd =
                        (signed_side_distance(&hi, p) - signed_side_distance(&lo, p)) / (2.0 * h);
                    let an = if axis == 0 { reported.x } else { reported.y };
                    assert_relative_eq!(an, fd, epsilon = 1e-6);
                }
            }
        }
    }
}
