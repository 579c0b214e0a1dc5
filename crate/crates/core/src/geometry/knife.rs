//! Knife pose and blade geometry.
//!
//! The blade is modeled as a capsule around the cutting-edge segment that
//! runs from the tip along the blade direction. The spine offset is used for
//! rendering the blade silhouette only; contact and collision queries act on
//! the capsule.

use serde::{Deserialize, Serialize};

use crate::{Real, Vec2};

/// Wraps an angle into (-pi, pi].
pub fn wrap_angle(theta: Real) -> Real {
    let two_pi = std::f64::consts::TAU;
    let mut t = theta % two_pi;
    if t <= -std::f64::consts::PI {
        t += two_pi;
    } else if t > std::f64::consts::PI {
        t -= two_pi;
    }
    t
}

/// Tip position and blade direction angle. `theta` is kept in (-pi, pi].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KnifePose {
    pub tip: Vec2,
    pub theta: Real,
}

impl KnifePose {
    pub fn new(tip: Vec2, theta: Real) -> Self {
        KnifePose { tip, theta: wrap_angle(theta) }
    }

    /// Unit vector from the tip toward the blade heel.
    pub fn blade_dir(&self) -> Vec2 {
        Vec2::new(self.theta.cos(), self.theta.sin())
    }

    pub fn advanced(&self, dpos: Vec2, dtheta: Real) -> KnifePose {
        KnifePose::new(self.tip + dpos, self.theta + dtheta)
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KnifeGeometry {
    /// Cutting-edge length in meters.
    pub blade_length: Real,
    /// Capsule inflation radius in meters.
    pub half_thickness: Real,
    /// Distance from cutting edge to spine; drawn in renders, not simulated.
    pub spine_offset: Real,
}

impl Default for KnifeGeometry {
    fn default() -> Self {
        KnifeGeometry { blade_length: 0.12, half_thickness: 0.001, spine_offset: 0.02 }
    }
}

impl KnifeGeometry {
    /// Capsule signed distance: distance to the edge segment minus the
    /// half-thickness. Negative inside the blade.
    pub fn sdf(&self, pose: &KnifePose, p: Vec2) -> Real {
        let (q, _) = self.closest_edge_point(pose, p);
        (p - q).norm() - self.half_thickness
    }

    /// Closest point on the edge segment and its arclength parameter in
    /// [0, blade_length].
    pub fn closest_edge_point(&self, pose: &KnifePose, p: Vec2) -> (Vec2, Real) {
        let dir = pose.blade_dir();
        let t = (p - pose.tip).dot(&dir).clamp(0.0, self.blade_length);
        (pose.tip + dir * t, t)
    }

    /// `n` sample points spread uniformly along the cutting edge, endpoints
    /// included.
    pub fn edge_samples(&self, pose: &KnifePose, n: usize) -> Vec<Vec2> {
        assert!(n >= 2);
        let dir = pose.blade_dir();
        (0..n)
            .map(|i| pose.tip + dir * (self.blade_length * i as Real / (n - 1) as Real))
            .collect()
    }

    /// Silhouette polygon used by renders: edge segment extruded toward the
    /// spine side (right of the blade direction).
    pub fn silhouette(&self, pose: &KnifePose) -> Vec<Vec2> {
        let dir = pose.blade_dir();
        let spine = Vec2::new(dir.y, -dir.x) * self.spine_offset;
        let heel = pose.tip + dir * self.blade_length;
        vec![pose.tip, heel, heel + spine, pose.tip + dir * (0.25 * self.blade_length) + spine]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn tip_is_inside_by_half_thickness() {
        let g = KnifeGeometry::default();
        let pose = KnifePose::new(Vec2::new(0.1, 0.2), std::f64::consts::FRAC_PI_2);
        assert_relative_eq!(g.sdf(&pose, pose.tip), -g.half_thickness, epsilon = 1e-15);
    }

    #[test]
    fn perpendicular_point_distance() {
        let g = KnifeGeometry::default();
        let pose = KnifePose::new(Vec2::new(0.0, 0.0), std::f64::consts::FRAC_PI_2);
        // Mid-blade, 5 mm off to the side.
        let p = Vec2::new(0.005, 0.06);
        assert_relative_eq!(g.sdf(&pose, p), 0.005 - g.half_thickness, epsilon = 1e-15);
    }

    #[test]
    fn sdf_is_rotation_invariant() {
        let g = KnifeGeometry::default();
        let base = KnifePose::new(Vec2::new(0.0, 0.0), 0.3);
        let p = Vec2::new(0.03, 0.04);
        let d0 = g.sdf(&base, p);
        for rot in [0.4, 1.1, -2.0] {
            let c = rot as Real;
            let rotm = nalgebra::Rotation2::new(c);
            let pose = KnifePose::new(Vec2::new(0.0, 0.0), 0.3 + c);
            let d1 = g.sdf(&pose, rotm * p);
            assert_relative_eq!(d0, d1, epsilon = 1e-12);
        }
    }

    #[test]
    fn edge_samples_span_blade() {
        let g = KnifeGeometry::default();
        let pose = KnifePose::new(Vec2::new(1.0, 2.0), 0.0);
        let s = g.edge_samples(&pose, 5);
        assert_eq!(s.len(), 5);
        assert_relative_eq!((s[0] - pose.tip).norm(), 0.0);
        assert_relative_eq!((s[4] - pose.tip).norm(), g.blade_length, epsilon = 1e-15);
        assert_relative_eq!((s[1] - s[0]).norm(), g.blade_length / 4.0, epsilon = 1e-15);
    }

    #[test]
    fn wrap_angle_range() {
        for t in [-10.0, -3.15, 0.0, 3.15, 10.0, 100.0] {
            let w = wrap_angle(t);
            assert!(w > -std::f64::consts::PI && w <= std::f64::consts::PI);
            assert_relative_eq!(w.sin(), t.sin(), epsilon = 1e-9);
            assert_relative_eq!(w.cos(), t.cos(), epsilon = 1e-9);
        }
    }
}
