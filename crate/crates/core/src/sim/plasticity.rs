//! Elastoplastic constitutive model: Hencky elasticity with a von Mises
//! yield surface, evaluated in the principal frame of the deformation
//! gradient via a closed-form 2x2 SVD.

use crate::{Mat2, Real, Vec2};

/// Rotation-form SVD: `f = u * diag(s) * v^T` with `u`, `v` proper rotations.
/// `s.x >= |s.y|`; `s.y` carries the sign of `det(f)`.
#[derive(Debug, Clone, Copy)]
pub struct Svd2 {
    pub u: Mat2,
    pub s: Vec2,
    pub v: Mat2,
}

fn rot(theta: Real) -> Mat2 {
    let (sin, cos) = theta.sin_cos();
    Mat2::new(cos, -sin, sin, cos)
}

pub fn svd2(f: &Mat2) -> Svd2 {
    let e = 0.5 * (f[(0, 0)] + f[(1, 1)]);
    let h = 0.5 * (f[(1, 0)] - f[(0, 1)]);
    let fd = 0.5 * (f[(0, 0)] - f[(1, 1)]);
    let g = 0.5 * (f[(1, 0)] + f[(0, 1)]);
    let q = (e * e + h * h).sqrt();
    let r = (fd * fd + g * g).sqrt();
    // atan2(H, E) = theta_u - theta_v and atan2(G, F) = theta_u + theta_v;
    // atan2(0, 0) = 0 keeps pure scalings well-defined.
    let a1 = g.atan2(fd);
    let a2 = h.atan2(e);
    let theta_v = 0.5 * (a1 - a2);
    let theta_u = 0.5 * (a1 + a2);
    Svd2 { u: rot(theta_u), s: Vec2::new(q + r, q - r), v: rot(theta_v) }
}

impl Svd2 {
    pub fn reconstruct(&self) -> Mat2 {
        self.u * Mat2::new(self.s.x, 0.0, 0.0, self.s.y) * self.v.transpose()
    }
}

/// Hencky (logarithmic) principal strains. Singular values are clamped away
/// from zero; healthy simulations never approach the clamp.
pub fn hencky_strain(s: Vec2) -> Vec2 {
    Vec2::new(s.x.max(1e-8).ln(), s.y.max(1e-8).ln())
}

/// Kirchhoff stress of the Hencky model, rotated back to world axes:
/// `tau = U diag(2 mu eps_i + lambda (eps_0 + eps_1)) U^T`.
pub fn kirchhoff_stress(lambda: Real, mu: Real, svd: &Svd2) -> Mat2 {
    let eps = hencky_strain(svd.s);
    let tr = eps.x + eps.y;
    let t0 = 2.0 * mu * eps.x + lambda * tr;
    let t1 = 2.0 * mu * eps.y + lambda * tr;
    svd.u * Mat2::new(t0, 0.0, 0.0, t1) * svd.u.transpose()
}

/// Magnitude of the deviatoric part of the Kirchhoff stress, computed from
/// singular values (Frobenius norm over principal components).
pub fn deviatoric_stress_magnitude(mu: Real, s: Vec2) -> Real {
    let eps = hencky_strain(s);
    let mean = 0.5 * (eps.x + eps.y);
    let dev = Vec2::new(eps.x - mean, eps.y - mean);
    2.0 * mu * dev.norm()
}

/// Backward of [`kirchhoff_stress`] as a function of the deformation
/// gradient, given its SVD and the stress adjoint. The off-diagonal
/// coupling `(t0 - t1)/(s0^2 - s1^2)` has a finite limit at coincident
/// singular values, substituted inside a small window so rest states
/// (F = identity) are handled exactly.
pub(crate) fn kirchhoff_stress_vjp(
    lambda: Real,
    mu: Real,
    svd: &Svd2,
    bar_tau: &Mat2,
) -> Mat2 {
    let s = svd.s;
    let eps = hencky_strain(s);
    let g = svd.u.transpose() * bar_tau * svd.u;
    let bar_s0 = (g[(0, 0)] * (2.0 * mu + lambda) + g[(1, 1)] * lambda) / s.x;
    let bar_s1 = (g[(0, 0)] * lambda + g[(1, 1)] * (2.0 * mu + lambda)) / s.y;
    let ds = s.x - s.y;
    let ratio = if ds.abs() > 1e-7 {
        2.0 * mu * (eps.x - eps.y) / (ds * (s.x + s.y))
    } else {
        let sbar = 0.5 * (s.x + s.y);
        2.0 * mu / (sbar * (s.x + s.y))
    };
    let a_coef = ratio * (g[(0, 1)] + g[(1, 0)]);
    let bar_ft = Mat2::new(bar_s0, a_coef * s.y, a_coef * s.x, bar_s1);
    svd.u * bar_ft * svd.v.transpose()
}

#[derive(Debug, Clone, Copy)]
pub struct ReturnMap {
    pub f_new: Mat2,
    pub yielded: bool,
}

/// Radial return in principal log-strain space. Elastic states pass through
/// unchanged (bitwise); yielding states are projected onto the yield surface
/// along the deviatoric direction, preserving `det(F)`.
pub fn von_mises_return_map(f_trial: &Mat2, mu: Real, yield_stress: Real) -> ReturnMap {
    let svd = svd2(f_trial);
    let eps = hencky_strain(svd.s);
    let mean = 0.5 * (eps.x + eps.y);
    let dev = Vec2::new(eps.x - mean, eps.y - mean);
    let dev_norm = dev.norm();
    let delta_gamma = dev_norm - yield_stress / (2.0 * mu);
    if delta_gamma <= 0.0 {
        return ReturnMap { f_new: *f_trial, yielded: false };
    }
    let eps_new = Vec2::new(
        eps.x - delta_gamma * dev.x / dev_norm,
        eps.y - delta_gamma * dev.y / dev_norm,
    );
    let s_new = Mat2::new(eps_new.x.exp(), 0.0, 0.0, eps_new.y.exp());
    ReturnMap { f_new: svd.u * s_new * svd.v.transpose(), yielded: true }
}

/// Backward of [`von_mises_return_map`]. The elastic branch is the
/// identity (matching its bitwise pass-through). On the yield surface the
/// projected stretch depends on the trial singular values only through
/// their mean log, and yielding guarantees the singular values are
/// separated, so the rotation adjoint stays well-conditioned.
pub(crate) fn return_map_vjp(
    f_trial: &Mat2,
    mu: Real,
    yield_stress: Real,
    bar_out: &Mat2,
) -> Mat2 {
    let svd = svd2(f_trial);
    let eps = hencky_strain(svd.s);
    let mean = 0.5 * (eps.x + eps.y);
    let dev = Vec2::new(eps.x - mean, eps.y - mean);
    let dev_norm = dev.norm();
    let delta_gamma = dev_norm - yield_stress / (2.0 * mu);
    if delta_gamma <= 0.0 {
        return *bar_out;
    }
    let eps_new = Vec2::new(
        eps.x - delta_gamma * dev.x / dev_norm,
        eps.y - delta_gamma * dev.y / dev_norm,
    );
    let h = Vec2::new(eps_new.x.exp(), eps_new.y.exp());
    let g = svd.u.transpose() * bar_out * svd.v;
    let trace_term = g[(0, 0)] * h.x + g[(1, 1)] * h.y;
    let bar_s0 = trace_term / (2.0 * svd.s.x);
    let bar_s1 = trace_term / (2.0 * svd.s.y);
    let alpha = h.x * g[(1, 0)] - h.y * g[(0, 1)];
    let beta = h.x * g[(0, 1)] - h.y * g[(1, 0)];
    let d = svd.s.x * svd.s.x - svd.s.y * svd.s.y;
    if d.abs() < 1e-12 {
        return *bar_out;
    }
    let bar_ft = Mat2::new(
        bar_s0,
        (alpha * svd.s.y + beta * svd.s.x) / d,
        (alpha * svd.s.x + beta * svd.s.y) / d,
        bar_s1,
    );
    svd.u * bar_ft * svd.v.transpose()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    // Soft-material defaults used across the crate's tests.
    pub const LAMBDA: Real = 1388.89;
    pub const MU: Real = 2083.33;
    pub const YIELD: Real = 200.0;

    fn mat_close(a: &Mat2, b: &Mat2, tol: Real) {
        for i in 0..2 {
            for j in 0..2 {
                assert!((a[(i, j)] - b[(i, j)]).abs() < tol, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn svd_reconstructs_identity_and_rotations() {
        let id = Mat2::identity();
        let svd = svd2(&id);
        mat_close(&svd.reconstruct(), &id, 1e-14);
        assert_relative_eq!(svd.s.x, 1.0);
        assert_relative_eq!(svd.s.y, 1.0);
        let r = rot(0.7);
        let svd = svd2(&r);
        mat_close(&svd.reconstruct(), &r, 1e-14);
    }

    proptest! {
        #[test]
        fn svd_reconstructs_random_matrices(
            a in -2.0f64..2.0, b in -2.0f64..2.0,
            c in -2.0f64..2.0, d in -2.0f64..2.0,
        ) {
            let f = Mat2::new(a, b, c, d);
            let svd = svd2(&f);
            let fr = svd.reconstruct();
            for i in 0..2 {
                for j in 0..2 {
                    prop_assert!((fr[(i, j)] - f[(i, j)]).abs() < 1e-12);
                }
            }
            // Proper rotations.
            prop_assert!((svd.u.determinant() - 1.0).abs() < 1e-12);
            prop_assert!((svd.v.determinant() - 1.0).abs() < 1e-12);
            prop_assert!(svd.s.x >= svd.s.y.abs() - 1e-12);
        }
    }

    #[test]
    fn stress_vanishes_at_rest() {
        let tau = kirchhoff_stress(LAMBDA, MU, &svd2(&Mat2::identity()));
        mat_close(&tau, &Mat2::zeros(), 1e-12);
    }

    #[test]
    fn stress_is_symmetric_and_matches_uniaxial_form() {
        let f = Mat2::new(1.1, 0.0, 0.0, 0.95);
        let tau = kirchhoff_stress(LAMBDA, MU, &svd2(&f));
        assert_relative_eq!(tau[(0, 1)], tau[(1, 0)], epsilon = 1e-12);
        let e0 = 1.1f64.ln();
        let e1 = 0.95f64.ln();
        assert_relative_eq!(tau[(0, 0)], 2.0 * MU * e0 + LAMBDA * (e0 + e1), epsilon = 1e-9);
        assert_relative_eq!(tau[(1, 1)], 2.0 * MU * e1 + LAMBDA * (e0 + e1), epsilon = 1e-9);
    }

    #[test]
    fn return_map_identity_is_identity() {
        let rm = von_mises_return_map(&Mat2::identity(), MU, YIELD);
        assert!(!rm.yielded);
        assert_eq!(rm.f_new, Mat2::identity());
    }

    #[test]
    fn return_map_inside_yield_surface_passes_through_bitwise() {
        // Stretch chosen so the deviatoric stress sits at ~0.99 of yield.
        let target = 0.99 * YIELD / (2.0 * MU);
        let f = Mat2::new((target / 2f64.sqrt()).exp(), 0.0, 0.0, (-target / 2f64.sqrt()).exp());
        assert!(deviatoric_stress_magnitude(MU, svd2(&f).s) < YIELD);
        let rm = von_mises_return_map(&f, MU, YIELD);
        assert!(!rm.yielded);
        assert_eq!(rm.f_new, f);
    }

    #[test]
    fn return_map_projects_onto_yield_surface() {
        // Far outside the yield surface, with rotation and shear mixed in.
        let f = rot(0.4) * Mat2::new(1.6, 0.3, 0.0, 0.7) * rot(-0.2);
        let before = svd2(&f);
        assert!(deviatoric_stress_magnitude(MU, before.s) > YIELD);
        let rm = von_mises_return_map(&f, MU, YIELD);
        assert!(rm.yielded);
        // Independent recomputation from the output.
        let after = svd2(&rm.f_new);
        let mag = deviatoric_stress_magnitude(MU, after.s);
        assert_relative_eq!(mag, YIELD, max_relative = 1e-6);
        // Volume change is preserved by the deviatoric projection.
        assert_relative_eq!(rm.f_new.determinant(), f.determinant(), max_relative = 1e-12);
    }

    proptest! {
        #[test]
        fn return_map_never_exceeds_yield(
            sx in 0.5f64..2.0, sy in 0.5f64..2.0, r1 in -1.0f64..1.0, r2 in -1.0f64..1.0,
        ) {
            let f = rot(r1) * Mat2::new(sx, 0.0, 0.0, sy) * rot(r2);
            let rm = von_mises_return_map(&f, MU, YIELD);
            let mag = deviatoric_stress_magnitude(MU, svd2(&rm.f_new).s);
            prop_assert!(mag <= YIELD * (1.0 + 1e-9));
            prop_assert!((rm.f_new.determinant() - f.determinant()).abs() < 1e-9 * f.determinant().abs());
        }
    }

    /// Central FD of `<bar, g(F)>` against a VJP, entry by entry.
    fn check_vjp(f: &Mat2, bar: &Mat2, vjp: &Mat2, g: impl Fn(&Mat2) -> Mat2, tol: Real) {
        let h = 1e-7;
        let inner = |m: &Mat2| {
            let out = g(m);
            (0..2).flat_map(|i| (0..2).map(move |j| (i, j)))
                .map(|(i, j)| bar[(i, j)] * out[(i, j)])
                .sum::<Real>()
        };
        for i in 0..2 {
            for j in 0..2 {
                let mut hi = *f;
                let mut lo = *f;
                hi[(i, j)] += h;
                lo[(i, j)] -= h;
                let fd = (inner(&hi) - inner(&lo)) / (2.0 * h);
                assert!(
                    (vjp[(i, j)] - fd).abs() < tol * fd.abs().max(1.0),
                    "entry ({i},{j}): {} vs fd {}",
                    vjp[(i, j)],
                    fd
                );
            }
        }
    }

    #[test]
    fn kirchhoff_vjp_matches_finite_differences() {
        let bar = Mat2::new(0.3, -0.7, 0.45, 0.2);
        let cases = [
            Mat2::new(1.05, 0.02, -0.03, 0.97),
            rot(0.4) * Mat2::new(1.1, 0.0, 0.0, 0.92) * rot(-0.1),
            // Pure rotation times a scalar: coincident singular values
            // exercise the analytic limit of the off-diagonal coupling.
            1.03 * rot(0.3),
        ];
        for f in cases {
            let vjp = kirchhoff_stress_vjp(LAMBDA, MU, &svd2(&f), &bar);
            check_vjp(&f, &bar, &vjp, |m| kirchhoff_stress(LAMBDA, MU, &svd2(m)), 1e-4);
        }
    }

    #[test]
    fn return_map_vjp_matches_finite_differences_when_yielded() {
        let bar = Mat2::new(0.9, 0.1, -0.4, 0.6);
        let cases = [
            Mat2::new(1.0, 0.2, 0.0, 1.0),
            Mat2::new(1.3, 0.4, -0.1, 0.8),
            rot(0.5) * Mat2::new(1.2, 0.0, 0.0, 0.85) * rot(-0.3),
        ];
        for f in cases {
            assert!(von_mises_return_map(&f, MU, YIELD).yielded, "case must yield");
            let vjp = return_map_vjp(&f, MU, YIELD, &bar);
            check_vjp(&f, &bar, &vjp, |m| von_mises_return_map(m, MU, YIELD).f_new, 1e-5);
        }
    }

    #[test]
    fn return_map_vjp_is_identity_in_the_elastic_branch() {
        let f = Mat2::new(1.01, 0.002, -0.001, 0.995);
        assert!(!von_mises_return_map(&f, MU, YIELD).yielded);
        let bar = Mat2::new(1.0, 2.0, 3.0, 4.0);
        assert_eq!(return_map_vjp(&f, MU, YIELD, &bar), bar);
    }
}
