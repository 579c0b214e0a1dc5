//! Grid-node velocity projections against rigid bodies (board, core, knife).
//!
//! Two variants share one code path: a hard projection used for evaluation
//! rollouts, and a softened projection for gradient-based planning in which
//! contact strength ramps in over half a grid cell and the friction clamp is
//! smoothed, so node velocities vary continuously with body pose.

use crate::{Real, Vec2};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum ContactModel {
    Hard,
    Soft,
}

/// Smooth `max(0, z)` with a small rounding radius; exact for `|z| >> delta`.
#[inline]
pub fn smooth_relu(z: Real, delta: Real) -> Real {
    0.5 * (z + (z * z + delta * delta).sqrt())
}

const FRICTION_SMOOTHING: Real = 1e-3;

/// Resolve one node against one rigid body.
///
/// `phi` is the body's signed distance at the node (negative inside contact
/// range), `n` the outward body normal, `v_body` the body's point velocity.
/// Returns the corrected velocity and whether the node was modified.
/// Approaching contacts have their normal relative velocity removed and the
/// tangential part reduced by Coulomb friction; separating contacts pass
/// through. With static bodies the projection never increases speed.
#[inline]
pub fn project_contact(
    v: Vec2,
    v_body: Vec2,
    phi: Real,
    n: Vec2,
    mu_friction: Real,
    cell: Real,
    model: ContactModel,
) -> (Vec2, bool) {
    let strength = match model {
        ContactModel::Hard => {
            if phi >= 0.0 {
                return (v, false);
            }
            1.0
        }
        ContactModel::Soft => {
            let s = (-phi / (0.5 * cell)).clamp(0.0, 1.0);
            if s <= 0.0 {
                return (v, false);
            }
            s
        }
    };
    let v_rel = v - v_body;
    let vn = v_rel.dot(&n);
    if vn >= 0.0 {
        return (v, false);
    }
    let vt = v_rel - vn * n;
    let vt_norm = vt.norm();
    let factor = if vt_norm < 1e-12 {
        0.0
    } else {
        let raw = 1.0 - mu_friction * (-vn) / vt_norm;
        match model {
            ContactModel::Hard => raw.max(0.0),
            ContactModel::Soft => smooth_relu(raw, FRICTION_SMOOTHING),
        }
    };
    let v_projected = v_body + vt * factor;
    (v + strength * (v_projected - v), true)
}

/// Adjoints of one soft projection, matching `project_contact`'s inputs.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct ContactVjp {
    pub v_in: Vec2,
    pub v_body: Vec2,
    pub phi: Real,
    pub n: Vec2,
}

/// Vector-Jacobian product of the soft-model [`project_contact`] with
/// respect to its continuous inputs. Branch gates are re-evaluated on the
/// replayed forward values and treated as locally constant; pass-through
/// branches route the adjoint straight to `v`.
pub(crate) fn project_contact_soft_vjp(
    v: Vec2,
    v_body: Vec2,
    phi: Real,
    n: Vec2,
    mu_friction: Real,
    cell: Real,
    bar_out: Vec2,
) -> ContactVjp {
    let half = 0.5 * cell;
    let s_raw = -phi / half;
    let s = s_raw.clamp(0.0, 1.0);
    if s <= 0.0 {
        return ContactVjp { v_in: bar_out, ..ContactVjp::default() };
    }
    let v_rel = v - v_body;
    let vn = v_rel.dot(&n);
    if vn >= 0.0 {
        return ContactVjp { v_in: bar_out, ..ContactVjp::default() };
    }
    let vt = v_rel - vn * n;
    let t = vt.norm();

    // out = (1 - s) v + s v_body + s f vt
    let mut bar_v = (1.0 - s) * bar_out;
    let mut bar_vb = s * bar_out;
    let mut bar_n = Vec2::zeros();
    let mut bar_vn = 0.0;
    let mut bar_vt = Vec2::zeros();
    let bar_s;
    if t < 1e-12 {
        bar_s = (v_body - v).dot(&bar_out);
    } else {
        let raw = 1.0 - mu_friction * (-vn) / t;
        let f = smooth_relu(raw, FRICTION_SMOOTHING);
        bar_s = (v_body + f * vt - v).dot(&bar_out);
        let bar_f = s * vt.dot(&bar_out);
        bar_vt = s * f * bar_out;
        let dsrelu =
            0.5 * (1.0 + raw / (raw * raw + FRICTION_SMOOTHING * FRICTION_SMOOTHING).sqrt());
        let bar_raw = bar_f * dsrelu;
        bar_vn += bar_raw * mu_friction / t;
        let bar_t = -bar_raw * mu_friction * vn / (t * t);
        bar_vt += bar_t * (vt / t);
    }
    // vt = v_rel - vn n
    let mut bar_vrel = bar_vt;
    bar_vn -= n.dot(&bar_vt);
    bar_n -= vn * bar_vt;
    // vn = v_rel . n
    bar_vrel += bar_vn * n;
    bar_n += bar_vn * v_rel;
    // v_rel = v - v_body
    bar_v += bar_vrel;
    bar_vb -= bar_vrel;
    // s = clamp(-phi / (cell/2), 0, 1), constant on both clamp plateaus
    let bar_phi = if s_raw > 0.0 && s_raw < 1.0 { -bar_s / half } else { 0.0 };
    ContactVjp { v_in: bar_v, v_body: bar_vb, phi: bar_phi, n: bar_n }
}
