//! Adaptive contour-following cutting policy.
//!
//! The policy steers the knife tip along an offset isocontour of the
//! estimated-core SDF. The offset is a base clearance plus a safety
//! tolerance that starts at zero, jumps by a fixed increment on every
//! collision, holds through the retraction recovery, and then decays
//! linearly back to exactly zero. Retraction replays the recent action
//! history with exact negations, so the knife retraces its own path.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::grid::SdfGrid;
use crate::geometry::knife::{wrap_angle, KnifeGeometry, KnifePose};
use crate::opt::{Action, ACTION_STEP, DTHETA_MAX};
use crate::sim::DETECT_SAMPLES;
use crate::{Real, Vec2};

/// Distance from the followed isocontour beyond which the knife just
/// descends. Inside it the policy engages contour following. Wider than any
/// steering band so even a zero-clearance policy engages from the start
/// corridor instead of dropping past the core.
const ENGAGE_BAND: Real = 0.06;

/// Tolerance schedule and steering parameters.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PolicyConfig {
    /// Retraction steps after a collision.
    pub retract_steps: usize,
    /// Tolerance jump per collision, meters.
    pub tolerance_increment: Real,
    /// Actions over which an elevated tolerance decays back to zero.
    pub decay_steps: usize,
    /// Offset of the followed isocontour at zero tolerance, meters.
    pub base_clearance: Real,
    /// Tip displacement per action, meters.
    pub step_length: Real,
    /// Blade rotation clamp per action, radians.
    pub dtheta_max: Real,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig {
            retract_steps: 8,
            tolerance_increment: 0.005,
            decay_steps: 5,
            base_clearance: 0.02,
            step_length: ACTION_STEP,
            dtheta_max: DTHETA_MAX,
        }
    }
}

impl PolicyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.retract_steps == 0
            || self.decay_steps == 0
            || self.tolerance_increment < 0.0
            || self.base_clearance < 0.0
            || self.step_length <= 0.0
            || self.dtheta_max <= 0.0
        {
            return Err(Error::InvalidConfig(
                "policy counts must be positive and lengths non-negative".into(),
            ));
        }
        Ok(())
    }

    /// Width of the steering band around the followed isocontour. Outside
    /// it the knife descends straight down.
    fn band(&self) -> Real {
        self.base_clearance.max(4.0 * self.step_length)
    }
}

/// Baseline variants from the evaluation protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyVariant {
    /// Full adaptive tolerance schedule.
    Adaptive,
    /// Retracts and re-estimates but never raises the tolerance.
    NonAdaptive,
    /// Hugs the estimated contour with zero clearance and unlimited
    /// rotation rate.
    Greedy,
}

impl PolicyVariant {
    pub fn label(self) -> &'static str {
        match self {
            PolicyVariant::Adaptive => "adaptive",
            PolicyVariant::NonAdaptive => "non_adaptive",
            PolicyVariant::Greedy => "greedy",
        }
    }

    /// Specialize a base configuration for this variant.
    pub fn configure(self, base: PolicyConfig) -> PolicyConfig {
        match self {
            PolicyVariant::Adaptive => base,
            PolicyVariant::NonAdaptive => PolicyConfig { tolerance_increment: 0.0, ..base },
            PolicyVariant::Greedy => PolicyConfig {
                tolerance_increment: 0.0,
                base_clearance: 0.0,
                dtheta_max: std::f64::consts::PI,
                ..base
            },
        }
    }
}

/// Where the schedule currently is.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    /// Steady following at zero tolerance.
    Forward,
    /// Replaying inverted history; counts retractions left.
    Retracting(usize),
    /// Holding the raised tolerance; counts actions left in the hold.
    Elevated(usize),
    /// Linear decay back to zero; counts decay actions left.
    Decaying(usize),
}

/// Episode-local policy state.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolicyState {
    pub tolerance: Real,
    pub phase: Phase,
    /// Committed forward actions not yet undone by retraction.
    pub action_history: Vec<Action>,
    pub collision_count: usize,
    /// Fallback retraction target when the history runs out.
    pub initial_pose: KnifePose,
    /// Tolerance drop per decay action, frozen when decay starts.
    decay_rate: Real,
}

impl PolicyState {
    pub fn new(initial_pose: KnifePose) -> Self {
        PolicyState {
            tolerance: 0.0,
            phase: Phase::Forward,
            action_history: Vec::new(),
            collision_count: 0,
            initial_pose,
            decay_rate: 0.0,
        }
    }
}

/// Rotate 90 degrees counter-clockwise.
#[inline]
fn perp(v: Vec2) -> Vec2 {
    Vec2::new(-v.y, v.x)
}

/// The contour-following policy. Holds only configuration; all mutable
/// episode state lives in [`PolicyState`].
#[derive(Debug, Clone, Copy)]
pub struct Policy {
    pub config: PolicyConfig,
    pub knife: KnifeGeometry,
}

impl Policy {
    pub fn new(config: PolicyConfig) -> Result<Self> {
        config.validate()?;
        Ok(Policy { config, knife: KnifeGeometry::default() })
    }

    pub fn variant(variant: PolicyVariant) -> Self {
        Policy {
            config: variant.configure(PolicyConfig::default()),
            knife: KnifeGeometry::default(),
        }
    }

    /// Next cutting action: follow the `base_clearance + tolerance`
    /// isocontour of the estimate in the downward-progress direction,
    /// descend straight when far from it, and angle inward once the tip is
    /// below the estimate's lowest extent so the cut undercuts to the
    /// board. The blade rotates toward contour tangency, rate-clamped.
    ///
    /// The whole cutting edge follows the isocontour, not just the tip: the
    /// steering error is taken at the most constrained edge sample, so a
    /// bulge overhanging the tip's own path still pushes the cut outward.
    pub fn next_action(
        &self,
        est_sdf: &SdfGrid,
        pose: KnifePose,
        state: &PolicyState,
    ) -> Result<Action> {
        let spec = est_sdf.spec;
        let lo = spec.origin;
        let hi = spec.origin + Vec2::new(spec.nx as Real, spec.ny as Real) * spec.cell;
        if pose.tip.x < lo.x || pose.tip.y < lo.y || pose.tip.x > hi.x || pose.tip.y > hi.y {
            return Err(Error::InvalidConfig(format!(
                "knife tip ({:.4}, {:.4}) left the estimate window",
                pose.tip.x, pose.tip.y
            )));
        }
        let cfg = &self.config;
        let level = cfg.base_clearance + state.tolerance;
        let band = cfg.band();
        let mut err = Real::INFINITY;
        let mut probe = pose.tip;
        for p in self.knife.edge_samples(&pose, DETECT_SAMPLES) {
            let d = est_sdf.sample(p) - level;
            if d < err {
                err = d;
                probe = p;
            }
        }
        let descent = Vec2::new(0.0, -1.0);

        let (heading, theta_des) = if err > ENGAGE_BAND {
            (descent, std::f64::consts::FRAC_PI_2)
        } else {
            let g = est_sdf.gradient(probe);
            let gn = g.norm();
            if gn < 1e-9 {
                (descent, std::f64::consts::FRAC_PI_2)
            } else {
                let ghat = g / gn;
                let mut that = perp(ghat);
                let along = that.dot(&descent);
                // Progress direction: downward, breaking horizontal-tangent
                // ties inward (the core sits left of the cut).
                if along < 0.0 || (along.abs() < 1e-9 && that.x > 0.0) {
                    that = -that;
                }
                let heading = if pose.tip.y < lowest_extent(est_sdf) {
                    // Under the estimate: stop hugging the underside and
                    // angle in toward the board.
                    (that + descent).normalize()
                } else {
                    (that - (err / band).clamp(-1.0, 1.0) * ghat).normalize()
                };
                // Blade target: contour tangency, rotated off the core until
                // the whole edge clears the followed level. Anticipatory: the
                // sweep is anchored at the tip's projection onto the level
                // contour, not the tip itself, so the blade starts leaning
                // before the tip tucks under a bulge; until the rotation
                // catches up, the blade-min steering error holds the path
                // out, and the tuck proceeds at the rotation rate.
                let up = -that;
                let theta_tan = up.y.atan2(up.x);
                let g_tip = est_sdf.gradient(pose.tip);
                let anchor = if g_tip.norm() > 1e-9 {
                    let err_tip = est_sdf.sample(pose.tip) - level;
                    pose.tip - g_tip.normalize() * err_tip
                } else {
                    pose.tip
                };
                (heading, self.clear_blade_theta(est_sdf, anchor, theta_tan, level))
            }
        };
        let dtheta = wrap_angle(theta_des - pose.theta).clamp(-cfg.dtheta_max, cfg.dtheta_max);
        Ok(Action { dpos: cfg.step_length * heading, dtheta })
    }

    /// Smallest clockwise rotation from the tangency target that lifts every
    /// edge sample to `level` clearance, capped at horizontal. When no
    /// candidate clears, returns the most-clearing one.
    fn clear_blade_theta(&self, est_sdf: &SdfGrid, tip: Vec2, theta_tan: Real, level: Real) -> Real {
        const SWEEP_STEP: Real = 0.02;
        let mut best = theta_tan;
        let mut best_clear = Real::NEG_INFINITY;
        let mut k = 0;
        loop {
            let theta = theta_tan - SWEEP_STEP * k as Real;
            let cand = KnifePose::new(tip, theta);
            let clear = self
                .knife
                .edge_samples(&cand, DETECT_SAMPLES)
                .iter()
                .map(|p| est_sdf.sample(*p))
                .fold(Real::INFINITY, Real::min);
            if clear >= level {
                return theta;
            }
            if clear > best_clear {
                best_clear = clear;
                best = theta;
            }
            if theta <= 0.0 {
                return best;
            }
            k += 1;
        }
    }

    /// Collision response: raise the tolerance (cumulatively) and enter
    /// the retraction phase.
    pub fn on_collision(&self, state: &mut PolicyState) {
        state.tolerance += self.config.tolerance_increment;
        state.phase = Phase::Retracting(self.config.retract_steps);
        state.collision_count += 1;
    }

    /// One retraction action: the exact negation of the most recent
    /// unretracted forward action, or a straight step toward the initial
    /// pose when the history has run out. Ends the phase into the
    /// elevated-tolerance hold.
    pub fn retract_action(&self, state: &mut PolicyState, pose: KnifePose) -> Action {
        let remaining = match state.phase {
            Phase::Retracting(n) => {
                assert!(n >= 1, "retract_action called with no retractions left");
                n
            }
            _ => panic!("retract_action outside the retraction phase"),
        };
        let action = match state.action_history.pop() {
            Some(a) => Action { dpos: -a.dpos, dtheta: -a.dtheta },
            None => {
                let to_start = state.initial_pose.tip - pose.tip;
                let dist = to_start.norm();
                let dpos = if dist <= self.config.step_length || dist < 1e-12 {
                    to_start
                } else {
                    to_start * (self.config.step_length / dist)
                };
                let dtheta = wrap_angle(state.initial_pose.theta - pose.theta)
                    .clamp(-self.config.dtheta_max, self.config.dtheta_max);
                Action { dpos, dtheta }
            }
        };
        state.phase = if remaining == 1 {
            Phase::Elevated(self.config.retract_steps)
        } else {
            Phase::Retracting(remaining - 1)
        };
        action
    }

    /// Advance the tolerance schedule by one emitted cutting action: hold
    /// while elevated, then decay linearly, landing on exactly zero.
    pub fn advance_schedule(&self, state: &mut PolicyState) {
        match state.phase {
            Phase::Forward => {}
            Phase::Retracting(_) => panic!("advance_schedule during retraction"),
            Phase::Elevated(n) => {
                if n > 1 {
                    state.phase = Phase::Elevated(n - 1);
                } else {
                    state.decay_rate = state.tolerance / self.config.decay_steps as Real;
                    state.phase = Phase::Decaying(self.config.decay_steps);
                }
            }
            Phase::Decaying(n) => {
                if n > 1 {
                    state.tolerance -= state.decay_rate;
                    state.phase = Phase::Decaying(n - 1);
                } else {
                    state.tolerance = 0.0;
                    state.phase = Phase::Forward;
                }
            }
        }
    }
}

/// Lowest y any occupied estimate cell reaches (scanning rows bottom-up).
fn lowest_extent(est_sdf: &SdfGrid) -> Real {
    let spec = est_sdf.spec;
    for iy in 0..spec.ny {
        let row = &est_sdf.values[iy * spec.nx..(iy + 1) * spec.nx];
        if row.iter().any(|v| *v < 0.0) {
            return spec.origin.y + (iy as Real + 0.5) * spec.cell;
        }
    }
    Real::INFINITY
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::rasterize_core_mask;
    use crate::geometry::grid::{sdf_from_mask, GridSpec};
    use crate::geometry::{gen_core, CoreFamily};
    use crate::scene::SceneConfig;
    use std::f64::consts::FRAC_PI_2;

    fn estimate_sdf_of(seed: u64) -> SdfGrid {
        let scene = SceneConfig::default();
        let spec = GridSpec::square(256, scene.domain, Vec2::new(0.0, 0.0));
        let core = gen_core(CoreFamily::Spline3, seed, scene.anchor);
        sdf_from_mask(&rasterize_core_mask(&core, &spec), spec)
    }

    #[test]
    fn far_from_the_core_the_knife_descends_straight() {
        let policy = Policy::variant(PolicyVariant::Adaptive);
        let sdf = estimate_sdf_of(7);
        let pose = KnifePose::new(Vec2::new(0.22, 0.20), FRAC_PI_2);
        let state = PolicyState::new(pose);
        let a = policy.next_action(&sdf, pose, &state).unwrap();
        let heading = a.dpos.normalize();
        let angle_from_down = heading.dot(&Vec2::new(0.0, -1.0)).clamp(-1.0, 1.0).acos();
        assert!(angle_from_down < 5.0_f64.to_radians(), "heading {heading:?}");
        assert_eq!(a.dtheta, 0.0);
    }

    #[test]
    fn every_action_has_fixed_step_and_bounded_rotation() {
        let policy = Policy::variant(PolicyVariant::Adaptive);
        let sdf = estimate_sdf_of(3);
        let mut state = PolicyState::new(KnifePose::new(Vec2::new(0.14, 0.19), FRAC_PI_2));
        let mut pose = state.initial_pose;
        for _ in 0..120 {
            let a = policy.next_action(&sdf, pose, &state).unwrap();
            assert!((a.dpos.norm() - policy.config.step_length).abs() < 1e-12);
            assert!(a.dtheta.abs() <= policy.config.dtheta_max + 1e-15);
            pose = KnifePose::new(pose.tip + a.dpos, pose.theta + a.dtheta);
            state.action_history.push(a);
            if pose.tip.y < 0.035 {
                break;
            }
        }
        assert!(pose.tip.y < 0.06, "the contour follower must make downward progress");
    }

    #[test]
    fn larger_tolerance_steers_to_larger_clearance() {
        let policy = Policy::variant(PolicyVariant::Adaptive);
        let sdf = estimate_sdf_of(21);
        // Engaged poses: inside the steering band for every tested
        // tolerance, on the working side of the core, above the board.
        let spec = sdf.spec;
        let mut probes = Vec::new();
        for iy in 0..spec.ny {
            for ix in 0..spec.nx {
                let p = spec.center(ix, iy);
                let d = sdf.values[iy * spec.nx + ix];
                if (0.012..=0.035).contains(&d) && p.x > 0.10 && (0.05..=0.15).contains(&p.y) {
                    probes.push(p);
                }
            }
        }
        assert!(probes.len() > 40, "need a spread of engaged probe poses");
        for tip in probes.into_iter().step_by(17) {
            let pose = KnifePose::new(tip, FRAC_PI_2);
            let mut clearances = Vec::new();
            for tol in [0.0, 0.003, 0.006, 0.009] {
                let mut state = PolicyState::new(pose);
                state.tolerance = tol;
                let a = policy.next_action(&sdf, pose, &state).unwrap();
                clearances.push(sdf.sample(pose.tip + a.dpos));
            }
            for w in clearances.windows(2) {
                assert!(
                    w[1] >= w[0] - 1e-12,
                    "clearance must be non-decreasing in tolerance: {clearances:?} at {tip:?}"
                );
            }
        }
    }

    #[test]
    fn collision_raises_tolerance_cumulatively() {
        let policy = Policy::variant(PolicyVariant::Adaptive);
        let mut state = PolicyState::new(KnifePose::new(Vec2::new(0.2, 0.2), FRAC_PI_2));
        policy.on_collision(&mut state);
        assert_eq!(state.tolerance, 0.005);
        assert_eq!(state.phase, Phase::Retracting(8));
        assert_eq!(state.collision_count, 1);
        // Mid-decay re-collision stacks on the current value.
        state.phase = Phase::Decaying(2);
        state.tolerance = 0.002;
        policy.on_collision(&mut state);
        assert!((state.tolerance - 0.007).abs() < 1e-15);
        assert_eq!(state.collision_count, 2);
    }

    #[test]
    fn schedule_holds_then_decays_to_exact_zero() {
        let policy = Policy::variant(PolicyVariant::Adaptive);
        let mut state = PolicyState::new(KnifePose::new(Vec2::new(0.2, 0.2), FRAC_PI_2));
        state.tolerance = 0.005;
        state.phase = Phase::Elevated(8);
        // Hold for exactly eight actions.
        for _ in 0..7 {
            policy.advance_schedule(&mut state);
            assert_eq!(state.tolerance, 0.005);
            assert!(matches!(state.phase, Phase::Elevated(_)));
        }
        policy.advance_schedule(&mut state);
        assert_eq!(state.phase, Phase::Decaying(5));
        assert_eq!(state.tolerance, 0.005);
        // Linear decay: 0.004, 0.003, 0.002, 0.001, 0.0 — landing exactly.
        let mut seen = Vec::new();
        while state.phase != Phase::Forward {
            policy.advance_schedule(&mut state);
            seen.push(state.tolerance);
        }
        assert_eq!(seen.len(), 5);
        for (i, tol) in seen.iter().enumerate().take(4) {
            assert!((tol - (0.004 - 0.001 * i as Real)).abs() < 1e-15);
        }
        assert_eq!(seen[4], 0.0);
        // Steady forward: nothing moves.
        policy.advance_schedule(&mut state);
        assert_eq!(state.tolerance, 0.0);
        assert_eq!(state.phase, Phase::Forward);
    }

    #[test]
    fn retraction_replays_history_exactly() {
        let policy = Policy::variant(PolicyVariant::Adaptive);
        let start = KnifePose::new(Vec2::new(0.15, 0.15), FRAC_PI_2);
        let mut state = PolicyState::new(start);
        let mut pose = start;
        // Eight synthetic forward actions with rotation.
        for i in 0..8 {
            let a = Action {
                dpos: Vec2::new(-0.0004 * i as Real, -0.0019),
                dtheta: 0.01 * (i as Real - 3.5),
            };
            pose = KnifePose::new(pose.tip + a.dpos, pose.theta + a.dtheta);
            state.action_history.push(a);
        }
        policy.on_collision(&mut state);
        while let Phase::Retracting(_) = state.phase {
            let a = policy.retract_action(&mut state, pose);
            pose = KnifePose::new(pose.tip + a.dpos, pose.theta + a.dtheta);
        }
        assert_eq!(state.phase, Phase::Elevated(8));
        assert!((pose.tip - start.tip).norm() < 1e-12);
        assert!((pose.theta - start.theta).abs() < 1e-12);
        assert!(state.action_history.is_empty());
    }

    #[test]
    fn short_history_retracts_toward_the_initial_pose() {
        let policy = Policy::variant(PolicyVariant::Adaptive);
        let start = KnifePose::new(Vec2::new(0.15, 0.15), FRAC_PI_2);
        let mut state = PolicyState::new(start);
        let a0 = Action { dpos: Vec2::new(0.0, -0.002), dtheta: 0.0 };
        let mut pose = KnifePose::new(start.tip + a0.dpos, start.theta);
        state.action_history.push(a0);
        policy.on_collision(&mut state);
        let mut steps = 0;
        while let Phase::Retracting(_) = state.phase {
            let a = policy.retract_action(&mut state, pose);
            pose = KnifePose::new(pose.tip + a.dpos, pose.theta + a.dtheta);
            steps += 1;
        }
        assert_eq!(steps, 8);
        // One true inverse, then degenerate steps that stop at the start.
        assert!((pose.tip - start.tip).norm() < 1e-12);
        assert!((pose.theta - start.theta).abs() < 1e-12);
    }

    #[test]
    fn variants_specialize_the_configuration() {
        let base = PolicyConfig::default();
        let non_adaptive = PolicyVariant::NonAdaptive.configure(base);
        assert_eq!(non_adaptive.tolerance_increment, 0.0);
        assert_eq!(non_adaptive.base_clearance, base.base_clearance);
        let greedy = PolicyVariant::Greedy.configure(base);
        assert_eq!(greedy.base_clearance, 0.0);
        assert_eq!(greedy.tolerance_increment, 0.0);
        assert!(greedy.dtheta_max > 3.0);
    }

    #[test]
    fn pose_outside_the_window_is_an_error() {
        let policy = Policy::variant(PolicyVariant::Adaptive);
        let sdf = estimate_sdf_of(2);
        let pose = KnifePose::new(Vec2::new(0.6, 0.6), FRAC_PI_2);
        let state = PolicyState::new(pose);
        assert!(policy.next_action(&sdf, pose, &state).is_err());
    }
}
