//! The three planning objectives and their weighted total: removed-mass
//! reward, core-collision penalty, and knife work. The collision penalty is
//! a polynomial hinge on penetration depth relative to a safety margin,
//! sampled along the cutting edge; its pose gradient is closed-form.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::knife::{KnifeGeometry, KnifePose};
use crate::sim::{CoreBody, SimEnv, SimState, StepRecord};
use crate::{Real, Vec2};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CollisionLossConfig {
    /// Sample points along the cutting edge (N).
    pub n_samples: usize,
    /// Hinge exponent (k).
    pub exponent: u32,
    /// Safety margin d-hat, meters: penalized band outside the core.
    pub safety_margin: Real,
}

impl Default for CollisionLossConfig {
    fn default() -> Self {
        CollisionLossConfig { n_samples: 5, exponent: 4, safety_margin: 0.02 }
    }
}

impl CollisionLossConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples < 1 {
            return Err(Error::InvalidConfig("n_samples must be at least 1".into()));
        }
        if self.exponent < 1 {
            return Err(Error::InvalidConfig("exponent must be at least 1".into()));
        }
        if self.safety_margin < 0.0 {
            return Err(Error::InvalidConfig("safety_margin must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    pub eta_col: Real,
    pub eta_e: Real,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { eta_col: 2e4, eta_e: 0.15 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if self.eta_col < 0.0 || self.eta_e < 0.0 {
            return Err(Error::InvalidConfig("loss weights must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LossBreakdown {
    /// Negated cut-mass ratio (minimizing this maximizes yield).
    pub mass_term: Real,
    pub collision_term: Real,
    /// Joules.
    pub energy_term: Real,
    pub total: Real,
}

impl LossBreakdown {
    /// The only constructor: keeps `total` exactly equal to the weighted sum.
    pub fn compose(mass: Real, collision: Real, energy: Real, w: &LossWeights) -> Self {
        LossBreakdown {
            mass_term: mass,
            collision_term: collision,
            energy_term: energy,
            total: mass + w.eta_col * collision + w.eta_e * energy,
        }
    }
}

/// Edge sample positions with their arclength parameters.
fn edge_samples_t(knife: &KnifeGeometry, pose: &KnifePose, n: usize) -> Vec<(Vec2, Real)> {
    let dir = pose.blade_dir();
    if n == 1 {
        return vec![(pose.tip, 0.0)];
    }
    (0..n)
        .map(|i| {
            let t = knife.blade_length * i as Real / (n - 1) as Real;
            (pose.tip + dir * t, t)
        })
        .collect()
}

/// Collision penalty at one pose: sum over edge samples of
/// `max(penetration + margin, 0)^k`, where penetration is the negated core
/// SDF. Zero exactly when every sample clears the core by the margin.
pub fn collision_loss(
    pose: &KnifePose,
    core: &CoreBody,
    knife: &KnifeGeometry,
    cfg: &CollisionLossConfig,
) -> Real {
    edge_samples_t(knife, pose, cfg.n_samples)
        .into_iter()
        .map(|(p, _)| {
            let depth = -core.sdf(p);
            let h = (depth + cfg.safety_margin).max(0.0);
            h.powi(cfg.exponent as i32)
        })
        .sum()
}

/// Collision penalty with its gradient wrt the pose (tip, theta).
pub fn collision_loss_grad(
    pose: &KnifePose,
    core: &CoreBody,
    knife: &KnifeGeometry,
    cfg: &CollisionLossConfig,
) -> (Real, Vec2, Real) {
    let dir = pose.blade_dir();
    let perp = Vec2::new(-dir.y, dir.x);
    let mut loss = 0.0;
    let mut d_tip = Vec2::zeros();
    let mut d_theta = 0.0;
    for (p, t) in edge_samples_t(knife, pose, cfg.n_samples) {
        let depth = -core.sdf(p);
        let h = depth + cfg.safety_margin;
        if h <= 0.0 {
            continue;
        }
        loss += h.powi(cfg.exponent as i32);
        // d h / d p = -grad sdf; sample moves as tip + t * dir(theta).
        let coeff = cfg.exponent as Real * h.powi(cfg.exponent as i32 - 1);
        let dh_dp = -core.gradient(p);
        d_tip += coeff * dh_dp;
        d_theta += coeff * dh_dp.dot(&(t * perp));
    }
    (loss, d_tip, d_theta)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnergySummary {
    /// Joules, sum over steps.
    pub total: Real,
    /// Largest single-step energy, J (0 for an empty episode).
    pub max_step: Real,
    pub per_step: Vec<Real>,
}

pub fn energy_objective(records: &[StepRecord]) -> EnergySummary {
    let per_step: Vec<Real> = records.iter().map(|r| r.energy).collect();
    EnergySummary {
        total: per_step.iter().sum(),
        max_step: per_step.iter().cloned().fold(0.0, Real::max),
        per_step,
    }
}

/// Reference evaluation of the full objective: rolls the simulator along the
/// pose sequence from `init` and composes the weighted total. The mass term
/// uses the hard (metric) classification. Numerical failures propagate with
/// the partial breakdown in the message.
pub fn total_loss(
    poses: &[KnifePose],
    env: &SimEnv,
    init: &SimState,
    weights: &LossWeights,
    col_cfg: &CollisionLossConfig,
) -> Result<LossBreakdown> {
    weights.validate()?;
    col_cfg.validate()?;
    let mut state = init.clone();
    let mut collision = 0.0;
    let mut energy = 0.0;
    for pose in poses {
        match state.step(env, *pose) {
            Ok(rec) => {
                energy += rec.energy;
                collision += collision_loss(pose, &env.core, &env.scene.knife, col_cfg);
            }
            Err(Error::NumericalFailure { step, what }) => {
                let partial = LossBreakdown::compose(
                    -state.removed_mass() / state.total_mass(),
                    collision,
                    energy,
                    weights,
                );
                return Err(Error::NumericalFailure {
                    step,
                    what: format!("{what}; partial loss {partial:?}"),
                });
            }
            Err(e) => return Err(e),
        }
    }
    let mass_term = -state.removed_mass() / state.total_mass();
    Ok(LossBreakdown::compose(mass_term, collision, energy, weights))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{gen_core, CoreFamily, CoreShape};
    use crate::scene::SceneConfig;
    use crate::sim::{init_scene, SimConfig, SimEnv};
    use approx::assert_relative_eq;

    /// Axis-aligned rectangle core with exact SDF on its right edge.
    fn rect_core(x0: Real, x1: Real, y0: Real, y1: Real) -> CoreShape {
        CoreShape {
            family: CoreFamily::Rectangle,
            seed: 0,
            params: vec![x1 - x0, y1 - y0],
            anchor: Vec2::new(x1, y0),
            contour: vec![
                Vec2::new(x0, y0),
                Vec2::new(x1, y0),
                Vec2::new(x1, y1),
                Vec2::new(x0, y1),
            ],
        }
    }

    #[test]
    fn clear_knife_has_exactly_zero_loss() {
        let knife = KnifeGeometry::default();
        let core = rect_core(0.06, 0.10, 0.03, 0.10);
        let cfg = CollisionLossConfig::default();
        // Tip 2.1 cm right of the right face, blade pointing away.
        let pose = KnifePose::new(Vec2::new(0.121, 0.06), 0.0);
        assert_eq!(collision_loss(&pose, &CoreBody::Polygon(&core), &knife, &cfg), 0.0);
    }

    #[test]
    fn sample_on_surface_contributes_margin_to_the_fourth() {
        let knife = KnifeGeometry::default();
        let core = rect_core(0.06, 0.10, 0.03, 0.10);
        let cfg = CollisionLossConfig::default();
        // Tip exactly on the right face mid-height, blade pointing +x away
        // from the core: the remaining samples sit beyond the margin.
        let pose = KnifePose::new(Vec2::new(0.10, 0.06), 0.0);
        let loss = collision_loss(&pose, &CoreBody::Polygon(&core), &knife, &cfg);
        assert_relative_eq!(loss, 0.02f64.powi(4), max_relative = 1e-12);
        assert_relative_eq!(loss, 1.6e-7, max_relative = 1e-12);
    }

    #[test]
    fn loss_grows_monotonically_approaching_the_core() {
        let knife = KnifeGeometry::default();
        let core = gen_core(CoreFamily::Spline3, 9, Vec2::new(0.09, 0.03));
        let cfg = CollisionLossConfig::default();
        let body = CoreBody::Polygon(&core);
        let mut prev = -1.0;
        for k in 0..60 {
            // Vertical blade sliding left toward/into the core front.
            let x = 0.16 - 0.0015 * k as Real;
            let pose = KnifePose::new(Vec2::new(x, 0.05), std::f64::consts::FRAC_PI_2);
            let loss = collision_loss(&pose, &body, &knife, &cfg);
            assert!(
                loss >= prev - 1e-15,
                "loss decreased moving inward: {loss} < {prev} at x={x}"
            );
            prev = loss;
        }
        assert!(prev > 0.0, "sweep ended inside the penalized band");
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let knife = KnifeGeometry::default();
        let core = gen_core(CoreFamily::Spline2, 5, Vec2::new(0.09, 0.03));
        let cfg = CollisionLossConfig::default();
        let body = CoreBody::Polygon(&core);
        let h = 1e-7;
        for (tx, ty, th) in [
            (0.105, 0.05, std::f64::consts::FRAC_PI_2),
            (0.095, 0.08, 1.9),
            (0.11, 0.04, 1.2),
        ] {
            let pose = KnifePose::new(Vec2::new(tx, ty), th);
            let (loss, d_tip, d_theta) = collision_loss_grad(&pose, &body, &knife, &cfg);
            assert!(loss > 0.0, "probe poses must engage the margin band");
            let f = |p: KnifePose| collision_loss(&p, &body, &knife, &cfg);
            let fd_x = (f(KnifePose::new(Vec2::new(tx + h, ty), th))
                - f(KnifePose::new(Vec2::new(tx - h, ty), th)))
                / (2.0 * h);
            let fd_y = (f(KnifePose::new(Vec2::new(tx, ty + h), th))
                - f(KnifePose::new(Vec2::new(tx, ty - h), th)))
                / (2.0 * h);
            let fd_t = (f(KnifePose::new(Vec2::new(tx, ty), th + h))
                - f(KnifePose::new(Vec2::new(tx, ty), th - h)))
                / (2.0 * h);
            assert_relative_eq!(d_tip.x, fd_x, max_relative = 1e-4, epsilon = 1e-12);
            assert_relative_eq!(d_tip.y, fd_y, max_relative = 1e-4, epsilon = 1e-12);
            assert_relative_eq!(d_theta, fd_t, max_relative = 1e-4, epsilon = 1e-12);
        }
    }

    #[test]
    fn energy_summary_totals_and_max() {
        assert_eq!(energy_objective(&[]).total, 0.0);
        assert_eq!(energy_objective(&[]).max_step, 0.0);
        let rec = |e: Real| StepRecord {
            pose_before: KnifePose::new(Vec2::zeros(), 0.0),
            pose_after: KnifePose::new(Vec2::zeros(), 0.0),
            substeps: 1,
            energy: e,
            contacted_particle_count: 0,
            knife_core_min_sdf: 1.0,
            removed_mass_running: 0.0,
            max_speed: 0.0,
        };
        let summary = energy_objective(&[rec(0.1), rec(0.2), rec(0.3)]);
        assert_relative_eq!(summary.total, 0.6);
        assert_relative_eq!(summary.max_step, 0.3);
        assert_eq!(summary.per_step.len(), 3);
    }

    #[test]
    fn non_interacting_trajectory_scores_zero_everywhere() {
        let sc = SceneConfig::default();
        let cfg = SimConfig { gravity: 0.0, ..SimConfig::desk_eval() };
        let core = gen_core(CoreFamily::Spline3, 1, sc.anchor);
        let env = SimEnv::new(&cfg, &sc, CoreBody::Polygon(&core)).unwrap();
        // Start right of the silhouette, beyond the grid stencil plus the
        // inflated blade radius, and descend without touching anything.
        let init = init_scene(&core, &sc, &cfg, 1, Some(sc.soft_max.x + 0.006)).unwrap();
        let poses: Vec<KnifePose> = (1..=5)
            .map(|k| {
                KnifePose::new(
                    init.pose.tip + Vec2::new(0.0, -0.002 * k as Real),
                    init.pose.theta,
                )
            })
            .collect();
        let breakdown = total_loss(
            &poses,
            &env,
            &init,
            &LossWeights::default(),
            &CollisionLossConfig::default(),
        )
        .unwrap();
        assert_eq!(breakdown.mass_term, 0.0);
        assert_eq!(breakdown.collision_term, 0.0);
        assert_eq!(breakdown.energy_term, 0.0);
        assert_eq!(breakdown.total, 0.0);
    }

    #[test]
    fn zero_weights_reduce_total_to_mass_term() {
        let breakdown = LossBreakdown::compose(-0.4, 3.0, 7.0, &LossWeights { eta_col: 0.0, eta_e: 0.0 });
        assert_eq!(breakdown.total, breakdown.mass_term);
        let w = LossWeights::default();
        let b = LossBreakdown::compose(-0.5, 2e-7, 1.25, &w);
        assert_eq!(b.total, b.mass_term + w.eta_col * b.collision_term + w.eta_e * b.energy_term);
    }

    #[test]
    fn rapid_rotation_spends_more_peak_energy_than_straight_slicing() {
        let sc = SceneConfig::default();
        let cfg = SimConfig::desk_eval();
        let core = gen_core(CoreFamily::Spline3, 6, sc.anchor);
        let env = SimEnv::new(&cfg, &sc, CoreBody::Polygon(&core)).unwrap();
        let start_x = core.bounds().1.x + 0.03;
        let run = |wiggle: Real| {
            let mut state = init_scene(&core, &sc, &cfg, 6, Some(start_x)).unwrap();
            let mut records = Vec::new();
            for k in 0..45 {
                let dtheta = if k > 12 { wiggle * if k % 2 == 0 { 1.0 } else { -1.0 } } else { 0.0 };
                let target = KnifePose::new(
                    state.pose.tip + Vec2::new(0.0, -0.002),
                    state.pose.theta + dtheta,
                );
                records.push(state.step(&env, target).unwrap());
            }
            energy_objective(&records)
        };
        let straight = run(0.0);
        let twisty = run(0.1);
        assert!(
            twisty.max_step > straight.max_step,
            "rotation peak {} vs straight peak {}",
            twisty.max_step,
            straight.max_step
        );
    }
}
