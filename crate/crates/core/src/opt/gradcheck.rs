//! Gradient verification: seeded small rollouts where the reverse-mode
//! gradient is compared against central finite differences of the same
//! objective.
//!
//! Scenes are deliberately small (a narrow soft block under the knife, well
//! under 500 particles on a 64x64 grid, 10 actions) so a full
//! finite-difference sweep over all 20 parameters stays cheap. Half the
//! scenes start the knife inside the collision margin of the core so the
//! pose-penalty seeds are exercised; headings and rotations are jittered so
//! no parameter sits at a symmetry point.

use serde::Serialize;

use crate::error::Result;
use crate::geometry::knife::KnifePose;
use crate::geometry::{gen_core, CoreFamily, CoreShape};
use crate::objectives::{CollisionLossConfig, LossWeights};
use crate::rng::Rng;
use crate::scene::SceneConfig;
use crate::sim::{init_scene, CoreBody, SimConfig, SimEnv};
use crate::{Real, Vec2};

use super::{planning_gradient, GradientMode, OptimizerConfig, Trajectory};

/// One verification scene: everything needed to rebuild it bit-for-bit.
#[derive(Debug, Clone)]
pub struct GradcheckCase {
    pub name: String,
    pub scene: SceneConfig,
    pub sim: SimConfig,
    pub core: CoreShape,
    pub init_seed: u64,
    pub traj: Trajectory,
}

/// Pass thresholds for one scene.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct GradcheckTolerances {
    pub rel_l2: Real,
    pub min_cosine: Real,
}

impl Default for GradcheckTolerances {
    fn default() -> Self {
        GradcheckTolerances { rel_l2: 1e-3, min_cosine: 0.999 }
    }
}

/// Deliberate corruption of the reverse gradient, used to prove the check
/// can fail. Never enabled outside tests and the dedicated CLI flag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FaultInjection {
    #[default]
    None,
    /// Negate every reverse-mode component.
    SignFlipReverse,
}

#[derive(Debug, Clone, Serialize)]
pub struct CaseReport {
    pub name: String,
    pub particle_count: usize,
    pub loss_total: Real,
    pub rel_l2: Real,
    pub cosine: Real,
    pub norm_reverse: Real,
    pub norm_fd: Real,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradcheckReport {
    pub tolerances: GradcheckTolerances,
    pub cases: Vec<CaseReport>,
    pub all_pass: bool,
}

/// The ten standard verification scenes for a master seed.
pub fn standard_cases(master_seed: u64) -> Vec<GradcheckCase> {
    let actions = 10;
    (0..10u64)
        .map(|i| {
            let mut rng = Rng::new(master_seed).stream("gradcheck").substream(i);
            let scene_base = SceneConfig::default();
            let core =
                gen_core(CoreFamily::Spline3, master_seed.wrapping_mul(1000) + i, scene_base.anchor);
            let (_, cmax) = core.bounds();
            // Even scenes start inside the collision margin, odd ones clear it.
            let offset = if i % 2 == 0 {
                rng.range(0.008, 0.014)
            } else {
                rng.range(0.021, 0.027)
            };
            let x0 = cmax.x + offset;
            let half_w = rng.range(0.010, 0.014);
            let height = rng.range(0.040, 0.050);
            let mut scene = scene_base;
            scene.soft_min = Vec2::new(x0 - half_w, scene.board_y);
            scene.soft_max = Vec2::new(x0 + half_w, scene.board_y + height);
            let mut sim = SimConfig::desk_planning();
            if i % 3 == 0 {
                sim.particles_per_cell = 4.0;
            }
            let theta0 = std::f64::consts::FRAC_PI_2 + rng.range(-0.15, 0.15);
            let pose = KnifePose::new(Vec2::new(x0, scene.start_y()), theta0);
            let mut params = Vec::with_capacity(2 * actions);
            for _ in 0..actions {
                params.push(-std::f64::consts::FRAC_PI_2 + rng.range(-0.25, 0.25));
                params.push(rng.range(-0.6, 0.6));
            }
            GradcheckCase {
                name: format!("scene-{i:02}"),
                scene,
                sim,
                core,
                init_seed: master_seed.wrapping_add(i * 7919),
                traj: Trajectory::new(pose, params),
            }
        })
        .collect()
}

/// Run one scene: reverse gradient vs central finite differences.
pub fn run_case(
    case: &GradcheckCase,
    fault: FaultInjection,
    tol: &GradcheckTolerances,
) -> Result<CaseReport> {
    let env = SimEnv::new(&case.sim, &case.scene, CoreBody::Polygon(&case.core))?;
    let mut init = init_scene(&case.core, &case.scene, &case.sim, case.init_seed, None)?;
    init.pose = case.traj.initial_pose;
    init.tip_path = vec![init.pose.tip];
    let weights = LossWeights::default();
    let col_cfg = CollisionLossConfig::default();
    let rev_cfg = OptimizerConfig {
        gradient_mode: GradientMode::ReverseMode,
        ..OptimizerConfig::default()
    };
    let (bd, mut g_rev) = planning_gradient(&case.traj, &env, &init, &weights, &col_cfg, &rev_cfg)?;
    if fault == FaultInjection::SignFlipReverse {
        for g in &mut g_rev {
            *g = -*g;
        }
    }
    let fd_cfg = OptimizerConfig { gradient_mode: GradientMode::FiniteDifference, ..rev_cfg };
    let (_, g_fd) = planning_gradient(&case.traj, &env, &init, &weights, &col_cfg, &fd_cfg)?;

    let norm = |g: &[Real]| g.iter().map(|x| x * x).sum::<Real>().sqrt();
    let norm_rev = norm(&g_rev);
    let norm_fd = norm(&g_fd);
    let diff: Real = g_rev
        .iter()
        .zip(&g_fd)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<Real>()
        .sqrt();
    let rel_l2 = if norm_fd > 0.0 { diff / norm_fd } else { diff };
    let dot: Real = g_rev.iter().zip(&g_fd).map(|(a, b)| a * b).sum();
    let cosine = if norm_rev < 1e-15 && norm_fd < 1e-15 {
        1.0
    } else if norm_rev < 1e-15 || norm_fd < 1e-15 {
        0.0
    } else {
        dot / (norm_rev * norm_fd)
    };
    Ok(CaseReport {
        name: case.name.clone(),
        particle_count: init.particle_count(),
        loss_total: bd.total,
        rel_l2,
        cosine,
        norm_reverse: norm_rev,
        norm_fd,
        pass: rel_l2 < tol.rel_l2 && cosine > tol.min_cosine,
    })
}

/// Run every scene and aggregate.
pub fn run_gradcheck(
    cases: &[GradcheckCase],
    fault: FaultInjection,
    tol: &GradcheckTolerances,
) -> Result<GradcheckReport> {
    let mut reports = Vec::with_capacity(cases.len());
    for case in cases {
        reports.push(run_case(case, fault, tol)?);
    }
    let all_pass = reports.iter().all(|r| r.pass);
    Ok(GradcheckReport { tolerances: *tol, cases: reports, all_pass })
}
