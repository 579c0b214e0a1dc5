//! Gradient-based trajectory optimization.
//!
//! A trajectory is a fixed 2 mm step size with free per-action heading and
//! rotation parameters. The planning objective combines a smooth cut-mass
//! surrogate, the collision penalty at every action endpoint, and the
//! knife's work, evaluated by rolling the soft-contact simulator; its
//! gradient comes from a hand-written reverse pass through the solver
//! (checkpointed over actions) or from central finite differences.

pub mod adjoint;
pub mod gradcheck;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::knife::KnifePose;
use crate::geometry::CoreShape;
use crate::objectives::{
    collision_loss, CollisionLossConfig, LossBreakdown, LossWeights,
};
use crate::scene::SceneConfig;
use crate::sim::contact::ContactModel;
use crate::sim::{cut, init_scene, SimConfig, SimEnv, SimState, StepRecord, START_STANDOFF};
use crate::{Real, Vec2};

/// Knife displacement per action, meters. Fixed by construction: headings
/// are free, step length is not.
pub const ACTION_STEP: Real = 0.002;

/// Per-action rotation bound, radians. The raw rotation parameter is
/// squashed through tanh so the bound can never be violated.
pub const DTHETA_MAX: Real = 0.1;

/// One knife move: a 2 mm displacement plus a bounded rotation.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Action {
    pub dpos: Vec2,
    pub dtheta: Real,
}

/// How [`planning_gradient`] differentiates the objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientMode {
    ReverseMode,
    FiniteDifference,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub iterations: usize,
    pub learning_rate: Real,
    pub adam_beta1: Real,
    pub adam_beta2: Real,
    pub adam_eps: Real,
    /// Actions between stored forward snapshots in the reverse pass.
    pub checkpoint_interval: usize,
    pub gradient_mode: GradientMode,
    /// Half-width of the smooth cut-mass ramp, meters.
    pub cut_width: Real,
    /// Central-difference step for the finite-difference mode, radians.
    /// Small enough that the probe rarely crosses a contact-branch kink,
    /// large enough that rounding noise stays forty-odd bits below the
    /// difference.
    pub fd_step: Real,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            iterations: 300,
            learning_rate: 1e-2,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            checkpoint_interval: 8,
            gradient_mode: GradientMode::ReverseMode,
            cut_width: 0.006,
            fd_step: 3e-5,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidConfig("learning_rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return Err(Error::InvalidConfig("adam betas must lie in [0, 1)".into()));
        }
        if self.checkpoint_interval == 0 {
            return Err(Error::InvalidConfig("checkpoint_interval must be at least 1".into()));
        }
        if !(self.cut_width > 0.0) || !(self.fd_step > 0.0) {
            return Err(Error::InvalidConfig("cut_width and fd_step must be positive".into()));
        }
        Ok(())
    }
}

/// Free parameters of a trajectory: per action a heading angle `phi` (the
/// displacement is `ACTION_STEP * (cos phi, sin phi)`) and a raw rotation
/// `u` (the rotation is `DTHETA_MAX * tanh(u)`).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trajectory {
    pub initial_pose: KnifePose,
    /// Interleaved `[phi_0, u_0, phi_1, u_1, ...]`.
    pub params: Vec<Real>,
}

impl Trajectory {
    pub fn new(initial_pose: KnifePose, params: Vec<Real>) -> Self {
        assert!(params.len() % 2 == 0, "params come in (phi, u) pairs");
        Trajectory { initial_pose, params }
    }

    pub fn action_count(&self) -> usize {
        self.params.len() / 2
    }

    pub fn action(&self, t: usize) -> Action {
        let phi = self.params[2 * t];
        let u = self.params[2 * t + 1];
        Action {
            dpos: ACTION_STEP * Vec2::new(phi.cos(), phi.sin()),
            dtheta: DTHETA_MAX * u.tanh(),
        }
    }

    pub fn actions(&self) -> Vec<Action> {
        (0..self.action_count()).map(|t| self.action(t)).collect()
    }

    /// Absolute poses, initial pose first (`action_count() + 1` entries).
    pub fn poses(&self) -> Vec<KnifePose> {
        let mut out = Vec::with_capacity(self.action_count() + 1);
        out.push(self.initial_pose);
        let mut pose = self.initial_pose;
        for t in 0..self.action_count() {
            let a = self.action(t);
            pose = pose.advanced(a.dpos, a.dtheta);
            out.push(pose);
        }
        out
    }
}

/// Straight-descent seed: the tip starts one standoff right of the core's
/// rightmost extent (clear of the collision margin), blade up, and descends
/// vertically in 2 mm actions until it reaches the board.
pub fn init_trajectory(scene: &SceneConfig, core: &CoreShape) -> Trajectory {
    let (_, cmax) = core.bounds();
    let x0 = cmax.x + START_STANDOFF;
    let y0 = scene.start_y();
    let pose = KnifePose::new(Vec2::new(x0, y0), std::f64::consts::FRAC_PI_2);
    let descent = y0 - scene.board_y;
    let n = (descent / ACTION_STEP).ceil() as usize;
    let mut params = Vec::with_capacity(2 * n);
    for _ in 0..n {
        params.push(-std::f64::consts::FRAC_PI_2);
        params.push(0.0);
    }
    Trajectory::new(pose, params)
}

/// Roll a trajectory through the simulator, one action per pose.
pub fn rollout(
    traj: &Trajectory,
    env: &SimEnv,
    init: &SimState,
) -> Result<(SimState, Vec<StepRecord>)> {
    let poses = traj.poses();
    let mut state = init.clone();
    let mut records = Vec::with_capacity(poses.len() - 1);
    for target in &poses[1..] {
        records.push(state.step(env, *target)?);
    }
    Ok((state, records))
}

/// Planning objective: smooth cut-mass surrogate (negated ratio), collision
/// penalty summed over action endpoints, and knife work, composed with the
/// shared loss weights. Evaluation metrics use the hard cut mass instead;
/// this smooth variant is what the gradient differentiates, in both modes.
pub fn planning_loss(
    traj: &Trajectory,
    env: &SimEnv,
    init: &SimState,
    weights: &LossWeights,
    col_cfg: &CollisionLossConfig,
    cut_width: Real,
) -> Result<LossBreakdown> {
    let (state, records) = rollout(traj, env, init)?;
    Ok(compose_planning_loss(traj, env, init, &state, &records, weights, col_cfg, cut_width))
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn compose_planning_loss(
    traj: &Trajectory,
    env: &SimEnv,
    init: &SimState,
    final_state: &SimState,
    records: &[StepRecord],
    weights: &LossWeights,
    col_cfg: &CollisionLossConfig,
    cut_width: Real,
) -> LossBreakdown {
    let poses = traj.poses();
    let tips: Vec<Vec2> = poses.iter().map(|p| p.tip).collect();
    let removed =
        cut::cut_mass_soft(&final_state.x, final_state.particle_mass, &tips, cut_width);
    let mass_term = -removed / init.total_mass();
    let collision: Real = poses[1..]
        .iter()
        .map(|p| collision_loss(p, &env.core, &env.scene.knife, col_cfg))
        .sum();
    let energy: Real = records.iter().map(|r| r.energy).sum();
    LossBreakdown::compose(mass_term, collision, energy, weights)
}

/// Value and gradient of [`planning_loss`] with respect to the free
/// parameters, by the configured mode. Reverse mode requires the soft
/// contact model (the hard projections are discontinuous in pose).
pub fn planning_gradient(
    traj: &Trajectory,
    env: &SimEnv,
    init: &SimState,
    weights: &LossWeights,
    col_cfg: &CollisionLossConfig,
    cfg: &OptimizerConfig,
) -> Result<(LossBreakdown, Vec<Real>)> {
    match cfg.gradient_mode {
        GradientMode::ReverseMode => {
            adjoint::loss_and_gradient(traj, env, init, weights, col_cfg, cfg)
        }
        GradientMode::FiniteDifference => {
            finite_difference_gradient(traj, env, init, weights, col_cfg, cfg)
        }
    }
}

fn finite_difference_gradient(
    traj: &Trajectory,
    env: &SimEnv,
    init: &SimState,
    weights: &LossWeights,
    col_cfg: &CollisionLossConfig,
    cfg: &OptimizerConfig,
) -> Result<(LossBreakdown, Vec<Real>)> {
    let base = planning_loss(traj, env, init, weights, col_cfg, cfg.cut_width)?;
    let h = cfg.fd_step;
    let mut grad = vec![0.0; traj.params.len()];
    let mut probe = traj.clone();
    for i in 0..traj.params.len() {
        probe.params[i] = traj.params[i] + h;
        let hi = planning_loss(&probe, env, init, weights, col_cfg, cfg.cut_width)?;
        probe.params[i] = traj.params[i] - h;
        let lo = planning_loss(&probe, env, init, weights, col_cfg, cfg.cut_width)?;
        probe.params[i] = traj.params[i];
        grad[i] = (hi.total - lo.total) / (2.0 * h);
    }
    Ok((base, grad))
}

/// Result of [`optimize`]: the best trajectory seen, the loss recorded at
/// every iterate (index 0 is the seed, one entry per iteration thereafter),
/// and which iterate won.
#[derive(Debug, Clone)]
pub struct OptimizeResult {
    pub trajectory: Trajectory,
    pub history: Vec<LossBreakdown>,
    pub best_iteration: usize,
}

/// Adam descent on the trajectory parameters. The returned trajectory is
/// the best iterate by total loss, never worse than the seed. A simulation
/// failure records an infinite loss for that iterate and stops the descent
/// (the dynamics are deterministic, so retrying the same parameters cannot
/// recover); the best iterate so far is still returned.
pub fn optimize(
    traj0: &Trajectory,
    env: &SimEnv,
    init: &SimState,
    weights: &LossWeights,
    col_cfg: &CollisionLossConfig,
    cfg: &OptimizerConfig,
) -> Result<OptimizeResult> {
    cfg.validate()?;
    col_cfg.validate()?;
    weights.validate()?;
    let n = traj0.params.len();
    let mut params = traj0.params.clone();
    let mut m = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut history = Vec::with_capacity(cfg.iterations + 1);
    let mut best: Option<(Real, Vec<Real>, usize)> = None;

    let inf = LossBreakdown {
        mass_term: Real::INFINITY,
        collision_term: Real::INFINITY,
        energy_term: Real::INFINITY,
        total: Real::INFINITY,
    };

    for iter in 0..cfg.iterations {
        let current = Trajectory::new(traj0.initial_pose, params.clone());
        let (bd, grad) = match planning_gradient(&current, env, init, weights, col_cfg, cfg) {
            Ok(r) => r,
            Err(_) => {
                history.push(inf);
                break;
            }
        };
        history.push(bd);
        if best.as_ref().map_or(true, |(b, _, _)| bd.total < *b) {
            best = Some((bd.total, params.clone(), iter));
        }
        let t = (iter + 1) as Real;
        let bias1 = 1.0 - cfg.adam_beta1.powf(t);
        let bias2 = 1.0 - cfg.adam_beta2.powf(t);
        for i in 0..n {
            m[i] = cfg.adam_beta1 * m[i] + (1.0 - cfg.adam_beta1) * grad[i];
            v[i] = cfg.adam_beta2 * v[i] + (1.0 - cfg.adam_beta2) * grad[i] * grad[i];
            let m_hat = m[i] / bias1;
            let v_hat = v[i] / bias2;
            params[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.adam_eps);
        }
    }

    // Score the final iterate too, so the last update can win.
    let final_traj = Trajectory::new(traj0.initial_pose, params.clone());
    match planning_loss(&final_traj, env, init, weights, col_cfg, cfg.cut_width) {
        Ok(bd) => {
            history.push(bd);
            if best.as_ref().map_or(true, |(b, _, _)| bd.total < *b) {
                best = Some((bd.total, params, history.len() - 1));
            }
        }
        Err(_) => history.push(inf),
    }

    let (_, best_params, best_iteration) =
        best.ok_or_else(|| Error::InvalidConfig("optimizer produced no finite iterate".into()))?;
    Ok(OptimizeResult {
        trajectory: Trajectory::new(traj0.initial_pose, best_params),
        history,
        best_iteration,
    })
}

/// One optimized trajectory for one core, with full provenance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Demonstration {
    pub core_ref: String,
    pub initial_pose: KnifePose,
    pub actions: Vec<Action>,
    pub loss_history: Vec<LossBreakdown>,
    pub breakdown_final: LossBreakdown,
    pub success: bool,
    pub error: Option<String>,
}

/// Optimize every core in turn with the true core shape in the loop (the
/// planner has full knowledge). Failures are flagged, never dropped, so the
/// output always has one record per input core.
#[allow(clippy::too_many_arguments)]
pub fn collect_demonstrations(
    cores: &[(String, CoreShape)],
    scene: &SceneConfig,
    sim_cfg: &SimConfig,
    weights: &LossWeights,
    col_cfg: &CollisionLossConfig,
    opt_cfg: &OptimizerConfig,
    seed: u64,
) -> Vec<Demonstration> {
    assert_eq!(
        sim_cfg.contact_model,
        ContactModel::Soft,
        "demonstrations are planned with the soft contact model"
    );
    cores
        .iter()
        .map(|(name, core)| {
            let traj0 = init_trajectory(scene, core);
            let attempt = (|| -> Result<(Trajectory, Vec<LossBreakdown>, LossBreakdown)> {
                let env = SimEnv::new(sim_cfg, scene, crate::sim::CoreBody::Polygon(core))?;
                let init = init_scene(core, scene, sim_cfg, seed, None)?;
                let res = optimize(&traj0, &env, &init, weights, col_cfg, opt_cfg)?;
                let final_bd = res.history[res.best_iteration];
                Ok((res.trajectory, res.history, final_bd))
            })();
            match attempt {
                Ok((traj, history, final_bd)) => Demonstration {
                    core_ref: name.clone(),
                    initial_pose: traj.initial_pose,
                    actions: traj.actions(),
                    loss_history: history,
                    breakdown_final: final_bd,
                    success: true,
                    error: None,
                },
                Err(e) => Demonstration {
                    core_ref: name.clone(),
                    initial_pose: traj0.initial_pose,
                    actions: traj0.actions(),
                    loss_history: Vec::new(),
                    breakdown_final: LossBreakdown {
                        mass_term: Real::INFINITY,
                        collision_term: Real::INFINITY,
                        energy_term: Real::INFINITY,
                        total: Real::INFINITY,
                    },
                    success: false,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect()
}
