//! Closed-loop cutting episodes: act, detect collision, retract,
//! re-estimate, re-plan; plus termination logic, per-episode metrics and
//! multi-variant evaluation.
//!
//! The simulation always runs against the true core; the policy only ever
//! sees the estimator's output. A collision is sensed when the cutting
//! edge's minimum SDF against the true core drops below zero during an
//! action, at which point the action is bisected down to sub-cell contact
//! depth, the knife retraces its history, and the estimate is refreshed
//! from the accumulated evidence before cutting resumes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{
    build_evidence, rasterize_core_mask, CoreEstimate, Estimator, SensedStep, DEFAULT_THRESHOLD,
    ESTIMATE_GRID,
};
use crate::geometry::grid::{sdf_from_mask, GridSpec};
use crate::geometry::knife::KnifePose;
use crate::geometry::{CoreShape, gen_core, CoreFamily};
use crate::opt::Action;
use crate::policy::{Phase, Policy, PolicyState, PolicyVariant};
use crate::scene::SceneConfig;
use crate::sim::{cut, init_scene, CoreBody, SimConfig, SimEnv, DETECT_SAMPLES};
use crate::{Real, Vec2};

/// Episode failure thresholds.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EpisodeLimits {
    pub max_collisions: usize,
    /// Cap on the energy of any single step, joules.
    pub max_step_energy: Real,
}

impl Default for EpisodeLimits {
    fn default() -> Self {
        EpisodeLimits { max_collisions: 10, max_step_energy: 3.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpisodeStatus {
    Completed,
    FailedCollisions,
    FailedEnergy,
    NumericalFailure,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    Forward,
    Retract,
}

/// A sensed knife-core contact: which committed step, where.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CollisionEvent {
    /// Index into the committed action log.
    pub step: usize,
    pub point: Vec2,
}

/// Full episode log plus outcome.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub status: EpisodeStatus,
    /// Pose before any action, then after each committed action.
    pub poses: Vec<KnifePose>,
    pub actions: Vec<Action>,
    pub kinds: Vec<StepKind>,
    pub collision_events: Vec<CollisionEvent>,
    pub step_energies: Vec<Real>,
    pub cut_mass_ratio: Real,
    /// Initial estimate plus one snapshot per refresh.
    pub estimates: Vec<CoreEstimate>,
    pub forward_step_count: usize,
}

/// Table-row metrics for one episode.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Metrics {
    pub completion: Real,
    pub cut_mass_ratio: Real,
    /// Collisions per forward step.
    pub collision_ratio: Real,
    /// Mean energy over forward steps, joules.
    pub avg_energy: Real,
    /// Peak energy over all steps, joules.
    pub max_energy: Real,
}

/// Anything that can turn collision evidence into a core estimate.
pub trait CoreEstimator {
    fn estimate(&self, evidence: &crate::estimator::CollisionEvidence) -> Result<CoreEstimate>;
}

impl CoreEstimator for Estimator {
    fn estimate(&self, evidence: &crate::estimator::CollisionEvidence) -> Result<CoreEstimate> {
        Estimator::estimate(self, evidence)
    }
}

/// Ground-truth estimator for ablations: always returns the true core mask.
pub struct OracleEstimator<'a> {
    pub core: &'a CoreShape,
    pub window: GridSpec,
}

impl CoreEstimator for OracleEstimator<'_> {
    fn estimate(&self, _evidence: &crate::estimator::CollisionEvidence) -> Result<CoreEstimate> {
        let mask = rasterize_core_mask(self.core, &self.window);
        let probability: Vec<Real> = mask.iter().map(|m| if *m { 1.0 } else { 0.0 }).collect();
        let sdf = sdf_from_mask(&mask, self.window);
        Ok(CoreEstimate {
            window: self.window,
            probability,
            mask,
            sdf,
            threshold_used: DEFAULT_THRESHOLD,
            surviving_candidates: 1,
        })
    }
}

/// Compose an action onto a pose. The single definition shared by episode
/// execution and replay, so logged actions reproduce poses bit-exactly.
pub fn apply_action(pose: KnifePose, action: &Action) -> KnifePose {
    KnifePose::new(pose.tip + action.dpos, pose.theta + action.dtheta)
}

/// Contact depth below which a bisected collision step is committed.
const CONTACT_DEPTH: Real = 0.2e-3;
/// Bisection iterations for collision truncation.
const MAX_BISECTIONS: usize = 6;

/// The deepest-penetrating cutting-edge sample against the true core.
fn contact_point(env: &SimEnv, pose: &KnifePose) -> Vec2 {
    env.scene
        .knife
        .edge_samples(pose, DETECT_SAMPLES)
        .into_iter()
        .min_by(|a, b| env.core.sdf(*a).partial_cmp(&env.core.sdf(*b)).unwrap())
        .expect("edge always has samples")
}

/// Run one closed-loop episode of the policy against a hidden core.
pub fn run_episode(
    core: &CoreShape,
    scene: &SceneConfig,
    cfg: &SimConfig,
    policy: &Policy,
    estimator: &dyn CoreEstimator,
    limits: &EpisodeLimits,
    seed: u64,
) -> Result<EpisodeResult> {
    run_episode_from(core, scene, cfg, policy, estimator, limits, seed, None)
}

/// [`run_episode`] with an explicit start-x override (ablation hook;
/// behavior is otherwise identical).
#[allow(clippy::too_many_arguments)]
pub fn run_episode_from(
    core: &CoreShape,
    scene: &SceneConfig,
    cfg: &SimConfig,
    policy: &Policy,
    estimator: &dyn CoreEstimator,
    limits: &EpisodeLimits,
    seed: u64,
    start_x: Option<Real>,
) -> Result<EpisodeResult> {
    let mut sim = init_scene(core, scene, cfg, seed, start_x)?;
    let env = SimEnv::new(cfg, scene, CoreBody::Polygon(core))?;
    let window = GridSpec::square(ESTIMATE_GRID, scene.domain, Vec2::new(0.0, 0.0));
    let knife = &scene.knife;
    let step_len = policy.config.step_length;
    let done_height = scene.board_y + 0.5 * step_len;
    let total_mass = sim.total_mass();

    let cap = (scene.domain / step_len).ceil() as usize * (1 + limits.max_collisions)
        + (limits.max_collisions + 1) * policy.config.retract_steps;

    let mut state = PolicyState::new(sim.pose);
    let mut sensed: Vec<SensedStep> = Vec::new();
    let mut estimates = Vec::new();
    let mut est_sdf = {
        let est = estimator.estimate(&build_evidence(&[], knife, core, window))?;
        let sdf = est.sdf.clone();
        estimates.push(est);
        sdf
    };

    let mut poses = vec![sim.pose];
    let mut actions: Vec<Action> = Vec::new();
    let mut kinds = Vec::new();
    let mut step_energies = Vec::new();
    let mut collision_events = Vec::new();
    // Tips of committed forward actions not undone by retraction; with the
    // initial tip this is the net cutting trajectory.
    let mut net_tips: Vec<Vec2> = Vec::new();
    let mut forward_step_count = 0usize;
    let mut status = None;

    while status.is_none() {
        if sim.pose.tip.y <= done_height {
            status = Some(EpisodeStatus::Completed);
            break;
        }
        if actions.len() >= cap {
            return Err(Error::StepCapExceeded { cap });
        }

        if let Phase::Retracting(_) = state.phase {
            let had_history = !state.action_history.is_empty();
            let action = policy.retract_action(&mut state, sim.pose);
            let target = apply_action(sim.pose, &action);
            let rec = match sim.step(&env, target) {
                Ok(rec) => rec,
                Err(Error::NumericalFailure { .. }) => {
                    status = Some(EpisodeStatus::NumericalFailure);
                    break;
                }
                Err(e) => return Err(e),
            };
            actions.push(action);
            kinds.push(StepKind::Retract);
            poses.push(sim.pose);
            step_energies.push(rec.energy);
            if had_history {
                net_tips.pop();
            }
            // Retraction sweeps may graze the contact; only clean sweeps
            // feed the free-space evidence.
            if rec.knife_core_min_sdf >= 0.0 {
                sensed.push(SensedStep {
                    pose_before: rec.pose_before,
                    pose_after: rec.pose_after,
                    min_sdf: rec.knife_core_min_sdf,
                });
            }
            if rec.energy > limits.max_step_energy {
                status = Some(EpisodeStatus::FailedEnergy);
                break;
            }
            if matches!(state.phase, Phase::Elevated(_)) {
                let est = estimator.estimate(&build_evidence(&sensed, knife, core, window))?;
                est_sdf = est.sdf.clone();
                estimates.push(est);
            }
            continue;
        }

        let pose0 = sim.pose;
        let action = policy.next_action(&est_sdf, pose0, &state)?;
        let snapshot = sim.clone();
        let rec = match sim.step(&env, apply_action(pose0, &action)) {
            Ok(rec) => rec,
            Err(Error::NumericalFailure { .. }) => {
                status = Some(EpisodeStatus::NumericalFailure);
                break;
            }
            Err(e) => return Err(e),
        };

        if rec.knife_core_min_sdf < 0.0 {
            // Contact: bisect the action scale until the committed pose
            // just touches, keeping the colliding (shallow) end.
            let mut committed_action = action;
            let mut committed_rec = rec;
            let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
            for _ in 0..MAX_BISECTIONS {
                if committed_rec.knife_core_min_sdf.abs() < CONTACT_DEPTH {
                    break;
                }
                let mid = 0.5 * (lo + hi);
                let probe_action =
                    Action { dpos: action.dpos * mid, dtheta: action.dtheta * mid };
                let mut probe = snapshot.clone();
                let prec = match probe.step(&env, apply_action(pose0, &probe_action)) {
                    Ok(prec) => prec,
                    Err(Error::NumericalFailure { .. }) => {
                        status = Some(EpisodeStatus::NumericalFailure);
                        break;
                    }
                    Err(e) => return Err(e),
                };
                if prec.knife_core_min_sdf < 0.0 {
                    hi = mid;
                    committed_action = probe_action;
                    committed_rec = prec;
                    sim = probe;
                } else {
                    lo = mid;
                }
            }
            if status.is_some() {
                break;
            }
            actions.push(committed_action);
            kinds.push(StepKind::Forward);
            poses.push(sim.pose);
            step_energies.push(committed_rec.energy);
            net_tips.push(sim.pose.tip);
            forward_step_count += 1;
            state.action_history.push(committed_action);
            sensed.push(SensedStep {
                pose_before: committed_rec.pose_before,
                pose_after: committed_rec.pose_after,
                min_sdf: committed_rec.knife_core_min_sdf,
            });
            collision_events
                .push(CollisionEvent { step: actions.len() - 1, point: contact_point(&env, &sim.pose) });
            policy.on_collision(&mut state);
            if committed_rec.energy > limits.max_step_energy {
                status = Some(EpisodeStatus::FailedEnergy);
            } else if state.collision_count > limits.max_collisions {
                status = Some(EpisodeStatus::FailedCollisions);
            }
        } else {
            actions.push(action);
            kinds.push(StepKind::Forward);
            poses.push(sim.pose);
            step_energies.push(rec.energy);
            net_tips.push(sim.pose.tip);
            forward_step_count += 1;
            state.action_history.push(action);
            sensed.push(SensedStep {
                pose_before: rec.pose_before,
                pose_after: rec.pose_after,
                min_sdf: rec.knife_core_min_sdf,
            });
            policy.advance_schedule(&mut state);
            if rec.energy > limits.max_step_energy {
                status = Some(EpisodeStatus::FailedEnergy);
            }
        }
    }

    // Net cutting trajectory: initial tip plus surviving forward tips.
    let mut net_path = Vec::with_capacity(net_tips.len() + 1);
    net_path.push(poses[0].tip);
    net_path.extend_from_slice(&net_tips);
    let removed = cut::cut_mass_hard(&sim.x, sim.particle_mass, &net_path);
    let cut_mass_ratio = if removed.is_finite() { (removed / total_mass).clamp(0.0, 1.0) } else { 0.0 };

    Ok(EpisodeResult {
        status: status.expect("loop exits only with a status"),
        poses,
        actions,
        kinds,
        collision_events,
        step_energies,
        cut_mass_ratio,
        estimates,
        forward_step_count,
    })
}

/// Re-execute a logged action sequence deterministically; returns the pose
/// after each action plus per-step energy and sensed clearance.
pub fn replay_episode(
    core: &CoreShape,
    scene: &SceneConfig,
    cfg: &SimConfig,
    seed: u64,
    actions: &[Action],
) -> Result<(Vec<KnifePose>, Vec<Real>, Vec<Real>)> {
    let mut sim = init_scene(core, scene, cfg, seed, None)?;
    let env = SimEnv::new(cfg, scene, CoreBody::Polygon(core))?;
    let mut poses = vec![sim.pose];
    let mut energies = Vec::new();
    let mut clearances = Vec::new();
    for action in actions {
        let rec = sim.step(&env, apply_action(sim.pose, action))?;
        poses.push(sim.pose);
        energies.push(rec.energy);
        clearances.push(rec.knife_core_min_sdf);
    }
    Ok((poses, energies, clearances))
}

/// Episode metrics per the evaluation protocol: collision and energy
/// averages are over forward steps; the peak energy is over every step.
pub fn compute_metrics(result: &EpisodeResult) -> Metrics {
    let forward = result.forward_step_count.max(1) as Real;
    let mut forward_energy_sum = 0.0;
    let mut max_energy: Real = 0.0;
    for (e, kind) in result.step_energies.iter().zip(&result.kinds) {
        if *kind == StepKind::Forward {
            forward_energy_sum += e;
        }
        max_energy = max_energy.max(*e);
    }
    Metrics {
        completion: if result.status == EpisodeStatus::Completed { 1.0 } else { 0.0 },
        cut_mass_ratio: result.cut_mass_ratio,
        collision_ratio: result.collision_events.len() as Real / forward,
        avg_energy: forward_energy_sum / forward,
        max_energy,
    }
}

/// One evaluated episode in a sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalEpisode {
    pub variant: String,
    pub split: String,
    pub family: CoreFamily,
    pub core_seed: u64,
    pub status: Option<EpisodeStatus>,
    pub metrics: Option<Metrics>,
    pub error: Option<String>,
}

/// Mean metrics for one (variant, split) cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalRow {
    pub variant: String,
    pub split: String,
    pub episodes: usize,
    pub errored: usize,
    pub completion_rate: Real,
    pub mean_cut_mass_ratio: Real,
    pub mean_collision_ratio: Real,
    pub mean_avg_energy: Real,
    pub mean_max_energy: Real,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    pub episodes: Vec<EvalEpisode>,
}

/// Evaluate policy variants over core splits. Episodes that error out are
/// recorded (counting as incomplete) and never abort the sweep.
pub fn evaluate(
    splits: &[(String, Vec<CoreShape>)],
    variants: &[PolicyVariant],
    scene: &SceneConfig,
    cfg: &SimConfig,
    limits: &EpisodeLimits,
    seed: u64,
) -> Result<EvalReport> {
    let window = GridSpec::square(ESTIMATE_GRID, scene.domain, Vec2::new(0.0, 0.0));
    let estimator = Estimator::new(scene.anchor, window, DEFAULT_THRESHOLD)?;
    let mut episodes = Vec::new();
    let mut rows = Vec::new();
    for variant in variants {
        let policy = Policy::variant(*variant);
        for (split, cores) in splits {
            let start = episodes.len();
            for (i, core) in cores.iter().enumerate() {
                let ep_seed = episode_seed(seed, i);
                let outcome =
                    run_episode(core, scene, cfg, &policy, &estimator, limits, ep_seed);
                let episode = match outcome {
                    Ok(result) => EvalEpisode {
                        variant: variant.label().to_string(),
                        split: split.clone(),
                        family: core.family,
                        core_seed: core.seed,
                        status: Some(result.status),
                        metrics: Some(compute_metrics(&result)),
                        error: None,
                    },
                    Err(e) => EvalEpisode {
                        variant: variant.label().to_string(),
                        split: split.clone(),
                        family: core.family,
                        core_seed: core.seed,
                        status: None,
                        metrics: None,
                        error: Some(e.to_string()),
                    },
                };
                episodes.push(episode);
            }
            rows.push(summarize(variant.label(), split, &episodes[start..]));
        }
    }
    Ok(EvalReport { rows, episodes })
}

/// Per-episode seed for index `i` within one sweep.
pub fn episode_seed(sweep_seed: u64, i: usize) -> u64 {
    sweep_seed ^ (0x9e37_79b9_7f4a_7c15_u64.wrapping_mul(i as u64 + 1))
}

/// Mean metrics over one (variant, split) cell of episodes.
pub fn summarize(variant: &str, split: &str, cell: &[EvalEpisode]) -> EvalRow {
    let episodes = cell.len();
    let errored = cell.iter().filter(|e| e.error.is_some()).count();
    let ran: Vec<&Metrics> = cell.iter().filter_map(|e| e.metrics.as_ref()).collect();
    let n_ran = ran.len().max(1) as Real;
    let mean = |f: fn(&Metrics) -> Real| ran.iter().map(|m| f(m)).sum::<Real>() / n_ran;
    EvalRow {
        variant: variant.to_string(),
        split: split.to_string(),
        episodes,
        errored,
        // Errored episodes count against completion but not the means.
        completion_rate: ran.iter().map(|m| m.completion).sum::<Real>() / episodes.max(1) as Real,
        mean_cut_mass_ratio: mean(|m| m.cut_mass_ratio),
        mean_collision_ratio: mean(|m| m.collision_ratio),
        mean_avg_energy: mean(|m| m.avg_energy),
        mean_max_energy: mean(|m| m.max_energy),
    }
}

/// Benchmark dataset: reproducible per-family draws around an anchor.
pub fn gen_dataset(
    train: usize,
    in_dist: usize,
    ood: usize,
    anchor: Vec2,
    seed_base: u64,
) -> (Vec<CoreShape>, Vec<CoreShape>, Vec<CoreShape>) {
    let train_cores =
        (0..train).map(|i| gen_core(CoreFamily::Spline3, seed_base + i as u64, anchor)).collect();
    let in_dist_cores = (0..in_dist)
        .map(|i| gen_core(CoreFamily::Spline3, seed_base + 10_000 + i as u64, anchor))
        .collect();
    let families = CoreFamily::ood_families();
    let ood_cores = (0..ood)
        .map(|i| {
            let family = families[i % families.len()];
            gen_core(family, seed_base + 20_000 + i as u64, anchor)
        })
        .collect();
    (train_cores, in_dist_cores, ood_cores)
}
