//! Hand-written reverse pass through the soft-contact MLS-MPM rollout.
//!
//! The forward rollout stores a particle-state snapshot every
//! `checkpoint_interval` actions. The backward sweep walks the actions in
//! reverse, segment by segment: each segment's per-action pre-states are
//! recomputed once from its snapshot, each action's per-substep pre-states
//! are recomputed once from the action pre-state, and every substep is then
//! replayed a final time to rebuild the grid stage values the adjoint
//! kernels consume. Replays call the same kernels as the forward pass, so
//! recomputed states are bit-identical and the gradient does not depend on
//! the checkpoint interval.
//!
//! Loss seeds: the smooth cut-mass term seeds particle positions and tip
//! path vertices; the collision term seeds action-endpoint poses in closed
//! form; the work term seeds particle positions and velocities at both
//! boundaries of each action (the contacted set is replayed, fixed per
//! action). Gate decisions (contact branches, friction regime, wall clamps,
//! position clamps, the plastic yield branch) are frozen at their replayed
//! values.

use crate::geometry::knife::KnifePose;
use crate::objectives::{collision_loss_grad, CollisionLossConfig, LossBreakdown, LossWeights};
use crate::sim::contact::{project_contact_soft_vjp, ContactModel};
use crate::sim::plasticity::{
    kirchhoff_stress, kirchhoff_stress_vjp, return_map_vjp, svd2, Svd2,
};
use crate::sim::{
    bspline_weight_derivs, bspline_weights, cut, substep, ActionKinematics, GridScratch,
    KnifeMotion, SimEnv, SimState,
};
use crate::error::Result;
use crate::{Mat2, Real, Vec2};

use super::{OptimizerConfig, Trajectory, ACTION_STEP, DTHETA_MAX};

/// Particle state at a checkpoint boundary or before one substep.
#[derive(Clone)]
struct Snap {
    x: Vec<Vec2>,
    v: Vec<Vec2>,
    f: Vec<Mat2>,
    c: Vec<Mat2>,
}

impl Snap {
    fn of(state: &SimState) -> Snap {
        Snap { x: state.x.clone(), v: state.v.clone(), f: state.f.clone(), c: state.c.clone() }
    }
}

/// Adjoints of the particle state.
struct Adjoint {
    x: Vec<Vec2>,
    v: Vec<Vec2>,
    f: Vec<Mat2>,
    c: Vec<Mat2>,
}

impl Adjoint {
    fn zeros(n: usize) -> Adjoint {
        Adjoint {
            x: vec![Vec2::zeros(); n],
            v: vec![Vec2::zeros(); n],
            f: vec![Mat2::zeros(); n],
            c: vec![Mat2::zeros(); n],
        }
    }
}

/// Adjoints of one substep's rigid knife motion.
#[derive(Debug, Clone, Copy, Default)]
struct MotionBar {
    tip: Vec2,
    theta: Real,
    v_tip: Vec2,
    omega: Real,
}

/// Adjoints of one absolute pose (action endpoint).
#[derive(Debug, Clone, Copy, Default)]
struct PoseBar {
    tip: Vec2,
    theta: Real,
}

/// Grid replay and adjoint work buffers, allocated once per gradient call.
struct Tape {
    mass: Vec<Real>,
    mom: Vec<Vec2>,
    v_grav: Vec<Vec2>,
    v_wall: Vec<Vec2>,
    v_board: Vec<Vec2>,
    v_core: Vec<Vec2>,
    v_final: Vec<Vec2>,
    bar_gv: Vec<Vec2>,
    bar_mom: Vec<Vec2>,
    bar_mass: Vec<Real>,
    svds: Vec<Svd2>,
    affine: Vec<Mat2>,
    next_x: Vec<Vec2>,
    next_v: Vec<Vec2>,
    next_f: Vec<Mat2>,
    next_c: Vec<Mat2>,
}

impl Tape {
    fn new(nodes: usize, particles: usize) -> Tape {
        let id = Svd2 { u: Mat2::identity(), s: Vec2::new(1.0, 1.0), v: Mat2::identity() };
        Tape {
            mass: vec![0.0; nodes],
            mom: vec![Vec2::zeros(); nodes],
            v_grav: vec![Vec2::zeros(); nodes],
            v_wall: vec![Vec2::zeros(); nodes],
            v_board: vec![Vec2::zeros(); nodes],
            v_core: vec![Vec2::zeros(); nodes],
            v_final: vec![Vec2::zeros(); nodes],
            bar_gv: vec![Vec2::zeros(); nodes],
            bar_mom: vec![Vec2::zeros(); nodes],
            bar_mass: vec![0.0; nodes],
            svds: vec![id; particles],
            affine: vec![Mat2::zeros(); particles],
            next_x: vec![Vec2::zeros(); particles],
            next_v: vec![Vec2::zeros(); particles],
            next_f: vec![Mat2::zeros(); particles],
            next_c: vec![Mat2::zeros(); particles],
        }
    }
}

#[inline]
fn perp(v: Vec2) -> Vec2 {
    Vec2::new(-v.y, v.x)
}

#[inline]
fn is_zero_mat(m: &Mat2) -> bool {
    m[(0, 0)] == 0.0 && m[(0, 1)] == 0.0 && m[(1, 0)] == 0.0 && m[(1, 1)] == 0.0
}

/// Reverse-mode value and gradient of the planning loss. See the module
/// docs for the sweep structure.
pub(crate) fn loss_and_gradient(
    traj: &Trajectory,
    env: &SimEnv,
    init: &SimState,
    weights: &LossWeights,
    col_cfg: &CollisionLossConfig,
    cfg: &OptimizerConfig,
) -> Result<(LossBreakdown, Vec<Real>)> {
    assert_eq!(
        env.cfg.contact_model,
        ContactModel::Soft,
        "reverse mode differentiates the soft contact model"
    );
    // The backward sweep replays actions from trajectory poses; the stepper
    // replays them from the state's pose. They must be the same pose.
    assert!(
        init.pose.tip == traj.initial_pose.tip && init.pose.theta == traj.initial_pose.theta,
        "state pose and trajectory initial pose must coincide"
    );
    let poses = traj.poses();
    let n_actions = traj.action_count();
    let k_int = cfg.checkpoint_interval;
    let substeps = env.cfg.substeps_per_action;
    let n_p = init.particle_count();

    // Forward pass, snapshotting every k_int actions.
    let mut state = init.clone();
    let mut snaps: Vec<Snap> = Vec::with_capacity(n_actions / k_int + 1);
    let mut records = Vec::with_capacity(n_actions);
    for t in 1..=n_actions {
        if (t - 1) % k_int == 0 {
            snaps.push(Snap::of(&state));
        }
        records.push(state.step(env, poses[t])?);
    }
    let breakdown = super::compose_planning_loss(
        traj, env, init, &state, &records, weights, col_cfg, cfg.cut_width,
    );

    let mut adj = Adjoint::zeros(n_p);
    let mut pose_bars = vec![PoseBar::default(); n_actions + 1];

    // Cut-mass seeds: particles inside the ramp and the path vertices that
    // carry their nearest segment.
    let tips: Vec<Vec2> = poses.iter().map(|p| p.tip).collect();
    let mass_scale = -state.particle_mass / init.total_mass();
    for p in 0..n_p {
        let g = cut::signed_side_distance_grad(&tips, state.x[p]);
        let dq = cut::smoothstep_quintic_deriv(g.s / cfg.cut_width) / cfg.cut_width;
        if dq != 0.0 {
            let coef = mass_scale * dq;
            adj.x[p] += coef * g.d_point;
            for &(idx, gv) in &g.d_vertices[..g.n_vertices] {
                pose_bars[idx].tip += coef * gv;
            }
        }
    }

    // Collision seeds: closed-form pose gradients at action endpoints.
    for t in 1..=n_actions {
        let (_, d_tip, d_theta) =
            collision_loss_grad(&poses[t], &env.core, &env.scene.knife, col_cfg);
        pose_bars[t].tip += weights.eta_col * d_tip;
        pose_bars[t].theta += weights.eta_col * d_theta;
    }

    // Backward sweep, segment by segment.
    let mut tape = Tape::new(env.node_count(), n_p);
    let mut grid = GridScratch::default();
    grid.resize(env.node_count());
    let mut marks = vec![false; n_p];
    let mut sub_cache: Vec<Snap> = Vec::with_capacity(substeps);
    let n_segments = snaps.len();
    for seg in (0..n_segments).rev() {
        let first = seg * k_int + 1;
        let last = ((seg + 1) * k_int).min(n_actions);
        let mut segment_cache = Vec::with_capacity(last - first + 1);
        let mut work = snaps[seg].clone();
        for t in first..=last {
            segment_cache.push(work.clone());
            advance_action(
                env,
                &mut work,
                poses[t - 1],
                poses[t],
                substeps,
                init.particle_mass,
                init.particle_volume,
                &mut grid,
                None,
            );
        }
        for t in (first..=last).rev() {
            backward_action(
                env,
                &segment_cache[t - first],
                poses[t - 1],
                poses[t],
                substeps,
                weights,
                init.particle_mass,
                init.particle_volume,
                &mut adj,
                &mut pose_bars,
                t,
                &mut tape,
                &mut grid,
                &mut marks,
                &mut sub_cache,
            );
        }
    }

    // Pose chain (suffix sums: pose t depends on every action up to t) and
    // the parameterization of each action.
    let mut grad = vec![0.0; 2 * n_actions];
    let mut acc_tip = Vec2::zeros();
    let mut acc_theta = 0.0;
    for t in (1..=n_actions).rev() {
        acc_tip += pose_bars[t].tip;
        acc_theta += pose_bars[t].theta;
        let phi = traj.params[2 * (t - 1)];
        let u = traj.params[2 * (t - 1) + 1];
        grad[2 * (t - 1)] = acc_tip.dot(&(ACTION_STEP * Vec2::new(-phi.sin(), phi.cos())));
        let th = u.tanh();
        grad[2 * (t - 1) + 1] = acc_theta * DTHETA_MAX * (1.0 - th * th);
    }
    Ok((breakdown, grad))
}

/// Replay one action in place (the same substep kernel the stepper uses).
#[allow(clippy::too_many_arguments)]
fn advance_action(
    env: &SimEnv,
    work: &mut Snap,
    pose0: KnifePose,
    target: KnifePose,
    substeps: usize,
    particle_mass: Real,
    particle_volume: Real,
    grid: &mut GridScratch,
    mut marks: Option<&mut [bool]>,
) {
    let kin = ActionKinematics::new(pose0, target, substeps, env.cfg.dt);
    for k in 1..=substeps {
        let motion = kin.motion_at(k);
        substep(
            env,
            &mut work.x,
            &mut work.v,
            &mut work.f,
            &mut work.c,
            particle_mass,
            particle_volume,
            &motion,
            grid,
            marks.as_deref_mut(),
        );
    }
}

#[allow(clippy::too_many_arguments)]
fn backward_action(
    env: &SimEnv,
    pre: &Snap,
    pose0: KnifePose,
    target: KnifePose,
    substeps: usize,
    weights: &LossWeights,
    particle_mass: Real,
    particle_volume: Real,
    adj: &mut Adjoint,
    pose_bars: &mut [PoseBar],
    t_index: usize,
    tape: &mut Tape,
    grid: &mut GridScratch,
    marks: &mut [bool],
    sub_cache: &mut Vec<Snap>,
) {
    let kin = ActionKinematics::new(pose0, target, substeps, env.cfg.dt);
    let n_p = pre.x.len();

    // Replay the action once more, keeping per-substep pre-states and the
    // contacted-particle marks that define the work term.
    marks.fill(false);
    sub_cache.clear();
    let mut end = pre.clone();
    for k in 1..=substeps {
        sub_cache.push(end.clone());
        let motion = kin.motion_at(k);
        substep(
            env,
            &mut end.x,
            &mut end.v,
            &mut end.f,
            &mut end.c,
            particle_mass,
            particle_volume,
            &motion,
            grid,
            Some(marks),
        );
    }

    // Work-term seeds at the action's end state.
    let scale_e = weights.eta_e * particle_mass / kin.duration;
    if scale_e != 0.0 {
        for p in 0..n_p {
            if marks[p] {
                adj.v[p] += scale_e * (end.x[p] - pre.x[p]);
                adj.x[p] += scale_e * (end.v[p] - pre.v[p]);
            }
        }
    }

    for k in (1..=substeps).rev() {
        let mbar = backward_substep(
            env,
            &sub_cache[k - 1],
            &kin.motion_at(k),
            particle_mass,
            particle_volume,
            adj,
            tape,
        );
        let frac = kin.frac(k);
        pose_bars[t_index].tip += frac * mbar.tip + mbar.v_tip / kin.duration;
        pose_bars[t_index - 1].tip += (1.0 - frac) * mbar.tip - mbar.v_tip / kin.duration;
        pose_bars[t_index].theta += frac * mbar.theta + mbar.omega / kin.duration;
        pose_bars[t_index - 1].theta += (1.0 - frac) * mbar.theta - mbar.omega / kin.duration;
    }

    // Work-term seeds at the action's start state.
    if scale_e != 0.0 {
        for p in 0..n_p {
            if marks[p] {
                adj.v[p] -= scale_e * (end.x[p] - pre.x[p]);
                adj.x[p] -= scale_e * (end.v[p] - pre.v[p]);
            }
        }
    }
}

/// Pull the adjoint of the post-substep particle state back to the
/// pre-substep state, accumulating the knife-motion adjoint.
fn backward_substep(
    env: &SimEnv,
    pre: &Snap,
    motion: &KnifeMotion,
    particle_mass: Real,
    particle_volume: Real,
    adj: &mut Adjoint,
    tape: &mut Tape,
) -> MotionBar {
    let cfg = env.cfg;
    let dt = cfg.dt;
    let cell = env.cell;
    let inv_cell = env.inv_cell;
    let stress_scale = -dt * particle_volume * 4.0 * inv_cell * inv_cell;
    let n_side = env.nodes_per_side;
    let n_p = pre.x.len();

    // --- Replay P2G, caching each particle's SVD and fused affine term.
    tape.mass.fill(0.0);
    tape.mom.fill(Vec2::zeros());
    for p in 0..n_p {
        let svd = svd2(&pre.f[p]);
        let tau = kirchhoff_stress(cfg.lambda, cfg.mu, &svd);
        let affine = stress_scale * tau + particle_mass * pre.c[p];
        tape.svds[p] = svd;
        tape.affine[p] = affine;
        let gx = pre.x[p] * inv_cell;
        let bx = (gx.x - 0.5).floor();
        let by = (gx.y - 0.5).floor();
        let (wx, wy) = (bspline_weights(gx.x - bx), bspline_weights(gx.y - by));
        let (bxi, byi) = (bx as usize, by as usize);
        let mv = particle_mass * pre.v[p];
        for j in 0..3 {
            for i in 0..3 {
                let node = env.node_index(bxi + i, byi + j);
                let dpos =
                    Vec2::new((bx + i as Real - gx.x) * cell, (by + j as Real - gx.y) * cell);
                let w = wx[i] * wy[j];
                tape.mass[node] += w * particle_mass;
                tape.mom[node] += w * (mv + affine * dpos);
            }
        }
    }

    // --- Replay the grid update, keeping each stage's output.
    let r_knife = env.knife_contact_radius();
    for iy in 0..n_side {
        for ix in 0..n_side {
            let node = env.node_index(ix, iy);
            let m = tape.mass[node];
            if m <= 0.0 {
                tape.v_final[node] = Vec2::zeros();
                continue;
            }
            let mut v = tape.mom[node] / m;
            v.y -= dt * cfg.gravity;
            tape.v_grav[node] = v;
            if ix <= 2 {
                v.x = v.x.max(0.0);
            }
            if ix + 3 >= n_side {
                v.x = v.x.min(0.0);
            }
            if iy <= 2 {
                v.y = v.y.max(0.0);
            }
            if iy + 3 >= n_side {
                v.y = v.y.min(0.0);
            }
            tape.v_wall[node] = v;
            let pos = Vec2::new(ix as Real * cell, iy as Real * cell);
            let (v_board, _) = crate::sim::contact::project_contact(
                v,
                Vec2::zeros(),
                env.scene.board_sdf(pos),
                Vec2::new(0.0, 1.0),
                cfg.friction_coeff,
                cell,
                cfg.contact_model,
            );
            tape.v_board[node] = v_board;
            let (phi_core, n_core) = env.node_core[node];
            let (v_core, _) = crate::sim::contact::project_contact(
                v_board,
                Vec2::zeros(),
                phi_core,
                n_core,
                cfg.friction_coeff,
                cell,
                cfg.contact_model,
            );
            tape.v_core[node] = v_core;
            let (q, _) = env.scene.knife.closest_edge_point(&motion.pose, pos);
            let to_node = pos - q;
            let d = to_node.norm();
            let n_knife = if d > 1e-9 {
                to_node / d
            } else {
                let b = motion.pose.blade_dir();
                Vec2::new(b.y, -b.x)
            };
            let (v_knife, _) = crate::sim::contact::project_contact(
                v_core,
                motion.point_velocity(pos),
                d - r_knife,
                n_knife,
                cfg.friction_coeff,
                cell,
                cfg.contact_model,
            );
            tape.v_final[node] = v_knife;
        }
    }

    // --- Phase A: G2P backward. Recomputes the gather, pulls the adjoint
    // of (x', v', F', C') back to grid velocities and the pre-state x/F.
    tape.bar_gv.fill(Vec2::zeros());
    for p in 0..n_p {
        tape.next_x[p] = Vec2::zeros();
        tape.next_v[p] = Vec2::zeros();
        tape.next_f[p] = Mat2::zeros();
        tape.next_c[p] = Mat2::zeros();
    }
    let lo = 3.0 * cell;
    let hi = env.scene.domain - 3.0 * cell;
    for p in 0..n_p {
        let gx = pre.x[p] * inv_cell;
        let bx = (gx.x - 0.5).floor();
        let by = (gx.y - 0.5).floor();
        let (wx, wy) = (bspline_weights(gx.x - bx), bspline_weights(gx.y - by));
        let (dwx, dwy) = (bspline_weight_derivs(gx.x - bx), bspline_weight_derivs(gx.y - by));
        let (bxi, byi) = (bx as usize, by as usize);
        let mut new_v = Vec2::zeros();
        let mut b_mat = Mat2::zeros();
        for j in 0..3 {
            for i in 0..3 {
                let node = env.node_index(bxi + i, byi + j);
                let dpos =
                    Vec2::new((bx + i as Real - gx.x) * cell, (by + j as Real - gx.y) * cell);
                let w = wx[i] * wy[j];
                let gv = tape.v_final[node];
                new_v += w * gv;
                b_mat += w * gv * dpos.transpose();
            }
        }
        let new_c = 4.0 * inv_cell * inv_cell * b_mat;

        // F' = return_map((I + dt C') F)
        let bar_f_post = adj.f[p];
        let bar_c_post = adj.c[p];
        let (bar_c_tot, bar_f_pre) = if is_zero_mat(&bar_f_post) {
            (bar_c_post, Mat2::zeros())
        } else {
            let f_trial = (Mat2::identity() + dt * new_c) * pre.f[p];
            let bar_f_trial =
                return_map_vjp(&f_trial, cfg.mu, cfg.yield_stress, &bar_f_post);
            (
                bar_c_post + dt * bar_f_trial * pre.f[p].transpose(),
                (Mat2::identity() + dt * new_c).transpose() * bar_f_trial,
            )
        };

        // x' = clamp(x + dt v'): a clamped component is constant.
        let x_unc = pre.x[p] + dt * new_v;
        let bar_xp = Vec2::new(
            if x_unc.x > lo && x_unc.x < hi { adj.x[p].x } else { 0.0 },
            if x_unc.y > lo && x_unc.y < hi { adj.x[p].y } else { 0.0 },
        );
        let bar_v_tot = adj.v[p] + dt * bar_xp;
        let mut bar_x_pre = bar_xp;
        let bar_b = 4.0 * inv_cell * inv_cell * bar_c_tot;
        let bar_b_t = bar_b.transpose();
        for j in 0..3 {
            for i in 0..3 {
                let node = env.node_index(bxi + i, byi + j);
                let dpos =
                    Vec2::new((bx + i as Real - gx.x) * cell, (by + j as Real - gx.y) * cell);
                let w = wx[i] * wy[j];
                let gv = tape.v_final[node];
                tape.bar_gv[node] += w * bar_v_tot + w * (bar_b * dpos);
                let bar_w = gv.dot(&bar_v_tot) + gv.dot(&(bar_b * dpos));
                let bar_dpos = w * (bar_b_t * gv);
                let grad_w = Vec2::new(
                    inv_cell * dwx[i] * wy[j],
                    inv_cell * wx[i] * dwy[j],
                );
                bar_x_pre += bar_w * grad_w - bar_dpos;
            }
        }
        tape.next_x[p] = bar_x_pre;
        tape.next_f[p] = bar_f_pre;
        tape.next_c[p] = Mat2::zeros();
        tape.next_v[p] = Vec2::zeros();
    }

    // --- Phase B: grid backward. Unwinds knife, core, board, walls,
    // gravity, and the momentum division; accumulates the motion adjoint.
    let mut mbar = MotionBar::default();
    for iy in 0..n_side {
        for ix in 0..n_side {
            let node = env.node_index(ix, iy);
            let m = tape.mass[node];
            if m <= 0.0 {
                tape.bar_mom[node] = Vec2::zeros();
                tape.bar_mass[node] = 0.0;
                continue;
            }
            let mut bar = tape.bar_gv[node];
            let pos = Vec2::new(ix as Real * cell, iy as Real * cell);

            // Knife projection.
            let (q, tpar) = env.scene.knife.closest_edge_point(&motion.pose, pos);
            let to_node = pos - q;
            let d = to_node.norm();
            let n_knife = if d > 1e-9 {
                to_node / d
            } else {
                let b = motion.pose.blade_dir();
                Vec2::new(b.y, -b.x)
            };
            let vb = motion.point_velocity(pos);
            let vjp = project_contact_soft_vjp(
                tape.v_core[node],
                vb,
                d - r_knife,
                n_knife,
                cfg.friction_coeff,
                cell,
                bar,
            );
            bar = vjp.v_in;
            if d > 1e-9 {
                // n = (pos - q)/d and phi = d - r depend on q = tip + tpar dir.
                let mut bar_q = -(vjp.n - n_knife * n_knife.dot(&vjp.n)) / d;
                bar_q -= vjp.phi * n_knife;
                let dir = motion.pose.blade_dir();
                let e_perp = perp(dir);
                if tpar > 0.0 && tpar < env.scene.knife.blade_length {
                    // Interior: q is the perpendicular foot, so tip motion
                    // along the blade leaves q fixed, and rotation slides q
                    // along the blade as well as swinging it.
                    let along = dir.dot(&bar_q);
                    mbar.tip += bar_q - along * dir;
                    mbar.theta +=
                        tpar * e_perp.dot(&bar_q) + (pos - motion.pose.tip).dot(&e_perp) * along;
                } else {
                    // Clamped to an endpoint: q rides rigidly with the pose.
                    mbar.tip += bar_q;
                    mbar.theta += tpar * e_perp.dot(&bar_q);
                }
            }
            // vb = v_tip + omega * perp(pos - tip)
            mbar.v_tip += vjp.v_body;
            mbar.omega += perp(pos - motion.pose.tip).dot(&vjp.v_body);
            mbar.tip += motion.omega * perp(vjp.v_body);

            // Core projection (static geometry).
            let (phi_core, n_core) = env.node_core[node];
            let vjp = project_contact_soft_vjp(
                tape.v_board[node],
                Vec2::zeros(),
                phi_core,
                n_core,
                cfg.friction_coeff,
                cell,
                bar,
            );
            bar = vjp.v_in;

            // Board projection (static geometry).
            let vjp = project_contact_soft_vjp(
                tape.v_wall[node],
                Vec2::zeros(),
                env.scene.board_sdf(pos),
                Vec2::new(0.0, 1.0),
                cfg.friction_coeff,
                cell,
                bar,
            );
            bar = vjp.v_in;

            // Wall clamps: an active clamp freezes the component.
            let vg = tape.v_grav[node];
            let mut vx = vg.x;
            if ix <= 2 {
                if vx < 0.0 {
                    bar.x = 0.0;
                }
                vx = vx.max(0.0);
            }
            if ix + 3 >= n_side && vx > 0.0 {
                bar.x = 0.0;
            }
            let mut vy = vg.y;
            if iy <= 2 {
                if vy < 0.0 {
                    bar.y = 0.0;
                }
                vy = vy.max(0.0);
            }
            if iy + 3 >= n_side && vy > 0.0 {
                bar.y = 0.0;
            }

            // Gravity shifts, momentum division scales.
            let v0 = tape.mom[node] / m;
            tape.bar_mom[node] = bar / m;
            tape.bar_mass[node] = -v0.dot(&bar) / m;
        }
    }

    // --- Phase C: P2G backward. Pulls node momentum/mass adjoints back to
    // particle velocity, affine field, stress (hence F), and position.
    for p in 0..n_p {
        let gx = pre.x[p] * inv_cell;
        let bx = (gx.x - 0.5).floor();
        let by = (gx.y - 0.5).floor();
        let (wx, wy) = (bspline_weights(gx.x - bx), bspline_weights(gx.y - by));
        let (dwx, dwy) = (bspline_weight_derivs(gx.x - bx), bspline_weight_derivs(gx.y - by));
        let (bxi, byi) = (bx as usize, by as usize);
        let affine = tape.affine[p];
        let affine_t = affine.transpose();
        let mv = particle_mass * pre.v[p];
        let mut bar_affine = Mat2::zeros();
        let mut bar_v = Vec2::zeros();
        let mut bar_x = Vec2::zeros();
        for j in 0..3 {
            for i in 0..3 {
                let node = env.node_index(bxi + i, byi + j);
                let bm = tape.bar_mom[node];
                let bmass = tape.bar_mass[node];
                let dpos =
                    Vec2::new((bx + i as Real - gx.x) * cell, (by + j as Real - gx.y) * cell);
                let w = wx[i] * wy[j];
                bar_v += (w * particle_mass) * bm;
                bar_affine += w * bm * dpos.transpose();
                let bar_w = bm.dot(&(mv + affine * dpos)) + particle_mass * bmass;
                let bar_dpos = w * (affine_t * bm);
                let grad_w = Vec2::new(
                    inv_cell * dwx[i] * wy[j],
                    inv_cell * wx[i] * dwy[j],
                );
                bar_x += bar_w * grad_w - bar_dpos;
            }
        }
        tape.next_v[p] += bar_v;
        tape.next_x[p] += bar_x;
        tape.next_c[p] += particle_mass * bar_affine;
        if !is_zero_mat(&bar_affine) {
            let bar_tau = stress_scale * bar_affine;
            tape.next_f[p] += kirchhoff_stress_vjp(cfg.lambda, cfg.mu, &tape.svds[p], &bar_tau);
        }
    }

    std::mem::swap(&mut adj.x, &mut tape.next_x);
    std::mem::swap(&mut adj.v, &mut tape.next_v);
    std::mem::swap(&mut adj.f, &mut tape.next_f);
    std::mem::swap(&mut adj.c, &mut tape.next_c);
    mbar
}
