//! Core-shape estimation from collision evidence.
//!
//! The hidden core is inferred by Bayesian enumeration over the spline
//! family: a dense grid of node-offset candidates is scored against the
//! collision points (Gaussian likelihood on contour distance, hard band) and
//! against the carved free space (hard rejection of any candidate whose
//! interior overlaps cells the knife has already swept without contact).
//! The occupancy posterior is the weight-averaged candidate indicator on a
//! fixed workspace window; thresholding it yields the mask the cutting
//! policy follows. Contacts that no candidate can explain fall back to
//! local occupancy disks, which keeps out-of-family cores estimable.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::grid::{sdf_from_mask, GridSpec, SdfGrid};
use crate::geometry::knife::{KnifeGeometry, KnifePose};
use crate::geometry::{CoreFamily, CoreShape, NODE_OFFSET_MAX};
use crate::rng::Rng;
use crate::sim::DETECT_SAMPLES;
use crate::{Real, Vec2};

/// Candidates per spline-node axis (the full set is this value cubed).
pub const CANDIDATES_PER_AXIS: usize = 21;
/// Gaussian width of the contact likelihood, meters.
pub const SIGMA_CONTACT: Real = 0.002;
/// Hard admissibility band around a candidate contour, meters.
pub const CONTACT_BAND: Real = 0.004;
/// Radius of the occupancy disk around an unexplained contact, meters.
pub const RESIDUAL_RADIUS: Real = 0.006;
/// Default probability threshold for the binary mask.
pub const DEFAULT_THRESHOLD: Real = 0.3;
/// Cells per side of the workspace window.
pub const ESTIMATE_GRID: usize = 256;

/// Everything the estimator is allowed to know: where the knife hit, the
/// poses it hit from, and which cells it has swept without hitting anything.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CollisionEvidence {
    pub collision_points: Vec<Vec2>,
    /// Index-aligned with `collision_points`.
    pub collision_poses: Vec<KnifePose>,
    /// Row-major over `window`; `true` cells are guaranteed core-free.
    pub free_space: Vec<bool>,
    pub window: GridSpec,
}

impl CollisionEvidence {
    pub fn empty(window: GridSpec) -> Self {
        CollisionEvidence {
            collision_points: Vec::new(),
            collision_poses: Vec::new(),
            free_space: vec![false; window.len()],
            window,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.collision_points.len() != self.collision_poses.len() {
            return Err(Error::InvalidEvidence(format!(
                "{} collision points but {} poses",
                self.collision_points.len(),
                self.collision_poses.len()
            )));
        }
        if self.free_space.len() != self.window.len() {
            return Err(Error::InvalidEvidence(format!(
                "free-space grid has {} cells, window expects {}",
                self.free_space.len(),
                self.window.len()
            )));
        }
        for (i, p) in self.collision_points.iter().enumerate() {
            if let Some(cell) = cell_of(&self.window, *p) {
                if self.free_space[cell] {
                    return Err(Error::InvalidEvidence(format!(
                        "collision point {i} at ({:.4}, {:.4}) lies in carved free space",
                        p.x, p.y
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Posterior occupancy over the workspace window plus its thresholded mask.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoreEstimate {
    pub window: GridSpec,
    /// Row-major posterior occupancy in [0, 1].
    pub probability: Vec<Real>,
    /// `probability >= threshold_used`, free space excluded, one component.
    pub mask: Vec<bool>,
    pub sdf: SdfGrid,
    pub threshold_used: Real,
    /// Candidates compatible with all evidence (0 means disk fallback).
    pub surviving_candidates: usize,
}

/// One enumerated core hypothesis with its rasterization on the window.
struct Candidate {
    shape: CoreShape,
    /// `(iy, x0, x1)` half-open cell runs whose centers lie inside.
    runs: Vec<(u32, u32, u32)>,
}

/// Enumerated candidate family over a fixed anchor and workspace window.
/// Building one is moderately expensive; reuse it across estimates.
pub struct Estimator {
    pub window: GridSpec,
    pub threshold: Real,
    pub anchor: Vec2,
    candidates: Vec<Candidate>,
}

#[inline]
fn cell_of(spec: &GridSpec, p: Vec2) -> Option<usize> {
    let fx = (p.x - spec.origin.x) / spec.cell;
    let fy = (p.y - spec.origin.y) / spec.cell;
    if fx < 0.0 || fy < 0.0 {
        return None;
    }
    let (ix, iy) = (fx as usize, fy as usize);
    if ix >= spec.nx || iy >= spec.ny {
        None
    } else {
        Some(iy * spec.nx + ix)
    }
}

/// Half-open cell runs per row whose centers lie inside the polygon
/// (even-odd rule, scanline over cell-center rows).
fn rasterize_runs(contour: &[Vec2], spec: &GridSpec) -> Vec<(u32, u32, u32)> {
    let mut runs = Vec::new();
    let (mut lo_y, mut hi_y) = (Real::INFINITY, Real::NEG_INFINITY);
    for v in contour {
        lo_y = lo_y.min(v.y);
        hi_y = hi_y.max(v.y);
    }
    let iy0 = (((lo_y - spec.origin.y) / spec.cell - 0.5).ceil().max(0.0)) as usize;
    let mut xs: Vec<Real> = Vec::new();
    for iy in iy0..spec.ny {
        let y = spec.origin.y + (iy as Real + 0.5) * spec.cell;
        if y > hi_y {
            break;
        }
        xs.clear();
        let n = contour.len();
        for i in 0..n {
            let a = contour[i];
            let b = contour[(i + 1) % n];
            if (a.y > y) != (b.y > y) {
                xs.push(a.x + (y - a.y) * (b.x - a.x) / (b.y - a.y));
            }
        }
        xs.sort_by(|p, q| p.partial_cmp(q).unwrap());
        for pair in xs.chunks_exact(2) {
            let x0 = ((pair[0] - spec.origin.x) / spec.cell - 0.5).ceil().max(0.0) as usize;
            let x1 = (((pair[1] - spec.origin.x) / spec.cell - 0.5).floor() + 1.0).max(0.0)
                as usize;
            let x1 = x1.min(spec.nx);
            if x0 < x1 {
                runs.push((iy as u32, x0 as u32, x1 as u32));
            }
        }
    }
    runs
}

/// Cell-center occupancy mask of a core on a window (test and metric
/// helper; the estimator itself works with runs).
pub fn rasterize_core_mask(core: &CoreShape, spec: &GridSpec) -> Vec<bool> {
    let mut mask = vec![false; spec.len()];
    for (iy, x0, x1) in rasterize_runs(&core.contour, spec) {
        for ix in x0..x1 {
            mask[iy as usize * spec.nx + ix as usize] = true;
        }
    }
    mask
}

/// Intersection over union of two masks of equal length.
pub fn mask_iou(a: &[bool], b: &[bool]) -> Real {
    assert_eq!(a.len(), b.len());
    let mut inter = 0usize;
    let mut union = 0usize;
    for (x, y) in a.iter().zip(b) {
        if *x && *y {
            inter += 1;
        }
        if *x || *y {
            union += 1;
        }
    }
    if union == 0 {
        0.0
    } else {
        inter as Real / union as Real
    }
}

impl Estimator {
    /// Enumerate the spline-family candidate cube at the given anchor.
    pub fn new(anchor: Vec2, window: GridSpec, threshold: Real) -> Result<Self> {
        if !(0.0..=1.0).contains(&threshold) {
            return Err(Error::InvalidConfig("threshold must lie in [0, 1]".into()));
        }
        let n = CANDIDATES_PER_AXIS;
        let mut candidates = Vec::with_capacity(n * n * n);
        let offset = |i: usize| -> Real {
            -NODE_OFFSET_MAX + 2.0 * NODE_OFFSET_MAX * i as Real / (n - 1) as Real
        };
        for i0 in 0..n {
            for i1 in 0..n {
                for i2 in 0..n {
                    let offs = [offset(i0), offset(i1), offset(i2)];
                    let shape = CoreShape::from_offsets(CoreFamily::Spline3, &offs, anchor, 0);
                    let runs = rasterize_runs(&shape.contour, &window);
                    candidates.push(Candidate { shape, runs });
                }
            }
        }
        Ok(Estimator { window, threshold, anchor, candidates })
    }

    pub fn candidate_count(&self) -> usize {
        self.candidates.len()
    }

    /// Posterior occupancy and mask for the evidence at the default
    /// threshold.
    pub fn estimate(&self, evidence: &CollisionEvidence) -> Result<CoreEstimate> {
        self.estimate_with_threshold(evidence, self.threshold)
    }

    /// Same estimate re-thresholded (the posterior itself is
    /// threshold-independent).
    pub fn estimate_with_threshold(
        &self,
        evidence: &CollisionEvidence,
        threshold: Real,
    ) -> Result<CoreEstimate> {
        evidence.validate()?;
        if evidence.window != self.window {
            return Err(Error::InvalidEvidence(
                "evidence window does not match the estimator window".into(),
            ));
        }
        let spec = self.window;
        let free = &evidence.free_space;

        // Score candidates: hard band on every contact, Gaussian penalty on
        // contour distance, hard rejection on free-space overlap.
        let inv_two_sigma2 = 1.0 / (2.0 * SIGMA_CONTACT * SIGMA_CONTACT);
        let mut survivors: Vec<(usize, Real)> = Vec::new();
        'cand: for (ci, cand) in self.candidates.iter().enumerate() {
            let mut loglik = 0.0;
            for p in &evidence.collision_points {
                let d = cand.shape.sdf(*p);
                if d.abs() > CONTACT_BAND {
                    continue 'cand;
                }
                loglik -= d * d * inv_two_sigma2;
            }
            for &(iy, x0, x1) in &cand.runs {
                let row = iy as usize * spec.nx;
                if free[row + x0 as usize..row + x1 as usize].iter().any(|f| *f) {
                    continue 'cand;
                }
            }
            survivors.push((ci, loglik));
        }

        let mut probability = vec![0.0; spec.len()];
        if survivors.is_empty() {
            if evidence.collision_points.is_empty() {
                return Err(Error::InvalidEvidence(
                    "free space excludes every candidate and there are no contacts to fall back on"
                        .into(),
                ));
            }
            // Disk fallback: certain occupancy around each contact, minus
            // carved cells.
            let r_cells = (RESIDUAL_RADIUS / spec.cell).ceil() as isize;
            for p in &evidence.collision_points {
                let Some(center) = cell_of(&spec, *p) else {
                    return Err(Error::InvalidEvidence(format!(
                        "collision point ({:.4}, {:.4}) lies outside the workspace window",
                        p.x, p.y
                    )));
                };
                let (cx, cy) = ((center % spec.nx) as isize, (center / spec.nx) as isize);
                for dy in -r_cells..=r_cells {
                    for dx in -r_cells..=r_cells {
                        let (ix, iy) = (cx + dx, cy + dy);
                        if ix < 0 || iy < 0 || ix >= spec.nx as isize || iy >= spec.ny as isize {
                            continue;
                        }
                        let cell = iy as usize * spec.nx + ix as usize;
                        if !free[cell]
                            && (spec.center(ix as usize, iy as usize) - *p).norm()
                                <= RESIDUAL_RADIUS
                        {
                            probability[cell] = 1.0;
                        }
                    }
                }
            }
        } else {
            let max_ll = survivors.iter().map(|s| s.1).fold(Real::NEG_INFINITY, Real::max);
            let mut total = 0.0;
            for s in &mut survivors {
                s.1 = (s.1 - max_ll).exp();
                total += s.1;
            }
            for (ci, w) in &survivors {
                let w = w / total;
                for &(iy, x0, x1) in &self.candidates[*ci].runs {
                    let row = iy as usize * spec.nx;
                    for cell in &mut probability[row + x0 as usize..row + x1 as usize] {
                        *cell += w;
                    }
                }
            }
            for cell in &mut probability {
                *cell = cell.min(1.0);
            }
        }

        let mut mask: Vec<bool> = probability.iter().map(|p| *p >= threshold).collect();
        if mask.iter().all(|m| !m) {
            return Err(Error::InvalidEvidence(format!(
                "no cell reaches the {threshold} occupancy threshold"
            )));
        }
        connect_mask(&mut mask, &mut probability, free, &spec, threshold)?;
        let sdf = sdf_from_mask(&mask, spec);
        Ok(CoreEstimate {
            window: spec,
            probability,
            mask,
            sdf,
            threshold_used: threshold,
            surviving_candidates: survivors.len(),
        })
    }
}

/// Signed distance field of an estimate mask (negative inside). Fails on an
/// empty mask: the policy always needs a core hypothesis to steer around.
pub fn estimate_to_sdf(mask: &[bool], spec: GridSpec) -> Result<SdfGrid> {
    if mask.iter().all(|m| !m) {
        return Err(Error::InvalidEvidence("cannot build an SDF from an empty mask".into()));
    }
    Ok(sdf_from_mask(mask, spec))
}

/// Make the mask a single 8-connected component by adding cheapest
/// non-free bridge cells (cost favors high-occupancy corridors). Bridged
/// cells get their probability raised to the threshold so the
/// mask-equals-thresholded-probability invariant survives.
fn connect_mask(
    mask: &mut [bool],
    probability: &mut [Real],
    free: &[bool],
    spec: &GridSpec,
    threshold: Real,
) -> Result<()> {
    loop {
        let labels = label_components(mask, spec);
        let n_components = labels.1;
        if n_components <= 1 {
            return Ok(());
        }
        // Dijkstra from the whole largest component to any other label.
        let mut count = vec![0usize; n_components + 1];
        for &l in &labels.0 {
            if l > 0 {
                count[l] += 1;
            }
        }
        let main = (1..=n_components).max_by_key(|l| count[*l]).unwrap();
        let Some(path) = bridge_path(&labels.0, main, mask, probability, free, spec) else {
            return Err(Error::InvalidEvidence(
                "carved free space separates the evidence into disconnected regions".into(),
            ));
        };
        for cell in path {
            mask[cell] = true;
            if probability[cell] < threshold {
                probability[cell] = threshold;
            }
        }
    }
}

/// 8-connected component labels (0 = background), and the component count.
fn label_components(mask: &[bool], spec: &GridSpec) -> (Vec<usize>, usize) {
    let mut labels = vec![0usize; mask.len()];
    let mut next = 0usize;
    let mut stack = Vec::new();
    for start in 0..mask.len() {
        if !mask[start] || labels[start] != 0 {
            continue;
        }
        next += 1;
        labels[start] = next;
        stack.push(start);
        while let Some(cell) = stack.pop() {
            let (ix, iy) = ((cell % spec.nx) as isize, (cell / spec.nx) as isize);
            for dy in -1..=1isize {
                for dx in -1..=1isize {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let (jx, jy) = (ix + dx, iy + dy);
                    if jx < 0 || jy < 0 || jx >= spec.nx as isize || jy >= spec.ny as isize {
                        continue;
                    }
                    let j = jy as usize * spec.nx + jx as usize;
                    if mask[j] && labels[j] == 0 {
                        labels[j] = next;
                        stack.push(j);
                    }
                }
            }
        }
    }
    (labels, next)
}

/// Cheapest 4-connected path of non-free cells from the `main` component to
/// any other component; returns the strictly-new cells along it.
fn bridge_path(
    labels: &[usize],
    main: usize,
    mask: &[bool],
    probability: &[Real],
    free: &[bool],
    spec: &GridSpec,
) -> Option<Vec<usize>> {
    use std::cmp::Reverse;
    use std::collections::BinaryHeap;
    const SCALE: Real = 1e9;
    let mut dist = vec![u64::MAX; labels.len()];
    let mut prev = vec![usize::MAX; labels.len()];
    let mut heap: BinaryHeap<Reverse<(u64, usize)>> = BinaryHeap::new();
    for (cell, &l) in labels.iter().enumerate() {
        if l == main {
            dist[cell] = 0;
            heap.push(Reverse((0, cell)));
        }
    }
    while let Some(Reverse((d, cell))) = heap.pop() {
        if d > dist[cell] {
            continue;
        }
        if labels[cell] != 0 && labels[cell] != main {
            // Reached another component; walk back collecting new cells.
            let mut out = Vec::new();
            let mut c = cell;
            while c != usize::MAX {
                if !mask[c] {
                    out.push(c);
                }
                c = prev[c];
            }
            return Some(out);
        }
        let (ix, iy) = ((cell % spec.nx) as isize, (cell / spec.nx) as isize);
        for (dx, dy) in [(1isize, 0isize), (-1, 0), (0, 1), (0, -1)] {
            let (jx, jy) = (ix + dx, iy + dy);
            if jx < 0 || jy < 0 || jx >= spec.nx as isize || jy >= spec.ny as isize {
                continue;
            }
            let j = jy as usize * spec.nx + jx as usize;
            if free[j] {
                continue;
            }
            let step = if mask[j] {
                1
            } else {
                1 + ((1.0 - probability[j].clamp(0.0, 1.0)) * SCALE) as u64
            };
            let nd = d.saturating_add(step);
            if nd < dist[j] {
                dist[j] = nd;
                prev[j] = cell;
                heap.push(Reverse((nd, j)));
            }
        }
    }
    None
}

/// One executed action as the estimator is allowed to see it: where the
/// knife went and the closest it came to the (hidden) core.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SensedStep {
    pub pose_before: KnifePose,
    pub pose_after: KnifePose,
    /// Minimum core SDF over the swept cutting edge during this action;
    /// negative means a collision was sensed.
    pub min_sdf: Real,
}

/// Assemble evidence from an executed action log. A step with negative
/// clearance registers one collision at the deepest-penetrating edge sample
/// of its final pose; every non-colliding step carves the swept blade
/// capsule into free space. Cells holding a collision point are never
/// carved, whatever the sweep rasterization says.
pub fn build_evidence(
    steps: &[SensedStep],
    knife: &KnifeGeometry,
    core: &CoreShape,
    window: GridSpec,
) -> CollisionEvidence {
    let mut evidence = CollisionEvidence::empty(window);
    for step in steps {
        if step.min_sdf < 0.0 {
            let samples = knife.edge_samples(&step.pose_after, DETECT_SAMPLES);
            let deepest = samples
                .into_iter()
                .min_by(|a, b| core.sdf(*a).partial_cmp(&core.sdf(*b)).unwrap())
                .expect("edge always has samples");
            evidence.collision_points.push(deepest);
            evidence.collision_poses.push(step.pose_after);
        } else {
            carve_sweep(&mut evidence, knife, step);
        }
    }
    for p in &evidence.collision_points {
        if let Some(cell) = cell_of(&window, *p) {
            evidence.free_space[cell] = false;
        }
    }
    evidence
}

/// Rasterize the capsule swept by the cutting edge over one clearance-
/// certified action into the free-space grid.
fn carve_sweep(evidence: &mut CollisionEvidence, knife: &KnifeGeometry, step: &SensedStep) {
    let spec = evidence.window;
    let travel = (step.pose_after.tip - step.pose_before.tip).norm()
        + knife.blade_length * crate::geometry::knife::wrap_angle(
            step.pose_after.theta - step.pose_before.theta,
        )
        .abs();
    let n_interp = ((travel / (0.5 * spec.cell)).ceil() as usize).max(1);
    let r = knife.half_thickness;
    for k in 0..=n_interp {
        let t = k as Real / n_interp as Real;
        let tip = step.pose_before.tip + t * (step.pose_after.tip - step.pose_before.tip);
        let theta = step.pose_before.theta
            + t * crate::geometry::knife::wrap_angle(
                step.pose_after.theta - step.pose_before.theta,
            );
        let pose = KnifePose::new(tip, theta);
        let a = pose.tip;
        let b = pose.tip + knife.blade_length * pose.blade_dir();
        let lo = Vec2::new(a.x.min(b.x) - r, a.y.min(b.y) - r);
        let hi = Vec2::new(a.x.max(b.x) + r, a.y.max(b.y) + r);
        let ix0 = (((lo.x - spec.origin.x) / spec.cell - 0.5).floor().max(0.0)) as usize;
        let iy0 = (((lo.y - spec.origin.y) / spec.cell - 0.5).floor().max(0.0)) as usize;
        let ix1 = ((((hi.x - spec.origin.x) / spec.cell - 0.5).ceil()).max(0.0) as usize)
            .min(spec.nx.saturating_sub(1));
        let iy1 = ((((hi.y - spec.origin.y) / spec.cell - 0.5).ceil()).max(0.0) as usize)
            .min(spec.ny.saturating_sub(1));
        let ab = b - a;
        let len2 = ab.norm_squared();
        for iy in iy0..=iy1 {
            for ix in ix0..=ix1 {
                let p = spec.center(ix, iy);
                let s = if len2 > 0.0 { ((p - a).dot(&ab) / len2).clamp(0.0, 1.0) } else { 0.0 };
                if (p - (a + s * ab)).norm() <= r {
                    evidence.free_space[iy * spec.nx + ix] = true;
                }
            }
        }
    }
}

/// Synthetic-evidence protocol: `k` contact points sampled uniformly by
/// arclength on the front section of a ground-truth contour (the only part
/// the descending knife can strike; the back of the family is fixed and
/// carries no shape information), with no free space.
pub fn synthetic_contour_evidence(
    core: &CoreShape,
    k: usize,
    seed: u64,
    window: GridSpec,
) -> CollisionEvidence {
    let mut rng = Rng::new(seed).stream("synthetic-evidence");
    // The contour starts at the front foot and climbs the front face first;
    // the front section ends at the first vertex reaching the apex height.
    let top_y = core.contour.iter().map(|v| v.y).fold(Real::NEG_INFINITY, Real::max);
    let front_end = core
        .contour
        .iter()
        .position(|v| v.y >= top_y - 1e-9)
        .unwrap_or(core.contour.len() - 1)
        .max(1);
    let mut cumulative = Vec::with_capacity(front_end + 1);
    let mut total = 0.0;
    cumulative.push(0.0);
    for i in 0..front_end {
        total += (core.contour[i + 1] - core.contour[i]).norm();
        cumulative.push(total);
    }
    let mut evidence = CollisionEvidence::empty(window);
    for _ in 0..k {
        let s = rng.uniform() * total;
        let seg = match cumulative.binary_search_by(|c| c.partial_cmp(&s).unwrap()) {
            Ok(i) => i.min(front_end - 1),
            Err(i) => i - 1,
        };
        let span = cumulative[seg + 1] - cumulative[seg];
        let t = if span > 0.0 { (s - cumulative[seg]) / span } else { 0.0 };
        let p = core.contour[seg] + t * (core.contour[seg + 1] - core.contour[seg]);
        evidence.collision_points.push(p);
        evidence
            .collision_poses
            .push(KnifePose::new(p, std::f64::consts::FRAC_PI_2));
    }
    evidence
}
