//! Deterministic SVG views of episodes and planned trajectories.
//!
//! The output is plain text assembled in a fixed order with fixed-precision
//! coordinates, so renders of equal data are byte-identical and can be
//! hashed or diffed by tests. Trajectory polylines are the only `<path>`
//! elements, one per contiguous run of same-kind steps, so counting `<path`
//! occurrences doubles as a structural check on an episode log.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::estimator::CoreEstimate;
use crate::geometry::grid::GridSpec;
use crate::geometry::knife::KnifePose;
use crate::geometry::CoreShape;
use crate::runner::{EpisodeResult, StepKind};
use crate::scene::SceneConfig;
use crate::{Real, Vec2};

const CORE_FILL: &str = "#9e9e9e";
const CORE_EDGE: &str = "#616161";
const ESTIMATE_COLOR: &str = "#8b5a2b";
const FORWARD_COLOR: &str = "#1565c0";
const RETRACT_COLOR: &str = "#c62828";
const SEED_COLOR: &str = "#90a4ae";
const BOARD_FILL: &str = "#b0bec5";
const SOFT_FILL: &str = "#eef3df";
const KNIFE_FILL: &str = "#cfd8dc";
const KNIFE_EDGE: &str = "#37474f";
const COLLISION_COLOR: &str = "#e65100";

/// World square rendered to this many pixels, plus a margin on each side.
const VIEW: Real = 512.0;
const MARGIN: Real = 24.0;

struct Canvas {
    scale: Real,
    domain: Real,
    svg: String,
}

impl Canvas {
    fn new(domain: Real) -> Self {
        let side = VIEW + 2.0 * MARGIN;
        let mut svg = String::new();
        let _ = writeln!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{side}" height="{side}" viewBox="0 0 {side} {side}">"#
        );
        let _ = writeln!(svg, r##"<rect width="{side}" height="{side}" fill="#ffffff"/>"##);
        Canvas { scale: VIEW / domain, domain, svg }
    }

    /// World to pixel, y flipped so up is up.
    fn map(&self, p: Vec2) -> (Real, Real) {
        (MARGIN + p.x * self.scale, MARGIN + (self.domain - p.y) * self.scale)
    }

    fn points_attr(&self, points: &[Vec2]) -> String {
        let mut s = String::new();
        for (i, p) in points.iter().enumerate() {
            let (x, y) = self.map(*p);
            if i > 0 {
                s.push(' ');
            }
            let _ = write!(s, "{x:.2},{y:.2}");
        }
        s
    }

    fn rect_world(&mut self, min: Vec2, max: Vec2, fill: &str) {
        let (x0, y1) = self.map(min);
        let (x1, y0) = self.map(max);
        let _ = writeln!(
            self.svg,
            r#"<rect x="{x0:.2}" y="{y0:.2}" width="{:.2}" height="{:.2}" fill="{fill}"/>"#,
            x1 - x0,
            y1 - y0
        );
    }

    fn polygon(&mut self, points: &[Vec2], fill: &str, opacity: Real, stroke: &str) {
        let _ = writeln!(
            self.svg,
            r#"<polygon points="{}" fill="{fill}" fill-opacity="{opacity}" stroke="{stroke}" stroke-width="1"/>"#,
            self.points_attr(points)
        );
    }

    fn polyline_path(&mut self, points: &[Vec2], stroke: &str, dash: Option<&str>) {
        let mut d = String::new();
        for (i, p) in points.iter().enumerate() {
            let (x, y) = self.map(*p);
            let _ = write!(d, "{}{x:.2} {y:.2}", if i == 0 { "M" } else { " L" });
        }
        let dash = dash.map(|v| format!(r#" stroke-dasharray="{v}""#)).unwrap_or_default();
        let _ = writeln!(
            self.svg,
            r#"<path d="{d}" fill="none" stroke="{stroke}" stroke-width="2"{dash}/>"#
        );
    }

    fn circle(&mut self, center: Vec2, r_px: Real, stroke: &str) {
        let (x, y) = self.map(center);
        let _ = writeln!(
            self.svg,
            r#"<circle cx="{x:.2}" cy="{y:.2}" r="{r_px}" fill="none" stroke="{stroke}" stroke-width="2"/>"#
        );
    }

    fn legend(&mut self, entries: &[(&str, &str)]) {
        let x = MARGIN + VIEW - 150.0;
        for (i, (color, label)) in entries.iter().enumerate() {
            let y = MARGIN + 12.0 + 18.0 * i as Real;
            let _ = writeln!(
                self.svg,
                r#"<rect x="{x}" y="{y}" width="12" height="12" fill="{color}"/>"#
            );
            let _ = writeln!(
                self.svg,
                r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12">{label}</text>"#,
                x + 18.0,
                y + 10.0
            );
        }
    }

    fn finish(mut self) -> String {
        self.svg.push_str("</svg>\n");
        self.svg
    }
}

/// Boundary of a cell mask as closed corner-lattice loops, interior on the
/// left, collinear runs collapsed. Deterministic: edges chain in BTreeMap
/// order starting from the lexicographically smallest corner.
fn mask_loops(mask: &[bool], spec: &GridSpec) -> Vec<Vec<Vec2>> {
    assert_eq!(mask.len(), spec.len());
    let at = |x: i64, y: i64| {
        x >= 0
            && y >= 0
            && (x as usize) < spec.nx
            && (y as usize) < spec.ny
            && mask[y as usize * spec.nx + x as usize]
    };
    let mut edges: BTreeMap<(u32, u32), Vec<(u32, u32)>> = BTreeMap::new();
    for cy in 0..spec.ny as i64 {
        for cx in 0..spec.nx as i64 {
            if !at(cx, cy) {
                continue;
            }
            let (x, y) = (cx as u32, cy as u32);
            let mut edge = |a: (u32, u32), b: (u32, u32)| edges.entry(a).or_default().push(b);
            if !at(cx, cy - 1) {
                edge((x, y), (x + 1, y));
            }
            if !at(cx + 1, cy) {
                edge((x + 1, y), (x + 1, y + 1));
            }
            if !at(cx, cy + 1) {
                edge((x + 1, y + 1), (x, y + 1));
            }
            if !at(cx - 1, cy) {
                edge((x, y + 1), (x, y));
            }
        }
    }
    for outs in edges.values_mut() {
        outs.sort_unstable();
    }
    let corner =
        |(x, y): (u32, u32)| spec.origin + Vec2::new(x as Real * spec.cell, y as Real * spec.cell);
    let mut loops = Vec::new();
    while let Some((&start, _)) = edges.iter().next() {
        let mut path = vec![start];
        let mut cur = start;
        loop {
            let Some(outs) = edges.get_mut(&cur) else { break };
            let next = outs.remove(0);
            if outs.is_empty() {
                edges.remove(&cur);
            }
            if next == start {
                break;
            }
            path.push(next);
            cur = next;
        }
        // drop corners interior to straight runs (the closing edge too)
        let n = path.len();
        let mut kept = Vec::with_capacity(n);
        for i in 0..n {
            let a = path[(i + n - 1) % n];
            let b = path[i];
            let c = path[(i + 1) % n];
            let colinear = (b.0 as i64 - a.0 as i64, b.1 as i64 - a.1 as i64)
                == (c.0 as i64 - b.0 as i64, c.1 as i64 - b.1 as i64);
            if !colinear {
                kept.push(corner(b));
            }
        }
        loops.push(kept);
    }
    loops
}

fn draw_workspace(c: &mut Canvas, scene: &SceneConfig, core: &CoreShape) {
    c.rect_world(Vec2::new(0.0, 0.0), Vec2::new(scene.domain, scene.board_y), BOARD_FILL);
    c.rect_world(scene.soft_min, scene.soft_max, SOFT_FILL);
    c.polygon(&core.contour, CORE_FILL, 1.0, CORE_EDGE);
}

/// One closed-loop episode: workspace, final core estimate, tip trajectory
/// split into forward (blue) and retraction (red) runs, collision marks,
/// final knife silhouette, legend.
pub fn render_episode(
    scene: &SceneConfig,
    core: &CoreShape,
    estimate: Option<&CoreEstimate>,
    result: &EpisodeResult,
) -> String {
    let mut c = Canvas::new(scene.domain);
    draw_workspace(&mut c, scene, core);
    if let Some(est) = estimate {
        for lp in mask_loops(&est.mask, &est.window) {
            c.polygon(&lp, ESTIMATE_COLOR, 0.35, ESTIMATE_COLOR);
        }
    }
    let tips: Vec<Vec2> = result.poses.iter().map(|p| p.tip).collect();
    let mut i = 0;
    while i < result.kinds.len() && i + 1 < tips.len() {
        let kind = result.kinds[i];
        let mut j = i;
        while j + 1 < result.kinds.len() && result.kinds[j + 1] == kind {
            j += 1;
        }
        let color = match kind {
            StepKind::Forward => FORWARD_COLOR,
            StepKind::Retract => RETRACT_COLOR,
        };
        c.polyline_path(&tips[i..=(j + 1).min(tips.len() - 1)], color, None);
        i = j + 1;
    }
    for ev in &result.collision_events {
        c.circle(ev.point, 4.0, COLLISION_COLOR);
    }
    if let Some(last) = result.poses.last() {
        c.polygon(&scene.knife.silhouette(last), KNIFE_FILL, 0.8, KNIFE_EDGE);
    }
    let mut entries = vec![(CORE_FILL, "core")];
    if estimate.is_some() {
        entries.push((ESTIMATE_COLOR, "estimate"));
    }
    entries.push((FORWARD_COLOR, "forward"));
    entries.push((RETRACT_COLOR, "retraction"));
    c.legend(&entries);
    c.finish()
}

/// Planning figure: seed trajectory (dashed gray) against the optimized one
/// (solid blue) over the workspace, knife drawn at the optimized end pose.
pub fn render_plan(
    scene: &SceneConfig,
    core: &CoreShape,
    seed: &[KnifePose],
    optimized: &[KnifePose],
) -> String {
    let mut c = Canvas::new(scene.domain);
    draw_workspace(&mut c, scene, core);
    let tips = |poses: &[KnifePose]| poses.iter().map(|p| p.tip).collect::<Vec<_>>();
    if seed.len() > 1 {
        c.polyline_path(&tips(seed), SEED_COLOR, Some("6 4"));
    }
    if optimized.len() > 1 {
        c.polyline_path(&tips(optimized), FORWARD_COLOR, None);
    }
    if let Some(last) = optimized.last() {
        c.polygon(&scene.knife.silhouette(last), KNIFE_FILL, 0.8, KNIFE_EDGE);
    }
    c.legend(&[
        (CORE_FILL, "core"),
        (SEED_COLOR, "seed trajectory"),
        (FORWARD_COLOR, "optimized trajectory"),
    ]);
    c.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::estimate_to_sdf;
    use crate::geometry::gen_core;
    use crate::geometry::CoreFamily;
    use crate::opt::Action;
    use crate::runner::{CollisionEvent, EpisodeStatus};

    #[test]
    fn single_cell_mask_is_one_square_loop() {
        let spec = GridSpec::square(3, 0.3, Vec2::new(0.0, 0.0));
        let mut mask = vec![false; 9];
        mask[4] = true; // center cell
        let loops = mask_loops(&mask, &spec);
        assert_eq!(loops.len(), 1);
        let lp = &loops[0];
        assert_eq!(lp.len(), 4);
        for p in lp {
            assert!((p.x - 0.1).abs() < 1e-12 || (p.x - 0.2).abs() < 1e-12);
            assert!((p.y - 0.1).abs() < 1e-12 || (p.y - 0.2).abs() < 1e-12);
        }
    }

    #[test]
    fn l_tromino_collapses_to_six_corners() {
        let spec = GridSpec::square(4, 0.4, Vec2::new(0.0, 0.0));
        let mut mask = vec![false; 16];
        for (x, y) in [(1, 1), (2, 1), (1, 2)] {
            mask[y * 4 + x] = true;
        }
        let loops = mask_loops(&mask, &spec);
        assert_eq!(loops.len(), 1);
        assert_eq!(loops[0].len(), 6);
    }

    fn synthetic_result() -> EpisodeResult {
        let mut poses = Vec::new();
        for i in 0..5 {
            poses.push(KnifePose::new(
                Vec2::new(0.12, 0.18 - 0.002 * i as Real),
                std::f64::consts::FRAC_PI_2,
            ));
        }
        let kinds = vec![
            StepKind::Forward,
            StepKind::Forward,
            StepKind::Retract,
            StepKind::Forward,
        ];
        EpisodeResult {
            status: EpisodeStatus::Completed,
            poses,
            actions: vec![Action { dpos: Vec2::new(0.0, -0.002), dtheta: 0.0 }; 4],
            kinds,
            collision_events: vec![CollisionEvent { step: 1, point: Vec2::new(0.1, 0.1) }],
            step_energies: vec![0.01; 4],
            cut_mass_ratio: 0.5,
            estimates: Vec::new(),
            forward_step_count: 3,
        }
    }

    #[test]
    fn path_count_equals_run_count_and_output_is_stable() {
        let scene = SceneConfig::default();
        let core = gen_core(CoreFamily::Spline3, 3, scene.anchor);
        let result = synthetic_result();
        let svg = render_episode(&scene, &core, None, &result);
        // kinds F,F,R,F make three same-kind runs
        assert_eq!(svg.matches("<path ").count(), 3);
        assert_eq!(svg.matches("<circle ").count(), 1);
        assert!(svg.starts_with("<svg "));
        assert!(svg.ends_with("</svg>\n"));
        assert_eq!(svg, render_episode(&scene, &core, None, &result));
    }

    #[test]
    fn estimate_layer_adds_polygons_and_a_legend_entry() {
        let scene = SceneConfig::default();
        let core = gen_core(CoreFamily::Spline3, 3, scene.anchor);
        let window = GridSpec::square(8, scene.domain, Vec2::new(0.0, 0.0));
        let mut mask = vec![false; 64];
        for (x, y) in [(3, 1), (4, 1), (3, 2), (4, 2)] {
            mask[y * 8 + x] = true;
        }
        let est = CoreEstimate {
            window,
            probability: mask.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect(),
            sdf: estimate_to_sdf(&mask, window).unwrap(),
            mask,
            threshold_used: 0.3,
            surviving_candidates: 1,
        };
        let result = synthetic_result();
        let plain = render_episode(&scene, &core, None, &result);
        let layered = render_episode(&scene, &core, Some(&est), &result);
        assert_eq!(layered.matches("<polygon ").count(), plain.matches("<polygon ").count() + 1);
        assert!(layered.contains(">estimate</text>"));
        assert!(!plain.contains(">estimate</text>"));
    }

    #[test]
    fn plan_figure_draws_both_trajectories() {
        let scene = SceneConfig::default();
        let core = gen_core(CoreFamily::Rectangle, 5, scene.anchor);
        let seed: Vec<KnifePose> = (0..4)
            .map(|i| {
                KnifePose::new(
                    Vec2::new(0.2, 0.19 - 0.002 * i as Real),
                    std::f64::consts::FRAC_PI_2,
                )
            })
            .collect();
        let optimized: Vec<KnifePose> = seed
            .iter()
            .map(|p| KnifePose::new(p.tip - Vec2::new(0.01, 0.0), p.theta))
            .collect();
        let svg = render_plan(&scene, &core, &seed, &optimized);
        assert_eq!(svg.matches("<path ").count(), 2);
        assert_eq!(svg.matches("stroke-dasharray").count(), 1);
    }
}
