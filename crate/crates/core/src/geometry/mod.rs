//! Core shape families, generation and signed distance queries.
//!
//! A core is a rigid 2D shape that sits on the chopping board at a known
//! anchor point. Training-family cores share a construction: a front contour
//! given by a natural cubic spline over the core height (node offsets are the
//! sampled degrees of freedom, measured from the front base line through the
//! anchor), closed by a fixed back contour (a left semicircular arc) plus
//! straight top and bottom edges. Out-of-distribution families are plain
//! triangles, rectangles and ellipses inside the same bounding box.

pub mod grid;
pub mod knife;
pub mod polygon;
pub mod spline;

use serde::{Deserialize, Serialize};

use crate::rng::Rng;
use crate::{Real, Vec2};
use spline::NaturalCubic;

/// Vertical extent of every spline-family core, meters.
pub const CORE_HEIGHT: Real = 0.07;
/// Node offsets are sampled uniformly from `[-NODE_OFFSET_MAX, NODE_OFFSET_MAX]`.
pub const NODE_OFFSET_MAX: Real = 0.035;
/// Local x of the back chord line (negative side). Chosen beyond the worst
/// spline overshoot (41.8 mm, see the overshoot test) so the contour stays
/// simple for every offset combination.
pub const BACK_CHORD: Real = 0.045;
/// Radius of the fixed back arc; its chord spans the full core height.
pub const ARC_RADIUS: Real = CORE_HEIGHT / 2.0;
/// Maximum deviation between the polygonized contour and the analytic curve.
pub const CHORD_TOLERANCE: Real = 0.5e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoreFamily {
    Spline2,
    Spline3,
    Spline4,
    Triangle,
    Rectangle,
    Ellipse,
}

impl CoreFamily {
    pub fn tag(&self) -> &'static str {
        match self {
            CoreFamily::Spline2 => "spline2",
            CoreFamily::Spline3 => "spline3",
            CoreFamily::Spline4 => "spline4",
            CoreFamily::Triangle => "triangle",
            CoreFamily::Rectangle => "rectangle",
            CoreFamily::Ellipse => "ellipse",
        }
    }

    pub fn is_spline(&self) -> bool {
        matches!(self, CoreFamily::Spline2 | CoreFamily::Spline3 | CoreFamily::Spline4)
    }

    pub fn spline_nodes(&self) -> Option<usize> {
        match self {
            CoreFamily::Spline2 => Some(2),
            CoreFamily::Spline3 => Some(3),
            CoreFamily::Spline4 => Some(4),
            _ => None,
        }
    }

    /// Node heights above the anchor for spline families: equally spaced over
    /// the full core height, endpoints included.
    pub fn node_heights(n: usize) -> Vec<Real> {
        (0..n).map(|i| CORE_HEIGHT * i as Real / (n - 1) as Real).collect()
    }

    /// The out-of-distribution evaluation families.
    pub fn ood_families() -> [CoreFamily; 5] {
        [
            CoreFamily::Spline2,
            CoreFamily::Spline4,
            CoreFamily::Triangle,
            CoreFamily::Rectangle,
            CoreFamily::Ellipse,
        ]
    }
}

/// A generated core: sampled parameters plus the polygonized world-space
/// contour (counter-clockwise simple polygon).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoreShape {
    pub family: CoreFamily,
    pub seed: u64,
    /// Family degrees of freedom (spline node offsets, or shape extents).
    pub params: Vec<Real>,
    /// World position of the front-base-line foot; cores rest on the board.
    pub anchor: Vec2,
    pub contour: Vec<Vec2>,
}

impl CoreShape {
    /// Signed distance to the core contour, negative inside.
    pub fn sdf(&self, p: Vec2) -> Real {
        polygon::signed_distance(&self.contour, p)
    }

    pub fn contains(&self, p: Vec2) -> bool {
        polygon::contains(&self.contour, p)
    }

    /// Unit outward gradient of the signed distance.
    pub fn sdf_gradient(&self, p: Vec2) -> Vec2 {
        polygon::sdf_gradient(&self.contour, p)
    }

    pub fn area(&self) -> Real {
        polygon::signed_area(&self.contour).abs()
    }

    pub fn bounds(&self) -> (Vec2, Vec2) {
        let mut lo = Vec2::new(Real::INFINITY, Real::INFINITY);
        let mut hi = Vec2::new(Real::NEG_INFINITY, Real::NEG_INFINITY);
        for v in &self.contour {
            lo.x = lo.x.min(v.x);
            lo.y = lo.y.min(v.y);
            hi.x = hi.x.max(v.x);
            hi.y = hi.y.max(v.y);
        }
        (lo, hi)
    }

    /// Builds a spline-family core from explicit node offsets (used both by
    /// generation and by the estimator's candidate enumeration).
    pub fn from_offsets(family: CoreFamily, offsets: &[Real], anchor: Vec2, seed: u64) -> CoreShape {
        let n = family.spline_nodes().expect("spline family");
        assert_eq!(offsets.len(), n);
        let heights = CoreFamily::node_heights(n);
        let front = NaturalCubic::fit(&heights, offsets);
        let contour = spline_contour(&front, anchor);
        CoreShape { family, seed, params: offsets.to_vec(), anchor, contour }
    }
}

/// Adaptive polyline sampling of a parametric curve. Returns points for
/// `t0..=t1`; subdivides until the midpoint chord deviation is within
/// tolerance (minimum 8 segments per invocation).
fn sample_curve<F: Fn(Real) -> Vec2>(f: &F, t0: Real, t1: Real, tol: Real) -> Vec<Vec2> {
    fn recurse<F: Fn(Real) -> Vec2>(
        f: &F,
        t0: Real,
        p0: Vec2,
        t1: Real,
        p1: Vec2,
        tol: Real,
        depth: usize,
        out: &mut Vec<Vec2>,
    ) {
        let tm = 0.5 * (t0 + t1);
        let pm = f(tm);
        let chord = p1 - p0;
        let len2 = chord.norm_squared();
        let dev = if len2 > 0.0 {
            let t = ((pm - p0).dot(&chord) / len2).clamp(0.0, 1.0);
            (pm - (p0 + chord * t)).norm()
        } else {
            (pm - p0).norm()
        };
        if depth >= 14 || (depth >= 3 && dev <= tol) {
            out.push(p1);
        } else {
            recurse(f, t0, p0, tm, pm, tol, depth + 1, out);
            recurse(f, tm, pm, t1, p1, tol, depth + 1, out);
        }
    }
    let p0 = f(t0);
    let p1 = f(t1);
    let mut out = vec![p0];
    // Midpoint-only testing underestimates deviation; sample to a stricter
    // internal tolerance so the contract tolerance holds everywhere.
    recurse(f, t0, p0, t1, p1, 0.6 * tol, 0, &mut out);
    out
}

/// Closes the spline front contour with the fixed top edge, back arc and
/// bottom edge. Counter-clockwise, anchored at `anchor`.
fn spline_contour(front: &NaturalCubic, anchor: Vec2) -> Vec<Vec2> {
    let front_curve = |y: Real| anchor + Vec2::new(front.eval(y), y);
    let mut contour = sample_curve(&front_curve, 0.0, CORE_HEIGHT, CHORD_TOLERANCE);
    // Top edge to the back chord.
    let back_top = anchor + Vec2::new(-BACK_CHORD, CORE_HEIGHT);
    if (contour.last().unwrap() - back_top).norm() > 1e-12 {
        contour.push(back_top);
    }
    // Back arc, bulging left, from top to bottom.
    let center = anchor + Vec2::new(-BACK_CHORD, CORE_HEIGHT / 2.0);
    let arc = |a: Real| center + Vec2::new(ARC_RADIUS * a.cos(), ARC_RADIUS * a.sin());
    let arc_pts = sample_curve(&arc, std::f64::consts::FRAC_PI_2, 1.5 * std::f64::consts::PI, CHORD_TOLERANCE);
    contour.extend_from_slice(&arc_pts[1..]);
    // Bottom edge back to the front foot closes implicitly.
    let front_foot = front_curve(0.0);
    if (contour.last().unwrap() - front_foot).norm() < 1e-12 {
        contour.pop();
    }
    contour
}

/// Samples a core from its family distribution. The stream is keyed by
/// `(family, seed)` so datasets are reproducible draw-by-draw.
pub fn gen_core(family: CoreFamily, seed: u64, anchor: Vec2) -> CoreShape {
    let mut rng = Rng::new(seed).stream(family.tag());
    // Family bounding box shared by all out-of-distribution shapes.
    let x_min = -BACK_CHORD - ARC_RADIUS;
    let x_max = NODE_OFFSET_MAX;
    match family {
        CoreFamily::Spline2 | CoreFamily::Spline3 | CoreFamily::Spline4 => {
            let n = family.spline_nodes().unwrap();
            let offsets: Vec<Real> =
                (0..n).map(|_| rng.range(-NODE_OFFSET_MAX, NODE_OFFSET_MAX)).collect();
            CoreShape::from_offsets(family, &offsets, anchor, seed)
        }
        CoreFamily::Triangle => {
            let x0 = rng.range(x_min, -0.03);
            let x1 = rng.range(0.005, x_max);
            let h = rng.range(0.045, CORE_HEIGHT);
            let xa = rng.range(x0 + 0.01, x1 - 0.01);
            let contour = vec![
                anchor + Vec2::new(x0, 0.0),
                anchor + Vec2::new(x1, 0.0),
                anchor + Vec2::new(xa, h),
            ];
            CoreShape { family, seed, params: vec![x0, x1, xa, h], anchor, contour }
        }
        CoreFamily::Rectangle => {
            let w = rng.range(0.05, 0.10);
            let h = rng.range(0.045, CORE_HEIGHT);
            let x0 = rng.range(x_min, x_max - w);
            let contour = vec![
                anchor + Vec2::new(x0, 0.0),
                anchor + Vec2::new(x0 + w, 0.0),
                anchor + Vec2::new(x0 + w, h),
                anchor + Vec2::new(x0, h),
            ];
            CoreShape { family, seed, params: vec![x0, w, h], anchor, contour }
        }
        CoreFamily::Ellipse => {
            let a = rng.range(0.025, 0.054);
            let b = rng.range(0.022, ARC_RADIUS);
            let cx = rng.range(x_min + a, x_max - a);
            let center = anchor + Vec2::new(cx, b);
            let curve = |t: Real| center + Vec2::new(a * t.cos(), b * t.sin());
            let mut contour =
                sample_curve(&curve, 0.0, std::f64::consts::TAU, CHORD_TOLERANCE);
            contour.pop(); // closed curve: drop the duplicated seam point
            CoreShape { family, seed, params: vec![cx, a, b], anchor, contour }
        }
    }
}
