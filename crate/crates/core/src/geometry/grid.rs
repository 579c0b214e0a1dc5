//! Sampled signed distance fields on a regular grid.

use serde::{Deserialize, Serialize};

use crate::{Real, Vec2};

/// Cell-centered regular grid: sample `(ix, iy)` sits at
/// `origin + ((ix+0.5)*cell, (iy+0.5)*cell)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub cell: Real,
    pub origin: Vec2,
}

impl GridSpec {
    pub fn square(n: usize, extent: Real, origin: Vec2) -> Self {
        GridSpec { nx: n, ny: n, cell: extent / n as Real, origin }
    }

    pub fn center(&self, ix: usize, iy: usize) -> Vec2 {
        self.origin + Vec2::new((ix as Real + 0.5) * self.cell, (iy as Real + 0.5) * self.cell)
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Scalar field sampled at cell centers with bilinear reconstruction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SdfGrid {
    pub spec: GridSpec,
    /// Row-major, `values[iy * nx + ix]`.
    pub values: Vec<Real>,
}

impl SdfGrid {
    /// Samples `f` at every cell center.
    pub fn rasterize<F: Fn(Vec2) -> Real>(spec: GridSpec, f: F) -> Self {
        let mut values = Vec::with_capacity(spec.len());
        for iy in 0..spec.ny {
            for ix in 0..spec.nx {
                values.push(f(spec.center(ix, iy)));
            }
        }
        SdfGrid { spec, values }
    }

    pub fn at(&self, ix: usize, iy: usize) -> Real {
        self.values[iy * self.spec.nx + ix]
    }

    /// Continuous cell-center coordinates of `p`, clamped to the valid
    /// bilinear patch domain.
    fn local(&self, p: Vec2) -> (Real, Real) {
        let u = ((p.x - self.spec.origin.x) / self.spec.cell - 0.5)
            .clamp(0.0, (self.spec.nx - 1) as Real);
        let v = ((p.y - self.spec.origin.y) / self.spec.cell - 0.5)
            .clamp(0.0, (self.spec.ny - 1) as Real);
        (u, v)
    }

    /// Bilinear interpolation; clamps outside the sampled interior.
    pub fn sample(&self, p: Vec2) -> Real {
        let (u, v) = self.local(p);
        let ix = (u.floor() as usize).min(self.spec.nx - 2);
        let iy = (v.floor() as usize).min(self.spec.ny - 2);
        let fx = u - ix as Real;
        let fy = v - iy as Real;
        let v00 = self.at(ix, iy);
        let v10 = self.at(ix + 1, iy);
        let v01 = self.at(ix, iy + 1);
        let v11 = self.at(ix + 1, iy + 1);
        v00 * (1.0 - fx) * (1.0 - fy) + v10 * fx * (1.0 - fy) + v01 * (1.0 - fx) * fy
            + v11 * fx * fy
    }

    /// Gradient of the bilinear reconstruction at `p`.
    pub fn gradient(&self, p: Vec2) -> Vec2 {
        let (u, v) = self.local(p);
        let ix = (u.floor() as usize).min(self.spec.nx - 2);
        let iy = (v.floor() as usize).min(self.spec.ny - 2);
        let fx = u - ix as Real;
        let fy = v - iy as Real;
        let v00 = self.at(ix, iy);
        let v10 = self.at(ix + 1, iy);
        let v01 = self.at(ix, iy + 1);
        let v11 = self.at(ix + 1, iy + 1);
        let dx = (v10 - v00) * (1.0 - fy) + (v11 - v01) * fy;
        let dy = (v01 - v00) * (1.0 - fx) + (v11 - v10) * fx;
        Vec2::new(dx / self.spec.cell, dy / self.spec.cell)
    }

    pub fn min_value(&self) -> Real {
        self.values.iter().cloned().fold(Real::INFINITY, Real::min)
    }
}

/// Exact Euclidean squared distance transform of a 1D indicator row
/// (Felzenszwalb-Huttenlocher lower envelope of parabolas).
fn dt1d(f: &[Real], out: &mut Vec<Real>) {
    let n = f.len();
    out.clear();
    out.resize(n, 0.0);
    let mut v = vec![0usize; n];
    let mut z = vec![0.0; n + 1];
    let mut k = 0usize;
    v[0] = 0;
    z[0] = Real::NEG_INFINITY;
    z[1] = Real::INFINITY;
    for q in 1..n {
        loop {
            let vk = v[k];
            let s = ((f[q] + (q * q) as Real) - (f[vk] + (vk * vk) as Real))
                / (2.0 * q as Real - 2.0 * vk as Real);
            if s <= z[k] {
                if k == 0 {
                    break;
                }
                k -= 1;
            } else {
                k += 1;
                v[k] = q;
                z[k] = s;
                z[k + 1] = Real::INFINITY;
                break;
            }
        }
    }
    k = 0;
    for q in 0..n {
        while z[k + 1] < q as Real {
            k += 1;
        }
        let d = q as Real - v[k] as Real;
        out[q] = d * d + f[v[k]];
    }
}

/// Squared distance (in cells) from every cell to the nearest `true` cell.
/// Cells that are `true` get 0. Rows then columns.
fn edt_squared(mask: &[bool], nx: usize, ny: usize) -> Vec<Real> {
    const INF: Real = 1e18;
    let mut d = vec![INF; nx * ny];
    for (i, &m) in mask.iter().enumerate() {
        if m {
            d[i] = 0.0;
        }
    }
    let mut row = vec![0.0; nx.max(ny)];
    let mut out = Vec::with_capacity(nx.max(ny));
    for iy in 0..ny {
        row[..nx].copy_from_slice(&d[iy * nx..(iy + 1) * nx]);
        dt1d(&row[..nx], &mut out);
        d[iy * nx..(iy + 1) * nx].copy_from_slice(&out);
    }
    let mut col = vec![0.0; ny];
    for ix in 0..nx {
        for iy in 0..ny {
            col[iy] = d[iy * nx + ix];
        }
        dt1d(&col[..ny], &mut out);
        for iy in 0..ny {
            d[iy * nx + ix] = out[iy];
        }
    }
    d
}

/// Signed distance field of a binary mask, negative inside, in meters.
/// Distances are measured to the mask boundary: half a cell is subtracted
/// from the center-to-center transform so a cell right at the boundary reads
/// +-cell/2 and the signed field steps by at most one cell across it.
pub fn sdf_from_mask(mask: &[bool], spec: GridSpec) -> SdfGrid {
    assert_eq!(mask.len(), spec.len());
    let to_inside = edt_squared(mask, spec.nx, spec.ny);
    let inverted: Vec<bool> = mask.iter().map(|m| !m).collect();
    let to_outside = edt_squared(&inverted, spec.nx, spec.ny);
    let values = mask
        .iter()
        .enumerate()
        .map(|(i, &m)| {
            if m {
                -(to_outside[i].sqrt() - 0.5) * spec.cell
            } else {
                (to_inside[i].sqrt() - 0.5) * spec.cell
            }
        })
        .collect();
    SdfGrid { spec, values }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn circle_sdf(c: Vec2, r: Real) -> impl Fn(Vec2) -> Real {
        move |p: Vec2| (p - c).norm() - r
    }

    #[test]
    fn rasterize_samples_cell_centers_exactly() {
        let spec = GridSpec::square(16, 0.25, Vec2::new(0.0, 0.0));
        let f = circle_sdf(Vec2::new(0.1, 0.12), 0.05);
        let g = SdfGrid::rasterize(spec, &f);
        for iy in [0, 7, 15] {
            for ix in [0, 3, 15] {
                assert_relative_eq!(g.at(ix, iy), f(spec.center(ix, iy)), epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn bilinear_error_within_one_cell_and_halves_with_resolution() {
        let f = circle_sdf(Vec2::new(0.13, 0.11), 0.06);
        let probes: Vec<Vec2> = (0..200)
            .map(|i| {
                let t = i as Real / 200.0;
                Vec2::new(0.02 + 0.2 * t, 0.02 + 0.2 * ((7.0 * t).sin() * 0.5 + 0.5))
            })
            .collect();
        let mut errs = Vec::new();
        for n in [32, 64] {
            let spec = GridSpec::square(n, 0.25, Vec2::new(0.0, 0.0));
            let g = SdfGrid::rasterize(spec, &f);
            let err = probes
                .iter()
                .map(|&p| (g.sample(p) - f(p)).abs())
                .fold(0.0, Real::max);
            assert!(err < spec.cell, "err {err} vs cell {}", spec.cell);
            errs.push(err);
        }
        // Smooth field: bilinear error is O(h^2); allow slack for probe placement.
        assert!(errs[1] <= 0.6 * errs[0], "errors {errs:?} did not shrink");
    }

    #[test]
    fn gradient_matches_finite_differences_of_sample() {
        let spec = GridSpec::square(64, 0.25, Vec2::new(0.0, 0.0));
        let g = SdfGrid::rasterize(spec, circle_sdf(Vec2::new(0.1, 0.1), 0.05));
        let h = 1e-7;
        for p in [Vec2::new(0.17, 0.093), Vec2::new(0.061, 0.151)] {
            let grad = g.gradient(p);
            let fdx = (g.sample(p + Vec2::new(h, 0.0)) - g.sample(p - Vec2::new(h, 0.0))) / (2.0 * h);
            let fdy = (g.sample(p + Vec2::new(0.0, h)) - g.sample(p - Vec2::new(0.0, h))) / (2.0 * h);
            assert_relative_eq!(grad.x, fdx, max_relative = 1e-5, epsilon = 1e-7);
            assert_relative_eq!(grad.y, fdy, max_relative = 1e-5, epsilon = 1e-7);
        }
    }

    #[test]
    fn all_outside_grid_is_positive() {
        let spec = GridSpec::square(32, 0.25, Vec2::new(0.0, 0.0));
        let g = SdfGrid::rasterize(spec, circle_sdf(Vec2::new(0.9, 0.9), 0.05));
        assert!(g.min_value() > 0.0);
    }

    #[test]
    fn mask_sdf_of_disk_recovers_radius_at_center() {
        let spec = GridSpec::square(128, 0.25, Vec2::new(0.0, 0.0));
        let c = Vec2::new(0.125, 0.125);
        let r = 0.04;
        let mask: Vec<bool> = (0..spec.len())
            .map(|i| {
                let p = spec.center(i % spec.nx, i / spec.nx);
                (p - c).norm() < r
            })
            .collect();
        let sdf = sdf_from_mask(&mask, spec);
        let center = sdf.sample(c);
        assert!((center + r).abs() < spec.cell * 1.5, "center {center} vs -{r}");
        // Signed distance flips across the boundary.
        assert!(sdf.sample(c + Vec2::new(r + 0.02, 0.0)) > 0.0);
    }

    #[test]
    fn mask_sdf_is_grid_lipschitz() {
        let spec = GridSpec::square(64, 0.25, Vec2::new(0.0, 0.0));
        let mask: Vec<bool> = (0..spec.len())
            .map(|i| {
                let p = spec.center(i % spec.nx, i / spec.nx);
                (p - Vec2::new(0.1, 0.1)).norm() < 0.03 || p.x > 0.2
            })
            .collect();
        let sdf = sdf_from_mask(&mask, spec);
        let lim = spec.cell * std::f64::consts::SQRT_2 + 1e-12;
        for iy in 0..spec.ny {
            for ix in 0..spec.nx - 1 {
                assert!((sdf.at(ix + 1, iy) - sdf.at(ix, iy)).abs() <= lim);
            }
        }
        for iy in 0..spec.ny - 1 {
            for ix in 0..spec.nx {
                assert!((sdf.at(ix, iy + 1) - sdf.at(ix, iy)).abs() <= lim);
            }
        }
    }
}
