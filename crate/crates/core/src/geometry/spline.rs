//! Natural cubic spline interpolation on strictly increasing knots.

use crate::Real;

/// Natural cubic spline through `(knots[i], values[i])` with zero second
/// derivative at both ends. Two knots degenerate to a straight line.
#[derive(Debug, Clone)]
pub struct NaturalCubic {
    knots: Vec<Real>,
    values: Vec<Real>,
    second: Vec<Real>,
}

impl NaturalCubic {
    /// Panics if fewer than two knots or knots are not strictly increasing.
    pub fn fit(knots: &[Real], values: &[Real]) -> Self {
        assert!(knots.len() >= 2 && knots.len() == values.len());
        assert!(knots.windows(2).all(|w| w[1] > w[0]), "knots must increase");
        let n = knots.len();
        let mut second = vec![0.0; n];
        if n > 2 {
            // Tridiagonal system for interior second derivatives, natural ends.
            let m = n - 2;
            let mut diag = vec![0.0; m];
            let mut rhs = vec![0.0; m];
            let mut off = vec![0.0; m];
            for i in 0..m {
                let h0 = knots[i + 1] - knots[i];
                let h1 = knots[i + 2] - knots[i + 1];
                diag[i] = 2.0 * (h0 + h1);
                off[i] = h1;
                rhs[i] = 6.0
                    * ((values[i + 2] - values[i + 1]) / h1 - (values[i + 1] - values[i]) / h0);
            }
            // Thomas algorithm; symmetric system, sub-diagonal equals off[i-1].
            for i in 1..m {
                let w = off[i - 1] / diag[i - 1];
                diag[i] -= w * off[i - 1];
                rhs[i] -= w * rhs[i - 1];
            }
            let mut sol = vec![0.0; m];
            sol[m - 1] = rhs[m - 1] / diag[m - 1];
            for i in (0..m - 1).rev() {
                sol[i] = (rhs[i] - off[i] * sol[i + 1]) / diag[i];
            }
            second[1..=m].copy_from_slice(&sol);
        }
        NaturalCubic { knots: knots.to_vec(), values: values.to_vec(), second }
    }

    /// Evaluates the spline; clamps to end values outside the knot range.
    pub fn eval(&self, t: Real) -> Real {
        let n = self.knots.len();
        if t <= self.knots[0] {
            return self.values[0];
        }
        if t >= self.knots[n - 1] {
            return self.values[n - 1];
        }
        let i = match self.knots.binary_search_by(|k| k.partial_cmp(&t).unwrap()) {
            Ok(i) => i.min(n - 2),
            Err(i) => i - 1,
        };
        let h = self.knots[i + 1] - self.knots[i];
        let a = (self.knots[i + 1] - t) / h;
        let b = (t - self.knots[i]) / h;
        a * self.values[i]
            + b * self.values[i + 1]
            + ((a * a * a - a) * self.second[i] + (b * b * b - b) * self.second[i + 1])
                * (h * h)
                / 6.0
    }

    pub fn knots(&self) -> &[Real] {
        &self.knots
    }
}

/// Cardinal basis weights at `t`: `eval(t)` of the splines interpolating the
/// unit vectors. The spline value at `t` for node values `v` is `dot(basis, v)`.
pub fn cardinal_basis(knots: &[Real], t: Real) -> Vec<Real> {
    (0..knots.len())
        .map(|i| {
            let mut unit = vec![0.0; knots.len()];
            unit[i] = 1.0;
            NaturalCubic::fit(knots, &unit).eval(t)
        })
        .collect()
}
