//! Uniform B-spline bases.
//!
//! A [`SplineSpec`] on `[a, b]` with `G` intervals and degree `k` owns the
//! extended knot vector `t_i = a + (i - k)·h`, `h = (b - a)/G`, for
//! `i = 0..=G + 2k`. That yields `G + k` basis functions which form a
//! partition of unity on `[a, b]`.
//!
//! Inside the domain the basis is evaluated with the local Cox–de Boor
//! triangle (only the `k + 1` functions whose support covers the knot span
//! are non-zero). Outside the domain each basis function is continued
//! linearly from its value and slope at the nearest boundary, so a spline
//! keeps a non-zero gradient for outlying inputs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Grid size used when a configuration does not name one.
pub const DEFAULT_GRID: usize = 5;
/// Spline degree used when a configuration does not name one.
pub const DEFAULT_DEGREE: usize = 3;
/// Highest supported degree; bounds the fixed-size scratch buffers.
pub const MAX_DEGREE: usize = 15;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplineSpec {
    lo: f64,
    hi: f64,
    grid: usize,
    degree: usize,
    knots: Vec<f64>,
}

impl SplineSpec {
    /// Builds the uniform extended knot vector for `[lo, hi]`.
    pub fn uniform(lo: f64, hi: f64, grid: usize, degree: usize) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite()) || lo >= hi {
            return Err(Error::Parameter(format!(
                "spline domain [{lo}, {hi}] is degenerate"
            )));
        }
        if grid == 0 {
            return Err(Error::Parameter("spline grid size must be >= 1".into()));
        }
        if degree > MAX_DEGREE {
            return Err(Error::Parameter(format!(
                "spline degree {degree} exceeds {MAX_DEGREE}"
            )));
        }
        let h = (hi - lo) / grid as f64;
        let knots = (0..=grid + 2 * degree)
            .map(|i| lo + (i as f64 - degree as f64) * h)
            .collect();
        Ok(SplineSpec {
            lo,
            hi,
            grid,
            degree,
            knots,
        })
    }

    /// `[-1, 1]` with the default grid and degree.
    pub fn default_domain(grid: usize, degree: usize) -> Result<Self> {
        Self::uniform(-1.0, 1.0, grid, degree)
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    pub fn grid(&self) -> usize {
        self.grid
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn spacing(&self) -> f64 {
        (self.hi - self.lo) / self.grid as f64
    }

    pub fn basis_count(&self) -> usize {
        self.grid + self.degree
    }

    /// Values of all `G + k` basis functions at `x`.
    pub fn basis(&self, x: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.basis_count()];
        self.eval_into(x, &mut out, None);
        out
    }

    /// First derivatives of all basis functions at `x`. Degree 0 yields zeros.
    pub fn basis_derivative(&self, x: f64) -> Vec<f64> {
        let mut vals = vec![0.0; self.basis_count()];
        let mut der = vec![0.0; self.basis_count()];
        self.eval_into(x, &mut vals, Some(&mut der));
        der
    }

    /// Writes basis values (and optionally derivatives) into caller buffers of
    /// length `basis_count()`. Entries outside the active span are zeroed.
    pub fn eval_into(&self, x: f64, values: &mut [f64], derivs: Option<&mut [f64]>) {
        debug_assert_eq!(values.len(), self.basis_count());
        values.fill(0.0);
        let (first, vals, ders) = self.eval_local(x);
        let active = self.degree + 1;
        values[first..first + active].copy_from_slice(&vals[..active]);
        if let Some(d) = derivs {
            debug_assert_eq!(d.len(), self.basis_count());
            d.fill(0.0);
            d[first..first + active].copy_from_slice(&ders[..active]);
        }
    }

    /// Non-zero window: index of the first active basis function and the
    /// `k + 1` values and derivatives starting there.
    pub fn eval_local(&self, x: f64) -> (usize, [f64; MAX_DEGREE + 1], [f64; MAX_DEGREE + 1]) {
        let k = self.degree;
        let (xe, offset) = if x < self.lo {
            (self.lo, x - self.lo)
        } else if x > self.hi {
            (self.hi, x - self.hi)
        } else {
            (x, 0.0)
        };
        let span = self.span(xe);
        let t = &self.knots;

        let mut n = [0.0; MAX_DEGREE + 1];
        let mut prev = [0.0; MAX_DEGREE + 1];
        let mut left = [0.0; MAX_DEGREE + 1];
        let mut right = [0.0; MAX_DEGREE + 1];
        n[0] = 1.0;
        for p in 1..=k {
            if p == k {
                prev[..k].copy_from_slice(&n[..k]);
            }
            left[p] = xe - t[span + 1 - p];
            right[p] = t[span + p] - xe;
            let mut saved = 0.0;
            for r in 0..p {
                let denom = right[r + 1] + left[p - r];
                let temp = if denom == 0.0 { 0.0 } else { n[r] / denom };
                n[r] = saved + right[r + 1] * temp;
                saved = left[p - r] * temp;
            }
            n[p] = saved;
        }

        let first = span - k;
        let mut d = [0.0; MAX_DEGREE + 1];
        if k > 0 {
            let kf = k as f64;
            for r in 0..=k {
                let i = first + r;
                let lower = if r >= 1 {
                    let den = t[i + k] - t[i];
                    if den == 0.0 {
                        0.0
                    } else {
                        prev[r - 1] / den
                    }
                } else {
                    0.0
                };
                let upper = if r < k {
                    let den = t[i + k + 1] - t[i + 1];
                    if den == 0.0 {
                        0.0
                    } else {
                        prev[r] / den
                    }
                } else {
                    0.0
                };
                d[r] = kf * (lower - upper);
            }
        }
        if offset != 0.0 {
            for r in 0..=k {
                n[r] += d[r] * offset;
            }
        }
        (first, n, d)
    }

    /// Knot span `j` with `t_j <= x < t_{j+1}`, restricted to the interior
    /// spans so that `x = hi` lands in the last closed interval.
    fn span(&self, x: f64) -> usize {
        let k = self.degree;
        let rel = ((x - self.lo) / self.spacing()).floor();
        let idx = if rel <= 0.0 {
            0
        } else {
            (rel as usize).min(self.grid - 1)
        };
        // guard against rounding placing x just left of the computed knot
        let mut span = k + idx;
        if span > k && x < self.knots[span] {
            span -= 1;
        } else if span + 1 < k + self.grid && x >= self.knots[span + 1] {
            span += 1;
        }
        span
    }
}

/// Coefficients `c_i` of a spline in the basis of a paired [`SplineSpec`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplineCoeffs(pub Vec<f64>);

impl SplineCoeffs {
    pub fn zeros(n: usize) -> Self {
        SplineCoeffs(vec![0.0; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// `S(x) = Σ c_i B_i(x)`.
pub fn spline_eval(x: f64, spec: &SplineSpec, coeffs: &SplineCoeffs) -> Result<f64> {
    if coeffs.len() != spec.basis_count() {
        return Err(Error::Contract(format!(
            "spline has {} coefficients but the basis has {} functions",
            coeffs.len(),
            spec.basis_count()
        )));
    }
    let (first, vals, _) = spec.eval_local(x);
    Ok((0..=spec.degree())
        .map(|r| vals[r] * coeffs.0[first + r])
        .sum())
}

/// Full Cox–de Boor recursion over an arbitrary non-decreasing knot vector,
/// returning all `len - k - 1` degree-`k` basis values at `x` with half-open
/// support `[t_i, t_{i+1})` at degree 0 and `0/0 := 0`.
///
/// Unlike [`SplineSpec::basis`] this does no extrapolation; it exists as an
/// independent reference for the local evaluator.
pub fn cox_de_boor(x: f64, knots: &[f64], degree: usize) -> Vec<f64> {
    let m = knots.len();
    assert!(m >= degree + 2, "knot vector too short for degree {degree}");
    let mut b: Vec<f64> = (0..m - 1)
        .map(|i| {
            if knots[i] <= x && x < knots[i + 1] {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    for p in 1..=degree {
        let next: Vec<f64> = (0..m - 1 - p)
            .map(|i| {
                let a = ratio(x - knots[i], knots[i + p] - knots[i]) * b[i];
                let c = ratio(knots[i + p + 1] - x, knots[i + p + 1] - knots[i + 1]) * b[i + 1];
                a + c
            })
            .collect();
        b = next;
    }
    b
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}
