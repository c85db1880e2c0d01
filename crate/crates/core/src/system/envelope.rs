//! Tightest order-preserving overbound of a sampled function on a grid.

use serde::{Deserialize, Serialize};

use super::expr::Expr;
use crate::error::{Error, Result};

pub const MAX_GRID_POINTS: u128 = 10_000_000;

/// Per-axis breakpoints plus vector values at every grid point
/// (row-major, last axis fastest).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridTable {
    pub breakpoints: Vec<Vec<f64>>,
    pub values: Vec<Vec<f64>>,
}

/// Evenly spaced axis `[0, hi]` with `points` breakpoints; one point when
/// the variable is unused.
pub fn uniform_axis(hi: f64, points: usize) -> Vec<f64> {
    if points <= 1 {
        return vec![0.0];
    }
    (0..points)
        .map(|k| hi * k as f64 / (points - 1) as f64)
        .collect()
}

fn check_axes(axes: &[Vec<f64>]) -> Result<u128> {
    let mut total: u128 = 1;
    for (k, axis) in axes.iter().enumerate() {
        if axis.is_empty() {
            return Err(Error::InvalidArgument(format!("grid axis {k} is empty")));
        }
        if axis.windows(2).any(|w| !(w[0] < w[1])) || axis.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "grid axis {k} is not strictly increasing"
            )));
        }
        total = total.saturating_mul(axis.len() as u128);
    }
    if total > MAX_GRID_POINTS {
        return Err(Error::GridTooLarge {
            points: total,
            limit: MAX_GRID_POINTS,
        });
    }
    Ok(total)
}

fn strides(axes: &[Vec<f64>]) -> Vec<usize> {
    let mut s = vec![1usize; axes.len()];
    for k in (0..axes.len().saturating_sub(1)).rev() {
        s[k] = s[k + 1] * axes[k + 1].len();
    }
    s
}

/// Evaluate `f_hat` on the grid and take the prefix maximum over `g' ⪯ g`.
pub fn cni_envelope_grid(f_hat: &[Expr], axes: Vec<Vec<f64>>) -> Result<GridTable> {
    let total = check_axes(&axes)? as usize;
    let n = axes.len();
    let st = strides(&axes);
    let mut values = Vec::with_capacity(total);
    let mut theta = vec![0.0; n];
    for g in 0..total {
        for k in 0..n {
            theta[k] = axes[k][(g / st[k]) % axes[k].len()];
        }
        let row: Vec<f64> = f_hat.iter().map(|e| e.eval(&theta)).collect();
        if let Some(bad) = row.iter().find(|v| !v.is_finite()) {
            return Err(Error::Evaluation(format!(
                "f̂ evaluated to {bad} at θ = {theta:?}"
            )));
        }
        values.push(row);
    }
    // Running max along each axis in turn yields the max over the lower orthant.
    for k in 0..n {
        let len = axes[k].len();
        for g in 0..total {
            if (g / st[k]) % len != 0 {
                let prev = g - st[k];
                for c in 0..f_hat.len() {
                    let p = values[prev][c];
                    if p > values[g][c] {
                        values[g][c] = p;
                    }
                }
            }
        }
    }
    Ok(GridTable {
        breakpoints: axes,
        values,
    })
}

impl GridTable {
    pub fn dim(&self) -> usize {
        self.breakpoints.len()
    }

    pub fn outputs(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }

    /// Multilinear interpolation; below the first breakpoint the first cell is
    /// used, single-point axes ignore their coordinate, and points beyond the
    /// last breakpoint are an error since the envelope is unknown there.
    pub fn eval(&self, theta: &[f64]) -> Result<Vec<f64>> {
        let n = self.dim();
        if theta.len() != n {
            return Err(Error::Dimension(format!(
                "grid has {n} axes, θ has {}",
                theta.len()
            )));
        }
        let st = strides(&self.breakpoints);
        let mut base = 0usize;
        let mut cells: Vec<(usize, f64)> = Vec::with_capacity(n);
        for k in 0..n {
            let axis = &self.breakpoints[k];
            if axis.len() == 1 {
                continue;
            }
            let x = theta[k].max(axis[0]);
            let last = *axis.last().unwrap_or(&0.0);
            if x > last * (1.0 + 1e-12) {
                return Err(Error::Evaluation(format!(
                    "θ_{} = {x} lies beyond the envelope grid (max {last})",
                    k + 1
                )));
            }
            let i = match axis.partition_point(|b| *b <= x) {
                0 => 0,
                p => (p - 1).min(axis.len() - 2),
            };
            let w = ((x - axis[i]) / (axis[i + 1] - axis[i])).clamp(0.0, 1.0);
            base += i * st[k];
            cells.push((st[k], w));
        }
        let mut out = vec![0.0; self.outputs()];
        for corner in 0..(1usize << cells.len()) {
            let mut weight = 1.0;
            let mut idx = base;
            for (b, (stride, w)) in cells.iter().enumerate() {
                if corner >> b & 1 == 1 {
                    weight *= w;
                    idx += stride;
                } else {
                    weight *= 1.0 - w;
                }
            }
            if weight != 0.0 {
                for (o, v) in out.iter_mut().zip(&self.values[idx]) {
                    *o += weight * v;
                }
            }
        }
        Ok(out)
    }
}
