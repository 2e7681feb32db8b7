//! Uniform periodic grids on `[0, L)` and the fields sampled on them.
//!
//! A periodic grid stores `n` distinct nodes `x_i = i * dx` with
//! `dx = L / n`; the endpoint `x = L` is identified with `x = 0` and only
//! appears when a caller asks for it at an I/O boundary. Quadrature is the
//! periodic rectangle rule, which coincides with the trapezoid rule here.

use std::f64::consts::TAU;
use std::io::Write;
use std::ops::Range;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    n_points: usize,
    length: f64,
    dx: f64,
}

impl Grid {
    pub fn new(n_points: usize, length: f64) -> Result<Self> {
        if n_points < 3 {
            return Err(Error::InvalidGrid(format!(
                "need at least 3 points, got {n_points}"
            )));
        }
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "length must be positive, got {length}"
            )));
        }
        Ok(Self {
            n_points,
            length,
            dx: length / n_points as f64,
        })
    }

    /// Periodic grid on `[0, 2π)` with `n_points` distinct unknowns.
    pub fn periodic(n_points: usize) -> Result<Self> {
        Self::new(n_points, TAU)
    }

    /// Grid described by its stored node count including the duplicated
    /// endpoint, e.g. 151 stored nodes give 150 unknowns.
    pub fn from_stored_nodes(n_stored: usize) -> Result<Self> {
        Self::periodic(n_stored.saturating_sub(1))
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn x(&self, i: usize) -> f64 {
        i as f64 * self.dx
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_points).map(move |i| self.x(i))
    }

    /// Periodic index arithmetic.
    pub fn wrap(&self, i: isize) -> usize {
        i.rem_euclid(self.n_points as isize) as usize
    }

    /// Nodes whose coordinate lies in `[lo, hi)`, with `hi = length`
    /// selecting through the last node.
    pub fn node_range(&self, lo: f64, hi: f64) -> Result<Range<usize>> {
        let slack = 1e-9 * self.dx;
        if !(lo >= -slack && hi <= self.length + slack && hi > lo) {
            return Err(Error::InvalidConfig(format!(
                "sub-interval [{lo}, {hi}] is not inside [0, {}]",
                self.length
            )));
        }
        let start = ((lo - slack) / self.dx).ceil().max(0.0) as usize;
        let end = (((hi - slack) / self.dx).ceil() as usize).min(self.n_points);
        if end <= start {
            return Err(Error::InvalidConfig(format!(
                "sub-interval [{lo}, {hi}] contains no grid nodes"
            )));
        }
        Ok(start..end)
    }
}

/// Real values sampled at every node of a [`Grid`].
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    grid: Grid,
    values: Vec<f64>,
}

impl Field {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_points() {
            return Err(Error::LengthMismatch {
                expected: grid.n_points(),
                got: values.len(),
            });
        }
        check_finite(&values)?;
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: Grid, value: f64) -> Self {
        Self {
            grid,
            values: vec![value; grid.n_points()],
        }
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(grid, grid.nodes().map(f).collect())
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn integrate(&self) -> Result<f64> {
        self.integrate_over(0..self.values.len())
    }

    /// Rectangle-rule integral over a contiguous node range.
    pub fn integrate_over(&self, nodes: Range<usize>) -> Result<f64> {
        check_finite(&self.values)?;
        Ok(canonical_sum(self.values[nodes].iter().copied()) * self.grid.dx)
    }

    /// `integrate() / length`, evaluated as a plain node average (the two
    /// agree because `length = n·dx`) so constants are reproduced exactly.
    pub fn spatial_mean(&self) -> Result<f64> {
        self.mean_over(0..self.values.len())
    }

    pub fn mean_over(&self, nodes: Range<usize>) -> Result<f64> {
        check_finite(&self.values)?;
        let count = nodes.len() as f64;
        Ok(canonical_sum(self.values[nodes].iter().copied()) / count)
    }

    /// `∫ field² dx`.
    pub fn l2_sq(&self) -> Result<f64> {
        self.l2_sq_over(0..self.values.len())
    }

    pub fn l2_sq_over(&self, nodes: Range<usize>) -> Result<f64> {
        check_finite(&self.values)?;
        Ok(canonical_sum(self.values[nodes].iter().map(|v| v * v)) * self.grid.dx)
    }

    /// `∫ (field - c)² dx` over a node range.
    pub fn centered_l2_sq_over(&self, nodes: Range<usize>, center: f64) -> Result<f64> {
        check_finite(&self.values)?;
        Ok(canonical_sum(
            self.values[nodes]
                .iter()
                .map(|v| (v - center) * (v - center)),
        ) * self.grid.dx)
    }

    /// Cyclic rotation: value at node `i` moves to node `i + shift`.
    pub fn rotated(&self, shift: isize) -> Self {
        let n = self.values.len();
        let mut values = vec![0.0; n];
        for (i, v) in self.values.iter().enumerate() {
            values[self.grid.wrap(i as isize + shift)] = *v;
        }
        Self {
            grid: self.grid,
            values,
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    /// Largest one-sided difference quotient, a simple shock-steepness gauge.
    pub fn max_abs_gradient(&self) -> f64 {
        let n = self.values.len();
        (0..n)
            .map(|i| (self.values[(i + 1) % n] - self.values[i]).abs() / self.grid.dx)
            .fold(0.0, f64::max)
    }

    /// One row per node, columns `x,value`, 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W, value_name: &str) -> Result<()> {
        writeln!(w, "x,{value_name}")?;
        for (x, v) in self.grid.nodes().zip(&self.values) {
            writeln!(w, "{x:.16e},{v:.16e}")?;
        }
        Ok(())
    }
}

/// Compensated sum taken in sorted order, so any permutation of the
/// terms (e.g. a cyclic shift of the field) gives a bit-identical result.
fn canonical_sum(terms: impl Iterator<Item = f64>) -> f64 {
    let mut terms: Vec<f64> = terms.collect();
    terms.sort_unstable_by(f64::total_cmp);
    let mut sum = 0.0;
    let mut carry = 0.0;
    for t in terms {
        let next = sum + t;
        if sum.abs() >= t.abs() {
            carry += (sum - next) + t;
        } else {
            carry += (t - next) + sum;
        }
        sum = next;
    }
    sum + carry
}

pub(crate) fn check_finite(values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFinite {
            index,
            value: values[index],
        }),
        None => Ok(()),
    }
}
