//! Time-indexed sequences of grid functions and second-order difference
//! stencils in time (central in the interior, one-sided at the endpoints).

use crate::error::{Error, Result};
use crate::spatial::{l2_inner, l2_norm_sq, Field, SpatialGrid};
use crate::timeweight::{TimeGrid, TimeSeries};

/// A grid function of (t, x): `n_t + 1` spatial fields on a uniform time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    grid: SpatialGrid,
    time: TimeGrid,
    data: Vec<f64>,
}

impl Trajectory {
    pub fn zeros(grid: SpatialGrid, time: TimeGrid) -> Self {
        let n = (time.n_t() + 1) * grid.n_x();
        Self {
            grid,
            time,
            data: vec![0.0; n],
        }
    }

    pub fn from_data(grid: SpatialGrid, time: TimeGrid, data: Vec<f64>) -> Result<Self> {
        if data.len() != (time.n_t() + 1) * grid.n_x() {
            return Err(Error::GridMismatch("trajectory data length"));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("Trajectory::from_data"));
        }
        Ok(Self { grid, time, data })
    }

    /// Builds a trajectory by sampling `f(t, x)` at the grid nodes.
    pub fn sample(grid: SpatialGrid, time: TimeGrid, f: impl Fn(f64, f64) -> f64) -> Self {
        let n_x = grid.n_x();
        let mut data = Vec::with_capacity((time.n_t() + 1) * n_x);
        for i in 0..=time.n_t() {
            let t = time.node(i);
            for x in grid.nodes() {
                data.push(f(t, x));
            }
        }
        Self { grid, time, data }
    }

    pub fn grid(&self) -> SpatialGrid {
        self.grid
    }

    pub fn time(&self) -> TimeGrid {
        self.time
    }

    pub fn n_nodes(&self) -> usize {
        self.time.n_t() + 1
    }

    pub fn slice(&self, i: usize) -> &[f64] {
        let n_x = self.grid.n_x();
        &self.data[i * n_x..(i + 1) * n_x]
    }

    pub fn slice_mut(&mut self, i: usize) -> &mut [f64] {
        let n_x = self.grid.n_x();
        &mut self.data[i * n_x..(i + 1) * n_x]
    }

    pub fn field(&self, i: usize) -> Field {
        Field::new(self.slice(i).to_vec()).expect("finite trajectory slice")
    }

    pub fn set_slice(&mut self, i: usize, values: &[f64]) {
        self.slice_mut(i).copy_from_slice(values);
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Replaces the time step, reinterpreting the same nodal values on a
    /// dilated time axis.
    pub fn with_time_step(&self, step: f64) -> Result<Trajectory> {
        Ok(Trajectory {
            grid: self.grid,
            time: TimeGrid::new(self.time.n_t(), step)?,
            data: self.data.clone(),
        })
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &Trajectory) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
    }

    /// Per-node squared L2 norms as a time series.
    pub fn norm_sq_series(&self) -> TimeSeries {
        let vals = (0..self.n_nodes())
            .map(|i| {
                let f = Field::new(self.slice(i).to_vec()).unwrap();
                l2_norm_sq(&self.grid, &f)
            })
            .collect();
        TimeSeries::new(self.time, vals).unwrap()
    }

    /// Per-node inner products `(u(t_i), h)` as a time series.
    pub fn inner_series(&self, h: &Field) -> TimeSeries {
        let vals = (0..self.n_nodes())
            .map(|i| {
                let f = Field::new(self.slice(i).to_vec()).unwrap();
                l2_inner(&self.grid, &f, h)
            })
            .collect();
        TimeSeries::new(self.time, vals).unwrap()
    }

    /// Linear interpolation in time, clamped to the trajectory's span.
    pub fn interpolate(&self, t: f64) -> Field {
        let tau = self.time.step();
        let s = (t / tau).clamp(0.0, self.time.n_t() as f64);
        let i = (s.floor() as usize).min(self.time.n_t() - 1);
        let w = s - i as f64;
        let a = self.slice(i);
        let b = self.slice(i + 1);
        Field::new(
            a.iter()
                .zip(b)
                .map(|(x, y)| (1.0 - w) * x + w * y)
                .collect(),
        )
        .unwrap()
    }
}

/// First time derivative, second order: central interior, one-sided ends.
pub fn time_derivative(u: &Trajectory) -> Result<Trajectory> {
    let n = u.time().n_t();
    if n < 2 {
        return Err(Error::TooFewNodes(3));
    }
    let tau = u.time().step();
    let n_x = u.grid().n_x();
    let mut out = Trajectory::zeros(u.grid(), u.time());
    for i in 0..=n {
        let row: &[(usize, f64)] = if i == 0 {
            &[(0, -1.5), (1, 2.0), (2, -0.5)]
        } else if i == n {
            &[(n, 1.5), (n - 1, -2.0), (n - 2, 0.5)]
        } else {
            &[(i - 1, -0.5), (i + 1, 0.5)]
        };
        for &(j, c) in row {
            let src = u.slice(j);
            let dst = out.slice_mut(i);
            for k in 0..n_x {
                dst[k] += c / tau * src[k];
            }
        }
    }
    Ok(out)
}

/// Second time derivative, second order: central interior, one-sided ends.
pub fn second_time_derivative(u: &Trajectory) -> Result<Trajectory> {
    let n = u.time().n_t();
    if n < 3 {
        return Err(Error::TooFewNodes(4));
    }
    let tau = u.time().step();
    let tau2 = tau * tau;
    let n_x = u.grid().n_x();
    let mut out = Trajectory::zeros(u.grid(), u.time());
    for i in 0..=n {
        let row: &[(usize, f64)] = if i == 0 {
            &[(0, 2.0), (1, -5.0), (2, 4.0), (3, -1.0)]
        } else if i == n {
            &[(n, 2.0), (n - 1, -5.0), (n - 2, 4.0), (n - 3, -1.0)]
        } else {
            &[(i - 1, 1.0), (i, -2.0), (i + 1, 1.0)]
        };
        for &(j, c) in row {
            let src = u.slice(j);
            let dst = out.slice_mut(i);
            for k in 0..n_x {
                dst[k] += c / tau2 * src[k];
            }
        }
    }
    Ok(out)
}

fn adjoint_apply(w: &Trajectory, row_of: impl Fn(usize, usize) -> Vec<(usize, f64)>) -> Trajectory {
    let n = w.time().n_t();
    let n_x = w.grid().n_x();
    let mut out = Trajectory::zeros(w.grid(), w.time());
    for i in 0..=n {
        let src = w.slice(i);
        for (j, c) in row_of(i, n) {
            let dst = out.slice_mut(j);
            for k in 0..n_x {
                dst[k] += c * src[k];
            }
        }
    }
    out
}

/// Transpose of the first-derivative stencil applied to `w` (no step scaling
/// beyond the stencil's own `1/tau`).
pub fn d1_adjoint(w: &Trajectory) -> Trajectory {
    let tau = w.time().step();
    adjoint_apply(w, |i, n| {
        let row: Vec<(usize, f64)> = if i == 0 {
            vec![(0, -1.5), (1, 2.0), (2, -0.5)]
        } else if i == n {
            vec![(n, 1.5), (n - 1, -2.0), (n - 2, 0.5)]
        } else {
            vec![(i - 1, -0.5), (i + 1, 0.5)]
        };
        row.into_iter().map(|(j, c)| (j, c / tau)).collect()
    })
}

/// Transpose of the second-derivative stencil applied to `w`.
pub fn d2_adjoint(w: &Trajectory) -> Trajectory {
    let tau2 = w.time().step() * w.time().step();
    adjoint_apply(w, |i, n| {
        let row: Vec<(usize, f64)> = if i == 0 {
            vec![(0, 2.0), (1, -5.0), (2, 4.0), (3, -1.0)]
        } else if i == n {
            vec![(n, 2.0), (n - 1, -5.0), (n - 2, 4.0), (n - 3, -1.0)]
        } else {
            vec![(i - 1, 1.0), (i, -2.0), (i + 1, 1.0)]
        };
        row.into_iter().map(|(j, c)| (j, c / tau2)).collect()
    })
}
