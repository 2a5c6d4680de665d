//! Weighted-in-time calculus in rescaled time: the exponentially weighted
//! L2 norm, the forward averaging operators A and A^2, the weighted Poincare
//! inequalities and the Gronwall-type bound.
//!
//! The infinite horizon is truncated at `T = n_t * step` with zero extension.
//! Quantities read off closer than [`TAIL_MARGIN`] rescaled units to the
//! horizon carry an `e^{-15} ~ 3e-7` truncation error and must not be
//! reported; consumers enforce this.

use crate::error::{Error, Result};
use crate::trajectory::{second_time_derivative, time_derivative, Trajectory};

/// Rescaled units a reported time must stay away from the horizon.
pub const TAIL_MARGIN: f64 = 15.0;

/// Uniform time grid `t_i = i * step`, `i = 0..=n_t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    n_t: usize,
    step: f64,
}

impl TimeGrid {
    pub fn new(n_t: usize, step: f64) -> Result<Self> {
        if n_t == 0 {
            return Err(Error::TooFewNodes(2));
        }
        if !(step > 0.0) || !step.is_finite() {
            return Err(Error::InvalidGrid(format!("time step = {step}")));
        }
        Ok(Self { n_t, step })
    }

    pub fn n_t(&self) -> usize {
        self.n_t
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn node(&self, i: usize) -> f64 {
        i as f64 * self.step
    }

    pub fn horizon(&self) -> f64 {
        self.n_t as f64 * self.step
    }

    /// Last node index at least [`TAIL_MARGIN`] units before the horizon.
    pub fn tail_safe_end(&self) -> usize {
        let cutoff = self.horizon() - TAIL_MARGIN;
        if cutoff < 0.0 {
            return 0;
        }
        ((cutoff / self.step).floor() as usize).min(self.n_t)
    }

    pub fn check_tail_rule(&self) -> Result<()> {
        if self.horizon() < TAIL_MARGIN {
            return Err(Error::HorizonTooShort {
                needed: TAIL_MARGIN,
                have: self.horizon(),
            });
        }
        Ok(())
    }
}

/// Scalar samples `h(t_i)` on a [`TimeGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    grid: TimeGrid,
    values: Vec<f64>,
}

impl TimeSeries {
    pub fn new(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_t() + 1 {
            return Err(Error::GridMismatch("time series length"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("TimeSeries::new"));
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> TimeSeries {
        TimeSeries {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_with(&self, other: &TimeSeries, f: impl Fn(f64, f64) -> f64) -> TimeSeries {
        debug_assert_eq!(self.len(), other.len());
        TimeSeries {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    /// Max |value| over the tail-safe node range.
    pub fn max_abs_tail_safe(&self) -> f64 {
        let end = self.grid.tail_safe_end();
        self.values[..=end]
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Exact integrals of the exponential kernel against 1, r, r^2 on one cell.
#[derive(Debug, Clone, Copy)]
struct CellKernel {
    /// exp(-tau)
    decay: f64,
    /// int_0^tau e^{-r} dr
    alpha: f64,
    /// int_0^tau e^{-r} r dr
    beta: f64,
    /// int_0^tau e^{-r} r^2 dr
    gamma2: f64,
}

impl CellKernel {
    fn new(tau: f64) -> Self {
        let decay = (-tau).exp();
        let alpha = -(-tau).exp_m1();
        // cancellation-safe forms for small tau
        let beta = alpha - tau * decay;
        let gamma2 = 2.0 * alpha - decay * tau * (tau + 2.0);
        Self {
            decay,
            alpha,
            beta,
            gamma2,
        }
    }
}

/// `int_0^T e^{-t} h(t) dt` with `h` the piecewise-linear interpolant of the
/// samples, each cell integrated exactly against the weight.
pub fn weighted_integral(h: &TimeSeries) -> f64 {
    let tau = h.grid().step();
    let k = CellKernel::new(tau);
    let c0 = k.alpha - k.beta / tau;
    let c1 = k.beta / tau;
    let mut total = 0.0;
    let mut w = 1.0; // e^{-t_i}
    let v = h.values();
    for i in 0..h.grid().n_t() {
        total += w * (c0 * v[i] + c1 * v[i + 1]);
        w *= k.decay;
    }
    total
}

/// Per-node weights `q_i` with `int_0^T e^{-t} h(t) dt = sum_i q_i h(t_i)`
/// exactly for piecewise-linear `h`; the same quadrature as
/// [`weighted_integral`], exposed as a linear functional.
pub fn weighted_node_weights(grid: TimeGrid) -> Vec<f64> {
    let tau = grid.step();
    let k = CellKernel::new(tau);
    let c0 = k.alpha - k.beta / tau;
    let c1 = k.beta / tau;
    let n = grid.n_t();
    let mut q = vec![0.0; n + 1];
    let mut w = 1.0; // e^{-t_i}
    for i in 0..n {
        q[i] += w * c0;
        q[i + 1] += w * c1;
        w *= k.decay;
    }
    q
}

/// Weighted squared L2 norm of a trajectory:
/// `int_0^T e^{-t} |v(t)|_{L2}^2 dt` (tail beyond T treated as zero).
pub fn weighted_l2_sq(traj: &Trajectory) -> Result<f64> {
    traj.time().check_tail_rule()?;
    Ok(weighted_integral(&traj.norm_sq_series()))
}

/// Forward exponential average `A h(t) = int_t^T e^{-(s-t)} h(s) ds`,
/// computed by one backward pass over the cells.
pub fn avg_a(h: &TimeSeries) -> TimeSeries {
    avg_both(h).0
}

/// Iterated average `A^2 h(t) = int_t^T e^{-(s-t)} (s-t) h(s) ds` via the
/// kernel form; coincides with `avg_a(avg_a(h))` up to quadrature error.
pub fn avg_a2(h: &TimeSeries) -> TimeSeries {
    avg_both(h).1
}

/// Computes A h and A^2 h together in a single backward pass.
pub fn avg_both(h: &TimeSeries) -> (TimeSeries, TimeSeries) {
    let tau = h.grid().step();
    let k = CellKernel::new(tau);
    let n = h.grid().n_t();
    let v = h.values();
    let mut a = vec![0.0; n + 1];
    let mut a2 = vec![0.0; n + 1];
    for i in (0..n).rev() {
        let dv = v[i + 1] - v[i];
        let cell_a = v[i] * k.alpha + dv / tau * k.beta;
        let cell_a2 = v[i] * k.beta + dv / tau * k.gamma2;
        a[i] = k.decay * a[i + 1] + cell_a;
        a2[i] = k.decay * (a2[i + 1] + tau * a[i + 1]) + cell_a2;
    }
    (
        TimeSeries::new(h.grid(), a).unwrap(),
        TimeSeries::new(h.grid(), a2).unwrap(),
    )
}

/// Cumulative trapezoid integral `int_0^{t_i} h`.
pub fn cumtrapz(h: &TimeSeries) -> TimeSeries {
    let tau = h.grid().step();
    let v = h.values();
    let mut out = Vec::with_capacity(v.len());
    let mut acc = 0.0;
    out.push(0.0);
    for i in 1..v.len() {
        acc += 0.5 * tau * (v[i - 1] + v[i]);
        out.push(acc);
    }
    TimeSeries::new(h.grid(), out).unwrap()
}

/// Fourth-order cumulative quadrature `int_0^{t_i} h` (corrected trapezoid;
/// falls back to [`cumtrapz`] on grids with fewer than 4 nodes).
pub fn cumquad4(h: &TimeSeries) -> TimeSeries {
    let v = h.values();
    let n = h.grid().n_t();
    if n < 3 {
        return cumtrapz(h);
    }
    let dt = h.grid().step();
    let mut out = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for i in 0..n {
        acc += if i == 0 {
            dt / 12.0 * (5.0 * v[0] + 8.0 * v[1] - v[2])
        } else if i == n - 1 {
            dt / 12.0 * (5.0 * v[n] + 8.0 * v[n - 1] - v[n - 2])
        } else {
            dt / 24.0 * (-v[i - 1] + 13.0 * v[i] + 13.0 * v[i + 1] - v[i + 2])
        };
        out.push(acc);
    }
    TimeSeries::new(h.grid(), out).unwrap()
}

/// Trapezoid integral over the whole grid.
pub fn trapz(h: &TimeSeries) -> f64 {
    let v = h.values();
    let tau = h.grid().step();
    let mut acc = 0.0;
    for i in 1..v.len() {
        acc += 0.5 * tau * (v[i - 1] + v[i]);
    }
    acc
}

/// Margins of the two weighted Poincare inequalities along a trajectory:
/// `margin1 = 2|u'(0)|^2 + 4|u''|_L^2 - |u'|_L^2` and
/// `margin2 = 2|u(0)|^2 + 8|u'(0)|^2 + 16|u''|_L^2 - |u|_L^2`.
pub fn poincare_check(u: &Trajectory) -> Result<(f64, f64)> {
    u.time().check_tail_rule()?;
    let du = time_derivative(u)?;
    let ddu = second_time_derivative(u)?;
    let grid = u.grid();
    let du0 = crate::spatial::l2_norm_sq(&grid, &du.field(0));
    let u0 = crate::spatial::l2_norm_sq(&grid, &u.field(0));
    let du_l = weighted_integral(&du.norm_sq_series());
    let ddu_l = weighted_integral(&ddu.norm_sq_series());
    let u_l = weighted_integral(&u.norm_sq_series());
    let margin1 = 2.0 * du0 + 4.0 * ddu_l - du_l;
    let margin2 = 2.0 * u0 + 8.0 * du0 + 16.0 * ddu_l - u_l;
    Ok((margin1, margin2))
}

/// Scale against which Poincare margins are compared (sum of positive terms).
pub fn poincare_scales(u: &Trajectory) -> Result<(f64, f64)> {
    let du = time_derivative(u)?;
    let ddu = second_time_derivative(u)?;
    let grid = u.grid();
    let du0 = crate::spatial::l2_norm_sq(&grid, &du.field(0));
    let u0 = crate::spatial::l2_norm_sq(&grid, &u.field(0));
    let ddu_l = weighted_integral(&ddu.norm_sq_series());
    Ok((
        2.0 * du0 + 4.0 * ddu_l,
        2.0 * u0 + 8.0 * du0 + 16.0 * ddu_l,
    ))
}

/// Verifies the Gronwall-type lemma: under the hypothesis
/// `u(t) <= c(t)^2 + 2 int_a^t v sqrt(u)` (checked on the grid), returns the
/// conclusion margin `c(t) + int_a^t v - sqrt(u(t))` per node.
pub fn gronwall_check(u: &TimeSeries, v: &TimeSeries, c: &TimeSeries) -> Result<TimeSeries> {
    let n = u.len();
    if v.len() != n || c.len() != n {
        return Err(Error::GridMismatch("gronwall series lengths"));
    }
    let scale = u.values().iter().fold(0.0f64, |m, x| m.max(x.abs()))
        + c.values().iter().fold(0.0f64, |m, x| m.max(x * x));
    for i in 0..n {
        if u.values()[i] < 0.0 || v.values()[i] < 0.0 {
            return Err(Error::InvalidParam("gronwall: u, v must be nonnegative".into()));
        }
        if c.values()[i] <= 0.0 {
            return Err(Error::InvalidParam("gronwall: c must be positive".into()));
        }
        if i > 0 && c.values()[i] < c.values()[i - 1] - 1e-12 * c.values()[i - 1].abs() {
            return Err(Error::InvalidParam("gronwall: c must be nondecreasing".into()));
        }
    }
    let v_sqrt_u = v.zip_with(u, |vi, ui| vi * ui.sqrt());
    let hyp_int = cumtrapz(&v_sqrt_u);
    let tol = 1e-9 * (1.0 + scale);
    for i in 0..n {
        let slack = c.values()[i] * c.values()[i] + 2.0 * hyp_int.values()[i] - u.values()[i];
        if slack < -tol {
            return Err(Error::HypothesisViolated { node: i, slack });
        }
    }
    let int_v = cumtrapz(v);
    Ok(c.zip_with(u, |ci, ui| ci - ui.sqrt())
        .zip_with(&int_v, |a, b| a + b))
}
