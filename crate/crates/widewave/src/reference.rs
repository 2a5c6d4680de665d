//! Independent reference solutions of the damped wave equation
//! `w'' = -grad W(w) - grad G(w') + f` for validating the variational
//! minimizers: method-of-lines integration with classical RK4, closed-form
//! single-mode solutions of the linear cases, and the mechanical-energy
//! drift check.

use crate::error::{Error, Result};
use crate::source::SourceSpec;
use crate::spatial::{
    eval_g, eval_w, grad_g, grad_w, l2_inner, l2_norm_sq, Field, GSpec, SpatialGrid, WSpec,
};
use crate::timeweight::{cumquad4, TimeGrid, TimeSeries};
use crate::trajectory::Trajectory;

/// One initial-value problem on a periodic interval.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub wspec: WSpec,
    pub gspec: GSpec,
    pub source: SourceSpec,
    pub w0: Field,
    pub w1: Field,
    pub t_phys: f64,
    pub grid: SpatialGrid,
}

impl ProblemSpec {
    pub fn validate(&self) -> Result<()> {
        self.wspec.validate()?;
        self.gspec.validate()?;
        if !(self.t_phys > 0.0 && self.t_phys <= 1.5) {
            return Err(Error::InvalidParam(format!(
                "t_phys = {} outside (0, 1.5]",
                self.t_phys
            )));
        }
        if self.w0.len() != self.grid.n_x() || self.w1.len() != self.grid.n_x() {
            return Err(Error::GridMismatch("initial data length"));
        }
        Ok(())
    }
}

/// Largest RK4-stable time step for the linearized right-hand side, from the
/// per-mode eigenvalues `(-d +- sqrt(d^2 - 4s))/2` of `a'' = -s a - d a'`.
///
/// Nonlinear potential terms (`p != 2`) contribute through a conservative
/// amplitude estimate; the divergence abort in [`solve_mol`] is the backstop.
pub fn stability_step_bound(p: &ProblemSpec) -> f64 {
    let grid = &p.grid;
    // crude a-priori amplitude bound for the nonlinear stiffness estimate
    let amp = (p.w0.max_abs() + p.t_phys * p.w1.max_abs() + 1.0).max(1.0);
    let mut max_abs_lambda = 0.0f64;
    for j in 0..grid.n_x() {
        let xi = grid.wavenumber(j).abs();
        let mut s = p.wspec.leading * xi.powf(2.0 * p.wspec.m);
        for t in &p.wspec.terms {
            let scale = amp * xi.powi(t.k as i32).max(1.0);
            s += t.lambda * (t.p - 1.0) * scale.powf(t.p - 2.0) * xi.powi(2 * t.k as i32);
        }
        let d = p.gspec.mu0 + p.gspec.mu1 * xi * xi + p.gspec.mu2 * xi.powi(4);
        let disc = d * d - 4.0 * s;
        let lam = if disc >= 0.0 {
            0.5 * (d + disc.sqrt()) // most negative root, in magnitude
        } else {
            s.sqrt() // complex pair, |lambda| = sqrt(s)
        };
        max_abs_lambda = max_abs_lambda.max(lam);
    }
    if max_abs_lambda == 0.0 {
        f64::INFINITY
    } else {
        2.5 / max_abs_lambda
    }
}

fn rhs(p: &ProblemSpec, t: f64, w: &Field, v: &Field) -> Result<(Field, Field)> {
    let mut acc = p.source.sample(&p.grid, t);
    acc.add_scaled(-1.0, &grad_w(&p.grid, w, &p.wspec)?);
    if !p.gspec.is_zero() {
        acc.add_scaled(-1.0, &grad_g(&p.grid, v, &p.gspec)?);
    }
    Ok((v.clone(), acc))
}

/// Classical fourth-order Runge-Kutta integration of
/// `(w, v)' = (v, -grad W(w) - grad G(v) + f(t))` up to `t_phys`.
///
/// Returns the position and velocity trajectories on the uniform step grid.
pub fn solve_mol(p: &ProblemSpec, dt: f64) -> Result<(Trajectory, Trajectory)> {
    p.validate()?;
    if !(dt > 0.0) {
        return Err(Error::InvalidGrid(format!("dt = {dt}")));
    }
    let bound = stability_step_bound(p);
    if dt > bound {
        return Err(Error::StabilityBound { dt, bound });
    }
    let n_steps = (p.t_phys / dt).ceil() as usize;
    let n_steps = n_steps.max(3);
    let time = TimeGrid::new(n_steps, dt)?;
    let mut w_traj = Trajectory::zeros(p.grid, time);
    let mut v_traj = Trajectory::zeros(p.grid, time);
    let mut w = p.w0.clone();
    let mut v = p.w1.clone();
    w_traj.set_slice(0, w.values());
    v_traj.set_slice(0, v.values());
    let blowup = 1e6 * (w.max_abs() + v.max_abs() + 1.0);
    for i in 0..n_steps {
        let t = time.node(i);
        let (k1w, k1v) = rhs(p, t, &w, &v)?;
        let mut w2 = w.clone();
        w2.add_scaled(0.5 * dt, &k1w);
        let mut v2 = v.clone();
        v2.add_scaled(0.5 * dt, &k1v);
        let (k2w, k2v) = rhs(p, t + 0.5 * dt, &w2, &v2)?;
        let mut w3 = w.clone();
        w3.add_scaled(0.5 * dt, &k2w);
        let mut v3 = v.clone();
        v3.add_scaled(0.5 * dt, &k2v);
        let (k3w, k3v) = rhs(p, t + 0.5 * dt, &w3, &v3)?;
        let mut w4 = w.clone();
        w4.add_scaled(dt, &k3w);
        let mut v4 = v.clone();
        v4.add_scaled(dt, &k3v);
        let (k4w, k4v) = rhs(p, t + dt, &w4, &v4)?;
        let c = dt / 6.0;
        w.add_scaled(c, &k1w);
        w.add_scaled(2.0 * c, &k2w);
        w.add_scaled(2.0 * c, &k3w);
        w.add_scaled(c, &k4w);
        v.add_scaled(c, &k1v);
        v.add_scaled(2.0 * c, &k2v);
        v.add_scaled(2.0 * c, &k3v);
        v.add_scaled(c, &k4v);
        if w.max_abs() + v.max_abs() > blowup {
            return Err(Error::Unstable {
                t: time.node(i + 1),
                factor: (w.max_abs() + v.max_abs()) / blowup * 1e6,
            });
        }
        w_traj.set_slice(i + 1, w.values());
        v_traj.set_slice(i + 1, v.values());
    }
    Ok((w_traj, v_traj))
}

/// Solution of the scalar mode equation `a'' + damp a' + stiff a = 0` with
/// `a(0) = a0`, `a'(0) = a1`, by characteristic roots.
pub fn linear_mode_solution(stiff: f64, damp: f64, a0: f64, a1: f64, t: f64) -> f64 {
    let disc = damp * damp - 4.0 * stiff;
    let scale = damp * damp + 4.0 * stiff.abs();
    if disc.abs() <= 1e-12 * scale.max(1e-300) {
        // repeated root r = -damp/2
        let r = -0.5 * damp;
        (a0 + (a1 - r * a0) * t) * (r * t).exp()
    } else if disc > 0.0 {
        let root = disc.sqrt();
        let r1 = 0.5 * (-damp + root);
        let r2 = 0.5 * (-damp - root);
        let c2 = (a1 - r1 * a0) / (r2 - r1);
        let c1 = a0 - c2;
        c1 * (r1 * t).exp() + c2 * (r2 * t).exp()
    } else {
        let om = 0.5 * (-disc).sqrt();
        let r = -0.5 * damp;
        let c2 = (a1 - r * a0) / om;
        (r * t).exp() * (a0 * (om * t).cos() + c2 * (om * t).sin())
    }
}

/// Dissipative mechanical energy along a method-of-lines solution:
/// `E^d(t) = |v(t)|^2/2 + W(w(t)) + 2 int_0^t G(v)`.
pub fn dissipative_energy(w: &Trajectory, v: &Trajectory, p: &ProblemSpec) -> Result<TimeSeries> {
    let n = w.time().n_t();
    let mut g_series = Vec::with_capacity(n + 1);
    let mut e_inst = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let vi = v.field(i);
        g_series.push(eval_g(&p.grid, &vi, &p.gspec)?);
        e_inst.push(0.5 * l2_norm_sq(&p.grid, &vi) + eval_w(&p.grid, &w.field(i), &p.wspec)?);
    }
    let cum_g = cumquad4(&TimeSeries::new(w.time(), g_series)?);
    TimeSeries::new(
        w.time(),
        e_inst
            .iter()
            .zip(cum_g.values())
            .map(|(e, g)| e + 2.0 * g)
            .collect(),
    )
}

/// Drift of the formally conserved quantity along a reference solution:
/// `E^d(t) - E^d(0) - int_0^t (f, v)`; vanishes within integrator accuracy.
pub fn conserved_energy_check(
    w: &Trajectory,
    v: &Trajectory,
    p: &ProblemSpec,
) -> Result<TimeSeries> {
    if w.time() != v.time() || w.grid() != v.grid() {
        return Err(Error::GridMismatch("position vs velocity trajectory"));
    }
    let ed = dissipative_energy(w, v, p)?;
    let n = w.time().n_t();
    let mut f_work = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let f = p.source.sample(&p.grid, w.time().node(i));
        f_work.push(l2_inner(&p.grid, &f, &v.field(i)));
    }
    let cum_work = cumquad4(&TimeSeries::new(w.time(), f_work)?);
    let e0 = ed.values()[0];
    TimeSeries::new(
        w.time(),
        ed.values()
            .iter()
            .zip(cum_work.values())
            .map(|(e, wk)| e - e0 - wk)
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spatial::{preset, PresetParams};
    use std::f64::consts::PI;

    fn grid() -> SpatialGrid {
        SpatialGrid::new(32, 2.0 * PI).unwrap()
    }

    fn linear_wave(g: &SpatialGrid) -> ProblemSpec {
        // W = |grad w|^2/2 only, no damping, no source
        ProblemSpec {
            wspec: WSpec {
                m: 1.0,
                leading: 1.0,
                terms: vec![],
                theta: 0.5,
            },
            gspec: GSpec::ZERO,
            source: SourceSpec::zero(),
            w0: g.sample(|x| x.sin()),
            w1: Field::zeros(g.n_x()),
            t_phys: 1.5,
            grid: *g,
        }
    }

    fn telegraph(g: &SpatialGrid, forced: bool) -> ProblemSpec {
        let (w, gs) = preset("telegraph", PresetParams::default()).unwrap();
        ProblemSpec {
            wspec: w,
            gspec: gs,
            source: if forced {
                // window covers the whole horizon: no jump inside [0, t_phys]
                SourceSpec::single_mode(1, 1.0, 0.0, 10.0)
            } else {
                SourceSpec::zero()
            },
            w0: g.sample(|x| x.sin()),
            w1: Field::zeros(g.n_x()),
            t_phys: 1.5,
            grid: *g,
        }
    }

    #[test]
    fn linear_wave_closed_form() {
        let g = grid();
        let p = linear_wave(&g);
        let (w, _) = solve_mol(&p, 1e-3).unwrap();
        let n = w.time().n_t();
        let mut err = 0.0f64;
        for i in [0usize, n / 3, 2 * n / 3, n] {
            let t = w.time().node(i);
            for (k, x) in g.nodes().enumerate() {
                err = err.max((w.slice(i)[k] - t.cos() * x.sin()).abs());
            }
        }
        assert!(err <= 1e-8, "{err}");
    }

    #[test]
    fn forced_linear_wave_closed_form() {
        let g = grid();
        let mut p = linear_wave(&g);
        p.w0 = Field::zeros(g.n_x());
        p.source = SourceSpec::single_mode(1, 1.0, 0.0, 10.0);
        let (w, _) = solve_mol(&p, 1e-3).unwrap();
        let n = w.time().n_t();
        let t = w.time().node(n);
        let mut err = 0.0f64;
        for (k, x) in g.nodes().enumerate() {
            err = err.max((w.slice(n)[k] - (1.0 - t.cos()) * x.sin()).abs());
        }
        assert!(err <= 1e-8, "{err}");
    }

    #[test]
    fn telegraph_mode_matches_closed_form() {
        let g = grid();
        let p = telegraph(&g, false);
        let (w, v) = solve_mol(&p, 1e-3).unwrap();
        // k=1 mode of the p=2 telegraph equation: stiff = 2, damp = 1
        let n = w.time().n_t();
        let mut err = 0.0f64;
        for i in [n / 4, n / 2, n] {
            let t = w.time().node(i);
            let a = linear_mode_solution(2.0, 1.0, 1.0, 0.0, t);
            for (k, x) in g.nodes().enumerate() {
                err = err.max((w.slice(i)[k] - a * x.sin()).abs());
            }
        }
        assert!(err <= 1e-8, "{err}");
        // velocity consistent with the mode derivative
        let tq = w.time().node(n / 2);
        let da = (linear_mode_solution(2.0, 1.0, 1.0, 0.0, tq + 1e-6)
            - linear_mode_solution(2.0, 1.0, 1.0, 0.0, tq - 1e-6))
            / 2e-6;
        let k8 = 8; // x = pi/2, sin = 1
        assert!((v.slice(n / 2)[k8] - da).abs() < 1e-6);
    }

    #[test]
    fn mode_solution_special_cases() {
        // harmonic
        for t in [0.0, 0.7, 2.0] {
            assert!((linear_mode_solution(1.0, 0.0, 1.0, 0.0, t) - t.cos()).abs() < 1e-14);
        }
        // telegraph k=1: e^{-t/2}(cos wt + sin(wt)/(2w)), w = sqrt(7)/2
        let om = 7f64.sqrt() / 2.0;
        for t in [0.3f64, 1.1] {
            let expect = (-0.5 * t).exp() * ((om * t).cos() + (om * t).sin() / (2.0 * om));
            assert!((linear_mode_solution(2.0, 1.0, 1.0, 0.0, t) - expect).abs() < 1e-14);
        }
        // repeated root: stiff=1, damp=2 -> (1+t)e^{-t}
        for t in [0.5f64, 2.0] {
            let expect = (1.0 + t) * (-t).exp();
            assert!((linear_mode_solution(1.0, 2.0, 1.0, 0.0, t) - expect).abs() < 1e-12);
        }
        // overdamped distinct roots: stiff=1, damp=3
        let root = 5f64.sqrt();
        let (r1, r2) = ((-3.0 + root) / 2.0, (-3.0 - root) / 2.0);
        let (c2, t) = ((0.0 - r1) / (r2 - r1), 0.8);
        let expect = (1.0 - c2) * (r1 * t as f64).exp() + c2 * (r2 * t).exp();
        assert!((linear_mode_solution(1.0, 3.0, 1.0, 0.0, t) - expect).abs() < 1e-12);
    }

    #[test]
    fn fourth_order_convergence() {
        let g = grid();
        let p = telegraph(&g, false);
        let err_at = |dt: f64| -> f64 {
            let (w, _) = solve_mol(&p, dt).unwrap();
            let n = w.time().n_t();
            let t = w.time().node(n);
            let a = linear_mode_solution(2.0, 1.0, 1.0, 0.0, t);
            let mut e = 0.0f64;
            for (k, x) in g.nodes().enumerate() {
                e = e.max((w.slice(n)[k] - a * x.sin()).abs());
            }
            e
        };
        let (e1, e2) = (err_at(0.05), err_at(0.025));
        let ratio = e1 / e2;
        assert!((12.0..=20.0).contains(&ratio), "ratio {ratio} ({e1} / {e2})");
    }

    #[test]
    fn energy_drift_and_dissipation() {
        let g = grid();
        // undamped linear wave: E itself conserved
        let p = linear_wave(&g);
        let (w, v) = solve_mol(&p, 1e-3).unwrap();
        let drift = conserved_energy_check(&w, &v, &p).unwrap();
        assert!(drift.values().iter().fold(0.0f64, |m, x| m.max(x.abs())) <= 1e-7);

        // telegraph: E^d drift small while E strictly decreases
        let p = telegraph(&g, false);
        let (w, v) = solve_mol(&p, 1e-3).unwrap();
        let drift = conserved_energy_check(&w, &v, &p).unwrap();
        assert!(drift.values().iter().fold(0.0f64, |m, x| m.max(x.abs())) <= 1e-7);
        let n = w.time().n_t();
        let e_of = |i: usize| {
            0.5 * l2_norm_sq(&g, &v.field(i)) + eval_w(&g, &w.field(i), &p.wspec).unwrap()
        };
        assert!(e_of(n) < e_of(n / 2) && e_of(n / 2) < e_of(0));
    }

    #[test]
    fn forced_energy_identity() {
        let g = grid();
        let p = telegraph(&g, true);
        let (w, v) = solve_mol(&p, 1e-3).unwrap();
        let drift = conserved_energy_check(&w, &v, &p).unwrap();
        assert!(drift.values().iter().fold(0.0f64, |m, x| m.max(x.abs())) <= 1e-6);
    }

    #[test]
    fn zero_solution_trivial() {
        let g = grid();
        let mut p = telegraph(&g, false);
        p.w0 = Field::zeros(g.n_x());
        let (w, v) = solve_mol(&p, 1e-2).unwrap();
        assert_eq!(w.max_abs(), 0.0);
        let drift = conserved_energy_check(&w, &v, &p).unwrap();
        assert!(drift.values().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn stability_bound_rejects_large_steps() {
        let g = grid();
        // strong damping: stiff modes from mu1 * xi^2, xi up to 16
        let (ws, gs) = preset("strong_damped", PresetParams::default()).unwrap();
        let p = ProblemSpec {
            wspec: ws,
            gspec: gs,
            source: SourceSpec::zero(),
            w0: g.sample(|x| x.sin()),
            w1: Field::zeros(g.n_x()),
            t_phys: 1.0,
            grid: g,
        };
        let bound = stability_step_bound(&p);
        assert!(bound < 0.05, "{bound}");
        assert!(matches!(
            solve_mol(&p, 0.1),
            Err(Error::StabilityBound { .. })
        ));
        assert!(solve_mol(&p, 0.9 * bound).is_ok());
    }
}
