//! Minimization of the discrete functional and the eps-continuation driver.
//!
//! The exponential weight makes the raw Hessian conditioning span `e^{-T}`;
//! descent runs in the weight-preconditioned metric, realized as a change of
//! variables `z = sqrt(q_i h) u` under which limited-memory quasi-Newton
//! steps with a backtracking line search behave uniformly across time.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::reference::ProblemSpec;
use crate::source::{build_f_eps, verify_source_conditions, ConditionReport, SourceMode};
use crate::timeweight::{TimeGrid, TAIL_MARGIN};
use crate::trajectory::Trajectory;
use crate::variational::{
    apply_initial_constraints, constraints_satisfied, eval_j, grad_j, rescale,
    DiscreteFunctional,
};

#[derive(Debug, Clone, Copy)]
pub struct MinimizeOptions {
    /// Stop when `max_i |grad_i| / (q_i h) <= grad_tol`.
    pub grad_tol: f64,
    pub max_iters: usize,
    /// Quasi-Newton history length.
    pub memory: usize,
    /// Backtracking factor of the line search.
    pub ls_shrink: f64,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        Self {
            grad_tol: 1e-7,
            max_iters: 20_000,
            memory: 10,
            ls_shrink: 0.5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MinimizeResult {
    pub minimizer: Trajectory,
    pub value: f64,
    pub iterations: usize,
    /// Preconditioned gradient max-norm at the final iterate.
    pub final_grad_norm: f64,
    pub converged: bool,
    /// Objective value after each accepted step (monotone nonincreasing).
    pub objective_trace: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimizes the functional from `init` (which must satisfy the initial
/// constraints); the constrained nodes are preserved bit-identically.
pub fn minimize(
    f: &DiscreteFunctional,
    init: &Trajectory,
    opts: &MinimizeOptions,
) -> Result<MinimizeResult> {
    if !(opts.grad_tol > 0.0) || opts.memory == 0 || !(opts.ls_shrink > 0.0 && opts.ls_shrink < 1.0)
    {
        return Err(Error::InvalidParam("minimize options".into()));
    }
    if !constraints_satisfied(init, f) {
        return Err(Error::ConstraintViolated(
            "init must hold the prescribed first two nodes".into(),
        ));
    }
    let n_x = f.grid().n_x();
    let n_t = f.time().n_t();
    let n = (n_t + 1) * n_x;
    let h = f.grid().spacing();
    // per-coordinate scale sqrt(q_i h) and preconditioner q_i h
    let mut s = vec![0.0; n];
    let mut precon = vec![0.0; n];
    for i in 0..=n_t {
        let p = f.node_weights()[i] * h;
        let sq = p.sqrt();
        for k in 0..n_x {
            s[i * n_x + k] = sq;
            precon[i * n_x + k] = p;
        }
    }

    let u_of = |z: &[f64]| -> Trajectory {
        let data: Vec<f64> = z.iter().zip(&s).map(|(zv, sv)| zv / sv).collect();
        let mut u = Trajectory::from_data(f.grid(), f.time(), data)
            .unwrap_or_else(|_| Trajectory::zeros(f.grid(), f.time()));
        apply_initial_constraints(&mut u, f);
        u
    };
    let grad_z = |u: &Trajectory| -> Result<Vec<f64>> {
        let g = grad_j(u, f)?;
        Ok(g.data().iter().zip(&s).map(|(gv, sv)| gv / sv).collect())
    };

    let mut z: Vec<f64> = init.data().iter().zip(&s).map(|(uv, sv)| uv * sv).collect();
    let mut u = init.clone();
    let mut value = eval_j(&u, f)?;
    let mut g = grad_z(&u)?;
    let mut trace = vec![value];

    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new(); // (dz, dg, dz.dg)
    let pg_norm = |g: &[f64]| -> f64 {
        g.iter()
            .zip(&s)
            .zip(&precon)
            .fold(0.0f64, |m, ((gv, sv), pv)| m.max((gv * sv / pv).abs()))
    };

    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iters {
        let pg = pg_norm(&g);
        if pg <= opts.grad_tol {
            converged = true;
            break;
        }

        // two-loop recursion for the quasi-Newton direction
        let mut d: Vec<f64> = g.iter().map(|v| -v).collect();
        let mut alphas = Vec::with_capacity(history.len());
        for (dz, dg, ys) in history.iter().rev() {
            let a = dot(dz, &d) / ys;
            for (dv, yv) in d.iter_mut().zip(dg) {
                *dv -= a * yv;
            }
            alphas.push(a);
        }
        let gamma = match history.back() {
            Some((_, dg, ys)) => ys / dot(dg, dg),
            None => 1.0 / (1.0 + dot(&g, &g).sqrt()),
        };
        for dv in d.iter_mut() {
            *dv *= gamma;
        }
        for ((dz, dg, ys), a) in history.iter().zip(alphas.into_iter().rev()) {
            let b = dot(dg, &d) / ys;
            for (dv, sv) in d.iter_mut().zip(dz) {
                *dv += (a - b) * sv;
            }
        }

        let mut slope = dot(&g, &d);
        if !(slope < 0.0) {
            // stale curvature; restart from scaled steepest descent
            history.clear();
            let gscale = 1.0 / (1.0 + dot(&g, &g).sqrt());
            for (dv, gv) in d.iter_mut().zip(&g) {
                *dv = -gscale * gv;
            }
            slope = dot(&g, &d);
        }

        // backtracking Armijo line search
        let mut alpha = 1.0f64;
        let mut accepted = None;
        for _ in 0..80 {
            let z_trial: Vec<f64> = z
                .iter()
                .zip(&d)
                .map(|(zv, dv)| zv + alpha * dv)
                .collect();
            let u_trial = u_of(&z_trial);
            match eval_j(&u_trial, f) {
                Ok(v) if v <= value + 1e-4 * alpha * slope => {
                    accepted = Some((z_trial, u_trial, v));
                    break;
                }
                _ => alpha *= opts.ls_shrink,
            }
        }
        let Some((z_new, u_new, v_new)) = accepted else {
            return Err(Error::LineSearchFailure {
                iter: iterations,
                step: alpha,
            });
        };
        let g_new = grad_z(&u_new)?;
        let dz: Vec<f64> = z_new.iter().zip(&z).map(|(a, b)| a - b).collect();
        let dg: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let ys = dot(&dz, &dg);
        if ys > 1e-10 * dot(&dz, &dz).sqrt() * dot(&dg, &dg).sqrt() {
            if history.len() == opts.memory {
                history.pop_front();
            }
            history.push_back((dz, dg, ys));
        }
        z = z_new;
        u = u_new;
        value = v_new;
        g = g_new;
        trace.push(value);
        iterations += 1;
    }

    let final_grad_norm = pg_norm(&g);
    Ok(MinimizeResult {
        minimizer: u,
        value,
        iterations,
        final_grad_norm,
        converged,
        objective_trace: trace,
    })
}

/// Settings shared by all cells of a continuation run.
#[derive(Debug, Clone, Copy)]
pub struct ContinuationOptions {
    /// Rescaled time step of every functional.
    pub tau_resc: f64,
    pub source_mode: SourceMode,
    pub minimize: MinimizeOptions,
}

impl Default for ContinuationOptions {
    fn default() -> Self {
        Self {
            tau_resc: 0.05,
            source_mode: SourceMode::Truncated,
            minimize: MinimizeOptions::default(),
        }
    }
}

/// One converged eps-cell of the family.
#[derive(Debug, Clone)]
pub struct ContinuationCell {
    pub eps: f64,
    /// Minimizer in rescaled time.
    pub u: Trajectory,
    /// Physical-time image `w(t) = u(t/eps)`.
    pub w: Trajectory,
    pub functional: DiscreteFunctional,
    pub value: f64,
    pub iterations: usize,
    pub final_grad_norm: f64,
    pub converged: bool,
    pub conditions: Option<ConditionReport>,
}

/// Family of minimizers with per-eps failures recorded, not fatal.
#[derive(Debug, Clone, Default)]
pub struct ContinuationFamily {
    pub cells: Vec<ContinuationCell>,
    pub failures: Vec<(f64, String)>,
}

/// Builds the rescaled time grid for one eps: horizon `t_phys/eps` plus the
/// tail margin.
pub fn rescaled_grid(t_phys: f64, eps: f64, tau_resc: f64) -> Result<TimeGrid> {
    let horizon = t_phys / eps + TAIL_MARGIN;
    let n_t = (horizon / tau_resc).ceil() as usize;
    TimeGrid::new(n_t.max(4), tau_resc)
}

/// Affine competitor `psi(t) = w0 + eps t w1`: the cold-start initializer.
pub fn affine_start(f: &DiscreteFunctional) -> Trajectory {
    let mut u = Trajectory::zeros(f.grid(), f.time());
    for i in 0..=f.time().n_t() {
        let mut v = f.w0().clone();
        v.add_scaled(f.eps() * f.time().node(i), f.w1());
        u.set_slice(i, v.values());
    }
    apply_initial_constraints(&mut u, f);
    u
}

/// Assembles the functional for one eps of a problem.
pub fn build_functional(
    p: &ProblemSpec,
    eps: f64,
    opts: &ContinuationOptions,
) -> Result<DiscreteFunctional> {
    let time = rescaled_grid(p.t_phys, eps, opts.tau_resc)?;
    let source = if p.source.is_zero() {
        None
    } else {
        Some(build_f_eps(&p.source, eps, opts.source_mode, &p.grid)?)
    };
    DiscreteFunctional::new(
        eps,
        p.wspec.clone(),
        p.gspec,
        source,
        p.grid,
        time,
        p.w0.clone(),
        p.w1.clone(),
    )
}

/// Minimizes along a descending eps schedule, warm-starting each cell from
/// the previous physical-time minimizer. Failed cells are recorded and
/// skipped; an empty schedule yields an empty family.
pub fn continuation(
    p: &ProblemSpec,
    schedule: &[f64],
    opts: &ContinuationOptions,
) -> Result<ContinuationFamily> {
    p.validate()?;
    for pair in schedule.windows(2) {
        if pair[1] >= pair[0] {
            return Err(Error::InvalidParam(format!(
                "eps schedule must be strictly descending, got {} then {}",
                pair[0], pair[1]
            )));
        }
    }
    let mut family = ContinuationFamily::default();
    let mut prev_w: Option<Trajectory> = None;
    for &eps in schedule {
        if !(eps > 0.0 && eps < 1.0) {
            family.failures.push((eps, format!("eps = {eps} outside (0,1)")));
            continue;
        }
        if eps < 0.05 {
            // weight ratio e^{-T_phys/eps} leaves double precision
            family
                .failures
                .push((eps, format!("eps = {eps} below the 0.05 envelope")));
            continue;
        }
        let cell = (|| -> Result<ContinuationCell> {
            let f = build_functional(p, eps, opts)?;
            let init = match &prev_w {
                None => affine_start(&f),
                Some(w) => {
                    let mut u = Trajectory::zeros(f.grid(), f.time());
                    for i in 0..=f.time().n_t() {
                        let t_phys = eps * f.time().node(i);
                        u.set_slice(i, w.interpolate(t_phys).values());
                    }
                    apply_initial_constraints(&mut u, &f);
                    u
                }
            };
            let res = minimize(&f, &init, &opts.minimize)?;
            let w = rescale(&res.minimizer, eps)?;
            let conditions = f
                .source()
                .map(|fe| verify_source_conditions(fe, &p.grid, f.time()));
            Ok(ContinuationCell {
                eps,
                u: res.minimizer,
                w,
                functional: f,
                value: res.value,
                iterations: res.iterations,
                final_grad_norm: res.final_grad_norm,
                converged: res.converged,
                conditions,
            })
        })();
        match cell {
            Ok(c) => {
                prev_w = Some(c.w.clone());
                family.cells.push(c);
            }
            Err(e) => family.failures.push((eps, e.to_string())),
        }
    }
    Ok(family)
}
