//! Periodic 1-D spatial discretization: spectral differential operators and
//! the potential / dissipation energy functionals with their gradients.
//!
//! Derivatives are DFT-based, so the leading Sobolev seminorm is exact for
//! band-limited data and fractional orders come for free. Quadrature is the
//! rectangle rule `h * sum`, which is exact for trigonometric interpolants and
//! keeps every (eval, grad) pair compatible. Nonlinear terms are evaluated
//! nodewise (collocation); no dealiasing filter is applied.

use std::cell::RefCell;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Uniform periodic grid on `[0, length)` with `n_x` nodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpatialGrid {
    n_x: usize,
    length: f64,
}

impl SpatialGrid {
    pub fn new(n_x: usize, length: f64) -> Result<Self> {
        if n_x < 8 {
            return Err(Error::InvalidGrid(format!("n_x = {n_x} < 8")));
        }
        if n_x % 2 != 0 {
            return Err(Error::InvalidGrid(format!("n_x = {n_x} must be even")));
        }
        if !(length > 0.0) || !length.is_finite() {
            return Err(Error::InvalidGrid(format!("length = {length}")));
        }
        Ok(Self { n_x, length })
    }

    pub fn n_x(&self) -> usize {
        self.n_x
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn spacing(&self) -> f64 {
        self.length / self.n_x as f64
    }

    /// Node coordinates `x_i = i * h`.
    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        let h = self.spacing();
        (0..self.n_x).map(move |i| i as f64 * h)
    }

    /// Signed wavenumber of DFT bin `j` (the Nyquist bin gets `+pi*n/L`).
    pub fn wavenumber(&self, j: usize) -> f64 {
        let n = self.n_x as i64;
        let js = if (j as i64) <= n / 2 { j as i64 } else { j as i64 - n };
        2.0 * std::f64::consts::PI * js as f64 / self.length
    }

    /// Samples a function of x onto the grid.
    pub fn sample(&self, f: impl Fn(f64) -> f64) -> Field {
        Field {
            values: self.nodes().map(f).collect(),
        }
    }
}

/// Real-valued grid function (node samples of `v(x)`).
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    values: Vec<f64>,
}

impl Field {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("Field::new"));
        }
        Ok(Self { values })
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            values: vec![0.0; n],
        }
    }

    pub fn constant(n: usize, c: f64) -> Self {
        Self {
            values: vec![c; n],
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn scaled(&self, c: f64) -> Field {
        Field {
            values: self.values.iter().map(|v| c * v).collect(),
        }
    }

    pub fn add_scaled(&mut self, c: f64, other: &Field) {
        debug_assert_eq!(self.len(), other.len());
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += c * b;
        }
    }
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(n: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(n)
        } else {
            p.plan_fft_forward(n)
        }
    })
}

fn dft(values: &[f64]) -> Vec<Complex<f64>> {
    let mut buf: Vec<Complex<f64>> = values.iter().map(|&v| Complex::new(v, 0.0)).collect();
    plan(values.len(), false).process(&mut buf);
    buf
}

fn idft_real(mut buf: Vec<Complex<f64>>) -> Vec<f64> {
    let n = buf.len();
    plan(n, true).process(&mut buf);
    let scale = 1.0 / n as f64;
    buf.iter().map(|c| c.re * scale).collect()
}

/// Applies a real (even in xi) Fourier multiplier `s(xi)` to `v`.
pub fn apply_symbol(grid: &SpatialGrid, v: &Field, symbol: impl Fn(f64) -> f64) -> Field {
    let mut vh = dft(v.values());
    for (j, c) in vh.iter_mut().enumerate() {
        *c *= symbol(grid.wavenumber(j));
    }
    Field {
        values: idft_real(vh),
    }
}

/// Discrete k-th derivative via the symbol `(i xi)^k` (Nyquist zeroed for odd k).
pub fn derivative(grid: &SpatialGrid, v: &Field, k: u32) -> Field {
    if k == 0 {
        return v.clone();
    }
    let n = grid.n_x();
    let mut vh = dft(v.values());
    for (j, c) in vh.iter_mut().enumerate() {
        if k % 2 == 1 && j == n / 2 {
            *c = Complex::new(0.0, 0.0);
            continue;
        }
        let xi = grid.wavenumber(j);
        let ik = Complex::new(0.0, xi).powu(k);
        *c *= ik;
    }
    Field {
        values: idft_real(vh),
    }
}

/// Rectangle-rule quadrature `h * sum(values)`.
pub fn quadrature(grid: &SpatialGrid, values: impl Iterator<Item = f64>) -> f64 {
    grid.spacing() * values.sum::<f64>()
}

/// Discrete L2 inner product `h * sum(a_i b_i)`.
pub fn l2_inner(grid: &SpatialGrid, a: &Field, b: &Field) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    grid.spacing()
        * a.values()
            .iter()
            .zip(b.values())
            .map(|(x, y)| x * y)
            .sum::<f64>()
}

pub fn l2_norm_sq(grid: &SpatialGrid, v: &Field) -> f64 {
    l2_inner(grid, v, v)
}

/// Homogeneous Sobolev seminorm squared: `sum_xi |xi|^{2m} |v_hat(xi)|^2`,
/// normalized so that for integer m it equals the squared L2 norm of the m-th
/// derivative. The zero frequency contributes nothing.
pub fn sobolev_seminorm_sq(grid: &SpatialGrid, v: &Field, m: f64) -> Result<f64> {
    if v.values().iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("sobolev_seminorm_sq input"));
    }
    let n = grid.n_x() as f64;
    let vh = dft(v.values());
    let mut acc = 0.0;
    for (j, c) in vh.iter().enumerate() {
        if j == 0 {
            continue;
        }
        let xi = grid.wavenumber(j).abs();
        acc += xi.powf(2.0 * m) * c.norm_sqr();
    }
    Ok(grid.length() / (n * n) * acc)
}

/// One lower-order term of the potential energy: `(lambda/p) * int |D^k v|^p`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct WTerm {
    pub k: u32,
    pub lambda: f64,
    pub p: f64,
}

/// Parameters of the potential energy functional
/// `W(v) = leading/2 * |v|_{H^m}^2 + sum_k (lambda_k/p_k) int |D^k v|^{p_k}`.
///
/// `leading` is 1 for the semilinear family and 0 for the pure p-Laplacian
/// energies, where `m` only bounds the orders `k` of the lower terms.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct WSpec {
    pub m: f64,
    pub leading: f64,
    pub terms: Vec<WTerm>,
    pub theta: f64,
}

impl WSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.m > 0.0) {
            return Err(Error::InvalidParam(format!("m = {} must be > 0", self.m)));
        }
        if self.leading < 0.0 {
            return Err(Error::InvalidParam("leading coefficient < 0".into()));
        }
        for t in &self.terms {
            if (t.k as f64) >= self.m {
                return Err(Error::InvalidParam(format!("term order k={} >= m={}", t.k, self.m)));
            }
            if t.lambda < 0.0 {
                return Err(Error::InvalidParam(format!("lambda = {} < 0", t.lambda)));
            }
            if !(t.p > 1.0) {
                return Err(Error::InvalidParam(format!("p = {} must be > 1", t.p)));
            }
        }
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return Err(Error::InvalidParam(format!("theta = {} not in (0,1)", self.theta)));
        }
        Ok(())
    }
}

/// Coefficients of the quadratic dissipation bilinear form
/// `a(v,v) = mu0 int v^2 + mu1 int |grad v|^2 + mu2 int |lap v|^2`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct GSpec {
    pub mu0: f64,
    pub mu1: f64,
    pub mu2: f64,
}

impl GSpec {
    pub const ZERO: GSpec = GSpec {
        mu0: 0.0,
        mu1: 0.0,
        mu2: 0.0,
    };

    pub fn validate(&self) -> Result<()> {
        if self.mu0 < 0.0 || self.mu1 < 0.0 || self.mu2 < 0.0 {
            return Err(Error::InvalidParam("dissipation coefficients must be >= 0".into()));
        }
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        self.mu0 == 0.0 && self.mu1 == 0.0 && self.mu2 == 0.0
    }

    fn symbol(&self, xi: f64) -> f64 {
        self.mu0 + self.mu1 * xi * xi + self.mu2 * xi.powi(4)
    }
}

/// Potential energy `W(v)`.
pub fn eval_w(grid: &SpatialGrid, v: &Field, spec: &WSpec) -> Result<f64> {
    let mut total = 0.0;
    if spec.leading != 0.0 {
        total += 0.5 * spec.leading * sobolev_seminorm_sq(grid, v, spec.m)?;
    }
    for t in &spec.terms {
        if t.lambda == 0.0 {
            continue;
        }
        let dv = derivative(grid, v, t.k);
        let integral = quadrature(grid, dv.values().iter().map(|d| d.abs().powf(t.p)));
        total += t.lambda / t.p * integral;
    }
    if !total.is_finite() {
        return Err(Error::NonFinite("eval_w"));
    }
    Ok(total)
}

fn signed_power(d: f64, p: f64) -> f64 {
    // |d|^{p-2} d, with the removable singularity at d = 0 for p < 2
    if d == 0.0 {
        0.0
    } else {
        d.abs().powf(p - 2.0) * d
    }
}

/// L2-discrete gradient of `eval_w` at `v`.
pub fn grad_w(grid: &SpatialGrid, v: &Field, spec: &WSpec) -> Result<Field> {
    let mut g = if spec.leading != 0.0 {
        let lead = spec.leading;
        apply_symbol(grid, v, |xi| lead * xi.abs().powf(2.0 * spec.m))
    } else {
        Field::zeros(grid.n_x())
    };
    for t in &spec.terms {
        if t.lambda == 0.0 {
            continue;
        }
        let dv = derivative(grid, v, t.k);
        let nl = Field {
            values: dv
                .values()
                .iter()
                .map(|&d| t.lambda * signed_power(d, t.p))
                .collect(),
        };
        // adjoint of D^k in the discrete L2 inner product is (-1)^k D^k
        let sign = if t.k % 2 == 0 { 1.0 } else { -1.0 };
        let back = derivative(grid, &nl, t.k);
        g.add_scaled(sign, &back);
    }
    if g.values().iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("grad_w"));
    }
    Ok(g)
}

/// Dissipation energy `G(v) = a(v,v)/2`.
pub fn eval_g(grid: &SpatialGrid, v: &Field, spec: &GSpec) -> Result<f64> {
    if spec.is_zero() {
        return Ok(0.0);
    }
    let n = grid.n_x() as f64;
    let vh = dft(v.values());
    let mut acc = 0.0;
    for (j, c) in vh.iter().enumerate() {
        acc += spec.symbol(grid.wavenumber(j)) * c.norm_sqr();
    }
    let val = 0.5 * grid.length() / (n * n) * acc;
    if !val.is_finite() {
        return Err(Error::NonFinite("eval_g"));
    }
    Ok(val)
}

/// L2-discrete gradient of `eval_g`, i.e. the representer of `a(v, .)`.
pub fn grad_g(grid: &SpatialGrid, v: &Field, spec: &GSpec) -> Result<Field> {
    if spec.is_zero() {
        return Ok(Field::zeros(grid.n_x()));
    }
    let g = apply_symbol(grid, v, |xi| spec.symbol(xi));
    if g.values().iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("grad_g"));
    }
    Ok(g)
}

/// Squared G-norm `|v|_{L2}^2 + 2 G(v)`.
pub fn g_norm_sq(grid: &SpatialGrid, v: &Field, spec: &GSpec) -> Result<f64> {
    Ok(l2_norm_sq(grid, v) + 2.0 * eval_g(grid, v, spec)?)
}

/// Optional parameters for [`preset`].
#[derive(Debug, Clone, Copy, Default)]
pub struct PresetParams {
    /// Exponent of the zeroth-order (or p-Laplacian) term; defaults to 2.
    pub p: Option<f64>,
    /// Exponent of the zeroth-order term in the p-Laplacian presets.
    pub q: Option<f64>,
}

fn theta_of(ps: &[f64]) -> f64 {
    let mut m = 2.0f64;
    for &p in ps {
        m = m.max(p);
    }
    1.0 - 1.0 / m
}

/// Named (W, G) pairs for the model equations.
pub fn preset(name: &str, params: PresetParams) -> Result<(WSpec, GSpec)> {
    let p = params.p.unwrap_or(2.0);
    if !(p > 1.0) {
        return Err(Error::InvalidParam(format!("p = {p} must be > 1")));
    }
    // semilinear family: W = 1/2 |grad v|^2 + (1/p) |v|^p
    let semilinear = |p: f64| WSpec {
        m: 1.0,
        leading: 1.0,
        terms: vec![WTerm { k: 0, lambda: 1.0, p }],
        theta: theta_of(&[p]),
    };
    // p-Laplacian family: W = (1/p)|grad v|^p + (1/q)|v|^q, no quadratic leading part
    let plap = |p: f64, q: f64| -> Result<WSpec> {
        if !(q > 1.0) {
            return Err(Error::InvalidParam(format!("q = {q} must be > 1")));
        }
        Ok(WSpec {
            m: 2.0,
            leading: 0.0,
            terms: vec![
                WTerm { k: 1, lambda: 1.0, p },
                WTerm { k: 0, lambda: 1.0, p: q },
            ],
            theta: theta_of(&[p, q]),
        })
    };
    let g = |mu0: f64, mu1: f64, mu2: f64| GSpec { mu0, mu1, mu2 };
    let q = params.q.unwrap_or(2.0);
    let pair = match name {
        "nlw" => (semilinear(p), GSpec::ZERO),
        "telegraph" => (semilinear(p), g(1.0, 0.0, 0.0)),
        "telegraph_plap" => (plap(p, q)?, g(1.0, 0.0, 0.0)),
        "strong_damped" => (semilinear(p), g(0.0, 1.0, 0.0)),
        "strong_damped_plap" => (plap(p, q)?, g(0.0, 1.0, 0.0)),
        "damped_h1" => (semilinear(p), g(1.0, 1.0, 0.0)),
        "damped_h2" => (semilinear(p), g(0.0, 0.0, 1.0)),
        other => return Err(Error::UnknownPreset(other.to_string())),
    };
    pair.0.validate()?;
    pair.1.validate()?;
    Ok(pair)
}
