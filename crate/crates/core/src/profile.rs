//! The radial ground state `W = G_s * (W - 1)_+^γ` in the plane, its mass
//! `M_γ = ∫ (W - 1)_+^γ`, free-boundary radius `R1`, and the concentration
//! scale `μ` that turns a vortex strength into a bump size.
//!
//! The solver pins the free boundary: with `L = R1` and `W(Lρ) = u(ρ)/λ`,
//! the unknown `u` on `[0, 1]` satisfies `u = ∫ K (u - λ)_+^γ ρ' dρ'` with
//! `λ = u(1)`. This removes the scaling mode that makes plain fixed-point
//! iteration on `W` unstable. A normalized damped iteration provides the
//! starting shape and Newton finishes the solve.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frac_kernel::{gamma_fn, KernelConstants};
use crate::output::{csv_table, fmt17};
use crate::quad::{adaptive, gauss};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProfileParams {
    pub consts: KernelConstants,
    pub gamma: f64,
}

impl ProfileParams {
    pub fn new(s: f64, gamma: f64) -> Result<Self> {
        Self::from_constants(KernelConstants::new(s)?, gamma)
    }

    /// Requires `1 < γ < (2 + 2s)/(2 - 2s)` and `γ ≠ 1/(1 - s)`.
    pub fn from_constants(consts: KernelConstants, gamma: f64) -> Result<Self> {
        let s = consts.s();
        let upper = (2.0 + 2.0 * s) / (2.0 - 2.0 * s);
        if !(gamma > 1.0 && gamma < upper) {
            return Err(Error::domain(format!(
                "gamma must lie in (1, {upper}) for s = {s}, got {gamma}"
            )));
        }
        if (gamma * (1.0 - s) - 1.0).abs() < 1e-9 {
            return Err(Error::domain(format!(
                "gamma = 1/(1-s) = {gamma} makes the mass exponent vanish"
            )));
        }
        Ok(ProfileParams { consts, gamma })
    }

    pub fn s(&self) -> f64 {
        self.consts.s()
    }

    /// `2s/(γ - 1)`: amplitude `μ^{-p}` of a bump of size `μ`.
    pub fn amplitude_exponent(&self) -> f64 {
        2.0 * self.s() / (self.gamma - 1.0)
    }

    /// `e = 2(1 - sγ/(γ - 1))`, so that a bump of size `μ` carries strength `M_γ μ^e`.
    pub fn mass_exponent(&self) -> f64 {
        2.0 * (1.0 - self.s() * self.gamma / (self.gamma - 1.0))
    }
}

/// Discretization controls. Lengths are in units of the free-boundary radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProfileGrid {
    /// Cells across the bulk of the support `[0, R1]`.
    pub n_inner: usize,
    /// Cell size at the free boundary.
    pub h_min: f64,
    /// Growth factor of cell sizes away from the free boundary.
    pub grading: f64,
    /// Ratio between consecutive far-field radii.
    pub tail_ratio: f64,
    /// Smallest admissible outer radius.
    pub r_max_min: f64,
    pub max_warm: usize,
    pub max_newton: usize,
}

impl Default for ProfileGrid {
    fn default() -> Self {
        ProfileGrid {
            n_inner: 400,
            h_min: 1e-5,
            grading: 1.15,
            tail_ratio: 1.025,
            r_max_min: 1e3,
            max_warm: 400,
            max_newton: 40,
        }
    }
}

impl ProfileGrid {
    fn validate(&self) -> Result<()> {
        let h = 1.0 / self.n_inner as f64;
        if self.n_inner < 16
            || !(self.h_min > 0.0 && self.h_min <= h)
            || !(self.grading > 1.0 && self.grading <= 2.0)
            || !(self.tail_ratio > 1.0 && self.tail_ratio <= 1.5)
            || !(self.r_max_min >= 20.0)
            || self.max_newton == 0
        {
            return Err(Error::domain(format!("invalid profile grid {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfileDiagnostics {
    /// `λ = u(1)` in pinned units.
    pub lambda: f64,
    pub warm_iterations: usize,
    pub newton_iterations: usize,
    /// Relative residual `‖u - T(u)‖∞ / ‖u‖∞` after each Newton step.
    pub residual_history: Vec<f64>,
    /// Grid intervals on which `W` increases; expected to be zero.
    pub monotone_violations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RadialProfile {
    pub params: ProfileParams,
    pub radii: Vec<f64>,
    pub values: Vec<f64>,
    /// `dW/dr` at each node, used by the Hermite interpolant.
    pub slopes: Vec<f64>,
    #[serde(rename = "M_gamma")]
    pub m_gamma: f64,
    #[serde(rename = "R1")]
    pub r1: f64,
    pub diagnostics: ProfileDiagnostics,
}

// ---------------------------------------------------------------------------
// radial kernel

#[derive(Debug, Clone, Copy)]
struct RadialKernel {
    c: f64,
    s: f64,
    /// `4c ∫_0^{π/2} sin^{2s-2}φ dφ`, finite only for `s > 1/2`.
    diag: Option<f64>,
}

impl RadialKernel {
    fn new(consts: &KernelConstants) -> Self {
        let s = consts.s();
        let diag = if s > 0.5 {
            let half = gamma_fn(s - 0.5).unwrap() * PI.sqrt() / (2.0 * gamma_fn(s).unwrap());
            Some(4.0 * consts.c2s() * half)
        } else {
            None
        };
        RadialKernel {
            c: consts.c2s(),
            s,
            diag,
        }
    }

    /// `K(r, r')` given the exact gap `d = |r - r'|`. Infinite where the
    /// kernel is singular.
    fn eval(&self, r: f64, rp: f64, d: f64) -> f64 {
        let e = self.s - 1.0;
        if r == 0.0 || rp == 0.0 {
            let m = r.max(rp);
            return 2.0 * PI * self.c * m.powf(2.0 * e);
        }
        let p = 4.0 * r * rp;
        if d == 0.0 {
            return self.diag.map_or(f64::INFINITY, |k| k * p.powf(e));
        }
        // d² + p sin²φ = p (a² + sin²φ)
        let a = d / p.sqrt();
        let a2 = a * a;
        let rule = gauss(16);
        let f = |phi: f64| {
            let sn = phi.sin();
            (a2 + sn * sn).powf(e)
        };
        let half_pi = 0.5 * PI;
        let sum = if a >= 1.0 {
            rule.integrate(0.0, half_pi, f)
        } else {
            let mut acc = 0.0;
            let mut lo = 0.0;
            let mut hi = a;
            while lo < half_pi {
                acc += rule.integrate(lo, hi, f);
                lo = hi;
                hi = (4.0 * hi).min(half_pi);
            }
            acc
        };
        4.0 * self.c * p.powf(e) * sum
    }
}

/// Angular average `K(r, r') = c_{2,s} ∫_0^{2π} (r² + r'² - 2 r r' cos θ)^{s-1} dθ`,
/// the kernel of radial convolution with `G_s`.
pub fn radial_green_row(consts: &KernelConstants, r: f64, rp: f64) -> Result<f64> {
    if !(r >= 0.0 && rp >= 0.0) || !r.is_finite() || !rp.is_finite() {
        return Err(Error::domain(format!(
            "radii must be finite and nonnegative, got {r}, {rp}"
        )));
    }
    if r == 0.0 && rp == 0.0 {
        return Err(Error::singular("K(0, 0) is infinite"));
    }
    if r == rp && consts.s() <= 0.5 {
        return Err(Error::singular(format!(
            "K(r, r) diverges for s = {} <= 1/2",
            consts.s()
        )));
    }
    Ok(RadialKernel::new(consts).eval(r, rp, (r - rp).abs()))
}

// ---------------------------------------------------------------------------
// grids and local interpolation

/// Geometric cell sizes from `h_min` up to (excluding) `h`.
fn graded_gaps(h: f64, h_min: f64, growth: f64) -> Vec<f64> {
    let mut gaps = Vec::new();
    let mut g = h_min;
    while g < h {
        gaps.push(g);
        g *= growth;
    }
    gaps
}

fn inner_nodes(grid: &ProfileGrid) -> Vec<f64> {
    let h = 1.0 / grid.n_inner as f64;
    let gaps = graded_gaps(h, grid.h_min, grid.grading);
    let graded: f64 = gaps.iter().sum();
    let bulk = 1.0 - graded;
    let m = (bulk / h).ceil().max(1.0) as usize;
    let bh = bulk / m as f64;
    let mut nodes: Vec<f64> = (0..=m).map(|i| i as f64 * bh).collect();
    let mut x = bulk;
    for g in gaps.iter().rev() {
        x += g;
        nodes.push(x);
    }
    *nodes.last_mut().unwrap() = 1.0;
    nodes
}

/// Radii beyond 1 in pinned units, out to `rho_max` (inclusive).
fn outer_nodes(grid: &ProfileGrid, rho_max: f64) -> Vec<f64> {
    let h = 1.0 / grid.n_inner as f64;
    let mut nodes = Vec::new();
    let mut rho = 1.0;
    let mut gap = grid.h_min;
    loop {
        let next = rho + gap;
        if next >= rho_max * (1.0 - 1e-12) {
            nodes.push(rho_max);
            break;
        }
        nodes.push(next);
        rho = next;
        // the free-boundary singularity sets the scale near ρ = 1
        gap = (gap * grid.grading).min(h.max((grid.tail_ratio - 1.0) * (rho - 1.0)));
    }
    nodes
}

fn lagrange4(xs: &[f64], x: f64) -> [f64; 4] {
    let mut l = [1.0; 4];
    for j in 0..4 {
        for m in 0..4 {
            if m != j {
                l[j] *= (x - xs[m]) / (xs[j] - xs[m]);
            }
        }
    }
    l
}

fn lagrange4_deriv(xs: &[f64], x: f64) -> [f64; 4] {
    let mut d = [0.0; 4];
    for j in 0..4 {
        let mut denom = 1.0;
        for m in 0..4 {
            if m != j {
                denom *= xs[j] - xs[m];
            }
        }
        let mut acc = 0.0;
        for m in 0..4 {
            if m == j {
                continue;
            }
            let mut prod = 1.0;
            for k in 0..4 {
                if k != j && k != m {
                    prod *= x - xs[k];
                }
            }
            acc += prod;
        }
        d[j] = acc / denom;
    }
    d
}

fn stencil_start(e: usize, n_nodes: usize) -> usize {
    e.saturating_sub(1).min(n_nodes - 4)
}

/// A quadrature point inside the support with its interpolation stencil.
#[derive(Debug, Clone, Copy)]
struct QPoint {
    x: f64,
    /// Quadrature weight times `x` (times the kernel, for row-specific points).
    w: f64,
    start: usize,
    lag: [f64; 4],
}

/// Discretized operator `T(u)_i = ∫_0^1 K(ρ_i, ρ') (u - u(1))_+^γ ρ' dρ'`.
struct Nystrom {
    nodes: Vec<f64>,
    gamma: f64,
    kernel: RadialKernel,
    shared: Vec<QPoint>,
    elem_of_shared: Vec<usize>,
    /// `K(ρ_i, x_q)` times the weight; zero on elements touching `ρ_i`.
    b: DMatrix<f64>,
    special: Vec<Vec<QPoint>>,
}

fn singular_power(s: f64) -> f64 {
    (3.0 / s).max(3.0)
}

impl Nystrom {
    fn new(nodes: Vec<f64>, params: &ProfileParams) -> Self {
        let kernel = RadialKernel::new(&params.consts);
        let rule = gauss(16);
        let nn = nodes.len();
        let mut shared = Vec::new();
        let mut elem_of_shared = Vec::new();
        for e in 0..nn - 1 {
            let (a, bb) = (nodes[e], nodes[e + 1]);
            let start = stencil_start(e, nn);
            let xs = &nodes[start..start + 4];
            for &(t, w) in rule.points() {
                let x = a + (bb - a) * t;
                shared.push(QPoint {
                    x,
                    w: w * (bb - a) * x,
                    start,
                    lag: lagrange4(xs, x),
                });
                elem_of_shared.push(e);
            }
        }
        let q = singular_power(kernel.s);
        let rows: Vec<(Vec<f64>, Vec<QPoint>)> = (0..nn)
            .into_par_iter()
            .map(|i| {
                let ri = nodes[i];
                let row: Vec<f64> = shared
                    .iter()
                    .zip(&elem_of_shared)
                    .map(|(p, &e)| {
                        if e + 1 == i || e == i {
                            0.0
                        } else {
                            kernel.eval(ri, p.x, (ri - p.x).abs()) * p.w
                        }
                    })
                    .collect();
                let mut sp = Vec::with_capacity(32);
                for e in [i.wrapping_sub(1), i] {
                    if e >= nn - 1 {
                        continue;
                    }
                    let other = if e == i { nodes[e + 1] } else { nodes[e] };
                    let start = stencil_start(e, nn);
                    let xs = &nodes[start..start + 4];
                    let len = other - ri;
                    for &(t, w) in rule.points() {
                        let tq1 = t.powf(q - 1.0);
                        let off = len * tq1 * t;
                        let x = ri + off;
                        let wt = w * q * tq1 * len.abs();
                        sp.push(QPoint {
                            x,
                            w: wt * x * kernel.eval(ri, x, off.abs()),
                            start,
                            lag: lagrange4(xs, x),
                        });
                    }
                }
                (row, sp)
            })
            .collect();
        let mut b = DMatrix::zeros(nn, shared.len());
        let mut special = Vec::with_capacity(nn);
        for (i, (row, sp)) in rows.into_iter().enumerate() {
            for (q, v) in row.into_iter().enumerate() {
                b[(i, q)] = v;
            }
            special.push(sp);
        }
        Nystrom {
            nodes,
            gamma: params.gamma,
            kernel,
            shared,
            elem_of_shared,
            b,
            special,
        }
    }

    fn len(&self) -> usize {
        self.nodes.len()
    }

    #[inline]
    fn excess(&self, p: &QPoint, u: &[f64], lam: f64) -> f64 {
        (0..4).map(|k| p.lag[k] * (u[p.start + k] - lam)).sum()
    }

    /// `(f, f')` at every shared point, `f = g_+^γ`.
    fn shared_fields(&self, u: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let lam = *u.last().unwrap();
        let g = self.gamma;
        self.shared
            .iter()
            .map(|p| {
                let e = self.excess(p, u, lam).max(0.0);
                (e.powf(g), g * e.powf(g - 1.0))
            })
            .unzip()
    }

    fn apply(&self, u: &[f64]) -> Vec<f64> {
        let lam = *u.last().unwrap();
        let (f, _) = self.shared_fields(u);
        let fv = DVector::from_vec(f);
        let mut out: Vec<f64> = (&self.b * fv).iter().copied().collect();
        for (i, sp) in self.special.iter().enumerate() {
            for p in sp {
                out[i] += p.w * self.excess(p, u, lam).max(0.0).powf(self.gamma);
            }
        }
        out
    }

    /// Jacobian of `u - T(u)`.
    fn jacobian(&self, u: &[f64]) -> DMatrix<f64> {
        let n = self.len();
        let last = n - 1;
        let lam = u[last];
        let (_, df) = self.shared_fields(u);
        let mut j = DMatrix::identity(n, n);
        let g = self.gamma;
        for i in 0..n {
            let mut add = |p: &QPoint, c: f64| {
                if c == 0.0 {
                    return;
                }
                for k in 0..4 {
                    j[(i, p.start + k)] -= c * p.lag[k];
                }
                j[(i, last)] += c;
            };
            for (q, p) in self.shared.iter().enumerate() {
                add(p, self.b[(i, q)] * df[q]);
            }
            for p in &self.special[i] {
                let e = self.excess(p, u, lam).max(0.0);
                add(p, p.w * g * e.powf(g - 1.0));
            }
        }
        j
    }

    /// `∫_0^1 (u - λ)_+^γ ρ dρ`.
    fn moment(&self, u: &[f64]) -> f64 {
        let (f, _) = self.shared_fields(u);
        self.shared.iter().zip(&f).map(|(p, f)| p.w * f).sum()
    }

    /// `T(u)` at a radius outside the support.
    fn eval_outside(&self, rho: f64, u: &[f64], f: &[f64]) -> Result<f64> {
        let lam = *u.last().unwrap();
        let nn = self.len();
        let mut acc = 0.0;
        let mut q = 0;
        for e in 0..nn - 1 {
            let (a, b) = (self.nodes[e], self.nodes[e + 1]);
            let per = gauss(16).len();
            debug_assert_eq!(self.elem_of_shared[q], e);
            if rho - b >= b - a {
                for k in q..q + per {
                    let p = &self.shared[k];
                    acc += self.kernel.eval(rho, p.x, rho - p.x) * p.w * f[k];
                }
            } else {
                let start = stencil_start(e, nn);
                let xs = &self.nodes[start..start + 4];
                let gamma = self.gamma;
                let kernel = self.kernel;
                let val = adaptive(
                    |x| {
                        let l = lagrange4(xs, x);
                        let g: f64 = (0..4).map(|k| l[k] * (u[start + k] - lam)).sum();
                        kernel.eval(rho, x, rho - x) * x * g.max(0.0).powf(gamma)
                    },
                    a,
                    b,
                    1e-13,
                    1e-300,
                )?;
                acc += val;
            }
            q += per;
        }
        Ok(acc)
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Normalized damped iteration `w ← (1-θ) w + θ T(w)/T(w)_0`; returns the
/// shape `w` (with `w_0 = 1`), the factor `m = T(w)_0` and the iteration count.
fn warm_start(op: &Nystrom, max_iter: usize) -> Result<(Vec<f64>, f64, usize)> {
    let mut w: Vec<f64> = op.nodes.iter().map(|r| 1.0 - 0.5 * r * r).collect();
    let mut theta = 0.5;
    let mut prev = f64::INFINITY;
    let mut m = 0.0;
    for it in 0..max_iter {
        let t = op.apply(&w);
        if !(t[0] > 0.0) || !t.iter().all(|x| x.is_finite()) {
            return Err(Error::no_convergence(
                "profile iteration collapsed (support emptied); start from a larger bump",
                f64::NAN,
            ));
        }
        m = t[0];
        let mut next: Vec<f64> = w
            .iter()
            .zip(&t)
            .map(|(a, b)| (1.0 - theta) * a + theta * b / m)
            .collect();
        let n0 = next[0];
        next.iter_mut().for_each(|x| *x /= n0);
        let diff = w
            .iter()
            .zip(&next)
            .fold(0.0f64, |d, (a, b)| d.max((a - b).abs()));
        if diff > prev {
            theta = (0.5 * theta).max(1.0 / 64.0);
        }
        prev = diff;
        w = next;
        if diff < 1e-4 {
            let t = op.apply(&w);
            return Ok((w, t[0], it + 1));
        }
    }
    Ok((w, m, max_iter))
}

/// Solves for the radial ground state. `tol` bounds the relative residual
/// `‖u - T(u)‖∞ / ‖u‖∞` of the discrete equation.
pub fn solve_profile(
    params: &ProfileParams,
    grid: &ProfileGrid,
    tol: f64,
) -> Result<RadialProfile> {
    grid.validate()?;
    if !(tol > 0.0) {
        return Err(Error::domain("profile tolerance must be positive"));
    }
    let op = Nystrom::new(inner_nodes(grid), params);
    let n = op.len();
    let gamma = params.gamma;

    let (shape, m, warm_iterations) = warm_start(&op, grid.max_warm)?;
    let scale = m.powf(-1.0 / (gamma - 1.0));
    let mut u: Vec<f64> = shape.iter().map(|w| w * scale).collect();

    let residual = |u: &[f64]| -> f64 {
        let t = op.apply(u);
        let r: Vec<f64> = u.iter().zip(&t).map(|(a, b)| a - b).collect();
        inf_norm(&r) / inf_norm(u)
    };
    let mut history = Vec::new();
    let mut res = residual(&u);
    let mut newton_iterations = 0;
    while res > 1e-14 && newton_iterations < grid.max_newton {
        newton_iterations += 1;
        let t = op.apply(&u);
        let rhs = DVector::from_iterator(n, u.iter().zip(&t).map(|(a, b)| b - a));
        let jac = op.jacobian(&u);
        let step = jac
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::singular("profile Newton Jacobian is singular"))?;
        let mut alpha = 1.0;
        let mut accepted = false;
        while alpha >= 1.0 / 1024.0 {
            let trial: Vec<f64> = u
                .iter()
                .zip(step.iter())
                .map(|(a, d)| a + alpha * d)
                .collect();
            let lam = trial[n - 1];
            if trial.iter().any(|&x| x > lam) {
                let rt = residual(&trial);
                if rt < res {
                    u = trial;
                    res = rt;
                    accepted = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        history.push(res);
        if !accepted {
            break;
        }
    }
    if !(res <= tol) {
        return Err(Error::NonConvergence {
            message: format!("profile Newton stalled; residual history {history:?}"),
            residual: res,
            best: Some(u),
        });
    }

    let lam = u[n - 1];
    let s = params.s();
    let big_l = lam.powf((gamma - 1.0) / (2.0 * s));
    let m_gamma = 2.0 * PI * big_l * big_l * lam.powf(-gamma) * op.moment(&u);
    let c = params.consts.c2s();
    let w0 = u[0] / lam;

    // far radius: tail model at most 5e-4 W(0)
    let tail_amp = m_gamma * c * big_l.powf(2.0 * s - 2.0);
    let rho_decay = (tail_amp / (5e-4 * w0)).powf(1.0 / (2.0 - 2.0 * s));
    let rho_max = grid.r_max_min.max(rho_decay);
    let outer = outer_nodes(grid, rho_max);

    let (f_shared, _) = op.shared_fields(&u);
    let outer_u: Vec<f64> = outer
        .par_iter()
        .map(|&rho| op.eval_outside(rho, &u, &f_shared))
        .collect::<Result<_>>()?;

    // node slopes du/dρ from local cubic fits that do not straddle ρ = 1
    let mut du = vec![0.0; n];
    for i in 1..n {
        let st = stencil_start(i, n);
        let d = lagrange4_deriv(&op.nodes[st..st + 4], op.nodes[i]);
        du[i] = (0..4).map(|k| d[k] * u[st + k]).sum();
    }
    let mut orho = vec![1.0];
    orho.extend_from_slice(&outer);
    let mut ou = vec![lam];
    ou.extend_from_slice(&outer_u);
    let mut odu = vec![du[n - 1]; orho.len()];
    for k in 1..orho.len() {
        let st = stencil_start(k, orho.len());
        let d = lagrange4_deriv(&orho[st..st + 4], orho[k]);
        odu[k] = (0..4).map(|j| d[j] * ou[st + j]).sum();
    }

    let mut radii: Vec<f64> = op.nodes.iter().map(|r| r * big_l).collect();
    radii.extend(outer.iter().map(|r| r * big_l));
    let mut values: Vec<f64> = u.iter().map(|x| x / lam).collect();
    values.extend(outer_u.iter().map(|x| x / lam));
    let mut slopes: Vec<f64> = du.iter().map(|d| d / (lam * big_l)).collect();
    slopes.extend(odu[1..].iter().map(|d| d / (lam * big_l)));
    let monotone_violations = values.windows(2).filter(|w| w[1] > w[0]).count();
    limit_slopes(&radii, &values, &mut slopes);

    Ok(RadialProfile {
        params: *params,
        radii,
        values,
        slopes,
        m_gamma,
        r1: big_l,
        diagnostics: ProfileDiagnostics {
            lambda: lam,
            warm_iterations,
            newton_iterations,
            residual_history: history,
            monotone_violations,
        },
    })
}

/// Fritsch-Carlson limiter: keeps the Hermite interpolant monotone on every
/// interval where the data are monotone.
fn limit_slopes(x: &[f64], y: &[f64], m: &mut [f64]) {
    for k in 0..x.len() - 1 {
        let delta = (y[k + 1] - y[k]) / (x[k + 1] - x[k]);
        if delta == 0.0 {
            m[k] = 0.0;
            m[k + 1] = 0.0;
            continue;
        }
        if m[k] * delta < 0.0 {
            m[k] = 0.0;
        }
        if m[k + 1] * delta < 0.0 {
            m[k + 1] = 0.0;
        }
        let a = m[k] / delta;
        let b = m[k + 1] / delta;
        let r2 = a * a + b * b;
        if r2 > 9.0 {
            let tau = 3.0 / r2.sqrt();
            m[k] = tau * a * delta;
            m[k + 1] = tau * b * delta;
        }
    }
}

impl RadialProfile {
    pub fn r_max(&self) -> f64 {
        *self.radii.last().unwrap()
    }

    pub fn w0(&self) -> f64 {
        self.values[0]
    }

    /// Far-field model `M_γ c_{2,s} r^{2s-2}`.
    pub fn tail_model(&self, r: f64) -> f64 {
        let s = self.params.s();
        self.m_gamma * self.params.consts.c2s() * r.powf(2.0 * s - 2.0)
    }

    /// `W(r) r^{2-2s} / (M_γ c_{2,s})`, which tends to 1.
    pub fn tail_ratio(&self, r: f64) -> f64 {
        evaluate_profile(self, r) / self.tail_model(r)
    }

    fn locate(&self, r: f64) -> usize {
        let k = self.radii.partition_point(|&x| x <= r);
        k.saturating_sub(1).min(self.radii.len() - 2)
    }

    /// Two-column table `r, W` preceded by a comment line with the parameters.
    pub fn to_table(&self) -> String {
        let mut out = format!(
            "# s={} gamma={} M_gamma={} R1={}\n",
            fmt17(self.params.s()),
            fmt17(self.params.gamma),
            fmt17(self.m_gamma),
            fmt17(self.r1)
        );
        out.push_str(&csv_table(
            &["r", "W"],
            self.radii
                .iter()
                .zip(&self.values)
                .map(|(r, w)| vec![*r, *w]),
        ));
        out
    }
}

/// Monotone cubic Hermite interpolation on the profile grid, with the
/// far-field model beyond the last node. Radial, so `r` is taken by absolute value.
pub fn evaluate_profile(profile: &RadialProfile, r: f64) -> f64 {
    let r = r.abs();
    if r > profile.r_max() {
        return profile.tail_model(r);
    }
    let k = profile.locate(r);
    let (x0, x1) = (profile.radii[k], profile.radii[k + 1]);
    let h = x1 - x0;
    let t = (r - x0) / h;
    let (y0, y1) = (profile.values[k], profile.values[k + 1]);
    let (m0, m1) = (profile.slopes[k] * h, profile.slopes[k + 1] * h);
    let t2 = t * t;
    let t3 = t2 * t;
    (2.0 * t3 - 3.0 * t2 + 1.0) * y0
        + (t3 - 2.0 * t2 + t) * m0
        + (-2.0 * t3 + 3.0 * t2) * y1
        + (t3 - t2) * m1
}

/// `dW/dr`, consistent with [`evaluate_profile`].
pub fn evaluate_profile_deriv(profile: &RadialProfile, r: f64) -> f64 {
    let sign = if r < 0.0 { -1.0 } else { 1.0 };
    let r = r.abs();
    if r > profile.r_max() {
        let s = profile.params.s();
        return sign * (2.0 * s - 2.0) * profile.tail_model(r) / r;
    }
    let k = profile.locate(r);
    let (x0, x1) = (profile.radii[k], profile.radii[k + 1]);
    let h = x1 - x0;
    let t = (r - x0) / h;
    let (y0, y1) = (profile.values[k], profile.values[k + 1]);
    let (m0, m1) = (profile.slopes[k] * h, profile.slopes[k + 1] * h);
    let t2 = t * t;
    let d = (6.0 * t2 - 6.0 * t) * y0
        + (3.0 * t2 - 4.0 * t + 1.0) * m0
        + (-6.0 * t2 + 6.0 * t) * y1
        + (3.0 * t2 - 2.0 * t) * m1;
    sign * d / h
}

/// `2π ∫_0^{R1} (W - 1)_+^γ r dr` from the interpolated profile, with the
/// cell containing `R1` split there.
#[allow(non_snake_case)]
pub fn mass_M_gamma(profile: &RadialProfile) -> f64 {
    let g = profile.params.gamma;
    let r1 = profile.r1;
    let rule = gauss(16);
    let f = |r: f64| (evaluate_profile(profile, r) - 1.0).max(0.0).powf(g) * r;
    let mut acc = 0.0;
    for w in profile.radii.windows(2) {
        let (a, b) = (w[0], w[1]);
        if a >= r1 {
            break;
        }
        if b < r1 {
            acc += rule.integrate(a, b, f);
        } else {
            acc += rule.integrate_singular(r1, a, 2.0, |x, _| f(x));
        }
    }
    2.0 * PI * acc
}

/// `μ = (κ / M_γ)^{1/e}`, the positive solution of `M_γ μ^e = κ`.
pub fn mu_from_kappa(m_gamma: f64, params: &ProfileParams, kappa: f64) -> Result<f64> {
    if !(kappa > 0.0) || !kappa.is_finite() {
        return Err(Error::domain(format!(
            "concentrated strengths must be positive, got {kappa}"
        )));
    }
    if !(m_gamma > 0.0) {
        return Err(Error::domain("mass must be positive"));
    }
    let e = params.mass_exponent();
    if e.abs() < 1e-12 {
        return Err(Error::domain("mass exponent vanishes"));
    }
    Ok((kappa / m_gamma).powf(1.0 / e))
}

/// `max_r |W(r) - ∫_0^{R1} K(r, r') (W(r') - 1)_+^γ r' dr'|` at the given
/// radii, using only the interpolated profile and adaptive quadrature.
pub fn profile_residual(profile: &RadialProfile, radii: &[f64]) -> Result<f64> {
    let kernel = RadialKernel::new(&profile.params.consts);
    let g = profile.params.gamma;
    let r1 = profile.r1;
    let q = singular_power(kernel.s);
    let f = |x: f64| (evaluate_profile(profile, x) - 1.0).max(0.0).powf(g);
    let tol = 1e-14 * profile.w0();
    let errs: Vec<f64> = radii
        .par_iter()
        .map(|&r| -> Result<f64> {
            let mut acc = 0.0;
            let pieces = 16;
            let mut cuts: Vec<f64> = (0..=pieces)
                .map(|k| r1 * k as f64 / pieces as f64)
                .collect();
            if r > 0.0 && r < r1 {
                cuts.push(r);
                cuts.sort_by(f64::total_cmp);
                cuts.dedup();
            }
            for w in cuts.windows(2) {
                let (a, b) = (w[0], w[1]);
                if r == a || r == b {
                    let (at, other) = if r == a { (a, b) } else { (b, a) };
                    let len = other - at;
                    acc += adaptive(
                        |t| {
                            let tq1 = t.powf(q - 1.0);
                            let off = len * tq1 * t;
                            let x = at + off;
                            q * tq1 * len.abs() * kernel.eval(r, x, off.abs()) * x * f(x)
                        },
                        0.0,
                        1.0,
                        1e-12,
                        tol,
                    )?;
                } else {
                    acc += adaptive(
                        |x| kernel.eval(r, x, (r - x).abs()) * x * f(x),
                        a,
                        b,
                        1e-12,
                        tol,
                    )?;
                }
            }
            Ok((evaluate_profile(profile, r) - acc).abs())
        })
        .collect::<Result<_>>()?;
    Ok(errs.into_iter().fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_grid() -> ProfileGrid {
        ProfileGrid {
            n_inner: 60,
            h_min: 1e-4,
            ..ProfileGrid::default()
        }
    }

    /// Periodic trapezoid rule in θ, spectrally accurate for `r ≠ r'`.
    fn kernel_oracle(k: &KernelConstants, r: f64, rp: f64) -> f64 {
        let n = 400_000;
        let s = k.s();
        let h = 2.0 * PI / n as f64;
        let terms: Vec<f64> = (0..n)
            .map(|j| {
                let th = j as f64 * h;
                ((r - rp) * (r - rp) + 4.0 * r * rp * (0.5 * th).sin().powi(2)).powf(s - 1.0)
            })
            .collect();
        let sum = crate::quad::pairwise_sum(&terms);
        k.c2s() * sum * h
    }

    #[test]
    fn kernel_at_origin() {
        let k = KernelConstants::new(0.3).unwrap();
        let v = radial_green_row(&k, 2.0, 0.0).unwrap();
        assert!((v - 2.0 * PI * k.c2s() * 2f64.powf(-1.4)).abs() < 1e-15);
        assert_eq!(v, radial_green_row(&k, 0.0, 2.0).unwrap());
        assert!(matches!(
            radial_green_row(&k, 0.0, 0.0),
            Err(Error::Singularity(_))
        ));
    }

    #[test]
    fn kernel_matches_angular_oracle() {
        for s in [0.25, 0.5, 0.75] {
            let k = KernelConstants::new(s).unwrap();
            for (r, rp) in [(1.0, 0.5), (1.0, 0.9), (0.3, 3.0), (1.0, 0.999)] {
                let v = radial_green_row(&k, r, rp).unwrap();
                let o = kernel_oracle(&k, r, rp);
                assert!(
                    (v - o).abs() <= 1e-11 * o,
                    "s={s} r={r} r'={rp}: {v} vs {o}"
                );
                let sym = radial_green_row(&k, rp, r).unwrap();
                assert!((v - sym).abs() <= 1e-14 * v);
            }
        }
    }

    #[test]
    fn kernel_diagonal() {
        let k = KernelConstants::new(0.5).unwrap();
        assert!(matches!(
            radial_green_row(&k, 1.0, 1.0),
            Err(Error::Singularity(_))
        ));
        let k = KernelConstants::new(0.9).unwrap();
        let d = radial_green_row(&k, 1.0, 1.0).unwrap();
        let near = radial_green_row(&k, 1.0, 1.0 + 1e-10).unwrap();
        assert!((d - near).abs() < 1e-6 * d);
    }

    #[test]
    fn params_window() {
        assert!(ProfileParams::new(0.5, 1.5).is_ok());
        assert!(ProfileParams::new(0.5, 1.0).is_err());
        assert!(ProfileParams::new(0.5, 3.0).is_err());
        assert!(ProfileParams::new(0.5, 2.0).is_err());
        let p = ProfileParams::new(0.5, 1.5).unwrap();
        assert!((p.mass_exponent() + 1.0).abs() < 1e-15);
        assert!((p.amplitude_exponent() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn mu_scaling() {
        let p = ProfileParams::new(0.5, 1.5).unwrap();
        assert!((mu_from_kappa(3.0, &p, 3.0).unwrap() - 1.0).abs() < 1e-15);
        let a = mu_from_kappa(3.0, &p, 1.0).unwrap();
        let b = mu_from_kappa(3.0, &p, 2.0).unwrap();
        let e = p.mass_exponent();
        assert!((b / a - 2f64.powf(1.0 / e)).abs() < 1e-14);
        assert!(mu_from_kappa(3.0, &p, 0.0).is_err());
        assert!(mu_from_kappa(3.0, &p, -1.0).is_err());
    }

    #[test]
    fn grids_are_increasing() {
        let g = ProfileGrid::default();
        let inner = inner_nodes(&g);
        assert_eq!(inner[0], 0.0);
        assert_eq!(*inner.last().unwrap(), 1.0);
        assert!(inner.windows(2).all(|w| w[1] > w[0]));
        assert!((inner[inner.len() - 1] - inner[inner.len() - 2] - g.h_min).abs() < 1e-15);
        let outer = outer_nodes(&g, 1e3);
        assert!(outer.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(*outer.last().unwrap(), 1e3);
    }

    #[test]
    fn hermite_reproduces_nodes_and_tail() {
        let p = solve_profile(&ProfileParams::new(0.5, 1.5).unwrap(), &small_grid(), 1e-8).unwrap();
        for k in [0, 7, 30, p.radii.len() - 1] {
            assert_eq!(evaluate_profile(&p, p.radii[k]), p.values[k]);
        }
        let r = 2.0 * p.r_max();
        assert_eq!(
            evaluate_profile(&p, r),
            p.m_gamma * p.params.consts.c2s() * r.powf(-1.0)
        );
        assert!(p.m_gamma > 0.0);
        assert!(p.values.last().unwrap() <= &(1e-3 * p.w0()));
        assert!(p.r1 < p.r_max() / 10.0);
        assert!((evaluate_profile(&p, p.r1) - 1.0).abs() < 1e-12);
        assert_eq!(p.diagnostics.monotone_violations, 0);
        // derivative against centered differences of the interpolant
        for r in [0.3 * p.r1, 0.97 * p.r1, 2.0 * p.r1, 40.0 * p.r1] {
            let h = 1e-6 * r;
            let fd = (evaluate_profile(&p, r + h) - evaluate_profile(&p, r - h)) / (2.0 * h);
            assert!((fd - evaluate_profile_deriv(&p, r)).abs() < 1e-6 * fd.abs().max(1e-3));
        }
    }

    #[test]
    fn solver_is_deterministic_and_table_has_header() {
        let params = ProfileParams::new(0.5, 1.5).unwrap();
        let a = solve_profile(&params, &small_grid(), 1e-8).unwrap();
        let b = solve_profile(&params, &small_grid(), 1e-8).unwrap();
        assert_eq!(a.to_table(), b.to_table());
        let t = a.to_table();
        let mut lines = t.lines();
        assert!(lines
            .next()
            .unwrap()
            .starts_with("# s=5.0000000000000000e-1 gamma="));
        assert_eq!(lines.next(), Some("r,W"));
    }

    #[test]
    fn mass_from_interpolant_matches_solver() {
        let p = solve_profile(&ProfileParams::new(0.5, 1.5).unwrap(), &small_grid(), 1e-8).unwrap();
        let m = mass_M_gamma(&p);
        assert!(
            (m - p.m_gamma).abs() < 1e-5 * p.m_gamma,
            "{m} vs {}",
            p.m_gamma
        );
    }

    #[test]
    fn bad_grid_rejected() {
        let params = ProfileParams::new(0.5, 1.5).unwrap();
        let g = ProfileGrid {
            n_inner: 4,
            ..ProfileGrid::default()
        };
        assert!(matches!(
            solve_profile(&params, &g, 1e-8),
            Err(Error::Domain(_))
        ));
    }
}
