//! Point-vortex configurations in a translating/rotating frame: the
//! Kirchhoff-Routh function, its derivatives, the rigid-motion velocity
//! residual, closed-form relative equilibria and a damped Newton search.
//!
//! Coordinates are flattened as `[x_0, y_0, x_1, y_1, ...]` throughout.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frac_kernel::KernelConstants;
use crate::vec2::Vec2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointVortex {
    pub pos: Vec2,
    pub kappa: f64,
}

impl PointVortex {
    pub fn new(pos: Vec2, kappa: f64) -> Result<Self> {
        if kappa == 0.0 || !kappa.is_finite() {
            return Err(Error::domain(format!(
                "vortex strength must be finite and nonzero, got {kappa}"
            )));
        }
        Ok(PointVortex { pos, kappa })
    }
}

/// Rigid motion of the configuration: translation `(0, u)` and angular velocity `omega`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub u: f64,
    pub omega: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VortexSystem {
    pub consts: KernelConstants,
    pub vortices: Vec<PointVortex>,
    pub frame: Frame,
}

/// Which form of the Kirchhoff-Routh function to use.
///
/// `Weighted` has `κ_i`-weighted frame terms and the symmetric `½ κ_i κ_j G`
/// interaction; its critical points are exactly the rigidly moving
/// configurations. `Verbatim` keeps unweighted frame terms and the one-sided
/// `-Σ κ_j G(x_i, x_j)` interaction.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KrConvention {
    Verbatim,
    #[default]
    Weighted,
}

impl VortexSystem {
    pub fn new(consts: KernelConstants, vortices: Vec<PointVortex>, frame: Frame) -> Result<Self> {
        if vortices.is_empty() {
            return Err(Error::domain("a vortex system needs at least one vortex"));
        }
        if let Some(v) = vortices
            .iter()
            .find(|v| v.kappa == 0.0 || !v.kappa.is_finite())
        {
            return Err(Error::domain(format!(
                "vortex strength must be nonzero, got {}",
                v.kappa
            )));
        }
        let sys = VortexSystem {
            consts,
            vortices,
            frame,
        };
        sys.check_distinct()?;
        Ok(sys)
    }

    pub fn len(&self) -> usize {
        self.vortices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vortices.is_empty()
    }

    pub fn positions(&self) -> Vec<f64> {
        self.vortices
            .iter()
            .flat_map(|v| [v.pos.x, v.pos.y])
            .collect()
    }

    pub fn with_positions(&self, coords: &[f64]) -> VortexSystem {
        let mut out = self.clone();
        for (v, c) in out.vortices.iter_mut().zip(coords.chunks_exact(2)) {
            v.pos = Vec2::new(c[0], c[1]);
        }
        out
    }

    /// Smallest pairwise distance (infinite for a single vortex).
    pub fn min_separation(&self) -> f64 {
        let mut best = f64::INFINITY;
        for (i, a) in self.vortices.iter().enumerate() {
            for b in &self.vortices[i + 1..] {
                best = best.min((a.pos - b.pos).norm());
            }
        }
        best
    }

    /// Largest distance from the origin, used as a length scale.
    pub fn extent(&self) -> f64 {
        self.vortices
            .iter()
            .map(|v| v.pos.norm())
            .fold(0.0, f64::max)
    }

    fn check_distinct(&self) -> Result<()> {
        for (i, a) in self.vortices.iter().enumerate() {
            for (j, b) in self.vortices.iter().enumerate().skip(i + 1) {
                if a.pos == b.pos {
                    return Err(Error::singular(format!("vortices {i} and {j} coincide")));
                }
            }
        }
        Ok(())
    }
}

pub fn kr_value(sys: &VortexSystem, conv: KrConvention) -> Result<f64> {
    sys.check_distinct()?;
    let k = &sys.consts;
    let Frame { u, omega } = sys.frame;
    let vs = &sys.vortices;
    let mut frame_part = 0.0;
    let mut pair_part = 0.0;
    for (i, a) in vs.iter().enumerate() {
        let f = u * a.pos.x + 0.5 * omega * a.pos.norm_sq();
        frame_part += match conv {
            KrConvention::Weighted => a.kappa * f,
            KrConvention::Verbatim => f,
        };
        for b in &vs[i + 1..] {
            let g = k.green(a.pos, b.pos)?;
            pair_part += match conv {
                KrConvention::Weighted => a.kappa * b.kappa * g,
                KrConvention::Verbatim => -(a.kappa + b.kappa) * g,
            };
        }
    }
    Ok(frame_part + pair_part)
}

pub fn kr_grad(sys: &VortexSystem, conv: KrConvention) -> Result<Vec<f64>> {
    sys.check_distinct()?;
    let k = &sys.consts;
    let Frame { u, omega } = sys.frame;
    let vs = &sys.vortices;
    let mut out = vec![0.0; 2 * vs.len()];
    for (i, a) in vs.iter().enumerate() {
        let frame = Vec2::new(u, 0.0) + a.pos * omega;
        let mut g = match conv {
            KrConvention::Weighted => frame * a.kappa,
            KrConvention::Verbatim => frame,
        };
        for (j, b) in vs.iter().enumerate() {
            if i == j {
                continue;
            }
            let dg = k.grad_green(a.pos, b.pos)?;
            g += match conv {
                KrConvention::Weighted => dg * (a.kappa * b.kappa),
                KrConvention::Verbatim => dg * -(a.kappa + b.kappa),
            };
        }
        out[2 * i] = g.x;
        out[2 * i + 1] = g.y;
    }
    Ok(out)
}

pub fn kr_hessian(sys: &VortexSystem, conv: KrConvention) -> Result<DMatrix<f64>> {
    sys.check_distinct()?;
    let k = &sys.consts;
    let omega = sys.frame.omega;
    let vs = &sys.vortices;
    let n = vs.len();
    let mut h = DMatrix::zeros(2 * n, 2 * n);
    for (i, a) in vs.iter().enumerate() {
        let diag = match conv {
            KrConvention::Weighted => a.kappa * omega,
            KrConvention::Verbatim => omega,
        };
        h[(2 * i, 2 * i)] += diag;
        h[(2 * i + 1, 2 * i + 1)] += diag;
        for (j, b) in vs.iter().enumerate() {
            if i == j {
                continue;
            }
            let hg = k.hess_sep(a.pos - b.pos);
            let w = match conv {
                KrConvention::Weighted => a.kappa * b.kappa,
                KrConvention::Verbatim => -(a.kappa + b.kappa),
            };
            for r in 0..2 {
                for c in 0..2 {
                    h[(2 * i + r, 2 * i + c)] += w * hg[r][c];
                    h[(2 * i + r, 2 * j + c)] -= w * hg[r][c];
                }
            }
        }
    }
    Ok(h)
}

/// Spectral summary of the Hessian at a configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Nondegeneracy {
    pub determinant: f64,
    /// Eigenvalues sorted by absolute value, smallest first.
    pub eigenvalues: Vec<f64>,
    pub nondegenerate: bool,
}

/// Relative tolerance of the determinant test, `|det H| > tol · max|λ|^{2p}`.
pub const NONDEGENERACY_TOL: f64 = 1e-10;

pub fn nondegenerate(sys: &VortexSystem, conv: KrConvention) -> Result<Nondegeneracy> {
    let h = kr_hessian(sys, conv)?;
    let dim = h.nrows();
    let eig = SymmetricEigen::new(h);
    let mut eigenvalues: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    eigenvalues.sort_by(|a, b| a.abs().total_cmp(&b.abs()));
    let determinant: f64 = eigenvalues.iter().product();
    let scale = eigenvalues.last().map_or(0.0, |l| l.abs());
    let nondegenerate =
        scale > 0.0 && determinant.abs() > NONDEGENERACY_TOL * scale.powi(dim as i32);
    Ok(Nondegeneracy {
        determinant,
        eigenvalues,
        nondegenerate,
    })
}

/// `R_i = Σ_{j≠i} κ_j (∇G(x_i - x_j))^⊥ - [(0, U) - ω x_i^⊥]`; zero exactly when the
/// configuration moves rigidly with the frame.
pub fn velocity_residual(sys: &VortexSystem) -> Result<Vec<f64>> {
    sys.check_distinct()?;
    let k = &sys.consts;
    let Frame { u, omega } = sys.frame;
    let vs = &sys.vortices;
    let mut out = Vec::with_capacity(2 * vs.len());
    for (i, a) in vs.iter().enumerate() {
        let mut v = Vec2::ZERO;
        for (j, b) in vs.iter().enumerate() {
            if i != j {
                v += k.velocity_kernel(b.kappa, a.pos, b.pos)?;
            }
        }
        let rigid = Vec2::new(0.0, u) - a.pos.perp() * omega;
        let r = v - rigid;
        out.push(r.x);
        out.push(r.y);
    }
    Ok(out)
}

/// Translation speed of the pair `±κ` at `(±d, 0)`:
/// `U = -Γ(2-s) / (4π Γ(s)) · κ / d^{3-2s}`.
pub fn pair_speed(consts: &KernelConstants, kappa: f64, d: f64) -> f64 {
    -consts.gamma_ratio() / (4.0 * PI) * kappa * d.powf(2.0 * consts.s() - 3.0)
}

/// Inverse of [`pair_speed`]: half-separation `d` producing speed `u < 0`.
pub fn pair_half_distance(consts: &KernelConstants, kappa: f64, u: f64) -> Result<f64> {
    if !(u < 0.0) || !(kappa > 0.0) {
        return Err(Error::domain("pair inversion needs kappa > 0 and U < 0"));
    }
    let coef = consts.gamma_ratio() / (4.0 * PI) * kappa;
    Ok((-u / coef).powf(1.0 / (2.0 * consts.s() - 3.0)))
}

/// Angular velocity of `k + 1` equal vortices on a circle of radius `rho`.
pub fn polygon_omega(consts: &KernelConstants, kappa: f64, rho: f64, k: usize) -> f64 {
    let s = consts.s();
    let n = (k + 1) as f64;
    let sum: f64 = (1..=k)
        .map(|j| (1.0 - (2.0 * PI * j as f64 / n).cos()).powf(s - 1.0))
        .sum();
    // velocity scales like rho^{2s-3}, so omega like rho^{2s-4}
    kappa * rho.powf(2.0 * s - 4.0) * consts.gamma_ratio() / (2f64.powf(s + 1.0) * PI) * sum
}

pub fn make_traveling_pair(consts: KernelConstants, kappa: f64, d: f64) -> Result<VortexSystem> {
    if !(kappa > 0.0) || !(d > 0.0) || !kappa.is_finite() || !d.is_finite() {
        return Err(Error::domain(format!(
            "pair needs kappa > 0 and d > 0, got kappa={kappa}, d={d}"
        )));
    }
    let u = pair_speed(&consts, kappa, d);
    VortexSystem::new(
        consts,
        vec![
            PointVortex::new(Vec2::new(d, 0.0), kappa)?,
            PointVortex::new(Vec2::new(-d, 0.0), -kappa)?,
        ],
        Frame { u, omega: 0.0 },
    )
}

pub fn make_polygon(
    consts: KernelConstants,
    kappa: f64,
    rho: f64,
    k: usize,
) -> Result<VortexSystem> {
    if !(kappa > 0.0) || !(rho > 0.0) || k < 1 || !kappa.is_finite() || !rho.is_finite() {
        return Err(Error::domain(format!(
            "polygon needs kappa > 0, rho > 0, k >= 1, got kappa={kappa}, rho={rho}, k={k}"
        )));
    }
    let n = k + 1;
    let omega = polygon_omega(&consts, kappa, rho, k);
    let vortices = (0..n)
        .map(|j| PointVortex::new(Vec2::from_polar(rho, 2.0 * PI * j as f64 / n as f64), kappa))
        .collect::<Result<Vec<_>>>()?;
    VortexSystem::new(consts, vortices, Frame { u: 0.0, omega })
}

/// Newton search options.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Jacobians with condition number above this are reported as singular.
    pub max_condition: f64,
    /// Collision threshold relative to the configuration extent.
    pub collision_rel: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions {
            tol: 1e-11,
            max_iter: 50,
            max_condition: 1e12,
            collision_rel: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumSolution {
    pub system: VortexSystem,
    pub iterations: usize,
    pub residual_inf: f64,
}

fn inf_norm(xs: &[f64]) -> f64 {
    xs.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn restricted_grad(sys: &VortexSystem, free: &[usize], conv: KrConvention) -> Result<Vec<f64>> {
    let g = kr_grad(sys, conv)?;
    Ok(free.iter().map(|&i| g[i]).collect())
}

/// Damped Newton on `∇W = 0` restricted to the coordinates listed in `free`
/// (indices into the flattened position vector). Coordinates not listed stay
/// fixed, which is how rotation or translation modes are pinned.
pub fn find_equilibrium(
    sys0: &VortexSystem,
    free: &[usize],
    conv: KrConvention,
    opts: NewtonOptions,
) -> Result<EquilibriumSolution> {
    let dim = 2 * sys0.len();
    if free.is_empty() || free.iter().any(|&i| i >= dim) {
        return Err(Error::domain(
            "free coordinate list is empty or out of range",
        ));
    }
    let mut sorted = free.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != free.len() {
        return Err(Error::domain("free coordinate list has duplicates"));
    }

    let scale = sys0.extent().max(sys0.min_separation().min(1.0));
    let mut x = sys0.positions();
    let mut sys = sys0.clone();
    let mut r = restricted_grad(&sys, free, conv)?;
    let mut norm = inf_norm(&r);
    if !norm.is_finite() {
        return Err(Error::domain("initial residual is not finite"));
    }

    for iter in 0..=opts.max_iter {
        if norm <= opts.tol {
            return Ok(EquilibriumSolution {
                system: sys,
                iterations: iter,
                residual_inf: norm,
            });
        }
        if iter == opts.max_iter {
            break;
        }
        let h = kr_hessian(&sys, conv)?;
        let jac = DMatrix::from_fn(free.len(), free.len(), |a, b| h[(free[a], free[b])]);
        let sv = jac.clone().singular_values();
        let smax = sv.max();
        let smin = sv.min();
        let cond = if smin > 0.0 {
            smax / smin
        } else {
            f64::INFINITY
        };
        if cond > opts.max_condition {
            return Err(Error::singular(format!(
                "Newton Jacobian is singular (condition estimate {cond:e}) at iteration {iter}"
            )));
        }
        let rhs = DVector::from_iterator(r.len(), r.iter().map(|v| -v));
        let step = jac
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::singular(format!("LU failed (condition estimate {cond:e})")))?;

        let mut alpha = 1.0;
        loop {
            let mut trial = x.clone();
            for (a, &idx) in free.iter().enumerate() {
                trial[idx] += alpha * step[a];
            }
            let cand = sys.with_positions(&trial);
            if cand.min_separation() < opts.collision_rel * scale {
                return Err(Error::singular(format!(
                    "vortex collision during Newton search (min distance {:e})",
                    cand.min_separation()
                )));
            }
            let rc = restricted_grad(&cand, free, conv)?;
            let nc = inf_norm(&rc);
            if nc < norm || alpha < 1.0 / 1024.0 {
                x = trial;
                sys = cand;
                r = rc;
                norm = nc;
                break;
            }
            alpha *= 0.5;
        }
    }
    Err(Error::NonConvergence {
        message: format!(
            "Newton did not reach {:e} in {} iterations",
            opts.tol, opts.max_iter
        ),
        residual: norm,
        best: Some(x),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn consts(s: f64) -> KernelConstants {
        KernelConstants::new(s).unwrap()
    }

    fn three_vortex() -> VortexSystem {
        VortexSystem::new(
            consts(0.4),
            vec![
                PointVortex::new(Vec2::new(0.3, -0.2), 1.3).unwrap(),
                PointVortex::new(Vec2::new(-0.7, 0.5), -0.6).unwrap(),
                PointVortex::new(Vec2::new(0.1, 0.9), 0.8).unwrap(),
            ],
            Frame {
                u: 0.17,
                omega: -0.23,
            },
        )
        .unwrap()
    }

    fn fd_grad(sys: &VortexSystem, conv: KrConvention, h: f64) -> Vec<f64> {
        let x = sys.positions();
        (0..x.len())
            .map(|i| {
                let mut p = x.clone();
                let mut m = x.clone();
                p[i] += h;
                m[i] -= h;
                (kr_value(&sys.with_positions(&p), conv).unwrap()
                    - kr_value(&sys.with_positions(&m), conv).unwrap())
                    / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn single_vortex_is_trivial() {
        let sys = VortexSystem::new(
            consts(0.5),
            vec![PointVortex::new(Vec2::ZERO, 1.0).unwrap()],
            Frame::default(),
        )
        .unwrap();
        for conv in [KrConvention::Weighted, KrConvention::Verbatim] {
            assert_eq!(kr_value(&sys, conv).unwrap(), 0.0);
            assert!(kr_grad(&sys, conv).unwrap().iter().all(|&g| g == 0.0));
        }
        assert!(velocity_residual(&sys).unwrap().iter().all(|&r| r == 0.0));
    }

    #[test]
    fn swap_symmetry() {
        let k = consts(0.6);
        let a = PointVortex::new(Vec2::new(0.2, 0.1), 0.7).unwrap();
        let b = PointVortex::new(Vec2::new(-0.4, 0.5), 0.7).unwrap();
        let f = Frame { u: 0.3, omega: 0.1 };
        let s1 = VortexSystem::new(k, vec![a, b], f).unwrap();
        let s2 = VortexSystem::new(k, vec![b, a], f).unwrap();
        for conv in [KrConvention::Weighted, KrConvention::Verbatim] {
            let d = kr_value(&s1, conv).unwrap() - kr_value(&s2, conv).unwrap();
            assert!(d.abs() < 1e-15);
        }
    }

    #[test]
    fn pair_value_by_direct_summation() {
        let sys = make_traveling_pair(consts(0.5), 1.0, 1.0).unwrap();
        let u = sys.frame.u;
        // κ1 U x1 + κ2 U x2 + κ1 κ2 G(2)
        let want = 2.0 * u - (1.0 / (2.0 * PI)) / 2.0;
        assert!((kr_value(&sys, KrConvention::Weighted).unwrap() - want).abs() < 1e-15);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let sys = three_vortex();
        for conv in [KrConvention::Weighted, KrConvention::Verbatim] {
            let g = kr_grad(&sys, conv).unwrap();
            let fd = fd_grad(&sys, conv, 1e-6);
            for (a, b) in g.iter().zip(&fd) {
                assert!(
                    (a - b).abs() <= 1e-6 * a.abs().max(1e-2),
                    "{conv:?}: {a} vs {b}"
                );
            }
        }
    }

    #[test]
    fn hessian_symmetric_and_matches_fd() {
        let sys = three_vortex();
        for conv in [KrConvention::Weighted, KrConvention::Verbatim] {
            let h = kr_hessian(&sys, conv).unwrap();
            let asym = (&h - h.transpose()).amax();
            assert!(asym <= 1e-10 * h.norm());
            let x = sys.positions();
            let eps = 1e-6;
            for c in 0..x.len() {
                let mut p = x.clone();
                let mut m = x.clone();
                p[c] += eps;
                m[c] -= eps;
                let gp = kr_grad(&sys.with_positions(&p), conv).unwrap();
                let gm = kr_grad(&sys.with_positions(&m), conv).unwrap();
                for r in 0..x.len() {
                    let fd = (gp[r] - gm[r]) / (2.0 * eps);
                    assert!((fd - h[(r, c)]).abs() <= 1e-5 * h[(r, c)].abs().max(1e-1));
                }
            }
        }
    }

    #[test]
    fn pair_closed_form() {
        let k = consts(0.5);
        let sys = make_traveling_pair(k, 1.0, 1.0).unwrap();
        assert!((sys.frame.u + 1.0 / (8.0 * PI)).abs() < 1e-15);
        for s in [0.3, 0.5, 0.7] {
            let k = consts(s);
            let ratio = pair_speed(&k, 1.0, 2.0) / pair_speed(&k, 1.0, 1.0);
            assert!((ratio - 2f64.powf(2.0 * s - 3.0)).abs() < 1e-14);
            for d in [0.5, 1.0, 2.0] {
                let sys = make_traveling_pair(k, 1.0, d).unwrap();
                assert!(inf_norm(&velocity_residual(&sys).unwrap()) <= 1e-12);
                assert!(inf_norm(&kr_grad(&sys, KrConvention::Weighted).unwrap()) <= 1e-12);
                let back = pair_half_distance(&k, 1.0, sys.frame.u).unwrap();
                assert!((back - d).abs() < 1e-12);
            }
        }
        assert!(make_traveling_pair(k, -1.0, 1.0).is_err());
        assert!(make_traveling_pair(k, 1.0, 0.0).is_err());
    }

    #[test]
    fn verbatim_convention_misses_the_pair() {
        // Opposite strengths cancel the verbatim interaction; only U survives.
        let sys = make_traveling_pair(consts(0.5), 1.0, 1.0).unwrap();
        let g = kr_grad(&sys, KrConvention::Verbatim).unwrap();
        assert!((g[0] - sys.frame.u).abs() < 1e-15);
        assert!(inf_norm(&g) > 1e-3);
    }

    #[test]
    fn polygon_closed_form() {
        let sys = make_polygon(consts(0.5), 1.0, 1.0, 1).unwrap();
        assert!((sys.frame.omega - 1.0 / (8.0 * PI)).abs() < 1e-15);
        for s in [0.3, 0.5, 0.7] {
            let k = consts(s);
            for n in 1..=5 {
                for rho in [0.5, 1.0, 3.0] {
                    let sys = make_polygon(k, 1.0, rho, n).unwrap();
                    assert!(inf_norm(&velocity_residual(&sys).unwrap()) <= 1e-10);
                    assert!(inf_norm(&kr_grad(&sys, KrConvention::Weighted).unwrap()) <= 1e-10);
                }
            }
            let ratio = polygon_omega(&k, 1.0, 2.0, 3) / polygon_omega(&k, 1.0, 1.0, 3);
            assert!((ratio - 2f64.powf(2.0 * s - 4.0)).abs() < 1e-14);
        }
        assert!(make_polygon(consts(0.5), 1.0, 1.0, 0).is_err());
    }

    #[test]
    fn triangle_has_rotation_zero_mode() {
        let sys = make_polygon(consts(0.5), 1.0, 1.0, 2).unwrap();
        let nd = nondegenerate(&sys, KrConvention::Weighted).unwrap();
        let scale = nd.eigenvalues.last().unwrap().abs();
        assert!(nd.eigenvalues[0].abs() < 1e-12 * scale);
        assert!(!nd.nondegenerate);
        // rotation direction x_i^⊥ spans the kernel
        let h = kr_hessian(&sys, KrConvention::Weighted).unwrap();
        let rot = DVector::from_iterator(6, sys.vortices.iter().flat_map(|v| [-v.pos.y, v.pos.x]));
        assert!((&h * rot).amax() < 1e-12);
    }

    #[test]
    fn generic_config_is_nondegenerate() {
        let nd = nondegenerate(&three_vortex(), KrConvention::Weighted).unwrap();
        assert!(nd.nondegenerate);
    }

    #[test]
    fn coincident_positions_rejected() {
        let k = consts(0.5);
        let a = PointVortex::new(Vec2::new(1.0, 1.0), 1.0).unwrap();
        assert!(matches!(
            VortexSystem::new(k, vec![a, a], Frame::default()),
            Err(Error::Singularity(_))
        ));
        let mut sys = make_polygon(k, 1.0, 1.0, 2).unwrap();
        sys.vortices[1].pos = sys.vortices[0].pos;
        assert!(matches!(
            velocity_residual(&sys),
            Err(Error::Singularity(_))
        ));
        assert!(matches!(
            kr_grad(&sys, KrConvention::Weighted),
            Err(Error::Singularity(_))
        ));
        assert!(matches!(
            kr_hessian(&sys, KrConvention::Weighted),
            Err(Error::Singularity(_))
        ));
    }

    #[test]
    fn newton_fixed_point_polygon() {
        let sys = make_polygon(consts(0.5), 1.0, 1.0, 3).unwrap();
        let free: Vec<usize> = (0..8).filter(|&i| i != 1).collect();
        let sol = find_equilibrium(
            &sys,
            &free,
            KrConvention::Weighted,
            NewtonOptions::default(),
        )
        .unwrap();
        assert!(sol.iterations <= 1);
        let moved = sol
            .system
            .positions()
            .iter()
            .zip(sys.positions())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(moved < 1e-12);
    }

    #[test]
    fn newton_recovers_pair_distance() {
        let k = consts(0.5);
        let exact = make_traveling_pair(k, 1.0, 1.0).unwrap();
        let mut start = exact.clone();
        start.vortices[0].pos.x = 1.3;
        let sol = find_equilibrium(
            &start,
            &[0],
            KrConvention::Weighted,
            NewtonOptions::default(),
        )
        .unwrap();
        let d = 0.5 * (sol.system.vortices[0].pos.x - sol.system.vortices[1].pos.x);
        assert!((d - 1.0).abs() < 1e-10, "d = {d}");
    }

    #[test]
    fn newton_reports_singular_jacobian() {
        // freeing both x-coordinates of the pair leaves the common translation neutral
        let sys = make_traveling_pair(consts(0.5), 1.0, 1.0).unwrap();
        let mut start = sys.clone();
        start.vortices[0].pos.x = 1.1;
        let err = find_equilibrium(
            &start,
            &[0, 2],
            KrConvention::Weighted,
            NewtonOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Singularity(_)), "{err:?}");
    }
}
