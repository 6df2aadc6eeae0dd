//! Time integration of point vortices coupled to a blob discretization of a
//! continuous vorticity field, with energy and impulse diagnostics.
//!
//! Blobs carry the mollified kernel `c_{2,s} (r² + core²)^{s-1}`. A pair
//! always uses one symmetric kernel in both directions (blob-blob with the
//! mean squared core, point-blob with the blob's core, point-point exact), so
//! the discrete system stays Hamiltonian and `H`, `P`, `I` are invariants.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ansatz::{theta_field, AnsatzConfig, LambdaSet};
use crate::equilibria::PointVortex;
use crate::error::{Error, Result};
use crate::frac_kernel::KernelConstants;
use crate::output::{csv_table, fmt17};
use crate::profile::RadialProfile;
use crate::quad::pairwise_sum;
use crate::vec2::Vec2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Blob {
    pub pos: Vec2,
    pub w: f64,
    pub core: f64,
}

impl Blob {
    pub fn new(pos: Vec2, w: f64, core: f64) -> Result<Self> {
        if !(core > 0.0) || !w.is_finite() {
            return Err(Error::domain(format!(
                "blob needs core > 0 and finite weight, got core={core}, w={w}"
            )));
        }
        Ok(Blob { pos, w, core })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimState {
    pub consts: KernelConstants,
    pub vortices: Vec<PointVortex>,
    pub blobs: Vec<Blob>,
    pub t: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    #[default]
    Rk4,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub dt: f64,
    #[serde(default)]
    pub scheme: Scheme,
    pub t_end: f64,
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0)
            || !self.dt.is_finite()
            || !(self.t_end >= 0.0)
            || !self.t_end.is_finite()
        {
            return Err(Error::domain(format!(
                "integrator needs dt > 0 and t_end >= 0, got dt={}, t_end={}",
                self.dt, self.t_end
            )));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.t_end / self.dt - 1e-9).ceil().max(0.0) as usize
    }
}

/// Radial kernel factors for a fixed order, with a fast path at `s = 1/2`.
#[derive(Debug, Clone, Copy)]
struct Kern {
    c: f64,
    s: f64,
    half: bool,
}

impl Kern {
    fn new(k: &KernelConstants) -> Self {
        Kern {
            c: k.c2s(),
            s: k.s(),
            half: k.s() == 0.5,
        }
    }

    /// `G(r²)`.
    #[inline]
    fn green(&self, r2: f64) -> f64 {
        if self.half {
            self.c / r2.sqrt()
        } else {
            self.c * r2.powf(self.s - 1.0)
        }
    }

    /// `g` with `∇_x G = g · (x - y)`.
    #[inline]
    fn grad(&self, r2: f64) -> f64 {
        if self.half {
            -self.c / (r2 * r2.sqrt())
        } else {
            self.c * (2.0 * self.s - 2.0) * r2.powf(self.s - 2.0)
        }
    }
}

impl SimState {
    pub fn new(
        consts: KernelConstants,
        vortices: Vec<PointVortex>,
        blobs: Vec<Blob>,
    ) -> Result<Self> {
        if vortices.is_empty() && blobs.is_empty() {
            return Err(Error::domain("simulation state is empty"));
        }
        for (i, a) in vortices.iter().enumerate() {
            for (j, b) in vortices.iter().enumerate().skip(i + 1) {
                if a.pos == b.pos {
                    return Err(Error::singular(format!(
                        "point vortices {i} and {j} coincide"
                    )));
                }
            }
        }
        Ok(SimState {
            consts,
            vortices,
            blobs,
            t: 0.0,
        })
    }

    fn positions(&self) -> Vec<Vec2> {
        self.vortices
            .iter()
            .map(|v| v.pos)
            .chain(self.blobs.iter().map(|b| b.pos))
            .collect()
    }

    fn with_positions(&self, pos: &[Vec2], t: f64) -> SimState {
        let mut out = self.clone();
        let nv = out.vortices.len();
        for (v, p) in out.vortices.iter_mut().zip(&pos[..nv]) {
            v.pos = *p;
        }
        for (b, p) in out.blobs.iter_mut().zip(&pos[nv..]) {
            b.pos = *p;
        }
        out.t = t;
        out
    }

    fn extent(&self) -> f64 {
        self.positions()
            .iter()
            .map(|p| p.norm())
            .fold(0.0, f64::max)
    }
}

/// Velocity at an arbitrary point `x`; `exclude` skips one point vortex
/// (the one sitting at `x`).
pub fn total_velocity(state: &SimState, x: Vec2, exclude: Option<usize>) -> Result<Vec2> {
    let k = Kern::new(&state.consts);
    let mut v = Vec2::ZERO;
    for (i, pv) in state.vortices.iter().enumerate() {
        if Some(i) == exclude {
            continue;
        }
        let d = x - pv.pos;
        let r2 = d.norm_sq();
        if r2 == 0.0 {
            return Err(Error::singular(format!(
                "velocity requested at point vortex {i}"
            )));
        }
        v += d.perp() * (pv.kappa * k.grad(r2));
    }
    for b in &state.blobs {
        let d = x - b.pos;
        v += d.perp() * (b.w * k.grad(d.norm_sq() + b.core * b.core));
    }
    Ok(v)
}

/// Velocities of every point vortex then every blob, at positions `pos`.
fn velocities(state: &SimState, pos: &[Vec2], min_sep: f64) -> Result<Vec<Vec2>> {
    let k = Kern::new(&state.consts);
    let nv = state.vortices.len();
    let min2 = min_sep * min_sep;
    let blobs = &state.blobs;
    let vort = &state.vortices;
    let soa = BlobSoa::new(blobs, &pos[nv..]);
    (0..pos.len())
        .into_par_iter()
        .map(|a| -> Result<Vec2> {
            let x = pos[a];
            let mut v = Vec2::ZERO;
            let own_core2 = if a >= nv {
                Some(blobs[a - nv].core.powi(2))
            } else {
                None
            };
            for (i, pv) in vort.iter().enumerate() {
                if i == a {
                    continue;
                }
                let d = x - pos[i];
                let mut r2 = d.norm_sq();
                match own_core2 {
                    None => {
                        if r2 < min2 {
                            return Err(Error::singular(format!(
                                "point vortices {a} and {i} collided (distance {:e})",
                                r2.sqrt()
                            )));
                        }
                    }
                    Some(c2) => r2 += c2,
                }
                v += d.perp() * (pv.kappa * k.grad(r2));
            }
            let (own, other) = match own_core2 {
                None => (0.0, 1.0),
                Some(oc) => (0.5 * oc, 0.5),
            };
            Ok(v + soa.field(&k, x, own, other))
        })
        .collect()
}

/// Blob data laid out for a branch-free inner loop.
struct BlobSoa {
    x: Vec<f64>,
    y: Vec<f64>,
    w: Vec<f64>,
    c2: Vec<f64>,
}

impl BlobSoa {
    fn new(blobs: &[Blob], pos: &[Vec2]) -> Self {
        BlobSoa {
            x: pos.iter().map(|p| p.x).collect(),
            y: pos.iter().map(|p| p.y).collect(),
            w: blobs.iter().map(|b| b.w).collect(),
            c2: blobs.iter().map(|b| b.core * b.core).collect(),
        }
    }

    /// Velocity induced at `x` with squared core `own + other · core_b²` per
    /// blob. A blob evaluated at its own position contributes exactly zero.
    /// Four fixed accumulator lanes keep the summation order deterministic.
    fn field(&self, k: &Kern, x: Vec2, own: f64, other: f64) -> Vec2 {
        if k.half {
            let c = k.c;
            self.field_with(x, own, other, |r2| -c / (r2 * r2.sqrt()))
        } else {
            let (a, e) = (k.c * (2.0 * k.s - 2.0), k.s - 2.0);
            self.field_with(x, own, other, |r2| a * r2.powf(e))
        }
    }

    #[inline(always)]
    fn field_with(&self, x: Vec2, own: f64, other: f64, grad: impl Fn(f64) -> f64) -> Vec2 {
        const L: usize = 4;
        let mut ax = [0.0; L];
        let mut ay = [0.0; L];
        let n = self.x.len();
        let full = n / L * L;
        let (xs, ys, ws, cs) = (&self.x[..n], &self.y[..n], &self.w[..n], &self.c2[..n]);
        for j in (0..full).step_by(L) {
            for l in 0..L {
                let dx = x.x - xs[j + l];
                let dy = x.y - ys[j + l];
                let g = ws[j + l] * grad(dx * dx + dy * dy + own + other * cs[j + l]);
                ax[l] += dy * g;
                ay[l] -= dx * g;
            }
        }
        for (l, j) in (full..n).enumerate() {
            let dx = x.x - xs[j];
            let dy = x.y - ys[j];
            let g = ws[j] * grad(dx * dx + dy * dy + own + other * cs[j]);
            ax[l] += dy * g;
            ay[l] -= dx * g;
        }
        Vec2::new(
            (ax[0] + ax[1]) + (ax[2] + ax[3]),
            (ay[0] + ay[1]) + (ay[2] + ay[3]),
        )
    }
}

fn collision_scale(state: &SimState) -> f64 {
    1e-8 * state.extent().max(1e-300)
}

/// One classical Runge-Kutta step.
pub fn step(state: &SimState, cfg: &IntegratorConfig) -> Result<SimState> {
    cfg.validate()?;
    rk4(state, cfg.dt, collision_scale(state))
}

fn rk4(state: &SimState, dt: f64, min_sep: f64) -> Result<SimState> {
    let x0 = state.positions();
    let shift =
        |k: &[Vec2], h: f64| -> Vec<Vec2> { x0.iter().zip(k).map(|(x, v)| *x + *v * h).collect() };
    let k1 = velocities(state, &x0, min_sep)?;
    let k2 = velocities(state, &shift(&k1, 0.5 * dt), min_sep)?;
    let k3 = velocities(state, &shift(&k2, 0.5 * dt), min_sep)?;
    let k4 = velocities(state, &shift(&k3, dt), min_sep)?;
    let next: Vec<Vec2> = (0..x0.len())
        .map(|i| x0[i] + (k1[i] + k2[i] * 2.0 + k3[i] * 2.0 + k4[i]) * (dt / 6.0))
        .collect();
    Ok(state.with_positions(&next, state.t + dt))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Invariants {
    #[serde(rename = "H")]
    pub h: f64,
    #[serde(rename = "P")]
    pub p: Vec2,
    #[serde(rename = "I")]
    pub i: f64,
}

/// Interaction energy `H = ½ Σ_{a≠b} w_a w_b G_ab` with the same pair kernels
/// as the dynamics, linear impulse `P = Σ w x` and angular impulse `I = Σ w |x|²`.
pub fn invariants(state: &SimState) -> Invariants {
    let k = Kern::new(&state.consts);
    // (position, strength, core²); point vortices have no core
    let items: Vec<(Vec2, f64, Option<f64>)> = state
        .vortices
        .iter()
        .map(|v| (v.pos, v.kappa, None))
        .chain(
            state
                .blobs
                .iter()
                .map(|b| (b.pos, b.w, Some(b.core * b.core))),
        )
        .collect();
    let rows: Vec<f64> = (0..items.len())
        .into_par_iter()
        .map(|a| {
            let (xa, wa, ca) = items[a];
            let terms: Vec<f64> = items[a + 1..]
                .iter()
                .map(|&(xb, wb, cb)| {
                    let c2 = match (ca, cb) {
                        (None, None) => 0.0,
                        (Some(c), None) | (None, Some(c)) => c,
                        (Some(c), Some(d)) => 0.5 * (c + d),
                    };
                    wa * wb * k.green((xa - xb).norm_sq() + c2)
                })
                .collect();
            pairwise_sum(&terms)
        })
        .collect();
    let h = pairwise_sum(&rows);
    let px: Vec<f64> = items.iter().map(|(x, w, _)| w * x.x).collect();
    let py: Vec<f64> = items.iter().map(|(x, w, _)| w * x.y).collect();
    let ii: Vec<f64> = items.iter().map(|(x, w, _)| w * x.norm_sq()).collect();
    Invariants {
        h,
        p: Vec2::new(pairwise_sum(&px), pairwise_sum(&py)),
        i: pairwise_sum(&ii),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub samples: Vec<SimState>,
    pub invariants: Vec<(f64, Invariants)>,
}

/// Integrates to `t_end` (the last step is shortened to land on it),
/// recording every `sample_every`-th state plus the final one.
pub fn simulate(
    state0: &SimState,
    cfg: &IntegratorConfig,
    sample_every: usize,
) -> Result<Trajectory> {
    cfg.validate()?;
    if sample_every == 0 {
        return Err(Error::domain("sample_every must be at least 1"));
    }
    let min_sep = collision_scale(state0);
    let n = cfg.steps();
    let mut state = state0.clone();
    let mut samples = vec![state.clone()];
    let mut inv = vec![(state.t, invariants(&state))];
    for k in 1..=n {
        let t_next = (k as f64 * cfg.dt).min(cfg.t_end);
        let h = t_next - (state.t - state0.t);
        state = rk4(&state, h, min_sep)?;
        state.t = state0.t + t_next;
        if k % sample_every == 0 || k == n {
            samples.push(state.clone());
            inv.push((state.t, invariants(&state)));
        }
    }
    Ok(Trajectory {
        samples,
        invariants: inv,
    })
}

/// Largest relative change of `H`, `|P|` and `I` from the first sample; each
/// is scaled by the larger of its initial magnitude and the matching scale of
/// the configuration, so vanishing invariants do not divide by zero.
pub fn invariant_drift(traj: &Trajectory) -> (f64, f64, f64) {
    let (_, first) = traj.invariants[0];
    let s0 = &traj.samples[0];
    let wsum: f64 = s0.vortices.iter().map(|v| v.kappa.abs()).sum::<f64>()
        + s0.blobs.iter().map(|b| b.w.abs()).sum::<f64>();
    let ext = s0.extent().max(1e-300);
    let ph = first.h.abs().max(1e-300);
    let pp = first.p.norm().max(wsum * ext);
    let pi = first.i.abs().max(wsum * ext * ext);
    traj.invariants
        .iter()
        .fold((0.0, 0.0, 0.0), |(a, b, c), (_, inv)| {
            (
                f64::max(a, (inv.h - first.h).abs() / ph),
                f64::max(b, (inv.p - first.p).norm() / pp),
                f64::max(c, (inv.i - first.i).abs() / pi),
            )
        })
}

/// Long-format trajectory table: one row per element per sample.
pub fn trajectory_csv(traj: &Trajectory) -> String {
    let mut out = String::from("t,id,kind,x,y,strength\n");
    for st in &traj.samples {
        let t = fmt17(st.t);
        for (i, v) in st.vortices.iter().enumerate() {
            let _ = writeln!(
                out,
                "{t},{i},point,{},{},{}",
                fmt17(v.pos.x),
                fmt17(v.pos.y),
                fmt17(v.kappa)
            );
        }
        let nv = st.vortices.len();
        for (i, b) in st.blobs.iter().enumerate() {
            let _ = writeln!(
                out,
                "{t},{},blob,{},{},{}",
                nv + i,
                fmt17(b.pos.x),
                fmt17(b.pos.y),
                fmt17(b.w)
            );
        }
    }
    out
}

pub fn invariants_csv(traj: &Trajectory) -> String {
    csv_table(
        &["t", "H", "Px", "Py", "I"],
        traj.invariants
            .iter()
            .map(|(t, v)| vec![*t, v.h, v.p.x, v.p.y, v.i]),
    )
}

/// Samples the approximate vorticity on a uniform grid of `n_per_axis`
/// cells across each bump's support (slightly enlarged), one blob per
/// nonzero cell with weight `θ · h²` and core `h`.
pub fn discretize_theta(
    cfg: &AnsatzConfig,
    profile: &RadialProfile,
    lambdas: &LambdaSet,
    n_per_axis: usize,
) -> Result<Vec<Blob>> {
    if n_per_axis < 8 {
        return Err(Error::domain("n_per_axis must be at least 8"));
    }
    cfg.validate(profile)?;
    let mut blobs = Vec::new();
    for w in &cfg.waves {
        let radius = (1.05 * cfg.epsilon * w.mu * profile.r1).min(cfg.delta);
        let h = 2.0 * radius / n_per_axis as f64;
        let cells: Vec<Vec2> = (0..n_per_axis)
            .flat_map(|i| {
                (0..n_per_axis).map(move |j| {
                    Vec2::new(
                        -radius + (i as f64 + 0.5) * h,
                        -radius + (j as f64 + 0.5) * h,
                    )
                })
            })
            .filter(|off| off.norm() <= radius)
            .map(|off| w.pos + off)
            .collect();
        let weights: Vec<f64> = cells
            .par_iter()
            .map(|x| theta_field(cfg, profile, lambdas, *x).map(|t| t * h * h))
            .collect::<Result<_>>()?;
        for (x, wt) in cells.into_iter().zip(weights) {
            if wt != 0.0 {
                blobs.push(Blob {
                    pos: x,
                    w: wt,
                    core: h,
                });
            }
        }
    }
    if blobs.is_empty() {
        return Err(Error::domain(
            "approximate vorticity has empty support on the sampling grid",
        ));
    }
    Ok(blobs)
}

/// Weighted centroid and radius of gyration of a blob cloud.
pub fn blob_moments(blobs: &[Blob]) -> (Vec2, f64) {
    let wsum = pairwise_sum(&blobs.iter().map(|b| b.w).collect::<Vec<_>>());
    let cx = pairwise_sum(&blobs.iter().map(|b| b.w * b.pos.x).collect::<Vec<_>>()) / wsum;
    let cy = pairwise_sum(&blobs.iter().map(|b| b.w * b.pos.y).collect::<Vec<_>>()) / wsum;
    let c = Vec2::new(cx, cy);
    let r2 = pairwise_sum(
        &blobs
            .iter()
            .map(|b| b.w * (b.pos - c).norm_sq())
            .collect::<Vec<_>>(),
    ) / wsum;
    (c, r2.sqrt())
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;
    use crate::equilibria::{make_polygon, make_traveling_pair};

    fn consts(s: f64) -> KernelConstants {
        KernelConstants::new(s).unwrap()
    }

    fn pv(x: f64, y: f64, k: f64) -> PointVortex {
        PointVortex::new(Vec2::new(x, y), k).unwrap()
    }

    #[test]
    fn empty_state_rejected_and_zero_field() {
        assert!(SimState::new(consts(0.5), vec![], vec![]).is_err());
        let st = SimState::new(consts(0.5), vec![pv(0.0, 0.0, 1.0)], vec![]).unwrap();
        let v = total_velocity(&st, Vec2::new(3.0, 1.0), None).unwrap();
        let empty = SimState {
            vortices: vec![],
            ..st.clone()
        };
        assert_eq!(
            total_velocity(&empty, Vec2::new(3.0, 1.0), None).unwrap(),
            Vec2::ZERO
        );
        assert!(v.norm() > 0.0);
        assert!(matches!(
            total_velocity(&st, Vec2::ZERO, None),
            Err(Error::Singularity(_))
        ));
        assert_eq!(
            total_velocity(&st, Vec2::ZERO, Some(0)).unwrap(),
            Vec2::ZERO
        );
    }

    #[test]
    fn point_velocity_matches_green_differences() {
        for s in [0.3, 0.5, 0.8] {
            let k = consts(s);
            let st = SimState::new(k, vec![pv(0.2, -0.1, 1.3)], vec![]).unwrap();
            let x = Vec2::new(0.2, -0.1) + Vec2::from_polar(1.0, 0.7);
            let v = total_velocity(&st, x, None).unwrap();
            let h = 1e-6;
            let y = Vec2::new(0.2, -0.1);
            let gx = (k.green(x + Vec2::new(h, 0.0), y).unwrap()
                - k.green(x - Vec2::new(h, 0.0), y).unwrap())
                / (2.0 * h);
            let gy = (k.green(x + Vec2::new(0.0, h), y).unwrap()
                - k.green(x - Vec2::new(0.0, h), y).unwrap())
                / (2.0 * h);
            let want = Vec2::new(gx, gy).perp() * 1.3;
            assert!((v - want).norm() < 1e-8, "{v:?} vs {want:?}");
            assert!((v.norm() - 1.3 * (2.0 - 2.0 * s) * k.c2s()).abs() < 1e-12);
        }
    }

    #[test]
    fn blob_approaches_point_vortex() {
        let k = consts(0.5);
        let x = Vec2::new(0.6, 0.8);
        let point = SimState::new(k, vec![pv(0.0, 0.0, 1.0)], vec![]).unwrap();
        let exact = total_velocity(&point, x, None).unwrap();
        let mut errs = Vec::new();
        for core in [1e-2, 1e-3] {
            let st =
                SimState::new(k, vec![], vec![Blob::new(Vec2::ZERO, 1.0, core).unwrap()]).unwrap();
            errs.push((total_velocity(&st, x, None).unwrap() - exact).norm() / exact.norm());
        }
        assert!(errs[0] < 1e-3 && errs[1] < 1e-5);
        assert!((errs[0] / errs[1] - 100.0).abs() < 1.0);
    }

    #[test]
    fn single_vortex_is_stationary() {
        let st = SimState::new(consts(0.4), vec![pv(0.3, 0.2, 2.0)], vec![]).unwrap();
        let cfg = IntegratorConfig {
            dt: 0.1,
            scheme: Scheme::Rk4,
            t_end: 1.0,
        };
        let out = simulate(&st, &cfg, 1).unwrap();
        assert_eq!(
            out.samples.last().unwrap().vortices[0].pos,
            Vec2::new(0.3, 0.2)
        );
        let inv = invariants(&SimState::new(consts(0.4), vec![pv(0.0, 0.0, 2.0)], vec![]).unwrap());
        assert_eq!((inv.h, inv.p, inv.i), (0.0, Vec2::ZERO, 0.0));
    }

    #[test]
    fn pair_of_equal_vortices_rotates_rigidly() {
        let poly = make_polygon(consts(0.5), 1.0, 0.5, 1).unwrap();
        let st = SimState::new(poly.consts, poly.vortices.clone(), vec![]).unwrap();
        let period = 2.0 * PI / poly.frame.omega;
        let cfg = IntegratorConfig {
            dt: period / 2000.0,
            scheme: Scheme::Rk4,
            t_end: period,
        };
        let traj = simulate(&st, &cfg, 50).unwrap();
        for s in &traj.samples {
            let d = (s.vortices[0].pos - s.vortices[1].pos).norm();
            assert!((d - 1.0).abs() < 1e-8);
            let rot = |p: Vec2| p.rotate(poly.frame.omega * s.t);
            assert!((s.vortices[0].pos - rot(poly.vortices[0].pos)).norm() < 1e-6);
        }
    }

    #[test]
    fn fourth_order_on_two_vortex_rotation() {
        let poly = make_polygon(consts(0.5), 1.0, 1.0, 1).unwrap();
        let st = SimState::new(poly.consts, poly.vortices.clone(), vec![]).unwrap();
        let t_end = 0.5 * 2.0 * PI / poly.frame.omega;
        let exact = poly.vortices[0].pos.rotate(poly.frame.omega * t_end);
        let err = |n: usize| {
            let cfg = IntegratorConfig {
                dt: t_end / n as f64,
                scheme: Scheme::Rk4,
                t_end,
            };
            let tr = simulate(&st, &cfg, n).unwrap();
            (tr.samples.last().unwrap().vortices[0].pos - exact).norm()
        };
        let (e1, e2) = (err(10), err(20));
        let order = (e1 / e2).log2();
        assert!((order - 4.0).abs() < 0.3, "observed order {order}");
    }

    #[test]
    fn time_reversal() {
        let k = consts(0.6);
        let vs = vec![pv(0.0, 0.0, 1.0), pv(1.0, 0.2, 0.5), pv(-0.4, 0.9, 0.8)];
        let blobs = vec![Blob::new(Vec2::new(0.3, -0.6), 0.2, 0.05).unwrap()];
        let st = SimState::new(k, vs, blobs).unwrap();
        let cfg = IntegratorConfig {
            dt: 1e-3,
            scheme: Scheme::Rk4,
            t_end: 0.5,
        };
        let fwd = simulate(&st, &cfg, 1000).unwrap().samples.pop().unwrap();
        let mut back = fwd.clone();
        back.vortices.iter_mut().for_each(|v| v.kappa = -v.kappa);
        back.blobs.iter_mut().for_each(|b| b.w = -b.w);
        back.t = 0.0;
        let ret = simulate(&back, &cfg, 1000).unwrap().samples.pop().unwrap();
        for (a, b) in ret.vortices.iter().zip(&st.vortices) {
            assert!((a.pos - b.pos).norm() < 1e-10);
        }
        assert!((ret.blobs[0].pos - st.blobs[0].pos).norm() < 1e-10);
    }

    #[test]
    fn invariants_rotation_and_conservation_with_blobs() {
        let k = consts(0.5);
        let vs = vec![pv(0.0, 0.0, 1.0), pv(1.0, 0.2, -0.5)];
        let blobs: Vec<Blob> = (0..6)
            .map(|i| {
                Blob::new(Vec2::from_polar(0.5, i as f64), 0.1 + 0.01 * i as f64, 0.1).unwrap()
            })
            .collect();
        let st = SimState::new(k, vs, blobs).unwrap();
        let inv = invariants(&st);
        let mut rot = st.clone();
        rot.vortices
            .iter_mut()
            .for_each(|v| v.pos = v.pos.rotate(0.9));
        rot.blobs.iter_mut().for_each(|b| b.pos = b.pos.rotate(0.9));
        assert!((invariants(&rot).h - inv.h).abs() < 1e-13 * inv.h.abs());
        let cfg = IntegratorConfig {
            dt: 1e-3,
            scheme: Scheme::Rk4,
            t_end: 1.0,
        };
        let tr = simulate(&st, &cfg, 100).unwrap();
        let (dh, dp, di) = invariant_drift(&tr);
        assert!(dh < 1e-9 && dp < 1e-12 && di < 1e-9, "{dh} {dp} {di}");
    }

    #[test]
    fn traveling_pair_translates() {
        let pair = make_traveling_pair(consts(0.5), 1.0, 1.0).unwrap();
        let st = SimState::new(pair.consts, pair.vortices.clone(), vec![]).unwrap();
        let cfg = IntegratorConfig {
            dt: 0.05,
            scheme: Scheme::Rk4,
            t_end: 10.0,
        };
        let end = simulate(&st, &cfg, 1000).unwrap().samples.pop().unwrap();
        for (a, b) in end.vortices.iter().zip(&pair.vortices) {
            let want = b.pos + Vec2::new(0.0, pair.frame.u * 10.0);
            assert!((a.pos - want).norm() < 1e-10);
        }
    }

    #[test]
    fn collision_is_reported() {
        let st = SimState::new(
            consts(0.5),
            vec![pv(1.0, 0.0, 1.0), pv(1.0 + 1e-9, 0.0, 1.0)],
            vec![],
        )
        .unwrap();
        let cfg = IntegratorConfig {
            dt: 1e-3,
            scheme: Scheme::Rk4,
            t_end: 1e-3,
        };
        assert!(matches!(step(&st, &cfg), Err(Error::Singularity(_))));
        assert!(SimState::new(
            consts(0.5),
            vec![pv(0.0, 0.0, 1.0), pv(0.0, 0.0, 1.0)],
            vec![]
        )
        .is_err());
        let bad = IntegratorConfig {
            dt: 0.0,
            scheme: Scheme::Rk4,
            t_end: 1.0,
        };
        assert!(matches!(step(&st, &bad), Err(Error::Domain(_))));
    }

    #[test]
    fn csv_writers() {
        let st = SimState::new(
            consts(0.5),
            vec![pv(0.0, 0.0, 1.0)],
            vec![Blob::new(Vec2::new(1.0, 0.0), 0.5, 0.1).unwrap()],
        )
        .unwrap();
        let cfg = IntegratorConfig {
            dt: 0.1,
            scheme: Scheme::Rk4,
            t_end: 0.2,
        };
        let tr = simulate(&st, &cfg, 1).unwrap();
        let t = trajectory_csv(&tr);
        assert!(t.starts_with("t,id,kind,x,y,strength\n"));
        assert_eq!(t.lines().count(), 1 + 3 * 2);
        assert!(t.lines().nth(2).unwrap().contains(",1,blob,"));
        let i = invariants_csv(&tr);
        assert!(i.starts_with("t,H,Px,Py,I\n"));
        assert_eq!(i.lines().count(), 4);
    }
}
