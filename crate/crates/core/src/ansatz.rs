//! Concentrated ansatz `Ψ₀(x) = ε^{2s-2} Σ_j μ_j^{-p} W((x - b_j)/(ε μ_j))`,
//! `p = 2s/(γ-1)`, built from the radial profile, together with the
//! quantities used to measure how far it is from an exact steady state:
//! the nonlinear residual `S`, its rescaled projections onto the
//! translation kernels `Z_ij`, and the weighted norms of the linear theory.
//!
//! The fractional Laplacian of `Ψ₀` is known in closed form, so nothing here
//! discretizes `(-Δ)^s`.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::equilibria::{Frame, PointVortex};
use crate::error::{Error, Result};
use crate::profile::{
    evaluate_profile, evaluate_profile_deriv, mu_from_kappa, ProfileParams, RadialProfile,
};
use crate::quad::{gauss, pairwise_sum};
use crate::vec2::Vec2;

/// A concentrated bump centered at `pos` with size `mu`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaveCenter {
    pub pos: Vec2,
    pub mu: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnsatzConfig {
    pub params: ProfileParams,
    pub epsilon: f64,
    pub waves: Vec<WaveCenter>,
    /// Point vortices that are not smoothed into bumps.
    pub vortices: Vec<PointVortex>,
    pub frame: Frame,
    /// Localization radius around every center.
    pub delta: f64,
    /// Reference scale of the rescaling `y = x/(ε μ)`.
    pub mu_ref: f64,
}

impl AnsatzConfig {
    /// One bump of strength `kappa` at `(d, 0)` and a point vortex `-kappa`
    /// at `(-d, 0)`, in a frame translating with speed `u`.
    pub fn vortex_pair(
        profile: &RadialProfile,
        kappa: f64,
        d: f64,
        u: f64,
        epsilon: f64,
        delta: f64,
    ) -> Result<Self> {
        let mu = mu_from_kappa(profile.m_gamma, &profile.params, kappa)?;
        let cfg = AnsatzConfig {
            params: profile.params,
            epsilon,
            waves: vec![WaveCenter {
                pos: Vec2::new(d, 0.0),
                mu,
            }],
            vortices: vec![PointVortex::new(Vec2::new(-d, 0.0), -kappa)?],
            frame: Frame { u, omega: 0.0 },
            delta,
            mu_ref: mu,
        };
        cfg.validate(profile)?;
        Ok(cfg)
    }

    /// A single bump of size `mu` at the origin with no external field.
    pub fn isolated(profile: &RadialProfile, mu: f64, epsilon: f64, delta: f64) -> Result<Self> {
        let cfg = AnsatzConfig {
            params: profile.params,
            epsilon,
            waves: vec![WaveCenter {
                pos: Vec2::ZERO,
                mu,
            }],
            vortices: Vec::new(),
            frame: Frame::default(),
            delta,
            mu_ref: mu,
        };
        cfg.validate(profile)?;
        Ok(cfg)
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Self {
        AnsatzConfig {
            epsilon,
            ..self.clone()
        }
    }

    /// `p = 2s/(γ-1)`.
    pub fn p(&self) -> f64 {
        self.params.amplitude_exponent()
    }

    /// Strength `M_γ μ_j^e` carried by bump `j`.
    pub fn wave_strength(&self, profile: &RadialProfile, j: usize) -> f64 {
        profile.m_gamma * self.waves[j].mu.powf(self.params.mass_exponent())
    }

    /// Checks positivity, disjoint localization balls and bumps inside their balls.
    pub fn validate(&self, profile: &RadialProfile) -> Result<()> {
        if profile.params != self.params {
            return Err(Error::domain("profile was solved for different (s, gamma)"));
        }
        if !(self.epsilon > 0.0) || !(self.delta > 0.0) || !(self.mu_ref > 0.0) {
            return Err(Error::domain("epsilon, delta and mu_ref must be positive"));
        }
        if self.waves.is_empty() {
            return Err(Error::domain("the ansatz needs at least one bump"));
        }
        for (j, w) in self.waves.iter().enumerate() {
            if !(w.mu > 0.0) {
                return Err(Error::domain(format!(
                    "bump {j} has nonpositive scale {}",
                    w.mu
                )));
            }
            let radius = self.epsilon * w.mu * profile.r1;
            if radius >= self.delta {
                return Err(Error::domain(format!(
                    "bump {j} support radius {radius} is not inside delta = {}",
                    self.delta
                )));
            }
        }
        let centers: Vec<Vec2> = self.centers();
        for (a, ca) in centers.iter().enumerate() {
            for (b, cb) in centers.iter().enumerate().skip(a + 1) {
                let dist = (*ca - *cb).norm();
                if dist == 0.0 {
                    return Err(Error::singular(format!("centers {a} and {b} coincide")));
                }
                if dist <= 2.0 * self.delta {
                    return Err(Error::domain(format!(
                        "localization balls around centers {a} and {b} overlap (distance {dist}, delta {})",
                        self.delta
                    )));
                }
            }
        }
        Ok(())
    }

    /// Bump centers followed by point-vortex positions.
    pub fn centers(&self) -> Vec<Vec2> {
        self.waves
            .iter()
            .map(|w| w.pos)
            .chain(self.vortices.iter().map(|v| v.pos))
            .collect()
    }

    /// Rescaled bump centers `b'_j = b_j/(ε μ)`.
    pub fn rescaled_centers(&self) -> Vec<Vec2> {
        let sc = 1.0 / (self.epsilon * self.mu_ref);
        self.waves.iter().map(|w| w.pos * sc).collect()
    }

    /// `Σ_i κ_i G(b_i, x) + U x_1 + ω |x|²/2`, the field felt by the bumps
    /// apart from each other.
    pub fn external_field(&self, x: Vec2) -> Result<f64> {
        let k = &self.params.consts;
        let mut acc = self.frame.u * x.x + 0.5 * self.frame.omega * x.norm_sq();
        for v in &self.vortices {
            acc += v.kappa * k.green(x, v.pos)?;
        }
        Ok(acc)
    }

    /// `ψ_j(x) = ε^{2s-2} μ_j^{-p} W((x - b_j)/(ε μ_j))`.
    fn bump(&self, profile: &RadialProfile, j: usize, x: Vec2) -> f64 {
        let w = &self.waves[j];
        let s = self.params.s();
        let z = (x - w.pos).norm() / (self.epsilon * w.mu);
        self.epsilon.powf(2.0 * s - 2.0) * w.mu.powf(-self.p()) * evaluate_profile(profile, z)
    }

    /// `ε^{2s-2} μ_j^{-p}`, the level at which bump `j` switches on.
    fn threshold(&self, j: usize) -> f64 {
        self.epsilon.powf(2.0 * self.params.s() - 2.0) * self.waves[j].mu.powf(-self.p())
    }

    /// `ε^{(2-2s)γ-2}`.
    fn nonlinear_prefactor(&self) -> f64 {
        let s = self.params.s();
        self.epsilon.powf((2.0 - 2.0 * s) * self.params.gamma - 2.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LambdaSet {
    pub values: Vec<f64>,
}

/// Chooses `λ_n` so the ansatz argument at `b_n` matches the profile's free-boundary level:
/// `λ_n μ_n^p = 1 + ε^{2-2s} μ_n^p (Σ_i κ_i G(b_n, b_i) + U b_{n1} + ω|b_n|²/2)
/// + Σ_{j≠n} (μ_n/μ_j)^p W((b_n - b_j)/(ε μ_j))`.
pub fn compute_lambdas(cfg: &AnsatzConfig, profile: &RadialProfile) -> Result<LambdaSet> {
    cfg.validate(profile)?;
    let p = cfg.p();
    let s = cfg.params.s();
    let eps = cfg.epsilon;
    let mut values = Vec::with_capacity(cfg.waves.len());
    for (n, wn) in cfg.waves.iter().enumerate() {
        let mut rhs = 1.0;
        let ext = cfg.external_field(wn.pos)?;
        if ext != 0.0 {
            rhs += eps.powf(2.0 - 2.0 * s) * wn.mu.powf(p) * ext;
        }
        for (j, wj) in cfg.waves.iter().enumerate() {
            if j != n {
                let z = (wn.pos - wj.pos).norm() / (eps * wj.mu);
                rhs += (wn.mu / wj.mu).powf(p) * evaluate_profile(profile, z);
            }
        }
        values.push(rhs / wn.mu.powf(p));
    }
    Ok(LambdaSet { values })
}

/// The ansatz `Ψ₀(x)`.
pub fn psi0(cfg: &AnsatzConfig, profile: &RadialProfile, x: Vec2) -> f64 {
    (0..cfg.waves.len()).map(|j| cfg.bump(profile, j, x)).sum()
}

/// `(-Δ)^s Ψ₀ = Σ_j ε^{(2-2s)γ-2} (ψ_j - ε^{2s-2} μ_j^{-p})_+^γ`, exact.
pub fn frac_lap_psi0(cfg: &AnsatzConfig, profile: &RadialProfile, x: Vec2) -> f64 {
    let g = cfg.params.gamma;
    let pre = cfg.nonlinear_prefactor();
    (0..cfg.waves.len())
        .map(|j| {
            pre * (cfg.bump(profile, j, x) - cfg.threshold(j))
                .max(0.0)
                .powf(g)
        })
        .sum()
}

/// The nonlinear term `ε^{(2-2s)γ-2} Σ_j (Ψ₀ + ext - ε^{2s-2} λ_j)_+^γ χ_{B_δ(b_j)}`,
/// which is also the approximate vorticity density.
pub fn theta_field(
    cfg: &AnsatzConfig,
    profile: &RadialProfile,
    lambdas: &LambdaSet,
    x: Vec2,
) -> Result<f64> {
    if lambdas.values.len() != cfg.waves.len() {
        return Err(Error::domain("one lambda per bump is required"));
    }
    let g = cfg.params.gamma;
    let s = cfg.params.s();
    let mut acc = 0.0;
    let mut base: Option<f64> = None;
    for (j, w) in cfg.waves.iter().enumerate() {
        if (x - w.pos).norm() >= cfg.delta {
            continue;
        }
        let b = match base {
            Some(b) => b,
            None => {
                let b = psi0(cfg, profile, x) + cfg.external_field(x)?;
                base = Some(b);
                b
            }
        };
        let arg = b - cfg.epsilon.powf(2.0 * s - 2.0) * lambdas.values[j];
        acc += arg.max(0.0).powf(g);
    }
    Ok(cfg.nonlinear_prefactor() * acc)
}

/// `S(Ψ₀)(x) = (-Δ)^s Ψ₀ - θ(x)`.
#[allow(non_snake_case)]
pub fn residual_S(
    cfg: &AnsatzConfig,
    profile: &RadialProfile,
    lambdas: &LambdaSet,
    x: Vec2,
) -> Result<f64> {
    Ok(frac_lap_psi0(cfg, profile, x) - theta_field(cfg, profile, lambdas, x)?)
}

/// Polar sampling / quadrature resolution around each bump.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolarGrid {
    /// Radial points; rounded up to a multiple of 32 for quadrature.
    pub n_r: usize,
    pub n_theta: usize,
    /// Outer radius in units of the bump's free-boundary radius.
    pub extent: f64,
}

impl Default for PolarGrid {
    fn default() -> Self {
        PolarGrid {
            n_r: 256,
            n_theta: 256,
            extent: 2.0,
        }
    }
}

/// `max_j μ_j^{-pγ} (W(0) - 1)^γ`, the size of `ε² (-Δ)^s Ψ₀` at a bump center.
pub fn residual_scale(cfg: &AnsatzConfig, profile: &RadialProfile) -> f64 {
    let pg = cfg.p() * cfg.params.gamma;
    let peak = (profile.w0() - 1.0).powf(cfg.params.gamma);
    cfg.waves
        .iter()
        .map(|w| w.mu.powf(-pg) * peak)
        .fold(0.0, f64::max)
}

/// Sampled `sup |ε² S(Ψ₀)|` over uniform polar grids covering every bump.
pub fn residual_sup(
    cfg: &AnsatzConfig,
    profile: &RadialProfile,
    lambdas: &LambdaSet,
    grid: &PolarGrid,
) -> Result<f64> {
    let e2 = cfg.epsilon * cfg.epsilon;
    let mut sup = 0.0f64;
    for w in &cfg.waves {
        let radius = grid.extent * cfg.epsilon * w.mu * profile.r1;
        let rows: Vec<f64> = (0..grid.n_theta)
            .into_par_iter()
            .map(|it| -> Result<f64> {
                let th = 2.0 * PI * it as f64 / grid.n_theta as f64;
                let dir = Vec2::from_polar(1.0, th);
                let mut m = 0.0f64;
                for ir in 0..=grid.n_r {
                    let x = w.pos + dir * (radius * ir as f64 / grid.n_r as f64);
                    m = m.max((e2 * residual_S(cfg, profile, lambdas, x)?).abs());
                }
                Ok(m)
            })
            .collect::<Result<_>>()?;
        sup = rows.into_iter().fold(sup, f64::max);
    }
    Ok(sup)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanRow {
    pub epsilon: f64,
    pub sup_residual: f64,
    /// Slope against the previous row; `NaN` on the first.
    pub slope_partial: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualScan {
    pub rows: Vec<ScanRow>,
    /// Least-squares slope of `log sup|ε²S|` against `log ε`; `None` when
    /// every residual vanishes (exact ansatz).
    pub slope: Option<f64>,
    /// Largest residual relative to [`residual_scale`].
    pub max_scaled: f64,
}

/// Residuals below this fraction of [`residual_scale`] count as exact zeros.
pub const EXACT_RESIDUAL: f64 = 1e-12;

/// `sup |ε² S|` for each `ε` in a decreasing list, and the log-log slope.
pub fn residual_scan(
    template: &AnsatzConfig,
    profile: &RadialProfile,
    eps_list: &[f64],
    grid: &PolarGrid,
) -> Result<ResidualScan> {
    if eps_list.len() < 4 {
        return Err(Error::domain(
            "a residual scan needs at least four epsilon values",
        ));
    }
    if !eps_list.windows(2).all(|w| w[1] < w[0]) || !(eps_list[eps_list.len() - 1] > 0.0) {
        return Err(Error::domain(
            "epsilon values must be positive and strictly decreasing",
        ));
    }
    let mut rows: Vec<ScanRow> = Vec::with_capacity(eps_list.len());
    let mut max_scaled = 0.0f64;
    for &eps in eps_list {
        let cfg = template.with_epsilon(eps);
        let lam = compute_lambdas(&cfg, profile)?;
        let sup = residual_sup(&cfg, profile, &lam, grid)?;
        max_scaled = max_scaled.max(sup / residual_scale(&cfg, profile));
        let slope_partial = match rows.last() {
            Some(prev) => (sup / prev.sup_residual).ln() / (eps / prev.epsilon).ln(),
            None => f64::NAN,
        };
        rows.push(ScanRow {
            epsilon: eps,
            sup_residual: sup,
            slope_partial,
        });
    }
    if max_scaled <= EXACT_RESIDUAL {
        return Ok(ResidualScan {
            rows,
            slope: None,
            max_scaled,
        });
    }
    if rows.iter().any(|r| !(r.sup_residual > 0.0)) {
        return Err(Error::domain(
            "residual vanishes at some but not all epsilon; slope is undefined",
        ));
    }
    let xs: Vec<f64> = rows.iter().map(|r| r.epsilon.ln()).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.sup_residual.ln()).collect();
    Ok(ResidualScan {
        rows,
        slope: Some(ls_slope(&xs, &ys)),
        max_scaled,
    })
}

fn ls_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Rescaled argument `z = (μ/μ_j)(y - b'_j)` of bump `j`.
fn rescaled_arg(cfg: &AnsatzConfig, j: usize, y: Vec2) -> Vec2 {
    let w = &cfg.waves[j];
    let bj = w.pos * (1.0 / (cfg.epsilon * cfg.mu_ref));
    (y - bj) * (cfg.mu_ref / w.mu)
}

/// `V_j(y) = γ ((μ/μ_j)^p (W(z) - 1))_+^{γ-1}` inside the rescaled localization ball.
#[allow(non_snake_case)]
pub fn potential_V(cfg: &AnsatzConfig, profile: &RadialProfile, j: usize, y: Vec2) -> f64 {
    let w = &cfg.waves[j];
    let bj = w.pos * (1.0 / (cfg.epsilon * cfg.mu_ref));
    if (y - bj).norm() * cfg.epsilon * cfg.mu_ref >= cfg.delta {
        return 0.0;
    }
    let z = rescaled_arg(cfg, j, y);
    let g = cfg.params.gamma;
    let a = (cfg.mu_ref / w.mu).powf(cfg.p()) * (evaluate_profile(profile, z.norm()) - 1.0);
    g * a.max(0.0).powf(g - 1.0)
}

/// `Z_ij(y) = ∂_i W` at `z = (μ/μ_j)(y - b'_j)`; `i` is 0 or 1.
#[allow(non_snake_case)]
pub fn kernel_Z(cfg: &AnsatzConfig, profile: &RadialProfile, i: usize, j: usize, y: Vec2) -> f64 {
    let z = rescaled_arg(cfg, j, y);
    grad_w(profile, z, i)
}

fn grad_w(profile: &RadialProfile, z: Vec2, i: usize) -> f64 {
    let r = z.norm();
    if r == 0.0 {
        return 0.0;
    }
    let comp = if i == 0 { z.x } else { z.y };
    evaluate_profile_deriv(profile, r) * comp / r
}

/// `E(y) = ε² μ^{pγ} S(Ψ₀)(ε μ y)`, the error of the rescaled problem.
pub fn rescaled_error(
    cfg: &AnsatzConfig,
    profile: &RadialProfile,
    lambdas: &LambdaSet,
    y: Vec2,
) -> Result<f64> {
    let x = y * (cfg.epsilon * cfg.mu_ref);
    error_at(cfg, profile, lambdas, x)
}

fn error_at(
    cfg: &AnsatzConfig,
    profile: &RadialProfile,
    lambdas: &LambdaSet,
    x: Vec2,
) -> Result<f64> {
    let pg = cfg.p() * cfg.params.gamma;
    Ok(cfg.epsilon * cfg.epsilon * cfg.mu_ref.powf(pg) * residual_S(cfg, profile, lambdas, x)?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReducedEntry {
    pub center_index: usize,
    pub component: usize,
    pub value: f64,
    /// `value / (ε^{3-2s} μ^{pγ-2} μ_j^{p+1})`, which tends to `∂_{b_j,i}` of the
    /// weighted Kirchhoff-Routh function.
    pub normalized_value: f64,
}

/// `F_ij = ∫ E(y) Z_ij(y) dy`, by polar Gauss-Legendre x trapezoid quadrature
/// around every bump, with the radial split at the free boundary.
pub fn reduced_residual(
    cfg: &AnsatzConfig,
    profile: &RadialProfile,
    lambdas: &LambdaSet,
    grid: &PolarGrid,
) -> Result<Vec<ReducedEntry>> {
    cfg.validate(profile)?;
    let k = cfg.waves.len();
    let panels = grid.n_r.div_ceil(32).max(1);
    let rule = gauss(16);
    let eps = cfg.epsilon;
    let mu = cfg.mu_ref;

    // radial nodes in y around a bump of rescaled free-boundary radius `fb`
    let radial = |fb: f64| -> Vec<(f64, f64)> {
        let outer = grid.extent.max(1.0) * fb;
        let mut pts = Vec::with_capacity(2 * panels * rule.len());
        for (lo, hi) in [(0.0, fb), (fb, outer)] {
            let h = (hi - lo) / panels as f64;
            for pnl in 0..panels {
                let a = lo + pnl as f64 * h;
                for &(t, w) in rule.points() {
                    pts.push((a + h * t, w * h));
                }
            }
        }
        pts
    };

    let mut sums = vec![[Vec::<f64>::new(), Vec::<f64>::new()]; k];
    for m in 0..k {
        let wm = &cfg.waves[m];
        let fb = profile.r1 * wm.mu / mu;
        let rad = radial(fb);
        let dth = 2.0 * PI / grid.n_theta as f64;
        let partial: Vec<Vec<[f64; 2]>> = (0..grid.n_theta)
            .into_par_iter()
            .map(|it| -> Result<Vec<[f64; 2]>> {
                let th = it as f64 * dth;
                let dir = Vec2::from_polar(1.0, th);
                let mut acc = vec![[0.0; 2]; k];
                for &(rho, w) in &rad {
                    // y = b'_m + ρ e_θ, mapped back to x without forming b'_m
                    let x = wm.pos + dir * (eps * mu * rho);
                    let e = error_at(cfg, profile, lambdas, x)?;
                    if e == 0.0 {
                        continue;
                    }
                    let wt = e * w * rho * dth;
                    for (j, a) in acc.iter_mut().enumerate() {
                        let z = if j == m {
                            dir * (rho * mu / cfg.waves[j].mu)
                        } else {
                            (x - cfg.waves[j].pos) * (1.0 / (eps * cfg.waves[j].mu))
                        };
                        a[0] += wt * grad_w(profile, z, 0);
                        a[1] += wt * grad_w(profile, z, 1);
                    }
                }
                Ok(acc)
            })
            .collect::<Result<_>>()?;
        for row in partial {
            for j in 0..k {
                sums[j][0].push(row[j][0]);
                sums[j][1].push(row[j][1]);
            }
        }
    }

    let s = cfg.params.s();
    let p = cfg.p();
    let pg = p * cfg.params.gamma;
    let mut out = Vec::with_capacity(2 * k);
    for (j, comp) in sums.iter().enumerate() {
        let norm = eps.powf(3.0 - 2.0 * s) * mu.powf(pg - 2.0) * cfg.waves[j].mu.powf(p + 1.0);
        for (i, vals) in comp.iter().enumerate() {
            let value = pairwise_sum(vals);
            out.push(ReducedEntry {
                center_index: j,
                component: i,
                value,
                normalized_value: value / norm,
            });
        }
    }
    Ok(out)
}

/// `κ c_{2,s} (2-2s) (2d)^{2s-3} + U`: the leading reduced residual of the
/// bump/vortex pair divided by `M_γ ε^{3-2s} μ^{p+1}`.
pub fn pair_bracket(params: &ProfileParams, kappa: f64, d: f64, u: f64) -> Result<f64> {
    if !(d > 0.0) || !d.is_finite() {
        return Err(Error::domain(format!(
            "half distance must be positive, got {d}"
        )));
    }
    let s = params.s();
    Ok(kappa * params.consts.c2s() * (2.0 - 2.0 * s) * (2.0 * d).powf(2.0 * s - 3.0) + u)
}

/// Pair reduced residual normalized to tend to [`pair_bracket`].
pub fn pair_reduced_normalized(
    profile: &RadialProfile,
    kappa: f64,
    d: f64,
    u: f64,
    epsilon: f64,
    delta: f64,
    grid: &PolarGrid,
) -> Result<f64> {
    let cfg = AnsatzConfig::vortex_pair(profile, kappa, d, u, epsilon, delta)?;
    let lam = compute_lambdas(&cfg, profile)?;
    let f = reduced_residual(&cfg, profile, &lam, grid)?;
    let s = cfg.params.s();
    let mu = cfg.mu_ref;
    Ok(f[0].value / (profile.m_gamma * epsilon.powf(3.0 - 2.0 * s) * mu.powf(cfg.p() + 1.0)))
}

/// Root in `d` of the pair's normalized reduced residual, by safeguarded
/// secant (Illinois) on a sign-changing bracket `[d_lo, d_hi]`.
#[allow(clippy::too_many_arguments)]
pub fn pair_reduced_root(
    profile: &RadialProfile,
    kappa: f64,
    u: f64,
    epsilon: f64,
    delta: f64,
    d_lo: f64,
    d_hi: f64,
    grid: &PolarGrid,
) -> Result<f64> {
    let f = |d: f64| pair_reduced_normalized(profile, kappa, d, u, epsilon, delta, grid);
    let (mut a, mut b) = (d_lo, d_hi);
    let (mut fa, mut fb) = (f(a)?, f(b)?);
    if fa * fb > 0.0 {
        return Err(Error::domain(format!(
            "reduced residual has the same sign at d = {a} and d = {b}"
        )));
    }
    let mut side = 0i8;
    for _ in 0..60 {
        let c = (a * fb - b * fa) / (fb - fa);
        let fc = f(c)?;
        if fc == 0.0 || (b - a).abs() < 1e-10 * c {
            return Ok(c);
        }
        if fc * fb < 0.0 {
            a = b;
            fa = fb;
            if side == -1 {
                fa *= 0.5;
            }
            side = -1;
        } else {
            if side == 1 {
                fa *= 0.5;
            }
            side = 1;
        }
        b = c;
        fb = fc;
        if (b - a).abs() < 1e-10 * b {
            return Ok(b);
        }
    }
    Err(Error::no_convergence(
        "pair reduced-residual root search",
        fb.abs(),
    ))
}

/// Weight `ρ(y) = Σ_j 1/(1 + |y - b'_j|)` and the norms built from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedNorm {
    pub sigma: f64,
    pub centers: Vec<Vec2>,
}

impl WeightedNorm {
    pub fn new(sigma: f64, centers: Vec<Vec2>) -> Result<Self> {
        if !(sigma > 0.0 && sigma < 1.0) {
            return Err(Error::domain(format!(
                "sigma must lie in (0, 1), got {sigma}"
            )));
        }
        if centers.is_empty() {
            return Err(Error::domain("weighted norm needs at least one center"));
        }
        Ok(WeightedNorm { sigma, centers })
    }

    pub fn rho(&self, y: Vec2) -> f64 {
        self.centers
            .iter()
            .map(|c| 1.0 / (1.0 + (y - *c).norm()))
            .sum()
    }
}

/// `sup ρ^{-(2-2s)} |φ|` over sampled points.
pub fn weighted_norm_star(points: &[Vec2], values: &[f64], norm: &WeightedNorm, s: f64) -> f64 {
    sup_weighted(points, values, norm, 2.0 - 2.0 * s)
}

/// `sup ρ^{-(2+σ)} |h|` over sampled points.
pub fn weighted_norm_starstar(points: &[Vec2], values: &[f64], norm: &WeightedNorm) -> f64 {
    sup_weighted(points, values, norm, 2.0 + norm.sigma)
}

fn sup_weighted(points: &[Vec2], values: &[f64], norm: &WeightedNorm, power: f64) -> f64 {
    points
        .iter()
        .zip(values)
        .map(|(y, v)| norm.rho(*y).powf(-power) * v.abs())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use std::sync::OnceLock;

    use super::*;
    use crate::equilibria::pair_speed;
    use crate::profile::{solve_profile, ProfileGrid};

    fn profile() -> &'static RadialProfile {
        static P: OnceLock<RadialProfile> = OnceLock::new();
        P.get_or_init(|| {
            let grid = ProfileGrid {
                n_inner: 120,
                h_min: 1e-4,
                ..ProfileGrid::default()
            };
            solve_profile(&ProfileParams::new(0.5, 1.5).unwrap(), &grid, 1e-8).unwrap()
        })
    }

    /// Pair with the bump of unit scale (κ = M_γ).
    fn pair(eps: f64, d: f64) -> AnsatzConfig {
        let p = profile();
        let u = pair_speed(&p.params.consts, p.m_gamma, 1.0);
        AnsatzConfig::vortex_pair(p, p.m_gamma, d, u, eps, 0.5).unwrap()
    }

    fn small_grid() -> PolarGrid {
        PolarGrid {
            n_r: 64,
            n_theta: 64,
            extent: 1.5,
        }
    }

    #[test]
    fn isolated_bump_is_exact() {
        let p = profile();
        let cfg = AnsatzConfig::isolated(p, 0.7, 0.05, 0.5).unwrap();
        let lam = compute_lambdas(&cfg, p).unwrap();
        assert_eq!(lam.values[0], 1.0 / 0.7f64.powf(cfg.p()));
        for k in 0..200 {
            let x = Vec2::from_polar(0.05 * 0.7 * p.r1 * 1.3 * k as f64 / 200.0, 0.37 * k as f64);
            let r = residual_S(&cfg, p, &lam, x).unwrap();
            assert!(
                r.abs() <= 1e-12 * frac_lap_psi0(&cfg, p, Vec2::ZERO),
                "S = {r}"
            );
        }
        let f = reduced_residual(&cfg, p, &lam, &small_grid()).unwrap();
        assert!(f.iter().all(|e| e.value.abs() < 1e-12));
    }

    #[test]
    fn center_values() {
        let p = profile();
        let (eps, mu) = (0.02, 1.3);
        let cfg = AnsatzConfig::isolated(p, mu, eps, 0.5).unwrap();
        let pw = cfg.p();
        let want = eps.powf(-1.0) * mu.powf(-pw) * p.w0();
        assert!((psi0(&cfg, p, Vec2::ZERO) - want).abs() < 1e-12 * want);
        let g = p.params.gamma;
        // ε^{(2-2s)γ-2} ((ε^{2s-2} μ^{-p})(W0 - 1))^γ = ε^{-2} μ^{-pγ} (W0 - 1)^γ
        let got = frac_lap_psi0(&cfg, p, Vec2::ZERO);
        let direct = eps.powf(-2.0) * mu.powf(-pw * g) * (p.w0() - 1.0).powf(g);
        assert!((got - direct).abs() < 1e-12 * direct);
        assert_eq!(
            frac_lap_psi0(&cfg, p, Vec2::new(2.0 * eps * mu * p.r1, 0.0)),
            0.0
        );
    }

    #[test]
    fn far_field_matches_green_sum() {
        let p = profile();
        let cfg = pair(0.01, 1.0);
        let kappa = cfg.wave_strength(p, 0);
        assert!((kappa - p.m_gamma).abs() < 1e-12 * kappa);
        for x in [
            Vec2::new(1.0, 0.6),
            Vec2::new(3.0, -2.0),
            Vec2::new(1.2, 0.0),
        ] {
            let want = kappa * p.params.consts.green(x, cfg.waves[0].pos).unwrap();
            let got = psi0(&cfg, p, x);
            assert!((got - want).abs() <= 0.05 * want, "{got} vs {want}");
        }
    }

    #[test]
    fn frac_lap_integrates_to_strength() {
        let p = profile();
        let cfg = AnsatzConfig::isolated(p, 0.8, 0.03, 0.5).unwrap();
        let kappa = cfg.wave_strength(p, 0);
        let radius = 0.03 * 0.8 * p.r1;
        // independent 2-D oracle: midpoint rule on a Cartesian grid
        let n = 600;
        let h = 2.0 * radius / n as f64;
        let mut acc = 0.0;
        for a in 0..n {
            for b in 0..n {
                let x = Vec2::new(
                    -radius + (a as f64 + 0.5) * h,
                    -radius + (b as f64 + 0.5) * h,
                );
                acc += frac_lap_psi0(&cfg, p, x);
            }
        }
        acc *= h * h;
        assert!((acc - kappa).abs() < 2e-3 * kappa, "{acc} vs {kappa}");
    }

    #[test]
    fn pair_lambda_by_substitution() {
        let p = profile();
        let cfg = pair(0.01, 0.9);
        let lam = compute_lambdas(&cfg, p).unwrap().values[0];
        // the ansatz argument at the center equals ε^{2s-2} μ^{-p} (W(0) - 1)
        let b = cfg.waves[0].pos;
        let arg = psi0(&cfg, p, b) + cfg.external_field(b).unwrap() - cfg.epsilon.powf(-1.0) * lam;
        let want = cfg.epsilon.powf(-1.0) * cfg.waves[0].mu.powf(-cfg.p()) * (p.w0() - 1.0);
        assert!((arg - want).abs() < 1e-10 * want);
    }

    #[test]
    fn residual_support_is_local() {
        let p = profile();
        let cfg = pair(0.02, 0.8);
        let lam = compute_lambdas(&cfg, p).unwrap();
        let c = cfg.waves[0].mu * p.r1 * cfg.epsilon;
        for k in 0..50 {
            let x = cfg.waves[0].pos + Vec2::from_polar(1.1 * c + 0.3 * k as f64 / 50.0, k as f64);
            assert_eq!(residual_S(&cfg, p, &lam, x).unwrap(), 0.0);
        }
        assert!(residual_sup(&cfg, p, &lam, &small_grid()).unwrap() > 0.0);
        assert_eq!(
            theta_field(&cfg, p, &lam, Vec2::new(0.0, 0.4)).unwrap(),
            0.0
        );
    }

    #[test]
    fn theta_mass_and_continuity() {
        let p = profile();
        let cfg = pair(0.01, 1.0);
        let lam = compute_lambdas(&cfg, p).unwrap();
        let b = cfg.waves[0].pos;
        let radius = 1.2 * cfg.epsilon * cfg.waves[0].mu * p.r1;
        let n = 500;
        let h = 2.0 * radius / n as f64;
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                let x = b + Vec2::new(
                    -radius + (i as f64 + 0.5) * h,
                    -radius + (j as f64 + 0.5) * h,
                );
                acc += theta_field(&cfg, p, &lam, x).unwrap();
            }
        }
        acc *= h * h;
        let kappa = cfg.wave_strength(p, 0);
        assert!((acc - kappa).abs() < 0.02 * kappa, "{acc} vs {kappa}");
        // no jump across the free boundary
        let fb = cfg.epsilon * cfg.waves[0].mu * p.r1;
        let inside = theta_field(&cfg, p, &lam, b + Vec2::new(fb * (1.0 - 1e-9), 0.0)).unwrap();
        let peak = theta_field(&cfg, p, &lam, b).unwrap();
        assert!(inside < 1e-4 * peak);
    }

    #[test]
    fn v_and_z_symmetries() {
        let p = profile();
        let cfg = pair(0.01, 1.0);
        let bj = cfg.rescaled_centers()[0];
        let fb = p.r1;
        assert_eq!(potential_V(&cfg, p, 0, bj + Vec2::new(1.5 * fb, 0.0)), 0.0);
        assert!(potential_V(&cfg, p, 0, bj) > 0.0);
        for t in [0.1, 0.5, 0.9, 1.7] {
            let a = kernel_Z(&cfg, p, 0, 0, bj + Vec2::new(t, 0.0));
            let b = kernel_Z(&cfg, p, 0, 0, bj - Vec2::new(t, 0.0));
            assert!((a + b).abs() <= 1e-14 * a.abs().max(1e-300));
            assert!(a < 0.0);
        }
        // ∫ V Z_1 = 0 by oddness, checked with a polar rule
        let n = 128;
        let mut acc = 0.0;
        let rule = gauss(32);
        for it in 0..n {
            let th = 2.0 * PI * (it as f64 + 0.25) / n as f64;
            acc += rule.integrate(0.0, fb, |r| {
                let y = bj + Vec2::from_polar(r, th);
                potential_V(&cfg, p, 0, y) * kernel_Z(&cfg, p, 0, 0, y) * r
            });
        }
        let scale = rule.integrate(0.0, fb, |r| {
            let y = bj + Vec2::new(r, 0.0);
            (potential_V(&cfg, p, 0, y) * kernel_Z(&cfg, p, 0, 0, y)).abs() * r
        });
        assert!(acc.abs() < 1e-12 * scale * n as f64);
    }

    #[test]
    fn weighted_norm_basics() {
        let nrm = WeightedNorm::new(0.5, vec![Vec2::ZERO, Vec2::new(10.0, 0.0)]).unwrap();
        let pts: Vec<Vec2> = (0..50)
            .map(|k| Vec2::new(k as f64 * 0.4 - 5.0, 0.3 * k as f64))
            .collect();
        let zeros = vec![0.0; pts.len()];
        assert_eq!(weighted_norm_star(&pts, &zeros, &nrm, 0.3), 0.0);
        let vals: Vec<f64> = pts.iter().map(|y| nrm.rho(*y).powf(1.4)).collect();
        assert!((weighted_norm_star(&pts, &vals, &nrm, 0.3) - 1.0).abs() < 1e-14);
        let vals: Vec<f64> = pts.iter().map(|y| nrm.rho(*y).powf(2.5)).collect();
        assert!((weighted_norm_starstar(&pts, &vals, &nrm) - 1.0).abs() < 1e-14);
        assert!(WeightedNorm::new(1.0, vec![Vec2::ZERO]).is_err());
    }

    #[test]
    fn bracket_values() {
        let params = ProfileParams::new(0.5, 1.5).unwrap();
        let u = -1.0 / (8.0 * PI);
        assert!(pair_bracket(&params, 1.0, 1.0, u).unwrap().abs() < 1e-14);
        assert!(pair_bracket(&params, 1.0, 0.8, u).unwrap() > 0.0);
        assert!(pair_bracket(&params, 1.0, 1.3, u).unwrap() < 0.0);
        assert!(pair_bracket(&params, 1.0, 0.0, u).is_err());
        for s in [0.3, 0.7] {
            let params = ProfileParams::new(s, 1.5).unwrap();
            let u = pair_speed(&params.consts, 2.0, 0.6);
            assert!(pair_bracket(&params, 2.0, 0.6, u).unwrap().abs() < 1e-14);
        }
    }

    #[test]
    fn symmetric_pair_has_no_vertical_reduced_force() {
        let p = profile();
        let cfg = pair(0.01, 0.8);
        let lam = compute_lambdas(&cfg, p).unwrap();
        let f = reduced_residual(&cfg, p, &lam, &small_grid()).unwrap();
        assert!(f[1].value.abs() < 1e-10 * f[0].value.abs(), "{f:?}");
    }

    #[test]
    fn config_validation() {
        let p = profile();
        assert!(AnsatzConfig::vortex_pair(p, p.m_gamma, 1.0, -0.1, 0.5, 0.5).is_err());
        assert!(AnsatzConfig::vortex_pair(p, p.m_gamma, 0.2, -0.1, 0.01, 0.5).is_err());
        assert!(AnsatzConfig::vortex_pair(p, -1.0, 1.0, -0.1, 0.01, 0.5).is_err());
    }
}
