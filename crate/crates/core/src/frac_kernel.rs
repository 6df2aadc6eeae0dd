//! The Riesz kernel `G_s(x, y) = c_{2,s} |x - y|^{2s-2}` of `(-Δ)^s` in the
//! plane, its derivatives, and the point-vortex velocity it induces.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vec2::Vec2;

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

fn lanczos(x: f64) -> f64 {
    if x < 0.5 {
        PI / ((PI * x).sin() * lanczos(1.0 - x))
    } else {
        let x = x - 1.0;
        let mut a = LANCZOS_COEF[0];
        for (i, c) in LANCZOS_COEF.iter().enumerate().skip(1) {
            a += c / (x + i as f64);
        }
        let t = x + LANCZOS_G + 0.5;
        (2.0 * PI).sqrt() * ((x + 0.5) * t.ln() - t).exp() * a
    }
}

/// Gamma function on the positive axis (Lanczos, g = 7, with reflection below 1/2).
pub fn gamma_fn(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::domain(format!("gamma_fn needs x > 0, got {x}")));
    }
    Ok(lanczos(x))
}

/// Fractional order `s`, strictly inside `(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct FracOrder(f64);

impl FracOrder {
    pub fn new(s: f64) -> Result<Self> {
        if s > 0.0 && s < 1.0 {
            Ok(FracOrder(s))
        } else {
            Err(Error::domain(format!(
                "fractional order must lie in (0, 1), got {s}"
            )))
        }
    }

    #[inline]
    pub fn get(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for FracOrder {
    type Error = Error;
    fn try_from(s: f64) -> Result<Self> {
        FracOrder::new(s)
    }
}

impl From<FracOrder> for f64 {
    fn from(s: FracOrder) -> f64 {
        s.0
    }
}

/// Fractional order together with the kernel normalization
/// `c_{2,s} = π^{-1} 2^{-2s} Γ(1-s) / Γ(s)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelConstants {
    s: FracOrder,
    c2s: f64,
}

/// Builds the kernel constants for order `s`.
pub fn make_constants(s: FracOrder) -> KernelConstants {
    let v = s.get();
    let c2s = 2f64.powf(-2.0 * v) / PI * lanczos(1.0 - v) / lanczos(v);
    KernelConstants { s, c2s }
}

impl KernelConstants {
    pub fn new(s: f64) -> Result<Self> {
        Ok(make_constants(FracOrder::new(s)?))
    }

    #[inline]
    pub fn s(&self) -> f64 {
        self.s.get()
    }

    #[inline]
    pub fn order(&self) -> FracOrder {
        self.s
    }

    #[inline]
    pub fn c2s(&self) -> f64 {
        self.c2s
    }

    /// `Γ(2-s) / Γ(s)`, the ratio that appears in the pair and polygon formulas.
    pub fn gamma_ratio(&self) -> f64 {
        lanczos(2.0 - self.s()) / lanczos(self.s())
    }

    /// Kernel as a function of the squared distance. No singularity check.
    #[inline]
    pub fn green_r2(&self, r2: f64) -> f64 {
        self.c2s * r2.powf(self.s() - 1.0)
    }

    /// `|∇G|`-type factor: `∇_x G = grad_factor(|d|²) · d` with `d = x - y`.
    #[inline]
    pub fn grad_factor_r2(&self, r2: f64) -> f64 {
        let s = self.s();
        self.c2s * (2.0 * s - 2.0) * r2.powf(s - 2.0)
    }

    /// Hessian of `G` with respect to `x` at separation `d`, as `[[xx, xy], [xy, yy]]`.
    #[inline]
    pub fn hess_sep(&self, d: Vec2) -> [[f64; 2]; 2] {
        let s = self.s();
        let r2 = d.norm_sq();
        let base = self.c2s * (2.0 * s - 2.0) * r2.powf(s - 2.0);
        let k = (2.0 * s - 4.0) / r2;
        [
            [base * (1.0 + k * d.x * d.x), base * k * d.x * d.y],
            [base * k * d.x * d.y, base * (1.0 + k * d.y * d.y)],
        ]
    }

    /// `G_s(x, y)`.
    pub fn green(&self, x: Vec2, y: Vec2) -> Result<f64> {
        let r2 = separation(x, y)?;
        Ok(self.green_r2(r2))
    }

    /// `∇_x G_s(x, y) = c_{2,s} (2s-2) |x-y|^{2s-4} (x-y)`.
    pub fn grad_green(&self, x: Vec2, y: Vec2) -> Result<Vec2> {
        let r2 = separation(x, y)?;
        Ok((x - y) * self.grad_factor_r2(r2))
    }

    /// Velocity at `x` induced by a point vortex of circulation `kappa` at `y`:
    /// `kappa (∇_x G_s(x, y))^⊥` with the clockwise `⊥`.
    pub fn velocity_kernel(&self, kappa: f64, x: Vec2, y: Vec2) -> Result<Vec2> {
        Ok(self.grad_green(x, y)?.perp() * kappa)
    }
}

fn separation(x: Vec2, y: Vec2) -> Result<f64> {
    let r2 = (x - y).norm_sq();
    if r2 > 0.0 && r2.is_finite() {
        Ok(r2)
    } else {
        Err(Error::singular(format!(
            "kernel evaluated at coincident points ({}, {})",
            x.x, x.y
        )))
    }
}
