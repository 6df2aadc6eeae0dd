//! TOML schemas, one per command family. Unknown keys are rejected (except in
//! the ansatz schemas, which share flattened fields) so a typo fails loudly.

use serde::Deserialize;
use vortexwave::ansatz::PolarGrid;
use vortexwave::equilibria::{
    make_polygon, make_traveling_pair, Frame, KrConvention, NewtonOptions, PointVortex,
    VortexSystem,
};
use vortexwave::profile::ProfileGrid;
use vortexwave::{KernelConstants, Result, Vec2};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantsConfig {
    pub s: f64,
    #[serde(default = "one")]
    pub kappa: f64,
    /// Half distance of the traveling pair.
    #[serde(default = "one")]
    pub d: f64,
    /// Polygon radius and number of vortices minus one.
    #[serde(default = "one")]
    pub rho: f64,
    #[serde(default = "two")]
    pub k: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileConfig {
    pub s: f64,
    pub gamma: f64,
    #[serde(default = "profile_tol")]
    pub tol: f64,
    #[serde(default)]
    pub grid: ProfileGrid,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VortexSpec {
    pub x: f64,
    pub y: f64,
    pub kappa: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum SystemSpec {
    Pair {
        kappa: f64,
        d: f64,
    },
    Polygon {
        kappa: f64,
        rho: f64,
        k: usize,
    },
    Custom {
        vortices: Vec<VortexSpec>,
        #[serde(default)]
        u: f64,
        #[serde(default)]
        omega: f64,
    },
}

impl SystemSpec {
    pub fn build(&self, consts: KernelConstants) -> Result<VortexSystem> {
        match *self {
            SystemSpec::Pair { kappa, d } => make_traveling_pair(consts, kappa, d),
            SystemSpec::Polygon { kappa, rho, k } => make_polygon(consts, kappa, rho, k),
            SystemSpec::Custom {
                ref vortices,
                u,
                omega,
            } => {
                let vs = vortices
                    .iter()
                    .map(|v| PointVortex::new(Vec2::new(v.x, v.y), v.kappa))
                    .collect::<Result<Vec<_>>>()?;
                VortexSystem::new(consts, vs, Frame { u, omega })
            }
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NewtonConfig {
    #[serde(default = "newton_tol")]
    pub tol: f64,
    #[serde(default = "newton_iter")]
    pub max_iter: usize,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        NewtonConfig {
            tol: newton_tol(),
            max_iter: newton_iter(),
        }
    }
}

impl NewtonConfig {
    pub fn options(&self) -> NewtonOptions {
        NewtonOptions {
            tol: self.tol,
            max_iter: self.max_iter,
            ..NewtonOptions::default()
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EquilibriaConfig {
    pub s: f64,
    #[serde(default)]
    pub convention: KrConvention,
    pub system: SystemSpec,
    /// Flattened coordinate indices left free in `find`; all by default.
    pub free: Option<Vec<usize>>,
    #[serde(default)]
    pub newton: NewtonConfig,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum AnsatzSpec {
    /// Bump of strength `kappa` at `(d, 0)` and point vortex `-kappa` at
    /// `(-d, 0)`; `u` defaults to the exact pair speed.
    Pair {
        kappa: f64,
        d: f64,
        u: Option<f64>,
    },
    Isolated {
        mu: f64,
    },
}

#[derive(Debug, Deserialize)]
pub struct AnsatzCommon {
    pub s: f64,
    pub gamma: f64,
    #[serde(default = "delta")]
    pub delta: f64,
    #[serde(default = "profile_tol")]
    pub profile_tol: f64,
    #[serde(default)]
    pub profile_grid: ProfileGrid,
    #[serde(default)]
    pub polar: PolarGrid,
}

#[derive(Debug, Deserialize)]
pub struct AnsatzConfig {
    #[serde(flatten)]
    pub common: AnsatzCommon,
    pub configuration: AnsatzSpec,
    /// Used by `lambdas` and `reduced`.
    #[serde(default = "epsilon")]
    pub epsilon: f64,
    /// Used by `scan` (and by `lambdas` when given, to tabulate a sweep).
    pub epsilons: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
pub struct BracketConfig {
    #[serde(flatten)]
    pub common: AnsatzCommon,
    pub kappa: f64,
    /// Frame speed; defaults to the exact pair speed at `d_expected`.
    pub u: Option<f64>,
    #[serde(default = "one")]
    pub d_expected: f64,
    #[serde(default = "epsilon")]
    pub epsilon: f64,
    pub d_lo: f64,
    pub d_hi: f64,
    /// Optional table of the normalized residual against the bracket.
    #[serde(default)]
    pub d_values: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegrationConfig {
    pub dt: f64,
    pub t_end: f64,
    #[serde(default = "one_usize")]
    pub sample_every: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointsConfig {
    pub s: f64,
    pub system: SystemSpec,
    pub integration: IntegrationConfig,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VortexWaveConfig {
    pub s: f64,
    pub gamma: f64,
    pub kappa: f64,
    pub d: f64,
    #[serde(default = "epsilon")]
    pub epsilon: f64,
    #[serde(default = "delta")]
    pub delta: f64,
    #[serde(default = "n_per_axis")]
    pub n_per_axis: usize,
    pub dt: f64,
    /// Defaults to the time the exact pair needs to travel `transit`.
    pub t_end: Option<f64>,
    #[serde(default = "transit")]
    pub transit: f64,
    #[serde(default = "one_usize")]
    pub sample_every: usize,
    #[serde(default = "profile_tol")]
    pub profile_tol: f64,
    #[serde(default)]
    pub profile_grid: ProfileGrid,
}

fn one() -> f64 {
    1.0
}
fn two() -> usize {
    2
}
fn one_usize() -> usize {
    1
}
fn profile_tol() -> f64 {
    1e-11
}
fn newton_tol() -> f64 {
    NewtonOptions::default().tol
}
fn newton_iter() -> usize {
    NewtonOptions::default().max_iter
}
fn delta() -> f64 {
    0.3
}
fn epsilon() -> f64 {
    1e-2
}
fn n_per_axis() -> usize {
    56
}
fn transit() -> f64 {
    0.5
}
