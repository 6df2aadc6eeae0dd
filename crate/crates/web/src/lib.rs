//! Browser bindings for the demo page in `www/`.
//!
//! Everything crosses the boundary as numbers or flat `Float64Array`s; errors
//! become JavaScript exceptions carrying the library's message.

use wasm_bindgen::prelude::*;

use vortexwave::dynamics::{simulate, IntegratorConfig, Scheme, SimState};
use vortexwave::equilibria::{make_polygon, make_traveling_pair, pair_speed, polygon_omega};
use vortexwave::profile::{evaluate_profile, solve_profile, ProfileGrid, ProfileParams};
use vortexwave::KernelConstants;

fn js(e: vortexwave::Error) -> JsError {
    JsError::new(&e.to_string())
}

/// `[c2s, U, omega]` for a pair of half distance `d` and a polygon of `k + 1`
/// vortices on radius `rho`, all with strength `kappa`.
#[wasm_bindgen]
pub fn constants(s: f64, kappa: f64, d: f64, rho: f64, k: usize) -> Result<Vec<f64>, JsError> {
    let c = KernelConstants::new(s).map_err(js)?;
    Ok(vec![
        c.c2s(),
        pair_speed(&c, kappa, d),
        polygon_omega(&c, kappa, rho, k),
    ])
}

/// Ground-state profile sampled on `samples` points of `[0, r_plot]`, in
/// units of the free-boundary radius. Layout: `[M_gamma, R1, r0, W0, r1, W1, ...]`.
#[wasm_bindgen]
pub fn profile_curve(
    s: f64,
    gamma: f64,
    n_inner: usize,
    r_plot: f64,
    samples: usize,
) -> Result<Vec<f64>, JsError> {
    let params = ProfileParams::new(s, gamma).map_err(js)?;
    let grid = ProfileGrid {
        n_inner,
        ..ProfileGrid::default()
    };
    let prof = solve_profile(&params, &grid, 1e-10).map_err(js)?;
    let n = samples.max(2);
    let mut out = vec![prof.m_gamma, prof.r1];
    for i in 0..n {
        let rho = r_plot * i as f64 / (n - 1) as f64;
        out.push(rho);
        out.push(evaluate_profile(&prof, rho * prof.r1));
    }
    Ok(out)
}

/// Trajectories of a rotating polygon (`kind = 0`, `k + 1` vortices on the
/// unit circle) or a traveling pair (`kind = 1`, half distance 1). Layout per
/// sample: `[t, x0, y0, x1, y1, ...]`.
#[wasm_bindgen]
pub fn orbit(
    s: f64,
    kind: u32,
    k: usize,
    t_end: f64,
    dt: f64,
    sample_every: usize,
) -> Result<Vec<f64>, JsError> {
    let c = KernelConstants::new(s).map_err(js)?;
    let sys = match kind {
        0 => make_polygon(c, 1.0, 1.0, k),
        _ => make_traveling_pair(c, 1.0, 1.0),
    }
    .map_err(js)?;
    let st = SimState::new(c, sys.vortices, Vec::new()).map_err(js)?;
    let cfg = IntegratorConfig {
        dt,
        scheme: Scheme::Rk4,
        t_end,
    };
    let traj = simulate(&st, &cfg, sample_every.max(1)).map_err(js)?;
    Ok(traj
        .samples
        .iter()
        .flat_map(|st| {
            std::iter::once(st.t).chain(st.vortices.iter().flat_map(|v| [v.pos.x, v.pos.y]))
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constants_layout() {
        let v = constants(0.5, 1.0, 1.0, 1.0, 2).unwrap();
        assert_eq!(v.len(), 3);
        assert!((v[0] - 0.5 / std::f64::consts::PI).abs() < 1e-15);
        assert!(v[1] < 0.0 && v[2] > 0.0);
    }

    #[test]
    fn orbit_layout_and_rigidity() {
        let v = orbit(0.5, 0, 2, 1.0, 0.01, 10).unwrap();
        let stride = 1 + 2 * 3;
        assert_eq!(v.len() % stride, 0);
        let last = &v[v.len() - stride..];
        assert!((last[0] - 1.0).abs() < 1e-12);
        assert!((last[1].hypot(last[2]) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn profile_curve_starts_at_peak() {
        let v = profile_curve(0.5, 1.5, 64, 3.0, 31).unwrap();
        assert_eq!(v.len(), 2 + 2 * 31);
        assert!((v[0] - 12.2663).abs() < 0.05);
        // W = 1 at the free boundary rho = 1 (sample 10)
        assert!((v[2 + 2 * 10 + 1] - 1.0).abs() < 1e-6);
        assert!(v[3] > v[5]);
    }
}
