//! Gauss-Legendre rules and the few integration patterns the solvers need:
//! fixed-order panels, adaptive bisection, and a power-law substitution for
//! integrable endpoint singularities.

use std::sync::OnceLock;

use gauss_quad::GaussLegendre;

use crate::error::{Error, Result};

/// Gauss-Legendre nodes and weights mapped to `[0, 1]`.
#[derive(Debug, Clone)]
pub struct Rule {
    pts: Vec<(f64, f64)>,
}

impl Rule {
    fn legendre(n: usize) -> Self {
        let gl = GaussLegendre::new(n).expect("Gauss-Legendre order >= 2");
        let mut pts: Vec<(f64, f64)> = gl
            .as_node_weight_pairs()
            .iter()
            .map(|&(x, w)| (0.5 * (x + 1.0), 0.5 * w))
            .collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        Rule { pts }
    }

    pub fn len(&self) -> usize {
        self.pts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pts.is_empty()
    }

    /// Nodes and weights on `[0, 1]`.
    pub fn points(&self) -> &[(f64, f64)] {
        &self.pts
    }

    #[inline]
    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let h = b - a;
        let mut acc = 0.0;
        for &(t, w) in &self.pts {
            acc += w * f(a + h * t);
        }
        acc * h
    }

    /// Integrates `f` over `[a, b]` when `f` has an integrable power-type
    /// singularity at the endpoint `at` (either `a` or `b`). The map
    /// `x = at + (other - at) t^q` flattens `|x - at|^(alpha)` into `t^(q(1+alpha)-1)`.
    /// `f` receives `x` and the exact offset `|x - at|`.
    pub fn integrate_singular<F: FnMut(f64, f64) -> f64>(
        &self,
        at: f64,
        other: f64,
        q: f64,
        mut f: F,
    ) -> f64 {
        let len = other - at;
        let mut acc = 0.0;
        for &(t, w) in &self.pts {
            let tq1 = t.powf(q - 1.0);
            let off = len * tq1 * t;
            acc += w * q * tq1 * f(at + off, off.abs());
        }
        acc * len.abs()
    }
}

/// Cached rule of order `n`; orders 4, 8, 16, 32 and 64 are cached, others are built on the fly.
pub fn gauss(n: usize) -> &'static Rule {
    static CACHE: [OnceLock<Rule>; 5] = [
        OnceLock::new(),
        OnceLock::new(),
        OnceLock::new(),
        OnceLock::new(),
        OnceLock::new(),
    ];
    let slot = match n {
        4 => 0,
        8 => 1,
        16 => 2,
        32 => 3,
        64 => 4,
        _ => return Box::leak(Box::new(Rule::legendre(n))),
    };
    CACHE[slot].get_or_init(|| Rule::legendre(n))
}

/// Adaptive bisection with a 16-point panel compared against two half panels.
pub fn adaptive<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    rel_tol: f64,
    abs_tol: f64,
) -> Result<f64> {
    const MAX_DEPTH: u32 = 48;
    let rule = gauss(16);
    let whole = rule.integrate(a, b, &mut f);
    let mut stack = vec![(a, b, whole, 0u32)];
    let mut total = 0.0;
    let mut scale = whole.abs();
    while let Some((lo, hi, coarse, depth)) = stack.pop() {
        let mid = 0.5 * (lo + hi);
        let left = rule.integrate(lo, mid, &mut f);
        let right = rule.integrate(mid, hi, &mut f);
        let fine = left + right;
        scale = scale.max(fine.abs());
        let err = (fine - coarse).abs();
        let width = (hi - lo) / (b - a).abs().max(f64::MIN_POSITIVE);
        if err <= (rel_tol * scale).max(abs_tol) * width.abs().max(1e-3) || err == 0.0 {
            total += fine;
        } else if depth >= MAX_DEPTH {
            return Err(Error::Quadrature(format!(
                "bisection depth exhausted on [{lo:e}, {hi:e}], error estimate {err:e}"
            )));
        } else {
            stack.push((lo, mid, left, depth + 1));
            stack.push((mid, hi, right, depth + 1));
        }
    }
    if !total.is_finite() {
        return Err(Error::Quadrature("non-finite integral".into()));
    }
    Ok(total)
}

/// Composite Simpson on `n` (even) panels; used by tests as a plain oracle.
pub fn simpson<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + h * i as f64);
    }
    acc * h / 3.0
}

/// Deterministic pairwise summation.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 16 {
        return xs.iter().sum();
    }
    let (l, r) = xs.split_at(xs.len() / 2);
    pairwise_sum(l) + pairwise_sum(r)
}
