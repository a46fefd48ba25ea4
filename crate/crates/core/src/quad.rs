//! Quadrature primitives: Gauss-Legendre rules, adaptive refinement, and
//! tensor-product integration over small-dimension boxes.

use crate::error::{Error, Result};
use std::sync::OnceLock;

/// Gauss-Legendre rule on `[-1, 1]`.
///
/// Nodes are roots of the Legendre polynomial, found by Newton iteration on
/// the three-term recurrence; exact for polynomials of degree `2n - 1`.
#[derive(Debug, Clone)]
pub struct GlRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GlRule {
    pub fn new(n: usize) -> Self {
        assert!(n >= 2, "need at least two nodes");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for k in 0..m {
            let mut x = (std::f64::consts::PI * (k as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                // p0, p1 walk the recurrence up to P_n; dp is P_n'.
                let mut p0 = 1.0;
                let mut p1 = x;
                for j in 2..=n {
                    let jf = j as f64;
                    let p2 = ((2.0 * jf - 1.0) * x * p1 - (jf - 1.0) * p0) / jf;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-15 {
                    break;
                }
            }
            nodes[k] = -x;
            nodes[n - 1 - k] = x;
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            weights[k] = w;
            weights[n - 1 - k] = w;
        }
        GlRule { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F, a: f64, b: f64) -> f64 {
        let c = 0.5 * (a + b);
        let h = 0.5 * (b - a);
        let mut acc = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            acc += w * f(c + h * x);
        }
        acc * h
    }

    /// Tensor-product integral of `f` over the box `[lo, hi]`, same node
    /// count per axis. Supported up to dimension 4.
    pub fn integrate_box<F: FnMut(&[f64]) -> f64>(
        &self,
        mut f: F,
        lo: &[f64],
        hi: &[f64],
    ) -> Result<f64> {
        let dim = lo.len();
        if dim != hi.len() {
            return Err(Error::DimensionMismatch { expected: dim, got: hi.len() });
        }
        if dim == 0 || dim > 4 {
            return Err(Error::domain(format!(
                "tensor quadrature supports dimension 1..=4, got {dim}"
            )));
        }
        let mut point = vec![0.0; dim];
        let mut scale = 1.0;
        for d in 0..dim {
            scale *= 0.5 * (hi[d] - lo[d]);
        }
        let mut idx = vec![0usize; dim];
        let n = self.len();
        let mut acc = 0.0;
        loop {
            let mut w = 1.0;
            for d in 0..dim {
                let i = idx[d];
                point[d] = 0.5 * (lo[d] + hi[d]) + 0.5 * (hi[d] - lo[d]) * self.nodes[i];
                w *= self.weights[i];
            }
            acc += w * f(&point);
            // odometer increment
            let mut d = 0;
            loop {
                idx[d] += 1;
                if idx[d] < n {
                    break;
                }
                idx[d] = 0;
                d += 1;
                if d == dim {
                    return Ok(acc * scale);
                }
            }
        }
    }
}

/// Composite tensor integration: the box is split into `panels` equal
/// segments per axis and each subcell integrated with `rule`.
pub fn integrate_box_composite<F: FnMut(&[f64]) -> f64>(
    rule: &GlRule,
    mut f: F,
    lo: &[f64],
    hi: &[f64],
    panels: usize,
) -> Result<f64> {
    let dim = lo.len();
    if panels == 0 {
        return Err(Error::domain("composite quadrature needs at least one panel"));
    }
    let mut idx = vec![0usize; dim];
    let mut acc = 0.0;
    let mut cl = vec![0.0; dim];
    let mut ch = vec![0.0; dim];
    loop {
        for d in 0..dim {
            let w = (hi[d] - lo[d]) / panels as f64;
            cl[d] = lo[d] + idx[d] as f64 * w;
            ch[d] = cl[d] + w;
        }
        acc += rule.integrate_box(&mut f, &cl, &ch)?;
        let mut d = 0;
        loop {
            idx[d] += 1;
            if idx[d] < panels {
                break;
            }
            idx[d] = 0;
            d += 1;
            if d == dim {
                return Ok(acc);
            }
        }
    }
}

fn scale_rule() -> &'static GlRule {
    static RULE: OnceLock<GlRule> = OnceLock::new();
    RULE.get_or_init(|| GlRule::new(32))
}

/// Adaptive integration of `f` over `[a, b]` to relative tolerance
/// `rel_tol`, measured against a 32-node Gauss-Legendre estimate of the
/// whole integral. Simpson refinement with Richardson acceptance.
pub fn integrate_adaptive<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rel_tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let scale = scale_rule().integrate(&f, a, b).abs().max(1e-300);
    let tol = rel_tol * scale;
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_refine(&f, a, b, fa, fm, fb, whole, tol, 52)
}

#[allow(clippy::too_many_arguments)]
fn simpson_refine<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_refine(f, a, m, fa, flm, fm, left, tol * 0.5, depth - 1)
        + simpson_refine(f, m, b, fm, frm, fb, right, tol * 0.5, depth - 1)
}
