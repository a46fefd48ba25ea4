//! Target densities `pi ∝ exp(-f)` on R^n where `f` is `mu`-strongly convex
//! with an `L`-Lipschitz gradient.
//!
//! Three families are supported:
//!
//! - Gaussian: `f(x) = (x - m)' P (x - m) / 2` for a symmetric positive
//!   definite precision `P`; `mu` and `L` are its extreme eigenvalues and
//!   the normalizer is known in closed form.
//! - Separable: `f(x) = sum_i g_i(x_i)` for one-dimensional convex pieces
//!   with per-piece curvature bounds.
//! - Custom: caller-supplied `f` and gradient with declared `(mu, L)`.
//!
//! Declared constants are never trusted blindly: [`check_convexity_smoothness`]
//! probes random point pairs and flags any Bregman curvature ratio outside
//! `[mu, L]`, and cross-checks the gradient against finite differences.

use crate::error::{Error, Result};
use crate::quad::{integrate_adaptive, integrate_box_composite, GlRule};
use crate::rng::{seeded, CrateRng};
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;
use std::fmt;
use std::sync::Arc;

/// Relative tolerance for declaring a precision matrix symmetric.
const SYMMETRY_RTOL: f64 = 1e-12;

/// Default mode-search tolerance is `MODE_TOL_COEFF * sqrt(n)` on the
/// gradient norm.
const MODE_TOL_COEFF: f64 = 1e-10;

/// Iteration cap for gradient-descent mode search.
const MODE_MAX_ITERS: usize = 2_000_000;

type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type GradFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
type Scalar1d = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// One-dimensional convex piece of a separable target.
#[derive(Clone)]
pub struct Piece {
    kind: PieceKind,
    mu: f64,
    lipschitz: f64,
}

#[derive(Clone)]
enum PieceKind {
    /// `g(t) = curvature * (t - center)^2 / 2`
    Quadratic { curvature: f64, center: f64 },
    /// `g(t) = (t - center)^2 / 2 + log cosh(t - center)`
    QuadLogCosh { center: f64 },
    Custom { f: Scalar1d, df: Scalar1d, minimizer: f64 },
}

/// Numerically stable `log cosh`.
fn log_cosh(t: f64) -> f64 {
    let a = t.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

impl Piece {
    pub fn quadratic(curvature: f64, center: f64) -> Result<Self> {
        if !(curvature > 0.0 && curvature.is_finite()) {
            return Err(Error::InvalidCurvature { mu: curvature, lipschitz: curvature });
        }
        Ok(Piece { kind: PieceKind::Quadratic { curvature, center }, mu: curvature, lipschitz: curvature })
    }

    /// Quadratic plus `log cosh` perturbation; second derivative lies in
    /// `(1, 2]`, so `(mu, L) = (1, 2)`.
    pub fn quad_logcosh(center: f64) -> Self {
        Piece { kind: PieceKind::QuadLogCosh { center }, mu: 1.0, lipschitz: 2.0 }
    }

    /// Custom piece with declared curvature bounds. The minimizer is located
    /// at construction by bisection on the derivative.
    pub fn custom<F, D>(f: F, df: D, mu: f64, lipschitz: f64) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
        D: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        if !(mu > 0.0 && lipschitz >= mu && lipschitz.is_finite()) {
            return Err(Error::InvalidCurvature { mu, lipschitz });
        }
        let d0 = df(0.0);
        let reach = d0.abs() / mu;
        let (mut lo, mut hi) = (-reach, reach);
        // strong convexity puts the root of df within `reach` of any point
        let mut flo = df(lo);
        let mut fhi = df(hi);
        if flo > 0.0 {
            lo -= reach;
            flo = df(lo);
        }
        if fhi < 0.0 {
            hi += reach;
            fhi = df(hi);
        }
        if !(flo <= 0.0 && fhi >= 0.0) {
            return Err(Error::domain(format!(
                "derivative does not bracket a minimizer on [{lo}, {hi}]: df = ({flo}, {fhi})"
            )));
        }
        let mut minimizer = 0.5 * (lo + hi);
        for _ in 0..200 {
            minimizer = 0.5 * (lo + hi);
            let dm = df(minimizer);
            if dm <= 0.0 {
                lo = minimizer;
            } else {
                hi = minimizer;
            }
            if hi - lo < 1e-15 * (1.0 + minimizer.abs()) {
                break;
            }
        }
        Ok(Piece { kind: PieceKind::Custom { f: Arc::new(f), df: Arc::new(df), minimizer }, mu, lipschitz })
    }

    pub fn eval(&self, t: f64) -> f64 {
        match &self.kind {
            PieceKind::Quadratic { curvature, center } => {
                let d = t - center;
                0.5 * curvature * d * d
            }
            PieceKind::QuadLogCosh { center } => {
                let d = t - center;
                0.5 * d * d + log_cosh(d)
            }
            PieceKind::Custom { f, .. } => f(t),
        }
    }

    pub fn deriv(&self, t: f64) -> f64 {
        match &self.kind {
            PieceKind::Quadratic { curvature, center } => curvature * (t - center),
            PieceKind::QuadLogCosh { center } => {
                let d = t - center;
                d + d.tanh()
            }
            PieceKind::Custom { df, .. } => df(t),
        }
    }

    pub fn minimizer(&self) -> f64 {
        match &self.kind {
            PieceKind::Quadratic { center, .. } | PieceKind::QuadLogCosh { center } => *center,
            PieceKind::Custom { minimizer, .. } => *minimizer,
        }
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }
}

impl fmt::Debug for Piece {
    fn fmt(&self, w: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            PieceKind::Quadratic { curvature, center } => {
                write!(w, "Quadratic(curvature={curvature}, center={center})")
            }
            PieceKind::QuadLogCosh { center } => write!(w, "QuadLogCosh(center={center})"),
            PieceKind::Custom { minimizer, .. } => {
                write!(w, "Custom(mu={}, L={}, minimizer={minimizer})", self.mu, self.lipschitz)
            }
        }
    }
}

enum Form {
    Gaussian {
        precision: DMatrix<f64>,
        mean: DVector<f64>,
        /// Cholesky of the precision, for exact sampling.
        chol: Cholesky<f64, Dyn>,
    },
    Separable {
        pieces: Vec<Piece>,
    },
    Custom {
        f: ScalarFn,
        grad: GradFn,
    },
}

/// Immutable target density; shareable read-only across threads.
pub struct TargetDensity {
    form: Form,
    dim: usize,
    mu: f64,
    lipschitz: f64,
    mode: Vec<f64>,
    log_normalizer: Option<f64>,
}

impl fmt::Debug for TargetDensity {
    fn fmt(&self, w: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            w,
            "TargetDensity(family={}, dim={}, mu={}, L={})",
            self.family(),
            self.dim,
            self.mu,
            self.lipschitz
        )
    }
}

impl TargetDensity {
    /// Gaussian target from dense precision rows and a mean vector.
    ///
    /// Rejects non-symmetric input (naming the offending entry pair) and
    /// non-positive-definite input (naming the smallest eigenvalue).
    pub fn gaussian(precision_rows: Vec<Vec<f64>>, mean: Vec<f64>) -> Result<Self> {
        let n = precision_rows.len();
        if n == 0 {
            return Err(Error::domain("empty precision matrix"));
        }
        for (i, row) in precision_rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::DimensionMismatch { expected: n, got: row.len() });
            }
            let _ = i;
        }
        let precision = DMatrix::from_fn(n, n, |i, j| precision_rows[i][j]);
        Self::gaussian_dmatrix(precision, DVector::from_vec(mean))
    }

    pub fn gaussian_dmatrix(precision: DMatrix<f64>, mean: DVector<f64>) -> Result<Self> {
        let n = precision.nrows();
        if precision.ncols() != n {
            return Err(Error::DimensionMismatch { expected: n, got: precision.ncols() });
        }
        if mean.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: mean.len() });
        }
        let scale = precision.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for i in 0..n {
            for j in (i + 1)..n {
                let a = precision[(i, j)];
                let b = precision[(j, i)];
                if (a - b).abs() > SYMMETRY_RTOL * scale.max(1.0) {
                    return Err(Error::NotSymmetric { i, j, a, b });
                }
            }
        }
        // average away representational noise before factorizing
        let sym = DMatrix::from_fn(n, n, |i, j| 0.5 * (precision[(i, j)] + precision[(j, i)]));
        let eigen = sym.clone().symmetric_eigen();
        let mut mu = f64::INFINITY;
        let mut lipschitz = f64::NEG_INFINITY;
        for &ev in eigen.eigenvalues.iter() {
            mu = mu.min(ev);
            lipschitz = lipschitz.max(ev);
        }
        if !(mu > 0.0) || !lipschitz.is_finite() {
            return Err(Error::NotPositiveDefinite { eigenvalue: mu });
        }
        let chol = Cholesky::new(sym.clone())
            .ok_or(Error::NotPositiveDefinite { eigenvalue: mu })?;
        let log_det: f64 = eigen.eigenvalues.iter().map(|&ev| ev.ln()).sum();
        let log_normalizer =
            0.5 * (n as f64) * (2.0 * std::f64::consts::PI).ln() - 0.5 * log_det;
        Ok(TargetDensity {
            dim: n,
            mu,
            lipschitz,
            mode: mean.iter().copied().collect(),
            log_normalizer: Some(log_normalizer),
            form: Form::Gaussian { precision: sym, mean, chol },
        })
    }

    /// Separable target `f(x) = sum_i g_i(x_i)`.
    pub fn separable(pieces: Vec<Piece>) -> Result<Self> {
        if pieces.is_empty() {
            return Err(Error::domain("separable target needs at least one piece"));
        }
        for (index, p) in pieces.iter().enumerate() {
            if !(p.mu > 0.0 && p.lipschitz >= p.mu) {
                return Err(Error::InvalidPiece { index, mu: p.mu, lipschitz: p.lipschitz });
            }
        }
        let mu = pieces.iter().map(|p| p.mu).fold(f64::INFINITY, f64::min);
        let lipschitz = pieces.iter().map(|p| p.lipschitz).fold(0.0f64, f64::max);
        let mode = pieces.iter().map(|p| p.minimizer()).collect();
        Ok(TargetDensity {
            dim: pieces.len(),
            mu,
            lipschitz,
            mode,
            log_normalizer: None,
            form: Form::Separable { pieces },
        })
    }

    /// Custom target with declared curvature bounds. The mode is located at
    /// construction by gradient descent with step `1/L` from `start`
    /// (origin when `None`).
    pub fn custom<F, G>(
        dim: usize,
        f: F,
        grad: G,
        mu: f64,
        lipschitz: f64,
        start: Option<Vec<f64>>,
    ) -> Result<Self>
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
        G: Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        if !(mu > 0.0 && lipschitz >= mu && lipschitz.is_finite()) {
            return Err(Error::InvalidCurvature { mu, lipschitz });
        }
        if dim == 0 {
            return Err(Error::domain("dimension must be positive"));
        }
        let x0 = start.unwrap_or_else(|| vec![0.0; dim]);
        if x0.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: x0.len() });
        }
        let tol = MODE_TOL_COEFF * (dim as f64).sqrt();
        let mode = descend(&grad, x0, lipschitz, tol)?;
        Ok(TargetDensity {
            dim,
            mu,
            lipschitz,
            mode,
            log_normalizer: None,
            form: Form::Custom { f: Arc::new(f), grad: Arc::new(grad) },
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn kappa(&self) -> f64 {
        self.lipschitz / self.mu
    }

    pub fn mode(&self) -> &[f64] {
        &self.mode
    }

    /// `log Z` when known in closed form (Gaussian family).
    pub fn log_normalizer(&self) -> Option<f64> {
        self.log_normalizer
    }

    pub fn family(&self) -> &'static str {
        match self.form {
            Form::Gaussian { .. } => "gaussian",
            Form::Separable { .. } => "separable",
            Form::Custom { .. } => "custom",
        }
    }

    pub fn f(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        match &self.form {
            Form::Gaussian { precision, mean, .. } => {
                let mut acc = 0.0;
                for i in 0..self.dim {
                    let di = x[i] - mean[i];
                    for j in 0..self.dim {
                        acc += di * precision[(i, j)] * (x[j] - mean[j]);
                    }
                }
                0.5 * acc
            }
            Form::Separable { pieces } => {
                pieces.iter().zip(x).map(|(p, &t)| p.eval(t)).sum()
            }
            Form::Custom { f, .. } => f(x),
        }
    }

    pub fn grad(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.dim);
        match &self.form {
            Form::Gaussian { precision, mean, .. } => {
                let mut g = vec![0.0; self.dim];
                for (i, gi) in g.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for j in 0..self.dim {
                        acc += precision[(i, j)] * (x[j] - mean[j]);
                    }
                    *gi = acc;
                }
                g
            }
            Form::Separable { pieces } => {
                pieces.iter().zip(x).map(|(p, &t)| p.deriv(t)).collect()
            }
            Form::Custom { grad, .. } => grad(x),
        }
    }

    /// Gaussian parts `(precision, mean)` when the target is Gaussian.
    pub fn gaussian_parts(&self) -> Option<(&DMatrix<f64>, &DVector<f64>)> {
        match &self.form {
            Form::Gaussian { precision, mean, .. } => Some((precision, mean)),
            _ => None,
        }
    }

    pub fn pieces(&self) -> Option<&[Piece]> {
        match &self.form {
            Form::Separable { pieces } => Some(pieces),
            _ => None,
        }
    }

    /// Exact draw from a Gaussian target: `x = mean + R^{-1} z` where the
    /// precision factors as `R' R` and `z` is standard normal.
    pub fn sample_exact(&self, rng: &mut CrateRng) -> Result<Vec<f64>> {
        match &self.form {
            Form::Gaussian { mean, chol, .. } => {
                let z = DVector::from_fn(self.dim, |_, _| rng.sample::<f64, _>(StandardNormal));
                // chol.l() gives P = L L'; solve L' x = z so x has covariance P^{-1}
                let mut x = z;
                chol.l().transpose().solve_upper_triangular_mut(&mut x);
                Ok((x + mean).iter().copied().collect())
            }
            _ => Err(Error::domain("exact sampling is only available for Gaussian targets")),
        }
    }

    /// `log Z` by closed form when available, otherwise by quadrature
    /// (separable: per-piece line integrals; custom: tensor quadrature,
    /// dimension at most 3).
    pub fn log_partition(&self) -> Result<f64> {
        if let Some(z) = self.log_normalizer {
            return Ok(z);
        }
        match &self.form {
            Form::Separable { pieces } => {
                let mut acc = 0.0;
                for p in pieces {
                    let t0 = p.minimizer();
                    let g0 = p.eval(t0);
                    let w = 14.0 / p.mu.sqrt();
                    let z =
                        integrate_adaptive(|t| (-(p.eval(t) - g0)).exp(), t0 - w, t0 + w, 1e-12);
                    acc += z.ln() - g0;
                }
                Ok(acc)
            }
            Form::Custom { .. } => {
                if self.dim > 3 {
                    return Err(Error::domain(
                        "quadrature normalizer supports dimension at most 3",
                    ));
                }
                let w = 14.0 / self.mu.sqrt();
                let lo: Vec<f64> = self.mode.iter().map(|&m| m - w).collect();
                let hi: Vec<f64> = self.mode.iter().map(|&m| m + w).collect();
                let f0 = self.f(&self.mode);
                let rule = GlRule::new(32);
                let z = integrate_box_composite(&rule, |p| (-(self.f(p) - f0)).exp(), &lo, &hi, 6)?;
                Ok(z.ln() - f0)
            }
            Form::Gaussian { .. } => unreachable!("gaussian normalizer is closed-form"),
        }
    }
}

fn descend<G: Fn(&[f64]) -> Vec<f64>>(
    grad: &G,
    mut x: Vec<f64>,
    lipschitz: f64,
    tol: f64,
) -> Result<Vec<f64>> {
    let step = 1.0 / lipschitz;
    let mut iters = 0;
    loop {
        let g = grad(&x);
        let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm <= tol {
            return Ok(x);
        }
        if iters >= MODE_MAX_ITERS {
            return Err(Error::ModeSearchFailed { tol, grad_norm: norm, iters, best: x });
        }
        for (xi, gi) in x.iter_mut().zip(&g) {
            *xi -= step * gi;
        }
        iters += 1;
    }
}

/// Locate the mode. Gaussian targets solve the Newton system exactly;
/// other families run gradient descent with step `1/L` from `start`
/// (origin when `None`). Default tolerance is `1e-10 * sqrt(n)` on the
/// gradient norm.
pub fn find_mode(target: &TargetDensity, tol: Option<f64>, start: Option<Vec<f64>>) -> Result<Vec<f64>> {
    let tol = tol.unwrap_or(MODE_TOL_COEFF * (target.dim as f64).sqrt());
    if !(tol > 0.0) {
        return Err(Error::domain("mode tolerance must be positive"));
    }
    match &target.form {
        Form::Gaussian { mean, .. } => Ok(mean.iter().copied().collect()),
        _ => {
            let x0 = start.unwrap_or_else(|| vec![0.0; target.dim]);
            if x0.len() != target.dim {
                return Err(Error::DimensionMismatch { expected: target.dim, got: x0.len() });
            }
            descend(&|x: &[f64]| target.grad(x), x0, target.lipschitz, tol)
        }
    }
}

/// Report from probing curvature and gradient consistency.
#[derive(Debug, Clone)]
pub struct ConvexityReport {
    pub pairs: usize,
    /// Smallest observed Bregman curvature ratio
    /// `2 (f(y) - f(x) - <grad f(x), y - x>) / |y - x|^2`.
    pub min_ratio: f64,
    pub max_ratio: f64,
    pub declared_mu: f64,
    pub declared_lipschitz: f64,
    pub within_bounds: bool,
    /// A pair violating the declared bounds, when one exists.
    pub witness: Option<(Vec<f64>, Vec<f64>, f64)>,
    /// Max over probe points of
    /// `|fd_grad - grad| / (1 + |grad|)` with central differences.
    pub grad_max_rel_err: f64,
    pub grad_points: usize,
}

/// Tolerance multiplier on the declared `[mu, L]` window, to absorb the
/// floating-point error of the ratio itself.
const BREGMAN_RTOL: f64 = 1e-7;

/// Probe `pairs` random point pairs from a Gaussian cloud of scale
/// `3/sqrt(mu)` around the mode, plus gradient finite differences at
/// `max(100, pairs/100)` points.
pub fn check_convexity_smoothness(
    target: &TargetDensity,
    pairs: usize,
    seed: u64,
) -> ConvexityReport {
    let mut rng = seeded(seed);
    let n = target.dim;
    let scale = 3.0 / target.mu.sqrt();
    let draw = |rng: &mut CrateRng| -> Vec<f64> {
        (0..n)
            .map(|i| target.mode[i] + scale * rng.sample::<f64, _>(StandardNormal))
            .collect()
    };

    let mut min_ratio = f64::INFINITY;
    let mut max_ratio = f64::NEG_INFINITY;
    let mut witness = None;
    for _ in 0..pairs {
        let x = draw(&mut rng);
        let y = draw(&mut rng);
        let dist2: f64 = x.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum();
        if dist2 < 1e-24 {
            continue;
        }
        let gx = target.grad(&x);
        let inner: f64 = gx.iter().zip(y.iter().zip(&x)).map(|(g, (yi, xi))| g * (yi - xi)).sum();
        let ratio = 2.0 * (target.f(&y) - target.f(&x) - inner) / dist2;
        if ratio < min_ratio {
            min_ratio = ratio;
        }
        if ratio > max_ratio {
            max_ratio = ratio;
        }
        let lo_ok = ratio >= target.mu * (1.0 - BREGMAN_RTOL) - BREGMAN_RTOL;
        let hi_ok = ratio <= target.lipschitz * (1.0 + BREGMAN_RTOL) + BREGMAN_RTOL;
        if !(lo_ok && hi_ok) && witness.is_none() {
            witness = Some((x.clone(), y.clone(), ratio));
        }
    }

    let grad_points = 100.max(pairs / 100);
    let mut grad_max_rel_err: f64 = 0.0;
    for _ in 0..grad_points {
        let x = draw(&mut rng);
        let g = target.grad(&x);
        let gnorm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut err2 = 0.0;
        let mut xp = x.clone();
        for i in 0..n {
            let h = 1e-5 * (1.0 + x[i].abs());
            xp[i] = x[i] + h;
            let fp = target.f(&xp);
            xp[i] = x[i] - h;
            let fm = target.f(&xp);
            xp[i] = x[i];
            let fd = (fp - fm) / (2.0 * h);
            err2 += (fd - g[i]) * (fd - g[i]);
        }
        grad_max_rel_err = grad_max_rel_err.max(err2.sqrt() / (1.0 + gnorm));
    }

    ConvexityReport {
        pairs,
        min_ratio,
        max_ratio,
        declared_mu: target.mu,
        declared_lipschitz: target.lipschitz,
        within_bounds: witness.is_none(),
        witness,
        grad_max_rel_err,
        grad_points,
    }
}
