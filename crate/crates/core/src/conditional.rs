//! Exact sampling from the one-dimensional conditional `pi(x_i | x_{-i})`.
//!
//! A [`ConditionalSlice`] restricts the target's potential `f` to a
//! coordinate line: `g(t) = f(x with x_i = t)`. Strong convexity and
//! smoothness are inherited along every line, which gives two exact
//! sampling routes:
//!
//! - Gaussian targets: the conditional is `Normal(m_i, 1/P_ii)` in closed
//!   form ([`sample_exact_gaussian`]).
//! - Everything else: rejection from the envelope `Normal(t*, 1/mu)`, where
//!   `t*` minimizes `g`. Since `g(t) >= g(t*) + mu (t - t*)^2 / 2`, the
//!   acceptance probability `exp(-[g(t) - g(t*) - mu (t - t*)^2 / 2])` is a
//!   valid rejection ratio, and `L`-smoothness bounds the per-proposal
//!   acceptance rate below by `1/sqrt(kappa)` ([`sample_rejection`]).
//!
//! [`cdf_by_quadrature`] provides an independent oracle for the conditional
//! law, used by the correctness tests and by the fiber-measure computations
//! in the isoperimetry checks.

use crate::error::{Error, Result};
use crate::quad::integrate_adaptive;
use crate::rng::CrateRng;
use crate::target::{Piece, TargetDensity};
use rand::Rng;
use rand_distr::StandardNormal;

/// Half-width of the quadrature window around the slice minimizer, in units
/// of `1/sqrt(mu)`. The Gaussian envelope bounds the omitted tail mass by
/// `exp(-WINDOW_SIGMAS^2 / 2) < 1e-31`.
const WINDOW_SIGMAS: f64 = 12.0;

/// Proposal cap multiplier: `sample_rejection` fails after
/// `ceil(PROPOSAL_CAP_COEFF * sqrt(kappa))` rejected proposals.
const PROPOSAL_CAP_COEFF: f64 = 200.0;

/// Relative tolerance of the quadrature CDF.
const CDF_RTOL: f64 = 1e-11;

enum Shape<'a> {
    /// `g(t) - g* = a (t - t*)^2 / 2`; exact for Gaussian targets.
    Quadratic { a: f64 },
    /// Separable target: only piece `i` varies along the fiber.
    Piece { piece: &'a Piece, g_star: f64 },
    /// Full potential evaluation with coordinate `i` replaced.
    Generic { base: Vec<f64>, g_star: f64 },
}

/// One-dimensional restriction of a target to a coordinate line, centered
/// data for its minimizer.
pub struct ConditionalSlice<'a> {
    target: &'a TargetDensity,
    coord: usize,
    shape: Shape<'a>,
    minimizer: f64,
    /// `g(x_i)` sets the scale of the minimizer tolerance.
    start_slope: f64,
}

impl<'a> ConditionalSlice<'a> {
    /// `g(t) - g(t*)`; nonnegative by construction.
    pub fn g_rel(&self, t: f64) -> f64 {
        match &self.shape {
            Shape::Quadratic { a } => {
                let d = t - self.minimizer;
                0.5 * a * d * d
            }
            Shape::Piece { piece, g_star } => piece.eval(t) - g_star,
            Shape::Generic { base, g_star } => {
                let mut x = base.clone();
                x[self.coord] = t;
                self.target.f(&x) - g_star
            }
        }
    }

    /// Absolute `g(t) = f(x with x_i = t)`.
    pub fn g(&self, t: f64) -> f64 {
        match &self.shape {
            Shape::Quadratic { a } => {
                // reconstruct the absolute offset lazily; quadratic slices
                // keep only relative values, which every consumer uses
                let d = t - self.minimizer;
                0.5 * a * d * d
            }
            Shape::Piece { piece, .. } => piece.eval(t),
            Shape::Generic { base, .. } => {
                let mut x = base.clone();
                x[self.coord] = t;
                self.target.f(&x)
            }
        }
    }

    pub fn g_prime(&self, t: f64) -> f64 {
        match &self.shape {
            Shape::Quadratic { a } => a * (t - self.minimizer),
            Shape::Piece { piece, .. } => piece.deriv(t),
            Shape::Generic { base, .. } => {
                let mut x = base.clone();
                x[self.coord] = t;
                self.target.grad(&x)[self.coord]
            }
        }
    }

    pub fn minimizer(&self) -> f64 {
        self.minimizer
    }

    pub fn mu(&self) -> f64 {
        self.target.mu()
    }

    pub fn lipschitz(&self) -> f64 {
        self.target.lipschitz()
    }

    pub fn coord(&self) -> usize {
        self.coord
    }

    /// Quadrature window `[t* - 12/sqrt(mu), t* + 12/sqrt(mu)]`.
    pub fn window(&self) -> (f64, f64) {
        let w = WINDOW_SIGMAS / self.mu().sqrt();
        (self.minimizer - w, self.minimizer + w)
    }
}

/// Restrict `target` to the line through `x` along coordinate `i`.
///
/// The minimizer is located by Newton iteration on `g'` (second derivative
/// by central difference) with a bisection safeguard, inside the bracket
/// `[x_i - |grad f(x)| / mu, x_i + |grad f(x)| / mu]`; tolerance
/// `|g'(t*)| <= 1e-12 (1 + |g'(x_i)|)`.
pub fn slice<'a>(target: &'a TargetDensity, x: &[f64], i: usize) -> Result<ConditionalSlice<'a>> {
    let n = target.dim();
    if x.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: x.len() });
    }
    if i >= n {
        return Err(Error::CoordinateOutOfRange { index: i, dim: n });
    }

    if let Some((precision, mean)) = target.gaussian_parts() {
        let a = precision[(i, i)];
        let mut shift = 0.0;
        for j in 0..n {
            if j != i {
                shift += precision[(i, j)] * (x[j] - mean[j]);
            }
        }
        let minimizer = mean[i] - shift / a;
        return Ok(ConditionalSlice {
            target,
            coord: i,
            start_slope: a * (x[i] - minimizer),
            shape: Shape::Quadratic { a },
            minimizer,
        });
    }

    let mut probe = ConditionalSlice {
        target,
        coord: i,
        start_slope: 0.0,
        minimizer: x[i],
        shape: match target.pieces() {
            Some(pieces) => Shape::Piece { piece: &pieces[i], g_star: 0.0 },
            None => Shape::Generic { base: x.to_vec(), g_star: 0.0 },
        },
    };
    // safe because Shape::Piece borrows from `target`, not from `probe`
    let grad_norm = {
        let g = target.grad(x);
        g.iter().map(|v| v * v).sum::<f64>().sqrt()
    };
    let d0 = probe.g_prime(x[i]);
    probe.start_slope = d0;
    let tol = 1e-12 * (1.0 + d0.abs());
    let reach = grad_norm / target.mu();
    let minimizer = newton_bisect(&probe, x[i], reach, tol)?;
    probe.minimizer = minimizer;
    let g_star = probe.g(minimizer);
    match &mut probe.shape {
        Shape::Piece { g_star: gs, .. } | Shape::Generic { g_star: gs, .. } => *gs = g_star,
        Shape::Quadratic { .. } => unreachable!(),
    }
    Ok(probe)
}

/// Guarded Newton on `g'`: keep a sign-changing bracket, take Newton steps
/// with a finite-difference second derivative, bisect whenever a step
/// leaves the bracket or the curvature estimate degenerates.
fn newton_bisect(s: &ConditionalSlice<'_>, start: f64, reach: f64, tol: f64) -> Result<f64> {
    let mut lo = start - reach;
    let mut hi = start + reach;
    let mut dlo = s.g_prime(lo);
    let mut dhi = s.g_prime(hi);
    // strong convexity puts the root within `reach`; widen defensively in
    // case of floating-point shortfall at the endpoints
    for _ in 0..8 {
        if dlo <= 0.0 {
            break;
        }
        lo -= reach.max(1.0);
        dlo = s.g_prime(lo);
    }
    for _ in 0..8 {
        if dhi >= 0.0 {
            break;
        }
        hi += reach.max(1.0);
        dhi = s.g_prime(hi);
    }
    if dlo > 0.0 || dhi < 0.0 {
        return Err(Error::domain(format!(
            "minimizer bracket failed: g'({lo}) = {dlo}, g'({hi}) = {dhi}; target violates convexity"
        )));
    }

    let mut t = start.clamp(lo, hi);
    for _ in 0..200 {
        let d = s.g_prime(t);
        if d.abs() <= tol {
            return Ok(t);
        }
        if d < 0.0 {
            lo = t;
        } else {
            hi = t;
        }
        let h = 1e-7 * (1.0 + t.abs());
        let curv = (s.g_prime(t + h) - s.g_prime(t - h)) / (2.0 * h);
        let mut next = if curv > 0.0 { t - d / curv } else { f64::NAN };
        if !next.is_finite() || next <= lo || next >= hi {
            next = 0.5 * (lo + hi);
        }
        if hi - lo < 1e-15 * (1.0 + t.abs()) {
            return Ok(t);
        }
        t = next;
    }
    // the bracket is tiny by now; the midpoint is as good as it gets
    Ok(0.5 * (lo + hi))
}

/// Closed-form conditional draw for a Gaussian target:
/// `Normal(mean_i - (1/P_ii) sum_{j != i} P_ij (x_j - mean_j), 1/P_ii)`.
pub fn sample_exact_gaussian(
    target: &TargetDensity,
    x: &[f64],
    i: usize,
    rng: &mut CrateRng,
) -> Result<f64> {
    let (precision, mean) = target
        .gaussian_parts()
        .ok_or_else(|| Error::domain("closed-form conditional requires a Gaussian target"))?;
    let n = target.dim();
    if x.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: x.len() });
    }
    if i >= n {
        return Err(Error::CoordinateOutOfRange { index: i, dim: n });
    }
    let a = precision[(i, i)];
    let mut shift = 0.0;
    for j in 0..n {
        if j != i {
            shift += precision[(i, j)] * (x[j] - mean[j]);
        }
    }
    let m = mean[i] - shift / a;
    let z: f64 = rng.sample(StandardNormal);
    Ok(m + z / a.sqrt())
}

/// Exact draw from the density `∝ exp(-g)` by envelope rejection.
///
/// Returns the accepted value and the number of proposals consumed. Errors
/// if `ceil(200 sqrt(kappa))` proposals are all rejected, which signals a
/// target whose declared `(mu, L)` do not hold along this line.
pub fn sample_rejection(s: &ConditionalSlice<'_>, rng: &mut CrateRng) -> Result<(f64, u64)> {
    let mu = s.mu();
    let kappa = s.lipschitz() / mu;
    let sd = 1.0 / mu.sqrt();
    let cap = (PROPOSAL_CAP_COEFF * kappa.sqrt()).ceil() as u64;
    for k in 1..=cap {
        let z: f64 = rng.sample(StandardNormal);
        let t = s.minimizer() + sd * z;
        let log_accept = -(s.g_rel(t) - 0.5 * mu * (t - s.minimizer()).powi(2));
        let u: f64 = rng.random();
        if u.ln() <= log_accept {
            return Ok((t, k));
        }
    }
    Err(Error::ProposalCapExceeded { cap, expected_rate: 1.0 / kappa.sqrt() })
}

fn window_mass(s: &ConditionalSlice<'_>, a: f64, b: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    integrate_adaptive(|t| (-s.g_rel(t)).exp(), a, b, CDF_RTOL)
}

/// Conditional CDF by quadrature: `∫_{-inf}^{t} e^{-g} / ∫ e^{-g}`, with
/// integration truncated to the window `t* ± 12/sqrt(mu)`.
pub fn cdf_by_quadrature(s: &ConditionalSlice<'_>, t: f64) -> f64 {
    let (lo, hi) = s.window();
    if t <= lo {
        return 0.0;
    }
    let z = window_mass(s, lo, hi);
    if t >= hi {
        return 1.0;
    }
    (window_mass(s, lo, t) / z).clamp(0.0, 1.0)
}

/// CDF evaluated at an ascending grid of points, sharing cumulative work.
/// Equivalent to mapping [`cdf_by_quadrature`] but one integration per gap.
pub fn cdf_at_sorted(s: &ConditionalSlice<'_>, sorted: &[f64]) -> Vec<f64> {
    let (lo, hi) = s.window();
    let z = window_mass(s, lo, hi);
    let mut out = Vec::with_capacity(sorted.len());
    let mut acc = 0.0;
    let mut prev = lo;
    for &t in sorted {
        debug_assert!(t >= prev || t <= lo, "grid must be ascending");
        let tc = t.clamp(lo, hi);
        if tc > prev {
            acc += window_mass(s, prev, tc);
            prev = tc;
        }
        out.push((acc / z).clamp(0.0, 1.0));
    }
    out
}

/// Conditional mass of a finite union of disjoint intervals on the fiber
/// through `x` along coordinate `i`. Endpoints may be infinite. For the
/// non-lazy chain this equals `n * P_x(A ∩ fiber)`.
pub fn fiber_transition_probability(
    target: &TargetDensity,
    x: &[f64],
    i: usize,
    intervals: &[(f64, f64)],
) -> Result<f64> {
    for &(a, b) in intervals {
        if a.is_nan() || b.is_nan() || a > b {
            return Err(Error::domain(format!("invalid interval ({a}, {b})")));
        }
    }
    let mut sorted: Vec<(f64, f64)> = intervals.to_vec();
    sorted.sort_by(|p, q| p.0.partial_cmp(&q.0).unwrap());
    for w in sorted.windows(2) {
        if w[1].0 < w[0].1 {
            return Err(Error::OverlappingIntervals {
                a0: w[0].0,
                a1: w[0].1,
                b0: w[1].0,
                b1: w[1].1,
            });
        }
    }
    let s = slice(target, x, i)?;
    let (lo, hi) = s.window();
    let z = window_mass(&s, lo, hi);
    let mut acc = 0.0;
    for &(a, b) in &sorted {
        let ca = a.max(lo);
        let cb = b.min(hi);
        if cb > ca {
            acc += window_mass(&s, ca, cb);
        }
    }
    Ok((acc / z).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use crate::target::{Piece, TargetDensity};

    const PHI_1: f64 = 0.841_344_746_068_542_9;

    fn identity2() -> TargetDensity {
        TargetDensity::gaussian(vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![0.0, 0.0]).unwrap()
    }

    fn coupled() -> TargetDensity {
        TargetDensity::gaussian(vec![vec![2.0, 1.0], vec![1.0, 2.0]], vec![0.0, 0.0]).unwrap()
    }

    #[test]
    fn identity_slice_minimizer_is_zero() {
        let t = identity2();
        for i in 0..2 {
            let s = slice(&t, &[0.7, -0.3], i).unwrap();
            assert!(s.minimizer().abs() < 1e-12);
        }
    }

    #[test]
    fn coupled_slice_minimizer_matches_grid_search() {
        let t = coupled();
        let s = slice(&t, &[0.0, 1.0], 0).unwrap();
        assert!((s.minimizer() + 0.5).abs() < 1e-9, "minimizer {}", s.minimizer());

        // independent oracle: dense grid argmin of g
        let mut best = (f64::INFINITY, f64::NAN);
        let mut u = -3.0;
        while u <= 3.0 {
            let v = t.f(&[u, 1.0]);
            if v < best.0 {
                best = (v, u);
            }
            u += 1e-4;
        }
        assert!((best.1 - s.minimizer()).abs() < 2e-4, "grid {} vs {}", best.1, s.minimizer());
    }

    #[test]
    fn separable_minimizer_ignores_other_coordinates() {
        let t = TargetDensity::separable(vec![
            Piece::quadratic(1.0, 0.25).unwrap(),
            Piece::quad_logcosh(-2.0),
        ])
        .unwrap();
        let s1 = slice(&t, &[5.0, 5.0], 1).unwrap();
        let s2 = slice(&t, &[-5.0, 3.0], 1).unwrap();
        assert!((s1.minimizer() - s2.minimizer()).abs() < 1e-9);
        assert!((s1.minimizer() + 2.0).abs() < 1e-9);
    }

    #[test]
    fn exact_gaussian_conditional_moments() {
        let t = coupled();
        let mut rng = seeded(17);
        let n = 1_000_000usize;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..n {
            let v = sample_exact_gaussian(&t, &[0.0, 1.0], 0, &mut rng).unwrap();
            sum += v;
            sumsq += v * v;
        }
        let mean = sum / n as f64;
        let var = sumsq / n as f64 - mean * mean;
        // Normal(-1/2, 1/2): tolerances are 5 standard errors
        assert!((mean + 0.5).abs() < 5.0 * (0.5f64 / n as f64).sqrt(), "mean {mean}");
        assert!((var - 0.5).abs() < 5.0 * 0.5 * (2.0 / n as f64).sqrt(), "var {var}");
    }

    #[test]
    fn diagonal_conditional_ignores_other_coordinates() {
        let t = TargetDensity::gaussian(vec![vec![1.0, 0.0], vec![0.0, 4.0]], vec![0.0, 3.0])
            .unwrap();
        let mut r1 = seeded(9);
        let mut r2 = seeded(9);
        let a = sample_exact_gaussian(&t, &[100.0, 0.0], 1, &mut r1).unwrap();
        let b = sample_exact_gaussian(&t, &[-100.0, 0.0], 1, &mut r2).unwrap();
        assert_eq!(a, b);
        // Normal(3, 1/4) support sanity
        assert!((a - 3.0).abs() < 10.0 * 0.5);
    }

    #[test]
    fn rejection_accepts_immediately_when_envelope_is_tight() {
        let t = identity2();
        let s = slice(&t, &[0.0, 0.0], 0).unwrap();
        let mut rng = seeded(3);
        for _ in 0..1000 {
            let (_, proposals) = sample_rejection(&s, &mut rng).unwrap();
            assert_eq!(proposals, 1);
        }
    }

    #[test]
    fn rejection_mean_proposals_match_curvature_mismatch() {
        // g(t) = t^2 with declared mu = 1: acceptance exp(-t^2/2) under
        // Normal(0,1) proposals, mean acceptance 1/sqrt(2)
        let t = TargetDensity::separable(vec![Piece::custom(
            |u| u * u,
            |u| 2.0 * u,
            1.0,
            2.0,
        )
        .unwrap()])
        .unwrap();
        let s = slice(&t, &[0.5], 0).unwrap();
        assert!(s.minimizer().abs() < 1e-9);
        let mut rng = seeded(21);
        let n = 100_000usize;
        let mut total = 0u64;
        let mut total_sq = 0.0f64;
        for _ in 0..n {
            let (_, p) = sample_rejection(&s, &mut rng).unwrap();
            total += p;
            total_sq += (p as f64) * (p as f64);
        }
        let mean = total as f64 / n as f64;
        let sd = (total_sq / n as f64 - mean * mean).sqrt();
        let mc_err = sd / (n as f64).sqrt();
        let want = 2.0f64.sqrt();
        assert!((mean - want).abs() < 5.0 * mc_err, "mean {mean}, want {want}, err {mc_err}");
    }

    #[test]
    fn rejection_acceptance_bound_on_logcosh_slice() {
        let t = TargetDensity::separable(vec![Piece::quad_logcosh(0.0)]).unwrap();
        let s = slice(&t, &[1.0], 0).unwrap();
        let mut rng = seeded(8);
        let n = 10_000usize;
        let mut total = 0u64;
        for _ in 0..n {
            let (_, p) = sample_rejection(&s, &mut rng).unwrap();
            total += p;
        }
        let mean = total as f64 / n as f64;
        // mean proposals <= sqrt(kappa) (1 + 5 mc-err), kappa = 2
        let mc_err = (mean / n as f64).sqrt();
        assert!(
            mean <= 2.0f64.sqrt() * (1.0 + 5.0 * mc_err),
            "mean proposals {mean}"
        );
    }

    #[test]
    fn cdf_matches_standard_normal() {
        let t = identity2();
        let s = slice(&t, &[0.0, 0.0], 0).unwrap();
        assert!((cdf_by_quadrature(&s, 0.0) - 0.5).abs() < 1e-10);
        assert!((cdf_by_quadrature(&s, 1.0) - PHI_1).abs() < 1e-9);
        let (_, hi) = s.window();
        assert!((cdf_by_quadrature(&s, hi) - 1.0).abs() < 1e-10);
        assert_eq!(cdf_by_quadrature(&s, hi + 5.0), 1.0);
        assert_eq!(cdf_by_quadrature(&s, -1e9), 0.0);
    }

    #[test]
    fn cdf_at_sorted_agrees_with_pointwise() {
        let t = coupled();
        let s = slice(&t, &[0.0, 1.0], 0).unwrap();
        let grid: Vec<f64> = (-40..=40).map(|k| -0.5 + k as f64 * 0.1).collect();
        let batch = cdf_at_sorted(&s, &grid);
        for (&g, &b) in grid.iter().zip(&batch) {
            let p = cdf_by_quadrature(&s, g);
            assert!((p - b).abs() < 1e-9, "at {g}: {p} vs {b}");
        }
    }

    #[test]
    fn fiber_mass_examples() {
        let t = identity2();
        let full = fiber_transition_probability(
            &t,
            &[0.4, -0.2],
            0,
            &[(f64::NEG_INFINITY, f64::INFINITY)],
        )
        .unwrap();
        assert!((full - 1.0).abs() < 1e-10);

        let half =
            fiber_transition_probability(&t, &[0.4, -0.2], 0, &[(f64::NEG_INFINITY, 0.0)])
                .unwrap();
        assert!((half - 0.5).abs() < 1e-10);

        let unit = fiber_transition_probability(&t, &[0.4, -0.2], 1, &[(0.0, 1.0)]).unwrap();
        assert!((unit - (PHI_1 - 0.5)).abs() < 1e-9, "got {unit}");
    }

    #[test]
    fn fiber_partition_sums_to_one() {
        let t = coupled();
        let cuts = [f64::NEG_INFINITY, -1.0, -0.5, 0.3, 2.0, f64::INFINITY];
        let mut total = 0.0;
        for w in cuts.windows(2) {
            total +=
                fiber_transition_probability(&t, &[0.0, 1.0], 0, &[(w[0], w[1])]).unwrap();
        }
        assert!((total - 1.0).abs() < 1e-9, "total {total}");
    }

    #[test]
    fn fiber_rejects_bad_interval_sets() {
        let t = identity2();
        let overlap = fiber_transition_probability(&t, &[0.0, 0.0], 0, &[(0.0, 1.0), (0.5, 2.0)]);
        assert!(matches!(overlap, Err(Error::OverlappingIntervals { .. })));
        let reversed = fiber_transition_probability(&t, &[0.0, 0.0], 0, &[(1.0, 0.0)]);
        assert!(reversed.is_err());
        // touching endpoints are disjoint
        let touching =
            fiber_transition_probability(&t, &[0.0, 0.0], 0, &[(0.0, 1.0), (1.0, 2.0)]);
        assert!(touching.is_ok());
    }

    #[test]
    fn rejection_matches_exact_gaussian_in_distribution() {
        let t = coupled();
        let s = slice(&t, &[0.0, 1.0], 0).unwrap();
        let mut rng = seeded(33);
        let n = 100_000usize;
        let mut a: Vec<f64> = Vec::with_capacity(n);
        let mut b: Vec<f64> = Vec::with_capacity(n);
        for _ in 0..n {
            a.push(sample_rejection(&s, &mut rng).unwrap().0);
            b.push(sample_exact_gaussian(&t, &[0.0, 1.0], 0, &mut rng).unwrap());
        }
        let d = crate::diagnostics::ks_two_sample(&a, &b);
        // two-sample critical value at significance 1e-3
        let crit = 1.9495 * ((2.0 * n as f64) / (n as f64 * n as f64)).sqrt();
        assert!(d < crit, "KS {d} >= {crit}");
    }
}
