//! Improved Bennett tail bound and the cluster / fusion-center error bounds
//! derived from it.
//!
//! For independent, zero-mean terms bounded by `M` with average variance
//! `sigma2`, and a deviation `0 < alpha < n M`:
//!
//! ```text
//! A      = M^2 / sigma2 + n M / alpha - 1
//! B      = n M / alpha - 1
//! Lambda = A - W0(B e^A)
//! Pr(sum x_i >= alpha) <= U = exp(-Lambda alpha / M
//!                                 + n ln(1 + sigma2 / M^2 (e^Lambda - 1 - Lambda)))
//! ```
//!
//! `Lambda / M` is the exact minimizer of the Chernoff exponent built from
//! Bennett's moment-generating-function bound, so any rounding in `Lambda`
//! still yields a valid (if slightly looser) bound.
//!
//! `B e^A` overflows for small deviations, so `W0` is evaluated from the
//! logarithm of its argument.

use std::f64::consts::E;

use crate::detection::{fc_term_atoms, ClusterSpec, ErrorPair, Method, SystemSpec};
use crate::distribution::Atom;
use crate::error::{Error, Result};

const INV_E: f64 = 1.0 / E;
const MAX_ITER: usize = 100;

/// Principal branch of the Lambert W function, `w * e^w = x`, `w >= -1`.
pub fn lambert_w0(x: f64) -> Result<f64> {
    if x.is_nan() || x < -INV_E {
        return Err(Error::LambertDomain(x));
    }
    if x == -INV_E {
        return Ok(-1.0);
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x == f64::INFINITY {
        return Ok(f64::INFINITY);
    }
    if x > 1e100 {
        return Ok(w0_of_exp_large(x.ln()));
    }

    let guess = if x < -0.25 {
        // branch-point series in p = sqrt(2 (e x + 1))
        let p = (2.0 * (E * x + 1.0)).max(0.0).sqrt();
        -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p
    } else if x.abs() < 0.1 {
        x * (1.0 - x * (1.0 - 1.5 * x))
    } else if x <= E {
        x.ln_1p() * (1.0 - x.ln_1p().ln_1p() / (2.0 + x.ln_1p()))
    } else {
        let l1 = x.ln();
        let l2 = l1.ln();
        l1 - l2 + l2 / l1
    };
    Ok(halley(guess, x).unwrap_or_else(|| bisect(x)))
}

fn halley(mut w: f64, x: f64) -> Option<f64> {
    for _ in 0..MAX_ITER {
        let ew = w.exp();
        let f = w * ew - x;
        let wp1 = w + 1.0;
        if wp1 == 0.0 {
            return Some(w);
        }
        let denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1);
        let step = f / denom;
        let next = w - step;
        if !next.is_finite() || next < -1.0 {
            return None;
        }
        if step.abs() <= 4.0 * f64::EPSILON * (1.0 + next.abs()) {
            return Some(next);
        }
        w = next;
    }
    None
}

fn bisect(x: f64) -> f64 {
    let mut lo = -1.0;
    let mut hi = if x > E { x.ln() } else { 1.0 };
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if mid * mid.exp() > x {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

// Solves w + ln w = t for large t by Newton iteration.
fn w0_of_exp_large(t: f64) -> f64 {
    let mut w = t - t.ln();
    for _ in 0..MAX_ITER {
        let h = w + w.ln() - t;
        let step = h / (1.0 + 1.0 / w);
        w -= step;
        if step.abs() <= 4.0 * f64::EPSILON * w.abs() {
            break;
        }
    }
    w
}

/// `W0(e^t)` without forming `e^t`.
pub fn lambert_w0_exp(t: f64) -> f64 {
    if t < 200.0 {
        lambert_w0(t.exp()).expect("e^t is nonnegative")
    } else {
        w0_of_exp_large(t)
    }
}

/// Arguments of the bound function `U(n, alpha, M, sigma2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BennettInput {
    pub n: usize,
    pub alpha: f64,
    pub m: f64,
    pub sigma2: f64,
}

impl BennettInput {
    pub fn new(n: usize, alpha: f64, m: f64, sigma2: f64) -> Self {
        Self { n, alpha, m, sigma2 }
    }

    /// `0 < alpha < n M`.
    pub fn in_window(&self) -> bool {
        self.alpha > 0.0 && self.alpha < self.n as f64 * self.m
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundResult {
    /// Upper bound on the tail probability, clamped to `[0, 1]`.
    pub value: f64,
    /// Unclamped value of the bound expression.
    pub raw: f64,
    pub valid: bool,
    pub lambda: f64,
    pub a: f64,
    pub b: f64,
}

impl BoundResult {
    pub fn trivial() -> Self {
        Self {
            value: 1.0,
            raw: 1.0,
            valid: false,
            lambda: 0.0,
            a: f64::NAN,
            b: f64::NAN,
        }
    }
}

// ln(1 + s (e^l - 1 - l)) for l >= 0, s > 0
fn log_mgf_term(l: f64, s: f64) -> f64 {
    if l < 1e-4 {
        let g = l * l * (0.5 + l * (1.0 / 6.0 + l / 24.0));
        (s * g).ln_1p()
    } else if l < 30.0 {
        (s * (l.exp_m1() - l)).ln_1p()
    } else {
        s.ln() + l + ((-l).exp() * (1.0 / s - 1.0 - l)).ln_1p()
    }
}

/// Evaluates `U(n, alpha, M, sigma2)`.
///
/// Outside `0 < alpha < n M` the trivial bound 1 is returned with
/// `valid = false`.
pub fn bennett_u(input: &BennettInput) -> Result<BoundResult> {
    let BennettInput { n, alpha, m, sigma2 } = *input;
    if n == 0 {
        return Err(Error::BoundInput("n must be at least 1".into()));
    }
    if !(m > 0.0 && m.is_finite()) {
        return Err(Error::BoundInput(format!("range bound M = {m} must be positive")));
    }
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(Error::BoundInput(format!("variance {sigma2} must be positive")));
    }
    if alpha.is_nan() {
        return Err(Error::BoundInput("deviation is NaN".into()));
    }
    if !input.in_window() {
        return Ok(BoundResult::trivial());
    }

    let nf = n as f64;
    let ratio = m * m / sigma2;
    let b = nf * m / alpha - 1.0;
    let a = ratio + b;
    let lambda = (a - lambert_w0_exp(b.ln() + a)).max(0.0);
    let exponent = -lambda * alpha / m + nf * log_mgf_term(lambda, 1.0 / ratio);
    let raw = exponent.exp();
    Ok(BoundResult {
        value: raw.clamp(0.0, 1.0),
        raw,
        valid: true,
        lambda,
        a,
        b,
    })
}

fn side_bound(n: usize, alpha: f64, m: f64, sigma2: f64) -> BoundResult {
    if !(m > 0.0 && m.is_finite() && sigma2 > 0.0 && sigma2.is_finite()) || alpha.is_nan() {
        return BoundResult::trivial();
    }
    bennett_u(&BennettInput::new(n, alpha, m, sigma2)).unwrap_or_else(|_| BoundResult::trivial())
}

/// Bounds on both error probabilities of one decision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorBounds {
    pub fa: BoundResult,
    pub md: BoundResult,
}

impl ErrorBounds {
    pub fn error_pair(&self) -> ErrorPair {
        ErrorPair::new(self.fa.value, self.md.value, Method::Bennett)
    }
}

/// Mean, variance and largest deviation from the mean of one term under a
/// single hypothesis. Only atoms with positive probability count toward the
/// deviation.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
struct TermMoments {
    mean: f64,
    var: f64,
    dev: f64,
}

fn moments(atoms: &[(f64, f64)]) -> TermMoments {
    let support = || atoms.iter().filter(|(_, p)| *p > 0.0);
    let mean: f64 = support().map(|(v, p)| p * v).sum();
    let var: f64 = support().map(|(v, p)| p * (v - mean) * (v - mean)).sum();
    let dev = support().map(|(v, _)| (v - mean).abs()).fold(0.0, f64::max);
    TermMoments { mean, var, dev }
}

/// Running sums of per-term moments feeding the two tail bounds: the
/// false-alarm side centers terms under H0, the missed-detection side
/// under H1.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BoundAccumulator {
    n: usize,
    mean0: f64,
    mean1: f64,
    var0: f64,
    var1: f64,
    m_fa: f64,
    m_md: f64,
}

impl BoundAccumulator {
    fn push(&mut self, h0: TermMoments, h1: TermMoments) {
        self.n += 1;
        self.mean0 += h0.mean;
        self.mean1 += h1.mean;
        self.var0 += h0.var;
        self.var1 += h1.var;
        self.m_fa = self.m_fa.max(h0.dev);
        self.m_md = self.m_md.max(h1.dev);
    }

    fn push_atoms(&mut self, atoms: &[Atom]) {
        let h0: Vec<(f64, f64)> = atoms.iter().map(|a| (a.value, a.p0)).collect();
        let h1: Vec<(f64, f64)> = atoms.iter().map(|a| (a.value, a.p1)).collect();
        self.push(moments(&h0), moments(&h1));
    }

    /// Adds one fusion-center term: a cluster with link probability
    /// `p_com` and error pair `pair`.
    pub fn push_cluster_term(&mut self, p_com: f64, pair: &ErrorPair) {
        self.push_atoms(&fc_term_atoms(p_com, pair));
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Sum of the term means under H0.
    pub fn mean_h0(&self) -> f64 {
        self.mean0
    }

    /// Sum of the term means under H1.
    pub fn mean_h1(&self) -> f64 {
        self.mean1
    }

    /// Bounds on `Pr(S >= gamma | H0)` and `Pr(S < gamma | H1)` for the
    /// accumulated sum `S`.
    pub fn bounds(&self, gamma: f64) -> ErrorBounds {
        if self.n == 0 {
            return ErrorBounds {
                fa: BoundResult::trivial(),
                md: BoundResult::trivial(),
            };
        }
        let nf = self.n as f64;
        ErrorBounds {
            fa: side_bound(self.n, gamma - self.mean0, self.m_fa, self.var0 / nf),
            md: side_bound(self.n, self.mean1 - gamma, self.m_md, self.var1 / nf),
        }
    }
}

/// Precomputed, threshold-independent part of the cluster-level bound.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterBoundModel {
    acc: BoundAccumulator,
}

impl ClusterBoundModel {
    pub fn new(cluster: &ClusterSpec) -> Self {
        let mut acc = BoundAccumulator::default();
        for (s, w) in cluster.sensors().iter().zip(cluster.weights()) {
            acc.push_atoms(&[
                Atom::new(w.w1, s.p_fa(), 1.0 - s.p_md()),
                Atom::new(-w.w0, 1.0 - s.p_fa(), s.p_md()),
            ]);
        }
        Self { acc }
    }

    pub fn accumulator(&self) -> &BoundAccumulator {
        &self.acc
    }

    pub fn bounds(&self, gamma: f64) -> ErrorBounds {
        self.acc.bounds(gamma)
    }
}

/// Bounds on the cluster's false-alarm and missed-detection probabilities
/// at its current threshold.
pub fn cluster_error_bounds(cluster: &ClusterSpec) -> ErrorBounds {
    ClusterBoundModel::new(cluster).bounds(cluster.gamma())
}

/// Bounds on the fusion-center error probabilities given each cluster's
/// error pair.
pub fn fc_error_bounds(system: &SystemSpec, cluster_errors: &[ErrorPair]) -> Result<ErrorBounds> {
    if cluster_errors.len() != system.cluster_count() {
        return Err(Error::LengthMismatch {
            expected: system.cluster_count(),
            got: cluster_errors.len(),
        });
    }
    let mut acc = BoundAccumulator::default();
    for (pc, e) in system.cluster_com_probs().into_iter().zip(cluster_errors) {
        acc.push_cluster_term(pc, e);
    }
    Ok(acc.bounds(system.fc_threshold()))
}
