//! Exact error probabilities by enumeration, plus the binomial and
//! exchangeability shortcuts for homogeneous clusters and systems.

use statrs::function::factorial::ln_binomial;

use super::{
    fc_weights, meets_threshold, ClusterSpec, ErrorPair, FusionWeights, SystemSpec,
};
use crate::distribution::{convolve_all, Atom, AtomDistribution};
use crate::error::{Error, Result};

// Hard limits for the enumeration routines themselves, independent of the
// configurable caps, so that a stray call cannot exhaust memory.
const MAX_ENUMERATED_SENSORS: usize = 26;
const MAX_ENUMERATED_CLUSTERS: usize = 20;

/// Probability that at least one member of the cluster reaches the fusion
/// center: `1 - prod_i (1 - p_com_i)`.
pub fn cluster_com_prob(cluster: &ClusterSpec) -> f64 {
    1.0 - cluster
        .sensors()
        .iter()
        .fold(1.0, |acc, s| acc * (1.0 - s.p_com()))
}

/// `Pr(Binomial(n, p) = k)` where `q = 1 - p` is passed separately to keep
/// precision when `p` is close to 1.
pub(crate) fn binomial_pmf(n: usize, k: usize, p: f64, q: f64) -> f64 {
    if k > n {
        return 0.0;
    }
    if p <= 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    if q <= 0.0 {
        return if k == n { 1.0 } else { 0.0 };
    }
    if n <= 30 {
        let mut c = 1u64;
        for i in 0..k as u64 {
            c = c * (n as u64 - i) / (i + 1);
        }
        c as f64 * p.powi(k as i32) * q.powi((n - k) as i32)
    } else {
        (ln_binomial(n as u64, k as u64) + k as f64 * p.ln() + (n - k) as f64 * q.ln()).exp()
    }
}

// k copies of a one and m copies of a zero; an absent report contributes
// nothing even when its weight is infinite.
fn count_statistic(k: usize, m: usize, w: &FusionWeights) -> f64 {
    let ones = if k == 0 { 0.0 } else { k as f64 * w.w1 };
    let zeros = if m == 0 { 0.0 } else { m as f64 * w.w0 };
    ones - zeros
}

fn sensor_atoms(cluster: &ClusterSpec) -> Vec<[Atom; 2]> {
    cluster
        .sensors()
        .iter()
        .zip(cluster.weights())
        .map(|(s, w)| {
            [
                Atom::new(w.w1, s.p_fa(), 1.0 - s.p_md()),
                Atom::new(-w.w0, 1.0 - s.p_fa(), s.p_md()),
            ]
        })
        .collect()
}

fn enumerated_distribution(cluster: &ClusterSpec) -> AtomDistribution {
    let terms = sensor_atoms(cluster);
    AtomDistribution::from_atoms(convolve_all(terms.iter().map(|t| &t[..])))
}

fn binomial_distribution(cluster: &ClusterSpec, p_fa: f64, p_md: f64) -> AtomDistribution {
    let n = cluster.len();
    let w = cluster.weights()[0];
    let atoms = (0..=n)
        .map(|k| {
            Atom::new(
                count_statistic(k, n - k, &w),
                binomial_pmf(n, k, p_fa, 1.0 - p_fa),
                binomial_pmf(n, k, 1.0 - p_md, p_md),
            )
        })
        .collect();
    AtomDistribution::from_atoms(atoms)
}

/// Distribution of the cluster statistic, using the binomial form for
/// homogeneous clusters and full enumeration otherwise.
pub(crate) fn cluster_distribution(cluster: &ClusterSpec, cap: usize) -> Result<AtomDistribution> {
    if let Some((a, b)) = cluster.homogeneous_noise() {
        return Ok(binomial_distribution(cluster, a, b));
    }
    let cap = cap.min(MAX_ENUMERATED_SENSORS);
    if cluster.len() > cap {
        return Err(Error::AboveCap {
            what: "cluster",
            size: cluster.len(),
            cap,
        });
    }
    Ok(enumerated_distribution(cluster))
}

/// Cluster error probabilities by enumerating all `2^n` bit patterns.
pub fn cluster_error_probs_enumerated(cluster: &ClusterSpec) -> Result<ErrorPair> {
    if cluster.len() > MAX_ENUMERATED_SENSORS {
        return Err(Error::AboveCap {
            what: "cluster",
            size: cluster.len(),
            cap: MAX_ENUMERATED_SENSORS,
        });
    }
    let (fa, md) = enumerated_distribution(cluster).tails(cluster.gamma());
    Ok(ErrorPair::exact(fa, md))
}

/// Cluster error probabilities of a homogeneous cluster from the binomial
/// law of the number of ones.
pub fn cluster_error_probs_binomial(cluster: &ClusterSpec) -> Result<ErrorPair> {
    let (a, b) = cluster
        .homogeneous_noise()
        .ok_or_else(|| Error::NotHomogeneous("cluster members differ".into()))?;
    let (fa, md) = binomial_distribution(cluster, a, b).tails(cluster.gamma());
    Ok(ErrorPair::exact(fa, md))
}

/// Exact cluster error probabilities.
///
/// Homogeneous clusters use the binomial shortcut at any size; other
/// clusters are enumerated and must not exceed `cap` sensors.
pub fn cluster_error_probs_exact(cluster: &ClusterSpec, cap: usize) -> Result<ErrorPair> {
    let (fa, md) = cluster_distribution(cluster, cap)?.tails(cluster.gamma());
    Ok(ErrorPair::exact(fa, md))
}

/// Three-atom law of one cluster's contribution to the fusion-center
/// statistic: silent, verdict 1, verdict 0.
pub(crate) fn fc_term_atoms(p_com: f64, pair: &ErrorPair) -> [Atom; 3] {
    let w = FusionWeights::from_error_pair(pair);
    [
        Atom::new(0.0, 1.0 - p_com, 1.0 - p_com),
        Atom::new(w.w1, p_com * pair.p_fa, p_com * (1.0 - pair.p_md)),
        Atom::new(-w.w0, p_com * (1.0 - pair.p_fa), p_com * pair.p_md),
    ]
}

/// `P(tau) = prod_j p_j^tau_j (1 - p_j)^(1 - tau_j)`.
pub fn realization_probability(com_probs: &[f64], tau: &[bool]) -> f64 {
    com_probs
        .iter()
        .zip(tau)
        .map(|(&p, &t)| if t { p } else { 1.0 - p })
        .product()
}

fn check_errors(system: &SystemSpec, errors: &[ErrorPair]) -> Result<()> {
    if errors.len() != system.cluster_count() {
        return Err(Error::LengthMismatch {
            expected: system.cluster_count(),
            got: errors.len(),
        });
    }
    Ok(())
}

/// Fusion-center error probabilities by enumerating every connectivity
/// realization `tau` and, within it, every verdict vector of the
/// communicating clusters.
pub fn fc_error_probs_enumerated(system: &SystemSpec, errors: &[ErrorPair]) -> Result<ErrorPair> {
    check_errors(system, errors)?;
    let n = system.cluster_count();
    if n > MAX_ENUMERATED_CLUSTERS {
        return Err(Error::AboveCap {
            what: "cluster count",
            size: n,
            cap: MAX_ENUMERATED_CLUSTERS,
        });
    }
    let pcs = system.cluster_com_probs();
    let weights = fc_weights(errors);
    let gamma = system.fc_threshold();

    let mut p_fa = 0.0;
    let mut p_md = 0.0;
    let mut tau = vec![false; n];
    let mut active = Vec::with_capacity(n);
    for tau_mask in 0u32..(1u32 << n) {
        active.clear();
        for (j, t) in tau.iter_mut().enumerate() {
            *t = tau_mask >> j & 1 == 1;
            if *t {
                active.push(j);
            }
        }
        let p_tau = realization_probability(&pcs, &tau);
        if p_tau == 0.0 {
            continue;
        }
        let mut fa_tau = 0.0;
        let mut md_tau = 0.0;
        for z_mask in 0u32..(1u32 << active.len()) {
            let mut stat = 0.0;
            let mut p0 = 1.0;
            let mut p1 = 1.0;
            for (bit, &j) in active.iter().enumerate() {
                let z = z_mask >> bit & 1 == 1;
                stat += weights[j].term(z);
                let e = &errors[j];
                if z {
                    p0 *= e.p_fa;
                    p1 *= 1.0 - e.p_md;
                } else {
                    p0 *= 1.0 - e.p_fa;
                    p1 *= e.p_md;
                }
            }
            if meets_threshold(stat, gamma) {
                fa_tau += p0;
            } else {
                md_tau += p1;
            }
        }
        p_fa += p_tau * fa_tau;
        p_md += p_tau * md_tau;
    }
    Ok(ErrorPair::exact(p_fa.min(1.0), p_md.min(1.0)))
}

/// `(p_com, error pair)` shared by every cluster, if bitwise equal.
pub(crate) fn common_cluster_law(
    system: &SystemSpec,
    errors: &[ErrorPair],
) -> Option<(f64, ErrorPair)> {
    let pcs = system.cluster_com_probs();
    let (p0, e0) = (pcs[0], errors[0]);
    let same = pcs.iter().zip(errors).all(|(&p, e)| {
        p == p0 && e.p_fa == e0.p_fa && e.p_md == e0.p_md
    });
    same.then_some((p0, e0))
}

/// Fusion-center error probabilities for exchangeable clusters: condition
/// on the number of communicating clusters and the number of ones among
/// their verdicts.
pub fn fc_error_probs_exchangeable(
    system: &SystemSpec,
    errors: &[ErrorPair],
) -> Result<ErrorPair> {
    check_errors(system, errors)?;
    let (pc, e) = common_cluster_law(system, errors).ok_or_else(|| {
        Error::NotHomogeneous("cluster error pairs or link probabilities differ".into())
    })?;
    Ok(exchangeable_tails(
        system.cluster_count(),
        pc,
        &e,
        system.fc_threshold(),
    ))
}

pub(crate) fn exchangeable_tails(n: usize, pc: f64, e: &ErrorPair, gamma: f64) -> ErrorPair {
    let w = FusionWeights::from_error_pair(e);
    let mut p_fa = 0.0;
    let mut p_md = 0.0;
    for c in 0..=n {
        let p_c = binomial_pmf(n, c, pc, 1.0 - pc);
        if p_c == 0.0 {
            continue;
        }
        for k in 0..=c {
            let stat = count_statistic(k, c - k, &w);
            if meets_threshold(stat, gamma) {
                p_fa += p_c * binomial_pmf(c, k, e.p_fa, 1.0 - e.p_fa);
            } else {
                p_md += p_c * binomial_pmf(c, k, 1.0 - e.p_md, e.p_md);
            }
        }
    }
    ErrorPair::exact(p_fa.min(1.0), p_md.min(1.0))
}

/// Exact fusion-center error probabilities.
///
/// Systems whose clusters share one error pair and link probability use
/// the exchangeability reduction at any size; other systems are enumerated
/// and must have at most `cap` clusters.
pub fn fc_error_probs_exact(
    system: &SystemSpec,
    errors: &[ErrorPair],
    cap: usize,
) -> Result<ErrorPair> {
    check_errors(system, errors)?;
    if let Some((pc, e)) = common_cluster_law(system, errors) {
        return Ok(exchangeable_tails(
            system.cluster_count(),
            pc,
            &e,
            system.fc_threshold(),
        ));
    }
    if system.cluster_count() > cap {
        return Err(Error::AboveCap {
            what: "cluster count",
            size: system.cluster_count(),
            cap,
        });
    }
    fc_error_probs_enumerated(system, errors)
}

/// Bayes risk `p0 * P_FA * L10 + p1 * P_MD * L01`.
pub fn expected_loss(system: &SystemSpec, fc: &ErrorPair) -> f64 {
    system.p0() * fc.p_fa * system.loss_fa() + system.p1() * fc.p_md * system.loss_md()
}
