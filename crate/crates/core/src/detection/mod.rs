//! Domain model of the cloud-cluster detector and its decision rules.
//!
//! Each sensor reports a bit that is flipped with probability `p_fa` under
//! H0 and `p_md` under H1. A cluster fuses its members' bits with the
//! log-likelihood statistic
//!
//! ```text
//! S_j = sum_i [ w1_i * y_i - w0_i * (1 - y_i) ]
//! w1_i = ln((1 - p_md_i) / p_fa_i),   w0_i = ln((1 - p_fa_i) / p_md_i)
//! ```
//!
//! and declares H1 iff `S_j >= gamma_j`. The fusion center applies the same
//! construction one level up, using cluster-level error probabilities as
//! the noise model and only the verdicts of clusters whose link is up. Its
//! threshold is fixed by the prior and the losses:
//! `gamma = ln(L10 * p0 / (L01 * p1))`.
//!
//! Equality goes to H1 everywhere. Comparisons carry a tolerance of
//! `1e-9 * (1 + |gamma|)` so that statistics which are equal in exact
//! arithmetic but summed in different orders are still treated as ties.

mod exact;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use exact::{
    cluster_com_prob, cluster_error_probs_binomial, cluster_error_probs_enumerated,
    cluster_error_probs_exact, expected_loss, fc_error_probs_enumerated,
    fc_error_probs_exact, fc_error_probs_exchangeable, realization_probability,
};
pub(crate) use exact::{binomial_pmf, cluster_distribution, exchangeable_tails, fc_term_atoms};

/// Largest cluster handled by exhaustive enumeration by default.
pub const DEFAULT_CLUSTER_CAP: usize = 20;
/// Largest heterogeneous cluster count handled by exact enumeration at the
/// fusion center by default.
pub const DEFAULT_FC_CAP: usize = 10;

const TIE_TOL: f64 = 1e-9;

/// Smallest statistic value that still counts as reaching `gamma`.
pub fn decision_cut(gamma: f64) -> f64 {
    gamma - TIE_TOL * (1.0 + gamma.abs())
}

/// `true` (H1) iff `stat >= gamma`, ties included.
pub fn meets_threshold(stat: f64, gamma: f64) -> bool {
    stat >= decision_cut(gamma)
}

/// How an error probability was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Exact,
    Bennett,
    MonteCarlo,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Exact => "exact",
            Method::Bennett => "bennett",
            Method::MonteCarlo => "monte_carlo",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// False-alarm / missed-detection pair with its provenance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorPair {
    pub p_fa: f64,
    pub p_md: f64,
    pub method: Method,
}

impl ErrorPair {
    pub fn new(p_fa: f64, p_md: f64, method: Method) -> Self {
        Self { p_fa, p_md, method }
    }

    pub fn exact(p_fa: f64, p_md: f64) -> Self {
        Self::new(p_fa, p_md, Method::Exact)
    }

    pub fn is_valid(&self) -> bool {
        (0.0..=1.0).contains(&self.p_fa) && (0.0..=1.0).contains(&self.p_md)
    }
}

/// Per-sensor noise and link model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SensorSpec {
    p_fa: f64,
    p_md: f64,
    p_com: f64,
}

fn open_half(p: f64) -> bool {
    p > 0.0 && p < 0.5
}

impl SensorSpec {
    pub fn new(p_fa: f64, p_md: f64, p_com: f64) -> Result<Self> {
        if !open_half(p_fa) {
            return Err(Error::InvalidSensor(format!("p_fa = {p_fa} is not in (0, 0.5)")));
        }
        if !open_half(p_md) {
            return Err(Error::InvalidSensor(format!("p_md = {p_md} is not in (0, 0.5)")));
        }
        if !(0.0..=1.0).contains(&p_com) {
            return Err(Error::InvalidSensor(format!("p_com = {p_com} is not in [0, 1]")));
        }
        Ok(Self { p_fa, p_md, p_com })
    }

    pub fn p_fa(&self) -> f64 {
        self.p_fa
    }

    pub fn p_md(&self) -> f64 {
        self.p_md
    }

    pub fn p_com(&self) -> f64 {
        self.p_com
    }

    pub fn with_p_com(&self, p_com: f64) -> Result<Self> {
        Self::new(self.p_fa, self.p_md, p_com)
    }

    pub fn weights(&self) -> FusionWeights {
        FusionWeights {
            w1: ((1.0 - self.p_md) / self.p_fa).ln(),
            w0: ((1.0 - self.p_fa) / self.p_md).ln(),
        }
    }
}

/// Log-likelihood weights of a one (`w1`) and a zero (`w0`) report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionWeights {
    pub w1: f64,
    pub w0: f64,
}

/// Sensor-level fusion weights; both inputs must lie in (0, 0.5).
pub fn fusion_weights(p_fa: f64, p_md: f64) -> Result<FusionWeights> {
    Ok(SensorSpec::new(p_fa, p_md, 0.0)?.weights())
}

impl FusionWeights {
    /// Weights the fusion center assigns to a cluster with the given error
    /// pair.
    ///
    /// A zero error probability gives an infinite weight (that report is
    /// conclusive). A pair with `p_fa + p_md >= 1` carries no usable
    /// information about the hypothesis and gets zero weights.
    pub fn from_error_pair(pair: &ErrorPair) -> Self {
        let (a, b) = (pair.p_fa, pair.p_md);
        if !(a + b < 1.0) {
            return Self { w1: 0.0, w0: 0.0 };
        }
        Self {
            w1: ((1.0 - b) / a).ln(),
            w0: ((1.0 - a) / b).ln(),
        }
    }

    /// Contribution of a single report to the statistic.
    pub fn term(&self, bit: bool) -> f64 {
        if bit {
            self.w1
        } else {
            -self.w0
        }
    }
}

/// Fusion-center weights for every cluster.
pub fn fc_weights(errors: &[ErrorPair]) -> Vec<FusionWeights> {
    errors.iter().map(FusionWeights::from_error_pair).collect()
}

/// A cluster of sensors and its decision threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterSpec {
    sensors: Vec<SensorSpec>,
    weights: Vec<FusionWeights>,
    gamma: f64,
    l_min: f64,
    l_max: f64,
}

impl ClusterSpec {
    pub fn new(sensors: Vec<SensorSpec>, gamma: f64) -> Result<Self> {
        if sensors.is_empty() {
            return Err(Error::InvalidCluster("cluster has no sensors".into()));
        }
        let weights: Vec<FusionWeights> = sensors.iter().map(SensorSpec::weights).collect();
        let l_max = weights.iter().fold(0.0, |acc, w| acc + w.w1);
        let l_min = -weights.iter().fold(0.0, |acc, w| acc + w.w0);
        let mut cluster = Self {
            sensors,
            weights,
            gamma: l_min,
            l_min,
            l_max,
        };
        cluster.set_gamma(gamma)?;
        Ok(cluster)
    }

    /// Homogeneous cluster of `n` copies of `sensor`.
    pub fn homogeneous(sensor: SensorSpec, n: usize, gamma: f64) -> Result<Self> {
        Self::new(vec![sensor; n], gamma)
    }

    pub fn set_gamma(&mut self, gamma: f64) -> Result<()> {
        if !(gamma >= self.l_min && gamma <= self.l_max) {
            return Err(Error::InvalidCluster(format!(
                "threshold {gamma} outside [{}, {}]",
                self.l_min, self.l_max
            )));
        }
        self.gamma = gamma;
        Ok(())
    }

    pub fn with_gamma(&self, gamma: f64) -> Result<Self> {
        let mut c = self.clone();
        c.set_gamma(gamma)?;
        Ok(c)
    }

    pub fn clamp_gamma(&self, gamma: f64) -> f64 {
        gamma.clamp(self.l_min, self.l_max)
    }

    pub fn sensors(&self) -> &[SensorSpec] {
        &self.sensors
    }

    pub fn weights(&self) -> &[FusionWeights] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.sensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sensors.is_empty()
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Statistic value when every bit is 0.
    pub fn l_min(&self) -> f64 {
        self.l_min
    }

    /// Statistic value when every bit is 1.
    pub fn l_max(&self) -> f64 {
        self.l_max
    }

    /// `(p_fa, p_md)` shared by all members, if they are bitwise equal.
    pub fn homogeneous_noise(&self) -> Option<(f64, f64)> {
        let first = self.sensors[0];
        self.sensors
            .iter()
            .all(|s| s.p_fa == first.p_fa && s.p_md == first.p_md)
            .then_some((first.p_fa, first.p_md))
    }

    /// Mean `(p_fa, p_md, p_com)` over the members.
    pub fn average_sensor(&self) -> SensorSpec {
        let n = self.len() as f64;
        let (a, b, c) = self.sensors.iter().fold((0.0, 0.0, 0.0), |acc, s| {
            (acc.0 + s.p_fa, acc.1 + s.p_md, acc.2 + s.p_com)
        });
        SensorSpec {
            p_fa: a / n,
            p_md: b / n,
            p_com: c / n,
        }
    }

    pub fn com_prob(&self) -> f64 {
        cluster_com_prob(self)
    }
}

/// Sum of the weighted reports of a cluster, accumulated in sensor order.
pub fn cluster_statistic(bits: &[bool], cluster: &ClusterSpec) -> Result<f64> {
    if bits.len() != cluster.len() {
        return Err(Error::LengthMismatch {
            expected: cluster.len(),
            got: bits.len(),
        });
    }
    Ok(bits
        .iter()
        .zip(cluster.weights())
        .fold(0.0, |acc, (&y, w)| acc + w.term(y)))
}

/// Cluster verdict for one measurement vector: `true` means H1.
pub fn cluster_decide(bits: &[bool], cluster: &ClusterSpec) -> Result<bool> {
    Ok(meets_threshold(cluster_statistic(bits, cluster)?, cluster.gamma()))
}

/// Fusion-center statistic. Clusters with `tau[j] == false` contribute
/// nothing, whatever their verdict entry holds.
pub fn fc_statistic(tau: &[bool], verdicts: &[bool], weights: &[FusionWeights]) -> Result<f64> {
    if tau.len() != weights.len() {
        return Err(Error::LengthMismatch {
            expected: weights.len(),
            got: tau.len(),
        });
    }
    if verdicts.len() != weights.len() {
        return Err(Error::LengthMismatch {
            expected: weights.len(),
            got: verdicts.len(),
        });
    }
    Ok(tau
        .iter()
        .zip(verdicts)
        .zip(weights)
        .filter(|((&t, _), _)| t)
        .fold(0.0, |acc, ((_, &z), w)| acc + w.term(z)))
}

/// Fusion-center decision: `true` means H1.
pub fn fc_decide(
    tau: &[bool],
    verdicts: &[bool],
    weights: &[FusionWeights],
    gamma: f64,
) -> Result<bool> {
    Ok(meets_threshold(fc_statistic(tau, verdicts, weights)?, gamma))
}

/// Clusters, prior and losses of one deployment.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemSpec {
    clusters: Vec<ClusterSpec>,
    p1: f64,
    loss_fa: f64,
    loss_md: f64,
}

impl SystemSpec {
    pub fn new(clusters: Vec<ClusterSpec>, p1: f64, loss_fa: f64, loss_md: f64) -> Result<Self> {
        if clusters.is_empty() {
            return Err(Error::InvalidSystem("system has no clusters".into()));
        }
        if !(p1 > 0.0 && p1 < 1.0) {
            return Err(Error::InvalidSystem(format!("prior p1 = {p1} is not in (0, 1)")));
        }
        if !(loss_fa > 0.0 && loss_fa.is_finite()) {
            return Err(Error::InvalidSystem(format!("loss_fa = {loss_fa} must be positive")));
        }
        if !(loss_md > 0.0 && loss_md.is_finite()) {
            return Err(Error::InvalidSystem(format!("loss_md = {loss_md} must be positive")));
        }
        let system = Self {
            clusters,
            p1,
            loss_fa,
            loss_md,
        };
        if !system.fc_threshold().is_finite() {
            return Err(Error::InvalidSystem("fusion-center threshold is not finite".into()));
        }
        Ok(system)
    }

    /// `n_clusters` identical clusters of `cluster_size` copies of `sensor`,
    /// all with threshold `gamma`.
    pub fn homogeneous(
        sensor: SensorSpec,
        cluster_size: usize,
        n_clusters: usize,
        gamma: f64,
        p1: f64,
        loss_fa: f64,
        loss_md: f64,
    ) -> Result<Self> {
        let cluster = ClusterSpec::homogeneous(sensor, cluster_size, gamma)?;
        Self::new(vec![cluster; n_clusters], p1, loss_fa, loss_md)
    }

    pub fn clusters(&self) -> &[ClusterSpec] {
        &self.clusters
    }

    pub fn cluster_count(&self) -> usize {
        self.clusters.len()
    }

    pub fn p1(&self) -> f64 {
        self.p1
    }

    pub fn p0(&self) -> f64 {
        1.0 - self.p1
    }

    pub fn loss_fa(&self) -> f64 {
        self.loss_fa
    }

    pub fn loss_md(&self) -> f64 {
        self.loss_md
    }

    /// `gamma = ln(L10 * p0 / (L01 * p1))`.
    pub fn fc_threshold(&self) -> f64 {
        (self.loss_fa * self.p0() / (self.loss_md * self.p1)).ln()
    }

    pub fn gammas(&self) -> Vec<f64> {
        self.clusters.iter().map(ClusterSpec::gamma).collect()
    }

    pub fn set_gamma(&mut self, cluster: usize, gamma: f64) -> Result<()> {
        let c = self.clusters.get_mut(cluster).ok_or_else(|| {
            Error::InvalidArgument(format!("cluster index {cluster} out of range"))
        })?;
        c.set_gamma(gamma)
    }

    pub fn with_gammas(&self, gammas: &[f64]) -> Result<Self> {
        if gammas.len() != self.clusters.len() {
            return Err(Error::LengthMismatch {
                expected: self.clusters.len(),
                got: gammas.len(),
            });
        }
        let mut s = self.clone();
        for (c, &g) in s.clusters.iter_mut().zip(gammas) {
            c.set_gamma(g)?;
        }
        Ok(s)
    }

    /// Same threshold for every cluster.
    pub fn with_shared_gamma(&self, gamma: f64) -> Result<Self> {
        self.with_gammas(&vec![gamma; self.clusters.len()])
    }

    pub fn cluster_com_probs(&self) -> Vec<f64> {
        self.clusters.iter().map(cluster_com_prob).collect()
    }

    /// All clusters have bitwise identical member lists.
    pub fn has_identical_clusters(&self) -> bool {
        let first = self.clusters[0].sensors();
        self.clusters.iter().all(|c| c.sensors() == first)
    }

    pub fn expected_loss(&self, fc: &ErrorPair) -> f64 {
        expected_loss(self, fc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sensor(a: f64, b: f64) -> SensorSpec {
        SensorSpec::new(a, b, 1.0).unwrap()
    }

    #[test]
    fn weights_of_reference_sensor() {
        let w = fusion_weights(0.2, 0.3).unwrap();
        assert!((w.w1 - 1.252_762_968_495_368).abs() < 1e-12);
        assert!((w.w0 - 0.980_829_253_011_726_2).abs() < 1e-12);
    }

    #[test]
    fn symmetric_sensor_has_equal_weights() {
        for p in [0.01, 0.1, 0.25, 0.4, 0.49] {
            let w = fusion_weights(p, p).unwrap();
            assert_eq!(w.w1, w.w0);
            assert!(w.w1 > 0.0);
        }
    }

    #[test]
    fn near_uninformative_sensor() {
        let w = fusion_weights(0.4999, 0.4999).unwrap();
        assert!((w.w1 - 4.000_000_053_332_455e-4).abs() < 1e-12);
        assert_eq!(w.w1, w.w0);
    }

    #[test]
    fn weights_reject_out_of_range() {
        for (a, b) in [(0.0, 0.2), (0.5, 0.2), (0.2, 0.5), (0.2, -0.1), (f64::NAN, 0.2)] {
            assert!(matches!(fusion_weights(a, b), Err(Error::InvalidSensor(_))));
        }
        assert!(SensorSpec::new(0.2, 0.3, 1.1).is_err());
        assert!(SensorSpec::new(0.2, 0.3, -0.1).is_err());
    }

    #[test]
    fn cluster_level_weights_handle_degenerate_pairs() {
        let w = FusionWeights::from_error_pair(&ErrorPair::exact(0.0, 0.3));
        assert!(w.w1.is_infinite() && w.w1 > 0.0);
        assert!((w.w0 - (1.0f64 / 0.3).ln()).abs() < 1e-15);
        let w = FusionWeights::from_error_pair(&ErrorPair::exact(1.0, 0.0));
        assert_eq!((w.w1, w.w0), (0.0, 0.0));
        let w = FusionWeights::from_error_pair(&ErrorPair::exact(0.7, 0.6));
        assert_eq!((w.w1, w.w0), (0.0, 0.0));
    }

    #[test]
    fn cluster_rejects_bad_threshold_and_empty() {
        assert!(ClusterSpec::new(vec![], 0.0).is_err());
        let c = ClusterSpec::homogeneous(sensor(0.2, 0.3), 2, 0.0).unwrap();
        assert!(c.with_gamma(c.l_max() + 1e-9).is_err());
        assert!(c.with_gamma(c.l_min() - 1e-9).is_err());
        assert!(c.with_gamma(f64::NAN).is_err());
    }

    #[test]
    fn decide_at_range_boundaries() {
        let c = ClusterSpec::new(vec![sensor(0.2, 0.3), sensor(0.1, 0.4), sensor(0.3, 0.2)], 0.0)
            .unwrap();
        let top = c.with_gamma(c.l_max()).unwrap();
        assert!(cluster_decide(&[true, true, true], &top).unwrap());
        let g = c.l_min() + 1e-3;
        let low = c.with_gamma(g).unwrap();
        assert!(!cluster_decide(&[false, false, false], &low).unwrap());
    }

    #[test]
    fn decide_homogeneous_pair() {
        let c = ClusterSpec::homogeneous(sensor(0.2, 0.3), 2, 1.0).unwrap();
        let s = cluster_statistic(&[true, false], &c).unwrap();
        assert!((s - 0.271_933_715_483_641_87).abs() < 1e-12);
        assert!(!cluster_decide(&[true, false], &c).unwrap());
        assert!(cluster_decide(&[true, true], &c).unwrap());
    }

    #[test]
    fn decide_rejects_length_mismatch() {
        let c = ClusterSpec::homogeneous(sensor(0.2, 0.3), 2, 1.0).unwrap();
        assert_eq!(
            cluster_decide(&[true], &c),
            Err(Error::LengthMismatch { expected: 2, got: 1 })
        );
    }

    #[test]
    fn fc_ignores_silent_clusters() {
        let w = vec![
            FusionWeights { w1: 2.0, w0: 1.0 },
            FusionWeights { w1: 5.0, w0: 5.0 },
        ];
        let s = fc_statistic(&[true, false], &[true, true], &w).unwrap();
        assert_eq!(s, 2.0);
        assert!(!fc_decide(&[false, false], &[true, true], &w, 0.5).unwrap());
        assert!(fc_decide(&[false, false], &[false, false], &w, 0.0).unwrap());
    }

    #[test]
    fn system_threshold_and_validation() {
        let c = ClusterSpec::homogeneous(sensor(0.2, 0.3), 3, 0.0).unwrap();
        let s = SystemSpec::new(vec![c.clone()], 0.4, 150.0, 100.0).unwrap();
        assert!((s.fc_threshold() - 2.25f64.ln()).abs() < 1e-15);
        assert!(SystemSpec::new(vec![c.clone()], 0.0, 150.0, 100.0).is_err());
        assert!(SystemSpec::new(vec![c.clone()], 0.4, 0.0, 100.0).is_err());
        assert!(SystemSpec::new(vec![c], 0.4, 150.0, -1.0).is_err());
        assert!(SystemSpec::new(vec![], 0.4, 150.0, 100.0).is_err());
    }

    #[test]
    fn homogeneity_is_bitwise() {
        let c = ClusterSpec::new(vec![sensor(0.2, 0.3), sensor(0.2, 0.3 + 1e-15)], 0.0).unwrap();
        assert!(c.homogeneous_noise().is_none());
        let c = ClusterSpec::homogeneous(sensor(0.2, 0.3), 4, 0.0).unwrap();
        assert_eq!(c.homogeneous_noise(), Some((0.2, 0.3)));
    }
}
