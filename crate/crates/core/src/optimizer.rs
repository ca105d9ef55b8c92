//! Threshold selection for the cluster decision rules.
//!
//! The expected loss is minimized over a uniform grid on each cluster's
//! statistic range, one threshold at a time (Gauss-Seidel), holding the
//! others fixed. Error probabilities come from an [`Evaluator`], which
//! decides per level whether to compute them exactly or to use the
//! improved Bennett bounds.

use serde::Serialize;

use crate::concentration::{cluster_error_bounds, fc_error_bounds, BoundAccumulator, ClusterBoundModel};
use crate::detection::{
    binomial_pmf, cluster_distribution, cluster_error_probs_exact, exchangeable_tails, expected_loss,
    fc_error_probs_exact,
    fc_term_atoms, ClusterSpec, ErrorPair, Method, SystemSpec, DEFAULT_CLUSTER_CAP, DEFAULT_FC_CAP,
};
use crate::distribution::{convolve_all, AtomDistribution};
use crate::error::{Error, Result};

pub const DEFAULT_POINTS_PER_SENSOR: usize = 75;
pub const DEFAULT_TOL: f64 = 1e-9;
pub const DEFAULT_MAX_SWEEPS: usize = 50;

/// Candidate thresholds for one cluster, ascending.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdGrid {
    pub points: Vec<f64>,
    pub cluster_index: usize,
}

/// `points_per_sensor * n` uniformly spaced thresholds spanning
/// `[l_min, l_max]`, both endpoints included.
pub fn build_grid(
    cluster: &ClusterSpec,
    cluster_index: usize,
    points_per_sensor: usize,
) -> Result<ThresholdGrid> {
    if points_per_sensor < 2 {
        return Err(Error::InvalidArgument(format!(
            "points_per_sensor must be at least 2, got {points_per_sensor}"
        )));
    }
    let count = points_per_sensor * cluster.len();
    let (lo, hi) = (cluster.l_min(), cluster.l_max());
    let step = (hi - lo) / (count - 1) as f64;
    let mut points: Vec<f64> = (0..count).map(|i| lo + step * i as f64).collect();
    points[0] = lo;
    points[count - 1] = hi;
    for p in &mut points {
        *p = p.clamp(lo, hi);
    }
    Ok(ThresholdGrid {
        points,
        cluster_index,
    })
}

/// Grids for every cluster of a system.
pub fn build_grids(system: &SystemSpec, points_per_sensor: usize) -> Result<Vec<ThresholdGrid>> {
    system
        .clusters()
        .iter()
        .enumerate()
        .map(|(j, c)| build_grid(c, j, points_per_sensor))
        .collect()
}

/// Size limits for exact computation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Caps {
    pub cluster: usize,
    pub fc: usize,
}

impl Default for Caps {
    fn default() -> Self {
        Self {
            cluster: DEFAULT_CLUSTER_CAP,
            fc: DEFAULT_FC_CAP,
        }
    }
}

/// Method used at each level of the hierarchy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct MethodPlan {
    pub cluster: Method,
    pub fc: Method,
}

/// Exact at the cluster level iff `cluster_size <= caps.cluster`, exact at
/// the fusion center iff `cluster_count <= caps.fc`.
pub fn select_method(cluster_size: usize, cluster_count: usize, caps: Caps) -> MethodPlan {
    let pick = |size, cap| if size <= cap { Method::Exact } else { Method::Bennett };
    MethodPlan {
        cluster: pick(cluster_size, caps.cluster),
        fc: pick(cluster_count, caps.fc),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Exact everywhere. Homogeneous clusters and exchangeable systems are
    /// exact at any size; anything else above the caps is an error.
    Exact,
    /// [`select_method`] per level.
    Auto,
    /// Bounds everywhere.
    Bennett,
}

/// Computes error probabilities and expected loss under a method policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Evaluator {
    pub caps: Caps,
    pub strategy: Strategy,
}

/// Everything computed for one system at its current thresholds.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub cluster_errors: Vec<ErrorPair>,
    pub fc_errors: ErrorPair,
    pub loss: f64,
    pub fc_method: Method,
}

impl Evaluator {
    pub fn new(strategy: Strategy, caps: Caps) -> Self {
        Self { caps, strategy }
    }

    pub fn exact() -> Self {
        Self::new(Strategy::Exact, Caps::default())
    }

    pub fn auto(caps: Caps) -> Self {
        Self::new(Strategy::Auto, caps)
    }

    pub fn bennett() -> Self {
        Self::new(Strategy::Bennett, Caps::default())
    }

    pub fn cluster_method(&self, cluster_size: usize) -> Method {
        match self.strategy {
            Strategy::Exact => Method::Exact,
            Strategy::Bennett => Method::Bennett,
            Strategy::Auto => select_method(cluster_size, 0, self.caps).cluster,
        }
    }

    pub fn fc_method(&self, cluster_count: usize) -> Method {
        match self.strategy {
            Strategy::Exact => Method::Exact,
            Strategy::Bennett => Method::Bennett,
            Strategy::Auto => select_method(0, cluster_count, self.caps).fc,
        }
    }

    pub fn cluster_errors(&self, cluster: &ClusterSpec) -> Result<ErrorPair> {
        match self.cluster_method(cluster.len()) {
            Method::Bennett => Ok(cluster_error_bounds(cluster).error_pair()),
            _ => cluster_error_probs_exact(cluster, self.caps.cluster),
        }
    }

    pub fn fc_errors(&self, system: &SystemSpec, cluster_errors: &[ErrorPair]) -> Result<ErrorPair> {
        match self.fc_method(system.cluster_count()) {
            Method::Bennett => Ok(fc_error_bounds(system, cluster_errors)?.error_pair()),
            _ => fc_error_probs_exact(system, cluster_errors, self.caps.fc),
        }
    }

    pub fn evaluate(&self, system: &SystemSpec) -> Result<Evaluation> {
        let cluster_errors = system
            .clusters()
            .iter()
            .map(|c| self.cluster_errors(c))
            .collect::<Result<Vec<_>>>()?;
        let fc_errors = self.fc_errors(system, &cluster_errors)?;
        Ok(Evaluation {
            loss: expected_loss(system, &fc_errors),
            cluster_errors,
            fc_errors,
            fc_method: self.fc_method(system.cluster_count()),
        })
    }
}

/// Threshold-independent representation of a cluster's error curve.
#[derive(Debug, Clone)]
enum ClusterModel {
    Exact(AtomDistribution),
    Bound(ClusterBoundModel),
}

impl ClusterModel {
    fn build(evaluator: &Evaluator, cluster: &ClusterSpec) -> Result<Self> {
        Ok(match evaluator.cluster_method(cluster.len()) {
            Method::Bennett => ClusterModel::Bound(ClusterBoundModel::new(cluster)),
            _ => ClusterModel::Exact(cluster_distribution(cluster, evaluator.caps.cluster)?),
        })
    }

    fn errors(&self, gamma: f64) -> ErrorPair {
        match self {
            ClusterModel::Exact(d) => {
                let (fa, md) = d.tails(gamma);
                ErrorPair::exact(fa, md)
            }
            ClusterModel::Bound(b) => b.bounds(gamma).error_pair(),
        }
    }

    fn method(&self) -> Method {
        match self {
            ClusterModel::Exact(_) => Method::Exact,
            ClusterModel::Bound(_) => Method::Bennett,
        }
    }
}

/// Fusion-center law of every cluster except one.
enum FcPartial {
    Exact(AtomDistribution),
    Bound(BoundAccumulator),
}

impl FcPartial {
    fn build(method: Method, terms: &[(f64, ErrorPair)]) -> Self {
        match method {
            Method::Bennett => {
                let mut acc = BoundAccumulator::default();
                for (pc, e) in terms {
                    acc.push_cluster_term(*pc, e);
                }
                FcPartial::Bound(acc)
            }
            _ => {
                let atoms: Vec<_> = terms.iter().map(|(pc, e)| fc_term_atoms(*pc, e)).collect();
                FcPartial::Exact(AtomDistribution::from_atoms(convolve_all(
                    atoms.iter().map(|a| &a[..]),
                )))
            }
        }
    }

    fn errors(&self, pc: f64, pair: &ErrorPair, gamma: f64) -> ErrorPair {
        match self {
            FcPartial::Exact(d) => {
                let (fa, md) = d.tails_with(&fc_term_atoms(pc, pair), gamma);
                ErrorPair::exact(fa, md)
            }
            FcPartial::Bound(acc) => {
                let mut acc = *acc;
                acc.push_cluster_term(pc, pair);
                acc.bounds(gamma).error_pair()
            }
        }
    }
}

/// Per-system state reused across coordinate updates.
struct Workspace<'a> {
    system: &'a SystemSpec,
    models: Vec<ClusterModel>,
    pcs: Vec<f64>,
    fc_method: Method,
}

impl<'a> Workspace<'a> {
    fn new(system: &'a SystemSpec, evaluator: &Evaluator) -> Result<Self> {
        let n = system.cluster_count();
        let fc_method = evaluator.fc_method(n);
        if fc_method == Method::Exact && n > evaluator.caps.fc && n > 1 {
            return Err(Error::AboveCap {
                what: "cluster count",
                size: n,
                cap: evaluator.caps.fc,
            });
        }
        let models = system
            .clusters()
            .iter()
            .map(|c| ClusterModel::build(evaluator, c))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            system,
            models,
            pcs: system.cluster_com_probs(),
            fc_method,
        })
    }

    fn partial(&self, skip: usize, errors: &[ErrorPair]) -> FcPartial {
        let terms: Vec<(f64, ErrorPair)> = (0..errors.len())
            .filter(|&k| k != skip)
            .map(|k| (self.pcs[k], errors[k]))
            .collect();
        FcPartial::build(self.fc_method, &terms)
    }

    fn loss_at(&self, partial: &FcPartial, j: usize, gamma: f64) -> f64 {
        let e = self.models[j].errors(gamma);
        let fc = partial.errors(self.pcs[j], &e, self.system.fc_threshold());
        expected_loss(self.system, &fc)
    }

    // Minimizer over the grid; ties go to the smallest threshold.
    fn scan(&self, partial: &FcPartial, j: usize, grid: &ThresholdGrid) -> (f64, f64) {
        let mut best = (grid.points[0], f64::INFINITY);
        for &g in &grid.points {
            let l = self.loss_at(partial, j, g);
            if l < best.1 {
                best = (g, l);
            }
        }
        best
    }
}

fn check_grid(system: &SystemSpec, grid: &ThresholdGrid) -> Result<()> {
    let c = system.clusters().get(grid.cluster_index).ok_or_else(|| {
        Error::InvalidArgument(format!("grid cluster index {} out of range", grid.cluster_index))
    })?;
    if grid.points.is_empty() {
        return Err(Error::InvalidArgument("empty threshold grid".into()));
    }
    if grid.points.iter().any(|&g| !(g >= c.l_min() && g <= c.l_max())) {
        return Err(Error::InvalidArgument(format!(
            "grid for cluster {} leaves [{}, {}]",
            grid.cluster_index,
            c.l_min(),
            c.l_max()
        )));
    }
    Ok(())
}

/// Best grid threshold for one cluster with every other threshold fixed.
/// Returns `(gamma, loss)`; ties go to the smallest threshold.
pub fn line_search(
    system: &SystemSpec,
    grid: &ThresholdGrid,
    evaluator: &Evaluator,
) -> Result<(f64, f64)> {
    check_grid(system, grid)?;
    let ws = Workspace::new(system, evaluator)?;
    let errors: Vec<ErrorPair> = ws
        .models
        .iter()
        .zip(system.clusters())
        .map(|(m, c)| m.errors(c.gamma()))
        .collect();
    let partial = ws.partial(grid.cluster_index, &errors);
    Ok(ws.scan(&partial, grid.cluster_index, grid))
}

/// One coordinate move accepted by [`gauss_seidel`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoordinateUpdate {
    pub cluster: usize,
    pub from: f64,
    pub to: f64,
    pub loss_before: f64,
    pub loss_after: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimizationReport {
    pub thresholds: Vec<f64>,
    /// Expected loss at `thresholds`, recomputed by the evaluator.
    pub loss: f64,
    pub fc_errors: ErrorPair,
    /// Expected loss at the starting thresholds.
    pub initial_loss: f64,
    pub sweeps: usize,
    pub method_per_cluster: Vec<Method>,
    pub fc_method: Method,
    pub converged: bool,
    pub updates: Vec<CoordinateUpdate>,
}

/// Coordinate descent over the cluster thresholds, starting from the
/// system's current thresholds.
///
/// Clusters are visited in index order. A move is accepted only if it
/// strictly lowers the loss. The run stops at a fixed point (every cluster
/// visited since the last move), when a full sweep gains less than `tol`,
/// or after `max_sweeps` sweeps.
pub fn gauss_seidel(
    system: &SystemSpec,
    grids: &[ThresholdGrid],
    tol: f64,
    max_sweeps: usize,
    evaluator: &Evaluator,
) -> Result<OptimizationReport> {
    if max_sweeps == 0 {
        return Err(Error::InvalidArgument("max_sweeps must be at least 1".into()));
    }
    let n = system.cluster_count();
    if grids.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: grids.len(),
        });
    }
    for (j, g) in grids.iter().enumerate() {
        if g.cluster_index != j {
            return Err(Error::InvalidArgument(format!(
                "grid {j} is labeled for cluster {}",
                g.cluster_index
            )));
        }
        check_grid(system, g)?;
    }

    let ws = Workspace::new(system, evaluator)?;
    let mut gammas = system.gammas();
    let mut errors: Vec<ErrorPair> = ws
        .models
        .iter()
        .zip(&gammas)
        .map(|(m, &g)| m.errors(g))
        .collect();
    let initial_loss = evaluator.evaluate(system)?.loss;

    let mut updates = Vec::new();
    let mut settled = 0usize;
    let mut sweeps = 0usize;
    let mut converged = false;
    let mut current = initial_loss;

    'outer: while sweeps < max_sweeps {
        sweeps += 1;
        let sweep_start = current;
        for j in 0..n {
            let partial = ws.partial(j, &errors);
            let before = ws.loss_at(&partial, j, gammas[j]);
            let (g, l) = ws.scan(&partial, j, &grids[j]);
            if l < before {
                updates.push(CoordinateUpdate {
                    cluster: j,
                    from: gammas[j],
                    to: g,
                    loss_before: before,
                    loss_after: l,
                });
                gammas[j] = g;
                errors[j] = ws.models[j].errors(g);
                current = l;
                settled = 1;
            } else {
                current = before;
                settled += 1;
            }
            if settled >= n {
                converged = true;
                break 'outer;
            }
        }
        if sweep_start - current < tol {
            converged = true;
            break;
        }
    }

    let tuned = system.with_gammas(&gammas)?;
    let eval = evaluator.evaluate(&tuned)?;
    Ok(OptimizationReport {
        thresholds: gammas,
        loss: eval.loss,
        fc_errors: eval.fc_errors,
        initial_loss,
        sweeps,
        method_per_cluster: ws.models.iter().map(ClusterModel::method).collect(),
        fc_method: ws.fc_method,
        converged,
        updates,
    })
}

/// Result of sweeping one threshold shared by identical clusters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SharedThreshold {
    pub gamma: f64,
    pub loss: f64,
    pub fc_errors: ErrorPair,
    pub cluster_method: Method,
    pub fc_method: Method,
}

/// Loss of a system of `n` identical clusters, each with link probability
/// `pc` and error pair `e`, through the exchangeability reduction or the
/// bound.
fn shared_fc_errors(method: Method, n: usize, pc: f64, e: &ErrorPair, gamma: f64) -> ErrorPair {
    match method {
        Method::Bennett => {
            let mut acc = BoundAccumulator::default();
            for _ in 0..n {
                acc.push_cluster_term(pc, e);
            }
            acc.bounds(gamma).error_pair()
        }
        _ => exchangeable_tails(n, pc, e, gamma),
    }
}

/// Sweeps one threshold shared by all clusters of a system whose clusters
/// are identical. Ties go to the smallest threshold.
pub fn homogeneous_equal_threshold_search(
    system: &SystemSpec,
    grid: &ThresholdGrid,
    evaluator: &Evaluator,
) -> Result<SharedThreshold> {
    if !system.has_identical_clusters() {
        return Err(Error::NotHomogeneous("clusters are not identical".into()));
    }
    check_grid(system, grid)?;
    let cluster = &system.clusters()[0];
    let model = ClusterModel::build(evaluator, cluster)?;
    let n = system.cluster_count();
    let pc = cluster.com_prob();
    let fc_method = evaluator.fc_method(n);
    let gamma_fc = system.fc_threshold();

    let mut best = (grid.points[0], f64::INFINITY, ErrorPair::exact(1.0, 1.0));
    for &g in &grid.points {
        let e = model.errors(g);
        let fc = shared_fc_errors(fc_method, n, pc, &e, gamma_fc);
        let l = expected_loss(system, &fc);
        if l < best.1 {
            best = (g, l, fc);
        }
    }
    Ok(SharedThreshold {
        gamma: best.0,
        loss: best.1,
        fc_errors: best.2,
        cluster_method: model.method(),
        fc_method,
    })
}

/// Count-domain majority rule: H1 iff at least `min_ones` bits are 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MajorityRule {
    pub min_ones: usize,
    /// Equivalent threshold on the weighted statistic, defined for
    /// homogeneous clusters: halfway between the statistic values at
    /// `min_ones - 1` and `min_ones` ones.
    pub gamma: Option<f64>,
}

impl MajorityRule {
    pub fn decide(&self, bits: &[bool]) -> bool {
        bits.iter().filter(|&&b| b).count() >= self.min_ones
    }

    /// Error probabilities of the count rule for any cluster, from the
    /// Poisson-binomial law of the number of ones.
    pub fn error_pair(&self, cluster: &ClusterSpec) -> ErrorPair {
        if let Some((a, b)) = cluster.homogeneous_noise() {
            let n = cluster.len();
            let fa: f64 = (self.min_ones..=n).map(|k| binomial_pmf(n, k, a, 1.0 - a)).sum();
            let md: f64 = (0..self.min_ones.min(n + 1))
                .map(|k| binomial_pmf(n, k, 1.0 - b, b))
                .sum();
            return ErrorPair::exact(fa.min(1.0), md.min(1.0));
        }
        let count_law = |p_one: &dyn Fn(usize) -> f64| {
            let mut dist = vec![1.0];
            for i in 0..cluster.len() {
                let p = p_one(i);
                let mut next = vec![0.0; dist.len() + 1];
                for (k, &d) in dist.iter().enumerate() {
                    next[k] += d * (1.0 - p);
                    next[k + 1] += d * p;
                }
                dist = next;
            }
            dist
        };
        let s = cluster.sensors();
        let h0 = count_law(&|i| s[i].p_fa());
        let h1 = count_law(&|i| 1.0 - s[i].p_md());
        let fa: f64 = h0[self.min_ones.min(h0.len())..].iter().sum();
        let md: f64 = h1[..self.min_ones.min(h1.len())].iter().sum();
        ErrorPair::exact(fa.min(1.0), md.min(1.0))
    }
}

/// Majority baseline with `floor(n / 2) + 1` ones required.
pub fn majority_threshold(cluster: &ClusterSpec) -> MajorityRule {
    let n = cluster.len();
    let min_ones = n / 2 + 1;
    let gamma = cluster.homogeneous_noise().map(|_| {
        let w = cluster.weights()[0];
        let g = (min_ones as f64 - 0.5) * (w.w1 + w.w0) - n as f64 * w.w0;
        cluster.clamp_gamma(g)
    });
    MajorityRule { min_ones, gamma }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detection::{cluster_decide, SensorSpec};

    fn sensor(a: f64, b: f64, c: f64) -> SensorSpec {
        SensorSpec::new(a, b, c).unwrap()
    }

    fn paper_system(n: usize, clusters: usize, p_com: f64) -> SystemSpec {
        SystemSpec::homogeneous(sensor(0.2, 0.3, p_com), n, clusters, 0.0, 0.4, 150.0, 100.0)
            .unwrap()
    }

    #[test]
    fn grid_examples() {
        let c = ClusterSpec::homogeneous(sensor(0.2, 0.3, 1.0), 1, 0.0).unwrap();
        let g = build_grid(&c, 0, 75).unwrap();
        assert_eq!(g.points.len(), 75);
        assert!((g.points[0] + 0.980_829_253_011_726_2).abs() < 1e-12);
        assert!((g.points[74] - 1.252_762_968_495_368).abs() < 1e-12);
        let step = g.points[1] - g.points[0];
        assert!(g.points.windows(2).all(|w| ((w[1] - w[0]) - step).abs() < 1e-12));

        let g = build_grid(&c, 0, 2).unwrap();
        assert_eq!(g.points, vec![c.l_min(), c.l_max()]);

        let c = ClusterSpec::homogeneous(sensor(0.2, 0.3, 1.0), 10, 0.0).unwrap();
        assert_eq!(build_grid(&c, 3, 75).unwrap().points.len(), 750);
        assert!(build_grid(&c, 0, 1).is_err());
    }

    #[test]
    fn method_selection_boundaries() {
        let caps = Caps::default();
        let p = |n, c| {
            let m = select_method(n, c, caps);
            (m.cluster, m.fc)
        };
        assert_eq!(p(20, 10), (Method::Exact, Method::Exact));
        assert_eq!(p(21, 10), (Method::Bennett, Method::Exact));
        assert_eq!(p(5, 50), (Method::Exact, Method::Bennett));
    }

    #[test]
    fn decoupled_cluster_returns_first_grid_point() {
        let connected = ClusterSpec::homogeneous(sensor(0.2, 0.3, 0.9), 3, 0.0).unwrap();
        let silent = ClusterSpec::homogeneous(sensor(0.2, 0.3, 0.0), 2, 0.0).unwrap();
        let s = SystemSpec::new(vec![connected, silent], 0.4, 150.0, 100.0).unwrap();
        let grid = build_grid(&s.clusters()[1], 1, 75).unwrap();
        let (g, _) = line_search(&s, &grid, &Evaluator::exact()).unwrap();
        assert_eq!(g, grid.points[0]);
    }

    // Brute-force oracle: loss of every count rule "at least k ones" of a
    // single always-connected cluster, evaluated from the binomial law.
    #[test]
    fn single_cluster_line_search_hits_best_count_rule() {
        let s = paper_system(3, 1, 1.0);
        let grid = build_grid(&s.clusters()[0], 0, 75).unwrap();
        let (g, l) = line_search(&s, &grid, &Evaluator::exact()).unwrap();

        let binom = |k: usize, p: f64| {
            let c = [1.0, 3.0, 3.0, 1.0][k];
            c * p.powi(k as i32) * (1.0 - p).powi(3 - k as i32)
        };
        let mut best = f64::INFINITY;
        for k in 0..=4 {
            let fa: f64 = (k..=3).map(|i| binom(i, 0.2)).sum();
            let md: f64 = (0..k.min(4)).map(|i| binom(i, 0.7)).sum();
            best = best.min(0.6 * 150.0 * fa + 0.4 * 100.0 * md);
        }
        assert!((l - best).abs() < 1e-12, "{l} vs {best}");
        let tuned = s.with_gammas(&[g]).unwrap();
        let eval = Evaluator::exact().evaluate(&tuned).unwrap();
        assert!((eval.loss - l).abs() < 1e-12);
    }

    #[test]
    fn line_search_agrees_with_shared_search_on_single_cluster() {
        let s = paper_system(4, 1, 0.3);
        let grid = build_grid(&s.clusters()[0], 0, 75).unwrap();
        let ev = Evaluator::exact();
        let (g, l) = line_search(&s, &grid, &ev).unwrap();
        let shared = homogeneous_equal_threshold_search(&s, &grid, &ev).unwrap();
        assert_eq!(g, shared.gamma);
        assert!((l - shared.loss).abs() < 1e-12);
    }

    #[test]
    fn single_cluster_gauss_seidel_is_one_line_search() {
        let s = paper_system(5, 1, 0.4);
        let s = s.with_gammas(&[s.clusters()[0].l_min()]).unwrap();
        let grids = build_grids(&s, 75).unwrap();
        let ev = Evaluator::exact();
        let (g, l) = line_search(&s, &grids[0], &ev).unwrap();
        let r = gauss_seidel(&s, &grids, DEFAULT_TOL, DEFAULT_MAX_SWEEPS, &ev).unwrap();
        assert_eq!(r.sweeps, 1);
        assert!(r.converged);
        assert_eq!(r.thresholds, vec![g]);
        assert!((r.loss - l).abs() < 1e-12);
    }

    #[test]
    fn symmetric_pair_converges_to_equal_thresholds() {
        let s = paper_system(3, 2, 0.5);
        let grids = build_grids(&s, 75).unwrap();
        let ev = Evaluator::exact();
        let shared = homogeneous_equal_threshold_search(&s, &grids[0], &ev).unwrap();
        let start = s.with_shared_gamma(shared.gamma).unwrap();
        let r = gauss_seidel(&start, &grids, DEFAULT_TOL, DEFAULT_MAX_SWEEPS, &ev).unwrap();
        assert!(r.converged);
        assert_eq!(r.thresholds[0], r.thresholds[1]);
        assert!(r.loss <= shared.loss + 1e-12);
    }

    #[test]
    fn gauss_seidel_descends_from_bad_start() {
        let clusters = vec![
            ClusterSpec::new(vec![sensor(0.1, 0.3, 0.4), sensor(0.25, 0.2, 0.2), sensor(0.3, 0.35, 0.5)], 0.0)
                .unwrap(),
            ClusterSpec::homogeneous(sensor(0.2, 0.3, 0.3), 4, 0.0).unwrap(),
            ClusterSpec::new(vec![sensor(0.15, 0.1, 0.6), sensor(0.4, 0.2, 0.1)], 0.0).unwrap(),
        ];
        let s = SystemSpec::new(clusters, 0.4, 150.0, 100.0).unwrap();
        let lows: Vec<f64> = s.clusters().iter().map(|c| c.l_min()).collect();
        let s = s.with_gammas(&lows).unwrap();
        let grids = build_grids(&s, 75).unwrap();
        let r = gauss_seidel(&s, &grids, DEFAULT_TOL, DEFAULT_MAX_SWEEPS, &Evaluator::exact()).unwrap();
        assert!(!r.updates.is_empty());
        for u in &r.updates {
            assert!(u.loss_after < u.loss_before);
        }
        for w in r.updates.windows(2) {
            assert!(w[1].loss_before <= w[0].loss_after * (1.0 + 1e-12));
        }
        assert!(r.loss <= r.initial_loss);
        // report loss recomputes from the thresholds
        let again = Evaluator::exact().evaluate(&s.with_gammas(&r.thresholds).unwrap()).unwrap();
        assert_eq!(again.loss, r.loss);
    }

    #[test]
    fn gauss_seidel_rejects_zero_sweeps() {
        let s = paper_system(2, 1, 1.0);
        let grids = build_grids(&s, 4).unwrap();
        assert!(gauss_seidel(&s, &grids, 1e-9, 0, &Evaluator::exact()).is_err());
    }

    #[test]
    fn shared_search_rejects_heterogeneous() {
        let a = ClusterSpec::homogeneous(sensor(0.2, 0.3, 0.5), 3, 0.0).unwrap();
        let b = ClusterSpec::homogeneous(sensor(0.2, 0.3, 0.6), 3, 0.0).unwrap();
        let s = SystemSpec::new(vec![a, b], 0.4, 150.0, 100.0).unwrap();
        let grid = build_grid(&s.clusters()[0], 0, 10).unwrap();
        assert!(matches!(
            homogeneous_equal_threshold_search(&s, &grid, &Evaluator::exact()),
            Err(Error::NotHomogeneous(_))
        ));
    }

    #[test]
    fn majority_rules() {
        let c3 = ClusterSpec::homogeneous(sensor(0.2, 0.3, 1.0), 3, 0.0).unwrap();
        let r = majority_threshold(&c3);
        assert_eq!(r.min_ones, 2);
        let e = r.error_pair(&c3);
        assert!((e.p_fa - 0.104).abs() < 1e-15);
        // weighted mapping reproduces the count rule
        let mapped = c3.with_gamma(r.gamma.unwrap()).unwrap();
        for mask in 0..8u32 {
            let bits: Vec<bool> = (0..3).map(|i| mask >> i & 1 == 1).collect();
            assert_eq!(r.decide(&bits), cluster_decide(&bits, &mapped).unwrap());
        }
        let exact = cluster_error_probs_exact(&mapped, 20).unwrap();
        assert!((exact.p_fa - e.p_fa).abs() < 1e-15 && (exact.p_md - e.p_md).abs() < 1e-15);

        let c1 = ClusterSpec::homogeneous(sensor(0.2, 0.3, 1.0), 1, 0.0).unwrap();
        let r1 = majority_threshold(&c1);
        assert_eq!(r1.min_ones, 1);
        assert!(r1.decide(&[true]) && !r1.decide(&[false]));

        let c2 = ClusterSpec::homogeneous(sensor(0.2, 0.3, 1.0), 2, 0.0).unwrap();
        let r2 = majority_threshold(&c2);
        assert_eq!(r2.min_ones, 2);
        assert!(r2.decide(&[true, true]) && !r2.decide(&[true, false]));
    }

    #[test]
    fn majority_poisson_binomial_matches_enumeration() {
        let s = vec![
            sensor(0.1, 0.3, 1.0),
            sensor(0.25, 0.2, 1.0),
            sensor(0.3, 0.35, 1.0),
            sensor(0.05, 0.45, 1.0),
            sensor(0.4, 0.1, 1.0),
        ];
        let c = ClusterSpec::new(s.clone(), 0.0).unwrap();
        let r = majority_threshold(&c);
        assert_eq!(r.min_ones, 3);
        assert!(r.gamma.is_none());
        let e = r.error_pair(&c);
        let (mut fa, mut md) = (0.0, 0.0);
        for mask in 0..32u32 {
            let bits: Vec<bool> = (0..5).map(|i| mask >> i & 1 == 1).collect();
            let p0: f64 = bits.iter().zip(&s).map(|(&b, x)| if b { x.p_fa() } else { 1.0 - x.p_fa() }).product();
            let p1: f64 = bits.iter().zip(&s).map(|(&b, x)| if b { 1.0 - x.p_md() } else { x.p_md() }).product();
            if r.decide(&bits) {
                fa += p0;
            } else {
                md += p1;
            }
        }
        assert!((e.p_fa - fa).abs() < 1e-14 && (e.p_md - md).abs() < 1e-14);
    }

    #[test]
    fn bennett_evaluator_reports_bound_methods() {
        let s = paper_system(30, 2, 0.2);
        let ev = Evaluator::auto(Caps::default());
        let e = ev.evaluate(&s).unwrap();
        assert!(e.cluster_errors.iter().all(|p| p.method == Method::Bennett));
        assert_eq!(e.fc_method, Method::Exact);
        let s = paper_system(2, 30, 0.2);
        let e = ev.evaluate(&s).unwrap();
        assert!(e.cluster_errors.iter().all(|p| p.method == Method::Exact));
        assert_eq!(e.fc_errors.method, Method::Bennett);
    }
}
