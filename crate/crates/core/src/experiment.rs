//! Declarative sweeps over link probability or cluster count.
//!
//! A sweep produces one [`CurvePoint`] per (swept value, curve). The
//! homogeneous curves share one threshold across clusters; the
//! heterogeneous curve tunes each cluster's threshold by coordinate descent
//! and averages over random sensor draws.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detection::{ClusterSpec, ErrorPair, Method, SensorSpec, SystemSpec};
use crate::error::{Error, Result};
use crate::optimizer::{
    build_grid, build_grids, gauss_seidel, homogeneous_equal_threshold_search, majority_threshold, Caps,
    Evaluator, DEFAULT_MAX_SWEEPS, DEFAULT_POINTS_PER_SENSOR, DEFAULT_TOL,
};
use crate::simulator::Simulator;

pub const PAPER_SCALE_SENSORS: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Curve {
    Exact,
    Majority,
    BennettOptimized,
    BennettLossHomogeneous,
    BennettLossHeterogeneous,
}

impl Curve {
    pub const ALL: [Curve; 5] = [
        Curve::Exact,
        Curve::Majority,
        Curve::BennettOptimized,
        Curve::BennettLossHomogeneous,
        Curve::BennettLossHeterogeneous,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Curve::Exact => "exact",
            Curve::Majority => "majority",
            Curve::BennettOptimized => "bennett_optimized",
            Curve::BennettLossHomogeneous => "bennett_loss_homogeneous",
            Curve::BennettLossHeterogeneous => "bennett_loss_heterogeneous",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Curve::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("curves: unknown curve '{s}'")))
    }
}

/// A scalar or a list of values to sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    fn values(&self) -> Vec<T> {
        match self {
            OneOrMany::One(v) => vec![v.clone()],
            OneOrMany::Many(v) => v.clone(),
        }
    }

    fn is_list(&self) -> bool {
        matches!(self, OneOrMany::Many(_))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorNoise {
    pub p_fa: f64,
    pub p_md: f64,
    /// Half-width of the uniform draw around each base value, relative to
    /// that value. Used by the heterogeneous curve.
    #[serde(default = "default_half_width")]
    pub relative_half_width: f64,
    #[serde(default = "default_realizations")]
    pub realizations: usize,
}

fn default_half_width() -> f64 {
    0.2
}

fn default_realizations() -> usize {
    100
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CapsConfig {
    #[serde(default = "default_cluster_cap")]
    pub cluster: usize,
    #[serde(default = "default_fc_cap")]
    pub fc: usize,
}

fn default_cluster_cap() -> usize {
    Caps::default().cluster
}

fn default_fc_cap() -> usize {
    Caps::default().fc
}

impl Default for CapsConfig {
    fn default() -> Self {
        let c = Caps::default();
        Self {
            cluster: c.cluster,
            fc: c.fc,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub total_sensors: usize,
    /// Omitted: sweep every divisor of `total_sensors`.
    #[serde(default)]
    pub cluster_count: Option<OneOrMany<usize>>,
    pub p_com: OneOrMany<f64>,
    pub prior_p1: f64,
    pub loss_fa: f64,
    pub loss_md: f64,
    pub sensor_noise: SensorNoise,
    #[serde(default = "default_points_per_sensor")]
    pub points_per_sensor: usize,
    #[serde(default = "default_curves")]
    pub curves: Vec<Curve>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub caps: CapsConfig,
    /// Trials for the simulated cross-check column; 0 disables it.
    #[serde(default)]
    pub mc_trials: u64,
}

fn default_points_per_sensor() -> usize {
    DEFAULT_POINTS_PER_SENSOR
}

fn default_curves() -> Vec<Curve> {
    Curve::ALL.to_vec()
}

/// Which parameter varies along the x axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    ClusterCount,
    PCom,
}

fn field_err(field: &str, msg: impl std::fmt::Display) -> Error {
    Error::InvalidArgument(format!("{field}: {msg}"))
}

fn divisors(n: usize) -> Vec<usize> {
    (1..=n).filter(|d| n % d == 0).collect()
}

impl ExperimentConfig {
    /// Desk-scale defaults: 60 sensors, every divisor as cluster count.
    pub fn desk_default() -> Self {
        Self {
            total_sensors: 60,
            cluster_count: None,
            p_com: OneOrMany::One(0.1),
            prior_p1: 0.4,
            loss_fa: 150.0,
            loss_md: 100.0,
            sensor_noise: SensorNoise {
                p_fa: 0.2,
                p_md: 0.3,
                relative_half_width: default_half_width(),
                realizations: default_realizations(),
            },
            points_per_sensor: DEFAULT_POINTS_PER_SENSOR,
            curves: default_curves(),
            seed: 0,
            caps: CapsConfig::default(),
            mc_trials: 0,
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::InvalidArgument(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidArgument(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn caps(&self) -> Caps {
        Caps {
            cluster: self.caps.cluster,
            fc: self.caps.fc,
        }
    }

    pub fn axis(&self) -> SweepAxis {
        match &self.cluster_count {
            None => SweepAxis::ClusterCount,
            Some(c) if c.is_list() => SweepAxis::ClusterCount,
            _ => SweepAxis::PCom,
        }
    }

    pub fn cluster_counts(&self) -> Vec<usize> {
        match &self.cluster_count {
            None => divisors(self.total_sensors),
            Some(c) => c.values(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.total_sensors == 0 {
            return Err(field_err("total_sensors", "must be at least 1"));
        }
        let counts = self.cluster_counts();
        if counts.is_empty() {
            return Err(field_err("cluster_count", "empty sweep list"));
        }
        if counts.contains(&0) {
            return Err(field_err("cluster_count", "must be at least 1"));
        }
        if let Some(OneOrMany::One(c)) = &self.cluster_count {
            if self.total_sensors % c != 0 {
                return Err(field_err(
                    "cluster_count",
                    format!("{c} does not divide total_sensors {}", self.total_sensors),
                ));
            }
        }
        let p_com = self.p_com.values();
        if p_com.is_empty() {
            return Err(field_err("p_com", "empty sweep list"));
        }
        if let Some(p) = p_com.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(field_err("p_com", format!("{p} is outside [0, 1]")));
        }
        if self.p_com.is_list() && self.axis() == SweepAxis::ClusterCount {
            return Err(field_err(
                "p_com",
                "only one of cluster_count and p_com may be a sweep list (an omitted cluster_count sweeps the divisors)",
            ));
        }
        if !(self.prior_p1 > 0.0 && self.prior_p1 < 1.0) {
            return Err(field_err("prior_p1", format!("{} is outside (0, 1)", self.prior_p1)));
        }
        for (name, v) in [("loss_fa", self.loss_fa), ("loss_md", self.loss_md)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(field_err(name, format!("{v} must be positive")));
            }
        }
        let n = &self.sensor_noise;
        for (name, v) in [("sensor_noise.p_fa", n.p_fa), ("sensor_noise.p_md", n.p_md)] {
            if !(v > 0.0 && v < 0.5) {
                return Err(field_err(name, format!("{v} is outside (0, 0.5)")));
            }
        }
        let h = n.relative_half_width;
        if !(0.0..1.0).contains(&h) {
            return Err(field_err("sensor_noise.relative_half_width", format!("{h} is outside [0, 1)")));
        }
        if n.p_fa * (1.0 + h) >= 0.5 || n.p_md * (1.0 + h) >= 0.5 {
            return Err(field_err(
                "sensor_noise.relative_half_width",
                format!("{h} lets a sampled probability reach 0.5"),
            ));
        }
        if self.curves.contains(&Curve::BennettLossHeterogeneous) && n.realizations == 0 {
            return Err(field_err("sensor_noise.realizations", "must be at least 1"));
        }
        if self.points_per_sensor < 2 {
            return Err(field_err("points_per_sensor", "must be at least 2"));
        }
        if self.curves.is_empty() {
            return Err(field_err("curves", "select at least one curve"));
        }
        Ok(())
    }
}

/// One output row. Numeric fields are `None` on skipped sweep points.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvePoint {
    pub x: f64,
    pub curve: Curve,
    pub loss: Option<f64>,
    pub p_fa: Option<f64>,
    pub p_md: Option<f64>,
    /// `None` marks a skipped sweep point.
    pub method: Option<Method>,
    pub mc_loss: Option<f64>,
}

impl CurvePoint {
    fn skipped(x: f64, curve: Curve) -> Self {
        Self {
            x,
            curve,
            loss: None,
            p_fa: None,
            p_md: None,
            method: None,
            mc_loss: None,
        }
    }
}

/// Swept point: cluster count and link probability.
#[derive(Debug, Clone, Copy)]
struct Point {
    x: f64,
    clusters: usize,
    p_com: f64,
}

fn sweep_points(cfg: &ExperimentConfig) -> Vec<Point> {
    match cfg.axis() {
        SweepAxis::ClusterCount => {
            let p_com = cfg.p_com.values()[0];
            cfg.cluster_counts()
                .into_iter()
                .map(|c| Point {
                    x: c as f64,
                    clusters: c,
                    p_com,
                })
                .collect()
        }
        SweepAxis::PCom => {
            let clusters = cfg.cluster_counts()[0];
            cfg.p_com
                .values()
                .into_iter()
                .map(|p| Point {
                    x: p,
                    clusters,
                    p_com: p,
                })
                .collect()
        }
    }
}

fn homogeneous_system(cfg: &ExperimentConfig, pt: &Point) -> Result<SystemSpec> {
    let n = &cfg.sensor_noise;
    let sensor = SensorSpec::new(n.p_fa, n.p_md, pt.p_com)?;
    SystemSpec::homogeneous(
        sensor,
        cfg.total_sensors / pt.clusters,
        pt.clusters,
        0.0,
        cfg.prior_p1,
        cfg.loss_fa,
        cfg.loss_md,
    )
}

/// `Bennett` if the evaluator uses a bound at either level.
fn mixed_method(evaluator: &Evaluator, system: &SystemSpec) -> Method {
    let cluster = evaluator.cluster_method(system.clusters()[0].len());
    let fc = evaluator.fc_method(system.cluster_count());
    if cluster == Method::Bennett || fc == Method::Bennett {
        Method::Bennett
    } else {
        Method::Exact
    }
}

fn row(x: f64, curve: Curve, system: &SystemSpec, fc: &ErrorPair, method: Method) -> CurvePoint {
    CurvePoint {
        x,
        curve,
        loss: Some(system.expected_loss(fc)),
        p_fa: Some(fc.p_fa),
        p_md: Some(fc.p_md),
        method: Some(method),
        mc_loss: None,
    }
}

fn simulate(system: &SystemSpec, trials: u64, seed: u64) -> Result<f64> {
    Ok(Simulator::new(system)?.run(trials, seed)?.empirical_loss)
}

/// Sensor specs for one heterogeneous draw: per sensor, p_fa then p_md,
/// each uniform within the relative half-width of its base value.
pub fn heterogeneous_sensors(
    noise: &SensorNoise,
    p_com: f64,
    count: usize,
    seed: u64,
    realization: u64,
) -> Result<Vec<SensorSpec>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(realization);
    let h = noise.relative_half_width;
    let mut draw = |base: f64| {
        if h == 0.0 {
            base
        } else {
            rng.random_range(base * (1.0 - h)..base * (1.0 + h))
        }
    };
    (0..count)
        .map(|_| {
            let a = draw(noise.p_fa);
            let b = draw(noise.p_md);
            SensorSpec::new(a, b, p_com)
        })
        .collect()
}

/// Thresholds from the shared-threshold problem of a system made of copies
/// of each cluster's average sensor, clamped to that cluster's range.
fn initial_thresholds(system: &SystemSpec, evaluator: &Evaluator, points_per_sensor: usize) -> Result<Vec<f64>> {
    system
        .clusters()
        .iter()
        .map(|c| {
            let proxy = SystemSpec::homogeneous(
                c.average_sensor(),
                c.len(),
                system.cluster_count(),
                0.0,
                system.p1(),
                system.loss_fa(),
                system.loss_md(),
            )?;
            let grid = build_grid(&proxy.clusters()[0], 0, points_per_sensor)?;
            let g = homogeneous_equal_threshold_search(&proxy, &grid, evaluator)?.gamma;
            Ok(c.clamp_gamma(g))
        })
        .collect()
}

/// Heterogeneous system for one draw, clusters taken as consecutive runs of
/// sensors.
fn heterogeneous_system(cfg: &ExperimentConfig, pt: &Point, realization: u64) -> Result<SystemSpec> {
    let sensors = heterogeneous_sensors(&cfg.sensor_noise, pt.p_com, cfg.total_sensors, cfg.seed, realization)?;
    let n = cfg.total_sensors / pt.clusters;
    let clusters = sensors
        .chunks(n)
        .map(|s| ClusterSpec::new(s.to_vec(), 0.0))
        .collect::<Result<Vec<_>>>()?;
    SystemSpec::new(clusters, cfg.prior_p1, cfg.loss_fa, cfg.loss_md)
}

fn heterogeneous_point(cfg: &ExperimentConfig, pt: &Point) -> Result<CurvePoint> {
    let evaluator = Evaluator::auto(cfg.caps());
    let runs = (0..cfg.sensor_noise.realizations as u64)
        .into_par_iter()
        .map(|r| -> Result<(ErrorPair, Option<f64>)> {
            let base = heterogeneous_system(cfg, pt, r)?;
            let start = base.with_gammas(&initial_thresholds(&base, &evaluator, cfg.points_per_sensor)?)?;
            let grids = build_grids(&start, cfg.points_per_sensor)?;
            let report = gauss_seidel(&start, &grids, DEFAULT_TOL, DEFAULT_MAX_SWEEPS, &evaluator)?;
            let mc = if cfg.mc_trials > 0 {
                let tuned = start.with_gammas(&report.thresholds)?;
                let trials = cfg.mc_trials.div_ceil(cfg.sensor_noise.realizations as u64);
                Some(Simulator::with_evaluator(&tuned, &evaluator)?.run(trials, cfg.seed.wrapping_add(r))?.empirical_loss)
            } else {
                None
            };
            Ok((report.fc_errors, mc))
        })
        .collect::<Result<Vec<_>>>()?;

    let k = runs.len() as f64;
    let p_fa = runs.iter().map(|(e, _)| e.p_fa).sum::<f64>() / k;
    let p_md = runs.iter().map(|(e, _)| e.p_md).sum::<f64>() / k;
    let probe = homogeneous_system(cfg, pt)?;
    let fc = ErrorPair::new(p_fa, p_md, Method::Bennett);
    let mut point = row(pt.x, Curve::BennettLossHeterogeneous, &probe, &fc, mixed_method(&evaluator, &probe));
    if cfg.mc_trials > 0 {
        point.mc_loss = Some(runs.iter().map(|(_, m)| m.unwrap_or(0.0)).sum::<f64>() / k);
    }
    Ok(point)
}

fn curve_point(cfg: &ExperimentConfig, pt: &Point, curve: Curve) -> Result<CurvePoint> {
    if cfg.total_sensors % pt.clusters != 0 {
        return Ok(CurvePoint::skipped(pt.x, curve));
    }
    if curve == Curve::BennettLossHeterogeneous {
        return heterogeneous_point(cfg, pt);
    }
    let system = homogeneous_system(cfg, pt)?;
    let grid = build_grid(&system.clusters()[0], 0, cfg.points_per_sensor)?;
    let exact = Evaluator::exact();
    let auto = Evaluator::auto(cfg.caps());

    let (point, deployed) = match curve {
        Curve::Exact => {
            let s = homogeneous_equal_threshold_search(&system, &grid, &exact)?;
            (
                row(pt.x, curve, &system, &s.fc_errors, Method::Exact),
                system.with_shared_gamma(s.gamma)?,
            )
        }
        Curve::Majority => {
            let rule = majority_threshold(&system.clusters()[0]);
            let gamma = rule.gamma.expect("homogeneous cluster");
            let tuned = system.with_shared_gamma(gamma)?;
            let eval = exact.evaluate(&tuned)?;
            (row(pt.x, curve, &system, &eval.fc_errors, Method::Exact), tuned)
        }
        Curve::BennettOptimized => {
            let s = homogeneous_equal_threshold_search(&system, &grid, &auto)?;
            let tuned = system.with_shared_gamma(s.gamma)?;
            let eval = exact.evaluate(&tuned)?;
            (row(pt.x, curve, &system, &eval.fc_errors, mixed_method(&auto, &system)), tuned)
        }
        Curve::BennettLossHomogeneous => {
            let s = homogeneous_equal_threshold_search(&system, &grid, &auto)?;
            (
                row(pt.x, curve, &system, &s.fc_errors, mixed_method(&auto, &system)),
                system.with_shared_gamma(s.gamma)?,
            )
        }
        Curve::BennettLossHeterogeneous => unreachable!(),
    };
    let mut point = point;
    if cfg.mc_trials > 0 {
        point.mc_loss = Some(simulate(&deployed, cfg.mc_trials, cfg.seed)?);
    }
    Ok(point)
}

/// Every requested curve at every swept value, sorted by curve name then x.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<CurvePoint>> {
    cfg.validate()?;
    let mut curves = cfg.curves.clone();
    curves.sort_by_key(|c| c.as_str());
    curves.dedup();
    let tasks: Vec<(Point, Curve)> = sweep_points(cfg)
        .into_iter()
        .flat_map(|p| curves.iter().map(move |&c| (p, c)))
        .collect();
    let mut points = tasks
        .par_iter()
        .map(|(p, c)| curve_point(cfg, p, *c))
        .collect::<Result<Vec<_>>>()?;
    sort_points(&mut points);
    Ok(points)
}

fn sort_points(points: &mut [CurvePoint]) {
    points.sort_by(|a, b| {
        a.curve
            .as_str()
            .cmp(b.curve.as_str())
            .then(a.x.total_cmp(&b.x))
    });
}

/// `%g`-style formatting with `sig` significant digits.
pub fn format_g(v: f64, sig: usize) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return if v.is_nan() {
            "nan".into()
        } else if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let sci = format!("{:.*e}", sig - 1, v);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= sig as i32 {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (sig as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{v:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// CSV text for the points. The `mc_loss` column appears only when some
/// point carries a simulated loss.
pub fn csv_string(points: &[CurvePoint]) -> String {
    let mut sorted = points.to_vec();
    sort_points(&mut sorted);
    let with_mc = sorted.iter().any(|p| p.mc_loss.is_some());
    let num = |v: Option<f64>| v.map(|x| format_g(x, 12)).unwrap_or_default();
    let mut out = String::from("x,curve,loss,p_fa,p_md,method");
    if with_mc {
        out.push_str(",mc_loss");
    }
    out.push('\n');
    for p in &sorted {
        let method = p.method.map(Method::as_str).unwrap_or("skipped");
        write!(
            out,
            "{},{},{},{},{},{}",
            format_g(p.x, 12),
            p.curve.as_str(),
            num(p.loss),
            num(p.p_fa),
            num(p.p_md),
            method
        )
        .unwrap();
        if with_mc {
            write!(out, ",{}", num(p.mc_loss)).unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn emit_csv(points: &[CurvePoint], path: &Path) -> Result<()> {
    std::fs::write(path, csv_string(points))
        .map_err(|e| Error::InvalidArgument(format!("{}: {e}", path.display())))
}
