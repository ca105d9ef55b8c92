//! Monte Carlo sampling of the full detection chain.
//!
//! Each trial draws the hypothesis, every sensor bit and every sensor link,
//! then runs the cluster and fusion-center rules. Trial `i` uses its own
//! ChaCha8 stream (`seed`, stream `i`), so results do not depend on how the
//! trials are split across threads.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detection::{cluster_decide, fc_decide, fc_weights, FusionWeights, SystemSpec};
use crate::error::{Error, Result};
use crate::optimizer::Evaluator;

/// Raw draws and decisions of one trial.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub truth: bool,
    pub sensor_bits: Vec<Vec<bool>>,
    pub tau: Vec<bool>,
    pub verdicts: Vec<bool>,
    pub fc_decision: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Replay {
    Consistent,
    Inconsistent,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimSummary {
    pub trials: u64,
    pub seed: u64,
    pub h0_trials: u64,
    pub h1_trials: u64,
    pub false_alarms: u64,
    pub missed_detections: u64,
    /// Rates are conditional on the true hypothesis; 0 when it never occurred.
    pub empirical_p_fa: f64,
    pub empirical_p_md: f64,
    /// Loss from the conditional rates and the configured prior.
    pub empirical_loss: f64,
    /// Number of trials in which each cluster reached the fusion center.
    pub tau_counts: Vec<u64>,
}

#[derive(Debug, Clone, Default)]
struct Counts {
    h0: u64,
    h1: u64,
    fa: u64,
    md: u64,
    tau: Vec<u64>,
}

impl Counts {
    fn add(&mut self, r: &TrialRecord) {
        if self.tau.is_empty() {
            self.tau = vec![0; r.tau.len()];
        }
        if r.truth {
            self.h1 += 1;
            self.md += u64::from(!r.fc_decision);
        } else {
            self.h0 += 1;
            self.fa += u64::from(r.fc_decision);
        }
        for (c, &t) in self.tau.iter_mut().zip(&r.tau) {
            *c += u64::from(t);
        }
    }

    fn merge(mut self, other: Counts) -> Counts {
        if self.tau.is_empty() {
            return other;
        }
        self.h0 += other.h0;
        self.h1 += other.h1;
        self.fa += other.fa;
        self.md += other.md;
        for (a, b) in self.tau.iter_mut().zip(other.tau) {
            *a += b;
        }
        self
    }
}

fn bernoulli(rng: &mut ChaCha8Rng, p: f64) -> bool {
    rng.random::<f64>() < p
}

/// Sampler bound to one system and its fusion weights.
#[derive(Debug, Clone)]
pub struct Simulator<'a> {
    system: &'a SystemSpec,
    weights: Vec<FusionWeights>,
}

impl<'a> Simulator<'a> {
    /// Fusion weights from exact cluster error probabilities.
    pub fn new(system: &'a SystemSpec) -> Result<Self> {
        Self::with_evaluator(system, &Evaluator::exact())
    }

    pub fn with_evaluator(system: &'a SystemSpec, evaluator: &Evaluator) -> Result<Self> {
        let errors = system
            .clusters()
            .iter()
            .map(|c| evaluator.cluster_errors(c))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            system,
            weights: fc_weights(&errors),
        })
    }

    pub fn weights(&self) -> &[FusionWeights] {
        &self.weights
    }

    /// Draw order: hypothesis, then for each cluster and each sensor in
    /// order the measurement bit followed by the link.
    pub fn trial(&self, seed: u64, index: u64) -> TrialRecord {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index);
        let truth = bernoulli(&mut rng, self.system.p1());
        let n = self.system.cluster_count();
        let mut sensor_bits = Vec::with_capacity(n);
        let mut tau = Vec::with_capacity(n);
        let mut verdicts = Vec::with_capacity(n);
        for cluster in self.system.clusters() {
            let mut bits = Vec::with_capacity(cluster.len());
            let mut up = false;
            for s in cluster.sensors() {
                let one = if truth {
                    !bernoulli(&mut rng, s.p_md())
                } else {
                    bernoulli(&mut rng, s.p_fa())
                };
                bits.push(one);
                up |= bernoulli(&mut rng, s.p_com());
            }
            verdicts.push(cluster_decide(&bits, cluster).expect("bit count matches cluster"));
            sensor_bits.push(bits);
            tau.push(up);
        }
        let fc_decision = fc_decide(&tau, &verdicts, &self.weights, self.system.fc_threshold())
            .expect("one entry per cluster");
        TrialRecord {
            truth,
            sensor_bits,
            tau,
            verdicts,
            fc_decision,
        }
    }

    pub fn run(&self, trials: u64, seed: u64) -> Result<SimSummary> {
        if trials == 0 {
            return Err(Error::InvalidArgument("trials must be at least 1".into()));
        }
        let counts = (0..trials)
            .into_par_iter()
            .fold(Counts::default, |mut c, i| {
                c.add(&self.trial(seed, i));
                c
            })
            .reduce(Counts::default, Counts::merge);

        let rate = |k: u64, n: u64| if n == 0 { 0.0 } else { k as f64 / n as f64 };
        let p_fa = rate(counts.fa, counts.h0);
        let p_md = rate(counts.md, counts.h1);
        let s = self.system;
        Ok(SimSummary {
            trials,
            seed,
            h0_trials: counts.h0,
            h1_trials: counts.h1,
            false_alarms: counts.fa,
            missed_detections: counts.md,
            empirical_p_fa: p_fa,
            empirical_p_md: p_md,
            empirical_loss: s.p0() * p_fa * s.loss_fa() + s.p1() * p_md * s.loss_md(),
            tau_counts: counts.tau,
        })
    }

    /// Recomputes verdicts and the fusion decision from the recorded bits
    /// and links.
    pub fn replay(&self, record: &TrialRecord) -> Result<Replay> {
        let n = self.system.cluster_count();
        for len in [record.sensor_bits.len(), record.tau.len(), record.verdicts.len()] {
            if len != n {
                return Err(Error::LengthMismatch {
                    expected: n,
                    got: len,
                });
            }
        }
        let mut verdicts = Vec::with_capacity(n);
        for (bits, cluster) in record.sensor_bits.iter().zip(self.system.clusters()) {
            verdicts.push(cluster_decide(bits, cluster)?);
        }
        let fc = fc_decide(&record.tau, &verdicts, &self.weights, self.system.fc_threshold())?;
        Ok(if verdicts == record.verdicts && fc == record.fc_decision {
            Replay::Consistent
        } else {
            Replay::Inconsistent
        })
    }

    /// Writes trials `0..trials` as JSON lines.
    pub fn write_trace<W: Write>(&self, trials: u64, seed: u64, mut out: W) -> Result<()> {
        for i in 0..trials {
            let line = serde_json::to_string(&self.trial(seed, i))
                .map_err(|e| Error::InvalidArgument(e.to_string()))?;
            writeln!(out, "{line}").map_err(|e| Error::InvalidArgument(format!("trace write: {e}")))?;
        }
        Ok(())
    }
}

pub fn run_trials(system: &SystemSpec, trials: u64, seed: u64) -> Result<SimSummary> {
    Simulator::new(system)?.run(trials, seed)
}

pub fn replay(record: &TrialRecord, system: &SystemSpec) -> Result<Replay> {
    Simulator::new(system)?.replay(record)
}
