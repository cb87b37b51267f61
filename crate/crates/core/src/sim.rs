//! Monte Carlo rollouts of the two-site catch process under a policy.
//!
//! Replication `k` draws site-1 catches from stream `2k` and site-2 catches
//! from stream `2k + 1` of a ChaCha8 generator seeded with the run seed, so
//! results do not depend on thread count and different policies run on the
//! same seed see the same catches (common random numbers).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::model::{payoff_z, ProblemSpec, SiteModel};
use crate::policy::{stop_index, Claim, DoublePolicy};

/// Lazy catch stream for one stage: each step draws the inter-arrival time
/// and then the mass by inverse cdf. Ends at the first catch past the
/// horizon.
pub struct ClaimStream<'a, R: Rng> {
    site: &'a SiteModel,
    now: f64,
    horizon: f64,
    rng: R,
    done: bool,
}

impl<R: Rng> Iterator for ClaimStream<'_, R> {
    type Item = Claim;

    fn next(&mut self) -> Option<Claim> {
        if self.done {
            return None;
        }
        let gap = self.site.inter_arrival.quantile(self.rng.random::<f64>());
        let mass = self.site.catch_size.quantile(self.rng.random::<f64>());
        let time = self.now + gap;
        if time > self.horizon {
            self.done = true;
            return None;
        }
        self.now = time;
        Some(Claim { time, mass })
    }
}

pub fn sample_stage<R: Rng>(site: &SiteModel, start: f64, horizon: f64, rng: R) -> ClaimStream<'_, R> {
    ClaimStream {
        site,
        now: start,
        horizon,
        rng,
        done: start > horizon,
    }
}

/// Generator for one site within one replication.
pub fn stream_rng(seed: u64, replication: u64, site: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2 * replication + site);
    rng
}

/// One simulated path.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Trajectory {
    pub site1_claims: Vec<Claim>,
    /// Switch time `τ1`.
    pub switch_time: f64,
    /// Site-1 mass at the switch.
    pub switch_mass: f64,
    pub site2_claims: Vec<Claim>,
    /// Stop time `τ2`.
    pub stop_time: f64,
    /// Total mass at the stop.
    pub total_mass: f64,
    pub payoff: f64,
}

impl Trajectory {
    /// The payoff recomputed from the stored fields.
    pub fn recompute_payoff(&self, spec: &ProblemSpec) -> f64 {
        payoff_z(spec, self.switch_time, self.stop_time, self.switch_mass, self.total_mass)
    }
}

pub fn rollout_with<R1: Rng, R2: Rng>(spec: &ProblemSpec, policy: &DoublePolicy, rng1: R1, rng2: R2) -> Trajectory {
    let t0 = spec.horizon;
    let first = stop_index(&policy.stage1, sample_stage(&spec.site1, 0.0, t0, rng1), 0.0, t0);
    let s = first.time;
    let second = stop_index(&policy.stage2, sample_stage(&spec.site2, s, t0, rng2), s, t0);
    let m = first.mass;
    let total = m + second.mass;
    Trajectory {
        site1_claims: first.claims,
        switch_time: s,
        switch_mass: m,
        site2_claims: second.claims,
        stop_time: second.time,
        total_mass: total,
        payoff: payoff_z(spec, s, second.time, m, total),
    }
}

/// Replication `k` of a run seeded with `seed`.
pub fn rollout(spec: &ProblemSpec, policy: &DoublePolicy, seed: u64, replication: u64) -> Trajectory {
    rollout_with(
        spec,
        policy,
        stream_rng(seed, replication, 0),
        stream_rng(seed, replication, 1),
    )
}

/// Mean payoff with its standard error.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MCEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n: usize,
    pub seed: u64,
}

fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Payoffs of replications `0..n`, in order.
pub fn payoffs(spec: &ProblemSpec, policy: &DoublePolicy, n: usize, seed: u64) -> Vec<f64> {
    (0..n as u64)
        .into_par_iter()
        .map(|k| rollout(spec, policy, seed, k).payoff)
        .collect()
}

pub fn estimate(spec: &ProblemSpec, policy: &DoublePolicy, n: usize, seed: u64) -> MCEstimate {
    assert!(n >= 2, "need at least two replications");
    let xs = payoffs(spec, policy, n, seed);
    let (mean, std_error) = mean_and_se(&xs);
    MCEstimate { mean, std_error, n, seed }
}

/// Trajectories of replications `0..n`, in order.
pub fn trajectories(spec: &ProblemSpec, policy: &DoublePolicy, n: usize, seed: u64) -> Vec<Trajectory> {
    (0..n as u64)
        .into_par_iter()
        .map(|k| rollout(spec, policy, seed, k))
        .collect()
}

/// CSV with columns `replication,stage,claim,time,mass`.
pub fn write_trajectories_csv<W: std::io::Write>(trajs: &[Trajectory], mut w: W) -> std::io::Result<()> {
    let mut s = String::from("replication,stage,claim,time,mass\n");
    for (k, t) in trajs.iter().enumerate() {
        for (stage, claims) in [(1, &t.site1_claims), (2, &t.site2_claims)] {
            for (i, c) in claims.iter().enumerate() {
                s.push_str(&format!("{k},{stage},{},{},{}\n", i + 1, c.time, c.mass));
            }
        }
    }
    w.write_all(s.as_bytes())
}

/// One perturbed policy compared with the reference on common random numbers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeRow {
    pub label: String,
    pub mean: f64,
    pub std_error: f64,
    /// Mean of `perturbed - reference` per replication.
    pub diff_mean: f64,
    pub diff_std_error: f64,
    /// `diff_mean > 3 * diff_std_error`.
    pub wins: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DominanceReport {
    pub reference: MCEstimate,
    pub rows: Vec<ProbeRow>,
}

impl DominanceReport {
    pub fn winners(&self) -> impl Iterator<Item = &ProbeRow> {
        self.rows.iter().filter(|r| r.wins)
    }
}

/// Estimate every perturbation against `reference` with common random
/// numbers; a row "wins" when its paired mean difference exceeds three
/// standard errors.
pub fn dominance_probe(
    spec: &ProblemSpec,
    reference: &DoublePolicy,
    perturbations: &[(String, DoublePolicy)],
    n: usize,
    seed: u64,
) -> DominanceReport {
    assert!(n >= 2, "need at least two replications");
    let base = payoffs(spec, reference, n, seed);
    let (mean, std_error) = mean_and_se(&base);
    let rows = perturbations
        .iter()
        .map(|(label, p)| {
            let xs = payoffs(spec, p, n, seed);
            let (m, se) = mean_and_se(&xs);
            let diffs: Vec<f64> = xs.iter().zip(&base).map(|(x, b)| x - b).collect();
            let (dm, dse) = mean_and_se(&diffs);
            ProbeRow {
                label: label.clone(),
                mean: m,
                std_error: se,
                diff_mean: dm,
                diff_std_error: dse,
                wins: dm > 3.0 * dse,
            }
        })
        .collect();
    DominanceReport {
        reference: MCEstimate { mean, std_error, n, seed },
        rows,
    }
}
