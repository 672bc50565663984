//! Resampling and aggregation statistics: bootstrap pass rates, permutation
//! tests between rounds, median grouping of raters and the pass-rate model.

use std::collections::BTreeMap;

use num_rational::Ratio;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::RatingMatrix;
use crate::par::{self, compensated_sum};
use crate::pipeline::Registry;
use crate::rng::{self, domain};

pub const DEFAULT_ITERATIONS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResampleSummary {
    pub statistic: String,
    pub n: usize,
    pub point_estimate: f64,
    pub mean: f64,
    /// Population standard deviation of the resampled statistics.
    pub std: f64,
    pub iterations: usize,
    pub seed: u64,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = compensated_sum(values.iter().copied()) / n;
    let var = compensated_sum(values.iter().map(|v| (v - mean) * (v - mean))) / n;
    (mean, var.sqrt())
}

/// Bootstrap of the mean of binary outcomes. Iteration `i` draws from its own
/// stream, so the result does not depend on scheduling.
pub fn bootstrap_pass_rate(outcomes: &[bool], iterations: usize, seed: u64) -> Result<ResampleSummary> {
    if outcomes.is_empty() {
        return Err(Error::InsufficientData("no outcomes to resample".into()));
    }
    if iterations == 0 {
        return Err(Error::validation("iterations must be at least 1"));
    }
    let n = outcomes.len();
    let rates = par::map_range(iterations, |i| {
        let mut g = rng::substream(seed, domain::BOOTSTRAP | i as u64);
        let hits = (0..n).filter(|_| outcomes[g.random_range(0..n)]).count();
        hits as f64 / n as f64
    });
    let (mean, std) = mean_std(&rates);
    Ok(ResampleSummary {
        statistic: "pass_rate".into(),
        n,
        point_estimate: outcomes.iter().filter(|&&o| o).count() as f64 / n as f64,
        mean,
        std,
        iterations,
        seed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermutationResult {
    pub n_a: usize,
    pub passes_a: usize,
    pub n_b: usize,
    pub passes_b: usize,
    /// Observed |rate_a − rate_b|.
    pub statistic: f64,
    /// Permutations whose statistic reached the observed one.
    pub count_at_least: usize,
    pub iterations: usize,
    /// `(count_at_least + 1) / (iterations + 1)`.
    pub p_value: f64,
    pub seed: u64,
}

/// Two-sided permutation test on the difference of pass rates. Statistics are
/// compared as integers, `|k_a·n_b − k_b·n_a|`, so ties are exact.
pub fn permutation_test(a: &[bool], b: &[bool], iterations: usize, seed: u64) -> Result<PermutationResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InsufficientData("both rounds need at least one outcome".into()));
    }
    if iterations == 0 {
        return Err(Error::validation("iterations must be at least 1"));
    }
    let (na, nb) = (a.len() as i64, b.len() as i64);
    let ka = a.iter().filter(|&&o| o).count() as i64;
    let kb = b.iter().filter(|&&o| o).count() as i64;
    let observed = (ka * nb - kb * na).abs();
    let pooled: Vec<bool> = a.iter().chain(b).copied().collect();
    let total = ka + kb;
    let hits = par::map_range(iterations, |i| {
        let mut g = rng::substream(seed, domain::PERMUTATION | i as u64);
        let mut v = pooled.clone();
        let (head, _) = v.partial_shuffle(&mut g, a.len());
        let pa = head.iter().filter(|&&o| o).count() as i64;
        (pa * nb - (total - pa) * na).abs() >= observed
    });
    let count = hits.into_iter().filter(|&h| h).count();
    Ok(PermutationResult {
        n_a: a.len(),
        passes_a: ka as usize,
        n_b: b.len(),
        passes_b: kb as usize,
        statistic: (ka as f64 / na as f64 - kb as f64 / nb as f64).abs(),
        count_at_least: count,
        iterations,
        p_value: (count + 1) as f64 / (iterations + 1) as f64,
        seed,
    })
}

/// Lower median of a non-empty slice.
pub fn lower_median(values: &[i64]) -> i64 {
    let mut v = values.to_vec();
    v.sort_unstable();
    v[(v.len() - 1) / 2]
}

/// Collapses each item's ratings into `groups` pseudo-raters, each the lower
/// median of a random group of `group_size` ratings. Every item must carry
/// exactly `groups × group_size` ratings.
pub fn median_grouping(matrix: &RatingMatrix, group_size: usize, groups: usize, seed: u64) -> Result<RatingMatrix> {
    if group_size == 0 || groups == 0 {
        return Err(Error::validation("group size and group count must be positive"));
    }
    let need = group_size * groups;
    for (item, row) in matrix.items().iter().zip(matrix.rows()) {
        let have = row.iter().flatten().count();
        if have != need {
            return Err(Error::validation(format!("item {item} has {have} ratings, expected {need}")));
        }
    }
    let cells = par::map_range(matrix.n_items(), |i| {
        let mut ratings: Vec<i64> = matrix.row(i).iter().flatten().copied().collect();
        let mut g = rng::substream(seed, domain::MEDIAN_GROUPING | i as u64);
        ratings.shuffle(&mut g);
        ratings.chunks(group_size).map(|c| Some(lower_median(c))).collect()
    });
    let raters = (1..=groups).map(|g| format!("group_{g}")).collect();
    RatingMatrix::new(matrix.items().to_vec(), raters, cells, *matrix.scale())
}

/// A proportion kept as integer counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rate {
    pub successes: u64,
    pub trials: u64,
}

impl Rate {
    pub fn ratio(self) -> Option<Ratio<u64>> {
        (self.trials > 0).then(|| Ratio::new(self.successes, self.trials))
    }

    pub fn value(self) -> Option<f64> {
        (self.trials > 0).then(|| self.successes as f64 / self.trials as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkerOutcome {
    pub worker_id: String,
    pub round: String,
    pub q: bool,
    pub e: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundPassRates {
    pub round: String,
    pub participants: u64,
    /// P(q = 1).
    pub qualification: Rate,
    /// P(e = 1 | q = 1).
    pub endurance_given_qualified: Rate,
    /// P(e = 1, q = 1), the joint expectation.
    pub joint: Rate,
    /// True when the round has no participants.
    pub undefined: bool,
}

impl RoundPassRates {
    fn from_outcomes<'a>(round: &str, outcomes: impl Iterator<Item = &'a WorkerOutcome>) -> Self {
        let (mut n, mut q, mut e) = (0, 0, 0);
        for o in outcomes {
            n += 1;
            q += u64::from(o.q);
            e += u64::from(o.e && o.q);
        }
        Self {
            round: round.to_string(),
            participants: n,
            qualification: Rate { successes: q, trials: n },
            endurance_given_qualified: Rate { successes: e, trials: q },
            joint: Rate { successes: e, trials: n },
            undefined: n == 0,
        }
    }

    /// `P(e, q) = P(e | q) · P(q)`, checked in exact rational arithmetic.
    pub fn joint_identity_holds(&self) -> bool {
        match (self.joint.ratio(), self.qualification.ratio()) {
            (None, _) => true,
            (Some(joint), Some(pq)) => {
                let cond = self.endurance_given_qualified.ratio().unwrap_or(Ratio::new(0, 1));
                joint == cond * pq
            }
            (Some(_), None) => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassRateModel {
    pub outcomes: Vec<WorkerOutcome>,
    pub rounds: Vec<RoundPassRates>,
    pub pooled: RoundPassRates,
}

impl PassRateModel {
    pub fn round_outcomes(&self, round: &str) -> (Vec<bool>, Vec<bool>) {
        self.outcomes.iter().filter(|o| o.round == round).map(|o| (o.q, o.e && o.q)).unzip()
    }

    pub fn pooled_outcomes(&self) -> (Vec<bool>, Vec<bool>) {
        self.outcomes.iter().map(|o| (o.q, o.e && o.q)).unzip()
    }
}

/// Indicator outcomes and empirical pass probabilities per round and pooled.
pub fn pass_rate_model(registry: &Registry) -> Result<PassRateModel> {
    let outcomes: Vec<WorkerOutcome> = registry
        .workers
        .iter()
        .map(|w| WorkerOutcome {
            worker_id: w.worker_id.clone(),
            round: w.round.clone(),
            q: w.category.advances(),
            e: w.endurance_passed,
        })
        .collect();
    if let Some(bad) = outcomes.iter().find(|o| o.e && !o.q) {
        return Err(Error::Invariant(format!(
            "worker {} passed endurance without passing qualification",
            bad.worker_id
        )));
    }
    let mut labels: Vec<String> = registry.rounds.iter().map(|r| r.label.clone()).collect();
    for o in &outcomes {
        if !labels.contains(&o.round) {
            labels.push(o.round.clone());
        }
    }
    let rounds = labels
        .iter()
        .map(|l| RoundPassRates::from_outcomes(l, outcomes.iter().filter(|o| &o.round == l)))
        .collect();
    let pooled = RoundPassRates::from_outcomes("Total", outcomes.iter());
    Ok(PassRateModel { outcomes, rounds, pooled })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityRow {
    pub task: String,
    pub round: String,
    pub summary: Option<ResampleSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairTest {
    pub task: String,
    pub round_a: String,
    pub round_b: String,
    pub result: PermutationResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub rows: Vec<StabilityRow>,
    pub pairs: Vec<PairTest>,
}

/// Bootstrap summaries per round and pooled for both tasks, plus a
/// permutation test between every two rounds. Each summary gets its own
/// seed derived from `seed` and its task and round.
pub fn stability_report(model: &PassRateModel, iterations: usize, seed: u64) -> Result<StabilityReport> {
    let mut by_round: BTreeMap<&str, (Vec<bool>, Vec<bool>)> = BTreeMap::new();
    for r in &model.rounds {
        by_round.insert(&r.round, model.round_outcomes(&r.round));
    }
    let derive = |task: &str, a: &str, b: &str| seed ^ rng::fnv1a(format!("{task}\u{1f}{a}\u{1f}{b}").as_bytes());
    let mut rows = Vec::new();
    let mut pairs = Vec::new();
    for task in ["qualification", "endurance"] {
        let pick = |o: &(Vec<bool>, Vec<bool>)| if task == "qualification" { o.0.clone() } else { o.1.clone() };
        for r in &model.rounds {
            let data = pick(&by_round[r.round.as_str()]);
            let summary = if data.is_empty() {
                None
            } else {
                Some(bootstrap_pass_rate(&data, iterations, derive(task, &r.round, ""))?)
            };
            rows.push(StabilityRow { task: task.into(), round: r.round.clone(), summary });
        }
        let pooled = pick(&model.pooled_outcomes());
        let summary = if pooled.is_empty() {
            None
        } else {
            Some(bootstrap_pass_rate(&pooled, iterations, derive(task, "Total", ""))?)
        };
        rows.push(StabilityRow { task: task.into(), round: "Total".into(), summary });
        for (i, ra) in model.rounds.iter().enumerate() {
            for rb in &model.rounds[i + 1..] {
                let a = pick(&by_round[ra.round.as_str()]);
                let b = pick(&by_round[rb.round.as_str()]);
                if a.is_empty() || b.is_empty() {
                    continue;
                }
                let result = permutation_test(&a, &b, iterations, derive(task, &ra.round, &rb.round))?;
                pairs.push(PairTest { task: task.into(), round_a: ra.round.clone(), round_b: rb.round.clone(), result });
            }
        }
    }
    Ok(StabilityReport { rows, pairs })
}

impl StabilityReport {
    /// Round × task rows with pass rate, bootstrap mean and std.
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["task", "round", "n", "pass_rate", "mean", "std"])?;
        for r in &self.rows {
            match &r.summary {
                Some(s) => w.write_record([
                    r.task.clone(),
                    r.round.clone(),
                    s.n.to_string(),
                    format!("{:.4}", s.point_estimate),
                    format!("{:.4}", s.mean),
                    format!("{:.4}", s.std),
                ])?,
                None => w.write_record([r.task.as_str(), r.round.as_str(), "0", "", "", ""])?,
            }
        }
        w.into_inner().map_err(|e| Error::Io(e.into_error()))
    }

    /// One row per pair of rounds and task.
    pub fn pairs_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["task", "round_a", "round_b", "rate_a", "rate_b", "statistic", "count", "iterations", "p_value"])?;
        for p in &self.pairs {
            let r = &p.result;
            w.write_record([
                p.task.clone(),
                p.round_a.clone(),
                p.round_b.clone(),
                format!("{:.4}", r.passes_a as f64 / r.n_a as f64),
                format!("{:.4}", r.passes_b as f64 / r.n_b as f64),
                format!("{:.4}", r.statistic),
                r.count_at_least.to_string(),
                r.iterations.to_string(),
                format!("{:.6}", r.p_value),
            ])?;
        }
        w.into_inner().map_err(|e| Error::Io(e.into_error()))
    }
}

/// `k` ones followed by `n − k` zeros.
pub fn outcomes(n: usize, k: usize) -> Vec<bool> {
    (0..n).map(|i| i < k).collect()
}
