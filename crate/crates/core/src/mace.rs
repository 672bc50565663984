//! Multi-annotator competence estimation.
//!
//! Each item has a latent true label drawn uniformly from the scale's
//! categories. Every rating by rater `j` is, with probability `θ_j`, a copy of
//! the true label and otherwise a draw from the rater's spamming distribution
//! `ξ_j`. Parameters are fitted by EM with additive smoothing; smoothing acts
//! as Dirichlet pseudo-counts, so the traced objective is the log-likelihood
//! plus the log prior, which EM never decreases.

use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::agreement::{krippendorff_alpha, AlphaMetric};
use crate::error::{Error, Result};
use crate::matrix::RatingMatrix;
use crate::par;
use crate::rng::{self, domain};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaceConfig {
    pub iterations: usize,
    pub restarts: usize,
    /// Total pseudo-count per distribution, spread evenly over its outcomes.
    pub smoothing: f64,
    pub seed: u64,
    /// Objective improvement below which a restart counts as converged.
    pub tolerance: f64,
}

impl Default for MaceConfig {
    fn default() -> Self {
        Self { iterations: 50, restarts: 10, smoothing: 0.01, seed: rng::DEFAULT_SEED, tolerance: 1e-6 }
    }
}

impl MaceConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 || self.restarts == 0 {
            return Err(Error::validation("iterations and restarts must be positive"));
        }
        if !(self.smoothing > 0.0 && self.smoothing.is_finite()) {
            return Err(Error::validation("smoothing must be a positive number"));
        }
        if !(self.tolerance >= 0.0) {
            return Err(Error::validation("tolerance must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaceWarning {
    /// The selected restart hit the iteration limit before converging.
    NonConvergence,
    /// No item carries two or more ratings, so competence is unidentifiable.
    LowInformation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompetenceResult {
    pub raters: Vec<String>,
    /// Category values, lowest first; indexes the distributions below.
    pub categories: Vec<i64>,
    pub competence: Vec<f64>,
    pub spam_strategy: Vec<Vec<f64>>,
    pub posteriors: Vec<Vec<f64>>,
    /// Objective after initialisation and after every iteration of the
    /// selected restart.
    pub log_likelihood_trace: Vec<f64>,
    pub selected_restart: usize,
    /// Final objective of every restart.
    pub restart_objectives: Vec<f64>,
    pub config: MaceConfig,
    pub warnings: Vec<MaceWarning>,
}

impl CompetenceResult {
    pub fn competence_of(&self, rater: &str) -> Option<f64> {
        self.raters.iter().position(|r| r == rater).map(|i| self.competence[i])
    }
}

struct Params {
    theta: Vec<f64>,
    xi: Vec<Vec<f64>>,
}

struct Fit {
    params: Params,
    posteriors: Vec<Vec<f64>>,
    trace: Vec<f64>,
    converged: bool,
}

/// Ratings as category indices, per item.
struct Data {
    k: usize,
    n_raters: usize,
    items: Vec<Vec<(usize, usize)>>,
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

impl Data {
    /// Posterior over labels per item and the data log-likelihood.
    fn e_step(&self, p: &Params) -> (Vec<Vec<f64>>, f64) {
        let prior = -(self.k as f64).ln();
        let mut ll = 0.0;
        let mut posts = Vec::with_capacity(self.items.len());
        for ratings in &self.items {
            let mut logp = vec![prior; self.k];
            for &(j, a) in ratings {
                let spam = (1.0 - p.theta[j]) * p.xi[j][a];
                for (t, lp) in logp.iter_mut().enumerate() {
                    *lp += if t == a { (p.theta[j] + spam).ln() } else { spam.ln() };
                }
            }
            let z = log_sum_exp(&logp);
            ll += z;
            posts.push(logp.iter().map(|lp| (lp - z).exp()).collect());
        }
        (posts, ll)
    }

    fn log_prior(&self, p: &Params, smoothing: f64) -> f64 {
        let s2 = smoothing / 2.0;
        let sk = smoothing / self.k as f64;
        let mut lp = 0.0;
        for j in 0..self.n_raters {
            lp += s2 * (p.theta[j].ln() + (1.0 - p.theta[j]).ln());
            lp += sk * p.xi[j].iter().map(|x| x.ln()).sum::<f64>();
        }
        lp
    }

    fn m_step(&self, posts: &[Vec<f64>], p: &Params, smoothing: f64) -> Params {
        let s2 = smoothing / 2.0;
        let sk = smoothing / self.k as f64;
        let mut copy = vec![0.0; self.n_raters];
        let mut total = vec![0.0; self.n_raters];
        let mut spam = vec![vec![0.0; self.k]; self.n_raters];
        for (ratings, post) in self.items.iter().zip(posts) {
            for &(j, a) in ratings {
                let s = (1.0 - p.theta[j]) * p.xi[j][a];
                // Probability that this rating was a copy of the true label.
                let c = post[a] * p.theta[j] / (p.theta[j] + s);
                copy[j] += c;
                total[j] += 1.0;
                spam[j][a] += 1.0 - c;
            }
        }
        let theta = (0..self.n_raters).map(|j| (copy[j] + s2) / (total[j] + smoothing)).collect();
        let xi = spam
            .into_iter()
            .map(|row| {
                let denom: f64 = row.iter().sum::<f64>() + smoothing;
                row.into_iter().map(|c| (c + sk) / denom).collect()
            })
            .collect();
        Params { theta, xi }
    }

    fn run(&self, init: Params, cfg: &MaceConfig) -> Fit {
        let mut params = init;
        let (mut posts, ll) = self.e_step(&params);
        let mut trace = vec![ll + self.log_prior(&params, cfg.smoothing)];
        let mut converged = false;
        for _ in 0..cfg.iterations {
            params = self.m_step(&posts, &params, cfg.smoothing);
            let (p, ll) = self.e_step(&params);
            posts = p;
            let obj = ll + self.log_prior(&params, cfg.smoothing);
            let prev = *trace.last().unwrap();
            trace.push(obj);
            if (obj - prev).abs() <= cfg.tolerance {
                converged = true;
                break;
            }
        }
        Fit { params, posteriors: posts, trace, converged }
    }
}

/// Initial parameters for one restart. Each rater's stream is keyed by its
/// id, so reordering columns reorders the initialisation with them.
fn initial_params(raters: &[String], k: usize, seed: u64, restart: usize) -> Params {
    let mut theta = Vec::with_capacity(raters.len());
    let mut xi = Vec::with_capacity(raters.len());
    for r in raters {
        let mut g = rng::substream(seed ^ rng::fnv1a(r.as_bytes()), domain::MACE | restart as u64);
        theta.push(g.random_range(0.2..0.8));
        let raw: Vec<f64> = (0..k).map(|_| g.random_range(0.5..1.5)).collect();
        let sum: f64 = raw.iter().sum();
        xi.push(raw.into_iter().map(|x| x / sum).collect());
    }
    Params { theta, xi }
}

/// Fits the model with `config.restarts` random restarts and keeps the one
/// with the highest final objective (lowest index on ties).
pub fn em_fit(matrix: &RatingMatrix, config: &MaceConfig) -> Result<CompetenceResult> {
    config.validate()?;
    if matrix.present() == 0 {
        return Err(Error::InsufficientData("rating matrix has no ratings".into()));
    }
    let scale = *matrix.scale();
    let k = scale.categories();
    let categories: Vec<i64> = (scale.min..=scale.max).collect();
    let data = Data {
        k,
        n_raters: matrix.n_raters(),
        items: matrix
            .rows()
            .iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .filter_map(|(j, v)| v.map(|v| (j, (v - scale.min) as usize)))
                    .collect()
            })
            .collect(),
    };
    let fits = par::map_range(config.restarts, |r| {
        data.run(initial_params(matrix.raters(), k, config.seed, r), config)
    });
    let restart_objectives: Vec<f64> = fits.iter().map(|f| *f.trace.last().unwrap()).collect();
    let mut best = 0;
    for (i, &obj) in restart_objectives.iter().enumerate() {
        if obj > restart_objectives[best] {
            best = i;
        }
    }
    let fit = fits.into_iter().nth(best).unwrap();
    let mut warnings = Vec::new();
    if !fit.converged {
        warnings.push(MaceWarning::NonConvergence);
        log::warn!("competence estimation did not converge within {} iterations", config.iterations);
    }
    if data.items.iter().all(|r| r.len() < 2) {
        warnings.push(MaceWarning::LowInformation);
    }
    Ok(CompetenceResult {
        raters: matrix.raters().to_vec(),
        categories,
        competence: fit.params.theta,
        spam_strategy: fit.params.xi,
        posteriors: fit.posteriors,
        log_likelihood_trace: fit.trace,
        selected_restart: best,
        restart_objectives,
        config: *config,
        warnings,
    })
}

/// Most probable label per item; exact ties go to the lowest category.
pub fn posterior_labels(result: &CompetenceResult) -> Vec<i64> {
    result
        .posteriors
        .iter()
        .map(|post| {
            let mut best = 0;
            for (i, &p) in post.iter().enumerate() {
                if p > post[best] {
                    best = i;
                }
            }
            result.categories[best]
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterOutcome {
    pub threshold: f64,
    pub kept_raters: Vec<String>,
    pub total_raters: usize,
    pub kept_fraction: f64,
    pub covered_items: usize,
    pub total_items: usize,
    /// Covered items over all items.
    pub hit_coverage: f64,
    /// HITs with every item covered, and the number of HITs.
    pub covered_hits: usize,
    pub total_hits: usize,
    /// Mean number of kept ratings per covered item (0 when nothing is covered).
    pub avg_raters_per_covered_item: f64,
    /// Mean number of kept ratings over all items.
    pub avg_raters_per_item: f64,
    /// Agreement among the kept raters, when computed.
    pub alpha: Option<f64>,
}

/// Keeps raters with competence at or above `threshold`.
pub fn filter_by_competence(
    result: &CompetenceResult,
    matrix: &RatingMatrix,
    threshold: f64,
) -> Result<(FilterOutcome, RatingMatrix)> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::validation(format!("threshold {threshold} outside [0, 1]")));
    }
    if result.raters.as_slice() != matrix.raters() {
        return Err(Error::validation("competence result was fitted on different raters"));
    }
    let keep: Vec<usize> = (0..matrix.n_raters()).filter(|&j| result.competence[j] >= threshold).collect();
    let filtered = matrix.select_raters(&keep);
    let counts: Vec<usize> = filtered.rows().iter().map(|r| r.iter().flatten().count()).collect();
    let covered_items = counts.iter().filter(|&&c| c > 0).count();
    let kept_ratings: usize = counts.iter().sum();
    let n_items = matrix.n_items();

    let mut hits: BTreeSet<&str> = BTreeSet::new();
    let mut uncovered: BTreeSet<&str> = BTreeSet::new();
    for (item, &c) in matrix.items().iter().zip(&counts) {
        hits.insert(&item.hit_id);
        if c == 0 {
            uncovered.insert(&item.hit_id);
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let outcome = FilterOutcome {
        threshold,
        kept_raters: filtered.raters().to_vec(),
        total_raters: matrix.n_raters(),
        kept_fraction: ratio(keep.len(), matrix.n_raters()),
        covered_items,
        total_items: n_items,
        hit_coverage: ratio(covered_items, n_items),
        covered_hits: hits.len() - uncovered.len(),
        total_hits: hits.len(),
        avg_raters_per_covered_item: ratio(kept_ratings, covered_items),
        avg_raters_per_item: ratio(kept_ratings, n_items),
        alpha: None,
    };
    Ok((outcome, filtered))
}

/// One filter outcome per threshold, with α of the kept raters where it is
/// defined.
pub fn competence_table(
    result: &CompetenceResult,
    matrix: &RatingMatrix,
    thresholds: &[f64],
    metric: AlphaMetric,
) -> Result<Vec<FilterOutcome>> {
    thresholds
        .iter()
        .map(|&t| {
            let (mut outcome, filtered) = filter_by_competence(result, matrix, t)?;
            outcome.alpha = krippendorff_alpha(&filtered, metric).ok();
            Ok(outcome)
        })
        .collect()
}

pub fn competence_table_csv(rows: &[FilterOutcome]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "threshold",
        "alpha",
        "kept_workers",
        "total_workers",
        "kept_fraction",
        "covered_hits",
        "total_hits",
        "covered_items",
        "total_items",
        "avg_raters_per_covered_item",
    ])?;
    for r in rows {
        w.write_record([
            format!("{}", r.threshold),
            r.alpha.map(|a| format!("{a:.4}")).unwrap_or_default(),
            r.kept_raters.len().to_string(),
            r.total_raters.to_string(),
            format!("{:.4}", r.kept_fraction),
            r.covered_hits.to_string(),
            r.total_hits.to_string(),
            r.covered_items.to_string(),
            r.total_items.to_string(),
            format!("{:.4}", r.avg_raters_per_covered_item),
        ])?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}
