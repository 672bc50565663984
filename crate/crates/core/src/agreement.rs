//! Inter-annotator agreement: Cohen's kappa, Krippendorff's alpha and
//! Spearman's rank correlation.
//!
//! Conventions:
//! - kappa drops positions where either side is missing; alpha keeps every
//!   unit with at least two ratings and pairs values within it.
//! - kappa returns 1.0 when chance agreement is 1 (both raters used a single,
//!   identical category); alpha returns 1.0 when expected disagreement is 0.
//! - Spearman intervals use the Fisher z-transform; kappa intervals use the
//!   percentile bootstrap over items. Every interval carries its method.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::matrix::RatingMatrix;
use crate::{par, rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlphaMetric {
    Nominal,
    Ordinal,
    #[default]
    Interval,
}

impl std::str::FromStr for AlphaMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nominal" => Ok(Self::Nominal),
            "ordinal" => Ok(Self::Ordinal),
            "interval" => Ok(Self::Interval),
            other => Err(Error::validation(format!("unknown alpha metric `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KappaWeights {
    #[default]
    Unweighted,
    Linear,
    Quadratic,
}

impl std::str::FromStr for KappaWeights {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unweighted" | "none" => Ok(Self::Unweighted),
            "linear" => Ok(Self::Linear),
            "quadratic" => Ok(Self::Quadratic),
            other => Err(Error::validation(format!("unknown kappa weighting `{other}`"))),
        }
    }
}

fn complete_pairs<T: Copy>(a: &[Option<T>], b: &[Option<T>]) -> Result<Vec<(T, T)>> {
    if a.len() != b.len() {
        return Err(Error::validation(format!(
            "sequences differ in length ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    Ok(a.iter().zip(b).filter_map(|(x, y)| Some(((*x)?, (*y)?))).collect())
}

/// Unweighted Cohen's kappa over positions present in both sequences.
pub fn cohen_kappa(a: &[Option<i64>], b: &[Option<i64>]) -> Result<f64> {
    let pairs = complete_pairs(a, b)?;
    kappa_of_pairs(&pairs, KappaWeights::Unweighted)
}

/// Cohen's kappa with optional linear or quadratic disagreement weights.
pub fn cohen_kappa_weighted(a: &[Option<i64>], b: &[Option<i64>], weights: KappaWeights) -> Result<f64> {
    let pairs = complete_pairs(a, b)?;
    kappa_of_pairs(&pairs, weights)
}

fn kappa_of_pairs(pairs: &[(i64, i64)], weights: KappaWeights) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::InsufficientOverlap);
    }
    match weights {
        KappaWeights::Unweighted => Ok(unweighted_kappa(pairs)),
        _ => Ok(weighted_kappa(pairs, weights)),
    }
}

fn unweighted_kappa(pairs: &[(i64, i64)]) -> f64 {
    // integer form: (n * agree - sum_c a_c b_c) / (n^2 - sum_c a_c b_c)
    let n = pairs.len() as i128;
    let mut margins: BTreeMap<i64, (i128, i128)> = BTreeMap::new();
    let mut agree = 0i128;
    for &(x, y) in pairs {
        margins.entry(x).or_default().0 += 1;
        margins.entry(y).or_default().1 += 1;
        agree += i128::from(x == y);
    }
    let chance: i128 = margins.values().map(|(ca, cb)| ca * cb).sum();
    let denom = n * n - chance;
    if denom == 0 {
        return 1.0;
    }
    (n * agree - chance) as f64 / denom as f64
}

fn weighted_kappa(pairs: &[(i64, i64)], weights: KappaWeights) -> f64 {
    let lo = pairs.iter().map(|p| p.0.min(p.1)).min().unwrap_or(0);
    let hi = pairs.iter().map(|p| p.0.max(p.1)).max().unwrap_or(0);
    if lo == hi {
        return 1.0;
    }
    let span = (hi - lo) as f64;
    let w = |x: i64, y: i64| {
        let d = (x - y).abs() as f64 / span;
        match weights {
            KappaWeights::Linear => d,
            _ => d * d,
        }
    };
    let n = pairs.len() as f64;
    let mut ma: BTreeMap<i64, f64> = BTreeMap::new();
    let mut mb: BTreeMap<i64, f64> = BTreeMap::new();
    let mut observed = 0.0;
    for &(x, y) in pairs {
        *ma.entry(x).or_default() += 1.0;
        *mb.entry(y).or_default() += 1.0;
        observed += w(x, y);
    }
    observed /= n;
    let mut expected = 0.0;
    for (&x, &cx) in &ma {
        for (&y, &cy) in &mb {
            expected += w(x, y) * cx * cy;
        }
    }
    expected /= n * n;
    if expected == 0.0 {
        return 1.0;
    }
    1.0 - observed / expected
}

/// Confidence interval with the method that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub low: f64,
    pub high: f64,
    pub level: f64,
    pub method: IntervalMethod,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IntervalMethod {
    FisherZ,
    PercentileBootstrap,
}

fn check_level(level: f64) -> Result<()> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::validation(format!("confidence level {level} outside (0, 1)")));
    }
    Ok(())
}

/// Percentile-bootstrap interval for unweighted kappa, resampling the
/// overlapping positions with replacement.
pub fn kappa_bootstrap_ci(
    a: &[Option<i64>],
    b: &[Option<i64>],
    level: f64,
    iterations: usize,
    seed: u64,
) -> Result<Interval> {
    check_level(level)?;
    if iterations == 0 {
        return Err(Error::validation("bootstrap needs at least one iteration"));
    }
    let pairs = complete_pairs(a, b)?;
    if pairs.is_empty() {
        return Err(Error::InsufficientOverlap);
    }
    let mut stats = par::map_range(iterations, |it| {
        let mut r = rng::substream(seed, rng::domain::KAPPA_BOOTSTRAP | it as u64);
        let sample: Vec<(i64, i64)> =
            (0..pairs.len()).map(|_| pairs[r.random_range(0..pairs.len())]).collect();
        unweighted_kappa(&sample)
    });
    stats.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    Ok(Interval {
        low: quantile_sorted(&stats, tail),
        high: quantile_sorted(&stats, 1.0 - tail),
        level,
        method: IntervalMethod::PercentileBootstrap,
    })
}

fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    // linear interpolation between closest ranks
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Symmetric rater × rater kappa grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseKappa {
    pub raters: Vec<String>,
    /// `None` where the pair shares fewer than two items.
    pub kappa: Vec<Vec<Option<f64>>>,
    pub n_items: Vec<Vec<usize>>,
    pub weights: KappaWeights,
}

impl PairwiseKappa {
    /// Off-diagonal pair with the highest kappa.
    pub fn max_pair(&self) -> Option<(&str, &str, f64)> {
        self.off_diagonal()
            .max_by(|x, y| x.2.total_cmp(&y.2))
            .map(|(i, j, v)| (self.raters[i].as_str(), self.raters[j].as_str(), v))
    }

    /// (min, max) over defined off-diagonal pairs.
    pub fn range(&self) -> Option<(f64, f64)> {
        let vals: Vec<f64> = self.off_diagonal().map(|p| p.2).collect();
        if vals.is_empty() {
            return None;
        }
        let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Some((lo, hi))
    }

    /// Defined upper-triangle entries `(i, j, kappa)` with `i < j`.
    pub fn off_diagonal(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let n = self.raters.len();
        (0..n).flat_map(move |i| ((i + 1)..n).filter_map(move |j| self.kappa[i][j].map(|v| (i, j, v))))
    }

    pub fn to_heatmap_csv(&self) -> Result<Vec<u8>> {
        heatmap_csv(&self.raters, &self.kappa)
    }
}

/// Kappa for every unordered rater pair over their shared items.
pub fn pairwise_kappa(matrix: &RatingMatrix, weights: KappaWeights) -> Result<PairwiseKappa> {
    let n = matrix.n_raters();
    if n < 2 {
        return Err(Error::InsufficientData(format!("{n} rater(s); pairwise kappa needs 2")));
    }
    let columns: Vec<Vec<Option<i64>>> = (0..n).map(|r| matrix.column(r)).collect();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).collect();
    let results = par::map_slice(&pairs, |&(i, j)| {
        let shared = complete_pairs(&columns[i], &columns[j]).unwrap_or_default();
        let k = if shared.len() >= 2 { kappa_of_pairs(&shared, weights).ok() } else { None };
        (shared.len(), k)
    });
    let mut kappa = vec![vec![None; n]; n];
    let mut n_items = vec![vec![0; n]; n];
    for (&(i, j), (count, k)) in pairs.iter().zip(results) {
        kappa[i][j] = k;
        kappa[j][i] = k;
        n_items[i][j] = count;
        n_items[j][i] = count;
    }
    Ok(PairwiseKappa { raters: matrix.raters().to_vec(), kappa, n_items, weights })
}

/// Pairwise kappa restricted to one question position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionKappa {
    pub question_id: String,
    pub kappa: PairwiseKappa,
}

/// Pairwise kappa per question id: all first texts, all second texts, ...
pub fn pairwise_kappa_by_question(matrix: &RatingMatrix, weights: KappaWeights) -> Result<Vec<QuestionKappa>> {
    let mut order: Vec<&str> = Vec::new();
    for item in matrix.items() {
        if !order.contains(&item.question_id.as_str()) {
            order.push(&item.question_id);
        }
    }
    order
        .into_iter()
        .map(|q| {
            let rows: Vec<usize> =
                (0..matrix.n_items()).filter(|&i| matrix.items()[i].question_id == q).collect();
            Ok(QuestionKappa {
                question_id: q.to_string(),
                kappa: pairwise_kappa(&matrix.select_items(&rows), weights)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaResult {
    pub value: f64,
    pub metric: AlphaMetric,
    /// Number of pairable values.
    pub pairable: usize,
    /// Units with at least two ratings.
    pub units: usize,
}

/// Krippendorff's alpha from the coincidence matrix of pairable values.
pub fn krippendorff_alpha(matrix: &RatingMatrix, metric: AlphaMetric) -> Result<f64> {
    alpha_details(matrix, metric).map(|r| r.value)
}

pub fn alpha_details(matrix: &RatingMatrix, metric: AlphaMetric) -> Result<AlphaResult> {
    if matrix.n_raters() < 2 {
        return Err(Error::InsufficientData("alpha needs at least two raters".into()));
    }
    let units: Vec<Vec<i64>> = matrix
        .rows()
        .iter()
        .map(|row| row.iter().flatten().copied().collect::<Vec<_>>())
        .filter(|vals| vals.len() >= 2)
        .collect();
    if units.is_empty() {
        return Err(Error::InsufficientData("no unit has two or more ratings".into()));
    }

    let mut values: Vec<i64> = units.iter().flatten().copied().collect();
    values.sort_unstable();
    values.dedup();
    let index: BTreeMap<i64, usize> = values.iter().enumerate().map(|(i, v)| (*v, i)).collect();
    let k = values.len();

    let mut coincidence = vec![vec![0.0_f64; k]; k];
    for unit in &units {
        let m = unit.len() as f64;
        let mut counts = vec![0.0_f64; k];
        for v in unit {
            counts[index[v]] += 1.0;
        }
        for c in 0..k {
            if counts[c] == 0.0 {
                continue;
            }
            for d in 0..k {
                let pairs = counts[c] * (counts[d] - if c == d { 1.0 } else { 0.0 });
                if pairs > 0.0 {
                    coincidence[c][d] += pairs / (m - 1.0);
                }
            }
        }
    }
    let marginals: Vec<f64> = coincidence.iter().map(|row| par::compensated_sum(row.iter().copied())).collect();
    let n = par::compensated_sum(marginals.iter().copied());

    let delta = |c: usize, d: usize| -> f64 {
        if c == d {
            return 0.0;
        }
        match metric {
            AlphaMetric::Nominal => 1.0,
            AlphaMetric::Interval => {
                let diff = (values[c] - values[d]) as f64;
                diff * diff
            }
            AlphaMetric::Ordinal => {
                let (lo, hi) = if c < d { (c, d) } else { (d, c) };
                let between: f64 = marginals[lo..=hi].iter().sum();
                let v = between - (marginals[c] + marginals[d]) / 2.0;
                v * v
            }
        }
    };

    let mut observed = 0.0;
    let mut expected = 0.0;
    for c in 0..k {
        for d in 0..k {
            let w = delta(c, d);
            observed += coincidence[c][d] * w;
            expected += marginals[c] * marginals[d] * w;
        }
    }
    let value = if expected == 0.0 { 1.0 } else { 1.0 - (n - 1.0) * observed / expected };
    Ok(AlphaResult { value, metric, pairable: n.round() as usize, units: units.len() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpearmanResult {
    pub rho: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n: usize,
    pub level: f64,
    pub method: IntervalMethod,
}

/// Average ranks (1-based), ties sharing the mean of their positions.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            ranks[o] = avg;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Fisher-z interval for a correlation estimated from `n` pairs.
pub fn fisher_interval(rho: f64, n: usize, level: f64) -> Result<(f64, f64)> {
    check_level(level)?;
    if n <= 3 {
        return Ok((-1.0, 1.0));
    }
    if rho.abs() >= 1.0 {
        return Ok((rho, rho));
    }
    let z = rho.atanh();
    let se = 1.0 / ((n - 3) as f64).sqrt();
    let crit = Normal::standard().inverse_cdf(1.0 - (1.0 - level) / 2.0);
    Ok(((z - crit * se).tanh(), (z + crit * se).tanh()))
}

/// Spearman's rho with a Fisher-z confidence interval.
pub fn spearman(a: &[Option<f64>], b: &[Option<f64>], ci_level: f64) -> Result<SpearmanResult> {
    check_level(ci_level)?;
    let pairs = complete_pairs(a, b)?;
    if pairs.len() < 3 {
        return Err(Error::InsufficientData(format!("{} complete pairs; spearman needs 3", pairs.len())));
    }
    let xs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let rho = pearson(&average_ranks(&xs), &average_ranks(&ys))
        .ok_or_else(|| Error::UndefinedCorrelation("a ranked sequence has zero variance".into()))?;
    let (ci_low, ci_high) = fisher_interval(rho, pairs.len(), ci_level)?;
    Ok(SpearmanResult { rho, ci_low, ci_high, n: pairs.len(), level: ci_level, method: IntervalMethod::FisherZ })
}

fn as_f64(col: &[Option<i64>]) -> Vec<Option<f64>> {
    col.iter().map(|c| c.map(|v| v as f64)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseSpearman {
    pub raters: Vec<String>,
    /// `None` on the diagonal and where the pair is undefined.
    pub entries: Vec<Vec<Option<SpearmanResult>>>,
}

pub fn pairwise_spearman(matrix: &RatingMatrix, ci_level: f64) -> Result<PairwiseSpearman> {
    check_level(ci_level)?;
    let n = matrix.n_raters();
    let columns: Vec<Vec<Option<f64>>> = (0..n).map(|r| as_f64(&matrix.column(r))).collect();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j))).collect();
    let results = par::map_slice(&pairs, |&(i, j)| spearman(&columns[i], &columns[j], ci_level).ok());
    let mut entries = vec![vec![None; n]; n];
    for (&(i, j), r) in pairs.iter().zip(results) {
        entries[i][j] = r;
        entries[j][i] = r;
    }
    Ok(PairwiseSpearman { raters: matrix.raters().to_vec(), entries })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgreementOptions {
    pub metric: AlphaMetric,
    pub kappa_weights: KappaWeights,
    pub spearman: bool,
    pub ci_level: f64,
}

impl Default for AgreementOptions {
    fn default() -> Self {
        Self { metric: AlphaMetric::Interval, kappa_weights: KappaWeights::Unweighted, spearman: false, ci_level: 0.95 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub raters: Vec<String>,
    pub n_items: usize,
    pub pairwise_kappa: PairwiseKappa,
    pub kappa_by_question: Vec<QuestionKappa>,
    pub alpha: AlphaResult,
    pub spearman: Option<PairwiseSpearman>,
}

impl AgreementReport {
    pub fn kappa_heatmap_csv(&self) -> Result<Vec<u8>> {
        self.pairwise_kappa.to_heatmap_csv()
    }

    pub fn spearman_heatmap_csv(&self) -> Result<Option<Vec<u8>>> {
        self.spearman
            .as_ref()
            .map(|s| {
                let grid: Vec<Vec<Option<f64>>> =
                    s.entries.iter().map(|row| row.iter().map(|e| e.map(|r| r.rho)).collect()).collect();
                heatmap_csv(&s.raters, &grid)
            })
            .transpose()
    }
}

pub fn agreement_report(matrix: &RatingMatrix, opts: &AgreementOptions) -> Result<AgreementReport> {
    Ok(AgreementReport {
        raters: matrix.raters().to_vec(),
        n_items: matrix.n_items(),
        pairwise_kappa: pairwise_kappa(matrix, opts.kappa_weights)?,
        kappa_by_question: pairwise_kappa_by_question(matrix, opts.kappa_weights)?,
        alpha: alpha_details(matrix, opts.metric)?,
        spearman: if opts.spearman { Some(pairwise_spearman(matrix, opts.ci_level)?) } else { None },
    })
}

/// Rater × rater grid as CSV; empty cells for absent pairs.
pub fn heatmap_csv(raters: &[String], grid: &[Vec<Option<f64>>]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec![String::from("rater")];
    header.extend(raters.iter().cloned());
    w.write_record(&header)?;
    for (r, row) in raters.iter().zip(grid) {
        let mut rec = vec![r.clone()];
        rec.extend(row.iter().map(|v| v.map(|x| format!("{x:.6}")).unwrap_or_default()));
        w.write_record(&rec)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}
