//! Two-step recruitment: qualification grading, endurance tracking,
//! survival over completed HITs, and cost accounting.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{AnnotationRecord, AnswerKey, Dimension};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum WorkerCategory {
    Gold,
    Silver,
    Bronze,
    Block,
}

impl WorkerCategory {
    /// GOLD and SILVER workers move on to the endurance task.
    pub fn advances(self) -> bool {
        matches!(self, WorkerCategory::Gold | WorkerCategory::Silver)
    }
}

/// Maximum mistake counts for GOLD and SILVER. The default reads SILVER as
/// exactly one mistake in total across all graded cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryThresholds {
    pub gold_max_mistakes: usize,
    pub silver_max_mistakes: usize,
}

impl Default for CategoryThresholds {
    fn default() -> Self {
        Self { gold_max_mistakes: 0, silver_max_mistakes: 1 }
    }
}

impl CategoryThresholds {
    pub fn validate(&self) -> Result<()> {
        if self.silver_max_mistakes < self.gold_max_mistakes {
            return Err(Error::validation("silver threshold below gold threshold"));
        }
        Ok(())
    }
}

/// Category from a mistake count and the attention-check outcome.
pub fn categorize(mistakes: usize, attention_passed: bool, thresholds: &CategoryThresholds) -> WorkerCategory {
    if !attention_passed {
        WorkerCategory::Block
    } else if mistakes <= thresholds.gold_max_mistakes {
        WorkerCategory::Gold
    } else if mistakes <= thresholds.silver_max_mistakes {
        WorkerCategory::Silver
    } else {
        WorkerCategory::Bronze
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grade {
    pub category: WorkerCategory,
    pub mistakes: usize,
    pub attention_passed: bool,
}

/// Grades one qualification submission given a lookup from question id to
/// the worker's answer. Binary answers are 1 for "satisfied" and 0 otherwise.
pub fn grade_answers(
    answer: impl Fn(&str) -> Option<i64>,
    key: &AnswerKey,
    thresholds: &CategoryThresholds,
) -> Result<Grade> {
    let mut mistakes = 0;
    for doc in &key.documents {
        for dim in Dimension::ALL {
            let qid = doc.question_id(dim);
            let expected = *doc
                .answers
                .get(&dim)
                .ok_or_else(|| Error::validation(format!("key lacks {qid}")))?;
            let given = answer(&qid).ok_or(Error::IncompleteSubmission(qid))?;
            if given != i64::from(expected) {
                mistakes += 1;
            }
        }
    }
    let check = &key.attention_check;
    let attention = answer(&check.question_id)
        .ok_or_else(|| Error::IncompleteSubmission(check.question_id.clone()))?;
    let attention_passed = attention == check.required_answer;
    Ok(Grade { category: categorize(mistakes, attention_passed, thresholds), mistakes, attention_passed })
}

pub fn grade_qualification(
    record: &AnnotationRecord,
    key: &AnswerKey,
    thresholds: &CategoryThresholds,
) -> Result<Grade> {
    grade_answers(|q| record.answer(q), key, thresholds)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnduranceStatus {
    pub worker_id: String,
    pub distinct_hits: usize,
    pub required_hits: usize,
    pub passed: bool,
    /// HITs the worker submitted more than once; counted once.
    pub duplicate_hits: Vec<String>,
}

/// Counts the distinct endurance HITs `worker_id` submitted.
pub fn track_endurance(records: &[AnnotationRecord], worker_id: &str, required_hits: usize) -> EnduranceStatus {
    let mut seen = BTreeSet::new();
    let mut dups = BTreeSet::new();
    for r in records.iter().filter(|r| r.worker_id == worker_id) {
        if !seen.insert(r.hit_id.as_str()) {
            dups.insert(r.hit_id.clone());
        }
    }
    for hit in &dups {
        log::warn!("worker {worker_id} submitted endurance HIT {hit} more than once");
    }
    EnduranceStatus {
        worker_id: worker_id.to_string(),
        distinct_hits: seen.len(),
        required_hits,
        passed: seen.len() >= required_hits,
        duplicate_hits: dups.into_iter().collect(),
    }
}

// ---------------------------------------------------------------------------
// survival

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurvivalObservation {
    /// HITs completed at dropout (event) or at analysis time (censored).
    pub time: f64,
    pub censored: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurvivalStep {
    pub t: f64,
    pub n_at_risk: usize,
    pub events: usize,
    pub censored: usize,
    pub survival: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalCurve {
    pub n_subjects: usize,
    pub steps: Vec<SurvivalStep>,
}

impl SurvivalCurve {
    /// Right-continuous step function: survival just after time `t`.
    pub fn survival_at(&self, t: f64) -> f64 {
        self.steps.iter().take_while(|s| s.t <= t).last().map_or(1.0, |s| s.survival)
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["t", "n_at_risk", "events", "censored", "survival"])?;
        for s in &self.steps {
            w.write_record([
                s.t.to_string(),
                s.n_at_risk.to_string(),
                s.events.to_string(),
                s.censored.to_string(),
                format!("{:.6}", s.survival),
            ])?;
        }
        w.into_inner().map_err(|e| Error::Io(e.into_error()))
    }
}

/// Product-limit estimator. Subjects censored at an event time stay in that
/// time's risk set.
pub fn kaplan_meier(observations: &[SurvivalObservation]) -> Result<SurvivalCurve> {
    if observations.is_empty() {
        return Err(Error::InsufficientData("kaplan-meier needs at least one observation".into()));
    }
    if let Some(bad) = observations.iter().find(|o| !(o.time >= 0.0) || !o.time.is_finite()) {
        return Err(Error::validation(format!("invalid survival time {}", bad.time)));
    }
    let mut sorted: Vec<SurvivalObservation> = observations.to_vec();
    sorted.sort_by(|a, b| a.time.total_cmp(&b.time));

    let mut at_risk = sorted.len();
    let mut survival = 1.0;
    let mut steps = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let t = sorted[i].time;
        let (mut events, mut censored) = (0, 0);
        while i < sorted.len() && sorted[i].time == t {
            if sorted[i].censored {
                censored += 1;
            } else {
                events += 1;
            }
            i += 1;
        }
        if events > 0 {
            survival *= 1.0 - events as f64 / at_risk as f64;
        }
        steps.push(SurvivalStep { t, n_at_risk: at_risk, events, censored, survival });
        at_risk -= events + censored;
    }
    Ok(SurvivalCurve { n_subjects: sorted.len(), steps })
}

/// Survival observations for endurance entrants: finishers and still-active
/// workers are censored at their current count; everybody else drops out at
/// their last completed HIT + 1.
pub fn endurance_observations(statuses: &[EnduranceStatus], active: &HashSet<String>) -> Vec<SurvivalObservation> {
    statuses
        .iter()
        .map(|s| {
            if s.passed || active.contains(&s.worker_id) {
                SurvivalObservation { time: s.distinct_hits as f64, censored: true }
            } else {
                SurvivalObservation { time: (s.distinct_hits + 1) as f64, censored: false }
            }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// cost

/// Amount of money in micro-dollars. Rewards are whole cents and fee rates
/// whole basis points, so every product stays exact.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord)]
pub struct Money(i64);

impl Money {
    pub const ZERO: Money = Money(0);

    pub fn from_cents(cents: i64) -> Self {
        Money(cents * 10_000)
    }

    pub fn micros(self) -> i64 {
        self.0
    }

    pub fn dollars(self) -> f64 {
        self.0 as f64 / 1e6
    }

    /// Rounded to cents, half away from zero.
    pub fn to_cents_rounded(self) -> i64 {
        let q = self.0 / 10_000;
        let r = self.0 % 10_000;
        if r.abs() >= 5_000 {
            q + self.0.signum()
        } else {
            q
        }
    }
}

impl std::ops::Add for Money {
    type Output = Money;
    fn add(self, o: Money) -> Money {
        Money(self.0 + o.0)
    }
}

impl std::iter::Sum for Money {
    fn sum<I: Iterator<Item = Money>>(iter: I) -> Money {
        iter.fold(Money::ZERO, |a, b| a + b)
    }
}

impl std::fmt::Display for Money {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let c = self.to_cents_rounded();
        let sign = if c < 0 { "-" } else { "" };
        write!(f, "{sign}{}.{:02}", c.abs() / 100, c.abs() % 100)
    }
}

impl Serialize for Money {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_f64(self.dollars())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskCostInput {
    pub name: String,
    /// Dollars per assignment.
    pub reward_per_assignment: f64,
    /// Platform fee as a fraction of the reward.
    pub fee_rate: f64,
    pub assignments: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostInputs {
    pub tasks: Vec<TaskCostInput>,
    /// Number of workers the spending produced.
    #[serde(default)]
    pub qualified_workers: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TaskCost {
    pub name: String,
    pub reward_per_assignment: Money,
    pub fee_rate_bp: i64,
    pub assignments: u64,
    pub total_reward: Money,
    pub fees: Money,
    pub total_cost: Money,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostModel {
    pub tasks: Vec<TaskCost>,
    pub total_reward: Money,
    pub total_fees: Money,
    pub total_cost: Money,
    pub qualified_workers: u64,
    pub cost_per_qualified: Option<f64>,
}

impl CostModel {
    /// Cost table: one row per task plus a total row.
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["task", "reward_per_assignment", "assignments", "total_reward", "fees", "total_cost"])?;
        for t in &self.tasks {
            w.write_record([
                t.name.clone(),
                t.reward_per_assignment.to_string(),
                t.assignments.to_string(),
                t.total_reward.to_string(),
                t.fees.to_string(),
                t.total_cost.to_string(),
            ])?;
        }
        let assignments: u64 = self.tasks.iter().map(|t| t.assignments).sum();
        w.write_record([
            "total".to_string(),
            String::new(),
            assignments.to_string(),
            self.total_reward.to_string(),
            self.total_fees.to_string(),
            self.total_cost.to_string(),
        ])?;
        if let Some(c) = self.cost_per_qualified {
            w.write_record(["cost_per_qualified", "", "", "", "", &format!("{c:.2}")])?;
        }
        w.into_inner().map_err(|e| Error::Io(e.into_error()))
    }
}

pub fn pipeline_cost(inputs: &CostInputs) -> Result<CostModel> {
    let mut tasks = Vec::with_capacity(inputs.tasks.len());
    for t in &inputs.tasks {
        if !(t.reward_per_assignment >= 0.0) || !(t.fee_rate >= 0.0) {
            return Err(Error::validation(format!("task `{}` has a negative amount", t.name)));
        }
        let cents = (t.reward_per_assignment * 100.0).round() as i64;
        let bp = (t.fee_rate * 10_000.0).round() as i64;
        let n = i64::try_from(t.assignments).map_err(|_| Error::validation("assignment count too large"))?;
        let reward_cents = cents * n;
        let total_reward = Money::from_cents(reward_cents);
        // cents * basis points = micro-dollars
        let fees = Money(reward_cents * bp);
        tasks.push(TaskCost {
            name: t.name.clone(),
            reward_per_assignment: Money::from_cents(cents),
            fee_rate_bp: bp,
            assignments: t.assignments,
            total_reward,
            fees,
            total_cost: total_reward + fees,
        });
    }
    let total_reward: Money = tasks.iter().map(|t| t.total_reward).sum();
    let total_fees: Money = tasks.iter().map(|t| t.fees).sum();
    let total_cost = total_reward + total_fees;
    let cost_per_qualified = (inputs.qualified_workers > 0)
        .then(|| total_cost.dollars() / inputs.qualified_workers as f64);
    Ok(CostModel {
        tasks,
        total_reward,
        total_fees,
        total_cost,
        qualified_workers: inputs.qualified_workers,
        cost_per_qualified,
    })
}

// ---------------------------------------------------------------------------
// registry and pipeline run

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum WorkerFlag {
    /// Finished the endurance task; on the maintained worker list.
    Maintained,
    /// Submitted most HITs faster than the article can be read.
    Rusher,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkerProfile {
    pub worker_id: String,
    pub round: String,
    pub category: WorkerCategory,
    pub mistakes: usize,
    pub attention_passed: bool,
    pub endurance_completed: usize,
    pub endurance_passed: bool,
    #[serde(default)]
    pub flags: BTreeSet<WorkerFlag>,
}

/// Platform-side screening applied before the qualification task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasicQualification {
    pub location: Option<String>,
    /// Approved HITs must be strictly greater than this.
    pub min_approved_hits: u64,
    /// Approval rate in percent, inclusive.
    pub min_approval_rate: f64,
}

impl Default for BasicQualification {
    fn default() -> Self {
        Self { location: Some("US".into()), min_approved_hits: 1000, min_approval_rate: 99.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkerMetadata {
    pub worker_id: String,
    pub location: String,
    pub approved_hits: u64,
    pub approval_rate: f64,
}

impl BasicQualification {
    /// Reasons `meta` fails the screening; empty when eligible.
    pub fn failures(&self, meta: &WorkerMetadata) -> Vec<String> {
        let mut out = Vec::new();
        if let Some(loc) = &self.location {
            if &meta.location != loc {
                out.push(format!("location {} != {loc}", meta.location));
            }
        }
        if meta.approved_hits <= self.min_approved_hits {
            out.push(format!("approved HITs {} <= {}", meta.approved_hits, self.min_approved_hits));
        }
        if meta.approval_rate < self.min_approval_rate {
            out.push(format!("approval rate {} < {}", meta.approval_rate, self.min_approval_rate));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundConfig {
    pub label: String,
    pub qualification_hit: String,
    /// Endurance HITs published for this round; empty means any endurance
    /// record counts.
    #[serde(default)]
    pub endurance_hits: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub required_hits: usize,
    pub thresholds: CategoryThresholds,
    /// Empty: one round per distinct qualification HIT, in order of first
    /// appearance.
    #[serde(default)]
    pub rounds: Vec<RoundConfig>,
    #[serde(default)]
    pub basic: Option<BasicQualification>,
    /// Endurance workers still working at analysis time (censored).
    #[serde(default)]
    pub active_workers: Vec<String>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            required_hits: 10,
            thresholds: CategoryThresholds::default(),
            rounds: Vec::new(),
            basic: None,
            active_workers: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Registry {
    pub rounds: Vec<RoundConfig>,
    pub required_hits: usize,
    pub thresholds: CategoryThresholds,
    pub workers: Vec<WorkerProfile>,
}

impl Registry {
    pub fn get(&self, worker_id: &str) -> Option<&WorkerProfile> {
        self.workers.iter().find(|w| w.worker_id == worker_id)
    }

    pub fn flag(&mut self, worker_id: &str, flag: WorkerFlag) -> bool {
        match self.workers.iter_mut().find(|w| w.worker_id == worker_id) {
            Some(w) => {
                w.flags.insert(flag);
                true
            }
            None => false,
        }
    }

    /// Workers that passed both tasks.
    pub fn maintained(&self) -> Vec<&WorkerProfile> {
        self.workers.iter().filter(|w| w.endurance_passed).collect()
    }

    pub fn validate(&self) -> Result<()> {
        for w in &self.workers {
            if w.category != categorize(w.mistakes, w.attention_passed, &self.thresholds) {
                return Err(Error::Invariant(format!("worker {} category inconsistent", w.worker_id)));
            }
            if w.endurance_passed && !w.category.advances() {
                return Err(Error::Invariant(format!(
                    "worker {} passed endurance without passing qualification",
                    w.worker_id
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRow {
    pub metric: String,
    pub per_round: Vec<usize>,
    pub total: usize,
}

/// Worker counts per round, one row per pipeline stage.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageReport {
    pub rounds: Vec<String>,
    pub rows: Vec<StageRow>,
}

impl StageReport {
    pub fn row(&self, metric: &str) -> Option<&StageRow> {
        self.rows.iter().find(|r| r.metric == metric)
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["metric".to_string()];
        header.extend(self.rounds.iter().cloned());
        header.push("Total".into());
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![r.metric.clone()];
            rec.extend(r.per_round.iter().map(|c| c.to_string()));
            rec.push(r.total.to_string());
            w.write_record(&rec)?;
        }
        w.into_inner().map_err(|e| Error::Io(e.into_error()))
    }
}

pub fn stage_report(registry: &Registry) -> StageReport {
    let labels: Vec<String> = registry.rounds.iter().map(|r| r.label.clone()).collect();
    type Pred = fn(&WorkerProfile) -> bool;
    let metrics: [(&str, Pred); 9] = [
        ("participants", |_| true),
        ("gold_passed_qualification", |w| w.category == WorkerCategory::Gold),
        ("silver_passed_qualification", |w| w.category == WorkerCategory::Silver),
        ("bronze", |w| w.category == WorkerCategory::Bronze),
        ("block", |w| w.category == WorkerCategory::Block),
        ("entered_endurance", |w| w.category.advances()),
        ("gold_passed_endurance", |w| w.category == WorkerCategory::Gold && w.endurance_passed),
        ("silver_passed_endurance", |w| w.category == WorkerCategory::Silver && w.endurance_passed),
        ("passed_both", |w| w.category.advances() && w.endurance_passed),
    ];
    let rows = metrics
        .iter()
        .map(|(name, pred)| {
            let per_round: Vec<usize> = labels
                .iter()
                .map(|l| registry.workers.iter().filter(|w| &w.round == l && pred(w)).count())
                .collect();
            StageRow { metric: name.to_string(), total: per_round.iter().sum(), per_round }
        })
        .collect();
    StageReport { rounds: labels, rows }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineRun {
    pub registry: Registry,
    pub report: StageReport,
    pub survival: Option<SurvivalCurve>,
    pub endurance: Vec<EnduranceStatus>,
    /// Workers screened out by the basic qualification settings.
    pub ineligible: Vec<(String, Vec<String>)>,
    pub warnings: Vec<String>,
}

fn resolve_rounds(qualification: &[AnnotationRecord], config: &PipelineConfig) -> Vec<RoundConfig> {
    if !config.rounds.is_empty() {
        return config.rounds.clone();
    }
    let mut hits: Vec<&str> = Vec::new();
    for r in qualification {
        if !hits.contains(&r.hit_id.as_str()) {
            hits.push(&r.hit_id);
        }
    }
    hits.iter()
        .enumerate()
        .map(|(i, h)| RoundConfig { label: format!("Round {}", i + 1), qualification_hit: h.to_string(), endurance_hits: vec![] })
        .collect()
}

/// Grades every qualification submission into a fresh registry.
pub fn qualify(
    qualification: &[AnnotationRecord],
    key: &AnswerKey,
    config: &PipelineConfig,
    metadata: Option<&[WorkerMetadata]>,
) -> Result<(Registry, Vec<(String, Vec<String>)>, Vec<String>)> {
    key.validate()?;
    config.thresholds.validate()?;
    let rounds = resolve_rounds(qualification, config);
    let mut warnings = Vec::new();
    let mut ineligible = Vec::new();

    let mut ordered: Vec<&AnnotationRecord> = qualification.iter().collect();
    ordered.sort_by(|a, b| (a.submit_time, &a.assignment_id).cmp(&(b.submit_time, &b.assignment_id)));

    let mut first: BTreeMap<&str, &AnnotationRecord> = BTreeMap::new();
    for r in ordered {
        if !rounds.iter().any(|rc| rc.qualification_hit == r.hit_id) {
            warnings.push(format!("assignment {} is not part of a configured round", r.assignment_id));
            continue;
        }
        match first.get(r.worker_id.as_str()) {
            Some(prev) if prev.hit_id != r.hit_id => {
                return Err(Error::validation(format!("worker {} took part in two rounds", r.worker_id)));
            }
            Some(_) => warnings.push(format!(
                "worker {} resubmitted the qualification task; keeping the earliest",
                r.worker_id
            )),
            None => {
                first.insert(&r.worker_id, r);
            }
        }
    }

    let meta: Option<BTreeMap<&str, &WorkerMetadata>> =
        metadata.map(|m| m.iter().map(|w| (w.worker_id.as_str(), w)).collect());

    let mut workers = Vec::new();
    for (worker, rec) in first {
        if let (Some(basic), Some(meta)) = (&config.basic, &meta) {
            let reasons = match meta.get(worker) {
                Some(m) => basic.failures(m),
                None => vec!["no worker metadata".to_string()],
            };
            if !reasons.is_empty() {
                ineligible.push((worker.to_string(), reasons));
                continue;
            }
        }
        let grade = grade_qualification(rec, key, &config.thresholds)?;
        let round = rounds.iter().find(|rc| rc.qualification_hit == rec.hit_id).expect("filtered above");
        workers.push(WorkerProfile {
            worker_id: worker.to_string(),
            round: round.label.clone(),
            category: grade.category,
            mistakes: grade.mistakes,
            attention_passed: grade.attention_passed,
            endurance_completed: 0,
            endurance_passed: false,
            flags: BTreeSet::new(),
        });
    }
    Ok((
        Registry { rounds, required_hits: config.required_hits, thresholds: config.thresholds, workers },
        ineligible,
        warnings,
    ))
}

/// Records endurance progress for every advancing worker and fits the
/// survival curve over their completion counts.
pub fn apply_endurance(
    registry: &mut Registry,
    endurance: &[AnnotationRecord],
    config: &PipelineConfig,
) -> Result<(Vec<EnduranceStatus>, Option<SurvivalCurve>, Vec<String>)> {
    registry.required_hits = config.required_hits;
    let mut warnings = Vec::new();
    let advancing: HashSet<&str> =
        registry.workers.iter().filter(|w| w.category.advances()).map(|w| w.worker_id.as_str()).collect();
    let mut strangers: BTreeSet<&str> = BTreeSet::new();
    for r in endurance {
        if !advancing.contains(r.worker_id.as_str()) {
            strangers.insert(&r.worker_id);
        }
    }
    for s in strangers {
        warnings.push(format!("worker {s} has endurance submissions but did not qualify; ignored"));
    }

    let mut statuses = Vec::new();
    for w in registry.workers.iter_mut().filter(|w| w.category.advances()) {
        let round = registry.rounds.iter().find(|r| r.label == w.round);
        let hits = round.map(|r| r.endurance_hits.as_slice()).unwrap_or_default();
        let mine: Vec<AnnotationRecord> = endurance
            .iter()
            .filter(|r| r.worker_id == w.worker_id && (hits.is_empty() || hits.contains(&r.hit_id)))
            .cloned()
            .collect();
        let status = track_endurance(&mine, &w.worker_id, config.required_hits);
        for h in &status.duplicate_hits {
            warnings.push(format!("worker {} submitted endurance HIT {h} more than once", w.worker_id));
        }
        w.endurance_completed = status.distinct_hits;
        w.endurance_passed = status.passed;
        if status.passed {
            w.flags.insert(WorkerFlag::Maintained);
        } else {
            w.flags.remove(&WorkerFlag::Maintained);
        }
        statuses.push(status);
    }
    let active: HashSet<String> = config.active_workers.iter().cloned().collect();
    let survival = if statuses.is_empty() {
        None
    } else {
        Some(kaplan_meier(&endurance_observations(&statuses, &active))?)
    };
    Ok((statuses, survival, warnings))
}

/// Runs both stages end to end.
pub fn run_pipeline(
    qualification: &[AnnotationRecord],
    endurance: &[AnnotationRecord],
    key: &AnswerKey,
    config: &PipelineConfig,
    metadata: Option<&[WorkerMetadata]>,
) -> Result<PipelineRun> {
    let (mut registry, ineligible, mut warnings) = qualify(qualification, key, config, metadata)?;
    let (statuses, survival, w2) = apply_endurance(&mut registry, endurance, config)?;
    warnings.extend(w2);
    let report = stage_report(&registry);
    Ok(PipelineRun { registry, report, survival, endurance: statuses, ineligible, warnings })
}
