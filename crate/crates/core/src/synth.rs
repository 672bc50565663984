//! Synthetic annotator populations with known latent structure.
//!
//! Generated batches use the same record and task types the analysis code
//! reads; the latent archetypes and ground truth travel in a separate sidecar.

use chrono::{DateTime, Duration, TimeZone, Utc};
use rand::seq::index;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{
    format_timestamp, AnnotationRecord, Answer, AnswerEvent, AnswerKey, AttentionCheck, Dimension, DocumentKey,
    ScaleDescriptor, TaskSpec,
};
use crate::par;
use crate::pipeline::{RoundConfig, WorkerCategory};
use crate::rng::{self, domain};
use crate::timing::{suggested_reading_millis, DEFAULT_WPM};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Archetype {
    /// With probability `accuracy` rates truth plus rounded Gaussian jitter,
    /// otherwise uniformly.
    Competent { accuracy: f64, jitter: f64 },
    /// Uniform over the scale.
    Spammer,
    /// Uniform over the scale, submitting faster than the article can be read.
    Rusher,
    /// Truth plus a constant offset, clipped to the scale.
    Biased { offset: i64 },
}

impl Archetype {
    pub fn name(&self) -> &'static str {
        match self {
            Archetype::Competent { .. } => "competent",
            Archetype::Spammer => "spammer",
            Archetype::Rusher => "rusher",
            Archetype::Biased { .. } => "biased",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArchetypeCount {
    pub count: usize,
    #[serde(flatten)]
    pub archetype: Archetype,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationSpec {
    pub workers: Vec<ArchetypeCount>,
    pub hits: usize,
    pub questions_per_hit: usize,
    pub word_count: u64,
    pub scale: ScaleDescriptor,
    /// Workers drawn per HIT; every worker rates every HIT when absent.
    #[serde(default)]
    pub raters_per_hit: Option<usize>,
    /// Relative weights of the scale's categories for the ground truth;
    /// uniform when absent.
    #[serde(default)]
    pub truth_weights: Option<Vec<f64>>,
}

impl PopulationSpec {
    pub fn total_workers(&self) -> usize {
        self.workers.iter().map(|a| a.count).sum()
    }

    pub fn validate(&self) -> Result<()> {
        let total = self.total_workers();
        if total == 0 {
            return Err(Error::validation("population has no workers"));
        }
        if self.hits == 0 || self.questions_per_hit == 0 {
            return Err(Error::validation("population needs at least one HIT and one question"));
        }
        let span = self.scale.max - self.scale.min;
        for a in &self.workers {
            match a.archetype {
                Archetype::Competent { accuracy, jitter } => {
                    if !(0.0..=1.0).contains(&accuracy) {
                        return Err(Error::validation(format!("accuracy {accuracy} outside [0, 1]")));
                    }
                    if !(jitter >= 0.0 && jitter.is_finite()) {
                        return Err(Error::validation(format!("jitter {jitter} must be non-negative")));
                    }
                    if jitter > span as f64 {
                        return Err(Error::validation(format!("jitter {jitter} exceeds the scale span {span}")));
                    }
                }
                Archetype::Biased { offset } => {
                    if offset.abs() >= span.max(1) {
                        return Err(Error::validation(format!("offset {offset} does not fit the scale span {span}")));
                    }
                }
                Archetype::Rusher if a.count > 0 => {
                    if suggested_reading_millis(self.word_count, DEFAULT_WPM)? < 2 {
                        return Err(Error::validation("rushers need an article with non-zero reading time"));
                    }
                }
                _ => {}
            }
        }
        if let Some(k) = self.raters_per_hit {
            if k == 0 || k > total {
                return Err(Error::validation(format!("raters_per_hit {k} outside 1..={total}")));
            }
        }
        if let Some(w) = &self.truth_weights {
            if w.len() != self.scale.categories() || w.iter().any(|x| !(*x >= 0.0)) || w.iter().sum::<f64>() <= 0.0 {
                return Err(Error::validation("truth weights must be non-negative, one per category"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthLabel {
    pub hit_id: String,
    pub question_id: String,
    pub label: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentWorker {
    pub worker_id: String,
    pub archetype: Archetype,
}

/// Oracle sidecar; analysis code never reads it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Latent {
    pub seed: u64,
    pub spec: PopulationSpec,
    pub workers: Vec<LatentWorker>,
    pub ground_truth: Vec<TruthLabel>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub records: Vec<AnnotationRecord>,
    pub tasks: Vec<TaskSpec>,
    pub latent: Latent,
}

impl SyntheticData {
    pub fn workers_of(&self, name: &str) -> Vec<String> {
        self.latent.workers.iter().filter(|w| w.archetype.name() == name).map(|w| w.worker_id.clone()).collect()
    }
}

fn epoch() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2023, 3, 15, 9, 0, 0).unwrap()
}

fn draw_truth(g: &mut ChaCha8Rng, scale: &ScaleDescriptor, weights: Option<&[f64]>) -> i64 {
    match weights {
        None => g.random_range(scale.min..=scale.max),
        Some(w) => {
            let total: f64 = w.iter().sum();
            let mut u = g.random::<f64>() * total;
            for (i, x) in w.iter().enumerate() {
                if u < *x {
                    return scale.min + i as i64;
                }
                u -= x;
            }
            scale.max
        }
    }
}

fn score(g: &mut ChaCha8Rng, a: &Archetype, truth: i64, scale: &ScaleDescriptor) -> i64 {
    match *a {
        Archetype::Competent { accuracy, jitter } => {
            if accuracy >= 1.0 || g.random::<f64>() < accuracy {
                let noise = if jitter > 0.0 {
                    Normal::new(0.0, jitter).expect("validated").sample(g).round() as i64
                } else {
                    0
                };
                scale.clip(truth + noise)
            } else {
                g.random_range(scale.min..=scale.max)
            }
        }
        Archetype::Spammer | Archetype::Rusher => g.random_range(scale.min..=scale.max),
        Archetype::Biased { offset } => scale.clip(truth + offset),
    }
}

/// Builds a record with question events spread over the submission window.
fn assemble(
    g: &mut ChaCha8Rng,
    worker: &str,
    hit: &str,
    accept: DateTime<Utc>,
    duration_ms: i64,
    answers: Vec<Answer>,
) -> AnnotationRecord {
    let submit = accept + Duration::milliseconds(duration_ms);
    let mut marks: Vec<i64> = (0..answers.len()).map(|_| g.random_range(0..=duration_ms)).collect();
    marks.sort_unstable();
    let events = answers
        .iter()
        .zip(marks)
        .map(|(a, m)| AnswerEvent { question_id: a.question_id.clone(), at: accept + Duration::milliseconds(m) })
        .collect();
    AnnotationRecord {
        worker_id: worker.to_string(),
        hit_id: hit.to_string(),
        assignment_id: format!("A-{hit}-{worker}"),
        accept_time: accept,
        submit_time: submit,
        accept_time_raw: format_timestamp(&accept),
        submit_time_raw: format_timestamp(&submit),
        answers,
        events: Some(events),
    }
}

/// Duration in milliseconds: rushers stay strictly below the reading time,
/// everyone else spends at least the reading time plus half a minute.
fn duration_ms(g: &mut ChaCha8Rng, rushing: bool, reading_ms: i64) -> i64 {
    if rushing {
        let d = (reading_ms as f64 * g.random_range(0.05..0.6)) as i64;
        d.clamp(1, reading_ms - 1)
    } else {
        reading_ms + 30_000 + (reading_ms as f64 * g.random_range(0.1..1.5)) as i64
    }
}

pub fn generate(spec: &PopulationSpec, seed: u64) -> Result<SyntheticData> {
    spec.validate()?;
    let scale = spec.scale;
    let total = spec.total_workers();
    let width = total.to_string().len().max(3);
    let latent_workers: Vec<LatentWorker> = spec
        .workers
        .iter()
        .flat_map(|a| std::iter::repeat_n(a.archetype, a.count))
        .enumerate()
        .map(|(i, archetype)| LatentWorker { worker_id: format!("W{:0width$}", i + 1), archetype })
        .collect();

    let tasks: Vec<TaskSpec> = (0..spec.hits)
        .map(|h| {
            let hit_id = format!("H{:03}", h + 1);
            TaskSpec {
                question_ids: (0..spec.questions_per_hit).map(|q| format!("{hit_id}_q{}", q + 1)).collect(),
                hit_id,
                article_word_count: spec.word_count,
                scale,
            }
        })
        .collect();

    let mut tg = rng::substream(seed, domain::SYNTH_TRUTH);
    let truth: Vec<Vec<i64>> = tasks
        .iter()
        .map(|t| t.question_ids.iter().map(|_| draw_truth(&mut tg, &scale, spec.truth_weights.as_deref())).collect())
        .collect();

    let assigned: Vec<Vec<bool>> = (0..spec.hits)
        .map(|h| match spec.raters_per_hit {
            None => vec![true; total],
            Some(k) => {
                let mut g = rng::substream(seed, domain::SYNTH_ASSIGN | h as u64);
                let mut mask = vec![false; total];
                for i in index::sample(&mut g, total, k) {
                    mask[i] = true;
                }
                mask
            }
        })
        .collect();

    let reading_ms = suggested_reading_millis(spec.word_count, DEFAULT_WPM)? as i64;
    let per_worker = par::map_range(total, |w| {
        let lw = &latent_workers[w];
        let mut g = rng::substream(seed, domain::SYNTH_WORKER | w as u64);
        let mut out = Vec::new();
        for (h, task) in tasks.iter().enumerate() {
            if !assigned[h][w] {
                continue;
            }
            let answers = task
                .question_ids
                .iter()
                .zip(&truth[h])
                .map(|(q, &t)| Answer { question_id: q.clone(), value: score(&mut g, &lw.archetype, t, &scale) })
                .collect();
            let accept = epoch() + Duration::hours(h as i64) + Duration::seconds(g.random_range(0..1800));
            let d = duration_ms(&mut g, matches!(lw.archetype, Archetype::Rusher), reading_ms);
            out.push(assemble(&mut g, &lw.worker_id, &task.hit_id, accept, d, answers));
        }
        out
    });
    let mut records: Vec<AnnotationRecord> = per_worker.into_iter().flatten().collect();
    records.sort_by(|a, b| (&a.hit_id, &a.worker_id).cmp(&(&b.hit_id, &b.worker_id)));

    let ground_truth = tasks
        .iter()
        .zip(&truth)
        .flat_map(|(t, labels)| {
            t.question_ids.iter().zip(labels).map(|(q, &label)| TruthLabel {
                hit_id: t.hit_id.clone(),
                question_id: q.clone(),
                label,
            })
        })
        .collect();
    Ok(SyntheticData { records, tasks, latent: Latent { seed, spec: spec.clone(), workers: latent_workers, ground_truth } })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundSpec {
    pub label: String,
    pub gold: usize,
    pub silver: usize,
    pub bronze: usize,
    pub block: usize,
    /// Advancing workers (gold or silver) that finish the endurance task.
    pub endurance_passers: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineSpec {
    pub rounds: Vec<RoundSpec>,
    pub required_hits: usize,
    pub documents: usize,
    pub word_count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpectedWorker {
    pub worker_id: String,
    pub round: String,
    pub category: WorkerCategory,
    pub mistakes: usize,
    pub endurance_completed: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticPipeline {
    pub key: AnswerKey,
    pub rounds: Vec<RoundConfig>,
    pub qualification: Vec<AnnotationRecord>,
    pub endurance: Vec<AnnotationRecord>,
    pub expected: Vec<ExpectedWorker>,
}

/// Qualification and endurance batches whose grading outcome is known in
/// advance. Mistakes are placed on randomly chosen key cells; endurance
/// drop-outs stop after a random number of HITs short of the requirement.
pub fn generate_pipeline(spec: &PipelineSpec, seed: u64) -> Result<SyntheticPipeline> {
    if spec.documents == 0 || spec.required_hits == 0 {
        return Err(Error::validation("pipeline needs documents and a positive endurance requirement"));
    }
    for r in &spec.rounds {
        if r.endurance_passers > r.gold + r.silver {
            return Err(Error::validation(format!("round {}: more endurance passers than advancing workers", r.label)));
        }
    }
    let mut kg = rng::substream(seed, domain::SYNTH_QUALIFICATION);
    let key = AnswerKey {
        documents: (1..=spec.documents)
            .map(|d| DocumentKey {
                document_id: format!("doc{d}"),
                answers: Dimension::ALL.iter().map(|&dim| (dim, kg.random_bool(0.5))).collect(),
            })
            .collect(),
        attention_check: AttentionCheck { question_id: "attention".into(), required_answer: 3 },
    };
    let cells: Vec<(String, i64)> = key
        .documents
        .iter()
        .flat_map(|d| Dimension::ALL.iter().map(move |&dim| (d.question_id(dim), i64::from(d.answers[&dim]))))
        .collect();
    let reading_ms = suggested_reading_millis(spec.word_count, DEFAULT_WPM)? as i64;

    let mut rounds = Vec::new();
    let mut qualification = Vec::new();
    let mut endurance = Vec::new();
    let mut expected = Vec::new();
    let mut serial = 0u64;
    for (ri, r) in spec.rounds.iter().enumerate() {
        let qual_hit = format!("QUAL-{}", ri + 1);
        let end_hits: Vec<String> = (1..=spec.required_hits).map(|k| format!("END-{}-{k:02}", ri + 1)).collect();
        rounds.push(RoundConfig { label: r.label.clone(), qualification_hit: qual_hit.clone(), endurance_hits: end_hits.clone() });
        let plan = std::iter::repeat_n(WorkerCategory::Gold, r.gold)
            .chain(std::iter::repeat_n(WorkerCategory::Silver, r.silver))
            .chain(std::iter::repeat_n(WorkerCategory::Bronze, r.bronze))
            .chain(std::iter::repeat_n(WorkerCategory::Block, r.block));
        let mut advancing_seen = 0;
        for category in plan {
            serial += 1;
            let worker = format!("R{}W{serial:04}", ri + 1);
            let mut g = rng::substream(seed, domain::SYNTH_QUALIFICATION | serial);
            let mistakes = match category {
                WorkerCategory::Gold => 0,
                WorkerCategory::Silver => 1,
                WorkerCategory::Bronze => g.random_range(2..=cells.len().max(2)).min(cells.len()),
                WorkerCategory::Block => g.random_range(0..=cells.len()),
            };
            let wrong: Vec<usize> = index::sample(&mut g, cells.len(), mistakes).into_vec();
            let mut answers: Vec<Answer> = cells
                .iter()
                .enumerate()
                .map(|(i, (q, v))| Answer { question_id: q.clone(), value: if wrong.contains(&i) { 1 - v } else { *v } })
                .collect();
            let attention = if category == WorkerCategory::Block { 1 } else { key.attention_check.required_answer };
            answers.push(Answer { question_id: key.attention_check.question_id.clone(), value: attention });
            let accept = epoch() + Duration::days(7 * ri as i64) + Duration::seconds(g.random_range(0..86_400));
            let d = duration_ms(&mut g, false, reading_ms);
            qualification.push(assemble(&mut g, &worker, &qual_hit, accept, d, answers));

            let mut completed = 0;
            if category.advances() {
                advancing_seen += 1;
                completed = if advancing_seen <= r.endurance_passers {
                    spec.required_hits
                } else {
                    g.random_range(0..spec.required_hits)
                };
                for (k, hit) in end_hits.iter().take(completed).enumerate() {
                    let answers = (1..=4).map(|c| Answer { question_id: format!("{hit}_c{c}"), value: g.random_range(1..=5) }).collect();
                    let accept = accept + Duration::days(1) + Duration::hours(k as i64);
                    let d = duration_ms(&mut g, false, reading_ms);
                    endurance.push(assemble(&mut g, &worker, hit, accept, d, answers));
                }
            }
            expected.push(ExpectedWorker { worker_id: worker, round: r.label.clone(), category, mistakes, endurance_completed: completed });
        }
    }
    Ok(SyntheticPipeline { key, rounds, qualification, endurance, expected })
}
