//! Behavioral analysis from assignment metadata: per-HIT timelines
//! normalized to the accept–submit window, suggested reading time, rusher
//! flags and the time-and-count baseline filter.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{AnnotationRecord, TaskSpec};
use crate::par;

/// Average human reading speed, words per minute.
pub const DEFAULT_WPM: u32 = 130;

/// Suggested reading time in seconds, computed exactly and rounded to the
/// nearest millisecond.
pub fn suggested_reading_seconds(word_count: u64, wpm: u32) -> Result<f64> {
    Ok(suggested_reading_millis(word_count, wpm)? as f64 / 1000.0)
}

pub fn suggested_reading_millis(word_count: u64, wpm: u32) -> Result<u64> {
    if wpm == 0 {
        return Err(Error::validation("words per minute must be positive"));
    }
    let num = u128::from(word_count) * 60_000;
    let den = u128::from(wpm);
    Ok(((2 * num + den) / (2 * den)) as u64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedEvent {
    pub question_id: String,
    /// Position within the accept–submit window, in [0, 1].
    pub at: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimelineAnalysis {
    pub worker_id: String,
    pub hit_id: String,
    pub assignment_id: String,
    pub duration_secs: f64,
    pub suggested_reading_secs: f64,
    /// Suggested reading time over duration, capped at 1.
    pub suggested_reading_fraction: f64,
    pub rushed: bool,
    /// `None` when the export carries no event log.
    pub events: Option<Vec<NormalizedEvent>>,
}

pub fn analyze_timeline(record: &AnnotationRecord, task: &TaskSpec, wpm: u32) -> Result<TimelineAnalysis> {
    let duration_ms = (record.submit_time - record.accept_time).num_milliseconds();
    if duration_ms <= 0 {
        return Err(Error::DegenerateRecord(format!(
            "assignment {} has non-positive duration",
            record.assignment_id
        )));
    }
    let reading_ms = suggested_reading_millis(task.article_word_count, wpm)?;
    let duration = duration_ms as f64;
    let events = match &record.events {
        None => None,
        Some(evs) => Some(
            evs.iter()
                .map(|e| {
                    let offset = (e.at - record.accept_time).num_milliseconds();
                    if offset < 0 || offset > duration_ms {
                        return Err(Error::DegenerateRecord(format!(
                            "assignment {}: event for {} outside the accept-submit window",
                            record.assignment_id, e.question_id
                        )));
                    }
                    Ok(NormalizedEvent { question_id: e.question_id.clone(), at: offset as f64 / duration })
                })
                .collect::<Result<Vec<_>>>()?,
        ),
    };
    Ok(TimelineAnalysis {
        worker_id: record.worker_id.clone(),
        hit_id: record.hit_id.clone(),
        assignment_id: record.assignment_id.clone(),
        duration_secs: duration / 1000.0,
        suggested_reading_secs: reading_ms as f64 / 1000.0,
        suggested_reading_fraction: (reading_ms as f64 / duration).min(1.0),
        rushed: reading_ms as i64 > duration_ms,
        events,
    })
}

/// Analyzes every record whose HIT is known; the rest are returned as
/// `(assignment_id, reason)`.
pub fn analyze_all(
    records: &[AnnotationRecord],
    tasks: &[TaskSpec],
    wpm: u32,
) -> (Vec<TimelineAnalysis>, Vec<(String, String)>) {
    let by_hit: HashMap<&str, &TaskSpec> = tasks.iter().map(|t| (t.hit_id.as_str(), t)).collect();
    let results = par::map_slice(records, |r| match by_hit.get(r.hit_id.as_str()) {
        Some(t) => analyze_timeline(r, t, wpm).map_err(|e| e.to_string()),
        None => Err(format!("unknown HIT {}", r.hit_id)),
    });
    let mut ok = Vec::new();
    let mut skipped = Vec::new();
    for (r, res) in records.iter().zip(results) {
        match res {
            Ok(a) => ok.push(a),
            Err(reason) => skipped.push((r.assignment_id.clone(), reason)),
        }
    }
    (ok, skipped)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkerRushStats {
    pub worker_id: String,
    pub analyzed: usize,
    pub rushed: usize,
    pub fraction: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RusherReport {
    pub policy: f64,
    pub workers: Vec<WorkerRushStats>,
    /// Workers without a single analyzable HIT.
    pub excluded: Vec<String>,
}

impl RusherReport {
    pub fn flagged(&self) -> Vec<String> {
        self.workers.iter().filter(|w| w.flagged).map(|w| w.worker_id.clone()).collect()
    }
}

/// Flags workers whose share of rushed HITs reaches `min_rushed_fraction`.
pub fn flag_rushers(
    records: &[AnnotationRecord],
    tasks: &[TaskSpec],
    min_rushed_fraction: f64,
    wpm: u32,
) -> Result<RusherReport> {
    if !(min_rushed_fraction > 0.0 && min_rushed_fraction <= 1.0) {
        return Err(Error::validation(format!("rusher policy {min_rushed_fraction} outside (0, 1]")));
    }
    let (analyses, _) = analyze_all(records, tasks, wpm);
    let mut counts: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for r in records {
        counts.entry(r.worker_id.as_str()).or_default();
    }
    for a in &analyses {
        let c = counts.entry(a.worker_id.as_str()).or_default();
        c.0 += 1;
        c.1 += usize::from(a.rushed);
    }
    let mut workers = Vec::new();
    let mut excluded = Vec::new();
    for (w, (analyzed, rushed)) in counts {
        if analyzed == 0 {
            excluded.push(w.to_string());
            continue;
        }
        let fraction = rushed as f64 / analyzed as f64;
        workers.push(WorkerRushStats {
            worker_id: w.to_string(),
            analyzed,
            rushed,
            fraction,
            flagged: fraction >= min_rushed_fraction,
        });
    }
    Ok(RusherReport { policy: min_rushed_fraction, workers, excluded })
}

/// How the reading-time condition aggregates over a worker's HITs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReadingRule {
    /// Every HIT unrushed.
    #[default]
    All,
    /// Strictly more than half of the HITs unrushed.
    Majority,
    /// Mean duration at least the mean suggested reading time.
    Mean,
}

impl std::str::FromStr for ReadingRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(Self::All),
            "majority" => Ok(Self::Majority),
            "mean" => Ok(Self::Mean),
            other => Err(Error::validation(format!("unknown reading rule `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineWorker {
    pub worker_id: String,
    pub hits: usize,
    pub rushed: usize,
    pub kept: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineFilterOutcome {
    pub min_hits: usize,
    pub rule: ReadingRule,
    pub workers: Vec<BaselineWorker>,
    pub kept: Vec<String>,
    pub kept_count: usize,
    pub total_workers: usize,
}

/// Keeps workers that spent at least the suggested reading time (under
/// `rule`) and finished at least `min_hits` distinct HITs.
pub fn baseline_filter(
    records: &[AnnotationRecord],
    tasks: &[TaskSpec],
    min_hits: usize,
    rule: ReadingRule,
    wpm: u32,
) -> BaselineFilterOutcome {
    let (analyses, _) = analyze_all(records, tasks, wpm);
    let mut per_worker: BTreeMap<&str, Vec<&TimelineAnalysis>> = BTreeMap::new();
    for r in records {
        per_worker.entry(r.worker_id.as_str()).or_default();
    }
    for a in &analyses {
        per_worker.entry(a.worker_id.as_str()).or_default().push(a);
    }
    let workers: Vec<BaselineWorker> = per_worker
        .into_iter()
        .map(|(w, list)| {
            let mut hits: Vec<&str> = list.iter().map(|a| a.hit_id.as_str()).collect();
            hits.sort_unstable();
            hits.dedup();
            let rushed = list.iter().filter(|a| a.rushed).count();
            let reading_ok = !list.is_empty()
                && match rule {
                    ReadingRule::All => rushed == 0,
                    ReadingRule::Majority => 2 * (list.len() - rushed) > list.len(),
                    ReadingRule::Mean => {
                        let d: f64 = list.iter().map(|a| a.duration_secs).sum();
                        let s: f64 = list.iter().map(|a| a.suggested_reading_secs).sum();
                        d >= s
                    }
                };
            BaselineWorker { worker_id: w.to_string(), hits: hits.len(), rushed, kept: reading_ok && hits.len() >= min_hits }
        })
        .collect();
    let kept: Vec<String> = workers.iter().filter(|w| w.kept).map(|w| w.worker_id.clone()).collect();
    BaselineFilterOutcome {
        min_hits,
        rule,
        kept_count: kept.len(),
        total_workers: workers.len(),
        workers,
        kept,
    }
}

/// One row per HIT: worker, HIT, duration, reading mark, rushed, and the
/// normalized event marks as `question@position` pairs.
pub fn timeline_csv(analyses: &[TimelineAnalysis]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["worker_id", "hit_id", "assignment_id", "duration_secs", "reading_mark", "rushed", "events"])?;
    for a in analyses {
        let events = a
            .events
            .as_deref()
            .unwrap_or_default()
            .iter()
            .map(|e| format!("{}@{:.4}", e.question_id, e.at))
            .collect::<Vec<_>>()
            .join(" ");
        w.write_record([
            a.worker_id.clone(),
            a.hit_id.clone(),
            a.assignment_id.clone(),
            format!("{:.3}", a.duration_secs),
            format!("{:.4}", a.suggested_reading_fraction),
            a.rushed.to_string(),
            events,
        ])?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

/// Timeline chart for one worker: a grey line per HIT from accept (0) to
/// submit (1), blue dots labelled with the question index where scores were
/// set, and an orange cross at the suggested reading time.
pub fn timeline_svg(analyses: &[TimelineAnalysis]) -> String {
    const LEFT: f64 = 80.0;
    const WIDTH: f64 = 600.0;
    const ROW: f64 = 36.0;
    let height = ROW * (analyses.len() as f64 + 1.0);
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{height}" font-family="sans-serif" font-size="10">"#,
        LEFT + WIDTH + 20.0
    );
    for (i, a) in analyses.iter().enumerate() {
        let y = ROW * (i as f64 + 1.0);
        let _ = writeln!(out, r#"<text x="4" y="{:.1}">{}</text>"#, y + 3.0, xml_escape(&a.hit_id));
        let _ = writeln!(
            out,
            r##"<line x1="{LEFT}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#999" stroke-width="2"/>"##,
            LEFT + WIDTH
        );
        for (k, e) in a.events.as_deref().unwrap_or_default().iter().enumerate() {
            let x = LEFT + e.at * WIDTH;
            let _ = writeln!(out, r##"<circle cx="{x:.1}" cy="{y:.1}" r="3" fill="#1f77b4"/>"##);
            let label = e.question_id.rsplit('_').next().unwrap_or(&e.question_id);
            let _ = writeln!(
                out,
                r#"<text x="{x:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
                y - 6.0 - 8.0 * (k % 2) as f64,
                xml_escape(label)
            );
        }
        let x = LEFT + a.suggested_reading_fraction * WIDTH;
        let _ = writeln!(
            out,
            r##"<path d="M{:.1} {:.1} L{:.1} {:.1} M{:.1} {:.1} L{:.1} {:.1}" stroke="#ff7f0e" stroke-width="2"/>"##,
            x - 4.0,
            y - 4.0,
            x + 4.0,
            y + 4.0,
            x - 4.0,
            y + 4.0,
            x + 4.0,
            y - 4.0
        );
    }
    out.push_str("</svg>\n");
    out
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}
