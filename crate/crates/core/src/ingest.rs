//! Parsing and validation of annotation exports, task definitions and
//! qualification answer keys.
//!
//! Batch exports follow the MTurk batch-results layout. Required columns are
//! `HITId`, `WorkerId`, `AssignmentId`, `AcceptTime` and `SubmitTime`; every
//! column named `Answer.<question_id>` holds an integer score for that
//! question (an empty cell means the question was not answered). An optional
//! `EventLog` column carries in-page score events as
//! `question_id=<RFC 3339 timestamp>` entries separated by `|`. All other
//! columns are ignored.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use chrono::{DateTime, FixedOffset, NaiveDateTime, SecondsFormat, TimeZone, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{Item, RatingMatrix};

pub const COL_HIT: &str = "HITId";
pub const COL_WORKER: &str = "WorkerId";
pub const COL_ASSIGNMENT: &str = "AssignmentId";
pub const COL_ACCEPT: &str = "AcceptTime";
pub const COL_SUBMIT: &str = "SubmitTime";
pub const COL_EVENTS: &str = "EventLog";
pub const ANSWER_PREFIX: &str = "Answer.";

const REQUIRED: [&str; 5] = [COL_HIT, COL_WORKER, COL_ASSIGNMENT, COL_ACCEPT, COL_SUBMIT];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScaleKind {
    Nominal,
    Ordinal,
    Interval,
}

impl std::str::FromStr for ScaleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nominal" => Ok(ScaleKind::Nominal),
            "ordinal" => Ok(ScaleKind::Ordinal),
            "interval" => Ok(ScaleKind::Interval),
            other => Err(Error::validation(format!("unknown scale kind `{other}`"))),
        }
    }
}

/// Integer rating scale `min..=max`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ScaleDescriptor {
    pub kind: ScaleKind,
    pub min: i64,
    pub max: i64,
}

impl ScaleDescriptor {
    pub fn new(kind: ScaleKind, min: i64, max: i64) -> Result<Self> {
        if min >= max {
            return Err(Error::validation(format!("scale min {min} must be below max {max}")));
        }
        Ok(Self { kind, min, max })
    }

    pub fn contains(&self, v: i64) -> bool {
        (self.min..=self.max).contains(&v)
    }

    pub fn categories(&self) -> usize {
        (self.max - self.min + 1) as usize
    }

    /// Clamps `v` into the scale.
    pub fn clip(&self, v: i64) -> i64 {
        v.clamp(self.min, self.max)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Answer {
    pub question_id: String,
    pub value: i64,
}

/// Moment a score was set in the HIT page.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerEvent {
    pub question_id: String,
    pub at: DateTime<Utc>,
}

/// One assignment submission.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub worker_id: String,
    pub hit_id: String,
    pub assignment_id: String,
    pub accept_time: DateTime<Utc>,
    pub submit_time: DateTime<Utc>,
    /// Timestamps as they appeared in the export.
    pub accept_time_raw: String,
    pub submit_time_raw: String,
    pub answers: Vec<Answer>,
    pub events: Option<Vec<AnswerEvent>>,
}

impl AnnotationRecord {
    pub fn answer(&self, question_id: &str) -> Option<i64> {
        self.answers.iter().find(|a| a.question_id == question_id).map(|a| a.value)
    }

    /// Seconds between accept and submit.
    pub fn duration_secs(&self) -> f64 {
        (self.submit_time - self.accept_time).num_milliseconds() as f64 / 1000.0
    }
}

/// Definition of one HIT.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub hit_id: String,
    pub article_word_count: u64,
    #[serde(rename = "questions")]
    pub question_ids: Vec<String>,
    pub scale: ScaleDescriptor,
}

/// The six binary evaluation dimensions of the qualification task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dimension {
    Understandability,
    Compactness,
    Grammaticality,
    Coherence,
    Faithfulness,
    Saliency,
}

impl Dimension {
    pub const ALL: [Dimension; 6] = [
        Dimension::Understandability,
        Dimension::Compactness,
        Dimension::Grammaticality,
        Dimension::Coherence,
        Dimension::Faithfulness,
        Dimension::Saliency,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Dimension::Understandability => "understandability",
            Dimension::Compactness => "compactness",
            Dimension::Grammaticality => "grammaticality",
            Dimension::Coherence => "coherence",
            Dimension::Faithfulness => "faithfulness",
            Dimension::Saliency => "saliency",
        }
    }
}

/// Expert answers for one qualification document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentKey {
    pub document_id: String,
    pub answers: BTreeMap<Dimension, bool>,
}

impl DocumentKey {
    /// Batch column suffix carrying the worker's answer for `dim`.
    pub fn question_id(&self, dim: Dimension) -> String {
        format!("{}_{}", self.document_id, dim.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttentionCheck {
    pub question_id: String,
    pub required_answer: i64,
}

/// Qualification answer key.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerKey {
    pub documents: Vec<DocumentKey>,
    pub attention_check: AttentionCheck,
}

impl AnswerKey {
    pub fn validate(&self) -> Result<()> {
        if self.documents.is_empty() {
            return Err(Error::validation("answer key has no documents"));
        }
        let mut ids = HashSet::new();
        for doc in &self.documents {
            if !ids.insert(doc.document_id.as_str()) {
                return Err(Error::validation(format!("duplicate document `{}`", doc.document_id)));
            }
            let dims: BTreeSet<Dimension> = doc.answers.keys().copied().collect();
            if dims.len() != Dimension::ALL.len() {
                let missing: Vec<&str> = Dimension::ALL
                    .iter()
                    .filter(|d| !dims.contains(d))
                    .map(|d| d.as_str())
                    .collect();
                return Err(Error::validation(format!(
                    "document `{}` is missing dimensions {missing:?}",
                    doc.document_id
                )));
            }
        }
        if self.documents.iter().any(|d| {
            Dimension::ALL.iter().any(|&dim| d.question_id(dim) == self.attention_check.question_id)
        }) {
            return Err(Error::validation("attention check collides with a graded cell"));
        }
        Ok(())
    }

    /// Number of graded (document, dimension) cells.
    pub fn cells(&self) -> usize {
        self.documents.len() * Dimension::ALL.len()
    }
}

pub fn parse_answer_key(json: &[u8]) -> Result<AnswerKey> {
    let key: AnswerKey = serde_json::from_slice(json)?;
    key.validate()?;
    Ok(key)
}

// ---------------------------------------------------------------------------
// timestamps

fn tz_offset_hours(abbr: &str) -> Option<i32> {
    Some(match abbr {
        "UTC" | "GMT" | "Z" => 0,
        "PST" => -8,
        "PDT" => -7,
        "MST" => -7,
        "MDT" => -6,
        "CST" => -6,
        "CDT" => -5,
        "EST" => -5,
        "EDT" => -4,
        "AKST" => -9,
        "AKDT" => -8,
        "HST" => -10,
        _ => return None,
    })
}

/// Parses RFC 3339 or the MTurk form `Wed Mar 15 10:22:31 PDT 2023`.
pub fn parse_timestamp(s: &str) -> Option<DateTime<Utc>> {
    let s = s.trim();
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.with_timezone(&Utc));
    }
    let parts: Vec<&str> = s.split_whitespace().collect();
    if parts.len() != 6 {
        return None;
    }
    let offset = FixedOffset::east_opt(tz_offset_hours(parts[4])? * 3600)?;
    let naive = NaiveDateTime::parse_from_str(
        &format!("{} {} {} {}", parts[1], parts[2], parts[3], parts[5]),
        "%b %d %H:%M:%S %Y",
    )
    .ok()?;
    let local = offset.from_local_datetime(&naive).single()?;
    Some(local.with_timezone(&Utc))
}

pub fn format_timestamp(t: &DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Millis, true)
}

fn parse_event_log(field: &str) -> std::result::Result<Vec<AnswerEvent>, String> {
    field
        .split('|')
        .filter(|e| !e.trim().is_empty())
        .map(|entry| {
            let (qid, ts) =
                entry.split_once('=').ok_or_else(|| format!("malformed event `{entry}`"))?;
            let at = parse_timestamp(ts)
                .ok_or_else(|| format!("unparseable event timestamp `{ts}`"))?;
            Ok(AnswerEvent { question_id: qid.trim().to_string(), at })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// batch CSV

/// Parses a batch-results CSV into records, one per data row.
///
/// Row numbers in errors count data rows from 1.
pub fn parse_batch(csv_bytes: &[u8]) -> Result<Vec<AnnotationRecord>> {
    let mut rdr = csv::ReaderBuilder::new().flexible(false).from_reader(csv_bytes);
    let header = rdr.headers()?.clone();
    let col = |name: &str| header.iter().position(|h| h == name);
    let mut idx = [0usize; 5];
    for (slot, name) in idx.iter_mut().zip(REQUIRED) {
        *slot = col(name).ok_or_else(|| Error::MissingColumn(name.to_string()))?;
    }
    let [hit_col, worker_col, assignment_col, accept_col, submit_col] = idx;
    let events_col = col(COL_EVENTS);
    let answer_cols: Vec<(usize, String)> = header
        .iter()
        .enumerate()
        .filter_map(|(i, h)| h.strip_prefix(ANSWER_PREFIX).map(|q| (i, q.to_string())))
        .collect();

    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (n, rec) in rdr.records().enumerate() {
        let row = n + 1;
        let rec = rec.map_err(|e| Error::Row { row, message: e.to_string() })?;
        let row_err = |message: String| Error::Row { row, message };

        let accept_raw = rec[accept_col].to_string();
        let submit_raw = rec[submit_col].to_string();
        let accept_time = parse_timestamp(&accept_raw)
            .ok_or_else(|| row_err(format!("unparseable {COL_ACCEPT} `{accept_raw}`")))?;
        let submit_time = parse_timestamp(&submit_raw)
            .ok_or_else(|| row_err(format!("unparseable {COL_SUBMIT} `{submit_raw}`")))?;
        if submit_time < accept_time {
            return Err(row_err(format!("{COL_SUBMIT} precedes {COL_ACCEPT}")));
        }

        let mut answers = Vec::new();
        for (i, qid) in &answer_cols {
            let raw = rec[*i].trim();
            if raw.is_empty() {
                continue;
            }
            let value = raw
                .parse::<i64>()
                .map_err(|_| row_err(format!("non-integer score `{raw}` in {ANSWER_PREFIX}{qid}")))?;
            answers.push(Answer { question_id: qid.clone(), value });
        }

        let events = match events_col.map(|i| rec[i].trim()) {
            Some(f) if !f.is_empty() => Some(parse_event_log(f).map_err(row_err)?),
            _ => None,
        };

        let assignment_id = rec[assignment_col].to_string();
        if !seen.insert(assignment_id.clone()) {
            return Err(Error::DuplicateAssignment(assignment_id));
        }
        out.push(AnnotationRecord {
            worker_id: rec[worker_col].to_string(),
            hit_id: rec[hit_col].to_string(),
            assignment_id,
            accept_time,
            submit_time,
            accept_time_raw: accept_raw,
            submit_time_raw: submit_raw,
            answers,
            events,
        });
    }
    Ok(out)
}

/// Writes records back out in the batch layout. Answer columns follow first
/// appearance across records.
pub fn write_batch(records: &[AnnotationRecord]) -> Result<Vec<u8>> {
    let mut questions: Vec<&str> = Vec::new();
    let mut known = HashSet::new();
    for r in records {
        for a in &r.answers {
            if known.insert(a.question_id.as_str()) {
                questions.push(&a.question_id);
            }
        }
    }
    let with_events = records.iter().any(|r| r.events.is_some());
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = REQUIRED.iter().map(|s| s.to_string()).collect();
    if with_events {
        header.push(COL_EVENTS.to_string());
    }
    header.extend(questions.iter().map(|q| format!("{ANSWER_PREFIX}{q}")));
    w.write_record(&header)?;
    for r in records {
        let mut row = vec![
            r.hit_id.clone(),
            r.worker_id.clone(),
            r.assignment_id.clone(),
            r.accept_time_raw.clone(),
            r.submit_time_raw.clone(),
        ];
        if with_events {
            let log = r
                .events
                .as_deref()
                .unwrap_or_default()
                .iter()
                .map(|e| format!("{}={}", e.question_id, format_timestamp(&e.at)))
                .collect::<Vec<_>>()
                .join("|");
            row.push(log);
        }
        row.extend(questions.iter().map(|q| r.answer(q).map(|v| v.to_string()).unwrap_or_default()));
        w.write_record(&row)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

// ---------------------------------------------------------------------------
// task JSON

#[derive(Deserialize)]
struct RawScale {
    kind: String,
    min: i64,
    max: i64,
}

#[derive(Deserialize)]
struct RawTask {
    hit_id: String,
    article_word_count: u64,
    questions: Vec<String>,
    scale: RawScale,
}

/// Parses a JSON array of task objects.
pub fn parse_tasks(json_bytes: &[u8]) -> Result<Vec<TaskSpec>> {
    let raw: Vec<RawTask> = serde_json::from_slice(json_bytes)?;
    let mut ids = HashSet::new();
    raw.into_iter()
        .map(|t| {
            let kind: ScaleKind = t.scale.kind.parse()?;
            let scale = ScaleDescriptor::new(kind, t.scale.min, t.scale.max)
                .map_err(|e| Error::validation(format!("task `{}`: {e}", t.hit_id)))?;
            if t.questions.is_empty() {
                return Err(Error::validation(format!("task `{}` has no questions", t.hit_id)));
            }
            let mut qs = HashSet::new();
            if let Some(dup) = t.questions.iter().find(|q| !qs.insert(q.as_str())) {
                return Err(Error::validation(format!(
                    "task `{}` repeats question `{dup}`",
                    t.hit_id
                )));
            }
            if !ids.insert(t.hit_id.clone()) {
                return Err(Error::validation(format!("duplicate task `{}`", t.hit_id)));
            }
            Ok(TaskSpec {
                hit_id: t.hit_id,
                article_word_count: t.article_word_count,
                question_ids: t.questions,
                scale,
            })
        })
        .collect()
}

pub fn write_tasks(tasks: &[TaskSpec]) -> Result<Vec<u8>> {
    Ok(serde_json::to_vec_pretty(tasks)?)
}

/// Checks record-level invariants against the task definitions: unique
/// question ids per record and scores within the declared scale. Records for
/// unknown HITs are reported.
pub fn validate_records(records: &[AnnotationRecord], tasks: &[TaskSpec]) -> Result<()> {
    let by_hit: HashMap<&str, &TaskSpec> = tasks.iter().map(|t| (t.hit_id.as_str(), t)).collect();
    for r in records {
        let task = by_hit.get(r.hit_id.as_str()).ok_or_else(|| {
            Error::validation(format!("assignment `{}` references unknown HIT `{}`", r.assignment_id, r.hit_id))
        })?;
        let mut qs = HashSet::new();
        for a in &r.answers {
            if !qs.insert(a.question_id.as_str()) {
                return Err(Error::validation(format!(
                    "assignment `{}` repeats question `{}`",
                    r.assignment_id, a.question_id
                )));
            }
            if !task.scale.contains(a.value) {
                return Err(Error::validation(format!(
                    "assignment `{}`: score {} for `{}` outside {}..={}",
                    r.assignment_id, a.value, a.question_id, task.scale.min, task.scale.max
                )));
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// matrix construction

/// Selects which part of a batch becomes a rating matrix. Empty selections
/// mean "everything".
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatrixFilter {
    #[serde(default)]
    pub hits: Vec<String>,
    #[serde(default)]
    pub questions: Vec<String>,
    #[serde(default)]
    pub workers: Vec<String>,
    #[serde(default)]
    pub exclude_workers: Vec<String>,
}

impl MatrixFilter {
    pub fn all() -> Self {
        Self::default()
    }

    fn hit_ok(&self, hit: &str) -> bool {
        self.hits.is_empty() || self.hits.iter().any(|h| h == hit)
    }

    fn question_ok(&self, q: &str) -> bool {
        self.questions.is_empty() || self.questions.iter().any(|x| x == q)
    }

    fn worker_ok(&self, w: &str) -> bool {
        (self.workers.is_empty() || self.workers.iter().any(|x| x == w))
            && !self.exclude_workers.iter().any(|x| x == w)
    }
}

/// Builds the items × workers matrix for the selected HITs and questions.
///
/// Rows follow task order then question order; columns are worker ids in
/// lexicographic order, restricted to workers with at least one selected
/// score. When a worker submitted the same HIT more than once the earliest
/// submission wins.
pub fn build_matrix(
    records: &[AnnotationRecord],
    tasks: &[TaskSpec],
    filter: &MatrixFilter,
) -> Result<RatingMatrix> {
    let selected: Vec<&TaskSpec> = tasks.iter().filter(|t| filter.hit_ok(&t.hit_id)).collect();
    let mut scale = None;
    let mut items = Vec::new();
    let mut item_index: HashMap<(&str, &str), usize> = HashMap::new();
    for task in &selected {
        let qs: Vec<&String> = task.question_ids.iter().filter(|q| filter.question_ok(q)).collect();
        if qs.is_empty() {
            continue;
        }
        match scale {
            None => scale = Some(task.scale),
            Some(s) if s != task.scale => {
                return Err(Error::validation(format!(
                    "selected tasks mix scales ({}..={} {:?} vs {}..={} {:?} in `{}`)",
                    s.min, s.max, s.kind, task.scale.min, task.scale.max, task.scale.kind, task.hit_id
                )))
            }
            _ => {}
        }
        for q in qs {
            item_index.insert((task.hit_id.as_str(), q.as_str()), items.len());
            items.push(Item::new(&task.hit_id, q));
        }
    }
    let scale = scale.ok_or_else(|| Error::validation("filter selects zero items"))?;

    let mut ordered: Vec<&AnnotationRecord> = records
        .iter()
        .filter(|r| filter.hit_ok(&r.hit_id) && filter.worker_ok(&r.worker_id))
        .collect();
    ordered.sort_by(|a, b| {
        (a.submit_time, &a.assignment_id).cmp(&(b.submit_time, &b.assignment_id))
    });

    let mut by_worker: BTreeMap<&str, HashMap<usize, i64>> = BTreeMap::new();
    for r in ordered {
        for a in &r.answers {
            let Some(&i) = item_index.get(&(r.hit_id.as_str(), a.question_id.as_str())) else {
                continue;
            };
            if !scale.contains(a.value) {
                return Err(Error::validation(format!(
                    "assignment `{}`: score {} for {} outside {}..={}",
                    r.assignment_id, a.value, items[i], scale.min, scale.max
                )));
            }
            by_worker.entry(r.worker_id.as_str()).or_default().entry(i).or_insert(a.value);
        }
    }

    let raters: Vec<String> = by_worker.keys().map(|w| w.to_string()).collect();
    let cells = (0..items.len())
        .map(|i| by_worker.values().map(|m| m.get(&i).copied()).collect())
        .collect();
    RatingMatrix::new(items, raters, cells, scale)
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "HITId,WorkerId,AssignmentId,AcceptTime,SubmitTime,Answer.score_0,Answer.score_1,Answer.score_2,Answer.score_3";

    #[test]
    fn minimal_batch() {
        let csv = format!(
            "{HEADER}\nh1,W1,A1,2023-03-15T10:00:00Z,2023-03-15T10:05:00Z,3,7,7,2\n"
        );
        let recs = parse_batch(csv.as_bytes()).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].answers.len(), 4);
        assert_eq!(recs[0].answers[1], Answer { question_id: "score_1".into(), value: 7 });
        assert_eq!(recs[0].duration_secs(), 300.0);
    }

    #[test]
    fn mturk_timestamp_form() {
        let t = parse_timestamp("Wed Mar 15 10:22:31 PDT 2023").unwrap();
        assert_eq!(format_timestamp(&t), "2023-03-15T17:22:31.000Z");
        assert!(parse_timestamp("Wed Mar 15 10:22:31 XYZ 2023").is_none());
    }

    #[test]
    fn submit_before_accept_is_row_error() {
        let csv = format!(
            "{HEADER}\nh1,W1,A1,2023-03-15T10:05:00Z,2023-03-15T10:00:00Z,3,7,7,2\n"
        );
        match parse_batch(csv.as_bytes()) {
            Err(Error::Row { row, .. }) => assert_eq!(row, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_column_is_named() {
        let csv = "HITId,WorkerId,AcceptTime,SubmitTime\n";
        match parse_batch(csv.as_bytes()) {
            Err(Error::MissingColumn(c)) => assert_eq!(c, "AssignmentId"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_integer_score_reports_row() {
        let csv = format!(
            "{HEADER}\nh1,W1,A1,2023-03-15T10:00:00Z,2023-03-15T10:05:00Z,3,7,7,2\nh1,W2,A2,2023-03-15T10:00:00Z,2023-03-15T10:05:00Z,3,x,7,2\n"
        );
        match parse_batch(csv.as_bytes()) {
            Err(Error::Row { row, message }) => {
                assert_eq!(row, 2);
                assert!(message.contains("score_1"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_assignment_named() {
        let mut csv = String::from(HEADER);
        csv.push('\n');
        let ids: Vec<String> = (0..10).map(|i| if i == 7 { "A3".into() } else { format!("A{i}") }).collect();
        for (i, id) in ids.iter().enumerate() {
            csv.push_str(&format!(
                "h1,W{i},{id},2023-03-15T10:00:00Z,2023-03-15T10:05:00Z,1,2,3,4\n"
            ));
        }
        // oracle: first id already present in a set scan
        let mut set = HashSet::new();
        let expected = ids.iter().find(|id| !set.insert(id.as_str())).unwrap().clone();
        match parse_batch(csv.as_bytes()) {
            Err(Error::DuplicateAssignment(id)) => assert_eq!(id, expected),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn event_log_parsed() {
        let csv = "HITId,WorkerId,AssignmentId,AcceptTime,SubmitTime,EventLog,Answer.q\n\
                   h1,W1,A1,2023-03-15T10:00:00Z,2023-03-15T10:05:00Z,q=2023-03-15T10:01:00Z,4\n";
        let recs = parse_batch(csv.as_bytes()).unwrap();
        let ev = recs[0].events.as_ref().unwrap();
        assert_eq!(ev.len(), 1);
        assert_eq!(ev[0].question_id, "q");
    }

    #[test]
    fn tasks_parse_and_validate() {
        let ok = br#"[{"hit_id":"h1","article_word_count":650,"questions":["score_0","score_1","score_2","score_3"],"scale":{"kind":"ordinal","min":1,"max":10}}]"#;
        let tasks = parse_tasks(ok).unwrap();
        assert_eq!(tasks.len(), 1);
        assert_eq!(tasks[0].article_word_count, 650);
        assert_eq!(tasks[0].scale.categories(), 10);

        let empty = br#"[{"hit_id":"h1","article_word_count":1,"questions":["a"],"scale":{"kind":"ordinal","min":1,"max":1}}]"#;
        assert!(matches!(parse_tasks(empty), Err(Error::Validation(_))));
        let bad_kind = br#"[{"hit_id":"h1","article_word_count":1,"questions":["a"],"scale":{"kind":"ratio","min":1,"max":5}}]"#;
        assert!(matches!(parse_tasks(bad_kind), Err(Error::Validation(_))));
    }

    #[test]
    fn reference_layout_thirty_tasks() {
        let tasks: Vec<serde_json::Value> = (0..30)
            .map(|h| {
                let qs: Vec<String> = (0..4)
                    .flat_map(|c| [format!("can2ref_{c}"), format!("ref2can_{c}")])
                    .collect();
                serde_json::json!({"hit_id": format!("ref{h}"), "article_word_count": 0,
                    "questions": qs, "scale": {"kind":"ordinal","min":1,"max":5}})
            })
            .collect();
        let parsed = parse_tasks(&serde_json::to_vec(&tasks).unwrap()).unwrap();
        assert_eq!(parsed.len(), 30);
        assert!(parsed.iter().all(|t| t.question_ids.len() == 8));
    }

    fn task(hit: &str, qs: &[&str], min: i64, max: i64) -> TaskSpec {
        TaskSpec {
            hit_id: hit.into(),
            article_word_count: 100,
            question_ids: qs.iter().map(|s| s.to_string()).collect(),
            scale: ScaleDescriptor::new(ScaleKind::Ordinal, min, max).unwrap(),
        }
    }

    fn record(worker: &str, hit: &str, asg: &str, answers: &[(&str, i64)]) -> AnnotationRecord {
        let t = parse_timestamp("2023-01-01T00:00:00Z").unwrap();
        AnnotationRecord {
            worker_id: worker.into(),
            hit_id: hit.into(),
            assignment_id: asg.into(),
            accept_time: t,
            submit_time: t + chrono::Duration::seconds(60),
            accept_time_raw: String::new(),
            submit_time_raw: String::new(),
            answers: answers
                .iter()
                .map(|(q, v)| Answer { question_id: q.to_string(), value: *v })
                .collect(),
            events: None,
        }
    }

    #[test]
    fn complete_matrix() {
        let tasks = vec![task("h1", &["q0", "q1", "q2", "q3"], 1, 10)];
        let recs = vec![
            record("W2", "h1", "a2", &[("q0", 1), ("q1", 2), ("q2", 3), ("q3", 4)]),
            record("W1", "h1", "a1", &[("q0", 5), ("q1", 6), ("q2", 7), ("q3", 8)]),
        ];
        let m = build_matrix(&recs, &tasks, &MatrixFilter::all()).unwrap();
        assert_eq!((m.n_items(), m.n_raters()), (4, 2));
        assert_eq!(m.raters(), &["W1".to_string(), "W2".to_string()]);
        assert_eq!(m.present(), 8);
        assert_eq!(m.row(0), &[Some(5), Some(1)]);
    }

    #[test]
    fn partial_answers_leave_missing_cells() {
        let tasks = vec![task("h1", &["q0", "q1", "q2", "q3"], 1, 10)];
        let recs = vec![
            record("W1", "h1", "a1", &[("q0", 5), ("q1", 6), ("q2", 7), ("q3", 8)]),
            record("W2", "h1", "a2", &[("q0", 1), ("q1", 2)]),
        ];
        let m = build_matrix(&recs, &tasks, &MatrixFilter::all()).unwrap();
        assert_eq!(m.column(1).iter().filter(|c| c.is_none()).count(), 2);
    }

    #[test]
    fn mixed_scales_and_empty_selection_rejected() {
        let tasks = vec![task("h1", &["q0"], 1, 10), task("h2", &["q0"], 1, 5)];
        let recs = vec![record("W1", "h1", "a1", &[("q0", 5)])];
        assert!(matches!(build_matrix(&recs, &tasks, &MatrixFilter::all()), Err(Error::Validation(_))));
        let f = MatrixFilter { questions: vec!["nope".into()], ..Default::default() };
        assert!(matches!(build_matrix(&recs, &tasks, &f), Err(Error::Validation(_))));
    }

    #[test]
    fn sparse_baseline_layout() {
        // 30 HITs x 20 assignments spread over 276 workers
        let tasks: Vec<TaskSpec> = (0..30).map(|h| task(&format!("h{h:02}"), &["q"], 1, 5)).collect();
        let mut recs = Vec::new();
        let mut n = 0;
        for h in 0..30 {
            for k in 0..20 {
                let w = (h * 20 + k) % 276;
                recs.push(record(&format!("W{w:03}"), &format!("h{h:02}"), &format!("a{n}"), &[("q", 3)]));
                n += 1;
            }
        }
        let m = build_matrix(&recs, &tasks, &MatrixFilter::all()).unwrap();
        assert_eq!(m.n_raters(), 276);
        assert_eq!(m.present(), 600);
        let per_col: Vec<usize> =
            (0..276).map(|r| m.column(r).iter().flatten().count()).collect();
        assert!(per_col.iter().all(|&c| (2..=3).contains(&c)));
    }

    #[test]
    fn batch_round_trip() {
        let csv = "HITId,WorkerId,AssignmentId,AcceptTime,SubmitTime,EventLog,Answer.a,Answer.b\n\
                   h1,W1,A1,Wed Mar 15 10:22:31 PDT 2023,Wed Mar 15 10:30:00 PDT 2023,a=2023-03-15T17:25:00.000Z,4,\n\
                   h1,W2,A2,2023-03-15T10:00:00Z,2023-03-15T10:05:00Z,,1,2\n";
        let recs = parse_batch(csv.as_bytes()).unwrap();
        let again = parse_batch(&write_batch(&recs).unwrap()).unwrap();
        assert_eq!(again[0].answers, recs[0].answers);
        assert_eq!(again[0].events, recs[0].events);
        assert_eq!(again[1].submit_time, recs[1].submit_time);
        assert_eq!(again[0].accept_time_raw, "Wed Mar 15 10:22:31 PDT 2023");
    }
}
