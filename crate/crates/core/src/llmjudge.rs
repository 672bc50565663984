//! LLM-as-judge client: prompt rendering for coverage scoring, HTTP scoring
//! calls, replay fixtures and multi-run median aggregation.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Version tag of the bundled prompt template.
pub const TEMPLATE_VERSION: &str = "v1";
const TEMPLATE: &str = include_str!("../resources/judge_prompt_v1.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// Is the candidate's information in the reference?
    Can2Ref,
    /// Is the reference's information in the candidate?
    Ref2Can,
}

impl Direction {
    fn question(self) -> &'static str {
        match self {
            Direction::Can2Ref => {
                "Question: how much of the information in the candidate summary can also be found in the reference summary?"
            }
            Direction::Ref2Can => {
                "Question: how much of the information in the reference summary can also be found in the candidate summary?"
            }
        }
    }
}

impl std::str::FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "can2ref" => Ok(Self::Can2Ref),
            "ref2can" => Ok(Self::Ref2Can),
            other => Err(Error::validation(format!("unknown direction `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub reference: String,
    pub candidate: String,
    pub direction: Direction,
    pub prompt: String,
}

/// Fills the bundled template. Substitution is a single pass, so braces in
/// the summaries are copied verbatim.
pub fn render_prompt(reference: &str, candidate: &str, direction: Direction) -> Result<PromptBundle> {
    if reference.trim().is_empty() || candidate.trim().is_empty() {
        return Err(Error::validation("summaries must be non-empty"));
    }
    let mut out = String::with_capacity(TEMPLATE.len() + reference.len() + candidate.len());
    let mut rest = TEMPLATE;
    while let Some(start) = rest.find('{') {
        out.push_str(&rest[..start]);
        let tail = &rest[start..];
        let end = tail.find('}').expect("template placeholders are closed");
        match &tail[1..end] {
            "reference" => out.push_str(reference),
            "candidate" => out.push_str(candidate),
            "question" => out.push_str(direction.question()),
            other => unreachable!("unknown template placeholder {other}"),
        }
        rest = &tail[end + 1..];
    }
    out.push_str(rest);
    Ok(PromptBundle {
        reference: reference.to_string(),
        candidate: candidate.to_string(),
        direction,
        prompt: out,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WireFormat {
    /// `{"model", "prompt", "temperature", "top_p"}`
    #[default]
    Prompt,
    /// `{"model", "messages": [{"role": "user", "content"}], ...}`
    Chat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeConfig {
    pub endpoint: String,
    pub model: String,
    pub temperature: f64,
    pub top_p: f64,
    pub runs: usize,
    pub timeout_secs: u64,
    pub replay: bool,
    pub fixture_path: Option<PathBuf>,
    #[serde(default)]
    pub wire: WireFormat,
    pub concurrency: usize,
    /// Environment variable holding the API key.
    pub api_key_env: Option<String>,
    pub max_retries: usize,
}

impl Default for JudgeConfig {
    fn default() -> Self {
        Self {
            endpoint: "http://127.0.0.1:8080/v1/completions".into(),
            model: "gpt-3.5-turbo".into(),
            temperature: 1.0,
            top_p: 1.0,
            runs: 5,
            timeout_secs: 60,
            replay: false,
            fixture_path: None,
            wire: WireFormat::Prompt,
            concurrency: 4,
            api_key_env: Some("JUDGE_API_KEY".into()),
            max_retries: 2,
        }
    }
}

impl JudgeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(Error::validation("runs must be at least 1"));
        }
        if !(self.temperature >= 0.0) {
            return Err(Error::validation("temperature must be non-negative"));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(Error::validation("top_p must lie in (0, 1]"));
        }
        if self.replay && self.fixture_path.is_none() {
            return Err(Error::validation("replay mode requires a fixture path"));
        }
        if self.concurrency == 0 {
            return Err(Error::validation("concurrency must be at least 1"));
        }
        Ok(())
    }
}

/// Hex SHA-256 over the canonical JSON of (model, prompt, sampling
/// parameters, run index). Endpoint, timeouts and credentials do not enter.
pub fn request_digest(config: &JudgeConfig, prompt: &str, run: usize) -> String {
    let canonical = json!({
        "model": config.model,
        "prompt": prompt,
        "run": run,
        "temperature": config.temperature,
        "top_p": config.top_p,
    });
    hex::encode(Sha256::digest(canonical.to_string().as_bytes()))
}

pub fn request_body(config: &JudgeConfig, prompt: &str) -> Value {
    match config.wire {
        WireFormat::Prompt => json!({
            "model": config.model,
            "prompt": prompt,
            "temperature": config.temperature,
            "top_p": config.top_p,
        }),
        WireFormat::Chat => json!({
            "model": config.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": config.temperature,
            "top_p": config.top_p,
        }),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureEntry {
    pub digest: String,
    pub response: String,
}

pub fn load_fixtures(bytes: &[u8]) -> Result<BTreeMap<String, String>> {
    let entries: Vec<FixtureEntry> = serde_json::from_slice(bytes)?;
    Ok(entries.into_iter().map(|e| (e.digest, e.response)).collect())
}

pub fn write_fixtures(map: &BTreeMap<String, String>) -> Result<Vec<u8>> {
    let entries: Vec<FixtureEntry> =
        map.iter().map(|(d, r)| FixtureEntry { digest: d.clone(), response: r.clone() }).collect();
    Ok(serde_json::to_vec_pretty(&entries)?)
}

/// Sends one request and returns the model's text.
pub trait Transport: Sync {
    fn send(&self, digest: &str, body: &Value) -> Result<String>;
}

pub struct Replay {
    fixtures: BTreeMap<String, String>,
}

impl Replay {
    pub fn new(fixtures: BTreeMap<String, String>) -> Self {
        Self { fixtures }
    }
}

impl Transport for Replay {
    fn send(&self, digest: &str, _body: &Value) -> Result<String> {
        self.fixtures
            .get(digest)
            .cloned()
            .ok_or_else(|| Error::Judge(format!("no fixture for request {digest}")))
    }
}

pub struct Http {
    agent: ureq::Agent,
    endpoint: String,
    api_key: Option<String>,
}

impl Http {
    pub fn new(config: &JudgeConfig) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .build()
            .into();
        let api_key = config.api_key_env.as_deref().and_then(|v| std::env::var(v).ok());
        Self { agent, endpoint: config.endpoint.clone(), api_key }
    }
}

impl Transport for Http {
    fn send(&self, _digest: &str, body: &Value) -> Result<String> {
        let mut req = self.agent.post(&self.endpoint).header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let mut resp = req.send(body.to_string()).map_err(|e| Error::Judge(e.to_string()))?;
        let text = resp.body_mut().read_to_string().map_err(|e| Error::Judge(e.to_string()))?;
        Ok(extract_text(&text))
    }
}

/// Pulls the generated text out of common completion response shapes;
/// anything else is returned as is.
pub fn extract_text(body: &str) -> String {
    let Ok(v) = serde_json::from_str::<Value>(body) else {
        return body.to_string();
    };
    let candidates = [
        v.pointer("/choices/0/message/content"),
        v.pointer("/choices/0/text"),
        v.pointer("/response"),
        v.pointer("/content"),
        v.pointer("/text"),
    ];
    let found = candidates.into_iter().flatten().find_map(|c| c.as_str().map(str::to_string));
    found.unwrap_or_else(|| body.to_string())
}

/// The first integer in `text`, accepted only within 1–5.
pub fn parse_score(text: &str) -> Result<i64> {
    let bytes = text.as_bytes();
    let Some(start) = bytes.iter().position(u8::is_ascii_digit) else {
        return Err(Error::Judge(format!("no integer in response {text:?}")));
    };
    let end = bytes[start..].iter().position(|b| !b.is_ascii_digit()).map_or(bytes.len(), |p| start + p);
    let negative = start > 0 && bytes[start - 1] == b'-';
    let value: i64 = text[start..end].parse().unwrap_or(i64::MAX);
    if negative || !(1..=5).contains(&value) {
        return Err(Error::Judge(format!("score out of range in response {text:?}")));
    }
    Ok(value)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub run: usize,
    pub digest: String,
    pub response: Option<String>,
    pub score: Option<i64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgeScore {
    pub direction: Direction,
    /// Lower median of the parsed runs.
    pub score: i64,
    pub runs: Vec<RunOutcome>,
}

fn send_with_retry(transport: &dyn Transport, digest: &str, body: &Value, retries: usize) -> Result<String> {
    let mut attempt = 0;
    loop {
        match transport.send(digest, body) {
            Ok(t) => return Ok(t),
            Err(e) if attempt < retries => {
                log::warn!("judge request {digest} failed ({e}); retrying");
                attempt += 1;
            }
            Err(e) => return Err(e),
        }
    }
}

/// Lower median of the parsed runs, independent of their order.
pub fn aggregate(runs: &[RunOutcome]) -> Result<i64> {
    let mut scores: Vec<i64> = runs.iter().filter_map(|r| r.score).collect();
    if scores.is_empty() {
        return Err(Error::Judge("no run produced a parseable score".into()));
    }
    scores.sort_unstable();
    Ok(scores[(scores.len() - 1) / 2])
}

/// Scores every bundle, issuing up to `config.concurrency` requests at once.
/// Results come back in input order.
pub fn score_all(bundles: &[PromptBundle], config: &JudgeConfig, transport: &dyn Transport) -> Result<Vec<Result<JudgeScore>>> {
    config.validate()?;
    let jobs: Vec<(usize, usize)> = (0..bundles.len()).flat_map(|b| (0..config.runs).map(move |r| (b, r))).collect();
    let slots: Mutex<Vec<Option<RunOutcome>>> = Mutex::new(vec![None; jobs.len()]);
    let next = AtomicUsize::new(0);
    std::thread::scope(|s| {
        for _ in 0..config.concurrency.min(jobs.len()) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(b, run)) = jobs.get(i) else { break };
                let prompt = &bundles[b].prompt;
                let digest = request_digest(config, prompt, run);
                let body = request_body(config, prompt);
                let outcome = match send_with_retry(transport, &digest, &body, config.max_retries) {
                    Ok(text) => match parse_score(&text) {
                        Ok(score) => RunOutcome { run, digest, response: Some(text), score: Some(score), error: None },
                        Err(e) => RunOutcome { run, digest, response: Some(text), score: None, error: Some(e.to_string()) },
                    },
                    Err(e) => RunOutcome { run, digest, response: None, score: None, error: Some(e.to_string()) },
                };
                slots.lock().expect("no panics while holding the lock")[i] = Some(outcome);
            });
        }
    });
    let mut outcomes = slots.into_inner().expect("threads joined").into_iter().map(|o| o.expect("every job ran"));
    Ok(bundles
        .iter()
        .map(|bundle| {
            let runs: Vec<RunOutcome> = outcomes.by_ref().take(config.runs).collect();
            aggregate(&runs).map(|score| JudgeScore { direction: bundle.direction, score, runs })
        })
        .collect())
}

pub fn score(bundle: &PromptBundle, config: &JudgeConfig, transport: &dyn Transport) -> Result<JudgeScore> {
    score_all(std::slice::from_ref(bundle), config, transport)?.remove(0)
}

/// Collects the responses of live runs as fixture entries.
pub fn fixtures_from(scores: &[JudgeScore]) -> BTreeMap<String, String> {
    scores
        .iter()
        .flat_map(|s| s.runs.iter())
        .filter_map(|r| r.response.as_ref().map(|t| (r.digest.clone(), t.clone())))
        .collect()
}
