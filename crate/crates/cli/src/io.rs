use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use crowdvet::ingest::{self, build_matrix, MatrixFilter};
use crowdvet::{AnnotationRecord, RatingMatrix, ScaleDescriptor, TaskSpec};
use serde::Serialize;

use crate::args::MatrixArgs;

pub fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).with_context(|| format!("reading {}", path.display()))
}

/// Writes to a temporary file beside `path`, then renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).with_context(|| format!("creating a file in {}", dir.display()))?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Writes to `path`, or to stdout when no path is given.
pub fn emit(path: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match path {
        Some(p) => write_atomic(p, bytes),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(bytes)?;
            out.flush()?;
            Ok(())
        }
    }
}

#[derive(Serialize)]
pub struct Envelope<'a, C: Serialize, R: Serialize> {
    pub toolkit: &'static str,
    pub version: &'static str,
    pub command: &'a str,
    pub config: &'a C,
    pub result: R,
}

pub fn envelope<C: Serialize, R: Serialize>(command: &str, config: &C, result: R) -> Result<Vec<u8>> {
    let env = Envelope { toolkit: "crowdvet", version: crowdvet::VERSION, command, config, result };
    let mut bytes = serde_json::to_vec_pretty(&env)?;
    bytes.push(b'\n');
    Ok(bytes)
}

pub fn records(path: &Path) -> Result<Vec<AnnotationRecord>> {
    ingest::parse_batch(&read(path)?).with_context(|| format!("parsing {}", path.display()))
}

pub fn tasks(path: &Path) -> Result<Vec<TaskSpec>> {
    ingest::parse_tasks(&read(path)?).with_context(|| format!("parsing {}", path.display()))
}

/// Parses `kind:min:max`, e.g. `ordinal:1:5`.
pub fn parse_scale(s: &str) -> Result<ScaleDescriptor> {
    let parts: Vec<&str> = s.split(':').collect();
    let [kind, min, max] = parts.as_slice() else {
        bail!("scale must look like kind:min:max, got `{s}`");
    };
    Ok(ScaleDescriptor::new(kind.parse()?, min.parse()?, max.parse()?)?)
}

/// Builds the rating matrix from either a batch plus tasks or a matrix CSV.
pub fn matrix(args: &MatrixArgs) -> Result<RatingMatrix> {
    let m = match (&args.records, &args.tasks, &args.matrix) {
        (Some(r), Some(t), None) => {
            let filter = MatrixFilter {
                hits: args.hits.clone(),
                questions: args.questions.clone(),
                workers: args.workers.clone(),
                exclude_workers: args.exclude_workers.clone(),
            };
            build_matrix(&records(r)?, &tasks(t)?, &filter)?
        }
        (None, None, Some(m)) => {
            let scale = args.scale.as_deref().map(parse_scale).transpose()?.context("--matrix needs --scale")?;
            let m = RatingMatrix::from_csv(&read(m)?, scale).with_context(|| format!("parsing {}", m.display()))?;
            if args.exclude_workers.is_empty() {
                m
            } else {
                m.without_raters(&args.exclude_workers)
            }
        }
        _ => bail!("give either --records with --tasks, or --matrix with --scale"),
    };
    Ok(m)
}

/// Binary outcomes from a CSV with an `outcome` column (0/1 or true/false).
pub fn outcomes(path: &Path) -> Result<Vec<bool>> {
    let bytes = read(path)?;
    let mut rdr = csv::Reader::from_reader(bytes.as_slice());
    let col = rdr
        .headers()?
        .iter()
        .position(|h| h.trim() == "outcome")
        .with_context(|| format!("{} has no `outcome` column", path.display()))?;
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let v = row.get(col).unwrap_or("").trim();
        out.push(match v {
            "1" | "true" | "pass" => true,
            "0" | "false" | "fail" => false,
            other => bail!("{} row {}: `{other}` is not a binary outcome", path.display(), i + 1),
        });
    }
    Ok(out)
}

pub fn json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_slice(&read(path)?).with_context(|| format!("parsing {}", path.display()))
}
