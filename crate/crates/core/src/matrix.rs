//! The items × raters score grid every agreement statistic consumes.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::ScaleDescriptor;

/// One rated unit: a question inside a HIT.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Item {
    pub hit_id: String,
    pub question_id: String,
}

impl Item {
    pub fn new(hit_id: impl Into<String>, question_id: impl Into<String>) -> Self {
        Self { hit_id: hit_id.into(), question_id: question_id.into() }
    }
}

impl std::fmt::Display for Item {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}", self.hit_id, self.question_id)
    }
}

/// Items × raters grid with explicit missing cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingMatrix {
    items: Vec<Item>,
    raters: Vec<String>,
    cells: Vec<Vec<Option<i64>>>,
    scale: ScaleDescriptor,
}

impl RatingMatrix {
    /// Builds a matrix, checking shape, rater uniqueness and scale bounds.
    pub fn new(
        items: Vec<Item>,
        raters: Vec<String>,
        cells: Vec<Vec<Option<i64>>>,
        scale: ScaleDescriptor,
    ) -> Result<Self> {
        if cells.len() != items.len() {
            return Err(Error::validation(format!(
                "matrix has {} rows but {} items",
                cells.len(),
                items.len()
            )));
        }
        let mut seen = BTreeSet::new();
        for r in &raters {
            if !seen.insert(r.as_str()) {
                return Err(Error::validation(format!("duplicate rater `{r}`")));
            }
        }
        for (item, row) in items.iter().zip(&cells) {
            if row.len() != raters.len() {
                return Err(Error::validation(format!(
                    "row for {item} has {} cells, expected {}",
                    row.len(),
                    raters.len()
                )));
            }
            for v in row.iter().flatten() {
                if !scale.contains(*v) {
                    return Err(Error::validation(format!(
                        "score {v} for {item} outside scale {}..={}",
                        scale.min, scale.max
                    )));
                }
            }
        }
        Ok(Self { items, raters, cells, scale })
    }

    pub fn items(&self) -> &[Item] {
        &self.items
    }

    pub fn raters(&self) -> &[String] {
        &self.raters
    }

    pub fn scale(&self) -> &ScaleDescriptor {
        &self.scale
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    pub fn n_raters(&self) -> usize {
        self.raters.len()
    }

    pub fn get(&self, item: usize, rater: usize) -> Option<i64> {
        self.cells[item][rater]
    }

    pub fn row(&self, item: usize) -> &[Option<i64>] {
        &self.cells[item]
    }

    pub fn rows(&self) -> &[Vec<Option<i64>>] {
        &self.cells
    }

    pub fn column(&self, rater: usize) -> Vec<Option<i64>> {
        self.cells.iter().map(|row| row[rater]).collect()
    }

    pub fn rater_index(&self, id: &str) -> Option<usize> {
        self.raters.iter().position(|r| r == id)
    }

    /// Number of present cells.
    pub fn present(&self) -> usize {
        self.cells.iter().flatten().filter(|c| c.is_some()).count()
    }

    /// Keeps the given rater columns, in the given order.
    pub fn select_raters(&self, keep: &[usize]) -> RatingMatrix {
        RatingMatrix {
            items: self.items.clone(),
            raters: keep.iter().map(|&r| self.raters[r].clone()).collect(),
            cells: self.cells.iter().map(|row| keep.iter().map(|&r| row[r]).collect()).collect(),
            scale: self.scale,
        }
    }

    /// Keeps the given item rows, in the given order.
    pub fn select_items(&self, keep: &[usize]) -> RatingMatrix {
        RatingMatrix {
            items: keep.iter().map(|&i| self.items[i].clone()).collect(),
            raters: self.raters.clone(),
            cells: keep.iter().map(|&i| self.cells[i].clone()).collect(),
            scale: self.scale,
        }
    }

    /// Drops the named raters; unknown ids are ignored.
    pub fn without_raters(&self, drop: &[String]) -> RatingMatrix {
        let keep: Vec<usize> =
            (0..self.n_raters()).filter(|&r| !drop.contains(&self.raters[r])).collect();
        self.select_raters(&keep)
    }

    /// Replaces every score through `f`, with a new scale descriptor.
    pub fn map_scores(&self, scale: ScaleDescriptor, f: impl Fn(i64) -> i64) -> Result<RatingMatrix> {
        let cells = self.cells.iter().map(|row| row.iter().map(|c| c.map(&f)).collect()).collect();
        RatingMatrix::new(self.items.clone(), self.raters.clone(), cells, scale)
    }

    /// Writes the matrix as CSV: `hit_id,question_id,<rater...>`, empty cell
    /// for missing.
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["hit_id".to_string(), "question_id".to_string()];
        header.extend(self.raters.iter().cloned());
        w.write_record(&header)?;
        for (item, row) in self.items.iter().zip(&self.cells) {
            let mut rec = vec![item.hit_id.clone(), item.question_id.clone()];
            rec.extend(row.iter().map(|c| c.map(|v| v.to_string()).unwrap_or_default()));
            w.write_record(&rec)?;
        }
        w.into_inner().map_err(|e| Error::Io(e.into_error()))
    }

    /// Parses the CSV produced by [`RatingMatrix::to_csv`].
    pub fn from_csv(bytes: &[u8], scale: ScaleDescriptor) -> Result<RatingMatrix> {
        let mut rdr = csv::Reader::from_reader(bytes);
        let header = rdr.headers()?.clone();
        if header.get(0) != Some("hit_id") {
            return Err(Error::MissingColumn("hit_id".into()));
        }
        if header.get(1) != Some("question_id") {
            return Err(Error::MissingColumn("question_id".into()));
        }
        let raters: Vec<String> = header.iter().skip(2).map(str::to_string).collect();
        let mut items = Vec::new();
        let mut cells = Vec::new();
        for (idx, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let row_no = idx + 1;
            items.push(Item::new(&rec[0], &rec[1]));
            let mut row = Vec::with_capacity(raters.len());
            for field in rec.iter().skip(2) {
                if field.is_empty() {
                    row.push(None);
                } else {
                    let v = field.trim().parse::<i64>().map_err(|_| Error::Row {
                        row: row_no,
                        message: format!("non-integer score `{field}`"),
                    })?;
                    row.push(Some(v));
                }
            }
            cells.push(row);
        }
        RatingMatrix::new(items, raters, cells, scale)
    }
}
