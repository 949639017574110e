use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::latent_io::{write_atomic, LatentStore, LatentVector};

use super::{AttributeClass, AttributeProbabilities, HardLabelSet, Scorer};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelRow {
    pub id: u64,
    pub probs: AttributeProbabilities,
    pub labels: HardLabelSet,
}

/// Scored records, ordered by id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabelTable {
    rows: Vec<LabelRow>,
}

impl LabelTable {
    pub fn from_rows(mut rows: Vec<LabelRow>) -> Result<Self> {
        rows.sort_by_key(|r| r.id);
        for pair in rows.windows(2) {
            if pair[0].id == pair[1].id {
                return Err(Error::invalid(format!("duplicate label id {}", pair[0].id)));
            }
        }
        Ok(LabelTable { rows })
    }

    /// Rows whose `labels` are derived from `probs` by the argmax rule.
    pub fn from_probabilities(rows: impl IntoIterator<Item = (u64, AttributeProbabilities)>) -> Result<Self> {
        LabelTable::from_rows(
            rows.into_iter()
                .map(|(id, probs)| LabelRow {
                    id,
                    labels: probs.hard_label(),
                    probs,
                })
                .collect(),
        )
    }

    pub fn rows(&self) -> &[LabelRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn get(&self, id: u64) -> Option<&LabelRow> {
        self.rows
            .binary_search_by_key(&id, |r| r.id)
            .ok()
            .map(|i| &self.rows[i])
    }

    pub fn labels(&self) -> impl Iterator<Item = &HardLabelSet> {
        self.rows.iter().map(|r| &r.labels)
    }

    /// JSON Lines, one object per row.
    pub fn to_jsonl(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        for r in &self.rows {
            serde_json::to_writer(&mut out, r)?;
            out.push(b'\n');
        }
        Ok(out)
    }

    pub fn from_jsonl(reader: impl BufRead) -> Result<Self> {
        let mut rows = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::io(format!("line {}", i + 1), e))?;
            if line.trim().is_empty() {
                continue;
            }
            let row: LabelRow = serde_json::from_str(&line)
                .map_err(|e| Error::invalid(format!("label line {}: {e}", i + 1)))?;
            if row.labels != row.probs.hard_label() {
                return Err(Error::invalid(format!(
                    "label line {}: labels disagree with probabilities",
                    i + 1
                )));
            }
            rows.push(row);
        }
        LabelTable::from_rows(rows)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path.as_ref(), &self.to_jsonl()?)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        LabelTable::from_jsonl(BufReader::new(file))
    }
}

#[derive(Debug)]
pub struct LabelOutcome {
    pub table: LabelTable,
    /// Ids the scorer could not label, with the reason.
    pub failures: Vec<(u64, Error)>,
}

/// Scores every record; failures are collected per row rather than aborting.
pub fn label_store(store: &LatentStore, scorer: &dyn Scorer) -> Result<LabelOutcome> {
    if scorer.dimension() != store.dimension() {
        return Err(Error::DimensionMismatch {
            expected: store.dimension(),
            got: scorer.dimension(),
        });
    }
    let vectors: Vec<&LatentVector> = store.vectors().collect();
    let results = scorer.score_many(&vectors);
    if results.len() != vectors.len() {
        return Err(Error::Remote(format!(
            "scorer returned {} results for {} vectors",
            results.len(),
            vectors.len()
        )));
    }
    let mut ok = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for (record, res) in store.records().iter().zip(results) {
        match res {
            Ok(p) => ok.push((record.id, p)),
            Err(e) => failures.push((record.id, e)),
        }
    }
    Ok(LabelOutcome {
        table: LabelTable::from_probabilities(ok)?,
        failures,
    })
}

/// Ids whose hard label for `class`'s group is `class`, ascending.
pub fn select_class(table: &LabelTable, class: AttributeClass) -> Vec<u64> {
    table
        .rows
        .iter()
        .filter(|r| r.labels.contains(class))
        .map(|r| r.id)
        .collect()
}
