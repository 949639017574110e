//! Batch synthesis of rebalanced latent sets from declarative plans.

use std::collections::BTreeSet;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::latent_io::{write_atomic, LatentStore, LatentVector, Manifest, Record, MAX_DIMENSION};
use crate::scoring::AttributeClass;
use crate::stats::{validate_beta, ClassStats};
use crate::transform::{multi_feature, StatsRegistry, WeightedClass};

pub use crate::entanglement::{balance_report, BalanceReport};

pub const DEFAULT_ENTRY_COUNT: u64 = 2000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlanEntry {
    pub name: String,
    pub base: AttributeClass,
    pub beta: f64,
    pub count: u64,
    pub terms: Vec<WeightedClass>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetPlan {
    pub seed: u64,
    pub dimension: usize,
    pub entries: Vec<PlanEntry>,
}

// Classes stay strings until validation so errors can name the entry.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTerm {
    class: String,
    weight: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEntry {
    name: String,
    base: String,
    beta: f64,
    #[serde(default = "default_count")]
    count: u64,
    terms: Vec<RawTerm>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPlan {
    seed: u64,
    dimension: usize,
    entries: Vec<RawEntry>,
}

fn default_count() -> u64 {
    DEFAULT_ENTRY_COUNT
}

fn entry_class(entry: &str, name: &str) -> Result<AttributeClass> {
    name.parse()
        .map_err(|_| Error::invalid(format!("plan entry {entry:?}: unknown class {name:?}")))
}

impl DatasetPlan {
    pub fn from_json(text: &str) -> Result<Self> {
        let raw: RawPlan = serde_json::from_str(text)?;
        let entries = raw
            .entries
            .into_iter()
            .map(|e| {
                let base = entry_class(&e.name, &e.base)?;
                let terms = e
                    .terms
                    .iter()
                    .map(|t| {
                        Ok(WeightedClass {
                            class: entry_class(&e.name, &t.class)?,
                            weight: t.weight,
                        })
                    })
                    .collect::<Result<_>>()?;
                Ok(PlanEntry {
                    name: e.name,
                    base,
                    beta: e.beta,
                    count: e.count,
                    terms,
                })
            })
            .collect::<Result<_>>()?;
        let plan = DatasetPlan {
            seed: raw.seed,
            dimension: raw.dimension,
            entries,
        };
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dimension == 0 || self.dimension > MAX_DIMENSION {
            return Err(Error::InvalidDimension(self.dimension));
        }
        if self.entries.is_empty() {
            return Err(Error::invalid("plan has no entries"));
        }
        let mut names = BTreeSet::new();
        for e in &self.entries {
            if !names.insert(e.name.as_str()) {
                return Err(Error::invalid(format!("duplicate plan entry name {:?}", e.name)));
            }
            if e.count == 0 {
                return Err(Error::invalid(format!("plan entry {:?}: count must be ≥ 1", e.name)));
            }
            validate_beta(e.beta)
                .map_err(|err| Error::invalid(format!("plan entry {:?}: {err}", e.name)))?;
            if e.terms.is_empty() {
                return Err(Error::invalid(format!("plan entry {:?}: no terms", e.name)));
            }
            if let Some(t) = e.terms.iter().find(|t| !t.weight.is_finite()) {
                return Err(Error::invalid(format!(
                    "plan entry {:?}: weight for {} is not finite",
                    e.name, t.class
                )));
            }
        }
        Ok(())
    }

    pub fn total_count(&self) -> u64 {
        self.entries.iter().map(|e| e.count).sum()
    }

    /// Every class a registry must provide to execute this plan.
    pub fn classes(&self) -> BTreeSet<AttributeClass> {
        self.entries
            .iter()
            .flat_map(|e| std::iter::once(e.base).chain(e.terms.iter().map(|t| t.class)))
            .collect()
    }
}

pub fn load_plan(path: impl AsRef<Path>) -> Result<DatasetPlan> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    DatasetPlan::from_json(&text)
}

/// Provenance of one generated record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestRow {
    pub id: u64,
    pub entry: String,
    pub draw: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanOutput {
    pub store: LatentStore,
    pub manifest: Vec<ManifestRow>,
}

impl PlanOutput {
    pub fn manifest_jsonl(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        for row in &self.manifest {
            serde_json::to_writer(&mut out, row)?;
            out.push(b'\n');
        }
        Ok(out)
    }

    pub fn write_manifest(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path.as_ref(), &self.manifest_jsonl()?)
    }
}

/// Seeded N(0, I) draws for entry `index`; independent of every other entry.
pub fn entry_draws(seed: u64, index: usize, dimension: usize, count: u64) -> Vec<LatentVector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ index as u64);
    (0..count)
        .map(|_| {
            LatentVector::from_vec_unchecked(
                (0..dimension).map(|_| StandardNormal.sample(&mut rng)).collect(),
            )
        })
        .collect()
}

fn run_entry(
    plan: &DatasetPlan,
    index: usize,
    registry: &StatsRegistry,
) -> Result<Vec<LatentVector>> {
    let entry = &plan.entries[index];
    let base = registry.get(entry.base)?;
    let terms = entry
        .terms
        .iter()
        .map(|t| Ok((registry.get(t.class)?, t.weight)))
        .collect::<Result<Vec<(&ClassStats, f64)>>>()?;
    entry_draws(plan.seed, index, plan.dimension, entry.count)
        .iter()
        .map(|z| multi_feature(z, base, entry.beta, &terms))
        .collect()
}

/// Generates every entry and concatenates the outputs in (entry, draw) order.
pub fn execute_plan(plan: &DatasetPlan, registry: &StatsRegistry) -> Result<PlanOutput> {
    plan.validate()?;
    for class in plan.classes() {
        let stats = registry.get(class)?;
        if stats.dimension() != plan.dimension {
            return Err(Error::DimensionMismatch {
                expected: plan.dimension,
                got: stats.dimension(),
            });
        }
    }
    let per_entry = (0..plan.entries.len())
        .into_par_iter()
        .map(|i| run_entry(plan, i, registry))
        .collect::<Result<Vec<_>>>()?;

    let manifest_meta = Manifest {
        seed: Some(plan.seed),
        source: "plan".into(),
        space: Some("Z".into()),
    };
    let mut records = Vec::new();
    let mut manifest = Vec::new();
    let mut id = 0u64;
    for (entry, outputs) in plan.entries.iter().zip(per_entry) {
        for (draw, vector) in outputs.into_iter().enumerate() {
            manifest.push(ManifestRow {
                id,
                entry: entry.name.clone(),
                draw: draw as u64,
            });
            records.push(Record { id, vector });
            id += 1;
        }
    }
    Ok(PlanOutput {
        store: LatentStore::from_records(plan.dimension, records, manifest_meta)?,
        manifest,
    })
}
