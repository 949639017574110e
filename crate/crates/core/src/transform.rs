//! Attribute transforms over class statistics.
//!
//! Every transform has the same shape: a weighted sum of class means plus a
//! reconstruction `V b̃` of the input in some class's eigenbasis, where `b̃` is
//! the clamped projection of the input onto that basis.
//!
//! | transform            | mean part                  | basis                 |
//! |----------------------|----------------------------|-----------------------|
//! | [`edit`]             | `α m`                      | all of `V`            |
//! | [`feature_synth`]    | `m`                        | leading `t′` columns  |
//! | [`multi_edit`]       | `Σ γ_i m_i`                | all of `V_base`       |
//! | [`multi_feature`]    | `Σ w_i m_i`                | leading `t′` of base  |
//! | [`disentangled_edit`]| `α m_D − Σ δ_j m_U,j`      | all of `V_D`          |
//!
//! Multi-term sums run in ascending class-id order so their results do not
//! depend on how the caller ordered the terms.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::latent_io::{LatentStore, LatentVector, Manifest, Record};
use crate::scoring::AttributeClass;
use crate::stats::{clamp_b, project_b, truncate_stats, validate_beta, ClassStats};

fn validate_alpha(alpha: f64) -> Result<()> {
    if !(alpha >= 1.0 && alpha.is_finite()) {
        return Err(Error::invalid(format!("alpha must be ≥ 1, got {alpha}")));
    }
    Ok(())
}

fn validate_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::invalid(format!("delta must be > 0, got {delta}")));
    }
    Ok(())
}

fn check_dim(stats: &ClassStats, got: usize) -> Result<()> {
    if stats.dimension() != got {
        return Err(Error::DimensionMismatch {
            expected: stats.dimension(),
            got,
        });
    }
    Ok(())
}

fn clamped(stats: &ClassStats, z: &LatentVector) -> Result<Vec<f64>> {
    Ok(clamp_b(stats, &project_b(stats, z)?)?.coefficients)
}

fn scaled(v: &[f64], w: f64) -> Vec<f64> {
    v.iter().map(|x| w * x).collect()
}

fn finish(mean_part: Vec<f64>, offset: Vec<f64>) -> Result<LatentVector> {
    let out: Vec<f64> = mean_part.iter().zip(&offset).map(|(a, b)| a + b).collect();
    if let Some(component) = out.iter().position(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!(
            "transform produced a non-finite component at index {component}"
        )));
    }
    Ok(LatentVector::from_vec_unchecked(out))
}

/// `Σ w_i m_i` in ascending class order (weights break ties).
fn weighted_means(terms: &[(&ClassStats, f64)], d: usize) -> Result<Vec<f64>> {
    if terms.is_empty() {
        return Err(Error::invalid("at least one mean term is required"));
    }
    let mut ordered = terms.to_vec();
    ordered.sort_by(|a, b| a.0.class().cmp(&b.0.class()).then(a.1.total_cmp(&b.1)));
    let mut acc: Option<Vec<f64>> = None;
    for (stats, w) in ordered {
        check_dim(stats, d)?;
        if !w.is_finite() {
            return Err(Error::invalid(format!("weight for {} is not finite", stats.class())));
        }
        match acc.as_mut() {
            None => acc = Some(scaled(stats.mean(), w)),
            Some(sum) => {
                for (s, m) in sum.iter_mut().zip(stats.mean()) {
                    *s += w * m;
                }
            }
        }
    }
    Ok(acc.unwrap_or_default())
}

/// Attribute editing: `α m + V b̃`.
pub fn edit(z: &LatentVector, stats: &ClassStats, alpha: f64) -> Result<LatentVector> {
    validate_alpha(alpha)?;
    check_dim(stats, z.dim())?;
    let b = clamped(stats, z)?;
    finish(scaled(stats.mean(), alpha), stats.combine_columns(&b))
}

/// Feature-based synthesis: `m + Ṽ b̃`, keeping the leading `t′` coefficients.
pub fn feature_synth(z: &LatentVector, stats: &ClassStats, beta: f64) -> Result<LatentVector> {
    check_dim(stats, z.dim())?;
    let truncated = truncate_stats(stats, beta)?;
    let b = clamped(stats, z)?;
    finish(
        stats.mean().to_vec(),
        stats.combine_columns(&b[..truncated.retained]),
    )
}

/// Both outputs of the class transform: `(z_fb, z_id)`.
pub fn psi(
    z: &LatentVector,
    stats: &ClassStats,
    alpha: f64,
    beta: f64,
) -> Result<(LatentVector, LatentVector)> {
    Ok((feature_synth(z, stats, beta)?, edit(z, stats, alpha)?))
}

/// Multiple attribute editing: `Σ γ_i m_i + V_base b̃`, with `b̃` taken against the base class.
pub fn multi_edit(
    z: &LatentVector,
    base: &ClassStats,
    terms: &[(&ClassStats, f64)],
) -> Result<LatentVector> {
    check_dim(base, z.dim())?;
    let means = weighted_means(terms, z.dim())?;
    let b = clamped(base, z)?;
    finish(means, base.combine_columns(&b))
}

/// Multiple feature-based synthesis: `Σ w_i m_i + Ṽ_base b̃`.
pub fn multi_feature(
    z: &LatentVector,
    base: &ClassStats,
    beta: f64,
    terms: &[(&ClassStats, f64)],
) -> Result<LatentVector> {
    check_dim(base, z.dim())?;
    let truncated = truncate_stats(base, beta)?;
    let means = weighted_means(terms, z.dim())?;
    let b = clamped(base, z)?;
    finish(means, base.combine_columns(&b[..truncated.retained]))
}

/// Disentangled editing: `α m_D − Σ_j δ_j m_U,j + V_D b̃`.
pub fn disentangled_edit(
    z: &LatentVector,
    desired: &ClassStats,
    alpha: f64,
    undesired: &[(&[f64], f64)],
) -> Result<LatentVector> {
    validate_alpha(alpha)?;
    check_dim(desired, z.dim())?;
    let mut mean_part = scaled(desired.mean(), alpha);
    for &(mean, delta) in undesired {
        validate_delta(delta)?;
        if mean.len() != z.dim() {
            return Err(Error::DimensionMismatch {
                expected: z.dim(),
                got: mean.len(),
            });
        }
        for (acc, m) in mean_part.iter_mut().zip(mean) {
            *acc -= delta * m;
        }
    }
    let b = clamped(desired, z)?;
    finish(mean_part, desired.combine_columns(&b))
}

/// Class statistics keyed by class, as loaded from bundles.
#[derive(Debug, Clone, Default)]
pub struct StatsRegistry {
    by_class: BTreeMap<AttributeClass, ClassStats>,
}

impl StatsRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_stats(stats: impl IntoIterator<Item = ClassStats>) -> Result<Self> {
        let mut reg = StatsRegistry::new();
        for s in stats {
            reg.insert(s)?;
        }
        Ok(reg)
    }

    /// Adds a class; all entries must share one dimension and classes may not repeat.
    pub fn insert(&mut self, stats: ClassStats) -> Result<()> {
        if let Some(d) = self.dimension() {
            if d != stats.dimension() {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: stats.dimension(),
                });
            }
        }
        if self.by_class.contains_key(&stats.class()) {
            return Err(Error::invalid(format!(
                "stats for {} supplied twice",
                stats.class()
            )));
        }
        self.by_class.insert(stats.class(), stats);
        Ok(())
    }

    pub fn get(&self, class: AttributeClass) -> Result<&ClassStats> {
        self.by_class
            .get(&class)
            .ok_or_else(|| Error::invalid(format!("no class statistics loaded for {class}")))
    }

    pub fn dimension(&self) -> Option<usize> {
        self.by_class.values().next().map(ClassStats::dimension)
    }

    pub fn classes(&self) -> impl Iterator<Item = AttributeClass> + '_ {
        self.by_class.keys().copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EditMode {
    Edit,
    Feature,
    Psi,
    MultiEdit,
    MultiFeature,
    DisentangledEdit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightedClass {
    pub class: AttributeClass,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UndesiredClass {
    pub class: AttributeClass,
    pub delta: f64,
}

/// Declarative description of one transform, as read from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EditSpec {
    pub mode: EditMode,
    pub base: AttributeClass,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub terms: Vec<WeightedClass>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub undesired: Vec<UndesiredClass>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TransformOutput {
    Single(LatentVector),
    /// `psi` mode: feature-based output and identity-preserving edit.
    Pair {
        feature: LatentVector,
        identity: LatentVector,
    },
}

impl EditSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: EditSpec = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    fn alpha(&self) -> Result<f64> {
        self.alpha
            .ok_or_else(|| Error::invalid(format!("{:?} mode requires alpha", self.mode)))
    }

    fn beta(&self) -> Result<f64> {
        self.beta
            .ok_or_else(|| Error::invalid(format!("{:?} mode requires beta", self.mode)))
    }

    /// Checks the parameters the mode uses; parameters it ignores must be absent.
    pub fn validate(&self) -> Result<()> {
        use EditMode::*;
        let uses_alpha = matches!(self.mode, Edit | Psi | DisentangledEdit);
        let uses_beta = matches!(self.mode, Feature | Psi | MultiFeature);
        let uses_terms = matches!(self.mode, MultiEdit | MultiFeature);
        if uses_alpha {
            validate_alpha(self.alpha()?)?;
        } else if self.alpha.is_some() {
            return Err(Error::invalid(format!("{:?} mode does not take alpha", self.mode)));
        }
        if uses_beta {
            validate_beta(self.beta()?)?;
        } else if self.beta.is_some() {
            return Err(Error::invalid(format!("{:?} mode does not take beta", self.mode)));
        }
        if uses_terms && self.terms.is_empty() {
            return Err(Error::invalid(format!("{:?} mode requires terms", self.mode)));
        }
        if !uses_terms && !self.terms.is_empty() {
            return Err(Error::invalid(format!("{:?} mode does not take terms", self.mode)));
        }
        if self.mode != DisentangledEdit && !self.undesired.is_empty() {
            return Err(Error::invalid(format!("{:?} mode does not take undesired", self.mode)));
        }
        for u in &self.undesired {
            validate_delta(u.delta)?;
        }
        Ok(())
    }

    /// Every class whose statistics the spec needs.
    pub fn classes(&self) -> Vec<AttributeClass> {
        let mut out = vec![self.base];
        out.extend(self.terms.iter().map(|t| t.class));
        out.extend(self.undesired.iter().map(|u| u.class));
        out.sort();
        out.dedup();
        out
    }

    pub fn apply(&self, z: &LatentVector, registry: &StatsRegistry) -> Result<TransformOutput> {
        self.validate()?;
        let base = registry.get(self.base)?;
        let term_stats = || -> Result<Vec<(&ClassStats, f64)>> {
            self.terms
                .iter()
                .map(|t| Ok((registry.get(t.class)?, t.weight)))
                .collect()
        };
        let out = match self.mode {
            EditMode::Edit => edit(z, base, self.alpha()?)?,
            EditMode::Feature => feature_synth(z, base, self.beta()?)?,
            EditMode::Psi => {
                let (feature, identity) = psi(z, base, self.alpha()?, self.beta()?)?;
                return Ok(TransformOutput::Pair { feature, identity });
            }
            EditMode::MultiEdit => multi_edit(z, base, &term_stats()?)?,
            EditMode::MultiFeature => multi_feature(z, base, self.beta()?, &term_stats()?)?,
            EditMode::DisentangledEdit => {
                let undesired = self
                    .undesired
                    .iter()
                    .map(|u| Ok((registry.get(u.class)?.mean(), u.delta)))
                    .collect::<Result<Vec<_>>>()?;
                disentangled_edit(z, base, self.alpha()?, &undesired)?
            }
        };
        Ok(TransformOutput::Single(out))
    }

    /// Applies the spec to every record, keeping ids. The second store is
    /// only produced in `psi` mode and holds the identity-preserving edits.
    pub fn apply_to_store(
        &self,
        store: &LatentStore,
        registry: &StatsRegistry,
    ) -> Result<(LatentStore, Option<LatentStore>)> {
        let outputs = store
            .records()
            .par_iter()
            .map(|r| self.apply(&r.vector, registry).map(|o| (r.id, o)))
            .collect::<Result<Vec<_>>>()?;
        let manifest = Manifest {
            source: format!("transform:{}", serde_json::to_string(self)?),
            ..store.manifest.clone()
        };
        let mut primary = Vec::with_capacity(outputs.len());
        let mut secondary = Vec::new();
        for (id, out) in outputs {
            match out {
                TransformOutput::Single(v) => primary.push(Record { id, vector: v }),
                TransformOutput::Pair { feature, identity } => {
                    primary.push(Record { id, vector: feature });
                    secondary.push(Record { id, vector: identity });
                }
            }
        }
        let first = LatentStore::from_records(store.dimension(), primary, manifest.clone())?;
        let second = if self.mode == EditMode::Psi {
            Some(LatentStore::from_records(store.dimension(), secondary, manifest)?)
        } else {
            None
        };
        Ok((first, second))
    }
}
