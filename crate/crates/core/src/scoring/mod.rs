//! Attribute probability vectors, hard labels, and the scorers that produce them.

mod labels;
pub mod taxonomy;
mod world;

pub use labels::{label_store, select_class, LabelOutcome, LabelRow, LabelTable};
pub use taxonomy::{AttributeClass, Group, NUM_CLASSES};
pub use world::{make_synthetic_world, score_synthetic, SyntheticWorld};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::latent_io::LatentVector;

/// Per-group sums must be within this of 1 for externally supplied vectors.
pub const PROBABILITY_SUM_TOLERANCE: f64 = 1e-6;

/// The 10-entry probability vector: gender(2) ‖ age(2) ‖ emotion(3) ‖ race(3).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttributeProbabilities([f64; NUM_CLASSES]);

impl AttributeProbabilities {
    /// Validates ranges and per-group sums of a flat 10-vector.
    pub fn new(values: [f64; NUM_CLASSES]) -> Result<Self> {
        for g in Group::ALL {
            let slice = &values[g.offset()..g.offset() + g.len()];
            if slice.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(Error::invalid(format!(
                    "{g} probabilities {slice:?} outside [0, 1]"
                )));
            }
            let sum: f64 = slice.iter().sum();
            if (sum - 1.0).abs() > PROBABILITY_SUM_TOLERANCE {
                return Err(Error::invalid(format!(
                    "{g} probabilities sum to {sum}, not 1"
                )));
            }
        }
        Ok(AttributeProbabilities(values))
    }

    pub(crate) fn from_array_unchecked(values: [f64; NUM_CLASSES]) -> Self {
        AttributeProbabilities(values)
    }

    pub fn as_array(&self) -> &[f64; NUM_CLASSES] {
        &self.0
    }

    pub fn group(&self, g: Group) -> &[f64] {
        &self.0[g.offset()..g.offset() + g.len()]
    }

    pub fn get(&self, class: AttributeClass) -> f64 {
        self.0[class.index()]
    }

    /// Per-group argmax; ties go to the lowest index.
    pub fn hard_label(&self) -> HardLabelSet {
        let mut classes = [AttributeClass::Woman; 4];
        for g in Group::ALL {
            let probs = self.group(g);
            let mut best = 0;
            for (i, &p) in probs.iter().enumerate().skip(1) {
                if p > probs[best] {
                    best = i;
                }
            }
            classes[g.index()] = g.classes()[best];
        }
        HardLabelSet(classes)
    }
}

pub fn hard_label(probs: &AttributeProbabilities) -> HardLabelSet {
    probs.hard_label()
}

/// Wire form: `{"gender": [..2], "age": [..2], "emotion": [..3], "race": [..3]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupedProbabilities {
    pub gender: Vec<f64>,
    pub age: Vec<f64>,
    pub emotion: Vec<f64>,
    pub race: Vec<f64>,
}

impl From<&AttributeProbabilities> for GroupedProbabilities {
    fn from(p: &AttributeProbabilities) -> Self {
        GroupedProbabilities {
            gender: p.group(Group::Gender).to_vec(),
            age: p.group(Group::Age).to_vec(),
            emotion: p.group(Group::Emotion).to_vec(),
            race: p.group(Group::Race).to_vec(),
        }
    }
}

impl TryFrom<GroupedProbabilities> for AttributeProbabilities {
    type Error = Error;

    fn try_from(g: GroupedProbabilities) -> Result<Self> {
        let mut values = [0.0; NUM_CLASSES];
        for (group, slice) in [
            (Group::Gender, &g.gender),
            (Group::Age, &g.age),
            (Group::Emotion, &g.emotion),
            (Group::Race, &g.race),
        ] {
            if slice.len() != group.len() {
                return Err(Error::invalid(format!(
                    "{group} needs {} probabilities, got {}",
                    group.len(),
                    slice.len()
                )));
            }
            values[group.offset()..group.offset() + group.len()].copy_from_slice(slice);
        }
        AttributeProbabilities::new(values)
    }
}

impl Serialize for AttributeProbabilities {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        GroupedProbabilities::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for AttributeProbabilities {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        GroupedProbabilities::deserialize(d)?
            .try_into()
            .map_err(serde::de::Error::custom)
    }
}

/// One class per group, indexed by `Group::index`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct HardLabelSet([AttributeClass; 4]);

impl HardLabelSet {
    pub fn new(gender: AttributeClass, age: AttributeClass, emotion: AttributeClass, race: AttributeClass) -> Result<Self> {
        let classes = [gender, age, emotion, race];
        for (g, c) in Group::ALL.iter().zip(classes) {
            if c.group() != *g {
                return Err(Error::invalid(format!("class {c} is not in group {g}")));
            }
        }
        Ok(HardLabelSet(classes))
    }

    pub fn get(&self, g: Group) -> AttributeClass {
        self.0[g.index()]
    }

    pub fn classes(&self) -> &[AttributeClass; 4] {
        &self.0
    }

    pub fn contains(&self, class: AttributeClass) -> bool {
        self.get(class.group()) == class
    }
}

impl Serialize for HardLabelSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        let mut m = s.serialize_map(Some(4))?;
        for g in Group::ALL {
            m.serialize_entry(g.name(), self.get(g).name())?;
        }
        m.end()
    }
}

impl<'de> Deserialize<'de> for HardLabelSet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Raw {
            gender: AttributeClass,
            age: AttributeClass,
            emotion: AttributeClass,
            race: AttributeClass,
        }
        let r = Raw::deserialize(d)?;
        HardLabelSet::new(r.gender, r.age, r.emotion, r.race).map_err(serde::de::Error::custom)
    }
}

/// Anything that maps latent vectors to attribute probabilities.
pub trait Scorer: Sync {
    fn dimension(&self) -> usize;

    /// One result per input, in input order. Failures are per row.
    fn score_many(&self, vectors: &[&LatentVector]) -> Vec<Result<AttributeProbabilities>>;

    fn score_one(&self, z: &LatentVector) -> Result<AttributeProbabilities> {
        self.score_many(&[z])
            .pop()
            .unwrap_or_else(|| Err(Error::Remote("scorer returned no result".into())))
    }
}
