use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::latent_io::LatentVector;

use super::{AttributeClass, AttributeProbabilities, Group, Scorer, NUM_CLASSES};

const NORM_TOLERANCE: f64 = 1e-9;

/// A linear-softmax stand-in for pretrained attribute classifiers.
///
/// Each class `c` owns a unit direction `w_c`; the probabilities of a group
/// are the softmax of `w_c · z / τ` over that group's classes. Class means of
/// labeled samples therefore line up with the class directions, which makes
/// the editing transforms' effects predictable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "WorldFile", into = "WorldFile")]
pub struct SyntheticWorld {
    dimension: usize,
    temperature: f64,
    seed: Option<u64>,
    directions: Vec<Vec<f64>>,
}

pub fn make_synthetic_world(seed: u64, dimension: usize, temperature: f64) -> Result<SyntheticWorld> {
    if dimension < 2 {
        return Err(Error::invalid(format!(
            "synthetic world needs dimension >= 2, got {dimension}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let directions = (0..NUM_CLASSES)
        .map(|_| {
            let raw: Vec<f64> = (0..dimension).map(|_| rng.sample(StandardNormal)).collect();
            normalize(raw)
        })
        .collect();
    let mut world = SyntheticWorld::from_directions(directions, temperature)?;
    world.seed = Some(seed);
    Ok(world)
}

fn normalize(mut v: Vec<f64>) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    for x in &mut v {
        *x /= norm;
    }
    v
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl SyntheticWorld {
    /// Hand-built world; every direction must already have unit norm.
    pub fn from_directions(directions: Vec<Vec<f64>>, temperature: f64) -> Result<Self> {
        if !(temperature > 0.0 && temperature.is_finite()) {
            return Err(Error::invalid(format!(
                "temperature must be > 0, got {temperature}"
            )));
        }
        if directions.len() != NUM_CLASSES {
            return Err(Error::LengthMismatch {
                expected: NUM_CLASSES,
                got: directions.len(),
            });
        }
        let dimension = directions[0].len();
        if dimension < 2 {
            return Err(Error::invalid(format!(
                "synthetic world needs dimension >= 2, got {dimension}"
            )));
        }
        for (c, w) in AttributeClass::ALL.iter().zip(&directions) {
            if w.len() != dimension {
                return Err(Error::DimensionMismatch {
                    expected: dimension,
                    got: w.len(),
                });
            }
            let norm = dot(w, w).sqrt();
            if norm.is_nan() || (norm - 1.0).abs() > NORM_TOLERANCE {
                return Err(Error::invalid(format!(
                    "direction for {c} has norm {norm}, expected 1"
                )));
            }
        }
        Ok(SyntheticWorld {
            dimension,
            temperature,
            seed: None,
            directions,
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn direction(&self, class: AttributeClass) -> &[f64] {
        &self.directions[class.index()]
    }

    pub fn with_temperature(&self, temperature: f64) -> Result<Self> {
        let mut w = SyntheticWorld::from_directions(self.directions.clone(), temperature)?;
        w.seed = self.seed;
        Ok(w)
    }

    /// Replaces `target`'s direction by `share · w_source + √(1 − share²) · u`,
    /// where `u` is the unit part of the old direction orthogonal to `w_source`.
    /// The result is a world in which the two classes are entangled.
    pub fn with_shared_component(
        &self,
        target: AttributeClass,
        source: AttributeClass,
        share: f64,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&share) || target == source {
            return Err(Error::invalid(format!(
                "shared component {share} between {target} and {source} is not valid"
            )));
        }
        let s = self.direction(source).to_vec();
        let t = self.direction(target);
        let along = dot(t, &s);
        let ortho = normalize(t.iter().zip(&s).map(|(ti, si)| ti - along * si).collect());
        let rest = (1.0 - share * share).sqrt();
        let mixed = normalize(s.iter().zip(&ortho).map(|(si, oi)| share * si + rest * oi).collect());
        let mut directions = self.directions.clone();
        directions[target.index()] = mixed;
        let mut w = SyntheticWorld::from_directions(directions, self.temperature)?;
        w.seed = self.seed;
        Ok(w)
    }

    /// Softmax over each group of `w_c · z / τ`.
    pub fn score(&self, z: &[f64]) -> Result<AttributeProbabilities> {
        if z.len() != self.dimension {
            return Err(Error::DimensionMismatch {
                expected: self.dimension,
                got: z.len(),
            });
        }
        let mut logits = [0.0; NUM_CLASSES];
        for (l, w) in logits.iter_mut().zip(&self.directions) {
            *l = dot(w, z) / self.temperature;
        }
        let mut out = [0.0; NUM_CLASSES];
        for g in Group::ALL {
            let range = g.offset()..g.offset() + g.len();
            let max = logits[range.clone()]
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for i in range.clone() {
                out[i] = (logits[i] - max).exp();
                total += out[i];
            }
            for p in &mut out[range] {
                *p /= total;
            }
        }
        Ok(AttributeProbabilities::from_array_unchecked(out))
    }
}

pub fn score_synthetic(world: &SyntheticWorld, z: &LatentVector) -> Result<AttributeProbabilities> {
    world.score(z.as_slice())
}

impl Scorer for SyntheticWorld {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn score_many(&self, vectors: &[&LatentVector]) -> Vec<Result<AttributeProbabilities>> {
        vectors.par_iter().map(|z| self.score(z.as_slice())).collect()
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WorldFile {
    temperature: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    directions: Vec<Vec<f64>>,
}

impl TryFrom<WorldFile> for SyntheticWorld {
    type Error = Error;

    fn try_from(f: WorldFile) -> Result<Self> {
        let mut w = SyntheticWorld::from_directions(f.directions, f.temperature)?;
        w.seed = f.seed;
        Ok(w)
    }
}

impl From<SyntheticWorld> for WorldFile {
    fn from(w: SyntheticWorld) -> Self {
        WorldFile {
            temperature: w.temperature,
            seed: w.seed,
            directions: w.directions,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scoring::Group;
    use AttributeClass::*;

    /// d=2 world with woman=(1,0), man=(−1,0); the other groups are irrelevant here.
    fn hand_world(tau: f64) -> SyntheticWorld {
        let mut dirs = vec![vec![0.0, 1.0]; NUM_CLASSES];
        dirs[Woman.index()] = vec![1.0, 0.0];
        dirs[Man.index()] = vec![-1.0, 0.0];
        SyntheticWorld::from_directions(dirs, tau).unwrap()
    }

    #[test]
    fn deterministic_and_normalized() {
        let a = make_synthetic_world(7, 32, 1.0).unwrap();
        let b = make_synthetic_world(7, 32, 1.0).unwrap();
        assert_eq!(a, b);
        for c in AttributeClass::ALL {
            let n = dot(a.direction(c), a.direction(c)).sqrt();
            assert!((n - 1.0).abs() <= 1e-9);
        }
        let c = make_synthetic_world(8, 32, 1.0).unwrap();
        assert!(AttributeClass::ALL
            .iter()
            .any(|&k| a.direction(k) != c.direction(k)));
        assert!(make_synthetic_world(7, 1, 1.0).is_err());
        assert!(make_synthetic_world(7, 4, 0.0).is_err());
    }

    #[test]
    fn hand_softmax() {
        let p = hand_world(1.0).score(&[2.0, 0.0]).unwrap();
        let e2 = 2f64.exp();
        let em2 = (-2f64).exp();
        let expected = e2 / (e2 + em2);
        assert!((p.get(Woman) - expected).abs() < 1e-15);
        assert!((p.get(Woman) - 0.9820).abs() < 1e-4);
        assert!((p.get(Man) - 0.0180).abs() < 1e-4);
    }

    #[test]
    fn zero_vector_is_uniform() {
        let w = make_synthetic_world(3, 16, 1.0).unwrap();
        let p = w.score(&[0.0; 16]).unwrap();
        for g in Group::ALL {
            for &q in p.group(g) {
                assert!((q - 1.0 / g.len() as f64).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn temperature_scaling_identity() {
        let w1 = make_synthetic_world(11, 8, 1.0).unwrap();
        let w2 = w1.with_temperature(2.0).unwrap();
        let z: Vec<f64> = (0..8).map(|i| (i as f64 * 0.37).sin()).collect();
        let z2: Vec<f64> = z.iter().map(|x| 2.0 * x).collect();
        assert_eq!(w1.score(&z).unwrap(), w2.score(&z2).unwrap());
    }

    #[test]
    fn dimension_mismatch() {
        assert!(matches!(
            hand_world(1.0).score(&[1.0, 2.0, 3.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn shared_component_sets_inner_product() {
        let w = make_synthetic_world(7, 32, 1.0).unwrap();
        let p = w.with_shared_component(Angry, Man, 0.6).unwrap();
        let ip = dot(p.direction(Angry), p.direction(Man));
        assert!((ip - 0.6).abs() < 1e-12);
        assert_eq!(p.direction(Woman), w.direction(Woman));
    }

    #[test]
    fn world_file_round_trip() {
        let w = make_synthetic_world(5, 4, 0.5).unwrap();
        let text = serde_json::to_string(&w).unwrap();
        let back: SyntheticWorld = serde_json::from_str(&text).unwrap();
        assert_eq!(back, w);
        let bad = r#"{"temperature":1.0,"directions":[[2.0,0.0]]}"#;
        assert!(serde_json::from_str::<SyntheticWorld>(bad).is_err());
    }
}
