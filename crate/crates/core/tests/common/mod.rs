#![allow(dead_code)]

use ganalyzer::latent_io::LatentVector;
use ganalyzer::planner::entry_draws;
use ganalyzer::scoring::{make_synthetic_world, AttributeClass, HardLabelSet, SyntheticWorld};
use ganalyzer::stats::{fit_samples, ClassStats};

pub const REF_SEED: u64 = 7;
pub const REF_DIM: usize = 32;
pub const REF_TAU: f64 = 1.0;
pub const REF_SAMPLES: u64 = 20_000;
pub const TRAIN_SEED: u64 = 1001;
pub const VALID_SEED: u64 = 2002;

pub fn reference_world() -> SyntheticWorld {
    make_synthetic_world(REF_SEED, REF_DIM, REF_TAU).unwrap()
}

/// `n` seeded N(0, I_d) vectors.
pub fn gaussian(seed: u64, n: u64, d: usize) -> Vec<LatentVector> {
    entry_draws(seed, 0, d, n)
}

pub fn hard_labels(world: &SyntheticWorld, zs: &[LatentVector]) -> Vec<HardLabelSet> {
    zs.iter()
        .map(|z| world.score(z.as_slice()).unwrap().hard_label())
        .collect()
}

pub fn members<'a>(zs: &'a [LatentVector], labels: &[HardLabelSet], class: AttributeClass) -> Vec<&'a LatentVector> {
    zs.iter()
        .zip(labels)
        .filter(|(_, l)| l.contains(class))
        .map(|(z, _)| z)
        .collect()
}

pub fn fit_class(zs: &[LatentVector], labels: &[HardLabelSet], class: AttributeClass) -> ClassStats {
    let samples: Vec<&[f64]> = members(zs, labels, class).into_iter().map(|z| z.as_slice()).collect();
    fit_samples(&samples, class).unwrap()
}

/// A labeled training and validation split drawn in `world`.
pub struct Split {
    pub train: Vec<LatentVector>,
    pub train_labels: Vec<HardLabelSet>,
    pub valid: Vec<LatentVector>,
    pub valid_labels: Vec<HardLabelSet>,
}

pub fn split(world: &SyntheticWorld) -> Split {
    let train = gaussian(TRAIN_SEED, REF_SAMPLES, world.dimension());
    let valid = gaussian(VALID_SEED, REF_SAMPLES, world.dimension());
    Split {
        train_labels: hard_labels(world, &train),
        valid_labels: hard_labels(world, &valid),
        train,
        valid,
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}
