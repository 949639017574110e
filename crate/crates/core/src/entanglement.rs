//! Co-occurrence of hard labels, entanglement degree, and mean probes.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::latent_io::LatentVector;
use crate::scoring::{AttributeClass, AttributeProbabilities, Group, LabelTable, Scorer, NUM_CLASSES};
use crate::stats::ClassStats;

pub type ClassMatrix = [[f64; NUM_CLASSES]; NUM_CLASSES];

/// Cells below this joint fraction count as empty for the sparsity score.
pub const SPARSITY_THRESHOLD: f64 = 0.01;
pub const DEFAULT_PROBE_THRESHOLD: f64 = 0.5;

/// `M[a][b]` is the fraction of samples labeled with both `a` and `b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoOccurrenceMatrix {
    pub n: usize,
    pub matrix: ClassMatrix,
}

impl CoOccurrenceMatrix {
    pub fn get(&self, a: AttributeClass, b: AttributeClass) -> f64 {
        self.matrix[a.index()][b.index()]
    }

    pub fn prevalence(&self, class: AttributeClass) -> f64 {
        self.get(class, class)
    }
}

/// `D = M_after − M_before`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntanglementDegree {
    pub matrix: ClassMatrix,
}

impl EntanglementDegree {
    pub fn get(&self, a: AttributeClass, b: AttributeClass) -> f64 {
        self.matrix[a.index()][b.index()]
    }
}

fn empty(table: &LabelTable) -> Result<()> {
    if table.is_empty() {
        return Err(Error::invalid("label table is empty"));
    }
    Ok(())
}

pub fn co_occurrence(table: &LabelTable) -> Result<CoOccurrenceMatrix> {
    empty(table)?;
    let mut counts = [[0u64; NUM_CLASSES]; NUM_CLASSES];
    for labels in table.labels() {
        for a in labels.classes() {
            for b in labels.classes() {
                counts[a.index()][b.index()] += 1;
            }
        }
    }
    let n = table.len();
    let matrix = counts.map(|row| row.map(|c| c as f64 / n as f64));
    Ok(CoOccurrenceMatrix { n, matrix })
}

pub fn entanglement_degree(before: &CoOccurrenceMatrix, after: &CoOccurrenceMatrix) -> EntanglementDegree {
    let mut matrix = [[0.0; NUM_CLASSES]; NUM_CLASSES];
    for (i, row) in matrix.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            *cell = after.matrix[i][j] - before.matrix[i][j];
        }
    }
    EntanglementDegree { matrix }
}

/// Per-class fractions for one group, in taxonomy order.
pub fn group_histogram(table: &LabelTable, group: Group) -> Result<Vec<f64>> {
    empty(table)?;
    let mut counts = vec![0u64; group.len()];
    for labels in table.labels() {
        counts[labels.get(group).position()] += 1;
    }
    Ok(counts
        .into_iter()
        .map(|c| c as f64 / table.len() as f64)
        .collect())
}

/// Fraction of the ordered cross-group cells whose joint fraction is below [`SPARSITY_THRESHOLD`].
pub fn sparsity(m: &CoOccurrenceMatrix) -> f64 {
    let mut cells = 0usize;
    let mut sparse = 0usize;
    for a in AttributeClass::ALL {
        for b in AttributeClass::ALL {
            if a.group() != b.group() {
                cells += 1;
                if m.get(a, b) < SPARSITY_THRESHOLD {
                    sparse += 1;
                }
            }
        }
    }
    sparse as f64 / cells as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceReport {
    pub n: usize,
    pub classes: Vec<AttributeClass>,
    pub matrix: ClassMatrix,
    pub histograms: BTreeMap<Group, Vec<f64>>,
    pub sparsity: f64,
}

pub fn balance_report(table: &LabelTable) -> Result<BalanceReport> {
    let m = co_occurrence(table)?;
    let histograms = Group::ALL
        .into_iter()
        .map(|g| Ok((g, group_histogram(table, g)?)))
        .collect::<Result<_>>()?;
    Ok(BalanceReport {
        n: m.n,
        classes: AttributeClass::ALL.to_vec(),
        sparsity: sparsity(&m),
        matrix: m.matrix,
        histograms,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanProbe {
    pub class: AttributeClass,
    pub probs: AttributeProbabilities,
    pub threshold: f64,
    /// Classes outside the probed class's group that the mean over-expresses.
    pub suspects: Vec<AttributeClass>,
}

/// Scores a class mean and flags off-group classes above `threshold`.
pub fn mean_probe(stats: &ClassStats, scorer: &dyn Scorer, threshold: f64) -> Result<MeanProbe> {
    if scorer.dimension() != stats.dimension() {
        return Err(Error::DimensionMismatch {
            expected: stats.dimension(),
            got: scorer.dimension(),
        });
    }
    let mean = LatentVector::new(stats.mean().to_vec())?;
    let probs = scorer.score_one(&mean)?;
    let own = stats.class().group();
    let suspects = AttributeClass::ALL
        .into_iter()
        .filter(|c| c.group() != own && probs.get(*c) > threshold)
        .collect();
    Ok(MeanProbe {
        class: stats.class(),
        probs,
        threshold,
        suspects,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scoring::{HardLabelSet, LabelRow, SyntheticWorld};
    use nalgebra::DMatrix;
    use AttributeClass::*;

    fn one_hot(l: [AttributeClass; 4]) -> AttributeProbabilities {
        let mut p = [0.0; NUM_CLASSES];
        for c in l {
            p[c.index()] = 1.0;
        }
        AttributeProbabilities::new(p).unwrap()
    }

    fn table(rows: &[[AttributeClass; 4]]) -> LabelTable {
        LabelTable::from_probabilities(rows.iter().enumerate().map(|(i, l)| (i as u64, one_hot(*l)))).unwrap()
    }

    #[test]
    fn two_sample_hand_count() {
        let t = table(&[[Woman, Young, Happy, White], [Man, Old, Angry, Black]]);
        let m = co_occurrence(&t).unwrap();
        assert_eq!(m.get(Woman, Happy), 0.5);
        assert_eq!(m.get(Woman, Man), 0.0);
        assert_eq!(m.prevalence(Woman), 0.5);
    }

    #[test]
    fn identical_labels_give_block() {
        let held = [Woman, Young, Happy, White];
        let t = table(&[held; 7]);
        let m = co_occurrence(&t).unwrap();
        for a in AttributeClass::ALL {
            for b in AttributeClass::ALL {
                let expected = if held.contains(&a) && held.contains(&b) { 1.0 } else { 0.0 };
                assert_eq!(m.get(a, b), expected);
            }
        }
        // 16 held cells minus the 4 diagonal ones are non-empty cross-group cells.
        assert_eq!(sparsity(&m), 62.0 / 74.0);
        assert!(co_occurrence(&LabelTable::default()).is_err());
    }

    #[test]
    fn degree_is_difference() {
        let a = co_occurrence(&table(&[[Woman, Young, Happy, White]])).unwrap();
        let b = co_occurrence(&table(&[[Man, Young, Angry, White]])).unwrap();
        assert_eq!(entanglement_degree(&a, &a).matrix, [[0.0; 10]; 10]);
        let d = entanglement_degree(&a, &b);
        assert_eq!(d.get(Angry, Man), 1.0);
        assert_eq!(d.get(Happy, Woman), -1.0);
        let rev = entanglement_degree(&b, &a);
        for i in 0..10 {
            for j in 0..10 {
                assert_eq!(rev.matrix[i][j], -d.matrix[i][j]);
            }
        }
    }

    #[test]
    fn histogram_hand_and_diagonal() {
        let t = table(&[
            [Woman, Young, Happy, White],
            [Woman, Young, Happy, White],
            [Man, Old, Happy, Black],
            [Man, Young, Angry, Others],
        ]);
        assert_eq!(group_histogram(&t, Group::Emotion).unwrap(), vec![0.75, 0.0, 0.25]);
        let report = balance_report(&t).unwrap();
        for g in Group::ALL {
            let diag: Vec<f64> = g.classes().iter().map(|c| report.matrix[c.index()][c.index()]).collect();
            assert_eq!(report.histograms[&g], diag);
        }
        let json = serde_json::to_value(&report).unwrap();
        assert_eq!(json["classes"][6], "angry");
        assert_eq!(json["histograms"]["emotion"][0], 0.75);
    }

    #[test]
    fn balanced_table_has_no_sparsity() {
        let mut rows = Vec::new();
        for g in [Woman, Man] {
            for a in [Young, Old] {
                for e in [Happy, Neutral, Angry] {
                    for r in [Black, White, Others] {
                        rows.push([g, a, e, r]);
                    }
                }
            }
        }
        let report = balance_report(&table(&rows)).unwrap();
        assert_eq!(report.sparsity, 0.0);
    }

    #[test]
    fn probe_flags_shared_direction() {
        let d = 10;
        let mut dirs = vec![vec![0.0; d]; NUM_CLASSES];
        for (i, dir) in dirs.iter_mut().enumerate() {
            dir[i] = 1.0;
        }
        dirs[Angry.index()] = dirs[Man.index()].clone();
        let world = SyntheticWorld::from_directions(dirs, 1.0).unwrap();
        let mut mean = vec![0.0; d];
        mean[Man.index()] = 3.0;
        let stats = ClassStats::new(Angry, 2, mean, vec![], DMatrix::zeros(d, 0)).unwrap();
        let probe = mean_probe(&stats, &world, DEFAULT_PROBE_THRESHOLD).unwrap();
        assert_eq!(probe.suspects, vec![Man]);
        assert!(mean_probe(&stats, &world, 1.01).unwrap().suspects.is_empty());
    }

    #[test]
    fn probe_orthogonal_world_balanced_data() {
        use crate::latent_io::{LatentStore, Manifest};
        use crate::scoring::{label_store, select_class};
        use crate::stats::compute_class_stats;
        use rand::SeedableRng;
        use rand_distr::{Distribution, StandardNormal};

        let d = 10;
        let dirs: Vec<Vec<f64>> = (0..NUM_CLASSES)
            .map(|i| (0..d).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        let world = SyntheticWorld::from_directions(dirs, 1.0).unwrap();
        // Every sample is paired with its mirror image on the non-emotion axes,
        // so the only mean shift inside the angry subset is along emotion axes.
        let emotion: Vec<usize> = Group::Emotion.classes().iter().map(|c| c.index()).collect();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut vectors = Vec::new();
        for _ in 0..2000 {
            let z: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
            let mirror: Vec<f64> = z
                .iter()
                .enumerate()
                .map(|(j, v)| if emotion.contains(&j) { *v } else { -v })
                .collect();
            vectors.push(LatentVector::new(z).unwrap());
            vectors.push(LatentVector::new(mirror).unwrap());
        }
        let store = LatentStore::from_vectors(d, vectors, Manifest::default()).unwrap();
        let table = label_store(&store, &world).unwrap().table;
        for class in [Happy, Neutral, Angry] {
            let ids = select_class(&table, class);
            let stats = compute_class_stats(&store, &ids, class).unwrap();
            let probe = mean_probe(&stats, &world, DEFAULT_PROBE_THRESHOLD).unwrap();
            assert!(probe.suspects.is_empty(), "{class}: {:?}", probe.suspects);
        }
    }

    #[test]
    fn orthogonal_world_histograms_near_uniform() {
        use crate::latent_io::{LatentStore, Manifest};
        use crate::scoring::label_store;
        use rand::SeedableRng;
        use rand_distr::{Distribution, StandardNormal};

        let d = 10;
        let dirs: Vec<Vec<f64>> = (0..NUM_CLASSES)
            .map(|i| (0..d).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        let world = SyntheticWorld::from_directions(dirs, 1e6).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let vectors = (0..10_000).map(|_| {
            LatentVector::new((0..d).map(|_| StandardNormal.sample(&mut rng)).collect()).unwrap()
        });
        let store = LatentStore::from_vectors(d, vectors, Manifest::default()).unwrap();
        let table = label_store(&store, &world).unwrap().table;
        for g in Group::ALL {
            let h = group_histogram(&table, g).unwrap();
            assert!((h.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            for f in h {
                assert!((f - 1.0 / g.len() as f64).abs() <= 0.05, "{g}: {f}");
            }
        }
    }

    #[test]
    fn rows_with_labels_only() {
        let row = LabelRow {
            id: 0,
            probs: one_hot([Woman, Old, Neutral, Others]),
            labels: HardLabelSet::new(Woman, Old, Neutral, Others).unwrap(),
        };
        let t = LabelTable::from_rows(vec![row]).unwrap();
        let m = co_occurrence(&t).unwrap();
        assert!(m.matrix.iter().flatten().all(|v| *v == 0.0 || *v == 1.0));
    }
}
