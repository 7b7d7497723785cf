//! Positive/negative training sets per objective and model kind.

use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use super::{CorpusEntry, CorpusError};
use crate::seeding::rng_from;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Vanilla,
    Rumi,
    #[serde(rename = "cgan")]
    CGan,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Vanilla, ModelKind::Rumi, ModelKind::CGan];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Vanilla => "vanilla",
            ModelKind::Rumi => "rumi",
            ModelKind::CGan => "cgan",
        }
    }

    pub fn is_conditional(self) -> bool {
        self == ModelKind::CGan
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "vanilla" => Ok(ModelKind::Vanilla),
            "rumi" => Ok(ModelKind::Rumi),
            "cgan" | "conditional" => Ok(ModelKind::CGan),
            other => Err(format!(
                "unknown model kind {other:?} (expected vanilla, rumi or cgan)"
            )),
        }
    }
}

/// What a model is trained to produce.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    /// Any playable level.
    Playability,
    /// Playable levels with exactly `k` features.
    Class(usize),
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Objective::Playability => f.write_str("playability"),
            Objective::Class(k) => write!(f, "class:{k}"),
        }
    }
}

impl FromStr for Objective {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim().to_ascii_lowercase();
        if s == "playability" {
            return Ok(Objective::Playability);
        }
        s.strip_prefix("class:")
            .and_then(|k| k.parse().ok())
            .filter(|&k: &usize| k > 0)
            .map(Objective::Class)
            .ok_or_else(|| format!("unknown objective {s:?} (expected playability or class:<k>)"))
    }
}

/// Conditioning label: the feature class and whether the sample is a
/// negative example.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LabelPair {
    pub class_value: usize,
    pub neg_flag: u8,
}

impl LabelPair {
    pub fn new(class_value: usize, negative: bool) -> Self {
        LabelPair {
            class_value,
            neg_flag: u8::from(negative),
        }
    }

    /// Number of label features for a class list: class one-hot plus flag.
    pub fn width(classes: &[usize]) -> usize {
        classes.len() + 1
    }

    /// Class one-hot followed by the negative flag.
    pub fn encode(&self, classes: &[usize]) -> Vec<f64> {
        let mut v: Vec<f64> = classes
            .iter()
            .map(|&k| if k == self.class_value { 1.0 } else { 0.0 })
            .collect();
        v.push(f64::from(self.neg_flag));
        v
    }
}

impl fmt::Display for LabelPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.class_value, self.neg_flag)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionLabels {
    pub positives: Vec<LabelPair>,
    pub negatives: Vec<LabelPair>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub objective: Objective,
    pub kind: ModelKind,
    pub classes: Vec<usize>,
    pub positives: Vec<CorpusEntry>,
    pub negatives: Vec<CorpusEntry>,
    pub labels: Option<PartitionLabels>,
}

impl Partition {
    pub fn len(&self) -> usize {
        self.positives.len() + self.negatives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn label_for(entry: &CorpusEntry, objective: Objective) -> LabelPair {
    let positive = match objective {
        Objective::Playability => entry.playable,
        Objective::Class(k) => entry.playable && entry.class_label == k,
    };
    LabelPair::new(entry.class_label, !positive)
}

/// Builds the training data for one (objective, kind) pair.
///
/// Vanilla gets positives only. Rumi and CGAN also get negatives: unplayable
/// levels, plus playable levels of other classes under a class objective.
/// When negatives are present the larger side is subsampled uniformly
/// without replacement so both sides have equal size.
pub fn partition_samples(
    corpus: &[CorpusEntry],
    objective: Objective,
    kind: ModelKind,
    seed: u64,
) -> Result<Partition, CorpusError> {
    if corpus.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    let mut classes: Vec<usize> = corpus.iter().map(|e| e.class_label).collect();
    classes.sort_unstable();
    classes.dedup();

    let is_positive = |e: &CorpusEntry| match objective {
        Objective::Playability => e.playable,
        Objective::Class(k) => e.playable && e.class_label == k,
    };
    match objective {
        Objective::Class(k) if !corpus.iter().any(|e| e.playable && e.class_label == k) => {
            return Err(CorpusError::MissingClass(k));
        }
        Objective::Playability => {
            if let Some(&k) = classes
                .iter()
                .find(|&&k| !corpus.iter().any(|e| e.playable && e.class_label == k))
            {
                return Err(CorpusError::MissingClass(k));
            }
        }
        _ => {}
    }

    let mut positives: Vec<CorpusEntry> =
        corpus.iter().filter(|e| is_positive(e)).cloned().collect();
    let mut negatives: Vec<CorpusEntry> = match kind {
        ModelKind::Vanilla => Vec::new(),
        ModelKind::Rumi | ModelKind::CGan => {
            corpus.iter().filter(|e| !is_positive(e)).cloned().collect()
        }
    };

    if !negatives.is_empty() {
        let mut rng = rng_from(seed);
        let n = positives.len().min(negatives.len());
        let shrink = |side: &mut Vec<CorpusEntry>, rng: &mut _| {
            if side.len() > n {
                let mut keep = sample(rng, side.len(), n).into_vec();
                keep.sort_unstable();
                *side = keep.into_iter().map(|i| side[i].clone()).collect();
            }
        };
        shrink(&mut positives, &mut rng);
        shrink(&mut negatives, &mut rng);
    }

    let labels = (kind == ModelKind::CGan).then(|| PartitionLabels {
        positives: positives.iter().map(|e| label_for(e, objective)).collect(),
        negatives: negatives.iter().map(|e| label_for(e, objective)).collect(),
    });

    Ok(Partition {
        objective,
        kind,
        classes,
        positives,
        negatives,
        labels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levelgrid::Grid;

    fn entry(id: u8, playable: bool, k: usize) -> CorpusEntry {
        CorpusEntry {
            grid: Grid::from_cells(1, 2, vec![id, k as u8]),
            playable,
            feature_count: k,
            class_label: k,
        }
    }

    fn toy_corpus(per: usize) -> Vec<CorpusEntry> {
        let mut out = Vec::new();
        let mut id = 0u8;
        for playable in [true, false] {
            for k in 1..=3 {
                for _ in 0..per {
                    out.push(entry(id, playable, k));
                    id += 1;
                }
            }
        }
        out
    }

    #[test]
    fn playability_rumi_is_balanced() {
        let corpus = toy_corpus(5);
        let p = partition_samples(&corpus, Objective::Playability, ModelKind::Rumi, 1).unwrap();
        assert_eq!(p.positives.len(), 15);
        assert_eq!(p.negatives.len(), 15);
        assert!(p.positives.iter().all(|e| e.playable));
        assert!(p.negatives.iter().all(|e| !e.playable));
        assert!(p.labels.is_none());
    }

    #[test]
    fn playability_vanilla_has_no_negatives() {
        let corpus = toy_corpus(4);
        let p = partition_samples(&corpus, Objective::Playability, ModelKind::Vanilla, 1).unwrap();
        assert_eq!(p.positives.len(), 12);
        assert!(p.negatives.is_empty());
    }

    #[test]
    fn class_vanilla_only_target_class() {
        let corpus = toy_corpus(4);
        let p = partition_samples(&corpus, Objective::Class(1), ModelKind::Vanilla, 1).unwrap();
        assert_eq!(p.positives.len(), 4);
        assert!(p
            .positives
            .iter()
            .all(|e| e.playable && e.feature_count == 1));
    }

    #[test]
    fn class_rumi_negatives_cover_other_subspaces() {
        let corpus = toy_corpus(10);
        let p = partition_samples(&corpus, Objective::Class(2), ModelKind::Rumi, 3).unwrap();
        assert_eq!(p.positives.len(), 10);
        assert_eq!(p.negatives.len(), 10);
        assert!(p
            .negatives
            .iter()
            .all(|e| !e.playable || e.class_label != 2));
    }

    #[test]
    fn cgan_labels_follow_objective() {
        let corpus = toy_corpus(6);
        let p = partition_samples(&corpus, Objective::Playability, ModelKind::CGan, 2).unwrap();
        let l = p.labels.as_ref().unwrap();
        for (e, lab) in p.positives.iter().zip(&l.positives) {
            assert_eq!(*lab, LabelPair::new(e.class_label, false));
        }
        for (e, lab) in p.negatives.iter().zip(&l.negatives) {
            assert_eq!(*lab, LabelPair::new(e.class_label, true));
        }

        let p = partition_samples(&corpus, Objective::Class(2), ModelKind::CGan, 2).unwrap();
        let l = p.labels.as_ref().unwrap();
        assert!(l.positives.iter().all(|&x| x == LabelPair::new(2, false)));
        for (e, lab) in p.negatives.iter().zip(&l.negatives) {
            assert_eq!(lab.neg_flag, 1);
            assert_eq!(lab.class_value, e.class_label);
        }
        // unplayable class-2 entries present among negatives carry (2,1)
        assert!(p
            .negatives
            .iter()
            .zip(&l.negatives)
            .any(|(e, lab)| !e.playable && e.class_label == 2 && *lab == LabelPair::new(2, true)));
    }

    #[test]
    fn sets_disjoint_and_drawn_from_corpus() {
        let corpus = toy_corpus(7);
        for objective in [Objective::Playability, Objective::Class(3)] {
            for kind in ModelKind::ALL {
                let p = partition_samples(&corpus, objective, kind, 9).unwrap();
                for e in p.positives.iter().chain(&p.negatives) {
                    assert!(corpus.contains(e));
                }
                for e in &p.positives {
                    assert!(!p.negatives.contains(e));
                }
                if !p.negatives.is_empty() {
                    assert_eq!(p.positives.len(), p.negatives.len());
                }
            }
        }
    }

    #[test]
    fn missing_class() {
        let corpus = toy_corpus(2);
        assert_eq!(
            partition_samples(&corpus, Objective::Class(5), ModelKind::Rumi, 0),
            Err(CorpusError::MissingClass(5))
        );
    }

    #[test]
    fn parse_objective_and_kind() {
        assert_eq!(
            "playability".parse::<Objective>(),
            Ok(Objective::Playability)
        );
        assert_eq!("class:2".parse::<Objective>(), Ok(Objective::Class(2)));
        assert!("class:0".parse::<Objective>().is_err());
        assert_eq!("CGAN".parse::<ModelKind>(), Ok(ModelKind::CGan));
        assert_eq!(
            LabelPair::new(2, false).encode(&[1, 2, 3]),
            vec![0.0, 1.0, 0.0, 0.0]
        );
    }
}
