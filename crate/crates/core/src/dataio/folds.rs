use std::collections::{BTreeSet, HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DataError, DataResult, SegmentRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Vec<String>,
    pub validation: Vec<String>,
    pub test: Vec<String>,
}

impl Fold {
    pub fn ids(&self, split: Split) -> &[String] {
        match split {
            Split::Train => &self.train,
            Split::Validation => &self.validation,
            Split::Test => &self.test,
        }
    }
}

/// Speaker-disjoint cross-validation plan.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    /// Speaker ids of each group, after shuffling.
    pub speaker_groups: Vec<Vec<String>>,
    pub folds: Vec<Fold>,
}

/// Shuffles the distinct speakers with `seed`, deals them into `k` groups and
/// builds fold `i` with test = group `i`, validation = group `i+1 mod k`,
/// train = the rest. All segments of a speaker stay together.
pub fn make_folds(records: &[SegmentRecord], k: usize, seed: u64) -> DataResult<FoldPlan> {
    if k < 3 {
        return Err(DataError::InvalidPlan(format!(
            "k = {k}: need at least 3 groups for train/validation/test"
        )));
    }
    let mut speakers: Vec<String> = records
        .iter()
        .map(|r| r.speaker_id.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if speakers.len() < k {
        return Err(DataError::TooFewSpeakers {
            needed: k,
            found: speakers.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    speakers.shuffle(&mut rng);

    // Contiguous near-equal groups, larger groups first.
    let base = speakers.len() / k;
    let extra = speakers.len() % k;
    let mut groups = Vec::with_capacity(k);
    let mut start = 0;
    for g in 0..k {
        let size = base + usize::from(g < extra);
        groups.push(speakers[start..start + size].to_vec());
        start += size;
    }

    let group_of: HashMap<&str, usize> = groups
        .iter()
        .enumerate()
        .flat_map(|(g, spk)| spk.iter().map(move |s| (s.as_str(), g)))
        .collect();
    let folds = (0..k)
        .map(|i| {
            let val = (i + 1) % k;
            let mut fold = Fold {
                train: Vec::new(),
                validation: Vec::new(),
                test: Vec::new(),
            };
            for r in records {
                let g = group_of[r.speaker_id.as_str()];
                let dst = if g == i {
                    &mut fold.test
                } else if g == val {
                    &mut fold.validation
                } else {
                    &mut fold.train
                };
                dst.push(r.id.clone());
            }
            fold
        })
        .collect();
    Ok(FoldPlan {
        k,
        seed,
        speaker_groups: groups,
        folds,
    })
}

impl FoldPlan {
    /// Checks the plan against `records`: every fold's three splits are
    /// speaker-disjoint and cover all segments, and every segment is tested
    /// exactly once across folds.
    pub fn validate(&self, records: &[SegmentRecord]) -> DataResult<()> {
        let speaker: HashMap<&str, &str> = records
            .iter()
            .map(|r| (r.id.as_str(), r.speaker_id.as_str()))
            .collect();
        if self.folds.len() != self.k {
            return Err(DataError::InvalidPlan(format!(
                "{} folds for k = {}",
                self.folds.len(),
                self.k
            )));
        }
        let mut tested: HashSet<&str> = HashSet::new();
        for (i, fold) in self.folds.iter().enumerate() {
            let mut split_speakers: Vec<HashSet<&str>> = Vec::new();
            let mut covered = 0;
            for split in [Split::Train, Split::Validation, Split::Test] {
                let mut set = HashSet::new();
                for id in fold.ids(split) {
                    let spk = speaker.get(id.as_str()).ok_or_else(|| {
                        DataError::InvalidPlan(format!("fold {i}: unknown segment {id:?}"))
                    })?;
                    set.insert(*spk);
                }
                covered += fold.ids(split).len();
                split_speakers.push(set);
            }
            for a in 0..3 {
                for b in a + 1..3 {
                    if let Some(s) = split_speakers[a].intersection(&split_speakers[b]).next() {
                        return Err(DataError::InvalidPlan(format!(
                            "fold {i}: speaker {s:?} appears in two splits"
                        )));
                    }
                }
            }
            if covered != records.len() {
                return Err(DataError::InvalidPlan(format!(
                    "fold {i} covers {covered} of {} segments",
                    records.len()
                )));
            }
            for id in &fold.test {
                if !tested.insert(id.as_str()) {
                    return Err(DataError::InvalidPlan(format!("segment {id:?} tested twice")));
                }
            }
        }
        if tested.len() != records.len() {
            return Err(DataError::InvalidPlan(format!(
                "{} of {} segments are tested",
                tested.len(),
                records.len()
            )));
        }
        Ok(())
    }
}
