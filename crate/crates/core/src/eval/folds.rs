use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::data::RawSequence;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fold {
    pub train: Vec<String>,
    #[serde(default)]
    pub validation: Vec<String>,
    pub test: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FoldPlan {
    pub folds: Vec<Fold>,
}

/// Distinct subject ids in order of first appearance.
pub fn subjects_of(data: &[RawSequence]) -> Vec<String> {
    let mut seen = BTreeSet::new();
    data.iter()
        .filter(|s| seen.insert(s.subject_id.clone()))
        .map(|s| s.subject_id.clone())
        .collect()
}

impl FoldPlan {
    /// One fold per block: block `i` is tested, block `i + 1` (cyclically)
    /// validates, the rest train.
    fn from_blocks(blocks: Vec<Vec<String>>) -> Result<Self> {
        let n = blocks.len();
        if n < 3 {
            return Err(Error::InvalidInput(format!("{n} blocks leave no training subjects")));
        }
        let folds = (0..n)
            .map(|i| {
                let v = (i + 1) % n;
                Fold {
                    train: (0..n)
                        .filter(|&j| j != i && j != v)
                        .flat_map(|j| blocks[j].iter().cloned())
                        .collect(),
                    validation: blocks[v].clone(),
                    test: blocks[i].clone(),
                }
            })
            .collect();
        Ok(FoldPlan { folds })
    }

    /// Leave-`group`-subjects-out: consecutive blocks of `group` subjects in
    /// the given order; a short remainder forms the last block.
    pub fn leave_subjects_out(subjects: &[String], group: usize) -> Result<Self> {
        if group == 0 {
            return Err(Error::InvalidInput("group size must be at least 1".into()));
        }
        FoldPlan::from_blocks(subjects.chunks(group).map(|c| c.to_vec()).collect())
    }

    /// Leave-five-subjects-out.
    pub fn l5so(subjects: &[String]) -> Result<Self> {
        FoldPlan::leave_subjects_out(subjects, 5)
    }

    /// `k` contiguous blocks whose sizes differ by at most one, larger first.
    pub fn k_fold(subjects: &[String], k: usize) -> Result<Self> {
        if k == 0 || k > subjects.len() {
            return Err(Error::InvalidInput(format!("cannot split {} subjects into {k} folds", subjects.len())));
        }
        let (base, extra) = (subjects.len() / k, subjects.len() % k);
        let mut blocks = Vec::with_capacity(k);
        let mut at = 0;
        for i in 0..k {
            let size = base + usize::from(i < extra);
            blocks.push(subjects[at..at + size].to_vec());
            at += size;
        }
        FoldPlan::from_blocks(blocks)
    }

    /// The 30-fold layout used for the stroke cohort.
    pub fn stroke_30(subjects: &[String]) -> Result<Self> {
        FoldPlan::k_fold(subjects, 30)
    }

    /// Every fold partitions exactly `subjects` into disjoint train,
    /// validation and test sets, with nonempty train and test.
    pub fn validate(&self, subjects: &[String]) -> Result<()> {
        if self.folds.is_empty() {
            return Err(Error::InvalidInput("fold plan has no folds".into()));
        }
        let all: BTreeSet<&String> = subjects.iter().collect();
        for (i, f) in self.folds.iter().enumerate() {
            if f.test.is_empty() {
                return Err(Error::EmptyTestFold { fold: i });
            }
            if f.train.is_empty() {
                return Err(Error::EmptyTrainingSet);
            }
            let mut seen = BTreeSet::new();
            for s in f.train.iter().chain(&f.validation).chain(&f.test) {
                if !all.contains(s) {
                    return Err(Error::InvalidInput(format!("fold {i}: unknown subject `{s}`")));
                }
                if !seen.insert(s) {
                    return Err(Error::InvalidInput(format!("fold {i}: subject `{s}` appears twice")));
                }
            }
            if seen.len() != all.len() {
                return Err(Error::InvalidInput(format!(
                    "fold {i} assigns {} of {} subjects",
                    seen.len(),
                    all.len()
                )));
            }
        }
        Ok(())
    }
}
