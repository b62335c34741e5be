//! Stratified splitting, class balancing and cross-validation folds.
//!
//! All routines first put records in a content-derived canonical order, so
//! results depend on the seed and the multiset of records, never on input
//! row order.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::augment::{canonical_key, LabeledPair, MergeLabel};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Balance {
    None,
    /// Resample the minority class with replacement up to the majority count.
    #[default]
    UpSample,
    /// Subsample the majority class without replacement down to the minority count.
    DownSample,
}

/// Indices of `records` sorted by (canonical key, label, origin id).
pub fn canonical_order(records: &[LabeledPair]) -> Vec<usize> {
    let keys: Vec<_> = records.iter().map(|r| canonical_key(&r.features)).collect();
    let mut idx: Vec<usize> = (0..records.len()).collect();
    idx.sort_by(|&a, &b| {
        keys[a]
            .cmp(&keys[b])
            .then(records[a].label.cmp(&records[b].label))
            .then_with(|| records[a].origin_id.cmp(&records[b].origin_id))
    });
    idx
}

fn by_class(records: &[LabeledPair]) -> [Vec<usize>; 2] {
    let mut classes = [Vec::new(), Vec::new()];
    for i in canonical_order(records) {
        classes[records[i].label.as_u8() as usize].push(i);
    }
    classes
}

/// Index form of [`stratified_split`]: `(train, test)`, each in canonical order.
pub fn stratified_split_indices(
    records: &[LabeledPair],
    test_fraction: f64,
    seed_value: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!("test fraction {test_fraction} outside (0, 1)")));
    }
    let classes = by_class(records);
    if classes.iter().any(Vec::is_empty) {
        return Err(Error::InvalidArgument("stratified split needs both classes".into()));
    }
    let mut in_test = vec![false; records.len()];
    for (c, members) in classes.iter().enumerate() {
        let mut shuffled = members.clone();
        shuffled.shuffle(&mut seed::rng(seed_value, &[c as u64]));
        let n_test = (members.len() as f64 * test_fraction).round() as usize;
        for &i in &shuffled[..n_test] {
            in_test[i] = true;
        }
    }
    let order = canonical_order(records);
    let (test, train): (Vec<usize>, Vec<usize>) = order.into_iter().partition(|&i| in_test[i]);
    Ok((train, test))
}

/// Per-class random split into `(train, test)`.
pub fn stratified_split(
    records: &[LabeledPair],
    test_fraction: f64,
    seed_value: u64,
) -> Result<(Vec<LabeledPair>, Vec<LabeledPair>)> {
    let (train, test) = stratified_split_indices(records, test_fraction, seed_value)?;
    let pick = |idx: Vec<usize>| idx.into_iter().map(|i| records[i].clone()).collect();
    Ok((pick(train), pick(test)))
}

/// Originals first (canonical order), then minority replicas drawn with
/// replacement until both classes have equal counts.
pub fn up_sample(train: &[LabeledPair], seed_value: u64) -> Vec<LabeledPair> {
    let classes = by_class(train);
    let mut out: Vec<LabeledPair> = canonical_order(train).into_iter().map(|i| train[i].clone()).collect();
    let (minority, deficit) = if classes[0].len() < classes[1].len() {
        (&classes[0], classes[1].len() - classes[0].len())
    } else {
        (&classes[1], classes[0].len() - classes[1].len())
    };
    if minority.is_empty() {
        return out;
    }
    let mut rng = seed::rng(seed_value, &[]);
    out.extend((0..deficit).map(|_| train[minority[rng.random_range(0..minority.len())]].clone()));
    out
}

/// Majority class subsampled without replacement to the minority count.
pub fn down_sample(train: &[LabeledPair], seed_value: u64) -> Vec<LabeledPair> {
    let classes = by_class(train);
    let (minority, majority) = if classes[0].len() <= classes[1].len() {
        (&classes[0], &classes[1])
    } else {
        (&classes[1], &classes[0])
    };
    if minority.is_empty() {
        return canonical_order(train).into_iter().map(|i| train[i].clone()).collect();
    }
    let mut kept = majority.clone();
    kept.shuffle(&mut seed::rng(seed_value, &[]));
    kept.truncate(minority.len());
    let mut keep = vec![false; train.len()];
    for &i in minority.iter().chain(&kept) {
        keep[i] = true;
    }
    canonical_order(train).into_iter().filter(|&i| keep[i]).map(|i| train[i].clone()).collect()
}

pub fn balance(train: &[LabeledPair], method: Balance, seed_value: u64) -> Vec<LabeledPair> {
    match method {
        Balance::None => train.to_vec(),
        Balance::UpSample => up_sample(train, seed_value),
        Balance::DownSample => down_sample(train, seed_value),
    }
}

/// Stratified fold assignment: `folds[i]` is the fold of `records[i]`.
/// Per-class fold sizes differ by at most one.
pub fn stratified_folds(records: &[LabeledPair], n_folds: usize, seed_value: u64) -> Result<Vec<usize>> {
    if n_folds < 2 {
        return Err(Error::InvalidArgument("need at least 2 folds".into()));
    }
    let classes = by_class(records);
    let minority = classes.iter().map(Vec::len).min().unwrap_or(0);
    if minority < n_folds {
        return Err(Error::InvalidArgument(format!(
            "{n_folds} folds exceed the minority class count {minority}"
        )));
    }
    let mut folds = vec![0; records.len()];
    for (c, members) in classes.iter().enumerate() {
        let mut shuffled = members.clone();
        shuffled.shuffle(&mut seed::rng(seed_value, &[c as u64]));
        for (pos, &i) in shuffled.iter().enumerate() {
            folds[i] = pos % n_folds;
        }
    }
    Ok(folds)
}

pub(crate) fn labels_of(records: &[LabeledPair]) -> Vec<u8> {
    records.iter().map(|r| r.label.as_u8()).collect()
}

pub(crate) fn count_label(records: &[LabeledPair], label: MergeLabel) -> usize {
    records.iter().filter(|r| r.label == label).count()
}
