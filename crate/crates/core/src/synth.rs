//! Simulated judges and benchmark data, standing in for human studies when
//! no judged corpus is available.

use std::collections::HashMap;
use std::f64::consts::PI;

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::augment::{
    canonical_key, replicate, sample_grid, CanonicalKey, JudgmentRecord, LabeledPair, MergeLabel, TrainingCorpus, Vote,
};
use crate::error::Result;
use crate::eval::{PairJudgmentSet, Relation};
use crate::gmm::{gaussian_density, Covariance2, Point2D, Scatterplot};
use crate::pairspace::{align_training_record, compose_covariance, PairFeatures};
use crate::seed;

const VALLEY_SAMPLES: usize = 400;

/// Relative depth of the density valley on the segment joining the two
/// centers: `1 - valley / lower peak`, in `[0, 1]`. Zero for a unimodal profile.
pub fn valley_depth(params: &PairFeatures) -> f64 {
    if params.mu <= 0.0 {
        return 0.0;
    }
    let cov_u = compose_covariance(&params.shape_u);
    let cov_v = compose_covariance(&params.shape_v);
    let (mean_u, mean_v) = (Point2D::new(0.0, 0.0), Point2D::new(0.0, params.mu));
    let profile: Vec<f64> = (0..=VALLEY_SAMPLES)
        .map(|i| {
            let p = Point2D::new(0.0, params.mu * i as f64 / VALLEY_SAMPLES as f64);
            params.tau * gaussian_density(p, mean_u, cov_u).unwrap_or(0.0)
                + (1.0 - params.tau) * gaussian_density(p, mean_v, cov_v).unwrap_or(0.0)
        })
        .collect();
    let (valley_at, valley) =
        profile.iter().copied().enumerate().fold((0, f64::INFINITY), |b, (i, f)| if f < b.1 { (i, f) } else { b });
    let left = profile[..=valley_at].iter().copied().fold(0.0, f64::max);
    let right = profile[valley_at..].iter().copied().fold(0.0, f64::max);
    let peak = left.min(right);
    if peak > 0.0 {
        (1.0 - valley / peak).clamp(0.0, 1.0)
    } else {
        0.0
    }
}

/// Simulated raters: judge `j` sees more than one cluster when the valley
/// depth exceeds its threshold; each vote then flips with `flip_rate`.
#[derive(Debug, Clone, PartialEq)]
pub struct JudgePanel {
    pub thresholds: Vec<f64>,
    pub flip_rate: f64,
}

impl JudgePanel {
    /// Thresholds spread evenly over `[0.05, 0.35]`.
    pub fn new(n_judges: usize, flip_rate: f64) -> Self {
        let thresholds = (0..n_judges).map(|j| 0.05 + 0.3 * (j as f64 + 0.5) / n_judges as f64).collect();
        Self { thresholds, flip_rate }
    }

    pub fn judge<R: Rng + ?Sized>(&self, params: &PairFeatures, rng: &mut R) -> Vec<Vote> {
        let depth = valley_depth(params);
        self.thresholds
            .iter()
            .map(|&t| {
                let mut more = depth > t;
                if rng.random::<f64>() < self.flip_rate {
                    more = !more;
                }
                if more { Vote::MoreThanOne } else { Vote::One }
            })
            .collect()
    }
}

/// A judged benchmark of `n_records` grid draws.
pub fn simulate_benchmark(n_records: usize, panel: &JudgePanel, seed_value: u64) -> Vec<JudgmentRecord> {
    let mut rng = seed::rng(seed_value, &[]);
    (0..n_records)
        .map(|i| {
            let (params, _, _) = sample_grid(&mut rng);
            let judgments = panel.judge(&params, &mut rng);
            JudgmentRecord { id: format!("s{:04}", i + 1), params, judgments }
        })
        .collect()
}

/// Noisy training corpus plus the noise-free label of every record.
#[derive(Debug, Clone, PartialEq)]
pub struct RuleCorpus {
    pub corpus: TrainingCorpus,
    clean: HashMap<CanonicalKey, MergeLabel>,
}

impl RuleCorpus {
    pub fn clean_label(&self, record: &LabeledPair) -> Option<MergeLabel> {
        self.clean.get(&canonical_key(&record.features)).copied()
    }

    /// Copies of `records` carrying their noise-free labels.
    pub fn with_clean_labels(&self, records: &[LabeledPair]) -> Vec<LabeledPair> {
        records
            .iter()
            .map(|r| LabeledPair { label: self.clean_label(r).unwrap_or(r.label), ..r.clone() })
            .collect()
    }
}

/// `n` unique aligned records from augmented grid draws, labelled merge iff
/// the aligned `mu` is below `mu_threshold`, with exactly `round(noise * n)`
/// labels flipped.
pub fn threshold_rule_corpus(n: usize, mu_threshold: f64, noise: f64, seed_value: u64) -> Result<RuleCorpus> {
    let mut rng = seed::rng(seed_value, &[0]);
    let mut clean = HashMap::with_capacity(n);
    let mut records = Vec::with_capacity(n);
    let mut draw = 0;
    while records.len() < n {
        let (params, _, _) = sample_grid(&mut rng);
        let features = align_training_record(&params)?;
        draw += 1;
        let origin = LabeledPair {
            features,
            label: MergeLabel::from_bool(features.features().mu < mu_threshold),
            origin_id: format!("g{draw:05}"),
        };
        for replica in replicate(&origin) {
            let key = canonical_key(&replica.features);
            if records.len() < n && !clean.contains_key(&key) {
                clean.insert(key, replica.label);
                records.push(replica);
            }
        }
    }
    let n_flip = (noise * n as f64).round() as usize;
    for i in sample(&mut seed::rng(seed_value, &[1]), n, n_flip) {
        records[i].label = MergeLabel::from_bool(records[i].label == MergeLabel::DoNotMerge);
    }
    Ok(RuleCorpus { corpus: TrainingCorpus::from_pairs(records), clean })
}

/// One synthetic scatterplot of isotropic blobs with known structure.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticPlot {
    pub id: String,
    pub scatterplot: Scatterplot,
    pub blobs: usize,
    /// Blob groups whose centers are chained within `MERGE_DISTANCE` sigmas.
    pub perceived: usize,
}

pub const MERGE_DISTANCE: f64 = 2.5;

/// Plots with 1 to 4 unit-sigma blobs at random separations.
pub fn ranking_benchmark(n_plots: usize, n_points: usize, seed_value: u64) -> Result<Vec<SyntheticPlot>> {
    (0..n_plots)
        .map(|p| {
            let mut rng = seed::rng(seed_value, &[p as u64]);
            let blobs = rng.random_range(1..=4usize);
            let mut centers: Vec<Point2D> = Vec::with_capacity(blobs);
            for b in 0..blobs {
                let c = if b == 0 {
                    Point2D::new(0.0, 0.0)
                } else {
                    let anchor = centers[rng.random_range(0..b)];
                    let angle = rng.random_range(0.0..2.0 * PI);
                    let dist = [1.0, 1.5, 6.0, 9.0, 14.0][rng.random_range(0..5)];
                    Point2D::new(anchor.x + dist * angle.cos(), anchor.y + dist * angle.sin())
                };
                centers.push(c);
            }
            let sigma = Covariance2::IDENTITY;
            let (l11, l21, l22) = sigma.cholesky()?;
            let points = (0..n_points)
                .map(|_| {
                    let c = centers[rng.random_range(0..blobs)];
                    let z1: f64 = StandardNormal.sample(&mut rng);
                    let z2: f64 = StandardNormal.sample(&mut rng);
                    Point2D::new(c.x + l11 * z1, c.y + l21 * z1 + l22 * z2)
                })
                .collect();
            let id = format!("p{:02}", p + 1);
            Ok(SyntheticPlot {
                scatterplot: Scatterplot::new(points)?.with_id(id.clone()),
                id,
                blobs,
                perceived: chained_groups(&centers, MERGE_DISTANCE),
            })
        })
        .collect()
}

fn chained_groups(centers: &[Point2D], within: f64) -> usize {
    let n = centers.len();
    let mut group: Vec<usize> = (0..n).collect();
    for i in 0..n {
        for j in i + 1..n {
            if centers[i].distance(&centers[j]) < within {
                let (from, to) = (group[j].max(group[i]), group[j].min(group[i]));
                group.iter_mut().filter(|g| **g == from).for_each(|g| *g = to);
            }
        }
    }
    group.sort();
    group.dedup();
    group.len()
}

/// Rater votes on every pair: the lexicographic order of (perceived, blobs),
/// replaced by a uniformly random other relation with probability `noise`.
pub fn simulate_pair_judgments(plots: &[SyntheticPlot], n_raters: usize, noise: f64, seed_value: u64) -> PairJudgmentSet {
    let mut rng = seed::rng(seed_value, &[]);
    let mut set = PairJudgmentSet { pairs: Vec::new(), votes: Vec::new() };
    for (i, a) in plots.iter().enumerate() {
        for b in &plots[i + 1..] {
            let truth = Relation::from_ordering((a.perceived, a.blobs).cmp(&(b.perceived, b.blobs)));
            let votes = (0..n_raters)
                .map(|_| {
                    if rng.random::<f64>() < noise {
                        let others: Vec<Relation> = Relation::ALL.into_iter().filter(|r| *r != truth).collect();
                        others[rng.random_range(0..2)]
                    } else {
                        truth
                    }
                })
                .collect();
            set.pairs.push((a.id.clone(), b.id.clone()));
            set.votes.push(votes);
        }
    }
    set
}
