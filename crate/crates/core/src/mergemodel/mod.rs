//! The merging classifier: decides from aligned pair features whether two
//! mixture components read as one cluster.

mod baselines;
mod metrics;
mod preprocess;
mod sampling;
mod tree;

pub use baselines::{KnnModel, NaiveBayesModel};
pub use metrics::{mcc, ConfusionCounts};
pub use preprocess::{
    apply_preprocess, box_cox_log_likelihood, fit_box_cox, fit_preprocess, BoxCoxParams, CenterScale,
    FittedPreprocess, Pca, PreprocessSpec, PreprocessStep,
};
pub use sampling::{
    balance, canonical_order, down_sample, stratified_folds, stratified_split, stratified_split_indices,
    up_sample, Balance,
};
pub use tree::{DecisionTree, Node};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::augment::{canonical_key, LabeledPair, MergeLabel, TrainingCorpus};
use crate::error::{Error, Result};
use crate::pairspace::AlignedPairFeatures;
use crate::seed;

pub const MODEL_FORMAT: &str = "vqm-merging-model";
pub const MODEL_VERSION: u64 = 1;

const SPLIT_STREAM: u64 = 0;
const BALANCE_STREAM: u64 = 1;
const TREE_STREAM: u64 = 2;
const CV_STREAM: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    Treebag,
    Knn,
    NaiveBayes,
}

impl Method {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "treebag" => Ok(Self::Treebag),
            "knn" => Ok(Self::Knn),
            "naive_bayes" => Ok(Self::NaiveBayes),
            _ => Err(Error::InvalidArgument(format!("unknown method `{s}`"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Treebag => "treebag",
            Self::Knn => "knn",
            Self::NaiveBayes => "naive_bayes",
        }
    }
}

impl Balance {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Self::None),
            "up_sample" => Ok(Self::UpSample),
            "down_sample" => Ok(Self::DownSample),
            _ => Err(Error::InvalidArgument(format!("unknown balance method `{s}`"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::None => "none",
            Self::UpSample => "up_sample",
            Self::DownSample => "down_sample",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub method: Method,
    pub n_trees: usize,
    pub min_leaf: usize,
    pub knn_k: usize,
    pub test_fraction: f64,
    pub balance: Balance,
    pub preprocess: PreprocessSpec,
    pub cv_folds: usize,
    pub cv_repeats: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            method: Method::Treebag,
            n_trees: 25,
            min_leaf: 1,
            knn_k: 5,
            test_fraction: 0.2,
            balance: Balance::UpSample,
            preprocess: PreprocessSpec::all_steps(),
            cv_folds: 10,
            cv_repeats: 10,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.n_trees == 0 {
            return bad("n_trees must be at least 1".into());
        }
        if self.min_leaf == 0 || self.knn_k == 0 {
            return bad("min_leaf and knn_k must be at least 1".into());
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return bad(format!("test_fraction {} outside (0, 1)", self.test_fraction));
        }
        if self.cv_folds < 2 || self.cv_repeats == 0 {
            return bad("cv_folds must be at least 2 and cv_repeats at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMetadata {
    pub seed: u64,
    pub balance: Balance,
    /// SHA-256 over the canonically ordered training portion.
    pub corpus_fingerprint: String,
    pub n_train: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Classifier {
    Treebag { trees: Vec<DecisionTree> },
    Knn(KnnModel),
    NaiveBayes(NaiveBayesModel),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: MergeLabel,
    /// Share of ensemble votes (or neighbours, or posterior mass) for merging.
    pub vote_fraction: f64,
}

impl Prediction {
    fn from_fraction(vote_fraction: f64) -> Self {
        Self { label: MergeLabel::from_bool(vote_fraction >= 0.5), vote_fraction }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergingModel {
    pub preprocess: FittedPreprocess,
    pub classifier: Classifier,
    pub metadata: ModelMetadata,
}

impl MergingModel {
    pub fn method(&self) -> Method {
        match self.classifier {
            Classifier::Treebag { .. } => Method::Treebag,
            Classifier::Knn(_) => Method::Knn,
            Classifier::NaiveBayes(_) => Method::NaiveBayes,
        }
    }

    pub fn trees(&self) -> &[DecisionTree] {
        match &self.classifier {
            Classifier::Treebag { trees } => trees,
            _ => &[],
        }
    }

    /// Prediction on an already preprocessed row.
    pub fn predict_transformed(&self, x: &[f64]) -> Prediction {
        let fraction = match &self.classifier {
            Classifier::Treebag { trees } => {
                trees.iter().filter(|t| t.predict(x) == 1).count() as f64 / trees.len() as f64
            }
            Classifier::Knn(m) => m.vote_fraction(x),
            Classifier::NaiveBayes(m) => m.posterior(x),
        };
        Prediction::from_fraction(fraction)
    }

    pub fn predict_array(&self, features: &[f64; 8]) -> Prediction {
        let x = self.preprocess.apply(features).expect("model input dimension is fixed at 8");
        self.predict_transformed(&x)
    }

    pub fn predict(&self, features: &AlignedPairFeatures) -> Prediction {
        self.predict_array(&features.to_array())
    }

    pub fn confusion(&self, records: &[LabeledPair]) -> ConfusionCounts {
        ConfusionCounts::from_pairs(
            records.iter().map(|r| (r.label.as_u8(), self.predict(&r.features).label.as_u8())),
        )
    }

    fn validate(&self) -> Result<()> {
        let corrupt = |m: String| Err(Error::CorruptPayload(m));
        if self.preprocess.input_dim != 8 {
            return corrupt(format!("model input dimension {} is not 8", self.preprocess.input_dim));
        }
        let dim = self.preprocess.output_dim();
        match &self.classifier {
            Classifier::Treebag { trees } => {
                if trees.is_empty() {
                    return corrupt("ensemble has no trees".into());
                }
                for t in trees {
                    if t.n_features() != dim {
                        return corrupt("tree dimension differs from the preprocessed dimension".into());
                    }
                    t.validate().map_err(Error::CorruptPayload)?;
                }
            }
            Classifier::Knn(m) => {
                if m.rows.is_empty() || m.rows.len() != m.labels.len() || m.rows.iter().any(|r| r.len() != dim) {
                    return corrupt("inconsistent neighbour table".into());
                }
            }
            Classifier::NaiveBayes(m) => {
                if m.means.iter().chain(&m.variances).any(|v| v.len() != dim) {
                    return corrupt("inconsistent naive Bayes parameters".into());
                }
            }
        }
        Ok(())
    }
}

/// SHA-256 hex digest of the records in canonical order.
pub fn corpus_fingerprint(records: &[LabeledPair]) -> String {
    let mut hasher = Sha256::new();
    for i in canonical_order(records) {
        hasher.update(format!("{}|{}\n", canonical_key(&records[i].features), records[i].label.as_u8()).as_bytes());
    }
    hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn feature_rows(records: &[LabeledPair]) -> Vec<Vec<f64>> {
    records.iter().map(|r| r.features.to_array().to_vec()).collect()
}

/// Balance, fit preprocessing and fit the classifier on `train` alone.
pub fn fit_on_split(train: &[LabeledPair], config: &TrainConfig) -> Result<MergingModel> {
    config.validate()?;
    let (n0, n1) = (
        sampling::count_label(train, MergeLabel::DoNotMerge),
        sampling::count_label(train, MergeLabel::Merge),
    );
    if n0 == 0 || n1 == 0 {
        return Err(Error::InvalidArgument("training portion needs both classes".into()));
    }
    let balanced = balance(train, config.balance, seed::derive(config.seed, &[BALANCE_STREAM]));
    let raw = feature_rows(&balanced);
    let preprocess = fit_preprocess(&raw, &config.preprocess)?;
    let rows = preprocess.apply_all(&raw)?;
    let labels = sampling::labels_of(&balanced);
    let classifier = match config.method {
        Method::Treebag => {
            let trees = (0..config.n_trees)
                .into_par_iter()
                .map(|t| {
                    let mut rng = seed::rng(config.seed, &[TREE_STREAM, t as u64]);
                    let sample: Vec<usize> = (0..rows.len()).map(|_| rng.random_range(0..rows.len())).collect();
                    DecisionTree::fit(&rows, &labels, &sample, config.min_leaf)
                })
                .collect();
            Classifier::Treebag { trees }
        }
        Method::Knn => Classifier::Knn(KnnModel::fit(rows, labels, config.knn_k)),
        Method::NaiveBayes => Classifier::NaiveBayes(NaiveBayesModel::fit(&rows, &labels)),
    };
    Ok(MergingModel {
        preprocess,
        classifier,
        metadata: ModelMetadata {
            seed: config.seed,
            balance: config.balance,
            corpus_fingerprint: corpus_fingerprint(train),
            n_train: train.len(),
        },
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub model: MergingModel,
    pub test_confusion: ConfusionCounts,
    pub train: Vec<LabeledPair>,
    pub test: Vec<LabeledPair>,
}

/// Stratified split, fit on the training portion, score the held-out portion.
pub fn train(corpus: &TrainingCorpus, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let (train, test) =
        stratified_split(&corpus.records, config.test_fraction, seed::derive(config.seed, &[SPLIT_STREAM]))?;
    let model = fit_on_split(&train, config)?;
    let test_confusion = model.confusion(&test);
    Ok(TrainOutcome { model, test_confusion, train, test })
}

/// [`train`] with the bagged-tree method regardless of `config.method`.
pub fn train_bagged(corpus: &TrainingCorpus, config: &TrainConfig) -> Result<(MergingModel, ConfusionCounts)> {
    let config = TrainConfig { method: Method::Treebag, ..config.clone() };
    let outcome = train(corpus, &config)?;
    Ok((outcome.model, outcome.test_confusion))
}

/// The portions [`train`] would use for this corpus and config.
pub fn train_test_portions(
    corpus: &TrainingCorpus,
    config: &TrainConfig,
) -> Result<(Vec<LabeledPair>, Vec<LabeledPair>)> {
    stratified_split(&corpus.records, config.test_fraction, seed::derive(config.seed, &[SPLIT_STREAM]))
}

/// Repeated stratified k-fold MCC, `cv_repeats × cv_folds` values in
/// repeat-major order. Balancing and preprocessing are refit per fold.
pub fn cross_validate(records: &[LabeledPair], config: &TrainConfig) -> Result<Vec<f64>> {
    config.validate()?;
    let order = canonical_order(records);
    let records: Vec<LabeledPair> = order.iter().map(|&i| records[i].clone()).collect();
    let mut scores = Vec::with_capacity(config.cv_repeats * config.cv_folds);
    for repeat in 0..config.cv_repeats {
        let folds = stratified_folds(&records, config.cv_folds, seed::derive(config.seed, &[CV_STREAM, repeat as u64]))?;
        for fold in 0..config.cv_folds {
            let (held, kept): (Vec<_>, Vec<_>) = records.iter().zip(&folds).partition(|(_, &f)| f == fold);
            let kept: Vec<LabeledPair> = kept.into_iter().map(|(r, _)| r.clone()).collect();
            let held: Vec<LabeledPair> = held.into_iter().map(|(r, _)| r.clone()).collect();
            let fold_config = TrainConfig {
                seed: seed::derive(config.seed, &[CV_STREAM, repeat as u64, fold as u64 + 1]),
                ..config.clone()
            };
            let model = fit_on_split(&kept, &fold_config)?;
            scores.push(mcc(&model.confusion(&held)));
        }
    }
    Ok(scores)
}

#[derive(Serialize)]
struct EnvelopeOut<'a> {
    format: &'a str,
    version: u64,
    model: &'a MergingModel,
}

pub fn serialize(model: &MergingModel) -> Vec<u8> {
    serde_json::to_vec(&EnvelopeOut { format: MODEL_FORMAT, version: MODEL_VERSION, model })
        .expect("model is serializable")
}

pub fn deserialize(bytes: &[u8]) -> Result<MergingModel> {
    if bytes.iter().all(u8::is_ascii_whitespace) {
        return Err(Error::CorruptPayload("empty model payload".into()));
    }
    let value: serde_json::Value =
        serde_json::from_slice(bytes).map_err(|e| Error::CorruptPayload(format!("not JSON: {e}")))?;
    let obj = value.as_object().ok_or_else(|| Error::CorruptPayload("model payload is not an object".into()))?;
    if obj.get("format").and_then(|f| f.as_str()) != Some(MODEL_FORMAT) {
        return Err(Error::CorruptPayload(format!("format tag is not `{MODEL_FORMAT}`")));
    }
    let version = obj
        .get("version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| Error::CorruptPayload("missing version".into()))?;
    if version != MODEL_VERSION {
        return Err(Error::VersionMismatch { found: version, expected: MODEL_VERSION });
    }
    let model_value = obj.get("model").cloned().ok_or_else(|| Error::CorruptPayload("missing model".into()))?;
    let model: MergingModel =
        serde_json::from_value(model_value).map_err(|e| Error::CorruptPayload(e.to_string()))?;
    model.validate()?;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Noise-free records labelled by an aligned-`mu` threshold.
    fn rule_corpus(n: usize) -> TrainingCorpus {
        crate::synth::threshold_rule_corpus(n, 0.5, 0.0, 42).unwrap().corpus
    }

    fn quick(n_trees: usize) -> TrainConfig {
        TrainConfig { n_trees, cv_folds: 3, cv_repeats: 1, ..TrainConfig::default() }
    }

    #[test]
    fn threshold_rule_is_learned() {
        let corpus = rule_corpus(600);
        let (model, confusion) = train_bagged(&corpus, &quick(10)).unwrap();
        assert_eq!(confusion.total(), 120);
        assert!(mcc(&confusion) > 0.9, "{confusion:?}");
        assert_eq!(model.trees().len(), 10);
    }

    #[test]
    fn single_tree_vote_is_the_tree() {
        let corpus = rule_corpus(200);
        let outcome = train(&corpus, &quick(1)).unwrap();
        let tree = &outcome.model.trees()[0];
        for r in &outcome.test {
            let x = outcome.model.preprocess.apply(&r.features.to_array()).unwrap();
            let p = outcome.model.predict(&r.features);
            assert_eq!(p.label.as_u8(), tree.predict(&x));
            assert!(p.vote_fraction == 0.0 || p.vote_fraction == 1.0);
        }
    }

    #[test]
    fn deterministic_and_round_trips() {
        let corpus = rule_corpus(200);
        let a = train(&corpus, &quick(5)).unwrap().model;
        let b = train(&corpus, &quick(5)).unwrap().model;
        assert_eq!(a, b);
        let back = deserialize(&serialize(&a)).unwrap();
        assert_eq!(back, a);
        assert_eq!(back.metadata.balance, Balance::UpSample);
    }

    #[test]
    fn payload_errors() {
        assert!(matches!(deserialize(b""), Err(Error::CorruptPayload(_))));
        assert!(matches!(deserialize(b"{\"format\":"), Err(Error::CorruptPayload(_))));
        let bumped = format!("{{\"format\":\"{MODEL_FORMAT}\",\"version\":2,\"model\":{{}}}}");
        assert!(matches!(deserialize(bumped.as_bytes()), Err(Error::VersionMismatch { found: 2, expected: 1 })));
        let hollow = format!("{{\"format\":\"{MODEL_FORMAT}\",\"version\":1,\"model\":{{}}}}");
        assert!(matches!(deserialize(hollow.as_bytes()), Err(Error::CorruptPayload(_))));
    }

    #[test]
    fn baselines_train() {
        let corpus = rule_corpus(300);
        for method in [Method::Knn, Method::NaiveBayes] {
            let outcome = train(&corpus, &TrainConfig { method, ..quick(1) }).unwrap();
            assert_eq!(outcome.model.method(), method);
            assert!(mcc(&outcome.test_confusion) > 0.5, "{method:?}");
            let back = deserialize(&serialize(&outcome.model)).unwrap();
            assert_eq!(back, outcome.model);
        }
    }

    #[test]
    fn cross_validation_shape() {
        let corpus = rule_corpus(150);
        let scores = cross_validate(&corpus.records, &TrainConfig { cv_repeats: 2, ..quick(3) }).unwrap();
        assert_eq!(scores.len(), 6);
        assert!(scores.iter().all(|s| (-1.0..=1.0).contains(s)));
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig { n_trees: 0, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { test_fraction: 1.0, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { cv_folds: 1, ..TrainConfig::default() }.validate().is_err());
        assert_eq!(Method::parse("knn").unwrap(), Method::Knn);
        assert_eq!(Balance::parse("down_sample").unwrap().name(), "down_sample");
    }
}
