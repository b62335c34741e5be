use std::sync::OnceLock;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use vqm::augment::LabeledPair;
use vqm::mergemodel::{self, fit_on_split, fit_preprocess, MergingModel, TrainConfig};
use vqm::synth::threshold_rule_corpus;

fn model() -> &'static MergingModel {
    static MODEL: OnceLock<MergingModel> = OnceLock::new();
    MODEL.get_or_init(|| {
        let rule = threshold_rule_corpus(1200, 0.5, 0.05, 8).unwrap();
        mergemodel::train(&rule.corpus, &TrainConfig { n_trees: 15, seed: 8, ..TrainConfig::default() }).unwrap().model
    })
}

fn aligned_input() -> impl Strategy<Value = [f64; 8]> {
    use std::f64::consts::FRAC_PI_2;
    (0.01f64..0.99, prop::array::uniform5(0.01f64..1.0), 0usize..5, -FRAC_PI_2..FRAC_PI_2, -FRAC_PI_2..FRAC_PI_2).prop_map(
        |(tau, mut lengths, longest, tu, tv)| {
            lengths[longest] = 1.0;
            [tau, lengths[0], lengths[1], lengths[2], lengths[3], lengths[4], tu, tv]
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn round_trip_preserves_predictions(x in aligned_input()) {
        let m = model();
        let back = mergemodel::deserialize(&mergemodel::serialize(m)).unwrap();
        prop_assert_eq!(m.predict_array(&x), back.predict_array(&x));
    }

    #[test]
    fn vote_fraction_is_the_share_of_merge_trees(x in aligned_input()) {
        let m = model();
        let p = m.predict_array(&x);
        let row = m.preprocess.apply(&x).unwrap();
        let merges = m.trees().iter().filter(|t| t.predict(&row) == 1).count();
        prop_assert!((0.0..=1.0).contains(&p.vote_fraction));
        prop_assert_eq!(p.vote_fraction, merges as f64 / m.trees().len() as f64);
        prop_assert_eq!(p.label.as_u8() == 1, p.vote_fraction >= 0.5);
    }
}

#[test]
fn preprocessing_sees_only_the_training_portion() {
    let rule = threshold_rule_corpus(800, 0.5, 0.05, 9).unwrap();
    let config = TrainConfig { n_trees: 5, seed: 9, ..TrainConfig::default() };
    let out = mergemodel::train(&rule.corpus, &config).unwrap();
    assert_eq!(out.model, fit_on_split(&out.train, &config).unwrap());

    // Perturbing or dropping held-out rows cannot reach a model fitted on the split.
    let mut perturbed: Vec<LabeledPair> = out.train.clone();
    perturbed.extend(out.test.iter().map(|r| LabeledPair { features: out.test[0].features, ..r.clone() }));
    let refit = fit_on_split(&perturbed[..out.train.len()], &config).unwrap();
    assert_eq!(refit.preprocess, out.model.preprocess);

    // The full corpus would have produced different statistics.
    let all: Vec<Vec<f64>> = rule.corpus.records.iter().map(|r| r.features.to_array().to_vec()).collect();
    let leaky = fit_preprocess(&all, &config.preprocess).unwrap();
    assert_ne!(leaky, out.model.preprocess);
}

#[test]
fn cross_validation_ignores_input_order() {
    let rule = threshold_rule_corpus(400, 0.5, 0.05, 10).unwrap();
    let config = TrainConfig { n_trees: 5, cv_folds: 4, cv_repeats: 2, seed: 10, ..TrainConfig::default() };
    let base = mergemodel::cross_validate(&rule.corpus.records, &config).unwrap();
    assert_eq!(base.len(), 8);
    let mut shuffled = rule.corpus.records.clone();
    shuffled.shuffle(&mut vqm::seed::rng(11, &[]));
    assert_eq!(mergemodel::cross_validate(&shuffled, &config).unwrap(), base);
}

#[test]
fn training_is_deterministic_per_seed() {
    let rule = threshold_rule_corpus(500, 0.5, 0.05, 12).unwrap();
    let config = TrainConfig { n_trees: 7, seed: 3, ..TrainConfig::default() };
    let a = mergemodel::train(&rule.corpus, &config).unwrap().model;
    let b = mergemodel::train(&rule.corpus, &config).unwrap().model;
    assert_eq!(mergemodel::serialize(&a), mergemodel::serialize(&b));
    let c = mergemodel::train(&rule.corpus, &TrainConfig { seed: 4, ..config }).unwrap().model;
    assert_ne!(a, c);
}
