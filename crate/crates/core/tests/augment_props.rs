use std::collections::HashSet;
use std::f64::consts::PI;

use proptest::prelude::*;
use vqm::augment::{build_corpus, canonical_key, replicate, JudgmentRecord, LabeledPair, MergeLabel, Vote};
use vqm::gmm::Covariance2;
use vqm::pairspace::{align_training_record, compose_covariance, PairFeatures, ShapeParams};

const SIGMA: [f64; 6] = [0.5, 1.0, 1.5, 2.0, 2.5, 3.0];

fn params() -> impl Strategy<Value = PairFeatures> {
    let theta = prop::sample::select(vec![0.0, PI / 8.0, PI / 4.0, 3.0 * PI / 8.0, PI / 2.0]);
    let sigma = prop::sample::select(SIGMA.to_vec());
    (
        prop::sample::select(vec![0.1, 0.2, 0.3, 0.4, 0.5]),
        prop::sample::select(vec![0.0, 1.0, 2.0, 3.0, 5.0, 8.0, 13.0, 21.0]),
        (sigma.clone(), sigma.clone(), sigma.clone(), sigma),
        (theta.clone(), theta),
    )
        .prop_map(|(tau, mu, (a, b, c, d), (tu, tv))| PairFeatures {
            tau,
            mu,
            shape_u: ShapeParams::new(tu, a, b),
            shape_v: ShapeParams::new(tv, c, d),
        })
}

fn record(p: PairFeatures, merge: bool) -> LabeledPair {
    LabeledPair {
        features: align_training_record(&p).unwrap(),
        label: MergeLabel::from_bool(merge),
        origin_id: "x".into(),
    }
}

fn reflect(c: &Covariance2) -> Covariance2 {
    Covariance2::new(c.xx, -c.xy, c.yy)
}

fn close(a: &Covariance2, b: &Covariance2) -> bool {
    (a.xx - b.xx).abs() < 1e-12 && (a.xy - b.xy).abs() < 1e-12 && (a.yy - b.yy).abs() < 1e-12
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn replicas_keep_label_and_respect_symmetries(p in params(), merge in any::<bool>()) {
        let r = record(p, merge);
        let reps = replicate(&r);
        prop_assert!(reps.iter().all(|x| x.label == r.label && x.origin_id == r.origin_id));
        let f = r.features.features();
        let (refl, swap, both) = (reps[1].features.features(), reps[2].features.features(), reps[3].features.features());

        // Reflection across the y-axis conjugates each covariance by diag(-1, 1).
        prop_assert!(close(&compose_covariance(&refl.shape_u), &reflect(&compose_covariance(&f.shape_u))));
        prop_assert!(close(&compose_covariance(&refl.shape_v), &reflect(&compose_covariance(&f.shape_v))));
        prop_assert_eq!((refl.tau, refl.mu), (f.tau, f.mu));

        prop_assert_eq!(swap.tau, 1.0 - f.tau);
        prop_assert_eq!(swap.shape_u, f.shape_v);
        prop_assert_eq!(swap.shape_v, f.shape_u);
        prop_assert_eq!(both.shape_u.theta, -f.shape_v.theta);
    }

    #[test]
    fn corpus_keys_are_unique(ps in prop::collection::vec((params(), any::<bool>()), 1..20)) {
        let records: Vec<JudgmentRecord> = ps
            .iter()
            .enumerate()
            .map(|(i, (p, merge))| JudgmentRecord {
                id: format!("r{i}"),
                params: *p,
                judgments: vec![if *merge { Vote::One } else { Vote::MoreThanOne }],
            })
            .collect();
        let corpus = build_corpus(&records).unwrap();
        let keys: HashSet<_> = corpus.records.iter().map(|r| canonical_key(&r.features)).collect();
        prop_assert_eq!(keys.len(), corpus.len());

        let all: HashSet<_> = records
            .iter()
            .flat_map(|r| replicate(&record(r.params, true)))
            .map(|x| canonical_key(&x.features))
            .collect();
        prop_assert_eq!(all.len(), corpus.len());
        let indexed: usize = corpus.provenance.values().map(Vec::len).sum();
        prop_assert_eq!(indexed, corpus.len());
        if records.iter().any(|r| r.params.tau < 0.5) {
            prop_assert!(corpus.records.iter().any(|r| r.features.features().tau > 0.5));
        }
    }
}
