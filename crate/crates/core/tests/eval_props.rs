use proptest::prelude::*;
use vqm::eval::{alter_decisions, bootstrap_kappa, vanbelle_kappa, GroupRatings, IsolatedRatings, Relation};

fn ratings() -> impl Strategy<Value = (usize, Vec<Vec<usize>>, Vec<usize>)> {
    (2usize..=4, 1usize..=30, 1usize..=6).prop_flat_map(|(c, items, raters)| {
        (
            Just(c),
            prop::collection::vec(prop::collection::vec(0..c, raters), items),
            prop::collection::vec(0..c, items),
        )
    })
}

fn names(c: usize) -> Vec<String> {
    (0..c).map(|i| format!("c{i}")).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn kappa_is_bounded_and_ignores_category_names((c, votes, iso) in ratings(), rot in 0usize..4) {
        let g = GroupRatings::new(names(c), votes.clone()).unwrap();
        let k = vanbelle_kappa(&g, &IsolatedRatings { votes: iso.clone() }).unwrap();
        prop_assert!(k.kappa <= 1.0 + 1e-12);
        let relabel = |v: usize| (v + rot) % c;
        let g2 = GroupRatings::new(names(c), votes.iter().map(|r| r.iter().map(|&v| relabel(v)).collect()).collect()).unwrap();
        let k2 = vanbelle_kappa(&g2, &IsolatedRatings { votes: iso.iter().map(|&v| relabel(v)).collect() }).unwrap();
        prop_assert!((k.kappa - k2.kappa).abs() < 1e-12);
    }

    #[test]
    fn single_rater_copy_agrees_perfectly((c, _, iso) in ratings()) {
        let g = GroupRatings::new(names(c), iso.iter().map(|&v| vec![v]).collect()).unwrap();
        prop_assert_eq!(vanbelle_kappa(&g, &IsolatedRatings { votes: iso }).unwrap().kappa, 1.0);
    }

    #[test]
    fn bootstrap_is_deterministic((c, votes, iso) in ratings(), s in any::<u64>()) {
        let g = GroupRatings::new(names(c), votes).unwrap();
        let iso = IsolatedRatings { votes: iso };
        let a = bootstrap_kappa(&g, &iso, 25, s).unwrap();
        let b = bootstrap_kappa(&g, &iso, 25, s).unwrap();
        prop_assert_eq!(a, b);
    }
}

#[test]
fn alterations_change_exactly_k_positions_exhaustively() {
    for n in 0..=5usize {
        let total = 3usize.pow(n as u32);
        for code in 0..total {
            let rel: Vec<Relation> = (0..n).map(|i| Relation::ALL[(code / 3usize.pow(i as u32)) % 3]).collect();
            for k in 0..=n {
                for s in 0..3 {
                    let out = alter_decisions(&rel, k, s).unwrap();
                    assert_eq!(out.iter().zip(&rel).filter(|(a, b)| a != b).count(), k);
                }
            }
            assert!(alter_decisions(&rel, n + 1, 0).is_err());
        }
    }
}
