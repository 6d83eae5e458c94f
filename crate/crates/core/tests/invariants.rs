//! Property tests over randomized inputs.

mod common;

use std::collections::BTreeMap;

use proptest::prelude::*;

use subsense::cluster::{relabel, upgma};
use subsense::inject::sdp_combine;
use subsense::metrics::{ari, paired_fscore, v_measure_parts};
use subsense::substgen::{SubstituteCandidate, SubstituteSet};
use subsense::vectorize::{build_tfidf, LemmaBag};
use subsense::wcm::{wcm_mask, SubwordToken, TokenizedLine, WcmParams};

fn labelings() -> impl Strategy<Value = (Vec<usize>, Vec<usize>)> {
    (2usize..25).prop_flat_map(|n| {
        (
            proptest::collection::vec(0usize..5, n),
            proptest::collection::vec(0usize..5, n),
        )
    })
}

fn candidate_set() -> impl Strategy<Value = SubstituteSet> {
    proptest::collection::vec(("[a-e]{1,2}", -10.0f64..0.0), 0..12).prop_map(|v| {
        SubstituteSet::from_candidates(
            "i",
            v.into_iter().map(|(w, lp)| SubstituteCandidate { word: w, logprob: lp, n_subwords: 1 }),
            None,
        )
    })
}

proptest! {
    #[test]
    fn ari_is_symmetric_bounded_and_label_invariant((g, p) in labelings()) {
        let a = ari(&g, &p).unwrap();
        prop_assert!(a <= 1.0 + 1e-12);
        prop_assert!((a - ari(&p, &g).unwrap()).abs() < 1e-12);
        let renamed: Vec<usize> = p.iter().map(|x| 100 - x).collect();
        prop_assert_eq!(a, ari(&g, &renamed).unwrap());
        prop_assert!((a - common::ari_pairs(&g, &p)).abs() < 1e-12);
    }

    #[test]
    fn v_measure_parts_in_unit_interval((g, p) in labelings()) {
        let v = v_measure_parts(&g, &p).unwrap();
        for x in [v.homogeneity, v.completeness, v.v_measure] {
            prop_assert!((-1e-12..=1.0 + 1e-12).contains(&x));
        }
        let swapped = v_measure_parts(&p, &g).unwrap();
        prop_assert!((v.homogeneity - swapped.completeness).abs() < 1e-12);
        let f = paired_fscore(&g, &p).unwrap();
        prop_assert!((0.0..=1.0).contains(&f));
    }

    #[test]
    fn sdp_is_symmetric(a in candidate_set(), b in candidate_set(), k in 1usize..20) {
        prop_assert_eq!(sdp_combine(&a, &b, 1e-5, k), sdp_combine(&b, &a, 1e-5, k));
    }

    #[test]
    fn substitute_sets_are_sorted_and_unique(s in candidate_set()) {
        for w in s.candidates.windows(2) {
            prop_assert!(w[0].logprob > w[1].logprob || (w[0].logprob == w[1].logprob && w[0].word < w[1].word));
        }
        let mut words: Vec<_> = s.words().collect();
        words.sort();
        words.dedup();
        prop_assert_eq!(words.len(), s.len());
    }

    #[test]
    fn tfidf_rows_are_unit_norm(bags in proptest::collection::vec(
        proptest::collection::btree_map("[a-h]", 1.0f64..4.0, 1..5), 1..10)
    ) {
        let bags: Vec<LemmaBag> = bags.into_iter().enumerate()
            .map(|(i, terms)| LemmaBag { instance_id: format!("i{i}"), terms })
            .collect();
        let m = build_tfidf("w", &bags).unwrap();
        for i in 0..m.n_rows() {
            let norm: f64 = m.values[i].iter().map(|(_, x)| x * x).sum::<f64>().sqrt();
            prop_assert!((norm - 1.0).abs() < 1e-9);
        }
        for j in 0..m.vocab.len() {
            prop_assert!(m.values.iter().any(|r| r.iter().any(|&(c, x)| c == j && x > 0.0)));
        }
    }

    #[test]
    fn upgma_is_a_valid_tree(n in 2usize..14, seed in any::<u64>()) {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let d = common::random_distances(&mut rng, n);
        let t = upgma(&d);
        prop_assert_eq!(t.merges.len(), n - 1);
        prop_assert_eq!(t.merges.last().unwrap().size, n);
        for c in 1..=n {
            let labels = t.cut(c);
            prop_assert_eq!(labels.iter().max().unwrap() + 1, c);
            prop_assert_eq!(relabel(&labels), labels);
        }
        // Average linkage is monotone.
        for w in t.merges.windows(2) {
            prop_assert!(w[1].distance >= w[0].distance - 1e-12);
        }
    }

    #[test]
    fn wcm_examples_restore(flags in proptest::collection::vec(any::<bool>(), 1..40), seed in any::<u64>(), rate in 0.0f64..1.0) {
        let tokens: Vec<SubwordToken> = flags.iter().enumerate()
            .map(|(i, &b)| SubwordToken::new(format!("t{i}"), i == 0 || b))
            .collect();
        let line = TokenizedLine { tokens: tokens.clone(), offset: None };
        let ex = wcm_mask(&line, &WcmParams { mask_rate: rate, seed, split: None }, seed);
        prop_assert_eq!(ex.restore(), tokens);
        prop_assert!(ex.mask_count() <= ex.selected);
        prop_assert_eq!(ex.input_tokens.len() + ex.removed_count(), line.tokens.len());
    }

    #[test]
    fn dataset_jsonl_round_trips(contexts in proptest::collection::vec("[a-z ]{0,10}", 1..6)) {
        let insts: Vec<_> = contexts.iter().enumerate().map(|(i, c)| subsense::Instance {
            instance_id: format!("w.{i}"),
            target_lemma: "w".into(),
            language: "en".into(),
            context: format!("{c}wörd{c}"),
            target_span: (c.chars().count(), c.chars().count() + 4),
            gold_sense: Some((i % 2).to_string()),
        }).collect();
        let d = subsense::Dataset::new("t", insts).unwrap();
        let back = subsense::dataset::parse_jsonl("t", &d.to_jsonl()).unwrap();
        prop_assert_eq!(back.instances(), d.instances());
        for inst in back.instances() {
            prop_assert_eq!(inst.target_surface(), "wörd");
        }
    }
}

#[test]
fn hard_and_soft_assignments_agree() {
    use subsense::cluster::hard_to_soft;
    let h = subsense::SenseClustering::hard("w", BTreeMap::from([("a".to_string(), 0), ("b".to_string(), 1)]));
    let s = hard_to_soft(&h);
    assert!(s.is_consistent());
}
