mod common;

use num_bigint::BigInt;
use num_rational::BigRational;
use procline_core::model::CharacteristicValue;
use procline_core::persist::{load_base, read_json};
use procline_core::selection::{score_variant, select_top_k, ProjectCharacteristic, Rational, ScoringContext};
use procline_core::{MetaModel, ProcessModel};
use proptest::prelude::*;

fn ratio(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

/// Independent evaluator: straight from the weighted-mean definition, with
/// ordinal ranges recomputed from scratch for every call.
fn oracle_score(base: &[ProcessModel], variant: &ProcessModel, query: &[ProjectCharacteristic]) -> BigRational {
    let mut numerator = ratio(0, 1);
    let mut denominator = ratio(0, 1);
    for q in query {
        let w = q.weight.0.clone();
        if w == ratio(0, 1) {
            continue;
        }
        let m = match (&q.value, variant.characteristics.get(&q.name)) {
            (CharacteristicValue::Categorical(a), Some(CharacteristicValue::Categorical(b))) => {
                ratio((a == b) as i64, 1)
            }
            (CharacteristicValue::Ordinal(a), Some(CharacteristicValue::Ordinal(b))) => {
                let values: Vec<i64> = base
                    .iter()
                    .filter_map(|v| match v.characteristics.get(&q.name) {
                        Some(CharacteristicValue::Ordinal(x)) => Some(*x),
                        _ => None,
                    })
                    .collect();
                let range = values.iter().max().unwrap() - values.iter().min().unwrap();
                if a == b {
                    ratio(1, 1)
                } else if range == 0 {
                    ratio(0, 1)
                } else {
                    let m = ratio(1, 1) - ratio((a - b).abs(), range);
                    if m < ratio(0, 1) {
                        ratio(0, 1)
                    } else {
                        m
                    }
                }
            }
            _ => ratio(0, 1),
        };
        numerator += &w * m;
        denominator += w;
    }
    numerator / denominator
}

fn with_chars(id: &str, chars: &[(&str, CharacteristicValue)]) -> ProcessModel {
    let mut m = ProcessModel::new(id, 1, MetaModel::minimal());
    for (name, value) in chars {
        m = m.with_characteristic(name, value.clone());
    }
    m
}

#[test]
fn weighted_example_matches_hand_computation() {
    use CharacteristicValue::*;
    let base = vec![
        with_chars("lo", &[("team-size", Ordinal(2))]),
        with_chars("hi", &[("team-size", Ordinal(20))]),
        with_chars("v", &[("domain", Categorical("automotive".into())), ("team-size", Ordinal(14))]),
    ];
    let query = [
        ProjectCharacteristic::new("domain", Categorical("automotive".into()), Rational::integer(2)),
        ProjectCharacteristic::new("team-size", Ordinal(8), Rational::integer(1)),
    ];
    let ctx = ScoringContext::from_base(&base, true);
    let score = score_variant(&base[2], &query, &ctx).unwrap();
    let hand = (ratio(2, 1) + ratio(1, 1) - ratio(6, 18)) / ratio(3, 1);
    assert_eq!(score.score.0, hand);
    assert_eq!(score.score.0, oracle_score(&base, &base[2], &query));
}

#[test]
fn fixture_ranking_matches_exhaustive_oracle() {
    let base = load_base(&common::fixture("process_base.json")).unwrap();
    let query: Vec<ProjectCharacteristic> = read_json(&common::fixture("characteristics.json")).unwrap();
    let mut oracle: Vec<(BigRational, String)> =
        base.variants.iter().map(|v| (oracle_score(&base.variants, v, &query), v.id.clone())).collect();
    oracle.sort_by(|a, b| b.0.cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
    let ranking = select_top_k(&base.variants, &query, base.variants.len(), true).unwrap();
    let got: Vec<(BigRational, String)> = ranking.into_iter().map(|s| (s.score.0, s.variant_id)).collect();
    assert_eq!(got, oracle);
}

fn arb_value() -> impl Strategy<Value = CharacteristicValue> {
    prop_oneof![
        (0i64..10).prop_map(CharacteristicValue::Ordinal),
        prop::sample::select(vec!["a", "b", "c"]).prop_map(|s| CharacteristicValue::Categorical(s.into())),
    ]
}

const NAMES: [&str; 3] = ["size", "domain", "risk"];

fn arb_base() -> impl Strategy<Value = Vec<ProcessModel>> {
    prop::collection::vec(prop::collection::vec(prop::option::of(arb_value()), 3), 1..8).prop_map(|rows| {
        rows.into_iter()
            .enumerate()
            .map(|(i, values)| {
                let mut m = ProcessModel::new(format!("v{i}"), 1, MetaModel::minimal());
                for (name, value) in NAMES.iter().zip(values) {
                    if let Some(value) = value {
                        m = m.with_characteristic(name, value);
                    }
                }
                m
            })
            .collect()
    })
}

fn arb_query() -> impl Strategy<Value = Vec<ProjectCharacteristic>> {
    prop::collection::vec((arb_value(), 1i64..6), 3).prop_map(|items| {
        NAMES
            .iter()
            .zip(items)
            .map(|(name, (value, w))| ProjectCharacteristic::new(name, value, Rational::integer(w)))
            .collect()
    })
}

proptest! {
    #[test]
    fn scores_match_the_oracle(base in arb_base(), query in arb_query()) {
        let ctx = ScoringContext::from_base(&base, true);
        for v in &base {
            prop_assert_eq!(score_variant(v, &query, &ctx).unwrap().score.0, oracle_score(&base, v, &query));
        }
    }

    #[test]
    fn scaling_weights_changes_nothing(base in arb_base(), query in arb_query(), c in 1i64..50, d in 1i64..50) {
        let scaled: Vec<ProjectCharacteristic> = query
            .iter()
            .map(|q| ProjectCharacteristic { weight: Rational(q.weight.0.clone() * ratio(c, d)), ..q.clone() })
            .collect();
        let a = select_top_k(&base, &query, base.len(), true).unwrap();
        let b = select_top_k(&base, &scaled, base.len(), true).unwrap();
        let ids = |r: &[procline_core::selection::VariantScore]| r.iter().map(|s| (s.variant_id.clone(), s.score.clone())).collect::<Vec<_>>();
        prop_assert_eq!(ids(&a), ids(&b));
    }

    #[test]
    fn full_ranking_is_a_permutation(base in arb_base(), query in arb_query()) {
        let ranking = select_top_k(&base, &query, base.len(), true).unwrap();
        let mut got: Vec<String> = ranking.iter().map(|s| s.variant_id.clone()).collect();
        let mut want: Vec<String> = base.iter().map(|v| v.id.clone()).collect();
        got.sort();
        want.sort();
        prop_assert_eq!(got, want);
    }

    #[test]
    fn improving_one_match_never_lowers_the_score(base in arb_base(), query in arb_query(), which in 0usize..3) {
        // Setting one characteristic to the queried value raises its match
        // to 1 and leaves the others (and the ordinal ranges) unchanged,
        // provided the range is recomputed on the original base.
        let ctx = ScoringContext::from_base(&base, true);
        let variant = &base[0];
        let mut improved = variant.clone();
        improved.characteristics.insert(query[which].name.clone(), query[which].value.clone());
        let before = score_variant(variant, &query, &ctx).unwrap().score;
        let after = score_variant(&improved, &query, &ctx).unwrap().score;
        prop_assert!(after >= before);
    }
}
