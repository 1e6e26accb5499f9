mod common;

use proptest::prelude::*;
use proptest::sample::select;

use typocorpus::features::{featurize, levenshtein, norm_edit_distance, numeric_only};
use typocorpus::lm::ModelSet;
use typocorpus::model::Edit;

use common::oracles;

const POOL: &[char] = &[
    'a', 'b', 'c', ' ', 'é', 'e', '\u{301}', '中', '😀', '1', '9',
];

fn word(max: usize) -> impl Strategy<Value = String> {
    prop::collection::vec(select(POOL), 0..=max).prop_map(|v| v.into_iter().collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn matches_recursive_oracle(x in word(20), y in word(20)) {
        prop_assert_eq!(levenshtein(&x, &y), oracles::edit_distance(&x, &y));
    }

    #[test]
    fn long_lines_match_oracle(x in word(120), y in word(120)) {
        prop_assert_eq!(levenshtein(&x, &y), oracles::edit_distance(&x, &y));
    }

    #[test]
    fn metric_axioms(x in word(12), y in word(12), z in word(12)) {
        prop_assert_eq!(norm_edit_distance(&x, &x), 0.0);
        prop_assert_eq!(norm_edit_distance(&x, &y), norm_edit_distance(&y, &x));
        let d = norm_edit_distance(&x, &y);
        prop_assert!((0.0..=1.0).contains(&d));
        prop_assert_eq!(d == 0.0, x == y);
        prop_assert!(levenshtein(&x, &z) <= levenshtein(&x, &y) + levenshtein(&y, &z));
    }

    #[test]
    fn distance_bounded_by_lengths(x in word(15), y in word(15)) {
        let (lx, ly) = (x.chars().count(), y.chars().count());
        let d = levenshtein(&x, &y);
        prop_assert!(d >= lx.abs_diff(ly));
        prop_assert!(d <= lx.max(ly));
    }

    #[test]
    fn digit_only_changes_are_numeric(prefix in "[a-z ]{0,8}", a in "[0-9]{1,4}", b in "[0-9]{1,4}", suffix in "[a-z ]{0,8}") {
        prop_assume!(a != b);
        let x = format!("{prefix}{a}{suffix}");
        let y = format!("{prefix}{b}{suffix}");
        prop_assert!(numeric_only(&x, &y));
    }
}

#[test]
fn unicode_scalars_not_bytes() {
    // precomposed vs decomposed e-acute: one substitution plus one deletion
    assert_eq!(levenshtein("caf\u{e9}", "cafe\u{301}"), 2);
    assert_eq!(levenshtein("日本語", "日本人"), 1);
    assert_eq!(levenshtein("😀", "😃"), 1);
}

#[test]
fn numeric_only_examples() {
    assert!(numeric_only("version 1.2", "version 1.3"));
    assert!(numeric_only("port 80", "port 8080"));
    assert!(!numeric_only("teh", "the"));
    assert!(!numeric_only("v1", "v2a"));
    assert!(!numeric_only("same", "same"));
}

#[test]
fn featurize_is_pure() {
    let lm = common::eng_lm();
    let s = "The quick brown fox";
    assert_eq!(lm.perplexity(s).unwrap() / lm.perplexity(s).unwrap(), 1.0);

    let mut models = ModelSet::new();
    models.insert("eng", lm);
    let mut edit = Edit::new("This is teh manual.", "This is the manual.");
    edit.src.lang = Some("eng".into());
    edit.tgt.lang = Some("eng".into());
    let mut again = edit.clone();
    let a = featurize(&mut edit, &models).unwrap();
    let b = featurize(&mut again, &models).unwrap();
    assert_eq!(a.ppl_ratio.to_bits(), b.ppl_ratio.to_bits());
    assert_eq!(edit, again);
    assert!(
        a.ppl_ratio < 1.0,
        "correction should lower perplexity: {a:?}"
    );
    assert!((a.norm_dist - 2.0 / 19.0).abs() < 1e-12);
    assert!(!a.numeric_only);
}
