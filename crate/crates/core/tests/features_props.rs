use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use selfscope_core::features::{preprocess, Lexicon, NormalizationStats, TokenStream, Vocabulary};

fn corpora() -> impl Strategy<Value = Vec<Vec<String>>> {
    prop::collection::vec(
        prop::collection::vec(prop::sample::select(vec!["a", "b", "c", "d", "we", "i"]).prop_map(String::from), 0..12),
        5,
    )
}

/// Counts every n-gram directly and applies the idf formula.
fn oracle(docs: &[Vec<String>], min_df: usize) -> (Vec<String>, Vec<BTreeMap<String, f64>>) {
    let grams = |d: &Vec<String>| -> Vec<String> {
        let mut g: Vec<String> = d.clone();
        for i in 1..d.len() {
            g.push(format!("{} {}", d[i - 1], d[i]));
        }
        g
    };
    let mut df: BTreeMap<String, usize> = BTreeMap::new();
    for d in docs {
        for g in grams(d).into_iter().collect::<BTreeSet<_>>() {
            *df.entry(g).or_default() += 1;
        }
    }
    let vocab: Vec<String> = df.iter().filter(|(_, &c)| c >= min_df).map(|(g, _)| g.clone()).collect();
    let n = docs.len() as f64;
    let rows = docs
        .iter()
        .map(|d| {
            let mut tf: BTreeMap<String, f64> = BTreeMap::new();
            for g in grams(d) {
                *tf.entry(g).or_default() += 1.0;
            }
            tf.into_iter()
                .filter(|(g, _)| vocab.contains(g))
                .map(|(g, c)| {
                    let idf = ((1.0 + n) / (1.0 + df[&g] as f64)).ln() + 1.0;
                    (g, c * idf)
                })
                .collect()
        })
        .collect();
    (vocab, rows)
}

proptest! {
    #[test]
    fn tfidf_matches_brute_force(docs in corpora(), min_df in 1usize..3) {
        let streams: Vec<TokenStream> = docs.iter().map(|d| d.iter().cloned().collect()).collect();
        let v = Vocabulary::fit(&streams, &[1, 2], min_df).unwrap();
        let (vocab, rows) = oracle(&docs, min_df);
        prop_assert_eq!(&v.terms, &vocab);
        for (s, expected) in streams.iter().zip(rows) {
            let got = v.tfidf(s);
            for (i, term) in v.terms.iter().enumerate() {
                let want = expected.get(term).copied().unwrap_or(0.0);
                prop_assert!((got.get(i) - want).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn lexicon_proportions_are_bounded(tokens in prop::collection::vec("[a-z]{1,6}", 0..30)) {
        let lex = Lexicon::demo();
        let stream: TokenStream = tokens.into_iter().collect();
        for p in lex.proportions(&stream) {
            prop_assert!((0.0..=1.0).contains(&p));
        }
    }

    #[test]
    fn zscore_standardizes_fitting_rows(
        rows in prop::collection::vec(prop::collection::vec(-1e3f64..1e3, 4), 2..40),
        constant in -5.0f64..5.0,
    ) {
        let rows: Vec<Vec<f64>> = rows.into_iter().map(|mut r| { r[3] = constant; r }).collect();
        let stats = NormalizationStats::fit(&rows);
        let z: Vec<Vec<f64>> = rows.iter().map(|r| stats.apply(r)).collect();
        let n = rows.len() as f64;
        for j in 0..4 {
            let column: Vec<f64> = z.iter().map(|r| r[j]).collect();
            if stats.std[j] == 0.0 {
                prop_assert!(column.iter().all(|&v| v == 0.0));
                continue;
            }
            let mean = column.iter().sum::<f64>() / n;
            let var = column.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            prop_assert!(mean.abs() <= 1e-9);
            prop_assert!((var - 1.0).abs() <= 1e-9);
        }
        prop_assert_eq!(stats.std[3], 0.0);
    }

    #[test]
    fn preprocess_is_idempotent(text in "\\PC{0,60}") {
        let once = preprocess(&text);
        let again = preprocess(&once.0.join(" "));
        prop_assert_eq!(once, again);
    }
}
