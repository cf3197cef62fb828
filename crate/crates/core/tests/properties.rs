//! Property tests for invariants that hold over arbitrary inputs rather
//! than chosen instances.

use proptest::prelude::*;

use sparsepos::corpus::{build_corpus, PreprocessPolicy};
use sparsepos::eval::{map_11, map_1many, vi, vmeasure, ContingencyTable};
use sparsepos::optimize::simplex_project;

proptest! {
    #[test]
    fn projection_is_feasible_and_idempotent(
        v in proptest::collection::vec(-10.0f64..10.0, 1..20),
        sigma in 0.01f64..20.0,
    ) {
        let p = simplex_project(&v, sigma);
        prop_assert!(p.iter().all(|&x| x >= 0.0));
        prop_assert!(p.iter().sum::<f64>() <= sigma + 1e-12 * sigma.max(1.0) + 1e-12);
        let p2 = simplex_project(&p, sigma);
        prop_assert_eq!(p, p2);
    }

    #[test]
    fn projection_never_beaten_by_scaled_clip(
        v in proptest::collection::vec(-5.0f64..5.0, 1..10),
        sigma in 0.1f64..5.0,
        scale in 0.0f64..1.0,
    ) {
        // The rescaled clip is always feasible; the projection must be at
        // least as close to v.
        let p = simplex_project(&v, sigma);
        let clip: Vec<f64> = v.iter().map(|&x| x.max(0.0)).collect();
        let total: f64 = clip.iter().sum();
        let factor = if total > sigma { scale * sigma / total } else { scale };
        let candidate: Vec<f64> = clip.iter().map(|c| c * factor).collect();
        let dp: f64 = v.iter().zip(&p).map(|(a, b)| (a - b) * (a - b)).sum();
        let dc: f64 = v.iter().zip(&candidate).map(|(a, b)| (a - b) * (a - b)).sum();
        prop_assert!(dp <= dc + 1e-9);
    }

    #[test]
    fn one_one_never_exceeds_one_many(
        rows in proptest::collection::vec(
            proptest::collection::vec(0u32..40, 1..6),
            1..6,
        ),
    ) {
        let cols = rows[0].len();
        let counts: Vec<Vec<f64>> = rows
            .iter()
            .map(|r| r.iter().cycle().take(cols).map(|&c| c as f64).collect())
            .collect();
        prop_assume!(counts.iter().flatten().sum::<f64>() > 0.0);
        let table = ContingencyTable::from_counts(counts).unwrap();
        prop_assert!(map_11(&table).1 <= map_1many(&table).1 + 1e-12);
        prop_assert!(vi(&table) >= -1e-12);
        let v = vmeasure(&table);
        prop_assert!((-1e-12..=1.0 + 1e-12).contains(&v));
    }

    #[test]
    fn preprocessing_preserves_tokens_and_is_idempotent(
        words in proptest::collection::vec("[A-Za-z]{1,6}", 1..30),
    ) {
        let sentences = vec![words];
        let policy = PreprocessPolicy::multinomial();
        let (c1, v1) = build_corpus("p", &sentences, None, &policy).unwrap();
        prop_assert_eq!(c1.num_tokens(), sentences[0].len());
        prop_assert!(v1.len() <= sentences[0].len());
        // Idempotence: re-applying the policy to the processed strings is a
        // no-op on ids and types.
        let processed: Vec<Vec<String>> = c1
            .sentences()
            .iter()
            .map(|s| s.iter().map(|&t| v1.type_str(t).to_string()).collect())
            .collect();
        let (c2, v2) = build_corpus("p2", &processed, None, &policy).unwrap();
        prop_assert_eq!(c1.sentences(), c2.sentences());
        prop_assert_eq!(v1.types(), v2.types());
    }
}
