//! Posterior-regularized training with the l1/linf word-tag ambiguity
//! penalty: the penalized objective, the dual E-step solved by blockwise
//! projected gradient with simplex projection, and the modified-emission
//! construction of the auxiliary posterior q.

use crate::corpus::{Corpus, Vocabulary};
use crate::error::{Error, Result};
use crate::hmm::{forward_backward, EmissionModifier, HmmModel, PosteriorSet};
use crate::optimize::{
    projected_gradient_ascent, simplex_project, ProjGradConfig, ProjGradStatus,
};
use crate::train::{apply_mstep, expected_counts, TraceRow, TrainConfig, TrainTrace};

/// Occurrence slots of every regulated word type (count >= min-occurrence).
///
/// Dual variables are indexed `(word, tag, occurrence)`; occurrences are in
/// corpus order, which is immaterial because the penalty is permutation
/// invariant over them.
#[derive(Clone, Debug)]
pub struct ConstraintIndex {
    pub words: Vec<RegulatedWord>,
    pub min_occurrence: u32,
}

#[derive(Clone, Debug)]
pub struct RegulatedWord {
    pub type_id: usize,
    /// `(sentence, position)` of each occurrence, in corpus order.
    pub slots: Vec<(usize, usize)>,
}

impl ConstraintIndex {
    pub fn build(corpus: &Corpus, vocab: &Vocabulary, min_occurrence: u32) -> Self {
        let mut words = Vec::new();
        for type_id in 0..vocab.len() {
            if vocab.count(type_id) >= min_occurrence {
                let slots = vocab
                    .occurrences(type_id)
                    .iter()
                    .map(|&flat| corpus.locate(flat as usize))
                    .collect();
                words.push(RegulatedWord { type_id, slots });
            }
        }
        ConstraintIndex {
            words,
            min_occurrence,
        }
    }

    pub fn num_regulated(&self) -> usize {
        self.words.len()
    }
}

/// Nonnegative dual multipliers, one per (word, tag, occurrence), with each
/// (word, tag) block bounded by `sum_j lambda <= sigma`.
#[derive(Clone, Debug, PartialEq)]
pub struct DualVariables {
    /// `lambda[w][v][j]` parallel to `ConstraintIndex::words`.
    pub lambda: Vec<Vec<Vec<f64>>>,
    pub sigma: f64,
}

impl DualVariables {
    pub fn zeros(index: &ConstraintIndex, num_states: usize, sigma: f64) -> Self {
        DualVariables {
            lambda: index
                .words
                .iter()
                .map(|w| vec![vec![0.0; w.slots.len()]; num_states])
                .collect(),
            sigma,
        }
    }

    pub fn is_feasible(&self) -> bool {
        self.lambda.iter().all(|word| {
            word.iter().all(|block| {
                block.iter().all(|&l| l >= 0.0 && l.is_finite())
                    && block.iter().sum::<f64>() <= self.sigma + 1e-12 * self.sigma.max(1.0)
            })
        })
    }
}

/// Keep the previous outer iteration's multipliers as the next starting
/// point; feasibility is closed under this (the set does not change).
pub fn warm_start_duals(prev: DualVariables) -> DualVariables {
    prev
}

/// Per-word ambiguity values and their total over regulated words.
#[derive(Clone, Debug)]
pub struct AmbiguityReport {
    /// `(type_id, value)` per regulated word, in index order.
    pub per_word: Vec<(usize, f64)>,
    pub total: f64,
}

impl AmbiguityReport {
    pub fn average(&self) -> f64 {
        if self.per_word.is_empty() {
            0.0
        } else {
            self.total / self.per_word.len() as f64
        }
    }
}

/// l1/linf ambiguity of soft posteriors: per word, the sum over tags of the
/// maximum per-occurrence posterior of that tag.
pub fn ambiguity_penalty(post: &PosteriorSet, index: &ConstraintIndex) -> AmbiguityReport {
    let j = post.num_states;
    let mut per_word = Vec::with_capacity(index.words.len());
    let mut total = 0.0;
    for word in &index.words {
        let mut value = 0.0;
        for tag in 0..j {
            let mut best = 0.0f64;
            for &(s, i) in &word.slots {
                best = best.max(post.gamma(s, i)[tag]);
            }
            value += best;
        }
        per_word.push((word.type_id, value));
        total += value;
    }
    AmbiguityReport { per_word, total }
}

/// Hard-assignment ambiguity: the number of distinct tags used per word.
pub fn ambiguity_penalty_hard(
    tags: &[Vec<usize>],
    num_states: usize,
    index: &ConstraintIndex,
) -> AmbiguityReport {
    let mut per_word = Vec::with_capacity(index.words.len());
    let mut total = 0.0;
    let mut seen = vec![false; num_states];
    for word in &index.words {
        seen.fill(false);
        let mut distinct = 0usize;
        for &(s, i) in &word.slots {
            let t = tags[s][i];
            if !seen[t] {
                seen[t] = true;
                distinct += 1;
            }
        }
        per_word.push((word.type_id, distinct as f64));
        total += distinct as f64;
    }
    AmbiguityReport { per_word, total }
}

#[derive(Clone, Debug)]
pub struct PrConfig {
    pub sigma: f64,
    pub min_occurrence: u32,
    pub em_warmup: usize,
    pub pr_iterations: usize,
    pub dual: ProjGradConfig,
}

impl Default for PrConfig {
    fn default() -> Self {
        PrConfig {
            sigma: 32.0,
            min_occurrence: 10,
            em_warmup: 30,
            pr_iterations: 170,
            dual: ProjGradConfig::default(),
        }
    }
}

impl PrConfig {
    fn validate(&self) -> Result<()> {
        if self.sigma <= 0.0 {
            return Err(Error::Config("sigma must be positive".into()));
        }
        Ok(())
    }
}

fn flatten(duals: &DualVariables) -> Vec<f64> {
    duals
        .lambda
        .iter()
        .flat_map(|word| word.iter().flat_map(|block| block.iter().copied()))
        .collect()
}

fn unflatten(flat: &[f64], like: &DualVariables) -> DualVariables {
    let mut out = like.clone();
    let mut k = 0;
    for word in out.lambda.iter_mut() {
        for block in word.iter_mut() {
            for slot in block.iter_mut() {
                *slot = flat[k];
                k += 1;
            }
        }
    }
    out
}

fn modifier_from(flat: &[f64], index: &ConstraintIndex, corpus: &Corpus, j: usize) -> EmissionModifier {
    let mut modifier = EmissionModifier::identity(corpus, j);
    let mut k = 0;
    for word in &index.words {
        for tag in 0..j {
            for &(s, i) in &word.slots {
                modifier.set_log(s, i, tag, -flat[k]);
                k += 1;
            }
        }
    }
    modifier
}

/// Project each (word, tag) block onto `{lambda >= 0, sum <= sigma}`.
fn project_blocks(flat: &[f64], index: &ConstraintIndex, j: usize, sigma: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(flat.len());
    let mut k = 0;
    for word in &index.words {
        let len = word.slots.len();
        for _tag in 0..j {
            let projected = simplex_project(&flat[k..k + len], sigma);
            out.extend_from_slice(&projected);
            k += len;
        }
    }
    out
}

#[derive(Clone, Debug)]
pub struct DualStats {
    pub iterations: usize,
    pub status: ProjGradStatus,
    /// Log normalizer of the modified chain at the solution.
    pub modified_loglik: f64,
}

/// Dual E-step: maximize the concave dual objective
/// `-log sum_Y p(Y|X) exp(-lambda . phi)` over feasible multipliers by
/// projected gradient; the gradient is `E_q[phi]`, computed by running
/// forward-backward with the emission multipliers `exp(-lambda)`. Returns
/// the multipliers, the auxiliary posterior `q`, and solver statistics.
pub fn pr_estep(
    model: &HmmModel,
    corpus: &Corpus,
    index: &ConstraintIndex,
    lambda0: &DualVariables,
    config: &ProjGradConfig,
) -> Result<(DualVariables, PosteriorSet, DualStats)> {
    if !lambda0.is_feasible() {
        return Err(Error::Config("infeasible starting dual variables".into()));
    }
    let j = model.num_states;
    let sigma = lambda0.sigma;
    let x0 = flatten(lambda0);

    // The dual objective up to a constant: minus the modified log normalizer.
    // Errors inside the closure surface as NaN and are rechecked afterwards.
    let inner_error = std::cell::RefCell::new(None);
    let objective = |flat: &[f64], grad: &mut [f64]| -> f64 {
        let modifier = modifier_from(flat, index, corpus, j);
        let post = match forward_backward(model, corpus, Some(&modifier)) {
            Ok(p) => p,
            Err(e) => {
                *inner_error.borrow_mut() = Some(e);
                grad.fill(f64::NAN);
                return f64::NAN;
            }
        };
        let mut k = 0;
        for word in &index.words {
            for tag in 0..j {
                for &(s, i) in &word.slots {
                    grad[k] = post.gamma(s, i)[tag];
                    k += 1;
                }
            }
        }
        -post.loglik
    };

    let result = projected_gradient_ascent(
        objective,
        |flat| project_blocks(flat, index, j, sigma),
        &x0,
        config,
    )
    .map_err(|e| inner_error.borrow_mut().take().unwrap_or(e))?;

    let duals = unflatten(&result.x, lambda0);
    debug_assert!(duals.is_feasible());
    let modifier = modifier_from(&result.x, index, corpus, j);
    let q = forward_backward(model, corpus, Some(&modifier))?;
    let stats = DualStats {
        iterations: result.iterations,
        status: result.status,
        modified_loglik: q.loglik,
    };
    Ok((duals, q, stats))
}

/// `sum_wvj lambda_wvj * E_q[phi_wvj]`, the dual-primal coupling term.
fn lambda_dot_expectation(duals: &DualVariables, index: &ConstraintIndex, q: &PosteriorSet) -> f64 {
    let mut total = 0.0;
    for (word, lam) in index.words.iter().zip(&duals.lambda) {
        for (tag, block) in lam.iter().enumerate() {
            for (&(s, i), &l) in word.slots.iter().zip(block) {
                if l != 0.0 {
                    total += l * q.gamma(s, i)[tag];
                }
            }
        }
    }
    total
}

/// Posterior-regularized training: `em_warmup` standard EM iterations, then
/// `pr_iterations` rounds of dual E-step followed by an M-step on `q`.
///
/// The trace gains three columns: the penalty total of `q`, the penalized
/// objective value, and the dual iteration count.
pub fn pr_train(
    corpus: &Corpus,
    model: HmmModel,
    index: &ConstraintIndex,
    pr_config: &PrConfig,
    train_config: &TrainConfig,
) -> Result<(HmmModel, TrainTrace)> {
    pr_config.validate()?;
    let warmup_config = TrainConfig {
        iterations: pr_config.em_warmup.max(1),
        rel_tol: 0.0,
        ..train_config.clone()
    };
    let (mut model, mut trace) = if pr_config.em_warmup > 0 {
        crate::train::em_train(corpus, model, &warmup_config)?
    } else {
        (model, TrainTrace::default())
    };

    let v = model.num_types();
    let mut duals = DualVariables::zeros(index, model.num_states, pr_config.sigma);

    for k in 1..=pr_config.pr_iterations {
        let t0 = std::time::Instant::now();
        let plain = forward_backward(&model, corpus, None)?;
        let loglik = plain.loglik;

        let (new_duals, q, stats) = pr_estep(&model, corpus, index, &duals, &pr_config.dual)?;
        duals = warm_start_duals(new_duals);

        let penalty = ambiguity_penalty(&q, index).total;
        // Penalized objective at (theta, q): L - KL(q||p) - sigma * penalty,
        // with KL(q||p) = -lambda.E_q[phi] - (modified - plain loglik).
        let coupling = lambda_dot_expectation(&duals, index, &q);
        let objective18 = stats.modified_loglik + coupling - pr_config.sigma * penalty;

        let counts = expected_counts(&q, corpus, v);
        let iter = pr_config.em_warmup + k;
        apply_mstep(&counts, &mut model, train_config, iter)?;

        trace.rows.push(TraceRow {
            iter,
            loglik,
            bound: objective18,
            seconds: t0.elapsed().as_secs_f64(),
            penalty: Some(penalty),
            objective18: Some(objective18),
            dual_iters: Some(stats.iterations),
        });
    }
    Ok((model, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_corpus, PreprocessPolicy};
    use crate::oracles;
    use crate::train::{em_train, init_model};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_corpus() -> (Corpus, Vocabulary) {
        // "a" occurs 4 times and is the regulated word.
        let sentences: Vec<Vec<String>> = vec![
            vec!["a".into(), "b".into(), "a".into()],
            vec!["c".into(), "a".into(), "a".into()],
        ];
        build_corpus("pr-toy", &sentences, None, &PreprocessPolicy::raw()).unwrap()
    }

    #[test]
    fn constraint_index_partitions_occurrences() {
        let (corpus, vocab) = small_corpus();
        let index = ConstraintIndex::build(&corpus, &vocab, 2);
        assert_eq!(index.num_regulated(), 1);
        let word = &index.words[0];
        assert_eq!(vocab.type_str(word.type_id), "a");
        assert_eq!(word.slots, vec![(0, 0), (0, 2), (1, 1), (1, 2)]);
    }

    #[test]
    fn hard_ambiguity_counts_distinct_tags() {
        let (corpus, vocab) = small_corpus();
        let index = ConstraintIndex::build(&corpus, &vocab, 2);
        // All "a" occurrences tagged 0 -> penalty 1.
        let tags = vec![vec![0, 1, 0], vec![1, 0, 0]];
        let report = ambiguity_penalty_hard(&tags, 2, &index);
        assert_eq!(report.total, 1.0);
        // Mixed tags -> 2.
        let tags = vec![vec![0, 1, 1], vec![1, 0, 0]];
        let report = ambiguity_penalty_hard(&tags, 2, &index);
        assert_eq!(report.total, 2.0);
    }

    #[test]
    fn soft_ambiguity_sums_column_maxima() {
        let (corpus, vocab) = small_corpus();
        // Regulate a 2-occurrence word: use "a" with min-occ 4 -> only "a".
        let index = ConstraintIndex::build(&corpus, &vocab, 4);
        assert_eq!(index.num_regulated(), 1);
        // Hand-built posteriors: occurrences of "a" get [0.6,0.4], [0.3,0.7],
        // [0.5,0.5], [0.2,0.8]; maxima 0.6 and 0.8 -> penalty 1.4.
        let unary = vec![
            vec![vec![0.6, 0.4], vec![1.0, 0.0], vec![0.3, 0.7]],
            vec![vec![1.0, 0.0], vec![0.5, 0.5], vec![0.2, 0.8]],
        ];
        let post = PosteriorSet {
            unary,
            pairwise: vec![vec![vec![0.0; 4]; 2], vec![vec![0.0; 4]; 2]],
            loglik: 0.0,
            num_states: 2,
        };
        let report = ambiguity_penalty(&post, &index);
        assert!((report.total - 1.4).abs() < 1e-12);
    }

    #[test]
    fn soft_ambiguity_matches_max_then_sum_oracle() {
        use rand::Rng;
        let (corpus, vocab) = small_corpus();
        let index = ConstraintIndex::build(&corpus, &vocab, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let j = 3;
        let unary: Vec<Vec<Vec<f64>>> = corpus
            .sentences()
            .iter()
            .map(|s| {
                (0..s.len())
                    .map(|_| {
                        let mut row: Vec<f64> =
                            (0..j).map(|_| rng.random_range(0.01..1.0)).collect();
                        let t: f64 = row.iter().sum();
                        row.iter_mut().for_each(|p| *p /= t);
                        row
                    })
                    .collect()
            })
            .collect();
        let post = PosteriorSet {
            unary: unary.clone(),
            pairwise: corpus
                .sentences()
                .iter()
                .map(|s| vec![vec![0.0; j * j]; s.len() - 1])
                .collect(),
            loglik: 0.0,
            num_states: j,
        };
        let report = ambiguity_penalty(&post, &index);
        // Independent recomputation.
        let mut expected = 0.0;
        for word in &index.words {
            for tag in 0..j {
                let best = word
                    .slots
                    .iter()
                    .map(|&(s, i)| unary[s][i][tag])
                    .fold(f64::NEG_INFINITY, f64::max);
                expected += best;
            }
        }
        assert_eq!(report.total, expected);
    }

    #[test]
    fn zero_duals_reproduce_plain_posteriors() {
        let (corpus, vocab) = small_corpus();
        let index = ConstraintIndex::build(&corpus, &vocab, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let model = oracles::random_multinomial_model(&mut rng, 2, vocab.len());
        let duals = DualVariables::zeros(&index, 2, 32.0);
        let flat = flatten(&duals);
        let modifier = modifier_from(&flat, &index, &corpus, 2);
        let modified = forward_backward(&model, &corpus, Some(&modifier)).unwrap();
        let plain = forward_backward(&model, &corpus, None).unwrap();
        assert_eq!(modified, plain);
    }

    #[test]
    fn infeasible_start_is_rejected() {
        let (corpus, vocab) = small_corpus();
        let index = ConstraintIndex::build(&corpus, &vocab, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let model = oracles::random_multinomial_model(&mut rng, 2, vocab.len());
        let mut duals = DualVariables::zeros(&index, 2, 1.0);
        duals.lambda[0][0][0] = 5.0; // block sum exceeds sigma
        assert!(matches!(
            pr_estep(&model, &corpus, &index, &duals, &ProjGradConfig::default()),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn modified_chain_matches_enumeration() {
        // q proportional to p * exp(-lambda . phi), verified by enumeration.
        use rand::Rng;
        let (corpus, vocab) = small_corpus();
        let index = ConstraintIndex::build(&corpus, &vocab, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let j = 2;
        let model = oracles::random_multinomial_model(&mut rng, j, vocab.len());
        let mut duals = DualVariables::zeros(&index, j, 8.0);
        for word in duals.lambda.iter_mut() {
            for block in word.iter_mut() {
                for l in block.iter_mut() {
                    *l = rng.random_range(0.0..1.5);
                }
            }
        }
        assert!(duals.is_feasible());
        let flat = flatten(&duals);
        let modifier = modifier_from(&flat, &index, &corpus, j);
        let post = forward_backward(&model, &corpus, Some(&modifier)).unwrap();

        // Enumeration with the same log multipliers.
        let log_mod: Vec<Vec<Vec<f64>>> = corpus
            .sentences()
            .iter()
            .enumerate()
            .map(|(s, sent)| {
                (0..sent.len())
                    .map(|i| (0..j).map(|y| modifier.log(s, i, y)).collect())
                    .collect()
            })
            .collect();
        let oracle = oracles::enumerate_posteriors(&model, &corpus, Some(&log_mod));
        assert!((post.loglik - oracle.loglik).abs() < 1e-10);
        for (s, sent) in corpus.sentences().iter().enumerate() {
            for i in 0..sent.len() {
                for y in 0..j {
                    assert!((post.gamma(s, i)[y] - oracle.unary[s][i][y]).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn estep_reduces_ambiguity_and_matches_primal_oracle() {
        let (corpus, vocab) = small_corpus();
        let index = ConstraintIndex::build(&corpus, &vocab, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let j = 2;
        let model = oracles::random_multinomial_model(&mut rng, j, vocab.len());
        let sigma = 1.5;
        let duals = DualVariables::zeros(&index, j, sigma);
        let config = ProjGradConfig {
            max_iters: 3000,
            tol: 1e-9,
            ..Default::default()
        };
        let (solved, q, _) = pr_estep(&model, &corpus, &index, &duals, &config).unwrap();
        assert!(solved.is_feasible());

        let plain = forward_backward(&model, &corpus, None).unwrap();
        let before = ambiguity_penalty(&plain, &index).total;
        let after = ambiguity_penalty(&q, &index).total;
        assert!(after <= before + 1e-9, "penalty grew: {before} -> {after}");

        // Primal oracle on the enumerated joint.
        let oracle = oracles::primal_sparsity_oracle(
            &model,
            &corpus,
            &index.words[0].slots,
            sigma,
            500_000,
        );
        for (s, sent) in corpus.sentences().iter().enumerate() {
            for i in 0..sent.len() {
                for y in 0..j {
                    let oracle_marginal: f64 = oracle.sequences[s]
                        .iter()
                        .zip(&oracle.q[s])
                        .filter(|(tags, _)| tags[i] == y)
                        .map(|(_, w)| w)
                        .sum();
                    assert!(
                        (q.gamma(s, i)[y] - oracle_marginal).abs() < 1e-4,
                        "marginal mismatch at ({s},{i},{y}): {} vs {}",
                        q.gamma(s, i)[y],
                        oracle_marginal
                    );
                }
            }
        }
    }

    #[test]
    fn dual_objective_nondecreasing_and_sigma_monotone() {
        let (corpus, vocab) = small_corpus();
        let index = ConstraintIndex::build(&corpus, &vocab, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let model = oracles::random_multinomial_model(&mut rng, 2, vocab.len());

        let mut last_penalty = f64::INFINITY;
        for sigma in [0.1, 0.5, 1.0, 2.0, 4.0] {
            let duals = DualVariables::zeros(&index, 2, sigma);
            let config = ProjGradConfig {
                max_iters: 2000,
                tol: 1e-9,
                ..Default::default()
            };
            let (_, q, _) = pr_estep(&model, &corpus, &index, &duals, &config).unwrap();
            let penalty = ambiguity_penalty(&q, &index).total;
            assert!(
                penalty <= last_penalty + 1e-6,
                "penalty not monotone in sigma: {last_penalty} -> {penalty}"
            );
            last_penalty = penalty;
        }
    }

    #[test]
    fn pr_with_zero_iterations_equals_plain_em() {
        let (corpus, vocab) = small_corpus();
        let index = ConstraintIndex::build(&corpus, &vocab, 2);
        let train_config = TrainConfig {
            seed: 3,
            rel_tol: 0.0,
            ..Default::default()
        };
        let pr_config = PrConfig {
            em_warmup: 5,
            pr_iterations: 0,
            ..Default::default()
        };
        let model = init_model(2, &vocab, None, &train_config);
        let (pr_model, _) =
            pr_train(&corpus, model.clone(), &index, &pr_config, &train_config).unwrap();
        let em_config = TrainConfig {
            iterations: 5,
            rel_tol: 0.0,
            ..train_config
        };
        let (em_model, _) = em_train(&corpus, model, &em_config).unwrap();
        assert_eq!(pr_model, em_model);
    }

    #[test]
    fn pr_objective_nondecreasing_across_outer_iterations() {
        let (corpus, vocab, _) = crate::synth::synth_generate(&crate::synth::SynthConfig {
            states: 2,
            vocab_size: 10,
            tokens: 300,
            sparsity: 1.0,
            seed: 6,
            ..Default::default()
        })
        .unwrap();
        let index = ConstraintIndex::build(&corpus, &vocab, 5);
        let train_config = TrainConfig {
            seed: 1,
            rel_tol: 0.0,
            ..Default::default()
        };
        let pr_config = PrConfig {
            sigma: 2.0,
            em_warmup: 5,
            pr_iterations: 10,
            dual: ProjGradConfig {
                max_iters: 1500,
                tol: 1e-8,
                ..Default::default()
            },
            ..Default::default()
        };
        let model = init_model(2, &vocab, None, &train_config);
        let (_, trace) = pr_train(&corpus, model, &index, &pr_config, &train_config).unwrap();
        let objectives: Vec<f64> = trace
            .rows
            .iter()
            .filter_map(|r| r.objective18)
            .collect();
        assert_eq!(objectives.len(), 10);
        for pair in objectives.windows(2) {
            assert!(
                pair[1] >= pair[0] - 1e-6 * pair[0].abs().max(1.0),
                "objective decreased: {} -> {}",
                pair[0],
                pair[1]
            );
        }
    }

    #[test]
    fn warm_started_duals_reduce_dual_iterations() {
        let (corpus, vocab, _) = crate::synth::synth_generate(&crate::synth::SynthConfig {
            states: 2,
            vocab_size: 8,
            tokens: 200,
            sparsity: 1.0,
            seed: 12,
            ..Default::default()
        })
        .unwrap();
        let index = ConstraintIndex::build(&corpus, &vocab, 5);
        let train_config = TrainConfig {
            seed: 2,
            ..Default::default()
        };
        let model = init_model(2, &vocab, None, &train_config);
        let (model, _) = em_train(
            &corpus,
            model,
            &TrainConfig {
                iterations: 5,
                rel_tol: 0.0,
                ..train_config
            },
        )
        .unwrap();
        let config = ProjGradConfig {
            max_iters: 5000,
            tol: 1e-8,
            ..Default::default()
        };
        let cold = DualVariables::zeros(&index, 2, 2.0);
        let (solved, _, cold_stats) = pr_estep(&model, &corpus, &index, &cold, &config).unwrap();
        let (_, _, warm_stats) =
            pr_estep(&model, &corpus, &index, &warm_start_duals(solved), &config).unwrap();
        assert!(
            warm_stats.iterations <= cold_stats.iterations,
            "warm start took {} vs cold {}",
            warm_stats.iterations,
            cold_stats.iterations
        );
    }
}
