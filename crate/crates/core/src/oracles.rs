//! Reference implementations used by the test suites.
//!
//! Everything here is deliberately naive (exhaustive enumeration, direct
//! summation, finite differences) and independent of the inference and
//! training code paths it checks.

use crate::corpus::Corpus;
use crate::hmm::{Emission, HmmModel};

/// Emission probabilities computed directly from the raw parameters, with
/// normal-space summation for the max-ent normalizer.
fn direct_emission_probs(model: &HmmModel) -> Vec<Vec<f64>> {
    match &model.emission {
        Emission::Multinomial { probs } => probs.clone(),
        Emission::MaxEnt { theta, features } => {
            let v = features.num_types();
            let f = features.num_features();
            let mut table = vec![vec![0.0; model.num_states]; v];
            for tag in 0..model.num_states {
                let block = &theta[tag * f..(tag + 1) * f];
                let scores: Vec<f64> = (0..v)
                    .map(|x| {
                        features
                            .row(x)
                            .iter()
                            .map(|&k| block[k as usize])
                            .sum::<f64>()
                            .exp()
                    })
                    .collect();
                let z: f64 = scores.iter().sum();
                for x in 0..v {
                    table[x][tag] = scores[x] / z;
                }
            }
            table
        }
    }
}

/// Joint probability of one tag sequence for one sentence, including
/// optional per-token emission multipliers (given in log space).
fn joint_prob(
    model: &HmmModel,
    emission: &[Vec<f64>],
    tokens: &[usize],
    tags: &[usize],
    log_modifier: Option<&[Vec<f64>]>,
) -> f64 {
    let mut p = 1.0;
    let mut prev = model.start_row();
    for (i, (&x, &y)) in tokens.iter().zip(tags).enumerate() {
        let mut e = emission[x][y];
        if let Some(m) = log_modifier {
            e *= m[i][y].exp();
        }
        p *= model.transitions[prev][y] * e;
        prev = y;
    }
    p
}

/// Log joint probability of a tag sequence (no modifier).
pub fn sequence_log_prob(model: &HmmModel, tokens: &[usize], tags: &[usize]) -> f64 {
    let emission = direct_emission_probs(model);
    joint_prob(model, &emission, tokens, tags, None).ln()
}

fn all_sequences(len: usize, num_states: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::with_capacity(num_states.pow(len as u32));
    let mut current = vec![0usize; len];
    loop {
        out.push(current.clone());
        let mut i = 0;
        loop {
            if i == len {
                return out;
            }
            current[i] += 1;
            if current[i] < num_states {
                break;
            }
            current[i] = 0;
            i += 1;
        }
    }
}

pub struct EnumeratedPosteriors {
    pub unary: Vec<Vec<Vec<f64>>>,
    pub pairwise: Vec<Vec<Vec<f64>>>,
    pub loglik: f64,
}

/// Marginals and log-likelihood by brute-force enumeration of all tag
/// sequences. `log_modifier[s][i][y]` holds optional log multipliers.
pub fn enumerate_posteriors(
    model: &HmmModel,
    corpus: &Corpus,
    log_modifier: Option<&[Vec<Vec<f64>>]>,
) -> EnumeratedPosteriors {
    let j = model.num_states;
    let emission = direct_emission_probs(model);
    let mut unary = Vec::new();
    let mut pairwise = Vec::new();
    let mut loglik = 0.0;

    for (n, tokens) in corpus.sentences().iter().enumerate() {
        let l = tokens.len();
        let sequences = all_sequences(l, j);
        let sent_mod = log_modifier.map(|m| m[n].as_slice());
        let probs: Vec<f64> = sequences
            .iter()
            .map(|tags| joint_prob(model, &emission, tokens, tags, sent_mod))
            .collect();
        let z: f64 = probs.iter().sum();
        loglik += z.ln();

        let mut gamma = vec![vec![0.0; j]; l];
        let mut xi = vec![vec![0.0; j * j]; l.saturating_sub(1)];
        for (tags, p) in sequences.iter().zip(&probs) {
            let w = p / z;
            for (i, &y) in tags.iter().enumerate() {
                gamma[i][y] += w;
                if i + 1 < l {
                    xi[i][y * j + tags[i + 1]] += w;
                }
            }
        }
        unary.push(gamma);
        pairwise.push(xi);
    }
    EnumeratedPosteriors {
        unary,
        pairwise,
        loglik,
    }
}

/// Exhaustive MAP sequence for one sentence, returning the path and its log
/// probability. Ties resolve to the first (lexicographically smallest) path.
pub fn enumerate_map(model: &HmmModel, corpus: &Corpus, sentence: usize) -> (Vec<usize>, f64) {
    let tokens = corpus.sentence(sentence);
    let emission = direct_emission_probs(model);
    let mut best: Option<(Vec<usize>, f64)> = None;
    for tags in all_sequences(tokens.len(), model.num_states) {
        let p = joint_prob(model, &emission, tokens, &tags, None);
        if best.as_ref().is_none_or(|(_, bp)| p > *bp) {
            best = Some((tags, p));
        }
    }
    let (tags, p) = best.unwrap();
    (tags, p.ln())
}

/// Number of tag sequences whose joint probability is within `tol`
/// (relative) of the maximum.
pub fn count_optimal_sequences(
    model: &HmmModel,
    corpus: &Corpus,
    sentence: usize,
    tol: f64,
) -> usize {
    let tokens = corpus.sentence(sentence);
    let emission = direct_emission_probs(model);
    let probs: Vec<f64> = all_sequences(tokens.len(), model.num_states)
        .iter()
        .map(|tags| joint_prob(model, &emission, tokens, tags, None))
        .collect();
    let max = probs.iter().fold(0.0f64, |m, &p| m.max(p));
    probs.iter().filter(|&&p| p >= max * (1.0 - tol)).count()
}

/// Central finite-difference gradient of `f` at `x`.
pub fn central_difference_gradient<F>(mut f: F, x: &[f64], h: f64) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut grad = Vec::with_capacity(x.len());
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let plus = f(&probe);
        probe[i] = x[i] - h;
        let minus = f(&probe);
        probe[i] = x[i];
        grad.push((plus - minus) / (2.0 * h));
    }
    grad
}

/// Relative agreement check between two gradients: max_i |a-b| / max(1, |a|, |b|).
pub fn max_relative_error(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1.0))
        .fold(0.0, f64::max)
}

/// All set partitions of `n` elements as canonical label sequences (labels
/// appear in first-use order, so `labels[0] == 0`).
pub fn all_partitions(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut labels = vec![0usize; n];
    fn recurse(labels: &mut Vec<usize>, i: usize, max_used: usize, out: &mut Vec<Vec<usize>>) {
        if i == labels.len() {
            out.push(labels.clone());
            return;
        }
        for label in 0..=max_used + 1 {
            labels[i] = label;
            recurse(labels, i + 1, max_used.max(label), out);
        }
    }
    if n == 0 {
        return vec![Vec::new()];
    }
    labels[0] = 0;
    recurse(&mut labels, 1, 0, &mut out);
    out
}

/// Random stochastic HMM with multinomial emissions, for tests.
pub fn random_multinomial_model<R: rand::Rng>(rng: &mut R, j: usize, v: usize) -> HmmModel {
    let mut transitions = Vec::with_capacity(j + 1);
    for _ in 0..=j {
        let mut row: Vec<f64> = (0..j).map(|_| rng.random_range(0.05..1.0)).collect();
        let total: f64 = row.iter().sum();
        row.iter_mut().for_each(|p| *p /= total);
        transitions.push(row);
    }
    let mut probs = vec![vec![0.0; j]; v];
    for tag in 0..j {
        let col: Vec<f64> = (0..v).map(|_| rng.random_range(0.05..1.0)).collect();
        let total: f64 = col.iter().sum();
        for x in 0..v {
            probs[x][tag] = col[x] / total;
        }
    }
    HmmModel {
        num_states: j,
        transitions,
        emission: Emission::Multinomial { probs },
    }
}

/// Result of the enumerated primal solve: per-sentence distributions over
/// all tag sequences.
pub struct PrimalSparsityOracle {
    /// Per sentence: enumerated tag sequences.
    pub sequences: Vec<Vec<Vec<usize>>>,
    /// Per sentence: optimal q over those sequences.
    pub q: Vec<Vec<f64>>,
    pub objective: f64,
}

/// Primal objective `KL(q || p) + sigma * sum_v max_j E_q[phi_wvj]` for an
/// explicit per-sentence distribution over enumerated sequences.
pub fn primal_sparsity_objective(
    sequences: &[Vec<Vec<usize>>],
    p_cond: &[Vec<f64>],
    q: &[Vec<f64>],
    slots: &[(usize, usize)],
    sigma: f64,
    num_states: usize,
) -> f64 {
    let mut kl = 0.0;
    for (s, qs) in q.iter().enumerate() {
        for (w, p) in qs.iter().zip(&p_cond[s]) {
            if *w > 0.0 {
                kl += w * (w / p).ln();
            }
        }
    }
    let mut penalty = 0.0;
    for v in 0..num_states {
        let mut best = f64::NEG_INFINITY;
        for &(s, i) in slots {
            let m: f64 = sequences[s]
                .iter()
                .zip(&q[s])
                .filter(|(tags, _)| tags[i] == v)
                .map(|(_, w)| w)
                .sum();
            best = best.max(m);
        }
        penalty += best;
    }
    kl + sigma * penalty
}

/// Solve the primal sparsity objective
///
/// ```text
/// min_q  KL(q || p(Y|X)) + sigma * sum_v max_j E_q[phi_wvj]
/// ```
///
/// over explicit per-sentence distributions on all tag assignments of a
/// tiny corpus, by entropic mirror descent with diminishing steps and
/// weighted iterate averaging (valid for strongly convex nonsmooth
/// objectives; the negative entropy of each block provides the modulus).
///
/// The occurrences of the single regulated word are `(sentence, position)`
/// pairs; the penalty couples the sentence blocks through column maxima.
pub fn primal_sparsity_oracle(
    model: &HmmModel,
    corpus: &Corpus,
    slots: &[(usize, usize)],
    sigma: f64,
    iterations: usize,
) -> PrimalSparsityOracle {
    let j = model.num_states;
    let emission = direct_emission_probs(model);

    // Per-sentence enumeration and conditional p(Y|x).
    let mut sequences = Vec::new();
    let mut p_cond: Vec<Vec<f64>> = Vec::new();
    for tokens in corpus.sentences() {
        let seqs = all_sequences(tokens.len(), j);
        let probs: Vec<f64> = seqs
            .iter()
            .map(|tags| joint_prob(model, &emission, tokens, tags, None))
            .collect();
        let z: f64 = probs.iter().sum();
        p_cond.push(probs.iter().map(|p| p / z).collect());
        sequences.push(seqs);
    }

    let mut q: Vec<Vec<f64>> = p_cond.clone();
    let mut average: Vec<Vec<f64>> = q.iter().map(|b| vec![0.0; b.len()]).collect();
    let mut weight_total = 0.0f64;

    for t in 1..=iterations {
        // Occurrence marginals and per-column argmax occurrence.
        let mut argmax_slot = vec![0usize; j];
        for v in 0..j {
            let mut best = f64::NEG_INFINITY;
            for (jj, &(s, i)) in slots.iter().enumerate() {
                let m: f64 = sequences[s]
                    .iter()
                    .zip(&q[s])
                    .filter(|(tags, _)| tags[i] == v)
                    .map(|(_, w)| w)
                    .sum();
                if m > best {
                    best = m;
                    argmax_slot[v] = jj;
                }
            }
        }

        // Subgradient step in the entropic geometry, per sentence block:
        // g(Y) = log(q/p) + sigma * sum_v [slot_{j*(v)} in this sentence
        // and Y tags it v]. The additive constant of the KL gradient
        // cancels in the renormalization.
        let eta = 2.0 / (t as f64 + 1.0);
        for (s, seqs) in sequences.iter().enumerate() {
            let block = &mut q[s];
            let mut z = 0.0;
            for (k, tags) in seqs.iter().enumerate() {
                let mut g = (block[k].max(1e-300) / p_cond[s][k]).ln();
                for v in 0..j {
                    let (ss, ii) = slots[argmax_slot[v]];
                    if ss == s && tags[ii] == v {
                        g += sigma;
                    }
                }
                block[k] = block[k].max(1e-300) * (-eta * g).exp();
                z += block[k];
            }
            for w in block.iter_mut() {
                *w /= z;
            }
        }

        // Weighted averaging (weights proportional to t) gives the
        // convergent iterate for the strongly convex schedule.
        let w = t as f64;
        weight_total += w;
        for (avg, block) in average.iter_mut().zip(&q) {
            for (a, b) in avg.iter_mut().zip(block) {
                *a += w * *b;
            }
        }
    }

    let q_final: Vec<Vec<f64>> = average
        .into_iter()
        .map(|block| block.into_iter().map(|a| a / weight_total).collect())
        .collect();
    let objective =
        primal_sparsity_objective(&sequences, &p_cond, &q_final, slots, sigma, j);
    PrimalSparsityOracle {
        sequences,
        q: q_final,
        objective,
    }
}
