//! First-order HMM representation and exact inference.
//!
//! Inference runs in log space with log-sum-exp; the start state occupies
//! row `J` of the transition table and is never a column. There is no stop
//! probability: sentences end without an end-transition factor.

use rayon::prelude::*;

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::features::FeatureTable;

/// Emission model variant.
#[derive(Clone, Debug, PartialEq)]
pub enum Emission {
    /// `probs[x][y]`: probability of word type `x` under tag `y`; each tag's
    /// column over `x` sums to one.
    Multinomial { probs: Vec<Vec<f64>> },
    /// Log-linear emission: `p(x|y) = exp(theta_y . f(x)) / Z_y` with shared
    /// feature templates and per-tag parameter blocks (`theta[y*F + k]`).
    MaxEnt {
        theta: Vec<f64>,
        features: FeatureTable,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct HmmModel {
    pub num_states: usize,
    /// `(J+1) x J`; row `J` is the start state.
    pub transitions: Vec<Vec<f64>>,
    pub emission: Emission,
}

impl HmmModel {
    /// Row index of the start state in the transition table.
    pub fn start_row(&self) -> usize {
        self.num_states
    }

    pub fn num_types(&self) -> usize {
        match &self.emission {
            Emission::Multinomial { probs } => probs.len(),
            Emission::MaxEnt { features, .. } => features.num_types(),
        }
    }

    pub fn num_features(&self) -> usize {
        match &self.emission {
            Emission::Multinomial { .. } => 0,
            Emission::MaxEnt { features, .. } => features.num_features(),
        }
    }

    /// Structural and stochasticity checks: row sums / column sums within
    /// 1e-10. Variational-Bayes updates produce sub-normalized tables, which
    /// intentionally fail this check; inference only needs [`check_finite`].
    ///
    /// [`check_finite`]: HmmModel::check_finite
    pub fn validate(&self) -> Result<()> {
        self.check_finite()?;
        let j = self.num_states;
        if self.transitions.len() != j + 1 || self.transitions.iter().any(|r| r.len() != j) {
            return Err(Error::Shape(format!(
                "transition table must be {}x{}",
                j + 1,
                j
            )));
        }
        for (r, row) in self.transitions.iter().enumerate() {
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > 1e-10 {
                return Err(Error::Shape(format!(
                    "transition row {r} sums to {total}, expected 1"
                )));
            }
        }
        if let Emission::Multinomial { probs } = &self.emission {
            if probs.iter().any(|r| r.len() != j) {
                return Err(Error::Shape("emission rows must have J entries".into()));
            }
            for tag in 0..j {
                let total: f64 = probs.iter().map(|row| row[tag]).sum();
                if (total - 1.0).abs() > 1e-10 {
                    return Err(Error::Shape(format!(
                        "emission column {tag} sums to {total}, expected 1"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn check_finite(&self) -> Result<()> {
        for row in &self.transitions {
            if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
                return Err(Error::NonFinite("transition table"));
            }
        }
        match &self.emission {
            Emission::Multinomial { probs } => {
                for row in probs {
                    if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
                        return Err(Error::NonFinite("emission table"));
                    }
                }
            }
            Emission::MaxEnt { theta, features } => {
                if theta.len() != features.num_features() * self.num_states {
                    return Err(Error::NonFinite("theta length"));
                }
                if theta.iter().any(|t| !t.is_finite()) {
                    return Err(Error::NonFinite("theta"));
                }
            }
        }
        Ok(())
    }

    /// `log p_o(x|y)` as a `V x J` table. The max-ent variant is a log-softmax
    /// over word types per tag, max-shifted for stability; the multinomial
    /// variant is the log of the stored table.
    pub fn emission_log_probs(&self) -> Vec<Vec<f64>> {
        match &self.emission {
            Emission::Multinomial { probs } => probs
                .iter()
                .map(|row| row.iter().map(|p| p.ln()).collect())
                .collect(),
            Emission::MaxEnt { theta, features } => {
                let v = features.num_types();
                let f = features.num_features();
                let mut table = vec![vec![0.0; self.num_states]; v];
                for tag in 0..self.num_states {
                    let block = &theta[tag * f..(tag + 1) * f];
                    let mut scores = Vec::with_capacity(v);
                    let mut max = f64::NEG_INFINITY;
                    for x in 0..v {
                        let s: f64 = features.row(x).iter().map(|&k| block[k as usize]).sum();
                        max = max.max(s);
                        scores.push(s);
                    }
                    let log_z = max
                        + scores
                            .iter()
                            .map(|s| (s - max).exp())
                            .sum::<f64>()
                            .ln();
                    for x in 0..v {
                        table[x][tag] = scores[x] - log_z;
                    }
                }
                table
            }
        }
    }

    pub fn log_transitions(&self) -> Vec<Vec<f64>> {
        self.transitions
            .iter()
            .map(|row| row.iter().map(|p| p.ln()).collect())
            .collect()
    }
}

/// Per-token and per-boundary posteriors plus the corpus log-likelihood.
#[derive(Clone, Debug, PartialEq)]
pub struct PosteriorSet {
    /// `unary[s][i][y]`
    pub unary: Vec<Vec<Vec<f64>>>,
    /// `pairwise[s][i]` is the boundary between positions `i` and `i+1`,
    /// flattened as `prev * J + next`.
    pub pairwise: Vec<Vec<Vec<f64>>>,
    pub loglik: f64,
    pub num_states: usize,
}

impl PosteriorSet {
    pub fn gamma(&self, sentence: usize, position: usize) -> &[f64] {
        &self.unary[sentence][position]
    }

    pub fn xi(&self, sentence: usize, boundary: usize) -> &[f64] {
        &self.pairwise[sentence][boundary]
    }

    pub fn num_sentences(&self) -> usize {
        self.unary.len()
    }
}

/// Per-token, per-tag multipliers in `(0, 1]` applied to the emission
/// probabilities, stored in log space (so all entries are <= 0).
#[derive(Clone, Debug, PartialEq)]
pub struct EmissionModifier {
    log_mult: Vec<Vec<Vec<f64>>>,
}

impl EmissionModifier {
    pub fn identity(corpus: &Corpus, num_states: usize) -> Self {
        EmissionModifier {
            log_mult: corpus
                .sentences()
                .iter()
                .map(|s| vec![vec![0.0; num_states]; s.len()])
                .collect(),
        }
    }

    pub fn set_log(&mut self, sentence: usize, position: usize, tag: usize, log_multiplier: f64) {
        debug_assert!(log_multiplier <= 0.0 && !log_multiplier.is_nan());
        self.log_mult[sentence][position][tag] = log_multiplier;
    }

    pub fn log(&self, sentence: usize, position: usize, tag: usize) -> f64 {
        self.log_mult[sentence][position][tag]
    }

    fn matches(&self, corpus: &Corpus, num_states: usize) -> bool {
        self.log_mult.len() == corpus.num_sentences()
            && self
                .log_mult
                .iter()
                .zip(corpus.sentences())
                .all(|(m, s)| m.len() == s.len() && m.iter().all(|row| row.len() == num_states))
    }
}

pub(crate) fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

struct SentencePosteriors {
    unary: Vec<Vec<f64>>,
    pairwise: Vec<Vec<f64>>,
    loglik: f64,
}

fn sentence_forward_backward(
    sentence: &[usize],
    log_trans: &[Vec<f64>],
    log_emit: &[Vec<f64>],
    modifier: Option<&[Vec<f64>]>,
    num_states: usize,
) -> Option<SentencePosteriors> {
    let j = num_states;
    let l = sentence.len();
    let start = j;
    let emit = |i: usize, y: usize| -> f64 {
        let base = log_emit[sentence[i]][y];
        match modifier {
            Some(m) => base + m[i][y],
            None => base,
        }
    };

    let mut alpha = vec![vec![0.0f64; j]; l];
    for y in 0..j {
        alpha[0][y] = log_trans[start][y] + emit(0, y);
    }
    let mut scratch = vec![0.0f64; j];
    for i in 1..l {
        for y in 0..j {
            for (prev, s) in scratch.iter_mut().enumerate() {
                *s = alpha[i - 1][prev] + log_trans[prev][y];
            }
            alpha[i][y] = emit(i, y) + log_sum_exp(&scratch);
        }
    }
    let loglik = log_sum_exp(&alpha[l - 1]);
    if !loglik.is_finite() {
        return None;
    }

    let mut beta = vec![vec![0.0f64; j]; l];
    for i in (0..l - 1).rev() {
        for y in 0..j {
            for (next, s) in scratch.iter_mut().enumerate() {
                *s = log_trans[y][next] + emit(i + 1, next) + beta[i + 1][next];
            }
            beta[i][y] = log_sum_exp(&scratch);
        }
    }

    let mut unary = vec![vec![0.0f64; j]; l];
    for i in 0..l {
        for y in 0..j {
            unary[i][y] = (alpha[i][y] + beta[i][y] - loglik).exp();
        }
    }
    let mut pairwise = vec![vec![0.0f64; j * j]; l - 1];
    for i in 1..l {
        for prev in 0..j {
            for next in 0..j {
                pairwise[i - 1][prev * j + next] = (alpha[i - 1][prev]
                    + log_trans[prev][next]
                    + emit(i, next)
                    + beta[i][next]
                    - loglik)
                    .exp();
            }
        }
    }
    Some(SentencePosteriors {
        unary,
        pairwise,
        loglik,
    })
}

/// Exact posteriors of the model (optionally with per-token emission
/// multipliers, renormalized per sentence). `loglik` is the sum of the
/// per-sentence log normalizers.
pub fn forward_backward(
    model: &HmmModel,
    corpus: &Corpus,
    modifier: Option<&EmissionModifier>,
) -> Result<PosteriorSet> {
    model.check_finite()?;
    if let Some(m) = modifier {
        if !m.matches(corpus, model.num_states) {
            return Err(Error::Shape("emission modifier does not match corpus".into()));
        }
    }
    let log_trans = model.log_transitions();
    let log_emit = model.emission_log_probs();
    let j = model.num_states;

    let per_sentence: Vec<Option<SentencePosteriors>> = corpus
        .sentences()
        .par_iter()
        .enumerate()
        .map(|(n, sentence)| {
            sentence_forward_backward(
                sentence,
                &log_trans,
                &log_emit,
                modifier.map(|m| m.log_mult[n].as_slice()),
                j,
            )
        })
        .collect();

    let mut unary = Vec::with_capacity(per_sentence.len());
    let mut pairwise = Vec::with_capacity(per_sentence.len());
    let mut loglik = 0.0;
    for (n, result) in per_sentence.into_iter().enumerate() {
        match result {
            Some(sp) => {
                loglik += sp.loglik;
                unary.push(sp.unary);
                pairwise.push(sp.pairwise);
            }
            None => return Err(Error::ZeroProbability { sentence: n }),
        }
    }
    Ok(PosteriorSet {
        unary,
        pairwise,
        loglik,
        num_states: j,
    })
}

/// Per-position argmax of the tag marginals; ties break to the lowest index.
pub fn posterior_decode(posteriors: &PosteriorSet) -> Vec<Vec<usize>> {
    posteriors
        .unary
        .iter()
        .map(|sentence| sentence.iter().map(|gamma| argmax(gamma)).collect())
        .collect()
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Most likely tag sequence per sentence; backpointer ties break to the
/// lowest tag index.
pub fn viterbi_decode(model: &HmmModel, corpus: &Corpus) -> Result<Vec<Vec<usize>>> {
    model.check_finite()?;
    let log_trans = model.log_transitions();
    let log_emit = model.emission_log_probs();
    let j = model.num_states;
    let start = j;

    let decoded: Vec<Option<Vec<usize>>> = corpus
        .sentences()
        .par_iter()
        .map(|sentence| {
            let l = sentence.len();
            let mut delta = vec![vec![0.0f64; j]; l];
            let mut back = vec![vec![0usize; j]; l];
            for y in 0..j {
                delta[0][y] = log_trans[start][y] + log_emit[sentence[0]][y];
            }
            for i in 1..l {
                for y in 0..j {
                    let mut best_prev = 0;
                    let mut best = delta[i - 1][0] + log_trans[0][y];
                    for prev in 1..j {
                        let cand = delta[i - 1][prev] + log_trans[prev][y];
                        if cand > best {
                            best = cand;
                            best_prev = prev;
                        }
                    }
                    delta[i][y] = best + log_emit[sentence[i]][y];
                    back[i][y] = best_prev;
                }
            }
            let mut tag = argmax(&delta[l - 1]);
            if !delta[l - 1][tag].is_finite() {
                return None;
            }
            let mut path = vec![0usize; l];
            path[l - 1] = tag;
            for i in (1..l).rev() {
                tag = back[i][tag];
                path[i - 1] = tag;
            }
            Some(path)
        })
        .collect();

    decoded
        .into_iter()
        .enumerate()
        .map(|(n, p)| p.ok_or(Error::ZeroProbability { sentence: n }))
        .collect()
}
