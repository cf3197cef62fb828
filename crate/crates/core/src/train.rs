//! Maximum-likelihood training: EM with closed-form or L-BFGS M-steps,
//! direct gradient ascent on the marginal likelihood, and variational Bayes
//! with Dirichlet priors.

use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use statrs::function::gamma::digamma;

use crate::corpus::{Corpus, Vocabulary};
use crate::error::{Error, Result};
use crate::features::FeatureTable;
use crate::hmm::{forward_backward, Emission, HmmModel, PosteriorSet};
use crate::optimize::{lbfgs_minimize, LbfgsConfig, LbfgsResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Algorithm {
    Em,
    /// Direct gradient on the marginal likelihood (max-ent emissions only).
    Dg,
    /// Variational Bayes with Dirichlet priors (multinomial emissions only).
    Vb,
}

/// Loosened-then-strict inner M-step settings: run the first
/// `permissive_iters` outer iterations with a cheaper inner optimizer.
#[derive(Clone, Debug)]
pub struct MstepSchedule {
    pub permissive_iters: usize,
    pub permissive_grad_tol: f64,
    pub permissive_max_iters: usize,
}

#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub algorithm: Algorithm,
    pub iterations: usize,
    pub seed: u64,
    /// Magnitude of the uniform initialization noise.
    pub jitter: f64,
    /// Gaussian prior variance for max-ent weights; the penalty is
    /// `||theta||^2 / (2 * variance)`.
    pub l2_prior_variance: f64,
    pub vb_transition_alpha: f64,
    pub vb_emission_alpha: f64,
    /// Inner optimizer settings for the max-ent M-step.
    pub mstep: LbfgsConfig,
    pub mstep_schedule: Option<MstepSchedule>,
    /// Outer stop: relative log-likelihood change below this.
    pub rel_tol: f64,
    /// Whether direct gradient also regularizes the transition scores.
    pub dg_regularize_transitions: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            algorithm: Algorithm::Em,
            iterations: 200,
            seed: 0,
            jitter: 0.01,
            l2_prior_variance: 10.0,
            vb_transition_alpha: 0.001,
            vb_emission_alpha: 0.001,
            mstep: LbfgsConfig {
                max_iters: 50,
                grad_tol: 1e-5,
                ..Default::default()
            },
            mstep_schedule: None,
            rel_tol: 1e-7,
            dg_regularize_transitions: false,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.iterations < 1 {
            return Err(Error::Config("iterations must be >= 1".into()));
        }
        if self.jitter < 0.0 {
            return Err(Error::Config("jitter must be >= 0".into()));
        }
        if self.l2_prior_variance <= 0.0 {
            return Err(Error::Config("prior variance must be positive".into()));
        }
        Ok(())
    }

    fn mstep_config(&self, outer_iter: usize) -> LbfgsConfig {
        match &self.mstep_schedule {
            Some(s) if outer_iter <= s.permissive_iters => LbfgsConfig {
                grad_tol: s.permissive_grad_tol,
                max_iters: s.permissive_max_iters,
                ..self.mstep.clone()
            },
            _ => self.mstep.clone(),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct TraceRow {
    pub iter: usize,
    /// Log-likelihood of the parameters entering this iteration.
    pub loglik: f64,
    /// Lower bound after the M-step.
    pub bound: f64,
    pub seconds: f64,
    pub penalty: Option<f64>,
    pub objective18: Option<f64>,
    pub dual_iters: Option<usize>,
}

#[derive(Clone, Debug, Default)]
pub struct TrainTrace {
    pub rows: Vec<TraceRow>,
}

impl TrainTrace {
    pub fn tsv(&self) -> String {
        use std::fmt::Write;
        let pr = self.rows.iter().any(|r| r.penalty.is_some());
        let mut out = String::new();
        if pr {
            out.push_str("iter\tloglik\tbound\tseconds\tpenalty\tobjective18\tdual-iters\n");
        } else {
            out.push_str("iter\tloglik\tbound\tseconds\n");
        }
        for r in &self.rows {
            if pr {
                let _ = writeln!(
                    out,
                    "{}\t{}\t{}\t{}\t{}\t{}\t{}",
                    r.iter,
                    r.loglik,
                    r.bound,
                    r.seconds,
                    r.penalty.map(|v| v.to_string()).unwrap_or_default(),
                    r.objective18.map(|v| v.to_string()).unwrap_or_default(),
                    r.dual_iters.map(|v| v.to_string()).unwrap_or_default(),
                );
            } else {
                let _ = writeln!(out, "{}\t{}\t{}\t{}", r.iter, r.loglik, r.bound, r.seconds);
            }
        }
        out
    }

    pub fn write_tsv(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.tsv()).map_err(|e| Error::io(path, e))
    }
}

/// Expected transition and emission counts under a posterior set.
#[derive(Clone, Debug)]
pub struct ExpectedCounts {
    /// `(J+1) x J`; row `J` collects start transitions.
    pub transitions: Vec<Vec<f64>>,
    /// `V x J`.
    pub emissions: Vec<Vec<f64>>,
}

pub fn expected_counts(post: &PosteriorSet, corpus: &Corpus, num_types: usize) -> ExpectedCounts {
    let j = post.num_states;
    let mut transitions = vec![vec![0.0; j]; j + 1];
    let mut emissions = vec![vec![0.0; j]; num_types];
    for (n, sentence) in corpus.sentences().iter().enumerate() {
        let first = post.gamma(n, 0);
        for y in 0..j {
            transitions[j][y] += first[y];
        }
        for b in 0..sentence.len() - 1 {
            let xi = post.xi(n, b);
            for prev in 0..j {
                for next in 0..j {
                    transitions[prev][next] += xi[prev * j + next];
                }
            }
        }
        for (i, &x) in sentence.iter().enumerate() {
            let gamma = post.gamma(n, i);
            for y in 0..j {
                emissions[x][y] += gamma[y];
            }
        }
    }
    ExpectedCounts {
        transitions,
        emissions,
    }
}

fn normalize_rows(counts: &[Vec<f64>]) -> Vec<Vec<f64>> {
    counts
        .iter()
        .map(|row| {
            let total: f64 = row.iter().sum();
            if total > 0.0 {
                row.iter().map(|c| c / total).collect()
            } else {
                vec![1.0 / row.len() as f64; row.len()]
            }
        })
        .collect()
}

fn normalize_emission_columns(counts: &[Vec<f64>], j: usize) -> Vec<Vec<f64>> {
    let v = counts.len();
    let mut probs = vec![vec![0.0; j]; v];
    for tag in 0..j {
        let total: f64 = counts.iter().map(|row| row[tag]).sum();
        for x in 0..v {
            probs[x][tag] = if total > 0.0 {
                counts[x][tag] / total
            } else {
                1.0 / v as f64
            };
        }
    }
    probs
}

/// Closed-form multinomial M-step: normalize expected counts.
pub fn mstep_multinomial(
    post: &PosteriorSet,
    corpus: &Corpus,
    num_types: usize,
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let counts = expected_counts(post, corpus, num_types);
    (
        normalize_rows(&counts.transitions),
        normalize_emission_columns(&counts.emissions, post.num_states),
    )
}

/// Expected complete-data log-likelihood of `counts` under the given tables.
/// Zero counts contribute nothing even against zero probabilities.
pub(crate) fn complete_loglik(
    counts: &ExpectedCounts,
    log_trans: &[Vec<f64>],
    log_emit: &[Vec<f64>],
) -> f64 {
    let mut total = 0.0;
    for (row, lrow) in counts.transitions.iter().zip(log_trans) {
        for (c, lp) in row.iter().zip(lrow) {
            if *c > 0.0 {
                total += c * lp;
            }
        }
    }
    for (row, lrow) in counts.emissions.iter().zip(log_emit) {
        for (c, lp) in row.iter().zip(lrow) {
            if *c > 0.0 {
                total += c * lp;
            }
        }
    }
    total
}

/// Value and gradient of the expected complete log-likelihood in the max-ent
/// parameters (no prior): per tag, `theta_y . target_y - C_y * log Z_y`.
///
/// `target[y*f + k]` is the expected count of feature `k` under tag `y`.
fn maxent_value_grad(
    theta: &[f64],
    features: &FeatureTable,
    target: &[f64],
    tag_totals: &[f64],
    grad: &mut [f64],
) -> f64 {
    let f = features.num_features();
    let v = features.num_types();
    let j = tag_totals.len();
    let per_tag: Vec<(f64, Vec<f64>)> = (0..j)
        .into_par_iter()
        .map(|tag| {
            let block = &theta[tag * f..(tag + 1) * f];
            let mut scores = Vec::with_capacity(v);
            let mut max = f64::NEG_INFINITY;
            for x in 0..v {
                let s: f64 = features.row(x).iter().map(|&k| block[k as usize]).sum();
                max = max.max(s);
                scores.push(s);
            }
            let mut z = 0.0;
            for s in scores.iter_mut() {
                *s = (*s - max).exp();
                z += *s;
            }
            let log_z = max + z.ln();
            // Gradient block: target - C_y * E_{p(.|y)}[f].
            let mut gblock = vec![0.0; f];
            let scale = tag_totals[tag] / z;
            for x in 0..v {
                let w = scores[x] * scale;
                for &k in features.row(x) {
                    gblock[k as usize] += w;
                }
            }
            let tgt = &target[tag * f..(tag + 1) * f];
            let mut value = -tag_totals[tag] * log_z;
            for k in 0..f {
                value += block[k] * tgt[k];
                gblock[k] = tgt[k] - gblock[k];
            }
            (value, gblock)
        })
        .collect();

    let mut value = 0.0;
    for (tag, (val, gblock)) in per_tag.into_iter().enumerate() {
        value += val;
        grad[tag * f..(tag + 1) * f].copy_from_slice(&gblock);
    }
    value
}

fn feature_targets(emission_counts: &[Vec<f64>], features: &FeatureTable, j: usize) -> (Vec<f64>, Vec<f64>) {
    let f = features.num_features();
    let mut target = vec![0.0; j * f];
    let mut tag_totals = vec![0.0; j];
    for (x, row) in emission_counts.iter().enumerate() {
        for (tag, &c) in row.iter().enumerate() {
            if c > 0.0 {
                tag_totals[tag] += c;
                for &k in features.row(x) {
                    target[tag * f + k as usize] += c;
                }
            }
        }
    }
    (target, tag_totals)
}

/// Value and gradient of the max-ent M-step objective at `theta`: the
/// expected complete emission log-likelihood under the counts, minus the L2
/// penalty. This is the quantity the inner optimizer maximizes.
pub fn mstep_maxent_objective(
    emission_counts: &[Vec<f64>],
    features: &FeatureTable,
    theta: &[f64],
    prior_variance: f64,
    num_states: usize,
    grad: &mut [f64],
) -> f64 {
    let (target, tag_totals) = feature_targets(emission_counts, features, num_states);
    let value = maxent_value_grad(theta, features, &target, &tag_totals, grad);
    let inv_variance = prior_variance.recip();
    let mut penalty = 0.0;
    for (g, t) in grad.iter_mut().zip(theta) {
        penalty += t * t;
        *g -= t * inv_variance;
    }
    value - 0.5 * inv_variance * penalty
}

/// Max-ent M-step: maximize the expected complete log-likelihood minus the
/// L2 penalty, warm-started from `theta0`.
pub fn mstep_maxent(
    emission_counts: &[Vec<f64>],
    features: &FeatureTable,
    theta0: &[f64],
    lbfgs: &LbfgsConfig,
    prior_variance: f64,
    num_states: usize,
) -> Result<(Vec<f64>, LbfgsResult)> {
    let (target, tag_totals) = feature_targets(emission_counts, features, num_states);
    let inv_variance = prior_variance.recip();
    let result = lbfgs_minimize(
        |theta, grad| {
            let value = maxent_value_grad(theta, features, &target, &tag_totals, grad);
            let mut penalty = 0.0;
            for (g, t) in grad.iter_mut().zip(theta) {
                penalty += t * t;
                *g = -(*g - t * inv_variance);
            }
            -(value - 0.5 * inv_variance * penalty)
        },
        theta0,
        lbfgs,
    )?;
    Ok((result.x.clone(), result))
}

/// Near-uniform random initialization: multinomial tables get additive
/// uniform jitter then normalization; max-ent weights are drawn uniformly in
/// `[-jitter, jitter]`. The same seed always produces the same model.
pub fn init_model(
    num_states: usize,
    vocab: &Vocabulary,
    features: Option<&FeatureTable>,
    config: &TrainConfig,
) -> HmmModel {
    let j = num_states;
    let v = vocab.len();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let draw = |rng: &mut ChaCha8Rng| -> f64 {
        if config.jitter > 0.0 {
            rng.random_range(0.0..config.jitter)
        } else {
            0.0
        }
    };

    let mut transitions = Vec::with_capacity(j + 1);
    for _ in 0..=j {
        let mut row: Vec<f64> = (0..j).map(|_| 1.0 / j as f64 + draw(&mut rng)).collect();
        let total: f64 = row.iter().sum();
        row.iter_mut().for_each(|p| *p /= total);
        transitions.push(row);
    }

    let emission = match features {
        None => {
            let mut probs = vec![vec![0.0; j]; v];
            for tag in 0..j {
                let col: Vec<f64> = (0..v).map(|_| 1.0 / v as f64 + draw(&mut rng)).collect();
                let total: f64 = col.iter().sum();
                for x in 0..v {
                    probs[x][tag] = col[x] / total;
                }
            }
            Emission::Multinomial { probs }
        }
        Some(table) => {
            let f = table.num_features();
            let theta: Vec<f64> = (0..j * f)
                .map(|_| {
                    if config.jitter > 0.0 {
                        rng.random_range(-config.jitter..config.jitter)
                    } else {
                        0.0
                    }
                })
                .collect();
            Emission::MaxEnt {
                theta,
                features: table.clone(),
            }
        }
    };

    HmmModel {
        num_states: j,
        transitions,
        emission,
    }
}

/// Shared E/M alternation for EM and VB; `mstep` consumes the expected
/// counts and updates the model in place.
fn em_like_loop<M>(
    corpus: &Corpus,
    mut model: HmmModel,
    config: &TrainConfig,
    mut mstep: M,
) -> Result<(HmmModel, TrainTrace)>
where
    M: FnMut(&ExpectedCounts, &mut HmmModel, usize) -> Result<()>,
{
    config.validate()?;
    let v = model.num_types();
    let mut trace = TrainTrace::default();
    let mut prev_loglik: Option<f64> = None;

    for iter in 1..=config.iterations {
        let t0 = Instant::now();
        let post = forward_backward(&model, corpus, None)?;
        let counts = expected_counts(&post, corpus, v);
        let loglik = post.loglik;
        // Entropy of q via the complete log-likelihood under the old model.
        let old_complete = complete_loglik(&counts, &model.log_transitions(), &model.emission_log_probs());

        mstep(&counts, &mut model, iter)?;

        let new_complete = complete_loglik(&counts, &model.log_transitions(), &model.emission_log_probs());
        let bound = loglik - old_complete + new_complete;
        trace.rows.push(TraceRow {
            iter,
            loglik,
            bound,
            seconds: t0.elapsed().as_secs_f64(),
            penalty: None,
            objective18: None,
            dual_iters: None,
        });

        if let Some(prev) = prev_loglik {
            if (loglik - prev).abs() <= config.rel_tol * prev.abs().max(1.0) {
                break;
            }
        }
        prev_loglik = Some(loglik);
    }
    Ok((model, trace))
}

/// The shared M-step over expected counts: closed-form normalization for
/// multinomial emissions, warm-started L-BFGS for max-ent. Used by both EM
/// and posterior-regularized training.
pub fn apply_mstep(
    counts: &ExpectedCounts,
    model: &mut HmmModel,
    config: &TrainConfig,
    outer_iter: usize,
) -> Result<()> {
    model.transitions = normalize_rows(&counts.transitions);
    match &mut model.emission {
        Emission::Multinomial { probs } => {
            *probs = normalize_emission_columns(&counts.emissions, model.num_states);
        }
        Emission::MaxEnt { theta, features } => {
            let lbfgs = config.mstep_config(outer_iter);
            let (new_theta, _result) = mstep_maxent(
                &counts.emissions,
                features,
                theta,
                &lbfgs,
                config.l2_prior_variance,
                model.num_states,
            )
            .map_err(|e| {
                Error::Numerical(format!("M-step failed at iteration {outer_iter}: {e}"))
            })?;
            *theta = new_theta;
        }
    }
    Ok(())
}

/// EM training for either emission variant.
pub fn em_train(
    corpus: &Corpus,
    model: HmmModel,
    config: &TrainConfig,
) -> Result<(HmmModel, TrainTrace)> {
    em_like_loop(corpus, model, config, |counts, model, iter| {
        apply_mstep(counts, model, config, iter)
    })
}

/// Dispatch on `config.algorithm`.
pub fn train(
    corpus: &Corpus,
    model: HmmModel,
    config: &TrainConfig,
) -> Result<(HmmModel, TrainTrace)> {
    match config.algorithm {
        Algorithm::Em => em_train(corpus, model, config),
        Algorithm::Dg => dg_train(corpus, model, config),
        Algorithm::Vb => vb_train(corpus, model, config),
    }
}

/// Variational-Bayes mean-field update of a count table row:
/// `exp(digamma(c + alpha)) / exp(digamma(total + dim * alpha))`.
pub fn vb_update_row(counts: &[f64], alpha: f64) -> Vec<f64> {
    let dim = counts.len() as f64;
    let total: f64 = counts.iter().sum();
    let denom = digamma(total + dim * alpha).exp();
    counts
        .iter()
        .map(|c| digamma(c + alpha).exp() / denom)
        .collect()
}

/// Variational Bayes with Dirichlet priors (multinomial emissions only).
/// The resulting tables are sub-normalized by construction.
pub fn vb_train(
    corpus: &Corpus,
    model: HmmModel,
    config: &TrainConfig,
) -> Result<(HmmModel, TrainTrace)> {
    if !matches!(model.emission, Emission::Multinomial { .. }) {
        return Err(Error::Config(
            "variational Bayes requires the multinomial emission model".into(),
        ));
    }
    let alpha_t = config.vb_transition_alpha;
    let alpha_e = config.vb_emission_alpha;
    em_like_loop(corpus, model, config, |counts, model, _iter| {
        model.transitions = counts
            .transitions
            .iter()
            .map(|row| vb_update_row(row, alpha_t))
            .collect();
        if let Emission::Multinomial { probs } = &mut model.emission {
            let j = model.num_states;
            let v = counts.emissions.len();
            for tag in 0..j {
                let col: Vec<f64> = counts.emissions.iter().map(|row| row[tag]).collect();
                let updated = vb_update_row(&col, alpha_e);
                for x in 0..v {
                    probs[x][tag] = updated[x];
                }
            }
        }
        Ok(())
    })
}

/// Direct-gradient parameter vector: max-ent weights followed by
/// unconstrained transition scores, softmaxed per row.
pub fn dg_unpack(u: &[f64], j: usize, f: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let theta = u[..j * f].to_vec();
    let mut transitions = Vec::with_capacity(j + 1);
    for r in 0..=j {
        let scores = &u[j * f + r * j..j * f + (r + 1) * j];
        let max = scores.iter().fold(f64::NEG_INFINITY, |m, &s| m.max(s));
        let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        transitions.push(exps.iter().map(|e| e / z).collect());
    }
    (theta, transitions)
}

/// Value and gradient of the penalized marginal likelihood in the
/// direct-gradient parameterization `u = [theta | transition scores]`.
/// Returns `(objective, loglik)`.
pub fn dg_objective(
    corpus: &Corpus,
    features: &FeatureTable,
    u: &[f64],
    num_states: usize,
    l2_prior_variance: f64,
    regularize_transitions: bool,
    grad: &mut [f64],
) -> Result<(f64, f64)> {
    let j = num_states;
    let f = features.num_features();
    let v = features.num_types();
    let inv_variance = l2_prior_variance.recip();
    let (theta, transitions) = dg_unpack(u, j, f);
    let candidate = HmmModel {
        num_states: j,
        transitions,
        emission: Emission::MaxEnt {
            theta: theta.clone(),
            features: features.clone(),
        },
    };
    let post = forward_backward(&candidate, corpus, None)?;
    let counts = expected_counts(&post, corpus, v);

    // Emission gradient: expected feature counts minus model expectation.
    let (target, tag_totals) = feature_targets(&counts.emissions, features, j);
    maxent_value_grad(&theta, features, &target, &tag_totals, &mut grad[..j * f]);

    // Transition-score gradient per row: counts - rowtotal * softmax.
    for r in 0..=j {
        let row_counts = &counts.transitions[r];
        let total: f64 = row_counts.iter().sum();
        for c in 0..j {
            grad[j * f + r * j + c] = row_counts[c] - total * candidate.transitions[r][c];
        }
    }

    let mut value = post.loglik;
    for (i, g) in grad.iter_mut().enumerate() {
        if i < j * f || regularize_transitions {
            value -= 0.5 * inv_variance * u[i] * u[i];
            *g -= u[i] * inv_variance;
        }
    }
    Ok((value, post.loglik))
}

/// Direct gradient training of the marginal likelihood (max-ent emissions).
pub fn dg_train(
    corpus: &Corpus,
    model: HmmModel,
    config: &TrainConfig,
) -> Result<(HmmModel, TrainTrace)> {
    config.validate()?;
    let features = match &model.emission {
        Emission::MaxEnt { features, .. } => features.clone(),
        Emission::Multinomial { .. } => {
            return Err(Error::Config(
                "direct gradient requires the max-ent emission model".into(),
            ))
        }
    };
    let j = model.num_states;
    let f = features.num_features();

    let mut u0 = match &model.emission {
        Emission::MaxEnt { theta, .. } => theta.clone(),
        _ => unreachable!(),
    };
    for row in &model.transitions {
        for &p in row {
            u0.push(p.ln());
        }
    }

    // Log-likelihood per objective evaluation, for the trace.
    let eval_logliks = std::cell::RefCell::new(Vec::<f64>::new());

    let objective = |u: &[f64], grad: &mut [f64]| -> f64 {
        match dg_objective(
            corpus,
            &features,
            u,
            j,
            config.l2_prior_variance,
            config.dg_regularize_transitions,
            grad,
        ) {
            Ok((value, loglik)) => {
                eval_logliks.borrow_mut().push(loglik);
                for g in grad.iter_mut() {
                    *g = -*g;
                }
                -value
            }
            Err(_) => {
                eval_logliks.borrow_mut().push(f64::NAN);
                grad.fill(f64::NAN);
                f64::NAN
            }
        }
    };

    let lbfgs = LbfgsConfig {
        max_iters: config.iterations,
        grad_tol: config.mstep.grad_tol,
        rel_tol: config.rel_tol,
        ..Default::default()
    };
    let result = lbfgs_minimize(objective, &u0, &lbfgs)?;

    let logliks = eval_logliks.into_inner();
    let mut trace = TrainTrace::default();
    for (k, it) in result.history.iter().enumerate() {
        let ll = logliks.get(it.eval_index).copied().unwrap_or(f64::NAN);
        trace.rows.push(TraceRow {
            iter: k + 1,
            loglik: ll,
            bound: ll,
            seconds: it.seconds,
            penalty: None,
            objective18: None,
            dual_iters: None,
        });
    }

    let (theta, transitions) = dg_unpack(&result.x, j, f);
    Ok((
        HmmModel {
            num_states: j,
            transitions,
            emission: Emission::MaxEnt { theta, features },
        },
        trace,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::build_corpus;
    use crate::corpus::PreprocessPolicy;
    use crate::features::{build_features, FeatureConfig};
    use crate::oracles;

    fn toy_vocab(words: &[&str]) -> Vocabulary {
        let sentences = vec![words.iter().map(|w| w.to_string()).collect()];
        build_corpus("toy", &sentences, None, &PreprocessPolicy::raw())
            .unwrap()
            .1
    }

    #[test]
    fn zero_jitter_multinomial_is_exactly_uniform() {
        let vocab = toy_vocab(&["a", "b", "c"]);
        let config = TrainConfig {
            jitter: 0.0,
            ..Default::default()
        };
        let model = init_model(2, &vocab, None, &config);
        for row in &model.transitions {
            assert_eq!(row, &vec![0.5, 0.5]);
        }
        if let Emission::Multinomial { probs } = &model.emission {
            for row in probs {
                for &p in row {
                    assert!((p - 1.0 / 3.0).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn same_seed_same_model() {
        let vocab = toy_vocab(&["a", "b", "c", "d"]);
        let config = TrainConfig {
            seed: 99,
            ..Default::default()
        };
        let a = init_model(3, &vocab, None, &config);
        let b = init_model(3, &vocab, None, &config);
        assert_eq!(a, b);
    }

    #[test]
    fn jitter_bounds_emission_ratio() {
        let words: Vec<String> = (0..100).map(|i| format!("w{i}")).collect();
        let sentences = vec![words];
        let vocab = build_corpus("t", &sentences, None, &PreprocessPolicy::raw())
            .unwrap()
            .1;
        let config = TrainConfig {
            seed: 1,
            jitter: 0.01,
            ..Default::default()
        };
        let model = init_model(17, &vocab, None, &config);
        model.validate().unwrap();
        if let Emission::Multinomial { probs } = &model.emission {
            let v = 100.0;
            let bound = (1.0 / v + 0.01) / (1.0 / v);
            for tag in 0..17 {
                let col: Vec<f64> = probs.iter().map(|r| r[tag]).collect();
                let max = col.iter().cloned().fold(0.0, f64::max);
                let min = col.iter().cloned().fold(f64::INFINITY, f64::min);
                assert!(max / min <= bound + 1e-12);
            }
        }
    }

    fn tiny_corpus() -> (Corpus, Vocabulary) {
        let sentences: Vec<Vec<String>> = vec![
            vec!["a".into(), "b".into()],
            vec!["b".into(), "a".into(), "a".into()],
        ];
        build_corpus("tiny", &sentences, None, &PreprocessPolicy::raw()).unwrap()
    }

    #[test]
    fn mstep_equals_recount_oracle() {
        use rand::SeedableRng;
        let (corpus, vocab) = tiny_corpus();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let model = oracles::random_multinomial_model(&mut rng, 2, vocab.len());
        let post = forward_backward(&model, &corpus, None).unwrap();
        let (trans, probs) = mstep_multinomial(&post, &corpus, vocab.len());

        // Independent recount: accumulate directly from gamma/xi and normalize.
        let j = 2;
        let mut t = vec![vec![0.0; j]; j + 1];
        let mut e = vec![vec![0.0; j]; vocab.len()];
        for (n, s) in corpus.sentences().iter().enumerate() {
            for y in 0..j {
                t[j][y] += post.gamma(n, 0)[y];
            }
            for b in 0..s.len() - 1 {
                for p in 0..j {
                    for q in 0..j {
                        t[p][q] += post.xi(n, b)[p * j + q];
                    }
                }
            }
            for (i, &x) in s.iter().enumerate() {
                for y in 0..j {
                    e[x][y] += post.gamma(n, i)[y];
                }
            }
        }
        for r in 0..=j {
            let total: f64 = t[r].iter().sum();
            for c in 0..j {
                assert!((trans[r][c] - t[r][c] / total).abs() < 1e-12);
            }
        }
        for tag in 0..j {
            let total: f64 = e.iter().map(|row| row[tag]).sum();
            for x in 0..vocab.len() {
                assert!((probs[x][tag] - e[x][tag] / total).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn mstep_hard_posteriors_recover_ml_counts() {
        // Two sentences hard-tagged [0,1] and [1,0,0].
        let (corpus, vocab) = tiny_corpus();
        let hard = |tags: &[usize], j: usize| -> Vec<Vec<f64>> {
            tags.iter()
                .map(|&t| {
                    let mut row = vec![0.0; j];
                    row[t] = 1.0;
                    row
                })
                .collect()
        };
        let tagging = [vec![0usize, 1], vec![1usize, 0, 0]];
        let mut pairwise = Vec::new();
        for tags in &tagging {
            let mut xi = Vec::new();
            for b in 0..tags.len() - 1 {
                let mut table = vec![0.0; 4];
                table[tags[b] * 2 + tags[b + 1]] = 1.0;
                xi.push(table);
            }
            pairwise.push(xi);
        }
        let post = PosteriorSet {
            unary: tagging.iter().map(|t| hard(t, 2)).collect(),
            pairwise,
            loglik: 0.0,
            num_states: 2,
        };
        let (trans, probs) = mstep_multinomial(&post, &corpus, vocab.len());
        // Start counts: tag0 once, tag1 once.
        assert_eq!(trans[2], vec![0.5, 0.5]);
        // From tag 0: one transition to 1, one to 0.
        assert_eq!(trans[0], vec![0.5, 0.5]);
        // From tag 1: one transition to 0 only.
        assert_eq!(trans[1], vec![1.0, 0.0]);
        // Tag 0 emitted: a (first sent), a, a (second) -> a=3/3.
        assert!((probs[0][0] - 1.0).abs() < 1e-12);
        // Tag 1 emitted b twice.
        assert!((probs[1][1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mstep_symmetric_posteriors_give_uniform_tables() {
        let (corpus, vocab) = tiny_corpus();
        let j = 2;
        let unary: Vec<Vec<Vec<f64>>> = corpus
            .sentences()
            .iter()
            .map(|s| vec![vec![0.5, 0.5]; s.len()])
            .collect();
        let pairwise: Vec<Vec<Vec<f64>>> = corpus
            .sentences()
            .iter()
            .map(|s| vec![vec![0.25; 4]; s.len() - 1])
            .collect();
        let post = PosteriorSet {
            unary,
            pairwise,
            loglik: 0.0,
            num_states: j,
        };
        let (trans, probs) = mstep_multinomial(&post, &corpus, vocab.len());
        for row in &trans {
            assert_eq!(row, &vec![0.5, 0.5]);
        }
        // Uniform posteriors make each tag's emissions proportional to
        // empirical unigram counts: a appears 3 times, b twice.
        for tag in 0..j {
            assert!((probs[0][tag] - 0.6).abs() < 1e-12);
            assert!((probs[1][tag] - 0.4).abs() < 1e-12);
        }
    }

    #[test]
    fn em_is_monotone_on_synthetic_corpus() {
        let (corpus, vocab, _) = crate::synth::synth_generate(&crate::synth::SynthConfig {
            states: 2,
            vocab_size: 12,
            tokens: 1000,
            sparsity: 1.0,
            seed: 17,
            ..Default::default()
        })
        .unwrap();
        let config = TrainConfig {
            iterations: 50,
            seed: 3,
            rel_tol: 0.0,
            ..Default::default()
        };
        let model = init_model(2, &vocab, None, &config);
        let (_, trace) = em_train(&corpus, model, &config).unwrap();
        for pair in trace.rows.windows(2) {
            assert!(
                pair[1].loglik >= pair[0].loglik - 1e-8 * pair[0].loglik.abs(),
                "EM decreased the likelihood: {} -> {}",
                pair[0].loglik,
                pair[1].loglik
            );
        }
    }

    #[test]
    fn bound_equals_loglik_after_estep_and_sandwich_holds() {
        let (corpus, vocab, _) = crate::synth::synth_generate(&crate::synth::SynthConfig {
            states: 2,
            vocab_size: 8,
            tokens: 300,
            sparsity: 1.0,
            seed: 4,
            ..Default::default()
        })
        .unwrap();
        let config = TrainConfig {
            iterations: 10,
            rel_tol: 0.0,
            ..Default::default()
        };
        let mut model = init_model(2, &vocab, None, &config);

        // F(q, theta_old) == L(theta_old) exactly after the E-step.
        let post = forward_backward(&model, &corpus, None).unwrap();
        let counts = expected_counts(&post, &corpus, vocab.len());
        let f_old = post.loglik; // by construction: H(q) + E_q[log p_old] = L
        let old_complete =
            complete_loglik(&counts, &model.log_transitions(), &model.emission_log_probs());
        let entropy = post.loglik - old_complete;
        assert!((entropy + old_complete - f_old).abs() < 1e-9 * f_old.abs().max(1.0));

        let (trained, trace) = em_train(&corpus, model.clone(), &config).unwrap();
        model = trained;
        let _ = model;
        // Sandwich: L_t <= F_t (bound after M-step) <= L_{t+1}.
        for k in 0..trace.rows.len() - 1 {
            let slack = 1e-8 * trace.rows[k].loglik.abs().max(1.0);
            assert!(trace.rows[k].bound >= trace.rows[k].loglik - slack);
            assert!(trace.rows[k + 1].loglik >= trace.rows[k].bound - slack);
        }
    }

    #[test]
    fn single_state_em_recovers_unigram_distribution() {
        let (corpus, vocab) = tiny_corpus();
        let config = TrainConfig {
            iterations: 3,
            ..Default::default()
        };
        let model = init_model(1, &vocab, None, &config);
        let (trained, trace) = em_train(&corpus, model, &config).unwrap();
        if let Emission::Multinomial { probs } = &trained.emission {
            assert!((probs[0][0] - 0.6).abs() < 1e-12);
            assert!((probs[1][0] - 0.4).abs() < 1e-12);
        }
        // Converged after one update: subsequent logliks identical.
        if trace.rows.len() >= 3 {
            assert!((trace.rows[1].loglik - trace.rows[2].loglik).abs() < 1e-12);
        }
    }

    #[test]
    fn maxent_mstep_gradient_matches_finite_differences() {
        use rand::Rng;
        use rand::SeedableRng;
        // 5 types, 2 tags, 3 shared features.
        let features = FeatureTable::from_parts(
            vec!["f0".into(), "f1".into(), "f2".into()],
            vec![vec![0], vec![0, 1], vec![1], vec![1, 2], vec![2]],
        )
        .unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let counts: Vec<Vec<f64>> = (0..5)
            .map(|_| (0..2).map(|_| rng.random_range(0.1..3.0)).collect())
            .collect();
        let (target, tag_totals) = feature_targets(&counts, &features, 2);
        let prior_variance = 2.0;

        for _ in 0..20 {
            let theta: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut grad = vec![0.0; 6];
            let value = maxent_value_grad(&theta, &features, &target, &tag_totals, &mut grad);
            let penalty: f64 = theta.iter().map(|t| t * t).sum::<f64>() / (2.0 * prior_variance);
            let _ = value;
            for (g, t) in grad.iter_mut().zip(&theta) {
                *g -= t / prior_variance;
            }
            let _ = penalty;
            let numeric = oracles::central_difference_gradient(
                |th| {
                    let mut scratch = vec![0.0; 6];
                    let v = maxent_value_grad(th, &features, &target, &tag_totals, &mut scratch);
                    v - th.iter().map(|t| t * t).sum::<f64>() / (2.0 * prior_variance)
                },
                &theta,
                1e-5,
            );
            assert!(
                oracles::max_relative_error(&grad, &numeric) < 1e-5,
                "gradient mismatch"
            );
        }
    }

    #[test]
    fn uniform_counts_identical_rows_make_zero_optimal() {
        // All types share the single bias feature; uniform counts.
        let features =
            FeatureTable::from_parts(vec!["bias".into()], vec![vec![0], vec![0], vec![0]]).unwrap();
        let counts = vec![vec![1.0, 1.0]; 3];
        let (theta, result) = mstep_maxent(
            &counts,
            &features,
            &[0.0, 0.0],
            &LbfgsConfig::default(),
            f64::INFINITY,
            2,
        )
        .unwrap();
        let _ = result;
        // Gradient at zero is zero: uniform softmax already matches the target.
        assert!(theta.iter().all(|t| t.abs() < 1e-9), "{theta:?}");
    }

    #[test]
    fn saturated_identity_features_match_multinomial_mstep() {
        use rand::Rng;
        use rand::SeedableRng;
        // One identity feature per type, no sharing: softmax can represent
        // any distribution, so the unregularized optimum is count/total.
        let features = FeatureTable::from_parts(
            vec!["id0".into(), "id1".into(), "id2".into(), "id3".into()],
            vec![vec![0], vec![1], vec![2], vec![3]],
        )
        .unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        let counts: Vec<Vec<f64>> = (0..4)
            .map(|_| (0..2).map(|_| rng.random_range(0.5..4.0)).collect())
            .collect();
        let (theta, _) = mstep_maxent(
            &counts,
            &features,
            &vec![0.0; 8],
            &LbfgsConfig {
                max_iters: 500,
                grad_tol: 1e-10,
                rel_tol: 1e-16,
                ..Default::default()
            },
            1e12,
            2,
        )
        .unwrap();
        let model = HmmModel {
            num_states: 2,
            transitions: vec![vec![0.5, 0.5]; 3],
            emission: Emission::MaxEnt {
                theta,
                features,
            },
        };
        let log_emit = model.emission_log_probs();
        for tag in 0..2 {
            let total: f64 = counts.iter().map(|r| r[tag]).sum();
            for x in 0..4 {
                let expected = counts[x][tag] / total;
                assert!(
                    (log_emit[x][tag].exp() - expected).abs() < 1e-4,
                    "tag {tag} type {x}: {} vs {}",
                    log_emit[x][tag].exp(),
                    expected
                );
            }
        }
    }

    #[test]
    fn vb_large_alpha_is_near_uniform() {
        let counts = vec![5.0, 1.0, 0.5];
        let updated = vb_update_row(&counts, 1e6);
        for &p in &updated {
            assert!((p - 1.0 / 3.0).abs() < 1e-3);
        }
    }

    #[test]
    fn vb_small_alpha_concentrates() {
        let counts = vec![10.0, 0.0, 0.0];
        let updated = vb_update_row(&counts, 0.001);
        assert!(updated[0] > 0.95);
        assert!(updated[1] < 1e-3 && updated[2] < 1e-3);
    }

    #[test]
    fn vb_update_matches_digamma_formula() {
        let counts = vec![2.0, 3.0, 0.5];
        let alpha = 0.1;
        let updated = vb_update_row(&counts, alpha);
        let total = 5.5;
        for (c, u) in counts.iter().zip(&updated) {
            let expected = digamma(c + alpha).exp() / digamma(total + 3.0 * alpha).exp();
            assert!((u - expected).abs() < 1e-10);
        }
        // Anchor digamma itself against known values.
        assert!((digamma(1.0) - (-0.5772156649015329)).abs() < 1e-12);
        assert!((digamma(0.5) - (-1.9635100260214235)).abs() < 1e-12);
    }

    #[test]
    fn vb_rejects_maxent_models() {
        let (corpus, vocab) = tiny_corpus();
        let features = build_features(&vocab, &FeatureConfig::default()).unwrap();
        let config = TrainConfig::default();
        let model = init_model(2, &vocab, Some(&features), &config);
        assert!(matches!(
            vb_train(&corpus, model, &config),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn dg_gradient_matches_finite_differences() {
        use rand::Rng;
        use rand::SeedableRng;
        let sentences: Vec<Vec<String>> = vec![
            vec!["aa".into(), "ab".into()],
            vec!["ba".into(), "aa".into(), "ab".into()],
            vec!["bb".into()],
        ];
        let (corpus, vocab) =
            build_corpus("toy", &sentences, None, &PreprocessPolicy::raw()).unwrap();
        let features = build_features(&vocab, &FeatureConfig::large()).unwrap();
        let j = 2;
        let f = features.num_features();
        let n = j * f + (j + 1) * j;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(13);
        let inv_variance: f64 = 1.0 / 7.0;

        let eval = |u: &[f64]| -> f64 {
            let (theta, transitions) = dg_unpack(u, j, f);
            let model = HmmModel {
                num_states: j,
                transitions,
                emission: Emission::MaxEnt {
                    theta: theta.clone(),
                    features: features.clone(),
                },
            };
            let post = forward_backward(&model, &corpus, None).unwrap();
            let penalty: f64 = theta.iter().map(|t| t * t).sum::<f64>();
            post.loglik - 0.5 * inv_variance * penalty
        };

        for _ in 0..20 {
            let u: Vec<f64> = (0..n).map(|_| rng.random_range(-0.8..0.8)).collect();
            let mut grad = vec![0.0; n];
            let (value, _) =
                dg_objective(&corpus, &features, &u, j, 7.0, false, &mut grad).unwrap();
            assert!((value - eval(&u)).abs() < 1e-12);
            let numeric = oracles::central_difference_gradient(eval, &u, 1e-5);
            assert!(
                oracles::max_relative_error(&grad, &numeric) < 1e-5,
                "dg gradient mismatch"
            );
        }
    }

    #[test]
    fn dg_objective_equals_estep_loglik() {
        let sentences: Vec<Vec<String>> = vec![vec!["aa".into(), "ab".into(), "aa".into()]];
        let (corpus, vocab) =
            build_corpus("toy", &sentences, None, &PreprocessPolicy::raw()).unwrap();
        let features = build_features(&vocab, &FeatureConfig::large()).unwrap();
        let config = TrainConfig {
            seed: 2,
            ..Default::default()
        };
        let model = init_model(2, &vocab, Some(&features), &config);
        let post = forward_backward(&model, &corpus, None).unwrap();

        // Pack the same parameters into the DG vector and evaluate.
        let j = 2;
        let f = features.num_features();
        let mut u = match &model.emission {
            Emission::MaxEnt { theta, .. } => theta.clone(),
            _ => unreachable!(),
        };
        for row in &model.transitions {
            for &p in row {
                u.push(p.ln());
            }
        }
        let (_, transitions) = dg_unpack(&u, j, f);
        // Softmax of log probabilities recovers the probabilities.
        for (row, orig) in transitions.iter().zip(&model.transitions) {
            for (a, b) in row.iter().zip(orig) {
                assert!((a - b).abs() < 1e-12);
            }
        }
        let rebuilt = HmmModel {
            num_states: j,
            transitions,
            emission: model.emission.clone(),
        };
        let post2 = forward_backward(&rebuilt, &corpus, None).unwrap();
        assert!((post.loglik - post2.loglik).abs() < 1e-12);
    }

    #[test]
    fn dg_competitive_with_em_across_seeds() {
        let (corpus, vocab, _) = crate::synth::synth_generate(&crate::synth::SynthConfig {
            states: 2,
            vocab_size: 10,
            tokens: 600,
            sparsity: 1.0,
            seed: 99,
            ..Default::default()
        })
        .unwrap();
        let features = build_features(&vocab, &FeatureConfig::large()).unwrap();
        let mut dg_wins = 0;
        for seed in 0..10u64 {
            let config = TrainConfig {
                iterations: 25,
                seed,
                rel_tol: 0.0,
                ..Default::default()
            };
            let model = init_model(2, &vocab, Some(&features), &config);
            let (em_model, _) = em_train(&corpus, model.clone(), &config).unwrap();
            let (dg_model, _) = dg_train(&corpus, model, &config).unwrap();
            let em_ll = forward_backward(&em_model, &corpus, None).unwrap().loglik;
            let dg_ll = forward_backward(&dg_model, &corpus, None).unwrap().loglik;
            if dg_ll >= em_ll {
                dg_wins += 1;
            }
        }
        assert!(dg_wins >= 5, "direct gradient won only {dg_wins}/10 seeds");
    }
}
