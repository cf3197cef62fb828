//! Semi-supervised averaged perceptron: a per-token tagger over the max-ent
//! feature templates without frequency cutoffs, optionally augmented with
//! the induced cluster of the current token.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Corpus, Vocabulary};
use crate::error::{Error, Result};

/// One labeled token instance: active feature strings plus the gold tag.
fn token_features(word: &str, cluster: Option<usize>, out: &mut Vec<String>) {
    out.clear();
    out.push("bias".to_string());
    let lower: String = word.chars().flat_map(|c| c.to_lowercase()).collect();
    out.push(format!("id={lower}"));
    let chars: Vec<char> = lower.chars().collect();
    for len in 1..=3.min(chars.len()) {
        let suffix: String = chars[chars.len() - len..].iter().collect();
        out.push(format!("suf={suffix}"));
    }
    if word.chars().next().is_some_and(|c| c.is_uppercase()) {
        out.push("cap".to_string());
    }
    if word.chars().any(|c| c.is_numeric()) {
        out.push("digit".to_string());
    }
    if word.contains('-') {
        out.push("hyphen".to_string());
    }
    if !word.is_empty() && word.chars().all(|c| !c.is_alphanumeric()) {
        out.push("punct".to_string());
    }
    if let Some(c) = cluster {
        out.push(format!("cluster={c}"));
    }
}

/// Averaged multi-class perceptron over string features.
#[derive(Clone, Debug, Default)]
pub struct PerceptronModel {
    /// Final (non-averaged) weights per feature.
    weights: HashMap<String, Vec<f64>>,
    /// Averaged weights, the prediction weights.
    averaged: HashMap<String, Vec<f64>>,
    pub num_tags: usize,
    /// Epochs selected on the development split.
    pub chosen_epochs: usize,
}

impl PerceptronModel {
    fn score(weights: &HashMap<String, Vec<f64>>, features: &[String], num_tags: usize) -> Vec<f64> {
        let mut scores = vec![0.0; num_tags];
        for f in features {
            if let Some(w) = weights.get(f) {
                for (s, wi) in scores.iter_mut().zip(w) {
                    *s += wi;
                }
            }
        }
        scores
    }

    /// Predict with the averaged weights; ties break to the lowest tag.
    pub fn predict(&self, word: &str, cluster: Option<usize>) -> usize {
        let mut feats = Vec::new();
        token_features(word, cluster, &mut feats);
        let scores = Self::score(&self.averaged, &feats, self.num_tags);
        crate::hmm::argmax(&scores)
    }

    pub fn predict_final(&self, word: &str, cluster: Option<usize>) -> usize {
        let mut feats = Vec::new();
        token_features(word, cluster, &mut feats);
        let scores = Self::score(&self.weights, &feats, self.num_tags);
        crate::hmm::argmax(&scores)
    }
}

/// A labeled data set: words, gold tags, and optional per-token clusters,
/// flattened to token instances.
pub struct LabeledSet {
    pub words: Vec<String>,
    pub tags: Vec<usize>,
    pub clusters: Option<Vec<usize>>,
    pub num_tags: usize,
    /// Sentence boundaries as (start, end) token ranges.
    pub sentences: Vec<(usize, usize)>,
}

impl LabeledSet {
    pub fn from_corpus(
        corpus: &Corpus,
        vocab: &Vocabulary,
        clusters: Option<&[Vec<usize>]>,
    ) -> Result<LabeledSet> {
        let gold = corpus
            .gold()
            .ok_or_else(|| Error::Config("semi-supervised training needs gold tags".into()))?;
        if let Some(c) = clusters {
            if c.len() != corpus.num_sentences()
                || c.iter()
                    .zip(corpus.sentences())
                    .any(|(cs, s)| cs.len() != s.len())
            {
                return Err(Error::Shape("cluster sequences do not match corpus".into()));
            }
        }
        let mut words = Vec::with_capacity(corpus.num_tokens());
        let mut tags = Vec::with_capacity(corpus.num_tokens());
        let mut flat_clusters = clusters.map(|_| Vec::with_capacity(corpus.num_tokens()));
        let mut sentences = Vec::with_capacity(corpus.num_sentences());
        for (n, sentence) in corpus.sentences().iter().enumerate() {
            let start = words.len();
            for (i, &type_id) in sentence.iter().enumerate() {
                words.push(vocab.type_str(type_id).to_string());
                tags.push(gold.tags[n][i]);
                if let (Some(fc), Some(c)) = (&mut flat_clusters, clusters) {
                    fc.push(c[n][i]);
                }
            }
            sentences.push((start, words.len()));
        }
        Ok(LabeledSet {
            words,
            tags,
            clusters: flat_clusters,
            num_tags: gold.alphabet.len(),
            sentences,
        })
    }

    fn cluster_of(&self, token: usize) -> Option<usize> {
        self.clusters.as_ref().map(|c| c[token])
    }
}

#[derive(Clone, Debug)]
pub struct PerceptronConfig {
    pub max_epochs: usize,
    pub dev_fraction: f64,
    pub seed: u64,
}

impl Default for PerceptronConfig {
    fn default() -> Self {
        PerceptronConfig {
            max_epochs: 15,
            dev_fraction: 0.2,
            seed: 0,
        }
    }
}

/// Train for exactly `epochs` passes over the given sentence subset, with
/// full averaging: the averaged weights are the mean of the weight vector
/// after every token step.
pub fn train_fixed_epochs(
    data: &LabeledSet,
    sentence_ids: &[usize],
    epochs: usize,
    seed: u64,
) -> PerceptronModel {
    let num_tags = data.num_tags;
    let mut weights: HashMap<String, Vec<f64>> = HashMap::new();
    // Lazy averaging: totals accumulate weight * steps-since-last-update.
    let mut totals: HashMap<String, Vec<f64>> = HashMap::new();
    let mut stamps: HashMap<String, Vec<usize>> = HashMap::new();
    let mut step = 0usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = sentence_ids.to_vec();
    let mut feats = Vec::new();

    for _ in 0..epochs {
        order.shuffle(&mut rng);
        for &s in &order {
            let (start, end) = data.sentences[s];
            for t in start..end {
                step += 1;
                token_features(&data.words[t], data.cluster_of(t), &mut feats);
                let scores = PerceptronModel::score(&weights, &feats, num_tags);
                let predicted = crate::hmm::argmax(&scores);
                let gold = data.tags[t];
                if predicted != gold {
                    for f in &feats {
                        let w = weights.entry(f.clone()).or_insert_with(|| vec![0.0; num_tags]);
                        let tot = totals.entry(f.clone()).or_insert_with(|| vec![0.0; num_tags]);
                        let st = stamps.entry(f.clone()).or_insert_with(|| vec![0; num_tags]);
                        for &(tag, delta) in &[(gold, 1.0), (predicted, -1.0)] {
                            tot[tag] += (step - st[tag]) as f64 * w[tag];
                            st[tag] = step;
                            w[tag] += delta;
                        }
                    }
                }
            }
        }
    }

    // Flush pending averages.
    let mut averaged = HashMap::with_capacity(weights.len());
    for (f, w) in &weights {
        let tot = totals.get(f).cloned().unwrap_or_else(|| vec![0.0; num_tags]);
        let st = stamps.get(f).cloned().unwrap_or_else(|| vec![0; num_tags]);
        let avg: Vec<f64> = (0..num_tags)
            .map(|tag| {
                let total = tot[tag] + (step.saturating_sub(st[tag])) as f64 * w[tag];
                if step > 0 {
                    total / step as f64
                } else {
                    0.0
                }
            })
            .collect();
        averaged.insert(f.clone(), avg);
    }

    PerceptronModel {
        weights,
        averaged,
        num_tags,
        chosen_epochs: epochs,
    }
}

fn accuracy_on(data: &LabeledSet, model: &PerceptronModel, sentence_ids: &[usize]) -> f64 {
    let mut correct = 0usize;
    let mut total = 0usize;
    for &s in sentence_ids {
        let (start, end) = data.sentences[s];
        for t in start..end {
            total += 1;
            if model.predict(&data.words[t], data.cluster_of(t)) == data.tags[t] {
                correct += 1;
            }
        }
    }
    if total == 0 {
        0.0
    } else {
        correct as f64 / total as f64
    }
}

/// Full training protocol: hold out `dev_fraction` of the sentences, pick
/// the epoch count by development accuracy (ties to the smaller count),
/// then retrain on everything for that many epochs.
pub fn perceptron_train(
    data: &LabeledSet,
    sentence_ids: &[usize],
    config: &PerceptronConfig,
) -> Result<PerceptronModel> {
    if sentence_ids.is_empty() {
        return Err(Error::EmptyCorpus("empty labeled set".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut shuffled: Vec<usize> = sentence_ids.to_vec();
    shuffled.shuffle(&mut rng);
    let dev_len = ((shuffled.len() as f64 * config.dev_fraction).round() as usize)
        .min(shuffled.len().saturating_sub(1));
    let (dev, train) = shuffled.split_at(dev_len);

    let mut best_epochs = 0usize;
    let mut best_accuracy = -1.0;
    for nu in 0..=config.max_epochs {
        let model = train_fixed_epochs(data, train, nu, config.seed);
        let acc = accuracy_on(data, &model, dev);
        if acc > best_accuracy {
            best_accuracy = acc;
            best_epochs = nu;
        }
    }

    let model = train_fixed_epochs(data, sentence_ids, best_epochs, config.seed);
    Ok(PerceptronModel {
        chosen_epochs: best_epochs,
        ..model
    })
}

#[derive(Clone, Debug)]
pub struct CurveConfig {
    pub sizes: Vec<usize>,
    pub samples_per_size: usize,
    pub dev_fraction: f64,
    /// Held-out test sentences taken from the end of the corpus.
    pub test_size: usize,
    pub max_epochs: usize,
}

impl Default for CurveConfig {
    fn default() -> Self {
        CurveConfig {
            sizes: vec![50, 100, 200, 500],
            samples_per_size: 10,
            dev_fraction: 0.2,
            test_size: 500,
            max_epochs: 15,
        }
    }
}

#[derive(Clone, Debug)]
pub struct CurvePoint {
    pub size: usize,
    pub source: String,
    pub mean_accuracy: f64,
    pub per_sample: Vec<f64>,
}

/// Learning curve over labeled-set sizes for each cluster source plus a
/// no-cluster baseline. Sources supply one cluster id per token.
pub fn learning_curve(
    corpus: &Corpus,
    vocab: &Vocabulary,
    sources: &[(String, Vec<Vec<usize>>)],
    config: &CurveConfig,
    seed: u64,
) -> Result<Vec<CurvePoint>> {
    let n = corpus.num_sentences();
    if config.test_size >= n {
        return Err(Error::Config(format!(
            "test size {} leaves no training sentences (corpus has {n})",
            config.test_size
        )));
    }
    let pool: Vec<usize> = (0..n - config.test_size).collect();
    let test: Vec<usize> = (n - config.test_size..n).collect();
    if config.sizes.iter().any(|&s| s == 0 || s > pool.len()) {
        return Err(Error::Config("curve size exceeds available sentences".into()));
    }

    let mut datasets: Vec<(String, LabeledSet)> = Vec::with_capacity(sources.len() + 1);
    datasets.push((
        "baseline".to_string(),
        LabeledSet::from_corpus(corpus, vocab, None)?,
    ));
    for (name, clusters) in sources {
        datasets.push((
            name.clone(),
            LabeledSet::from_corpus(corpus, vocab, Some(clusters))?,
        ));
    }

    let mut out = Vec::new();
    for &size in &config.sizes {
        // The sampled training sets are shared across sources.
        let mut samples = Vec::with_capacity(config.samples_per_size);
        for k in 0..config.samples_per_size {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((size as u64) << 20) ^ k as u64);
            let mut pool = pool.clone();
            pool.shuffle(&mut rng);
            pool.truncate(size);
            samples.push(pool);
        }
        for (name, data) in &datasets {
            let per_sample: Vec<f64> = samples
                .iter()
                .enumerate()
                .map(|(k, sample)| {
                    let pconfig = PerceptronConfig {
                        max_epochs: config.max_epochs,
                        dev_fraction: config.dev_fraction,
                        seed: seed ^ k as u64,
                    };
                    let model = perceptron_train(data, sample, &pconfig)?;
                    Ok(accuracy_on(data, &model, &test))
                })
                .collect::<Result<_>>()?;
            let mean = per_sample.iter().sum::<f64>() / per_sample.len() as f64;
            out.push(CurvePoint {
                size,
                source: name.clone(),
                mean_accuracy: mean,
                per_sample,
            });
        }
    }
    Ok(out)
}

pub fn curve_tsv(points: &[CurvePoint]) -> String {
    use std::fmt::Write;
    let mut out = String::from("size\tsource\tmean-accuracy\tper-sample\n");
    for p in points {
        let samples: Vec<String> = p.per_sample.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}",
            p.size,
            p.source,
            p.mean_accuracy,
            samples.join(",")
        );
    }
    out
}
