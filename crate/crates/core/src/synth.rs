//! Synthetic corpus generation from a ground-truth HMM with controllable
//! word-tag sparsity, used as the test oracle for desk-scale runs.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};

use crate::corpus::{build_corpus, Corpus, GoldTags, Vocabulary};
use crate::error::{Error, Result};
use crate::hmm::{Emission, HmmModel};

#[derive(Clone, Debug)]
pub struct SynthConfig {
    pub states: usize,
    pub vocab_size: usize,
    /// Stop after at least this many tokens.
    pub tokens: usize,
    /// Fraction of word types restricted to a single tag.
    pub sparsity: f64,
    pub seed: u64,
    pub mean_sentence_len: usize,
    /// Zipf exponent for word frequencies (rank = type index).
    pub zipf_exponent: f64,
    /// Concentration of the Dirichlet transition rows; smaller is peakier.
    pub transition_concentration: f64,
    /// Append tag-correlated suffixes to word strings.
    pub morphology: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            states: 2,
            vocab_size: 50,
            tokens: 1000,
            sparsity: 1.0,
            seed: 0,
            mean_sentence_len: 10,
            zipf_exponent: 1.1,
            transition_concentration: 0.4,
            morphology: true,
        }
    }
}

/// Suffix inventory cycled over tags when morphology is on.
const TAG_SUFFIXES: &[&[&str]] = &[
    &["ing", "ed"],
    &["tion", "ment"],
    &["ly", "ily"],
    &["ous", "ful"],
    &["er", "est"],
    &["ism", "ist"],
    &["ize", "ate"],
    &["ness", "ity"],
];

fn base26(mut n: usize, width: usize) -> String {
    let mut chars = vec!['a'; width];
    for slot in chars.iter_mut().rev() {
        *slot = (b'a' + (n % 26) as u8) as char;
        n /= 26;
    }
    chars.into_iter().collect()
}

fn dirichlet_row(rng: &mut ChaCha8Rng, dim: usize, concentration: f64) -> Vec<f64> {
    let gamma = Gamma::new(concentration, 1.0).unwrap();
    let mut row: Vec<f64> = (0..dim).map(|_| gamma.sample(rng).max(1e-12)).collect();
    let total: f64 = row.iter().sum();
    row.iter_mut().for_each(|p| *p /= total);
    row
}

/// Sample a corpus with gold tags from a generated HMM. Returns the corpus,
/// its vocabulary, and the generating model (over the same type indices).
pub fn synth_generate(config: &SynthConfig) -> Result<(Corpus, Vocabulary, HmmModel)> {
    let j = config.states;
    let v = config.vocab_size;
    if j < 1 || v < 1 {
        return Err(Error::Config("states and vocab size must be >= 1".into()));
    }
    if !(0.0..=1.0).contains(&config.sparsity) {
        return Err(Error::Config("sparsity must lie in [0, 1]".into()));
    }
    if v < j {
        return Err(Error::Config("vocab size must be >= number of states".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    // Word strings: fixed-width unique base plus an optional suffix drawn
    // from the primary tag's inventory. Fixed width keeps strings injective.
    let width = {
        let mut w = 1;
        let mut span = 26usize;
        while span < v {
            span *= 26;
            w += 1;
        }
        w
    };
    let mut strings = Vec::with_capacity(v);
    let mut primary = Vec::with_capacity(v);
    let mut allowed: Vec<Vec<usize>> = Vec::with_capacity(v);
    for t in 0..v {
        let tag = t % j;
        primary.push(tag);
        let mut tags = vec![tag];
        if config.sparsity < 1.0 && j > 1 && rng.random_range(0.0..1.0) > config.sparsity {
            let mut other = rng.random_range(0..j - 1);
            if other >= tag {
                other += 1;
            }
            tags.push(other);
        }
        allowed.push(tags);
        let base = base26(t, width);
        if config.morphology {
            let inventory = TAG_SUFFIXES[tag % TAG_SUFFIXES.len()];
            let suffix = inventory[rng.random_range(0..inventory.len())];
            strings.push(format!("{base}{suffix}"));
        } else {
            strings.push(base);
        }
    }

    let transitions: Vec<Vec<f64>> = (0..=j)
        .map(|_| dirichlet_row(&mut rng, j, config.transition_concentration))
        .collect();

    // Zipf weights by type index, restricted to each tag's support.
    let zipf: Vec<f64> = (0..v)
        .map(|t| 1.0 / ((t + 1) as f64).powf(config.zipf_exponent))
        .collect();
    let mut emission = vec![vec![0.0; j]; v];
    for tag in 0..j {
        let total: f64 = (0..v)
            .filter(|&t| allowed[t].contains(&tag))
            .map(|t| zipf[t])
            .sum();
        for t in 0..v {
            if allowed[t].contains(&tag) {
                emission[t][tag] = zipf[t] / total;
            }
        }
    }

    // Cumulative samplers.
    let sample_categorical = |rng: &mut ChaCha8Rng, weights: &[f64]| -> usize {
        let mut u = rng.random_range(0.0..1.0);
        for (i, w) in weights.iter().enumerate() {
            if u < *w {
                return i;
            }
            u -= w;
        }
        weights.len() - 1
    };

    let min_len = (config.mean_sentence_len / 2).max(1);
    let max_len = (config.mean_sentence_len * 3).div_ceil(2).max(min_len + 1);
    let mut sentences: Vec<Vec<String>> = Vec::new();
    let mut tag_sentences: Vec<Vec<usize>> = Vec::new();
    let mut total_tokens = 0usize;
    while total_tokens < config.tokens {
        let len = rng.random_range(min_len..=max_len);
        let mut words = Vec::with_capacity(len);
        let mut tags = Vec::with_capacity(len);
        let mut state = sample_categorical(&mut rng, &transitions[j]);
        for i in 0..len {
            if i > 0 {
                state = sample_categorical(&mut rng, &transitions[state]);
            }
            let emit_col: Vec<f64> = (0..v).map(|t| emission[t][state]).collect();
            let word = sample_categorical(&mut rng, &emit_col);
            words.push(strings[word].clone());
            tags.push(state);
        }
        total_tokens += len;
        sentences.push(words);
        tag_sentences.push(tags);
    }

    let alphabet: Vec<String> = (0..j).map(|t| format!("T{t}")).collect();
    let gold = GoldTags {
        alphabet,
        tags: tag_sentences,
    };
    let (corpus, vocab) =
        build_corpus("synthetic", &sentences, Some(gold), &crate::corpus::PreprocessPolicy::raw())?;

    // Re-index the generator's emission table onto the corpus vocabulary
    // (types the sample never used are dropped, so renormalize columns).
    let mut probs = vec![vec![0.0; j]; vocab.len()];
    for id in 0..vocab.len() {
        let original = strings
            .iter()
            .position(|s| s == vocab.type_str(id))
            .expect("sampled word must come from the generator inventory");
        for tag in 0..j {
            probs[id][tag] = emission[original][tag];
        }
    }
    for tag in 0..j {
        let total: f64 = probs.iter().map(|r| r[tag]).sum();
        for row in probs.iter_mut() {
            row[tag] /= total;
        }
    }

    let model = HmmModel {
        num_states: j,
        transitions,
        emission: Emission::Multinomial { probs },
    };
    Ok((corpus, vocab, model))
}
