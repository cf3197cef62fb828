//! Experiment orchestration: config files, per-seed training runs, tagging
//! with unseen-word fallback, evaluation, and run manifests.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::corpus::{load_corpus, read_raw_sentences, Corpus, PreprocessPolicy};
use crate::error::{Error, Result};
use crate::eval::{build_contingency, compute_metrics, multi_seed_report, MetricReport};
use crate::features::{build_features, FeatureConfig, FeatureVariant};
use crate::hmm::{forward_backward, posterior_decode, viterbi_decode, Emission, HmmModel};
use crate::model_io::{load_model, save_model, FeatureMeta, SavedModel};
use crate::pr::{ConstraintIndex, PrConfig};
use crate::train::{dg_train, em_train, init_model, vb_train, TrainConfig, TrainTrace};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EmissionKind {
    Multinomial,
    MaxEnt,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrainAlgo {
    Em,
    Dg,
    Vb,
    Pr,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DecodeMode {
    Posterior,
    Viterbi,
}

#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub name: String,
    pub train_path: PathBuf,
    pub test_path: Option<PathBuf>,
    pub emission: EmissionKind,
    pub algorithm: TrainAlgo,
    pub states: usize,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    pub decode: DecodeMode,
    pub train: TrainConfig,
    pub pr: PrConfig,
    pub features: FeatureConfig,
    /// Preprocessing overrides; defaults follow the emission variant.
    pub lowercase: Option<bool>,
    pub unk: Option<bool>,
}

impl ExperimentConfig {
    pub fn new(train_path: PathBuf, out_dir: PathBuf) -> Self {
        ExperimentConfig {
            name: "experiment".into(),
            train_path,
            test_path: None,
            emission: EmissionKind::Multinomial,
            algorithm: TrainAlgo::Em,
            states: 2,
            seeds: vec![0],
            out_dir,
            decode: DecodeMode::Posterior,
            train: TrainConfig::default(),
            pr: PrConfig::default(),
            features: FeatureConfig::default(),
            lowercase: None,
            unk: None,
        }
    }

    /// The multinomial pipeline lowercases and collapses singletons; the
    /// max-ent pipeline sees raw text. Explicit flags override either.
    pub fn policy(&self) -> PreprocessPolicy {
        let default_on = self.emission == EmissionKind::Multinomial;
        PreprocessPolicy {
            lowercase: self.lowercase.unwrap_or(default_on),
            map_singletons_to_unk: self.unk.unwrap_or(default_on),
            ..Default::default()
        }
    }

    /// Parse a flat `key = value` config file. CLI overrides are applied by
    /// the caller on the returned struct.
    pub fn from_file(path: &Path) -> Result<ExperimentConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut pairs = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(path, lineno + 1, "expected `key = value`"))?;
            pairs.insert(key.trim().to_string(), value.trim().to_string());
        }
        let get = |key: &str| pairs.get(key).cloned();
        let train_path = get("train")
            .ok_or_else(|| Error::Config("config is missing `train`".into()))?;
        let out_dir = get("out").ok_or_else(|| Error::Config("config is missing `out`".into()))?;
        let mut config = ExperimentConfig::new(train_path.into(), out_dir.into());
        config.apply_pairs(&pairs)?;
        Ok(config)
    }

    pub fn apply_pairs(&mut self, pairs: &BTreeMap<String, String>) -> Result<()> {
        fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
        where
            T::Err: std::fmt::Display,
        {
            value
                .parse()
                .map_err(|e| Error::Config(format!("bad value for {key}: {e}")))
        }
        for (key, value) in pairs {
            match key.as_str() {
                "name" => self.name = value.clone(),
                "train" => self.train_path = value.into(),
                "test" => self.test_path = Some(value.into()),
                "out" => self.out_dir = value.into(),
                "emission" => {
                    self.emission = match value.as_str() {
                        "multinomial" => EmissionKind::Multinomial,
                        "maxent" => EmissionKind::MaxEnt,
                        other => {
                            return Err(Error::Config(format!("unknown emission {other:?}")))
                        }
                    }
                }
                "algo" => {
                    self.algorithm = match value.as_str() {
                        "em" => TrainAlgo::Em,
                        "dg" => TrainAlgo::Dg,
                        "vb" => TrainAlgo::Vb,
                        "pr" => TrainAlgo::Pr,
                        other => return Err(Error::Config(format!("unknown algo {other:?}"))),
                    }
                }
                "decode" => {
                    self.decode = match value.as_str() {
                        "posterior" => DecodeMode::Posterior,
                        "viterbi" => DecodeMode::Viterbi,
                        other => return Err(Error::Config(format!("unknown decode {other:?}"))),
                    }
                }
                "states" => self.states = parse(key, value)?,
                "iters" => self.train.iterations = parse(key, value)?,
                "jitter" => self.train.jitter = parse(key, value)?,
                "prior-variance" => self.train.l2_prior_variance = parse(key, value)?,
                "vb-alpha" => self.train.vb_emission_alpha = parse(key, value)?,
                "vb-transition-alpha" => self.train.vb_transition_alpha = parse(key, value)?,
                "sigma" => self.pr.sigma = parse(key, value)?,
                "min-occ" => self.pr.min_occurrence = parse(key, value)?,
                "warmup" => self.pr.em_warmup = parse(key, value)?,
                "pr-iters" => self.pr.pr_iterations = parse(key, value)?,
                "dual-iters" => self.pr.dual.max_iters = parse(key, value)?,
                "dual-tol" => self.pr.dual.tol = parse(key, value)?,
                "feature-variant" => {
                    self.features.variant = match value.as_str() {
                        "large" => FeatureVariant::Large,
                        "reduced" => FeatureVariant::Reduced,
                        other => {
                            return Err(Error::Config(format!("unknown feature variant {other:?}")))
                        }
                    }
                }
                "identity-cutoff" => self.features.identity_cutoff = parse(key, value)?,
                "suffix-cutoff" => self.features.suffix_cutoff = parse(key, value)?,
                "max-suffix-len" => self.features.max_suffix_len = parse(key, value)?,
                "lowercase" => self.lowercase = Some(parse(key, value)?),
                "unk" => self.unk = Some(parse(key, value)?),
                "seeds" => {
                    let seeds: std::result::Result<Vec<u64>, _> =
                        value.split(',').map(|s| s.trim().parse()).collect();
                    self.seeds =
                        seeds.map_err(|e| Error::Config(format!("bad seeds list: {e}")))?;
                    if self.seeds.is_empty() {
                        return Err(Error::Config("seeds list is empty".into()));
                    }
                }
                other => return Err(Error::Config(format!("unknown config key {other:?}"))),
            }
        }
        Ok(())
    }

    /// Snapshot for the manifest, in stable key order.
    pub fn snapshot(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "name = {}", self.name);
        let _ = writeln!(out, "train = {}", self.train_path.display());
        if let Some(t) = &self.test_path {
            let _ = writeln!(out, "test = {}", t.display());
        }
        let _ = writeln!(out, "out = {}", self.out_dir.display());
        let emission = match self.emission {
            EmissionKind::Multinomial => "multinomial",
            EmissionKind::MaxEnt => "maxent",
        };
        let _ = writeln!(out, "emission = {emission}");
        let algo = match self.algorithm {
            TrainAlgo::Em => "em",
            TrainAlgo::Dg => "dg",
            TrainAlgo::Vb => "vb",
            TrainAlgo::Pr => "pr",
        };
        let _ = writeln!(out, "algo = {algo}");
        let decode = match self.decode {
            DecodeMode::Posterior => "posterior",
            DecodeMode::Viterbi => "viterbi",
        };
        let _ = writeln!(out, "decode = {decode}");
        let _ = writeln!(out, "states = {}", self.states);
        let seeds: Vec<String> = self.seeds.iter().map(|s| s.to_string()).collect();
        let _ = writeln!(out, "seeds = {}", seeds.join(","));
        let _ = writeln!(out, "iters = {}", self.train.iterations);
        let _ = writeln!(out, "jitter = {}", self.train.jitter);
        let _ = writeln!(out, "prior-variance = {}", self.train.l2_prior_variance);
        let _ = writeln!(out, "vb-alpha = {}", self.train.vb_emission_alpha);
        let _ = writeln!(out, "vb-transition-alpha = {}", self.train.vb_transition_alpha);
        let _ = writeln!(out, "sigma = {}", self.pr.sigma);
        let _ = writeln!(out, "min-occ = {}", self.pr.min_occurrence);
        let _ = writeln!(out, "warmup = {}", self.pr.em_warmup);
        let _ = writeln!(out, "pr-iters = {}", self.pr.pr_iterations);
        let variant = match self.features.variant {
            FeatureVariant::Large => "large",
            FeatureVariant::Reduced => "reduced",
        };
        let _ = writeln!(out, "feature-variant = {variant}");
        let policy = self.policy();
        let _ = writeln!(out, "lowercase = {}", policy.lowercase);
        let _ = writeln!(out, "unk = {}", policy.map_singletons_to_unk);
        out
    }
}

/// Train one model per the experiment settings with the given seed.
pub fn train_one(
    config: &ExperimentConfig,
    corpus: &Corpus,
    vocab: &crate::corpus::Vocabulary,
    seed: u64,
) -> Result<(SavedModel, TrainTrace)> {
    let mut train_config = config.train.clone();
    train_config.seed = seed;

    let (features, feature_meta) = match config.emission {
        EmissionKind::Multinomial => (None, None),
        EmissionKind::MaxEnt => {
            let table = build_features(vocab, &config.features)?;
            let meta = FeatureMeta {
                variant: config.features.variant,
                max_suffix_len: config.features.max_suffix_len,
                identity_cutoff: config.features.identity_cutoff,
                suffix_cutoff: config.features.suffix_cutoff,
                include_bias: config.features.include_bias,
            };
            (Some(table), Some(meta))
        }
    };

    let model = init_model(config.states, vocab, features.as_ref(), &train_config);
    let (model, trace) = match config.algorithm {
        TrainAlgo::Em => em_train(corpus, model, &train_config)?,
        TrainAlgo::Dg => dg_train(corpus, model, &train_config)?,
        TrainAlgo::Vb => vb_train(corpus, model, &train_config)?,
        TrainAlgo::Pr => {
            let index = ConstraintIndex::build(corpus, vocab, config.pr.min_occurrence);
            crate::pr::pr_train(corpus, model, &index, &config.pr, &train_config)?
        }
    };

    Ok((
        SavedModel {
            model,
            vocab: vocab.clone(),
            policy: config.policy(),
            feature_meta,
        },
        trace,
    ))
}

/// Map a raw corpus into a saved model's type space, extending the emission
/// table for unseen words: the unk row (or a uniform row) for multinomial
/// models, feature-scored emissions for max-ent models.
pub fn prepare_for_tagging(saved: &SavedModel, path: &Path) -> Result<(Corpus, HmmModel)> {
    let (sentences, gold) = read_raw_sentences(path)?;
    let vocab = &saved.vocab;
    let policy = &saved.policy;
    let j = saved.model.num_states;

    let unk_id = if policy.map_singletons_to_unk {
        vocab.lookup(&policy.unk_token)
    } else {
        None
    };

    // Unseen types get fresh ids past the model vocabulary.
    let mut extra_types: Vec<String> = Vec::new();
    let mut extra_index: std::collections::HashMap<String, usize> = std::collections::HashMap::new();
    let mapped: Vec<Vec<usize>> = sentences
        .iter()
        .map(|sentence| {
            sentence
                .iter()
                .map(|token| {
                    let cased = policy.apply_case(token);
                    if let Some(id) = vocab.lookup(&cased) {
                        return id;
                    }
                    if let Some(unk) = unk_id {
                        return unk;
                    }
                    let next = vocab.len() + extra_types.len();
                    *extra_index.entry(cased.clone()).or_insert_with(|| {
                        extra_types.push(cased);
                        next
                    })
                })
                .collect()
        })
        .collect();
    let corpus = Corpus::from_parts(
        &path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
        mapped,
        gold,
    )?;

    if extra_types.is_empty() {
        return Ok((corpus, saved.model.clone()));
    }

    // Extend the emission table with fallback rows for the unseen types.
    let base_log = saved.model.emission_log_probs();
    let mut probs: Vec<Vec<f64>> = base_log
        .iter()
        .map(|row| row.iter().map(|lp| lp.exp()).collect())
        .collect();
    match &saved.model.emission {
        Emission::Multinomial { .. } => {
            let fallback: Vec<f64> = match unk_id {
                Some(unk) => probs[unk].clone(),
                None => vec![1.0 / vocab.len() as f64; j],
            };
            for _ in &extra_types {
                probs.push(fallback.clone());
            }
        }
        Emission::MaxEnt { theta, features } => {
            let meta = saved
                .feature_meta
                .clone()
                .unwrap_or(FeatureMeta {
                    variant: FeatureVariant::Reduced,
                    max_suffix_len: 3,
                    identity_cutoff: 10,
                    suffix_cutoff: 20,
                    include_bias: true,
                });
            let f = features.num_features();
            // log Z per tag over the known vocabulary.
            let mut log_z = vec![0.0; j];
            for tag in 0..j {
                let block = &theta[tag * f..(tag + 1) * f];
                let scores: Vec<f64> = (0..features.num_types())
                    .map(|x| features.row(x).iter().map(|&k| block[k as usize]).sum())
                    .collect();
                log_z[tag] = crate::hmm::log_sum_exp(&scores);
            }
            for word in &extra_types {
                let active = features.extract_unseen(word, meta.variant, meta.max_suffix_len);
                let row: Vec<f64> = (0..j)
                    .map(|tag| {
                        let block = &theta[tag * f..(tag + 1) * f];
                        let score: f64 = active.iter().map(|&k| block[k as usize]).sum();
                        (score - log_z[tag]).exp()
                    })
                    .collect();
                probs.push(row);
            }
        }
    }

    let model = HmmModel {
        num_states: j,
        transitions: saved.model.transitions.clone(),
        emission: Emission::Multinomial { probs },
    };
    Ok((corpus, model))
}

/// Decode a corpus file with a saved model.
pub fn tag_corpus(saved: &SavedModel, path: &Path, decode: DecodeMode) -> Result<(Corpus, Vec<Vec<usize>>)> {
    let (corpus, model) = prepare_for_tagging(saved, path)?;
    let tags = match decode {
        DecodeMode::Posterior => posterior_decode(&forward_backward(&model, &corpus, None)?),
        DecodeMode::Viterbi => viterbi_decode(&model, &corpus)?,
    };
    Ok((corpus, tags))
}

/// Tag-file format: one cluster id per token line, blank line between sentences.
pub fn write_tag_file(tags: &[Vec<usize>], path: &Path) -> Result<()> {
    let mut out = String::new();
    for sentence in tags {
        for t in sentence {
            let _ = writeln!(out, "{t}");
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_tag_file(path: &Path) -> Result<Vec<Vec<usize>>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut sentences = Vec::new();
    let mut current = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            if !current.is_empty() {
                sentences.push(std::mem::take(&mut current));
            }
            continue;
        }
        let id: usize = line
            .parse()
            .map_err(|e| Error::parse(path, lineno + 1, format!("bad cluster id: {e}")))?;
        current.push(id);
    }
    if !current.is_empty() {
        sentences.push(current);
    }
    if sentences.is_empty() {
        return Err(Error::EmptyCorpus(path.display().to_string()));
    }
    Ok(sentences)
}

#[derive(Clone, Debug)]
pub enum SeedOutcome {
    Done {
        seed: u64,
        model_path: PathBuf,
        trace_path: PathBuf,
        tags_path: PathBuf,
        report: MetricReport,
    },
    Failed {
        seed: u64,
        stage: String,
        message: String,
    },
}

#[derive(Clone, Debug)]
pub struct RunManifest {
    pub config_snapshot: String,
    pub version: String,
    pub outcomes: Vec<SeedOutcome>,
    pub mean: Option<crate::eval::MultiSeedReport>,
    pub manifest_path: PathBuf,
}

impl RunManifest {
    pub fn text(&self) -> String {
        let mut out = String::from("sparsepos-manifest v1\n");
        let _ = writeln!(out, "version = {}", self.version);
        out.push_str(&self.config_snapshot);
        for outcome in &self.outcomes {
            match outcome {
                SeedOutcome::Done {
                    seed,
                    model_path,
                    trace_path,
                    tags_path,
                    report,
                } => {
                    let _ = writeln!(out, "seed.{seed}.model = {}", model_path.display());
                    let _ = writeln!(out, "seed.{seed}.trace = {}", trace_path.display());
                    let _ = writeln!(out, "seed.{seed}.tags = {}", tags_path.display());
                    let _ = writeln!(out, "seed.{seed}.one-many = {}", report.one_many);
                    let _ = writeln!(out, "seed.{seed}.one-one = {}", report.one_one);
                    let _ = writeln!(out, "seed.{seed}.vi = {}", report.vi);
                    let _ = writeln!(out, "seed.{seed}.v = {}", report.v);
                }
                SeedOutcome::Failed {
                    seed,
                    stage,
                    message,
                } => {
                    let _ = writeln!(out, "seed.{seed}.error = {stage}: {message}");
                }
            }
        }
        if let Some(mean) = &self.mean {
            let _ = writeln!(out, "mean.one-many = {}", mean.one_many);
            let _ = writeln!(out, "mean.one-one = {}", mean.one_one);
            let _ = writeln!(out, "mean.vi = {}", mean.vi);
            let _ = writeln!(out, "mean.v = {}", mean.v);
        }
        out
    }
}

fn run_seed(
    config: &ExperimentConfig,
    corpus: &Corpus,
    vocab: &crate::corpus::Vocabulary,
    test_path: &Path,
    seed: u64,
) -> std::result::Result<SeedOutcome, (String, Error)> {
    let stage = |name: &str| name.to_string();
    let seed_dir = config.out_dir.join(format!("seed{seed}"));
    std::fs::create_dir_all(&seed_dir)
        .map_err(|e| (stage("setup"), Error::io(&seed_dir, e)))?;

    let (saved, trace) =
        train_one(config, corpus, vocab, seed).map_err(|e| (stage("train"), e))?;

    let model_path = seed_dir.join("model.txt");
    save_model(&saved, &model_path).map_err(|e| (stage("save-model"), e))?;
    let trace_path = seed_dir.join("trace.tsv");
    trace
        .write_tsv(&trace_path)
        .map_err(|e| (stage("save-trace"), e))?;

    let (test_corpus, tags) =
        tag_corpus(&saved, test_path, config.decode).map_err(|e| (stage("tag"), e))?;
    let tags_path = seed_dir.join("tags.txt");
    write_tag_file(&tags, &tags_path).map_err(|e| (stage("save-tags"), e))?;

    let gold = test_corpus
        .gold()
        .ok_or_else(|| (stage("eval"), Error::Config("test corpus has no gold tags".into())))?;
    let table = build_contingency(&tags, &gold.tags, config.states, gold.alphabet.len())
        .map_err(|e| (stage("eval"), e))?;
    let report = compute_metrics(&table);

    Ok(SeedOutcome::Done {
        seed,
        model_path,
        trace_path,
        tags_path,
        report,
    })
}

/// Train per seed, decode the test split, evaluate all metrics, and average
/// across seeds. A failing seed is recorded in the manifest and skipped.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunManifest> {
    std::fs::create_dir_all(&config.out_dir)
        .map_err(|e| Error::io(&config.out_dir, e))?;
    let policy = config.policy();
    let (corpus, vocab) = load_corpus(&config.train_path, &policy)?;
    let test_path = config
        .test_path
        .clone()
        .unwrap_or_else(|| config.train_path.clone());

    let outcomes: Vec<SeedOutcome> = config
        .seeds
        .par_iter()
        .map(|&seed| match run_seed(config, &corpus, &vocab, &test_path, seed) {
            Ok(outcome) => outcome,
            Err((stage, error)) => SeedOutcome::Failed {
                seed,
                stage,
                message: error.to_string(),
            },
        })
        .collect();

    let reports: Vec<MetricReport> = outcomes
        .iter()
        .filter_map(|o| match o {
            SeedOutcome::Done { report, .. } => Some(report.clone()),
            SeedOutcome::Failed { .. } => None,
        })
        .collect();
    if reports.is_empty() {
        let first = outcomes.iter().find_map(|o| match o {
            SeedOutcome::Failed { stage, message, .. } => Some(format!("{stage}: {message}")),
            _ => None,
        });
        return Err(Error::Numerical(format!(
            "every seed failed; first failure: {}",
            first.unwrap_or_default()
        )));
    }
    let mean = multi_seed_report(reports)?;
    std::fs::write(config.out_dir.join("report.tsv"), mean.tsv())
        .map_err(|e| Error::io(config.out_dir.join("report.tsv"), e))?;

    let manifest = RunManifest {
        config_snapshot: config.snapshot(),
        version: crate::VERSION.to_string(),
        outcomes,
        mean: Some(mean),
        manifest_path: config.out_dir.join("manifest.txt"),
    };
    std::fs::write(&manifest.manifest_path, manifest.text())
        .map_err(|e| Error::io(&manifest.manifest_path, e))?;

    // Every artifact named by the manifest must exist and parse.
    for outcome in &manifest.outcomes {
        if let SeedOutcome::Done {
            model_path,
            trace_path,
            tags_path,
            ..
        } = outcome
        {
            load_model(model_path)?;
            read_tag_file(tags_path)?;
            let trace = std::fs::read_to_string(trace_path)
                .map_err(|e| Error::io(trace_path, e))?;
            if !trace.starts_with("iter\t") {
                return Err(Error::Parse {
                    path: trace_path.clone(),
                    line: 1,
                    message: "trace file missing header".into(),
                });
            }
        }
    }
    Ok(manifest)
}
