use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use sparsepos::corpus::{corpus_stats, load_corpus, PreprocessPolicy};
use sparsepos::error::Error;
use sparsepos::eval::{
    ambiguity_histogram, build_contingency, compute_metrics, freq_stratified_accuracy,
    multi_seed_report,
};
use sparsepos::experiment::{
    read_tag_file, run_experiment, tag_corpus, write_tag_file, DecodeMode, ExperimentConfig,
    SeedOutcome,
};
use sparsepos::features::{build_features, dump_table, feature_count_report, FeatureConfig};
use sparsepos::model_io::load_model;
use sparsepos::semisup::{curve_tsv, learning_curve, CurveConfig};
use sparsepos::synth::{synth_generate, SynthConfig};

#[derive(Parser)]
#[command(
    name = "sparsepos",
    version,
    about = "Unsupervised part-of-speech induction with sparsity-regularized HMMs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Corpus statistics (Table-style counts and gold ambiguity).
    Stats {
        file: PathBuf,
        #[arg(long)]
        lowercase: bool,
        /// Map singleton types to the unk token.
        #[arg(long)]
        unk: bool,
    },
    /// Build and inspect the max-ent feature table.
    Features {
        corpus: PathBuf,
        #[arg(long, default_value = "reduced")]
        variant: String,
        /// Write `type<TAB>feat1,feat2,...` lines here.
        #[arg(long)]
        dump: Option<PathBuf>,
    },
    /// Train a model and write it with its trace.
    Train(TrainArgs),
    /// Tag a corpus with a trained model.
    Tag {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value = "posterior")]
        decode: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score predicted clusters against gold tags.
    Eval {
        /// Tag file (one cluster id per token line) from `tag` or an
        /// external system.
        #[arg(long)]
        pred: Vec<PathBuf>,
        /// Gold corpus in token<TAB>tag format.
        #[arg(long)]
        gold: PathBuf,
        #[arg(long, default_value = "all")]
        metrics: String,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the per-frequency-stratum accuracy table.
        #[arg(long)]
        freq_table: Option<PathBuf>,
        /// Also write the hard-assignment ambiguity histogram.
        #[arg(long)]
        ambiguity_hist: Option<PathBuf>,
        /// Regulate words occurring at least this often in the histogram.
        #[arg(long, default_value_t = 10)]
        min_occ: u32,
    },
    /// Semi-supervised perceptron learning curves.
    Semisup {
        #[arg(long)]
        corpus: PathBuf,
        /// Comma-separated tag files used as cluster features.
        #[arg(long)]
        clusters: String,
        #[arg(long, default_value = "50,100,200,500")]
        sizes: String,
        #[arg(long, default_value_t = 10)]
        samples: usize,
        #[arg(long, default_value_t = 500)]
        test_size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic corpus from a known HMM.
    Synth {
        #[arg(long, default_value_t = 8)]
        states: usize,
        #[arg(long, default_value_t = 2000)]
        vocab: usize,
        #[arg(long, default_value_t = 50000)]
        tokens: usize,
        #[arg(long, default_value_t = 1.0)]
        sparsity: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a full multi-seed experiment from a config file.
    Experiment {
        config: PathBuf,
        /// `key=value` overrides applied on top of the file.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
}

#[derive(Args)]
struct TrainArgs {
    corpus: PathBuf,
    #[arg(long, default_value = "em")]
    algo: String,
    #[arg(long, default_value = "multinomial")]
    emission: String,
    #[arg(long, default_value_t = 17)]
    states: usize,
    #[arg(long, default_value_t = 200)]
    iters: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10.0)]
    prior_variance: f64,
    #[arg(long, default_value_t = 0.001)]
    vb_alpha: f64,
    #[arg(long, default_value_t = 32.0)]
    sigma: f64,
    #[arg(long, default_value_t = 10)]
    min_occ: u32,
    #[arg(long, default_value_t = 30)]
    warmup: usize,
    #[arg(long, default_value_t = 170)]
    pr_iters: usize,
    #[arg(long, default_value = "reduced")]
    feature_variant: String,
    /// Override the emission-dependent lowercasing default.
    #[arg(long)]
    lowercase: Option<bool>,
    /// Override the emission-dependent singleton-to-unk default.
    #[arg(long)]
    unk: Option<bool>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    trace: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn parse_decode(s: &str) -> Result<DecodeMode, Error> {
    match s {
        "posterior" => Ok(DecodeMode::Posterior),
        "viterbi" => Ok(DecodeMode::Viterbi),
        other => Err(Error::Config(format!("unknown decode mode {other:?}"))),
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Stats {
            file,
            lowercase,
            unk,
        } => {
            let policy = PreprocessPolicy {
                lowercase,
                map_singletons_to_unk: unk,
                ..Default::default()
            };
            let (corpus, vocab) = load_corpus(&file, &policy)?;
            let report = corpus_stats(&corpus, &vocab);
            print!("{}", report.table());
            println!();
            print!("{}", report.kv_lines());
            Ok(())
        }
        Command::Features {
            corpus,
            variant,
            dump,
        } => {
            // Max-ent pipelines see raw text.
            let (_, vocab) = load_corpus(&corpus, &PreprocessPolicy::raw())?;
            let config = match variant.as_str() {
                "large" => FeatureConfig::large(),
                "reduced" => FeatureConfig::default(),
                other => return Err(Error::Config(format!("unknown variant {other:?}"))),
            };
            let table = build_features(&vocab, &config)?;
            let report = feature_count_report(&table);
            print!("{}", report.kv_lines());
            if let Some(path) = dump {
                std::fs::write(&path, dump_table(&table, &vocab))
                    .map_err(|e| Error::io(&path, e))?;
            }
            Ok(())
        }
        Command::Train(args) => {
            let mut config =
                ExperimentConfig::new(args.corpus.clone(), PathBuf::from("."));
            let mut pairs = BTreeMap::new();
            pairs.insert("algo".to_string(), args.algo);
            pairs.insert("emission".to_string(), args.emission);
            pairs.insert("feature-variant".to_string(), args.feature_variant);
            config.apply_pairs(&pairs)?;
            config.states = args.states;
            config.train.iterations = args.iters;
            config.train.l2_prior_variance = args.prior_variance;
            config.train.vb_emission_alpha = args.vb_alpha;
            config.pr.sigma = args.sigma;
            config.pr.min_occurrence = args.min_occ;
            config.pr.em_warmup = args.warmup;
            config.pr.pr_iterations = args.pr_iters;
            config.lowercase = args.lowercase;
            config.unk = args.unk;

            let policy = config.policy();
            let (corpus, vocab) = load_corpus(&args.corpus, &policy)?;
            let (saved, trace) =
                sparsepos::experiment::train_one(&config, &corpus, &vocab, args.seed)?;
            sparsepos::model_io::save_model(&saved, &args.out)?;
            if let Some(trace_path) = args.trace {
                trace.write_tsv(&trace_path)?;
            }
            eprintln!(
                "trained {} iterations, final loglik {}",
                trace.rows.len(),
                trace.rows.last().map(|r| r.loglik).unwrap_or(f64::NAN)
            );
            Ok(())
        }
        Command::Tag {
            model,
            corpus,
            decode,
            out,
        } => {
            let saved = load_model(&model)?;
            let (_, tags) = tag_corpus(&saved, &corpus, parse_decode(&decode)?)?;
            write_tag_file(&tags, &out)
        }
        Command::Eval {
            pred,
            gold,
            metrics: _,
            out,
            freq_table,
            ambiguity_hist,
            min_occ,
        } => {
            if pred.is_empty() {
                return Err(Error::Config("at least one --pred file is required".into()));
            }
            let (gold_corpus, vocab) = load_corpus(&gold, &PreprocessPolicy::raw())?;
            let gold_tags = gold_corpus
                .gold()
                .ok_or_else(|| Error::Config("gold corpus has no tags".into()))?;
            let mut reports = Vec::new();
            let mut first_pred = None;
            for path in &pred {
                let predicted = read_tag_file(path)?;
                let num_clusters = predicted
                    .iter()
                    .flatten()
                    .max()
                    .map(|&m| m + 1)
                    .unwrap_or(1);
                let table = build_contingency(
                    &predicted,
                    &gold_tags.tags,
                    num_clusters,
                    gold_tags.alphabet.len(),
                )?;
                reports.push(compute_metrics(&table));
                if first_pred.is_none() {
                    first_pred = Some(predicted);
                }
            }
            let mean = multi_seed_report(reports)?;
            print!("{}", mean.tsv());
            if let Some(path) = out {
                std::fs::write(&path, mean.tsv()).map_err(|e| Error::io(&path, e))?;
            }
            let predicted = first_pred.unwrap();
            if let Some(path) = freq_table {
                let num_clusters = predicted
                    .iter()
                    .flatten()
                    .max()
                    .map(|&m| m + 1)
                    .unwrap_or(1);
                let bins = freq_stratified_accuracy(
                    &predicted,
                    &gold_tags.tags,
                    &gold_corpus,
                    &vocab,
                    num_clusters,
                    gold_tags.alphabet.len(),
                    &[1, 4, 9, 50],
                )?;
                let mut text = String::from("bin\ttokens\taccuracy\n");
                for b in &bins {
                    use std::fmt::Write;
                    let _ = writeln!(text, "{}\t{}\t{}", b.label, b.tokens, b.accuracy);
                }
                std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
            }
            if let Some(path) = ambiguity_hist {
                let index =
                    sparsepos::pr::ConstraintIndex::build(&gold_corpus, &vocab, min_occ);
                let states = predicted.iter().flatten().max().map(|&m| m + 1).unwrap_or(1);
                let report =
                    sparsepos::pr::ambiguity_penalty_hard(&predicted, states, &index);
                let rows = ambiguity_histogram(&report.per_word, 0.25);
                let mut text = String::from("low\thigh\tcount\n");
                for r in &rows {
                    use std::fmt::Write;
                    let _ = writeln!(text, "{}\t{}\t{}", r.low, r.high, r.count);
                }
                std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
            }
            Ok(())
        }
        Command::Semisup {
            corpus,
            clusters,
            sizes,
            samples,
            test_size,
            seed,
            out,
        } => {
            let (labeled, vocab) = load_corpus(&corpus, &PreprocessPolicy::raw())?;
            let sizes: Result<Vec<usize>, _> = sizes.split(',').map(|s| s.trim().parse()).collect();
            let sizes = sizes.map_err(|e| Error::Config(format!("bad sizes list: {e}")))?;
            let mut sources = Vec::new();
            for path in clusters.split(',').filter(|s| !s.is_empty()) {
                let path = PathBuf::from(path.trim());
                let tags = read_tag_file(&path)?;
                let name = path
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| path.display().to_string());
                sources.push((name, tags));
            }
            let config = CurveConfig {
                sizes,
                samples_per_size: samples,
                test_size,
                ..Default::default()
            };
            let points = learning_curve(&labeled, &vocab, &sources, &config, seed)?;
            std::fs::write(&out, curve_tsv(&points)).map_err(|e| Error::io(&out, e))?;
            Ok(())
        }
        Command::Synth {
            states,
            vocab,
            tokens,
            sparsity,
            seed,
            out,
        } => {
            let (corpus, vocabulary, _) = synth_generate(&SynthConfig {
                states,
                vocab_size: vocab,
                tokens,
                sparsity,
                seed,
                ..Default::default()
            })?;
            sparsepos::corpus::save_corpus(&corpus, &vocabulary, &out)
        }
        Command::Experiment { config, overrides } => {
            let mut experiment = ExperimentConfig::from_file(&config)?;
            let mut pairs = BTreeMap::new();
            for item in overrides {
                let (key, value) = item
                    .split_once('=')
                    .ok_or_else(|| Error::Config(format!("bad override {item:?}")))?;
                pairs.insert(key.trim().to_string(), value.trim().to_string());
            }
            experiment.apply_pairs(&pairs)?;
            let manifest = run_experiment(&experiment)?;
            for outcome in &manifest.outcomes {
                match outcome {
                    SeedOutcome::Done { seed, report, .. } => {
                        println!(
                            "seed {seed}: 1-many {:.4} 1-1 {:.4} vi {:.4} v {:.4}",
                            report.one_many, report.one_one, report.vi, report.v
                        );
                    }
                    SeedOutcome::Failed {
                        seed,
                        stage,
                        message,
                    } => {
                        println!("seed {seed}: FAILED at {stage}: {message}");
                    }
                }
            }
            if let Some(mean) = &manifest.mean {
                println!(
                    "mean: 1-many {:.4} 1-1 {:.4} vi {:.4} v {:.4}",
                    mean.one_many, mean.one_one, mean.vi, mean.v
                );
            }
            Ok(())
        }
    }
}
