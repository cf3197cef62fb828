//! Versioned text serialization of trained models.
//!
//! The format is line-oriented: a header (version, sizes, preprocessing
//! policy, emission variant), the vocabulary with counts, transition rows,
//! and either the emission table or the feature inventory plus weights.
//! Floats print with Rust's shortest round-trip representation, so
//! save -> load -> save is byte-identical.

use std::fmt::Write as _;
use std::path::Path;

use crate::corpus::{PreprocessPolicy, Vocabulary};
use crate::error::{Error, Result};
use crate::features::{FeatureTable, FeatureVariant};
use crate::hmm::{Emission, HmmModel};

const MAGIC: &str = "sparsepos-model v1";

/// Feature extraction settings needed to featurize unseen words at tag time.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMeta {
    pub variant: FeatureVariant,
    pub max_suffix_len: usize,
    pub identity_cutoff: u32,
    pub suffix_cutoff: u32,
    pub include_bias: bool,
}

/// A model together with everything needed to tag unseen text.
#[derive(Clone, Debug, PartialEq)]
pub struct SavedModel {
    pub model: HmmModel,
    pub vocab: Vocabulary,
    pub policy: PreprocessPolicy,
    pub feature_meta: Option<FeatureMeta>,
}

fn floats(row: &[f64]) -> String {
    row.iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn serialize_model(saved: &SavedModel) -> String {
    let model = &saved.model;
    let j = model.num_states;
    let v = saved.vocab.len();
    let mut out = String::new();
    let _ = writeln!(out, "{MAGIC}");
    let _ = writeln!(out, "states {j}");
    let _ = writeln!(out, "vocab {v}");
    let _ = writeln!(out, "lowercase {}", saved.policy.lowercase);
    if saved.policy.map_singletons_to_unk {
        let _ = writeln!(out, "unk {}", saved.policy.unk_token);
    } else {
        let _ = writeln!(out, "unk -");
    }
    match &model.emission {
        Emission::Multinomial { .. } => {
            let _ = writeln!(out, "emission multinomial");
        }
        Emission::MaxEnt { features, .. } => {
            let meta = saved
                .feature_meta
                .clone()
                .expect("max-ent models carry feature metadata");
            let variant = match meta.variant {
                FeatureVariant::Large => "large",
                FeatureVariant::Reduced => "reduced",
            };
            let _ = writeln!(
                out,
                "emission maxent {} {variant} {} {} {} {}",
                features.num_features(),
                meta.max_suffix_len,
                meta.identity_cutoff,
                meta.suffix_cutoff,
                meta.include_bias
            );
        }
    }
    let _ = writeln!(out, "types");
    for id in 0..v {
        let _ = writeln!(out, "{}\t{}", saved.vocab.type_str(id), saved.vocab.count(id));
    }
    let _ = writeln!(out, "transitions");
    for row in &model.transitions {
        let _ = writeln!(out, "{}", floats(row));
    }
    match &model.emission {
        Emission::Multinomial { probs } => {
            let _ = writeln!(out, "emissions");
            for row in probs {
                let _ = writeln!(out, "{}", floats(row));
            }
        }
        Emission::MaxEnt { theta, features } => {
            let _ = writeln!(out, "feature-names");
            for name in features.names() {
                let _ = writeln!(out, "{name}");
            }
            let _ = writeln!(out, "feature-rows");
            for x in 0..features.num_types() {
                let ids: Vec<String> =
                    features.row(x).iter().map(|id| id.to_string()).collect();
                let _ = writeln!(out, "{}", ids.join(","));
            }
            let _ = writeln!(out, "theta");
            let f = features.num_features();
            for tag in 0..j {
                let _ = writeln!(out, "{}", floats(&theta[tag * f..(tag + 1) * f]));
            }
        }
    }
    out
}

pub fn save_model(saved: &SavedModel, path: &Path) -> Result<()> {
    std::fs::write(path, serialize_model(saved)).map_err(|e| Error::io(path, e))
}

struct LineReader<'a> {
    lines: std::str::Lines<'a>,
    lineno: usize,
    path: &'a Path,
}

impl<'a> LineReader<'a> {
    fn next(&mut self) -> Result<&'a str> {
        self.lineno += 1;
        self.lines
            .next()
            .ok_or_else(|| Error::parse(self.path, self.lineno, "unexpected end of model file"))
    }

    fn expect(&mut self, keyword: &str) -> Result<&'a str> {
        let line = self.next()?;
        line.strip_prefix(keyword)
            .map(str::trim)
            .ok_or_else(|| {
                Error::parse(
                    self.path,
                    self.lineno,
                    format!("expected `{keyword}`, found {line:?}"),
                )
            })
    }

    fn error(&self, message: impl Into<String>) -> Error {
        Error::parse(self.path, self.lineno, message)
    }
}

fn parse_floats(reader: &mut LineReader<'_>, expected: usize) -> Result<Vec<f64>> {
    let line = reader.next()?;
    let row: std::result::Result<Vec<f64>, _> =
        line.split_whitespace().map(str::parse::<f64>).collect();
    let row = row.map_err(|e| reader.error(format!("bad float: {e}")))?;
    if row.len() != expected {
        return Err(reader.error(format!("expected {expected} floats, found {}", row.len())));
    }
    Ok(row)
}

pub fn parse_model(text: &str, path: &Path) -> Result<SavedModel> {
    let mut reader = LineReader {
        lines: text.lines(),
        lineno: 0,
        path,
    };
    let magic = reader.next()?;
    if magic != MAGIC {
        return Err(reader.error(format!("not a model file (header {magic:?})")));
    }
    let j: usize = reader
        .expect("states")?
        .parse()
        .map_err(|e| reader.error(format!("bad state count: {e}")))?;
    let v: usize = reader
        .expect("vocab")?
        .parse()
        .map_err(|e| reader.error(format!("bad vocab size: {e}")))?;
    let lowercase: bool = reader
        .expect("lowercase")?
        .parse()
        .map_err(|e| reader.error(format!("bad lowercase flag: {e}")))?;
    let unk_field = reader.expect("unk")?.to_string();
    let policy = if unk_field == "-" {
        PreprocessPolicy {
            lowercase,
            map_singletons_to_unk: false,
            ..Default::default()
        }
    } else {
        PreprocessPolicy {
            lowercase,
            map_singletons_to_unk: true,
            unk_token: unk_field,
        }
    };

    let emission_line = reader.expect("emission")?.to_string();
    let mut parts = emission_line.split_whitespace();
    let kind = parts.next().unwrap_or_default().to_string();
    let maxent_header: Option<(usize, FeatureMeta)> = if kind == "maxent" {
        let f: usize = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| reader.error("bad feature count"))?;
        let variant = match parts.next() {
            Some("large") => FeatureVariant::Large,
            Some("reduced") => FeatureVariant::Reduced,
            other => return Err(reader.error(format!("bad feature variant {other:?}"))),
        };
        let nums: Vec<&str> = parts.collect();
        if nums.len() != 4 {
            return Err(reader.error("bad max-ent header"));
        }
        let meta = FeatureMeta {
            variant,
            max_suffix_len: nums[0].parse().map_err(|_| reader.error("bad suffix len"))?,
            identity_cutoff: nums[1].parse().map_err(|_| reader.error("bad identity cutoff"))?,
            suffix_cutoff: nums[2].parse().map_err(|_| reader.error("bad suffix cutoff"))?,
            include_bias: nums[3].parse().map_err(|_| reader.error("bad bias flag"))?,
        };
        Some((f, meta))
    } else if kind == "multinomial" {
        None
    } else {
        return Err(reader.error(format!("unknown emission kind {kind:?}")));
    };

    reader.expect("types")?;
    let mut entries = Vec::with_capacity(v);
    for _ in 0..v {
        let line = reader.next()?;
        let (name, count) = line
            .rsplit_once('\t')
            .ok_or_else(|| reader.error("bad type line"))?;
        let count: u32 = count
            .parse()
            .map_err(|e| reader.error(format!("bad type count: {e}")))?;
        entries.push((name.to_string(), count));
    }
    let vocab = Vocabulary::from_saved(entries);

    reader.expect("transitions")?;
    let mut transitions = Vec::with_capacity(j + 1);
    for _ in 0..=j {
        transitions.push(parse_floats(&mut reader, j)?);
    }

    let (emission, feature_meta) = match maxent_header {
        None => {
            reader.expect("emissions")?;
            let mut probs = Vec::with_capacity(v);
            for _ in 0..v {
                probs.push(parse_floats(&mut reader, j)?);
            }
            (Emission::Multinomial { probs }, None)
        }
        Some((f, meta)) => {
            reader.expect("feature-names")?;
            let mut names = Vec::with_capacity(f);
            for _ in 0..f {
                names.push(reader.next()?.to_string());
            }
            reader.expect("feature-rows")?;
            let mut rows = Vec::with_capacity(v);
            for _ in 0..v {
                let line = reader.next()?;
                let row: std::result::Result<Vec<u32>, _> = if line.is_empty() {
                    Ok(Vec::new())
                } else {
                    line.split(',').map(str::parse::<u32>).collect()
                };
                rows.push(row.map_err(|e| reader.error(format!("bad feature row: {e}")))?);
            }
            let features = FeatureTable::from_parts(names, rows)?;
            reader.expect("theta")?;
            let mut theta = Vec::with_capacity(j * f);
            for _ in 0..j {
                theta.extend(parse_floats(&mut reader, f)?);
            }
            (Emission::MaxEnt { theta, features }, Some(meta))
        }
    };

    let model = HmmModel {
        num_states: j,
        transitions,
        emission,
    };
    model.check_finite()?;
    Ok(SavedModel {
        model,
        vocab,
        policy,
        feature_meta,
    })
}

pub fn load_model(path: &Path) -> Result<SavedModel> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_model(&text, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_corpus, PreprocessPolicy};
    use crate::features::{build_features, FeatureConfig};
    use crate::train::{init_model, TrainConfig};

    fn toy() -> (crate::corpus::Corpus, Vocabulary) {
        let sentences: Vec<Vec<String>> = vec![
            vec!["the".into(), "cat".into(), "sat".into()],
            vec!["the".into(), "dog".into()],
        ];
        build_corpus("toy", &sentences, None, &PreprocessPolicy::raw()).unwrap()
    }

    #[test]
    fn multinomial_round_trip_is_byte_identical() {
        let (_, vocab) = toy();
        let config = TrainConfig {
            seed: 7,
            ..Default::default()
        };
        let model = init_model(3, &vocab, None, &config);
        let saved = SavedModel {
            model,
            vocab,
            policy: PreprocessPolicy::multinomial(),
            feature_meta: None,
        };
        let text = serialize_model(&saved);
        let reloaded = parse_model(&text, Path::new("mem")).unwrap();
        assert_eq!(saved.model, reloaded.model);
        assert_eq!(saved.policy, reloaded.policy);
        assert_eq!(saved.vocab.types(), reloaded.vocab.types());
        assert_eq!(saved.vocab.counts(), reloaded.vocab.counts());
        assert_eq!(text, serialize_model(&reloaded));
    }

    #[test]
    fn maxent_round_trip_is_byte_identical() {
        let (_, vocab) = toy();
        let features = build_features(&vocab, &FeatureConfig::default()).unwrap();
        let config = TrainConfig {
            seed: 5,
            ..Default::default()
        };
        let model = init_model(2, &vocab, Some(&features), &config);
        let saved = SavedModel {
            model,
            vocab,
            policy: PreprocessPolicy::raw(),
            feature_meta: Some(FeatureMeta {
                variant: FeatureVariant::Reduced,
                max_suffix_len: 3,
                identity_cutoff: 10,
                suffix_cutoff: 20,
                include_bias: true,
            }),
        };
        let text = serialize_model(&saved);
        let reloaded = parse_model(&text, Path::new("mem")).unwrap();
        assert_eq!(saved.model, reloaded.model);
        assert_eq!(saved.feature_meta, reloaded.feature_meta);
        assert_eq!(text, serialize_model(&reloaded));
    }

    #[test]
    fn truncated_file_is_a_parse_error() {
        let (_, vocab) = toy();
        let config = TrainConfig::default();
        let model = init_model(2, &vocab, None, &config);
        let saved = SavedModel {
            model,
            vocab,
            policy: PreprocessPolicy::raw(),
            feature_meta: None,
        };
        let text = serialize_model(&saved);
        let truncated = &text[..text.len() / 2];
        assert!(parse_model(truncated, Path::new("mem")).is_err());
    }

    #[test]
    fn garbage_is_rejected() {
        assert!(parse_model("not a model\n", Path::new("mem")).is_err());
    }
}
