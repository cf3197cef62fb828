//! Corpus ingestion, preprocessing, vocabularies, and corpus statistics.
//!
//! The file format is CoNLL-like: one token per line, optionally followed by
//! a tab and a gold tag; a blank line ends a sentence.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const DEFAULT_UNK: &str = "<unk>";

/// Preprocessing conventions applied while building the vocabulary.
///
/// Lowercasing is per-character case folding; the singleton-to-unk mapping
/// uses counts taken after lowercasing. Gold tags are never touched.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PreprocessPolicy {
    pub lowercase: bool,
    pub map_singletons_to_unk: bool,
    pub unk_token: String,
}

impl Default for PreprocessPolicy {
    fn default() -> Self {
        PreprocessPolicy {
            lowercase: false,
            map_singletons_to_unk: false,
            unk_token: DEFAULT_UNK.to_string(),
        }
    }
}

impl PreprocessPolicy {
    /// The convention for multinomial emissions: lowercase and collapse singletons.
    pub fn multinomial() -> Self {
        PreprocessPolicy {
            lowercase: true,
            map_singletons_to_unk: true,
            unk_token: DEFAULT_UNK.to_string(),
        }
    }

    /// Identity preprocessing, used by the max-ent pipeline.
    pub fn raw() -> Self {
        PreprocessPolicy::default()
    }

    pub fn apply_case(&self, token: &str) -> String {
        if self.lowercase {
            token.chars().flat_map(|c| c.to_lowercase()).collect()
        } else {
            token.to_string()
        }
    }
}

/// Word-type inventory with counts and per-type occurrence positions.
#[derive(Clone, Debug, PartialEq)]
pub struct Vocabulary {
    types: Vec<String>,
    counts: Vec<u32>,
    /// Flat corpus positions of each type's occurrences, strictly increasing.
    occurrences: Vec<Vec<u32>>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn len(&self) -> usize {
        self.types.len()
    }

    pub fn is_empty(&self) -> bool {
        self.types.is_empty()
    }

    pub fn type_str(&self, id: usize) -> &str {
        &self.types[id]
    }

    pub fn types(&self) -> &[String] {
        &self.types
    }

    pub fn count(&self, id: usize) -> u32 {
        self.counts[id]
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn occurrences(&self, id: usize) -> &[u32] {
        &self.occurrences[id]
    }

    pub fn lookup(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn total_tokens(&self) -> usize {
        self.counts.iter().map(|&c| c as usize).sum()
    }

    /// Rebuild a vocabulary from `(type, count)` pairs without occurrence
    /// positions, as stored in model files.
    pub fn from_saved(entries: Vec<(String, u32)>) -> Self {
        let mut index = HashMap::with_capacity(entries.len());
        let mut types = Vec::with_capacity(entries.len());
        let mut counts = Vec::with_capacity(entries.len());
        for (i, (t, c)) in entries.into_iter().enumerate() {
            index.insert(t.clone(), i);
            types.push(t);
            counts.push(c);
        }
        let occurrences = vec![Vec::new(); types.len()];
        Vocabulary {
            types,
            counts,
            occurrences,
            index,
        }
    }
}

/// Gold annotation parallel to the token sequences.
#[derive(Clone, Debug, PartialEq)]
pub struct GoldTags {
    pub alphabet: Vec<String>,
    /// Per sentence, per position: index into `alphabet`.
    pub tags: Vec<Vec<usize>>,
}

/// Tokenized sentences as word-type indices, with optional gold tags.
#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    pub name: String,
    sentences: Vec<Vec<usize>>,
    gold: Option<GoldTags>,
    /// Flat position of each sentence start; last entry is the token total.
    offsets: Vec<usize>,
}

impl Corpus {
    /// Assemble a corpus directly from type-index sentences.
    pub fn from_parts(
        name: &str,
        sentences: Vec<Vec<usize>>,
        gold: Option<GoldTags>,
    ) -> Result<Corpus> {
        if sentences.is_empty() {
            return Err(Error::EmptyCorpus(name.to_string()));
        }
        if sentences.iter().any(|s| s.is_empty()) {
            return Err(Error::EmptyCorpus(format!("{name}: empty sentence")));
        }
        if let Some(g) = &gold {
            if g.tags.len() != sentences.len()
                || g.tags.iter().zip(&sentences).any(|(t, s)| t.len() != s.len())
            {
                return Err(Error::Shape("gold tags do not align with sentences".into()));
            }
        }
        let mut offsets = Vec::with_capacity(sentences.len() + 1);
        let mut flat = 0usize;
        for s in &sentences {
            offsets.push(flat);
            flat += s.len();
        }
        offsets.push(flat);
        Ok(Corpus {
            name: name.to_string(),
            sentences,
            gold,
            offsets,
        })
    }

    pub fn sentences(&self) -> &[Vec<usize>] {
        &self.sentences
    }

    pub fn sentence(&self, n: usize) -> &[usize] {
        &self.sentences[n]
    }

    pub fn gold(&self) -> Option<&GoldTags> {
        self.gold.as_ref()
    }

    pub fn num_sentences(&self) -> usize {
        self.sentences.len()
    }

    pub fn num_tokens(&self) -> usize {
        *self.offsets.last().unwrap_or(&0)
    }

    pub fn flat_pos(&self, sentence: usize, position: usize) -> usize {
        self.offsets[sentence] + position
    }

    /// Map a flat token position back to `(sentence, position)`.
    pub fn locate(&self, flat: usize) -> (usize, usize) {
        let sentence = match self.offsets.binary_search(&flat) {
            Ok(mut s) => {
                // Offsets of empty... sentences are non-empty, but equal offsets
                // cannot occur; an exact hit is a sentence start.
                while s + 1 < self.offsets.len() - 1 && self.offsets[s + 1] == flat {
                    s += 1;
                }
                s
            }
            Err(ins) => ins - 1,
        };
        (sentence, flat - self.offsets[sentence])
    }
}

/// Build a corpus and vocabulary from raw token sentences under `policy`.
pub fn build_corpus(
    name: &str,
    raw_sentences: &[Vec<String>],
    gold: Option<GoldTags>,
    policy: &PreprocessPolicy,
) -> Result<(Corpus, Vocabulary)> {
    if raw_sentences.is_empty() {
        return Err(Error::EmptyCorpus(name.to_string()));
    }
    if raw_sentences.iter().any(|s| s.is_empty()) {
        return Err(Error::EmptyCorpus(format!("{name}: empty sentence")));
    }
    if let Some(g) = &gold {
        if g.tags.len() != raw_sentences.len()
            || g.tags
                .iter()
                .zip(raw_sentences)
                .any(|(t, s)| t.len() != s.len())
        {
            return Err(Error::Shape("gold tags do not align with sentences".into()));
        }
    }

    let cased: Vec<Vec<String>> = raw_sentences
        .iter()
        .map(|s| s.iter().map(|t| policy.apply_case(t)).collect())
        .collect();

    let mut raw_counts: HashMap<&str, u32> = HashMap::new();
    for sentence in &cased {
        for token in sentence {
            *raw_counts.entry(token).or_insert(0) += 1;
        }
    }

    let mut index: HashMap<String, usize> = HashMap::new();
    let mut types: Vec<String> = Vec::new();
    let mut counts: Vec<u32> = Vec::new();
    let mut occurrences: Vec<Vec<u32>> = Vec::new();
    let mut sentences: Vec<Vec<usize>> = Vec::with_capacity(cased.len());
    let mut offsets = Vec::with_capacity(cased.len() + 1);
    let mut flat = 0u32;

    for sentence in &cased {
        offsets.push(flat as usize);
        let mut ids = Vec::with_capacity(sentence.len());
        for token in sentence {
            let effective: &str =
                if policy.map_singletons_to_unk && raw_counts[token.as_str()] == 1 {
                    &policy.unk_token
                } else {
                    token
                };
            let id = match index.get(effective) {
                Some(&id) => id,
                None => {
                    let id = types.len();
                    index.insert(effective.to_string(), id);
                    types.push(effective.to_string());
                    counts.push(0);
                    occurrences.push(Vec::new());
                    id
                }
            };
            counts[id] += 1;
            occurrences[id].push(flat);
            ids.push(id);
            flat += 1;
        }
        sentences.push(ids);
    }
    offsets.push(flat as usize);

    Ok((
        Corpus {
            name: name.to_string(),
            sentences,
            gold,
            offsets,
        },
        Vocabulary {
            types,
            counts,
            occurrences,
            index,
        },
    ))
}

/// Read raw sentences (and gold tags, when present) from the token-per-line format.
pub fn read_raw_sentences(path: &Path) -> Result<(Vec<Vec<String>>, Option<GoldTags>)> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);

    let mut sentences: Vec<Vec<String>> = Vec::new();
    let mut tag_sentences: Vec<Vec<String>> = Vec::new();
    let mut current: Vec<String> = Vec::new();
    let mut current_tags: Vec<String> = Vec::new();
    let mut saw_tag = false;
    let mut saw_untagged = false;

    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim_end_matches(['\n', '\r']);
        if line.trim().is_empty() {
            if !current.is_empty() {
                sentences.push(std::mem::take(&mut current));
                tag_sentences.push(std::mem::take(&mut current_tags));
            }
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        match fields.len() {
            1 => {
                saw_untagged = true;
                current.push(fields[0].to_string());
                current_tags.push(String::new());
            }
            2 => {
                saw_tag = true;
                current.push(fields[0].to_string());
                current_tags.push(fields[1].to_string());
            }
            n => {
                return Err(Error::parse(
                    path,
                    lineno + 1,
                    format!("expected `token` or `token<TAB>tag`, found {n} tab-separated fields"),
                ));
            }
        }
        if saw_tag && saw_untagged {
            return Err(Error::parse(
                path,
                lineno + 1,
                "mixed tagged and untagged tokens",
            ));
        }
    }
    if !current.is_empty() {
        sentences.push(current);
        tag_sentences.push(current_tags);
    }
    if sentences.is_empty() {
        return Err(Error::EmptyCorpus(path.display().to_string()));
    }

    let gold = if saw_tag {
        let mut alphabet: Vec<String> = Vec::new();
        let mut tag_index: HashMap<String, usize> = HashMap::new();
        let tags = tag_sentences
            .iter()
            .map(|sentence| {
                sentence
                    .iter()
                    .map(|t| {
                        *tag_index.entry(t.clone()).or_insert_with(|| {
                            alphabet.push(t.clone());
                            alphabet.len() - 1
                        })
                    })
                    .collect()
            })
            .collect();
        Some(GoldTags { alphabet, tags })
    } else {
        None
    };
    Ok((sentences, gold))
}

/// Load a corpus file and build its vocabulary under `policy`.
pub fn load_corpus(path: &Path, policy: &PreprocessPolicy) -> Result<(Corpus, Vocabulary)> {
    let (sentences, gold) = read_raw_sentences(path)?;
    let name = path
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string());
    build_corpus(&name, &sentences, gold, policy)
}

/// Write a corpus back to the token-per-line format (type strings, gold tags kept).
pub fn save_corpus(corpus: &Corpus, vocab: &Vocabulary, path: &Path) -> Result<()> {
    let mut out = String::new();
    for (n, sentence) in corpus.sentences().iter().enumerate() {
        for (i, &type_id) in sentence.iter().enumerate() {
            match corpus.gold() {
                Some(g) => {
                    let tag = &g.alphabet[g.tags[n][i]];
                    let _ = writeln!(out, "{}\t{}", vocab.type_str(type_id), tag);
                }
                None => {
                    let _ = writeln!(out, "{}", vocab.type_str(type_id));
                }
            }
        }
        out.push('\n');
    }
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Gold-tag l1/linf ambiguity aggregates for the stats report.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AmbiguityStats {
    /// Sum over word types of the number of distinct gold tags.
    pub total: f64,
    pub avg_per_type: f64,
    pub avg_per_token: f64,
}

#[derive(Clone, Debug)]
pub struct StatsReport {
    pub name: String,
    pub sentences: usize,
    pub types: usize,
    pub tokens: usize,
    pub gold_tags: Option<usize>,
    /// Absent (not zero) when the corpus has no gold annotation.
    pub ambiguity: Option<AmbiguityStats>,
}

/// Corpus-level statistics; ambiguity columns need gold tags.
pub fn corpus_stats(corpus: &Corpus, vocab: &Vocabulary) -> StatsReport {
    let ambiguity = corpus.gold().map(|gold| {
        let num_tags = gold.alphabet.len();
        let mut seen = vec![false; num_tags];
        let mut total = 0.0f64;
        let mut token_weighted = 0.0f64;
        for type_id in 0..vocab.len() {
            seen.fill(false);
            let mut distinct = 0usize;
            for &flat in vocab.occurrences(type_id) {
                let (s, i) = corpus.locate(flat as usize);
                let tag = gold.tags[s][i];
                if !seen[tag] {
                    seen[tag] = true;
                    distinct += 1;
                }
            }
            total += distinct as f64;
            token_weighted += distinct as f64 * vocab.count(type_id) as f64;
        }
        AmbiguityStats {
            total,
            avg_per_type: total / vocab.len() as f64,
            avg_per_token: token_weighted / corpus.num_tokens() as f64,
        }
    });
    StatsReport {
        name: corpus.name.clone(),
        sentences: corpus.num_sentences(),
        types: vocab.len(),
        tokens: corpus.num_tokens(),
        gold_tags: corpus.gold().map(|g| g.alphabet.len()),
        ambiguity,
    }
}

impl StatsReport {
    /// Machine-readable key/value lines.
    pub fn kv_lines(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "name\t{}", self.name);
        let _ = writeln!(out, "sentences\t{}", self.sentences);
        let _ = writeln!(out, "types\t{}", self.types);
        let _ = writeln!(out, "tokens\t{}", self.tokens);
        if let Some(n) = self.gold_tags {
            let _ = writeln!(out, "gold-tags\t{n}");
        }
        if let Some(a) = self.ambiguity {
            let _ = writeln!(out, "ambiguity-total\t{}", a.total);
            let _ = writeln!(out, "ambiguity-avg-per-type\t{}", a.avg_per_type);
            let _ = writeln!(out, "ambiguity-avg-per-token\t{}", a.avg_per_token);
        }
        out
    }

    /// Aligned human-readable table.
    pub fn table(&self) -> String {
        let mut rows: Vec<(String, String)> = vec![
            ("corpus".into(), self.name.clone()),
            ("sentences".into(), self.sentences.to_string()),
            ("types".into(), self.types.to_string()),
            ("tokens".into(), self.tokens.to_string()),
        ];
        if let Some(n) = self.gold_tags {
            rows.push(("gold tags".into(), n.to_string()));
        }
        if let Some(a) = self.ambiguity {
            rows.push(("total l1/linf".into(), format!("{:.4}", a.total)));
            rows.push(("avg l1/linf (per type)".into(), format!("{:.4}", a.avg_per_type)));
            rows.push(("avg l1/linf (per token)".into(), format!("{:.4}", a.avg_per_token)));
        }
        let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        let mut out = String::new();
        for (k, v) in rows {
            let _ = writeln!(out, "{k:width$}  {v}");
        }
        out
    }
}
