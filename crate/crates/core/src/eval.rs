//! Evaluation of induced clusterings against gold tags: 1-Many and 1-1
//! mapping accuracies, variation of information, V-measure, ambiguity
//! histograms, frequency-stratified accuracy, and multi-seed averaging.
//!
//! Entropies are in nats throughout.

use std::fmt::Write as _;

use crate::corpus::{Corpus, Vocabulary};
use crate::error::{Error, Result};

/// Token cooccurrence counts between clusters (rows) and gold tags (columns).
#[derive(Clone, Debug, PartialEq)]
pub struct ContingencyTable {
    pub counts: Vec<Vec<f64>>,
    pub row_totals: Vec<f64>,
    pub col_totals: Vec<f64>,
    pub total: f64,
}

impl ContingencyTable {
    pub fn num_clusters(&self) -> usize {
        self.counts.len()
    }

    pub fn num_tags(&self) -> usize {
        self.col_totals.len()
    }

    pub fn from_counts(counts: Vec<Vec<f64>>) -> Result<Self> {
        if counts.is_empty() || counts[0].is_empty() {
            return Err(Error::Shape("empty contingency table".into()));
        }
        let cols = counts[0].len();
        if counts.iter().any(|r| r.len() != cols) {
            return Err(Error::Shape("ragged contingency table".into()));
        }
        if counts.iter().flatten().any(|&c| c < 0.0) {
            return Err(Error::Shape("negative contingency count".into()));
        }
        let row_totals: Vec<f64> = counts.iter().map(|r| r.iter().sum()).collect();
        let col_totals: Vec<f64> = (0..cols)
            .map(|c| counts.iter().map(|r| r[c]).sum())
            .collect();
        let total = row_totals.iter().sum();
        Ok(ContingencyTable {
            counts,
            row_totals,
            col_totals,
            total,
        })
    }
}

/// Exact token cooccurrence counts of predicted clusters against gold tags.
pub fn build_contingency(
    predicted: &[Vec<usize>],
    gold: &[Vec<usize>],
    num_clusters: usize,
    num_tags: usize,
) -> Result<ContingencyTable> {
    if predicted.len() != gold.len()
        || predicted
            .iter()
            .zip(gold)
            .any(|(p, g)| p.len() != g.len())
    {
        return Err(Error::Shape(
            "predicted and gold sequences have different shapes".into(),
        ));
    }
    let mut counts = vec![vec![0.0; num_tags]; num_clusters];
    for (ps, gs) in predicted.iter().zip(gold) {
        for (&p, &g) in ps.iter().zip(gs) {
            if p >= num_clusters || g >= num_tags {
                return Err(Error::Shape("cluster or tag id out of range".into()));
            }
            counts[p][g] += 1.0;
        }
    }
    ContingencyTable::from_counts(counts)
}

/// Map every cluster to its most frequent gold tag (ties toer the lowest tag
/// index); several clusters may share a tag.
pub fn map_1many(table: &ContingencyTable) -> (Vec<usize>, f64) {
    let mapping: Vec<usize> = table
        .counts
        .iter()
        .map(|row| {
            let mut best = 0;
            for (t, &c) in row.iter().enumerate().skip(1) {
                if c > row[best] {
                    best = t;
                }
            }
            best
        })
        .collect();
    let correct: f64 = table
        .counts
        .iter()
        .zip(&mapping)
        .map(|(row, &t)| row[t])
        .sum();
    (mapping, correct / table.total)
}

/// Greedy one-to-one assignment: repeatedly take the largest remaining cell
/// among unassigned clusters and tags; ties prefer the lower cluster, then
/// the lower tag. Leftover clusters (K > N) map to nothing and score zero.
pub fn map_11(table: &ContingencyTable) -> (Vec<Option<usize>>, f64) {
    let k = table.num_clusters();
    let n = table.num_tags();
    let mut cells: Vec<(f64, usize, usize)> = Vec::with_capacity(k * n);
    for (c, row) in table.counts.iter().enumerate() {
        for (t, &count) in row.iter().enumerate() {
            cells.push((count, c, t));
        }
    }
    cells.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap()
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });
    let mut mapping: Vec<Option<usize>> = vec![None; k];
    let mut tag_taken = vec![false; n];
    let mut assigned = 0usize;
    let mut correct = 0.0;
    for (count, c, t) in cells {
        if assigned == k.min(n) {
            break;
        }
        if mapping[c].is_none() && !tag_taken[t] {
            mapping[c] = Some(t);
            tag_taken[t] = true;
            assigned += 1;
            correct += count;
        }
    }
    (mapping, correct / table.total)
}

fn entropy_terms(table: &ContingencyTable) -> (f64, f64, f64, f64) {
    let t = table.total;
    let xlogx = |p: f64| if p > 0.0 { p * p.ln() } else { 0.0 };
    // H(K): clusters; H(C): gold classes.
    let h_k = -table.row_totals.iter().map(|&r| xlogx(r / t)).sum::<f64>();
    let h_c = -table.col_totals.iter().map(|&c| xlogx(c / t)).sum::<f64>();
    let h_joint = -table
        .counts
        .iter()
        .flatten()
        .map(|&c| xlogx(c / t))
        .sum::<f64>();
    // H(C|K) and H(K|C).
    let h_c_given_k = h_joint - h_k;
    let h_k_given_c = h_joint - h_c;
    (h_c, h_k, h_c_given_k, h_k_given_c)
}

/// Variation of information, `H(C|K) + H(K|C)`, in nats.
pub fn vi(table: &ContingencyTable) -> f64 {
    let (_, _, h_c_given_k, h_k_given_c) = entropy_terms(table);
    h_c_given_k + h_k_given_c
}

/// V-measure: harmonic mean of homogeneity and completeness. Degenerate
/// entropies (`H(C) = 0` or `H(K) = 0`) count as perfect on that side.
pub fn vmeasure(table: &ContingencyTable) -> f64 {
    let (h_c, h_k, h_c_given_k, h_k_given_c) = entropy_terms(table);
    let homogeneity = if h_c > 0.0 { 1.0 - h_c_given_k / h_c } else { 1.0 };
    let completeness = if h_k > 0.0 { 1.0 - h_k_given_c / h_k } else { 1.0 };
    if homogeneity + completeness == 0.0 {
        0.0
    } else {
        2.0 * homogeneity * completeness / (homogeneity + completeness)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricReport {
    pub one_many: f64,
    pub one_one: f64,
    pub vi: f64,
    pub v: f64,
    pub num_clusters: usize,
    pub num_tags: usize,
    pub mapping_1many: Vec<usize>,
    pub mapping_11: Vec<Option<usize>>,
}

pub fn compute_metrics(table: &ContingencyTable) -> MetricReport {
    let (mapping_1many, one_many) = map_1many(table);
    let (mapping_11, one_one) = map_11(table);
    MetricReport {
        one_many,
        one_one,
        vi: vi(table),
        v: vmeasure(table),
        num_clusters: table.num_clusters(),
        num_tags: table.num_tags(),
        mapping_1many,
        mapping_11,
    }
}

/// Mean metrics over seeds, with per-seed values retained.
#[derive(Clone, Debug)]
pub struct MultiSeedReport {
    pub one_many: f64,
    pub one_one: f64,
    pub vi: f64,
    pub v: f64,
    pub per_seed: Vec<MetricReport>,
}

pub fn multi_seed_report(reports: Vec<MetricReport>) -> Result<MultiSeedReport> {
    if reports.is_empty() {
        return Err(Error::Shape("no per-seed reports to average".into()));
    }
    let (k, n) = (reports[0].num_clusters, reports[0].num_tags);
    if reports
        .iter()
        .any(|r| r.num_clusters != k || r.num_tags != n)
    {
        return Err(Error::Shape(
            "per-seed reports come from mixed configurations".into(),
        ));
    }
    let s = reports.len() as f64;
    Ok(MultiSeedReport {
        one_many: reports.iter().map(|r| r.one_many).sum::<f64>() / s,
        one_one: reports.iter().map(|r| r.one_one).sum::<f64>() / s,
        vi: reports.iter().map(|r| r.vi).sum::<f64>() / s,
        v: reports.iter().map(|r| r.v).sum::<f64>() / s,
        per_seed: reports,
    })
}

impl MultiSeedReport {
    /// Report TSV: metric, mean value, per-seed values.
    pub fn tsv(&self) -> String {
        let mut out = String::from("metric\tvalue\tper-seed\n");
        let rows: [(&str, f64, Vec<f64>); 4] = [
            ("1-many", self.one_many, self.per_seed.iter().map(|r| r.one_many).collect()),
            ("1-1", self.one_one, self.per_seed.iter().map(|r| r.one_one).collect()),
            ("vi", self.vi, self.per_seed.iter().map(|r| r.vi).collect()),
            ("v", self.v, self.per_seed.iter().map(|r| r.v).collect()),
        ];
        for (name, value, seeds) in rows {
            let seeds: Vec<String> = seeds.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(out, "{name}\t{value}\t{}", seeds.join(","));
        }
        out
    }
}

/// Accuracy of one frequency stratum under the global 1-Many mapping.
#[derive(Clone, Debug)]
pub struct BinAccuracy {
    pub label: String,
    /// Inclusive count range of the stratum.
    pub low: u32,
    pub high: u32,
    pub tokens: usize,
    pub accuracy: f64,
}

/// 1-Many accuracy stratified by word-type frequency. The mapping is learned
/// on the full corpus first; `edges` are inclusive upper bounds of all but
/// the last bin (the default `[1, 4, 9, 50]` gives strata 1, 2-4, 5-9,
/// 10-50, >50).
pub fn freq_stratified_accuracy(
    predicted: &[Vec<usize>],
    gold: &[Vec<usize>],
    corpus: &Corpus,
    vocab: &Vocabulary,
    num_clusters: usize,
    num_tags: usize,
    edges: &[u32],
) -> Result<Vec<BinAccuracy>> {
    let table = build_contingency(predicted, gold, num_clusters, num_tags)?;
    let (mapping, _) = map_1many(&table);

    let num_bins = edges.len() + 1;
    let mut correct = vec![0usize; num_bins];
    let mut tokens = vec![0usize; num_bins];
    let bin_of = |count: u32| -> usize {
        for (b, &edge) in edges.iter().enumerate() {
            if count <= edge {
                return b;
            }
        }
        num_bins - 1
    };
    for (n, sentence) in corpus.sentences().iter().enumerate() {
        for (i, &type_id) in sentence.iter().enumerate() {
            let b = bin_of(vocab.count(type_id));
            tokens[b] += 1;
            if mapping[predicted[n][i]] == gold[n][i] {
                correct[b] += 1;
            }
        }
    }

    let mut out = Vec::with_capacity(num_bins);
    for b in 0..num_bins {
        let low = if b == 0 { 0 } else { edges[b - 1] + 1 };
        let high = if b < edges.len() { edges[b] } else { u32::MAX };
        let label = if b < edges.len() {
            format!("<={}", edges[b])
        } else {
            format!(">{}", edges[b - 1])
        };
        out.push(BinAccuracy {
            label,
            low,
            high,
            tokens: tokens[b],
            accuracy: if tokens[b] > 0 {
                correct[b] as f64 / tokens[b] as f64
            } else {
                f64::NAN
            },
        });
    }
    Ok(out)
}

/// Histogram of per-type ambiguity values, for plotting.
#[derive(Clone, Debug, PartialEq)]
pub struct HistRow {
    pub low: f64,
    pub high: f64,
    pub count: usize,
}

pub fn ambiguity_histogram(per_word: &[(usize, f64)], bin_width: f64) -> Vec<HistRow> {
    if per_word.is_empty() || bin_width <= 0.0 {
        return Vec::new();
    }
    let max = per_word.iter().map(|&(_, v)| v).fold(0.0f64, f64::max);
    let bins = (max / bin_width).floor() as usize + 1;
    let mut rows: Vec<HistRow> = (0..bins)
        .map(|b| HistRow {
            low: b as f64 * bin_width,
            high: (b + 1) as f64 * bin_width,
            count: 0,
        })
        .collect();
    for &(_, v) in per_word {
        let b = ((v / bin_width).floor() as usize).min(bins - 1);
        rows[b].count += 1;
    }
    rows
}
