//! Clustering evaluation against gold senses.

use std::collections::{BTreeMap, HashMap};
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::cluster::LinkageTree;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum MetricError {
    #[error("labelings cover different instances: {0}")]
    InstanceMismatch(String),
    #[error("need at least {min} instances, got {got}")]
    TooFew { min: usize, got: usize },
    #[error("no feasible cut in the requested cluster range")]
    NoFeasibleCut,
    #[error("nothing to aggregate")]
    Empty,
}

/// Gold-by-predicted co-occurrence counts.
#[derive(Clone, Debug, PartialEq)]
pub struct ContingencyTable {
    pub counts: Vec<Vec<u64>>,
    pub gold_sizes: Vec<u64>,
    pub pred_sizes: Vec<u64>,
    pub n: u64,
}

impl ContingencyTable {
    pub fn new<G: Eq + Hash, P: Eq + Hash>(gold: &[G], pred: &[P]) -> Result<Self, MetricError> {
        if gold.len() != pred.len() {
            return Err(MetricError::InstanceMismatch(format!(
                "{} gold vs {} predicted labels",
                gold.len(),
                pred.len()
            )));
        }
        let mut gid: HashMap<&G, usize> = HashMap::new();
        let mut pid: HashMap<&P, usize> = HashMap::new();
        let mut cells: Vec<(usize, usize)> = Vec::with_capacity(gold.len());
        for (g, p) in gold.iter().zip(pred) {
            let gl = gid.len();
            let pl = pid.len();
            cells.push((*gid.entry(g).or_insert(gl), *pid.entry(p).or_insert(pl)));
        }
        let mut counts = vec![vec![0u64; pid.len()]; gid.len()];
        for (i, j) in cells {
            counts[i][j] += 1;
        }
        let gold_sizes = counts.iter().map(|r| r.iter().sum()).collect();
        let pred_sizes = (0..pid.len()).map(|j| counts.iter().map(|r| r[j]).sum()).collect();
        Ok(Self {
            counts,
            gold_sizes,
            pred_sizes,
            n: gold.len() as u64,
        })
    }
}

fn pairs(x: u64) -> u128 {
    let x = x as u128;
    x * x.saturating_sub(1) / 2
}

/// Adjusted Rand Index, evaluated exactly in integers and rounded once.
pub fn ari<G: Eq + Hash, P: Eq + Hash>(gold: &[G], pred: &[P]) -> Result<f64, MetricError> {
    let t = ContingencyTable::new(gold, pred)?;
    if t.n < 2 {
        return Err(MetricError::TooFew { min: 2, got: t.n as usize });
    }
    let index: u128 = t.counts.iter().flatten().map(|&c| pairs(c)).sum();
    let a: u128 = t.gold_sizes.iter().map(|&c| pairs(c)).sum();
    let b: u128 = t.pred_sizes.iter().map(|&c| pairs(c)).sum();
    let total = pairs(t.n);
    // ARI = (index - a*b/total) / ((a+b)/2 - a*b/total), scaled by 2*total.
    let num = 2 * (index as i128 * total as i128 - (a * b) as i128);
    let den = (a + b) as i128 * total as i128 - 2 * (a * b) as i128;
    if den == 0 {
        // Both partitions are all-singletons or both a single cluster.
        return Ok(1.0);
    }
    Ok(num as f64 / den as f64)
}

fn entropy(sizes: &[u64], n: u64) -> f64 {
    let n = n as f64;
    -sizes
        .iter()
        .filter(|&&s| s > 0)
        .map(|&s| {
            let p = s as f64 / n;
            p * p.ln()
        })
        .sum::<f64>()
}

/// Homogeneity, completeness and their harmonic mean.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VMeasure {
    pub homogeneity: f64,
    pub completeness: f64,
    pub v_measure: f64,
}

pub fn v_measure_parts<G: Eq + Hash, P: Eq + Hash>(
    gold: &[G],
    pred: &[P],
) -> Result<VMeasure, MetricError> {
    let t = ContingencyTable::new(gold, pred)?;
    if t.n == 0 {
        return Err(MetricError::TooFew { min: 1, got: 0 });
    }
    let n = t.n as f64;
    let h_gold = entropy(&t.gold_sizes, t.n);
    let h_pred = entropy(&t.pred_sizes, t.n);
    // H(gold | pred) and H(pred | gold) from the joint counts.
    let mut h_gold_given_pred = 0.0;
    let mut h_pred_given_gold = 0.0;
    for (i, row) in t.counts.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            if c == 0 {
                continue;
            }
            let c = c as f64;
            h_gold_given_pred -= c / n * (c / t.pred_sizes[j] as f64).ln();
            h_pred_given_gold -= c / n * (c / t.gold_sizes[i] as f64).ln();
        }
    }
    let homogeneity = if h_gold == 0.0 { 1.0 } else { 1.0 - h_gold_given_pred / h_gold };
    let completeness = if h_pred == 0.0 { 1.0 } else { 1.0 - h_pred_given_gold / h_pred };
    let v = if homogeneity + completeness == 0.0 {
        0.0
    } else {
        2.0 * homogeneity * completeness / (homogeneity + completeness)
    };
    Ok(VMeasure {
        homogeneity,
        completeness,
        v_measure: v,
    })
}

pub fn v_measure<G: Eq + Hash, P: Eq + Hash>(gold: &[G], pred: &[P]) -> Result<f64, MetricError> {
    Ok(v_measure_parts(gold, pred)?.v_measure)
}

/// Harmonic mean of pair precision and recall. Two all-singleton labelings
/// score 1; if exactly one side has no same-cluster pairs the score is 0.
pub fn paired_fscore<G: Eq + Hash, P: Eq + Hash>(
    gold: &[G],
    pred: &[P],
) -> Result<f64, MetricError> {
    let t = ContingencyTable::new(gold, pred)?;
    let both: u128 = t.counts.iter().flatten().map(|&c| pairs(c)).sum();
    let gold_pairs: u128 = t.gold_sizes.iter().map(|&c| pairs(c)).sum();
    let pred_pairs: u128 = t.pred_sizes.iter().map(|&c| pairs(c)).sum();
    if gold_pairs == 0 && pred_pairs == 0 {
        return Ok(1.0);
    }
    if gold_pairs == 0 || pred_pairs == 0 || both == 0 {
        return Ok(0.0);
    }
    let p = both as f64 / pred_pairs as f64;
    let r = both as f64 / gold_pairs as f64;
    Ok(2.0 * p * r / (p + r))
}

/// Best ARI over the tree's cuts in `c_min..=c_max` (clipped to `n - 1`).
/// Ties go to the smaller count.
pub fn max_ari<G: Eq + Hash>(
    gold: &[G],
    tree: &LinkageTree,
    c_min: usize,
    c_max: usize,
) -> Result<(f64, usize), MetricError> {
    if gold.len() != tree.n {
        return Err(MetricError::InstanceMismatch(format!(
            "{} gold labels for a tree over {} rows",
            gold.len(),
            tree.n
        )));
    }
    let hi = c_max.min(tree.n.saturating_sub(1));
    let range: Vec<usize> = if hi >= c_min {
        (c_min..=hi).collect()
    } else if tree.n >= 2 {
        vec![c_min.min(tree.n)]
    } else {
        return Err(MetricError::NoFeasibleCut);
    };
    max_ari_over_cuts(gold, range.into_iter().map(|c| (c, tree.cut(c))))
}

/// Best ARI over precomputed cuts, keyed by cluster count.
pub fn max_ari_over_cuts<G: Eq + Hash>(
    gold: &[G],
    cuts: impl IntoIterator<Item = (usize, Vec<usize>)>,
) -> Result<(f64, usize), MetricError> {
    let mut best: Option<(f64, usize)> = None;
    for (c, labels) in cuts {
        let s = ari(gold, &labels)?;
        if best.is_none_or(|(b, bc)| s > b || (s == b && c < bc)) {
            best = Some((s, c));
        }
    }
    best.ok_or(MetricError::NoFeasibleCut)
}

/// Aligns two id-keyed labelings into parallel vectors (sorted by id).
pub fn align<'a, G: Clone, P: Clone>(
    gold: &'a BTreeMap<String, G>,
    pred: &'a BTreeMap<String, P>,
) -> Result<(Vec<G>, Vec<P>), MetricError> {
    if gold.len() != pred.len() || gold.keys().zip(pred.keys()).any(|(a, b)| a != b) {
        let missing: Vec<&String> = gold
            .keys()
            .filter(|k| !pred.contains_key(*k))
            .chain(pred.keys().filter(|k| !gold.contains_key(*k)))
            .take(5)
            .collect();
        return Err(MetricError::InstanceMismatch(format!("{missing:?}")));
    }
    Ok((gold.values().cloned().collect(), pred.values().cloned().collect()))
}

/// Scores of one word.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WordScores {
    pub word: String,
    pub instances: usize,
    pub scores: BTreeMap<String, f64>,
}

/// Instance-weighted and unweighted means per metric, plus the per-word rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub per_word: Vec<WordScores>,
    pub weighted: BTreeMap<String, f64>,
    pub macro_avg: BTreeMap<String, f64>,
}

pub fn aggregate(per_word: &[WordScores]) -> Result<Aggregate, MetricError> {
    if per_word.is_empty() {
        return Err(MetricError::Empty);
    }
    let mut rows = per_word.to_vec();
    rows.sort_by(|a, b| a.word.cmp(&b.word));
    let mut wsum: BTreeMap<String, (f64, f64)> = BTreeMap::new();
    let mut msum: BTreeMap<String, (f64, f64)> = BTreeMap::new();
    for r in &rows {
        for (metric, &v) in &r.scores {
            let w = wsum.entry(metric.clone()).or_default();
            w.0 += v * r.instances as f64;
            w.1 += r.instances as f64;
            let m = msum.entry(metric.clone()).or_default();
            m.0 += v;
            m.1 += 1.0;
        }
    }
    let mean = |m: BTreeMap<String, (f64, f64)>| {
        m.into_iter()
            .map(|(k, (s, c))| (k, if c == 0.0 { 0.0 } else { s / c }))
            .collect()
    };
    Ok(Aggregate {
        per_word: rows,
        weighted: mean(wsum),
        macro_avg: mean(msum),
    })
}

impl Aggregate {
    /// Plain-text table: one line per word, then both averages.
    pub fn to_table(&self) -> String {
        let metrics: Vec<&String> = self.weighted.keys().collect();
        let mut out = format!("{:<24} {:>6}", "word", "n");
        for m in &metrics {
            out.push_str(&format!(" {m:>10}"));
        }
        out.push('\n');
        let row = |out: &mut String, name: &str, n: String, vals: &BTreeMap<String, f64>| {
            out.push_str(&format!("{name:<24} {n:>6}"));
            for m in &metrics {
                match vals.get(*m) {
                    Some(v) => out.push_str(&format!(" {v:>10.4}")),
                    None => out.push_str(&format!(" {:>10}", "-")),
                }
            }
            out.push('\n');
        };
        for w in &self.per_word {
            row(&mut out, &w.word, w.instances.to_string(), &w.scores);
        }
        let total: usize = self.per_word.iter().map(|w| w.instances).sum();
        row(&mut out, "[weighted]", total.to_string(), &self.weighted);
        row(&mut out, "[macro]", self.per_word.len().to_string(), &self.macro_avg);
        out
    }
}
