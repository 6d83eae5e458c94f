//! Independent reference implementations used as test oracles.
//!
//! Nothing here calls into the library's metric or clustering code.

#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::Rng;

/// Every set partition of `0..n` as a restricted growth string.
pub fn partitions(n: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, n: usize, max: usize, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == n {
            out.push(prefix.clone());
            return;
        }
        let top = if prefix.is_empty() { 0 } else { max + 1 };
        for l in 0..=top {
            prefix.push(l);
            rec(prefix, n, max.max(l), out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if n == 0 {
        return vec![vec![]];
    }
    rec(&mut Vec::new(), n, 0, &mut out);
    out
}

/// Pair counts: (same in both, same in gold only, same in pred only, different in both).
pub fn pair_counts(gold: &[usize], pred: &[usize]) -> (u64, u64, u64, u64) {
    let (mut a, mut b, mut c, mut d) = (0, 0, 0, 0);
    for i in 0..gold.len() {
        for j in i + 1..gold.len() {
            match (gold[i] == gold[j], pred[i] == pred[j]) {
                (true, true) => a += 1,
                (true, false) => b += 1,
                (false, true) => c += 1,
                (false, false) => d += 1,
            }
        }
    }
    (a, b, c, d)
}

/// ARI from pair counts: 2(ad - bc) / ((a+b)(b+d) + (a+c)(c+d)).
pub fn ari_pairs(gold: &[usize], pred: &[usize]) -> f64 {
    let (a, b, c, d) = pair_counts(gold, pred);
    let (a, b, c, d) = (a as f64, b as f64, c as f64, d as f64);
    let den = (a + b) * (b + d) + (a + c) * (c + d);
    if den == 0.0 {
        return 1.0;
    }
    2.0 * (a * d - b * c) / den
}

pub fn paired_f_pairs(gold: &[usize], pred: &[usize]) -> f64 {
    let (a, b, c, _) = pair_counts(gold, pred);
    let gold_pairs = a + b;
    let pred_pairs = a + c;
    if gold_pairs == 0 && pred_pairs == 0 {
        return 1.0;
    }
    if gold_pairs == 0 || pred_pairs == 0 || a == 0 {
        return 0.0;
    }
    let p = a as f64 / pred_pairs as f64;
    let r = a as f64 / gold_pairs as f64;
    2.0 * p * r / (p + r)
}

fn h(counts: impl Iterator<Item = usize>, n: f64) -> f64 {
    counts
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// V-measure through joint and marginal entropies:
/// H(G|P) = H(G,P) - H(P).
pub fn v_measure_entropy(gold: &[usize], pred: &[usize]) -> f64 {
    let n = gold.len() as f64;
    let mut joint: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut g: BTreeMap<usize, usize> = BTreeMap::new();
    let mut p: BTreeMap<usize, usize> = BTreeMap::new();
    for (&x, &y) in gold.iter().zip(pred) {
        *joint.entry((x, y)).or_default() += 1;
        *g.entry(x).or_default() += 1;
        *p.entry(y).or_default() += 1;
    }
    let hg = h(g.values().copied(), n);
    let hp = h(p.values().copied(), n);
    let hgp = h(joint.values().copied(), n);
    let homo = if hg == 0.0 { 1.0 } else { 1.0 - (hgp - hp) / hg };
    let comp = if hp == 0.0 { 1.0 } else { 1.0 - (hgp - hg) / hp };
    if homo + comp == 0.0 {
        0.0
    } else {
        2.0 * homo * comp / (homo + comp)
    }
}

/// Calinski-Harabasz from dense rows: (B / (c-1)) / (W / (n-c)).
pub fn ch_dense(rows: &[Vec<f64>], labels: &[usize]) -> f64 {
    let n = rows.len();
    let dim = rows[0].len();
    let c = labels.iter().max().unwrap() + 1;
    let mean: Vec<f64> = (0..dim)
        .map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n as f64)
        .collect();
    let mut b = 0.0;
    let mut w = 0.0;
    for k in 0..c {
        let members: Vec<&Vec<f64>> = rows
            .iter()
            .zip(labels)
            .filter(|(_, &l)| l == k)
            .map(|(r, _)| r)
            .collect();
        let cent: Vec<f64> = (0..dim)
            .map(|j| members.iter().map(|r| r[j]).sum::<f64>() / members.len() as f64)
            .collect();
        b += members.len() as f64
            * cent.iter().zip(&mean).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
        for r in members {
            w += r.iter().zip(&cent).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
        }
    }
    if w <= 1e-12 {
        return f64::INFINITY;
    }
    (b / (c - 1) as f64) / (w / (n - c) as f64)
}

/// One reference merge: (left node, right node, distance, size).
pub type RefMerge = (usize, usize, f64, usize);

/// Naive average linkage: every step scans all cluster pairs and averages
/// the original leaf distances directly.
pub fn upgma_naive(d: &[Vec<f64>]) -> Vec<RefMerge> {
    let n = d.len();
    // (node id, leaves)
    let mut clusters: Vec<(usize, Vec<usize>)> = (0..n).map(|i| (i, vec![i])).collect();
    let mut out = Vec::new();
    for step in 0..n.saturating_sub(1) {
        let mut best: Option<(f64, usize, usize, usize, usize)> = None;
        for x in 0..clusters.len() {
            for y in 0..clusters.len() {
                if x == y {
                    continue;
                }
                let (ma, mb) = (clusters[x].1[0], clusters[y].1[0]);
                if ma > mb {
                    continue;
                }
                let mut s = 0.0;
                for &i in &clusters[x].1 {
                    for &j in &clusters[y].1 {
                        s += d[i][j];
                    }
                }
                let avg = s / (clusters[x].1.len() * clusters[y].1.len()) as f64;
                let better = match best {
                    None => true,
                    Some((bd, ba, bb, _, _)) => {
                        avg < bd - 1e-12 || ((avg - bd).abs() <= 1e-12 && (ma, mb) < (ba, bb))
                    }
                };
                if better {
                    best = Some((avg, ma, mb, x, y));
                }
            }
        }
        let (dist, _, _, x, y) = best.unwrap();
        let (nx, mut lx) = clusters[x].clone();
        let (ny, ly) = clusters[y].clone();
        out.push((nx, ny, dist, lx.len() + ly.len()));
        lx.extend(ly);
        lx.sort();
        let (hi, lo) = if x > y { (x, y) } else { (y, x) };
        clusters.remove(hi);
        clusters.remove(lo);
        clusters.push((n + step, lx));
    }
    out
}

/// Random symmetric distance matrix with zero diagonal.
#[allow(clippy::needless_range_loop)]
pub fn random_distances(rng: &mut impl Rng, n: usize) -> Vec<Vec<f64>> {
    let mut d = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let v = rng.gen_range(0.0..2.0);
            d[i][j] = v;
            d[j][i] = v;
        }
    }
    d
}

/// Random labels over `k` classes.
pub fn random_labels(rng: &mut impl Rng, n: usize, k: usize) -> Vec<usize> {
    (0..n).map(|_| rng.gen_range(0..k)).collect()
}
