//! Average-linkage agglomerative clustering over cosine distances, and
//! cluster-count selection by the Calinski–Harabasz score.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataset::SenseClustering;
use crate::vectorize::TfidfMatrix;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ClusterError {
    #[error("need at least 2 rows, got {0}")]
    TooFewRows(usize),
    #[error("{labels} labels for {rows} rows")]
    LengthMismatch { labels: usize, rows: usize },
    #[error("Calinski-Harabasz needs 2 <= clusters < rows, got {clusters} clusters over {rows} rows")]
    BadClusterCount { clusters: usize, rows: usize },
    #[error("invalid cluster range {0}..={1}")]
    BadRange(usize, usize),
}

/// One agglomeration step. Leaves are nodes `0..n`; step `i` creates node
/// `n + i`. `left` holds the cluster with the smaller minimum leaf.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub distance: f64,
    pub size: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkageTree {
    pub n: usize,
    pub merges: Vec<Merge>,
}

impl LinkageTree {
    /// Labels after applying the first `n - c` merges, numbered by first
    /// occurrence.
    pub fn cut(&self, c: usize) -> Vec<usize> {
        let c = c.clamp(1.min(self.n), self.n);
        let mut parent: Vec<usize> = (0..self.n + self.merges.len()).collect();
        for (i, m) in self.merges.iter().take(self.n - c).enumerate() {
            parent[m.left] = self.n + i;
            parent[m.right] = self.n + i;
        }
        let root = |mut x: usize| {
            while parent[x] != x {
                x = parent[x];
            }
            x
        };
        relabel(&(0..self.n).map(root).collect::<Vec<_>>())
    }
}

/// Renumbers labels 0, 1, ... in order of first occurrence.
pub fn relabel<T: Eq + std::hash::Hash + Clone>(labels: &[T]) -> Vec<usize> {
    let mut ids = std::collections::HashMap::new();
    labels
        .iter()
        .map(|l| {
            let next = ids.len();
            *ids.entry(l.clone()).or_insert(next)
        })
        .collect()
}

/// Pairwise cosine distances `1 - cos` between rows, clamped to `[0, 2]`.
/// Rows are assumed L2-normalized; an empty row has cosine 0 to everything.
#[allow(clippy::needless_range_loop)]
pub fn cosine_distances(m: &TfidfMatrix) -> Vec<Vec<f64>> {
    let n = m.n_rows();
    let mut d = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let v = (1.0 - m.dot(i, j)).clamp(0.0, 2.0);
            d[i][j] = v;
            d[j][i] = v;
        }
    }
    d
}

pub fn agglomerative(m: &TfidfMatrix) -> Result<LinkageTree, ClusterError> {
    if m.n_rows() < 2 {
        return Err(ClusterError::TooFewRows(m.n_rows()));
    }
    Ok(upgma(&cosine_distances(m)))
}

/// UPGMA over a symmetric distance matrix.
///
/// The closest pair is merged first; ties go to the pair with the smallest
/// (left minimum leaf, right minimum leaf). Each active cluster lives in the
/// slot of its minimum leaf and caches its nearest later slot, so most steps
/// avoid a full rescan.
pub fn upgma(dist: &[Vec<f64>]) -> LinkageTree {
    let n = dist.len();
    let mut d: Vec<Vec<f64>> = dist.to_vec();
    let mut active = vec![true; n];
    let mut size = vec![1usize; n];
    let mut node: Vec<usize> = (0..n).collect();
    let mut merges = Vec::with_capacity(n.saturating_sub(1));

    let nearest = |d: &Vec<Vec<f64>>, active: &[bool], i: usize| -> Option<(f64, usize)> {
        let mut best: Option<(f64, usize)> = None;
        for j in i + 1..d.len() {
            if active[j] && best.is_none_or(|(bd, _)| d[i][j] < bd) {
                best = Some((d[i][j], j));
            }
        }
        best
    };
    let mut nn: Vec<Option<(f64, usize)>> = (0..n).map(|i| nearest(&d, &active, i)).collect();

    for step in 0..n.saturating_sub(1) {
        let (a, (dist_ab, b)) = (0..n)
            .filter(|&i| active[i])
            .filter_map(|i| nn[i].map(|x| (i, x)))
            .min_by(|(i, (di, ji)), (k, (dk, jk))| {
                di.total_cmp(dk).then(i.cmp(k)).then(ji.cmp(jk))
            })
            .expect("an active pair exists");
        merges.push(Merge {
            left: node[a],
            right: node[b],
            distance: dist_ab,
            size: size[a] + size[b],
        });
        let (sa, sb) = (size[a] as f64, size[b] as f64);
        active[b] = false;
        for k in 0..n {
            if active[k] && k != a {
                let v = (sa * d[a][k] + sb * d[b][k]) / (sa + sb);
                d[a][k] = v;
                d[k][a] = v;
            }
        }
        size[a] += size[b];
        node[a] = n + step;
        nn[b] = None;
        nn[a] = nearest(&d, &active, a);
        for k in 0..a {
            if !active[k] {
                continue;
            }
            match nn[k] {
                Some((_, j)) if j == a || j == b => nn[k] = nearest(&d, &active, k),
                Some((dk, j)) if d[k][a] < dk || (d[k][a] == dk && a < j) => {
                    nn[k] = Some((d[k][a], a))
                }
                None => nn[k] = nearest(&d, &active, k),
                _ => {}
            }
        }
        for k in a + 1..b {
            if active[k] && nn[k].is_some_and(|(_, j)| j == b) {
                nn[k] = nearest(&d, &active, k);
            }
        }
    }
    LinkageTree { n, merges }
}

/// Calinski–Harabasz score on the matrix rows.
///
/// Returns `+inf` when the within-cluster dispersion vanishes.
pub fn calinski_harabasz(m: &TfidfMatrix, labels: &[usize]) -> Result<f64, ClusterError> {
    let n = m.n_rows();
    if labels.len() != n {
        return Err(ClusterError::LengthMismatch {
            labels: labels.len(),
            rows: n,
        });
    }
    let labels = relabel(labels);
    let c = labels.iter().max().map_or(0, |&x| x + 1);
    if c < 2 || n <= c {
        return Err(ClusterError::BadClusterCount { clusters: c, rows: n });
    }
    let dim = m.vocab.len();
    let mut centroids = vec![vec![0.0; dim]; c];
    let mut counts = vec![0usize; c];
    let mut overall = vec![0.0; dim];
    for (i, &l) in labels.iter().enumerate() {
        counts[l] += 1;
        for &(j, x) in &m.values[i] {
            centroids[l][j] += x;
            overall[j] += x;
        }
    }
    for (cent, &cnt) in centroids.iter_mut().zip(&counts) {
        for x in cent.iter_mut() {
            *x /= cnt as f64;
        }
    }
    for x in &mut overall {
        *x /= n as f64;
    }
    let between: f64 = centroids
        .iter()
        .zip(&counts)
        .map(|(cent, &cnt)| {
            cnt as f64 * cent.iter().zip(&overall).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
        })
        .sum();
    let within: f64 = labels
        .iter()
        .enumerate()
        .map(|(i, &l)| {
            let row = m.dense_row(i);
            row.iter().zip(&centroids[l]).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
        })
        .sum();
    if within <= 1e-12 {
        return Ok(f64::INFINITY);
    }
    Ok((between / (c - 1) as f64) / (within / (n - c) as f64))
}

/// Outcome of cluster-count selection for one word.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub clustering: SenseClustering,
    pub selected_c: usize,
    pub ch_scores: BTreeMap<usize, f64>,
    /// Labels (row order) of every feasible cut, keyed by cluster count.
    pub cuts: BTreeMap<usize, Vec<usize>>,
    pub tree: LinkageTree,
    /// All rows identical: every cut scores the same and the split is arbitrary.
    pub degenerate: bool,
    /// Fewer rows than needed to score any cut.
    pub undersized: bool,
}

/// Builds the tree once, cuts it at every feasible count in
/// `c_min..=c_max` (clipped to `n - 1`) and keeps the cut with the highest
/// Calinski–Harabasz score. Ties go to the smaller count.
pub fn select_clustering(
    word: &str,
    m: &TfidfMatrix,
    c_min: usize,
    c_max: usize,
) -> Result<Selection, ClusterError> {
    if c_min < 2 || c_max < c_min {
        return Err(ClusterError::BadRange(c_min, c_max));
    }
    let n = m.n_rows();
    let tree = agglomerative(m)?;
    let hi = c_max.min(n - 1);
    let mut ch_scores = BTreeMap::new();
    let mut cuts = BTreeMap::new();
    let undersized = hi < c_min;
    let selected_c = if undersized {
        let c = c_min.min(n);
        cuts.insert(c, tree.cut(c));
        c
    } else {
        let mut best: Option<(usize, f64)> = None;
        for c in c_min..=hi {
            let labels = tree.cut(c);
            let score = calinski_harabasz(m, &labels)?;
            let key = if score.is_nan() { f64::NEG_INFINITY } else { score };
            if best.is_none_or(|(_, b)| key > b) {
                best = Some((c, key));
            }
            ch_scores.insert(c, score);
            cuts.insert(c, labels);
        }
        best.expect("non-empty range").0
    };
    let degenerate = tree.merges.iter().all(|mg| mg.distance == 0.0);
    let labels = &cuts[&selected_c];
    let clustering = SenseClustering::hard(
        word,
        m.rows.iter().cloned().zip(labels.iter().copied()).collect(),
    );
    Ok(Selection {
        clustering,
        selected_c,
        ch_scores,
        cuts,
        tree,
        degenerate,
        undersized,
    })
}

/// Gives every instance probability 1 for its hard cluster.
pub fn hard_to_soft(h: &SenseClustering) -> SenseClustering {
    let soft = h
        .assignments
        .iter()
        .map(|(id, &c)| (id.clone(), BTreeMap::from([(c, 1.0)])))
        .collect();
    SenseClustering {
        word: h.word.clone(),
        assignments: h.assignments.clone(),
        soft: Some(soft),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(rows: &[&[(usize, f64)]], dim: usize) -> TfidfMatrix {
        TfidfMatrix {
            rows: (0..rows.len()).map(|i| format!("i{i}")).collect(),
            vocab: (0..dim).map(|j| format!("w{j}")).collect(),
            values: rows
                .iter()
                .map(|r| {
                    let norm = r.iter().map(|(_, v)| v * v).sum::<f64>().sqrt();
                    r.iter().map(|&(j, v)| (j, v / norm)).collect()
                })
                .collect(),
        }
    }

    #[test]
    fn three_point_upgma() {
        let d = vec![
            vec![0.0, 0.1, 0.8],
            vec![0.1, 0.0, 0.9],
            vec![0.8, 0.9, 0.0],
        ];
        let t = upgma(&d);
        assert_eq!((t.merges[0].left, t.merges[0].right), (0, 1));
        assert!((t.merges[0].distance - 0.1).abs() < 1e-15);
        assert_eq!((t.merges[1].left, t.merges[1].right), (3, 2));
        assert!((t.merges[1].distance - 0.85).abs() < 1e-15);
        assert_eq!(t.merges[1].size, 3);
    }

    #[test]
    fn identical_rows_merge_at_zero() {
        let m = matrix(&[&[(0, 1.0)], &[(0, 1.0)], &[(0, 1.0)]], 1);
        let t = agglomerative(&m).unwrap();
        assert!(t.merges.iter().all(|mg| mg.distance == 0.0));
    }

    #[test]
    fn cuts_have_requested_size() {
        let m = matrix(
            &[&[(0, 1.0)], &[(0, 1.0), (1, 0.2)], &[(1, 1.0)], &[(2, 1.0)], &[(2, 1.0), (0, 0.1)]],
            3,
        );
        let t = agglomerative(&m).unwrap();
        for c in 1..=5 {
            let labels = t.cut(c);
            assert_eq!(*labels.iter().max().unwrap() + 1, c);
        }
    }

    #[test]
    fn ch_rejects_single_cluster() {
        let m = matrix(&[&[(0, 1.0)], &[(1, 1.0)], &[(1, 1.0)]], 2);
        assert!(matches!(
            calinski_harabasz(&m, &[0, 0, 0]),
            Err(ClusterError::BadClusterCount { .. })
        ));
        assert!(calinski_harabasz(&m, &[0, 1]).is_err());
    }

    #[test]
    fn ch_hand_computation() {
        // Cluster A: two identical points e0; cluster B: e1 and e2.
        let m = matrix(&[&[(0, 1.0)], &[(0, 1.0)], &[(1, 1.0)], &[(2, 1.0)]], 3);
        // mu = (.5,.25,.25); muA = (1,0,0); muB = (0,.5,.5)
        // B = 2*(.25+.0625+.0625) + 2*(.25+.0625+.0625) = 1.5
        // W = 0 + 2*(.25+.25) = 1.0 ; CH = (1.5/1)/(1.0/2) = 3
        let ch = calinski_harabasz(&m, &[0, 0, 1, 1]).unwrap();
        assert!((ch - 3.0).abs() < 1e-12);
    }

    #[test]
    fn n3_returns_two_clusters() {
        let m = matrix(&[&[(0, 1.0)], &[(0, 1.0), (1, 0.1)], &[(1, 1.0)]], 2);
        let s = select_clustering("w", &m, 2, 9).unwrap();
        assert_eq!(s.selected_c, 2);
        assert_eq!(s.ch_scores.keys().copied().collect::<Vec<_>>(), [2]);
    }

    #[test]
    fn n2_skips_scoring() {
        let m = matrix(&[&[(0, 1.0)], &[(1, 1.0)]], 2);
        let s = select_clustering("w", &m, 2, 9).unwrap();
        assert_eq!(s.selected_c, 2);
        assert!(s.undersized && s.ch_scores.is_empty());
        let m1 = matrix(&[&[(0, 1.0)]], 1);
        assert_eq!(select_clustering("w", &m1, 2, 9).unwrap_err(), ClusterError::TooFewRows(1));
    }

    #[test]
    fn identical_rows_are_flagged() {
        let m = matrix(&[&[(0usize, 1.0f64)][..]; 5], 1);
        let s = select_clustering("w", &m, 2, 9).unwrap();
        assert!(s.degenerate);
        assert_eq!(s.selected_c, 2);
        assert_eq!(s, select_clustering("w", &m, 2, 9).unwrap());
    }

    #[test]
    fn soft_conversion() {
        let h = SenseClustering::hard("w", [("i1".into(), 0), ("i2".into(), 1)].into());
        let s = hard_to_soft(&h);
        let soft = s.soft.as_ref().unwrap();
        assert_eq!(soft["i1"], BTreeMap::from([(0, 1.0)]));
        assert_eq!(soft["i2"], BTreeMap::from([(1, 1.0)]));
        assert!(s.is_consistent());
        let empty = hard_to_soft(&SenseClustering::hard("w", BTreeMap::new()));
        assert!(empty.soft.unwrap().is_empty());
    }
}
