//! Cluster-complexity scoring: merge fitted components and rank scatterplots by the
//! resulting `(M, K*)` pair.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gmm::{select_model, FitConfig, FitResult, GaussianComponent, MixtureModel, Scatterplot};
use crate::mergemodel::MergingModel;
use crate::pairspace::{align, extract_pair_features};

/// Symmetric binary adjacency over mixture components; the diagonal is 1.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergeMatrix {
    k: usize,
    entries: Vec<bool>,
}

impl MergeMatrix {
    pub fn new(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidArgument("merge matrix needs k >= 1".into()));
        }
        let mut entries = vec![false; k * k];
        for i in 0..k {
            entries[i * k + i] = true;
        }
        Ok(Self { k, entries })
    }

    /// Build from unordered edges `(u, v)` with `u != v`.
    pub fn from_edges(k: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut m = Self::new(k)?;
        for &(u, v) in edges {
            if u >= k || v >= k || u == v {
                return Err(Error::InvalidArgument(format!("bad edge ({u}, {v}) for k = {k}")));
            }
            m.set(u, v, true);
        }
        Ok(m)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn get(&self, u: usize, v: usize) -> bool {
        self.entries[u * self.k + v]
    }

    fn set(&mut self, u: usize, v: usize, merge: bool) {
        self.entries[u * self.k + v] = merge;
        self.entries[v * self.k + u] = merge;
    }

    pub fn rows(&self) -> Vec<Vec<u8>> {
        (0..self.k).map(|u| (0..self.k).map(|v| u8::from(self.get(u, v))).collect()).collect()
    }
}

/// Total order on components used to orient each pair: the lighter one is `u`.
fn component_order(a: &GaussianComponent, b: &GaussianComponent) -> Ordering {
    let key = |c: &GaussianComponent| [c.weight, c.mean.x, c.mean.y, c.cov.xx, c.cov.xy, c.cov.yy];
    key(a).iter().zip(key(b).iter()).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(Ordering::Equal)
}

/// Predict every unordered pair once, oriented by component content so the
/// matrix follows any permutation of the components.
pub fn build_merge_matrix(model: &MixtureModel, merger: &MergingModel) -> Result<MergeMatrix> {
    let k = model.k();
    let mut matrix = MergeMatrix::new(k)?;
    for a in 0..k {
        for b in a + 1..k {
            let (u, v) = match component_order(&model.components[a], &model.components[b]) {
                Ordering::Greater => (b, a),
                _ => (a, b),
            };
            let (features, mean_u, mean_v) = extract_pair_features(model, u, v)?;
            let prediction = merger.predict(&align(&features, mean_u, mean_v));
            matrix.set(a, b, prediction.label.as_u8() == 1);
        }
    }
    Ok(matrix)
}

/// Connected components via union-find with path halving.
pub fn count_components(matrix: &MergeMatrix) -> usize {
    let k = matrix.k();
    let mut parent: Vec<usize> = (0..k).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut count = k;
    for u in 0..k {
        for v in u + 1..k {
            if matrix.get(u, v) {
                let (ru, rv) = (find(&mut parent, u), find(&mut parent, v));
                if ru != rv {
                    parent[ru.max(rv)] = ru.min(rv);
                    count -= 1;
                }
            }
        }
    }
    count
}

/// `m` clusters after merging `k_star` fitted components; `1 <= m <= k_star`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VqmScore {
    pub m: usize,
    pub k_star: usize,
}

impl VqmScore {
    pub fn new(m: usize, k_star: usize) -> Result<Self> {
        if m == 0 || m > k_star {
            return Err(Error::InvalidArgument(format!("score requires 1 <= m <= k_star, got ({m}, {k_star})")));
        }
        Ok(Self { m, k_star })
    }
}

impl PartialOrd for VqmScore {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for VqmScore {
    fn cmp(&self, other: &Self) -> Ordering {
        compare(*self, *other)
    }
}

/// Lexicographic by `m`, then `k_star`.
pub fn compare(a: VqmScore, b: VqmScore) -> Ordering {
    a.m.cmp(&b.m).then(a.k_star.cmp(&b.k_star))
}

/// `m + (k_star - m) / (k_star + 1)`: an order embedding into the reals,
/// for plotting only. The fractional part stays below 1.
pub fn scalar_score(score: VqmScore) -> f64 {
    score.m as f64 + (score.k_star - score.m) as f64 / (score.k_star + 1) as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreDetail {
    pub score: VqmScore,
    pub fit: FitResult,
    pub matrix: MergeMatrix,
}

pub fn score_scatterplot_detailed(
    points: &Scatterplot,
    fit_config: &FitConfig,
    merger: &MergingModel,
) -> Result<ScoreDetail> {
    let fit = select_model(points, fit_config)?;
    let matrix = build_merge_matrix(&fit.model, merger)?;
    let score = VqmScore::new(count_components(&matrix), fit.k_star)?;
    Ok(ScoreDetail { score, fit, matrix })
}

pub fn score_scatterplot(points: &Scatterplot, fit_config: &FitConfig, merger: &MergingModel) -> Result<VqmScore> {
    score_scatterplot_detailed(points, fit_config, merger).map(|d| d.score)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankOrder {
    /// Simple to complex.
    Ascending,
    /// Most complex (most promising) first.
    #[default]
    Descending,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankedEntry {
    pub id: String,
    pub score: VqmScore,
}

pub type RankedList = Vec<RankedEntry>;

/// Stable sort; equal scores keep their input order in either direction.
pub fn rank(scores: &[(String, VqmScore)], order: RankOrder) -> RankedList {
    let mut out: Vec<RankedEntry> =
        scores.iter().map(|(id, score)| RankedEntry { id: id.clone(), score: *score }).collect();
    match order {
        RankOrder::Ascending => out.sort_by(|a, b| compare(a.score, b.score)),
        RankOrder::Descending => out.sort_by(|a, b| compare(b.score, a.score)),
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(m: usize, k: usize) -> VqmScore {
        VqmScore::new(m, k).unwrap()
    }

    #[test]
    fn components_examples() {
        assert_eq!(count_components(&MergeMatrix::new(1).unwrap()), 1);
        assert_eq!(count_components(&MergeMatrix::new(3).unwrap()), 3);
        let full = MergeMatrix::from_edges(3, &[(0, 1), (0, 2), (1, 2)]).unwrap();
        assert_eq!(count_components(&full), 1);
        let chain = MergeMatrix::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        assert_eq!(count_components(&chain), 1);
        assert!(!chain.get(0, 2));
        assert_eq!(count_components(&MergeMatrix::from_edges(5, &[(3, 4), (0, 2)]).unwrap()), 3);
        assert!(MergeMatrix::from_edges(2, &[(0, 0)]).is_err());
        assert!(MergeMatrix::new(0).is_err());
    }

    #[test]
    fn ordering_examples() {
        assert_eq!(compare(s(1, 2), s(2, 2)), Ordering::Less);
        assert_eq!(compare(s(1, 1), s(1, 2)), Ordering::Less);
        assert_eq!(compare(s(2, 3), s(2, 3)), Ordering::Equal);
        assert_eq!(scalar_score(s(1, 1)), 1.0);
        assert!((scalar_score(s(1, 2)) - 4.0 / 3.0).abs() < 1e-15);
        assert!(VqmScore::new(3, 2).is_err() && VqmScore::new(0, 2).is_err());
    }

    #[test]
    fn rank_examples() {
        let input = vec![("a".to_string(), s(1, 1)), ("b".to_string(), s(2, 2)), ("c".to_string(), s(1, 3))];
        let ids = |r: RankedList| r.into_iter().map(|e| e.id).collect::<Vec<_>>();
        assert_eq!(ids(rank(&input, RankOrder::Ascending)), ["a", "c", "b"]);
        assert_eq!(ids(rank(&input, RankOrder::Descending)), ["b", "c", "a"]);
        let mut reversed = input.clone();
        reversed.reverse();
        assert_eq!(ids(rank(&reversed, RankOrder::Ascending)), ["a", "c", "b"]);
        let same: Vec<_> = ["x", "y", "z"].iter().map(|id| (id.to_string(), s(2, 3))).collect();
        assert_eq!(ids(rank(&same, RankOrder::Descending)), ["x", "y", "z"]);
    }
}
