//! Comparator classifiers on preprocessed features.

use serde::{Deserialize, Serialize};

/// Euclidean k-nearest-neighbours; distance ties keep the earlier training row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub k: usize,
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<u8>,
}

impl KnnModel {
    pub fn fit(rows: Vec<Vec<f64>>, labels: Vec<u8>, k: usize) -> Self {
        Self { k: k.max(1).min(rows.len()), rows, labels }
    }

    /// Share of the k nearest neighbours labelled 1.
    pub fn vote_fraction(&self, x: &[f64]) -> f64 {
        let mut dist: Vec<(f64, usize)> = self
            .rows
            .iter()
            .enumerate()
            .map(|(i, r)| (r.iter().zip(x).map(|(a, b)| (a - b).powi(2)).sum(), i))
            .collect();
        dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let ones = dist[..self.k].iter().filter(|(_, i)| self.labels[*i] == 1).count();
        ones as f64 / self.k as f64
    }
}

/// Gaussian naive Bayes with per-class, per-feature variances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NaiveBayesModel {
    pub log_priors: [f64; 2],
    pub means: [Vec<f64>; 2],
    pub variances: [Vec<f64>; 2],
}

impl NaiveBayesModel {
    /// Both classes must be present.
    pub fn fit(rows: &[Vec<f64>], labels: &[u8]) -> Self {
        let d = rows[0].len();
        let n = rows.len() as f64;
        let mut global_var = 0.0f64;
        for j in 0..d {
            let m = rows.iter().map(|r| r[j]).sum::<f64>() / n;
            global_var = global_var.max(rows.iter().map(|r| (r[j] - m).powi(2)).sum::<f64>() / n);
        }
        // Variance floor relative to the widest feature keeps constant features finite.
        let floor = 1e-9 * global_var.max(1.0);
        let per_class = |c: u8| {
            let members: Vec<&Vec<f64>> = rows.iter().zip(labels).filter(|(_, &l)| l == c).map(|(r, _)| r).collect();
            let nc = members.len() as f64;
            let means: Vec<f64> = (0..d).map(|j| members.iter().map(|r| r[j]).sum::<f64>() / nc).collect();
            let vars = (0..d)
                .map(|j| members.iter().map(|r| (r[j] - means[j]).powi(2)).sum::<f64>() / nc + floor)
                .collect();
            ((nc / n).ln(), means, vars)
        };
        let (p0, m0, v0) = per_class(0);
        let (p1, m1, v1) = per_class(1);
        Self { log_priors: [p0, p1], means: [m0, m1], variances: [v0, v1] }
    }

    /// Posterior probability of class 1.
    pub fn posterior(&self, x: &[f64]) -> f64 {
        let ll = |c: usize| {
            self.log_priors[c]
                + x.iter()
                    .zip(&self.means[c])
                    .zip(&self.variances[c])
                    .map(|((xi, m), v)| -0.5 * ((2.0 * std::f64::consts::PI * v).ln() + (xi - m).powi(2) / v))
                    .sum::<f64>()
        };
        let (l0, l1) = (ll(0), ll(1));
        1.0 / (1.0 + (l0 - l1).exp())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn knn_majority() {
        let rows = vec![vec![0.0], vec![0.1], vec![0.2], vec![5.0], vec![5.1]];
        let m = KnnModel::fit(rows, vec![0, 0, 1, 1, 1], 3);
        assert!((m.vote_fraction(&[0.05]) - 1.0 / 3.0).abs() < 1e-15);
        assert!((m.vote_fraction(&[5.0]) - 1.0).abs() < 1e-15);
        assert_eq!(KnnModel::fit(vec![vec![0.0]], vec![1], 5).k, 1);
    }

    #[test]
    fn naive_bayes_separates_means() {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![if i < 10 { -2.0 } else { 2.0 } + 0.1 * (i % 5) as f64]).collect();
        let labels: Vec<u8> = (0..20).map(|i| u8::from(i >= 10)).collect();
        let m = NaiveBayesModel::fit(&rows, &labels);
        assert!(m.posterior(&[-2.0]) < 1e-6);
        assert!(m.posterior(&[2.2]) > 1.0 - 1e-6);
        let mid = m.posterior(&[0.2]);
        assert!(mid > 0.0 && mid < 1.0);
    }
}
