//! Feature preprocessing with a fit/apply split.
//!
//! Steps always run as center_scale → box_cox → pca → spatial_sign,
//! whatever order they were requested in.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PreprocessStep {
    CenterScale,
    BoxCox,
    Pca,
    SpatialSign,
}

impl PreprocessStep {
    pub const ALL: [PreprocessStep; 4] = [Self::CenterScale, Self::BoxCox, Self::Pca, Self::SpatialSign];

    pub fn name(self) -> &'static str {
        match self {
            Self::CenterScale => "center_scale",
            Self::BoxCox => "box_cox",
            Self::Pca => "pca",
            Self::SpatialSign => "spatial_sign",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|step| step.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown preprocessing step `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessSpec {
    steps: Vec<PreprocessStep>,
    pca_variance_threshold: f64,
}

impl PreprocessSpec {
    /// Steps are sorted into canonical order; duplicates are rejected.
    pub fn new(mut steps: Vec<PreprocessStep>, pca_variance_threshold: f64) -> Result<Self> {
        steps.sort();
        if steps.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidArgument("duplicate preprocessing step".into()));
        }
        if steps.contains(&PreprocessStep::Pca) && !steps.contains(&PreprocessStep::CenterScale) {
            return Err(Error::InvalidArgument("pca requires center_scale".into()));
        }
        if !(pca_variance_threshold > 0.0 && pca_variance_threshold <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "pca variance threshold {pca_variance_threshold} outside (0, 1]"
            )));
        }
        Ok(Self { steps, pca_variance_threshold })
    }

    pub fn identity() -> Self {
        Self { steps: Vec::new(), pca_variance_threshold: 0.95 }
    }

    pub fn all_steps() -> Self {
        Self { steps: PreprocessStep::ALL.to_vec(), pca_variance_threshold: 0.95 }
    }

    /// Comma-separated step names; `none` or the empty string is the identity.
    pub fn parse(list: &str, pca_variance_threshold: f64) -> Result<Self> {
        let list = list.trim();
        let steps = if list.is_empty() || list == "none" {
            Vec::new()
        } else {
            list.split(',').map(|s| PreprocessStep::parse(s.trim())).collect::<Result<_>>()?
        };
        Self::new(steps, pca_variance_threshold)
    }

    pub fn steps(&self) -> &[PreprocessStep] {
        &self.steps
    }

    pub fn pca_variance_threshold(&self) -> f64 {
        self.pca_variance_threshold
    }

    pub fn has(&self, step: PreprocessStep) -> bool {
        self.steps.contains(&step)
    }

    pub fn describe(&self) -> String {
        if self.steps.is_empty() {
            "none".into()
        } else {
            self.steps.iter().map(|s| s.name()).collect::<Vec<_>>().join(",")
        }
    }
}

impl Default for PreprocessSpec {
    fn default() -> Self {
        Self::all_steps()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CenterScale {
    pub means: Vec<f64>,
    /// 1 for zero-variance features.
    pub scales: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxCoxParams {
    pub lambda: f64,
    /// Smallest training value; inputs below it are clamped to keep the log defined.
    pub floor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pca {
    pub means: Vec<f64>,
    /// Retained eigenvectors as rows, by decreasing eigenvalue.
    pub basis: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
}

impl Pca {
    pub fn retained(&self) -> usize {
        self.basis.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedPreprocess {
    pub input_dim: usize,
    pub center_scale: Option<CenterScale>,
    /// One entry per feature; `None` where the transform was skipped.
    pub box_cox: Option<Vec<Option<BoxCoxParams>>>,
    pub pca: Option<Pca>,
    pub spatial_sign: bool,
}

pub const BOX_COX_GRID: std::ops::RangeInclusive<i32> = -20..=20;

fn box_cox_value(x: f64, lambda: f64) -> f64 {
    if lambda == 0.0 {
        x.ln()
    } else {
        (x.powf(lambda) - 1.0) / lambda
    }
}

/// Profile log-likelihood of a Box-Cox transform with the variance at its MLE.
pub fn box_cox_log_likelihood(values: &[f64], lambda: f64) -> f64 {
    let n = values.len() as f64;
    let transformed: Vec<f64> = values.iter().map(|&x| box_cox_value(x, lambda)).collect();
    let mean = transformed.iter().sum::<f64>() / n;
    let var = transformed.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / n;
    let log_jacobian: f64 = values.iter().map(|x| x.ln()).sum();
    -0.5 * n * var.ln() + (lambda - 1.0) * log_jacobian
}

/// Grid λ maximizing the log-likelihood, or `None` when any value is ≤ 0
/// or the feature is constant. Ties go to the smaller λ.
pub fn fit_box_cox(values: &[f64]) -> Option<BoxCoxParams> {
    if values.iter().any(|&v| v <= 0.0) {
        return None;
    }
    let floor = values.iter().copied().fold(f64::INFINITY, f64::min);
    let mut best: Option<(f64, f64)> = None;
    for i in BOX_COX_GRID {
        let lambda = i as f64 / 10.0;
        let ll = box_cox_log_likelihood(values, lambda);
        if ll.is_finite() && best.is_none_or(|(_, b)| ll > b) {
            best = Some((lambda, ll));
        }
    }
    best.map(|(lambda, _)| BoxCoxParams { lambda, floor })
}

fn column(rows: &[Vec<f64>], j: usize) -> Vec<f64> {
    rows.iter().map(|r| r[j]).collect()
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn fit_pca(rows: &[Vec<f64>], threshold: f64) -> Pca {
    let d = rows[0].len();
    let n = rows.len() as f64;
    let means: Vec<f64> = (0..d).map(|j| column(rows, j).iter().sum::<f64>() / n).collect();
    let mut cov = DMatrix::<f64>::zeros(d, d);
    for r in rows {
        for a in 0..d {
            for b in a..d {
                cov[(a, b)] += (r[a] - means[a]) * (r[b] - means[b]);
            }
        }
    }
    for a in 0..d {
        for b in a..d {
            cov[(a, b)] /= n - 1.0;
            cov[(b, a)] = cov[(a, b)];
        }
    }
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let total: f64 = values.iter().sum();
    let mut retained = d;
    if total > 0.0 {
        let mut cumulative = 0.0;
        for (m, v) in values.iter().enumerate() {
            cumulative += v;
            if cumulative >= threshold * total * (1.0 - 1e-12) {
                retained = m + 1;
                break;
            }
        }
    }
    let basis = order[..retained]
        .iter()
        .map(|&i| {
            let mut v: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
            // Sign convention: largest-magnitude entry positive (first on ties).
            let pivot = v.iter().enumerate().fold(0, |best, (j, x)| if x.abs() > v[best].abs() { j } else { best });
            if v[pivot] < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
            v
        })
        .collect();
    Pca { means, basis, eigenvalues: values[..retained].to_vec() }
}

/// Fit each requested step on the output of the previous one.
pub fn fit_preprocess(rows: &[Vec<f64>], spec: &PreprocessSpec) -> Result<FittedPreprocess> {
    if rows.len() < 2 {
        return Err(Error::InvalidArgument(format!("preprocessing needs at least 2 rows, got {}", rows.len())));
    }
    let d = rows[0].len();
    if let Some(bad) = rows.iter().find(|r| r.len() != d) {
        return Err(Error::DimensionMismatch { expected: d, got: bad.len() });
    }
    let mut fitted = FittedPreprocess {
        input_dim: d,
        center_scale: None,
        box_cox: None,
        pca: None,
        spatial_sign: spec.has(PreprocessStep::SpatialSign),
    };
    let mut current = rows.to_vec();
    if spec.has(PreprocessStep::CenterScale) {
        let (means, scales) = (0..d)
            .map(|j| {
                let (m, sd) = mean_sd(&column(&current, j));
                (m, if sd > 0.0 && sd.is_finite() { sd } else { 1.0 })
            })
            .unzip();
        let cs = CenterScale { means, scales };
        current.iter_mut().for_each(|r| apply_center_scale(&cs, r));
        fitted.center_scale = Some(cs);
    }
    if spec.has(PreprocessStep::BoxCox) {
        let params: Vec<_> = (0..d).map(|j| fit_box_cox(&column(&current, j))).collect();
        current.iter_mut().for_each(|r| apply_box_cox(&params, r));
        fitted.box_cox = Some(params);
    }
    if spec.has(PreprocessStep::Pca) {
        fitted.pca = Some(fit_pca(&current, spec.pca_variance_threshold));
    }
    Ok(fitted)
}

fn apply_center_scale(cs: &CenterScale, row: &mut [f64]) {
    for ((x, m), s) in row.iter_mut().zip(&cs.means).zip(&cs.scales) {
        *x = (*x - m) / s;
    }
}

fn apply_box_cox(params: &[Option<BoxCoxParams>], row: &mut [f64]) {
    for (x, p) in row.iter_mut().zip(params) {
        if let Some(p) = p {
            *x = box_cox_value(x.max(p.floor), p.lambda);
        }
    }
}

impl FittedPreprocess {
    pub fn output_dim(&self) -> usize {
        self.pca.as_ref().map_or(self.input_dim, Pca::retained)
    }

    pub fn apply(&self, row: &[f64]) -> Result<Vec<f64>> {
        if row.len() != self.input_dim {
            return Err(Error::DimensionMismatch { expected: self.input_dim, got: row.len() });
        }
        let mut x = row.to_vec();
        if let Some(cs) = &self.center_scale {
            apply_center_scale(cs, &mut x);
        }
        if let Some(bc) = &self.box_cox {
            apply_box_cox(bc, &mut x);
        }
        if let Some(pca) = &self.pca {
            x = pca
                .basis
                .iter()
                .map(|v| v.iter().zip(&x).zip(&pca.means).map(|((a, b), m)| a * (b - m)).sum())
                .collect();
        }
        if self.spatial_sign {
            let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                x.iter_mut().for_each(|v| *v /= norm);
            }
        }
        Ok(x)
    }

    pub fn apply_all(&self, rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        rows.iter().map(|r| self.apply(r)).collect()
    }
}

/// Stand-alone form of [`FittedPreprocess::apply`].
pub fn apply_preprocess(fitted: &FittedPreprocess, row: &[f64]) -> Result<Vec<f64>> {
    fitted.apply(row)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(steps: &[PreprocessStep], threshold: f64) -> PreprocessSpec {
        PreprocessSpec::new(steps.to_vec(), threshold).unwrap()
    }

    #[test]
    fn spec_validation() {
        use PreprocessStep::*;
        assert_eq!(spec(&[SpatialSign, CenterScale], 0.95).steps(), &[CenterScale, SpatialSign]);
        assert!(PreprocessSpec::new(vec![Pca], 0.95).is_err());
        assert!(PreprocessSpec::new(vec![CenterScale, CenterScale], 0.95).is_err());
        assert!(PreprocessSpec::new(vec![], 0.0).is_err());
        assert_eq!(PreprocessSpec::parse("pca,center_scale", 0.9).unwrap().describe(), "center_scale,pca");
        assert!(PreprocessSpec::parse("whiten", 0.9).is_err());
    }

    #[test]
    fn constant_feature_passes_through() {
        let rows = vec![vec![1.0, 5.0], vec![3.0, 5.0], vec![5.0, 5.0]];
        let f = fit_preprocess(&rows, &spec(&[PreprocessStep::CenterScale], 0.95)).unwrap();
        let cs = f.center_scale.as_ref().unwrap();
        assert_eq!(cs.scales, vec![2.0, 1.0]);
        assert_eq!(f.apply(&[5.0, 5.0]).unwrap(), vec![1.0, 0.0]);
    }

    #[test]
    fn identity_and_spatial_sign() {
        let rows = vec![vec![3.0, 4.0], vec![1.0, 1.0]];
        let f = fit_preprocess(&rows, &PreprocessSpec::identity()).unwrap();
        assert_eq!(f.apply(&[3.0, -7.5]).unwrap(), vec![3.0, -7.5]);
        let f = fit_preprocess(&rows, &spec(&[PreprocessStep::SpatialSign], 0.95)).unwrap();
        let out = f.apply(&[3.0, 4.0]).unwrap();
        assert!((out[0] - 0.6).abs() < 1e-15 && (out[1] - 0.8).abs() < 1e-15);
        assert_eq!(f.apply(&[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
        assert_eq!(f.apply(&[3.0, 4.0]).unwrap(), out);
        assert!(matches!(f.apply(&[1.0]), Err(Error::DimensionMismatch { expected: 2, got: 1 })));
        assert!(fit_preprocess(&rows[..1], &PreprocessSpec::identity()).is_err());
    }

    #[test]
    fn box_cox_skips_non_positive() {
        let rows = vec![vec![0.0, 1.0], vec![2.0, 2.0], vec![3.0, 4.0], vec![4.0, 9.0]];
        let f = fit_preprocess(&rows, &spec(&[PreprocessStep::BoxCox], 0.95)).unwrap();
        let bc = f.box_cox.unwrap();
        assert!(bc[0].is_none());
        assert!(bc[1].is_some());
    }

    #[test]
    fn box_cox_grid_search() {
        // Geometric spacing is symmetric after a log.
        let geometric: Vec<f64> = (0..40).map(|i| (0.1 * i as f64).exp()).collect();
        assert!(fit_box_cox(&geometric).unwrap().lambda.abs() <= 0.2);
        // Brute force over the same grid.
        let data = [0.3, 1.7, 2.2, 4.9, 0.8, 12.0, 3.3];
        let best = (-20..=20)
            .map(|i| i as f64 / 10.0)
            .max_by(|a, b| box_cox_log_likelihood(&data, *a).total_cmp(&box_cox_log_likelihood(&data, *b)))
            .unwrap();
        assert_eq!(fit_box_cox(&data).unwrap().lambda, best);
    }

    #[test]
    fn pca_full_rank_preserves_distances() {
        let rows: Vec<Vec<f64>> = (0..30)
            .map(|i| {
                let t = i as f64;
                vec![(t * 0.7).sin(), (t * 1.3).cos() + 0.2 * t.sin(), (t * 0.37).sin() * 2.0]
            })
            .collect();
        let f = fit_preprocess(&rows, &spec(&[PreprocessStep::CenterScale, PreprocessStep::Pca], 1.0)).unwrap();
        let pca = f.pca.as_ref().unwrap();
        assert_eq!(pca.retained(), 3);
        for (i, a) in pca.basis.iter().enumerate() {
            for (j, b) in pca.basis.iter().enumerate() {
                let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                assert!((dot - if i == j { 1.0 } else { 0.0 }).abs() < 1e-9);
            }
        }
        let cs = f.center_scale.as_ref().unwrap();
        let standardize = |r: &[f64]| -> Vec<f64> {
            r.iter().zip(&cs.means).zip(&cs.scales).map(|((x, m), s)| (x - m) / s).collect()
        };
        let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        for w in rows.windows(2) {
            let before = dist(&standardize(&w[0]), &standardize(&w[1]));
            let after = dist(&f.apply(&w[0]).unwrap(), &f.apply(&w[1]).unwrap());
            assert!((before - after).abs() < 1e-9);
        }
    }

    #[test]
    fn pca_drops_redundant_direction() {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, 2.0 * i as f64 + 1.0]).collect();
        let f = fit_preprocess(&rows, &spec(&[PreprocessStep::CenterScale, PreprocessStep::Pca], 0.95)).unwrap();
        assert_eq!(f.output_dim(), 1);
    }
}
