//! Bivariate Gaussian mixture models: densities, EM fitting and BIC model
//! selection. Only the full (unconstrained) covariance model is supported.

use std::f64::consts::PI;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point2D {
    pub x: f64,
    pub y: f64,
}

impl Point2D {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn distance(&self, other: &Point2D) -> f64 {
        (other.x - self.x).hypot(other.y - self.y)
    }
}

/// The raw input to scoring: an ordered, non-empty set of finite points.
#[derive(Debug, Clone, PartialEq)]
pub struct Scatterplot {
    points: Vec<Point2D>,
    pub id: Option<String>,
}

impl Scatterplot {
    pub fn new(points: Vec<Point2D>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidArgument("scatterplot has no points".into()));
        }
        if let Some(i) = points.iter().position(|p| !p.is_finite()) {
            return Err(Error::InvalidArgument(format!("point {i} is not finite")));
        }
        Ok(Self { points, id: None })
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = Some(id.into());
        self
    }

    pub fn points(&self) -> &[Point2D] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        Self {
            points: self.points.iter().map(|p| Point2D::new(p.x + dx, p.y + dy)).collect(),
            id: self.id.clone(),
        }
    }

    /// Maximum-likelihood (divide by N) mean and covariance of the points.
    pub fn moments(&self) -> (Point2D, Covariance2) {
        let n = self.points.len() as f64;
        let mx = self.points.iter().map(|p| p.x).sum::<f64>() / n;
        let my = self.points.iter().map(|p| p.y).sum::<f64>() / n;
        let (mut xx, mut xy, mut yy) = (0.0, 0.0, 0.0);
        for p in &self.points {
            let (dx, dy) = (p.x - mx, p.y - my);
            xx += dx * dx;
            xy += dx * dy;
            yy += dy * dy;
        }
        (Point2D::new(mx, my), Covariance2::new(xx / n, xy / n, yy / n))
    }
}

/// Symmetric 2x2 covariance matrix `[[xx, xy], [xy, yy]]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Covariance2 {
    pub xx: f64,
    pub xy: f64,
    pub yy: f64,
}

impl Covariance2 {
    pub const IDENTITY: Covariance2 = Covariance2 { xx: 1.0, xy: 0.0, yy: 1.0 };

    pub const fn new(xx: f64, xy: f64, yy: f64) -> Self {
        Self { xx, xy, yy }
    }

    pub const fn diagonal(xx: f64, yy: f64) -> Self {
        Self { xx, xy: 0.0, yy }
    }

    pub fn det(&self) -> f64 {
        self.xx * self.yy - self.xy * self.xy
    }

    pub fn trace(&self) -> f64 {
        self.xx + self.yy
    }

    pub fn is_positive_definite(&self) -> bool {
        self.xx > 0.0 && self.yy > 0.0 && self.det() > 0.0 && self.det().is_finite()
    }

    pub fn with_ridge(&self, ridge: f64) -> Self {
        Self::new(self.xx + ridge, self.xy, self.yy + ridge)
    }

    /// Squared Mahalanobis distance of `d` (already centered).
    fn mahalanobis_sq(&self, dx: f64, dy: f64, det: f64) -> f64 {
        (self.yy * dx * dx - 2.0 * self.xy * dx * dy + self.xx * dy * dy) / det
    }

    /// Lower Cholesky factor `(l11, l21, l22)`.
    pub fn cholesky(&self) -> Result<(f64, f64, f64)> {
        if !self.is_positive_definite() {
            return Err(Error::Domain(format!("covariance {self:?} is not positive definite")));
        }
        let l11 = self.xx.sqrt();
        let l21 = self.xy / l11;
        let l22 = (self.yy - l21 * l21).sqrt();
        Ok((l11, l21, l22))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianComponent {
    pub weight: f64,
    pub mean: Point2D,
    pub cov: Covariance2,
}

/// Log of `det(2 pi cov)^(-1/2) exp(-q/2)`.
fn log_gaussian(point: &Point2D, mean: &Point2D, cov: &Covariance2) -> Result<f64> {
    let det = cov.det();
    if !(det > 0.0) || !(cov.xx > 0.0) {
        return Err(Error::Domain(format!("singular covariance (det = {det})")));
    }
    let q = cov.mahalanobis_sq(point.x - mean.x, point.y - mean.y, det);
    Ok(-0.5 * q - (2.0 * PI).ln() - 0.5 * det.ln())
}

/// Bivariate normal density at `point`.
pub fn gaussian_density(point: Point2D, mean: Point2D, cov: Covariance2) -> Result<f64> {
    log_gaussian(&point, &mean, &cov).map(f64::exp)
}

/// K weighted bivariate Gaussians plus the fit they came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureModel {
    pub components: Vec<GaussianComponent>,
    pub log_likelihood: f64,
    pub n_points: usize,
}

impl MixtureModel {
    /// Build a model from components, checking weights and covariances.
    pub fn from_components(components: Vec<GaussianComponent>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidArgument("mixture needs at least one component".into()));
        }
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!("weights sum to {total}, not 1")));
        }
        for (k, c) in components.iter().enumerate() {
            if !(c.weight > 0.0 && c.weight <= 1.0) {
                return Err(Error::InvalidArgument(format!("component {k} weight {}", c.weight)));
            }
            if !c.cov.is_positive_definite() {
                return Err(Error::Domain(format!("component {k} covariance not positive definite")));
            }
        }
        Ok(Self { components, log_likelihood: f64::NAN, n_points: 0 })
    }

    pub fn k(&self) -> usize {
        self.components.len()
    }

    pub fn log_likelihood_of(&self, points: &[Point2D]) -> Result<f64> {
        let mut logs = vec![0.0; self.k()];
        let mut total = 0.0;
        for p in points {
            for (slot, c) in logs.iter_mut().zip(&self.components) {
                *slot = c.weight.ln() + log_gaussian(p, &c.mean, &c.cov)?;
            }
            total += log_sum_exp(&logs);
        }
        Ok(total)
    }
}

/// `sum_k w_k g_k(x)`.
pub fn mixture_density(model: &MixtureModel, point: Point2D) -> Result<f64> {
    model
        .components
        .iter()
        .map(|c| gaussian_density(point, c.mean, c.cov).map(|g| c.weight * g))
        .sum()
}

/// MAP component index; ties go to the lowest index.
pub fn map_assign(model: &MixtureModel, point: Point2D) -> usize {
    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    for (k, c) in model.components.iter().enumerate() {
        let score = log_gaussian(&point, &c.mean, &c.cov)
            .map(|l| l + c.weight.ln())
            .unwrap_or(f64::NEG_INFINITY);
        if score > best_score {
            best = k;
            best_score = score;
        }
    }
    best
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BicPenalty {
    /// `K log N`, the criterion as usually written for this pipeline.
    ComponentCount,
    /// `(6K - 1) log N`: K-1 weights, 2K mean coordinates, 3K covariance entries.
    #[default]
    FreeParameterCount,
}

impl BicPenalty {
    pub fn parameter_count(self, k: usize) -> f64 {
        match self {
            BicPenalty::ComponentCount => k as f64,
            BicPenalty::FreeParameterCount => (6 * k - 1) as f64,
        }
    }
}

/// `2 L - penalty(K) log N`; larger is better.
pub fn bic(log_likelihood: f64, k: usize, n: usize, penalty: BicPenalty) -> f64 {
    2.0 * log_likelihood - penalty.parameter_count(k) * (n as f64).ln()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub k_max: usize,
    /// Stop when the relative log-likelihood improvement falls below this.
    pub em_tolerance: f64,
    pub max_iterations: usize,
    pub n_restarts: usize,
    /// Ridge added to covariance diagonals, as a fraction of the data's
    /// mean per-axis variance.
    pub regularization: f64,
    pub seed: u64,
    pub bic_penalty: BicPenalty,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            k_max: 10,
            em_tolerance: 1e-8,
            max_iterations: 500,
            n_restarts: 5,
            regularization: 1e-6,
            seed: 0,
            bic_penalty: BicPenalty::FreeParameterCount,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_max < 1 {
            return Err(Error::InvalidArgument("k_max must be >= 1".into()));
        }
        if !(self.em_tolerance > 0.0) {
            return Err(Error::InvalidArgument("em_tolerance must be > 0".into()));
        }
        if self.max_iterations < 1 || self.n_restarts < 1 {
            return Err(Error::InvalidArgument(
                "max_iterations and n_restarts must be >= 1".into(),
            ));
        }
        if !(self.regularization >= 0.0) || !self.regularization.is_finite() {
            return Err(Error::InvalidArgument("regularization must be finite and >= 0".into()));
        }
        Ok(())
    }
}

/// A K value skipped during model selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitWarning {
    pub k: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: MixtureModel,
    pub bic: f64,
    pub k_star: usize,
    pub per_k_bic: Vec<(usize, f64)>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<FitWarning>,
}

/// Log-likelihood after every E-step of one EM restart; index 0 is the
/// initialization.
#[derive(Debug, Clone, PartialEq)]
pub struct EmTrace {
    pub restart: usize,
    pub log_likelihoods: Vec<f64>,
    pub converged: bool,
}

/// Fit a K-component mixture; best log-likelihood over restarts wins.
pub fn fit_em(scatterplot: &Scatterplot, k: usize, config: &FitConfig) -> Result<MixtureModel> {
    fit_em_traced(scatterplot, k, config).map(|(model, _)| model)
}

/// [`fit_em`] that also returns the per-restart log-likelihood traces.
/// Failed restarts have no trace.
pub fn fit_em_traced(
    scatterplot: &Scatterplot,
    k: usize,
    config: &FitConfig,
) -> Result<(MixtureModel, Vec<EmTrace>)> {
    config.validate()?;
    let points = scatterplot.points();
    let n = points.len();
    if k < 1 {
        return Err(Error::InvalidArgument("k must be >= 1".into()));
    }
    if n < k {
        return Err(Error::InvalidArgument(format!("{n} points cannot support {k} components")));
    }

    let (_, pooled) = scatterplot.moments();
    let scale = 0.5 * pooled.trace();
    let ridge = config.regularization * if scale > 0.0 { scale } else { 1.0 };
    let init_cov = pooled.with_ridge(ridge);
    if !init_cov.is_positive_definite() {
        return Err(Error::DegenerateCovariance(
            "pooled covariance is singular; increase regularization".into(),
        ));
    }

    let mut best: Option<MixtureModel> = None;
    let mut traces = Vec::with_capacity(config.n_restarts);
    let mut last_err = None;
    for restart in 0..config.n_restarts {
        let mut rng = seed::rng(config.seed, &[k as u64, restart as u64]);
        let means = kmeans_pp_seeds(points, k, &mut rng);
        let init = means
            .into_iter()
            .map(|mean| GaussianComponent { weight: 1.0 / k as f64, mean, cov: init_cov })
            .collect();
        match run_em(points, init, ridge, config) {
            Ok((model, lls, converged)) => {
                traces.push(EmTrace { restart, log_likelihoods: lls, converged });
                if best.as_ref().is_none_or(|b| model.log_likelihood > b.log_likelihood) {
                    best = Some(model);
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    match best {
        Some(model) => Ok((model, traces)),
        None => Err(last_err.unwrap_or_else(|| Error::Numeric("no EM restart succeeded".into()))),
    }
}

/// k-means++ seeding: first center uniform, then proportional to squared
/// distance to the nearest chosen center.
fn kmeans_pp_seeds(points: &[Point2D], k: usize, rng: &mut impl Rng) -> Vec<Point2D> {
    let mut centers = Vec::with_capacity(k);
    centers.push(points[rng.random_range(0..points.len())]);
    let mut d2: Vec<f64> = points
        .iter()
        .map(|p| {
            let c = centers[0];
            (p.x - c.x).powi(2) + (p.y - c.y).powi(2)
        })
        .collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let idx = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = points.len() - 1;
            for (i, w) in d2.iter().enumerate() {
                if target < *w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            chosen
        } else {
            rng.random_range(0..points.len())
        };
        let c = points[idx];
        centers.push(c);
        for (slot, p) in d2.iter_mut().zip(points) {
            *slot = slot.min((p.x - c.x).powi(2) + (p.y - c.y).powi(2));
        }
    }
    centers
}

/// E-step: fills `resp` (N x K, row-major) and returns the log-likelihood.
fn e_step(points: &[Point2D], comps: &[GaussianComponent], resp: &mut [f64]) -> Result<f64> {
    let k = comps.len();
    // Per component: (log normalizer, inverse covariance xx, xy, yy).
    let mut consts = Vec::with_capacity(k);
    for c in comps {
        let det = c.cov.det();
        if !(det > 0.0) {
            return Err(Error::DegenerateCovariance(format!("component covariance det = {det}")));
        }
        let lognorm = c.weight.ln() - (2.0 * PI).ln() - 0.5 * det.ln();
        consts.push((lognorm, c.cov.yy / det, -c.cov.xy / det, c.cov.xx / det));
    }
    let mut total = 0.0;
    for (i, p) in points.iter().enumerate() {
        let row = &mut resp[i * k..(i + 1) * k];
        let mut max = f64::NEG_INFINITY;
        for ((slot, c), &(cst, ixx, ixy, iyy)) in row.iter_mut().zip(comps).zip(&consts) {
            let (dx, dy) = (p.x - c.mean.x, p.y - c.mean.y);
            *slot = cst - 0.5 * (ixx * dx * dx + 2.0 * ixy * dx * dy + iyy * dy * dy);
            max = max.max(*slot);
        }
        let mut sum = 0.0;
        for slot in row.iter_mut() {
            *slot = (*slot - max).exp();
            sum += *slot;
        }
        for slot in row.iter_mut() {
            *slot /= sum;
        }
        total += max + sum.ln();
    }
    if !total.is_finite() {
        return Err(Error::Numeric("log-likelihood is not finite".into()));
    }
    Ok(total)
}

fn m_step(
    points: &[Point2D],
    resp: &[f64],
    k: usize,
    ridge: f64,
) -> Result<Vec<GaussianComponent>> {
    let n = points.len();
    let mut nk = vec![0.0; k];
    let mut sx = vec![0.0; k];
    let mut sy = vec![0.0; k];
    for (p, row) in points.iter().zip(resp.chunks_exact(k)) {
        for j in 0..k {
            nk[j] += row[j];
            sx[j] += row[j] * p.x;
            sy[j] += row[j] * p.y;
        }
    }
    let mut means = Vec::with_capacity(k);
    for j in 0..k {
        if !(nk[j] > 1e-10 * n as f64) {
            return Err(Error::Numeric(format!("component {j} lost all responsibility")));
        }
        means.push(Point2D::new(sx[j] / nk[j], sy[j] / nk[j]));
    }
    let mut sxx = vec![0.0; k];
    let mut sxy = vec![0.0; k];
    let mut syy = vec![0.0; k];
    for (p, row) in points.iter().zip(resp.chunks_exact(k)) {
        for j in 0..k {
            let (dx, dy) = (p.x - means[j].x, p.y - means[j].y);
            sxx[j] += row[j] * dx * dx;
            sxy[j] += row[j] * dx * dy;
            syy[j] += row[j] * dy * dy;
        }
    }
    let mut comps = Vec::with_capacity(k);
    for (j, mean) in means.into_iter().enumerate() {
        let cov = Covariance2::new(sxx[j] / nk[j], sxy[j] / nk[j], syy[j] / nk[j]).with_ridge(ridge);
        if !cov.is_positive_definite() {
            return Err(Error::DegenerateCovariance(format!(
                "component {j} collapsed; increase regularization"
            )));
        }
        comps.push(GaussianComponent { weight: nk[j] / n as f64, mean, cov });
    }
    // Renormalize so the weights sum to one to rounding.
    let total: f64 = comps.iter().map(|c| c.weight).sum();
    for c in &mut comps {
        c.weight /= total;
    }
    Ok(comps)
}

fn run_em(
    points: &[Point2D],
    mut comps: Vec<GaussianComponent>,
    ridge: f64,
    config: &FitConfig,
) -> Result<(MixtureModel, Vec<f64>, bool)> {
    let k = comps.len();
    let mut resp = vec![0.0; points.len() * k];
    let mut ll = e_step(points, &comps, &mut resp)?;
    let mut trace = vec![ll];
    let mut converged = false;
    for _ in 0..config.max_iterations {
        let next = m_step(points, &resp, k, ridge)?;
        let next_ll = e_step(points, &next, &mut resp)?;
        // Accepted iterates never lower the likelihood; the ridged M-step can.
        if next_ll < ll {
            converged = true;
            break;
        }
        comps = next;
        trace.push(next_ll);
        let improvement = next_ll - ll;
        ll = next_ll;
        if improvement < config.em_tolerance * ll.abs() {
            converged = true;
            break;
        }
    }
    let model = MixtureModel { components: comps, log_likelihood: ll, n_points: points.len() };
    Ok((model, trace, converged))
}

/// Fit K = 1..=k_max and keep the K with the largest BIC.
///
/// K values that cannot be fitted are skipped and reported in
/// [`FitResult::warnings`]; an error is returned only when every K fails.
pub fn select_model(scatterplot: &Scatterplot, config: &FitConfig) -> Result<FitResult> {
    config.validate()?;
    let n = scatterplot.len();
    if n < 2 {
        return Err(Error::InvalidArgument("model selection needs at least 2 points".into()));
    }
    let mut per_k_bic = Vec::new();
    let mut warnings = Vec::new();
    let mut best: Option<(MixtureModel, f64)> = None;
    let mut first_err = None;
    let fits: Vec<(usize, Option<Result<MixtureModel>>)> = (1..=config.k_max)
        .into_par_iter()
        .map(|k| (k, (k <= n).then(|| fit_em(scatterplot, k, config))))
        .collect();
    for (k, fit) in fits {
        let Some(fit) = fit else {
            warnings.push(FitWarning { k, message: format!("skipped: only {n} points") });
            continue;
        };
        match fit {
            Ok(model) => {
                let score = bic(model.log_likelihood, k, n, config.bic_penalty);
                per_k_bic.push((k, score));
                if best.as_ref().is_none_or(|(_, b)| score > *b) {
                    best = Some((model, score));
                }
            }
            Err(e) => {
                warnings.push(FitWarning { k, message: e.to_string() });
                first_err.get_or_insert(e);
            }
        }
    }
    match best {
        Some((model, bic)) => Ok(FitResult {
            k_star: model.k(),
            model,
            bic,
            per_k_bic,
            warnings,
        }),
        None => Err(first_err.unwrap_or_else(|| Error::Numeric("no K could be fitted".into()))),
    }
}
