//! Gaussian kernel density estimation over feature space and the
//! likelihood-ratio weights used for importance-weighted calibration.
//!
//! The estimator averages kernels, `p(x) = (1/n) Σ K(x - x_i, b)`, so that it
//! integrates to one regardless of sample size. Features are expected to be
//! standardized with a [`Standardizer`] fitted on the calibration set before
//! any model is fitted.

use std::f64::consts::PI;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Floor applied to the denominator density of a likelihood ratio.
pub const RATIO_FLOOR: f64 = 1e-12;

/// Number of folds used by [`select_bandwidth`].
pub const CV_FOLDS: usize = 5;

/// Per-dimension affine standardization (zero mean, unit variance).
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    mean: Vec<f64>,
    scale: Vec<f64>,
}

impl Standardizer {
    /// Fits mean and population standard deviation per column. Constant
    /// columns keep a unit scale.
    pub fn fit(x: ArrayView2<'_, f64>) -> Result<Self> {
        if x.nrows() == 0 || x.ncols() == 0 {
            return Err(Error::domain("cannot standardize an empty matrix"));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("feature value".into()));
        }
        let n = x.nrows() as f64;
        let mean: Vec<f64> = x.axis_iter(Axis(1)).map(|c| c.sum() / n).collect();
        let scale = x
            .axis_iter(Axis(1))
            .zip(&mean)
            .map(|(c, m)| {
                let var = c.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
                if var > 0.0 {
                    var.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self { mean, scale })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn scale(&self) -> &[f64] {
        &self.scale
    }

    pub fn transform(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.dim() {
            return Err(Error::domain(format!(
                "standardizer fitted on {} columns, got {}",
                self.dim(),
                x.ncols()
            )));
        }
        let mut out = x.to_owned();
        for mut row in out.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (*v - self.mean[j]) / self.scale[j];
            }
        }
        Ok(out)
    }
}

/// Gaussian-kernel density estimate over `dim`-dimensional points.
#[derive(Debug, Clone, PartialEq)]
pub struct KdeModel {
    samples: Array2<f64>,
    bandwidth: f64,
}

impl KdeModel {
    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn dim(&self) -> usize {
        self.samples.ncols()
    }

    pub fn len(&self) -> usize {
        self.samples.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.nrows() == 0
    }

    pub fn samples(&self) -> ArrayView2<'_, f64> {
        self.samples.view()
    }

    fn log_norm(&self) -> f64 {
        -(self.dim() as f64) * ((2.0 * PI).sqrt() * self.bandwidth).ln()
            - (self.len() as f64).ln()
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::domain(format!(
                "density of a {}-dimensional point under a {}-dimensional model",
                x.len(),
                self.dim()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("evaluation point".into()));
        }
        Ok(())
    }

    /// Density at `x`.
    pub fn density(&self, x: &[f64]) -> Result<f64> {
        self.check_point(x)?;
        let inv = 1.0 / (2.0 * self.bandwidth * self.bandwidth);
        let sum: f64 = self
            .samples
            .rows()
            .into_iter()
            .map(|row| (-sq_dist(row, x) * inv).exp())
            .sum();
        Ok(sum * self.log_norm().exp())
    }

    /// Log density at `x`, computed with a log-sum-exp so that far points do
    /// not underflow to `-inf`.
    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        self.check_point(x)?;
        let inv = 1.0 / (2.0 * self.bandwidth * self.bandwidth);
        let exps: Vec<f64> = self
            .samples
            .rows()
            .into_iter()
            .map(|row| -sq_dist(row, x) * inv)
            .collect();
        Ok(log_sum_exp(&exps) + self.log_norm())
    }

    /// Densities at every row of `points`.
    pub fn density_rows(&self, points: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        points
            .rows()
            .into_iter()
            .map(|row| self.density(&row.to_vec()))
            .collect()
    }
}

fn sq_dist(row: ArrayView1<'_, f64>, x: &[f64]) -> f64 {
    row.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum()
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Fits a kernel density estimate with the given bandwidth.
pub fn kde_fit(samples: ArrayView2<'_, f64>, bandwidth: f64) -> Result<KdeModel> {
    if samples.nrows() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: samples.nrows(),
        });
    }
    if samples.ncols() == 0 {
        return Err(Error::domain("samples need at least one dimension"));
    }
    if !(bandwidth > 0.0 && bandwidth.is_finite()) {
        return Err(Error::domain(format!("bandwidth {bandwidth} must be positive")));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("kde sample".into()));
    }
    Ok(KdeModel {
        samples: samples.to_owned(),
        bandwidth,
    })
}

/// Candidate bandwidths for cross-validated selection.
#[derive(Debug, Clone, PartialEq)]
pub struct BandwidthGrid {
    candidates: Vec<f64>,
}

impl BandwidthGrid {
    pub fn new(candidates: Vec<f64>) -> Result<Self> {
        if candidates.is_empty() {
            return Err(Error::domain("bandwidth grid is empty"));
        }
        if candidates.iter().any(|c| !(*c > 0.0 && c.is_finite())) {
            return Err(Error::domain("bandwidth candidates must be positive"));
        }
        if candidates.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::domain("bandwidth candidates must ascend"));
        }
        Ok(Self { candidates })
    }

    /// `count` values evenly spaced in log10 between `10^lo` and `10^hi`.
    pub fn log_spaced(lo: f64, hi: f64, count: usize) -> Result<Self> {
        if count == 0 {
            return Err(Error::domain("bandwidth grid needs at least one value"));
        }
        if count == 1 {
            return Self::new(vec![10f64.powf(lo)]);
        }
        let step = (hi - lo) / (count - 1) as f64;
        Self::new((0..count).map(|i| 10f64.powf(lo + step * i as f64)).collect())
    }

    pub fn candidates(&self) -> &[f64] {
        &self.candidates
    }
}

impl Default for BandwidthGrid {
    /// Twenty log-spaced values between `10^-2` and `10^0.5`.
    fn default() -> Self {
        Self::log_spaced(-2.0, 0.5, 20).expect("static grid is valid")
    }
}

/// Mean held-out log-likelihood of each grid candidate under `CV_FOLDS`-fold
/// cross-validation with a seeded fold assignment.
pub fn cv_log_likelihoods(
    samples: ArrayView2<'_, f64>,
    grid: &BandwidthGrid,
    seed: u64,
) -> Result<Vec<f64>> {
    let n = samples.nrows();
    if n < 2 * CV_FOLDS {
        return Err(Error::InsufficientData {
            needed: 2 * CV_FOLDS,
            got: n,
        });
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("kde sample".into()));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut fold_of = vec![0usize; n];
    for (pos, &i) in perm.iter().enumerate() {
        fold_of[i] = pos % CV_FOLDS;
    }
    let d = samples.ncols() as f64;

    // squared distances held-out × train, per fold, shared by all candidates
    let folds: Vec<(Vec<Vec<f64>>, usize)> = (0..CV_FOLDS)
        .map(|f| {
            let train: Vec<usize> = (0..n).filter(|&i| fold_of[i] != f).collect();
            let dists = (0..n)
                .filter(|&i| fold_of[i] == f)
                .map(|i| {
                    let xi = samples.row(i);
                    train
                        .iter()
                        .map(|&j| {
                            xi.iter()
                                .zip(samples.row(j))
                                .map(|(a, b)| (a - b) * (a - b))
                                .sum()
                        })
                        .collect()
                })
                .collect();
            (dists, train.len())
        })
        .collect();

    Ok(grid
        .candidates()
        .par_iter()
        .map(|&b| {
            let inv = 1.0 / (2.0 * b * b);
            let mut total = 0.0;
            for (dists, n_train) in &folds {
                let norm = -d * ((2.0 * PI).sqrt() * b).ln() - (*n_train as f64).ln();
                let mut exps = Vec::with_capacity(*n_train);
                let mut fold_ll = 0.0;
                for row in dists {
                    exps.clear();
                    exps.extend(row.iter().map(|s| -s * inv));
                    fold_ll += log_sum_exp(&exps) + norm;
                }
                total += fold_ll / dists.len() as f64;
            }
            total / folds.len() as f64
        })
        .collect())
}

/// Picks the grid candidate with the best cross-validated log-likelihood;
/// ties go to the larger bandwidth.
pub fn select_bandwidth(
    samples: ArrayView2<'_, f64>,
    grid: &BandwidthGrid,
    seed: u64,
) -> Result<f64> {
    if samples.nrows() < 10 {
        return Err(Error::InsufficientData {
            needed: 10,
            got: samples.nrows(),
        });
    }
    if grid.candidates().len() == 1 {
        return Ok(grid.candidates()[0]);
    }
    let scores = cv_log_likelihoods(samples, grid, seed)?;
    let mut best: Option<(f64, f64)> = None;
    for (&b, &s) in grid.candidates().iter().zip(&scores) {
        if !s.is_finite() {
            continue;
        }
        match best {
            Some((_, bs)) if s < bs => {}
            _ => best = Some((b, s)),
        }
    }
    best.map(|(b, _)| b).ok_or_else(|| {
        Error::Selection("every bandwidth candidate has a non-finite likelihood".into())
    })
}

/// Cross-validated bandwidth selection followed by a fit.
pub fn fit_cv(samples: ArrayView2<'_, f64>, grid: &BandwidthGrid, seed: u64) -> Result<KdeModel> {
    let b = select_bandwidth(samples, grid, seed)?;
    kde_fit(samples, b)
}

/// Normalizes nonnegative raw weights to sum to one.
pub fn normalize_weights(raw: &[f64]) -> Result<Vec<f64>> {
    if raw.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::DegenerateWeights("non-finite or negative raw weight".into()));
    }
    let total: f64 = raw.iter().sum();
    if total.is_nan() || total <= 0.0 {
        return Err(Error::DegenerateWeights("all raw likelihood ratios are zero".into()));
    }
    Ok(raw.iter().map(|w| w / total).collect())
}

/// Normalized likelihood ratios `target(x_i) / max(cal(x_i), RATIO_FLOOR)`
/// over the calibration features.
pub fn likelihood_ratio_weights(
    cal_features: ArrayView2<'_, f64>,
    target_kde: &KdeModel,
    cal_kde: &KdeModel,
) -> Result<Vec<f64>> {
    if target_kde.dim() != cal_features.ncols() || cal_kde.dim() != cal_features.ncols() {
        return Err(Error::domain("density models and features disagree on dimension"));
    }
    let raw: Vec<f64> = cal_features
        .rows()
        .into_iter()
        .map(|row| {
            let x = row.to_vec();
            Ok(target_kde.density(&x)? / cal_kde.density(&x)?.max(RATIO_FLOOR))
        })
        .collect::<Result<_>>()?;
    normalize_weights(&raw)
}
