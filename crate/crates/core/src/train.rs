//! Differentiable 1D Wasserstein distance and the regularized training loop:
//! summed per-source MSE plus `β Σ_i W(weighted calibration scores, source i
//! scores)`, optimized full-batch with Adam.

use rayon::prelude::*;

use crate::datagen::{derive_seed, DatasetBundle, Samples};
use crate::density::{self, BandwidthGrid, Standardizer};
use crate::dist::{quantile_coupling, EmpiricalDist};
use crate::error::{Error, Result};
use crate::model::{mse_loss, GradBuffer, MlpModel, OptimizerState};

/// Distance and per-point subgradients of `W1(a, b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WassersteinGradResult {
    pub distance: f64,
    /// Indexed like `a.values()`.
    pub grad_a: Vec<f64>,
    /// Indexed like `b.values()`.
    pub grad_b: Vec<f64>,
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `W1` through the quantile coupling together with its subgradient with
/// respect to every support value. Each coupled cell of mass `m` moving
/// `v_a` to `v_b` contributes `m · sign(v_a - v_b)` to `v_a` and the negation
/// to `v_b`; ties contribute nothing.
pub fn wasserstein1_grad(a: &EmpiricalDist, b: &EmpiricalDist) -> WassersteinGradResult {
    let mut grad_a = vec![0.0; a.len()];
    let mut grad_b = vec![0.0; b.len()];
    let mut distance = 0.0;
    for cell in quantile_coupling(a, b) {
        let diff = a.values()[cell.a_idx] - b.values()[cell.b_idx];
        distance += cell.mass * diff.abs();
        let s = cell.mass * sign(diff);
        grad_a[cell.a_idx] += s;
        grad_b[cell.b_idx] -= s;
    }
    WassersteinGradResult {
        distance,
        grad_a,
        grad_b,
    }
}

/// Calibration scores carrying the given normalized weights.
pub fn build_weighted_cal_dist(cal_scores: &[f64], cal_weights: &[f64]) -> Result<EmpiricalDist> {
    if cal_scores.len() != cal_weights.len() {
        return Err(Error::domain(format!(
            "{} calibration scores but {} weights",
            cal_scores.len(),
            cal_weights.len()
        )));
    }
    EmpiricalDist::new(cal_scores.to_vec(), cal_weights.to_vec())
}

/// Which objective is trained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Regularizer against likelihood-ratio weighted calibration scores.
    Wrcp,
    /// Regularizer against the unweighted calibration scores.
    WrcpUw,
    /// Summed per-source MSE only.
    Erm,
}

impl Variant {
    pub fn name(&self) -> &'static str {
        match self {
            Variant::Wrcp => "wrcp",
            Variant::WrcpUw => "wrcp_uw",
            Variant::Erm => "erm",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "wrcp" => Some(Variant::Wrcp),
            "wrcp_uw" => Some(Variant::WrcpUw),
            "erm" => Some(Variant::Erm),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub beta: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub variant: Variant,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            beta: 1.0,
            epochs: 200,
            learning_rate: 1e-3,
            seed: 0,
            variant: Variant::Wrcp,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::domain(format!("beta = {} must be finite and >= 0", self.beta)));
        }
        if self.epochs == 0 {
            return Err(Error::domain("epochs must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::domain("learning rate must be positive"));
        }
        Ok(())
    }

    /// Whether the regularizer contributes to the gradient.
    pub fn regularized(&self) -> bool {
        self.variant != Variant::Erm && self.beta > 0.0
    }
}

/// Loss decomposition at one parameter point.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub total_loss: f64,
    pub mse_sum: f64,
    pub wass_sum: f64,
    pub per_source_w: Vec<f64>,
}

/// Per-source calibration weights for the regularizer.
///
/// Features are standardized with calibration statistics; `P̂_X` is fitted
/// on the calibration features and `D̂_X^(i)` on source `i`'s training
/// features, each with a cross-validated bandwidth.
pub fn source_calibration_weights(
    sources: &[Samples],
    calibration: &Samples,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    let std = Standardizer::fit(calibration.x.view())?;
    let cal_z = std.transform(calibration.x.view())?;
    let grid = BandwidthGrid::default();
    let cal_kde = density::fit_cv(cal_z.view(), &grid, derive_seed(seed, &[10]))?;
    sources
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let z = std.transform(s.x.view())?;
            let kde = density::fit_cv(z.view(), &grid, derive_seed(seed, &[11, i as u64]))?;
            density::likelihood_ratio_weights(cal_z.view(), &kde, &cal_kde)
        })
        .collect()
}

/// Fixed inputs of the objective: data, per-source calibration weights and
/// the configuration.
#[derive(Debug, Clone)]
pub struct Objective<'a> {
    sources: &'a [Samples],
    calibration: &'a Samples,
    weights: Vec<Vec<f64>>,
    beta: f64,
    variant: Variant,
}

impl<'a> Objective<'a> {
    /// Builds the objective for `cfg.variant`: KDE weights for `Wrcp`,
    /// uniform weights for `WrcpUw`, none for `Erm`.
    pub fn new(sources: &'a [Samples], calibration: &'a Samples, cfg: &TrainConfig) -> Result<Self> {
        let n = calibration.len();
        let weights = match cfg.variant {
            Variant::Wrcp => source_calibration_weights(sources, calibration, cfg.seed)?,
            Variant::WrcpUw => vec![vec![1.0 / n as f64; n]; sources.len()],
            Variant::Erm => Vec::new(),
        };
        Self::with_weights(sources, calibration, weights, cfg)
    }

    /// Uses caller-supplied per-source calibration weights (ignored for `Erm`).
    pub fn with_weights(
        sources: &'a [Samples],
        calibration: &'a Samples,
        weights: Vec<Vec<f64>>,
        cfg: &TrainConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        if sources.is_empty() {
            return Err(Error::domain("training needs at least one source"));
        }
        if sources.iter().any(|s| s.is_empty()) {
            return Err(Error::domain("every source needs at least one training row"));
        }
        if calibration.is_empty() {
            return Err(Error::domain("training needs a calibration set"));
        }
        if cfg.variant != Variant::Erm {
            if weights.len() != sources.len() {
                return Err(Error::domain("one calibration weight vector per source is required"));
            }
            for w in &weights {
                if w.len() != calibration.len() {
                    return Err(Error::domain("calibration weights do not match calibration size"));
                }
                density::normalize_weights(w)?;
            }
        }
        Ok(Self {
            sources,
            calibration,
            weights,
            beta: cfg.beta,
            variant: cfg.variant,
        })
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    fn regularized(&self) -> bool {
        self.variant != Variant::Erm && self.beta > 0.0
    }

    /// Loss decomposition and its gradient at `model`. With the regularizer
    /// inactive the gradient is exactly the summed MSE gradient; Wasserstein
    /// terms are still reported for `Wrcp` and `WrcpUw`.
    pub fn evaluate(&self, model: &MlpModel) -> Result<(EpochMetrics, GradBuffer)> {
        let per_source: Vec<(Vec<f64>, f64, Vec<f64>)> = self
            .sources
            .par_iter()
            .map(|s| {
                let pred = model.predict_rows(s.x.view())?;
                let (loss, grad) = mse_loss(&pred, &s.y)?;
                Ok((pred, loss, grad))
            })
            .collect::<Result<_>>()?;
        let mse_sum: f64 = per_source.iter().map(|p| p.1).sum();
        let mut upstream: Vec<Vec<f64>> = per_source.iter().map(|p| p.2.clone()).collect();

        let mut per_source_w = vec![0.0; self.sources.len()];
        let mut cal_upstream = None;
        if self.variant != Variant::Erm {
            let cal_pred = model.predict_rows(self.calibration.x.view())?;
            let cal_res: Vec<f64> = cal_pred
                .iter()
                .zip(&self.calibration.y)
                .map(|(p, y)| p - y)
                .collect();
            let cal_scores: Vec<f64> = cal_res.iter().map(|r| r.abs()).collect();
            let terms: Vec<WassersteinGradResult> = self
                .sources
                .par_iter()
                .zip(&per_source)
                .zip(&self.weights)
                .map(|((s, p), w)| {
                    let a = build_weighted_cal_dist(&cal_scores, w)?;
                    let scores: Vec<f64> = p.0.iter().zip(&s.y).map(|(h, y)| (h - y).abs()).collect();
                    let b = EmpiricalDist::uniform(scores)?;
                    Ok(wasserstein1_grad(&a, &b))
                })
                .collect::<Result<_>>()?;
            for (i, t) in terms.iter().enumerate() {
                per_source_w[i] = t.distance;
            }
            if self.regularized() {
                let mut cu = vec![0.0; cal_res.len()];
                for (i, t) in terms.iter().enumerate() {
                    for (c, (g, r)) in cu.iter_mut().zip(t.grad_a.iter().zip(&cal_res)) {
                        *c += self.beta * g * sign(*r);
                    }
                    let s = &self.sources[i];
                    for (j, u) in upstream[i].iter_mut().enumerate() {
                        *u += self.beta * t.grad_b[j] * sign(per_source[i].0[j] - s.y[j]);
                    }
                }
                cal_upstream = Some(cu);
            }
        }
        let wass_sum: f64 = per_source_w.iter().sum();
        let total_loss = mse_sum + self.beta * wass_sum;

        let mut grads = GradBuffer::zeros_like(model);
        let parts: Vec<GradBuffer> = self
            .sources
            .par_iter()
            .zip(&upstream)
            .map(|(s, u)| model.backward(s.x.view(), u))
            .collect::<Result<_>>()?;
        for g in &parts {
            grads.add_assign(g)?;
        }
        if let Some(cu) = cal_upstream {
            grads.add_assign(&model.backward(self.calibration.x.view(), &cu)?)?;
        }
        let metrics = EpochMetrics {
            epoch: 0,
            total_loss,
            mse_sum,
            wass_sum: if self.variant == Variant::Erm { 0.0 } else { wass_sum },
            per_source_w,
        };
        Ok((metrics, grads))
    }

    /// Objective value only.
    pub fn loss(&self, model: &MlpModel) -> Result<f64> {
        Ok(self.evaluate(model)?.0.total_loss)
    }
}

/// Result of a training run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: MlpModel,
    /// Loss decomposition before each update, epochs numbered from 1.
    pub metrics: Vec<EpochMetrics>,
}

/// Runs `cfg.epochs` full-batch Adam steps on the objective from a freshly
/// initialized model seeded with `cfg.seed`.
pub fn train_objective(objective: &Objective<'_>, dim: usize, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut model = MlpModel::new(dim, cfg.seed)?;
    let mut opt = OptimizerState::new(&model, cfg.learning_rate);
    let mut metrics = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let (mut m, grads) = objective.evaluate(&model)?;
        if !m.total_loss.is_finite() || !grads.is_finite() {
            return Err(Error::NonFinite(format!(
                "training diverged at epoch {epoch}; last finite epoch {}",
                epoch - 1
            )));
        }
        m.epoch = epoch;
        metrics.push(m);
        opt.step(&mut model, &grads)?;
    }
    Ok(TrainOutcome { model, metrics })
}

/// Trains the variant selected by `cfg` on the bundle's sources, using its
/// calibration set for the regularizer.
pub fn train(bundle: &DatasetBundle, cfg: &TrainConfig) -> Result<TrainOutcome> {
    let objective = Objective::new(&bundle.sources, &bundle.calibration, cfg)?;
    train_objective(&objective, bundle.dim(), cfg)
}

pub fn wrcp_train(bundle: &DatasetBundle, cfg: &TrainConfig) -> Result<TrainOutcome> {
    train(bundle, &TrainConfig { variant: Variant::Wrcp, ..*cfg })
}

pub fn wrcp_uw_train(bundle: &DatasetBundle, cfg: &TrainConfig) -> Result<TrainOutcome> {
    train(bundle, &TrainConfig { variant: Variant::WrcpUw, ..*cfg })
}

pub fn erm_train(bundle: &DatasetBundle, cfg: &TrainConfig) -> Result<TrainOutcome> {
    train(bundle, &TrainConfig { variant: Variant::Erm, ..*cfg })
}

/// Weighted calibration scores and per-source scores under `model`, as used
/// by the regularizer.
pub fn score_distributions(
    model: &MlpModel,
    sources: &[Samples],
    calibration: &Samples,
    weights: &[Vec<f64>],
) -> Result<Vec<(EmpiricalDist, EmpiricalDist)>> {
    let cal = crate::conformal::residual_scores(model, calibration.x.view(), &calibration.y)?;
    sources
        .iter()
        .zip(weights)
        .map(|(s, w)| {
            let scores = crate::conformal::residual_scores(model, s.x.view(), &s.y)?;
            Ok((build_weighted_cal_dist(&cal, w)?, EmpiricalDist::uniform(scores)?))
        })
        .collect()
}

/// Header of the per-epoch metrics CSV for `k` sources.
pub fn metrics_header(k: usize) -> String {
    let mut cols = vec!["epoch", "total_loss", "mse_sum", "wass_sum"]
        .into_iter()
        .map(String::from)
        .collect::<Vec<_>>();
    cols.extend((0..k).map(|i| format!("w_{i}")));
    cols.join(",")
}

/// One metrics CSV row, formatted with `fmt`.
pub fn metrics_row(m: &EpochMetrics, fmt: impl Fn(f64) -> String) -> String {
    let mut cols = vec![m.epoch.to_string(), fmt(m.total_loss), fmt(m.mse_sum), fmt(m.wass_sum)];
    cols.extend(m.per_source_w.iter().map(|&w| fmt(w)));
    cols.join(",")
}
