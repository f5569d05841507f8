//! Conformal scores, calibration thresholds, prediction intervals, coverage
//! metrics and coverage-gap bounds.
//!
//! Thresholds use `f64::INFINITY` as the sentinel for "the finite-sample rule
//! asks for more calibration points than exist"; such thresholds produce
//! unbounded intervals that count as covering every target.

use ndarray::ArrayView2;

use crate::density::{self, BandwidthGrid};
use crate::dist::{EmpiricalDist, UnivariateCdf};
use crate::error::{Error, Result};
use crate::model::MlpModel;

/// Slack applied before rounding `(1 - α)(n + 1)` up, so that representation
/// error in `1 - α` cannot push an integral product to the next integer.
const RANK_TOL: f64 = 1e-9;

/// How a calibration threshold was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Vanilla,
    ImportanceWeighted,
    WorstCase,
}

/// Score sample, level and the resulting threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationResult {
    pub scores: EmpiricalDist,
    pub alpha: f64,
    pub tau: f64,
    pub method: Method,
}

impl CalibrationResult {
    pub fn vanilla(scores: EmpiricalDist, alpha: f64) -> Result<Self> {
        let tau = split_cp_threshold(&scores, alpha)?;
        Ok(Self {
            scores,
            alpha,
            tau,
            method: Method::Vanilla,
        })
    }

    pub fn weighted(scores: EmpiricalDist, alpha: f64) -> Result<Self> {
        let tau = weighted_threshold(&scores, alpha)?;
        Ok(Self {
            scores,
            alpha,
            tau,
            method: Method::ImportanceWeighted,
        })
    }

    pub fn interval(&self, center: f64) -> PredictionInterval {
        prediction_set(center, self.tau)
    }
}

/// Symmetric interval `[center - tau, center + tau]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictionInterval {
    pub center: f64,
    pub tau: f64,
}

impl PredictionInterval {
    /// Inclusive on both ends.
    pub fn contains(&self, y: f64) -> bool {
        (self.center - y).abs() <= self.tau
    }

    pub fn size(&self) -> f64 {
        2.0 * self.tau
    }

    pub fn lower(&self) -> f64 {
        self.center - self.tau
    }

    pub fn upper(&self) -> f64 {
        self.center + self.tau
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::domain(format!("alpha {alpha} outside (0, 1)")));
    }
    Ok(())
}

/// Absolute residuals `|h(x_i) - y_i|` in row order.
pub fn residual_scores(model: &MlpModel, x: ArrayView2<'_, f64>, y: &[f64]) -> Result<Vec<f64>> {
    if x.nrows() != y.len() {
        return Err(Error::domain(format!(
            "{} feature rows but {} targets",
            x.nrows(),
            y.len()
        )));
    }
    Ok(model
        .predict_rows(x)?
        .iter()
        .zip(y)
        .map(|(p, t)| (p - t).abs())
        .collect())
}

/// Uniform-weight distribution of the absolute residuals.
pub fn conformal_scores(model: &MlpModel, x: ArrayView2<'_, f64>, y: &[f64]) -> Result<EmpiricalDist> {
    EmpiricalDist::uniform(residual_scores(model, x, y)?)
}

/// Rank `⌈(1 - α)(n + 1)⌉` used by split conformal prediction.
pub fn split_cp_rank(n: usize, alpha: f64) -> usize {
    ((1.0 - alpha) * (n as f64 + 1.0) - RANK_TOL).ceil().max(1.0) as usize
}

/// Split conformal threshold: the `⌈(1 - α)(n + 1)⌉`-th smallest score, or
/// `+inf` when that rank exceeds `n`.
pub fn split_cp_threshold(scores: &EmpiricalDist, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if scores.is_empty() {
        return Err(Error::domain("no calibration scores"));
    }
    if !scores.is_uniform() {
        return Err(Error::domain("split conformal threshold needs uniform weights"));
    }
    let rank = split_cp_rank(scores.len(), alpha);
    if rank > scores.len() {
        return Ok(f64::INFINITY);
    }
    Ok(scores.sorted_values()[rank - 1])
}

/// Treatment of the test point when forming a weighted threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WeightedRule {
    /// The `1 - α` quantile of the weighted calibration scores alone.
    #[default]
    Plain,
    /// Calibration weights are scaled by `n / (n + 1)` and the remaining
    /// `1 / (n + 1)` sits at `+inf`; with uniform weights this is exactly the
    /// split conformal rule.
    Conservative,
}

/// `inf { v : Σ_{v_i <= v} w_i >= 1 - α }` over the weighted scores.
pub fn weighted_threshold(scores: &EmpiricalDist, alpha: f64) -> Result<f64> {
    weighted_threshold_with(scores, alpha, WeightedRule::Plain)
}

pub fn weighted_threshold_with(scores: &EmpiricalDist, alpha: f64, rule: WeightedRule) -> Result<f64> {
    check_alpha(alpha)?;
    if scores.is_empty() {
        return Err(Error::domain("no calibration scores"));
    }
    match rule {
        WeightedRule::Plain => scores.quantile(1.0 - alpha),
        WeightedRule::Conservative => {
            let n = scores.len() as f64;
            let level = (1.0 - alpha) * (n + 1.0) / n;
            if level > 1.0 + RANK_TOL / n {
                Ok(f64::INFINITY)
            } else {
                scores.quantile(level.min(1.0))
            }
        }
    }
}

/// Largest per-source split threshold; covers every source, and therefore
/// every mixture of sources, at level `1 - α`.
pub fn worst_case_threshold(per_source_scores: &[EmpiricalDist], alpha: f64) -> Result<f64> {
    if per_source_scores.is_empty() {
        return Err(Error::domain("worst-case threshold needs at least one source"));
    }
    per_source_scores.iter().try_fold(0.0f64, |acc, s| {
        if s.is_empty() {
            return Err(Error::domain("empty source score set"));
        }
        Ok(acc.max(split_cp_threshold(s, alpha)?))
    })
}

pub fn prediction_set(center: f64, tau: f64) -> PredictionInterval {
    PredictionInterval { center, tau }
}

/// Fraction of targets inside their intervals.
pub fn coverage(intervals: &[PredictionInterval], targets: &[f64]) -> Result<f64> {
    if intervals.len() != targets.len() {
        return Err(Error::domain("one target per interval is required"));
    }
    if intervals.is_empty() {
        return Err(Error::domain("coverage of an empty set"));
    }
    let hits = intervals
        .iter()
        .zip(targets)
        .filter(|(i, y)| i.contains(**y))
        .count();
    Ok(hits as f64 / intervals.len() as f64)
}

/// Mean interval size; infinite thresholds propagate.
pub fn avg_set_size(intervals: &[PredictionInterval]) -> Result<f64> {
    if intervals.is_empty() {
        return Err(Error::domain("average size of an empty set"));
    }
    Ok(intervals.iter().map(|i| i.size()).sum::<f64>() / intervals.len() as f64)
}

/// Fraction of scores at or below `tau`; equals the coverage of the intervals
/// the threshold induces.
pub fn score_coverage(scores: &[f64], tau: f64) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::domain("coverage of an empty set"));
    }
    Ok(scores.iter().filter(|&&s| s <= tau).count() as f64 / scores.len() as f64)
}

/// `|coverage - (1 - α)|`.
pub fn coverage_gap(empirical_coverage: f64, alpha: f64) -> f64 {
    (empirical_coverage - (1.0 - alpha)).abs()
}

fn nonneg(name: &str, v: f64) -> Result<()> {
    if !(v >= 0.0 && v.is_finite()) {
        return Err(Error::domain(format!("{name} = {v} must be finite and nonnegative")));
    }
    Ok(())
}

fn positive(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(Error::domain(format!("{name} = {v} must be finite and positive")));
    }
    Ok(())
}

/// `sqrt(2 L W)`: coverage-gap bound from the score-space Wasserstein distance
/// and the density bound `L` of the calibration scores.
pub fn gap_bound_wasserstein(l: f64, w: f64) -> Result<f64> {
    positive("L", l)?;
    nonneg("W", w)?;
    Ok((2.0 * l * w).sqrt())
}

/// `sqrt(2 L (κ W_X + η W_Y))`: the bound split into a covariate-shift and a
/// concept-shift term.
pub fn gap_bound_shift(l: f64, kappa: f64, eta: f64, w_x: f64, w_y: f64) -> Result<f64> {
    positive("L", l)?;
    nonneg("kappa", kappa)?;
    nonneg("eta", eta)?;
    nonneg("W_X", w_x)?;
    nonneg("W_Y", w_y)?;
    Ok((2.0 * l * (kappa * w_x + eta * w_y)).sqrt())
}

/// Inputs of the finite-sample bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundInputs {
    /// Density bound of the calibration score distribution.
    pub l: f64,
    pub kappa: f64,
    pub eta: f64,
    pub w_x: f64,
    pub w_y: f64,
    /// Wasserstein distance between the empirical score distributions.
    pub w_hat: f64,
    pub n: usize,
    pub m: usize,
    pub lambda_p: f64,
    pub lambda_q: f64,
    pub sigma_p: f64,
    pub sigma_q: f64,
    pub t_p: f64,
    pub t_q: f64,
}

impl Default for BoundInputs {
    fn default() -> Self {
        Self {
            l: 1.0,
            kappa: 0.0,
            eta: 0.0,
            w_x: 0.0,
            w_y: 0.0,
            w_hat: 0.0,
            n: 1,
            m: 1,
            lambda_p: 0.0,
            lambda_q: 0.0,
            sigma_p: 3.0,
            sigma_q: 3.0,
            t_p: 0.0,
            t_q: 0.0,
        }
    }
}

impl BoundInputs {
    /// Checks every field and names the first offending one.
    pub fn validate(&self) -> Result<()> {
        positive("L", self.l)?;
        nonneg("kappa", self.kappa)?;
        nonneg("eta", self.eta)?;
        nonneg("W_X", self.w_x)?;
        nonneg("W_Y", self.w_y)?;
        nonneg("W_hat", self.w_hat)?;
        nonneg("t_P", self.t_p)?;
        nonneg("t_Q", self.t_q)?;
        if self.n == 0 {
            return Err(Error::domain("n must be positive"));
        }
        if self.m == 0 {
            return Err(Error::domain("m must be positive"));
        }
        for (name, v) in [("lambda_P", self.lambda_p), ("lambda_Q", self.lambda_q)] {
            if !v.is_finite() {
                return Err(Error::domain(format!("{name} = {v} must be finite")));
            }
        }
        for (name, v) in [("sigma_P", self.sigma_p), ("sigma_Q", self.sigma_q)] {
            if !(v > 2.0 && v.is_finite()) {
                return Err(Error::domain(format!("{name} = {v} must exceed 2")));
            }
        }
        Ok(())
    }
}

/// Finite-sample bound
/// `sqrt(2L(Ŵ + λ_P n^{-1/σ_P} + λ_Q m^{-1/σ_Q} + t_P + t_Q))` and the
/// probability `(1 - e^{-2 n t_P²})(1 - e^{-2 m t_Q²})` with which it holds.
pub fn empirical_gap_bound(b: &BoundInputs) -> Result<(f64, f64)> {
    b.validate()?;
    let inner = b.w_hat
        + b.lambda_p * (b.n as f64).powf(-1.0 / b.sigma_p)
        + b.lambda_q * (b.m as f64).powf(-1.0 / b.sigma_q)
        + b.t_p
        + b.t_q;
    if inner < 0.0 {
        return Err(Error::domain(format!(
            "bound argument {inner} is negative; check lambda_P and lambda_Q"
        )));
    }
    let bound = (2.0 * b.l * inner).sqrt();
    let confidence = (1.0 - (-2.0 * b.n as f64 * b.t_p * b.t_p).exp())
        * (1.0 - (-2.0 * b.m as f64 * b.t_q * b.t_q).exp());
    Ok((bound, confidence))
}

/// Largest observed ratio `|s(x_1) - s(x_2)| / ||x_1 - x_2||` over all pairs;
/// a lower estimate of the Lipschitz constant of the score map.
pub fn estimate_kappa(features: ArrayView2<'_, f64>, s_p: &[f64]) -> Result<f64> {
    let n = features.nrows();
    if n != s_p.len() {
        return Err(Error::domain("one score per feature row is required"));
    }
    if n < 2 {
        return Err(Error::InsufficientData { needed: 2, got: n });
    }
    let mut best: Option<f64> = None;
    for i in 0..n {
        for j in (i + 1)..n {
            let dist = features
                .row(i)
                .iter()
                .zip(features.row(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            if dist > 1e-12 {
                let r = (s_p[i] - s_p[j]).abs() / dist;
                best = Some(best.map_or(r, |b| b.max(r)));
            }
        }
    }
    best.ok_or_else(|| Error::DegenerateInput("all feature rows are identical".into()))
}

/// Largest ratio `|s_P(x_1) - s_Q(x_2)| / |f_P(x_1) - f_Q(x_2)|` over all
/// pairs with a non-vanishing denominator. Index `i` runs over the first
/// sample (`s_p`, `f_p`), `j` over the second (`s_q`, `f_q`).
pub fn estimate_eta(s_p: &[f64], f_p: &[f64], s_q: &[f64], f_q: &[f64]) -> Result<f64> {
    if s_p.len() != f_p.len() || s_q.len() != f_q.len() {
        return Err(Error::domain("score and function values must pair up"));
    }
    let mut best: Option<f64> = None;
    for (sp, fp) in s_p.iter().zip(f_p) {
        for (sq, fq) in s_q.iter().zip(f_q) {
            let denom = (fp - fq).abs();
            if denom > 1e-12 {
                let r = (sp - sq).abs() / denom;
                best = Some(best.map_or(r, |b| b.max(r)));
            }
        }
    }
    best.ok_or_else(|| Error::DegenerateInput("no pair with f_P(x_1) != f_Q(x_2)".into()))
}

/// `max_i |F_{weighted cal_i}(τ) - F_{scores_i}(τ)|`: worst per-source CDF gap
/// at the threshold.
pub fn alpha_d(
    per_source_weighted_cal: &[EmpiricalDist],
    per_source_scores: &[EmpiricalDist],
    tau: f64,
) -> Result<f64> {
    if per_source_weighted_cal.is_empty()
        || per_source_weighted_cal.len() != per_source_scores.len()
    {
        return Err(Error::domain(format!(
            "{} weighted calibration distributions but {} score distributions",
            per_source_weighted_cal.len(),
            per_source_scores.len()
        )));
    }
    Ok(per_source_weighted_cal
        .iter()
        .zip(per_source_scores)
        .map(|(c, s)| (c.cdf(tau) - s.cdf(tau)).abs())
        .fold(0.0, f64::max))
}

/// Estimate of the density bound `L` of a score sample: the largest value of
/// a cross-validated Gaussian KDE, taken over the sample points and a fine
/// grid spanning them. This is an estimate, not a guaranteed bound.
pub fn estimate_density_bound(scores: &[f64], seed: u64) -> Result<f64> {
    let n = scores.len();
    if n < 10 {
        return Err(Error::InsufficientData { needed: 10, got: n });
    }
    let mean = scores.iter().sum::<f64>() / n as f64;
    let sd = (scores.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / n as f64).sqrt();
    if sd.is_nan() || sd <= 0.0 {
        return Err(Error::DegenerateInput("scores are all equal".into()));
    }
    let z = ndarray::Array2::from_shape_fn((n, 1), |(i, _)| (scores[i] - mean) / sd);
    let kde = density::fit_cv(z.view(), &BandwidthGrid::default(), seed)?;
    let lo = z.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let steps = 512;
    let grid = (0..=steps).map(|i| lo + (hi - lo) * i as f64 / steps as f64);
    let mut best = 0.0f64;
    for x in grid.chain(z.iter().copied()) {
        best = best.max(kde.density(&[x])?);
    }
    Ok(best / sd)
}
