//! Evaluation of the five calibration methods on mixture test sets, and the
//! multi-trial synthetic benchmark behind `correlate`, `pareto` and the
//! acceptance checks.

use std::collections::BTreeMap;

use rayon::prelude::*;
use wrcp_core::conformal::{
    self, residual_scores, score_coverage, split_cp_threshold, weighted_threshold_with,
    worst_case_threshold, WeightedRule,
};
use wrcp_core::datagen::{derive_seed, gen_synthetic, BundleSizes, DatasetBundle, Samples, ShiftKnobs, SyntheticTask};
use wrcp_core::density::{self, BandwidthGrid, KdeModel, Standardizer};
use wrcp_core::dist::{EmpiricalDist, UnivariateCdf};
use wrcp_core::model::MlpModel;
use wrcp_core::train::{self, TrainConfig, Variant};
use wrcp_core::{Error, Result};

/// Calibration methods compared by `eval`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MethodName {
    Cp,
    Iwcp,
    Wccp,
    Wrcp,
    WrcpUw,
}

impl MethodName {
    pub const ALL: [MethodName; 5] = [
        MethodName::Cp,
        MethodName::Iwcp,
        MethodName::Wccp,
        MethodName::Wrcp,
        MethodName::WrcpUw,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            MethodName::Cp => "cp",
            MethodName::Iwcp => "iwcp",
            MethodName::Wccp => "wccp",
            MethodName::Wrcp => "wrcp",
            MethodName::WrcpUw => "wrcp_uw",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == s)
    }

    /// Whether the threshold uses test-to-calibration likelihood ratios.
    pub fn weighted(&self) -> bool {
        matches!(self, MethodName::Iwcp | MethodName::Wrcp)
    }
}

/// `0.1, 0.2, ..., 0.9`.
pub fn default_alphas() -> Vec<f64> {
    (1..=9).map(|i| i as f64 / 10.0).collect()
}

/// Models available to the evaluation. `erm` serves `cp`, `iwcp` and
/// `wccp`; `wrcp` and `wrcp_uw` serve their namesakes.
#[derive(Debug, Clone, Default)]
pub struct Models {
    pub erm: Option<MlpModel>,
    pub wrcp: Option<MlpModel>,
    pub wrcp_uw: Option<MlpModel>,
}

impl Models {
    pub fn for_method(&self, m: MethodName) -> Result<&MlpModel> {
        let (model, what) = match m {
            MethodName::Cp | MethodName::Iwcp | MethodName::Wccp => (&self.erm, "an ERM checkpoint"),
            MethodName::Wrcp => (&self.wrcp, "a WR-CP checkpoint"),
            MethodName::WrcpUw => (&self.wrcp_uw, "a WR-CP(uw) checkpoint"),
        };
        model
            .as_ref()
            .ok_or_else(|| Error::Refused(format!("method {} needs {what}", m.name())))
    }
}

/// One evaluation cell.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub trial: usize,
    pub test_set: usize,
    pub method: MethodName,
    pub alpha: f64,
    pub coverage: f64,
    pub gap: f64,
    pub avg_size: f64,
    pub tau: f64,
    /// `|F̂_cal(τ) - coverage|`, with `F̂_cal` the (weighted, where the method
    /// weights) calibration score CDF.
    pub cal_gap: f64,
}

/// Options of [`evaluate_bundle`].
#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub methods: Vec<MethodName>,
    pub alphas: Vec<f64>,
    pub rule: WeightedRule,
    pub seed: u64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            methods: MethodName::ALL.to_vec(),
            alphas: default_alphas(),
            rule: WeightedRule::Plain,
            seed: 0,
        }
    }
}

/// Feature-space density models shared by every weighted method: a
/// standardizer and KDE fitted on the calibration features.
pub struct CalibrationDensity {
    std: Standardizer,
    cal_z: ndarray::Array2<f64>,
    cal_kde: KdeModel,
    seed: u64,
}

impl CalibrationDensity {
    pub fn fit(calibration: &Samples, seed: u64) -> Result<Self> {
        let std = Standardizer::fit(calibration.x.view())?;
        let cal_z = std.transform(calibration.x.view())?;
        let cal_kde = density::fit_cv(cal_z.view(), &BandwidthGrid::default(), derive_seed(seed, &[20]))?;
        Ok(Self {
            std,
            cal_z,
            cal_kde,
            seed,
        })
    }

    /// Normalized `Q̂_X / P̂_X` at every calibration row, with `Q̂_X` fitted
    /// on `target` features.
    pub fn weights_for(&self, target: &Samples, stream: u64) -> Result<Vec<f64>> {
        let z = self.std.transform(target.x.view())?;
        let kde = density::fit_cv(z.view(), &BandwidthGrid::default(), derive_seed(self.seed, &[21, stream]))?;
        density::likelihood_ratio_weights(self.cal_z.view(), &kde, &self.cal_kde)
    }
}

/// Calibration-side quantities of one model.
struct Calibrated {
    scores: Vec<f64>,
    per_source: Vec<EmpiricalDist>,
}

fn calibrate(model: &MlpModel, cal: &Samples) -> Result<Calibrated> {
    let scores = residual_scores(model, cal.x.view(), &cal.y)?;
    let k = cal.source.iter().copied().max().map_or(0, |m| m + 1);
    let per_source = (0..k)
        .filter_map(|i| {
            let s: Vec<f64> = scores
                .iter()
                .zip(&cal.source)
                .filter(|(_, &src)| src == i)
                .map(|(v, _)| *v)
                .collect();
            (!s.is_empty()).then(|| EmpiricalDist::uniform(s))
        })
        .collect::<Result<_>>()?;
    Ok(Calibrated { scores, per_source })
}

/// Evaluates each requested method at each `α` on every test set of the
/// bundle. Rows are sorted by (test set, method, α).
pub fn evaluate_bundle(bundle: &DatasetBundle, models: &Models, opts: &EvalOptions, trial: usize) -> Result<Vec<EvalRow>> {
    for &a in &opts.alphas {
        if !(a > 0.0 && a < 1.0) {
            return Err(Error::Domain(format!("alpha {a} outside (0, 1)")));
        }
    }
    let mut calibrated: BTreeMap<MethodName, Calibrated> = BTreeMap::new();
    for &m in &opts.methods {
        calibrated.insert(m, calibrate(models.for_method(m)?, &bundle.calibration)?);
    }
    let density = if opts.methods.iter().any(|m| m.weighted()) {
        Some(CalibrationDensity::fit(&bundle.calibration, opts.seed)?)
    } else {
        None
    };
    let per_test: Vec<Vec<EvalRow>> = bundle
        .tests
        .par_iter()
        .enumerate()
        .map(|(j, test)| {
            let weights = match &density {
                Some(d) => Some(d.weights_for(&test.samples, j as u64)?),
                None => None,
            };
            let mut rows = Vec::new();
            for &m in &opts.methods {
                let model = models.for_method(m)?;
                let cal = &calibrated[&m];
                let test_scores = residual_scores(model, test.samples.x.view(), &test.samples.y)?;
                let dist = match (m.weighted(), &weights) {
                    (true, Some(w)) => EmpiricalDist::new(cal.scores.clone(), w.clone())?,
                    _ => EmpiricalDist::uniform(cal.scores.clone())?,
                };
                for &alpha in &opts.alphas {
                    let tau = match m {
                        MethodName::Cp | MethodName::WrcpUw => split_cp_threshold(&dist, alpha)?,
                        MethodName::Iwcp | MethodName::Wrcp => weighted_threshold_with(&dist, alpha, opts.rule)?,
                        MethodName::Wccp => worst_case_threshold(&cal.per_source, alpha)?,
                    };
                    let coverage = score_coverage(&test_scores, tau)?;
                    rows.push(EvalRow {
                        trial,
                        test_set: j,
                        method: m,
                        alpha,
                        coverage,
                        gap: conformal::coverage_gap(coverage, alpha),
                        avg_size: 2.0 * tau,
                        tau,
                        cal_gap: (dist.cdf(tau) - coverage).abs(),
                    });
                }
            }
            Ok(rows)
        })
        .collect::<Result<_>>()?;
    let mut rows: Vec<EvalRow> = per_test.into_iter().flatten().collect();
    sort_rows(&mut rows);
    Ok(rows)
}

pub fn sort_rows(rows: &mut [EvalRow]) {
    rows.sort_by(|a, b| {
        (a.trial, a.test_set, a.method)
            .cmp(&(b.trial, b.test_set, b.method))
            .then(a.alpha.total_cmp(&b.alpha))
    });
}

/// Mean gap and mean size of one method.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MethodSummary {
    pub method: MethodName,
    pub mean_gap: f64,
    pub mean_size: f64,
    pub mean_coverage: f64,
    pub rows: usize,
    pub infinite_thresholds: usize,
}

/// Per-method plain means over all rows.
pub fn summarize(rows: &[EvalRow]) -> Vec<MethodSummary> {
    let mut by: BTreeMap<MethodName, Vec<&EvalRow>> = BTreeMap::new();
    for r in rows {
        by.entry(r.method).or_default().push(r);
    }
    by.into_iter()
        .map(|(method, rs)| {
            let n = rs.len() as f64;
            MethodSummary {
                method,
                mean_gap: rs.iter().map(|r| r.gap).sum::<f64>() / n,
                mean_size: rs.iter().map(|r| r.avg_size).sum::<f64>() / n,
                mean_coverage: rs.iter().map(|r| r.coverage).sum::<f64>() / n,
                rows: rs.len(),
                infinite_thresholds: rs.iter().filter(|r| r.tau.is_infinite()).count(),
            }
        })
        .collect()
}

/// The synthetic benchmark: generator knobs, sizes, training settings and
/// number of trials. Each trial draws its own bundle and model seeds from
/// `seed`.
#[derive(Debug, Clone, PartialEq)]
pub struct Benchmark {
    pub knobs: ShiftKnobs,
    pub sizes: BundleSizes,
    pub epochs: usize,
    pub learning_rate: f64,
    pub trials: usize,
    pub seed: u64,
}

impl Default for Benchmark {
    fn default() -> Self {
        Self {
            knobs: ShiftKnobs::default(),
            sizes: BundleSizes {
                n_per_source: 500,
                n_cal: 1500,
                n_test_sets: 30,
                m_per_test: 500,
            },
            epochs: 300,
            learning_rate: 1e-2,
            trials: 10,
            seed: 0,
        }
    }
}

impl Benchmark {
    pub fn task(&self, trial: usize) -> Result<SyntheticTask> {
        SyntheticTask::joint_shift(&self.knobs, derive_seed(self.seed, &[100, trial as u64]))
    }

    pub fn bundle(&self, trial: usize) -> Result<DatasetBundle> {
        gen_synthetic(&self.task(trial)?, self.sizes)
    }

    /// Training configuration of one trial; all variants share the
    /// initialization seed so that `β = 0` reproduces ERM.
    pub fn train_config(&self, trial: usize, variant: Variant, beta: f64) -> TrainConfig {
        TrainConfig {
            beta,
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            seed: derive_seed(self.seed, &[200, trial as u64]),
            variant,
        }
    }

    pub fn train(&self, bundle: &DatasetBundle, trial: usize, variant: Variant, beta: f64) -> Result<MlpModel> {
        Ok(train::train(bundle, &self.train_config(trial, variant, beta))?.model)
    }
}

/// Distances between calibration and test score distributions of one test
/// set, with that set's gap averaged over `α`.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceRow {
    pub trial: usize,
    pub test_set: usize,
    pub wasserstein: f64,
    pub tv: f64,
    pub kl: f64,
    pub delta_e: f64,
    pub mean_gap: f64,
}

pub const MEASURES: [&str; 4] = ["wasserstein", "tv", "kl", "delta_e"];

impl DistanceRow {
    pub fn measure(&self, name: &str) -> f64 {
        match name {
            "wasserstein" => self.wasserstein,
            "tv" => self.tv,
            "kl" => self.kl,
            _ => self.delta_e,
        }
    }
}

/// Vanilla CP gaps (averaged over `alphas`) and score-distribution distances
/// for every test set, under one model. Distances are computed on scores
/// divided by the calibration-score mean so that values are comparable
/// across datasets; thresholds and gaps use the raw scores.
pub fn distance_study(
    bundle: &DatasetBundle,
    model: &MlpModel,
    alphas: &[f64],
    trial: usize,
) -> Result<Vec<DistanceRow>> {
    use wrcp_core::dist::{expectation_difference, kl_divergence, tv_distance, wasserstein1, HistogramPair};
    let cal_scores = residual_scores(model, bundle.calibration.x.view(), &bundle.calibration.y)?;
    let cal = EmpiricalDist::uniform(cal_scores.clone())?;
    let unit = cal.mean();
    if unit.is_nan() || unit <= 0.0 {
        return Err(Error::DegenerateInput("calibration scores are all zero".into()));
    }
    let normalized = |s: &[f64]| EmpiricalDist::uniform(s.iter().map(|v| v / unit).collect());
    let cal_n = normalized(&cal_scores)?;
    let taus = alphas
        .iter()
        .map(|&a| split_cp_threshold(&cal, a))
        .collect::<Result<Vec<_>>>()?;
    bundle
        .tests
        .par_iter()
        .enumerate()
        .map(|(j, t)| {
            let scores = residual_scores(model, t.samples.x.view(), &t.samples.y)?;
            let mut gap = 0.0;
            for (&a, &tau) in alphas.iter().zip(&taus) {
                gap += conformal::coverage_gap(score_coverage(&scores, tau)?, a);
            }
            let test = normalized(&scores)?;
            let hist = HistogramPair::from_dists(&cal_n, &test)?;
            Ok(DistanceRow {
                trial,
                test_set: j,
                wasserstein: wasserstein1(&cal_n, &test),
                tv: tv_distance(&hist),
                kl: kl_divergence(&hist),
                delta_e: expectation_difference(&cal_n, &test),
                mean_gap: gap / alphas.len() as f64,
            })
        })
        .collect()
}

/// Spearman coefficient of each measure against the mean gap; `None` where
/// the correlation is undefined.
pub fn correlations(rows: &[DistanceRow]) -> Result<Vec<(&'static str, Option<f64>)>> {
    if rows.len() < 3 {
        return Err(Error::Refused(format!(
            "correlation needs at least 3 test sets, got {}",
            rows.len()
        )));
    }
    let gaps: Vec<f64> = rows.iter().map(|r| r.mean_gap).collect();
    MEASURES
        .iter()
        .map(|&m| {
            let xs: Vec<f64> = rows.iter().map(|r| r.measure(m)).collect();
            match wrcp_core::dist::spearman(&xs, &gaps) {
                Ok(r) => Ok((m, Some(r))),
                Err(Error::UndefinedCorrelation(_)) => Ok((m, None)),
                Err(e) => Err(e),
            }
        })
        .collect()
}

/// One point of the β trade-off curve.
#[derive(Debug, Clone, PartialEq)]
pub struct ParetoPoint {
    pub beta: f64,
    pub mean_gap: f64,
    pub mean_size: f64,
    /// Training error for this β, if any; the point is then excluded from
    /// the front.
    pub error: Option<String>,
}

/// Trains WR-CP for every β on each bundle (shared seeds) and evaluates it
/// with weighted prediction. `models_for` supplies the trained model for a
/// (trial, β) pair so callers choose how training is configured.
pub fn pareto_front<F>(
    bundles: &[DatasetBundle],
    betas: &[f64],
    alphas: &[f64],
    seed: u64,
    train_for: F,
) -> Result<Vec<ParetoPoint>>
where
    F: Fn(&DatasetBundle, usize, f64) -> Result<MlpModel> + Sync,
{
    if betas.is_empty() {
        return Err(Error::Domain("beta list is empty".into()));
    }
    let jobs: Vec<(usize, usize)> = (0..betas.len())
        .flat_map(|b| (0..bundles.len()).map(move |t| (b, t)))
        .collect();
    let results: Vec<Result<Vec<EvalRow>>> = jobs
        .par_iter()
        .map(|&(b, t)| {
            let model = train_for(&bundles[t], t, betas[b])?;
            let models = Models {
                wrcp: Some(model),
                ..Models::default()
            };
            let opts = EvalOptions {
                methods: vec![MethodName::Wrcp],
                alphas: alphas.to_vec(),
                rule: WeightedRule::Plain,
                seed: derive_seed(seed, &[t as u64]),
            };
            evaluate_bundle(&bundles[t], &models, &opts, t)
        })
        .collect();
    Ok(betas
        .iter()
        .enumerate()
        .map(|(b, &beta)| {
            let mut rows = Vec::new();
            for ((bi, _), r) in jobs.iter().zip(&results) {
                if *bi != b {
                    continue;
                }
                match r {
                    Ok(rs) => rows.extend(rs.iter().cloned()),
                    Err(e) => {
                        return ParetoPoint {
                            beta,
                            mean_gap: f64::NAN,
                            mean_size: f64::NAN,
                            error: Some(e.to_string()),
                        }
                    }
                }
            }
            let s = summarize(&rows)[0];
            ParetoPoint {
                beta,
                mean_gap: s.mean_gap,
                mean_size: s.mean_size,
                error: None,
            }
        })
        .collect())
}

/// One cell of the bound sweep: the observed vanilla CP gap next to the
/// Wasserstein bound `sqrt(2 L W)` for one test set and `α`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundRow {
    pub test_set: usize,
    pub alpha: f64,
    pub gap: f64,
    pub l: f64,
    pub w: f64,
    pub bound: f64,
}

/// Vanilla CP gaps against the Wasserstein bound, with `L` estimated from the
/// calibration scores.
pub fn bound_sweep(bundle: &DatasetBundle, model: &MlpModel, alphas: &[f64], seed: u64) -> Result<Vec<BoundRow>> {
    let cal_scores = residual_scores(model, bundle.calibration.x.view(), &bundle.calibration.y)?;
    let l = conformal::estimate_density_bound(&cal_scores, derive_seed(seed, &[30]))?;
    let cal = EmpiricalDist::uniform(cal_scores)?;
    let taus = alphas
        .iter()
        .map(|&a| split_cp_threshold(&cal, a))
        .collect::<Result<Vec<_>>>()?;
    let per_test: Vec<Vec<BoundRow>> = bundle
        .tests
        .par_iter()
        .enumerate()
        .map(|(j, t)| {
            let scores = residual_scores(model, t.samples.x.view(), &t.samples.y)?;
            let coverages = taus
                .iter()
                .map(|&tau| score_coverage(&scores, tau))
                .collect::<Result<Vec<_>>>()?;
            let w = wrcp_core::dist::wasserstein1(&cal, &EmpiricalDist::uniform(scores)?);
            let bound = conformal::gap_bound_wasserstein(l, w)?;
            Ok(alphas
                .iter()
                .zip(coverages)
                .map(|(&alpha, c)| BoundRow {
                    test_set: j,
                    alpha,
                    gap: conformal::coverage_gap(c, alpha),
                    l,
                    w,
                    bound,
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok(per_test.into_iter().flatten().collect())
}

/// One cell of the adaptive-guarantee study.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaDRow {
    pub test_set: usize,
    pub alpha: f64,
    pub tau: f64,
    /// Gap of the weighted threshold on a fresh draw from the mixture.
    pub gap: f64,
    pub alpha_d: f64,
}

/// For every test mixture with weights `w`: the threshold `τ` at the
/// `1 - α` quantile of `Σ_i w_i D̂_{V,s_P}^(i)` (the per-source weighted
/// calibration scores mixed with the test weights), the coverage gap of `τ`
/// on `m_fresh` fresh rows of the mixture, and
/// `α_D = max_i |F_{D̂_{V,s_P}^(i)}(τ) - F_{D_V^(i)}(τ)|` with each source
/// score law estimated from `n_fresh` fresh rows.
pub fn alpha_d_study(
    bundle: &DatasetBundle,
    model: &MlpModel,
    alphas: &[f64],
    n_fresh: usize,
    m_fresh: usize,
    seed: u64,
) -> Result<Vec<AlphaDRow>> {
    use wrcp_core::datagen::{make_mixture_test, MixtureWeights};
    let law = bundle
        .law
        .as_ref()
        .ok_or_else(|| Error::Refused("the adaptive-guarantee study needs a generative law".into()))?;
    let cal_scores = residual_scores(model, bundle.calibration.x.view(), &bundle.calibration.y)?;
    let source_weights = train::source_calibration_weights(&bundle.sources, &bundle.calibration, derive_seed(seed, &[40]))?;
    let weighted_cal = source_weights
        .iter()
        .map(|w| train::build_weighted_cal_dist(&cal_scores, w))
        .collect::<Result<Vec<_>>>()?;
    let source_scores = (0..bundle.k())
        .map(|i| {
            let mut w = vec![0.0; bundle.k()];
            w[i] = 1.0;
            let fresh = make_mixture_test(law, &MixtureWeights::Explicit(w), n_fresh, derive_seed(seed, &[41, i as u64]))?;
            EmpiricalDist::uniform(residual_scores(model, fresh.samples.x.view(), &fresh.samples.y)?)
        })
        .collect::<Result<Vec<_>>>()?;
    let per_test: Vec<Vec<AlphaDRow>> = bundle
        .tests
        .par_iter()
        .enumerate()
        .map(|(j, t)| {
            let mixed: Vec<f64> = (0..cal_scores.len())
                .map(|r| t.weights.iter().zip(&source_weights).map(|(wi, sw)| wi * sw[r]).sum())
                .collect();
            let dist = EmpiricalDist::new(cal_scores.clone(), mixed)?;
            let fresh = make_mixture_test(
                law,
                &MixtureWeights::Explicit(t.weights.clone()),
                m_fresh,
                derive_seed(seed, &[42, j as u64]),
            )?;
            let scores = residual_scores(model, fresh.samples.x.view(), &fresh.samples.y)?;
            alphas
                .iter()
                .map(|&alpha| {
                    let tau = conformal::weighted_threshold(&dist, alpha)?;
                    Ok(AlphaDRow {
                        test_set: j,
                        alpha,
                        tau,
                        gap: conformal::coverage_gap(score_coverage(&scores, tau)?, alpha),
                        alpha_d: conformal::alpha_d(&weighted_cal, &source_scores, tau)?,
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok(per_test.into_iter().flatten().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(method: MethodName, test_set: usize, alpha: f64, gap: f64) -> EvalRow {
        EvalRow {
            trial: 0,
            test_set,
            method,
            alpha,
            coverage: 1.0 - alpha + gap,
            gap,
            avg_size: 1.0,
            tau: 0.5,
            cal_gap: 0.0,
        }
    }

    #[test]
    fn method_names_round_trip() {
        for m in MethodName::ALL {
            assert_eq!(MethodName::parse(m.name()), Some(m));
        }
        assert_eq!(MethodName::parse("cqr"), None);
    }

    #[test]
    fn missing_checkpoint_is_explicit() {
        let err = Models::default().for_method(MethodName::Wrcp).unwrap_err();
        assert!(err.to_string().contains("WR-CP checkpoint"), "{err}");
    }

    #[test]
    fn rows_sort_by_key() {
        let mut rows = vec![
            row(MethodName::Wccp, 1, 0.2, 0.0),
            row(MethodName::Cp, 1, 0.5, 0.0),
            row(MethodName::Cp, 0, 0.9, 0.0),
            row(MethodName::Cp, 1, 0.1, 0.0),
        ];
        sort_rows(&mut rows);
        let keys: Vec<_> = rows.iter().map(|r| (r.test_set, r.method, r.alpha)).collect();
        assert_eq!(
            keys,
            vec![
                (0, MethodName::Cp, 0.9),
                (1, MethodName::Cp, 0.1),
                (1, MethodName::Cp, 0.5),
                (1, MethodName::Wccp, 0.2)
            ]
        );
    }

    #[test]
    fn summary_is_plain_mean() {
        let rows = vec![
            row(MethodName::Cp, 0, 0.1, 0.02),
            row(MethodName::Cp, 1, 0.1, 0.04),
            row(MethodName::Iwcp, 0, 0.1, 0.5),
        ];
        let s = summarize(&rows);
        assert_eq!(s.len(), 2);
        assert!((s[0].mean_gap - 0.03).abs() < 1e-15);
        assert_eq!(s[1].rows, 1);
    }
}
