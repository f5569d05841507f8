//! The six subcommands. Each command's options are declared once in
//! [`COMMANDS`]; flags, config files and the echoed `config.txt` share the
//! same keys.

use std::path::Path;

use wrcp_core::conformal::{self, BoundInputs, WeightedRule};
use wrcp_core::datagen::{
    self, gen_synthetic, load_bundle, save_bundle, BundleSizes, CsvSplit, DatasetBundle, ShiftKnobs,
    SyntheticTask,
};
use wrcp_core::model::MlpModel;
use wrcp_core::train::{self, metrics_header, metrics_row, TrainConfig, Variant};

use crate::config::{check_alphas, Config};
use crate::error::CliError;
use crate::experiment::{
    alpha_d_study, bound_sweep, correlations, distance_study, evaluate_bundle, pareto_front, summarize,
    Benchmark, EvalOptions, MethodName, Models,
};
use crate::output::{create_dir, csv, fmt_float, write_file};
use crate::svg::{render_svg, Chart, Series};

/// One option: config key, default value (empty means unset) and help.
pub type OptionSpec = (&'static str, &'static str, &'static str);

pub struct CommandSpec {
    pub name: &'static str,
    pub about: &'static str,
    pub options: &'static [OptionSpec],
}

const ALPHAS: &str = "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9";

pub const COMMANDS: &[CommandSpec] = &[
    CommandSpec {
        name: "gen",
        about: "Generate a dataset bundle (synthetic family or split of a CSV table)",
        options: &[
            ("family", "joint", "joint | iid | row_noise | csv"),
            ("k", "3", "number of sources"),
            ("d", "2", "feature dimension"),
            ("r_cov", "0.5", "radius of the circle holding the source means"),
            ("concept", "-1,0,1", "per-source concept coefficients"),
            ("noise", "0.1", "per-source noise scales"),
            ("scale", "1", "feature standard deviation"),
            ("n_per_source", "500", "training rows per source"),
            ("n_cal", "1500", "pooled calibration rows"),
            ("n_test_sets", "30", "number of mixture test sets"),
            ("m_per_test", "500", "rows per test set"),
            ("input", "", "source_id,x_1..x_d,y table (family csv)"),
            ("train_frac", "0.5", "training share of each source (family csv)"),
            ("cal_frac", "0.5", "calibration share of the remainder (family csv)"),
            ("seed", "0", "random seed"),
            ("out", "bundle", "output directory"),
        ],
    },
    CommandSpec {
        name: "train",
        about: "Train a model on a bundle",
        options: &[
            ("bundle", "", "bundle directory"),
            ("variant", "wrcp", "wrcp | wrcp_uw | erm"),
            ("beta", "1", "regularization strength"),
            ("epochs", "200", "full-batch epochs"),
            ("lr", "0.001", "Adam learning rate"),
            ("seed", "0", "initialization and KDE seed"),
            ("out", "train", "output directory"),
        ],
    },
    CommandSpec {
        name: "eval",
        about: "Evaluate calibration methods on every test set of a bundle",
        options: &[
            ("bundle", "", "bundle directory"),
            ("checkpoint", "", "ERM checkpoint (cp, iwcp, wccp)"),
            ("wrcp_checkpoint", "", "WR-CP checkpoint (wrcp)"),
            ("wrcp_uw_checkpoint", "", "WR-CP(uw) checkpoint (wrcp_uw)"),
            ("methods", "auto", "comma list of cp,iwcp,wccp,wrcp,wrcp_uw; auto = all with a checkpoint"),
            ("alphas", ALPHAS, "miscoverage levels"),
            ("rule", "plain", "weighted quantile rule: plain | conservative"),
            ("trial", "0", "trial index written to every row"),
            ("seed", "0", "KDE seed"),
            ("out", "eval", "output directory"),
        ],
    },
    CommandSpec {
        name: "correlate",
        about: "Rank correlation between score-distribution distances and coverage gaps",
        options: &[
            ("bundle", "", "bundle directory"),
            ("checkpoint", "", "ERM checkpoint"),
            ("alphas", ALPHAS, "levels the gap is averaged over"),
            ("trial", "0", "trial index written to every row"),
            ("seed", "0", "random seed"),
            ("out", "correlate", "output directory"),
        ],
    },
    CommandSpec {
        name: "pareto",
        about: "Gap and size of WR-CP across a grid of beta",
        options: &[
            ("bundle", "", "bundle directory; empty = synthetic benchmark bundles"),
            ("betas", "0,1,4,16", "regularization strengths"),
            ("trials", "2", "synthetic bundles (ignored with --bundle)"),
            ("epochs", "300", "full-batch epochs"),
            ("lr", "0.01", "Adam learning rate"),
            ("alphas", ALPHAS, "miscoverage levels"),
            ("seed", "0", "random seed"),
            ("out", "pareto", "output directory"),
        ],
    },
    CommandSpec {
        name: "bounds",
        about: "Coverage-gap bounds from explicit inputs, optionally checked on a bundle",
        options: &[
            ("l", "1", "density bound L of the calibration scores"),
            ("kappa", "0", "Lipschitz constant of the score in x"),
            ("eta", "0", "Lipschitz constant of the score in y"),
            ("w_x", "0", "Wasserstein distance of the feature marginals"),
            ("w_y", "0", "Wasserstein distance of the conditional targets"),
            ("w_hat", "0", "Wasserstein distance of the empirical score distributions"),
            ("n", "1", "calibration size"),
            ("m", "1", "test size"),
            ("lambda_p", "0", "calibration concentration constant"),
            ("lambda_q", "0", "test concentration constant"),
            ("sigma_p", "3", "calibration concentration exponent (> 2)"),
            ("sigma_q", "3", "test concentration exponent (> 2)"),
            ("t_p", "0", "calibration deviation"),
            ("t_q", "0", "test deviation"),
            ("bundle", "", "bundle for the validity sweep (optional)"),
            ("checkpoint", "", "ERM checkpoint for the validity sweep"),
            ("alphas", ALPHAS, "miscoverage levels of the sweep"),
            ("n_fresh", "20000", "fresh rows per source and mixture in the alpha_D study"),
            ("seed", "0", "random seed"),
            ("out", "bounds", "output directory"),
        ],
    },
];

pub fn spec(name: &str) -> Option<&'static CommandSpec> {
    COMMANDS.iter().find(|c| c.name == name)
}

/// Builds the effective configuration of `name` and runs it. Returns the
/// text summary printed on success.
pub fn run(name: &str, config_file: Option<&Path>, flags: &[(String, String)]) -> Result<String, CliError> {
    let spec = spec(name).ok_or_else(|| CliError::Validation(format!("unknown command '{name}'")))?;
    let defaults: Vec<(&str, &str)> = spec.options.iter().map(|(k, v, _)| (*k, *v)).collect();
    let cfg = Config::layered(&defaults, config_file, flags)?;
    match name {
        "gen" => cmd_gen(&cfg),
        "train" => cmd_train(&cfg),
        "eval" => cmd_eval(&cfg),
        "correlate" => cmd_correlate(&cfg),
        "pareto" => cmd_pareto(&cfg),
        _ => cmd_bounds(&cfg),
    }
}

fn load_checked(bundle: &DatasetBundle, path: &Path) -> Result<MlpModel, CliError> {
    let model = MlpModel::load(path)?;
    if model.input_dim() != bundle.dim() {
        return Err(CliError::Validation(format!(
            "{}: checkpoint expects {} features, bundle has {}",
            path.display(),
            model.input_dim(),
            bundle.dim()
        )));
    }
    Ok(model)
}

fn nonneg_list(cfg: &Config, key: &str) -> Result<Vec<f64>, CliError> {
    let v = cfg.f64_list(key)?;
    if v.is_empty() || v.iter().any(|&x| x < 0.0) {
        return Err(CliError::Validation(format!("{key} must be a nonempty list of values >= 0")));
    }
    Ok(v)
}

fn cmd_gen(cfg: &Config) -> Result<String, CliError> {
    let out = cfg.path("out")?;
    let seed = cfg.u64("seed")?;
    let family = cfg.string("family")?;
    let k = cfg.usize("k")?;
    let bundle = if family == "csv" {
        let split = CsvSplit {
            train_frac: cfg.f64("train_frac")?,
            cal_frac: cfg.f64("cal_frac")?,
            n_test_sets: cfg.usize("n_test_sets")?,
            m_per_test: cfg.usize("m_per_test")?,
            seed,
        };
        datagen::load_csv(&cfg.path("input")?, &split)?
    } else {
        if k < 2 {
            return Err(CliError::Validation(format!(
                "k = {k}: mixture test sets need at least 2 sources"
            )));
        }
        let d = cfg.usize("d")?;
        let noise = nonneg_list(cfg, "noise")?;
        let task = match family.as_str() {
            "joint" => SyntheticTask::joint_shift(
                &ShiftKnobs {
                    k,
                    d,
                    r_cov: cfg.f64("r_cov")?,
                    concept: cfg.f64_list("concept")?,
                    noise,
                    scale: cfg.f64("scale")?,
                },
                seed,
            )?,
            "iid" => SyntheticTask::iid(k, d, noise[0], seed)?,
            "row_noise" => {
                if k != 3 {
                    return Err(CliError::Validation("family row_noise has exactly 3 sources".into()));
                }
                SyntheticTask::row_noise(d, cfg.f64("r_cov")?, noise[0], seed)?
            }
            other => return Err(CliError::Validation(format!("unknown family '{other}'"))),
        };
        gen_synthetic(
            &task,
            BundleSizes {
                n_per_source: cfg.usize("n_per_source")?,
                n_cal: cfg.usize("n_cal")?,
                n_test_sets: cfg.usize("n_test_sets")?,
                m_per_test: cfg.usize("m_per_test")?,
            },
        )?
    };
    if bundle.k() < 2 {
        return Err(CliError::Validation(format!(
            "k = {}: mixture test sets need at least 2 sources",
            bundle.k()
        )));
    }
    save_bundle(&bundle, &out)?;
    cfg.write_echo(&out)?;
    let sizes: Vec<String> = bundle.sources.iter().map(|s| s.len().to_string()).collect();
    Ok(format!(
        "bundle {}: family={family} k={} d={} sources=[{}] calibration={} test_sets={}{}\n",
        out.display(),
        bundle.k(),
        bundle.dim(),
        sizes.join(","),
        bundle.calibration.len(),
        bundle.tests.len(),
        if family == "csv" {
            String::new()
        } else {
            format!(
                " r_cov={} concept={} noise={}",
                cfg.string("r_cov")?,
                cfg.string("concept")?,
                cfg.string("noise")?
            )
        }
    ))
}

fn cmd_train(cfg: &Config) -> Result<String, CliError> {
    let bundle = load_bundle(&cfg.path("bundle")?)?;
    let out = cfg.path("out")?;
    let variant_name = cfg.string("variant")?;
    let variant = Variant::parse(&variant_name)
        .ok_or_else(|| CliError::Validation(format!("unknown variant '{variant_name}'")))?;
    let tc = TrainConfig {
        beta: cfg.f64("beta")?,
        epochs: cfg.usize("epochs")?,
        learning_rate: cfg.f64("lr")?,
        seed: cfg.u64("seed")?,
        variant,
    };
    tc.validate()?;
    let outcome = train::train(&bundle, &tc)?;
    create_dir(&out)?;
    outcome.model.save(&out.join("model.ckpt"))?;
    let mut text = metrics_header(bundle.k());
    text.push('\n');
    for m in &outcome.metrics {
        text.push_str(&metrics_row(m, fmt_float));
        text.push('\n');
    }
    write_file(&out.join("metrics.csv"), &text)?;
    cfg.write_echo(&out)?;
    let last = outcome.metrics.last();
    Ok(format!(
        "trained {} for {} epochs: total_loss={} mse_sum={} wass_sum={}\n",
        variant.name(),
        tc.epochs,
        last.map_or("-".into(), |m| fmt_float(m.total_loss)),
        last.map_or("-".into(), |m| fmt_float(m.mse_sum)),
        last.map_or("-".into(), |m| fmt_float(m.wass_sum)),
    ))
}

fn parse_rule(s: &str) -> Result<WeightedRule, CliError> {
    match s {
        "plain" => Ok(WeightedRule::Plain),
        "conservative" => Ok(WeightedRule::Conservative),
        _ => Err(CliError::Validation(format!("unknown rule '{s}'"))),
    }
}

fn cmd_eval(cfg: &Config) -> Result<String, CliError> {
    let bundle = load_bundle(&cfg.path("bundle")?)?;
    let out = cfg.path("out")?;
    let load = |key: &str| cfg.opt_path(key).map(|p| load_checked(&bundle, &p)).transpose();
    let models = Models {
        erm: load("checkpoint")?,
        wrcp: load("wrcp_checkpoint")?,
        wrcp_uw: load("wrcp_uw_checkpoint")?,
    };
    let listed = cfg.str_list("methods")?;
    let methods: Vec<MethodName> = if listed == ["auto"] {
        MethodName::ALL
            .into_iter()
            .filter(|&m| models.for_method(m).is_ok())
            .collect()
    } else {
        let mut ms = listed
            .iter()
            .map(|s| MethodName::parse(s).ok_or_else(|| CliError::Validation(format!("unknown method '{s}'"))))
            .collect::<Result<Vec<_>, _>>()?;
        ms.sort();
        ms.dedup();
        ms
    };
    if methods.is_empty() {
        return Err(CliError::Validation("no method to evaluate; pass at least one checkpoint".into()));
    }
    for &m in &methods {
        models.for_method(m)?;
    }
    let alphas = cfg.f64_list("alphas")?;
    check_alphas(&alphas)?;
    let opts = EvalOptions {
        methods,
        alphas,
        rule: parse_rule(&cfg.string("rule")?)?,
        seed: cfg.u64("seed")?,
    };
    let rows = evaluate_bundle(&bundle, &models, &opts, cfg.usize("trial")?)?;
    create_dir(&out)?;
    write_file(
        &out.join("eval.csv"),
        &csv(
            &["trial", "test_set", "method", "alpha", "coverage", "gap", "avg_size", "tau", "cal_gap"],
            rows.iter().map(|r| {
                vec![
                    r.trial.to_string(),
                    r.test_set.to_string(),
                    r.method.name().to_string(),
                    fmt_float(r.alpha),
                    fmt_float(r.coverage),
                    fmt_float(r.gap),
                    fmt_float(r.avg_size),
                    fmt_float(r.tau),
                    fmt_float(r.cal_gap),
                ]
            }),
        ),
    )?;
    let summary = summarize(&rows);
    write_file(
        &out.join("summary.csv"),
        &csv(
            &["method", "mean_gap", "mean_size", "mean_coverage", "rows", "infinite_thresholds"],
            summary.iter().map(|s| {
                vec![
                    s.method.name().to_string(),
                    fmt_float(s.mean_gap),
                    fmt_float(s.mean_size),
                    fmt_float(s.mean_coverage),
                    s.rows.to_string(),
                    s.infinite_thresholds.to_string(),
                ]
            }),
        ),
    )?;
    cfg.write_echo(&out)?;
    let mut text = format!("{:<8} {:>10} {:>10} {:>10}\n", "method", "mean_gap", "mean_size", "inf_tau");
    for s in &summary {
        text.push_str(&format!(
            "{:<8} {:>10.4} {:>10.4} {:>10}\n",
            s.method.name(),
            s.mean_gap,
            s.mean_size,
            s.infinite_thresholds
        ));
    }
    Ok(text)
}

fn cmd_correlate(cfg: &Config) -> Result<String, CliError> {
    let bundle = load_bundle(&cfg.path("bundle")?)?;
    let out = cfg.path("out")?;
    let model = load_checked(&bundle, &cfg.path("checkpoint")?)?;
    let alphas = cfg.f64_list("alphas")?;
    check_alphas(&alphas)?;
    let rows = distance_study(&bundle, &model, &alphas, cfg.usize("trial")?)?;
    let coefs = correlations(&rows)?;
    create_dir(&out)?;
    write_file(
        &out.join("distances.csv"),
        &csv(
            &["trial", "test_set", "wasserstein", "tv", "kl", "delta_e", "mean_gap"],
            rows.iter().map(|r| {
                vec![
                    r.trial.to_string(),
                    r.test_set.to_string(),
                    fmt_float(r.wasserstein),
                    fmt_float(r.tv),
                    fmt_float(r.kl),
                    fmt_float(r.delta_e),
                    fmt_float(r.mean_gap),
                ]
            }),
        ),
    )?;
    let shown = |c: &Option<f64>| c.map_or("undefined".to_string(), fmt_float);
    write_file(
        &out.join("correlate.csv"),
        &csv(
            &["measure", "spearman"],
            coefs.iter().map(|(m, c)| vec![m.to_string(), shown(c)]),
        ),
    )?;
    cfg.write_echo(&out)?;
    let mut text = String::new();
    if rows.len() < 20 {
        text.push_str(&format!("note: only {} test sets; at least 20 are advisable\n", rows.len()));
    }
    for (m, c) in &coefs {
        text.push_str(&format!("spearman({m}, gap) = {}\n", shown(c)));
    }
    Ok(text)
}

fn cmd_pareto(cfg: &Config) -> Result<String, CliError> {
    let out = cfg.path("out")?;
    let betas = nonneg_list(cfg, "betas")?;
    let alphas = cfg.f64_list("alphas")?;
    check_alphas(&alphas)?;
    let bench = Benchmark {
        epochs: cfg.usize("epochs")?,
        learning_rate: cfg.f64("lr")?,
        trials: cfg.usize("trials")?,
        seed: cfg.u64("seed")?,
        ..Benchmark::default()
    };
    bench.train_config(0, Variant::Wrcp, 0.0).validate()?;
    let bundles = match cfg.opt_path("bundle") {
        Some(p) => vec![load_bundle(&p)?],
        None => {
            if bench.trials == 0 {
                return Err(CliError::Validation("trials must be at least 1".into()));
            }
            (0..bench.trials).map(|t| bench.bundle(t)).collect::<Result<_, _>>()?
        }
    };
    let points = pareto_front(&bundles, &betas, &alphas, bench.seed, |b, t, beta| {
        bench.train(b, t, Variant::Wrcp, beta)
    })?;
    let label = |beta: f64| if beta == 0.0 { "IW-CP" } else { "WR-CP" };
    create_dir(&out)?;
    write_file(
        &out.join("pareto.csv"),
        &csv(
            &["beta", "label", "mean_gap", "mean_size", "status"],
            points.iter().map(|p| {
                vec![
                    fmt_float(p.beta),
                    label(p.beta).to_string(),
                    fmt_float(p.mean_gap),
                    fmt_float(p.mean_size),
                    p.error.as_ref().map_or("ok".to_string(), |e| format!("\"failed: {}\"", e.replace('"', "'"))),
                ]
            }),
        ),
    )?;
    cfg.write_echo(&out)?;
    let ok: Vec<_> = points.iter().filter(|p| p.error.is_none()).collect();
    if ok.is_empty() {
        return Err(CliError::Runtime("training failed for every beta".into()));
    }
    render_svg(
        &Chart {
            title: "Coverage gap vs prediction set size".into(),
            x_label: "mean coverage gap".into(),
            y_label: "mean set size".into(),
            series: vec![Series {
                label: "WR-CP (beta grid)".into(),
                points: ok.iter().map(|p| (p.mean_gap, p.mean_size)).collect(),
                point_labels: ok
                    .iter()
                    .map(|p| {
                        if p.beta == 0.0 {
                            "IW-CP".to_string()
                        } else {
                            format!("beta={}", p.beta)
                        }
                    })
                    .collect(),
            }],
        },
        &out.join("pareto.svg"),
    )?;
    let mut text = String::new();
    for p in &points {
        match &p.error {
            None => text.push_str(&format!(
                "beta={:<6} {:<6} gap={:.4} size={:.4}\n",
                p.beta,
                label(p.beta),
                p.mean_gap,
                p.mean_size
            )),
            Some(e) => text.push_str(&format!("beta={:<6} failed: {e}\n", p.beta)),
        }
    }
    Ok(text)
}

fn cmd_bounds(cfg: &Config) -> Result<String, CliError> {
    let out = cfg.path("out")?;
    let inputs = BoundInputs {
        l: cfg.f64("l")?,
        kappa: cfg.f64("kappa")?,
        eta: cfg.f64("eta")?,
        w_x: cfg.f64("w_x")?,
        w_y: cfg.f64("w_y")?,
        w_hat: cfg.f64("w_hat")?,
        n: cfg.usize("n")?,
        m: cfg.usize("m")?,
        lambda_p: cfg.f64("lambda_p")?,
        lambda_q: cfg.f64("lambda_q")?,
        sigma_p: cfg.f64("sigma_p")?,
        sigma_q: cfg.f64("sigma_q")?,
        t_p: cfg.f64("t_p")?,
        t_q: cfg.f64("t_q")?,
    };
    inputs.validate()?;
    let w_bound = conformal::gap_bound_wasserstein(inputs.l, inputs.w_hat)?;
    let shift_bound = conformal::gap_bound_shift(inputs.l, inputs.kappa, inputs.eta, inputs.w_x, inputs.w_y)?;
    let (emp_bound, confidence) = conformal::empirical_gap_bound(&inputs)?;
    let report = [
        ("wasserstein_bound", w_bound),
        ("shift_bound", shift_bound),
        ("finite_sample_bound", emp_bound),
        ("finite_sample_confidence", confidence),
    ];
    let mut text: String = report.iter().map(|(k, v)| format!("{k} = {}\n", fmt_float(*v))).collect();

    let sweep = match (cfg.opt_path("bundle"), cfg.opt_path("checkpoint")) {
        (Some(b), Some(c)) => {
            let bundle = load_bundle(&b)?;
            let model = load_checked(&bundle, &c)?;
            let alphas = cfg.f64_list("alphas")?;
            check_alphas(&alphas)?;
            let seed = cfg.u64("seed")?;
            let n_fresh = cfg.usize("n_fresh")?;
            if n_fresh == 0 {
                return Err(CliError::Validation("n_fresh must be at least 1".into()));
            }
            let rows = bound_sweep(&bundle, &model, &alphas, seed)?;
            let alpha_d = if bundle.law.is_some() {
                Some(alpha_d_study(&bundle, &model, &alphas, n_fresh, n_fresh, seed)?)
            } else {
                text.push_str("alpha_D study skipped: bundle has no generative law\n");
                None
            };
            Some((rows, alpha_d))
        }
        (None, None) => None,
        _ => {
            return Err(CliError::Validation(
                "the validity sweep needs both --bundle and --checkpoint".into(),
            ))
        }
    };

    create_dir(&out)?;
    write_file(
        &out.join("bounds.csv"),
        &csv(
            &["quantity", "value"],
            report.iter().map(|(k, v)| vec![k.to_string(), fmt_float(*v)]),
        ),
    )?;
    if let Some((rows, alpha_d)) = sweep {
        let held = rows.iter().filter(|r| r.gap <= r.bound).count();
        write_file(
            &out.join("sweep.csv"),
            &csv(
                &["test_set", "alpha", "gap", "l", "w", "bound", "holds"],
                rows.iter().map(|r| {
                    vec![
                        r.test_set.to_string(),
                        fmt_float(r.alpha),
                        fmt_float(r.gap),
                        fmt_float(r.l),
                        fmt_float(r.w),
                        fmt_float(r.bound),
                        (r.gap <= r.bound).to_string(),
                    ]
                }),
            ),
        )?;
        text.push_str(&format!("wasserstein bound holds on {held}/{} cells\n", rows.len()));
        if let Some(ad) = alpha_d {
            write_file(
                &out.join("alpha_d.csv"),
                &csv(
                    &["test_set", "alpha", "tau", "gap", "alpha_d"],
                    ad.iter().map(|r| {
                        vec![
                            r.test_set.to_string(),
                            fmt_float(r.alpha),
                            fmt_float(r.tau),
                            fmt_float(r.gap),
                            fmt_float(r.alpha_d),
                        ]
                    }),
                ),
            )?;
            let worst = ad.iter().map(|r| r.gap - r.alpha_d).fold(f64::NEG_INFINITY, f64::max);
            text.push_str(&format!("max(gap - alpha_D) = {}\n", fmt_float(worst)));
        }
    }
    cfg.write_echo(&out)?;
    Ok(text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flags(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn option_keys_are_unique() {
        for c in COMMANDS {
            let mut keys: Vec<_> = c.options.iter().map(|o| o.0).collect();
            keys.sort();
            let n = keys.len();
            keys.dedup();
            assert_eq!(n, keys.len(), "{}", c.name);
            assert!(keys.contains(&"seed") && keys.contains(&"out"), "{}", c.name);
        }
    }

    #[test]
    fn zero_distance_bounds_are_zero() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("b");
        run("bounds", None, &flags(&[("out", out.to_str().unwrap())])).unwrap();
        let text = std::fs::read_to_string(out.join("bounds.csv")).unwrap();
        for line in text.lines().skip(1).take(3) {
            assert!(line.ends_with(",0.00000000e0"), "{line}");
        }
    }

    #[test]
    fn bound_field_violation_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let err = run(
            "bounds",
            None,
            &flags(&[("sigma_q", "2"), ("out", dir.path().to_str().unwrap())]),
        )
        .unwrap_err();
        assert_eq!(err.exit_code(), 1);
        assert!(err.to_string().contains("sigma_Q"), "{err}");
    }

    #[test]
    fn single_source_refused() {
        let dir = tempfile::tempdir().unwrap();
        let err = run("gen", None, &flags(&[("k", "1"), ("out", dir.path().to_str().unwrap())])).unwrap_err();
        assert_eq!(err.exit_code(), 1);
    }
}
