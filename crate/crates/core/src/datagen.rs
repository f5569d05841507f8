//! Multi-source regression data: a parametric synthetic family with separate
//! covariate-shift and concept-shift knobs, random mixture test sets, a CSV
//! loader for source-labelled tables, and bundle (de)serialization.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array2, ArrayView1};
use rand::distr::weighted::WeightedIndex;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

use crate::error::{Error, Result};

/// Standard deviation of the shift variable ξ in the row-wise concept
/// modifications (variance 10).
pub const XI_SD: f64 = 3.162_277_660_168_379_5;

/// Lower bound on `|ξ|` for [`Concept::RatioNoise`], keeping `y / ξ` bounded.
pub const XI_CLAMP: f64 = 0.5;

/// Mixes a base seed with a path of stream indices (splitmix64 finalizer).
pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    path.iter().fold(mix(base), |acc, &p| mix(acc ^ mix(p)))
}

fn rng_for(base: u64, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, path))
}

/// Feature rows, targets, and the source each row came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Samples {
    pub x: Array2<f64>,
    pub y: Vec<f64>,
    pub source: Vec<usize>,
}

impl Samples {
    pub fn new(x: Array2<f64>, y: Vec<f64>, source: Vec<usize>) -> Result<Self> {
        if x.nrows() != y.len() || y.len() != source.len() {
            return Err(Error::domain(format!(
                "{} feature rows, {} targets, {} source ids",
                x.nrows(),
                y.len(),
                source.len()
            )));
        }
        Ok(Self { x, y, source })
    }

    pub fn empty(d: usize) -> Self {
        Self {
            x: Array2::zeros((0, d)),
            y: Vec::new(),
            source: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    fn from_rows(d: usize, rows: Vec<(Vec<f64>, f64, usize)>) -> Self {
        let n = rows.len();
        let mut x = Array2::zeros((n, d));
        let mut y = Vec::with_capacity(n);
        let mut source = Vec::with_capacity(n);
        for (r, (feat, t, s)) in rows.into_iter().enumerate() {
            for (j, v) in feat.into_iter().enumerate() {
                x[[r, j]] = v;
            }
            y.push(t);
            source.push(s);
        }
        Self { x, y, source }
    }

    fn row(&self, i: usize) -> (Vec<f64>, f64, usize) {
        (self.x.row(i).to_vec(), self.y[i], self.source[i])
    }

    /// Concatenation in argument order.
    pub fn concat(parts: &[&Samples]) -> Result<Samples> {
        let d = parts.first().map_or(0, |p| p.dim());
        if parts.iter().any(|p| p.dim() != d) {
            return Err(Error::domain("cannot concatenate samples of different dimension"));
        }
        let rows = parts
            .iter()
            .flat_map(|p| (0..p.len()).map(move |i| p.row(i)))
            .collect();
        Ok(Self::from_rows(d, rows))
    }

    /// Rows whose source id equals `id`, in original order.
    pub fn of_source(&self, id: usize) -> Samples {
        let rows = (0..self.len())
            .filter(|&i| self.source[i] == id)
            .map(|i| self.row(i))
            .collect();
        Self::from_rows(self.dim(), rows)
    }
}

/// How a source's targets depart from the shared base function
/// `sin(x_1) + 0.5 x_2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Concept {
    /// Deterministic shift: `f(x) = base(x) + c x_1`.
    Linear { c: f64 },
    /// Row-wise `y += y / 1000 · ξ`.
    ScaledNoise,
    /// Row-wise `y += y / ξ`, with `|ξ|` clamped to at least [`XI_CLAMP`].
    RatioNoise,
    /// Row-wise `y += ξ`.
    AdditiveNoise,
}

impl Concept {
    fn tag(&self) -> String {
        match self {
            Concept::Linear { c } => format!("linear:{c}"),
            Concept::ScaledNoise => "scaled".into(),
            Concept::RatioNoise => "ratio".into(),
            Concept::AdditiveNoise => "additive".into(),
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "scaled" => Some(Concept::ScaledNoise),
            "ratio" => Some(Concept::RatioNoise),
            "additive" => Some(Concept::AdditiveNoise),
            _ => s
                .strip_prefix("linear:")
                .and_then(|c| c.parse().ok())
                .map(|c| Concept::Linear { c }),
        }
    }
}

/// Generative law of one source: `x ~ N(mean, scale² I)`,
/// `y = f(x) + noise · z` followed by the concept's row-wise modification.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceSpec {
    pub mean: Vec<f64>,
    pub scale: f64,
    pub concept: Concept,
    pub noise: f64,
}

/// Shared base function of the synthetic family.
pub fn base_function(x: ArrayView1<'_, f64>) -> f64 {
    x[0].sin() + if x.len() > 1 { 0.5 * x[1] } else { 0.0 }
}

impl SourceSpec {
    /// Noiseless regression function of this source. The row-wise
    /// modifications are symmetric in ξ, so they leave it at the base.
    pub fn truth(&self, x: ArrayView1<'_, f64>) -> f64 {
        match self.concept {
            Concept::Linear { c } => base_function(x) + c * x[0],
            _ => base_function(x),
        }
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> (Vec<f64>, f64) {
        let x: Vec<f64> = self
            .mean
            .iter()
            .map(|m| {
                let z: f64 = StandardNormal.sample(rng);
                m + self.scale * z
            })
            .collect();
        let z: f64 = StandardNormal.sample(rng);
        let mut y = self.truth(ArrayView1::from(&x)) + self.noise * z;
        let mut xi = || -> f64 {
            let z: f64 = StandardNormal.sample(rng);
            XI_SD * z
        };
        match self.concept {
            Concept::Linear { .. } => {}
            Concept::ScaledNoise => y += y / 1000.0 * xi(),
            Concept::RatioNoise => {
                let v = xi();
                y += y / v.abs().max(XI_CLAMP).copysign(v);
            }
            Concept::AdditiveNoise => y += xi(),
        }
        (x, y)
    }

    /// Marginal feature density `N(mean, scale² I)` at `x`.
    pub fn feature_density(&self, x: &[f64]) -> f64 {
        let d = self.mean.len() as f64;
        let s2 = self.scale * self.scale;
        let sq: f64 = x.iter().zip(&self.mean).map(|(a, m)| (a - m) * (a - m)).sum();
        (-0.5 * sq / s2).exp() / (2.0 * std::f64::consts::PI * s2).powf(d / 2.0)
    }
}

/// A synthetic multi-source task.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTask {
    pub d: usize,
    pub sources: Vec<SourceSpec>,
    pub seed: u64,
}

/// Knobs of the default joint-shift family.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftKnobs {
    pub k: usize,
    pub d: usize,
    /// Radius of the circle holding the source feature means.
    pub r_cov: f64,
    /// Per-source concept coefficients `c_i`; cycled if shorter than `k`.
    pub concept: Vec<f64>,
    /// Per-source noise scales; cycled if shorter than `k`.
    pub noise: Vec<f64>,
    pub scale: f64,
}

impl Default for ShiftKnobs {
    fn default() -> Self {
        Self {
            k: 3,
            d: 2,
            r_cov: 0.5,
            concept: vec![-1.0, 0.0, 1.0],
            noise: vec![0.1],
            scale: 1.0,
        }
    }
}

fn circle_mean(i: usize, k: usize, d: usize, r: f64) -> Vec<f64> {
    let mut m = vec![0.0; d];
    if d == 1 {
        m[0] = if k > 1 {
            -r + 2.0 * r * i as f64 / (k - 1) as f64
        } else {
            0.0
        };
    } else {
        let theta = 2.0 * std::f64::consts::PI * i as f64 / k as f64;
        m[0] = r * theta.cos();
        m[1] = r * theta.sin();
    }
    m
}

impl SyntheticTask {
    /// Source means on a circle of radius `r_cov`, linear concept shifts.
    pub fn joint_shift(knobs: &ShiftKnobs, seed: u64) -> Result<Self> {
        if knobs.concept.is_empty() || knobs.noise.is_empty() {
            return Err(Error::domain("concept and noise lists must be nonempty"));
        }
        let sources = (0..knobs.k)
            .map(|i| SourceSpec {
                mean: circle_mean(i, knobs.k, knobs.d, knobs.r_cov),
                scale: knobs.scale,
                concept: Concept::Linear {
                    c: knobs.concept[i % knobs.concept.len()],
                },
                noise: knobs.noise[i % knobs.noise.len()],
            })
            .collect();
        let task = Self {
            d: knobs.d,
            sources,
            seed,
        };
        task.validate()?;
        Ok(task)
    }

    /// `k` copies of one law: no shift of any kind.
    pub fn iid(k: usize, d: usize, noise: f64, seed: u64) -> Result<Self> {
        Self::joint_shift(
            &ShiftKnobs {
                k,
                d,
                r_cov: 0.0,
                concept: vec![0.0],
                noise: vec![noise],
                scale: 1.0,
            },
            seed,
        )
    }

    /// Three sources with the row-wise modifications (scaled, ratio,
    /// additive), means on a circle of radius `r_cov`.
    pub fn row_noise(d: usize, r_cov: f64, noise: f64, seed: u64) -> Result<Self> {
        let concepts = [Concept::ScaledNoise, Concept::RatioNoise, Concept::AdditiveNoise];
        let sources = concepts
            .iter()
            .enumerate()
            .map(|(i, &concept)| SourceSpec {
                mean: circle_mean(i, 3, d, r_cov),
                scale: 1.0,
                concept,
                noise,
            })
            .collect();
        let task = Self { d, sources, seed };
        task.validate()?;
        Ok(task)
    }

    pub fn k(&self) -> usize {
        self.sources.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.sources.len() < 2 {
            return Err(Error::domain(format!(
                "a synthetic task needs k >= 2 sources, got {}",
                self.sources.len()
            )));
        }
        if self.d == 0 {
            return Err(Error::domain("feature dimension must be at least 1"));
        }
        for (i, s) in self.sources.iter().enumerate() {
            if s.mean.len() != self.d {
                return Err(Error::domain(format!("source {i}: mean has wrong dimension")));
            }
            if !(s.noise >= 0.0 && s.noise.is_finite()) {
                return Err(Error::domain(format!("source {i}: noise scale must be >= 0")));
            }
            if !(s.scale > 0.0 && s.scale.is_finite()) {
                return Err(Error::domain(format!("source {i}: feature scale must be > 0")));
            }
        }
        Ok(())
    }

    /// `n` fresh rows from source `i`.
    pub fn draw_source(&self, i: usize, n: usize, rng: &mut impl Rng) -> Samples {
        let spec = &self.sources[i];
        let rows = (0..n)
            .map(|_| {
                let (x, y) = spec.draw(rng);
                (x, y, i)
            })
            .collect();
        Samples::from_rows(self.d, rows)
    }

    /// Oracle feature density of the mixture with the given weights.
    pub fn mixture_feature_density(&self, weights: &[f64], x: &[f64]) -> f64 {
        self.sources
            .iter()
            .zip(weights)
            .map(|(s, w)| w * s.feature_density(x))
            .sum()
    }

    fn to_meta(&self, meta: &mut BTreeMap<String, String>) {
        meta.insert("task.d".into(), self.d.to_string());
        meta.insert("task.k".into(), self.k().to_string());
        meta.insert("task.seed".into(), self.seed.to_string());
        for (i, s) in self.sources.iter().enumerate() {
            let mean: Vec<String> = s.mean.iter().map(|m| m.to_string()).collect();
            meta.insert(format!("task.source{i}.mean"), mean.join(" "));
            meta.insert(format!("task.source{i}.scale"), s.scale.to_string());
            meta.insert(format!("task.source{i}.concept"), s.concept.tag());
            meta.insert(format!("task.source{i}.noise"), s.noise.to_string());
        }
    }

    fn from_meta(meta: &BTreeMap<String, String>) -> Option<Self> {
        let d = meta.get("task.d")?.parse().ok()?;
        let k: usize = meta.get("task.k")?.parse().ok()?;
        let seed = meta.get("task.seed")?.parse().ok()?;
        let sources = (0..k)
            .map(|i| {
                let get = |f: &str| meta.get(&format!("task.source{i}.{f}"));
                Some(SourceSpec {
                    mean: get("mean")?
                        .split_whitespace()
                        .map(|v| v.parse().ok())
                        .collect::<Option<_>>()?,
                    scale: get("scale")?.parse().ok()?,
                    concept: Concept::parse(get("concept")?)?,
                    noise: get("noise")?.parse().ok()?,
                })
            })
            .collect::<Option<_>>()?;
        Some(Self { d, sources, seed })
    }
}

/// A test set with the mixture weights it was drawn from.
#[derive(Debug, Clone, PartialEq)]
pub struct TestSet {
    pub weights: Vec<f64>,
    pub samples: Samples,
}

/// Where fresh rows of a source come from.
#[derive(Debug, Clone, PartialEq)]
pub enum SourceLaw {
    Synthetic(SyntheticTask),
    /// Per-source pools resampled with replacement.
    Empirical(Vec<Samples>),
}

/// Training sources, pooled calibration set and mixture test sets.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetBundle {
    pub sources: Vec<Samples>,
    pub calibration: Samples,
    pub tests: Vec<TestSet>,
    pub law: Option<SourceLaw>,
    pub seed: u64,
}

impl DatasetBundle {
    pub fn k(&self) -> usize {
        self.sources.len()
    }

    pub fn dim(&self) -> usize {
        self.calibration.dim()
    }

    pub fn task(&self) -> Option<&SyntheticTask> {
        match &self.law {
            Some(SourceLaw::Synthetic(t)) => Some(t),
            _ => None,
        }
    }
}

/// Mixture weights for [`make_mixture_test`].
#[derive(Debug, Clone, PartialEq)]
pub enum MixtureWeights {
    Explicit(Vec<f64>),
    /// Uniform on the simplex.
    Random,
}

/// Uniform draw from the `k`-simplex (normalized exponentials).
pub fn random_simplex(k: usize, rng: &mut impl Rng) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| Exp1.sample(rng)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|r| r / total).collect()
}

fn check_simplex(w: &[f64], k: usize) -> Result<()> {
    if w.len() != k {
        return Err(Error::domain(format!("{} mixture weights for {k} sources", w.len())));
    }
    if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::domain("mixture weights must be finite and nonnegative"));
    }
    if (w.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::domain("mixture weights must sum to 1"));
    }
    Ok(())
}

/// `m` rows from the mixture `Σ w_i D^(i)`: each row picks a source by the
/// weights, then draws fresh from that source's law.
pub fn make_mixture_test(
    law: &SourceLaw,
    weights: &MixtureWeights,
    m: usize,
    seed: u64,
) -> Result<TestSet> {
    let k = match law {
        SourceLaw::Synthetic(t) => t.k(),
        SourceLaw::Empirical(p) => p.len(),
    };
    if m == 0 {
        return Err(Error::domain("test size must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = match weights {
        MixtureWeights::Explicit(w) => {
            check_simplex(w, k)?;
            w.clone()
        }
        MixtureWeights::Random => random_simplex(k, &mut rng),
    };
    let picker = WeightedIndex::new(&w).map_err(|e| Error::domain(e.to_string()))?;
    let rows: Vec<_> = (0..m)
        .map(|_| {
            let i = picker.sample(&mut rng);
            match law {
                SourceLaw::Synthetic(t) => {
                    let (x, y) = t.sources[i].draw(&mut rng);
                    (x, y, i)
                }
                SourceLaw::Empirical(pools) => {
                    let r = rng.random_range(0..pools[i].len());
                    pools[i].row(r)
                }
            }
        })
        .collect();
    let d = match law {
        SourceLaw::Synthetic(t) => t.d,
        SourceLaw::Empirical(p) => p[0].dim(),
    };
    Ok(TestSet {
        weights: w,
        samples: Samples::from_rows(d, rows),
    })
}

/// Sizes of a synthetic bundle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BundleSizes {
    pub n_per_source: usize,
    pub n_cal: usize,
    pub n_test_sets: usize,
    pub m_per_test: usize,
}

/// Draws training sources, an equal-share pooled calibration set and random
/// mixture test sets. Every part uses its own derived seed.
pub fn gen_synthetic(task: &SyntheticTask, sizes: BundleSizes) -> Result<DatasetBundle> {
    task.validate()?;
    if sizes.n_per_source == 0 || sizes.n_cal == 0 || sizes.m_per_test == 0 {
        return Err(Error::domain("sample sizes must be at least 1"));
    }
    let k = task.k();
    let sources = (0..k)
        .map(|i| task.draw_source(i, sizes.n_per_source, &mut rng_for(task.seed, &[1, i as u64])))
        .collect();
    let parts: Vec<Samples> = (0..k)
        .map(|i| {
            let share = sizes.n_cal / k + usize::from(i < sizes.n_cal % k);
            task.draw_source(i, share, &mut rng_for(task.seed, &[2, i as u64]))
        })
        .collect();
    let calibration = Samples::concat(&parts.iter().collect::<Vec<_>>())?;
    let law = SourceLaw::Synthetic(task.clone());
    let tests = (0..sizes.n_test_sets)
        .map(|j| {
            make_mixture_test(
                &law,
                &MixtureWeights::Random,
                sizes.m_per_test,
                derive_seed(task.seed, &[3, j as u64]),
            )
        })
        .collect::<Result<_>>()?;
    Ok(DatasetBundle {
        sources,
        calibration,
        tests,
        law: Some(law),
        seed: task.seed,
    })
}

/// How a source-labelled table is split into a bundle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CsvSplit {
    /// Share of each source used for training (sampled without replacement).
    pub train_frac: f64,
    /// Share of the remainder used for calibration; the rest is for testing.
    pub cal_frac: f64,
    pub n_test_sets: usize,
    pub m_per_test: usize,
    pub seed: u64,
}

impl Default for CsvSplit {
    fn default() -> Self {
        Self {
            train_frac: 0.5,
            cal_frac: 0.5,
            n_test_sets: 30,
            m_per_test: 200,
            seed: 0,
        }
    }
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

/// Reads a numeric CSV whose header must equal `expected` (when given) and
/// returns the header and rows. Line numbers in errors are 1-based.
fn read_table(path: &Path, expected: Option<&[String]>) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut records = reader.records();
    let header: Vec<String> = match records.next() {
        None => return Err(parse_err(path, 1, "file is empty")),
        Some(r) => r
            .map_err(|e| parse_err(path, 1, e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect(),
    };
    if let Some(exp) = expected {
        if header != exp {
            return Err(parse_err(
                path,
                1,
                format!("expected header {}, found {}", exp.join(","), header.join(",")),
            ));
        }
    }
    let mut rows = Vec::new();
    for rec in records {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_err(path, line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != header.len() {
            return Err(parse_err(
                path,
                line,
                format!("expected {} fields, found {}", header.len(), rec.len()),
            ));
        }
        let row = rec
            .iter()
            .zip(&header)
            .map(|(v, col)| {
                v.parse::<f64>()
                    .ok()
                    .filter(|f| f.is_finite() || v == "inf")
                    .ok_or_else(|| parse_err(path, line, format!("column {col}: '{v}' is not a number")))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}

fn feature_header(d: usize) -> Vec<String> {
    (1..=d).map(|j| format!("x_{j}")).collect()
}

/// Loads `source_id,x_1,..,x_d,y` rows and splits each source into training,
/// calibration and test parts. Calibration parts are pooled; test sets mix
/// the test parts with replacement under random simplex weights. Source ids
/// are mapped to `0..k` in ascending order.
pub fn load_csv(path: &Path, split: &CsvSplit) -> Result<DatasetBundle> {
    if !(0.0..=1.0).contains(&split.train_frac) || !(0.0..=1.0).contains(&split.cal_frac) {
        return Err(Error::domain("split fractions must lie in [0, 1]"));
    }
    let (header, rows) = read_table(path, None)?;
    let d = header.len().saturating_sub(2);
    let mut expected = vec!["source_id".to_string()];
    expected.extend(feature_header(d));
    expected.push("y".into());
    if d == 0 || header != expected {
        return Err(parse_err(
            path,
            1,
            format!("header must be source_id,x_1..x_d,y; found {}", header.join(",")),
        ));
    }
    if rows.is_empty() {
        return Err(parse_err(path, 2, "no data rows"));
    }
    let mut groups: BTreeMap<i64, Vec<(Vec<f64>, f64)>> = BTreeMap::new();
    for (r, row) in rows.iter().enumerate() {
        let id = row[0];
        if id.fract() != 0.0 {
            return Err(parse_err(path, r + 2, format!("source_id {id} is not an integer")));
        }
        groups
            .entry(id as i64)
            .or_default()
            .push((row[1..=d].to_vec(), row[d + 1]));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(split.seed, &[4]));
    let (mut sources, mut cal_parts, mut pools) = (Vec::new(), Vec::new(), Vec::new());
    for (i, (_, mut members)) in groups.into_iter().enumerate() {
        members.shuffle(&mut rng);
        let n = members.len();
        let n_train = ((split.train_frac * n as f64).round() as usize).min(n);
        let rest = n - n_train;
        let n_cal = ((split.cal_frac * rest as f64).round() as usize).min(rest);
        let to_rows = |s: &[(Vec<f64>, f64)]| {
            Samples::from_rows(d, s.iter().map(|(x, y)| (x.clone(), *y, i)).collect())
        };
        sources.push(to_rows(&members[..n_train]));
        cal_parts.push(to_rows(&members[n_train..n_train + n_cal]));
        pools.push(to_rows(&members[n_train + n_cal..]));
    }
    let calibration = Samples::concat(&cal_parts.iter().collect::<Vec<_>>())?;
    let tests = if pools.iter().all(|p| !p.is_empty()) {
        let law = SourceLaw::Empirical(pools.clone());
        (0..split.n_test_sets)
            .map(|j| {
                make_mixture_test(
                    &law,
                    &MixtureWeights::Random,
                    split.m_per_test,
                    derive_seed(split.seed, &[5, j as u64]),
                )
            })
            .collect::<Result<_>>()?
    } else {
        Vec::new()
    };
    Ok(DatasetBundle {
        sources,
        calibration,
        tests,
        law: Some(SourceLaw::Empirical(pools)),
        seed: split.seed,
    })
}

fn write_samples(path: &Path, s: &Samples, with_source: bool) -> Result<()> {
    let mut out = String::new();
    let mut header = Vec::new();
    if with_source {
        header.push("source_id".to_string());
    }
    header.extend(feature_header(s.dim()));
    header.push("y".into());
    out.push_str(&header.join(","));
    out.push('\n');
    for i in 0..s.len() {
        if with_source {
            let _ = write!(out, "{},", s.source[i]);
        }
        for v in s.x.row(i) {
            let _ = write!(out, "{v},");
        }
        let _ = writeln!(out, "{}", s.y[i]);
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn read_samples(path: &Path, d: usize, fixed_source: Option<usize>) -> Result<Samples> {
    let mut header = Vec::new();
    if fixed_source.is_none() {
        header.push("source_id".to_string());
    }
    header.extend(feature_header(d));
    header.push("y".into());
    let (_, rows) = read_table(path, Some(&header))?;
    let off = usize::from(fixed_source.is_none());
    let rows = rows
        .into_iter()
        .map(|r| {
            let src = fixed_source.unwrap_or(r[0] as usize);
            (r[off..off + d].to_vec(), r[off + d], src)
        })
        .collect();
    Ok(Samples::from_rows(d, rows))
}

/// Parses flat `key=value` text; blank lines and `#` comments are skipped.
pub fn parse_key_values(path: &Path, text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| parse_err(path, n + 1, "expected key=value"))?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

/// Writes the bundle as `sources/source_<i>.csv`, `calibration.csv`,
/// `tests/test_<j>.csv`, `tests/test_<j>.weights` and `meta.txt`.
pub fn save_bundle(bundle: &DatasetBundle, dir: &Path) -> Result<()> {
    let mk = |p: PathBuf| fs::create_dir_all(&p).map_err(|e| Error::io(&p, e));
    mk(dir.join("sources"))?;
    mk(dir.join("tests"))?;
    for (i, s) in bundle.sources.iter().enumerate() {
        write_samples(&dir.join(format!("sources/source_{i}.csv")), s, false)?;
    }
    write_samples(&dir.join("calibration.csv"), &bundle.calibration, true)?;
    for (j, t) in bundle.tests.iter().enumerate() {
        write_samples(&dir.join(format!("tests/test_{j}.csv")), &t.samples, true)?;
        let w: Vec<String> = t.weights.iter().map(|v| v.to_string()).collect();
        let p = dir.join(format!("tests/test_{j}.weights"));
        fs::write(&p, w.join(",") + "\n").map_err(|e| Error::io(&p, e))?;
    }
    let mut meta = BTreeMap::new();
    meta.insert("k".to_string(), bundle.k().to_string());
    meta.insert("d".to_string(), bundle.dim().to_string());
    meta.insert("seed".to_string(), bundle.seed.to_string());
    meta.insert("n_tests".to_string(), bundle.tests.len().to_string());
    if let Some(task) = bundle.task() {
        task.to_meta(&mut meta);
    }
    let text: String = meta.iter().map(|(k, v)| format!("{k}={v}\n")).collect();
    let p = dir.join("meta.txt");
    fs::write(&p, text).map_err(|e| Error::io(&p, e))
}

/// Inverse of [`save_bundle`]. The generative law is restored for synthetic
/// bundles; otherwise it is left empty.
pub fn load_bundle(dir: &Path) -> Result<DatasetBundle> {
    let meta_path = dir.join("meta.txt");
    let text = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let meta = parse_key_values(&meta_path, &text)?;
    let get = |key: &str| -> Result<usize> {
        meta.get(key)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| parse_err(&meta_path, 0, format!("missing or invalid '{key}'")))
    };
    let (k, d, n_tests) = (get("k")?, get("d")?, get("n_tests")?);
    let seed = meta
        .get("seed")
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| parse_err(&meta_path, 0, "missing or invalid 'seed'"))?;
    let sources = (0..k)
        .map(|i| read_samples(&dir.join(format!("sources/source_{i}.csv")), d, Some(i)))
        .collect::<Result<_>>()?;
    let calibration = read_samples(&dir.join("calibration.csv"), d, None)?;
    let tests = (0..n_tests)
        .map(|j| {
            let samples = read_samples(&dir.join(format!("tests/test_{j}.csv")), d, None)?;
            let p = dir.join(format!("tests/test_{j}.weights"));
            let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
            let weights = text
                .trim()
                .split(',')
                .map(|v| v.trim().parse::<f64>().map_err(|e| parse_err(&p, 1, e.to_string())))
                .collect::<Result<Vec<_>>>()?;
            check_simplex(&weights, k).map_err(|e| parse_err(&p, 1, e.to_string()))?;
            Ok(TestSet { weights, samples })
        })
        .collect::<Result<_>>()?;
    let law = SyntheticTask::from_meta(&meta).map(SourceLaw::Synthetic);
    Ok(DatasetBundle {
        sources,
        calibration,
        tests,
        law,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sizes(n: usize, cal: usize, tests: usize, m: usize) -> BundleSizes {
        BundleSizes {
            n_per_source: n,
            n_cal: cal,
            n_test_sets: tests,
            m_per_test: m,
        }
    }

    /// Two-sample Kolmogorov-Smirnov statistic, computed by brute force.
    fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .chain(b)
            .map(|&t| {
                let fa = a.iter().filter(|&&v| v <= t).count() as f64 / a.len() as f64;
                let fb = b.iter().filter(|&&v| v <= t).count() as f64 / b.len() as f64;
                (fa - fb).abs()
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn seed_derivation_separates_streams() {
        assert_ne!(derive_seed(1, &[0]), derive_seed(1, &[1]));
        assert_ne!(derive_seed(1, &[0, 1]), derive_seed(1, &[1, 0]));
        assert_eq!(derive_seed(9, &[3, 4]), derive_seed(9, &[3, 4]));
    }

    #[test]
    fn identical_sources_pass_two_sample_test() {
        let task = SyntheticTask::iid(3, 2, 0.1, 11).unwrap();
        let b = gen_synthetic(&task, sizes(400, 30, 1, 10)).unwrap();
        // 1% critical value: 1.628 · sqrt((n + m) / (n m))
        let crit = 1.628 * (2.0 / 400.0f64).sqrt();
        for i in 0..3 {
            for j in (i + 1)..3 {
                let ks = ks_statistic(&b.sources[i].y, &b.sources[j].y);
                assert!(ks < crit, "sources {i},{j}: {ks} >= {crit}");
            }
        }
    }

    #[test]
    fn noiseless_targets_equal_truth() {
        let knobs = ShiftKnobs {
            noise: vec![0.0],
            ..ShiftKnobs::default()
        };
        let task = SyntheticTask::joint_shift(&knobs, 3).unwrap();
        let b = gen_synthetic(&task, sizes(50, 30, 2, 20)).unwrap();
        for (i, s) in b.sources.iter().enumerate() {
            for r in 0..s.len() {
                assert_eq!(s.y[r], task.sources[i].truth(s.x.row(r)));
            }
        }
    }

    #[test]
    fn row_modifications_separate_source_means() {
        let task = SyntheticTask::row_noise(2, 1.5, 0.1, 5).unwrap();
        let b = gen_synthetic(&task, sizes(3000, 30, 1, 10)).unwrap();
        let stats: Vec<(f64, f64)> = b
            .sources
            .iter()
            .map(|s| {
                let n = s.len() as f64;
                let m = s.y.iter().sum::<f64>() / n;
                let var = s.y.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0);
                (m, var / n)
            })
            .collect();
        for i in 0..3 {
            for j in (i + 1)..3 {
                let se = (stats[i].1 + stats[j].1).sqrt();
                assert!((stats[i].0 - stats[j].0).abs() > 3.0 * se, "{i},{j}: {stats:?}");
            }
        }
    }

    #[test]
    fn one_hot_mixture_uses_one_source() {
        let task = SyntheticTask::joint_shift(&ShiftKnobs::default(), 1).unwrap();
        let law = SourceLaw::Synthetic(task);
        let t = make_mixture_test(&law, &MixtureWeights::Explicit(vec![0.0, 1.0, 0.0]), 200, 4)
            .unwrap();
        assert!(t.samples.source.iter().all(|&s| s == 1));
        assert!(make_mixture_test(&law, &MixtureWeights::Explicit(vec![0.5, 0.6, 0.0]), 5, 4).is_err());
    }

    #[test]
    fn uniform_mixture_proportions() {
        let task = SyntheticTask::joint_shift(&ShiftKnobs::default(), 1).unwrap();
        let law = SourceLaw::Synthetic(task);
        let w = MixtureWeights::Explicit(vec![1.0 / 3.0; 3]);
        let t = make_mixture_test(&law, &w, 20_000, 8).unwrap();
        for i in 0..3 {
            let p = t.samples.source.iter().filter(|&&s| s == i).count() as f64 / 20_000.0;
            assert!((p - 1.0 / 3.0).abs() < 0.02, "{i}: {p}");
        }
    }

    #[test]
    fn different_seeds_same_marginals() {
        let task = SyntheticTask::joint_shift(&ShiftKnobs::default(), 1).unwrap();
        let law = SourceLaw::Synthetic(task);
        let w = MixtureWeights::Explicit(vec![0.2, 0.3, 0.5]);
        let a = make_mixture_test(&law, &w, 4000, 1).unwrap();
        let b = make_mixture_test(&law, &w, 4000, 2).unwrap();
        assert_ne!(a.samples.y, b.samples.y);
        let crit = 1.628 * (2.0 / 4000.0f64).sqrt();
        assert!(ks_statistic(&a.samples.y, &b.samples.y) < crit);
    }

    #[test]
    fn residuals_match_noise_scale() {
        let task = SyntheticTask::joint_shift(&ShiftKnobs::default(), 21).unwrap();
        let b = gen_synthetic(&task, sizes(4000, 30, 1, 10)).unwrap();
        for (i, s) in b.sources.iter().enumerate() {
            let eps = task.sources[i].noise;
            let z: Vec<f64> = (0..s.len())
                .map(|r| (s.y[r] - task.sources[i].truth(s.x.row(r))) / eps)
                .collect();
            let n = z.len() as f64;
            let mean = z.iter().sum::<f64>() / n;
            let var = z.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
            assert!(mean.abs() < 3.0 / n.sqrt(), "{mean}");
            assert!((var - 1.0).abs() < 3.0 * (2.0 / n).sqrt(), "{var}");
        }
    }

    #[test]
    fn calibration_pools_sources_equally() {
        let task = SyntheticTask::joint_shift(&ShiftKnobs::default(), 2).unwrap();
        let b = gen_synthetic(&task, sizes(10, 100, 1, 10)).unwrap();
        let counts: Vec<usize> = (0..3)
            .map(|i| b.calibration.source.iter().filter(|&&s| s == i).count())
            .collect();
        assert_eq!(counts, vec![34, 33, 33]);
        for t in &b.tests {
            assert!((t.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn refuses_single_source_task() {
        let knobs = ShiftKnobs {
            k: 1,
            ..ShiftKnobs::default()
        };
        assert!(SyntheticTask::joint_shift(&knobs, 0).is_err());
    }

    #[test]
    fn same_seed_same_bundle_bytes() {
        let task = SyntheticTask::joint_shift(&ShiftKnobs::default(), 17).unwrap();
        let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
        for d in &dirs {
            let b = gen_synthetic(&task, sizes(20, 15, 3, 12)).unwrap();
            save_bundle(&b, d.path()).unwrap();
        }
        for f in ["calibration.csv", "meta.txt", "sources/source_2.csv", "tests/test_1.csv", "tests/test_1.weights"] {
            let a = fs::read(dirs[0].path().join(f)).unwrap();
            let b = fs::read(dirs[1].path().join(f)).unwrap();
            assert_eq!(a, b, "{f}");
        }
    }

    #[test]
    fn bundle_round_trip() {
        let task = SyntheticTask::row_noise(2, 1.0, 0.2, 3).unwrap();
        let b = gen_synthetic(&task, sizes(20, 15, 3, 12)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_bundle(&b, dir.path()).unwrap();
        assert_eq!(load_bundle(dir.path()).unwrap(), b);
    }

    #[test]
    fn hand_built_csv_groups_by_source() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("data.csv");
        fs::write(&p, "source_id,x_1,y\n7,0.5,1.0\n3,1.5,2.0\n7,2.5,3.0\n3,3.5,4.0\n").unwrap();
        let split = CsvSplit {
            train_frac: 0.5,
            cal_frac: 1.0,
            n_test_sets: 0,
            ..CsvSplit::default()
        };
        let b = load_csv(&p, &split).unwrap();
        assert_eq!(b.k(), 2);
        // source id 3 maps to 0, id 7 to 1; one training and one calibration row each
        let mut train0 = b.sources[0].y.clone();
        train0.extend(b.calibration.of_source(0).y);
        train0.sort_by(f64::total_cmp);
        assert_eq!(train0, vec![2.0, 4.0]);
        let mut train1 = b.sources[1].y.clone();
        train1.extend(b.calibration.of_source(1).y);
        train1.sort_by(f64::total_cmp);
        assert_eq!(train1, vec![1.0, 3.0]);
        assert_eq!(b.sources[0].len(), 1);
        assert_eq!(b.calibration.len(), 2);
        for r in 0..b.sources[1].len() {
            assert_eq!(b.sources[1].x[[r, 0]] + 0.5, b.sources[1].y[r]);
        }
    }

    #[test]
    fn csv_errors_carry_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.csv");
        fs::write(&p, "").unwrap();
        assert!(matches!(load_csv(&p, &CsvSplit::default()), Err(Error::Parse { line: 1, .. })));
        fs::write(&p, "source_id,x_1,y\n0,1,2\n0,abc,2\n").unwrap();
        match load_csv(&p, &CsvSplit::default()) {
            Err(Error::Parse { line, msg, .. }) => {
                assert_eq!(line, 3);
                assert!(msg.contains("x_1"), "{msg}");
            }
            other => panic!("{other:?}"),
        }
        fs::write(&p, "source_id,x_1,y\n0,1\n").unwrap();
        assert!(matches!(load_csv(&p, &CsvSplit::default()), Err(Error::Parse { line: 2, .. })));
        fs::write(&p, "source_id,y\n0,1\n").unwrap();
        assert!(matches!(load_csv(&p, &CsvSplit::default()), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn single_source_csv() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("one.csv");
        let body: String = (0..20).map(|i| format!("4,{i},{}\n", 2 * i)).collect();
        fs::write(&p, format!("source_id,x_1,y\n{body}")).unwrap();
        let b = load_csv(&p, &CsvSplit::default()).unwrap();
        assert_eq!(b.k(), 1);
        assert!(b.tests.iter().all(|t| t.weights == vec![1.0]));
    }
}
