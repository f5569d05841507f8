//! One-dimensional distributions over conformal scores and the distances
//! between them.
//!
//! Two carriers are provided: [`EmpiricalDist`], a weighted set of point
//! masses (the form every score sample takes), and [`PiecewiseUniformDist`],
//! an analytic density that is constant between breakpoints. Both expose a
//! CDF through [`UnivariateCdf`], which is all the generic distances need.
//!
//! Empirical CDFs are right-continuous step functions. Between two
//! consecutive knots of either carrier the CDF is affine, so the area between
//! two CDFs and the supremum of their difference can be computed exactly from
//! knot values and left limits.

use itertools::Itertools;

use crate::error::{Error, Result};

/// Tolerance used when comparing accumulated probabilities against a level.
const CUM_TOL: f64 = 1e-12;

/// Access to a univariate CDF that is affine between consecutive knots.
pub trait UnivariateCdf {
    /// Right-continuous CDF `F(v) = P(V <= v)`.
    fn cdf(&self, v: f64) -> f64;

    /// Left limit `F(v-) = P(V < v)`.
    fn cdf_left(&self, v: f64) -> f64;

    /// Ascending, deduplicated points outside of which the CDF is affine.
    fn knots(&self) -> Vec<f64>;

    fn as_empirical(&self) -> Option<&EmpiricalDist> {
        None
    }
}

/// Weighted point-mass distribution on the real line.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalDist {
    values: Vec<f64>,
    weights: Vec<f64>,
    /// Permutation that sorts `values` ascending (stable).
    order: Vec<usize>,
    sorted: Vec<f64>,
    /// Cumulative weight along `order`; the last entry is exactly 1.
    cum: Vec<f64>,
}

impl EmpiricalDist {
    /// Builds a distribution from values and nonnegative weights. Weights are
    /// normalized to sum to one.
    pub fn new(values: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::domain("empirical distribution needs at least one value"));
        }
        if values.len() != weights.len() {
            return Err(Error::domain(format!(
                "{} values but {} weights",
                values.len(),
                weights.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("support value {v}")));
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(Error::domain(format!("weight {w} is not a finite nonnegative number")));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::domain("weights sum to zero"));
        }
        let weights: Vec<f64> = weights.iter().map(|w| w / total).collect();

        let mut order: Vec<usize> = (0..values.len()).collect();
        order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
        let sorted: Vec<f64> = order.iter().map(|&i| values[i]).collect();
        let mut cum = Vec::with_capacity(order.len());
        let mut acc = 0.0;
        for &i in &order {
            acc += weights[i];
            cum.push(acc);
        }
        *cum.last_mut().unwrap() = 1.0;

        Ok(Self {
            values,
            weights,
            order,
            sorted,
            cum,
        })
    }

    pub fn uniform(values: Vec<f64>) -> Result<Self> {
        let n = values.len();
        Self::new(values, vec![1.0; n])
    }

    pub fn point_mass(v: f64) -> Result<Self> {
        Self::new(vec![v], vec![1.0])
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Support values in construction order.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Normalized weights in construction order.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Support values in ascending order.
    pub fn sorted_values(&self) -> &[f64] {
        &self.sorted
    }

    /// Weights co-permuted with [`Self::sorted_values`].
    pub fn sorted_weights(&self) -> Vec<f64> {
        self.order.iter().map(|&i| self.weights[i]).collect()
    }

    /// Indices into the construction order, ascending by value.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn min(&self) -> f64 {
        self.sorted[0]
    }

    pub fn max(&self) -> f64 {
        *self.sorted.last().unwrap()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().zip(&self.weights).map(|(v, w)| v * w).sum()
    }

    /// True when all weights agree to within `1e-12` of `1/n`.
    pub fn is_uniform(&self) -> bool {
        let u = 1.0 / self.len() as f64;
        self.weights.iter().all(|w| (w - u).abs() <= 1e-12)
    }

    /// Generalized inverse `inf { v : F(v) >= p }` over the support.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::domain(format!("quantile level {p} outside (0, 1]")));
        }
        let idx = self.cum.partition_point(|&c| c < p - CUM_TOL);
        Ok(self.sorted[idx.min(self.sorted.len() - 1)])
    }

    /// Pushforward of this distribution through `f`; weights are carried over.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.values.iter().map(|&v| f(v)).collect(), self.weights.clone())
    }

    /// Same weights with every value multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        self.map(|v| v * factor)
    }
}

impl UnivariateCdf for EmpiricalDist {
    fn cdf(&self, v: f64) -> f64 {
        let idx = self.sorted.partition_point(|&x| x <= v);
        match idx {
            0 => 0.0,
            i if i == self.sorted.len() => 1.0,
            i => self.cum[i - 1],
        }
    }

    fn cdf_left(&self, v: f64) -> f64 {
        let idx = self.sorted.partition_point(|&x| x < v);
        match idx {
            0 => 0.0,
            i if i == self.sorted.len() => 1.0,
            i => self.cum[i - 1],
        }
    }

    fn knots(&self) -> Vec<f64> {
        self.sorted.iter().copied().dedup().collect()
    }

    fn as_empirical(&self) -> Option<&EmpiricalDist> {
        Some(self)
    }
}

/// Density that is constant on each interval between ascending breakpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseUniformDist {
    breakpoints: Vec<f64>,
    densities: Vec<f64>,
    /// CDF value at each breakpoint.
    cum: Vec<f64>,
}

impl PiecewiseUniformDist {
    pub fn new(breakpoints: Vec<f64>, densities: Vec<f64>) -> Result<Self> {
        if breakpoints.len() < 2 || densities.len() + 1 != breakpoints.len() {
            return Err(Error::domain(format!(
                "{} breakpoints cannot carry {} densities",
                breakpoints.len(),
                densities.len()
            )));
        }
        if breakpoints.iter().any(|b| !b.is_finite()) {
            return Err(Error::NonFinite("breakpoint".into()));
        }
        if breakpoints.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::domain("breakpoints must be strictly ascending"));
        }
        if densities.iter().any(|d| !d.is_finite() || *d < 0.0) {
            return Err(Error::domain("densities must be finite and nonnegative"));
        }
        let mut cum = Vec::with_capacity(breakpoints.len());
        cum.push(0.0);
        for (i, d) in densities.iter().enumerate() {
            let prev = cum[i];
            cum.push(prev + d * (breakpoints[i + 1] - breakpoints[i]));
        }
        let total = *cum.last().unwrap();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::domain(format!("density integrates to {total}, not 1")));
        }
        *cum.last_mut().unwrap() = 1.0;
        Ok(Self {
            breakpoints,
            densities,
            cum,
        })
    }

    /// Uniform density on `[lo, hi]`.
    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo, hi], vec![1.0 / (hi - lo)])
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn densities(&self) -> &[f64] {
        &self.densities
    }

    /// Largest density value, i.e. the Lebesgue density bound.
    pub fn max_density(&self) -> f64 {
        self.densities.iter().copied().fold(0.0, f64::max)
    }

    /// Density at `v`; intervals are treated as half-open on the left.
    pub fn density_at(&self, v: f64) -> f64 {
        let first = self.breakpoints[0];
        let last = *self.breakpoints.last().unwrap();
        if v < first || v > last {
            return 0.0;
        }
        let idx = self.breakpoints.partition_point(|&b| b < v);
        self.densities[idx.saturating_sub(1).min(self.densities.len() - 1)]
    }

    /// Inverse CDF for `p` in `[0, 1]`.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::domain(format!("quantile level {p} outside [0, 1]")));
        }
        // first interval whose upper CDF value reaches p and that carries mass
        for i in 0..self.densities.len() {
            if self.cum[i + 1] >= p && self.densities[i] > 0.0 {
                let x = self.breakpoints[i] + (p - self.cum[i]).max(0.0) / self.densities[i];
                return Ok(x.min(self.breakpoints[i + 1]));
            }
        }
        Ok(*self.breakpoints.last().unwrap())
    }

    /// Deterministic `n`-point empirical approximation placing one point at
    /// the inverse CDF of the midpoint of each of `n` equal-probability strata.
    pub fn stratified_sample(&self, n: usize) -> Result<EmpiricalDist> {
        if n == 0 {
            return Err(Error::domain("sample size must be positive"));
        }
        let values = (0..n)
            .map(|i| self.quantile((i as f64 + 0.5) / n as f64))
            .collect::<Result<Vec<_>>>()?;
        EmpiricalDist::uniform(values)
    }
}

impl UnivariateCdf for PiecewiseUniformDist {
    fn cdf(&self, v: f64) -> f64 {
        let first = self.breakpoints[0];
        let last = *self.breakpoints.last().unwrap();
        if v <= first {
            return 0.0;
        }
        if v >= last {
            return 1.0;
        }
        let idx = self.breakpoints.partition_point(|&b| b <= v) - 1;
        self.cum[idx] + self.densities[idx] * (v - self.breakpoints[idx])
    }

    fn cdf_left(&self, v: f64) -> f64 {
        self.cdf(v)
    }

    fn knots(&self) -> Vec<f64> {
        self.breakpoints.clone()
    }
}

/// Shared bin edges with one probability vector per side.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub mass: Vec<f64>,
}

impl Histogram {
    pub fn new(edges: Vec<f64>, mass: Vec<f64>) -> Result<Self> {
        if edges.len() < 2 || edges.len() != mass.len() + 1 {
            return Err(Error::domain("histogram needs one more edge than bins"));
        }
        if edges.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::domain("histogram edges must ascend"));
        }
        if mass.iter().any(|m| !m.is_finite() || *m < 0.0) {
            return Err(Error::domain("bin masses must be finite and nonnegative"));
        }
        let total: f64 = mass.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::domain(format!("bin masses sum to {total}, not 1")));
        }
        Ok(Self { edges, mass })
    }

    /// Bins the weighted points of `dist` into `edges`; points outside the
    /// edge range are clamped into the first or last bin.
    pub fn from_dist(dist: &EmpiricalDist, edges: Vec<f64>) -> Result<Self> {
        let bins = edges.len().saturating_sub(1);
        if bins == 0 {
            return Err(Error::domain("histogram needs at least one bin"));
        }
        let mut mass = vec![0.0; bins];
        for (&v, &w) in dist.values().iter().zip(dist.weights()) {
            // bins are [e_i, e_{i+1}), the last one closed
            let idx = edges[1..bins].partition_point(|&e| e <= v);
            mass[idx] += w;
        }
        Self::new(edges, mass)
    }
}

/// Two histograms over identical bin edges.
#[derive(Debug, Clone, PartialEq)]
pub struct HistogramPair {
    a: Histogram,
    b: Histogram,
}

impl HistogramPair {
    pub fn new(a: Histogram, b: Histogram) -> Result<Self> {
        if a.edges != b.edges {
            return Err(Error::domain("histograms do not share bin edges"));
        }
        Ok(Self { a, b })
    }

    /// Equal-width histograms with `ceil(sqrt(min(n, m)))` bins over the
    /// merged range of both supports.
    pub fn from_dists(a: &EmpiricalDist, b: &EmpiricalDist) -> Result<Self> {
        let bins = (a.len().min(b.len()) as f64).sqrt().ceil().max(1.0) as usize;
        let lo = a.min().min(b.min());
        let hi = a.max().max(b.max());
        let edges: Vec<f64> = if hi > lo {
            let width = (hi - lo) / bins as f64;
            (0..=bins)
                .map(|i| if i == bins { hi } else { lo + width * i as f64 })
                .collect()
        } else {
            vec![lo, lo]
        };
        Self::new(
            Histogram::from_dist(a, edges.clone())?,
            Histogram::from_dist(b, edges)?,
        )
    }

    pub fn edges(&self) -> &[f64] {
        &self.a.edges
    }

    pub fn mass_a(&self) -> &[f64] {
        &self.a.mass
    }

    pub fn mass_b(&self) -> &[f64] {
        &self.b.mass
    }
}

/// Exact `∫ |F_a - F_b|` over the merged knot grid. Both CDFs are affine on
/// every cell, so each cell integral is closed form.
pub fn cdf_area<A, B>(a: &A, b: &B) -> f64
where
    A: UnivariateCdf + ?Sized,
    B: UnivariateCdf + ?Sized,
{
    let knots = merged_knots(a, b);
    let mut area = 0.0;
    for w in knots.windows(2) {
        let (p, q) = (w[0], w[1]);
        let d0 = a.cdf(p) - b.cdf(p);
        let d1 = a.cdf_left(q) - b.cdf_left(q);
        area += abs_linear_integral(d0, d1, q - p);
    }
    area
}

fn abs_linear_integral(d0: f64, d1: f64, len: f64) -> f64 {
    if d0 * d1 >= 0.0 {
        0.5 * len * (d0.abs() + d1.abs())
    } else {
        // the difference crosses zero inside the cell
        0.5 * len * (d0 * d0 + d1 * d1) / (d0.abs() + d1.abs())
    }
}

fn merged_knots<A, B>(a: &A, b: &B) -> Vec<f64>
where
    A: UnivariateCdf + ?Sized,
    B: UnivariateCdf + ?Sized,
{
    let mut knots = a.knots();
    knots.extend(b.knots());
    knots.sort_by(f64::total_cmp);
    knots.dedup();
    knots
}

/// One cell of the monotone (quantile) coupling between two empirical
/// distributions: `mass` units of probability move from `a.values()[a_idx]`
/// to `b.values()[b_idx]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplingCell {
    pub mass: f64,
    pub a_idx: usize,
    pub b_idx: usize,
}

/// Monotone coupling obtained by merging the cumulative-weight breakpoints of
/// both sorted supports. On the real line this coupling is optimal for the
/// absolute-distance cost.
pub fn quantile_coupling(a: &EmpiricalDist, b: &EmpiricalDist) -> Vec<CouplingCell> {
    let mut cells = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0usize, 0usize);
    let mut level = 0.0;
    while i < a.len() && j < b.len() {
        let next = a.cum[i].min(b.cum[j]);
        let mass = next - level;
        if mass > 0.0 {
            cells.push(CouplingCell {
                mass,
                a_idx: a.order[i],
                b_idx: b.order[j],
            });
        }
        level = level.max(next);
        if a.cum[i] <= next {
            i += 1;
        }
        if b.cum[j] <= next {
            j += 1;
        }
    }
    cells
}

/// First-order Wasserstein distance.
///
/// Two empirical inputs go through the quantile coupling; any other pairing
/// integrates the area between the CDFs exactly.
pub fn wasserstein1<A, B>(a: &A, b: &B) -> f64
where
    A: UnivariateCdf + ?Sized,
    B: UnivariateCdf + ?Sized,
{
    match (a.as_empirical(), b.as_empirical()) {
        (Some(ea), Some(eb)) => quantile_coupling(ea, eb)
            .iter()
            .map(|c| c.mass * (ea.values[c.a_idx] - eb.values[c.b_idx]).abs())
            .sum(),
        _ => cdf_area(a, b),
    }
}

/// Kolmogorov distance `sup_v |F_a(v) - F_b(v)|`, evaluated at every knot and
/// at its left limit.
pub fn kolmogorov<A, B>(a: &A, b: &B) -> f64
where
    A: UnivariateCdf + ?Sized,
    B: UnivariateCdf + ?Sized,
{
    merged_knots(a, b)
        .into_iter()
        .map(|k| {
            let right = (a.cdf(k) - b.cdf(k)).abs();
            let left = (a.cdf_left(k) - b.cdf_left(k)).abs();
            right.max(left)
        })
        .fold(0.0, f64::max)
}

/// Total variation distance between two binned distributions.
pub fn tv_distance(h: &HistogramPair) -> f64 {
    0.5 * h
        .mass_a()
        .iter()
        .zip(h.mass_b())
        .map(|(p, q)| (p - q).abs())
        .sum::<f64>()
}

/// Total variation distance `½ ∫ |p_a - p_b|` between two piecewise-uniform
/// densities.
pub fn tv_distance_piecewise(a: &PiecewiseUniformDist, b: &PiecewiseUniformDist) -> f64 {
    let knots = merged_knots(a, b);
    0.5 * knots
        .windows(2)
        .map(|w| {
            let mid = 0.5 * (w[0] + w[1]);
            (a.density_at(mid) - b.density_at(mid)).abs() * (w[1] - w[0])
        })
        .sum::<f64>()
}

/// Additive smoothing applied to both mass vectors before taking the KL
/// divergence.
pub const KL_SMOOTHING: f64 = 1e-10;

/// Discrete `KL(a || b)` on the shared histogram after ε-smoothing.
pub fn kl_divergence(h: &HistogramPair) -> f64 {
    let smooth = |m: &[f64]| {
        let total: f64 = m.iter().map(|x| x + KL_SMOOTHING).sum();
        m.iter().map(|x| (x + KL_SMOOTHING) / total).collect::<Vec<_>>()
    };
    let p = smooth(h.mass_a());
    let q = smooth(h.mass_b());
    p.iter()
        .zip(&q)
        .map(|(p, q)| p * (p / q).ln())
        .sum::<f64>()
        .max(0.0)
}

/// Absolute difference of the two means.
pub fn expectation_difference(a: &EmpiricalDist, b: &EmpiricalDist) -> f64 {
    (a.mean() - b.mean()).abs()
}

/// Ranks starting at 1; ties share the average of the ranks they span.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&i, &j| xs[i].total_cmp(&xs[j]));
    let mut ranks = vec![0.0; xs.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && xs[idx[end]] == xs[idx[start]] {
            end += 1;
        }
        // positions start..end hold ranks start+1..=end
        let avg = (start + 1 + end) as f64 / 2.0;
        for &k in &idx[start..end] {
            ranks[k] = avg;
        }
        start = end;
    }
    ranks
}

/// Spearman's rank correlation: the Pearson coefficient of the average ranks.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::domain(format!(
            "spearman needs paired samples, got {} and {}",
            xs.len(),
            ys.len()
        )));
    }
    if xs.len() < 3 {
        return Err(Error::InsufficientData {
            needed: 3,
            got: xs.len(),
        });
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("spearman input".into()));
    }
    let rx = average_ranks(xs);
    let ry = average_ranks(ys);
    let n = xs.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation(
            "one input has zero rank variance".into(),
        ));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Largest support size accepted by [`brute_force_ot`].
pub const BRUTE_FORCE_MAX: usize = 8;

/// Exhaustive optimal transport between two uniform distributions of equal
/// size: the minimum over all assignments of the mean absolute displacement.
/// Only meant as a reference for small inputs.
pub fn brute_force_ot(a: &EmpiricalDist, b: &EmpiricalDist) -> Result<f64> {
    let n = a.len();
    if n != b.len() {
        return Err(Error::domain("brute-force transport needs equal support sizes"));
    }
    if !a.is_uniform() || !b.is_uniform() {
        return Err(Error::domain("brute-force transport needs uniform weights"));
    }
    if n > BRUTE_FORCE_MAX {
        return Err(Error::Refused(format!(
            "brute-force transport over {n}! assignments (limit n <= {BRUTE_FORCE_MAX})"
        )));
    }
    let (va, vb) = (a.values(), b.values());
    let best = (0..n)
        .permutations(n)
        .map(|perm| {
            perm.iter()
                .enumerate()
                .map(|(i, &j)| (va[i] - vb[j]).abs())
                .sum::<f64>()
        })
        .fold(f64::INFINITY, f64::min);
    Ok(best / n as f64)
}

/// Finite mixture `Σ w_i · dists[i]` over the concatenated supports.
pub fn mixture(dists: &[EmpiricalDist], weights: &[f64]) -> Result<EmpiricalDist> {
    if dists.is_empty() || dists.len() != weights.len() {
        return Err(Error::domain("mixture needs one weight per component"));
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::domain("mixture weights must be nonnegative"));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::domain(format!("mixture weights sum to {total}, not 1")));
    }
    let mut values = Vec::new();
    let mut masses = Vec::new();
    for (d, &w) in dists.iter().zip(weights) {
        values.extend_from_slice(d.values());
        masses.extend(d.weights().iter().map(|m| m * w));
    }
    EmpiricalDist::new(values, masses)
}
