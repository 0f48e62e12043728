//! Linear SVMs with l1 or l2 regularization, trained with or without
//! pairwise ranking constraints.
//!
//! Every variant reduces to one problem over a set of margin vectors `d_i`:
//!
//! ```text
//! min_w (1/p) ||w||_p^p + C * sum_i max(0, 1 - w . d_i)
//! ```
//!
//! With ranking constraints `d_i = x_pos - x_neg` for sampled same-group
//! pairs. Without them every sample is compared against the zero vector,
//! giving `d_i = x` for positives and `d_i = -x` for negatives.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Norm {
    L1,
    L2,
}

impl Norm {
    pub fn p(self) -> u32 {
        match self {
            Norm::L1 => 1,
            Norm::L2 => 2,
        }
    }
}

/// Regularizer and constraint style, written `l1-or`, `l1-wr`, `l2-or`,
/// `l2-wr` (without / with ranking).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Variant {
    pub norm: Norm,
    pub ranking: bool,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant { norm: Norm::L1, ranking: false },
        Variant { norm: Norm::L1, ranking: true },
        Variant { norm: Norm::L2, ranking: false },
        Variant { norm: Norm::L2, ranking: true },
    ];
}

impl Default for Variant {
    fn default() -> Self {
        Variant { norm: Norm::L1, ranking: false }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = self.norm.p();
        let r = if self.ranking { "wr" } else { "or" };
        write!(f, "l{p}-{r}")
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = match s.get(..2) {
            Some("l1") => Norm::L1,
            Some("l2") => Norm::L2,
            _ => return Err(Error::InvalidParameter(format!("unknown solver variant `{s}`"))),
        };
        let ranking = match s.get(2..) {
            Some("-or") => false,
            Some("-wr") => true,
            _ => return Err(Error::InvalidParameter(format!("unknown solver variant `{s}`"))),
        };
        Ok(Variant { norm, ranking })
    }
}

impl Serialize for Variant {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Variant {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Passes between early-stopping checks.
pub const STALL_WINDOW: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub norm: Norm,
    /// Hinge-loss weight.
    pub c: f64,
    pub ranking: bool,
    /// Number of pairs sampled in ranking mode.
    pub max_pairs: usize,
    /// Upper bound on full passes over the margin vectors.
    pub epochs: usize,
    /// Primal/dual step balance; primal steps scale with it and dual steps
    /// with its inverse.
    pub step0: f64,
    /// Stop once the best objective improves by less than this fraction
    /// over [`STALL_WINDOW`] passes. Zero disables early stopping.
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            norm: Norm::L1,
            c: 10.0,
            ranking: false,
            max_pairs: 100_000,
            epochs: 5000,
            step0: 1.0,
            tolerance: 1e-6,
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn for_variant(variant: Variant) -> Self {
        Self {
            norm: variant.norm,
            ranking: variant.ranking,
            ..Self::default()
        }
    }

    pub fn variant(&self) -> Variant {
        Variant {
            norm: self.norm,
            ranking: self.ranking,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::InvalidParameter(format!("C must be positive, got {}", self.c)));
        }
        if self.max_pairs == 0 {
            return Err(Error::InvalidParameter("pair budget must be at least 1".into()));
        }
        if !(self.step0 > 0.0 && self.step0.is_finite()) {
            return Err(Error::InvalidParameter(format!("step0 must be positive, got {}", self.step0)));
        }
        if !(self.tolerance >= 0.0 && self.tolerance.is_finite()) {
            return Err(Error::InvalidParameter("tolerance must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel<T> {
    weights: Vec<T>,
    bias: T,
}

impl<T: Scalar> LinearModel<T> {
    pub fn new(weights: Vec<T>, bias: T) -> Self {
        Self { weights, bias }
    }

    pub fn zeros(dim: usize) -> Self {
        Self::new(vec![T::zero(); dim], T::zero())
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn bias(&self) -> T {
        self.bias
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn is_zero(&self) -> bool {
        self.bias == T::zero() && self.weights.iter().all(|w| *w == T::zero())
    }

    pub fn score(&self, x: &[T]) -> T {
        dot(&self.weights, x) + self.bias
    }
}

#[inline]
pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample<T> {
    pub features: Vec<T>,
    /// Constraint scope, normally the image index.
    pub group: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingSet<T> {
    pub positives: Vec<Sample<T>>,
    pub negatives: Vec<Sample<T>>,
}

impl<T: Scalar> TrainingSet<T> {
    pub fn new() -> Self {
        Self {
            positives: Vec::new(),
            negatives: Vec::new(),
        }
    }

    pub fn push_positive(&mut self, features: Vec<T>, group: usize) {
        self.positives.push(Sample { features, group });
    }

    pub fn push_negative(&mut self, features: Vec<T>, group: usize) {
        self.negatives.push(Sample { features, group });
    }

    /// Shared feature dimension; checks uniformity and finiteness.
    pub fn dim(&self) -> Result<usize> {
        if self.positives.is_empty() {
            return Err(Error::EmptyClass("no positive samples".into()));
        }
        if self.negatives.is_empty() {
            return Err(Error::EmptyClass("no negative samples".into()));
        }
        let dim = self.positives[0].features.len();
        for (i, s) in self.positives.iter().chain(&self.negatives).enumerate() {
            if s.features.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: s.features.len(),
                });
            }
            if s.features.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteFeature(i));
            }
        }
        Ok(dim)
    }
}

/// Margin vectors in compressed sparse rows; explicit zeros are dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginSet<T> {
    dim: usize,
    indptr: Vec<usize>,
    indices: Vec<u32>,
    values: Vec<T>,
}

impl<T: Scalar> MarginSet<T> {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            indptr: vec![0],
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn from_rows(dim: usize, rows: &[Vec<T>]) -> Result<Self> {
        let mut set = Self::new(dim);
        for r in rows {
            set.push(r)?;
        }
        Ok(set)
    }

    /// Appends a dense row.
    pub fn push(&mut self, row: &[T]) -> Result<()> {
        if row.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: row.len(),
            });
        }
        self.push_sparse(row.iter().copied().enumerate())
    }

    /// Appends a row given as `(column, value)` entries in ascending column order.
    pub fn push_sparse(&mut self, entries: impl IntoIterator<Item = (usize, T)>) -> Result<()> {
        for (j, v) in entries {
            if j >= self.dim {
                return Err(Error::DimensionMismatch {
                    expected: self.dim,
                    actual: j + 1,
                });
            }
            if v != T::zero() {
                self.indices.push(j as u32);
                self.values.push(v);
            }
        }
        self.indptr.push(self.values.len());
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.indptr.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    fn entries(&self, i: usize) -> (&[u32], &[T]) {
        let (a, b) = (self.indptr[i], self.indptr[i + 1]);
        (&self.indices[a..b], &self.values[a..b])
    }

    #[inline]
    pub fn dot_row(&self, i: usize, w: &[T]) -> T {
        let (idx, val) = self.entries(i);
        idx.iter().zip(val).fold(T::zero(), |acc, (&j, &v)| acc + v * w[j as usize])
    }

    /// `out += a * row(i)`
    #[inline]
    fn axpy_row(&self, i: usize, a: T, out: &mut [T]) {
        let (idx, val) = self.entries(i);
        for (&j, &v) in idx.iter().zip(val) {
            out[j as usize] += a * v;
        }
    }

    pub fn dense_row(&self, i: usize) -> Vec<T> {
        let mut out = vec![T::zero(); self.dim];
        self.axpy_row(i, T::one(), &mut out);
        out
    }

    fn is_finite(&self) -> Option<usize> {
        (0..self.len()).find(|&i| self.entries(i).1.iter().any(|v| !v.is_finite()))
    }
}

/// Draws `budget` (positive, negative) index pairs uniformly with
/// replacement among pairs whose group labels agree.
pub fn sample_pair_indices(
    pos_groups: &[usize],
    neg_groups: &[usize],
    budget: usize,
    seed: u64,
) -> Result<Vec<(usize, usize)>> {
    let mut groups: Vec<usize> = pos_groups.to_vec();
    groups.sort_unstable();
    groups.dedup();

    let mut scopes = Vec::new();
    let mut cumulative = Vec::new();
    let mut total: u64 = 0;
    for g in groups {
        let pos: Vec<usize> = (0..pos_groups.len()).filter(|&i| pos_groups[i] == g).collect();
        let neg: Vec<usize> = (0..neg_groups.len()).filter(|&i| neg_groups[i] == g).collect();
        if neg.is_empty() {
            continue;
        }
        total += (pos.len() * neg.len()) as u64;
        cumulative.push(total);
        scopes.push((pos, neg));
    }
    if total == 0 {
        return Err(Error::EmptyClass("no positive/negative pair shares a group".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..budget)
        .map(|_| {
            let r = rng.gen_range(0..total);
            let (pos, neg) = &scopes[cumulative.partition_point(|&c| c <= r)];
            (pos[rng.gen_range(0..pos.len())], neg[rng.gen_range(0..neg.len())])
        })
        .collect())
}

/// Draws `budget` differences `x_pos - x_neg`, uniformly with replacement
/// from all positive/negative pairs that share a group.
pub fn sample_pairs<T: Scalar>(set: &TrainingSet<T>, budget: usize, seed: u64) -> Result<MarginSet<T>> {
    let dim = set.dim()?;
    let pg: Vec<usize> = set.positives.iter().map(|s| s.group).collect();
    let ng: Vec<usize> = set.negatives.iter().map(|s| s.group).collect();
    let mut out = MarginSet::new(dim);
    for (p, q) in sample_pair_indices(&pg, &ng, budget, seed)? {
        let (p, q) = (&set.positives[p].features, &set.negatives[q].features);
        out.push_sparse(p.iter().zip(q).map(|(&a, &b)| a - b).enumerate())?;
    }
    Ok(out)
}

/// The margin vectors the configured variant optimizes over.
pub fn margin_vectors<T: Scalar>(set: &TrainingSet<T>, cfg: &SolverConfig) -> Result<MarginSet<T>> {
    let dim = set.dim()?;
    if cfg.ranking {
        return sample_pairs(set, cfg.max_pairs, cfg.seed);
    }
    let mut out = MarginSet::new(dim);
    for s in &set.positives {
        out.push(&s.features)?;
    }
    for s in &set.negatives {
        out.push_sparse(s.features.iter().map(|&v| -v).enumerate())?;
    }
    Ok(out)
}

fn regularizer<T: Scalar>(norm: Norm, w: &[T]) -> f64 {
    match norm {
        Norm::L1 => w.iter().map(|v| v.as_f64().abs()).sum(),
        Norm::L2 => 0.5 * w.iter().map(|v| v.as_f64() * v.as_f64()).sum::<f64>(),
    }
}

fn hinge_sum<T: Scalar>(margins: &[T]) -> f64 {
    margins.iter().map(|m| (1.0 - m.as_f64()).max(0.0)).sum()
}

/// `(1/p) ||w||_p^p + C * sum_i max(0, 1 - w . d_i)`.
pub fn objective<T: Scalar>(model: &LinearModel<T>, margins: &MarginSet<T>, cfg: &SolverConfig) -> Result<f64> {
    if model.dim() != margins.dim() {
        return Err(Error::DimensionMismatch {
            expected: margins.dim(),
            actual: model.dim(),
        });
    }
    let m: Vec<T> = (0..margins.len()).map(|i| margins.dot_row(i, &model.weights)).collect();
    Ok(regularizer(cfg.norm, &model.weights) + cfg.c * hinge_sum(&m))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport<T> {
    pub model: LinearModel<T>,
    pub objective: f64,
    /// Best objective seen after each pass, starting with the zero model.
    pub trace: Vec<f64>,
}

pub fn solve<T: Scalar>(set: &TrainingSet<T>, cfg: &SolverConfig) -> Result<LinearModel<T>> {
    Ok(solve_report(set, cfg)?.model)
}

pub fn solve_report<T: Scalar>(set: &TrainingSet<T>, cfg: &SolverConfig) -> Result<SolveReport<T>> {
    cfg.validate()?;
    let margins = margin_vectors(set, cfg)?;
    solve_margins(&margins, cfg)
}

/// Primal-dual proximal splitting on `min_w R(w) + H(D w)` with
/// `H(z) = C sum_i max(0, 1 - z_i)`.
///
/// Each pass takes a dual step `y <- clip(y + sigma (D w_bar - 1), -C, 0)`
/// and a primal step `w <- prox_{tau R}(w - tau D^T y)`; the l1 prox is a
/// soft threshold, so inactive weights are exactly zero. The l2 variant
/// uses the accelerated step schedule for strongly convex `R`. Returns the
/// best primal iterate.
pub fn solve_margins<T: Scalar>(margins: &MarginSet<T>, cfg: &SolverConfig) -> Result<SolveReport<T>> {
    solve_margins_with_free(margins, cfg, &[])
}

/// Like [`solve_margins`], with the coordinates listed in `free` left out
/// of the regularizer (bias-like terms).
pub fn solve_margins_with_free<T: Scalar>(
    margins: &MarginSet<T>,
    cfg: &SolverConfig,
    free: &[usize],
) -> Result<SolveReport<T>> {
    cfg.validate()?;
    let (n, dim) = (margins.len(), margins.dim());
    if let Some(&j) = free.iter().find(|&&j| j >= dim) {
        return Err(Error::DimensionMismatch { expected: dim, actual: j + 1 });
    }
    let mut penalized = vec![true; dim];
    for &j in free {
        penalized[j] = false;
    }
    if n == 0 {
        return Err(Error::EmptyClass("no margin vectors".into()));
    }
    if let Some(i) = margins.is_finite() {
        return Err(Error::NonFiniteFeature(i));
    }
    let c = T::of(cfg.c);
    let mut w = vec![T::zero(); dim];
    let mut best_w = w.clone();
    let reg = |w: &[T]| {
        let kept: Vec<T> = w.iter().zip(&penalized).filter(|(_, &p)| p).map(|(&v, _)| v).collect();
        regularizer(cfg.norm, &kept)
    };
    let mut best = reg(&w) + cfg.c * n as f64;
    let mut trace = Vec::with_capacity(cfg.epochs + 1);
    trace.push(best);

    // Diagonal step sizes from the absolute row and column sums of D.
    let mut col_abs = vec![0.0f64; dim];
    let mut row_abs = vec![0.0f64; n];
    for (i, r) in row_abs.iter_mut().enumerate() {
        let (idx, val) = margins.entries(i);
        for (&j, &v) in idx.iter().zip(val) {
            let a = v.as_f64().abs();
            col_abs[j as usize] += a;
            *r += a;
        }
    }
    let inv = |s: f64| if s > 0.0 { 1.0 / s } else { 1.0 };
    let tau: Vec<T> = col_abs.iter().map(|&s| T::of(cfg.step0 * inv(s))).collect();
    let sigma: Vec<T> = row_abs.iter().map(|&s| T::of(inv(s) / cfg.step0)).collect();

    let mut y = vec![T::zero(); n];
    let mut dw = vec![T::zero(); n];
    let mut dw_bar = dw.clone();
    let mut grad = vec![T::zero(); dim];
    let mut checkpoint = best;
    for epoch in 1..=cfg.epochs {
        for ((yi, &m), &s) in y.iter_mut().zip(&dw_bar).zip(&sigma) {
            *yi = (*yi + s * (m - T::one())).max(-c).min(T::zero());
        }
        grad.iter_mut().for_each(|g| *g = T::zero());
        for (i, &yi) in y.iter().enumerate() {
            if yi != T::zero() {
                margins.axpy_row(i, yi, &mut grad);
            }
        }
        match cfg.norm {
            Norm::L1 => {
                for (((wj, &g), &t), &p) in w.iter_mut().zip(&grad).zip(&tau).zip(&penalized) {
                    *wj = if p { soft_threshold(*wj - t * g, t) } else { *wj - t * g };
                }
            }
            Norm::L2 => {
                for (((wj, &g), &t), &p) in w.iter_mut().zip(&grad).zip(&tau).zip(&penalized) {
                    *wj = if p { (*wj - t * g) / (T::one() + t) } else { *wj - t * g };
                }
            }
        }
        for i in 0..n {
            let m = margins.dot_row(i, &w);
            dw_bar[i] = m + m - dw[i];
            dw[i] = m;
        }
        let f = reg(&w) + cfg.c * hinge_sum(&dw);
        if f < best {
            best = f;
            best_w.copy_from_slice(&w);
        }
        trace.push(best);
        if epoch % STALL_WINDOW == 0 {
            if checkpoint - best <= cfg.tolerance * best.abs().max(1.0) {
                break;
            }
            checkpoint = best;
        }
    }
    Ok(SolveReport {
        model: LinearModel::new(best_w, T::zero()),
        objective: best,
        trace,
    })
}

#[inline]
fn soft_threshold<T: Scalar>(v: T, thr: T) -> T {
    if v > thr {
        v - thr
    } else if v < -thr {
        v + thr
    } else {
        T::zero()
    }
}
