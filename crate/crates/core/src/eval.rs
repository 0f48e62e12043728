//! Proposal-quality evaluation: recall against overlap threshold, recall
//! against proposal budget, curve areas, per-class spreads and timing.
//!
//! An object counts as recalled when at least one of its image's top-`d`
//! proposals overlaps it by at least the threshold. Images without objects
//! contribute nothing to either side of the ratio.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{overlap, BoundingBox};

/// Overlap thresholds swept by [`recall_overlap_curve`]: 0.00, 0.01, ..., 1.00.
pub const OVERLAP_STEPS: usize = 100;
/// Largest budget swept by [`recall_proposal_curve`].
pub const MAX_PROPOSALS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Annotation {
    pub image_id: String,
    pub truths: Vec<(BoundingBox, String)>,
}

impl Annotation {
    pub fn boxes(&self) -> impl Iterator<Item = &BoundingBox> {
        self.truths.iter().map(|(b, _)| b)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Curve {
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl Curve {
    /// Checks equal lengths, strictly ascending `xs` and `ys` within `[0, 1]`.
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        if xs.len() != ys.len() {
            return Err(Error::LengthMismatch {
                expected: xs.len(),
                actual: ys.len(),
            });
        }
        if !xs.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidParameter("curve abscissae must be strictly ascending".into()));
        }
        if ys.iter().any(|y| !(0.0..=1.0).contains(y)) {
            return Err(Error::InvalidParameter("curve ordinates must lie in [0,1]".into()));
        }
        Ok(Self { xs, ys })
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn ys(&self) -> &[f64] {
        &self.ys
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    pub fn is_non_increasing(&self) -> bool {
        self.ys.windows(2).all(|w| w[1] <= w[0])
    }

    pub fn is_non_decreasing(&self) -> bool {
        self.ys.windows(2).all(|w| w[1] >= w[0])
    }

    /// Two columns `x,y` with a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,y\n");
        for (x, y) in self.xs.iter().zip(&self.ys) {
            out.push_str(&format!("{x},{y}\n"));
        }
        out
    }
}

fn check_inputs(proposals: &[Vec<BoundingBox>], annotations: &[Annotation]) -> Result<()> {
    if proposals.len() != annotations.len() {
        return Err(Error::LengthMismatch {
            expected: annotations.len(),
            actual: proposals.len(),
        });
    }
    Ok(())
}

fn check_budget(budget: usize) -> Result<()> {
    if budget == 0 {
        return Err(Error::InvalidParameter("proposal budget must be at least 1".into()));
    }
    Ok(())
}

/// Best overlap each object reaches among its image's top `budget` proposals.
fn best_overlaps(proposals: &[Vec<BoundingBox>], annotations: &[Annotation], budget: usize) -> Vec<f64> {
    proposals
        .par_iter()
        .zip(annotations)
        .flat_map_iter(|(props, ann)| {
            let top = &props[..props.len().min(budget)];
            ann.boxes()
                .map(|g| top.iter().map(|p| overlap(p, g)).fold(0.0, f64::max))
                .collect::<Vec<_>>()
        })
        .collect()
}

/// Zero-based rank of the first proposal reaching `eta` on each object.
fn first_hits(proposals: &[Vec<BoundingBox>], annotations: &[Annotation], eta: f64) -> Vec<Option<usize>> {
    proposals
        .par_iter()
        .zip(annotations)
        .flat_map_iter(|(props, ann)| {
            ann.boxes()
                .map(|g| props.iter().position(|p| overlap(p, g) >= eta))
                .collect::<Vec<_>>()
        })
        .collect()
}

fn fraction(hits: usize, total: usize) -> f64 {
    if total == 0 {
        1.0
    } else {
        hits as f64 / total as f64
    }
}

/// Fraction of all objects covered at `eta` by their image's top `budget`
/// proposals; 1.0 when there are no objects at all.
pub fn recall_at(
    proposals: &[Vec<BoundingBox>],
    annotations: &[Annotation],
    eta: f64,
    budget: usize,
) -> Result<f64> {
    check_inputs(proposals, annotations)?;
    check_budget(budget)?;
    let best = best_overlaps(proposals, annotations, budget);
    Ok(fraction(best.iter().filter(|&&o| o >= eta).count(), best.len()))
}

/// Recall at thresholds 0.00..=1.00 in steps of 0.01 for a fixed budget.
pub fn recall_overlap_curve(
    proposals: &[Vec<BoundingBox>],
    annotations: &[Annotation],
    budget: usize,
) -> Result<Curve> {
    check_inputs(proposals, annotations)?;
    check_budget(budget)?;
    let best = best_overlaps(proposals, annotations, budget);
    let xs: Vec<f64> = (0..=OVERLAP_STEPS).map(|i| i as f64 / OVERLAP_STEPS as f64).collect();
    let ys = xs
        .iter()
        .map(|&x| fraction(best.iter().filter(|&&o| o >= x).count(), best.len()))
        .collect();
    Curve::new(xs, ys)
}

/// Recall at `eta` for budgets `1..=D`, where `D` is the longest proposal
/// list capped at [`MAX_PROPOSALS`] (at least 1).
pub fn recall_proposal_curve(
    proposals: &[Vec<BoundingBox>],
    annotations: &[Annotation],
    eta: f64,
) -> Result<Curve> {
    check_inputs(proposals, annotations)?;
    let longest = proposals.iter().map(Vec::len).max().unwrap_or(0);
    let max_d = longest.clamp(1, MAX_PROPOSALS);
    let hits = first_hits(proposals, annotations, eta);
    // hits_at[r] counts objects first covered at rank r
    let mut hits_at = vec![0usize; max_d];
    for r in hits.iter().flatten() {
        if *r < max_d {
            hits_at[*r] += 1;
        }
    }
    let mut covered = 0;
    let mut xs = Vec::with_capacity(max_d);
    let mut ys = Vec::with_capacity(max_d);
    for (r, h) in hits_at.into_iter().enumerate() {
        covered += h;
        xs.push((r + 1) as f64);
        ys.push(fraction(covered, hits.len()));
    }
    Curve::new(xs, ys)
}

/// Trapezoidal area under the curve divided by the width of its x-range.
pub fn auc(curve: &Curve) -> Result<f64> {
    if curve.len() < 2 {
        return Err(Error::DegenerateGrid(curve.len()));
    }
    let area: f64 = curve
        .xs
        .windows(2)
        .zip(curve.ys.windows(2))
        .map(|(x, y)| (x[1] - x[0]) * (y[0] + y[1]) / 2.0)
        .sum();
    Ok(area / (curve.xs[curve.len() - 1] - curve.xs[0]))
}

/// Mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Spread {
    pub mean: f64,
    pub std: f64,
}

impl Spread {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Some(Self { mean, std: var.sqrt() })
    }
}

impl fmt::Display for Spread {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.3} ± {:.3}", self.mean, self.std)
    }
}

/// Wall-clock seconds per image; needs at least two samples.
pub fn timing_report(seconds: &[f64]) -> Result<Spread> {
    if seconds.len() < 2 {
        return Err(Error::InsufficientSamples(seconds.len()));
    }
    Ok(Spread::of(seconds).expect("non-empty"))
}

/// Which curve a per-class breakdown draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BreakdownMode {
    /// Recall-overlap curve at the budget; the class score is its AUC.
    RecallOverlap,
    /// Recall-proposal curve at `eta`; the class score is recall at the budget.
    RecallProposal,
}

impl FromStr for BreakdownMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "recall-overlap" | "overlap" | "auc" => Ok(Self::RecallOverlap),
            "recall-proposal" | "proposal" | "recall" => Ok(Self::RecallProposal),
            other => Err(Error::UnknownMode(other.to_string())),
        }
    }
}

impl fmt::Display for BreakdownMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::RecallOverlap => "recall-overlap",
            Self::RecallProposal => "recall-proposal",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassBreakdown {
    pub mode: BreakdownMode,
    pub curves: BTreeMap<String, Curve>,
    pub scores: BTreeMap<String, f64>,
    /// Spread of `scores`; `None` without any labelled object.
    pub spread: Option<Spread>,
}

/// Evaluates each class label over its own objects only.
pub fn per_class_breakdown(
    proposals: &[Vec<BoundingBox>],
    annotations: &[Annotation],
    mode: BreakdownMode,
    eta: f64,
    budget: usize,
) -> Result<ClassBreakdown> {
    check_inputs(proposals, annotations)?;
    check_budget(budget)?;
    let labels: std::collections::BTreeSet<&str> = annotations
        .iter()
        .flat_map(|a| a.truths.iter().map(|(_, c)| c.as_str()))
        .collect();
    let mut curves = BTreeMap::new();
    let mut scores = BTreeMap::new();
    for label in labels {
        let only: Vec<Annotation> = annotations
            .iter()
            .map(|a| Annotation {
                image_id: a.image_id.clone(),
                truths: a.truths.iter().filter(|(_, c)| c == label).cloned().collect(),
            })
            .collect();
        let (curve, score) = match mode {
            BreakdownMode::RecallOverlap => {
                let c = recall_overlap_curve(proposals, &only, budget)?;
                let s = auc(&c)?;
                (c, s)
            }
            BreakdownMode::RecallProposal => {
                let c = recall_proposal_curve(proposals, &only, eta)?;
                (c, recall_at(proposals, &only, eta, budget)?)
            }
        };
        curves.insert(label.to_string(), curve);
        scores.insert(label.to_string(), score);
    }
    let spread = Spread::of(&scores.values().copied().collect::<Vec<_>>());
    Ok(ClassBreakdown {
        mode,
        curves,
        scores,
        spread,
    })
}
