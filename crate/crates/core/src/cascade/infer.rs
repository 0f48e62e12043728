use std::cmp::Ordering;

use rayon::prelude::*;

use super::{nms_local_maxima, CascadeConfig, Candidate, Proposal, ProposalSet, Stage1Model, Stage2Model};
use crate::error::{Error, Result};
use crate::geometry::{round_half_up, BoundingBox, QuantizationLevel};
use crate::imaging::{convolve_valid, gradient_magnitude, resize_bilinear, GrayImage, Plane};
use crate::scalar::Scalar;
use crate::svm::{dot, LinearModel};

/// How one level is laid over one image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelGeometry {
    pub level_id: usize,
    /// Level size rounded to whole pixels.
    pub box_w: u32,
    pub box_h: u32,
    /// Rescaled image size.
    pub new_w: usize,
    pub new_h: usize,
    /// Rescaled pixels per original pixel.
    pub scale_x: f64,
    pub scale_y: f64,
}

/// Rescaled size such that a `box_len` window maps onto `feature_len`
/// samples under corner-aligned resampling.
fn rescaled_len(img_len: usize, box_len: usize, feature_len: usize) -> usize {
    let ratio = (feature_len - 1) as f64 / (box_len - 1) as f64;
    round_half_up((img_len - 1) as f64 * ratio) as usize + 1
}

/// `None` when the level does not fit the image.
pub fn level_geometry(
    level_id: usize,
    level: &QuantizationLevel,
    img_w: usize,
    img_h: usize,
    feature_w: usize,
    feature_h: usize,
) -> Option<LevelGeometry> {
    let bw = round_half_up(level.width) as usize;
    let bh = round_half_up(level.height) as usize;
    if bw < 2 || bh < 2 || bw > img_w || bh > img_h {
        return None;
    }
    let new_w = rescaled_len(img_w, bw, feature_w);
    let new_h = rescaled_len(img_h, bh, feature_h);
    if new_w < feature_w || new_h < feature_h {
        return None;
    }
    Some(LevelGeometry {
        level_id,
        box_w: bw as u32,
        box_h: bh as u32,
        new_w,
        new_h,
        scale_x: (new_w - 1) as f64 / (img_w - 1) as f64,
        scale_y: (new_h - 1) as f64 / (img_h - 1) as f64,
    })
}

impl LevelGeometry {
    /// Original-image box for the window whose top-left response cell is `(row, col)`.
    pub fn cell_to_box(&self, row: usize, col: usize, img_w: usize, img_h: usize) -> BoundingBox {
        let x = round_half_up(col as f64 / self.scale_x).min((img_w - self.box_w as usize) as f64);
        let y = round_half_up(row as f64 / self.scale_y).min((img_h - self.box_h as usize) as f64);
        BoundingBox {
            x: x as u32,
            y: y as u32,
            w: self.box_w,
            h: self.box_h,
        }
    }

    /// Response-grid position `(row, col)` of a box's top-left corner.
    pub fn box_to_cell(&self, b: &BoundingBox) -> (f64, f64) {
        (b.y as f64 * self.scale_y, b.x as f64 * self.scale_x)
    }
}

/// Splits `window` into `channels` equal contiguous segments and returns the
/// partial responses `w_seg . x_seg`; one channel gives the full margin.
pub fn stage2_features<T: Scalar>(weights: &[T], window: &[T], channels: usize) -> Result<Vec<T>> {
    if weights.len() != window.len() {
        return Err(Error::DimensionMismatch {
            expected: weights.len(),
            actual: window.len(),
        });
    }
    if channels == 0 || !window.len().is_multiple_of(channels) {
        return Err(Error::Divisibility {
            len: window.len(),
            segments: channels,
        });
    }
    let seg = window.len() / channels;
    Ok(weights
        .chunks_exact(seg)
        .zip(window.chunks_exact(seg))
        .map(|(w, x)| dot(w, x))
        .collect())
}

/// Gradient magnitude of the image rescaled for one level; windows of this
/// plane are the Stage-I features.
pub fn level_gradient<T: Scalar>(img: &GrayImage<T>, geom: &LevelGeometry) -> Result<Plane<T>> {
    gradient_magnitude(&resize_bilinear(img, geom.new_w, geom.new_h)?)
}

fn level_candidates<T: Scalar>(
    img: &GrayImage<T>,
    geom: &LevelGeometry,
    filter: &LinearModel<T>,
    cfg: &CascadeConfig,
) -> Result<Vec<Candidate<T>>> {
    let (fw, fh) = (cfg.feature_w, cfg.feature_h);
    let grad = level_gradient(img, geom)?;
    let kernel = Plane::new(fw, fh, filter.weights().to_vec())?;
    let mut response = convolve_valid(&grad, &kernel)?;
    if filter.bias() != T::zero() {
        let bias = filter.bias();
        let data: Vec<T> = response.data().iter().map(|&v| v + bias).collect();
        response = Plane::new(response.width(), response.height(), data)?;
    }
    let (nw, nh) = cfg.neighborhood();
    nms_local_maxima(&response, nw, nh, cfg.d1)
        .into_iter()
        .map(|peak| {
            let features = if cfg.channels == 1 {
                vec![peak.score]
            } else {
                let window = grad.window(peak.col, peak.row, fw, fh);
                stage2_features(filter.weights(), &window, cfg.channels)?
            };
            Ok(Candidate {
                proposal: Proposal {
                    bbox: geom.cell_to_box(peak.row, peak.col, img.width(), img.height()),
                    level_id: geom.level_id,
                    stage1_score: peak.score,
                    stage2_score: peak.score,
                },
                features,
                cell: (peak.row, peak.col),
            })
        })
        .collect()
}

/// Runs every fitting level's filter over the image and keeps its top `d1`
/// peaks. Levels run in parallel; the result is in level order.
pub fn stage1_infer<T: Scalar>(
    img: &GrayImage<T>,
    model: &Stage1Model<T>,
    cfg: &CascadeConfig,
) -> Result<Vec<Candidate<T>>> {
    model.check(cfg)?;
    let geoms: Vec<LevelGeometry> = cfg
        .scheme
        .levels()
        .iter()
        .enumerate()
        .filter_map(|(k, l)| level_geometry(k, l, img.width(), img.height(), cfg.feature_w, cfg.feature_h))
        .collect();
    if geoms.is_empty() {
        return Err(Error::NoFittingLevel {
            width: img.width(),
            height: img.height(),
        });
    }
    let per_level: Vec<Result<Vec<Candidate<T>>>> = geoms
        .par_iter()
        .map(|g| level_candidates(img, g, &model.filters[g.level_id], cfg))
        .collect();
    let mut out = Vec::new();
    for r in per_level {
        out.extend(r?);
    }
    Ok(out)
}

fn rank_order<T: Scalar>(a: &Proposal<T>, b: &Proposal<T>) -> Ordering {
    let desc = |x: T, y: T| y.partial_cmp(&x).unwrap_or(Ordering::Equal);
    desc(a.stage2_score, b.stage2_score)
        .then_with(|| desc(a.stage1_score, b.stage1_score))
        .then(a.level_id.cmp(&b.level_id))
        .then((a.bbox.y, a.bbox.x, a.bbox.h, a.bbox.w).cmp(&(b.bbox.y, b.bbox.x, b.bbox.h, b.bbox.w)))
}

/// Scores every candidate with its level's calibration and keeps the top `d2`.
pub fn stage2_rank<T: Scalar>(
    candidates: Vec<Candidate<T>>,
    model: &Stage2Model<T>,
    d2: usize,
) -> Result<ProposalSet<T>> {
    let mut proposals = candidates
        .into_iter()
        .map(|c| {
            let mut p = c.proposal;
            p.stage2_score = model.score(p.level_id, &c.features)?;
            Ok(p)
        })
        .collect::<Result<Vec<_>>>()?;
    proposals.sort_by(rank_order);
    proposals.truncate(d2);
    Ok(ProposalSet { proposals })
}

pub fn propose<T: Scalar>(
    img: &GrayImage<T>,
    stage1: &Stage1Model<T>,
    stage2: &Stage2Model<T>,
    cfg: &CascadeConfig,
) -> Result<ProposalSet<T>> {
    stage2.check(cfg)?;
    let candidates = stage1_infer(img, stage1, cfg)?;
    stage2_rank(candidates, stage2, cfg.d2)
}
