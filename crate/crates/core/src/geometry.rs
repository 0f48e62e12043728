//! Box arithmetic and the log-space scale/aspect-ratio quantization.
//!
//! A scheme with overlap parameter `eta` holds every window size
//! `(w0 / eta^a, h0 / eta^b)` for `a in 0..=A`, `b in 0..=B`. Any box whose
//! per-axis log index falls within half a step of some level is covered by
//! that level with intersection-over-union at least `eta`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned window covering `[x, x + w) x [y, y + h)` in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl BoundingBox {
    pub fn new(x: u32, y: u32, w: u32, h: u32) -> Result<Self> {
        if w == 0 || h == 0 {
            return Err(Error::InvalidParameter(format!(
                "box sides must be positive, got {w}x{h}"
            )));
        }
        Ok(Self { x, y, w, h })
    }

    pub fn area(&self) -> u64 {
        self.w as u64 * self.h as u64
    }

    pub fn right(&self) -> u64 {
        self.x as u64 + self.w as u64
    }

    pub fn bottom(&self) -> u64 {
        self.y as u64 + self.h as u64
    }

    pub fn center(&self) -> (f64, f64) {
        (
            self.x as f64 + self.w as f64 / 2.0,
            self.y as f64 + self.h as f64 / 2.0,
        )
    }

    pub fn intersection_area(&self, other: &BoundingBox) -> u64 {
        let ix = self.right().min(other.right()).saturating_sub(self.x.max(other.x) as u64);
        let iy = self.bottom().min(other.bottom()).saturating_sub(self.y.max(other.y) as u64);
        ix * iy
    }

    pub fn fits_within(&self, width: usize, height: usize) -> bool {
        self.right() <= width as u64 && self.bottom() <= height as u64
    }
}

/// Intersection area over union area, computed from exact integer areas.
pub fn overlap(s: &BoundingBox, t: &BoundingBox) -> f64 {
    let inter = s.intersection_area(t);
    let union = s.area() + t.area() - inter;
    inter as f64 / union as f64
}

/// Best overlap of `s` against any of `truths`; zero when there are none.
pub fn max_overlap(s: &BoundingBox, truths: &[BoundingBox]) -> f64 {
    truths.iter().map(|t| overlap(s, t)).fold(0.0, f64::max)
}

/// Rounds half away from zero for the non-negative sizes used here.
#[inline]
pub(crate) fn round_half_up(v: f64) -> f64 {
    (v + 0.5).floor()
}

/// Integer box of size `(width, height)` sharing the center of `source`,
/// shifted to lie inside a `img_w x img_h` image. `None` when the rounded
/// size does not fit.
pub fn place_concentric(
    source: &BoundingBox,
    width: f64,
    height: f64,
    img_w: usize,
    img_h: usize,
) -> Option<BoundingBox> {
    let w = round_half_up(width).max(1.0);
    let h = round_half_up(height).max(1.0);
    if w > img_w as f64 || h > img_h as f64 {
        return None;
    }
    let (cx, cy) = source.center();
    let x = round_half_up(cx - w / 2.0).clamp(0.0, img_w as f64 - w);
    let y = round_half_up(cy - h / 2.0).clamp(0.0, img_h as f64 - h);
    Some(BoundingBox {
        x: x as u32,
        y: y as u32,
        w: w as u32,
        h: h as u32,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantizationLevel {
    pub a: usize,
    pub b: usize,
    pub width: f64,
    pub height: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantizationScheme {
    eta: f64,
    w0: f64,
    h0: f64,
    a_max: usize,
    b_max: usize,
    levels: Vec<QuantizationLevel>,
}

/// The persisted form of a scheme; levels are always recomputed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchemeParams {
    pub eta: f64,
    pub w0: f64,
    pub h0: f64,
    #[serde(rename = "A")]
    pub a_max: usize,
    #[serde(rename = "B")]
    pub b_max: usize,
}

/// Slack for `ceil` on log ratios that are integers up to rounding.
const LOG_EPS: f64 = 1e-9;

/// `ceil(log_eta(ratio))` with integer-valued logs snapped.
fn ceil_log(eta: f64, ratio: f64) -> usize {
    let v = ratio.ln() / eta.ln();
    (v - LOG_EPS).ceil().max(0.0) as usize
}

/// Builds the scheme covering widths `w0..=wmax` and heights `h0..=hmax`.
pub fn build_scheme(eta: f64, w0: f64, h0: f64, wmax: f64, hmax: f64) -> Result<QuantizationScheme> {
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::InvalidParameter(format!("eta must lie in (0,1), got {eta}")));
    }
    if !(w0 > 0.0 && w0 <= wmax && wmax.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "need 0 < w0 <= wmax, got w0={w0}, wmax={wmax}"
        )));
    }
    if !(h0 > 0.0 && h0 <= hmax && hmax.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "need 0 < h0 <= hmax, got h0={h0}, hmax={hmax}"
        )));
    }
    let a_max = ceil_log(eta, w0 / wmax);
    let b_max = ceil_log(eta, h0 / hmax);
    QuantizationScheme::from_params(SchemeParams { eta, w0, h0, a_max, b_max })
}

impl QuantizationScheme {
    pub fn from_params(p: SchemeParams) -> Result<Self> {
        if !(p.eta > 0.0 && p.eta < 1.0) {
            return Err(Error::InvalidParameter(format!("eta must lie in (0,1), got {}", p.eta)));
        }
        if !(p.w0 > 0.0 && p.h0 > 0.0 && p.w0.is_finite() && p.h0.is_finite()) {
            return Err(Error::InvalidParameter("base window size must be positive".into()));
        }
        let grow = 1.0 / p.eta;
        let mut levels = Vec::with_capacity((p.a_max + 1) * (p.b_max + 1));
        for a in 0..=p.a_max {
            for b in 0..=p.b_max {
                levels.push(QuantizationLevel {
                    a,
                    b,
                    width: p.w0 * grow.powi(a as i32),
                    height: p.h0 * grow.powi(b as i32),
                });
            }
        }
        Ok(Self {
            eta: p.eta,
            w0: p.w0,
            h0: p.h0,
            a_max: p.a_max,
            b_max: p.b_max,
            levels,
        })
    }

    pub fn params(&self) -> SchemeParams {
        SchemeParams {
            eta: self.eta,
            w0: self.w0,
            h0: self.h0,
            a_max: self.a_max,
            b_max: self.b_max,
        }
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn base_size(&self) -> (f64, f64) {
        (self.w0, self.h0)
    }

    pub fn max_indices(&self) -> (usize, usize) {
        (self.a_max, self.b_max)
    }

    /// Number of levels, `K`.
    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn levels(&self) -> &[QuantizationLevel] {
        &self.levels
    }

    pub fn level(&self, id: usize) -> Option<&QuantizationLevel> {
        self.levels.get(id)
    }

    /// Row-major id of level `(a, b)`.
    pub fn level_id(&self, a: usize, b: usize) -> usize {
        a * (self.b_max + 1) + b
    }

    /// Continuous per-axis indices `log_{1/eta}(w / w0)`, `log_{1/eta}(h / h0)`.
    pub fn log_index(&self, w: f64, h: f64) -> (f64, f64) {
        let step = (1.0 / self.eta).ln();
        ((w / self.w0).ln() / step, (h / self.h0).ln() / step)
    }

    /// Assigns `s` to its nearest level; see [`quantize_box`].
    pub fn quantize(&self, s: &BoundingBox) -> Result<Quantized> {
        quantize_box(s, self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quantized {
    pub level_id: usize,
    pub level: QuantizationLevel,
    /// IoU between the box and a concentric level-sized box.
    pub overlap: f64,
    /// Signed per-axis index error, chosen level minus continuous index.
    pub index_error: (f64, f64),
}

/// Nearest-integer index on one axis, ties toward the smaller level.
fn nearest_index(t: f64, max: usize) -> usize {
    (t - 0.5).ceil().clamp(0.0, max as f64) as usize
}

/// Intersection-over-union of two concentric boxes of the given real sizes.
pub fn concentric_overlap(w1: f64, h1: f64, w2: f64, h2: f64) -> f64 {
    let inter = w1.min(w2) * h1.min(h2);
    inter / (w1 * h1 + w2 * h2 - inter)
}

/// Maps a box to the level minimizing the summed per-axis log-index distance.
///
/// Fails when even the best level cannot localize the box to `eta`-accuracy.
pub fn quantize_box(s: &BoundingBox, scheme: &QuantizationScheme) -> Result<Quantized> {
    let (ws, hs) = (s.w as f64, s.h as f64);
    let (ta, tb) = scheme.log_index(ws, hs);
    let a = nearest_index(ta, scheme.a_max);
    let b = nearest_index(tb, scheme.b_max);
    let level_id = scheme.level_id(a, b);
    let level = scheme.levels[level_id];
    let overlap = concentric_overlap(ws, hs, level.width, level.height);
    if overlap < scheme.eta {
        return Err(Error::OutOfRange { w: s.w, h: s.h, eta: scheme.eta });
    }
    Ok(Quantized {
        level_id,
        level,
        overlap,
        index_error: (a as f64 - ta, b as f64 - tb),
    })
}

/// Total number of level-sized window placements in a `width x height` image.
pub fn search_space_estimate(scheme: &QuantizationScheme, width: u32, height: u32) -> u64 {
    scheme
        .levels
        .iter()
        .map(|l| {
            let lw = round_half_up(l.width) as u64;
            let lh = round_half_up(l.height) as u64;
            if lw > width as u64 || lh > height as u64 {
                0
            } else {
                (width as u64 - lw + 1) * (height as u64 - lh + 1)
            }
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bb(x: u32, y: u32, w: u32, h: u32) -> BoundingBox {
        BoundingBox::new(x, y, w, h).unwrap()
    }

    #[test]
    fn overlap_examples() {
        let b = bb(3, 4, 7, 9);
        assert_eq!(overlap(&b, &b), 1.0);
        assert_eq!(overlap(&bb(0, 0, 10, 10), &bb(20, 20, 5, 5)), 0.0);
        assert_eq!(overlap(&bb(0, 0, 10, 10), &bb(5, 0, 10, 10)), 50.0 / 150.0);
        // touching edges share no interior
        assert_eq!(overlap(&bb(0, 0, 10, 10), &bb(10, 0, 10, 10)), 0.0);
    }

    #[test]
    fn max_overlap_examples() {
        let b = bb(0, 0, 10, 10);
        assert_eq!(max_overlap(&b, &[b, bb(100, 100, 3, 3)]), 1.0);
        assert_eq!(max_overlap(&b, &[]), 0.0);
        let m = max_overlap(&b, &[bb(5, 0, 10, 10), bb(9, 9, 10, 10)]);
        assert_eq!(m, 1.0 / 3.0);
        assert_eq!(overlap(&b, &bb(9, 9, 10, 10)), 1.0 / 199.0);
    }

    #[test]
    fn zero_sized_box_rejected() {
        assert!(BoundingBox::new(0, 0, 0, 4).is_err());
    }

    #[test]
    fn scheme_cardinalities() {
        let s = build_scheme(2.0 / 3.0, 10.0, 10.0, 500.0, 500.0).unwrap();
        assert_eq!(s.max_indices(), (10, 10));
        assert_eq!(s.len(), 121);
        let s = build_scheme(0.5, 10.0, 10.0, 500.0, 500.0).unwrap();
        assert_eq!(s.max_indices(), (6, 6));
        assert_eq!(s.len(), 49);
        let s = build_scheme(0.75, 10.0, 10.0, 500.0, 500.0).unwrap();
        assert_eq!(s.len(), 225);
        let s = build_scheme(0.3, 12.0, 7.0, 12.0, 7.0).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!((s.levels()[0].width, s.levels()[0].height), (12.0, 7.0));
        // exact powers do not round up an extra level
        assert_eq!(build_scheme(0.5, 10.0, 10.0, 40.0, 40.0).unwrap().len(), 9);
    }

    #[test]
    fn scheme_rejects_bad_parameters() {
        assert!(build_scheme(1.0, 10.0, 10.0, 500.0, 500.0).is_err());
        assert!(build_scheme(0.0, 10.0, 10.0, 500.0, 500.0).is_err());
        assert!(build_scheme(0.5, 600.0, 10.0, 500.0, 500.0).is_err());
        assert!(build_scheme(0.5, 10.0, -1.0, 500.0, 500.0).is_err());
    }

    #[test]
    fn levels_are_row_major_and_growing() {
        let s = build_scheme(0.5, 10.0, 20.0, 80.0, 80.0).unwrap();
        let (am, bm) = s.max_indices();
        for (i, l) in s.levels().iter().enumerate() {
            assert_eq!(s.level_id(l.a, l.b), i);
            assert!(l.width <= 10.0 * 2f64.powi(am as i32) + 1e-9);
            assert!(l.height <= 20.0 * 2f64.powi(bm as i32) + 1e-9);
        }
        assert_eq!(s.levels()[1].b, 1);
        assert!(s.levels()[1].height > s.levels()[0].height);
    }

    #[test]
    fn quantize_examples() {
        let s = build_scheme(2.0 / 3.0, 10.0, 10.0, 500.0, 500.0).unwrap();
        let q = quantize_box(&bb(5, 5, 10, 10), &s).unwrap();
        assert_eq!((q.level.a, q.level.b), (0, 0));
        assert_eq!(q.overlap, 1.0);

        let s = build_scheme(0.5, 10.0, 10.0, 500.0, 500.0).unwrap();
        let q = quantize_box(&bb(0, 0, 15, 20), &s).unwrap();
        assert_eq!((q.level.a, q.level.b), (1, 1));
        assert_eq!((q.level.width, q.level.height), (20.0, 20.0));
        assert_eq!(q.overlap, 0.75);
    }

    #[test]
    fn quantize_rejects_tiny_boxes() {
        let s = build_scheme(0.5, 10.0, 10.0, 500.0, 500.0).unwrap();
        assert!(matches!(quantize_box(&bb(0, 0, 3, 3), &s), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn quantize_tie_goes_to_smaller_level() {
        assert_eq!(nearest_index(0.5, 5), 0);
        assert_eq!(nearest_index(1.5, 5), 1);
        assert_eq!(nearest_index(1.5000001, 5), 2);
        assert_eq!(nearest_index(-0.3, 5), 0);
        assert_eq!(nearest_index(9.0, 5), 5);
    }

    #[test]
    fn concentric_placement_is_centered_and_clamped() {
        let p = place_concentric(&bb(10, 10, 10, 10), 20.0, 14.0, 100, 100).unwrap();
        assert_eq!(p, bb(5, 8, 20, 14));
        let p = place_concentric(&bb(0, 0, 10, 10), 20.0, 20.0, 100, 100).unwrap();
        assert_eq!(p, bb(0, 0, 20, 20));
        assert!(place_concentric(&bb(0, 0, 10, 10), 120.0, 20.0, 100, 100).is_none());
    }

    #[test]
    fn search_space_examples() {
        let single = build_scheme(0.5, 32.0, 24.0, 32.0, 24.0).unwrap();
        assert_eq!(search_space_estimate(&single, 32, 24), 1);

        let s = build_scheme(0.5, 10.0, 10.0, 40.0, 40.0).unwrap();
        let mut expected = 0;
        for w in [10u64, 20, 40] {
            for h in [10u64, 20, 40] {
                expected += (40 - w + 1) * (40 - h + 1);
            }
        }
        assert_eq!(search_space_estimate(&s, 40, 40), expected);
        assert_eq!(search_space_estimate(&s, 9, 200), 0);
    }

    proptest! {
        #[test]
        fn overlap_symmetric_and_bounded(
            x1 in 0u32..50, y1 in 0u32..50, w1 in 1u32..40, h1 in 1u32..40,
            x2 in 0u32..50, y2 in 0u32..50, w2 in 1u32..40, h2 in 1u32..40,
        ) {
            let s = bb(x1, y1, w1, h1);
            let t = bb(x2, y2, w2, h2);
            let o = overlap(&s, &t);
            prop_assert_eq!(o, overlap(&t, &s));
            prop_assert!((0.0..=1.0).contains(&o));
            prop_assert_eq!(o == 1.0, s == t);
        }

        #[test]
        fn level_count_matches_closed_form(
            eta in 0.05f64..0.95, w0 in 1.0f64..50.0, h0 in 1.0f64..50.0,
            wf in 1.0f64..40.0, hf in 1.0f64..40.0,
        ) {
            let (wmax, hmax) = (w0 * wf, h0 * hf);
            let s = build_scheme(eta, w0, h0, wmax, hmax).unwrap();
            let ka = 1 + ((w0 / wmax).ln() / eta.ln() - LOG_EPS).ceil().max(0.0) as usize;
            let kb = 1 + ((h0 / hmax).ln() / eta.ln() - LOG_EPS).ceil().max(0.0) as usize;
            prop_assert_eq!(s.len(), ka * kb);
            // the top level reaches the requested maximum
            let top = s.levels().last().unwrap();
            prop_assert!(top.width >= wmax * (1.0 - 1e-9));
            prop_assert!(top.height >= hmax * (1.0 - 1e-9));
        }

        #[test]
        fn smaller_eta_never_adds_levels(
            e1 in 0.05f64..0.95, e2 in 0.05f64..0.95, f in 1.0f64..60.0,
        ) {
            let (lo, hi) = if e1 < e2 { (e1, e2) } else { (e2, e1) };
            let k_lo = build_scheme(lo, 10.0, 10.0, 10.0 * f, 10.0 * f).unwrap().len();
            let k_hi = build_scheme(hi, 10.0, 10.0, 10.0 * f, 10.0 * f).unwrap().len();
            prop_assert!(k_lo <= k_hi);
        }

        #[test]
        fn quantized_overlap_respects_index_bound(w in 10u32..=500, h in 10u32..=500) {
            let s = build_scheme(0.6, 10.0, 10.0, 500.0, 500.0).unwrap();
            let q = quantize_box(&bb(0, 0, w, h), &s).unwrap();
            let bound = 0.6f64.powf(q.index_error.0.abs() + q.index_error.1.abs());
            prop_assert!(q.overlap >= bound * (1.0 - 1e-12));
            prop_assert!(q.overlap >= 0.6);
        }
    }
}
