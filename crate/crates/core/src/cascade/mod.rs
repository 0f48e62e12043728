//! The two-stage proposal cascade.
//!
//! Stage I runs one linear filter per quantization level over the image,
//! rescaled so that a level-sized window becomes the fixed feature window,
//! and forwards the top `d1` non-max-suppressed peaks of every level.
//! Stage II recalibrates those per-level scores with an affine map per
//! level and keeps the global top `d2`.

mod infer;
mod nms;
mod train;

pub use infer::{level_geometry, level_gradient, propose, stage1_infer, stage2_features, stage2_rank, LevelGeometry};
pub use nms::{nms_local_maxima, Peak};
pub use train::{train_stage1, train_stage2, Stage1Report, Stage2Report, TrainingImage};

use crate::error::{Error, Result};
use crate::geometry::{BoundingBox, QuantizationScheme};
use crate::imaging::GrayImage;
use crate::scalar::Scalar;
use crate::svm::{LinearModel, SolverConfig};

/// Per-level forward budget: 150 for a 36-level scheme, 50 otherwise.
pub fn default_d1(levels: usize) -> usize {
    if levels == 36 {
        150
    } else {
        50
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CascadeConfig {
    pub scheme: QuantizationScheme,
    /// Feature window width `W`.
    pub feature_w: usize,
    /// Feature window height `H`.
    pub feature_h: usize,
    /// Stage-II response channels `R`.
    pub channels: usize,
    /// NMS neighbourhood as a fraction of the feature window, in `[0, 2]`.
    pub gamma: f64,
    pub d1: usize,
    pub d2: usize,
    /// Overlap at which a window counts as a correct proposal.
    pub eta: f64,
    /// Random negative windows drawn per image and level in Stage-I training.
    pub negatives_per_image: usize,
    pub solver1: SolverConfig,
    pub solver2: SolverConfig,
}

impl CascadeConfig {
    pub fn new(scheme: QuantizationScheme) -> Self {
        let d1 = default_d1(scheme.len());
        Self {
            scheme,
            feature_w: 16,
            feature_h: 16,
            channels: 1,
            gamma: 0.6,
            d1,
            d2: 1000,
            eta: 0.5,
            negatives_per_image: 20,
            solver1: SolverConfig::default(),
            solver2: SolverConfig::default(),
        }
    }

    pub fn levels(&self) -> usize {
        self.scheme.len()
    }

    pub fn feature_len(&self) -> usize {
        self.feature_w * self.feature_h
    }

    /// NMS neighbourhood in response cells, `round(gamma W) x round(gamma H)`.
    pub fn neighborhood(&self) -> (usize, usize) {
        (
            (self.gamma * self.feature_w as f64).round().max(1.0) as usize,
            (self.gamma * self.feature_h as f64).round().max(1.0) as usize,
        )
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if !(0.0..=2.0).contains(&self.gamma) {
            return bad(format!("gamma must lie in [0,2], got {}", self.gamma));
        }
        if !(1..=1000).contains(&self.d1) {
            return bad(format!("d1 must lie in [1,1000], got {}", self.d1));
        }
        if self.d2 == 0 {
            return bad("d2 must be at least 1".into());
        }
        if self.feature_w < 2 || self.feature_h < 2 {
            return bad(format!("feature window {}x{} is too small", self.feature_w, self.feature_h));
        }
        if self.channels == 0 {
            return bad("R must be at least 1".into());
        }
        if self.channels > 1 && !self.feature_len().is_multiple_of(self.channels) {
            return Err(Error::Divisibility {
                len: self.feature_len(),
                segments: self.channels,
            });
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return bad(format!("eta must lie in (0,1], got {}", self.eta));
        }
        self.solver1.validate()?;
        self.solver2.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stage1Model<T> {
    /// One filter of length `W * H` per level.
    pub filters: Vec<LinearModel<T>>,
    /// `false` for levels that saw no positives and kept a zero filter.
    pub trained: Vec<bool>,
}

impl<T: Scalar> Stage1Model<T> {
    pub fn check(&self, cfg: &CascadeConfig) -> Result<()> {
        if self.filters.len() != cfg.levels() {
            return Err(Error::DimensionMismatch {
                expected: cfg.levels(),
                actual: self.filters.len(),
            });
        }
        if let Some(f) = self.filters.iter().find(|f| f.dim() != cfg.feature_len()) {
            return Err(Error::DimensionMismatch {
                expected: cfg.feature_len(),
                actual: f.dim(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stage2Model<T> {
    /// Per-level coefficients `z_k`, each of length `R`.
    pub z: Vec<Vec<T>>,
    /// Per-level bias `e_k`.
    pub e: Vec<T>,
}

impl<T: Scalar> Stage2Model<T> {
    /// `z_k = 1`, `e_k = 0` on every level: keeps Stage-I scores.
    pub fn identity(levels: usize, channels: usize) -> Self {
        Self {
            z: vec![vec![T::one(); channels]; levels],
            e: vec![T::zero(); levels],
        }
    }

    pub fn levels(&self) -> usize {
        self.e.len()
    }

    pub fn score(&self, level_id: usize, v: &[T]) -> Result<T> {
        let z = self.z.get(level_id).ok_or(Error::UnknownLevel(level_id))?;
        if z.len() != v.len() {
            return Err(Error::DimensionMismatch {
                expected: z.len(),
                actual: v.len(),
            });
        }
        Ok(crate::svm::dot(z, v) + self.e[level_id])
    }

    pub fn check(&self, cfg: &CascadeConfig) -> Result<()> {
        if self.z.len() != cfg.levels() || self.e.len() != cfg.levels() {
            return Err(Error::DimensionMismatch {
                expected: cfg.levels(),
                actual: self.z.len().min(self.e.len()),
            });
        }
        if let Some(z) = self.z.iter().find(|z| z.len() != cfg.channels) {
            return Err(Error::DimensionMismatch {
                expected: cfg.channels,
                actual: z.len(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Proposal<T> {
    /// Window in original image coordinates.
    pub bbox: BoundingBox,
    pub level_id: usize,
    pub stage1_score: T,
    pub stage2_score: T,
}

/// A Stage-I survivor with the data Stage II needs.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate<T> {
    pub proposal: Proposal<T>,
    /// Stage-II feature `v`, length `R`.
    pub features: Vec<T>,
    /// Response-grid cell `(row, col)` the window came from.
    pub cell: (usize, usize),
}

/// Proposals ordered by descending Stage-II score.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ProposalSet<T> {
    pub proposals: Vec<Proposal<T>>,
}

impl<T: Scalar> ProposalSet<T> {
    pub fn len(&self) -> usize {
        self.proposals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.proposals.is_empty()
    }

    pub fn boxes(&self) -> Vec<BoundingBox> {
        self.proposals.iter().map(|p| p.bbox).collect()
    }
}

/// Configuration plus both trained stages.
#[derive(Debug, Clone, PartialEq)]
pub struct Cascade<T> {
    pub config: CascadeConfig,
    pub stage1: Stage1Model<T>,
    pub stage2: Stage2Model<T>,
}

impl<T: Scalar> Cascade<T> {
    pub fn new(config: CascadeConfig, stage1: Stage1Model<T>, stage2: Stage2Model<T>) -> Result<Self> {
        config.validate()?;
        stage1.check(&config)?;
        stage2.check(&config)?;
        Ok(Self { config, stage1, stage2 })
    }

    /// Trains Stage I, then Stage II on the same images.
    pub fn train(images: &[TrainingImage<T>], config: CascadeConfig) -> Result<(Self, Stage1Report, Stage2Report)> {
        let (stage1, r1) = train_stage1(images, &config)?;
        let (stage2, r2) = train_stage2(images, &stage1, &config)?;
        Ok((Self { config, stage1, stage2 }, r1, r2))
    }

    pub fn propose(&self, img: &GrayImage<T>) -> Result<ProposalSet<T>> {
        propose(img, &self.stage1, &self.stage2, &self.config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_scheme;

    #[test]
    fn d1_follows_scheme_size() {
        let s36 = crate::geometry::QuantizationScheme::from_params(crate::geometry::SchemeParams {
            eta: 0.5,
            w0: 10.0,
            h0: 10.0,
            a_max: 5,
            b_max: 5,
        })
        .unwrap();
        assert_eq!(CascadeConfig::new(s36).d1, 150);
        let s121 = build_scheme(2.0 / 3.0, 10.0, 10.0, 500.0, 500.0).unwrap();
        let cfg = CascadeConfig::new(s121);
        assert_eq!(cfg.d1, 50);
        assert_eq!((cfg.feature_w, cfg.feature_h, cfg.gamma), (16, 16, 0.6));
        assert_eq!(cfg.neighborhood(), (10, 10));
        assert_eq!(cfg.solver1.variant().to_string(), "l1-or");
        assert_eq!(cfg.solver2.variant().to_string(), "l1-or");
        cfg.validate().unwrap();
    }

    #[test]
    fn config_bounds() {
        let s = build_scheme(0.5, 10.0, 10.0, 40.0, 40.0).unwrap();
        let base = CascadeConfig::new(s);
        assert!(CascadeConfig { gamma: 2.5, ..base.clone() }.validate().is_err());
        assert!(CascadeConfig { d1: 0, ..base.clone() }.validate().is_err());
        assert!(CascadeConfig { d1: 1001, ..base.clone() }.validate().is_err());
        assert!(matches!(
            CascadeConfig { channels: 3, ..base.clone() }.validate(),
            Err(Error::Divisibility { .. })
        ));
        assert!(CascadeConfig { channels: 4, ..base }.validate().is_ok());
    }

    #[test]
    fn stage2_score_rejects_unknown_level() {
        let m = Stage2Model::<f64>::identity(2, 1);
        assert_eq!(m.score(1, &[3.0]).unwrap(), 3.0);
        assert!(matches!(m.score(2, &[3.0]), Err(Error::UnknownLevel(2))));
    }
}
