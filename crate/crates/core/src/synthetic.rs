//! Seeded synthetic scenes: bright rectangles on a dark, lightly noisy
//! background, with the rectangles as ground truth.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cascade::TrainingImage;
use crate::error::{Error, Result};
use crate::geometry::BoundingBox;
use crate::imaging::GrayImage;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct SceneConfig {
    pub width: usize,
    pub height: usize,
    pub min_objects: usize,
    pub max_objects: usize,
    pub min_side: u32,
    pub max_side: u32,
    /// Background intensities are drawn from `[0, background_max]`.
    pub background_max: f64,
    /// Object intensities are drawn from `[object_min, 1]`.
    pub object_min: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            width: 128,
            height: 128,
            min_objects: 1,
            max_objects: 3,
            min_side: 16,
            max_side: 96,
            background_max: 0.1,
            object_min: 0.7,
        }
    }
}

impl SceneConfig {
    fn validate(&self) -> Result<()> {
        if self.min_objects == 0 || self.min_objects > self.max_objects {
            return Err(Error::InvalidParameter(format!(
                "object count range {}..={} is empty or starts at zero",
                self.min_objects, self.max_objects
            )));
        }
        if self.min_side == 0
            || self.min_side > self.max_side
            || self.max_side as usize > self.width.min(self.height)
        {
            return Err(Error::InvalidParameter(format!(
                "side range {}..={} does not fit a {}x{} image",
                self.min_side, self.max_side, self.width, self.height
            )));
        }
        if !(0.0..=1.0).contains(&self.background_max) || !(0.0..=1.0).contains(&self.object_min) {
            return Err(Error::InvalidParameter("intensities must lie in [0,1]".into()));
        }
        Ok(())
    }
}

/// One scene. Objects never intersect each other; when a requested object
/// cannot be placed after a bounded number of attempts the scene keeps fewer.
pub fn generate_scene<T: Scalar>(cfg: &SceneConfig, rng: &mut ChaCha8Rng) -> Result<TrainingImage<T>> {
    cfg.validate()?;
    let wanted = rng.gen_range(cfg.min_objects..=cfg.max_objects);
    let mut truths: Vec<BoundingBox> = Vec::with_capacity(wanted);
    for _ in 0..wanted * 200 {
        if truths.len() == wanted {
            break;
        }
        let w = rng.gen_range(cfg.min_side..=cfg.max_side);
        let h = rng.gen_range(cfg.min_side..=cfg.max_side);
        let b = BoundingBox {
            x: rng.gen_range(0..=cfg.width as u32 - w),
            y: rng.gen_range(0..=cfg.height as u32 - h),
            w,
            h,
        };
        if truths.iter().all(|t| t.intersection_area(&b) == 0) {
            truths.push(b);
        }
    }
    let levels: Vec<f64> = truths.iter().map(|_| rng.gen_range(cfg.object_min..=1.0)).collect();
    let mut data = Vec::with_capacity(cfg.width * cfg.height);
    for y in 0..cfg.height as u64 {
        for x in 0..cfg.width as u64 {
            let inside = truths
                .iter()
                .position(|t| x >= t.x.into() && x < t.right() && y >= t.y.into() && y < t.bottom());
            let v = match inside {
                Some(i) => (levels[i] - rng.gen_range(0.0..=cfg.background_max)).max(0.0),
                None => rng.gen_range(0.0..=cfg.background_max),
            };
            data.push(T::of(v));
        }
    }
    let image = GrayImage::new(cfg.width, cfg.height, data)?;
    Ok(TrainingImage { image, truths })
}

/// `count` scenes from a single seeded stream.
pub fn generate_corpus<T: Scalar>(cfg: &SceneConfig, count: usize, seed: u64) -> Result<Vec<TrainingImage<T>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| generate_scene(cfg, &mut rng)).collect()
}
