use super::{resize_region, FeatureWindow, GrayImage, Plane};
use crate::error::{Error, Result};
use crate::geometry::BoundingBox;
use crate::scalar::Scalar;

/// Per-pixel `sqrt(gx^2 + gy^2)`: central differences inside, one-sided
/// differences on the border.
pub fn gradient_magnitude<T: Scalar>(img: &GrayImage<T>) -> Result<Plane<T>> {
    let (w, h) = (img.width(), img.height());
    if w < 2 || h < 2 {
        return Err(Error::ImageTooSmall {
            width: w,
            height: h,
            min_width: 2,
            min_height: 2,
        });
    }
    let half = T::of(0.5);
    let p = img.pixels();
    let at = |x: usize, y: usize| p[y * w + x];
    let mut data = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let gx = if x == 0 {
                at(1, y) - at(0, y)
            } else if x == w - 1 {
                at(x, y) - at(x - 1, y)
            } else {
                (at(x + 1, y) - at(x - 1, y)) * half
            };
            let gy = if y == 0 {
                at(x, 1) - at(x, 0)
            } else if y == h - 1 {
                at(x, y) - at(x, y - 1)
            } else {
                (at(x, y + 1) - at(x, y - 1)) * half
            };
            data.push((gx * gx + gy * gy).sqrt());
        }
    }
    Ok(Plane {
        width: w,
        height: h,
        data,
    })
}

/// Crop, resample to `fw x fh`, then take gradient magnitudes.
pub fn extract_window_feature<T: Scalar>(
    img: &GrayImage<T>,
    window: &BoundingBox,
    fw: usize,
    fh: usize,
) -> Result<FeatureWindow<T>> {
    let patch = resize_region(img, window, fw, fh)?;
    gradient_magnitude(&patch)
}
