use super::{GrayImage, Plane};
use crate::error::{Error, Result};
use crate::geometry::BoundingBox;
use crate::scalar::Scalar;

/// Corner-aligned bilinear resampling of the whole image.
pub fn resize_bilinear<T: Scalar>(img: &GrayImage<T>, new_w: usize, new_h: usize) -> Result<GrayImage<T>> {
    let full = BoundingBox {
        x: 0,
        y: 0,
        w: img.width() as u32,
        h: img.height() as u32,
    };
    resize_region(img, &full, new_w, new_h)
}

/// Source coordinates of each output sample along one axis. The first and
/// last samples land on the region's first and last pixel centers; a single
/// output sample lands on the region's midpoint.
fn sample_positions(start: usize, len: usize, out: usize) -> Vec<(usize, usize, f64)> {
    (0..out)
        .map(|i| {
            let offset = if out == 1 {
                (len - 1) as f64 / 2.0
            } else {
                (i * (len - 1)) as f64 / (out - 1) as f64
            };
            let lo = offset.floor() as usize;
            let hi = (lo + 1).min(len - 1);
            (start + lo, start + hi, offset - lo as f64)
        })
        .collect()
}

#[inline]
fn lerp<T: Scalar>(a: T, b: T, t: T) -> T {
    let v = a + t * (b - a);
    // keep rounding from stepping outside the endpoints
    v.max(a.min(b)).min(a.max(b))
}

/// Crops `region` and resamples it to `new_w x new_h` in one pass.
pub fn resize_region<T: Scalar>(
    img: &GrayImage<T>,
    region: &BoundingBox,
    new_w: usize,
    new_h: usize,
) -> Result<GrayImage<T>> {
    if new_w == 0 || new_h == 0 {
        return Err(Error::InvalidDimensions {
            width: new_w,
            height: new_h,
        });
    }
    if !region.fits_within(img.width(), img.height()) {
        return Err(Error::OutOfBounds {
            x: region.x,
            y: region.y,
            w: region.w,
            h: region.h,
            width: img.width(),
            height: img.height(),
        });
    }
    let xs = sample_positions(region.x as usize, region.w as usize, new_w);
    let ys = sample_positions(region.y as usize, region.h as usize, new_h);
    let mut data = Vec::with_capacity(new_w * new_h);
    for &(y0, y1, fy) in &ys {
        let fy = T::of(fy);
        let (r0, r1) = (img.as_plane().row(y0), img.as_plane().row(y1));
        for &(x0, x1, fx) in &xs {
            let fx = T::of(fx);
            let top = lerp(r0[x0], r0[x1], fx);
            let bottom = lerp(r1[x0], r1[x1], fx);
            data.push(lerp(top, bottom, fy));
        }
    }
    Ok(GrayImage::from_plane_unchecked(Plane {
        width: new_w,
        height: new_h,
        data,
    }))
}
