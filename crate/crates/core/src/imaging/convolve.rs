use rayon::prelude::*;

use super::Plane;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

fn check_extent<T>(map: &Plane<T>, kernel: &Plane<T>) -> Result<(usize, usize)> {
    if kernel.width > map.width || kernel.height > map.height {
        return Err(Error::KernelTooLarge {
            kw: kernel.width,
            kh: kernel.height,
            mw: map.width,
            mh: map.height,
        });
    }
    Ok((map.width - kernel.width + 1, map.height - kernel.height + 1))
}

/// Valid-extent cross-correlation (the kernel is not flipped):
/// `out(px, py) = sum_{u,v} kernel(u, v) * map(px + u, py + v)`.
///
/// Output rows are computed in parallel; each row accumulates kernel taps in
/// `(v, u)` order as shifted row slices so the inner loop vectorizes.
pub fn convolve_valid<T: Scalar>(map: &Plane<T>, kernel: &Plane<T>) -> Result<Plane<T>> {
    let (ow, oh) = check_extent(map, kernel)?;
    let kh = kernel.height;
    let mut data = vec![T::zero(); ow * oh];
    data.par_chunks_mut(ow).enumerate().for_each(|(py, out)| {
        for v in 0..kh {
            let src = map.row(py + v);
            let taps = kernel.row(v);
            for (u, &k) in taps.iter().enumerate() {
                if k == T::zero() {
                    continue;
                }
                for (o, &m) in out.iter_mut().zip(&src[u..u + ow]) {
                    *o += k * m;
                }
            }
        }
    });
    Ok(Plane {
        width: ow,
        height: oh,
        data,
    })
}

/// Reference quadruple loop; the oracle for [`convolve_valid`].
pub fn convolve_valid_naive<T: Scalar>(map: &Plane<T>, kernel: &Plane<T>) -> Result<Plane<T>> {
    let (ow, oh) = check_extent(map, kernel)?;
    let mut data = Vec::with_capacity(ow * oh);
    for py in 0..oh {
        for px in 0..ow {
            let mut acc = T::zero();
            for v in 0..kernel.height {
                for u in 0..kernel.width {
                    acc += kernel.get(u, v) * map.get(px + u, py + v);
                }
            }
            data.push(acc);
        }
    }
    Ok(Plane {
        width: ow,
        height: oh,
        data,
    })
}
