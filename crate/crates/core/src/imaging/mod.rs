//! Grayscale images, gradient features and the dense correlation engine.

mod convolve;
mod gradient;
mod pgm;
mod resize;

pub use convolve::{convolve_valid, convolve_valid_naive};
pub use gradient::{extract_window_feature, gradient_magnitude};
pub use pgm::{load_pgm, read_pgm, save_pgm, write_pgm};
pub use resize::{resize_bilinear, resize_region};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dense row-major 2-D array of reals.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

/// Fixed-size gradient feature, the input of a linear filter.
pub type FeatureWindow<T> = Plane<T>;

impl<T: Scalar> Plane<T> {
    pub fn new(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidDimensions { width, height });
        }
        if data.len() != width * height {
            return Err(Error::LengthMismatch {
                expected: width * height,
                actual: data.len(),
            });
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> T {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn row(&self, y: usize) -> &[T] {
        &self.data[y * self.width..(y + 1) * self.width]
    }

    /// Copies the `w x h` block with top-left corner `(x, y)`, row-major.
    pub fn window(&self, x: usize, y: usize, w: usize, h: usize) -> Vec<T> {
        let mut out = Vec::with_capacity(w * h);
        for yy in y..y + h {
            out.extend_from_slice(&self.row(yy)[x..x + w]);
        }
        out
    }
}

/// Single-channel image with intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage<T>(Plane<T>);

impl<T: Scalar> GrayImage<T> {
    pub fn new(width: usize, height: usize, pixels: Vec<T>) -> Result<Self> {
        if let Some(i) = pixels.iter().position(|&p| !(p >= T::zero() && p <= T::one())) {
            return Err(Error::InvalidParameter(format!(
                "pixel {i} has intensity {} outside [0,1]",
                pixels[i]
            )));
        }
        Plane::new(width, height, pixels).map(Self)
    }

    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Self(Plane::filled(width, height, value.max(T::zero()).min(T::one())))
    }

    pub(crate) fn from_plane_unchecked(plane: Plane<T>) -> Self {
        Self(plane)
    }

    pub fn width(&self) -> usize {
        self.0.width
    }

    pub fn height(&self) -> usize {
        self.0.height
    }

    pub fn pixels(&self) -> &[T] {
        &self.0.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> T {
        self.0.get(x, y)
    }

    pub fn as_plane(&self) -> &Plane<T> {
        &self.0
    }
}

/// Converts interleaved 8-bit RGB to luma `0.299 R + 0.587 G + 0.114 B`.
pub fn to_grayscale<T: Scalar>(rgb: &[u8], width: usize, height: usize) -> Result<GrayImage<T>> {
    if rgb.len() != 3 * width * height {
        return Err(Error::LengthMismatch {
            expected: 3 * width * height,
            actual: rgb.len(),
        });
    }
    let pixels = rgb
        .chunks_exact(3)
        .map(|p| {
            let luma = 0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64;
            T::of((luma / 255.0).clamp(0.0, 1.0))
        })
        .collect();
    Plane::new(width, height, pixels).map(GrayImage)
}

/// Dense classifier responses of one level over one rescaled image.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseMap<T> {
    pub level_id: usize,
    pub scores: Plane<T>,
    /// Rescaled-pixels per original pixel along x.
    pub scale_x: f64,
    pub scale_y: f64,
}

impl<T: Scalar> ResponseMap<T> {
    pub fn width(&self) -> usize {
        self.scores.width()
    }

    pub fn height(&self) -> usize {
        self.scores.height()
    }
}
