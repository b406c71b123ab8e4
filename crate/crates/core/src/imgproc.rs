//! Integer image primitives shared by the feature trackers.
//!
//! Everything here works on 8-bit grayscale frames and integer accumulators
//! so results are bit-exact no matter how many rayon workers run the rows.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Row-major 8-bit grayscale frame.
#[derive(Clone, PartialEq, Eq)]
pub struct Image8 {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl std::fmt::Debug for Image8 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Image8")
            .field("width", &self.width)
            .field("height", &self.height)
            .finish_non_exhaustive()
    }
}

impl Image8 {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::DimensionTooSmall {
                width,
                height,
                min_width: 1,
                min_height: 1,
            });
        }
        if data.len() != width * height {
            return Err(Error::BufferSize {
                expected: width * height,
                actual: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Frame where every pixel holds `value`.
    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: u8) {
        self.data[y * self.width + x] = value;
    }

    #[inline]
    pub fn row(&self, y: usize) -> &[u8] {
        &self.data[y * self.width..(y + 1) * self.width]
    }

    /// Signed pixel access; `None` outside the frame.
    #[inline]
    pub fn get_signed(&self, x: isize, y: isize) -> Option<u8> {
        if x < 0 || y < 0 || x as usize >= self.width || y as usize >= self.height {
            None
        } else {
            Some(self.get(x as usize, y as usize))
        }
    }

    /// Bilinear sample at a real-valued pixel position, clamped at the edges.
    pub fn sample_bilinear(&self, x: f64, y: f64) -> f64 {
        let max_x = (self.width - 1) as f64;
        let max_y = (self.height - 1) as f64;
        let x = x.clamp(0.0, max_x);
        let y = y.clamp(0.0, max_y);
        let x0 = x.floor() as usize;
        let y0 = y.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let top = self.get(x0, y0) as f64 * (1.0 - fx) + self.get(x1, y0) as f64 * fx;
        let bottom = self.get(x0, y1) as f64 * (1.0 - fx) + self.get(x1, y1) as f64 * fx;
        top * (1.0 - fy) + bottom * fy
    }

    pub(crate) fn require_at_least(&self, min_width: usize, min_height: usize) -> Result<()> {
        if self.width < min_width || self.height < min_height {
            Err(Error::DimensionTooSmall {
                width: self.width,
                height: self.height,
                min_width,
                min_height,
            })
        } else {
            Ok(())
        }
    }
}

/// Horizontal and vertical first-order gradients of an [`Image8`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GradientPair {
    pub width: usize,
    pub height: usize,
    pub ix: Vec<i16>,
    pub iy: Vec<i16>,
}

impl GradientPair {
    #[inline]
    pub fn ix_at(&self, x: usize, y: usize) -> i16 {
        self.ix[y * self.width + x]
    }

    #[inline]
    pub fn iy_at(&self, x: usize, y: usize) -> i16 {
        self.iy[y * self.width + x]
    }
}

/// 3x3 Sobel gradients. The one-pixel border is left at zero.
pub fn sobel3(img: &Image8) -> Result<GradientPair> {
    img.require_at_least(3, 3)?;
    let (w, h) = (img.width, img.height);
    let mut ix = vec![0i16; w * h];
    let mut iy = vec![0i16; w * h];

    ix.par_chunks_mut(w)
        .zip(iy.par_chunks_mut(w))
        .enumerate()
        .filter(|(y, _)| *y >= 1 && *y + 1 < h)
        .for_each(|(y, (row_x, row_y))| {
            let up = img.row(y - 1);
            let mid = img.row(y);
            let down = img.row(y + 1);
            for x in 1..w - 1 {
                let p = |r: &[u8], dx: usize| r[x + dx - 1] as i16;
                row_x[x] = (p(up, 2) + 2 * p(mid, 2) + p(down, 2)) - (p(up, 0) + 2 * p(mid, 0) + p(down, 0));
                row_y[x] = (p(down, 0) + 2 * p(down, 1) + p(down, 2)) - (p(up, 0) + 2 * p(up, 1) + p(up, 2));
            }
        });

    Ok(GradientPair {
        width: w,
        height: h,
        ix,
        iy,
    })
}

/// Binomial weights; the outer product of this vector with itself sums to 256.
pub const BLUR5_TAPS: [u16; 5] = [1, 4, 6, 4, 1];

/// 5x5 entry of the blur kernel at `(dx, dy)` in `0..5`.
#[inline]
pub const fn blur5_weight(dx: usize, dy: usize) -> u16 {
    BLUR5_TAPS[dx] * BLUR5_TAPS[dy]
}

/// Approximate 5x5 Gaussian blur with an 8-bit kernel summing to 256.
///
/// The two-pixel frame border is copied unchanged. Interior values are
/// accumulated in `u16` and rounded half-up when dividing by 256.
pub fn gaussian_blur5(img: &Image8) -> Result<Image8> {
    img.require_at_least(5, 5)?;
    let (w, h) = (img.width, img.height);
    let mut out = img.data.clone();

    out.par_chunks_mut(w)
        .enumerate()
        .filter(|(y, _)| *y >= 2 && *y + 2 < h)
        .for_each(|(y, row)| {
            for (x, px) in row.iter_mut().enumerate().take(w - 2).skip(2) {
                let mut acc: u16 = 0;
                for dy in 0..5 {
                    let src = img.row(y + dy - 2);
                    for dx in 0..5 {
                        acc += blur5_weight(dx, dy) * src[x + dx - 2] as u16;
                    }
                }
                *px = ((acc as u32 + 128) >> 8) as u8;
            }
        });

    Ok(Image8 {
        width: w,
        height: h,
        data: out,
    })
}
