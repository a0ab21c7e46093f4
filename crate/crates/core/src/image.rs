//! Minimal interleaved raster used by every branch of the tracker.
//!
//! Intensities are kept on the 0..=255 scale regardless of the scalar type so
//! that color distances and thresholds mean the same thing for `f32` and `f64`.

use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct Image<T> {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<T>,
}

impl<T: Real> Image<T> {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        Self {
            width,
            height,
            channels,
            data: vec![T::zero(); width * height * channels],
        }
    }

    pub fn from_vec(width: usize, height: usize, channels: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != width * height * channels {
            return Err(Error::Shape {
                expected: format!("{}", width * height * channels),
                got: format!("{}", data.len()),
            });
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    /// Builds an image by evaluating `f(x, y, c)` for every sample.
    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> T,
    ) -> Self {
        let mut data = Vec::with_capacity(width * height * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(x, y, c));
                }
            }
        }
        Self {
            width,
            height,
            channels,
            data,
        }
    }

    pub fn filled(width: usize, height: usize, color: &[T]) -> Self {
        Self::from_fn(width, height, color.len(), |_, _, c| color[c])
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
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> T {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: T) {
        let idx = (y * self.width + x) * self.channels + c;
        self.data[idx] = v;
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> &[T] {
        let start = (y * self.width + x) * self.channels;
        &self.data[start..start + self.channels]
    }

    /// Sample with integer coordinates clamped to the border (edge replication).
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize, c: usize) -> T {
        let xi = x.clamp(0, self.width as isize - 1) as usize;
        let yi = y.clamp(0, self.height as isize - 1) as usize;
        self.get(xi, yi, c)
    }

    /// Bilinear sample at continuous pixel-index coordinates (pixel `i` is
    /// centred on `i`). Out-of-range coordinates replicate the border.
    pub fn sample_bilinear(&self, x: T, y: T, c: usize) -> T {
        let x0 = x.floor();
        let y0 = y.floor();
        let fx = x - x0;
        let fy = y - y0;
        let xi = x0.to_isize().unwrap_or(0);
        let yi = y0.to_isize().unwrap_or(0);
        let p00 = self.get_clamped(xi, yi, c);
        let p10 = self.get_clamped(xi + 1, yi, c);
        let p01 = self.get_clamped(xi, yi + 1, c);
        let p11 = self.get_clamped(xi + 1, yi + 1, c);
        let one = T::one();
        (p00 * (one - fx) + p10 * fx) * (one - fy) + (p01 * (one - fx) + p11 * fx) * fy
    }

    /// Luma (ITU-R BT.601 weights) as a single-channel image.
    pub fn to_gray(&self) -> Image<T> {
        if self.channels == 1 {
            return self.clone();
        }
        let (wr, wg, wb) = (T::of(0.299), T::of(0.587), T::of(0.114));
        let data = self
            .data
            .chunks_exact(self.channels)
            .map(|p| wr * p[0] + wg * p[1] + wb * p[2])
            .collect();
        Image {
            width: self.width,
            height: self.height,
            channels: 1,
            data,
        }
    }

    /// Area-averaged downsampling so that the result fits in `max_w × max_h`.
    /// Returns the image and the factor (source px per output px, ≥ 1).
    pub fn fit_within(&self, max_w: usize, max_h: usize) -> (Image<T>, T) {
        let fx = self.width as f64 / max_w as f64;
        let fy = self.height as f64 / max_h as f64;
        let factor = fx.max(fy);
        if factor <= 1.0 {
            return (self.clone(), T::one());
        }
        let w = ((self.width as f64 / factor).floor() as usize).max(1);
        let h = ((self.height as f64 / factor).floor() as usize).max(1);
        let f = T::of(factor);
        let half = T::of(0.5);
        let out = Image::from_fn(w, h, self.channels, |x, y, c| {
            self.sample_bilinear(
                (T::of_usize(x) + half) * f - half,
                (T::of_usize(y) + half) * f - half,
                c,
            )
        });
        (out, f)
    }

    pub fn from_rgb8(img: &image::RgbImage) -> Self {
        let (w, h) = img.dimensions();
        let data = img.as_raw().iter().map(|&v| T::of(v as f64)).collect();
        Image {
            width: w as usize,
            height: h as usize,
            channels: 3,
            data,
        }
    }

    pub fn to_rgb8(&self) -> image::RgbImage {
        let mut out = image::RgbImage::new(self.width as u32, self.height as u32);
        for y in 0..self.height {
            for x in 0..self.width {
                let px = self.pixel(x, y);
                let ch = |c: usize| {
                    let v = if self.channels == 1 { px[0] } else { px[c] };
                    v.as_f64().round().clamp(0.0, 255.0) as u8
                };
                out.put_pixel(x as u32, y as u32, image::Rgb([ch(0), ch(1), ch(2)]));
            }
        }
        out
    }

    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let img = image::open(path.as_ref())?.to_rgb8();
        Ok(Self::from_rgb8(&img))
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_rgb8()
            .save_with_format(path.as_ref(), image::ImageFormat::Png)?;
        Ok(())
    }
}
