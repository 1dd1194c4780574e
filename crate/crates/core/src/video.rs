//! Video tensors (`f x c x h x w`, frame-major) and pixel metrics.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Highest PSNR reported; identical videos would otherwise be infinite.
pub const PSNR_CAP_DB: f64 = 99.0;

#[derive(Clone, Debug, PartialEq)]
pub struct Video {
    frames: usize,
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

/// Shape of a [`Video`] as `(f, c, h, w)`.
pub type VideoShape = (usize, usize, usize, usize);

impl Video {
    pub fn zeros(frames: usize, channels: usize, height: usize, width: usize) -> Self {
        Self {
            frames,
            channels,
            height,
            width,
            data: vec![0.0; frames * channels * height * width],
        }
    }

    pub fn from_vec(shape: VideoShape, data: Vec<f64>) -> Result<Self> {
        let (f, c, h, w) = shape;
        if data.len() != f * c * h * w {
            return Err(Error::Shape(format!(
                "{} values do not form a {f}x{c}x{h}x{w} video",
                data.len()
            )));
        }
        Ok(Self {
            frames: f,
            channels: c,
            height: h,
            width: w,
            data,
        })
    }

    /// Stacks single frames (`c x h x w` each).
    pub fn from_frames(frames: &[Vec<f64>], channels: usize, height: usize, width: usize) -> Result<Self> {
        let mut data = Vec::with_capacity(frames.len() * channels * height * width);
        for f in frames {
            if f.len() != channels * height * width {
                return Err(Error::Shape("frame size mismatch".into()));
            }
            data.extend_from_slice(f);
        }
        Self::from_vec((frames.len(), channels, height, width), data)
    }

    pub fn shape(&self) -> VideoShape {
        (self.frames, self.channels, self.height, self.width)
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn frame_len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn frame(&self, i: usize) -> &[f64] {
        let n = self.frame_len();
        &self.data[i * n..(i + 1) * n]
    }

    pub fn frame_mut(&mut self, i: usize) -> &mut [f64] {
        let n = self.frame_len();
        &mut self.data[i * n..(i + 1) * n]
    }

    #[inline]
    pub fn at(&self, f: usize, c: usize, y: usize, x: usize) -> f64 {
        self.data[((f * self.channels + c) * self.height + y) * self.width + x]
    }

    /// RGB triple at one pixel (first three channels).
    pub fn rgb(&self, f: usize, y: usize, x: usize) -> [f64; 3] {
        [self.at(f, 0, y, x), self.at(f, 1, y, x), self.at(f, 2, y, x)]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Video {
        Video {
            data: self.data.iter().map(|v| f(*v)).collect(),
            ..self.clone()
        }
    }

    pub fn clamped01(&self) -> Video {
        self.map(|v| v.clamp(0.0, 1.0))
    }

    /// Non-overlapping `factor x factor` spatial average pooling.
    pub fn avg_pool(&self, factor: usize) -> Result<Video> {
        if factor == 0 || self.height % factor != 0 || self.width % factor != 0 {
            return Err(Error::Shape(format!(
                "cannot pool {}x{} by {factor}",
                self.height, self.width
            )));
        }
        if factor == 1 {
            return Ok(self.clone());
        }
        let (h, w) = (self.height / factor, self.width / factor);
        let mut out = Video::zeros(self.frames, self.channels, h, w);
        let norm = 1.0 / (factor * factor) as f64;
        for f in 0..self.frames {
            for c in 0..self.channels {
                for y in 0..h {
                    for x in 0..w {
                        let mut acc = 0.0;
                        for dy in 0..factor {
                            for dx in 0..factor {
                                acc += self.at(f, c, y * factor + dy, x * factor + dx);
                            }
                        }
                        out.data[((f * self.channels + c) * h + y) * w + x] = acc * norm;
                    }
                }
            }
        }
        Ok(out)
    }

    /// Frames reordered by `order` (`order[i]` = source frame of frame `i`).
    pub fn permute_frames(&self, order: &[usize]) -> Video {
        let mut out = Video::zeros(order.len(), self.channels, self.height, self.width);
        for (i, &src) in order.iter().enumerate() {
            out.frame_mut(i).copy_from_slice(self.frame(src));
        }
        out
    }

    pub fn mse(&self, other: &Video) -> Result<f64> {
        if self.shape() != other.shape() {
            return Err(Error::Shape(format!(
                "mse of {:?} vs {:?}",
                self.shape(),
                other.shape()
            )));
        }
        let n = self.data.len().max(1) as f64;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / n)
    }
}

/// Writes each frame of a pixel video as `frame_0000.png`, ... under `dir`.
/// Values are clamped to `[0, 1]`; single-channel videos become grayscale.
pub fn write_png_frames(dir: &Path, video: &Video) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (f, c, h, w) = video.shape();
    if c != 1 && c != 3 {
        return Err(Error::Shape(format!("PNG export needs 1 or 3 channels, got {c}")));
    }
    for i in 0..f {
        let mut buf = image::RgbImage::new(w as u32, h as u32);
        for y in 0..h {
            for x in 0..w {
                let px = |ch: usize| (video.at(i, ch.min(c - 1), y, x).clamp(0.0, 1.0) * 255.0).round() as u8;
                buf.put_pixel(x as u32, y as u32, image::Rgb([px(0), px(1), px(2)]));
            }
        }
        let path = dir.join(format!("frame_{i:04}.png"));
        buf.save(&path).map_err(|e| Error::format(&path, e.to_string()))?;
    }
    Ok(())
}

/// Pixel values in `[0, 1]` map to model latents in `[-1, 1]`.
pub fn pixels_to_latent(v: &Video) -> Video {
    v.map(|p| 2.0 * p - 1.0)
}

pub fn latent_to_pixels(v: &Video) -> Video {
    v.map(|z| ((z + 1.0) * 0.5).clamp(0.0, 1.0))
}

/// PSNR in dB for signals in `[0, 1]`, capped at [`PSNR_CAP_DB`].
pub fn psnr(a: &Video, b: &Video) -> Result<f64> {
    let mse = a.mse(b)?;
    Ok(psnr_from_mse(mse))
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse <= 0.0 {
        return PSNR_CAP_DB;
    }
    (-10.0 * mse.log10()).min(PSNR_CAP_DB)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pooling_averages_blocks() {
        let v = Video::from_vec((1, 1, 2, 2), vec![0.0, 1.0, 0.5, 0.5]).unwrap();
        let p = v.avg_pool(2).unwrap();
        assert_eq!(p.shape(), (1, 1, 1, 1));
        assert_eq!(p.data(), &[0.5]);
        assert!(v.avg_pool(3).is_err());
    }

    #[test]
    fn psnr_values() {
        let a = Video::zeros(1, 3, 2, 2);
        assert_eq!(psnr(&a, &a).unwrap(), PSNR_CAP_DB);
        let b = a.map(|_| 0.1);
        assert!((psnr(&a, &b).unwrap() - 20.0).abs() < 1e-9);
        let c = Video::zeros(2, 3, 2, 2);
        assert!(psnr(&a, &c).is_err());
    }

    #[test]
    fn latent_mapping_round_trips() {
        let v = Video::from_vec((1, 1, 1, 3), vec![0.0, 0.25, 1.0]).unwrap();
        let z = pixels_to_latent(&v);
        assert_eq!(z.data(), &[-1.0, -0.5, 1.0]);
        assert_eq!(latent_to_pixels(&z), v);
    }
}
