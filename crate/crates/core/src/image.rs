//! Spatial image container used throughout the pipeline.

use crate::error::{Error, Result};

/// A multi-channel spatial image with real-valued pixels, row-major per
/// channel. Pipeline images are square and nominally scaled to `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    /// Channel-major, row-major within each channel; `channels * height * width` values.
    pub data: Vec<f64>,
}

impl Image {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        assert_eq!(
            data.len(),
            channels * height * width,
            "image buffer length does not match dimensions"
        );
        let img = Image {
            channels,
            height,
            width,
            data,
        };
        img.check_finite()?;
        Ok(img)
    }

    /// All-zero image.
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Image {
            channels,
            height,
            width,
            data: vec![0.0; channels * height * width],
        }
    }

    /// Constant-valued image.
    pub fn constant(channels: usize, height: usize, width: usize, value: f64) -> Self {
        Image {
            channels,
            height,
            width,
            data: vec![value; channels * height * width],
        }
    }

    pub fn is_square(&self) -> bool {
        self.height == self.width && self.height > 0
    }

    pub fn check_finite(&self) -> Result<()> {
        let plane = self.height * self.width;
        for (i, v) in self.data.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFiniteValue {
                    channel: if plane == 0 { 0 } else { i / plane },
                    index: if plane == 0 { i } else { i % plane },
                });
            }
        }
        Ok(())
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let plane = self.height * self.width;
        &self.data[c * plane..(c + 1) * plane]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        let plane = self.height * self.width;
        &mut self.data[c * plane..(c + 1) * plane]
    }

    /// Sum of squared pixel values over all channels.
    pub fn energy(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    /// Per-channel mean pixel value.
    pub fn channel_means(&self) -> Vec<f64> {
        let plane = (self.height * self.width) as f64;
        (0..self.channels)
            .map(|c| self.channel(c).iter().sum::<f64>() / plane)
            .collect()
    }

    /// Affine-map the whole image to `[0, 1]` (min-max over all channels).
    /// A flat image maps to all zeros.
    pub fn normalize_min_max(&mut self) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &v in &self.data {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        let range = hi - lo;
        if range <= f64::EPSILON * hi.abs().max(1.0) {
            self.data.iter_mut().for_each(|v| *v = 0.0);
        } else {
            self.data.iter_mut().for_each(|v| *v = (*v - lo) / range);
        }
    }

    /// Lossy f32 view in storage order (the on-disk representation).
    pub fn to_f32(&self) -> Vec<f32> {
        self.data.iter().map(|&v| v as f32).collect()
    }

    pub fn from_f32(channels: usize, height: usize, width: usize, data: &[f32]) -> Result<Self> {
        Image::new(
            channels,
            height,
            width,
            data.iter().map(|&v| v as f64).collect(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_finite() {
        let err = Image::new(1, 2, 2, vec![0.0, 1.0, f64::NAN, 0.5]).unwrap_err();
        match err {
            Error::NonFiniteValue { channel, index } => {
                assert_eq!((channel, index), (0, 2));
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn min_max_maps_to_unit_interval() {
        let mut img = Image::new(1, 2, 2, vec![-1.0, 0.0, 1.0, 3.0]).unwrap();
        img.normalize_min_max();
        assert_eq!(img.data, vec![0.0, 0.25, 0.5, 1.0]);
    }

    #[test]
    fn flat_image_normalizes_to_zero() {
        let mut img = Image::constant(1, 2, 2, 0.7);
        img.normalize_min_max();
        assert!(img.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn energy_sums_squares() {
        let img = Image::new(2, 1, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(img.energy(), 30.0);
    }
}
