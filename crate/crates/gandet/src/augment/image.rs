use crate::error::{Error, Result};
use crate::tensorcore::Tensor;

/// RGB raster with values in [0,1], stored channel-major (CHW).
/// Grayscale content is represented as three equal channels.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    data: Vec<f64>, // 3 * height * width
}

impl Image {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Contract(format!(
                "image dims must be positive, got {height}x{width}"
            )));
        }
        if data.len() != 3 * height * width {
            return Err(Error::Contract(format!(
                "image {height}x{width} needs {} values, got {}",
                3 * height * width,
                data.len()
            )));
        }
        if data.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Contract(
                "image values must lie in [0,1] and be finite".into(),
            ));
        }
        Ok(Image {
            height,
            width,
            data,
        })
    }

    pub fn constant(height: usize, width: usize, value: f64) -> Self {
        Image {
            height,
            width,
            data: vec![value; 3 * height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f64) {
        self.data[(c * self.height + y) * self.width + x] = v;
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        &self.data[c * self.height * self.width..(c + 1) * self.height * self.width]
    }

    /// Build from a closure over (channel, y, x); values clamped to [0,1].
    pub fn from_fn(height: usize, width: usize, f: impl Fn(usize, usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(3 * height * width);
        for c in 0..3 {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(c, y, x).clamp(0.0, 1.0));
                }
            }
        }
        Image {
            height,
            width,
            data,
        }
    }

    /// Map every sample, clamping the result back into [0,1].
    pub fn map_clamped(&self, f: impl Fn(f64) -> f64) -> Image {
        Image {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f(v).clamp(0.0, 1.0)).collect(),
        }
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(vec![3, self.height, self.width], self.data.clone())
            .expect("image invariants guarantee a valid tensor")
    }

    /// Mean squared error against another image of identical dims.
    pub fn mse(&self, other: &Image) -> f64 {
        debug_assert_eq!((self.height, self.width), (other.height, other.width));
        let n = self.data.len() as f64;
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / n
    }

    /// PSNR in dB against a reference (peak 1.0). Infinite for identical images.
    pub fn psnr(&self, other: &Image) -> f64 {
        let mse = self.mse(other);
        if mse == 0.0 {
            f64::INFINITY
        } else {
            -10.0 * mse.log10()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_out_of_range_values() {
        assert!(Image::new(1, 1, vec![0.0, 0.5, 1.5]).is_err());
        assert!(Image::new(1, 1, vec![0.0, -0.1, 1.0]).is_err());
        assert!(Image::new(1, 2, vec![0.0; 6]).is_ok());
    }

    #[test]
    fn psnr_of_identical_images_is_infinite() {
        let img = Image::constant(4, 4, 0.3);
        assert!(img.psnr(&img).is_infinite());
    }
}
