use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Row-major RGB image with channel values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<[f32; 3]>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize) -> Self {
        RgbImage {
            width,
            height,
            data: alloc::vec![[0.0; 3]; width * height],
        }
    }

    pub fn from_data(width: usize, height: usize, data: Vec<[f32; 3]>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::Shape {
                what: "image data",
                expected: width * height,
                found: data.len(),
            });
        }
        Ok(RgbImage {
            width,
            height,
            data,
        })
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [f32; 3] {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, c: [f32; 3]) {
        self.data[y * self.width + x] = c;
    }

    /// Rec. 601 luma.
    pub fn gray(&self) -> Vec<f32> {
        self.data
            .iter()
            .map(|c| 0.299 * c[0] + 0.587 * c[1] + 0.114 * c[2])
            .collect()
    }
}
