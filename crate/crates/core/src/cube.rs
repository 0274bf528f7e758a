//! Domain data types: hyperspectral cubes, coded masks, and measurements.

use crate::error::{Error, Result};

/// An `H×W×B` nonnegative reflectance volume. Data is stored band-major
/// (band, row, column), matching the on-disk layout in [`crate::store`].
#[derive(Debug, Clone, PartialEq)]
pub struct HyperspectralCube {
    pub height: usize,
    pub width: usize,
    pub bands: usize,
    pub data: Vec<f64>,
}

impl HyperspectralCube {
    pub fn zeros(height: usize, width: usize, bands: usize) -> Self {
        assert!(height >= 1 && width >= 1 && bands >= 1, "empty cube");
        HyperspectralCube {
            height,
            width,
            bands,
            data: vec![0.0; height * width * bands],
        }
    }

    pub fn from_vec(height: usize, width: usize, bands: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), height * width * bands, "cube data length");
        assert!(height >= 1 && width >= 1 && bands >= 1, "empty cube");
        HyperspectralCube {
            height,
            width,
            bands,
            data,
        }
    }

    #[inline]
    pub fn idx(&self, band: usize, row: usize, col: usize) -> usize {
        (band * self.height + row) * self.width + col
    }

    #[inline]
    pub fn get(&self, band: usize, row: usize, col: usize) -> f64 {
        self.data[self.idx(band, row, col)]
    }

    #[inline]
    pub fn band(&self, band: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.data[band * n..(band + 1) * n]
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn same_shape(&self, other: &HyperspectralCube) -> bool {
        self.height == other.height && self.width == other.width && self.bands == other.bands
    }
}

/// Binary coded aperture; entries are exactly 0 or 1.
#[derive(Debug, Clone, PartialEq)]
pub struct CodedMask {
    pub height: usize,
    pub width: usize,
    pub data: Vec<u8>,
}

impl CodedMask {
    pub fn from_vec(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::Dim(format!(
                "mask data length {} != {}x{}",
                data.len(),
                height,
                width
            )));
        }
        if let Some(bad) = data.iter().find(|&&v| v > 1) {
            return Err(Error::Domain(format!(
                "mask entries must be 0 or 1, found {bad}"
            )));
        }
        Ok(CodedMask {
            height,
            width,
            data,
        })
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col] as f64
    }

    pub fn density(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum::<f64>() / self.data.len() as f64
    }
}

/// A coded snapshot: an `H×(W + d·(B−1))` image plus the sensing geometry
/// `(d, bands)` it was produced with.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    pub height: usize,
    /// Width of the detector plane, `W + d·(B−1)`.
    pub width_ext: usize,
    /// Per-band shift step in pixels.
    pub d: usize,
    pub bands: usize,
    pub data: Vec<f64>,
}

impl Measurement {
    pub fn zeros(height: usize, scene_width: usize, d: usize, bands: usize) -> Self {
        let width_ext = scene_width + d * (bands - 1);
        Measurement {
            height,
            width_ext,
            d,
            bands,
            data: vec![0.0; height * width_ext],
        }
    }

    /// Scene width `W` recovered from the detector width.
    pub fn scene_width(&self) -> usize {
        self.width_ext - self.d * (self.bands - 1)
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width_ext + col]
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    /// Check that this measurement's geometry matches `mask` under its own
    /// `(d, bands)` metadata.
    pub fn check_geometry(&self, mask: &CodedMask) -> Result<()> {
        if self.height != mask.height {
            return Err(Error::Dim(format!(
                "measurement height {} != mask height {}",
                self.height, mask.height
            )));
        }
        let expect = mask.width + self.d * (self.bands - 1);
        if self.width_ext != expect {
            return Err(Error::Dim(format!(
                "measurement width {} != W + d(B-1) = {}",
                self.width_ext, expect
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn measurement_width_law() {
        let m = Measurement::zeros(4, 6, 2, 3);
        assert_eq!(m.width_ext, 6 + 2 * 2);
        assert_eq!(m.scene_width(), 6);
    }

    #[test]
    fn mask_rejects_nonbinary() {
        assert!(CodedMask::from_vec(1, 2, vec![0, 2]).is_err());
        assert!(CodedMask::from_vec(1, 2, vec![0, 1]).is_ok());
    }

    #[test]
    fn mask_rejects_bad_length() {
        assert!(CodedMask::from_vec(2, 2, vec![0, 1, 1]).is_err());
    }
}
