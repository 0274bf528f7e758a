//! The CASSI sensing operator: binary mask modulation, per-band lateral
//! shift by `d·(i−1)` pixels, and summation on the detector, plus its adjoint
//! and sensor-noise simulation.
//!
//! Shift convention: band `i` (0-based) occupies detector columns
//! `d·i .. d·i + W`. Out-of-range indices contribute zero.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::cube::{CodedMask, HyperspectralCube, Measurement};
use crate::error::{Error, Result};
use crate::exec;

/// Sensor noise model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseModel {
    None,
    /// Photon shot noise at the given bit depth: the measurement is scaled
    /// so its maximum maps to `2^bits − 1` counts, Poisson-sampled per
    /// pixel, and rescaled back.
    Shot { bits: u32 },
}

/// Sensing geometry and noise configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensingConfig {
    /// Per-band shift step in pixels (may be zero).
    pub d: usize,
    pub noise: NoiseModel,
    pub seed: u64,
}

impl SensingConfig {
    pub fn validate(&self) -> Result<()> {
        if let NoiseModel::Shot { bits } = self.noise {
            if bits == 0 {
                return Err(Error::Param("shot noise bits must be >= 1".into()));
            }
        }
        Ok(())
    }
}

/// Draw an `height×width` binary mask with i.i.d. Bernoulli(`density`)
/// entries. Deterministic for a given `(height, width, density, seed)`.
pub fn make_mask(height: usize, width: usize, density: f64, seed: u64) -> Result<CodedMask> {
    if !(0.0..=1.0).contains(&density) {
        return Err(Error::Param(format!(
            "mask density must be in [0,1], got {density}"
        )));
    }
    if height == 0 || width == 0 {
        return Err(Error::Param("mask must be at least 1x1".into()));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let data: Vec<u8> = (0..height * width)
        .map(|_| u8::from(rng.gen::<f64>() < density))
        .collect();
    CodedMask::from_vec(height, width, data)
}

/// Low-level forward kernel: `out` must be zeroed, length `h·(w + d(b−1))`.
pub(crate) fn forward_into(
    cube: &[f64],
    mask: &CodedMask,
    d: usize,
    bands: usize,
    out: &mut [f64],
) {
    let (h, w) = (mask.height, mask.width);
    let w_ext = w + d * (bands - 1);
    exec::for_each_chunk_mut(out, w_ext, |u, row_out| {
        let mrow = &mask.data[u * w..(u + 1) * w];
        for j in 0..bands {
            let off = d * j;
            let xrow = &cube[(j * h + u) * w..(j * h + u + 1) * w];
            let dst = &mut row_out[off..off + w];
            for ((o, &m), &x) in dst.iter_mut().zip(mrow.iter()).zip(xrow.iter()) {
                *o += m as f64 * x;
            }
        }
    });
}

/// Low-level adjoint kernel: writes the cube `Φᵀ y` into `out`
/// (length `b·h·w`).
pub(crate) fn adjoint_into(
    meas: &[f64],
    mask: &CodedMask,
    d: usize,
    bands: usize,
    out: &mut [f64],
) {
    let (h, w) = (mask.height, mask.width);
    let w_ext = w + d * (bands - 1);
    let plane = h * w;
    exec::for_each_chunk_mut(out, plane, |j, band_out| {
        let off = d * j;
        for u in 0..h {
            let mrow = &mask.data[u * w..(u + 1) * w];
            let yrow = &meas[u * w_ext + off..u * w_ext + off + w];
            let orow = &mut band_out[u * w..(u + 1) * w];
            for ((o, &m), &y) in orow.iter_mut().zip(mrow.iter()).zip(yrow.iter()) {
                *o = m as f64 * y;
            }
        }
    });
}

/// Apply the forward operator `Φ` to a cube: modulate each band by the mask,
/// shift band `i` by `d·i` columns, and sum. Noiseless; see [`add_noise`].
pub fn forward(cube: &HyperspectralCube, mask: &CodedMask, d: usize) -> Result<Measurement> {
    if cube.height != mask.height || cube.width != mask.width {
        return Err(Error::Dim(format!(
            "cube {}x{} vs mask {}x{}",
            cube.height, cube.width, mask.height, mask.width
        )));
    }
    let mut out = Measurement::zeros(cube.height, cube.width, d, cube.bands);
    forward_into(&cube.data, mask, d, cube.bands, &mut out.data);
    Ok(out)
}

/// Apply the exact linear adjoint `Φᵀ`: `(Φᵀy)(u,v,i) = M(u,v)·Y(u, v+d·i)`.
pub fn adjoint(meas: &Measurement, mask: &CodedMask) -> Result<HyperspectralCube> {
    meas.check_geometry(mask)?;
    let mut out = HyperspectralCube::zeros(mask.height, mask.width, meas.bands);
    adjoint_into(&meas.data, mask, meas.d, meas.bands, &mut out.data);
    Ok(out)
}

/// Diagonal of `ΦΦᵀ` laid out on the measurement plane:
/// entry `(u,v)` is `Σ_i M(u, v−d·i)²` over in-range bands.
pub fn phi_phit_diag(mask: &CodedMask, d: usize, bands: usize) -> Measurement {
    assert!(bands >= 1, "bands must be >= 1");
    let (h, w) = (mask.height, mask.width);
    let mut out = Measurement::zeros(h, w, d, bands);
    let w_ext = out.width_ext;
    for u in 0..h {
        let mrow = &mask.data[u * w..(u + 1) * w];
        let orow = &mut out.data[u * w_ext..(u + 1) * w_ext];
        for j in 0..bands {
            let off = d * j;
            for (o, &m) in orow[off..off + w].iter_mut().zip(mrow.iter()) {
                // binary mask: M² = M
                *o += (m as f64) * (m as f64);
            }
        }
    }
    out
}

/// Simulate sensor noise on a measurement. Deterministic given `cfg.seed`.
pub fn add_noise(meas: &Measurement, cfg: &SensingConfig) -> Result<Measurement> {
    cfg.validate()?;
    match cfg.noise {
        NoiseModel::None => Ok(meas.clone()),
        NoiseModel::Shot { bits } => {
            if meas.data.iter().any(|&v| v < 0.0) {
                return Err(Error::Domain(
                    "shot noise requires a nonnegative measurement".into(),
                ));
            }
            let max = meas.data.iter().cloned().fold(0.0_f64, f64::max);
            if max == 0.0 {
                // scale undefined; defined as identity
                return Ok(meas.clone());
            }
            let full_scale = ((1u64 << bits) - 1) as f64;
            let scale = full_scale / max;
            let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
            let mut out = meas.clone();
            for v in out.data.iter_mut() {
                let lambda = *v * scale;
                if lambda > 0.0 {
                    let p = Poisson::new(lambda).expect("positive lambda");
                    *v = p.sample(&mut rng) / scale;
                }
            }
            Ok(out)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ones_mask(h: usize, w: usize) -> CodedMask {
        CodedMask::from_vec(h, w, vec![1; h * w]).unwrap()
    }

    #[test]
    fn mask_degenerate_densities() {
        let m1 = make_mask(4, 4, 1.0, 3).unwrap();
        assert!(m1.data.iter().all(|&v| v == 1));
        let m0 = make_mask(4, 4, 0.0, 3).unwrap();
        assert!(m0.data.iter().all(|&v| v == 0));
    }

    #[test]
    fn mask_deterministic() {
        let a = make_mask(64, 64, 0.5, 7).unwrap();
        let b = make_mask(64, 64, 0.5, 7).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn mask_density_out_of_range() {
        assert!(matches!(make_mask(2, 2, 1.5, 0), Err(Error::Param(_))));
    }

    #[test]
    fn forward_zero_cube() {
        let cube = HyperspectralCube::zeros(3, 4, 2);
        let mask = make_mask(3, 4, 0.5, 1).unwrap();
        let y = forward(&cube, &mask, 1).unwrap();
        assert!(y.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn forward_single_band_is_masked_image() {
        let mask = make_mask(3, 4, 0.5, 11).unwrap();
        let cube = HyperspectralCube::from_vec(3, 4, 1, (0..12).map(|i| i as f64).collect());
        let y = forward(&cube, &mask, 2).unwrap();
        assert_eq!(y.width_ext, 4);
        for u in 0..3 {
            for v in 0..4 {
                assert_eq!(y.get(u, v), mask.at(u, v) * cube.get(0, u, v));
            }
        }
    }

    #[test]
    fn forward_hand_computed_2x2x2() {
        // band 0 = [[1,2],[3,4]], band 1 = [[5,6],[7,8]], all-ones mask, d=1
        let cube =
            HyperspectralCube::from_vec(2, 2, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]);
        let mask = ones_mask(2, 2);
        let y = forward(&cube, &mask, 1).unwrap();
        assert_eq!(y.width_ext, 3);
        assert_eq!(y.data, vec![1.0, 7.0, 6.0, 3.0, 11.0, 8.0]);
    }

    #[test]
    fn forward_shape_mismatch() {
        let cube = HyperspectralCube::zeros(3, 4, 2);
        let mask = ones_mask(3, 5);
        assert!(matches!(forward(&cube, &mask, 1), Err(Error::Dim(_))));
    }

    #[test]
    fn adjoint_zero_measurement() {
        let mask = make_mask(4, 4, 0.5, 5).unwrap();
        let y = Measurement::zeros(4, 4, 1, 3);
        let x = adjoint(&y, &mask).unwrap();
        assert!(x.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn adjoint_single_band() {
        let mask = make_mask(3, 4, 0.5, 2).unwrap();
        let mut y = Measurement::zeros(3, 4, 1, 1);
        for (i, v) in y.data.iter_mut().enumerate() {
            *v = i as f64 + 1.0;
        }
        let x = adjoint(&y, &mask).unwrap();
        for u in 0..3 {
            for v in 0..4 {
                assert_eq!(x.get(0, u, v), mask.at(u, v) * y.get(u, v));
            }
        }
    }

    #[test]
    fn adjoint_geometry_mismatch() {
        let mask = ones_mask(3, 4);
        let y = Measurement::zeros(3, 5, 1, 3); // width_ext 7, expected 6
        assert!(matches!(adjoint(&y, &mask), Err(Error::Dim(_))));
    }

    #[test]
    fn diag_single_band_equals_mask() {
        let mask = make_mask(4, 5, 0.5, 9).unwrap();
        let dg = phi_phit_diag(&mask, 3, 1);
        assert_eq!(dg.width_ext, 5);
        for u in 0..4 {
            for v in 0..5 {
                assert_eq!(dg.get(u, v), mask.at(u, v));
            }
        }
    }

    #[test]
    fn diag_all_ones_interior() {
        // all-ones mask, B=4, d=1: a column covered by all 4 bands sums to 4
        let mask = ones_mask(2, 8);
        let dg = phi_phit_diag(&mask, 1, 4);
        assert_eq!(dg.get(0, 3), 4.0);
        // edges are covered by fewer bands
        assert_eq!(dg.get(0, 0), 1.0);
        assert_eq!(dg.get(0, 1), 2.0);
        assert_eq!(dg.get(0, dg.width_ext - 1), 1.0);
    }

    #[test]
    fn diag_zero_mask() {
        let mask = CodedMask::from_vec(3, 3, vec![0; 9]).unwrap();
        let dg = phi_phit_diag(&mask, 1, 2);
        assert!(dg.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn noise_none_is_identity() {
        let mut y = Measurement::zeros(2, 3, 1, 2);
        y.data[3] = 0.7;
        let cfg = SensingConfig {
            d: 1,
            noise: NoiseModel::None,
            seed: 0,
        };
        assert_eq!(add_noise(&y, &cfg).unwrap(), y);
    }

    #[test]
    fn noise_zero_measurement_unchanged() {
        let y = Measurement::zeros(2, 3, 1, 2);
        let cfg = SensingConfig {
            d: 1,
            noise: NoiseModel::Shot { bits: 11 },
            seed: 1,
        };
        assert_eq!(add_noise(&y, &cfg).unwrap(), y);
    }

    #[test]
    fn noise_rejects_negative() {
        let mut y = Measurement::zeros(2, 3, 1, 2);
        y.data[0] = -0.1;
        let cfg = SensingConfig {
            d: 1,
            noise: NoiseModel::Shot { bits: 11 },
            seed: 1,
        };
        assert!(matches!(add_noise(&y, &cfg), Err(Error::Domain(_))));
    }

    #[test]
    fn shot_noise_preserves_mean() {
        // constant measurement, 10^4 pixels: sample mean within 1% of c
        let c = 0.42;
        let mut y = Measurement::zeros(100, 100, 0, 1);
        y.data.fill(c);
        let cfg = SensingConfig {
            d: 0,
            noise: NoiseModel::Shot { bits: 11 },
            seed: 123,
        };
        let noisy = add_noise(&y, &cfg).unwrap();
        let mean = noisy.data.iter().sum::<f64>() / noisy.data.len() as f64;
        assert!(
            (mean - c).abs() < 0.01 * c,
            "mean {mean} deviates from {c} by more than 1%"
        );
        assert_ne!(noisy, y);
    }

    #[test]
    fn shot_noise_deterministic() {
        let mut y = Measurement::zeros(8, 8, 0, 1);
        for (i, v) in y.data.iter_mut().enumerate() {
            *v = (i % 7) as f64 * 0.1;
        }
        let cfg = SensingConfig {
            d: 0,
            noise: NoiseModel::Shot { bits: 11 },
            seed: 77,
        };
        assert_eq!(add_noise(&y, &cfg).unwrap(), add_noise(&y, &cfg).unwrap());
    }
}
