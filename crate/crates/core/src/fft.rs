//! Thin 2-D FFT helpers over `rustfft`.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

/// Forward 2-D DFT of a real `h×w` image (row-major), unnormalized
/// (`X[0,0]` is the plain sum).
pub fn dft2(data: &[f64], h: usize, w: usize) -> Vec<Complex64> {
    assert_eq!(data.len(), h * w);
    let mut buf: Vec<Complex64> = data.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    dft2_inplace(&mut buf, h, w, false);
    buf
}

/// Inverse 2-D DFT with `1/(h·w)` normalization; returns the real part.
pub fn idft2_real(spec: &[Complex64], h: usize, w: usize) -> Vec<f64> {
    assert_eq!(spec.len(), h * w);
    let mut buf = spec.to_vec();
    dft2_inplace(&mut buf, h, w, true);
    let norm = 1.0 / (h * w) as f64;
    buf.iter().map(|c| c.re * norm).collect()
}

fn dft2_inplace(buf: &mut [Complex64], h: usize, w: usize, inverse: bool) {
    let mut planner = FftPlanner::new();
    let row_fft = if inverse {
        planner.plan_fft_inverse(w)
    } else {
        planner.plan_fft_forward(w)
    };
    for row in buf.chunks_mut(w) {
        row_fft.process(row);
    }
    let col_fft = if inverse {
        planner.plan_fft_inverse(h)
    } else {
        planner.plan_fft_forward(h)
    };
    let mut col = vec![Complex64::new(0.0, 0.0); h];
    for x in 0..w {
        for y in 0..h {
            col[y] = buf[y * w + x];
        }
        col_fft.process(&mut col);
        for y in 0..h {
            buf[y * w + x] = col[y];
        }
    }
}

/// Circular 2-D convolution of `data` with the frequency response `freq`
/// (length `h·w`), returned in the spatial domain.
pub fn circular_filter(data: &[f64], freq: &[f64], h: usize, w: usize) -> Vec<f64> {
    let mut spec = dft2(data, h, w);
    for (s, &f) in spec.iter_mut().zip(freq) {
        *s *= f;
    }
    idft2_real(&spec, h, w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let data: Vec<f64> = (0..12).map(|i| (i as f64 * 0.7).sin()).collect();
        let spec = dft2(&data, 3, 4);
        let back = idft2_real(&spec, 3, 4);
        for (a, b) in data.iter().zip(&back) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn dc_bin_is_sum() {
        let data = vec![1.0, 2.0, 3.0, 4.0];
        let spec = dft2(&data, 2, 2);
        assert!((spec[0].re - 10.0).abs() < 1e-12);
        assert!(spec[0].im.abs() < 1e-12);
    }

    #[test]
    fn all_ones_filter_is_identity() {
        let data: Vec<f64> = (0..20).map(|i| (i as f64).cos()).collect();
        let freq = vec![1.0; 20];
        let out = circular_filter(&data, &freq, 4, 5);
        for (a, b) in data.iter().zip(&out) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
