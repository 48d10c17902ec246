use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;

use super::bands::FrequencyMask;

/// A signed frequency coordinate on a centered grid of the given side.
///
/// Valid coordinates satisfy `-side/2 <= u, v < side - side/2`; for even
/// sides that is the usual `[-side/2, side/2)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FrequencyCoord {
    pub u: i32,
    pub v: i32,
}

impl FrequencyCoord {
    pub fn new(u: i32, v: i32) -> Self {
        FrequencyCoord { u, v }
    }

    /// Euclidean radius `sqrt(u^2 + v^2)`.
    pub fn radius(&self) -> f64 {
        ((self.u as f64).powi(2) + (self.v as f64).powi(2)).sqrt()
    }

    pub fn in_grid(&self, side: usize) -> bool {
        let c = (side / 2) as i32;
        let hi = side as i32 - c;
        self.u >= -c && self.u < hi && self.v >= -c && self.v < hi
    }

    /// Hermitian partner `(-u, -v)` under the grid's modular topology.
    /// DC and Nyquist rows/columns map to themselves.
    pub fn partner(&self, side: usize) -> FrequencyCoord {
        let n = side as i32;
        let c = n / 2;
        let reflect = |x: i32| {
            let raw = (-x).rem_euclid(n);
            // back to signed centered range [-c, n - c)
            if raw >= n - c {
                raw - n
            } else {
                raw
            }
        };
        FrequencyCoord {
            u: reflect(self.u),
            v: reflect(self.v),
        }
    }

    pub fn is_self_paired(&self, side: usize) -> bool {
        *self == self.partner(side)
    }
}

/// Centered complex 2D Fourier representation of a multi-channel image.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    /// Channel-major, row-major within each channel, centered layout.
    pub data: Vec<Complex64>,
}

impl Spectrum {
    pub fn zeros(channels: usize, side: usize) -> Self {
        Spectrum {
            channels,
            height: side,
            width: side,
            data: vec![Complex64::new(0.0, 0.0); channels * side * side],
        }
    }

    pub fn side(&self) -> usize {
        self.height
    }

    fn center(&self) -> i32 {
        (self.height / 2) as i32
    }

    /// Centered cell index of frequency `(u, v)`.
    pub fn index_of(&self, f: FrequencyCoord) -> usize {
        let c = self.center();
        let i = (f.u + c) as usize;
        let j = (f.v + c) as usize;
        i * self.width + j
    }

    /// Frequency at centered cell `(i, j)`.
    pub fn coord_at(&self, i: usize, j: usize) -> FrequencyCoord {
        let c = self.center();
        FrequencyCoord::new(i as i32 - c, j as i32 - c)
    }

    pub fn channel(&self, c: usize) -> &[Complex64] {
        let plane = self.height * self.width;
        &self.data[c * plane..(c + 1) * plane]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [Complex64] {
        let plane = self.height * self.width;
        &mut self.data[c * plane..(c + 1) * plane]
    }

    pub fn value(&self, channel: usize, f: FrequencyCoord) -> Complex64 {
        let idx = self.index_of(f);
        self.channel(channel)[idx]
    }

    pub fn set(&mut self, channel: usize, f: FrequencyCoord, value: Complex64) {
        let idx = self.index_of(f);
        self.channel_mut(channel)[idx] = value;
    }

    /// Sum of `|F|^2` over all channels and frequencies.
    pub fn energy(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Sum of `|F|^2` excluding the DC bin of every channel.
    pub fn energy_excluding_dc(&self) -> f64 {
        let dc = self.index_of(FrequencyCoord::new(0, 0));
        let plane = self.height * self.width;
        self.data
            .iter()
            .enumerate()
            .filter(|(i, _)| i % plane != dc)
            .map(|(_, z)| z.norm_sqr())
            .sum()
    }

    /// Largest magnitude over the whole spectrum.
    pub fn max_magnitude(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Worst deviation from Hermitian symmetry: `max |F(u,v) - conj(F(-u,-v))|`
    /// together with the offending frequency.
    pub fn hermitian_deviation(&self) -> (f64, FrequencyCoord) {
        let side = self.height;
        let mut worst = 0.0;
        let mut at = FrequencyCoord::new(0, 0);
        for ch in 0..self.channels {
            let plane = self.channel(ch);
            for i in 0..side {
                for j in 0..side {
                    let f = self.coord_at(i, j);
                    let p = f.partner(side);
                    let a = plane[i * side + j];
                    let b = plane[self.index_of(p)];
                    let dev = (a - b.conj()).norm();
                    if dev > worst {
                        worst = dev;
                        at = f;
                    }
                }
            }
        }
        (worst, at)
    }

    /// Zero every frequency the mask does not keep, in all channels.
    pub fn apply_mask(&mut self, mask: &FrequencyMask) {
        assert_eq!(
            (self.height, self.width),
            (mask.height, mask.width),
            "mask dimensions must match spectrum"
        );
        let plane = self.height * self.width;
        for ch in 0..self.channels {
            let chan = &mut self.data[ch * plane..(ch + 1) * plane];
            for (z, &keep) in chan.iter_mut().zip(mask.bits.iter()) {
                if !keep {
                    *z = Complex64::new(0.0, 0.0);
                }
            }
        }
    }
}

/// In-place 2D FFT over a square `side x side` complex buffer, rows then
/// columns via transposes.
fn fft2_inplace(buf: &mut Vec<Complex64>, side: usize, inverse: bool) {
    let mut planner = FftPlanner::new();
    let fft = if inverse {
        planner.plan_fft_inverse(side)
    } else {
        planner.plan_fft_forward(side)
    };
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    for row in buf.chunks_exact_mut(side) {
        fft.process_with_scratch(row, &mut scratch);
    }
    transpose_square(buf, side);
    for row in buf.chunks_exact_mut(side) {
        fft.process_with_scratch(row, &mut scratch);
    }
    transpose_square(buf, side);
}

fn transpose_square(buf: &mut [Complex64], side: usize) {
    for i in 0..side {
        for j in (i + 1)..side {
            buf.swap(i * side + j, j * side + i);
        }
    }
}

/// Move raw FFT layout (DC at `[0][0]`) to centered layout (DC at `[c][c]`).
fn shift_to_centered(raw: &[Complex64], side: usize, out: &mut [Complex64]) {
    let c = side / 2;
    for i in 0..side {
        let src_i = (i + side - c) % side;
        for j in 0..side {
            let src_j = (j + side - c) % side;
            out[i * side + j] = raw[src_i * side + src_j];
        }
    }
}

/// Inverse of [`shift_to_centered`].
fn shift_to_raw(centered: &[Complex64], side: usize, out: &mut [Complex64]) {
    let c = side / 2;
    for i in 0..side {
        let src_i = (i + c) % side;
        for j in 0..side {
            let src_j = (j + c) % side;
            out[i * side + j] = centered[src_i * side + src_j];
        }
    }
}

/// Forward 2D DFT of a square image, one centered complex plane per channel.
///
/// Unnormalized and linear; inverted exactly (to float tolerance) by
/// [`idft2`].
pub fn dft2(image: &Image) -> Result<Spectrum> {
    if !image.is_square() {
        return Err(Error::NonSquareImage {
            height: image.height,
            width: image.width,
        });
    }
    image.check_finite()?;
    let side = image.height;
    let mut spec = Spectrum::zeros(image.channels, side);
    let mut buf = vec![Complex64::new(0.0, 0.0); side * side];
    for ch in 0..image.channels {
        for (z, &x) in buf.iter_mut().zip(image.channel(ch).iter()) {
            *z = Complex64::new(x, 0.0);
        }
        fft2_inplace(&mut buf, side, false);
        shift_to_centered(&buf, side, spec.channel_mut(ch));
    }
    Ok(spec)
}

/// Tolerance for the Hermitian gate in [`idft2`], relative to the largest
/// spectral magnitude.
const HERMITIAN_REL_TOL: f64 = 1e-6;

/// Inverse 2D DFT with the `1/(H*W)` normalization.
///
/// Rejects spectra whose Hermitian deviation exceeds `1e-6` of the peak
/// magnitude; past the gate, the imaginary residue is discarded.
pub fn idft2(spectrum: &Spectrum) -> Result<Image> {
    if spectrum.height != spectrum.width || spectrum.height == 0 {
        return Err(Error::NonSquareImage {
            height: spectrum.height,
            width: spectrum.width,
        });
    }
    let (dev, at) = spectrum.hermitian_deviation();
    let tol = HERMITIAN_REL_TOL * spectrum.max_magnitude();
    if dev > tol && dev > 0.0 {
        return Err(Error::HermitianViolation {
            u: at.u,
            v: at.v,
            deviation: dev,
            tolerance: tol,
        });
    }
    let side = spectrum.height;
    let norm = 1.0 / (side * side) as f64;
    let mut img = Image::zeros(spectrum.channels, side, side);
    let mut buf = vec![Complex64::new(0.0, 0.0); side * side];
    for ch in 0..spectrum.channels {
        shift_to_raw(spectrum.channel(ch), side, &mut buf);
        fft2_inplace(&mut buf, side, true);
        for (x, z) in img.channel_mut(ch).iter_mut().zip(buf.iter()) {
            *x = z.re * norm;
        }
    }
    Ok(img)
}

/// Zero one frequency and its Hermitian partner in every channel.
///
/// DC and Nyquist bins are their own partners, so removal there zeros a
/// single bin.
pub fn remove_frequency_pair(spectrum: &Spectrum, f: FrequencyCoord) -> Result<Spectrum> {
    let side = spectrum.side();
    if !f.in_grid(side) {
        return Err(Error::FrequencyOutOfRange { u: f.u, v: f.v, side });
    }
    let mut out = spectrum.clone();
    let partner = f.partner(side);
    for ch in 0..out.channels {
        out.set(ch, f, Complex64::new(0.0, 0.0));
        out.set(ch, partner, Complex64::new(0.0, 0.0));
    }
    Ok(out)
}

/// Filter an image in the frequency domain: `idft2(dft2(image) * mask)`.
///
/// Masks are point-symmetric by construction, so the output is real; the
/// operation is idempotent.
pub fn filter_image(image: &Image, mask: &FrequencyMask) -> Result<Image> {
    if image.height != mask.height || image.width != mask.width {
        return Err(Error::DimensionMismatch {
            expected: format!("{}x{}", mask.height, mask.width),
            got: format!("{}x{}", image.height, image.width),
        });
    }
    let mut spec = dft2(image)?;
    spec.apply_mask(mask);
    idft2(&spec)
}

/// Spatial-domain energy implied by a spectrum under the pipeline's
/// normalization: `sum |F|^2 / (H*W)`.
pub fn spectral_energy(spectrum: &Spectrum) -> f64 {
    spectrum.energy() / (spectrum.height * spectrum.width) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_image_is_dc_only() {
        let img = Image::constant(1, 4, 4, 1.0);
        let spec = dft2(&img).unwrap();
        let dc = spec.value(0, FrequencyCoord::new(0, 0));
        assert!((dc.re - 16.0).abs() < 1e-12 && dc.im.abs() < 1e-12);
        let off_dc: f64 = spec
            .data
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != spec.index_of(FrequencyCoord::new(0, 0)))
            .map(|(_, z)| z.norm())
            .sum();
        assert!(off_dc < 1e-10);
    }

    #[test]
    fn impulse_is_spectrally_flat() {
        let mut img = Image::zeros(1, 4, 4);
        img.channel_mut(0)[0] = 1.0;
        let spec = dft2(&img).unwrap();
        for z in spec.data.iter() {
            assert!((z.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn dc_only_spectrum_inverts_to_constant() {
        let mut spec = Spectrum::zeros(1, 4);
        spec.set(0, FrequencyCoord::new(0, 0), Complex64::new(16.0, 0.0));
        let img = idft2(&spec).unwrap();
        for &x in img.channel(0) {
            assert!((x - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_spectrum_inverts_to_zero() {
        let img = idft2(&Spectrum::zeros(2, 8)).unwrap();
        assert!(img.data.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn non_square_rejected() {
        let img = Image::zeros(1, 4, 6);
        assert!(matches!(dft2(&img), Err(Error::NonSquareImage { .. })));
        let empty = Image::zeros(1, 0, 0);
        assert!(dft2(&empty).is_err());
    }

    #[test]
    fn hermitian_violation_names_worst_frequency() {
        let mut spec = Spectrum::zeros(1, 4);
        spec.set(0, FrequencyCoord::new(1, 0), Complex64::new(0.0, 5.0));
        // partner (-1, 0) left at zero -> asymmetric
        let err = idft2(&spec).unwrap_err();
        match err {
            Error::HermitianViolation { u, v, .. } => {
                assert_eq!((u.abs(), v), (1, 0));
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn remove_dc_of_constant_gives_zero_image() {
        let img = Image::constant(1, 4, 4, 1.0);
        let spec = dft2(&img).unwrap();
        let culled = remove_frequency_pair(&spec, FrequencyCoord::new(0, 0)).unwrap();
        let back = idft2(&culled).unwrap();
        assert!(back.data.iter().all(|&x| x.abs() < 1e-12));
    }

    #[test]
    fn remove_absent_frequency_is_identity() {
        let mut spec = Spectrum::zeros(1, 8);
        spec.set(0, FrequencyCoord::new(0, 0), Complex64::new(3.0, 0.0));
        let culled = remove_frequency_pair(&spec, FrequencyCoord::new(2, 1)).unwrap();
        assert_eq!(spec, culled);
    }

    #[test]
    fn remove_out_of_range_rejected() {
        let spec = Spectrum::zeros(1, 8);
        assert!(matches!(
            remove_frequency_pair(&spec, FrequencyCoord::new(4, 0)),
            Err(Error::FrequencyOutOfRange { .. })
        ));
    }

    #[test]
    fn partner_topology() {
        // Nyquist row/column map to themselves on even grids.
        let side = 8;
        assert!(FrequencyCoord::new(-4, 0).is_self_paired(side));
        assert!(FrequencyCoord::new(0, -4).is_self_paired(side));
        assert!(FrequencyCoord::new(-4, -4).is_self_paired(side));
        assert!(FrequencyCoord::new(0, 0).is_self_paired(side));
        assert_eq!(
            FrequencyCoord::new(3, -2).partner(side),
            FrequencyCoord::new(-3, 2)
        );
    }
}
