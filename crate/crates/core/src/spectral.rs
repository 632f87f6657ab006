//! Frequency-domain noise extraction and noise synthesis.
//!
//! Transform convention: the forward DFT is unnormalized and the inverse
//! carries the full `1/(D·H·W)` factor, so Parseval reads
//! `Σ|v|² = (1/N)·Σ|X|²`. Variance bookkeeping in [`estimate_noise_variance`]
//! relies on this.
//!
//! Random streams come from ChaCha8 (`rand_chacha::ChaCha8Rng`) seeded with
//! `SeedableRng::seed_from_u64(seed)`; volume `i` of a batch uses ChaCha
//! stream `i` of that key. Normal deviates use `rand_distr::Normal` and
//! Poisson deviates `rand_distr::Poisson`, both drawn in voxel layout order.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::volume::{population_variance, variance_f64, Dims, Volume3D};

/// Default fraction of frequency bins kept by the high-pass filter.
pub const DEFAULT_KEEP_FRACTION: f64 = 0.244;

/// Default number of target volumes sampled for noise estimation.
pub const DEFAULT_N_SAMPLED: usize = 10;

/// Imaginary residue tolerated by [`idft3`], relative to the peak real value.
pub const IMAGINARY_TOLERANCE: f64 = 1e-4;

/// Residues below this absolute level are always treated as rounding noise.
const IMAGINARY_FLOOR: f64 = 1e-12;

/// 3D grid of complex DFT coefficients, laid out like [`Volume3D`] with
/// frequency index `(u, v, ζ)` in place of `(d, h, w)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrum {
    dims: Dims,
    coeffs: Vec<Complex64>,
}

impl ComplexSpectrum {
    pub fn new(dims: Dims, coeffs: Vec<Complex64>) -> Result<Self> {
        dims.check_nonzero()?;
        if coeffs.len() != dims.len() {
            return Err(Error::invalid(format!(
                "spectrum {dims} needs {} coefficients, got {}",
                dims.len(),
                coeffs.len()
            )));
        }
        Ok(Self { dims, coeffs })
    }

    pub fn zeros(dims: Dims) -> Result<Self> {
        Self::new(dims, vec![Complex64::new(0.0, 0.0); dims.len()])
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize, z: usize) -> Complex64 {
        self.coeffs[self.dims.index(u, v, z)]
    }

    /// Largest deviation from `X(−k) = conj(X(k))` over all bins.
    pub fn hermitian_defect(&self) -> f64 {
        let Dims {
            depth,
            height,
            width,
        } = self.dims;
        let neg = |k: usize, n: usize| (n - k) % n;
        let mut worst = 0.0f64;
        for u in 0..depth {
            for v in 0..height {
                for z in 0..width {
                    let a = self.get(u, v, z);
                    let b = self.get(neg(u, depth), neg(v, height), neg(z, width));
                    worst = worst.max((a - b.conj()).norm());
                }
            }
        }
        worst
    }
}

/// Fraction of frequency bins retained by the high-pass filter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HighPassSpec {
    keep_fraction: f64,
}

impl HighPassSpec {
    pub fn new(keep_fraction: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&keep_fraction) {
            return Err(Error::invalid(format!(
                "keep fraction must lie in [0, 1], got {keep_fraction}"
            )));
        }
        Ok(Self { keep_fraction })
    }

    pub fn keep_fraction(&self) -> f64 {
        self.keep_fraction
    }
}

impl Default for HighPassSpec {
    fn default() -> Self {
        Self {
            keep_fraction: DEFAULT_KEEP_FRACTION,
        }
    }
}

/// Signed frequency of bin `k` on an axis of length `n` (DC-centred).
#[inline]
fn signed_frequency(k: usize, n: usize) -> i64 {
    if k <= n / 2 {
        k as i64
    } else {
        k as i64 - n as i64
    }
}

/// Ideal radial high-pass mask.
///
/// Radius is measured on normalized frequencies `(u/D, v/H, ζ/W)`; bins with
/// the same radius form a shell and are kept or dropped together. The mask
/// keeps the outermost shells whose cumulative bin count is closest to
/// `ρ·N` (ties resolve to fewer bins). For `ρ < 1` the DC bin is always
/// dropped.
#[derive(Debug, Clone)]
pub struct HighPassMask {
    dims: Dims,
    keep: Vec<bool>,
    retained: usize,
    target: f64,
}

impl HighPassMask {
    pub fn new(dims: Dims, hp: HighPassSpec) -> Result<Self> {
        dims.check_nonzero()?;
        let Dims {
            depth,
            height,
            width,
        } = dims;
        // squared normalized radius scaled by (D·H·W)², kept integral so equal
        // radii compare exactly
        let (sd, sh, sw) = (
            ((height * width) as u128).pow(2),
            ((depth * width) as u128).pow(2),
            ((depth * height) as u128).pow(2),
        );
        let mut keys = Vec::with_capacity(dims.len());
        for u in 0..depth {
            let ku = signed_frequency(u, depth).unsigned_abs() as u128;
            for v in 0..height {
                let kv = signed_frequency(v, height).unsigned_abs() as u128;
                for z in 0..width {
                    let kz = signed_frequency(z, width).unsigned_abs() as u128;
                    keys.push(ku * ku * sd + kv * kv * sh + kz * kz * sw);
                }
            }
        }

        let mut shells: BTreeMap<u128, usize> = BTreeMap::new();
        for &k in &keys {
            *shells.entry(k).or_default() += 1;
        }

        let total = dims.len();
        let target = hp.keep_fraction() * total as f64;
        let mut best: (usize, Option<u128>) = (0, None);
        let mut cumulative = 0usize;
        for (&key, &count) in shells.iter().rev() {
            cumulative += count;
            if key == 0 && hp.keep_fraction() < 1.0 {
                break;
            }
            if (cumulative as f64 - target).abs() < (best.0 as f64 - target).abs() {
                best = (cumulative, Some(key));
            }
        }

        let keep = match best.1 {
            Some(cutoff) => keys.iter().map(|&k| k >= cutoff).collect(),
            None => vec![false; total],
        };
        Ok(Self {
            dims,
            keep,
            retained: best.0,
            target,
        })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn retained(&self) -> usize {
        self.retained
    }

    /// Requested bin count `ρ·N`.
    pub fn target(&self) -> f64 {
        self.target
    }

    pub fn realized_fraction(&self) -> f64 {
        self.retained as f64 / self.dims.len() as f64
    }

    pub fn keeps(&self, index: usize) -> bool {
        self.keep[index]
    }

    pub fn apply(&self, spec: &ComplexSpectrum) -> Result<ComplexSpectrum> {
        spec.dims.check_same(&self.dims, "high-pass mask")?;
        let mut out = spec.clone();
        self.apply_in_place(&mut out.coeffs);
        Ok(out)
    }

    fn apply_in_place(&self, coeffs: &mut [Complex64]) {
        for (c, &keep) in coeffs.iter_mut().zip(&self.keep) {
            if !keep {
                *c = Complex64::new(0.0, 0.0);
            }
        }
    }
}

/// Output of [`highpass`]: the filtered spectrum and the fraction of bins
/// actually kept.
#[derive(Debug, Clone)]
pub struct HighPassed {
    pub spectrum: ComplexSpectrum,
    pub realized_fraction: f64,
}

pub fn highpass(spec: &ComplexSpectrum, hp: HighPassSpec) -> Result<HighPassed> {
    let mask = HighPassMask::new(spec.dims, hp)?;
    Ok(HighPassed {
        spectrum: mask.apply(spec)?,
        realized_fraction: mask.realized_fraction(),
    })
}

/// Planned separable 3D FFT for one grid size.
#[derive(Clone)]
pub struct Fft3 {
    dims: Dims,
    forward: [Arc<dyn Fft<f64>>; 3],
    inverse: [Arc<dyn Fft<f64>>; 3],
}

impl Fft3 {
    pub fn new(dims: Dims) -> Result<Self> {
        dims.check_nonzero()?;
        let mut planner = FftPlanner::new();
        let [d, h, w] = dims.as_array();
        Ok(Self {
            dims,
            forward: [
                planner.plan_fft_forward(d),
                planner.plan_fft_forward(h),
                planner.plan_fft_forward(w),
            ],
            inverse: [
                planner.plan_fft_inverse(d),
                planner.plan_fft_inverse(h),
                planner.plan_fft_inverse(w),
            ],
        })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn forward(&self, vol: &Volume3D) -> Result<ComplexSpectrum> {
        vol.dims().check_same(&self.dims, "forward DFT")?;
        let mut buf: Vec<Complex64> = vol
            .data()
            .iter()
            .map(|&v| Complex64::new(v as f64, 0.0))
            .collect();
        self.transform(&mut buf, &self.forward);
        ComplexSpectrum::new(self.dims, buf)
    }

    pub fn inverse(&self, spec: &ComplexSpectrum) -> Result<Volume3D> {
        spec.dims.check_same(&self.dims, "inverse DFT")?;
        let mut buf = spec.coeffs.clone();
        self.transform(&mut buf, &self.inverse);
        self.real_part(buf)
    }

    fn real_part(&self, mut buf: Vec<Complex64>) -> Result<Volume3D> {
        let scale = 1.0 / self.dims.len() as f64;
        let (mut max_re, mut max_im) = (0.0f64, 0.0f64);
        for c in buf.iter_mut() {
            *c *= scale;
            max_re = max_re.max(c.re.abs());
            max_im = max_im.max(c.im.abs());
        }
        if max_im > IMAGINARY_FLOOR && max_im > IMAGINARY_TOLERANCE * max_re {
            return Err(Error::Numerical(format!(
                "inverse DFT left imaginary residue {max_im:e} against peak real value {max_re:e}"
            )));
        }
        Volume3D::from_f64(self.dims, buf.into_iter().map(|c| c.re))
    }

    fn transform(&self, buf: &mut [Complex64], plans: &[Arc<dyn Fft<f64>>; 3]) {
        let Dims {
            depth,
            height,
            width,
        } = self.dims;
        // width lines are contiguous; rustfft walks them chunk by chunk
        if width > 1 {
            plans[2].process(buf);
        }
        let mut line = vec![Complex64::new(0.0, 0.0); depth.max(height)];
        if height > 1 {
            for d in 0..depth {
                for w in 0..width {
                    let line = &mut line[..height];
                    for (h, x) in line.iter_mut().enumerate() {
                        *x = buf[self.dims.index(d, h, w)];
                    }
                    plans[1].process(line);
                    for (h, x) in line.iter().enumerate() {
                        buf[self.dims.index(d, h, w)] = *x;
                    }
                }
            }
        }
        if depth > 1 {
            for h in 0..height {
                for w in 0..width {
                    let line = &mut line[..depth];
                    for (d, x) in line.iter_mut().enumerate() {
                        *x = buf[self.dims.index(d, h, w)];
                    }
                    plans[0].process(line);
                    for (d, x) in line.iter().enumerate() {
                        buf[self.dims.index(d, h, w)] = *x;
                    }
                }
            }
        }
    }
}

/// Forward unnormalized 3D DFT.
pub fn dft3(vol: &Volume3D) -> Result<ComplexSpectrum> {
    Fft3::new(vol.dims())?.forward(vol)
}

/// Inverse 3D DFT with `1/(D·H·W)` normalization.
///
/// The imaginary part is discarded when it is within [`IMAGINARY_TOLERANCE`]
/// of the peak real magnitude; a larger residue means the spectrum was not
/// Hermitian and yields [`Error::Numerical`].
pub fn idft3(spec: &ComplexSpectrum) -> Result<Volume3D> {
    Fft3::new(spec.dims())?.inverse(spec)
}

/// Reusable high-pass noise extractor for volumes of one size.
#[derive(Clone)]
pub struct NoiseExtractor {
    fft: Fft3,
    mask: HighPassMask,
}

impl NoiseExtractor {
    pub fn new(dims: Dims, hp: HighPassSpec) -> Result<Self> {
        Ok(Self {
            fft: Fft3::new(dims)?,
            mask: HighPassMask::new(dims, hp)?,
        })
    }

    pub fn mask(&self) -> &HighPassMask {
        &self.mask
    }

    /// High-frequency residual `idft3(highpass(dft3(x)))`.
    pub fn extract(&self, vol: &Volume3D) -> Result<Volume3D> {
        let mut spec = self.fft.forward(vol)?;
        self.mask.apply_in_place(&mut spec.coeffs);
        self.fft.inverse(&spec)
    }

    /// Low-pass remainder `x − extract(x)`.
    pub fn denoise(&self, vol: &Volume3D) -> Result<Volume3D> {
        let noise = self.extract(vol)?;
        Volume3D::from_f64(
            vol.dims(),
            vol.data()
                .iter()
                .zip(noise.data())
                .map(|(&x, &n)| x as f64 - n as f64),
        )
    }
}

pub fn extract_noise(vol: &Volume3D, hp: HighPassSpec) -> Result<Volume3D> {
    NoiseExtractor::new(vol.dims(), hp)?.extract(vol)
}

/// Denoising by subtracting the extracted high-frequency residual.
pub fn ngm_denoise(vol: &Volume3D, hp: HighPassSpec) -> Result<Volume3D> {
    NoiseExtractor::new(vol.dims(), hp)?.denoise(vol)
}

/// How residuals of a subset are reduced to one noise variance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AveragingMode {
    /// Mean of the per-volume residual variances.
    #[default]
    MeanOfVariances,
    /// Variance of the voxel-wise mean residual volume. For independent
    /// noise this shrinks roughly by the subset size.
    VarianceOfMean,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseEstimate {
    /// Estimated noise variance `σ_t²`.
    pub variance: f64,
    /// Residual variance of each input volume, in input order.
    pub per_volume: Vec<f64>,
    pub realized_fraction: f64,
}

pub fn estimate_noise_variance(volumes: &[Volume3D], hp: HighPassSpec) -> Result<NoiseEstimate> {
    estimate_noise_variance_with(volumes, hp, AveragingMode::MeanOfVariances)
}

pub fn estimate_noise_variance_with(
    volumes: &[Volume3D],
    hp: HighPassSpec,
    mode: AveragingMode,
) -> Result<NoiseEstimate> {
    let first = volumes
        .first()
        .ok_or_else(|| Error::invalid("noise estimation needs at least one volume"))?;
    let dims = first.dims();
    for v in volumes {
        v.dims().check_same(&dims, "noise estimation subset")?;
    }
    let extractor = NoiseExtractor::new(dims, hp)?;
    let residuals = volumes
        .iter()
        .map(|v| extractor.extract(v))
        .collect::<Result<Vec<_>>>()?;
    combine_residuals(&residuals, extractor.mask().realized_fraction(), mode)
}

/// Reduces already extracted residuals; used when residuals are computed by
/// parallel workers.
pub fn combine_residuals(
    residuals: &[Volume3D],
    realized_fraction: f64,
    mode: AveragingMode,
) -> Result<NoiseEstimate> {
    if residuals.is_empty() {
        return Err(Error::invalid("noise estimation needs at least one volume"));
    }
    let per_volume = residuals
        .iter()
        .map(population_variance)
        .collect::<Result<Vec<_>>>()?;
    let variance = match mode {
        AveragingMode::MeanOfVariances => per_volume.iter().sum::<f64>() / per_volume.len() as f64,
        AveragingMode::VarianceOfMean => {
            let n = residuals[0].len();
            let k = residuals.len() as f64;
            let mean: Vec<f64> = (0..n)
                .map(|i| residuals.iter().map(|r| r.data()[i] as f64).sum::<f64>() / k)
                .collect();
            variance_f64(mean.iter().copied(), n)
        }
    };
    Ok(NoiseEstimate {
        variance,
        per_volume,
        realized_fraction,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum NoiseKind {
    #[default]
    Gaussian,
    Poisson,
    Speckle,
}

impl std::str::FromStr for NoiseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(Self::Gaussian),
            "poisson" => Ok(Self::Poisson),
            "speckle" => Ok(Self::Speckle),
            other => Err(Error::invalid(format!("unknown noise kind '{other}'"))),
        }
    }
}

impl std::fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Gaussian => "gaussian",
            Self::Poisson => "poisson",
            Self::Speckle => "speckle",
        })
    }
}

/// Noise family, variance `σ_t²` and seed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    pub kind: NoiseKind,
    pub variance: f64,
    pub seed: u64,
}

impl NoiseModel {
    pub fn new(kind: NoiseKind, variance: f64, seed: u64) -> Result<Self> {
        if !(variance >= 0.0 && variance.is_finite()) {
            return Err(Error::invalid(format!(
                "noise variance must be finite and >= 0, got {variance}"
            )));
        }
        Ok(Self {
            kind,
            variance,
            seed,
        })
    }
}

/// Draws a noise field on ChaCha stream 0 of `model.seed`.
///
/// * gaussian: i.i.d. `N(0, σ_t²)`
/// * poisson: `Poisson(σ_t) − σ_t`, recentred to zero mean
/// * speckle: the multiplicative factor `N(0, σ_t²)`; [`inject_noise`]
///   scales it by the source
pub fn synthesize_noise(model: &NoiseModel, dims: Dims) -> Result<Volume3D> {
    synthesize_noise_stream(model, dims, 0)
}

/// Like [`synthesize_noise`] on an independent stream, for batch workers.
pub fn synthesize_noise_stream(model: &NoiseModel, dims: Dims, stream: u64) -> Result<Volume3D> {
    let model = NoiseModel::new(model.kind, model.variance, model.seed)?;
    dims.check_nonzero()?;
    if model.variance == 0.0 {
        return Volume3D::zeros(dims);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(model.seed);
    rng.set_stream(stream);
    let sigma = model.variance.sqrt();
    let n = dims.len();
    let values: Vec<f64> = match model.kind {
        NoiseKind::Gaussian | NoiseKind::Speckle => {
            let normal = Normal::new(0.0, sigma)
                .map_err(|e| Error::invalid(format!("normal distribution: {e}")))?;
            (0..n).map(|_| normal.sample(&mut rng)).collect()
        }
        NoiseKind::Poisson => {
            let poisson = Poisson::new(sigma)
                .map_err(|e| Error::invalid(format!("poisson distribution: {e}")))?;
            (0..n).map(|_| poisson.sample(&mut rng) - sigma).collect()
        }
    };
    Volume3D::from_f64(dims, values)
}

/// Adds a synthesized field to a source volume.
///
/// Additive kinds give `x + ε`; speckle gives `x + x ⊙ ε`.
pub fn inject_noise(src: &Volume3D, kind: NoiseKind, noise: &Volume3D) -> Result<Volume3D> {
    noise.dims().check_same(&src.dims(), "noise injection")?;
    let pairs = src.data().iter().zip(noise.data());
    match kind {
        NoiseKind::Gaussian | NoiseKind::Poisson => {
            Volume3D::new(src.dims(), pairs.map(|(&x, &e)| x + e).collect())
        }
        NoiseKind::Speckle => Volume3D::new(src.dims(), pairs.map(|(&x, &e)| x + x * e).collect()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn white(dims: Dims, variance: f64, seed: u64) -> Volume3D {
        let m = NoiseModel::new(NoiseKind::Gaussian, variance, seed).unwrap();
        synthesize_noise(&m, dims).unwrap()
    }

    #[test]
    fn dc_only_spectrum() {
        let dims = Dims::cube(4);
        let s = dft3(&Volume3D::filled(dims, 1.5).unwrap()).unwrap();
        assert!((s.coeffs()[0].re - 96.0).abs() < 1e-12);
        assert!(s.coeffs()[1..].iter().all(|c| c.norm() < 1e-12));
        let back = idft3(&s).unwrap();
        assert!(back.data().iter().all(|&v| (v - 1.5).abs() < 1e-6));
    }

    #[test]
    fn cosine_has_two_conjugate_bins() {
        let dims = Dims::new(8, 4, 2);
        let v = Volume3D::from_fn(dims, |d, _, _| {
            (2.0 * std::f64::consts::PI * 3.0 * d as f64 / 8.0).cos() as f32
        })
        .unwrap();
        let s = dft3(&v).unwrap();
        let big: Vec<usize> = (0..dims.len())
            .filter(|&i| s.coeffs()[i].norm() > 1e-5)
            .collect();
        assert_eq!(big, vec![dims.index(3, 0, 0), dims.index(5, 0, 0)]);
        let (a, b) = (s.get(3, 0, 0), s.get(5, 0, 0));
        assert!((a - b.conj()).norm() < 1e-5);
        assert!((a.re - 32.0).abs() < 1e-4);
    }

    #[test]
    fn zero_spectrum_inverts_to_zero() {
        let s = ComplexSpectrum::zeros(Dims::cube(3)).unwrap();
        assert!(idft3(&s).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn non_hermitian_spectrum_is_rejected() {
        let mut s = ComplexSpectrum::zeros(Dims::cube(4)).unwrap();
        s.coeffs_mut()[1] = Complex64::new(0.0, 5.0);
        assert!(matches!(idft3(&s), Err(Error::Numerical(_))));
    }

    #[test]
    fn highpass_degenerate_fractions() {
        let v = white(Dims::new(6, 5, 4), 1.0, 3);
        let s = dft3(&v).unwrap();
        let all = highpass(&s, HighPassSpec::new(1.0).unwrap()).unwrap();
        assert_eq!(all.spectrum, s);
        assert_eq!(all.realized_fraction, 1.0);
        let none = highpass(&s, HighPassSpec::new(0.0).unwrap()).unwrap();
        assert!(none.spectrum.coeffs().iter().all(|c| c.norm() == 0.0));
        assert!(HighPassSpec::new(1.2).is_err());
        assert!(HighPassSpec::new(-0.1).is_err());
    }

    #[test]
    fn dc_dropped_for_any_fraction_below_one() {
        let mask = HighPassMask::new(Dims::new(2, 2, 2), HighPassSpec::new(0.9999).unwrap()).unwrap();
        assert!(!mask.keeps(0));
        assert_eq!(mask.retained(), 7);
    }

    #[test]
    fn highpass_is_idempotent_and_hermitian() {
        let v = white(Dims::new(8, 6, 10), 1.0, 11);
        let hp = HighPassSpec::default();
        let once = highpass(&dft3(&v).unwrap(), hp).unwrap().spectrum;
        let twice = highpass(&once, hp).unwrap().spectrum;
        assert_eq!(once, twice);
        assert!(once.hermitian_defect() < 1e-9);
    }

    #[test]
    fn residual_of_constant_is_zero_and_mean_free() {
        let hp = HighPassSpec::default();
        let c = Volume3D::filled(Dims::cube(8), 3.0).unwrap();
        assert!(extract_noise(&c, hp).unwrap().max_abs() < 1e-6);
        let z = Volume3D::zeros(Dims::cube(8)).unwrap();
        assert!(extract_noise(&z, hp).unwrap().data().iter().all(|&v| v == 0.0));
        let r = extract_noise(&white(Dims::cube(16), 0.04, 5), hp).unwrap();
        assert!(r.mean().abs() < 1e-7);
    }

    #[test]
    fn averaging_modes() {
        let hp = HighPassSpec::default();
        let vols: Vec<_> = (0..4).map(|s| white(Dims::cube(8), 0.04, s)).collect();
        let single = estimate_noise_variance(&vols[..1], hp).unwrap();
        let direct = population_variance(&extract_noise(&vols[0], hp).unwrap()).unwrap();
        assert_eq!(single.variance, direct);
        let a = estimate_noise_variance(&vols, hp).unwrap();
        let b = estimate_noise_variance_with(&vols, hp, AveragingMode::VarianceOfMean).unwrap();
        assert_eq!(a.per_volume, b.per_volume);
        assert!(b.variance < a.variance);
        assert!(estimate_noise_variance(&[], hp).is_err());
        let mixed = vec![vols[0].clone(), white(Dims::cube(4), 0.04, 1)];
        assert!(estimate_noise_variance(&mixed, hp).is_err());
    }

    #[test]
    fn synthesis_contracts() {
        let dims = Dims::cube(6);
        for kind in [NoiseKind::Gaussian, NoiseKind::Poisson, NoiseKind::Speckle] {
            let zero = NoiseModel::new(kind, 0.0, 1).unwrap();
            assert!(synthesize_noise(&zero, dims).unwrap().data().iter().all(|&v| v == 0.0));
            let m = NoiseModel::new(kind, 0.3, 99).unwrap();
            assert_eq!(synthesize_noise(&m, dims).unwrap(), synthesize_noise(&m, dims).unwrap());
            assert_ne!(
                synthesize_noise_stream(&m, dims, 0).unwrap(),
                synthesize_noise_stream(&m, dims, 1).unwrap()
            );
        }
        assert!(NoiseModel::new(NoiseKind::Gaussian, -1.0, 0).is_err());
    }

    #[test]
    fn poisson_is_recentred() {
        let m = NoiseModel::new(NoiseKind::Poisson, 4.0, 7).unwrap();
        let v = synthesize_noise(&m, Dims::cube(32)).unwrap();
        // rate σ_t = 2, so variance 2 and mean 0
        assert!(v.mean().abs() < 0.03);
        assert!((population_variance(&v).unwrap() - 2.0).abs() < 0.1);
    }

    #[test]
    fn injection() {
        let dims = Dims::cube(4);
        let src = white(dims, 1.0, 1);
        let zero = Volume3D::zeros(dims).unwrap();
        assert_eq!(inject_noise(&src, NoiseKind::Gaussian, &zero).unwrap(), src);
        let e = white(dims, 0.1, 2);
        let z = inject_noise(&zero, NoiseKind::Speckle, &e).unwrap();
        assert!(z.data().iter().all(|&v| v == 0.0));
        let s = inject_noise(&src, NoiseKind::Speckle, &e).unwrap();
        assert_eq!(s.get(1, 2, 3), src.get(1, 2, 3) + src.get(1, 2, 3) * e.get(1, 2, 3));
        assert!(inject_noise(&src, NoiseKind::Gaussian, &Volume3D::zeros(Dims::cube(3)).unwrap()).is_err());
    }
}
