//! Dense scalar voxel grids.
//!
//! All volumes share one memory layout: row-major with depth as the slowest
//! axis and width as the fastest, so voxel `(d, h, w)` lives at
//! `(d * height + h) * width + w`. This is also the section/row/column order
//! of an MRC data block, which lets the `io` module copy data without
//! reordering.
//!
//! Intensities are stored as `f32` (the MRC mode 2 element type). Statistics
//! and interpolation accumulate in `f64`.

use std::fmt;

use crate::error::{Error, Result};

/// Grid extent in voxels as `(depth, height, width)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Dims {
    pub depth: usize,
    pub height: usize,
    pub width: usize,
}

impl Dims {
    pub const fn new(depth: usize, height: usize, width: usize) -> Self {
        Self {
            depth,
            height,
            width,
        }
    }

    pub const fn cube(n: usize) -> Self {
        Self::new(n, n, n)
    }

    pub const fn len(&self) -> usize {
        self.depth * self.height * self.width
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub const fn index(&self, d: usize, h: usize, w: usize) -> usize {
        (d * self.height + h) * self.width + w
    }

    /// Inverse of [`Dims::index`].
    #[inline]
    pub const fn coords(&self, index: usize) -> (usize, usize, usize) {
        let w = index % self.width;
        let rest = index / self.width;
        (rest / self.height, rest % self.height, w)
    }

    pub fn as_array(&self) -> [usize; 3] {
        [self.depth, self.height, self.width]
    }

    pub(crate) fn check_nonzero(&self) -> Result<()> {
        if self.depth == 0 || self.height == 0 || self.width == 0 {
            return Err(Error::invalid(format!("dimensions must be >= 1, got {self}")));
        }
        Ok(())
    }

    pub(crate) fn check_same(&self, other: &Dims, what: &str) -> Result<()> {
        if self != other {
            return Err(Error::invalid(format!(
                "{what}: dimension mismatch {self} vs {other}"
            )));
        }
        Ok(())
    }
}

impl fmt::Display for Dims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.depth, self.height, self.width)
    }
}

/// Dense 3D scalar field. Every stored value is finite.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume3D {
    dims: Dims,
    data: Vec<f32>,
}

impl Volume3D {
    pub fn new(dims: Dims, data: Vec<f32>) -> Result<Self> {
        dims.check_nonzero()?;
        if data.len() != dims.len() {
            return Err(Error::invalid(format!(
                "volume {dims} needs {} values, got {}",
                dims.len(),
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite value {} at voxel {:?}",
                data[i],
                dims.coords(i)
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn filled(dims: Dims, value: f32) -> Result<Self> {
        Self::new(dims, vec![value; dims.len()])
    }

    pub fn zeros(dims: Dims) -> Result<Self> {
        Self::filled(dims, 0.0)
    }

    /// Builds a volume by evaluating `f(d, h, w)` at every voxel.
    pub fn from_fn(dims: Dims, mut f: impl FnMut(usize, usize, usize) -> f32) -> Result<Self> {
        let mut data = Vec::with_capacity(dims.len());
        for d in 0..dims.depth {
            for h in 0..dims.height {
                for w in 0..dims.width {
                    data.push(f(d, h, w));
                }
            }
        }
        Self::new(dims, data)
    }

    /// Wraps values produced by an internal computation, re-checking finiteness.
    pub(crate) fn from_f64(dims: Dims, values: impl IntoIterator<Item = f64>) -> Result<Self> {
        let data = values.into_iter().map(|v| v as f32).collect();
        Self::new(dims, data)
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, d: usize, h: usize, w: usize) -> f32 {
        self.data[self.dims.index(d, h, w)]
    }

    /// Applies `f` voxel-wise, returning a new volume.
    pub fn map(&self, f: impl Fn(f32) -> f32) -> Result<Self> {
        Self::new(self.dims, self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum::<f64>() / self.data.len() as f64
    }

    pub fn min_max(&self) -> (f32, f32) {
        self.data
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    pub fn max_abs(&self) -> f32 {
        self.data.iter().fold(0.0f32, |m, v| m.max(v.abs()))
    }
}

/// Population variance `Σ(v − mean)² / N` over every voxel.
///
/// Two-pass in `f64`; the divisor is the voxel count, not `N − 1`.
pub fn population_variance(vol: &Volume3D) -> Result<f64> {
    if vol.is_empty() {
        return Err(Error::invalid("variance of an empty volume"));
    }
    Ok(variance_f64(vol.data.iter().map(|&v| v as f64), vol.len()))
}

pub(crate) fn variance_f64(values: impl Iterator<Item = f64> + Clone, n: usize) -> f64 {
    let mean = values.clone().sum::<f64>() / n as f64;
    values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64
}

/// Maps output index `i` of an axis of length `target` onto the source axis
/// of length `source` with corner alignment: first and last samples coincide.
/// A length-1 target samples the source centre.
fn corner_aligned(i: usize, source: usize, target: usize) -> f64 {
    if target == 1 {
        (source - 1) as f64 / 2.0
    } else {
        i as f64 * (source - 1) as f64 / (target - 1) as f64
    }
}

/// Per-axis interpolation taps: lower index, upper index and weight of the upper.
fn axis_taps(source: usize, target: usize) -> Vec<(usize, usize, f64)> {
    (0..target)
        .map(|i| {
            let x = corner_aligned(i, source, target);
            let lo = (x.floor() as usize).min(source - 1);
            let hi = (lo + 1).min(source - 1);
            (lo, hi, x - lo as f64)
        })
        .collect()
}

/// Trilinear resampling to `target` with corner-aligned coordinates.
///
/// Output voxel `i` on an axis samples source position `i·(S−1)/(T−1)`, so the
/// eight corners of the grid are preserved. When `target` equals the current
/// dims the input is returned unchanged.
pub fn resize_trilinear(vol: &Volume3D, target: Dims) -> Result<Volume3D> {
    target.check_nonzero()?;
    if target == vol.dims {
        return Ok(vol.clone());
    }
    let src = vol.dims;
    let td = axis_taps(src.depth, target.depth);
    let th = axis_taps(src.height, target.height);
    let tw = axis_taps(src.width, target.width);
    let at = |d: usize, h: usize, w: usize| vol.data[src.index(d, h, w)] as f64;

    let mut out = Vec::with_capacity(target.len());
    for &(d0, d1, fd) in &td {
        for &(h0, h1, fh) in &th {
            for &(w0, w1, fw) in &tw {
                let lerp = |a: f64, b: f64, t: f64| a + (b - a) * t;
                let c00 = lerp(at(d0, h0, w0), at(d0, h0, w1), fw);
                let c01 = lerp(at(d0, h1, w0), at(d0, h1, w1), fw);
                let c10 = lerp(at(d1, h0, w0), at(d1, h0, w1), fw);
                let c11 = lerp(at(d1, h1, w0), at(d1, h1, w1), fw);
                out.push(lerp(lerp(c00, c01, fh), lerp(c10, c11, fh), fd));
            }
        }
    }
    Volume3D::from_f64(target, out)
}

/// Nearest-neighbour resampling with the same corner-aligned mapping as
/// [`resize_trilinear`]. Intended for label volumes where interpolation would
/// invent values.
pub fn resize_nearest(vol: &Volume3D, target: Dims) -> Result<Volume3D> {
    target.check_nonzero()?;
    if target == vol.dims {
        return Ok(vol.clone());
    }
    let src = vol.dims;
    let pick = |s: usize, t: usize| -> Vec<usize> {
        (0..t)
            .map(|i| (corner_aligned(i, s, t).round() as usize).min(s - 1))
            .collect()
    };
    let (pd, ph, pw) = (
        pick(src.depth, target.depth),
        pick(src.height, target.height),
        pick(src.width, target.width),
    );
    Volume3D::from_fn(target, |d, h, w| vol.get(pd[d], ph[h], pw[w]))
}

/// Binary per-voxel label grid with values in `{0, 1}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentationMask {
    dims: Dims,
    data: Vec<u8>,
}

impl SegmentationMask {
    pub fn new(dims: Dims, data: Vec<u8>) -> Result<Self> {
        dims.check_nonzero()?;
        if data.len() != dims.len() {
            return Err(Error::invalid(format!(
                "mask {dims} needs {} labels, got {}",
                dims.len(),
                data.len()
            )));
        }
        if data.iter().any(|&v| v > 1) {
            return Err(Error::invalid("mask labels must be 0 or 1"));
        }
        Ok(Self { dims, data })
    }

    pub fn from_bools(dims: Dims, bits: impl IntoIterator<Item = bool>) -> Result<Self> {
        Self::new(dims, bits.into_iter().map(u8::from).collect())
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn foreground_count(&self) -> usize {
        self.data.iter().filter(|&&v| v == 1).count()
    }

    pub fn to_volume(&self) -> Volume3D {
        Volume3D {
            dims: self.dims,
            data: self.data.iter().map(|&v| v as f32).collect(),
        }
    }
}

/// Default grey-scale threshold for turning simulated masks into binary ones.
pub const DEFAULT_MASK_THRESHOLD: f32 = 300.0;

/// Voxel becomes foreground iff `value >= threshold`.
pub fn binarize_mask(vol: &Volume3D, threshold: f32) -> SegmentationMask {
    SegmentationMask {
        dims: vol.dims,
        data: vol.data.iter().map(|&v| u8::from(v >= threshold)).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rejects_bad_construction() {
        assert!(Volume3D::new(Dims::new(0, 2, 2), vec![]).is_err());
        assert!(Volume3D::new(Dims::cube(2), vec![0.0; 7]).is_err());
        assert!(Volume3D::new(Dims::new(1, 1, 2), vec![0.0, f32::NAN]).is_err());
        assert!(SegmentationMask::new(Dims::new(1, 1, 2), vec![0, 2]).is_err());
    }

    #[test]
    fn layout_is_depth_major() {
        let dims = Dims::new(2, 3, 4);
        assert_eq!(dims.index(1, 2, 3), 23);
        assert_eq!(dims.coords(23), (1, 2, 3));
        let v = Volume3D::from_fn(dims, |d, h, w| (100 * d + 10 * h + w) as f32).unwrap();
        assert_eq!(v.data()[dims.index(1, 0, 2)], 102.0);
    }

    #[test]
    fn variance_examples() {
        let c = Volume3D::filled(Dims::cube(4), 5.0).unwrap();
        assert_eq!(population_variance(&c).unwrap(), 0.0);
        let two = Volume3D::new(Dims::new(1, 1, 2), vec![0.0, 2.0]).unwrap();
        assert_eq!(population_variance(&two).unwrap(), 1.0);
    }

    #[test]
    fn resize_identity_and_constant() {
        let dims = Dims::new(3, 4, 5);
        let v = Volume3D::from_fn(dims, |d, h, w| (d * 7 + h * 3 + w) as f32 * 0.37).unwrap();
        assert_eq!(resize_trilinear(&v, dims).unwrap(), v);
        let c = Volume3D::filled(dims, 2.5).unwrap();
        let r = resize_trilinear(&c, Dims::new(7, 2, 9)).unwrap();
        assert!(r.data().iter().all(|&x| x == 2.5));
        assert!(resize_trilinear(&v, Dims::new(0, 1, 1)).is_err());
    }

    #[test]
    fn resize_corner_cube_center_is_mean() {
        let v = Volume3D::new(Dims::cube(2), (0..8).map(|i| i as f32).collect()).unwrap();
        let r = resize_trilinear(&v, Dims::cube(3)).unwrap();
        assert_eq!(r.get(1, 1, 1), 3.5);
        // corners preserved
        assert_eq!(r.get(0, 0, 0), 0.0);
        assert_eq!(r.get(2, 2, 2), 7.0);
        assert_eq!(r.get(2, 0, 2), 5.0);
    }

    #[test]
    fn resize_nearest_keeps_labels() {
        let v = Volume3D::new(Dims::cube(2), vec![0., 1., 1., 0., 1., 0., 0., 1.]).unwrap();
        let r = resize_nearest(&v, Dims::cube(5)).unwrap();
        assert!(r.data().iter().all(|&x| x == 0.0 || x == 1.0));
        assert_eq!(r.get(4, 4, 4), 1.0);
    }

    #[test]
    fn binarize_boundary() {
        let v = Volume3D::new(Dims::new(1, 1, 3), vec![299.0, 300.0, 301.0]).unwrap();
        assert_eq!(binarize_mask(&v, DEFAULT_MASK_THRESHOLD).data(), &[0, 1, 1]);
        let z = Volume3D::zeros(Dims::cube(3)).unwrap();
        assert_eq!(binarize_mask(&z, 300.0).foreground_count(), 0);
    }

    #[test]
    fn smooth_roundtrip_through_larger_grid() {
        let dims = Dims::new(9, 8, 10);
        let v = Volume3D::from_fn(dims, |d, h, w| {
            let (x, y, z) = (d as f32 / 8.0, h as f32 / 7.0, w as f32 / 9.0);
            (1.3 * x + 0.4 * y).sin() + (0.9 * z).cos() * x
        })
        .unwrap();
        let up = resize_trilinear(&v, Dims::new(23, 19, 31)).unwrap();
        let back = resize_trilinear(&up, dims).unwrap();
        let err = v
            .data()
            .iter()
            .zip(back.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f32, f32::max);
        assert!(err < 5e-3, "roundtrip error {err}");
    }

    fn small_volume() -> impl Strategy<Value = Volume3D> {
        (1usize..5, 1usize..5, 1usize..5).prop_flat_map(|(d, h, w)| {
            prop::collection::vec(-100.0f32..100.0, d * h * w)
                .prop_map(move |data| Volume3D::new(Dims::new(d, h, w), data).unwrap())
        })
    }

    proptest! {
        #[test]
        fn variance_translation_and_scale(v in small_volume(), c in -50.0f64..50.0, a in -4.0f64..4.0) {
            let base = population_variance(&v).unwrap();
            let n = v.len();
            let shifted = variance_f64(v.data().iter().map(|&x| x as f64 + c), n);
            let scaled = variance_f64(v.data().iter().map(|&x| x as f64 * a), n);
            let tol = 1e-9 * (1.0 + base);
            prop_assert!((shifted - base).abs() <= tol * (1.0 + c.abs()));
            prop_assert!((scaled - a * a * base).abs() <= tol * (1.0 + a * a));
        }

        #[test]
        fn binarize_is_monotone(v in small_volume(), t in -100.0f32..100.0, dt in 0.0f32..50.0) {
            let lo = binarize_mask(&v, t);
            let hi = binarize_mask(&v, t + dt);
            for (a, b) in lo.data().iter().zip(hi.data()) {
                prop_assert!(b <= a);
            }
        }
    }
}
