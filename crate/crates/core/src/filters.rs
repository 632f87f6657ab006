//! Edge-preserving volumetric denoisers.
//!
//! [`bilateral_filter`] is the classical 3D bilateral filter: every output
//! voxel is a normalized mean over a cubic window, weighted by a Gaussian of
//! the spatial offset (domain kernel) times a Gaussian of the intensity
//! difference to the centre voxel (range kernel).
//!
//! [`improved_bilateral_filter`] keeps the domain kernel but feeds the range
//! kernel the Euclidean norm of the difference between 3D gradient vectors.
//! Gradients come from [`sobel_gradient3`] evaluated once on the unfiltered
//! input. Because a constant offset leaves every gradient untouched, its
//! range weights do not depend on absolute brightness.
//!
//! With the default `sigma_d = 120` and a radius-1 window (largest offset
//! √3) the domain kernel is nearly flat; the range kernel does almost all
//! of the edge discrimination.

use crate::error::{Error, Result};
use crate::volume::{Dims, Volume3D};

pub const DEFAULT_SIGMA_D: f64 = 120.0;
pub const DEFAULT_SIGMA_R: f64 = 1.2;
pub const DEFAULT_WINDOW_RADIUS: usize = 1;

/// How out-of-range neighbour indices are resolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Boundary {
    /// Replicate the nearest edge voxel.
    #[default]
    Clamp,
    /// Reflect about the edge voxel without repeating it (`-1 → 1`).
    Mirror,
}

impl Boundary {
    /// Resolves a possibly out-of-range index on an axis of length `n`.
    /// Mirror assumes `|overshoot| < n`, which holds whenever the window fits.
    #[inline]
    pub fn resolve(self, i: isize, n: usize) -> usize {
        let last = n as isize - 1;
        let j = match self {
            Boundary::Clamp => i.clamp(0, last),
            Boundary::Mirror => {
                if i < 0 {
                    (-i).min(last)
                } else if i > last {
                    (2 * last - i).max(0)
                } else {
                    i
                }
            }
        };
        j as usize
    }
}

impl std::str::FromStr for Boundary {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "clamp" => Ok(Self::Clamp),
            "mirror" => Ok(Self::Mirror),
            other => Err(Error::invalid(format!("unknown boundary policy '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BilateralParams {
    pub window_radius: usize,
    pub sigma_d: f64,
    pub sigma_r: f64,
    pub boundary: Boundary,
}

impl Default for BilateralParams {
    fn default() -> Self {
        Self {
            window_radius: DEFAULT_WINDOW_RADIUS,
            sigma_d: DEFAULT_SIGMA_D,
            sigma_r: DEFAULT_SIGMA_R,
            boundary: Boundary::Clamp,
        }
    }
}

impl BilateralParams {
    pub fn validate(&self) -> Result<()> {
        if self.window_radius < 1 {
            return Err(Error::invalid("window radius must be >= 1"));
        }
        if !(self.sigma_d > 0.0 && self.sigma_d.is_finite()) {
            return Err(Error::invalid(format!("sigma_d must be > 0, got {}", self.sigma_d)));
        }
        if !(self.sigma_r > 0.0 && self.sigma_r.is_finite()) {
            return Err(Error::invalid(format!("sigma_r must be > 0, got {}", self.sigma_r)));
        }
        Ok(())
    }

    pub fn window_size(&self) -> usize {
        2 * self.window_radius + 1
    }
}

/// `exp(−x²/(2σ²)) / (2πσ)`.
///
/// The `1/(2πσ)` prefactor cancels inside both filters but is kept so the
/// kernel can be checked against its closed form.
pub fn gaussian_kernel(x: f64, sigma: f64) -> Result<f64> {
    if sigma.is_nan() || sigma <= 0.0 {
        return Err(Error::invalid(format!("kernel width must be > 0, got {sigma}")));
    }
    Ok(Gaussian::new(sigma).eval(x))
}

#[derive(Debug, Clone, Copy)]
struct Gaussian {
    neg_inv_two_var: f64,
    norm: f64,
}

impl Gaussian {
    fn new(sigma: f64) -> Self {
        Self {
            neg_inv_two_var: -1.0 / (2.0 * sigma * sigma),
            norm: 1.0 / (2.0 * std::f64::consts::PI * sigma),
        }
    }

    #[inline]
    fn eval(&self, x: f64) -> f64 {
        self.eval_sq(x * x)
    }

    #[inline]
    fn eval_sq(&self, x2: f64) -> f64 {
        (x2 * self.neg_inv_two_var).exp() * self.norm
    }
}

/// Per-voxel gradient vectors, components ordered `[∂h, ∂w, ∂d]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientField {
    dims: Dims,
    data: Vec<[f64; 3]>,
}

impl GradientField {
    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn data(&self) -> &[[f64; 3]] {
        &self.data
    }

    #[inline]
    pub fn get(&self, d: usize, h: usize, w: usize) -> [f64; 3] {
        self.data[self.dims.index(d, h, w)]
    }
}

/// Gradient operator feeding the improved filter's range kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GradientOperator {
    /// 3D Sobel first derivatives of the intensities.
    #[default]
    Sobel,
    /// Central differences `Δ(q+1) − Δ(q−1)` of the 7-point Laplacian response.
    LaplacianDifference,
}

impl std::str::FromStr for GradientOperator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sobel" => Ok(Self::Sobel),
            "laplacian" => Ok(Self::LaplacianDifference),
            other => Err(Error::invalid(format!("unknown gradient operator '{other}'"))),
        }
    }
}

const AXIS_D: usize = 0;
const AXIS_H: usize = 1;
const AXIS_W: usize = 2;

/// One 3-tap pass `k[0]·f(i−1) + k[1]·f(i) + k[2]·f(i+1)` along `axis`.
fn pass3(src: &[f64], dims: Dims, axis: usize, k: [f64; 3], boundary: Boundary) -> Vec<f64> {
    let n = dims.as_array()[axis];
    let mut out = vec![0.0; src.len()];
    for d in 0..dims.depth {
        for h in 0..dims.height {
            for w in 0..dims.width {
                let mut pos = [d, h, w];
                let i = pos[axis] as isize;
                let mut acc = 0.0;
                for (t, &kt) in k.iter().enumerate() {
                    if kt == 0.0 {
                        continue;
                    }
                    pos[axis] = boundary.resolve(i + t as isize - 1, n);
                    acc += kt * src[dims.index(pos[0], pos[1], pos[2])];
                }
                out[dims.index(d, h, w)] = acc;
            }
        }
    }
    out
}

fn check_min_extent(dims: Dims, min: usize, what: &str) -> Result<()> {
    if dims.as_array().iter().any(|&n| n < min) {
        return Err(Error::invalid(format!(
            "{what} needs every dimension >= {min}, got {dims}"
        )));
    }
    Ok(())
}

const DERIVATIVE: [f64; 3] = [-1.0, 0.0, 1.0];
const SMOOTH: [f64; 3] = [1.0, 2.0, 1.0];

/// Separable 3D Sobel gradient: `[−1, 0, 1]` along the differentiated axis
/// and `[1, 2, 1]` along each of the other two. Unnormalized, so a unit ramp
/// yields 32 in the interior.
pub fn sobel_gradient3(vol: &Volume3D, boundary: Boundary) -> Result<GradientField> {
    let dims = vol.dims();
    check_min_extent(dims, 3, "sobel gradient")?;
    let src: Vec<f64> = vol.data().iter().map(|&v| v as f64).collect();
    let component = |axis: usize| {
        let mut buf = src.clone();
        for a in [AXIS_D, AXIS_H, AXIS_W] {
            let k = if a == axis { DERIVATIVE } else { SMOOTH };
            buf = pass3(&buf, dims, a, k, boundary);
        }
        buf
    };
    let (gh, gw, gd) = (component(AXIS_H), component(AXIS_W), component(AXIS_D));
    Ok(GradientField {
        dims,
        data: (0..dims.len()).map(|i| [gh[i], gw[i], gd[i]]).collect(),
    })
}

/// Central difference of the 7-point Laplacian along each axis.
pub fn laplacian_gradient3(vol: &Volume3D, boundary: Boundary) -> Result<GradientField> {
    let dims = vol.dims();
    check_min_extent(dims, 3, "laplacian gradient")?;
    let src: Vec<f64> = vol.data().iter().map(|&v| v as f64).collect();
    let second = [1.0, -2.0, 1.0];
    let mut lap = vec![0.0; src.len()];
    for axis in [AXIS_D, AXIS_H, AXIS_W] {
        for (l, s) in lap.iter_mut().zip(pass3(&src, dims, axis, second, boundary)) {
            *l += s;
        }
    }
    let gh = pass3(&lap, dims, AXIS_H, DERIVATIVE, boundary);
    let gw = pass3(&lap, dims, AXIS_W, DERIVATIVE, boundary);
    let gd = pass3(&lap, dims, AXIS_D, DERIVATIVE, boundary);
    Ok(GradientField {
        dims,
        data: (0..dims.len()).map(|i| [gh[i], gw[i], gd[i]]).collect(),
    })
}

pub fn gradient_field(
    vol: &Volume3D,
    op: GradientOperator,
    boundary: Boundary,
) -> Result<GradientField> {
    match op {
        GradientOperator::Sobel => sobel_gradient3(vol, boundary),
        GradientOperator::LaplacianDifference => laplacian_gradient3(vol, boundary),
    }
}

/// Window geometry shared by both filters: resolved neighbour indices per
/// axis position plus the domain weight of every window offset.
struct Window {
    size: usize,
    taps: [Vec<usize>; 3],
    domain: Vec<f64>,
}

impl Window {
    fn new(dims: Dims, p: &BilateralParams) -> Result<Self> {
        p.validate()?;
        check_min_extent(dims, p.window_size(), "bilateral window")?;
        let r = p.window_radius as isize;
        let size = p.window_size();
        let axis_taps = |n: usize| -> Vec<usize> {
            (0..n as isize)
                .flat_map(|i| (-r..=r).map(move |o| p.boundary.resolve(i + o, n)))
                .collect()
        };
        let domain_kernel = Gaussian::new(p.sigma_d);
        let mut domain = Vec::with_capacity(size * size * size);
        for od in -r..=r {
            for oh in -r..=r {
                for ow in -r..=r {
                    let dist2 = (od * od + oh * oh + ow * ow) as f64;
                    domain.push(domain_kernel.eval_sq(dist2));
                }
            }
        }
        Ok(Self {
            size,
            taps: [
                axis_taps(dims.depth),
                axis_taps(dims.height),
                axis_taps(dims.width),
            ],
            domain,
        })
    }

    /// Calls `visit(offset_index, neighbour_index)` for every window offset
    /// around voxel `(d, h, w)`, offsets in `(d, h, w)` raster order.
    #[inline]
    fn for_each(&self, dims: Dims, d: usize, h: usize, w: usize, mut visit: impl FnMut(usize, usize)) {
        let s = self.size;
        let (td, th, tw) = (
            &self.taps[0][d * s..(d + 1) * s],
            &self.taps[1][h * s..(h + 1) * s],
            &self.taps[2][w * s..(w + 1) * s],
        );
        let mut o = 0;
        for &qd in td {
            for &qh in th {
                let row = dims.index(qd, qh, 0);
                for &qw in tw {
                    visit(o, row + qw);
                    o += 1;
                }
            }
        }
    }
}

/// Normalized weighted window mean; `range(p, q)` returns the range weight
/// between centre voxel `p` and neighbour `q` (flat indices).
fn filter_with(
    vol: &Volume3D,
    window: &Window,
    range: impl Fn(usize, usize) -> f64,
) -> Result<Volume3D> {
    let dims = vol.dims();
    let data = vol.data();
    let mut out = Vec::with_capacity(dims.len());
    for d in 0..dims.depth {
        for h in 0..dims.height {
            for w in 0..dims.width {
                let p = dims.index(d, h, w);
                let (mut num, mut den) = (0.0f64, 0.0f64);
                window.for_each(dims, d, h, w, |o, q| {
                    let wt = window.domain[o] * range(p, q);
                    num += wt * data[q] as f64;
                    den += wt;
                });
                debug_assert!(den > 0.0, "bilateral weight sum vanished at {p}");
                out.push(num / den);
            }
        }
    }
    Volume3D::from_f64(dims, out)
}

/// Classical 3D bilateral filter; output dims equal input dims.
pub fn bilateral_filter(vol: &Volume3D, p: &BilateralParams) -> Result<Volume3D> {
    let window = Window::new(vol.dims(), p)?;
    let range_kernel = Gaussian::new(p.sigma_r);
    let data = vol.data();
    filter_with(vol, &window, |a, b| {
        range_kernel.eval(data[b] as f64 - data[a] as f64)
    })
}

/// Bilateral filter whose range kernel compares Sobel gradient vectors.
pub fn improved_bilateral_filter(vol: &Volume3D, p: &BilateralParams) -> Result<Volume3D> {
    improved_bilateral_filter_with(vol, p, GradientOperator::Sobel)
}

pub fn improved_bilateral_filter_with(
    vol: &Volume3D,
    p: &BilateralParams,
    op: GradientOperator,
) -> Result<Volume3D> {
    let window = Window::new(vol.dims(), p)?;
    let grad = gradient_field(vol, op, p.boundary)?;
    let range_kernel = Gaussian::new(p.sigma_r);
    let g = grad.data();
    filter_with(vol, &window, |a, b| range_kernel.eval_sq(dist2(&g[a], &g[b])))
}

#[inline]
fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let (x, y, z) = (a[0] - b[0], a[1] - b[1], a[2] - b[2]);
    x * x + y * y + z * z
}

/// Range weights of the improved filter, `(2r+1)³` per voxel in window
/// raster order.
pub fn improved_range_weights(
    vol: &Volume3D,
    p: &BilateralParams,
    op: GradientOperator,
) -> Result<Vec<f64>> {
    let dims = vol.dims();
    let window = Window::new(dims, p)?;
    let grad = gradient_field(vol, op, p.boundary)?;
    let range_kernel = Gaussian::new(p.sigma_r);
    let g = grad.data();
    let mut weights = Vec::with_capacity(dims.len() * window.domain.len());
    for d in 0..dims.depth {
        for h in 0..dims.height {
            for w in 0..dims.width {
                let centre = dims.index(d, h, w);
                window.for_each(dims, d, h, w, |_, q| {
                    weights.push(range_kernel.eval_sq(dist2(&g[centre], &g[q])));
                });
            }
        }
    }
    Ok(weights)
}
