//! Independent reference implementations and fixtures shared by the
//! integration tests. Nothing here calls the code paths it checks.

#![allow(dead_code)]

use std::f64::consts::PI;

use cryovox::{Dims, Volume3D};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub fn uniform_volume(dims: Dims, lo: f32, hi: f32, seed: u64) -> Volume3D {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x05ee_d0f0_ac1e);
    let data = (0..dims.len()).map(|_| rng.random_range(lo..hi)).collect();
    Volume3D::new(dims, data).unwrap()
}

pub fn gaussian_volume(dims: Dims, variance: f64, seed: u64) -> Volume3D {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x000a_11ce);
    let normal = Normal::new(0.0, variance.sqrt()).unwrap();
    let data = (0..dims.len()).map(|_| normal.sample(&mut rng) as f32).collect();
    Volume3D::new(dims, data).unwrap()
}

/// Direct triple-sum DFT, `O(N²)` in the voxel count.
pub fn naive_dft(vol: &Volume3D) -> Vec<(f64, f64)> {
    let [nd, nh, nw] = [vol.dims().depth, vol.dims().height, vol.dims().width];
    let mut out = Vec::with_capacity(vol.len());
    for u in 0..nd {
        for v in 0..nh {
            for z in 0..nw {
                let (mut re, mut im) = (0.0, 0.0);
                for d in 0..nd {
                    for h in 0..nh {
                        for w in 0..nw {
                            let x = vol.get(d, h, w) as f64;
                            let phase = -2.0
                                * PI
                                * ((u * d) as f64 / nd as f64
                                    + (v * h) as f64 / nh as f64
                                    + (z * w) as f64 / nw as f64);
                            re += x * phase.cos();
                            im += x * phase.sin();
                        }
                    }
                }
                out.push((re, im));
            }
        }
    }
    out
}

pub fn gauss(x: f64, sigma: f64) -> f64 {
    (-(x * x) / (2.0 * sigma * sigma)).exp() / (2.0 * PI * sigma)
}

#[derive(Clone, Copy, PartialEq, Eq)]
pub enum Edge {
    Clamp,
    Mirror,
}

fn edge_index(i: isize, n: usize, edge: Edge) -> usize {
    let n = n as isize;
    let j = match edge {
        Edge::Clamp => {
            if i < 0 {
                0
            } else if i >= n {
                n - 1
            } else {
                i
            }
        }
        Edge::Mirror => {
            if i < 0 {
                -i
            } else if i >= n {
                2 * (n - 1) - i
            } else {
                i
            }
        }
    };
    j as usize
}

fn at(vol: &Volume3D, d: isize, h: isize, w: isize, edge: Edge) -> f64 {
    let dims = vol.dims();
    vol.get(
        edge_index(d, dims.depth, edge),
        edge_index(h, dims.height, edge),
        edge_index(w, dims.width, edge),
    ) as f64
}

/// Dense 27-tap Sobel, components `[∂h, ∂w, ∂d]`.
pub fn naive_sobel(vol: &Volume3D, edge: Edge) -> Vec<[f64; 3]> {
    let smooth = |o: isize| [1.0, 2.0, 1.0][(o + 1) as usize];
    let deriv = |o: isize| [-1.0, 0.0, 1.0][(o + 1) as usize];
    let dims = vol.dims();
    let mut out = Vec::with_capacity(vol.len());
    for d in 0..dims.depth as isize {
        for h in 0..dims.height as isize {
            for w in 0..dims.width as isize {
                let mut g = [0.0; 3];
                for od in -1..=1isize {
                    for oh in -1..=1isize {
                        for ow in -1..=1isize {
                            let v = at(vol, d + od, h + oh, w + ow, edge);
                            g[0] += deriv(oh) * smooth(od) * smooth(ow) * v;
                            g[1] += deriv(ow) * smooth(od) * smooth(oh) * v;
                            g[2] += deriv(od) * smooth(oh) * smooth(ow) * v;
                        }
                    }
                }
                out.push(g);
            }
        }
    }
    out
}

pub struct RefParams {
    pub radius: isize,
    pub sigma_d: f64,
    pub sigma_r: f64,
    pub edge: Edge,
}

impl Default for RefParams {
    fn default() -> Self {
        Self {
            radius: 1,
            sigma_d: 120.0,
            sigma_r: 1.2,
            edge: Edge::Clamp,
        }
    }
}

/// Reference bilateral filter; `range(p, q)` is the range-kernel argument
/// between centre `p` and neighbour `q` given as `(d, h, w)` coordinates
/// (neighbour already boundary-resolved).
fn naive_weighted(
    vol: &Volume3D,
    p: &RefParams,
    range: impl Fn((usize, usize, usize), (usize, usize, usize)) -> f64,
) -> Vec<f64> {
    let dims = vol.dims();
    let r = p.radius;
    let mut out = Vec::with_capacity(vol.len());
    for d in 0..dims.depth {
        for h in 0..dims.height {
            for w in 0..dims.width {
                let (mut num, mut den) = (0.0, 0.0);
                for od in -r..=r {
                    for oh in -r..=r {
                        for ow in -r..=r {
                            let q = (
                                edge_index(d as isize + od, dims.depth, p.edge),
                                edge_index(h as isize + oh, dims.height, p.edge),
                                edge_index(w as isize + ow, dims.width, p.edge),
                            );
                            let dist = ((od * od + oh * oh + ow * ow) as f64).sqrt();
                            let wt = gauss(dist, p.sigma_d) * gauss(range((d, h, w), q), p.sigma_r);
                            num += wt * vol.get(q.0, q.1, q.2) as f64;
                            den += wt;
                        }
                    }
                }
                out.push(num / den);
            }
        }
    }
    out
}

pub fn naive_bilateral(vol: &Volume3D, p: &RefParams) -> Vec<f64> {
    naive_weighted(vol, p, |a, b| {
        vol.get(b.0, b.1, b.2) as f64 - vol.get(a.0, a.1, a.2) as f64
    })
}

pub fn naive_ibf(vol: &Volume3D, p: &RefParams) -> Vec<f64> {
    let g = naive_sobel(vol, p.edge);
    let dims = vol.dims();
    naive_weighted(vol, p, |a, b| {
        let ga = g[dims.index(a.0, a.1, a.2)];
        let gb = g[dims.index(b.0, b.1, b.2)];
        ((ga[0] - gb[0]).powi(2) + (ga[1] - gb[1]).powi(2) + (ga[2] - gb[2]).powi(2)).sqrt()
    })
}

/// Largest per-voxel violation of `|a − b| ≤ tol·|b| + 1e-12·max|b|`,
/// expressed as a multiple of the allowance (≤ 1 passes).
pub fn rel_excess(actual: &[f32], expected: &[f64], tol: f64) -> f64 {
    let peak = expected.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    actual
        .iter()
        .zip(expected)
        .map(|(&a, &b)| (a as f64 - b).abs() / (tol * b.abs() + 1e-12 * peak).max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max)
}

/// Noisy step along `h`: 0 below `h = 8`, `amplitude` from there on.
pub const STEP_DIMS: Dims = Dims::cube(16);
pub const STEP_AMPLITUDE: f32 = 1.0;
pub const STEP_NOISE_VARIANCE: f64 = 0.0025;
pub const STEP_SEED: u64 = 2024;

pub fn step_edge_fixture() -> Volume3D {
    let noise = gaussian_volume(STEP_DIMS, STEP_NOISE_VARIANCE, STEP_SEED);
    Volume3D::from_fn(STEP_DIMS, |d, h, w| {
        let base = if h >= 8 { STEP_AMPLITUDE } else { 0.0 };
        base + noise.get(d, h, w)
    })
    .unwrap()
}

/// Mean variance of the two flat plateaus (planes `1..=5` and `10..=14`,
/// interior in `d` and `w`) and the plateau step `mean(9..=11) − mean(4..=6)`.
pub fn step_statistics(vol: &Volume3D) -> (f64, f64) {
    let region = |hs: std::ops::RangeInclusive<usize>| -> Vec<f64> {
        let mut v = Vec::new();
        for d in 1..15 {
            for h in hs.clone() {
                for w in 1..15 {
                    v.push(vol.get(d, h, w) as f64);
                }
            }
        }
        v
    };
    let var = |v: &[f64]| {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64
    };
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let flat = (var(&region(1..=5)) + var(&region(10..=14))) / 2.0;
    let step = mean(&region(9..=11)) - mean(&region(4..=6));
    (flat, step)
}

/// Radial shells of a cubic `n³` spectrum by squared integer radius, largest
/// radius first, with their bin counts.
pub fn radial_shells(n: usize) -> Vec<(i64, usize)> {
    let f = |k: usize| -> i64 {
        let k = k as i64;
        let n = n as i64;
        if 2 * k <= n {
            k
        } else {
            k - n
        }
    };
    let mut counts = std::collections::BTreeMap::new();
    for u in 0..n {
        for v in 0..n {
            for z in 0..n {
                *counts.entry(f(u).pow(2) + f(v).pow(2) + f(z).pow(2)).or_insert(0usize) += 1;
            }
        }
    }
    counts.into_iter().rev().collect()
}

pub fn squared_radius(n: usize, index: usize) -> i64 {
    let f = |k: usize| -> i64 {
        let (k, n) = (k as i64, n as i64);
        if 2 * k <= n {
            k
        } else {
            k - n
        }
    };
    let (u, rest) = (index / (n * n), index % (n * n));
    let (v, z) = (rest / n, rest % n);
    f(u).pow(2) + f(v).pow(2) + f(z).pow(2)
}

/// Hand-counted overlap fixture on a 2×4×4 grid (32 voxels):
/// `|A| = 8`, `|B| = 4`, `|A∩B| = 4`.
pub fn overlap_fixture() -> (Vec<u8>, Vec<u8>) {
    let mut a = vec![0u8; 32];
    let mut b = vec![0u8; 32];
    a[..8].fill(1);
    b[2..6].fill(1);
    (a, b)
}
