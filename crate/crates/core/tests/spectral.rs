mod common;

use common::{gaussian_volume, naive_dft, radial_shells, squared_radius, uniform_volume};
use cryovox::spectral::{
    dft3, estimate_noise_variance, extract_noise, highpass, idft3, inject_noise, synthesize_noise,
    HighPassMask, HighPassSpec, NoiseKind, NoiseModel,
};
use cryovox::volume::population_variance;
use cryovox::{Dims, Volume3D};
use proptest::prelude::*;

#[test]
fn dft_matches_triple_sum() {
    for (dims, seed) in [(Dims::cube(8), 1), (Dims::new(3, 5, 6), 2)] {
        let v = uniform_volume(dims, -1.0, 1.0, seed);
        let fast = dft3(&v).unwrap();
        let slow = naive_dft(&v);
        let peak = slow.iter().fold(0.0f64, |m, (re, im)| m.max(re.hypot(*im)));
        for (c, (re, im)) in fast.coeffs().iter().zip(&slow) {
            assert!((c.re - re).hypot(c.im - im) <= 1e-6 * peak.max(1.0));
        }
    }
}

#[test]
fn roundtrip_and_parseval() {
    for n in [7, 16, 32] {
        let v = gaussian_volume(Dims::cube(n), 1.0, n as u64);
        let s = dft3(&v).unwrap();
        assert!(s.hermitian_defect() < 1e-9 * (n * n * n) as f64);
        let back = idft3(&s).unwrap();
        let err = v
            .data()
            .iter()
            .zip(back.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f32, f32::max);
        assert!(err < 1e-5 * v.max_abs());

        let energy: f64 = v.data().iter().map(|&x| (x as f64).powi(2)).sum();
        let spectral: f64 = s.coeffs().iter().map(|c| c.norm_sqr()).sum::<f64>() / v.len() as f64;
        assert!((energy - spectral).abs() <= 1e-5 * energy);
    }
}

#[test]
fn roundtrip_64_cube() {
    let v = uniform_volume(Dims::cube(64), -3.0, 3.0, 64);
    let back = idft3(&dft3(&v).unwrap()).unwrap();
    let err = v
        .data()
        .iter()
        .zip(back.data())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f32, f32::max);
    assert!(err < 1e-5 * v.max_abs());
}

#[test]
fn keep_fraction_within_one_shell() {
    let n = 32;
    let dims = Dims::cube(n);
    let mask = HighPassMask::new(dims, HighPassSpec::new(0.244).unwrap()).unwrap();
    let target = 0.244 * dims.len() as f64;
    assert!((target - 7995.392).abs() < 1e-9);

    let shells = radial_shells(n);
    let mut cumulative = vec![0usize];
    for (_, count) in &shells {
        cumulative.push(cumulative.last().unwrap() + count);
    }
    let k = cumulative.iter().rposition(|&c| (c as f64) <= target).unwrap();
    let bracket = [cumulative[k], cumulative[k + 1]];
    assert!(bracket.contains(&mask.retained()), "{} not in {bracket:?}", mask.retained());
    assert!((mask.retained() as f64 - target).abs() <= (bracket[1] - bracket[0]) as f64);

    // retained bins are exactly the outermost shells
    let kept_min = (0..dims.len())
        .filter(|&i| mask.keeps(i))
        .map(|i| squared_radius(n, i))
        .min()
        .unwrap();
    let dropped_max = (0..dims.len())
        .filter(|&i| !mask.keeps(i))
        .map(|i| squared_radius(n, i))
        .max()
        .unwrap();
    assert!(kept_min > dropped_max);
    assert_eq!((0..dims.len()).filter(|&i| mask.keeps(i)).count(), mask.retained());
}

#[test]
fn white_noise_residual_variance() {
    let hp = HighPassSpec::default();
    let v = gaussian_volume(Dims::cube(32), 0.04, 77);
    let r = extract_noise(&v, hp).unwrap();
    let var = population_variance(&r).unwrap();
    assert!((var - 0.00976).abs() <= 0.15 * 0.00976, "{var}");
    assert!(r.mean().abs() < 1e-8);

    let model = NoiseModel::new(NoiseKind::Gaussian, 0.04, 5).unwrap();
    let s = synthesize_noise(&model, Dims::cube(32)).unwrap();
    assert!(s.mean().abs() <= 0.004);
    assert!((population_variance(&s).unwrap() - 0.04).abs() <= 0.004);
}

#[test]
fn estimate_over_ten_volumes() {
    let hp = HighPassSpec::default();
    let vols: Vec<_> = (0..10).map(|i| gaussian_volume(Dims::cube(32), 0.04, 100 + i)).collect();
    let est = estimate_noise_variance(&vols, hp).unwrap();
    let expected = est.realized_fraction * 0.04;
    assert!((est.variance - expected).abs() <= 0.1 * expected);
    assert!((est.variance - 0.00976).abs() <= 0.1 * 0.00976);
    let consts = vec![Volume3D::filled(Dims::cube(8), 4.0).unwrap(); 3];
    assert!(estimate_noise_variance(&consts, hp).unwrap().variance < 1e-20);
}

#[test]
fn additive_injection_composes() {
    let dims = Dims::cube(8);
    let v = uniform_volume(dims, -1.0, 1.0, 9);
    let e1 = gaussian_volume(dims, 0.1, 1);
    let e2 = gaussian_volume(dims, 0.1, 2);
    let sum = Volume3D::new(
        dims,
        e1.data().iter().zip(e2.data()).map(|(a, b)| a + b).collect(),
    )
    .unwrap();
    let twice = inject_noise(&inject_noise(&v, NoiseKind::Gaussian, &e1).unwrap(), NoiseKind::Gaussian, &e2).unwrap();
    let once = inject_noise(&v, NoiseKind::Gaussian, &sum).unwrap();
    for (a, b) in twice.data().iter().zip(once.data()) {
        assert!((a - b).abs() <= 4.0 * f32::EPSILON * (1.0 + a.abs()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn highpass_idempotent_and_symmetric(d in 2usize..9, h in 2usize..9, w in 2usize..9, rho in 0.0f64..=1.0, seed in any::<u64>()) {
        let v = uniform_volume(Dims::new(d, h, w), -1.0, 1.0, seed);
        let hp = HighPassSpec::new(rho).unwrap();
        let once = highpass(&dft3(&v).unwrap(), hp).unwrap();
        let twice = highpass(&once.spectrum, hp).unwrap();
        prop_assert_eq!(&once.spectrum, &twice.spectrum);
        prop_assert!(once.spectrum.hermitian_defect() < 1e-9 * (d * h * w) as f64);
        // inverse of a masked real spectrum stays real
        let r = idft3(&once.spectrum).unwrap();
        if rho < 1.0 {
            prop_assert!(r.mean().abs() < 1e-6);
        }
    }
}
