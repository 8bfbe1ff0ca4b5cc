mod common;

use common::*;
use floquet_om::analytic::normalized_peak_ratio;
use floquet_om::fitting::{
    fit_cooling_curve, fit_kerr_from_ratio, fit_kerr_from_spectra, CoolingSample, RatioSample,
    SpectrumSample,
};
use floquet_om::floquet::{converged_spectrum, heterodyne_spectrum};
use floquet_om::model::hz;
use floquet_om::spectrum::linspace;
use floquet_om::{DetectionParams, KerrModel};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

const C0: f64 = 1.014e-2;

fn omegas() -> Vec<f64> {
    [10e6, 15e6, 20e6, 30e6, 45e6, 70e6, 110e6, 160e6, 220e6]
        .iter()
        .map(|&f| hz(f))
        .collect()
}

#[test]
fn kerr_ratio_fit_survives_two_percent_noise() {
    let p = params();
    let truth = kerr();
    let clean = normalized_peak_ratio(&p, &truth, 640.0, &omegas()).unwrap();
    let noise = Normal::new(0.0, 0.02).unwrap();
    let mut hits = 0;
    let seeds = 20;
    for seed in 0..seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<_> = omegas()
            .iter()
            .zip(&clean)
            .map(|(&o, &r)| RatioSample::new(o, r * (1.0 + noise.sample(&mut rng))))
            .collect();
        let fit = fit_kerr_from_ratio(&data, &p, 640.0).unwrap();
        let ok_g = (fit.kerr.gamma_th / truth.gamma_th - 1.0).abs() < 0.15;
        let ok_p = (fit.kerr.g_product / truth.g_product - 1.0).abs() < 0.15;
        hits += usize::from(ok_g && ok_p);
    }
    assert!(hits as f64 >= 0.9 * seeds as f64, "{hits}/{seeds}");
}

#[test]
fn kerr_ratio_fit_uses_sigma_column() {
    let p = params();
    let truth = kerr();
    let clean = normalized_peak_ratio(&p, &truth, 640.0, &omegas()).unwrap();
    let data: Vec<_> = omegas()
        .iter()
        .zip(&clean)
        .map(|(&o, &r)| RatioSample {
            omega_mod: o,
            ratio: r,
            sigma: Some(0.02 * r),
        })
        .collect();
    let fit = fit_kerr_from_ratio(&data, &p, 640.0).unwrap();
    // Known sigmas give an unscaled covariance even for a perfect fit.
    assert!(fit.gamma_th_sigma() > 0.0);
    assert!(fit.gamma_th_sigma() < 0.5 * truth.gamma_th);
}

#[test]
fn kerr_spectra_fit_round_trip() {
    let p = params();
    let truth = kerr();
    let tones = two_tones_offset(&p, hz(4e6), 100.0, hz(0.2e6));
    let e = env(20.0);
    let det = DetectionParams::new(0.044, hz(30e6)).unwrap();
    let grid = linspace(hz(-20e6), hz(16e6), 361);
    let (sn, _) = converged_spectrum(&p, &tones, &truth, &e, &grid, 1e-5).unwrap();
    let trace = heterodyne_spectrum(&sn, &det).unwrap();
    let start = KerrModel::new(hz(9e6), hz(1.0).powi(2) * 7e12, 0.0).unwrap();
    let fit = fit_kerr_from_spectra(
        &[SpectrumSample { tones, trace }],
        &p,
        &e,
        &det,
        &start,
        1e-4,
    )
    .unwrap();
    assert!((fit.kerr.gamma_th / truth.gamma_th - 1.0).abs() < 0.2, "{:?}", fit.kerr);
    assert!((fit.kerr.g_product / truth.g_product - 1.0).abs() < 0.2, "{:?}", fit.kerr);
}

fn cooling_samples(n_th: f64, alpha: f64, n_c: &[f64]) -> Vec<CoolingSample> {
    n_c.iter()
        .map(|&n| CoolingSample::new(n, (n_th + alpha * n) / (1.0 + C0 * n)))
        .collect()
}

#[test]
fn cooling_fit_is_exact_on_clean_data() {
    let pts = cooling_samples(17.0, 1.5 * C0, &[2.0, 10.0, 40.0, 100.0, 250.0, 640.0]);
    let fit = fit_cooling_curve(&pts, C0).unwrap();
    assert!((fit.n_th - 17.0).abs() < 1e-9 * 17.0, "{fit:?}");
    assert!((fit.alpha_heating - 1.5 * C0).abs() < 1e-9 * C0, "{fit:?}");
}

#[test]
fn cooling_uncertainty_shrinks_with_more_points() {
    let noise = Normal::new(0.0, 0.03).unwrap();
    let spread = |per_decade: usize| {
        let n_c: Vec<f64> = (0..3 * per_decade)
            .map(|i| 1.0 * 10f64.powf(i as f64 / per_decade as f64))
            .collect();
        let mut sum = 0.0;
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pts: Vec<_> = cooling_samples(17.0, 1.5 * C0, &n_c)
                .into_iter()
                .map(|s| CoolingSample::new(s.n_c, s.n_bar * (1.0 + noise.sample(&mut rng))))
                .collect();
            sum += fit_cooling_curve(&pts, C0).unwrap().n_th_sigma();
        }
        sum / 20.0
    };
    let ratio = spread(4) / spread(16);
    assert!((ratio - 2.0).abs() < 0.4, "sigma ratio {ratio}");
}
