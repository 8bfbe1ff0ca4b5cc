mod common;

use common::*;
use floquet_om::analytic::ideal_spectrum_with;
use floquet_om::analytic::IdealOptions;
use floquet_om::model::hz;
use floquet_om::spectrum::linspace;
use floquet_om::thermometry::{asymmetry_estimate, fit_lorentzians, fit_lorentzians_weighted};
use floquet_om::{DetectionParams, SpectrumTrace, Tone, ToneRole, ToneSet};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Red and blue probes with equal cooperativity, so probe damping cancels
/// and the occupancy equals the bath occupancy.
fn setup() -> (floquet_om::SystemParams, ToneSet, SpectrumTrace, f64) {
    let p = params();
    let red = Tone::new(ToneRole::RedProbe, -p.omega_m - hz(2e6), 20.0).unwrap();
    let blue = Tone::new(ToneRole::BlueProbe, p.omega_m + hz(2e6), 20.0).unwrap();
    let tones = ToneSet::new(vec![red, blue], &p).unwrap();
    let det = DetectionParams::new(0.044, 0.0).unwrap();
    let grid = linspace(hz(-4e6), hz(4e6), 1601);
    let trace = ideal_spectrum_with(
        &p,
        &tones,
        &env(1.5),
        &det,
        &grid,
        IdealOptions { probe_backaction: true },
    )
    .unwrap();
    let c = tones.cooperativity(ToneRole::RedProbe, &p);
    (p, tones, trace, c)
}

#[test]
fn clean_asymmetry_recovers_occupancy() {
    let (_, _, trace, c) = setup();
    let fit = fit_lorentzians(&trace, 2, &[hz(-2e6), hz(2e6)]).unwrap();
    let est = asymmetry_estimate(&fit.peaks[0], &fit.peaks[1], c, c, 0.0).unwrap();
    assert!((est.n_bar / 1.5 - 1.0).abs() < 0.01, "{est:?}");
}

#[test]
fn noisy_asymmetry_error_bars_cover_the_truth() {
    let (_, _, clean, c) = setup();
    // Shot-noise-limited estimate averaged over many records.
    let records: f64 = 1.0e6;
    let seeds = 40;
    let mut covered = 0;
    for seed in 0..seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sigma: Vec<f64> = clean.values.iter().map(|v| v / records.sqrt()).collect();
        let values: Vec<f64> = clean
            .values
            .iter()
            .zip(&sigma)
            .map(|(v, s)| {
                let z: f64 = StandardNormal.sample(&mut rng);
                v + s * z
            })
            .collect();
        let noisy = SpectrumTrace::measured(
            clean.freq_grid.clone(),
            values,
            floquet_om::Normalization::ShotNoiseNormalized,
        )
        .unwrap();
        let fit = fit_lorentzians_weighted(&noisy, &[hz(-2e6), hz(2e6)], Some(&sigma)).unwrap();
        let est = asymmetry_estimate(&fit.peaks[0], &fit.peaks[1], c, c, 0.0).unwrap();
        if (est.n_bar - 1.5).abs() <= 2.0 * est.sigma {
            covered += 1;
        }
    }
    assert!(covered as f64 >= 0.9 * seeds as f64, "{covered}/{seeds}");
}
