mod common;

use common::*;
use floquet_om::analytic::{ideal_weights, IdealOptions, ThreeMode};
use floquet_om::floquet::{
    noise_spectrum, sideband_weights, CavityResponse, FloquetConfig, FloquetSystem,
    LatticeCoefficients,
};
use floquet_om::model::hz;
use floquet_om::oracle::{compare_spectra, oracle_spectrum, OracleConfig};
use floquet_om::spectrum::linspace;
use floquet_om::{DetectionParams, KerrModel, Tone, ToneRole, ToneSet};
use num_complex::Complex64;
use proptest::prelude::*;

#[test]
fn minimal_window_equals_three_mode_closed_form() {
    let p = params();
    let tones = two_tones_offset(&p, hz(20e6), 300.0, hz(0.4e6));
    let k = kerr();
    let coeffs = LatticeCoefficients::from_model(&p, &tones, &k).unwrap();
    let closed = ThreeMode::new(coeffs, CavityResponse::Exact);
    let system = FloquetSystem::new(coeffs, FloquetConfig::minimal()).unwrap();
    let grid = linspace(hz(-30e6), hz(10e6), 4001);
    let lattice = system.normal_ordered(40.0, &grid).unwrap();
    for (&x, &v) in grid.iter().zip(&lattice) {
        let w = closed.normal_ordered(40.0, x);
        assert!((v - w).abs() <= 1e-9 * w.abs(), "x = {x}: {v} vs {w}");
    }
}

#[test]
fn null_nonlinearity_weights_follow_cooperativities() {
    let p = params();
    let tones = two_tones(&p, hz(20e6), 200.0);
    let e = env(50.0);
    let w = sideband_weights(&p, &tones, &KerrModel::none(), &e, &FloquetConfig::padded(2)).unwrap();
    let get = |n| w.iter().find(|(i, _)| *i == n).unwrap().1;
    let det = DetectionParams::new(1.0, 0.0).unwrap();
    let ideal = ideal_weights(&p, &tones, &e, &det, IdealOptions { probe_backaction: true }).unwrap();
    let floquet_ratio = get(-1) / get(0);
    let ideal_ratio = ideal.cooling / ideal.red;
    assert!((floquet_ratio / ideal_ratio - 1.0).abs() < 1e-3, "{floquet_ratio} vs {ideal_ratio}");
    // Outer sidebands come only from scattering through off-resonant
    // mechanical components, suppressed by (g / omega_mod)^2 per order.
    for n in [-3, -2, 1, 2] {
        assert!(get(n) < 1e-3 * get(0), "index {n} carries weight {} of {:?}", get(n), w);
    }
}

#[test]
fn floquet_matches_time_domain_oracle() {
    let p = params();
    let tones = two_tones_offset(&p, hz(10e6), 50.0, hz(0.3e6));
    let k = kerr();
    let e = env(30.0);
    let grid = linspace(hz(-12e6), hz(2e6), 41);
    let (floquet, config) =
        floquet_om::floquet::converged_spectrum(&p, &tones, &k, &e, &grid, 1e-6).unwrap();
    let cfg = OracleConfig {
        harmonics: (config.optical.max as usize).max(2) + 2,
        ..Default::default()
    };
    let oracle = oracle_spectrum(&p, &tones, &k, &e, &grid, &cfg).unwrap();
    let cmp = compare_spectra(&oracle, &floquet, 1e-3).unwrap();
    assert!(cmp.passed, "{cmp:?}");
}

#[test]
fn sign_error_in_the_lattice_is_caught_by_the_oracle() {
    let p = params();
    let tones = two_tones_offset(&p, hz(10e6), 50.0, hz(0.3e6));
    let k = kerr();
    let grid = linspace(hz(-12e6), hz(2e6), 21);
    let coeffs = LatticeCoefficients::from_model(&p, &tones, &k).unwrap();
    let broken = FloquetSystem::new(coeffs, FloquetConfig::padded(4))
        .unwrap()
        .with_flipped_conjugate_coupling();
    let values = broken.normal_ordered(30.0, &grid).unwrap();
    let broken = floquet_om::SpectrumTrace::new(grid.clone(), values, floquet_om::Normalization::NormalOrdered)
        .unwrap();
    let oracle = oracle_spectrum(&p, &tones, &k, &env(30.0), &grid, &OracleConfig::default()).unwrap();
    assert!(!compare_spectra(&oracle, &broken, 1e-3).unwrap().passed);
}

#[test]
fn zero_bath_gives_zero_spectrum() {
    let p = params();
    let tones = two_tones(&p, hz(20e6), 100.0);
    let s = noise_spectrum(&p, &tones, &kerr(), &env(0.0), &FloquetConfig::default(), &[0.0, 1e6]).unwrap();
    assert!(s.values.iter().all(|&v| v == 0.0));
}

#[test]
fn single_red_tone_needs_no_sidebands() {
    let p = params();
    let red = Tone::new(ToneRole::RedProbe, -p.omega_m, 100.0).unwrap();
    let tones = ToneSet::new(vec![red], &p).unwrap();
    let grid = linspace(hz(-2e6), hz(2e6), 101);
    let (_, config) =
        floquet_om::floquet::converged_spectrum(&p, &tones, &kerr(), &env(10.0), &grid, 1e-9).unwrap();
    assert_eq!(config, FloquetConfig::minimal());
}

fn flat_coeffs(g: f64, dk: Complex64, om: f64) -> LatticeCoefficients {
    LatticeCoefficients {
        kappa: hz(1.6e9),
        kappa_ex: hz(0.48e9),
        gamma_m: hz(150e3),
        residual: 0.0,
        omega_mod: om,
        g_r: g,
        g_c: g,
        delta_k: dk,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Conjugating the modulation amplitude exchanges the two principal
    /// sideband weights when both tones couple equally.
    #[test]
    fn conjugation_swaps_principal_weights(
        g_mhz in 1.0f64..20.0,
        dk_mhz in 1.0f64..300.0,
        phase in -3.1f64..3.1,
        om_mhz in 3.0f64..100.0,
    ) {
        let dk = Complex64::from_polar(hz(dk_mhz * 1e6), phase);
        let c = flat_coeffs(hz(g_mhz * 1e6), dk, hz(om_mhz * 1e6));
        let (r, k) = ThreeMode::new(c, CavityResponse::Flat).weights(10.0);
        let (r2, k2) = ThreeMode::new(c.with_delta_k(dk.conj()), CavityResponse::Flat).weights(10.0);
        prop_assert!((r - k2).abs() <= 1e-9 * r);
        prop_assert!((k - r2).abs() <= 1e-9 * k);
    }

    /// The normal-ordered spectrum is a sum of squared magnitudes.
    #[test]
    fn spectrum_is_non_negative(
        n in 1.0f64..400.0,
        om_mhz in 2.0f64..50.0,
        offset_khz in -500.0f64..500.0,
    ) {
        let p = params();
        let tones = two_tones_offset(&p, hz(om_mhz * 1e6), n, hz(offset_khz * 1e3));
        let grid = linspace(hz(-60e6), hz(10e6), 61);
        let s = noise_spectrum(&p, &tones, &kerr(), &env(5.0), &FloquetConfig::default(), &grid).unwrap();
        prop_assert!(s.values.iter().all(|&v| v >= 0.0));
    }
}
