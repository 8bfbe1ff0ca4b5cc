use std::path::{Path, PathBuf};

use floquet_om::analytic::{
    composite_spectrum, ideal_spectrum, normalized_peak_ratio, sideband_center, three_mode_spectrum_with,
};
use floquet_om::fitting::{
    fit_cooling_curve, fit_kerr_from_ratio, fit_kerr_from_spectra, CoolingSample, RatioSample,
    SpectrumSample,
};
use floquet_om::floquet::{
    converged_spectrum_with, heterodyne_spectrum, noise_spectrum, FloquetConfig, FloquetSystem,
    LatticeCoefficients,
};
use floquet_om::model::{hz, to_hz};
use floquet_om::oracle::{compare_spectra, oracle_spectrum, OracleConfig};
use floquet_om::response::{fit_response as fit_stack, response, ResponseData};
use floquet_om::thermometry::{
    asymmetry_estimate, fit_lorentzians_weighted, tuning_ratio_error, LorentzianFit,
};
use floquet_om::{Normalization, SpectrumTrace, Tone, ToneRole};
use num_complex::Complex64;

use crate::config::RunConfig;
use crate::io::{emit, read_table, render, render_report, Table};
use crate::{CliError, Engine, FitOutput};

type Report = Vec<(String, f64, Option<f64>)>;

/// Normal-ordered lattice spectrum on the config grid, and the window used.
fn lattice_spectrum(cfg: &RunConfig) -> Result<(SpectrumTrace, FloquetConfig), CliError> {
    let grid = cfg.require_grid()?;
    Ok(match cfg.window {
        Some(w) => (
            noise_spectrum(&cfg.system, &cfg.tones, &cfg.kerr, &cfg.environment, &w, grid)?,
            w,
        ),
        None => converged_spectrum_with(
            &cfg.system,
            &cfg.tones,
            &cfg.kerr,
            &cfg.environment,
            grid,
            cfg.rel_tol,
            &cfg.template,
        )?,
    })
}

fn oracle_config(window: &FloquetConfig) -> OracleConfig {
    let reach = window.optical.max.max(-window.optical.min - 1).max(2) as usize;
    OracleConfig {
        harmonics: reach + 2,
        ..Default::default()
    }
}

fn no_blue(cfg: &RunConfig, what: &str) -> Result<(), CliError> {
    if cfg.tones.get(ToneRole::BlueProbe).is_some() {
        return Err(CliError::Usage(format!(
            "{what} covers the red probe and cooling tone only; remove [tones.blue]"
        )));
    }
    Ok(())
}

pub fn synthesize(cfg: &RunConfig, engine: Engine) -> Result<SpectrumTrace, CliError> {
    let grid = cfg.require_grid()?;
    let (p, t, k, e, d) = (&cfg.system, &cfg.tones, &cfg.kerr, &cfg.environment, &cfg.detection);
    d.efficiency()?;
    Ok(match engine {
        Engine::Floquet => {
            if t.get(ToneRole::BlueProbe).is_some() {
                composite_spectrum(p, t, k, e, d, grid, cfg.rel_tol)?
            } else {
                heterodyne_spectrum(&lattice_spectrum(cfg)?.0, d)?
            }
        }
        Engine::ThreeMode => three_mode_spectrum_with(p, t, k, e, d, grid, cfg.template.cavity)?,
        Engine::Ideal => ideal_spectrum(p, t, e, d, grid)?,
        Engine::Oracle => {
            no_blue(cfg, "the oracle")?;
            let window = cfg.window.unwrap_or_else(|| FloquetConfig::padded(3));
            let sn = oracle_spectrum(p, t, k, e, grid, &oracle_config(&window))?;
            heterodyne_spectrum(&sn, d)?
        }
    })
}

fn render_trace(trace: &SpectrumTrace) -> String {
    let rows: Vec<Vec<f64>> = trace
        .freq_grid
        .iter()
        .zip(&trace.values)
        .map(|(&f, &v)| vec![to_hz(f), v])
        .collect();
    render(&["frequency_hz", "s_het"], &rows)
}

pub fn spectrum(config: &Path, engine: Engine, out: Option<&Path>) -> Result<(), CliError> {
    let cfg = RunConfig::load(config)?;
    let trace = synthesize(&cfg, engine)?;
    for w in &trace.warnings {
        eprintln!("warning: {w}");
    }
    emit(out, &render_trace(&trace))
}

fn read_trace(path: &Path) -> Result<(SpectrumTrace, Option<Vec<f64>>), CliError> {
    let table = read_table(path)?;
    let f = table.require("frequency_hz")?;
    let v = table.require("s_het")?;
    let trace = SpectrumTrace::measured(
        f.iter().map(|&x| hz(x)).collect(),
        v,
        Normalization::ShotNoiseNormalized,
    )?;
    Ok((trace, table.column("sigma")))
}

fn tone_label(role: ToneRole) -> &'static str {
    match role {
        ToneRole::RedProbe => "red",
        ToneRole::BlueProbe => "blue",
        ToneRole::Cooling => "cooling",
    }
}

fn push_peak(report: &mut Report, label: &str, fit: &LorentzianFit) {
    let s = |i: usize| Some(fit.covariance[(i, i)].max(0.0).sqrt());
    let hzs = |i: usize| s(i).map(to_hz);
    report.push((format!("{label}.center_hz"), to_hz(fit.center), hzs(0)));
    report.push((format!("{label}.hwhm_hz"), to_hz(fit.hwhm), hzs(1)));
    report.push((format!("{label}.height"), fit.height, s(2)));
    report.push((format!("{label}.area_hz"), to_hz(fit.area), hzs(3)));
}

pub fn asymmetry(config: &Path, spectrum: Option<&Path>, out: Option<&Path>) -> Result<(), CliError> {
    let cfg = RunConfig::load(config)?;
    let p = &cfg.system;
    let blue = cfg
        .tones
        .get(ToneRole::BlueProbe)
        .ok_or_else(|| CliError::Usage("asymmetry needs [tones.blue]".into()))?
        .clone();
    let anti: Vec<Tone> = [ToneRole::RedProbe, ToneRole::Cooling]
        .iter()
        .filter_map(|&r| cfg.tones.get(r).cloned())
        .collect();
    if anti.is_empty() {
        return Err(CliError::Usage(
            "asymmetry needs [tones.red] or [tones.cooling]".into(),
        ));
    }
    let (trace, sigma) = match spectrum {
        Some(path) => read_trace(path)?,
        None => (synthesize(&cfg, Engine::Floquet)?, None),
    };
    let lo = cfg.detection.delta_lo;
    let mut tones: Vec<Tone> = anti.clone();
    tones.push(blue.clone());
    tones.sort_by(|a, b| sideband_center(p, a).total_cmp(&sideband_center(p, b)));
    let centers: Vec<f64> = tones.iter().map(|t| sideband_center(p, t) + lo).collect();
    let fit = fit_lorentzians_weighted(&trace, &centers, sigma.as_deref())?;
    for w in &fit.warnings {
        eprintln!("warning: {w}");
    }

    let peak_of = |role: ToneRole| {
        let k = tones.iter().position(|t| t.role == role).expect("tone present");
        &fit.peaks[k]
    };
    let mut report = Report::new();
    for t in &tones {
        push_peak(&mut report, tone_label(t.role), peak_of(t.role));
    }
    report.push(("floor".into(), fit.floor, Some(fit.floor_sigma)));

    let offset = |t: &Tone| (sideband_center(p, t)).abs();
    let c_blue = blue.cooperativity(p);
    let mut failure = None;
    for a in &anti {
        let tuning = tuning_ratio_error(p.kappa, p.omega_m, offset(a))
            .hypot(tuning_ratio_error(p.kappa, p.omega_m, offset(&blue)));
        let name = format!("n_bar.{}_blue", tone_label(a.role));
        match asymmetry_estimate(peak_of(a.role), peak_of(ToneRole::BlueProbe), a.cooperativity(p), c_blue, tuning)
        {
            Ok(est) => report.push((name, est.n_bar, Some(est.sigma))),
            Err(e) => {
                report.push((name, f64::NAN, None));
                failure.get_or_insert(e);
            }
        }
    }
    emit(out, &render_report(&report))?;
    match failure {
        Some(e) => Err(e.into()),
        None => Ok(()),
    }
}

pub fn check(config: &Path, rel_tol: f64, flip: bool) -> Result<(), CliError> {
    let cfg = RunConfig::load(config)?;
    no_blue(&cfg, "the oracle check")?;
    let grid = cfg.require_grid()?;
    if !(rel_tol > 0.0) {
        return Err(CliError::Usage("--rel-tol must be positive".into()));
    }
    let coeffs = LatticeCoefficients::from_model(&cfg.system, &cfg.tones, &cfg.kerr)?;
    if coeffs.omega_mod > 0.0 {
        let ratio = coeffs.linewidth_estimate() / coeffs.omega_mod;
        if !(ratio > 1e-4) {
            return Err(CliError::Usage(format!(
                "gamma_tot / omega_mod = {ratio:.3e} is at or below 1e-4: the mechanical response \
                 spans too many modulation periods for time-domain integration"
            )));
        }
    }
    let (reference, window) = lattice_spectrum(&cfg)?;
    let lattice = if flip {
        let sys = FloquetSystem::new(coeffs, window)?.with_flipped_conjugate_coupling();
        let values = sys.normal_ordered(cfg.environment.n_th, grid)?;
        SpectrumTrace::new(grid.to_vec(), values, Normalization::NormalOrdered)?
    } else {
        reference
    };
    let oracle = oracle_spectrum(
        &cfg.system,
        &cfg.tones,
        &cfg.kerr,
        &cfg.environment,
        grid,
        &oracle_config(&window),
    )?;
    let cmp = compare_spectra(&oracle, &lattice, rel_tol)?;
    let line = format!(
        "window {}/{}: max relative deviation {:.3e} at {:.8e} Hz (grid index {})",
        window.optical,
        window.mechanical,
        cmp.max_deviation,
        to_hz(cmp.location),
        cmp.index
    );
    if cmp.passed {
        println!("pass: {line}");
        Ok(())
    } else {
        println!("fail: {line}");
        Err(CliError::Mismatch(format!("oracle mismatch above {rel_tol:e}: {line}")))
    }
}

fn write_fit(
    output: &FitOutput,
    report: &Report,
    residual_header: &[&str],
    residual_rows: &[Vec<f64>],
    converged: bool,
    warnings: &[String],
) -> Result<(), CliError> {
    for w in warnings {
        eprintln!("warning: {w}");
    }
    emit(output.out.as_deref(), &render_report(report))?;
    if let Some(path) = &output.residuals {
        emit(Some(path), &render(residual_header, residual_rows))?;
    }
    if converged {
        Ok(())
    } else {
        Err(CliError::NotConverged("fit did not converge".into()))
    }
}

fn optional_sigma(table: &Table) -> Vec<Option<f64>> {
    match table.column("sigma") {
        Some(s) => s.into_iter().map(Some).collect(),
        None => vec![None; table.rows.len()],
    }
}

const HZ2: f64 = 4.0 * std::f64::consts::PI * std::f64::consts::PI;

pub fn fit_kerr_ratio(data: &Path, config: &Path, n_c: f64, output: &FitOutput) -> Result<(), CliError> {
    let cfg = RunConfig::load(config)?;
    let table = read_table(data)?;
    let omegas: Vec<f64> = table.require("omega_mod_hz")?.iter().map(|&f| hz(f)).collect();
    let ratios = table.require("ratio")?;
    let samples: Vec<RatioSample> = omegas
        .iter()
        .zip(&ratios)
        .zip(optional_sigma(&table))
        .map(|((&o, &r), s)| RatioSample {
            omega_mod: o,
            ratio: r,
            sigma: s,
        })
        .collect();
    let fit = fit_kerr_from_ratio(&samples, &cfg.system, n_c)?;
    let model = normalized_peak_ratio(&cfg.system, &fit.kerr, n_c, &omegas)?;
    let report: Report = vec![
        ("gamma_th_hz".into(), to_hz(fit.kerr.gamma_th), Some(to_hz(fit.gamma_th_sigma()))),
        ("g_product_hz2".into(), fit.kerr.g_product / HZ2, Some(fit.g_product_sigma() / HZ2)),
        ("cov.gamma_th_hz.g_product_hz2".into(), fit.covariance[(0, 1)] / (2.0 * std::f64::consts::PI * HZ2), None),
        ("residual_norm".into(), fit.residual_norm, None),
        ("iterations".into(), fit.iterations as f64, None),
    ];
    let rows: Vec<Vec<f64>> = omegas
        .iter()
        .zip(&ratios)
        .zip(&model)
        .map(|((&o, &d), &m)| vec![to_hz(o), d, m, d - m])
        .collect();
    write_fit(output, &report, &["omega_mod_hz", "data", "model", "residual"], &rows, fit.converged, &fit.warnings)
}

pub fn fit_kerr_spectra(configs: &[PathBuf], data: &[PathBuf], output: &FitOutput) -> Result<(), CliError> {
    if configs.len() != data.len() {
        return Err(CliError::Usage(format!(
            "{} --config for {} --data; give one config per spectrum",
            configs.len(),
            data.len()
        )));
    }
    let cfgs = configs.iter().map(|c| RunConfig::load(c)).collect::<Result<Vec<_>, _>>()?;
    let first = &cfgs[0];
    if first.kerr.g_product == 0.0 {
        return Err(CliError::Usage("the first config needs a [kerr] start point".into()));
    }
    let mut samples = Vec::new();
    for (cfg, path) in cfgs.iter().zip(data) {
        no_blue(cfg, "the spectrum fit")?;
        samples.push(SpectrumSample {
            tones: cfg.tones.clone(),
            trace: read_trace(path)?.0,
        });
    }
    let fit = fit_kerr_from_spectra(
        &samples,
        &first.system,
        &first.environment,
        &first.detection,
        &first.kerr,
        first.rel_tol,
    )?;
    let report: Report = vec![
        ("gamma_th_hz".into(), to_hz(fit.kerr.gamma_th), Some(to_hz(fit.gamma_th_sigma()))),
        ("g_product_hz2".into(), fit.kerr.g_product / HZ2, Some(fit.g_product_sigma() / HZ2)),
        ("cov.gamma_th_hz.g_product_hz2".into(), fit.covariance[(0, 1)] / (2.0 * std::f64::consts::PI * HZ2), None),
        ("residual_norm".into(), fit.residual_norm, None),
        ("iterations".into(), fit.iterations as f64, None),
    ];
    let mut rows = Vec::new();
    for (i, s) in samples.iter().enumerate() {
        let axis: Vec<f64> = s.trace.freq_grid.iter().map(|f| f - first.detection.delta_lo).collect();
        let (sn, _) = converged_spectrum_with(
            &first.system,
            &s.tones,
            &fit.kerr,
            &first.environment,
            &axis,
            first.rel_tol,
            &first.template,
        )?;
        let model = heterodyne_spectrum(&sn, &first.detection)?;
        for ((&f, &d), &m) in s.trace.freq_grid.iter().zip(&s.trace.values).zip(&model.values) {
            rows.push(vec![i as f64, to_hz(f), d, m, d - m]);
        }
    }
    write_fit(
        output,
        &report,
        &["spectrum", "frequency_hz", "data", "model", "residual"],
        &rows,
        fit.converged,
        &fit.warnings,
    )
}

pub fn fit_cooling(data: &Path, config: Option<&Path>, c0: Option<f64>, output: &FitOutput) -> Result<(), CliError> {
    let c0 = match (c0, config) {
        (Some(c), _) => c,
        (None, Some(path)) => RunConfig::load(path)?.system.single_photon_cooperativity(),
        (None, None) => return Err(CliError::Usage("give --config or --c0".into())),
    };
    let table = read_table(data)?;
    let n_c = table.require("n_c")?;
    let n_bar = table.require("n_bar")?;
    let samples: Vec<CoolingSample> = n_c
        .iter()
        .zip(&n_bar)
        .zip(optional_sigma(&table))
        .map(|((&n, &b), s)| CoolingSample {
            n_c: n,
            n_bar: b,
            sigma: s,
        })
        .collect();
    let fit = fit_cooling_curve(&samples, c0)?;
    let report: Report = vec![
        ("n_th".into(), fit.n_th, Some(fit.n_th_sigma())),
        ("alpha_heating".into(), fit.alpha_heating, Some(fit.alpha_sigma())),
        ("cov.n_th.alpha_heating".into(), fit.covariance[(0, 1)], None),
        ("c0".into(), c0, None),
        ("residual_norm".into(), fit.residual_norm, None),
    ];
    let rows: Vec<Vec<f64>> = samples
        .iter()
        .map(|s| {
            let m = (fit.n_th + fit.alpha_heating * s.n_c) / (1.0 + c0 * s.n_c);
            vec![s.n_c, s.n_bar, m, s.n_bar - m]
        })
        .collect();
    write_fit(output, &report, &["n_c", "data", "model", "residual"], &rows, fit.converged, &fit.warnings)
}

pub fn fit_response(data: &Path, output: &FitOutput) -> Result<(), CliError> {
    let table = read_table(data)?;
    let omegas: Vec<f64> = table.require("frequency_hz")?.iter().map(|&f| hz(f)).collect();
    let input = match (table.column("magnitude"), table.column("re"), table.column("im")) {
        (Some(m), None, None) => ResponseData::Magnitude(omegas.iter().copied().zip(m).collect()),
        (None, Some(re), Some(im)) => ResponseData::Complex(
            omegas
                .iter()
                .zip(re.iter().zip(&im))
                .map(|(&w, (&r, &i))| (w, Complex64::new(r, i)))
                .collect(),
        ),
        _ => {
            return Err(CliError::Usage(
                "response data needs a magnitude column or re and im columns".into(),
            ))
        }
    };
    let fit = fit_stack(&input)?;
    let n = fit.stack.amplitudes.len();
    let sd = |i: usize| fit.covariance[(i, i)].max(0.0).sqrt();
    let mut report = Report::new();
    for i in 0..n {
        report.push((format!("amplitude_{}_hz", i + 1), to_hz(fit.stack.amplitudes[i]), Some(to_hz(sd(i)))));
    }
    for i in 0..n {
        report.push((format!("corner_{}_hz", i + 1), to_hz(fit.stack.corners[i]), Some(to_hz(sd(n + i)))));
    }
    report.push(("residual_norm".into(), fit.residual_norm, None));
    let (header, rows): (Vec<&str>, Vec<Vec<f64>>) = match &input {
        ResponseData::Magnitude(d) => (
            vec!["frequency_hz", "data", "model", "residual"],
            d.iter()
                .map(|&(w, m)| {
                    let r = response(&fit.stack, w).norm();
                    vec![to_hz(w), m, r, m - r]
                })
                .collect(),
        ),
        ResponseData::Complex(d) => (
            vec!["frequency_hz", "data_re", "data_im", "model_re", "model_im"],
            d.iter()
                .map(|&(w, z)| {
                    let r = response(&fit.stack, w);
                    vec![to_hz(w), z.re, z.im, r.re, r.im]
                })
                .collect(),
        ),
    };
    write_fit(output, &report, &header, &rows, fit.converged, &fit.warnings)
}
