//! TOML run configuration. All frequencies are cyclic, in Hz.

use std::path::Path;

use floquet_om::floquet::{CavityResponse, FloquetConfig, IndexWindow, SumMode};
use floquet_om::model::hz;
use floquet_om::spectrum::linspace;
use floquet_om::{
    DetectionParams, EnvironmentParams, KerrModel, SystemParams, Tone, ToneRole, ToneSet,
};
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub system: SystemSection,
    #[serde(default)]
    pub tones: TonesSection,
    #[serde(default)]
    pub kerr: Option<KerrSection>,
    #[serde(default)]
    pub environment: EnvironmentSection,
    #[serde(default)]
    pub detection: DetectionSection,
    #[serde(default)]
    pub floquet: FloquetSection,
    pub grid: Option<GridSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub kappa_hz: f64,
    pub kappa_ex_hz: f64,
    pub omega_m_hz: f64,
    pub gamma_m_hz: f64,
    pub g0_hz: f64,
    pub omega_cav_hz: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TonesSection {
    pub red: Option<ToneSection>,
    pub blue: Option<ToneSection>,
    pub cooling: Option<ToneSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToneSection {
    pub detuning_hz: f64,
    pub n_photons: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KerrSection {
    pub gamma_th_hz: f64,
    /// `g_abs g_pt / 4 pi^2`, in Hz^2.
    pub g_product_hz2: f64,
    #[serde(default)]
    pub g_kerr_hz: f64,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentSection {
    #[serde(default)]
    pub n_th: f64,
    #[serde(default)]
    pub alpha_heating: f64,
    pub pressure_label: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionSection {
    pub eta: Option<f64>,
    #[serde(default)]
    pub delta_lo_hz: f64,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FloquetSection {
    /// Symmetric padding around the minimal window; disables convergence.
    pub padding: Option<u32>,
    pub optical: Option<[i32; 2]>,
    pub mechanical: Option<[i32; 2]>,
    pub cavity: Option<String>,
    pub sum_mode: Option<String>,
    /// Relative tolerance of the window-doubling loop.
    pub rel_tol: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub start_hz: f64,
    pub stop_hz: f64,
    pub points: usize,
}

/// Fully validated run configuration in angular units.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub system: SystemParams,
    pub tones: ToneSet,
    pub kerr: KerrModel,
    pub environment: EnvironmentParams,
    pub detection: DetectionParams,
    /// Fixed window, or `None` to converge by window doubling.
    pub window: Option<FloquetConfig>,
    pub template: FloquetConfig,
    pub rel_tol: f64,
    /// Cavity-frame analysis grid, rad/s.
    pub grid: Vec<f64>,
}

pub const DEFAULT_REL_TOL: f64 = 1e-6;

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let raw: RawConfig =
            toml::from_str(text).map_err(|e| CliError::Usage(format!("config: {e}")))?;
        raw.resolve().map_err(|e| match e {
            CliError::Core(err) => CliError::Usage(format!("config: {err}")),
            other => other,
        })
    }
}

impl RawConfig {
    fn resolve(self) -> Result<RunConfig, CliError> {
        let s = &self.system;
        let mut system = SystemParams::new(
            hz(s.kappa_hz),
            hz(s.kappa_ex_hz),
            hz(s.omega_m_hz),
            hz(s.gamma_m_hz),
            hz(s.g0_hz),
        )?;
        if let Some(w) = s.omega_cav_hz {
            system = system.with_omega_cav(hz(w))?;
        }

        let mut tones = Vec::new();
        for (role, t) in [
            (ToneRole::RedProbe, &self.tones.red),
            (ToneRole::BlueProbe, &self.tones.blue),
            (ToneRole::Cooling, &self.tones.cooling),
        ] {
            if let Some(t) = t {
                tones.push(Tone::new(role, hz(t.detuning_hz), t.n_photons)?);
            }
        }
        if tones.is_empty() {
            return Err(CliError::Usage("config: at least one tone is required".into()));
        }
        let tones = ToneSet::new(tones, &system)?;

        let kerr = match &self.kerr {
            Some(k) => KerrModel::new(
                hz(k.gamma_th_hz),
                hz(1.0).powi(2) * k.g_product_hz2,
                hz(k.g_kerr_hz),
            )?,
            None => KerrModel::none(),
        };

        let mut environment =
            EnvironmentParams::new(self.environment.n_th, self.environment.alpha_heating)?;
        if let Some(label) = &self.environment.pressure_label {
            environment.pressure_label = label.clone();
        }

        let detection = match self.detection.eta {
            Some(eta) => DetectionParams::new(eta, hz(self.detection.delta_lo_hz))?,
            None => DetectionParams::uncalibrated(hz(self.detection.delta_lo_hz)),
        };

        let f = &self.floquet;
        let cavity = match f.cavity.as_deref() {
            None | Some("exact") => CavityResponse::Exact,
            Some("flat") => CavityResponse::Flat,
            Some(other) => {
                return Err(CliError::Usage(format!(
                    "config: cavity must be \"exact\" or \"flat\", got {other:?}"
                )))
            }
        };
        let sum_mode = match f.sum_mode.as_deref() {
            None | Some("full") => SumMode::Full,
            Some("principal") => SumMode::PrincipalOnly,
            Some(other) => {
                return Err(CliError::Usage(format!(
                    "config: sum_mode must be \"full\" or \"principal\", got {other:?}"
                )))
            }
        };
        let template = FloquetConfig::minimal()
            .with_cavity(cavity)
            .with_sum_mode(sum_mode);
        let window = match (f.padding, f.optical, f.mechanical) {
            (None, None, None) => None,
            (Some(p), None, None) => {
                Some(FloquetConfig::padded(p).with_cavity(cavity).with_sum_mode(sum_mode))
            }
            (None, Some(o), Some(m)) => Some(
                FloquetConfig::new(IndexWindow::new(o[0], o[1])?, IndexWindow::new(m[0], m[1])?)?
                    .with_cavity(cavity)
                    .with_sum_mode(sum_mode),
            ),
            _ => {
                return Err(CliError::Usage(
                    "config: give either padding or both optical and mechanical windows".into(),
                ))
            }
        };
        let rel_tol = f.rel_tol.unwrap_or(DEFAULT_REL_TOL);
        if !(rel_tol > 0.0) {
            return Err(CliError::Usage("config: rel_tol must be positive".into()));
        }

        let grid = match &self.grid {
            Some(g) => {
                if g.points < 2 || !(g.stop_hz > g.start_hz) {
                    return Err(CliError::Usage(
                        "config: grid needs points >= 2 and stop_hz > start_hz".into(),
                    ));
                }
                linspace(hz(g.start_hz), hz(g.stop_hz), g.points)
            }
            None => Vec::new(),
        };

        Ok(RunConfig {
            system,
            tones,
            kerr,
            environment,
            detection,
            window,
            template,
            rel_tol,
            grid,
        })
    }
}

impl RunConfig {
    pub fn require_grid(&self) -> Result<&[f64], CliError> {
        if self.grid.is_empty() {
            Err(CliError::Usage("config: [grid] section is required".into()))
        } else {
            Ok(&self.grid)
        }
    }
}
