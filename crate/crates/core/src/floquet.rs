//! Truncated Fourier-mode lattice of the periodically modulated cavity.
//!
//! A cavity-frequency modulation at `omega_mod` scatters each optical
//! Fourier component `a_n` (frequency `omega - n omega_mod`) into its
//! neighbours `a_{n +- 1}`, and the two red-side tones couple `a_n` to the
//! mechanical components `b_n` and `b_{n+1}`. Noise enters only at index 0.
//! Truncating the index windows turns the coupled equations into a finite
//! linear system `M(omega) x = input`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::{DetectionParams, EnvironmentParams, KerrModel, SystemParams, ToneSet};
use crate::spectrum::{
    check_grid, real_line_rule, try_map_indices, Normalization, SpectrumTrace,
};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Condition number above which a solve is reported as singular.
pub const MAX_CONDITION: f64 = 1e12;

/// How the optical susceptibility depends on frequency.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CavityResponse {
    /// `chi_opt^{-1}(w) = kappa/2 - i (w + residual)`.
    #[default]
    Exact,
    /// Good-cavity limit: every optical mode sees `kappa/2`.
    Flat,
}

/// Which optical Fourier indices enter the output spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SumMode {
    /// Every retained optical index.
    #[default]
    Full,
    /// Only the two principal sidebands, indices 0 and -1.
    PrincipalOnly,
}

/// Inclusive range of retained Fourier indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IndexWindow {
    pub min: i32,
    pub max: i32,
}

impl IndexWindow {
    pub fn new(min: i32, max: i32) -> Result<Self> {
        if min > max {
            return Err(Error::Config(format!("empty index window [{min}, {max}]")));
        }
        Ok(Self { min, max })
    }

    pub fn len(&self) -> usize {
        (self.max - self.min + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, n: i32) -> bool {
        (self.min..=self.max).contains(&n)
    }

    pub fn iter(&self) -> impl Iterator<Item = i32> {
        self.min..=self.max
    }
}

impl std::fmt::Display for IndexWindow {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{}, {}]", self.min, self.max)
    }
}

/// Truncation and evaluation settings for the lattice.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FloquetConfig {
    pub optical: IndexWindow,
    pub mechanical: IndexWindow,
    pub cavity: CavityResponse,
    pub sum_mode: SumMode,
}

impl FloquetConfig {
    pub fn new(optical: IndexWindow, mechanical: IndexWindow) -> Result<Self> {
        let c = Self {
            optical,
            mechanical,
            cavity: CavityResponse::Exact,
            sum_mode: SumMode::Full,
        };
        c.validate()?;
        Ok(c)
    }

    /// Optical `{-1, 0}`, mechanical `{0}`: the three-mode system.
    pub fn minimal() -> Self {
        Self::padded(0)
    }

    /// Optical `[-1-p, p]`, mechanical `[-p, p]`.
    pub fn padded(p: u32) -> Self {
        let p = p as i32;
        Self {
            optical: IndexWindow { min: -1 - p, max: p },
            mechanical: IndexWindow { min: -p, max: p },
            cavity: CavityResponse::Exact,
            sum_mode: SumMode::Full,
        }
    }

    /// Six optical and five mechanical modes.
    pub fn six_by_five() -> Self {
        Self::padded(2)
    }

    pub fn with_cavity(mut self, cavity: CavityResponse) -> Self {
        self.cavity = cavity;
        self
    }

    pub fn with_sum_mode(mut self, sum_mode: SumMode) -> Self {
        self.sum_mode = sum_mode;
        self
    }

    pub fn n_opt(&self) -> usize {
        self.optical.len()
    }

    pub fn n_mech(&self) -> usize {
        self.mechanical.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.optical.min > self.optical.max || self.mechanical.min > self.mechanical.max {
            return Err(Error::Config("empty index window".into()));
        }
        if !self.optical.contains(0) {
            return Err(Error::Config(format!(
                "optical window {} must contain index 0",
                self.optical
            )));
        }
        if !self.mechanical.contains(0) {
            return Err(Error::Config(format!(
                "mechanical window {} must contain index 0",
                self.mechanical
            )));
        }
        Ok(())
    }
}

impl Default for FloquetConfig {
    fn default() -> Self {
        Self::padded(3)
    }
}

/// Optical or mechanical Fourier component.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Species {
    Optical,
    Mechanical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Mode {
    pub species: Species,
    pub index: i32,
}

/// Noise input channel, injected at Fourier index 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    OpticalIn,
    MechanicalIn,
}

impl Channel {
    fn column(self) -> usize {
        match self {
            Channel::OpticalIn => 0,
            Channel::MechanicalIn => 1,
        }
    }
}

/// Scalar coefficients of the lattice equations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatticeCoefficients {
    pub kappa: f64,
    pub kappa_ex: f64,
    pub gamma_m: f64,
    /// Residual detuning of the frame tone from the lower motional sideband.
    pub residual: f64,
    pub omega_mod: f64,
    /// Coupling of the frame tone (red probe).
    pub g_r: f64,
    /// Coupling of the tone shifted by `omega_mod` (cooling tone).
    pub g_c: f64,
    pub delta_k: Complex64,
}

impl LatticeCoefficients {
    pub fn from_model(params: &SystemParams, tones: &ToneSet, kerr: &KerrModel) -> Result<Self> {
        let frame = tones.frame_tone().ok_or_else(|| {
            Error::InvalidParams("the lattice needs a red probe or cooling tone".into())
        })?;
        let g_c = tones.shifted_tone().map_or(0.0, |t| t.coupling(params));
        Ok(Self {
            kappa: params.kappa,
            kappa_ex: params.kappa_ex,
            gamma_m: params.gamma_m,
            residual: tones.residual_detuning,
            omega_mod: tones.omega_mod,
            g_r: frame.coupling(params),
            g_c,
            delta_k: kerr.modulation_for(tones)?,
        })
    }

    pub fn with_delta_k(mut self, delta_k: Complex64) -> Self {
        self.delta_k = delta_k;
        self
    }

    /// `(C_r, C_c)` on the flat cavity.
    pub fn cooperativities(&self) -> (f64, f64) {
        let c = |g: f64| 4.0 * g * g / (self.kappa * self.gamma_m);
        (c(self.g_r), c(self.g_c))
    }

    /// Inverse optical susceptibility for Fourier index `n` at lattice frequency `omega`.
    pub fn optical_inverse(&self, cavity: CavityResponse, omega: f64, n: i32) -> Complex64 {
        match cavity {
            CavityResponse::Exact => Complex64::new(
                0.5 * self.kappa,
                -(omega - n as f64 * self.omega_mod + self.residual),
            ),
            CavityResponse::Flat => Complex64::new(0.5 * self.kappa, 0.0),
        }
    }

    pub fn mechanical_inverse(&self, omega: f64, n: i32) -> Complex64 {
        Complex64::new(0.5 * self.gamma_m, -(omega - n as f64 * self.omega_mod))
    }

    /// Cavity-frame frequency at which optical index `n` emits for lattice
    /// frequency `omega`.
    pub fn cavity_frequency(&self, omega: f64, n: i32) -> f64 {
        omega - n as f64 * self.omega_mod + self.residual
    }

    /// Inverse of [`Self::cavity_frequency`].
    pub fn lattice_frequency(&self, x: f64, n: i32) -> f64 {
        x - self.residual + n as f64 * self.omega_mod
    }

    /// Rough total mechanical linewidth, used to scale quadratures.
    pub fn linewidth_estimate(&self) -> f64 {
        let (cr, cc) = self.cooperativities();
        self.gamma_m * (1.0 + cr + cc)
    }
}

/// The assembled, truncated lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct FloquetSystem {
    coeffs: LatticeCoefficients,
    config: FloquetConfig,
    modes: Vec<Mode>,
    conjugate_sign: f64,
}

/// Builds the lattice for the given tones and nonlinearity.
///
/// The blue probe is not part of the lattice; its Stokes sideband is
/// composed from the closed form where needed.
pub fn assemble(
    params: &SystemParams,
    tones: &ToneSet,
    kerr: &KerrModel,
    config: &FloquetConfig,
) -> Result<FloquetSystem> {
    FloquetSystem::new(LatticeCoefficients::from_model(params, tones, kerr)?, *config)
}

impl FloquetSystem {
    pub fn new(coeffs: LatticeCoefficients, config: FloquetConfig) -> Result<Self> {
        config.validate()?;
        let top = config.optical.max.max(config.mechanical.max);
        let bottom = config.optical.min.min(config.mechanical.min);
        let mut modes = Vec::with_capacity(config.n_opt() + config.n_mech());
        for n in (bottom..=top).rev() {
            if config.optical.contains(n) {
                modes.push(Mode {
                    species: Species::Optical,
                    index: n,
                });
            }
            if config.mechanical.contains(n) {
                modes.push(Mode {
                    species: Species::Mechanical,
                    index: n,
                });
            }
        }
        Ok(Self {
            coeffs,
            config,
            modes,
            conjugate_sign: 1.0,
        })
    }

    /// Fault-injection hook for end-to-end checks: flips the sign of the
    /// `delta_k*` coupling so that the lattice no longer matches the dynamics.
    pub fn with_flipped_conjugate_coupling(mut self) -> Self {
        self.conjugate_sign = -self.conjugate_sign;
        self
    }

    pub fn coefficients(&self) -> &LatticeCoefficients {
        &self.coeffs
    }

    pub fn config(&self) -> &FloquetConfig {
        &self.config
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    pub fn dimension(&self) -> usize {
        self.modes.len()
    }

    pub fn row(&self, species: Species, index: i32) -> Option<usize> {
        self.modes
            .iter()
            .position(|m| m.species == species && m.index == index)
    }

    /// Rows receiving `sqrt(kappa) a_in` and `sqrt(gamma_m) b_in`.
    pub fn input_rows(&self) -> (usize, usize) {
        (
            self.row(Species::Optical, 0).expect("validated window"),
            self.row(Species::Mechanical, 0).expect("validated window"),
        )
    }

    /// The coefficient matrix at lattice frequency `omega`.
    pub fn matrix(&self, omega: f64) -> DMatrix<Complex64> {
        let c = &self.coeffs;
        let dim = self.dimension();
        let mut m = DMatrix::from_element(dim, dim, Complex64::new(0.0, 0.0));
        for (i, mode) in self.modes.iter().enumerate() {
            let n = mode.index;
            let mut set = |species, index, value: Complex64| {
                if let Some(j) = self.row(species, index) {
                    m[(i, j)] += value;
                }
            };
            match mode.species {
                Species::Optical => {
                    set(Species::Optical, n, c.optical_inverse(self.config.cavity, omega, n));
                    set(Species::Mechanical, n, -I * c.g_r);
                    set(Species::Mechanical, n + 1, -I * c.g_c);
                    set(Species::Optical, n + 1, self.conjugate_sign * I * c.delta_k.conj());
                    set(Species::Optical, n - 1, I * c.delta_k);
                }
                Species::Mechanical => {
                    set(Species::Mechanical, n, c.mechanical_inverse(omega, n));
                    set(Species::Optical, n, -I * c.g_r);
                    set(Species::Optical, n - 1, -I * c.g_c);
                }
            }
        }
        m
    }

    fn input_vector(&self, channel: Channel) -> DVector<Complex64> {
        let (ro, rm) = self.input_rows();
        let mut v = DVector::from_element(self.dimension(), Complex64::new(0.0, 0.0));
        match channel {
            Channel::OpticalIn => v[ro] = Complex64::new(self.coeffs.kappa.sqrt(), 0.0),
            Channel::MechanicalIn => v[rm] = Complex64::new(self.coeffs.gamma_m.sqrt(), 0.0),
        }
        v
    }

    /// Response of every retained mode to one unit input channel.
    ///
    /// The lattice couples only neighbouring Fourier indices, so this runs a
    /// block-tridiagonal elimination over `(a_n, b_n)` pairs. Singularity is
    /// screened with the spread of singular values of the eliminated
    /// diagonal blocks, a cheap lower bound on the condition number.
    pub fn channel_response(&self, omega: f64, channel: Channel) -> Result<DVector<Complex64>> {
        let c = &self.coeffs;
        let w = &self.config;
        let bottom = w.optical.min.min(w.mechanical.min);
        let top = w.optical.max.max(w.mechanical.max);
        let blocks = (top - bottom + 1) as usize;
        let zero = Complex64::new(0.0, 0.0);
        let one = Complex64::new(1.0, 0.0);
        let has = |n: i32| (w.optical.contains(n), w.mechanical.contains(n));

        let diag = |n: i32| -> Block {
            let (a, b) = has(n);
            let mut d = [[zero; 2]; 2];
            d[0][0] = if a { c.optical_inverse(w.cavity, omega, n) } else { one };
            d[1][1] = if b { c.mechanical_inverse(omega, n) } else { one };
            if a && b {
                d[0][1] = -I * c.g_r;
                d[1][0] = -I * c.g_r;
            }
            d
        };
        // Coupling of block n to block n + 1 and of block n + 1 to block n.
        let upper = |n: i32| -> Block {
            let ((a, _), (a1, b1)) = (has(n), has(n + 1));
            let mut u = [[zero; 2]; 2];
            if a && a1 {
                u[0][0] = self.conjugate_sign * I * c.delta_k.conj();
            }
            if a && b1 {
                u[0][1] = -I * c.g_c;
            }
            u
        };
        let lower = |n: i32| -> Block {
            let ((a, _), (a1, b1)) = (has(n), has(n + 1));
            let mut l = [[zero; 2]; 2];
            if a1 && a {
                l[0][0] = I * c.delta_k;
            }
            if b1 && a {
                l[1][0] = -I * c.g_c;
            }
            l
        };

        let mut rhs = vec![[zero; 2]; blocks];
        let k0 = (-bottom) as usize;
        match channel {
            Channel::OpticalIn => rhs[k0][0] = Complex64::new(c.kappa.sqrt(), 0.0),
            Channel::MechanicalIn => rhs[k0][1] = Complex64::new(c.gamma_m.sqrt(), 0.0),
        }

        let mut pivots: Vec<Block> = Vec::with_capacity(blocks);
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for k in 0..blocks {
            let n = bottom + k as i32;
            let mut d = diag(n);
            if k > 0 {
                let f = mul(lower(n - 1), inverse(pivots[k - 1]).ok_or(Error::Singular {
                    omega,
                    condition: f64::INFINITY,
                })?);
                d = sub(d, mul(f, upper(n - 1)));
                let r = apply(f, rhs[k - 1]);
                rhs[k] = [rhs[k][0] - r[0], rhs[k][1] - r[1]];
            }
            let (smin, smax) = singular_values(d);
            lo = lo.min(smin);
            hi = hi.max(smax);
            pivots.push(d);
        }
        let ratio = hi / lo;
        if !(ratio.is_finite() && ratio <= MAX_CONDITION) {
            return Err(Error::Singular {
                omega,
                condition: ratio,
            });
        }
        let mut x = vec![[zero; 2]; blocks];
        for k in (0..blocks).rev() {
            let mut r = rhs[k];
            if k + 1 < blocks {
                let u = apply(upper(bottom + k as i32), x[k + 1]);
                r = [r[0] - u[0], r[1] - u[1]];
            }
            let inv = inverse(pivots[k]).ok_or(Error::Singular {
                omega,
                condition: f64::INFINITY,
            })?;
            x[k] = apply(inv, r);
        }
        Ok(DVector::from_iterator(
            self.modes.len(),
            self.modes.iter().map(|m| {
                let k = (m.index - bottom) as usize;
                match m.species {
                    Species::Optical => x[k][0],
                    Species::Mechanical => x[k][1],
                }
            }),
        ))
    }

    /// [`Self::channel_response`] by dense LU of the full matrix.
    pub fn dense_channel_response(&self, omega: f64, channel: Channel) -> Result<DVector<Complex64>> {
        self.matrix(omega)
            .lu()
            .solve(&self.input_vector(channel))
            .ok_or(Error::Singular {
                omega,
                condition: f64::INFINITY,
            })
    }

    /// Normal-ordered output spectrum at cavity-frame frequencies `grid`.
    pub fn normal_ordered(&self, n_th: f64, grid: &[f64]) -> Result<Vec<f64>> {
        check_grid(grid)?;
        let indices = self.summed_indices();
        let c = self.coeffs;
        let scale = c.kappa_ex * n_th;
        if scale == 0.0 {
            return Ok(vec![0.0; grid.len()]);
        }
        try_map_indices(grid.len(), |k| {
            let x = grid[k];
            let mut s = 0.0;
            for &(n, row) in &indices {
                let r = self.channel_response(c.lattice_frequency(x, n), Channel::MechanicalIn)?;
                s += r[row].norm_sqr();
            }
            Ok(scale * s)
        })
    }

    fn summed_indices(&self) -> Vec<(i32, usize)> {
        self.config
            .optical
            .iter()
            .filter(|&n| self.config.sum_mode == SumMode::Full || n == 0 || n == -1)
            .filter_map(|n| self.row(Species::Optical, n).map(|r| (n, r)))
            .collect()
    }

    /// Integrated weight of the sideband emitted by optical index `n`,
    /// `kappa_ex n_th \int |T_{a_n, b}(w)|^2 dw` over the real line.
    pub fn sideband_weight(&self, n_th: f64, n: i32, nodes: usize) -> Result<f64> {
        let row = self
            .row(Species::Optical, n)
            .ok_or_else(|| Error::Config(format!("optical index {n} is not retained")))?;
        let c = self.coeffs;
        let rule = real_line_rule(0.0, 0.5 * c.linewidth_estimate(), nodes);
        let terms = try_map_indices(nodes, |i| {
            let (w, weight) = rule[i];
            Ok(weight * self.channel_response(w, Channel::MechanicalIn)?[row].norm_sqr())
        })?;
        let integral: f64 = terms.iter().sum();
        Ok(c.kappa_ex * n_th * integral)
    }
}

type Block = [[Complex64; 2]; 2];

fn mul(a: Block, b: Block) -> Block {
    let mut c = [[Complex64::new(0.0, 0.0); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            c[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    c
}

fn sub(a: Block, b: Block) -> Block {
    [
        [a[0][0] - b[0][0], a[0][1] - b[0][1]],
        [a[1][0] - b[1][0], a[1][1] - b[1][1]],
    ]
}

fn apply(a: Block, v: [Complex64; 2]) -> [Complex64; 2] {
    [a[0][0] * v[0] + a[0][1] * v[1], a[1][0] * v[0] + a[1][1] * v[1]]
}

fn inverse(a: Block) -> Option<Block> {
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    if det.norm() == 0.0 || !det.is_finite() {
        return None;
    }
    Some([[a[1][1] / det, -a[0][1] / det], [-a[1][0] / det, a[0][0] / det]])
}

/// Smallest and largest singular value of a 2x2 block.
fn singular_values(a: Block) -> (f64, f64) {
    let fro2: f64 = a.iter().flatten().map(|z| z.norm_sqr()).sum();
    let det = (a[0][0] * a[1][1] - a[0][1] * a[1][0]).norm();
    let disc = (fro2 * fro2 - 4.0 * det * det).max(0.0).sqrt();
    let smax = (0.5 * (fro2 + disc)).sqrt();
    (if smax > 0.0 { det / smax } else { 0.0 }, smax)
}

/// Columns of the inverse lattice matrix driven by the two noise inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Transfer {
    pub omega: f64,
    pub modes: Vec<Mode>,
    /// `dimension x 2`: column 0 optical input, column 1 mechanical input.
    pub matrix: DMatrix<Complex64>,
    /// One-norm condition number of the lattice matrix.
    pub condition: f64,
}

impl Transfer {
    pub fn get(&self, species: Species, index: i32, channel: Channel) -> Option<Complex64> {
        self.modes
            .iter()
            .position(|m| m.species == species && m.index == index)
            .map(|r| self.matrix[(r, channel.column())])
    }
}

/// Solves the lattice at one frequency for both noise inputs.
pub fn solve_transfer(system: &FloquetSystem, omega: f64) -> Result<Transfer> {
    let m = system.matrix(omega);
    let norm1 = |a: &DMatrix<Complex64>| {
        a.column_iter()
            .map(|c| c.iter().map(|z| z.norm()).sum::<f64>())
            .fold(0.0, f64::max)
    };
    let inv = m
        .clone()
        .try_inverse()
        .ok_or(Error::Singular {
            omega,
            condition: f64::INFINITY,
        })?;
    let condition = norm1(&m) * norm1(&inv);
    if !(condition.is_finite() && condition <= MAX_CONDITION) {
        return Err(Error::Singular { omega, condition });
    }
    let (ro, rm) = system.input_rows();
    let c = system.coefficients();
    let dim = system.dimension();
    let mut matrix = DMatrix::from_element(dim, 2, Complex64::new(0.0, 0.0));
    for r in 0..dim {
        matrix[(r, 0)] = inv[(r, ro)] * c.kappa.sqrt();
        matrix[(r, 1)] = inv[(r, rm)] * c.gamma_m.sqrt();
    }
    Ok(Transfer {
        omega,
        modes: system.modes().to_vec(),
        matrix,
        condition,
    })
}

/// Output field amplitudes per optical Fourier index and input channel.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputTransfer {
    pub indices: Vec<i32>,
    /// `indices.len() x 2`: column 0 optical input, column 1 mechanical input.
    pub matrix: DMatrix<Complex64>,
}

impl OutputTransfer {
    pub fn get(&self, index: i32, channel: Channel) -> Option<Complex64> {
        self.indices
            .iter()
            .position(|&n| n == index)
            .map(|r| self.matrix[(r, channel.column())])
    }
}

/// Applies `a_out^(n) = delta_{n0} a_in - sqrt(kappa_ex) a^(n)`.
pub fn output_transfer(transfer: &Transfer, params: &SystemParams) -> OutputTransfer {
    let rows: Vec<(i32, usize)> = transfer
        .modes
        .iter()
        .enumerate()
        .filter(|(_, m)| m.species == Species::Optical)
        .map(|(r, m)| (m.index, r))
        .collect();
    let s = params.kappa_ex.sqrt();
    let mut matrix = DMatrix::from_element(rows.len(), 2, Complex64::new(0.0, 0.0));
    for (k, &(n, r)) in rows.iter().enumerate() {
        for col in 0..2 {
            matrix[(k, col)] = -s * transfer.matrix[(r, col)];
        }
        if n == 0 {
            matrix[(k, 0)] += 1.0;
        }
    }
    OutputTransfer {
        indices: rows.iter().map(|&(n, _)| n).collect(),
        matrix,
    }
}

/// Time-averaged normal-ordered output spectrum on the cavity-frame grid.
pub fn noise_spectrum(
    params: &SystemParams,
    tones: &ToneSet,
    kerr: &KerrModel,
    env: &EnvironmentParams,
    config: &FloquetConfig,
    grid: &[f64],
) -> Result<SpectrumTrace> {
    let system = assemble(params, tones, kerr, config)?;
    let values = system.normal_ordered(env.n_th, grid)?;
    SpectrumTrace::new(grid.to_vec(), values, Normalization::NormalOrdered)
}

/// `1 + eta S^N`, with the frequency axis shifted by the local-oscillator detuning.
pub fn heterodyne_spectrum(sn: &SpectrumTrace, det: &DetectionParams) -> Result<SpectrumTrace> {
    if sn.normalization != Normalization::NormalOrdered {
        return Err(Error::Domain(
            "heterodyne_spectrum expects a normal-ordered trace".into(),
        ));
    }
    let eta = det.efficiency()?;
    let grid = sn.freq_grid.iter().map(|f| f + det.delta_lo).collect();
    let values = sn.values.iter().map(|s| 1.0 + eta * s).collect();
    let mut t = SpectrumTrace::new(grid, values, Normalization::ShotNoiseNormalized)?;
    t.warnings = sn.warnings.clone();
    Ok(t)
}

/// Number of window doublings tried by [`converged_spectrum`].
pub const MAX_DOUBLINGS: usize = 6;

/// Grows the Fourier windows until the spectrum stops changing.
///
/// Starts from the three-mode window and pads by 1, 2, 4, ... indices. When
/// two consecutive windows agree to `rel_tol` (relative to each sample, with
/// a floor of `1e-9` of the peak) the smaller of the two is returned.
pub fn converged_spectrum(
    params: &SystemParams,
    tones: &ToneSet,
    kerr: &KerrModel,
    env: &EnvironmentParams,
    grid: &[f64],
    rel_tol: f64,
) -> Result<(SpectrumTrace, FloquetConfig)> {
    converged_spectrum_with(
        params,
        tones,
        kerr,
        env,
        grid,
        rel_tol,
        &FloquetConfig::minimal(),
    )
}

/// [`converged_spectrum`] with the cavity response and sum mode taken from `template`.
pub fn converged_spectrum_with(
    params: &SystemParams,
    tones: &ToneSet,
    kerr: &KerrModel,
    env: &EnvironmentParams,
    grid: &[f64],
    rel_tol: f64,
    template: &FloquetConfig,
) -> Result<(SpectrumTrace, FloquetConfig)> {
    if !(rel_tol > 0.0) {
        return Err(Error::Domain(format!("rel_tol must be positive, got {rel_tol}")));
    }
    let coeffs = LatticeCoefficients::from_model(params, tones, kerr)?;
    let configure = |p: u32| {
        FloquetConfig::padded(p)
            .with_cavity(template.cavity)
            .with_sum_mode(template.sum_mode)
    };
    let run = |cfg: FloquetConfig| -> Result<Vec<f64>> {
        FloquetSystem::new(coeffs, cfg)?.normal_ordered(0.0f64.max(env.n_th), grid)
    };
    let mut cfg = configure(0);
    let mut prev = run(cfg)?;
    let mut change = f64::INFINITY;
    for k in 0..MAX_DOUBLINGS {
        let next_cfg = configure(1 << k);
        let next = run(next_cfg)?;
        change = max_relative_change(&prev, &next);
        if change < rel_tol {
            let trace = SpectrumTrace::new(grid.to_vec(), prev, Normalization::NormalOrdered)?;
            return Ok((trace, cfg));
        }
        cfg = next_cfg;
        prev = next;
    }
    Err(Error::Convergence {
        doublings: MAX_DOUBLINGS,
        last_change: change,
        window: format!("optical {} mechanical {}", cfg.optical, cfg.mechanical),
    })
}

fn max_relative_change(a: &[f64], b: &[f64]) -> f64 {
    let peak = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak == 0.0 {
        return a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    }
    let floor = 1e-9 * peak;
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / y.abs().max(floor))
        .fold(0.0, f64::max)
}

/// Integrated weights of every retained optical sideband, keyed by index.
pub fn sideband_weights(
    params: &SystemParams,
    tones: &ToneSet,
    kerr: &KerrModel,
    env: &EnvironmentParams,
    config: &FloquetConfig,
) -> Result<Vec<(i32, f64)>> {
    let system = assemble(params, tones, kerr, config)?;
    config
        .optical
        .iter()
        .map(|n| Ok((n, system.sideband_weight(env.n_th, n, DEFAULT_WEIGHT_NODES)?)))
        .collect()
}

/// Quadrature nodes used for sideband weights.
pub const DEFAULT_WEIGHT_NODES: usize = 20001;
