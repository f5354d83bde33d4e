//! Optical hyperpolarization through the bound-exciton Auger cycle.
//!
//! Three-state linear kinetics on {S, T, X}: the D⁰ singlet, the aggregated D⁰
//! triplet (optically unresolved at low field) and the D⁰X bound exciton, with
//! donor ionization and recapture folded into the X → S/T decay.

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

/// 1 cm⁻¹ expressed in MHz.
pub const MHZ_PER_WAVENUMBER: f64 = 29_979.245_8;

/// Splitting of each optical line by residual random fields (cm⁻¹).
pub const DOUBLET_SPLITTING_WAVENUMBER: f64 = 0.0008;

/// Maximum tolerated local error of one integration step.
const STEP_ERROR_LIMIT: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PumpError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("step size too large: local error estimate {estimate:e} exceeds {limit:e}")]
    StepSize { estimate: f64, limit: f64 },
    #[error("rate matrix has no unique steady state")]
    NoUniqueSteadyState,
    #[error("trajectory not converged: final signal {last} vs steady value {steady}")]
    NotConverged { last: f64, steady: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PumpConfig {
    /// D⁰(S) → D⁰X promotion rate (1/s).
    pub pump_rate_s: f64,
    /// D⁰(T) → D⁰X promotion rate (1/s).
    pub pump_rate_t: f64,
    /// D⁰X Auger decay rate (1/s).
    pub auger_rate: f64,
    /// Fraction of recaptures landing in S.
    pub branch_to_s: f64,
    /// Above-gap S/T randomization rate toward 1:3 statistical weights (1/s).
    pub randomization_rate: f64,
    /// Optical FWHM linewidth (MHz).
    pub optical_linewidth: f64,
}

impl Default for PumpConfig {
    fn default() -> Self {
        PumpConfig {
            pump_rate_s: 0.0,
            pump_rate_t: 0.0,
            auger_rate: 1e6,
            branch_to_s: 0.25,
            randomization_rate: 0.0,
            optical_linewidth: 0.001 * MHZ_PER_WAVENUMBER,
        }
    }
}

impl PumpConfig {
    pub fn validate(&self) -> Result<(), PumpError> {
        let rates = [
            ("pump_rate_s", self.pump_rate_s),
            ("pump_rate_t", self.pump_rate_t),
            ("auger_rate", self.auger_rate),
            ("randomization_rate", self.randomization_rate),
            ("optical_linewidth", self.optical_linewidth),
        ];
        for (name, v) in rates {
            if !(v.is_finite() && v >= 0.0) {
                return Err(PumpError::InvalidInput(format!(
                    "{name} must be finite and non-negative, got {v}"
                )));
            }
        }
        if !(0.0..=1.0).contains(&self.branch_to_s) {
            return Err(PumpError::InvalidInput(format!(
                "branch_to_s must lie in [0, 1], got {}",
                self.branch_to_s
            )));
        }
        Ok(())
    }
}

/// Occupations of D⁰(S), D⁰(T) and D⁰X.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PopulationState {
    pub n_s: f64,
    pub n_t: f64,
    pub n_x: f64,
}

impl PopulationState {
    pub fn new(n_s: f64, n_t: f64, n_x: f64) -> Self {
        PopulationState { n_s, n_t, n_x }
    }

    /// Statistical 1:3 singlet/triplet occupation with no excitons.
    pub fn thermal() -> Self {
        PopulationState::new(0.25, 0.75, 0.0)
    }

    pub fn total(&self) -> f64 {
        self.n_s + self.n_t + self.n_x
    }

    pub fn as_vector(&self) -> Vector3<f64> {
        Vector3::new(self.n_s, self.n_t, self.n_x)
    }

    pub fn from_vector(v: &Vector3<f64>) -> Self {
        PopulationState::new(v.x, v.y, v.z)
    }

    pub fn validate(&self) -> Result<(), PumpError> {
        let v = self.as_vector();
        if v.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(PumpError::InvalidInput(format!(
                "populations must be finite and non-negative: {self:?}"
            )));
        }
        if (self.total() - 1.0).abs() > 1e-9 {
            return Err(PumpError::InvalidInput(format!(
                "populations must sum to 1, got {}",
                self.total()
            )));
        }
        Ok(())
    }
}

/// Samples on a strictly increasing grid (time in s, or wavenumber for spectra).
#[derive(Debug, Clone, PartialEq)]
pub struct SignalTrace {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<PopulationState>,
}

/// Generator `M` of `dp/dt = M p` on (S, T, X); columns sum to zero.
pub fn rate_matrix(cfg: &PumpConfig) -> Matrix3<f64> {
    let b = cfg.branch_to_s;
    let r = cfg.randomization_rate;
    let (s_to_t, t_to_s) = (0.75 * r, 0.25 * r);
    let x_to_s = cfg.auger_rate * b;
    let x_to_t = cfg.auger_rate * (1.0 - b);
    Matrix3::new(
        -(cfg.pump_rate_s + s_to_t),
        t_to_s,
        x_to_s,
        s_to_t,
        -(cfg.pump_rate_t + t_to_s),
        x_to_t,
        cfg.pump_rate_s,
        cfg.pump_rate_t,
        -(x_to_s + x_to_t),
    )
}

/// Classical RK4 update matrix `I + hM + (hM)²/2 + (hM)³/6 + (hM)⁴/24` for linear kinetics.
fn rk4_propagator(m: &Matrix3<f64>, h: f64) -> Matrix3<f64> {
    let a = m * h;
    let a2 = a * a;
    let a3 = a2 * a;
    let a4 = a3 * a;
    Matrix3::identity() + a + a2 / 2.0 + a3 / 6.0 + a4 / 24.0
}

/// Fixed-step RK4 trajectory over `[0, duration]` with step at most `dt`.
///
/// Every step is checked by step doubling; an estimated local error above 1e-6 is
/// reported as [`PumpError::StepSize`].
pub fn evolve_populations(
    p0: &PopulationState,
    cfg: &PumpConfig,
    duration: f64,
    dt: f64,
) -> Result<Trajectory, PumpError> {
    cfg.validate()?;
    p0.validate()?;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(PumpError::InvalidInput(format!(
            "dt must be positive, got {dt}"
        )));
    }
    if !(duration >= dt && duration.is_finite()) {
        return Err(PumpError::InvalidInput(format!(
            "duration {duration} must be at least dt {dt}"
        )));
    }
    let steps = (duration / dt - 1e-9).ceil().max(1.0) as usize;
    let h = duration / steps as f64;
    let m = rate_matrix(cfg);
    let full = rk4_propagator(&m, h);
    let half = rk4_propagator(&m, h / 2.0);
    let err_op = (full - half * half) / 15.0;

    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    let mut p = p0.as_vector();
    times.push(0.0);
    states.push(*p0);
    for k in 1..=steps {
        let est = (err_op * p).amax();
        if est > STEP_ERROR_LIMIT {
            return Err(PumpError::StepSize {
                estimate: est,
                limit: STEP_ERROR_LIMIT,
            });
        }
        p = full * p;
        times.push(k as f64 * h);
        states.push(PopulationState::from_vector(&p));
    }
    Ok(Trajectory { times, states })
}

/// Normalized null vector of the rate matrix.
///
/// Computed from the diagonal cofactors of −M (matrix-tree theorem), which are
/// non-negative for any valid generator and vanish together exactly when the
/// stationary state is not unique.
pub fn steady_state(cfg: &PumpConfig) -> Result<PopulationState, PumpError> {
    cfg.validate()?;
    let m = -rate_matrix(cfg);
    let minor = |skip: usize| {
        let idx: Vec<usize> = (0..3).filter(|&k| k != skip).collect();
        let (a, b) = (idx[0], idx[1]);
        m[(a, a)] * m[(b, b)] - m[(a, b)] * m[(b, a)]
    };
    let w = Vector3::new(minor(0), minor(1), minor(2)).map(|x| x.max(0.0));
    let total = w.sum();
    let scale = m.amax();
    if !(total > 0.0) || total <= 1e-14 * scale * scale {
        return Err(PumpError::NoUniqueSteadyState);
    }
    let p = w / total;
    Ok(PopulationState::from_vector(&p))
}

/// Residual ‖M·p‖∞ / ‖M‖∞ of a candidate steady state.
pub fn steady_state_residual(cfg: &PumpConfig, p: &PopulationState) -> f64 {
    let m = rate_matrix(cfg);
    let scale = m.amax();
    if scale == 0.0 {
        return 0.0;
    }
    (m * p.as_vector()).amax() / scale
}

/// Photoconductive readout: `gain · (pump_rate_s·n_S + pump_rate_t·n_T)`.
pub fn photoconductive_signal(traj: &Trajectory, cfg: &PumpConfig, gain: f64) -> SignalTrace {
    SignalTrace {
        grid: traj.times.clone(),
        values: traj
            .states
            .iter()
            .map(|p| gain * (cfg.pump_rate_s * p.n_s + cfg.pump_rate_t * p.n_t))
            .collect(),
    }
}

/// Integral of |signal(t) − signal(∞)| over the trajectory (unit gain).
pub fn transient_area(traj: &Trajectory, cfg: &PumpConfig) -> Result<f64, PumpError> {
    let ss = steady_state(cfg)?;
    let steady = cfg.pump_rate_s * ss.n_s + cfg.pump_rate_t * ss.n_t;
    let sig = photoconductive_signal(traj, cfg, 1.0);
    let last = *sig.values.last().unwrap_or(&steady);
    let tol = 1e-4 * steady.abs().max(f64::MIN_POSITIVE);
    if (last - steady).abs() > tol && (last - steady).abs() > 1e-12 {
        return Err(PumpError::NotConverged { last, steady });
    }
    let dev: Vec<f64> = sig.values.iter().map(|v| (v - steady).abs()).collect();
    Ok(trapezoid(&sig.grid, &dev))
}

pub(crate) fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(xw, yw)| 0.5 * (xw[1] - xw[0]) * (yw[0] + yw[1]))
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PumpSetting {
    Off,
    OnT,
    OnS,
}

impl std::str::FromStr for PumpSetting {
    type Err = PumpError;
    fn from_str(s: &str) -> Result<Self, PumpError> {
        match s {
            "off" => Ok(PumpSetting::Off),
            "on-t" | "on_t" | "t" => Ok(PumpSetting::OnT),
            "on-s" | "on_s" | "s" => Ok(PumpSetting::OnS),
            other => Err(PumpError::InvalidInput(format!(
                "unknown pump setting '{other}' (expected off, on-t, on-s)"
            ))),
        }
    }
}

/// Laser and line parameters for a simulated optical scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OpticalScan {
    /// Singlet line center (cm⁻¹).
    pub line_s_center: f64,
    /// Triplet line center (cm⁻¹).
    pub line_t_center: f64,
    /// Promotion rate of the scanned probe at exact resonance (1/s).
    pub probe_rate: f64,
    /// Promotion rate of the fixed pump laser at exact resonance (1/s).
    pub pump_laser_rate: f64,
    /// Split every line into a doublet separated by 0.0008 cm⁻¹.
    pub doublet: bool,
}

impl Default for OpticalScan {
    fn default() -> Self {
        OpticalScan {
            line_s_center: 9274.192,
            line_t_center: 9274.188,
            probe_rate: 2e3,
            pump_laser_rate: 4e4,
            doublet: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OpticalSpectrum {
    pub trace: SignalTrace,
    /// Probe signal from the singlet line alone.
    pub singlet: Vec<f64>,
    /// Probe signal from the triplet line alone.
    pub triplet: Vec<f64>,
    pub warnings: Vec<String>,
}

fn lorentzian(x: f64, center: f64, fwhm: f64) -> f64 {
    let u = 2.0 * (x - center) / fwhm;
    1.0 / (1.0 + u * u)
}

fn line_profile(x: f64, center: f64, fwhm: f64, doublet: bool) -> f64 {
    if doublet {
        let d = DOUBLET_SPLITTING_WAVENUMBER / 2.0;
        0.5 * (lorentzian(x, center - d, fwhm) + lorentzian(x, center + d, fwhm))
    } else {
        lorentzian(x, center, fwhm)
    }
}

/// Steady-state probe signal across a wavenumber scan.
///
/// At each probe position the S and T promotion rates are set from Lorentzian
/// overlap (plus the parked pump laser, if any) and the probe's share of exciton
/// generation is reported.
pub fn optical_spectrum(
    scan_grid: &[f64],
    scan: &OpticalScan,
    template: &PumpConfig,
    setting: PumpSetting,
) -> Result<OpticalSpectrum, PumpError> {
    template.validate()?;
    if scan_grid.is_empty() || scan_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(PumpError::InvalidInput(
            "scan grid must be non-empty and strictly increasing".into(),
        ));
    }
    let width = template.optical_linewidth / MHZ_PER_WAVENUMBER;
    if !(width > 0.0) {
        return Err(PumpError::InvalidInput(
            "optical_linewidth must be positive".into(),
        ));
    }
    let mut warnings = Vec::new();
    if (scan.line_s_center - scan.line_t_center).abs() < width / 10.0 {
        warnings.push(format!(
            "degenerate lines: S and T centers {} and {} are closer than linewidth/10",
            scan.line_s_center, scan.line_t_center
        ));
    }
    let prof_s = |x: f64| line_profile(x, scan.line_s_center, width, scan.doublet);
    let prof_t = |x: f64| line_profile(x, scan.line_t_center, width, scan.doublet);
    let pump_at = match setting {
        PumpSetting::Off => None,
        PumpSetting::OnT => Some(scan.line_t_center),
        PumpSetting::OnS => Some(scan.line_s_center),
    };
    let (fixed_s, fixed_t) = match pump_at {
        Some(x) => (
            scan.pump_laser_rate * prof_s(x),
            scan.pump_laser_rate * prof_t(x),
        ),
        None => (0.0, 0.0),
    };

    let mut singlet = Vec::with_capacity(scan_grid.len());
    let mut triplet = Vec::with_capacity(scan_grid.len());
    for &x in scan_grid {
        let (ls, lt) = (prof_s(x), prof_t(x));
        let cfg = PumpConfig {
            pump_rate_s: scan.probe_rate * ls + fixed_s,
            pump_rate_t: scan.probe_rate * lt + fixed_t,
            ..*template
        };
        let p = steady_state(&cfg)?;
        singlet.push(scan.probe_rate * ls * p.n_s);
        triplet.push(scan.probe_rate * lt * p.n_t);
    }
    let values = singlet.iter().zip(&triplet).map(|(a, b)| a + b).collect();
    Ok(OpticalSpectrum {
        trace: SignalTrace {
            grid: scan_grid.to_vec(),
            values,
        },
        singlet,
        triplet,
        warnings,
    })
}
