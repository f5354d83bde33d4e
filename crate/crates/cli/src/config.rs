//! Run configuration: a TOML file of `key = value` lines with optional `[section]` headers.
//!
//! Spin constants, `seed` and `output` live at the top level; everything else sits in
//! `[field]`, `[pump]`, `[optical]`, `[noise]`, `[ensemble]` or `[rf]`. Every key is
//! optional and unknown keys are rejected.

use std::path::{Path, PathBuf};

use donorsim::pulse::{
    Detection, EnsembleSpec, NoiseModel, PulseMode, DEFAULT_MAX_MAGNITUDE_SHOTS,
};
use donorsim::pump::{OpticalScan, PumpConfig, MHZ_PER_WAVENUMBER};
use donorsim::rf::RfSpectrumConfig;
use donorsim::spin::{FieldVector, SpinSystem, Transition};
use nalgebra::Vector3;
use serde::Deserialize;

use crate::error::CliError;

pub const SEED_ENV: &str = "DONORSIM_SEED";

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// MHz.
    pub hyperfine_a: f64,
    /// MHz/mT.
    pub gamma_s: f64,
    /// MHz/mT.
    pub gamma_i: f64,
    pub seed: Option<u64>,
    pub output: Option<PathBuf>,
    pub field: FieldSection,
    pub pump: PumpSection,
    pub optical: OpticalSection,
    pub noise: NoiseSection,
    pub ensemble: EnsembleSection,
    pub rf: RfSection,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FieldSection {
    /// Static field vector (µT).
    pub b0_ut: [f64; 3],
    pub b1_direction: [f64; 3],
    pub b1_amplitude_mt: f64,
    pub rf_detuning_khz: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PumpSection {
    pub pump_rate_s: f64,
    pub pump_rate_t: f64,
    pub auger_rate: f64,
    pub branch_to_s: f64,
    pub randomization_rate: f64,
    pub optical_linewidth_mhz: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OpticalSection {
    pub line_s_center: f64,
    pub line_t_center: f64,
    pub probe_rate: f64,
    pub pump_laser_rate: f64,
    pub doublet: bool,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSection {
    pub static_detuning_sigma_khz: f64,
    pub ou_sigma_ut: f64,
    pub ou_tau_c_s: f64,
    pub internal_field_fraction: f64,
    pub internal_field_ut: f64,
    pub t2_s: Option<f64>,
    pub stretching_n: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnsembleSection {
    pub n_members: usize,
    pub transition: String,
    pub pulse_mode: String,
    pub detection: String,
    pub shots: usize,
    pub pi_pulse_s: Option<f64>,
    pub readout_offset: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RfSection {
    pub linewidth_khz: f64,
    pub orientations: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let sys = SpinSystem::default();
        RunConfig {
            hyperfine_a: sys.hyperfine_a,
            gamma_s: sys.gamma_s,
            gamma_i: sys.gamma_i,
            seed: None,
            output: None,
            field: FieldSection::default(),
            pump: PumpSection::default(),
            optical: OpticalSection::default(),
            noise: NoiseSection::default(),
            ensemble: EnsembleSection::default(),
            rf: RfSection::default(),
        }
    }
}

impl Default for FieldSection {
    fn default() -> Self {
        let e = EnsembleSpec::default();
        FieldSection {
            b0_ut: [0.0, 0.0, 0.0],
            b1_direction: [0.0, 0.0, 1.0],
            b1_amplitude_mt: e.b1_amplitude,
            rf_detuning_khz: 0.0,
        }
    }
}

impl Default for PumpSection {
    fn default() -> Self {
        let p = PumpConfig::default();
        PumpSection {
            pump_rate_s: p.pump_rate_s,
            pump_rate_t: p.pump_rate_t,
            auger_rate: p.auger_rate,
            branch_to_s: p.branch_to_s,
            randomization_rate: p.randomization_rate,
            optical_linewidth_mhz: p.optical_linewidth,
        }
    }
}

impl Default for OpticalSection {
    fn default() -> Self {
        let o = OpticalScan::default();
        OpticalSection {
            line_s_center: o.line_s_center,
            line_t_center: o.line_t_center,
            probe_rate: o.probe_rate,
            pump_laser_rate: o.pump_laser_rate,
            doublet: o.doublet,
        }
    }
}

impl Default for NoiseSection {
    fn default() -> Self {
        let n = NoiseModel::default();
        NoiseSection {
            static_detuning_sigma_khz: n.static_detuning_sigma,
            ou_sigma_ut: n.ou_sigma,
            ou_tau_c_s: n.ou_tau_c,
            internal_field_fraction: n.internal_field_fraction,
            internal_field_ut: n.internal_field_magnitude,
            t2_s: n.phenomenological_t2,
            stretching_n: n.stretching_n,
        }
    }
}

impl Default for EnsembleSection {
    fn default() -> Self {
        EnsembleSection {
            n_members: EnsembleSpec::default().n_members,
            transition: "t0".into(),
            pulse_mode: "hard".into(),
            detection: "ensemble".into(),
            shots: DEFAULT_MAX_MAGNITUDE_SHOTS,
            pi_pulse_s: None,
            readout_offset: 0.0,
        }
    }
}

impl Default for RfSection {
    fn default() -> Self {
        let r = RfSpectrumConfig::default();
        RfSection {
            linewidth_khz: r.linewidth,
            orientations: r.orientations,
        }
    }
}

/// Line (1-based) of `key` inside `section` (`None` for the top level), if present.
fn locate(text: &str, section: Option<&str>, key: &str) -> Option<usize> {
    let mut current: Option<String> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(rest) = line.strip_prefix('[') {
            current = rest.split(']').next().map(|s| s.trim().to_string());
            continue;
        }
        let Some((k, _)) = line.split_once('=') else {
            continue;
        };
        if k.trim() == key && current.as_deref() == section {
            return Some(i + 1);
        }
    }
    None
}

struct Checker<'a> {
    text: &'a str,
    problems: Vec<String>,
}

impl Checker<'_> {
    fn fail(&mut self, section: Option<&str>, key: &str, msg: String) {
        let name = match section {
            Some(s) => format!("{s}.{key}"),
            None => key.to_string(),
        };
        let at = match locate(self.text, section, key) {
            Some(l) => format!("line {l}: "),
            None => String::new(),
        };
        self.problems
            .push(format!("{at}invalid value for `{name}`: {msg}"));
    }

    fn check(&mut self, section: Option<&str>, key: &str, v: f64, ok: bool, want: &str) {
        if !(ok && v.is_finite()) {
            self.fail(section, key, format!("{v} (must be {want})"));
        }
    }

    fn positive(&mut self, section: Option<&str>, key: &str, v: f64) {
        self.check(section, key, v, v > 0.0, "> 0");
    }

    fn non_negative(&mut self, section: Option<&str>, key: &str, v: f64) {
        self.check(section, key, v, v >= 0.0, "≥ 0");
    }

    fn finite(&mut self, section: Option<&str>, key: &str, v: f64) {
        self.check(section, key, v, true, "finite");
    }

    fn fraction(&mut self, section: Option<&str>, key: &str, v: f64) {
        self.check(section, key, v, (0.0..=1.0).contains(&v), "in [0, 1]");
    }
}

impl RunConfig {
    /// Parses and validates configuration text.
    pub fn from_text(text: &str) -> Result<RunConfig, CliError> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| CliError::Validation(format!("config: {e}")))?;
        cfg.validate_with(text)?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.validate_with("")
    }

    fn validate_with(&self, text: &str) -> Result<(), CliError> {
        let mut c = Checker {
            text,
            problems: Vec::new(),
        };
        c.positive(None, "hyperfine_a", self.hyperfine_a);
        c.positive(None, "gamma_s", self.gamma_s);
        c.non_negative(None, "gamma_i", self.gamma_i);

        let f = Some("field");
        for v in self.field.b0_ut {
            c.finite(f, "b0_ut", v);
        }
        let d = self.field.b1_direction;
        let norm = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
        c.check(f, "b1_direction", norm, norm > 0.0, "a non-zero vector");
        c.non_negative(f, "b1_amplitude_mt", self.field.b1_amplitude_mt);
        c.finite(f, "rf_detuning_khz", self.field.rf_detuning_khz);

        let p = Some("pump");
        c.non_negative(p, "pump_rate_s", self.pump.pump_rate_s);
        c.non_negative(p, "pump_rate_t", self.pump.pump_rate_t);
        c.positive(p, "auger_rate", self.pump.auger_rate);
        c.fraction(p, "branch_to_s", self.pump.branch_to_s);
        c.non_negative(p, "randomization_rate", self.pump.randomization_rate);
        c.positive(p, "optical_linewidth_mhz", self.pump.optical_linewidth_mhz);

        let o = Some("optical");
        c.finite(o, "line_s_center", self.optical.line_s_center);
        c.finite(o, "line_t_center", self.optical.line_t_center);
        c.non_negative(o, "probe_rate", self.optical.probe_rate);
        c.non_negative(o, "pump_laser_rate", self.optical.pump_laser_rate);

        let n = Some("noise");
        c.non_negative(
            n,
            "static_detuning_sigma_khz",
            self.noise.static_detuning_sigma_khz,
        );
        c.non_negative(n, "ou_sigma_ut", self.noise.ou_sigma_ut);
        c.positive(n, "ou_tau_c_s", self.noise.ou_tau_c_s);
        c.fraction(
            n,
            "internal_field_fraction",
            self.noise.internal_field_fraction,
        );
        c.non_negative(n, "internal_field_ut", self.noise.internal_field_ut);
        if let Some(t2) = self.noise.t2_s {
            c.positive(n, "t2_s", t2);
        }
        c.positive(n, "stretching_n", self.noise.stretching_n);

        let e = Some("ensemble");
        if self.ensemble.n_members == 0 {
            c.fail(e, "n_members", "0 (must be ≥ 1)".into());
        }
        if self.ensemble.shots == 0 {
            c.fail(e, "shots", "0 (must be ≥ 1)".into());
        }
        if let Err(err) = self.ensemble.transition.parse::<Transition>() {
            c.fail(e, "transition", err.to_string());
        }
        if let Err(err) = self.ensemble.pulse_mode.parse::<PulseMode>() {
            c.fail(e, "pulse_mode", err.to_string());
        }
        if let Err(msg) = parse_detection(&self.ensemble.detection, 1) {
            c.fail(e, "detection", msg);
        }
        if let Some(tp) = self.ensemble.pi_pulse_s {
            c.positive(e, "pi_pulse_s", tp);
        }
        c.finite(e, "readout_offset", self.ensemble.readout_offset);

        let r = Some("rf");
        c.positive(r, "linewidth_khz", self.rf.linewidth_khz);
        if self.rf.orientations == 0 {
            c.fail(r, "orientations", "0 (must be ≥ 1)".into());
        }

        if c.problems.is_empty() {
            Ok(())
        } else {
            Err(CliError::Validation(c.problems.join("\n")))
        }
    }

    pub fn spin_system(&self) -> SpinSystem {
        SpinSystem {
            hyperfine_a: self.hyperfine_a,
            gamma_s: self.gamma_s,
            gamma_i: self.gamma_i,
        }
    }

    pub fn b0(&self) -> FieldVector {
        let [x, y, z] = self.field.b0_ut;
        FieldVector::new(x, y, z)
    }

    pub fn b1_direction(&self) -> Vector3<f64> {
        Vector3::from(self.field.b1_direction).normalize()
    }

    pub fn pump_config(&self) -> PumpConfig {
        PumpConfig {
            pump_rate_s: self.pump.pump_rate_s,
            pump_rate_t: self.pump.pump_rate_t,
            auger_rate: self.pump.auger_rate,
            branch_to_s: self.pump.branch_to_s,
            randomization_rate: self.pump.randomization_rate,
            optical_linewidth: self.pump.optical_linewidth_mhz,
        }
    }

    pub fn optical_scan(&self) -> OpticalScan {
        OpticalScan {
            line_s_center: self.optical.line_s_center,
            line_t_center: self.optical.line_t_center,
            probe_rate: self.optical.probe_rate,
            pump_laser_rate: self.optical.pump_laser_rate,
            doublet: self.optical.doublet,
        }
    }

    /// Optical linewidth expressed in cm⁻¹.
    pub fn optical_linewidth_wavenumber(&self) -> f64 {
        self.pump.optical_linewidth_mhz / MHZ_PER_WAVENUMBER
    }

    pub fn noise_model(&self) -> NoiseModel {
        NoiseModel {
            static_detuning_sigma: self.noise.static_detuning_sigma_khz,
            ou_sigma: self.noise.ou_sigma_ut,
            ou_tau_c: self.noise.ou_tau_c_s,
            internal_field_fraction: self.noise.internal_field_fraction,
            internal_field_magnitude: self.noise.internal_field_ut,
            phenomenological_t2: self.noise.t2_s,
            stretching_n: self.noise.stretching_n,
        }
    }

    pub fn rf_config(&self) -> RfSpectrumConfig {
        RfSpectrumConfig {
            linewidth: self.rf.linewidth_khz,
            internal_field_fraction: self.noise.internal_field_fraction,
            internal_field_magnitude: self.noise.internal_field_ut,
            orientations: self.rf.orientations,
        }
    }

    /// Ensemble specification with the given effective seed.
    pub fn ensemble_spec(&self, seed: u64) -> Result<EnsembleSpec, CliError> {
        let v = |e: String| CliError::Validation(e);
        Ok(EnsembleSpec {
            sys: self.spin_system(),
            transition: self
                .ensemble
                .transition
                .parse()
                .map_err(|e: donorsim::spin::SpinError| v(e.to_string()))?,
            b0: self.b0(),
            b1_direction: self.b1_direction(),
            b1_amplitude: self.field.b1_amplitude_mt,
            rf_detuning: self.field.rf_detuning_khz,
            n_members: self.ensemble.n_members,
            seed,
            noise: self.noise_model(),
            pulse_mode: self
                .ensemble
                .pulse_mode
                .parse()
                .map_err(|e: donorsim::pulse::PulseError| v(e.to_string()))?,
            pi_pulse: self.ensemble.pi_pulse_s,
            detection: parse_detection(&self.ensemble.detection, self.ensemble.shots).map_err(v)?,
            readout_offset: self.ensemble.readout_offset,
        })
    }
}

/// `ensemble` or `max-magnitude`.
pub fn parse_detection(s: &str, shots: usize) -> Result<Detection, String> {
    match s.trim().to_ascii_lowercase().as_str() {
        "ensemble" => Ok(Detection::Ensemble),
        "max-magnitude" | "max_magnitude" => Ok(Detection::MaxMagnitude { shots }),
        other => Err(format!(
            "unknown detection '{other}' (expected ensemble or max-magnitude)"
        )),
    }
}

/// Reads and validates a config file.
pub fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", path.display())))?;
    RunConfig::from_text(&text).map_err(|e| match e {
        CliError::Validation(m) => CliError::Validation(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// Flag, then config file, then `DONORSIM_SEED`, then 0.
pub fn effective_seed(flag: Option<u64>, cfg: &RunConfig) -> Result<u64, CliError> {
    if let Some(s) = flag.or(cfg.seed) {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v.trim().parse().map_err(|_| {
            CliError::Validation(format!(
                "{SEED_ENV}={v:?} is not an unsigned 64-bit integer"
            ))
        }),
        Err(_) => Ok(0),
    }
}
