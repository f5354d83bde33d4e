//! Subcommand definitions and runners.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use donorsim::dsl::{self, BindingMode, Severity};
use donorsim::fit::{fit_peaks, fit_stretched_exp, FitResult, Peak, PeakShape, StretchedExpGuess};
use donorsim::pulse::{
    calibrate_pi_pulse, echo_experiment, rabi_experiment, ramsey_experiment, EnsembleSpec,
    PulseMode,
};
use donorsim::pump::{optical_spectrum, PumpSetting};
use donorsim::rf::rf_spectrum;
use donorsim::series::DecaySeries;
use donorsim::spin::{self, LevelLabel, Transition};

use crate::config::{effective_seed, load_config, RunConfig};
use crate::error::CliError;
use crate::table::{read_csv, Table};

#[derive(Debug, Parser)]
#[command(
    name = "donorsim",
    version,
    about = "Zero-field 31P donor spin simulator",
    propagate_version = true
)]
pub struct Cli {
    /// Run configuration file (`key = value` lines with `[section]` headers)
    #[arg(
        long,
        global = true,
        value_name = "FILE",
        help_heading = "Global options"
    )]
    pub config: Option<PathBuf>,
    /// RNG seed; overrides the config file and DONORSIM_SEED
    #[arg(long, global = true, value_name = "N", help_heading = "Global options")]
    pub seed: Option<u64>,
    /// Write CSV to FILE instead of standard output
    #[arg(
        short,
        long,
        global = true,
        value_name = "FILE",
        help_heading = "Global options"
    )]
    pub output: Option<PathBuf>,
    /// Worker threads for ensemble runs [default: all cores]
    #[arg(long, global = true, value_name = "N", help_heading = "Global options")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Four level energies versus field magnitude
    Levels(LevelsArgs),
    /// Continuous-wave RF spectrum of the S→T lines
    RfSpectrum(RfArgs),
    /// Photoconductive optical spectrum with optional pump laser
    OpticalSpectrum(OpticalArgs),
    /// Transferred population versus pulse length
    Rabi(RabiArgs),
    /// Transferred population versus free-precession delay
    Ramsey(RamseyArgs),
    /// Phase-cycled echo amplitude versus half-echo delay
    Hahn(HahnArgs),
    /// Fit a stretched exponential or a set of peaks to a CSV file
    Fit(FitArgs),
    /// Check a pulse-sequence file and print it in canonical form
    Parse(ParseArgs),
    /// Field magnitude from the S→T+ / S→T− splitting
    EstimateField(EstimateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum B1Orientation {
    Parallel,
    Perpendicular,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PumpArg {
    Off,
    OnT,
    OnS,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Hard,
    Finite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DetectionArg {
    Ensemble,
    MaxMagnitude,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FitModel {
    StretchedExp,
    Peaks,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ShapeArg {
    Lorentzian,
    Gaussian,
}

#[derive(Debug, Args)]
pub struct FieldArgs {
    /// Static field in µT: a magnitude along z, or x,y,z
    #[arg(
        long,
        value_name = "UT",
        value_delimiter = ',',
        allow_hyphen_values = true
    )]
    pub b0_ut: Option<Vec<f64>>,
    /// B1 direction relative to B0
    #[arg(long, value_enum)]
    pub b1: Option<B1Orientation>,
}

#[derive(Debug, Args)]
pub struct EnsembleArgs {
    /// Ensemble size
    #[arg(long, value_name = "N")]
    pub members: Option<usize>,
    /// Driven line: t0, t+ or t-
    #[arg(long, value_name = "LINE")]
    pub transition: Option<String>,
    /// Hard (instantaneous) or finite-duration pulses
    #[arg(long, value_enum)]
    pub pulse_mode: Option<ModeArg>,
    /// RF amplitude (mT)
    #[arg(long, value_name = "MT")]
    pub b1_amplitude_mt: Option<f64>,
    /// RF detuning from the line (kHz)
    #[arg(long, value_name = "KHZ", allow_hyphen_values = true)]
    pub rf_detuning_khz: Option<f64>,
    /// Standard deviation of the static per-member detuning (kHz)
    #[arg(long, value_name = "KHZ")]
    pub static_sigma_khz: Option<f64>,
    /// Stationary standard deviation of the field noise (µT)
    #[arg(long, value_name = "UT")]
    pub ou_sigma_ut: Option<f64>,
    /// Correlation time of the field noise (s)
    #[arg(long, value_name = "S")]
    pub ou_tau_c_s: Option<f64>,
    /// Fraction of members seeing the internal field
    #[arg(long, value_name = "F")]
    pub internal_fraction: Option<f64>,
    /// π pulse length for finite pulses (s) [default: calibrated]
    #[arg(long, value_name = "S")]
    pub pi_pulse_s: Option<f64>,
    /// Constant added to every readout
    #[arg(long, value_name = "V", allow_hyphen_values = true)]
    pub readout_offset: Option<f64>,
}

#[derive(Debug, Args)]
pub struct LevelsArgs {
    /// Largest field magnitude (mT)
    #[arg(long, value_name = "MT", default_value_t = 5.0)]
    pub bmax_mt: f64,
    /// Number of field points
    #[arg(long, value_name = "N", default_value_t = 500)]
    pub points: usize,
}

#[derive(Debug, Args)]
pub struct RfArgs {
    #[command(flatten)]
    pub field: FieldArgs,
    /// Lower end of the frequency grid (MHz) [default: lowest line − 0.1]
    #[arg(long, value_name = "MHZ")]
    pub fmin_mhz: Option<f64>,
    /// Upper end of the frequency grid (MHz) [default: highest line + 0.1]
    #[arg(long, value_name = "MHZ")]
    pub fmax_mhz: Option<f64>,
    /// Number of frequency points
    #[arg(long, value_name = "N", default_value_t = 2001)]
    pub points: usize,
    /// Lorentzian FWHM of each line (kHz)
    #[arg(long, value_name = "KHZ")]
    pub linewidth_khz: Option<f64>,
    /// Fraction of donors seeing the internal field
    #[arg(long, value_name = "F")]
    pub internal_fraction: Option<f64>,
    /// Internal field magnitude (µT)
    #[arg(long, value_name = "UT")]
    pub internal_field_ut: Option<f64>,
}

#[derive(Debug, Args)]
pub struct OpticalArgs {
    /// Parked pump laser position
    #[arg(long, value_enum, default_value_t = PumpArg::Off)]
    pub pump: PumpArg,
    /// Split every optical line into a doublet
    #[arg(long)]
    pub doublet: bool,
    /// Lower end of the scan (cm⁻¹) [default: lowest line − 0.01]
    #[arg(long, value_name = "WN")]
    pub min_wn: Option<f64>,
    /// Upper end of the scan (cm⁻¹) [default: highest line + 0.01]
    #[arg(long, value_name = "WN")]
    pub max_wn: Option<f64>,
    /// Number of scan points
    #[arg(long, value_name = "N", default_value_t = 801)]
    pub points: usize,
}

#[derive(Debug, Args)]
pub struct RabiArgs {
    #[command(flatten)]
    pub field: FieldArgs,
    #[command(flatten)]
    pub ensemble: EnsembleArgs,
    /// Longest pulse (s) [default: four nominal π pulses]
    #[arg(long, value_name = "S")]
    pub max_length_s: Option<f64>,
    /// Number of pulse lengths
    #[arg(long, value_name = "N", default_value_t = 200)]
    pub points: usize,
}

#[derive(Debug, Args)]
pub struct RamseyArgs {
    #[command(flatten)]
    pub field: FieldArgs,
    #[command(flatten)]
    pub ensemble: EnsembleArgs,
    /// Longest delay (s)
    #[arg(long, value_name = "S", default_value_t = 1e-3)]
    pub tau_max_s: f64,
    /// Number of delays
    #[arg(long, value_name = "N", default_value_t = 200)]
    pub points: usize,
}

#[derive(Debug, Args)]
pub struct HahnArgs {
    #[command(flatten)]
    pub field: FieldArgs,
    #[command(flatten)]
    pub ensemble: EnsembleArgs,
    /// Shortest half-echo delay (s)
    #[arg(long, value_name = "S", default_value_t = 1e-4)]
    pub tau_min_s: f64,
    /// Longest half-echo delay (s)
    #[arg(long, value_name = "S", default_value_t = 1e-2)]
    pub tau_max_s: f64,
    /// Number of delays
    #[arg(long, value_name = "N", default_value_t = 20)]
    pub points: usize,
    /// Space delays logarithmically
    #[arg(long)]
    pub log: bool,
    /// Pulse-sequence file [default: built-in two-shot Hahn echo]
    #[arg(long, value_name = "FILE")]
    pub sequence: Option<PathBuf>,
    /// Delay symbol swept over the grid
    #[arg(long, value_name = "NAME", default_value = "tau")]
    pub symbol: String,
    /// Echo estimator
    #[arg(long, value_enum)]
    pub detection: Option<DetectionArg>,
    /// Shots per delay for max-magnitude detection
    #[arg(long, value_name = "N")]
    pub shots: Option<usize>,
    /// Phenomenological T2 envelope (s)
    #[arg(long, value_name = "S")]
    pub t2_s: Option<f64>,
    /// Stretching exponent of the envelope
    #[arg(long, value_name = "N")]
    pub stretch_n: Option<f64>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Input CSV
    #[arg(long, value_name = "FILE")]
    pub input: PathBuf,
    /// Model to fit
    #[arg(long, value_enum)]
    pub model: FitModel,
    /// Abscissa column [default: first column]
    #[arg(long, value_name = "NAME")]
    pub x: Option<String>,
    /// Ordinate column [default: second column]
    #[arg(long, value_name = "NAME")]
    pub y: Option<String>,
    /// Hold the stretching exponent at this value
    #[arg(long, value_name = "N")]
    pub fix_n: Option<f64>,
    /// Number of peaks
    #[arg(long, value_name = "K", default_value_t = 2)]
    pub peaks: usize,
    /// Peak shape
    #[arg(long, value_enum, default_value_t = ShapeArg::Lorentzian)]
    pub shape: ShapeArg,
}

#[derive(Debug, Args)]
pub struct ParseArgs {
    /// Sequence file
    pub file: PathBuf,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// Separation of the S→T+ and S→T− lines (kHz)
    #[arg(long, value_name = "KHZ")]
    pub splitting_khz: f64,
}

/// What a command produces: an optional table, plain text for standard output and
/// notes for standard error.
#[derive(Debug, Default)]
pub struct Report {
    pub table: Option<Table>,
    pub text: String,
    pub notes: Vec<String>,
}

impl Report {
    fn table(table: Table) -> Report {
        Report {
            table: Some(table),
            ..Report::default()
        }
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n)
        .map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64)
        .collect()
}

fn logspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    linspace(lo.ln(), hi.ln(), n)
        .into_iter()
        .map(f64::exp)
        .collect()
}

fn need(ok: bool, msg: impl FnOnce() -> String) -> Result<(), CliError> {
    if ok {
        Ok(())
    } else {
        Err(CliError::Validation(msg()))
    }
}

fn read_input(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))
}

impl FieldArgs {
    fn apply(&self, cfg: &mut RunConfig) -> Result<(), CliError> {
        if let Some(v) = &self.b0_ut {
            cfg.field.b0_ut = match v.as_slice() {
                [z] => [0.0, 0.0, *z],
                [x, y, z] => [*x, *y, *z],
                _ => {
                    return Err(CliError::Validation(format!(
                        "--b0-ut takes 1 or 3 values, got {}",
                        v.len()
                    )))
                }
            };
        }
        if let Some(o) = self.b1 {
            let axis = cfg.b0().axis();
            let d = match o {
                B1Orientation::Parallel => axis,
                B1Orientation::Perpendicular => spin::perpendicular_axis(&axis),
            };
            cfg.field.b1_direction = [d.x, d.y, d.z];
        }
        Ok(())
    }
}

impl EnsembleArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        let e = &mut cfg.ensemble;
        if let Some(v) = self.members {
            e.n_members = v;
        }
        if let Some(v) = &self.transition {
            e.transition = v.clone();
        }
        if let Some(v) = self.pulse_mode {
            e.pulse_mode = match v {
                ModeArg::Hard => "hard",
                ModeArg::Finite => "finite",
            }
            .into();
        }
        if self.pi_pulse_s.is_some() {
            e.pi_pulse_s = self.pi_pulse_s;
        }
        if let Some(v) = self.readout_offset {
            e.readout_offset = v;
        }
        let f = &mut cfg.field;
        if let Some(v) = self.b1_amplitude_mt {
            f.b1_amplitude_mt = v;
        }
        if let Some(v) = self.rf_detuning_khz {
            f.rf_detuning_khz = v;
        }
        let n = &mut cfg.noise;
        if let Some(v) = self.static_sigma_khz {
            n.static_detuning_sigma_khz = v;
        }
        if let Some(v) = self.ou_sigma_ut {
            n.ou_sigma_ut = v;
        }
        if let Some(v) = self.ou_tau_c_s {
            n.ou_tau_c_s = v;
        }
        if let Some(v) = self.internal_fraction {
            n.internal_field_fraction = v;
        }
    }
}

/// Loads the config (or defaults), applies `edit`, and validates the result.
fn configure(
    path: Option<&Path>,
    edit: impl FnOnce(&mut RunConfig) -> Result<(), CliError>,
) -> Result<RunConfig, CliError> {
    let mut cfg = match path {
        Some(p) => load_config(p)?,
        None => RunConfig::default(),
    };
    edit(&mut cfg)?;
    cfg.validate()?;
    Ok(cfg)
}

/// Executes one parsed command line.
pub fn execute(cli: &Cli) -> Result<(Report, Option<PathBuf>), CliError> {
    let cfg_path = cli.config.as_deref();
    let mut output = cli.output.clone();
    let report = match &cli.command {
        Command::Levels(a) => {
            let cfg = configure(cfg_path, |_| Ok(()))?;
            output = output.or(cfg.output.clone());
            levels(&cfg, a)?
        }
        Command::RfSpectrum(a) => {
            let cfg = configure(cfg_path, |c| {
                a.field.apply(c)?;
                if let Some(v) = a.linewidth_khz {
                    c.rf.linewidth_khz = v;
                }
                if let Some(v) = a.internal_fraction {
                    c.noise.internal_field_fraction = v;
                }
                if let Some(v) = a.internal_field_ut {
                    c.noise.internal_field_ut = v;
                }
                Ok(())
            })?;
            output = output.or(cfg.output.clone());
            rf(&cfg, a)?
        }
        Command::OpticalSpectrum(a) => {
            let cfg = configure(cfg_path, |c| {
                c.optical.doublet |= a.doublet;
                Ok(())
            })?;
            output = output.or(cfg.output.clone());
            optical(&cfg, a)?
        }
        Command::Rabi(a) => {
            let cfg = configure(cfg_path, |c| {
                a.field.apply(c)?;
                a.ensemble.apply(c);
                Ok(())
            })?;
            output = output.or(cfg.output.clone());
            let spec = cfg.ensemble_spec(effective_seed(cli.seed, &cfg)?)?;
            rabi(&spec, a)?
        }
        Command::Ramsey(a) => {
            let cfg = configure(cfg_path, |c| {
                a.field.apply(c)?;
                a.ensemble.apply(c);
                Ok(())
            })?;
            output = output.or(cfg.output.clone());
            let spec = cfg.ensemble_spec(effective_seed(cli.seed, &cfg)?)?;
            ramsey(&spec, a)?
        }
        Command::Hahn(a) => {
            let cfg = configure(cfg_path, |c| {
                a.field.apply(c)?;
                a.ensemble.apply(c);
                if let Some(d) = a.detection {
                    c.ensemble.detection = match d {
                        DetectionArg::Ensemble => "ensemble",
                        DetectionArg::MaxMagnitude => "max-magnitude",
                    }
                    .into();
                }
                if let Some(v) = a.shots {
                    c.ensemble.shots = v;
                }
                if a.t2_s.is_some() {
                    c.noise.t2_s = a.t2_s;
                }
                if let Some(v) = a.stretch_n {
                    c.noise.stretching_n = v;
                }
                Ok(())
            })?;
            output = output.or(cfg.output.clone());
            let spec = cfg.ensemble_spec(effective_seed(cli.seed, &cfg)?)?;
            hahn(&spec, a)?
        }
        Command::Fit(a) => fit(a)?,
        Command::Parse(a) => parse(a)?,
        Command::EstimateField(a) => {
            let cfg = configure(cfg_path, |_| Ok(()))?;
            let b = spin::estimate_field_from_splitting(a.splitting_khz, &cfg.spin_system())?;
            Report {
                text: format!("{b:.3} µT\n"),
                ..Report::default()
            }
        }
    };
    Ok((report, output))
}

fn levels(cfg: &RunConfig, a: &LevelsArgs) -> Result<Report, CliError> {
    need(a.bmax_mt > 0.0 && a.bmax_mt.is_finite(), || {
        format!("--bmax-mt must be positive, got {}", a.bmax_mt)
    })?;
    need(a.points >= 2, || "--points must be at least 2".into())?;
    let sys = cfg.spin_system();
    let axis = cfg.b0().axis();
    let mut t = Table::new([
        "b0_mt",
        "e_s_mhz",
        "e_tminus_mhz",
        "e_tzero_mhz",
        "e_tplus_mhz",
    ]);
    for b in linspace(0.0, a.bmax_mt, a.points) {
        let field = donorsim::spin::FieldVector::from_vector(axis * (b * 1e3));
        let eig = spin::solve(&sys, &field)?;
        let mut row = vec![b];
        row.extend(LevelLabel::ALL.map(|l| eig.energy(l)));
        t.push(row);
    }
    Ok(Report::table(t))
}

fn rf(cfg: &RunConfig, a: &RfArgs) -> Result<Report, CliError> {
    let sys = cfg.spin_system();
    let b0 = cfg.b0();
    let eig = spin::solve(&sys, &b0)?;
    let freqs = Transition::ALL.map(|t| eig.energy(t.upper()) - eig.energy(LevelLabel::S));
    let lo = freqs.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = freqs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let fmin = a.fmin_mhz.unwrap_or(lo - 0.1);
    let fmax = a.fmax_mhz.unwrap_or(hi + 0.1);
    need(fmax > fmin, || {
        format!("empty frequency range [{fmin}, {fmax}] MHz")
    })?;
    need(a.points >= 2, || "--points must be at least 2".into())?;
    let grid = linspace(fmin, fmax, a.points);
    let s = rf_spectrum(&sys, &b0, &cfg.b1_direction(), &grid, &cfg.rf_config())?;
    let t = Table::from_columns(
        &[
            "frequency_mhz",
            "total",
            "s_tminus",
            "s_tzero",
            "s_tplus",
            "internal",
        ],
        &[
            &s.frequency,
            &s.total,
            &s.lines[0],
            &s.lines[1],
            &s.lines[2],
            &s.internal,
        ],
    );
    Ok(Report::table(t))
}

fn optical(cfg: &RunConfig, a: &OpticalArgs) -> Result<Report, CliError> {
    let scan = cfg.optical_scan();
    let lo = scan.line_s_center.min(scan.line_t_center);
    let hi = scan.line_s_center.max(scan.line_t_center);
    let min = a.min_wn.unwrap_or(lo - 0.01);
    let max = a.max_wn.unwrap_or(hi + 0.01);
    need(max > min, || {
        format!("empty scan range [{min}, {max}] cm⁻¹")
    })?;
    need(a.points >= 2, || "--points must be at least 2".into())?;
    let setting = match a.pump {
        PumpArg::Off => PumpSetting::Off,
        PumpArg::OnT => PumpSetting::OnT,
        PumpArg::OnS => PumpSetting::OnS,
    };
    let grid = linspace(min, max, a.points);
    let s = optical_spectrum(&grid, &scan, &cfg.pump_config(), setting)?;
    let t = Table::from_columns(
        &[
            "wavenumber_cm1",
            "signal_per_s",
            "singlet_per_s",
            "triplet_per_s",
        ],
        &[&s.trace.grid, &s.trace.values, &s.singlet, &s.triplet],
    );
    Ok(Report {
        table: Some(t),
        text: String::new(),
        notes: s
            .warnings
            .into_iter()
            .map(|w| format!("warning: {w}"))
            .collect(),
    })
}

/// Nominal π-pulse length from the drive coupling.
fn nominal_pi(spec: &EnsembleSpec) -> Result<f64, CliError> {
    let omega = spec.two_level_params()?.omega();
    need(omega > 0.0, || {
        "zero Rabi frequency: B1 does not drive this line".into()
    })?;
    Ok(PI / omega)
}

fn rabi(spec: &EnsembleSpec, a: &RabiArgs) -> Result<Report, CliError> {
    need(a.points >= 3, || "--points must be at least 3".into())?;
    let max = match a.max_length_s {
        Some(v) => v,
        None => 4.0 * nominal_pi(spec)?,
    };
    need(max > 0.0 && max.is_finite(), || {
        format!("--max-length-s must be positive, got {max}")
    })?;
    let lengths = linspace(0.0, max, a.points);
    let curve = rabi_experiment(spec, &lengths)?;
    let mut notes = Vec::new();
    if let Some(tp) = curve.first_maximum() {
        notes.push(format!(
            "first maximum at {tp:e} s (Ω/2π = {:.6e} Hz)",
            0.5 / tp
        ));
    }
    Ok(Report {
        table: Some(Table::from_columns(
            &["length_s", "transfer"],
            &[&curve.lengths, &curve.transfer],
        )),
        text: String::new(),
        notes,
    })
}

fn ramsey(spec: &EnsembleSpec, a: &RamseyArgs) -> Result<Report, CliError> {
    need(a.points >= 2, || "--points must be at least 2".into())?;
    need(a.tau_max_s > 0.0 && a.tau_max_s.is_finite(), || {
        format!("--tau-max-s must be positive, got {}", a.tau_max_s)
    })?;
    let taus = linspace(0.0, a.tau_max_s, a.points);
    let curve = ramsey_experiment(spec, &taus)?;
    Ok(Report::table(Table::from_columns(
        &["tau_s", "transfer"],
        &[&curve.tau, &curve.transfer],
    )))
}

fn load_sequence(path: &Path, symbol: &str) -> Result<donorsim::program::PulseProgram, CliError> {
    let text = read_input(path)?;
    let ast =
        dsl::parse(&text).map_err(|e| CliError::Validation(format!("{}:{e}", path.display())))?;
    let program = dsl::compile(&ast, &HashMap::new(), BindingMode::AllowSymbolic)
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    need(program.symbols().iter().any(|s| s == symbol), || {
        format!(
            "{}: sequence has no delay symbol '{symbol}'",
            path.display()
        )
    })?;
    Ok(program)
}

fn hahn(spec: &EnsembleSpec, a: &HahnArgs) -> Result<Report, CliError> {
    need(a.points >= 1, || "--points must be at least 1".into())?;
    need(
        a.tau_min_s > 0.0 && a.tau_max_s >= a.tau_min_s && a.tau_max_s.is_finite(),
        || {
            format!(
                "need 0 < --tau-min-s ≤ --tau-max-s, got {} and {}",
                a.tau_min_s, a.tau_max_s
            )
        },
    )?;
    let taus = if a.log {
        logspace(a.tau_min_s, a.tau_max_s, a.points)
    } else {
        linspace(a.tau_min_s, a.tau_max_s, a.points)
    };
    let program = match &a.sequence {
        Some(p) => load_sequence(p, &a.symbol)?,
        None => donorsim::program::PulseProgram::hahn_echo(),
    };
    let mut spec = spec.clone();
    let mut notes = Vec::new();
    if spec.pulse_mode == PulseMode::Finite && spec.pi_pulse.is_none() {
        let nominal = nominal_pi(&spec)?;
        let tp = calibrate_pi_pulse(&spec, &linspace(0.0, 3.0 * nominal, 241))?;
        notes.push(format!("calibrated π pulse: {tp:e} s"));
        spec.pi_pulse = Some(tp);
    }
    let series = echo_experiment(&spec, &program, &a.symbol, &taus)?;
    let shots: Vec<f64> = series.shots.iter().map(|&s| s as f64).collect();
    Ok(Report {
        table: Some(Table::from_columns(
            &["tau_s", "echo", "shots"],
            &[&series.tau, &series.signal, &shots],
        )),
        text: String::new(),
        notes,
    })
}

/// Local maxima of `y` sorted by height, each with a half-maximum width estimate.
fn peak_guesses(x: &[f64], y: &[f64], k: usize, baseline: f64) -> Vec<Peak> {
    let mut idx: Vec<usize> = (1..y.len().saturating_sub(1))
        .filter(|&i| y[i] >= y[i - 1] && y[i] > y[i + 1])
        .collect();
    idx.sort_by(|&a, &b| y[b].total_cmp(&y[a]));
    idx.truncate(k);
    let dx = (x[x.len() - 1] - x[0]) / (x.len() - 1) as f64;
    let mut out: Vec<Peak> = idx
        .into_iter()
        .map(|i| {
            let half = baseline + (y[i] - baseline) / 2.0;
            let mut l = i;
            while l > 0 && y[l] > half {
                l -= 1;
            }
            let mut r = i;
            while r + 1 < y.len() && y[r] > half {
                r += 1;
            }
            Peak {
                center: x[i],
                width: (x[r] - x[l]).max(2.0 * dx),
                amplitude: y[i] - baseline,
            }
        })
        .collect();
    out.sort_by(|a, b| a.center.total_cmp(&b.center));
    out
}

fn fit_table(fit: &FitResult, rename: impl Fn(&str) -> String) -> Table {
    let mut names = Vec::new();
    let mut row = Vec::new();
    for ((n, p), e) in fit.names.iter().zip(&fit.params).zip(&fit.std_errors) {
        let n = rename(n);
        names.push(format!("{n}_se"));
        names.insert(names.len() - 1, n);
        row.push(*p);
        row.push(*e);
    }
    names.push("rss".into());
    row.push(fit.rss);
    let mut t = Table::new(names);
    t.push(row);
    t
}

fn fit(a: &FitArgs) -> Result<Report, CliError> {
    let data = read_csv(&a.input)?;
    let pick = |name: &Option<String>, default: usize| -> Result<Vec<f64>, CliError> {
        match name {
            Some(n) => data.column(n).ok_or_else(|| {
                CliError::Validation(format!("{}: no column '{n}'", a.input.display()))
            }),
            None => {
                let n = data.columns.get(default).ok_or_else(|| {
                    CliError::Validation(format!(
                        "{}: needs at least two columns",
                        a.input.display()
                    ))
                })?;
                Ok(data.column(n).expect("column exists"))
            }
        }
    };
    let x = pick(&a.x, 0)?;
    let y = pick(&a.y, 1)?;
    let report = match a.model {
        FitModel::StretchedExp => {
            let series =
                DecaySeries::from_points(x, y).map_err(|e| CliError::Validation(e.to_string()))?;
            let mut guess = StretchedExpGuess::from_series(&series);
            if let Some(n) = a.fix_n {
                guess.n = n;
                guess.fix_n = true;
            }
            let fit = fit_stretched_exp(&series, &guess)?;
            let mut r = Report::table(fit_table(&fit, |n| {
                if n == "t2" {
                    "t2_s".into()
                } else {
                    n.into()
                }
            }));
            r.notes = fit.diagnostics.clone();
            r
        }
        FitModel::Peaks => {
            need(a.peaks >= 1, || "--peaks must be at least 1".into())?;
            need(x.len() >= 3, || "need at least 3 points".into())?;
            let baseline = y.iter().cloned().fold(f64::INFINITY, f64::min);
            let guesses = peak_guesses(&x, &y, a.peaks, baseline);
            need(guesses.len() == a.peaks, || {
                format!("found {} local maxima, need {}", guesses.len(), a.peaks)
            })?;
            let shape = match a.shape {
                ShapeArg::Lorentzian => PeakShape::Lorentzian,
                ShapeArg::Gaussian => PeakShape::Gaussian,
            };
            let fit = fit_peaks(&x, &y, shape, &guesses, baseline)?;
            let mut r = Report::table(fit_table(&fit, str::to_string));
            r.notes = fit.diagnostics.clone();
            r
        }
    };
    Ok(report)
}

fn parse(a: &ParseArgs) -> Result<Report, CliError> {
    let text = read_input(&a.file)?;
    let name = a.file.display();
    let asts = dsl::parse_all(&text).map_err(|e| CliError::Validation(format!("{name}:{e}")))?;
    let mut report = Report::default();
    let mut errors = Vec::new();
    for ast in &asts {
        for d in dsl::validate(ast) {
            match d.severity {
                Severity::Error => errors.push(format!("{name}:{d}")),
                Severity::Warning => report.notes.push(format!("{name}:{d}")),
            }
        }
        report.text.push_str(&dsl::pretty_print(ast));
    }
    if !errors.is_empty() {
        return Err(CliError::Validation(errors.join("\n")));
    }
    Ok(report)
}
