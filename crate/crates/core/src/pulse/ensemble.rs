//! Ensemble-averaged Rabi, Ramsey and Hahn experiments.
//!
//! Each member draws its own frozen detuning and optional internal field from a ChaCha8
//! stream keyed by `(seed, member)`, so results do not depend on how rayon splits the work.
//! Member results are reduced in index order.

use std::f64::consts::PI;

use nalgebra::Vector3;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{StandardNormal, UnitSphere};
use rayon::prelude::*;

use super::ou::OuProcess;
use super::two_level::{
    event_times, run_sequence, MemberEnvironment, PhaseTrack, PulseMode, TwoLevelParams,
};
use super::PulseError;
use crate::fit::{minimize, LmOptions};
use crate::program::{Event, PulseProgram};
use crate::series::DecaySeries;
use crate::spin::{self, FieldVector, LevelLabel, SpinSystem, Transition};

/// Shots per τ in maximum-magnitude mode unless configured otherwise.
pub const DEFAULT_MAX_MAGNITUDE_SHOTS: usize = 100;

const NOISE_STREAM: u64 = 1 << 62;
const COMMON_NOISE_STREAM: u64 = 1 << 63;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    /// Gaussian frozen detuning per member (kHz).
    pub static_detuning_sigma: f64,
    /// OU field noise along B₀ (µT).
    pub ou_sigma: f64,
    /// OU correlation time (s).
    pub ou_tau_c: f64,
    pub internal_field_fraction: f64,
    /// µT.
    pub internal_field_magnitude: f64,
    /// Optional multiplicative exp(−(2τ/T₂)ⁿ) envelope (s).
    pub phenomenological_t2: Option<f64>,
    pub stretching_n: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel {
            static_detuning_sigma: 0.0,
            ou_sigma: 0.0,
            ou_tau_c: 1e-3,
            internal_field_fraction: 0.0,
            internal_field_magnitude: 6.0,
            phenomenological_t2: None,
            stretching_n: 1.0,
        }
    }
}

impl NoiseModel {
    pub fn validate(&self) -> Result<(), PulseError> {
        let bad = |what: &str, v: f64| {
            Err(PulseError::InvalidInput(format!(
                "{what} = {v} is out of range"
            )))
        };
        for (what, v) in [
            ("static_detuning_sigma", self.static_detuning_sigma),
            ("ou_sigma", self.ou_sigma),
            ("internal_field_magnitude", self.internal_field_magnitude),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(what, v);
            }
        }
        if !(self.ou_tau_c > 0.0 && self.ou_tau_c.is_finite()) {
            return bad("ou_tau_c", self.ou_tau_c);
        }
        if !(0.0..=1.0).contains(&self.internal_field_fraction) {
            return bad("internal_field_fraction", self.internal_field_fraction);
        }
        if let Some(t2) = self.phenomenological_t2 {
            if !(t2 > 0.0 && t2.is_finite()) {
                return bad("phenomenological_t2", t2);
            }
        }
        if !(self.stretching_n > 0.0 && self.stretching_n.is_finite()) {
            return bad("stretching_n", self.stretching_n);
        }
        Ok(())
    }

    /// exp(−(2τ/T₂)ⁿ), or 1 without a phenomenological T₂.
    pub fn envelope(&self, tau: f64) -> f64 {
        match self.phenomenological_t2 {
            Some(t2) => (-(2.0 * tau / t2).powf(self.stretching_n)).exp(),
            None => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Detection {
    /// Average of the phase-cycled echo over independent members, each with its own
    /// noise history.
    #[default]
    Ensemble,
    /// Every shot averages all members under one common field-noise history; the point
    /// estimate is the largest |echo| over `shots` shots.
    MaxMagnitude { shots: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSpec {
    pub sys: SpinSystem,
    pub transition: Transition,
    /// Static field (µT).
    pub b0: FieldVector,
    /// Drive direction; normalized on use.
    pub b1_direction: Vector3<f64>,
    /// mT.
    pub b1_amplitude: f64,
    /// Transition minus RF frequency (kHz).
    pub rf_detuning: f64,
    pub n_members: usize,
    pub seed: u64,
    pub noise: NoiseModel,
    pub pulse_mode: PulseMode,
    /// Calibrated π-pulse length (s) for pulses without explicit durations.
    pub pi_pulse: Option<f64>,
    pub detection: Detection,
    /// Constant added to every readout area.
    pub readout_offset: f64,
}

impl Default for EnsembleSpec {
    fn default() -> Self {
        EnsembleSpec {
            sys: SpinSystem::default(),
            transition: Transition::SToTZero,
            b0: FieldVector::ZERO,
            b1_direction: Vector3::z(),
            b1_amplitude: 2e-3,
            rf_detuning: 0.0,
            n_members: 1000,
            seed: 0,
            noise: NoiseModel::default(),
            pulse_mode: PulseMode::Hard,
            pi_pulse: None,
            detection: Detection::Ensemble,
            readout_offset: 0.0,
        }
    }
}

impl EnsembleSpec {
    /// Places B₀ (µT) on ẑ and B₁ parallel or perpendicular to it.
    pub fn with_geometry(mut self, b0_ut: f64, b1_parallel: bool) -> Self {
        self.b0 = FieldVector::along_z(b0_ut);
        self.b1_direction = if b1_parallel {
            Vector3::z()
        } else {
            Vector3::x()
        };
        self
    }

    pub fn validate(&self) -> Result<(), PulseError> {
        self.sys.validate()?;
        self.noise.validate()?;
        if self.n_members == 0 {
            return Err(PulseError::InvalidInput(
                "n_members must be at least 1".into(),
            ));
        }
        if !self.b0.is_finite() {
            return Err(PulseError::InvalidInput("non-finite B0".into()));
        }
        let n = self.b1_direction.norm();
        if !(n > 0.0 && n.is_finite()) {
            return Err(PulseError::InvalidInput(
                "B1 direction must be non-zero".into(),
            ));
        }
        if !(self.b1_amplitude >= 0.0 && self.b1_amplitude.is_finite()) {
            return Err(PulseError::InvalidInput(
                "B1 amplitude must be non-negative".into(),
            ));
        }
        if !self.rf_detuning.is_finite() || !self.readout_offset.is_finite() {
            return Err(PulseError::InvalidInput(
                "non-finite detuning or offset".into(),
            ));
        }
        if let Some(tp) = self.pi_pulse {
            if !(tp > 0.0 && tp.is_finite()) {
                return Err(PulseError::InvalidInput(format!("pi pulse length {tp} s")));
            }
        }
        if let Detection::MaxMagnitude { shots: 0 } = self.detection {
            return Err(PulseError::InvalidInput(
                "max-magnitude mode needs shots ≥ 1".into(),
            ));
        }
        Ok(())
    }

    /// Line frequency and drive coupling at the nominal B₀.
    pub fn two_level_params(&self) -> Result<TwoLevelParams, PulseError> {
        let eig = spin::solve(&self.sys, &self.b0)?;
        let upper = self.transition.upper();
        let u = self.b1_direction.normalize();
        Ok(TwoLevelParams {
            transition_frequency: eig.energy(upper) - eig.energy(LevelLabel::S),
            rabi_coupling: spin::coupling(&eig, &self.sys, LevelLabel::S, upper, &u),
            b1_amplitude: self.b1_amplitude,
            detuning_offset: self.rf_detuning,
        })
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }

    /// Frozen detuning (kHz) and field magnitude (µT) of one member.
    fn member_static(&self, member: usize) -> (f64, f64) {
        let mut rng = self.rng(member as u64);
        let z: f64 = rng.sample(StandardNormal);
        let u: f64 = rng.random();
        let dir: [f64; 3] = rng.sample(UnitSphere);
        let b0 = self.b0.magnitude();
        let mut detuning = self.noise.static_detuning_sigma * z;
        let mut field = b0;
        if u < self.noise.internal_field_fraction {
            let extra = Vector3::from(dir) * self.noise.internal_field_magnitude;
            field = (self.b0.as_vector() + extra).norm();
            detuning += 1e3
                * (self.transition.frequency_at(&self.sys, field)
                    - self.transition.frequency_at(&self.sys, b0));
        }
        (detuning, field)
    }

    /// Pulses without explicit durations take their length from the calibrated π pulse.
    fn prepare(&self, events: Vec<Event>) -> Vec<Event> {
        let Some(tp) = self.pi_pulse else {
            return events;
        };
        events
            .into_iter()
            .map(|e| match e {
                Event::Pulse(mut p) if p.duration.is_none() => {
                    p.duration = Some(p.angle / PI * tp);
                    Event::Pulse(p)
                }
                other => other,
            })
            .collect()
    }
}

/// Field-noise history sampled at fixed times: cumulative ∫δB and ∫δB².
struct FieldPath {
    times: Vec<f64>,
    linear: Vec<f64>,
    quadratic: Vec<f64>,
}

fn sample_field_path(spec: &EnsembleSpec, stream: u64, times: &[f64]) -> FieldPath {
    let ou = OuProcess::new(spec.noise.ou_sigma, spec.noise.ou_tau_c);
    let mut rng = spec.rng(stream);
    let mut x = ou.stationary(&mut rng);
    let (mut lin, mut quad) = (0.0, 0.0);
    let mut prev_t = 0.0;
    let mut out = FieldPath {
        times: Vec::with_capacity(times.len() + 1),
        linear: Vec::with_capacity(times.len() + 1),
        quadratic: Vec::with_capacity(times.len() + 1),
    };
    out.times.push(0.0);
    out.linear.push(0.0);
    out.quadratic.push(0.0);
    for &t in times.iter().filter(|&&t| t > 0.0) {
        let h = t - prev_t;
        let (nx, integral) = ou.step(x, h, &mut rng);
        lin += integral;
        quad += 0.5 * h * (x * x + nx * nx);
        x = nx;
        prev_t = t;
        out.times.push(t);
        out.linear.push(lin);
        out.quadratic.push(quad);
    }
    out
}

impl FieldPath {
    /// Cumulative phase for a line with field derivatives d1 (kHz/µT) and d2 (kHz/µT²).
    fn phase_track(&self, d1: f64, d2: f64) -> PhaseTrack {
        let k = 2.0 * PI * 1e3;
        PhaseTrack {
            times: self.times.clone(),
            phase: self
                .linear
                .iter()
                .zip(&self.quadratic)
                .map(|(l, q)| k * (d1 * l + 0.5 * d2 * q))
                .collect(),
        }
    }
}

/// Per-shot receiver weights: −cos of the total cycled phase offset.
fn receiver_weights(program: &PulseProgram) -> Vec<f64> {
    (0..program.shot_count())
        .map(|k| {
            let offset: f64 = program
                .cycles
                .iter()
                .filter(|c| !c.offsets.is_empty())
                .map(|c| c.offsets[k % c.offsets.len()])
                .sum();
            -offset.cos()
        })
        .collect()
}

/// Bound, prepared shots for every grid value.
type ShotTable = Vec<Vec<Vec<Event>>>;

struct Plan {
    params: TwoLevelParams,
    shots: ShotTable,
    weights: Vec<f64>,
    times: Vec<f64>,
}

fn plan<B>(spec: &EnsembleSpec, build: B, grid: &[f64], mode: PulseMode) -> Result<Plan, PulseError>
where
    B: Fn(f64) -> PulseProgram,
{
    spec.validate()?;
    validate_grid(grid)?;
    let params = spec.two_level_params()?;
    let bound: Vec<PulseProgram> = grid.iter().map(|&v| build(v)).collect();
    if let Some(s) = bound.first().and_then(|p| p.symbols().into_iter().next()) {
        return Err(PulseError::UnboundSymbol(s));
    }
    let shots: ShotTable = bound
        .iter()
        .map(|p| {
            (0..p.shot_count())
                .map(|k| spec.prepare(p.shot(k)))
                .collect()
        })
        .collect();
    let mut times = Vec::new();
    for per_point in &shots {
        for events in per_point {
            for (t0, t1) in event_times(events, &params, mode)? {
                times.push(t0);
                times.push(t1);
            }
        }
    }
    times.sort_by(f64::total_cmp);
    times.dedup();
    Ok(Plan {
        params,
        shots,
        weights: receiver_weights(&bound[0]),
        times,
    })
}

fn validate_grid(grid: &[f64]) -> Result<(), PulseError> {
    if grid.is_empty() {
        return Err(PulseError::InvalidInput("empty grid".into()));
    }
    if grid.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(PulseError::InvalidInput(
            "grid values must be finite and ≥ 0".into(),
        ));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(PulseError::InvalidInput(
            "grid must be strictly increasing".into(),
        ));
    }
    Ok(())
}

/// One member's environment given its statics and an optional noise history.
fn environment(
    spec: &EnsembleSpec,
    member: usize,
    path: Option<&FieldPath>,
) -> Result<MemberEnvironment, PulseError> {
    let (static_detuning, field) = spec.member_static(member);
    let noise = match path {
        Some(p) => {
            let (d1, d2) = spin::clock_sensitivity(&spec.sys, spec.transition, field)?;
            Some(p.phase_track(d1, d2))
        }
        None => None,
    };
    Ok(MemberEnvironment {
        static_detuning,
        noise,
    })
}

/// Phase-cycled echo of one member at the selected grid points.
fn cycled_echo(
    spec: &EnsembleSpec,
    plan: &Plan,
    env: &MemberEnvironment,
    points: &[usize],
    mode: PulseMode,
) -> Result<Vec<f64>, PulseError> {
    let k = plan.weights.len() as f64;
    points
        .iter()
        .map(|&i| {
            let mut acc = 0.0;
            for (events, w) in plan.shots[i].iter().zip(&plan.weights) {
                let p = run_sequence(events, &plan.params, env, mode)?;
                acc += w * (p.t + spec.readout_offset - 0.5);
            }
            Ok(2.0 / k * acc)
        })
        .collect()
}

fn ordered_mean(rows: Vec<Vec<f64>>, len: usize) -> Vec<f64> {
    let n = rows.len() as f64;
    let mut sum = vec![0.0; len];
    for row in &rows {
        for (s, v) in sum.iter_mut().zip(row) {
            *s += v;
        }
    }
    sum.into_iter().map(|s| s / n).collect()
}

/// Runs a phase-cycled echo program over `grid` values of `symbol`.
pub fn echo_experiment(
    spec: &EnsembleSpec,
    program: &PulseProgram,
    symbol: &str,
    grid: &[f64],
) -> Result<DecaySeries, PulseError> {
    let mode = spec.pulse_mode;
    let plan = plan(spec, |v| program.with(symbol, v), grid, mode)?;
    let noisy = spec.noise.ou_sigma > 0.0;
    let all: Vec<usize> = (0..grid.len()).collect();
    let (signal, shots) = match spec.detection {
        Detection::Ensemble => {
            let rows = (0..spec.n_members)
                .into_par_iter()
                .map(|m| {
                    let path = noisy
                        .then(|| sample_field_path(spec, NOISE_STREAM | m as u64, &plan.times));
                    let env = environment(spec, m, path.as_ref())?;
                    cycled_echo(spec, &plan, &env, &all, mode)
                })
                .collect::<Result<Vec<_>, _>>()?;
            let per_point = spec.n_members * plan.weights.len();
            (ordered_mean(rows, grid.len()), vec![per_point; grid.len()])
        }
        Detection::MaxMagnitude { shots } => {
            let values = (0..grid.len() * shots)
                .into_par_iter()
                .map(|s| {
                    let point = s / shots;
                    let path = noisy.then(|| {
                        sample_field_path(spec, COMMON_NOISE_STREAM | s as u64, &plan.times)
                    });
                    let mut acc = 0.0;
                    for m in 0..spec.n_members {
                        let env = environment(spec, m, path.as_ref())?;
                        acc += cycled_echo(spec, &plan, &env, &[point], mode)?[0];
                    }
                    Ok(acc / spec.n_members as f64)
                })
                .collect::<Result<Vec<f64>, PulseError>>()?;
            let est = values
                .chunks(shots)
                .map(max_magnitude_estimate)
                .collect::<Result<Vec<_>, _>>()?;
            (est, vec![shots; grid.len()])
        }
    };
    let signal = grid
        .iter()
        .zip(signal)
        .map(|(&tau, s)| s * spec.noise.envelope(tau))
        .collect();
    DecaySeries::new(grid.to_vec(), signal, shots)
        .map_err(|e| PulseError::InvalidInput(e.to_string()))
}

/// `±π/2 : τ : π : τ : π/2` with the first pulse cycled by 180°.
pub fn hahn_experiment(spec: &EnsembleSpec, taus: &[f64]) -> Result<DecaySeries, PulseError> {
    echo_experiment(spec, &PulseProgram::hahn_echo(), "tau", taus)
}

/// Largest |readout| over the shots at one τ.
pub fn max_magnitude_estimate(shots: &[f64]) -> Result<f64, PulseError> {
    if shots.is_empty() {
        return Err(PulseError::InvalidInput("no shots".into()));
    }
    if shots.iter().any(|v| !v.is_finite()) {
        return Err(PulseError::InvalidInput("non-finite shot value".into()));
    }
    Ok(shots.iter().fold(0.0, |m: f64, v| m.max(v.abs())))
}

/// T-level population transfer versus a swept variable.
fn transfer_curve<B>(
    spec: &EnsembleSpec,
    build: B,
    grid: &[f64],
    mode: PulseMode,
) -> Result<Vec<f64>, PulseError>
where
    B: Fn(f64) -> PulseProgram,
{
    let plan = plan(spec, build, grid, mode)?;
    let noisy = spec.noise.ou_sigma > 0.0;
    let rows = (0..spec.n_members)
        .into_par_iter()
        .map(|m| {
            let path = noisy.then(|| sample_field_path(spec, NOISE_STREAM | m as u64, &plan.times));
            let env = environment(spec, m, path.as_ref())?;
            plan.shots
                .iter()
                .map(|shots| run_sequence(&shots[0], &plan.params, &env, mode).map(|p| p.t))
                .collect::<Result<Vec<f64>, _>>()
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ordered_mean(rows, grid.len()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RabiCurve {
    /// Pulse lengths (s).
    pub lengths: Vec<f64>,
    /// Ensemble-mean T population.
    pub transfer: Vec<f64>,
}

impl RabiCurve {
    /// Pulse length of the first local maximum, refined by a parabola through the
    /// neighbouring points.
    pub fn first_maximum(&self) -> Option<f64> {
        let y = &self.transfer;
        let x = &self.lengths;
        let k = (1..y.len().saturating_sub(1)).find(|&k| y[k] >= y[k - 1] && y[k] > y[k + 1])?;
        let (x0, x1, x2) = (x[k - 1], x[k], x[k + 1]);
        let (y0, y1, y2) = (y[k - 1], y[k], y[k + 1]);
        let denom = (x0 - x1) * (x0 - x2) * (x1 - x2);
        let a = (x2 * (y1 - y0) + x1 * (y0 - y2) + x0 * (y2 - y1)) / denom;
        let b = (x2 * x2 * (y0 - y1) + x1 * x1 * (y2 - y0) + x0 * x0 * (y1 - y2)) / denom;
        if a < 0.0 {
            Some(-b / (2.0 * a))
        } else {
            Some(x1)
        }
    }

    /// Ω = π / t_max (rad/s).
    pub fn omega_from_first_maximum(&self) -> Option<f64> {
        self.first_maximum().map(|t| PI / t)
    }

    /// Least-squares Ω (rad/s) for a·sin²(Ωt/2), started from the first maximum.
    pub fn fit_omega(&self) -> Result<f64, PulseError> {
        let omega0 = self
            .omega_from_first_maximum()
            .ok_or_else(|| PulseError::InvalidInput("no maximum in Rabi curve".into()))?;
        let residuals = |p: &[f64]| -> Vec<f64> {
            self.lengths
                .iter()
                .zip(&self.transfer)
                .map(|(t, y)| p[0] * (p[1] * 1e6 * t / 2.0).sin().powi(2) - y)
                .collect()
        };
        let start = [1.0, omega0 * 1e-6];
        let out = minimize(&residuals, &start, &[0, 1], &LmOptions::default())
            .ok_or_else(|| PulseError::InvalidInput("Rabi fit failed".into()))?;
        Ok(out.params[1] * 1e6)
    }
}

/// Population transfer versus the length of one phase-0 pulse.
pub fn rabi_experiment(spec: &EnsembleSpec, lengths: &[f64]) -> Result<RabiCurve, PulseError> {
    let build = |t: f64| {
        let mut p = PulseProgram::new("rabi").pulse(PI, 0.0);
        if let Event::Pulse(pulse) = &mut p.events[0] {
            pulse.duration = Some(t);
        }
        p
    };
    let transfer = transfer_curve(spec, build, lengths, PulseMode::Finite)?;
    Ok(RabiCurve {
        lengths: lengths.to_vec(),
        transfer,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RamseyCurve {
    pub tau: Vec<f64>,
    pub transfer: Vec<f64>,
}

/// `π/2 : τ : π/2` population transfer versus τ.
pub fn ramsey_experiment(spec: &EnsembleSpec, taus: &[f64]) -> Result<RamseyCurve, PulseError> {
    let program = PulseProgram::ramsey();
    let transfer = transfer_curve(spec, |v| program.with("tau", v), taus, spec.pulse_mode)?;
    Ok(RamseyCurve {
        tau: taus.to_vec(),
        transfer,
    })
}

/// π-pulse length from the first maximum of a simulated Rabi curve.
pub fn calibrate_pi_pulse(spec: &EnsembleSpec, lengths: &[f64]) -> Result<f64, PulseError> {
    rabi_experiment(spec, lengths)?
        .first_maximum()
        .ok_or_else(|| PulseError::InvalidInput("Rabi grid does not reach a maximum".into()))
}
