//! Rotating-frame two-level dynamics on one S→T line.

use std::f64::consts::PI;

use nalgebra::{Matrix2, Vector2};
use num_complex::Complex64;

use super::PulseError;
use crate::program::{DelayTime, Event, Pulse};

/// Two-component amplitude vector: index 0 is S, index 1 the driven T level.
pub type Spinor = Vector2<Complex64>;

pub fn ground() -> Spinor {
    Spinor::new(Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoLevelParams {
    /// MHz.
    pub transition_frequency: f64,
    /// MHz/mT.
    pub rabi_coupling: f64,
    /// mT.
    pub b1_amplitude: f64,
    /// Transition minus RF frequency, kHz.
    pub detuning_offset: f64,
}

impl TwoLevelParams {
    /// Rabi angular frequency Ω (rad/s).
    pub fn omega(&self) -> f64 {
        2.0 * PI * self.rabi_coupling * 1e6 * self.b1_amplitude
    }

    /// Angular detuning (rad/s).
    pub fn detuning_angular(&self) -> f64 {
        2.0 * PI * 1e3 * self.detuning_offset
    }

    pub fn with_detuning(&self, detuning_khz: f64) -> Self {
        TwoLevelParams {
            detuning_offset: detuning_khz,
            ..*self
        }
    }

    pub fn validate(&self) -> Result<(), PulseError> {
        let ok = [
            self.transition_frequency,
            self.rabi_coupling,
            self.b1_amplitude,
            self.detuning_offset,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !ok || self.b1_amplitude < 0.0 || self.rabi_coupling < 0.0 {
            return Err(PulseError::InvalidInput(format!(
                "two-level parameters must be finite with non-negative coupling and B1: {self:?}"
            )));
        }
        Ok(())
    }
}

/// Time a pulse occupies: its explicit duration, or angle/Ω.
pub fn pulse_duration(pulse: &Pulse, params: &TwoLevelParams) -> Result<f64, PulseError> {
    match pulse.duration {
        Some(d) if d >= 0.0 && d.is_finite() => Ok(d),
        Some(d) => Err(PulseError::InvalidInput(format!("pulse duration {d} s"))),
        None => {
            let omega = params.omega();
            if omega > 0.0 {
                Ok(pulse.angle / omega)
            } else {
                Err(PulseError::InvalidInput(
                    "pulse without duration needs a non-zero Rabi frequency".into(),
                ))
            }
        }
    }
}

/// exp(−iθ n̂·σ/2) for a unit axis n̂.
pub fn rotation(theta: f64, n: [f64; 3]) -> Matrix2<Complex64> {
    let (s, c) = (theta / 2.0).sin_cos();
    let i = Complex64::i();
    let one = Complex64::new(1.0, 0.0);
    Matrix2::new(
        c * one - i * s * n[2],
        -i * s * Complex64::new(n[0], -n[1]),
        -i * s * Complex64::new(n[0], n[1]),
        c * one + i * s * n[2],
    )
}

/// Driven evolution for time `t` with Rabi frequency `omega`, phase `phi` and angular
/// detuning `delta`.
pub fn driven(omega: f64, phi: f64, delta: f64, t: f64) -> Matrix2<Complex64> {
    let eff = (omega * omega + delta * delta).sqrt();
    if eff == 0.0 || t == 0.0 {
        return Matrix2::identity();
    }
    rotation(
        eff * t,
        [
            omega * phi.cos() / eff,
            omega * phi.sin() / eff,
            delta / eff,
        ],
    )
}

/// Free precession through accumulated phase `phi` (rad).
pub fn free_precession(phi: f64) -> Matrix2<Complex64> {
    let h = Complex64::from_polar(1.0, -phi / 2.0);
    Matrix2::new(
        h,
        Complex64::new(0.0, 0.0),
        Complex64::new(0.0, 0.0),
        h.conj(),
    )
}

/// Applies a finite pulse using the params' detuning.
pub fn propagate_pulse(
    state: &Spinor,
    pulse: &Pulse,
    params: &TwoLevelParams,
) -> Result<Spinor, PulseError> {
    let t = pulse_duration(pulse, params)?;
    Ok(driven(params.omega(), pulse.phase, params.detuning_angular(), t) * state)
}

/// Applies a pulse as an instantaneous rotation by its nominal angle.
pub fn propagate_hard_pulse(state: &Spinor, pulse: &Pulse) -> Spinor {
    rotation(pulse.angle, [pulse.phase.cos(), pulse.phase.sin(), 0.0]) * state
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PulseMode {
    /// Instantaneous ideal rotations.
    #[default]
    Hard,
    /// Finite rectangular pulses with detuning active during the pulse.
    Finite,
}

impl std::str::FromStr for PulseMode {
    type Err = PulseError;
    fn from_str(s: &str) -> Result<Self, PulseError> {
        match s.trim().to_ascii_lowercase().as_str() {
            "hard" => Ok(PulseMode::Hard),
            "finite" => Ok(PulseMode::Finite),
            other => Err(PulseError::InvalidInput(format!(
                "unknown pulse mode '{other}' (expected hard or finite)"
            ))),
        }
    }
}

/// Cumulative dynamic phase Φ(t) (rad) sampled at increasing times.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PhaseTrack {
    pub times: Vec<f64>,
    pub phase: Vec<f64>,
}

impl PhaseTrack {
    /// Φ(t) by linear interpolation, held constant outside the sampled range.
    pub fn at(&self, t: f64) -> f64 {
        let n = self.times.len();
        if n == 0 {
            return 0.0;
        }
        if t <= self.times[0] {
            return self.phase[0];
        }
        if t >= self.times[n - 1] {
            return self.phase[n - 1];
        }
        let k = self.times.partition_point(|&x| x <= t);
        let (t0, t1) = (self.times[k - 1], self.times[k]);
        let (p0, p1) = (self.phase[k - 1], self.phase[k]);
        if t1 == t0 {
            p1
        } else {
            p0 + (p1 - p0) * (t - t0) / (t1 - t0)
        }
    }
}

/// What one ensemble member sees beyond the nominal parameters.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MemberEnvironment {
    /// Frozen detuning (kHz) added to the params' offset.
    pub static_detuning: f64,
    pub noise: Option<PhaseTrack>,
}

impl MemberEnvironment {
    fn dynamic_phase(&self, t0: f64, t1: f64) -> f64 {
        self.noise.as_ref().map_or(0.0, |n| n.at(t1) - n.at(t0))
    }
}

/// Populations in S and in the driven T level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoLevelPopulations {
    pub s: f64,
    pub t: f64,
}

impl TwoLevelPopulations {
    pub fn of(state: &Spinor) -> Self {
        TwoLevelPopulations {
            s: state[0].norm_sqr(),
            t: state[1].norm_sqr(),
        }
    }
}

/// Start and end time of every event, assuming execution from t = 0.
pub fn event_times(
    events: &[Event],
    params: &TwoLevelParams,
    mode: PulseMode,
) -> Result<Vec<(f64, f64)>, PulseError> {
    let mut t = 0.0;
    let mut out = Vec::with_capacity(events.len());
    for e in events {
        let d = match e {
            Event::Pulse(p) => match mode {
                PulseMode::Hard => 0.0,
                PulseMode::Finite => pulse_duration(p, params)?,
            },
            Event::Delay(DelayTime::Fixed(d)) => {
                if !(*d >= 0.0 && d.is_finite()) {
                    return Err(PulseError::InvalidInput(format!("delay {d} s")));
                }
                *d
            }
            Event::Delay(DelayTime::Symbol(s)) => return Err(PulseError::UnboundSymbol(s.clone())),
        };
        out.push((t, t + d));
        t += d;
    }
    Ok(out)
}

/// Runs one shot's events from `initial`, returning the final spinor.
pub fn evolve(
    initial: &Spinor,
    events: &[Event],
    params: &TwoLevelParams,
    env: &MemberEnvironment,
    mode: PulseMode,
) -> Result<Spinor, PulseError> {
    params.validate()?;
    let times = event_times(events, params, mode)?;
    let detuning = params.detuning_offset + env.static_detuning;
    let delta = 2.0 * PI * 1e3 * detuning;
    let mut psi = *initial;
    for (e, &(t0, t1)) in events.iter().zip(&times) {
        match e {
            Event::Pulse(p) => match mode {
                PulseMode::Hard => psi = propagate_hard_pulse(&psi, p),
                PulseMode::Finite => {
                    let d = t1 - t0;
                    let mean_dynamic = if d > 0.0 {
                        env.dynamic_phase(t0, t1) / d
                    } else {
                        0.0
                    };
                    psi = driven(params.omega(), p.phase, delta + mean_dynamic, d) * psi;
                }
            },
            Event::Delay(_) => {
                let phi = delta * (t1 - t0) + env.dynamic_phase(t0, t1);
                psi = free_precession(phi) * psi;
            }
        }
    }
    Ok(psi)
}

/// Runs one shot from S and returns the final populations.
pub fn run_sequence(
    events: &[Event],
    params: &TwoLevelParams,
    env: &MemberEnvironment,
    mode: PulseMode,
) -> Result<TwoLevelPopulations, PulseError> {
    evolve(&ground(), events, params, env, mode).map(|s| TwoLevelPopulations::of(&s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::program::PulseProgram;

    fn params() -> TwoLevelParams {
        TwoLevelParams {
            transition_frequency: 117.53,
            rabi_coupling: 13.9946,
            b1_amplitude: 1e-3,
            detuning_offset: 0.0,
        }
    }

    /// Scaling-and-squaring Taylor exponential of −iHt.
    fn expm(h: Matrix2<Complex64>, t: f64) -> Matrix2<Complex64> {
        let a = h * Complex64::new(0.0, -t);
        let mut k = 0;
        let mut scaled = a;
        while scaled.norm() > 0.1 {
            scaled /= Complex64::new(2.0, 0.0);
            k += 1;
        }
        let mut term = Matrix2::identity();
        let mut sum = Matrix2::identity();
        for n in 1..30 {
            term = term * scaled / Complex64::new(n as f64, 0.0);
            sum += term;
        }
        for _ in 0..k {
            sum = sum * sum;
        }
        sum
    }

    #[test]
    fn zero_duration_is_identity() {
        let p = Pulse {
            label: None,
            angle: PI,
            phase: 0.3,
            duration: Some(0.0),
        };
        let psi = Spinor::new(Complex64::new(0.6, 0.0), Complex64::new(0.0, 0.8));
        assert_eq!(propagate_pulse(&psi, &p, &params()).unwrap(), psi);
    }

    #[test]
    fn resonant_pi_pulse_inverts() {
        let p = Pulse {
            label: None,
            angle: PI,
            phase: 0.0,
            duration: None,
        };
        let out = propagate_pulse(&ground(), &p, &params()).unwrap();
        assert!((out[1].norm_sqr() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn detuned_pulse_matches_generalized_rabi_and_expm() {
        let pr = params();
        let omega = pr.omega();
        let pr = pr.with_detuning(omega / (2.0 * PI) / 1e3);
        let delta = pr.detuning_angular();
        let t = PI / omega;
        let p = Pulse {
            label: None,
            angle: PI,
            phase: 0.7,
            duration: Some(t),
        };
        let out = propagate_pulse(&ground(), &p, &pr).unwrap();
        let eff2 = omega * omega + delta * delta;
        let formula = omega * omega / eff2 * (eff2.sqrt() * t / 2.0).sin().powi(2);
        assert!((out[1].norm_sqr() - formula).abs() < 1e-10);
        assert!((out.norm() - 1.0).abs() < 1e-12);

        let c = Complex64::new;
        let h = Matrix2::new(
            c(delta / 2.0, 0.0),
            c(omega / 2.0 * 0.7f64.cos(), -omega / 2.0 * 0.7f64.sin()),
            c(omega / 2.0 * 0.7f64.cos(), omega / 2.0 * 0.7f64.sin()),
            c(-delta / 2.0, 0.0),
        );
        let reference = expm(h, t) * ground();
        assert!((reference - out).norm() < 1e-10);
    }

    #[test]
    fn empty_program_keeps_ground() {
        let pops = run_sequence(
            &[],
            &params(),
            &MemberEnvironment::default(),
            PulseMode::Hard,
        )
        .unwrap();
        assert_eq!((pops.s, pops.t), (1.0, 0.0));
    }

    #[test]
    fn zero_delay_echo_is_full_rotation() {
        let prog = PulseProgram::hahn_echo().with("tau", 0.0);
        let env = MemberEnvironment::default();
        let p0 = run_sequence(&prog.shot(0), &params(), &env, PulseMode::Finite).unwrap();
        let p1 = run_sequence(&prog.shot(1), &params(), &env, PulseMode::Finite).unwrap();
        assert!(p0.t < 1e-12, "{p0:?}");
        assert!((p1.t - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ramsey_fringes_follow_detuning() {
        let delta_khz = 3.0;
        let env = MemberEnvironment {
            static_detuning: delta_khz,
            noise: None,
        };
        for &tau in &[0.0, 1e-4, 2.7e-4, 1e-3] {
            let prog = PulseProgram::ramsey().with("tau", tau);
            let pops = run_sequence(&prog.events, &params(), &env, PulseMode::Hard).unwrap();
            let expect = 0.5 * (1.0 + (2.0 * PI * delta_khz * 1e3 * tau).cos());
            assert!(
                (pops.t - expect).abs() < 1e-12,
                "{tau}: {} vs {expect}",
                pops.t
            );
        }
    }

    #[test]
    fn unbound_delay_is_reported() {
        let prog = PulseProgram::ramsey();
        let err = run_sequence(
            &prog.events,
            &params(),
            &MemberEnvironment::default(),
            PulseMode::Hard,
        );
        assert_eq!(err, Err(PulseError::UnboundSymbol("tau".into())));
    }

    #[test]
    fn phase_track_interpolates() {
        let tr = PhaseTrack {
            times: vec![0.0, 1.0, 3.0],
            phase: vec![0.0, 2.0, 6.0],
        };
        assert_eq!(tr.at(2.0), 4.0);
        assert_eq!(tr.at(5.0), 6.0);
        assert_eq!(tr.at(1.0), 2.0);
    }
}
