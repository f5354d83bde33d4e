//! Full four-level driven dynamics under a cosine RF field, integrated with RK4 in the
//! interaction frame of H(B₀).

use std::f64::consts::PI;

use nalgebra::{Matrix4, Vector3, Vector4};
use num_complex::Complex64;

use super::PulseError;
use crate::program::{DelayTime, Event};
use crate::spin::{self, FieldVector, LevelLabel, SpinSystem};

/// Largest accepted step-doubling error per checked step.
pub const MAX_STEP_ERROR: f64 = 1e-8;

const CHECK_EVERY: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FourLevelDrive {
    /// mT.
    pub b1_amplitude: f64,
    pub b1_direction: Vector3<f64>,
    /// MHz.
    pub rf_frequency: f64,
    /// MHz/mT used to convert nominal angles into durations for pulses without one.
    pub nominal_coupling: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FourLevelPopulations {
    /// Indexed in label order S, T−, T0, T+.
    pub populations: [f64; 4],
}

impl FourLevelPopulations {
    pub fn get(&self, label: LevelLabel) -> f64 {
        self.populations[label as usize]
    }

    pub fn total(&self) -> f64 {
        self.populations.iter().sum()
    }
}

struct Frame {
    /// Level energies in rad/µs.
    energies: [f64; 4],
    /// Drive operator in the eigenbasis, rad/µs per unit cos.
    coupling: Matrix4<Complex64>,
    /// RF angular frequency, rad/µs.
    omega_rf: f64,
}

impl Frame {
    /// d/dt c = −i H_I(t) c with H_I = V(t) cos(ω t + φ) in the interaction picture.
    fn derivative(&self, t: f64, phi: f64, c: &Vector4<Complex64>) -> Vector4<Complex64> {
        let drive = (self.omega_rf * t + phi).cos();
        let rot: [Complex64; 4] =
            std::array::from_fn(|j| Complex64::from_polar(1.0, self.energies[j] * t));
        let mut out = Vector4::zeros();
        for j in 0..4 {
            let mut acc = Complex64::new(0.0, 0.0);
            for k in 0..4 {
                acc += self.coupling[(j, k)] * rot[k].conj() * c[k];
            }
            out[j] = Complex64::new(0.0, -drive) * rot[j] * acc;
        }
        out
    }

    fn rk4(&self, t: f64, h: f64, phi: f64, c: &Vector4<Complex64>) -> Vector4<Complex64> {
        let k1 = self.derivative(t, phi, c);
        let k2 = self.derivative(t + h / 2.0, phi, &(c + k1 * Complex64::new(h / 2.0, 0.0)));
        let k3 = self.derivative(t + h / 2.0, phi, &(c + k2 * Complex64::new(h / 2.0, 0.0)));
        let k4 = self.derivative(t + h, phi, &(c + k3 * Complex64::new(h, 0.0)));
        c + (k1 + (k2 + k3) * Complex64::new(2.0, 0.0) + k4) * Complex64::new(h / 6.0, 0.0)
    }
}

/// Evolves |S⟩ through a bound program under the full Hamiltonian plus a linearly
/// polarized drive, returning the populations of the four field eigenstates.
pub fn simulate_4level(
    events: &[Event],
    sys: &SpinSystem,
    b0: &FieldVector,
    drive: &FourLevelDrive,
) -> Result<FourLevelPopulations, PulseError> {
    let n = drive.b1_direction.norm();
    if !(n > 0.0 && n.is_finite()) {
        return Err(PulseError::InvalidInput(
            "B1 direction must be non-zero".into(),
        ));
    }
    if !(drive.b1_amplitude >= 0.0 && drive.b1_amplitude.is_finite())
        || !drive.rf_frequency.is_finite()
        || !(drive.nominal_coupling >= 0.0)
    {
        return Err(PulseError::InvalidInput(format!("invalid drive {drive:?}")));
    }
    let eig = spin::solve(sys, b0)?;
    let basis = eig.basis();
    let m = spin::zeeman_operator(sys, &(drive.b1_direction / n));
    let coupling = basis.adjoint() * m * basis * Complex64::new(2.0 * PI * drive.b1_amplitude, 0.0);
    let energies = eig.energies();
    let frame = Frame {
        energies: energies.map(|e| 2.0 * PI * e),
        coupling,
        omega_rf: 2.0 * PI * drive.rf_frequency,
    };
    // Fastest interaction-frame oscillation: level spread plus the RF carrier.
    let spread = energies.iter().cloned().fold(f64::MIN, f64::max)
        - energies.iter().cloned().fold(f64::MAX, f64::min);
    let f_max = (spread + drive.rf_frequency.abs()).max(sys.hyperfine_a.abs());
    let h_max = 1.0 / (50.0 * f_max);
    let omega_nominal = 2.0 * PI * drive.nominal_coupling * drive.b1_amplitude * 1e6;

    let mut c: Vector4<Complex64> = Vector4::zeros();
    c[LevelLabel::S as usize] = Complex64::new(1.0, 0.0);
    let mut t = 0.0;
    for e in events {
        match e {
            Event::Delay(DelayTime::Fixed(d)) => {
                if !(*d >= 0.0 && d.is_finite()) {
                    return Err(PulseError::InvalidInput(format!("delay {d} s")));
                }
                t += d * 1e6;
            }
            Event::Delay(DelayTime::Symbol(s)) => return Err(PulseError::UnboundSymbol(s.clone())),
            Event::Pulse(p) => {
                let duration = match p.duration {
                    Some(d) if d >= 0.0 && d.is_finite() => d,
                    Some(d) => {
                        return Err(PulseError::InvalidInput(format!("pulse duration {d} s")))
                    }
                    None if omega_nominal > 0.0 => p.angle / omega_nominal,
                    None => {
                        return Err(PulseError::InvalidInput(
                            "pulse without duration needs a non-zero nominal coupling".into(),
                        ))
                    }
                };
                let span = duration * 1e6;
                if span == 0.0 || drive.b1_amplitude == 0.0 {
                    t += span;
                    continue;
                }
                let steps = (span / h_max).ceil() as usize;
                let h = span / steps as f64;
                if h > h_max * (1.0 + 1e-12) {
                    return Err(PulseError::Integration(format!(
                        "step {h} µs exceeds limit {h_max} µs"
                    )));
                }
                for k in 0..steps {
                    let tk = t + k as f64 * h;
                    let next = frame.rk4(tk, h, p.phase, &c);
                    if k % CHECK_EVERY == 0 {
                        let half = frame.rk4(tk, h / 2.0, p.phase, &c);
                        let fine = frame.rk4(tk + h / 2.0, h / 2.0, p.phase, &half);
                        let err = (fine - next).norm();
                        if err > MAX_STEP_ERROR {
                            return Err(PulseError::Integration(format!(
                                "step error {err:.3e} exceeds {MAX_STEP_ERROR:e} at t = {tk} µs"
                            )));
                        }
                    }
                    c = next;
                }
                t += span;
            }
        }
    }
    Ok(FourLevelPopulations {
        populations: std::array::from_fn(|j| c[j].norm_sqr()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::program::PulseProgram;

    #[test]
    fn zero_amplitude_keeps_populations() {
        let sys = SpinSystem::default();
        let drive = FourLevelDrive {
            b1_amplitude: 0.0,
            b1_direction: Vector3::z(),
            rf_frequency: 117.53,
            nominal_coupling: 1.0,
        };
        let prog = PulseProgram::new("p").pulse(PI, 0.0);
        let mut events = prog.events.clone();
        if let Event::Pulse(p) = &mut events[0] {
            p.duration = Some(1e-5);
        }
        let out = simulate_4level(&events, &sys, &FieldVector::along_z(23.0), &drive).unwrap();
        assert_eq!(out.populations, [1.0, 0.0, 0.0, 0.0]);
    }
}
