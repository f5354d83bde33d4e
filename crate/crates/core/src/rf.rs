//! Continuous-wave RF spectra of the three S→T lines, with an optional subpopulation
//! seeing an extra internal field of fixed magnitude and random orientation.

use std::f64::consts::PI;

use nalgebra::Vector3;

use crate::spin::{self, FieldVector, LevelLabel, SpinError, SpinSystem, Transition};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RfSpectrumConfig {
    /// Lorentzian FWHM (kHz).
    pub linewidth: f64,
    pub internal_field_fraction: f64,
    /// µT.
    pub internal_field_magnitude: f64,
    /// Orientations averaged for the internal-field subpopulation.
    pub orientations: usize,
}

impl Default for RfSpectrumConfig {
    fn default() -> Self {
        RfSpectrumConfig {
            linewidth: 5.0,
            internal_field_fraction: 0.0,
            internal_field_magnitude: 6.0,
            orientations: 256,
        }
    }
}

impl RfSpectrumConfig {
    pub fn validate(&self) -> Result<(), SpinError> {
        if !(self.linewidth > 0.0 && self.linewidth.is_finite()) {
            return Err(SpinError::InvalidInput(format!(
                "linewidth {} kHz",
                self.linewidth
            )));
        }
        if !(0.0..=1.0).contains(&self.internal_field_fraction) {
            return Err(SpinError::InvalidInput(format!(
                "internal field fraction {} outside [0, 1]",
                self.internal_field_fraction
            )));
        }
        if !(self.internal_field_magnitude >= 0.0 && self.internal_field_magnitude.is_finite()) {
            return Err(SpinError::InvalidInput(
                "internal field magnitude must be ≥ 0".into(),
            ));
        }
        if self.orientations == 0 {
            return Err(SpinError::InvalidInput(
                "need at least one orientation".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RfSpectrum {
    /// MHz.
    pub frequency: Vec<f64>,
    pub total: Vec<f64>,
    /// Main-population contribution per line, in `Transition::ALL` order.
    pub lines: [Vec<f64>; 3],
    /// Internal-field subpopulation, all lines together.
    pub internal: Vec<f64>,
}

/// Nearly uniform unit vectors on the sphere (golden-angle spiral).
pub fn fibonacci_sphere(n: usize) -> Vec<Vector3<f64>> {
    let golden = PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|k| {
            let z = 1.0 - (2.0 * k as f64 + 1.0) / n as f64;
            let r = (1.0 - z * z).sqrt();
            let phi = golden * k as f64;
            Vector3::new(r * phi.cos(), r * phi.sin(), z)
        })
        .collect()
}

fn lorentzian(x: f64, center: f64, fwhm: f64) -> f64 {
    let h = fwhm / 2.0;
    h * h / ((x - center).powi(2) + h * h)
}

/// Line frequencies (MHz) and strengths |M|² ((MHz/mT)²) at one field.
fn lines_at(
    sys: &SpinSystem,
    b: &FieldVector,
    drive: &Vector3<f64>,
) -> Result<[(f64, f64); 3], SpinError> {
    let eig = spin::solve(sys, b)?;
    let e_s = eig.energy(LevelLabel::S);
    Ok(Transition::ALL.map(|t| {
        let m = spin::coupling(&eig, sys, LevelLabel::S, t.upper(), drive);
        (eig.energy(t.upper()) - e_s, m * m)
    }))
}

/// Weak-drive spectrum over `grid` (MHz): each line contributes |M|²·L(ν − ν_line).
pub fn rf_spectrum(
    sys: &SpinSystem,
    b0: &FieldVector,
    b1_direction: &Vector3<f64>,
    grid: &[f64],
    cfg: &RfSpectrumConfig,
) -> Result<RfSpectrum, SpinError> {
    sys.validate()?;
    cfg.validate()?;
    let n = b1_direction.norm();
    if !(n > 0.0 && n.is_finite()) {
        return Err(SpinError::InvalidInput(
            "B1 direction must be non-zero".into(),
        ));
    }
    if grid.iter().any(|v| !v.is_finite()) || grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(SpinError::InvalidInput(
            "frequency grid must be finite and increasing".into(),
        ));
    }
    let drive = b1_direction / n;
    let fwhm = cfg.linewidth * 1e-3;
    let main_weight = 1.0 - cfg.internal_field_fraction;
    let main = lines_at(sys, b0, &drive)?;
    let lines = [0, 1, 2].map(|k| {
        let (nu, s) = main[k];
        grid.iter()
            .map(|&x| main_weight * s * lorentzian(x, nu, fwhm))
            .collect::<Vec<f64>>()
    });

    let mut internal = vec![0.0; grid.len()];
    if cfg.internal_field_fraction > 0.0 {
        let w = cfg.internal_field_fraction / cfg.orientations as f64;
        for dir in fibonacci_sphere(cfg.orientations) {
            let b = b0.as_vector() + dir * cfg.internal_field_magnitude;
            for (nu, s) in lines_at(sys, &FieldVector::from_vector(b), &drive)? {
                for (v, &x) in internal.iter_mut().zip(grid) {
                    *v += w * s * lorentzian(x, nu, fwhm);
                }
            }
        }
    }
    let total = (0..grid.len())
        .map(|i| lines[0][i] + lines[1][i] + lines[2][i] + internal[i])
        .collect();
    Ok(RfSpectrum {
        frequency: grid.to_vec(),
        total,
        lines,
        internal,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        (0..n)
            .map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64)
            .collect()
    }

    fn value_at(s: &RfSpectrum, f: f64) -> f64 {
        let k = s
            .frequency
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - f).abs().total_cmp(&(b.1 - f).abs()))
            .unwrap()
            .0;
        s.total[k]
    }

    #[test]
    fn orientation_selects_lines() {
        let sys = SpinSystem::default();
        let b0 = FieldVector::along_z(4.0);
        let a = sys.hyperfine_a;
        let g = grid(a - 0.15, a + 0.15, 3001);
        let cfg = RfSpectrumConfig::default();
        let perp = rf_spectrum(&sys, &b0, &Vector3::x(), &g, &cfg).unwrap();
        let par = rf_spectrum(&sys, &b0, &Vector3::z(), &g, &cfg).unwrap();
        let nu = |t: Transition| t.frequency_at(&sys, 4.0);
        let tp = nu(Transition::SToTPlus);
        let t0 = nu(Transition::SToTZero);
        assert!(value_at(&perp, tp) > 10.0 * value_at(&perp, t0));
        assert!(value_at(&par, t0) > 10.0 * value_at(&par, tp));
    }

    #[test]
    fn sidebands_sit_near_internal_field() {
        let sys = SpinSystem::default();
        let a = sys.hyperfine_a;
        let g = grid(a - 0.15, a + 0.15, 3001);
        let cfg = RfSpectrumConfig {
            internal_field_fraction: 0.3,
            ..RfSpectrumConfig::default()
        };
        let expect = 6e-3 * sys.gamma_diff() / 2.0;
        for b in [0.0, 1.0] {
            let s = rf_spectrum(&sys, &FieldVector::along_z(b), &Vector3::x(), &g, &cfg).unwrap();
            // Weighted centroid of the upper sideband stays at ≈ (γS−γI)/2 · 6 µT.
            let (mut num, mut den) = (0.0, 0.0);
            for (f, v) in s.frequency.iter().zip(&s.internal) {
                if *f > a + 0.04 {
                    num += (f - a) * v;
                    den += v;
                }
            }
            let centroid = num / den;
            assert!(
                (centroid / expect - 1.0).abs() < 0.15,
                "B0={b}: {centroid} vs {expect}"
            );
        }
    }
}
