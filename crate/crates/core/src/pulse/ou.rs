//! Ornstein-Uhlenbeck field noise with exact discretization.
//!
//! The pair (x(t+h), ∫ₜ^{t+h} x) is Gaussian given x(t), so both the path and its
//! running integral are sampled without discretization error for any step `h`.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Stationary OU process with standard deviation `sigma` and correlation time `tau_c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OuProcess {
    pub sigma: f64,
    pub tau_c: f64,
}

/// Moments of one exact step of length `h`.
#[derive(Debug, Clone, Copy)]
struct StepMoments {
    decay: f64,
    /// E[∫x | x₀] = int_gain · x₀.
    int_gain: f64,
    sd_x: f64,
    /// Regression of the integral on the x innovation.
    int_on_x: f64,
    sd_int_residual: f64,
}

impl OuProcess {
    pub fn new(sigma: f64, tau_c: f64) -> Self {
        OuProcess { sigma, tau_c }
    }

    pub fn is_silent(&self) -> bool {
        self.sigma == 0.0
    }

    fn moments(&self, h: f64) -> StepMoments {
        let (s, tc) = (self.sigma, self.tau_c);
        if h <= 0.0 || s == 0.0 {
            return StepMoments {
                decay: 1.0,
                int_gain: h.max(0.0),
                sd_x: 0.0,
                int_on_x: 0.0,
                sd_int_residual: 0.0,
            };
        }
        if !(tc > 0.0) || !tc.is_finite() {
            // White-noise limit is not meaningful here; treat τ_c = ∞ as frozen noise.
            return StepMoments {
                decay: 1.0,
                int_gain: h,
                sd_x: 0.0,
                int_on_x: 0.0,
                sd_int_residual: 0.0,
            };
        }
        let u = h / tc;
        let a = (-u).exp();
        let one_minus_a = -(-u).exp_m1();
        // f(u) = 2u − 3 + 4e^{−u} − e^{−2u};  g(u) = (1 − e^{−u})³ / (1 + e^{−u}).
        let f_minus_g = if u < 1e-2 {
            // f − g = u³/6 − u⁵/60 + O(u⁷)
            u * u * u * (1.0 / 6.0 - u * u / 60.0)
        } else {
            let f = 2.0 * u - 3.0 + 4.0 * a - a * a;
            f - one_minus_a.powi(3) / (1.0 + a)
        };
        let var_x = s * s * one_minus_a * (1.0 + a);
        let cov = s * s * tc * one_minus_a * one_minus_a;
        StepMoments {
            decay: a,
            int_gain: tc * one_minus_a,
            sd_x: var_x.sqrt(),
            int_on_x: if var_x > 0.0 { cov / var_x.sqrt() } else { 0.0 },
            sd_int_residual: (s * s * tc * tc * f_minus_g).max(0.0).sqrt(),
        }
    }

    /// Draws x(0) from the stationary distribution.
    pub fn stationary<R: Rng>(&self, rng: &mut R) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        self.sigma * z
    }

    /// Advances `x` by `h`, returning the new value and ∫x over the step.
    pub fn step<R: Rng>(&self, x: f64, h: f64, rng: &mut R) -> (f64, f64) {
        let m = self.moments(h);
        if m.sd_x == 0.0 && m.sd_int_residual == 0.0 {
            return (x * m.decay, x * m.int_gain);
        }
        let z1: f64 = rng.sample(StandardNormal);
        let z2: f64 = rng.sample(StandardNormal);
        let next = m.decay * x + m.sd_x * z1;
        let integral = m.int_gain * x + m.int_on_x * z1 + m.sd_int_residual * z2;
        (next, integral)
    }
}

/// A sampled path on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct OuPath {
    pub dt: f64,
    /// x(k·dt).
    pub values: Vec<f64>,
    /// ∫₀^{k·dt} x.
    pub integral: Vec<f64>,
}

/// Samples `duration/dt` exact OU steps from a stationary start using a ChaCha8 stream
/// seeded by `seed`.
pub fn sample_ou_path(seed: u64, sigma: f64, tau_c: f64, duration: f64, dt: f64) -> OuPath {
    assert!(dt > 0.0, "dt must be positive");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_ou_path_with(&mut rng, OuProcess::new(sigma, tau_c), duration, dt)
}

pub fn sample_ou_path_with<R: Rng>(rng: &mut R, ou: OuProcess, duration: f64, dt: f64) -> OuPath {
    let steps = (duration / dt).round().max(0.0) as usize;
    let mut values = Vec::with_capacity(steps + 1);
    let mut integral = Vec::with_capacity(steps + 1);
    let mut x = if ou.is_silent() {
        0.0
    } else {
        ou.stationary(rng)
    };
    let mut acc = 0.0;
    values.push(x);
    integral.push(0.0);
    for _ in 0..steps {
        let (nx, i) = ou.step(x, dt, rng);
        x = nx;
        acc += i;
        values.push(x);
        integral.push(acc);
    }
    OuPath {
        dt,
        values,
        integral,
    }
}
