//! Nonlinear least-squares fits: stretched-exponential echo decays and multi-peak spectra.

mod lm;
mod simplex;

use std::fmt;

use thiserror::Error;

pub use lm::{minimize, LmOptions, LmOutcome, JACOBIAN_STEP};
pub use simplex::nelder_mead;

use crate::series::DecaySeries;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("rank-deficient problem: {0}")]
    RankDeficient(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub names: Vec<String>,
    pub params: Vec<f64>,
    /// Standard errors from `s²(JᵀJ)⁻¹` at the optimum; zero for fixed parameters.
    pub std_errors: Vec<f64>,
    pub rss: f64,
    pub converged: bool,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub rss_history: Vec<f64>,
    pub diagnostics: Vec<String>,
}

impl FitResult {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|k| self.params[k])
    }

    pub fn std_error(&self, name: &str) -> Option<f64> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|k| self.std_errors[k])
    }
}

impl fmt::Display for FitResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for ((n, p), e) in self.names.iter().zip(&self.params).zip(&self.std_errors) {
            writeln!(f, "{n} = {p} ± {e}")?;
        }
        write!(
            f,
            "rss = {} converged = {} iterations = {}",
            self.rss, self.converged, self.iterations
        )
    }
}

/// Runs damped least squares, falls back to Nelder-Mead if it stalls, and attaches
/// standard errors.
fn solve<F>(
    residuals: &F,
    names: Vec<String>,
    p0: Vec<f64>,
    free: Vec<usize>,
) -> Result<FitResult, FitError>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let opts = LmOptions::default();
    let mut out = minimize(residuals, &p0, &free, &opts)
        .ok_or_else(|| FitError::InvalidInput("model undefined at the initial guess".into()))?;
    let mut diagnostics = Vec::new();
    if !out.converged {
        diagnostics.push("damped least squares did not converge; trying simplex fallback".into());
        let cost = |q: &[f64]| {
            let mut p = out.params.clone();
            for (col, &k) in free.iter().enumerate() {
                p[k] = q[col];
            }
            residuals(&p).iter().map(|r| r * r).sum::<f64>()
        };
        let start: Vec<f64> = free.iter().map(|&k| out.params[k]).collect();
        let (best, _) = nelder_mead(&cost, &start, 20_000, 1e-15);
        let mut p = out.params.clone();
        for (col, &k) in free.iter().enumerate() {
            p[k] = best[col];
        }
        if let Some(polished) = minimize(residuals, &p, &free, &opts) {
            if polished.rss <= out.rss {
                let mut history = out.rss_history.clone();
                history.extend(polished.rss_history.iter().skip(1));
                let iterations = out.iterations + polished.iterations;
                out = LmOutcome {
                    rss_history: history,
                    iterations,
                    ..polished
                };
            }
        }
        if !out.converged {
            diagnostics.push(format!(
                "not converged after {} iterations (gradient norm {:e})",
                out.iterations, out.gradient_norm
            ));
        }
    }

    let n = residuals(&out.params).len();
    let mut std_errors = vec![0.0; out.params.len()];
    if let Some(j) = lm::jacobian(residuals, &out.params, &free, n) {
        let dof = n.saturating_sub(free.len());
        let s2 = if dof > 0 {
            out.rss / dof as f64
        } else {
            f64::INFINITY
        };
        let jtj = j.transpose() * &j;
        match jtj.clone().try_inverse() {
            Some(inv) => {
                for (col, &k) in free.iter().enumerate() {
                    std_errors[k] = (s2 * inv[(col, col)]).max(0.0).sqrt();
                }
            }
            None => {
                diagnostics.push("singular normal matrix at optimum".into());
                for &k in &free {
                    std_errors[k] = f64::INFINITY;
                }
            }
        }
    }
    Ok(FitResult {
        names,
        params: out.params,
        std_errors,
        rss: out.rss,
        converged: out.converged,
        iterations: out.iterations,
        gradient_norm: out.gradient_norm,
        rss_history: out.rss_history,
        diagnostics,
    })
}

/// `a · exp(−(2τ/T₂)ⁿ)`.
pub fn stretched_exp(tau: f64, amplitude: f64, t2: f64, n: f64) -> f64 {
    amplitude * (-(2.0 * tau / t2).powf(n)).exp()
}

/// Starting point for [`fit_stretched_exp`]; `fix_n` pins the stretching parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StretchedExpGuess {
    pub amplitude: f64,
    pub t2: f64,
    pub n: f64,
    pub fix_n: bool,
}

impl StretchedExpGuess {
    pub fn new(amplitude: f64, t2: f64, n: f64) -> Self {
        StretchedExpGuess {
            amplitude,
            t2,
            n,
            fix_n: false,
        }
    }

    /// A guess read off the data: amplitude from the first point, T₂ from the 1/e crossing.
    pub fn from_series(series: &DecaySeries) -> Self {
        let a = series.signal.first().copied().unwrap_or(1.0);
        let target = a / std::f64::consts::E;
        let mut t2 = 2.0 * series.tau.last().copied().unwrap_or(1.0);
        for (t, y) in series.tau.iter().zip(&series.signal) {
            if (a > 0.0 && *y <= target) || (a < 0.0 && *y >= target) {
                t2 = 2.0 * t;
                break;
            }
        }
        StretchedExpGuess::new(if a == 0.0 { 1.0 } else { a }, t2.max(1e-300), 1.0)
    }
}

/// Fits `a·exp(−(2τ/T₂)ⁿ)` to an echo decay. Parameters are named `amplitude`, `t2`, `n`.
pub fn fit_stretched_exp(
    series: &DecaySeries,
    guess: &StretchedExpGuess,
) -> Result<FitResult, FitError> {
    series
        .validate()
        .map_err(|e| FitError::InvalidInput(e.to_string()))?;
    if series.len() < 4 {
        return Err(FitError::InvalidInput(format!(
            "need at least 4 points, got {}",
            series.len()
        )));
    }
    if series.tau.iter().any(|t| !(*t > 0.0)) {
        return Err(FitError::InvalidInput("tau values must be positive".into()));
    }
    if !(guess.t2 > 0.0 && guess.n > 0.0 && guess.amplitude.is_finite()) {
        return Err(FitError::InvalidInput(
            "initial T2 and n must be positive".into(),
        ));
    }
    let first = series.signal[0];
    if series.signal.iter().all(|y| *y == first) {
        return Err(FitError::RankDeficient(
            "all signal values are equal; decay parameters are unidentifiable".into(),
        ));
    }
    let residuals = |p: &[f64]| -> Vec<f64> {
        series
            .tau
            .iter()
            .zip(&series.signal)
            .map(|(t, y)| {
                if p[1] <= 0.0 || p[2] <= 0.0 {
                    f64::NAN
                } else {
                    stretched_exp(*t, p[0], p[1], p[2]) - y
                }
            })
            .collect()
    };
    let free = if guess.fix_n {
        vec![0, 1]
    } else {
        vec![0, 1, 2]
    };
    solve(
        &residuals,
        vec!["amplitude".into(), "t2".into(), "n".into()],
        vec![guess.amplitude, guess.t2, guess.n],
        free,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PeakShape {
    Gaussian,
    Lorentzian,
}

impl std::str::FromStr for PeakShape {
    type Err = FitError;
    fn from_str(s: &str) -> Result<Self, FitError> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" => Ok(PeakShape::Gaussian),
            "lorentzian" => Ok(PeakShape::Lorentzian),
            other => Err(FitError::InvalidInput(format!(
                "unknown peak shape '{other}'"
            ))),
        }
    }
}

impl PeakShape {
    /// Unit-height profile with full width at half maximum `width`.
    pub fn profile(self, x: f64, center: f64, width: f64) -> f64 {
        let u = (x - center) / width;
        match self {
            PeakShape::Gaussian => (-4.0 * std::f64::consts::LN_2 * u * u).exp(),
            PeakShape::Lorentzian => 1.0 / (1.0 + 4.0 * u * u),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    pub center: f64,
    /// FWHM.
    pub width: f64,
    pub amplitude: f64,
}

/// A sum of peaks of one shape over a shared constant baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct PeakModel {
    pub shape: PeakShape,
    pub peaks: Vec<Peak>,
    pub baseline: f64,
}

impl PeakModel {
    pub fn eval(&self, x: f64) -> f64 {
        self.baseline
            + self
                .peaks
                .iter()
                .map(|p| p.amplitude * self.shape.profile(x, p.center, p.width))
                .sum::<f64>()
    }

    /// Reads a fitted model back from a [`fit_peaks`] result.
    pub fn from_fit(shape: PeakShape, fit: &FitResult) -> PeakModel {
        let k = (fit.params.len() - 1) / 3;
        PeakModel {
            shape,
            baseline: fit.params[0],
            peaks: (0..k)
                .map(|i| Peak {
                    center: fit.params[1 + 3 * i],
                    width: fit.params[2 + 3 * i],
                    amplitude: fit.params[3 + 3 * i],
                })
                .collect(),
        }
    }
}

/// Fits `k = guesses.len()` peaks plus a constant baseline.
///
/// Parameters come back as `baseline`, then `center{i}`, `width{i}`, `amplitude{i}` with
/// peaks sorted by ascending center.
pub fn fit_peaks(
    x: &[f64],
    y: &[f64],
    shape: PeakShape,
    guesses: &[Peak],
    baseline_guess: f64,
) -> Result<FitResult, FitError> {
    if guesses.is_empty() {
        return Err(FitError::InvalidInput("need at least one peak".into()));
    }
    if x.len() != y.len() {
        return Err(FitError::InvalidInput("x and y lengths differ".into()));
    }
    if x.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(FitError::InvalidInput(
            "grid must be strictly increasing".into(),
        ));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(FitError::InvalidInput("non-finite data".into()));
    }
    let k = guesses.len();
    if x.len() <= 3 * k + 1 {
        return Err(FitError::InvalidInput(format!(
            "{} points cannot constrain {} parameters",
            x.len(),
            3 * k + 1
        )));
    }
    if guesses.iter().any(|g| !(g.width > 0.0)) {
        return Err(FitError::InvalidInput(
            "peak widths must be positive".into(),
        ));
    }
    let residuals = |p: &[f64]| -> Vec<f64> {
        x.iter()
            .zip(y)
            .map(|(xi, yi)| {
                let mut v = p[0];
                for i in 0..k {
                    let w = p[2 + 3 * i].abs();
                    v += p[3 + 3 * i] * shape.profile(*xi, p[1 + 3 * i], w);
                }
                v - yi
            })
            .collect()
    };
    let mut p0 = vec![baseline_guess];
    for g in guesses {
        p0.extend([g.center, g.width, g.amplitude]);
    }
    let free: Vec<usize> = (0..p0.len()).collect();
    let raw = solve(&residuals, Vec::new(), p0, free)?;

    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| raw.params[1 + 3 * a].total_cmp(&raw.params[1 + 3 * b]));
    let mut names = vec!["baseline".to_string()];
    let mut params = vec![raw.params[0]];
    let mut errs = vec![raw.std_errors[0]];
    for (slot, &i) in order.iter().enumerate() {
        names.extend([
            format!("center{slot}"),
            format!("width{slot}"),
            format!("amplitude{slot}"),
        ]);
        params.extend([
            raw.params[1 + 3 * i],
            raw.params[2 + 3 * i].abs(),
            raw.params[3 + 3 * i],
        ]);
        errs.extend([
            raw.std_errors[1 + 3 * i],
            raw.std_errors[2 + 3 * i],
            raw.std_errors[3 + 3 * i],
        ]);
    }
    let mut diagnostics = raw.diagnostics;
    for w in order.windows(2) {
        let (a, b) = (w[0], w[1]);
        let sep = raw.params[1 + 3 * b] - raw.params[1 + 3 * a];
        let width = 0.5 * (raw.params[2 + 3 * a].abs() + raw.params[2 + 3 * b].abs());
        if sep < 0.25 * width {
            diagnostics.push(format!(
                "overlapping centers: separation {sep} is below a quarter of the mean width {width}"
            ));
        }
    }
    Ok(FitResult {
        names,
        params,
        std_errors: errs,
        diagnostics,
        ..raw
    })
}
