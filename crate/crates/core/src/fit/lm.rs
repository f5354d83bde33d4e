//! Damped least squares with a central-difference Jacobian.

use nalgebra::{DMatrix, DVector};

/// Relative finite-difference step per parameter.
pub const JACOBIAN_STEP: f64 = 1e-6;

#[derive(Debug, Clone, Copy)]
pub struct LmOptions {
    pub max_iterations: usize,
    pub step_tolerance: f64,
    pub gradient_tolerance: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        LmOptions {
            max_iterations: 500,
            step_tolerance: 1e-10,
            gradient_tolerance: 1e-12,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LmOutcome {
    pub params: Vec<f64>,
    pub rss: f64,
    pub converged: bool,
    pub iterations: usize,
    /// RSS after each accepted step, starting with the initial point.
    pub rss_history: Vec<f64>,
    pub gradient_norm: f64,
}

pub(crate) fn rss_of(r: &DVector<f64>) -> f64 {
    r.norm_squared()
}

/// Residual vector, or `None` when the model is undefined at `p`.
pub(crate) fn eval<F>(f: &F, p: &[f64]) -> Option<DVector<f64>>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let r = DVector::from_vec(f(p));
    if r.iter().all(|v| v.is_finite()) {
        Some(r)
    } else {
        None
    }
}

/// Jacobian of the residuals with respect to the free parameters.
pub(crate) fn jacobian<F>(f: &F, p: &[f64], free: &[usize], n: usize) -> Option<DMatrix<f64>>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let mut j = DMatrix::zeros(n, free.len());
    let mut q = p.to_vec();
    for (col, &k) in free.iter().enumerate() {
        let h = JACOBIAN_STEP * p[k].abs().max(1e-8);
        q[k] = p[k] + h;
        let up = eval(f, &q)?;
        q[k] = p[k] - h;
        let down = eval(f, &q)?;
        q[k] = p[k];
        j.set_column(col, &((up - down) / (2.0 * h)));
    }
    Some(j)
}

/// Minimizes ‖f(p)‖² over the parameters listed in `free`.
pub fn minimize<F>(f: &F, p0: &[f64], free: &[usize], opts: &LmOptions) -> Option<LmOutcome>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let mut p = p0.to_vec();
    let mut r = eval(f, &p)?;
    let n = r.len();
    let mut rss = rss_of(&r);
    let mut history = vec![rss];
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut grad_norm = f64::INFINITY;
    let mut iterations = 0;

    while iterations < opts.max_iterations {
        iterations += 1;
        let Some(j) = jacobian(f, &p, free, n) else {
            break;
        };
        let g = j.transpose() * &r;
        grad_norm = g.norm();
        if grad_norm < opts.gradient_tolerance || rss == 0.0 {
            converged = true;
            break;
        }
        let jtj = j.transpose() * &j;
        let diag: Vec<f64> = (0..free.len()).map(|k| jtj[(k, k)].max(1e-300)).collect();

        let mut accepted = false;
        while lambda < 1e16 {
            let mut a = jtj.clone();
            for k in 0..free.len() {
                a[(k, k)] += lambda * diag[k];
            }
            let Some(chol) = a.cholesky() else {
                lambda *= 10.0;
                continue;
            };
            let delta = chol.solve(&(-&g));
            let mut trial = p.clone();
            for (col, &k) in free.iter().enumerate() {
                trial[k] += delta[col];
            }
            match eval(f, &trial) {
                Some(rt) if rss_of(&rt) <= rss => {
                    let rel = free
                        .iter()
                        .enumerate()
                        .map(|(col, &k)| delta[col].abs() / p[k].abs().max(1e-300))
                        .fold(0.0, f64::max);
                    p = trial;
                    rss = rss_of(&rt);
                    r = rt;
                    history.push(rss);
                    lambda = (lambda / 10.0).max(1e-12);
                    accepted = true;
                    if rel < opts.step_tolerance {
                        converged = true;
                    }
                    break;
                }
                _ => lambda *= 10.0,
            }
        }
        if converged {
            break;
        }
        if !accepted {
            // No descent direction left at any damping: stationary to working precision.
            converged = grad_norm < 1e-6 * (1.0 + rss.sqrt());
            break;
        }
    }
    if grad_norm.is_infinite() {
        if let Some(j) = jacobian(f, &p, free, n) {
            grad_norm = (j.transpose() * &r).norm();
        }
    }
    Some(LmOutcome {
        params: p,
        rss,
        converged,
        iterations,
        rss_history: history,
        gradient_norm: grad_norm,
    })
}
