//! Derivative-free Nelder-Mead minimizer, used when damped least squares stalls.

pub fn nelder_mead<F>(f: &F, x0: &[f64], max_evals: usize, tol: f64) -> (Vec<f64>, f64)
where
    F: Fn(&[f64]) -> f64,
{
    let n = x0.len();
    let cost = |x: &[f64]| {
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };
    let mut simplex: Vec<Vec<f64>> = vec![x0.to_vec()];
    for k in 0..n {
        let mut x = x0.to_vec();
        x[k] += if x[k] != 0.0 { 0.05 * x[k] } else { 2.5e-4 };
        simplex.push(x);
    }
    let mut values: Vec<f64> = simplex.iter().map(|x| cost(x)).collect();
    let mut evals = n + 1;

    while evals < max_evals {
        let mut idx: Vec<usize> = (0..=n).collect();
        idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = idx.iter().map(|&k| simplex[k].clone()).collect();
        values = idx.iter().map(|&k| values[k]).collect();
        if (values[n] - values[0]).abs() <= tol * (values[0].abs() + tol) {
            break;
        }
        let centroid: Vec<f64> = (0..n)
            .map(|d| simplex[..n].iter().map(|x| x[d]).sum::<f64>() / n as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            (0..n)
                .map(|d| centroid[d] + t * (simplex[n][d] - centroid[d]))
                .collect()
        };
        let xr = along(-1.0);
        let fr = cost(&xr);
        evals += 1;
        if fr < values[0] {
            let xe = along(-2.0);
            let fe = cost(&xe);
            evals += 1;
            if fe < fr {
                simplex[n] = xe;
                values[n] = fe;
            } else {
                simplex[n] = xr;
                values[n] = fr;
            }
        } else if fr < values[n - 1] {
            simplex[n] = xr;
            values[n] = fr;
        } else {
            let (xc, fc) = if fr < values[n] {
                let x = along(-0.5);
                let v = cost(&x);
                (x, v)
            } else {
                let x = along(0.5);
                let v = cost(&x);
                (x, v)
            };
            evals += 1;
            if fc < values[n].min(fr) {
                simplex[n] = xc;
                values[n] = fc;
            } else {
                for k in 1..=n {
                    simplex[k] = (0..n)
                        .map(|d| simplex[0][d] + 0.5 * (simplex[k][d] - simplex[0][d]))
                        .collect();
                    values[k] = cost(&simplex[k]);
                }
                evals += n;
            }
        }
    }
    let best = (0..=n)
        .min_by(|&a, &b| values[a].total_cmp(&values[b]))
        .unwrap_or(0);
    (simplex[best].clone(), values[best])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let (x, v) = nelder_mead(&f, &[-1.2, 1.0], 20_000, 1e-16);
        assert!(v < 1e-10, "{v}");
        assert!((x[0] - 1.0).abs() < 1e-4);
    }
}
