//! Derivative-free simplex minimisation over the covariance parameters.

#[derive(Debug, Clone, Copy)]
pub struct SimplexOptions {
    /// Converged once `(f_worst - f_best) <= ftol_rel * |f_best|`.
    pub ftol_rel: f64,
    pub max_iter: usize,
    pub initial_step: f64,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self {
            ftol_rel: 1e-10,
            max_iter: 500,
            initial_step: 0.5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimplexResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Nelder-Mead with standard coefficients. After the first convergence the
/// simplex is rebuilt around the best point and the search continues until a
/// restart brings no improvement beyond the tolerance, all within `max_iter`.
pub fn minimize<F>(mut f: F, x0: &[f64], opts: SimplexOptions) -> SimplexResult
where
    F: FnMut(&[f64]) -> f64,
{
    let dim = x0.len();
    let mut eval = |x: &[f64]| {
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    if dim == 0 {
        let v = eval(x0);
        return SimplexResult {
            x: Vec::new(),
            f: v,
            iterations: 0,
            converged: true,
        };
    }

    let mut iterations = 0;
    let mut best_x = x0.to_vec();
    let mut best_f = eval(x0);
    let mut step = opts.initial_step;
    loop {
        let (x, fx, it, conv) = run_simplex(&mut eval, &best_x, best_f, step, opts, opts.max_iter - iterations);
        iterations += it;
        let improved = best_f - fx > opts.ftol_rel * fx.abs().max(1e-300);
        if fx < best_f {
            best_x = x;
            best_f = fx;
        }
        if !conv {
            return SimplexResult {
                x: best_x,
                f: best_f,
                iterations,
                converged: false,
            };
        }
        if !improved && it > 0 {
            return SimplexResult {
                x: best_x,
                f: best_f,
                iterations,
                converged: true,
            };
        }
        if iterations >= opts.max_iter {
            return SimplexResult {
                x: best_x,
                f: best_f,
                iterations,
                converged: false,
            };
        }
        step = (step * 0.5).max(1e-3);
    }
}

fn run_simplex<E>(
    eval: &mut E,
    start: &[f64],
    f_start: f64,
    step: f64,
    opts: SimplexOptions,
    budget: usize,
) -> (Vec<f64>, f64, usize, bool)
where
    E: FnMut(&[f64]) -> f64,
{
    let dim = start.len();
    let mut pts: Vec<Vec<f64>> = Vec::with_capacity(dim + 1);
    let mut vals: Vec<f64> = Vec::with_capacity(dim + 1);
    pts.push(start.to_vec());
    vals.push(f_start);
    for i in 0..dim {
        let mut p = start.to_vec();
        p[i] += if p[i].abs() > 1e-8 { step * p[i].abs().max(0.1) } else { step };
        vals.push(eval(&p));
        pts.push(p);
    }

    let mut it = 0;
    loop {
        let mut order: Vec<usize> = (0..=dim).collect();
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]).then(a.cmp(&b)));
        let pts_sorted: Vec<Vec<f64>> = order.iter().map(|&i| pts[i].clone()).collect();
        let vals_sorted: Vec<f64> = order.iter().map(|&i| vals[i]).collect();
        pts = pts_sorted;
        vals = vals_sorted;

        let (fb, fw) = (vals[0], vals[dim]);
        if fw - fb <= opts.ftol_rel * fb.abs().max(1e-300) {
            return (pts.swap_remove(0), fb, it, true);
        }
        if it >= budget {
            return (pts.swap_remove(0), fb, it, false);
        }
        it += 1;

        let mut centroid = vec![0.0; dim];
        for p in &pts[..dim] {
            for (c, v) in centroid.iter_mut().zip(p) {
                *c += v / dim as f64;
            }
        }
        let along = |coef: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&pts[dim])
                .map(|(c, w)| c + coef * (c - w))
                .collect()
        };

        let xr = along(1.0);
        let fr = eval(&xr);
        if fr < vals[0] {
            let xe = along(2.0);
            let fe = eval(&xe);
            if fe < fr {
                pts[dim] = xe;
                vals[dim] = fe;
            } else {
                pts[dim] = xr;
                vals[dim] = fr;
            }
            continue;
        }
        if fr < vals[dim - 1] {
            pts[dim] = xr;
            vals[dim] = fr;
            continue;
        }
        let (xc, fc) = if fr < vals[dim] {
            let xc = along(0.5);
            let fc = eval(&xc);
            (xc, fc)
        } else {
            let xc = along(-0.5);
            let fc = eval(&xc);
            (xc, fc)
        };
        if fc < vals[dim].min(fr) {
            pts[dim] = xc;
            vals[dim] = fc;
            continue;
        }
        // shrink toward the best vertex
        let best = pts[0].clone();
        for i in 1..=dim {
            for (v, b) in pts[i].iter_mut().zip(&best) {
                *v = b + 0.5 * (*v - b);
            }
            vals[i] = eval(&pts[i]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_rosenbrock_minimum() {
        let rosen = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2) + 1.0;
        let r = minimize(
            rosen,
            &[-1.2, 1.0],
            SimplexOptions {
                max_iter: 5000,
                ftol_rel: 1e-14,
                ..Default::default()
            },
        );
        assert!(r.converged);
        assert!((r.x[0] - 1.0).abs() < 1e-4 && (r.x[1] - 1.0).abs() < 1e-4, "{:?}", r.x);
    }

    #[test]
    fn reports_budget_exhaustion() {
        let r = minimize(
            |x: &[f64]| x.iter().map(|v| (v - 3.0).powi(2)).sum::<f64>() + 1.0,
            &[0.0, 0.0, 0.0],
            SimplexOptions {
                max_iter: 3,
                ..Default::default()
            },
        );
        assert!(!r.converged);
        assert!(r.iterations <= 3);
    }

    #[test]
    fn one_dimensional_quadratic() {
        let r = minimize(|x: &[f64]| (x[0] - 0.3).powi(2) + 2.0, &[1.0], SimplexOptions::default());
        assert!(r.converged);
        assert!((r.x[0] - 0.3).abs() < 1e-4);
    }
}
