//! Derivative-free minimization (Nelder-Mead simplex).

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMeadOptions {
    pub max_evals: usize,
    /// Edge length of the initial simplex along each axis.
    pub initial_step: f64,
    pub f_tol: f64,
    pub x_tol: f64,
    /// Fresh simplexes built around the incumbent after convergence.
    pub restarts: usize,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        NelderMeadOptions {
            max_evals: 4000,
            initial_step: 1.0,
            f_tol: 1e-10,
            x_tol: 1e-7,
            restarts: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub evals: usize,
    pub converged: bool,
}

fn sanitize(v: f64) -> f64 {
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

/// Minimizes `f` from `x0`. NaN objective values count as `+inf`, so the
/// returned point is never worse than `x0`.
pub fn nelder_mead<F: FnMut(&[f64]) -> f64>(mut f: F, x0: &[f64], opts: NelderMeadOptions) -> Minimum {
    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        sanitize(f(x))
    };
    let mut best_x = x0.to_vec();
    let mut best_f = eval(x0, &mut evals);
    let mut converged = false;
    for _ in 0..=opts.restarts {
        let budget = opts.max_evals.saturating_sub(evals);
        if budget == 0 {
            break;
        }
        let (x, fx, ok) = simplex_run(&mut eval, &best_x, best_f, opts, budget, &mut evals);
        let improved = fx < best_f - opts.f_tol * (1.0 + best_f.abs());
        if fx <= best_f {
            best_x = x;
            best_f = fx;
        }
        converged = ok;
        if !improved {
            break;
        }
    }
    Minimum {
        x: best_x,
        f: best_f,
        evals,
        converged,
    }
}

fn simplex_run<E: FnMut(&[f64], &mut usize) -> f64>(
    eval: &mut E,
    x0: &[f64],
    f0: f64,
    opts: NelderMeadOptions,
    budget: usize,
    evals: &mut usize,
) -> (Vec<f64>, f64, bool) {
    let n = x0.len();
    let start = *evals;
    let mut pts: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    pts.push((x0.to_vec(), f0));
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += opts.initial_step;
        let fx = eval(&x, evals);
        pts.push((x, fx));
    }

    let mut converged = false;
    while *evals - start < budget {
        pts.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (fb, fw) = (pts[0].1, pts[n].1);
        let spread_f = if fb.is_finite() && fw.is_finite() {
            fw - fb
        } else {
            f64::INFINITY
        };
        let spread_x = pts[1..]
            .iter()
            .flat_map(|(x, _)| x.iter().zip(&pts[0].0).map(|(a, b)| (a - b).abs()))
            .fold(0.0f64, f64::max);
        if spread_f <= opts.f_tol * (1.0 + fb.abs()) && spread_x <= opts.x_tol {
            converged = true;
            break;
        }

        let mut centroid = vec![0.0; n];
        for (x, _) in &pts[..n] {
            for (c, v) in centroid.iter_mut().zip(x) {
                *c += v / n as f64;
            }
        }
        let along = |t: f64| -> Vec<f64> { centroid.iter().zip(&pts[n].0).map(|(c, w)| c + t * (w - c)).collect() };

        let xr = along(-1.0);
        let fr = eval(&xr, evals);
        if fr < pts[0].1 {
            let xe = along(-2.0);
            let fe = eval(&xe, evals);
            pts[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < pts[n - 1].1 {
            pts[n] = (xr, fr);
            continue;
        }
        let (xc, fc) = if fr < pts[n].1 {
            let xc = along(-0.5);
            let fc = eval(&xc, evals);
            (xc, fc)
        } else {
            let xc = along(0.5);
            let fc = eval(&xc, evals);
            (xc, fc)
        };
        if fc < pts[n].1.min(fr) {
            pts[n] = (xc, fc);
            continue;
        }
        let best = pts[0].0.clone();
        for p in pts.iter_mut().skip(1) {
            let x: Vec<f64> = best.iter().zip(&p.0).map(|(b, v)| b + 0.5 * (v - b)).collect();
            let fx = eval(&x, evals);
            *p = (x, fx);
        }
    }
    pts.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, fx) = pts.swap_remove(0);
    (x, fx, converged)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let m = nelder_mead(
            f,
            &[-1.2, 1.0],
            NelderMeadOptions {
                initial_step: 0.5,
                ..Default::default()
            },
        );
        assert!(m.converged);
        assert!((m.x[0] - 1.0).abs() < 1e-5 && (m.x[1] - 1.0).abs() < 1e-5, "{:?}", m.x);
    }

    #[test]
    fn quadratic_4d() {
        let target = [0.5, -2.0, 3.0, 1.0];
        let f = |x: &[f64]| {
            x.iter()
                .zip(&target)
                .enumerate()
                .map(|(i, (a, b))| (i as f64 + 1.0) * (a - b).powi(2))
                .sum()
        };
        let m = nelder_mead(f, &[0.0; 4], NelderMeadOptions::default());
        for (a, b) in m.x.iter().zip(&target) {
            assert!((a - b).abs() < 1e-5);
        }
    }

    #[test]
    fn never_worse_than_start_and_tolerates_nan() {
        let f = |x: &[f64]| if x[0] > 0.3 { f64::NAN } else { (x[0] - 1.0).powi(2) };
        let m = nelder_mead(f, &[0.0], NelderMeadOptions::default());
        assert!(m.f <= 1.0);
        assert!(m.x[0] <= 0.3);
    }

    #[test]
    fn respects_budget() {
        let f = |x: &[f64]| x[0].sin() + x[1].cos();
        let m = nelder_mead(
            f,
            &[0.0, 0.0],
            NelderMeadOptions {
                max_evals: 25,
                ..Default::default()
            },
        );
        assert!(m.evals <= 25 + 3);
    }
}
