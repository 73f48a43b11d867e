//! Derivative-free and quasi-Newton minimizers for the quasi-likelihood
//! surface: a Nelder-Mead simplex for global progress on the non-smooth
//! shadow-rate objective, followed by a BFGS polish with numerical
//! gradients on the reparameterized unconstrained space.

use nalgebra::{DMatrix, DVector};

/// Nelder-Mead simplex minimization. `step` sets the initial simplex edge
/// per coordinate. Returns the best vertex and its value.
pub fn nelder_mead(
    f: &mut dyn FnMut(&DVector<f64>) -> f64,
    x0: &DVector<f64>,
    step: &DVector<f64>,
    max_iters: usize,
    ftol: f64,
) -> (DVector<f64>, f64) {
    let n = x0.len();
    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
    let mut simplex: Vec<(DVector<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((x0.clone(), f(x0)));
    for i in 0..n {
        let mut v = x0.clone();
        v[i] += step[i];
        let fv = f(&v);
        simplex.push((v, fv));
    }
    for _ in 0..max_iters {
        simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
        let best = simplex[0].1;
        let worst = simplex[n].1;
        if (worst - best).abs() <= ftol * (1.0 + best.abs()) {
            break;
        }
        // centroid of all but the worst vertex
        let mut centroid = DVector::zeros(n);
        for v in &simplex[..n] {
            centroid += &v.0;
        }
        centroid /= n as f64;
        let reflect = &centroid + (&centroid - &simplex[n].0) * alpha;
        let fr = f(&reflect);
        if fr < simplex[0].1 {
            let expand = &centroid + (&reflect - &centroid) * gamma;
            let fe = f(&expand);
            simplex[n] = if fe < fr { (expand, fe) } else { (reflect, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (reflect, fr);
        } else {
            let contract = if fr < simplex[n].1 {
                &centroid + (&reflect - &centroid) * rho
            } else {
                &centroid + (&simplex[n].0 - &centroid) * rho
            };
            let fc = f(&contract);
            if fc < simplex[n].1.min(fr) {
                simplex[n] = (contract, fc);
            } else {
                // shrink toward the best vertex
                let best_x = simplex[0].0.clone();
                for v in simplex.iter_mut().skip(1) {
                    v.0 = &best_x + (&v.0 - &best_x) * sigma;
                    v.1 = f(&v.0);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
    simplex.swap_remove(0)
}

/// Central-difference gradient with per-coordinate relative steps.
pub fn numerical_gradient(
    f: &mut dyn FnMut(&DVector<f64>) -> f64,
    x: &DVector<f64>,
    h_scale: f64,
) -> DVector<f64> {
    let n = x.len();
    let mut g = DVector::zeros(n);
    for i in 0..n {
        let h = h_scale * (1.0 + x[i].abs());
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[i] += h;
        xm[i] -= h;
        g[i] = (f(&xp) - f(&xm)) / (2.0 * h);
    }
    g
}

/// BFGS minimization with numerical gradients and a backtracking Armijo
/// line search. Intended as a local polish from a good starting point.
pub fn bfgs(
    f: &mut dyn FnMut(&DVector<f64>) -> f64,
    x0: &DVector<f64>,
    max_iters: usize,
    grad_h: f64,
    gtol: f64,
) -> (DVector<f64>, f64) {
    let n = x0.len();
    let mut x = x0.clone();
    let mut fx = f(&x);
    let mut g = numerical_gradient(f, &x, grad_h);
    let mut h_inv = DMatrix::<f64>::identity(n, n);
    for _ in 0..max_iters {
        if g.amax() < gtol {
            break;
        }
        let mut d = -(&h_inv * &g);
        if d.dot(&g) >= 0.0 {
            // Hessian approximation lost positive definiteness; restart
            h_inv = DMatrix::identity(n, n);
            d = -g.clone();
        }
        // backtracking line search on the Armijo condition
        let mut t = 1.0;
        let slope = g.dot(&d);
        let mut x_new = &x + &d * t;
        let mut f_new = f(&x_new);
        let mut ok = false;
        for _ in 0..30 {
            if f_new <= fx + 1e-4 * t * slope {
                ok = true;
                break;
            }
            t *= 0.5;
            x_new = &x + &d * t;
            f_new = f(&x_new);
        }
        if !ok || f_new >= fx {
            break;
        }
        let g_new = numerical_gradient(f, &x_new, grad_h);
        let s = &x_new - &x;
        let y = &g_new - &g;
        let sy = s.dot(&y);
        if sy > 1e-12 {
            let rho = 1.0 / sy;
            let i = DMatrix::<f64>::identity(n, n);
            let left = &i - (&s * y.transpose()) * rho;
            let right = &i - (&y * s.transpose()) * rho;
            h_inv = &left * h_inv * &right + (&s * s.transpose()) * rho;
        }
        x = x_new;
        fx = f_new;
        g = g_new;
    }
    (x, fx)
}
