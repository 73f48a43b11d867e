//! Closed-form oracle for the unfloored quadratic-Gaussian limit.
//!
//! With the raw quadratic rate `rho + x'Phi x` (no positive part), bond
//! prices are exponential-quadratic, `P = exp(-x'C x - b'x - a)`, where
//! `(C, b, a)` solve the matrix Riccati system
//!
//! ```text
//! C' = Phi - C K - K'C - 2 sigma^2 C C          C(0) = 0
//! b' = 2 C K theta - K'b - 2 sigma^2 C b        b(0) = 0
//! a' = rho + b'K theta - sigma^2/2 |b|^2 + sigma^2 tr C,   a(0) = 0
//! ```
//!
//! with `K = K_Q`, `theta = theta_Q`. Integrated by an adaptive
//! Dormand-Prince 5(4) stepper with local tolerance 1e-10. This path is
//! kept independent of the finite-difference engine and serves as its
//! verification oracle.

use nalgebra::{Matrix2, Vector2};

use crate::error::{Error, Result};
use crate::model_core::{ModelParams, StateVector, SIGMA_SCALE};

/// Riccati coefficients `(C, b, a)` at one maturity.
#[derive(Debug, Clone, Copy)]
pub struct RiccatiCoeffs {
    pub c: Matrix2<f64>,
    pub b: Vector2<f64>,
    pub a: f64,
}

impl RiccatiCoeffs {
    pub fn price(&self, x: &StateVector) -> f64 {
        let quad = (x.transpose() * self.c * x)[(0, 0)];
        (-quad - self.b.dot(x) - self.a).exp()
    }

    pub fn yield_at(&self, tau: f64, x: &StateVector) -> f64 {
        -self.price(x).ln() / tau
    }
}

fn rhs(params: &ModelParams, y: &[f64; 6]) -> [f64; 6] {
    let sig2 = SIGMA_SCALE * SIGMA_SCALE;
    let phi = params.phi();
    let k = params.k_q;
    let theta = params.theta_q;
    let c = Matrix2::new(y[0], y[1], y[1], y[2]);
    let b = Vector2::new(y[3], y[4]);
    let dc = phi - c * k - k.transpose() * c - c * c * (2.0 * sig2);
    let dc = (dc + dc.transpose()) * 0.5;
    let db = c * (k * theta) * 2.0 - k.transpose() * b - c * b * (2.0 * sig2);
    let da = params.rho + b.dot(&(k * theta)) - 0.5 * sig2 * b.norm_squared() + sig2 * c.trace();
    [dc[(0, 0)], dc[(0, 1)], dc[(1, 1)], db[0], db[1], da]
}

/// Dormand-Prince 5(4) with step-size control, integrating from `t0` to `t1`.
fn dp54(params: &ModelParams, y0: [f64; 6], t0: f64, t1: f64, tol: f64) -> Result<[f64; 6]> {
    // Butcher tableau (standard DP coefficients).
    const A: [[f64; 6]; 6] = [
        [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
        [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
        [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
    ];
    const B5: [f64; 7] = [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
        0.0,
    ];
    const B4: [f64; 7] = [
        5179.0 / 57600.0,
        0.0,
        7571.0 / 16695.0,
        393.0 / 640.0,
        -92097.0 / 339200.0,
        187.0 / 2100.0,
        1.0 / 40.0,
    ];

    let mut t = t0;
    let mut y = y0;
    let mut h = ((t1 - t0) / 50.0).min(0.1).max(1e-6);
    let mut rejected_in_a_row = 0usize;
    while t < t1 - 1e-14 {
        h = h.min(t1 - t);
        let mut k = [[0.0; 6]; 7];
        k[0] = rhs(params, &y);
        for stage in 1..7 {
            let mut ys = y;
            let row = if stage < 7 { &A[stage - 1] } else { unreachable!() };
            for (s, kr) in k.iter().enumerate().take(stage) {
                let coeff = if stage == 6 { B5[s] } else { row[s] };
                for d in 0..6 {
                    ys[d] += h * coeff * kr[d];
                }
            }
            k[stage] = rhs(params, &ys);
        }
        let mut y5 = y;
        let mut err = 0.0f64;
        for d in 0..6 {
            let mut v5 = 0.0;
            let mut v4 = 0.0;
            for s in 0..7 {
                v5 += B5[s] * k[s][d];
                v4 += B4[s] * k[s][d];
            }
            y5[d] += h * v5;
            let scale = tol + tol * y[d].abs().max(y5[d].abs());
            err = err.max((h * (v5 - v4)).abs() / scale);
        }
        if err <= 1.0 {
            t += h;
            y = y5;
            rejected_in_a_row = 0;
            h *= (0.9 * err.max(1e-10).powf(-0.2)).clamp(0.2, 5.0);
        } else {
            rejected_in_a_row += 1;
            if rejected_in_a_row > 50 {
                return Err(Error::numerics("Riccati stepper failed to find a stable step"));
            }
            h *= (0.9 * err.powf(-0.2)).clamp(0.1, 0.5);
        }
        if h < 1e-13 {
            return Err(Error::numerics("Riccati stepper step size underflow"));
        }
    }
    Ok(y)
}

/// Integrate the Riccati system and return coefficients at each requested
/// maturity (which must be nondecreasing).
pub fn coeffs_at(params: &ModelParams, taus: &[f64]) -> Result<Vec<RiccatiCoeffs>> {
    let mut out = Vec::with_capacity(taus.len());
    let mut y = [0.0; 6];
    let mut t = 0.0;
    for &tau in taus {
        if tau < t - 1e-12 {
            return Err(Error::domain("maturities must be nondecreasing"));
        }
        if tau > t + 1e-14 {
            y = dp54(params, y, t, tau, 1e-10)?;
            t = tau;
        }
        out.push(RiccatiCoeffs {
            c: Matrix2::new(y[0], y[1], y[1], y[2]),
            b: Vector2::new(y[3], y[4]),
            a: y[5],
        });
    }
    Ok(out)
}

/// Oracle bond price of the unfloored model.
pub fn price(params: &ModelParams, tau: f64, x: &StateVector) -> Result<f64> {
    Ok(coeffs_at(params, &[tau])?[0].price(x))
}

/// Stationary limit of the Riccati flow: `(C_inf, b_inf, lambda)` with
/// `lambda = lim a'(tau)`, obtained by integrating to a long horizon.
pub fn stationary(params: &ModelParams) -> Result<(Matrix2<f64>, Vector2<f64>, f64)> {
    let y = dp54(params, [0.0; 6], 0.0, 600.0, 1e-10)?;
    let dy = rhs(params, &y);
    let drift_norm = dy[..5].iter().map(|v| v.abs()).fold(0.0, f64::max);
    if drift_norm > 1e-8 {
        return Err(Error::numerics(format!(
            "Riccati flow not stationary at the probe horizon (residual {drift_norm:.2e})"
        )));
    }
    Ok((
        Matrix2::new(y[0], y[1], y[1], y[2]),
        Vector2::new(y[3], y[4]),
        dy[5],
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model_core::reference_params;
    use approx::assert_relative_eq;

    #[test]
    fn zero_maturity_price_is_one() {
        let p = reference_params();
        assert_eq!(price(&p, 0.0, &Vector2::new(0.1, 0.3)).unwrap(), 1.0);
    }

    #[test]
    fn constant_rate_case() {
        let p = crate::pde::tests::constant_rate_params(0.035);
        for &tau in &[0.5, 2.0, 10.0] {
            let v = price(&p, tau, &Vector2::new(0.1, 0.9)).unwrap();
            assert_relative_eq!(v, (-0.035 * tau).exp(), epsilon = 1e-9);
        }
    }

    #[test]
    fn checkpoints_match_single_shots() {
        let p = reference_params();
        let taus = [0.5, 1.0, 5.0, 10.0];
        let cs = coeffs_at(&p, &taus).unwrap();
        for (i, &tau) in taus.iter().enumerate() {
            let single = coeffs_at(&p, &[tau]).unwrap()[0];
            assert_relative_eq!(cs[i].a, single.a, epsilon = 1e-9);
            assert_relative_eq!(cs[i].c[(0, 0)], single.c[(0, 0)], epsilon = 1e-9);
        }
    }

    #[test]
    fn monte_carlo_cross_check() {
        // Unfloored Feynman-Kac expectation by exact OU sampling under Q
        // with a trapezoidal rate integral, against the ODE closed form.
        use crate::math::{chol2, expm2, lyapunov_integral};
        use rand::SeedableRng;
        use rand_distr::{Distribution, StandardNormal};

        let p = reference_params();
        let x0 = Vector2::new(0.1, 0.5);
        let tau = 5.0f64;
        let dt = 1.0f64 / 48.0;
        let n_steps = (tau / dt).round() as usize;
        let n_paths = 300_000usize;

        let f = expm2(&(-p.k_q * dt));
        let g = (Matrix2::identity() - f) * p.theta_q;
        let q = Matrix2::identity() * (SIGMA_SCALE * SIGMA_SCALE);
        let l = chol2(&lyapunov_integral(&p.k_q, &q, dt)).unwrap();
        let phi = p.phi();
        let shadow = |x: &Vector2<f64>| p.rho + (x.transpose() * phi * x)[(0, 0)];

        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(20150819);
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..n_paths {
            let mut x = x0;
            let mut integral = 0.0;
            let mut r_prev = shadow(&x);
            for _ in 0..n_steps {
                let z = Vector2::new(
                    StandardNormal.sample(&mut rng),
                    StandardNormal.sample(&mut rng),
                );
                x = f * x + g + l * z;
                let r = shadow(&x);
                integral += 0.5 * (r_prev + r) * dt;
                r_prev = r;
            }
            let payoff = (-integral).exp();
            sum += payoff;
            sum_sq += payoff * payoff;
        }
        let mean = sum / n_paths as f64;
        let var = (sum_sq / n_paths as f64 - mean * mean).max(0.0);
        let se = (var / n_paths as f64).sqrt();

        let oracle = price(&p, tau, &x0).unwrap();
        assert!(
            (oracle - mean).abs() <= 3.0 * se + 5e-5,
            "oracle {oracle} vs MC {mean} +- {se}"
        );
    }
}
