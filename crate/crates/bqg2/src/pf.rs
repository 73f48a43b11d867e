//! Principal eigenpair extraction of the pricing operator.
//!
//! The positive eigenfunction is recovered from the ratio limit of bond
//! prices: solve the pricing PDE for integer maturities `n`, track
//! `M_n = max P(n+1,x)/P(n,x)` and `m_n = min P(n+1,x)/P(n,x)` over the
//! analytics region, and stop at the first `N` with `M_N - m_N <= eps`.
//! Then `e^{-lambda} = (m_N + M_N)/2` and `pi(x) = e^{lambda N} P(N, x)`.

use nalgebra::{DMatrix, Matrix2, Vector2};

use crate::error::{Error, Result};
use crate::math::least_squares;
use crate::model_core::{ModelParams, StateVector};
use crate::pde::{GridSpec, PdeSolver, RateSpec};

/// Reference state where the eigenfunction is normalized to one. All
/// downstream quantities are invariant to this choice.
pub const PI_REFERENCE_STATE: (f64, f64) = (0.0, 0.0);

/// Principal eigenvalue and grid-sampled eigenfunction, restricted to the
/// analytics region.
#[derive(Debug, Clone)]
pub struct Eigenpair {
    /// Principal eigenvalue rate (1/year).
    pub lambda: f64,
    /// Stopping horizon N (years).
    pub n_horizon: usize,
    /// Tolerance used by the stopping rule.
    pub eps: f64,
    /// Final ratio gap `M_N - m_N`.
    pub gap: f64,
    /// Node coordinates of the analytics subgrid.
    pub x1: Vec<f64>,
    pub x2: Vec<f64>,
    /// `log pi` at the subgrid nodes, normalized to zero at the reference
    /// state.
    pub log_pi: DMatrix<f64>,
}

/// Exponential-quadratic least-squares fit `pi(x) ~ exp(x'Q x + l'x + c)`.
#[derive(Debug, Clone)]
pub struct ExpQuadFit {
    pub q: Matrix2<f64>,
    pub l: Vector2<f64>,
    pub c: f64,
    /// Max relative error of the fitted pi over the fit nodes.
    pub max_rel_err: f64,
}

impl ExpQuadFit {
    /// Coefficients in display order: (x1^2, x2^2, x1*x2, x1, x2).
    pub fn display_coeffs(&self) -> [f64; 5] {
        [
            self.q[(0, 0)],
            self.q[(1, 1)],
            2.0 * self.q[(0, 1)],
            self.l[0],
            self.l[1],
        ]
    }

    pub fn log_pi_at(&self, x: &StateVector) -> f64 {
        (x.transpose() * self.q * x)[(0, 0)] + self.l.dot(x) + self.c
    }

    /// Gradient of `log pi` under the fit: `2 Q x + l`.
    pub fn grad_log_pi(&self, x: &StateVector) -> Vector2<f64> {
        self.q * x * 2.0 + self.l
    }
}

/// Run the ratio-limit extraction with the floored (shadow-rate) pricing
/// operator.
pub fn extract(
    params: &ModelParams,
    grid: &GridSpec,
    eps: f64,
    horizon_cap_years: usize,
) -> Result<Eigenpair> {
    extract_with_rate(params, grid, eps, horizon_cap_years, RateSpec::Floored)
}

/// Extraction with an explicit rate specification (the unfloored variant is
/// used to cross-check against the Riccati stationary limit).
pub fn extract_with_rate(
    params: &ModelParams,
    grid: &GridSpec,
    eps: f64,
    horizon_cap_years: usize,
    rate: RateSpec,
) -> Result<Eigenpair> {
    if eps <= 0.0 {
        return Err(Error::domain("extraction tolerance must be positive"));
    }
    let mut solver = PdeSolver::new(params, grid, rate)?;
    let (ri, rj) = grid.analytic_index_ranges();
    solver.advance_to(1.0)?;
    let mut prev = solver.values().clone(); // P(1); first ratio is P(2)/P(1)
    let mut gap = f64::INFINITY;
    for n_next in 2..=horizon_cap_years {
        solver.advance_to(n_next as f64)?;
        let cur = solver.values();
        let mut max_ratio = f64::NEG_INFINITY;
        let mut min_ratio = f64::INFINITY;
        for j in rj.clone() {
            for i in ri.clone() {
                let ratio = cur[(i, j)] / prev[(i, j)];
                max_ratio = max_ratio.max(ratio);
                min_ratio = min_ratio.min(ratio);
            }
        }
        gap = max_ratio - min_ratio;
        if gap <= eps {
            let n = n_next - 1;
            let lambda = -((max_ratio + min_ratio) / 2.0).ln();
            return Ok(build_pair(grid, &prev, lambda, n, eps, gap));
        }
        prev.copy_from(cur);
    }
    Err(Error::numerics(format!(
        "eigenpair extraction did not converge within {horizon_cap_years}y; last gap {gap:.3e}"
    )))
}

fn build_pair(
    grid: &GridSpec,
    price_at_n: &DMatrix<f64>,
    lambda: f64,
    n: usize,
    eps: f64,
    gap: f64,
) -> Eigenpair {
    let (ri, rj) = grid.analytic_index_ranges();
    let x1: Vec<f64> = ri.clone().map(|i| grid.x1_node(i)).collect();
    let x2: Vec<f64> = rj.clone().map(|j| grid.x2_node(j)).collect();
    let mut log_pi = DMatrix::zeros(x1.len(), x2.len());
    for (jj, j) in rj.clone().enumerate() {
        for (ii, i) in ri.clone().enumerate() {
            log_pi[(ii, jj)] = lambda * n as f64 + price_at_n[(i, j)].ln();
        }
    }
    let mut pair = Eigenpair {
        lambda,
        n_horizon: n,
        eps,
        gap,
        x1,
        x2,
        log_pi,
    };
    let offset = pair
        .log_pi_at(&Vector2::new(PI_REFERENCE_STATE.0, PI_REFERENCE_STATE.1))
        .expect("reference state inside analytics region");
    pair.log_pi.iter_mut().for_each(|v| *v -= offset);
    pair
}

impl Eigenpair {
    pub fn h1(&self) -> f64 {
        self.x1[1] - self.x1[0]
    }

    pub fn h2(&self) -> f64 {
        self.x2[1] - self.x2[0]
    }

    pub fn contains(&self, x: &StateVector) -> bool {
        x[0] >= self.x1[0] - 1e-12
            && x[0] <= *self.x1.last().unwrap() + 1e-12
            && x[1] >= self.x2[0] - 1e-12
            && x[1] <= *self.x2.last().unwrap() + 1e-12
    }

    /// Bilinear interpolation of `log pi`; errors outside the analytics
    /// region.
    pub fn log_pi_at(&self, x: &StateVector) -> Result<f64> {
        if !self.contains(x) {
            return Err(Error::domain(format!(
                "state ({}, {}) outside the analytics region",
                x[0], x[1]
            )));
        }
        let t1 = ((x[0] - self.x1[0]) / self.h1()).clamp(0.0, (self.x1.len() - 1) as f64);
        let t2 = ((x[1] - self.x2[0]) / self.h2()).clamp(0.0, (self.x2.len() - 1) as f64);
        let i = (t1.floor() as usize).min(self.x1.len() - 2);
        let j = (t2.floor() as usize).min(self.x2.len() - 2);
        let u = t1 - i as f64;
        let w = t2 - j as f64;
        Ok((1.0 - u) * (1.0 - w) * self.log_pi[(i, j)]
            + u * (1.0 - w) * self.log_pi[(i + 1, j)]
            + (1.0 - u) * w * self.log_pi[(i, j + 1)]
            + u * w * self.log_pi[(i + 1, j + 1)])
    }

    pub fn pi_at(&self, x: &StateVector) -> Result<f64> {
        Ok(self.log_pi_at(x)?.exp())
    }
}

/// Least-squares fit of `log pi` to a quadratic polynomial over the
/// analytics subgrid nodes.
pub fn fit_exp_quadratic(pair: &Eigenpair) -> Result<ExpQuadFit> {
    let n1 = pair.x1.len();
    let n2 = pair.x2.len();
    let n = n1 * n2;
    let mut design = DMatrix::zeros(n, 6);
    let mut y = nalgebra::DVector::zeros(n);
    let mut row = 0;
    for j in 0..n2 {
        let x2 = pair.x2[j];
        for i in 0..n1 {
            let x1 = pair.x1[i];
            design[(row, 0)] = x1 * x1;
            design[(row, 1)] = x2 * x2;
            design[(row, 2)] = x1 * x2;
            design[(row, 3)] = x1;
            design[(row, 4)] = x2;
            design[(row, 5)] = 1.0;
            y[row] = pair.log_pi[(i, j)];
            row += 1;
        }
    }
    let beta = least_squares(&design, &y)?;
    let fit = ExpQuadFit {
        q: Matrix2::new(beta[0], beta[2] / 2.0, beta[2] / 2.0, beta[1]),
        l: Vector2::new(beta[3], beta[4]),
        c: beta[5],
        max_rel_err: 0.0,
    };
    let mut max_rel = 0.0f64;
    for j in 0..n2 {
        for i in 0..n1 {
            let x = Vector2::new(pair.x1[i], pair.x2[j]);
            let delta = fit.log_pi_at(&x) - pair.log_pi[(i, j)];
            max_rel = max_rel.max((delta.exp() - 1.0).abs());
        }
    }
    Ok(ExpQuadFit {
        max_rel_err: max_rel,
        ..fit
    })
}

/// Long bond gross-return path `L_t = e^{lambda t} pi(X_t) / pi(X_0)`
/// along a state path sampled at `times` (years since the first date).
pub fn long_bond_path(pair: &Eigenpair, times: &[f64], states: &[StateVector]) -> Result<Vec<f64>> {
    if times.len() != states.len() || times.is_empty() {
        return Err(Error::domain("times and states must be equal-length and nonempty"));
    }
    let log_pi0 = pair.log_pi_at(&states[0])?;
    let t0 = times[0];
    times
        .iter()
        .zip(states)
        .map(|(&t, x)| {
            Ok((pair.lambda * (t - t0) + pair.log_pi_at(x)? - log_pi0).exp())
        })
        .collect()
}
