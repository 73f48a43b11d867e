//! Market prices of risk under the data-generating measure P and the
//! long-term forward measure L, and the martingale-component volatility.
//!
//! The long-term factorization of the pricing kernel decomposes the
//! stochastic discount factor into the long bond return and a martingale
//! component. Girsanov's theorem identifies the market price of risk under
//! L with the logarithmic gradient of the principal eigenfunction,
//!
//! ```text
//! lambda_L(x) = Sigma' grad log pi(x),
//! ```
//!
//! and the instantaneous volatility of the martingale component is
//!
//! ```text
//! v(x) = lambda_P(x) - lambda_L(x).
//! ```
//!
//! Since `lambda_P` is affine and `log pi` is close to quadratic, `v` is
//! close to affine, `v(x) ~ v0 + V1 x`; the transition-independence
//! hypothesis (expectations hypothesis for the long bond) is `v = 0` and is
//! tested componentwise with Gaussian asymptotics.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::math::least_squares;
use crate::model_core::{ModelParams, StateVector, SIGMA_SCALE};
use crate::pf::{Eigenpair, ExpQuadFit};

/// Probability measure selector for drift computations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeasureTag {
    /// Data-generating (physical) measure.
    P,
    /// Risk-neutral measure.
    Q,
    /// Long-term forward measure (numeraire: the long bond).
    L,
}

/// Affine approximation `v(x) ~ v0 + V1 x` of the martingale-component
/// volatility on the analytics region.
#[derive(Debug, Clone)]
pub struct MartingaleVol {
    pub v0: Vector2<f64>,
    pub v1: Matrix2<f64>,
    /// Standard errors for the five free components in the order
    /// `(v0_1, v0_2, V1_11, V1_21, V1_22)`; `V1_12` is implied by the
    /// identification restriction and carries no free standard error.
    pub se: Option<[f64; 5]>,
    /// Max absolute deviation of the affine fit from the pointwise `v`
    /// over the fit nodes.
    pub max_fit_err: f64,
}

/// Names of the five tested components, in the order used throughout.
pub const V_COMPONENT_NAMES: [&str; 5] = ["v0_1", "v0_2", "V1_11", "V1_21", "V1_22"];

impl MartingaleVol {
    /// Attach standard errors (same ordering as [`V_COMPONENT_NAMES`]).
    pub fn with_se(mut self, se: [f64; 5]) -> Self {
        self.se = Some(se);
        self
    }

    /// The five free components `(v0_1, v0_2, V1_11, V1_21, V1_22)`.
    pub fn free_components(&self) -> [f64; 5] {
        [
            self.v0[0],
            self.v0[1],
            self.v1[(0, 0)],
            self.v1[(1, 0)],
            self.v1[(1, 1)],
        ]
    }

    /// Evaluate the affine approximation at `x`.
    pub fn at(&self, x: &StateVector) -> Vector2<f64> {
        self.v0 + self.v1 * x
    }
}

/// Market price of risk under P: `lambda0 + Lambda x`.
pub fn lambda_p(params: &ModelParams, x: &StateVector) -> Vector2<f64> {
    params.lambda_p(x)
}

/// Market price of risk under L from the grid-sampled eigenfunction:
/// `Sigma' grad log pi(x)` with the gradient by 4th-order central
/// differences at the four corners of the containing cell, bilinearly
/// interpolated.
///
/// Errors when `x` lies within one cell of the analytics-region boundary,
/// where the centered stencil does not fit (one-sided gradients are
/// disallowed).
pub fn lambda_l(pair: &Eigenpair, x: &StateVector) -> Result<Vector2<f64>> {
    let n1 = pair.x1.len();
    let n2 = pair.x2.len();
    let h1 = pair.h1();
    let h2 = pair.h2();
    let t1 = (x[0] - pair.x1[0]) / h1;
    let t2 = (x[1] - pair.x2[0]) / h2;
    // snap to a node when within roundoff so nodal queries at the stencil
    // margin do not spuriously fall into the neighboring cell
    let snap = |t: f64| {
        let r = t.round();
        if (t - r).abs() < 1e-9 {
            r
        } else {
            t
        }
    };
    let t1 = snap(t1);
    let t2 = snap(t2);
    let i = t1.floor() as isize;
    let j = t2.floor() as isize;
    let u = t1 - i as f64;
    let w = t2 - j as f64;
    // corner nodes used: i..i+iu where iu = 0 if x sits exactly on a node
    let iu = if u > 0.0 { 1 } else { 0 };
    let jw = if w > 0.0 { 1 } else { 0 };
    if i < 2 || i + iu > n1 as isize - 3 || j < 2 || j + jw > n2 as isize - 3 {
        return Err(Error::domain(format!(
            "state ({}, {}) is outside or within one cell of the analytics-region \
             boundary; centered gradient stencil does not fit",
            x[0], x[1]
        )));
    }
    let (i, j) = (i as usize, j as usize);
    let f = &pair.log_pi;
    let g1 = |i: usize, j: usize| {
        (-f[(i + 2, j)] + 8.0 * f[(i + 1, j)] - 8.0 * f[(i - 1, j)] + f[(i - 2, j)]) / (12.0 * h1)
    };
    let g2 = |i: usize, j: usize| {
        (-f[(i, j + 2)] + 8.0 * f[(i, j + 1)] - 8.0 * f[(i, j - 1)] + f[(i, j - 2)]) / (12.0 * h2)
    };
    // corners with zero weight are skipped: their stencils may not fit
    // when x sits exactly on a node at the admissible-index margin
    let blend = |g: &dyn Fn(usize, usize) -> f64| {
        let mut s = (1.0 - u) * (1.0 - w) * g(i, j);
        if iu == 1 {
            s += u * (1.0 - w) * g(i + 1, j);
        }
        if jw == 1 {
            s += (1.0 - u) * w * g(i, j + 1);
        }
        if iu == 1 && jw == 1 {
            s += u * w * g(i + 1, j + 1);
        }
        s
    };
    Ok(Vector2::new(blend(&g1), blend(&g2)) * SIGMA_SCALE)
}

/// Market price of risk under L from the exponential-quadratic fit:
/// `Sigma' (2 Q x + l)`. Defined on all of the state space; used outside
/// the analytics region where the grid gradient is unavailable.
pub fn lambda_l_fit(fit: &ExpQuadFit, x: &StateVector) -> Vector2<f64> {
    fit.grad_log_pi(x) * SIGMA_SCALE
}

/// `lambda_L` evaluator combining the grid gradient (inside the analytics
/// region, away from its boundary) with the exponential-quadratic fit as
/// the extrapolating fallback.
#[derive(Debug, Clone)]
pub struct LambdaLField<'a> {
    pub pair: &'a Eigenpair,
    pub fit: &'a ExpQuadFit,
}

impl LambdaLField<'_> {
    pub fn eval(&self, x: &StateVector) -> Vector2<f64> {
        lambda_l(self.pair, x).unwrap_or_else(|_| lambda_l_fit(self.fit, x))
    }
}

/// State drift under the selected measure:
/// P: `K_P (theta_P - x)`; Q: `K_Q (theta_Q - x)`;
/// L: `b_Q(x) + Sigma lambda_L(x)` with the grid-gradient `lambda_L`.
pub fn drift_under(
    tag: MeasureTag,
    params: &ModelParams,
    pair: &Eigenpair,
    x: &StateVector,
) -> Result<Vector2<f64>> {
    match tag {
        MeasureTag::P => Ok(params.drift_p(x)),
        MeasureTag::Q => Ok(params.drift_q(x)),
        MeasureTag::L => {
            Ok(params.drift_q(x) + ModelParams::sigma_matrix() * lambda_l(pair, x)?)
        }
    }
}

/// Affine least-squares fit of `v(x) = lambda_P(x) - lambda_L(x)` over the
/// analytics-region nodes where the centered gradient stencil fits.
///
/// `lambda_P` is exactly affine, so the fit residual is bounded by the
/// affine-fit residual of `lambda_L` alone. Standard errors are not
/// attached here; see [`MartingaleVol::with_se`].
pub fn martingale_vol(params: &ModelParams, pair: &Eigenpair) -> Result<MartingaleVol> {
    let n1 = pair.x1.len();
    let n2 = pair.x2.len();
    if n1 < 5 || n2 < 5 {
        return Err(Error::domain(
            "analytics subgrid too small for centered gradients",
        ));
    }
    let rows = (n1 - 4) * (n2 - 4);
    let mut design = DMatrix::zeros(rows, 3);
    let mut y1 = DVector::zeros(rows);
    let mut y2 = DVector::zeros(rows);
    let mut row = 0;
    for j in 2..n2 - 2 {
        for i in 2..n1 - 2 {
            let x = Vector2::new(pair.x1[i], pair.x2[j]);
            let v = lambda_p(params, &x) - lambda_l(pair, &x)?;
            design[(row, 0)] = x[0];
            design[(row, 1)] = x[1];
            design[(row, 2)] = 1.0;
            y1[row] = v[0];
            y2[row] = v[1];
            row += 1;
        }
    }
    let b1 = least_squares(&design, &y1)?;
    let b2 = least_squares(&design, &y2)?;
    let mv = MartingaleVol {
        v0: Vector2::new(b1[2], b2[2]),
        v1: Matrix2::new(b1[0], b1[1], b2[0], b2[1]),
        se: None,
        max_fit_err: 0.0,
    };
    let mut max_err = 0.0f64;
    for j in 2..n2 - 2 {
        for i in 2..n1 - 2 {
            let x = Vector2::new(pair.x1[i], pair.x2[j]);
            let v = lambda_p(params, &x) - lambda_l(pair, &x)?;
            max_err = max_err.max((v - mv.at(&x)).abs().max());
        }
    }
    Ok(MartingaleVol { max_fit_err: max_err, ..mv })
}

/// Two-sided Gaussian p-values for the componentwise hypotheses
/// `v0_1 = 0, v0_2 = 0, V1_11 = 0, V1_21 = 0, V1_22 = 0`, treating the
/// risk-neutral parameters and the eigenfunction as given so the standard
/// errors of the free P-side market-price-of-risk parameters carry over
/// unchanged.
pub fn test_v_zero(mv: &MartingaleVol) -> Result<[f64; 5]> {
    let se = mv.se.ok_or_else(|| {
        Error::domain("martingale-volatility standard errors are missing; attach them with with_se")
    })?;
    if se.iter().any(|&s| !(s > 0.0)) {
        return Err(Error::domain("standard errors must be positive"));
    }
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let v = mv.free_components();
    let mut p = [0.0; 5];
    for k in 0..5 {
        let z = (v[k] / se[k]).abs();
        p[k] = 2.0 * (1.0 - normal.cdf(z));
    }
    Ok(p)
}
