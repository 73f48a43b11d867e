//! B-QG2 model specification: two latent Gaussian factors with a floored
//! quadratic short rate.
//!
//! Dynamics under the data-generating measure P and the risk-neutral
//! measure Q:
//!
//! ```text
//! dX = K_P (theta_P - X) dt + Sigma dB_P
//! dX = K_Q (theta_Q - X) dt + Sigma dB_Q
//! r(X) = max(rho + X' Phi X, 0)
//! ```
//!
//! with the affine market price of risk `lambda_P(x) = lambda0_P + Lambda_P x`
//! linking the two parameter sets through `K_Q = K_P + Sigma Lambda_P` and
//! `K_Q theta_Q = K_P theta_P - Sigma lambda0_P`.
//!
//! Identification restrictions: `K_P[1,2] = 0`, `delta = 0`, `Sigma = 0.1 I`.
//! Existence restrictions: eigenvalues of `K_P` have positive real parts and
//! `Phi` is positive semidefinite (`D1, D2 >= 0`, `D1 * D2 > 0`).

use nalgebra::{Matrix2, Vector2};

use crate::error::{Error, Result};
use crate::math::eigen_real_parts;

/// Fixed diffusion scale: `Sigma = SIGMA_SCALE * I`.
pub const SIGMA_SCALE: f64 = 0.1;

/// Tolerance for the P/Q consistency relations.
pub const CONSISTENCY_TOL: f64 = 1e-10;

/// Latent two-factor state.
pub type StateVector = Vector2<f64>;

/// Full parameter set of the B-QG2 model, holding both the P and Q dynamics
/// with the consistency relations enforced at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// Mean reversion under P (1/year). `k_p[(0,1)]` is pinned to zero.
    pub k_p: Matrix2<f64>,
    /// Long-run mean under P.
    pub theta_p: Vector2<f64>,
    /// Mean reversion under Q (1/year).
    pub k_q: Matrix2<f64>,
    /// Long-run mean under Q.
    pub theta_q: Vector2<f64>,
    /// Constant market price of risk.
    pub lambda0_p: Vector2<f64>,
    /// State loading of the market price of risk.
    pub lambda_mat_p: Matrix2<f64>,
    /// Shadow-rate shift (1/year).
    pub rho: f64,
    /// Factorization scalars of the quadratic form `Phi`.
    pub d1: f64,
    pub d2: f64,
    pub a: f64,
}

/// Outcome of [`ModelParams::validate`]: the list of violated restrictions.
#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Build the quadratic form `Phi = L diag(D1, D2) L'` with unit lower
/// triangular `L` having subdiagonal entry `A`.
///
/// The result is symmetric PSD with `Phi11 = D1`, `Phi12 = A D1`,
/// `Phi22 = A^2 D1 + D2`.
pub fn build_phi(d1: f64, d2: f64, a: f64) -> Result<Matrix2<f64>> {
    if d1 < 0.0 || d2 < 0.0 || d1 * d2 <= 0.0 {
        return Err(Error::model(format!(
            "Phi factorization requires D1, D2 >= 0 and D1*D2 > 0 (got D1={d1}, D2={d2})"
        )));
    }
    Ok(Matrix2::new(d1, a * d1, a * d1, a * a * d1 + d2))
}

/// Recover the market price of risk from a (P, Q) parameter pair:
/// `Lambda_P = Sigma^-1 (K_Q - K_P)` and
/// `lambda0_P = Sigma^-1 (K_P theta_P - K_Q theta_Q)`.
pub fn implied_lambda_p(
    k_p: &Matrix2<f64>,
    theta_p: &Vector2<f64>,
    k_q: &Matrix2<f64>,
    theta_q: &Vector2<f64>,
    sigma: &Matrix2<f64>,
) -> Result<(Vector2<f64>, Matrix2<f64>)> {
    let sigma_inv = sigma
        .try_inverse()
        .ok_or_else(|| Error::model("singular Sigma"))?;
    let lambda_mat = sigma_inv * (k_q - k_p);
    let lambda0 = sigma_inv * (k_p * theta_p - k_q * theta_q);
    Ok((lambda0, lambda_mat))
}

impl ModelParams {
    /// Construct the full consistent parameter set from the free coordinates
    /// used in estimation: the Q-side block plus the five free market price
    /// of risk entries. `Lambda_P[(0,1)]` is implied by the identification
    /// restriction `K_P[(0,1)] = 0`, and the P-side parameters follow from
    /// the consistency relations.
    #[allow(clippy::too_many_arguments)]
    pub fn from_q_side(
        k_q: Matrix2<f64>,
        theta_q: Vector2<f64>,
        rho: f64,
        d1: f64,
        d2: f64,
        a: f64,
        lambda0_p: Vector2<f64>,
        lambda_free: [f64; 3], // (1,1), (2,1), (2,2) entries of Lambda_P
    ) -> Result<Self> {
        build_phi(d1, d2, a)?;
        let lambda12 = k_q[(0, 1)] / SIGMA_SCALE;
        let lambda_mat_p = Matrix2::new(lambda_free[0], lambda12, lambda_free[1], lambda_free[2]);
        let sigma = Self::sigma_matrix();
        let mut k_p = k_q - sigma * lambda_mat_p;
        k_p[(0, 1)] = 0.0; // exactly zero by construction; kill roundoff
        let rhs = k_q * theta_q + sigma * lambda0_p;
        let theta_p = k_p
            .try_inverse()
            .ok_or_else(|| Error::model("implied K_P is singular; theta_P undefined"))?
            * rhs;
        Ok(ModelParams {
            k_p,
            theta_p,
            k_q,
            theta_q,
            lambda0_p,
            lambda_mat_p,
            rho,
            d1,
            d2,
            a,
        })
    }

    pub fn sigma_matrix() -> Matrix2<f64> {
        Matrix2::identity() * SIGMA_SCALE
    }

    /// The quadratic form of the shadow rate.
    pub fn phi(&self) -> Matrix2<f64> {
        // Invariants guarantee this cannot fail for a constructed instance.
        build_phi(self.d1, self.d2, self.a).expect("valid Phi factorization")
    }

    /// Nominal short rate `r(x) = max(rho + x' Phi x, 0)`.
    pub fn short_rate(&self, x: &StateVector) -> f64 {
        self.shadow_rate(x).max(0.0)
    }

    /// Unfloored shadow rate `rho + x' Phi x`.
    pub fn shadow_rate(&self, x: &StateVector) -> f64 {
        let phi = self.phi();
        self.rho + (x.transpose() * phi * x)[(0, 0)]
    }

    /// Check every identification and existence restriction plus the P/Q
    /// consistency relations; returns the full list of violations.
    pub fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        let sigma = Self::sigma_matrix();
        if self.k_p[(0, 1)].abs() > CONSISTENCY_TOL {
            report
                .violations
                .push(format!("identification: K_P[1,2] must be 0, got {}", self.k_p[(0, 1)]));
        }
        let (e1, e2) = eigen_real_parts(&self.k_p);
        if e1 <= 0.0 || e2 <= 0.0 {
            report.violations.push(format!(
                "mean reversion: eigenvalues of K_P must have positive real parts, got ({e1:.6}, {e2:.6})"
            ));
        }
        if self.d1 < 0.0 || self.d2 < 0.0 || self.d1 * self.d2 <= 0.0 {
            report
                .violations
                .push(format!("Phi factorization: need D1, D2 >= 0 and D1*D2 > 0, got ({}, {})", self.d1, self.d2));
        }
        let kq_check = self.k_p + sigma * self.lambda_mat_p;
        if (kq_check - self.k_q).abs().max() > CONSISTENCY_TOL {
            report
                .violations
                .push("consistency: K_Q != K_P + Sigma Lambda_P".to_string());
        }
        let lhs = self.k_q * self.theta_q;
        let rhs = self.k_p * self.theta_p - sigma * self.lambda0_p;
        if (lhs - rhs).abs().max() > CONSISTENCY_TOL {
            report
                .violations
                .push("consistency: K_Q theta_Q != K_P theta_P - Sigma lambda0_P".to_string());
        }
        report
    }

    /// Drift of the state under P: `K_P (theta_P - x)`.
    pub fn drift_p(&self, x: &StateVector) -> Vector2<f64> {
        self.k_p * (self.theta_p - x)
    }

    /// Drift of the state under Q: `K_Q (theta_Q - x)`.
    pub fn drift_q(&self, x: &StateVector) -> Vector2<f64> {
        self.k_q * (self.theta_q - x)
    }

    /// Market price of risk under P: `lambda0_P + Lambda_P x`.
    pub fn lambda_p(&self, x: &StateVector) -> Vector2<f64> {
        self.lambda0_p + self.lambda_mat_p * x
    }

    /// Serialize to a flat `key = value` text format with unit comments.
    pub fn to_config_string(&self) -> String {
        let mut s = String::new();
        s.push_str("# B-QG2 model parameters\n");
        s.push_str("# matrices are row-major; rates and mean reversions in 1/year\n");
        let kv = |s: &mut String, k: &str, v: f64| s.push_str(&format!("{k} = {v:.12e}\n"));
        kv(&mut s, "k_q_11", self.k_q[(0, 0)]);
        kv(&mut s, "k_q_12", self.k_q[(0, 1)]);
        kv(&mut s, "k_q_21", self.k_q[(1, 0)]);
        kv(&mut s, "k_q_22", self.k_q[(1, 1)]);
        kv(&mut s, "theta_q_1", self.theta_q[0]);
        kv(&mut s, "theta_q_2", self.theta_q[1]);
        kv(&mut s, "rho", self.rho);
        kv(&mut s, "d1", self.d1);
        kv(&mut s, "d2", self.d2);
        kv(&mut s, "a", self.a);
        kv(&mut s, "lambda0_p_1", self.lambda0_p[0]);
        kv(&mut s, "lambda0_p_2", self.lambda0_p[1]);
        kv(&mut s, "lambda_p_11", self.lambda_mat_p[(0, 0)]);
        kv(&mut s, "lambda_p_21", self.lambda_mat_p[(1, 0)]);
        kv(&mut s, "lambda_p_22", self.lambda_mat_p[(1, 1)]);
        s.push_str("# derived P-side parameters (informational, re-derived on load)\n");
        s.push_str(&format!("# k_p = [[{:.6}, 0], [{:.6}, {:.6}]]\n", self.k_p[(0, 0)], self.k_p[(1, 0)], self.k_p[(1, 1)]));
        s.push_str(&format!("# theta_p = [{:.6}, {:.6}]\n", self.theta_p[0], self.theta_p[1]));
        s
    }

    /// Parse the flat `key = value` format written by [`to_config_string`].
    pub fn from_config_str(text: &str) -> Result<Self> {
        let mut map = std::collections::HashMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::input(format!("line {}: expected key = value", lineno + 1)))?;
            let v: f64 = value
                .trim()
                .parse()
                .map_err(|_| Error::input(format!("line {}: bad number '{}'", lineno + 1, value.trim())))?;
            map.insert(key.trim().to_string(), v);
        }
        let get = |k: &str| -> Result<f64> {
            map.get(k)
                .copied()
                .ok_or_else(|| Error::input(format!("missing parameter '{k}'")))
        };
        ModelParams::from_q_side(
            Matrix2::new(get("k_q_11")?, get("k_q_12")?, get("k_q_21")?, get("k_q_22")?),
            Vector2::new(get("theta_q_1")?, get("theta_q_2")?),
            get("rho")?,
            get("d1")?,
            get("d2")?,
            get("a")?,
            Vector2::new(get("lambda0_p_1")?, get("lambda0_p_2")?),
            [get("lambda_p_11")?, get("lambda_p_21")?, get("lambda_p_22")?],
        )
    }
}

/// Benchmark parameter set estimated on daily US Treasury CMT data
/// (1993-10-01 to 2015-08-19), used as the reference fixture throughout the
/// test suite and shipped with the CLI.
pub fn reference_params() -> ModelParams {
    ModelParams::from_q_side(
        Matrix2::new(0.3220, 0.0415, 0.6391, 0.0809),
        Vector2::new(0.9302, -5.9261),
        -0.0048,
        0.2723,
        0.0223,
        0.3238,
        Vector2::new(-0.8929, -0.9589),
        [-3.3292, 4.2136, 0.4012],
    )
    .expect("reference parameters are valid")
}

/// Standard errors of the five free market-price-of-risk parameters of the
/// reference estimate, in the order (lambda0_1, lambda0_2, Lambda_11,
/// Lambda_21, Lambda_22).
pub fn reference_mpr_std_errors() -> [f64; 5] {
    [0.0556, 0.0347, 0.8822, 1.1461, 0.0997]
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn phi_identity_case() {
        let phi = build_phi(1.0, 1.0, 0.0).unwrap();
        assert_eq!(phi, Matrix2::identity());
    }

    #[test]
    fn phi_reference_values() {
        let phi = build_phi(0.2723, 0.0223, 0.3238).unwrap();
        assert_relative_eq!(phi[(0, 0)], 0.2723, epsilon = 1e-12);
        assert_relative_eq!(phi[(0, 1)], 0.3238 * 0.2723, epsilon = 1e-12);
        assert_relative_eq!(phi[(0, 1)], 0.08817, epsilon = 1e-4);
        assert_relative_eq!(phi[(1, 1)], 0.3238 * 0.3238 * 0.2723 + 0.0223, epsilon = 1e-12);
        assert_relative_eq!(phi[(1, 1)], 0.05085, epsilon = 1e-4);
    }

    #[test]
    fn phi_degenerate_rejected() {
        assert!(build_phi(1.0, 0.0, 1.0).is_err());
        assert!(build_phi(0.0, 1.0, 0.5).is_err());
        assert!(build_phi(-0.1, 1.0, 0.0).is_err());
    }

    #[test]
    fn phi_is_psd_over_admissible_range() {
        for &(d1, d2, a) in &[(0.01, 2.0, -3.0), (5.0, 0.001, 0.5), (0.2723, 0.0223, 0.3238)] {
            let phi = build_phi(d1, d2, a).unwrap();
            let (e1, e2) = eigen_real_parts(&phi);
            assert!(e1 >= -1e-12 && e2 >= -1e-12, "Phi not PSD for ({d1},{d2},{a})");
        }
    }

    #[test]
    fn short_rate_examples() {
        let p = reference_params();
        // at the origin the shadow rate equals rho < 0, so the floor binds
        assert_eq!(p.short_rate(&Vector2::zeros()), 0.0);
        assert_relative_eq!(p.shadow_rate(&Vector2::zeros()), -0.0048, epsilon = 1e-12);

        // unit quadratic
        let unit = ModelParams::from_q_side(
            Matrix2::new(0.5, 0.0, 0.0, 0.5),
            Vector2::zeros(),
            0.0,
            1.0,
            1.0,
            0.0,
            Vector2::zeros(),
            [0.0, 0.0, 0.0],
        )
        .unwrap();
        assert_relative_eq!(unit.short_rate(&Vector2::new(0.1, 0.0)), 0.01, epsilon = 1e-14);

        // direct quadratic arithmetic at (0.2, 1.0)
        let phi = p.phi();
        let x = Vector2::new(0.2, 1.0);
        let expect = -0.0048
            + 0.04 * phi[(0, 0)]
            + 2.0 * 0.2 * 1.0 * phi[(0, 1)]
            + 1.0 * phi[(1, 1)];
        assert_relative_eq!(p.short_rate(&x), expect, epsilon = 1e-12);
        assert_relative_eq!(p.short_rate(&x), 0.0921, epsilon = 2e-4);
    }

    #[test]
    fn reference_params_are_valid() {
        let p = reference_params();
        let report = p.validate();
        assert!(report.is_valid(), "violations: {:?}", report.violations);
        // implied Lambda_12 = K_Q12 / 0.1
        assert_relative_eq!(p.lambda_mat_p[(0, 1)], 0.415, epsilon = 1e-12);
        // stationary-mode shadow rate is strictly positive
        assert!(p.shadow_rate(&p.theta_p) > 0.0);
    }

    #[test]
    fn validate_flags_bad_mean_reversion() {
        let mut p = reference_params();
        p.k_p = Matrix2::new(-0.1, 0.0, 0.2, 0.3);
        let report = p.validate();
        assert!(!report.is_valid());
        assert!(report.violations.iter().any(|v| v.contains("mean reversion")));
    }

    #[test]
    fn implied_lambda_matches_reference_entry() {
        let p = reference_params();
        let (l0, lmat) = implied_lambda_p(
            &p.k_p,
            &p.theta_p,
            &p.k_q,
            &p.theta_q,
            &ModelParams::sigma_matrix(),
        )
        .unwrap();
        assert_relative_eq!(lmat[(0, 1)], 0.415, epsilon = 1e-10);
        assert_relative_eq!(lmat[(0, 1)], 0.4152, epsilon = 3e-4);
        assert_relative_eq!(l0[0], p.lambda0_p[0], epsilon = 1e-9);
        assert_relative_eq!(l0[1], p.lambda0_p[1], epsilon = 1e-9);
    }

    #[test]
    fn implied_lambda_zero_when_measures_agree() {
        let k = Matrix2::new(0.5, 0.0, 0.1, 0.3);
        let th = Vector2::new(0.2, -0.1);
        let (l0, lmat) =
            implied_lambda_p(&k, &th, &k, &th, &ModelParams::sigma_matrix()).unwrap();
        assert!(l0.abs().max() < 1e-14);
        assert!(lmat.abs().max() < 1e-14);
    }

    #[test]
    fn config_round_trip() {
        let p = reference_params();
        let text = p.to_config_string();
        let q = ModelParams::from_config_str(&text).unwrap();
        assert!((q.k_p - p.k_p).abs().max() < 1e-11);
        assert!((q.theta_p - p.theta_p).abs().max() < 1e-10);
        assert_eq!(q.rho, p.rho);
    }
}
