//! Small dense linear-algebra helpers for the 2x2 systems used throughout:
//! matrix exponential, finite-horizon and stationary Lyapunov solvers, and
//! linear least squares.

use nalgebra::{DMatrix, DVector, Matrix2};

use crate::error::{Error, Result};

/// Matrix exponential of a 2x2 real matrix by scaling and squaring with a
/// Taylor series on the scaled matrix.
pub fn expm2(m: &Matrix2<f64>) -> Matrix2<f64> {
    let norm = m.abs().row_sum().max();
    let mut squarings = 0u32;
    let mut scaled = *m;
    if norm > 0.5 {
        squarings = (norm / 0.5).log2().ceil() as u32;
        scaled /= 2f64.powi(squarings as i32);
    }
    // ||scaled|| <= 0.5, so 14 Taylor terms reach full double precision.
    let mut result = Matrix2::identity();
    let mut term = Matrix2::identity();
    for k in 1..=14 {
        term = (term * scaled) / k as f64;
        result += term;
    }
    for _ in 0..squarings {
        result = result * result;
    }
    result
}

/// Finite-horizon Lyapunov integral `V(t) = \int_0^t e^{-K s} Q e^{-K' s} ds`,
/// obtained by integrating `dV/dt = Q - K V - V K'` with classical RK4.
pub fn lyapunov_integral(k: &Matrix2<f64>, q: &Matrix2<f64>, t: f64) -> Matrix2<f64> {
    let n_steps = ((t * 64.0).ceil() as usize).clamp(16, 4096);
    let h = t / n_steps as f64;
    let rhs = |v: &Matrix2<f64>| q - k * v - v * k.transpose();
    let mut v = Matrix2::zeros();
    for _ in 0..n_steps {
        let k1 = rhs(&v);
        let k2 = rhs(&(v + k1 * (h / 2.0)));
        let k3 = rhs(&(v + k2 * (h / 2.0)));
        let k4 = rhs(&(v + k3 * h));
        v += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    }
    // Symmetrize against roundoff drift.
    (v + v.transpose()) * 0.5
}

/// Stationary Lyapunov solution of `K V + V K' = Q` for a 2x2 `K` whose
/// eigenvalues have positive real parts. Solved as a 3x3 linear system in
/// the independent entries (v11, v12, v22).
pub fn lyapunov_stationary(k: &Matrix2<f64>, q: &Matrix2<f64>) -> Result<Matrix2<f64>> {
    let (a, b, c, d) = (k[(0, 0)], k[(0, 1)], k[(1, 0)], k[(1, 1)]);
    // Equations for entries of K V + V K' = Q with V symmetric:
    //  (1,1): 2a v11 + 2b v12            = q11
    //  (1,2): c v11 + (a + d) v12 + b v22 = q12
    //  (2,2): 2c v12 + 2d v22            = q22
    let m = nalgebra::Matrix3::new(
        2.0 * a,
        2.0 * b,
        0.0,
        c,
        a + d,
        b,
        0.0,
        2.0 * c,
        2.0 * d,
    );
    let rhs = nalgebra::Vector3::new(q[(0, 0)], q[(0, 1)], q[(1, 1)]);
    let sol = m
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::numerics("singular Lyapunov system"))?;
    Ok(Matrix2::new(sol[0], sol[1], sol[1], sol[2]))
}

/// Eigenvalue real parts of a 2x2 real matrix.
pub fn eigen_real_parts(m: &Matrix2<f64>) -> (f64, f64) {
    let tr = m.trace();
    let det = m.determinant();
    let disc = tr * tr - 4.0 * det;
    if disc >= 0.0 {
        let s = disc.sqrt();
        ((tr + s) / 2.0, (tr - s) / 2.0)
    } else {
        (tr / 2.0, tr / 2.0)
    }
}

/// Ordinary least squares `argmin ||X beta - y||` via thin SVD.
/// Errors on rank deficiency.
pub fn least_squares(design: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    let svd = design.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if smax <= 0.0 || smin / smax < 1e-12 {
        return Err(Error::numerics("rank-deficient least-squares design"));
    }
    svd.solve(y, 0.0)
        .map_err(|e| Error::numerics(format!("least-squares solve failed: {e}")))
}

/// Draw from N(0, V) given its (symmetric PSD) covariance via Cholesky with
/// a diagonal jitter fallback for semidefinite V.
pub fn chol2(v: &Matrix2<f64>) -> Result<Matrix2<f64>> {
    let sym = (v + v.transpose()) * 0.5;
    for jitter in [0.0, 1e-14, 1e-12] {
        let shifted = sym + Matrix2::identity() * jitter;
        if let Some(c) = nalgebra::Cholesky::new(shifted) {
            return Ok(c.l());
        }
    }
    Err(Error::numerics("covariance not positive semidefinite"))
}

/// Natural cubic spline through a set of strictly increasing knots.
///
/// "Natural" fixes the second derivative to zero at both end knots; between
/// knots the interpolant is the usual piecewise cubic with continuous first
/// and second derivatives.
#[derive(Debug, Clone)]
pub struct CubicSpline {
    xs: Vec<f64>,
    ys: Vec<f64>,
    /// Second derivatives at the knots.
    m: Vec<f64>,
}

impl CubicSpline {
    pub fn natural(xs: &[f64], ys: &[f64]) -> Result<CubicSpline> {
        let n = xs.len();
        if n != ys.len() || n < 2 {
            return Err(Error::input("spline needs at least two knots with matching values"));
        }
        if xs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::input("spline knots must be strictly increasing"));
        }
        let mut m = vec![0.0; n];
        if n > 2 {
            // Tridiagonal system for interior second derivatives.
            let k = n - 2;
            let mut diag = vec![0.0; k];
            let mut upper = vec![0.0; k];
            let mut lower = vec![0.0; k];
            let mut rhs = vec![0.0; k];
            for i in 0..k {
                let h0 = xs[i + 1] - xs[i];
                let h1 = xs[i + 2] - xs[i + 1];
                lower[i] = h0;
                diag[i] = 2.0 * (h0 + h1);
                upper[i] = h1;
                rhs[i] =
                    6.0 * ((ys[i + 2] - ys[i + 1]) / h1 - (ys[i + 1] - ys[i]) / h0);
            }
            // Thomas algorithm; the boundary rows drop out (natural ends).
            for i in 1..k {
                let w = lower[i] / diag[i - 1];
                diag[i] -= w * upper[i - 1];
                rhs[i] -= w * rhs[i - 1];
            }
            m[k] = rhs[k - 1] / diag[k - 1];
            for i in (1..k).rev() {
                m[i] = (rhs[i - 1] - upper[i - 1] * m[i + 1]) / diag[i - 1];
            }
        }
        Ok(CubicSpline {
            xs: xs.to_vec(),
            ys: ys.to_vec(),
            m,
        })
    }

    pub fn x_min(&self) -> f64 {
        self.xs[0]
    }

    pub fn x_max(&self) -> f64 {
        *self.xs.last().unwrap()
    }

    /// Evaluate at `x`, which must lie within the knot range.
    pub fn eval(&self, x: f64) -> Result<f64> {
        if x < self.x_min() - 1e-12 || x > self.x_max() + 1e-12 {
            return Err(Error::domain(format!(
                "spline query {x} outside knot range [{}, {}]",
                self.x_min(),
                self.x_max()
            )));
        }
        let x = x.clamp(self.x_min(), self.x_max());
        let i = match self.xs.binary_search_by(|v| v.partial_cmp(&x).unwrap()) {
            Ok(i) => i.min(self.xs.len() - 2),
            Err(i) => i.saturating_sub(1).min(self.xs.len() - 2),
        };
        let h = self.xs[i + 1] - self.xs[i];
        let a = (self.xs[i + 1] - x) / h;
        let b = (x - self.xs[i]) / h;
        Ok(a * self.ys[i]
            + b * self.ys[i + 1]
            + ((a * a * a - a) * self.m[i] + (b * b * b - b) * self.m[i + 1]) * h * h / 6.0)
    }
}

/// FNV-1a hash of a byte string; used for reproducibility stamps in reports.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn expm_diagonal() {
        let m = Matrix2::new(0.3, 0.0, 0.0, -1.2);
        let e = expm2(&m);
        assert_relative_eq!(e[(0, 0)], 0.3f64.exp(), epsilon = 1e-12);
        assert_relative_eq!(e[(1, 1)], (-1.2f64).exp(), epsilon = 1e-12);
        assert_eq!(e[(0, 1)], 0.0);
    }

    #[test]
    fn expm_nilpotent() {
        let m = Matrix2::new(0.0, 3.0, 0.0, 0.0);
        let e = expm2(&m);
        // exp of nilpotent is I + m
        assert_relative_eq!(e[(0, 1)], 3.0, epsilon = 1e-12);
        assert_relative_eq!(e[(0, 0)], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn lyapunov_integral_matches_scalar_formula() {
        let a = 0.7;
        let k = Matrix2::new(a, 0.0, 0.0, a);
        let q = Matrix2::identity() * 0.01;
        let t = 1.5;
        let v = lyapunov_integral(&k, &q, t);
        let expect = 0.01 * (1.0 - (-2.0 * a * t).exp()) / (2.0 * a);
        assert_relative_eq!(v[(0, 0)], expect, epsilon = 1e-10);
        assert_relative_eq!(v[(1, 1)], expect, epsilon = 1e-10);
    }

    #[test]
    fn lyapunov_stationary_is_integral_limit() {
        let k = Matrix2::new(0.65, 0.0, 0.21, 0.04);
        let q = Matrix2::identity() * 0.01;
        let v_inf = lyapunov_stationary(&k, &q).unwrap();
        let v_long = lyapunov_integral(&k, &q, 400.0);
        assert_relative_eq!(v_inf[(0, 0)], v_long[(0, 0)], epsilon = 1e-8);
        assert_relative_eq!(v_inf[(0, 1)], v_long[(0, 1)], epsilon = 1e-8);
        assert_relative_eq!(v_inf[(1, 1)], v_long[(1, 1)], epsilon = 1e-8);
    }

    #[test]
    fn spline_reproduces_knots_and_lines() {
        let xs = [0.0, 0.5, 1.3, 2.0, 3.7];
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x - 0.7).collect();
        let s = CubicSpline::natural(&xs, &ys).unwrap();
        for (x, y) in xs.iter().zip(&ys) {
            assert_relative_eq!(s.eval(*x).unwrap(), *y, epsilon = 1e-12);
        }
        // a natural spline through collinear points stays linear
        assert_relative_eq!(s.eval(1.7).unwrap(), 2.0 * 1.7 - 0.7, epsilon = 1e-12);
        assert!(s.eval(4.0).is_err());
        assert!(s.eval(-0.1).is_err());
    }

    #[test]
    fn spline_two_knots_is_linear() {
        let s = CubicSpline::natural(&[1.0, 3.0], &[2.0, 8.0]).unwrap();
        assert_relative_eq!(s.eval(2.0).unwrap(), 5.0, epsilon = 1e-12);
    }

    #[test]
    fn spline_interpolates_smooth_function_closely() {
        let xs: Vec<f64> = (0..=20).map(|i| i as f64 * 0.25).collect();
        let ys: Vec<f64> = xs.iter().map(|x| (0.7 * x).sin()).collect();
        let s = CubicSpline::natural(&xs, &ys).unwrap();
        for i in 0..100 {
            let x = 0.3 + i as f64 * 0.045;
            let err = (s.eval(x).unwrap() - (0.7 * x).sin()).abs();
            // the zero-curvature end condition costs accuracy near the ends
            let tol = if (1.0..=4.0).contains(&x) { 1e-4 } else { 2e-3 };
            assert!(err < tol, "x={x}: err={err:.2e}");
        }
    }

    #[test]
    fn eig_real_parts_complex_pair() {
        let m = Matrix2::new(1.0, -2.0, 2.0, 1.0);
        let (r1, r2) = eigen_real_parts(&m);
        assert_relative_eq!(r1, 1.0);
        assert_relative_eq!(r2, 1.0);
    }
}
