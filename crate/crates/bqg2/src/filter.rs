//! Sigma-point Kalman filter over the nonlinear yield measurement map,
//! quasi-maximum-likelihood estimation and sandwich standard errors.
//!
//! The latent state follows the exact discretization of the OU dynamics
//! `dX = K_P (theta_P - X) dt + Sigma dB` over a step `dt`:
//!
//! ```text
//! X_{t+1} = F X_t + g + eps,   eps ~ N(0, V),
//! F = exp(-K_P dt),  g = (I - F) theta_P,
//! V = int_0^dt exp(-K_P s) Sigma Sigma' exp(-K_P' s) ds.
//! ```
//!
//! Observed zero yields at quoted tenors equal the model yields evaluated
//! on the bond price surface plus mutually and serially independent
//! Gaussian measurement errors with per-tenor variances. The filter
//! moment-matches the measurement map over sigma points scaled by the
//! predicted covariance (an unscented update, exact for affine
//! measurements); the quasi-log-likelihood accumulates the Gaussian
//! innovation terms and is maximized over the free parameters by a
//! simplex search with a quasi-Newton polish on a reparameterized
//! unconstrained space.

use chrono::{Datelike, Duration, NaiveDate, Weekday};
use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::market_data::ZeroCurve;
use crate::math::{chol2, eigen_real_parts, expm2, lyapunov_integral, lyapunov_stationary};
use crate::model_core::{ModelParams, StateVector};
use crate::optimize::{bfgs, nelder_mead};
use crate::pde::{solve_surface_with, GridSpec, PriceSurface, RateSpec};

/// Business-daily observation step in years.
pub const DT_DAILY: f64 = 1.0 / 252.0;

/// Exact one-step discretization of the P-measure OU state dynamics.
#[derive(Debug, Clone)]
pub struct TransitionKernel {
    /// State transition matrix `exp(-K_P dt)`.
    pub f: Matrix2<f64>,
    /// Intercept `(I - F) theta_P`.
    pub g: Vector2<f64>,
    /// Conditional covariance over the step.
    pub v: Matrix2<f64>,
}

/// Exact OU discretization over a step of `dt` years.
pub fn discretize(params: &ModelParams, dt: f64) -> Result<TransitionKernel> {
    if !(dt > 0.0) {
        return Err(Error::domain("discretization step must be positive"));
    }
    let f = expm2(&(-params.k_p * dt));
    let g = (Matrix2::identity() - f) * params.theta_p;
    let sigma = ModelParams::sigma_matrix();
    let v = lyapunov_integral(&params.k_p, &(sigma * sigma.transpose()), dt);
    Ok(TransitionKernel { f, g, v })
}

/// Dated panel of observed zero yields; `None` marks a missing quote.
/// Rows are dates, columns the quoted tenors.
#[derive(Debug, Clone)]
pub struct YieldPanel {
    pub dates: Vec<NaiveDate>,
    pub tenors: Vec<f64>,
    pub yields: Vec<Vec<Option<f64>>>,
}

impl YieldPanel {
    pub fn validate(&self) -> Result<()> {
        if self.dates.is_empty() || self.tenors.is_empty() {
            return Err(Error::input("yield panel must have dates and tenors"));
        }
        if self.dates.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::input("panel dates must be strictly increasing"));
        }
        if self.tenors.windows(2).any(|w| w[1] <= w[0]) || self.tenors[0] <= 0.0 {
            return Err(Error::input("panel tenors must be positive and strictly increasing"));
        }
        if self.yields.len() != self.dates.len()
            || self.yields.iter().any(|r| r.len() != self.tenors.len())
        {
            return Err(Error::input("panel yield matrix shape mismatch"));
        }
        Ok(())
    }

    /// Sample each bootstrapped zero curve at the requested tenors; tenors
    /// outside a curve's knot range become missing values.
    pub fn from_zero_curves(curves: &[ZeroCurve], tenors: &[f64]) -> Result<YieldPanel> {
        if curves.is_empty() {
            return Err(Error::input("no zero curves supplied"));
        }
        let panel = YieldPanel {
            dates: curves.iter().map(|c| c.date).collect(),
            tenors: tenors.to_vec(),
            yields: curves
                .iter()
                .map(|c| tenors.iter().map(|&t| c.zero_yield(t).ok()).collect())
                .collect(),
        };
        panel.validate()?;
        Ok(panel)
    }

    /// Total number of present observations.
    pub fn n_obs(&self) -> usize {
        self.yields.iter().flatten().filter(|y| y.is_some()).count()
    }
}

/// Result of one filter pass at fixed parameters.
#[derive(Debug, Clone)]
pub struct FilterOutput {
    pub dates: Vec<NaiveDate>,
    /// Filtered (posterior) state means.
    pub states: Vec<StateVector>,
    /// Filtered state covariances; PSD at every date.
    pub covariances: Vec<Matrix2<f64>>,
    /// Total quasi-log-likelihood.
    pub loglik: f64,
    /// Per-date likelihood contributions (zero on dates with no quotes).
    pub loglik_contributions: Vec<f64>,
    /// Per-tenor measurement error standard deviations used.
    pub meas_error_sd: Vec<f64>,
    /// Per-tenor mean absolute innovation in basis points.
    pub pricing_errors_bp: Vec<f64>,
}

/// Run the sigma-point (unscented) Kalman filter at fixed parameters
/// with daily steps.
///
/// The measurement function evaluates model yields on `surface` at the
/// panel tenors; the update moment-matches it over five sigma points
/// scaled by the predicted covariance, which is exact for affine
/// measurements and accounts for the curvature of the yield map over
/// the predictive spread. Missing tenors on a date are dropped from
/// that date's update. The filter starts from the stationary
/// distribution of the state.
pub fn ukf_filter(
    params: &ModelParams,
    panel: &YieldPanel,
    surface: &PriceSurface,
    meas_sd: &[f64],
) -> Result<FilterOutput> {
    panel.validate()?;
    let n_ten = panel.tenors.len();
    if meas_sd.len() != n_ten {
        return Err(Error::input("one measurement error sd per panel tenor required"));
    }
    if meas_sd.iter().any(|&s| !(s > 0.0)) {
        return Err(Error::input("measurement error sds must be positive"));
    }
    let kernel = discretize(params, DT_DAILY)?;
    let sigma = ModelParams::sigma_matrix();
    let mut x = params.theta_p;
    let mut p = lyapunov_stationary(&params.k_p, &(sigma * sigma.transpose()))?;

    let mut states = Vec::with_capacity(panel.dates.len());
    let mut covariances = Vec::with_capacity(panel.dates.len());
    let mut contributions = Vec::with_capacity(panel.dates.len());
    let mut abs_err_sum = vec![0.0; n_ten];
    let mut obs_count = vec![0usize; n_ten];
    let mut loglik = 0.0;
    const LN_2PI: f64 = 1.8378770664093453;

    for (t, date) in panel.dates.iter().enumerate() {
        if t > 0 {
            x = kernel.f * x + kernel.g;
            p = kernel.f * p * kernel.f.transpose() + kernel.v;
            p = (p + p.transpose()) * 0.5;
        }
        if !surface.grid.contains(&x) {
            return Err(Error::domain(format!(
                "{date}: predicted state ({:.4}, {:.4}) escaped the pricing grid",
                x[0], x[1]
            )));
        }
        let present: Vec<usize> = (0..n_ten)
            .filter(|&k| panel.yields[t][k].is_some())
            .collect();
        let m = present.len();
        if m == 0 {
            states.push(x);
            covariances.push(p);
            contributions.push(0.0);
            continue;
        }
        // sigma-point (unscented) measurement update: linearization at
        // the predicted mean misses the curvature of the yield map over
        // the predictive spread; moment matching over sigma points
        // scaled by the predicted covariance removes that
        // quasi-likelihood bias
        let model_yields = |s: &StateVector| -> Result<DVector<f64>> {
            let mut out = DVector::zeros(m);
            for (r, &k) in present.iter().enumerate() {
                out[r] = surface.yield_at(panel.tenors[k], s)?;
            }
            Ok(out)
        };
        let g = &surface.grid;
        let clamp = |s: StateVector| -> StateVector {
            // sigma points that would leave the grid are pinned to its
            // edge; the predicted mean itself was checked above
            StateVector::new(
                s[0].clamp(g.x1_min, g.x1_max),
                s[1].clamp(g.x2_min, g.x2_max),
            )
        };
        let scale = 3.0; // n + kappa with kappa = 1
        let (w0, wi) = (1.0 / 3.0, 1.0 / 6.0);
        let l = chol2(&(p * scale))
            .map_err(|_| Error::numerics(format!("{date}: predicted covariance not PSD")))?;
        let mut points = [x; 5];
        for c in 0..2 {
            let col = Vector2::new(l[(0, c)], l[(1, c)]);
            points[1 + 2 * c] = clamp(x + col);
            points[2 + 2 * c] = clamp(x - col);
        }
        let evals: Vec<DVector<f64>> = points
            .iter()
            .map(|s| model_yields(s).map_err(|e| Error::domain(format!("{date}: {e}"))))
            .collect::<Result<_>>()?;
        let weights = [w0, wi, wi, wi, wi];
        let mut y_hat = DVector::zeros(m);
        for (w, h) in weights.iter().zip(&evals) {
            y_hat += h * *w;
        }
        let r_diag = DVector::from_iterator(m, present.iter().map(|&k| meas_sd[k] * meas_sd[k]));
        let mut s_mat = DMatrix::zeros(m, m);
        let mut c_mat = DMatrix::zeros(2, m); // state-measurement cross covariance
        for ((w, h), pt) in weights.iter().zip(&evals).zip(&points) {
            let dy = h - &y_hat;
            let dx = pt - x;
            s_mat += &dy * dy.transpose() * *w;
            for r in 0..m {
                c_mat[(0, r)] += w * dx[0] * dy[r];
                c_mat[(1, r)] += w * dx[1] * dy[r];
            }
        }
        for r in 0..m {
            s_mat[(r, r)] += r_diag[r];
        }
        let mut nu = DVector::zeros(m);
        for (r, &k) in present.iter().enumerate() {
            nu[r] = panel.yields[t][k].unwrap() - y_hat[r];
            abs_err_sum[k] += nu[r].abs();
            obs_count[k] += 1;
        }
        let chol = nalgebra::Cholesky::new(s_mat.clone()).ok_or_else(|| {
            Error::numerics(format!("{date}: innovation covariance not positive definite"))
        })?;
        let log_det: f64 = (0..m).map(|r| chol.l_dirty()[(r, r)].ln()).sum::<f64>() * 2.0;
        let s_inv_nu = chol.solve(&nu);
        let ll_t = -0.5 * (m as f64 * LN_2PI + log_det + nu.dot(&s_inv_nu));
        loglik += ll_t;
        contributions.push(ll_t);

        // gain and covariance downdate: K S K' = C S^-1 C' = K C'
        let gain = chol.solve(&c_mat.transpose()).transpose(); // 2 x m
        let dx = &gain * &nu;
        x += Vector2::new(dx[0], dx[1]);
        let p_new = &gain * c_mat.transpose();
        p -= Matrix2::new(p_new[(0, 0)], p_new[(0, 1)], p_new[(1, 0)], p_new[(1, 1)]);
        p = (p + p.transpose()) * 0.5;
        let (e1, e2) = eigen_real_parts(&p);
        if e1.min(e2) < -1e-12 {
            return Err(Error::numerics(format!(
                "{date}: filtered covariance lost positive semidefiniteness"
            )));
        }
        states.push(x);
        covariances.push(p);
    }

    let pricing_errors_bp = (0..n_ten)
        .map(|k| {
            if obs_count[k] == 0 {
                f64::NAN
            } else {
                abs_err_sum[k] / obs_count[k] as f64 * 1e4
            }
        })
        .collect();
    Ok(FilterOutput {
        dates: panel.dates.clone(),
        states,
        covariances,
        loglik,
        loglik_contributions: contributions,
        meas_error_sd: meas_sd.to_vec(),
        pricing_errors_bp,
    })
}

/// Generate `n_days` consecutive business days starting at `start`.
pub fn business_days(start: NaiveDate, n_days: usize) -> Vec<NaiveDate> {
    let mut dates = Vec::with_capacity(n_days);
    let mut d = start;
    while dates.len() < n_days {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            dates.push(d);
        }
        d += Duration::days(1);
    }
    dates
}

/// Simulate a synthetic daily yield panel from the model: exact OU state
/// path started at the P-mean, model yields from `surface`, i.i.d.
/// Gaussian measurement noise per tenor. Returns the panel and the true
/// state path.
pub fn simulate_panel(
    params: &ModelParams,
    surface: &PriceSurface,
    dates: &[NaiveDate],
    tenors: &[f64],
    meas_sd: &[f64],
    seed: u64,
) -> Result<(YieldPanel, Vec<StateVector>)> {
    if meas_sd.len() != tenors.len() {
        return Err(Error::input("one measurement error sd per tenor required"));
    }
    let kernel = discretize(params, DT_DAILY)?;
    let chol_v = chol2(&kernel.v)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw2 = |rng: &mut ChaCha8Rng| {
        Vector2::new(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal))
    };
    let mut x = params.theta_p;
    let mut states = Vec::with_capacity(dates.len());
    let mut yields = Vec::with_capacity(dates.len());
    for t in 0..dates.len() {
        if t > 0 {
            x = kernel.f * x + kernel.g + chol_v * draw2(&mut rng);
        }
        if !surface.grid.contains(&x) {
            return Err(Error::domain(format!(
                "simulated state ({:.4}, {:.4}) escaped the pricing grid at step {t}",
                x[0], x[1]
            )));
        }
        let mut row = Vec::with_capacity(tenors.len());
        for (k, &tau) in tenors.iter().enumerate() {
            let y = surface.yield_at(tau, &x)?
                + meas_sd[k] * rng.sample::<f64, _>(StandardNormal);
            row.push(Some(y));
        }
        states.push(x);
        yields.push(row);
    }
    let panel = YieldPanel {
        dates: dates.to_vec(),
        tenors: tenors.to_vec(),
        yields,
    };
    Ok((panel, states))
}

// ---------------------------------------------------------------------------
// Free-parameter packing for estimation
// ---------------------------------------------------------------------------

/// Number of free model parameters (excluding measurement variances).
pub const N_MODEL_PARAMS: usize = 15;

fn softplus(u: f64) -> f64 {
    if u > 30.0 {
        u
    } else {
        u.exp().ln_1p()
    }
}

fn softplus_inv(d: f64) -> f64 {
    // inverse of ln(1 + e^u); stable for large d
    if d > 30.0 {
        d
    } else {
        d + (-(-d).exp()).ln_1p()
    }
}

/// Pack the free parameters into the unconstrained optimization vector:
/// `K_Q` (4), `theta_Q` (2), `rho`, softplus-inverse of `D1`, `D2`, `A`,
/// `lambda0_P` (2), the three free `Lambda_P` entries, then the log
/// measurement sds per tenor.
pub fn pack_free(params: &ModelParams, meas_sd: &[f64]) -> DVector<f64> {
    let mut v = Vec::with_capacity(N_MODEL_PARAMS + meas_sd.len());
    v.extend_from_slice(&[
        params.k_q[(0, 0)],
        params.k_q[(0, 1)],
        params.k_q[(1, 0)],
        params.k_q[(1, 1)],
        params.theta_q[0],
        params.theta_q[1],
        params.rho,
        softplus_inv(params.d1),
        softplus_inv(params.d2),
        params.a,
        params.lambda0_p[0],
        params.lambda0_p[1],
        params.lambda_mat_p[(0, 0)],
        params.lambda_mat_p[(1, 0)],
        params.lambda_mat_p[(1, 1)],
    ]);
    v.extend(meas_sd.iter().map(|s| s.ln()));
    DVector::from_vec(v)
}

/// Inverse of [`pack_free`].
pub fn unpack_free(theta: &DVector<f64>, n_tenors: usize) -> Result<(ModelParams, Vec<f64>)> {
    if theta.len() != N_MODEL_PARAMS + n_tenors {
        return Err(Error::input(format!(
            "expected {} free parameters, got {}",
            N_MODEL_PARAMS + n_tenors,
            theta.len()
        )));
    }
    let params = ModelParams::from_q_side(
        Matrix2::new(theta[0], theta[1], theta[2], theta[3]),
        Vector2::new(theta[4], theta[5]),
        theta[6],
        softplus(theta[7]),
        softplus(theta[8]),
        theta[9],
        Vector2::new(theta[10], theta[11]),
        [theta[12], theta[13], theta[14]],
    )?;
    let meas_sd = (0..n_tenors)
        .map(|k| theta[N_MODEL_PARAMS + k].exp())
        .collect();
    Ok((params, meas_sd))
}

// ---------------------------------------------------------------------------
// Quasi-maximum-likelihood estimation
// ---------------------------------------------------------------------------

/// Estimation options.
#[derive(Debug, Clone)]
pub struct EstimateOpts {
    /// Pricing grid for the inner surface solves.
    pub grid: GridSpec,
    /// Number of optimizer starts (the first is the supplied init).
    pub n_starts: usize,
    /// Start jitter standard deviation, as a multiple of the per-coordinate
    /// simplex step.
    pub perturb_scale: f64,
    /// Simplex iteration budget per start.
    pub nm_max_iters: usize,
    /// Quasi-Newton polish iterations after the best simplex finishes.
    pub bfgs_max_iters: usize,
    /// Seed for the start jitter.
    pub seed: u64,
}

impl Default for EstimateOpts {
    fn default() -> Self {
        EstimateOpts {
            grid: GridSpec::estimation_spec(),
            n_starts: 5,
            perturb_scale: 1.0,
            nm_max_iters: 400,
            bfgs_max_iters: 30,
            seed: 7,
        }
    }
}

/// Estimation result: the optimum, its filter pass, and whether the
/// optimizer improved on the initial point (when it did not, the best
/// found is still returned and this flag carries the warning).
#[derive(Debug, Clone)]
pub struct EstimateResult {
    pub params: ModelParams,
    pub meas_sd: Vec<f64>,
    pub filter: FilterOutput,
    pub loglik: f64,
    pub init_loglik: f64,
    pub improved: bool,
}

/// Negative quasi-log-likelihood of a packed candidate, with a one-entry
/// surface cache keyed on the Q-side block (the surface is independent of
/// the market price of risk and the measurement variances).
struct Objective<'a> {
    panel: &'a YieldPanel,
    grid: &'a GridSpec,
    ladder: Vec<f64>,
    cache: Option<([f64; 10], PriceSurface)>,
    evals: usize,
}

const PENALTY: f64 = 1e9;
/// Lower bound on the real parts of the K_P eigenvalues (1/year).
const MIN_MEAN_REVERSION: f64 = 1e-4;

impl Objective<'_> {
    fn q_key(theta: &DVector<f64>) -> [f64; 10] {
        let mut k = [0.0; 10];
        k.copy_from_slice(&theta.as_slice()[..10]);
        k
    }

    fn eval(&mut self, theta: &DVector<f64>) -> f64 {
        self.evals += 1;
        let (params, meas_sd) = match unpack_free(theta, self.panel.tenors.len()) {
            Ok(v) => v,
            Err(_) => return PENALTY,
        };
        let (e1, e2) = eigen_real_parts(&params.k_p);
        let e_min = e1.min(e2);
        if e_min < MIN_MEAN_REVERSION {
            return PENALTY * (1.0 + (MIN_MEAN_REVERSION - e_min));
        }
        let key = Self::q_key(theta);
        if self.cache.as_ref().map(|(k, _)| *k != key).unwrap_or(true) {
            match solve_surface_with(&params, self.grid, &self.ladder, RateSpec::Floored) {
                Ok(s) => self.cache = Some((key, s)),
                Err(_) => return PENALTY,
            }
        }
        let surface = &self.cache.as_ref().unwrap().1;
        match ukf_filter(&params, self.panel, surface, &meas_sd) {
            Ok(out) if out.loglik.is_finite() => -out.loglik,
            _ => PENALTY,
        }
    }
}

fn nm_steps(n_tenors: usize) -> DVector<f64> {
    let mut s = vec![
        0.02, 0.02, 0.02, 0.02, // K_Q
        0.05, 0.05, // theta_Q
        0.002, // rho
        0.05, 0.05, // D1, D2 (softplus coords)
        0.05, // A
        0.1, 0.1, // lambda0
        0.2, 0.2, 0.05, // Lambda free entries
    ];
    s.extend(std::iter::repeat(0.1).take(n_tenors));
    DVector::from_vec(s)
}

/// Maximize the quasi-log-likelihood over the free parameters.
///
/// Multi-start simplex search from the supplied init (plus jittered
/// copies), followed by a quasi-Newton polish of the best vertex. When no
/// candidate improves on the init, the best found is returned with
/// `improved = false`.
pub fn estimate(
    panel: &YieldPanel,
    init: &ModelParams,
    init_meas_sd: &[f64],
    opts: &EstimateOpts,
) -> Result<EstimateResult> {
    panel.validate()?;
    if opts.n_starts == 0 {
        return Err(Error::input("estimation needs at least one start"));
    }
    let mut ladder = vec![0.0];
    ladder.extend_from_slice(&panel.tenors);
    let mut objective = Objective {
        panel,
        grid: &opts.grid,
        ladder: ladder.clone(),
        cache: None,
        evals: 0,
    };
    let theta0 = pack_free(init, init_meas_sd);
    let f0 = objective.eval(&theta0);
    if f0 >= PENALTY {
        return Err(Error::model(
            "initial parameters are infeasible for the likelihood (penalty region)",
        ));
    }
    let steps = nm_steps(panel.tenors.len());
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut best = (theta0.clone(), f0);
    for start in 0..opts.n_starts {
        let x0 = if start == 0 {
            theta0.clone()
        } else {
            let mut x = theta0.clone();
            for i in 0..x.len() {
                let z: f64 = rng.sample(StandardNormal);
                x[i] += opts.perturb_scale * steps[i] * z;
            }
            x
        };
        let (x, fx) = nelder_mead(
            &mut |v| objective.eval(v),
            &x0,
            &steps,
            opts.nm_max_iters,
            1e-9,
        );
        if fx < best.1 {
            best = (x, fx);
        }
    }
    if opts.bfgs_max_iters > 0 {
        let (x, fx) = bfgs(
            &mut |v| objective.eval(v),
            &best.0,
            opts.bfgs_max_iters,
            1e-5,
            1e-7,
        );
        if fx < best.1 {
            best = (x, fx);
        }
    }
    let (params, meas_sd) = unpack_free(&best.0, panel.tenors.len())?;
    let surface = solve_surface_with(&params, &opts.grid, &ladder, RateSpec::Floored)?;
    let filter = ukf_filter(&params, panel, &surface, &meas_sd)?;
    Ok(EstimateResult {
        loglik: filter.loglik,
        init_loglik: -f0,
        improved: best.1 < f0 - 1e-9,
        params,
        meas_sd,
        filter,
    })
}

// ---------------------------------------------------------------------------
// Sandwich standard errors
// ---------------------------------------------------------------------------

/// Sandwich covariance from per-date log-likelihood contributions.
///
/// `contrib(theta)` returns the vector of per-date contributions; the
/// sandwich is `A^-1 S A^-1 / T` with `A = -H` the negative numerical
/// Hessian of the mean log-likelihood (central second differences) and
/// `S` the outer product of the per-date score contributions (central
/// differences, reusing the Hessian's diagonal evaluations). Returns the
/// standard errors and the full covariance.
pub fn sandwich_from_contributions(
    contrib: &mut dyn FnMut(&DVector<f64>) -> Result<DVector<f64>>,
    theta: &DVector<f64>,
    h_scale: f64,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let k = theta.len();
    let base = contrib(theta)?;
    let t_len = base.len();
    if t_len < 2 {
        return Err(Error::input("need at least two contribution dates"));
    }
    let mean = |c: &DVector<f64>| c.sum() / t_len as f64;
    let f0 = mean(&base);
    let h: Vec<f64> = (0..k).map(|i| h_scale * (1.0 + theta[i].abs())).collect();

    // one-coordinate bumps: Hessian diagonal plus per-date scores
    let mut plus = Vec::with_capacity(k);
    let mut minus = Vec::with_capacity(k);
    for i in 0..k {
        let mut tp = theta.clone();
        let mut tm = theta.clone();
        tp[i] += h[i];
        tm[i] -= h[i];
        plus.push(contrib(&tp)?);
        minus.push(contrib(&tm)?);
    }
    let mut hess = DMatrix::zeros(k, k);
    for i in 0..k {
        hess[(i, i)] = (mean(&plus[i]) - 2.0 * f0 + mean(&minus[i])) / (h[i] * h[i]);
    }
    for i in 0..k {
        for j in i + 1..k {
            let mut tpp = theta.clone();
            let mut tpm = theta.clone();
            let mut tmp = theta.clone();
            let mut tmm = theta.clone();
            tpp[i] += h[i];
            tpp[j] += h[j];
            tpm[i] += h[i];
            tpm[j] -= h[j];
            tmp[i] -= h[i];
            tmp[j] += h[j];
            tmm[i] -= h[i];
            tmm[j] -= h[j];
            let v = (mean(&contrib(&tpp)?) - mean(&contrib(&tpm)?) - mean(&contrib(&tmp)?)
                + mean(&contrib(&tmm)?))
                / (4.0 * h[i] * h[j]);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }

    // outer product of per-date scores
    let mut s_mat = DMatrix::zeros(k, k);
    for t in 0..t_len {
        let mut score = DVector::zeros(k);
        for i in 0..k {
            score[i] = (plus[i][t] - minus[i][t]) / (2.0 * h[i]);
        }
        s_mat += &score * score.transpose();
    }
    s_mat /= t_len as f64;

    let a = -hess;
    let a_inv = a.clone().try_inverse().ok_or_else(|| {
        Error::numerics(
            "singular Hessian in sandwich estimator; consider rescaling the parameters",
        )
    })?;
    let cov = (&a_inv * &s_mat * &a_inv) / t_len as f64;
    let se = DVector::from_iterator(k, (0..k).map(|i| cov[(i, i)].max(0.0).sqrt()));
    Ok((se, cov))
}

/// Sandwich standard errors of the full free-parameter vector (model
/// parameters then log measurement sds) at `params`, on the given grid.
pub fn sandwich_se(
    panel: &YieldPanel,
    params: &ModelParams,
    meas_sd: &[f64],
    grid: &GridSpec,
) -> Result<DVector<f64>> {
    let mut ladder = vec![0.0];
    ladder.extend_from_slice(&panel.tenors);
    let n_tenors = panel.tenors.len();
    let mut cache: Option<([f64; 10], PriceSurface)> = None;
    let mut contrib = |theta: &DVector<f64>| -> Result<DVector<f64>> {
        let (p, sd) = unpack_free(theta, n_tenors)?;
        let mut key = [0.0; 10];
        key.copy_from_slice(&theta.as_slice()[..10]);
        if cache.as_ref().map(|(k, _)| *k != key).unwrap_or(true) {
            let s = solve_surface_with(&p, grid, &ladder, RateSpec::Floored)?;
            cache = Some((key, s));
        }
        let out = ukf_filter(&p, panel, &cache.as_ref().unwrap().1, &sd)?;
        Ok(DVector::from_vec(out.loglik_contributions))
    };
    let theta = pack_free(params, meas_sd);
    let (se, _) = sandwich_from_contributions(&mut contrib, &theta, 1e-4)?;
    Ok(se)
}
