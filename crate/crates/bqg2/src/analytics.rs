//! Term structures of bond risk premia: realized and forecast excess
//! returns, volatilities and Sharpe ratios, duration-matched leveraged
//! log-returns, the Hansen-Jagannathan bound under the long forward
//! measure, and growth-optimality checks of the long bond.
//!
//! Realized tables work off a dated panel of bootstrapped zero curves
//! sampled quarterly; forecast tables are conditional Monte Carlo
//! expectations of quarterly holding returns under the selected measure,
//! with common random numbers across maturities. Under the long forward
//! measure L the long bond is growth optimal: its expected log return
//! weakly dominates every asset, and only covariance with the long bond is
//! priced, `E^L[R] - R^f = -cov^L(R, 1/R_inf) R^f`.

use chrono::{Duration, NaiveDate};
use nalgebra::{Matrix2, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::market_data::{holding_return, ZeroCurve};
use crate::math::{chol2, expm2, lyapunov_integral};
use crate::measures::{LambdaLField, MeasureTag};
use crate::model_core::{ModelParams, StateVector};
use crate::pde::PriceSurface;
use crate::pf::{Eigenpair, ExpQuadFit};

/// One row of a realized return table.
#[derive(Debug, Clone)]
pub struct ReturnRow {
    /// Bond maturity in years; `None` tags the long-bond row.
    pub maturity: Option<f64>,
    pub mean_excess: f64,
    pub sd: f64,
    /// `mean / sd`; absent when the sample standard deviation vanishes.
    pub sharpe: Option<f64>,
    pub n_periods: usize,
}

/// Realized quarterly excess return table over a dated curve panel.
#[derive(Debug, Clone)]
pub struct ReturnTable {
    /// Holding horizon in years.
    pub horizon: f64,
    pub rows: Vec<ReturnRow>,
    /// First and last sample date after masking.
    pub sample: (NaiveDate, NaiveDate),
}

/// Indices carving non-overlapping holding periods of `horizon` years out
/// of an increasing date sequence: each boundary is the first date at
/// least `round(horizon * 365.25)` days after the previous one.
pub fn period_boundaries(dates: &[NaiveDate], horizon: f64) -> Vec<usize> {
    let step = Duration::days((horizon * 365.25).round() as i64);
    let mut idx = Vec::new();
    if dates.is_empty() {
        return idx;
    }
    idx.push(0);
    let mut target = dates[0] + step;
    for (i, d) in dates.iter().enumerate().skip(1) {
        if *d >= target {
            idx.push(i);
            target = *d + step;
        }
    }
    idx
}

fn year_frac(a: NaiveDate, b: NaiveDate) -> f64 {
    (b - a).num_days() as f64 / 365.25
}

fn summarize_sample(sample: &[f64]) -> (f64, f64) {
    let n = sample.len() as f64;
    let mean = sample.iter().sum::<f64>() / n;
    let var = if sample.len() > 1 {
        sample.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

fn make_row(maturity: Option<f64>, sample: &[f64]) -> ReturnRow {
    let (mean, sd) = summarize_sample(sample);
    ReturnRow {
        maturity,
        mean_excess: mean,
        sd,
        sharpe: if sd > 1e-12 { Some(mean / sd) } else { None },
        n_periods: sample.len(),
    }
}

/// Keep only curves whose knot range covers `max_tenor` (the 30y-available
/// mask when `max_tenor = 30`).
pub fn mask_curves_covering<'a>(curves: &'a [ZeroCurve], max_tenor: f64) -> Vec<&'a ZeroCurve> {
    curves
        .iter()
        .filter(|c| c.discount(max_tenor).is_ok())
        .collect()
}

/// Realized quarterly excess returns, standard deviations and Sharpe
/// ratios per bond maturity, with an optional long-bond row computed from
/// the eigenpair along the filtered state path (`states` aligned with
/// `curves`). Returns are funded at the horizon-matched zero yield known
/// at the start of each period.
pub fn realized_table(
    curves: &[&ZeroCurve],
    maturities: &[f64],
    horizon: f64,
    long_bond: Option<(&Eigenpair, &[StateVector])>,
) -> Result<ReturnTable> {
    if let Some((_, states)) = long_bond {
        if states.len() != curves.len() {
            return Err(Error::input("one filtered state per curve date required"));
        }
    }
    let dates: Vec<NaiveDate> = curves.iter().map(|c| c.date).collect();
    let bounds = period_boundaries(&dates, horizon);
    if bounds.len() < 3 {
        return Err(Error::input(
            "insufficient overlapping sample: need at least two full holding periods",
        ));
    }
    let mut samples: Vec<Vec<f64>> = vec![Vec::new(); maturities.len()];
    let mut lb_sample: Vec<f64> = Vec::new();
    for w in bounds.windows(2) {
        let (i, j) = (w[0], w[1]);
        let h = year_frac(dates[i], dates[j]);
        let rf = 1.0 / curves[i].discount(h)?;
        for (k, &tau) in maturities.iter().enumerate() {
            let r = holding_return(curves[i], curves[j], tau, h)?;
            samples[k].push(r - rf);
        }
        if let Some((pair, states)) = long_bond {
            let r_lb = (pair.lambda * h).exp() * pair.pi_at(&states[j])? / pair.pi_at(&states[i])?;
            lb_sample.push(r_lb - rf);
        }
    }
    let mut rows: Vec<ReturnRow> = maturities
        .iter()
        .zip(&samples)
        .map(|(&tau, s)| make_row(Some(tau), s))
        .collect();
    if long_bond.is_some() {
        rows.push(make_row(None, &lb_sample));
    }
    Ok(ReturnTable {
        horizon,
        rows,
        sample: (dates[bounds[0]], dates[*bounds.last().unwrap()]),
    })
}

/// One row of a duration-matched leveraged log-return table.
#[derive(Debug, Clone)]
pub struct LogReturnRow {
    pub target_duration: f64,
    pub maturity: f64,
    /// Bond weight `D_target / maturity`; the remainder is funded (or
    /// lent) at the horizon-matched zero rate.
    pub weight: f64,
    /// Mean quarterly log gross return of the rebalanced portfolio.
    pub mean_log_return: f64,
    pub sd_log_return: f64,
    pub n_periods: usize,
}

/// Realized average quarterly log-returns of portfolios leveraged (or
/// de-leveraged) to match target durations: weight `w = D/tau` in the
/// `tau`-bond, `1 - w` at the short rate, rebalanced each period.
pub fn duration_matched_table(
    curves: &[&ZeroCurve],
    maturities: &[f64],
    target_durations: &[f64],
    horizon: f64,
) -> Result<Vec<LogReturnRow>> {
    let dates: Vec<NaiveDate> = curves.iter().map(|c| c.date).collect();
    let bounds = period_boundaries(&dates, horizon);
    if bounds.len() < 3 {
        return Err(Error::input(
            "insufficient overlapping sample: need at least two full holding periods",
        ));
    }
    let mut rows = Vec::new();
    for &d_target in target_durations {
        for &tau in maturities {
            let w = d_target / tau;
            if w <= 0.0 {
                return Err(Error::input(format!(
                    "nonpositive portfolio weight {w} for duration {d_target} at maturity {tau}"
                )));
            }
            let mut sample = Vec::with_capacity(bounds.len() - 1);
            for win in bounds.windows(2) {
                let (i, j) = (win[0], win[1]);
                let h = year_frac(dates[i], dates[j]);
                let rf = 1.0 / curves[i].discount(h)?;
                let r = holding_return(curves[i], curves[j], tau, h)?;
                let gross = w * r + (1.0 - w) * rf;
                if gross <= 0.0 {
                    return Err(Error::numerics(format!(
                        "leveraged portfolio wiped out in period starting {}",
                        dates[i]
                    )));
                }
                sample.push(gross.ln());
            }
            let (mean, sd) = summarize_sample(&sample);
            rows.push(LogReturnRow {
                target_duration: d_target,
                maturity: tau,
                weight: w,
                mean_log_return: mean,
                sd_log_return: sd,
                n_periods: sample.len(),
            });
        }
    }
    Ok(rows)
}

/// Realized mean quarterly log return of the long bond along the filtered
/// state path (dates aligned with states).
pub fn realized_long_bond_log_return(
    pair: &Eigenpair,
    dates: &[NaiveDate],
    states: &[StateVector],
    horizon: f64,
) -> Result<f64> {
    if dates.len() != states.len() {
        return Err(Error::input("dates and states must be equal length"));
    }
    let bounds = period_boundaries(dates, horizon);
    if bounds.len() < 2 {
        return Err(Error::input("insufficient sample for a holding period"));
    }
    let mut sum = 0.0;
    for w in bounds.windows(2) {
        let (i, j) = (w[0], w[1]);
        let h = year_frac(dates[i], dates[j]);
        sum += pair.lambda * h + pair.log_pi_at(&states[j])? - pair.log_pi_at(&states[i])?;
    }
    Ok(sum / (bounds.len() - 1) as f64)
}

// ---------------------------------------------------------------------------
// Conditional Monte Carlo forecasts
// ---------------------------------------------------------------------------

/// One maturity's conditional forecast: quarterly excess return,
/// volatility and Sharpe ratio with the Monte Carlo standard error of the
/// mean excess.
#[derive(Debug, Clone)]
pub struct ForecastRow {
    /// Bond maturity; `None` tags the long bond.
    pub maturity: Option<f64>,
    pub excess: f64,
    pub vol: f64,
    pub sharpe: Option<f64>,
    pub mc_se: f64,
}

/// Conditional forecast table under a measure, from one state.
#[derive(Debug, Clone)]
pub struct ForecastTable {
    pub tag: MeasureTag,
    pub horizon: f64,
    pub rows: Vec<ForecastRow>,
    /// Long-bond row (gross return `e^{lambda h} pi(X_h)/pi(x)`).
    pub long_bond: ForecastRow,
    pub n_paths: usize,
    pub rejected_fraction: f64,
}

/// Euler step size for the L-dynamics, whose drift is non-affine.
pub const L_EULER_DT: f64 = 1.0 / 96.0;

/// `log pi` with the exponential-quadratic fit as extrapolating fallback
/// outside the analytics region.
fn log_pi_field(pair: &Eigenpair, fit: &ExpQuadFit, x: &StateVector) -> f64 {
    pair.log_pi_at(x).unwrap_or_else(|_| fit.log_pi_at(x))
}

/// Exact one-step OU kernel for `dX = K (theta - X) dt + Sigma dB`.
fn ou_kernel(k: &Matrix2<f64>, theta: &Vector2<f64>, dt: f64) -> Result<(Matrix2<f64>, Vector2<f64>, Matrix2<f64>)> {
    let f = expm2(&(-k * dt));
    let g = (Matrix2::identity() - f) * theta;
    let sigma = ModelParams::sigma_matrix();
    let v = lyapunov_integral(k, &(sigma * sigma.transpose()), dt);
    Ok((f, g, chol2(&v)?))
}

/// Simulate terminal states at `x + horizon` under the tagged measure:
/// exact Gaussian step for P and Q, Euler with [`L_EULER_DT`] for L.
/// Paths leaving `grid` are rejected and counted; more than 1% rejections
/// is an error. Deterministic per-path substreams derive from `seed`.
fn simulate_terminal_states(
    tag: MeasureTag,
    params: &ModelParams,
    field: &LambdaLField,
    grid_contains: &dyn Fn(&StateVector) -> bool,
    x0: &StateVector,
    horizon: f64,
    n_paths: usize,
    seed: u64,
) -> Result<(Vec<StateVector>, f64)> {
    let sigma = ModelParams::sigma_matrix();
    let exact = match tag {
        MeasureTag::P => Some(ou_kernel(&params.k_p, &params.theta_p, horizon)?),
        MeasureTag::Q => Some(ou_kernel(&params.k_q, &params.theta_q, horizon)?),
        MeasureTag::L => None,
    };
    let n_steps = (horizon / L_EULER_DT).round().max(1.0) as usize;
    let dt = horizon / n_steps as f64;
    let sq_dt = dt.sqrt();
    let mut out = Vec::with_capacity(n_paths);
    let mut rejected = 0usize;
    for path in 0..n_paths {
        // fresh generator per path so each path's noise depends only on
        // (seed, path index), not on earlier paths' consumption
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(path as u64);
        let x_end = match &exact {
            Some((f, g, chol)) => {
                let z = Vector2::new(
                    rng.sample::<f64, _>(StandardNormal),
                    rng.sample::<f64, _>(StandardNormal),
                );
                f * x0 + g + chol * z
            }
            None => {
                let mut x = *x0;
                let mut escaped = false;
                for _ in 0..n_steps {
                    let drift = params.drift_q(&x) + sigma * field.eval(&x);
                    let z = Vector2::new(
                        rng.sample::<f64, _>(StandardNormal),
                        rng.sample::<f64, _>(StandardNormal),
                    );
                    x += drift * dt + sigma * z * sq_dt;
                    if !grid_contains(&x) {
                        escaped = true;
                        break;
                    }
                }
                if escaped {
                    rejected += 1;
                    continue;
                }
                x
            }
        };
        if grid_contains(&x_end) {
            out.push(x_end);
        } else {
            rejected += 1;
        }
    }
    let frac = rejected as f64 / n_paths as f64;
    if frac > 0.01 {
        return Err(Error::numerics(format!(
            "{:.1}% of simulated paths left the pricing domain",
            frac * 100.0
        )));
    }
    Ok((out, frac))
}

/// Conditional excess return, volatility and Sharpe ratio of quarterly
/// bond returns under the tagged measure, by Monte Carlo from state `x`
/// with common random numbers across maturities, plus the long-bond row.
pub fn conditional_forecast(
    tag: MeasureTag,
    params: &ModelParams,
    pair: &Eigenpair,
    fit: &ExpQuadFit,
    surface: &PriceSurface,
    x: &StateVector,
    horizon: f64,
    maturities: &[f64],
    n_paths: usize,
    seed: u64,
) -> Result<ForecastTable> {
    if maturities.iter().any(|&t| t <= horizon) {
        return Err(Error::input("forecast maturities must exceed the horizon"));
    }
    let field = LambdaLField { pair, fit };
    let contains = |s: &StateVector| surface.grid.contains(s);
    let (ends, rejected_fraction) =
        simulate_terminal_states(tag, params, &field, &contains, x, horizon, n_paths, seed)?;
    let rf = 1.0 / surface.price_at(horizon, x)?;
    let log_pi0 = log_pi_field(pair, fit, x);

    let mut rows = Vec::with_capacity(maturities.len());
    for &tau in maturities {
        let p0 = surface.price_at(tau, x)?;
        let mut sample = Vec::with_capacity(ends.len());
        for xe in &ends {
            let r = surface.price_at(tau - horizon, xe)? / p0;
            sample.push(r - rf);
        }
        let (mean, sd) = summarize_sample(&sample);
        rows.push(ForecastRow {
            maturity: Some(tau),
            excess: mean,
            vol: sd,
            sharpe: if sd > 1e-12 { Some(mean / sd) } else { None },
            mc_se: sd / (sample.len() as f64).sqrt(),
        });
    }
    let lb_sample: Vec<f64> = ends
        .iter()
        .map(|xe| (pair.lambda * horizon + log_pi_field(pair, fit, xe) - log_pi0).exp() - rf)
        .collect();
    let (mean, sd) = summarize_sample(&lb_sample);
    let long_bond = ForecastRow {
        maturity: None,
        excess: mean,
        vol: sd,
        sharpe: if sd > 1e-12 { Some(mean / sd) } else { None },
        mc_se: sd / (lb_sample.len() as f64).sqrt(),
    };
    Ok(ForecastTable {
        tag,
        horizon,
        rows,
        long_bond,
        n_paths,
        rejected_fraction,
    })
}

/// Hansen-Jagannathan bound under L: `sigma^L(1/R_inf) * R^f` by Monte
/// Carlo from state `x`. Returns the bound and its MC standard error.
pub fn hj_bound(
    params: &ModelParams,
    pair: &Eigenpair,
    fit: &ExpQuadFit,
    surface: &PriceSurface,
    x: &StateVector,
    horizon: f64,
    n_paths: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let field = LambdaLField { pair, fit };
    let contains = |s: &StateVector| surface.grid.contains(s);
    let (ends, _) = simulate_terminal_states(
        MeasureTag::L,
        params,
        &field,
        &contains,
        x,
        horizon,
        n_paths,
        seed,
    )?;
    let rf = 1.0 / surface.price_at(horizon, x)?;
    let log_pi0 = log_pi_field(pair, fit, x);
    let inv_lb: Vec<f64> = ends
        .iter()
        .map(|xe| (-(pair.lambda * horizon + log_pi_field(pair, fit, xe) - log_pi0)).exp())
        .collect();
    let (_, sd) = summarize_sample(&inv_lb);
    let n = inv_lb.len() as f64;
    // MC standard error of a standard deviation ~ sd / sqrt(2 n)
    Ok((sd * rf, sd * rf / (2.0 * n).sqrt()))
}

/// One maturity's growth-optimality diagnostics under L.
#[derive(Debug, Clone)]
pub struct DominanceRow {
    pub maturity: f64,
    /// Mean log gross return under L and its MC standard error.
    pub mean_log: f64,
    pub se_log: f64,
    /// Residual of the covariance pricing identity
    /// `E[R] - R^f + cov(R, 1/R_inf) R^f` and its MC standard error.
    pub cov_gap: f64,
    pub cov_gap_se: f64,
}

/// Growth-optimality report: the long bond's expected log return under L
/// against every tested maturity, plus the covariance pricing identity.
#[derive(Debug, Clone)]
pub struct DominanceReport {
    pub long_bond_mean_log: f64,
    pub long_bond_se: f64,
    pub rows: Vec<DominanceRow>,
    /// True when every maturity is dominated within `tol_se` MC standard
    /// errors.
    pub all_dominated: bool,
}

/// Verify under L-simulation that the long bond's expected log return
/// weakly dominates every tested bond (within `tol_se` combined MC
/// standard errors) and that only covariance with the long bond is priced.
pub fn log_dominance_check(
    params: &ModelParams,
    pair: &Eigenpair,
    fit: &ExpQuadFit,
    surface: &PriceSurface,
    x: &StateVector,
    horizon: f64,
    maturities: &[f64],
    n_paths: usize,
    seed: u64,
    tol_se: f64,
) -> Result<DominanceReport> {
    let field = LambdaLField { pair, fit };
    let contains = |s: &StateVector| surface.grid.contains(s);
    let (ends, _) = simulate_terminal_states(
        MeasureTag::L,
        params,
        &field,
        &contains,
        x,
        horizon,
        n_paths,
        seed,
    )?;
    let rf = 1.0 / surface.price_at(horizon, x)?;
    let log_pi0 = log_pi_field(pair, fit, x);
    let lb_log: Vec<f64> = ends
        .iter()
        .map(|xe| pair.lambda * horizon + log_pi_field(pair, fit, xe) - log_pi0)
        .collect();
    let inv_lb: Vec<f64> = lb_log.iter().map(|l| (-l).exp()).collect();
    let (lb_mean, lb_sd) = summarize_sample(&lb_log);
    let n = ends.len() as f64;
    let lb_se = lb_sd / n.sqrt();

    let (inv_mean, _) = summarize_sample(&inv_lb);
    let mut rows = Vec::with_capacity(maturities.len());
    let mut all_dominated = true;
    for &tau in maturities {
        let p0 = surface.price_at(tau, x)?;
        let r: Vec<f64> = ends
            .iter()
            .map(|xe| surface.price_at(tau - horizon, xe).map(|p| p / p0))
            .collect::<Result<_>>()?;
        let logs: Vec<f64> = r.iter().map(|v| v.ln()).collect();
        let (mean_log, sd_log) = summarize_sample(&logs);
        let se_log = sd_log / n.sqrt();
        let r_mean = r.iter().sum::<f64>() / n;
        // per-path statistic whose mean is the identity residual
        let d: Vec<f64> = r
            .iter()
            .zip(&inv_lb)
            .map(|(ri, yi)| ri - rf + rf * (ri - r_mean) * (yi - inv_mean))
            .collect();
        let (gap, gap_sd) = summarize_sample(&d);
        let gap_se = gap_sd / n.sqrt();
        if mean_log > lb_mean + tol_se * (se_log + lb_se) {
            all_dominated = false;
        }
        rows.push(DominanceRow {
            maturity: tau,
            mean_log,
            se_log,
            cov_gap: gap,
            cov_gap_se: gap_se,
        });
    }
    Ok(DominanceReport {
        long_bond_mean_log: lb_mean,
        long_bond_se: lb_se,
        rows,
        all_dominated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model_core::reference_params;
    use crate::pde::{solve_surface, GridSpec};
    use crate::pf::{extract, fit_exp_quadratic};
    use approx::assert_relative_eq;
    use std::sync::OnceLock;

    fn d(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    fn flat_curve(date: NaiveDate, y: f64) -> ZeroCurve {
        let tenors = vec![0.25, 1.0, 2.0, 5.0, 10.0, 30.0];
        let yields = vec![y; tenors.len()];
        ZeroCurve::new(date, tenors, yields).unwrap()
    }

    fn reference_pair() -> &'static (Eigenpair, ExpQuadFit) {
        static PAIR: OnceLock<(Eigenpair, ExpQuadFit)> = OnceLock::new();
        PAIR.get_or_init(|| {
            let grid = GridSpec {
                n1: 121,
                n2: 157,
                dt: 1.0 / 48.0,
                ..GridSpec::default_spec()
            };
            let pair = extract(&reference_params(), &grid, 2e-3, 250).unwrap();
            let fit = fit_exp_quadratic(&pair).unwrap();
            (pair, fit)
        })
    }

    fn reference_surface() -> &'static PriceSurface {
        static SURF: OnceLock<PriceSurface> = OnceLock::new();
        SURF.get_or_init(|| {
            solve_surface(&reference_params(), &GridSpec::estimation_spec(), 30.0).unwrap()
        })
    }

    #[test]
    fn period_boundaries_quarterly() {
        let dates: Vec<NaiveDate> = (0..400)
            .map(|i| d("2001-01-02") + Duration::days(i))
            .collect();
        let b = period_boundaries(&dates, 0.25);
        assert_eq!(b[0], 0);
        assert_eq!(b[1], 91);
        assert_eq!(b[2], 182);
        assert!(b.len() >= 4);
    }

    #[test]
    fn realized_table_hand_computed_two_periods() {
        // three curve dates a quarter apart, curve level stepping down
        let curves_owned = vec![
            flat_curve(d("2002-01-02"), 0.050),
            flat_curve(d("2002-04-03"), 0.040),
            flat_curve(d("2002-07-03"), 0.045),
        ];
        let curves: Vec<&ZeroCurve> = curves_owned.iter().collect();
        let table = realized_table(&curves, &[2.0, 10.0], 0.25, None).unwrap();
        // expected excess per period from the flat-curve closed form:
        // R = exp(y_t tau - y_next (tau - h)), Rf = exp(y_t h)
        let excess = |y0: f64, y1: f64, tau: f64, h: f64| {
            (y0 * tau - y1 * (tau - h)).exp() - (y0 * h).exp()
        };
        let h1 = year_frac(d("2002-01-02"), d("2002-04-03"));
        let h2 = year_frac(d("2002-04-03"), d("2002-07-03"));
        for (row, &tau) in table.rows.iter().zip(&[2.0, 10.0]) {
            let e1 = excess(0.050, 0.040, tau, h1);
            let e2 = excess(0.040, 0.045, tau, h2);
            let mean = (e1 + e2) / 2.0;
            let sd = ((e1 - mean).powi(2) + (e2 - mean).powi(2)).sqrt(); // n-1 = 1
            assert_relative_eq!(row.mean_excess, mean, epsilon = 1e-10);
            assert_relative_eq!(row.sd, sd, epsilon = 1e-10);
            assert_relative_eq!(row.sharpe.unwrap(), mean / sd, epsilon = 1e-10);
            assert_eq!(row.n_periods, 2);
        }
    }

    #[test]
    fn realized_table_constant_curves_has_no_sharpe() {
        let curves_owned: Vec<ZeroCurve> = (0..5)
            .map(|k| flat_curve(d("2003-01-02") + Duration::days(91 * k), 0.04))
            .collect();
        let curves: Vec<&ZeroCurve> = curves_owned.iter().collect();
        let table = realized_table(&curves, &[5.0], 0.25, None).unwrap();
        let row = &table.rows[0];
        // constant flat curve: every bond returns exactly the funding rate
        assert!(row.mean_excess.abs() < 1e-12);
        assert!(row.sd < 1e-12);
        assert!(row.sharpe.is_none());
    }

    #[test]
    fn realized_table_requires_enough_sample() {
        let curves_owned = vec![flat_curve(d("2002-01-02"), 0.05)];
        let curves: Vec<&ZeroCurve> = curves_owned.iter().collect();
        assert!(realized_table(&curves, &[2.0], 0.25, None).is_err());
    }

    #[test]
    fn mask_excludes_short_curves() {
        let full = flat_curve(d("2002-01-02"), 0.05);
        let short = ZeroCurve::new(
            d("2002-01-03"),
            vec![0.25, 1.0, 2.0, 5.0, 10.0],
            vec![0.05; 5],
        )
        .unwrap();
        let curves = vec![full, short];
        let kept = mask_curves_covering(&curves, 30.0);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].date, d("2002-01-02"));
    }

    #[test]
    fn duration_matched_flat_curve_equals_short_rate() {
        // constant flat curve: every portfolio earns the funding rate, so
        // the quarterly log return is y * h regardless of leverage
        let curves_owned: Vec<ZeroCurve> = (0..4)
            .map(|k| flat_curve(d("2004-01-02") + Duration::days(91 * k), 0.03))
            .collect();
        let curves: Vec<&ZeroCurve> = curves_owned.iter().collect();
        let rows = duration_matched_table(&curves, &[1.0, 5.0, 30.0], &[10.0, 20.0], 0.25).unwrap();
        assert_eq!(rows.len(), 6);
        for row in &rows {
            let h = 91.0 / 365.25;
            assert_relative_eq!(row.mean_log_return, 0.03 * h, epsilon = 1e-10);
            assert_relative_eq!(row.weight, row.target_duration / row.maturity, epsilon = 1e-14);
        }
    }

    #[test]
    fn duration_matched_unit_weight_is_plain_bond() {
        let curves_owned = vec![
            flat_curve(d("2002-01-02"), 0.050),
            flat_curve(d("2002-04-03"), 0.040),
            flat_curve(d("2002-07-03"), 0.045),
        ];
        let curves: Vec<&ZeroCurve> = curves_owned.iter().collect();
        let rows = duration_matched_table(&curves, &[10.0], &[10.0], 0.25).unwrap();
        assert_relative_eq!(rows[0].weight, 1.0, epsilon = 1e-14);
        // w = 1 reduces to the plain bond log return
        let h1 = year_frac(d("2002-01-02"), d("2002-04-03"));
        let h2 = year_frac(d("2002-04-03"), d("2002-07-03"));
        let l1 = 0.050 * 10.0 - 0.040 * (10.0 - h1);
        let l2 = 0.040 * 10.0 - 0.045 * (10.0 - h2);
        assert_relative_eq!(rows[0].mean_log_return, (l1 + l2) / 2.0, epsilon = 1e-10);
    }

    #[test]
    fn forecast_constant_rate_model_is_riskless() {
        let c = 0.03;
        let p = crate::pde::tests::constant_rate_params(c);
        let grid = GridSpec {
            n1: 51,
            n2: 51,
            dt: 1.0 / 24.0,
            ..GridSpec::default_spec()
        };
        let surface = solve_surface(&p, &grid, 12.0).unwrap();
        let pair = extract(&p, &grid, 1e-4, 10).unwrap();
        let fit = fit_exp_quadratic(&pair).unwrap();
        let x = StateVector::new(0.0, 0.3);
        for tag in [MeasureTag::P, MeasureTag::L] {
            let t = conditional_forecast(
                tag, &p, &pair, &fit, &surface, &x, 0.25, &[1.0, 5.0, 10.0], 2000, 4,
            )
            .unwrap();
            for row in &t.rows {
                assert!(row.excess.abs() < 1e-6, "{tag:?}: excess {}", row.excess);
                assert!(row.vol < 1e-6);
                assert!(row.sharpe.is_none());
            }
            assert!(t.long_bond.excess.abs() < 1e-6);
        }
    }

    #[test]
    fn forecast_p_measure_reference_shape() {
        let (pair, fit) = reference_pair();
        let surface = reference_surface();
        let p = reference_params();
        let x = StateVector::new(0.05, 0.5);
        let t = conditional_forecast(
            MeasureTag::P, &p, pair, fit, surface, &x, 0.25, &[1.0, 30.0], 20_000, 8,
        )
        .unwrap();
        // downward-sloping P-Sharpe term structure
        let s1 = t.rows[0].sharpe.unwrap();
        let s30 = t.rows[1].sharpe.unwrap();
        assert!(s1 > s30, "P-Sharpe 1y {s1:.3} should exceed 30y {s30:.3}");
        assert_eq!(t.rejected_fraction, 0.0);
    }

    #[test]
    fn forecast_is_seed_deterministic() {
        let (pair, fit) = reference_pair();
        let surface = reference_surface();
        let p = reference_params();
        let x = StateVector::new(0.0, 0.4);
        let run = || {
            conditional_forecast(
                MeasureTag::L, &p, pair, fit, surface, &x, 0.25, &[2.0, 10.0], 2000, 99,
            )
            .unwrap()
        };
        let (a, b) = (run(), run());
        for (ra, rb) in a.rows.iter().zip(&b.rows) {
            assert_eq!(ra.excess, rb.excess);
            assert_eq!(ra.vol, rb.vol);
        }
        assert_eq!(a.long_bond.excess, b.long_bond.excess);
    }

    #[test]
    fn hj_bound_zero_for_constant_eigenfunction() {
        let p = crate::pde::tests::constant_rate_params(0.02);
        let grid = GridSpec {
            n1: 51,
            n2: 51,
            dt: 1.0 / 24.0,
            ..GridSpec::default_spec()
        };
        let surface = solve_surface(&p, &grid, 2.0).unwrap();
        let pair = extract(&p, &grid, 1e-4, 10).unwrap();
        let fit = fit_exp_quadratic(&pair).unwrap();
        let (bound, _) = hj_bound(&p, &pair, &fit, &surface, &StateVector::zeros(), 0.25, 2000, 5)
            .unwrap();
        assert!(bound < 1e-6, "bound {bound}");
    }

    #[test]
    fn l_sharpe_bounded_by_hj_within_mc_error() {
        let (pair, fit) = reference_pair();
        let surface = reference_surface();
        let p = reference_params();
        let x = StateVector::new(0.0, 0.5);
        let t = conditional_forecast(
            MeasureTag::L, &p, pair, fit, surface, &x, 0.25, &[2.0, 10.0, 20.0], 20_000, 21,
        )
        .unwrap();
        let (bound, bound_se) =
            hj_bound(&p, pair, fit, surface, &x, 0.25, 20_000, 21).unwrap();
        for row in t.rows.iter().chain(std::iter::once(&t.long_bond)) {
            if let Some(s) = row.sharpe {
                assert!(
                    s <= bound + 2.0 * bound_se + 3.0 * row.mc_se / row.vol.max(1e-12) + 0.02,
                    "Sharpe {s:.3} above HJ bound {bound:.3}"
                );
            }
        }
    }

    #[test]
    fn log_dominance_constant_rate_equality() {
        let p = crate::pde::tests::constant_rate_params(0.03);
        let grid = GridSpec {
            n1: 51,
            n2: 51,
            dt: 1.0 / 24.0,
            ..GridSpec::default_spec()
        };
        let surface = solve_surface(&p, &grid, 12.0).unwrap();
        let pair = extract(&p, &grid, 1e-4, 10).unwrap();
        let fit = fit_exp_quadratic(&pair).unwrap();
        let rep = log_dominance_check(
            &p, &pair, &fit, &surface, &StateVector::zeros(), 0.25, &[1.0, 10.0], 2000, 6, 2.0,
        )
        .unwrap();
        assert!(rep.all_dominated);
        for row in &rep.rows {
            assert!((row.mean_log - rep.long_bond_mean_log).abs() < 1e-6);
            assert!(row.cov_gap.abs() < 1e-6);
        }
    }

    #[test]
    fn log_dominance_reference_model() {
        let (pair, fit) = reference_pair();
        let surface = reference_surface();
        let p = reference_params();
        let rep = log_dominance_check(
            &p, pair, fit, surface, &StateVector::new(0.0, 0.5), 0.25,
            &[2.0, 10.0, 20.0], 10_000, 12, 2.0,
        )
        .unwrap();
        assert!(rep.all_dominated, "rows: {:?}", rep.rows);
        for row in &rep.rows {
            assert!(
                row.cov_gap.abs() <= 2.0 * row.cov_gap_se + 2e-4,
                "covariance identity gap {} (se {}) at tau {}",
                row.cov_gap,
                row.cov_gap_se,
                row.maturity
            );
        }
    }
}
