//! ZIRP lift-off forecasting: Monte Carlo distribution of the first
//! passage time of the nominal short rate above a threshold (25 bp by
//! default) under the P, Q and L measures.
//!
//! Paths are stepped on a fixed time grid (exact Gaussian steps for the
//! affine P and Q dynamics, Euler for the non-affine L dynamics) and the
//! crossing is detected at grid times only; paths that have not crossed by
//! the horizon cap are censored and reported separately, never folded into
//! the mean.

use nalgebra::{Matrix2, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::math::{chol2, expm2, lyapunov_integral};
use crate::measures::{LambdaLField, MeasureTag};
use crate::model_core::{ModelParams, StateVector};
use crate::pf::{Eigenpair, ExpQuadFit};

/// Default lift-off threshold: 25 basis points.
pub const LIFTOFF_THRESHOLD: f64 = 0.0025;

/// Simulated first-passage-time sample under one measure.
#[derive(Debug, Clone)]
pub struct PassageDistribution {
    pub tag: MeasureTag,
    /// Per-path first passage times in years; `None` marks a path censored
    /// at the horizon cap.
    pub path_times: Vec<Option<f64>>,
    pub n_paths: usize,
    pub dt: f64,
    pub horizon_cap: f64,
    pub threshold: f64,
    /// Fraction of L-paths dropped for escaping the sanity domain.
    pub escaped_fraction: f64,
}

impl PassageDistribution {
    /// Uncensored passage times.
    pub fn times(&self) -> Vec<f64> {
        self.path_times.iter().filter_map(|t| *t).collect()
    }

    pub fn censored_fraction(&self) -> f64 {
        let censored = self.path_times.iter().filter(|t| t.is_none()).count();
        censored as f64 / self.path_times.len().max(1) as f64
    }
}

/// Domain box used to reject runaway L-paths: the widest production grid.
fn sanity_contains(x: &StateVector) -> bool {
    let g = crate::pde::GridSpec::default_spec();
    g.contains(x)
}

/// Simulate the first passage of the short rate above `threshold` from
/// below, starting at `x0`, under the tagged measure.
///
/// P and Q paths use the exact OU transition over each step; L paths use
/// an Euler step with the grid-interpolated `lambda_L` drift correction
/// (exponential-quadratic fit outside the analytics region). The result
/// is deterministic given the seed; each path owns a counter-derived
/// substream.
#[allow(clippy::too_many_arguments)]
pub fn simulate_liftoff(
    tag: MeasureTag,
    params: &ModelParams,
    pair: &Eigenpair,
    fit: &ExpQuadFit,
    x0: &StateVector,
    threshold: f64,
    dt: f64,
    horizon_cap: f64,
    n_paths: usize,
    seed: u64,
) -> Result<PassageDistribution> {
    if !(threshold > 0.0) {
        return Err(Error::input("lift-off threshold must be positive"));
    }
    if params.short_rate(x0) >= threshold {
        return Err(Error::domain(format!(
            "short rate {:.4} at the starting state is already at or above the threshold {:.4}",
            params.short_rate(x0),
            threshold
        )));
    }
    if !(dt > 0.0 && horizon_cap > dt) {
        return Err(Error::input("need 0 < dt < horizon_cap"));
    }
    let n_steps = (horizon_cap / dt).ceil() as usize;
    let sigma = ModelParams::sigma_matrix();
    let field = LambdaLField { pair, fit };
    // exact one-step kernel for the affine measures
    let exact = match tag {
        MeasureTag::P => Some((&params.k_p, &params.theta_p)),
        MeasureTag::Q => Some((&params.k_q, &params.theta_q)),
        MeasureTag::L => None,
    }
    .map(|(k, theta)| -> Result<_> {
        let f = expm2(&(-k * dt));
        let g = (Matrix2::identity() - f) * *theta;
        let v = lyapunov_integral(k, &(sigma * sigma.transpose()), dt);
        Ok((f, g, chol2(&v)?))
    })
    .transpose()?;
    let sq_dt = dt.sqrt();

    let mut path_times = Vec::with_capacity(n_paths);
    let mut escaped = 0usize;
    for path in 0..n_paths {
        // fresh generator per path: the stream id isolates paths and the
        // word position restarts at zero, so path k's noise is independent
        // of how long earlier paths ran
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(path as u64);
        let mut x = *x0;
        let mut outcome = None;
        for step in 1..=n_steps {
            let z = Vector2::new(
                rng.sample::<f64, _>(StandardNormal),
                rng.sample::<f64, _>(StandardNormal),
            );
            match &exact {
                Some((f, g, chol)) => {
                    x = f * x + g + chol * z;
                }
                None => {
                    let drift = params.drift_q(&x) + sigma * field.eval(&x);
                    x += drift * dt + sigma * z * sq_dt;
                    if !sanity_contains(&x) {
                        outcome = Some(Err(()));
                        break;
                    }
                }
            }
            if params.short_rate(&x) >= threshold {
                outcome = Some(Ok(step as f64 * dt));
                break;
            }
        }
        match outcome {
            Some(Ok(t)) => path_times.push(Some(t)),
            Some(Err(())) => escaped += 1,
            None => path_times.push(None),
        }
    }
    let escaped_fraction = escaped as f64 / n_paths as f64;
    if escaped_fraction > 0.05 {
        return Err(Error::numerics(format!(
            "{:.1}% of paths escaped the state domain under the L dynamics",
            escaped_fraction * 100.0
        )));
    }
    Ok(PassageDistribution {
        tag,
        path_times,
        n_paths,
        dt,
        horizon_cap,
        threshold,
        escaped_fraction,
    })
}

/// Summary statistics of a lift-off distribution.
#[derive(Debug, Clone)]
pub struct LiftoffSummary {
    /// Median passage time (censored paths count as beyond the cap).
    pub median: f64,
    /// Monte Carlo standard error of the median, from the quantile-spread
    /// density estimate.
    pub median_se: f64,
    /// Mean over uncensored paths only.
    pub mean_uncensored: f64,
    pub censored_fraction: f64,
    /// Fraction of paths with passage time beyond 1, 3 and 5 years
    /// (censored paths count as beyond).
    pub tail_mass: [(f64, f64); 3],
    pub n_paths: usize,
}

/// Summarize a passage-time sample: order-statistic median (counting
/// censored paths as beyond the cap), mean over uncensored paths with the
/// censoring fraction disclosed, and right-tail masses.
pub fn summarize(dist: &PassageDistribution) -> Result<LiftoffSummary> {
    let n = dist.path_times.len();
    if n == 0 {
        return Err(Error::input("empty passage-time sample"));
    }
    let mut times = dist.times();
    if times.is_empty() {
        return Err(Error::numerics(
            "all paths censored at the horizon cap; no passage times to summarize",
        ));
    }
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let censored = n - times.len();
    let censored_fraction = censored as f64 / n as f64;
    if censored_fraction >= 0.5 {
        return Err(Error::numerics(format!(
            "median is censored: {:.1}% of paths beyond the {}y cap",
            censored_fraction * 100.0,
            dist.horizon_cap
        )));
    }
    // quantiles over all n paths with censored mass at the far right
    let quantile = |q: f64| -> f64 {
        let pos = q * (n - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        let at = |i: usize| {
            if i < times.len() {
                times[i]
            } else {
                dist.horizon_cap
            }
        };
        let w = pos - lo as f64;
        (1.0 - w) * at(lo) + w * at(hi)
    };
    let median = quantile(0.5);
    // density at the median from the spread of nearby quantiles
    let delta = 0.02;
    let spread = (quantile(0.5 + delta) - quantile(0.5 - delta)).max(dist.dt * 0.5);
    let density = 2.0 * delta / spread;
    let median_se = 1.0 / (2.0 * density * (n as f64).sqrt());
    let mean_uncensored = times.iter().sum::<f64>() / times.len() as f64;
    let tail = |t: f64| {
        let beyond = times.iter().filter(|&&x| x > t).count() + censored;
        beyond as f64 / n as f64
    };
    Ok(LiftoffSummary {
        median,
        median_se,
        mean_uncensored,
        censored_fraction,
        tail_mass: [(1.0, tail(1.0)), (3.0, tail(3.0)), (5.0, tail(5.0))],
        n_paths: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model_core::reference_params;
    use crate::pde::GridSpec;
    use crate::pf::{extract, fit_exp_quadratic};
    use approx::assert_relative_eq;
    use std::sync::OnceLock;

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

    /// A ZIRP state: shadow rate below zero, short rate floored at zero.
    fn zirp_state() -> StateVector {
        StateVector::new(0.0, 0.0)
    }

    #[test]
    fn rejects_start_above_threshold() {
        let (pair, fit) = reference_pair();
        let p = reference_params();
        // short rate at (0.2, 1.0) is about 9%, far above 25 bp
        let err = simulate_liftoff(
            MeasureTag::P, &p, pair, fit, &StateVector::new(0.2, 1.0),
            LIFTOFF_THRESHOLD, 1.0 / 252.0, 5.0, 10, 1,
        )
        .unwrap_err();
        assert!(err.to_string().contains("threshold"));
    }

    #[test]
    fn short_cap_censors_everything() {
        let (pair, fit) = reference_pair();
        let p = reference_params();
        let dist = simulate_liftoff(
            MeasureTag::Q, &p, pair, fit, &zirp_state(),
            LIFTOFF_THRESHOLD, 1.0 / 252.0, 0.02, 200, 3,
        )
        .unwrap();
        assert!(dist.censored_fraction() > 0.9);
        // a censored median is an error, not a silent number
        assert!(summarize(&dist).is_err());
    }

    #[test]
    fn summarize_uniform_sample_arithmetic() {
        let dist = PassageDistribution {
            tag: MeasureTag::P,
            path_times: (1..=10).map(|k| Some(k as f64 * 0.1)).collect(),
            n_paths: 10,
            dt: 1.0 / 252.0,
            horizon_cap: 15.0,
            threshold: LIFTOFF_THRESHOLD,
            escaped_fraction: 0.0,
        };
        let s = summarize(&dist).unwrap();
        assert_relative_eq!(s.median, 0.55, epsilon = 1e-12);
        assert_relative_eq!(s.mean_uncensored, 0.55, epsilon = 1e-12);
        assert_eq!(s.censored_fraction, 0.0);
        assert_relative_eq!(s.tail_mass[0].1, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn summarize_constant_sample() {
        let dist = PassageDistribution {
            tag: MeasureTag::Q,
            path_times: vec![Some(1.0); 50],
            n_paths: 50,
            dt: 1.0 / 252.0,
            horizon_cap: 15.0,
            threshold: LIFTOFF_THRESHOLD,
            escaped_fraction: 0.0,
        };
        let s = summarize(&dist).unwrap();
        assert_relative_eq!(s.median, 1.0, epsilon = 1e-12);
        assert_relative_eq!(s.mean_uncensored, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn seed_determinism() {
        let (pair, fit) = reference_pair();
        let p = reference_params();
        let run = || {
            simulate_liftoff(
                MeasureTag::L, &p, pair, fit, &zirp_state(),
                LIFTOFF_THRESHOLD, 1.0 / 52.0, 8.0, 500, 77,
            )
            .unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(a.path_times, b.path_times);
    }

    #[test]
    fn passage_time_monotone_in_threshold_pathwise() {
        // crossing a lower barrier from below happens weakly earlier on
        // every path when the noise is shared
        let (pair, fit) = reference_pair();
        let p = reference_params();
        let run = |thr: f64| {
            simulate_liftoff(
                MeasureTag::P, &p, pair, fit, &zirp_state(), thr, 1.0 / 52.0, 10.0, 400, 5,
            )
            .unwrap()
        };
        let hi = run(0.0025);
        let lo = run(0.0010);
        for (t_hi, t_lo) in hi.path_times.iter().zip(&lo.path_times) {
            let a = t_hi.unwrap_or(f64::INFINITY);
            let b = t_lo.unwrap_or(f64::INFINITY);
            assert!(b <= a, "10bp passage {b} after 25bp passage {a}");
        }
    }

    #[test]
    fn measure_ordering_smoke() {
        // coarse, fast version of the lift-off ordering: P lifts off later
        // than Q, and Q and L are close
        let (pair, fit) = reference_pair();
        let p = reference_params();
        let run = |tag| {
            let d = simulate_liftoff(
                tag, &p, pair, fit, &zirp_state(), LIFTOFF_THRESHOLD, 1.0 / 52.0, 15.0, 3000, 13,
            )
            .unwrap();
            summarize(&d).unwrap()
        };
        let sp = run(MeasureTag::P);
        let sq = run(MeasureTag::Q);
        let sl = run(MeasureTag::L);
        assert!(
            sp.median > sq.median,
            "P median {:.2} should exceed Q median {:.2}",
            sp.median,
            sq.median
        );
        assert!(
            (sq.median - sl.median).abs() < 0.5,
            "Q median {:.2} vs L median {:.2}",
            sq.median,
            sl.median
        );
    }
}
