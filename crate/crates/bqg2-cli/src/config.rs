//! TOML run configuration shared by every subcommand.

use serde::Deserialize;

use bqg2::pde::GridSpec;

fn d_eps() -> f64 {
    1e-4
}
fn d_horizon_cap_years() -> usize {
    250
}
fn d_n_starts() -> usize {
    5
}
fn d_nm_max_iters() -> usize {
    400
}
fn d_bfgs_max_iters() -> usize {
    30
}
fn d_est_seed() -> u64 {
    7
}
fn d_init_meas_sd() -> f64 {
    0.001
}
fn d_n_days() -> usize {
    2520
}
fn d_meas_sd_bp() -> f64 {
    10.0
}
fn d_one() -> u64 {
    1
}
fn d_analysis_state() -> [f64; 2] {
    [0.0, 0.5]
}
fn d_horizon() -> f64 {
    0.25
}
fn d_maturities() -> Vec<f64> {
    vec![1.0, 2.0, 3.0, 5.0, 10.0, 20.0, 30.0]
}
fn d_liftoff_state() -> [f64; 2] {
    [0.0, 0.0]
}
fn d_threshold() -> f64 {
    0.0025
}
fn d_liftoff_dt() -> f64 {
    1.0 / 252.0
}
fn d_liftoff_cap() -> f64 {
    15.0
}
fn d_n_paths() -> usize {
    100_000
}

/// Top-level run configuration. Every field has a default so a minimal
/// config (or none at all for fixture-driven commands) is enough.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub extraction: ExtractionConfig,
    #[serde(default)]
    pub estimation: EstimationConfig,
    #[serde(default)]
    pub synthetic: SyntheticConfig,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    #[serde(default)]
    pub liftoff: LiftoffConfig,
    #[serde(default)]
    pub mc: McConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// FRED-format CMT yield CSV (columns DATE,1MO,...,30).
    #[serde(default)]
    pub cmt_csv: Option<String>,
    /// Model parameter file in the flat `key = value` format; the built-in
    /// benchmark estimate is used when absent.
    #[serde(default)]
    pub params_file: Option<String>,
}

/// Pricing grid; unset fields fall back to the production default (the
/// analytics region padded by 250% per side).
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default)]
    pub x1_min: Option<f64>,
    #[serde(default)]
    pub x1_max: Option<f64>,
    #[serde(default)]
    pub x2_min: Option<f64>,
    #[serde(default)]
    pub x2_max: Option<f64>,
    #[serde(default)]
    pub n1: Option<usize>,
    #[serde(default)]
    pub n2: Option<usize>,
    #[serde(default)]
    pub dt: Option<f64>,
}

impl GridConfig {
    pub fn resolve(&self, base: GridSpec) -> GridSpec {
        GridSpec {
            x1_min: self.x1_min.unwrap_or(base.x1_min),
            x1_max: self.x1_max.unwrap_or(base.x1_max),
            x2_min: self.x2_min.unwrap_or(base.x2_min),
            x2_max: self.x2_max.unwrap_or(base.x2_max),
            n1: self.n1.unwrap_or(base.n1),
            n2: self.n2.unwrap_or(base.n2),
            dt: self.dt.unwrap_or(base.dt),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtractionConfig {
    /// Ratio-gap stopping tolerance.
    #[serde(default = "d_eps")]
    pub eps: f64,
    /// Horizon cap in years for the ratio limit.
    #[serde(default = "d_horizon_cap_years")]
    pub horizon_cap_years: usize,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        ExtractionConfig {
            eps: d_eps(),
            horizon_cap_years: d_horizon_cap_years(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimationConfig {
    #[serde(default = "d_n_starts")]
    pub n_starts: usize,
    #[serde(default = "d_nm_max_iters")]
    pub nm_max_iters: usize,
    #[serde(default = "d_bfgs_max_iters")]
    pub bfgs_max_iters: usize,
    #[serde(default = "d_est_seed")]
    pub seed: u64,
    /// Observation tenors in years; defaults to the CMT ladder.
    #[serde(default)]
    pub tenors: Option<Vec<f64>>,
    /// Initial per-tenor measurement error sd (decimal yield units).
    #[serde(default = "d_init_meas_sd")]
    pub init_meas_sd: f64,
    /// Compute sandwich standard errors after the fit (slow).
    #[serde(default)]
    pub standard_errors: bool,
}

impl Default for EstimationConfig {
    fn default() -> Self {
        EstimationConfig {
            n_starts: d_n_starts(),
            nm_max_iters: d_nm_max_iters(),
            bfgs_max_iters: d_bfgs_max_iters(),
            seed: d_est_seed(),
            tenors: None,
            init_meas_sd: d_init_meas_sd(),
            standard_errors: false,
        }
    }
}

/// Synthetic-panel generation for estimation without market data.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticConfig {
    #[serde(default = "d_n_days")]
    pub n_days: usize,
    /// Measurement noise in basis points.
    #[serde(default = "d_meas_sd_bp")]
    pub meas_sd_bp: f64,
    #[serde(default = "d_one")]
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n_days: d_n_days(),
            meas_sd_bp: d_meas_sd_bp(),
            seed: d_one(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    /// Forecast state (x1, x2); must lie in the analytics region.
    #[serde(default = "d_analysis_state")]
    pub state: [f64; 2],
    /// Holding horizon in years.
    #[serde(default = "d_horizon")]
    pub horizon: f64,
    /// Forecast maturities in years.
    #[serde(default = "d_maturities")]
    pub maturities: Vec<f64>,
    /// Standard errors of the five free market-price-of-risk parameters,
    /// used for the v = 0 test; defaults to the benchmark estimate's.
    #[serde(default)]
    pub mpr_se: Option<[f64; 5]>,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            state: d_analysis_state(),
            horizon: d_horizon(),
            maturities: d_maturities(),
            mpr_se: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LiftoffConfig {
    /// Starting state; the short rate there must be below the threshold.
    #[serde(default = "d_liftoff_state")]
    pub state: [f64; 2],
    #[serde(default = "d_threshold")]
    pub threshold: f64,
    #[serde(default = "d_liftoff_dt")]
    pub dt: f64,
    #[serde(default = "d_liftoff_cap")]
    pub horizon_cap: f64,
}

impl Default for LiftoffConfig {
    fn default() -> Self {
        LiftoffConfig {
            state: d_liftoff_state(),
            threshold: d_threshold(),
            dt: d_liftoff_dt(),
            horizon_cap: d_liftoff_cap(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McConfig {
    #[serde(default = "d_n_paths")]
    pub n_paths: usize,
    #[serde(default = "d_one")]
    pub seed: u64,
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig {
            n_paths: d_n_paths(),
            seed: d_one(),
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default)]
    pub dir: Option<String>,
}
