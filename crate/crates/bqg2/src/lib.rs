//! Two-factor Black quadratic-Gaussian (B-QG2) shadow-rate term structure
//! model: market data bootstrap, finite-difference bond pricing, extended
//! Kalman filter quasi-maximum-likelihood estimation, principal
//! eigenfunction extraction of the pricing operator, P/Q/L measure
//! analytics, bond risk-premium term structures and short-rate lift-off
//! first-passage forecasting.

pub mod analytics;
pub mod error;
pub mod filter;
pub mod liftoff;
pub mod market_data;
pub mod math;
pub mod measures;
pub mod model_core;
pub mod optimize;
pub mod pde;
pub mod pf;

pub use error::{Error, Result};
pub use model_core::{ModelParams, StateVector};
