//! Probabilistic day-ahead price forecasts by error dressing in volume
//! space.
//!
//! A point price forecast is mapped to a volume through the previous day's
//! ask curve, a Gaussian volume error fitted on past residuals is attached,
//! and the result is pushed back through the curve. The pushforward is an
//! exact atomic distribution on the curve's price levels.
//!
//! ```
//! use std::sync::Arc;
//! use spotdress::curves::{Side, StepCurve};
//! use spotdress::dressing::dress;
//! use spotdress::volmodel::{ErrorDistribution, Regime};
//!
//! let ask = StepCurve::new(Side::Ask, &[(0.0, 10.0), (100.0, 20.0), (200.0, 100.0)])
//!     .unwrap()
//!     .with_end(250.0)
//!     .unwrap();
//! let law = ErrorDistribution::new(0.0, 50.0, Regime::Tail).unwrap();
//! let dist = dress(&ask, 15.0, Arc::new(law)).unwrap();
//! assert!((dist.cdf(10.0) - 0.5).abs() < 1e-12);
//! assert_eq!(dist.quantile(0.9), 20.0);
//! ```

pub mod backtest;
pub mod config;
pub mod curves;
pub mod dataset;
pub mod dressing;
pub mod error;
pub mod io;
pub mod stats;
pub mod synthmarket;
pub mod verification;
pub mod volmodel;

pub use error::{Error, Result};
