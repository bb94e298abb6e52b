//! Labour-weighted economic complexity toolkit.
//!
//! The crate covers the full analytical chain from a country × industry ×
//! year employment panel to fixed-effects regressions:
//!
//! - [`data_model`]: CSV ingestion and validation of employment, macro and wage panels.
//! - [`reconstruct`]: gap filling for employment series and masked-MAE validation.
//! - [`null_model`]: Balassa RCA, the discrete bipartite weighted configuration
//!   model, p-values and inferred comparative advantage matrices.
//! - [`efc`]: the fitness–complexity fixed point with a dummy-country anchor.
//! - [`structural`]: labour shares, labour-weighted fitness and its
//!   within/between decomposition, plus the entropy baseline.
//! - [`outcomes`]: outcome variables and the regression panel.
//! - [`econometrics`]: two-way fixed-effects OLS with clustered covariance.
//! - [`pipeline`]: declarative end-to-end runs with hashed manifests.

pub mod data_model;
pub mod demo;
pub mod econometrics;
pub mod efc;
pub mod error;
pub mod io;
pub mod null_model;
pub mod outcomes;
pub mod pipeline;
pub mod reconstruct;
pub mod structural;

pub use error::{Error, Result};
