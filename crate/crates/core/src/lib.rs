//! Joint antenna selection and power allocation for zero-forcing precoded,
//! subarray-switching XL-MIMO downlinks.
//!
//! The crate is organised bottom-up:
//!
//! - [`config`] and [`model`]: system parameters, cell geometry, channel draws
//!   and Gramian construction.
//! - [`linalg`]: Hermitian Cholesky inversion and the Sherman-Morrison-Woodbury
//!   swap update used by the distributed selector.
//! - [`power`]: ZF spectral efficiency, water filling with user deactivation and
//!   the equal-power capacity bound.
//! - [`baselines`], [`ga`], [`dga`]: the antenna selectors.
//! - [`cost`]: analytic training/coordination/flop accounting.
//! - [`harness`]: Monte-Carlo experiments and result emission.

pub mod baselines;
pub mod config;
pub mod cost;
pub mod dga;
pub mod error;
pub mod ga;
pub mod harness;
pub mod linalg;
pub mod model;
pub mod power;
pub mod seed;

pub use config::SystemConfig;
pub use error::{ConfigError, LinalgError, SearchError};
pub use ga::GaParams;
pub use linalg::{CMatrix, GramianState};
pub use model::{ChannelRealization, Geometry, SelectionMask};
pub use power::PowerAllocation;
