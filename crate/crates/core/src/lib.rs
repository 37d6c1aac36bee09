//! Low-rank tensor autoregression: tensor algebra, the LRTAR model,
//! least-squares and nuclear-norm regularized estimators, and evaluation
//! tooling for simulation studies and rolling forecasts.

pub mod clock;
pub mod error;
pub mod evaluation;
pub mod io;
pub mod least_squares;
pub mod linalg;
pub mod model;
pub mod regularized;
pub mod rng;
pub mod tensor;
pub mod tucker;

pub use error::{Error, Result};
pub use least_squares::{fit_ltr, fit_ols, fit_rrr, AlsOptions, FitReport, RegressionDesign};
pub use model::{make_dgp, LrtarModel, TensorSeries};
pub use regularized::{fit_mn, fit_sn, fit_ssn, fit_tssn, Penalty, RegOptions};
pub use tensor::{DenseTensor, MatricizationMap};
pub use tucker::TuckerDecomposition;
