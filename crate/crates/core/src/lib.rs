//! Finite-rank kernel ridge regression.
//!
//! The crate fits kernel ridge regression (KRR) for kernels of finite rank
//! `M`, computes the test error of the fitted regressor exactly as
//! `bias + variance` through the random matrix
//! `B = (I + Δ + λΛ⁻¹)⁻¹`, and evaluates high-probability upper and lower
//! bounds on both terms together with two baselines.
//!
//! Module map:
//!
//! | Module | Contents |
//! |--------|----------|
//! | [`kernel`] | spectral kernels, truncated NTK on the circle, Legendre kernel |
//! | [`target`] | target functions in the eigenbasis, noisy datasets |
//! | [`regressor`] | dual solve, prediction, train error |
//! | [`exact_error`] | fluctuation matrix, `B`, exact bias/variance, oracles |
//! | [`bounds`] | upper/lower bounds, baselines, sample-size thresholds |
//! | [`experiment`] | CLI-facing experiment drivers and CSV/JSON artifacts |
//!
//! ```
//! use std::sync::Arc;
//! use finrank_krr::{kernel::SpectralKernel, target::TargetSpec, regressor, exact_error};
//!
//! let kernel = Arc::new(SpectralKernel::tntk(7).unwrap());
//! let target = TargetSpec::tntk_cosine(kernel.clone()).unwrap();
//! let data = target.sample_dataset(50, 0.05, 7).unwrap();
//! let lambda = 0.05 / 50.0;
//! let fitted = regressor::fit(&kernel, &data, lambda).unwrap();
//! let state = exact_error::fluctuation_state(&kernel, &data.inputs, lambda).unwrap();
//! let report = exact_error::error_report(&state, &target, 0.05);
//! assert!(report.test_error > 0.0);
//! assert!(fitted.predict(0.0).unwrap().is_finite());
//! ```
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod error;
pub mod exact_error;
pub mod experiment;
pub mod kernel;
pub mod linalg;
pub mod quadrature;
pub mod regressor;
pub mod stats;
pub mod target;
pub mod validate;

pub use error::{Error, Result};
