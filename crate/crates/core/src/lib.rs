//! Transporting treatment effects from trials that observe the outcome to
//! trials that only observe a proxy for it, with sensitivity analysis for
//! bias in the proxy relationship.
//!
//! The pipeline is: load a [`StudyDataset`], choose a [`ProxyConfig`], fit a
//! [`transport`] estimator, then [`bootstrap`] it and scan the
//! [`sensitivity`] parameters. [`simlab`] holds the simulation used to check
//! the whole chain against known truth.

pub mod bootstrap;
pub mod data;
pub mod error;
pub mod numeric;
pub mod regression;
pub mod report;
pub mod rng;
pub mod sensitivity;
pub mod simlab;
pub mod transport;

pub use bootstrap::{bootstrap_estimate, BootstrapPlan, BootstrapResult, Stratification};
pub use data::{load_dataset, read_dataset, validate_assumptions, ProxyConfig, Schema, StudyDataset};
pub use error::{Error, Result};
pub use regression::RegressionMode;
pub use sensitivity::{BiasBound, BoundForm, Grid, Interval, SensitivityResult, Target};
pub use transport::{estimate, AteEstimate, ModelSpec, Variant};
