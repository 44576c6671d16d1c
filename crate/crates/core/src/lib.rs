//! Bayesian data-augmentation MCMC for stochastic epidemic models observed
//! through prevalence counts.
//!
//! Subject-level disease histories are updated one subject at a time with a
//! proposal built from a forward-backward pass, a discrete skeleton and
//! endpoint-conditioned bridges. Parameters are refreshed from their
//! conjugate full conditionals.

pub mod bridge;
pub mod config;
pub mod ctmc;
pub mod data;
pub mod diag;
pub mod emission;
pub mod engine;
pub mod error;
pub mod gibbs;
pub mod history;
pub mod io;
pub mod likelihood;
pub mod model;
pub mod params;
pub mod pmmh;
pub mod proposal;
pub mod rwmh;
pub mod sim;

pub use data::Dataset;
pub use emission::{Emission, EmissionKind};
pub use error::{Error, Result};
pub use history::{Event, Jump, PopulationHistory, SubjectPath};
pub use model::{Compartment, ModelKind, ModelSpec};
pub use params::{Params, PriorSpec};
