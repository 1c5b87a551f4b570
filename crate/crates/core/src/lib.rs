//! Causal disentanglement lab.
//!
//! * [`analytic`]: closed-form information quantities of the scalar Gaussian
//!   SCM and exact oracles over finite joint tables.
//! * [`scm`]: seeded samplers, interventions and the compression channel.
//! * [`estimators`]: bilinear critics, InfoNCE / NCE-CLUB and gradient reversal.
//! * [`trainer`]: adversarially penalised linear outcome model on the synthetic SCM.
//! * [`harness`]: sweeps, analytic curve emission, estimator calibration and
//!   result tables.
//! * [`checks`]: the acceptance criteria as runnable checks.

pub mod analytic;
pub mod checks;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod optim;
pub mod rng;
pub mod scm;
pub mod trainer;

pub use analytic::{DiscreteJoint, GaussianScmParams, MiQuery, RepresentationSpec};
pub use error::{Error, Result};
pub use estimators::{BilinearCritic, MiEstimate};
pub use scm::{Dataset, LinearScmConfig};
