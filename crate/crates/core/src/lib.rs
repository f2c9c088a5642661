//! Constrained blackbox optimization that pairs an augmented Lagrangian outer
//! loop with Gaussian process surrogates for the constraints.
//!
//! ```no_run
//! use auglag_bo::{optim_auglag, toy_problem, SearchConfig, Variant};
//!
//! let trace = optim_auglag(&toy_problem(), &SearchConfig::new(Variant::Ei, 100, 1)).unwrap();
//! println!("{:?}", trace.rows().last().unwrap().best_valid_f);
//! ```

pub mod acquisition;
pub mod auglag;
pub mod comparators;
pub mod design;
pub mod error;
pub mod gp;
pub mod harness;
mod linalg;
pub mod optimizer;
pub mod problem;
pub mod trace;

pub use auglag::AlParams;
pub use error::{Error, Result};
pub use gp::{fit_gp, DesignSet, GpHyper, GpSurrogate, Prediction};
pub use optimizer::{optim_auglag, SearchConfig, Variant};
pub use problem::{toy_problem, Evaluation, Hyperrectangle, Problem, ProblemSpec};
pub use trace::{Decision, ProgressTrace};
