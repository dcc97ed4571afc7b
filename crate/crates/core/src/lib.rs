//! Estimation of conditional average treatment effects (CATE) with
//! penalty-transfer pretraining.
//!
//! The central idea: features that drive the mean outcome are often the same
//! features that modulate the treatment effect. The mean-outcome model is fit
//! first, and its active set is converted into per-feature penalty factors for
//! the effect model, with a tunable strength `alpha` selected by the
//! cross-validated residualized (R) loss. The crate provides
//!
//! * a weighted lasso / logistic lasso engine with per-feature penalty
//!   factors ([`lasso`], [`logistic`], [`unilasso`]),
//! * cross-fitted nuisance estimation ([`nuisance`]),
//! * the pretrained R-learner and its univariate-guided variant
//!   ([`rlearner`]), the pretrained DR-learner ([`drlearner`]),
//! * stump boosting and basis expansion ([`boost`]), regression forests with
//!   importance-guided feature sampling ([`forest`]),
//! * simulation data generators ([`dgp`]) and evaluation metrics including
//!   TOC/AUTOC and a sequential heterogeneity test ([`eval`]).

pub mod boost;
pub mod data;
pub mod dgp;
pub mod drlearner;
pub mod error;
pub mod eval;
pub mod forest;
pub mod lasso;
pub mod logistic;
pub mod nuisance;
pub mod rlearner;
pub mod rng;
pub mod unilasso;

pub use data::{make_folds, standardize_columns, Dataset, FoldAssignment};
pub use error::{Error, Result};
pub use rng::SeededRng;
