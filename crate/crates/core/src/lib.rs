//! Successive compute-and-forward over nested lattice codes for the Gaussian
//! many-to-one interference channel, cognitive and non-cognitive.

pub mod baselines;
pub mod cf_rates;
pub mod channel_model;
pub mod coeff_search;
pub mod regions;

pub use cf_rates::{theorem1_rates, RateOptions, Theorem1Rates};
pub use channel_model::{ChannelConfig, RatePoint, SchemeParams};
pub use coeff_search::{best_matrix, CoeffMatrix, Objective, SearchBudget};
