//! The Gaussian many-to-one channel and the free parameters of the lattice scheme.
//!
//! Receiver 0 hears every transmitter:
//!
//! ```text
//! y0 = x0 + sum_k b_k x_k + z0
//! yk = h_k x_k + zk,   k = 1..K
//! ```
//!
//! Every transmitter has average power `P` and the gain from Tx 0 to Rx 0 is
//! normalised to one.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("number of cognitive users must be at least 1")]
    NoUsers,
    #[error("power must be positive and finite, got {0}")]
    InvalidPower(f64),
    #[error("{what} has length {got}, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("cross gain b[{index}] = {value} must be nonnegative")]
    NegativeCrossGain { index: usize, value: f64 },
    #[error("lambda out of range: lambda[{index}] = {value} not in [0, 1]")]
    LambdaOutOfRange { index: usize, value: f64 },
    #[error("beta must be positive: beta[{index}] = {value}")]
    BetaNotPositive { index: usize, value: f64 },
    #[error("{what}[{index}] is not finite")]
    NonFinite { what: &'static str, index: usize },
    #[error("cannot read config: {0}")]
    Io(String),
    #[error("malformed config: {0}")]
    Parse(String),
}

/// Physical channel: `K` cognitive users, power `P`, cross gains `b` into
/// Rx 0 and direct gains `h`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelConfig {
    pub users: usize,
    pub power: f64,
    pub cross: Vec<f64>,
    pub direct: Vec<f64>,
}

impl ChannelConfig {
    pub fn new(power: f64, cross: Vec<f64>, direct: Vec<f64>) -> Self {
        Self {
            users: cross.len(),
            power,
            cross,
            direct,
        }
    }

    /// All cognitive users share `b` and `h`.
    pub fn symmetric(users: usize, power: f64, b: f64, h: f64) -> Self {
        Self::new(power, vec![b; users], vec![h; users])
    }

    pub fn is_symmetric(&self) -> bool {
        let same = |v: &[f64]| v.windows(2).all(|w| w[0] == w[1]);
        same(&self.cross) && same(&self.direct)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.users == 0 {
            return Err(ModelError::NoUsers);
        }
        if !(self.power.is_finite() && self.power > 0.0) {
            return Err(ModelError::InvalidPower(self.power));
        }
        check_len("b", self.users, self.cross.len())?;
        check_len("h", self.users, self.direct.len())?;
        check_finite("b", &self.cross)?;
        check_finite("h", &self.direct)?;
        if let Some((index, &value)) = self.cross.iter().enumerate().find(|(_, &v)| v < 0.0) {
            return Err(ModelError::NegativeCrossGain { index, value });
        }
        Ok(())
    }
}

/// Power splits `lambda`, lattice scalings `beta` (index 0 is the primary user)
/// and dirty-paper coefficients `gamma`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeParams {
    pub lambda: Vec<f64>,
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
}

impl SchemeParams {
    /// `lambda = 0`, `beta = 1`, `gamma = 0`: the non-cognitive default.
    pub fn plain(users: usize) -> Self {
        Self {
            lambda: vec![0.0; users],
            beta: vec![1.0; users + 1],
            gamma: vec![0.0; users],
        }
    }

    /// Shared parameters for every cognitive user.
    pub fn tied(users: usize, lambda: f64, beta0: f64, beta: f64, gamma: f64) -> Self {
        let mut betas = vec![beta; users + 1];
        betas[0] = beta0;
        Self {
            lambda: vec![lambda; users],
            beta: betas,
            gamma: vec![gamma; users],
        }
    }

    pub fn validate(&self, users: usize) -> Result<(), ModelError> {
        check_len("lambda", users, self.lambda.len())?;
        check_len("beta", users + 1, self.beta.len())?;
        check_len("gamma", users, self.gamma.len())?;
        check_finite("lambda", &self.lambda)?;
        check_finite("beta", &self.beta)?;
        check_finite("gamma", &self.gamma)?;
        if let Some((index, &value)) = self
            .lambda
            .iter()
            .enumerate()
            .find(|(_, &v)| !(0.0..=1.0).contains(&v))
        {
            return Err(ModelError::LambdaOutOfRange { index, value });
        }
        if let Some((index, &value)) = self.beta.iter().enumerate().find(|(_, &v)| v <= 0.0) {
            return Err(ModelError::BetaNotPositive { index, value });
        }
        Ok(())
    }
}

fn check_len(what: &'static str, expected: usize, got: usize) -> Result<(), ModelError> {
    if expected != got {
        return Err(ModelError::LengthMismatch {
            what,
            expected,
            got,
        });
    }
    Ok(())
}

fn check_finite(what: &'static str, v: &[f64]) -> Result<(), ModelError> {
    match v.iter().position(|x| !x.is_finite()) {
        Some(index) => Err(ModelError::NonFinite { what, index }),
        None => Ok(()),
    }
}

/// Checks every invariant of the pair and hands it back unchanged.
pub fn validate(
    config: ChannelConfig,
    params: SchemeParams,
) -> Result<(ChannelConfig, SchemeParams), ModelError> {
    config.validate()?;
    params.validate(config.users)?;
    Ok((config, params))
}

/// Quantities seen by the primary decoder once the cognitive users have
/// committed their power splits.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveChannel {
    /// Gain of `x0` at Rx 0 including the relayed copies: `1 + sum b_k sqrt(lambda_k)`.
    pub b0: f64,
    /// Second moments of the shaping lattices, index 0 is the primary user.
    pub sigma_sq: Vec<f64>,
    /// `[b0, b_1 sqrt(1 - lambda_1), ..., b_K sqrt(1 - lambda_K)]`.
    pub h_eff: Vec<f64>,
}

pub fn effective_channel(config: &ChannelConfig, params: &SchemeParams) -> EffectiveChannel {
    let p = config.power;
    let b0 = 1.0
        + config
            .cross
            .iter()
            .zip(&params.lambda)
            .map(|(b, l)| b * l.sqrt())
            .sum::<f64>();
    let mut sigma_sq = Vec::with_capacity(config.users + 1);
    sigma_sq.push(params.beta[0] * params.beta[0] * p);
    let mut h_eff = Vec::with_capacity(config.users + 1);
    h_eff.push(b0);
    for k in 0..config.users {
        let lbar = 1.0 - params.lambda[k];
        sigma_sq.push(lbar * params.beta[k + 1] * params.beta[k + 1] * p);
        h_eff.push(config.cross[k] * lbar.sqrt());
    }
    EffectiveChannel {
        b0,
        sigma_sq,
        h_eff,
    }
}

/// An achievable (or bounding) rate tuple `(R_0, R_1, ..., R_K)` in bits per
/// real channel use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub rates: Vec<f64>,
}

impl RatePoint {
    pub fn new(rates: Vec<f64>) -> Self {
        Self { rates }
    }

    pub fn primary(&self) -> f64 {
        self.rates[0]
    }

    /// Smallest cognitive rate.
    pub fn min_cognitive(&self) -> f64 {
        self.rates[1..].iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn sum(&self) -> f64 {
        self.rates.iter().sum()
    }

    /// `min(R_0, min_k R_k)`.
    pub fn symmetric(&self) -> f64 {
        self.rates.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Weakly dominates `other` in every coordinate, up to `tol`.
    pub fn dominates(&self, other: &RatePoint, tol: f64) -> bool {
        self.rates
            .iter()
            .zip(&other.rates)
            .all(|(a, b)| *a >= *b - tol)
    }
}

/// Optional grid overrides carried by a config file; consumed by the sweeps.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridOverrides {
    pub lambda_steps: Option<usize>,
    pub beta_steps: Option<usize>,
    pub gamma_steps: Option<usize>,
    pub beta_range: Option<[f64; 2]>,
    pub gamma_range: Option<[f64; 2]>,
}

/// On-disk JSON layout: `K`, `P`, `b`, `h` and optional `lambda`, `beta`,
/// `gamma`, `grid`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigDocument {
    #[serde(rename = "K")]
    pub users: usize,
    #[serde(rename = "P")]
    pub power: f64,
    pub b: Vec<f64>,
    pub h: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridOverrides>,
}

impl ConfigDocument {
    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        serde_json::from_str(text).map_err(|e| ModelError::Parse(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| ModelError::Io(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_json(&text)
    }

    /// Fills defaults and validates.
    pub fn resolve(&self) -> Result<(ChannelConfig, SchemeParams), ModelError> {
        let k = self.users;
        let config = ChannelConfig {
            users: k,
            power: self.power,
            cross: self.b.clone(),
            direct: self.h.clone(),
        };
        let params = SchemeParams {
            lambda: self.lambda.clone().unwrap_or_else(|| vec![0.0; k]),
            beta: self.beta.clone().unwrap_or_else(|| vec![1.0; k + 1]),
            gamma: self.gamma.clone().unwrap_or_else(|| vec![0.0; k]),
        };
        validate(config, params)
    }
}
