//! BIC and its sparse-regression modifications mBIC, mBIC2 and EBIC.
//!
//! All criteria are minimised. With `sigma` unknown the fit term is
//! `n ln RSS`; with `sigma` known it is `RSS / sigma^2`. Only selected SNPs
//! count toward `q`; the intercept and forced covariates are free.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::special::{ln_binomial, ln_factorial};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CriterionKind {
    Bic,
    Mbic,
    Mbic2,
    Ebic,
}

impl fmt::Display for CriterionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CriterionKind::Bic => "bic",
            CriterionKind::Mbic => "mbic",
            CriterionKind::Mbic2 => "mbic2",
            CriterionKind::Ebic => "ebic",
        })
    }
}

impl FromStr for CriterionKind {
    type Err = CriterionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "bic" => Ok(CriterionKind::Bic),
            "mbic" => Ok(CriterionKind::Mbic),
            "mbic2" => Ok(CriterionKind::Mbic2),
            "ebic" => Ok(CriterionKind::Ebic),
            other => Err(CriterionError::InvalidConfig(format!(
                "unknown criterion '{other}'"
            ))),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CriterionError {
    #[error("RSS is {rss}; the criterion with unknown sigma needs RSS > 0")]
    PerfectFit { rss: f64 },
    #[error("model size {q} exceeds the number of markers {p}")]
    Domain { q: usize, p: u64 },
    #[error("invalid criterion configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T, E = CriterionError> = std::result::Result<T, E>;

/// `-2 ln 4`, the usual mBIC constant (prior expectation of 4 causal SNPs
/// among the markers).
pub const DEFAULT_D: f64 = -2.772_588_722_239_781;

/// EBIC parameter used when none is given.
pub const DEFAULT_KAPPA: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriterionConfig {
    pub kind: CriterionKind,
    /// Sample size.
    pub n: usize,
    /// Number of (effective) markers in the penalty.
    pub p_effective: u64,
    #[serde(default = "default_d")]
    pub d: f64,
    #[serde(default = "default_kappa")]
    pub kappa: f64,
    /// Known noise standard deviation.
    #[serde(default)]
    pub sigma: Option<f64>,
}

fn default_d() -> f64 {
    DEFAULT_D
}

fn default_kappa() -> f64 {
    DEFAULT_KAPPA
}

impl CriterionConfig {
    pub fn new(kind: CriterionKind, n: usize, p_effective: u64) -> Self {
        Self {
            kind,
            n,
            p_effective,
            d: DEFAULT_D,
            kappa: DEFAULT_KAPPA,
            sigma: None,
        }
    }

    pub fn with_d(mut self, d: f64) -> Self {
        self.d = d;
        self
    }

    pub fn with_kappa(mut self, kappa: f64) -> Self {
        self.kappa = kappa;
        self
    }

    pub fn with_sigma(mut self, sigma: Option<f64>) -> Self {
        self.sigma = sigma;
        self
    }

    /// Same constants under a different criterion.
    pub fn with_kind(mut self, kind: CriterionKind) -> Self {
        self.kind = kind;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(CriterionError::InvalidConfig("n must be at least 2".into()));
        }
        if self.p_effective < 1 {
            return Err(CriterionError::InvalidConfig(
                "p_effective must be at least 1".into(),
            ));
        }
        if !self.d.is_finite() {
            return Err(CriterionError::InvalidConfig("d must be finite".into()));
        }
        if !(0.0..=1.0).contains(&self.kappa) {
            return Err(CriterionError::InvalidConfig(format!(
                "kappa {} is outside [0, 1]",
                self.kappa
            )));
        }
        if let Some(s) = self.sigma {
            if !(s > 0.0 && s.is_finite()) {
                return Err(CriterionError::InvalidConfig(format!(
                    "sigma {s} must be positive"
                )));
            }
        }
        Ok(())
    }

    /// mBIC penalty per selected SNP, `ln n + 2 ln p + d`.
    pub fn mbic_unit_penalty(&self) -> f64 {
        (self.n as f64).ln() + 2.0 * (self.p_effective as f64).ln() + self.d
    }

    /// Penalty for `q` selected SNPs.
    pub fn penalty(&self, q: usize) -> Result<f64> {
        self.validate()?;
        if q as u64 > self.p_effective {
            return Err(CriterionError::Domain {
                q,
                p: self.p_effective,
            });
        }
        let qf = q as f64;
        let ln_n = (self.n as f64).ln();
        Ok(match self.kind {
            CriterionKind::Bic => qf * ln_n,
            CriterionKind::Mbic => qf * self.mbic_unit_penalty(),
            CriterionKind::Mbic2 => qf * self.mbic_unit_penalty() - 2.0 * ln_factorial(q as u64),
            CriterionKind::Ebic => {
                qf * ln_n + 2.0 * (1.0 - self.kappa) * ln_binomial(self.p_effective, q as u64)
            }
        })
    }

    /// Goodness-of-fit term.
    pub fn base_term(&self, rss: f64) -> Result<f64> {
        match self.sigma {
            Some(s) => {
                if !(rss >= 0.0) {
                    return Err(CriterionError::PerfectFit { rss });
                }
                Ok(rss / (s * s))
            }
            None => {
                if !(rss > 0.0) {
                    return Err(CriterionError::PerfectFit { rss });
                }
                Ok(self.n as f64 * rss.ln())
            }
        }
    }

    /// Criterion value of a model with `q` selected SNPs and residual sum of
    /// squares `rss`.
    pub fn evaluate(&self, rss: f64, q: usize) -> Result<f64> {
        let penalty = self.penalty(q)?;
        Ok(self.base_term(rss)? + penalty)
    }
}

/// Free-function form of [`CriterionConfig::evaluate`].
pub fn evaluate(config: &CriterionConfig, rss: f64, q: usize) -> Result<f64> {
    config.evaluate(rss, q)
}
