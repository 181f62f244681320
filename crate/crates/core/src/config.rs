use serde::{Deserialize, Serialize};

use crate::baselines::CamConfig;
use crate::error::{Error, Result};
use crate::fragments::{MarginKind, MarginStrategy};
use crate::ot::{LogDomain, SolverConfig};
use crate::partial::{DustbinMass, DEFAULT_DUSTBIN_SCALE};
use crate::retrieval::{LossConfig, Method};

/// Everything needed to score a pair of fragment sets, with the defaults the
/// matcher was tuned with.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub lambda: f64,
    pub margin_phi: f64,
    pub tau: f64,
    pub iterations: usize,
    pub eps: f64,
    pub margins: MarginKind,
    pub method: Method,
    pub partial: bool,
    pub log_domain: LogDomain,
    pub margin_temperature: f64,
    pub cam: CamConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            lambda: SolverConfig::DEFAULT_LAMBDA,
            margin_phi: LossConfig::DEFAULT_MARGIN,
            tau: DEFAULT_DUSTBIN_SCALE,
            iterations: SolverConfig::DEFAULT_MAX_ITERATIONS,
            eps: SolverConfig::DEFAULT_CONVERGENCE_TOL,
            margins: MarginKind::Uni,
            method: Method::Omit,
            partial: true,
            log_domain: LogDomain::Auto,
            margin_temperature: MarginStrategy::DEFAULT_TEMPERATURE,
            cam: CamConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn solver(&self) -> SolverConfig {
        SolverConfig {
            lambda: self.lambda,
            max_iterations: self.iterations,
            convergence_tol: self.eps,
            log_domain: self.log_domain,
        }
    }

    pub fn margin_strategy(&self) -> MarginStrategy {
        MarginStrategy {
            kind: self.margins,
            temperature: self.margin_temperature,
        }
    }

    pub fn loss(&self) -> LossConfig {
        LossConfig {
            margin: self.margin_phi,
        }
    }

    pub fn dustbin(&self) -> DustbinMass {
        DustbinMass::Uniform
    }

    pub fn validate(&self) -> Result<()> {
        self.solver().validate()?;
        self.loss().validate()?;
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return Err(Error::invalid(format!("tau must be positive, got {}", self.tau)));
        }
        if !(self.margin_temperature.is_finite() && self.margin_temperature > 0.0) {
            return Err(Error::invalid("margin temperature must be positive"));
        }
        Ok(())
    }
}
