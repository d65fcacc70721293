//! Unit-mean distributions for interarrival and service increments.
//!
//! Every family is parameterised so that its mean is exactly one; the
//! network scales draws by `1/lambda_k` (interarrivals) or `m_j`
//! (services).

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma, LogNormal, Pareto, Uniform};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Moment exponent used when a distribution does not declare one.
pub const DEFAULT_EPS1: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DistributionError {
    #[error("unknown distribution family `{0}`")]
    UnknownFamily(String),
    #[error("family `{family}` requires parameter `{param}`")]
    MissingParam { family: &'static str, param: &'static str },
    #[error("family `{family}`: parameter `{param}` = {value} out of range ({range})")]
    BadParam {
        family: &'static str,
        param: &'static str,
        value: f64,
        range: &'static str,
    },
    #[error("moment exponent eps1 must be positive, got {0}")]
    BadEps1(f64),
}

/// Parametric family with mean one and strictly positive support.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Family {
    Exponential,
    /// Uniform on `[1 - half_width, 1 + half_width]`, `0 <= half_width < 1`.
    Uniform { half_width: f64 },
    Deterministic,
    /// Gamma with the given shape and scale `1/shape`.
    Gamma { shape: f64 },
    /// Lognormal with log-scale `sigma` and location `-sigma^2/2`.
    LogNormal { sigma: f64 },
    /// Pareto with tail index `alpha > 1` and scale `(alpha-1)/alpha`.
    Pareto { alpha: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistributionSpec {
    pub family: Family,
    /// Declared exponent: moments of order `2 + 2*eps1` are claimed finite.
    pub eps1: f64,
}

impl DistributionSpec {
    pub fn new(family: Family, eps1: f64) -> Result<Self, DistributionError> {
        let spec = Self { family, eps1 };
        spec.validate()?;
        Ok(spec)
    }

    pub fn exponential() -> Self {
        Self { family: Family::Exponential, eps1: DEFAULT_EPS1 }
    }

    pub fn deterministic() -> Self {
        Self { family: Family::Deterministic, eps1: DEFAULT_EPS1 }
    }

    pub fn gamma(shape: f64) -> Self {
        Self { family: Family::Gamma { shape }, eps1: DEFAULT_EPS1 }
    }

    pub fn pareto(alpha: f64, eps1: f64) -> Self {
        Self { family: Family::Pareto { alpha }, eps1 }
    }

    pub fn family_name(&self) -> &'static str {
        match self.family {
            Family::Exponential => "exponential",
            Family::Uniform { .. } => "uniform",
            Family::Deterministic => "deterministic",
            Family::Gamma { .. } => "gamma",
            Family::LogNormal { .. } => "lognormal",
            Family::Pareto { .. } => "pareto",
        }
    }

    pub fn validate(&self) -> Result<(), DistributionError> {
        if !(self.eps1 > 0.0) || !self.eps1.is_finite() {
            return Err(DistributionError::BadEps1(self.eps1));
        }
        let bad = |family, param, value, range| DistributionError::BadParam {
            family,
            param,
            value,
            range,
        };
        match self.family {
            Family::Exponential | Family::Deterministic => Ok(()),
            Family::Uniform { half_width } => {
                if (0.0..1.0).contains(&half_width) {
                    Ok(())
                } else {
                    Err(bad("uniform", "half_width", half_width, "[0, 1)"))
                }
            }
            Family::Gamma { shape } => {
                if shape > 0.0 && shape.is_finite() {
                    Ok(())
                } else {
                    Err(bad("gamma", "shape", shape, "(0, inf)"))
                }
            }
            Family::LogNormal { sigma } => {
                if sigma > 0.0 && sigma.is_finite() {
                    Ok(())
                } else {
                    Err(bad("lognormal", "sigma", sigma, "(0, inf)"))
                }
            }
            Family::Pareto { alpha } => {
                if alpha > 1.0 && alpha.is_finite() {
                    Ok(())
                } else {
                    Err(bad("pareto", "alpha", alpha, "(1, inf)"))
                }
            }
        }
    }

    pub fn mean(&self) -> f64 {
        1.0
    }

    /// Variance of the unit-mean variable. Infinite for Pareto with `alpha <= 2`.
    pub fn variance(&self) -> f64 {
        match self.family {
            Family::Exponential => 1.0,
            Family::Uniform { half_width } => half_width * half_width / 3.0,
            Family::Deterministic => 0.0,
            Family::Gamma { shape } => 1.0 / shape,
            Family::LogNormal { sigma } => (sigma * sigma).exp_m1(),
            Family::Pareto { alpha } => {
                if alpha > 2.0 {
                    1.0 / (alpha * (alpha - 2.0))
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    pub(crate) fn sampler(&self) -> Sampler {
        match self.family {
            Family::Exponential => Sampler::Exponential,
            Family::Deterministic => Sampler::Constant,
            Family::Uniform { half_width: 0.0 } => Sampler::Constant,
            Family::Uniform { half_width } => Sampler::Uniform(
                Uniform::new_inclusive(1.0 - half_width, 1.0 + half_width)
                    .expect("validated uniform bounds"),
            ),
            Family::Gamma { shape } => {
                Sampler::Gamma(Gamma::new(shape, 1.0 / shape).expect("validated gamma shape"))
            }
            Family::LogNormal { sigma } => Sampler::LogNormal(
                LogNormal::new(-0.5 * sigma * sigma, sigma).expect("validated lognormal sigma"),
            ),
            Family::Pareto { alpha } => Sampler::Pareto(
                Pareto::new((alpha - 1.0) / alpha, alpha).expect("validated pareto alpha"),
            ),
        }
    }
}

/// True iff `E|X|^(2+2*eps1)` is finite for the declared `eps1`.
pub fn check_moments(dist: &DistributionSpec) -> bool {
    if !(dist.eps1 > 0.0) || !dist.eps1.is_finite() {
        return false;
    }
    match dist.family {
        Family::Pareto { alpha } => alpha > 2.0 + 2.0 * dist.eps1,
        _ => true,
    }
}

#[derive(Debug, Clone)]
pub(crate) enum Sampler {
    Exponential,
    Constant,
    Uniform(Uniform<f64>),
    Gamma(Gamma<f64>),
    LogNormal(LogNormal<f64>),
    Pareto(Pareto<f64>),
}

impl Sampler {
    pub(crate) fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Sampler::Exponential => Exp1.sample(rng),
            Sampler::Constant => 1.0,
            Sampler::Uniform(d) => d.sample(rng),
            Sampler::Gamma(d) => d.sample(rng),
            Sampler::LogNormal(d) => d.sample(rng),
            Sampler::Pareto(d) => d.sample(rng),
        }
    }
}

/// On-disk form: `{family, params, eps1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionFile {
    pub family: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps1: Option<f64>,
}

impl TryFrom<&DistributionFile> for DistributionSpec {
    type Error = DistributionError;

    fn try_from(file: &DistributionFile) -> Result<Self, Self::Error> {
        let param = |family: &'static str, name: &'static str| {
            file.params
                .get(name)
                .copied()
                .ok_or(DistributionError::MissingParam { family, param: name })
        };
        let family = match file.family.to_ascii_lowercase().as_str() {
            "exponential" | "exp" => Family::Exponential,
            "deterministic" | "constant" => Family::Deterministic,
            "uniform" => Family::Uniform { half_width: param("uniform", "half_width")? },
            "gamma" => Family::Gamma { shape: param("gamma", "shape")? },
            "lognormal" => Family::LogNormal { sigma: param("lognormal", "sigma")? },
            "pareto" => Family::Pareto { alpha: param("pareto", "alpha")? },
            other => return Err(DistributionError::UnknownFamily(other.to_string())),
        };
        DistributionSpec::new(family, file.eps1.unwrap_or(DEFAULT_EPS1))
    }
}

impl From<&DistributionSpec> for DistributionFile {
    fn from(spec: &DistributionSpec) -> Self {
        let mut params = BTreeMap::new();
        match spec.family {
            Family::Uniform { half_width } => {
                params.insert("half_width".into(), half_width);
            }
            Family::Gamma { shape } => {
                params.insert("shape".into(), shape);
            }
            Family::LogNormal { sigma } => {
                params.insert("sigma".into(), sigma);
            }
            Family::Pareto { alpha } => {
                params.insert("alpha".into(), alpha);
            }
            Family::Exponential | Family::Deterministic => {}
        }
        DistributionFile {
            family: spec.family_name().into(),
            params,
            eps1: Some(spec.eps1),
        }
    }
}
