//! JSON network description.
//!
//! ```json
//! {
//!   "buffers": [{"name": "b1", "lambda": 1.3, "holding_cost": 1.0,
//!                "interarrival": {"family": "exponential", "eps1": 0.5}}],
//!   "servers": ["s1"],
//!   "activities": [{"server": "s1", "buffer": "b1", "mean_service": 1.0,
//!                   "service": {"family": "gamma", "params": {"shape": 4}},
//!                   "routing": [{"to": "b2", "prob": 0.5}]}]
//! }
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{DistributionError, DistributionFile, DistributionSpec, NetworkSpec, StructuralError};

#[derive(Debug, Error)]
pub enum NetworkFileError {
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parsing network JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unknown {kind} `{name}`")]
    UnknownName { kind: &'static str, name: String },
    #[error("duplicate {kind} name `{name}`")]
    DuplicateName { kind: &'static str, name: String },
    #[error("{context}: {source}")]
    Distribution {
        context: String,
        #[source]
        source: DistributionError,
    },
    #[error(transparent)]
    Structural(#[from] StructuralError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BufferFile {
    pub name: String,
    pub lambda: f64,
    pub holding_cost: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interarrival: Option<DistributionFile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteFile {
    pub to: String,
    pub prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivityFile {
    pub server: String,
    pub buffer: String,
    pub mean_service: f64,
    pub service: DistributionFile,
    #[serde(default)]
    pub routing: Vec<RouteFile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkFile {
    pub buffers: Vec<BufferFile>,
    pub servers: Vec<String>,
    pub activities: Vec<ActivityFile>,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub discount_rate: f64,
}

fn is_zero(x: &f64) -> bool {
    *x == 0.0
}

fn lookup(names: &[String], kind: &'static str, name: &str) -> Result<usize, NetworkFileError> {
    names
        .iter()
        .position(|n| n == name)
        .ok_or_else(|| NetworkFileError::UnknownName { kind, name: name.to_string() })
}

fn check_unique(names: &[String], kind: &'static str) -> Result<(), NetworkFileError> {
    for (i, name) in names.iter().enumerate() {
        if names[..i].contains(name) {
            return Err(NetworkFileError::DuplicateName { kind, name: name.clone() });
        }
    }
    Ok(())
}

impl NetworkFile {
    pub fn from_json(text: &str) -> Result<Self, NetworkFileError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_spec(&self) -> Result<NetworkSpec, NetworkFileError> {
        let buffer_names: Vec<String> = self.buffers.iter().map(|b| b.name.clone()).collect();
        check_unique(&buffer_names, "buffer")?;
        check_unique(&self.servers, "server")?;
        let m = buffer_names.len();

        let interarrival_dist = self
            .buffers
            .iter()
            .map(|b| match (&b.interarrival, b.lambda > 0.0) {
                (Some(d), true) => DistributionSpec::try_from(d)
                    .map(Some)
                    .map_err(|source| NetworkFileError::Distribution {
                        context: format!("buffer `{}` interarrival", b.name),
                        source,
                    }),
                _ => Ok(None),
            })
            .collect::<Result<Vec<_>, _>>()?;

        let mut activity_server = Vec::new();
        let mut activity_buffer = Vec::new();
        let mut routing = Vec::new();
        let mut mean_service = Vec::new();
        let mut service_dist = Vec::new();
        for (j, a) in self.activities.iter().enumerate() {
            activity_server.push(lookup(&self.servers, "server", &a.server)?);
            activity_buffer.push(lookup(&buffer_names, "buffer", &a.buffer)?);
            let mut row = vec![0.0; m];
            for route in &a.routing {
                row[lookup(&buffer_names, "buffer", &route.to)?] += route.prob;
            }
            routing.push(row);
            mean_service.push(a.mean_service);
            service_dist.push(DistributionSpec::try_from(&a.service).map_err(|source| {
                NetworkFileError::Distribution { context: format!("activity {j} service"), source }
            })?);
        }

        Ok(NetworkSpec {
            buffer_names,
            server_names: self.servers.clone(),
            activity_server,
            activity_buffer,
            routing,
            arrival_rate: self.buffers.iter().map(|b| b.lambda).collect(),
            mean_service,
            holding_cost: self.buffers.iter().map(|b| b.holding_cost).collect(),
            discount_rate: self.discount_rate,
            interarrival_dist,
            service_dist,
        })
    }

    pub fn from_spec(spec: &NetworkSpec) -> Self {
        let buffers = (0..spec.num_buffers())
            .map(|k| BufferFile {
                name: spec.buffer_names[k].clone(),
                lambda: spec.arrival_rate[k],
                holding_cost: spec.holding_cost[k],
                interarrival: spec.interarrival_dist[k].as_ref().map(DistributionFile::from),
            })
            .collect();
        let activities = (0..spec.num_activities())
            .map(|j| ActivityFile {
                server: spec.server_names[spec.activity_server[j]].clone(),
                buffer: spec.buffer_names[spec.activity_buffer[j]].clone(),
                mean_service: spec.mean_service[j],
                service: DistributionFile::from(&spec.service_dist[j]),
                routing: spec.routing[j]
                    .iter()
                    .enumerate()
                    .filter(|(_, &p)| p > 0.0)
                    .map(|(l, &p)| RouteFile { to: spec.buffer_names[l].clone(), prob: p })
                    .collect(),
            })
            .collect();
        NetworkFile {
            buffers,
            servers: spec.server_names.clone(),
            activities,
            discount_rate: spec.discount_rate,
        }
    }
}

/// Parses and validates a network document.
pub fn parse_network(text: &str) -> Result<NetworkSpec, NetworkFileError> {
    let spec = NetworkFile::from_json(text)?.to_spec()?;
    spec.validate()?;
    Ok(spec)
}

pub fn load_network(path: &Path) -> Result<NetworkSpec, NetworkFileError> {
    let text = std::fs::read_to_string(path).map_err(|source| NetworkFileError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_network(&text)
}

impl NetworkSpec {
    pub fn from_json(text: &str) -> Result<Self, NetworkFileError> {
        parse_network(text)
    }

    pub fn load(path: &Path) -> Result<Self, NetworkFileError> {
        load_network(path)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&NetworkFile::from_spec(self)).expect("network serializes")
    }
}
