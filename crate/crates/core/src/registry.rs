//! Name-keyed registries for the interchangeable pieces: encoders, probe
//! strategies and model adapters.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::eval::{ConstantAdapter, ModelAdapter, RandomAdapter};
use crate::http::{HttpAdapterConfig, HttpChatAdapter};
use crate::parser::{Encoder, HashEncoder};
use crate::probes::{
    ExternalFe, ExternalFeReasoning, FrameRelationProbe, InternalFe, InternalFeReasoning, ProbeStrategy, SameFe,
};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RegistryError {
    #[error("unknown {kind} '{name}' (known: {known})")]
    Unknown {
        kind: &'static str,
        name: String,
        known: String,
    },
    #[error("{kind} '{name}' is already registered")]
    Duplicate { kind: &'static str, name: String },
    #[error("cannot build {kind} '{name}': {message}")]
    Build {
        kind: &'static str,
        name: String,
        message: String,
    },
}

pub struct Registry<T: ?Sized> {
    kind: &'static str,
    entries: BTreeMap<String, Arc<T>>,
}

impl<T: ?Sized> Registry<T> {
    pub fn new(kind: &'static str) -> Self {
        Self {
            kind,
            entries: BTreeMap::new(),
        }
    }

    pub fn register(&mut self, name: &str, entry: Arc<T>) -> Result<(), RegistryError> {
        if self.entries.contains_key(name) {
            return Err(RegistryError::Duplicate {
                kind: self.kind,
                name: name.to_string(),
            });
        }
        self.entries.insert(name.to_string(), entry);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<Arc<T>, RegistryError> {
        self.entries.get(name).cloned().ok_or_else(|| RegistryError::Unknown {
            kind: self.kind,
            name: name.to_string(),
            known: self.names().join(", "),
        })
    }

    pub fn names(&self) -> Vec<&str> {
        self.entries.keys().map(String::as_str).collect()
    }
}

pub type EncoderFactory = dyn Fn(usize) -> Result<Box<dyn Encoder>, String> + Send + Sync;

/// Settings shared by every adapter factory. Each adapter reads the fields
/// it needs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AdapterSettings {
    pub model: String,
    pub base_url: Option<String>,
    pub token_env: Option<String>,
    pub rate_limit_per_minute: Option<u32>,
    pub max_concurrent: Option<usize>,
    pub max_retries: Option<u32>,
    pub backoff_base_ms: Option<u64>,
    /// Reply of the `constant` adapter.
    pub reply: Option<String>,
    pub seed: u64,
}

pub type AdapterFactory = dyn Fn(&AdapterSettings) -> Result<Box<dyn ModelAdapter>, String> + Send + Sync;

pub fn encoders() -> Registry<EncoderFactory> {
    let mut r: Registry<EncoderFactory> = Registry::new("encoder");
    r.register(
        "hash",
        Arc::new(|dim| {
            HashEncoder::new(dim)
                .map(|e| Box::new(e) as Box<dyn Encoder>)
                .map_err(|e| e.to_string())
        }),
    )
    .expect("fresh registry");
    r
}

pub fn build_encoder(name: &str, dim: usize) -> Result<Box<dyn Encoder>, RegistryError> {
    encoders().get(name)?(dim).map_err(|message| RegistryError::Build {
        kind: "encoder",
        name: name.to_string(),
        message,
    })
}

pub fn probe_strategies() -> Registry<dyn ProbeStrategy> {
    let mut r: Registry<dyn ProbeStrategy> = Registry::new("probe type");
    let all: [Arc<dyn ProbeStrategy>; 6] = [
        Arc::new(InternalFe),
        Arc::new(ExternalFe),
        Arc::new(SameFe),
        Arc::new(InternalFeReasoning),
        Arc::new(ExternalFeReasoning),
        Arc::new(FrameRelationProbe),
    ];
    for s in all {
        r.register(s.ptype().as_str(), s).expect("fresh registry");
    }
    r
}

pub fn adapters() -> Registry<AdapterFactory> {
    let mut r: Registry<AdapterFactory> = Registry::new("adapter");
    r.register(
        "constant",
        Arc::new(|s: &AdapterSettings| {
            Ok(Box::new(ConstantAdapter {
                reply: s.reply.clone().unwrap_or_else(|| "A".into()),
            }) as Box<dyn ModelAdapter>)
        }),
    )
    .expect("fresh registry");
    r.register(
        "random",
        Arc::new(|s: &AdapterSettings| Ok(Box::new(RandomAdapter { seed: s.seed }) as Box<dyn ModelAdapter>)),
    )
    .expect("fresh registry");
    r.register(
        "http",
        Arc::new(|s: &AdapterSettings| {
            let d = HttpAdapterConfig::default();
            let cfg = HttpAdapterConfig {
                base_url: s.base_url.clone().ok_or("http adapter needs --base-url")?,
                model: s.model.clone(),
                token_env: s.token_env.clone(),
                rate_limit_per_minute: s.rate_limit_per_minute,
                max_concurrent: s.max_concurrent.unwrap_or(d.max_concurrent),
                max_retries: s.max_retries.unwrap_or(d.max_retries),
                backoff_base_ms: s.backoff_base_ms.unwrap_or(d.backoff_base_ms),
                ..d
            };
            Ok(Box::new(HttpChatAdapter::new(cfg)?) as Box<dyn ModelAdapter>)
        }),
    )
    .expect("fresh registry");
    r
}

pub fn build_adapter(name: &str, settings: &AdapterSettings) -> Result<Box<dyn ModelAdapter>, RegistryError> {
    adapters().get(name)?(settings).map_err(|message| RegistryError::Build {
        kind: "adapter",
        name: name.to_string(),
        message,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::probes::ProbeType;

    #[test]
    fn defaults_are_registered() {
        assert_eq!(encoders().names(), vec!["hash"]);
        assert_eq!(adapters().names(), vec!["constant", "http", "random"]);
        let probes = probe_strategies();
        for t in ProbeType::ALL {
            assert_eq!(probes.get(t.as_str()).unwrap().ptype(), t);
        }
    }

    #[test]
    fn unknown_and_duplicate_names() {
        let err = build_encoder("bert", 8).err().unwrap();
        assert!(err.to_string().contains("known: hash"));
        let mut r = probe_strategies();
        assert!(matches!(
            r.register("FFR", Arc::new(FrameRelationProbe)),
            Err(RegistryError::Duplicate { .. })
        ));
    }

    #[test]
    fn factories_build() {
        assert_eq!(build_encoder("hash", 16).unwrap().dim(), 16);
        assert!(build_encoder("hash", 1).is_err());
        let a = build_adapter("constant", &AdapterSettings::default()).unwrap();
        assert_eq!(a.name(), "constant");
        assert!(build_adapter("http", &AdapterSettings::default()).is_err());
    }
}
