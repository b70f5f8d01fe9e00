//! Service configuration: TOML file, environment overrides, defaults.

use serde::Deserialize;
use std::path::{Path, PathBuf};
use thiserror::Error;
use trustlayer_core::identity::Did;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config io: {0}")]
    Io(#[from] std::io::Error),
    #[error("config parse: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StoreBackend {
    Memory,
    File,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StoreConfig {
    pub backend: StoreBackend,
    pub path: Option<PathBuf>,
}

impl Default for StoreConfig {
    fn default() -> Self {
        StoreConfig {
            backend: StoreBackend::Memory,
            path: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IssuerMode {
    /// Issue an identity credential to any DID that presents a
    /// well-formed fingerprint. For closed test networks.
    AllowAny,
    /// Issue only to (fingerprint, did) pairs registered up front.
    Allowlist,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AllowlistEntry {
    /// Blake2b-256 digest of the onboarding document, lowercase hex.
    pub fingerprint: String,
    pub did: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IssuerConfig {
    pub mode: IssuerMode,
    pub allowlist: Vec<AllowlistEntry>,
}

impl Default for IssuerConfig {
    fn default() -> Self {
        IssuerConfig {
            mode: IssuerMode::AllowAny,
            allowlist: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ServiceConfig {
    pub listen: String,
    pub network_hrp: String,
    pub challenge_ttl_ms: i64,
    pub session_ttl_ms: i64,
    /// Presentation lifetime clients are expected to use; served back
    /// over /stats so sources can discover it.
    pub vp_ttl_ms: i64,
    /// DIDs trusted as credential issuers in addition to the built-in
    /// issuer this service runs itself.
    pub trusted_issuers: Vec<String>,
    pub ledger_log: Option<PathBuf>,
    pub store: StoreConfig,
    pub schema_path: Option<PathBuf>,
    pub issuer: IssuerConfig,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            listen: "127.0.0.1:8080".to_string(),
            network_hrp: "tst".to_string(),
            challenge_ttl_ms: trustlayer_core::pipeline::DEFAULT_CHALLENGE_TTL_MS,
            session_ttl_ms: trustlayer_core::pipeline::DEFAULT_SESSION_TTL_MS,
            vp_ttl_ms: trustlayer_core::pipeline::DEFAULT_VP_TTL_MS,
            trusted_issuers: Vec::new(),
            ledger_log: None,
            store: StoreConfig::default(),
            schema_path: None,
            issuer: IssuerConfig::default(),
        }
    }
}

impl ServiceConfig {
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let raw = std::fs::read_to_string(path)?;
        let config: ServiceConfig = toml::from_str(&raw)?;
        Ok(config)
    }

    /// Applies `TRUSTD_*` environment variables over the loaded values.
    pub fn apply_env(&mut self) -> Result<(), ConfigError> {
        let var = |name: &str| std::env::var(name).ok().filter(|v| !v.is_empty());
        if let Some(v) = var("TRUSTD_LISTEN") {
            self.listen = v;
        }
        if let Some(v) = var("TRUSTD_NETWORK_HRP") {
            self.network_hrp = v;
        }
        let parse_ms = |name: &str, v: String| {
            v.parse::<i64>()
                .map_err(|_| invalid(format!("{name} must be an integer millisecond count")))
        };
        if let Some(v) = var("TRUSTD_CHALLENGE_TTL_MS") {
            self.challenge_ttl_ms = parse_ms("TRUSTD_CHALLENGE_TTL_MS", v)?;
        }
        if let Some(v) = var("TRUSTD_SESSION_TTL_MS") {
            self.session_ttl_ms = parse_ms("TRUSTD_SESSION_TTL_MS", v)?;
        }
        if let Some(v) = var("TRUSTD_VP_TTL_MS") {
            self.vp_ttl_ms = parse_ms("TRUSTD_VP_TTL_MS", v)?;
        }
        if let Some(v) = var("TRUSTD_LEDGER_LOG") {
            self.ledger_log = Some(PathBuf::from(v));
        }
        if let Some(v) = var("TRUSTD_STORE_BACKEND") {
            self.store.backend = match v.as_str() {
                "memory" => StoreBackend::Memory,
                "file" => StoreBackend::File,
                other => return Err(invalid(format!("unknown store backend '{other}'"))),
            };
        }
        if let Some(v) = var("TRUSTD_STORE_PATH") {
            self.store.path = Some(PathBuf::from(v));
        }
        if let Some(v) = var("TRUSTD_SCHEMA_PATH") {
            self.schema_path = Some(PathBuf::from(v));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.listen.is_empty() {
            return Err(invalid("listen address must not be empty"));
        }
        if self.network_hrp.is_empty()
            || !self
                .network_hrp
                .bytes()
                .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit())
        {
            return Err(invalid("network_hrp must be non-empty lowercase ascii"));
        }
        for (name, value) in [
            ("challenge_ttl_ms", self.challenge_ttl_ms),
            ("session_ttl_ms", self.session_ttl_ms),
            ("vp_ttl_ms", self.vp_ttl_ms),
        ] {
            if value <= 0 {
                return Err(invalid(format!("{name} must be positive")));
            }
        }
        for did in &self.trusted_issuers {
            did.parse::<Did>()
                .map_err(|_| invalid(format!("trusted issuer '{did}' is not a valid did")))?;
        }
        if self.store.backend == StoreBackend::File && self.store.path.is_none() {
            return Err(invalid("file store backend requires store.path"));
        }
        if self.issuer.mode == IssuerMode::Allowlist && self.issuer.allowlist.is_empty() {
            return Err(invalid("allowlist issuer mode requires at least one entry"));
        }
        for entry in &self.issuer.allowlist {
            if entry.fingerprint.len() != 64
                || !entry.fingerprint.bytes().all(|b| b.is_ascii_hexdigit())
                || entry.fingerprint.bytes().any(|b| b.is_ascii_uppercase())
            {
                return Err(invalid(format!(
                    "allowlist fingerprint '{}' must be 64 lowercase hex characters",
                    entry.fingerprint
                )));
            }
            entry.did.parse::<Did>().map_err(|_| {
                invalid(format!("allowlist did '{}' is not a valid did", entry.did))
            })?;
        }
        Ok(())
    }
}
