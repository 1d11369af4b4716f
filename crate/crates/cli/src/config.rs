//! Provider configuration files and gateway construction.
//!
//! ```toml
//! [providers.open-router]
//! endpoint = "https://openrouter.ai/api/v1"
//! models = ["mistralai/mistral-small-24b-instruct-2501"]
//! max_concurrent_requests = 4
//! timeout_ms = 120000
//! max_retries = 4
//! base_backoff_ms = 500
//! ```
//!
//! The API key is read from `ALEXANDRIA_<PROVIDER>_API_KEY`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use alexandria_core::llm_gateway::{api_key_env_var, OpenAiCompatible, RetryPolicy};
use alexandria_core::{Gateway, ProviderConfig};
use anyhow::{bail, Context, Result};
use clap::Args;
use serde::{Deserialize, Serialize};

pub const MOCK_PROVIDER: &str = "mock";
pub const MOCK_EMBEDDER: &str = "mock-bow";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderSection {
    pub endpoint: String,
    /// Model ids this provider may serve. Empty means unrestricted.
    #[serde(default)]
    pub models: Vec<String>,
    #[serde(default = "default_concurrency")]
    pub max_concurrent_requests: usize,
    #[serde(default = "default_timeout")]
    pub timeout_ms: u64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default = "default_backoff")]
    pub base_backoff_ms: u64,
}

fn default_concurrency() -> usize {
    4
}
fn default_timeout() -> u64 {
    120_000
}
fn default_retries() -> u32 {
    4
}
fn default_backoff() -> u64 {
    500
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default)]
    pub providers: BTreeMap<String, ProviderSection>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<ConfigFile> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

/// Provider selection flags shared by every subcommand that calls a model.
#[derive(Debug, Clone, PartialEq, Eq, Args, Serialize, Deserialize)]
pub struct ProviderArgs {
    /// `mock`, or the name of a `[providers.<name>]` config section.
    #[arg(long, default_value = MOCK_PROVIDER)]
    pub provider: String,
    /// Provider configuration file (TOML).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Write a JSONL audit log of every request and response.
    #[arg(long)]
    pub audit: Option<PathBuf>,
}

impl Default for ProviderArgs {
    fn default() -> Self {
        Self {
            provider: MOCK_PROVIDER.into(),
            config: None,
            audit: None,
        }
    }
}

/// Resolves the provider, checks model ids and credentials, and builds the
/// gateway. Never contacts the provider.
pub fn build_gateway(args: &ProviderArgs, models: &[&str]) -> Result<Gateway> {
    let file = match &args.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    let gateway = if args.provider == MOCK_PROVIDER {
        Gateway::mock()
    } else {
        let Some(section) = file.providers.get(&args.provider) else {
            match &args.config {
                Some(p) => bail!(
                    "provider `{}` has no [providers.{}] section in {}",
                    args.provider,
                    args.provider,
                    p.display()
                ),
                None => bail!(
                    "provider `{}` needs --config with a [providers.{}] section",
                    args.provider,
                    args.provider
                ),
            }
        };
        if !section.models.is_empty() {
            for m in models {
                if !section.models.iter().any(|x| x == m) {
                    bail!("model `{m}` is not listed for provider `{}`", args.provider);
                }
            }
        }
        let config = ProviderConfig {
            endpoint_uri: section.endpoint.clone(),
            api_key_env_var_name: api_key_env_var(&args.provider),
            max_concurrent_requests: section.max_concurrent_requests,
            retry_policy: RetryPolicy {
                max_retries: section.max_retries,
                base_backoff_ms: section.base_backoff_ms,
            },
            timeout_ms: section.timeout_ms,
        };
        let gw = Gateway::new(
            Arc::new(OpenAiCompatible::new(args.provider.clone())),
            config,
        );
        gw.check_credentials()?;
        gw
    };
    match &args.audit {
        Some(p) => gateway
            .with_audit_file(p)
            .with_context(|| format!("opening audit log {}", p.display())),
        None => Ok(gateway),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_parse_with_defaults() {
        let f: ConfigFile = toml::from_str("[providers.x]\nendpoint = \"http://h\"\n").unwrap();
        let s = &f.providers["x"];
        assert_eq!((s.max_concurrent_requests, s.max_retries), (4, 4));
        assert!(
            toml::from_str::<ConfigFile>("[providers.x]\nendpoint = \"h\"\nbogus = 1\n").is_err()
        );
    }
}
