use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Deserialize;
use thiserror::Error;

use crate::interpreter::{Budgets, SeedSelection};
use crate::oracles::{EndpointConfig, HttpChatOracle, Oracle, OracleError, OracleKind, OracleSuite, RetryConfig};

#[derive(Debug, Clone, Default, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CacheConfig {
    /// Response cache directory; caching is off when absent.
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub budgets: Budgets,
    #[serde(default)]
    pub seed_selection: SeedSelection,
    #[serde(default)]
    pub cache: CacheConfig,
    /// Default endpoint for every oracle role.
    pub endpoint: Option<EndpointConfig>,
    /// Per-role overrides keyed by oracle name (`reasoner`, `clipRetriever`, ...).
    #[serde(default)]
    pub endpoints: BTreeMap<String, EndpointConfig>,
    #[serde(default)]
    pub retry: RetryConfig,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: Config = toml::from_str(text).map_err(|e| ConfigError(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.budgets.validate().map_err(ConfigError)?;
        for key in self.endpoints.keys() {
            if !OracleKind::ALL.iter().any(|k| k.as_str() == key) {
                return Err(ConfigError(format!("endpoints.{key}: unknown oracle")));
            }
        }
        Ok(())
    }

    /// HTTP oracles for every role; each role needs `endpoint` or an override.
    pub fn http_suite(&self) -> Result<OracleSuite, OracleError> {
        let make = |kind: OracleKind| -> Result<Arc<dyn Oracle>, OracleError> {
            let ep = self
                .endpoints
                .get(kind.as_str())
                .or(self.endpoint.as_ref())
                .ok_or_else(|| OracleError::Config(format!("no endpoint configured for {kind}")))?;
            Ok(Arc::new(HttpChatOracle::new(ep.clone(), self.retry)?))
        };
        Ok(OracleSuite {
            captioner: make(OracleKind::Captioner)?,
            graph_generator: make(OracleKind::GraphGenerator)?,
            plan_generator: make(OracleKind::PlanGenerator)?,
            reasoner: make(OracleKind::Reasoner)?,
            simple_query: make(OracleKind::SimpleQuery)?,
            new_info: make(OracleKind::NewInfo)?,
            clip_retriever: make(OracleKind::ClipRetriever)?,
            multimodal_answerer: make(OracleKind::MultimodalAnswerer)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("config: {0}")]
pub struct ConfigError(pub String);

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = Config::from_toml("").unwrap();
        assert_eq!(c.budgets, Budgets::default());
        assert_eq!(c.budgets.graph_retries, 3);
        assert_eq!(c.budgets.answer_retries, 3);
        assert_eq!(c.budgets.multimodal_hops, 1);
        assert_eq!(c.budgets.call_ceiling, 50);
        assert!(c.cache.dir.is_none());
    }

    #[test]
    fn full_file() {
        let c = Config::from_toml(
            r#"
seed_selection = "parents"
[budgets]
graph_retries = 2
call_ceiling = 80
[cache]
dir = "cache"
[endpoint]
url = "http://localhost:8000/v1/chat/completions"
model = "m"
[endpoints.reasoner]
url = "http://localhost:8001/v1/chat/completions"
model = "big"
auth_env = "REASONER_KEY"
[retry]
max = 1
"#,
        )
        .unwrap();
        assert_eq!(c.budgets.graph_retries, 2);
        assert_eq!(c.budgets.answer_retries, 3);
        assert_eq!(c.seed_selection, SeedSelection::Parents);
        assert_eq!(c.endpoints["reasoner"].model, "big");
        assert_eq!(c.retry.max, 1);
        assert_eq!(c.retry.base_ms, 500);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(Config::from_toml("[budgets]\ncall_ceiling = 0").is_err());
        assert!(Config::from_toml("[budgets]\nretries = 2").is_err());
        assert!(Config::from_toml("[endpoints.oracle9]\nurl='u'\nmodel='m'").is_err());
    }

    #[test]
    fn http_suite_needs_endpoint() {
        assert!(matches!(Config::default().http_suite(), Err(OracleError::Config(_))));
    }
}
