//! Chat-completion clients: an HTTP client for OpenAI-compatible services and
//! a deterministic offline mock.

use std::collections::BTreeSet;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::corpus::graphml::parse_graphml;
use crate::error::{Error, Result};

/// Produces a completion for one prompt.
pub trait LlmClient: Send + Sync {
    fn complete(&self, prompt: &str) -> Result<String>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LlmClientConfig {
    /// Full chat-completions URL.
    pub endpoint: String,
    pub model: String,
    pub max_tokens: usize,
    pub timeout_secs: u64,
    /// Extra attempts after the first failure.
    pub retries: usize,
    /// Maximum requests per second; `None` disables throttling.
    pub rate_limit: Option<f64>,
    /// Environment variable holding the bearer token.
    pub api_key_env: String,
}

impl Default for LlmClientConfig {
    fn default() -> Self {
        Self {
            endpoint: "http://localhost:8000/v1/chat/completions".into(),
            model: "Qwen2-72B-Instruct".into(),
            max_tokens: 500,
            timeout_secs: 120,
            retries: 2,
            rate_limit: None,
            api_key_env: "GRAPHCLIP_LLM_API_KEY".into(),
        }
    }
}

impl LlmClientConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_tokens == 0 {
            return Err(Error::Validation("llm.max_tokens must be positive".into()));
        }
        if let Some(r) = self.rate_limit {
            if !(r > 0.0 && r.is_finite()) {
                return Err(Error::Validation("llm.rate_limit must be positive".into()));
            }
        }
        Ok(())
    }
}

/// OpenAI-compatible chat-completions client.
pub struct HttpLlmClient {
    cfg: LlmClientConfig,
    token: Option<String>,
    client: reqwest::blocking::Client,
    last_request: Mutex<Option<Instant>>,
}

impl HttpLlmClient {
    /// Reads the bearer token from `cfg.api_key_env` if set.
    pub fn new(cfg: LlmClientConfig) -> Result<Self> {
        cfg.validate()?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(cfg.timeout_secs))
            .build()
            .map_err(|e| Error::Llm(e.to_string()))?;
        let token = std::env::var(&cfg.api_key_env).ok().filter(|t| !t.is_empty());
        Ok(Self {
            cfg,
            token,
            client,
            last_request: Mutex::new(None),
        })
    }

    fn throttle(&self) {
        let Some(rate) = self.cfg.rate_limit else { return };
        let gap = Duration::from_secs_f64(1.0 / rate);
        let mut last = self.last_request.lock().unwrap_or_else(|p| p.into_inner());
        if let Some(t) = *last {
            let elapsed = t.elapsed();
            if elapsed < gap {
                std::thread::sleep(gap - elapsed);
            }
        }
        *last = Some(Instant::now());
    }
}

impl LlmClient for HttpLlmClient {
    fn complete(&self, prompt: &str) -> Result<String> {
        self.throttle();
        let body = serde_json::json!({
            "model": self.cfg.model,
            "max_tokens": self.cfg.max_tokens,
            "messages": [{"role": "user", "content": prompt}],
        });
        let mut req = self.client.post(&self.cfg.endpoint).json(&body);
        if let Some(t) = &self.token {
            req = req.bearer_auth(t);
        }
        let resp = req
            .send()
            .and_then(|r| r.error_for_status())
            .map_err(|e| Error::Llm(e.to_string()))?;
        let value: serde_json::Value = resp.json().map_err(|e| Error::Llm(e.to_string()))?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| Error::Llm("response lacks choices[0].message.content".into()))
    }
}

/// Offline client. Echoes the seed node's attributes and its neighbors' first
/// attribute, parsed from the GraphML embedded in the prompt.
#[derive(Debug, Default)]
pub struct MockLlm {
    /// Calls whose seed node text contains any of these strings always fail.
    pub fail_if_contains: BTreeSet<String>,
    /// The first this-many calls fail regardless of prompt.
    pub transient_failures: usize,
    calls: AtomicUsize,
}

impl MockLlm {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn failing_on(mut self, marker: impl Into<String>) -> Self {
        self.fail_if_contains.insert(marker.into());
        self
    }

    pub fn with_transient_failures(mut self, n: usize) -> Self {
        self.transient_failures = n;
        self
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

fn seed_from_prompt(prompt: &str) -> Option<usize> {
    let start = prompt.find("`n")? + 2;
    let len = prompt[start..].find('\'')?;
    prompt[start..start + len].parse().ok()
}

impl LlmClient for MockLlm {
    fn complete(&self, prompt: &str) -> Result<String> {
        let call = self.calls.fetch_add(1, Ordering::SeqCst);
        if call < self.transient_failures {
            return Err(Error::Llm(format!("mock transient failure on call {call}")));
        }
        let start = prompt
            .find("<?xml")
            .ok_or_else(|| Error::Llm("prompt carries no GraphML document".into()))?;
        let doc = parse_graphml(&prompt[start..])?;
        let seed = seed_from_prompt(prompt).unwrap_or(0);
        if seed >= doc.num_nodes() {
            return Err(Error::Llm(format!("seed n{seed} not in document")));
        }
        let own: Vec<&str> = doc.attributes(seed).into_iter().map(|(_, v)| v).filter(|v| !v.is_empty()).collect();
        if let Some(m) = self.fail_if_contains.iter().find(|m| own.iter().any(|v| v.contains(m.as_str()))) {
            return Err(Error::Llm(format!("mock refuses seed text containing `{m}`")));
        }
        let skeleton = doc.skeleton();
        let neighbors: Vec<&str> = skeleton.adjacency()[seed]
            .iter()
            .map(|&j| doc.node_attrs[j][0].as_str())
            .filter(|v| !v.is_empty())
            .collect();
        let mut out = format!("Node n{seed}: {}.", own.join(". "));
        if !neighbors.is_empty() {
            out.push_str(&format!(" Neighbors: {}.", neighbors.join("; ")));
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::prompts::{render_summary_prompt, Domain};

    const DOC: &str = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<graphml>\n<key id=\"d0\" for=\"node\" attr.name=\"title\" attr.type=\"string\"/>\n<key id=\"d1\" for=\"edge\" attr.name=\"type\" attr.type=\"string\"/>\n<graph id=\"G\" edgedefault=\"undirected\">\n<node id=\"n0\"><data key=\"d0\">alpha</data></node>\n<node id=\"n1\"><data key=\"d0\">beta</data></node>\n<edge id=\"e0\" source=\"n0\" target=\"n1\"><data key=\"d1\">cited</data></edge>\n</graph>\n</graphml>\n";

    #[test]
    fn mock_echoes_seed_and_neighbors() {
        let prompt = render_summary_prompt(DOC, Domain::Academic, 0);
        let out = MockLlm::new().complete(&prompt).unwrap();
        assert_eq!(out, "Node n0: alpha. Neighbors: beta.");
    }

    #[test]
    fn mock_failure_injection() {
        let prompt = render_summary_prompt(DOC, Domain::Academic, 0);
        let m = MockLlm::new().with_transient_failures(1);
        assert!(m.complete(&prompt).is_err());
        assert!(m.complete(&prompt).is_ok());
        assert!(MockLlm::new().failing_on("alph").complete(&prompt).is_err());
        assert!(MockLlm::new().failing_on("beta").complete(&prompt).is_ok());
        assert_eq!(m.calls(), 2);
    }

    #[test]
    fn config_validation() {
        assert!(LlmClientConfig::default().validate().is_ok());
        let bad = LlmClientConfig {
            rate_limit: Some(0.0),
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
