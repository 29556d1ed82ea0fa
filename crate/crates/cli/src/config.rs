//! Run configuration: one TOML file plus dotted `--key value` overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use graphclip::adapt::{EvalConfig, LinkEvalConfig, PromptTuneConfig};
use graphclip::corpus::{GenerateConfig, LlmClientConfig};
use graphclip::gradcheck::GradCheckConfig;
use graphclip::model::GraphEncoderConfig;
use graphclip::pretrain::PretrainConfig;
use graphclip::synthetic::SyntheticConfig;
use graphclip::tag::SamplerConfig;
use graphclip::text::TextEncoderSpec;
use graphclip::theory::TheoremConfig;

use crate::error::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// When set, replaces the pretraining, theory and gradient-check seeds.
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub data: DataSection,
    pub text: TextEncoderSpec,
    pub sampler: SamplerConfig,
    pub encoder: GraphEncoderConfig,
    pub pretrain: PretrainConfig,
    pub sample: SampleSection,
    pub corpus: CorpusSection,
    pub eval: NodeEvalSection,
    pub link: LinkEvalConfig,
    pub tune: TuneSection,
    pub theory: TheorySection,
    pub gradcheck: GradCheckConfig,
    pub synthetic: SyntheticSection,
}

/// Input files.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    /// Source graph for sampling, corpus generation and pretraining.
    pub graph: Option<PathBuf>,
    /// Target graph for evaluation and prompt tuning.
    pub target: Option<PathBuf>,
    /// Label prompt asset for the target graph.
    pub labels: Option<PathBuf>,
    /// Graph-summary pairs for pretraining.
    pub pairs: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    /// Name recorded in evaluation reports.
    pub dataset: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SampleSection {
    /// Seed nodes; every node when unset.
    pub seeds: Option<Vec<usize>>,
    pub pe_dim: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClientKind {
    Mock,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorpusSection {
    pub client: ClientKind,
    pub generate: GenerateConfig,
    pub llm: LlmClientConfig,
    /// Mock client only: seed texts containing these strings fail permanently.
    pub mock_fail_on: Vec<String>,
}

impl Default for CorpusSection {
    fn default() -> Self {
        Self {
            client: ClientKind::Mock,
            generate: GenerateConfig::default(),
            llm: LlmClientConfig::default(),
            mock_fail_on: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NodeEvalSection {
    pub test_fraction: f64,
    pub seeds: Vec<u64>,
    /// 0 for zero-shot; otherwise few-shot prompt tuning per seed.
    pub shots: usize,
}

impl Default for NodeEvalSection {
    fn default() -> Self {
        let e = EvalConfig::default();
        Self {
            test_fraction: e.test_fraction,
            seeds: e.seeds,
            shots: 0,
        }
    }
}

impl NodeEvalSection {
    pub fn eval_config(&self) -> EvalConfig {
        EvalConfig {
            test_fraction: self.test_fraction,
            seeds: self.seeds.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TuneSection {
    pub shots: usize,
    pub seeds: Vec<u64>,
    pub prompt: PromptTuneConfig,
}

impl Default for TuneSection {
    fn default() -> Self {
        Self {
            shots: 5,
            seeds: (0..5).collect(),
            prompt: PromptTuneConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TheorySection {
    pub zeta: f64,
    pub n_samples: usize,
    pub seed: u64,
    pub theorem: TheoremConfig,
}

impl Default for TheorySection {
    fn default() -> Self {
        Self {
            zeta: 0.04,
            n_samples: 1_000_000,
            seed: 0,
            theorem: TheoremConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSection {
    pub source: SyntheticConfig,
    pub target: SyntheticConfig,
    /// Pairs written for the source graph.
    pub pairs: usize,
}

impl Default for SyntheticSection {
    fn default() -> Self {
        Self {
            source: SyntheticConfig {
                seed: 1,
                ..Default::default()
            },
            target: SyntheticConfig {
                seed: 2,
                ..Default::default()
            },
            pairs: 200,
        }
    }
}

impl RunConfig {
    /// Applies the global seed and the encoder preset.
    pub fn resolve(mut self) -> Self {
        if let Some(s) = self.seed {
            self.pretrain.seed = s;
            self.theory.seed = s;
            self.theory.theorem.seed = s;
            self.gradcheck.seed = s;
        }
        if let Some(p) = self.encoder.preset {
            let (layers, hidden) = p.dims();
            self.encoder.layers = layers;
            self.encoder.hidden = hidden;
        }
        self
    }
}

/// Splits `--key value` / `--key=value` pairs.
pub fn parse_overrides(args: &[String]) -> Result<Vec<(String, String)>, CliError> {
    let mut out = Vec::new();
    let mut it = args.iter();
    while let Some(a) = it.next() {
        let key = a
            .strip_prefix("--")
            .ok_or_else(|| CliError::Usage(format!("expected `--key value`, found `{a}`")))?;
        if let Some((k, v)) = key.split_once('=') {
            out.push((k.to_string(), v.to_string()));
        } else {
            let v = it
                .next()
                .ok_or_else(|| CliError::Usage(format!("override `--{key}` lacks a value")))?;
            out.push((key.to_string(), v.clone()));
        }
    }
    Ok(out)
}

fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn set_path(root: &mut toml::Table, path: &[&str], value: toml::Value) -> Result<(), CliError> {
    let (last, parents) = path.split_last().expect("nonempty path");
    let mut table = root;
    for p in parents {
        let entry = table
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Usage(format!("`{p}` in `{}` is not a section", path.join("."))))?;
    }
    table.insert(last.to_string(), value);
    Ok(())
}

const TOP_LEVEL: &[&str] = &[
    "seed", "out_dir", "data", "text", "sampler", "encoder", "pretrain", "sample", "corpus", "eval", "link", "tune",
    "theory", "gradcheck", "synthetic",
];

/// Loads `path` (defaults when `None`), applies overrides, rejects unknown
/// keys. An undotted key that is not a top-level field is looked up in
/// `section`, so `theory --zeta 0.1` sets `theory.zeta`.
pub fn load(path: Option<&Path>, overrides: &[(String, String)], section: &str) -> Result<RunConfig, CliError> {
    let mut table: toml::Table = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", p.display())))?;
            toml::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {}", p.display(), one_line(&e))))?
        }
        None => toml::Table::new(),
    };
    for (key, raw) in overrides {
        let mut parts: Vec<&str> = key.split('.').collect();
        if parts.iter().any(|p| p.is_empty()) {
            return Err(CliError::Usage(format!("malformed override key `{key}`")));
        }
        if parts.len() == 1 && !TOP_LEVEL.contains(&parts[0]) {
            parts.insert(0, section);
        }
        set_path(&mut table, &parts, parse_value(raw))?;
    }
    let cfg: RunConfig = toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| CliError::Usage(format!("config: {}", one_line(&e))))?;
    Ok(cfg.resolve())
}

fn one_line(e: &impl std::fmt::Display) -> String {
    e.to_string().split_whitespace().collect::<Vec<_>>().join(" ")
}
