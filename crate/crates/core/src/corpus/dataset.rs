//! Graph-summary pair records stored one JSON object per line.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::prompts::Domain;
use crate::error::{Error, Result};
use crate::tag::{rwr_sample, EgoSubgraph, SamplerConfig, TextAttributedGraph};

/// A sampled subgraph, referenced by source graph, seed node and sampler
/// seed, together with its summary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSummaryPair {
    pub source_graph: String,
    pub seed: usize,
    pub sampler_seed: u64,
    pub domain: Domain,
    pub summary: String,
    pub token_count: usize,
}

/// Whitespace token count.
pub fn token_count(text: &str) -> usize {
    text.split_whitespace().count()
}

impl GraphSummaryPair {
    pub fn new(source_graph: &str, seed: usize, sampler_seed: u64, domain: Domain, summary: String) -> Result<Self> {
        let pair = Self {
            source_graph: source_graph.into(),
            seed,
            sampler_seed,
            domain,
            token_count: token_count(&summary),
            summary,
        };
        pair.validate()?;
        Ok(pair)
    }

    pub fn validate(&self) -> Result<()> {
        if self.summary.trim().is_empty() {
            return Err(Error::Validation(format!("empty summary for seed {}", self.seed)));
        }
        if self.token_count == 0 {
            return Err(Error::Validation(format!("zero token count for seed {}", self.seed)));
        }
        Ok(())
    }

    /// Re-samples the referenced subgraph. The sampler's seed must match.
    pub fn subgraph(&self, graph: &TextAttributedGraph, sampler: &SamplerConfig) -> Result<EgoSubgraph> {
        if sampler.rng_seed != self.sampler_seed {
            return Err(Error::Validation(format!(
                "pair for seed {} was sampled with rng seed {}, not {}",
                self.seed, self.sampler_seed, sampler.rng_seed
            )));
        }
        rwr_sample(graph, self.seed, sampler)
    }
}

/// Reads and validates every record. An empty file yields no records.
pub fn read_pairs(path: impl AsRef<Path>) -> Result<Vec<GraphSummaryPair>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let perr = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            msg,
        };
        let pair: GraphSummaryPair = serde_json::from_str(&line).map_err(|e| perr(e.to_string()))?;
        pair.validate().map_err(|e| perr(e.to_string()))?;
        out.push(pair);
    }
    Ok(out)
}

fn encode(pair: &GraphSummaryPair) -> Result<String> {
    pair.validate()?;
    let mut line = serde_json::to_string(pair)?;
    line.push('\n');
    Ok(line)
}

/// Writes `pairs`, replacing any existing file.
pub fn write_pairs(path: impl AsRef<Path>, pairs: &[GraphSummaryPair]) -> Result<()> {
    let path = path.as_ref();
    let mut buf = String::new();
    for p in pairs {
        buf.push_str(&encode(p)?);
    }
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Appends records, creating the file if needed.
pub struct PairSink {
    file: File,
    path: std::path::PathBuf,
}

impl PairSink {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        Ok(Self { file, path })
    }

    pub fn append(&mut self, pair: &GraphSummaryPair) -> Result<()> {
        let line = encode(pair)?;
        self.file
            .write_all(line.as_bytes())
            .and_then(|_| self.file.flush())
            .map_err(|e| Error::io(&self.path, e))
    }
}
