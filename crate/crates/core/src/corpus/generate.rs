//! Resumable generation of graph-summary pairs through an LLM client.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::dataset::{read_pairs, GraphSummaryPair, PairSink};
use crate::corpus::graphml::{emit_graphml, node_texts, GraphMlSchema};
use crate::corpus::llm::LlmClient;
use crate::corpus::prompts::{render_summary_prompt, Domain};
use crate::error::{Error, Result};
use crate::tag::{rwr_sample, SamplerConfig, TextAttributedGraph};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenerateConfig {
    /// Identifier recorded in every pair.
    pub source_graph: String,
    pub domain: Domain,
    /// Seed nodes; `None` means every node.
    pub seeds: Option<Vec<usize>>,
    /// Per-attribute character budget applied before GraphML insertion.
    pub char_budget: Option<usize>,
    /// Extra attempts per seed after the first failure.
    pub retries: usize,
    /// Requests in flight at once.
    pub concurrency: usize,
    /// Stop after this many new pairs.
    pub max_new: Option<usize>,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        Self {
            source_graph: "source".into(),
            domain: Domain::Academic,
            seeds: None,
            char_budget: Some(1000),
            retries: 2,
            concurrency: 4,
            max_new: None,
        }
    }
}

/// A seed whose retries were exhausted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub seed: usize,
    pub attempts: usize,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GenerateOutcome {
    pub new_pairs: Vec<GraphSummaryPair>,
    pub failures: Vec<FailureRecord>,
    /// Seeds skipped because the sink already held them.
    pub already_present: usize,
}

/// Builds the prompt for one seed.
pub fn seed_prompt(
    graph: &TextAttributedGraph,
    seed: usize,
    sampler: &SamplerConfig,
    schema: &GraphMlSchema,
    domain: Domain,
    char_budget: Option<usize>,
) -> Result<String> {
    let sub = rwr_sample(graph, seed, sampler)?;
    let texts = node_texts(graph, &sub, schema, char_budget);
    let doc = emit_graphml(&sub, schema, &texts)?;
    Ok(render_summary_prompt(&doc, domain, sub.center_local_id))
}

fn attempt(llm: &dyn LlmClient, prompt: &str, retries: usize) -> std::result::Result<String, (usize, String)> {
    let mut last = String::new();
    for _ in 0..=retries {
        match llm.complete(prompt) {
            Ok(s) if !s.trim().is_empty() => return Ok(s),
            Ok(_) => last = "empty completion".into(),
            Err(e) => last = e.to_string(),
        }
    }
    Err((retries + 1, last))
}

/// Generates one pair per seed not already in `sink_path`, appending in seed
/// order. Seeds that exhaust their retries are written to `manifest_path`.
pub fn generate_pairs(
    graph: &TextAttributedGraph,
    sampler: &SamplerConfig,
    schema: &GraphMlSchema,
    llm: &dyn LlmClient,
    cfg: &GenerateConfig,
    sink_path: &Path,
    manifest_path: &Path,
) -> Result<GenerateOutcome> {
    sampler.validate()?;
    schema.validate()?;
    if cfg.concurrency == 0 {
        return Err(Error::Validation("concurrency must be positive".into()));
    }
    let seeds: Vec<usize> = cfg.seeds.clone().unwrap_or_else(|| (0..graph.num_nodes()).collect());
    if let Some(&bad) = seeds.iter().find(|&&s| s >= graph.num_nodes()) {
        return Err(Error::Validation(format!("seed {bad} outside graph")));
    }
    let present: BTreeSet<usize> = if sink_path.exists() {
        read_pairs(sink_path)?
            .into_iter()
            .filter(|p| p.source_graph == cfg.source_graph && p.sampler_seed == sampler.rng_seed)
            .map(|p| p.seed)
            .collect()
    } else {
        BTreeSet::new()
    };
    let mut seen = BTreeSet::new();
    let todo: Vec<usize> = seeds
        .iter()
        .copied()
        .filter(|s| seen.insert(*s) && !present.contains(s))
        .collect();
    let mut outcome = GenerateOutcome {
        already_present: seeds.iter().filter(|s| present.contains(s)).count(),
        ..Default::default()
    };
    let mut sink = PairSink::open(sink_path)?;
    let limit = cfg.max_new.unwrap_or(usize::MAX);
    let mut cursor = 0;
    while cursor < todo.len() && outcome.new_pairs.len() < limit {
        let room = limit - outcome.new_pairs.len();
        let take = cfg.concurrency.min(room).min(todo.len() - cursor);
        let batch = &todo[cursor..cursor + take];
        cursor += take;
        let prompts: Vec<String> = batch
            .iter()
            .map(|&s| seed_prompt(graph, s, sampler, schema, cfg.domain, cfg.char_budget))
            .collect::<Result<_>>()?;
        let results: Vec<_> = std::thread::scope(|scope| {
            let handles: Vec<_> = prompts
                .iter()
                .map(|p| scope.spawn(move || attempt(llm, p, cfg.retries)))
                .collect();
            handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
        });
        for (&seed, result) in batch.iter().zip(results) {
            match result {
                Ok(summary) => {
                    let pair = GraphSummaryPair::new(&cfg.source_graph, seed, sampler.rng_seed, cfg.domain, summary)?;
                    sink.append(&pair)?;
                    outcome.new_pairs.push(pair);
                }
                Err((attempts, error)) => {
                    log::warn!("seed {seed}: giving up after {attempts} attempts: {error}");
                    outcome.failures.push(FailureRecord { seed, attempts, error });
                }
            }
        }
    }
    let manifest = serde_json::to_string_pretty(&outcome.failures)?;
    std::fs::write(manifest_path, manifest).map_err(|e| Error::io(manifest_path, e))?;
    Ok(outcome)
}
