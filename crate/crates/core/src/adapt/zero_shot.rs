//! Nearest-label-sentence node classification.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adapt::labels::LabelPromptSet;
use crate::error::{Error, Result};
use crate::model::GraphEncoder;
use crate::tag::{rwr_sample, EgoSubgraph, SamplerConfig, TextAttributedGraph};
use crate::text::cosine;

/// Predicted class and cosine score against every label sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub class_id: usize,
    pub scores: Vec<f64>,
}

/// `argmax_k cos(h, u_k)`, lowest id on ties.
pub fn zero_shot_classify(h: &[f64], labels: &LabelPromptSet) -> Result<Prediction> {
    if labels.is_empty() {
        return Err(Error::Validation("label prompt set is empty".into()));
    }
    if h.len() != labels.embeddings.ncols() {
        return Err(Error::shape("embedding", labels.embeddings.ncols(), h.len()));
    }
    let scores: Vec<f64> = labels
        .embeddings
        .rows()
        .into_iter()
        .map(|u| cosine(h, u.as_slice().expect("standard layout")))
        .collect();
    let mut best = 0;
    for (k, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = k;
        }
    }
    Ok(Prediction { class_id: best, scores })
}

/// Samples and encodes the ego-subgraph of every node in `nodes`.
pub fn sample_subgraphs(
    encoder: &GraphEncoder,
    graph: &TextAttributedGraph,
    nodes: &[usize],
    sampler: &SamplerConfig,
) -> Result<Vec<EgoSubgraph>> {
    if graph.features.is_none() {
        return Err(Error::Validation("target graph has no node features".into()));
    }
    nodes
        .par_iter()
        .map(|&n| rwr_sample(graph, n, sampler).map(|s| s.with_rwpe(encoder.config.pe_dim)))
        .collect()
}

/// Fraction of `subs` classified as `truth`, with an optional prompt vector.
pub fn accuracy(
    encoder: &GraphEncoder,
    subs: &[EgoSubgraph],
    truth: &[usize],
    labels: &LabelPromptSet,
    prompt: Option<&[f64]>,
) -> Result<f64> {
    if subs.is_empty() || subs.len() != truth.len() {
        return Err(Error::Validation("accuracy needs a nonempty, aligned test set".into()));
    }
    let correct = subs
        .par_iter()
        .zip(truth)
        .map(|(s, &y)| {
            let h = encoder.encode_with_prompt(s, prompt)?;
            Ok(usize::from(zero_shot_classify(&h.values, labels)?.class_id == y))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(correct.iter().sum::<usize>() as f64 / subs.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub test_fraction: f64,
    pub seeds: Vec<u64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            test_fraction: 0.2,
            seeds: (0..5).collect(),
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.test_fraction > 0.0 && self.test_fraction <= 1.0) {
            return Err(Error::Validation(format!("test fraction must lie in (0, 1], got {}", self.test_fraction)));
        }
        if self.seeds.is_empty() {
            return Err(Error::Validation("at least one evaluation seed required".into()));
        }
        Ok(())
    }
}

/// Per-seed values with their mean and sample standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seeds: Vec<u64>,
    pub values: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

impl SeedSummary {
    pub fn new(seeds: Vec<u64>, values: Vec<f64>) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self { seeds, values, mean, std }
    }
}

/// Labeled nodes, each with its class id, checked against the prompt set.
pub fn labeled_nodes(graph: &TextAttributedGraph, labels: &LabelPromptSet) -> Result<Vec<(usize, usize)>> {
    let node_labels = graph
        .labels
        .as_ref()
        .ok_or_else(|| Error::Validation("target graph has no labels".into()))?;
    let mut out = Vec::new();
    for (v, y) in node_labels.iter().enumerate() {
        if let Some(y) = *y {
            if y >= labels.len() {
                return Err(Error::Validation(format!(
                    "class {y} of node {v} has no label prompt ({} prompts)",
                    labels.len()
                )));
            }
            out.push((v, y));
        }
    }
    if out.is_empty() {
        return Err(Error::Validation("target graph has no labeled nodes".into()));
    }
    Ok(out)
}

/// Per-seed sampler: the evaluation seed is folded into the walk seed.
pub fn seeded_sampler(sampler: &SamplerConfig, seed: u64) -> SamplerConfig {
    SamplerConfig {
        rng_seed: sampler.rng_seed ^ seed.wrapping_mul(0xD6E8_FEB8_6659_FD93),
        ..*sampler
    }
}

/// Zero-shot accuracy on a random `test_fraction` of labeled nodes, repeated
/// over the configured seeds.
pub fn evaluate_node_classification(
    encoder: &GraphEncoder,
    graph: &TextAttributedGraph,
    labels: &LabelPromptSet,
    sampler: &SamplerConfig,
    cfg: &EvalConfig,
    prompt: Option<&[f64]>,
) -> Result<SeedSummary> {
    cfg.validate()?;
    let nodes = labeled_nodes(graph, labels)?;
    let n_test = ((nodes.len() as f64 * cfg.test_fraction).round() as usize).clamp(1, nodes.len());
    let mut values = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        let mut order = nodes.clone();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let test = &order[..n_test];
        let ids: Vec<usize> = test.iter().map(|p| p.0).collect();
        let truth: Vec<usize> = test.iter().map(|p| p.1).collect();
        let subs = sample_subgraphs(encoder, graph, &ids, &seeded_sampler(sampler, seed))?;
        values.push(accuracy(encoder, &subs, &truth, labels, prompt)?);
    }
    Ok(SeedSummary::new(cfg.seeds.clone(), values))
}
