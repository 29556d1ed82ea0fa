//! Zero-shot link prediction scored by endpoint subgraph similarity.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adapt::zero_shot::{seeded_sampler, SeedSummary};
use crate::error::{Error, Result};
use crate::model::GraphEncoder;
use crate::tag::{rwr_sample_excluding, SamplerConfig, TextAttributedGraph};
use crate::text::cosine;

/// Cosine of two subgraph embeddings.
pub fn link_score(h_i: &[f64], h_j: &[f64]) -> f64 {
    cosine(h_i, h_j)
}

/// Area under the ROC curve by midranks: the fraction of (positive, negative)
/// pairs ordered correctly, ties counting one half.
pub fn auc(scores: &[f64], truth: &[bool]) -> Result<f64> {
    if scores.len() != truth.len() {
        return Err(Error::shape("truth", scores.len(), truth.len()));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Validation("AUC scores contain NaN".into()));
    }
    let n_pos = truth.iter().filter(|&&t| t).count();
    let n_neg = truth.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Validation("AUC needs at least one positive and one negative".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Twice the rank sum of positives, with midranks for ties (1-based ranks).
    let mut rank_sum2: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let pos_in_group = order[i..=j].iter().filter(|&&k| truth[k]).count() as u128;
        // midrank = (i + 1 + j + 1) / 2
        rank_sum2 += pos_in_group * (i as u128 + j as u128 + 2);
        i = j + 1;
    }
    let (p, n) = (n_pos as u128, n_neg as u128);
    // U = R - p(p+1)/2, doubled to stay integral.
    let u2 = rank_sum2 - p * (p + 1);
    Ok(u2 as f64 / (2 * p * n) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinkEvalConfig {
    /// Fraction of edges held out as positives.
    pub test_fraction: f64,
    pub seeds: Vec<u64>,
}

impl Default for LinkEvalConfig {
    fn default() -> Self {
        Self {
            test_fraction: 0.5,
            seeds: (0..5).collect(),
        }
    }
}

/// Held-out positive edges and an equal number of uniformly drawn non-edges.
pub fn link_split(graph: &TextAttributedGraph, test_fraction: f64, seed: u64) -> Result<Vec<((usize, usize), bool)>> {
    if !(test_fraction > 0.0 && test_fraction <= 1.0) {
        return Err(Error::Validation(format!("test fraction must lie in (0, 1], got {test_fraction}")));
    }
    let n = graph.num_nodes();
    let max_edges = n * n.saturating_sub(1) / 2;
    if graph.edges().is_empty() || graph.edges().len() >= max_edges {
        return Err(Error::Validation("link prediction needs both edges and non-edges".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = graph.edges().to_vec();
    edges.shuffle(&mut rng);
    let k = ((edges.len() as f64 * test_fraction).round() as usize).clamp(1, edges.len());
    let mut out: Vec<_> = edges[..k].iter().map(|&e| (e, true)).collect();
    for _ in 0..k {
        loop {
            let u = rng.random_range(0..n);
            let v = rng.random_range(0..n);
            if u != v && !graph.has_edge(u, v) {
                out.push(((u.min(v), u.max(v)), false));
                break;
            }
        }
    }
    Ok(out)
}

/// Mean AUC over seeds. Both endpoints of a positive edge are sampled with
/// that edge removed.
pub fn evaluate_link_prediction(
    encoder: &GraphEncoder,
    graph: &TextAttributedGraph,
    sampler: &SamplerConfig,
    cfg: &LinkEvalConfig,
    prompt: Option<&[f64]>,
) -> Result<SeedSummary> {
    if graph.features.is_none() {
        return Err(Error::Validation("target graph has no node features".into()));
    }
    if cfg.seeds.is_empty() {
        return Err(Error::Validation("at least one evaluation seed required".into()));
    }
    let k = encoder.config.pe_dim;
    let mut values = Vec::new();
    for &seed in &cfg.seeds {
        let pairs = link_split(graph, cfg.test_fraction, seed)?;
        let sampler = seeded_sampler(sampler, seed);
        let scored = pairs
            .par_iter()
            .map(|&((u, v), positive)| {
                let exclude = positive.then_some((u, v));
                let su = rwr_sample_excluding(graph, u, &sampler, exclude)?.with_rwpe(k);
                let sv = rwr_sample_excluding(graph, v, &sampler, exclude)?.with_rwpe(k);
                let hu = encoder.encode_with_prompt(&su, prompt)?;
                let hv = encoder.encode_with_prompt(&sv, prompt)?;
                Ok((link_score(&hu.values, &hv.values), positive))
            })
            .collect::<Result<Vec<_>>>()?;
        let (scores, truth): (Vec<f64>, Vec<bool>) = scored.into_iter().unzip();
        values.push(auc(&scores, &truth)?);
    }
    Ok(SeedSummary::new(cfg.seeds.clone(), values))
}
