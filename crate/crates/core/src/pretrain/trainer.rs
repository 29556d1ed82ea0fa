//! Outer training loop: shuffled mini-batches, frozen summary embeddings,
//! adversarial inner loop, AdamW update, per-epoch checkpoints.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::checkpoint::Checkpoint;
use crate::error::{Error, Result};
use crate::model::{GraphEncoder, GraphEncoderConfig};
use crate::pretrain::adversary::{clean_step, inner_maximize, AdversaryConfig, PerturbationState};
use crate::pretrain::optim::{AdamW, AdamWConfig};
use crate::tag::EgoSubgraph;
use crate::text::TextEncoder;

/// A sampled subgraph and the summary written for it.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingExample {
    pub subgraph: EgoSubgraph,
    pub summary: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PretrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub temperature: f64,
    /// Seeds parameter init and batch shuffling.
    pub seed: u64,
    pub optimizer: AdamWConfig,
    /// `None` trains on clean features only.
    pub adversary: Option<AdversaryConfig>,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 32,
            temperature: 0.1,
            seed: 0,
            optimizer: AdamWConfig::default(),
            adversary: Some(AdversaryConfig::default()),
        }
    }
}

impl PretrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Validation("epochs and batch_size must be positive".into()));
        }
        if self.temperature.is_nan() || self.temperature <= 0.0 {
            return Err(Error::Validation(format!("temperature must be positive, got {}", self.temperature)));
        }
        if let Some(a) = &self.adversary {
            a.validate()?;
        }
        Ok(())
    }

    /// Hyperparameters stored alongside trained weights.
    pub fn metadata(&self) -> BTreeMap<String, serde_json::Value> {
        let mut m = BTreeMap::new();
        m.insert("lr".into(), json!(self.optimizer.lr));
        m.insert("weight_decay".into(), json!(self.optimizer.weight_decay));
        m.insert("beta1".into(), json!(self.optimizer.beta1));
        m.insert("beta2".into(), json!(self.optimizer.beta2));
        m.insert("epochs".into(), json!(self.epochs));
        m.insert("batch_size".into(), json!(self.batch_size));
        m.insert("temperature".into(), json!(self.temperature));
        m.insert("seed".into(), json!(self.seed));
        m.insert("adversary".into(), json!(self.adversary));
        m
    }
}

/// One optimizer step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepMetrics {
    pub step: usize,
    pub epoch: usize,
    /// Contrastive loss of the unperturbed batch.
    pub loss: f64,
    pub alignment: f64,
    pub uniformity: f64,
    pub delta_norm_mean: f64,
    pub lr: f64,
    /// Every per-subgraph perturbation norm logged during the inner loop.
    pub delta_norms: Vec<f64>,
}

pub const METRICS_HEADER: &str = "step,epoch,loss,alignment,uniformity,delta_norm_mean,lr";

impl StepMetrics {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.step, self.epoch, self.loss, self.alignment, self.uniformity, self.delta_norm_mean, self.lr
        )
    }
}

#[derive(Debug, Clone)]
pub struct PretrainOutcome {
    pub checkpoint: Checkpoint,
    pub metrics: Vec<StepMetrics>,
    pub text_checksum_before: String,
    pub text_checksum_after: String,
}

impl PretrainOutcome {
    pub fn metrics_csv(&self) -> String {
        let mut out = String::from(METRICS_HEADER);
        out.push('\n');
        for m in &self.metrics {
            let _ = writeln!(out, "{}", m.csv_row());
        }
        out
    }

    pub fn mean_epoch_loss(&self, epoch: usize) -> Option<f64> {
        let losses: Vec<f64> = self.metrics.iter().filter(|m| m.epoch == epoch).map(|m| m.loss).collect();
        (!losses.is_empty()).then(|| losses.iter().sum::<f64>() / losses.len() as f64)
    }
}

fn dump_batch(
    out_dir: Option<&Path>,
    step: usize,
    epoch: usize,
    indices: &[usize],
    examples: &[TrainingExample],
) -> Result<String> {
    let dump = json!({
        "step": step,
        "epoch": epoch,
        "examples": indices.iter().map(|&i| json!({
            "index": i,
            "global_ids": examples[i].subgraph.global_ids,
            "center": examples[i].subgraph.center_local_id,
            "summary": examples[i].summary,
        })).collect::<Vec<_>>(),
    });
    match out_dir {
        Some(dir) => {
            let path = dir.join("nonfinite_batch.json");
            std::fs::write(&path, serde_json::to_vec_pretty(&dump)?).map_err(|e| Error::io(&path, e))?;
            Ok(format!("batch dumped to {}", path.display()))
        }
        None => Ok(format!("batch examples {indices:?}")),
    }
}

/// Trains a fresh encoder on `examples`. When `out_dir` is given, writes
/// `metrics.csv`, `checkpoint_epoch_NNN.bin` after each epoch and the final
/// `checkpoint.bin`.
pub fn pretrain(
    examples: &[TrainingExample],
    text: &dyn TextEncoder,
    encoder_cfg: &GraphEncoderConfig,
    cfg: &PretrainConfig,
    out_dir: Option<&Path>,
) -> Result<PretrainOutcome> {
    cfg.validate()?;
    if examples.is_empty() {
        return Err(Error::Validation("pretraining dataset is empty".into()));
    }
    if text.dim() != encoder_cfg.d_text {
        return Err(Error::shape("text encoder", encoder_cfg.d_text, text.dim()));
    }
    let text_checksum_before = text.checksum();

    let summaries: Vec<Vec<f64>> = examples
        .par_iter()
        .map(|ex| text.encode(&ex.summary).map(|e| e.values))
        .collect::<Result<_>>()?;

    let mut encoder = GraphEncoder::init(encoder_cfg.clone(), cfg.seed)?;
    let mut opt = AdamW::for_store(cfg.optimizer, &encoder.params);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x0005_EED0_FBA7_C4E5);
    let mut metadata = cfg.metadata();
    metadata.insert("text_encoder_checksum".into(), json!(text_checksum_before));

    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut metrics = Vec::new();
    let mut csv = String::from(METRICS_HEADER);
    csv.push('\n');
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let subs: Vec<EgoSubgraph> = chunk.iter().map(|&i| examples[i].subgraph.clone()).collect();
            let u = Array2::from_shape_fn((chunk.len(), encoder_cfg.d_text), |(r, c)| summaries[chunk[r]][c]);

            encoder.params.zero_grad();
            let (outcome, delta_norms) = match &cfg.adversary {
                Some(adv) => {
                    let mut pert = PerturbationState::zeros(*adv, &subs);
                    let outcome = inner_maximize(&mut encoder, &subs, &u, &mut pert, cfg.temperature);
                    (outcome, pert.norm_log.into_iter().flatten().collect::<Vec<_>>())
                }
                None => (clean_step(&mut encoder, &subs, &u, cfg.temperature), Vec::new()),
            };
            let outcome = match outcome {
                Err(Error::NonFinite { detail, .. }) => {
                    let where_ = dump_batch(out_dir, step, epoch, chunk, examples)?;
                    return Err(Error::NonFinite {
                        step,
                        detail: format!("{detail}; {where_}"),
                    });
                }
                other => other?,
            };
            opt.step_store(&mut encoder.params);

            let last = delta_norms.len().saturating_sub(subs.len());
            let final_norms = &delta_norms[last..];
            let delta_norm_mean = if final_norms.is_empty() {
                0.0
            } else {
                final_norms.iter().sum::<f64>() / final_norms.len() as f64
            };
            let m = StepMetrics {
                step,
                epoch,
                loss: outcome.losses[0],
                alignment: outcome.alignment,
                uniformity: outcome.uniformity,
                delta_norm_mean,
                lr: cfg.optimizer.lr,
                delta_norms,
            };
            let _ = writeln!(csv, "{}", m.csv_row());
            metrics.push(m);
            step += 1;
        }
        if let Some(dir) = out_dir {
            let mut meta = metadata.clone();
            meta.insert("epoch".into(), json!(epoch));
            Checkpoint::new(encoder.clone(), meta).save(dir.join(format!("checkpoint_epoch_{epoch:03}.bin")))?;
            let path = dir.join("metrics.csv");
            std::fs::write(&path, &csv).map_err(|e| Error::io(&path, e))?;
        }
    }

    let text_checksum_after = text.checksum();
    metadata.insert("epoch".into(), json!(cfg.epochs - 1));
    let checkpoint = Checkpoint::new(encoder, metadata);
    if let Some(dir) = out_dir {
        checkpoint.save(dir.join("checkpoint.bin"))?;
    }
    Ok(PretrainOutcome {
        checkpoint,
        metrics,
        text_checksum_before,
        text_checksum_after,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tag::{rwr_sample, SamplerConfig, TextAttributedGraph};
    use crate::text::HashEmbedEncoder;

    fn toy_examples() -> (Vec<TrainingExample>, HashEmbedEncoder) {
        let text = HashEmbedEncoder::new(8, 1);
        let words = ["alpha", "beta", "gamma", "delta"];
        let n = 16;
        let raw: Vec<String> = (0..n).map(|i| format!("{} node", words[i % 4])).collect();
        let edges: Vec<_> = (0..n).map(|i| (i, (i + 4) % n)).collect();
        let mut g = TextAttributedGraph::new(n, edges, raw).unwrap();
        g.encode_features(&text).unwrap();
        let sampler = SamplerConfig {
            node_budget: 4,
            ..Default::default()
        };
        let examples = (0..n)
            .map(|i| TrainingExample {
                subgraph: rwr_sample(&g, i, &sampler).unwrap().with_rwpe(4),
                summary: format!("summary about {}", words[i % 4]),
            })
            .collect();
        (examples, text)
    }

    fn small_cfg() -> GraphEncoderConfig {
        GraphEncoderConfig {
            layers: 1,
            hidden: 8,
            heads: 2,
            pe_dim: 4,
            d_text: 8,
            preset: None,
        }
    }

    #[test]
    fn metadata_records_optimizer_defaults() {
        let (examples, text) = toy_examples();
        let cfg = PretrainConfig {
            epochs: 1,
            batch_size: 8,
            ..Default::default()
        };
        let out = pretrain(&examples, &text, &small_cfg(), &cfg, None).unwrap();
        let meta = &out.checkpoint.header.metadata;
        assert_eq!(meta["lr"], json!(1e-5));
        assert_eq!(meta["weight_decay"], json!(1e-5));
        assert_eq!(out.metrics.len(), 2);
        assert_eq!(out.text_checksum_before, out.text_checksum_after);
    }

    #[test]
    fn identical_seeds_give_identical_checkpoints() {
        let (examples, text) = toy_examples();
        let cfg = PretrainConfig {
            epochs: 2,
            batch_size: 5,
            ..Default::default()
        };
        let a = pretrain(&examples, &text, &small_cfg(), &cfg, None).unwrap();
        let b = pretrain(&examples, &text, &small_cfg(), &cfg, None).unwrap();
        assert_eq!(a.checkpoint.to_bytes().unwrap(), b.checkpoint.to_bytes().unwrap());
    }

    #[test]
    fn zero_epsilon_equals_clean_training() {
        let (examples, text) = toy_examples();
        let base = PretrainConfig {
            epochs: 2,
            batch_size: 6,
            optimizer: AdamWConfig {
                lr: 1e-3,
                ..Default::default()
            },
            ..Default::default()
        };
        let clean = PretrainConfig {
            adversary: None,
            ..base.clone()
        };
        let zero = PretrainConfig {
            adversary: Some(AdversaryConfig {
                epsilon: 0.0,
                ..Default::default()
            }),
            ..base
        };
        let a = pretrain(&examples, &text, &small_cfg(), &clean, None).unwrap();
        let b = pretrain(&examples, &text, &small_cfg(), &zero, None).unwrap();
        assert_eq!(a.checkpoint.encoder, b.checkpoint.encoder);
    }

    #[test]
    fn empty_dataset_rejected() {
        let text = HashEmbedEncoder::new(8, 1);
        assert!(pretrain(&[], &text, &small_cfg(), &PretrainConfig::default(), None).is_err());
    }

    #[test]
    fn writes_metrics_and_checkpoints() {
        let (examples, text) = toy_examples();
        let dir = tempfile::tempdir().unwrap();
        let cfg = PretrainConfig {
            epochs: 2,
            batch_size: 8,
            ..Default::default()
        };
        pretrain(&examples, &text, &small_cfg(), &cfg, Some(dir.path())).unwrap();
        let csv = std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
        assert!(csv.starts_with(METRICS_HEADER));
        assert_eq!(csv.lines().count(), 5);
        for e in 0..2 {
            assert!(dir.path().join(format!("checkpoint_epoch_{e:03}.bin")).exists());
        }
        Checkpoint::load(dir.path().join("checkpoint.bin")).unwrap();
    }
}
