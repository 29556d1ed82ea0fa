//! Central finite-difference verification of every analytic gradient.
//!
//! Per tensor the error is `||a - n|| / max(||a||, ||n||, floor)` with `a` the
//! analytic and `n` the numeric gradient.

use std::fmt::Write as _;

use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adapt::labels::LabelPromptSet;
use crate::adapt::prompt::{prompt_objective, scl_loss};
use crate::error::Result;
use crate::model::{GraphEncoder, GraphEncoderConfig};
use crate::pretrain::adversary::{contrastive_pass, perturbed_loss};
use crate::pretrain::loss::{contrastive_loss, ContrastiveBatch};
use crate::tag::{rwr_sample, EgoSubgraph, SamplerConfig, TextAttributedGraph};
use crate::tape::Tape;

/// Denominator floor so exactly-zero gradients compare on an absolute scale.
pub const NORM_FLOOR: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GradCheckConfig {
    pub encoder: GraphEncoderConfig,
    /// Nodes per subgraph.
    pub nodes: usize,
    /// Subgraphs per contrastive batch.
    pub batch: usize,
    pub step: f64,
    pub tolerance: f64,
    pub temperature: f64,
    pub seed: u64,
    /// Adds a unit offset to this tensor's analytic gradient (negative control).
    pub corrupt: Option<String>,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            encoder: GraphEncoderConfig {
                layers: 2,
                hidden: 8,
                heads: 2,
                pe_dim: 4,
                d_text: 6,
                preset: None,
            },
            nodes: 3,
            batch: 3,
            step: 1e-5,
            tolerance: 1e-4,
            temperature: 0.5,
            seed: 0,
            corrupt: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorCheck {
    pub scenario: String,
    pub tensor: String,
    pub elements: usize,
    pub rel_error: f64,
    pub analytic_norm: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub checks: Vec<TensorCheck>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> Vec<&TensorCheck> {
        self.checks.iter().filter(|c| !c.pass).collect()
    }

    pub fn worst(&self) -> Option<&TensorCheck> {
        self.checks.iter().max_by(|a, b| a.rel_error.total_cmp(&b.rel_error))
    }

    pub fn extend(&mut self, other: GradCheckReport) {
        self.checks.extend(other.checks);
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("scenario\ttensor\telements\trel_error\tanalytic_norm\tverdict\n");
        for c in &self.checks {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{:.3e}\t{:.3e}\t{}",
                c.scenario,
                c.tensor,
                c.elements,
                c.rel_error,
                c.analytic_norm,
                if c.pass { "ok" } else { "FAIL" }
            );
        }
        out
    }
}

fn norm(m: &Array2<f64>) -> f64 {
    m.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Relative error of `analytic` against central differences of `f` around `base`.
pub fn compare(
    cfg: &GradCheckConfig,
    scenario: &str,
    tensor: &str,
    base: &Array2<f64>,
    analytic: &Array2<f64>,
    f: impl Fn(&Array2<f64>) -> Result<f64> + Sync,
) -> Result<TensorCheck> {
    let mut analytic = analytic.clone();
    if cfg.corrupt.as_deref() == Some(tensor) {
        analytic.mapv_inplace(|x| x + 1.0);
    }
    let h = cfg.step;
    let numeric: Vec<f64> = (0..base.len())
        .into_par_iter()
        .map(|idx| {
            let (r, c) = (idx / base.ncols(), idx % base.ncols());
            let mut plus = base.clone();
            plus[[r, c]] += h;
            let mut minus = base.clone();
            minus[[r, c]] -= h;
            Ok((f(&plus)? - f(&minus)?) / (2.0 * h))
        })
        .collect::<Result<_>>()?;
    let numeric = Array2::from_shape_vec(base.dim(), numeric).expect("same element count");
    let diff = norm(&(&analytic - &numeric));
    let (na, nn) = (norm(&analytic), norm(&numeric));
    let rel_error = diff / na.max(nn).max(NORM_FLOOR);
    Ok(TensorCheck {
        scenario: scenario.into(),
        tensor: tensor.into(),
        elements: base.len(),
        rel_error,
        analytic_norm: na,
        pass: rel_error < cfg.tolerance,
    })
}

fn unit_rows(mut m: Array2<f64>) -> Array2<f64> {
    for mut r in m.rows_mut() {
        let n = r.dot(&r).sqrt();
        r /= n;
    }
    m
}

struct Fixture {
    encoder: GraphEncoder,
    subs: Vec<EgoSubgraph>,
    rng: ChaCha8Rng,
}

fn fixture(cfg: &GradCheckConfig) -> Result<Fixture> {
    cfg.encoder.validate()?;
    let encoder = GraphEncoder::init(cfg.encoder.clone(), cfg.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xC0FFEE);
    let n = cfg.nodes.max(1) * cfg.batch.max(1);
    let mut edges = Vec::new();
    for b in 0..cfg.batch.max(1) {
        let lo = b * cfg.nodes;
        for i in 1..cfg.nodes {
            edges.push((lo + i - 1, lo + i));
        }
        if cfg.nodes > 2 {
            edges.push((lo, lo + cfg.nodes - 1));
        }
    }
    let features = Array2::from_shape_fn((n, cfg.encoder.d_text), |_| rng.random_range(-1.0..1.0));
    let graph = TextAttributedGraph::new(n, edges, vec![String::new(); n])?.with_features(features)?;
    let sampler = SamplerConfig {
        node_budget: cfg.nodes.max(1),
        max_steps: 10_000,
        rng_seed: cfg.seed,
        ..Default::default()
    };
    let subs = (0..cfg.batch.max(1))
        .map(|b| rwr_sample(&graph, b * cfg.nodes, &sampler).map(|s| s.with_rwpe(cfg.encoder.pe_dim)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Fixture { encoder, subs, rng })
}

fn with_param(encoder: &GraphEncoder, name: &str, value: &Array2<f64>) -> GraphEncoder {
    let mut e = encoder.clone();
    e.params.get_mut(name).expect("known tensor").value = value.clone();
    e
}

/// Linear readout `sum(w * g(X))` of one subgraph: every parameter and the
/// node features.
pub fn check_readout(cfg: &GradCheckConfig) -> Result<GradCheckReport> {
    let mut fx = fixture(cfg)?;
    let sub = fx.subs[0].clone();
    let w = Array2::from_shape_fn((1, cfg.encoder.d_text), |_| fx.rng.random_range(-1.0..1.0));
    let objective = |enc: &GraphEncoder, x: &Array2<f64>| -> Result<f64> {
        let s = EgoSubgraph {
            features: x.clone(),
            ..sub.clone()
        };
        let h = enc.encode(&s)?;
        Ok(h.values.iter().zip(w.iter()).map(|(a, b)| a * b).sum())
    };

    let mut tape = Tape::new();
    let pv = fx.encoder.params.register(&mut tape);
    let x = tape.leaf(sub.features.clone());
    let fwd = fx.encoder.forward(&mut tape, &pv, &sub, x)?;
    let grads = tape.backward(fwd.output, w.clone())?;

    let mut report = GradCheckReport::default();
    for (i, (name, p)) in fx.encoder.params.iter().enumerate() {
        let analytic = grads.get(pv.get(i)).cloned().unwrap_or_else(|| Array2::zeros(p.value.dim()));
        let enc = &fx.encoder;
        report.checks.push(compare(cfg, "readout", name, &p.value, &analytic, |v| {
            objective(&with_param(enc, name, v), &sub.features)
        })?);
    }
    let analytic = grads.get(x).cloned().unwrap_or_else(|| Array2::zeros(sub.features.dim()));
    report.checks.push(compare(cfg, "readout", "input.features", &sub.features, &analytic, |v| {
        objective(&fx.encoder, v)
    })?);
    Ok(report)
}

/// Contrastive loss of a perturbed batch: every parameter, every perturbation
/// block, and the loss gradients w.r.t. both embedding matrices.
pub fn check_contrastive(cfg: &GradCheckConfig) -> Result<GradCheckReport> {
    let mut fx = fixture(cfg)?;
    let d = cfg.encoder.d_text;
    let b = fx.subs.len();
    let u = unit_rows(Array2::from_shape_fn((b, d), |_| fx.rng.random_range(-1.0..1.0)));
    let deltas: Vec<Array2<f64>> = fx
        .subs
        .iter()
        .map(|s| Array2::from_shape_fn(s.features.dim(), |_| fx.rng.random_range(-0.01..0.01)))
        .collect();
    let t = cfg.temperature;
    let pass = contrastive_pass(&fx.encoder, &fx.subs, &u, Some(&deltas), t)?;
    let loss_at = |enc: &GraphEncoder, deltas: &[Array2<f64>]| -> Result<f64> {
        perturbed_loss(enc, &fx.subs, &u, Some(deltas), t)
    };

    let mut report = GradCheckReport::default();
    for ((name, p), analytic) in fx.encoder.params.iter().zip(&pass.param_grads) {
        let enc = &fx.encoder;
        report.checks.push(compare(cfg, "contrastive", name, &p.value, analytic, |v| {
            loss_at(&with_param(enc, name, v), &deltas)
        })?);
    }
    for (i, analytic) in pass.delta_grads.iter().enumerate() {
        report.checks.push(compare(cfg, "contrastive", &format!("delta.{i}"), &deltas[i], analytic, |v| {
            let mut ds = deltas.clone();
            ds[i] = v.clone();
            loss_at(&fx.encoder, &ds)
        })?);
    }

    let h = unit_rows(Array2::from_shape_fn((b, d), |_| fx.rng.random_range(-1.0..1.0)));
    let out = contrastive_loss(&ContrastiveBatch::new(h.clone(), u.clone())?, t)?;
    report.checks.push(compare(cfg, "contrastive", "loss.H", &h, &out.grad_h, |v| {
        Ok(contrastive_loss(&ContrastiveBatch::new(v.clone(), u.clone())?, t)?.loss)
    })?);
    report.checks.push(compare(cfg, "contrastive", "loss.U", &u, &out.grad_u, |v| {
        Ok(contrastive_loss(&ContrastiveBatch::new(h.clone(), v.clone())?, t)?.loss)
    })?);
    Ok(report)
}

/// Supervised contrastive prompt objective: the prompt vector and the loss
/// gradient w.r.t. the graph embeddings.
pub fn check_prompt(cfg: &GradCheckConfig) -> Result<GradCheckReport> {
    let mut fx = fixture(cfg)?;
    let d = cfg.encoder.d_text;
    let classes = 2;
    let u = unit_rows(Array2::from_shape_fn((classes, d), |_| fx.rng.random_range(-1.0..1.0)));
    let labels = LabelPromptSet {
        prompts: Vec::new(),
        sentences: Vec::new(),
        embeddings: u.clone(),
    };
    let y: Vec<usize> = (0..fx.subs.len()).map(|i| i % classes).collect();
    let sigma = Array1::from_shape_fn(d, |_| fx.rng.random_range(-0.1..0.1));
    let t = cfg.temperature;
    let (_, grad) = prompt_objective(&fx.encoder, &fx.subs, &y, &labels, &sigma, t)?;

    let mut report = GradCheckReport::default();
    let base = sigma.clone().insert_axis(Axis(0));
    report.checks.push(compare(cfg, "prompt", "sigma", &base, &grad.insert_axis(Axis(0)), |v| {
        Ok(prompt_objective(&fx.encoder, &fx.subs, &y, &labels, &v.row(0).to_owned(), t)?.0)
    })?);

    let h = unit_rows(Array2::from_shape_fn((fx.subs.len(), d), |_| fx.rng.random_range(-1.0..1.0)));
    let (_, gh) = scl_loss(&h, &y, &u, t)?;
    report.checks.push(compare(cfg, "prompt", "scl.H", &h, &gh, |v| Ok(scl_loss(v, &y, &u, t)?.0))?);
    Ok(report)
}

/// All scenarios.
pub fn grad_check(cfg: &GradCheckConfig) -> Result<GradCheckReport> {
    let mut report = check_readout(cfg)?;
    report.extend(check_contrastive(cfg)?);
    report.extend(check_prompt(cfg)?);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> GradCheckConfig {
        GradCheckConfig {
            encoder: GraphEncoderConfig {
                layers: 1,
                hidden: 4,
                heads: 1,
                pe_dim: 3,
                d_text: 4,
                preset: None,
            },
            ..Default::default()
        }
    }

    #[test]
    fn single_layer_passes() {
        let report = grad_check(&tiny()).unwrap();
        assert!(report.passed(), "{}", report.to_text());
    }

    #[test]
    fn corrupted_slot_is_reported() {
        let cfg = GradCheckConfig {
            corrupt: Some("layers.0.ffn.fc1.bias".into()),
            ..tiny()
        };
        let report = check_readout(&cfg).unwrap();
        let failures = report.failures();
        assert_eq!(failures.len(), 1);
        assert_eq!(failures[0].tensor, "layers.0.ffn.fc1.bias");
    }
}
