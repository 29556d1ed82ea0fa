//! Adversarial feature perturbations approximating the worst-case alignment.
//!
//! Each subgraph in a batch gets its own perturbation block `delta` (one row per
//! node) confined to an `epsilon` ball. The inner loop takes `M` normalized
//! ascent steps on the contrastive loss w.r.t. `delta`, accumulating parameter
//! gradients at every visited `delta` and averaging them over `M`.

use ndarray::{Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{GraphEncoder, ParamVars};
use crate::pretrain::loss::{alignment_uniformity, contrastive_loss, ContrastiveBatch};
use crate::tag::EgoSubgraph;
use crate::tape::{Tape, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormKind {
    L2,
    Linf,
}

impl NormKind {
    pub fn norm(self, m: &Array2<f64>) -> f64 {
        match self {
            NormKind::L2 => m.iter().map(|x| x * x).sum::<f64>().sqrt(),
            NormKind::Linf => m.iter().fold(0.0f64, |a, x| a.max(x.abs())),
        }
    }

    /// Steepest-ascent direction of unit norm in this geometry; `None` for a
    /// zero gradient.
    fn direction(self, g: &Array2<f64>) -> Option<Array2<f64>> {
        match self {
            NormKind::L2 => {
                let n = self.norm(g);
                (n > 0.0).then(|| g / n)
            }
            NormKind::Linf => g.iter().any(|&x| x != 0.0).then(|| g.mapv(f64::signum)),
        }
    }

    /// Euclidean projection onto the `radius` ball.
    fn project(self, m: &mut Array2<f64>, radius: f64) {
        match self {
            NormKind::L2 => {
                let n = self.norm(m);
                if n > radius {
                    if radius == 0.0 {
                        m.fill(0.0);
                    } else {
                        *m *= radius / n;
                    }
                }
            }
            NormKind::Linf => m.mapv_inplace(|x| x.clamp(-radius, radius)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdversaryConfig {
    pub epsilon: f64,
    pub steps: usize,
    /// Defaults to `epsilon / steps`.
    pub step_size: Option<f64>,
    pub norm: NormKind,
}

impl Default for AdversaryConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-2,
            steps: 3,
            step_size: None,
            norm: NormKind::L2,
        }
    }
}

impl AdversaryConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Validation(format!("epsilon must be finite and >= 0, got {}", self.epsilon)));
        }
        if self.steps == 0 {
            return Err(Error::Validation("adversary needs at least one inner step".into()));
        }
        if let Some(a) = self.step_size {
            if !(a > 0.0 && a.is_finite()) {
                return Err(Error::Validation(format!("inner step size must be positive, got {a}")));
            }
        }
        Ok(())
    }

    pub fn alpha(&self) -> f64 {
        self.step_size.unwrap_or(self.epsilon / self.steps as f64)
    }
}

/// Per-subgraph perturbation blocks for one batch.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationState {
    pub config: AdversaryConfig,
    pub blocks: Vec<Array2<f64>>,
    /// Ascent steps skipped because `dL/d delta` was exactly zero.
    pub skipped: usize,
    /// Block norms recorded after every update, one vector per inner step.
    pub norm_log: Vec<Vec<f64>>,
}

impl PerturbationState {
    pub fn zeros(config: AdversaryConfig, subs: &[EgoSubgraph]) -> Self {
        Self {
            config,
            blocks: subs.iter().map(|s| Array2::zeros(s.features.dim())).collect(),
            skipped: 0,
            norm_log: Vec::new(),
        }
    }

    pub fn block_norms(&self) -> Vec<f64> {
        self.blocks.iter().map(|b| self.config.norm.norm(b)).collect()
    }

    /// `delta <- proj(delta + alpha * dir(g))` per block.
    pub fn ascend(&mut self, grads: &[Array2<f64>]) {
        let alpha = self.config.alpha();
        for (block, g) in self.blocks.iter_mut().zip(grads) {
            match self.config.norm.direction(g) {
                Some(dir) => {
                    block.scaled_add(alpha, &dir);
                    self.config.norm.project(block, self.config.epsilon);
                }
                None => self.skipped += 1,
            }
        }
        let norms = self.block_norms();
        self.norm_log.push(norms);
    }
}

/// Loss, embeddings and gradients of one batch forward/backward.
#[derive(Debug, Clone)]
pub struct BatchPass {
    pub loss: f64,
    pub batch: ContrastiveBatch,
    /// Summed over subgraphs, in parameter-store order.
    pub param_grads: Vec<Array2<f64>>,
    /// `dL/d delta` per subgraph; zeros-shaped per block when not requested.
    pub delta_grads: Vec<Array2<f64>>,
}

struct SubgraphPass {
    tape: Tape,
    pv: ParamVars,
    input: Var,
    output: Var,
}

fn check_batch(encoder: &GraphEncoder, subs: &[EgoSubgraph], summaries: &Array2<f64>) -> Result<()> {
    if subs.is_empty() {
        return Err(Error::Validation("contrastive batch is empty".into()));
    }
    if summaries.dim() != (subs.len(), encoder.config.d_text) {
        return Err(Error::shape(
            "summaries",
            format!("({}, {})", subs.len(), encoder.config.d_text),
            format!("{:?}", summaries.dim()),
        ));
    }
    Ok(())
}

/// Encodes `X + delta` for each subgraph and evaluates the contrastive loss
/// against `summaries` (row `i` pairs with `subs[i]`), backpropagating into the
/// parameters and the perturbation inputs.
pub fn contrastive_pass(
    encoder: &GraphEncoder,
    subs: &[EgoSubgraph],
    summaries: &Array2<f64>,
    deltas: Option<&[Array2<f64>]>,
    temperature: f64,
) -> Result<BatchPass> {
    check_batch(encoder, subs, summaries)?;
    if let Some(d) = deltas {
        if d.len() != subs.len() {
            return Err(Error::shape("delta", subs.len(), d.len()));
        }
    }
    let passes = subs
        .par_iter()
        .enumerate()
        .map(|(i, sub)| {
            let mut tape = Tape::new();
            let pv = encoder.params.register(&mut tape);
            let x = match deltas {
                Some(d) => {
                    if d[i].dim() != sub.features.dim() {
                        return Err(Error::shape(
                            "delta",
                            format!("{:?}", sub.features.dim()),
                            format!("{:?}", d[i].dim()),
                        ));
                    }
                    &sub.features + &d[i]
                }
                None => sub.features.clone(),
            };
            let input = tape.leaf(x);
            let fwd = encoder.forward(&mut tape, &pv, sub, input)?;
            Ok(SubgraphPass {
                tape,
                pv,
                input,
                output: fwd.output,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let d = encoder.config.d_text;
    let mut h = Array2::zeros((subs.len(), d));
    for (i, p) in passes.iter().enumerate() {
        h.row_mut(i).assign(&p.tape.value(p.output).row(0));
    }
    let batch = ContrastiveBatch::new(h, summaries.clone())?;
    let out = contrastive_loss(&batch, temperature)?;

    let grads = passes
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let seed = out.grad_h.row(i).to_owned().insert_axis(Axis(0));
            p.tape.backward(p.output, seed)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut param_grads: Vec<Array2<f64>> = encoder.params.iter().map(|(_, p)| Array2::zeros(p.value.dim())).collect();
    let mut delta_grads = Vec::with_capacity(subs.len());
    for (p, mut g) in passes.iter().zip(grads) {
        for (slot, acc) in param_grads.iter_mut().enumerate() {
            if let Some(gv) = g.get(p.pv.get(slot)) {
                *acc += gv;
            }
        }
        let shape = p.tape.shape(p.input);
        delta_grads.push(g.take(p.input).unwrap_or_else(|| Array2::zeros(shape)));
    }
    Ok(BatchPass {
        loss: out.loss,
        batch,
        param_grads,
        delta_grads,
    })
}

/// Contrastive loss at the given perturbation, without gradients.
pub fn perturbed_loss(
    encoder: &GraphEncoder,
    subs: &[EgoSubgraph],
    summaries: &Array2<f64>,
    deltas: Option<&[Array2<f64>]>,
    temperature: f64,
) -> Result<f64> {
    check_batch(encoder, subs, summaries)?;
    let rows = subs
        .par_iter()
        .enumerate()
        .map(|(i, sub)| {
            let perturbed = match deltas {
                Some(d) => EgoSubgraph {
                    features: &sub.features + &d[i],
                    ..sub.clone()
                },
                None => sub.clone(),
            };
            encoder.encode(&perturbed).map(|e| e.values)
        })
        .collect::<Result<Vec<_>>>()?;
    let h = Array2::from_shape_fn((subs.len(), encoder.config.d_text), |(i, j)| rows[i][j]);
    let batch = ContrastiveBatch::new(h, summaries.clone())?;
    Ok(contrastive_loss(&batch, temperature)?.loss)
}

/// Summary of one inner loop.
#[derive(Debug, Clone)]
pub struct InnerOutcome {
    /// Loss at each visited perturbation, before its update.
    pub losses: Vec<f64>,
    /// Alignment and uniformity of the unperturbed batch.
    pub alignment: f64,
    pub uniformity: f64,
    pub skipped: usize,
}

fn accumulate(encoder: &mut GraphEncoder, grads: &[Array2<f64>], scale: f64) {
    for ((_, p), g) in encoder.params.iter_mut().zip(grads) {
        p.grad.scaled_add(scale, g);
    }
}

fn check_finite(pass: &BatchPass) -> Result<()> {
    if !pass.loss.is_finite() {
        return Err(Error::NonFinite {
            step: 0,
            detail: format!("contrastive loss evaluated to {}", pass.loss),
        });
    }
    Ok(())
}

/// One unperturbed step: parameter gradients added into the store unscaled.
pub fn clean_step(
    encoder: &mut GraphEncoder,
    subs: &[EgoSubgraph],
    summaries: &Array2<f64>,
    temperature: f64,
) -> Result<InnerOutcome> {
    let pass = contrastive_pass(encoder, subs, summaries, None, temperature)?;
    check_finite(&pass)?;
    accumulate(encoder, &pass.param_grads, 1.0);
    let (alignment, uniformity) = alignment_uniformity(&pass.batch);
    Ok(InnerOutcome {
        losses: vec![pass.loss],
        alignment,
        uniformity,
        skipped: 0,
    })
}

/// Runs the `M`-step ascent on `pert`, adding the `1/M`-averaged parameter
/// gradients into the store. With `epsilon = 0` the feasible set is the
/// origin and this reduces exactly to [`clean_step`].
pub fn inner_maximize(
    encoder: &mut GraphEncoder,
    subs: &[EgoSubgraph],
    summaries: &Array2<f64>,
    pert: &mut PerturbationState,
    temperature: f64,
) -> Result<InnerOutcome> {
    pert.config.validate()?;
    if pert.blocks.len() != subs.len() {
        return Err(Error::shape("delta", subs.len(), pert.blocks.len()));
    }
    if pert.config.epsilon == 0.0 {
        let out = clean_step(encoder, subs, summaries, temperature)?;
        pert.norm_log.push(pert.block_norms());
        return Ok(out);
    }
    let m = pert.config.steps;
    let scale = 1.0 / m as f64;
    let mut losses = Vec::with_capacity(m);
    let mut metrics = None;
    let skipped_before = pert.skipped;
    for _ in 0..m {
        let pass = contrastive_pass(encoder, subs, summaries, Some(&pert.blocks), temperature)?;
        check_finite(&pass)?;
        if metrics.is_none() {
            metrics = Some(alignment_uniformity(&pass.batch));
        }
        losses.push(pass.loss);
        accumulate(encoder, &pass.param_grads, scale);
        pert.ascend(&pass.delta_grads);
    }
    let (alignment, uniformity) = metrics.expect("at least one step");
    Ok(InnerOutcome {
        losses,
        alignment,
        uniformity,
        skipped: pert.skipped - skipped_before,
    })
}
