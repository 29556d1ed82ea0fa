//! Few-shot graph prompt tuning: a single shared feature offset `sigma` is
//! learned with a supervised contrastive loss while both towers stay frozen.

use ndarray::{s, Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adapt::labels::LabelPromptSet;
use crate::adapt::zero_shot::labeled_nodes;
use crate::error::{Error, Result};
use crate::model::GraphEncoder;
use crate::pretrain::optim::{AdamW, AdamWConfig};
use crate::tag::{EgoSubgraph, TextAttributedGraph};
use crate::tape::Tape;

/// `k` training nodes per class; every other labeled node is a test node.
#[derive(Debug, Clone, PartialEq)]
pub struct FewShotSplit {
    pub shots: usize,
    pub seed: u64,
    /// `train[c]` holds the training node ids of class `c`.
    pub train: Vec<Vec<usize>>,
    pub test: Vec<usize>,
}

impl FewShotSplit {
    pub fn new(graph: &TextAttributedGraph, labels: &LabelPromptSet, shots: usize, seed: u64) -> Result<Self> {
        if shots == 0 {
            return Err(Error::Validation("prompt tuning needs at least one shot; use zero-shot evaluation".into()));
        }
        let nodes = labeled_nodes(graph, labels)?;
        let mut by_class = vec![Vec::new(); labels.len()];
        for &(v, y) in &nodes {
            by_class[y].push(v);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut train = Vec::with_capacity(by_class.len());
        let mut test = Vec::new();
        for (c, mut members) in by_class.into_iter().enumerate() {
            if members.len() <= shots {
                return Err(Error::Validation(format!(
                    "class {c} has {} labeled nodes, need more than {shots}",
                    members.len()
                )));
            }
            members.shuffle(&mut rng);
            test.extend_from_slice(&members[shots..]);
            members.truncate(shots);
            train.push(members);
        }
        test.sort_unstable();
        Ok(Self { shots, seed, train, test })
    }

    /// `(node, class)` for every training node, class-major.
    pub fn train_pairs(&self) -> Vec<(usize, usize)> {
        self.train
            .iter()
            .enumerate()
            .flat_map(|(c, ids)| ids.iter().map(move |&v| (v, c)))
            .collect()
    }
}

/// Supervised contrastive loss of unit rows `h` (labels `y`) against the label
/// sentence embeddings `u`. Each anchor's candidates are every class sentence
/// and every other subgraph; its positives are its own class sentence and the
/// other subgraphs of its class. Returns the loss and `dL/dh`.
pub fn scl_loss(h: &Array2<f64>, y: &[usize], u: &Array2<f64>, temperature: f64) -> Result<(f64, Array2<f64>)> {
    let (n, d) = h.dim();
    let k = u.nrows();
    if n == 0 || y.len() != n {
        return Err(Error::Validation("SCL needs a nonempty, labeled batch".into()));
    }
    if u.ncols() != d {
        return Err(Error::shape("label embeddings", d, u.ncols()));
    }
    if let Some(&bad) = y.iter().find(|&&c| c >= k) {
        return Err(Error::Validation(format!("label {bad} has no sentence embedding")));
    }
    if temperature.is_nan() || temperature <= 0.0 {
        return Err(Error::Validation(format!("temperature must be positive, got {temperature}")));
    }
    let cands = ndarray::concatenate(Axis(0), &[u.view(), h.view()]).expect("same width");
    let logits = h.dot(&cands.t()) / temperature;
    let mut g = Array2::<f64>::zeros((n, k + n));
    let mut loss = 0.0;
    for i in 0..n {
        let row = logits.row(i);
        let valid = |a: usize| a != k + i;
        let max = (0..k + n).filter(|&a| valid(a)).map(|a| row[a]).fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = (0..k + n).filter(|&a| valid(a)).map(|a| (row[a] - max).exp()).sum();
        let lse = max + z.ln();
        let positives: Vec<usize> = std::iter::once(y[i])
            .chain((0..n).filter(|&j| j != i && y[j] == y[i]).map(|j| k + j))
            .collect();
        let w = 1.0 / positives.len() as f64;
        for &p in &positives {
            loss -= w * (row[p] - lse) / n as f64;
            g[[i, p]] -= w / n as f64;
        }
        for a in (0..k + n).filter(|&a| valid(a)) {
            g[[i, a]] += (row[a] - lse).exp() / n as f64;
        }
    }
    // logits_ia = h_i . c_a / T, and c_{k+j} = h_j.
    let mut grad = g.dot(&cands) / temperature;
    grad += &(g.slice(s![.., k..]).t().dot(h) / temperature);
    Ok((loss, grad))
}

/// SCL of the prompted embeddings and its gradient w.r.t. `sigma`.
pub fn prompt_objective(
    encoder: &GraphEncoder,
    subs: &[EgoSubgraph],
    y: &[usize],
    labels: &LabelPromptSet,
    sigma: &Array1<f64>,
    temperature: f64,
) -> Result<(f64, Array1<f64>)> {
    let d = encoder.config.d_text;
    if sigma.len() != d {
        return Err(Error::shape("prompt", d, sigma.len()));
    }
    let passes = subs
        .par_iter()
        .map(|sub| {
            let mut tape = Tape::new();
            let pv = encoder.params.constants(&mut tape);
            let s = tape.leaf(sigma.clone().insert_axis(Axis(0)));
            let x = tape.constant(sub.features.clone());
            let x = tape.add_row(x, s);
            let fwd = encoder.forward(&mut tape, &pv, sub, x)?;
            Ok((tape, s, fwd.output))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut h = Array2::zeros((subs.len(), d));
    for (i, (tape, _, out)) in passes.iter().enumerate() {
        h.row_mut(i).assign(&tape.value(*out).row(0));
    }
    let (loss, grad_h) = scl_loss(&h, y, &labels.embeddings, temperature)?;
    let grads = passes
        .par_iter()
        .enumerate()
        .map(|(i, (tape, s, out))| {
            let g = tape.backward(*out, grad_h.row(i).to_owned().insert_axis(Axis(0)))?;
            Ok(g.get(*s).map(|g| g.row(0).to_owned()).unwrap_or_else(|| Array1::zeros(d)))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut grad = Array1::zeros(d);
    for g in grads {
        grad += &g;
    }
    Ok((loss, grad))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PromptTuneConfig {
    pub epochs: usize,
    pub temperature: f64,
    pub optimizer: AdamWConfig,
}

impl Default for PromptTuneConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            temperature: 0.1,
            optimizer: AdamWConfig {
                lr: 1e-4,
                weight_decay: 1e-5,
                ..Default::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptTuneOutcome {
    pub sigma: Vec<f64>,
    /// Full-batch loss before each update.
    pub losses: Vec<f64>,
}

/// Learns `sigma` (initialized at zero) on the training subgraphs; the
/// encoder is only read.
pub fn prompt_tune(
    encoder: &GraphEncoder,
    subs: &[EgoSubgraph],
    y: &[usize],
    labels: &LabelPromptSet,
    cfg: &PromptTuneConfig,
) -> Result<PromptTuneOutcome> {
    if subs.is_empty() {
        return Err(Error::Validation("prompt tuning needs at least one shot".into()));
    }
    if cfg.epochs == 0 {
        return Err(Error::Validation("prompt tuning needs at least one epoch".into()));
    }
    let d = encoder.config.d_text;
    let mut sigma = Array2::<f64>::zeros((1, d));
    let mut opt = AdamW::new(cfg.optimizer, [(1, d)]);
    let mut losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let (loss, grad) = prompt_objective(encoder, subs, y, labels, &sigma.row(0).to_owned(), cfg.temperature)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite {
                step: epoch,
                detail: "prompt tuning loss".into(),
            });
        }
        losses.push(loss);
        let grad = grad.insert_axis(Axis(0));
        opt.update([(&mut sigma, &grad)]);
    }
    Ok(PromptTuneOutcome {
        sigma: sigma.row(0).to_vec(),
        losses,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn unit_rows(m: Array2<f64>) -> Array2<f64> {
        let mut m = m;
        for mut r in m.rows_mut() {
            let n = r.dot(&r).sqrt();
            r /= n;
        }
        m
    }

    #[test]
    fn scl_gradient_matches_central_differences() {
        let h = unit_rows(array![[0.3, -0.2, 0.9], [0.5, 0.5, -0.1], [-0.7, 0.1, 0.2], [0.1, 0.9, 0.3]]);
        let u = unit_rows(array![[1.0, 0.2, 0.0], [0.0, -0.4, 1.0]]);
        let y = [0, 1, 0, 1];
        let (_, grad) = scl_loss(&h, &y, &u, 0.5).unwrap();
        let eps = 1e-6;
        for idx in 0..h.len() {
            let (r, c) = (idx / 3, idx % 3);
            let at = |delta: f64| {
                let mut m = h.clone();
                m[[r, c]] += delta;
                scl_loss(&m, &y, &u, 0.5).unwrap().0
            };
            let numeric = (at(eps) - at(-eps)) / (2.0 * eps);
            assert!((numeric - grad[[r, c]]).abs() < 1e-7, "{numeric} vs {}", grad[[r, c]]);
        }
    }

    #[test]
    fn scl_single_anchor_reduces_to_softmax_over_sentences() {
        let h = array![[1.0, 0.0]];
        let u = array![[1.0, 0.0], [0.0, 1.0]];
        let (loss, _) = scl_loss(&h, &[0], &u, 1.0).unwrap();
        assert!((loss - (1.0 + (-1.0f64).exp()).ln()).abs() < 1e-15);
    }

    #[test]
    fn scl_rejects_unknown_label() {
        let h = array![[1.0, 0.0]];
        let u = array![[1.0, 0.0]];
        assert!(scl_loss(&h, &[1], &u, 0.1).is_err());
    }
}
