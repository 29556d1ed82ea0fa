//! GPS-style graph transformer, its parameter store and the projector into the
//! text embedding space.
//!
//! Each layer runs two branches over the node states `h`:
//!
//! * local: `h W_self + (D^-1 A h) W_nbr + b` (degree-normalized neighbor mean)
//! * global: multi-head self-attention over all nodes of the subgraph
//!
//! The branches are summed with the residual and layer-normalized, followed by
//! a two-layer GELU feed-forward block with its own residual and norm. Node
//! features are concatenated with the positional encodings and projected to the
//! hidden size at the input; final node states are mean-pooled, projected to
//! the text dimension and L2-normalized.

use indexmap::IndexMap;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::tag::EgoSubgraph;
use crate::tape::{Gradients, Tape, Var};
use crate::text::Embedding;

/// Feed-forward expansion factor.
pub const FFN_MULT: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScalePreset {
    Small,
    Medium,
    Base,
    Large,
}

impl ScalePreset {
    /// `(layers, hidden)` per preset.
    pub fn dims(self) -> (usize, usize) {
        match self {
            ScalePreset::Small => (4, 512),
            ScalePreset::Medium => (8, 768),
            ScalePreset::Base => (12, 1024),
            ScalePreset::Large => (16, 1024),
        }
    }
}

impl std::str::FromStr for ScalePreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "small" => Ok(ScalePreset::Small),
            "medium" => Ok(ScalePreset::Medium),
            "base" => Ok(ScalePreset::Base),
            "large" => Ok(ScalePreset::Large),
            other => Err(Error::Validation(format!("unknown scale preset `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GraphEncoderConfig {
    pub layers: usize,
    pub hidden: usize,
    pub heads: usize,
    /// Positional encoding width K.
    pub pe_dim: usize,
    /// Text embedding width (input features and projector output).
    pub d_text: usize,
    pub preset: Option<ScalePreset>,
}

impl Default for GraphEncoderConfig {
    fn default() -> Self {
        Self {
            layers: 2,
            hidden: 32,
            heads: 4,
            pe_dim: 16,
            d_text: 16,
            preset: None,
        }
    }
}

impl GraphEncoderConfig {
    /// Sizes from a scale preset paired with a 384-wide text tower.
    pub fn preset(preset: ScalePreset) -> Self {
        let (layers, hidden) = preset.dims();
        Self {
            layers,
            hidden,
            heads: 8,
            pe_dim: 16,
            d_text: 384,
            preset: Some(preset),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 || self.hidden == 0 || self.heads == 0 || self.d_text == 0 {
            return Err(Error::Validation("encoder sizes must be positive".into()));
        }
        if !self.hidden.is_multiple_of(self.heads) {
            return Err(Error::Validation(format!(
                "hidden size {} not divisible by {} heads",
                self.hidden, self.heads
            )));
        }
        Ok(())
    }

    /// Every trainable tensor with its shape, in storage order.
    pub fn param_shapes(&self) -> Vec<(String, (usize, usize))> {
        let d = self.hidden;
        let f = FFN_MULT * d;
        let mut out = vec![
            ("input.weight".to_string(), (self.d_text + self.pe_dim, d)),
            ("input.bias".to_string(), (1, d)),
        ];
        for l in 0..self.layers {
            let p = |s: &str| format!("layers.{l}.{s}");
            out.extend([
                (p("local.self_weight"), (d, d)),
                (p("local.neighbor_weight"), (d, d)),
                (p("local.bias"), (1, d)),
                (p("attn.q.weight"), (d, d)),
                (p("attn.q.bias"), (1, d)),
                (p("attn.k.weight"), (d, d)),
                (p("attn.k.bias"), (1, d)),
                (p("attn.v.weight"), (d, d)),
                (p("attn.v.bias"), (1, d)),
                (p("attn.out.weight"), (d, d)),
                (p("attn.out.bias"), (1, d)),
                (p("norm1.gamma"), (1, d)),
                (p("norm1.beta"), (1, d)),
                (p("ffn.fc1.weight"), (d, f)),
                (p("ffn.fc1.bias"), (1, f)),
                (p("ffn.fc2.weight"), (f, d)),
                (p("ffn.fc2.bias"), (1, d)),
                (p("norm2.gamma"), (1, d)),
                (p("norm2.beta"), (1, d)),
            ]);
        }
        out.push(("projector.weight".to_string(), (d, self.d_text)));
        out.push(("projector.bias".to_string(), (1, self.d_text)));
        out
    }

    /// Trainable parameter count, from shapes alone.
    pub fn param_count(&self) -> usize {
        self.param_shapes().iter().map(|(_, (r, c))| r * c).sum()
    }
}

/// Tensor shapes of the frozen 6-layer, 384-wide MiniLM sentence encoder
/// (BERT layout, 30522-token vocabulary, 512 positions, 1536-wide FFN).
pub fn minilm_l6_shapes() -> Vec<(String, (usize, usize))> {
    let (vocab, hidden, positions, types, ffn, layers) = (30522, 384, 512, 2, 1536, 6);
    let mut out = vec![
        ("embeddings.word".to_string(), (vocab, hidden)),
        ("embeddings.position".to_string(), (positions, hidden)),
        ("embeddings.token_type".to_string(), (types, hidden)),
        ("embeddings.norm.gamma".to_string(), (1, hidden)),
        ("embeddings.norm.beta".to_string(), (1, hidden)),
    ];
    for l in 0..layers {
        let p = |s: &str| format!("encoder.{l}.{s}");
        for w in ["query", "key", "value", "attn_out"] {
            out.push((p(&format!("{w}.weight")), (hidden, hidden)));
            out.push((p(&format!("{w}.bias")), (1, hidden)));
        }
        out.extend([
            (p("attn_norm.gamma"), (1, hidden)),
            (p("attn_norm.beta"), (1, hidden)),
            (p("intermediate.weight"), (hidden, ffn)),
            (p("intermediate.bias"), (1, ffn)),
            (p("output.weight"), (ffn, hidden)),
            (p("output.bias"), (1, hidden)),
            (p("out_norm.gamma"), (1, hidden)),
            (p("out_norm.beta"), (1, hidden)),
        ]);
    }
    out.push(("pooler.weight".to_string(), (hidden, hidden)));
    out.push(("pooler.bias".to_string(), (1, hidden)));
    out
}

/// Parameters of the graph tower plus the frozen 384-wide text tower.
pub fn two_tower_param_count(cfg: &GraphEncoderConfig) -> usize {
    cfg.param_count() + minilm_l6_shapes().iter().map(|(_, (r, c))| r * c).sum::<usize>()
}

/// A trainable tensor and its gradient slot.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub value: Array2<f64>,
    pub grad: Array2<f64>,
}

/// Named tensors in a fixed order, each with a gradient slot of equal shape.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore {
    params: IndexMap<String, Param>,
}

/// Tape handles of every parameter, aligned with the store order.
#[derive(Debug, Clone)]
pub struct ParamVars(Vec<Var>);

impl ParamVars {
    pub fn get(&self, idx: usize) -> Var {
        self.0[idx]
    }
}

impl ParamStore {
    pub fn insert(&mut self, name: impl Into<String>, value: Array2<f64>) {
        let grad = Array2::zeros(value.dim());
        self.params.insert(name.into(), Param { value, grad });
    }

    pub fn get(&self, name: &str) -> Option<&Param> {
        self.params.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Param> {
        self.params.get_mut(name)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.params.get_index_of(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Param)> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Param)> {
        self.params.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn param_count(&self) -> usize {
        self.params.values().map(|p| p.value.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        for p in self.params.values_mut() {
            p.grad.fill(0.0);
        }
    }

    /// Records every parameter as a differentiable leaf.
    pub fn register(&self, tape: &mut Tape) -> ParamVars {
        ParamVars(self.params.values().map(|p| tape.leaf(p.value.clone())).collect())
    }

    /// Records every parameter as a constant (frozen forward).
    pub fn constants(&self, tape: &mut Tape) -> ParamVars {
        ParamVars(self.params.values().map(|p| tape.constant(p.value.clone())).collect())
    }

    /// Adds `scale * dL/dθ` into the gradient slots.
    pub fn accumulate(&mut self, grads: &Gradients, vars: &ParamVars, scale: f64) {
        for (p, &v) in self.params.values_mut().zip(&vars.0) {
            if let Some(g) = grads.get(v) {
                p.grad.scaled_add(scale, g);
            }
        }
    }

    /// SHA-256 over names, shapes and values.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for (name, p) in &self.params {
            h.update(name.as_bytes());
            h.update((p.value.nrows() as u64).to_le_bytes());
            h.update((p.value.ncols() as u64).to_le_bytes());
            for x in p.value.iter() {
                h.update(x.to_le_bytes());
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Handles to the intermediate results of one subgraph's forward pass.
#[derive(Debug, Clone, Copy)]
pub struct GraphForward {
    /// `1 x d_text` before normalization.
    pub projected: Var,
    /// `1 x d_text`, unit norm.
    pub output: Var,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphEncoder {
    pub config: GraphEncoderConfig,
    pub params: ParamStore,
}

impl GraphEncoder {
    /// Uniform `±1/sqrt(fan_in)` weights and biases, unit gains, zero shifts.
    pub fn init(config: GraphEncoderConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::default();
        let mut fan_in = 1;
        for (name, (r, c)) in config.param_shapes() {
            let value = if name.ends_with(".gamma") {
                Array2::ones((r, c))
            } else if name.ends_with(".beta") {
                Array2::zeros((r, c))
            } else {
                if name.ends_with(".weight") || name.ends_with("_weight") {
                    fan_in = r;
                }
                let bound = 1.0 / (fan_in as f64).sqrt();
                Array2::from_shape_fn((r, c), |_| rng.random_range(-bound..bound))
            };
            params.insert(name, value);
        }
        Ok(Self { config, params })
    }

    fn check_inputs(&self, sub: &EgoSubgraph) -> Result<()> {
        if sub.num_nodes() == 0 {
            return Err(Error::Validation("empty subgraph".into()));
        }
        if sub.features.ncols() != self.config.d_text {
            return Err(Error::shape("features", self.config.d_text, sub.features.ncols()));
        }
        if sub.positional.ncols() != self.config.pe_dim {
            return Err(Error::shape("positional", self.config.pe_dim, sub.positional.ncols()));
        }
        if sub.positional.nrows() != sub.num_nodes() || sub.features.nrows() != sub.num_nodes() {
            return Err(Error::shape("features", sub.num_nodes(), sub.features.nrows()));
        }
        Ok(())
    }

    /// Records the forward pass of one subgraph. `features` is the (possibly
    /// perturbed) `n x d_text` node feature matrix already on the tape.
    pub fn forward(&self, tape: &mut Tape, pv: &ParamVars, sub: &EgoSubgraph, features: Var) -> Result<GraphForward> {
        self.check_inputs(sub)?;
        if tape.shape(features) != sub.features.dim() {
            return Err(Error::shape(
                "features",
                format!("{:?}", sub.features.dim()),
                format!("{:?}", tape.shape(features)),
            ));
        }
        let p = |name: &str| -> Var {
            pv.get(self.params.index_of(name).unwrap_or_else(|| panic!("missing parameter {name}")))
        };
        let n = sub.num_nodes();
        let d = self.config.hidden;
        let heads = self.config.heads;
        let dh = d / heads;

        let mut agg = Array2::<f64>::zeros((n, n));
        for (u, nbrs) in sub.adjacency().iter().enumerate() {
            for &v in nbrs {
                agg[[u, v]] += 1.0 / nbrs.len() as f64;
            }
        }
        let agg = tape.constant(agg);

        let pe = tape.constant(sub.positional.clone());
        let x = tape.concat_cols(&[features, pe]);
        let x = tape.matmul(x, p("input.weight"));
        let mut h = tape.add_row(x, p("input.bias"));

        let linear = |tape: &mut Tape, x: Var, w: &str, b: &str| {
            let y = tape.matmul(x, p(w));
            tape.add_row(y, p(b))
        };

        for l in 0..self.config.layers {
            let name = |s: &str| format!("layers.{l}.{s}");

            let self_part = tape.matmul(h, p(&name("local.self_weight")));
            let nbr_mean = tape.matmul(agg, h);
            let nbr_part = tape.matmul(nbr_mean, p(&name("local.neighbor_weight")));
            let local = tape.add(self_part, nbr_part);
            let local = tape.add_row(local, p(&name("local.bias")));

            let q = linear(tape, h, &name("attn.q.weight"), &name("attn.q.bias"));
            let k = linear(tape, h, &name("attn.k.weight"), &name("attn.k.bias"));
            let v = linear(tape, h, &name("attn.v.weight"), &name("attn.v.bias"));
            let mut head_outputs = Vec::with_capacity(heads);
            for head in 0..heads {
                let (lo, hi) = (head * dh, (head + 1) * dh);
                let qh = tape.slice_cols(q, lo, hi);
                let kh = tape.slice_cols(k, lo, hi);
                let vh = tape.slice_cols(v, lo, hi);
                let kt = tape.transpose(kh);
                let scores = tape.matmul(qh, kt);
                let scores = tape.scale(scores, 1.0 / (dh as f64).sqrt());
                let attn = tape.softmax_rows(scores);
                head_outputs.push(tape.matmul(attn, vh));
            }
            let merged = tape.concat_cols(&head_outputs);
            let global = linear(tape, merged, &name("attn.out.weight"), &name("attn.out.bias"));

            let sum = tape.add(h, local);
            let sum = tape.add(sum, global);
            let normed = tape.standardize_rows(sum);
            let normed = tape.mul_row(normed, p(&name("norm1.gamma")));
            let h1 = tape.add_row(normed, p(&name("norm1.beta")));

            let ff = linear(tape, h1, &name("ffn.fc1.weight"), &name("ffn.fc1.bias"));
            let ff = tape.gelu(ff);
            let ff = linear(tape, ff, &name("ffn.fc2.weight"), &name("ffn.fc2.bias"));
            let sum = tape.add(h1, ff);
            let normed = tape.standardize_rows(sum);
            let normed = tape.mul_row(normed, p(&name("norm2.gamma")));
            h = tape.add_row(normed, p(&name("norm2.beta")));
        }

        let pooled = tape.mean_rows(h);
        let projected = linear(tape, pooled, "projector.weight", "projector.bias");
        let output = tape.l2_normalize_rows(projected);
        Ok(GraphForward { projected, output })
    }

    /// Encodes with an optional `1 x d_text` prompt row added to every node.
    pub fn encode_with_prompt(&self, sub: &EgoSubgraph, prompt: Option<&[f64]>) -> Result<Embedding> {
        let mut tape = Tape::new();
        let pv = self.params.constants(&mut tape);
        let mut x = sub.features.clone();
        if let Some(sigma) = prompt {
            if sigma.len() != x.ncols() {
                return Err(Error::shape("prompt", x.ncols(), sigma.len()));
            }
            x += &ndarray::ArrayView1::from(sigma);
        }
        let x = tape.constant(x);
        let fwd = self.forward(&mut tape, &pv, sub, x)?;
        Ok(Embedding {
            values: tape.value(fwd.output).row(0).to_vec(),
            normalized: true,
        })
    }

    pub fn encode(&self, sub: &EgoSubgraph) -> Result<Embedding> {
        self.encode_with_prompt(sub, None)
    }
}
