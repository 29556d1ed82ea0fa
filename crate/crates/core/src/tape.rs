//! Minimal reverse-mode automatic differentiation over dense `f64` matrices.
//!
//! A [`Tape`] records every operation of a forward pass. [`Tape::backward`]
//! walks the record in reverse and returns the vector-Jacobian product for
//! every node that depends on a leaf created with `requires_grad`.

use std::sync::atomic::{AtomicU64, Ordering};

use ndarray::{s, Array2, Axis};

use crate::error::{Error, Result};

static NEXT_TAPE: AtomicU64 = AtomicU64::new(1);

const LAYER_NORM_EPS: f64 = 1e-5;

/// Handle to a value recorded on a tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var {
    tape: u64,
    index: usize,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    /// `a + row` with `row` broadcast over rows.
    AddRow(Var, Var),
    /// `a * row` elementwise with `row` broadcast over rows.
    MulRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Gelu(Var),
    SoftmaxRows(Var),
    /// Per-row standardization (layer norm without affine).
    Standardize(Var),
    L2NormalizeRows(Var),
    Transpose(Var),
    SliceCols(Var, usize, usize),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    MeanRows(Var),
    Sum(Var),
}

#[derive(Debug)]
struct Node {
    value: Array2<f64>,
    op: Op,
    requires_grad: bool,
}

/// Forward record.
#[derive(Debug)]
pub struct Tape {
    id: u64,
    nodes: Vec<Node>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients produced by [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients {
    tape: u64,
    grads: Vec<Option<Array2<f64>>>,
}

impl Gradients {
    /// Gradient of the seeded output w.r.t. `var`; `None` when `var` does not
    /// influence the output or does not require gradients.
    pub fn get(&self, var: Var) -> Option<&Array2<f64>> {
        if var.tape != self.tape {
            return None;
        }
        self.grads.get(var.index).and_then(Option::as_ref)
    }

    pub fn take(&mut self, var: Var) -> Option<Array2<f64>> {
        if var.tape != self.tape {
            return None;
        }
        self.grads.get_mut(var.index).and_then(Option::take)
    }
}

fn gelu(x: f64) -> f64 {
    const C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
    0.5 * x * (1.0 + (C * (x + 0.044715 * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    const C: f64 = 0.797_884_560_802_865_4;
    let inner = C * (x + 0.044715 * x * x * x);
    let t = inner.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * C * (1.0 + 3.0 * 0.044715 * x * x)
}

impl Tape {
    pub fn new() -> Self {
        Self {
            id: NEXT_TAPE.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Array2<f64>, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var {
            tape: self.id,
            index: self.nodes.len() - 1,
        }
    }

    fn node(&self, v: Var) -> &Node {
        assert_eq!(v.tape, self.id, "variable belongs to another tape");
        &self.nodes[v.index]
    }

    fn needs(&self, vars: &[Var]) -> bool {
        vars.iter().any(|&v| self.node(v).requires_grad)
    }

    /// Trainable or differentiable input.
    pub fn leaf(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn constant(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.node(v).value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.node(v).value.dim()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).dot(self.value(b));
        let rg = self.needs(&[a, b]);
        self.push(value, Op::MatMul(a, b), rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) + self.value(b);
        let rg = self.needs(&[a, b]);
        self.push(value, Op::Add(a, b), rg)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) * self.value(b);
        let rg = self.needs(&[a, b]);
        self.push(value, Op::Mul(a, b), rg)
    }

    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        assert_eq!(self.shape(row).0, 1, "add_row expects a 1 x n row");
        let value = self.value(a) + self.value(row);
        let rg = self.needs(&[a, row]);
        self.push(value, Op::AddRow(a, row), rg)
    }

    pub fn mul_row(&mut self, a: Var, row: Var) -> Var {
        assert_eq!(self.shape(row).0, 1, "mul_row expects a 1 x n row");
        let value = self.value(a) * self.value(row);
        let rg = self.needs(&[a, row]);
        self.push(value, Op::MulRow(a, row), rg)
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let value = self.value(a) * factor;
        let rg = self.needs(&[a]);
        self.push(value, Op::Scale(a, factor), rg)
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(gelu);
        let rg = self.needs(&[a]);
        self.push(value, Op::Gelu(a), rg)
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let mut value = self.value(a).clone();
        for mut row in value.rows_mut() {
            let max = row.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
            row.mapv_inplace(|x| (x - max).exp());
            let sum = row.sum();
            row /= sum;
        }
        let rg = self.needs(&[a]);
        self.push(value, Op::SoftmaxRows(a), rg)
    }

    pub fn standardize_rows(&mut self, a: Var) -> Var {
        let mut value = self.value(a).clone();
        for mut row in value.rows_mut() {
            let n = row.len() as f64;
            let mean = row.sum() / n;
            let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
            let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            row.mapv_inplace(|x| (x - mean) * inv);
        }
        let rg = self.needs(&[a]);
        self.push(value, Op::Standardize(a), rg)
    }

    pub fn l2_normalize_rows(&mut self, a: Var) -> Var {
        let mut value = self.value(a).clone();
        for mut row in value.rows_mut() {
            let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                row /= norm;
            }
        }
        let rg = self.needs(&[a]);
        self.push(value, Op::L2NormalizeRows(a), rg)
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let value = self.value(a).t().to_owned();
        let rg = self.needs(&[a]);
        self.push(value, Op::Transpose(a), rg)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Var {
        let value = self.value(a).slice(s![.., start..end]).to_owned();
        let rg = self.needs(&[a]);
        self.push(value, Op::SliceCols(a, start, end), rg)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let value = ndarray::concatenate(Axis(1), &views).expect("concat_cols: row counts differ");
        let rg = self.needs(parts);
        self.push(value, Op::ConcatCols(parts.to_vec()), rg)
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let value = ndarray::concatenate(Axis(0), &views).expect("concat_rows: column counts differ");
        let rg = self.needs(parts);
        self.push(value, Op::ConcatRows(parts.to_vec()), rg)
    }

    /// `1 x n` mean over rows.
    pub fn mean_rows(&mut self, a: Var) -> Var {
        let value = self
            .value(a)
            .mean_axis(Axis(0))
            .expect("mean over zero rows")
            .insert_axis(Axis(0));
        let rg = self.needs(&[a]);
        self.push(value, Op::MeanRows(a), rg)
    }

    /// `1 x 1` sum of all entries.
    pub fn sum(&mut self, a: Var) -> Var {
        let value = Array2::from_elem((1, 1), self.value(a).sum());
        let rg = self.needs(&[a]);
        self.push(value, Op::Sum(a), rg)
    }

    /// Propagates `seed` (the gradient of some scalar w.r.t. `output`) back
    /// through the record.
    pub fn backward(&self, output: Var, seed: Array2<f64>) -> Result<Gradients> {
        if output.tape != self.id || output.index >= self.nodes.len() {
            return Err(Error::Tape("backward called on a variable not recorded on this tape".into()));
        }
        if seed.dim() != self.shape(output) {
            return Err(Error::shape(
                "backward seed",
                format!("{:?}", self.shape(output)),
                format!("{:?}", seed.dim()),
            ));
        }
        let mut grads: Vec<Option<Array2<f64>>> = vec![None; output.index + 1];
        grads[output.index] = Some(seed);

        for idx in (0..=output.index).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                grads[idx] = None;
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(node, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(Gradients {
            tape: self.id,
            grads,
        })
    }

    fn propagate(&self, node: &Node, g: &Array2<f64>, grads: &mut [Option<Array2<f64>>]) {
        let mut acc = |v: Var, contrib: Array2<f64>| {
            if !self.nodes[v.index].requires_grad {
                return;
            }
            match &mut grads[v.index] {
                Some(existing) => *existing += &contrib,
                slot @ None => *slot = Some(contrib),
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                if self.nodes[a.index].requires_grad {
                    acc(*a, g.dot(&bv.t()));
                }
                if self.nodes[b.index].requires_grad {
                    acc(*b, av.t().dot(g));
                }
            }
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::Mul(a, b) => {
                acc(*a, g * self.value(*b));
                acc(*b, g * self.value(*a));
            }
            Op::AddRow(a, row) => {
                acc(*a, g.clone());
                acc(*row, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
            }
            Op::MulRow(a, row) => {
                acc(*a, g * self.value(*row));
                acc(*row, (g * self.value(*a)).sum_axis(Axis(0)).insert_axis(Axis(0)));
            }
            Op::Scale(a, f) => acc(*a, g * *f),
            Op::Gelu(a) => {
                let x = self.value(*a);
                let mut d = x.mapv(gelu_grad);
                d *= g;
                acc(*a, d);
            }
            Op::SoftmaxRows(a) => {
                let y = &node.value;
                let mut d = Array2::zeros(y.dim());
                for ((mut drow, yrow), grow) in d.rows_mut().into_iter().zip(y.rows()).zip(g.rows()) {
                    let dot: f64 = yrow.iter().zip(grow.iter()).map(|(y, g)| y * g).sum();
                    for ((dv, yv), gv) in drow.iter_mut().zip(yrow.iter()).zip(grow.iter()) {
                        *dv = yv * (gv - dot);
                    }
                }
                acc(*a, d);
            }
            Op::Standardize(a) => {
                let x = self.value(*a);
                let y = &node.value;
                let mut d = Array2::zeros(y.dim());
                for (((mut drow, xrow), yrow), grow) in d
                    .rows_mut()
                    .into_iter()
                    .zip(x.rows())
                    .zip(y.rows())
                    .zip(g.rows())
                {
                    let n = xrow.len() as f64;
                    let mean = xrow.sum() / n;
                    let var = xrow.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
                    let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
                    let gmean = grow.sum() / n;
                    let gy: f64 = grow.iter().zip(yrow.iter()).map(|(g, y)| g * y).sum::<f64>() / n;
                    for ((dv, gv), yv) in drow.iter_mut().zip(grow.iter()).zip(yrow.iter()) {
                        *dv = inv * (gv - gmean - yv * gy);
                    }
                }
                acc(*a, d);
            }
            Op::L2NormalizeRows(a) => {
                let x = self.value(*a);
                let y = &node.value;
                let mut d = Array2::zeros(y.dim());
                for (((mut drow, xrow), yrow), grow) in d
                    .rows_mut()
                    .into_iter()
                    .zip(x.rows())
                    .zip(y.rows())
                    .zip(g.rows())
                {
                    let norm = xrow.iter().map(|v| v * v).sum::<f64>().sqrt();
                    if norm == 0.0 {
                        continue;
                    }
                    let dot: f64 = yrow.iter().zip(grow.iter()).map(|(y, g)| y * g).sum();
                    for ((dv, gv), yv) in drow.iter_mut().zip(grow.iter()).zip(yrow.iter()) {
                        *dv = (gv - yv * dot) / norm;
                    }
                }
                acc(*a, d);
            }
            Op::Transpose(a) => acc(*a, g.t().to_owned()),
            Op::SliceCols(a, start, end) => {
                let mut d = Array2::zeros(self.shape(*a));
                d.slice_mut(s![.., *start..*end]).assign(g);
                acc(*a, d);
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let w = self.shape(p).1;
                    acc(p, g.slice(s![.., offset..offset + w]).to_owned());
                    offset += w;
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let h = self.shape(p).0;
                    acc(p, g.slice(s![offset..offset + h, ..]).to_owned());
                    offset += h;
                }
            }
            Op::MeanRows(a) => {
                let (rows, cols) = self.shape(*a);
                let d = g.broadcast((rows, cols)).expect("row broadcast").to_owned() / rows as f64;
                acc(*a, d);
            }
            Op::Sum(a) => {
                let d = Array2::from_elem(self.shape(*a), g[[0, 0]]);
                acc(*a, d);
            }
        }
    }
}
