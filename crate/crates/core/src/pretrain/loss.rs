//! Graph-summary contrastive objective on squared distances.
//!
//! Similarities are `s_ij = -||h_i - u_j||^2 / T`. For unit rows this equals
//! `(2 cos(h_i, u_j) - 2) / T`, so the loss is at once the distance form and
//! the usual cosine InfoNCE shifted by a constant.

use ndarray::{Array1, Array2, Axis};

use crate::error::{Error, Result};

/// Paired graph (`h`) and summary (`u`) embeddings; row `i` of each match.
#[derive(Debug, Clone, PartialEq)]
pub struct ContrastiveBatch {
    pub h: Array2<f64>,
    pub u: Array2<f64>,
}

impl ContrastiveBatch {
    pub fn new(h: Array2<f64>, u: Array2<f64>) -> Result<Self> {
        if h.dim() != u.dim() {
            return Err(Error::shape("contrastive batch", format!("{:?}", h.dim()), format!("{:?}", u.dim())));
        }
        if h.nrows() == 0 {
            return Err(Error::Validation("contrastive batch is empty".into()));
        }
        Ok(Self { h, u })
    }

    pub fn len(&self) -> usize {
        self.h.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.h.nrows() == 0
    }

    pub fn is_normalized(&self, tol: f64) -> bool {
        [&self.h, &self.u]
            .iter()
            .all(|m| m.rows().into_iter().all(|r| (r.dot(&r).sqrt() - 1.0).abs() <= tol))
    }
}

#[derive(Debug, Clone)]
pub struct ContrastiveOutput {
    pub loss: f64,
    pub grad_h: Array2<f64>,
    pub grad_u: Array2<f64>,
}

/// `||a - b||^2`.
pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn distance_matrix(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    let mut d = Array2::zeros((a.nrows(), b.nrows()));
    for (i, ai) in a.rows().into_iter().enumerate() {
        for (j, bj) in b.rows().into_iter().enumerate() {
            d[[i, j]] = ai.iter().zip(bj.iter()).map(|(x, y)| (x - y) * (x - y)).sum();
        }
    }
    d
}

fn logsumexp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    max + xs.map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Symmetric cross-entropy over the `B x B` similarity matrix, with gradients
/// w.r.t. both sides.
pub fn contrastive_loss(batch: &ContrastiveBatch, temperature: f64) -> Result<ContrastiveOutput> {
    if temperature.is_nan() || temperature <= 0.0 {
        return Err(Error::Validation(format!("temperature must be positive, got {temperature}")));
    }
    let b = batch.len();
    if b == 0 {
        return Err(Error::Validation("contrastive batch is empty".into()));
    }
    let sim = distance_matrix(&batch.h, &batch.u).mapv(|d| -d / temperature);

    let mut loss = 0.0;
    // dL/ds_ij
    let mut g = Array2::<f64>::zeros((b, b));
    let half = 0.5 / b as f64;
    for i in 0..b {
        let row = sim.row(i);
        let lse = logsumexp(row.iter().copied());
        loss += half * (lse - sim[[i, i]]);
        for j in 0..b {
            g[[i, j]] += half * ((sim[[i, j]] - lse).exp() - if i == j { 1.0 } else { 0.0 });
        }
    }
    for j in 0..b {
        let col = sim.column(j);
        let lse = logsumexp(col.iter().copied());
        loss += half * (lse - sim[[j, j]]);
        for i in 0..b {
            g[[i, j]] += half * ((sim[[i, j]] - lse).exp() - if i == j { 1.0 } else { 0.0 });
        }
    }

    // s_ij = -||h_i - u_j||^2 / T
    let c = 2.0 / temperature;
    let row_sums: Array1<f64> = g.sum_axis(Axis(1));
    let col_sums: Array1<f64> = g.sum_axis(Axis(0));
    let gu = g.dot(&batch.u);
    let gth = g.t().dot(&batch.h);
    let mut grad_h = gu * c;
    grad_h.scaled_add(-c, &(&batch.h * &row_sums.insert_axis(Axis(1))));
    let mut grad_u = gth * c;
    grad_u.scaled_add(-c, &(&batch.u * &col_sums.insert_axis(Axis(1))));
    Ok(ContrastiveOutput { loss, grad_h, grad_u })
}

/// Alignment `mean_i ||h_i - u_i||^2` and uniformity
/// `mean_i log mean_j exp(-||u_i - h_j||^2)`.
pub fn alignment_uniformity(batch: &ContrastiveBatch) -> (f64, f64) {
    let b = batch.len() as f64;
    let alignment = batch
        .h
        .rows()
        .into_iter()
        .zip(batch.u.rows())
        .map(|(h, u)| h.iter().zip(u.iter()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>())
        .sum::<f64>()
        / b;
    let dist = distance_matrix(&batch.u, &batch.h);
    let uniformity = dist
        .rows()
        .into_iter()
        .map(|row| logsumexp(row.iter().map(|d| -d)) - b.ln())
        .sum::<f64>()
        / b;
    (alignment, uniformity)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn single_pair_has_zero_loss() {
        let batch = ContrastiveBatch::new(array![[0.6, 0.8]], array![[1.0, 0.0]]).unwrap();
        assert_eq!(contrastive_loss(&batch, 0.1).unwrap().loss, 0.0);
    }

    #[test]
    fn orthonormal_pair_closed_form() {
        let eye = array![[1.0, 0.0], [0.0, 1.0]];
        let batch = ContrastiveBatch::new(eye.clone(), eye).unwrap();
        let loss = contrastive_loss(&batch, 1.0).unwrap().loss;
        assert!((loss - (1.0 + (-2.0f64).exp()).ln()).abs() < 1e-15);
        assert!((loss - 0.1269).abs() < 1e-4);
        let (a, u) = alignment_uniformity(&batch);
        assert_eq!(a, 0.0);
        assert!((u - ((1.0 + (-2.0f64).exp()) / 2.0).ln()).abs() < 1e-15);
        assert!((u + 0.5662).abs() < 1e-4);
    }

    #[test]
    fn empty_and_bad_temperature_rejected() {
        assert!(ContrastiveBatch::new(Array2::zeros((0, 2)), Array2::zeros((0, 2))).is_err());
        let eye = array![[1.0, 0.0]];
        let batch = ContrastiveBatch::new(eye.clone(), eye).unwrap();
        assert!(contrastive_loss(&batch, 0.0).is_err());
    }

    #[test]
    fn duplicating_rows_keeps_alignment_and_uniformity() {
        let h = array![[0.6, 0.8], [1.0, 0.0], [0.0, -1.0]];
        let u = array![[0.8, 0.6], [0.0, 1.0], [-0.6, -0.8]];
        let once = alignment_uniformity(&ContrastiveBatch::new(h.clone(), u.clone()).unwrap());
        let h2 = ndarray::concatenate(Axis(0), &[h.view(), h.view()]).unwrap();
        let u2 = ndarray::concatenate(Axis(0), &[u.view(), u.view()]).unwrap();
        let twice = alignment_uniformity(&ContrastiveBatch::new(h2, u2).unwrap());
        assert!((once.0 - twice.0).abs() < 1e-14);
        assert!((once.1 - twice.1).abs() < 1e-14);
    }

    #[test]
    fn gradients_match_central_differences() {
        let h = array![[0.3, -0.2, 0.9], [0.5, 0.5, -0.1], [-0.7, 0.1, 0.2]];
        let u = array![[0.1, 0.8, 0.2], [0.4, -0.6, 0.3], [0.2, 0.2, -0.9]];
        let out = contrastive_loss(&ContrastiveBatch::new(h.clone(), u.clone()).unwrap(), 0.5).unwrap();
        let eps = 1e-6;
        for (which, base, analytic) in [(0, &h, &out.grad_h), (1, &u, &out.grad_u)] {
            for idx in 0..base.len() {
                let (r, c) = (idx / 3, idx % 3);
                let eval = |delta: f64| {
                    let mut m = base.clone();
                    m[[r, c]] += delta;
                    let batch = if which == 0 {
                        ContrastiveBatch::new(m, u.clone())
                    } else {
                        ContrastiveBatch::new(h.clone(), m)
                    };
                    contrastive_loss(&batch.unwrap(), 0.5).unwrap().loss
                };
                let numeric = (eval(eps) - eval(-eps)) / (2.0 * eps);
                assert!((numeric - analytic[[r, c]]).abs() < 1e-7, "{numeric} vs {}", analytic[[r, c]]);
            }
        }
    }
}
