//! Monte-Carlo checks of the alignment-loss theory on a two-dimensional
//! Gaussian toy problem.
//!
//! Data are `(Z1, Z2) ~ N(0, I2)` with label `Y = 1` iff `Z1 >= 0`. Scaling
//! domains `G_m` replace `Z2` by `m * Z2`, and the representation is
//! `g(z1, z2) = z1 + t * z2`.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest sample count accepted by the estimators.
pub const MIN_SAMPLES: usize = 10_000;

/// Monte-Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
}

impl Estimate {
    fn from_iter(values: impl Iterator<Item = f64>) -> Self {
        let (mut n, mut mean, mut m2) = (0usize, 0.0f64, 0.0f64);
        for x in values {
            n += 1;
            let d = x - mean;
            mean += d / n as f64;
            m2 += d * (x - mean);
        }
        let var = if n > 1 { m2 / (n - 1) as f64 } else { 0.0 };
        Self {
            mean,
            se: (var / n.max(1) as f64).sqrt(),
        }
    }
}

/// Scaling domain `G_m = (Z1, m * Z2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToyDomain {
    pub m: f64,
}

/// Representation `g(z1, z2) = z1 + t * z2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearRep {
    pub t: f64,
}

impl LinearRep {
    pub fn new(t: f64) -> Result<Self> {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(Error::Validation(format!("t must be finite and non-negative, got {t}")));
        }
        Ok(Self { t })
    }

    pub fn apply(&self, z1: f64, z2: f64) -> f64 {
        z1 + self.t * z2
    }
}

/// Linear predictor `s = w * g + b` on the scalar representation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearClassifier {
    pub w: f64,
    pub b: f64,
}

impl LinearClassifier {
    pub fn norm(&self) -> f64 {
        self.w.abs()
    }
}

fn check_samples(n: usize) -> Result<()> {
    if n < MIN_SAMPLES {
        return Err(Error::Validation(format!("need at least {MIN_SAMPLES} samples, got {n}")));
    }
    Ok(())
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Alignment loss `E ||g(tau_a(Z)) - g(tau_b(Z))||^2` with scaling
/// augmentations `tau_a(z) = (z1, a * z2)`, `a, b ~ N(0, 1)`. Closed form `2 t^2`.
pub fn alignment_loss_mc(rep: LinearRep, n_samples: usize, seed: u64) -> Result<Estimate> {
    check_samples(n_samples)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(Estimate::from_iter((0..n_samples).map(|_| {
        let (z1, z2, a, b) = (normal(&mut rng), normal(&mut rng), normal(&mut rng), normal(&mut rng));
        let d = rep.apply(z1, a * z2) - rep.apply(z1, b * z2);
        d * d
    })))
}

/// 0/1 risk of the sign classifier `1[g >= 0]` on domain `G_m`.
pub fn risk_mc(rep: LinearRep, domain: ToyDomain, n_samples: usize, seed: u64) -> Result<Estimate> {
    check_samples(n_samples)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(Estimate::from_iter((0..n_samples).map(|_| {
        let (z1, z2) = (normal(&mut rng), normal(&mut rng));
        let predicted = rep.apply(z1, domain.m * z2) >= 0.0;
        f64::from(u8::from(predicted != (z1 >= 0.0)))
    })))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropositionReport {
    pub zeta: f64,
    pub t: f64,
    pub n_samples: usize,
    pub alignment: Estimate,
    pub alignment_closed_form: f64,
    pub risk_m0: Estimate,
    pub risk_m1: Estimate,
    /// `|R(G_0) - R(G_{1/t})|`.
    pub gap: f64,
    pub gap_se: f64,
    pub pass: bool,
}

impl PropositionReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "vanilla alignment dilemma");
        let _ = writeln!(s, "  zeta          {}", self.zeta);
        let _ = writeln!(s, "  t             {:.6}", self.t);
        let _ = writeln!(s, "  samples       {}", self.n_samples);
        let _ = writeln!(
            s,
            "  alignment     {:.6} (se {:.2e}, closed form {:.6})",
            self.alignment.mean, self.alignment.se, self.alignment_closed_form
        );
        let _ = writeln!(s, "  risk m=0      {:.6} (se {:.2e})", self.risk_m0.mean, self.risk_m0.se);
        let _ = writeln!(s, "  risk m=1/t    {:.6} (se {:.2e})", self.risk_m1.mean, self.risk_m1.se);
        let _ = writeln!(s, "  risk gap      {:.6} (se {:.2e})", self.gap, self.gap_se);
        let _ = writeln!(s, "  verdict       {}", if self.pass { "PASS" } else { "FAIL" });
        s
    }
}

/// With `t = sqrt(zeta) / 2`, checks alignment `< zeta` and a risk gap between
/// `G_0` and `G_{1/t}` of at least `1/4` within three standard errors.
pub fn verify_proposition(zeta: f64, n_samples: usize, seed: u64) -> Result<PropositionReport> {
    if !(zeta > 0.0 && zeta.is_finite()) {
        return Err(Error::Validation(format!("zeta must be positive, got {zeta}")));
    }
    let rep = LinearRep::new(zeta.sqrt() / 2.0)?;
    let alignment = alignment_loss_mc(rep, n_samples, seed)?;
    let risk_m0 = risk_mc(rep, ToyDomain { m: 0.0 }, n_samples, seed.wrapping_add(1))?;
    let risk_m1 = risk_mc(rep, ToyDomain { m: 1.0 / rep.t }, n_samples, seed.wrapping_add(2))?;
    let gap = (risk_m0.mean - risk_m1.mean).abs();
    let gap_se = risk_m0.se.hypot(risk_m1.se);
    let pass = alignment.mean + 3.0 * alignment.se < zeta && gap >= 0.25 - 3.0 * gap_se;
    Ok(PropositionReport {
        zeta,
        t: rep.t,
        n_samples,
        alignment,
        alignment_closed_form: 2.0 * rep.t * rep.t,
        risk_m0,
        risk_m1,
        gap,
        gap_se,
        pass,
    })
}

/// Grid for the cross-domain variation bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TheoremConfig {
    pub ts: Vec<f64>,
    pub classifiers: Vec<LinearClassifier>,
    /// Scaling factors `m` of the augmentation set.
    pub domains: Vec<f64>,
    pub n_samples: usize,
    /// Data are restricted to `||z|| <= radius`; `None` leaves them unbounded.
    pub truncation_radius: Option<f64>,
    pub seed: u64,
}

impl Default for TheoremConfig {
    fn default() -> Self {
        Self {
            ts: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            classifiers: vec![
                LinearClassifier { w: 1.0, b: 0.0 },
                LinearClassifier { w: 0.5, b: 0.1 },
                LinearClassifier { w: 2.0, b: -0.2 },
                LinearClassifier { w: -1.0, b: 0.3 },
                LinearClassifier { w: 1.5, b: 0.5 },
            ],
            domains: vec![-2.0, -1.0, 0.0, 1.0, 2.0],
            n_samples: 100_000,
            truncation_radius: Some(6.0),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremPoint {
    pub t: f64,
    pub classifier: LinearClassifier,
    /// `sup_{m, m'} |R(G_m) - R(G_m')|` under squared loss.
    pub lhs: f64,
    pub lhs_se: f64,
    /// `E sup_{m, m'} |g(G_m) - g(G_m')|`.
    pub ial: Estimate,
    /// `E sup_{m, m'} |g(G_m) - g(G_m')|^2`.
    pub ial_squared: Estimate,
    /// Lipschitz constant of the loss in the representation on the truncated region.
    pub constant: f64,
    pub bound: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremReport {
    pub config: TheoremConfig,
    pub points: Vec<TheoremPoint>,
}

impl TheoremReport {
    pub fn violations(&self) -> usize {
        self.points.iter().filter(|p| !p.pass).count()
    }

    pub fn passed(&self) -> bool {
        self.violations() == 0
    }

    pub fn to_text(&self) -> String {
        let c = &self.config;
        let mut s = String::new();
        let _ = writeln!(s, "cross-domain variation bound");
        let _ = writeln!(s, "  domains m     {:?}", c.domains);
        let _ = writeln!(s, "  samples       {}", c.n_samples);
        let _ = writeln!(s, "  radius        {:?}", c.truncation_radius);
        let _ = writeln!(
            s,
            "  {:>6} {:>6} {:>6} {:>12} {:>10} {:>10} {:>10} {:>10} {:>12}  verdict",
            "t", "w", "b", "lhs", "lhs_se", "ial", "ial_sq", "constant", "bound"
        );
        for p in &self.points {
            let _ = writeln!(
                s,
                "  {:>6.3} {:>6.3} {:>6.3} {:>12.6} {:>10.2e} {:>10.6} {:>10.6} {:>10.4} {:>12.6}  {}",
                p.t,
                p.classifier.w,
                p.classifier.b,
                p.lhs,
                p.lhs_se,
                p.ial.mean,
                p.ial_squared.mean,
                p.constant,
                p.bound,
                if p.pass { "PASS" } else { "FAIL" }
            );
        }
        let _ = writeln!(s, "  violations    {} of {}", self.violations(), self.points.len());
        s
    }
}

/// Samples from `N(0, I2)` conditioned on `||z|| <= radius`.
fn truncated_normals(n: usize, radius: f64, seed: u64) -> Vec<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r2 = radius * radius;
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let (z1, z2) = (normal(&mut rng), normal(&mut rng));
        if z1 * z1 + z2 * z2 <= r2 {
            out.push((z1, z2));
        }
    }
    out
}

fn squared_loss(score: f64, z1: f64) -> f64 {
    let y = if z1 >= 0.0 { 1.0 } else { -1.0 };
    (score - y).powi(2)
}

/// Invariant alignment over a domain set for one sample: the largest
/// representation discrepancy between any two domains.
fn sup_discrepancy(rep: LinearRep, domains: &[f64], z1: f64, z2: f64) -> f64 {
    let values = domains.iter().map(|&m| rep.apply(z1, m * z2));
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if domains.is_empty() {
        0.0
    } else {
        hi - lo
    }
}

/// `E sup_{m, m'} |g(G_m) - g(G_m')|^p` over the domain grid.
pub fn invariant_alignment_mc(rep: LinearRep, domains: &[f64], power: i32, n_samples: usize, seed: u64) -> Result<Estimate> {
    check_samples(n_samples)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(Estimate::from_iter((0..n_samples).map(|_| {
        let (z1, z2) = (normal(&mut rng), normal(&mut rng));
        sup_discrepancy(rep, domains, z1, z2).powi(power)
    })))
}

/// Lipschitz constant of `s -> (s - y)^2`, `s = w g + b`, with respect to `g`
/// divided by `|w|`: `2 (S + 1)` where `S` bounds `|s|` on `||z|| <= radius`.
pub fn loss_constant(rep: LinearRep, c: LinearClassifier, domains: &[f64], radius: f64) -> f64 {
    let m_max = domains.iter().fold(0.0f64, |a, &m| a.max(m.abs()));
    let g_max = radius * (1.0 + (rep.t * m_max).powi(2)).sqrt();
    2.0 * (c.w.abs() * g_max + c.b.abs() + 1.0)
}

fn theorem_point(cfg: &TheoremConfig, radius: f64, t: f64, c: LinearClassifier, seed: u64) -> Result<TheoremPoint> {
    let rep = LinearRep::new(t)?;
    let samples = truncated_normals(cfg.n_samples, radius, seed);
    let k = cfg.domains.len();
    let losses: Vec<Vec<f64>> = cfg
        .domains
        .iter()
        .map(|&m| {
            samples
                .iter()
                .map(|&(z1, z2)| squared_loss(c.w * rep.apply(z1, m * z2) + c.b, z1))
                .collect()
        })
        .collect();
    let (mut lhs, mut lhs_se) = (0.0, 0.0);
    for i in 0..k {
        for j in i + 1..k {
            let d = Estimate::from_iter(losses[i].iter().zip(&losses[j]).map(|(a, b)| a - b));
            if d.mean.abs() > lhs {
                lhs = d.mean.abs();
                lhs_se = d.se;
            }
        }
    }
    let ial = Estimate::from_iter(samples.iter().map(|&(z1, z2)| sup_discrepancy(rep, &cfg.domains, z1, z2)));
    let ial_squared =
        Estimate::from_iter(samples.iter().map(|&(z1, z2)| sup_discrepancy(rep, &cfg.domains, z1, z2).powi(2)));
    let constant = loss_constant(rep, c, &cfg.domains, radius);
    let bound = constant * c.norm() * ial.mean;
    if !bound.is_finite() {
        return Err(Error::Validation(format!("bound is not finite at t = {t}")));
    }
    Ok(TheoremPoint {
        t,
        classifier: c,
        lhs,
        lhs_se,
        ial,
        ial_squared,
        constant,
        bound,
        pass: lhs <= bound + 3.0 * (lhs_se + constant * c.norm() * ial.se),
    })
}

/// Evaluates both sides of the cross-domain variation bound on every
/// `(t, classifier)` grid point, in parallel.
pub fn verify_theorem_bound(cfg: &TheoremConfig) -> Result<TheoremReport> {
    let radius = cfg.truncation_radius.ok_or_else(|| {
        Error::Validation(
            "the loss constant is unbounded on an unbounded data region; set truncation_radius (e.g. 6)".into(),
        )
    })?;
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::Validation(format!("truncation_radius must be positive, got {radius}")));
    }
    if cfg.domains.is_empty() {
        return Err(Error::Validation("need at least one domain".into()));
    }
    check_samples(cfg.n_samples)?;
    let grid: Vec<(usize, f64, LinearClassifier)> = cfg
        .ts
        .iter()
        .flat_map(|&t| cfg.classifiers.iter().map(move |&c| (t, c)))
        .enumerate()
        .map(|(i, (t, c))| (i, t, c))
        .collect();
    let points = grid
        .par_iter()
        .map(|&(i, t, c)| theorem_point(cfg, radius, t, c, cfg.seed.wrapping_add(i as u64)))
        .collect::<Result<Vec<_>>>()?;
    Ok(TheoremReport {
        config: cfg.clone(),
        points,
    })
}
