//! Rectified-flow samples and the Flow-DPO preference loss.
//!
//! Convention: `x_t = (1 - t) x0 + t ξ` and `ν* = ξ - x0`, so the noise is
//! recovered from a velocity as `ξ = x_t + (1 - t) ν`.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum FlowError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("t must lie in (0, 1), got {0}")]
    BadTime(f64),
    #[error("empty batch")]
    EmptyBatch,
    #[error("beta must be finite, got {0}")]
    BadBeta(f64),
}

pub type Result<T> = std::result::Result<T, FlowError>;

fn same_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(FlowError::DimMismatch { expected, got })
    }
}

fn check_t(t: f64) -> Result<()> {
    if t > 0.0 && t < 1.0 {
        Ok(())
    } else {
        Err(FlowError::BadTime(t))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowSample {
    x0: DVector<f64>,
    xi: DVector<f64>,
    t: f64,
    x_t: DVector<f64>,
    nu_star: DVector<f64>,
}

impl FlowSample {
    pub fn new(x0: DVector<f64>, xi: DVector<f64>, t: f64) -> Result<Self> {
        same_dim(x0.len(), xi.len())?;
        check_t(t)?;
        let x_t = &x0 * (1.0 - t) + &xi * t;
        let nu_star = &xi - &x0;
        Ok(FlowSample { x0, xi, t, x_t, nu_star })
    }

    pub fn x0(&self) -> &DVector<f64> {
        &self.x0
    }
    pub fn xi(&self) -> &DVector<f64> {
        &self.xi
    }
    pub fn t(&self) -> f64 {
        self.t
    }
    pub fn x_t(&self) -> &DVector<f64> {
        &self.x_t
    }
    pub fn nu_star(&self) -> &DVector<f64> {
        &self.nu_star
    }
    pub fn dim(&self) -> usize {
        self.x0.len()
    }

    /// Noise implied by a velocity prediction.
    pub fn noise_from_velocity(&self, nu: &DVector<f64>) -> Result<DVector<f64>> {
        same_dim(self.dim(), nu.len())?;
        Ok(&self.x_t + nu * (1.0 - self.t))
    }
}

pub fn make_flow_sample(x0: DVector<f64>, xi: DVector<f64>, t: f64) -> Result<FlowSample> {
    FlowSample::new(x0, xi, t)
}

/// Both sides of `‖ξ - ξ_pred‖² = (1 - t)² ‖ν* - ν_pred‖²`, each computed
/// directly from its own definition.
pub fn noise_velocity_identity(sample: &FlowSample, nu_pred: &DVector<f64>) -> Result<(f64, f64)> {
    let xi_pred = sample.noise_from_velocity(nu_pred)?;
    let lhs = (&sample.xi - xi_pred).norm_squared();
    let rhs = (1.0 - sample.t).powi(2) * (&sample.nu_star - nu_pred).norm_squared();
    Ok((lhs, rhs))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairElement {
    pub nu_h_star: DVector<f64>,
    pub nu_l_star: DVector<f64>,
    pub nu_theta_h: DVector<f64>,
    pub nu_theta_l: DVector<f64>,
    pub nu_ref_h: DVector<f64>,
    pub nu_ref_l: DVector<f64>,
    pub t: f64,
}

impl PairElement {
    pub fn validate(&self) -> Result<()> {
        let d = self.nu_h_star.len();
        for v in [&self.nu_l_star, &self.nu_theta_h, &self.nu_theta_l, &self.nu_ref_h, &self.nu_ref_l] {
            same_dim(d, v.len())?;
        }
        check_t(self.t)
    }

    /// The same pair with winner and loser exchanged.
    pub fn swapped(&self) -> PairElement {
        PairElement {
            nu_h_star: self.nu_l_star.clone(),
            nu_l_star: self.nu_h_star.clone(),
            nu_theta_h: self.nu_theta_l.clone(),
            nu_theta_l: self.nu_theta_h.clone(),
            nu_ref_h: self.nu_ref_l.clone(),
            nu_ref_l: self.nu_ref_h.clone(),
            t: self.t,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PairBatch {
    pub elements: Vec<PairElement>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DPOConfig {
    pub beta: f64,
    /// Range `t` is drawn from in the demo.
    pub t_range: (f64, f64),
}

impl Default for DPOConfig {
    fn default() -> Self {
        DPOConfig { beta: 1.0, t_range: (0.05, 0.95) }
    }
}

impl DPOConfig {
    pub fn beta_t(&self, t: f64) -> f64 {
        self.beta * (1.0 - t).powi(2)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.beta.is_finite() {
            return Err(FlowError::BadBeta(self.beta));
        }
        let (lo, hi) = self.t_range;
        check_t(lo)?;
        check_t(hi)?;
        if lo > hi {
            return Err(FlowError::BadTime(lo));
        }
        Ok(())
    }
}

/// `-log σ(z) = ln(1 + e^{-z})`, stable for any `z`.
pub fn neg_log_sigmoid(z: f64) -> f64 {
    z.min(0.0).abs() + (-z.abs()).exp().ln_1p()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// The argument of σ for one pair. Positive when the model moved toward the
/// winner's velocity and away from the loser's, relative to the reference.
pub fn implicit_margin(e: &PairElement, config: &DPOConfig) -> Result<f64> {
    e.validate()?;
    let win = (&e.nu_h_star - &e.nu_theta_h).norm_squared() - (&e.nu_h_star - &e.nu_ref_h).norm_squared();
    let lose = (&e.nu_l_star - &e.nu_theta_l).norm_squared() - (&e.nu_l_star - &e.nu_ref_l).norm_squared();
    Ok(-(config.beta_t(e.t) / 2.0) * (win - lose))
}

/// Mean of `-log σ(margin)` over the batch.
pub fn flow_dpo_loss(batch: &PairBatch, config: &DPOConfig) -> Result<f64> {
    if batch.elements.is_empty() {
        return Err(FlowError::EmptyBatch);
    }
    let d = batch.elements[0].nu_h_star.len();
    let mut total = 0.0;
    for e in &batch.elements {
        same_dim(d, e.nu_h_star.len())?;
        total += neg_log_sigmoid(implicit_margin(e, config)?);
    }
    Ok(total / batch.elements.len() as f64)
}

/// `ν(x_t, t) = W [x_t; t] + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearVelocityModel {
    pub w: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl LinearVelocityModel {
    pub fn zeros(dim: usize) -> Self {
        LinearVelocityModel {
            w: DMatrix::zeros(dim, dim + 1),
            b: DVector::zeros(dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    fn features(x_t: &DVector<f64>, t: f64) -> DVector<f64> {
        let mut f = DVector::zeros(x_t.len() + 1);
        f.rows_mut(0, x_t.len()).copy_from(x_t);
        f[x_t.len()] = t;
        f
    }

    pub fn predict(&self, x_t: &DVector<f64>, t: f64) -> Result<DVector<f64>> {
        same_dim(self.dim(), x_t.len())?;
        Ok(&self.w * Self::features(x_t, t) + &self.b)
    }

    fn axpy(&self, step: f64, g: &LinearVelocityModel) -> LinearVelocityModel {
        LinearVelocityModel {
            w: &self.w - &g.w * step,
            b: &self.b - &g.b * step,
        }
    }

    fn norm_squared(&self) -> f64 {
        self.w.norm_squared() + self.b.norm_squared()
    }
}

/// A preferred and a rejected sample observed at the same time `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyPair {
    pub winner: FlowSample,
    pub loser: FlowSample,
}

impl ToyPair {
    pub fn new(winner: FlowSample, loser: FlowSample) -> Result<Self> {
        same_dim(winner.dim(), loser.dim())?;
        if winner.t != loser.t {
            return Err(FlowError::BadTime(loser.t));
        }
        Ok(ToyPair { winner, loser })
    }

    pub fn t(&self) -> f64 {
        self.winner.t
    }

    pub fn element(&self, model: &LinearVelocityModel, reference: &LinearVelocityModel) -> Result<PairElement> {
        let t = self.t();
        Ok(PairElement {
            nu_h_star: self.winner.nu_star.clone(),
            nu_l_star: self.loser.nu_star.clone(),
            nu_theta_h: model.predict(&self.winner.x_t, t)?,
            nu_theta_l: model.predict(&self.loser.x_t, t)?,
            nu_ref_h: reference.predict(&self.winner.x_t, t)?,
            nu_ref_l: reference.predict(&self.loser.x_t, t)?,
            t,
        })
    }
}

pub fn pair_batch(pairs: &[ToyPair], model: &LinearVelocityModel, reference: &LinearVelocityModel) -> Result<PairBatch> {
    Ok(PairBatch {
        elements: pairs.iter().map(|p| p.element(model, reference)).collect::<Result<_>>()?,
    })
}

/// Synthetic preference data: winners come from a cluster at `+1`, losers
/// from a cluster at `-1`, both with spread `0.3`; noise is standard normal.
pub fn separable_pairs(n: usize, dim: usize, config: &DPOConfig, rng: &mut impl Rng) -> Result<Vec<ToyPair>> {
    config.validate()?;
    let (lo, hi) = config.t_range;
    let draw = |center: f64, spread: f64, rng: &mut dyn rand::RngCore| {
        DVector::from_fn(dim, |_, _| center + spread * rng.sample::<f64, _>(StandardNormal))
    };
    (0..n)
        .map(|_| {
            let t = if lo == hi { lo } else { rng.random_range(lo..hi) };
            let w = FlowSample::new(draw(1.0, 0.3, rng), draw(0.0, 1.0, rng), t)?;
            let l = FlowSample::new(draw(-1.0, 0.3, rng), draw(0.0, 1.0, rng), t)?;
            ToyPair::new(w, l)
        })
        .collect()
}

fn loss_and_grad(
    pairs: &[ToyPair],
    model: &LinearVelocityModel,
    reference: &LinearVelocityModel,
    config: &DPOConfig,
) -> Result<(f64, LinearVelocityModel)> {
    let n = pairs.len() as f64;
    let mut grad = LinearVelocityModel::zeros(model.dim());
    let mut loss = 0.0;
    for p in pairs {
        let e = p.element(model, reference)?;
        let z = implicit_margin(&e, config)?;
        loss += neg_log_sigmoid(z);
        // d(-log σ(z))/dz = -σ(-z)
        let dz = -sigmoid(-z) / n;
        let bt = config.beta_t(e.t);
        // dz/dν_θh = β_t (ν_h - ν_θh),  dz/dν_θl = -β_t (ν_l - ν_θl)
        let gh = (&e.nu_h_star - &e.nu_theta_h) * (bt * dz);
        let gl = (&e.nu_l_star - &e.nu_theta_l) * (-bt * dz);
        let fh = LinearVelocityModel::features(&p.winner.x_t, e.t);
        let fl = LinearVelocityModel::features(&p.loser.x_t, e.t);
        grad.w += &gh * fh.transpose() + &gl * fl.transpose();
        grad.b += gh + gl;
    }
    Ok((loss / n, grad))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpoFit {
    pub model: LinearVelocityModel,
    /// Loss before the first step, then after each step.
    pub trace: Vec<f64>,
}

/// Full-batch gradient descent on the Flow-DPO loss with backtracking line
/// search. The reference stays frozen. Zero steps return `init` unchanged.
pub fn toy_dpo_optimize(
    pairs: &[ToyPair],
    init: &LinearVelocityModel,
    reference: &LinearVelocityModel,
    config: &DPOConfig,
    steps: usize,
) -> Result<DpoFit> {
    if pairs.is_empty() {
        return Err(FlowError::EmptyBatch);
    }
    config.validate()?;
    same_dim(reference.dim(), init.dim())?;
    let mut model = init.clone();
    let (mut loss, mut grad) = loss_and_grad(pairs, &model, reference, config)?;
    let mut trace = vec![loss];
    let mut step = 1.0;
    for _ in 0..steps {
        let gg = grad.norm_squared();
        let mut next = None;
        let mut s = step * 2.0;
        for _ in 0..50 {
            let trial = model.axpy(s, &grad);
            let (tl, tg) = loss_and_grad(pairs, &trial, reference, config)?;
            if tl <= loss - 1e-4 * s * gg {
                next = Some((trial, tl, tg));
                break;
            }
            s *= 0.5;
        }
        // without an accepted step the model stays put
        if let Some((m, l, g)) = next {
            model = m;
            loss = l;
            grad = g;
            step = s;
        }
        trace.push(loss);
    }
    Ok(DpoFit { model, trace })
}

pub fn write_loss_trace_csv(mut w: impl Write, trace: &[f64]) -> std::io::Result<()> {
    writeln!(w, "step,loss")?;
    for (i, l) in trace.iter().enumerate() {
        writeln!(w, "{i},{l}")?;
    }
    Ok(())
}

pub fn random_vector(dim: usize, rng: &mut impl Rng) -> DVector<f64> {
    DVector::from_fn(dim, |_, _| rng.sample(StandardNormal))
}
