//! Bradley-Terry with ties, in the normalized Rao-Kupper form.
//!
//! For rewards `r_a`, `r_b` and tie parameter `θ > 1`:
//!
//! ```text
//! P(a wins) = e^ra / (e^ra + θ e^rb)
//! P(b wins) = e^rb / (θ e^ra + e^rb)
//! P(tie)    = (θ² - 1) P(a wins) P(b wins)
//! ```
//!
//! Everything is evaluated through `d = r_a - r_b` in log space.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PreferenceError {
    #[error("tie parameter must be finite and > 1, got {0}")]
    InvalidTheta(f64),
    #[error("unknown item {0:?}")]
    UnknownItem(String),
    #[error("judgment compares {0:?} with itself")]
    SameItem(String),
    #[error("outcome must be A_WINS, B_WINS or TIE, got {0:?}")]
    BadOutcome(String),
    #[error("dimension must be VQ, MQ or CA, got {0:?}")]
    BadDimension(String),
    #[error("need {need} low items per high item, only {have} available")]
    InsufficientLowItems { need: usize, have: usize },
    #[error("invalid fit configuration: {0}")]
    BadConfig(String),
    #[error("fit stopped after {iterations} iterations with gradient norm {grad_norm:e}")]
    NotConverged {
        iterations: usize,
        grad_norm: f64,
        rewards: Box<RewardParams>,
    },
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, PreferenceError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Dimension {
    #[serde(rename = "VQ")]
    Vq,
    #[serde(rename = "MQ")]
    Mq,
    #[serde(rename = "CA")]
    Ca,
}

impl Dimension {
    pub const ALL: [Dimension; 3] = [Dimension::Vq, Dimension::Mq, Dimension::Ca];

    pub fn as_str(&self) -> &'static str {
        match self {
            Dimension::Vq => "VQ",
            Dimension::Mq => "MQ",
            Dimension::Ca => "CA",
        }
    }

    pub fn index(&self) -> usize {
        *self as usize
    }
}

impl std::fmt::Display for Dimension {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Dimension {
    type Err = PreferenceError;
    fn from_str(s: &str) -> Result<Self> {
        Dimension::ALL
            .into_iter()
            .find(|d| d.as_str() == s)
            .ok_or_else(|| PreferenceError::BadDimension(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Outcome {
    #[serde(rename = "A_WINS")]
    AWins,
    #[serde(rename = "B_WINS")]
    BWins,
    #[serde(rename = "TIE")]
    Tie,
}

impl Outcome {
    pub const ALL: [Outcome; 3] = [Outcome::AWins, Outcome::BWins, Outcome::Tie];

    pub fn as_str(&self) -> &'static str {
        match self {
            Outcome::AWins => "A_WINS",
            Outcome::BWins => "B_WINS",
            Outcome::Tie => "TIE",
        }
    }

    /// The same result seen with `a` and `b` exchanged.
    pub fn swapped(&self) -> Outcome {
        match self {
            Outcome::AWins => Outcome::BWins,
            Outcome::BWins => Outcome::AWins,
            Outcome::Tie => Outcome::Tie,
        }
    }
}

impl std::fmt::Display for Outcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Outcome {
    type Err = PreferenceError;
    fn from_str(s: &str) -> Result<Self> {
        Outcome::ALL
            .into_iter()
            .find(|o| o.as_str() == s)
            .ok_or_else(|| PreferenceError::BadOutcome(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Judgment {
    pub pair_id: String,
    pub item_a: String,
    pub item_b: String,
    pub dimension: Dimension,
    pub outcome: Outcome,
    pub annotator_id: String,
    /// UTC seconds.
    pub timestamp: u64,
}

impl Judgment {
    pub fn validate(&self) -> Result<()> {
        if self.item_a == self.item_b {
            return Err(PreferenceError::SameItem(self.item_a.clone()));
        }
        Ok(())
    }
}

pub fn read_judgments_jsonl(reader: impl BufRead) -> Result<Vec<Judgment>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let j: Judgment = serde_json::from_str(&line).map_err(|source| PreferenceError::Json { line: i + 1, source })?;
        j.validate()?;
        out.push(j);
    }
    Ok(out)
}

pub fn write_judgments_jsonl(mut writer: impl Write, judgments: &[Judgment]) -> Result<()> {
    for j in judgments {
        serde_json::to_writer(&mut writer, j).map_err(|source| PreferenceError::Json { line: 0, source })?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DimensionRewards {
    #[serde(rename = "VQ")]
    pub vq: f64,
    #[serde(rename = "MQ")]
    pub mq: f64,
    #[serde(rename = "CA")]
    pub ca: f64,
}

impl DimensionRewards {
    pub fn get(&self, d: Dimension) -> f64 {
        match d {
            Dimension::Vq => self.vq,
            Dimension::Mq => self.mq,
            Dimension::Ca => self.ca,
        }
    }

    pub fn set(&mut self, d: Dimension, v: f64) {
        match d {
            Dimension::Vq => self.vq = v,
            Dimension::Mq => self.mq = v,
            Dimension::Ca => self.ca = v,
        }
    }

    pub fn mean(&self) -> f64 {
        (self.vq + self.mq + self.ca) / 3.0
    }
}

/// Per-item rewards, serialized as a plain JSON map.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RewardParams {
    pub rewards: BTreeMap<String, DimensionRewards>,
}

impl RewardParams {
    pub fn get(&self, item: &str, d: Dimension) -> Result<f64> {
        self.rewards
            .get(item)
            .map(|r| r.get(d))
            .ok_or_else(|| PreferenceError::UnknownItem(item.to_string()))
    }

    pub fn items(&self) -> impl Iterator<Item = &str> {
        self.rewards.keys().map(String::as_str)
    }

    /// Shift every dimension to mean zero over items.
    pub fn recenter(&mut self) {
        let n = self.rewards.len();
        if n == 0 {
            return;
        }
        for d in Dimension::ALL {
            let mean = self.rewards.values().map(|r| r.get(d)).sum::<f64>() / n as f64;
            for r in self.rewards.values_mut() {
                r.set(d, r.get(d) - mean);
            }
        }
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data serializes")
    }
}

impl FromIterator<(String, DimensionRewards)> for RewardParams {
    fn from_iter<I: IntoIterator<Item = (String, DimensionRewards)>>(iter: I) -> Self {
        RewardParams { rewards: iter.into_iter().collect() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BTTConfig {
    pub theta: f64,
    /// Initial step for the first line search.
    pub learning_rate: f64,
    pub max_iters: usize,
    /// Stop once the largest gradient entry is below this.
    pub tol: f64,
    pub l2: f64,
}

impl Default for BTTConfig {
    fn default() -> Self {
        BTTConfig {
            theta: 5.0,
            learning_rate: 0.1,
            max_iters: 5000,
            tol: 1e-7,
            l2: 1e-4,
        }
    }
}

impl BTTConfig {
    pub fn validate(&self) -> Result<()> {
        check_theta(self.theta)?;
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(PreferenceError::BadConfig("learning_rate must be positive".into()));
        }
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(PreferenceError::BadConfig("tol must be positive".into()));
        }
        if !(self.l2.is_finite() && self.l2 >= 0.0) {
            return Err(PreferenceError::BadConfig("l2 must be non-negative".into()));
        }
        Ok(())
    }
}

fn check_theta(theta: f64) -> Result<()> {
    if theta.is_finite() && theta > 1.0 {
        Ok(())
    } else {
        Err(PreferenceError::InvalidTheta(theta))
    }
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(θ² - 1)` without cancellation near `θ = 1`.
fn ln_tie_mass(theta: f64) -> f64 {
    (theta - 1.0).ln() + (theta + 1.0).ln()
}

/// `(ln P(a), ln P(tie), ln P(b))`.
pub fn btt_log_probabilities(r_a: f64, r_b: f64, theta: f64) -> Result<(f64, f64, f64)> {
    check_theta(theta)?;
    let d = r_a - r_b;
    let lt = theta.ln();
    let la = -softplus(lt - d);
    let lb = -softplus(lt + d);
    Ok((la, ln_tie_mass(theta) + la + lb, lb))
}

/// `(P(a wins), P(tie), P(b wins))`.
pub fn btt_probabilities(r_a: f64, r_b: f64, theta: f64) -> Result<(f64, f64, f64)> {
    let (la, lt, lb) = btt_log_probabilities(r_a, r_b, theta)?;
    Ok((la.exp(), lt.exp(), lb.exp()))
}

/// Draw one outcome from the model.
pub fn sample_outcome(r_a: f64, r_b: f64, theta: f64, rng: &mut impl Rng) -> Result<Outcome> {
    let (pa, pt, _) = btt_probabilities(r_a, r_b, theta)?;
    let u: f64 = rng.random();
    Ok(if u < pa {
        Outcome::AWins
    } else if u < pa + pt {
        Outcome::Tie
    } else {
        Outcome::BWins
    })
}

/// Negative log-likelihood of one outcome and its derivative in `d = r_a - r_b`.
fn outcome_nll(d: f64, outcome: Outcome, theta: f64) -> (f64, f64) {
    let lt = theta.ln();
    match outcome {
        Outcome::AWins => (softplus(lt - d), -sigmoid(lt - d)),
        Outcome::BWins => (softplus(lt + d), sigmoid(lt + d)),
        Outcome::Tie => (
            softplus(lt - d) + softplus(lt + d) - ln_tie_mass(theta),
            sigmoid(lt + d) - sigmoid(lt - d),
        ),
    }
}

fn l2_term(rewards: &RewardParams, l2: f64) -> f64 {
    if l2 == 0.0 {
        return 0.0;
    }
    l2 * rewards
        .rewards
        .values()
        .map(|r| r.vq * r.vq + r.mq * r.mq + r.ca * r.ca)
        .sum::<f64>()
}

/// `-Σ ln P(observed) + l2 ‖r‖²`.
pub fn btt_nll(judgments: &[Judgment], rewards: &RewardParams, theta: f64, l2: f64) -> Result<f64> {
    check_theta(theta)?;
    let mut total = 0.0;
    for j in judgments {
        let d = rewards.get(&j.item_a, j.dimension)? - rewards.get(&j.item_b, j.dimension)?;
        total += outcome_nll(d, j.outcome, theta).0;
    }
    Ok(total + l2_term(rewards, l2))
}

/// Analytic gradient of [`btt_nll`] with respect to every reward.
pub fn btt_nll_gradient(judgments: &[Judgment], rewards: &RewardParams, theta: f64, l2: f64) -> Result<RewardParams> {
    check_theta(theta)?;
    let mut grad: RewardParams = rewards
        .rewards
        .iter()
        .map(|(k, r)| {
            (
                k.clone(),
                DimensionRewards {
                    vq: 2.0 * l2 * r.vq,
                    mq: 2.0 * l2 * r.mq,
                    ca: 2.0 * l2 * r.ca,
                },
            )
        })
        .collect();
    for j in judgments {
        let d = rewards.get(&j.item_a, j.dimension)? - rewards.get(&j.item_b, j.dimension)?;
        let g = outcome_nll(d, j.outcome, theta).1;
        let ga = grad.rewards.get_mut(&j.item_a).expect("checked above");
        ga.set(j.dimension, ga.get(j.dimension) + g);
        let gb = grad.rewards.get_mut(&j.item_b).expect("checked above");
        gb.set(j.dimension, gb.get(j.dimension) - g);
    }
    Ok(grad)
}

/// Judgments collapsed to outcome counts per ordered `(a, b)` index pair.
struct Tally {
    items: Vec<String>,
    /// `(a, b, [a_wins, b_wins, ties])` per dimension.
    edges: [Vec<(usize, usize, [f64; 3])>; 3],
}

impl Tally {
    fn new(judgments: &[Judgment]) -> Result<Self> {
        let mut names: BTreeMap<&str, usize> = BTreeMap::new();
        for j in judgments {
            j.validate()?;
            names.insert(&j.item_a, 0);
            names.insert(&j.item_b, 0);
        }
        for (i, v) in names.values_mut().enumerate() {
            *v = i;
        }
        let mut counts: [BTreeMap<(usize, usize), [f64; 3]>; 3] = Default::default();
        for j in judgments {
            let (a, b) = (names[j.item_a.as_str()], names[j.item_b.as_str()]);
            // canonical orientation a < b so the tally is order-free
            let (a, b, outcome) = if a < b { (a, b, j.outcome) } else { (b, a, j.outcome.swapped()) };
            let slot = match outcome {
                Outcome::AWins => 0,
                Outcome::BWins => 1,
                Outcome::Tie => 2,
            };
            counts[j.dimension.index()].entry((a, b)).or_default()[slot] += 1.0;
        }
        Ok(Tally {
            items: names.keys().map(|s| s.to_string()).collect(),
            edges: counts.map(|m| m.into_iter().map(|((a, b), c)| (a, b, c)).collect()),
        })
    }

    /// Objective and gradient for one dimension.
    fn eval(&self, dim: usize, r: &[f64], theta: f64, l2: f64, grad: &mut [f64]) -> f64 {
        let mut f = l2 * r.iter().map(|v| v * v).sum::<f64>();
        for (g, v) in grad.iter_mut().zip(r) {
            *g = 2.0 * l2 * v;
        }
        for &(a, b, c) in &self.edges[dim] {
            let d = r[a] - r[b];
            let mut dg = 0.0;
            for (slot, outcome) in [Outcome::AWins, Outcome::BWins, Outcome::Tie].into_iter().enumerate() {
                if c[slot] > 0.0 {
                    let (nll, g) = outcome_nll(d, outcome, theta);
                    f += c[slot] * nll;
                    dg += c[slot] * g;
                }
            }
            grad[a] += dg;
            grad[b] -= dg;
        }
        f
    }
}

fn center(v: &mut [f64]) {
    if v.is_empty() {
        return;
    }
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    for x in v {
        *x -= mean;
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub rewards: RewardParams,
    pub iterations: usize,
    pub grad_norm: f64,
    pub converged: bool,
}

/// Maximum-likelihood rewards by full-batch gradient descent.
///
/// Each dimension is fitted independently from zero. Steps use a
/// Barzilai-Borwein initial length with Armijo backtracking, and rewards are
/// recentered after every step (the likelihood is shift invariant, so this
/// only moves along the gauge). Deterministic: the result depends on the
/// judgment multiset, not its order.
pub fn fit_rewards_report(judgments: &[Judgment], config: &BTTConfig) -> Result<FitReport> {
    config.validate()?;
    let tally = Tally::new(judgments)?;
    let n = tally.items.len();
    let mut out: Vec<DimensionRewards> = vec![DimensionRewards::default(); n];
    let mut iterations = 0;
    let mut worst = 0.0f64;
    let mut converged = true;

    for dim in 0..3 {
        if tally.edges[dim].is_empty() {
            continue;
        }
        let mut r = vec![0.0; n];
        let mut g = vec![0.0; n];
        let mut f = tally.eval(dim, &r, config.theta, config.l2, &mut g);
        let mut step = config.learning_rate;
        let mut prev: Option<(Vec<f64>, Vec<f64>)> = None;
        let mut it = 0;
        let mut gnorm = inf_norm(&g);
        while gnorm >= config.tol && it < config.max_iters {
            if let Some((pr, pg)) = &prev {
                let (mut ss, mut sy) = (0.0, 0.0);
                for i in 0..n {
                    let s = r[i] - pr[i];
                    let y = g[i] - pg[i];
                    ss += s * s;
                    sy += s * y;
                }
                if sy > 0.0 && ss > 0.0 {
                    step = ss / sy;
                }
            }
            let gg: f64 = g.iter().map(|v| v * v).sum();
            let mut trial = vec![0.0; n];
            let mut tg = vec![0.0; n];
            let mut accepted = false;
            for _ in 0..60 {
                for i in 0..n {
                    trial[i] = r[i] - step * g[i];
                }
                center(&mut trial);
                let tf = tally.eval(dim, &trial, config.theta, config.l2, &mut tg);
                // slack of a few ulps: near the optimum the decrease drops
                // below the objective's rounding
                let slack = 1e-14 * f.abs().max(1.0);
                if tf <= f - 1e-4 * step * gg + slack {
                    accepted = true;
                    prev = Some((std::mem::replace(&mut r, trial.clone()), std::mem::replace(&mut g, tg.clone())));
                    f = tf;
                    break;
                }
                step *= 0.5;
            }
            it += 1;
            gnorm = inf_norm(&g);
            if !accepted {
                // no representable descent left
                break;
            }
        }
        iterations = iterations.max(it);
        worst = worst.max(gnorm);
        converged &= gnorm < config.tol;
        for (o, v) in out.iter_mut().zip(&r) {
            o.set(Dimension::ALL[dim], *v);
        }
    }
    Ok(FitReport {
        rewards: tally.items.into_iter().zip(out).collect(),
        iterations,
        grad_norm: worst,
        converged,
    })
}

/// Like [`fit_rewards_report`], failing with `NotConverged` (which still
/// carries the rewards) when the tolerance is not reached.
pub fn fit_rewards(judgments: &[Judgment], config: &BTTConfig) -> Result<RewardParams> {
    let report = fit_rewards_report(judgments, config)?;
    if report.converged {
        Ok(report.rewards)
    } else {
        Err(PreferenceError::NotConverged {
            iterations: report.iterations,
            grad_norm: report.grad_norm,
            rewards: Box::new(report.rewards),
        })
    }
}

/// Stage-one pseudo-judgments: each high-quality item beats `k` distinct
/// randomly chosen low-quality items.
pub fn expand_stage_one(
    high: &[String],
    low: &[String],
    k: usize,
    dimension: Dimension,
    rng: &mut impl Rng,
) -> Result<Vec<Judgment>> {
    if k > low.len() {
        return Err(PreferenceError::InsufficientLowItems { need: k, have: low.len() });
    }
    let mut out = Vec::with_capacity(high.len() * k);
    for (i, h) in high.iter().enumerate() {
        for (j, l) in low.choose_multiple(rng, k).enumerate() {
            let judgment = Judgment {
                pair_id: format!("stage1-{i:06}-{j:03}"),
                item_a: h.clone(),
                item_b: l.clone(),
                dimension,
                outcome: Outcome::AWins,
                annotator_id: "stage1".to_string(),
                timestamp: 0,
            };
            judgment.validate()?;
            out.push(judgment);
        }
    }
    Ok(out)
}

/// Rule used for prediction: tie inside the margin, else the higher reward.
pub fn predict_outcome(r_a: f64, r_b: f64, tie_margin: f64) -> Outcome {
    let d = r_a - r_b;
    if d.abs() < tie_margin {
        Outcome::Tie
    } else if d > 0.0 {
        Outcome::AWins
    } else {
        Outcome::BWins
    }
}

pub const DEFAULT_TIE_MARGIN: f64 = 0.1;

/// Fraction of correctly predicted outcomes, per dimension present in the
/// test set.
pub fn predict_accuracy(test: &[Judgment], rewards: &RewardParams, tie_margin: f64) -> Result<BTreeMap<Dimension, f64>> {
    let mut hits: BTreeMap<Dimension, (usize, usize)> = BTreeMap::new();
    for j in test {
        let pred = predict_outcome(rewards.get(&j.item_a, j.dimension)?, rewards.get(&j.item_b, j.dimension)?, tie_margin);
        let e = hits.entry(j.dimension).or_default();
        e.0 += usize::from(pred == j.outcome);
        e.1 += 1;
    }
    Ok(hits.into_iter().map(|(d, (h, n))| (d, h as f64 / n as f64)).collect())
}
