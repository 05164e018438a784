//! Full-batch Adam, L-BFGS with a strong-Wolfe line search, and the
//! Adam-then-L-BFGS training schedule.

use std::collections::{BTreeMap, VecDeque};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::elasticity::LossBreakdown;
use crate::error::{Error, Result};

/// A differentiable scalar objective over a flat parameter vector.
pub trait Objective {
    /// Loss terms at `theta`; the gradient of `total` is written to `grad`.
    fn loss_and_grad(&mut self, theta: &[f64], grad: &mut [f64]) -> Result<LossBreakdown>;

    /// Named scalars to log with every record (e.g. an identified load).
    fn parameters(&self, _theta: &[f64]) -> BTreeMap<String, f64> {
        BTreeMap::new()
    }
}

/// Wraps `f(theta, grad) -> loss` as an [`Objective`].
pub struct FnObjective<F>(pub F);

impl<F: FnMut(&[f64], &mut [f64]) -> f64> Objective for FnObjective<F> {
    fn loss_and_grad(&mut self, theta: &[f64], grad: &mut [f64]) -> Result<LossBreakdown> {
        let total = (self.0)(theta, grad);
        Ok(LossBreakdown {
            total,
            ..Default::default()
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub epochs: usize,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            epochs: 2000,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config("adam.lr must be > 0".into()));
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2)) {
            return Err(Error::Config("adam betas must lie in [0, 1)".into()));
        }
        if !(self.eps > 0.0) {
            return Err(Error::Config("adam.eps must be > 0".into()));
        }
        Ok(())
    }
}

/// First and second moment estimates.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        AdamState {
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        }
    }
}

/// One bias-corrected Adam update of `params` in place.
pub fn adam_step(cfg: &AdamConfig, state: &mut AdamState, params: &mut [f64], grad: &[f64]) -> Result<()> {
    if params.len() != grad.len() || state.m.len() != grad.len() {
        return Err(Error::Shape(format!(
            "adam: {} params, {} gradient entries, state of {}",
            params.len(),
            grad.len(),
            state.m.len()
        )));
    }
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("gradient".into()));
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for i in 0..params.len() {
        let g = grad[i];
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        params[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LbfgsConfig {
    pub history: usize,
    pub max_iters: usize,
    /// Stop when the largest gradient component falls below this.
    pub grad_tol: f64,
    /// Stop when the loss changed by less than this fraction over
    /// `rel_loss_window` iterations.
    pub rel_loss_tol: f64,
    pub rel_loss_window: usize,
    pub c1: f64,
    pub c2: f64,
    /// Loss evaluations allowed per line search.
    pub max_line_search: usize,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        LbfgsConfig {
            history: 100,
            max_iters: 15000,
            grad_tol: 1e-8,
            rel_loss_tol: 1e-9,
            rel_loss_window: 10,
            c1: 1e-4,
            c2: 0.9,
            max_line_search: 50,
        }
    }
}

impl LbfgsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.history == 0 {
            return Err(Error::Config("lbfgs.history must be >= 1".into()));
        }
        if !(self.grad_tol > 0.0 && self.rel_loss_tol > 0.0) {
            return Err(Error::Config("lbfgs tolerances must be > 0".into()));
        }
        if !(0.0 < self.c1 && self.c1 < self.c2 && self.c2 < 1.0) {
            return Err(Error::Config("lbfgs needs 0 < c1 < c2 < 1".into()));
        }
        if self.rel_loss_window == 0 || self.max_line_search == 0 {
            return Err(Error::Config("lbfgs window and line-search budget must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    Adam,
    #[serde(rename = "LBFGS")]
    Lbfgs,
}

/// Loss state logged once per Adam epoch or L-BFGS iteration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub epoch: usize,
    pub phase: Phase,
    pub loss: LossBreakdown,
    /// Seconds since training started.
    pub wall_time: f64,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub parameters: BTreeMap<String, f64>,
}

impl TrainRecord {
    /// Equality ignoring wall time.
    pub fn same_state(&self, other: &TrainRecord) -> bool {
        self.epoch == other.epoch
            && self.phase == other.phase
            && self.loss == other.loss
            && self.parameters == other.parameters
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    GradTol,
    RelLossTol,
    MaxIters,
    LineSearch(String),
}

impl StopReason {
    pub fn as_str(&self) -> &str {
        match self {
            StopReason::GradTol => "grad_tol",
            StopReason::RelLossTol => "rel_loss_tol",
            StopReason::MaxIters => "max_iters",
            StopReason::LineSearch(_) => "line_search",
        }
    }
}

/// Called after every record with the current parameters.
pub type Observer<'a> = dyn FnMut(&TrainRecord, &[f64]) -> Result<()> + 'a;

fn checked(loss: LossBreakdown, grad: &[f64]) -> Result<LossBreakdown> {
    if let Some(term) = loss.non_finite_term() {
        return Err(Error::NonFinite(format!("{term} loss")));
    }
    if !loss.total.is_finite() {
        return Err(Error::NonFinite("total loss".into()));
    }
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("gradient".into()));
    }
    Ok(loss)
}

fn evaluate(obj: &mut dyn Objective, theta: &[f64], grad: &mut [f64]) -> Result<LossBreakdown> {
    grad.iter_mut().for_each(|g| *g = 0.0);
    let loss = obj.loss_and_grad(theta, grad)?;
    checked(loss, grad)
}

/// Runs `cfg.epochs` full-batch Adam steps. Records carry the loss at the
/// start of each epoch, numbered from `first_epoch`.
pub fn adam_minimize(
    cfg: &AdamConfig,
    obj: &mut dyn Objective,
    theta: &mut [f64],
    first_epoch: usize,
    clock: Instant,
    observer: &mut Observer<'_>,
) -> Result<Vec<TrainRecord>> {
    cfg.validate()?;
    let mut state = AdamState::new(theta.len());
    let mut grad = vec![0.0; theta.len()];
    let mut records = Vec::with_capacity(cfg.epochs);
    for e in 0..cfg.epochs {
        let loss = evaluate(obj, theta, &mut grad)?;
        let rec = TrainRecord {
            epoch: first_epoch + e,
            phase: Phase::Adam,
            loss,
            wall_time: clock.elapsed().as_secs_f64(),
            parameters: obj.parameters(theta),
        };
        observer(&rec, theta)?;
        records.push(rec);
        adam_step(cfg, &mut state, theta, &grad)?;
    }
    Ok(records)
}

#[derive(Clone, Debug)]
pub struct LbfgsOutcome {
    pub records: Vec<TrainRecord>,
    pub stop_reason: StopReason,
    pub iterations: usize,
    pub loss: LossBreakdown,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Minimizer of the cubic interpolating `(a, fa, da)` and `(b, fb, db)`.
fn cubic_min(a: f64, fa: f64, da: f64, b: f64, fb: f64, db: f64) -> Option<f64> {
    let d1 = da + db - 3.0 * (fa - fb) / (a - b);
    let disc = d1 * d1 - da * db;
    if disc < 0.0 {
        return None;
    }
    let d2 = (b - a).signum() * disc.sqrt();
    let t = b - (b - a) * (db + d2 - d1) / (db - da + 2.0 * d2);
    t.is_finite().then_some(t)
}

struct Trial {
    alpha: f64,
    theta: Vec<f64>,
    grad: Vec<f64>,
    loss: LossBreakdown,
    slope: f64,
}

struct LineSearch<'a> {
    obj: &'a mut dyn Objective,
    x: &'a [f64],
    d: &'a [f64],
    f0: f64,
    slope0: f64,
    c1: f64,
    c2: f64,
    budget: usize,
    evals: usize,
    /// Lowest-loss trial satisfying sufficient decrease.
    best: Option<Trial>,
}

impl LineSearch<'_> {
    fn eval(&mut self, alpha: f64) -> Result<Option<Trial>> {
        if self.evals >= self.budget {
            return Ok(None);
        }
        self.evals += 1;
        let theta: Vec<f64> = self.x.iter().zip(self.d).map(|(x, d)| x + alpha * d).collect();
        let mut grad = vec![0.0; theta.len()];
        let loss = match evaluate(self.obj, &theta, &mut grad) {
            Ok(l) => l,
            // overshooting into a non-finite region is treated as a failed step
            Err(Error::NonFinite(_)) => LossBreakdown {
                total: f64::INFINITY,
                ..Default::default()
            },
            Err(e) => return Err(e),
        };
        let slope = if loss.total.is_finite() { dot(&grad, self.d) } else { f64::NAN };
        let trial = Trial {
            alpha,
            theta,
            grad,
            loss,
            slope,
        };
        if self.armijo(&trial)
            && self.best.as_ref().is_none_or(|b| trial.loss.total < b.loss.total)
        {
            self.best = Some(Trial {
                alpha: trial.alpha,
                theta: trial.theta.clone(),
                grad: trial.grad.clone(),
                loss: trial.loss.clone(),
                slope: trial.slope,
            });
        }
        Ok(Some(trial))
    }

    fn armijo(&self, t: &Trial) -> bool {
        t.loss.total.is_finite()
            && t.loss.total <= self.f0 + self.c1 * t.alpha * self.slope0
            && t.loss.total < self.f0
    }

    fn curvature(&self, t: &Trial) -> bool {
        t.slope.abs() <= -self.c2 * self.slope0
    }

    /// Strong-Wolfe search; `Ok(None)` when the evaluation budget ran out.
    fn run(&mut self, alpha0: f64) -> Result<Option<Trial>> {
        let mut prev = (0.0, self.f0, self.slope0);
        let mut alpha = alpha0;
        let mut first = true;
        loop {
            let Some(t) = self.eval(alpha)? else { return Ok(None) };
            if !self.armijo(&t) || (!first && t.loss.total >= prev.1) {
                return self.zoom(prev, (t.alpha, t.loss.total, t.slope));
            }
            if self.curvature(&t) {
                return Ok(Some(t));
            }
            if t.slope >= 0.0 {
                return self.zoom((t.alpha, t.loss.total, t.slope), prev);
            }
            prev = (t.alpha, t.loss.total, t.slope);
            alpha *= 2.0;
            first = false;
        }
    }

    fn zoom(&mut self, mut lo: (f64, f64, f64), mut hi: (f64, f64, f64)) -> Result<Option<Trial>> {
        loop {
            let (a, b) = (lo.0.min(hi.0), lo.0.max(hi.0));
            let width = b - a;
            if width <= 1e-16 * b.max(1.0) {
                return Ok(None);
            }
            let guess = if hi.1.is_finite() && hi.2.is_finite() {
                cubic_min(lo.0, lo.1, lo.2, hi.0, hi.1, hi.2)
            } else {
                None
            };
            let alpha = match guess {
                Some(t) if t > a + 0.1 * width && t < b - 0.1 * width => t,
                _ => 0.5 * (lo.0 + hi.0),
            };
            let Some(t) = self.eval(alpha)? else { return Ok(None) };
            let point = (t.alpha, t.loss.total, t.slope);
            if !self.armijo(&t) || t.loss.total >= lo.1 {
                hi = point;
            } else {
                if self.curvature(&t) {
                    return Ok(Some(t));
                }
                if t.slope * (hi.0 - lo.0) >= 0.0 {
                    hi = lo;
                }
                lo = point;
            }
        }
    }
}

/// L-BFGS with two-loop recursion and a strong-Wolfe line search.
/// Records are numbered from `first_epoch`; the first one holds the
/// starting loss.
pub fn lbfgs_minimize(
    cfg: &LbfgsConfig,
    obj: &mut dyn Objective,
    theta: &mut [f64],
    first_epoch: usize,
    clock: Instant,
    observer: &mut Observer<'_>,
) -> Result<LbfgsOutcome> {
    cfg.validate()?;
    let n = theta.len();
    let mut grad = vec![0.0; n];
    let mut loss = evaluate(obj, theta, &mut grad)?;
    let mut records = Vec::new();
    let mut push = |records: &mut Vec<TrainRecord>,
                    k: usize,
                    loss: &LossBreakdown,
                    theta: &[f64],
                    obj: &dyn Objective|
     -> Result<()> {
        let rec = TrainRecord {
            epoch: first_epoch + k,
            phase: Phase::Lbfgs,
            loss: loss.clone(),
            wall_time: clock.elapsed().as_secs_f64(),
            parameters: obj.parameters(theta),
        };
        observer(&rec, theta)?;
        records.push(rec);
        Ok(())
    };
    push(&mut records, 0, &loss, theta, obj)?;

    let mut pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(cfg.history);
    let mut history = vec![loss.total];
    let mut iter = 0;
    let stop_reason = loop {
        if inf_norm(&grad) < cfg.grad_tol {
            break StopReason::GradTol;
        }
        if iter >= cfg.max_iters {
            break StopReason::MaxIters;
        }

        // two-loop recursion
        let mut d: Vec<f64> = grad.iter().map(|g| -g).collect();
        let mut alphas = vec![0.0; pairs.len()];
        for (i, (s, y, rho)) in pairs.iter().enumerate().rev() {
            let a = rho * dot(s, &d);
            alphas[i] = a;
            d.iter_mut().zip(y).for_each(|(di, yi)| *di -= a * yi);
        }
        if let Some((s, y, _)) = pairs.back() {
            let gamma = dot(s, y) / dot(y, y);
            d.iter_mut().for_each(|di| *di *= gamma);
        }
        for (i, (s, y, rho)) in pairs.iter().enumerate() {
            let b = rho * dot(y, &d);
            let a = alphas[i];
            d.iter_mut().zip(s).for_each(|(di, si)| *di += (a - b) * si);
        }
        let mut slope = dot(&grad, &d);
        if !(slope < 0.0) {
            pairs.clear();
            d = grad.iter().map(|g| -g).collect();
            slope = dot(&grad, &d);
        }
        let alpha0 = if pairs.is_empty() {
            (1.0 / dot(&grad, &grad).sqrt()).min(1.0)
        } else {
            1.0
        };

        let mut search = LineSearch {
            obj: &mut *obj,
            x: theta,
            d: &d,
            f0: loss.total,
            slope0: slope,
            c1: cfg.c1,
            c2: cfg.c2,
            budget: cfg.max_line_search,
            evals: 0,
            best: None,
        };
        let found = search.run(alpha0)?;
        let (trial, failed) = match found {
            Some(t) => (Some(t), false),
            None => (search.best.take(), true),
        };
        let evals = search.evals;
        let Some(trial) = trial else {
            break StopReason::LineSearch(format!("no decrease after {evals} evaluations"));
        };

        let s: Vec<f64> = trial.theta.iter().zip(theta.iter()).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = trial.grad.iter().zip(&grad).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-10 {
            if pairs.len() == cfg.history {
                pairs.pop_front();
            }
            pairs.push_back((s, y, 1.0 / sy));
        }
        theta.copy_from_slice(&trial.theta);
        grad = trial.grad;
        loss = trial.loss;
        iter += 1;
        push(&mut records, iter, &loss, theta, obj)?;
        history.push(loss.total);

        if failed {
            break StopReason::LineSearch(format!(
                "strong Wolfe conditions not met after {evals} evaluations"
            ));
        }
        let w = cfg.rel_loss_window;
        if history.len() > w {
            let old = history[history.len() - 1 - w];
            let scale = old.abs().max(loss.total.abs()).max(f64::MIN_POSITIVE);
            if (old - loss.total).abs() <= cfg.rel_loss_tol * scale {
                break StopReason::RelLossTol;
            }
        }
    };
    log::info!(
        "lbfgs stopped after {iter} iterations ({}), loss {:.3e}",
        stop_reason.as_str(),
        loss.total
    );
    Ok(LbfgsOutcome {
        records,
        stop_reason,
        iterations: iter,
        loss,
    })
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub records: Vec<TrainRecord>,
    pub stop_reason: StopReason,
}

/// Adam for `adam.epochs`, then L-BFGS from the Adam result.
pub fn train_two_phase(
    obj: &mut dyn Objective,
    adam: &AdamConfig,
    lbfgs: &LbfgsConfig,
    theta: &mut [f64],
    observer: &mut Observer<'_>,
) -> Result<TrainOutcome> {
    let clock = Instant::now();
    let mut records = adam_minimize(adam, obj, theta, 0, clock, observer)?;
    log::info!(
        "adam finished after {} epochs, loss {:.3e}",
        adam.epochs,
        records.last().map_or(f64::NAN, |r| r.loss.total)
    );
    let out = lbfgs_minimize(lbfgs, obj, theta, adam.epochs, clock, observer)?;
    records.extend(out.records);
    Ok(TrainOutcome {
        records,
        stop_reason: out.stop_reason,
    })
}
