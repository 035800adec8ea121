//! GD, NCG and LBFGS outer loops, each with either line search.

use std::collections::VecDeque;
use std::time::Instant;

use serde::Serialize;

use crate::dataset::ShardedDataset;
use crate::engine::{CommLedger, Engine, ReduceTopology};
use crate::error::{Error, Result};
use crate::linesearch::{
    pels_line_search, wolfe_line_search, CoeffOracle, PelsParams, PhiOracle, WolfeParams,
};
use crate::losses::{self, LossModel};
use crate::numerics::{axpy, norm2, DenseVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    Gd,
    Ncg,
    Lbfgs,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Gd => "gd",
            Algorithm::Ncg => "ncg",
            Algorithm::Lbfgs => "lbfgs",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LineSearchKind {
    Wolfe,
    Pels,
}

impl LineSearchKind {
    pub fn name(self) -> &'static str {
        match self {
            LineSearchKind::Wolfe => "wolfe",
            LineSearchKind::Pels => "pels",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig {
    pub algorithm: Algorithm,
    pub linesearch: LineSearchKind,
    /// LBFGS correction pairs kept.
    pub history: usize,
    /// NCG restarts when `|g_k . g_{k-1}| >= threshold |g_k|^2`.
    pub powell_threshold: f64,
    pub grad_tol: f64,
    pub max_iters: usize,
    pub wolfe: WolfeParams,
    pub pels: PelsParams,
    /// Record wall-clock time in the trace; zeros otherwise.
    pub record_time: bool,
}

impl OptimizerConfig {
    /// Defaults: history 5, Powell threshold 0.2 with PELS and 1.0 with the
    /// Wolfe search.
    pub fn new(algorithm: Algorithm, linesearch: LineSearchKind) -> Self {
        Self {
            algorithm,
            linesearch,
            history: 5,
            powell_threshold: default_powell_threshold(linesearch),
            grad_tol: 1e-6,
            max_iters: 100,
            wolfe: WolfeParams::default(),
            pels: PelsParams::default(),
            record_time: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.history < 1 {
            return Err(Error::InvalidArgument("history must be >= 1".into()));
        }
        if !(self.powell_threshold > 0.0) {
            return Err(Error::InvalidArgument(
                "Powell threshold must be > 0".into(),
            ));
        }
        if !(self.grad_tol >= 0.0) {
            return Err(Error::InvalidArgument("grad_tol must be >= 0".into()));
        }
        match self.linesearch {
            LineSearchKind::Wolfe => self.wolfe.validate(),
            LineSearchKind::Pels => self.pels.validate(),
        }
    }
}

pub fn default_powell_threshold(linesearch: LineSearchKind) -> f64 {
    match linesearch {
        LineSearchKind::Pels => 0.2,
        LineSearchKind::Wolfe => 1.0,
    }
}

/// One row per outer iteration; row 0 is the starting point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRecord {
    pub k: usize,
    pub loss: f64,
    pub grad_norm: f64,
    pub step_size: f64,
    /// Inner line-search evaluations (value+gradient passes for Wolfe,
    /// coefficient passes for PELS) spent in this iteration.
    pub n_e: usize,
    pub cum_fg_evals: u64,
    pub cum_coeff_evals: u64,
    pub cum_bytes: u64,
    #[serde(rename = "elapsed_s")]
    pub elapsed_seconds: f64,
    /// False when this iteration's line search hit its budget.
    #[serde(skip)]
    pub ls_clean: bool,
    #[serde(skip)]
    pub restarted: bool,
}

impl TraceRecord {
    pub fn accuracy_proxy(&self) -> f64 {
        losses::accuracy_proxy(self.loss)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Converged,
    MaxIters,
    /// The Wolfe search returned a zero step.
    Stalled,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub w: DenseVector,
    pub trace: Vec<TraceRecord>,
    pub termination: Termination,
}

impl RunOutput {
    pub fn final_record(&self) -> &TraceRecord {
        self.trace
            .last()
            .expect("trace always has the starting row")
    }

    pub fn iterations(&self) -> usize {
        self.final_record().k
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EvalCounters {
    pub fg_evals: u64,
    pub coeff_evals: u64,
    pub bytes: u64,
}

/// What the outer loop needs from a loss.
pub trait Objective {
    fn dim(&self) -> usize;
    fn value_grad(&mut self, w: &DenseVector) -> Result<(f64, DenseVector)>;
    /// Taylor coefficients of `alpha -> L(w + alpha p)` about `alpha_j`.
    fn coefficients(
        &mut self,
        w: &DenseVector,
        p: &DenseVector,
        alpha_j: f64,
        degree: usize,
    ) -> Result<Vec<f64>>;
    fn counters(&self) -> EvalCounters;
}

/// A loss evaluated over a sharded dataset through the engine.
pub struct DistributedObjective<'a, L: LossModel + ?Sized> {
    loss: &'a L,
    data: &'a ShardedDataset,
    engine: Engine,
    fg_evals: u64,
    coeff_evals: u64,
}

impl<'a, L: LossModel + ?Sized> DistributedObjective<'a, L> {
    pub fn new(loss: &'a L, data: &'a ShardedDataset, topology: ReduceTopology) -> Self {
        Self {
            loss,
            data,
            engine: Engine::new(topology),
            fg_evals: 0,
            coeff_evals: 0,
        }
    }

    pub fn ledger(&self) -> &CommLedger {
        &self.engine.ledger
    }
}

impl<L: LossModel + ?Sized> Objective for DistributedObjective<'_, L> {
    fn dim(&self) -> usize {
        self.data.dim()
    }

    fn value_grad(&mut self, w: &DenseVector) -> Result<(f64, DenseVector)> {
        self.fg_evals += 1;
        losses::value_grad(self.loss, w, self.data, &mut self.engine)
    }

    fn coefficients(
        &mut self,
        w: &DenseVector,
        p: &DenseVector,
        alpha_j: f64,
        degree: usize,
    ) -> Result<Vec<f64>> {
        self.coeff_evals += 1;
        losses::coefficients(
            self.loss,
            w,
            p,
            alpha_j,
            degree,
            self.data,
            &mut self.engine,
        )
        .map(|c| c.coeffs)
    }

    fn counters(&self) -> EvalCounters {
        EvalCounters {
            fg_evals: self.fg_evals,
            coeff_evals: self.coeff_evals,
            bytes: self.engine.ledger.bytes,
        }
    }
}

pub fn gd_direction(g: &DenseVector) -> DenseVector {
    g.scaled(-1.0)
}

/// Positive Polak-Ribiere direction with a Powell restart. Returns the
/// direction and whether it was reset to steepest descent.
pub fn ncg_direction(
    g: &DenseVector,
    prev: Option<(&DenseVector, &DenseVector)>,
    powell_threshold: f64,
) -> Result<(DenseVector, bool)> {
    let steepest = gd_direction(g);
    let Some((g_prev, p_prev)) = prev else {
        return Ok((steepest, false));
    };
    let gg = g.dot(g)?;
    let g_gprev = g.dot(g_prev)?;
    if g_gprev.abs() >= powell_threshold * gg {
        return Ok((steepest, true));
    }
    let prev_sq = g_prev.dot(g_prev)?;
    if prev_sq == 0.0 {
        return Ok((steepest, true));
    }
    let beta = ((gg - g_gprev) / prev_sq).max(0.0);
    let p = axpy(beta, p_prev, &steepest)?;
    if p.dot(g)? >= 0.0 {
        return Ok((steepest, true));
    }
    Ok((p, false))
}

#[derive(Debug, Clone)]
struct Correction {
    s: DenseVector,
    y: DenseVector,
    rho: f64,
}

/// Ring buffer of LBFGS correction pairs.
#[derive(Debug, Clone)]
pub struct LbfgsHistory {
    pairs: VecDeque<Correction>,
    capacity: usize,
}

impl LbfgsHistory {
    pub fn new(capacity: usize) -> Self {
        Self {
            pairs: VecDeque::with_capacity(capacity),
            capacity: capacity.max(1),
        }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn clear(&mut self) {
        self.pairs.clear();
    }

    /// Stores `(s, y)` unless `s.y <= 0`. Returns whether it was kept.
    pub fn push(&mut self, s: DenseVector, y: DenseVector) -> Result<bool> {
        let sy = s.dot(&y)?;
        if !(sy > 0.0) {
            return Ok(false);
        }
        if self.pairs.len() == self.capacity {
            self.pairs.pop_front();
        }
        self.pairs.push_back(Correction {
            s,
            y,
            rho: 1.0 / sy,
        });
        Ok(true)
    }

    pub fn curvature_products(&self) -> impl Iterator<Item = f64> + '_ {
        self.pairs.iter().map(|c| 1.0 / c.rho)
    }

    /// Initial inverse Hessian scale, `s.y / y.y` of the newest pair.
    pub fn initial_scale(&self) -> f64 {
        match self.pairs.back() {
            Some(c) => {
                let yy = c.y.dot(&c.y).unwrap_or(0.0);
                if yy > 0.0 {
                    1.0 / (c.rho * yy)
                } else {
                    1.0
                }
            }
            None => 1.0,
        }
    }

    /// Two-loop recursion: `-H g`.
    pub fn direction(&self, g: &DenseVector) -> Result<DenseVector> {
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(self.pairs.len());
        for c in self.pairs.iter().rev() {
            let a = c.rho * c.s.dot(&q)?;
            q.axpy_in_place(-a, &c.y)?;
            alphas.push(a);
        }
        let mut r = q.scaled(self.initial_scale());
        for (c, a) in self.pairs.iter().zip(alphas.iter().rev()) {
            let b = c.rho * c.y.dot(&r)?;
            r.axpy_in_place(a - b, &c.s)?;
        }
        Ok(r.scaled(-1.0))
    }
}

pub fn lbfgs_direction(g: &DenseVector, history: &LbfgsHistory) -> Result<DenseVector> {
    history.direction(g)
}

/// Trial step for the line search. LBFGS always starts at 1; GD and NCG
/// scale the previous accepted step by the ratio of directional derivatives.
pub fn initial_step(
    alpha_prev: Option<f64>,
    g_prev_dot_p_prev: f64,
    g_dot_p: f64,
    algorithm: Algorithm,
) -> f64 {
    if algorithm == Algorithm::Lbfgs {
        return 1.0;
    }
    let Some(alpha_prev) = alpha_prev else {
        return 1.0;
    };
    if g_dot_p == 0.0 {
        return 1.0;
    }
    let a = alpha_prev * g_prev_dot_p_prev / g_dot_p;
    if a > 0.0 && a.is_finite() {
        a
    } else {
        1.0
    }
}

/// `phi(alpha) = L(w + alpha p)` through fused value+gradient passes.
/// Remembers every gradient so the accepted one can be reused.
struct FusedPhi<'a, O: Objective + ?Sized> {
    objective: &'a mut O,
    w: &'a DenseVector,
    p: &'a DenseVector,
    seen: Vec<(f64, f64, DenseVector)>,
}

impl<O: Objective + ?Sized> PhiOracle for FusedPhi<'_, O> {
    fn eval(&mut self, alpha: f64) -> Result<(f64, f64)> {
        let x = axpy(alpha, self.p, self.w)?;
        let (f, g) = self.objective.value_grad(&x)?;
        let dphi = g.dot(self.p)?;
        self.seen.push((alpha, f, g));
        Ok((f, dphi))
    }
}

struct CoeffPhi<'a, O: Objective + ?Sized> {
    objective: &'a mut O,
    w: &'a DenseVector,
    p: &'a DenseVector,
}

impl<O: Objective + ?Sized> CoeffOracle for CoeffPhi<'_, O> {
    fn coeffs(&mut self, alpha_j: f64, degree: usize) -> Result<Vec<f64>> {
        self.objective.coefficients(self.w, self.p, alpha_j, degree)
    }
}

/// Runs the configured method from `w0`.
pub fn run<O: Objective + ?Sized>(
    config: &OptimizerConfig,
    objective: &mut O,
    w0: DenseVector,
) -> Result<RunOutput> {
    config.validate()?;
    if w0.len() != objective.dim() {
        return Err(Error::DimensionMismatch {
            expected: objective.dim(),
            found: w0.len(),
        });
    }
    let start = Instant::now();
    let elapsed = || {
        if config.record_time {
            start.elapsed().as_secs_f64()
        } else {
            0.0
        }
    };

    let mut w = w0;
    let (mut f, mut g) = objective.value_grad(&w)?;
    check_finite(f, &g, 0)?;

    let record = |k: usize,
                  f: f64,
                  g: &DenseVector,
                  step: f64,
                  n_e: usize,
                  c: EvalCounters,
                  t: f64,
                  clean: bool,
                  restarted: bool| TraceRecord {
        k,
        loss: f,
        grad_norm: norm2(g),
        step_size: step,
        n_e,
        cum_fg_evals: c.fg_evals,
        cum_coeff_evals: c.coeff_evals,
        cum_bytes: c.bytes,
        elapsed_seconds: t,
        ls_clean: clean,
        restarted,
    };

    let mut trace = vec![record(
        0,
        f,
        &g,
        0.0,
        0,
        objective.counters(),
        elapsed(),
        true,
        false,
    )];
    let mut history = LbfgsHistory::new(config.history);
    // raw NCG direction and gradient of the previous iteration
    let mut ncg_memory: Option<(DenseVector, DenseVector)> = None;
    let mut prev_step: Option<(f64, f64)> = None;
    let use_pels = config.linesearch == LineSearchKind::Pels;

    let mut k = 0;
    let termination = loop {
        if norm2(&g) <= config.grad_tol {
            break Termination::Converged;
        }
        if k >= config.max_iters {
            break Termination::MaxIters;
        }

        let (mut p, mut restarted) = match config.algorithm {
            Algorithm::Gd => (gd_direction(&g), false),
            Algorithm::Ncg => ncg_direction(
                &g,
                ncg_memory.as_ref().map(|(gp, pp)| (gp, pp)),
                config.powell_threshold,
            )?,
            Algorithm::Lbfgs => (lbfgs_direction(&g, &history)?, false),
        };
        let mut gtp = g.dot(&p)?;
        if !(gtp < 0.0) {
            p = gd_direction(&g);
            gtp = g.dot(&p)?;
            history.clear();
            restarted = true;
        }
        let raw_p = p.clone();
        if use_pels && config.algorithm != Algorithm::Lbfgs {
            p = p.scaled(1.0 / norm2(&p));
            gtp = g.dot(&p)?;
        }
        let alpha0 = match prev_step {
            Some((a, prev_gtp)) => initial_step(Some(a), prev_gtp, gtp, config.algorithm),
            None => initial_step(None, 0.0, gtp, config.algorithm),
        };

        let (alpha, f_new, g_new, n_e, clean) = match config.linesearch {
            LineSearchKind::Wolfe => {
                let mut oracle = FusedPhi {
                    objective: &mut *objective,
                    w: &w,
                    p: &p,
                    seen: Vec::new(),
                };
                let out = wolfe_line_search(&mut oracle, f, gtp, alpha0, &config.wolfe)?;
                if out.alpha == 0.0 {
                    k += 1;
                    trace.push(record(
                        k,
                        f,
                        &g,
                        0.0,
                        out.n_evals,
                        objective.counters(),
                        elapsed(),
                        false,
                        restarted,
                    ));
                    break Termination::Stalled;
                }
                let (_, f_new, g_new) = oracle
                    .seen
                    .into_iter()
                    .rev()
                    .find(|(a, _, _)| *a == out.alpha)
                    .expect("accepted step was evaluated");
                (out.alpha, f_new, g_new, out.n_evals, out.converged)
            }
            LineSearchKind::Pels => {
                let mut oracle = CoeffPhi {
                    objective: &mut *objective,
                    w: &w,
                    p: &p,
                };
                let out = pels_line_search(&mut oracle, alpha0, &config.pels)?;
                let w_new = axpy(out.alpha, &p, &w)?;
                let (f_new, g_new) = objective.value_grad(&w_new)?;
                (
                    out.alpha,
                    f_new,
                    g_new,
                    out.n_expansions,
                    out.converged && !out.halved,
                )
            }
        };
        check_finite(f_new, &g_new, k + 1)?;

        let s = p.scaled(alpha);
        let w_new = axpy(1.0, &s, &w)?;
        if config.algorithm == Algorithm::Lbfgs {
            history.push(s, g_new.sub(&g)?)?;
        }
        if config.algorithm == Algorithm::Ncg {
            ncg_memory = Some((g.clone(), raw_p));
        }
        prev_step = Some((alpha, gtp));
        w = w_new;
        f = f_new;
        g = g_new;
        k += 1;
        trace.push(record(
            k,
            f,
            &g,
            alpha,
            n_e,
            objective.counters(),
            elapsed(),
            clean,
            restarted,
        ));
    };

    Ok(RunOutput {
        w,
        trace,
        termination,
    })
}

fn check_finite(f: f64, g: &DenseVector, k: usize) -> Result<()> {
    if !f.is_finite() || !g.is_finite() {
        return Err(Error::NonFinite(format!(
            "loss or gradient at iteration {k} (loss = {f})"
        )));
    }
    Ok(())
}

/// Trains `loss` on `data` from `w = 0`; also returns the communication
/// ledger.
pub fn train<L: LossModel + ?Sized>(
    config: &OptimizerConfig,
    loss: &L,
    data: &ShardedDataset,
    topology: ReduceTopology,
) -> Result<(RunOutput, CommLedger)> {
    if data.n() == 0 {
        return Err(Error::InvalidArgument("dataset is empty".into()));
    }
    let mut objective = DistributedObjective::new(loss, data, topology);
    let out = run(config, &mut objective, DenseVector::zeros(data.dim()))?;
    Ok((out, *objective.ledger()))
}
