//! Line searches along a fixed descent direction.
//!
//! * [`wolfe_line_search`]: bracketing search with safeguarded cubic
//!   interpolation that stops at the first strong Wolfe point. Every trial
//!   costs one value+derivative evaluation.
//! * [`pels_line_search`]: polynomial expansion search. Each expansion
//!   fetches the Taylor coefficients of `phi` at the current point, then
//!   minimizes the truncated polynomial locally with Newton-Raphson.

use crate::error::{Error, Result};
use crate::losses::MAX_DEGREE;

/// Yields `(phi(alpha), phi'(alpha))`.
pub trait PhiOracle {
    fn eval(&mut self, alpha: f64) -> Result<(f64, f64)>;
}

impl<F: FnMut(f64) -> (f64, f64)> PhiOracle for F {
    fn eval(&mut self, alpha: f64) -> Result<(f64, f64)> {
        Ok(self(alpha))
    }
}

/// Yields the Taylor coefficients `c_0..=c_degree` of `phi` about
/// `alpha_j`, regularizer included.
pub trait CoeffOracle {
    fn coeffs(&mut self, alpha_j: f64, degree: usize) -> Result<Vec<f64>>;
}

impl<F: FnMut(f64, usize) -> Vec<f64>> CoeffOracle for F {
    fn coeffs(&mut self, alpha_j: f64, degree: usize) -> Result<Vec<f64>> {
        Ok(self(alpha_j, degree))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WolfeParams {
    /// Sufficient decrease constant.
    pub nu1: f64,
    /// Curvature constant.
    pub nu2: f64,
    /// Maximum number of oracle calls.
    pub max_iters: usize,
    pub alpha_max: f64,
}

impl Default for WolfeParams {
    fn default() -> Self {
        Self {
            nu1: 1e-4,
            nu2: 0.9,
            max_iters: 10,
            alpha_max: 1e6,
        }
    }
}

impl WolfeParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.nu1 && self.nu1 < self.nu2 && self.nu2 < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "need 0 < nu1 < nu2 < 1, got nu1={} nu2={}",
                self.nu1, self.nu2
            )));
        }
        if self.max_iters == 0 || !(self.alpha_max > 0.0) {
            return Err(Error::InvalidArgument(
                "max_iters and alpha_max must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PelsParams {
    /// Relative truncation error threshold.
    pub theta: f64,
    pub degree: usize,
    pub max_expansions: usize,
    pub nr_tol: f64,
    pub nr_max_iters: usize,
    /// Below this magnitude of the model value the termination test is
    /// absolute rather than relative.
    pub denom_floor: f64,
}

impl Default for PelsParams {
    fn default() -> Self {
        Self {
            theta: 1e-4,
            degree: 5,
            max_expansions: 10,
            nr_tol: 1e-15,
            nr_max_iters: 10,
            denom_floor: 1e-12,
        }
    }
}

impl PelsParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "theta must be > 0, got {}",
                self.theta
            )));
        }
        if !(2..=MAX_DEGREE).contains(&self.degree) {
            return Err(Error::InvalidArgument(format!(
                "degree must be in 2..={MAX_DEGREE}, got {}",
                self.degree
            )));
        }
        if self.max_expansions == 0 {
            return Err(Error::InvalidArgument("max_expansions must be >= 1".into()));
        }
        Ok(())
    }
}

/// Strong Wolfe test: sufficient decrease and `|phi'(alpha)| <= nu2 |phi'(0)|`.
pub fn check_wolfe(
    phi0: f64,
    dphi0: f64,
    alpha: f64,
    phi_a: f64,
    dphi_a: f64,
    params: &WolfeParams,
) -> bool {
    sufficient_decrease(phi0, dphi0, alpha, phi_a, params.nu1)
        && dphi_a.abs() <= params.nu2 * dphi0.abs()
}

#[inline]
fn sufficient_decrease(phi0: f64, dphi0: f64, alpha: f64, phi_a: f64, nu1: f64) -> bool {
    // false when either side is NaN
    phi_a <= phi0 + nu1 * alpha * dphi0
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WolfeOutcome {
    pub alpha: f64,
    pub phi: f64,
    pub dphi: f64,
    pub n_evals: usize,
    /// False when the iteration budget ran out (or the bracket collapsed)
    /// and the lowest point seen is returned instead.
    pub converged: bool,
}

#[derive(Debug, Clone, Copy)]
struct Trial {
    a: f64,
    f: f64,
    g: f64,
}

/// Minimizer of the cubic matching value and slope at both ends.
fn cubic_minimizer(lo: Trial, hi: Trial) -> Option<f64> {
    let (a, b) = (lo.a, hi.a);
    if a == b || !(lo.f.is_finite() && hi.f.is_finite() && lo.g.is_finite() && hi.g.is_finite()) {
        return None;
    }
    let d1 = lo.g + hi.g - 3.0 * (lo.f - hi.f) / (a - b);
    let disc = d1 * d1 - lo.g * hi.g;
    if disc < 0.0 {
        return None;
    }
    let d2 = (b - a).signum() * disc.sqrt();
    let denom = hi.g - lo.g + 2.0 * d2;
    if denom == 0.0 {
        return None;
    }
    let x = b - (b - a) * (hi.g + d2 - d1) / denom;
    x.is_finite().then_some(x)
}

/// Cubic step kept away from both ends of the interval; midpoint otherwise.
fn safeguarded_step(lo: Trial, hi: Trial) -> f64 {
    let left = lo.a.min(hi.a);
    let right = lo.a.max(hi.a);
    let margin = 1e-3 * (right - left);
    match cubic_minimizer(lo, hi) {
        Some(x) if x > left + margin && x < right - margin => x,
        _ => 0.5 * (left + right),
    }
}

struct WolfeRun<'a, O: PhiOracle + ?Sized> {
    oracle: &'a mut O,
    phi0: f64,
    dphi0: f64,
    params: WolfeParams,
    evals: usize,
    best: Trial,
}

impl<O: PhiOracle + ?Sized> WolfeRun<'_, O> {
    fn eval(&mut self, a: f64) -> Result<Trial> {
        let (f, g) = self.oracle.eval(a)?;
        self.evals += 1;
        let t = Trial { a, f, g };
        if f < self.best.f {
            self.best = t;
        }
        Ok(t)
    }

    fn done(&self, t: Trial, converged: bool) -> WolfeOutcome {
        WolfeOutcome {
            alpha: t.a,
            phi: t.f,
            dphi: t.g,
            n_evals: self.evals,
            converged,
        }
    }

    fn give_up(&self) -> WolfeOutcome {
        self.done(self.best, false)
    }

    fn curvature_ok(&self, t: Trial) -> bool {
        t.g.abs() <= self.params.nu2 * self.dphi0.abs()
    }

    fn decrease_ok(&self, t: Trial) -> bool {
        sufficient_decrease(self.phi0, self.dphi0, t.a, t.f, self.params.nu1)
    }

    fn search(&mut self, alpha0: f64) -> Result<WolfeOutcome> {
        let mut prev = Trial {
            a: 0.0,
            f: self.phi0,
            g: self.dphi0,
        };
        let mut a = alpha0.min(self.params.alpha_max);
        loop {
            if self.evals >= self.params.max_iters {
                return Ok(self.give_up());
            }
            let cur = self.eval(a)?;
            if !self.decrease_ok(cur) || (self.evals > 1 && cur.f >= prev.f) {
                return self.zoom(prev, cur);
            }
            if self.curvature_ok(cur) {
                return Ok(self.done(cur, true));
            }
            if cur.g >= 0.0 {
                return self.zoom(cur, prev);
            }
            if a >= self.params.alpha_max {
                return Ok(self.give_up());
            }
            prev = cur;
            a = (2.0 * a).min(self.params.alpha_max);
        }
    }

    /// `lo` satisfies sufficient decrease and has the lower value; the
    /// minimizer lies between `lo` and `hi`.
    fn zoom(&mut self, mut lo: Trial, mut hi: Trial) -> Result<WolfeOutcome> {
        loop {
            if self.evals >= self.params.max_iters {
                return Ok(self.give_up());
            }
            let width = (hi.a - lo.a).abs();
            if width <= f64::EPSILON * lo.a.abs().max(hi.a.abs()) {
                return Ok(self.give_up());
            }
            let a = safeguarded_step(lo, hi);
            let cur = self.eval(a)?;
            if !self.decrease_ok(cur) || cur.f >= lo.f {
                hi = cur;
            } else {
                if self.curvature_ok(cur) {
                    return Ok(self.done(cur, true));
                }
                if cur.g * (hi.a - lo.a) >= 0.0 {
                    hi = lo;
                }
                lo = cur;
            }
        }
    }
}

/// Finds a step satisfying the strong Wolfe conditions. `phi0` and `dphi0`
/// are the value and slope at `alpha = 0`, already known to the caller; if
/// `alpha0` passes the test it is returned after a single oracle call.
pub fn wolfe_line_search<O: PhiOracle + ?Sized>(
    oracle: &mut O,
    phi0: f64,
    dphi0: f64,
    alpha0: f64,
    params: &WolfeParams,
) -> Result<WolfeOutcome> {
    params.validate()?;
    if !(dphi0 < 0.0) {
        return Err(Error::NotDescent(dphi0));
    }
    if !(alpha0 > 0.0 && alpha0.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "initial step must be positive, got {alpha0}"
        )));
    }
    let mut run = WolfeRun {
        oracle,
        phi0,
        dphi0,
        params: *params,
        evals: 0,
        best: Trial {
            a: 0.0,
            f: phi0,
            g: dphi0,
        },
    };
    run.search(alpha0)
}

/// Truncated Taylor model `W(alpha) = sum c_l (alpha - alpha_j)^l`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolynomialModel {
    pub alpha_j: f64,
    pub coeffs: Vec<f64>,
}

impl PolynomialModel {
    pub fn new(alpha_j: f64, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::InvalidArgument("empty coefficient vector".into()));
        }
        if coeffs.iter().any(|c| !c.is_finite()) || !alpha_j.is_finite() {
            return Err(Error::NonFinite(format!(
                "polynomial model about alpha = {alpha_j}"
            )));
        }
        Ok(Self { alpha_j, coeffs })
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// `(W, W', W'')` at `alpha`, all from one Horner sweep.
    pub fn eval(&self, alpha: f64) -> (f64, f64, f64) {
        let (w, d1, d2, _) = self.eval_with_scale(alpha);
        (w, d1, d2)
    }

    /// Also returns `sum |l c_l| |delta|^(l-1)`, the magnitude scale of the
    /// terms making up `W'`.
    fn eval_with_scale(&self, alpha: f64) -> (f64, f64, f64, f64) {
        let x = alpha - self.alpha_j;
        let ax = x.abs();
        let mut iter = self.coeffs.iter().rev();
        let mut p = *iter.next().unwrap();
        let mut dp = 0.0;
        let mut ddp = 0.0;
        // Horner on |c| gives the scale of W'
        let mut ap = p.abs();
        let mut adp = 0.0;
        for &c in iter {
            ddp = ddp * x + dp;
            dp = dp * x + p;
            p = p * x + c;
            adp = adp * ax + ap;
            ap = ap * ax + c.abs();
        }
        (p, dp, 2.0 * ddp, adp)
    }
}

/// How a polynomial step was chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepRoute {
    /// Newton-Raphson converged to a positive local minimizer of the model.
    Newton,
    /// Single Newton step from the expansion point, `alpha_j - c1 / (2 c2)`.
    NewtonFallback,
    /// Both of the above failed or were non-positive; `alpha_j / 2`.
    Halved,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolyStep {
    pub alpha: f64,
    pub route: StepRoute,
}

/// Minimizes the model near its expansion point.
///
/// Newton-Raphson on `W'` starts at `alpha_j`. It is accepted if `|W'|`
/// drops to `nr_tol` (relative to the magnitude of the terms of `W'`) within
/// `nr_max_iters` steps at a point with `W'' > 0` and `alpha > 0`.
pub fn minimize_polynomial(model: &PolynomialModel, params: &PelsParams) -> Result<PolyStep> {
    if model.degree() < 2 {
        return Err(Error::InvalidArgument(
            "polynomial model needs degree >= 2".into(),
        ));
    }
    if let Some(alpha) = newton_minimize(model, params.nr_tol, params.nr_max_iters) {
        return Ok(PolyStep {
            alpha,
            route: StepRoute::Newton,
        });
    }
    Ok(fallback_step(model))
}

fn newton_minimize(model: &PolynomialModel, tol: f64, max_iters: usize) -> Option<f64> {
    let mut alpha = model.alpha_j;
    let mut converged = false;
    for iter in 0..=max_iters {
        let (_, d1, d2, scale) = model.eval_with_scale(alpha);
        if d1.abs() <= tol * scale.max(1.0) {
            converged = true;
            break;
        }
        if iter == max_iters || d2 == 0.0 || !d2.is_finite() {
            break;
        }
        let next = alpha - d1 / d2;
        if !next.is_finite() {
            break;
        }
        if next == alpha {
            // stationary to machine precision
            converged = true;
            break;
        }
        alpha = next;
    }
    if !converged {
        return None;
    }
    let (_, _, d2) = model.eval(alpha);
    (d2 > 0.0 && alpha > 0.0).then_some(alpha)
}

fn fallback_step(model: &PolynomialModel) -> PolyStep {
    let c1 = model.coeffs[1];
    let c2 = model.coeffs[2];
    if c2 > 0.0 {
        let alpha = model.alpha_j - c1 / (2.0 * c2);
        if alpha > 0.0 && alpha.is_finite() {
            return PolyStep {
                alpha,
                route: StepRoute::NewtonFallback,
            };
        }
    }
    PolyStep {
        alpha: 0.5 * model.alpha_j,
        route: StepRoute::Halved,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PelsOutcome {
    pub alpha: f64,
    /// `c_0` of the last expansion, i.e. `phi` at the last expansion point.
    pub c0_at_expansion: f64,
    pub n_expansions: usize,
    /// False when `max_expansions` ran out before the truncation test passed.
    pub converged: bool,
    /// Set when any expansion had to take the `alpha_j / 2` step.
    pub halved: bool,
    /// Expansion points visited, starting with `alpha0`.
    pub expansion_points: Vec<f64>,
    pub last_model: PolynomialModel,
}

/// Polynomial expansion line search.
///
/// Each round expands `phi` about the current point, steps to the model
/// minimizer and estimates the truncation error there as
/// `c_d (alpha_{j+1} - alpha_j)^d`. The search stops once that estimate is
/// at most `theta` times `|W(alpha_{j+1})|` (absolute when the model value
/// is below `denom_floor`).
pub fn pels_line_search<O: CoeffOracle + ?Sized>(
    oracle: &mut O,
    alpha0: f64,
    params: &PelsParams,
) -> Result<PelsOutcome> {
    params.validate()?;
    if !(alpha0 >= 0.0 && alpha0.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "initial step must be finite and >= 0, got {alpha0}"
        )));
    }
    let d = params.degree;
    let mut alpha_j = alpha0;
    let mut points = Vec::with_capacity(params.max_expansions);
    let mut halved = false;
    let mut expansions = 0;
    loop {
        let coeffs = oracle.coeffs(alpha_j, d)?;
        expansions += 1;
        if coeffs.len() != d + 1 {
            return Err(Error::PayloadLength {
                expected: d + 1,
                found: coeffs.len(),
            });
        }
        points.push(alpha_j);
        let model = PolynomialModel::new(alpha_j, coeffs)?;
        let step = minimize_polynomial(&model, params)?;
        halved |= step.route == StepRoute::Halved;

        let delta = step.alpha - alpha_j;
        let eps = model.coeffs[d] * delta.powi(d as i32);
        let (w_next, _, _) = model.eval(step.alpha);
        let denom = w_next.abs();
        let passed = if denom < params.denom_floor {
            eps.abs() <= params.theta
        } else {
            eps.abs() / denom <= params.theta
        };
        if passed || expansions >= params.max_expansions {
            return Ok(PelsOutcome {
                alpha: step.alpha,
                c0_at_expansion: model.coeffs[0],
                n_expansions: expansions,
                converged: passed,
                halved,
                expansion_points: points,
                last_model: model,
            });
        }
        alpha_j = step.alpha;
    }
}
