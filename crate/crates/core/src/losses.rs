//! Loss models: value, gradient and per-instance Taylor coefficients of
//! `phi(alpha) = L(w + alpha p)`, plus the driver-side regularizer
//! polynomial.
//!
//! Both models are of the form `L(w) = (lambda/2)|w|^2 + (1/n) sum f(w.x_i; y_i)`,
//! so everything reduces to derivatives of a scalar function `f(t; y)`.
//! The coefficient of `(alpha - alpha_j)^l` contributed by instance `i` is
//! `f^(l)(r.x_i) (p.x_i)^l / (l! n)` with `r = w + alpha_j p`.

use crate::dataset::{Instance, ShardedDataset};
use crate::engine::Engine;
use crate::error::{Error, Result};
use crate::numerics::{axpy, dot_slices, DenseVector};

/// Highest supported expansion degree.
pub const MAX_DEGREE: usize = 16;

pub trait LossModel: Send + Sync {
    fn lambda(&self) -> f64;

    /// `(f(t; y), f'(t; y))`.
    fn point_value_slope(&self, t: f64, y: f64) -> (f64, f64);

    /// Writes `f^(l)(t; y) / l!` for `l = 0..out.len()`.
    /// `out.len()` never exceeds `MAX_DEGREE + 1`.
    fn point_taylor(&self, t: f64, y: f64, out: &mut [f64]);
}

/// Numerically stable `log(1 + e^{-t})`.
fn log1p_exp_neg(t: f64) -> f64 {
    if t >= 0.0 {
        (-t).exp().ln_1p()
    } else {
        -t + t.exp().ln_1p()
    }
}

/// `(s, 1 - s)` with `s = 1 / (1 + e^{-t})`, each computed without
/// cancellation.
fn sigmoid_pair(t: f64) -> (f64, f64) {
    if t >= 0.0 {
        let e = (-t).exp();
        (1.0 / (1.0 + e), e / (1.0 + e))
    } else {
        let e = t.exp();
        (e / (1.0 + e), 1.0 / (1.0 + e))
    }
}

/// Derivatives of the logistic loss in `t` as polynomials in the sigmoid.
///
/// For `l >= 2`, `f^(l)(t) = s(1-s) Q_l(s)` where `Q_2 = 1` and
/// `Q_{l+1} = (1 - 2s) Q_l + (s - s^2) Q_l'`. This is `d/dt = s(1-s) d/ds`
/// applied to `s(1-s) Q_l` with the common factor pulled out so the
/// evaluation stays accurate when `s` is near 0 or 1.
#[derive(Debug, Clone)]
pub struct SigmoidDerivatives {
    /// `q[l - 2]` holds the ascending integer coefficients of `Q_l`.
    q: Vec<Vec<i64>>,
}

impl SigmoidDerivatives {
    pub fn new(max_order: usize) -> Self {
        let mut q: Vec<Vec<i64>> = vec![vec![1]];
        for _ in 3..=max_order.max(2) {
            let prev = q.last().unwrap();
            let mut next = vec![0i64; prev.len() + 1];
            for (k, &c) in prev.iter().enumerate() {
                // (1 - 2s) * c s^k
                next[k] += c;
                next[k + 1] -= 2 * c;
                // (s - s^2) * k c s^{k-1}
                if k > 0 {
                    let kc = k as i64 * c;
                    next[k] += kc;
                    next[k + 1] -= kc;
                }
            }
            q.push(next);
        }
        Self { q }
    }

    pub fn max_order(&self) -> usize {
        self.q.len() + 1
    }

    /// Integer coefficients of `Q_order`, ascending in `s`.
    pub fn factor(&self, order: usize) -> &[i64] {
        &self.q[order - 2]
    }

    /// `f^(order)(t)` for `order >= 2`, given `(s, 1-s)`.
    pub fn eval(&self, order: usize, s: f64, one_minus_s: f64) -> f64 {
        let poly = self.factor(order);
        let mut acc = 0.0;
        for &c in poly.iter().rev() {
            acc = acc * s + c as f64;
        }
        s * one_minus_s * acc
    }
}

/// L2-regularized logistic regression with labels in `{0, 1}`.
#[derive(Debug, Clone)]
pub struct Logistic {
    lambda: f64,
    derivs: SigmoidDerivatives,
    inv_factorial: Vec<f64>,
}

impl Logistic {
    pub fn new(lambda: f64) -> Result<Self> {
        check_lambda(lambda)?;
        Ok(Self {
            lambda,
            derivs: SigmoidDerivatives::new(MAX_DEGREE),
            inv_factorial: inv_factorials(MAX_DEGREE),
        })
    }
}

/// `N(y)`: 1 for a zero label, 0 otherwise.
#[inline]
fn negative_indicator(y: f64) -> f64 {
    if y != 0.0 {
        0.0
    } else {
        1.0
    }
}

impl LossModel for Logistic {
    fn lambda(&self) -> f64 {
        self.lambda
    }

    fn point_value_slope(&self, t: f64, y: f64) -> (f64, f64) {
        let ny = negative_indicator(y);
        let (_, one_minus_s) = sigmoid_pair(t);
        (log1p_exp_neg(t) + ny * t, ny - one_minus_s)
    }

    fn point_taylor(&self, t: f64, y: f64, out: &mut [f64]) {
        let ny = negative_indicator(y);
        let (s, one_minus_s) = sigmoid_pair(t);
        for (l, slot) in out.iter_mut().enumerate() {
            *slot = match l {
                0 => log1p_exp_neg(t) + ny * t,
                1 => ny - one_minus_s,
                _ => self.derivs.eval(l, s, one_minus_s) * self.inv_factorial[l],
            };
        }
    }
}

/// L2-regularized least squares, `f(t; y) = (t - y)^2 / 2`.
#[derive(Debug, Clone, Copy)]
pub struct LeastSquares {
    lambda: f64,
}

impl LeastSquares {
    pub fn new(lambda: f64) -> Result<Self> {
        check_lambda(lambda)?;
        Ok(Self { lambda })
    }
}

impl LossModel for LeastSquares {
    fn lambda(&self) -> f64 {
        self.lambda
    }

    fn point_value_slope(&self, t: f64, y: f64) -> (f64, f64) {
        let e = t - y;
        (0.5 * e * e, e)
    }

    fn point_taylor(&self, t: f64, y: f64, out: &mut [f64]) {
        let e = t - y;
        for (l, slot) in out.iter_mut().enumerate() {
            *slot = match l {
                0 => 0.5 * e * e,
                1 => e,
                2 => 0.5,
                _ => 0.0,
            };
        }
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "lambda must be finite and >= 0, got {lambda}"
        )));
    }
    Ok(())
}

fn inv_factorials(max: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(max + 1);
    let mut f = 1.0f64;
    for l in 0..=max {
        if l > 0 {
            f *= l as f64;
        }
        out.push(1.0 / f);
    }
    out
}

fn check_degree(d: usize) -> Result<()> {
    if !(2..=MAX_DEGREE).contains(&d) {
        return Err(Error::InvalidArgument(format!(
            "expansion degree must be in 2..={MAX_DEGREE}, got {d}"
        )));
    }
    Ok(())
}

/// Taylor coefficients of `phi` at some expansion point.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientVector {
    pub alpha_j: f64,
    /// `c_0..=c_d`.
    pub coeffs: Vec<f64>,
    /// Whether the regularizer polynomial has been added.
    pub includes_regularizer: bool,
}

impl CoefficientVector {
    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }
}

/// Adds one instance's `F_0..F_d` into `out`.
#[inline]
pub fn accumulate_instance_coeffs<L: LossModel + ?Sized>(
    loss: &L,
    r: &[f64],
    p: &[f64],
    inst: &Instance,
    inv_n: f64,
    out: &mut [f64],
) {
    let t = inst.features.dot_unchecked(r);
    let pi = inst.features.dot_unchecked(p);
    let mut taylor = [0.0f64; MAX_DEGREE + 1];
    let taylor = &mut taylor[..out.len()];
    loss.point_taylor(t, inst.label, taylor);
    let mut pi_pow = inv_n;
    for (slot, coeff) in out.iter_mut().zip(taylor.iter()) {
        *slot += coeff * pi_pow;
        pi_pow *= pi;
    }
}

/// Per-instance coefficient function `x -> [F_0..F_d]` for
/// [`crate::engine::map_reduce`]. `n` is the full dataset size.
pub fn coeff_fn<'a, L: LossModel + ?Sized>(
    loss: &'a L,
    r: &'a DenseVector,
    p: &'a DenseVector,
    degree: usize,
    n: usize,
) -> Result<impl Fn(&Instance) -> Vec<f64> + Sync + 'a> {
    check_degree(degree)?;
    if r.len() != p.len() {
        return Err(Error::DimensionMismatch {
            expected: r.len(),
            found: p.len(),
        });
    }
    let inv_n = 1.0 / n as f64;
    Ok(move |inst: &Instance| {
        let mut out = vec![0.0; degree + 1];
        accumulate_instance_coeffs(loss, r.as_slice(), p.as_slice(), inst, inv_n, &mut out);
        out
    })
}

/// `(lambda/2) [|r|^2, 2 r.p, |p|^2, 0, ...]`, padded to length `d + 1`.
pub fn regularizer_coeffs(
    r: &DenseVector,
    p: &DenseVector,
    lambda: f64,
    degree: usize,
) -> Result<CoefficientVector> {
    check_degree(degree)?;
    let rp = r.dot(p)?;
    let mut coeffs = vec![0.0; degree + 1];
    coeffs[0] = 0.5 * lambda * dot_slices(r.as_slice(), r.as_slice());
    coeffs[1] = lambda * rp;
    coeffs[2] = 0.5 * lambda * dot_slices(p.as_slice(), p.as_slice());
    Ok(CoefficientVector {
        alpha_j: f64::NAN,
        coeffs,
        includes_regularizer: true,
    })
}

fn check_data_dim(data: &ShardedDataset, len: usize) -> Result<()> {
    if data.dim() != len {
        return Err(Error::DimensionMismatch {
            expected: data.dim(),
            found: len,
        });
    }
    if data.n() == 0 {
        return Err(Error::InvalidArgument("dataset is empty".into()));
    }
    Ok(())
}

/// Loss value and gradient at `w` in one fused reduce of `m + 1` elements
/// (gradient followed by value). `w` is broadcast first.
pub fn value_grad<L: LossModel + ?Sized>(
    loss: &L,
    w: &DenseVector,
    data: &ShardedDataset,
    engine: &mut Engine,
) -> Result<(f64, DenseVector)> {
    check_data_dim(data, w.len())?;
    let m = w.len();
    let inv_n = 1.0 / data.n() as f64;
    engine.broadcast(data, m);
    let ws = w.as_slice();
    let summed = engine.map_reduce_into(data, m + 1, |inst, acc| {
        let t = inst.features.dot_unchecked(ws);
        let (f, slope) = loss.point_value_slope(t, inst.label);
        inst.features.scatter_scaled(slope * inv_n, &mut acc[..m]);
        acc[m] += f * inv_n;
    })?;
    let mut summed = summed.into_vec();
    let data_value = summed.pop().unwrap();
    let lambda = loss.lambda();
    let value = data_value + 0.5 * lambda * dot_slices(ws, ws);
    for (g, wi) in summed.iter_mut().zip(ws) {
        *g += lambda * wi;
    }
    Ok((value, DenseVector::from_vec(summed)))
}

/// Coefficients of `phi` about `alpha_j` (data sum plus regularizer).
/// Broadcasts `r = w + alpha_j p` and `p`, then reduces `d + 1` scalars.
pub fn coefficients<L: LossModel + ?Sized>(
    loss: &L,
    w: &DenseVector,
    p: &DenseVector,
    alpha_j: f64,
    degree: usize,
    data: &ShardedDataset,
    engine: &mut Engine,
) -> Result<CoefficientVector> {
    check_degree(degree)?;
    check_data_dim(data, w.len())?;
    let r = axpy(alpha_j, p, w)?;
    let m = w.len();
    engine.broadcast(data, m);
    engine.broadcast(data, m);
    let inv_n = 1.0 / data.n() as f64;
    let (rs, ps) = (r.as_slice(), p.as_slice());
    let data_part = engine.map_reduce_into(data, degree + 1, |inst, acc| {
        accumulate_instance_coeffs(loss, rs, ps, inst, inv_n, acc);
    })?;
    let reg = regularizer_coeffs(&r, p, loss.lambda(), degree)?;
    let coeffs: Vec<f64> = reg
        .coeffs
        .iter()
        .zip(data_part.iter())
        .map(|(a, b)| a + b)
        .collect();
    if coeffs.iter().any(|c| !c.is_finite()) {
        return Err(Error::NonFinite(format!(
            "expansion coefficients at alpha = {alpha_j}"
        )));
    }
    Ok(CoefficientVector {
        alpha_j,
        coeffs,
        includes_regularizer: true,
    })
}

/// Training accuracy measure `exp(-loss)`.
pub fn accuracy_proxy(loss_value: f64) -> f64 {
    (-loss_value).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::shard;
    use crate::engine::ReduceTopology;
    use crate::numerics::SparseVector;
    use approx::assert_relative_eq;

    fn inst(x: &[f64], y: f64) -> Instance {
        Instance {
            features: SparseVector::from_dense(x).unwrap(),
            label: y,
        }
    }

    fn dv(v: &[f64]) -> DenseVector {
        DenseVector::new(v.to_vec()).unwrap()
    }

    fn engine() -> Engine {
        Engine::new(ReduceTopology::AllToOne)
    }

    #[test]
    fn sigmoid_factor_polynomials() {
        let d = SigmoidDerivatives::new(5);
        assert_eq!(d.factor(2), &[1]);
        assert_eq!(d.factor(3), &[1, -2]);
        assert_eq!(d.factor(4), &[1, -6, 6]);
        assert_eq!(d.factor(5), &[1, -14, 36, -24]);
        assert_eq!(d.max_order(), 5);
    }

    #[test]
    fn sigmoid_derivatives_match_finite_differences() {
        // d/dt of f^(l) against f^(l+1), central differences with h = 1e-5
        let d = SigmoidDerivatives::new(8);
        for &t in &[-3.0, -0.4, 0.0, 0.7, 2.5] {
            for l in 2..8 {
                let h = 1e-5;
                let at = |t: f64| {
                    let (s, c) = sigmoid_pair(t);
                    d.eval(l, s, c)
                };
                let fd = (at(t + h) - at(t - h)) / (2.0 * h);
                let (s, c) = sigmoid_pair(t);
                assert_relative_eq!(fd, d.eval(l + 1, s, c), epsilon = 1e-7, max_relative = 1e-5);
            }
        }
    }

    #[test]
    fn logistic_value_at_zero_is_log2() {
        let data = shard(vec![inst(&[1.0, -2.0], 1.0), inst(&[0.5, 3.0], 0.0)], 2).unwrap();
        let loss = Logistic::new(0.0).unwrap();
        let (v, _) = value_grad(&loss, &DenseVector::zeros(2), &data, &mut engine()).unwrap();
        assert_relative_eq!(v, std::f64::consts::LN_2, max_relative = 1e-15);
    }

    #[test]
    fn logistic_gradient_examples() {
        let loss = Logistic::new(0.0).unwrap();
        let data = shard(vec![inst(&[1.0, 0.0], 1.0)], 1).unwrap();
        let (_, g) = value_grad(&loss, &DenseVector::zeros(2), &data, &mut engine()).unwrap();
        assert_relative_eq!(g[0], -0.5, epsilon = 1e-15);
        assert_eq!(g[1], 0.0);

        let data = shard(vec![inst(&[1.0], 0.0), inst(&[2.0], 1.0)], 2).unwrap();
        let (_, g) = value_grad(&loss, &DenseVector::zeros(1), &data, &mut engine()).unwrap();
        assert_relative_eq!(g[0], -0.25, epsilon = 1e-15);
    }

    #[test]
    fn logistic_coefficient_examples() {
        let loss = Logistic::new(0.0).unwrap();
        let r = dv(&[0.0]);
        let p = dv(&[1.0]);
        let f = coeff_fn(&loss, &r, &p, 3, 1).unwrap();
        let c = f(&inst(&[1.0], 0.0));
        assert_relative_eq!(c[0], std::f64::consts::LN_2, max_relative = 1e-15);
        assert_relative_eq!(c[1], 0.5, max_relative = 1e-15);
        assert_relative_eq!(c[2], 0.125, max_relative = 1e-15);
        assert_eq!(c[3], 0.0);

        let data = shard(vec![inst(&[1.0], 0.0), inst(&[2.0], 1.0)], 2).unwrap();
        let c = coefficients(&loss, &r, &p, 0.0, 3, &data, &mut engine()).unwrap();
        let expected = [std::f64::consts::LN_2, -0.25, 0.3125, 0.0];
        for (a, b) in c.coeffs.iter().zip(expected) {
            assert_relative_eq!(*a, b, epsilon = 1e-15);
        }
    }

    #[test]
    fn third_coefficient_vanishes_at_t_zero() {
        let loss = Logistic::new(0.0).unwrap();
        let mut out = [0.0; 6];
        loss.point_taylor(0.0, 1.0, &mut out);
        assert_eq!(out[3], 0.0);
        assert_eq!(out[5], 0.0);
    }

    #[test]
    fn logistic_is_stable_for_large_margins() {
        let loss = Logistic::new(0.0).unwrap();
        let mut out = [0.0; 6];
        loss.point_taylor(-800.0, 0.0, &mut out);
        assert!(out.iter().all(|v| v.is_finite()));
        assert_relative_eq!(out[0], 0.0, epsilon = 1e-12);
        loss.point_taylor(-800.0, 1.0, &mut out);
        assert_relative_eq!(out[0], 800.0);
        assert_relative_eq!(out[1], -1.0);
        let (v, s) = loss.point_value_slope(900.0, 1.0);
        assert!(v.is_finite() && s.is_finite());
    }

    #[test]
    fn least_squares_coefficient_examples() {
        let loss = LeastSquares::new(0.0).unwrap();
        let p = dv(&[1.0]);
        let x = inst(&[1.0], 1.0);
        let c = coeff_fn(&loss, &dv(&[0.0]), &p, 5, 1).unwrap()(&x);
        assert_eq!(c, vec![0.5, -1.0, 0.5, 0.0, 0.0, 0.0]);
        let c = coeff_fn(&loss, &dv(&[1.0]), &dv(&[3.0]), 4, 1).unwrap()(&x);
        assert_eq!(c, vec![0.0, 0.0, 4.5, 0.0, 0.0]);
        let x = inst(&[1.0, 0.0], 0.0);
        let c = coeff_fn(&loss, &dv(&[2.0, 0.0]), &dv(&[0.0, 1.0]), 3, 2).unwrap()(&x);
        assert_eq!(c, vec![1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn regularizer_examples() {
        let c = regularizer_coeffs(&dv(&[1.0, 0.0]), &dv(&[0.0, 1.0]), 2.0, 5).unwrap();
        assert_eq!(c.coeffs, vec![1.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
        let c = regularizer_coeffs(&dv(&[1.0, 0.0]), &dv(&[0.0, 1.0]), 0.0, 3).unwrap();
        assert!(c.coeffs.iter().all(|&v| v == 0.0));
        let c = regularizer_coeffs(&dv(&[1.0]), &dv(&[1.0]), 2.0, 2).unwrap();
        assert_eq!(c.coeffs, vec![1.0, 2.0, 1.0]);
    }

    #[test]
    fn degree_bounds() {
        let loss = Logistic::new(0.0).unwrap();
        let v = dv(&[0.0]);
        assert!(coeff_fn(&loss, &v, &v, 1, 1).is_err());
        assert!(coeff_fn(&loss, &v, &v, MAX_DEGREE + 1, 1).is_err());
        assert!(Logistic::new(-1.0).is_err());
    }

    #[test]
    fn accuracy_proxy_examples() {
        assert_eq!(accuracy_proxy(0.0), 1.0);
        assert_relative_eq!(
            accuracy_proxy(std::f64::consts::LN_2),
            0.5,
            max_relative = 1e-15
        );
        assert_relative_eq!(
            accuracy_proxy(0.03),
            0.970445533548508,
            max_relative = 1e-12
        );
    }
}
