#![allow(dead_code)]

use pels::dataset::{shard, Instance, ShardedDataset};
use pels::numerics::{DenseVector, SparseVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Finite-difference weights for derivatives `0..=max_order` at `z` over the
/// nodes `x` (Fornberg's recursion). `w[k][i]` multiplies `f(x[i])`.
pub fn fd_weights(z: f64, x: &[f64], max_order: usize) -> Vec<Vec<f64>> {
    let n = x.len();
    let mut c = vec![vec![0.0; n]; max_order + 1];
    let mut c1 = 1.0;
    let mut c4 = x[0] - z;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(max_order);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = x[i] - z;
        for j in 0..i {
            let c3 = x[i] - x[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[k][i] = c1 * (k as f64 * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                }
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                c[k][j] = (c4 * c[k][j] - k as f64 * c[k - 1][j]) / c3;
            }
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
    c
}

/// Taylor coefficients `phi^(l)(a) / l!` for `l = 0..=order` from a central
/// stencil of `2 * half + 1` points spaced `h`.
pub fn fd_taylor(phi: impl Fn(f64) -> f64, a: f64, h: f64, half: usize, order: usize) -> Vec<f64> {
    let nodes: Vec<f64> = (0..=2 * half).map(|i| i as f64 - half as f64).collect();
    let values: Vec<f64> = nodes.iter().map(|&t| phi(a + t * h)).collect();
    let w = fd_weights(0.0, &nodes, order);
    let mut fact = 1.0;
    (0..=order)
        .map(|l| {
            if l > 0 {
                fact *= l as f64;
            }
            let d: f64 = w[l].iter().zip(&values).map(|(wi, v)| wi * v).sum();
            d / (h.powi(l as i32) * fact)
        })
        .collect()
}

/// `ln(1 + e^z)` without overflow.
pub fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Standalone logistic objective along a line, written without the crate's
/// loss code.
#[derive(Debug, Clone)]
pub struct LineProblem {
    pub xs: Vec<Vec<f64>>,
    pub ys: Vec<f64>,
    pub w: Vec<f64>,
    pub p: Vec<f64>,
    pub lambda: f64,
    pub alpha_j: f64,
}

impl LineProblem {
    pub fn random(rng: &mut ChaCha8Rng, max_n: usize, max_m: usize) -> Self {
        let n = rng.random_range(1..=max_n);
        let m = rng.random_range(1..=max_m);
        let xs: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                (0..m)
                    .map(|_| {
                        if rng.random::<f64>() < 0.3 {
                            0.0
                        } else {
                            rng.sample::<f64, _>(StandardNormal)
                        }
                    })
                    .collect()
            })
            .collect();
        let ys = (0..n)
            .map(|_| if rng.random::<bool>() { 1.0 } else { 0.0 })
            .collect();
        let w = (0..m)
            .map(|_| 0.5 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let p_raw: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
        let norm = p_raw.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-3);
        let scale = rng.random_range(0.5..2.0) / norm;
        let p = p_raw.iter().map(|v| v * scale).collect();
        let lambda = [0.0, 1e-4, 1e-2, rng.random_range(0.0..0.5)][rng.random_range(0..4)];
        let alpha_j = rng.random_range(0.0..2.0);
        Self {
            xs,
            ys,
            w,
            p,
            lambda,
            alpha_j,
        }
    }

    /// Like [`random`](Self::random) but skips draws where `x . p` is
    /// (nearly) zero for every instance, which make the higher coefficients
    /// vanish and their relative error meaningless.
    pub fn random_nondegenerate(rng: &mut ChaCha8Rng, max_n: usize, max_m: usize) -> Self {
        loop {
            let pb = Self::random(rng, max_n, max_m);
            if pb.slope_scale() >= 0.1 {
                return pb;
            }
        }
    }

    pub fn m(&self) -> usize {
        self.w.len()
    }

    fn point(&self, alpha: f64) -> Vec<f64> {
        self.w
            .iter()
            .zip(&self.p)
            .map(|(w, p)| w + alpha * p)
            .collect()
    }

    pub fn phi(&self, alpha: f64) -> f64 {
        let r = self.point(alpha);
        let n = self.xs.len() as f64;
        let data: f64 = self
            .xs
            .iter()
            .zip(&self.ys)
            .map(|(x, &y)| {
                let t: f64 = x.iter().zip(&r).map(|(a, b)| a * b).sum();
                if y == 1.0 {
                    softplus(-t)
                } else {
                    softplus(t)
                }
            })
            .sum::<f64>()
            / n;
        data + 0.5 * self.lambda * r.iter().map(|v| v * v).sum::<f64>()
    }

    pub fn dphi(&self, alpha: f64) -> f64 {
        let r = self.point(alpha);
        let n = self.xs.len() as f64;
        let data: f64 = self
            .xs
            .iter()
            .zip(&self.ys)
            .map(|(x, &y)| {
                let t: f64 = x.iter().zip(&r).map(|(a, b)| a * b).sum();
                let q: f64 = x.iter().zip(&self.p).map(|(a, b)| a * b).sum();
                let s = 1.0 / (1.0 + (-t).exp());
                (s - y) * q
            })
            .sum::<f64>()
            / n;
        data + self.lambda * r.iter().zip(&self.p).map(|(a, b)| a * b).sum::<f64>()
    }

    /// Largest `|x . p|`; sets the scale on which `phi` varies.
    pub fn slope_scale(&self) -> f64 {
        self.xs
            .iter()
            .map(|x| x.iter().zip(&self.p).map(|(a, b)| a * b).sum::<f64>().abs())
            .fold(0.0, f64::max)
    }

    pub fn instances(&self) -> Vec<Instance> {
        self.xs
            .iter()
            .zip(&self.ys)
            .map(|(x, &y)| Instance {
                features: SparseVector::from_dense(x).unwrap(),
                label: y,
            })
            .collect()
    }

    pub fn sharded(&self, n_p: usize) -> ShardedDataset {
        shard(self.instances(), n_p).unwrap()
    }

    pub fn w_vec(&self) -> DenseVector {
        DenseVector::new(self.w.clone()).unwrap()
    }

    pub fn p_vec(&self) -> DenseVector {
        DenseVector::new(self.p.clone()).unwrap()
    }

    /// Reference Taylor coefficients of `phi` about `alpha_j`.
    pub fn fd_coeffs(&self, order: usize) -> Vec<f64> {
        let h = 0.2 / self.slope_scale().max(1.0);
        fd_taylor(|a| self.phi(a), self.alpha_j, h, 8, order)
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Dense Gaussian features with real-valued targets.
pub fn least_squares_instances(rng: &mut ChaCha8Rng, n: usize, m: usize) -> Vec<Instance> {
    (0..n)
        .map(|_| {
            let x: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
            Instance {
                features: SparseVector::from_dense(&x).unwrap(),
                label: rng.sample(StandardNormal),
            }
        })
        .collect()
}

pub fn rel_err(got: f64, want: f64) -> f64 {
    if got == want {
        0.0
    } else {
        (got - want).abs() / want.abs()
    }
}
