//! Brute-force reference computations: enumeration, simulation and
//! numerical quadrature. They are slow and independent of the closed forms
//! used elsewhere, which they exist to check.

use std::collections::HashMap;
use std::f64::consts::PI;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::auger::PulseShape;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::model::{enumerate_allocations, indicator_from_allocation, log_sum_exp, Allocation, ApproxModel, VarDimSample};
use crate::rng;
use crate::sem::imh_allocation_step;
use crate::sinusoid;

/// Integral over `[a, b]` to absolute accuracy `tol`, bisecting wherever the
/// double-exponential rule does not reach it.
pub fn integrate_abs<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    fn rec<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
        let out = quadrature::integrate(f, a, b, tol);
        if out.error_estimate <= tol || depth == 0 {
            return out.integral;
        }
        let m = 0.5 * (a + b);
        rec(f, a, m, 0.5 * tol, depth - 1) + rec(f, m, b, 0.5 * tol, depth - 1)
    }
    rec(f, a, b, tol, 30)
}

/// Integral over `[a, b]` to relative accuracy `rel`.
pub fn integrate_rel<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, rel: f64) -> f64 {
    let rough = quadrature::integrate(f, a, b, 1e-300).integral.abs();
    if rough == 0.0 {
        return 0.0;
    }
    integrate_abs(f, a, b, rel * rough)
}

/// Probability that a one-dimensional model produces a sample falling into
/// one cell of the grid over `∪_{k ≤ 2} Θᵏ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellCheck {
    pub k: usize,
    /// Bin index of each point; empty for `k = 0`. `None` for the overflow
    /// cell `k > 2`.
    pub bins: Option<Vec<usize>>,
    pub exact: f64,
    pub empirical: f64,
    /// Standard error of the empirical frequency.
    pub se: f64,
}

impl CellCheck {
    pub fn z(&self) -> f64 {
        if self.se == 0.0 {
            if self.empirical == self.exact { 0.0 } else { f64::INFINITY }
        } else {
            (self.empirical - self.exact) / self.se
        }
    }
}

/// Exact cell probabilities, obtained by integrating `Σ_z q(x, z)`
/// numerically over every cell of a regular grid with `bins` bins, against
/// frequencies among `draws` generative samples.
pub fn labeled_density_cells(model: &ApproxModel, bins: usize, draws: usize, seed: u64, exec: Execution) -> Result<Vec<CellCheck>> {
    if model.dim() != 1 {
        return Err(Error::DimensionMismatch { expected: 1, found: model.dim() });
    }
    if bins == 0 || draws == 0 {
        return Err(Error::Config("bins and draws must be positive".into()));
    }
    let (lo, hi) = model.space.bounds()[0];
    let width = (hi - lo) / bins as f64;
    let edge = |b: usize| lo + b as f64 * width;
    let prep = model.prepare();
    let l = model.num_components();
    let density = |theta: &[f64]| -> f64 {
        let x = VarDimSample::new(1, theta.to_vec()).expect("one-dimensional points");
        let terms: Vec<f64> = enumerate_allocations(theta.len(), l)
            .iter()
            .map(|z| {
                let xi = indicator_from_allocation(z, l).expect("enumerated allocations are admissible");
                prep.joint_log_density_unchecked(&x, z, &xi)
            })
            .collect();
        log_sum_exp(&terms).exp()
    };
    let tol = 1e-12;

    let mut cells = vec![(0, vec![], density(&[]))];
    for b in 0..bins {
        let p = integrate_abs(&|t: f64| density(&[t]), edge(b), edge(b + 1), tol);
        cells.push((1, vec![b], p));
    }
    let pairs: Vec<(usize, usize)> = (0..bins).flat_map(|a| (0..bins).map(move |b| (a, b))).collect();
    let two = exec.map(pairs.len(), |i| {
        let (a, b) = pairs[i];
        let inner = |t1: f64| integrate_abs(&|t2: f64| density(&[t1, t2]), edge(b), edge(b + 1), tol);
        integrate_abs(&inner, edge(a), edge(a + 1), tol)
    });
    for (&(a, b), p) in pairs.iter().zip(two) {
        cells.push((2, vec![a, b], p));
    }

    let counts = generative_counts(model, draws, seed, exec, |x: &VarDimSample| {
        if x.k() > 2 {
            None
        } else {
            Some(x.coords().iter().map(|&t| (((t - lo) / width) as usize).min(bins - 1)).collect::<Vec<_>>())
        }
    });
    let n = draws as f64;
    let mut out: Vec<CellCheck> = cells
        .into_iter()
        .map(|(k, b, p)| {
            let c = counts.get(&Some(b.clone())).copied().unwrap_or(0) as f64;
            CellCheck { k, bins: Some(b), exact: p, empirical: c / n, se: (p * (1.0 - p) / n).sqrt() }
        })
        .collect();
    let rest = (1.0 - out.iter().map(|c| c.exact).sum::<f64>()).max(0.0);
    let c = counts.get(&None).copied().unwrap_or(0) as f64;
    out.push(CellCheck { k: 3, bins: None, exact: rest, empirical: c / n, se: (rest * (1.0 - rest) / n).sqrt() });
    Ok(out)
}

/// Counts of `key(x)` over generative draws, split into fixed chunks with
/// their own random streams.
fn generative_counts<K, F>(model: &ApproxModel, draws: usize, seed: u64, exec: Execution, key: F) -> HashMap<K, usize>
where
    K: std::hash::Hash + Eq + Send,
    F: Fn(&VarDimSample) -> K + Sync + Send,
{
    const CHUNK: usize = 10_000;
    let chunks = draws.div_ceil(CHUNK);
    let parts = exec.map(chunks, |c| {
        let mut rng = rng::stream(seed, &[0x0C, c as u64]);
        let mut counts = HashMap::new();
        for _ in (c * CHUNK)..((c + 1) * CHUNK).min(draws) {
            let (x, _) = model.sample(&mut rng);
            *counts.entry(key(&x)).or_insert(0) += 1;
        }
        counts
    });
    let mut total = HashMap::new();
    for part in parts {
        for (k, v) in part {
            *total.entry(k).or_insert(0) += v;
        }
    }
    total
}

/// Empirical distribution of `k` over generative draws.
pub fn generative_k_frequencies(model: &ApproxModel, draws: usize, seed: u64, exec: Execution) -> Vec<f64> {
    let counts = generative_counts(model, draws, seed, exec, VarDimSample::k);
    let max = counts.keys().copied().max().unwrap_or(0);
    (0..=max).map(|k| counts.get(&k).copied().unwrap_or(0) as f64 / draws as f64).collect()
}

/// `P(Σ Bernoulli(π_l) = k)` by summing over all `2^L` gate outcomes.
pub fn gate_enumeration_pk(pis: &[f64]) -> Vec<f64> {
    let l = pis.len();
    let mut pk = vec![0.0; l + 1];
    for mask in 0u64..(1u64 << l) {
        let p: f64 = pis
            .iter()
            .enumerate()
            .map(|(j, &pi)| if mask >> j & 1 == 1 { pi } else { 1.0 - pi })
            .product();
        pk[mask.count_ones() as usize] += p;
    }
    pk
}

/// Exact `q(z | x)` over every admissible allocation.
pub fn allocation_posterior(model: &ApproxModel, x: &VarDimSample) -> Result<Vec<(Allocation, f64)>> {
    let zs = enumerate_allocations(x.k(), model.num_components());
    let logs = zs.iter().map(|z| model.labeled_joint_log_density(x, z)).collect::<Result<Vec<_>>>()?;
    let norm = log_sum_exp(&logs);
    Ok(zs.into_iter().zip(logs).map(|(z, v)| (z, (v - norm).exp())).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImhCheck {
    pub exact: Vec<f64>,
    pub empirical: Vec<f64>,
    pub total_variation: f64,
    pub acceptance_rate: f64,
}

/// Runs `transitions` IMH steps on one sample and compares the visited
/// allocations with the enumerated conditional.
pub fn imh_stationarity(model: &ApproxModel, x: &VarDimSample, transitions: usize, seed: u64) -> Result<ImhCheck> {
    let post = allocation_posterior(model, x)?;
    let index: HashMap<Vec<usize>, usize> = post
        .iter()
        .enumerate()
        .map(|(i, (z, _))| (z.to_one_based(model.num_components()), i))
        .collect();
    let prep = model.prepare();
    let mut rng = rng::stream(seed, &[0x1A]);
    let mut z = Allocation::new(vec![crate::model::Label::Outlier; x.k()]);
    let mut counts = vec![0usize; post.len()];
    let mut accepted = 0;
    for _ in 0..transitions {
        let (next, ok) = imh_allocation_step(x, &z, &prep, &mut rng);
        z = next;
        accepted += ok as usize;
        counts[index[&z.to_one_based(model.num_components())]] += 1;
    }
    let exact: Vec<f64> = post.iter().map(|(_, p)| *p).collect();
    let empirical: Vec<f64> = counts.iter().map(|&c| c as f64 / transitions as f64).collect();
    let tv = 0.5 * exact.iter().zip(&empirical).map(|(a, b)| (a - b).abs()).sum::<f64>();
    Ok(ImhCheck { exact, empirical, total_variation: tv, acceptance_rate: accepted as f64 / transitions as f64 })
}

/// `ln ∫∫∫ N(y; Da, σ²I) N(a; 0, δ²σ²(DᵗD)⁻¹) σ⁻² da dσ²` for one
/// frequency, by nested quadrature over `(ln σ², a_c, a_s)`.
///
/// The amplitudes are integrated in coordinates centered and scaled by a
/// linear map, which changes only the Jacobian, not the integrand.
pub fn sinusoid_marginal_quadrature(omega: f64, y: &[f64], delta2: f64) -> Result<f64> {
    let n = y.len();
    let d = sinusoid::design_matrix(&[omega], n);
    let g = d.tr_mul(&d);
    let chol = g.clone().cholesky().ok_or_else(|| Error::Singular("DᵗD".into()))?;
    let yv = DVector::from_column_slice(y);
    let shrink = delta2 / (1.0 + delta2);
    let center = chol.solve(&d.tr_mul(&yv)) * shrink;
    let lt_inv = chol.l().transpose().try_inverse().ok_or_else(|| Error::Singular("Cholesky factor".into()))?;
    let ln_det_g = g.determinant().ln();
    let nf = n as f64;

    // log integrand in (s = ln σ², u), Jacobian included
    let log_f = |s: f64, u: &[f64; 2]| -> f64 {
        let sigma2 = s.exp();
        let scale = (sigma2 * shrink).sqrt();
        let a = &center + &lt_inv * DVector::from_column_slice(u) * scale;
        let resid = &yv - &d * &a;
        let ga = &g * &a;
        let ln_lik = -0.5 * nf * (2.0 * PI * sigma2).ln() - 0.5 * resid.norm_squared() / sigma2;
        let ln_prior = -(2.0 * PI).ln() - (delta2 * sigma2).ln() + 0.5 * ln_det_g - 0.5 * a.dot(&ga) / (delta2 * sigma2);
        // dσ²/σ² = ds cancels the Jeffreys factor; the amplitude map has
        // determinant σ² c / sqrt(det G)
        let ln_jac = s + shrink.ln() - 0.5 * ln_det_g;
        ln_lik + ln_prior + ln_jac
    };

    let s0 = (y.iter().map(|v| v * v).sum::<f64>() / nf).ln();
    let (s_lo, s_hi) = (s0 - 25.0, s0 + 15.0);
    let reference = (0..=400)
        .map(|i| log_f(s_lo + (s_hi - s_lo) * i as f64 / 400.0, &[0.0, 0.0]))
        .fold(f64::NEG_INFINITY, f64::max);
    let u_max = 12.0;
    let tol = 1e-10;
    let over_s = |s: f64| {
        let over_u1 = |u1: f64| integrate_abs(&|u2: f64| (log_f(s, &[u1, u2]) - reference).exp(), -u_max, u_max, tol);
        integrate_abs(&over_u1, -u_max, u_max, tol)
    };
    let total = integrate_abs(&over_s, s_lo, s_hi, tol);
    Ok(total.ln() + reference)
}

/// `∫_lo^hi p(t) dt` for the pulse shape by adaptive quadrature.
pub fn pulse_mass_quadrature(shape: &PulseShape, lo: f64, hi: f64) -> f64 {
    let a = lo.max(0.0);
    if hi <= a {
        return 0.0;
    }
    integrate_rel(&|t: f64| shape.density(t), a, hi, 1e-13)
}
