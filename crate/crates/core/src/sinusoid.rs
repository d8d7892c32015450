//! Joint detection and estimation of sinusoids in white Gaussian noise.
//!
//! Under the model with `k` components,
//! `y[i] = Σ_j a_{c,j} cos(ω_j i) + a_{s,j} sin(ω_j i) + n[i]`, `i = 0..N-1`.
//! Amplitudes get a g-prior `N(0, δ²σ²(DᵗD)⁻¹)`, the noise variance a
//! Jeffreys prior, the frequencies a uniform prior on `(0, π)ᵏ` and `k` a
//! Poisson(Λ) prior truncated at `k_max`. Amplitudes and noise variance are
//! integrated out analytically, leaving
//!
//! `ln p(k, ω | y, δ², Λ) = -k ln(1+δ²) - (N/2) ln(yᵗP y) + ln p(k|Λ) - k ln π + C`
//!
//! with `P = I - δ²/(1+δ²) D(DᵗD)⁻¹Dᵗ`. The reversible-jump chain targets this
//! density with birth, death and random-walk update moves, plus updates of
//! the hyperparameters `δ²` (inverse-gamma prior) and `Λ` (gamma prior).

use std::f64::consts::PI;

use log::debug;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ParamSpace, VarDimSample};
use crate::rjmcmc::{self, mh_accept, Move, MoveProbs, MoveStats};
use crate::rng;
use crate::samples::{Provenance, SampleSet};

/// Relative pivot size below which `DᵗD` is treated as singular.
const SINGULAR_TOL: f64 = 1e-10;

/// Ground truth of a synthetic signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SinusoidTruth {
    pub omega: Vec<f64>,
    /// Interleaved `(a_c, a_s)` per component.
    pub amplitudes: Vec<f64>,
    pub sigma2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SinusoidSignal {
    pub y: Vec<f64>,
    pub truth: Option<SinusoidTruth>,
}

impl SinusoidSignal {
    pub fn new(y: Vec<f64>) -> Result<Self> {
        if y.len() < 2 {
            return Err(Error::Config(format!("signal length {} must be at least 2", y.len())));
        }
        if let Some(v) = y.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("signal value {v}")));
        }
        Ok(SinusoidSignal { y, truth: None })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// Noiseless signal `D a` of the ground truth, if known.
    pub fn noiseless(&self) -> Option<Vec<f64>> {
        let t = self.truth.as_ref()?;
        Some(synthesize(&t.omega, &t.amplitudes, self.len()))
    }
}

/// Parameter space of one frequency.
pub fn frequency_space() -> ParamSpace {
    ParamSpace::interval(0.0, PI).expect("valid interval")
}

/// `N × 2k` matrix; columns `2j` and `2j+1` hold `cos(ω_j i)` and `sin(ω_j i)`.
pub fn design_matrix(omega: &[f64], n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, 2 * omega.len(), |i, c| {
        let arg = omega[c / 2] * i as f64;
        if c % 2 == 0 {
            arg.cos()
        } else {
            arg.sin()
        }
    })
}

/// `D a` without forming the matrix.
pub fn synthesize(omega: &[f64], amplitudes: &[f64], n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| {
            omega
                .iter()
                .enumerate()
                .map(|(j, &w)| {
                    let arg = w * i as f64;
                    amplitudes[2 * j] * arg.cos() + amplitudes[2 * j + 1] * arg.sin()
                })
                .sum()
        })
        .collect()
}

/// Cholesky factor of `DᵗD` and the projection `Dᵗy`.
struct NormalEquations {
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    dty: DVector<f64>,
}

fn normal_equations(omega: &[f64], y: &[f64]) -> Result<NormalEquations> {
    if let Some(w) = omega.iter().find(|w| !(**w > 0.0 && **w < PI)) {
        return Err(Error::Singular(format!("frequency {w} outside (0, π)")));
    }
    let d = design_matrix(omega, y.len());
    let gram = d.tr_mul(&d);
    let scale = gram.diagonal().max();
    let dty = d.tr_mul(&DVector::from_column_slice(y));
    let chol = gram
        .cholesky()
        .ok_or_else(|| Error::Singular(format!("DᵗD not positive definite for ω = {omega:?}")))?;
    let l = chol.l_dirty();
    let min_pivot = (0..l.nrows()).map(|i| l[(i, i)] * l[(i, i)]).fold(f64::INFINITY, f64::min);
    if min_pivot < SINGULAR_TOL * scale {
        return Err(Error::Singular(format!("DᵗD ill-conditioned for ω = {omega:?}")));
    }
    Ok(NormalEquations { chol, dty })
}

fn sorted(omega: &[f64]) -> Vec<f64> {
    let mut w = omega.to_vec();
    w.sort_by(f64::total_cmp);
    w
}

/// `yᵗ P_k y` for the given frequencies.
fn quadratic_form(omega: &[f64], y: &[f64], delta2: f64) -> Result<f64> {
    let yty: f64 = y.iter().map(|v| v * v).sum();
    if omega.is_empty() {
        return Ok(yty);
    }
    let ne = normal_equations(omega, y)?;
    let sol = ne.chol.solve(&ne.dty);
    let fit = ne.dty.dot(&sol);
    Ok(yty - delta2 / (1.0 + delta2) * fit)
}

/// Hyperparameters that enter the marginal target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetParams {
    pub delta2: f64,
    pub lambda: f64,
    pub k_max: usize,
}

/// `ln p(k, ω | y, δ², Λ)` up to a constant independent of `(k, ω, δ², Λ)`.
///
/// Returns `-∞` when `DᵗD` is numerically singular or `k > k_max`. The value
/// is computed on the sorted frequencies, so it is bit-identical under any
/// permutation of `omega`.
pub fn log_target_marginal(omega: &[f64], y: &[f64], params: TargetParams) -> f64 {
    let k = omega.len();
    if k > params.k_max {
        return f64::NEG_INFINITY;
    }
    let q = match quadratic_form(&sorted(omega), y, params.delta2) {
        Ok(q) if q > 0.0 => q,
        Ok(q) => {
            debug!("non-positive yᵗPy = {q}");
            return f64::NEG_INFINITY;
        }
        Err(e) => {
            debug!("{e}");
            return f64::NEG_INFINITY;
        }
    };
    let n = y.len() as f64;
    -(k as f64) * params.delta2.ln_1p() - 0.5 * n * q.ln()
        + rjmcmc::ln_truncated_poisson(k, params.lambda, params.k_max)
        - k as f64 * PI.ln()
}

/// Posterior mean of the amplitudes given the frequencies,
/// `δ²/(1+δ²) (DᵗD)⁻¹ Dᵗy`, interleaved `(a_c, a_s)` per component.
pub fn amplitude_posterior_mean(omega: &[f64], y: &[f64], delta2: f64) -> Result<Vec<f64>> {
    if omega.is_empty() {
        return Ok(Vec::new());
    }
    let ne = normal_equations(omega, y)?;
    let shrink = delta2 / (1.0 + delta2);
    Ok(ne.chol.solve(&ne.dty).iter().map(|v| shrink * v).collect())
}

/// Parameters of a synthetic test signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SignalSpec {
    pub n: usize,
    pub omega: Vec<f64>,
    /// `A_j = a_c² + a_s²`
    pub energies: Vec<f64>,
    /// `φ_j = -arctan(a_s / a_c)`
    pub phases: Vec<f64>,
    /// `‖Da‖² / (Nσ²)` in dB; infinite for a noiseless signal.
    pub snr_db: f64,
}

impl Default for SignalSpec {
    fn default() -> Self {
        SignalSpec {
            n: 64,
            omega: vec![0.63, 0.68, 0.73],
            energies: vec![20.0, 6.32, 20.0],
            phases: vec![0.0, PI / 4.0, PI / 3.0],
            snr_db: 7.0,
        }
    }
}

/// Amplitudes `(a_c, a_s) = √A (cos(-φ), sin(-φ))`.
pub fn amplitudes_from_polar(energies: &[f64], phases: &[f64]) -> Result<Vec<f64>> {
    if energies.len() != phases.len() {
        return Err(Error::DimensionMismatch { expected: energies.len(), found: phases.len() });
    }
    if let Some(a) = energies.iter().find(|a| !(**a > 0.0)) {
        return Err(Error::Config(format!("energy {a} must be positive")));
    }
    Ok(energies
        .iter()
        .zip(phases)
        .flat_map(|(&a, &phi)| {
            let r = a.sqrt();
            [r * (-phi).cos(), r * (-phi).sin()]
        })
        .collect())
}

pub fn generate_synthetic_signal(spec: &SignalSpec, seed: u64) -> Result<SinusoidSignal> {
    if spec.omega.len() != spec.energies.len() {
        return Err(Error::DimensionMismatch { expected: spec.omega.len(), found: spec.energies.len() });
    }
    if spec.n < 2 {
        return Err(Error::Config("signal length must be at least 2".into()));
    }
    if let Some(w) = spec.omega.iter().find(|w| !(**w > 0.0 && **w < PI)) {
        return Err(Error::Config(format!("frequency {w} outside (0, π)")));
    }
    let amplitudes = amplitudes_from_polar(&spec.energies, &spec.phases)?;
    let clean = synthesize(&spec.omega, &amplitudes, spec.n);
    let energy: f64 = clean.iter().map(|v| v * v).sum();
    let sigma2 = energy / (spec.n as f64 * 10f64.powf(spec.snr_db / 10.0));
    let mut r = rng::stream(seed, &[0x5153]);
    let sd = sigma2.sqrt();
    let y = clean
        .iter()
        .map(|v| {
            let e: f64 = r.sample(StandardNormal);
            v + sd * e
        })
        .collect();
    Ok(SinusoidSignal { y, truth: Some(SinusoidTruth { omega: spec.omega.clone(), amplitudes, sigma2 }) })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SinChainConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub thinning: usize,
    pub k_max: usize,
    pub moves: MoveProbs,
    /// Standard deviation of the frequency random walk (radians).
    pub rw_step: f64,
    /// Inverse-gamma shape / scale of the prior on `δ²`.
    pub alpha_delta: f64,
    pub beta_delta: f64,
    /// Gamma shape / rate of the prior on `Λ`.
    pub alpha_lambda: f64,
    pub beta_lambda: f64,
    pub initial_delta2: f64,
    pub initial_lambda: f64,
    pub sample_delta2: bool,
    pub sample_lambda: bool,
    /// Starting frequencies; the chain starts empty when absent.
    pub initial_omega: Option<Vec<f64>>,
    pub rng_seed: u64,
}

impl Default for SinChainConfig {
    fn default() -> Self {
        SinChainConfig {
            iterations: 100_000,
            burn_in: 20_000,
            thinning: 5,
            k_max: 20,
            moves: MoveProbs::default(),
            rw_step: 0.01,
            alpha_delta: 2.0,
            beta_delta: 20.0,
            alpha_lambda: 1.0,
            beta_lambda: 1.0,
            initial_delta2: 20.0,
            initial_lambda: 1.0,
            sample_delta2: true,
            sample_lambda: true,
            initial_omega: None,
            rng_seed: 0,
        }
    }
}

impl SinChainConfig {
    pub fn validate(&self) -> Result<()> {
        self.moves.validate()?;
        if self.burn_in >= self.iterations {
            return Err(Error::Config(format!(
                "burn_in ({}) must be smaller than iterations ({})",
                self.burn_in, self.iterations
            )));
        }
        if self.thinning == 0 {
            return Err(Error::Config("thinning must be positive".into()));
        }
        let positive = [
            self.rw_step,
            self.alpha_delta,
            self.beta_delta,
            self.alpha_lambda,
            self.beta_lambda,
            self.initial_delta2,
            self.initial_lambda,
        ];
        if positive.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::Config("step size, hyperparameters and initial values must be positive".into()));
        }
        if let Some(w) = &self.initial_omega {
            if w.len() > self.k_max || w.iter().any(|w| !(*w > 0.0 && *w < PI)) {
                return Err(Error::Config("initial frequencies must lie in (0, π), at most k_max of them".into()));
            }
        }
        Ok(())
    }
}

/// Output of one chain.
#[derive(Debug, Clone)]
pub struct SinChainOutput {
    pub samples: SampleSet,
    pub stats: MoveStats,
    /// Post-burn-in `δ²` of every recorded sample.
    pub delta2: Vec<f64>,
    pub lambda: Vec<f64>,
}

impl SinChainOutput {
    pub fn mean_delta2(&self) -> f64 {
        self.delta2.iter().sum::<f64>() / self.delta2.len().max(1) as f64
    }
}

struct ChainState {
    omega: Vec<f64>,
    delta2: f64,
    lambda: f64,
    log_target: f64,
}

fn draw_inverse_gamma<R: Rng + ?Sized>(rng: &mut R, shape: f64, scale: f64) -> f64 {
    1.0 / Gamma::new(shape, 1.0 / scale).expect("positive parameters").sample(rng)
}

/// Gibbs update of `δ²` through auxiliary draws of `σ²` and the amplitudes
/// from their full conditionals.
fn update_delta2<R: Rng + ?Sized>(state: &ChainState, y: &[f64], cfg: &SinChainConfig, rng: &mut R) -> Option<f64> {
    let k = state.omega.len();
    if k == 0 {
        return Some(draw_inverse_gamma(rng, cfg.alpha_delta, cfg.beta_delta));
    }
    let ne = normal_equations(&state.omega, y).ok()?;
    let shrink = state.delta2 / (1.0 + state.delta2);
    let yty: f64 = y.iter().map(|v| v * v).sum();
    let sol = ne.chol.solve(&ne.dty);
    let q = yty - shrink * ne.dty.dot(&sol);
    if q <= 0.0 {
        return None;
    }
    let sigma2 = draw_inverse_gamma(rng, 0.5 * y.len() as f64, 0.5 * q);
    // a = m + sqrt(σ² shrink) L⁻ᵀ e, so aᵗ(DᵗD)a = |Lᵗ a|²
    let e = DVector::from_fn(2 * k, |_, _| rng.sample::<f64, _>(StandardNormal));
    let l = ne.chol.l();
    let noise = l.transpose().solve_upper_triangular(&e)?;
    let a = sol * shrink + noise * (sigma2 * shrink).sqrt();
    let lta = l.transpose() * &a;
    let ata = lta.dot(&lta);
    Some(draw_inverse_gamma(rng, cfg.alpha_delta + k as f64, cfg.beta_delta + 0.5 * ata / sigma2))
}

/// Metropolis-Hastings update of `Λ` with the untruncated gamma full
/// conditional as proposal; only the truncation constants remain in the
/// ratio.
fn update_lambda<R: Rng + ?Sized>(state: &ChainState, cfg: &SinChainConfig, rng: &mut R) -> (f64, bool) {
    let k = state.omega.len() as f64;
    let proposal = Gamma::new(cfg.alpha_lambda + k, 1.0 / (cfg.beta_lambda + 1.0))
        .expect("positive parameters")
        .sample(rng);
    if !(proposal > 0.0) {
        return (state.lambda, false);
    }
    let log_ratio = rjmcmc::ln_poisson_cdf(cfg.k_max, state.lambda) - rjmcmc::ln_poisson_cdf(cfg.k_max, proposal);
    if mh_accept(log_ratio, rng) {
        (proposal, true)
    } else {
        (state.lambda, false)
    }
}

/// Runs the reversible-jump chain and records thinned post-burn-in draws of
/// `(k, ω)`.
pub fn rjmcmc_run(signal: &SinusoidSignal, cfg: &SinChainConfig) -> Result<SinChainOutput> {
    cfg.validate()?;
    let y = &signal.y;
    let mut r = rng::stream(cfg.rng_seed, &[0x5111]);
    let params = |s: &ChainState| TargetParams { delta2: s.delta2, lambda: s.lambda, k_max: cfg.k_max };

    let mut state = ChainState {
        omega: cfg.initial_omega.clone().unwrap_or_default(),
        delta2: cfg.initial_delta2,
        lambda: cfg.initial_lambda,
        log_target: 0.0,
    };
    state.log_target = log_target_marginal(&state.omega, y, params(&state));
    if state.log_target == f64::NEG_INFINITY {
        return Err(Error::Singular("initial state has zero posterior density".into()));
    }

    let provenance = Provenance {
        sampler: "sinusoid".into(),
        seed: Some(cfg.rng_seed),
        iterations: cfg.iterations as u64,
        burn_in: cfg.burn_in as u64,
        thinning: cfg.thinning as u64,
        ..Provenance::default()
    };
    let mut samples = SampleSet::with_provenance(frequency_space(), provenance);
    let mut stats = MoveStats::default();
    let mut delta2_trace = Vec::new();
    let mut lambda_trace = Vec::new();

    for it in 0..cfg.iterations {
        let k = state.omega.len();
        match Move::select(r.random(), &cfg.moves, k, cfg.k_max) {
            Move::Birth => {
                let w_new = PI * r.random::<f64>();
                if w_new > 0.0 {
                    let pos = r.random_range(0..=k);
                    let mut proposal = state.omega.clone();
                    proposal.insert(pos, w_new);
                    let lt = log_target_marginal(&proposal, y, params(&state));
                    let log_ratio = lt - state.log_target + cfg.moves.death_at(k + 1).ln()
                        - cfg.moves.birth_at(k, cfg.k_max).ln()
                        + PI.ln();
                    let ok = mh_accept(log_ratio, &mut r);
                    if ok {
                        state.omega = proposal;
                        state.log_target = lt;
                    }
                    stats.birth.record(ok);
                }
            }
            Move::Death => {
                let j = r.random_range(0..k);
                let mut proposal = state.omega.clone();
                proposal.remove(j);
                let lt = log_target_marginal(&proposal, y, params(&state));
                let log_ratio = lt - state.log_target + cfg.moves.birth_at(k - 1, cfg.k_max).ln()
                    - cfg.moves.death_at(k).ln()
                    - PI.ln();
                let ok = mh_accept(log_ratio, &mut r);
                if ok {
                    state.omega = proposal;
                    state.log_target = lt;
                }
                stats.death.record(ok);
            }
            Move::Update => {
                for j in 0..k {
                    let step: f64 = r.sample(StandardNormal);
                    let mut proposal = state.omega.clone();
                    proposal[j] = rjmcmc::reflect(proposal[j] + cfg.rw_step * step, 0.0, PI);
                    let lt = log_target_marginal(&proposal, y, params(&state));
                    let ok = mh_accept(lt - state.log_target, &mut r);
                    if ok {
                        state.omega = proposal;
                        state.log_target = lt;
                    }
                    stats.update.record(ok);
                }
            }
        }

        if cfg.sample_delta2 {
            if let Some(d2) = update_delta2(&state, y, cfg, &mut r) {
                state.delta2 = d2;
                state.log_target = log_target_marginal(&state.omega, y, params(&state));
            }
        }
        if cfg.sample_lambda {
            let (lambda, ok) = update_lambda(&state, cfg, &mut r);
            stats.hyper.record(ok);
            if ok {
                state.lambda = lambda;
                state.log_target = log_target_marginal(&state.omega, y, params(&state));
            }
        }

        if it >= cfg.burn_in && (it - cfg.burn_in).is_multiple_of(cfg.thinning) {
            samples.push(VarDimSample::new(1, state.omega.clone())?)?;
            delta2_trace.push(state.delta2);
            lambda_trace.push(state.lambda);
        }
    }

    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
    samples.provenance.extra.insert("delta2_mean".into(), mean(&delta2_trace));
    samples.provenance.extra.insert("lambda_mean".into(), mean(&lambda_trace));
    samples.provenance.extra.insert("birth_acceptance".into(), stats.birth.rate());
    samples.provenance.extra.insert("death_acceptance".into(), stats.death.rate());
    samples.provenance.extra.insert("update_acceptance".into(), stats.update.rate());
    Ok(SinChainOutput { samples, stats, delta2: delta2_trace, lambda: lambda_trace })
}
