//! Muon counting from binned photoelectron (PE) counts.
//!
//! Each muon `(t_μ, a_μ)` deposits PEs along a non-homogeneous Poisson
//! process with intensity `a_μ p(t - t_μ)`, where `p` is a rise-times-decay
//! pulse shape. Counts in the bins `[t0 + (i-1)t_Δ, t0 + i t_Δ)` are
//! independent Poisson variables whose means add over muons.

use log::debug;
use rand::Rng;
use rand_distr::{Distribution, Gamma, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ln_factorial, ParamSpace, VarDimSample};
use crate::rjmcmc::{self, mh_accept, Move, MoveProbs, MoveStats};
use crate::rng;
use crate::samples::{Provenance, SampleSet};

/// Pulse `p(t) ∝ (1 - e^{-t/t_d}) e^{-t/τ}` for `t ≥ 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PulseShape {
    /// `t_d`, ns
    pub rise_time: f64,
    /// `τ`, ns
    pub decay: f64,
}

impl Default for PulseShape {
    fn default() -> Self {
        PulseShape { rise_time: 15.0, decay: 67.0 }
    }
}

impl PulseShape {
    pub fn new(rise_time: f64, decay: f64) -> Result<Self> {
        let s = PulseShape { rise_time, decay };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rise_time > 0.0 && self.rise_time.is_finite() && self.decay > 0.0 && self.decay.is_finite()) {
            return Err(Error::Config(format!("pulse shape {self:?} needs positive finite times")));
        }
        Ok(())
    }

    /// `t_d τ / (t_d + τ)`: the time constant of `e^{-t/t_d} e^{-t/τ}`.
    fn combined(&self) -> f64 {
        self.rise_time * self.decay / (self.rise_time + self.decay)
    }

    /// Normalizing constant `τ² / (t_d + τ)`.
    pub fn normalizer(&self) -> f64 {
        self.decay * self.decay / (self.rise_time + self.decay)
    }

    pub fn density(&self, t: f64) -> f64 {
        if t < 0.0 {
            return 0.0;
        }
        -(-t / self.rise_time).exp_m1() * (-t / self.decay).exp() / self.normalizer()
    }

    pub fn cdf(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        1.0 - self.survival(t)
    }

    /// `1 - F(t)` for `t ≥ 0`.
    fn survival(&self, t: f64) -> f64 {
        let c = self.combined();
        (self.decay * (-t / self.decay).exp() - c * (-t / c).exp()) / self.normalizer()
    }

    /// Mass of `[lo, hi)`, computed without forming `F(hi) - F(lo)`.
    pub fn interval_mass(&self, lo: f64, hi: f64) -> f64 {
        let u = lo.max(0.0);
        let v = hi.max(0.0);
        if v <= u {
            return 0.0;
        }
        let c = self.combined();
        // e^{-u/s} - e^{-v/s} = -e^{-u/s} expm1(-(v-u)/s)
        let diff = |s: f64| -(-u / s).exp() * (-(v - u) / s).exp_m1();
        let mass = (self.decay * diff(self.decay) - c * diff(c)) / self.normalizer();
        mass.max(0.0)
    }
}

/// Observed PE counts with their time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PECountSignal {
    pub counts: Vec<u64>,
    /// Start of the first bin, ns.
    pub t0: f64,
    /// Bin width, ns.
    pub t_delta: f64,
    pub truth: Option<Vec<MuonParams>>,
}

impl PECountSignal {
    pub fn new(counts: Vec<u64>, t0: f64, t_delta: f64) -> Result<Self> {
        if !(t_delta > 0.0 && t_delta.is_finite()) || !t0.is_finite() {
            return Err(Error::Config(format!("invalid time grid t0 = {t0}, t_delta = {t_delta}")));
        }
        if counts.is_empty() {
            return Err(Error::Config("PE signal has no bins".into()));
        }
        Ok(PECountSignal { counts, t0, t_delta, truth: None })
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Observation window `[t0, t0 + N t_Δ]`.
    pub fn window(&self) -> (f64, f64) {
        (self.t0, self.t0 + self.len() as f64 * self.t_delta)
    }

    /// Edge `t_i = t0 + i t_Δ`, `i = 0..=N`.
    pub fn edge(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.t_delta
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MuonParams {
    pub arrival: f64,
    pub amplitude: f64,
}

impl MuonParams {
    pub fn new(arrival: f64, amplitude: f64) -> Self {
        MuonParams { arrival, amplitude }
    }
}

fn canonical(muons: &[MuonParams]) -> Vec<MuonParams> {
    let mut m = muons.to_vec();
    m.sort_by(|a, b| a.arrival.total_cmp(&b.arrival).then(a.amplitude.total_cmp(&b.amplitude)));
    m
}

/// `n̄_i = Σ_j a_j ∫_{t_{i-1}}^{t_i} p(t - t_j) dt` for every bin.
///
/// Muons are summed in a canonical order, so the result does not depend on
/// the order of `muons`.
pub fn expected_bin_counts(muons: &[MuonParams], signal: &PECountSignal, shape: &PulseShape) -> Vec<f64> {
    let mut nbar = vec![0.0; signal.len()];
    for m in canonical(muons) {
        for (i, v) in nbar.iter_mut().enumerate() {
            let lo = signal.edge(i) - m.arrival;
            let hi = signal.edge(i + 1) - m.arrival;
            *v += m.amplitude * shape.interval_mass(lo, hi);
        }
    }
    nbar
}

/// `Σ_i n_i ln n̄_i - n̄_i - ln n_i!` with `0 ln 0 = 0`; `-∞` when a bin with
/// counts has zero expectation.
pub fn log_likelihood_pe(counts: &[u64], nbar: &[f64]) -> Result<f64> {
    if counts.len() != nbar.len() {
        return Err(Error::DimensionMismatch { expected: counts.len(), found: nbar.len() });
    }
    let mut total = 0.0;
    for (&n, &m) in counts.iter().zip(nbar) {
        if n == 0 {
            total -= m;
        } else if m <= 0.0 {
            return Ok(f64::NEG_INFINITY);
        } else {
            total += n as f64 * m.ln() - m - ln_factorial(n as usize);
        }
    }
    Ok(total)
}

/// Priors of the muon model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugerPrior {
    /// Gamma shape of the amplitude prior.
    pub alpha_a: f64,
    /// Gamma rate of the amplitude prior.
    pub beta_a: f64,
    /// Upper truncation of the amplitude prior.
    pub a_max: f64,
    /// Poisson rate of the prior on the number of muons.
    pub lambda_mu: f64,
    pub k_max: usize,
}

impl Default for AugerPrior {
    fn default() -> Self {
        AugerPrior { alpha_a: 4.0, beta_a: 0.1, a_max: 200.0, lambda_mu: 3.0, k_max: 20 }
    }
}

impl AugerPrior {
    pub fn validate(&self) -> Result<()> {
        let ok = [self.alpha_a, self.beta_a, self.a_max, self.lambda_mu]
            .iter()
            .all(|v| *v > 0.0 && v.is_finite());
        if !ok || self.k_max == 0 {
            return Err(Error::Config(format!("invalid muon prior {self:?}")));
        }
        Ok(())
    }

    fn amplitude_dist(&self) -> Gamma<f64> {
        Gamma::new(self.alpha_a, 1.0 / self.beta_a).expect("validated prior")
    }

    /// `ln` of the gamma mass below `a_max`.
    fn ln_amplitude_mass(&self) -> f64 {
        let g = statrs::distribution::Gamma::new(self.alpha_a, self.beta_a).expect("validated prior");
        statrs::distribution::ContinuousCDF::cdf(&g, self.a_max).ln()
    }

    /// Log density of the truncated amplitude prior, without its constant.
    fn ln_amplitude_kernel(&self, a: f64) -> f64 {
        if !(a > 0.0 && a <= self.a_max) {
            return f64::NEG_INFINITY;
        }
        (self.alpha_a - 1.0) * a.ln() - self.beta_a * a
    }

    fn sample_amplitude<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let dist = self.amplitude_dist();
        loop {
            let a = dist.sample(rng);
            if a > 0.0 && a <= self.a_max {
                return a;
            }
        }
    }
}

/// Parameter space `window × [0, a_max]` of one muon.
pub fn muon_space(signal: &PECountSignal, prior: &AugerPrior) -> Result<ParamSpace> {
    let (lo, hi) = signal.window();
    ParamSpace::new(vec![(lo, hi), (0.0, prior.a_max)])
}

/// Log posterior of `(k, muons)` up to a constant, with the muons treated as
/// an ordered vector.
pub fn log_target(muons: &[MuonParams], signal: &PECountSignal, shape: &PulseShape, prior: &AugerPrior) -> f64 {
    let k = muons.len();
    if k > prior.k_max {
        return f64::NEG_INFINITY;
    }
    let (lo, hi) = signal.window();
    let ln_width = (hi - lo).ln();
    let mut lp = rjmcmc::ln_truncated_poisson(k, prior.lambda_mu, prior.k_max);
    for m in muons {
        if !(m.arrival >= lo && m.arrival <= hi) {
            return f64::NEG_INFINITY;
        }
        lp += ln_amplitude_prior(prior, m.amplitude) - ln_width;
    }
    if lp == f64::NEG_INFINITY {
        return lp;
    }
    let nbar = expected_bin_counts(muons, signal, shape);
    lp + log_likelihood_pe(&signal.counts, &nbar).expect("lengths agree")
}

/// Log density of the truncated gamma amplitude prior.
fn ln_amplitude_prior(prior: &AugerPrior, a: f64) -> f64 {
    prior.ln_amplitude_kernel(a) + prior.alpha_a * prior.beta_a.ln()
        - libm::lgamma(prior.alpha_a)
        - prior.ln_amplitude_mass()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugerChainConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub thinning: usize,
    pub moves: MoveProbs,
    pub shape: PulseShape,
    pub prior: AugerPrior,
    /// Random-walk standard deviation of the arrival time, ns.
    pub step_time: f64,
    /// Random-walk standard deviation of `ln a`.
    pub step_log_amplitude: f64,
    pub initial_muons: Option<Vec<MuonParams>>,
    pub rng_seed: u64,
}

impl Default for AugerChainConfig {
    fn default() -> Self {
        AugerChainConfig {
            iterations: 100_000,
            burn_in: 20_000,
            thinning: 5,
            moves: MoveProbs::default(),
            shape: PulseShape::default(),
            prior: AugerPrior::default(),
            step_time: 5.0,
            step_log_amplitude: 0.1,
            initial_muons: None,
            rng_seed: 0,
        }
    }
}

/// Starting state when none is given: no muon for an empty trace, otherwise
/// one muon at the window start carrying all observed counts, which gives
/// every bin a positive expected count.
pub fn default_initial_muons(signal: &PECountSignal, prior: &AugerPrior) -> Vec<MuonParams> {
    let total: u64 = signal.counts.iter().sum();
    if total == 0 {
        return Vec::new();
    }
    let amplitude = (total as f64).min(0.99 * prior.a_max);
    vec![MuonParams::new(signal.window().0, amplitude)]
}

impl AugerChainConfig {
    pub fn validate(&self) -> Result<()> {
        self.moves.validate()?;
        self.shape.validate()?;
        self.prior.validate()?;
        if self.burn_in >= self.iterations {
            return Err(Error::Config(format!(
                "burn_in ({}) must be smaller than iterations ({})",
                self.burn_in, self.iterations
            )));
        }
        if self.thinning == 0 {
            return Err(Error::Config("thinning must be positive".into()));
        }
        if !(self.step_time > 0.0 && self.step_log_amplitude > 0.0) {
            return Err(Error::Config("random-walk steps must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct AugerChainOutput {
    pub samples: SampleSet,
    pub stats: MoveStats,
}

/// Runs the reversible-jump chain over `(k, {t_μ, a_μ})` and records
/// thinned post-burn-in draws as two-coordinate points `(t_μ, a_μ)`.
pub fn rjmcmc_run_auger(signal: &PECountSignal, cfg: &AugerChainConfig) -> Result<AugerChainOutput> {
    cfg.validate()?;
    let space = muon_space(signal, &cfg.prior)?;
    let (lo, hi) = signal.window();
    let width = hi - lo;
    let prior = &cfg.prior;
    let k_max = prior.k_max;
    let target = |m: &[MuonParams]| log_target(m, signal, &cfg.shape, prior);
    let mut r = rng::stream(cfg.rng_seed, &[0xA0]);

    let mut muons = cfg.initial_muons.clone().unwrap_or_else(|| default_initial_muons(signal, prior));
    let mut lt = target(&muons);
    if lt == f64::NEG_INFINITY {
        return Err(Error::Singular("initial muon configuration has zero posterior density".into()));
    }

    let provenance = Provenance {
        sampler: "auger".into(),
        seed: Some(cfg.rng_seed),
        iterations: cfg.iterations as u64,
        burn_in: cfg.burn_in as u64,
        thinning: cfg.thinning as u64,
        ..Provenance::default()
    };
    let mut samples = SampleSet::with_provenance(space, provenance);
    let mut stats = MoveStats::default();

    for it in 0..cfg.iterations {
        let k = muons.len();
        match Move::select(r.random(), &cfg.moves, k, k_max) {
            Move::Birth => {
                let born = MuonParams::new(lo + width * r.random::<f64>(), prior.sample_amplitude(&mut r));
                let mut proposal = muons.clone();
                proposal.insert(r.random_range(0..=k), born);
                let lt_new = target(&proposal);
                let ln_q = ln_amplitude_prior(prior, born.amplitude) - width.ln();
                let log_ratio = lt_new - lt + cfg.moves.death_at(k + 1).ln() - cfg.moves.birth_at(k, k_max).ln() - ln_q;
                let ok = mh_accept(log_ratio, &mut r);
                if ok {
                    muons = proposal;
                    lt = lt_new;
                }
                stats.birth.record(ok);
            }
            Move::Death => {
                let j = r.random_range(0..k);
                let mut proposal = muons.clone();
                let dead = proposal.remove(j);
                let lt_new = target(&proposal);
                let ln_q = ln_amplitude_prior(prior, dead.amplitude) - width.ln();
                let log_ratio = lt_new - lt + cfg.moves.birth_at(k - 1, k_max).ln() - cfg.moves.death_at(k).ln() + ln_q;
                let ok = mh_accept(log_ratio, &mut r);
                if ok {
                    muons = proposal;
                    lt = lt_new;
                }
                stats.death.record(ok);
            }
            Move::Update => {
                for j in 0..k {
                    let e: f64 = r.sample(StandardNormal);
                    let mut proposal = muons.clone();
                    proposal[j].arrival = rjmcmc::reflect(proposal[j].arrival + cfg.step_time * e, lo, hi);
                    let lt_new = target(&proposal);
                    let ok = mh_accept(lt_new - lt, &mut r);
                    if ok {
                        muons = proposal;
                        lt = lt_new;
                    }
                    stats.update.record(ok);

                    let e: f64 = r.sample(StandardNormal);
                    let mut proposal = muons.clone();
                    let a = proposal[j].amplitude;
                    let a_new = a * (cfg.step_log_amplitude * e).exp();
                    proposal[j].amplitude = a_new;
                    let lt_new = target(&proposal);
                    // multiplicative walk: Jacobian a'/a
                    let ok = mh_accept(lt_new - lt + a_new.ln() - a.ln(), &mut r);
                    if ok {
                        muons = proposal;
                        lt = lt_new;
                    }
                    stats.update.record(ok);
                }
            }
        }

        if it >= cfg.burn_in && (it - cfg.burn_in).is_multiple_of(cfg.thinning) {
            let coords = muons.iter().flat_map(|m| [m.arrival, m.amplitude]).collect();
            samples.push(VarDimSample::new(2, coords)?)?;
        }
    }
    debug!("auger chain acceptance: {stats:?}");
    samples.provenance.extra.insert("birth_acceptance".into(), stats.birth.rate());
    samples.provenance.extra.insert("death_acceptance".into(), stats.death.rate());
    samples.provenance.extra.insert("update_acceptance".into(), stats.update.rate());
    Ok(AugerChainOutput { samples, stats })
}

/// Parameters of a synthetic PE signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugerSignalSpec {
    pub arrivals: Vec<f64>,
    pub amplitudes: Vec<f64>,
    pub n_bins: usize,
    pub t0: f64,
    pub t_delta: f64,
    pub shape: PulseShape,
}

impl Default for AugerSignalSpec {
    fn default() -> Self {
        AugerSignalSpec {
            arrivals: vec![105.0, 169.0, 267.0, 268.0, 498.0],
            amplitudes: vec![40.0, 30.0, 35.0, 30.0, 45.0],
            n_bins: 32,
            t0: 0.0,
            t_delta: 25.0,
            shape: PulseShape::default(),
        }
    }
}

pub fn generate_synthetic_signal(spec: &AugerSignalSpec, seed: u64) -> Result<PECountSignal> {
    if spec.arrivals.len() != spec.amplitudes.len() {
        return Err(Error::DimensionMismatch { expected: spec.arrivals.len(), found: spec.amplitudes.len() });
    }
    if spec.amplitudes.iter().any(|a| !(*a > 0.0)) {
        return Err(Error::Config("muon amplitudes must be positive".into()));
    }
    spec.shape.validate()?;
    let mut signal = PECountSignal::new(vec![0; spec.n_bins], spec.t0, spec.t_delta)?;
    let truth: Vec<MuonParams> =
        spec.arrivals.iter().zip(&spec.amplitudes).map(|(&t, &a)| MuonParams::new(t, a)).collect();
    let nbar = expected_bin_counts(&truth, &signal, &spec.shape);
    let mut r = rng::stream(seed, &[0xA1]);
    signal.counts = nbar
        .iter()
        .map(|&m| if m > 0.0 { Poisson::new(m).expect("positive mean").sample(&mut r) as u64 } else { 0 })
        .collect();
    signal.truth = Some(truth);
    Ok(signal)
}
