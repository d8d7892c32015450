//! Stochastic EM fit of the approximating model to variable-dimensional
//! samples.
//!
//! Each iteration draws one allocation vector per sample with an independent
//! Metropolis-Hastings step targeting `q(z | x)`, then re-estimates the
//! parameters from the labeled samples (counts for the gates and the point
//! process rate; median and IQR for the Gaussian locations and scales).
//! Components that attract too few points are removed. The reported model is
//! the average of the last iterations.

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::model::{
    indicator_from_allocation, Allocation, ApproxModel, GaussianComponent, Label, PreparedModel,
    VarDimSample,
};
use crate::robust;
use crate::rng;
use crate::samples::SampleSet;

/// How the initial number of Gaussian components is chosen from the
/// empirical distribution of `k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", content = "value", rename_all = "lowercase")]
pub enum InitRule {
    /// Smallest `k` whose empirical CDF reaches the given level.
    Percentile(f64),
    /// Largest `k` whose empirical probability is at least the given value.
    Threshold(f64),
    /// Fixed number of components.
    Fixed(usize),
}

impl Default for InitRule {
    fn default() -> Self {
        InitRule::Percentile(0.9)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub iterations: usize,
    pub imh_inner_steps: usize,
    pub averaging_window: usize,
    pub prune_threshold: usize,
    pub init_pi: f64,
    pub init_lambda: f64,
    pub init_rule: InitRule,
    pub min_sigma2: f64,
    pub rng_seed: u64,
    pub execution: Execution,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            iterations: 100,
            imh_inner_steps: 1,
            averaging_window: 50,
            prune_threshold: 10,
            init_pi: 0.9,
            init_lambda: 0.1,
            init_rule: InitRule::default(),
            min_sigma2: 1e-10,
            rng_seed: 0,
            execution: Execution::default(),
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 || self.imh_inner_steps == 0 || self.averaging_window == 0 {
            return Err(Error::Config("iterations, imh_inner_steps and averaging_window must be positive".into()));
        }
        if self.averaging_window > self.iterations {
            return Err(Error::Config(format!(
                "averaging_window ({}) exceeds iterations ({})",
                self.averaging_window, self.iterations
            )));
        }
        if !(self.init_pi > 0.0 && self.init_pi <= 1.0) || !(self.init_lambda >= 0.0) {
            return Err(Error::Config("init_pi must be in (0, 1] and init_lambda >= 0".into()));
        }
        match self.init_rule {
            InitRule::Percentile(p) if !(p > 0.0 && p < 1.0) => {
                Err(Error::Config(format!("percentile {p} not in (0, 1)")))
            }
            InitRule::Threshold(t) if !(t > 0.0 && t <= 1.0) => {
                Err(Error::Config(format!("threshold {t} not in (0, 1]")))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    pub criterion: f64,
    pub model: ApproxModel,
    /// Points allocated to each Gaussian component, after pruning.
    pub counts: Vec<usize>,
    pub acceptance_rate: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FitTrace {
    pub entries: Vec<TraceEntry>,
}

impl FitTrace {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn criteria(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.criterion).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneEvent {
    /// 1-based SEM iteration after which the component was removed.
    pub iteration: usize,
    /// 1-based label of the component in the model before removal.
    pub component: usize,
    pub allocated: usize,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub initial_model: ApproxModel,
    pub model: ApproxModel,
    pub trace: FitTrace,
    pub allocations: Vec<Allocation>,
    pub pruned: Vec<PruneEvent>,
    /// Number of trailing iterations entering the averaged model.
    pub averaged_over: usize,
}

/// Chooses `L` from the empirical distribution of `k`.
pub fn choose_num_components(samples: &SampleSet, rule: InitRule) -> usize {
    let pk = samples.k_distribution();
    match rule {
        InitRule::Fixed(l) => l,
        InitRule::Percentile(p) => {
            let mut cdf = 0.0;
            for (k, &mass) in pk.iter().enumerate() {
                cdf += mass;
                if cdf >= p - 1e-12 {
                    return k;
                }
            }
            pk.len().saturating_sub(1)
        }
        InitRule::Threshold(t) => pk.iter().rposition(|&mass| mass >= t - 1e-12).unwrap_or(0),
    }
}

/// Initial model: `L` from the distribution of `k`, Gaussian locations and
/// scales from the median / IQR of the sorted components of the samples with
/// exactly `L` points.
pub fn initialize_model(samples: &SampleSet, config: &FitConfig) -> Result<ApproxModel> {
    if samples.is_empty() {
        return Err(Error::EmptySampleSet);
    }
    config.validate()?;
    let num = choose_num_components(samples, config.init_rule);
    let d = samples.dim();

    let mut pool: Vec<VarDimSample> =
        samples.iter().filter(|s| s.k() == num).map(VarDimSample::sorted_by_first).collect();
    if pool.is_empty() && num > 0 {
        warn!("no sample has exactly {num} components; initializing from samples with k >= {num}");
        pool = samples.iter().filter(|s| s.k() >= num).map(VarDimSample::sorted_by_first).collect();
    }
    let available = pool.iter().map(VarDimSample::k).min().unwrap_or(0).min(num);

    let mut components = Vec::with_capacity(num);
    for j in 0..available {
        let mut mu = Vec::with_capacity(d);
        let mut sigma2 = Vec::with_capacity(d);
        for c in 0..d {
            let values: Vec<f64> = pool.iter().map(|s| s.point(j)[c]).collect();
            let (m, sd) = robust::location_scale(&values).expect("nonempty pool");
            mu.push(m);
            sigma2.push((sd * sd).max(config.min_sigma2));
        }
        components.push(GaussianComponent::new(mu, sigma2, config.init_pi));
    }
    if available < num {
        warn!("only {available} of {num} components could be initialized from samples; spreading the rest over the space");
        let bounds = samples.space().bounds();
        for j in available..num {
            let frac = (j - available) as f64 + 0.5;
            let span = (num - available) as f64;
            let mu = bounds.iter().map(|&(lo, hi)| lo + (hi - lo) * frac / span).collect();
            let sigma2 = bounds.iter().map(|&(lo, hi)| ((hi - lo) / (4.0 * span)).powi(2)).collect();
            components.push(GaussianComponent::new(mu, sigma2, config.init_pi));
        }
    }
    info!("initialized model with L = {num}");
    ApproxModel::new(samples.space().clone(), components, config.init_lambda)
}

/// Cap on the gate log-odds used in proposal weights, so that `π_l = 1`
/// still gives a finite weight.
const MAX_LN_ODDS: f64 = 30.0;

/// Log proposal weights of every source for every point: row `j` holds
/// `ln(π_l / (1 - π_l) N_Θ(θ_j | μ_l, Σ_l))` for `l < L`, followed by
/// `ln(λ / |Θ|)`. For a single point these are the exact conditional odds.
fn log_weights(x: &VarDimSample, prep: &PreparedModel<'_>) -> Vec<f64> {
    let num = prep.num_components();
    let mut w = Vec::with_capacity(x.k() * (num + 1));
    for p in x.points() {
        for l in 0..num {
            w.push(prep.ln_gate_odds(l).min(MAX_LN_ODDS) + prep.log_density(p, Label::Gaussian(l)));
        }
        w.push(prep.ln_outlier_density());
    }
    w
}

fn label_index(label: Label, num: usize) -> usize {
    match label {
        Label::Gaussian(l) => l,
        Label::Outlier => num,
    }
}

/// Normalizer over the sources still available to a point. Returns `None`
/// when every available weight is zero.
fn available_log_total(row: &[f64], used: &[bool]) -> Option<f64> {
    let num = used.len();
    let max = (0..=num)
        .filter(|&l| l == num || !used[l])
        .map(|l| row[l])
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return None;
    }
    let s: f64 = (0..=num).filter(|&l| l == num || !used[l]).map(|l| (row[l] - max).exp()).sum();
    Some(max + s.ln())
}

/// Sequential proposal: visits the points in `order`, drawing each label
/// from the available sources in proportion to their weights. Returns the
/// allocation and its log proposal probability given the order.
fn propose<R: Rng + ?Sized>(weights: &[f64], k: usize, num: usize, order: &[usize], rng: &mut R) -> (Allocation, f64) {
    let mut used = vec![false; num];
    let mut labels = vec![Label::Outlier; k];
    let mut log_prob = 0.0;
    for &j in order {
        let row = &weights[j * (num + 1)..(j + 1) * (num + 1)];
        let Some(total) = available_log_total(row, &used) else {
            // every source has zero weight: forced to the point process
            continue;
        };
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut chosen = num;
        for l in (0..num).filter(|&l| !used[l]).chain(std::iter::once(num)) {
            let p = (row[l] - total).exp();
            if p == 0.0 {
                continue;
            }
            chosen = l;
            acc += p;
            if u < acc {
                break;
            }
        }
        log_prob += row[chosen] - total;
        if chosen < num {
            used[chosen] = true;
            labels[j] = Label::Gaussian(chosen);
        }
    }
    (Allocation::new(labels), log_prob)
}

/// Log probability of proposing `z` given the visit order.
fn proposal_log_prob(weights: &[f64], z: &Allocation, num: usize, order: &[usize]) -> f64 {
    let mut used = vec![false; num];
    let mut log_prob = 0.0;
    for &j in order {
        let row = &weights[j * (num + 1)..(j + 1) * (num + 1)];
        let chosen = label_index(z.labels[j], num);
        match available_log_total(row, &used) {
            None if chosen == num => {}
            None => return f64::NEG_INFINITY,
            Some(total) => log_prob += row[chosen] - total,
        }
        if chosen < num {
            if used[chosen] {
                return f64::NEG_INFINITY;
            }
            used[chosen] = true;
        }
    }
    log_prob
}

fn joint_or_neg_inf(x: &VarDimSample, z: &Allocation, prep: &PreparedModel<'_>) -> f64 {
    match indicator_from_allocation(z, prep.num_components()) {
        Ok(xi) => prep.joint_log_density_unchecked(x, z, &xi),
        Err(_) => f64::NEG_INFINITY,
    }
}

/// Draws an allocation directly from the sequential proposal (used to start
/// the allocation chains).
pub fn initial_allocation<R: Rng + ?Sized>(x: &VarDimSample, prep: &PreparedModel<'_>, rng: &mut R) -> Allocation {
    let k = x.k();
    let mut order: Vec<usize> = (0..k).collect();
    order.shuffle(rng);
    let w = log_weights(x, prep);
    propose(&w, k, prep.num_components(), &order, rng).0
}

/// One independent Metropolis-Hastings transition on allocation vectors with
/// stationary law `q(z | x)`. Returns the new state and whether the proposal
/// was accepted.
///
/// A random visit order is drawn first and used for both proposal
/// probabilities, so the order factor cancels from the ratio.
pub fn imh_allocation_step<R: Rng + ?Sized>(
    x: &VarDimSample,
    current: &Allocation,
    prep: &PreparedModel<'_>,
    rng: &mut R,
) -> (Allocation, bool) {
    let k = x.k();
    if k == 0 {
        return (current.clone(), true);
    }
    let num = prep.num_components();
    let mut order: Vec<usize> = (0..k).collect();
    order.shuffle(rng);
    let w = log_weights(x, prep);
    let (proposal, log_rho_new) = propose(&w, k, num, &order, rng);
    let log_target_new = joint_or_neg_inf(x, &proposal, prep);
    let log_target_cur = joint_or_neg_inf(x, current, prep);

    let accept = if log_target_cur == f64::NEG_INFINITY {
        // current state has no mass under the present model: move anywhere
        true
    } else if log_target_new == f64::NEG_INFINITY {
        false
    } else {
        let log_rho_cur = proposal_log_prob(&w, current, num, &order);
        let log_ratio = (log_target_new - log_target_cur) + (log_rho_cur - log_rho_new);
        log_ratio >= 0.0 || rng.random::<f64>().ln() < log_ratio
    };
    if accept {
        (proposal, true)
    } else {
        (current.clone(), false)
    }
}

/// Robust M-step. Gates and the point process rate come from counts; each
/// Gaussian's location and scale are the per-coordinate median and
/// IQR / 1.349 of its allocated points. A component with no allocated
/// points keeps its previous location and scale.
pub fn mstep_robust(
    samples: &SampleSet,
    allocations: &[Allocation],
    previous: &ApproxModel,
    min_sigma2: f64,
) -> Result<(ApproxModel, Vec<usize>)> {
    if samples.len() != allocations.len() {
        return Err(Error::DimensionMismatch { expected: samples.len(), found: allocations.len() });
    }
    if samples.is_empty() {
        return Err(Error::EmptySampleSet);
    }
    let num = previous.num_components();
    let d = samples.dim();
    let m = samples.len() as f64;
    let mut values: Vec<Vec<Vec<f64>>> = vec![vec![Vec::new(); d]; num];
    let mut outliers = 0usize;
    for (x, z) in samples.iter().zip(allocations) {
        if x.k() != z.k() {
            return Err(Error::DimensionMismatch { expected: x.k(), found: z.k() });
        }
        for (p, label) in x.points().zip(&z.labels) {
            match *label {
                Label::Gaussian(l) if l < num => {
                    for c in 0..d {
                        values[l][c].push(p[c]);
                    }
                }
                Label::Gaussian(l) => {
                    return Err(Error::InvalidAllocation(format!("label {} out of range", l + 1)))
                }
                Label::Outlier => outliers += 1,
            }
        }
    }
    let counts: Vec<usize> = values.iter().map(|v| v[0].len()).collect();
    let components = values
        .iter()
        .zip(&previous.components)
        .map(|(vals, prev)| {
            let n = vals[0].len();
            if n == 0 {
                return GaussianComponent::new(prev.mu.clone(), prev.sigma2.clone(), 0.0);
            }
            let (mu, sigma2) = vals
                .iter()
                .map(|v| {
                    let (med, sd) = robust::location_scale(v).expect("nonempty");
                    (med, (sd * sd).max(min_sigma2))
                })
                .unzip();
            GaussianComponent::new(mu, sigma2, n as f64 / m)
        })
        .collect();
    let model = ApproxModel::new(samples.space().clone(), components, outliers as f64 / m)?;
    Ok((model, counts))
}

/// `Ĵ = -Σ_i ln q(x_i, z_i)`; the additive constant of the divergence is
/// dropped. Infinite when some labeled sample has zero density.
pub fn kl_criterion_estimate(
    samples: &SampleSet,
    allocations: &[Allocation],
    model: &ApproxModel,
    exec: Execution,
) -> Result<f64> {
    if samples.len() != allocations.len() {
        return Err(Error::DimensionMismatch { expected: samples.len(), found: allocations.len() });
    }
    let prep = model.prepare();
    let terms = exec.map(samples.len(), |i| {
        let x = &samples.samples()[i];
        let z = &allocations[i];
        if x.k() != z.k() {
            return Err(Error::DimensionMismatch { expected: x.k(), found: z.k() });
        }
        let xi = indicator_from_allocation(z, prep.num_components())?;
        Ok(prep.joint_log_density_unchecked(x, z, &xi))
    });
    let mut total = 0.0;
    for t in terms {
        total -= t?;
    }
    Ok(total)
}

/// Removes components with fewer than `threshold` allocated points. Points
/// of removed components are handed to the point process, remaining labels
/// are renumbered and `λ` is recomputed. Returns the removed 0-based indices
/// with their allocation counts.
fn prune(
    model: &mut ApproxModel,
    counts: &mut Vec<usize>,
    allocations: &mut [Allocation],
    threshold: usize,
    num_samples: usize,
) -> Vec<(usize, usize)> {
    let removed: Vec<(usize, usize)> =
        (0..counts.len()).filter(|&l| counts[l] < threshold).map(|l| (l, counts[l])).collect();
    if removed.is_empty() {
        return removed;
    }
    let mut new_index = vec![None; counts.len()];
    let mut next = 0;
    for (l, slot) in new_index.iter_mut().enumerate() {
        if !removed.iter().any(|&(r, _)| r == l) {
            *slot = Some(next);
            next += 1;
        }
    }
    let mut outliers = 0usize;
    for z in allocations.iter_mut() {
        for label in z.labels.iter_mut() {
            if let Label::Gaussian(l) = *label {
                *label = new_index[l].map_or(Label::Outlier, Label::Gaussian);
            }
        }
        outliers += z.count_outliers();
    }
    let mut l = 0;
    model.components.retain(|_| {
        l += 1;
        new_index[l - 1].is_some()
    });
    let mut l = 0;
    counts.retain(|_| {
        l += 1;
        new_index[l - 1].is_some()
    });
    model.lambda = outliers as f64 / num_samples as f64;
    removed
}

/// Element-wise mean of models sharing the same number of components.
fn average_models(models: &[&ApproxModel]) -> ApproxModel {
    let n = models.len() as f64;
    let first = models[0];
    let mut avg = first.clone();
    for (l, c) in avg.components.iter_mut().enumerate() {
        for i in 0..c.mu.len() {
            c.mu[i] = models.iter().map(|m| m.components[l].mu[i]).sum::<f64>() / n;
            c.sigma2[i] = models.iter().map(|m| m.components[l].sigma2[i]).sum::<f64>() / n;
        }
        c.pi = models.iter().map(|m| m.components[l].pi).sum::<f64>() / n;
    }
    avg.lambda = models.iter().map(|m| m.lambda).sum::<f64>() / n;
    avg
}

/// Runs the fit starting from [`initialize_model`].
pub fn sem_fit(samples: &SampleSet, config: &FitConfig) -> Result<FitResult> {
    let initial = initialize_model(samples, config)?;
    sem_fit_from(samples, initial, config)
}

/// Runs the fit from a given initial model.
pub fn sem_fit_from(samples: &SampleSet, initial: ApproxModel, config: &FitConfig) -> Result<FitResult> {
    if samples.is_empty() {
        return Err(Error::EmptySampleSet);
    }
    config.validate()?;
    if initial.dim() != samples.dim() {
        return Err(Error::DimensionMismatch { expected: samples.dim(), found: initial.dim() });
    }
    let exec = config.execution;
    let seed = config.rng_seed;
    let xs = samples.samples();

    let mut model = initial.clone();
    let mut allocations: Vec<Allocation> = {
        let prep = model.prepare();
        exec.map(xs.len(), |i| {
            let mut r = rng::stream(seed, &[0, i as u64]);
            initial_allocation(&xs[i], &prep, &mut r)
        })
    };

    let mut trace = FitTrace::default();
    let mut pruned = Vec::new();
    let mut window_start = 0usize;

    for iter in 1..=config.iterations {
        // S-step
        let accepted: usize = {
            let prep = model.prepare();
            let mut state: Vec<(Allocation, usize)> =
                allocations.drain(..).map(|z| (z, 0usize)).collect();
            exec.for_each_mut(&mut state, |i, (z, acc)| {
                let mut r = rng::stream(seed, &[1, iter as u64, i as u64]);
                for _ in 0..config.imh_inner_steps {
                    let (next, ok) = imh_allocation_step(&xs[i], z, &prep, &mut r);
                    *z = next;
                    *acc += ok as usize;
                }
            });
            let total = state.iter().map(|(_, a)| a).sum();
            allocations = state.into_iter().map(|(z, _)| z).collect();
            total
        };

        // M-step
        let (mut next, mut counts) = mstep_robust(samples, &allocations, &model, config.min_sigma2)?;
        let removed = prune(&mut next, &mut counts, &mut allocations, config.prune_threshold, xs.len());
        if !removed.is_empty() {
            for &(l, n) in &removed {
                pruned.push(PruneEvent { iteration: iter, component: l + 1, allocated: n });
            }
            info!("iteration {iter}: pruned {} component(s), L = {}", removed.len(), next.num_components());
            if next.num_components() == 0 {
                warn!("all Gaussian components pruned; model is a pure point process");
            }
            window_start = trace.len() + 1;
        }
        let criterion = kl_criterion_estimate(samples, &allocations, &next, exec)?;
        model = next;
        trace.entries.push(TraceEntry {
            iteration: iter,
            criterion,
            model: model.clone(),
            counts,
            acceptance_rate: accepted as f64 / (xs.len() * config.imh_inner_steps) as f64,
        });
    }

    let end = trace.len();
    let start = window_start.max(end.saturating_sub(config.averaging_window)).min(end - 1);
    let window: Vec<&ApproxModel> = trace.entries[start..end].iter().map(|e| &e.model).collect();
    let averaged = average_models(&window);

    Ok(FitResult {
        initial_model: initial,
        model: averaged,
        trace,
        allocations,
        pruned,
        averaged_over: end - start,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{enumerate_allocations, log_sum_exp, ParamSpace};
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model2() -> ApproxModel {
        ApproxModel::new(
            ParamSpace::interval(0.0, 1.0).unwrap(),
            vec![
                GaussianComponent::new(vec![0.3], vec![0.01], 0.7),
                GaussianComponent::new(vec![0.45], vec![0.02], 0.5),
            ],
            0.4,
        )
        .unwrap()
    }

    fn set_from(points: &[Vec<f64>]) -> SampleSet {
        let mut s = SampleSet::new(ParamSpace::interval(0.0, 10.0).unwrap());
        for p in points {
            s.push(VarDimSample::new(1, p.clone()).unwrap()).unwrap();
        }
        s
    }

    #[test]
    fn empty_sample_is_identity() {
        let m = model2();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let z = Allocation::default();
        let (next, acc) = imh_allocation_step(&VarDimSample::empty(1), &z, &m.prepare(), &mut rng);
        assert!(acc);
        assert_eq!(next, z);
    }

    #[test]
    fn identical_proposal_has_unit_ratio() {
        let m = model2();
        let x = VarDimSample::new(1, vec![0.31, 0.44]).unwrap();
        let prep = m.prepare();
        let w = log_weights(&x, &prep);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let order = [1, 0];
        let (z, log_rho) = propose(&w, 2, 2, &order, &mut rng);
        assert_eq!(proposal_log_prob(&w, &z, 2, &order), log_rho);
        let t = joint_or_neg_inf(&x, &z, &prep);
        let ratio = (t - t) + (proposal_log_prob(&w, &z, 2, &order) - log_rho);
        assert_eq!(ratio, 0.0);
    }

    #[test]
    fn proposal_probabilities_normalize() {
        // For a fixed order, Σ_z ρ(z) over admissible z must be 1.
        let m = model2();
        let x = VarDimSample::new(1, vec![0.31, 0.44, 0.9]).unwrap();
        let prep = m.prepare();
        let w = log_weights(&x, &prep);
        for order in [[0, 1, 2], [2, 0, 1]] {
            let logs: Vec<f64> = enumerate_allocations(3, 2)
                .iter()
                .map(|z| proposal_log_prob(&w, z, 2, &order))
                .collect();
            assert_relative_eq!(log_sum_exp(&logs).exp(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn imh_matches_enumerated_conditional() {
        let m = model2();
        let prep = m.prepare();
        let x = VarDimSample::new(1, vec![0.35]).unwrap();
        let zs = enumerate_allocations(1, 2);
        let logs: Vec<f64> = zs.iter().map(|z| m.labeled_joint_log_density(&x, z).unwrap()).collect();
        let norm = log_sum_exp(&logs);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut z = initial_allocation(&x, &prep, &mut rng);
        let mut counts = vec![0usize; zs.len()];
        let n = 100_000;
        for _ in 0..n {
            z = imh_allocation_step(&x, &z, &prep, &mut rng).0;
            counts[zs.iter().position(|c| *c == z).unwrap()] += 1;
        }
        let tv: f64 = 0.5
            * logs
                .iter()
                .zip(&counts)
                .map(|(l, &c)| ((l - norm).exp() - c as f64 / n as f64).abs())
                .sum::<f64>();
        assert!(tv < 0.02, "tv = {tv}");
    }

    #[test]
    fn mstep_counts_and_robust_estimates() {
        let samples = set_from(&[vec![1.0, 9.0], vec![2.0], vec![3.0], vec![4.0], vec![5.0, 9.5]]);
        let g = |v: &[usize]| Allocation::from_one_based(v, 1).unwrap();
        let allocs = vec![g(&[1, 2]), g(&[1]), g(&[1]), g(&[1]), g(&[1, 2])];
        let prev = ApproxModel::new(
            samples.space().clone(),
            vec![GaussianComponent::new(vec![0.0], vec![1.0], 0.5)],
            0.1,
        )
        .unwrap();
        let (m, counts) = mstep_robust(&samples, &allocs, &prev, 1e-10).unwrap();
        assert_eq!(counts, vec![5]);
        assert_eq!(m.components[0].mu, vec![3.0]);
        assert_relative_eq!(m.components[0].sigma2[0].sqrt(), 2.0 / 1.349, epsilon = 1e-12);
        assert_relative_eq!(m.components[0].pi, 1.0);
        assert_relative_eq!(m.lambda, 0.4);
    }

    #[test]
    fn mstep_presence_and_rate_counting() {
        let mut points = Vec::new();
        let mut allocs = Vec::new();
        for i in 0..100 {
            let mut p = Vec::new();
            let mut z = Vec::new();
            if i < 60 {
                p.push(5.0);
                z.push(1);
            }
            if i < 30 {
                p.push(1.0);
                z.push(2);
            }
            points.push(p);
            allocs.push(Allocation::from_one_based(&z, 1).unwrap());
        }
        let samples = set_from(&points);
        let prev = ApproxModel::new(
            samples.space().clone(),
            vec![GaussianComponent::new(vec![5.0], vec![1.0], 0.5)],
            0.1,
        )
        .unwrap();
        let (m, _) = mstep_robust(&samples, &allocs, &prev, 1e-10).unwrap();
        assert_relative_eq!(m.components[0].pi, 0.6);
        assert_relative_eq!(m.lambda, 0.3);
        assert_eq!(m.components[0].sigma2[0], 1e-10);
    }

    #[test]
    fn mstep_keeps_previous_parameters_for_unused_components() {
        let samples = set_from(&[vec![1.0]]);
        let allocs = vec![Allocation::from_one_based(&[2], 1).unwrap()];
        let prev = ApproxModel::new(
            samples.space().clone(),
            vec![GaussianComponent::new(vec![7.0], vec![0.5], 0.5)],
            0.1,
        )
        .unwrap();
        let (m, counts) = mstep_robust(&samples, &allocs, &prev, 1e-10).unwrap();
        assert_eq!(counts, vec![0]);
        assert_eq!(m.components[0].mu, vec![7.0]);
        assert_eq!(m.components[0].sigma2, vec![0.5]);
        assert_eq!(m.components[0].pi, 0.0);
    }

    #[test]
    fn criterion_is_additive() {
        let samples = set_from(&[vec![1.0, 9.0], vec![2.0]]);
        let g = |v: &[usize]| Allocation::from_one_based(v, 1).unwrap();
        let allocs = vec![g(&[1, 2]), g(&[1])];
        let m = ApproxModel::new(
            samples.space().clone(),
            vec![GaussianComponent::new(vec![1.5], vec![0.5], 0.8)],
            0.3,
        )
        .unwrap();
        let single = kl_criterion_estimate(&samples, &allocs, &m, Execution::Sequential).unwrap();
        let mut doubled = samples.clone();
        for s in samples.iter() {
            doubled.push(s.clone()).unwrap();
        }
        let allocs2: Vec<Allocation> = allocs.iter().chain(&allocs).cloned().collect();
        let double = kl_criterion_estimate(&doubled, &allocs2, &m, Execution::Sequential).unwrap();
        assert_eq!(double, 2.0 * single);
        let expected = -(m.labeled_joint_log_density(samples.samples().first().unwrap(), &allocs[0]).unwrap()
            + m.labeled_joint_log_density(&samples.samples()[1], &allocs[1]).unwrap());
        assert_relative_eq!(single, expected, epsilon = 1e-12);
    }

    #[test]
    fn init_rules() {
        // p(k) = 0.2, 0.3, 0.403, 0.097 (k = 0..3)
        let mut pts = Vec::new();
        for (k, n) in [(0usize, 200usize), (1, 300), (2, 403), (3, 97)] {
            for _ in 0..n {
                pts.push((0..k).map(|j| 1.0 + j as f64).collect::<Vec<_>>());
            }
        }
        let s = set_from(&pts);
        assert_eq!(choose_num_components(&s, InitRule::Percentile(0.9)), 2);
        assert_eq!(choose_num_components(&s, InitRule::Percentile(0.5)), 1);
        assert_eq!(choose_num_components(&s, InitRule::Threshold(0.05)), 3);
        assert_eq!(choose_num_components(&s, InitRule::Threshold(0.25)), 2);
    }

    #[test]
    fn init_percentile_at_default_level() {
        // p(k <= 3) = 0.903 -> L = 3
        let mut pts = Vec::new();
        for (k, n) in [(2usize, 400usize), (3, 503), (4, 97)] {
            for _ in 0..n {
                pts.push((0..k).map(|j| 1.0 + j as f64).collect::<Vec<_>>());
            }
        }
        let s = set_from(&pts);
        assert_eq!(choose_num_components(&s, InitRule::Percentile(0.9)), 3);
        let m = initialize_model(&s, &FitConfig::default()).unwrap();
        assert_eq!(m.num_components(), 3);
        assert_eq!(m.components[1].mu, vec![2.0]);
        assert_eq!(m.components[1].pi, 0.9);
        assert_eq!(m.lambda, 0.1);
    }

    #[test]
    fn init_degenerate_all_empty() {
        let s = set_from(&[vec![], vec![], vec![]]);
        let m = initialize_model(&s, &FitConfig::default()).unwrap();
        assert_eq!(m.num_components(), 0);
        let cfg = FitConfig { iterations: 5, averaging_window: 2, ..FitConfig::default() };
        let r = sem_fit(&s, &cfg).unwrap();
        assert_eq!(r.model.num_components(), 0);
        assert_eq!(r.model.lambda, 0.0);
    }

    #[test]
    fn init_fallback_uses_larger_samples() {
        let s = set_from(&[vec![1.0, 2.0, 3.0], vec![1.0, 2.0, 3.0], vec![1.0]]);
        let cfg = FitConfig { init_rule: InitRule::Fixed(2), ..FitConfig::default() };
        let m = initialize_model(&s, &cfg).unwrap();
        assert_eq!(m.num_components(), 2);
        assert_eq!(m.components[0].mu, vec![1.0]);
        assert_eq!(m.components[1].mu, vec![2.0]);
    }

    #[test]
    fn empty_set_is_an_error() {
        let s = SampleSet::new(ParamSpace::interval(0.0, 1.0).unwrap());
        assert!(matches!(sem_fit(&s, &FitConfig::default()), Err(Error::EmptySampleSet)));
    }

    #[test]
    fn config_validation() {
        let cfg = FitConfig { averaging_window: 200, ..FitConfig::default() };
        assert!(cfg.validate().is_err());
        let cfg = FitConfig { init_rule: InitRule::Percentile(1.5), ..FitConfig::default() };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn pruning_reassigns_points_to_point_process() {
        let space = ParamSpace::interval(0.0, 10.0).unwrap();
        let mut model = ApproxModel::new(
            space,
            vec![
                GaussianComponent::new(vec![1.0], vec![1.0], 0.9),
                GaussianComponent::new(vec![5.0], vec![1.0], 0.01),
                GaussianComponent::new(vec![8.0], vec![1.0], 0.9),
            ],
            0.0,
        )
        .unwrap();
        let mut counts = vec![20, 2, 15];
        let g = |v: &[usize]| Allocation::from_one_based(v, 3).unwrap();
        let mut allocs = vec![g(&[1, 2, 3]), g(&[3, 1]), g(&[2, 4])];
        let removed = prune(&mut model, &mut counts, &mut allocs, 10, 4);
        assert_eq!(removed, vec![(1, 2)]);
        assert_eq!(model.num_components(), 2);
        assert_eq!(counts, vec![20, 15]);
        assert_eq!(allocs[0].to_one_based(2), vec![1, 3, 2]);
        assert_eq!(allocs[1].to_one_based(2), vec![2, 1]);
        assert_eq!(allocs[2].to_one_based(2), vec![3, 3]);
        assert_relative_eq!(model.lambda, 3.0 / 4.0);
    }
}
