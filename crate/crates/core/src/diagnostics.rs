//! Checks of a fitted model against the samples it summarizes.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::model::{ln_factorial, Allocation, ApproxModel, Label};
use crate::rng;
use crate::samples::SampleSet;
use crate::sinusoid;
use crate::truncnorm;

/// Reported value for an exact reconstruction, in dB.
pub const EXACT_MATCH_DB: f64 = -300.0;

/// `p̂(k)` on `0..pmf.len()`, with the mass beyond the last entry in `tail`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KDistribution {
    pub pmf: Vec<f64>,
    pub tail: f64,
}

impl KDistribution {
    pub fn get(&self, k: usize) -> f64 {
        self.pmf.get(k).copied().unwrap_or(0.0)
    }

    pub fn argmax(&self) -> usize {
        self.pmf
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (k, &p)| if p > best.1 { (k, p) } else { best })
            .0
    }
}

/// Poisson-binomial pmf of `Σ Bernoulli(π_l)` by iterative convolution.
pub fn poisson_binomial(pis: &[f64]) -> Vec<f64> {
    let mut pmf = vec![1.0];
    for &p in pis {
        let mut next = vec![0.0; pmf.len() + 1];
        for (j, &v) in pmf.iter().enumerate() {
            next[j] += v * (1.0 - p);
            next[j + 1] += v * p;
        }
        pmf = next;
    }
    pmf
}

/// Distribution of the number of points `Σ Bernoulli(π_l) + Poisson(λ)`
/// implied by the model, truncated at `L + ceil(λ + 10√λ) + 5`.
pub fn approx_posterior_k(model: &ApproxModel) -> KDistribution {
    let lambda = model.lambda;
    let k_cap = model.num_components() + (lambda + 10.0 * lambda.sqrt()).ceil() as usize + 5;
    let gates = poisson_binomial(&model.components.iter().map(|c| c.pi).collect::<Vec<_>>());
    let poisson: Vec<f64> = (0..=k_cap)
        .map(|j| match (j, lambda == 0.0) {
            (0, true) => 1.0,
            (_, true) => 0.0,
            _ => (j as f64 * lambda.ln() - lambda - ln_factorial(j)).exp(),
        })
        .collect();
    let pmf: Vec<f64> = (0..=k_cap)
        .map(|k| (0..=k.min(gates.len() - 1)).map(|j| gates[j] * poisson[k - j]).sum())
        .collect();
    let tail = (1.0 - pmf.iter().sum::<f64>()).max(0.0);
    KDistribution { pmf, tail }
}

/// Axis-aligned box `T ⊆ Θ` given by per-coordinate `(lo, hi)`.
pub type Region = [(f64, f64)];

fn check_region(model_space: &crate::model::ParamSpace, region: &Region) -> Result<bool> {
    if region.len() != model_space.dim() {
        return Err(Error::DimensionMismatch { expected: model_space.dim(), found: region.len() });
    }
    let mut empty = false;
    for (&(lo, hi), &(a, b)) in region.iter().zip(model_space.bounds()) {
        if hi <= lo {
            empty = true;
            continue;
        }
        if lo < a || hi > b {
            return Err(Error::OutOfBounds { point: vec![lo, hi] });
        }
    }
    Ok(!empty)
}

/// `E N(T) = Σ_l π_l P_l(T) + λ |T| / |Θ|` under the model, with `P_l` the
/// truncated Gaussian probability.
pub fn expected_count_interval(model: &ApproxModel, region: &Region) -> Result<f64> {
    if !check_region(&model.space, region)? {
        return Ok(0.0);
    }
    let bounds = model.space.bounds();
    let gaussian: f64 = model
        .components
        .iter()
        .map(|c| {
            c.pi * region
                .iter()
                .zip(bounds)
                .enumerate()
                .map(|(i, (&(lo, hi), &(a, b)))| {
                    let sd = c.sd(i);
                    truncnorm::interval_mass(c.mu[i], sd, lo, hi) / truncnorm::interval_mass(c.mu[i], sd, a, b)
                })
                .product::<f64>()
        })
        .sum();
    let frac: f64 = region.iter().zip(bounds).map(|(&(lo, hi), &(a, b))| (hi - lo) / (b - a)).product();
    Ok(gaussian + model.lambda * frac)
}

/// Half-open membership, closing the box at the upper edge of `Θ` so that
/// `T = Θ` counts every point.
fn in_region(p: &[f64], region: &Region, space: &crate::model::ParamSpace) -> bool {
    p.iter()
        .zip(region)
        .zip(space.bounds())
        .all(|((&x, &(lo, hi)), &(_, top))| x >= lo && (x < hi || (hi == top && x == top)))
}

/// `(1/M) Σ_i N⁽ⁱ⁾(T)` over the samples.
pub fn empirical_count_interval(samples: &SampleSet, region: &Region) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptySampleSet);
    }
    if !check_region(samples.space(), region)? {
        return Ok(0.0);
    }
    let total: usize = samples
        .iter()
        .map(|s| s.points().filter(|p| in_region(p, region, samples.space())).count())
        .sum();
    Ok(total as f64 / samples.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Residual {
    pub sample: usize,
    pub point: Vec<f64>,
}

/// Points allocated to the point process, with their source sample.
pub fn residuals(samples: &SampleSet, allocations: &[Allocation]) -> Result<Vec<Residual>> {
    if samples.len() != allocations.len() {
        return Err(Error::DimensionMismatch { expected: samples.len(), found: allocations.len() });
    }
    let mut out = Vec::new();
    for (i, (x, z)) in samples.iter().zip(allocations).enumerate() {
        if x.k() != z.k() {
            return Err(Error::DimensionMismatch { expected: x.k(), found: z.k() });
        }
        for (p, l) in x.points().zip(&z.labels) {
            if *l == Label::Outlier {
                out.push(Residual { sample: i, point: p.to_vec() });
            }
        }
    }
    Ok(out)
}

/// Points allocated to each Gaussian component, one coordinate only.
pub fn allocated_values(samples: &SampleSet, allocations: &[Allocation], num_components: usize, coord: usize) -> Vec<Vec<f64>> {
    let mut out = vec![Vec::new(); num_components];
    for (x, z) in samples.iter().zip(allocations) {
        for (p, l) in x.points().zip(&z.labels) {
            if let Label::Gaussian(g) = *l {
                out[g].push(p[coord]);
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub heights: Vec<f64>,
}

impl Histogram {
    /// Equal-width bins on `[lo, hi]`; values outside are ignored and `hi`
    /// falls in the last bin. `heights` are raw counts.
    pub fn counts(values: impl IntoIterator<Item = f64>, lo: f64, hi: f64, bins: usize) -> Result<Histogram> {
        if bins == 0 || !(hi > lo) {
            return Err(Error::Config(format!("histogram needs bins > 0 and hi > lo, got {bins} on [{lo}, {hi}]")));
        }
        let width = (hi - lo) / bins as f64;
        let mut heights = vec![0.0; bins];
        for v in values {
            if v >= lo && v <= hi {
                let b = (((v - lo) / width) as usize).min(bins - 1);
                heights[b] += 1.0;
            }
        }
        let edges = (0..=bins).map(|i| lo + i as f64 * width).collect();
        Ok(Histogram { edges, heights })
    }

    pub fn width(&self, bin: usize) -> f64 {
        self.edges[bin + 1] - self.edges[bin]
    }

    pub fn centers(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    pub fn integral(&self) -> f64 {
        self.heights.iter().enumerate().map(|(i, h)| h * self.width(i)).sum()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "lo,hi,height")?;
        for (i, h) in self.heights.iter().enumerate() {
            writeln!(w, "{:.17e},{:.17e},{:.17e}", self.edges[i], self.edges[i + 1], h)?;
        }
        Ok(())
    }
}

/// Histogram of every point of every sample (coordinate `coord`) over the
/// full range of `Θ`, scaled so that its integral equals the mean number of
/// points per sample.
pub fn bma_histogram_intensity(samples: &SampleSet, coord: usize, bins: usize) -> Result<Histogram> {
    if samples.is_empty() {
        return Err(Error::EmptySampleSet);
    }
    if coord >= samples.dim() {
        return Err(Error::DimensionMismatch { expected: samples.dim(), found: coord + 1 });
    }
    let (lo, hi) = samples.space().bounds()[coord];
    let mut h = Histogram::counts(samples.iter().flat_map(|s| s.points().map(move |p| p[coord])), lo, hi, bins)?;
    let m = samples.len() as f64;
    for (i, v) in h.heights.iter_mut().enumerate() {
        *v /= m * (h.edges[i + 1] - h.edges[i]);
    }
    Ok(h)
}

/// Model intensity `h(θ)` at grid points of a one-dimensional model.
pub fn intensity_curve(model: &ApproxModel, grid: &[f64]) -> Result<Vec<f64>> {
    if model.dim() != 1 {
        return Err(Error::DimensionMismatch { expected: 1, found: model.dim() });
    }
    grid.iter().map(|&t| model.intensity(&[t])).collect()
}

/// `n` evenly spaced points covering `[lo, hi]`.
pub fn grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.5 * (lo + hi)],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// Component density rescaled to peak at one over `Θ`, then multiplied by
/// its probability of presence.
pub fn normalized_density(model: &ApproxModel, component: usize, theta: &[f64]) -> Result<f64> {
    model.space.check(theta)?;
    let c = model
        .components
        .get(component)
        .ok_or_else(|| Error::InvalidAllocation(format!("no component {}", component + 1)))?;
    let mut log_ratio = 0.0;
    for (i, (&x, &(lo, hi))) in theta.iter().zip(model.space.bounds()).enumerate() {
        let peak = c.mu[i].clamp(lo, hi);
        log_ratio += ((peak - c.mu[i]).powi(2) - (x - c.mu[i]).powi(2)) / (2.0 * c.sigma2[i]);
    }
    Ok(c.pi * log_ratio.exp())
}

/// Averaged reconstruction together with the number of draws that entered
/// it and those skipped for a singular design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reconstruction {
    pub signal: Vec<f64>,
    pub used: usize,
    pub skipped: usize,
}

fn draw_reconstruction(omega: &[f64], y: &[f64], delta2: f64) -> Option<Vec<f64>> {
    let a = sinusoid::amplitude_posterior_mean(omega, y, delta2).ok()?;
    Some(sinusoid::synthesize(omega, &a, y.len()))
}

fn average(draws: Vec<Option<Vec<f64>>>, n: usize) -> Reconstruction {
    let mut signal = vec![0.0; n];
    let mut used = 0;
    for d in draws.iter().flatten() {
        used += 1;
        for (s, v) in signal.iter_mut().zip(d) {
            *s += v;
        }
    }
    if used > 0 {
        signal.iter_mut().for_each(|s| *s /= used as f64);
    }
    Reconstruction { signal, used, skipped: draws.len() - used }
}

/// `(1/M) Σ_i D⁽ⁱ⁾ â⁽ⁱ⁾` over sinusoid samples.
pub fn reconstruct_bma(samples: &SampleSet, y: &[f64], delta2: f64, exec: Execution) -> Result<Reconstruction> {
    if samples.is_empty() {
        return Err(Error::EmptySampleSet);
    }
    if samples.dim() != 1 {
        return Err(Error::DimensionMismatch { expected: 1, found: samples.dim() });
    }
    let draws = exec.map(samples.len(), |i| draw_reconstruction(samples.samples()[i].coords(), y, delta2));
    Ok(average(draws, y.len()))
}

/// `(1/R) Σ_r D⁽ʳ⁾ â⁽ʳ⁾` over `R` draws from the fitted model; with
/// `include_outliers = false` the point process is switched off.
pub fn reconstruct_from_model(
    model: &ApproxModel,
    draws: usize,
    y: &[f64],
    delta2: f64,
    include_outliers: bool,
    seed: u64,
    exec: Execution,
) -> Result<Reconstruction> {
    if draws == 0 {
        return Err(Error::Config("reconstruction needs at least one draw".into()));
    }
    if model.dim() != 1 {
        return Err(Error::DimensionMismatch { expected: 1, found: model.dim() });
    }
    let mut m = model.clone();
    if !include_outliers {
        m.lambda = 0.0;
    }
    let out = exec.map(draws, |r| {
        let mut rng = rng::stream(seed, &[0xEC, r as u64]);
        let (x, _) = m.sample(&mut rng);
        draw_reconstruction(x.coords(), y, delta2)
    });
    Ok(average(out, y.len()))
}

/// `10 log10(‖ŷ - y‖² / ‖y‖²)`.
pub fn reconstruction_error_db(estimate: &[f64], reference: &[f64]) -> Result<f64> {
    if estimate.len() != reference.len() {
        return Err(Error::DimensionMismatch { expected: reference.len(), found: estimate.len() });
    }
    let norm: f64 = reference.iter().map(|v| v * v).sum();
    if norm == 0.0 {
        return Err(Error::NonFinite("reference signal has zero energy".into()));
    }
    let err: f64 = estimate.iter().zip(reference).map(|(a, b)| (a - b) * (a - b)).sum();
    if err == 0.0 {
        return Ok(EXACT_MATCH_DB);
    }
    Ok(10.0 * (err / norm).log10())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentSummary {
    pub mu: Vec<f64>,
    /// Per-coordinate standard deviation.
    pub s: Vec<f64>,
    pub pi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalCount {
    pub region: Vec<(f64, f64)>,
    pub model: f64,
    pub empirical: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryReport {
    pub components: Vec<ComponentSummary>,
    pub lambda: f64,
    pub approx_k: KDistribution,
    pub empirical_k: Vec<f64>,
    pub intervals: Vec<IntervalCount>,
    pub residual_count: usize,
    pub residual_histogram: Option<Histogram>,
    pub bma_histogram: Histogram,
    pub intensity_grid: Vec<f64>,
    pub intensity: Vec<f64>,
    pub reconstruction_error_db: Option<ReconstructionErrors>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionErrors {
    pub bma: f64,
    pub model: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportOptions {
    pub intervals: Vec<Vec<(f64, f64)>>,
    /// Coordinate used for histograms and intensity curves.
    pub coord: usize,
    pub bins: usize,
    pub grid_points: usize,
}

impl Default for ReportOptions {
    fn default() -> Self {
        ReportOptions { intervals: Vec::new(), coord: 0, bins: 100, grid_points: 512 }
    }
}

/// Gathers the summaries of a fit. Allocations, when given, supply the
/// residuals.
pub fn build_report(
    model: &ApproxModel,
    samples: &SampleSet,
    allocations: Option<&[Allocation]>,
    opts: &ReportOptions,
) -> Result<SummaryReport> {
    if model.space != *samples.space() {
        return Err(Error::DimensionMismatch { expected: model.dim(), found: samples.dim() });
    }
    if opts.coord >= model.dim() {
        return Err(Error::DimensionMismatch { expected: model.dim(), found: opts.coord + 1 });
    }
    let components = model
        .components
        .iter()
        .map(|c| ComponentSummary { mu: c.mu.clone(), s: c.sigma2.iter().map(|v| v.sqrt()).collect(), pi: c.pi })
        .collect();
    let intervals = opts
        .intervals
        .iter()
        .map(|t| {
            Ok(IntervalCount {
                region: t.clone(),
                model: expected_count_interval(model, t)?,
                empirical: empirical_count_interval(samples, t)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let (lo, hi) = model.space.bounds()[opts.coord];
    let (residual_count, residual_histogram) = match allocations {
        Some(z) => {
            let r = residuals(samples, z)?;
            let h = Histogram::counts(r.iter().map(|p| p.point[opts.coord]), lo, hi, opts.bins)?;
            (r.len(), Some(h))
        }
        None => (0, None),
    };
    let projected = model.project(opts.coord)?;
    let intensity_grid = grid(lo, hi, opts.grid_points);
    let intensity = intensity_curve(&projected, &intensity_grid)?;
    Ok(SummaryReport {
        components,
        lambda: model.lambda,
        approx_k: approx_posterior_k(model),
        empirical_k: samples.k_distribution(),
        intervals,
        residual_count,
        residual_histogram,
        bma_histogram: bma_histogram_intensity(samples, opts.coord, opts.bins)?,
        intensity_grid,
        intensity,
        reconstruction_error_db: None,
    })
}

impl SummaryReport {
    /// `k, approx, empirical` rows.
    pub fn write_k_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "k,approx,empirical")?;
        let n = self.approx_k.pmf.len().max(self.empirical_k.len());
        for k in 0..n {
            let e = self.empirical_k.get(k).copied().unwrap_or(0.0);
            writeln!(w, "{k},{:.17e},{:.17e}", self.approx_k.get(k), e)?;
        }
        Ok(())
    }

    /// `theta, intensity` rows of the model curve.
    pub fn write_intensity_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "theta,intensity")?;
        for (t, h) in self.intensity_grid.iter().zip(&self.intensity) {
            writeln!(w, "{t:.17e},{h:.17e}")?;
        }
        Ok(())
    }

    pub fn write_components_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let d = self.components.first().map_or(0, |c| c.mu.len());
        let mut header = vec!["component".to_string()];
        header.extend((0..d).map(|i| format!("mu{i}")));
        header.extend((0..d).map(|i| format!("s{i}")));
        header.push("pi".into());
        writeln!(w, "{}", header.join(","))?;
        for (l, c) in self.components.iter().enumerate() {
            let mut row = vec![(l + 1).to_string()];
            row.extend(c.mu.iter().map(|v| format!("{v:.17e}")));
            row.extend(c.s.iter().map(|v| format!("{v:.17e}")));
            row.push(format!("{:.17e}", c.pi));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{GaussianComponent, ParamSpace, VarDimSample};
    use approx::assert_relative_eq;

    fn model(pis: &[f64], lambda: f64) -> ApproxModel {
        let comps = pis
            .iter()
            .enumerate()
            .map(|(i, &p)| GaussianComponent::new(vec![0.2 + 0.3 * i as f64], vec![0.01], p))
            .collect();
        ApproxModel::new(ParamSpace::interval(0.0, 1.0).unwrap(), comps, lambda).unwrap()
    }

    #[test]
    fn k_distribution_examples() {
        let p = approx_posterior_k(&model(&[1.0], 0.0));
        assert_eq!(p.get(1), 1.0);
        assert_eq!(p.get(0) + p.get(2), 0.0);

        let p = approx_posterior_k(&model(&[0.5, 0.5], 0.0));
        assert_eq!(&p.pmf[..3], &[0.25, 0.5, 0.25]);

        let p = approx_posterior_k(&model(&[], 0.1));
        for k in 0..p.pmf.len() {
            let want = (-0.1f64).exp() * 0.1f64.powi(k as i32) / libm::tgamma(k as f64 + 1.0);
            assert_relative_eq!(p.get(k), want, max_relative = 1e-12);
        }
        assert_relative_eq!(p.pmf.iter().sum::<f64>() + p.tail, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn interval_counts() {
        let m = model(&[0.9, 0.4], 0.3);
        assert_relative_eq!(expected_count_interval(&m, &[(0.0, 1.0)]).unwrap(), 1.6, epsilon = 1e-12);
        assert_eq!(expected_count_interval(&m, &[(0.5, 0.5)]).unwrap(), 0.0);
        let a = expected_count_interval(&m, &[(0.0, 0.3)]).unwrap();
        let b = expected_count_interval(&m, &[(0.3, 1.0)]).unwrap();
        assert_relative_eq!(a + b, 1.6, epsilon = 1e-12);
        assert!(expected_count_interval(&m, &[(0.5, 1.5)]).is_err());
    }

    #[test]
    fn empirical_counts_and_residuals() {
        let space = ParamSpace::interval(0.0, 1.0).unwrap();
        let mut set = SampleSet::new(space);
        set.push(VarDimSample::new(1, vec![0.1, 0.5, 1.0]).unwrap()).unwrap();
        set.push(VarDimSample::new(1, vec![0.7]).unwrap()).unwrap();
        assert_relative_eq!(empirical_count_interval(&set, &[(0.0, 1.0)]).unwrap(), 2.0);
        assert_relative_eq!(empirical_count_interval(&set, &[(0.0, 0.5)]).unwrap(), 0.5);
        let z = vec![
            Allocation::new(vec![Label::Gaussian(0), Label::Outlier, Label::Outlier]),
            Allocation::new(vec![Label::Gaussian(0)]),
        ];
        let r = residuals(&set, &z).unwrap();
        assert_eq!(r.len(), 2);
        assert_eq!(r[1], Residual { sample: 0, point: vec![1.0] });
        let z0 = vec![Allocation::new(vec![Label::Gaussian(0); 1]); 1];
        assert!(residuals(&set, &z0).is_err());
    }

    #[test]
    fn bma_histogram_integrates_to_mean_k() {
        let mut set = SampleSet::new(ParamSpace::interval(0.0, 3.0).unwrap());
        set.push(VarDimSample::new(1, vec![0.5, 2.9]).unwrap()).unwrap();
        let h = bma_histogram_intensity(&set, 0, 7).unwrap();
        assert_relative_eq!(h.integral(), 2.0, epsilon = 1e-12);
        set.push(VarDimSample::empty(1)).unwrap();
        assert_relative_eq!(bma_histogram_intensity(&set, 0, 7).unwrap().integral(), 1.0, epsilon = 1e-12);
        assert!(bma_histogram_intensity(&SampleSet::new(ParamSpace::interval(0.0, 1.0).unwrap()), 0, 3).is_err());
    }

    #[test]
    fn intensity_integrates_to_total_presence() {
        let m = model(&[0.9, 0.4, 0.7], 0.3);
        let n = 100_000;
        let h = 1.0 / n as f64;
        let g: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) * h).collect();
        let total: f64 = intensity_curve(&m, &g).unwrap().iter().sum::<f64>() * h;
        assert_relative_eq!(total, 2.0, epsilon = 1e-6);
    }

    #[test]
    fn normalized_density_peaks_at_presence() {
        let m = model(&[0.4], 0.0);
        assert_relative_eq!(normalized_density(&m, 0, &[0.2]).unwrap(), 0.4);
        assert!(normalized_density(&m, 0, &[0.5]).unwrap() < 0.4);
        let edge = ApproxModel::new(
            ParamSpace::interval(0.0, 1.0).unwrap(),
            vec![GaussianComponent::new(vec![-0.1], vec![0.01], 0.7)],
            0.0,
        )
        .unwrap();
        assert_relative_eq!(normalized_density(&edge, 0, &[0.0]).unwrap(), 0.7);
    }

    #[test]
    fn error_db_examples() {
        let y = vec![1.0, -2.0, 0.5];
        assert_eq!(reconstruction_error_db(&y, &y).unwrap(), EXACT_MATCH_DB);
        let twice: Vec<f64> = y.iter().map(|v| 2.0 * v).collect();
        assert_relative_eq!(reconstruction_error_db(&twice, &y).unwrap(), 0.0, epsilon = 1e-12);
        // ‖e‖²/‖y‖² = 0.1
        let y = vec![1.0, 0.0];
        let e = vec![1.0, 0.1f64.sqrt()];
        assert_relative_eq!(reconstruction_error_db(&e, &y).unwrap(), -10.0, epsilon = 1e-12);
        assert!(reconstruction_error_db(&[1.0], &[0.0]).is_err());
    }

    #[test]
    fn empty_samples_reconstruct_zero() {
        let mut set = SampleSet::new(sinusoid::frequency_space());
        for _ in 0..3 {
            set.push(VarDimSample::empty(1)).unwrap();
        }
        let r = reconstruct_bma(&set, &[1.0, 2.0, 3.0], 10.0, Execution::Sequential).unwrap();
        assert_eq!(r.signal, vec![0.0; 3]);
        assert_eq!((r.used, r.skipped), (3, 0));
    }

    #[test]
    fn model_reconstruction_is_reproducible_across_execution_modes() {
        let m = ApproxModel::new(
            sinusoid::frequency_space(),
            vec![GaussianComponent::new(vec![0.6], vec![1e-4], 0.8)],
            0.2,
        )
        .unwrap();
        let y: Vec<f64> = (0..32).map(|i| (0.6 * i as f64).cos()).collect();
        let a = reconstruct_from_model(&m, 200, &y, 50.0, true, 3, Execution::Sequential).unwrap();
        let b = reconstruct_from_model(&m, 200, &y, 50.0, true, 3, Execution::default()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.used + a.skipped, 200);
    }
}
