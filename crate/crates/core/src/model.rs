//! The variable-dimensional approximating model: `L` gated Gaussian
//! components plus a homogeneous Poisson point process on a box `Θ ⊂ ℝᵈ`.
//!
//! A draw `(k, θ₁..θ_k)` is generated by switching each Gaussian component on
//! with its probability of presence, adding a Poisson number of uniform
//! points, and shuffling all points into a uniformly random order. The
//! allocation vector records which source produced each point.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::truncnorm;

/// Axis-aligned box of component-specific parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpace {
    bounds: Vec<(f64, f64)>,
}

impl ParamSpace {
    pub fn new(bounds: Vec<(f64, f64)>) -> Result<Self> {
        let space = ParamSpace { bounds };
        space.validate()?;
        Ok(space)
    }

    pub fn interval(lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![(lo, hi)])
    }

    pub fn validate(&self) -> Result<()> {
        if self.bounds.is_empty() {
            return Err(Error::InvalidSpace("dimension must be positive".into()));
        }
        for &(lo, hi) in &self.bounds {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::InvalidSpace(format!("bad bounds ({lo}, {hi})")));
            }
        }
        let v = self.volume();
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::InvalidSpace(format!("volume {v} is not finite and positive")));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn volume(&self) -> f64 {
        self.bounds.iter().map(|(lo, hi)| hi - lo).product()
    }

    pub fn ln_volume(&self) -> f64 {
        self.bounds.iter().map(|(lo, hi)| (hi - lo).ln()).sum()
    }

    pub fn contains(&self, theta: &[f64]) -> bool {
        theta.len() == self.dim()
            && theta.iter().zip(&self.bounds).all(|(&x, &(lo, hi))| x >= lo && x <= hi)
    }

    pub fn check(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: theta.len() });
        }
        if !self.contains(theta) {
            return Err(Error::OutOfBounds { point: theta.to_vec() });
        }
        Ok(())
    }

    /// One-dimensional space of a single coordinate.
    pub fn project(&self, coord: usize) -> Result<ParamSpace> {
        let b = *self
            .bounds
            .get(coord)
            .ok_or(Error::DimensionMismatch { expected: self.dim(), found: coord + 1 })?;
        ParamSpace::new(vec![b])
    }
}

/// One draw `(k, θ₁..θ_k)` stored as a flat row-major `k × d` buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct VarDimSample {
    dim: usize,
    coords: Vec<f64>,
}

impl VarDimSample {
    pub fn new(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if dim == 0 || !coords.len().is_multiple_of(dim) {
            return Err(Error::DimensionMismatch { expected: dim, found: coords.len() });
        }
        Ok(VarDimSample { dim, coords })
    }

    pub fn empty(dim: usize) -> Self {
        VarDimSample { dim, coords: Vec::new() }
    }

    pub fn from_points<P: AsRef<[f64]>>(dim: usize, points: &[P]) -> Result<Self> {
        let mut coords = Vec::with_capacity(points.len() * dim);
        for p in points {
            let p = p.as_ref();
            if p.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: p.len() });
            }
            coords.extend_from_slice(p);
        }
        Ok(VarDimSample { dim, coords })
    }

    pub fn k(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, j: usize) -> &[f64] {
        &self.coords[j * self.dim..(j + 1) * self.dim]
    }

    pub fn points(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.dim)
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    /// Keeps only coordinate `coord` of every point.
    pub fn project(&self, coord: usize) -> VarDimSample {
        VarDimSample { dim: 1, coords: self.points().map(|p| p[coord]).collect() }
    }

    /// Points in lexicographic order, a canonical representative of the
    /// unordered point set.
    pub fn canonical(&self) -> VarDimSample {
        let mut pts: Vec<&[f64]> = self.points().collect();
        pts.sort_by(|a, b| a.iter().zip(b.iter()).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal));
        VarDimSample { dim: self.dim, coords: pts.concat() }
    }

    /// Points reordered by increasing first coordinate.
    pub fn sorted_by_first(&self) -> VarDimSample {
        let mut pts: Vec<&[f64]> = self.points().collect();
        pts.sort_by(|a, b| a[0].total_cmp(&b[0]));
        VarDimSample { dim: self.dim, coords: pts.concat() }
    }
}

/// Source of one point: a Gaussian component (0-based index) or the Poisson
/// point process. On disk and in the CLI, labels are written `1..=L` for
/// Gaussian components and `L+1` for the point process.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Gaussian(usize),
    Outlier,
}

impl Label {
    pub fn to_one_based(self, num_components: usize) -> usize {
        match self {
            Label::Gaussian(l) => l + 1,
            Label::Outlier => num_components + 1,
        }
    }

    pub fn from_one_based(value: usize, num_components: usize) -> Result<Label> {
        match value {
            0 => Err(Error::InvalidAllocation("label 0 is not valid (labels start at 1)".into())),
            v if v <= num_components => Ok(Label::Gaussian(v - 1)),
            v if v == num_components + 1 => Ok(Label::Outlier),
            v => Err(Error::InvalidAllocation(format!(
                "label {v} out of range 1..={}",
                num_components + 1
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Allocation {
    pub labels: Vec<Label>,
}

impl Allocation {
    pub fn new(labels: Vec<Label>) -> Self {
        Allocation { labels }
    }

    pub fn k(&self) -> usize {
        self.labels.len()
    }

    pub fn from_one_based(values: &[usize], num_components: usize) -> Result<Self> {
        let labels = values
            .iter()
            .map(|&v| Label::from_one_based(v, num_components))
            .collect::<Result<_>>()?;
        Ok(Allocation { labels })
    }

    pub fn to_one_based(&self, num_components: usize) -> Vec<usize> {
        self.labels.iter().map(|l| l.to_one_based(num_components)).collect()
    }

    pub fn count_outliers(&self) -> usize {
        self.labels.iter().filter(|l| **l == Label::Outlier).count()
    }
}

/// Counts of points per source: a presence flag per Gaussian component and
/// the number of point-process points.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Indicator {
    pub present: Vec<bool>,
    pub outliers: usize,
}

impl Indicator {
    pub fn num_present(&self) -> usize {
        self.present.iter().filter(|&&p| p).count()
    }
}

/// Builds the indicator vector of an allocation, checking that every
/// Gaussian label is in range and used at most once.
pub fn indicator_from_allocation(z: &Allocation, num_components: usize) -> Result<Indicator> {
    let mut present = vec![false; num_components];
    let mut outliers = 0;
    for label in &z.labels {
        match *label {
            Label::Gaussian(l) if l >= num_components => {
                return Err(Error::InvalidAllocation(format!(
                    "label {} out of range 1..={}",
                    l + 1,
                    num_components + 1
                )))
            }
            Label::Gaussian(l) if present[l] => {
                return Err(Error::InvalidAllocation(format!("Gaussian label {} repeated", l + 1)))
            }
            Label::Gaussian(l) => present[l] = true,
            Label::Outlier => outliers += 1,
        }
    }
    Ok(Indicator { present, outliers })
}

/// Diagonal Gaussian component with its probability of presence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianComponent {
    pub mu: Vec<f64>,
    pub sigma2: Vec<f64>,
    pub pi: f64,
}

impl GaussianComponent {
    pub fn new(mu: Vec<f64>, sigma2: Vec<f64>, pi: f64) -> Self {
        GaussianComponent { mu, sigma2, pi }
    }

    pub fn sd(&self, dim: usize) -> f64 {
        self.sigma2[dim].sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApproxModel {
    pub space: ParamSpace,
    pub components: Vec<GaussianComponent>,
    pub lambda: f64,
}

impl ApproxModel {
    pub fn new(space: ParamSpace, components: Vec<GaussianComponent>, lambda: f64) -> Result<Self> {
        let model = ApproxModel { space, components, lambda };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        self.space.validate()?;
        let d = self.space.dim();
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::InvalidModel(format!("lambda = {} must be >= 0", self.lambda)));
        }
        for (l, c) in self.components.iter().enumerate() {
            if c.mu.len() != d || c.sigma2.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: c.mu.len().max(c.sigma2.len()),
                });
            }
            if !c.mu.iter().all(|m| m.is_finite()) {
                return Err(Error::InvalidModel(format!("component {}: non-finite mean", l + 1)));
            }
            if !c.sigma2.iter().all(|&s| s.is_finite() && s > 0.0) {
                return Err(Error::InvalidModel(format!("component {}: variance must be > 0", l + 1)));
            }
            if !(c.pi >= 0.0 && c.pi <= 1.0) {
                return Err(Error::InvalidModel(format!("component {}: pi = {} not in [0, 1]", l + 1, c.pi)));
            }
        }
        Ok(())
    }

    pub fn num_components(&self) -> usize {
        self.components.len()
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    pub fn prepare(&self) -> PreparedModel<'_> {
        PreparedModel::new(self)
    }

    pub fn allocation_log_prior(&self, z: &Allocation) -> Result<f64> {
        let xi = indicator_from_allocation(z, self.num_components())?;
        let k = z.k();
        // ln(ξ!/k!) + ln Poisson(ξ; λ) = -ln k! - λ + ξ ln λ
        Ok(-ln_factorial(k) - self.lambda + outlier_count_term(xi.outliers, self.lambda.ln())
            + self.prepare().gate_log_prob(&xi))
    }

    pub fn component_log_density(&self, theta: &[f64], label: Label) -> Result<f64> {
        self.space.check(theta)?;
        match label {
            Label::Gaussian(l) if l >= self.num_components() => Err(Error::InvalidAllocation(
                format!("label {} out of range 1..={}", l + 1, self.num_components() + 1),
            )),
            _ => Ok(self.prepare().log_density(theta, label)),
        }
    }

    pub fn labeled_joint_log_density(&self, x: &VarDimSample, z: &Allocation) -> Result<f64> {
        if x.dim() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: x.dim() });
        }
        if x.k() != z.k() {
            return Err(Error::DimensionMismatch { expected: x.k(), found: z.k() });
        }
        let xi = indicator_from_allocation(z, self.num_components())?;
        for p in x.points() {
            self.space.check(p)?;
        }
        Ok(self.prepare().joint_log_density_unchecked(x, z, &xi))
    }

    /// `ln q(x) = ln Σ_{z ∈ 𝒵} q(x, z)` by enumerating every admissible
    /// allocation. Exponential in `k`; meant for small instances.
    pub fn unlabeled_log_density(&self, x: &VarDimSample) -> Result<f64> {
        let x = &x.canonical();
        let zs = enumerate_allocations(x.k(), self.num_components());
        let terms = zs
            .iter()
            .map(|z| self.labeled_joint_log_density(x, z))
            .collect::<Result<Vec<_>>>()?;
        Ok(log_sum_exp(&terms))
    }

    /// `h(θ) = Σ_l π_l N_Θ(θ | μ_l, Σ_l)`; the point process is not included.
    pub fn intensity(&self, theta: &[f64]) -> Result<f64> {
        self.space.check(theta)?;
        let prep = self.prepare();
        Ok((0..self.num_components())
            .map(|l| self.components[l].pi * prep.log_density(theta, Label::Gaussian(l)).exp())
            .sum())
    }

    /// Draws `(x, z)` from the generative model.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (VarDimSample, Allocation) {
        let d = self.dim();
        let mut pts: Vec<(Vec<f64>, Label)> = Vec::new();
        for (l, c) in self.components.iter().enumerate() {
            if rng.random::<f64>() < c.pi {
                let p = (0..d)
                    .map(|i| {
                        let (lo, hi) = self.space.bounds()[i];
                        truncnorm::sample(rng, c.mu[i], c.sd(i), lo, hi)
                    })
                    .collect();
                pts.push((p, Label::Gaussian(l)));
            }
        }
        let n_out = if self.lambda > 0.0 {
            Poisson::new(self.lambda).expect("lambda validated").sample(rng) as usize
        } else {
            0
        };
        for _ in 0..n_out {
            let p = self.space.bounds().iter().map(|&(lo, hi)| rng.random_range(lo..hi)).collect();
            pts.push((p, Label::Outlier));
        }
        pts.shuffle(rng);
        let coords = pts.iter().flat_map(|(p, _)| p.iter().copied()).collect();
        let labels = pts.into_iter().map(|(_, l)| l).collect();
        (VarDimSample { dim: d, coords }, Allocation { labels })
    }

    /// Model reduced to one coordinate (marginals of the diagonal Gaussians).
    pub fn project(&self, coord: usize) -> Result<ApproxModel> {
        let space = self.space.project(coord)?;
        let components = self
            .components
            .iter()
            .map(|c| GaussianComponent::new(vec![c.mu[coord]], vec![c.sigma2[coord]], c.pi))
            .collect();
        Ok(ApproxModel { space, components, lambda: self.lambda })
    }
}

/// Model with per-component truncation constants precomputed, for repeated
/// density evaluation. Performs no bounds checking.
#[derive(Debug, Clone)]
pub struct PreparedModel<'a> {
    pub model: &'a ApproxModel,
    /// `-½ ln(2π σ²) - ln(mass of Θ)`, summed over dimensions.
    ln_norm: Vec<f64>,
    ln_pi: Vec<f64>,
    ln_one_minus_pi: Vec<f64>,
    ln_volume: f64,
    /// `ln(λ / |Θ|)`
    ln_outlier_density: f64,
}

impl<'a> PreparedModel<'a> {
    pub fn new(model: &'a ApproxModel) -> Self {
        let bounds = model.space.bounds();
        let ln_norm = model
            .components
            .iter()
            .map(|c| {
                (0..model.dim())
                    .map(|i| {
                        let (lo, hi) = bounds[i];
                        let mass = truncnorm::interval_mass(c.mu[i], c.sd(i), lo, hi);
                        -truncnorm::LN_SQRT_2PI - 0.5 * c.sigma2[i].ln() - mass.ln()
                    })
                    .sum()
            })
            .collect();
        let ln_volume = model.space.ln_volume();
        PreparedModel {
            model,
            ln_norm,
            ln_pi: model.components.iter().map(|c| c.pi.ln()).collect(),
            ln_one_minus_pi: model.components.iter().map(|c| (-c.pi).ln_1p()).collect(),
            ln_volume,
            ln_outlier_density: model.lambda.ln() - ln_volume,
        }
    }

    pub fn num_components(&self) -> usize {
        self.ln_norm.len()
    }

    pub fn lambda(&self) -> f64 {
        self.model.lambda
    }

    pub fn ln_pi(&self, l: usize) -> f64 {
        self.ln_pi[l]
    }

    /// `ln(π_l / (1 - π_l))`
    pub fn ln_gate_odds(&self, l: usize) -> f64 {
        self.ln_pi[l] - self.ln_one_minus_pi[l]
    }

    /// `ln(λ/|Θ|)`; `-∞` when `λ = 0`.
    pub fn ln_outlier_density(&self) -> f64 {
        self.ln_outlier_density
    }

    /// Log density of `theta` under the source `label`.
    pub fn log_density(&self, theta: &[f64], label: Label) -> f64 {
        match label {
            Label::Outlier => -self.ln_volume,
            Label::Gaussian(l) => {
                let c = &self.model.components[l];
                let q: f64 = theta
                    .iter()
                    .zip(c.mu.iter().zip(&c.sigma2))
                    .map(|(&x, (&m, &v))| (x - m) * (x - m) / v)
                    .sum();
                self.ln_norm[l] - 0.5 * q
            }
        }
    }

    pub fn gate_log_prob(&self, xi: &Indicator) -> f64 {
        xi.present
            .iter()
            .enumerate()
            .map(|(l, &p)| if p { self.ln_pi[l] } else { self.ln_one_minus_pi[l] })
            .sum()
    }

    /// `ln q(x, z)` for an allocation already known to be admissible.
    pub fn joint_log_density_unchecked(&self, x: &VarDimSample, z: &Allocation, xi: &Indicator) -> f64 {
        let mut acc = -self.model.lambda - ln_factorial(x.k());
        acc += outlier_count_term(xi.outliers, self.ln_outlier_density);
        for (p, &label) in x.points().zip(&z.labels) {
            if let Label::Gaussian(_) = label {
                acc += self.log_density(p, label);
            }
        }
        acc + self.gate_log_prob(xi)
    }
}

/// `n · ln_rate` with the convention `0 · ln 0 = 0`.
fn outlier_count_term(n: usize, ln_rate: f64) -> f64 {
    if n == 0 {
        0.0
    } else {
        n as f64 * ln_rate
    }
}

pub fn ln_factorial(k: usize) -> f64 {
    if k < 2 {
        0.0
    } else {
        libm::lgamma(k as f64 + 1.0)
    }
}

pub fn log_sum_exp(values: &[f64]) -> f64 {
    let m = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + values.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Every admissible allocation vector of length `k` with `L` Gaussian
/// components (each Gaussian label used at most once).
pub fn enumerate_allocations(k: usize, num_components: usize) -> Vec<Allocation> {
    fn rec(pos: usize, k: usize, used: &mut Vec<bool>, cur: &mut Vec<Label>, out: &mut Vec<Allocation>) {
        if pos == k {
            out.push(Allocation::new(cur.clone()));
            return;
        }
        for l in 0..used.len() {
            if !used[l] {
                used[l] = true;
                cur.push(Label::Gaussian(l));
                rec(pos + 1, k, used, cur, out);
                cur.pop();
                used[l] = false;
            }
        }
        cur.push(Label::Outlier);
        rec(pos + 1, k, used, cur, out);
        cur.pop();
    }
    let mut out = Vec::new();
    rec(0, k, &mut vec![false; num_components], &mut Vec::with_capacity(k), &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn unit_model(pi: f64, lambda: f64) -> ApproxModel {
        ApproxModel::new(
            ParamSpace::interval(0.0, 1.0).unwrap(),
            vec![GaussianComponent::new(vec![0.5], vec![0.01], pi)],
            lambda,
        )
        .unwrap()
    }

    fn alloc(v: &[usize], l: usize) -> Allocation {
        Allocation::from_one_based(v, l).unwrap()
    }

    #[test]
    fn indicator_counts() {
        let xi = indicator_from_allocation(&alloc(&[], 2), 2).unwrap();
        assert_eq!(xi, Indicator { present: vec![false, false], outliers: 0 });
        let xi = indicator_from_allocation(&alloc(&[2, 3, 3], 2), 2).unwrap();
        assert_eq!(xi, Indicator { present: vec![false, true], outliers: 2 });
        assert!(indicator_from_allocation(&alloc(&[1, 1], 2), 2).is_err());
        assert!(Allocation::from_one_based(&[4], 2).is_err());
        assert!(indicator_from_allocation(&Allocation::new(vec![Label::Gaussian(5)]), 2).is_err());
    }

    #[test]
    fn allocation_prior_hand_values() {
        let m = unit_model(0.4, 0.2);
        assert_relative_eq!(m.allocation_log_prior(&alloc(&[], 1)).unwrap(), (0.6 * (-0.2f64).exp()).ln(), epsilon = 1e-14);
        assert_relative_eq!(m.allocation_log_prior(&alloc(&[1], 1)).unwrap(), (0.4 * (-0.2f64).exp()).ln(), epsilon = 1e-14);
        let expected = ((-0.2f64).exp() * 0.2 * 0.2 / 2.0 * 0.6).ln();
        assert_relative_eq!(m.allocation_log_prior(&alloc(&[2, 2], 1)).unwrap(), expected, epsilon = 1e-14);
    }

    #[test]
    fn pi_extremes_signal_neg_infinity() {
        let m = unit_model(1.0, 0.2);
        assert_eq!(m.allocation_log_prior(&alloc(&[], 1)).unwrap(), f64::NEG_INFINITY);
        assert!(m.allocation_log_prior(&alloc(&[1], 1)).unwrap().is_finite());
        let m = unit_model(0.0, 0.2);
        assert_eq!(m.allocation_log_prior(&alloc(&[1], 1)).unwrap(), f64::NEG_INFINITY);
        let m = unit_model(0.5, 0.0);
        assert_eq!(m.allocation_log_prior(&alloc(&[2], 1)).unwrap(), f64::NEG_INFINITY);
        assert!(m.allocation_log_prior(&alloc(&[1], 1)).unwrap().is_finite());
    }

    #[test]
    fn component_density_cases() {
        let m = unit_model(0.5, 0.1);
        assert_eq!(m.component_log_density(&[0.3], Label::Outlier).unwrap(), 0.0);
        assert!(matches!(m.component_log_density(&[1.5], Label::Outlier), Err(Error::OutOfBounds { .. })));

        let m = ApproxModel::new(
            ParamSpace::interval(0.0, PI).unwrap(),
            vec![GaussianComponent::new(vec![0.5], vec![0.01], 1.0)],
            0.0,
        )
        .unwrap();
        let mass = truncnorm::std_normal_cdf((PI - 0.5) / 0.1) - truncnorm::std_normal_cdf(-5.0);
        let expected = (1.0 / (0.1 * (2.0 * PI).sqrt()) / mass).ln();
        let got = m.component_log_density(&[0.5], Label::Gaussian(0)).unwrap();
        assert_relative_eq!(got, expected, epsilon = 1e-12);
        assert_relative_eq!(got, 3.98942f64.ln(), epsilon = 1e-5);
    }

    #[test]
    fn joint_density_hand_values() {
        let m = unit_model(0.8, 0.1);
        let empty = VarDimSample::empty(1);
        assert_relative_eq!(
            m.labeled_joint_log_density(&empty, &alloc(&[], 1)).unwrap(),
            ((-0.1f64).exp() * 0.2).ln(),
            epsilon = 1e-14
        );
        let x = VarDimSample::new(1, vec![0.5]).unwrap();
        let mass = truncnorm::interval_mass(0.5, 0.1, 0.0, 1.0);
        let n_trunc = 1.0 / (0.1 * (2.0 * PI).sqrt()) / mass;
        assert_relative_eq!(
            m.labeled_joint_log_density(&x, &alloc(&[1], 1)).unwrap(),
            ((-0.1f64).exp() * 0.8 * n_trunc).ln(),
            epsilon = 1e-13
        );
        // joint = prior + conditional densities
        let z = alloc(&[2], 1);
        assert_relative_eq!(
            m.labeled_joint_log_density(&x, &z).unwrap(),
            m.allocation_log_prior(&z).unwrap() + m.component_log_density(&[0.5], Label::Outlier).unwrap(),
            epsilon = 1e-14
        );
        assert!(m.labeled_joint_log_density(&x, &alloc(&[], 1)).is_err());
    }

    #[test]
    fn intensity_cases() {
        let space = ParamSpace::interval(0.0, 1.0).unwrap();
        let empty = ApproxModel::new(space.clone(), vec![], 1.0).unwrap();
        assert_eq!(empty.intensity(&[0.2]).unwrap(), 0.0);
        let m = unit_model(0.5, 0.3);
        let single = m.component_log_density(&[0.42], Label::Gaussian(0)).unwrap().exp();
        assert_relative_eq!(m.intensity(&[0.42]).unwrap(), 0.5 * single, epsilon = 1e-14);
        assert!(m.intensity(&[-0.1]).is_err());
    }

    #[test]
    fn enumeration_sizes() {
        // Σ_{m=0}^{k} C(k,m) L!/(L-m)!  admissible allocations
        assert_eq!(enumerate_allocations(0, 2).len(), 1);
        assert_eq!(enumerate_allocations(1, 2).len(), 3);
        assert_eq!(enumerate_allocations(2, 2).len(), 1 + 2 * 2 + 2);
        assert_eq!(enumerate_allocations(3, 3).len(), 1 + 3 * 3 + 3 * 6 + 6);
    }

    #[test]
    fn sampling_degenerate_gates() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = unit_model(1.0, 0.0);
        for _ in 0..100 {
            let (x, z) = m.sample(&mut rng);
            assert_eq!(x.k(), 1);
            assert_eq!(z.labels, vec![Label::Gaussian(0)]);
        }
        let m = ApproxModel::new(ParamSpace::interval(0.0, 1.0).unwrap(), vec![], 2.0).unwrap();
        let n = 20_000;
        let mut total = 0usize;
        for _ in 0..n {
            let (x, z) = m.sample(&mut rng);
            assert!(z.labels.iter().all(|l| *l == Label::Outlier));
            assert!(x.points().all(|p| m.space.contains(p)));
            total += x.k();
        }
        let mean = total as f64 / n as f64;
        assert!((mean - 2.0).abs() < 3.0 * (2.0f64 / n as f64).sqrt());
    }

    #[test]
    fn projection_keeps_marginals() {
        let space = ParamSpace::new(vec![(0.0, 10.0), (0.0, 1.0)]).unwrap();
        let m = ApproxModel::new(space, vec![GaussianComponent::new(vec![3.0, 0.5], vec![1.0, 0.04], 0.7)], 0.4).unwrap();
        let p = m.project(0).unwrap();
        assert_eq!(p.dim(), 1);
        assert_eq!(p.components[0].mu, vec![3.0]);
        assert_eq!(p.lambda, 0.4);
        let x = VarDimSample::new(2, vec![5.0, 0.1, 1.0, 0.9]).unwrap();
        assert_eq!(x.project(1).coords(), &[0.1, 0.9]);
        assert_eq!(x.sorted_by_first().coords(), &[1.0, 0.9, 5.0, 0.1]);
    }
}
