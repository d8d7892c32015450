use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ParamSpace, VarDimSample};

/// Where a sample set came from.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub sampler: String,
    pub seed: Option<u64>,
    pub iterations: u64,
    pub burn_in: u64,
    pub thinning: u64,
    /// Named scalar side information (e.g. posterior mean of a
    /// hyperparameter) carried alongside the samples.
    pub extra: BTreeMap<String, f64>,
}

/// Ordered collection of variable-dimensional draws on a common space.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    space: ParamSpace,
    samples: Vec<VarDimSample>,
    pub provenance: Provenance,
    rejected: usize,
}

impl SampleSet {
    pub fn new(space: ParamSpace) -> Self {
        SampleSet { space, samples: Vec::new(), provenance: Provenance::default(), rejected: 0 }
    }

    pub fn with_provenance(space: ParamSpace, provenance: Provenance) -> Self {
        SampleSet { provenance, ..Self::new(space) }
    }

    /// Adds a sample after checking that every point lies in the space.
    pub fn push(&mut self, sample: VarDimSample) -> Result<()> {
        if sample.dim() != self.space.dim() {
            return Err(Error::DimensionMismatch { expected: self.space.dim(), found: sample.dim() });
        }
        if let Some(p) = sample.points().find(|p| !self.space.contains(p)) {
            return Err(Error::OutOfBounds { point: p.to_vec() });
        }
        self.samples.push(sample);
        Ok(())
    }

    /// Like [`push`](Self::push) but counts an out-of-space sample as
    /// rejected instead of failing. Returns whether it was kept.
    pub fn push_or_reject(&mut self, sample: VarDimSample) -> Result<bool> {
        match self.push(sample) {
            Ok(()) => Ok(true),
            Err(Error::OutOfBounds { .. }) => {
                self.rejected += 1;
                Ok(false)
            }
            Err(e) => Err(e),
        }
    }

    pub fn space(&self) -> &ParamSpace {
        &self.space
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    pub fn samples(&self) -> &[VarDimSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn rejected(&self) -> usize {
        self.rejected
    }

    pub fn iter(&self) -> std::slice::Iter<'_, VarDimSample> {
        self.samples.iter()
    }

    pub fn max_k(&self) -> usize {
        self.samples.iter().map(VarDimSample::k).max().unwrap_or(0)
    }

    /// Empirical distribution of `k`, indexed `0..=max_k`.
    pub fn k_distribution(&self) -> Vec<f64> {
        let mut counts = vec![0usize; self.max_k() + 1];
        for s in &self.samples {
            counts[s.k()] += 1;
        }
        let m = self.len().max(1) as f64;
        counts.into_iter().map(|c| c as f64 / m).collect()
    }

    pub fn mean_k(&self) -> f64 {
        let total: usize = self.samples.iter().map(VarDimSample::k).sum();
        total as f64 / self.len().max(1) as f64
    }

    /// Sample set reduced to a single coordinate.
    pub fn project(&self, coord: usize) -> Result<SampleSet> {
        let space = self.space.project(coord)?;
        Ok(SampleSet {
            space,
            samples: self.samples.iter().map(|s| s.project(coord)).collect(),
            provenance: self.provenance.clone(),
            rejected: self.rejected,
        })
    }
}

impl<'a> IntoIterator for &'a SampleSet {
    type Item = &'a VarDimSample;
    type IntoIter = std::slice::Iter<'a, VarDimSample>;

    fn into_iter(self) -> Self::IntoIter {
        self.samples.iter()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_out_of_space() {
        let mut set = SampleSet::new(ParamSpace::interval(0.0, 1.0).unwrap());
        assert!(set.push_or_reject(VarDimSample::new(1, vec![0.2, 0.9]).unwrap()).unwrap());
        assert!(!set.push_or_reject(VarDimSample::new(1, vec![0.2, 1.5]).unwrap()).unwrap());
        assert!(set.push_or_reject(VarDimSample::new(2, vec![0.2, 0.3]).unwrap()).is_err());
        assert_eq!(set.len(), 1);
        assert_eq!(set.rejected(), 1);
        assert_eq!(set.k_distribution(), vec![0.0, 0.0, 1.0]);
    }
}
