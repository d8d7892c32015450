//! Replicated sinusoid study: fresh noise, reversible-jump chain, model fit,
//! and a comparison of the fitted model with the raw samples.
//!
//! Replicate `r` of a study with master seed `s` draws all of its randomness
//! from `derive_seed(s, [r])`, so replicates are independent of each other
//! and of the number of threads running them.

use std::f64::consts::PI;
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::diagnostics::{self, approx_posterior_k};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::io::fmt_real;
use crate::rng::derive_seed;
use crate::sem::{sem_fit, FitConfig, InitRule};
use crate::sinusoid::{self, SignalSpec, SinChainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HarnessConfig {
    pub replicates: usize,
    pub signal: SignalSpec,
    pub chain: SinChainConfig,
    pub fit: FitConfig,
    /// Draws from the fitted model used for its reconstruction.
    pub reconstruction_draws: usize,
    /// Whether model draws for reconstruction include point-process points.
    pub include_outliers: bool,
    /// Intervals of `(0, π)` for expected counts.
    pub intervals: Vec<(f64, f64)>,
    pub execution: Execution,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        HarnessConfig {
            replicates: 100,
            signal: SignalSpec::default(),
            chain: SinChainConfig::default(),
            fit: FitConfig { init_rule: InitRule::Threshold(0.05), ..FitConfig::default() },
            reconstruction_draws: 1000,
            include_outliers: true,
            intervals: vec![(0.0, PI / 4.0), (PI / 4.0, PI / 2.0)],
            execution: Execution::default(),
        }
    }
}

impl HarnessConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 || self.reconstruction_draws == 0 {
            return Err(Error::Config("replicates and reconstruction_draws must be positive".into()));
        }
        self.chain.validate()?;
        self.fit.validate()?;
        for &(lo, hi) in &self.intervals {
            if !(0.0 <= lo && lo <= hi && hi <= PI) {
                return Err(Error::Config(format!("interval ({lo}, {hi}) is not inside (0, π)")));
            }
        }
        Ok(())
    }
}

/// Outcome of one replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRow {
    pub replicate: usize,
    pub seed: u64,
    pub error: Option<String>,
    /// `p(k | y)` from the chain and `p̂(k)` from the fit, for `k = 2, 3`.
    pub p_k2: f64,
    pub p_hat_k2: f64,
    pub p_k3: f64,
    pub p_hat_k3: f64,
    pub map_k: usize,
    pub map_k_hat: usize,
    pub error_bma_db: f64,
    pub error_model_db: f64,
    /// Per interval: (empirical, model).
    pub counts: Vec<(f64, f64)>,
    pub components: usize,
    pub skipped_draws: usize,
}

impl ReplicateRow {
    fn failed(replicate: usize, seed: u64, n_intervals: usize, msg: String) -> Self {
        ReplicateRow {
            replicate,
            seed,
            error: Some(msg),
            p_k2: f64::NAN,
            p_hat_k2: f64::NAN,
            p_k3: f64::NAN,
            p_hat_k3: f64::NAN,
            map_k: 0,
            map_k_hat: 0,
            error_bma_db: f64::NAN,
            error_model_db: f64::NAN,
            counts: vec![(f64::NAN, f64::NAN); n_intervals],
            components: 0,
            skipped_draws: 0,
        }
    }

    pub fn ok(&self) -> bool {
        self.error.is_none()
    }
}

pub fn run_replicate(cfg: &HarnessConfig, master_seed: u64, replicate: usize) -> Result<ReplicateRow> {
    let seed = derive_seed(master_seed, &[replicate as u64]);
    let signal = sinusoid::generate_synthetic_signal(&cfg.signal, derive_seed(seed, &[0]))?;
    let clean = signal.noiseless().expect("synthetic signal has a truth");

    let chain_cfg = SinChainConfig { rng_seed: derive_seed(seed, &[1]), ..cfg.chain.clone() };
    let chain = sinusoid::rjmcmc_run(&signal, &chain_cfg)?;
    let samples = &chain.samples;
    let delta2 = chain.mean_delta2();

    let fit_cfg = FitConfig { rng_seed: derive_seed(seed, &[2]), ..cfg.fit.clone() };
    let fit = sem_fit(samples, &fit_cfg)?;
    let model = &fit.model;

    let p = samples.k_distribution();
    let p_hat = approx_posterior_k(model);
    let map_k = p
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |b, (k, &v)| if v > b.1 { (k, v) } else { b })
        .0;

    let bma = diagnostics::reconstruct_bma(samples, &signal.y, delta2, Execution::Sequential)?;
    let from_model = diagnostics::reconstruct_from_model(
        model,
        cfg.reconstruction_draws,
        &signal.y,
        delta2,
        cfg.include_outliers,
        derive_seed(seed, &[3]),
        Execution::Sequential,
    )?;
    let counts = cfg
        .intervals
        .iter()
        .map(|&t| {
            Ok((
                diagnostics::empirical_count_interval(samples, &[t])?,
                diagnostics::expected_count_interval(model, &[t])?,
            ))
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(ReplicateRow {
        replicate,
        seed,
        error: None,
        p_k2: p.get(2).copied().unwrap_or(0.0),
        p_hat_k2: p_hat.get(2),
        p_k3: p.get(3).copied().unwrap_or(0.0),
        p_hat_k3: p_hat.get(3),
        map_k,
        map_k_hat: p_hat.argmax(),
        error_bma_db: diagnostics::reconstruction_error_db(&bma.signal, &clean)?,
        error_model_db: diagnostics::reconstruction_error_db(&from_model.signal, &clean)?,
        counts,
        components: model.num_components(),
        skipped_draws: bma.skipped + from_model.skipped,
    })
}

/// Runs every replicate; a failing or panicking replicate yields a row
/// carrying its error and leaves the others untouched.
pub fn monte_carlo_harness(cfg: &HarnessConfig, master_seed: u64) -> Result<Vec<ReplicateRow>> {
    cfg.validate()?;
    let n_int = cfg.intervals.len();
    let rows = cfg.execution.map(cfg.replicates, |r| {
        let seed = derive_seed(master_seed, &[r as u64]);
        match catch_unwind(AssertUnwindSafe(|| run_replicate(cfg, master_seed, r))) {
            Ok(Ok(row)) => row,
            Ok(Err(e)) => {
                warn!("replicate {r} failed: {e}");
                ReplicateRow::failed(r, seed, n_int, e.to_string())
            }
            Err(_) => {
                warn!("replicate {r} panicked");
                ReplicateRow::failed(r, seed, n_int, "panic".into())
            }
        }
    });
    info!("{} of {} replicates succeeded", rows.iter().filter(|r| r.ok()).count(), rows.len());
    Ok(rows)
}

pub fn write_rows_csv<W: Write>(rows: &[ReplicateRow], intervals: &[(f64, f64)], mut w: W) -> Result<()> {
    let mut header: Vec<String> = [
        "replicate", "seed", "status", "p_k2", "p_hat_k2", "p_k3", "p_hat_k3", "map_k", "map_k_hat",
        "error_bma_db", "error_model_db",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    for i in 0..intervals.len() {
        header.push(format!("count{i}_empirical"));
        header.push(format!("count{i}_model"));
    }
    header.extend(["components".into(), "skipped_draws".into(), "message".into()]);
    writeln!(w, "{}", header.join(","))?;
    for r in rows {
        let mut f = vec![
            r.replicate.to_string(),
            r.seed.to_string(),
            if r.ok() { "ok".into() } else { "failed".into() },
            fmt_real(r.p_k2),
            fmt_real(r.p_hat_k2),
            fmt_real(r.p_k3),
            fmt_real(r.p_hat_k3),
            r.map_k.to_string(),
            r.map_k_hat.to_string(),
            fmt_real(r.error_bma_db),
            fmt_real(r.error_model_db),
        ];
        for &(e, m) in &r.counts {
            f.push(fmt_real(e));
            f.push(fmt_real(m));
        }
        f.push(r.components.to_string());
        f.push(r.skipped_draws.to_string());
        f.push(r.error.as_deref().unwrap_or("").replace([',', '\n'], ";"));
        writeln!(w, "{}", f.join(","))?;
    }
    w.flush()?;
    Ok(())
}

/// Aggregates over successful replicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarnessSummary {
    pub succeeded: usize,
    pub failed: usize,
    pub map_agreement: f64,
    /// Median of `|error_model_db - error_bma_db|`.
    pub median_error_gap_db: f64,
    /// Per interval, fraction of replicates where model and empirical
    /// counts differ by at most `count_tolerance`.
    pub count_agreement: Vec<f64>,
    pub count_tolerance: f64,
}

pub fn summarize(rows: &[ReplicateRow], count_tolerance: f64) -> HarnessSummary {
    let ok: Vec<&ReplicateRow> = rows.iter().filter(|r| r.ok()).collect();
    let n = ok.len().max(1) as f64;
    let mut gaps: Vec<f64> = ok.iter().map(|r| (r.error_model_db - r.error_bma_db).abs()).collect();
    gaps.sort_by(f64::total_cmp);
    let median = crate::robust::quantile_sorted(&gaps, 0.5).unwrap_or(f64::NAN);
    let n_int = ok.first().map_or(0, |r| r.counts.len());
    let count_agreement = (0..n_int)
        .map(|i| {
            ok.iter().filter(|r| (r.counts[i].0 - r.counts[i].1).abs() <= count_tolerance).count() as f64 / n
        })
        .collect();
    HarnessSummary {
        succeeded: ok.len(),
        failed: rows.len() - ok.len(),
        map_agreement: ok.iter().filter(|r| r.map_k == r.map_k_hat).count() as f64 / n,
        median_error_gap_db: median,
        count_agreement,
        count_tolerance,
    }
}
