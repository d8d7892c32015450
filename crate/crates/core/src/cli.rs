//! Command-line front end.
//!
//! Settings come from the defaults, then an optional TOML/JSON config file,
//! then command-line flags. Exit status: 0 success, 1 usage error, 2 data
//! error, 3 numerical failure.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde::Serialize;

use crate::auger::{self, PECountSignal};
use crate::config::RunConfig;
use crate::diagnostics::{self, ReconstructionErrors, ReportOptions};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::harness;
use crate::io;
use crate::model::{ApproxModel, GaussianComponent, ParamSpace, VarDimSample};
use crate::oracle;
use crate::sem::{self, InitRule};
use crate::sinusoid::{self, SinusoidSignal};

#[derive(Debug, Parser)]
#[command(name = "vdrelabel", version, about = "Relabel and summarize variable-dimensional posterior samples")]
pub struct Cli {
    /// Increase log verbosity (-v info, -vv debug)
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the sinusoid sampler on a given or synthetic signal
    SimulateSin(SimulateSinArgs),
    /// Run the muon sampler on a given or synthetic PE signal
    SimulateAuger(SimulateAugerArgs),
    /// Fit the approximating model to a sample file
    Fit(FitArgs),
    /// Summaries and diagnostics of a fitted model
    Report(ReportArgs),
    /// Replicated sinusoid study
    Montecarlo(MonteCarloArgs),
    /// Run the reference checks used by the test-suite
    Oracle(OracleArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML or JSON run configuration
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Run everything on the calling thread
    #[arg(long)]
    pub sequential: bool,
}

#[derive(Debug, Args)]
pub struct ChainArgs {
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    #[arg(long)]
    pub thinning: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SimulateSinArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub chain: ChainArgs,
    #[arg(long, required = true)]
    pub seed: Option<u64>,
    /// Observed signal, one value per line; synthesized when absent
    #[arg(long)]
    pub signal: Option<PathBuf>,
    /// Length of the synthetic signal
    #[arg(long)]
    pub n: Option<usize>,
    /// SNR of the synthetic signal, dB
    #[arg(long)]
    pub snr_db: Option<f64>,
    #[arg(long)]
    pub k_max: Option<usize>,
    /// Output sample file
    #[arg(long)]
    pub out: PathBuf,
    /// Where to write the observed signal
    #[arg(long)]
    pub signal_out: Option<PathBuf>,
    /// Where to write the noiseless synthetic signal
    #[arg(long)]
    pub clean_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateAugerArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub chain: ChainArgs,
    #[arg(long, required = true)]
    pub seed: Option<u64>,
    /// Observed PE counts as `bin,count` CSV; synthesized when absent
    #[arg(long)]
    pub signal: Option<PathBuf>,
    /// Start of the first bin, ns
    #[arg(long)]
    pub t0: Option<f64>,
    /// Bin width, ns
    #[arg(long)]
    pub t_delta: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub signal_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InitRuleArg {
    Percentile,
    Threshold,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, required = true)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub samples: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Rule choosing the initial number of components
    #[arg(long, value_enum)]
    pub init_rule: Option<InitRuleArg>,
    /// Level of the initialization rule (0.9 for percentile, 0.05 for threshold)
    #[arg(long)]
    pub init_level: Option<f64>,
    /// Fixed initial number of components, overriding the rule
    #[arg(long)]
    pub components: Option<usize>,
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Fit a single coordinate of multi-dimensional samples
    #[arg(long)]
    pub project: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[command(flatten)]
    pub common: Common,
    /// Needed only for the model-based reconstruction
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub samples: PathBuf,
    #[arg(long)]
    pub allocations: Option<PathBuf>,
    /// Project samples to one coordinate before comparing with the model
    #[arg(long)]
    pub project: Option<usize>,
    /// Interval `lo,hi` of a one-dimensional model; repeatable
    #[arg(long = "interval", value_parser = parse_pair)]
    pub intervals: Vec<(f64, f64)>,
    /// Observed sinusoid signal, for reconstructions
    #[arg(long, requires = "clean")]
    pub signal: Option<PathBuf>,
    /// Noiseless reference signal
    #[arg(long, requires = "signal")]
    pub clean: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct MonteCarloArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub chain: ChainArgs,
    #[arg(long, required = true)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub replicates: Option<usize>,
    /// Length of the synthetic signals
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
    /// Where to write aggregate statistics as JSON
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OracleKind {
    All,
    Labeled,
    Imh,
    Pk,
    Marginal,
    Pulse,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[arg(long, required = true)]
    pub seed: Option<u64>,
    #[arg(long, value_enum, default_value = "all")]
    pub check: OracleKind,
    /// Monte Carlo size for the simulation-based checks
    #[arg(long, default_value_t = 1_000_000)]
    pub draws: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub sequential: bool,
}

fn parse_pair(s: &str) -> std::result::Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected 'lo,hi', got {s:?}"))?;
    let lo: f64 = a.trim().parse().map_err(|e| format!("{a:?}: {e}"))?;
    let hi: f64 = b.trim().parse().map_err(|e| format!("{b:?}: {e}"))?;
    Ok((lo, hi))
}

fn load_config(common: &Common) -> Result<RunConfig> {
    match &common.config {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

fn execution(common_sequential: bool) -> Execution {
    if common_sequential {
        Execution::Sequential
    } else {
        Execution::default()
    }
}

fn apply_chain_args(a: &ChainArgs, iterations: &mut usize, burn_in: &mut usize, thinning: &mut usize) {
    if let Some(v) = a.iterations {
        *iterations = v;
    }
    if let Some(v) = a.burn_in {
        *burn_in = v;
    }
    if let Some(v) = a.thinning {
        *thinning = v;
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    Ok(())
}

#[derive(Serialize)]
struct RunManifest<'a> {
    command: &'a str,
    seed: Option<u64>,
    config_sha256: String,
    config: &'a RunConfig,
}

fn write_manifest(dir: &Path, command: &str, seed: Option<u64>, cfg: &RunConfig) -> Result<()> {
    let m = RunManifest { command, seed, config_sha256: cfg.hash(), config: cfg };
    io::write_json(&m, io::create(&dir.join("run.json"))?)
}

fn simulate_sin(a: &SimulateSinArgs) -> Result<()> {
    let mut cfg = load_config(&a.common)?;
    let seed = a.seed.expect("required by the parser");
    let run = &mut cfg.sinusoid;
    apply_chain_args(&a.chain, &mut run.chain.iterations, &mut run.chain.burn_in, &mut run.chain.thinning);
    if let Some(n) = a.n {
        run.signal.n = n;
    }
    if let Some(s) = a.snr_db {
        run.signal.snr_db = s;
    }
    if let Some(k) = a.k_max {
        run.chain.k_max = k;
    }
    run.chain.rng_seed = crate::rng::derive_seed(seed, &[1]);

    let signal = match &a.signal {
        Some(p) => SinusoidSignal::new(io::read_signal(io::open(p)?)?).map_err(data_error)?,
        None => sinusoid::generate_synthetic_signal(&run.signal, crate::rng::derive_seed(seed, &[0]))?,
    };
    let out = sinusoid::rjmcmc_run(&signal, &run.chain)?;
    io::write_samples_file(&out.samples, &a.out)?;
    if let Some(p) = &a.signal_out {
        io::write_signal(&signal.y, io::create(p)?)?;
    }
    if let Some(p) = &a.clean_out {
        let clean = signal
            .noiseless()
            .ok_or_else(|| Error::Config("--clean-out needs a synthetic signal".into()))?;
        io::write_signal(&clean, io::create(p)?)?;
    }
    println!(
        "wrote {} samples (mean k {:.3}, birth/death/update acceptance {:.3}/{:.3}/{:.3}); config {}",
        out.samples.len(),
        out.samples.mean_k(),
        out.stats.birth.rate(),
        out.stats.death.rate(),
        out.stats.update.rate(),
        cfg.hash()
    );
    Ok(())
}

/// Errors in user-supplied data files are data errors even when raised by
/// constructors that report configuration problems.
fn data_error(e: Error) -> Error {
    match e {
        Error::Config(msg) => Error::Format { line: 0, msg },
        other => other,
    }
}

fn simulate_auger(a: &SimulateAugerArgs) -> Result<()> {
    let mut cfg = load_config(&a.common)?;
    let seed = a.seed.expect("required by the parser");
    let run = &mut cfg.auger;
    apply_chain_args(&a.chain, &mut run.chain.iterations, &mut run.chain.burn_in, &mut run.chain.thinning);
    if let Some(t) = a.t0 {
        run.signal.t0 = t;
    }
    if let Some(t) = a.t_delta {
        run.signal.t_delta = t;
    }
    run.chain.rng_seed = crate::rng::derive_seed(seed, &[1]);
    let signal: PECountSignal = match &a.signal {
        Some(p) => io::read_pe_signal(io::open(p)?, run.signal.t0, run.signal.t_delta)?,
        None => auger::generate_synthetic_signal(&run.signal, crate::rng::derive_seed(seed, &[0]))?,
    };
    let out = auger::rjmcmc_run_auger(&signal, &run.chain)?;
    io::write_samples_file(&out.samples, &a.out)?;
    if let Some(p) = &a.signal_out {
        io::write_pe_signal(&signal, io::create(p)?)?;
    }
    println!("wrote {} samples (mean k {:.3}); config {}", out.samples.len(), out.samples.mean_k(), cfg.hash());
    Ok(())
}

#[derive(Serialize)]
struct FitSummary<'a> {
    components: usize,
    averaged_over: usize,
    pruned: &'a [sem::PruneEvent],
    final_criterion: f64,
    rejected_samples: usize,
}

fn fit(a: &FitArgs) -> Result<()> {
    let mut cfg = load_config(&a.common)?;
    let seed = a.seed.expect("required by the parser");
    let f = &mut cfg.fit;
    f.rng_seed = seed;
    f.execution = execution(a.common.sequential);
    if let Some(it) = a.iterations {
        f.iterations = it;
        f.averaging_window = f.averaging_window.min(it);
    }
    match (a.components, a.init_rule) {
        (Some(l), _) => f.init_rule = InitRule::Fixed(l),
        (None, Some(InitRuleArg::Percentile)) => f.init_rule = InitRule::Percentile(a.init_level.unwrap_or(0.9)),
        (None, Some(InitRuleArg::Threshold)) => f.init_rule = InitRule::Threshold(a.init_level.unwrap_or(0.05)),
        (None, None) => {
            if a.init_level.is_some() {
                return Err(Error::Config("--init-level needs --init-rule".into()));
            }
        }
    }

    let mut samples = io::read_samples_file(&a.samples)?;
    if let Some(c) = a.project {
        samples = samples.project(c)?;
    }
    let result = sem::sem_fit(&samples, &cfg.fit)?;

    ensure_dir(&a.out_dir)?;
    io::write_json(&result.model, io::create(&a.out_dir.join("model.json"))?)?;
    io::write_json(&result.initial_model, io::create(&a.out_dir.join("initial_model.json"))?)?;
    io::write_trace_csv(&result.trace, io::create(&a.out_dir.join("trace.csv"))?)?;
    io::write_trace_components_csv(&result.trace, samples.dim(), io::create(&a.out_dir.join("trace_components.csv"))?)?;
    let last_l = result.trace.entries.last().map_or(0, |e| e.model.num_components());
    io::write_allocations(&result.allocations, last_l, io::create(&a.out_dir.join("allocations.txt"))?)?;
    let summary = FitSummary {
        components: result.model.num_components(),
        averaged_over: result.averaged_over,
        pruned: &result.pruned,
        final_criterion: result.trace.entries.last().map_or(f64::NAN, |e| e.criterion),
        rejected_samples: samples.rejected(),
    };
    io::write_json(&summary, io::create(&a.out_dir.join("fit.json"))?)?;
    write_manifest(&a.out_dir, "fit", Some(seed), &cfg)?;

    println!("{:>4} {:>22} {:>22} {:>10}", "l", "mu", "s", "pi");
    for (l, c) in result.model.components.iter().enumerate() {
        let mu: Vec<String> = c.mu.iter().map(|v| format!("{v:.4}")).collect();
        let s: Vec<String> = c.sigma2.iter().map(|v| format!("{:.4}", v.sqrt())).collect();
        println!("{:>4} {:>22} {:>22} {:>10.3}", l + 1, mu.join(" "), s.join(" "), c.pi);
    }
    println!("lambda {:.4}", result.model.lambda);
    Ok(())
}

fn report(a: &ReportArgs) -> Result<()> {
    let cfg = load_config(&a.common)?;
    let model: ApproxModel = io::read_json(io::open(&a.model)?).map_err(|e| match e {
        Error::Json(j) => Error::Format { line: j.line(), msg: format!("model file: {j}") },
        other => other,
    })?;
    model.validate()?;
    let mut samples = io::read_samples_file(&a.samples)?;
    if let Some(c) = a.project {
        samples = samples.project(c)?;
    }
    if samples.dim() != model.dim() {
        return Err(Error::DimensionMismatch { expected: model.dim(), found: samples.dim() });
    }
    let allocations = match &a.allocations {
        Some(p) => Some(io::read_allocations(io::open(p)?)?.1),
        None => None,
    };
    let mut intervals = cfg.report.intervals.clone();
    intervals.extend(a.intervals.iter().map(|&t| vec![t]));
    let opts = ReportOptions {
        intervals,
        coord: cfg.report.coord,
        bins: cfg.report.bins,
        grid_points: cfg.report.grid_points,
    };
    let mut rep = diagnostics::build_report(&model, &samples, allocations.as_deref(), &opts)?;

    if let (Some(sp), Some(cp)) = (&a.signal, &a.clean) {
        let seed = a
            .seed
            .ok_or_else(|| Error::Config("--seed is required for the model-based reconstruction".into()))?;
        let y = io::read_signal(io::open(sp)?)?;
        let clean = io::read_signal(io::open(cp)?)?;
        let delta2 = *samples
            .provenance
            .extra
            .get("delta2_mean")
            .ok_or_else(|| Error::Format { line: 0, msg: "sample file lacks 'extra delta2_mean'".into() })?;
        let exec = execution(a.common.sequential);
        let bma = diagnostics::reconstruct_bma(&samples, &y, delta2, exec)?;
        let from_model = diagnostics::reconstruct_from_model(
            &model,
            cfg.report.reconstruction_draws,
            &y,
            delta2,
            cfg.report.include_outliers,
            seed,
            exec,
        )?;
        rep.reconstruction_error_db = Some(ReconstructionErrors {
            bma: diagnostics::reconstruction_error_db(&bma.signal, &clean)?,
            model: diagnostics::reconstruction_error_db(&from_model.signal, &clean)?,
        });
        io::write_signal(&bma.signal, io::create(&a.out_dir_path("reconstruction_bma.csv")?)?)?;
        io::write_signal(&from_model.signal, io::create(&a.out_dir_path("reconstruction_model.csv")?)?)?;
    }

    ensure_dir(&a.out_dir)?;
    io::write_json(&rep, io::create(&a.out_dir.join("report.json"))?)?;
    rep.write_k_csv(io::create(&a.out_dir.join("pk.csv"))?)?;
    rep.write_intensity_csv(io::create(&a.out_dir.join("intensity.csv"))?)?;
    rep.write_components_csv(io::create(&a.out_dir.join("components.csv"))?)?;
    rep.bma_histogram.write_csv(io::create(&a.out_dir.join("bma_histogram.csv"))?)?;
    if let Some(h) = &rep.residual_histogram {
        h.write_csv(io::create(&a.out_dir.join("residual_histogram.csv"))?)?;
    }
    write_manifest(&a.out_dir, "report", a.seed, &cfg)?;
    info!("report written to {}", a.out_dir.display());
    Ok(())
}

impl ReportArgs {
    fn out_dir_path(&self, name: &str) -> Result<PathBuf> {
        ensure_dir(&self.out_dir)?;
        Ok(self.out_dir.join(name))
    }
}

fn montecarlo(a: &MonteCarloArgs) -> Result<()> {
    let mut cfg = load_config(&a.common)?;
    let seed = a.seed.expect("required by the parser");
    let h = &mut cfg.montecarlo;
    apply_chain_args(&a.chain, &mut h.chain.iterations, &mut h.chain.burn_in, &mut h.chain.thinning);
    if let Some(r) = a.replicates {
        h.replicates = r;
    }
    if let Some(n) = a.n {
        h.signal.n = n;
    }
    h.execution = execution(a.common.sequential);
    let rows = harness::monte_carlo_harness(h, seed)?;
    harness::write_rows_csv(&rows, &h.intervals, io::create(&a.out)?)?;
    let summary = harness::summarize(&rows, 0.15);
    if let Some(p) = &a.summary {
        io::write_json(&summary, io::create(p)?)?;
    }
    println!(
        "{} replicates ok, {} failed; median |model - BMA| error gap {:.3} dB; config {}",
        summary.succeeded,
        summary.failed,
        summary.median_error_gap_db,
        cfg.hash()
    );
    Ok(())
}

#[derive(Serialize, Default)]
struct OracleReport {
    labeled_max_abs_z: Option<f64>,
    labeled_cells: Option<usize>,
    imh_total_variation: Option<f64>,
    pk_max_abs_error: Option<f64>,
    marginal_max_abs_error: Option<f64>,
    pulse_max_rel_error: Option<f64>,
}

fn oracle_cmd(a: &OracleArgs) -> Result<()> {
    let seed = a.seed.expect("required by the parser");
    let exec = execution(a.sequential);
    let want = |k: OracleKind| a.check == OracleKind::All || a.check == k;
    let mut rep = OracleReport::default();
    let unit = ParamSpace::interval(0.0, 1.0)?;
    let test_model = ApproxModel::new(
        unit,
        vec![GaussianComponent::new(vec![0.3], vec![0.01], 0.8), GaussianComponent::new(vec![0.7], vec![0.02], 0.4)],
        0.3,
    )?;

    if want(OracleKind::Labeled) {
        let cells = oracle::labeled_density_cells(&test_model, 5, a.draws, seed, exec)?;
        rep.labeled_max_abs_z = Some(cells.iter().map(|c| c.z().abs()).fold(0.0, f64::max));
        rep.labeled_cells = Some(cells.len());
    }
    if want(OracleKind::Imh) {
        let x = VarDimSample::new(1, vec![0.35, 0.62])?;
        rep.imh_total_variation = Some(oracle::imh_stationarity(&test_model, &x, 100_000, seed)?.total_variation);
    }
    if want(OracleKind::Pk) {
        let pis: Vec<f64> = (0..10).map(|i| 0.05 + 0.09 * i as f64).collect();
        let comps = pis.iter().map(|&p| GaussianComponent::new(vec![0.5], vec![0.01], p)).collect();
        let m = ApproxModel::new(ParamSpace::interval(0.0, 1.0)?, comps, 0.0)?;
        let approx = diagnostics::approx_posterior_k(&m);
        let exact = oracle::gate_enumeration_pk(&pis);
        rep.pk_max_abs_error = Some(exact.iter().enumerate().map(|(k, p)| (approx.get(k) - p).abs()).fold(0.0, f64::max));
    }
    if want(OracleKind::Marginal) {
        let mut worst: f64 = 0.0;
        for r in 0..5u64 {
            let spec = sinusoid::SignalSpec { n: 8, omega: vec![1.1], energies: vec![4.0], phases: vec![0.3], snr_db: 3.0 };
            let sig = sinusoid::generate_synthetic_signal(&spec, crate::rng::derive_seed(seed, &[r]))?;
            let omega = 1.0;
            let delta2 = 10.0;
            let params = sinusoid::TargetParams { delta2, lambda: 1.0, k_max: 20 };
            let n = sig.len() as f64;
            let closed = sinusoid::log_target_marginal(&[omega], &sig.y, params)
                - crate::rjmcmc::ln_truncated_poisson(1, 1.0, 20)
                + std::f64::consts::PI.ln()
                + libm::lgamma(0.5 * n)
                - 0.5 * n * std::f64::consts::PI.ln();
            let quad = oracle::sinusoid_marginal_quadrature(omega, &sig.y, delta2)?;
            worst = worst.max((quad - closed).abs());
        }
        rep.marginal_max_abs_error = Some(worst);
    }
    if want(OracleKind::Pulse) {
        let shape = auger::PulseShape::default();
        let mut worst: f64 = 0.0;
        for i in 0..20 {
            let lo = -40.0 + 25.0 * i as f64;
            let exact = oracle::pulse_mass_quadrature(&shape, lo, lo + 25.0);
            let closed = shape.interval_mass(lo, lo + 25.0);
            if exact > 0.0 {
                worst = worst.max(((closed - exact) / exact).abs());
            }
        }
        rep.pulse_max_rel_error = Some(worst);
    }
    match &a.out {
        Some(p) => io::write_json(&rep, io::create(p)?)?,
        None => io::write_json(&rep, std::io::stdout().lock())?,
    }
    Ok(())
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::SimulateSin(a) => simulate_sin(a),
        Command::SimulateAuger(a) => simulate_auger(a),
        Command::Fit(a) => fit(a),
        Command::Report(a) => report(a),
        Command::Montecarlo(a) => montecarlo(a),
        Command::Oracle(a) => oracle_cmd(a),
    }
}

/// Parses `args`, runs the command and returns the process exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).try_init();
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
