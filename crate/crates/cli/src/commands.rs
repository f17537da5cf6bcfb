//! The five subcommands. Each one reads the validated config, writes its
//! outputs under the output directory and reports whether it finished.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use fedshap_core::data::{holdout_split, load_csv, make_synthetic, partition_noniid};
use fedshap_core::intent::{
    cluster_clients, cumulative_series, detect_change_points, jaccard_honest_separation, window_mass,
    ChangePointPosterior, ChangePointPrior, ClusterAssignment,
};
use fedshap_core::rng::{derive_seed, Purpose};
use fedshap_core::schedule::{build_problem, solve_one_sided, solve_two_sided_exact, solve_two_sided_lb};
use fedshap_core::shapley::{mse_vs_exact, Assessor, TimelineSummary};
use fedshap_core::sim::{run_simulation, AggregationRule, LOG_VERSION};
use fedshap_core::{
    ClientConfig, ContributionTimeline, GradientLog, ModelSpec, Scenario, Schedule, ShapleyMethod,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Aggregation, DataConfig, ExperimentConfig, Method, ModelConfig, Solver};
use crate::error::{CliError, Result};
use crate::output::{comment_header, create_dir, in_dir, read_text, sha256_hex, write_json, write_text};

pub const LOG_FILE: &str = "gradient_log.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const TIMELINE_CSV: &str = "timeline.csv";
pub const TIMELINE_JSON: &str = "timeline.json";
pub const SUMMARY_FILE: &str = "summary.json";
pub const SCHEDULE_FILE: &str = "schedule.json";
pub const DETECTION_REPORT: &str = "detection_report.txt";
pub const DETECTION_JSON: &str = "detection.json";
pub const COMPARE_MSE: &str = "compare_mse.csv";
pub const COMPARE_RUNTIME: &str = "compare_runtime.csv";
pub const CACTUS_MSE: &str = "cactus_mse.csv";
pub const CACTUS_RUNTIME: &str = "cactus_runtime.csv";
pub const DEFAULT_OUT: &str = "fedshap-out";

const TOOL: &str = concat!("fedshap ", env!("CARGO_PKG_VERSION"));

/// Wall-clock file for a command; the only output that differs between identical runs.
pub fn timing_file(command: &str) -> String {
    format!("timing_{command}.json")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Complete,
    /// A cutoff stopped the work; outputs are written and flagged as partial.
    Partial,
}

impl Outcome {
    pub fn exit_code(self) -> i32 {
        match self {
            Self::Complete => 0,
            Self::Partial => 2,
        }
    }
}

/// Command-line overrides shared by all subcommands.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub cutoff_seconds: Option<f64>,
}

/// A loaded config together with the resolved seed and output directory.
#[derive(Debug, Clone)]
pub struct Context {
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub seed: u64,
    pub out: PathBuf,
}

impl Context {
    pub fn load(config_path: &Path, overrides: &Overrides) -> Result<Self> {
        let mut config = ExperimentConfig::load(config_path)?;
        if let Some(seed) = overrides.seed {
            config.seeds = vec![seed];
        }
        if let Some(c) = overrides.cutoff_seconds {
            config.cutoff_seconds = Some(c);
        }
        config.validate()?;
        Self::new(config, overrides.out.clone())
    }

    pub fn new(config: ExperimentConfig, out: Option<PathBuf>) -> Result<Self> {
        let config_hash = config.hash()?;
        let seed = config.seeds[0];
        let out = out
            .or_else(|| config.output_dir.clone())
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
        Ok(Self {
            config,
            config_hash,
            seed,
            out,
        })
    }

    fn provenance(&self) -> BTreeMap<String, String> {
        BTreeMap::from([
            ("config_hash".to_string(), self.config_hash.clone()),
            ("seed".to_string(), self.seed.to_string()),
            ("tool".to_string(), TOOL.to_string()),
        ])
    }

    fn deadline(&self) -> Option<Instant> {
        self.config
            .cutoff_seconds
            .map(|s| Instant::now() + Duration::from_secs_f64(s))
    }

    fn path(&self, name: &str) -> PathBuf {
        in_dir(&self.out, name)
    }

    fn write_timing(&self, command: &str, seconds: BTreeMap<&str, f64>) -> Result<()> {
        write_json(
            &self.path(&timing_file(command)),
            &Stamped::new(self, Timing {
                command: command.to_string(),
                wall_clock_seconds: seconds.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
            }),
        )
    }
}

/// Wraps a payload with the config hash and seed that produced it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Stamped<T> {
    pub config_hash: String,
    pub seed: u64,
    #[serde(flatten)]
    pub body: T,
}

impl<T> Stamped<T> {
    fn new(ctx: &Context, body: T) -> Self {
        Self {
            config_hash: ctx.config_hash.clone(),
            seed: ctx.seed,
            body,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Timing {
    pub command: String,
    pub wall_clock_seconds: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub log_format: String,
    pub log_file: String,
    pub log_sha256: String,
    pub config: ExperimentConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TimelineFile {
    pub timeline: ContributionTimeline,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SummaryFile {
    pub complete: bool,
    pub log_sha256: String,
    pub selected_epochs: Vec<usize>,
    pub summary: TimelineSummary,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScheduleFile {
    pub selected_epochs: Vec<usize>,
    pub schedule: Schedule,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClientDetection {
    pub client_id: usize,
    pub dishonest: bool,
    pub window_mass: f64,
    /// Epoch with the largest change probability.
    pub peak_epoch: usize,
    pub cluster: usize,
    pub posterior: ChangePointPosterior,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetectionFile {
    pub window: (usize, usize),
    pub clients: Vec<ClientDetection>,
    pub clustering: ClusterAssignment,
    /// Absent when every client is honest.
    pub jaccard_honest_separation: Option<f64>,
}

/// Builds the scenario for `m` clients and `epochs` epochs from the config's data, model and training sections.
pub fn build_scenario(cfg: &ExperimentConfig, seed: u64, m: usize, epochs: usize) -> Result<Scenario> {
    let s = &cfg.scenario;
    let (train, validation) = match &s.data {
        DataConfig::Synthetic {
            classes,
            features,
            rows_per_client,
            separation,
            validation_rows,
        } => (
            make_synthetic(*classes, rows_per_client * m, *features, *separation, derive_seed(seed, Purpose::Synthetic, 0, 0))?,
            make_synthetic(*classes, *validation_rows, *features, *separation, derive_seed(seed, Purpose::Synthetic, 0, 1))?,
        ),
        DataConfig::Csv {
            path,
            label_column,
            validation_fraction,
        } => {
            if !path.is_file() {
                return Err(CliError::field("scenario.data.path", format!("{} does not exist", path.display())));
            }
            holdout_split(&load_csv(path, label_column)?, *validation_fraction, seed)?
        }
    };
    let model_spec = match &s.model {
        ModelConfig::Logistic => ModelSpec::logistic(train.num_features, train.num_classes),
        ModelConfig::Mlp { hidden } => ModelSpec::mlp(train.num_features, hidden, train.num_classes),
    };
    let det = &cfg.detection;
    let clients = partition_noniid(&train, m, s.beta, seed)?
        .into_iter()
        .enumerate()
        .map(|(i, data)| {
            if det.enabled && det.dishonest.contains(&i) {
                ClientConfig::dishonest(i, data, det.window(), det.flip_probability)
            } else {
                ClientConfig::honest(i, data)
            }
        })
        .collect();
    let aggregation = match s.aggregation {
        Aggregation::FedAvg => AggregationRule::FedAvg,
        Aggregation::Greedy => AggregationRule::Greedy {
            utility: cfg.assessment.utility,
        },
    };
    Ok(Scenario {
        clients,
        model_spec,
        epochs,
        fraction: s.fraction,
        train: s.train.into(),
        validation,
        aggregation,
        seed,
    })
}

fn shapley_method(cfg: &ExperimentConfig, seed: u64, samples: usize) -> ShapleyMethod {
    match cfg.assessment.method {
        Method::Exact => ShapleyMethod::Exact,
        Method::MonteCarlo => ShapleyMethod::MonteCarloPermutation {
            samples,
            seed: derive_seed(seed, Purpose::MonteCarlo, 0, 0),
            rescale: cfg.assessment.rescale,
        },
    }
}

fn solve(cfg: &ExperimentConfig, log: &GradientLog, solver: Solver, k: usize) -> Result<Schedule> {
    let a = &cfg.assessment;
    let problem = build_problem(log, a.utility, k, a.gamma)?.normalized(a.normalize_terms);
    Ok(match solver {
        Solver::Full => Schedule::full(log.num_epochs()),
        Solver::OneSided => solve_one_sided(&problem)?,
        Solver::TwoSidedExact => solve_two_sided_exact(&problem)?,
        Solver::TwoSidedLb => solve_two_sided_lb(&problem)?,
    })
}

fn read_log(path: &Path) -> Result<(GradientLog, String)> {
    let text = read_text(path)?;
    let log = GradientLog::from_json(&text).map_err(|e| CliError::Input {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    log.validate().map_err(|e| CliError::Input {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    Ok((log, sha256_hex(text.as_bytes())))
}

/// Runs the simulation and writes the gradient log and its manifest.
pub fn simulate(ctx: &Context) -> Result<Outcome> {
    let start = Instant::now();
    let s = &ctx.config.scenario;
    let scenario = build_scenario(&ctx.config, ctx.seed, s.clients, s.epochs)?;
    let mut log = run_simulation(&scenario)?;
    log.meta = ctx.provenance();
    let text = log.to_json()?;
    create_dir(&ctx.out)?;
    write_text(&ctx.path(LOG_FILE), &text)?;
    let manifest = Manifest {
        tool: TOOL.to_string(),
        log_format: LOG_VERSION.to_string(),
        log_file: LOG_FILE.to_string(),
        log_sha256: sha256_hex(text.as_bytes()),
        config: ctx.config.clone(),
    };
    write_json(&ctx.path(MANIFEST_FILE), &Stamped::new(ctx, manifest))?;
    ctx.write_timing("simulate", BTreeMap::from([("simulate", start.elapsed().as_secs_f64())]))?;
    Ok(Outcome::Complete)
}

/// Computes the contribution timeline of a log, honoring the cutoff.
pub fn assess(ctx: &Context, log_path: &Path) -> Result<Outcome> {
    let (log, log_sha256) = read_log(log_path)?;
    let a = &ctx.config.assessment;
    let start = Instant::now();
    let schedule = match (a.solver, a.k) {
        (Solver::Full, _) | (_, None) => None,
        (solver, Some(k)) => Some(solve(&ctx.config, &log, solver, k)?),
    };
    let solve_seconds = start.elapsed().as_secs_f64();
    let timeline = Assessor::new(a.utility, shapley_method(&ctx.config, ctx.seed, a.samples))
        .with_deadline(ctx.deadline())
        .assess(&log, schedule.as_ref())?;
    let total_seconds = start.elapsed().as_secs_f64();

    create_dir(&ctx.out)?;
    if let Some(s) = &schedule {
        write_json(
            &ctx.path(SCHEDULE_FILE),
            &Stamped::new(ctx, ScheduleFile { selected_epochs: s.epochs(), schedule: s.clone() }),
        )?;
    }
    let mut meta = ctx.provenance();
    meta.insert("method".into(), timeline.method.label());
    meta.insert("complete".into(), timeline.complete.to_string());
    write_text(&ctx.path(TIMELINE_CSV), &timeline.to_csv(&meta))?;
    write_json(&ctx.path(SUMMARY_FILE), &Stamped::new(ctx, SummaryFile {
        complete: timeline.complete,
        log_sha256,
        selected_epochs: schedule.as_ref().map_or_else(|| (1..=log.num_epochs()).collect(), Schedule::epochs),
        summary: timeline.summary(),
    }))?;
    let complete = timeline.complete;
    write_json(&ctx.path(TIMELINE_JSON), &Stamped::new(ctx, TimelineFile { timeline }))?;
    ctx.write_timing("assess", BTreeMap::from([("schedule", solve_seconds), ("total", total_seconds)]))?;
    Ok(if complete { Outcome::Complete } else { Outcome::Partial })
}

/// Solves the configured scheduling problem for a log.
pub fn schedule(ctx: &Context, log_path: &Path) -> Result<Outcome> {
    let a = &ctx.config.assessment;
    let k = match (a.solver, a.k) {
        (Solver::Full, _) => {
            return Err(CliError::field("assessment.solver", "the schedule command needs a scheduling solver"));
        }
        (_, Some(k)) => k,
        (_, None) => return Err(CliError::field("assessment.k", "required when a solver is set")),
    };
    let (log, _) = read_log(log_path)?;
    let start = Instant::now();
    let s = solve(&ctx.config, &log, a.solver, k)?;
    let seconds = start.elapsed().as_secs_f64();
    create_dir(&ctx.out)?;
    write_json(
        &ctx.path(SCHEDULE_FILE),
        &Stamped::new(ctx, ScheduleFile { selected_epochs: s.epochs(), schedule: s }),
    )?;
    ctx.write_timing("schedule", BTreeMap::from([("solve", seconds)]))?;
    Ok(Outcome::Complete)
}

/// Change-point and clustering analysis of a complete timeline.
pub fn detect(ctx: &Context, timeline_path: &Path) -> Result<Outcome> {
    let input = |message: String| CliError::Input {
        path: timeline_path.to_path_buf(),
        message,
    };
    let text = read_text(timeline_path)?;
    let file: Stamped<TimelineFile> = serde_json::from_str(&text).map_err(|e| input(e.to_string()))?;
    let timeline = file.body.timeline;
    let series = cumulative_series(&timeline).map_err(|e| input(e.to_string()))?;
    let det = &ctx.config.detection;
    let window = det.window();
    if window.1 > timeline.num_epochs {
        return Err(CliError::field(
            "detection.window",
            format!("ends after the timeline's last epoch {}", timeline.num_epochs),
        ));
    }
    if det.clusters > timeline.num_clients {
        return Err(CliError::field("detection.clusters", format!("timeline has {} clients", timeline.num_clients)));
    }
    let start = Instant::now();
    let prior = ChangePointPrior {
        hazard: det.hazard,
        noise_scale: det.noise_scale,
    };
    let clustering = cluster_clients(&series, det.clusters, derive_seed(ctx.seed, Purpose::Clustering, 0, 0))?;
    let dishonest: BTreeSet<usize> = det.dishonest.iter().copied().filter(|c| *c < timeline.num_clients).collect();
    let honest: BTreeSet<usize> = (0..timeline.num_clients).filter(|c| !dishonest.contains(c)).collect();
    let jaccard = if dishonest.is_empty() || honest.is_empty() {
        None
    } else {
        Some(jaccard_honest_separation(&clustering, &honest)?)
    };
    let clients = series
        .iter()
        .enumerate()
        .map(|(c, s)| {
            let posterior = detect_change_points(s, prior)?;
            let peak_epoch = posterior
                .mass
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (i, m)| if *m > best.1 { (i + 1, *m) } else { best })
                .0;
            Ok(ClientDetection {
                client_id: c,
                dishonest: dishonest.contains(&c),
                window_mass: window_mass(&posterior, window)?,
                peak_epoch,
                cluster: clustering.labels[c],
                posterior,
            })
        })
        .collect::<fedshap_core::Result<Vec<_>>>()?;
    let seconds = start.elapsed().as_secs_f64();
    let report = DetectionFile {
        window,
        clients,
        clustering,
        jaccard_honest_separation: jaccard,
    };
    create_dir(&ctx.out)?;
    write_text(&ctx.path(DETECTION_REPORT), &render_report(ctx, &report, &timeline))?;
    write_json(&ctx.path(DETECTION_JSON), &Stamped::new(ctx, report))?;
    ctx.write_timing("detect", BTreeMap::from([("detect", seconds)]))?;
    Ok(Outcome::Complete)
}

fn render_report(ctx: &Context, r: &DetectionFile, timeline: &ContributionTimeline) -> String {
    let det = &ctx.config.detection;
    let mut out = comment_header(&[
        ("report", "fedshap detection".into()),
        ("config_hash", ctx.config_hash.clone()),
        ("seed", ctx.seed.to_string()),
        ("method", timeline.method.label()),
    ]);
    out.push_str(&format!(
        "window: epochs {}..={}\nhazard: {}\nclusters requested: {}\n\n",
        r.window.0, r.window.1, det.hazard, det.clusters
    ));
    out.push_str("client  dishonest  window_mass  peak_epoch  peak_mass  noise_scale  cluster\n");
    for c in &r.clients {
        let peak = if c.peak_epoch == 0 { 0.0 } else { c.posterior.mass[c.peak_epoch - 1] };
        out.push_str(&format!(
            "{:<6}  {:<9}  {:<11.6}  {:<10}  {:<9.6}  {:<11.4e}  {}\n",
            c.client_id, c.dishonest, c.window_mass, c.peak_epoch, peak, c.posterior.noise_scale, c.cluster
        ));
    }
    let groups: Vec<String> = r
        .clustering
        .partition()
        .iter()
        .map(|g| format!("{{{}}}", g.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(",")))
        .collect();
    out.push_str(&format!("\npartition: {}\n", groups.join(" ")));
    if r.clustering.reduced {
        out.push_str("note: fewer distinct series than requested clusters; k was reduced\n");
    }
    match r.jaccard_honest_separation {
        Some(j) => out.push_str(&format!("jaccard_honest_separation: {j:.6}\n")),
        None => out.push_str("jaccard_honest_separation: n/a (no dishonest clients configured)\n"),
    }
    out
}

#[derive(Debug, Clone)]
struct Instance {
    id: usize,
    clients: usize,
    epochs: usize,
    seed: u64,
}

#[derive(Debug, Clone)]
struct MethodRun {
    method: String,
    completed: bool,
    evaluations: usize,
    seconds: f64,
    /// `None` when this run or the exact reference hit the cutoff.
    mse: Option<f64>,
}

fn timed(deadline_secs: Option<f64>, f: impl FnOnce(Option<Instant>) -> Result<ContributionTimeline>) -> Result<(ContributionTimeline, f64)> {
    let start = Instant::now();
    let tl = f(deadline_secs.map(|s| start + Duration::from_secs_f64(s)))?;
    Ok((tl, start.elapsed().as_secs_f64()))
}

fn run_instance(cfg: &ExperimentConfig, inst: &Instance) -> Result<Vec<MethodRun>> {
    let log = run_simulation(&build_scenario(cfg, inst.seed, inst.clients, inst.epochs)?)?;
    let a = &cfg.assessment;
    let cutoff = cfg.cutoff_seconds;
    let (exact, exact_secs) = timed(cutoff, |d| {
        Ok(Assessor::new(a.utility, ShapleyMethod::Exact).with_deadline(d).assess(&log, None)?)
    })?;
    let reference = exact.complete.then_some(&exact);
    let score = |tl: &ContributionTimeline| -> Result<Option<f64>> {
        match reference {
            Some(r) if tl.complete => Ok(Some(mse_vs_exact(tl, r)?)),
            _ => Ok(None),
        }
    };
    let mut runs = vec![MethodRun {
        method: "exact".into(),
        completed: exact.complete,
        evaluations: exact.total_evaluations(),
        seconds: exact_secs,
        mse: score(&exact)?,
    }];
    for &samples in &cfg.compare.mc_samples {
        let method = ShapleyMethod::MonteCarloPermutation {
            samples,
            seed: derive_seed(inst.seed, Purpose::MonteCarlo, 0, 0),
            rescale: a.rescale,
        };
        let label = method.label();
        let (tl, secs) = timed(cutoff, |d| Ok(Assessor::new(a.utility, method).with_deadline(d).assess(&log, None)?))?;
        runs.push(MethodRun {
            method: label,
            completed: tl.complete,
            evaluations: tl.total_evaluations(),
            seconds: secs,
            mse: score(&tl)?,
        });
    }
    for &solver in &cfg.compare.solvers {
        for &ratio in &cfg.compare.budget_ratios {
            let k = ((ratio * inst.epochs as f64).round() as usize).clamp(1, inst.epochs);
            let (tl, secs) = timed(cutoff, |d| {
                let s = solve(cfg, &log, solver, k)?;
                Ok(Assessor::new(a.utility, ShapleyMethod::Exact).with_deadline(d).assess(&log, Some(&s))?)
            })?;
            runs.push(MethodRun {
                method: format!("{}_r{ratio}", solver_name(solver)),
                completed: tl.complete,
                evaluations: tl.total_evaluations(),
                seconds: secs,
                mse: score(&tl)?,
            });
        }
    }
    Ok(runs)
}

fn solver_name(s: Solver) -> &'static str {
    match s {
        Solver::Full => "full",
        Solver::OneSided => "one_sided",
        Solver::TwoSidedExact => "two_sided_exact",
        Solver::TwoSidedLb => "two_sided_lb",
    }
}

/// Exact, Monte Carlo and scheduled assessment over the clients × epochs × seeds grid.
///
/// Instances run in parallel; a method that hits the cutoff on an instance is
/// recorded as unsolved there rather than failing the command.
pub fn compare(ctx: &Context) -> Result<Outcome> {
    let cfg = &ctx.config;
    let mut instances = Vec::new();
    for m in cfg.compare.client_grid(&cfg.scenario) {
        for t in cfg.compare.epoch_grid(&cfg.scenario) {
            for &seed in &cfg.seeds {
                instances.push(Instance {
                    id: instances.len(),
                    clients: m,
                    epochs: t,
                    seed,
                });
            }
        }
    }
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(p) = cfg.compare.parallelism {
        pool = pool.num_threads(p);
    }
    let pool = pool.build().map_err(|e| CliError::Internal(e.to_string()))?;
    let start = Instant::now();
    let results: Vec<Vec<MethodRun>> =
        pool.install(|| instances.par_iter().map(|inst| run_instance(cfg, inst)).collect::<Result<_>>())?;
    let total = start.elapsed().as_secs_f64();

    let seeds = cfg.seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(" ");
    let header = |table: &str| {
        comment_header(&[("table", table.to_string()), ("config_hash", ctx.config_hash.clone()), ("seeds", seeds.clone())])
    };
    let fmt = |v: Option<f64>| v.map(|x| format!("{x:?}")).unwrap_or_default();

    let mut mse_csv = header("per-instance MSE of total contributions vs exact; empty when a cutoff was hit");
    mse_csv.push_str("instance,clients,epochs,seed,method,completed,evaluations,mse\n");
    let mut runtime_csv = header("per-instance wall-clock seconds");
    runtime_csv.push_str("instance,clients,epochs,seed,method,completed,seconds\n");
    let mut by_method: BTreeMap<String, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for (inst, runs) in instances.iter().zip(&results) {
        for r in runs {
            let prefix = format!("{},{},{},{},{}", inst.id, inst.clients, inst.epochs, inst.seed, r.method);
            mse_csv.push_str(&format!("{prefix},{},{},{}\n", r.completed as u8, r.evaluations, fmt(r.mse)));
            runtime_csv.push_str(&format!("{prefix},{},{:?}\n", r.completed as u8, r.seconds));
            let entry = by_method.entry(r.method.clone()).or_default();
            if r.completed {
                entry.1.push(r.seconds);
            }
            if let Some(m) = r.mse {
                entry.0.push(m);
            }
        }
    }
    let mut cactus_mse = header("cactus data: the n-th smallest MSE per method");
    cactus_mse.push_str("method,instances,mse\n");
    let mut cactus_runtime = header("cactus data: instances solved within the given seconds, per method");
    cactus_runtime.push_str("method,instances,seconds\n");
    for (method, (mses, secs)) in &mut by_method {
        mses.sort_by(f64::total_cmp);
        secs.sort_by(f64::total_cmp);
        for (i, v) in mses.iter().enumerate() {
            cactus_mse.push_str(&format!("{method},{},{v:?}\n", i + 1));
        }
        for (i, v) in secs.iter().enumerate() {
            cactus_runtime.push_str(&format!("{method},{},{v:?}\n", i + 1));
        }
    }
    create_dir(&ctx.out)?;
    write_text(&ctx.path(COMPARE_MSE), &mse_csv)?;
    write_text(&ctx.path(CACTUS_MSE), &cactus_mse)?;
    write_text(&ctx.path(COMPARE_RUNTIME), &runtime_csv)?;
    write_text(&ctx.path(CACTUS_RUNTIME), &cactus_runtime)?;
    ctx.write_timing("compare", BTreeMap::from([("total", total)]))?;
    Ok(Outcome::Complete)
}
