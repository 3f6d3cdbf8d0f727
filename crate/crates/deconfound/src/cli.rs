//! Config-driven pipeline runner behind the `deconfound` binary.
//!
//! Every command reads a TOML (or JSON) config, derives per-component seeds
//! from the global seed, writes its outputs under `--out`, and finishes with
//! a `manifest.json` listing every output file with a SHA-256 digest.
//! Partial outputs are removed when a command fails.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bench::{self, TaskKind, TaskSpec};
use crate::error::{Error, Result};
use crate::graph;
use crate::io as dio;
use crate::linalg;
use crate::pcss::{max_mse, pcss, suggest_m, PcssConfig};
use crate::scm::{self, ScmConfig};
use crate::scores::{GpFitSettings, ScoreKind, Scorer};
use crate::seed::child_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CommandKind {
    Generate,
    Pcss,
    Score,
    Bench,
    MseReport,
}

impl CommandKind {
    pub fn name(self) -> &'static str {
        match self {
            CommandKind::Generate => "generate",
            CommandKind::Pcss => "pcss",
            CommandKind::Score => "score",
            CommandKind::Bench => "bench",
            CommandKind::MseReport => "mse-report",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenerateConfig {
    pub scm: ScmConfig,
    pub expected_neighborhood: f64,
    pub n: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PcssRunConfig {
    pub input: PathBuf,
    pub pcss: PcssConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreRunConfig {
    pub input: PathBuf,
    pub parent_sets: PathBuf,
    pub kind: ScoreKind,
    #[serde(default)]
    pub s_hat: Option<PathBuf>,
    #[serde(default)]
    pub h: Option<PathBuf>,
    #[serde(default)]
    pub gp: Option<GpFitSettings>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchRunConfig {
    pub task: TaskSpec,
    pub scm: ScmConfig,
    pub expected_neighborhood: f64,
    pub n: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MseReportConfig {
    pub p_values: Vec<usize>,
    pub sigma_h_values: Vec<f64>,
    pub replicates: u64,
    /// p/N ratio held fixed across the grid.
    #[serde(default = "default_ratio")]
    pub ratio: f64,
    #[serde(default = "default_report_pcss_m")]
    pub pcss_m: usize,
    #[serde(default = "default_report_mc")]
    pub mc_samples: usize,
    #[serde(default = "default_report_density")]
    pub expected_neighborhood: f64,
}

fn default_ratio() -> f64 {
    2.0
}

fn default_report_pcss_m() -> usize {
    1
}

fn default_report_mc() -> usize {
    10_000
}

fn default_report_density() -> f64 {
    5.0
}

/// The top-level config file: one sub-config per command.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(default)]
    pub global_seed: u64,
    #[serde(default)]
    pub parallelism: Option<usize>,
    #[serde(default)]
    pub generate: Option<GenerateConfig>,
    #[serde(default)]
    pub pcss: Option<PcssRunConfig>,
    #[serde(default)]
    pub score: Option<ScoreRunConfig>,
    #[serde(default)]
    pub bench: Option<BenchRunConfig>,
    #[serde(default)]
    pub mse_report: Option<MseReportConfig>,
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)?;
        let is_json = path
            .extension()
            .map(|e| e.eq_ignore_ascii_case("json"))
            .unwrap_or(false);
        if is_json {
            serde_json::from_str(&text).map_err(|e| Error::Config {
                path: path.display().to_string(),
                message: e.to_string(),
            })
        } else {
            toml::from_str(&text).map_err(|e| Error::Config {
                path: path.display().to_string(),
                message: e.to_string(),
            })
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OutputDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub global_seed: u64,
    pub config: serde_json::Value,
    pub seeds_consumed: Vec<(String, u64)>,
    pub phase_seconds: Vec<(String, f64)>,
    pub outputs: Vec<OutputDigest>,
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(format!("{:x}", hasher.finalize()))
}

/// Collects output paths so they can be digested on success and removed on
/// failure.
struct RunState {
    out_dir: PathBuf,
    outputs: Vec<PathBuf>,
    seeds: Vec<(String, u64)>,
    phases: Vec<(String, f64)>,
    global_seed: u64,
}

impl RunState {
    fn track(&mut self, path: PathBuf) {
        self.outputs.push(path);
    }

    fn track_all(&mut self, paths: Vec<PathBuf>) {
        self.outputs.extend(paths);
    }

    fn seed(&mut self, component: &str, index: u64) -> u64 {
        let s = child_seed(self.global_seed, component, index);
        self.seeds.push((format!("{component}/{index}"), s));
        s
    }

    fn cleanup(&self) {
        for path in &self.outputs {
            let _ = std::fs::remove_file(path);
        }
    }
}

pub fn run(
    command: CommandKind,
    config: &RunConfig,
    out_dir: &Path,
    format: OutputFormat,
) -> Result<RunManifest> {
    std::fs::create_dir_all(out_dir)?;
    if let Some(workers) = config.parallelism {
        // results are worker-count independent; this is only a throughput hint
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global();
    }
    let mut state = RunState {
        out_dir: out_dir.to_path_buf(),
        outputs: Vec::new(),
        seeds: Vec::new(),
        phases: Vec::new(),
        global_seed: config.global_seed,
    };
    let result = dispatch(command, config, format, &mut state);
    if let Err(err) = result {
        state.cleanup();
        return Err(err);
    }

    let mut outputs = Vec::new();
    for path in &state.outputs {
        outputs.push(OutputDigest {
            path: path
                .strip_prefix(&state.out_dir)
                .unwrap_or(path)
                .display()
                .to_string(),
            sha256: sha256_file(path)?,
        });
    }
    let manifest = RunManifest {
        command: command.name().to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        global_seed: config.global_seed,
        config: serde_json::to_value(config)?,
        seeds_consumed: state.seeds,
        phase_seconds: state.phases,
        outputs,
    };
    dio::write_json(&out_dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

fn dispatch(
    command: CommandKind,
    config: &RunConfig,
    format: OutputFormat,
    state: &mut RunState,
) -> Result<()> {
    match command {
        CommandKind::Generate => run_generate(config, format, state),
        CommandKind::Pcss => run_pcss(config, state),
        CommandKind::Score => run_score(config, state),
        CommandKind::Bench => run_bench(config, state),
        CommandKind::MseReport => run_mse_report(config, state),
    }
}

fn missing_section(command: CommandKind) -> Error {
    Error::Config {
        path: command.name().to_string(),
        message: format!("config file lacks the `{}` section", command.name().replace('-', "_")),
    }
}

fn timed<T>(state: &mut RunState, phase: &str, f: impl FnOnce(&mut RunState) -> Result<T>) -> Result<T> {
    let start = Instant::now();
    let value = f(state)?;
    let elapsed = start.elapsed().as_secs_f64();
    state.phases.push((phase.to_string(), elapsed));
    Ok(value)
}

/// Draw graph + attachment + instance + dataset for a (scm, density, n)
/// triple, consuming seeds in a fixed order.
fn generate_dataset(
    scm_config: &ScmConfig,
    expected_neighborhood: f64,
    n: usize,
    state: &mut RunState,
    replicate: u64,
) -> Result<(scm::ScmInstance, scm::Dataset)> {
    let dag_seed = state.seed("graph", replicate);
    let att_seed = state.seed("attachment", replicate);
    let inst_seed = state.seed("instance", replicate);
    let data_seed = state.seed("dataset", replicate);
    let dag = graph::sample_erdos_renyi(scm_config.p, expected_neighborhood, dag_seed)?;
    let att =
        graph::sample_confounder_attachment(scm_config.p, scm_config.k, scm_config.attach_prob, att_seed)?;
    let instance = scm::sample_instance(scm_config, &dag, &att, inst_seed)?;
    let dataset = scm::sample_dataset(&instance, n, data_seed)?;
    Ok((instance, dataset))
}

fn run_generate(config: &RunConfig, format: OutputFormat, state: &mut RunState) -> Result<()> {
    let gen = config
        .generate
        .clone()
        .ok_or_else(|| missing_section(CommandKind::Generate))?;
    gen.scm.validate()?;
    let out_dir = state.out_dir.clone();
    let (instance, dataset) = timed(state, "generate", |st| {
        generate_dataset(&gen.scm, gen.expected_neighborhood, gen.n, st, 0)
    })?;
    let written = dio::write_dataset(&out_dir, &dataset)?;
    state.track_all(written);

    let dag_path = out_dir.join("dag.json");
    dio::write_json(&dag_path, &instance.dag)?;
    state.track(dag_path);
    let edges_path = out_dir.join("dag_edges.txt");
    std::fs::write(&edges_path, instance.dag.to_edge_list())?;
    state.track(edges_path);

    if format == OutputFormat::Json {
        let bundle_path = out_dir.join("dataset.json");
        dio::write_json(&bundle_path, &dio::DatasetBundle::from_dataset(&dataset))?;
        state.track(bundle_path);
    }
    Ok(())
}

fn run_pcss(config: &RunConfig, state: &mut RunState) -> Result<()> {
    let cfg = config
        .pcss
        .clone()
        .ok_or_else(|| missing_section(CommandKind::Pcss))?;
    let x = dio::read_matrix_csv(&cfg.input)?;
    let out_dir = state.out_dir.clone();
    let result = timed(state, "pcss", |_| pcss(&x, &cfg.pcss))?;

    let s_path = out_dir.join("S_hat.csv");
    dio::write_matrix_csv(&s_path, &result.s_hat, "s")?;
    state.track(s_path);

    let resid = scm::deconfound_residuals(&x, &result.s_hat)?;
    let r_path = out_dir.join("residual.csv");
    dio::write_matrix_csv(&r_path, &resid, "r")?;
    state.track(r_path);

    let spectrum = dio::SpectrumReport {
        eigenvalues: result.eigenvalues.clone(),
        suggested_m: suggest_m(&result.eigenvalues),
    };
    let spec_path = out_dir.join("spectrum.json");
    dio::write_json(&spec_path, &spectrum)?;
    state.track(spec_path);
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ScoredParentSet {
    target: usize,
    parents: Vec<usize>,
    log_score: f64,
    hypers: Option<crate::scores::GpHyperParams>,
}

fn run_score(config: &RunConfig, state: &mut RunState) -> Result<()> {
    let cfg = config
        .score
        .clone()
        .ok_or_else(|| missing_section(CommandKind::Score))?;
    let x = dio::read_matrix_csv(&cfg.input)?;
    let s_hat = cfg.s_hat.as_deref().map(dio::read_matrix_csv).transpose()?;
    let h = cfg.h.as_deref().map(dio::read_matrix_csv).transpose()?;
    let requests = dio::read_parent_set_requests(&cfg.parent_sets)?;

    let out_dir = state.out_dir.clone();
    let results = timed(state, "score", |_| {
        let scorer = Scorer::new(cfg.kind, &x, s_hat.as_ref(), h.as_ref())?;
        let scorer = match cfg.gp {
            Some(settings) => scorer.with_settings(settings),
            None => scorer,
        };
        requests
            .iter()
            .map(|req| {
                let value = scorer.score_parent_set(req.target, &req.parents)?;
                Ok(ScoredParentSet {
                    target: req.target,
                    parents: req.parents.clone(),
                    log_score: value.log_score,
                    hypers: value.fitted_hypers,
                })
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let path = out_dir.join("scores.json");
    dio::write_json(&path, &results)?;
    state.track(path);
    Ok(())
}

fn run_bench(config: &RunConfig, state: &mut RunState) -> Result<()> {
    let cfg = config
        .bench
        .clone()
        .ok_or_else(|| missing_section(CommandKind::Bench))?;
    cfg.task.validate()?;
    cfg.scm.validate()?;

    let out_dir = state.out_dir.clone();
    let report = timed(state, "bench", |st| {
        let mut report = bench::TaskReport::default();
        for (idx, &seed) in cfg.task.seeds.iter().enumerate() {
            let (instance, dataset) =
                generate_dataset(&cfg.scm, cfg.expected_neighborhood, cfg.n, st, idx as u64)?;
            let task_seed = child_seed(seed, "task", idx as u64);
            st.seeds.push((format!("task/{idx}"), task_seed));
            let chunk = match cfg.task.task {
                TaskKind::WrongParentAddition => {
                    bench::wrong_parent_addition(&dataset, &instance, &cfg.task, task_seed)?
                }
                TaskKind::CorrectParentDeletion => {
                    bench::correct_parent_deletion(&dataset, &instance, &cfg.task, task_seed)?
                }
                TaskKind::CandidateDags => {
                    bench::candidate_dag_task(&dataset, &instance, &cfg.task, task_seed)?
                }
            };
            report.merge(chunk);
        }
        Ok(report)
    })?;

    let json_path = out_dir.join("task_report.json");
    dio::write_json(&json_path, &report)?;
    state.track(json_path);

    // flat CSV: method, seed, metric, value
    let csv_path = out_dir.join("task_report.csv");
    let file = File::create(&csv_path)?;
    let mut w = BufWriter::new(file);
    writeln!(w, "method,seed,metric,value")?;
    for r in &report.results {
        let rows: [(&str, Option<f64>); 4] = [
            ("prop_wrong_beats_true", r.prop_wrong_beats_true),
            ("max_log_odds", r.max_log_odds),
            ("avg_posterior_shd", r.avg_posterior_shd),
            ("map_shd", r.map_shd.map(|v| v as f64)),
        ];
        for (metric, value) in rows {
            if let Some(v) = value {
                writeln!(w, "{},{},{},{}", r.method.name(), r.seed, metric, v)?;
            }
        }
    }
    w.flush()?;
    drop(w);
    state.track(csv_path);
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct MseSummaryRow {
    p: usize,
    n: usize,
    sigma_h_sq: f64,
    median_max_mse: f64,
    median_baseline_mse: f64,
}

fn run_mse_report(config: &RunConfig, state: &mut RunState) -> Result<()> {
    let cfg = config
        .mse_report
        .clone()
        .ok_or_else(|| missing_section(CommandKind::MseReport))?;
    if cfg.p_values.is_empty() || cfg.sigma_h_values.is_empty() || cfg.replicates == 0 {
        return Err(Error::Config {
            path: "mse_report".into(),
            message: "p_values, sigma_h_values, and replicates must be non-empty".into(),
        });
    }

    let out_dir = state.out_dir.clone();
    let csv_path = out_dir.join("mse_report.csv");
    let mut summary = Vec::new();
    timed(state, "mse-report", |st| {
        let file = File::create(&csv_path)?;
        let mut w = BufWriter::new(file);
        writeln!(w, "p,n,sigma_h_sq,seed,max_mse,baseline_mse")?;
        for &sigma_h in &cfg.sigma_h_values {
            for &p in &cfg.p_values {
                let n = (p as f64 / cfg.ratio).round() as usize;
                let scm_config = ScmConfig {
                    p,
                    k: 1,
                    sigma_noise_sq: 0.2,
                    sigma_h_sq: sigma_h,
                    linear_only: true,
                    exclude_linear_trend: false,
                    attach_prob: 0.7,
                    mc_samples: cfg.mc_samples,
                };
                let mut errs = Vec::new();
                let mut baselines = Vec::new();
                for rep in 0..cfg.replicates {
                    // distinct seed lane per grid cell
                    let lane = (p as u64) << 20 | ((sigma_h * 1000.0) as u64) << 4;
                    let (_, dataset) = generate_dataset(
                        &scm_config,
                        cfg.expected_neighborhood,
                        n,
                        st,
                        lane | rep,
                    )?;
                    let s_true = dataset.s_true.as_ref().expect("linear oracle present");
                    let result = pcss(
                        &dataset.x,
                        &PcssConfig { m: cfg.pcss_m, center: true },
                    )?;
                    let err = max_mse(&result.s_hat, s_true, None)?;
                    let zero = ndarray::Array2::zeros(s_true.dim());
                    let baseline = max_mse(&zero, s_true, None)?;
                    writeln!(w, "{},{},{},{},{},{}", p, n, sigma_h, rep, err, baseline)?;
                    errs.push(err);
                    baselines.push(baseline);
                }
                summary.push(MseSummaryRow {
                    p,
                    n,
                    sigma_h_sq: sigma_h,
                    median_max_mse: linalg::median(&mut errs),
                    median_baseline_mse: linalg::median(&mut baselines),
                });
            }
        }
        w.flush()?;
        Ok(())
    })?;
    state.track(csv_path);

    let summary_path = out_dir.join("mse_summary.json");
    dio::write_json(&summary_path, &summary)?;
    state.track(summary_path);
    Ok(())
}
