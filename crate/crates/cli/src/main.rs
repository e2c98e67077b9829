use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};
use thiserror::Error;

use drs_core::calibration::{pso_calibrate, FittedParams, ModelKind, PsoConfig, PsoError};
use drs_core::dataset::{
    extract_pairs, parse_csv, parse_pair_file_name, pair_file_name, read_pair_csv, write_pair_csv, ColumnMap,
    ExtractConfig, TrajectoryPair,
};
use drs_core::dynamics::{simulate_pair, CarFollowingModel, ReplayModel};
use drs_core::idm::IdmParams;
use drs_core::reporting::{
    accel_heatmap, export, strength_heatmap, summarize, Artifact, AxisSpec, Format, HeatmapScenario,
};
use drs_core::{AccelBounds, DrsParams};

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Empty(String),
    #[error("{0}")]
    Config(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Empty(_) => 3,
            CliError::Config(_) => 4,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn input_err(context: &str) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Input(format!("{context}: {e}"))
}

/// Driving risk model: pair extraction, calibration, simulation and heatmaps.
#[derive(Parser, Debug)]
#[command(name = "drs", version, about, long_about = None)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Extract car-following pairs from a raw trajectory CSV
    Extract(ExtractArgs),
    /// Calibrate model parameters with the particle swarm
    Calibrate(CalibrateArgs),
    /// Simulate followers against recorded leaders
    Simulate(SimulateArgs),
    /// Acceleration (and optionally field-strength) grid over follower speed and gap
    Heatmap(HeatmapArgs),
}

#[derive(Args, Debug, Clone)]
struct DatasetArgs {
    /// Raw trajectory CSV
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Column overrides, e.g. `time=Frame,speed=v`
    #[arg(long)]
    columns: Option<String>,
    /// Sample spacing in seconds; detected from the data when omitted
    #[arg(long)]
    dt: Option<f64>,
    /// Drop pairs shorter than this many seconds
    #[arg(long, default_value_t = 5.0)]
    min_duration: f64,
    /// Discard samples within this many seconds of a lane change
    #[arg(long, default_value_t = 0.5)]
    lane_change_margin: f64,
}

impl DatasetArgs {
    fn extract_config(&self) -> ExtractConfig {
        ExtractConfig {
            min_duration: self.min_duration,
            lane_change_margin: self.lane_change_margin,
            dt: self.dt,
            ..ExtractConfig::default()
        }
    }
}

#[derive(Args, Debug)]
struct ExtractArgs {
    #[command(flatten)]
    data: DatasetArgs,
    /// Output directory for pair files
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Clone)]
struct PairSource {
    /// Directory of extracted pair files
    #[arg(long, conflicts_with = "dataset")]
    pairs: Option<PathBuf>,
    #[command(flatten)]
    data: DatasetArgs,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum FitModel {
    Drs,
    Idm,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum SimModel {
    Drs,
    Idm,
    Replay,
}

#[derive(Args, Debug)]
struct PsoArgs {
    /// Optimizer configuration JSON; the flags below override it
    #[arg(long)]
    pso_config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    swarm_size: Option<usize>,
    #[arg(long)]
    standby_pool_size: Option<usize>,
    #[arg(long)]
    inertia_start: Option<f64>,
    #[arg(long)]
    inertia_end: Option<f64>,
    #[arg(long)]
    c1: Option<f64>,
    #[arg(long)]
    c2: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    swap_interval: Option<usize>,
    /// Search box as `lo:hi,lo:hi,...` in parameter order
    #[arg(long)]
    bounds: Option<String>,
    #[arg(long)]
    stall_window: Option<usize>,
    #[arg(long)]
    stall_tolerance: Option<f64>,
    #[arg(long)]
    max_resample: Option<usize>,
}

#[derive(Args, Debug)]
struct CalibrateArgs {
    #[command(flatten)]
    source: PairSource,
    #[arg(long, value_enum, default_value_t = FitModel::Drs)]
    model: FitModel,
    /// Parameter JSON supplying the non-calibrated DRS fields
    #[arg(long)]
    params: Option<PathBuf>,
    #[command(flatten)]
    pso: PsoArgs,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    source: PairSource,
    #[arg(long, value_enum, default_value_t = SimModel::Drs)]
    model: SimModel,
    /// Parameter JSON, a calibration report, or the embedded defaults
    #[arg(long)]
    params: Option<PathBuf>,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct HeatmapArgs {
    #[arg(long, value_enum, default_value_t = FitModel::Drs)]
    model: FitModel,
    #[arg(long)]
    params: Option<PathBuf>,
    /// Axis as `vF:min:max:steps` or `gap:min:max:steps`; may be repeated
    #[arg(long)]
    grid: Vec<String>,
    /// Leader speed, m/s
    #[arg(long, default_value_t = 20.0)]
    leader_speed: f64,
    /// Also write the total field-strength grid
    #[arg(long)]
    field: bool,
    #[arg(long, default_value = "csv")]
    format: String,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(e.code());
    }
    let result = match cli.command {
        Command::Extract(a) => cmd_extract(&a),
        Command::Calibrate(a) => cmd_calibrate(&a),
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Heatmap(a) => cmd_heatmap(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var("DRS_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(format!("DRS_THREADS must be a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))
}

fn create_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::Input(format!("cannot create {}: {e}", dir.display())))
}

fn echo_config(out: &Path, config: Value) -> Result<()> {
    let bytes = serde_json::to_vec_pretty(&config).expect("config is serializable");
    write_file(&out.join("run.json"), &bytes)
}

fn load_dataset(data: &DatasetArgs) -> Result<Vec<TrajectoryPair>> {
    let path = data.dataset.as_ref().ok_or_else(|| CliError::Input("--dataset is required".into()))?;
    if let Some(dt) = data.dt {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(CliError::Config(format!("--dt must be positive, got {dt}")));
        }
    }
    let mut map = ColumnMap::default();
    if let Some(spec) = &data.columns {
        map = map.with_overrides(spec).map_err(|e| CliError::Config(e.to_string()))?;
    }
    let file = fs::File::open(path).map_err(input_err(&path.display().to_string()))?;
    let parsed = parse_csv(file, &map).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    if !parsed.rejected.is_empty() {
        eprintln!("{} rows rejected", parsed.rejected.len());
        for row in parsed.rejected.iter().take(10) {
            eprintln!("  line {}: {}", row.line, row.reason);
        }
    }
    let extraction = extract_pairs(&parsed.records, &data.extract_config());
    eprintln!(
        "{} records, sample spacing {} s, dropped {} short and {} irregular runs",
        parsed.records.len(),
        extraction.modal_dt.map_or("n/a".to_string(), |dt| dt.to_string()),
        extraction.dropped_short,
        extraction.dropped_jitter
    );
    Ok(extraction.pairs)
}

/// Pairs from `--pairs DIR` (sorted by file name) or extracted from `--dataset`.
fn load_pairs(source: &PairSource) -> Result<Vec<(String, TrajectoryPair)>> {
    let pairs = match &source.pairs {
        Some(dir) => read_pair_dir(dir)?,
        None if source.data.dataset.is_some() => load_dataset(&source.data)?
            .into_iter()
            .map(|p| (pair_file_name(&p).trim_end_matches(".csv").to_string(), p))
            .collect(),
        None => return Err(CliError::Input("one of --pairs or --dataset is required".into())),
    };
    if pairs.is_empty() {
        return Err(CliError::Empty("no trajectory pairs".into()));
    }
    Ok(pairs)
}

fn read_pair_dir(dir: &Path) -> Result<Vec<(String, TrajectoryPair)>> {
    let entries = fs::read_dir(dir).map_err(input_err(&dir.display().to_string()))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(input_err(&dir.display().to_string()))?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else { continue };
        if let Some(ids) = parse_pair_file_name(name) {
            files.push((name.to_string(), path.clone(), ids));
        }
    }
    files.sort_by(|a, b| a.0.cmp(&b.0));
    files
        .into_iter()
        .map(|(name, path, (lane, leader, follower))| {
            let file = fs::File::open(&path).map_err(input_err(&name))?;
            let pair = read_pair_csv(file, lane, leader, follower).map_err(|e| CliError::Input(format!("{name}: {e}")))?;
            pair.check().map_err(|e| CliError::Input(format!("{name}: {e}")))?;
            Ok((name.trim_end_matches(".csv").to_string(), pair))
        })
        .collect()
}

fn read_json(path: &Path) -> Result<Value> {
    let text = fs::read_to_string(path).map_err(input_err(&path.display().to_string()))?;
    serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

/// Parameters from a plain parameter object, a tagged `{model, params}`
/// object, or a calibration report (its `best` field). Defaults to the
/// embedded parameter sets.
fn load_params(model: FitModel, path: Option<&Path>) -> Result<FittedParams> {
    let params = match path {
        None => match model {
            FitModel::Drs => FittedParams::Drs(DrsParams::reference()),
            FitModel::Idm => FittedParams::Idm(IdmParams::reference()),
        },
        Some(path) => {
            let mut value = read_json(path)?;
            if let Some(best) = value.get("best") {
                value = best.clone();
            }
            let bad = |e: serde_json::Error| CliError::Input(format!("{}: {e}", path.display()));
            if value.get("params").is_some() {
                serde_json::from_value(value).map_err(bad)?
            } else {
                match model {
                    FitModel::Drs => FittedParams::Drs(serde_json::from_value(value).map_err(bad)?),
                    FitModel::Idm => FittedParams::Idm(serde_json::from_value(value).map_err(bad)?),
                }
            }
        }
    };
    let expected = match model {
        FitModel::Drs => "drs",
        FitModel::Idm => "idm",
    };
    if params.model_name() != expected {
        return Err(CliError::Config(format!("parameters are for `{}`, not `{expected}`", params.model_name())));
    }
    params.validate().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(params)
}

fn bounds_of(params: &FittedParams) -> AccelBounds {
    match params {
        FittedParams::Drs(p) => p.accel_bounds(),
        FittedParams::Idm(_) => AccelBounds::default(),
    }
}

fn histogram(durations: &[f64]) -> Vec<(f64, usize)> {
    const WIDTH: f64 = 10.0;
    let max = durations.iter().copied().fold(0.0, f64::max);
    let bins = (max / WIDTH).floor() as usize + 1;
    let mut counts = vec![0; bins];
    for d in durations {
        counts[((d / WIDTH).floor() as usize).min(bins - 1)] += 1;
    }
    counts.into_iter().enumerate().map(|(i, c)| (i as f64 * WIDTH, c)).collect()
}

fn cmd_extract(args: &ExtractArgs) -> Result<()> {
    let pairs = load_dataset(&args.data)?;
    if pairs.is_empty() {
        return Err(CliError::Empty("no car-following pairs found".into()));
    }
    create_out(&args.out)?;
    for pair in &pairs {
        let bytes = write_pair_csv(pair).map_err(|e| CliError::Input(e.to_string()))?;
        write_file(&args.out.join(pair_file_name(pair)), &bytes)?;
    }
    let durations: Vec<f64> = pairs.iter().map(|p| p.duration()).collect();
    println!("pairs: {}", pairs.len());
    println!("duration histogram (s):");
    for (lo, count) in histogram(&durations) {
        println!("  [{lo:>5}, {:>5})  {count}", lo + 10.0);
    }
    echo_config(
        &args.out,
        json!({
            "command": "extract",
            "dataset": args.data.dataset,
            "columns": args.data.columns,
            "extract": args.data.extract_config(),
            "pairs": pairs.len(),
        }),
    )
}

fn pso_config(args: &PsoArgs) -> Result<PsoConfig> {
    let mut cfg: PsoConfig = match &args.pso_config {
        Some(path) => {
            serde_json::from_value(read_json(path)?).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        }
        None => PsoConfig::default(),
    };
    macro_rules! set {
        ($($field:ident),*) => {
            $(if let Some(v) = args.$field { cfg.$field = v; })*
        };
    }
    set!(
        seed,
        swarm_size,
        standby_pool_size,
        inertia_start,
        inertia_end,
        c1,
        c2,
        max_iters,
        swap_interval,
        stall_window,
        stall_tolerance,
        max_resample
    );
    if let Some(spec) = &args.bounds {
        cfg.bounds = parse_bounds(spec)?;
    }
    Ok(cfg)
}

fn parse_bounds(spec: &str) -> Result<Vec<(f64, f64)>> {
    spec.split(',')
        .map(|item| {
            let bad = || CliError::Config(format!("bound `{item}` is not lo:hi"));
            let (lo, hi) = item.split_once(':').ok_or_else(bad)?;
            Ok((lo.trim().parse().map_err(|_| bad())?, hi.trim().parse().map_err(|_| bad())?))
        })
        .collect()
}

fn cmd_calibrate(args: &CalibrateArgs) -> Result<()> {
    let cfg = pso_config(&args.pso)?;
    let kind = match load_params(args.model, args.params.as_deref())? {
        FittedParams::Drs(base) => ModelKind::Drs { base },
        FittedParams::Idm(_) => ModelKind::idm(),
    };
    let pairs: Vec<TrajectoryPair> = load_pairs(&args.source)?.into_iter().map(|(_, p)| p).collect();
    let report = pso_calibrate(&pairs, &kind, &cfg).map_err(|e| match e {
        PsoError::EmptyPairs => CliError::Empty(e.to_string()),
        _ => CliError::Config(e.to_string()),
    })?;
    create_out(&args.out)?;
    let json = export(Artifact::Calibration(&report), Format::Json).map_err(|e| CliError::Config(e.to_string()))?;
    write_file(&args.out.join("calibration.json"), &json)?;
    let csv = export(Artifact::Calibration(&report), Format::Csv).map_err(|e| CliError::Config(e.to_string()))?;
    write_file(&args.out.join("calibration_history.csv"), &csv)?;
    println!(
        "{}: best loss {:.6} m after {} iterations on {} pairs ({:.1} s)",
        report.model, report.best_loss, report.iterations, report.n_pairs, report.wall_time_s
    );
    echo_config(
        &args.out,
        json!({
            "command": "calibrate",
            "model": kind,
            "pairs": args.source.pairs,
            "dataset": args.source.data.dataset,
            "extract": args.source.data.extract_config(),
            "pso": report.config,
        }),
    )
}

fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let fixed = match args.model {
        SimModel::Drs => Some(load_params(FitModel::Drs, args.params.as_deref())?),
        SimModel::Idm => Some(load_params(FitModel::Idm, args.params.as_deref())?),
        SimModel::Replay => None,
    };
    let pairs = load_pairs(&args.source)?;
    let bounds = fixed.as_ref().map_or_else(AccelBounds::default, bounds_of);
    let shared = fixed.map(|p| p.model(bounds));
    let mut results = Vec::with_capacity(pairs.len());
    for (label, pair) in &pairs {
        let replay;
        let model: &dyn CarFollowingModel = match &shared {
            Some(m) => m.as_ref(),
            None => {
                replay = ReplayModel::from_follower(pair);
                &replay
            }
        };
        let result = simulate_pair(pair, model, bounds).map_err(|e| CliError::Input(format!("{label}: {e}")))?;
        results.push((label.clone(), result));
    }
    let name = match args.model {
        SimModel::Drs => "drs",
        SimModel::Idm => "idm",
        SimModel::Replay => "replay",
    };
    let summary = summarize(name, &results).map_err(|e| CliError::Input(e.to_string()))?;

    create_out(&args.out)?;
    for (label, result) in &results {
        let csv = export(Artifact::Simulation(result), Format::Csv).map_err(|e| CliError::Input(e.to_string()))?;
        write_file(&args.out.join(format!("sim_{label}.csv")), &csv)?;
    }
    let json = export(Artifact::Summary(&summary), Format::Json).map_err(|e| CliError::Input(e.to_string()))?;
    write_file(&args.out.join("summary.json"), &json)?;
    let csv = export(Artifact::Boxplot(&summary.rmse), Format::Csv).map_err(|e| CliError::Input(e.to_string()))?;
    write_file(&args.out.join("boxplot.csv"), &csv)?;
    println!(
        "{name}: {} pairs, mean RMSE {:.4} m, median {:.4} m, {} collisions",
        summary.n_pairs, summary.mean_rmse, summary.rmse.median, summary.collisions
    );
    echo_config(
        &args.out,
        json!({
            "command": "simulate",
            "model": name,
            "params": fixed,
            "pairs": args.source.pairs,
            "dataset": args.source.data.dataset,
            "extract": args.source.data.extract_config(),
        }),
    )
}

fn heatmap_axes(specs: &[String]) -> Result<(AxisSpec, AxisSpec)> {
    let mut speed = HeatmapScenario::default_speed_axis();
    let mut gap = HeatmapScenario::default_gap_axis();
    for spec in specs {
        let mut axis = AxisSpec::parse(spec).map_err(|e| CliError::Config(e.to_string()))?;
        match axis.name.as_str() {
            "vF" | "v_F" | "vf" | "speed" | "follower_speed" => {
                axis.name = speed.name.clone();
                speed = axis;
            }
            "gap" | "g" => {
                axis.name = gap.name.clone();
                gap = axis;
            }
            other => return Err(CliError::Config(format!("unknown grid axis `{other}` (expected vF or gap)"))),
        }
    }
    Ok((speed, gap))
}

fn cmd_heatmap(args: &HeatmapArgs) -> Result<()> {
    let format: Format = args.format.parse().map_err(|e: drs_core::reporting::ReportError| CliError::Config(e.to_string()))?;
    let (speed, gap) = heatmap_axes(&args.grid)?;
    if !(args.leader_speed.is_finite() && args.leader_speed >= 0.0) {
        return Err(CliError::Config(format!("--leader-speed must be >= 0, got {}", args.leader_speed)));
    }
    let params = load_params(args.model, args.params.as_deref())?;
    let drs = match params {
        FittedParams::Drs(p) => Some(p),
        FittedParams::Idm(_) if args.field => {
            return Err(CliError::Config("--field needs DRS parameters".into()));
        }
        FittedParams::Idm(_) => None,
    };
    let scenario = HeatmapScenario { leader_speed: args.leader_speed, ..HeatmapScenario::default() };
    let bounds = bounds_of(&params);
    let params_json = serde_json::to_value(params).expect("params are serializable");
    let model = params.model(bounds);
    let grid = accel_heatmap(model.as_ref(), &scenario, &speed, &gap, bounds, params_json)
        .map_err(|e| CliError::Config(e.to_string()))?;

    let ext = match format {
        Format::Csv => "csv",
        Format::Json => "json",
    };
    create_out(&args.out)?;
    let bytes = export(Artifact::Heatmap(&grid), format).map_err(|e| CliError::Config(e.to_string()))?;
    write_file(&args.out.join(format!("heatmap.{ext}")), &bytes)?;
    if let (true, Some(p)) = (args.field, drs) {
        let strength = strength_heatmap(&p, &scenario, &speed, &gap).map_err(|e| CliError::Config(e.to_string()))?;
        let bytes = export(Artifact::Heatmap(&strength), format).map_err(|e| CliError::Config(e.to_string()))?;
        write_file(&args.out.join(format!("strength.{ext}")), &bytes)?;
    }
    println!(
        "{} heatmap: {} x {} cells, {} singular",
        grid.model,
        speed.steps,
        gap.steps,
        grid.singular.len()
    );
    echo_config(
        &args.out,
        json!({
            "command": "heatmap",
            "model": grid.model,
            "params": params,
            "scenario": scenario,
            "rows": speed,
            "cols": gap,
            "field": args.field,
            "format": ext,
        }),
    )
}
