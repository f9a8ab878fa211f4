use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lamc_core::matrix::{save_matrix_market, DataMatrix, PlantedGroundTruth, PlantedSpec, StorageKind};
use lamc_core::metrics::{ari, cocluster_nmi, nmi, MetricError};
use lamc_core::pipeline::{
    benchmark, load_input, plan, run, truth_from_planted, BenchCase, InputFormat, PipelineConfig, PipelineError, PriorSpec,
    RunReport, TruthLabels,
};

#[derive(Parser)]
#[command(name = "lamc", version, about = "Partitioned spectral co-clustering for large matrices")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Co-cluster a matrix and write a JSON report.
    Run(RunArgs),
    /// Print the partition plan for a matrix as JSON.
    Plan(CommonArgs),
    /// Compare two labelings (CSV with one label per line, or label JSON).
    Metrics { pred: PathBuf, truth: PathBuf },
    /// Time configurations against the one-block, one-worker baseline.
    Bench(BenchArgs),
    /// Write a synthetic matrix with planted co-clusters and its truth labels.
    Generate(GenerateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Mtx,
    Csv,
    CsvHeader,
}

#[derive(Args, Clone)]
struct CommonArgs {
    #[arg(long)]
    input: PathBuf,
    /// Defaults to the file extension.
    #[arg(long, value_enum)]
    format: Option<Format>,
    #[arg(long, default_value_t = 4)]
    k: usize,
    /// Smallest co-cluster height as a fraction of the rows.
    #[arg(long, default_value_t = 0.1)]
    min_cocluster_rows: f64,
    /// Smallest co-cluster width as a fraction of the columns.
    #[arg(long, default_value_t = 0.1)]
    min_cocluster_cols: f64,
    /// Rows a block must hold to detect a co-cluster.
    #[arg(long)]
    tm: Option<usize>,
    /// Columns a block must hold to detect a co-cluster.
    #[arg(long)]
    tn: Option<usize>,
    #[arg(long, default_value_t = 0.95)]
    p_thresh: f64,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Fixed grid as MxN.
    #[arg(long, value_parser = parse_grid)]
    grid: Option<(usize, usize)>,
    #[arg(long, default_value_t = 0.5)]
    tau: f64,
    #[arg(long)]
    merge_cap: Option<usize>,
    #[arg(long, default_value_t = 1)]
    min_rounds: u32,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Truth labels JSON: {"row_labels": [...], "col_labels": [...], "background": id}.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Also write labels as CSV rows `axis,index,label`.
    #[arg(long)]
    labels_csv: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// `workers=1,2,4` or `grid=1x1,2x2`; repeat to combine.
    #[arg(long)]
    sweep: Vec<String>,
    #[arg(long, default_value_t = 3)]
    repeat: usize,
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Write the table as CSV here; JSON always goes to stdout.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct GenerateArgs {
    /// Planted specification JSON; overrides the shape flags below.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    rows: usize,
    #[arg(long, default_value_t = 1000)]
    cols: usize,
    #[arg(long, default_value_t = 4)]
    clusters: usize,
    /// Co-cluster height as a fraction of the rows.
    #[arg(long, default_value_t = 0.15)]
    row_fraction: f64,
    #[arg(long, default_value_t = 0.15)]
    col_fraction: f64,
    /// Density inside co-clusters.
    #[arg(long, default_value_t = 0.8)]
    signal: f64,
    /// Density outside co-clusters.
    #[arg(long, default_value_t = 0.01)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    dense: bool,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    truth_out: PathBuf,
}

fn parse_grid(s: &str) -> Result<(usize, usize), String> {
    let (m, n) = s.split_once(['x', 'X']).ok_or_else(|| format!("expected MxN, got {s:?}"))?;
    let parse = |t: &str| t.trim().parse::<usize>().map_err(|e| format!("{t:?}: {e}"));
    Ok((parse(m)?, parse(n)?))
}

#[derive(Debug)]
enum CliError {
    Pipeline(PipelineError),
    Usage(String),
    Io(PathBuf, std::io::Error),
    Input(String),
    Metric(MetricError),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Pipeline(e) => e.exit_code() as u8,
            CliError::Usage(_) | CliError::Metric(_) => 2,
            CliError::Io(..) | CliError::Input(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Pipeline(e) => write!(f, "{e}"),
            CliError::Usage(m) | CliError::Input(m) => write!(f, "{m}"),
            CliError::Io(p, e) => write!(f, "{}: {e}", p.display()),
            CliError::Metric(e) => write!(f, "{e}"),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        CliError::Pipeline(e)
    }
}

fn config(c: &CommonArgs) -> PipelineConfig {
    let format = match c.format {
        Some(Format::Mtx) => InputFormat::Mtx,
        Some(Format::Csv) => InputFormat::Csv,
        Some(Format::CsvHeader) => InputFormat::CsvHeader,
        None => InputFormat::from_path(&c.input),
    };
    PipelineConfig {
        format,
        priors: vec![PriorSpec {
            row_fraction: c.min_cocluster_rows,
            col_fraction: c.min_cocluster_cols,
            row_threshold: c.tm,
            col_threshold: c.tn,
        }],
        p_thresh: c.p_thresh,
        workers: c.workers,
        root_seed: c.seed,
        tau: c.tau,
        merge_cap: c.merge_cap,
        grid: c.grid,
        min_rounds: c.min_rounds,
        ..PipelineConfig::new(&c.input, c.k)
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|e| CliError::Io(path.to_path_buf(), e))
}

fn summary(report: &RunReport) -> serde_json::Value {
    let mut v = serde_json::json!({
        "grid": [report.plan.m, report.plan.n],
        "rounds": report.plan.rounds,
        "coclusters": report.coclusters.len(),
        "merges": report.merge_trace.iterations.len(),
        "seconds": report.timings.total_seconds,
    });
    if let Some(m) = &report.metrics {
        v["metrics"] = serde_json::to_value(m).expect("metrics serialize");
    }
    v
}

fn cmd_run(args: &RunArgs) -> Result<(), CliError> {
    let cfg = PipelineConfig {
        output: args.out.clone(),
        truth: args.truth.clone(),
        ..config(&args.common)
    };
    let report = run(&cfg)?;
    if let Some(path) = &args.labels_csv {
        let mut csv = String::from("axis,index,label\n");
        for (i, l) in report.row_labels.iter().enumerate() {
            csv.push_str(&format!("row,{i},{l}\n"));
        }
        for (j, l) in report.col_labels.iter().enumerate() {
            csv.push_str(&format!("col,{j},{l}\n"));
        }
        write_file(path, &csv)?;
    }
    if args.out.is_some() {
        println!("{}", summary(&report));
    } else {
        println!("{}", report.to_json());
    }
    Ok(())
}

fn cmd_plan(args: &CommonArgs) -> Result<(), CliError> {
    let cfg = config(args);
    cfg.validate()?;
    let matrix: DataMatrix<f64> = load_input(&cfg.input, cfg.format)?;
    let p = plan(&matrix, &cfg)?;
    println!("{}", serde_json::to_string_pretty(&p).expect("plans serialize"));
    Ok(())
}

enum Labels {
    Flat(Vec<usize>),
    Both(TruthLabels),
}

fn read_labels(path: &Path) -> Result<Labels, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(path.to_path_buf(), e))?;
    if text.trim_start().starts_with('{') {
        let t: TruthLabels =
            serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        return Ok(Labels::Both(t));
    }
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let field = line.split(',').next_back().unwrap_or("").trim();
        if field.is_empty() {
            continue;
        }
        match field.parse::<usize>() {
            Ok(l) => out.push(l),
            // a header line
            Err(_) if n == 0 => {}
            Err(e) => return Err(CliError::Input(format!("{}:{}: {field:?}: {e}", path.display(), n + 1))),
        }
    }
    Ok(Labels::Flat(out))
}

fn cmd_metrics(pred: &Path, truth: &Path) -> Result<(), CliError> {
    let out = match (read_labels(pred)?, read_labels(truth)?) {
        (Labels::Flat(a), Labels::Flat(b)) => {
            let n = nmi(&a, &b).map_err(CliError::Metric)?;
            let r = if a.len() >= 2 { ari(&a, &b).map_err(CliError::Metric)? } else { 1.0 };
            serde_json::json!({ "n": a.len(), "nmi": n, "ari": r, "nmi_normalization": "geometric" })
        }
        (Labels::Both(a), Labels::Both(b)) => {
            let s = cocluster_nmi(&a.assignment(), &b.assignment()).map_err(CliError::Metric)?;
            serde_json::to_value(s).expect("scores serialize")
        }
        _ => return Err(CliError::Usage("both label files must be CSV or both JSON".into())),
    };
    println!("{out}");
    Ok(())
}

fn bench_cases(sweeps: &[String], base: &CommonArgs) -> Result<Vec<BenchCase>, CliError> {
    let mut workers = vec![base.workers];
    let mut grids = vec![base.grid];
    for s in sweeps {
        let (key, values) = s.split_once('=').ok_or_else(|| CliError::Usage(format!("sweep {s:?} is not key=values")))?;
        let items = values.split(',').map(str::trim).filter(|v| !v.is_empty());
        match key.trim() {
            "workers" => {
                workers = items
                    .map(|v| v.parse::<usize>().map_err(|e| CliError::Usage(format!("workers {v:?}: {e}"))))
                    .collect::<Result<_, _>>()?
            }
            "grid" => {
                grids = items
                    .map(|v| if v == "auto" { Ok(None) } else { parse_grid(v).map(Some).map_err(CliError::Usage) })
                    .collect::<Result<_, _>>()?
            }
            other => return Err(CliError::Usage(format!("unknown sweep key {other:?}; use workers or grid"))),
        }
    }
    Ok(grids
        .iter()
        .flat_map(|&grid| workers.iter().map(move |&w| BenchCase { workers: w, grid }))
        .collect())
}

fn cmd_bench(args: &BenchArgs) -> Result<(), CliError> {
    let cfg = config(&args.common);
    cfg.validate()?;
    let cases = bench_cases(&args.sweep, &args.common)?;
    let matrix: DataMatrix<f64> = load_input(&cfg.input, cfg.format)?;
    let truth = args.truth.as_deref().map(TruthLabels::load).transpose()?;
    let table = benchmark(&matrix, &cfg, &cases, args.repeat, truth.as_ref())?;
    if let Some(path) = &args.csv {
        write_file(path, &table.to_csv())?;
    }
    println!("{}", serde_json::to_string_pretty(&table).expect("tables serialize"));
    Ok(())
}

fn cmd_generate(args: &GenerateArgs) -> Result<(), CliError> {
    let spec = match &args.spec {
        Some(path) => PlantedSpec::load(path).map_err(|e| CliError::Pipeline(e.into()))?,
        None => {
            let rows = vec![(args.row_fraction * args.rows as f64).ceil() as usize; args.clusters];
            let cols = vec![(args.col_fraction * args.cols as f64).ceil() as usize; args.clusters];
            let truth = PlantedGroundTruth::scattered(args.rows, args.cols, &rows, &cols, args.signal, args.noise, args.seed)
                .map_err(|e| CliError::Usage(e.to_string()))?;
            PlantedSpec {
                n_rows: args.rows,
                n_cols: args.cols,
                truth,
            }
        }
    };
    let kind = if args.dense { StorageKind::Dense } else { StorageKind::Sparse };
    let matrix: DataMatrix<f64> = spec.generate(kind).map_err(|e| CliError::Usage(e.to_string()))?;
    save_matrix_market(&matrix, &args.out).map_err(|e| CliError::Pipeline(e.into()))?;
    let truth = truth_from_planted(&spec).map_err(|e| CliError::Usage(e.to_string()))?;
    write_file(&args.truth_out, &serde_json::to_string(&truth).expect("labels serialize"))?;
    eprintln!("wrote {}x{} matrix with {} stored entries", matrix.n_rows(), matrix.n_cols(), matrix.nnz());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("LAMC_LOG", "warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Plan(a) => cmd_plan(a),
        Command::Metrics { pred, truth } => cmd_metrics(pred, truth),
        Command::Bench(a) => cmd_bench(a),
        Command::Generate(a) => cmd_generate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
