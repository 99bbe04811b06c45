//! `cssdr` command-line tool.
//!
//! Exit codes: 0 on success, 1 on data or numerical errors, 2 on usage errors.

mod report;

use clap::{Args, Parser, Subcommand, ValueEnum};
use cssdr::data::{load_csv, write_csv, Dataset, ResponseColumn};
use cssdr::estimators::Eigenform;
use cssdr::evaluation::{run_benchmark, simulate, DesignNoise, Model, SimConfig};
use cssdr::fit::{fit, working_data, FitConfig, KernelParams, Method};
use cssdr::objective::GBasisKind;
use cssdr::optimizer::OptimOptions;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Seed used by `simulate` when none is given.
const DEFAULT_SIM_SEED: u64 = 7;
/// G basis for `fit` and `asymptotics` when none is given.
const FIT_G: (usize, GBasisKind) = (2, GBasisKind::Full);

#[derive(Parser)]
#[command(
    name = "cssdr",
    version,
    about = "Central solution space dimension reduction"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate a dimension-reduction basis from a CSV file.
    Fit(FitArgs),
    /// Run the simulation study and report mean trace correlations.
    Benchmark(BenchArgs),
    /// Write one simulated dataset as CSV.
    Simulate(SimArgs),
    /// Fit CSS-PIR and report the sandwich covariance of the angles.
    Asymptotics(AsymArgs),
}

#[derive(Args)]
struct InputArgs {
    /// CSV file with a header row.
    input: PathBuf,
    /// Name of the response column.
    #[arg(long, default_value = "y", conflicts_with = "response_index")]
    response: String,
    /// Zero-based index of the response column (instead of --response).
    #[arg(long)]
    response_index: Option<usize>,
}

impl InputArgs {
    fn load(&self) -> cssdr::Result<Dataset> {
        let col = match self.response_index {
            Some(i) => ResponseColumn::Index(i),
            None => ResponseColumn::Name(self.response.clone()),
        };
        load_csv(&self.input, &col)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Full,
    PurePower,
}

#[derive(Clone, Copy, ValueEnum)]
enum EigenformArg {
    Whitened,
    Sandwich,
}

#[derive(Clone, Copy, ValueEnum)]
enum NoiseArg {
    Independent,
    Shared,
}

impl From<NoiseArg> for DesignNoise {
    fn from(a: NoiseArg) -> Self {
        match a {
            NoiseArg::Independent => DesignNoise::Independent,
            NoiseArg::Shared => DesignNoise::Shared,
        }
    }
}

#[derive(Args)]
struct ModelArgs {
    /// Number of SIR slices.
    #[arg(long, default_value_t = 10)]
    slices: usize,
    /// KIR bandwidth on the response scale.
    #[arg(long = "h", default_value_t = 0.4)]
    bandwidth: f64,
    /// Degree of the PIR response basis H(y).
    #[arg(long, default_value_t = 2)]
    h_degree: usize,
    /// Degree of the polynomial basis G in the reduced predictors.
    #[arg(long)]
    g_degree: Option<usize>,
    /// Full polynomial, or quadratic plus pure higher powers
    /// (default full, pure-power for benchmark).
    #[arg(long, value_enum)]
    g_kind: Option<KindArg>,
    /// How leading directions are read off the candidate matrix.
    #[arg(long, value_enum, default_value = "whitened")]
    eigenform: EigenformArg,
    /// Work with centered but unscaled predictors.
    #[arg(long)]
    no_standardize: bool,
    /// Divide the response by its standard deviation before building kernels.
    #[arg(long)]
    scale_response: bool,
    /// Nelder-Mead iteration cap (default 500 per angle).
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long, default_value_t = 1e-8)]
    f_tol: f64,
    #[arg(long, default_value_t = 1e-6)]
    x_tol: f64,
    /// Extra jittered optimizer starts.
    #[arg(long, default_value_t = 4)]
    restarts: usize,
    /// Standard deviation of the start jitter (radians).
    #[arg(long, default_value_t = 1.0)]
    jitter: f64,
    /// Seed of the start jitter.
    #[arg(long, default_value_t = 0)]
    optim_seed: u64,
}

impl ModelArgs {
    fn config(&self, method: Method, d: usize, g_default: (usize, GBasisKind)) -> FitConfig {
        FitConfig {
            method,
            d,
            kernel: KernelParams {
                slices: self.slices,
                bandwidth: self.bandwidth,
                h_degree: self.h_degree,
            },
            g_degree: self.g_degree.unwrap_or(g_default.0),
            g_kind: match self.g_kind {
                Some(KindArg::Full) => GBasisKind::Full,
                Some(KindArg::PurePower) => GBasisKind::PurePower,
                None => g_default.1,
            },
            eigenform: match self.eigenform {
                EigenformArg::Whitened => Eigenform::Whitened,
                EigenformArg::Sandwich => Eigenform::Sandwich,
            },
            standardize: !self.no_standardize,
            scale_response: self.scale_response,
            optim: OptimOptions {
                max_iter: self.max_iter,
                f_tol: self.f_tol,
                x_tol: self.x_tol,
                restarts: self.restarts,
                jitter: self.jitter,
                seed: self.optim_seed,
                ..OptimOptions::default()
            },
        }
    }
}

#[derive(Args)]
struct OutputArgs {
    /// Text report path (printed to stdout when absent).
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// JSON sidecar path (defaults to the report path with a .json extension).
    #[arg(long)]
    json: Option<PathBuf>,
}

impl OutputArgs {
    fn write(&self, text: &str, json: &serde_json::Value) -> cssdr::Result<()> {
        match &self.output {
            Some(path) => write_file(path, text)?,
            None => print!("{text}"),
        }
        let sidecar = self
            .json
            .clone()
            .or_else(|| self.output.as_ref().map(|p| p.with_extension("json")));
        if let Some(path) = sidecar {
            write_file(&path, &report::pretty(json))?;
        }
        Ok(())
    }
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    input: InputArgs,
    /// ols, sir, kir, pir or their css- variants.
    #[arg(long, default_value = "css-pir", value_parser = parse_method)]
    method: Method,
    /// Dimension of the estimated space.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    d: u64,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Args)]
struct BenchArgs {
    /// Models to run (I, II, III), comma separated.
    #[arg(long, default_value = "I", value_delimiter = ',', value_parser = parse_model)]
    model: Vec<Model>,
    /// Predictor dimensions, comma separated.
    #[arg(long = "p", default_value = "4", value_delimiter = ',')]
    dims: Vec<usize>,
    #[arg(long, default_value_t = 100)]
    n: usize,
    /// Replicates per cell.
    #[arg(long, default_value_t = 100)]
    reps: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Methods, comma separated.
    #[arg(
        long,
        value_delimiter = ',',
        value_parser = parse_method,
        default_value = "pir,css-pir,sir,css-sir,kir,css-kir"
    )]
    methods: Vec<Method>,
    /// Noise of the X3 and X4 columns.
    #[arg(long, value_enum, default_value = "independent")]
    noise: NoiseArg,
    /// Dimension of the estimated space.
    #[arg(long, default_value_t = 2)]
    d: usize,
    /// Worker threads for replicates.
    #[arg(long, default_value_t = 1)]
    threads: usize,
    #[command(flatten)]
    model_args: ModelArgs,
    /// Directory for benchmark.txt, benchmark.csv and benchmark.json.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct SimArgs {
    #[arg(long, value_parser = parse_model)]
    model: Model,
    #[arg(long = "p")]
    p: usize,
    #[arg(long)]
    n: usize,
    /// Seed (default 7).
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value = "independent")]
    noise: NoiseArg,
    /// Output CSV path.
    output: PathBuf,
}

#[derive(Args)]
struct AsymArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    d: u64,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    out: OutputArgs,
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse::<Method>().map_err(|e| e.to_string())
}

fn parse_model(s: &str) -> Result<Model, String> {
    s.parse::<Model>().map_err(|e| e.to_string())
}

fn write_file(path: &Path, text: &str) -> cssdr::Result<()> {
    std::fs::write(path, text).map_err(|source| cssdr::CssError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn log(msg: impl AsRef<str>) {
    eprintln!("cssdr: {}", msg.as_ref());
}

fn cmd_fit(args: &FitArgs) -> cssdr::Result<()> {
    let ds = args.input.load()?;
    let cfg = args.model.config(args.method, args.d as usize, FIT_G);
    log(format!(
        "{} rows, {} predictors, method {}",
        ds.n(),
        ds.p(),
        cfg.method
    ));
    let rep = fit(&ds, &cfg)?;
    if let Some(sizes) = &rep.slice_sizes {
        log(format!("{} slices of sizes {:?}", sizes.len(), sizes));
    }
    for w in &rep.warnings {
        log(format!("warning: {w}"));
    }
    args.out.write(
        &report::fit_text(&ds, &rep),
        &report::fit_json(&ds, &cfg, &rep),
    )
}

fn cmd_benchmark(args: &BenchArgs) -> cssdr::Result<()> {
    let sim = SimConfig::default().fit;
    let fit_cfg = args
        .model_args
        .config(Method::CssPir, args.d, (sim.g_degree, sim.g_kind));
    let mut results = Vec::new();
    let mut configs = Vec::new();
    for &model in &args.model {
        for &p in &args.dims {
            let cfg = SimConfig {
                model,
                p,
                n: args.n,
                reps: args.reps,
                seed: args.seed,
                noise: args.noise.into(),
                methods: args.methods.clone(),
                fit: fit_cfg.clone(),
                threads: args.threads,
            };
            log(format!(
                "model {model}, p = {p}, n = {}, {} replicates, seed {}",
                args.n, args.reps, args.seed
            ));
            results.push(run_benchmark(&cfg)?);
            configs.push(cfg);
        }
    }
    let table = cssdr::evaluation::bench_table(&results);
    print!("{table}");
    std::fs::create_dir_all(&args.out_dir).map_err(|source| cssdr::CssError::Io {
        path: args.out_dir.clone(),
        source,
    })?;
    write_file(&args.out_dir.join("benchmark.txt"), &table)?;
    write_file(
        &args.out_dir.join("benchmark.csv"),
        &cssdr::evaluation::bench_csv(&results),
    )?;
    let json = serde_json::json!({ "configs": configs, "results": results });
    write_file(&args.out_dir.join("benchmark.json"), &report::pretty(&json))
}

fn cmd_simulate(args: &SimArgs) -> cssdr::Result<()> {
    let seed = match args.seed {
        Some(s) => s,
        None => {
            log(format!("no seed given, using {DEFAULT_SIM_SEED}"));
            DEFAULT_SIM_SEED
        }
    };
    let ds = simulate(args.model, args.p, args.n, seed, args.noise.into())?;
    write_csv(&ds, &args.output)?;
    log(format!(
        "wrote {} rows of model {} with {} predictors to {}",
        args.n,
        args.model,
        args.p,
        args.output.display()
    ));
    Ok(())
}

fn cmd_asymptotics(args: &AsymArgs) -> cssdr::Result<()> {
    let ds = args.input.load()?;
    let cfg = args.model.config(Method::CssPir, args.d as usize, FIT_G);
    let rep = fit(&ds, &cfg)?;
    let work = working_data(&ds, &cfg)?;
    let asym = report::Asymptotics::compute(&work, &rep, &cfg)?;
    for w in &rep.warnings {
        log(format!("warning: {w}"));
    }
    args.out.write(
        &report::asym_text(&rep, &asym),
        &report::asym_json(&ds, &cfg, &rep, &asym),
    )
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match &cli.command {
        Command::Fit(a) => cmd_fit(a),
        Command::Benchmark(a) => cmd_benchmark(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Asymptotics(a) => cmd_asymptotics(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
