use clap::{Args, Parser, Subcommand, ValueEnum};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use vspline::geo::synthetic::{self, BoustrophedonOptions};
use vspline::geo::{ColumnMap, DedupePolicy, ParseOptions};
use vspline::io;
use vspline::{
    cv_oracle, cv_score, fit, interval_lambdas, log_grid, objective_terms, parse_track, project,
    reconstruct_track, run_benchmark, select_parameters, simulate, BenchmarkConfig, Method,
    PenaltyFamily, PenaltySpec, Sampling, SearchSpec, TestSignal, VsplineError,
};

/// `println!` that exits quietly when stdout is closed early.
macro_rules! say {
    ($($arg:tt)*) => {
        emit(format_args!($($arg)*))
    };
}

fn emit(args: std::fmt::Arguments) {
    if let Err(e) = writeln!(std::io::stdout().lock(), "{args}") {
        if e.kind() == std::io::ErrorKind::BrokenPipe {
            std::process::exit(0);
        }
        eprintln!("error: writing to stdout: {e}");
        std::process::exit(1);
    }
}

/// Trajectory reconstruction with velocity-aware smoothing splines.
#[derive(Parser)]
#[command(name = "vspline", version)]
struct Cli {
    /// Seed for every random draw.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads for grid searches and benchmarks.
    #[arg(long, global = true, value_parser = clap::value_parser!(u16).range(1..))]
    jobs: Option<u16>,
    /// Directory for output files.
    #[arg(long, global = true, default_value = ".")]
    output_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit with fixed parameters.
    Fit(FitArgs),
    /// Select parameters by leave-one-out cross-validation.
    Cv(CvArgs),
    /// Generate a test-signal trajectory or a synthetic GPS track.
    Simulate(SimulateArgs),
    /// Compare reconstruction methods on simulated test signals.
    Benchmark(BenchmarkArgs),
    /// Reconstruct a GPS track in two dimensions.
    Reconstruct(ReconstructArgs),
    /// Evaluate a saved spline.
    Eval(EvalArgs),
}

#[derive(Args)]
struct PenaltyArgs {
    /// constant, adaptive, boom_constant or boom_adaptive.
    #[arg(long, value_parser = parse_family, conflicts_with = "penalty")]
    family: Option<PenaltyFamily>,
    /// Penalty parameters (λ₀, η, or down/up pairs), comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, conflicts_with = "penalty")]
    params: Vec<f64>,
    /// Penalty as JSON, e.g. {"family":"adaptive","eta":0.1}.
    #[arg(long)]
    penalty: Option<String>,
}

#[derive(Args)]
struct FitArgs {
    /// Observation CSV: t,y,v or t,y_<s>,v_<s>,... with optional boom.
    #[arg(long, short)]
    input: PathBuf,
    #[arg(long)]
    gamma: f64,
    #[command(flatten)]
    penalty: PenaltyArgs,
    /// Number of sampled rows in samples.csv.
    #[arg(long, default_value_t = 200)]
    resolution: usize,
}

#[derive(Args)]
struct GridArgs {
    /// γ candidates: `lo:hi:count` in log10 units, or a comma list.
    #[arg(long, default_value = "-3:3:13", allow_hyphen_values = true)]
    gamma_grid: String,
    /// Penalty parameter candidates, same syntax.
    #[arg(long, default_value = "-8:2:21", allow_hyphen_values = true)]
    param_grid: String,
    /// Boom-up candidates for boom families (defaults to --param-grid).
    #[arg(long, allow_hyphen_values = true)]
    param2_grid: Option<String>,
    /// Skip the Nelder–Mead polish of the best grid point.
    #[arg(long)]
    no_refine: bool,
}

#[derive(Args)]
struct CvArgs {
    #[arg(long, short)]
    input: PathBuf,
    #[arg(long, value_parser = parse_family, default_value = "adaptive")]
    family: PenaltyFamily,
    #[command(flatten)]
    grid: GridArgs,
    /// Cross-check the closed-form score against explicit refits.
    #[arg(long)]
    oracle: bool,
    /// Fit with the selected parameters and write the spline.
    #[arg(long)]
    refit: bool,
    #[arg(long, default_value_t = 200)]
    resolution: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum TrackKind {
    Straight,
    Boustrophedon,
}

#[derive(Args)]
#[command(group = clap::ArgGroup::new("source").required(true).args(["signal", "track"]))]
struct SimulateArgs {
    /// Blocks, Bumps, HeaviSine or Doppler.
    #[arg(long, value_parser = parse_signal)]
    signal: Option<TestSignal>,
    /// Synthetic GPS track instead of a test signal.
    #[arg(long, value_enum)]
    track: Option<TrackKind>,
    #[arg(long, default_value_t = 1024)]
    n: usize,
    /// Signal-to-noise ratio; `inf` disables noise.
    #[arg(long, default_value_t = 7.0)]
    snr: f64,
    /// full, regular, or irregular:<k>.
    #[arg(long, value_parser = parse_sampling, default_value = "full")]
    sampling: Sampling,
}

#[derive(Args)]
struct BenchmarkArgs {
    #[arg(long, value_delimiter = ',', value_parser = parse_signal,
          default_value = "Blocks,Bumps,HeaviSine,Doppler")]
    signals: Vec<TestSignal>,
    #[arg(long, value_delimiter = ',', default_value = "7,3")]
    snr: Vec<f64>,
    #[arg(long, value_delimiter = ',', value_parser = parse_method,
          default_value = "adaptive,gamma0,nonadaptive")]
    methods: Vec<Method>,
    /// Number of seeds, starting at --seed.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    seeds: u64,
    #[arg(long, default_value_t = 1024)]
    n: usize,
    #[arg(long, value_parser = parse_sampling, default_value = "full")]
    sampling: Sampling,
    #[command(flatten)]
    grid: GridArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum Dedupe {
    Reject,
    Merge,
}

#[derive(Args)]
struct ReconstructArgs {
    /// GPS CSV: timestamp,lon,lat,speed,bearing[,boom].
    #[arg(long, short)]
    input: PathBuf,
    #[arg(long, value_parser = parse_family, default_value = "adaptive")]
    family: PenaltyFamily,
    #[command(flatten)]
    grid: GridArgs,
    /// Number of sampled points along the fitted track.
    #[arg(long, default_value_t = 1000)]
    resolution: usize,
    #[arg(long, value_enum, default_value = "reject")]
    dedupe: Dedupe,
    /// Header overrides, e.g. `timestamp=time,bearing=heading`.
    #[arg(long)]
    columns: Option<String>,
}

#[derive(Args)]
#[command(group = clap::ArgGroup::new("points").required(true).args(["at", "knots", "resolution"]))]
struct EvalArgs {
    /// Spline JSON written by fit or cv.
    #[arg(long)]
    spline: PathBuf,
    /// Evaluation times, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    at: Vec<f64>,
    /// Evaluate at the knots.
    #[arg(long)]
    knots: bool,
    /// Evaluate at this many equally spaced times.
    #[arg(long)]
    resolution: Option<usize>,
    /// Derivative order, 0 to 2.
    #[arg(long, default_value_t = 0, value_parser = clap::value_parser!(u8).range(0..=2))]
    order: u8,
}

fn parse_family(s: &str) -> Result<PenaltyFamily, String> {
    s.parse().map_err(|e: VsplineError| e.to_string())
}

fn parse_signal(s: &str) -> Result<TestSignal, String> {
    s.parse().map_err(|e: VsplineError| e.to_string())
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: VsplineError| e.to_string())
}

fn parse_sampling(s: &str) -> Result<Sampling, String> {
    match s {
        "full" => Ok(Sampling::Full),
        "regular" => Ok(Sampling::Regular),
        _ => s
            .strip_prefix("irregular:")
            .and_then(|k| k.parse().ok())
            .map(|k| Sampling::Irregular { k })
            .ok_or_else(|| format!("expected full, regular or irregular:<k>, got '{s}'")),
    }
}

enum CliError {
    /// Bad arguments or input files that do not match their schema.
    Usage(String),
    /// The computation itself failed.
    Compute(String),
}

type CliResult<T> = Result<T, CliError>;

fn compute(e: VsplineError) -> CliError {
    CliError::Compute(e.to_string())
}

fn usage_in(path: &Path) -> impl Fn(VsplineError) -> CliError + '_ {
    move |e| CliError::Usage(format!("{}: {e}", path.display()))
}

fn read(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))
}

struct Output<'a> {
    dir: &'a Path,
}

impl Output<'_> {
    fn write(&self, name: &str, contents: &str) -> CliResult<()> {
        let path = self.dir.join(name);
        fs::write(&path, contents)
            .map_err(|e| CliError::Compute(format!("cannot write {}: {e}", path.display())))?;
        say!("wrote {}", path.display());
        Ok(())
    }
}

fn parse_grid(spec: &str, name: &str) -> CliResult<Vec<f64>> {
    let bad = || CliError::Usage(format!("--{name}: expected lo:hi:count or a comma list, got '{spec}'"));
    let parts: Vec<&str> = spec.split(':').collect();
    let grid = if parts.len() == 3 {
        let lo: f64 = parts[0].trim().parse().map_err(|_| bad())?;
        let hi: f64 = parts[1].trim().parse().map_err(|_| bad())?;
        let count: usize = parts[2].trim().parse().map_err(|_| bad())?;
        if count == 0 || !lo.is_finite() || !hi.is_finite() {
            return Err(bad());
        }
        log_grid(lo, hi, count)
    } else if parts.len() == 1 {
        spec.split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| bad())?
    } else {
        return Err(bad());
    };
    Ok(grid)
}

fn search_spec(family: PenaltyFamily, grid: &GridArgs) -> CliResult<SearchSpec> {
    let mut spec = SearchSpec::with_defaults(family);
    spec.gamma_grid = parse_grid(&grid.gamma_grid, "gamma-grid")?;
    spec.param_grid = parse_grid(&grid.param_grid, "param-grid")?;
    spec.param_up_grid = grid
        .param2_grid
        .as_deref()
        .map(|g| parse_grid(g, "param2-grid"))
        .transpose()?;
    spec.refine = !grid.no_refine;
    spec.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(spec)
}

fn penalty_spec(args: &PenaltyArgs) -> CliResult<PenaltySpec> {
    let spec = match &args.penalty {
        Some(json) => PenaltySpec::from_json(json),
        None => args
            .family
            .unwrap_or(PenaltyFamily::Constant)
            .with_parameters(&args.params),
    };
    spec.map_err(|e| CliError::Usage(format!("penalty: {e}")))
}

fn require_boom(family: PenaltyFamily, boom: Option<&[bool]>, path: &Path) -> CliResult<()> {
    if family.is_boom() && boom.is_none() {
        return Err(CliError::Usage(format!(
            "--family {family} needs a boom column, and {} has none",
            path.display()
        )));
    }
    Ok(())
}

fn labels_for(labels: &[String], dims: usize) -> Vec<String> {
    if labels.is_empty() {
        io::default_labels(dims)
    } else {
        labels.to_vec()
    }
}

fn cmd_fit(args: &FitArgs, out: &Output) -> CliResult<()> {
    let input = io::parse_observations(&read(&args.input)?).map_err(usage_in(&args.input))?;
    let spec = penalty_spec(&args.penalty)?;
    require_boom(spec.family(), input.boom.as_deref(), &args.input)?;
    let lambdas = interval_lambdas(&spec, &input.obs, input.boom.as_deref()).map_err(compute)?;
    let spline = fit(&input.obs, args.gamma, &lambdas, None).map_err(compute)?;
    let terms = objective_terms(&input.obs, &spline, args.gamma, &lambdas).map_err(compute)?;
    say!("J = {:?}", terms.total);
    say!("  position residuals: {:?}", terms.position);
    say!("  velocity residuals: {:?}", terms.velocity);
    say!("  curvature penalty:  {:?}", terms.penalty);
    let rows = spline.sample(args.resolution).map_err(compute)?;
    out.write("spline.json", &io::spline_to_json(&spline))?;
    out.write(
        "samples.csv",
        &io::samples_csv(&rows, &labels_for(&input.labels, spline.dims())),
    )?;
    out.write("penalty.csv", &io::penalty_csv(input.obs.grid(), &lambdas))
}

fn cmd_cv(args: &CvArgs, out: &Output) -> CliResult<()> {
    let input = io::parse_observations(&read(&args.input)?).map_err(usage_in(&args.input))?;
    require_boom(args.family, input.boom.as_deref(), &args.input)?;
    let spec = search_spec(args.family, &args.grid)?;
    let boom = input.boom.as_deref();
    let selection = select_parameters(&input.obs, &spec, boom).map_err(compute)?;
    say!(
        "best: gamma = {:?}, {} = {:?}, CV = {:?}",
        selection.gamma,
        selection.penalty.family(),
        selection.penalty.parameters(),
        selection.score
    );
    out.write("cv_trace.csv", &io::trace_csv(&selection.trace))?;
    out.write("best.json", &io::selection_json(&selection))?;

    let lambdas = interval_lambdas(&selection.penalty, &input.obs, boom).map_err(compute)?;
    if args.oracle {
        let fast = cv_score(&input.obs, selection.gamma, &lambdas).map_err(compute)?;
        let slow = cv_oracle(&input.obs, selection.gamma, &lambdas).map_err(compute)?;
        let gap = fast
            .per_point_terms
            .iter()
            .zip(&slow.per_point_terms)
            .filter(|(a, _)| !a.is_nan())
            .map(|(a, b)| (a - b).abs() / b.abs().max(f64::MIN_POSITIVE))
            .fold(0.0, f64::max);
        say!("oracle: closed form {:?} vs refits {:?}", fast.value, slow.value);
        say!("oracle: max relative per-point gap {gap:e}");
        if lambdas.as_slice().windows(2).any(|w| w[0] != w[1]) {
            say!(
                "oracle: penalties vary by interval; each refit merges the two intervals around \
                 the deleted knot under the left penalty, so the gap need not vanish"
            );
        }
    }
    if args.refit {
        let spline = fit(&input.obs, selection.gamma, &lambdas, None).map_err(compute)?;
        let rows = spline.sample(args.resolution).map_err(compute)?;
        out.write("spline.json", &io::spline_to_json(&spline))?;
        out.write(
            "samples.csv",
            &io::samples_csv(&rows, &labels_for(&input.labels, spline.dims())),
        )?;
        out.write("penalty.csv", &io::penalty_csv(input.obs.grid(), &lambdas))?;
    }
    Ok(())
}

fn cmd_simulate(args: &SimulateArgs, seed: u64, out: &Output) -> CliResult<()> {
    if let Some(signal) = args.signal {
        let sim = simulate(signal, args.n, args.snr, seed, args.sampling)
            .map_err(|e| CliError::Usage(e.to_string()))?;
        return out.write("simulation.csv", &io::simulation_csv(&sim));
    }
    let track = match args.track.expect("clap enforces a source") {
        TrackKind::Straight => synthetic::straight(args.n.max(2), 2.0, 45.0, 1.0),
        TrackKind::Boustrophedon => synthetic::boustrophedon(&BoustrophedonOptions {
            seed,
            ..Default::default()
        })
        .map_err(compute)?,
    };
    out.write("track.csv", &io::gps_csv(&track.records))
}

fn cmd_benchmark(args: &BenchmarkArgs, seed: u64, out: &Output) -> CliResult<()> {
    let seeds: Vec<u64> = (0..args.seeds).map(|k| seed.wrapping_add(k)).collect();
    let mut config = BenchmarkConfig::new(args.signals.clone(), args.snr.clone(), args.methods.clone(), seeds);
    config.n = args.n;
    config.sampling = args.sampling;
    config.search = search_spec(PenaltyFamily::Adaptive, &args.grid)?;
    let reports = run_benchmark(&config).map_err(|e| CliError::Usage(e.to_string()))?;
    for r in &reports {
        match &r.outcome {
            Ok((tmse, rsnr)) => say!(
                "{} snr={} {} seed={}: TMSE {tmse:e}, retrieved SNR {rsnr:?}",
                r.signal, r.snr, r.method, r.seed
            ),
            Err(e) => say!("{} snr={} {} seed={}: failed: {e}", r.signal, r.snr, r.method, r.seed),
        }
    }
    out.write("benchmark.csv", &io::benchmark_csv(&reports))
}

fn cmd_reconstruct(args: &ReconstructArgs, out: &Output) -> CliResult<()> {
    let columns = match &args.columns {
        Some(c) => ColumnMap::parse_overrides(c).map_err(|e| CliError::Usage(e.to_string()))?,
        None => ColumnMap::default(),
    };
    let options = ParseOptions {
        dedupe: match args.dedupe {
            Dedupe::Reject => DedupePolicy::Reject,
            Dedupe::Merge => DedupePolicy::Merge,
        },
        columns,
    };
    let records = parse_track(&read(&args.input)?, &options).map_err(usage_in(&args.input))?;
    let track = project(&records, None).map_err(usage_in(&args.input))?;
    for w in &track.warnings {
        eprintln!("warning: {w}");
    }
    require_boom(args.family, track.boom.as_deref(), &args.input)?;
    let spec = search_spec(args.family, &args.grid)?;
    let result = reconstruct_track(&track, &spec).map_err(compute)?;
    say!(
        "best: gamma = {:?}, {} = {:?}, CV = {:?}",
        result.selection.gamma,
        result.selection.penalty.family(),
        result.selection.penalty.parameters(),
        result.selection.score
    );
    let rows = result.spline.sample(args.resolution).map_err(compute)?;
    out.write("track.geojson", &io::track_geojson(&rows, track.reference).map_err(compute)?)?;
    out.write("track_samples.csv", &io::track_csv(&rows).map_err(compute)?)?;
    out.write("penalty.csv", &io::penalty_csv(track.obs.grid(), &result.lambdas))?;
    out.write("selection.json", &io::selection_json(&result.selection))?;
    out.write("cv_trace.csv", &io::trace_csv(&result.selection.trace))?;
    out.write("spline.json", &io::spline_to_json(&result.spline))
}

fn cmd_eval(args: &EvalArgs) -> CliResult<()> {
    let spline = io::spline_from_json(&read(&args.spline)?).map_err(usage_in(&args.spline))?;
    let times: Vec<f64> = if args.knots {
        spline.grid().times().to_vec()
    } else if let Some(m) = args.resolution {
        spline.sample(m).map_err(compute)?.iter().map(|r| r.t).collect()
    } else {
        args.at.clone()
    };
    let prefix = ["f", "df", "d2f"][args.order as usize];
    let labels = io::default_labels(spline.dims());
    let mut header = vec!["t".to_string()];
    if labels.is_empty() {
        header.push(prefix.to_string());
    } else {
        header.extend(labels.iter().map(|l| format!("{prefix}_{l}")));
    }
    say!("{}", header.join(","));
    for t in times {
        if !t.is_finite() {
            return Err(CliError::Usage(format!("evaluation time {t} is not finite")));
        }
        let values = spline.eval(t, args.order).map_err(compute)?;
        let fields: Vec<String> = std::iter::once(t).chain(values).map(io::num).collect();
        say!("{}", fields.join(","));
    }
    Ok(())
}

fn run(cli: &Cli) -> CliResult<()> {
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs as usize)
            .build_global()
            .map_err(|e| CliError::Compute(e.to_string()))?;
    }
    let needs_dir = !matches!(cli.command, Command::Eval(_));
    if needs_dir {
        fs::create_dir_all(&cli.output_dir).map_err(|e| {
            CliError::Usage(format!("cannot create {}: {e}", cli.output_dir.display()))
        })?;
    }
    let out = Output { dir: &cli.output_dir };
    match &cli.command {
        Command::Fit(a) => cmd_fit(a, &out),
        Command::Cv(a) => cmd_cv(a, &out),
        Command::Simulate(a) => cmd_simulate(a, cli.seed, &out),
        Command::Benchmark(a) => cmd_benchmark(a, cli.seed, &out),
        Command::Reconstruct(a) => cmd_reconstruct(a, &out),
        Command::Eval(a) => cmd_eval(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Compute(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
