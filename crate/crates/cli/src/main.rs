mod config;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use pnmol::bench::{self, SweepConfig};
use pnmol::discretize::{self, Grid};
use pnmol::kernels::{DiffOperator, Kernel, KernelFamily, DEFAULT_INPUT_SCALE};
use pnmol::problems::{self, PdeProblem};
use pnmol::solver::{self, SolverConfig, SpatialPrior, StencilChoice};
use pnmol::{Execution, PnmolError};
use thiserror::Error;

use config::ConfigFile;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Pnmol(#[from] PnmolError),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Pnmol(e) if e.is_numerical() => 2,
            _ => 1,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "pnmol", version, about = "Probabilistic method of lines for 1-D reaction-diffusion problems")]
struct Cli {
    /// Flat key = value file; command-line flags override its entries.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write the differentiation matrix D and error covariance E as CSV.
    Discretize(DiscretizeArgs),
    /// Solve one problem and write the posterior mean and std per (t, x).
    Solve(SolveArgs),
    /// Sweep over variants and resolutions and write metrics.
    Bench(BenchArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum KernelName {
    Se,
    Poly,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum OperatorName {
    Laplacian,
    Identity,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum PriorName {
    Identity,
    Kernel,
}

fn parse_enum<T: ValueEnum>(cfg: &ConfigFile, flag: Option<T>, key: &str) -> Result<Option<T>, CliError> {
    if flag.is_some() {
        return Ok(flag);
    }
    cfg.raw(key)
        .map(|v| T::from_str(v, true).map_err(|_| CliError::Usage(format!("config: invalid value '{v}' for {key}"))))
        .transpose()
}

#[derive(Args, Debug)]
struct KernelArgs {
    #[arg(long, value_enum)]
    kernel: Option<KernelName>,
    /// Input scale r of the squared-exponential kernel.
    #[arg(long)]
    input_scale: Option<f64>,
    /// Degree of the polynomial kernel.
    #[arg(long)]
    degree: Option<u32>,
}

impl KernelArgs {
    fn build(&self, cfg: &ConfigFile, dim: usize) -> Result<Kernel, CliError> {
        let kind = parse_enum(cfg, self.kernel, "kernel")?.unwrap_or(KernelName::Se);
        Ok(match kind {
            KernelName::Se => Kernel::squared_exponential(cfg.pick_or(self.input_scale, "input-scale", DEFAULT_INPUT_SCALE)?, dim)?,
            KernelName::Poly => Kernel::polynomial(cfg.pick_or(self.degree, "degree", 2)?, dim)?,
        })
    }
}

#[derive(Args, Debug)]
struct DiscretizeArgs {
    #[command(flatten)]
    kernel: KernelArgs,
    #[arg(long, value_enum)]
    operator: Option<OperatorName>,
    /// Grid points per axis on the unit interval or square.
    #[arg(long)]
    grid_n: Option<usize>,
    /// Spatial dimension (1 or 2).
    #[arg(long)]
    dim: Option<usize>,
    /// Stencil radius; omit together with --global for the dense approximation.
    #[arg(long)]
    radius: Option<usize>,
    #[arg(long)]
    global: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ModelArgs {
    /// heat, lotka-volterra (lv) or sir.
    #[arg(long)]
    problem: Option<String>,
    /// Problem parameter override, e.g. --set alpha=0.5 (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    params: Vec<String>,
    #[command(flatten)]
    kernel: KernelArgs,
    #[arg(long)]
    nu: Option<usize>,
    #[arg(long)]
    radius: Option<usize>,
    /// Use the dense (global) spatial approximation.
    #[arg(long)]
    global: bool,
    #[arg(long, value_enum)]
    spatial_prior: Option<PriorName>,
    #[arg(long)]
    prior_scale: Option<f64>,
    #[arg(long)]
    error_scale: Option<f64>,
    /// Report unscaled uncertainties (γ² = 1).
    #[arg(long)]
    no_calibrate: bool,
}

impl ModelArgs {
    fn problem(&self, cfg: &ConfigFile) -> Result<PdeProblem, CliError> {
        let name = cfg.pick(self.problem.clone(), "problem")?.unwrap_or_else(|| "heat".into());
        let mut p = problems::by_name(&name)?;
        let mut overrides = cfg.params();
        for kv in &self.params {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got '{kv}'")))?;
            overrides.push((k.trim().to_string(), v.trim().to_string()));
        }
        for (k, v) in overrides {
            p.set(&k, &v)?;
        }
        Ok(p)
    }

    fn base(&self, cfg: &ConfigFile) -> Result<SolverConfig, CliError> {
        let defaults = SolverConfig::default();
        let stencil = if cfg.switch(self.global, "global")? {
            StencilChoice::Global
        } else {
            StencilChoice::Local(cfg.pick_or(self.radius, "radius", discretize::DEFAULT_RADIUS)?)
        };
        let spatial_prior = match parse_enum(cfg, self.spatial_prior, "spatial-prior")? {
            Some(PriorName::Kernel) => SpatialPrior::Kernel,
            _ => SpatialPrior::Identity,
        };
        Ok(SolverConfig {
            kernel: self.kernel.build(cfg, 1)?,
            nu: cfg.pick_or(self.nu, "nu", defaults.nu)?,
            stencil,
            calibrate: !cfg.switch(self.no_calibrate, "no-calibrate")?,
            spatial_prior,
            prior_scale: cfg.pick_or(self.prior_scale, "prior-scale", defaults.prior_scale)?,
            error_scale: cfg.pick_or(self.error_scale, "error-scale", defaults.error_scale)?,
            ..defaults
        })
    }
}

#[derive(Args, Debug)]
struct SolveArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// latent, white or mol.
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    dx: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    /// Solution CSV; metadata goes to `<out>.meta`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Comma-separated variants.
    #[arg(long, value_delimiter = ',')]
    variants: Vec<String>,
    /// Comma-separated mesh widths.
    #[arg(long = "dx", value_delimiter = ',')]
    dxs: Vec<String>,
    /// Comma-separated step sizes.
    #[arg(long = "dt", value_delimiter = ',')]
    dts: Vec<String>,
    #[arg(long)]
    ref_refine: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Record zero runtimes so that repeated runs give identical files.
    #[arg(long)]
    untimed: bool,
    /// Run configurations one after another instead of in parallel.
    #[arg(long)]
    sequential: bool,
    /// Metrics CSV; per-step χ² curves go to `--curves` or `<out stem>.chi2.csv`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    curves: Option<PathBuf>,
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Usage(format!("cannot create {}: {e}", path.display())))
}

fn required(path: Option<PathBuf>, cfg: &ConfigFile, key: &str) -> Result<PathBuf, CliError> {
    cfg.pick(path, key)?.ok_or_else(|| CliError::Usage(format!("--{key} is required")))
}

const MAX_DISCRETIZE_POINTS: usize = 4096;

fn run_discretize(args: DiscretizeArgs, cfg: &ConfigFile) -> Result<(), CliError> {
    let dim = cfg.pick_or(args.dim, "dim", 1)?;
    let n = cfg.pick_or(args.grid_n, "grid-n", 25)?;
    if n < 2 {
        return Err(CliError::Usage("--grid-n must be at least 2".into()));
    }
    if !(1..=2).contains(&dim) {
        return Err(CliError::Usage(format!("--dim must be 1 or 2, got {dim}")));
    }
    // D and E are stored densely
    if n.pow(dim as u32) > MAX_DISCRETIZE_POINTS {
        return Err(CliError::Usage(format!("grid exceeds {MAX_DISCRETIZE_POINTS} points")));
    }
    let grid = Grid::uniform_box(&vec![0.0; dim], &vec![1.0; dim], &vec![n; dim])?;
    let kernel = args.kernel.build(cfg, dim)?;
    let op = match parse_enum(cfg, args.operator, "operator")?.unwrap_or(OperatorName::Laplacian) {
        OperatorName::Laplacian => DiffOperator::Laplacian,
        OperatorName::Identity => DiffOperator::Identity,
    };
    let approx = if cfg.switch(args.global, "global")? {
        discretize::collocate_global(&kernel, &op, &grid)?
    } else {
        discretize::collocate_local(&kernel, &op, &grid, cfg.pick_or(args.radius, "radius", discretize::DEFAULT_RADIUS)?)?
    };
    let out = required(args.out, cfg, "out")?;
    approx.write_csv(create(&out)?)?;
    Ok(())
}

fn run_solve(args: SolveArgs, cfg: &ConfigFile) -> Result<(), CliError> {
    let problem = args.model.problem(cfg)?;
    let mut sc = args.model.base(cfg)?;
    let variant = cfg.pick(args.variant, "variant")?.unwrap_or_else(|| "latent".into());
    sc.variant = variant.parse()?;
    sc.dx = cfg.pick_or(args.dx, "dx", sc.dx)?;
    sc.dt = cfg.pick_or(args.dt, "dt", sc.dt)?;
    let out = required(args.out, cfg, "out")?;
    let post = solver::solve(&problem, &sc)?;
    bench::write_solution_csv(&post, create(&out)?)?;

    let mut meta_path = out.into_os_string();
    meta_path.push(".meta");
    let mut meta = create(Path::new(&meta_path))?;
    let kernel = match sc.kernel.family {
        KernelFamily::SquaredExponential { input_scale } => format!("se(input_scale={input_scale})"),
        KernelFamily::Polynomial { degree } => format!("poly(degree={degree})"),
    };
    let lines = [
        ("problem", problem.name.clone()),
        ("variant", sc.variant.to_string()),
        ("dx", bench::format_float(sc.dx)),
        ("dt", bench::format_float(sc.dt)),
        ("nu", sc.nu.to_string()),
        ("kernel", kernel),
        ("grid_points", post.grid.len().to_string()),
        ("time_points", post.len().to_string()),
        ("state_dim", post.layout.dim().to_string()),
        ("gamma_sq", bench::format_float(post.gamma_sq)),
    ];
    for (k, v) in lines {
        writeln!(meta, "{k} = {v}").map_err(PnmolError::from)?;
    }
    meta.flush().map_err(PnmolError::from)?;
    Ok(())
}

fn parse_list<T: std::str::FromStr>(values: Vec<String>, key: &str) -> Result<Vec<T>, CliError> {
    values
        .iter()
        .map(|v| v.parse::<T>().map_err(|_| CliError::Usage(format!("--{key}: invalid value '{v}'"))))
        .collect()
}

fn run_bench(args: BenchArgs, cfg: &ConfigFile) -> Result<(), CliError> {
    let mut sweep = SweepConfig::new(args.model.problem(cfg)?);
    sweep.base = args.model.base(cfg)?;
    sweep.nu = sweep.base.nu;
    if let Some(v) = cfg.list(&args.variants, "variants") {
        sweep.variants = v.iter().map(|s| s.parse()).collect::<Result<_, PnmolError>>()?;
    }
    if let Some(v) = cfg.list(&args.dxs, "dx") {
        sweep.dxs = parse_list(v, "dx")?;
    }
    if let Some(v) = cfg.list(&args.dts, "dt") {
        sweep.dts = parse_list(v, "dt")?;
    }
    if sweep.variants.is_empty() || sweep.dxs.is_empty() || sweep.dts.is_empty() {
        return Err(CliError::Usage("variants, dx and dt lists must not be empty".into()));
    }
    sweep.ref_refine = cfg.pick_or(args.ref_refine, "ref-refine", sweep.ref_refine)?;
    if sweep.ref_refine < 2 {
        return Err(CliError::Usage("--ref-refine must be at least 2".into()));
    }
    sweep.seed = cfg.pick_or(args.seed, "seed", 0)?;
    sweep.timed = !cfg.switch(args.untimed, "untimed")?;
    if cfg.switch(args.sequential, "sequential")? {
        sweep.execution = Execution::Sequential;
    }
    let out = required(args.out, cfg, "out")?;
    let curves = match cfg.pick(args.curves, "curves")? {
        Some(p) => p,
        None => out.with_extension("chi2.csv"),
    };

    let rows = bench::sweep(&sweep);
    bench::write_metrics_csv(&rows, create(&out)?)?;
    bench::write_chi2_curves_csv(&rows, create(&curves)?)?;
    let failed = rows.iter().filter(|r| r.error.is_some()).count();
    if failed > 0 {
        eprintln!("warning: {failed} of {} runs failed; see the error column of {}", rows.len(), out.display());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = match &cli.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    match cli.command {
        Command::Discretize(a) => run_discretize(a, &cfg),
        Command::Solve(a) => run_solve(a, &cfg),
        Command::Bench(a) => run_bench(a, &cfg),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
