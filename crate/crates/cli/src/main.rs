//! Command-line driver for the factorization/QFD pipeline.
//!
//! Exit codes: 0 success, 2 parse error, 3 optimizer error, 4 engine abort,
//! 5 I/O error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use dfqfd::circuit::GateCountReport;
use dfqfd::df::{
    factorize_hamiltonian, CdfOptions, DFDecomposition, DecompositionJson, FactorizeMethod,
    StageRecord, ZSolveMethod,
};
use dfqfd::hamiltonian::{fci_oracle, parse_fcidump, validate_eri_symmetry, ActiveSpaceHamiltonian};
use dfqfd::qfd::{run_qfd, QfdConfig, QfdMode, QfdRun};
use dfqfd::sim::NoiseModel;

const EXIT_PARSE: u8 = 2;
const EXIT_OPTIMIZER: u8 = 3;
const EXIT_ENGINE: u8 = 4;
const EXIT_IO: u8 = 5;

#[derive(Parser)]
#[command(name = "dfqfd", version, about = "Double-factorized Hamiltonians and quantum filter diagonalization")]
struct Cli {
    /// Worker threads for matrix-element jobs (env DFQFD_THREADS, default all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Factorize the ERI tensor of an FCIDUMP Hamiltonian.
    Factorize(FactorizeArgs),
    /// Run quantum filter diagonalization.
    Qfd(QfdArgs),
    /// Exact sector diagonalization of an FCIDUMP Hamiltonian.
    Oracle(OracleArgs),
    /// Lowered gate counts of the compiled circuits for a decomposition.
    Gatecount(GatecountArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    Xdf,
    Cdf,
    CdfOneStep,
}

impl From<MethodArg> for FactorizeMethod {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Xdf => FactorizeMethod::Xdf,
            MethodArg::Cdf => FactorizeMethod::Cdf,
            MethodArg::CdfOneStep => FactorizeMethod::CdfOneStep,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ZMethodArg {
    Pinv,
    Cg,
}

#[derive(Args)]
struct FactorizeArgs {
    /// FCIDUMP input path.
    fcidump: PathBuf,
    /// Number of double-factorization layers.
    #[arg(long)]
    ndf: usize,
    #[arg(long, value_enum, default_value = "cdf")]
    method: MethodArg,
    #[arg(long, default_value_t = 100_000)]
    max_epochs: usize,
    #[arg(long, default_value_t = 1e-8)]
    grad_tol: f64,
    #[arg(long, default_value_t = 500)]
    patience: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "pinv")]
    z_method: ZMethodArg,
    /// Decomposition JSON output path.
    #[arg(long, default_value = "decomposition.json")]
    out: PathBuf,
    /// Per-stage diagnostics CSV path.
    #[arg(long, default_value = "diagnostics.csv")]
    diagnostics: PathBuf,
}

#[derive(Args)]
struct QfdArgs {
    /// FCIDUMP input path.
    fcidump: PathBuf,
    /// Reuse a decomposition JSON instead of factorizing inline.
    #[arg(long)]
    decomposition: Option<PathBuf>,
    #[arg(long, default_value_t = 2)]
    ndf: usize,
    #[arg(long, value_enum, default_value = "cdf")]
    method: MethodArg,
    #[arg(long, default_value_t = 2)]
    nqfd: usize,
    /// Time step in inverse Hartree.
    #[arg(long, default_value_t = 0.1)]
    dt: f64,
    #[arg(long, value_enum, default_value = "exact")]
    mode: ModeArg,
    #[arg(long, default_value_t = 8000)]
    shots: u64,
    /// Noise model JSON path ({"p1": .., "p2": .., "readout": ..}).
    #[arg(long)]
    noise: Option<PathBuf>,
    #[arg(long, default_value_t = false)]
    post_select: bool,
    /// Echo samples per matrix element (0 = off).
    #[arg(long, default_value_t = 0)]
    echo: usize,
    #[arg(long, default_value_t = false)]
    exact_propagator: bool,
    /// Overlap eigenvalue threshold override.
    #[arg(long)]
    eps_s: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Parameter sweep, `nqfd=LO..HI` or `ndf=LO..HI` (inclusive).
    #[arg(long)]
    sweep: Option<String>,
    /// Spectrum JSON output path.
    #[arg(long, default_value = "spectrum.json")]
    out: PathBuf,
    /// Sweep table CSV path (written when --sweep is given).
    #[arg(long, default_value = "sweep.csv")]
    csv: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Exact,
    HadamardShots,
}

#[derive(Args)]
struct OracleArgs {
    fcidump: PathBuf,
    /// Alpha electron count (defaults to the FCIDUMP header).
    #[arg(long)]
    n_alpha: Option<usize>,
    /// Beta electron count (defaults to the FCIDUMP header).
    #[arg(long)]
    n_beta: Option<usize>,
    /// Sector dimension cap.
    #[arg(long)]
    cap: Option<usize>,
    #[arg(long, default_value = "eigenvalues.json")]
    out: PathBuf,
}

#[derive(Args)]
struct GatecountArgs {
    /// Decomposition JSON path.
    decomposition: PathBuf,
    #[arg(long, default_value_t = 0.1)]
    dt: f64,
    /// Controlled-step power.
    #[arg(long, default_value_t = 1)]
    power: usize,
    /// Also report counts after the linear-topology SWAP routing pass.
    #[arg(long, default_value_t = false)]
    route_linear: bool,
    #[arg(long, default_value = "gatecounts.json")]
    out: PathBuf,
}

// ---------------------------------------------------------------------------

#[derive(Debug)]
enum CliError {
    Parse(String),
    Optimizer(String),
    Engine(String),
    Io(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Parse(_) => EXIT_PARSE,
            CliError::Optimizer(_) => EXIT_OPTIMIZER,
            CliError::Engine(_) => EXIT_ENGINE,
            CliError::Io(_) => EXIT_IO,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Parse(m) | CliError::Optimizer(m) | CliError::Engine(m) | CliError::Io(m) => m,
        }
    }
}

fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("reading {}: {e}", path.display())))
}

fn write_text(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents)
        .map_err(|e| CliError::Io(format!("writing {}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Io(format!("serializing {}: {e}", path.display())))?;
    text.push('\n');
    write_text(path, &text)
}

fn load_hamiltonian(path: &Path) -> Result<ActiveSpaceHamiltonian, CliError> {
    let text = read_text(path)?;
    parse_fcidump(&text).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))
}

/// Reproducibility record written next to every output file.
#[derive(Serialize)]
struct RunManifest {
    command: String,
    inputs: Vec<String>,
    config: serde_json::Value,
    seed: u64,
    version: String,
    wall_times_s: std::collections::BTreeMap<String, f64>,
}

impl RunManifest {
    fn new(command: &str, inputs: &[&Path], config: serde_json::Value, seed: u64) -> Self {
        Self {
            command: command.to_string(),
            inputs: inputs.iter().map(|p| p.display().to_string()).collect(),
            config,
            seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            wall_times_s: Default::default(),
        }
    }

    fn record(&mut self, phase: &str, start: Instant) {
        self.wall_times_s
            .insert(phase.to_string(), start.elapsed().as_secs_f64());
    }

    fn write_next_to(&self, out: &Path) -> Result<(), CliError> {
        let mut path = out.as_os_str().to_owned();
        path.push(".manifest.json");
        write_json(Path::new(&path), self)
    }
}

// ---------------------------------------------------------------------------

fn cmd_factorize(args: &FactorizeArgs) -> Result<(), CliError> {
    let ham = load_hamiltonian(&args.fcidump)?;
    let report = validate_eri_symmetry(&ham.eri);
    if report.max_violation() > 1e-10 {
        return Err(CliError::Parse(format!(
            "ERI tensor violates 8-fold symmetry by {}",
            report.max_violation()
        )));
    }
    let opts = CdfOptions {
        max_epochs: args.max_epochs,
        grad_tol: args.grad_tol,
        patience: args.patience,
        seed: args.seed,
        z_method: match args.z_method {
            ZMethodArg::Pinv => ZSolveMethod::Pseudoinverse,
            ZMethodArg::Cg => ZSolveMethod::ConjugateGradient,
        },
        one_step: false,
    };
    let mut manifest = RunManifest::new(
        "factorize",
        &[&args.fcidump],
        serde_json::json!({
            "ndf": args.ndf,
            "method": match args.method {
                MethodArg::Xdf => "xdf",
                MethodArg::Cdf => "cdf",
                MethodArg::CdfOneStep => "cdf-one-step",
            },
            "max_epochs": args.max_epochs,
            "grad_tol": args.grad_tol,
            "patience": args.patience,
        }),
        args.seed,
    );
    let start = Instant::now();
    let (decomp, history) = factorize_hamiltonian(&ham, args.ndf, args.method.into(), &opts)
        .map_err(|e| CliError::Optimizer(e.to_string()))?;
    manifest.record("factorize", start);

    write_json(&args.out, &DecompositionJson::from_decomposition(&decomp))?;
    write_text(&args.diagnostics, &diagnostics_csv(args.ndf, &history))?;
    manifest.write_next_to(&args.out)?;
    let last = history.last().expect("at least one stage");
    println!(
        "factorized n_DF={} stages={} objective={:.6e} mad={:.6e}",
        args.ndf,
        history.len(),
        last.objective,
        last.mad
    );
    Ok(())
}

fn diagnostics_csv(n_df: usize, history: &[StageRecord]) -> String {
    let mut out = String::from("n_df,stage,objective,mad\n");
    for rec in history {
        out.push_str(&format!(
            "{},{},{:.16e},{:.16e}\n",
            n_df, rec.stage, rec.objective, rec.mad
        ));
    }
    out
}

fn qfd_config(args: &QfdArgs, noise: Option<NoiseModel>) -> QfdConfig {
    QfdConfig {
        n_qfd: args.nqfd,
        dt: args.dt,
        mode: match args.mode {
            ModeArg::Exact => QfdMode::Exact,
            ModeArg::HadamardShots => QfdMode::HadamardShots,
        },
        shots: args.shots,
        n_echo: args.echo,
        post_select: args.post_select,
        eps_s: args.eps_s,
        exact_propagator: args.exact_propagator,
        noise,
        seed: args.seed,
        references: Vec::new(),
    }
}

#[derive(Serialize)]
struct ReferenceOutput {
    label: String,
    sector: dfqfd::qfd::SectorLabel,
    eigenvalues: Vec<f64>,
    coefficients: Vec<Vec<(f64, f64)>>,
    retained_dim: usize,
    matrices: serde_json::Value,
}

#[derive(Serialize)]
struct QfdOutput {
    n_qfd: usize,
    dt: f64,
    n_df: usize,
    references: Vec<ReferenceOutput>,
    gaps: Option<dfqfd::qfd::Gaps>,
}

fn qfd_output(run: &QfdRun, n_qfd: usize, dt: f64, n_df: usize) -> QfdOutput {
    QfdOutput {
        n_qfd,
        dt,
        n_df,
        references: run
            .per_reference
            .iter()
            .map(|r| ReferenceOutput {
                label: r.reference.label.clone(),
                sector: r.spectrum.sector,
                eigenvalues: r.spectrum.eigenvalues.clone(),
                coefficients: r.spectrum.coefficients.clone(),
                retained_dim: r.spectrum.retained_dim,
                matrices: r.matrices.to_json(),
            })
            .collect(),
        gaps: run.gaps.clone(),
    }
}

fn parse_sweep(spec: &str) -> Result<(String, Vec<usize>), CliError> {
    let (name, range) = spec
        .split_once('=')
        .ok_or_else(|| CliError::Parse(format!("sweep spec `{spec}` is not NAME=LO..HI")))?;
    if name != "nqfd" && name != "ndf" {
        return Err(CliError::Parse(format!("unknown sweep parameter `{name}`")));
    }
    let (lo, hi) = range
        .split_once("..")
        .ok_or_else(|| CliError::Parse(format!("sweep range `{range}` is not LO..HI")))?;
    let lo: usize = lo
        .trim()
        .parse()
        .map_err(|_| CliError::Parse(format!("bad sweep bound `{lo}`")))?;
    let hi: usize = hi
        .trim()
        .parse()
        .map_err(|_| CliError::Parse(format!("bad sweep bound `{hi}`")))?;
    if lo == 0 || hi < lo {
        return Err(CliError::Parse(format!("empty sweep range `{range}`")));
    }
    Ok((name.to_string(), (lo..=hi).collect()))
}

fn factorize_for_qfd(
    ham: &ActiveSpaceHamiltonian,
    args: &QfdArgs,
    n_df: usize,
) -> Result<DFDecomposition, CliError> {
    if let Some(path) = &args.decomposition {
        let text = read_text(path)?;
        let json: DecompositionJson = serde_json::from_str(&text)
            .map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
        return Ok(json.into_decomposition());
    }
    let opts = CdfOptions {
        seed: args.seed,
        ..Default::default()
    };
    factorize_hamiltonian(ham, n_df, args.method.into(), &opts)
        .map(|(d, _)| d)
        .map_err(|e| CliError::Optimizer(e.to_string()))
}

fn cmd_qfd(args: &QfdArgs) -> Result<(), CliError> {
    let ham = load_hamiltonian(&args.fcidump)?;
    let noise = match &args.noise {
        Some(path) => {
            let text = read_text(path)?;
            Some(
                serde_json::from_str::<NoiseModel>(&text)
                    .map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?,
            )
        }
        None => None,
    };
    let mut manifest = RunManifest::new(
        "qfd",
        &[&args.fcidump],
        serde_json::json!({
            "nqfd": args.nqfd,
            "ndf": args.ndf,
            "dt": args.dt,
            "mode": match args.mode { ModeArg::Exact => "exact", ModeArg::HadamardShots => "hadamard-shots" },
            "shots": args.shots,
            "echo": args.echo,
            "post_select": args.post_select,
            "exact_propagator": args.exact_propagator,
            "sweep": args.sweep,
        }),
        args.seed,
    );

    let run_one = |n_df: usize, n_qfd: usize| -> Result<(QfdRun, usize), CliError> {
        let decomp = factorize_for_qfd(&ham, args, n_df)?;
        let mut config = qfd_config(args, noise);
        config.n_qfd = n_qfd;
        let run = run_qfd(&ham, &decomp, &config).map_err(|e| CliError::Engine(e.to_string()))?;
        Ok((run, decomp.n_df()))
    };

    let start = Instant::now();
    match &args.sweep {
        None => {
            let (run, n_df) = run_one(args.ndf, args.nqfd)?;
            manifest.record("qfd", start);
            write_json(&args.out, &qfd_output(&run, args.nqfd, args.dt, n_df))?;
            manifest.write_next_to(&args.out)?;
            if let Some(gaps) = &run.gaps {
                println!(
                    "S0 = {:.10} Ha, dE(S0,T1) = {:?}, dE(S0,S1) = {:?}",
                    gaps.s0, gaps.singlet_triplet, gaps.singlet_singlet
                );
            }
        }
        Some(spec) => {
            let (param, values) = parse_sweep(spec)?;
            let mut rows = String::from("param,value,s0,t1,s1,gap_s0t1,gap_s0s1\n");
            let mut outputs = Vec::new();
            for &v in &values {
                let (n_df, n_qfd) = if param == "ndf" {
                    (v, args.nqfd)
                } else {
                    (args.ndf, v)
                };
                let (run, actual_ndf) = run_one(n_df, n_qfd)?;
                let gaps = run.gaps.clone();
                if let Some(g) = &gaps {
                    let fmt = |x: Option<f64>| {
                        x.map(|v| format!("{v:.12e}")).unwrap_or_default()
                    };
                    rows.push_str(&format!(
                        "{},{},{:.12e},{},{},{},{}\n",
                        param,
                        v,
                        g.s0,
                        fmt(g.t1),
                        fmt(g.s1),
                        fmt(g.singlet_triplet),
                        fmt(g.singlet_singlet)
                    ));
                }
                outputs.push(qfd_output(&run, n_qfd, args.dt, actual_ndf));
            }
            manifest.record("qfd-sweep", start);
            write_json(&args.out, &outputs)?;
            write_text(&args.csv, &rows)?;
            manifest.write_next_to(&args.out)?;
            println!("swept {param} over {} values", values.len());
        }
    }
    Ok(())
}

fn cmd_oracle(args: &OracleArgs) -> Result<(), CliError> {
    let ham = load_hamiltonian(&args.fcidump)?;
    let n_alpha = args.n_alpha.unwrap_or(ham.n_alpha);
    let n_beta = args.n_beta.unwrap_or(ham.n_beta);
    let mut manifest = RunManifest::new(
        "oracle",
        &[&args.fcidump],
        serde_json::json!({"n_alpha": n_alpha, "n_beta": n_beta, "cap": args.cap}),
        0,
    );
    let start = Instant::now();
    let vals = fci_oracle(&ham, n_alpha, n_beta, args.cap)
        .map_err(|e| CliError::Engine(e.to_string()))?;
    manifest.record("oracle", start);
    let eigenvalues: Vec<f64> = vals.iter().copied().collect();
    write_json(
        &args.out,
        &serde_json::json!({
            "n_alpha": n_alpha,
            "n_beta": n_beta,
            "eigenvalues": eigenvalues,
        }),
    )?;
    manifest.write_next_to(&args.out)?;
    println!(
        "sector ({n_alpha},{n_beta}): {} eigenvalues, lowest {:.10}",
        eigenvalues.len(),
        eigenvalues.first().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}

fn cmd_gatecount(args: &GatecountArgs) -> Result<(), CliError> {
    let text = read_text(&args.decomposition)?;
    let json: DecompositionJson = serde_json::from_str(&text)
        .map_err(|e| CliError::Parse(format!("{}: {e}", args.decomposition.display())))?;
    let decomp = json.into_decomposition();
    let mut manifest = RunManifest::new(
        "gatecount",
        &[&args.decomposition],
        serde_json::json!({"dt": args.dt, "power": args.power, "route_linear": args.route_linear}),
        0,
    );
    let start = Instant::now();
    let report =
        GateCountReport::build_with_routing(&decomp, args.dt, args.power, args.route_linear)
            .map_err(|e| CliError::Engine(e.to_string()))?;
    manifest.record("gatecount", start);
    write_json(&args.out, &report)?;
    manifest.write_next_to(&args.out)?;
    println!(
        "controlled-step CNOT saving: {} (formula {})",
        report.cnot_saving, report.cnot_saving_formula
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = cli.threads.or_else(|| {
        std::env::var("DFQFD_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    if let Some(n) = threads {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let result = match &cli.command {
        Command::Factorize(args) => cmd_factorize(args),
        Command::Qfd(args) => cmd_qfd(args),
        Command::Oracle(args) => cmd_oracle(args),
        Command::Gatecount(args) => cmd_gatecount(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", err.message());
            ExitCode::from(err.code())
        }
    }
}
