use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;
use serde::Deserialize;

use proxqn::experiment::{frontier_csv, run_batch, write_outputs, ExperimentConfig, FrontierRecord};
use proxqn::oracles::stationarity_certificate;
use proxqn::{run, Error, ProblemInstance, SolverConfig, Status, UpdateKind};

const EXIT_INVALID: u8 = 2;
const EXIT_FAILED: u8 = 3;

#[derive(Parser)]
#[command(name = "proxqn", version, about = "Proximal quasi-Newton solvers for composite multiobjective problems")]
struct Cli {
    /// TOML file with defaults for any flag; flags given on the command line win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one instance and write the final point.
    Solve(SolveArgs),
    /// Run the seeded batch experiment and write frontier files.
    Experiment(ExperimentArgs),
    /// Certify Pareto stationarity of given points.
    Check(CheckArgs),
}

#[derive(Args, Default)]
struct SolverFlags {
    /// pgm, bfgs, ssbfgs or hbfgs.
    #[arg(long)]
    method: Option<String>,
    /// Unit steps instead of Armijo backtracking.
    #[arg(long)]
    no_line_search: bool,
    #[arg(long)]
    omega: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    zeta: Option<f64>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// In unit-step mode, use ω = 1.01·L/2.
    #[arg(long)]
    auto_omega: bool,
}

#[derive(Args)]
struct SolveArgs {
    /// Instance in JSON form.
    #[arg(long)]
    instance: Option<PathBuf>,
    /// Starting point as comma-separated values; falls back to the instance's
    /// `x0`, then to the origin.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    x0: Option<Vec<f64>>,
    #[command(flatten)]
    solver: SolverFlags,
    /// CSV with the final objective values and point.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-iteration trace as JSON lines.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    deltas: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    /// Step modes: armijo, fixed or both.
    #[arg(long, value_delimiter = ',')]
    modes: Option<Vec<String>>,
    /// Redraw only the starting point across runs.
    #[arg(long)]
    fixed_instance: bool,
    /// Keep the configured ω in unit-step mode instead of 1.01·L/2.
    #[arg(long)]
    strict_omega: bool,
    #[command(flatten)]
    solver: SolverFlags,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Also write one scatter plot per (δ, mode).
    #[arg(long)]
    svg: bool,
}

#[derive(Args)]
struct CheckArgs {
    #[arg(long)]
    instance: Option<PathBuf>,
    /// One point per line, or a frontier CSV with x1..xn columns.
    #[arg(long)]
    point: Option<PathBuf>,
    #[arg(long)]
    omega: Option<f64>,
    /// Certify β_ω(x) ≥ −tol; defaults to 10·ω·eps² with eps = 1e-6.
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    #[serde(default)]
    solver: FileSolver,
    #[serde(default)]
    solve: FileSolve,
    #[serde(default)]
    experiment: FileExperiment,
    #[serde(default)]
    check: FileCheck,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct FileSolver {
    method: Option<String>,
    line_search: Option<bool>,
    omega: Option<f64>,
    tau: Option<f64>,
    zeta: Option<f64>,
    eps: Option<f64>,
    max_iter: Option<usize>,
    auto_omega: Option<bool>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct FileSolve {
    instance: Option<PathBuf>,
    x0: Option<Vec<f64>>,
    out: Option<PathBuf>,
    trace: Option<PathBuf>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct FileExperiment {
    seed: Option<u64>,
    runs: Option<usize>,
    n: Option<usize>,
    m: Option<usize>,
    deltas: Option<Vec<f64>>,
    methods: Option<Vec<String>>,
    modes: Option<Vec<String>>,
    fixed_instance: Option<bool>,
    strict_omega: Option<bool>,
    out_dir: Option<PathBuf>,
    svg: Option<bool>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct FileCheck {
    instance: Option<PathBuf>,
    point: Option<PathBuf>,
    omega: Option<f64>,
    tol: Option<f64>,
}

enum Failure {
    Invalid(String),
    Failed(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidArgument(_) | Error::Parse { .. } | Error::DimensionMismatch { .. } => {
                Failure::Invalid(e.to_string())
            }
            _ => Failure::Failed(e.to_string()),
        }
    }
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure::Invalid(msg.into())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = load_config(cli.config.as_deref()).and_then(|file| match cli.command {
        Command::Solve(args) => solve(args, file),
        Command::Experiment(args) => experiment(args, file),
        Command::Check(args) => check(args, file),
    });
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invalid(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_INVALID)
        }
        Err(Failure::Failed(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_FAILED)
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<FileConfig, Failure> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = fs::read_to_string(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

fn parse_method(s: &str) -> Result<UpdateKind, Failure> {
    s.parse().map_err(|e: Error| invalid(e.to_string()))
}

fn solver_config(flags: &SolverFlags, file: &FileSolver, base: SolverConfig) -> Result<SolverConfig, Failure> {
    let method = match flags.method.as_deref().or(file.method.as_deref()) {
        Some(s) => parse_method(s)?,
        None => base.method,
    };
    let cfg = SolverConfig {
        method,
        line_search: if flags.no_line_search { false } else { file.line_search.unwrap_or(base.line_search) },
        omega: flags.omega.or(file.omega).unwrap_or(base.omega),
        tau: flags.tau.or(file.tau).unwrap_or(base.tau),
        zeta: flags.zeta.or(file.zeta).unwrap_or(base.zeta),
        eps: flags.eps.or(file.eps).unwrap_or(base.eps),
        max_iter: flags.max_iter.or(file.max_iter).unwrap_or(base.max_iter),
        auto_omega: flags.auto_omega || file.auto_omega.unwrap_or(base.auto_omega),
        ..base
    };
    cfg.validate()?;
    Ok(cfg)
}

fn required<'a>(flag: Option<&'a PathBuf>, file: Option<&'a PathBuf>, name: &str) -> Result<&'a Path, Failure> {
    flag.or(file)
        .map(PathBuf::as_path)
        .ok_or_else(|| invalid(format!("--{name} is required")))
}

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| Failure::Failed(format!("{}: {e}", path.display())))
}

fn solve(args: SolveArgs, file: FileConfig) -> Result<(), Failure> {
    let cfg = solver_config(&args.solver, &file.solver, SolverConfig::default())?;
    let path = required(args.instance.as_ref(), file.solve.instance.as_ref(), "instance")?;
    let out = required(args.out.as_ref(), file.solve.out.as_ref(), "out")?;
    let (problem, doc_x0) = ProblemInstance::read(path)?;
    let x0 = match args.x0.or(file.solve.x0) {
        Some(v) if v.len() != problem.n() => {
            return Err(invalid(format!("x0 has {} entries, instance has n = {}", v.len(), problem.n())))
        }
        Some(v) => DVector::from_vec(v),
        None => doc_x0.unwrap_or_else(|| DVector::zeros(problem.n())),
    };
    let result = run(&problem, &x0, &cfg)?;
    for w in &result.warnings {
        log::warn!("{w}");
    }
    let record = FrontierRecord::from_run(0, None, &cfg, &result);
    write_text(out, &frontier_csv(&[record], problem.m(), problem.n()))?;
    if let Some(trace) = args.trace.as_ref().or(file.solve.trace.as_ref()) {
        let mut text = String::new();
        for rec in &result.trace {
            text.push_str(&serde_json::to_string(rec).map_err(|e| Failure::Failed(e.to_string()))?);
            text.push('\n');
        }
        write_text(trace, &text)?;
    }
    println!(
        "{}: {} after {} iterations, F = {:?}",
        cfg.method,
        result.status,
        result.iterations,
        result.f_final.as_slice()
    );
    match result.status {
        Status::Stationary => Ok(()),
        status => Err(Failure::Failed(format!(
            "run ended with status {status}{}",
            result.failure.map(|m| format!(": {m}")).unwrap_or_default()
        ))),
    }
}

fn parse_modes(modes: &[String]) -> Result<Vec<bool>, Failure> {
    let mut out = Vec::new();
    for m in modes {
        match m.trim() {
            "armijo" => out.push(true),
            "fixed" => out.push(false),
            "both" => out.extend([true, false]),
            other => return Err(invalid(format!("unknown mode `{other}` (armijo, fixed or both)"))),
        }
    }
    out.dedup();
    Ok(out)
}

fn experiment(args: ExperimentArgs, file: FileConfig) -> Result<(), Failure> {
    let fe = &file.experiment;
    let base = ExperimentConfig::default();
    let mut solver = solver_config(&args.solver, &file.solver, base.solver.clone())?;
    if args.strict_omega || fe.strict_omega.unwrap_or(false) {
        solver.auto_omega = false;
    }
    let methods = match args.methods.as_ref().or(fe.methods.as_ref()) {
        Some(list) => list.iter().map(|s| parse_method(s)).collect::<Result<Vec<_>, _>>()?,
        None => base.methods.clone(),
    };
    let line_search = match args.modes.as_ref().or(fe.modes.as_ref()) {
        Some(list) => parse_modes(list)?,
        None if args.solver.no_line_search => vec![false],
        None => base.line_search.clone(),
    };
    let cfg = ExperimentConfig {
        seed: args.seed.or(fe.seed).unwrap_or(base.seed),
        n: args.n.or(fe.n).unwrap_or(base.n),
        m: args.m.or(fe.m).unwrap_or(base.m),
        runs: args.runs.or(fe.runs).unwrap_or(base.runs),
        deltas: args.deltas.clone().or_else(|| fe.deltas.clone()).unwrap_or(base.deltas),
        methods,
        line_search,
        solver,
        fixed_instance: args.fixed_instance || fe.fixed_instance.unwrap_or(false),
    };
    cfg.validate()?;
    let dir = required(args.out_dir.as_ref(), fe.out_dir.as_ref(), "out-dir")?;
    let records = run_batch(&cfg)?;
    let written = write_outputs(&records, cfg.m, cfg.n, dir, args.svg || fe.svg.unwrap_or(false))?;
    for path in &written {
        println!("wrote {}", path.display());
    }
    let failed = records.iter().filter(|r| r.status != Status::Stationary).count();
    println!("{} runs, {failed} not stationary", records.len());
    if failed > 0 {
        return Err(Failure::Failed(format!("{failed} runs did not reach a stationary point")));
    }
    Ok(())
}

/// Points as bare comma-separated rows, or as the `x1..xn` columns of a
/// frontier CSV.
fn read_points(path: &Path, n: usize) -> Result<Vec<DVector<f64>>, Failure> {
    let text = fs::read_to_string(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    let bad = |line: usize, msg: String| invalid(format!("{}: line {line}: {msg}", path.display()));
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()).peekable();
    let mut columns: Option<Vec<usize>> = None;
    if let Some((_, first)) = lines.peek() {
        let cells: Vec<&str> = first.split(',').map(str::trim).collect();
        if cells.iter().any(|c| c.parse::<f64>().is_err()) {
            let cols = (1..=n)
                .map(|k| cells.iter().position(|c| *c == format!("x{k}")))
                .collect::<Option<Vec<_>>>()
                .ok_or_else(|| bad(1, format!("header lacks columns x1..x{n}")))?;
            columns = Some(cols);
            lines.next();
        }
    }
    let mut points = Vec::new();
    for (k, line) in lines {
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        let picked: Vec<&str> = match &columns {
            Some(cols) => cols
                .iter()
                .map(|&c| cells.get(c).copied().ok_or_else(|| bad(k + 1, "short row".into())))
                .collect::<Result<_, _>>()?,
            None => cells,
        };
        if picked.len() != n {
            return Err(bad(k + 1, format!("expected {n} values, got {}", picked.len())));
        }
        let values = picked
            .iter()
            .map(|s| s.parse::<f64>().map_err(|e| bad(k + 1, format!("{s:?}: {e}"))))
            .collect::<Result<Vec<_>, _>>()?;
        points.push(DVector::from_vec(values));
    }
    if points.is_empty() {
        return Err(invalid(format!("{}: no points", path.display())));
    }
    Ok(points)
}

fn check(args: CheckArgs, file: FileConfig) -> Result<(), Failure> {
    let fc = &file.check;
    let path = required(args.instance.as_ref(), fc.instance.as_ref(), "instance")?;
    let point_path = required(args.point.as_ref(), fc.point.as_ref(), "point")?;
    let defaults = SolverConfig::default();
    let omega = args.omega.or(fc.omega).or(file.solver.omega).unwrap_or(defaults.omega);
    let tol = args.tol.or(fc.tol).unwrap_or(10.0 * omega * defaults.eps * defaults.eps);
    if !(omega > 0.0 && omega.is_finite()) || !(tol >= 0.0 && tol.is_finite()) {
        return Err(invalid(format!("need omega > 0 and tol >= 0, got {omega} and {tol}")));
    }
    let (problem, _) = ProblemInstance::read(path)?;
    let points = read_points(point_path, problem.n())?;
    let mut rejected = 0;
    for (k, x) in points.iter().enumerate() {
        let cert = stationarity_certificate(x, &problem, omega, tol)?;
        println!(
            "point {k}: {} (beta estimate {:e})",
            if cert.stationary { "stationary" } else { "not stationary" },
            cert.beta_est
        );
        rejected += usize::from(!cert.stationary);
    }
    if rejected > 0 {
        return Err(Failure::Failed(format!("{rejected} of {} points not certified", points.len())));
    }
    Ok(())
}
