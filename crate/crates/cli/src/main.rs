//! `laplace-cert`: MAP estimation, Laplace approximation and certified
//! Hellinger bounds from the command line.

mod report;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use laplace_core::calibration::{calibration_engine, exp1d_study, PAPER_TARGETS, PER_ROW_SCALES};
use laplace_core::derivcheck::{check_problem, random_points};
use laplace_core::hellinger::{bound_cor63, bound_prop61, hellinger};
use laplace_core::laplace::{find_map, laplace_measure, normalization_constant, MapOptions};
use laplace_core::problem::{builtin_problem, BuiltinOptions, ProblemSpec};
use laplace_core::{Centering, EngineKind, Error, ForwardProblem, IntegrationEngine, TaylorMisfit};
use nalgebra::DVector;

use report::{
    CertifyReport, CheckReport, LaplaceReport, MapReport, ProblemReport, ReproduceReport,
    SolveReport, StudyEntry,
};

const EXIT_HELP: &str = "\
Exit codes:
  0  success
  1  invalid spec or usage
  2  solver or integration failure
  3  exp(-TΦ) is not integrable against the prior
  4  derivative check failed

LAPLACE_CERT_THREADS caps the number of integration worker threads.";

#[derive(Debug, Parser)]
#[command(name = "laplace-cert", version, about, after_help = EXIT_HELP)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Locate the MAP point.
    Solve {
        #[command(flatten)]
        problem: ProblemArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// MAP point, Laplace measure and its normalization constant.
    Laplace {
        #[command(flatten)]
        problem: ProblemArgs,
        #[command(flatten)]
        engine: EngineArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Hellinger distance and both certified bounds.
    Certify {
        #[command(flatten)]
        problem: ProblemArgs,
        #[command(flatten)]
        engine: EngineArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// The `exp` study for y = ±2 with density curves as CSV.
    ReproducePaper {
        #[command(flatten)]
        engine: EngineArgs,
        /// Scales used for the density curves.
        #[arg(long, value_enum, default_value_t = Scales::Unit)]
        scales: Scales,
        /// Directory for the CSV files.
        #[arg(long, default_value = ".")]
        csv_dir: PathBuf,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Finite-difference checks of DG, HG, ∇I and HI at prior samples.
    CheckDerivatives {
        #[command(flatten)]
        problem: ProblemArgs,
        #[arg(long, default_value_t = 20)]
        points: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        output: OutputArgs,
    },
}

#[derive(Debug, Args)]
struct ProblemArgs {
    /// Built-in problem: exp1d, linear or quad2d.
    #[arg(long, conflicts_with = "spec")]
    builtin: Option<String>,
    /// JSON problem spec.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Data override, comma separated.
    #[arg(long, allow_hyphen_values = true, value_delimiter = ',')]
    y: Option<Vec<f64>>,
    /// Prior standard deviation scale (built-ins only).
    #[arg(long)]
    sigma: Option<f64>,
    /// Noise standard deviation scale (built-ins only).
    #[arg(long)]
    gamma: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EngineChoice {
    Gh,
    Mc,
    Adaptive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum CenteringChoice {
    Prior,
    Laplace,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Scales {
    /// σ = γ = 1.
    Unit,
    /// The per-row scales that reproduce the published numbers.
    Calibrated,
}

#[derive(Debug, Args)]
struct EngineArgs {
    /// Integration engine; defaults by dimension.
    #[arg(long, value_enum)]
    engine: Option<EngineChoice>,
    /// Gauss–Hermite nodes per axis.
    #[arg(long)]
    order: Option<usize>,
    /// Monte Carlo sample count.
    #[arg(long)]
    samples: Option<usize>,
    /// Monte Carlo seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Relative tolerance of the adaptive engine.
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long, value_enum, default_value_t = CenteringChoice::Prior)]
    centering: CenteringChoice,
}

#[derive(Debug, Args)]
struct OutputArgs {
    /// Write the JSON report here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// A failure with its exit code.
#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: 1,
            message: message.into(),
        }
    }

    /// Errors raised while loading a problem are the user's to fix.
    fn loading(e: Error) -> Self {
        Self::usage(e.to_string())
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::DivergentIntegral { .. } => 3,
            Error::InvalidSpec(_) | Error::UnknownModel(_) | Error::InvalidArgument(_) => 1,
            _ => 2,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn load_problem(args: &ProblemArgs) -> CliResult<(ForwardProblem, ProblemReport)> {
    let (problem, source) = match (&args.builtin, &args.spec) {
        (Some(name), None) => {
            let opts = BuiltinOptions {
                y: args.y.clone(),
                sigma: args.sigma,
                gamma: args.gamma,
            };
            (builtin_problem(name, &opts).map_err(Failure::loading)?, format!("builtin:{name}"))
        }
        (None, Some(path)) => {
            if args.sigma.is_some() || args.gamma.is_some() {
                return Err(Failure::usage("--sigma and --gamma apply to built-in problems only"));
            }
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::usage(format!("cannot read {}: {e}", path.display())))?;
            let mut spec = ProblemSpec::from_json(&text)
                .map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
            if let Some(y) = &args.y {
                spec.y = Some(y.clone());
            }
            (spec.build().map_err(Failure::loading)?, format!("spec:{}", path.display()))
        }
        (None, None) => return Err(Failure::usage("one of --builtin or --spec is required")),
        (Some(_), Some(_)) => unreachable!("clap rejects --builtin with --spec"),
    };
    let report = ProblemReport {
        source,
        dim: problem.dim(),
        y: problem.data().iter().copied().collect(),
    };
    Ok((problem, report))
}

impl EngineArgs {
    fn is_default(&self) -> bool {
        self.engine.is_none() && self.order.is_none() && self.samples.is_none()
    }
}

fn engine_for(args: &EngineArgs, dim: usize) -> CliResult<IntegrationEngine> {
    let base = match args.engine {
        None => match (args.order, args.samples) {
            (Some(order), None) => IntegrationEngine::gauss_hermite(order),
            (None, Some(samples)) => IntegrationEngine::monte_carlo(samples, args.seed),
            (Some(_), Some(_)) => return Err(Failure::usage("--order and --samples are exclusive")),
            (None, None) => match IntegrationEngine::default_for_dim(dim).kind {
                EngineKind::MonteCarlo { samples, .. } => IntegrationEngine::monte_carlo(samples, args.seed),
                kind => IntegrationEngine { kind, centering: Centering::Prior },
            },
        },
        Some(EngineChoice::Gh) => {
            let default_order = if dim <= 1 { 96 } else { 48 };
            IntegrationEngine::gauss_hermite(args.order.unwrap_or(default_order))
        }
        Some(EngineChoice::Mc) => IntegrationEngine::monte_carlo(args.samples.unwrap_or(1_000_000), args.seed),
        Some(EngineChoice::Adaptive) => IntegrationEngine::adaptive(args.tol),
    };
    let centering = match args.centering {
        CenteringChoice::Prior => Centering::Prior,
        CenteringChoice::Laplace => Centering::Laplace,
    };
    let engine = base.with_centering(centering);
    engine.validate().map_err(|e| Failure::usage(e.to_string()))?;
    Ok(engine)
}

fn write_json<T: serde::Serialize>(value: &T, out: &OutputArgs) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).expect("reports serialize") + "\n";
    match &out.out {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| Failure::usage(format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn solve(problem: &ForwardProblem) -> CliResult<laplace_core::MapResult> {
    Ok(find_map(problem, &DVector::zeros(problem.dim()), &MapOptions::default())?)
}

fn cmd_solve(problem: &ProblemArgs, output: &OutputArgs) -> CliResult<()> {
    let (p, pr) = load_problem(problem)?;
    let map = solve(&p)?;
    let report = SolveReport::new("solve", pr, MapReport::from(&map));
    write_json(&report, output)
}

fn cmd_laplace(problem: &ProblemArgs, engine: &EngineArgs, output: &OutputArgs) -> CliResult<()> {
    let (p, pr) = load_problem(problem)?;
    let engine = engine_for(engine, p.dim())?;
    let map = solve(&p)?;
    let taylor = TaylorMisfit::from_map(&p, &map)?;
    let nu = laplace_measure(&map)?;
    let norm = normalization_constant(&p, &taylor, &map, &engine)?;
    let report = LaplaceReport::new(pr, &map, &nu, norm, engine);
    write_json(&report, output)
}

fn cmd_certify(problem: &ProblemArgs, engine: &EngineArgs, output: &OutputArgs) -> CliResult<()> {
    let (p, pr) = load_problem(problem)?;
    let engine = engine_for(engine, p.dim())?;
    let map = solve(&p)?;
    let taylor = TaylorMisfit::from_map(&p, &map)?;
    let d = hellinger(&p, &taylor, &engine)?;
    let a = bound_prop61(&p, &taylor, &map, &engine)?;
    let b = bound_cor63(&p, &taylor, &map, &engine)?;
    let report = CertifyReport::new(pr, &map, engine, d, a, b);
    write_json(&report, output)
}

fn cmd_check(problem: &ProblemArgs, points: usize, seed: u64, output: &OutputArgs) -> CliResult<()> {
    if points == 0 {
        return Err(Failure::usage("--points must be positive"));
    }
    let (p, pr) = load_problem(problem)?;
    let rep = check_problem(&p, &random_points(&p, points, seed))?;
    let passes = rep.passes();
    write_json(&CheckReport::new(pr, seed, rep), output)?;
    if passes {
        Ok(())
    } else {
        Err(Failure {
            code: 4,
            message: "derivative check failed".into(),
        })
    }
}

/// Lebesgue densities of the posterior and of the Laplace measure on
/// `[−4, 4]` with step 0.01.
fn write_density_csv(path: &Path, y: f64, sigma: f64, gamma: f64) -> CliResult<()> {
    let opts = BuiltinOptions {
        y: Some(vec![y]),
        sigma: Some(sigma),
        gamma: Some(gamma),
    };
    let p = builtin_problem("exp1d", &opts)?;
    let map = solve(&p)?;
    let nu = laplace_measure(&map)?;
    let engine = IntegrationEngine::adaptive(1e-12).with_centering(Centering::Laplace);
    let z = engine.expect(p.prior(), Some(&nu), false, |u| {
        [(-p.misfit_phi(u).unwrap_or(f64::NAN)).exp()]
    })?;
    let mut text = String::from("u,posterior,laplace\n");
    for i in 0..=800 {
        let u = DVector::from_element(1, (i as f64 - 400.0) / 100.0);
        let post = (-p.misfit_phi(&u)? + p.prior().log_density(&u)?).exp() / z.value[0];
        let lap = nu.log_density(&u)?.exp();
        text.push_str(&format!("{},{post:.12e},{lap:.12e}\n", u[0]));
    }
    std::fs::write(path, text)
        .map_err(|e| Failure::usage(format!("cannot write {}: {e}", path.display())))
}

fn cmd_reproduce(engine: &EngineArgs, scales: Scales, csv_dir: &Path, output: &OutputArgs) -> CliResult<()> {
    // The fixed rules converge slowly on the kinked pointwise-certificate
    // integrand, so the table defaults to the adaptive engine.
    let engine = if engine.is_default() {
        calibration_engine()
    } else {
        engine_for(engine, 1)?
    };
    let mut rows = Vec::new();
    println!(
        "{:>4} {:>8} {:>8} {:>9} {:>9} {:>9} {:>9} {:>9} {:>9}",
        "y", "sigma", "gamma", "d_H", "K_61", "bound_61", "K_63", "bound_63", "max_miss"
    );
    let configs = [("unit", [(1.0, 1.0); 2]), ("calibrated", PER_ROW_SCALES)];
    for (label, scales) in configs {
        for (t, &(sigma, gamma)) in PAPER_TARGETS.iter().zip(&scales) {
            let row = exp1d_study(t.y, sigma, gamma, &engine)?;
            let miss = row.max_relative_miss(t);
            println!(
                "{:>4} {:>8.5} {:>8.5} {:>9.5} {:>9.5} {:>9.5} {:>9.5} {:>9.5} {:>8.2}%",
                t.y,
                sigma,
                gamma,
                row.d_hellinger,
                row.k_prop61,
                row.bound_prop61,
                row.k_cor63,
                row.bound_cor63,
                100.0 * miss
            );
            rows.push(StudyEntry {
                scales: label,
                row,
                max_relative_miss: miss,
            });
        }
    }
    for t in &PAPER_TARGETS {
        println!(
            "{:>4} {:>8} {:>8} {:>9.5} {:>9.5} {:>9.5} {:>9.5} {:>9.5}  (published)",
            t.y, "-", "-", t.d_hellinger, t.k_prop61, t.bound_prop61, t.k_cor63, t.bound_cor63
        );
    }

    std::fs::create_dir_all(csv_dir)
        .map_err(|e| Failure::usage(format!("cannot create {}: {e}", csv_dir.display())))?;
    let mut csv_files = Vec::new();
    for (i, t) in PAPER_TARGETS.iter().enumerate() {
        let (sigma, gamma) = match scales {
            Scales::Unit => (1.0, 1.0),
            Scales::Calibrated => PER_ROW_SCALES[i],
        };
        let path = csv_dir.join(format!("density_y{}.csv", t.y));
        write_density_csv(&path, t.y, sigma, gamma)?;
        eprintln!("wrote {}", path.display());
        csv_files.push(path.display().to_string());
    }
    if output.out.is_some() {
        write_json(&ReproduceReport::new(engine, rows, csv_files), output)?;
    }
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    match &cli.command {
        Command::Solve { problem, output } => cmd_solve(problem, output),
        Command::Laplace {
            problem,
            engine,
            output,
        } => cmd_laplace(problem, engine, output),
        Command::Certify {
            problem,
            engine,
            output,
        } => cmd_certify(problem, engine, output),
        Command::ReproducePaper {
            engine,
            scales,
            csv_dir,
            output,
        } => cmd_reproduce(engine, *scales, csv_dir, output),
        Command::CheckDerivatives {
            problem,
            points,
            seed,
            output,
        } => cmd_check(problem, *points, *seed, output),
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
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn exit_codes_follow_error_kind() {
        let code = |e: Error| Failure::from(e).code;
        assert_eq!(code(Error::DivergentIntegral { min_eigenvalue: -1.0 }), 3);
        assert_eq!(code(Error::InvalidSpec("x".into())), 1);
        assert_eq!(code(Error::UnknownModel("x".into())), 1);
        assert_eq!(
            code(Error::MaxIterations {
                iterations: 1,
                grad_norm: 1.0
            }),
            2
        );
        assert_eq!(code(Error::Engine("x".into())), 2);
        assert_eq!(Failure::loading(Error::NonFinite("G".into())).code, 1);
    }

    #[test]
    fn arguments_parse() {
        Cli::command().debug_assert();
        let cli = Cli::try_parse_from(["laplace-cert", "solve", "--builtin", "exp1d", "--y", "-2,1.5"]).unwrap();
        let Command::Solve { problem, .. } = cli.command else {
            panic!("wrong subcommand");
        };
        assert_eq!(problem.y, Some(vec![-2.0, 1.5]));
    }
}
