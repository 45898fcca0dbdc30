use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use eigen_factors::backend::{Mode, OptimizerConfig, Status};
use eigen_factors::bench::{bench, bench_csv, Sweep};
use eigen_factors::checks::{check_derivatives, CENTERED_TOLERANCE, CROSS_POSE_TOLERANCE, GRADIENT_TOLERANCE, HESSIAN_TOLERANCE};
use eigen_factors::eval::{aggregate_map, map_metrics, rpe, DEFAULT_RADIUS};
use eigen_factors::io;
use eigen_factors::se3::GeneratorBasis;
use eigen_factors::synth::{generate, WorldSpec};
use eigen_factors::Error;

const EXIT_USAGE: u8 = 1;
const EXIT_IO: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;
const EXIT_NOT_CONVERGED: u8 = 4;

/// Plane SLAM back-end: synthetic worlds, trajectory refinement and evaluation.
///
/// Set RAYON_NUM_THREADS to limit worker threads.
#[derive(Parser)]
#[command(name = "ef", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic plane world and write it as a dataset file.
    Generate(GenerateArgs),
    /// Refine the dataset's initial trajectory.
    Optimize(OptimizeArgs),
    /// Compare two trajectories and score the map one of them produces.
    Evaluate(EvaluateArgs),
    /// Compare analytic derivatives against finite differences.
    CheckDerivatives(CheckArgs),
    /// Time the optimizer while sweeping the number of poses or points.
    Bench(BenchArgs),
}

#[derive(Args)]
struct WorldArgs {
    #[arg(long, default_value_t = 10)]
    n_poses: usize,
    #[arg(long, default_value_t = 10)]
    n_planes: usize,
    #[arg(long, default_value_t = 50)]
    points_per_plane: usize,
    /// Point noise along the plane normal, meters.
    #[arg(long, default_value_t = 0.04)]
    sigma: f64,
    /// Translation perturbation per pose, meters.
    #[arg(long, default_value_t = 0.05)]
    perturb_trans: f64,
    /// Rotation perturbation per pose, degrees.
    #[arg(long, default_value_t = 5.0)]
    perturb_rot: f64,
    #[arg(long, default_value_t = 5.0)]
    scene_radius: f64,
    #[arg(long, default_value_t = 1.0)]
    patch_half_side: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl WorldArgs {
    fn spec(&self) -> WorldSpec {
        WorldSpec {
            n_poses: self.n_poses,
            n_planes: self.n_planes,
            points_per_plane: self.points_per_plane,
            point_noise_sigma: self.sigma,
            perturb_trans: self.perturb_trans,
            perturb_rot: self.perturb_rot,
            seed: self.seed,
            scene_radius: self.scene_radius,
            patch_half_side: self.patch_half_side,
        }
    }
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    world: WorldArgs,
    #[arg(long)]
    out: PathBuf,
    /// Also write the ground-truth trajectory here.
    #[arg(long)]
    gt_out: Option<PathBuf>,
    /// Also write the perturbed initial trajectory here.
    #[arg(long)]
    init_out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Centered,
    Plain,
}

#[derive(Args)]
struct OptimizerArgs {
    #[arg(long, value_enum, default_value_t = ModeArg::Centered)]
    mode: ModeArg,
    /// Stop when an accepted step lowers the cost by less than this fraction.
    #[arg(long, default_value_t = 1e-2)]
    tol: f64,
    #[arg(long, default_value_t = 50)]
    max_iters: usize,
}

impl OptimizerArgs {
    fn config(&self) -> OptimizerConfig {
        let mode = match self.mode {
            ModeArg::Centered => Mode::Centered,
            ModeArg::Plain => Mode::Plain,
        };
        OptimizerConfig { max_iters: self.max_iters, cost_tolerance: self.tol, mode, ..Default::default() }
    }
}

#[derive(Args)]
struct OptimizeArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Optimized trajectory.
    #[arg(long)]
    out: PathBuf,
    /// Per-iteration trace CSV. Defaults to the output path with `.trace.csv` appended.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[command(flatten)]
    optimizer: OptimizerArgs,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Reference trajectory file.
    #[arg(long = "ref")]
    reference: PathBuf,
    /// Estimated trajectory file.
    #[arg(long)]
    est: PathBuf,
    /// Dataset whose clouds are aggregated with the estimate for the map metrics.
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, default_value_t = DEFAULT_RADIUS)]
    radius: f64,
    /// Write the CSV here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CheckArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    trials: usize,
    /// Perturb one generator matrix so the checks must fail.
    #[arg(long, hide = true)]
    corrupt_generator: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepArg {
    Poses,
    Points,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, value_enum)]
    sweep: SweepArg,
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<usize>,
    #[arg(long, default_value_t = 3)]
    repeats: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    optimizer: OptimizerArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Io { .. } | Error::Parse { .. } => EXIT_IO,
            Error::InvalidArgument(_) => EXIT_USAGE,
            _ => EXIT_NUMERICAL,
        };
        Failure { code, message: e.to_string() }
    }
}

type CmdResult = Result<u8, Failure>;

fn emit(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(path) => io::write_text(path, text).map_err(Failure::from),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_generate(args: &GenerateArgs) -> CmdResult {
    let ds = generate(&args.world.spec())?;
    io::write_dataset(&args.out, &ds)?;
    if let Some(path) = &args.gt_out {
        io::write_trajectory(path, &ds.gt_trajectory)?;
    }
    if let Some(path) = &args.init_out {
        io::write_trajectory(path, &ds.initial_trajectory)?;
    }
    Ok(0)
}

fn cmd_optimize(args: &OptimizeArgs) -> CmdResult {
    let ds = io::read_dataset(&args.input)?;
    let mut problem = ds.problem(args.optimizer.config())?;
    let report = problem.optimize();
    let trace_path = args.trace.clone().unwrap_or_else(|| {
        let mut p = args.out.clone().into_os_string();
        p.push(".trace.csv");
        p.into()
    });
    if let Status::Failed(msg) = &report.status {
        return Err(Failure { code: EXIT_NUMERICAL, message: format!("optimization failed: {msg}") });
    }
    io::write_trajectory(&args.out, &report.trajectory)?;
    io::write_text(&trace_path, &io::trace_csv(&report.trace))?;
    println!(
        "status {:?}, iterations {}, cost {} -> {}",
        report.status, report.iterations, report.initial_cost, report.final_cost
    );
    Ok(match report.status {
        Status::Converged => 0,
        Status::DampingOverflow => {
            eprintln!("no damping lowered the cost further; treating the final state as converged");
            0
        }
        Status::MaxIterations => EXIT_NOT_CONVERGED,
        Status::Failed(_) => unreachable!(),
    })
}

fn cmd_evaluate(args: &EvaluateArgs) -> CmdResult {
    let reference = io::read_trajectory(&args.reference)?;
    let estimate = io::read_trajectory(&args.est)?;
    let ds = io::read_dataset(&args.dataset)?;
    let r = rpe(&reference, &estimate)?;
    let metrics = map_metrics(&aggregate_map(&ds, &estimate)?, args.radius)?;
    let csv = format!("rpe_trans,rpe_rot,mme,mpv\n{},{},{},{}\n", r.rmse_trans, r.rmse_rot, metrics.mme, metrics.mpv);
    emit(args.out.as_deref(), &csv)?;
    Ok(0)
}

fn cmd_check(args: &CheckArgs) -> CmdResult {
    let basis = if args.corrupt_generator {
        let mut g: [_; 6] = std::array::from_fn(|i| *GeneratorBasis::standard().get(i));
        g[4][(1, 3)] = 0.5;
        GeneratorBasis::from_matrices(g)
    } else {
        GeneratorBasis::standard()
    };
    if args.trials == 0 {
        eprintln!("warning: --trials 0 runs no checks");
    }
    let r = check_derivatives(args.seed, args.trials, &basis)?;
    let verdict = |ok: bool| if ok { "ok" } else { "FAIL" };
    println!("trials {}", r.trials);
    println!("gradient   max rel error {:.3e} (limit {GRADIENT_TOLERANCE:e}) {}", r.gradient, verdict(r.gradient_ok()));
    println!("hessian    max rel error {:.3e} (limit {HESSIAN_TOLERANCE:e}) {}", r.hessian, verdict(r.hessian_ok()));
    println!(
        "cross-pose max rel value {:.3e} (limit {CROSS_POSE_TOLERANCE:e}) {}",
        r.cross_pose,
        verdict(r.cross_pose_ok())
    );
    println!("centered   max rel error {:.3e} (limit {CENTERED_TOLERANCE:e}) {}", r.centered, verdict(r.centered_ok()));
    Ok(if r.passed() { 0 } else { EXIT_NUMERICAL })
}

fn cmd_bench(args: &BenchArgs) -> CmdResult {
    let sweep = match args.sweep {
        SweepArg::Poses => Sweep::Poses,
        SweepArg::Points => Sweep::Points,
    };
    let base = WorldSpec { seed: args.seed, ..Default::default() };
    let rows = bench(sweep, &args.values, &base, &args.optimizer.config(), args.repeats)?;
    emit(args.out.as_deref(), &bench_csv(&rows))?;
    Ok(0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Optimize(a) => cmd_optimize(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::CheckDerivatives(a) => cmd_check(a),
        Command::Bench(a) => cmd_bench(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
