//! Batch front end: configure an instance, run trajectories or refinement
//! studies, and write plot-ready CSV plus JSON summaries.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use plateflow::certify::run_certification;
use plateflow::config::{load_config, Instance};
use plateflow::diagnostics::{accumulate_bounds_with, regularity_report};
use plateflow::error::ConfigError;
use plateflow::flow::run_flow;
use plateflow::io;
use plateflow::stepper::StepMethod;
use plateflow::studies::{study_eps, study_rho, study_tau};

const EXIT_CONFIG: u8 = 2;
const EXIT_SOLVER: u8 = 3;
const EXIT_DIAGNOSTIC: u8 = 4;

#[derive(Parser)]
#[command(
    name = "plateflow",
    about = "Two-obstacle gradient flow of the clamped-plate energy",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Configuration file (flat key-value format with [sections]).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the configured one.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Random seed; overrides the configured one.
    #[arg(long)]
    seed: Option<u64>,
    /// Step method; overrides the configured one.
    #[arg(long, value_parser = parse_method)]
    method: Option<StepMethod>,
    /// Suppress progress output.
    #[arg(long)]
    quiet: bool,
}

fn parse_method(s: &str) -> Result<StepMethod, String> {
    match s {
        "constrained" => Ok(StepMethod::Constrained),
        "penalized" => Ok(StepMethod::Penalized),
        other => Err(format!("`{other}` is not `constrained` or `penalized`")),
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run one trajectory and write trajectory.csv + diagnostics.json.
    Run(CommonArgs),
    /// Penalty-strength refinement study (rho list from the config).
    StudyRho(CommonArgs),
    /// Obstacle-shift refinement study (eps list from the config).
    StudyEps(CommonArgs),
    /// Time-step refinement study (n list from the config).
    StudyTau(CommonArgs),
    /// Randomized solver-vs-oracle cross-check.
    Certify {
        /// Random seed for instance generation.
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Number of randomized instances.
        #[arg(long, default_value_t = 200)]
        instances: usize,
        #[arg(long)]
        quiet: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run(args) => dispatch(args, do_run),
        Command::StudyRho(args) => dispatch(args, do_study_rho),
        Command::StudyEps(args) => dispatch(args, do_study_eps),
        Command::StudyTau(args) => dispatch(args, do_study_tau),
        Command::Certify {
            seed,
            instances,
            quiet,
        } => do_certify(seed, instances, quiet),
    }
}

fn dispatch(args: CommonArgs, body: fn(Instance, &CommonArgs) -> ExitCode) -> ExitCode {
    let instance = match build_instance(&args) {
        Ok(i) => i,
        Err(e) => {
            eprintln!("error: {{\"kind\": \"config\", \"message\": \"{e}\"}}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    body(instance, &args)
}

fn build_instance(args: &CommonArgs) -> Result<Instance, ConfigError> {
    let mut config = load_config(&args.config)?;
    if let Some(out) = &args.out {
        config.out_dir = out.clone();
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(method) = args.method {
        config.method = method;
    }
    config.build()
}

fn solver_error(e: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {{\"kind\": \"solver\", \"message\": \"{e}\"}}");
    ExitCode::from(EXIT_SOLVER)
}

fn io_error(e: std::io::Error) -> ExitCode {
    eprintln!("error: {{\"kind\": \"io\", \"message\": \"{e}\"}}");
    ExitCode::from(EXIT_SOLVER)
}

fn do_run(instance: Instance, args: &CommonArgs) -> ExitCode {
    let config = &instance.config;
    let opts = config.options();
    let traj = match run_flow(
        &instance.grid,
        &instance.biharmonic,
        &instance.pair,
        &instance.u0,
        config.horizon,
        config.steps,
        &opts,
    ) {
        Ok(t) => t,
        Err(e) => return solver_error(e),
    };

    let dissipation = traj.dissipation_report();
    let measure = accumulate_bounds_with(&traj, &config.report_tols);
    let regularity = regularity_report(&traj);

    let csv = io::trajectory_csv(&traj, opts.active_tol);
    let json = io::diagnostics_json(&traj, &dissipation, &measure, &regularity);
    if let Err(e) = io::write_output(&config.out_dir, "trajectory.csv", &csv)
        .and_then(|_| io::write_output(&config.out_dir, "diagnostics.json", &json))
        .and_then(|_| {
            io::write_output(&config.out_dir, "config_echo.txt", &io::config_echo(config))
        })
    {
        return io_error(e);
    }

    let structurally_clean = measure
        .per_step
        .iter()
        .all(|m| !m.violates(&config.report_tols))
        && dissipation.prefix_violations.is_empty()
        && dissipation.energy_increases.is_empty();
    if !args.quiet {
        println!(
            "run: {} steps, E0 = {}, final E = {}, max |mu| off support = {:.3e}",
            traj.step_count(),
            traj.initial_energy(),
            traj.energies().last().unwrap(),
            measure.max_off_support,
        );
    }
    if !structurally_clean {
        eprintln!(
            "error: {{\"kind\": \"diagnostic\", \"message\": \"structural tolerance exceeded\"}}"
        );
        return ExitCode::from(EXIT_DIAGNOSTIC);
    }
    ExitCode::SUCCESS
}

fn do_study_rho(instance: Instance, args: &CommonArgs) -> ExitCode {
    let config = &instance.config;
    let rows = match study_rho(
        &instance.grid,
        &instance.biharmonic,
        &instance.pair,
        &instance.u0,
        config.horizon,
        config.steps,
        &config.options(),
        &config.rho_list,
        config.epsilon,
    ) {
        Ok(r) => r,
        Err(e) => return solver_error(e),
    };
    let mut violated = false;
    for row in &rows {
        if row.lower_violation_mass > row.bound_rho_e0 + 1e-12
            || row.upper_violation_mass > row.bound_rho_e0 + 1e-12
        {
            violated = true;
        }
    }
    if !args.quiet {
        for row in &rows {
            println!(
                "rho = {:9.3e}  gap = {:.6e}  violation <= {:.3e} (bound {:.3e})",
                row.rho,
                row.gap_h,
                row.lower_violation_mass.max(row.upper_violation_mass),
                row.bound_rho_e0
            );
        }
    }
    if let Err(e) = io::write_output(&config.out_dir, "study_rho.csv", &io::rho_study_csv(&rows)) {
        return io_error(e);
    }
    if violated {
        eprintln!(
            "error: {{\"kind\": \"diagnostic\", \"message\": \"penalty violation bound exceeded\"}}"
        );
        return ExitCode::from(EXIT_DIAGNOSTIC);
    }
    ExitCode::SUCCESS
}

fn do_study_eps(instance: Instance, args: &CommonArgs) -> ExitCode {
    let config = &instance.config;
    let rows = match study_eps(
        &instance.grid,
        &instance.biharmonic,
        &instance.pair,
        &instance.u0,
        config.horizon,
        config.steps,
        &config.options(),
        &config.eps_list,
    ) {
        Ok(r) => r,
        Err(e) => return solver_error(e),
    };
    if !args.quiet {
        for eps in &config.eps_list {
            let gap = rows
                .iter()
                .filter(|r| r.epsilon == *eps)
                .map(|r| r.gap_max)
                .fold(0.0, f64::max);
            println!("eps = {eps:9.3e}  max gap = {gap:.6e}");
        }
    }
    match io::write_output(&config.out_dir, "study_eps.csv", &io::eps_study_csv(&rows)) {
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => io_error(e),
    }
}

fn do_study_tau(instance: Instance, args: &CommonArgs) -> ExitCode {
    let config = &instance.config;
    let rows = match study_tau(
        &instance.grid,
        &instance.biharmonic,
        &instance.pair,
        &instance.u0,
        config.horizon,
        &config.n_list,
        &config.options(),
    ) {
        Ok(r) => r,
        Err(e) => return solver_error(e),
    };
    let dissipation_ok = rows.iter().all(|r| r.dissipation_ok);
    if !args.quiet {
        for row in &rows {
            println!(
                "n = {:4}  tau = {:.6}  gap to 2n = {:.6e}  holder(1/4) = {:.4}",
                row.steps, row.tau, row.gap_to_double, row.holder_quarter
            );
        }
    }
    if let Err(e) = io::write_output(&config.out_dir, "study_tau.csv", &io::tau_study_csv(&rows)) {
        return io_error(e);
    }
    if !dissipation_ok {
        eprintln!(
            "error: {{\"kind\": \"diagnostic\", \"message\": \"dissipation bound violated\"}}"
        );
        return ExitCode::from(EXIT_DIAGNOSTIC);
    }
    ExitCode::SUCCESS
}

fn do_certify(seed: u64, instances: usize, quiet: bool) -> ExitCode {
    let report = run_certification(seed, instances);
    if !quiet {
        println!(
            "certify: {} instances, max gap {:.3e}, degenerate {}, mismatches {}, {:.2}s",
            report.instances,
            report.max_gap,
            report.degenerate,
            report.active_set_mismatches,
            report.elapsed_seconds
        );
        for failure in &report.failures {
            println!("  {failure}");
        }
    }
    // degenerate ties are tolerated up to the 2% certification budget
    let budget = (instances / 50).max(1);
    if report.passed(1e-8, budget) {
        ExitCode::SUCCESS
    } else {
        eprintln!("error: {{\"kind\": \"solver\", \"message\": \"certification failed\"}}");
        ExitCode::from(EXIT_SOLVER)
    }
}
