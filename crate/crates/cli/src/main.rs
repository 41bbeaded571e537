use std::process::ExitCode;

use clap::{Parser, Subcommand};

use rlab_cli::{
    cmd_analyze, cmd_check_poincare, cmd_check_quasiconvex, cmd_parametrize, cmd_zoo_generate, epsilon_failure_json,
    CliError, RunConfig, ZooArgs,
};

#[derive(Parser)]
#[command(name = "rlab", version, about = "Multiscale flatness and parametrization of sampled surfaces")]
struct Cli {
    /// Worker threads; 0 or absent uses all cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ahlfors ratios, flatness table and Carleson sums.
    Analyze(RunConfig),
    /// Coherent ball/plane collection and the flow it drives.
    Parametrize(RunConfig),
    #[command(subcommand)]
    Check(Check),
    #[command(subcommand)]
    Zoo(Zoo),
}

#[derive(Subcommand)]
enum Check {
    /// Empirical Poincaré constant.
    Poincare(RunConfig),
    /// Intrinsic-to-Euclidean distance ratio.
    Quasiconvex(RunConfig),
}

#[derive(Subcommand)]
enum Zoo {
    /// Write a synthetic surface and its expectations.
    Generate(ZooArgs),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("RLAB_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    if let Some(t) = cli.threads.filter(|&t| t > 0) {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            log::warn!("thread pool already initialised: {e}");
        }
    }
    let result = match &cli.command {
        Command::Analyze(cfg) => cmd_analyze(cfg),
        Command::Parametrize(cfg) => cmd_parametrize(cfg),
        Command::Check(Check::Poincare(cfg)) => cmd_check_poincare(cfg),
        Command::Check(Check::Quasiconvex(cfg)) => cmd_check_quasiconvex(cfg),
        Command::Zoo(Zoo::Generate(args)) => cmd_zoo_generate(args),
    };
    match result {
        Ok(paths) => {
            for p in paths {
                log::info!("wrote {}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            match &e {
                CliError::EpsilonExceeded { achieved, target, worst } => {
                    eprintln!("{}", epsilon_failure_json(*achieved, *target, worst))
                }
                other => eprintln!("error: {other}"),
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
