use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ictmc_cli::{
    cmd_bounds, cmd_compare, cmd_info, cmd_solve, load_problem, CommandError, GambleSpec, Method, Output,
    OutputFormat, RunConfig,
};

/// Lower and upper expectations of imprecise continuous-time Markov chains.
#[derive(Parser, Debug)]
#[command(name = "ictmc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Propagate a gamble over [0, T].
    Solve(RunArgs),
    /// Run the adaptive and both uniform-grid methods and report the differences.
    Compare(RunArgs),
    /// Summarise a problem file.
    Info {
        #[arg(long)]
        problem: PathBuf,
        #[arg(long, value_enum, default_value = "text")]
        output: OutputFormat,
    },
    /// Lower and upper probability of ending in a state, from every starting state.
    Bounds {
        #[arg(long)]
        state: usize,
        #[command(flatten)]
        run: RunArgs,
    },
}

#[derive(Args, Debug)]
struct RunArgs {
    #[arg(long)]
    problem: PathBuf,
    /// Comma-separated values, `state:i` or `neg-state:i` (0-based).
    #[arg(long = "h", allow_hyphen_values = true, default_value = "state:0")]
    h: GambleSpec,
    #[arg(long = "T", default_value_t = 1.0)]
    horizon: f64,
    #[arg(long, default_value_t = 1e-3)]
    max_error: f64,
    #[arg(long, value_enum, default_value = "adaptive")]
    method: Method,
    /// Grid size for the uniform methods.
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    dt_min: Option<f64>,
    #[arg(long, value_enum, default_value = "text")]
    output: OutputFormat,
    #[arg(long)]
    debug_invariants: bool,
    /// Compute the upper expectation instead of the lower one.
    #[arg(long)]
    upper: bool,
}

impl RunArgs {
    fn config(&self) -> RunConfig {
        RunConfig {
            h: self.h.clone(),
            horizon: self.horizon,
            max_error: self.max_error,
            method: self.method,
            steps: self.steps,
            dt_min: self.dt_min,
            output: self.output,
            debug_invariants: self.debug_invariants,
            upper: self.upper,
        }
    }
}

fn emit(out: &Output, format: OutputFormat) {
    match format {
        OutputFormat::Text => print!("{}", out.render_text()),
        OutputFormat::Structured => println!("{}", out.render_json()),
    }
}

fn run(cli: Cli) -> Result<(), (CommandError, OutputFormat)> {
    let (path, format) = match &cli.command {
        Command::Solve(r) | Command::Compare(r) | Command::Bounds { run: r, .. } => (&r.problem, r.output),
        Command::Info { problem, output } => (problem, *output),
    };
    let (file, model) = load_problem(path).map_err(|e| (e.into(), format))?;
    let name = file.name.clone().or_else(|| Some(path.display().to_string()));
    let out = match &cli.command {
        Command::Solve(r) => cmd_solve(&model, name, &r.config()).map(Output::Solve),
        Command::Compare(r) => cmd_compare(&model, name, &r.config()).map(Output::Compare),
        Command::Info { .. } => cmd_info(&model, name).map(Output::Info),
        Command::Bounds { state, run } => cmd_bounds(&model, name, *state, &run.config()).map(Output::Bounds),
    }
    .map_err(|e| (e, format))?;
    emit(&out, format);
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("ICTMC_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err((e, format)) => {
            eprintln!("error: {e}");
            if let CommandError::Budget { partial: Some(p), .. } = &e {
                eprintln!("partial trace up to the failing step:");
                emit(&Output::Solve((**p).clone()), format);
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
