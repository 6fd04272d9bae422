use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::Value;

use cpquant::scenario::{run_scenario, Inputs, Params, Scenario, ScenarioError, ScenarioKind};

/// Channel dynamics and transfer-operator quantization workbench.
///
/// Input options take a path to a JSON document or an inline JSON document.
/// The JSON report goes to --out, or to stdout. With --csv, stdout carries the
/// orbit trace instead of the report.
#[derive(Parser)]
#[command(name = "cpquant", version)]
struct Cli {
    /// Numerical tolerance
    #[arg(long, global = true)]
    tol: Option<f64>,

    /// Iteration cap
    #[arg(long = "max-iter", global = true)]
    max_iter: Option<u64>,

    /// Seed of the random generator (default 0)
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Write the JSON report here
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Print the CSV orbit trace (evolve and limit)
    #[arg(long, global = true)]
    csv: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Orbit of a state under a channel
    Evolve(InputArgs),
    /// Periodic omega-limit set of a state
    Limit(InputArgs),
    /// Cesaro fixed point and attractor component of a state
    Fixpoint(InputArgs),
    /// Diagonal Kraus solution of the quantization equation
    Quantize(InputArgs),
    /// Diagram residual of given Kraus operators and off-diagonal consistency
    Verify(InputArgs),
    /// Sampled check that one Kraus family quantizes every observable
    Universal(InputArgs),
    /// Pushforward of a discrete measure
    Markov(InputArgs),
    /// Run a scenario file
    Run { file: PathBuf },
}

#[derive(Args)]
struct InputArgs {
    #[arg(long)]
    channel: Option<String>,
    #[arg(long)]
    state: Option<String>,
    #[arg(long)]
    transfer: Option<String>,
    #[arg(long)]
    measure: Option<String>,
    #[arg(long)]
    function: Option<String>,
    #[arg(long)]
    kraus: Option<String>,
    #[arg(long)]
    phases: Option<String>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long = "max-period")]
    max_period: Option<usize>,
    #[arg(long)]
    window: Option<usize>,
}

fn input_value(name: &str, raw: Option<String>) -> Result<Option<Value>, ScenarioError> {
    let Some(raw) = raw else { return Ok(None) };
    let trimmed = raw.trim_start();
    if trimmed.starts_with('{') || trimmed.starts_with('[') {
        return serde_json::from_str(trimmed)
            .map(Some)
            .map_err(|e| ScenarioError::Parse {
                field: format!("--{name}"),
                message: e.to_string(),
            });
    }
    Ok(Some(Value::String(raw)))
}

impl InputArgs {
    fn into_scenario(self, kind: ScenarioKind) -> Result<Scenario, ScenarioError> {
        let inputs = Inputs {
            channel: input_value("channel", self.channel)?,
            state: input_value("state", self.state)?,
            transfer: input_value("transfer", self.transfer)?,
            measure: input_value("measure", self.measure)?,
            function: input_value("function", self.function)?,
            kraus: input_value("kraus", self.kraus)?,
            phases: input_value("phases", self.phases)?,
        };
        let params = Params {
            steps: self.steps,
            samples: self.samples,
            max_period: self.max_period,
            window: self.window,
            ..Params::default()
        };
        Ok(Scenario::new(kind, inputs, params, PathBuf::from(".")))
    }
}

fn execute(cli: Cli) -> Result<(), ScenarioError> {
    let mut scenario = match cli.command {
        Command::Run { file } => Scenario::from_path(&file)?,
        Command::Evolve(a) => a.into_scenario(ScenarioKind::Evolve)?,
        Command::Limit(a) => a.into_scenario(ScenarioKind::Limit)?,
        Command::Fixpoint(a) => a.into_scenario(ScenarioKind::Fixpoint)?,
        Command::Quantize(a) => a.into_scenario(ScenarioKind::Quantize)?,
        Command::Verify(a) => a.into_scenario(ScenarioKind::Verify)?,
        Command::Universal(a) => a.into_scenario(ScenarioKind::Universal)?,
        Command::Markov(a) => a.into_scenario(ScenarioKind::Markov)?,
    };
    scenario.params.overlay(&Params {
        tol: cli.tol,
        max_iter: cli.max_iter,
        seed: cli.seed,
        ..Params::default()
    });
    if cli.csv && !scenario.kind.has_trace() {
        return Err(ScenarioError::Validation {
            field: "--csv".into(),
            message: "only evolve and limit produce a trace".into(),
        });
    }

    let outcome = run_scenario(&scenario)?;
    let text = serde_json::to_string_pretty(&outcome.report).expect("reports serialize") + "\n";
    if let Some(path) = &cli.out {
        fs::write(path, &text).map_err(|e| ScenarioError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
    }
    if cli.csv {
        print!("{}", outcome.trace.unwrap_or_default());
    } else if cli.out.is_none() {
        print!("{text}");
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let err = ScenarioError::Parse {
                field: "arguments".into(),
                message: e.kind().to_string(),
            };
            let _ = e.print();
            eprintln!("{}", err.to_json());
            return ExitCode::from(err.exit_code() as u8);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
