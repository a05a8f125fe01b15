use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use loja_jet::loja::Condition;
use loja_jet_cli::{
    parse_problem, report_document, reproduce_example, run_problem, CliError, CliResult, Command, EXAMPLE_IDS,
    EXIT_INPUT, EXIT_OK, EXIT_UNDECIDED,
};
use serde_json::Value;

/// Local-minimum analysis through Taylor jets and Łojasiewicz inequalities.
///
/// Exit codes: 0 completed, 2 undecided verdict or failed reproduction,
/// 1 input error.
#[derive(Parser)]
#[command(name = "loja-jet", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    /// Problem file (JSON)
    #[arg(long, global = true)]
    spec: Option<PathBuf>,
    /// Write the report here instead of stdout
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Override the sampler seed
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Taylor jet of degree r at x̄
    Jet,
    /// Resolve Σ and check that it covers the critical points near x̄
    Sigma,
    /// Estimate one Łojasiewicz-type condition
    Loja {
        /// ii (growth), iii (gradient), iv (mixed) or v (horn)
        #[arg(long, default_value = "iii", value_parser = parse_condition)]
        condition: Condition,
        /// Horn width for condition v; without it the width sweep is also reported
        #[arg(long)]
        wbar: Option<f64>,
    },
    /// Decide whether x̄ is a local minimum
    Decide,
    /// Check stability of the minimum under the perturbation in the problem file
    Perturb,
    /// Reproduce a worked example (all of them when no id is given)
    Reproduce {
        #[arg(long)]
        example: Option<String>,
    },
}

fn parse_condition(s: &str) -> Result<Condition, String> {
    Condition::parse(s).ok_or_else(|| format!("unknown condition `{s}`; use ii, iii, iv or v"))
}

fn run(cli: &Cli) -> CliResult<(String, Value, i32)> {
    let cmd = match &cli.command {
        Cmd::Reproduce { example } => {
            let ids: Vec<&str> = match example {
                Some(id) => vec![id.as_str()],
                None => EXAMPLE_IDS.to_vec(),
            };
            let reports = ids.iter().map(|id| reproduce_example(id)).collect::<CliResult<Vec<_>>>()?;
            let pass = reports.iter().all(|r| r.pass);
            let result = serde_json::json!({ "pass": pass, "examples": reports });
            let doc = report_document("reproduce", None, None, result);
            return Ok(("reproduce".into(), doc, if pass { EXIT_OK } else { EXIT_UNDECIDED }));
        }
        Cmd::Jet => Command::Jet,
        Cmd::Sigma => Command::Sigma,
        Cmd::Loja { condition, wbar } => Command::Loja {
            condition: *condition,
            w_bar: *wbar,
        },
        Cmd::Decide => Command::Decide,
        Cmd::Perturb => Command::Perturb,
    };
    let path = cli
        .spec
        .as_ref()
        .ok_or_else(|| CliError::Input(format!("--spec FILE is required for `{}`", cmd.name())))?;
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
    let mut spec = parse_problem(&text)?;
    if let Some(s) = cli.seed {
        spec.sampler.seed = s;
    }
    let out = run_problem(&spec, cmd, None)?;
    let doc = report_document(cmd.name(), Some(&spec), Some(spec.sampler.seed), out.result);
    Ok((cmd.name().into(), doc, out.exit_code))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match run(&cli) {
        Ok((_, doc, code)) => {
            let text = serde_json::to_string_pretty(&doc).expect("report serializes") + "\n";
            let written = match &cli.out {
                Some(p) => std::fs::write(p, text).map_err(|e| format!("cannot write {}: {e}", p.display())),
                None => {
                    print!("{text}");
                    Ok(())
                }
            };
            match written {
                Ok(()) => code,
                Err(e) => {
                    eprintln!("error: {e}");
                    EXIT_INPUT
                }
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_INPUT
        }
    };
    ExitCode::from(code as u8)
}
