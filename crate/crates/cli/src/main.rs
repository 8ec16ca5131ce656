mod args;
mod commands;
mod output;

use std::io::Write;
use std::path::Path;
use std::process::ExitCode;

use clap::Parser;
use thiserror::Error;

use args::{Cli, Command, OutputFormat};
use commands::Context;
use output::Output;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] lrscale::Error),
    #[error("{0}")]
    Usage(String),
    #[error("failed to write {path}: {source}")]
    Write {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    fn code(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.code(),
            CliError::Usage(_) => "usage",
            CliError::Write { .. } => "io",
        }
    }

    /// 2 when a fit failed on valid input, 1 for everything else.
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.is_fit_failure() => 2,
            _ => 1,
        }
    }
}

fn command_name(command: &Command) -> &'static str {
    match command {
        Command::Ingest(_) => "ingest",
        Command::FitLoss(_) => "fit-loss",
        Command::FitLaw(_) => "fit-law",
        Command::FitJoint(_) => "fit-joint",
        Command::Bootstrap(_) => "bootstrap",
        Command::Predict(_) => "predict",
        Command::TransferEval(_) => "transfer-eval",
        Command::Audit(_) => "audit",
        Command::SuggestLrs(_) => "suggest-lrs",
        Command::Synth(_) => "synth",
        Command::Report(_) => "report",
    }
}

fn dispatch(cli: &Cli, ctx: &Context) -> Result<Output, CliError> {
    match &cli.command {
        Command::Ingest(a) => commands::ingest(a),
        Command::FitLoss(a) => commands::fit_loss(a),
        Command::FitLaw(a) => commands::fit_law(a),
        Command::FitJoint(a) => commands::fit_joint(a, ctx),
        Command::Bootstrap(a) => commands::run_bootstrap(a, ctx),
        Command::Predict(a) => commands::predict(a),
        Command::TransferEval(a) => commands::transfer_eval(a),
        Command::Audit(a) => commands::audit(a),
        Command::SuggestLrs(a) => commands::suggest_lrs(a),
        Command::Synth(a) => commands::synth(a),
        Command::Report(a) => commands::report(a, ctx),
    }
}

fn pretty(value: &serde_json::Value) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("json values serialize");
    text.push('\n');
    text
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|source| CliError::Write {
        path: path.display().to_string(),
        source,
    })
}

fn write_out_dir(dir: &Path, cli: &Cli, name: &str, output: &Output) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|source| CliError::Write {
        path: dir.display().to_string(),
        source,
    })?;
    let config = serde_json::to_value(cli).expect("arguments serialize");
    write_file(dir, "config.json", &pretty(&config))?;
    if !output.json.is_null() {
        write_file(dir, &format!("{name}.json"), &pretty(&output.json))?;
        write_file(dir, &format!("{name}.txt"), &output.text)?;
    }
    for (file, contents) in &output.files {
        write_file(dir, file, contents)?;
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<(), CliError> {
    if cli.jobs == 0 {
        return Err(CliError::Usage("--jobs must be at least 1".into()));
    }
    if cli.jobs > 1 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.jobs)
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot start {} worker threads: {e}", cli.jobs)))?;
    }
    let ctx = Context { parallel: cli.jobs > 1 };
    let name = command_name(&cli.command);
    let output = dispatch(cli, &ctx)?;

    let stdout = match cli.format {
        // Synth emits records; its JSON form is JSONL.
        OutputFormat::Json if output.json.is_null() => output.text.clone(),
        OutputFormat::Json => pretty(&output.json),
        OutputFormat::Text => output.text.clone(),
        OutputFormat::Csv => output
            .csv
            .clone()
            .ok_or_else(|| CliError::Usage(format!("`{name}` has no csv output")))?,
    };
    if let Some(dir) = &cli.out_dir {
        write_out_dir(dir, cli, name, &output)?;
    }
    let mut lock = std::io::stdout().lock();
    // A closed pipe downstream is not an error worth reporting.
    let _ = lock.write_all(stdout.as_bytes()).and_then(|()| lock.flush());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.code());
            ExitCode::from(e.exit_code())
        }
    }
}
