//! Command-line front end: model files, built-in scenarios and reports.

pub mod dsl;
pub mod model;
pub mod report;
pub mod scenarios;
pub mod tasks;

use clap::{Parser, Subcommand, ValueEnum};
use dsl::DslError;
use report::Report;
use std::path::PathBuf;
use tasks::Task;

pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("parse error at {0}")]
    Parse(#[from] DslError),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("analysis failed: {0}")]
    Analysis(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Analysis(_) => 1,
            _ => 2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Text,
}

pub fn emit_report(r: &Report, format: Format) -> String {
    match format {
        Format::Json => r.to_json() + "\n",
        Format::Text => r.to_text(),
    }
}

pub fn analyze_text(text: &str, tasks: &[Task], seed: u64) -> Result<Report, CliError> {
    let m = model::build(&dsl::parse_model(text)?)?;
    let checks = tasks::run_tasks(&m, tasks, seed)?;
    Ok(Report::new(text, seed, checks))
}

/// Scenario model text with `key = value` overrides applied.
pub fn scenario_text(name: &str, overrides: &[(String, String)]) -> Result<String, CliError> {
    let sc = scenarios::find(name).ok_or_else(|| {
        let known: Vec<&str> = scenarios::SCENARIOS.iter().map(|s| s.name).collect();
        CliError::Usage(format!("unknown scenario `{name}` (known: {})", known.join(", ")))
    })?;
    let mut text = sc.model.to_string();
    for (k, v) in overrides {
        let key = match k.as_str() {
            "u_l" => "ul",
            "u_r" => "ur",
            other => other,
        };
        text = dsl::apply_override(&text, key, v).map_err(CliError::Usage)?;
    }
    Ok(text)
}

pub fn run_scenario(name: &str, overrides: &[(String, String)], seed: u64) -> Result<Report, CliError> {
    let text = scenario_text(name, overrides)?;
    let m = model::build(&dsl::parse_model(&text)?)?;
    let mut checks = tasks::run_tasks(&m, &Task::ALL, seed)?;
    checks.extend(scenarios::find(name).expect("known scenario").extras(&m, seed));
    Ok(Report::new(&text, seed, checks))
}

#[derive(Parser)]
#[command(name = "weaksym", version, about = "Symmetry groups and associated solutions of PDE systems")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a built-in scenario. Flags: --format json|text, --seed N,
    /// --report FILE, --emit-model, and --KEY VALUE for scenario constants.
    Scenario {
        name: String,
        #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
        args: Vec<String>,
    },
    /// Run pipelines on a model file.
    Analyze {
        file: PathBuf,
        /// Comma-separated subset of factor, determining, verify, associate.
        #[arg(long, value_delimiter = ',')]
        tasks: Option<Vec<String>>,
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// List the built-in scenarios.
    List,
}

struct ScenarioArgs {
    format: Format,
    seed: u64,
    report: Option<PathBuf>,
    emit_model: bool,
    overrides: Vec<(String, String)>,
}

fn scenario_args(args: &[String]) -> Result<ScenarioArgs, CliError> {
    let mut out = ScenarioArgs {
        format: Format::Text,
        seed: DEFAULT_SEED,
        report: None,
        emit_model: false,
        overrides: Vec::new(),
    };
    let mut it = args.iter();
    while let Some(a) = it.next() {
        let key = a
            .strip_prefix("--")
            .ok_or_else(|| CliError::Usage(format!("unexpected argument `{a}`")))?;
        if key == "emit-model" {
            out.emit_model = true;
            continue;
        }
        let (key, value) = match key.split_once('=') {
            Some((k, v)) => (k, v.to_string()),
            None => (key, it.next().ok_or_else(|| CliError::Usage(format!("`--{key}` needs a value")))?.clone()),
        };
        match key {
            "format" => {
                out.format = Format::from_str(&value, true).map_err(|_| CliError::Usage(format!("unknown format `{value}`")))?;
            }
            "seed" => out.seed = value.parse().map_err(|_| CliError::Usage(format!("invalid seed `{value}`")))?,
            "report" => out.report = Some(PathBuf::from(value)),
            _ => out.overrides.push((key.to_string(), value)),
        }
    }
    Ok(out)
}

fn finish(r: &Report, format: Format, path: Option<&PathBuf>) -> Result<i32, CliError> {
    if let Some(p) = path {
        std::fs::write(p, r.to_json() + "\n").map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
    }
    print!("{}", emit_report(r, format));
    Ok(if r.passed() { 0 } else { 1 })
}

fn dispatch(cli: Cli) -> Result<i32, CliError> {
    match cli.cmd {
        Cmd::List => {
            for s in &scenarios::SCENARIOS {
                println!("{:<26} {}", s.name, s.summary);
            }
            Ok(0)
        }
        Cmd::Scenario { name, args } => {
            let a = scenario_args(&args)?;
            if a.emit_model {
                print!("{}", scenario_text(&name, &a.overrides)?);
                return Ok(0);
            }
            let r = run_scenario(&name, &a.overrides, a.seed)?;
            finish(&r, a.format, a.report.as_ref())
        }
        Cmd::Analyze {
            file,
            tasks,
            report,
            seed,
            format,
        } => {
            let text = std::fs::read_to_string(&file).map_err(|e| CliError::Io(format!("{}: {e}", file.display())))?;
            let tasks = match tasks {
                None => Task::ALL.to_vec(),
                Some(list) => list
                    .iter()
                    .filter(|t| !t.trim().is_empty())
                    .map(|t| Task::parse(t.trim()).ok_or_else(|| CliError::Usage(format!("unknown task `{t}`"))))
                    .collect::<Result<_, _>>()?,
            };
            let r = analyze_text(&text, &tasks, seed).map_err(|e| match e {
                CliError::Parse(d) => CliError::Usage(format!("{}: {d}", file.display())),
                other => other,
            })?;
            finish(&r, format, report.as_ref())
        }
    }
}

/// Runs the command line and returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
