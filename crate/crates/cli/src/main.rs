//! `hstf`: data generation, training, evaluation, ablations, gradient
//! verification and complexity accounting.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Arg, ArgAction, ArgMatches, Command};

use config::{Key, ABLATE_KEYS, EVAL_KEYS, GEN_KEYS, GRADCHECK_KEYS, MODEL_KEYS, STATS_KEYS, TRAIN_KEYS};

pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_DATA: u8 = 3;
pub const EXIT_VERIFY: u8 = 4;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self { code: EXIT_CONFIG, message: message.into() }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self { code: EXIT_DATA, message: message.into() }
    }

    pub fn verify(message: impl Into<String>) -> Self {
        Self { code: EXIT_VERIFY, message: message.into() }
    }

    pub fn data_io(e: std::io::Error) -> Self {
        Self::data(e.to_string())
    }
}

impl From<hstformer::Error> for CliError {
    fn from(e: hstformer::Error) -> Self {
        use hstformer::Error as E;
        let code = match e {
            E::Config(_) | E::Tensor(_) => EXIT_CONFIG,
            E::Format(_) | E::Data(_) | E::Io(_) | E::Json(_) => EXIT_DATA,
        };
        Self { code, message: e.to_string() }
    }
}

fn schema(name: &str) -> Vec<Key> {
    let parts: &[&[Key]] = match name {
        "gen-data" => &[GEN_KEYS],
        "train" => &[MODEL_KEYS, TRAIN_KEYS],
        "eval" => &[EVAL_KEYS],
        "stats" => &[STATS_KEYS],
        "gradcheck" => &[GRADCHECK_KEYS],
        "count-params" => &[MODEL_KEYS],
        "ablate" => &[MODEL_KEYS, TRAIN_KEYS, ABLATE_KEYS],
        _ => unreachable!("unknown command {name}"),
    };
    parts.iter().flat_map(|p| p.iter().copied()).collect()
}

const COMMANDS: &[(&str, &str)] = &[
    ("gen-data", "Generate a synthetic paired 2D/3D dataset"),
    ("train", "Train a model and write checkpoint + history"),
    ("eval", "Evaluate a checkpoint and write a metric report"),
    ("stats", "Frame-delta MPJPE histograms over sample intervals"),
    ("gradcheck", "Finite-difference checks of every primitive and the full model"),
    ("count-params", "Exact parameter and multiply-accumulate counts"),
    ("ablate", "Train and evaluate the ablation matrices"),
];

fn cli() -> Command {
    let mut root = Command::new("hstf")
        .about("Hierarchical spatial-temporal transformer for 2D-to-3D pose lifting")
        .version(env!("CARGO_PKG_VERSION"))
        .subcommand_required(true)
        .arg_required_else_help(true);
    for &(name, about) in COMMANDS {
        let mut sub = Command::new(name).about(about).arg(
            Arg::new("config")
                .long("config")
                .value_name("PATH")
                .value_parser(clap::value_parser!(PathBuf))
                .help("key=value configuration file"),
        );
        for (key, default, help) in schema(name) {
            let mut arg = Arg::new(key)
                .long(key)
                .value_name("VALUE")
                .action(ArgAction::Set)
                .help(format!("{help} [default: {default}]"));
            let dashed = key.replace('_', "-");
            if dashed != key {
                arg = arg.alias(dashed);
            }
            sub = sub.arg(arg);
        }
        root = root.subcommand(sub);
    }
    root
}

fn overrides(name: &str, m: &ArgMatches) -> Vec<(String, String)> {
    schema(name)
        .into_iter()
        .filter_map(|(key, _, _)| m.get_one::<String>(key).map(|v| (key.to_string(), v.clone())))
        .collect()
}

fn run() -> Result<(), CliError> {
    let matches = cli().try_get_matches().map_err(|e| {
        if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) {
            let _ = e.print();
            std::process::exit(0);
        }
        CliError::config(
            e.to_string().lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ").to_string(),
        )
    })?;
    let (name, sub) = matches.subcommand().expect("subcommand required");
    let path = sub.get_one::<PathBuf>("config").map(PathBuf::as_path);
    let cfg = config::RunConfig::resolve(&schema(name), path, &overrides(name, sub))?;
    match name {
        "gen-data" => commands::gen_data(&cfg),
        "train" => commands::train(&cfg),
        "eval" => commands::eval(&cfg),
        "stats" => commands::stats(&cfg),
        "gradcheck" => commands::gradcheck(&cfg),
        "count-params" => commands::count_params(&cfg),
        "ablate" => commands::ablate(&cfg),
        _ => unreachable!(),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("hstf: {}", e.message.lines().next().unwrap_or_default());
            ExitCode::from(e.code)
        }
    }
}
