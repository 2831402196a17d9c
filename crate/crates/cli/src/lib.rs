//! The `selfscope` command line.
//!
//! Every command resolves one run configuration, does its work, and writes
//! `<name>.json`, `<name>.txt` and the resolved `<name>.config.toml` to the
//! output directory. Wall-clock times go to `<name>.timestamps.json` so the
//! other files are byte-identical across reruns with the same seed.

pub mod args;
pub mod commands;
pub mod config;
pub mod output;

use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use serde_json::json;

use args::{AnnotateCommand, Cli, Command, CorpusCommand, EvaluateCommand, FeaturesCommand, OntologyCommand};
use config::{resolve, Needs, RunConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration: {}", .0.join("; "))]
    Config(Vec<String>),
    #[error("{0}")]
    Usage(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] selfscope_core::Error),
}

impl CliError {
    pub fn config(errors: Vec<String>) -> Self {
        CliError::Config(errors)
    }

    pub fn usage(message: impl Into<String>) -> Self {
        CliError::Usage(message.into())
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Usage(_) => "usage",
            CliError::Io { .. } => "io",
            CliError::Core(_) => "runtime",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Usage(_) => 2,
            _ => 1,
        }
    }

    /// The JSON document printed on stderr.
    pub fn to_json(&self) -> String {
        let details = match self {
            CliError::Config(errors) => errors.clone(),
            _ => Vec::new(),
        };
        json!({"error": {"kind": self.kind(), "message": self.to_string(), "details": details}}).to_string()
    }
}

fn needs(command: &Command) -> Needs {
    let all = Needs {
        seed: true,
        models: true,
        paths: true,
    };
    match command {
        Command::Features(_) => Needs {
            seed: true,
            ..Needs::default()
        },
        Command::Predict(_) => Needs {
            seed: true,
            ..Needs::default()
        },
        Command::Train | Command::Evaluate(_) | Command::Compare | Command::Importance(_) | Command::Bias => all,
        _ => Needs::default(),
    }
}

/// Runs one parsed invocation. `on_bound` is told the address the service
/// listens on.
pub fn run(cli: Cli, on_bound: impl FnOnce(SocketAddr)) -> Result<(), CliError> {
    let config = match &cli.global.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    }
    .with_flags(&cli.global);
    let r = resolve(config, needs(&cli.command))?;
    let started = chrono::Utc::now();
    let out = match &cli.command {
        Command::Ontology(OntologyCommand::Validate { file }) => commands::ontology_validate(&r, file.as_deref())?,
        Command::Ontology(OntologyCommand::List { depth }) => commands::ontology_list(&r, depth)?,
        Command::Corpus(CorpusCommand::Import { file, manifest }) => commands::corpus_import(&r, file, manifest)?,
        Command::Corpus(CorpusCommand::Segment { into }) => commands::corpus_segment(&r, into.as_deref())?,
        Command::Corpus(CorpusCommand::Stats) => commands::corpus_stats(&r)?,
        Command::Annotate(AnnotateCommand::Export) => commands::annotate_export(&r)?,
        Command::Annotate(AnnotateCommand::Import {
            file,
            annotator,
            origin,
        }) => commands::annotate_import(&r, file, annotator.as_deref(), *origin)?,
        Command::Annotate(AnnotateCommand::Agree) => commands::annotate_agree(&r)?,
        Command::Annotate(AnnotateCommand::Adjudicate) => commands::annotate_adjudicate(&r)?,
        Command::Features(FeaturesCommand::Fit) => commands::features_fit(&r)?,
        Command::Train => commands::train(&r)?,
        Command::Predict(a) => commands::predict(&r, a.text.as_deref(), a.input.as_deref())?,
        Command::Evaluate(EvaluateCommand::Cv) => commands::evaluate_cv(&r)?,
        Command::Compare => commands::compare(&r)?,
        Command::Importance(a) => commands::importance(&r, a.method, a.repeats, a.top)?,
        Command::Bias => commands::bias(&r)?,
        Command::Serve(a) => {
            let service = selfscope_service::ServiceConfig {
                root: r.root.clone(),
                bind: SocketAddr::new(a.bind, a.port),
                seed: r.seed,
            };
            return selfscope_service::run(service, on_bound).map_err(|e| CliError::io(&r.root, e));
        }
    };
    out.write(&r, started)
}
