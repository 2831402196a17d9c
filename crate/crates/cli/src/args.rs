use std::net::IpAddr;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "selfscope", version, about = "Self-aspect annotation, classification and evaluation toolkit")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

/// Run settings. Each flag overrides the same key of `--config`.
#[derive(Debug, Clone, Default, Args)]
pub struct GlobalArgs {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Project directory; defaults to $SELFSCOPE_HOME, then the current directory.
    #[arg(long, global = true)]
    pub project: Option<PathBuf>,
    #[arg(long, global = true)]
    pub ontology: Option<PathBuf>,
    /// Dataset ids or dataset directories; comma-separated or repeated.
    #[arg(long, global = true, value_delimiter = ',')]
    pub corpus: Vec<String>,
    /// Feature source for models named without one.
    #[arg(long, global = true, value_parser = ["learned", "lexicon", "hybrid", "embedding"])]
    pub features: Option<String>,
    /// Model names such as `logreg+lexicon`; comma-separated or repeated.
    #[arg(long, global = true, value_delimiter = ',')]
    pub model: Vec<String>,
    #[arg(long, global = true)]
    pub router: Option<PathBuf>,
    #[arg(long, global = true)]
    pub k: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, value_parser = ["sentence", "paragraph", "document"])]
    pub level: Option<String>,
    /// Label paths; comma-separated or repeated.
    #[arg(long, global = true, value_delimiter = ',')]
    pub paths: Vec<String>,
    /// Output directory; defaults to the project's reports directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub lexicon: Option<PathBuf>,
    /// Precomputed embedding file, or `hashed:<dim>`.
    #[arg(long, global = true)]
    pub embeddings: Option<String>,
    #[arg(long, global = true)]
    pub substitutions: Option<PathBuf>,
    /// Annotator whose vote settles ties during adjudication.
    #[arg(long, global = true)]
    pub adjudicator: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Inspect or check the label ontology.
    #[command(subcommand)]
    Ontology(OntologyCommand),
    /// Import, segment and describe datasets.
    #[command(subcommand)]
    Corpus(CorpusCommand),
    /// Move annotations in and out of the store; agreement and adjudication.
    #[command(subcommand)]
    Annotate(AnnotateCommand),
    /// Fit a feature space.
    #[command(subcommand)]
    Features(FeaturesCommand),
    /// Train one model per (path, model) and store it in the project.
    Train,
    /// Predict label paths for new text with stored models.
    Predict(PredictArgs),
    /// Cross-validate models.
    #[command(subcommand)]
    Evaluate(EvaluateCommand),
    /// Cross-validate several models and test their differences.
    Compare,
    /// Rank features by coefficient or permutation importance.
    Importance(ImportanceArgs),
    /// Minimal-pair invariance probe.
    Bias,
    /// Start the local HTTP API.
    Serve(ServeArgs),
}

#[derive(Debug, Subcommand)]
pub enum OntologyCommand {
    Validate {
        /// Ontology file; the configured ontology otherwise.
        file: Option<PathBuf>,
    },
    List {
        #[arg(long, default_value = "mode", value_parser = ["aspect", "element", "mode"])]
        depth: String,
    },
}

#[derive(Debug, Subcommand)]
pub enum CorpusCommand {
    Import {
        /// JSONL instances with `id` and `text`.
        file: PathBuf,
        /// Dataset manifest (TOML).
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Split every instance of the selected datasets into units at `--level`.
    Segment {
        /// Target dataset id; `<source>-<level>` by default.
        #[arg(long)]
        into: Option<String>,
    },
    Stats,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OriginArg {
    Human,
    ExternalModel,
}

#[derive(Debug, Subcommand)]
pub enum AnnotateCommand {
    Export,
    Import {
        file: PathBuf,
        /// Overrides the annotator id of every row.
        #[arg(long)]
        annotator: Option<String>,
        #[arg(long, value_enum)]
        origin: Option<OriginArg>,
    },
    Agree,
    Adjudicate,
}

#[derive(Debug, Subcommand)]
pub enum FeaturesCommand {
    Fit,
}

#[derive(Debug, Subcommand)]
pub enum EvaluateCommand {
    Cv,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long, conflicts_with = "input")]
    pub text: Option<String>,
    /// Text file to classify.
    #[arg(long)]
    pub input: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Coefficients,
    Permutation,
}

#[derive(Debug, Args)]
pub struct ImportanceArgs {
    #[arg(long, value_enum, default_value = "permutation")]
    pub method: MethodArg,
    #[arg(long, default_value_t = 20)]
    pub repeats: usize,
    /// Rows in the text summary.
    #[arg(long, default_value_t = 20)]
    pub top: usize,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value_t = selfscope_service::DEFAULT_PORT)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub bind: IpAddr,
}
