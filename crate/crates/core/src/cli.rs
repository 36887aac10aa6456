//! `ecn` command-line interface.
//!
//! Every subcommand accepts `--manifest <path>`, which records the resolved
//! invocation as JSON; `ecn replay <path>` re-executes it.

use std::collections::{BTreeMap, HashMap};
use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{
    apply_setting, load_dataset, simulate_512_split, Corpus, EntityScope, Language, ParseOptions,
    Split, TaskSetting, TrainingScope,
};
use crate::error::{Error, Result};
use crate::evaluation::{
    corrected_recall, evaluate, multi_run, render_report, EvalReport, Metrics, ReportFormat,
};
use crate::features::{build_graph_instance, FeatureLayout, GraphInstance, DEFAULT_LABEL_DIM};
use crate::model::{Checkpoint, EcnConfig, Nonlinearity};
use crate::sidecar::{load_embedding_sidecar, load_token_counts, EmbeddingTable};
use crate::training::{train_with_callback, AdamConfig, LrDecay, TrainConfig};

pub const DATA_ROOT_ENV: &str = "ECN_DATA_ROOT";

#[derive(Debug, Parser)]
#[command(
    name = "ecn",
    version,
    about = "Edge convolution network for form relation extraction"
)]
pub struct Cli {
    /// Dataset directory (XFUND `<lang>.<split>.json` files and/or FUNSD folders).
    #[arg(long, global = true, env = DATA_ROOT_ENV)]
    pub data_root: Option<PathBuf>,

    /// Worker threads for document- and seed-level parallelism.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    /// Reject malformed boxes and dangling links instead of repairing them.
    #[arg(long, global = true)]
    pub strict: bool,

    /// Write the resolved invocation to this file.
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,

    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse a dataset and print per-language counts.
    Ingest,
    /// Train one model and write its checkpoint and loss log.
    Train(TrainArgs),
    /// Evaluate one or more checkpoints on the test split.
    Eval(EvalArgs),
    /// Count relations lost when documents are cut into 512-token windows.
    SplitReport(SplitReportArgs),
    /// Train and evaluate over several seeds.
    Experiment(ExperimentArgs),
    /// Write line-of-sight edges and edge features of documents as TSV.
    GraphDump(GraphDumpArgs),
    /// Re-execute a recorded manifest.
    Replay {
        /// Manifest written by `--manifest`.
        path: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TextSource {
    None,
    Sidecar(PathBuf),
}

impl FromStr for TextSource {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "none" => Ok(TextSource::None),
            "sidecar" | "sidecar=" => Err("`--text sidecar` needs a path: `sidecar=<path>`".into()),
            _ => match s.strip_prefix("sidecar=") {
                Some(path) => Ok(TextSource::Sidecar(PathBuf::from(path))),
                None => Err(format!("expected `none` or `sidecar=<path>`, got {s:?}")),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScopeArg {
    Hqa,
    Ohqa,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Switch {
    On,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Tsv,
    Markdown,
}

#[derive(Debug, Clone, Args)]
pub struct SettingArgs {
    /// Language to train on (monolingual) or to evaluate.
    #[arg(long, value_parser = parse_language)]
    pub lang: Option<Language>,

    /// Train on every language pooled; evaluate per language.
    #[arg(long)]
    pub multilingual: bool,

    /// Entity scope: without (hqa) or with (ohqa) `other` entities.
    #[arg(long, value_enum, default_value = "hqa")]
    pub setting: ScopeArg,

    /// Whether gold entity classes are model inputs.
    #[arg(long, value_enum, default_value = "on")]
    pub labels: Switch,

    /// Text features: `none` or `sidecar=<path>` to an `ecn-emb v1` file.
    #[arg(long, default_value = "none")]
    pub text: TextSource,
}

/// Network hyperparameters. Unset sizes follow the selected configuration
/// for the training scope.
#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// Node width d [default: 128, or 256 with --multilingual].
    #[arg(long)]
    pub node_dim: Option<usize>,

    /// Edge width d_e.
    #[arg(long, default_value_t = 128)]
    pub edge_dim: usize,

    /// Convolution layers L.
    #[arg(long, default_value_t = 6)]
    pub layers: usize,

    /// Stacked convolutions K [default: 6, or 8 with --multilingual].
    #[arg(long)]
    pub stacked_convolutions: Option<usize>,

    /// Decoder hidden width [default: node width].
    #[arg(long)]
    pub decoder_hidden: Option<usize>,

    /// Label embedding width.
    #[arg(long, default_value_t = DEFAULT_LABEL_DIM)]
    pub label_dim: usize,

    /// Nonlinearity.
    #[arg(long, value_enum, default_value = "relu")]
    pub nonlinearity: NonlinearityArg,

    /// Decision threshold θ on pair probabilities.
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NonlinearityArg {
    Relu,
}

#[derive(Debug, Clone, Args)]
pub struct OptimArgs {
    /// Adam learning rate.
    #[arg(long, default_value_t = 5e-4)]
    pub learning_rate: f64,

    /// Training epochs; 0 writes the initial checkpoint.
    #[arg(long, default_value_t = 400)]
    pub epochs: usize,

    /// Weight of positive pairs in the BCE loss.
    #[arg(long, default_value_t = 1.0)]
    pub positive_weight: f64,

    #[arg(long, default_value_t = 0.9)]
    pub beta1: f64,

    #[arg(long, default_value_t = 0.999)]
    pub beta2: f64,

    #[arg(long, default_value_t = 1e-8)]
    pub adam_epsilon: f64,

    /// L2 penalty added to the gradient.
    #[arg(long, default_value_t = 0.0)]
    pub weight_decay: f64,

    /// Clip the global gradient norm to this value.
    #[arg(long)]
    pub clip_norm: Option<f64>,

    /// Multiply the learning rate by --lr-decay-factor every N epochs.
    #[arg(long, requires = "lr_decay_factor")]
    pub lr_decay_every: Option<usize>,

    #[arg(long, requires = "lr_decay_every")]
    pub lr_decay_factor: Option<f64>,

    /// Visit documents in file order instead of a seeded shuffle.
    #[arg(long)]
    pub no_shuffle: bool,

    /// Hold out this fraction of training documents as a dev set, scored
    /// after every epoch into `seed-<n>.dev.tsv`. 0 trains on everything.
    #[arg(long, default_value_t = 0.0)]
    pub dev_fraction: f64,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub setting: SettingArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub optim: OptimArgs,

    /// Seed for initialization and shuffling.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Output directory for `seed-<n>.ckpt` and `seed-<n>.log.tsv`.
    #[arg(long, default_value = "runs")]
    pub out: PathBuf,

    /// Also write `seed-<n>.epoch-<e>.ckpt` every N epochs.
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub setting: SettingArgs,

    /// Checkpoint path; `{seed}` is replaced by each of --seeds.
    #[arg(long)]
    pub checkpoint: String,

    /// Comma-separated seeds for multi-run evaluation.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Vec<u64>,

    /// Override the checkpoint's decision threshold.
    #[arg(long)]
    pub threshold: Option<f64>,

    /// Cut test documents into 512-token windows using this token-count sidecar.
    #[arg(long)]
    pub split_tokens: Option<PathBuf>,

    /// Append a row with recall measured against the unsplit gold count.
    #[arg(long, requires = "full_gold")]
    pub corrected_recall: bool,

    /// `split-report` output (or `language<TAB>relations_before` TSV) with unsplit gold counts.
    #[arg(long)]
    pub full_gold: Option<PathBuf>,

    #[command(flatten)]
    pub report: ReportArgs,
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    /// Row label in the report.
    #[arg(long, default_value = "ECN")]
    pub name: String,

    #[arg(long, value_enum, default_value = "tsv")]
    pub format: FormatArg,

    /// Write the report here instead of stdout.
    #[arg(long)]
    pub report: Option<PathBuf>,

    /// Directory for one JSON record per seed.
    #[arg(long)]
    pub records: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SplitReportArgs {
    /// Token-count sidecar (`ecn-tokcount v1`).
    #[arg(long)]
    pub tokens: PathBuf,

    /// Which splits to report.
    #[arg(long, value_parser = parse_split, default_value = "train")]
    pub split: Split,
}

#[derive(Debug, Clone, Args)]
pub struct ExperimentArgs {
    #[command(flatten)]
    pub setting: SettingArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub optim: OptimArgs,

    /// First seed; --runs consecutive seeds are used unless --seeds is given.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    #[arg(long, default_value_t = 5)]
    pub runs: usize,

    /// Explicit comma-separated seeds.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Vec<u64>,

    /// Directory for checkpoints and loss logs.
    #[arg(long, default_value = "runs")]
    pub out: PathBuf,

    #[command(flatten)]
    pub report: ReportArgs,
}

#[derive(Debug, Clone, Args)]
pub struct GraphDumpArgs {
    #[arg(long, value_parser = parse_language)]
    pub lang: Language,

    #[arg(long, value_parser = parse_split, default_value = "train")]
    pub split: Split,

    #[arg(long, value_enum, default_value = "hqa")]
    pub setting: ScopeArg,

    /// Only this document.
    #[arg(long)]
    pub doc: Option<String>,

    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_language(s: &str) -> std::result::Result<Language, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_split(s: &str) -> std::result::Result<Split, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Canonical record of one invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format: String,
    /// Arguments after the program name, with `--manifest` removed and the
    /// data root made explicit.
    pub argv: Vec<String>,
    pub data_root: Option<PathBuf>,
    pub setting: Option<TaskSetting>,
    pub model: Option<EcnConfig>,
    pub train: Option<TrainConfig>,
    pub seeds: Vec<u64>,
    pub output: Option<PathBuf>,
}

const MANIFEST_FORMAT: &str = "ecn-manifest v1";

/// Parse `argv` (including the program name), run, and return the exit code.
pub fn run_from_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let _ = env_logger::Builder::new()
        .filter_level(match cli.verbose {
            0 => log::LevelFilter::Warn,
            1 => log::LevelFilter::Info,
            _ => log::LevelFilter::Debug,
        })
        .parse_default_env()
        .try_init();
    match run(cli, &argv) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli, argv: &[OsString]) -> Result<()> {
    if let Some(jobs) = cli.jobs {
        // A second call in the same process keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build_global();
    }
    if let Some(path) = &cli.manifest {
        let manifest = build_manifest(&cli, argv)?;
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))?;
    }
    let opts = ParseOptions { strict: cli.strict };
    let root = cli.data_root.as_deref();
    match &cli.command {
        Command::Ingest => cmd_ingest(data_root(root)?, opts),
        Command::Train(args) => cmd_train(data_root(root)?, opts, args),
        Command::Eval(args) => cmd_eval(data_root(root)?, opts, args),
        Command::SplitReport(args) => cmd_split_report(data_root(root)?, opts, args),
        Command::Experiment(args) => cmd_experiment(data_root(root)?, opts, args),
        Command::GraphDump(args) => cmd_graph_dump(data_root(root)?, opts, args),
        Command::Replay { path } => cmd_replay(path),
    }
}

fn data_root(root: Option<&Path>) -> Result<&Path> {
    root.ok_or_else(|| {
        Error::InvalidArgument(format!(
            "no dataset: pass --data-root or set {DATA_ROOT_ENV}"
        ))
    })
}

fn build_manifest(cli: &Cli, argv: &[OsString]) -> Result<RunManifest> {
    let mut args: Vec<String> = Vec::new();
    let mut iter = argv
        .iter()
        .skip(1)
        .map(|a| a.to_string_lossy().into_owned());
    while let Some(a) = iter.next() {
        if a == "--manifest" || a == "--data-root" {
            iter.next();
        } else if !(a.starts_with("--manifest=") || a.starts_with("--data-root=")) {
            args.push(a);
        }
    }
    let data_root = cli
        .data_root
        .as_ref()
        .map(|p| fs::canonicalize(p).unwrap_or_else(|_| p.clone()));
    let (setting, model, train, seeds, output) = match &cli.command {
        Command::Train(a) => {
            let s = task_setting(&a.setting)?;
            (
                Some(s),
                Some(model_config(&a.model, &s)),
                Some(train_config(&a.optim, a.seed)),
                vec![a.seed],
                Some(a.out.clone()),
            )
        }
        Command::Experiment(a) => {
            let s = task_setting(&a.setting)?;
            (
                Some(s),
                Some(model_config(&a.model, &s)),
                Some(train_config(&a.optim, a.seed)),
                experiment_seeds(a),
                Some(a.out.clone()),
            )
        }
        Command::Eval(a) => (
            Some(task_setting(&a.setting)?),
            None,
            None,
            a.seeds.clone(),
            a.report.report.clone(),
        ),
        Command::GraphDump(a) => (None, None, None, Vec::new(), Some(a.out.clone())),
        _ => (None, None, None, Vec::new(), None),
    };
    Ok(RunManifest {
        format: MANIFEST_FORMAT.into(),
        argv: args,
        data_root,
        setting,
        model,
        train,
        seeds,
        output,
    })
}

fn cmd_replay(path: &Path) -> Result<()> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let manifest: RunManifest = serde_path_to_error::deserialize(
        &mut serde_json::Deserializer::from_str(&text),
    )
    .map_err(|e| {
        Error::parse(
            path.display().to_string(),
            e.path().to_string(),
            e.inner().to_string(),
        )
    })?;
    if manifest.format != MANIFEST_FORMAT {
        return Err(Error::parse(
            path.display().to_string(),
            "format",
            format!("expected {MANIFEST_FORMAT:?}"),
        ));
    }
    let mut argv: Vec<OsString> = vec!["ecn".into()];
    if let Some(root) = &manifest.data_root {
        argv.push("--data-root".into());
        argv.push(root.into());
    }
    argv.extend(manifest.argv.iter().map(OsString::from));
    log::info!("replaying {:?}", manifest.argv);
    let cli = Cli::try_parse_from(&argv).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    if matches!(cli.command, Command::Replay { .. }) {
        return Err(Error::InvalidArgument(
            "a manifest cannot replay another manifest".into(),
        ));
    }
    run(cli, &argv)
}

// ---------------------------------------------------------------- ingest

fn cmd_ingest(root: &Path, opts: ParseOptions) -> Result<()> {
    let corpora = load_dataset(root, opts)?;
    if corpora.is_empty() {
        log::warn!("no XFUND or FUNSD data found under {}", root.display());
    }
    print!("{}", ingest_table(&corpora));
    Ok(())
}

/// `language split documents entities relations gold_relations`, one row
/// per corpus.
pub fn ingest_table(corpora: &[Corpus]) -> String {
    let mut out = String::from("language\tsplit\tdocuments\tentities\trelations\tgold_relations\n");
    for c in corpora {
        let gold = c.clone().into_gold().relation_count();
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{gold}",
            c.language,
            c.split,
            c.documents.len(),
            c.entity_count(),
            c.relation_count()
        );
    }
    out
}

// ---------------------------------------------------------------- train

fn task_setting(args: &SettingArgs) -> Result<TaskSetting> {
    let training_scope = match (args.multilingual, args.lang) {
        (true, _) => TrainingScope::Multilingual,
        (false, Some(l)) => TrainingScope::Monolingual(l),
        (false, None) => {
            return Err(Error::InvalidArgument(
                "pass --lang <code> or --multilingual".into(),
            ))
        }
    };
    Ok(TaskSetting {
        use_labels: args.labels == Switch::On,
        entity_scope: match args.setting {
            ScopeArg::Hqa => EntityScope::Hqa,
            ScopeArg::Ohqa => EntityScope::Ohqa,
        },
        training_scope,
    })
}

fn model_config(args: &ModelArgs, setting: &TaskSetting) -> EcnConfig {
    let base = match setting.training_scope {
        TrainingScope::Multilingual => EcnConfig::multilingual(),
        TrainingScope::Monolingual(_) => EcnConfig::monolingual(),
    };
    let node_dim = args.node_dim.unwrap_or(base.node_dim);
    EcnConfig {
        node_dim,
        edge_dim: args.edge_dim,
        layers: args.layers,
        stacked_convolutions: args
            .stacked_convolutions
            .unwrap_or(base.stacked_convolutions),
        decoder_hidden: args.decoder_hidden.unwrap_or(node_dim),
        label_dim: args.label_dim,
        nonlinearity: match args.nonlinearity {
            NonlinearityArg::Relu => Nonlinearity::Relu,
        },
        threshold: args.threshold,
    }
}

fn train_config(args: &OptimArgs, seed: u64) -> TrainConfig {
    TrainConfig {
        learning_rate: args.learning_rate,
        epochs: args.epochs,
        positive_weight: args.positive_weight,
        seed,
        shuffle: !args.no_shuffle,
        adam: AdamConfig {
            beta1: args.beta1,
            beta2: args.beta2,
            epsilon: args.adam_epsilon,
            weight_decay: args.weight_decay,
        },
        clip_norm: args.clip_norm,
        lr_decay: args
            .lr_decay_every
            .zip(args.lr_decay_factor)
            .map(|(every_epochs, factor)| LrDecay {
                every_epochs,
                factor,
            }),
    }
}

fn load_text_table(text: &TextSource) -> Result<Option<EmbeddingTable>> {
    match text {
        TextSource::None => Ok(None),
        TextSource::Sidecar(path) => load_embedding_sidecar(path).map(Some),
    }
}

/// Gold-filtered corpora of `split` that the setting's scope covers.
fn scoped_corpora(
    root: &Path,
    opts: ParseOptions,
    split: Split,
    scope: TrainingScope,
) -> Result<Vec<Corpus>> {
    Ok(load_dataset(root, opts)?
        .into_iter()
        .filter(|c| c.split == split && scope.includes(c.language))
        .map(Corpus::into_gold)
        .collect())
}

fn graph_instances(
    corpora: &[Corpus],
    setting: &TaskSetting,
    layout: &FeatureLayout,
    table: Option<&EmbeddingTable>,
) -> Result<Vec<GraphInstance>> {
    let mut out = Vec::new();
    for corpus in corpora {
        for inst in apply_setting(corpus, setting)? {
            out.push(build_graph_instance(&inst, layout, table)?);
        }
    }
    Ok(out)
}

struct Prepared {
    setting: TaskSetting,
    layout: FeatureLayout,
    table: Option<EmbeddingTable>,
}

fn prepare(setting_args: &SettingArgs, label_dim: usize) -> Result<Prepared> {
    let setting = task_setting(setting_args)?;
    let table = load_text_table(&setting_args.text)?;
    let layout = FeatureLayout::for_setting(&setting, table.as_ref().map(|t| t.dim()), label_dim);
    Ok(Prepared {
        setting,
        layout,
        table,
    })
}

fn checkpoint_path(out: &Path, seed: u64) -> PathBuf {
    out.join(format!("seed-{seed}.ckpt"))
}

/// Train one seed and write its checkpoint and log.
fn train_one(
    train_set: &[GraphInstance],
    prepared: &Prepared,
    model: &EcnConfig,
    config: &TrainConfig,
    dev_set: &[GraphInstance],
    out: &Path,
    checkpoint_every: Option<usize>,
) -> Result<Checkpoint> {
    let seed = config.seed;
    let mut dev_log = String::from("epoch\tprecision\trecall\tf1\n");
    let snapshot = |epochs: usize, params: &crate::model::EcnParams, path: &Path| {
        Checkpoint {
            config: model.clone(),
            layout: prepared.layout.clone(),
            seed,
            epochs,
            params: params.clone(),
        }
        .save(path)
    };
    let (params, record) = train_with_callback(
        train_set,
        &prepared.layout,
        model,
        config,
        |epoch, params, loss| {
            log::info!("seed {seed} epoch {epoch}: mean loss {loss:.6}");
            if !dev_set.is_empty() {
                let m = evaluate(params, model, dev_set, model.threshold)?;
                let _ = writeln!(
                    dev_log,
                    "{epoch}\t{:.6}\t{:.6}\t{:.6}",
                    m.precision, m.recall, m.f1
                );
            }
            match checkpoint_every {
                Some(every) if every > 0 && epoch % every == 0 && epoch < config.epochs => {
                    snapshot(
                        epoch,
                        params,
                        &out.join(format!("seed-{seed}.epoch-{epoch}.ckpt")),
                    )
                }
                _ => Ok(()),
            }
        },
    )?;
    let ckpt = Checkpoint {
        config: model.clone(),
        layout: prepared.layout.clone(),
        seed,
        epochs: config.epochs,
        params,
    };
    let path = checkpoint_path(out, seed);
    ckpt.save(&path)?;
    let log_path = out.join(format!("seed-{seed}.log.tsv"));
    fs::write(&log_path, record.to_tsv()).map_err(|e| Error::io(&log_path, e))?;
    if !dev_set.is_empty() {
        let dev_path = out.join(format!("seed-{seed}.dev.tsv"));
        fs::write(&dev_path, dev_log).map_err(|e| Error::io(&dev_path, e))?;
    }
    Ok(ckpt)
}

/// Seeded hold-out of `fraction` of the documents; at least one document
/// stays on each side when the fraction is positive.
fn split_dev(
    mut instances: Vec<GraphInstance>,
    fraction: f64,
    seed: u64,
) -> Result<(Vec<GraphInstance>, Vec<GraphInstance>)> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::InvalidArgument(format!(
            "--dev-fraction must be in [0, 1), got {fraction}"
        )));
    }
    if fraction == 0.0 {
        return Ok((instances, Vec::new()));
    }
    if instances.len() < 2 {
        return Err(Error::InvalidArgument(
            "a dev split needs at least two training documents".into(),
        ));
    }
    let held = ((fraction * instances.len() as f64).round() as usize).clamp(1, instances.len() - 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2);
    let mut order: Vec<usize> = (0..instances.len()).collect();
    order.shuffle(&mut rng);
    let dev_docs: std::collections::BTreeSet<usize> = order[..held].iter().copied().collect();
    let mut dev = Vec::with_capacity(held);
    let mut train = Vec::with_capacity(instances.len() - held);
    for (i, inst) in instances.drain(..).enumerate() {
        if dev_docs.contains(&i) {
            dev.push(inst);
        } else {
            train.push(inst);
        }
    }
    Ok((train, dev))
}

fn load_train_set(
    root: &Path,
    opts: ParseOptions,
    prepared: &Prepared,
) -> Result<Vec<GraphInstance>> {
    let corpora = scoped_corpora(root, opts, Split::Train, prepared.setting.training_scope)?;
    if corpora.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no training data for {:?} under {}",
            prepared.setting.training_scope,
            root.display()
        )));
    }
    graph_instances(
        &corpora,
        &prepared.setting,
        &prepared.layout,
        prepared.table.as_ref(),
    )
}

fn cmd_train(root: &Path, opts: ParseOptions, args: &TrainArgs) -> Result<()> {
    let prepared = prepare(&args.setting, args.model.label_dim)?;
    let model = model_config(&args.model, &prepared.setting);
    let config = train_config(&args.optim, args.seed);
    model.validate()?;
    config.validate()?;
    let (train_set, dev_set) = split_dev(
        load_train_set(root, opts, &prepared)?,
        args.optim.dev_fraction,
        args.seed,
    )?;
    fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    let ckpt = train_one(
        &train_set,
        &prepared,
        &model,
        &config,
        &dev_set,
        &args.out,
        args.checkpoint_every,
    )?;
    println!(
        "trained {} documents for {} epochs ({} parameters): {}",
        train_set.len(),
        config.epochs,
        ckpt.params.parameter_count(),
        checkpoint_path(&args.out, args.seed).display()
    );
    Ok(())
}

// ---------------------------------------------------------------- eval

fn entities_label(setting: &TaskSetting) -> String {
    let scope = match setting.entity_scope {
        EntityScope::Hqa => "HQA",
        EntityScope::Ohqa => "OHQA",
    };
    let labels = if setting.use_labels {
        "label"
    } else {
        "no label"
    };
    format!("{scope}, {labels}")
}

/// Test instances per language, optionally after window splitting.
fn test_sets(
    root: &Path,
    opts: ParseOptions,
    prepared: &Prepared,
    split_tokens: Option<&Path>,
) -> Result<BTreeMap<Language, Vec<GraphInstance>>> {
    let mut corpora = scoped_corpora(root, opts, Split::Test, prepared.setting.training_scope)?;
    if let Some(path) = split_tokens {
        let counts = load_token_counts(path)?;
        for corpus in &mut corpora {
            let mut docs = Vec::new();
            for doc in &corpus.documents {
                docs.extend(simulate_512_split(doc, &counts)?.sub_documents);
            }
            corpus.documents = docs;
        }
    }
    if corpora.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no test data under {}",
            root.display()
        )));
    }
    let mut sets = BTreeMap::new();
    for corpus in &corpora {
        let instances = graph_instances(
            std::slice::from_ref(corpus),
            &prepared.setting,
            &prepared.layout,
            prepared.table.as_ref(),
        )?;
        sets.insert(corpus.language, instances);
    }
    Ok(sets)
}

fn evaluate_languages(
    ckpt: &Checkpoint,
    sets: &BTreeMap<Language, Vec<GraphInstance>>,
    threshold: f64,
) -> Result<BTreeMap<Language, Metrics>> {
    sets.iter()
        .map(|(&lang, set)| Ok((lang, evaluate(&ckpt.params, &ckpt.config, set, threshold)?)))
        .collect()
}

/// Reads `language` and `relations_before` columns; rows of a `train`
/// split and the `ALL` total are skipped.
pub fn read_full_gold(path: &Path) -> Result<BTreeMap<Language, usize>> {
    let origin = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<&str> = lines
        .next()
        .ok_or_else(|| Error::parse(&origin, "header", "empty file"))?
        .split('\t')
        .collect();
    let col = |name: &str| header.iter().position(|h| *h == name);
    let lang_col =
        col("language").ok_or_else(|| Error::parse(&origin, "header", "no `language` column"))?;
    let count_col = col("relations_before")
        .ok_or_else(|| Error::parse(&origin, "header", "no `relations_before` column"))?;
    let split_col = col("split");
    let mut counts = BTreeMap::new();
    for (n, line) in lines.enumerate() {
        let cells: Vec<&str> = line.split('\t').collect();
        let field = |c: usize| {
            cells
                .get(c)
                .copied()
                .ok_or_else(|| Error::parse(&origin, format!("line {}", n + 2), "missing column"))
        };
        if split_col
            .map(&field)
            .transpose()?
            .is_some_and(|s| s == "train")
        {
            continue;
        }
        let lang = field(lang_col)?;
        if lang == "ALL" {
            continue;
        }
        let lang: Language = lang.parse()?;
        let count: usize = field(count_col)?.parse().map_err(|_| {
            Error::parse(
                &origin,
                format!("line {}", n + 2),
                "relation count is not an integer",
            )
        })?;
        *counts.entry(lang).or_insert(0) += count;
    }
    Ok(counts)
}

fn write_report(report: &EvalReport, args: &ReportArgs) -> Result<()> {
    let format = match args.format {
        FormatArg::Tsv => ReportFormat::Tsv,
        FormatArg::Markdown => ReportFormat::Markdown,
    };
    let text = render_report(report, format);
    match &args.report {
        Some(path) => fs::write(path, &text).map_err(|e| Error::io(path, e))?,
        None => print!("{text}"),
    }
    if let Some(dir) = &args.records {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (i, record) in report.runs.iter().enumerate() {
            let slug: String = record
                .model
                .chars()
                .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
                .collect();
            let path = dir.join(format!("{slug}.{i}.seed-{}.json", record.seed));
            let json = serde_json::to_string_pretty(record).expect("record serializes");
            fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))?;
        }
    }
    Ok(())
}

fn cmd_eval(root: &Path, opts: ParseOptions, args: &EvalArgs) -> Result<()> {
    let seeds: Vec<Option<u64>> = if args.seeds.is_empty() {
        if args.checkpoint.contains("{seed}") {
            return Err(Error::InvalidArgument(
                "checkpoint template has {seed} but --seeds is empty".into(),
            ));
        }
        vec![None]
    } else {
        args.seeds.iter().copied().map(Some).collect()
    };
    let checkpoints = seeds
        .iter()
        .map(|seed| {
            let path = match seed {
                Some(s) => args.checkpoint.replace("{seed}", &s.to_string()),
                None => args.checkpoint.clone(),
            };
            Checkpoint::load(Path::new(&path))
        })
        .collect::<Result<Vec<_>>>()?;

    let label_dim = checkpoints[0].config.label_dim;
    let prepared = prepare(&args.setting, label_dim)?;
    for ckpt in &checkpoints {
        ckpt.ensure_layout(&prepared.layout)?;
    }
    let full_gold = match (&args.full_gold, args.corrected_recall) {
        (Some(path), true) => Some(read_full_gold(path)?),
        _ => None,
    };
    let sets = test_sets(root, opts, &prepared, args.split_tokens.as_deref())?;

    let by_seed: HashMap<u64, &Checkpoint> = checkpoints.iter().map(|c| (c.seed, c)).collect();
    let run_seeds: Vec<u64> = match seeds[0] {
        None => vec![checkpoints[0].seed],
        Some(_) => args.seeds.clone(),
    };
    let entities = entities_label(&prepared.setting);
    let run = |seed: u64| {
        let ckpt = by_seed[&seed];
        evaluate_languages(ckpt, &sets, args.threshold.unwrap_or(ckpt.config.threshold))
    };
    let mut report = multi_run(&args.report.name, &entities, &run_seeds, run)?;

    if let Some(full) = full_gold {
        let mut corrected = Vec::new();
        for record in &report.runs {
            let mut metrics = BTreeMap::new();
            for (lang, m) in &record.metrics {
                let count = full.get(lang).copied().ok_or_else(|| {
                    Error::InvalidArgument(format!("full-gold manifest has no {lang} count"))
                })?;
                metrics.insert(*lang, corrected_recall(m, count)?);
            }
            corrected.push(crate::evaluation::SeedRecord {
                model: format!("{} (all GT relations)", record.model),
                metrics,
                ..record.clone()
            });
        }
        report.merge(EvalReport::from_seed_records(corrected));
    }
    write_report(&report, &args.report)
}

// ---------------------------------------------------------------- split report

fn cmd_split_report(root: &Path, opts: ParseOptions, args: &SplitReportArgs) -> Result<()> {
    let counts = load_token_counts(&args.tokens)?;
    let corpora: Vec<Corpus> = load_dataset(root, opts)?
        .into_iter()
        .filter(|c| c.split == args.split)
        .map(Corpus::into_gold)
        .collect();
    if corpora.is_empty() {
        log::warn!("no {} data found under {}", args.split, root.display());
    }
    print!("{}", split_table(&corpora, &counts)?);
    Ok(())
}

/// One row per corpus plus an `ALL` total: documents and relations before
/// and after splitting, and the lost fraction.
pub fn split_table(corpora: &[Corpus], counts: &crate::sidecar::TokenCounts) -> Result<String> {
    let mut out = String::from(
        "language\tsplit\tdocuments_before\tdocuments_after\tadded_documents\trelations_before\trelations_after\tlost_relations\tlost_fraction\toversized_entities\n",
    );
    let mut total = [0usize; 6];
    let row = |out: &mut String, lang: &str, split: &str, v: [usize; 6]| {
        let lost = if v[3] == 0 {
            0.0
        } else {
            v[5] as f64 / v[3] as f64
        };
        let _ = writeln!(
            out,
            "{lang}\t{split}\t{}\t{}\t{}\t{}\t{}\t{}\t{lost:.4}\t{}",
            v[0],
            v[1],
            v[1] - v[0],
            v[3],
            v[4],
            v[5],
            v[2]
        );
    };
    for corpus in corpora {
        let mut v = [0usize; 6];
        for doc in &corpus.documents {
            let outcome = simulate_512_split(doc, counts)?;
            for id in &outcome.oversized {
                log::warn!(
                    "{}: entity {} exceeds the window on its own",
                    doc.doc_id,
                    doc.entities[id.0].source_id
                );
            }
            v[0] += 1;
            v[1] += outcome.sub_documents.len();
            v[2] += outcome.oversized.len();
            v[3] += doc.relations.len();
            v[4] += outcome.kept_relations();
            v[5] += outcome.lost_relations;
        }
        row(
            &mut out,
            &corpus.language.to_string(),
            &corpus.split.to_string(),
            v,
        );
        for (t, x) in total.iter_mut().zip(v) {
            *t += x;
        }
    }
    let split = corpora
        .first()
        .map(|c| c.split.to_string())
        .unwrap_or_default();
    row(&mut out, "ALL", &split, total);
    Ok(out)
}

// ---------------------------------------------------------------- experiment

fn experiment_seeds(args: &ExperimentArgs) -> Vec<u64> {
    if args.seeds.is_empty() {
        (0..args.runs as u64).map(|k| args.seed + k).collect()
    } else {
        args.seeds.clone()
    }
}

fn cmd_experiment(root: &Path, opts: ParseOptions, args: &ExperimentArgs) -> Result<()> {
    let prepared = prepare(&args.setting, args.model.label_dim)?;
    let model = model_config(&args.model, &prepared.setting);
    let base = train_config(&args.optim, args.seed);
    model.validate()?;
    base.validate()?;
    // One dev split for all seeds, drawn from the base seed.
    let (train_set, dev_set) = split_dev(
        load_train_set(root, opts, &prepared)?,
        args.optim.dev_fraction,
        args.seed,
    )?;
    let sets = test_sets(root, opts, &prepared, None)?;
    fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;

    let seeds = experiment_seeds(args);
    let entities = entities_label(&prepared.setting);
    let report = multi_run(&args.report.name, &entities, &seeds, |seed| {
        let config = TrainConfig {
            seed,
            ..base.clone()
        };
        let ckpt = train_one(
            &train_set, &prepared, &model, &config, &dev_set, &args.out, None,
        )?;
        evaluate_languages(&ckpt, &sets, model.threshold)
    })?;
    write_report(&report, &args.report)
}

// ---------------------------------------------------------------- graph dump

fn cmd_graph_dump(root: &Path, opts: ParseOptions, args: &GraphDumpArgs) -> Result<()> {
    let setting = TaskSetting {
        use_labels: false,
        entity_scope: match args.setting {
            ScopeArg::Hqa => EntityScope::Hqa,
            ScopeArg::Ohqa => EntityScope::Ohqa,
        },
        training_scope: TrainingScope::Monolingual(args.lang),
    };
    let corpus = load_dataset(root, opts)?
        .into_iter()
        .find(|c| c.language == args.lang && c.split == args.split)
        .ok_or_else(|| {
            Error::InvalidArgument(format!(
                "no {} {} data under {}",
                args.lang,
                args.split,
                root.display()
            ))
        })?
        .into_gold();
    let instances: Vec<_> = apply_setting(&corpus, &setting)?
        .into_iter()
        .filter(|i| args.doc.as_ref().is_none_or(|d| *d == i.doc_id))
        .collect();
    if let Some(doc) = &args.doc {
        if instances.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "document {doc:?} not found"
            )));
        }
    }
    fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    for inst in &instances {
        let stem: String = inst
            .doc_id
            .chars()
            .map(|c| {
                if c.is_ascii_alphanumeric() || c == '-' || c == '.' {
                    c
                } else {
                    '_'
                }
            })
            .collect();
        // Node indices follow the scoped entity order; `source_ids` maps back.
        let mut edges = String::from("doc_id\ti\tj\n");
        for &(i, j) in &inst.graph.adjacency.edges {
            let _ = writeln!(edges, "{}\t{i}\t{j}", inst.doc_id);
        }
        let mut feats = String::from("receiver\tsender");
        for k in 0..crate::geometry::EDGE_FEATURE_DIM {
            let _ = write!(feats, "\tf{k}");
        }
        feats.push('\n');
        for (&(i, j), f) in inst.graph.directed.iter().zip(&inst.graph.features) {
            let _ = write!(feats, "{i}\t{j}");
            for v in f.0 {
                let _ = write!(feats, "\t{v}");
            }
            feats.push('\n');
        }
        for (suffix, text) in [("edges.tsv", edges), ("features.tsv", feats)] {
            let path = args.out.join(format!("{stem}.{suffix}"));
            fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        }
    }
    println!(
        "wrote graphs of {} documents to {}",
        instances.len(),
        args.out.display()
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn text_source_flags() {
        assert_eq!("none".parse::<TextSource>(), Ok(TextSource::None));
        assert_eq!(
            "sidecar=/tmp/e.emb".parse::<TextSource>(),
            Ok(TextSource::Sidecar("/tmp/e.emb".into()))
        );
        assert!("sidecar"
            .parse::<TextSource>()
            .unwrap_err()
            .contains("path"));
    }

    fn train_args(extra: &[&str]) -> TrainArgs {
        let mut argv = vec!["ecn", "train"];
        argv.extend_from_slice(extra);
        match Cli::try_parse_from(argv).unwrap().command {
            Command::Train(a) => a,
            _ => unreachable!(),
        }
    }

    #[test]
    fn monolingual_defaults() {
        let a = train_args(&[
            "--lang",
            "fr",
            "--labels",
            "on",
            "--setting",
            "hqa",
            "--text",
            "none",
        ]);
        let s = task_setting(&a.setting).unwrap();
        assert_eq!(s, TaskSetting::official(Language::Fr));
        let m = model_config(&a.model, &s);
        assert_eq!(m, EcnConfig::monolingual());
        assert_eq!((m.node_dim, m.stacked_convolutions, m.layers), (128, 6, 6));
        let t = train_config(&a.optim, a.seed);
        assert_eq!(t, TrainConfig::default());
    }

    #[test]
    fn multilingual_defaults() {
        let a = train_args(&["--multilingual"]);
        let s = task_setting(&a.setting).unwrap();
        let m = model_config(&a.model, &s);
        assert_eq!((m.node_dim, m.stacked_convolutions), (256, 8));
        assert_eq!(m, EcnConfig::multilingual());
    }

    #[test]
    fn language_is_required_without_multilingual() {
        let a = train_args(&[]);
        assert!(task_setting(&a.setting).is_err());
    }

    #[test]
    fn help_lists_hyperparameters() {
        let mut cmd = Cli::command();
        for sub in ["train", "experiment"] {
            let help = cmd
                .find_subcommand_mut(sub)
                .unwrap()
                .render_long_help()
                .to_string();
            for flag in [
                "--node-dim",
                "--edge-dim",
                "--layers",
                "--stacked-convolutions",
                "--learning-rate",
                "--epochs",
                "--label-dim",
                "--threshold",
            ] {
                assert!(help.contains(flag), "{sub} help lacks {flag}");
            }
            assert!(
                help.contains("[default: 5e-4]") || help.contains("[default: 0.0005]"),
                "{help}"
            );
            assert!(help.contains("[default: 400]"));
        }
    }

    #[test]
    fn full_gold_reads_split_report() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gold.tsv");
        fs::write(
            &path,
            "language\tsplit\trelations_before\nZH\ttest\t10\nZH\ttrain\t99\nFR\ttest\t4\nALL\ttest\t14\n",
        )
        .unwrap();
        let gold = read_full_gold(&path).unwrap();
        assert_eq!(gold, [(Language::Zh, 10), (Language::Fr, 4)].into());
    }
}
