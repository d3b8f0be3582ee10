use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use facemotion::evalkit::{sweep_situations, CVConfig, SweepInput, SweepSpec};
use facemotion::facegrid::SITUATIONS;
use facemotion::features::{CleaningPolicy, EmotionLabel};
use facemotion::io::{read_json, write_atomic, write_json};
use facemotion::learners::{TrainedModel, TrainerSpec};
use facemotion::optflow::{FilterBankSpec, FlowConfig};
use facemotion::pipeline::{self, GridChoice, Manifest, PipelineConfig};
use facemotion::synth::{generate_synthetic, situation19_feature_names, write_synthetic_sequences, PrototypeBank, SequenceSpec};
use facemotion::Error;

#[derive(Parser)]
#[command(name = "facemotion", version, about = "Facial expression recognition from optical flow")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optical flow stage.
    Flow {
        #[command(subcommand)]
        action: FlowAction,
    },
    /// Face segmentation stage.
    Layout {
        #[command(subcommand)]
        action: LayoutAction,
    },
    /// Feature extraction stage.
    Features {
        #[command(subcommand)]
        action: FeaturesAction,
    },
    /// Clamp outliers and fill extreme values in a feature CSV.
    Clean(CleanArgs),
    /// Fit one model on a whole feature CSV.
    Train(TrainArgs),
    /// Classify the records of a feature CSV.
    Predict(PredictArgs),
    /// Repeated k-fold cross-validation of one or more trainers.
    Eval(EvalArgs),
    /// Cross-validate every trainer on several grid situations.
    Sweep(SweepArgs),
    /// Rank features by information gain.
    Rank(RankArgs),
    /// Project features onto their principal axes.
    Project(ProjectArgs),
    /// Generate synthetic feature records or image sequences.
    Synth(SynthArgs),
    /// Run every stage from a manifest.
    Run(RunArgs),
}

#[derive(Subcommand)]
enum FlowAction {
    Extract {
        #[arg(long)]
        manifest: PathBuf,
        /// Output directory for `<id>.csv`, `<id>.meta.json` and `skipped.json`.
        #[arg(long)]
        out: PathBuf,
        /// JSON file with `flow` and `bank` sections.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum LayoutAction {
    Build {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        flows: PathBuf,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum FeaturesAction {
    Extract {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        flows: PathBuf,
        #[arg(long)]
        layouts: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct GridArgs {
    /// Situation number (1-25).
    #[arg(long, default_value_t = 19, conflicts_with = "grid")]
    situation: u32,
    /// JSON file holding a custom grid spec.
    #[arg(long)]
    grid: Option<PathBuf>,
}

impl GridArgs {
    fn choice(&self) -> Result<GridChoice, CliError> {
        match &self.grid {
            Some(path) => {
                let grid: facemotion::facegrid::GridSpec = read_json(path)?;
                grid.validate()?;
                Ok(GridChoice { situation: None, grid })
            }
            None => GridChoice::situation(self.situation).map_err(|e| CliError::Usage(e.to_string())),
        }
    }
}

#[derive(Args)]
struct CleanArgs {
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Audit JSON; defaults to `<out>.audit.json`.
    #[arg(long)]
    audit: Option<PathBuf>,
    #[arg(long, default_value_t = 3.0)]
    outlier_sigma: f64,
    #[arg(long, default_value_t = 5.0)]
    extreme_sigma: f64,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    features: PathBuf,
    #[arg(long, required_unless_present = "params")]
    trainer: Option<String>,
    /// JSON trainer spec with hyperparameters, e.g. `{"family": "svm", "C": 10}`.
    #[arg(long, conflicts_with = "trainer")]
    params: Option<PathBuf>,
    /// Seed for stochastic trainers.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    features: PathBuf,
    /// Output CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CvArgs {
    #[arg(long, default_value_t = 10)]
    folds: usize,
    #[arg(long, default_value_t = 50)]
    repeats: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Plain random folds instead of class-stratified ones.
    #[arg(long)]
    no_stratify: bool,
    /// Keep all records of a subject (id prefix before `_`) in one fold.
    #[arg(long)]
    group_by_subject: bool,
    /// Skip per-fold cleaning.
    #[arg(long)]
    no_clean: bool,
}

impl CvArgs {
    fn config(&self) -> CVConfig {
        CVConfig {
            folds: self.folds,
            repeats: self.repeats,
            seed: self.seed,
            stratified: !self.no_stratify,
            group_by_subject: self.group_by_subject,
            cleaning: (!self.no_clean).then(CleaningPolicy::default),
        }
    }
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    features: PathBuf,
    /// Trainer name, comma list, or `all`.
    #[arg(long, default_value = "all")]
    trainer: String,
    /// JSON trainer spec, or a list of specs, replacing `--trainer`.
    #[arg(long, conflicts_with = "trainer")]
    params: Option<PathBuf>,
    /// Situation number recorded in the report.
    #[arg(long)]
    situation: Option<u32>,
    #[command(flatten)]
    cv: CvArgs,
    /// Report JSON for a single trainer, or a directory of
    /// `eval_<trainer>.json` files for several.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Directory written by `flow extract`.
    #[arg(long)]
    flows: PathBuf,
    /// `all` or a comma list of situation numbers.
    #[arg(long, default_value = "all")]
    situations: String,
    #[arg(long, default_value = "all")]
    trainers: String,
    #[command(flatten)]
    cv: CvArgs,
    /// Table CSV.
    #[arg(long)]
    out: PathBuf,
    /// Accuracy against feature count, as CSV.
    #[arg(long)]
    series: Option<PathBuf>,
    /// Full table with every fold report, as JSON.
    #[arg(long)]
    reports: Option<PathBuf>,
}

#[derive(Args)]
struct RankArgs {
    #[arg(long)]
    features: PathBuf,
    #[arg(long, default_value_t = 10)]
    bins: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ProjectArgs {
    #[arg(long)]
    features: PathBuf,
    #[arg(long, default_value_t = 3)]
    dims: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum SynthKind {
    Features,
    Sequences,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, value_enum, default_value = "features")]
    kind: SynthKind,
    #[arg(long, default_value_t = 40)]
    n_per_class: usize,
    /// Feature noise standard deviation (features only).
    #[arg(long, default_value_t = 0.05)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Feature CSV, or the output directory for sequences.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// JSON pipeline config; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    situation: Option<u32>,
    #[arg(long)]
    trainer: Option<String>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    repeats: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Core(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

fn trainers(list: &str) -> Result<Vec<TrainerSpec>, CliError> {
    TrainerSpec::parse_list(list).map_err(|e| CliError::Usage(e.to_string()))
}

#[derive(serde::Deserialize)]
#[serde(untagged)]
enum SpecFile {
    One(TrainerSpec),
    Many(Vec<TrainerSpec>),
}

fn resolve_trainers(list: Option<&str>, params: Option<&Path>) -> Result<Vec<TrainerSpec>, CliError> {
    match (params, list) {
        (Some(p), _) => Ok(match read_json(p)? {
            SpecFile::One(s) => vec![s],
            SpecFile::Many(v) => v,
        }),
        (None, Some(l)) => trainers(l),
        (None, None) => Err(CliError::Usage("no trainer given".into())),
    }
}

fn situations(list: &str) -> Result<Vec<SweepSpec>, CliError> {
    let ids: Vec<u32> = if list.trim() == "all" {
        (1..=SITUATIONS.len() as u32).collect()
    } else {
        list.split(',')
            .map(|s| s.trim().parse().map_err(|_| CliError::Usage(format!("bad situation `{s}`"))))
            .collect::<Result<_, _>>()?
    };
    ids.into_iter()
        .map(|id| {
            let c = GridChoice::situation(id).map_err(|e| CliError::Usage(e.to_string()))?;
            Ok(SweepSpec {
                situation: c.situation,
                grid: c.grid,
            })
        })
        .collect()
}

#[derive(serde::Deserialize, Default)]
#[serde(default)]
struct FlowFile {
    flow: FlowConfig,
    bank: FilterBankSpec,
}

fn write_text(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => Ok(write_atomic(p, text.as_bytes())?),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Flow {
            action: FlowAction::Extract { manifest, out, config },
        } => {
            let f: FlowFile = match config {
                Some(p) => read_json(&p)?,
                None => FlowFile::default(),
            };
            f.flow.validate()?;
            let skipped = pipeline::flow_extract(&manifest, &f.flow, &f.bank, &out)?;
            log::info!("flow extracted, {} sequence(s) skipped", skipped.len());
        }
        Command::Layout {
            action: LayoutAction::Build { manifest, flows, grid, out },
        } => {
            let layouts = pipeline::layout_build(&manifest, &flows, &grid.choice()?, &out)?;
            log::info!("{} layout(s) written", layouts.len());
        }
        Command::Features {
            action: FeaturesAction::Extract { manifest, flows, layouts, out },
        } => {
            let (names, records) = pipeline::features_extract(&manifest, &flows, &layouts, &out)?;
            log::info!("{} record(s) with {} features", records.len(), names.len());
        }
        Command::Clean(a) => {
            let policy = CleaningPolicy {
                outlier_sigma: a.outlier_sigma,
                extreme_sigma: a.extreme_sigma,
            };
            policy.validate().map_err(|e| CliError::Usage(e.to_string()))?;
            let audit = a.audit.unwrap_or_else(|| a.out.with_extension("audit.json"));
            pipeline::clean_features(&a.features, &a.out, &audit, &policy)?;
        }
        Command::Train(a) => {
            let [spec] = &resolve_trainers(a.trainer.as_deref(), a.params.as_deref())?[..] else {
                return Err(CliError::Usage("train takes exactly one trainer".into()));
            };
            let model = pipeline::train_from_csv(&a.features, &spec.with_seed(a.seed), &a.out)?;
            for w in &model.warnings {
                log::warn!("{w}");
            }
        }
        Command::Predict(a) => {
            let model = TrainedModel::from_json(&facemotion::io::read_text(&a.model)?)?;
            let (_, records) = pipeline::read_features(&a.features)?;
            write_text(a.out.as_deref(), &pipeline::predict_csv(&model, &records)?)?;
        }
        Command::Eval(a) => {
            let specs = resolve_trainers(Some(&a.trainer), a.params.as_deref())?;
            if specs.is_empty() {
                return Err(CliError::Usage("no trainer given".into()));
            }
            let cv = a.cv.config();
            cv.validate().map_err(|e| CliError::Usage(e.to_string()))?;
            for spec in &specs {
                let out = if specs.len() == 1 {
                    a.out.clone()
                } else {
                    a.out.join(format!("eval_{}.json", spec.family().name()))
                };
                let r = pipeline::evaluate(&a.features, spec, &cv, a.situation, &out)?;
                println!(
                    "{}: {:.2} ± {:.2} %",
                    spec.family().name(),
                    r.mean_accuracy(),
                    r.std_accuracy()
                );
            }
        }
        Command::Sweep(a) => {
            let specs = situations(&a.situations)?;
            let trainer_specs = trainers(&a.trainers)?;
            let cv = a.cv.config();
            cv.validate().map_err(|e| CliError::Usage(e.to_string()))?;
            let manifest = Manifest::load(&a.manifest)?;
            let inputs = pipeline::load_fields(&manifest, &a.flows)?
                .into_iter()
                .map(|(e, field)| {
                    let label = e.label.ok_or_else(|| Error::MissingLabel(e.id.clone()))?;
                    Ok(SweepInput {
                        axes: e.frame_axes(),
                        sequence_id: e.id,
                        field,
                        label,
                    })
                })
                .collect::<Result<Vec<_>, Error>>()?;
            let table = sweep_situations(&inputs, &specs, &trainer_specs, &cv)?;
            write_atomic(&a.out, table.to_csv().as_bytes())?;
            if let Some(p) = &a.series {
                write_atomic(p, table.series_csv().as_bytes())?;
            }
            if let Some(p) = &a.reports {
                write_json(p, &table)?;
            }
        }
        Command::Rank(a) => {
            if a.bins < 2 {
                return Err(CliError::Usage("--bins must be at least 2".into()));
            }
            pipeline::rank(&a.features, a.bins, &a.out)?;
        }
        Command::Project(a) => {
            pipeline::project(&a.features, a.dims, &a.out)?;
        }
        Command::Synth(a) => {
            let bank = PrototypeBank::situation19();
            match a.kind {
                SynthKind::Features => {
                    let data = generate_synthetic(&bank, a.n_per_class, a.noise, a.seed)
                        .map_err(|e| CliError::Usage(e.to_string()))?;
                    let csv = facemotion::features::write_feature_csv(&situation19_feature_names(), data.records())?;
                    write_atomic(&a.out, csv.as_bytes())?;
                }
                SynthKind::Sequences => {
                    write_synthetic_sequences(
                        &a.out,
                        &bank,
                        &EmotionLabel::SUBTYPES,
                        a.n_per_class,
                        &SequenceSpec::default(),
                        a.seed,
                    )?;
                }
            }
        }
        Command::Run(a) => {
            let mut cfg: PipelineConfig = match &a.config {
                Some(p) => read_json(p)?,
                None => PipelineConfig::default(),
            };
            if let Some(m) = a.manifest {
                cfg.manifest = m;
            }
            if let Some(s) = a.situation {
                cfg.situation = Some(s);
                cfg.grid = None;
            }
            if let Some(t) = &a.trainer {
                cfg.trainers = trainers(t)?;
            }
            if let Some(f) = a.folds {
                cfg.cv.folds = f;
            }
            if let Some(r) = a.repeats {
                cfg.cv.repeats = r;
            }
            if let Some(s) = a.seed {
                cfg.cv.seed = s;
            }
            if let Some(o) = a.out {
                cfg.out = o;
            }
            let summary = pipeline::run_pipeline(&cfg)?;
            for r in &summary.reports {
                println!("{}: {:.2} ± {:.2} %", r.trainer, r.mean_accuracy, r.std_accuracy);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(CliError::Core(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numeric() { 4 } else { 3 })
        }
    }
}
