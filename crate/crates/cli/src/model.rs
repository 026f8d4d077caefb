use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Subcommand, ValueEnum};
use cueguard_core::classifier::{
    continue_training, decode_model, evaluate as eval_model, read_dataset, resample_to_distribution, scalar_width,
    write_dataset, Featurizer, FeaturizerConfig, Hyperparams, LabeledExample, LinearHead, LinearModel, RemoteConfig,
    TargetDistribution, TrainingSet,
};
use cueguard_core::rules::{compile_rules, export_training_from_rules, Rule};
use cueguard_core::taxonomy::reference_distribution;
use cueguard_core::{Category, Scalar};
use cueguard_server::state::{load_model_file, load_rules_file};

use crate::files;

#[derive(Clone, Copy, ValueEnum)]
pub enum Precision {
    F32,
    F64,
}

#[derive(Args)]
pub struct TrainArgs {
    /// JSONL datasets, one labeled example per line.
    #[arg(long = "data", required = true)]
    data: Vec<PathBuf>,
    /// Rule files whose exemplars are added to the training data.
    #[arg(long = "rules")]
    rules: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Continue from this model instead of starting at zero.
    #[arg(long)]
    init: Option<PathBuf>,
    #[arg(long, default_value_t = 1 << 18)]
    dim: usize,
    /// Use a remote featurizer service of `--dim` dimensions.
    #[arg(long)]
    remote_url: Option<String>,
    #[arg(long, default_value_t = 20)]
    epochs: usize,
    #[arg(long, default_value_t = 0.5)]
    lr: f64,
    #[arg(long, default_value_t = 1e-4)]
    l2: f64,
    #[arg(long, default_value_t = 32)]
    batch: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "model-1")]
    model_version: String,
    #[arg(long, value_enum, default_value_t = Precision::F64)]
    precision: Precision,
}

fn read_examples(paths: &[PathBuf]) -> Result<Vec<LabeledExample>> {
    let mut all = Vec::new();
    for p in paths {
        all.extend(read_dataset(files::open(p)?).with_context(|| format!("reading {}", p.display()))?);
    }
    Ok(all)
}

fn fit<T: Scalar>(
    examples: &[LabeledExample],
    featurizer: &Featurizer,
    init: Option<LinearHead<T>>,
    hp: &Hyperparams,
) -> Result<Vec<u8>> {
    let set = TrainingSet::<T>::featurize(examples, featurizer)?;
    let head = match init {
        Some(mut head) => {
            head.model_version = hp.model_version.clone();
            continue_training(head, &set, hp)?
        }
        None => cueguard_core::classifier::train_features(&set, hp)?,
    };
    Ok(LinearModel::new(head, featurizer.clone())?.to_bytes())
}

pub fn train(args: TrainArgs) -> Result<()> {
    let mut examples = read_examples(&args.data)?;
    for path in &args.rules {
        let export = export_training_from_rules(&load_rules_file(path)?);
        if !export.skipped.is_empty() {
            eprintln!("{}: {} rules without exemplars skipped", path.display(), export.skipped.len());
        }
        examples.extend(export.examples);
    }
    let hp = Hyperparams {
        learning_rate: args.lr,
        l2: args.l2,
        batch_size: args.batch,
        epochs: args.epochs,
        seed: args.seed,
        model_version: args.model_version.clone(),
    };
    let init_bytes = args.init.as_ref().map(std::fs::read).transpose()?;
    let bytes = match (&init_bytes, args.precision) {
        (Some(b), _) => {
            let featurizer_of = |c: &FeaturizerConfig| Featurizer::from_config(c);
            match scalar_width(b)? {
                4 => {
                    let (head, cfg) = decode_model::<f32>(b)?;
                    fit(&examples, &featurizer_of(&cfg)?, Some(head), &hp)?
                }
                _ => {
                    let (head, cfg) = decode_model::<f64>(b)?;
                    fit(&examples, &featurizer_of(&cfg)?, Some(head), &hp)?
                }
            }
        }
        (None, precision) => {
            let featurizer = match &args.remote_url {
                Some(url) => Featurizer::from_config(&FeaturizerConfig::Remote(RemoteConfig {
                    url: url.clone(),
                    dimension: args.dim,
                    timeout_ms: 5_000,
                }))?,
                None => Featurizer::hashing(args.dim),
            };
            match precision {
                Precision::F32 => fit::<f32>(&examples, &featurizer, None, &hp)?,
                Precision::F64 => fit::<f64>(&examples, &featurizer, None, &hp)?,
            }
        }
    };
    std::fs::write(&args.out, bytes).with_context(|| format!("writing {}", args.out.display()))?;
    eprintln!("trained {} on {} examples -> {}", args.model_version, examples.len(), args.out.display());
    Ok(())
}

#[derive(Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Print the full report as JSON.
    #[arg(long)]
    json: bool,
}

fn pct(x: Option<f64>) -> String {
    x.map_or("n/a".into(), |v| format!("{:.1}", v * 100.0))
}

pub fn evaluate(args: EvaluateArgs) -> Result<()> {
    let model = load_model_file(&args.model)?;
    let testset = read_examples(std::slice::from_ref(&args.data))?;
    let report = eval_model(model.as_ref(), &testset)?;
    if args.json {
        return files::emit(None, &files::json(&report)?);
    }
    let mut out = String::new();
    out += &format!("examples            {}\n", report.confusion.total());
    out += &format!("overall accuracy    {:.1}\n", report.overall_accuracy * 100.0);
    out += &format!("category accuracy   {}\n", pct(report.category_accuracy));
    out += &format!("safe recall         {}\n", pct(report.safe_recall));
    for c in Category::ALL {
        if report.confusion.row_total(c) > 0 {
            out += &format!("  {:<26} {:>6}  ({} items)\n", c.id(), pct(report.per_category_accuracy[c.ordinal()]), report.confusion.row_total(c));
        }
    }
    files::emit(None, &out)
}

#[derive(Args)]
pub struct ResampleArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    size: usize,
    /// Percent of the output that is safe; sensitive categories share the
    /// rest in reference proportions.
    #[arg(long, default_value_t = 0.0)]
    safe_share: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

pub fn resample(args: ResampleArgs) -> Result<()> {
    if !(0.0..=100.0).contains(&args.safe_share) {
        bail!("--safe-share must be within 0..=100");
    }
    let corpus = read_examples(std::slice::from_ref(&args.data))?;
    let reference = reference_distribution();
    let target = if args.safe_share > 0.0 {
        TargetDistribution::with_safe_share(&reference, args.safe_share)
    } else {
        TargetDistribution::from_reference(&reference)
    };
    let drawn = resample_to_distribution(&corpus, &target, args.size, args.seed)?;
    let mut w = files::create(&args.out)?;
    write_dataset(&mut w, &drawn)?;
    w.flush()?;
    eprintln!("{} examples -> {}", drawn.len(), args.out.display());
    Ok(())
}

#[derive(Subcommand)]
pub enum RulesCommand {
    /// Compile a rule file and report problems.
    Check { file: PathBuf },
    /// Write each rule exemplar as a labeled example.
    ExportTraining {
        file: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load(path: &Path) -> Result<Vec<Rule>> {
    Ok(load_rules_file(path)?)
}

pub fn rules(cmd: RulesCommand) -> Result<()> {
    match cmd {
        RulesCommand::Check { file } => {
            let rules = load(&file)?;
            let set = compile_rules(&rules, 1)?;
            println!("{}: {} rules, {} enabled", file.display(), rules.len(), set.len());
            Ok(())
        }
        RulesCommand::ExportTraining { file, out } => {
            let export = export_training_from_rules(&load(&file)?);
            let mut w = files::create(&out)?;
            write_dataset(&mut w, &export.examples)?;
            w.flush()?;
            for s in &export.skipped {
                eprintln!("skipped {}: {}", s.rule_id, s.reason);
            }
            eprintln!("{} examples -> {}", export.examples.len(), out.display());
            Ok(())
        }
    }
}
