use std::collections::HashMap;
use std::io::Write;
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use chrono::NaiveDate;
use clap::{Args, Subcommand};
use cueguard_core::classifier::{ConfusionMatrix, QueryClassifier};
use cueguard_core::gateway::{Gateway, GatewayOptions, JsonlDecisionLog, Timestamping};
use cueguard_core::simulator::{
    generate_stream, inject_event, read_planted_labels, read_stream, write_stream, EventSpec, SignatureOracle,
    StreamConfig, DEFAULT_EVENT_DURATION,
};
use cueguard_core::taxonomy::parse_category;
use cueguard_core::Category;
use cueguard_server::state::{load_model_file, load_rules_file};
use serde_json::json;

use crate::files;

#[derive(Subcommand)]
pub enum SimCommand {
    /// Generate a stream file and its planted-label sidecar.
    Emit(EmitArgs),
    /// Send a stream through a gateway, remote or in-process.
    Replay(ReplayArgs),
    /// Planted-vs-decided confusion for a replayed stream.
    Confusion(ConfusionArgs),
}

#[derive(Args)]
pub struct EmitArgs {
    /// JSON stream config; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    days: Option<usize>,
    #[arg(long)]
    peak: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    start_date: Option<NaiveDate>,
    /// `DAY[+DURATION]:category=multiplier[,category=multiplier...]`,
    /// days counted from zero. Repeatable.
    #[arg(long = "event")]
    events: Vec<String>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    labels: PathBuf,
}

/// Parses `12+3:felony_crimes=3,privacy=2`.
pub fn parse_event(spec: &str) -> Result<EventSpec> {
    let (when, mults) = spec.split_once(':').ok_or_else(|| anyhow!("event {spec:?}: expected DAY:cat=mult"))?;
    let (start, duration) = match when.split_once('+') {
        Some((s, d)) => (s.parse()?, d.parse()?),
        None => (when.parse()?, DEFAULT_EVENT_DURATION),
    };
    let mut multipliers = Vec::new();
    for pair in mults.split(',') {
        let (cat, m) = pair.split_once('=').ok_or_else(|| anyhow!("event {spec:?}: expected cat=mult in {pair:?}"))?;
        multipliers.push((parse_category(cat.trim())?, m.trim().parse::<f64>()?));
    }
    let mut event = EventSpec::new(spec, start, multipliers);
    event.duration = duration;
    Ok(event)
}

pub fn stream_config(args: &EmitArgs) -> Result<StreamConfig> {
    let mut config: StreamConfig = match &args.config {
        Some(p) => serde_json::from_reader(files::open(p)?).with_context(|| format!("parsing {}", p.display()))?,
        None => StreamConfig::default(),
    };
    if let Some(d) = args.days {
        config.days = d;
    }
    if let Some(p) = args.peak {
        config.peak_volume = p;
    }
    if let Some(s) = args.seed {
        config.seed = s;
    }
    if let Some(d) = args.start_date {
        config.start_date = d;
    }
    for spec in &args.events {
        config = inject_event(&config, parse_event(spec)?)?;
    }
    config.validate()?;
    Ok(config)
}

fn emit(args: EmitArgs) -> Result<()> {
    let config = stream_config(&args)?;
    let n = write_stream(generate_stream(&config)?, files::create(&args.out)?, files::create(&args.labels)?)?;
    eprintln!("{n} queries over {} days -> {}", config.days, args.out.display());
    Ok(())
}

#[derive(Args)]
pub struct ReplayArgs {
    #[arg(long)]
    stream: PathBuf,
    /// Gateway base URL, e.g. http://127.0.0.1:8080.
    #[arg(long, conflicts_with = "log", required_unless_present = "log")]
    url: Option<String>,
    /// Decide in-process and append to this log, stamping each decision
    /// with the query's receive time.
    #[arg(long)]
    log: Option<PathBuf>,
    /// Model file for in-process replay; the signature oracle otherwise.
    #[arg(long, requires = "log")]
    model: Option<PathBuf>,
    #[arg(long, requires = "log")]
    rules: Option<PathBuf>,
}

fn replay(args: ReplayArgs) -> Result<()> {
    let records = read_stream(files::open(&args.stream)?)?;
    if let Some(url) = &args.url {
        let endpoint = format!("{}/v1/decide", url.trim_end_matches('/'));
        for (i, r) in records.iter().enumerate() {
            ureq::post(&endpoint)
                .send_json(json!({"query_id": r.query_id, "text": r.text, "user_pseudonym": r.user_pseudonym}))
                .with_context(|| format!("query {} ({})", i + 1, r.query_id))?;
        }
        eprintln!("replayed {} queries to {url}", records.len());
        return Ok(());
    }
    let Some(path) = &args.log else { bail!("--url or --log is required") };
    let log = Arc::new(JsonlDecisionLog::open(path, false)?);
    let gateway = Gateway::new(log, GatewayOptions { timestamping: Timestamping::ReceivedAt, ..Default::default() })?;
    let model: Arc<dyn QueryClassifier> = match &args.model {
        Some(p) => load_model_file(p)?,
        None => Arc::new(SignatureOracle::default()),
    };
    gateway.load_model(model)?;
    if let Some(p) = &args.rules {
        gateway.load_rules(load_rules_file(p)?)?;
    }
    for r in &records {
        gateway.decide(r)?;
    }
    eprintln!("decided {} queries -> {}", records.len(), path.display());
    Ok(())
}

#[derive(Args)]
pub struct ConfusionArgs {
    #[arg(long)]
    labels: PathBuf,
    /// Decision log produced by replaying the stream.
    #[arg(long)]
    log: PathBuf,
    #[arg(long)]
    csv: bool,
}

pub fn confusion_of(planted: &HashMap<String, Category>, decided: &[(String, Category)]) -> (ConfusionMatrix, usize) {
    let mut m = ConfusionMatrix::default();
    let mut unmatched = 0;
    for (id, label) in decided {
        match planted.get(id) {
            Some(truth) => m.record(*truth, *label),
            None => unmatched += 1,
        }
    }
    (m, unmatched)
}

fn confusion(args: ConfusionArgs) -> Result<()> {
    let planted: HashMap<String, Category> =
        read_planted_labels(files::open(&args.labels)?)?.into_iter().map(|l| (l.query_id, l.planted)).collect();
    let decided: Vec<(String, Category)> = files::read_log(&args.log)?.into_iter().map(|d| (d.query_id, d.label)).collect();
    let (m, unmatched) = confusion_of(&planted, &decided);

    let mut out = String::new();
    if args.csv {
        out += "planted,";
        out += &Category::ALL.map(|c| c.id()).join(",");
        out += "\n";
        for t in Category::ALL {
            out += t.id();
            for p in Category::ALL {
                out += &format!(",{}", m.get(t, p));
            }
            out += "\n";
        }
    } else {
        out += &format!("{:<26}", "planted \\ decided");
        for c in Category::ALL {
            out += &format!(" {:>6}", &c.id()[..c.id().len().min(6)]);
        }
        out += "\n";
        for t in Category::ALL {
            out += &format!("{:<26}", t.id());
            for p in Category::ALL {
                out += &format!(" {:>6}", m.get(t, p));
            }
            out += "\n";
        }
        let total = m.total();
        out += &format!(
            "agreement {}/{} ({:.2}%)\n",
            m.correct(),
            total,
            if total > 0 { m.correct() as f64 * 100.0 / total as f64 } else { 0.0 }
        );
        if unmatched > 0 {
            out += &format!("{unmatched} logged decisions had no planted label\n");
        }
    }
    std::io::stdout().lock().write_all(out.as_bytes())?;
    Ok(())
}

pub fn run(cmd: SimCommand) -> Result<()> {
    match cmd {
        SimCommand::Emit(a) => emit(a),
        SimCommand::Replay(a) => replay(a),
        SimCommand::Confusion(a) => confusion(a),
    }
}
