use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use chrono::{NaiveDate, Utc};
use clap::Subcommand;
use cueguard_core::feedback::{
    promote_corrections, sample_for_review_with, verdicts_csv, Grouping, ReviewStore, SamplingMode, Verdict, VerdictCounts,
    DEFAULT_SAMPLE_SIZE,
};
use cueguard_core::classifier::write_dataset;
use cueguard_core::rules::{write_rule_file, SentenceSplitter};

use crate::files;

#[derive(Subcommand)]
pub enum ReviewCommand {
    /// Draw a day's review sample from a decision log into a store file.
    Sample {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        date: NaiveDate,
        #[arg(long)]
        store: PathBuf,
        #[arg(long, default_value_t = DEFAULT_SAMPLE_SIZE)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Spread the sample evenly over decided categories.
        #[arg(long)]
        stratified: bool,
    },
    /// Record one verdict.
    Label {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        sample_id: String,
        /// MustSafe, LookSafe, Harm or CannotDecide.
        #[arg(long)]
        verdict: Verdict,
        #[arg(long)]
        reviewer: String,
    },
    /// Harm precision per day or ISO week.
    Precision {
        #[arg(long)]
        store: PathBuf,
        #[arg(long, default_value = "day")]
        group: Grouping,
        #[arg(long)]
        csv: bool,
    },
    /// Verdicts as CSV.
    Export {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Draft whitelist rules and training examples from verdicts.
    Proposals {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        rules_out: PathBuf,
        #[arg(long)]
        data_out: PathBuf,
    },
}

pub fn load_store(path: &Path) -> Result<ReviewStore> {
    if !path.exists() {
        return Ok(ReviewStore::new());
    }
    serde_json::from_reader(files::open(path)?).with_context(|| format!("parsing {}", path.display()))
}

pub fn save_store(path: &Path, store: &ReviewStore) -> Result<()> {
    let mut w = files::create(path)?;
    serde_json::to_writer(&mut w, store)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn fmt_precision(p: Option<f64>) -> String {
    p.map_or("undefined".into(), |v| format!("{v:.2}"))
}

pub fn run(cmd: ReviewCommand) -> Result<()> {
    match cmd {
        ReviewCommand::Sample { log, date, store, n, seed, stratified } => {
            let decisions = files::read_log(&log)?;
            let mode = if stratified { SamplingMode::StratifiedByCategory } else { SamplingMode::Uniform };
            let samples = sample_for_review_with(&decisions, date, n, seed, mode);
            let mut s = load_store(&store)?;
            let added = s.add_samples(samples);
            save_store(&store, &s)?;
            eprintln!("{added} new samples for {date}");
            Ok(())
        }
        ReviewCommand::Label { store, sample_id, verdict, reviewer } => {
            let mut s = load_store(&store)?;
            s.record_verdict(&sample_id, verdict, &reviewer, Utc::now())?;
            save_store(&store, &s)
        }
        ReviewCommand::Precision { store, group, csv } => {
            let s = load_store(&store)?;
            let periods = s.precision_by(group);
            let mut out = String::new();
            if csv {
                out += "period,must_safe,look_safe,harm,cannot_decide,precision\n";
                for p in &periods {
                    let c = &p.counts;
                    out += &format!(
                        "{},{},{},{},{},{}\n",
                        p.period,
                        c.must_safe,
                        c.look_safe,
                        c.harm,
                        c.cannot_decide,
                        p.precision.map_or(String::new(), |v| v.to_string())
                    );
                }
            } else {
                for p in &periods {
                    out += &format!("{:<12} {:>9}  ({} verdicts)\n", p.period, fmt_precision(p.precision), p.counts.total());
                }
                out += &format!("{:<12} {:>9}\n", "overall", fmt_precision(VerdictCounts::tally(s.records()).harm_precision().ok()));
            }
            files::emit(None, &out)
        }
        ReviewCommand::Export { store, out } => files::emit(out.as_deref(), &verdicts_csv(&load_store(&store)?)),
        ReviewCommand::Proposals { store, rules_out, data_out } => {
            let s = load_store(&store)?;
            let c = promote_corrections(s.records(), s.samples(), &SentenceSplitter::default());
            write_rule_file(files::create(&rules_out)?, &c.rules)?;
            let mut w = files::create(&data_out)?;
            write_dataset(&mut w, &c.examples)?;
            w.flush()?;
            eprintln!("{} draft rules, {} examples", c.rules.len(), c.examples.len());
            Ok(())
        }
    }
}
