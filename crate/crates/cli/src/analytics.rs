use std::path::PathBuf;

use anyhow::{bail, Result};
use chrono::NaiveDate;
use clap::{Args, ValueEnum};
use cueguard_core::analytics::{
    buckets_csv, bucketize_decisions, category_correlation, correlation_csv, cumulative_series, daily_volume_ratio,
    distribution, distribution_csv, event_window, extract_keywords, keywords_csv, sensitive_ratio, Scope,
    SimpleTokenizer, DEFAULT_STOPLIST,
};
use cueguard_core::taxonomy::parse_category;

use crate::files;

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum View {
    /// Per-day counts.
    Daily,
    /// Volume relative to the peak day, and sensitive share per day.
    Volume,
    /// Distribution up to `--upto`, or the cumulative series.
    Cumulative,
    Overall,
    /// Event window from `--start` against the overall distribution.
    Events,
    Correlation,
    Keywords,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Args)]
pub struct AnalyticsArgs {
    #[arg(value_enum)]
    view: View,
    #[arg(long)]
    log: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Restrict `daily` and `overall` to one date.
    #[arg(long)]
    date: Option<NaiveDate>,
    #[arg(long)]
    upto: Option<NaiveDate>,
    #[arg(long)]
    start: Option<NaiveDate>,
    #[arg(long)]
    days: Option<usize>,
    #[arg(long)]
    category: Option<String>,
    #[arg(long, default_value_t = 20)]
    k: usize,
    /// Comma-separated stoplist replacing the default one.
    #[arg(long)]
    stop: Option<String>,
}

pub fn run(args: AnalyticsArgs) -> Result<()> {
    let decisions = files::read_log(&args.log)?;
    let buckets = bucketize_decisions(&decisions);
    let csv = args.format == Format::Csv;
    let unsupported = || anyhow::anyhow!("this view has no CSV form; use --format json");

    let text = match args.view {
        View::Daily => {
            let selected: Vec<_> = buckets.iter().filter(|b| args.date.is_none_or(|d| b.date == d)).cloned().collect();
            if csv { buckets_csv(&selected) } else { files::json(&selected)? }
        }
        View::Volume => {
            if csv {
                return Err(unsupported());
            }
            files::json(&serde_json::json!({
                "volume": daily_volume_ratio(&buckets)?,
                "sensitive": sensitive_ratio(&buckets),
            }))?
        }
        View::Cumulative => match args.upto {
            Some(date) => {
                let s = distribution(&buckets, Scope::CumulativeTo { date })?;
                if csv { distribution_csv(&s) } else { files::json(&s)? }
            }
            None if csv => return Err(unsupported()),
            None => files::json(&cumulative_series(&buckets))?,
        },
        View::Overall => {
            let scope = args.date.map_or(Scope::Overall, |date| Scope::Date { date });
            let s = distribution(&buckets, scope)?;
            if csv { distribution_csv(&s) } else { files::json(&s)? }
        }
        View::Events => {
            let Some(start) = args.start else { bail!("events needs --start") };
            if csv {
                return Err(unsupported());
            }
            files::json(&event_window(&buckets, start, args.days)?)?
        }
        View::Correlation => {
            let m = category_correlation(&buckets)?;
            if csv { correlation_csv(&m) } else { files::json(&m)? }
        }
        View::Keywords => {
            let Some(id) = &args.category else { bail!("keywords needs --category") };
            let category = parse_category(id)?;
            let stop: Vec<&str> = match &args.stop {
                Some(s) => s.split(',').map(str::trim).filter(|s| !s.is_empty()).collect(),
                None => DEFAULT_STOPLIST.to_vec(),
            };
            let report = extract_keywords(&decisions, category, &stop, args.k, &SimpleTokenizer);
            if csv { keywords_csv(&report) } else { files::json(&report)? }
        }
    };
    files::emit(args.out.as_deref(), &text)
}
