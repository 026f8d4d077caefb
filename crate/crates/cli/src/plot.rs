use std::path::{Path, PathBuf};

use anyhow::Result;
use chrono::NaiveDate;
use clap::Args;
use cueguard_core::analytics::{
    bucketize_decisions, cumulative_series, daily_volume_ratio, event_window, sensitive_ratio, DEFAULT_EVENT_DAYS,
};
use cueguard_core::feedback::Grouping;
use cueguard_core::Category;

use crate::files;
use crate::review::load_store;
use crate::svg::{bar_chart, grouped_bars, line_chart, Series};

#[derive(Args)]
pub struct PlotArgs {
    #[arg(long)]
    log: PathBuf,
    /// Output directory for the CSV series and SVG charts.
    #[arg(long)]
    out: PathBuf,
    /// Review store; adds the precision timeline.
    #[arg(long)]
    review: Option<PathBuf>,
    #[arg(long, default_value = "day")]
    group: Grouping,
    /// First day of an event window to compare against the overall mix.
    #[arg(long)]
    event_start: Option<NaiveDate>,
    #[arg(long, default_value_t = DEFAULT_EVENT_DAYS)]
    event_days: usize,
}

fn write(dir: &Path, name: &str, text: &str) -> Result<PathBuf> {
    let path = dir.join(name);
    files::emit(Some(&path), text)?;
    Ok(path)
}

fn cell(v: Option<f64>) -> String {
    v.map_or(String::new(), |v| format!("{v}"))
}

/// Writes the figure files and returns their paths.
pub fn render(args: &PlotArgs) -> Result<Vec<PathBuf>> {
    let decisions = files::read_log(&args.log)?;
    let buckets = bucketize_decisions(&decisions);
    let dates: Vec<String> = buckets.iter().map(|b| b.date.to_string()).collect();
    let sensitive = &Category::ALL[..Category::ALL.len() - 1];
    let mut written = Vec::new();

    let volume = daily_volume_ratio(&buckets)?;
    let mut csv = String::from("date,total_queries,volume_ratio\n");
    for (b, r) in buckets.iter().zip(&volume.ratios) {
        csv += &format!("{},{},{}\n", b.date, b.total_queries, r.value);
    }
    written.push(write(&args.out, "volume.csv", &csv)?);
    let ratios: Vec<f64> = volume.ratios.iter().map(|r| r.value).collect();
    written.push(write(&args.out, "volume.svg", &bar_chart("Daily volume relative to peak", &dates, &ratios, ""))?);

    let share = sensitive_ratio(&buckets);
    let mut csv = String::from("date,sensitive_queries,sensitive_percent\n");
    for (b, p) in buckets.iter().zip(&share) {
        csv += &format!("{},{},{}\n", b.date, b.sensitive_queries, cell(p.percent));
    }
    written.push(write(&args.out, "sensitive_ratio.csv", &csv)?);
    let series = vec![Series { name: "sensitive".into(), values: share.iter().map(|p| p.percent).collect() }];
    written.push(write(&args.out, "sensitive_ratio.svg", &line_chart("Sensitive share of queries", &dates, &series, "%"))?);

    let cumulative = cumulative_series(&buckets);
    let mut csv = String::from("date");
    for c in sensitive {
        csv += &format!(",{}", c.id());
    }
    csv += "\n";
    for point in &cumulative {
        csv += &point.date.to_string();
        for s in point.shares.iter() {
            csv += &format!(",{s}");
        }
        csv += "\n";
    }
    written.push(write(&args.out, "cumulative_distribution.csv", &csv)?);
    let series: Vec<Series> = sensitive
        .iter()
        .enumerate()
        .map(|(i, c)| Series { name: c.id().into(), values: cumulative.iter().map(|p| Some(p.shares[i])).collect() })
        .collect();
    written.push(write(
        &args.out,
        "cumulative_distribution.svg",
        &line_chart("Cumulative category distribution", &dates, &series, "%"),
    )?);

    if let Some(start) = args.event_start {
        let report = event_window(&buckets, start, Some(args.event_days))?;
        let mut csv = String::from("category,window_share,overall_share,delta_pp\n");
        for (i, c) in sensitive.iter().enumerate() {
            csv += &format!("{},{},{},{}\n", c.id(), report.window.shares[i], report.overall.shares[i], report.delta[i]);
        }
        written.push(write(&args.out, "event_window.csv", &csv)?);
        let names: Vec<String> = sensitive.iter().map(|c| c.id().to_string()).collect();
        let series = vec![
            Series { name: format!("{start} +{}d", args.event_days), values: report.window.shares.iter().map(|v| Some(*v)).collect() },
            Series { name: "overall".into(), values: report.overall.shares.iter().map(|v| Some(*v)).collect() },
        ];
        written.push(write(&args.out, "event_window.svg", &grouped_bars("Event window vs overall", &names, &series, "%"))?);
    }

    if let Some(path) = &args.review {
        let periods = load_store(path)?.precision_by(args.group);
        let mut csv = String::from("period,verdicts,precision\n");
        for p in &periods {
            csv += &format!("{},{},{}\n", p.period, p.counts.total(), cell(p.precision));
        }
        written.push(write(&args.out, "precision.csv", &csv)?);
        let labels: Vec<String> = periods.iter().map(|p| p.period.clone()).collect();
        let series = vec![Series { name: "harm precision".into(), values: periods.iter().map(|p| p.precision).collect() }];
        written.push(write(&args.out, "precision.svg", &line_chart("Harm precision", &labels, &series, ""))?);
    }
    Ok(written)
}

pub fn run(args: PlotArgs) -> Result<()> {
    for p in render(&args)? {
        println!("{}", p.display());
    }
    Ok(())
}
