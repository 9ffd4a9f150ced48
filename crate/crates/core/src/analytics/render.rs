//! Report artifact rendering. All output is deterministic: identical
//! store content yields byte-identical files, so reports can be diffed
//! and pinned as goldens.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::{breakdown_of, daily_series, detect_peaks, top_k, DailySeries, MonthlyBreakdown, PeakConfig};
use crate::calendar::{format_observed_at, Month};
use crate::store::{StorageError, Store, VulnRecord};
use crate::taxonomy::VulnClass;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Svg,
    Html,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "svg" => Ok(ReportFormat::Svg),
            "html" => Ok(ReportFormat::Html),
            other => Err(format!("unknown report format {other:?}")),
        }
    }
}

/// Rendering knobs carried by configuration: how many classes the top
/// table lists and how peaks are detected.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReportOptions {
    pub top_k: usize,
    pub peaks: PeakConfig,
}

impl Default for ReportOptions {
    fn default() -> ReportOptions {
        ReportOptions {
            top_k: 3,
            peaks: PeakConfig::default(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("no months requested")]
    NoMonths,
    #[error("cannot write report: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Storage(#[from] StorageError),
}

/// Fixed class palette for the charts, one entry per class.
pub fn class_color(class: VulnClass) -> &'static str {
    match class {
        VulnClass::ArbitraryFileManipulation => "#8c564b",
        VulnClass::BrokenAuthentication => "#e377c2",
        VulnClass::BufferOverflow => "#d62728",
        VulnClass::CrossSiteRequestForgery => "#ff7f0e",
        VulnClass::DenialOfService => "#9467bd",
        VulnClass::DirectoryTraversal => "#7f7f7f",
        VulnClass::Injection => "#1f77b4",
        VulnClass::Other => "#c7c7c7",
        VulnClass::PrivilegeEscalation => "#bcbd22",
        VulnClass::RemoteCodeExecution => "#17becf",
        VulnClass::RemoteCommandExecution => "#2ca02c",
        VulnClass::ServerSideRequestForgery => "#f7b6d2",
        VulnClass::CrossSiteScripting => "#ffbb78",
    }
}

/// Renders the requested artifacts for each month into `out_dir` and
/// returns the written paths, months outermost, json/svg/html innermost.
pub fn render_report(
    store: &Store,
    months: &[Month],
    out_dir: &Path,
    formats: &[ReportFormat],
    options: ReportOptions,
) -> Result<Vec<PathBuf>, ReportError> {
    if months.is_empty() {
        return Err(ReportError::NoMonths);
    }
    std::fs::create_dir_all(out_dir)?;
    let mut manifest = Vec::new();
    for month in months {
        let series = daily_series(store, *month)?;
        let breakdown = breakdown_of(&series);
        if formats.contains(&ReportFormat::Json) {
            let path = out_dir.join(format!("report-{month}.json"));
            std::fs::write(&path, month_json(&series, &breakdown, options))?;
            manifest.push(path);
        }
        if formats.contains(&ReportFormat::Svg) {
            let path = out_dir.join(format!("chart-{month}.svg"));
            std::fs::write(&path, month_svg(&series))?;
            manifest.push(path);
        }
        if formats.contains(&ReportFormat::Html) {
            let path = out_dir.join(format!("report-{month}.html"));
            std::fs::write(&path, month_html(store, &series, &breakdown)?)?;
            manifest.push(path);
        }
    }
    Ok(manifest)
}

#[derive(Serialize)]
struct ClassCell {
    count: u64,
    percent: u8,
}

#[derive(Serialize)]
struct TopCell {
    class: &'static str,
    percent: u8,
}

#[derive(Serialize)]
struct PeakCell {
    date: String,
    class: &'static str,
    count: u64,
    ratio: f64,
}

#[derive(Serialize)]
struct ReportDoc {
    month: String,
    total: u64,
    by_class: BTreeMap<&'static str, ClassCell>,
    top: Vec<TopCell>,
    daily: BTreeMap<String, BTreeMap<&'static str, u64>>,
    peaks: Vec<PeakCell>,
}

/// All peaks of the month across classes, date order then class name.
fn all_peaks(series: &DailySeries, config: PeakConfig) -> Vec<super::Peak> {
    let mut peaks: Vec<super::Peak> = VulnClass::ALL
        .iter()
        .flat_map(|c| detect_peaks(series, *c, config))
        .collect();
    peaks.sort_by(|a, b| {
        a.date
            .cmp(&b.date)
            .then_with(|| a.class.canonical_name().cmp(b.class.canonical_name()))
    });
    peaks
}

fn month_json(series: &DailySeries, breakdown: &MonthlyBreakdown, options: ReportOptions) -> String {
    let by_class: BTreeMap<&'static str, ClassCell> = VulnClass::ALL
        .iter()
        .map(|c| {
            (
                c.canonical_name(),
                ClassCell {
                    count: breakdown.count(*c),
                    percent: breakdown.percent(*c),
                },
            )
        })
        .collect();
    let top = top_k(breakdown, options.top_k)
        .entries
        .iter()
        .map(|e| TopCell {
            class: e.class.canonical_name(),
            percent: e.percent,
        })
        .collect();
    let daily: BTreeMap<String, BTreeMap<&'static str, u64>> = series
        .days
        .iter()
        .enumerate()
        .map(|(idx, counts)| {
            let per_class: BTreeMap<&'static str, u64> = VulnClass::ALL
                .iter()
                .map(|c| (c.canonical_name(), counts[c.index()]))
                .collect();
            (format!("{:02}", idx + 1), per_class)
        })
        .collect();
    let peaks = all_peaks(series, options.peaks)
        .into_iter()
        .map(|p| PeakCell {
            date: p.date.format("%Y-%m-%d").to_string(),
            class: p.class.canonical_name(),
            count: p.count,
            ratio: p.ratio,
        })
        .collect();
    let doc = ReportDoc {
        month: series.month.to_string(),
        total: breakdown.total,
        by_class,
        top,
        daily,
        peaks,
    };
    let mut text = serde_json::to_string_pretty(&doc).expect("report serializes");
    text.push('\n');
    text
}

const SVG_WIDTH: f64 = 900.0;
const SVG_HEIGHT: f64 = 400.0;

/// Stacked-bar daily chart: one bar group per day, one colored segment
/// per class, stacked in canonical-name order, with a class legend.
fn month_svg(series: &DailySeries) -> String {
    let (left, right, top, bottom) = (45.0, 170.0, 30.0, 35.0);
    let plot_w = SVG_WIDTH - left - right;
    let plot_h = SVG_HEIGHT - top - bottom;
    let base_y = SVG_HEIGHT - bottom;
    let n_days = series.days.len();
    let max_total = series
        .days
        .iter()
        .map(|d| d.iter().sum::<u64>())
        .max()
        .unwrap_or(0)
        .max(1);
    let scale = plot_h / max_total as f64;
    let slot_w = plot_w / n_days as f64;
    let bar_w = slot_w * 0.8;

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SVG_WIDTH:.0}\" height=\"{SVG_HEIGHT:.0}\" viewBox=\"0 0 {SVG_WIDTH:.0} {SVG_HEIGHT:.0}\">\n"
    ));
    svg.push_str(&format!(
        "<rect x=\"0\" y=\"0\" width=\"{SVG_WIDTH:.0}\" height=\"{SVG_HEIGHT:.0}\" fill=\"#ffffff\"/>\n"
    ));
    svg.push_str(&format!(
        "<text x=\"{left:.2}\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\" fill=\"#000000\">{}</text>\n",
        series.month
    ));
    // Axes.
    svg.push_str(&format!(
        "<line x1=\"{left:.2}\" y1=\"{base_y:.2}\" x2=\"{:.2}\" y2=\"{base_y:.2}\" stroke=\"#000000\"/>\n",
        left + plot_w
    ));
    svg.push_str(&format!(
        "<line x1=\"{left:.2}\" y1=\"{top:.2}\" x2=\"{left:.2}\" y2=\"{base_y:.2}\" stroke=\"#000000\"/>\n"
    ));
    svg.push_str(&format!(
        "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"10\" fill=\"#000000\" text-anchor=\"end\">{max_total}</text>\n",
        left - 4.0,
        top + 4.0
    ));
    svg.push_str(&format!(
        "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"10\" fill=\"#000000\" text-anchor=\"end\">0</text>\n",
        left - 4.0,
        base_y
    ));

    let by_name = VulnClass::all_by_name();
    for (idx, counts) in series.days.iter().enumerate() {
        let day = idx + 1;
        let x = left + idx as f64 * slot_w + (slot_w - bar_w) / 2.0;
        let mut cursor = base_y;
        for class in by_name {
            let count = counts[class.index()];
            if count == 0 {
                continue;
            }
            let h = count as f64 * scale;
            cursor -= h;
            svg.push_str(&format!(
                "<rect x=\"{x:.2}\" y=\"{cursor:.2}\" width=\"{bar_w:.2}\" height=\"{h:.2}\" fill=\"{}\"><title>{} day {day}: {count}</title></rect>\n",
                class_color(class),
                class.canonical_name(),
            ));
        }
        let labeled = day == 1 || day == n_days || day % 5 == 0;
        if labeled {
            svg.push_str(&format!(
                "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"10\" fill=\"#000000\" text-anchor=\"middle\">{day}</text>\n",
                x + bar_w / 2.0,
                base_y + 14.0
            ));
        }
    }

    // Legend, one row per class.
    let legend_x = left + plot_w + 18.0;
    for (row, class) in by_name.iter().enumerate() {
        let y = top + 10.0 + row as f64 * 24.0;
        svg.push_str(&format!(
            "<rect x=\"{legend_x:.2}\" y=\"{:.2}\" width=\"12\" height=\"12\" fill=\"{}\"/>\n",
            y - 10.0,
            class_color(*class)
        ));
        svg.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{y:.2}\" font-family=\"sans-serif\" font-size=\"11\" fill=\"#000000\">{}</text>\n",
            legend_x + 18.0,
            class.canonical_name()
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

fn escape_html(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for ch in text.chars() {
        match ch {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            _ => out.push(ch),
        }
    }
    out
}

fn record_line(r: &VulnRecord) -> String {
    let mut line = format!(
        "{} | {}",
        format_observed_at(r.observed_at),
        escape_html(&r.title)
    );
    if !r.discoverer.is_empty() {
        line.push_str(&format!(" | {}", escape_html(&r.discoverer)));
    }
    line.push_str(&format!(" | {}", escape_html(&r.source_id)));
    line
}

/// Self-contained page: chart inline, breakdown table, then the 50 most
/// recent records of every class.
fn month_html(
    store: &Store,
    series: &DailySeries,
    breakdown: &MonthlyBreakdown,
) -> Result<String, StorageError> {
    let month = series.month;
    let mut html = String::new();
    html.push_str("<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">\n");
    html.push_str(&format!("<title>vulntrend {month}</title>\n"));
    html.push_str(
        "<style>\nbody { font-family: sans-serif; margin: 2em; color: #111; }\n\
         table { border-collapse: collapse; }\n\
         td, th { border: 1px solid #999; padding: 4px 10px; text-align: left; }\n\
         ol { margin: 0.3em 0 1.2em; }\n\
         h3 { margin-bottom: 0.2em; }\n</style>\n</head>\n<body>\n",
    );
    html.push_str(&format!(
        "<h1>Vulnerability trends {month}</h1>\n<p>{} records this month.</p>\n",
        breakdown.total
    ));
    html.push_str("<figure>\n");
    html.push_str(&month_svg(series));
    html.push_str("</figure>\n");

    html.push_str("<h2>Breakdown</h2>\n<table>\n<tr><th>class</th><th>count</th><th>percent</th></tr>\n");
    for class in VulnClass::all_by_name() {
        html.push_str(&format!(
            "<tr><td>{}</td><td>{}</td><td>{}%</td></tr>\n",
            class.canonical_name(),
            breakdown.count(class),
            breakdown.percent(class)
        ));
    }
    html.push_str("</table>\n");

    html.push_str("<h2>Latest records per class</h2>\n");
    for class in VulnClass::all_by_name() {
        let records = store.last_n_by_class(class, 50)?;
        html.push_str(&format!(
            "<h3>{} ({})</h3>\n",
            escape_html(class.display_name()),
            class.canonical_name()
        ));
        if records.is_empty() {
            html.push_str("<p>none yet</p>\n");
            continue;
        }
        html.push_str("<ol>\n");
        for r in &records {
            html.push_str(&format!("<li>{}</li>\n", record_line(r)));
        }
        html.push_str("</ol>\n");
    }
    html.push_str("</body>\n</html>\n");
    Ok(html)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::NewRecord;
    use chrono::{DateTime, Utc};

    fn seeded_store(dir: &Path) -> Store {
        let store = Store::open(dir.join("s.jsonl")).unwrap();
        let ingested: DateTime<Utc> = "2018-09-01T00:00:00Z".parse().unwrap();
        let rows = [
            (VulnClass::Injection, "Acme Portal SQL Injection", 14u32),
            (VulnClass::Injection, "Bolt Forum Blind Injection <Flaw>", 15),
            (VulnClass::CrossSiteScripting, "Cinder Panel xss bug", 15),
            (VulnClass::DenialOfService, "Gateway DoS exploit", 20),
        ];
        for (class, title, day) in rows {
            store
                .append(NewRecord {
                    class,
                    title: title.to_string(),
                    discoverer: "rx&co".to_string(),
                    observed_at: format!("2018-02-{day:02}T10:00:00Z").parse().unwrap(),
                    source_id: "market".to_string(),
                    detail_url: String::new(),
                    ingested_at: ingested,
                })
                .unwrap();
        }
        store
    }

    #[test]
    fn render_is_byte_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let store = seeded_store(dir.path());
        let months = [Month::new(2018, 2).unwrap()];
        let formats = [ReportFormat::Json, ReportFormat::Svg, ReportFormat::Html];
        let out_a = dir.path().join("a");
        let out_b = dir.path().join("b");
        let manifest_a = render_report(&store, &months, &out_a, &formats, ReportOptions::default()).unwrap();
        let manifest_b = render_report(&store, &months, &out_b, &formats, ReportOptions::default()).unwrap();
        assert_eq!(manifest_a.len(), 3);
        for (pa, pb) in manifest_a.iter().zip(&manifest_b) {
            assert_eq!(std::fs::read(pa).unwrap(), std::fs::read(pb).unwrap());
        }
    }

    #[test]
    fn json_schema_shape() {
        let dir = tempfile::tempdir().unwrap();
        let store = seeded_store(dir.path());
        let months = [Month::new(2018, 2).unwrap()];
        let out = dir.path().join("out");
        let manifest = render_report(&store, &months, &out, &[ReportFormat::Json], ReportOptions::default()).unwrap();
        assert_eq!(manifest, vec![out.join("report-2018-02.json")]);
        let doc: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&manifest[0]).unwrap()).unwrap();
        assert_eq!(doc["month"], "2018-02");
        assert_eq!(doc["total"], 4);
        assert_eq!(doc["by_class"].as_object().unwrap().len(), 13);
        assert_eq!(doc["by_class"]["injection"]["count"], 2);
        assert_eq!(doc["by_class"]["injection"]["percent"], 50);
        assert_eq!(doc["top"][0]["class"], "injection");
        // Dense daily map: every day of February, all 13 classes.
        let daily = doc["daily"].as_object().unwrap();
        assert_eq!(daily.len(), 28);
        assert_eq!(daily["01"].as_object().unwrap().len(), 13);
        assert_eq!(doc["daily"]["15"]["injection"], 1);
        assert_eq!(doc["daily"]["20"]["denial-of-service"], 1);
        assert!(doc["peaks"].as_array().unwrap().is_empty());
    }

    #[test]
    fn svg_dimensions_and_empty_month() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path().join("s.jsonl")).unwrap();
        let months = [Month::new(2018, 3).unwrap()];
        let out = dir.path().join("out");
        let manifest = render_report(&store, &months, &out, &[ReportFormat::Svg], ReportOptions::default()).unwrap();
        let svg = std::fs::read_to_string(&manifest[0]).unwrap();
        assert!(svg.starts_with("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"900\" height=\"400\""));
        assert!(svg.ends_with("</svg>\n"));
        // All 13 classes appear in the legend even with no data.
        for class in VulnClass::ALL {
            assert!(svg.contains(class.canonical_name()));
        }
    }

    #[test]
    fn html_escapes_and_lists_records() {
        let dir = tempfile::tempdir().unwrap();
        let store = seeded_store(dir.path());
        let months = [Month::new(2018, 2).unwrap()];
        let out = dir.path().join("out");
        let manifest = render_report(&store, &months, &out, &[ReportFormat::Html], ReportOptions::default()).unwrap();
        let html = std::fs::read_to_string(&manifest[0]).unwrap();
        assert!(html.contains("Bolt Forum Blind Injection &lt;Flaw&gt;"));
        assert!(html.contains("rx&amp;co"));
        assert!(!html.contains("<Flaw>"));
        assert!(html.contains("<svg "));
        assert!(html.contains("Denial of Service"));
    }

    #[test]
    fn no_months_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path().join("s.jsonl")).unwrap();
        assert!(matches!(
            render_report(&store, &[], dir.path(), &[ReportFormat::Json], ReportOptions::default()),
            Err(ReportError::NoMonths)
        ));
    }

    #[test]
    fn manifest_covers_months_in_order() {
        let dir = tempfile::tempdir().unwrap();
        let store = seeded_store(dir.path());
        let months = [Month::new(2018, 1).unwrap(), Month::new(2018, 2).unwrap()];
        let out = dir.path().join("out");
        let manifest =
            render_report(&store, &months, &out, &[ReportFormat::Json, ReportFormat::Html], ReportOptions::default())
                .unwrap();
        let names: Vec<_> = manifest
            .iter()
            .map(|p| p.file_name().unwrap().to_str().unwrap().to_string())
            .collect();
        assert_eq!(
            names,
            vec![
                "report-2018-01.json",
                "report-2018-01.html",
                "report-2018-02.json",
                "report-2018-02.html",
            ]
        );
    }
}
