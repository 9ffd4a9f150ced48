//! Configuration file parsing and effective-settings assembly. The file
//! is TOML; every field has a default, command-line flags override the
//! file, and `--fixtures` rewrites source page URLs to local files.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use vulntrend_core::analytics::{PeakConfig, ReportFormat, ReportOptions};
use vulntrend_core::dedup::DedupConfig;
use vulntrend_core::sources::{AdapterKind, FetchPolicy, SourceDescriptor};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    store: Option<String>,
    rules: Option<String>,
    #[serde(default)]
    fetch: FetchSection,
    #[serde(default)]
    dedup: DedupSection,
    #[serde(default)]
    report: ReportSection,
    #[serde(default, rename = "source")]
    sources: Vec<SourceSection>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FetchSection {
    timeout_seconds: Option<u64>,
    max_retries: Option<u32>,
    user_agent: Option<String>,
    min_delay_between_requests_seconds: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct DedupSection {
    window_days: Option<u32>,
    threshold: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReportSection {
    out_dir: Option<String>,
    formats: Option<Vec<String>>,
    top_k: Option<usize>,
    peak_factor: Option<f64>,
    peak_min_count: Option<u64>,
    peak_window_days: Option<u32>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SourceSection {
    id: String,
    display_name: Option<String>,
    adapter: String,
    pages: Vec<String>,
    poll_interval_seconds: Option<u64>,
    enabled: Option<bool>,
}

/// Everything a command needs, after merging file, defaults, and flags.
#[derive(Debug)]
pub struct Settings {
    pub store_path: PathBuf,
    pub rules_path: Option<PathBuf>,
    pub sources: Vec<SourceDescriptor>,
    pub fetch: FetchPolicy,
    pub dedup: DedupConfig,
    pub report_out_dir: PathBuf,
    pub report_formats: Vec<ReportFormat>,
    pub report_options: ReportOptions,
}

pub struct Overrides<'a> {
    /// True when the user passed --config explicitly, making a missing
    /// file an error instead of a fallback to defaults.
    pub config_required: bool,
    pub store: Option<&'a Path>,
    pub fixtures: Option<&'a Path>,
}

pub fn load(config_path: &Path, overrides: &Overrides) -> Result<Settings> {
    let file = match std::fs::read_to_string(config_path) {
        Ok(text) => Some(
            toml::from_str::<FileConfig>(&text)
                .with_context(|| format!("invalid config file {}", config_path.display()))?,
        ),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            if overrides.config_required {
                bail!("config file {} not found", config_path.display());
            }
            None
        }
        Err(e) => {
            return Err(e).with_context(|| format!("cannot read {}", config_path.display()))
        }
    };
    assemble(file, overrides)
}

fn assemble(file: Option<FileConfig>, overrides: &Overrides) -> Result<Settings> {
    let file_present = file.is_some();
    let file = file.unwrap_or(FileConfig {
        store: None,
        rules: None,
        fetch: FetchSection::default(),
        dedup: DedupSection::default(),
        report: ReportSection::default(),
        sources: Vec::new(),
    });

    let store_path = match overrides.store {
        Some(p) => p.to_path_buf(),
        None => {
            let s = file.store.unwrap_or_else(|| "vulntrend.jsonl".to_string());
            if s.is_empty() {
                bail!("store path is empty");
            }
            PathBuf::from(s)
        }
    };

    let rules_path = match file.rules {
        Some(p) if p.is_empty() => bail!("rules path is empty"),
        other => other.map(PathBuf::from),
    };

    let defaults = FetchPolicy::default();
    let fetch = FetchPolicy {
        timeout_seconds: file.fetch.timeout_seconds.unwrap_or(defaults.timeout_seconds),
        max_retries: file.fetch.max_retries.unwrap_or(defaults.max_retries),
        user_agent: file.fetch.user_agent.unwrap_or(defaults.user_agent),
        min_delay_between_requests_seconds: file
            .fetch
            .min_delay_between_requests_seconds
            .unwrap_or(defaults.min_delay_between_requests_seconds),
    };
    if fetch.timeout_seconds == 0 {
        bail!("fetch.timeout_seconds must be >= 1");
    }
    if fetch.user_agent.is_empty() {
        bail!("fetch.user_agent is empty");
    }

    let dedup = DedupConfig::new(
        file.dedup.window_days.unwrap_or(60),
        file.dedup.threshold.unwrap_or(0.8),
    )
    .context("invalid [dedup] settings")?;

    let report_out_dir = PathBuf::from(file.report.out_dir.unwrap_or_else(|| "reports".to_string()));
    if report_out_dir.as_os_str().is_empty() {
        bail!("report.out_dir is empty");
    }
    let report_formats = match file.report.formats {
        None => vec![ReportFormat::Json, ReportFormat::Svg, ReportFormat::Html],
        Some(names) => parse_formats(&names)?,
    };
    let top_k = file.report.top_k.unwrap_or(3);
    if top_k < 1 {
        bail!("report.top_k must be >= 1");
    }
    let peaks = PeakConfig::new(
        file.report.peak_factor.unwrap_or(3.0),
        file.report.peak_min_count.unwrap_or(5),
        file.report.peak_window_days.unwrap_or(7),
    )
    .context("invalid peak settings: factor must be > 1, counts and window >= 1")?;

    if file_present && file.sources.is_empty() {
        bail!("config declares no sources; at least one [[source]] is required");
    }
    let mut seen_ids = BTreeSet::new();
    let mut sources = Vec::with_capacity(file.sources.len());
    for (index, s) in file.sources.into_iter().enumerate() {
        if s.id.is_empty() {
            bail!("source #{} has an empty id", index + 1);
        }
        if !s
            .id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
        {
            bail!(
                "source id {:?} may only contain letters, digits, '-' and '_'",
                s.id
            );
        }
        if !seen_ids.insert(s.id.clone()) {
            bail!("duplicate source id {:?}", s.id);
        }
        if s.pages.is_empty() {
            bail!("source {:?} lists no pages", s.id);
        }
        if s.pages.iter().any(|p| p.is_empty()) {
            bail!("source {:?} has an empty page URL", s.id);
        }
        let adapter_kind: AdapterKind = s
            .adapter
            .parse()
            .map_err(|e: String| anyhow::anyhow!("source {:?}: {e}", s.id))?;
        let poll_interval_seconds = s.poll_interval_seconds.unwrap_or(60);
        if poll_interval_seconds == 0 {
            bail!("source {:?}: poll_interval_seconds must be >= 1", s.id);
        }
        let page_urls = match overrides.fixtures {
            None => s.pages,
            Some(dir) => fixture_urls(dir, &s.id, s.pages.len()),
        };
        sources.push(SourceDescriptor {
            display_name: s.display_name.unwrap_or_else(|| s.id.clone()),
            id: s.id,
            adapter_kind,
            page_urls,
            poll_interval_seconds,
            enabled: s.enabled.unwrap_or(true),
        });
    }

    Ok(Settings {
        store_path,
        rules_path,
        sources,
        fetch,
        dedup,
        report_out_dir,
        report_formats,
        report_options: ReportOptions { top_k, peaks },
    })
}

pub fn parse_formats(names: &[String]) -> Result<Vec<ReportFormat>> {
    if names.is_empty() {
        bail!("no report formats given");
    }
    let mut formats = Vec::new();
    for name in names {
        let format: ReportFormat = name
            .parse()
            .map_err(|e: String| anyhow::anyhow!("{e}; valid formats: json, svg, html"))?;
        if !formats.contains(&format) {
            formats.push(format);
        }
    }
    Ok(formats)
}

/// The offline layout: page i of a source lives at
/// `<dir>/<source-id>/page-<i>.html`, 1-based, one file per configured
/// page URL.
fn fixture_urls(dir: &Path, source_id: &str, pages: usize) -> Vec<String> {
    (1..=pages)
        .map(|i| format!("file:{}", dir.join(source_id).join(format!("page-{i}.html")).display()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const FULL: &str = r#"
store = "data/vulns.jsonl"
rules = "my.rules"

[fetch]
timeout_seconds = 7
max_retries = 1
user_agent = "probe/2.0"
min_delay_between_requests_seconds = 3

[dedup]
window_days = 30
threshold = 0.9

[report]
out_dir = "out"
formats = ["json", "svg"]
top_k = 5
peak_factor = 2.5
peak_min_count = 4
peak_window_days = 10

[[source]]
id = "market"
display_name = "Example market"
adapter = "market-listing"
pages = ["https://market.example/latest", "https://market.example/page2"]
poll_interval_seconds = 120

[[source]]
id = "blog"
adapter = "microblog"
pages = ["https://micro.example/feed"]
enabled = false
"#;

    fn no_overrides() -> Overrides<'static> {
        Overrides {
            config_required: false,
            store: None,
            fixtures: None,
        }
    }

    fn parse(text: &str) -> Result<Settings> {
        assemble(Some(toml::from_str(text).unwrap()), &no_overrides())
    }

    #[test]
    fn full_config_round_trips() {
        let s = parse(FULL).unwrap();
        assert_eq!(s.store_path, PathBuf::from("data/vulns.jsonl"));
        assert_eq!(s.rules_path, Some(PathBuf::from("my.rules")));
        assert_eq!(s.fetch.timeout_seconds, 7);
        assert_eq!(s.fetch.max_retries, 1);
        assert_eq!(s.fetch.user_agent, "probe/2.0");
        assert_eq!(s.fetch.min_delay_between_requests_seconds, 3);
        assert_eq!(s.dedup.window_days, 30);
        assert_eq!(s.dedup.threshold, 0.9);
        assert_eq!(s.report_out_dir, PathBuf::from("out"));
        assert_eq!(
            s.report_formats,
            vec![ReportFormat::Json, ReportFormat::Svg]
        );
        assert_eq!(s.report_options.top_k, 5);
        assert_eq!(s.report_options.peaks.factor, 2.5);
        assert_eq!(s.sources.len(), 2);
        assert_eq!(s.sources[0].id, "market");
        assert_eq!(s.sources[0].display_name, "Example market");
        assert_eq!(s.sources[0].adapter_kind, AdapterKind::MarketListing);
        assert_eq!(s.sources[0].page_urls.len(), 2);
        assert_eq!(s.sources[0].poll_interval_seconds, 120);
        assert!(s.sources[0].enabled);
        assert_eq!(s.sources[1].display_name, "blog");
        assert!(!s.sources[1].enabled);
    }

    #[test]
    fn minimal_config_gets_defaults() {
        let s = parse(
            r#"
[[source]]
id = "market"
adapter = "market-listing"
pages = ["https://market.example/latest"]
"#,
        )
        .unwrap();
        assert_eq!(s.store_path, PathBuf::from("vulntrend.jsonl"));
        assert_eq!(s.rules_path, None);
        assert_eq!(s.fetch, FetchPolicy::default());
        assert_eq!(s.dedup, DedupConfig::default());
        assert_eq!(s.report_out_dir, PathBuf::from("reports"));
        assert_eq!(s.report_formats.len(), 3);
        assert_eq!(s.report_options.top_k, 3);
        assert_eq!(s.sources[0].poll_interval_seconds, 60);
        assert!(s.sources[0].enabled);
    }

    #[test]
    fn missing_file_without_explicit_flag_yields_defaults() {
        let s = assemble(None, &no_overrides()).unwrap();
        assert!(s.sources.is_empty());
        assert_eq!(s.store_path, PathBuf::from("vulntrend.jsonl"));
    }

    #[test]
    fn store_override_wins() {
        let overrides = Overrides {
            config_required: false,
            store: Some(Path::new("elsewhere.jsonl")),
            fixtures: None,
        };
        let s = assemble(Some(toml::from_str(FULL).unwrap()), &overrides).unwrap();
        assert_eq!(s.store_path, PathBuf::from("elsewhere.jsonl"));
    }

    #[test]
    fn fixtures_rewrite_every_page_url() {
        let overrides = Overrides {
            config_required: false,
            store: None,
            fixtures: Some(Path::new("/fx")),
        };
        let s = assemble(Some(toml::from_str(FULL).unwrap()), &overrides).unwrap();
        assert_eq!(
            s.sources[0].page_urls,
            vec![
                "file:/fx/market/page-1.html".to_string(),
                "file:/fx/market/page-2.html".to_string(),
            ]
        );
        assert_eq!(s.sources[1].page_urls, vec!["file:/fx/blog/page-1.html"]);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let cases = [
            // Config file present but no sources.
            "store = \"x.jsonl\"",
            // Duplicate id.
            r#"
[[source]]
id = "market"
adapter = "market-listing"
pages = ["https://a"]
[[source]]
id = "market"
adapter = "microblog"
pages = ["https://b"]
"#,
            // Unknown adapter.
            r#"
[[source]]
id = "market"
adapter = "rss"
pages = ["https://a"]
"#,
            // No pages.
            r#"
[[source]]
id = "market"
adapter = "market-listing"
pages = []
"#,
            // Path-hostile id.
            r#"
[[source]]
id = "../market"
adapter = "market-listing"
pages = ["https://a"]
"#,
            // Zero poll interval.
            r#"
[[source]]
id = "market"
adapter = "market-listing"
pages = ["https://a"]
poll_interval_seconds = 0
"#,
            // Threshold out of range.
            r#"
[dedup]
threshold = 1.5
[[source]]
id = "market"
adapter = "market-listing"
pages = ["https://a"]
"#,
            // Peak factor must exceed 1.
            r#"
[report]
peak_factor = 1.0
[[source]]
id = "market"
adapter = "market-listing"
pages = ["https://a"]
"#,
            // Unknown format name.
            r#"
[report]
formats = ["pdf"]
[[source]]
id = "market"
adapter = "market-listing"
pages = ["https://a"]
"#,
        ];
        for case in cases {
            assert!(parse(case).is_err(), "accepted: {case}");
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<FileConfig>("shop = 1").is_err());
        assert!(toml::from_str::<FileConfig>(
            r#"
[fetch]
timeout = 3
"#
        )
        .is_err());
    }

    #[test]
    fn missing_explicit_config_is_an_error() {
        let overrides = Overrides {
            config_required: true,
            store: None,
            fixtures: None,
        };
        let err = load(Path::new("/definitely/not/here.conf"), &overrides).unwrap_err();
        assert!(err.to_string().contains("not found"));
    }
}
