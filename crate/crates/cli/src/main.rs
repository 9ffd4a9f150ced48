//! vulntrend: ingest exploit listings, classify them, and report trends.
//!
//! Human-readable results go to standard output; logs and diagnostics go
//! to standard error. The exit code is zero exactly when the command
//! finished without errors.

mod config;

use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, OnceLock};

use anyhow::{anyhow, bail, Context, Result};
use chrono::{DateTime, Utc};
use clap::{Parser, Subcommand};

use vulntrend_core::analytics::render_report;
use vulntrend_core::calendar::{format_observed_at, Month};
use vulntrend_core::clock::{Clock, FakeClock, SystemClock};
use vulntrend_core::ingest::{Daemon, IngestSummary, Pipeline, SourceStatus};
use vulntrend_core::sources::SourceDescriptor;
use vulntrend_core::store::Store;
use vulntrend_core::taxonomy::{default_ruleset, load_rules_file, RuleSet, VulnClass};

use config::{Overrides, Settings};

#[derive(Parser)]
#[command(
    name = "vulntrend",
    version,
    about = "Ingests exploit listings, classifies them, and reports monthly trends"
)]
struct Cli {
    /// Configuration file (default: ./vulntrend.conf; when passed
    /// explicitly the file must exist)
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Replace every source page URL with file:<DIR>/<source-id>/page-N.html
    /// for offline runs
    #[arg(long, global = true, value_name = "DIR")]
    fixtures: Option<PathBuf>,

    /// Store file, overriding the configured path
    #[arg(long, global = true, value_name = "PATH")]
    store: Option<PathBuf>,

    /// Pin the clock to an RFC 3339 instant (single-shot commands only)
    #[arg(long, global = true, value_name = "RFC3339", value_parser = parse_instant)]
    now: Option<DateTime<Utc>>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Classify one title and print its canonical class name
    Classify {
        /// Title text to classify
        text: String,
    },
    /// Fetch new entries from the configured sources
    Ingest {
        /// Run a single cycle per source and exit instead of polling
        #[arg(long)]
        once: bool,
        /// Restrict the run to this source id
        #[arg(long, value_name = "ID")]
        source: Option<String>,
    },
    /// Poll all enabled sources on their intervals until interrupted
    Watch,
    /// Render report artifacts for one or more months
    Report {
        /// Month to cover, repeatable
        #[arg(long = "month", value_name = "YYYY-MM", required = true)]
        months: Vec<String>,
        /// Comma-separated subset of json,svg,html (default: configured formats)
        #[arg(long, value_name = "LIST", value_delimiter = ',')]
        format: Vec<String>,
        /// Output directory (default: configured report directory)
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Show per-source poller status
    Status,
    /// Print the newest stored records of one class
    Last {
        /// Canonical class name
        #[arg(long, value_name = "CLASS")]
        class: String,
        /// How many records to print
        #[arg(short = 'n', long = "limit", value_name = "N", default_value_t = 50)]
        limit: usize,
    },
}

fn parse_instant(s: &str) -> Result<DateTime<Utc>, String> {
    DateTime::parse_from_rfc3339(s)
        .map(|t| t.with_timezone(&Utc))
        .map_err(|e| format!("invalid RFC 3339 instant {s:?}: {e}"))
}

fn main() -> ExitCode {
    init_tracing();
    match run() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn init_tracing() {
    use tracing_subscriber::EnvFilter;
    let filter = EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info"));
    tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .init();
}

fn run() -> Result<ExitCode> {
    let cli = Cli::parse();
    let overrides = Overrides {
        config_required: cli.config.is_some(),
        store: cli.store.as_deref(),
        fixtures: cli.fixtures.as_deref(),
    };
    let config_path = cli
        .config
        .clone()
        .unwrap_or_else(|| PathBuf::from("./vulntrend.conf"));
    let settings = config::load(&config_path, &overrides)?;

    match cli.command {
        Command::Classify { text } => cmd_classify(&settings, &text),
        Command::Ingest { once: true, source } => {
            cmd_ingest_once(&settings, source.as_deref(), &*clock_from(cli.now))
        }
        Command::Ingest {
            once: false,
            source,
        } => cmd_watch(&settings, source.as_deref(), cli.now),
        Command::Watch => cmd_watch(&settings, None, cli.now),
        Command::Report {
            months,
            format,
            out,
        } => cmd_report(&settings, &months, &format, out),
        Command::Status => cmd_status(&settings, &*clock_from(cli.now)),
        Command::Last { class, limit } => cmd_last(&settings, &class, limit),
    }
}

fn clock_from(now: Option<DateTime<Utc>>) -> Arc<dyn Clock> {
    match now {
        Some(t) => Arc::new(FakeClock::new(t)),
        None => Arc::new(SystemClock),
    }
}

fn ruleset(settings: &Settings) -> Result<RuleSet> {
    match &settings.rules_path {
        None => Ok(default_ruleset()),
        Some(p) => load_rules_file(p)
            .with_context(|| format!("cannot load rules from {}", p.display())),
    }
}

fn build_pipeline(settings: &Settings) -> Result<Arc<Pipeline>> {
    let store = Store::open(&settings.store_path)
        .with_context(|| format!("cannot open store {}", settings.store_path.display()))?;
    Ok(Arc::new(Pipeline::new(
        Arc::new(store),
        Arc::new(ruleset(settings)?),
        settings.dedup,
        settings.fetch.clone(),
    )))
}

/// Resolves --source against the configured list. Without a filter the
/// enabled sources are returned; naming a source selects it even when
/// disabled.
fn selected_sources(settings: &Settings, filter: Option<&str>) -> Result<Vec<SourceDescriptor>> {
    if settings.sources.is_empty() {
        bail!("no sources configured; create vulntrend.conf or pass --config");
    }
    match filter {
        None => Ok(settings
            .sources
            .iter()
            .filter(|s| s.enabled)
            .cloned()
            .collect()),
        Some(id) => {
            let picked: Vec<SourceDescriptor> = settings
                .sources
                .iter()
                .filter(|s| s.id == id)
                .cloned()
                .collect();
            if picked.is_empty() {
                let ids: Vec<&str> = settings.sources.iter().map(|s| s.id.as_str()).collect();
                bail!("unknown source {id:?}; configured sources: {}", ids.join(", "));
            }
            Ok(picked)
        }
    }
}

fn cmd_classify(settings: &Settings, text: &str) -> Result<ExitCode> {
    let rules = ruleset(settings)?;
    println!("{}", rules.classify(text).class);
    Ok(ExitCode::SUCCESS)
}

fn cmd_ingest_once(
    settings: &Settings,
    filter: Option<&str>,
    clock: &dyn Clock,
) -> Result<ExitCode> {
    let sources = selected_sources(settings, filter)?;
    if sources.is_empty() {
        bail!("all configured sources are disabled");
    }
    let pipeline = build_pipeline(settings)?;
    let mut failed = false;
    let mut appended = 0usize;
    for source in &sources {
        let summary = pipeline.run_once(source, clock)?;
        failed |= summary.error.is_some();
        appended += summary.records_appended;
        print_summary(&summary);
    }
    println!("appended {appended} records");
    Ok(if failed {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    })
}

fn cmd_watch(
    settings: &Settings,
    filter: Option<&str>,
    now: Option<DateTime<Utc>>,
) -> Result<ExitCode> {
    if now.is_some() {
        bail!("--now pins the clock and only applies to single-shot commands");
    }
    let sources = selected_sources(settings, filter)?;
    if !sources.iter().any(|s| s.enabled) {
        bail!("no enabled sources to watch");
    }
    let pipeline = build_pipeline(settings)?;
    let mut daemon = Daemon::new(pipeline, sources, Arc::new(SystemClock));
    install_shutdown_handler(daemon.shutdown_flag());
    daemon.observe(print_summary);
    tracing::info!("watching; interrupt to stop");
    daemon.start();
    daemon.join();
    tracing::info!("all pollers stopped");
    Ok(ExitCode::SUCCESS)
}

static SHUTDOWN: OnceLock<Arc<AtomicBool>> = OnceLock::new();

extern "C" fn on_signal(_: libc::c_int) {
    if let Some(flag) = SHUTDOWN.get() {
        flag.store(true, Ordering::SeqCst);
    }
}

/// Pollers watch the daemon's shutdown flag between sleep slices, so
/// flipping it from the handler is all an interrupt needs to do.
fn install_shutdown_handler(flag: Arc<AtomicBool>) {
    let _ = SHUTDOWN.set(flag);
    let handler = on_signal as extern "C" fn(libc::c_int);
    unsafe {
        libc::signal(libc::SIGINT, handler as libc::sighandler_t);
        libc::signal(libc::SIGTERM, handler as libc::sighandler_t);
    }
}

fn cmd_report(
    settings: &Settings,
    months: &[String],
    formats: &[String],
    out: Option<PathBuf>,
) -> Result<ExitCode> {
    let mut parsed = Vec::with_capacity(months.len());
    for m in months {
        parsed.push(m.parse::<Month>()?);
    }
    let formats = if formats.is_empty() {
        settings.report_formats.clone()
    } else {
        config::parse_formats(formats)?
    };
    let out_dir = out.unwrap_or_else(|| settings.report_out_dir.clone());
    let store = Store::open(&settings.store_path)
        .with_context(|| format!("cannot open store {}", settings.store_path.display()))?;
    let paths = render_report(&store, &parsed, &out_dir, &formats, settings.report_options)?;
    for p in &paths {
        println!("{}", p.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_status(settings: &Settings, clock: &dyn Clock) -> Result<ExitCode> {
    if settings.sources.is_empty() {
        bail!("no sources configured; create vulntrend.conf or pass --config");
    }
    let pipeline = build_pipeline(settings)?;
    let daemon = Daemon::new(pipeline, settings.sources.clone(), clock_like(clock));
    print_status(&daemon.status());
    Ok(ExitCode::SUCCESS)
}

/// Status never advances the clock, so wrapping the borrowed clock in a
/// fresh FakeClock pinned to its current instant is equivalent.
fn clock_like(clock: &dyn Clock) -> Arc<dyn Clock> {
    Arc::new(FakeClock::new(clock.now()))
}

fn cmd_last(settings: &Settings, class: &str, limit: usize) -> Result<ExitCode> {
    if limit < 1 {
        bail!("-n must be >= 1");
    }
    let class: VulnClass = class.parse().map_err(|_| {
        let names: Vec<&str> = VulnClass::all_by_name()
            .iter()
            .map(|c| c.canonical_name())
            .collect();
        anyhow!("unknown class {class:?}; valid classes: {}", names.join(", "))
    })?;
    let store = Store::open(&settings.store_path)
        .with_context(|| format!("cannot open store {}", settings.store_path.display()))?;
    for r in store.last_n_by_class(class, limit)? {
        let mut line = format!("{} | {}", format_observed_at(r.observed_at), r.title);
        if !r.discoverer.is_empty() {
            line.push_str(" | ");
            line.push_str(&r.discoverer);
        }
        line.push_str(" | ");
        line.push_str(&r.source_id);
        println!("{line}");
    }
    Ok(ExitCode::SUCCESS)
}

fn print_summary(s: &IngestSummary) {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    let _ = write!(
        out,
        "{} {}: seen={} fresh={} appended={} duplicates={} malformed={}",
        s.finished_at.format("%Y-%m-%d %H:%M:%S"),
        s.source_id,
        s.entries_seen,
        s.entries_after_watermark,
        s.records_appended,
        s.duplicates_skipped,
        s.malformed_skipped,
    );
    if let Some(e) = &s.error {
        let _ = write!(out, " error: {e}");
    }
    let _ = writeln!(out);
    let _ = out.flush();
}

fn print_status(rows: &[SourceStatus]) {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    let _ = writeln!(
        out,
        "{:<14} {:<11} {:>8} {:>9} {:>9}  {:<19} {}",
        "SOURCE", "STATE", "UPTIME", "FAILURES", "INGESTED", "LAST SUCCESS", "LAST ERROR"
    );
    for r in rows {
        let last_success = r
            .last_success_at
            .map(|t| t.format("%Y-%m-%d %H:%M:%S").to_string())
            .unwrap_or_else(|| "-".to_string());
        let _ = writeln!(
            out,
            "{:<14} {:<11} {:>7}s {:>9} {:>9}  {:<19} {}",
            r.source_id,
            r.state.name(),
            r.uptime_seconds,
            r.consecutive_failures,
            r.total_records_ingested,
            last_success,
            r.last_error.as_deref().unwrap_or("-"),
        );
    }
    let _ = out.flush();
}
