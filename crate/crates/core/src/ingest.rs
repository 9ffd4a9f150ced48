//! Pipeline orchestration: fetch, parse, watermark filter, classify,
//! dedup, append. One poller per source; all check-then-append work goes
//! through a single write gate so a dedup decision can never race a
//! concurrent append of the same class.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use chrono::{DateTime, Duration, Utc};

use crate::clock::Clock;
use crate::dedup::{check_duplicate, DedupConfig};
use crate::sources::{entries_after, fetch_page, parse_listing, FetchPolicy, SourceDescriptor};
use crate::store::{NewRecord, StorageError, Store};
use crate::taxonomy::RuleSet;

/// What one run_once did, with enough counters to audit the funnel:
/// entries_after_watermark = records_appended + duplicates_skipped +
/// malformed_skipped whenever error is absent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IngestSummary {
    pub source_id: String,
    pub started_at: DateTime<Utc>,
    pub finished_at: DateTime<Utc>,
    pub entries_seen: usize,
    pub entries_after_watermark: usize,
    pub duplicates_skipped: usize,
    pub malformed_skipped: usize,
    pub records_appended: usize,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceState {
    Running,
    BackingOff,
    Stopped,
}

impl SourceState {
    pub fn name(self) -> &'static str {
        match self {
            SourceState::Running => "running",
            SourceState::BackingOff => "backing-off",
            SourceState::Stopped => "stopped",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceStatus {
    pub source_id: String,
    pub state: SourceState,
    pub started_at: Option<DateTime<Utc>>,
    pub uptime_seconds: u64,
    pub consecutive_failures: u32,
    pub last_success_at: Option<DateTime<Utc>>,
    pub last_error: Option<String>,
    pub total_records_ingested: u64,
}

/// The per-source stages wired to shared classification rules, dedup
/// config and store.
pub struct Pipeline {
    store: Arc<Store>,
    rules: Arc<RuleSet>,
    dedup: DedupConfig,
    fetch: FetchPolicy,
    /// Serializes dedup check plus append; see module doc.
    write_gate: Mutex<()>,
}

impl Pipeline {
    pub fn new(
        store: Arc<Store>,
        rules: Arc<RuleSet>,
        dedup: DedupConfig,
        fetch: FetchPolicy,
    ) -> Pipeline {
        Pipeline {
            store,
            rules,
            dedup,
            fetch,
            write_gate: Mutex::new(()),
        }
    }

    pub fn store(&self) -> &Arc<Store> {
        &self.store
    }

    pub fn rules(&self) -> &Arc<RuleSet> {
        &self.rules
    }

    /// One full pass over a source's pages. Source-level trouble (network,
    /// HTTP status, decode, page layout) lands in the summary's error
    /// field; only a storage failure aborts, because an unacknowledged
    /// append must stop the world for this source.
    pub fn run_once(
        &self,
        source: &SourceDescriptor,
        clock: &dyn Clock,
    ) -> Result<IngestSummary, StorageError> {
        let started_at = clock.now();
        let mut summary = IngestSummary {
            source_id: source.id.clone(),
            started_at,
            finished_at: started_at,
            entries_seen: 0,
            entries_after_watermark: 0,
            duplicates_skipped: 0,
            malformed_skipped: 0,
            records_appended: 0,
            error: None,
        };
        let watermark = self.store.watermark(&source.id)?;
        'pages: for url in &source.page_urls {
            let document = match fetch_page(url, &self.fetch) {
                Ok(d) => d,
                Err(e) => {
                    summary.error = Some(e.to_string());
                    break 'pages;
                }
            };
            let parsed = match parse_listing(source.adapter_kind, &document, &source.id) {
                Ok(p) => p,
                Err(e) => {
                    summary.error = Some(e.to_string());
                    break 'pages;
                }
            };
            summary.entries_seen += parsed.entries.len() + parsed.malformed_skipped;
            // Malformed rows have no usable date, so they cannot be
            // compared against the watermark; they flow to this stage and
            // are skipped here.
            summary.entries_after_watermark += parsed.malformed_skipped;
            summary.malformed_skipped += parsed.malformed_skipped;
            let fresh = entries_after(parsed.entries, watermark);
            summary.entries_after_watermark += fresh.len();
            for entry in fresh {
                if entry.observed_at > clock.now() + Duration::hours(24) {
                    summary.malformed_skipped += 1;
                    continue;
                }
                let class = self.rules.classify(&entry.title).class;
                let _gate = self.write_gate.lock().expect("write gate");
                let verdict =
                    check_duplicate(&entry.title, class, &*self.store, self.dedup, clock.now())?;
                if verdict.is_duplicate() {
                    summary.duplicates_skipped += 1;
                    continue;
                }
                self.store.append(NewRecord {
                    class,
                    title: entry.title,
                    discoverer: entry.discoverer,
                    observed_at: entry.observed_at,
                    source_id: entry.source_id,
                    detail_url: entry.detail_url,
                    ingested_at: clock.now(),
                })?;
                summary.records_appended += 1;
            }
        }
        summary.finished_at = clock.now();
        tracing::info!(
            source_id = %summary.source_id,
            entries_seen = summary.entries_seen,
            entries_after_watermark = summary.entries_after_watermark,
            duplicates_skipped = summary.duplicates_skipped,
            malformed_skipped = summary.malformed_skipped,
            records_appended = summary.records_appended,
            error = summary.error.as_deref().unwrap_or(""),
            "run_once finished"
        );
        Ok(summary)
    }
}

/// Backoff delay after `failures` consecutive failed runs, in seconds.
/// Doubles from the poll interval and never exceeds 15 minutes.
pub fn backoff_delay_seconds(poll_interval: u64, failures: u32) -> u64 {
    const CAP: u64 = 900;
    if failures == 0 {
        return poll_interval;
    }
    let factor = 1u64 << (failures - 1).min(20);
    poll_interval.saturating_mul(factor).min(CAP)
}

struct StatusCell {
    state: SourceState,
    started_at: Option<DateTime<Utc>>,
    stopped_at: Option<DateTime<Utc>>,
    consecutive_failures: u32,
    last_success_at: Option<DateTime<Utc>>,
    last_error: Option<String>,
    total_records_ingested: u64,
}

impl StatusCell {
    fn new() -> StatusCell {
        StatusCell {
            state: SourceState::Stopped,
            started_at: None,
            stopped_at: None,
            consecutive_failures: 0,
            last_success_at: None,
            last_error: None,
            total_records_ingested: 0,
        }
    }
}

struct StatusBoard {
    cells: Mutex<BTreeMap<String, StatusCell>>,
}

impl StatusBoard {
    fn snapshot(&self, now: DateTime<Utc>) -> Vec<SourceStatus> {
        let cells = self.cells.lock().expect("status board");
        cells
            .iter()
            .map(|(id, cell)| {
                let uptime_seconds = match cell.started_at {
                    None => 0,
                    Some(start) => {
                        let end = cell.stopped_at.unwrap_or(now);
                        (end - start).num_seconds().max(0) as u64
                    }
                };
                SourceStatus {
                    source_id: id.clone(),
                    state: cell.state,
                    started_at: cell.started_at,
                    uptime_seconds,
                    consecutive_failures: cell.consecutive_failures,
                    last_success_at: cell.last_success_at,
                    last_error: cell.last_error.clone(),
                    total_records_ingested: cell.total_records_ingested,
                }
            })
            .collect()
    }

    fn with<R>(&self, id: &str, f: impl FnOnce(&mut StatusCell) -> R) -> R {
        let mut cells = self.cells.lock().expect("status board");
        f(cells.get_mut(id).expect("known source"))
    }
}

type Observer = Arc<dyn Fn(&IngestSummary) + Send + Sync>;

/// Long-running poller collection: one thread per enabled source, each
/// cycling run_once with its own interval and exponential backoff.
pub struct Daemon {
    pipeline: Arc<Pipeline>,
    sources: Vec<SourceDescriptor>,
    clock: Arc<dyn Clock>,
    shutdown: Arc<AtomicBool>,
    board: Arc<StatusBoard>,
    observer: Option<Observer>,
    handles: Vec<JoinHandle<()>>,
}

impl Daemon {
    pub fn new(
        pipeline: Arc<Pipeline>,
        sources: Vec<SourceDescriptor>,
        clock: Arc<dyn Clock>,
    ) -> Daemon {
        let cells = sources
            .iter()
            .map(|s| (s.id.clone(), StatusCell::new()))
            .collect();
        Daemon {
            pipeline,
            sources,
            clock,
            shutdown: Arc::new(AtomicBool::new(false)),
            board: Arc::new(StatusBoard {
                cells: Mutex::new(cells),
            }),
            observer: None,
            handles: Vec::new(),
        }
    }

    /// Installs a callback invoked after every completed run_once,
    /// including failed ones. Call before start.
    pub fn observe(&mut self, f: impl Fn(&IngestSummary) + Send + Sync + 'static) {
        self.observer = Some(Arc::new(f));
    }

    /// The flag that stops all pollers when set; share it with a signal
    /// handler.
    pub fn shutdown_flag(&self) -> Arc<AtomicBool> {
        Arc::clone(&self.shutdown)
    }

    /// One status row per configured source, disabled ones included.
    pub fn status(&self) -> Vec<SourceStatus> {
        self.board.snapshot(self.clock.now())
    }

    /// Spawns the pollers. Disabled sources stay in Stopped state.
    pub fn start(&mut self) {
        for source in self.sources.iter().filter(|s| s.enabled).cloned() {
            let pipeline = Arc::clone(&self.pipeline);
            let clock = Arc::clone(&self.clock);
            let shutdown = Arc::clone(&self.shutdown);
            let board = Arc::clone(&self.board);
            let observer = self.observer.clone();
            self.handles.push(std::thread::spawn(move || {
                poll_loop(&source, &pipeline, &*clock, &shutdown, &board, observer.as_ref());
            }));
        }
    }

    /// Blocks until every poller has exited (after the shutdown flag is
    /// set by us or by a signal handler).
    pub fn join(&mut self) {
        for handle in self.handles.drain(..) {
            let _ = handle.join();
        }
    }

    pub fn request_shutdown(&self) {
        self.shutdown.store(true, Ordering::SeqCst);
    }
}

fn poll_loop(
    source: &SourceDescriptor,
    pipeline: &Pipeline,
    clock: &dyn Clock,
    shutdown: &AtomicBool,
    board: &StatusBoard,
    observer: Option<&Observer>,
) {
    board.with(&source.id, |cell| {
        cell.state = SourceState::Running;
        cell.started_at = Some(clock.now());
        cell.stopped_at = None;
    });
    let mut failures: u32 = 0;
    while !shutdown.load(Ordering::SeqCst) {
        match pipeline.run_once(source, clock) {
            Ok(summary) => {
                if let Some(obs) = observer {
                    obs(&summary);
                }
                if let Some(err) = &summary.error {
                    failures += 1;
                    board.with(&source.id, |cell| {
                        cell.state = SourceState::BackingOff;
                        cell.consecutive_failures = failures;
                        cell.last_error = Some(err.clone());
                    });
                } else {
                    failures = 0;
                    board.with(&source.id, |cell| {
                        cell.state = SourceState::Running;
                        cell.consecutive_failures = 0;
                        cell.last_success_at = Some(summary.finished_at);
                        cell.total_records_ingested += summary.records_appended as u64;
                    });
                }
            }
            Err(storage_err) => {
                // Durability is gone; retrying could acknowledge entries
                // the store never kept. Stop this source.
                tracing::error!(source_id = %source.id, error = %storage_err, "storage failure, poller stopping");
                board.with(&source.id, |cell| {
                    cell.last_error = Some(storage_err.to_string());
                });
                break;
            }
        }
        let delay = backoff_delay_seconds(source.poll_interval_seconds, failures);
        sleep_with_shutdown(clock, shutdown, delay);
    }
    board.with(&source.id, |cell| {
        cell.state = SourceState::Stopped;
        cell.stopped_at = Some(clock.now());
    });
}

/// Sleeps `seconds` in 1 s slices so a shutdown request interrupts the
/// wait quickly (and a fake clock advances deterministically).
fn sleep_with_shutdown(clock: &dyn Clock, shutdown: &AtomicBool, seconds: u64) {
    for _ in 0..seconds {
        if shutdown.load(Ordering::SeqCst) {
            return;
        }
        clock.sleep(std::time::Duration::from_secs(1));
    }
}
