//! Fixture pages and the bundled 2018 demo corpus.
//!
//! The corpus is engineered, not sampled: per-month class counts are
//! chosen so the monthly top-3 percentages land on fixed values, titles
//! are built from rotating brand/component vocabularies so that no two
//! same-class titles anywhere in the corpus reach the dedup threshold,
//! and February carries a hand-placed Injection spike (10 on the 14th,
//! 20 on the 15th) for peak detection.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};

use crate::calendar::Month;
use crate::sources::{AdapterKind, RawEntry};
use crate::store::{NewRecord, StorageError, Store};
use crate::taxonomy::VulnClass;

const BRANDS: [&str; 12] = [
    "Acme", "Bolt", "Cinder", "Dyno", "Ember", "Flux", "Gantry", "Helix", "Ion", "Jasper",
    "Krait", "Lumen",
];

const COMPONENTS: [&str; 15] = [
    "Router", "Camera", "Gateway", "Sensor", "Firmware", "Dashboard", "Plugin", "Module",
    "Portal", "Recorder", "Console", "Agent", "Scanner", "Controller", "Bridge",
];

const HANDLES: [&str; 8] = [
    "gr4yfox", "zero_cool", "d4rkm4tter", "n1ghtmare", "acid_burn", "crash0verride", "ph4ntom",
    "blackhat_sam",
];

/// Title phrase that pins a class under the built-in rulebook. The Other
/// phrase deliberately matches nothing.
fn phrase(class: VulnClass) -> &'static str {
    match class {
        VulnClass::Injection => "SQL Injection",
        VulnClass::BrokenAuthentication => "Broken Authentication",
        VulnClass::CrossSiteRequestForgery => "Cross-Site Request Forgery",
        VulnClass::ServerSideRequestForgery => "Server-Side Request Forgery",
        VulnClass::CrossSiteScripting => "Cross-Site Scripting",
        VulnClass::RemoteCodeExecution => "Remote Code Execution",
        VulnClass::RemoteCommandExecution => "Remote Command Execution",
        VulnClass::DenialOfService => "Denial of Service",
        VulnClass::BufferOverflow => "Buffer Overflow",
        VulnClass::PrivilegeEscalation => "Privilege Escalation",
        VulnClass::ArbitraryFileManipulation => "Arbitrary File Upload",
        VulnClass::DirectoryTraversal => "Directory Traversal",
        VulnClass::Other => "Arbitrary Code Execution",
    }
}

/// Per-month class counts, classes in canonical-name order. Totals of 150
/// (Jan, Jun) and 100 (the rest) make the top-3 integer percentages come
/// out to 28/11/11, 36/16/9, 20/13/13, 24/15/13, 24/22/16, 24/15/15,
/// 21/14/13 and 30/14/11. Jan and Jun use distinct counts behind equal
/// displayed percentages so the ranking stays count-driven.
const PLAN: [(u32, [u64; VulnClass::COUNT]); 8] = [
    (1, [8, 8, 8, 8, 8, 7, 42, 7, 7, 16, 7, 7, 17]),
    (2, [4, 4, 4, 4, 4, 4, 36, 4, 4, 9, 4, 3, 16]),
    (3, [6, 6, 6, 6, 5, 5, 13, 5, 20, 5, 5, 5, 13]),
    (4, [5, 5, 13, 5, 5, 5, 5, 5, 5, 15, 4, 4, 24]),
    (5, [4, 4, 4, 16, 4, 4, 24, 4, 4, 4, 3, 3, 22]),
    (6, [7, 7, 22, 23, 7, 7, 36, 7, 7, 7, 7, 7, 6]),
    (7, [6, 6, 5, 5, 21, 5, 14, 5, 5, 5, 5, 5, 13]),
    (8, [5, 5, 11, 5, 30, 5, 5, 4, 4, 4, 4, 4, 14]),
];

pub const CORPUS_YEAR: i32 = 2018;

/// The store timestamp used when the corpus is seeded directly rather
/// than ingested through the pipeline.
pub fn corpus_ingested_at() -> DateTime<Utc> {
    "2018-09-01T00:00:00Z".parse().expect("valid timestamp")
}

fn name_position(class: VulnClass) -> usize {
    VulnClass::all_by_name()
        .iter()
        .position(|c| *c == class)
        .expect("member")
}

/// Planned record count for (month, class); zero outside Jan-Aug 2018.
pub fn expected_count(month: Month, class: VulnClass) -> u64 {
    if month.year() != CORPUS_YEAR {
        return 0;
    }
    PLAN.iter()
        .find(|(m, _)| *m == month.month())
        .map_or(0, |(_, counts)| counts[name_position(class)])
}

/// Evenly spreads `count` over the days of a month: day d of n gets
/// count/n, plus one for the first count%n days.
fn spread(count: u64, days: u32) -> Vec<u64> {
    let base = count / u64::from(days);
    let rem = count % u64::from(days);
    (1..=u64::from(days))
        .map(|d| base + u64::from(d <= rem))
        .collect()
}

/// February Injection is the one hand-shaped series: a quiet baseline,
/// then 10 on the 14th and 20 on the 15th.
fn february_injection(day: u32) -> u64 {
    match day {
        3 | 6 | 9 | 12 | 21 | 25 => 1,
        14 => 10,
        15 => 20,
        _ => 0,
    }
}

/// One corpus record: the raw entry as it appears on its source page,
/// plus the class its title is engineered to classify as.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusRecord {
    pub class: VulnClass,
    pub kind: AdapterKind,
    pub entry: RawEntry,
}

fn source_for(seq: u64) -> (&'static str, AdapterKind) {
    match seq % 3 {
        1 => ("market", AdapterKind::MarketListing),
        2 => ("archive", AdapterKind::ArchiveListing),
        _ => ("microblog", AdapterKind::Microblog),
    }
}

/// The full January through August 2018 corpus, 900 records, in
/// chronological generation order. Deterministic.
pub fn corpus_2018() -> Vec<CorpusRecord> {
    let by_name = VulnClass::all_by_name();
    let mut per_class_counter: BTreeMap<&'static str, u64> = BTreeMap::new();
    let mut records = Vec::new();
    let mut seq: u64 = 0;
    for (month_no, counts) in PLAN {
        let month = Month::new(CORPUS_YEAR, month_no).expect("valid month");
        let day_count = month.day_count();
        // Per-class daily quotas for this month.
        let daily: Vec<Vec<u64>> = by_name
            .iter()
            .zip(counts.iter())
            .map(|(class, count)| {
                if month_no == 2 && *class == VulnClass::Injection {
                    (1..=day_count).map(february_injection).collect()
                } else {
                    spread(*count, day_count)
                }
            })
            .collect();
        for day in 1..=day_count {
            for (pos, class) in by_name.iter().enumerate() {
                for _ in 0..daily[pos][(day - 1) as usize] {
                    seq += 1;
                    let c = per_class_counter.entry(class.canonical_name()).or_insert(0);
                    let brand = BRANDS[(*c % BRANDS.len() as u64) as usize];
                    let component =
                        COMPONENTS[((*c / BRANDS.len() as u64) % COMPONENTS.len() as u64) as usize];
                    *c += 1;
                    let (source_id, kind) = source_for(seq);
                    let hour = 8 + (seq * 5) % 12;
                    let minute = (seq * 17) % 60;
                    let observed_at = month
                        .date(day)
                        .expect("day in month")
                        .and_hms_opt(hour as u32, minute as u32, 0)
                        .expect("valid time")
                        .and_utc();
                    let detail_url = match kind {
                        AdapterKind::MarketListing => {
                            format!("https://market.test/listing/{seq}")
                        }
                        AdapterKind::ArchiveListing => {
                            format!("https://archive.test/entry/{seq}")
                        }
                        AdapterKind::Microblog => String::new(),
                    };
                    records.push(CorpusRecord {
                        class: *class,
                        kind,
                        entry: RawEntry {
                            source_id: source_id.to_string(),
                            title: format!("{brand} {component} v{seq} {}", phrase(*class)),
                            discoverer: HANDLES[(seq % HANDLES.len() as u64) as usize].to_string(),
                            observed_at,
                            detail_url,
                        },
                    });
                }
            }
        }
    }
    records
}

fn escape(text: &str) -> String {
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

/// Renders entries as a market/archive listing page, one entry div per
/// row, in the order given.
pub fn render_listing_page(entries: &[RawEntry]) -> String {
    let mut page = String::from("<html><body>\n");
    for e in entries {
        page.push_str(&format!(
            "<div class=\"entry\"><span class=\"date\">{}</span><a class=\"title\" href=\"{}\">{}</a><span class=\"author\">{}</span></div>\n",
            e.observed_at.format("%Y-%m-%d %H:%M"),
            escape(&e.detail_url),
            escape(&e.title),
            escape(&e.discoverer),
        ));
    }
    page.push_str("</body></html>\n");
    page
}

/// Renders entries as a microblog page, one article per post.
pub fn render_microblog_page(entries: &[RawEntry]) -> String {
    let mut page = String::from("<html><body>\n");
    for e in entries {
        page.push_str(&format!(
            "<article><time datetime=\"{}\"></time><span class=\"handle\">{}</span><p class=\"text\">{}</p></article>\n",
            e.observed_at.format("%Y-%m-%dT%H:%M:%SZ"),
            escape(&e.discoverer),
            escape(&e.title),
        ));
    }
    page.push_str("</body></html>\n");
    page
}

pub fn render_page(kind: AdapterKind, entries: &[RawEntry]) -> String {
    match kind {
        AdapterKind::MarketListing | AdapterKind::ArchiveListing => render_listing_page(entries),
        AdapterKind::Microblog => render_microblog_page(entries),
    }
}

/// Writes one listing page per source under `dir/<source_id>/page-1.html`,
/// entries newest first as a live site would show them. Returns the
/// written paths in source-id order.
pub fn write_fixture_pages(corpus: &[CorpusRecord], dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    let mut by_source: BTreeMap<String, (AdapterKind, Vec<RawEntry>)> = BTreeMap::new();
    for record in corpus {
        by_source
            .entry(record.entry.source_id.clone())
            .or_insert_with(|| (record.kind, Vec::new()))
            .1
            .push(record.entry.clone());
    }
    let mut manifest = Vec::new();
    for (source_id, (kind, mut entries)) in by_source {
        entries.sort_by(|a, b| b.observed_at.cmp(&a.observed_at));
        let source_dir = dir.join(&source_id);
        std::fs::create_dir_all(&source_dir)?;
        let path = source_dir.join("page-1.html");
        std::fs::write(&path, render_page(kind, &entries))?;
        manifest.push(path);
    }
    Ok(manifest)
}

/// Appends the corpus straight into a store, bypassing fetch and dedup.
/// Used to build golden stores without the pipeline in the loop.
pub fn seed_store(store: &Store, corpus: &[CorpusRecord]) -> Result<(), StorageError> {
    let ingested_at = corpus_ingested_at();
    for record in corpus {
        store.append(NewRecord {
            class: record.class,
            title: record.entry.title.clone(),
            discoverer: record.entry.discoverer.clone(),
            observed_at: record.entry.observed_at,
            source_id: record.entry.source_id.clone(),
            detail_url: record.entry.detail_url.clone(),
            ingested_at,
        })?;
    }
    Ok(())
}
