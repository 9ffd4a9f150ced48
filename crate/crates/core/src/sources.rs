//! Listing sources: HTTP/file fetching plus per-source page adapters.
//!
//! Three adapter kinds exist, one per site family the pipeline watches.
//! Each has a fixed page contract (see the selectors below); adapters
//! extract entries in page order and skip malformed ones rather than
//! failing, so one broken row never blocks a feed.

use chrono::{DateTime, NaiveDateTime, Utc};
use scraper::{Html, Selector};
use serde::{Deserialize, Serialize};

use crate::calendar::truncate_to_minute;

/// How a source's pages are interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AdapterKind {
    MarketListing,
    ArchiveListing,
    Microblog,
}

impl AdapterKind {
    pub fn name(self) -> &'static str {
        match self {
            AdapterKind::MarketListing => "market-listing",
            AdapterKind::ArchiveListing => "archive-listing",
            AdapterKind::Microblog => "microblog",
        }
    }
}

impl std::fmt::Display for AdapterKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for AdapterKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "market-listing" => Ok(AdapterKind::MarketListing),
            "archive-listing" => Ok(AdapterKind::ArchiveListing),
            "microblog" => Ok(AdapterKind::Microblog),
            other => Err(format!("unknown adapter kind {other:?}")),
        }
    }
}

/// One configured source. `page_urls` lists the listing pages to fetch,
/// relative to nothing: each is a complete http/https/file URL.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceDescriptor {
    pub id: String,
    pub display_name: String,
    pub adapter_kind: AdapterKind,
    pub page_urls: Vec<String>,
    pub poll_interval_seconds: u64,
    pub enabled: bool,
}

/// An entry as parsed off a listing page, before classification.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawEntry {
    pub source_id: String,
    pub title: String,
    pub discoverer: String,
    pub observed_at: DateTime<Utc>,
    pub detail_url: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FetchPolicy {
    pub timeout_seconds: u64,
    pub max_retries: u32,
    pub user_agent: String,
    pub min_delay_between_requests_seconds: u64,
}

impl Default for FetchPolicy {
    fn default() -> FetchPolicy {
        FetchPolicy {
            timeout_seconds: 10,
            max_retries: 2,
            user_agent: "vulntrend/0.1".to_string(),
            min_delay_between_requests_seconds: 0,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SourceError {
    #[error("network error fetching {url}: {message}")]
    Network { url: String, message: String },
    #[error("HTTP status {status} from {url}")]
    HttpStatus { url: String, status: u16 },
    #[error("response from {url} is not valid UTF-8")]
    Decode { url: String },
    #[error("unsupported URL scheme in {url}")]
    Scheme { url: String },
    #[error("no recognizable entries in {source_id} page (wrong adapter or changed layout?)")]
    Parse { source_id: String },
}

/// Fetches one page as text. `file:` URLs read a local snapshot in one
/// attempt; http/https send a GET with the configured user-agent, follow
/// up to 5 redirects, and retry only transport failures, never HTTP
/// error statuses, for max_retries + 1 attempts total.
pub fn fetch_page(url: &str, policy: &FetchPolicy) -> Result<String, SourceError> {
    if let Some(rest) = url.strip_prefix("file:") {
        let path = rest.strip_prefix("//").unwrap_or(rest);
        let bytes = std::fs::read(path).map_err(|e| SourceError::Network {
            url: url.to_string(),
            message: e.to_string(),
        })?;
        return String::from_utf8(bytes).map_err(|_| SourceError::Decode {
            url: url.to_string(),
        });
    }
    if !(url.starts_with("http://") || url.starts_with("https://")) {
        return Err(SourceError::Scheme {
            url: url.to_string(),
        });
    }
    let client = reqwest::blocking::Client::builder()
        .user_agent(policy.user_agent.clone())
        .timeout(std::time::Duration::from_secs(policy.timeout_seconds))
        .redirect(reqwest::redirect::Policy::limited(5))
        .build()
        .map_err(|e| SourceError::Network {
            url: url.to_string(),
            message: e.to_string(),
        })?;
    let mut last_error = String::new();
    for attempt in 0..=policy.max_retries {
        if attempt > 0 && policy.min_delay_between_requests_seconds > 0 {
            std::thread::sleep(std::time::Duration::from_secs(
                policy.min_delay_between_requests_seconds,
            ));
        }
        match client.get(url).send() {
            Ok(response) => {
                let status = response.status();
                if !status.is_success() {
                    return Err(SourceError::HttpStatus {
                        url: url.to_string(),
                        status: status.as_u16(),
                    });
                }
                let bytes = match response.bytes() {
                    Ok(b) => b,
                    Err(e) => {
                        last_error = e.to_string();
                        continue;
                    }
                };
                return String::from_utf8(bytes.to_vec()).map_err(|_| SourceError::Decode {
                    url: url.to_string(),
                });
            }
            Err(e) => last_error = e.to_string(),
        }
    }
    Err(SourceError::Network {
        url: url.to_string(),
        message: last_error,
    })
}

/// parse_listing output: page-order entries plus how many rows were
/// dropped for a missing or unparseable date or an empty title.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedListing {
    pub entries: Vec<RawEntry>,
    pub malformed_skipped: usize,
}

/// Extracts entries from one listing page. Fails only when the page has
/// zero recognizable entry containers for the adapter kind.
pub fn parse_listing(
    kind: AdapterKind,
    document: &str,
    source_id: &str,
) -> Result<ParsedListing, SourceError> {
    let doc = Html::parse_document(document);
    match kind {
        AdapterKind::MarketListing | AdapterKind::ArchiveListing => {
            parse_entry_divs(&doc, source_id)
        }
        AdapterKind::Microblog => parse_articles(&doc, source_id),
    }
}

fn select_text(el: scraper::ElementRef<'_>, selector: &Selector) -> Option<String> {
    el.select(selector)
        .next()
        .map(|n| n.text().collect::<String>().trim().to_string())
}

/// Market and archive pages share one row shape:
/// `<div class="entry"><span class="date">YYYY-MM-DD HH:MM</span>
///  <a class="title" href="...">TITLE</a><span class="author">NAME</span></div>`
fn parse_entry_divs(doc: &Html, source_id: &str) -> Result<ParsedListing, SourceError> {
    let container = Selector::parse("div.entry").expect("static selector");
    let date_sel = Selector::parse("span.date").expect("static selector");
    let title_sel = Selector::parse("a.title").expect("static selector");
    let author_sel = Selector::parse("span.author").expect("static selector");

    let mut entries = Vec::new();
    let mut malformed = 0usize;
    let mut containers = 0usize;
    for entry in doc.select(&container) {
        containers += 1;
        let date_text = select_text(entry, &date_sel);
        let observed_at = date_text
            .as_deref()
            .and_then(|s| NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M").ok())
            .map(|ndt| ndt.and_utc());
        let title_el = entry.select(&title_sel).next();
        let title = title_el
            .map(|n| n.text().collect::<String>().trim().to_string())
            .unwrap_or_default();
        let (Some(observed_at), false) = (observed_at, title.is_empty()) else {
            malformed += 1;
            continue;
        };
        let detail_url = title_el
            .and_then(|n| n.value().attr("href"))
            .unwrap_or("")
            .to_string();
        let discoverer = select_text(entry, &author_sel).unwrap_or_default();
        entries.push(RawEntry {
            source_id: source_id.to_string(),
            title,
            discoverer,
            observed_at,
            detail_url,
        });
    }
    if containers == 0 {
        return Err(SourceError::Parse {
            source_id: source_id.to_string(),
        });
    }
    Ok(ParsedListing {
        entries,
        malformed_skipped: malformed,
    })
}

/// Microblog pages:
/// `<article><time datetime="YYYY-MM-DDTHH:MM:SSZ"></time>
///  <span class="handle">NAME</span><p class="text">TITLE</p></article>`
/// Posts have no detail page, so detail_url stays empty; seconds are
/// dropped to match record precision.
fn parse_articles(doc: &Html, source_id: &str) -> Result<ParsedListing, SourceError> {
    let container = Selector::parse("article").expect("static selector");
    let time_sel = Selector::parse("time").expect("static selector");
    let handle_sel = Selector::parse("span.handle").expect("static selector");
    let text_sel = Selector::parse("p.text").expect("static selector");

    let mut entries = Vec::new();
    let mut malformed = 0usize;
    let mut containers = 0usize;
    for entry in doc.select(&container) {
        containers += 1;
        let observed_at = entry
            .select(&time_sel)
            .next()
            .and_then(|t| t.value().attr("datetime"))
            .and_then(|s| NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%SZ").ok())
            .map(|ndt| truncate_to_minute(ndt.and_utc()));
        let title = select_text(entry, &text_sel).unwrap_or_default();
        let (Some(observed_at), false) = (observed_at, title.is_empty()) else {
            malformed += 1;
            continue;
        };
        let discoverer = select_text(entry, &handle_sel).unwrap_or_default();
        entries.push(RawEntry {
            source_id: source_id.to_string(),
            title,
            discoverer,
            observed_at,
            detail_url: String::new(),
        });
    }
    if containers == 0 {
        return Err(SourceError::Parse {
            source_id: source_id.to_string(),
        });
    }
    Ok(ParsedListing {
        entries,
        malformed_skipped: malformed,
    })
}

/// Incremental-fetch filter: keeps entries strictly later than the
/// watermark, in their original order. No watermark means a first run,
/// which takes the whole page.
pub fn entries_after(entries: Vec<RawEntry>, watermark: Option<DateTime<Utc>>) -> Vec<RawEntry> {
    match watermark {
        None => entries,
        Some(w) => entries
            .into_iter()
            .filter(|e| e.observed_at > w)
            .collect(),
    }
}
