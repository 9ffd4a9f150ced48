//! Append-only record store: one JSON object per line, in-memory index
//! built at open, fsync on every append.
//!
//! The wire format is rigid. Each line carries exactly the keys
//! `id`, `class`, `title`, `discoverer`, `observed_at`, `source_id`,
//! `detail_url`, `ingested_at` in that order; unknown keys are rejected
//! at load. `observed_at` is minute precision, `ingested_at` second
//! precision, both UTC.

use std::fs::{File, OpenOptions};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::RwLock;

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};

use crate::calendar::{
    self, format_ingested_at, format_observed_at, parse_ingested_at, parse_observed_at, Month,
};
use crate::taxonomy::VulnClass;

/// One persisted vulnerability listing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VulnRecord {
    pub id: u64,
    pub class: VulnClass,
    pub title: String,
    pub discoverer: String,
    pub observed_at: DateTime<Utc>,
    pub source_id: String,
    pub detail_url: String,
    pub ingested_at: DateTime<Utc>,
}

/// A record as handed to [`Store::append`]; the store assigns the id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NewRecord {
    pub class: VulnClass,
    pub title: String,
    pub discoverer: String,
    pub observed_at: DateTime<Utc>,
    pub source_id: String,
    pub detail_url: String,
    pub ingested_at: DateTime<Utc>,
}

#[derive(Debug, thiserror::Error)]
pub enum StorageError {
    #[error("store I/O failed: {0}")]
    Io(#[from] std::io::Error),
    #[error("store file corrupt at line {line}: {message}")]
    Corrupt { line: usize, message: String },
    #[error("invalid record: {0}")]
    InvalidRecord(String),
}

/// Exact line schema. Field order here is the serialized key order.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StoredLine {
    id: u64,
    class: VulnClass,
    title: String,
    discoverer: String,
    observed_at: String,
    source_id: String,
    detail_url: String,
    ingested_at: String,
}

impl StoredLine {
    fn from_record(r: &VulnRecord) -> StoredLine {
        StoredLine {
            id: r.id,
            class: r.class,
            title: r.title.clone(),
            discoverer: r.discoverer.clone(),
            observed_at: format_observed_at(r.observed_at),
            source_id: r.source_id.clone(),
            detail_url: r.detail_url.clone(),
            ingested_at: format_ingested_at(r.ingested_at),
        }
    }

    fn into_record(self) -> Result<VulnRecord, String> {
        let observed_at =
            parse_observed_at(&self.observed_at).map_err(|e| format!("observed_at: {e}"))?;
        let ingested_at =
            parse_ingested_at(&self.ingested_at).map_err(|e| format!("ingested_at: {e}"))?;
        Ok(VulnRecord {
            id: self.id,
            class: self.class,
            title: self.title,
            discoverer: self.discoverer,
            observed_at,
            source_id: self.source_id,
            detail_url: self.detail_url,
            ingested_at,
        })
    }
}

struct Inner {
    records: Vec<VulnRecord>,
    file: File,
}

/// Append-only store with single-writer, many-reader snapshot semantics.
pub struct Store {
    path: PathBuf,
    inner: RwLock<Inner>,
}

impl Store {
    /// Opens (creating if absent) the store file and builds the index.
    pub fn open(path: impl AsRef<Path>) -> Result<Store, StorageError> {
        let path = path.as_ref().to_path_buf();
        let mut file = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(&path)?;
        let mut text = String::new();
        file.read_to_string(&mut text)?;
        let mut records: Vec<VulnRecord> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            if raw.is_empty() {
                continue;
            }
            let parsed: StoredLine =
                serde_json::from_str(raw).map_err(|e| StorageError::Corrupt {
                    line,
                    message: e.to_string(),
                })?;
            let record = parsed
                .into_record()
                .map_err(|message| StorageError::Corrupt { line, message })?;
            if let Err(message) = validate(&record.title, record.observed_at, record.ingested_at) {
                return Err(StorageError::Corrupt { line, message });
            }
            if let Some(last) = records.last() {
                if record.id <= last.id {
                    return Err(StorageError::Corrupt {
                        line,
                        message: format!("id {} not greater than previous {}", record.id, last.id),
                    });
                }
            }
            records.push(record);
        }
        Ok(Store {
            path,
            inner: RwLock::new(Inner { records, file }),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Durably appends one record and returns the assigned id, strictly
    /// greater than every prior id.
    pub fn append(&self, new: NewRecord) -> Result<u64, StorageError> {
        let observed_at = calendar::truncate_to_minute(new.observed_at);
        let ingested_at = calendar::truncate_to_second(new.ingested_at);
        validate(&new.title, observed_at, ingested_at).map_err(StorageError::InvalidRecord)?;
        let mut inner = self.inner.write().expect("store lock");
        let id = inner.records.last().map_or(1, |r| r.id + 1);
        let record = VulnRecord {
            id,
            class: new.class,
            title: new.title,
            discoverer: new.discoverer,
            observed_at,
            source_id: new.source_id,
            detail_url: new.detail_url,
            ingested_at,
        };
        let mut line = serde_json::to_string(&StoredLine::from_record(&record))
            .expect("record serializes");
        line.push('\n');
        inner.file.write_all(line.as_bytes())?;
        inner.file.sync_data()?;
        inner.records.push(record);
        Ok(id)
    }

    pub fn len(&self) -> usize {
        self.inner.read().expect("store lock").records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All records, in id order.
    pub fn snapshot(&self) -> Vec<VulnRecord> {
        self.inner.read().expect("store lock").records.clone()
    }

    /// Records of `class` with `from <= observed_at <= to`, ordered by
    /// observed_at ascending (ties by id).
    pub fn query_by_class_and_range(
        &self,
        class: VulnClass,
        from: DateTime<Utc>,
        to: DateTime<Utc>,
    ) -> Result<Vec<VulnRecord>, StorageError> {
        let inner = self.inner.read().expect("store lock");
        let mut out: Vec<VulnRecord> = inner
            .records
            .iter()
            .filter(|r| r.class == class && r.observed_at >= from && r.observed_at <= to)
            .cloned()
            .collect();
        out.sort_by(|a, b| a.observed_at.cmp(&b.observed_at).then(a.id.cmp(&b.id)));
        Ok(out)
    }

    /// Up to `n` most recent records of `class`, newest first. Recency is
    /// observed_at with id as the tie-break.
    pub fn last_n_by_class(&self, class: VulnClass, n: usize) -> Result<Vec<VulnRecord>, StorageError> {
        let inner = self.inner.read().expect("store lock");
        let mut matching: Vec<VulnRecord> = inner
            .records
            .iter()
            .filter(|r| r.class == class)
            .cloned()
            .collect();
        matching.sort_by(|a, b| b.observed_at.cmp(&a.observed_at).then(b.id.cmp(&a.id)));
        matching.truncate(n);
        Ok(matching)
    }

    /// Latest observed_at among records of the source, absent when the
    /// source has no records yet.
    pub fn watermark(&self, source_id: &str) -> Result<Option<DateTime<Utc>>, StorageError> {
        let inner = self.inner.read().expect("store lock");
        Ok(inner
            .records
            .iter()
            .filter(|r| r.source_id == source_id)
            .map(|r| r.observed_at)
            .max())
    }

    /// Dense per-day, per-class counts for one calendar month. Index 0 is
    /// day 1; every day of the month is present.
    pub fn counts_by_day(&self, month: Month) -> Result<Vec<[u64; VulnClass::COUNT]>, StorageError> {
        let inner = self.inner.read().expect("store lock");
        Ok(bucket_by_day(&inner.records, month))
    }
}

fn validate(
    title: &str,
    observed_at: DateTime<Utc>,
    ingested_at: DateTime<Utc>,
) -> Result<(), String> {
    if title.is_empty() {
        return Err("title must be non-empty".to_string());
    }
    if observed_at > ingested_at + Duration::hours(24) {
        return Err(format!(
            "observed_at {} is more than 24h after ingested_at {}",
            format_observed_at(observed_at),
            format_ingested_at(ingested_at)
        ));
    }
    Ok(())
}

/// Below this record count the rayon fold/reduce costs more than it saves.
#[cfg(feature = "parallel")]
pub(crate) const BUCKET_PAR_MIN: usize = 4096;

/// Buckets records into per-day class counts for the month.
pub fn bucket_by_day(records: &[VulnRecord], month: Month) -> Vec<[u64; VulnClass::COUNT]> {
    #[cfg(feature = "parallel")]
    if records.len() >= BUCKET_PAR_MIN {
        return bucket_by_day_par(records, month);
    }
    bucket_by_day_seq(records, month)
}

pub fn bucket_by_day_seq(records: &[VulnRecord], month: Month) -> Vec<[u64; VulnClass::COUNT]> {
    use chrono::Datelike;
    let mut days = vec![[0u64; VulnClass::COUNT]; month.day_count() as usize];
    for r in records {
        if month.contains(r.observed_at) {
            let day = r.observed_at.day() as usize;
            days[day - 1][r.class.index()] += 1;
        }
    }
    days
}

#[cfg(feature = "parallel")]
pub fn bucket_by_day_par(records: &[VulnRecord], month: Month) -> Vec<[u64; VulnClass::COUNT]> {
    use chrono::Datelike;
    use rayon::prelude::*;
    let day_count = month.day_count() as usize;
    records
        .par_iter()
        .fold(
            || vec![[0u64; VulnClass::COUNT]; day_count],
            |mut days, r| {
                if month.contains(r.observed_at) {
                    let day = r.observed_at.day() as usize;
                    days[day - 1][r.class.index()] += 1;
                }
                days
            },
        )
        .reduce(
            || vec![[0u64; VulnClass::COUNT]; day_count],
            |mut a, b| {
                for (da, db) in a.iter_mut().zip(b.iter()) {
                    for (ca, cb) in da.iter_mut().zip(db.iter()) {
                        *ca += cb;
                    }
                }
                a
            },
        )
}
