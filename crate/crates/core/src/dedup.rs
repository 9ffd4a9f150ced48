//! Near-duplicate suppression. A candidate is compared word by word
//! against same-class records from the trailing window (60 days by
//! default); the metric is the multiset overlap coefficient and the gate
//! is a configurable threshold (0.8 by default).

use chrono::{DateTime, Duration, Utc};

use crate::store::{StorageError, Store};
use crate::taxonomy::{tokenize, VulnClass};

/// Lowercased title tokens, sorted so intersections are a merge walk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenBag {
    tokens: Vec<String>,
}

impl TokenBag {
    pub fn from_title(title: &str) -> TokenBag {
        let mut tokens: Vec<String> = tokenize(title)
            .into_iter()
            .map(|t| t.to_lowercase())
            .collect();
        tokens.sort_unstable();
        TokenBag { tokens }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Multiset intersection size: each token counts as many times as it
    /// appears in both bags.
    pub fn intersection_size(&self, other: &TokenBag) -> usize {
        let (a, b) = (&self.tokens, &other.tokens);
        let (mut i, mut j, mut n) = (0, 0, 0);
        while i < a.len() && j < b.len() {
            match a[i].cmp(&b[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    n += 1;
                    i += 1;
                    j += 1;
                }
            }
        }
        n
    }
}

/// Overlap coefficient: |intersection| / min(|a|, |b|), 0 when either bag
/// is empty.
pub fn similarity(a: &TokenBag, b: &TokenBag) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    a.intersection_size(b) as f64 / a.len().min(b.len()) as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DedupConfig {
    pub window_days: u32,
    pub threshold: f64,
}

impl DedupConfig {
    pub fn new(window_days: u32, threshold: f64) -> Result<DedupConfig, DedupConfigError> {
        if window_days < 1 {
            return Err(DedupConfigError::WindowDays(window_days));
        }
        if !(threshold > 0.0 && threshold <= 1.0) {
            return Err(DedupConfigError::Threshold(threshold));
        }
        Ok(DedupConfig {
            window_days,
            threshold,
        })
    }
}

impl Default for DedupConfig {
    fn default() -> DedupConfig {
        DedupConfig {
            window_days: 60,
            threshold: 0.8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum DedupConfigError {
    #[error("window_days must be >= 1, got {0}")]
    WindowDays(u32),
    #[error("threshold must be in (0, 1], got {0}")]
    Threshold(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DedupVerdict {
    Unique,
    Duplicate {
        matched_record_id: u64,
        similarity: f64,
    },
}

impl DedupVerdict {
    pub fn is_duplicate(&self) -> bool {
        matches!(self, DedupVerdict::Duplicate { .. })
    }
}

/// One stored record as the dedup check sees it.
#[derive(Debug, Clone)]
pub struct HistoryEntry {
    pub id: u64,
    pub bag: TokenBag,
}

/// Supplies same-class records whose observed_at lies in [from, to].
pub trait HistoryProvider {
    fn same_class_window(
        &self,
        class: VulnClass,
        from: DateTime<Utc>,
        to: DateTime<Utc>,
    ) -> Result<Vec<HistoryEntry>, StorageError>;
}

impl HistoryProvider for Store {
    fn same_class_window(
        &self,
        class: VulnClass,
        from: DateTime<Utc>,
        to: DateTime<Utc>,
    ) -> Result<Vec<HistoryEntry>, StorageError> {
        Ok(self
            .query_by_class_and_range(class, from, to)?
            .into_iter()
            .map(|r| HistoryEntry {
                id: r.id,
                bag: TokenBag::from_title(&r.title),
            })
            .collect())
    }
}

/// Decides whether `title` duplicates any same-class record in the
/// trailing window ending at `now`. On Duplicate the verdict carries the
/// highest-similarity match, ties broken toward the smallest record id.
pub fn check_duplicate(
    title: &str,
    class: VulnClass,
    provider: &dyn HistoryProvider,
    config: DedupConfig,
    now: DateTime<Utc>,
) -> Result<DedupVerdict, StorageError> {
    let from = now - Duration::days(i64::from(config.window_days));
    let history = provider.same_class_window(class, from, now)?;
    let bag = TokenBag::from_title(title);
    let best = best_match(&bag, &history);
    Ok(match best {
        Some((id, sim)) if sim >= config.threshold => DedupVerdict::Duplicate {
            matched_record_id: id,
            similarity: sim,
        },
        _ => DedupVerdict::Unique,
    })
}

/// Below this history size the rayon scan costs more than it saves.
#[cfg(feature = "parallel")]
pub(crate) const DEDUP_PAR_MIN: usize = 64;

/// Highest-similarity entry, ties toward the smallest id.
pub fn best_match(bag: &TokenBag, history: &[HistoryEntry]) -> Option<(u64, f64)> {
    #[cfg(feature = "parallel")]
    if history.len() >= DEDUP_PAR_MIN {
        return best_match_par(bag, history);
    }
    best_match_seq(bag, history)
}

pub fn best_match_seq(bag: &TokenBag, history: &[HistoryEntry]) -> Option<(u64, f64)> {
    history
        .iter()
        .map(|h| (h.id, similarity(bag, &h.bag)))
        .max_by(|x, y| x.1.total_cmp(&y.1).then(y.0.cmp(&x.0)))
}

#[cfg(feature = "parallel")]
pub fn best_match_par(bag: &TokenBag, history: &[HistoryEntry]) -> Option<(u64, f64)> {
    use rayon::prelude::*;
    history
        .par_iter()
        .map(|h| (h.id, similarity(bag, &h.bag)))
        .max_by(|x, y| x.1.total_cmp(&y.1).then(y.0.cmp(&x.0)))
}
