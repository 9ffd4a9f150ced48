//! Monthly trend analytics over the store: class breakdowns with integer
//! percentages, top-k rankings, dense daily series, and peak detection.
//! Rendering to JSON/SVG/HTML lives in [`render`].

mod render;

pub use render::{render_report, ReportError, ReportFormat, ReportOptions};

use chrono::NaiveDate;

use crate::calendar::Month;
use crate::store::{StorageError, Store};
use crate::taxonomy::VulnClass;

/// Integer percent of count/total, rounded half up. Zero when total is 0.
pub fn percent_of(count: u64, total: u64) -> u8 {
    if total == 0 {
        return 0;
    }
    ((200 * count + total) / (2 * total)) as u8
}

/// Per-class counts and integer percentages for one month. Arrays are
/// indexed by [`VulnClass::index`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MonthlyBreakdown {
    pub month: Month,
    pub total: u64,
    pub counts: [u64; VulnClass::COUNT],
    pub percents: [u8; VulnClass::COUNT],
}

impl MonthlyBreakdown {
    pub fn count(&self, class: VulnClass) -> u64 {
        self.counts[class.index()]
    }

    pub fn percent(&self, class: VulnClass) -> u8 {
        self.percents[class.index()]
    }
}

/// Dense per-day, per-class counts for one month. `days[0]` is day 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DailySeries {
    pub month: Month,
    pub days: Vec<[u64; VulnClass::COUNT]>,
}

impl DailySeries {
    /// Count for a 1-based day of the month.
    pub fn count(&self, day: u32, class: VulnClass) -> u64 {
        self.days[(day - 1) as usize][class.index()]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopEntry {
    pub class: VulnClass,
    pub count: u64,
    pub percent: u8,
}

/// The k most common classes of a month, count descending, ties broken
/// by canonical class name. Only classes that actually occurred appear.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopKTable {
    pub month: Month,
    pub k: usize,
    pub entries: Vec<TopEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Peak {
    pub date: NaiveDate,
    pub class: VulnClass,
    pub count: u64,
    pub trailing_mean: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeakConfig {
    pub factor: f64,
    pub min_count: u64,
    pub trailing_window_days: u32,
}

impl Default for PeakConfig {
    fn default() -> PeakConfig {
        PeakConfig {
            factor: 3.0,
            min_count: 5,
            trailing_window_days: 7,
        }
    }
}

impl PeakConfig {
    pub fn new(factor: f64, min_count: u64, trailing_window_days: u32) -> Option<PeakConfig> {
        (factor > 1.0 && min_count >= 1 && trailing_window_days >= 1).then_some(PeakConfig {
            factor,
            min_count,
            trailing_window_days,
        })
    }
}

/// Dense daily counts for the month, straight off the store snapshot.
pub fn daily_series(store: &Store, month: Month) -> Result<DailySeries, StorageError> {
    Ok(DailySeries {
        month,
        days: store.counts_by_day(month)?,
    })
}

/// Collapses a daily series into monthly totals and percentages, so both
/// views always describe the same snapshot.
pub fn breakdown_of(series: &DailySeries) -> MonthlyBreakdown {
    let mut counts = [0u64; VulnClass::COUNT];
    for day in &series.days {
        for (i, n) in day.iter().enumerate() {
            counts[i] += n;
        }
    }
    let total: u64 = counts.iter().sum();
    let mut percents = [0u8; VulnClass::COUNT];
    for (i, n) in counts.iter().enumerate() {
        percents[i] = percent_of(*n, total);
    }
    MonthlyBreakdown {
        month: series.month,
        total,
        counts,
        percents,
    }
}

pub fn monthly_breakdown(store: &Store, month: Month) -> Result<MonthlyBreakdown, StorageError> {
    Ok(breakdown_of(&daily_series(store, month)?))
}

/// Ranks classes by raw count descending; equal counts order by canonical
/// name so rounding can never make the table nondeterministic.
pub fn top_k(breakdown: &MonthlyBreakdown, k: usize) -> TopKTable {
    let mut entries: Vec<TopEntry> = VulnClass::ALL
        .iter()
        .filter(|c| breakdown.count(**c) > 0)
        .map(|c| TopEntry {
            class: *c,
            count: breakdown.count(*c),
            percent: breakdown.percent(*c),
        })
        .collect();
    entries.sort_by(|a, b| {
        b.count
            .cmp(&a.count)
            .then_with(|| a.class.canonical_name().cmp(b.class.canonical_name()))
    });
    entries.truncate(k);
    TopKTable {
        month: breakdown.month,
        k,
        entries,
    }
}

/// Flags days where one class's count is both at least `min_count` and at
/// least `factor` times its mean over the preceding `trailing_window_days`
/// (days before the month count as zero). Returned in date order.
pub fn detect_peaks(series: &DailySeries, class: VulnClass, config: PeakConfig) -> Vec<Peak> {
    let ci = class.index();
    let window = config.trailing_window_days as i64;
    let mut peaks = Vec::new();
    for (idx, day_counts) in series.days.iter().enumerate() {
        let count = day_counts[ci];
        if count < config.min_count {
            continue;
        }
        let day = idx as i64 + 1;
        let mut sum = 0u64;
        for d in (day - window).max(1)..day {
            sum += series.days[(d - 1) as usize][ci];
        }
        let trailing_mean = sum as f64 / window as f64;
        if (count as f64) < config.factor * trailing_mean {
            continue;
        }
        let date = series.month.date(day as u32).expect("day in month");
        peaks.push(Peak {
            date,
            class,
            count,
            trailing_mean,
            ratio: count as f64 / trailing_mean.max(1.0),
        });
    }
    peaks
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::NewRecord;
    use chrono::{DateTime, Utc};

    #[test]
    fn percent_rounds_half_up() {
        assert_eq!(percent_of(0, 0), 0);
        assert_eq!(percent_of(0, 7), 0);
        assert_eq!(percent_of(1, 8), 13); // 12.5 rounds up
        assert_eq!(percent_of(1, 3), 33);
        assert_eq!(percent_of(1, 200), 1); // 0.5 rounds up
        assert_eq!(percent_of(16, 150), 11); // 10.67
        assert_eq!(percent_of(17, 150), 11); // 11.33
        assert_eq!(percent_of(150, 150), 100);
        assert_eq!(percent_of(28, 100), 28);
    }

    fn series_with(month: Month, fill: &[(u32, VulnClass, u64)]) -> DailySeries {
        let mut days = vec![[0u64; VulnClass::COUNT]; month.day_count() as usize];
        for (day, class, count) in fill {
            days[(*day - 1) as usize][class.index()] = *count;
        }
        DailySeries { month, days }
    }

    #[test]
    fn breakdown_collapses_series() {
        let month = Month::new(2018, 2).unwrap();
        let series = series_with(
            month,
            &[
                (14, VulnClass::Injection, 10),
                (15, VulnClass::Injection, 20),
                (15, VulnClass::CrossSiteScripting, 5),
            ],
        );
        let b = breakdown_of(&series);
        assert_eq!(b.total, 35);
        assert_eq!(b.count(VulnClass::Injection), 30);
        assert_eq!(b.percent(VulnClass::Injection), 86); // 85.71 rounds to 86
        assert_eq!(b.percent(VulnClass::CrossSiteScripting), 14);
        assert_eq!(b.percent(VulnClass::DenialOfService), 0);
        assert_eq!(b.counts.iter().sum::<u64>(), b.total);
    }

    #[test]
    fn empty_month_breakdown_is_all_zero() {
        let month = Month::new(2018, 4).unwrap();
        let b = breakdown_of(&series_with(month, &[]));
        assert_eq!(b.total, 0);
        assert!(b.percents.iter().all(|p| *p == 0));
    }

    #[test]
    fn single_class_month_is_100_percent() {
        let month = Month::new(2018, 4).unwrap();
        let b = breakdown_of(&series_with(month, &[(3, VulnClass::CrossSiteScripting, 3)]));
        assert_eq!(b.percent(VulnClass::CrossSiteScripting), 100);
        let others: u64 = VulnClass::ALL
            .iter()
            .filter(|c| **c != VulnClass::CrossSiteScripting)
            .map(|c| b.percent(*c) as u64)
            .sum();
        assert_eq!(others, 0);
    }

    #[test]
    fn top_k_orders_and_truncates() {
        let month = Month::new(2018, 2).unwrap();
        let series = series_with(
            month,
            &[
                (1, VulnClass::Injection, 36),
                (2, VulnClass::CrossSiteScripting, 16),
                (3, VulnClass::RemoteCodeExecution, 9),
                (4, VulnClass::DenialOfService, 4),
            ],
        );
        let table = top_k(&breakdown_of(&series), 3);
        let got: Vec<_> = table.entries.iter().map(|e| (e.class, e.percent)).collect();
        assert_eq!(
            got,
            vec![
                (VulnClass::Injection, 55), // of 65 total
                (VulnClass::CrossSiteScripting, 25),
                (VulnClass::RemoteCodeExecution, 14),
            ]
        );
        // Only classes with nonzero counts may appear.
        let table = top_k(&breakdown_of(&series), 10);
        assert_eq!(table.entries.len(), 4);
        // Empty month gives an empty table.
        assert!(top_k(&breakdown_of(&series_with(month, &[])), 3).entries.is_empty());
    }

    #[test]
    fn top_k_breaks_ties_alphabetically() {
        let month = Month::new(2018, 6).unwrap();
        let series = series_with(
            month,
            &[
                (1, VulnClass::BufferOverflow, 7),
                (2, VulnClass::CrossSiteRequestForgery, 7),
                (3, VulnClass::Injection, 9),
            ],
        );
        let table = top_k(&breakdown_of(&series), 3);
        let got: Vec<_> = table.entries.iter().map(|e| e.class).collect();
        // buffer-overflow < csrf by canonical name.
        assert_eq!(
            got,
            vec![
                VulnClass::Injection,
                VulnClass::BufferOverflow,
                VulnClass::CrossSiteRequestForgery,
            ]
        );
    }

    #[test]
    fn top_k_prefix_property() {
        let month = Month::new(2018, 2).unwrap();
        let series = series_with(
            month,
            &[
                (1, VulnClass::Injection, 12),
                (2, VulnClass::CrossSiteScripting, 9),
                (3, VulnClass::RemoteCodeExecution, 9),
                (4, VulnClass::DenialOfService, 2),
                (5, VulnClass::BufferOverflow, 1),
            ],
        );
        let b = breakdown_of(&series);
        for k in 1..6 {
            let smaller = top_k(&b, k);
            let larger = top_k(&b, k + 1);
            assert_eq!(smaller.entries[..], larger.entries[..smaller.entries.len()]);
        }
    }

    /// The February shape from the corpus: quiet baseline, 10 on the
    /// 14th, 20 on the 15th.
    fn february_injection_series() -> DailySeries {
        let month = Month::new(2018, 2).unwrap();
        series_with(
            month,
            &[
                (3, VulnClass::Injection, 1),
                (6, VulnClass::Injection, 1),
                (9, VulnClass::Injection, 1),
                (12, VulnClass::Injection, 1),
                (14, VulnClass::Injection, 10),
                (15, VulnClass::Injection, 20),
                (21, VulnClass::Injection, 1),
                (25, VulnClass::Injection, 1),
            ],
        )
    }

    #[test]
    fn detect_peaks_finds_the_february_spike() {
        let series = february_injection_series();
        let peaks = detect_peaks(&series, VulnClass::Injection, PeakConfig::default());
        let days: Vec<u32> = peaks
            .iter()
            .map(|p| chrono::Datelike::day(&p.date))
            .collect();
        assert_eq!(days, vec![14, 15]);
        // Day 14: trailing days 7..13 hold counts on 9 and 12 only.
        assert!((peaks[0].trailing_mean - 2.0 / 7.0).abs() < 1e-12);
        assert_eq!(peaks[0].count, 10);
        assert_eq!(peaks[0].ratio, 10.0); // mean below 1 clamps to 1
        // Day 15: trailing days 8..14 hold 1 + 1 + 10.
        assert!((peaks[1].trailing_mean - 12.0 / 7.0).abs() < 1e-12);
        assert_eq!(peaks[1].count, 20);
        assert!((peaks[1].ratio - 20.0 / (12.0 / 7.0)).abs() < 1e-12);
    }

    #[test]
    fn detect_peaks_respects_min_count_and_factor() {
        let month = Month::new(2018, 2).unwrap();
        // A spike of 4 stays under min_count.
        let series = series_with(month, &[(10, VulnClass::Injection, 4)]);
        assert!(detect_peaks(&series, VulnClass::Injection, PeakConfig::default()).is_empty());
        // A uniform series never exceeds factor x mean.
        let mut days = vec![[0u64; VulnClass::COUNT]; 28];
        for d in &mut days {
            d[VulnClass::Injection.index()] = 6;
        }
        // Day 1 has an empty history, so a uniform run still peaks there;
        // from day 8 on the mean equals the count.
        let series = DailySeries { month, days };
        let peaks = detect_peaks(&series, VulnClass::Injection, PeakConfig::default());
        assert!(peaks.iter().all(|p| chrono::Datelike::day(&p.date) <= 3));
        // min_count below every count plus factor 1+epsilon: no late peaks.
        let late: Vec<_> = peaks
            .iter()
            .filter(|p| chrono::Datelike::day(&p.date) >= 8)
            .collect();
        assert!(late.is_empty());
    }

    #[test]
    fn detect_peaks_ignores_other_classes() {
        let mut series = february_injection_series();
        let baseline = detect_peaks(&series, VulnClass::Injection, PeakConfig::default());
        // Pile arbitrary counts onto another class.
        for day in series.days.iter_mut() {
            day[VulnClass::DenialOfService.index()] = 40;
        }
        let after = detect_peaks(&series, VulnClass::Injection, PeakConfig::default());
        assert_eq!(baseline, after);
    }

    #[test]
    fn peak_config_validation() {
        assert!(PeakConfig::new(3.0, 5, 7).is_some());
        assert!(PeakConfig::new(1.0, 5, 7).is_none());
        assert!(PeakConfig::new(3.0, 0, 7).is_none());
        assert!(PeakConfig::new(3.0, 5, 0).is_none());
    }

    #[test]
    fn store_backed_series_matches_breakdown() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path().join("s.jsonl")).unwrap();
        let ingested: DateTime<Utc> = "2018-09-01T00:00:00Z".parse().unwrap();
        for (day, class) in [
            (14u32, VulnClass::Injection),
            (15, VulnClass::Injection),
            (15, VulnClass::CrossSiteScripting),
        ] {
            store
                .append(NewRecord {
                    class,
                    title: "t x".to_string(),
                    discoverer: String::new(),
                    observed_at: format!("2018-02-{day:02}T10:00:00Z").parse().unwrap(),
                    source_id: "m".to_string(),
                    detail_url: String::new(),
                    ingested_at: ingested,
                })
                .unwrap();
        }
        let month = Month::new(2018, 2).unwrap();
        let series = daily_series(&store, month).unwrap();
        let breakdown = monthly_breakdown(&store, month).unwrap();
        for class in VulnClass::ALL {
            let from_series: u64 = series.days.iter().map(|d| d[class.index()]).sum();
            assert_eq!(from_series, breakdown.count(class));
        }
        assert_eq!(breakdown.total, 3);
    }
}
