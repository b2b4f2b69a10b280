//! Per-day outcomes and their aggregation into evaluation metrics.

use serde::{Deserialize, Serialize};

/// Everything measured over one simulated day.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DayOutcome {
    pub day_index: u32,
    pub reward: f64,
    pub decisions: u32,
    pub generated: u32,
    pub rejected: u32,
    pub delivered: u32,
    /// Placement-to-hand-off duration of every delivered order.
    pub delivery_minutes: Vec<u32>,
    /// Delivered orders per hour of day (index = hour).
    pub delivered_by_hour: Vec<u32>,
    pub busy_minutes: Vec<u32>,
    pub utilization: Vec<f64>,
}

/// Descriptive statistics over pooled delivery durations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeliveryStats {
    pub count: u64,
    pub min: u32,
    pub max: u32,
    pub mean: f64,
    pub median: f64,
    pub std: f64,
}

impl DeliveryStats {
    pub fn from_durations(mut durations: Vec<u32>) -> Option<Self> {
        if durations.is_empty() {
            return None;
        }
        durations.sort_unstable();
        let n = durations.len();
        let sum: u64 = durations.iter().map(|&d| u64::from(d)).sum();
        let mean = sum as f64 / n as f64;
        let median = if n % 2 == 1 {
            f64::from(durations[n / 2])
        } else {
            f64::from(durations[n / 2 - 1] + durations[n / 2]) / 2.0
        };
        let var = durations
            .iter()
            .map(|&d| (f64::from(d) - mean).powi(2))
            .sum::<f64>()
            / (n as f64 - 1.0).max(1.0);
        Some(Self {
            count: n as u64,
            min: durations[0],
            max: durations[n - 1],
            mean,
            median,
            std: var.sqrt(),
        })
    }
}

/// Aggregated evaluation results over a set of test days.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub days: u32,
    pub avg_reward: f64,
    pub generated: u64,
    pub rejected: u64,
    pub rejected_pct: f64,
    pub delivery: Option<DeliveryStats>,
    /// Share of delivered orders in <=25 / 25-45 / 45-60 / >60 minutes.
    pub bucket_pct: [f64; 4],
    /// Mean delivered orders per hour of day.
    pub hourly_delivered: Vec<f64>,
    /// Mean busy minutes per courier per day.
    pub busy_minutes: Vec<f64>,
    /// Mean utilization per courier.
    pub utilization: Vec<f64>,
}

impl EpisodeMetrics {
    pub fn aggregate(days: &[DayOutcome]) -> Self {
        assert!(!days.is_empty(), "need at least one day to aggregate");
        let n = days.len() as f64;
        let generated: u64 = days.iter().map(|d| u64::from(d.generated)).sum();
        let rejected: u64 = days.iter().map(|d| u64::from(d.rejected)).sum();
        let durations: Vec<u32> = days
            .iter()
            .flat_map(|d| d.delivery_minutes.iter().copied())
            .collect();
        let delivered = durations.len() as f64;
        let mut buckets = [0u64; 4];
        for &d in &durations {
            let b = if d <= 25 {
                0
            } else if d <= 45 {
                1
            } else if d <= 60 {
                2
            } else {
                3
            };
            buckets[b] += 1;
        }
        let bucket_pct = buckets.map(|b| {
            if delivered > 0.0 {
                100.0 * b as f64 / delivered
            } else {
                0.0
            }
        });

        let hours = days
            .iter()
            .map(|d| d.delivered_by_hour.len())
            .max()
            .unwrap_or(0);
        let mut hourly = vec![0.0; hours];
        for d in days {
            for (h, &c) in d.delivered_by_hour.iter().enumerate() {
                hourly[h] += f64::from(c) / n;
            }
        }
        let couriers = days.first().map_or(0, |d| d.busy_minutes.len());
        let mut busy = vec![0.0; couriers];
        let mut util = vec![0.0; couriers];
        for d in days {
            for c in 0..couriers {
                busy[c] += f64::from(d.busy_minutes[c]) / n;
                util[c] += d.utilization[c] / n;
            }
        }

        Self {
            days: days.len() as u32,
            avg_reward: days.iter().map(|d| d.reward).sum::<f64>() / n,
            generated,
            rejected,
            rejected_pct: if generated > 0 {
                100.0 * rejected as f64 / generated as f64
            } else {
                0.0
            },
            delivery: DeliveryStats::from_durations(durations),
            bucket_pct,
            hourly_delivered: hourly,
            busy_minutes: busy,
            utilization: util,
        }
    }
}

/// Fraction of a shift spent on assigned work. The denominator grows past
/// the shift when deliveries run into overtime, so the value stays in
/// [0, 1].
pub fn utilization(busy_minutes: u32, shift_minutes: u32, elapsed_minutes: u32) -> f64 {
    let denom = shift_minutes.max(elapsed_minutes).max(1);
    f64::from(busy_minutes) / f64::from(denom)
}

/// Header shared by every results table.
pub fn metrics_csv_header() -> &'static str {
    "policy,avg_reward,rejected_pct,del_min,del_max,del_mean,del_median,del_std,pct_le25,pct_25_45,pct_45_60,pct_gt60"
}

/// One comparison row in the shared column layout.
pub fn metrics_csv_row(policy: &str, m: &EpisodeMetrics) -> String {
    match &m.delivery {
        Some(d) => format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            policy,
            m.avg_reward,
            m.rejected_pct,
            d.min,
            d.max,
            d.mean,
            d.median,
            d.std,
            m.bucket_pct[0],
            m.bucket_pct[1],
            m.bucket_pct[2],
            m.bucket_pct[3],
        ),
        None => format!("{},{},{},,,,,,,,,", policy, m.avg_reward, m.rejected_pct),
    }
}
