//! Stochastic order streams.
//!
//! Orders arrive through the active day following an hourly profile: each
//! hour `h` receives a share of the daily order count, and interarrival
//! gaps within the hour are exponential with the hour's rate, truncated at
//! hour boundaries. Origins are drawn proportional to restaurant
//! popularity, destinations proportional to the customer weight matrix.

use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::region::{manhattan, GridCoord, RegionConfig};

pub const PREP_MIN: u32 = 5;
pub const PREP_MAX: u32 = 15;

/// Lifecycle of an order inside one simulated day.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OrderStatus {
    PendingDecision,
    Assigned,
    Delivered,
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Order {
    pub id: u64,
    pub restaurant_id: usize,
    pub origin: GridCoord,
    pub destination: GridCoord,
    pub placed_minute: u32,
    pub prep_minutes: u32,
    pub status: OrderStatus,
    pub delivered_minute: Option<u32>,
    pub assigned_courier: Option<usize>,
}

impl Order {
    /// Minute the food is ready for pickup.
    pub fn ready_minute(&self) -> u32 {
        self.placed_minute + self.prep_minutes
    }

    /// Restaurant-to-customer distance in minutes.
    pub fn trip_minutes(&self) -> u32 {
        manhattan(self.origin, self.destination)
    }
}

/// One active hour's share of the daily order count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HourShare {
    pub hour: u32,
    pub share: f64,
}

/// Hour-by-hour distribution of daily orders over an active window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HourlyProfile {
    pub day_start_minute: u32,
    pub day_end_minute: u32,
    pub shares: Vec<HourShare>,
}

#[derive(Debug, Error)]
pub enum DemandError {
    #[error("invalid hourly profile: {0}")]
    InvalidProfile(String),
    #[error("failed to read profile file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("failed to parse profile file {path}: {message}")]
    Parse { path: String, message: String },
    #[error("cart is empty")]
    EmptyCart,
    #[error("cart items must share one destination")]
    MixedDestinations,
}

impl HourlyProfile {
    /// Two-peak default profile over 08:00-24:00: a lunch peak from noon to
    /// 3 p.m. and a taller evening peak from 5 p.m. to 9 p.m. that carries
    /// close to half the daily volume.
    pub fn two_peak_default() -> Self {
        let shares = [
            (8, 0.015),
            (9, 0.015),
            (10, 0.025),
            (11, 0.030),
            (12, 0.080),
            (13, 0.085),
            (14, 0.080),
            (15, 0.040),
            (16, 0.040),
            (17, 0.115),
            (18, 0.125),
            (19, 0.125),
            (20, 0.115),
            (21, 0.055),
            (22, 0.035),
            (23, 0.020),
        ];
        Self {
            day_start_minute: 8 * 60,
            day_end_minute: 24 * 60,
            shares: shares
                .iter()
                .map(|&(hour, share)| HourShare { hour, share })
                .collect(),
        }
    }

    /// Flat profile over an arbitrary window; mostly useful in tests.
    pub fn uniform(day_start_minute: u32, day_end_minute: u32) -> Self {
        let first = day_start_minute / 60;
        let last = day_end_minute.div_ceil(60);
        let n = (last - first) as usize;
        Self {
            day_start_minute,
            day_end_minute,
            shares: (first..last)
                .map(|hour| HourShare {
                    hour,
                    share: 1.0 / n as f64,
                })
                .collect(),
        }
    }

    pub fn share(&self, hour: u32) -> f64 {
        self.shares
            .iter()
            .find(|s| s.hour == hour)
            .map_or(0.0, |s| s.share)
    }

    pub fn shift_minutes(&self) -> u32 {
        self.day_end_minute - self.day_start_minute
    }

    pub fn validate(&self) -> Result<(), DemandError> {
        if self.day_start_minute >= self.day_end_minute || self.day_end_minute > 1440 {
            return Err(DemandError::InvalidProfile(format!(
                "day window [{}, {}) must be nonempty and end by minute 1440",
                self.day_start_minute, self.day_end_minute
            )));
        }
        let mut seen = Vec::new();
        for s in &self.shares {
            if !s.share.is_finite() || s.share < 0.0 {
                return Err(DemandError::InvalidProfile(format!(
                    "hour {} share must be finite and >= 0, got {}",
                    s.hour, s.share
                )));
            }
            if s.hour * 60 >= self.day_end_minute || (s.hour + 1) * 60 <= self.day_start_minute {
                return Err(DemandError::InvalidProfile(format!(
                    "hour {} lies outside the active day",
                    s.hour
                )));
            }
            if seen.contains(&s.hour) {
                return Err(DemandError::InvalidProfile(format!(
                    "hour {} listed twice",
                    s.hour
                )));
            }
            seen.push(s.hour);
        }
        let sum: f64 = self.shares.iter().map(|s| s.share).sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(DemandError::InvalidProfile(format!(
                "shares sum to {sum}, expected 1"
            )));
        }
        Ok(())
    }
}

pub fn save_profile(profile: &HourlyProfile, path: &Path) -> Result<(), DemandError> {
    let text = toml::to_string_pretty(profile).map_err(|e| DemandError::Parse {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    std::fs::write(path, text).map_err(|e| DemandError::Io {
        path: path.display().to_string(),
        source: e,
    })
}

pub fn load_profile(path: &Path) -> Result<HourlyProfile, DemandError> {
    let text = std::fs::read_to_string(path).map_err(|e| DemandError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let profile: HourlyProfile = toml::from_str(&text).map_err(|e| DemandError::Parse {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    profile.validate()?;
    Ok(profile)
}

/// Hourly arrival rate: floor(share_h * daily_count) orders per hour; zero
/// for hours outside the active profile.
pub fn hourly_rate(profile: &HourlyProfile, daily_count: u32, hour: u32) -> u32 {
    (profile.share(hour) * f64::from(daily_count)).floor() as u32
}

/// Samples one day's arrival minutes: within each active hour, exponential
/// interarrival gaps at the hour's rate, truncated at the hour boundary.
/// Returned minutes are sorted and lie in `[day_start, day_end)`.
pub fn sample_arrivals<R: Rng>(profile: &HourlyProfile, daily_count: u32, rng: &mut R) -> Vec<u32> {
    let mut minutes = Vec::new();
    let first_hour = profile.day_start_minute / 60;
    let last_hour = profile.day_end_minute.div_ceil(60);
    for hour in first_hour..last_hour {
        let rate = hourly_rate(profile, daily_count, hour);
        if rate == 0 {
            continue;
        }
        let window_start = (hour * 60).max(profile.day_start_minute);
        let window_end = ((hour + 1) * 60).min(profile.day_end_minute);
        let per_minute = f64::from(rate) / 60.0;
        let exp = Exp::new(per_minute).expect("positive rate");
        let mut t = f64::from(window_start);
        loop {
            t += exp.sample(rng);
            if t >= f64::from(window_end) {
                break;
            }
            minutes.push(t as u32);
        }
    }
    minutes
}

/// Draws order origins/destinations for one region.
pub struct OrderSampler<'a> {
    region: &'a RegionConfig,
    restaurant_dist: WeightedIndex<f64>,
    customer_dist: WeightedIndex<f64>,
}

impl<'a> OrderSampler<'a> {
    pub fn new(region: &'a RegionConfig) -> Self {
        let restaurant_dist = WeightedIndex::new(region.restaurants.iter().map(|r| r.popularity))
            .expect("validated region has positive popularity mass");
        let customer_dist = WeightedIndex::new(region.customer_weights.iter().flatten().copied())
            .expect("validated region has positive customer mass");
        Self {
            region,
            restaurant_dist,
            customer_dist,
        }
    }

    pub fn sample<R: Rng>(&self, rng: &mut R, minute: u32, id: u64) -> Order {
        let restaurant_id = self.restaurant_dist.sample(rng);
        let flat = self.customer_dist.sample(rng);
        let destination = GridCoord::new(
            flat as u32 / self.region.width,
            flat as u32 % self.region.width,
        );
        Order {
            id,
            restaurant_id,
            origin: self.region.restaurants[restaurant_id].cell,
            destination,
            placed_minute: minute,
            prep_minutes: rng.random_range(PREP_MIN..=PREP_MAX),
            status: OrderStatus::PendingDecision,
            delivered_minute: None,
            assigned_courier: None,
        }
    }
}

/// Draws a single order placed at `minute`. Thin wrapper over
/// [`OrderSampler`] for one-off use; batch generation should reuse a
/// sampler.
pub fn sample_order<R: Rng>(region: &RegionConfig, rng: &mut R, minute: u32, id: u64) -> Order {
    OrderSampler::new(region).sample(rng, minute, id)
}

/// Splits a multi-restaurant cart into one order per distinct restaurant,
/// all sharing the cart's destination and placement minute, each with an
/// independently drawn preparation time. Ids are assigned 0..k in
/// first-seen restaurant order; callers re-key them into their own stream.
pub fn split_multi_restaurant<R: Rng>(
    region: &RegionConfig,
    cart: &[(usize, GridCoord)],
    minute: u32,
    rng: &mut R,
) -> Result<Vec<Order>, DemandError> {
    let (_, destination) = *cart.first().ok_or(DemandError::EmptyCart)?;
    if cart.iter().any(|&(_, d)| d != destination) {
        return Err(DemandError::MixedDestinations);
    }
    let mut seen: Vec<usize> = Vec::new();
    let mut orders = Vec::new();
    for &(restaurant_id, _) in cart {
        if seen.contains(&restaurant_id) {
            continue;
        }
        seen.push(restaurant_id);
        orders.push(Order {
            id: orders.len() as u64,
            restaurant_id,
            origin: region.restaurants[restaurant_id].cell,
            destination,
            placed_minute: minute,
            prep_minutes: rng.random_range(PREP_MIN..=PREP_MAX),
            status: OrderStatus::PendingDecision,
            delivered_minute: None,
            assigned_courier: None,
        });
    }
    Ok(orders)
}

/// Generates one full day of orders, sorted by placement minute with
/// sequential ids. The stream is a pure function of
/// `(region, profile, daily_count, seed)`.
pub fn generate_day(
    region: &RegionConfig,
    profile: &HourlyProfile,
    daily_count: u32,
    seed: u64,
) -> Vec<Order> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sampler = OrderSampler::new(region);
    let minutes = sample_arrivals(profile, daily_count, &mut rng);
    minutes
        .into_iter()
        .enumerate()
        .map(|(i, minute)| sampler.sample(&mut rng, minute, i as u64))
        .collect()
}
