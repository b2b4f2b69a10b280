//! Rule-based reference dispatch policies.
//!
//! A threshold policy assigns each new order to the courier with the
//! lowest expected delivery time when that time is within the threshold,
//! rejects it otherwise, and always sends idle couriers back to the depot.

use crate::mdp::Action;
use crate::sim::{SimEvent, SimEventKind, World};

/// Reject orders whose best expected delivery time exceeds `threshold`
/// minutes. The studied variants are 45 and 60.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ThresholdPolicy {
    pub threshold: u32,
}

impl ThresholdPolicy {
    pub fn p45() -> Self {
        Self { threshold: 45 }
    }

    pub fn p60() -> Self {
        Self { threshold: 60 }
    }

    /// Decision rule: on an arrival, assign to the feasible courier with
    /// the minimum expected delivery time if it is within the threshold
    /// (ties to the lowest courier id), otherwise reject; on a courier
    /// going idle, return to the depot.
    pub fn decide(&self, world: &World, event: &SimEvent) -> Action {
        match &event.kind {
            SimEventKind::OrderArrival(order) => {
                let best = (0..world.couriers.len())
                    .filter(|&c| world.couriers[c].queue.len() < world.max_queue)
                    .map(|c| (world.expected_delivery_time(c, order), c))
                    .min();
                match best {
                    Some((delta, courier)) if delta <= self.threshold => Action::Assign(courier),
                    _ => Action::Reject,
                }
            }
            SimEventKind::CourierIdle(_) => Action::GoDepot,
        }
    }
}
