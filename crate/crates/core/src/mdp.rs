//! The decision process layered over the simulator: fixed-width state
//! features, a flat action layout with feasibility masks, and the reward
//! function.
//!
//! Actions share one flat index space
//! `[assign-to-courier 0..C | reject | go-depot | go-restaurant 0..R]`.
//! An order arrival makes `reject` and the non-full couriers' `assign`
//! entries feasible; a courier going idle makes `go-depot` and every
//! `go-restaurant` entry feasible (for that courier). Distance features are
//! scaled by the longest trip in the grid so inputs stay near `[0, 1]`
//! across region sizes.

use serde::{Deserialize, Serialize};

use crate::sim::{CourierId, SimEvent, SimEventKind, World};

/// Fixed reward for rejecting an order.
pub const REJECT_REWARD: f64 = -15.0;
/// Default target delivery time used by the reward function.
pub const DEFAULT_RP: f64 = 45.0;

/// A decodable action in the flat layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Action {
    Assign(CourierId),
    Reject,
    GoDepot,
    GoRestaurant(usize),
}

/// Shape of the flat action space for `C` couriers and `R` restaurants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionLayout {
    pub couriers: usize,
    pub restaurants: usize,
}

impl ActionLayout {
    pub fn new(couriers: usize, restaurants: usize) -> Self {
        Self {
            couriers,
            restaurants,
        }
    }

    pub fn len(&self) -> usize {
        self.couriers + 2 + self.restaurants
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn index(&self, action: Action) -> usize {
        match action {
            Action::Assign(c) => {
                debug_assert!(c < self.couriers);
                c
            }
            Action::Reject => self.couriers,
            Action::GoDepot => self.couriers + 1,
            Action::GoRestaurant(r) => {
                debug_assert!(r < self.restaurants);
                self.couriers + 2 + r
            }
        }
    }

    pub fn action(&self, index: usize) -> Action {
        if index < self.couriers {
            Action::Assign(index)
        } else if index == self.couriers {
            Action::Reject
        } else if index == self.couriers + 1 {
            Action::GoDepot
        } else {
            let r = index - self.couriers - 2;
            assert!(r < self.restaurants, "action index {index} out of range");
            Action::GoRestaurant(r)
        }
    }

    /// Number of input features for a value network over this layout:
    /// per courier `[delta, mu, eta_0..eta_R-1]`, then the normalized
    /// hour of day and the event-kind flag.
    pub fn feature_len(&self) -> usize {
        self.couriers * (2 + self.restaurants) + 2
    }
}

/// Counts of reachable state-action pairs per decision case on an
/// `n x n` grid with `r` restaurants, `c` couriers, and at most `f`
/// simultaneous assignments. Diagnostic only.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StateActionSpace {
    pub accept: u64,
    pub reject: u64,
    pub depot: u64,
    pub restaurant: u64,
}

pub fn state_action_space_size(n: u64, r: u64, c: u64, f: u64) -> StateActionSpace {
    assert!(n >= 2, "grid side must be at least 2");
    let span = 2 * n - 2;
    StateActionSpace {
        accept: f * span * c,
        reject: f * span * c,
        depot: span * c,
        restaurant: r * span * c,
    }
}

/// Reward for a feasible action taken in the current world state:
/// `rp - delta` for an assignment, a flat penalty for rejection, and a
/// tenth of the travel distance for repositioning moves.
pub fn reward(world: &World, event: &SimEvent, action: Action, rp: f64) -> f64 {
    match (action, &event.kind) {
        (Action::Assign(c), SimEventKind::OrderArrival(order)) => {
            rp - f64::from(world.expected_delivery_time(c, order))
        }
        (Action::Reject, SimEventKind::OrderArrival(_)) => REJECT_REWARD,
        (Action::GoDepot, SimEventKind::CourierIdle(c)) => {
            -f64::from(world.depot_distance(*c)) / 10.0
        }
        (Action::GoRestaurant(r), SimEventKind::CourierIdle(c)) => {
            -f64::from(world.restaurant_distance(*c, r)) / 10.0
        }
        _ => panic!("action {action:?} is infeasible for this event"),
    }
}

/// Encodes the multi-courier state: every courier's block is populated on
/// an order arrival; on a courier-idle event only the deciding courier's
/// depot/restaurant distances are populated, which also identifies it to
/// the network.
pub fn encode_multi(world: &World, event: &SimEvent) -> (Vec<f64>, Vec<bool>) {
    let layout = ActionLayout::new(world.couriers.len(), world.region.restaurants.len());
    let scale = f64::from(world.region.max_trip_minutes());
    let mut features = vec![0.0; layout.feature_len()];
    let mut mask = vec![false; layout.len()];

    match &event.kind {
        SimEventKind::OrderArrival(order) => {
            for c in 0..world.couriers.len() {
                let base = c * (2 + layout.restaurants);
                features[base] = f64::from(world.expected_delivery_time(c, order)) / scale;
                features[base + 1] = f64::from(world.depot_distance(c)) / scale;
                for r in 0..layout.restaurants {
                    features[base + 2 + r] = f64::from(world.restaurant_distance(c, r)) / scale;
                }
                if world.couriers[c].queue.len() < world.max_queue {
                    mask[layout.index(Action::Assign(c))] = true;
                }
            }
            mask[layout.index(Action::Reject)] = true;
        }
        SimEventKind::CourierIdle(c) => {
            let base = c * (2 + layout.restaurants);
            features[base + 1] = f64::from(world.depot_distance(*c)) / scale;
            for r in 0..layout.restaurants {
                features[base + 2 + r] = f64::from(world.restaurant_distance(*c, r)) / scale;
            }
            mask[layout.index(Action::GoDepot)] = true;
            for r in 0..layout.restaurants {
                mask[layout.index(Action::GoRestaurant(r))] = true;
            }
        }
    }

    let tail = layout.feature_len() - 2;
    features[tail] = hour_fraction(world);
    features[tail + 1] = match event.kind {
        SimEventKind::OrderArrival(_) => 0.0,
        SimEventKind::CourierIdle(_) => 1.0,
    };
    (features, mask)
}

/// Encodes the single-courier view of an event for `courier`: its own
/// expected delivery time (zero sentinel on idle events), depot distance,
/// and restaurant distances. The mask is over the single-courier layout.
pub fn encode_single(world: &World, event: &SimEvent, courier: CourierId) -> (Vec<f64>, Vec<bool>) {
    let layout = ActionLayout::new(1, world.region.restaurants.len());
    let scale = f64::from(world.region.max_trip_minutes());
    let mut features = vec![0.0; layout.feature_len()];
    let mut mask = vec![false; layout.len()];

    match &event.kind {
        SimEventKind::OrderArrival(order) => {
            features[0] = f64::from(world.expected_delivery_time(courier, order)) / scale;
            if world.couriers[courier].queue.len() < world.max_queue {
                mask[layout.index(Action::Assign(0))] = true;
            }
            mask[layout.index(Action::Reject)] = true;
        }
        SimEventKind::CourierIdle(c) => {
            debug_assert_eq!(*c, courier);
            mask[layout.index(Action::GoDepot)] = true;
            for r in 0..layout.restaurants {
                mask[layout.index(Action::GoRestaurant(r))] = true;
            }
        }
    }
    features[1] = f64::from(world.depot_distance(courier)) / scale;
    for r in 0..layout.restaurants {
        features[2 + r] = f64::from(world.restaurant_distance(courier, r)) / scale;
    }

    let tail = layout.feature_len() - 2;
    features[tail] = hour_fraction(world);
    features[tail + 1] = match event.kind {
        SimEventKind::OrderArrival(_) => 0.0,
        SimEventKind::CourierIdle(_) => 1.0,
    };
    (features, mask)
}

fn hour_fraction(world: &World) -> f64 {
    let span = f64::from(world.day_end - world.day_start);
    (f64::from(world.clock.saturating_sub(world.day_start)) / span).clamp(0.0, 1.0)
}
