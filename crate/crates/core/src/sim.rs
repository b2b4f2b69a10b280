//! Minute-stepped, event-driven world physics.
//!
//! The world advances one minute per [`World::tick`]. Serving couriers move
//! one cell per minute along a deterministic Manhattan path (rows first,
//! then columns), wait at the restaurant until the food is ready, and hand
//! off on reaching the customer cell. Pickups, hand-offs and queue
//! advancement are instantaneous within a tick, which makes the realized
//! delivery time of an order equal the expected delivery time computed at
//! assignment, minute for minute, as long as queue order is not preempted
//! (it never is: assignments append FIFO).
//!
//! Events within one minute are emitted in a fixed order: deliveries and
//! the courier-idle decisions they trigger first, then order arrivals, so a
//! courier freed this minute is assignable to a same-minute arrival.

use std::collections::VecDeque;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::demand::{Order, OrderStatus};
use crate::region::{manhattan, GridCoord, RegionConfig};

pub type CourierId = usize;

/// What a courier is currently doing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CourierMode {
    Idle,
    /// Repositioning toward a restaurant in anticipation of demand.
    ToRestaurant(usize),
    ReturningToDepot,
    Serving,
}

impl CourierMode {
    pub fn label(&self) -> String {
        match self {
            CourierMode::Idle => "idle".into(),
            CourierMode::ToRestaurant(r) => format!("to-restaurant-{r}"),
            CourierMode::ReturningToDepot => "to-depot".into(),
            CourierMode::Serving => "serving".into(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Courier {
    pub id: CourierId,
    pub position: GridCoord,
    pub queue: VecDeque<Order>,
    pub mode: CourierMode,
    /// True once the head order's food is on board.
    pub(crate) picked_up: bool,
    /// Minutes this day spent on assigned work (to-restaurant travel,
    /// restaurant wait, delivery travel).
    pub busy_minutes: u32,
}

impl Courier {
    fn new(id: CourierId, position: GridCoord) -> Self {
        Self {
            id,
            position,
            queue: VecDeque::new(),
            mode: CourierMode::Idle,
            picked_up: false,
            busy_minutes: 0,
        }
    }

    /// The cell from which this courier would start a new pickup: its
    /// current position when the queue is empty, otherwise the destination
    /// of the last queued order.
    pub fn availability_location(&self) -> GridCoord {
        self.queue.back().map_or(self.position, |o| o.destination)
    }

    /// Exact minutes until the current queue is fully delivered under the
    /// motion and wait rules; zero for an empty queue.
    pub fn time_to_finish_queue(&self, now: u32) -> u32 {
        let mut t = now;
        let mut pos = self.position;
        for (k, order) in self.queue.iter().enumerate() {
            if k == 0 && self.picked_up {
                t += manhattan(pos, order.destination);
            } else {
                let arrive = t + manhattan(pos, order.origin);
                let depart = arrive.max(order.ready_minute());
                t = depart + order.trip_minutes();
            }
            pos = order.destination;
        }
        t - now
    }
}

/// A decision point surfaced by the world.
#[derive(Debug)]
pub struct SimEvent {
    pub minute: u32,
    pub kind: SimEventKind,
}

#[derive(Debug)]
pub enum SimEventKind {
    /// A new order awaits an assign/reject decision.
    OrderArrival(Order),
    /// A courier's queue just emptied; it awaits a repositioning decision.
    CourierIdle(CourierId),
}

#[derive(Debug, Error)]
pub enum ActionError {
    #[error("courier {courier} queue is full ({len} >= {max})")]
    QueueFull {
        courier: CourierId,
        len: usize,
        max: usize,
    },
    #[error("order {0} is not pending a decision")]
    OrderNotPending(u64),
    #[error("courier {0} is serving; repositioning needs an idle courier")]
    CourierBusy(CourierId),
    #[error("restaurant {0} does not exist")]
    NoSuchRestaurant(usize),
}

/// The full mutable world for one simulated day.
#[derive(Debug, Clone)]
pub struct World {
    pub clock: u32,
    pub region: Arc<RegionConfig>,
    pub couriers: Vec<Courier>,
    /// Maximum simultaneous assignments per courier.
    pub max_queue: usize,
    pub day_start: u32,
    pub day_end: u32,
    pub day_index: u32,
    /// Orders not yet surfaced, sorted by placement minute.
    pending_arrivals: VecDeque<Order>,
    /// Orders that left the system: delivered or rejected.
    pub finished: Vec<Order>,
    orders_total: usize,
}

impl World {
    /// Builds a fresh day: all couriers idle at the depot, the order stream
    /// scheduled for release minute by minute.
    pub fn new(
        region: Arc<RegionConfig>,
        n_couriers: usize,
        max_queue: usize,
        day_start: u32,
        day_end: u32,
        day_index: u32,
        orders: Vec<Order>,
    ) -> Self {
        debug_assert!(orders
            .windows(2)
            .all(|w| w[0].placed_minute <= w[1].placed_minute));
        let depot = region.depot;
        Self {
            clock: day_start,
            region,
            couriers: (0..n_couriers).map(|id| Courier::new(id, depot)).collect(),
            max_queue,
            day_start,
            day_end,
            day_index,
            orders_total: orders.len(),
            pending_arrivals: orders.into(),
            finished: Vec::new(),
        }
    }

    pub fn orders_total(&self) -> usize {
        self.orders_total
    }

    /// Orders currently assigned but not yet delivered.
    pub fn orders_in_progress(&self) -> usize {
        self.couriers.iter().map(|c| c.queue.len()).sum()
    }

    pub fn orders_pending_arrival(&self) -> usize {
        self.pending_arrivals.len()
    }

    /// True once nothing remains to simulate.
    pub fn is_done(&self) -> bool {
        self.clock >= self.day_end
            && self.pending_arrivals.is_empty()
            && self.couriers.iter().all(|c| c.queue.is_empty())
    }

    /// Events already due at the current clock (arrivals scheduled for the
    /// opening minute). Call once before the first tick.
    pub fn initial_events(&mut self) -> Vec<SimEvent> {
        let mut events = Vec::new();
        self.drain_arrivals(&mut events);
        events
    }

    /// Expected delivery time in minutes if `order` were appended to
    /// `courier`'s queue now: restaurant-to-customer distance plus the
    /// larger of the preparation time and (queue finish time + distance
    /// from the location of availability to the restaurant).
    pub fn expected_delivery_time(&self, courier: CourierId, order: &Order) -> u32 {
        let c = &self.couriers[courier];
        let finish = c.time_to_finish_queue(self.clock);
        let approach = manhattan(c.availability_location(), order.origin);
        order.trip_minutes() + order.prep_minutes.max(finish + approach)
    }

    /// Distance from a courier's location of availability to the depot.
    pub fn depot_distance(&self, courier: CourierId) -> u32 {
        manhattan(
            self.couriers[courier].availability_location(),
            self.region.depot,
        )
    }

    /// Distance from a courier's location of availability to a restaurant.
    pub fn restaurant_distance(&self, courier: CourierId, restaurant: usize) -> u32 {
        manhattan(
            self.couriers[courier].availability_location(),
            self.region.restaurant_cell(restaurant),
        )
    }

    /// Appends `order` to the courier's queue. Any repositioning or depot
    /// return is abandoned on the spot; the courier starts toward the new
    /// restaurant on the next tick without detouring.
    pub fn apply_assignment(
        &mut self,
        courier: CourierId,
        mut order: Order,
    ) -> Result<(), ActionError> {
        if order.status != OrderStatus::PendingDecision {
            return Err(ActionError::OrderNotPending(order.id));
        }
        let max = self.max_queue;
        let c = &mut self.couriers[courier];
        if c.queue.len() >= max {
            return Err(ActionError::QueueFull {
                courier,
                len: c.queue.len(),
                max,
            });
        }
        order.status = OrderStatus::Assigned;
        order.assigned_courier = Some(courier);
        c.queue.push_back(order);
        c.mode = CourierMode::Serving;
        Ok(())
    }

    /// Removes the order from the system permanently.
    pub fn apply_reject(&mut self, mut order: Order) -> Result<(), ActionError> {
        if order.status != OrderStatus::PendingDecision {
            return Err(ActionError::OrderNotPending(order.id));
        }
        order.status = OrderStatus::Rejected;
        self.finished.push(order);
        Ok(())
    }

    /// Sends an idle courier back to the depot.
    pub fn apply_go_depot(&mut self, courier: CourierId) -> Result<(), ActionError> {
        let depot = self.region.depot;
        let c = &mut self.couriers[courier];
        if !c.queue.is_empty() {
            return Err(ActionError::CourierBusy(courier));
        }
        c.mode = if c.position == depot {
            CourierMode::Idle
        } else {
            CourierMode::ReturningToDepot
        };
        Ok(())
    }

    /// Sends an idle courier toward a restaurant.
    pub fn apply_go_restaurant(
        &mut self,
        courier: CourierId,
        restaurant: usize,
    ) -> Result<(), ActionError> {
        if restaurant >= self.region.restaurants.len() {
            return Err(ActionError::NoSuchRestaurant(restaurant));
        }
        let target = self.region.restaurant_cell(restaurant);
        let c = &mut self.couriers[courier];
        if !c.queue.is_empty() {
            return Err(ActionError::CourierBusy(courier));
        }
        c.mode = if c.position == target {
            CourierMode::Idle
        } else {
            CourierMode::ToRestaurant(restaurant)
        };
        Ok(())
    }

    /// Advances the world one minute and returns the decision points that
    /// became due: courier-idle events from queues that emptied, then order
    /// arrivals scheduled for the new minute.
    pub fn tick(&mut self) -> Vec<SimEvent> {
        self.clock += 1;
        let mut events = Vec::new();
        for i in 0..self.couriers.len() {
            self.step_courier(i, &mut events);
        }
        self.drain_arrivals(&mut events);
        events
    }

    fn drain_arrivals(&mut self, events: &mut Vec<SimEvent>) {
        while self
            .pending_arrivals
            .front()
            .is_some_and(|o| o.placed_minute <= self.clock)
        {
            let order = self.pending_arrivals.pop_front().unwrap();
            events.push(SimEvent {
                minute: self.clock,
                kind: SimEventKind::OrderArrival(order),
            });
        }
    }

    fn step_courier(&mut self, idx: usize, events: &mut Vec<SimEvent>) {
        let clock = self.clock;
        let c = &mut self.couriers[idx];
        match c.mode {
            CourierMode::Idle => {}
            CourierMode::ReturningToDepot => {
                let target = self.region.depot;
                c.position = step_toward(c.position, target);
                if c.position == target {
                    c.mode = CourierMode::Idle;
                }
            }
            CourierMode::ToRestaurant(r) => {
                let target = self.region.restaurant_cell(r);
                c.position = step_toward(c.position, target);
                if c.position == target {
                    c.mode = CourierMode::Idle;
                }
            }
            CourierMode::Serving => {
                c.busy_minutes += 1;
                let mut moved = false;
                loop {
                    let Some(head) = c.queue.front() else {
                        c.mode = CourierMode::Idle;
                        events.push(SimEvent {
                            minute: clock,
                            kind: SimEventKind::CourierIdle(idx),
                        });
                        break;
                    };
                    if !c.picked_up {
                        if c.position != head.origin {
                            if moved {
                                break;
                            }
                            c.position = step_toward(c.position, head.origin);
                            if c.position != head.origin {
                                break;
                            }
                        }
                        // At the restaurant; pick up once the food is
                        // ready. The pickup minute is spent either moving
                        // here or waiting, so no further movement this tick.
                        if clock >= head.ready_minute() {
                            c.picked_up = true;
                            moved = true;
                            if c.position != head.destination {
                                break;
                            }
                            // Customer in the same cell: instant hand-off.
                        } else {
                            break;
                        }
                    } else if c.position != head.destination {
                        if moved {
                            break;
                        }
                        c.position = step_toward(c.position, head.destination);
                        moved = true;
                        if c.position != head.destination {
                            break;
                        }
                    }
                    if c.picked_up && c.position == head.destination {
                        let mut done = c.queue.pop_front().unwrap();
                        done.status = OrderStatus::Delivered;
                        done.delivered_minute = Some(clock);
                        self.finished.push(done);
                        c.picked_up = false;
                    }
                }
            }
        }
    }
}

/// One Manhattan step toward `target`: rows first, then columns.
fn step_toward(from: GridCoord, target: GridCoord) -> GridCoord {
    if from.row < target.row {
        GridCoord::new(from.row + 1, from.col)
    } else if from.row > target.row {
        GridCoord::new(from.row - 1, from.col)
    } else if from.col < target.col {
        GridCoord::new(from.row, from.col + 1)
    } else if from.col > target.col {
        GridCoord::new(from.row, from.col - 1)
    } else {
        from
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demand::OrderStatus;
    use crate::region::generate_synthetic_region;
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn order(id: u64, origin: GridCoord, destination: GridCoord, placed: u32, prep: u32) -> Order {
        Order {
            id,
            restaurant_id: 0,
            origin,
            destination,
            placed_minute: placed,
            prep_minutes: prep,
            status: OrderStatus::PendingDecision,
            delivered_minute: None,
            assigned_courier: None,
        }
    }

    fn six_by_six(restaurants: &[GridCoord], depot: GridCoord) -> Arc<RegionConfig> {
        Arc::new(RegionConfig {
            name: "fixture-6x6".into(),
            height: 6,
            width: 6,
            depot,
            restaurants: restaurants
                .iter()
                .enumerate()
                .map(|(id, &cell)| crate::region::Restaurant {
                    id,
                    cell,
                    popularity: 1.0,
                })
                .collect(),
            customer_weights: vec![vec![1.0; 6]; 6],
        })
    }

    /// Two couriers on a 6x6 grid; courier 0 is mid-delivery two cells from
    /// its customer, courier 1 idle seven cells from restaurant 1. A new
    /// order from restaurant 1 (prep 6, trip 4) gives expected delivery
    /// times of 10 and 11.
    fn scenario_mid_delivery() -> (World, Order) {
        let r1 = GridCoord::new(5, 2);
        let r2 = GridCoord::new(0, 0);
        let region = six_by_six(&[r1, r2], GridCoord::new(2, 5));
        let mut world = World::new(region, 2, 2, 480, 1440, 0, vec![]);
        world.clock = 600;

        // Courier 0: carrying an order placed earlier, destination [3,0],
        // currently at [5,0] -> two minutes out.
        let mut current = order(0, r1, GridCoord::new(3, 0), 580, 5);
        current.status = OrderStatus::Assigned;
        current.assigned_courier = Some(0);
        world.couriers[0].queue.push_back(current);
        world.couriers[0].mode = CourierMode::Serving;
        world.couriers[0].picked_up = true;
        world.couriers[0].position = GridCoord::new(5, 0);

        // Courier 1: idle at [3,4], seven cells from restaurant 1 at [0,0].
        world.couriers[1].position = GridCoord::new(3, 4);

        let new_order = order(1, r2, GridCoord::new(2, 2), 600, 6);
        (world, new_order)
    }

    #[test]
    fn time_to_finish_queue_zero_when_idle() {
        let region = six_by_six(&[GridCoord::new(0, 0)], GridCoord::new(3, 3));
        let world = World::new(region, 1, 2, 480, 1440, 0, vec![]);
        assert_eq!(world.couriers[0].time_to_finish_queue(world.clock), 0);
    }

    #[test]
    fn time_to_finish_queue_mid_delivery_is_remaining_distance() {
        let (world, _) = scenario_mid_delivery();
        assert_eq!(world.couriers[0].time_to_finish_queue(world.clock), 2);
    }

    #[test]
    fn expected_delivery_time_worked_examples() {
        let (world, new_order) = scenario_mid_delivery();
        // Busy courier: 4 + max{6, 2 + 3} = 10.
        assert_eq!(world.expected_delivery_time(0, &new_order), 10);
        // Idle courier: 4 + max{6, 0 + 7} = 11.
        assert_eq!(world.expected_delivery_time(1, &new_order), 11);
    }

    #[test]
    fn expected_delivery_time_prep_dominates_at_restaurant() {
        let r = GridCoord::new(1, 1);
        let region = six_by_six(&[r], GridCoord::new(3, 3));
        let mut world = World::new(region, 1, 2, 480, 1440, 0, vec![]);
        world.clock = 500;
        world.couriers[0].position = r;
        let o = order(0, r, GridCoord::new(1, 5), 500, 9);
        assert_eq!(world.expected_delivery_time(0, &o), 4 + 9);
    }

    /// Drives the world forward until all queues drain, with no decisions.
    fn run_until_empty(world: &mut World) {
        let mut guard = 0;
        while world.couriers.iter().any(|c| !c.queue.is_empty()) {
            world.tick();
            guard += 1;
            assert!(guard < 100_000, "runaway simulation");
        }
    }

    #[test]
    fn realized_equals_expected_for_single_assignment() {
        let region = Arc::new(generate_synthetic_region(10, 10, 7, 1).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..200 {
            let mut world = World::new(region.clone(), 1, 2, 480, 1440, 0, vec![]);
            world.clock = 600;
            world.couriers[0].position =
                GridCoord::new(rng.random_range(0..10), rng.random_range(0..10));
            let rid = rng.random_range(0..7usize);
            let o = order(
                7,
                region.restaurant_cell(rid),
                GridCoord::new(rng.random_range(0..10), rng.random_range(0..10)),
                600,
                rng.random_range(5..=15),
            );
            let delta = world.expected_delivery_time(0, &o);
            world.apply_assignment(0, o).unwrap();
            run_until_empty(&mut world);
            let delivered = world.finished.last().unwrap();
            assert_eq!(
                delivered.delivered_minute.unwrap() - delivered.placed_minute,
                delta,
                "realized delivery time must equal the expected delivery time"
            );
        }
    }

    #[test]
    fn realized_equals_expected_for_fifo_queues() {
        // Queue up to three orders at staggered minutes; every order's
        // realized time matches the expectation computed at its assignment.
        let region = Arc::new(generate_synthetic_region(10, 10, 7, 2).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(123);
        for _ in 0..200 {
            let mut world = World::new(region.clone(), 1, 3, 480, 1440, 0, vec![]);
            world.clock = 600;
            world.couriers[0].position =
                GridCoord::new(rng.random_range(0..10), rng.random_range(0..10));
            let n = rng.random_range(1..=3usize);
            let mut expected = Vec::new();
            for k in 0..n {
                // Let some time pass between assignments.
                for _ in 0..rng.random_range(0..6u32) {
                    world.tick();
                }
                let rid = rng.random_range(0..7usize);
                let o = order(
                    k as u64,
                    region.restaurant_cell(rid),
                    GridCoord::new(rng.random_range(0..10), rng.random_range(0..10)),
                    world.clock,
                    rng.random_range(5..=15),
                );
                expected.push((k as u64, world.clock + world.expected_delivery_time(0, &o)));
                world.apply_assignment(0, o).unwrap();
            }
            run_until_empty(&mut world);
            for (id, minute) in expected {
                let got = world
                    .finished
                    .iter()
                    .find(|o| o.id == id)
                    .unwrap()
                    .delivered_minute
                    .unwrap();
                assert_eq!(got, minute, "order {id}");
            }
        }
    }

    #[test]
    fn time_to_finish_matches_stepped_simulation() {
        // Build random in-flight states by simulating, then check the
        // closed-form finish time against actually ticking to completion.
        let region = Arc::new(generate_synthetic_region(10, 10, 7, 3).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let mut world = World::new(region.clone(), 1, 3, 480, 1440, 0, vec![]);
            world.clock = 600;
            for k in 0..rng.random_range(1..=3usize) {
                let rid = rng.random_range(0..7usize);
                let o = order(
                    k as u64,
                    region.restaurant_cell(rid),
                    GridCoord::new(rng.random_range(0..10), rng.random_range(0..10)),
                    world.clock,
                    rng.random_range(5..=15),
                );
                world.apply_assignment(0, o).unwrap();
            }
            // Advance into the middle of the work.
            for _ in 0..rng.random_range(0..25u32) {
                if world.couriers[0].queue.is_empty() {
                    break;
                }
                world.tick();
            }
            let predicted = world.couriers[0].time_to_finish_queue(world.clock);
            let start = world.clock;
            run_until_empty(&mut world);
            let last_delivery = world
                .finished
                .iter()
                .filter_map(|o| o.delivered_minute)
                .max()
                .unwrap_or(start);
            assert_eq!(predicted, last_delivery.saturating_sub(start));
        }
    }

    #[test]
    fn assignment_to_idle_courier_starts_next_tick() {
        let r = GridCoord::new(0, 0);
        let region = six_by_six(&[r], GridCoord::new(3, 3));
        let mut world = World::new(region, 1, 2, 480, 1440, 0, vec![]);
        world.clock = 500;
        world.couriers[0].position = GridCoord::new(2, 0);
        let o = order(0, r, GridCoord::new(0, 3), 500, 5);
        world.apply_assignment(0, o).unwrap();
        world.tick();
        assert_eq!(world.couriers[0].position, GridCoord::new(1, 0));
        assert_eq!(world.couriers[0].mode, CourierMode::Serving);
    }

    #[test]
    fn assignment_abandons_depot_return() {
        let r = GridCoord::new(0, 0);
        let region = six_by_six(&[r], GridCoord::new(5, 5));
        let mut world = World::new(region, 1, 2, 480, 1440, 0, vec![]);
        world.clock = 500;
        world.couriers[0].position = GridCoord::new(2, 2);
        world.apply_go_depot(0).unwrap();
        world.tick(); // one minute toward the depot (rows first)
        assert_eq!(world.couriers[0].position, GridCoord::new(3, 2));
        let o = order(0, r, GridCoord::new(0, 3), world.clock, 5);
        world.apply_assignment(0, o).unwrap();
        assert_eq!(world.couriers[0].mode, CourierMode::Serving);
        world.tick();
        // Now heading to the restaurant at [0,0], not the depot.
        assert_eq!(world.couriers[0].position, GridCoord::new(2, 2));
    }

    #[test]
    fn second_assignment_is_served_fifo() {
        let r = GridCoord::new(0, 0);
        let region = six_by_six(&[r], GridCoord::new(3, 3));
        let mut world = World::new(region, 1, 2, 480, 1440, 0, vec![]);
        world.clock = 500;
        world.couriers[0].position = r;
        world
            .apply_assignment(0, order(0, r, GridCoord::new(0, 2), 500, 5))
            .unwrap();
        world
            .apply_assignment(0, order(1, r, GridCoord::new(4, 0), 500, 5))
            .unwrap();
        run_until_empty(&mut world);
        assert_eq!(world.finished[0].id, 0, "first assigned, first delivered");
        assert_eq!(world.finished[1].id, 1);
        assert!(
            world.finished[0].delivered_minute.unwrap()
                < world.finished[1].delivered_minute.unwrap()
        );
    }

    #[test]
    fn reject_removes_order_without_touching_couriers() {
        let r = GridCoord::new(0, 0);
        let region = six_by_six(&[r], GridCoord::new(3, 3));
        let mut world = World::new(region, 2, 2, 480, 1440, 0, vec![]);
        let before: Vec<_> = world.couriers.iter().map(|c| c.position).collect();
        world
            .apply_reject(order(0, r, GridCoord::new(1, 1), 480, 5))
            .unwrap();
        assert_eq!(world.finished.len(), 1);
        assert_eq!(world.finished[0].status, OrderStatus::Rejected);
        let after: Vec<_> = world.couriers.iter().map(|c| c.position).collect();
        assert_eq!(before, after);
    }

    #[test]
    fn go_restaurant_takes_exactly_the_manhattan_path() {
        // Idle courier at [1,1]; restaurant 1 at [3,3] is four cells away.
        let region = six_by_six(
            &[GridCoord::new(0, 2), GridCoord::new(3, 3)],
            GridCoord::new(3, 4),
        );
        let mut world = World::new(region, 1, 2, 480, 1440, 0, vec![]);
        world.couriers[0].position = GridCoord::new(1, 1);
        world.apply_go_restaurant(0, 1).unwrap();
        let mut steps = 0;
        while world.couriers[0].mode != CourierMode::Idle {
            world.tick();
            steps += 1;
        }
        assert_eq!(steps, 4);
        assert_eq!(world.couriers[0].position, GridCoord::new(3, 3));
        // Arrived with no new work: stays put.
        world.tick();
        assert_eq!(world.couriers[0].position, GridCoord::new(3, 3));
        assert_eq!(world.couriers[0].mode, CourierMode::Idle);
    }

    #[test]
    fn courier_waits_exactly_until_food_ready() {
        // Courier adjacent to the restaurant, prep far from done: it must
        // wait placed+prep - arrival minutes, then depart.
        let r = GridCoord::new(0, 0);
        let region = six_by_six(&[r], GridCoord::new(3, 3));
        let mut world = World::new(region, 1, 2, 480, 1440, 0, vec![]);
        world.clock = 500;
        world.couriers[0].position = GridCoord::new(0, 1);
        let o = order(0, r, GridCoord::new(0, 4), 500, 10);
        world.apply_assignment(0, o).unwrap();
        world.tick();
        assert_eq!(world.couriers[0].position, r, "arrived at minute 501");
        // Food ready at 510; should remain at the restaurant through 510.
        for expect_minute in 502..=510 {
            world.tick();
            assert_eq!(world.clock, expect_minute);
            assert_eq!(world.couriers[0].position, r);
        }
        // Departs after pickup: delivery 4 cells later, at 514 = 500 + (4 + max(10, 1)).
        run_until_empty(&mut world);
        assert_eq!(world.finished[0].delivered_minute, Some(514));
    }

    #[test]
    fn delivery_on_adjacent_cell_next_tick() {
        let r = GridCoord::new(0, 0);
        let region = six_by_six(&[r], GridCoord::new(3, 3));
        let mut world = World::new(region, 1, 2, 480, 1440, 0, vec![]);
        world.clock = 520;
        world.couriers[0].position = GridCoord::new(2, 3);
        let mut o = order(0, r, GridCoord::new(2, 4), 500, 5);
        o.status = OrderStatus::Assigned;
        world.couriers[0].queue.push_back(o);
        world.couriers[0].picked_up = true;
        world.couriers[0].mode = CourierMode::Serving;
        let events = world.tick();
        assert_eq!(world.finished.len(), 1);
        assert_eq!(world.finished[0].delivered_minute, Some(521));
        assert!(matches!(events[0].kind, SimEventKind::CourierIdle(0)));
    }

    #[test]
    fn queue_limit_is_enforced() {
        let r = GridCoord::new(0, 0);
        let region = six_by_six(&[r], GridCoord::new(3, 3));
        let mut world = World::new(region, 1, 1, 480, 1440, 0, vec![]);
        world
            .apply_assignment(0, order(0, r, GridCoord::new(1, 1), 480, 5))
            .unwrap();
        let err = world
            .apply_assignment(0, order(1, r, GridCoord::new(1, 1), 480, 5))
            .unwrap_err();
        assert!(matches!(err, ActionError::QueueFull { .. }));
    }

    #[test]
    fn same_minute_ordering_deliveries_then_idle_then_arrivals() {
        let r = GridCoord::new(0, 0);
        let region = six_by_six(&[r], GridCoord::new(3, 3));
        // One arrival scheduled exactly when the delivery lands.
        let arrival = order(5, r, GridCoord::new(1, 1), 521, 7);
        let mut world = World::new(region, 1, 2, 480, 1440, 0, vec![arrival]);
        world.clock = 520;
        world.pending_arrivals[0].placed_minute = 521;
        world.couriers[0].position = GridCoord::new(2, 3);
        let mut o = order(0, r, GridCoord::new(2, 4), 500, 5);
        o.status = OrderStatus::Assigned;
        world.couriers[0].queue.push_back(o);
        world.couriers[0].picked_up = true;
        world.couriers[0].mode = CourierMode::Serving;
        let events = world.tick();
        assert_eq!(events.len(), 2);
        assert!(matches!(events[0].kind, SimEventKind::CourierIdle(0)));
        assert!(matches!(events[1].kind, SimEventKind::OrderArrival(_)));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn courier_moves_at_most_one_cell_per_minute(seed in 0u64..500) {
            let region = Arc::new(generate_synthetic_region(8, 8, 3, 5).unwrap());
            let orders = crate::demand::generate_day(
                &region,
                &crate::demand::HourlyProfile::uniform(480, 600),
                40,
                seed,
            );
            let mut world = World::new(region, 2, 2, 480, 600, 0, orders);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut events = world.initial_events();
            let mut guard = 0;
            loop {
                for event in events.drain(..) {
                    match event.kind {
                        SimEventKind::OrderArrival(o) => {
                            let c = rng.random_range(0..2usize);
                            if world.couriers[c].queue.len() < 2 && rng.random::<f64>() < 0.8 {
                                world.apply_assignment(c, o).unwrap();
                            } else {
                                world.apply_reject(o).unwrap();
                            }
                        }
                        SimEventKind::CourierIdle(c) => {
                            if rng.random::<f64>() < 0.5 {
                                world.apply_go_depot(c).unwrap();
                            } else {
                                world.apply_go_restaurant(c, rng.random_range(0..3)).unwrap();
                            }
                        }
                    }
                }
                if world.is_done() {
                    break;
                }
                let before: Vec<_> = world.couriers.iter().map(|c| c.position).collect();
                events = world.tick();
                for (b, c) in before.iter().zip(&world.couriers) {
                    prop_assert!(manhattan(*b, c.position) <= 1);
                    prop_assert!(world.region.contains(c.position));
                }
                guard += 1;
                prop_assert!(guard < 50_000);
            }
            // Conservation: every generated order ended delivered or rejected.
            prop_assert_eq!(world.finished.len(), world.orders_total());
            let delivered = world
                .finished
                .iter()
                .filter(|o| o.status == OrderStatus::Delivered)
                .count();
            let rejected = world
                .finished
                .iter()
                .filter(|o| o.status == OrderStatus::Rejected)
                .count();
            prop_assert_eq!(delivered + rejected, world.orders_total());
            for o in world.finished.iter().filter(|o| o.status == OrderStatus::Delivered) {
                prop_assert!(o.delivered_minute.unwrap() >= o.placed_minute);
            }
        }
    }
}
