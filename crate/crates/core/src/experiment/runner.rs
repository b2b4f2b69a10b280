//! Day-level episode runner shared by training and evaluation, plus the
//! decision handlers: rule-based policies, greedy network policies, and
//! the learning trainer.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::agents::{masked_argmax, Agent, AgentConfig};
use crate::baselines::ThresholdPolicy;
use crate::demand::{self, HourlyProfile, OrderStatus};
use crate::mdp::{self, Action, ActionLayout};
use crate::neural::Network;
use crate::region::RegionConfig;
use crate::replay::{ReplayBuffer, Transition};
use crate::seeds;
use crate::sim::{SimEvent, SimEventKind, World};

use super::metrics::{utilization, DayOutcome};

/// The fixed world a set of runs shares: geography, demand, fleet, reward
/// parameter.
#[derive(Clone)]
pub struct Scenario {
    pub region: Arc<RegionConfig>,
    pub profile: HourlyProfile,
    pub daily_orders: u32,
    pub couriers: usize,
    pub max_queue: usize,
    pub rp: f64,
}

impl Scenario {
    pub fn shift_minutes(&self) -> u32 {
        self.profile.shift_minutes()
    }
}

/// Whether the value network is trained against the single-courier MDP
/// (and shared across the fleet at test time) or sized to the full fleet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainingMode {
    Single,
    Multi,
}

impl TrainingMode {
    /// Network dimensions for this mode on a given scenario.
    pub fn network_shape(&self, scenario: &Scenario) -> (usize, usize) {
        let restaurants = scenario.region.restaurants.len();
        let couriers = match self {
            TrainingMode::Single => 1,
            TrainingMode::Multi => scenario.couriers,
        };
        let layout = ActionLayout::new(couriers, restaurants);
        (layout.feature_len(), layout.len())
    }

    /// Number of couriers in the training world.
    pub fn training_couriers(&self, scenario: &Scenario) -> usize {
        match self {
            TrainingMode::Single => 1,
            TrainingMode::Multi => scenario.couriers,
        }
    }

    /// Daily order volume in the training world. Single mode trains one
    /// courier against its per-courier share of the demand so the learned
    /// opportunity costs transfer to the full fleet; multi mode trains on
    /// the full volume.
    pub fn training_daily_orders(&self, scenario: &Scenario) -> u32 {
        match self {
            TrainingMode::Single => {
                let share = f64::from(scenario.daily_orders) / scenario.couriers as f64;
                (share.round() as u32).max(1)
            }
            TrainingMode::Multi => scenario.daily_orders,
        }
    }
}

/// Anything that can steer a day of simulation.
pub trait DecisionHandler {
    fn decide(&mut self, world: &World, event: &SimEvent) -> Action;
    /// Called once after the final decision of the day.
    fn end_day(&mut self) {}
}

/// One per-minute, per-courier trace record.
#[derive(Debug, Clone, Serialize)]
pub struct TraceRow {
    pub minute: u32,
    pub courier: usize,
    pub row: u32,
    pub col: u32,
    pub mode: String,
    pub event: String,
}

/// Runs one full day under `handler` and measures it. Orders still in
/// flight at the day horizon are completed (the clock keeps running) but
/// no further repositioning decisions are made after the horizon.
pub fn run_day(
    scenario: &Scenario,
    day_index: u32,
    day_seed: u64,
    handler: &mut dyn DecisionHandler,
    mut trace: Option<&mut Vec<TraceRow>>,
) -> DayOutcome {
    let orders = demand::generate_day(
        &scenario.region,
        &scenario.profile,
        scenario.daily_orders,
        day_seed,
    );
    let generated = orders.len() as u32;
    let mut world = World::new(
        scenario.region.clone(),
        scenario.couriers,
        scenario.max_queue,
        scenario.profile.day_start_minute,
        scenario.profile.day_end_minute,
        day_index,
        orders,
    );

    let mut reward = 0.0;
    let mut decisions = 0u32;
    let mut events = world.initial_events();
    loop {
        for event in events.drain(..) {
            if matches!(event.kind, SimEventKind::CourierIdle(_)) && event.minute >= world.day_end {
                continue; // the day is over; just finish the deliveries
            }
            let action = handler.decide(&world, &event);
            reward += mdp::reward(&world, &event, action, scenario.rp);
            decisions += 1;
            apply(&mut world, event, action);
        }
        if world.is_done() {
            break;
        }
        let finished_before = world.finished.len();
        events = world.tick();
        if let Some(rows) = trace.as_deref_mut() {
            record_trace(rows, &world, finished_before, &events);
        }
    }
    handler.end_day();

    summarize(&world, generated, reward, decisions, scenario)
}

fn apply(world: &mut World, event: SimEvent, action: Action) {
    match (event.kind, action) {
        (SimEventKind::OrderArrival(order), Action::Assign(c)) => world
            .apply_assignment(c, order)
            .expect("policy chose an infeasible assignment"),
        (SimEventKind::OrderArrival(order), Action::Reject) => {
            world.apply_reject(order).expect("order was pending")
        }
        (SimEventKind::CourierIdle(c), Action::GoDepot) => {
            world.apply_go_depot(c).expect("courier was idle")
        }
        (SimEventKind::CourierIdle(c), Action::GoRestaurant(r)) => {
            world.apply_go_restaurant(c, r).expect("courier was idle")
        }
        (kind, action) => panic!("action {action:?} is infeasible for event {kind:?}"),
    }
}

fn record_trace(
    rows: &mut Vec<TraceRow>,
    world: &World,
    finished_before: usize,
    events: &[SimEvent],
) {
    let mut notes = vec![String::new(); world.couriers.len()];
    for order in &world.finished[finished_before..] {
        if order.status == OrderStatus::Delivered {
            if let Some(c) = order.assigned_courier {
                notes[c] = format!("delivered:{}", order.id);
            }
        }
    }
    for event in events {
        match &event.kind {
            SimEventKind::CourierIdle(c) => notes[*c] = "went-idle".into(),
            SimEventKind::OrderArrival(o) => {
                // Arrival rows carry no courier context; note on courier 0's
                // row would mislead, so arrivals get their own pseudo-row.
                rows.push(TraceRow {
                    minute: event.minute,
                    courier: usize::MAX,
                    row: o.origin.row,
                    col: o.origin.col,
                    mode: "order".into(),
                    event: format!("arrival:{}", o.id),
                });
            }
        }
    }
    for c in &world.couriers {
        rows.push(TraceRow {
            minute: world.clock,
            courier: c.id,
            row: c.position.row,
            col: c.position.col,
            mode: c.mode.label(),
            event: std::mem::take(&mut notes[c.id]),
        });
    }
}

fn summarize(
    world: &World,
    generated: u32,
    reward: f64,
    decisions: u32,
    scenario: &Scenario,
) -> DayOutcome {
    let mut delivery_minutes = Vec::new();
    let mut delivered_by_hour = vec![0u32; 24];
    let mut rejected = 0u32;
    for order in &world.finished {
        match order.status {
            OrderStatus::Delivered => {
                let minute = order
                    .delivered_minute
                    .expect("delivered orders carry a minute");
                delivery_minutes.push(minute - order.placed_minute);
                let hour = (minute / 60) as usize;
                if hour >= delivered_by_hour.len() {
                    delivered_by_hour.resize(hour + 1, 0);
                }
                delivered_by_hour[hour] += 1;
            }
            OrderStatus::Rejected => rejected += 1,
            _ => unreachable!("finished orders are delivered or rejected"),
        }
    }
    let shift = scenario.shift_minutes();
    let elapsed = world.clock - world.day_start;
    let busy: Vec<u32> = world.couriers.iter().map(|c| c.busy_minutes).collect();
    let util: Vec<f64> = busy
        .iter()
        .map(|&b| utilization(b, shift, elapsed))
        .collect();
    DayOutcome {
        day_index: world.day_index,
        reward,
        decisions,
        generated,
        rejected,
        delivered: delivery_minutes.len() as u32,
        delivery_minutes,
        delivered_by_hour,
        busy_minutes: busy,
        utilization: util,
    }
}

/// A frozen policy under evaluation. Network policies act greedily.
pub enum EvalPolicy {
    Baseline(ThresholdPolicy),
    /// One single-courier network shared across the fleet: every courier's
    /// masked Q-values are compared and the global argmax acts.
    SingleShared(Network),
    /// A network sized to the full fleet.
    Multi(Network),
}

impl EvalPolicy {
    pub fn name(&self) -> String {
        match self {
            EvalPolicy::Baseline(p) => format!("p{}", p.threshold),
            EvalPolicy::SingleShared(_) => "single-shared".into(),
            EvalPolicy::Multi(_) => "multi".into(),
        }
    }
}

impl DecisionHandler for EvalPolicy {
    fn decide(&mut self, world: &World, event: &SimEvent) -> Action {
        match self {
            EvalPolicy::Baseline(p) => p.decide(world, event),
            EvalPolicy::SingleShared(net) => decide_single_shared(net, world, event),
            EvalPolicy::Multi(net) => {
                let (features, mask) = mdp::encode_multi(world, event);
                let q = net.forward(&features).expect("encoding matches network");
                let layout =
                    ActionLayout::new(world.couriers.len(), world.region.restaurants.len());
                layout.action(masked_argmax(&q, &mask).expect("mask nonempty"))
            }
        }
    }
}

/// Shared single-courier policy: evaluate the network once per courier and
/// take the best feasible (courier, action) pair; each courier's rejection
/// estimate competes too.
fn decide_single_shared(net: &Network, world: &World, event: &SimEvent) -> Action {
    let layout = ActionLayout::new(1, world.region.restaurants.len());
    match &event.kind {
        SimEventKind::OrderArrival(_) => {
            let mut best: Option<(f64, Action)> = None;
            let mut push = |value: f64, action: Action| {
                if best.map_or(true, |(v, _)| value > v) {
                    best = Some((value, action));
                }
            };
            for c in 0..world.couriers.len() {
                let (features, mask) = mdp::encode_single(world, event, c);
                let q = net.forward(&features).expect("encoding matches network");
                if mask[layout.index(Action::Assign(0))] {
                    push(q[layout.index(Action::Assign(0))], Action::Assign(c));
                }
                push(q[layout.index(Action::Reject)], Action::Reject);
            }
            best.expect("at least reject is feasible").1
        }
        SimEventKind::CourierIdle(c) => {
            let (features, mask) = mdp::encode_single(world, event, *c);
            let q = net.forward(&features).expect("encoding matches network");
            layout.action(masked_argmax(&q, &mask).expect("mask nonempty"))
        }
    }
}

/// The learning handler: completes transitions as successor decisions
/// arrive, trains once per completed transition after warm-up, and acts
/// epsilon-greedily.
pub struct Trainer {
    pub agent: Agent,
    pub buffer: ReplayBuffer,
    mode: TrainingMode,
    rp: f64,
    epsilon: f64,
    progress: f64,
    pending: Option<Pending>,
    pub losses_today: Vec<f64>,
}

struct Pending {
    state: Vec<f64>,
    action: usize,
    reward: f64,
}

impl Trainer {
    pub fn new(agent: Agent, mode: TrainingMode, rp: f64) -> Self {
        let buffer = ReplayBuffer::new(
            agent.config.memory_capacity,
            if agent.config.per {
                agent.config.alpha
            } else {
                0.0
            },
        );
        Self {
            agent,
            buffer,
            mode,
            rp,
            epsilon: 1.0,
            progress: 0.0,
            pending: None,
            losses_today: Vec::new(),
        }
    }

    /// Sets the day's exploration rate and annealing progress.
    pub fn begin_day(&mut self, progress: f64) {
        self.progress = progress;
        self.epsilon = self.agent.config.epsilon(progress);
        self.losses_today.clear();
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    fn encode(&self, world: &World, event: &SimEvent) -> (Vec<f64>, Vec<bool>) {
        match self.mode {
            TrainingMode::Single => {
                let courier = match &event.kind {
                    SimEventKind::CourierIdle(c) => *c,
                    SimEventKind::OrderArrival(_) => 0,
                };
                mdp::encode_single(world, event, courier)
            }
            TrainingMode::Multi => mdp::encode_multi(world, event),
        }
    }

    fn complete_pending(&mut self, next_state: Vec<f64>, next_mask: Vec<bool>, terminal: bool) {
        if let Some(p) = self.pending.take() {
            self.buffer.push(Transition {
                state: p.state,
                action: p.action,
                reward: p.reward,
                next_state,
                next_mask,
                terminal,
            });
            if self.buffer.len() >= self.agent.config.batch_size {
                for _ in 0..self.agent.config.updates_per_event.max(1) {
                    let loss = self
                        .agent
                        .train_step(&mut self.buffer, self.progress)
                        .expect("buffer holds a full batch");
                    self.losses_today.push(loss);
                }
            }
        }
    }
}

impl DecisionHandler for Trainer {
    fn decide(&mut self, world: &World, event: &SimEvent) -> Action {
        let (features, mask) = self.encode(world, event);
        self.complete_pending(features.clone(), mask.clone(), false);

        let index = self
            .agent
            .select_action(&features, &mask, self.epsilon)
            .expect("event masks are never empty");
        let layout = ActionLayout::new(
            match self.mode {
                TrainingMode::Single => 1,
                TrainingMode::Multi => world.couriers.len(),
            },
            world.region.restaurants.len(),
        );
        let action = match (layout.action(index), &event.kind) {
            // The single-courier layout's assign slot refers to whichever
            // courier the event concerns.
            (Action::Assign(_), SimEventKind::OrderArrival(_))
                if matches!(self.mode, TrainingMode::Single) =>
            {
                Action::Assign(0)
            }
            (a, _) => a,
        };
        let reward = mdp::reward(world, event, action, self.rp);
        self.pending = Some(Pending {
            state: features,
            action: index,
            reward,
        });
        action
    }

    fn end_day(&mut self) {
        // Terminal completion for the day's final decision.
        if let Some(width) = self.pending.as_ref().map(|p| p.state.len()) {
            let mask_len = self.agent.online.n_actions();
            self.complete_pending(vec![0.0; width], vec![false; mask_len], true);
        }
    }
}

/// Per-day training log row.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainDayRow {
    pub day: u32,
    pub reward: f64,
    pub mean_loss: f64,
    pub epsilon: f64,
    pub rejected: u32,
    pub generated: u32,
    pub delivered: u32,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TrainingLog {
    pub rows: Vec<TrainDayRow>,
}

impl TrainingLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("day,reward,mean_loss,epsilon,rejected,generated,delivered\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.day, r.reward, r.mean_loss, r.epsilon, r.rejected, r.generated, r.delivered
            ));
        }
        out
    }
}

/// Trains an agent on the scenario for `days` days. Single mode trains in
/// a one-courier world; multi mode trains with the full fleet. Returns the
/// trained agent and the per-day log. Deterministic per seed.
pub fn run_training(
    scenario: &Scenario,
    agent_config: &AgentConfig,
    mode: TrainingMode,
    days: u32,
    seed: u64,
) -> (Agent, TrainingLog) {
    let (inputs, actions) = mode.network_shape(scenario);
    let agent = Agent::new(
        agent_config.clone(),
        inputs,
        actions,
        seeds::derive(seed, seeds::STREAM_AGENT, 0),
    );
    let mut trainer = Trainer::new(agent, mode, scenario.rp);
    let train_scenario = Scenario {
        couriers: mode.training_couriers(scenario),
        daily_orders: mode.training_daily_orders(scenario),
        ..scenario.clone()
    };

    let mut log = TrainingLog::default();
    for day in 0..days {
        let progress = f64::from(day) / f64::from(days.max(1));
        trainer.begin_day(progress);
        let day_seed = seeds::derive(seed, seeds::STREAM_TRAIN, u64::from(day));
        let outcome = run_day(&train_scenario, day, day_seed, &mut trainer, None);
        let mean_loss = if trainer.losses_today.is_empty() {
            0.0
        } else {
            trainer.losses_today.iter().sum::<f64>() / trainer.losses_today.len() as f64
        };
        log.rows.push(TrainDayRow {
            day,
            reward: outcome.reward,
            mean_loss,
            epsilon: trainer.epsilon(),
            rejected: outcome.rejected,
            generated: outcome.generated,
            delivered: outcome.delivered,
        });
    }
    (trainer.agent, log)
}

/// Evaluation report: the aggregate and the per-day outcomes it came from.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub policy: String,
    pub metrics: super::metrics::EpisodeMetrics,
    pub days: Vec<DayOutcome>,
}

/// Greedy evaluation over `test_days` days. Test-day order streams are
/// derived from the seed's test stream only, so different policies under
/// the same seed face identical demand (common random numbers).
pub fn run_evaluation(
    scenario: &Scenario,
    policy: &mut EvalPolicy,
    test_days: u32,
    seed: u64,
) -> EvalReport {
    let mut days = Vec::with_capacity(test_days as usize);
    for day in 0..test_days {
        let day_seed = seeds::derive(seed, seeds::STREAM_TEST, u64::from(day));
        days.push(run_day(scenario, day, day_seed, policy, None));
    }
    EvalReport {
        policy: policy.name(),
        metrics: super::metrics::EpisodeMetrics::aggregate(&days),
        days,
    }
}
