//! Discrete-event simulation of request arrivals and expiries.
//!
//! Events are processed in time order, expiries before arrivals at equal
//! times. Each arrival runs the node solver, maps links for the best
//! assignment, and on a link-mapping failure retries once with that assignment
//! kept out of the fresh solver's initial population. Metrics are snapshotted
//! at the end of every 100-time-unit bucket up to the horizon; remaining
//! expiries are drained afterwards so the substrate ends fully released.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt::Write as _;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fitness::FitnessNet;
use crate::hfpa::{solve_nodes, SolverParams};
use crate::linkmap::{map_links, LinkMapError};
use crate::netmodel::{EmbeddingPlan, SubstrateNetwork, VirtualNetworkRequest};
use crate::seeding::derive_seed;
use crate::topogen::{gen_schedule, gen_substrate, ArrivalSchedule, GenError, ScenarioConfig};

pub const BUCKET_WIDTH: f64 = 100.0;
pub const CSV_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Generation(#[from] GenError),
    #[error(transparent)]
    Solver(#[from] crate::hfpa::SolveError),
}

/// Metrics at one point in simulated time. Averages are `None` until a
/// request has been accepted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub arrivals: usize,
    pub accepted: usize,
    pub refused: usize,
    /// accepted / processed.
    pub acceptance_ratio: Option<f64>,
    /// accepted / refused. Kept alongside the ratio above; it is unbounded.
    pub acceptance_literal: Option<f64>,
    pub avg_quotation: Option<f64>,
    pub avg_delay: Option<f64>,
    pub avg_plr: Option<f64>,
    pub revenue_cost_ratio: Option<f64>,
    /// Variance of consumed bandwidth across all substrate links.
    pub link_variance: f64,
}

impl Snapshot {
    fn rows(&self) -> [(&'static str, Option<f64>); 10] {
        [
            ("arrivals", Some(self.arrivals as f64)),
            ("accepted", Some(self.accepted as f64)),
            ("acceptance_ratio", self.acceptance_ratio),
            ("acceptance_literal", self.acceptance_literal),
            ("avg_quotation", self.avg_quotation),
            ("avg_delay", self.avg_delay),
            ("avg_plr", self.avg_plr),
            ("revenue_cost_ratio", self.revenue_cost_ratio),
            ("link_variance", Some(self.link_variance)),
            ("refused", Some(self.refused as f64)),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bucket {
    pub index: usize,
    pub time_end: f64,
    pub metrics: Snapshot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub schema_version: u32,
    pub totals: Snapshot,
    /// Link variance averaged over the horizon buckets.
    pub mean_link_variance: f64,
    pub remapped: usize,
    pub solver_evaluations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub buckets: Vec<Bucket>,
    pub summary: Summary,
    /// Mean wall-clock solver time per request in milliseconds. Kept out of
    /// the CSV and summary so those stay reproducible.
    #[serde(skip)]
    pub avg_runtime_ms: Option<f64>,
}

impl MetricsReport {
    /// Long-format table: `bucket,time_end,metric,value`, empty value for
    /// undefined averages.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bucket,time_end,metric,value\n");
        for b in &self.buckets {
            for (name, value) in b.metrics.rows() {
                let value = value.map(|v| v.to_string()).unwrap_or_default();
                let _ = writeln!(out, "{},{},{},{}", b.index, b.time_end, name, value);
            }
        }
        out
    }
}

struct Active {
    request: VirtualNetworkRequest,
    plan: EmbeddingPlan,
}

#[derive(Debug, PartialEq, Eq, PartialOrd, Ord, Clone, Copy)]
enum Kind {
    Expiry,
    Arrival,
}

#[derive(Debug, PartialEq)]
struct Event {
    time: f64,
    kind: Kind,
    seq: usize,
}

impl Eq for Event {}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on (time, kind, seq)
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.kind.cmp(&self.kind))
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Live simulation state and accumulators.
pub struct SimState {
    pub substrate: SubstrateNetwork,
    active: Vec<Option<Active>>,
    pub arrivals: usize,
    pub accepted: usize,
    pub refused: usize,
    pub remapped: usize,
    pub quotation_sum: f64,
    pub delay_sum: f64,
    pub plr_sum: f64,
    pub revenue_sum: f64,
    pub cost_sum: f64,
    pub evaluations: usize,
    runtime: Duration,
}

impl SimState {
    pub fn new(substrate: SubstrateNetwork) -> Self {
        Self {
            substrate,
            active: Vec::new(),
            arrivals: 0,
            accepted: 0,
            refused: 0,
            remapped: 0,
            quotation_sum: 0.0,
            delay_sum: 0.0,
            plr_sum: 0.0,
            revenue_sum: 0.0,
            cost_sum: 0.0,
            evaluations: 0,
            runtime: Duration::ZERO,
        }
    }

    pub fn active_count(&self) -> usize {
        self.active.iter().flatten().count()
    }

    pub fn compute_metrics(&self) -> Snapshot {
        let avg = |sum: f64| (self.accepted > 0).then(|| sum / self.accepted as f64);
        let processed = self.accepted + self.refused;
        Snapshot {
            arrivals: self.arrivals,
            accepted: self.accepted,
            refused: self.refused,
            acceptance_ratio: (processed > 0).then(|| self.accepted as f64 / processed as f64),
            acceptance_literal: (self.refused > 0).then(|| self.accepted as f64 / self.refused as f64),
            avg_quotation: avg(self.quotation_sum),
            avg_delay: avg(self.delay_sum),
            avg_plr: avg(self.plr_sum),
            revenue_cost_ratio: (self.accepted > 0 && self.cost_sum > 0.0).then(|| self.revenue_sum / self.cost_sum),
            link_variance: self.substrate.link_load_variance(),
        }
    }

    fn record_acceptance(&mut self, request: VirtualNetworkRequest, plan: EmbeddingPlan) -> usize {
        let quotation = self.substrate.quotation(&request, &plan).expect("complete plan");
        let (delay, plr) = self.substrate.qos_totals(&plan);
        let (revenue, cost) = plan.revenue_and_cost(&request).expect("complete plan");
        self.accepted += 1;
        self.quotation_sum += quotation;
        self.delay_sum += delay;
        self.plr_sum += plr;
        self.revenue_sum += revenue;
        self.cost_sum += cost;
        self.active.push(Some(Active { request, plan }));
        self.active.len() - 1
    }

    fn expire(&mut self, slot: usize) {
        if let Some(a) = self.active[slot].take() {
            self.substrate.release(&a.request, &a.plan).expect("active plans are allocated");
        }
    }
}

/// Embeds one request: node solve, link mapping, one remapping retry.
/// Returns the plan and whether the retry was needed.
pub fn embed_request(
    s: &SubstrateNetwork,
    v: &VirtualNetworkRequest,
    params: &SolverParams,
    rater: Option<&FitnessNet>,
) -> (Option<(EmbeddingPlan, bool)>, usize) {
    let mut evaluations = 0;
    let first = match solve_nodes(s, v, params, rater, None) {
        Ok(o) => o,
        Err(_) => return (None, evaluations),
    };
    evaluations += first.stats.evaluations;
    let genes = first.best.genes.clone();
    let partial = match first.metrics.paths.clone() {
        Some(paths) => return (Some((EmbeddingPlan { node_assignment: genes, link_paths: paths }, false)), evaluations),
        None => match map_links(s, v, &genes, params.load_balance, None) {
            Ok(paths) => {
                return (Some((EmbeddingPlan { node_assignment: genes, link_paths: paths }, false)), evaluations)
            }
            Err(LinkMapError::Unroutable { partial, .. }) => partial,
            Err(LinkMapError::BadAssignment { .. }) => return (None, evaluations),
        },
    };
    let retry_params = SolverParams { rng_seed: derive_seed(params.rng_seed, 0x4E4D), ..params.clone() };
    let Ok(second) = solve_nodes(s, v, &retry_params, rater, Some(&genes)) else {
        return (None, evaluations);
    };
    evaluations += second.stats.evaluations;
    let genes = second.best.genes;
    match map_links(s, v, &genes, params.load_balance, Some(&partial)) {
        Ok(paths) => (Some((EmbeddingPlan { node_assignment: genes, link_paths: paths }, true)), evaluations),
        Err(_) => (None, evaluations),
    }
}

#[derive(Debug)]
pub struct SimOutcome {
    pub report: MetricsReport,
    pub initial: SubstrateNetwork,
    pub final_substrate: SubstrateNetwork,
}

/// Runs the schedule over `substrate` and reports metrics per bucket.
pub fn simulate(
    substrate: SubstrateNetwork,
    schedule: &ArrivalSchedule,
    horizon: f64,
    solver: &SolverParams,
    rater: Option<&FitnessNet>,
) -> Result<SimOutcome, SimError> {
    solver.validate()?;
    let initial = substrate.clone();
    let mut state = SimState::new(substrate);
    let mut heap = BinaryHeap::new();
    for (seq, ev) in schedule.events.iter().enumerate() {
        heap.push(Event { time: ev.time, kind: Kind::Arrival, seq });
    }
    let bucket_count = (horizon / BUCKET_WIDTH).ceil().max(0.0) as usize;
    let mut buckets = Vec::with_capacity(bucket_count);
    let mut slot_of_expiry: Vec<usize> = Vec::new();

    let snapshot_until = |state: &SimState, buckets: &mut Vec<Bucket>, time: f64| {
        while buckets.len() < bucket_count {
            let end = ((buckets.len() + 1) as f64 * BUCKET_WIDTH).min(horizon);
            if time < end {
                break;
            }
            buckets.push(Bucket { index: buckets.len(), time_end: end, metrics: state.compute_metrics() });
        }
    };

    while let Some(ev) = heap.pop() {
        snapshot_until(&state, &mut buckets, ev.time);
        match ev.kind {
            Kind::Expiry => state.expire(slot_of_expiry[ev.seq]),
            Kind::Arrival => {
                let arrival = &schedule.events[ev.seq];
                let mut request = arrival.request.clone();
                request.arrival = arrival.time;
                state.arrivals += 1;
                let params = SolverParams { rng_seed: derive_seed(solver.rng_seed, request.id), ..solver.clone() };
                let started = Instant::now();
                let (result, evaluations) = embed_request(&state.substrate, &request, &params, rater);
                state.runtime += started.elapsed();
                state.evaluations += evaluations;
                let allocated = result.and_then(|(plan, remapped)| {
                    state.substrate.allocate(&request, &plan).ok().map(|_| (plan, remapped))
                });
                match allocated {
                    Some((plan, remapped)) => {
                        state.remapped += usize::from(remapped);
                        let slot = state.record_acceptance(request, plan);
                        slot_of_expiry.push(slot);
                        heap.push(Event { time: arrival.expiry, kind: Kind::Expiry, seq: slot_of_expiry.len() - 1 });
                    }
                    None => state.refused += 1,
                }
            }
        }
    }
    snapshot_until(&state, &mut buckets, f64::INFINITY);

    let mean_link_variance = if buckets.is_empty() {
        0.0
    } else {
        buckets.iter().map(|b| b.metrics.link_variance).sum::<f64>() / buckets.len() as f64
    };
    let avg_runtime_ms = (state.arrivals > 0).then(|| state.runtime.as_secs_f64() * 1e3 / state.arrivals as f64);
    let report = MetricsReport {
        buckets,
        summary: Summary {
            schema_version: CSV_SCHEMA_VERSION,
            totals: state.compute_metrics(),
            mean_link_variance,
            remapped: state.remapped,
            solver_evaluations: state.evaluations,
        },
        avg_runtime_ms,
    };
    Ok(SimOutcome { report, initial, final_substrate: state.substrate })
}

/// Generates the substrate and schedule from `cfg` and simulates them.
pub fn run_scenario(
    cfg: &ScenarioConfig,
    solver: &SolverParams,
    rater: Option<&FitnessNet>,
) -> Result<SimOutcome, SimError> {
    let substrate = gen_substrate(cfg)?;
    let schedule = gen_schedule(cfg)?;
    simulate(substrate, &schedule, cfg.horizon, solver, rater)
}
