//! Seeded generation of multi-domain substrates, virtual network requests and
//! Poisson arrival schedules.
//!
//! Each domain is an Erdős–Rényi graph over a contiguous block of node ids.
//! Every pair of domains is joined by one guaranteed cross-domain link between
//! uniformly chosen border nodes; each node additionally gets an extra link
//! into each other domain with probability `connect_prob / 10`.
//!
//! CPU, bandwidth and demand draws are integers so that resource bookkeeping
//! stays exact in floating point.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netmodel::{
    NetError, SubstrateLink, SubstrateNetwork, SubstrateNode, VirtualLink, VirtualNetworkRequest, VirtualNode,
};
use crate::seeding::{derive_seed, rng_from};

const MAX_REGENERATIONS: u64 = 100;
const ARRIVAL_WINDOW: f64 = 100.0;

#[derive(Debug, Error)]
pub enum GenError {
    #[error("invalid scenario config: {0}")]
    InvalidConfig(String),
    #[error("could not build a connected substrate: {0}")]
    Disconnected(String),
    #[error(transparent)]
    Net(#[from] NetError),
}

/// Inclusive numeric range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Span {
    pub min: f64,
    pub max: f64,
}

impl Span {
    pub const fn new(min: f64, max: f64) -> Self {
        Self { min, max }
    }

    pub fn is_valid(&self) -> bool {
        self.min.is_finite() && self.max.is_finite() && self.min <= self.max
    }

    pub fn contains(&self, x: f64) -> bool {
        self.min <= x && x <= self.max
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        if self.min == self.max {
            self.min
        } else {
            rng.gen_range(self.min..=self.max)
        }
    }

    /// Uniform integer in `[ceil(min), floor(max)]`, returned as `f64`.
    pub fn sample_int<R: Rng>(&self, rng: &mut R) -> f64 {
        let lo = self.min.ceil() as i64;
        let hi = (self.max.floor() as i64).max(lo);
        rng.gen_range(lo..=hi) as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountRange {
    pub min: usize,
    pub max: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub domain_count: usize,
    pub nodes_per_domain: usize,
    pub cpu_range: Span,
    pub node_delay_range: Span,
    pub link_delay_range: Span,
    pub plr_range: Span,
    pub unit_price_range: Span,
    /// Bandwidth of links inside one domain.
    pub intra_bw_range: Span,
    /// Bandwidth of links between domains.
    pub inter_bw_range: Span,
    pub connect_prob: f64,
    pub vn_node_range: CountRange,
    pub vn_demand_range: Span,
    pub arrival_mean_per_100: f64,
    pub vn_lifetime: f64,
    pub horizon: f64,
    pub rng_seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            domain_count: 4,
            nodes_per_domain: 30,
            cpu_range: Span::new(100.0, 300.0),
            node_delay_range: Span::new(1.0, 5.0),
            link_delay_range: Span::new(1.0, 5.0),
            plr_range: Span::new(0.01, 0.5),
            unit_price_range: Span::new(1.0, 10.0),
            intra_bw_range: Span::new(1000.0, 3000.0),
            inter_bw_range: Span::new(3000.0, 6000.0),
            connect_prob: 0.5,
            vn_node_range: CountRange { min: 5, max: 10 },
            vn_demand_range: Span::new(1.0, 10.0),
            arrival_mean_per_100: 10.0,
            vn_lifetime: 1000.0,
            horizon: 10_000.0,
            rng_seed: 1,
        }
    }
}

impl ScenarioConfig {
    /// Small scenario used for quick runs: 2 domains of 10 nodes, horizon 5000.
    pub fn desk_scale() -> Self {
        Self { domain_count: 2, nodes_per_domain: 10, horizon: 5_000.0, ..Self::default() }
    }

    /// Multiplies the horizon and the per-domain node count.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            nodes_per_domain: ((self.nodes_per_domain as f64 * factor).round() as usize).max(2),
            horizon: self.horizon * factor,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<(), GenError> {
        let bad = |m: &str| Err(GenError::InvalidConfig(m.to_string()));
        if self.domain_count == 0 || self.nodes_per_domain == 0 {
            return bad("domain_count and nodes_per_domain must be positive");
        }
        let spans = [
            ("cpu_range", self.cpu_range),
            ("node_delay_range", self.node_delay_range),
            ("link_delay_range", self.link_delay_range),
            ("plr_range", self.plr_range),
            ("unit_price_range", self.unit_price_range),
            ("intra_bw_range", self.intra_bw_range),
            ("inter_bw_range", self.inter_bw_range),
            ("vn_demand_range", self.vn_demand_range),
        ];
        for (name, span) in spans {
            if !span.is_valid() || span.min < 0.0 {
                return Err(GenError::InvalidConfig(format!("{name} must be a non-empty non-negative range")));
            }
        }
        if self.plr_range.max > 1.0 {
            return bad("plr_range must lie in [0, 1]");
        }
        if self.unit_price_range.min <= 0.0 {
            return bad("unit prices must be positive");
        }
        if self.vn_demand_range.min.ceil() > self.vn_demand_range.max.floor() {
            return bad("vn_demand_range contains no integer");
        }
        if !(self.connect_prob > 0.0 && self.connect_prob <= 1.0) {
            return bad("connect_prob must lie in (0, 1]");
        }
        if self.vn_node_range.min < 1 || self.vn_node_range.min > self.vn_node_range.max {
            return bad("vn_node_range must be a non-empty range of positive counts");
        }
        if !(self.arrival_mean_per_100 >= 0.0) || !(self.vn_lifetime > 0.0) || !(self.horizon >= 0.0) {
            return bad("arrival rate, lifetime and horizon must be non-negative (lifetime positive)");
        }
        Ok(())
    }

    pub fn node_count(&self) -> usize {
        self.domain_count * self.nodes_per_domain
    }
}

pub fn gen_substrate(cfg: &ScenarioConfig) -> Result<SubstrateNetwork, GenError> {
    cfg.validate()?;
    let mut last = None;
    for attempt in 0..MAX_REGENERATIONS {
        let mut rng = rng_from(derive_seed(cfg.rng_seed, 0x5B57_0000 + attempt));
        let (nodes, links) = draw_substrate(cfg, &mut rng);
        let net = SubstrateNetwork::new(cfg.domain_count, nodes, links)?;
        if net.is_connected() {
            return Ok(net);
        }
        last = Some((net, rng));
    }
    let (net, mut rng) = last.expect("at least one attempt");
    bridge_components(cfg, net, &mut rng)
}

fn draw_substrate(cfg: &ScenarioConfig, rng: &mut ChaCha8Rng) -> (Vec<SubstrateNode>, Vec<SubstrateLink>) {
    let per = cfg.nodes_per_domain;
    let nodes: Vec<SubstrateNode> = (0..cfg.node_count())
        .map(|id| {
            let cpu = cfg.cpu_range.sample_int(rng);
            SubstrateNode {
                id,
                domain: id / per,
                cpu_capacity: cpu,
                cpu_free: cpu,
                unit_price: cfg.unit_price_range.sample(rng),
                delay: cfg.node_delay_range.sample(rng),
                plr: cfg.plr_range.sample(rng),
            }
        })
        .collect();
    let mut links = Vec::new();
    let mut new_link = |a: usize, b: usize, bw: Span, rng: &mut ChaCha8Rng| {
        let cap = bw.sample_int(rng);
        links.push(SubstrateLink {
            endpoints: (a.min(b), a.max(b)),
            bw_capacity: cap,
            bw_free: cap,
            unit_price: cfg.unit_price_range.sample(rng),
            delay: cfg.link_delay_range.sample(rng),
        });
    };
    for d in 0..cfg.domain_count {
        let base = d * per;
        for i in 0..per {
            for j in (i + 1)..per {
                if rng.gen_bool(cfg.connect_prob) {
                    new_link(base + i, base + j, cfg.intra_bw_range, rng);
                }
            }
        }
    }
    let extra_prob = cfg.connect_prob / 10.0;
    for d1 in 0..cfg.domain_count {
        for d2 in (d1 + 1)..cfg.domain_count {
            let mut pairs = std::collections::BTreeSet::new();
            pairs.insert((d1 * per + rng.gen_range(0..per), d2 * per + rng.gen_range(0..per)));
            for i in 0..per {
                if rng.gen_bool(extra_prob) {
                    pairs.insert((d1 * per + i, d2 * per + rng.gen_range(0..per)));
                }
            }
            for j in 0..per {
                if rng.gen_bool(extra_prob) {
                    pairs.insert((d1 * per + rng.gen_range(0..per), d2 * per + j));
                }
            }
            for (a, b) in pairs {
                new_link(a, b, cfg.inter_bw_range, rng);
            }
        }
    }
    (nodes, links)
}

/// Joins consecutive components with one link between their smallest members.
fn bridge_components(
    cfg: &ScenarioConfig,
    net: SubstrateNetwork,
    rng: &mut ChaCha8Rng,
) -> Result<SubstrateNetwork, GenError> {
    let comps = net.components();
    let domains = net.domain_count();
    let nodes = net.nodes().to_vec();
    let mut links = net.links().to_vec();
    for pair in comps.windows(2) {
        let (a, b) = (pair[0][0], pair[1][0]);
        let span = if nodes[a].domain == nodes[b].domain { cfg.intra_bw_range } else { cfg.inter_bw_range };
        let cap = span.sample_int(rng);
        links.push(SubstrateLink {
            endpoints: (a, b),
            bw_capacity: cap,
            bw_free: cap,
            unit_price: cfg.unit_price_range.sample(rng),
            delay: cfg.link_delay_range.sample(rng),
        });
    }
    let bridged = SubstrateNetwork::new(domains, nodes, links)?;
    if bridged.is_connected() {
        Ok(bridged)
    } else {
        Err(GenError::Disconnected(format!("{} components after bridging", bridged.components().len())))
    }
}

/// Random connected request: a random spanning tree plus extra edges with
/// probability `connect_prob`. Arrival is 0; the caller sets it.
pub fn gen_vnr(cfg: &ScenarioConfig, seed: u64) -> VirtualNetworkRequest {
    let mut rng = rng_from(seed);
    let n = rng.gen_range(cfg.vn_node_range.min..=cfg.vn_node_range.max);
    let nodes = (0..n).map(|_| VirtualNode { cpu_demand: cfg.vn_demand_range.sample_int(&mut rng) }).collect();
    let mut edges = std::collections::BTreeSet::new();
    for i in 1..n {
        let j = rng.gen_range(0..i);
        edges.insert((j, i));
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if !edges.contains(&(i, j)) && rng.gen_bool(cfg.connect_prob) {
                edges.insert((i, j));
            }
        }
    }
    let links = edges
        .into_iter()
        .map(|endpoints| VirtualLink { endpoints, bw_demand: cfg.vn_demand_range.sample_int(&mut rng) })
        .collect();
    VirtualNetworkRequest { id: 0, nodes, links, arrival: 0.0, lifetime: cfg.vn_lifetime }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrivalEvent {
    pub time: f64,
    pub request: VirtualNetworkRequest,
    pub expiry: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ArrivalSchedule {
    pub events: Vec<ArrivalEvent>,
}

impl ArrivalSchedule {
    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

/// Poisson arrivals per 100-time-unit window, uniformly placed in the window.
/// A trailing partial window gets a proportionally reduced mean.
pub fn gen_schedule(cfg: &ScenarioConfig) -> Result<ArrivalSchedule, GenError> {
    cfg.validate()?;
    let mut rng = rng_from(derive_seed(cfg.rng_seed, 0xA441));
    let mut times = Vec::new();
    let windows = (cfg.horizon / ARRIVAL_WINDOW).ceil() as u64;
    for w in 0..windows {
        let start = w as f64 * ARRIVAL_WINDOW;
        let end = (start + ARRIVAL_WINDOW).min(cfg.horizon);
        let mean = cfg.arrival_mean_per_100 * (end - start) / ARRIVAL_WINDOW;
        if mean <= 0.0 || end <= start {
            continue;
        }
        let count = Poisson::new(mean).expect("positive mean").sample(&mut rng) as u64;
        let mut window: Vec<f64> = (0..count).map(|_| rng.gen_range(start..end)).collect();
        window.sort_by(f64::total_cmp);
        times.extend(window);
    }
    let events = times
        .into_iter()
        .enumerate()
        .map(|(i, time)| {
            let mut request = gen_vnr(cfg, derive_seed(cfg.rng_seed, 0x7000_0000_0000 + i as u64));
            request.id = i as u64;
            request.arrival = time;
            ArrivalEvent { time, expiry: time + request.lifetime, request }
        })
        .collect();
    Ok(ArrivalSchedule { events })
}
