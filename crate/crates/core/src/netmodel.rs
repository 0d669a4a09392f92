//! Substrate and virtual network model.
//!
//! A substrate network is an undirected multi-domain graph whose nodes offer CPU
//! and whose links offer bandwidth. Residual resources live next to capacities
//! and are only changed through [`SubstrateNetwork::allocate`] and
//! [`SubstrateNetwork::release`].
//!
//! Paths are stored as sequences of substrate link indices. A plan is "complete"
//! when it carries one path per virtual link.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type NodeId = usize;
pub type LinkId = usize;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetError {
    #[error("path is empty")]
    EmptyPath,
    #[error("path is not connected at position {0}")]
    DisconnectedPath(usize),
    #[error("unknown substrate link {0}")]
    UnknownLink(LinkId),
    #[error("unknown substrate node {0}")]
    UnknownNode(NodeId),
    #[error("plan is incomplete: {0}")]
    IncompletePlan(String),
    #[error("plan is infeasible: {0:?}")]
    Infeasible(Vec<Violation>),
    #[error("plan for request {0} was never allocated")]
    NotAllocated(u64),
    #[error("invalid network: {0}")]
    InvalidNetwork(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubstrateNode {
    pub id: NodeId,
    pub domain: usize,
    pub cpu_capacity: f64,
    pub cpu_free: f64,
    pub unit_price: f64,
    pub delay: f64,
    pub plr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubstrateLink {
    /// Canonical ordering: `endpoints.0 < endpoints.1`.
    pub endpoints: (NodeId, NodeId),
    pub bw_capacity: f64,
    pub bw_free: f64,
    pub unit_price: f64,
    pub delay: f64,
}

impl SubstrateLink {
    pub fn other(&self, node: NodeId) -> Option<NodeId> {
        let (a, b) = self.endpoints;
        if node == a {
            Some(b)
        } else if node == b {
            Some(a)
        } else {
            None
        }
    }

    /// Bandwidth currently consumed on this link.
    pub fn used(&self) -> f64 {
        self.bw_capacity - self.bw_free
    }
}

/// Resources held by one allocated plan, kept so that release is an exact inverse.
#[derive(Debug, Clone, PartialEq)]
struct LedgerEntry {
    request: u64,
    nodes: Vec<(NodeId, f64)>,
    links: Vec<(LinkId, f64)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SubstrateRepr {
    domain_count: usize,
    nodes: Vec<SubstrateNode>,
    links: Vec<SubstrateLink>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SubstrateRepr", into = "SubstrateRepr")]
pub struct SubstrateNetwork {
    domain_count: usize,
    nodes: Vec<SubstrateNode>,
    links: Vec<SubstrateLink>,
    adjacency: Vec<Vec<(NodeId, LinkId)>>,
    link_index: BTreeMap<(NodeId, NodeId), LinkId>,
    ledger: Vec<LedgerEntry>,
}

impl TryFrom<SubstrateRepr> for SubstrateNetwork {
    type Error = NetError;

    fn try_from(repr: SubstrateRepr) -> Result<Self, Self::Error> {
        SubstrateNetwork::new(repr.domain_count, repr.nodes, repr.links)
    }
}

impl From<SubstrateNetwork> for SubstrateRepr {
    fn from(net: SubstrateNetwork) -> Self {
        SubstrateRepr {
            domain_count: net.domain_count,
            nodes: net.nodes,
            links: net.links,
        }
    }
}

impl SubstrateNetwork {
    /// Validates the graph and builds adjacency. Link endpoints are canonicalized.
    pub fn new(
        domain_count: usize,
        nodes: Vec<SubstrateNode>,
        mut links: Vec<SubstrateLink>,
    ) -> Result<Self, NetError> {
        let invalid = |msg: String| Err(NetError::InvalidNetwork(msg));
        let mut last_domain = 0;
        for (i, n) in nodes.iter().enumerate() {
            if n.id != i {
                return invalid(format!("node at position {i} has id {}", n.id));
            }
            if n.domain >= domain_count.max(1) {
                return invalid(format!("node {i} has domain {} >= {domain_count}", n.domain));
            }
            if n.domain < last_domain {
                return invalid(format!("node ids are not contiguous per domain at node {i}"));
            }
            last_domain = n.domain;
            if !(0.0..=n.cpu_capacity).contains(&n.cpu_free) {
                return invalid(format!("node {i} cpu_free out of [0, capacity]"));
            }
            if !(0.0..=1.0).contains(&n.plr) {
                return invalid(format!("node {i} plr out of [0, 1]"));
            }
            if n.unit_price < 0.0 || !n.unit_price.is_finite() {
                return invalid(format!("node {i} unit price must be non-negative"));
            }
        }
        let mut adjacency = vec![Vec::new(); nodes.len()];
        let mut link_index = BTreeMap::new();
        for (id, l) in links.iter_mut().enumerate() {
            let (a, b) = l.endpoints;
            if a == b {
                return invalid(format!("link {id} is a self-loop"));
            }
            if a >= nodes.len() || b >= nodes.len() {
                return invalid(format!("link {id} references a missing node"));
            }
            let key = (a.min(b), a.max(b));
            l.endpoints = key;
            if link_index.insert(key, id).is_some() {
                return invalid(format!("link {id} duplicates {key:?}"));
            }
            if !(0.0..=l.bw_capacity).contains(&l.bw_free) {
                return invalid(format!("link {id} bw_free out of [0, capacity]"));
            }
            if l.unit_price < 0.0 || !l.unit_price.is_finite() {
                return invalid(format!("link {id} unit price must be non-negative"));
            }
            adjacency[key.0].push((key.1, id));
            adjacency[key.1].push((key.0, id));
        }
        for adj in &mut adjacency {
            adj.sort_unstable();
        }
        Ok(Self {
            domain_count,
            nodes,
            links,
            adjacency,
            link_index,
            ledger: Vec::new(),
        })
    }

    pub fn domain_count(&self) -> usize {
        self.domain_count
    }

    pub fn nodes(&self) -> &[SubstrateNode] {
        &self.nodes
    }

    pub fn links(&self) -> &[SubstrateLink] {
        &self.links
    }

    pub fn node(&self, id: NodeId) -> &SubstrateNode {
        &self.nodes[id]
    }

    pub fn link(&self, id: LinkId) -> &SubstrateLink {
        &self.links[id]
    }

    /// Neighbours of `node` with the connecting link, sorted by neighbour id.
    pub fn neighbors(&self, node: NodeId) -> &[(NodeId, LinkId)] {
        &self.adjacency[node]
    }

    pub fn link_between(&self, a: NodeId, b: NodeId) -> Option<LinkId> {
        self.link_index.get(&(a.min(b), a.max(b))).copied()
    }

    pub fn active_allocations(&self) -> usize {
        self.ledger.len()
    }

    pub fn is_connected(&self) -> bool {
        self.components().len() <= 1
    }

    /// Connected components, each sorted, ordered by smallest member.
    pub fn components(&self) -> Vec<Vec<NodeId>> {
        let mut seen = vec![false; self.nodes.len()];
        let mut out = Vec::new();
        for start in 0..self.nodes.len() {
            if seen[start] {
                continue;
            }
            seen[start] = true;
            let mut stack = vec![start];
            let mut comp = Vec::new();
            while let Some(u) = stack.pop() {
                comp.push(u);
                for &(w, _) in &self.adjacency[u] {
                    if !seen[w] {
                        seen[w] = true;
                        stack.push(w);
                    }
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }

    /// Walks a link sequence from `start` and returns the visited nodes.
    pub fn path_nodes(&self, start: NodeId, path: &[LinkId]) -> Result<Vec<NodeId>, NetError> {
        if start >= self.nodes.len() {
            return Err(NetError::UnknownNode(start));
        }
        let mut nodes = Vec::with_capacity(path.len() + 1);
        nodes.push(start);
        let mut at = start;
        for (i, &l) in path.iter().enumerate() {
            let link = self.links.get(l).ok_or(NetError::UnknownLink(l))?;
            at = link.other(at).ok_or(NetError::DisconnectedPath(i))?;
            nodes.push(at);
        }
        Ok(nodes)
    }

    /// Aggregation unit price of a path: the sum of its links' unit prices.
    pub fn aggregate_unit_price(&self, path: &[LinkId]) -> Result<f64, NetError> {
        let first = *path.first().ok_or(NetError::EmptyPath)?;
        let first_link = self.links.get(first).ok_or(NetError::UnknownLink(first))?;
        // Either orientation of the first link may start the walk.
        let (a, b) = first_link.endpoints;
        self.path_nodes(a, path).or_else(|_| self.path_nodes(b, path))?;
        Ok(path.iter().map(|&l| self.links[l].unit_price).sum())
    }

    /// Lists every violated capacity/mapping constraint of `plan`.
    ///
    /// Bandwidth is checked per substrate link against the summed demand of all
    /// virtual links of the request routed over it. When `plan.link_paths` is
    /// empty only node constraints are checked.
    pub fn check_constraints(&self, vnr: &VirtualNetworkRequest, plan: &EmbeddingPlan) -> Verdict {
        let mut violations = Vec::new();
        if plan.node_assignment.len() != vnr.nodes.len() {
            violations.push(Violation::WrongAssignmentLength {
                expected: vnr.nodes.len(),
                found: plan.node_assignment.len(),
            });
            return Verdict { violations };
        }
        let mut owners: BTreeMap<NodeId, Vec<usize>> = BTreeMap::new();
        for (vn, (&sn, demand)) in plan.node_assignment.iter().zip(&vnr.nodes).enumerate() {
            let Some(node) = self.nodes.get(sn) else {
                violations.push(Violation::UnknownSubstrateNode { virtual_node: vn, substrate_node: sn });
                continue;
            };
            owners.entry(sn).or_default().push(vn);
            if demand.cpu_demand > node.cpu_free {
                violations.push(Violation::CpuExceeded {
                    virtual_node: vn,
                    substrate_node: sn,
                    demand: demand.cpu_demand,
                    free: node.cpu_free,
                });
            }
        }
        for (sn, vns) in owners {
            if vns.len() > 1 {
                violations.push(Violation::DuplicateSubstrateNode { substrate_node: sn, virtual_nodes: vns });
            }
        }
        if plan.link_paths.is_empty() {
            return Verdict { violations };
        }
        if plan.link_paths.len() != vnr.links.len() {
            violations.push(Violation::WrongPathCount {
                expected: vnr.links.len(),
                found: plan.link_paths.len(),
            });
            return Verdict { violations };
        }
        let mut load: BTreeMap<LinkId, f64> = BTreeMap::new();
        for (vl, (path, req)) in plan.link_paths.iter().zip(&vnr.links).enumerate() {
            let (va, vb) = req.endpoints;
            let (Some(&sa), Some(&sb)) = (plan.node_assignment.get(va), plan.node_assignment.get(vb)) else {
                violations.push(Violation::EndpointMismatch { virtual_link: vl });
                continue;
            };
            match self.path_nodes(sa, path) {
                Ok(walk) => {
                    if path.is_empty() || walk.last() != Some(&sb) {
                        violations.push(Violation::EndpointMismatch { virtual_link: vl });
                    }
                    let distinct: BTreeSet<_> = walk.iter().collect();
                    if distinct.len() != walk.len() {
                        violations.push(Violation::PathNotSimple { virtual_link: vl });
                    }
                }
                Err(_) => violations.push(Violation::EndpointMismatch { virtual_link: vl }),
            }
            for &l in path {
                if l < self.links.len() {
                    *load.entry(l).or_default() += req.bw_demand;
                }
            }
        }
        for (l, demand) in load {
            let free = self.links[l].bw_free;
            if demand > free {
                violations.push(Violation::BandwidthExceeded { substrate_link: l, demand, free });
            }
        }
        Verdict { violations }
    }

    /// Objective value of a complete plan: CPU and bandwidth priced at unit prices.
    pub fn quotation(&self, vnr: &VirtualNetworkRequest, plan: &EmbeddingPlan) -> Result<f64, NetError> {
        plan.ensure_complete(vnr)?;
        let mut total = 0.0;
        for (&sn, n) in plan.node_assignment.iter().zip(&vnr.nodes) {
            total += n.cpu_demand * self.nodes.get(sn).ok_or(NetError::UnknownNode(sn))?.unit_price;
        }
        for (path, l) in plan.link_paths.iter().zip(&vnr.links) {
            total += l.bw_demand * self.aggregate_unit_price(path)?;
        }
        Ok(total)
    }

    /// Total delay (nodes plus every path link) and summed node packet-loss rate.
    pub fn qos_totals(&self, plan: &EmbeddingPlan) -> (f64, f64) {
        let node_delay: f64 = plan.node_assignment.iter().map(|&n| self.nodes[n].delay).sum();
        let link_delay: f64 = plan.link_paths.iter().flatten().map(|&l| self.links[l].delay).sum();
        let plr = plan.node_assignment.iter().map(|&n| self.nodes[n].plr).sum();
        (node_delay + link_delay, plr)
    }

    /// Reserves the plan's resources. Atomic: nothing changes on error.
    pub fn allocate(&mut self, vnr: &VirtualNetworkRequest, plan: &EmbeddingPlan) -> Result<(), NetError> {
        plan.ensure_complete(vnr)?;
        let verdict = self.check_constraints(vnr, plan);
        if !verdict.is_feasible() {
            return Err(NetError::Infeasible(verdict.violations));
        }
        let nodes: Vec<(NodeId, f64)> = plan
            .node_assignment
            .iter()
            .zip(&vnr.nodes)
            .map(|(&sn, n)| (sn, n.cpu_demand))
            .collect();
        let links: Vec<(LinkId, f64)> = plan
            .link_paths
            .iter()
            .zip(&vnr.links)
            .flat_map(|(path, l)| path.iter().map(move |&sl| (sl, l.bw_demand)))
            .collect();
        for &(sn, d) in &nodes {
            self.nodes[sn].cpu_free -= d;
        }
        for &(sl, d) in &links {
            self.links[sl].bw_free -= d;
        }
        self.ledger.push(LedgerEntry { request: vnr.id, nodes, links });
        Ok(())
    }

    /// Exact inverse of [`allocate`](Self::allocate) for the same request and plan.
    pub fn release(&mut self, vnr: &VirtualNetworkRequest, plan: &EmbeddingPlan) -> Result<(), NetError> {
        let pos = self
            .ledger
            .iter()
            .position(|e| {
                e.request == vnr.id
                    && e.nodes.len() == plan.node_assignment.len()
                    && e.nodes.iter().zip(&plan.node_assignment).all(|(a, &b)| a.0 == b)
                    && e.links.iter().map(|x| x.0).eq(plan.link_paths.iter().flatten().copied())
            })
            .ok_or(NetError::NotAllocated(vnr.id))?;
        let entry = self.ledger.remove(pos);
        // Reverse order restores the exact bit pattern of the residuals.
        for &(sl, d) in entry.links.iter().rev() {
            let link = &mut self.links[sl];
            link.bw_free = (link.bw_free + d).min(link.bw_capacity);
        }
        for &(sn, d) in entry.nodes.iter().rev() {
            let node = &mut self.nodes[sn];
            node.cpu_free = (node.cpu_free + d).min(node.cpu_capacity);
        }
        Ok(())
    }

    /// Variance of consumed bandwidth over all substrate links.
    pub fn link_load_variance(&self) -> f64 {
        let used: Vec<f64> = self.links.iter().map(SubstrateLink::used).collect();
        variance(&used)
    }
}

/// Population variance (divides by the number of values). Zero for empty input.
pub fn variance(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VirtualNode {
    pub cpu_demand: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VirtualLink {
    pub endpoints: (usize, usize),
    pub bw_demand: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VirtualNetworkRequest {
    pub id: u64,
    pub nodes: Vec<VirtualNode>,
    pub links: Vec<VirtualLink>,
    pub arrival: f64,
    pub lifetime: f64,
}

impl VirtualNetworkRequest {
    pub fn is_connected(&self) -> bool {
        let n = self.nodes.len();
        if n == 0 {
            return false;
        }
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(u) = stack.pop() {
            for l in &self.links {
                let w = match l.endpoints {
                    (a, b) if a == u => b,
                    (a, b) if b == u => a,
                    _ => continue,
                };
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// Revenue is independent of the plan: summed CPU plus summed bandwidth.
    pub fn revenue(&self) -> f64 {
        self.nodes.iter().map(|n| n.cpu_demand).sum::<f64>() + self.links.iter().map(|l| l.bw_demand).sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct EmbeddingPlan {
    pub node_assignment: Vec<NodeId>,
    /// One path per virtual link, in the request's link order. Empty while only
    /// nodes are mapped.
    pub link_paths: Vec<Vec<LinkId>>,
}

impl EmbeddingPlan {
    pub fn nodes_only(node_assignment: Vec<NodeId>) -> Self {
        Self { node_assignment, link_paths: Vec::new() }
    }

    fn ensure_complete(&self, vnr: &VirtualNetworkRequest) -> Result<(), NetError> {
        if self.node_assignment.len() != vnr.nodes.len() {
            return Err(NetError::IncompletePlan(format!(
                "{} of {} virtual nodes assigned",
                self.node_assignment.len(),
                vnr.nodes.len()
            )));
        }
        if self.link_paths.len() != vnr.links.len() {
            return Err(NetError::IncompletePlan(format!(
                "{} of {} virtual links mapped",
                self.link_paths.len(),
                vnr.links.len()
            )));
        }
        Ok(())
    }

    /// `(revenue, cost)`; cost counts each link's bandwidth once per hop.
    pub fn revenue_and_cost(&self, vnr: &VirtualNetworkRequest) -> Result<(f64, f64), NetError> {
        self.ensure_complete(vnr)?;
        let cpu: f64 = vnr.nodes.iter().map(|n| n.cpu_demand).sum();
        let bw: f64 = vnr.links.iter().map(|l| l.bw_demand).sum();
        let hop_bw: f64 = vnr
            .links
            .iter()
            .zip(&self.link_paths)
            .map(|(l, p)| l.bw_demand * p.len() as f64)
            .sum();
        Ok((cpu + bw, cpu + hop_bw))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Violation {
    WrongAssignmentLength { expected: usize, found: usize },
    WrongPathCount { expected: usize, found: usize },
    UnknownSubstrateNode { virtual_node: usize, substrate_node: NodeId },
    CpuExceeded { virtual_node: usize, substrate_node: NodeId, demand: f64, free: f64 },
    DuplicateSubstrateNode { substrate_node: NodeId, virtual_nodes: Vec<usize> },
    EndpointMismatch { virtual_link: usize },
    PathNotSimple { virtual_link: usize },
    BandwidthExceeded { substrate_link: LinkId, demand: f64, free: f64 },
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Verdict {
    pub violations: Vec<Violation>,
}

impl Verdict {
    pub fn is_feasible(&self) -> bool {
        self.violations.is_empty()
    }
}
