//! Virtual link mapping over least-weight substrate paths.
//!
//! Link weights start from unit prices. Links whose residual bandwidth cannot
//! carry the demand are excluded outright; links loaded above the network mean
//! get a surcharge proportional to how far above the mean they sit, scaled so
//! that the most loaded link pays `1 + λ_weight` times its unit price.
//!
//! Weights are a transient overlay: nothing on the substrate is modified. Each
//! [`map_links`] call keeps its own residual-bandwidth ledger so that virtual
//! links mapped later in the same request see earlier reservations.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netmodel::{LinkId, NodeId, SubstrateNetwork, VirtualNetworkRequest};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinkMapError {
    /// No path with enough bandwidth exists for `virtual_link`. `partial`
    /// carries the paths found before the failure, indexed by virtual link.
    #[error("virtual link {virtual_link} cannot be routed")]
    Unroutable { virtual_link: usize, partial: Vec<Option<Vec<LinkId>>> },
    #[error("node assignment has {found} entries, request has {expected} nodes")]
    BadAssignment { expected: usize, found: usize },
}

/// Whether link weights are adjusted for load.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LoadBalance {
    /// Plain unit prices.
    Disabled,
    /// Surcharge over-used links; the factor lies in (0, 2].
    Weighted { factor: f64 },
}

impl Default for LoadBalance {
    fn default() -> Self {
        LoadBalance::Weighted { factor: 2.0 }
    }
}

/// Per-link weights; `None` marks an excluded link.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightSnapshot {
    pub weights: Vec<Option<f64>>,
}

impl WeightSnapshot {
    pub fn weight(&self, link: LinkId) -> Option<f64> {
        self.weights[link]
    }

    pub fn path_weight(&self, path: &[LinkId]) -> Option<f64> {
        path.iter().try_fold(0.0, |acc, &l| self.weights[l].map(|w| acc + w))
    }
}

/// Load statistics that the surcharge is computed from.
#[derive(Debug, Clone, Copy)]
struct WeightRule {
    demand: f64,
    balance: LoadBalance,
    mean: f64,
    max: f64,
}

impl WeightRule {
    fn new(s: &SubstrateNetwork, bw_free: &[f64], demand: f64, balance: LoadBalance) -> Self {
        let links = s.links();
        let (mut sum, mut max) = (0.0, f64::NEG_INFINITY);
        for (l, &f) in links.iter().zip(bw_free) {
            let u = l.bw_capacity - f;
            sum += u;
            max = max.max(u);
        }
        let mean = if links.is_empty() { 0.0 } else { sum / links.len() as f64 };
        Self { demand, balance, mean, max: if links.is_empty() { 0.0 } else { max } }
    }

    fn weight(&self, s: &SubstrateNetwork, link: LinkId, free: f64) -> Option<f64> {
        if free < self.demand {
            return None;
        }
        let l = s.link(link);
        let u = l.bw_capacity - free;
        Some(match self.balance {
            LoadBalance::Weighted { factor } if u > self.mean && self.max > self.mean => {
                let extra = (u - self.mean) / (self.max - self.mean);
                l.unit_price * (1.0 + factor * extra)
            }
            _ => l.unit_price,
        })
    }
}

/// Weights for routing `bw_demand` given per-link residual bandwidth `bw_free`
/// (indexed like `s.links()`).
pub fn balanced_weights_with(
    s: &SubstrateNetwork,
    bw_free: &[f64],
    bw_demand: f64,
    balance: LoadBalance,
) -> WeightSnapshot {
    let rule = WeightRule::new(s, bw_free, bw_demand, balance);
    WeightSnapshot { weights: bw_free.iter().enumerate().map(|(l, &f)| rule.weight(s, l, f)).collect() }
}

pub fn balanced_weights(s: &SubstrateNetwork, bw_demand: f64, balance: LoadBalance) -> WeightSnapshot {
    let free: Vec<f64> = s.links().iter().map(|l| l.bw_free).collect();
    balanced_weights_with(s, &free, bw_demand, balance)
}

#[derive(PartialEq)]
struct Label {
    dist: f64,
    node: NodeId,
}

impl Eq for Label {}

impl Ord for Label {
    // Reversed for a min-heap.
    fn cmp(&self, other: &Self) -> Ordering {
        other.dist.total_cmp(&self.dist).then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Label {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn node_sequence(pred: &[Option<(NodeId, LinkId)>], mut at: NodeId) -> Vec<NodeId> {
    let mut seq = vec![at];
    while let Some((p, _)) = pred[at] {
        seq.push(p);
        at = p;
    }
    seq.reverse();
    seq
}

/// Least-weight path from `from` to `to` as a list of link ids. Among paths of
/// equal weight the lexicographically smallest node sequence wins.
///
/// The tie-break relies on positive weights: every predecessor on a
/// least-weight path is then settled before the node it leads to.
pub fn least_weight_path(
    s: &SubstrateNetwork,
    weights: &WeightSnapshot,
    from: NodeId,
    to: NodeId,
) -> Option<Vec<LinkId>> {
    search(s, from, to, |l| weights.weight(l))
}

fn search(s: &SubstrateNetwork, from: NodeId, to: NodeId, weight: impl Fn(LinkId) -> Option<f64>) -> Option<Vec<LinkId>> {
    if from == to {
        return Some(Vec::new());
    }
    let n = s.nodes().len();
    let mut dist = vec![f64::INFINITY; n];
    let mut pred: Vec<Option<(NodeId, LinkId)>> = vec![None; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    dist[from] = 0.0;
    heap.push(Label { dist: 0.0, node: from });
    while let Some(Label { dist: d, node: u }) = heap.pop() {
        if done[u] || d > dist[u] {
            continue;
        }
        done[u] = true;
        if u == to {
            let mut links = Vec::new();
            let mut at = to;
            while let Some((p, l)) = pred[at] {
                links.push(l);
                at = p;
            }
            links.reverse();
            return Some(links);
        }
        for &(v, l) in s.neighbors(u) {
            if done[v] {
                continue;
            }
            let Some(w) = weight(l) else { continue };
            let cand = d + w;
            let take = match cand.total_cmp(&dist[v]) {
                Ordering::Less => true,
                Ordering::Equal => pred[v].is_some() && {
                    let mut via_u = node_sequence(&pred, u);
                    via_u.push(v);
                    via_u < node_sequence(&pred, v)
                },
                Ordering::Greater => false,
            };
            if take {
                let improved = cand < dist[v];
                dist[v] = cand;
                pred[v] = Some((u, l));
                if improved {
                    heap.push(Label { dist: cand, node: v });
                }
            }
        }
    }
    None
}

/// Maps every virtual link of `vnr` for the given node assignment.
///
/// Virtual links are handled in non-increasing bandwidth order (stable on
/// index). A path from `prior` is reused when it still fits; otherwise
/// weights are recomputed against the current reservations and a
/// least-weight path is searched. On failure nothing is reserved.
pub fn map_links(
    s: &SubstrateNetwork,
    vnr: &VirtualNetworkRequest,
    assignment: &[NodeId],
    balance: LoadBalance,
    prior: Option<&[Option<Vec<LinkId>>]>,
) -> Result<Vec<Vec<LinkId>>, LinkMapError> {
    if assignment.len() != vnr.nodes.len() {
        return Err(LinkMapError::BadAssignment { expected: vnr.nodes.len(), found: assignment.len() });
    }
    let mut free: Vec<f64> = s.links().iter().map(|l| l.bw_free).collect();
    let mut order: Vec<usize> = (0..vnr.links.len()).collect();
    order.sort_by(|&a, &b| vnr.links[b].bw_demand.total_cmp(&vnr.links[a].bw_demand));

    let mut paths: Vec<Option<Vec<LinkId>>> = vec![None; vnr.links.len()];
    for vl in order {
        let req = &vnr.links[vl];
        let (from, to) = (assignment[req.endpoints.0], assignment[req.endpoints.1]);
        let reusable = prior
            .and_then(|p| p.get(vl))
            .and_then(Option::as_ref)
            .filter(|p| path_fits(s, p, from, to, &free, req.bw_demand));
        let path = match reusable {
            Some(p) => p.clone(),
            None => {
                let rule = WeightRule::new(s, &free, req.bw_demand, balance);
                match search(s, from, to, |l| rule.weight(s, l, free[l])) {
                    Some(p) => p,
                    None => return Err(LinkMapError::Unroutable { virtual_link: vl, partial: paths }),
                }
            }
        };
        for &l in &path {
            free[l] -= req.bw_demand;
        }
        paths[vl] = Some(path);
    }
    Ok(paths.into_iter().map(|p| p.expect("every link mapped")).collect())
}

fn path_fits(s: &SubstrateNetwork, path: &[LinkId], from: NodeId, to: NodeId, free: &[f64], demand: f64) -> bool {
    if path.is_empty() || path.iter().any(|&l| l >= free.len() || free[l] < demand) {
        return false;
    }
    match s.path_nodes(from, path) {
        Ok(nodes) => {
            let mut sorted = nodes.clone();
            sorted.sort_unstable();
            sorted.dedup();
            nodes.last() == Some(&to) && sorted.len() == nodes.len()
        }
        Err(_) => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::tests::{link, node, vnr};

    fn net(n: usize, links: Vec<crate::netmodel::SubstrateLink>) -> SubstrateNetwork {
        SubstrateNetwork::new(1, (0..n).map(|i| node(i, 100.0, 1.0)).collect(), links).unwrap()
    }

    #[test]
    fn mean_usage_keeps_unit_price() {
        let mut s_links = vec![link(0, 1, 10.0, 2.0), link(1, 2, 10.0, 3.0), link(0, 2, 10.0, 5.0)];
        s_links[0].bw_free = 8.0; // used 2
        s_links[1].bw_free = 9.0; // used 1
        s_links[2].bw_free = 10.0; // used 0 -> mean 1
        let s = net(3, s_links);
        let w = balanced_weights(&s, 1.0, LoadBalance::Weighted { factor: 2.0 });
        assert_eq!(w.weight(1), Some(3.0));
        assert_eq!(w.weight(2), Some(5.0));
        // the maximally used link pays 1 + 2 * 1
        assert_eq!(w.weight(0), Some(6.0));
    }

    #[test]
    fn equal_usage_gives_unit_prices_and_exclusion() {
        let mut s_links = vec![link(0, 1, 10.0, 2.0), link(1, 2, 10.0, 3.0)];
        s_links[0].bw_free = 5.0;
        s_links[1].bw_free = 5.0;
        let s = net(3, s_links);
        let w = balanced_weights(&s, 5.0, LoadBalance::Weighted { factor: 2.0 });
        assert_eq!(w.weights, vec![Some(2.0), Some(3.0)]);
        let w = balanced_weights(&s, 6.0, LoadBalance::Weighted { factor: 2.0 });
        assert_eq!(w.weights, vec![None, None]);
    }

    #[test]
    fn triangle_prefers_cheaper_two_hop_route() {
        let s = net(3, vec![link(0, 1, 10.0, 1.0), link(1, 2, 10.0, 1.0), link(0, 2, 10.0, 3.0)]);
        let w = balanced_weights(&s, 1.0, LoadBalance::Disabled);
        assert_eq!(least_weight_path(&s, &w, 0, 2), Some(vec![0, 1]));
    }

    #[test]
    fn ties_break_on_smallest_node_sequence() {
        // 0-1-3 and 0-2-3 both weigh 2.
        let s = net(4, vec![link(0, 2, 10.0, 1.0), link(2, 3, 10.0, 1.0), link(0, 1, 10.0, 1.0), link(1, 3, 10.0, 1.0)]);
        let w = balanced_weights(&s, 1.0, LoadBalance::Disabled);
        let p = least_weight_path(&s, &w, 0, 3).unwrap();
        assert_eq!(s.path_nodes(0, &p).unwrap(), vec![0, 1, 3]);
    }

    #[test]
    fn direct_link_is_single_hop() {
        let s = net(3, vec![link(0, 1, 10.0, 1.0), link(1, 2, 10.0, 1.0), link(0, 2, 10.0, 1.5)]);
        let v = vnr(&[1.0, 1.0], &[(0, 1, 2.0)]);
        let paths = map_links(&s, &v, &[0, 2], LoadBalance::default(), None).unwrap();
        assert_eq!(paths, vec![vec![2]]);
    }

    #[test]
    fn reservations_push_later_links_elsewhere() {
        // Two parallel routes 0-1 (direct) and 0-2-1; direct link only fits one request.
        let s = net(3, vec![link(0, 1, 5.0, 1.0), link(0, 2, 10.0, 1.0), link(1, 2, 10.0, 1.0)]);
        let v = VirtualNetworkRequest {
            links: vec![
                crate::netmodel::VirtualLink { endpoints: (0, 1), bw_demand: 4.0 },
                crate::netmodel::VirtualLink { endpoints: (1, 0), bw_demand: 3.0 },
            ],
            ..vnr(&[1.0, 1.0], &[])
        };
        let paths = map_links(&s, &v, &[0, 1], LoadBalance::Disabled, None).unwrap();
        assert_eq!(paths[0], vec![0]);
        assert_eq!(paths[1], vec![2, 1]);
    }

    #[test]
    fn unroutable_demand_fails_without_side_effects() {
        let s = net(3, vec![link(0, 1, 5.0, 1.0), link(1, 2, 5.0, 1.0)]);
        let before = s.clone();
        let v = vnr(&[1.0, 1.0, 1.0], &[(0, 1, 3.0), (1, 2, 6.0)]);
        let err = map_links(&s, &v, &[0, 1, 2], LoadBalance::default(), None).unwrap_err();
        assert!(matches!(err, LinkMapError::Unroutable { virtual_link: 1, .. }));
        assert_eq!(s, before);
    }

    #[test]
    fn prior_paths_are_reused_when_they_fit() {
        let s = net(3, vec![link(0, 1, 10.0, 1.0), link(1, 2, 10.0, 1.0), link(0, 2, 10.0, 1.0)]);
        let v = vnr(&[1.0, 1.0], &[(0, 1, 2.0)]);
        let prior = vec![Some(vec![0, 1])];
        let paths = map_links(&s, &v, &[0, 2], LoadBalance::default(), Some(&prior)).unwrap();
        assert_eq!(paths, vec![vec![0, 1]]);
        // a prior path that no longer matches the endpoints is ignored
        let paths = map_links(&s, &v, &[1, 2], LoadBalance::default(), Some(&prior)).unwrap();
        assert_eq!(paths, vec![vec![1]]);
    }
}
