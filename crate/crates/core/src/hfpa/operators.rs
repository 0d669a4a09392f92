//! Population operators over node-assignment genes.
//!
//! A gene vector maps virtual node `k` to substrate node `genes[k]`. A gene
//! vector is feasible when it is injective and every substrate node has enough
//! free CPU for its virtual node. Out-of-range values (e.g. after
//! self-pollination steps off either end of the id space) are infeasible and
//! get re-rolled by [`feasibility_repair`].

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::netmodel::{NodeId, SubstrateNetwork, VirtualNetworkRequest};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Individual {
    pub genes: Vec<NodeId>,
    /// Lower is better.
    pub fitness: f64,
    /// Remaining iterations before the individual is recycled.
    pub lifespan: u32,
}

impl Individual {
    pub fn new(genes: Vec<NodeId>, fitness: f64) -> Self {
        Self { genes, fitness, lifespan: 0 }
    }
}

fn fits(s: &SubstrateNetwork, v: &VirtualNetworkRequest, vn: usize, sn: NodeId) -> bool {
    sn < s.nodes().len() && s.node(sn).cpu_free >= v.nodes[vn].cpu_demand
}

/// Injective and CPU-feasible.
pub fn is_feasible(s: &SubstrateNetwork, v: &VirtualNetworkRequest, genes: &[NodeId]) -> bool {
    if genes.len() != v.nodes.len() {
        return false;
    }
    let mut used = vec![false; s.nodes().len()];
    for (vn, &sn) in genes.iter().enumerate() {
        if !fits(s, v, vn, sn) || used[sn] {
            return false;
        }
        used[sn] = true;
    }
    true
}

/// Virtual node indices, largest CPU demand first (stable).
fn by_demand(v: &VirtualNetworkRequest, positions: &mut [usize]) {
    positions.sort_by(|&a, &b| v.nodes[b].cpu_demand.total_cmp(&v.nodes[a].cpu_demand));
}

fn pick_free<R: Rng>(
    s: &SubstrateNetwork,
    v: &VirtualNetworkRequest,
    vn: usize,
    used: &[bool],
    avoid: Option<NodeId>,
    rng: &mut R,
) -> Option<NodeId> {
    let candidates: Vec<NodeId> =
        (0..s.nodes().len()).filter(|&sn| !used[sn] && Some(sn) != avoid && fits(s, v, vn, sn)).collect();
    candidates.choose(rng).copied()
}

/// A uniformly random feasible assignment, or `None` when the greedy draw
/// (most demanding virtual node first) runs out of candidates.
pub fn random_assignment<R: Rng>(s: &SubstrateNetwork, v: &VirtualNetworkRequest, rng: &mut R) -> Option<Vec<NodeId>> {
    let mut order: Vec<usize> = (0..v.nodes.len()).collect();
    by_demand(v, &mut order);
    let mut used = vec![false; s.nodes().len()];
    let mut genes = vec![0; v.nodes.len()];
    for vn in order {
        let sn = pick_free(s, v, vn, &used, None, rng)?;
        used[sn] = true;
        genes[vn] = sn;
    }
    Some(genes)
}

/// Re-rolls duplicate, out-of-range and CPU-violating genes uniformly over the
/// free feasible substrate nodes. The first occurrence of a duplicated node
/// keeps it. Returns `None` when some position has no candidate left.
pub fn feasibility_repair<R: Rng>(
    genes: &[NodeId],
    s: &SubstrateNetwork,
    v: &VirtualNetworkRequest,
    rng: &mut R,
) -> Option<Vec<NodeId>> {
    if genes.len() != v.nodes.len() {
        return None;
    }
    let mut used = vec![false; s.nodes().len()];
    let mut bad = Vec::new();
    for (vn, &sn) in genes.iter().enumerate() {
        if fits(s, v, vn, sn) && !used[sn] {
            used[sn] = true;
        } else {
            bad.push(vn);
        }
    }
    if bad.is_empty() {
        return Some(genes.to_vec());
    }
    by_demand(v, &mut bad);
    let mut out = genes.to_vec();
    for vn in bad {
        let sn = pick_free(s, v, vn, &used, None, rng)?;
        used[sn] = true;
        out[vn] = sn;
    }
    Some(out)
}

/// Swaps genes at every position where the mask is set.
pub fn chaos_crossover(a: &[NodeId], b: &[NodeId], mask: &[bool]) -> (Vec<NodeId>, Vec<NodeId>) {
    assert_eq!(a.len(), b.len(), "parents differ in length");
    assert_eq!(a.len(), mask.len(), "mask length differs from genes");
    let mut c1 = a.to_vec();
    let mut c2 = b.to_vec();
    for (i, &m) in mask.iter().enumerate() {
        if m {
            std::mem::swap(&mut c1[i], &mut c2[i]);
        }
    }
    (c1, c2)
}

/// Exchanges tails from position `cut` on.
pub fn single_point_crossover(a: &[NodeId], b: &[NodeId], cut: usize) -> (Vec<NodeId>, Vec<NodeId>) {
    let mask: Vec<bool> = (0..a.len()).map(|i| i >= cut).collect();
    chaos_crossover(a, b, &mask)
}

/// Componentwise difference `x_j - x_k`.
pub fn raw_pollen(xj: &[NodeId], xk: &[NodeId]) -> Vec<i64> {
    xj.iter().zip(xk).map(|(&a, &b)| a as i64 - b as i64).collect()
}

/// Sign of each pollen component.
pub fn sign_pollen(pollen: &[i64]) -> Vec<i64> {
    pollen.iter().map(|d| d.signum()).collect()
}

/// Adds a pollen vector to `genes`; components leaving the id space become
/// `usize::MAX` so that repair re-rolls them.
pub fn apply_pollen(genes: &[NodeId], pollen: &[i64]) -> Vec<NodeId> {
    genes
        .iter()
        .zip(pollen)
        .map(|(&g, &d)| usize::try_from(g as i64 + d).unwrap_or(usize::MAX))
        .collect()
}

/// Local step: `x_i + sign(x_j - x_k)`, then repaired. `None` means the
/// candidate could not be repaired and `x_i` stays as it is.
pub fn self_pollinate<R: Rng>(
    xi: &[NodeId],
    xj: &[NodeId],
    xk: &[NodeId],
    s: &SubstrateNetwork,
    v: &VirtualNetworkRequest,
    rng: &mut R,
) -> Option<Vec<NodeId>> {
    let step = sign_pollen(&raw_pollen(xj, xk));
    feasibility_repair(&apply_pollen(xi, &step), s, v, rng)
}

/// Lifespan from the individual's share of the population's total fitness.
/// Short runs (`max_iters < 25`) scale by 5, longer ones by `max_iters / 5`.
/// Rounded to nearest, at least 1.
pub fn lifespan_of(fitness: f64, pop_fitness_sum: f64, pop_size: usize, max_iters: usize, life_factor: f64) -> u32 {
    let share = if pop_fitness_sum > 0.0 && pop_fitness_sum.is_finite() {
        fitness * pop_size as f64 / pop_fitness_sum
    } else {
        1.0
    };
    let scale = if max_iters < 25 { 5.0 } else { max_iters as f64 / 5.0 };
    let life = (life_factor * share * scale).round();
    if life.is_finite() {
        life.max(1.0).min(u32::MAX as f64) as u32
    } else {
        1
    }
}

/// Pattern reinjection: positions where `fresh` repeats `old` are re-rolled
/// over free feasible nodes other than the old value. Falls back to `fresh`
/// unchanged if some marked position has no alternative.
pub fn reinject<R: Rng>(
    old: &[NodeId],
    fresh: &[NodeId],
    s: &SubstrateNetwork,
    v: &VirtualNetworkRequest,
    rng: &mut R,
) -> Vec<NodeId> {
    let marked: Vec<usize> = (0..fresh.len()).filter(|&k| old.get(k) == Some(&fresh[k])).collect();
    if marked.is_empty() {
        return fresh.to_vec();
    }
    let mut used = vec![false; s.nodes().len()];
    for (k, &g) in fresh.iter().enumerate() {
        if !marked.contains(&k) {
            used[g] = true;
        }
    }
    let mut out = fresh.to_vec();
    for k in marked {
        match pick_free(s, v, k, &used, Some(old[k]), rng) {
            Some(sn) => {
                used[sn] = true;
                out[k] = sn;
            }
            None => return fresh.to_vec(),
        }
    }
    out
}

/// Replacement for an expired individual: a random feasible assignment with
/// the genes it shares with `old` re-rolled.
pub fn recycle_individual<R: Rng>(
    old: &[NodeId],
    s: &SubstrateNetwork,
    v: &VirtualNetworkRequest,
    rng: &mut R,
) -> Option<Vec<NodeId>> {
    let fresh = random_assignment(s, v, rng)?;
    Some(reinject(old, &fresh, s, v, rng))
}

/// Indices of the better half (at least one), by fitness, ties in insertion order.
pub fn elite_indices(pop: &[Individual]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..pop.len()).collect();
    idx.sort_by(|&a, &b| pop[a].fitness.total_cmp(&pop[b].fitness));
    idx.truncate((pop.len() / 2).max(pop.len().min(1)));
    idx
}

pub fn select_elite(pop: &[Individual]) -> Vec<Individual> {
    elite_indices(pop).into_iter().map(|i| pop[i].clone()).collect()
}

/// Binary tournament; the earlier index wins ties.
pub fn tournament<R: Rng>(pop: &[Individual], rng: &mut R) -> usize {
    let a = rng.gen_range(0..pop.len());
    let b = rng.gen_range(0..pop.len());
    let (lo, hi) = (a.min(b), a.max(b));
    if pop[hi].fitness < pop[lo].fitness {
        hi
    } else {
        lo
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::tests::{link, node, vnr};
    use crate::seeding::rng_from;

    fn substrate(cpu: &[f64]) -> SubstrateNetwork {
        let n = cpu.len();
        let nodes = cpu.iter().enumerate().map(|(i, &c)| node(i, c, 1.0)).collect();
        let links = (1..n).map(|i| link(i - 1, i, 100.0, 1.0)).collect();
        SubstrateNetwork::new(1, nodes, links).unwrap()
    }

    #[test]
    fn crossover_examples() {
        let a = [1, 3, 6];
        let b = [4, 1, 2];
        assert_eq!(chaos_crossover(&a, &b, &[false; 3]), (a.to_vec(), b.to_vec()));
        assert_eq!(chaos_crossover(&a, &b, &[true; 3]), (b.to_vec(), a.to_vec()));
        assert_eq!(chaos_crossover(&a, &b, &[false, true, false]), (vec![1, 1, 6], vec![4, 3, 2]));
        assert_eq!(single_point_crossover(&a, &b, 1), (vec![1, 1, 2], vec![4, 3, 6]));
    }

    #[test]
    fn repaired_crossover_child_is_feasible() {
        let s = substrate(&[10.0; 8]);
        let v = vnr(&[1.0; 3], &[(0, 1, 1.0), (1, 2, 1.0)]);
        let (c1, c2) = chaos_crossover(&[1, 3, 6], &[4, 1, 2], &[false, true, false]);
        let mut rng = rng_from(1);
        let r1 = feasibility_repair(&c1, &s, &v, &mut rng).unwrap();
        assert!(is_feasible(&s, &v, &r1));
        assert_eq!((r1[0], r1[2]), (1, 6));
        assert_eq!(feasibility_repair(&c2, &s, &v, &mut rng).unwrap(), c2);
    }

    #[test]
    fn pollen_examples() {
        let xj = [1, 3, 6];
        let xk = [4, 1, 2];
        let xi = [4, 6, 5];
        let raw = raw_pollen(&xj, &xk);
        assert_eq!(raw, vec![-3, 2, 4]);
        assert_eq!(apply_pollen(&xi, &raw), vec![1, 8, 9]);
        let step = sign_pollen(&raw);
        assert_eq!(step, vec![-1, 1, 1]);
        assert_eq!(apply_pollen(&xi, &step), vec![3, 7, 6]);
        assert_eq!(apply_pollen(&[0], &[-1]), vec![usize::MAX]);
    }

    #[test]
    fn repair_keeps_feasible_and_rejects_pigeonhole() {
        let s = substrate(&[10.0, 10.0, 1.0, 10.0]);
        let v = vnr(&[5.0, 5.0], &[(0, 1, 1.0)]);
        let mut rng = rng_from(2);
        assert_eq!(feasibility_repair(&[0, 3], &s, &v, &mut rng), Some(vec![0, 3]));
        let fixed = feasibility_repair(&[3, 3], &s, &v, &mut rng).unwrap();
        assert_eq!(fixed[0], 3);
        assert!(fixed[1] == 0 || fixed[1] == 1);
        // only three substrate nodes can host a 5-CPU virtual node
        let v3 = vnr(&[5.0; 4], &[(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0)]);
        assert_eq!(feasibility_repair(&[0, 1, 3, 3], &s, &v3, &mut rng), None);
        assert_eq!(random_assignment(&s, &v3, &mut rng), None);
    }

    #[test]
    fn lifespan_examples() {
        // average fitness: share = 1
        assert_eq!(lifespan_of(10.0, 40.0, 4, 20, 1.0), 5);
        assert_eq!(lifespan_of(10.0, 40.0, 4, 50, 1.0), 10);
        assert_eq!(lifespan_of(10.0, 40.0, 4, 25, 1.0), 5);
        assert_eq!(lifespan_of(0.0, 40.0, 4, 50, 1.0), 1);
        assert_eq!(lifespan_of(10.0, 0.0, 4, 20, 2.0), 10);
    }

    #[test]
    fn reinjection_examples() {
        let s = substrate(&[10.0; 5]);
        let v = vnr(&[1.0; 3], &[(0, 1, 1.0), (1, 2, 1.0)]);
        let mut rng = rng_from(3);
        assert_eq!(reinject(&[0, 1, 2], &[3, 4, 0], &s, &v, &mut rng), vec![3, 4, 0]);
        let out = reinject(&[0, 1, 2], &[0, 1, 2], &s, &v, &mut rng);
        assert!(out.iter().zip([0, 1, 2]).all(|(a, b)| *a != b));
        assert!(is_feasible(&s, &v, &out));
    }

    #[test]
    fn reinjection_moves_shared_gene_to_an_alternative() {
        // fresh = [0, 3, 4]; only gene 0 is shared; alternatives are nodes 1 and 2.
        let s = substrate(&[10.0; 5]);
        let v = vnr(&[1.0; 3], &[(0, 1, 1.0), (1, 2, 1.0)]);
        for seed in 0..20 {
            let mut rng = rng_from(seed);
            let out = reinject(&[0, 1, 2], &[0, 3, 4], &s, &v, &mut rng);
            assert!(out[0] == 1 || out[0] == 2);
            assert_eq!(&out[1..], &[3, 4]);
        }
    }

    #[test]
    fn elite_selection() {
        let pop: Vec<Individual> = [3.0, 1.0, 4.0, 2.0].iter().map(|&f| Individual::new(vec![], f)).collect();
        let elite = select_elite(&pop);
        assert_eq!(elite.iter().map(|i| i.fitness).collect::<Vec<_>>(), vec![1.0, 2.0]);
        let flat: Vec<Individual> = (0..4).map(|g| Individual::new(vec![g], 1.0)).collect();
        assert_eq!(elite_indices(&flat), vec![0, 1]);
        let two = [Individual::new(vec![0], 5.0), Individual::new(vec![1], 2.0)];
        assert_eq!(select_elite(&two)[0].genes, vec![1]);
    }
}
