use std::collections::HashMap;
use std::rc::Rc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::chaos::{ChaosError, ChaosSource, ChaosState, CHAOS_U};
use super::operators::{
    chaos_crossover, elite_indices, feasibility_repair, is_feasible, lifespan_of, random_assignment,
    recycle_individual, self_pollinate, single_point_crossover, tournament, Individual,
};
use crate::fitness::{base_fitness, blended_fitness, extract_features, plan_metrics, FitnessNet, PlanMetrics};
use crate::linkmap::LoadBalance;
use crate::netmodel::{NodeId, SubstrateNetwork, VirtualNetworkRequest};
use crate::seeding::rng_from;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("no feasible initial population: the substrate lacks {0} distinct CPU-feasible nodes")]
    NoFeasiblePopulation(usize),
    #[error("invalid solver parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Chaos(#[from] ChaosError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverParams {
    pub pop_size: usize,
    pub max_iters: usize,
    /// Switch between the crossover (global) and self-pollination (local) phase.
    pub transfer_prob: f64,
    pub cross_prob: f64,
    pub life_factor: f64,
    pub chaos_u: f64,
    /// Initial chaos value; drawn from the run's RNG when absent.
    pub chaos_seed: Option<f64>,
    pub rng_seed: u64,
    /// Plain GA: tournament selection, single-point crossover, per-gene mutation.
    pub baseline_mode: bool,
    /// Carry the best individual over unchanged in baseline mode.
    pub baseline_elitism: bool,
    /// Take the global branch when `random < transfer_prob` instead of `>`.
    pub invert_transfer: bool,
    /// Drop global-phase offspring identical to a member already kept. Slots
    /// still empty after the attempt budget get fresh random individuals.
    pub reject_clones: bool,
    pub fitness_coeff: f64,
    /// Weight of the rating network in the local-phase fitness, in [0, 1].
    pub user_weight: f64,
    pub load_balance: LoadBalance,
    /// Check every individual of every generation and count violations.
    pub audit: bool,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            pop_size: 20,
            max_iters: 100,
            transfer_prob: 0.7,
            cross_prob: 0.9,
            life_factor: 1.0,
            chaos_u: CHAOS_U,
            chaos_seed: None,
            rng_seed: 1,
            baseline_mode: false,
            baseline_elitism: false,
            invert_transfer: false,
            reject_clones: true,
            fitness_coeff: 1.0,
            user_weight: 0.7,
            load_balance: LoadBalance::default(),
            audit: false,
        }
    }
}

impl SolverParams {
    pub fn baseline() -> Self {
        Self { baseline_mode: true, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), SolveError> {
        let bad = |m: &str| Err(SolveError::InvalidParams(m.to_string()));
        if self.pop_size < 4 || self.pop_size % 2 != 0 {
            return bad("pop_size must be even and at least 4");
        }
        if !(0.0..=1.0).contains(&self.transfer_prob) || !(0.0..=1.0).contains(&self.cross_prob) {
            return bad("transfer_prob and cross_prob must lie in [0, 1]");
        }
        if !(self.life_factor > 0.0 && self.life_factor <= 3.0) {
            return bad("life_factor must lie in (0, 3]");
        }
        if !(0.0..=1.0).contains(&self.user_weight) {
            return bad("user_weight must lie in [0, 1]");
        }
        if !(self.fitness_coeff > 0.0) {
            return bad("fitness_coeff must be positive");
        }
        if let LoadBalance::Weighted { factor } = self.load_balance {
            if !(factor > 0.0 && factor <= 2.0) {
                return bad("load balance factor must lie in (0, 2]");
            }
        }
        if let Some(x) = self.chaos_seed {
            ChaosState::admissible(x, self.chaos_u)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Init,
    Global,
    Local,
    Baseline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub iteration: usize,
    pub best_fitness: f64,
    pub phase: Phase,
}

/// Instrumentation counters of one solver run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    pub global_phases: usize,
    pub local_phases: usize,
    pub chaos_masks: usize,
    pub chaos_reseeds: usize,
    pub crossovers: usize,
    pub self_pollinations: usize,
    pub accepted_pollinations: usize,
    pub recycled: usize,
    pub repair_rejections: usize,
    pub clones_rejected: usize,
    /// Population slots filled with random individuals after the
    /// offspring attempt budget ran out.
    pub random_fills: usize,
    pub tournaments: usize,
    pub mutations: usize,
    pub evaluations: usize,
    pub individuals_audited: usize,
    pub audit_violations: usize,
}

#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub best: Individual,
    /// Metrics of `best`, including its provisional link paths when routable.
    pub metrics: Rc<PlanMetrics>,
    pub trace: Vec<TracePoint>,
    pub stats: SolveStats,
}

/// Memoized plan evaluation for one request on one substrate snapshot.
struct Evaluator<'a> {
    s: &'a SubstrateNetwork,
    v: &'a VirtualNetworkRequest,
    balance: LoadBalance,
    coeff: f64,
    cache: HashMap<Vec<NodeId>, Rc<PlanMetrics>>,
}

impl<'a> Evaluator<'a> {
    fn metrics(&mut self, genes: &[NodeId]) -> Rc<PlanMetrics> {
        if let Some(m) = self.cache.get(genes) {
            return Rc::clone(m);
        }
        let m = Rc::new(plan_metrics(self.s, self.v, genes, self.balance));
        self.cache.insert(genes.to_vec(), Rc::clone(&m));
        m
    }

    fn fitness(&mut self, genes: &[NodeId]) -> f64 {
        base_fitness(self.metrics(genes).quotation, self.coeff)
    }

    fn individual(&mut self, genes: Vec<NodeId>) -> Individual {
        let f = self.fitness(&genes);
        Individual::new(genes, f)
    }
}

struct Run<'a> {
    s: &'a SubstrateNetwork,
    v: &'a VirtualNetworkRequest,
    params: &'a SolverParams,
    rater: Option<&'a FitnessNet>,
    rng: ChaCha8Rng,
    eval: Evaluator<'a>,
    stats: SolveStats,
    best: Individual,
    trace: Vec<TracePoint>,
}

/// Node mapping for `v` on `s`.
///
/// `exclude` is an assignment that must not appear in the initial population
/// (used when retrying after a link-mapping failure).
pub fn solve_nodes(
    s: &SubstrateNetwork,
    v: &VirtualNetworkRequest,
    params: &SolverParams,
    rater: Option<&FitnessNet>,
    exclude: Option<&[NodeId]>,
) -> Result<SolveOutcome, SolveError> {
    params.validate()?;
    let mut rng = rng_from(params.rng_seed);
    let mut eval = Evaluator { s, v, balance: params.load_balance, coeff: params.fitness_coeff, cache: HashMap::new() };

    let mut pop = Vec::with_capacity(params.pop_size);
    for _ in 0..params.pop_size {
        let mut genes = None;
        for _ in 0..10 {
            let g = random_assignment(s, v, &mut rng).ok_or(SolveError::NoFeasiblePopulation(v.nodes.len()))?;
            let excluded = exclude == Some(g.as_slice());
            genes = Some(g);
            if !excluded {
                break;
            }
        }
        pop.push(eval.individual(genes.expect("at least one draw")));
    }

    let best = pop
        .iter()
        .min_by(|a, b| a.fitness.total_cmp(&b.fitness))
        .cloned()
        .expect("non-empty population");
    let mut run = Run { s, v, params, rater, rng, eval, stats: SolveStats::default(), best, trace: Vec::new() };
    run.audit(&pop);
    run.trace.push(TracePoint { iteration: 0, best_fitness: run.best.fitness, phase: Phase::Init });

    if params.baseline_mode {
        run.baseline(pop);
    } else {
        run.hybrid(pop);
    }

    run.stats.evaluations = run.eval.cache.len();
    let metrics = run.eval.metrics(&run.best.genes);
    Ok(SolveOutcome { best: run.best, metrics, trace: run.trace, stats: run.stats })
}

impl<'a> Run<'a> {
    fn audit(&mut self, pop: &[Individual]) {
        if !self.params.audit {
            return;
        }
        self.stats.individuals_audited += pop.len();
        self.stats.audit_violations += pop.iter().filter(|i| !is_feasible(self.s, self.v, &i.genes)).count();
    }

    fn record(&mut self, pop: &[Individual], iteration: usize, phase: Phase) {
        if let Some(b) = pop.iter().min_by(|a, b| a.fitness.total_cmp(&b.fitness)) {
            if b.fitness < self.best.fitness {
                self.best = b.clone();
            }
        }
        self.audit(pop);
        self.trace.push(TracePoint { iteration, best_fitness: self.best.fitness, phase });
    }

    fn lifespan(&self, fitness: f64, pop: &[Individual]) -> u32 {
        let sum: f64 = pop.iter().map(|i| i.fitness).sum();
        lifespan_of(fitness, sum, self.params.pop_size, self.params.max_iters, self.params.life_factor)
    }

    fn assign_lifespans(&self, pop: &mut [Individual], which: &[usize]) {
        let lives: Vec<u32> = which.iter().map(|&i| self.lifespan(pop[i].fitness, pop)).collect();
        for (&i, life) in which.iter().zip(lives) {
            pop[i].lifespan = life;
        }
    }

    fn random_individual(&mut self) -> Individual {
        let genes = random_assignment(self.s, self.v, &mut self.rng).expect("initial population was feasible");
        self.eval.individual(genes)
    }

    fn hybrid(&mut self, mut pop: Vec<Individual>) {
        let p = self.params;
        let all: Vec<usize> = (0..pop.len()).collect();
        self.assign_lifespans(&mut pop, &all);
        let seed = match p.chaos_seed {
            Some(x) => ChaosState { x, u: p.chaos_u },
            None => ChaosState::random_admissible(p.chaos_u, &mut self.rng),
        };
        let mut chaos = ChaosSource::new(seed);

        for iteration in 1..=p.max_iters {
            // Life judgment: expired individuals are replaced.
            let expired: Vec<usize> = (0..pop.len()).filter(|&i| pop[i].lifespan == 0).collect();
            for &i in &expired {
                let genes = recycle_individual(&pop[i].genes, self.s, self.v, &mut self.rng)
                    .expect("initial population was feasible");
                pop[i] = self.eval.individual(genes);
            }
            self.stats.recycled += expired.len();
            self.assign_lifespans(&mut pop, &expired);

            let r: f64 = self.rng.gen();
            let global = if p.invert_transfer { r < p.transfer_prob } else { r > p.transfer_prob };
            let phase = if global {
                self.stats.global_phases += 1;
                pop = self.global_phase(pop, &mut chaos);
                Phase::Global
            } else {
                self.stats.local_phases += 1;
                self.local_phase(&mut pop);
                Phase::Local
            };
            self.record(&pop, iteration, phase);
        }
        self.stats.chaos_reseeds = chaos.reseeds();
    }

    fn global_phase(&mut self, pop: Vec<Individual>, chaos: &mut ChaosSource) -> Vec<Individual> {
        let p = self.params;
        let n = self.v.nodes.len();
        let mut next: Vec<Individual> = elite_indices(&pop).into_iter().map(|i| pop[i].clone()).collect();
        let parents = next.len();
        let mut produced = vec![false; parents];
        let mut attempts = 0;
        while next.len() < p.pop_size && attempts < 20 * p.pop_size {
            attempts += 1;
            let a = self.rng.gen_range(0..parents);
            let b = if parents > 1 {
                let b = self.rng.gen_range(0..parents - 1);
                if b >= a { b + 1 } else { b }
            } else {
                a
            };
            let (c1, c2) = if self.rng.gen::<f64>() < p.cross_prob {
                let mask = chaos.mask(n, &mut self.rng);
                self.stats.chaos_masks += 1;
                self.stats.crossovers += 1;
                chaos_crossover(&next[a].genes, &next[b].genes, &mask)
            } else {
                (next[a].genes.clone(), next[b].genes.clone())
            };
            for child in [c1, c2] {
                if next.len() >= p.pop_size {
                    break;
                }
                match feasibility_repair(&child, self.s, self.v, &mut self.rng) {
                    Some(g) if p.reject_clones && next.iter().any(|i| i.genes == g) => self.stats.clones_rejected += 1,
                    Some(g) => {
                        next.push(self.eval.individual(g));
                        produced[a] = true;
                        produced[b] = true;
                    }
                    None => self.stats.repair_rejections += 1,
                }
            }
        }
        while next.len() < p.pop_size {
            let ind = self.random_individual();
            next.push(ind);
            self.stats.random_fills += 1;
        }
        for (ind, used) in next.iter_mut().zip(&produced) {
            if *used {
                ind.lifespan = ind.lifespan.saturating_sub(1);
            }
        }
        let offspring: Vec<usize> = (parents..next.len()).collect();
        self.assign_lifespans(&mut next, &offspring);
        next
    }

    fn local_phase(&mut self, pop: &mut [Individual]) {
        let len = pop.len();
        let mut candidates: Vec<Option<Individual>> = Vec::with_capacity(len);
        for i in 0..len {
            let (j, k) = self.two_others(i, len);
            self.stats.self_pollinations += 1;
            let cand = self_pollinate(&pop[i].genes, &pop[j].genes, &pop[k].genes, self.s, self.v, &mut self.rng);
            if cand.is_none() {
                self.stats.repair_rejections += 1;
            }
            candidates.push(cand.map(|g| self.eval.individual(g)));
        }

        // Ratings are normalized over the current population plus candidates.
        let members: Vec<&Individual> = pop.iter().chain(candidates.iter().flatten()).collect();
        let metrics: Vec<PlanMetrics> = members.iter().map(|m| (*self.eval.metrics(&m.genes)).clone()).collect();
        let features = extract_features(&metrics);
        let scores: Vec<f64> = members
            .iter()
            .zip(&features)
            .map(|(m, f)| match self.rater {
                Some(net) => {
                    let rating = net.forward(f).unwrap_or(net.rating_levels as f64);
                    blended_fitness(rating, m.fitness, self.params.user_weight, net.rating_levels)
                }
                None => m.fitness,
            })
            .collect();

        let mut renewed = Vec::new();
        let mut cand_slot = len;
        for (i, cand) in candidates.into_iter().enumerate() {
            let Some(cand) = cand else {
                pop[i].lifespan = pop[i].lifespan.saturating_sub(1);
                continue;
            };
            let slot = cand_slot;
            cand_slot += 1;
            if cand.genes != pop[i].genes && scores[slot] < scores[i] {
                pop[i] = cand;
                renewed.push(i);
            } else {
                pop[i].lifespan = pop[i].lifespan.saturating_sub(1);
            }
        }
        self.stats.accepted_pollinations += renewed.len();
        self.assign_lifespans(pop, &renewed);
    }

    /// Two distinct indices other than `i`.
    fn two_others(&mut self, i: usize, len: usize) -> (usize, usize) {
        let pick = |exclude: &[usize], rng: &mut ChaCha8Rng| loop {
            let x = rng.gen_range(0..len);
            if !exclude.contains(&x) {
                return x;
            }
        };
        let j = pick(&[i], &mut self.rng);
        let k = pick(&[i, j], &mut self.rng);
        (j, k)
    }

    fn baseline(&mut self, mut pop: Vec<Individual>) {
        let p = self.params;
        let n = self.v.nodes.len();
        let node_count = self.s.nodes().len();
        let mutation_prob = 1.0 / n.max(1) as f64;
        for iteration in 1..=p.max_iters {
            let mut next = if p.baseline_elitism { vec![self.best.clone()] } else { Vec::new() };
            let mut attempts = 0;
            while next.len() < p.pop_size && attempts < 20 * p.pop_size {
                attempts += 1;
                let a = tournament(&pop, &mut self.rng);
                let b = tournament(&pop, &mut self.rng);
                self.stats.tournaments += 2;
                let (c1, c2) = if n > 1 && self.rng.gen::<f64>() < p.cross_prob {
                    self.stats.crossovers += 1;
                    let cut = self.rng.gen_range(1..n);
                    single_point_crossover(&pop[a].genes, &pop[b].genes, cut)
                } else {
                    (pop[a].genes.clone(), pop[b].genes.clone())
                };
                for mut child in [c1, c2] {
                    if next.len() >= p.pop_size {
                        break;
                    }
                    for g in child.iter_mut() {
                        if self.rng.gen::<f64>() < mutation_prob {
                            *g = self.rng.gen_range(0..node_count);
                            self.stats.mutations += 1;
                        }
                    }
                    match feasibility_repair(&child, self.s, self.v, &mut self.rng) {
                        Some(g) => next.push(self.eval.individual(g)),
                        None => self.stats.repair_rejections += 1,
                    }
                }
            }
            while next.len() < p.pop_size {
                let ind = self.random_individual();
                next.push(ind);
                self.stats.random_fills += 1;
            }
            pop = next;
            self.record(&pop, iteration, Phase::Baseline);
        }
    }
}
