//! Fitness evaluation: the priced objective, a two-layer ReLU rating network,
//! the blend of both, and the synthetic rating data the network is trained on.
//!
//! The rating network sees five per-plan features, each min-max normalized
//! over the set of plans being compared:
//!
//! | index | feature                                   | lower is |
//! |-------|-------------------------------------------|----------|
//! | 0     | quotation                                 | better   |
//! | 1     | total delay                               | better   |
//! | 2     | summed node packet-loss rate              | better   |
//! | 3     | squared load deviation on the plan links  | better   |
//! | 4     | cost / revenue                            | better   |
//!
//! Ratings are integers `1..=n`, smaller is better.

use std::collections::HashSet;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hfpa::random_assignment;
use crate::linkmap::{map_links, LoadBalance};
use crate::netmodel::{LinkId, NodeId, SubstrateNetwork, VirtualNetworkRequest};
use crate::seeding::{derive_seed, rng_from};
use crate::topogen::{gen_substrate, gen_vnr, GenError, ScenarioConfig};

pub const FEATURE_COUNT: usize = 5;
pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = ["quotation", "delay", "plr", "load_deviation", "cost_ratio"];
pub const FEATURE_SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_HIDDEN: usize = 8;

pub type Features = [f64; FEATURE_COUNT];

#[derive(Debug, Error)]
pub enum FitnessError {
    #[error("feature dimension {found} does not match network input {expected}")]
    Dimension { expected: usize, found: usize },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("could only generate {found} distinct plans, need at least {needed}")]
    TooFewPlans { found: usize, needed: usize },
    #[error("malformed rating dataset: {0}")]
    Csv(String),
}

/// `coeff * quotation`.
pub fn base_fitness(quotation: f64, coeff: f64) -> f64 {
    coeff * quotation
}

/// Blends a network rating into the base fitness. The rating is clamped to
/// `[1, levels]` first, so with `user_weight = 1` the fitness ranges from
/// `F / levels` (best rating) to `F` (worst rating).
pub fn blended_fitness(rating: f64, base: f64, user_weight: f64, levels: usize) -> f64 {
    let n = levels as f64;
    let r = if rating.is_nan() { n } else { rating.clamp(1.0, n) };
    user_weight * (r / n) * base + (1.0 - user_weight) * base
}

/// Raw multi-criteria measurements of one node assignment with provisionally
/// mapped links.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanMetrics {
    pub quotation: f64,
    pub delay: f64,
    pub plr: f64,
    pub load_deviation: f64,
    pub cost_ratio: f64,
    /// `None` when some virtual link could not be routed; the other fields then
    /// hold penalty values that rank below every routable plan.
    pub paths: Option<Vec<Vec<LinkId>>>,
}

impl PlanMetrics {
    pub fn routable(&self) -> bool {
        self.paths.is_some()
    }

    pub fn raw(&self) -> Features {
        [self.quotation, self.delay, self.plr, self.load_deviation, self.cost_ratio]
    }
}

/// Maps links for `assignment` and measures the resulting plan.
pub fn plan_metrics(
    s: &SubstrateNetwork,
    v: &VirtualNetworkRequest,
    assignment: &[NodeId],
    balance: LoadBalance,
) -> PlanMetrics {
    let node_price: f64 = assignment.iter().zip(&v.nodes).map(|(&n, vn)| vn.cpu_demand * s.node(n).unit_price).sum();
    let node_delay: f64 = assignment.iter().map(|&n| s.node(n).delay).sum();
    let plr: f64 = assignment.iter().map(|&n| s.node(n).plr).sum();
    let revenue = v.revenue();
    let cpu: f64 = v.nodes.iter().map(|n| n.cpu_demand).sum();
    match map_links(s, v, assignment, balance, None) {
        Ok(paths) => {
            let mut quotation = node_price;
            let mut delay = node_delay;
            let mut hop_bw = 0.0;
            let mut extra = vec![0.0; s.links().len()];
            for (p, l) in paths.iter().zip(&v.links) {
                for &sl in p {
                    let link = s.link(sl);
                    quotation += l.bw_demand * link.unit_price;
                    delay += link.delay;
                    extra[sl] += l.bw_demand;
                }
                hop_bw += l.bw_demand * p.len() as f64;
            }
            let used: Vec<f64> = s.links().iter().zip(&extra).map(|(l, e)| l.used() + e).collect();
            let mean = if used.is_empty() { 0.0 } else { used.iter().sum::<f64>() / used.len() as f64 };
            let load_deviation = used
                .iter()
                .zip(&extra)
                .filter(|(_, &e)| e > 0.0)
                .map(|(u, _)| (u - mean).powi(2))
                .sum::<f64>()
                / used.len().max(1) as f64;
            PlanMetrics {
                quotation,
                delay,
                plr,
                load_deviation,
                cost_ratio: if revenue > 0.0 { (cpu + hop_bw) / revenue } else { 1.0 },
                paths: Some(paths),
            }
        }
        Err(_) => {
            let all_price: f64 = s.links().iter().map(|l| l.unit_price).sum();
            let all_delay: f64 = s.links().iter().map(|l| l.delay).sum();
            let bw: f64 = v.links.iter().map(|l| l.bw_demand).sum();
            let hops = s.nodes().len().max(1) as f64;
            PlanMetrics {
                quotation: node_price + bw * all_price,
                delay: node_delay + all_delay,
                plr,
                load_deviation: s.link_load_variance() + bw * bw,
                cost_ratio: if revenue > 0.0 { (cpu + bw * hops) / revenue } else { hops },
                paths: None,
            }
        }
    }
}

/// Min-max normalization of each feature across `population`. A population of
/// one, or a feature that is constant across the population, maps to 0.5.
pub fn normalize_features(population: &[Features]) -> Vec<Features> {
    let mut lo = [f64::INFINITY; FEATURE_COUNT];
    let mut hi = [f64::NEG_INFINITY; FEATURE_COUNT];
    for f in population {
        for d in 0..FEATURE_COUNT {
            lo[d] = lo[d].min(f[d]);
            hi[d] = hi[d].max(f[d]);
        }
    }
    population
        .iter()
        .map(|f| {
            let mut out = [0.5; FEATURE_COUNT];
            for d in 0..FEATURE_COUNT {
                let span = hi[d] - lo[d];
                if population.len() > 1 && span > 0.0 && span.is_finite() {
                    out[d] = (f[d] - lo[d]) / span;
                }
            }
            out
        })
        .collect()
}

/// Normalized features of every plan in `population`.
pub fn extract_features(population: &[PlanMetrics]) -> Vec<Features> {
    let raw: Vec<Features> = population.iter().map(PlanMetrics::raw).collect();
    normalize_features(&raw)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackpropMode {
    /// Sigmoid-style rules kept for comparison: a `y(1-y)` derivative factor and
    /// weight-proportional steps `w += η·δ·w`.
    Literal,
    /// Squared-error loss with ReLU subgradients and `w -= η·δ·input`.
    #[default]
    Consistent,
}

impl std::str::FromStr for BackpropMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "literal" => Ok(Self::Literal),
            "consistent" => Ok(Self::Consistent),
            other => Err(format!("unknown backprop mode `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitnessNet {
    /// `hidden_weights[i][j]`: input `i` to hidden unit `j`.
    pub hidden_weights: Vec<Vec<f64>>,
    pub hidden_biases: Vec<f64>,
    pub output_weights: Vec<f64>,
    pub output_bias: f64,
    pub learning_rate: f64,
    pub rating_levels: usize,
    pub mode: BackpropMode,
    pub feature_schema: u32,
}

/// Activations of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Forward {
    pub hidden_pre: Vec<f64>,
    pub hidden: Vec<f64>,
    pub output_pre: f64,
    pub output: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub output_delta: f64,
    pub hidden_deltas: Vec<f64>,
    /// `0.5 * (y - y_true)^2` before the update.
    pub loss: f64,
}

fn relu(x: f64) -> f64 {
    x.max(0.0)
}

impl FitnessNet {
    /// Weights and biases drawn from a standard normal distribution.
    pub fn random(inputs: usize, hidden: usize, rating_levels: usize, mode: BackpropMode, seed: u64) -> Self {
        let mut rng = rng_from(seed);
        let mut draw = || -> f64 { StandardNormal.sample(&mut rng) };
        let hidden_weights = (0..inputs).map(|_| (0..hidden).map(|_| draw()).collect()).collect();
        let hidden_biases = (0..hidden).map(|_| draw()).collect();
        let output_weights = (0..hidden).map(|_| draw()).collect();
        let output_bias = draw();
        Self {
            hidden_weights,
            hidden_biases,
            output_weights,
            output_bias,
            learning_rate: 0.05,
            rating_levels: rating_levels.max(2),
            mode,
            feature_schema: FEATURE_SCHEMA_VERSION,
        }
    }

    /// All-zero network of the given shape.
    pub fn zeros(inputs: usize, hidden: usize, rating_levels: usize) -> Self {
        Self {
            hidden_weights: vec![vec![0.0; hidden]; inputs],
            hidden_biases: vec![0.0; hidden],
            output_weights: vec![0.0; hidden],
            output_bias: 0.0,
            learning_rate: 0.05,
            rating_levels,
            mode: BackpropMode::Consistent,
            feature_schema: FEATURE_SCHEMA_VERSION,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.hidden_weights.len()
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden_biases.len()
    }

    pub fn forward_full(&self, features: &[f64]) -> Result<Forward, FitnessError> {
        if features.len() != self.input_dim() {
            return Err(FitnessError::Dimension { expected: self.input_dim(), found: features.len() });
        }
        let hidden_pre: Vec<f64> = (0..self.hidden_dim())
            .map(|j| {
                self.hidden_biases[j]
                    + features.iter().zip(&self.hidden_weights).map(|(x, row)| x * row[j]).sum::<f64>()
            })
            .collect();
        let hidden: Vec<f64> = hidden_pre.iter().copied().map(relu).collect();
        let output_pre = self.output_bias + hidden.iter().zip(&self.output_weights).map(|(h, w)| h * w).sum::<f64>();
        Ok(Forward { hidden_pre, hidden, output_pre, output: relu(output_pre) })
    }

    /// Rating score `y`; always non-negative.
    pub fn forward(&self, features: &[f64]) -> Result<f64, FitnessError> {
        Ok(self.forward_full(features)?.output)
    }

    /// Predicted integer rating in `1..=rating_levels`.
    pub fn predict_rating(&self, features: &[f64]) -> Result<usize, FitnessError> {
        let y = self.forward(features)?;
        Ok(y.round().clamp(1.0, self.rating_levels as f64) as usize)
    }

    /// Gradient of `0.5 * (y - target)^2` with respect to every parameter, in
    /// the same layout as the network: (hidden weights, hidden biases, output
    /// weights, output bias).
    pub fn gradients(
        &self,
        features: &[f64],
        target: f64,
    ) -> Result<(Vec<Vec<f64>>, Vec<f64>, Vec<f64>, f64), FitnessError> {
        let fw = self.forward_full(features)?;
        let out_delta = if fw.output_pre > 0.0 { fw.output - target } else { 0.0 };
        let gw2: Vec<f64> = fw.hidden.iter().map(|h| out_delta * h).collect();
        let hidden_delta: Vec<f64> = (0..self.hidden_dim())
            .map(|j| if fw.hidden_pre[j] > 0.0 { self.output_weights[j] * out_delta } else { 0.0 })
            .collect();
        let gw1 = features.iter().map(|x| hidden_delta.iter().map(|d| d * x).collect()).collect();
        Ok((gw1, hidden_delta, gw2, out_delta))
    }

    /// One supervised update towards `target` using the network's mode.
    pub fn train_step(&mut self, features: &[f64], target: f64) -> Result<StepReport, FitnessError> {
        match self.mode {
            BackpropMode::Consistent => self.step_consistent(features, target),
            BackpropMode::Literal => self.step_literal(features, target),
        }
    }

    fn step_consistent(&mut self, features: &[f64], target: f64) -> Result<StepReport, FitnessError> {
        let fw = self.forward_full(features)?;
        let (gw1, gb1, gw2, gb2) = self.gradients(features, target)?;
        let eta = self.learning_rate;
        for (row, grow) in self.hidden_weights.iter_mut().zip(&gw1) {
            for (w, g) in row.iter_mut().zip(grow) {
                *w -= eta * g;
            }
        }
        for (b, g) in self.hidden_biases.iter_mut().zip(&gb1) {
            *b -= eta * g;
        }
        for (w, g) in self.output_weights.iter_mut().zip(&gw2) {
            *w -= eta * g;
        }
        self.output_bias -= eta * gb2;
        Ok(StepReport { output_delta: gb2, hidden_deltas: gb1, loss: 0.5 * (fw.output - target).powi(2) })
    }

    fn step_literal(&mut self, features: &[f64], target: f64) -> Result<StepReport, FitnessError> {
        let fw = self.forward_full(features)?;
        let y = fw.output;
        let out_delta = y * (1.0 - y) * (y - target);
        let hidden_deltas: Vec<f64> =
            fw.hidden.iter().zip(&self.output_weights).map(|(h, w)| h * (1.0 - h) * w * out_delta).collect();
        let eta = self.learning_rate;
        for w in &mut self.output_weights {
            *w += eta * out_delta * *w;
        }
        self.output_bias += eta * out_delta;
        for row in &mut self.hidden_weights {
            for (w, d) in row.iter_mut().zip(&hidden_deltas) {
                *w += eta * d * *w;
            }
        }
        for (b, d) in self.hidden_biases.iter_mut().zip(&hidden_deltas) {
            *b += eta * d;
        }
        Ok(StepReport { output_delta: out_delta, hidden_deltas, loss: 0.5 * (y - target).powi(2) })
    }

    pub fn is_finite(&self) -> bool {
        self.hidden_weights.iter().flatten().all(|w| w.is_finite())
            && self.hidden_biases.iter().all(|b| b.is_finite())
            && self.output_weights.iter().all(|w| w.is_finite())
            && self.output_bias.is_finite()
    }

    /// Mean absolute error against the integer ratings.
    pub fn mean_error(&self, samples: &[RatedSample]) -> f64 {
        if samples.is_empty() {
            return 0.0;
        }
        let total: f64 = samples
            .iter()
            .map(|s| self.forward(&s.features).map_or(f64::INFINITY, |y| (y - s.rating as f64).abs()))
            .sum();
        total / samples.len() as f64
    }

    pub fn accuracy(&self, samples: &[RatedSample]) -> f64 {
        if samples.is_empty() {
            return 0.0;
        }
        let hits = samples.iter().filter(|s| self.predict_rating(&s.features).ok() == Some(s.rating)).count();
        hits as f64 / samples.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatedSample {
    pub features: Vec<f64>,
    pub rating: usize,
}

/// Trains for `epochs` passes over a 90% split, shuffling each epoch, and
/// returns the snapshot with the lowest mean error on the 10% holdout.
pub fn train(net: &FitnessNet, dataset: &[RatedSample], epochs: usize, seed: u64) -> Result<FitnessNet, FitnessError> {
    if dataset.is_empty() {
        return Err(FitnessError::EmptyDataset);
    }
    let mut rng = rng_from(seed);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.shuffle(&mut rng);
    let holdout_len = match dataset.len() {
        1 => 0,
        n => (n / 10).max(1),
    };
    let (held, fit) = order.split_at(holdout_len);
    let held: Vec<RatedSample> = held.iter().map(|&i| dataset[i].clone()).collect();
    let mut fit: Vec<usize> = fit.to_vec();
    let score = |n: &FitnessNet| if held.is_empty() { n.mean_error(dataset) } else { n.mean_error(&held) };

    let mut current = net.clone();
    let mut best = net.clone();
    let mut best_err = score(net);
    for _ in 0..epochs {
        fit.shuffle(&mut rng);
        for &i in &fit {
            let s = &dataset[i];
            current.train_step(&s.features, s.rating as f64)?;
        }
        if !current.is_finite() {
            break;
        }
        let err = score(&current);
        if err < best_err {
            best_err = err;
            best = current.clone();
        }
    }
    Ok(best)
}

/// Rating data over random feasible plans for one request.
///
/// Each plan is scored by the equal-weight mean of its five normalized
/// features; plans are ranked by that score and split into `levels` equal
/// quantile buckets (rating 1 = best bucket). Plans with equal scores share
/// the bucket of the first of them.
pub fn synth_ratings(
    s: &SubstrateNetwork,
    v: &VirtualNetworkRequest,
    sample_count: usize,
    levels: usize,
    balance: LoadBalance,
    seed: u64,
) -> Result<Vec<RatedSample>, FitnessError> {
    let mut rng = rng_from(seed);
    let mut metrics = Vec::with_capacity(sample_count);
    let mut distinct = HashSet::new();
    let mut attempts = 0;
    while metrics.len() < sample_count && attempts < sample_count * 50 {
        attempts += 1;
        let Some(genes) = random_assignment(s, v, &mut rng) else { break };
        let m = plan_metrics(s, v, &genes, balance);
        if m.routable() {
            distinct.insert(genes);
            metrics.push(m);
        }
    }
    if distinct.len() < levels.max(1) || metrics.len() < sample_count.max(levels) {
        return Err(FitnessError::TooFewPlans { found: distinct.len(), needed: levels.max(sample_count.min(1)) });
    }
    let features = extract_features(&metrics);
    Ok(rate_by_quantile(features, levels))
}

/// How a rater is trained from generated scenario data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RaterConfig {
    pub hidden: usize,
    pub rating_levels: usize,
    /// Requests drawn from the scenario; each contributes its own rated plans.
    pub requests: usize,
    pub samples_per_request: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub mode: BackpropMode,
    pub seed: u64,
}

impl Default for RaterConfig {
    fn default() -> Self {
        Self {
            hidden: DEFAULT_HIDDEN,
            rating_levels: 3,
            requests: 6,
            samples_per_request: 100,
            epochs: 200,
            learning_rate: 0.05,
            mode: BackpropMode::default(),
            seed: 17,
        }
    }
}

/// Synthesizes ratings on the scenario's substrate and trains a fresh net.
/// Requests whose plans cannot be rated are skipped.
pub fn train_rater(cfg: &ScenarioConfig, rc: &RaterConfig) -> Result<(FitnessNet, Vec<RatedSample>), TrainRaterError> {
    let s = gen_substrate(cfg)?;
    let mut dataset = Vec::new();
    for i in 0..rc.requests as u64 {
        let v = gen_vnr(cfg, derive_seed(rc.seed, 2 * i));
        match synth_ratings(&s, &v, rc.samples_per_request, rc.rating_levels, LoadBalance::default(), derive_seed(rc.seed, 2 * i + 1)) {
            Ok(samples) => dataset.extend(samples),
            Err(FitnessError::TooFewPlans { .. }) => continue,
            Err(e) => return Err(e.into()),
        }
    }
    let mut net = FitnessNet::random(FEATURE_COUNT, rc.hidden, rc.rating_levels, rc.mode, rc.seed);
    net.learning_rate = rc.learning_rate;
    let trained = train(&net, &dataset, rc.epochs, derive_seed(rc.seed, u64::MAX))?;
    Ok((trained, dataset))
}

#[derive(Debug, Error)]
pub enum TrainRaterError {
    #[error(transparent)]
    Generation(#[from] GenError),
    #[error(transparent)]
    Fitness(#[from] FitnessError),
}

/// Equal-weight oracle score; lower is better.
pub fn oracle_score(features: &[f64]) -> f64 {
    features.iter().sum::<f64>() / features.len().max(1) as f64
}

pub(crate) fn rate_by_quantile(features: Vec<Features>, levels: usize) -> Vec<RatedSample> {
    let n = features.len();
    let scores: Vec<f64> = features.iter().map(|f| oracle_score(f)).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
    let mut ratings = vec![0; n];
    let mut prev: Option<(f64, usize)> = None;
    for (rank, &i) in order.iter().enumerate() {
        let bucket = match prev {
            Some((score, r)) if score == scores[i] => r,
            _ => 1 + rank * levels / n,
        };
        ratings[i] = bucket;
        prev = Some((scores[i], bucket));
    }
    features
        .into_iter()
        .zip(ratings)
        .map(|(f, rating)| RatedSample { features: f.to_vec(), rating })
        .collect()
}

pub fn dataset_to_csv(samples: &[RatedSample]) -> String {
    let mut out = FEATURE_NAMES.join(",");
    out.push_str(",rating\n");
    for s in samples {
        for f in &s.features {
            let _ = write!(out, "{f},");
        }
        let _ = writeln!(out, "{}", s.rating);
    }
    out
}

pub fn dataset_from_csv(text: &str) -> Result<Vec<RatedSample>, FitnessError> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| FitnessError::Csv("missing header".into()))?;
    let columns = header.split(',').count();
    lines
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, line)| {
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != columns {
                return Err(FitnessError::Csv(format!("row {} has {} cells", i + 1, cells.len())));
            }
            let parse = |c: &str| c.trim().parse::<f64>().map_err(|e| FitnessError::Csv(format!("row {}: {e}", i + 1)));
            let features = cells[..columns - 1].iter().map(|c| parse(c)).collect::<Result<Vec<_>, _>>()?;
            let rating = cells[columns - 1]
                .trim()
                .parse::<usize>()
                .map_err(|e| FitnessError::Csv(format!("row {}: {e}", i + 1)))?;
            Ok(RatedSample { features, rating })
        })
        .collect()
}

/// Draws `n` rated samples with features uniform in `[0,1]`.
#[cfg(test)]
pub(crate) fn random_features(n: usize, rng: &mut impl rand::Rng) -> Vec<Features> {
    (0..n).map(|_| std::array::from_fn(|_| rand::Rng::gen::<f64>(rng))).collect()
}
