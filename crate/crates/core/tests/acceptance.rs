//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any failed.

use std::time::{Duration, Instant};

use rand::Rng;
use vne_core::fitness::{plan_metrics, train_rater, RaterConfig};
use vne_core::hfpa::{chaos_mask, is_feasible, lifespan_of, ChaosState};
use vne_core::linkmap::{balanced_weights_with, LinkMapError};
use vne_core::netmodel::{SubstrateLink, SubstrateNode, VirtualLink, VirtualNode};
use vne_core::seeding::{derive_seed, rng_from};
use vne_core::sim::run_scenario;
use vne_core::*;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn random_substrate(rng: &mut impl Rng, n: usize, link_prob: f64) -> SubstrateNetwork {
    let nodes = (0..n)
        .map(|id| {
            let cpu = rng.gen_range(5..=30) as f64;
            SubstrateNode {
                id,
                domain: 0,
                cpu_capacity: cpu,
                cpu_free: cpu,
                unit_price: rng.gen_range(1.0..10.0),
                delay: rng.gen_range(1.0..5.0),
                plr: rng.gen_range(0.01..0.5),
            }
        })
        .collect();
    let mut links = Vec::new();
    for b in 1..n {
        // a spanning tree keeps the graph connected
        let a = rng.gen_range(0..b);
        links.push((a, b));
        for c in 0..b {
            if c != a && rng.gen_bool(link_prob) {
                links.push((c, b));
            }
        }
    }
    let links = links
        .into_iter()
        .map(|(a, b)| {
            let bw = rng.gen_range(10..=40) as f64;
            SubstrateLink {
                endpoints: (a, b),
                bw_capacity: bw,
                bw_free: bw - rng.gen_range(0..=bw as u32 / 2) as f64,
                unit_price: rng.gen_range(1.0..10.0),
                delay: rng.gen_range(1.0..5.0),
            }
        })
        .collect();
    SubstrateNetwork::new(1, nodes, links).expect("valid random substrate")
}

fn random_request(rng: &mut impl Rng, n: usize, cpu_max: u32, bw_max: u32) -> VirtualNetworkRequest {
    let nodes = (0..n).map(|_| VirtualNode { cpu_demand: rng.gen_range(1..=cpu_max) as f64 }).collect();
    let mut links = Vec::new();
    for b in 1..n {
        links.push(VirtualLink { endpoints: (rng.gen_range(0..b), b), bw_demand: rng.gen_range(1..=bw_max) as f64 });
    }
    if n > 2 && rng.gen_bool(0.5) {
        links.push(VirtualLink { endpoints: (0, n - 1), bw_demand: rng.gen_range(1..=bw_max) as f64 });
    }
    VirtualNetworkRequest { id: 0, nodes, links, arrival: 0.0, lifetime: 1.0 }
}

/// Independent feasibility check: injective and within free CPU.
fn assignment_ok(s: &SubstrateNetwork, v: &VirtualNetworkRequest, genes: &[usize]) -> bool {
    let mut seen = std::collections::HashSet::new();
    genes.len() == v.nodes.len()
        && genes.iter().zip(&v.nodes).all(|(&g, vn)| g < s.nodes().len() && s.node(g).cpu_free >= vn.cpu_demand && seen.insert(g))
}

fn feasibility_suite() -> Outcome {
    let started = Instant::now();
    let (mut audited, mut violations, mut bad_best, mut runs) = (0, 0, 0, 0);
    for seed in 0..1000u64 {
        let mut rng = rng_from(derive_seed(0xFEA5, seed));
        let n = rng.gen_range(6..=10);
        let s = random_substrate(&mut rng, n, 0.3);
        let vn = rng.gen_range(2..=4);
        let v = random_request(&mut rng, vn, 12, 5);
        let params = SolverParams {
            pop_size: 8,
            max_iters: 15,
            rng_seed: seed,
            audit: true,
            baseline_mode: seed % 4 == 3,
            ..Default::default()
        };
        let Ok(out) = solve_nodes(&s, &v, &params, None, None) else { continue };
        runs += 1;
        audited += out.stats.individuals_audited;
        violations += out.stats.audit_violations;
        if !assignment_ok(&s, &v, &out.best.genes) || !is_feasible(&s, &v, &out.best.genes) {
            bad_best += 1;
        }
    }
    let elapsed = started.elapsed();
    outcome(
        violations == 0 && bad_best == 0 && runs >= 900 && elapsed < Duration::from_secs(60),
        format!("{runs} runs, {audited} individuals audited, {violations} violations, {bad_best} infeasible results, {:.1}s", elapsed.as_secs_f64()),
    )
}

/// Minimum over all simple paths of the in-order weight sum.
fn brute_force_min(s: &SubstrateNetwork, w: &[Option<f64>], from: usize, to: usize) -> Option<f64> {
    fn walk(s: &SubstrateNetwork, w: &[Option<f64>], at: usize, to: usize, acc: f64, seen: &mut Vec<bool>, best: &mut Option<f64>) {
        if at == to {
            if best.map_or(true, |b| acc < b) {
                *best = Some(acc);
            }
            return;
        }
        for &(next, l) in s.neighbors(at) {
            if seen[next] {
                continue;
            }
            let Some(weight) = w[l] else { continue };
            seen[next] = true;
            walk(s, w, next, to, acc + weight, seen, best);
            seen[next] = false;
        }
    }
    let mut seen = vec![false; s.nodes().len()];
    seen[from] = true;
    let mut best = None;
    walk(s, w, from, to, 0.0, &mut seen, &mut best);
    best
}

fn shortest_path_oracle() -> Outcome {
    let started = Instant::now();
    let (mut checked, mut mismatches) = (0, 0);
    for seed in 0..200u64 {
        let mut rng = rng_from(derive_seed(0x5107, seed));
        let n = rng.gen_range(3..=8);
        let s = random_substrate(&mut rng, n, 0.35);
        let vn = rng.gen_range(2..=n.min(4));
        let v = random_request(&mut rng, vn, 1, 12);
        let mut ids: Vec<usize> = (0..n).collect();
        rand::seq::SliceRandom::shuffle(ids.as_mut_slice(), &mut rng);
        let assignment = &ids[..v.nodes.len()];
        let balance = if seed % 2 == 0 { LoadBalance::default() } else { LoadBalance::Disabled };
        let mapped = map_links(&s, &v, assignment, balance, None);

        // Replay the mapping order with residuals and compare every path.
        let mut order: Vec<usize> = (0..v.links.len()).collect();
        order.sort_by(|&a, &b| v.links[b].bw_demand.total_cmp(&v.links[a].bw_demand));
        let mut free: Vec<f64> = s.links().iter().map(|l| l.bw_free).collect();
        for vl in order {
            let req = &v.links[vl];
            let w = balanced_weights_with(&s, &free, req.bw_demand, balance);
            let expected = brute_force_min(&s, &w.weights, assignment[req.endpoints.0], assignment[req.endpoints.1]);
            let got = match &mapped {
                Ok(paths) => Some(&paths[vl]),
                Err(LinkMapError::Unroutable { partial, .. }) => partial[vl].as_ref(),
                Err(e) => panic!("unexpected mapping error {e}"),
            };
            checked += 1;
            match (expected, got) {
                (Some(e), Some(p)) if w.path_weight(p) == Some(e) => {
                    for &l in p {
                        free[l] -= req.bw_demand;
                    }
                }
                (None, None) => break,
                _ => {
                    mismatches += 1;
                    break;
                }
            }
        }
    }
    let elapsed = started.elapsed();
    outcome(
        mismatches == 0 && elapsed < Duration::from_secs(30),
        format!("{checked} virtual links over 200 substrates, {mismatches} mismatches, {:.1}s", elapsed.as_secs_f64()),
    )
}

fn small_instance_optimality(rater: &FitnessNet) -> Outcome {
    let mut hits = 0;
    for seed in 0..20u64 {
        let mut rng = rng_from(derive_seed(0x0971, seed));
        let s = random_substrate(&mut rng, 5, 0.4);
        let v = random_request(&mut rng, 3, 5, 5);
        let mut optimum = f64::INFINITY;
        for a in 0..5 {
            for b in 0..5 {
                for c in 0..5 {
                    let genes = [a, b, c];
                    if assignment_ok(&s, &v, &genes) {
                        let m = plan_metrics(&s, &v, &genes, LoadBalance::default());
                        if m.routable() {
                            optimum = optimum.min(m.quotation);
                        }
                    }
                }
            }
        }
        let params = SolverParams { pop_size: 8, max_iters: 200, rng_seed: seed, ..Default::default() };
        let out = solve_nodes(&s, &v, &params, Some(rater), None).expect("3 nodes fit on 5");
        if out.metrics.routable() && out.metrics.quotation == optimum {
            hits += 1;
        }
    }
    outcome(hits >= 18, format!("{hits}/20 runs reached the enumerated optimum"))
}

fn gradient_check() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut compared = 0;
    let h = 1e-4;
    for seed in 0..50u64 {
        let mut rng = rng_from(derive_seed(0x6AAD, seed));
        let inputs = rng.gen_range(1..=5);
        let hidden = rng.gen_range(1..=8);
        let net = FitnessNet::random(inputs, hidden, 5, BackpropMode::Consistent, seed);
        let x: Vec<f64> = (0..inputs).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let target = rng.gen_range(1.0..5.0);
        let fw = net.forward_full(&x).unwrap();
        // ReLU kinks make finite differences meaningless close to zero.
        if fw.output_pre.abs() < 1e-3 || fw.hidden_pre.iter().any(|p| p.abs() < 1e-3) {
            continue;
        }
        let loss = |n: &FitnessNet| 0.5 * (n.forward(&x).unwrap() - target).powi(2);
        let (gw1, gb1, gw2, gb2) = net.gradients(&x, target).unwrap();
        let mut check = |analytic: f64, perturb: &dyn Fn(&mut FitnessNet, f64)| {
            let mut plus = net.clone();
            perturb(&mut plus, h);
            let mut minus = net.clone();
            perturb(&mut minus, -h);
            let numeric = (loss(&plus) - loss(&minus)) / (2.0 * h);
            let scale = analytic.abs().max(numeric.abs());
            let err = if scale < 1e-8 { (analytic - numeric).abs() } else { (analytic - numeric).abs() / scale };
            worst = worst.max(err);
            compared += 1;
        };
        for i in 0..inputs {
            for j in 0..hidden {
                check(gw1[i][j], &|n, d| n.hidden_weights[i][j] += d);
            }
        }
        for j in 0..hidden {
            check(gb1[j], &|n, d| n.hidden_biases[j] += d);
            check(gw2[j], &|n, d| n.output_weights[j] += d);
        }
        check(gb2, &|n, d| n.output_bias += d);
    }

    // Literal mode against hand values: y = 0.5, target 1.
    let mut literal = FitnessNet::zeros(1, 1, 3);
    literal.mode = BackpropMode::Literal;
    literal.output_bias = 0.5;
    let report = literal.train_step(&[0.0], 1.0).unwrap();
    let literal_ok = report.output_delta == -0.125 && literal.output_bias == 0.5 + 0.05 * -0.125;

    outcome(
        worst < 1e-4 && compared > 500 && literal_ok,
        format!("{compared} parameters, worst relative error {worst:.2e}; literal delta {}", report.output_delta),
    )
}

fn chaos_properties() -> Outcome {
    let mut rng = rng_from(0xC4A0);
    let mut state = ChaosState::random_admissible(4.0, &mut rng);
    let mut deciles = [0usize; 10];
    let mut in_range = true;
    let mut values = Vec::with_capacity(10_000);
    for _ in 0..10_000 {
        match state.next() {
            Ok(next) => state = next,
            Err(_) => {
                in_range = false;
                break;
            }
        }
        in_range &= state.x > 0.0 && state.x < 1.0;
        deciles[((state.x * 10.0) as usize).min(9)] += 1;
        values.push(state.x);
    }
    let density = values.iter().filter(|&&x| x >= 0.5).count() as f64 / values.len().max(1) as f64;
    let (mask, _) = chaos_mask(10_000, ChaosState::admissible(0.1234, 4.0).unwrap()).unwrap();
    let mask_density = mask.iter().filter(|&&m| m).count() as f64 / mask.len() as f64;
    outcome(
        in_range && deciles.iter().all(|&c| c > 0) && (0.4..=0.6).contains(&density) && (0.4..=0.6).contains(&mask_density),
        format!("decile counts {deciles:?}, mask densities {density:.3} and {mask_density:.3}"),
    )
}

fn conservation() -> Outcome {
    let cfg = ScenarioConfig::desk_scale();
    let out = run_scenario(&cfg, &SolverParams::default(), None).expect("desk scenario runs");
    let fin = &out.final_substrate;
    let restored = fin.nodes().iter().all(|n| n.cpu_free == n.cpu_capacity)
        && fin.links().iter().all(|l| l.bw_free == l.bw_capacity)
        && fin.active_allocations() == 0
        && *fin == out.initial;
    let t = &out.report.summary.totals;
    outcome(restored, format!("horizon {}, {} arrivals, {} accepted, residuals restored: {restored}", cfg.horizon, t.arrivals, t.accepted))
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 { xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (mean, var.sqrt())
}

/// Cohen's d of `a - b` with pooled standard deviation.
fn cohens_d(a: &[f64], b: &[f64]) -> f64 {
    let (ma, sa) = mean_sd(a);
    let (mb, sb) = mean_sd(b);
    let pooled = ((sa * sa + sb * sb) / 2.0).sqrt();
    if pooled > 0.0 {
        (ma - mb) / pooled
    } else {
        0.0
    }
}

const TREND_SEEDS: u64 = 20;
const TREND_HORIZON: f64 = 2_000.0;

struct TrendRuns {
    hfpa_quotation: Vec<f64>,
    ga_quotation: Vec<f64>,
    balanced_variance: Vec<f64>,
    unbalanced_variance: Vec<f64>,
    elapsed: Duration,
}

fn trend_runs(rater: &FitnessNet) -> TrendRuns {
    let started = Instant::now();
    let seeds: Vec<u64> = (0..TREND_SEEDS).collect();
    let run_seed = |seed: u64| {
        let cfg = ScenarioConfig { horizon: TREND_HORIZON, rng_seed: 1000 + seed, ..ScenarioConfig::desk_scale() };
        let hfpa = SolverParams { rng_seed: seed, ..Default::default() };
        let ga = SolverParams { rng_seed: seed, ..SolverParams::baseline() };
        let plain = SolverParams { load_balance: LoadBalance::Disabled, ..hfpa.clone() };
        let a = run_scenario(&cfg, &hfpa, Some(rater)).expect("scenario runs").report.summary;
        let b = run_scenario(&cfg, &ga, Some(rater)).expect("scenario runs").report.summary;
        let c = run_scenario(&cfg, &plain, Some(rater)).expect("scenario runs").report.summary;
        (
            a.totals.avg_quotation.unwrap_or(f64::NAN),
            b.totals.avg_quotation.unwrap_or(f64::NAN),
            a.mean_link_variance,
            c.mean_link_variance,
        )
    };
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(seeds.len());
    let mut results: Vec<(u64, (f64, f64, f64, f64))> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let seeds = &seeds;
                let run_seed = &run_seed;
                scope.spawn(move || seeds.iter().skip(w).step_by(workers).map(|&s| (s, run_seed(s))).collect::<Vec<_>>())
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("worker finished")).collect()
    });
    results.sort_by_key(|r| r.0);
    TrendRuns {
        hfpa_quotation: results.iter().map(|r| r.1 .0).collect(),
        ga_quotation: results.iter().map(|r| r.1 .1).collect(),
        balanced_variance: results.iter().map(|r| r.1 .2).collect(),
        unbalanced_variance: results.iter().map(|r| r.1 .3).collect(),
        elapsed: started.elapsed(),
    }
}

fn quotation_trend(t: &TrendRuns) -> Outcome {
    let (mh, sh) = mean_sd(&t.hfpa_quotation);
    let (mg, sg) = mean_sd(&t.ga_quotation);
    let wins = t.hfpa_quotation.iter().zip(&t.ga_quotation).filter(|(h, g)| h <= g).count();
    outcome(
        mh <= mg,
        format!(
            "average quotation BP-HFPA {mh:.1} ± {sh:.1} vs GA {mg:.1} ± {sg:.1}; Cohen's d {:.2}; BP-HFPA ≤ GA on {wins}/{TREND_SEEDS} seeds",
            cohens_d(&t.hfpa_quotation, &t.ga_quotation)
        ),
    )
}

fn balance_trend(t: &TrendRuns) -> Outcome {
    let (mb, sb) = mean_sd(&t.balanced_variance);
    let (mu, su) = mean_sd(&t.unbalanced_variance);
    outcome(
        mb < mu,
        format!(
            "mean link variance balanced {mb:.0} ± {sb:.0} vs disabled {mu:.0} ± {su:.0}; Cohen's d {:.2}",
            cohens_d(&t.balanced_variance, &t.unbalanced_variance)
        ),
    )
}

fn lifespan_arithmetic() -> Outcome {
    let values = [lifespan_of(10.0, 40.0, 4, 20, 1.0), lifespan_of(10.0, 40.0, 4, 50, 1.0), lifespan_of(10.0, 40.0, 4, 25, 1.0)];
    outcome(values == [5, 10, 5], format!("M=20/50/25 give {values:?}"))
}

fn determinism(rater: &FitnessNet) -> Outcome {
    let cfg = ScenarioConfig { horizon: 1_000.0, rng_seed: 77, ..ScenarioConfig::desk_scale() };
    let params = SolverParams { rng_seed: 5, ..Default::default() };
    let a = run_scenario(&cfg, &params, Some(rater)).unwrap().report;
    let b = run_scenario(&cfg, &params, Some(rater)).unwrap().report;
    let same = a.to_csv() == b.to_csv() && a.summary == b.summary;
    outcome(same, format!("{} CSV bytes, identical: {same}", a.to_csv().len()))
}

fn main() {
    let cfg = ScenarioConfig::desk_scale();
    let (rater, _) = train_rater(&cfg, &RaterConfig::default()).expect("rater trains");

    let mut results: Vec<(&str, Outcome)> = vec![
        ("1 feasibility audit", feasibility_suite()),
        ("2 shortest-path oracle", shortest_path_oracle()),
        ("3 small-instance optimality", small_instance_optimality(&rater)),
        ("4 gradient check", gradient_check()),
        ("5 chaos properties", chaos_properties()),
        ("6 conservation", conservation()),
    ];
    let trend = trend_runs(&rater);
    results.push(("7 quotation trend", quotation_trend(&trend)));
    results.push(("8 load-balance trend", balance_trend(&trend)));
    results.push(("9 lifespan arithmetic", lifespan_arithmetic()));
    results.push(("10 determinism", determinism(&rater)));
    let secs = trend.elapsed.as_secs_f64();
    results.push((
        "11 trend runtime",
        outcome(secs < 600.0, format!("{TREND_SEEDS} seeds x 3 configurations in {secs:.1}s")),
    ));

    let mut failed = 0;
    for (name, o) in &results {
        println!("{} criterion {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
