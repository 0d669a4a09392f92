//! Browser bindings for the demo page. Every export returns a JSON string;
//! failures come back as `{"error": "..."}`.

use serde::Serialize;
use serde_json::json;
use vne_core::hfpa::{lifespan_of, ChaosState, SolveOutcome, CHAOS_U};
use vne_core::topogen::{gen_substrate, gen_vnr};
use vne_core::{solve_nodes, ScenarioConfig, SolverParams};
use wasm_bindgen::prelude::*;

fn respond<T: Serialize>(result: Result<T, String>) -> String {
    let value = match result {
        Ok(v) => serde_json::to_value(v).unwrap_or_else(|e| json!({ "error": e.to_string() })),
        Err(e) => json!({ "error": e }),
    };
    value.to_string()
}

#[derive(Serialize)]
struct Orbit {
    values: Vec<f64>,
    deciles: [usize; 10],
    mask_density: f64,
    /// Step at which rounding drove the orbit onto 0, if it did.
    collapsed_at: Option<usize>,
}

fn orbit(x0: f64, steps: u32) -> Result<Orbit, String> {
    if steps == 0 || steps > 100_000 {
        return Err("steps must be in 1..=100000".into());
    }
    let mut s = ChaosState::admissible(x0, CHAOS_U).map_err(|e| e.to_string())?;
    let mut values = Vec::with_capacity(steps as usize);
    let mut collapsed_at = None;
    for i in 0..steps as usize {
        match s.next() {
            Ok(n) if n.x > 0.0 && n.x < 1.0 => {
                s = n;
                values.push(n.x);
            }
            _ => {
                collapsed_at = Some(i);
                break;
            }
        }
    }
    let mut deciles = [0; 10];
    for &x in &values {
        deciles[((x * 10.0) as usize).min(9)] += 1;
    }
    let high = values.iter().filter(|&&x| x >= 0.5).count();
    let mask_density = if values.is_empty() { 0.0 } else { high as f64 / values.len() as f64 };
    Ok(Orbit { values, deciles, mask_density, collapsed_at })
}

/// Iterates the logistic map from `x0` and bins the orbit.
#[wasm_bindgen]
pub fn chaos_orbit(x0: f64, steps: u32) -> String {
    respond(orbit(x0, steps))
}

#[derive(Serialize)]
struct Run {
    genes: Vec<usize>,
    quotation: f64,
    paths: Option<Vec<Vec<usize>>>,
    /// Best fitness after each iteration.
    trace: Vec<f64>,
    evaluations: usize,
}

impl From<SolveOutcome> for Run {
    fn from(o: SolveOutcome) -> Self {
        Run {
            genes: o.best.genes,
            quotation: o.metrics.quotation,
            paths: o.metrics.paths.clone(),
            trace: o.trace.iter().map(|t| t.best_fitness).collect(),
            evaluations: o.stats.evaluations,
        }
    }
}

fn embed(seed: u32, pop: u32, iters: u32) -> Result<serde_json::Value, String> {
    let cfg = ScenarioConfig { rng_seed: seed as u64, ..ScenarioConfig::desk_scale() };
    let s = gen_substrate(&cfg).map_err(|e| e.to_string())?;
    let v = gen_vnr(&cfg, seed as u64);
    let params = SolverParams { pop_size: pop as usize, max_iters: iters as usize, rng_seed: seed as u64, ..Default::default() };
    let hfpa = solve_nodes(&s, &v, &params, None, None).map_err(|e| e.to_string())?;
    let ga_params = SolverParams { baseline_mode: true, ..params };
    let ga = solve_nodes(&s, &v, &ga_params, None, None).map_err(|e| e.to_string())?;
    let nodes: Vec<_> = s.nodes().iter().map(|n| json!({ "domain": n.domain, "cpu": n.cpu_capacity, "price": n.unit_price })).collect();
    let links: Vec<_> = s.links().iter().map(|l| json!({ "a": l.endpoints.0, "b": l.endpoints.1, "bw": l.bw_capacity, "price": l.unit_price })).collect();
    Ok(json!({
        "substrate": { "domains": s.domain_count(), "nodes": nodes, "links": links },
        "request": v,
        "hfpa": Run::from(hfpa),
        "ga": Run::from(ga),
    }))
}

/// Embeds one generated request on a small substrate with both node mappers.
#[wasm_bindgen]
pub fn embed_demo(seed: u32, pop: u32, iters: u32) -> String {
    respond(embed(seed, pop, iters))
}

fn lifespans(pop: u32, iters: u32, life_factor: f64) -> Result<serde_json::Value, String> {
    if pop < 2 || iters == 0 || !(life_factor > 0.0 && life_factor <= 3.0) {
        return Err("need pop >= 2, iters >= 1 and 0 < life_factor <= 3".into());
    }
    // share of the population's mean fitness, 0 to 3 in steps of 0.1
    let shares: Vec<f64> = (0..=30).map(|i| i as f64 / 10.0).collect();
    let sum = pop as f64;
    let life: Vec<u32> = shares.iter().map(|&f| lifespan_of(f, sum, pop as usize, iters as usize, life_factor)).collect();
    Ok(json!({ "shares": shares, "lifespans": life }))
}

/// Lifespan as a function of an individual's fitness share.
#[wasm_bindgen]
pub fn lifespan_curve(pop: u32, iters: u32, life_factor: f64) -> String {
    respond(lifespans(pop, iters, life_factor))
}
