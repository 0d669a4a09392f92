use proptest::prelude::*;
use rand::Rng;
use vne_core::fitness::{blended_fitness, FitnessNet};
use vne_core::hfpa::{apply_pollen, feasibility_repair, is_feasible, raw_pollen, sign_pollen, ChaosState};
use vne_core::hfpa::random_assignment;
use vne_core::linkmap::{balanced_weights, LinkMapError};
use vne_core::netmodel::{SubstrateLink, SubstrateNode, VirtualLink, VirtualNode};
use vne_core::seeding::rng_from;
use vne_core::sim::simulate;
use vne_core::topogen::{gen_schedule, gen_substrate};
use vne_core::*;

fn substrate(seed: u64, n: usize) -> SubstrateNetwork {
    let mut rng = rng_from(seed);
    let nodes = (0..n)
        .map(|id| SubstrateNode {
            id,
            domain: 0,
            cpu_capacity: 20.0,
            cpu_free: 20.0,
            unit_price: rng.gen_range(1.0..5.0),
            delay: 1.0,
            plr: 0.1,
        })
        .collect();
    let mut links = Vec::new();
    for b in 1..n {
        links.push((rng.gen_range(0..b), b));
        for a in 0..b {
            if rng.gen_bool(0.3) && !links.contains(&(a, b)) {
                links.push((a, b));
            }
        }
    }
    let links = links
        .into_iter()
        .map(|(a, b)| SubstrateLink {
            endpoints: (a, b),
            bw_capacity: 30.0,
            bw_free: 30.0,
            unit_price: rng.gen_range(1.0..5.0),
            delay: 1.0,
        })
        .collect();
    SubstrateNetwork::new(1, nodes, links).unwrap()
}

fn request(seed: u64, n: usize) -> VirtualNetworkRequest {
    let mut rng = rng_from(seed ^ 0xABCD);
    VirtualNetworkRequest {
        id: seed,
        nodes: (0..n).map(|_| VirtualNode { cpu_demand: rng.gen_range(1..=6) as f64 }).collect(),
        links: (1..n)
            .map(|b| VirtualLink { endpoints: (rng.gen_range(0..b), b), bw_demand: rng.gen_range(1..=8) as f64 })
            .collect(),
        arrival: 0.0,
        lifetime: 1.0,
    }
}

fn plan_for(s: &SubstrateNetwork, v: &VirtualNetworkRequest, seed: u64) -> Option<EmbeddingPlan> {
    let genes = random_assignment(s, v, &mut rng_from(seed))?;
    let paths = map_links(s, v, &genes, LoadBalance::default(), None).ok()?;
    Some(EmbeddingPlan { node_assignment: genes, link_paths: paths })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn allocate_release_conserves_resources(seed in any::<u64>(), n in 4usize..9, k in 1usize..6) {
        let initial = substrate(seed, n);
        let mut s = initial.clone();
        let mut live = Vec::new();
        for i in 0..k as u64 {
            let v = VirtualNetworkRequest { id: i, ..request(seed.wrapping_add(i), 3) };
            if let Some(plan) = plan_for(&s, &v, seed ^ i) {
                s.allocate(&v, &plan).unwrap();
                live.push((v, plan));
            }
        }
        // release in an order unrelated to allocation
        let mut rng = rng_from(seed);
        while !live.is_empty() {
            let (v, plan) = live.swap_remove(rng.gen_range(0..live.len()));
            s.release(&v, &plan).unwrap();
        }
        prop_assert_eq!(s, initial);
    }

    #[test]
    fn quotation_scales_with_demands(seed in any::<u64>(), factor in 1u32..5) {
        let s = substrate(seed, 6);
        let v = request(seed, 3);
        let Some(plan) = plan_for(&s, &v, seed) else { return Ok(()) };
        let mut scaled = v.clone();
        for n in &mut scaled.nodes { n.cpu_demand *= factor as f64; }
        for l in &mut scaled.links { l.bw_demand *= factor as f64; }
        let q = s.quotation(&v, &plan).unwrap();
        let qk = s.quotation(&scaled, &plan).unwrap();
        prop_assert!((qk - factor as f64 * q).abs() <= 1e-9 * qk.abs().max(1.0));
    }

    #[test]
    fn sign_pollen_steps_by_at_most_one(a in prop::collection::vec(0usize..50, 1..10), seed in any::<u64>()) {
        let mut rng = rng_from(seed);
        let b: Vec<usize> = a.iter().map(|_| rng.gen_range(0..50)).collect();
        let x: Vec<usize> = a.iter().map(|_| rng.gen_range(0..50)).collect();
        let step = sign_pollen(&raw_pollen(&a, &b));
        prop_assert!(step.iter().all(|d| (-1..=1).contains(d)));
        let moved = apply_pollen(&x, &step);
        for (old, new) in x.iter().zip(&moved) {
            prop_assert!(*new == usize::MAX || old.abs_diff(*new) <= 1);
        }
    }

    #[test]
    fn repair_yields_feasible_or_rejects(seed in any::<u64>(), n in 3usize..9, vn in 2usize..5,
                                          genes in prop::collection::vec(0usize..12, 2..5)) {
        let s = substrate(seed, n);
        let v = request(seed, vn);
        let mut genes = genes;
        genes.resize(vn, 0);
        match feasibility_repair(&genes, &s, &v, &mut rng_from(seed)) {
            Some(fixed) => prop_assert!(is_feasible(&s, &v, &fixed)),
            None => prop_assert!(n < vn),
        }
    }

    #[test]
    fn chaos_orbits_cover_every_decile(seed in any::<u64>()) {
        let mut state = ChaosState::random_admissible(4.0, &mut rng_from(seed));
        let mut deciles = [0usize; 10];
        for _ in 0..10_000 {
            state = state.next().unwrap();
            prop_assert!(state.x > 0.0 && state.x < 1.0);
            deciles[(state.x * 10.0) as usize] += 1;
        }
        prop_assert!(deciles.iter().all(|&c| c > 0));
    }

    #[test]
    fn blended_fitness_is_monotone(f in 0.0f64..1e4, df in 0.0f64..1e3, r in 0.0f64..5.0, dr in 0.0f64..2.0, w in 0.0f64..=1.0) {
        prop_assert!(blended_fitness(r, f + df, w, 3) >= blended_fitness(r, f, w, 3));
        prop_assert!(blended_fitness(r + dr, f, w, 3) >= blended_fitness(r, f, w, 3) - 1e-12);
    }

    #[test]
    fn forward_output_is_non_negative(seed in any::<u64>(), x in prop::collection::vec(-2.0f64..2.0, 5)) {
        let net = FitnessNet::random(5, 8, 3, BackpropMode::Consistent, seed);
        prop_assert!(net.forward(&x).unwrap() >= 0.0);
    }

    #[test]
    fn mapped_paths_respect_bandwidth_and_weights(seed in any::<u64>(), n in 4usize..9, demand in 1u32..40) {
        let s = substrate(seed, n);
        let w = balanced_weights(&s, demand as f64, LoadBalance::default());
        for (l, weight) in s.links().iter().zip(&w.weights) {
            match weight {
                Some(x) => prop_assert!(*x >= l.unit_price && l.bw_free >= demand as f64),
                None => prop_assert!(l.bw_free < demand as f64),
            }
        }
        let v = request(seed, 3);
        let genes = random_assignment(&s, &v, &mut rng_from(seed)).unwrap();
        let before = s.clone();
        match map_links(&s, &v, &genes, LoadBalance::default(), None) {
            Ok(paths) => {
                let mut used = vec![0.0; s.links().len()];
                for (p, l) in paths.iter().zip(&v.links) {
                    let nodes = s.path_nodes(genes[l.endpoints.0], p).unwrap();
                    prop_assert_eq!(*nodes.last().unwrap(), genes[l.endpoints.1]);
                    for &sl in p { used[sl] += l.bw_demand; }
                }
                for (l, u) in s.links().iter().zip(&used) {
                    prop_assert!(*u <= l.bw_free);
                }
            }
            Err(LinkMapError::Unroutable { .. }) => {}
            Err(e) => prop_assert!(false, "unexpected error {e}"),
        }
        prop_assert_eq!(s, before);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn simulation_counts_are_consistent(seed in any::<u64>()) {
        let cfg = ScenarioConfig { horizon: 600.0, rng_seed: seed, ..ScenarioConfig::desk_scale() };
        let params = SolverParams { pop_size: 6, max_iters: 10, rng_seed: seed, ..Default::default() };
        let s = gen_substrate(&cfg).unwrap();
        let schedule = gen_schedule(&cfg).unwrap();
        let out = simulate(s, &schedule, cfg.horizon, &params, None).unwrap();
        let t = &out.report.summary.totals;
        prop_assert_eq!(t.accepted + t.refused, t.arrivals);
        prop_assert_eq!(t.arrivals, schedule.len());
        if let Some(r) = t.acceptance_ratio { prop_assert!((0.0..=1.0).contains(&r)); }
        prop_assert_eq!(&out.final_substrate, &out.initial);
        for b in &out.report.buckets {
            prop_assert_eq!(b.metrics.accepted + b.metrics.refused, b.metrics.arrivals);
        }
    }
}
