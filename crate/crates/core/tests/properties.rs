mod common;

use ndarray::{Array1, Array2};
use proptest::prelude::*;

use deepfreight::env::{run_episode, Encoder, EnvConfig, FleetState, RandomPolicy};
use deepfreight::matcher::{audit, build_graph, match_all, Decision, MatchMode, MatchOptions};
use deepfreight::milp::simplex::{solve_lp, LpData, LpStatus};
use deepfreight::milp::{MilpModel, Sense, VarKind};
use deepfreight::qmix::{mix_backward, mix_forward, Dims, QmixParams};
use deepfreight::rng::Rng;
use deepfreight::world::{generate_fleet, generate_requests, Request, ScenarioConfig, TruckSpec, WorldNetwork};

/// Minimum of `c.x` over a 2-d polygon by checking every pairwise
/// intersection of its boundary lines.
fn vertex_minimum(lines: &[([f64; 2], f64)], le: &[([f64; 2], f64)], cost: [f64; 2]) -> Option<f64> {
    let mut best: Option<f64> = None;
    for (i, (a, p)) in lines.iter().enumerate() {
        for (b, q) in &lines[i + 1..] {
            let det = a[0] * b[1] - a[1] * b[0];
            if det.abs() < 1e-9 {
                continue;
            }
            let x = [(p * b[1] - a[1] * q) / det, (a[0] * q - p * b[0]) / det];
            if le.iter().all(|(c, r)| c[0] * x[0] + c[1] * x[1] <= r + 1e-7) {
                let v = cost[0] * x[0] + cost[1] * x[1];
                best = Some(best.map_or(v, |b: f64| b.min(v)));
            }
        }
    }
    best
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn simplex_agrees_with_vertex_enumeration(
        ub in prop::array::uniform2(1.0f64..10.0),
        rows in prop::collection::vec((prop::array::uniform2(-5.0f64..5.0), -5.0f64..20.0), 0..4),
        cost in prop::array::uniform2(-5.0f64..5.0),
    ) {
        let mut m = MilpModel::default();
        m.add_var("a".into(), VarKind::Continuous, 0.0, ub[0]);
        m.add_var("b".into(), VarKind::Continuous, 0.0, ub[1]);
        for (k, (c, r)) in rows.iter().enumerate() {
            m.add_row(format!("c{k}"), vec![(0, c[0]), (1, c[1])], Sense::Le, *r);
        }
        m.objective = vec![(0, cost[0]), (1, cost[1])];

        // Box edges written as `<=` rows for the oracle.
        let mut le: Vec<([f64; 2], f64)> = rows.clone();
        le.extend([([-1.0, 0.0], 0.0), ([0.0, -1.0], 0.0), ([1.0, 0.0], ub[0]), ([0.0, 1.0], ub[1])]);
        let oracle = vertex_minimum(&le, &le, cost);

        let data = LpData::from_model(&m);
        let (lo, hi) = LpData::bounds(&m);
        let s = solve_lp(&data, &lo, &hi);
        match oracle {
            Some(v) => {
                prop_assert_eq!(s.status, LpStatus::Optimal);
                prop_assert!((s.objective - v).abs() <= 1e-6 * v.abs().max(1.0), "simplex {} vertices {}", s.objective, v);
                prop_assert!(m.max_violation(&s.x) <= 1e-7);
            }
            None => prop_assert_eq!(s.status, LpStatus::Infeasible),
        }
    }

    #[test]
    fn mixer_is_monotone_in_every_agent(seed in any::<u64>(), agents in 1usize..6) {
        let dims = Dims { obs_len: 2, num_actions: 3, num_agents: agents, state_len: 4, hidden: 5, mix_hidden: 6 };
        let mut rng = Rng::new(seed);
        let p = QmixParams::init(dims, &mut rng);
        let q = Array2::from_shape_fn((3, agents), |_| rng.next_f64() * 20.0 - 10.0);
        let s = Array2::from_shape_fn((3, 4), |_| rng.next_f64() * 6.0 - 3.0);
        let (_, cache) = mix_forward(&p.mixer, &dims, &q, &s);
        let mut g = p.mixer.zeros_like();
        let dq = mix_backward(&p.mixer, &dims, &cache, Array1::ones(3).view(), &mut g);
        prop_assert!(dq.iter().all(|&d| d >= -1e-9), "{:?}", dq);
    }

    #[test]
    fn matching_never_breaks_capacity_or_path_rules(seed in any::<u64>(), single in any::<bool>()) {
        let mut rng = Rng::new(seed);
        let n = 2 + rng.below(4) as usize;
        let fleet: Vec<TruckSpec> = (0..1 + rng.below(4) as usize)
            .map(|id| TruckSpec { id, initial_location: rng.below(n as u64) as usize, capacity: rng.range_inclusive(5, 60) })
            .collect();
        let mut decisions = Vec::new();
        for t in &fleet {
            let (mut at, mut clock) = (t.initial_location, rng.below(3600));
            for epoch in 1..=4 {
                let to = rng.below(n as u64) as usize;
                if to != at {
                    let eta = rng.range_inclusive(600, 7200);
                    decisions.push(Decision { truck: t.id, epoch, from: at, to, depart_s: clock, eta_s: eta });
                    clock += eta;
                    at = to;
                }
            }
        }
        let mut g = build_graph(&decisions, &fleet, n).unwrap();
        let requests: Vec<Request> = (0..20)
            .map(|id| Request {
                id,
                source: rng.below(n as u64) as usize,
                destination: rng.below(n as u64) as usize,
                size: rng.range_inclusive(1, 30),
            })
            .collect();
        let mode = if single { MatchMode::SingleTruck } else { MatchMode::MultiTransfer };
        let result = match_all(&mut g, &requests, &MatchOptions { mode, ..Default::default() });
        let routed: Vec<_> = result.matched().map(|(r, p)| (*r, p.clone())).collect();
        let mut load = vec![0u64; g.edges().len()];
        for (r, p) in &routed {
            for &e in &p.edges {
                load[e] += r.size;
            }
        }
        for (e, edge) in g.edges().iter().enumerate() {
            prop_assert_eq!(edge.remaining + load[e], edge.capacity);
        }
        let issues = audit(&g, &routed, mode);
        prop_assert!(issues.is_empty(), "{:?}", issues);
    }

    #[test]
    fn random_episodes_only_take_unmasked_actions(seed in any::<u64>()) {
        let net = WorldNetwork::sample();
        let sc = ScenarioConfig { num_trucks: 3, num_requests: 60, epochs_per_episode: 5, rng_seed: seed, ..Default::default() };
        let mut rng = Rng::new(seed);
        let specs = generate_fleet(&net, &sc, &mut rng);
        let requests = generate_requests(&net, &sc, &mut rng);
        let mut fleet = FleetState::from_specs(&specs, net.num_locations());
        let env = EnvConfig::from_scenario(&sc);
        let enc = Encoder::new(net.num_locations(), env.epochs, sc.num_trucks, 10.0);
        let t = run_episode(&mut RandomPolicy, &net, &mut fleet, &requests, &env, &enc, &mut rng).unwrap();
        for rec in &t.epochs {
            for (&a, mask) in rec.actions.iter().zip(&rec.masks) {
                prop_assert!(!mask[a]);
                // The no-op action stays available.
                prop_assert!(!mask[mask.len() - 1]);
            }
        }
        for e in t.graph.edges() {
            prop_assert!(e.depart_s + e.eta_s <= sc.episode_time_limit_s);
        }
    }
}
