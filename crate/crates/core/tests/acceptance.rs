//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails. The checks run concurrently; the learning-signal run
//! dominates the wall time.

mod common;

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use ndarray::{Array1, Array2};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use deepfreight::env::{run_episode, Encoder, EnvConfig, EpochRecord, FleetState, RandomPolicy};
use deepfreight::hybrid::{run_hybrid, HybridConfig};
use deepfreight::matcher::{
    audit, build_graph, feasible_paths, match_all, match_request, Decision, DispatchGraph, MatchMode, MatchOptions,
    RequestStatus,
};
use deepfreight::milp::{build_model, solve, validate_solution, MilpInstance, SolveLimits, SolveStatus, VarLayout};
use deepfreight::qmix::{evaluate, evaluate_policy, mix_backward, mix_forward, td_targets, Dims, QmixParams, TrainerConfig, Trainer};
use deepfreight::rng::Rng;
use deepfreight::world::{generate_fleet, generate_requests, Request, ScenarioConfig, TruckSpec, WorldNetwork};

type Check = fn() -> Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(started: Instant, limit: Duration, what: &str) -> Result<(), String> {
    let t = started.elapsed();
    ensure(t < limit, || format!("{what} took {:.1} s, limit {:.0} s", t.as_secs_f64(), limit.as_secs_f64()))
}

fn dec(truck: usize, from: usize, to: usize, depart_s: u64, eta_s: u64) -> Decision {
    Decision { truck, epoch: 1, from, to, depart_s, eta_s }
}

/// Four stops A..D: A>D, A>B, B>D, B>C, C>D on four trucks.
fn fig3(etas: [u64; 5]) -> DispatchGraph {
    let (a, b, c, d) = (0, 1, 2, 3);
    let mut g = DispatchGraph::new(4, vec![100; 4]);
    for x in [
        dec(0, a, d, 0, etas[0]),
        dec(1, a, b, 0, etas[1]),
        dec(2, b, d, 20_000, etas[2]),
        dec(1, b, c, etas[1], etas[3]),
        dec(3, c, d, 40_000, etas[4]),
    ] {
        g.add_decision(&x).unwrap();
    }
    g
}

fn route(g: &DispatchGraph, edges: &[usize]) -> Vec<(usize, usize)> {
    edges.iter().map(|&e| (g.edge(e).from, g.edge(e).to)).collect()
}

fn c1_matching_fidelity() -> Result<String, String> {
    let started = Instant::now();
    let req = |id, s, d| Request { id, source: s, destination: d, size: 1 };
    let opts = MatchOptions::default();
    let g = fig3([3600; 5]);
    let n = feasible_paths(&g, &req(0, 0, 3), &opts).paths.len();
    ensure(n == 3, || format!("{n} feasible paths, expected 3"))?;

    // A>B and B>C already carry a package and C>D is the cheapest leg.
    let mut g = fig3([7200, 3600, 7200, 3600, 1800]);
    ensure(matches!(match_request(&mut g, &req(0, 0, 2), &opts), RequestStatus::Matched(_)), || "pre-match failed".into())?;
    let chosen = match match_request(&mut g, &req(1, 0, 3), &opts) {
        RequestStatus::Matched(p) => route(&g, &p.edges),
        other => return Err(format!("request unmatched: {other:?}")),
    };
    ensure(chosen == [(0, 1), (1, 2), (2, 3)], || format!("selected {chosen:?}"))?;

    let mut g = fig3([3600; 5]);
    let tie = match match_request(&mut g, &req(0, 0, 3), &opts) {
        RequestStatus::Matched(p) => route(&g, &p.edges),
        other => return Err(format!("request unmatched: {other:?}")),
    };
    ensure(tie == [(0, 3)], || format!("full tie selected {tie:?}"))?;
    within(started, Duration::from_secs(1), "matching fixture")?;
    Ok("3 paths; A>B>C>D with pre-matched legs; A>D on full ties".into())
}

fn random_world(rng: &mut Rng, m: usize) -> WorldNetwork {
    let pops: Vec<u64> = (0..m).map(|_| rng.range_inclusive(50_000, 1_000_000)).collect();
    let mut eta = vec![vec![0u64; m]; m];
    for i in 0..m {
        for j in i + 1..m {
            let t = rng.range_inclusive(3600, 8 * 3600);
            eta[i][j] = t;
            eta[j][i] = t;
        }
    }
    WorldNetwork::from_parts(&pops, eta, 1.0).unwrap()
}

fn c2_multi_transfer_dominance() -> Result<String, String> {
    let started = Instant::now();
    let (mut strictly, mut total_multi, mut total_single) = (0usize, 0usize, 0usize);
    for s in 0..200u64 {
        let mut rng = Rng::derive(2_000 + s, 0);
        let net = random_world(&mut rng, 5);
        let sc = ScenarioConfig { num_trucks: 4, num_requests: 500, rng_seed: s, ..Default::default() };
        let specs = generate_fleet(&net, &sc, &mut rng);
        let requests = generate_requests(&net, &sc, &mut rng);
        let mut fleet = FleetState::from_specs(&specs, 5);
        let env = EnvConfig::from_scenario(&sc);
        let enc = Encoder::new(5, env.epochs, 4, 100.0);
        let t = run_episode(&mut RandomPolicy, &net, &mut fleet, &requests, &env, &enc, &mut rng).map_err(|e| e.to_string())?;
        let decisions: Vec<Decision> = t.graph.edges().iter().map(|e| e.decision()).collect();
        let serve = |mode| {
            let mut g = build_graph(&decisions, &specs, 5).unwrap();
            match_all(&mut g, &requests, &MatchOptions { mode, ..Default::default() }).served()
        };
        let (multi, single) = (serve(MatchMode::MultiTransfer), serve(MatchMode::SingleTruck));
        ensure(multi >= single, || format!("scenario {s}: multi {multi} < single {single}"))?;
        strictly += usize::from(multi > single);
        total_multi += multi;
        total_single += single;
    }
    ensure(strictly >= 20, || format!("multi-transfer strictly better in only {strictly}/200"))?;
    within(started, Duration::from_secs(120), "200 scenarios")?;
    Ok(format!(
        "multi >= single on 200/200, strictly more on {strictly}/200 (served {total_multi} vs {total_single})"
    ))
}

fn c3_milp_exactness() -> Result<String, String> {
    let started = Instant::now();
    let mut rng = Rng::new(303);
    let mut worst: f64 = 0.0;
    for k in 0..50 {
        let inst = common::random_milp_instance(&mut rng);
        let sol = solve(&build_model(&inst), &SolveLimits::default());
        ensure(sol.status == SolveStatus::Optimal, || format!("instance {k}: {:?}", sol.status))?;
        let oracle = common::milp_enumerate(&inst);
        let rel = (sol.objective - oracle).abs() / oracle.abs().max(1.0);
        worst = worst.max(rel);
        ensure(rel <= 1e-6, || format!("instance {k}: solver {} vs enumeration {oracle}", sol.objective))?;
        let report = validate_solution(&inst, &sol);
        ensure(report.is_ok(), || format!("instance {k}: {:?}", report.violations))?;
    }
    within(started, Duration::from_secs(60), "50 instances")?;
    Ok(format!("50/50 optimal and valid, worst relative gap to enumeration {worst:.1e}"))
}

fn c4_linearization_identity() -> Result<String, String> {
    let mut rng = Rng::new(404);
    for trial in 0..10_000 {
        let m = 2 + rng.below(4) as usize;
        let n = 1 + rng.below(3) as usize;
        let mut demand = vec![vec![0u64; m]; m];
        for (i, row) in demand.iter_mut().enumerate() {
            for (j, d) in row.iter_mut().enumerate() {
                if i != j && rng.below(3) > 0 {
                    *d = rng.range_inclusive(1, 500);
                }
            }
        }
        let inst = MilpInstance {
            num_locations: m,
            depots: vec![0; n],
            travel_s: vec![vec![60; m]; m],
            demand: demand.clone(),
            capacity: 1000,
            time_limits_s: vec![1; n],
            w_time: 0.0,
            w_unserved: 1.0,
        };
        let model = build_model(&inst);
        let layout = VarLayout::of(&inst);
        let mut x = vec![0.0; model.variables.len()];
        // r[i][j][k] with at most one taker per cell.
        let mut r = vec![vec![vec![0u64; n]; m]; m];
        for i in 0..m {
            for j in 0..m {
                if i == j {
                    continue;
                }
                let k = rng.below(n as u64 + 1) as usize;
                if k < n {
                    r[i][j][k] = 1;
                    x[layout.r(i, j, k)] = 1.0;
                }
            }
        }
        let mut product_form = 0u64;
        let mut linear_form = 0u64;
        for i in 0..m {
            for j in 0..m {
                let prod: u64 = (0..n).map(|k| 1 - r[i][j][k]).product();
                let sum: u64 = (0..n).map(|k| r[i][j][k]).sum();
                product_form += demand[i][j] * prod;
                linear_form += demand[i][j] * (1 - sum);
            }
        }
        ensure(product_form == linear_form, || format!("trial {trial}: {product_form} vs {linear_form}"))?;
        let modelled = model.objective_value(&x);
        ensure(modelled == product_form as f64, || {
            format!("trial {trial}: model objective {modelled} vs product form {product_form}")
        })?;
    }
    Ok("10000/10000 assignments: linear and product forms agree exactly, model objective included".into())
}

fn c5_gradient_correctness() -> Result<String, String> {
    let (params, batch) = common::toy_batch(2, 3, 2, 505);
    let refs: Vec<&[EpochRecord]> = batch.iter().map(|e| e.as_slice()).collect();
    let target = QmixParams::init(params.dims, &mut Rng::new(506));
    let (targets, _) = td_targets(&refs, &target, 0.99).map_err(|e| e.to_string())?;
    let errs = common::loss_gradient_errors(&params, &batch, &targets, 1e-5);
    let (name, worst) = errs
        .iter()
        .cloned()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .ok_or("no parameters")?;
    ensure(errs.iter().all(|(_, e)| *e < 1e-4), || format!("{name}: relative error {worst:.2e}"))?;
    Ok(format!("{} tensors checked, worst relative error {worst:.2e} ({name})", errs.len()))
}

fn c6_mixing_monotonicity() -> Result<String, String> {
    let mut rng = Rng::new(606);
    let mut lowest = f64::INFINITY;
    for probe in 0..1000 {
        let agents = 2 + probe % 4;
        let dims = Dims { obs_len: 3, num_actions: 3, num_agents: agents, state_len: 6, hidden: 8, mix_hidden: 8 };
        let p = QmixParams::init(dims, &mut Rng::derive(606, probe as u64));
        let q = Array2::from_shape_fn((1, agents), |_| rng.next_f64() * 40.0 - 20.0);
        let s = Array2::from_shape_fn((1, 6), |_| rng.next_f64() * 10.0 - 5.0);
        let (_, cache) = mix_forward(&p.mixer, &dims, &q, &s);
        let mut g = p.mixer.zeros_like();
        let dq = mix_backward(&p.mixer, &dims, &cache, Array1::ones(1).view(), &mut g);
        for &d in dq.iter() {
            lowest = lowest.min(d);
        }
        ensure(dq.iter().all(|&d| d >= -1e-9), || format!("probe {probe}: gradient {dq:?}"))?;
    }
    Ok(format!("1000 probes, smallest dQtot/dq = {lowest:.3e}"))
}

fn c7_learning_signal() -> Result<String, String> {
    let started = Instant::now();
    let net = common::toy_world();
    let sc = common::toy_scenario(2);
    let cfg = TrainerConfig { episodes: 400, ..Default::default() };
    let mut trainer = Trainer::new(&net, &cfg, &sc).map_err(|e| e.to_string())?;
    let scale = trainer.checkpoint().volume_scale;
    let baseline = evaluate_policy(&mut RandomPolicy, &net, &sc, scale, 50).map_err(|e| e.to_string())?;
    let mut best = f64::NEG_INFINITY;
    for _ in 0..cfg.episodes {
        let m = trainer.train_episode().map_err(|e| e.to_string())?;
        best = best.max(m.reward);
    }
    let greedy = evaluate(&trainer.checkpoint(), &net, &sc, 50).map_err(|e| e.to_string())?;
    let needed = baseline.mean_reward + 0.2 * (best - baseline.mean_reward);
    let summary = format!(
        "greedy {:.4} vs random {:.4}, run max {:.4}, threshold {:.4}",
        greedy.mean_reward, baseline.mean_reward, best, needed
    );
    ensure(greedy.mean_reward >= needed, || summary.clone())?;
    within(started, Duration::from_secs(15 * 60), "training")?;
    Ok(summary)
}

fn c8_hybrid_completeness() -> Result<String, String> {
    let started = Instant::now();
    let net = common::toy_world();
    let sc = common::toy_scenario(31);
    // The checkpoint always idles, so every request falls to the rescue
    // stage; 300 requests of at most 30 units fit in one truck.
    let report = run_hybrid(&net, &common::noop_checkpoint(&net, &sc), &sc, &HybridConfig::default())
        .map_err(|e| e.to_string())?;
    let milp = report.milp.as_ref().ok_or("MILP stage skipped")?;
    ensure(report.milp_status() == "Optimal", || format!("MILP status {}", report.milp_status()))?;
    ensure(report.unserved.is_empty(), || format!("{} unserved", report.unserved.len()))?;
    ensure(milp.validation.is_ok(), || format!("{:?}", milp.validation.violations))?;
    let oracle = common::milp_enumerate(&milp.problem.instance);
    ensure((milp.objective - oracle).abs() <= 1e-6 * oracle.abs().max(1.0), || {
        format!("objective {} vs enumeration {oracle}", milp.objective)
    })?;
    within(started, Duration::from_secs(120), "hybrid run")?;
    Ok(format!(
        "{} requests: greedy {}, rescue {}, unserved 0, MILP Optimal (objective {:.4} = enumeration)",
        report.total_requests,
        report.greedy_served,
        report.milp_served.len(),
        milp.objective
    ))
}

const BIN: &str = env!("CARGO_BIN_EXE_deepfreight");

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect()
}

fn c9_determinism() -> Result<String, String> {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = tmp.path();
    let world = root.join("world.json");
    std::fs::write(&world, common::toy_world().to_json_string()).unwrap();
    let inputs = root.join("inputs");
    std::fs::create_dir_all(&inputs).unwrap();
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    let w = world.to_str().unwrap().to_string();
    let common_args: Vec<String> = [
        "--seed", "9", "--world", &w, "--num-trucks", "3", "--num-requests", "150", "--epochs", "4", "--hidden", "6",
        "--iterations", "3", "--batch-size", "2",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let ckpt = inputs.join("checkpoint.fqmx");
    let f = |n: &str| fixtures.join(n).to_str().unwrap().to_string();
    let ck = ckpt.to_str().unwrap().to_string();
    let commands: Vec<(&str, Vec<String>)> = vec![
        ("gen", vec!["gen".into()]),
        ("train", vec!["train".into(), "--episodes".into(), "5".into()]),
        ("eval", vec!["eval".into(), "--checkpoint".into(), ck.clone(), "--episodes".into(), "3".into()]),
        ("random", vec!["eval".into(), "--policy".into(), "random".into(), "--episodes".into(), "3".into()]),
        (
            "match",
            vec![
                "match".into(),
                "--decisions".into(),
                f("fig3/decisions.csv"),
                "--fleet".into(),
                f("fig3/fleet.csv"),
                "--requests".into(),
                f("fig3/requests.csv"),
                "--locations".into(),
                "4".into(),
            ],
        ),
        ("milp", vec!["milp".into(), "solve".into(), "--instance".into(), f("two_sites.json")]),
        ("export", vec!["milp".into(), "export".into(), "--instance".into(), f("two_sites.json")]),
        ("hybrid", vec!["hybrid".into(), "--checkpoint".into(), ck.clone()]),
    ];
    // A checkpoint shared by both replays, so input digests line up.
    let seed_ckpt = root.join("seed");
    let status = Command::new(BIN)
        .args(&common_args)
        .arg("--out-dir")
        .arg(&seed_ckpt)
        .args(["train", "--episodes", "3"])
        .output()
        .map_err(|e| e.to_string())?;
    ensure(status.status.success(), || format!("seed training failed: {}", String::from_utf8_lossy(&status.stderr)))?;
    std::fs::copy(seed_ckpt.join("checkpoint.fqmx"), &ckpt).unwrap();

    let mut files = 0;
    for (name, args) in &commands {
        let mut snaps = Vec::new();
        for replay in ["a", "b"] {
            let out = root.join(replay).join(name);
            let o = Command::new(BIN)
                .args(&common_args)
                .arg("--out-dir")
                .arg(&out)
                .args(args)
                .output()
                .map_err(|e| e.to_string())?;
            ensure(o.status.success(), || format!("{name}: {}", String::from_utf8_lossy(&o.stderr)))?;
            snaps.push(snapshot(&out));
        }
        ensure(snaps[0] == snaps[1], || {
            let diff: Vec<&String> = snaps[0].keys().filter(|k| snaps[1].get(*k) != snaps[0].get(*k)).collect();
            format!("{name}: outputs differ: {diff:?}")
        })?;
        files += snaps[0].len();
    }

    // The same holds in-process for training and the hybrid pipeline.
    let net = common::toy_world();
    let sc = ScenarioConfig { num_trucks: 3, num_requests: 100, epochs_per_episode: 4, rng_seed: 99, ..Default::default() };
    let cfg = TrainerConfig { episodes: 4, hidden: 6, batch_size: 2, iterations_per_episode: 3, ..Default::default() };
    let a = deepfreight::qmix::train(&net, &cfg, &sc).map_err(|e| e.to_string())?;
    let b = deepfreight::qmix::train(&net, &cfg, &sc).map_err(|e| e.to_string())?;
    ensure(a.checkpoint.to_bytes() == b.checkpoint.to_bytes(), || "checkpoints differ".into())?;
    ensure(
        deepfreight::qmix::metrics_csv(&a.metrics) == deepfreight::qmix::metrics_csv(&b.metrics),
        || "metrics differ".into(),
    )?;
    let ha = run_hybrid(&net, &a.checkpoint, &sc, &HybridConfig::default()).map_err(|e| e.to_string())?;
    let hb = run_hybrid(&net, &b.checkpoint, &sc, &HybridConfig::default()).map_err(|e| e.to_string())?;
    ensure(serde_json::to_string(&ha).unwrap() == serde_json::to_string(&hb).unwrap(), || "hybrid reports differ".into())?;
    Ok(format!("{} commands replayed, {files} output files byte-identical; in-process train and hybrid identical", commands.len()))
}

fn chi_square_p(observed: &[u64], expected_p: &[f64]) -> (f64, usize) {
    let n: u64 = observed.iter().sum();
    let mut stat = 0.0;
    let mut cells = 0;
    for (&o, &p) in observed.iter().zip(expected_p) {
        if p > 0.0 {
            let e = p * n as f64;
            stat += (o as f64 - e).powi(2) / e;
            cells += 1;
        } else if o > 0 {
            return (0.0, cells);
        }
    }
    let df = (cells - 1) as f64;
    (ChiSquared::new(df).unwrap().sf(stat), cells - 1)
}

fn c10_generation_distributions() -> Result<String, String> {
    let net = WorldNetwork::sample();
    let m = net.num_locations();
    let sc = ScenarioConfig { num_requests: 100_000, ..Default::default() };
    let reqs = generate_requests(&net, &sc, &mut Rng::new(1010));

    // Expected frequencies straight from populations and travel times.
    let pops: Vec<f64> = net.locations().iter().map(|l| l.population as f64).collect();
    let total: f64 = pops.iter().sum();
    let p_src: Vec<f64> = pops.iter().map(|p| p / total).collect();
    let mut p_pair = vec![0.0; m * m];
    for i in 0..m {
        let w: Vec<f64> = (0..m)
            .map(|j| if i == j { 0.0 } else { pops[j] / (net.eta(i, j) as f64).sqrt() })
            .collect();
        let norm: f64 = w.iter().sum();
        for j in 0..m {
            p_pair[i * m + j] = p_src[i] * w[j] / norm;
        }
    }
    let mut src = vec![0u64; m];
    let mut pair = vec![0u64; m * m];
    let mut size_sum = 0u64;
    for r in &reqs {
        src[r.source] += 1;
        pair[r.source * m + r.destination] += 1;
        size_sum += r.size;
        ensure((1..=30).contains(&r.size), || format!("size {} out of range", r.size))?;
    }
    let (p1, df1) = chi_square_p(&src, &p_src);
    let (p2, df2) = chi_square_p(&pair, &p_pair);
    let mean = size_sum as f64 / reqs.len() as f64;
    let summary = format!("sources p={p1:.3} (df {df1}), source-destination p={p2:.3} (df {df2}), mean size {mean:.3}");
    ensure(p1 > 0.01 && p2 > 0.01 && (15.3..=15.7).contains(&mean), || summary.clone())?;
    Ok(summary)
}

/// Independent restatement of the path rules for a routed request.
fn path_violations(g: &DispatchGraph, req: &Request, edges: &[usize]) -> Option<String> {
    let e: Vec<_> = edges.iter().map(|&i| g.edge(i)).collect();
    if e.is_empty() || e[0].from != req.source || e[e.len() - 1].to != req.destination {
        return Some(format!("request {}: wrong endpoints", req.id));
    }
    let mut nodes = vec![e[0].from];
    for w in e.windows(2) {
        if w[0].to != w[1].from {
            return Some(format!("request {}: gap in path", req.id));
        }
        if w[0].depart_s + w[0].eta_s > w[1].depart_s {
            return Some(format!("request {}: transfer before arrival", req.id));
        }
    }
    nodes.extend(e.iter().map(|x| x.to));
    let mut sorted = nodes.clone();
    sorted.sort_unstable();
    sorted.dedup();
    (sorted.len() != nodes.len()).then(|| format!("request {}: repeated stop", req.id))
}

fn c11_invariant_fuzzing() -> Result<String, String> {
    let mut rng = Rng::new(1111);
    let mut routed_total = 0usize;
    for scenario in 0..10_000 {
        let n = 2 + rng.below(4) as usize;
        let trucks = 1 + rng.below(4) as usize;
        let caps: Vec<u64> = (0..trucks).map(|_| rng.range_inclusive(5, 60)).collect();
        let fleet: Vec<TruckSpec> =
            (0..trucks).map(|id| TruckSpec { id, initial_location: rng.below(n as u64) as usize, capacity: caps[id] }).collect();
        let mut decisions = Vec::new();
        for t in &fleet {
            let (mut at, mut clock) = (t.initial_location, rng.below(3600));
            for epoch in 1..=rng.range_inclusive(1, 5) as usize {
                let to = rng.below(n as u64) as usize;
                if to == at {
                    continue;
                }
                let eta = rng.range_inclusive(600, 7200);
                decisions.push(Decision { truck: t.id, epoch, from: at, to, depart_s: clock, eta_s: eta });
                clock += eta + rng.below(1800);
                at = to;
            }
        }
        let mut g = build_graph(&decisions, &fleet, n).map_err(|e| e.to_string())?;
        let requests: Vec<Request> = (0..rng.range_inclusive(1, 25) as usize)
            .map(|id| Request {
                id,
                source: rng.below(n as u64) as usize,
                destination: rng.below(n as u64) as usize,
                size: rng.range_inclusive(1, 30),
            })
            .collect();
        let mode = if rng.below(2) == 0 { MatchMode::MultiTransfer } else { MatchMode::SingleTruck };
        let result = match_all(&mut g, &requests, &MatchOptions { mode, ..Default::default() });
        let mut routed = Vec::new();
        let mut volume = vec![0u64; g.edges().len()];
        for (req, path) in result.matched() {
            if let Some(v) = path_violations(&g, req, &path.edges) {
                return Err(format!("scenario {scenario}: {v}"));
            }
            if mode == MatchMode::SingleTruck && path.edges.iter().any(|&e| g.edge(e).truck != g.edge(path.edges[0]).truck) {
                return Err(format!("scenario {scenario}: transfer in single-truck mode"));
            }
            for &e in &path.edges {
                volume[e] += req.size;
            }
            routed.push((*req, path.clone()));
        }
        for (i, e) in g.edges().iter().enumerate() {
            ensure(volume[i] <= e.capacity && e.remaining == e.capacity - volume[i], || {
                format!("scenario {scenario}: edge {i} routed {} of {} with {} left", volume[i], e.capacity, e.remaining)
            })?;
        }
        let issues = audit(&g, &routed, mode);
        ensure(issues.is_empty(), || format!("scenario {scenario}: audit {issues:?}"))?;
        routed_total += routed.len();
    }

    let mut moves = 0usize;
    for episode in 0..1_000u64 {
        let mut rng = Rng::derive(11_000 + episode, 0);
        let m = 3 + rng.below(4) as usize;
        let net = random_world(&mut rng, m);
        let sc = ScenarioConfig {
            num_trucks: 1 + rng.below(4) as usize,
            num_requests: 20 + rng.below(80) as usize,
            epochs_per_episode: 2 + rng.below(8) as usize,
            episode_time_limit_s: rng.range_inclusive(4, 48) * 3600,
            ..Default::default()
        };
        let specs = generate_fleet(&net, &sc, &mut rng);
        let requests = generate_requests(&net, &sc, &mut rng);
        let mut fleet = FleetState::from_specs(&specs, m);
        let env = EnvConfig::from_scenario(&sc);
        let enc = Encoder::new(m, env.epochs, sc.num_trucks, 10.0);
        let t = run_episode(&mut RandomPolicy, &net, &mut fleet, &requests, &env, &enc, &mut rng).map_err(|e| e.to_string())?;
        for rec in &t.epochs {
            for (a, (&act, mask)) in rec.actions.iter().zip(&rec.masks).enumerate() {
                ensure(!mask[act], || format!("episode {episode}: truck {a} took masked action {act}"))?;
            }
        }
        // Route rules checked from the driven edges alone.
        for spec in &specs {
            let mut edges: Vec<_> = t.graph.edges().iter().filter(|e| e.truck == spec.id).collect();
            edges.sort_by_key(|e| e.epoch);
            let (mut at, mut clock, mut back) = (spec.initial_location, 0u64, false);
            let mut visited = vec![false; m];
            visited[at] = true;
            for e in edges {
                moves += 1;
                let bad = back
                    || e.from != at
                    || e.depart_s != clock
                    || e.to == at
                    || (visited[e.to] && e.to != spec.initial_location)
                    || e.depart_s + e.eta_s > sc.episode_time_limit_s
                    || e.eta_s != net.eta(e.from, e.to);
                ensure(!bad, || format!("episode {episode}: truck {} made an illegal move {e:?}", spec.id))?;
                visited[e.to] = true;
                back = e.to == spec.initial_location;
                at = e.to;
                clock += e.eta_s;
            }
        }
    }
    Ok(format!(
        "10000 matching scenarios ({routed_total} routed requests) and 1000 episodes ({moves} moves) without violations"
    ))
}

fn main() {
    let checks: [(u8, &str, Check); 11] = [
        (1, "matching fidelity", c1_matching_fidelity),
        (2, "multi-transfer dominance", c2_multi_transfer_dominance),
        (3, "MILP exactness", c3_milp_exactness),
        (4, "linearization identity", c4_linearization_identity),
        (5, "gradient correctness", c5_gradient_correctness),
        (6, "mixing monotonicity", c6_mixing_monotonicity),
        (7, "learning signal", c7_learning_signal),
        (8, "hybrid completeness", c8_hybrid_completeness),
        (9, "determinism", c9_determinism),
        (10, "generation distributions", c10_generation_distributions),
        (11, "invariant fuzzing", c11_invariant_fuzzing),
    ];
    let results: Vec<(u8, &str, Result<String, String>, Duration)> = std::thread::scope(|s| {
        let handles: Vec<_> = checks
            .iter()
            .map(|&(id, name, check)| {
                s.spawn(move || {
                    let started = Instant::now();
                    let r = std::panic::catch_unwind(check).unwrap_or_else(|p| {
                        Err(p
                            .downcast_ref::<String>()
                            .cloned()
                            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                            .unwrap_or_else(|| "panicked".into()))
                    });
                    (id, name, r, started.elapsed())
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let mut failed = 0;
    for (id, name, r, t) in &results {
        let secs = t.as_secs_f64();
        match r {
            Ok(detail) => println!("criterion {id:>2} {name}: PASS - {detail} ({secs:.1} s)"),
            Err(detail) => {
                failed += 1;
                println!("criterion {id:>2} {name}: FAIL - {detail} ({secs:.1} s)");
            }
        }
    }
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
