//! Reference oracles shared by the integration tests. They are written
//! directly from the problem statements and share no code with the
//! library beyond its public data types.
#![allow(dead_code)]

use deepfreight::milp::MilpInstance;
use deepfreight::rng::Rng;

/// Minimum objective by exhaustive enumeration of depot tours and cell
/// assignments.
pub fn milp_enumerate(inst: &MilpInstance) -> f64 {
    let m = inst.num_locations;
    let n = inst.depots.len();
    let per_truck: Vec<Vec<Option<Vec<usize>>>> = (0..n)
        .map(|k| {
            let depot = inst.depots[k];
            let others: Vec<usize> = (0..m).filter(|&i| i != depot).collect();
            let mut tours = vec![None];
            let mut seqs = Vec::new();
            sequences(&others, &mut Vec::new(), &mut seqs);
            for s in seqs {
                let mut t = vec![depot];
                t.extend(s);
                let drive: u64 = (0..t.len()).map(|p| inst.travel_s[t[p]][t[(p + 1) % t.len()]]).sum();
                if drive <= inst.time_limits_s[k] {
                    tours.push(Some(t));
                }
            }
            tours
        })
        .collect();
    let cells: Vec<(usize, usize)> = (0..m)
        .flat_map(|i| (0..m).map(move |j| (i, j)))
        .filter(|&(i, j)| inst.demand[i][j] > 0)
        .collect();

    let mut best = f64::INFINITY;
    let mut choice = vec![0usize; n];
    loop {
        let tours: Vec<&Option<Vec<usize>>> = (0..n).map(|k| &per_truck[k][choice[k]]).collect();
        let hours: f64 = tours
            .iter()
            .filter_map(|t| t.as_ref())
            .map(|t| (0..t.len()).map(|p| inst.travel_s[t[p]][t[(p + 1) % t.len()]]).sum::<u64>() as f64 / 3600.0)
            .sum();
        // Each cell goes to no truck (0) or truck k (k + 1).
        let mut owner = vec![0usize; cells.len()];
        loop {
            if let Some(unserved) = assignment_cost(inst, &tours, &cells, &owner) {
                best = best.min(inst.w_time * hours + inst.w_unserved * unserved);
            }
            if !bump(&mut owner, n + 1) {
                break;
            }
        }
        let radix: Vec<usize> = per_truck.iter().map(|t| t.len()).collect();
        if !bump_mixed(&mut choice, &radix) {
            break;
        }
    }
    best
}

fn sequences(items: &[usize], cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    for &it in items {
        if cur.contains(&it) {
            continue;
        }
        cur.push(it);
        out.push(cur.clone());
        sequences(items, cur, out);
        cur.pop();
    }
}

fn bump(digits: &mut [usize], base: usize) -> bool {
    for d in digits.iter_mut() {
        *d += 1;
        if *d < base {
            return true;
        }
        *d = 0;
    }
    false
}

fn bump_mixed(digits: &mut [usize], radix: &[usize]) -> bool {
    for (d, &r) in digits.iter_mut().zip(radix) {
        *d += 1;
        if *d < r {
            return true;
        }
        *d = 0;
    }
    false
}

fn assignment_cost(
    inst: &MilpInstance,
    tours: &[&Option<Vec<usize>>],
    cells: &[(usize, usize)],
    owner: &[usize],
) -> Option<f64> {
    let mut unserved = 0.0;
    for (c, &(i, j)) in cells.iter().enumerate() {
        if owner[c] == 0 {
            unserved += inst.demand[i][j] as f64;
            continue;
        }
        let k = owner[c] - 1;
        let tour = tours[k].as_ref()?;
        let pi = tour.iter().position(|&x| x == i)?;
        let pj = tour.iter().position(|&x| x == j)?;
        if j != inst.depots[k] && pj < pi {
            return None;
        }
    }
    for (k, tour) in tours.iter().enumerate() {
        let Some(tour) = tour else { continue };
        let mut load: u64 = 0;
        for (p, &node) in tour.iter().enumerate() {
            for (c, &(i, j)) in cells.iter().enumerate() {
                if owner[c] != k + 1 {
                    continue;
                }
                if j == node && p > 0 {
                    load -= inst.demand[i][j];
                }
            }
            for (c, &(i, j)) in cells.iter().enumerate() {
                if owner[c] == k + 1 && i == node {
                    load += inst.demand[i][j];
                }
            }
            if load > inst.capacity {
                return None;
            }
        }
    }
    Some(unserved)
}

/// Random instance with at most 4 locations, 2 trucks and 6 demand cells.
pub fn random_milp_instance(rng: &mut Rng) -> MilpInstance {
    let m = 2 + rng.below(3) as usize;
    let n = 1 + rng.below(2) as usize;
    let mut travel_s = vec![vec![0u64; m]; m];
    for i in 0..m {
        for j in 0..m {
            if i != j {
                travel_s[i][j] = 600 * (1 + rng.below(10));
            }
        }
    }
    let mut demand = vec![vec![0u64; m]; m];
    let mut pairs: Vec<(usize, usize)> =
        (0..m).flat_map(|i| (0..m).map(move |j| (i, j))).filter(|(i, j)| i != j).collect();
    rng.shuffle(&mut pairs);
    let cells = 1 + rng.below(6) as usize;
    for &(i, j) in pairs.iter().take(cells) {
        demand[i][j] = 1 + rng.below(40);
    }
    MilpInstance {
        num_locations: m,
        depots: (0..n).map(|_| rng.below(m as u64) as usize).collect(),
        travel_s,
        demand,
        capacity: 10 + rng.below(40),
        time_limits_s: (0..n).map(|_| 3600 + 600 * rng.below(40)).collect(),
        w_time: 0.5,
        w_unserved: 0.04,
    }
}

use deepfreight::env::EpochRecord;
use deepfreight::qmix::{Dims, QmixParams};
use deepfreight::world::{ScenarioConfig, WorldNetwork};

/// Three sites about an hour apart.
pub fn toy_world() -> WorldNetwork {
    WorldNetwork::from_parts(
        &[500_000, 300_000, 200_000],
        vec![vec![0, 3600, 4200], vec![3600, 0, 3000], vec![4200, 3000, 0]],
        1.0,
    )
    .unwrap()
}

pub fn toy_scenario(seed: u64) -> ScenarioConfig {
    ScenarioConfig {
        num_trucks: 3,
        num_requests: 300,
        episode_time_limit_s: 172_800,
        episodes_per_cycle: 7,
        epochs_per_episode: 6,
        truck_capacity: 30_000,
        rng_seed: seed,
        ..Default::default()
    }
}

/// Small random network plus a batch of synthetic episodes of `epochs`
/// steps with some masked actions.
pub fn toy_batch(agents: usize, epochs: usize, episodes: usize, seed: u64) -> (QmixParams, Vec<Vec<EpochRecord>>) {
    let mut rng = Rng::new(seed);
    let dims = Dims { obs_len: 5, num_actions: 4, num_agents: agents, state_len: 6, hidden: 7, mix_hidden: 5 };
    let params = QmixParams::init(dims, &mut rng);
    let mut eps = Vec::new();
    for _ in 0..episodes {
        let mut ep = Vec::new();
        for t in 0..epochs {
            let masks: Vec<Vec<bool>> = (0..agents)
                .map(|_| {
                    let mut m: Vec<bool> = (0..dims.num_actions).map(|_| rng.below(3) == 0).collect();
                    m[dims.num_actions - 1] = false;
                    m
                })
                .collect();
            let actions = masks
                .iter()
                .map(|m| {
                    let ok: Vec<usize> = (0..m.len()).filter(|&a| !m[a]).collect();
                    ok[rng.below(ok.len() as u64) as usize]
                })
                .collect();
            ep.push(EpochRecord {
                epoch: t + 1,
                state: (0..dims.state_len).map(|_| rng.next_f64() * 2.0 - 1.0).collect(),
                observations: (0..agents)
                    .map(|_| (0..dims.obs_len).map(|_| rng.next_f64() * 2.0 - 1.0).collect())
                    .collect(),
                masks,
                actions,
                matched: 0,
                fuel: 0.0,
                reward: rng.next_f64() * 2.0 - 1.0,
            });
        }
        eps.push(ep);
    }
    (params, eps)
}

/// Largest relative error between reverse-mode gradients of the TD loss
/// and central differences with step `h`, per qualified tensor name.
pub fn loss_gradient_errors(params: &QmixParams, batch: &[Vec<EpochRecord>], targets: &[Vec<f64>], h: f64) -> Vec<(String, f64)> {
    use deepfreight::qmix::qmix_loss;
    let refs: Vec<&[EpochRecord]> = batch.iter().map(|e| e.as_slice()).collect();
    let (_, grads) = qmix_loss(&refs, params, targets).unwrap();
    let names: Vec<String> = params.named().into_iter().map(|(n, _)| n).collect();
    let mut out = Vec::new();
    for (ti, name) in names.iter().enumerate() {
        let len = params.tensors()[ti].len();
        let mut worst: f64 = 0.0;
        for k in 0..len {
            let mut plus = params.clone();
            plus.tensors_mut()[ti].as_slice_mut().unwrap()[k] += h;
            let mut minus = params.clone();
            minus.tensors_mut()[ti].as_slice_mut().unwrap()[k] -= h;
            let lp = qmix_loss(&refs, &plus, targets).unwrap().0;
            let lm = qmix_loss(&refs, &minus, targets).unwrap().0;
            let numeric = (lp - lm) / (2.0 * h);
            let analytic = grads.tensors()[ti].as_slice().unwrap()[k];
            let scale = analytic.abs().max(numeric.abs()).max(1e-7);
            worst = worst.max((analytic - numeric).abs() / scale);
        }
        out.push((name.clone(), worst));
    }
    out
}

/// Checkpoint whose greedy policy always chooses the no-op.
pub fn noop_checkpoint(net: &WorldNetwork, sc: &ScenarioConfig) -> deepfreight::qmix::Checkpoint {
    use deepfreight::env::Encoder;
    let enc = Encoder::new(net.num_locations(), sc.epochs_per_episode, sc.num_trucks, 100.0);
    let dims = Dims::from_encoder(&enc, 8);
    let mut params = QmixParams::zeros(dims);
    params.agent.b_out[[0, dims.num_actions - 1]] = 1.0;
    deepfreight::qmix::Checkpoint { params, volume_scale: 100.0 }
}
