use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use deepfreight::env::{NoopPolicy, Policy, RandomPolicy};
use deepfreight::hybrid::{run_hybrid, HybridConfig, HybridReport};
use deepfreight::io;
use deepfreight::matcher::{build_graph, match_all, MatchMode, MatchOptions};
use deepfreight::milp::{
    build_model, solve, validate_solution, write_lp, MilpInstance, NamedSolution, SolveLimits,
};
use deepfreight::qmix::{
    default_volume_scale, evaluate, evaluate_policy, metrics_csv, train, Checkpoint, TrainerConfig,
};
use deepfreight::rng::Rng;
use deepfreight::world::{generate_fleet, generate_requests, ScenarioConfig, WorldNetwork};
use deepfreight::{Error, Result};

/// Multi-transfer freight dispatch: scenario generation, QMIX training,
/// greedy matching, exact MILP rescue.
#[derive(Parser, Debug)]
#[command(name = "deepfreight", version, about)]
struct Cli {
    /// Master seed; overrides `scenario.rng_seed` from the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Directory receiving every output file and the run manifest.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,

    /// JSON file with optional `scenario`, `trainer` and `hybrid` sections.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// World network JSON; the built-in ten-centre sample is used otherwise.
    #[arg(long, global = true)]
    world: Option<PathBuf>,

    #[command(flatten)]
    knobs: Knobs,

    #[command(subcommand)]
    command: Command,
}

/// Named overrides. Unset flags keep the config file value, which in turn
/// defaults to the published settings.
#[derive(Args, Debug, Default)]
struct Knobs {
    /// Trucks in the fleet [default: 20]
    #[arg(long, global = true)]
    num_trucks: Option<usize>,
    /// Delivery requests per episode [default: 40000]
    #[arg(long, global = true)]
    num_requests: Option<usize>,
    /// Dispatch epochs per episode [default: 10]
    #[arg(long, global = true)]
    epochs: Option<usize>,
    /// Episode time limit in seconds [default: 172800]
    #[arg(long, global = true)]
    time_limit_s: Option<u64>,
    /// Episodes sharing truck end positions [default: 7]
    #[arg(long, global = true)]
    episodes_per_cycle: Option<usize>,
    /// Truck capacity in volume units [default: 30000]
    #[arg(long, global = true)]
    capacity: Option<u64>,
    /// Reward per matched request [default: 0.004]
    #[arg(long, global = true)]
    beta_served: Option<f64>,
    /// Reward weight of fleet-average fuel [default: 0.5]
    #[arg(long, global = true)]
    beta_fuel: Option<f64>,
    /// Discount factor [default: 0.99]
    #[arg(long, global = true)]
    gamma: Option<f64>,
    /// RMSprop learning rate [default: 0.0005]
    #[arg(long, global = true)]
    learning_rate: Option<f64>,
    /// Episodes per training minibatch [default: 32]
    #[arg(long, global = true)]
    batch_size: Option<usize>,
    /// Gradient steps after each episode [default: 100]
    #[arg(long, global = true)]
    iterations: Option<usize>,
    /// Initial Boltzmann temperature [default: 100]
    #[arg(long, global = true)]
    temperature_start: Option<f64>,
    /// Temperature drop per episode [default: 0.1]
    #[arg(long, global = true)]
    temperature_decay: Option<f64>,
    /// Episode after which exploration is greedy [default: 1000]
    #[arg(long, global = true)]
    greedy_after: Option<usize>,
    /// Replay buffer size in episodes [default: 500]
    #[arg(long, global = true)]
    buffer_size: Option<usize>,
    /// Episodes between target network syncs [default: 50]
    #[arg(long, global = true)]
    target_interval: Option<usize>,
    /// Recurrent hidden width [default: 64]
    #[arg(long, global = true)]
    hidden: Option<usize>,
    /// Efficiency threshold for pruning, packages per second [default: 0.028]
    #[arg(long, global = true)]
    threshold: Option<f64>,
    /// MILP weight on tour hours [default: 0.5]
    #[arg(long, global = true)]
    w_time: Option<f64>,
    /// MILP weight on undelivered volume [default: 0.04]
    #[arg(long, global = true)]
    w_unserved: Option<f64>,
    /// Rescue trucks chosen per distribution centre [default: 2]
    #[arg(long, global = true)]
    rescue_per_center: Option<usize>,
    /// Branch-and-bound node budget [default: 200000]
    #[arg(long, global = true)]
    max_nodes: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample a fleet and a request set: fleet.csv, requests.csv, world.json.
    Gen,
    /// Train QMIX agents: metrics.csv and a checkpoint.
    Train {
        /// Training episodes [default: 2800]
        #[arg(long)]
        episodes: Option<usize>,
        /// Checkpoint file name inside the output directory.
        #[arg(long, default_value = "checkpoint.fqmx")]
        checkpoint: String,
    },
    /// Evaluate a policy over fresh episodes: eval.json.
    Eval {
        /// Checkpoint to evaluate (required for the qmix policy).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value_t = 50)]
        episodes: usize,
        #[arg(long, value_enum, default_value_t = PolicyKind::Qmix)]
        policy: PolicyKind,
    },
    /// Greedy request matching over a decision log: matches.csv.
    Match {
        #[arg(long)]
        decisions: PathBuf,
        #[arg(long)]
        fleet: PathBuf,
        #[arg(long)]
        requests: PathBuf,
        #[arg(long, value_enum, default_value_t = ModeArg::Multi)]
        mode: ModeArg,
        /// Cap on enumerated paths per request.
        #[arg(long, default_value_t = 100_000)]
        path_limit: usize,
        /// Number of locations; defaults to the world's.
        #[arg(long)]
        locations: Option<usize>,
    },
    /// Exact routing model.
    Milp {
        #[command(subcommand)]
        action: MilpCommand,
    },
    /// Learned dispatch plus MILP rescue: hybrid_report.json, hybrid_summary.csv.
    Hybrid {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Fill the wall_time_s column (makes the summary non-reproducible).
        #[arg(long)]
        timing: bool,
    },
}

#[derive(Subcommand, Debug)]
enum MilpCommand {
    /// Build the model from an instance: model.json.
    Build {
        #[arg(long)]
        instance: PathBuf,
    },
    /// Solve an instance (or an LP file): solution.json.
    Solve {
        #[arg(long, conflicts_with = "lp", required_unless_present = "lp")]
        instance: Option<PathBuf>,
        #[arg(long)]
        lp: Option<PathBuf>,
        /// Wall-clock budget in seconds.
        #[arg(long)]
        time_limit_s: Option<f64>,
    },
    /// Write the model in LP format: model.lp.
    Export {
        #[arg(long)]
        instance: PathBuf,
    },
    /// Check a solution file against an instance: validation.json.
    Validate {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        solution: PathBuf,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum PolicyKind {
    Qmix,
    Random,
    Noop,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Multi,
    Single,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RunConfig {
    scenario: ScenarioConfig,
    trainer: TrainerConfig,
    hybrid: HybridConfig,
}

impl RunConfig {
    fn resolve(file: Option<&Path>, seed: Option<u64>, k: &Knobs) -> Result<Self> {
        let mut c: RunConfig = match file {
            Some(p) => serde_json::from_str(&std::fs::read_to_string(p)?)
                .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?,
            None => RunConfig::default(),
        };
        fn set<T: Copy>(dst: &mut T, v: Option<T>) {
            if let Some(v) = v {
                *dst = v;
            }
        }
        let s = &mut c.scenario;
        set(&mut s.rng_seed, seed);
        set(&mut s.num_trucks, k.num_trucks);
        set(&mut s.num_requests, k.num_requests);
        set(&mut s.epochs_per_episode, k.epochs);
        set(&mut s.episode_time_limit_s, k.time_limit_s);
        set(&mut s.episodes_per_cycle, k.episodes_per_cycle);
        set(&mut s.truck_capacity, k.capacity);
        set(&mut s.beta_served, k.beta_served);
        set(&mut s.beta_fuel, k.beta_fuel);
        let t = &mut c.trainer;
        set(&mut t.gamma, k.gamma);
        set(&mut t.learning_rate, k.learning_rate);
        set(&mut t.batch_size, k.batch_size);
        set(&mut t.iterations_per_episode, k.iterations);
        set(&mut t.temperature_start, k.temperature_start);
        set(&mut t.temperature_decay, k.temperature_decay);
        set(&mut t.greedy_after, k.greedy_after);
        set(&mut t.buffer_capacity, k.buffer_size);
        set(&mut t.target_sync_episodes, k.target_interval);
        set(&mut t.hidden, k.hidden);
        let h = &mut c.hybrid;
        set(&mut h.efficiency_threshold, k.threshold);
        set(&mut h.w_time, k.w_time);
        set(&mut h.w_unserved, k.w_unserved);
        set(&mut h.rescue_trucks_per_center, k.rescue_per_center);
        set(&mut h.milp_max_nodes, k.max_nodes);
        c.scenario.validate()?;
        c.trainer.validate()?;
        c.hybrid.validate()?;
        Ok(c)
    }
}

#[derive(Serialize)]
struct InputDigest {
    path: String,
    sha256: String,
}

#[derive(Serialize)]
struct RunManifest<'a> {
    command: &'a str,
    tool_version: &'static str,
    seed: u64,
    config: &'a RunConfig,
    world_sha256: String,
    inputs: Vec<InputDigest>,
    outputs: Vec<String>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Resolved invocation shared by every subcommand.
struct Run {
    out_dir: PathBuf,
    config: RunConfig,
    world: WorldNetwork,
    inputs: Vec<PathBuf>,
}

impl Run {
    fn seed(&self) -> u64 {
        self.config.scenario.rng_seed
    }

    fn out(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    /// Records the invocation before anything else is written. Outputs are
    /// listed relative to the output directory so that manifests of replays
    /// into another directory compare equal.
    fn write_manifest(&self, command: &str, extra_inputs: &[&Path], outputs: &[&str]) -> Result<()> {
        std::fs::create_dir_all(&self.out_dir)?;
        let mut inputs = Vec::new();
        for p in self.inputs.iter().map(PathBuf::as_path).chain(extra_inputs.iter().copied()) {
            let bytes = std::fs::read(p)?;
            for o in outputs {
                let target = self.out(o);
                if target.exists() && std::fs::canonicalize(&target)? == std::fs::canonicalize(p)? {
                    return Err(Error::Config(format!("output {} would overwrite an input", target.display())));
                }
            }
            inputs.push(InputDigest { path: p.display().to_string(), sha256: sha256_hex(&bytes) });
        }
        let manifest = RunManifest {
            command,
            tool_version: env!("CARGO_PKG_VERSION"),
            seed: self.seed(),
            config: &self.config,
            world_sha256: sha256_hex(self.world.to_json_string().as_bytes()),
            inputs,
            outputs: outputs.iter().map(|s| s.to_string()).collect(),
        };
        let text = serde_json::to_string_pretty(&manifest)? + "\n";
        std::fs::write(self.out("run_manifest.json"), text)?;
        Ok(())
    }

    fn write(&self, name: &str, contents: impl AsRef<[u8]>) -> Result<()> {
        std::fs::write(self.out(name), contents)?;
        Ok(())
    }
}

fn json_pretty<T: Serialize>(v: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(v)? + "\n")
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_domain() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    let config = RunConfig::resolve(cli.config.as_deref(), cli.seed, &cli.knobs)?;
    let world = match &cli.world {
        Some(p) => WorldNetwork::load(p)?,
        None => WorldNetwork::sample(),
    };
    let inputs = cli.config.iter().chain(cli.world.iter()).cloned().collect();
    let run = Run { out_dir: cli.out_dir, config, world, inputs };
    match cli.command {
        Command::Gen => cmd_gen(&run),
        Command::Train { episodes, checkpoint } => cmd_train(&run, episodes, &checkpoint),
        Command::Eval { checkpoint, episodes, policy } => cmd_eval(&run, checkpoint.as_deref(), episodes, policy),
        Command::Match { decisions, fleet, requests, mode, path_limit, locations } => {
            let opts = MatchOptions {
                mode: match mode {
                    ModeArg::Multi => MatchMode::MultiTransfer,
                    ModeArg::Single => MatchMode::SingleTruck,
                },
                path_limit,
            };
            cmd_match(&run, &decisions, &fleet, &requests, opts, locations)
        }
        Command::Milp { action } => cmd_milp(&run, action),
        Command::Hybrid { checkpoint, timing } => cmd_hybrid(&run, &checkpoint, timing),
    }
}

fn cmd_gen(run: &Run) -> Result<ExitCode> {
    run.write_manifest("gen", &[], &["world.json", "fleet.csv", "requests.csv"])?;
    let sc = &run.config.scenario;
    let fleet = generate_fleet(&run.world, sc, &mut Rng::derive(sc.rng_seed, 1));
    let requests = generate_requests(&run.world, sc, &mut Rng::derive(sc.rng_seed, 2));
    run.write("world.json", run.world.to_json_string() + "\n")?;
    run.write("fleet.csv", io::fleet_csv(&fleet)?)?;
    run.write("requests.csv", io::requests_csv(&requests)?)?;
    println!("{} trucks, {} requests", fleet.len(), requests.len());
    Ok(ExitCode::SUCCESS)
}

fn cmd_train(run: &Run, episodes: Option<usize>, checkpoint: &str) -> Result<ExitCode> {
    let mut cfg = run.config.trainer.clone();
    if let Some(e) = episodes {
        cfg.episodes = e;
    }
    run.write_manifest("train", &[], &["metrics.csv", checkpoint])?;
    let outcome = train(&run.world, &cfg, &run.config.scenario)?;
    run.write("metrics.csv", metrics_csv(&outcome.metrics))?;
    outcome.checkpoint.save(&run.out(checkpoint))?;
    match outcome.metrics.last() {
        Some(m) => println!("trained {} episodes, last reward {:.6}", outcome.metrics.len(), m.reward),
        None => println!("trained 0 episodes"),
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_eval(run: &Run, checkpoint: Option<&Path>, episodes: usize, kind: PolicyKind) -> Result<ExitCode> {
    let extra: Vec<&Path> = checkpoint.into_iter().collect();
    run.write_manifest("eval", &extra, &["eval.json"])?;
    let sc = &run.config.scenario;
    let metrics = match kind {
        PolicyKind::Qmix => {
            let path = checkpoint.ok_or_else(|| Error::Config("--checkpoint is required for the qmix policy".into()))?;
            evaluate(&Checkpoint::load(path)?, &run.world, sc, episodes)?
        }
        PolicyKind::Random | PolicyKind::Noop => {
            let mut policy: Box<dyn Policy> = match kind {
                PolicyKind::Random => Box::new(RandomPolicy),
                _ => Box::new(NoopPolicy),
            };
            let scale = default_volume_scale(sc, run.world.num_locations());
            evaluate_policy(policy.as_mut(), &run.world, sc, scale, episodes)?
        }
    };
    run.write("eval.json", json_pretty(&metrics)?)?;
    println!(
        "mean reward {:.6}, mean unfinished {:.2}, mean drive {:.3} h",
        metrics.mean_reward, metrics.mean_unfinished, metrics.mean_avg_drive_h
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_match(
    run: &Run,
    decisions: &Path,
    fleet: &Path,
    requests: &Path,
    opts: MatchOptions,
    locations: Option<usize>,
) -> Result<ExitCode> {
    run.write_manifest("match", &[decisions, fleet, requests], &["matches.csv"])?;
    let decisions = io::read_decisions(std::fs::File::open(decisions)?)?;
    let fleet = io::read_fleet(std::fs::File::open(fleet)?)?;
    let requests = io::read_requests(std::fs::File::open(requests)?)?;
    let n = locations.unwrap_or_else(|| run.world.num_locations());
    if let Some(r) = requests.iter().find(|r| r.source >= n || r.destination >= n) {
        return Err(Error::Input(format!("request {} refers to a location outside 0..{n}", r.id)));
    }
    let mut graph = build_graph(&decisions, &fleet, n)?;
    let result = match_all(&mut graph, &requests, &opts);
    run.write("matches.csv", io::matches_csv(&graph, &result))?;
    println!("served {} of {} requests", result.served(), requests.len());
    Ok(ExitCode::SUCCESS)
}

fn cmd_milp(run: &Run, action: MilpCommand) -> Result<ExitCode> {
    match action {
        MilpCommand::Build { instance } => {
            run.write_manifest("milp build", &[&instance], &["model.json"])?;
            let model = build_model(&MilpInstance::load(&instance)?);
            run.write("model.json", json_pretty(&model)?)?;
            println!("{} variables, {} constraints", model.variables.len(), model.constraints.len());
        }
        MilpCommand::Export { instance } => {
            run.write_manifest("milp export", &[&instance], &["model.lp"])?;
            let model = build_model(&MilpInstance::load(&instance)?);
            run.write("model.lp", write_lp(&model))?;
            println!("{} variables, {} constraints", model.variables.len(), model.constraints.len());
        }
        MilpCommand::Solve { instance, lp, time_limit_s } => {
            let input = instance.as_deref().or(lp.as_deref()).expect("clap requires one of them");
            run.write_manifest("milp solve", &[input], &["solution.json"])?;
            let model = match &instance {
                Some(p) => build_model(&MilpInstance::load(p)?),
                None => deepfreight::milp::parse_lp(&std::fs::read_to_string(input)?)?,
            };
            let limits = SolveLimits {
                time_limit: time_limit_s.map(std::time::Duration::from_secs_f64),
                ..run.config.hybrid.solve_limits()
            };
            let sol = solve(&model, &limits);
            run.write("solution.json", json_pretty(&NamedSolution::from_solution(&model, &sol))?)?;
            println!("status {} objective {}", sol.status.label(), sol.objective);
            if !sol.status.has_solution() {
                return Ok(ExitCode::from(1));
            }
        }
        MilpCommand::Validate { instance, solution } => {
            run.write_manifest("milp validate", &[&instance, &solution], &["validation.json"])?;
            let inst = MilpInstance::load(&instance)?;
            let model = build_model(&inst);
            let file: NamedSolution = serde_json::from_str(&std::fs::read_to_string(&solution)?)?;
            let report = validate_solution(&inst, &file.into_solution(&model)?);
            run.write("validation.json", json_pretty(&report)?)?;
            if report.is_ok() {
                println!("valid, objective {}", report.recomputed_objective);
            } else {
                for v in &report.violations {
                    eprintln!("violation: {v}");
                }
                return Ok(ExitCode::from(1));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_hybrid(run: &Run, checkpoint: &Path, timing: bool) -> Result<ExitCode> {
    run.write_manifest("hybrid", &[checkpoint], &["hybrid_report.json", "hybrid_summary.csv"])?;
    let started = Instant::now();
    let ckpt = Checkpoint::load(checkpoint)?;
    let report = run_hybrid(&run.world, &ckpt, &run.config.scenario, &run.config.hybrid)?;
    let wall = timing.then(|| started.elapsed().as_secs_f64());
    run.write("hybrid_report.json", json_pretty(&report)?)?;
    run.write(
        "hybrid_summary.csv",
        format!("{}\n{}\n", HybridReport::summary_header(), report.summary_row(wall)),
    )?;
    println!(
        "served {} of {}, milp {}, total drive {:.3} h",
        report.served,
        report.total_requests,
        report.milp_status(),
        report.total_drive_h
    );
    Ok(ExitCode::SUCCESS)
}
