//! `fleetplan` command-line driver.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fleetplan::admm::SolverVariant;
use fleetplan::exec::with_threads;
use fleetplan::partition::{build_partition, FleetSnapshot, SnapshotVehicle};
use fleetplan::scaling::{scaling_series, Topology};
use fleetplan::sim::{generate_scenario, metrics, run_episode, write_outputs, EpisodeOptions, ScenarioConfig};
use fleetplan::{verify, Execution};

#[derive(Parser)]
#[command(
    name = "fleetplan",
    version,
    about = "Cooperative motion planning for connected vehicle fleets"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario and write states.csv, metrics.json and partition.json.
    Run(RunArgs),
    /// Partition the spawned fleet of a scenario and write partition.json.
    Partition(ScenarioArgs),
    /// Measure dual-update work and wall time against subgraph size.
    BenchScaling(BenchArgs),
    /// Run the oracle equivalence suites.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct ScenarioArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[arg(long, default_value = "improved")]
    solver: SolverVariant,
    /// Caps the number of worker threads.
    #[arg(long)]
    threads: Option<usize>,
    /// Also write the per-iteration solver trace to trace.csv.
    #[arg(long)]
    trace: bool,
    /// Solve subgraphs on the calling thread only.
    #[arg(long)]
    sequential: bool,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "4,8,16,32")]
    sizes: Vec<usize>,
    /// Inner iterations timed per size.
    #[arg(long, default_value_t = 10)]
    iterations: usize,
    #[arg(long, default_value_t = 3)]
    repeats: usize,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    sequential: bool,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn execution(sequential: bool) -> Execution {
    if sequential {
        Execution::Sequential
    } else {
        Execution::default()
    }
}

fn load_scenario(args: &ScenarioArgs) -> Result<ScenarioConfig, String> {
    let mut cfg = ScenarioConfig::load(&args.scenario).map_err(|e| e.to_string())?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn cmd_run(args: &RunArgs) -> Result<ExitCode, String> {
    let cfg = load_scenario(&args.scenario)?;
    let map = cfg.road_graph().map_err(|e| e.to_string())?;
    let fleet = generate_scenario(&cfg, &map).map_err(|e| e.to_string())?;
    let opts = EpisodeOptions {
        execution: execution(args.sequential),
        variant: args.solver,
        trace: args.trace,
        ..Default::default()
    };
    let result = with_threads(args.threads, || run_episode(&fleet, &cfg, &opts));
    let (log, failure) = match result {
        Ok(log) => (log, None),
        Err(e) => (*e.log, Some(e.error)),
    };
    write_outputs(&args.scenario.out, &log, args.trace).map_err(|e| e.to_string())?;
    let m = metrics(&log);
    println!("scenario        {}", cfg.name);
    println!("vehicles        {} ({} reached goal)", m.vehicles, m.reached);
    println!("steps           {}", m.steps);
    println!("min distance    {:.3} m", m.min_distance);
    println!("mean |v-v_ref|  {:.3} m/s", m.mean_speed_error);
    println!("max epoch solve {:.3} s", m.max_epoch_solve_seconds);
    println!("outputs         {}", args.scenario.out.display());
    match failure {
        None => Ok(ExitCode::SUCCESS),
        Some(e) => {
            eprintln!("episode failed: {e}");
            Ok(ExitCode::from(2))
        }
    }
}

fn cmd_partition(args: &ScenarioArgs) -> Result<ExitCode, String> {
    let cfg = load_scenario(args)?;
    let map = cfg.road_graph().map_err(|e| e.to_string())?;
    let fleet = generate_scenario(&cfg, &map).map_err(|e| e.to_string())?;
    let snap = FleetSnapshot {
        vehicles: fleet
            .iter()
            .map(|m| SnapshotVehicle {
                x: m.start.x,
                y: m.start.y,
                theta: m.start.theta,
                v_ref: m.v_ref,
                r_tele: cfg.r_tele,
            })
            .collect(),
    };
    let parts = build_partition(&snap, cfg.solver.horizon_seconds());
    std::fs::create_dir_all(&args.out).map_err(|e| e.to_string())?;
    let json = serde_json::to_string_pretty(&parts).map_err(|e| e.to_string())?;
    write(&args.out.join("partition.json"), &json)?;
    for (k, p) in parts.iter().enumerate() {
        let flag = if p.comm_disconnected {
            " (radio-disconnected)"
        } else {
            ""
        };
        println!("subgraph {k}: {} vehicles, {} edges{flag}", p.len(), p.edges.len());
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_bench(args: &BenchArgs) -> Result<ExitCode, String> {
    let cfg = fleetplan::ocp::SolverConfig::default();
    let exec = execution(args.sequential);
    let plan = [
        (SolverVariant::Improved, Topology::Ring),
        (SolverVariant::Naive, Topology::Ring),
        (SolverVariant::Naive, Topology::Complete),
    ];
    let series = with_threads(args.threads, || {
        plan.iter()
            .map(|&(v, t)| scaling_series(&args.sizes, v, t, args.iterations, args.repeats, exec, &cfg))
            .collect::<Result<Vec<_>, _>>()
    })
    .map_err(|e| e.to_string())?;
    println!(
        "{:<9} {:<9} {:>4} {:>7} {:>16} {:>14}",
        "variant", "graph", "N", "degree", "work/iteration", "ms/iteration"
    );
    for s in &series {
        for r in &s.rows {
            println!(
                "{:<9} {:<9} {:>4} {:>7} {:>16.0} {:>14.3}",
                r.variant.to_string(),
                format!("{:?}", r.topology).to_lowercase(),
                r.n,
                r.max_degree,
                r.work_per_iteration,
                1e3 * r.seconds_per_iteration
            );
        }
    }
    for s in &series {
        println!(
            "slope {:<9} {:<9} work {:.3}  time {:.3}",
            s.variant.to_string(),
            format!("{:?}", s.topology).to_lowercase(),
            s.work_slope,
            s.time_slope
        );
    }
    std::fs::create_dir_all(&args.out).map_err(|e| e.to_string())?;
    let json = serde_json::to_string_pretty(&series).map_err(|e| e.to_string())?;
    write(&args.out.join("scaling.json"), &json)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify(args: &VerifyArgs) -> ExitCode {
    let results = verify::run_all(args.seed);
    for r in &results {
        println!("{}", r.line());
    }
    if results.iter().all(|r| r.passed) {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn write(path: &Path, text: &str) -> Result<(), String> {
    std::fs::write(path, text).map_err(|e| format!("{}: {e}", path.display()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Partition(a) => cmd_partition(a),
        Command::BenchScaling(a) => cmd_bench(a),
        Command::Verify(a) => Ok(cmd_verify(a)),
    };
    match result {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
