use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use swarmtransit::grid::NodeId;
use swarmtransit::planner::{astar, bellman_ford, dijkstra, floyd_warshall, Path, PlanError};
use swarmtransit::sim::{run, scan, Scenario, SimError};

/// Swarm cargo-transit simulator.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its artifacts.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the radio medium seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        max_ticks: Option<u64>,
    },
    /// Print a shortest path on the scenario grid.
    Plan {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, value_enum)]
        algo: Algo,
        #[arg(long, value_parser = parse_node)]
        from: NodeId,
        #[arg(long, value_parser = parse_node)]
        to: NodeId,
    },
    /// One radar sweep over the static scenario.
    Scan {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the two-vehicle prototype scenario.
    Defaults {
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Algo {
    Dijkstra,
    Astar,
    BellmanFord,
    FloydWarshall,
}

fn parse_node(s: &str) -> Result<NodeId, String> {
    let (x, y) = s.split_once(',').ok_or_else(|| format!("expected ix,iy, got {s:?}"))?;
    let p = |v: &str| v.trim().parse::<u16>().map_err(|e| format!("{v:?}: {e}"));
    Ok(NodeId::new(p(x)?, p(y)?))
}

fn load(path: &PathBuf) -> Result<Scenario, SimError> {
    Scenario::from_json(&fs::read_to_string(path)?)
}

fn plan(scenario: &Scenario, algo: Algo, from: NodeId, to: NodeId) -> Result<(Vec<NodeId>, u32), SimError> {
    let grid = scenario.validate()?;
    let cost_only = |cost: Option<u32>| cost.ok_or(PlanError::NoPath { from, to });
    let result = match algo {
        Algo::Dijkstra => dijkstra(&grid, from, to).map(|p: Path| (p.nodes, p.cost))?,
        Algo::Astar => astar(&grid, from, to).map(|p| (p.nodes, p.cost))?,
        Algo::BellmanFord => {
            for n in [from, to] {
                grid.check(n).map_err(|_| PlanError::InvalidNode(n))?;
            }
            (Vec::new(), cost_only(bellman_ford(&grid, from).get(&to).copied())?)
        }
        Algo::FloydWarshall => {
            for n in [from, to] {
                grid.check(n).map_err(|_| PlanError::InvalidNode(n))?;
            }
            (Vec::new(), cost_only(floyd_warshall(&grid)?.get(from, to))?)
        }
    };
    Ok(result)
}

fn exit_for(err: &SimError) -> ExitCode {
    match err {
        SimError::Plan(PlanError::NoPath { .. }) => ExitCode::from(2),
        _ => ExitCode::from(1),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run { scenario, out, seed, max_ticks } => load(&scenario).and_then(|mut s| {
            if let Some(seed) = seed {
                s.medium.seed = seed;
            }
            if let Some(m) = max_ticks {
                s.sim.max_ticks = m;
            }
            let report = run(s, &out)?;
            print!("{}", report.render_text());
            Ok(if report.all_completed() { ExitCode::SUCCESS } else { ExitCode::from(2) })
        }),
        Command::Plan { scenario, algo, from, to } => load(&scenario).and_then(|s| {
            let (nodes, cost) = plan(&s, algo, from, to)?;
            if !nodes.is_empty() {
                let text: Vec<String> = nodes.iter().map(NodeId::to_string).collect();
                println!("path {}", text.join(" "));
            }
            println!("cost {cost}");
            Ok(ExitCode::SUCCESS)
        }),
        Command::Scan { scenario, out } => load(&scenario).and_then(|s| {
            let result = scan(&s, &out)?;
            eprintln!("frames {} targets {}", result.frame_lines, result.targets);
            Ok(ExitCode::SUCCESS)
        }),
        Command::Defaults { out } => fs::write(&out, Scenario::prototype().to_json() + "\n")
            .map(|_| ExitCode::SUCCESS)
            .map_err(SimError::from),
    };
    outcome.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        exit_for(&e)
    })
}
