//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the process exits non-zero when any criterion fails.

use std::collections::{BTreeMap, VecDeque};
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use swarmtransit::grid::{Direction, GridMap, NodeId, Position};
use swarmtransit::hub::Job;
use swarmtransit::planner::{astar, bellman_ford, dijkstra, floyd_warshall, PathMemory, TimedPath, TimedStep};
use swarmtransit::radar::{detect_targets, distance_from_echo, sweep, time_of_flight, Disc, SweepConfig, WorldModel};
use swarmtransit::rfnet::{
    assign_channel, crc16_ccitt_false, decode, encode, Channel, Medium, MediumConfig, Message, Radio, RadioId,
    TelemetryPayload, CHANNEL_COUNT,
};
use swarmtransit::sim::{run, Scenario, SimReport, Simulation, VehicleSpec};
use swarmtransit::vehicle::{CycleRecord, Drive, Vehicle, VehicleParams, VehicleState};

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit_s: f64) -> Result<(), String> {
    check(elapsed.as_secs_f64() < limit_s, || format!("took {:.2} s, limit {limit_s} s", elapsed.as_secs_f64()))
}

// ---------------------------------------------------------------- 1 planners

/// Hop distances by breadth-first search.
fn bfs(grid: &GridMap, src: NodeId) -> BTreeMap<NodeId, u32> {
    let mut dist = BTreeMap::from([(src, 0)]);
    let mut queue = VecDeque::from([src]);
    while let Some(u) = queue.pop_front() {
        let du = dist[&u];
        for v in grid.neighbors(u) {
            if let std::collections::btree_map::Entry::Vacant(e) = dist.entry(v) {
                e.insert(du + 1);
                queue.push_back(v);
            }
        }
    }
    dist
}

fn random_grid(rng: &mut ChaCha8Rng) -> GridMap {
    let mut grid = GridMap::new(2.0, 2.0, 0.25).expect("9 x 9 grid");
    let fraction = rng.gen_range(0.0..=0.3);
    let mut nodes: Vec<NodeId> = grid.nodes().collect();
    nodes.shuffle(rng);
    let count = (fraction * nodes.len() as f64).round() as usize;
    for &n in &nodes[..count] {
        grid.block(n).expect("node in range");
    }
    grid
}

fn planners() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut reachable = 0;
    for case in 0..200 {
        let grid = random_grid(&mut rng);
        let free: Vec<NodeId> = grid.nodes().filter(|&n| !grid.is_blocked(n)).collect();
        let src = *free.choose(&mut rng).expect("free node");
        let dst = *free.choose(&mut rng).expect("free node");
        let oracle = bfs(&grid, src).get(&dst).copied();
        let d = dijkstra(&grid, src, dst).ok();
        let a = astar(&grid, src, dst).ok();
        for (name, p) in [("dijkstra", &d), ("astar", &a)] {
            if let Some(p) = p {
                check(p.is_valid_on(&grid) && p.nodes.len() as u32 == p.cost + 1, || {
                    format!("case {case}: {name} returned an invalid path")
                })?;
            }
        }
        let costs = [
            ("dijkstra", d.map(|p| p.cost)),
            ("astar", a.map(|p| p.cost)),
            ("bellman-ford", bellman_ford(&grid, src).get(&dst).copied()),
            ("floyd-warshall", floyd_warshall(&grid).map_err(|e| e.to_string())?.get(src, dst)),
        ];
        for (name, cost) in costs {
            check(cost == oracle, || format!("case {case}: {name} {cost:?} vs bfs {oracle:?} for {src} -> {dst}"))?;
        }
        reachable += usize::from(oracle.is_some());
    }
    within(start.elapsed(), 5.0)?;
    Ok(format!("200 grids agree ({reachable} reachable pairs) in {:.2} s", start.elapsed().as_secs_f64()))
}

// --------------------------------------------------------------- 4 regulation

fn regulation() -> Outcome {
    let params = VehicleParams::default();
    let dt = 0.01;
    let target = 2.0;
    let mut drive = Drive::new(&params);
    let mut peak: f64 = 0.0;
    let mut settle_s = 0.0;
    for k in 1..=500 {
        drive.regulate(target, target, &params, dt).map_err(|e| e.to_string())?;
        let w = drive.wheels.omega_left;
        peak = peak.max(w);
        if (w - target).abs() > 0.02 * target {
            settle_s = k as f64 * dt;
        }
    }
    let overshoot = (peak - target).max(0.0) / target;
    check(settle_s <= 2.0, || format!("wheel settles at {settle_s:.2} s"))?;
    check(overshoot <= 0.10, || format!("overshoot {:.1}%", overshoot * 100.0))?;

    // straight run along one row; each hop starts from rest, so sample once
    // the wheel loop has settled within the hop
    let grid = GridMap::new(3.0, 0.5, 0.25).map_err(|e| e.to_string())?;
    let row: Vec<NodeId> = (0..=12).map(|ix| NodeId::new(ix, 0)).collect();
    let free = TimedPath { steps: row.iter().map(|&node| TimedStep { node, enter_tick: 0, exit_tick: 0 }).collect() };
    let mut memory = PathMemory::new();
    let mut v = Vehicle::new(0, row[0], 0.0, params, &grid).map_err(|e| e.to_string())?;
    v.press_load_switch().map_err(|e| e.to_string())?;
    v.on_destination(row[12], &free).map_err(|e| e.to_string())?;
    let settle_ticks = (settle_s / dt).ceil() as u64;
    let (mut worst, mut samples): (f64, u32) = (0.0, 0);
    let (mut node, mut hop_start) = (v.node(), 0u64);
    for tick in 0..5000 {
        v.step(&grid, dt, tick, &mut memory).map_err(|e| e.to_string())?;
        if v.state() != VehicleState::Transit {
            break;
        }
        if v.node() != node {
            (node, hop_start) = (v.node(), tick + 1);
        } else if tick - hop_start >= settle_ticks {
            worst = worst.max((v.speed() - params.cruise_speed_m_s).abs() / params.cruise_speed_m_s);
            samples += 1;
        }
    }
    check(samples > 0 && v.node() == row[12], || format!("straight run ended at {} with {samples} samples", v.node()))?;
    check(worst <= 0.02, || format!("straight speed deviates {:.2}%", worst * 100.0))?;
    Ok(format!(
        "settle {settle_s:.2} s, overshoot {:.2}%, cruise deviation {:.3}% over {samples} samples",
        overshoot * 100.0,
        worst * 100.0
    ))
}

// -------------------------------------------------------------------- 5 radar

fn radar_world(rng: &mut ChaCha8Rng, cfg: &SweepConfig) -> Vec<Disc> {
    let count = rng.gen_range(1..=3);
    let mut bearings: Vec<f64> = Vec::new();
    while bearings.len() < count {
        let b: f64 = rng.gen_range(0.0..360.0);
        let gap = |a: f64| {
            let d = (a - b).rem_euclid(360.0);
            d.min(360.0 - d)
        };
        if bearings.iter().all(|&a| gap(a) >= 60.0) {
            bearings.push(b);
        }
    }
    bearings
        .into_iter()
        .map(|b| {
            let range = rng.gen_range(1.0..3.5);
            let (s, c) = b.to_radians().sin_cos();
            let center = Position::new(cfg.origin.x + range * c, cfg.origin.y + range * s);
            Disc { center, radius_m: rng.gen_range(0.05..0.15) }
        })
        .collect()
}

fn radar() -> Outcome {
    let cfg = SweepConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst_err: f64 = 0.0;
    for world_no in 0..20 {
        let discs = radar_world(&mut rng, &cfg);
        let world = WorldModel { obstacles: discs.clone() };
        let scan = sweep(&world, &cfg, 0.0, 360.0 - cfg.step_deg);
        for s in &scan.samples {
            if let Some(d) = s.distance_m {
                check(d <= cfg.max_range_m, || format!("world {world_no}: range {d} beyond cap"))?;
            }
        }
        let targets = detect_targets(&scan, &cfg);
        check(targets.len() == discs.len(), || {
            format!("world {world_no}: {} targets for {} discs", targets.len(), discs.len())
        })?;
        for disc in &discs {
            let range = disc.center.distance(cfg.origin);
            let k = (range - disc.radius_m) / range;
            let face = Position::new(
                cfg.origin.x + k * (disc.center.x - cfg.origin.x),
                cfg.origin.y + k * (disc.center.y - cfg.origin.y),
            );
            let err = targets.iter().map(|t| t.centroid.distance(face)).fold(f64::INFINITY, f64::min);
            worst_err = worst_err.max(err);
            check(err <= 0.05, || format!("world {world_no}: centroid error {err:.4} m"))?;
        }
    }
    for _ in 0..1000 {
        let d = rng.gen_range(0.001..4.0);
        let back = distance_from_echo(time_of_flight(d, cfg.speed_of_sound_m_s).map_err(|e| e.to_string())?, cfg.speed_of_sound_m_s);
        check(((back - d) / d).abs() <= 1e-9, || format!("time of flight round trip {d} -> {back}"))?;
    }
    Ok(format!("20 worlds exact counts, worst centroid error {worst_err:.4} m"))
}

// -------------------------------------------------------------------- 6 radio

fn random_message(rng: &mut ChaCha8Rng) -> Message {
    let vehicle = rng.gen_range(0..CHANNEL_COUNT) as u8;
    match rng.gen_range(0..4) {
        0 => Message::Activate { vehicle },
        1 => Message::Ack { vehicle },
        2 => Message::AssignDestination { vehicle, dest: NodeId::new(rng.gen(), rng.gen()) },
        _ => Message::Telemetry {
            vehicle,
            data: TelemetryPayload {
                x_mm: rng.gen(),
                y_mm: rng.gen(),
                speed_mm_s: rng.gen(),
                heading_cdeg: rng.gen_range(0..36000),
                state: rng.gen_range(0..6),
            },
        },
    }
}

fn radio() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for i in 0..10_000 {
        let m = random_message(&mut rng);
        let frame = encode(&m).map_err(|e| e.to_string())?;
        let back = decode(frame.as_bytes()).map_err(|e| format!("message {i}: {e}"))?;
        check(back == m, || format!("message {i}: {m:?} decoded as {back:?}"))?;
    }
    let crc = crc16_ccitt_false(b"123456789");
    check(crc == 0x29B1, || format!("check value {crc:#06X}"))?;

    // one listener per channel; senders on random channels
    let mut medium = Medium::new(MediumConfig { loss_probability: 0.0, latency_ticks: 2, seed: 9 });
    let listeners: Vec<Radio> = (0..CHANNEL_COUNT)
        .map(|c| Ok(Radio { id: RadioId(1000 + c), channel: Channel::new(c)? }))
        .collect::<Result<_, swarmtransit::rfnet::RfError>>()
        .map_err(|e| e.to_string())?;
    let mut expected: Vec<Vec<Vec<u8>>> = vec![Vec::new(); CHANNEL_COUNT as usize];
    let mut received: Vec<Vec<Vec<u8>>> = vec![Vec::new(); CHANNEL_COUNT as usize];
    let mut serial: u16 = 0;
    for tick in 0..400 {
        for _ in 0..rng.gen_range(0..20) {
            let c = rng.gen_range(0..CHANNEL_COUNT);
            let data = TelemetryPayload { x_mm: serial, y_mm: c as u16, speed_mm_s: 0, heading_cdeg: 0, state: 0 };
            serial = serial.wrapping_add(1);
            let frame = encode(&Message::Telemetry { vehicle: rng.gen_range(0..128), data }).map_err(|e| e.to_string())?;
            expected[c as usize].push(frame.as_bytes().to_vec());
            medium.send(RadioId(rng.gen_range(0..50)), Channel::new(c).map_err(|e| e.to_string())?, frame, tick);
        }
        for l in &listeners {
            received[l.channel.index() as usize].extend(medium.poll(l, tick).iter().map(|f| f.as_bytes().to_vec()));
        }
    }
    for l in &listeners {
        received[l.channel.index() as usize].extend(medium.poll(l, 1000).iter().map(|f| f.as_bytes().to_vec()));
    }
    check(expected == received, || "listeners saw frames from other channels or missed some".into())?;
    // a sender never hears its own frame
    let mut own = Radio { id: RadioId(3), channel: Channel::new(7).map_err(|e| e.to_string())? };
    medium.send(own.id, own.channel, encode(&Message::Ack { vehicle: 3 }).map_err(|e| e.to_string())?, 0);
    check(medium.poll(&own, 10).is_empty(), || "sender heard itself".into())?;
    own.tune(Channel::new(8).map_err(|e| e.to_string())?);
    check(medium.poll(&own, 10).is_empty(), || "retuned radio heard another channel".into())?;

    check(assign_channel(127).is_ok(), || "id 127 rejected".into())?;
    check(assign_channel(128).is_err() && assign_channel(u32::MAX).is_err(), || "id >= 128 accepted".into())?;
    Ok(format!("10000 round trips, crc {crc:#06X}, {serial} frames isolated over 128 channels"))
}

// ------------------------------------------------------- 2, 3 fleet scenarios

struct FleetRun {
    report: SimReport,
    homes: BTreeMap<u32, NodeId>,
    cycles: Vec<(u32, CycleRecord)>,
}

/// Homes on the bottom row, destinations a permutation of columns on the top
/// row; every vehicle picks up at its own home.
fn crossing_scenario(seed: u64) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = rng.gen_range(2..=8usize);
    let mut columns: Vec<u16> = (0..9).collect();
    columns.shuffle(&mut rng);
    let homes = &columns[..count];
    let mut tops: Vec<u16> = (0..9).collect();
    tops.shuffle(&mut rng);
    let mut s = Scenario::prototype();
    s.vehicles = homes
        .iter()
        .enumerate()
        .map(|(i, &ix)| VehicleSpec { id: i as u32, home: NodeId::new(ix, 0), heading_deg: 90.0, params: VehicleParams::default() })
        .collect();
    s.jobs = homes
        .iter()
        .zip(&tops)
        .enumerate()
        .map(|(i, (&hx, &tx))| Job { id: i as u32, pickup: NodeId::new(hx, 0), destination: NodeId::new(tx, 8), release_tick: 0 })
        .collect();
    s.medium.seed = seed;
    s
}

fn run_fleet(scenario: Scenario) -> Result<FleetRun, String> {
    let homes = scenario.vehicles.iter().map(|v| (v.id, v.home)).collect();
    let mut sim = Simulation::new(scenario).map_err(|e| e.to_string())?;
    sim.run_to_end().map_err(|e| e.to_string())?;
    let cycles = sim.vehicles().iter().flat_map(|v| v.completed_cycles().iter().map(|c| (v.id, c.clone()))).collect();
    Ok(FleetRun { report: sim.report(Vec::new()), homes, cycles })
}

fn reservation_safety(runs: &[FleetRun], elapsed: Duration) -> Outcome {
    let mut vehicles = 0;
    let mut closest = f64::INFINITY;
    for (seed, r) in runs.iter().enumerate() {
        let a = &r.report.audit;
        check(r.report.all_completed(), || format!("seed {seed}: {}/{} jobs", r.report.completed_jobs, r.report.total_jobs))?;
        check(a.node_conflicts == 0 && a.near_collisions == 0 && a.reservation_overlaps == 0, || {
            format!("seed {seed}: {} node conflicts, {} near collisions, {} overlaps", a.node_conflicts, a.near_collisions, a.reservation_overlaps)
        })?;
        vehicles += r.homes.len();
        closest = closest.min(a.min_pair_distance_m.unwrap_or(f64::INFINITY));
    }
    within(elapsed, 60.0)?;
    Ok(format!(
        "50 scenarios, {vehicles} vehicles, closest approach {closest:.3} m, {:.2} s",
        elapsed.as_secs_f64()
    ))
}

fn retrace_closure(runs: &[FleetRun]) -> Outcome {
    let grid = Scenario::prototype().grid().map_err(|e| e.to_string())?;
    let tolerance = grid.spacing_m() / 10.0;
    let mut cycles = 0;
    for (seed, r) in runs.iter().enumerate() {
        for (vid, c) in &r.cycles {
            let home = grid.node_to_position(r.homes[vid]).map_err(|e| e.to_string())?;
            let end = Position::new(c.final_pose.0 as f64 * 1e-6, c.final_pose.1 as f64 * 1e-6);
            check(end.distance(home) <= tolerance, || {
                format!("seed {seed} vehicle {vid}: ended {:.4} m from home", end.distance(home))
            })?;
            let reversed: Vec<NodeId> = c.outbound.iter().rev().copied().collect();
            check(c.retraced == reversed, || format!("seed {seed} vehicle {vid}: retrace is not the reversed outbound"))?;
            cycles += 1;
        }
        check(r.cycles.len() == r.report.completed_jobs, || format!("seed {seed}: cycle count mismatch"))?;
    }
    Ok(format!("{cycles} cycles closed within {tolerance} m"))
}

// ------------------------------------------------------------ 7 determinism

/// Turning cost of an L-shaped route over `dx, dy` from `heading`, taking
/// the cheaper leg order.
struct Turns {
    quarters: u32,
    /// Separate turn-in-place manoeuvres.
    events: u32,
    /// Turns between the two straight legs.
    bends: u32,
    end: Direction,
}

fn l_route_turns(heading: Direction, dx: i32, dy: i32) -> Turns {
    let along_x = (dx != 0).then_some(if dx > 0 { Direction::East } else { Direction::West });
    let along_y = (dy != 0).then_some(if dy > 0 { Direction::North } else { Direction::South });
    let legs: Vec<Direction> = [along_x, along_y].into_iter().flatten().collect();
    let (first, end, bends) = match legs.as_slice() {
        [] => return Turns { quarters: 0, events: 0, bends: 0, end: heading },
        [only] => (*only, *only, 0),
        [a, b] if heading.quarter_turns_to(*a) <= heading.quarter_turns_to(*b) => (*a, *b, 1),
        [a, b] => (*b, *a, 1),
        _ => unreachable!(),
    };
    let initial = heading.quarter_turns_to(first);
    Turns { quarters: initial + bends, events: u32::from(initial > 0) + bends, bends, end }
}

/// Hop travel at cruise, turn-in-place time and one motor time constant of
/// start-up lag per manoeuvre, for the slowest vehicle of the scenario.
fn analytic_makespan_s(s: &Scenario) -> f64 {
    let p = VehicleParams::default();
    let quarter_turn_s = std::f64::consts::FRAC_PI_2 / p.turn_yaw_rate();
    let mut slowest: f64 = 0.0;
    for job in &s.jobs {
        let Some(v) = s.vehicles.iter().find(|v| v.home == job.pickup) else { continue };
        let mut heading = Direction::from_heading(v.heading_deg);
        let (mut hops, mut quarters, mut events, mut bends) = (0u32, 0u32, 0u32, 0u32);
        for (a, b) in [(v.home, job.pickup), (job.pickup, job.destination)] {
            let t = l_route_turns(heading, b.ix as i32 - a.ix as i32, b.iy as i32 - a.iy as i32);
            hops += a.manhattan(b);
            quarters += t.quarters;
            events += t.events;
            bends += t.bends;
            heading = t.end;
        }
        // retrace: one about-turn, then the same bends in reverse
        let total_hops = 2 * hops;
        let total_quarters = quarters + 2 + bends;
        let total_manoeuvres = total_hops + events + 1 + bends;
        let t = total_hops as f64 * s.terrain.spacing_m / p.cruise_speed_m_s
            + total_quarters as f64 * quarter_turn_s
            + total_manoeuvres as f64 * p.motor_time_constant_s;
        slowest = slowest.max(t);
    }
    slowest
}

fn read_tree(dir: &std::path::Path) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let mut files = BTreeMap::new();
    let mut pending = vec![dir.to_path_buf()];
    while let Some(d) = pending.pop() {
        for entry in std::fs::read_dir(&d).map_err(|e| e.to_string())? {
            let path = entry.map_err(|e| e.to_string())?.path();
            if path.is_dir() {
                pending.push(path);
            } else {
                let name = path.strip_prefix(dir).map_err(|e| e.to_string())?.display().to_string();
                files.insert(name, std::fs::read(&path).map_err(|e| e.to_string())?);
            }
        }
    }
    Ok(files)
}

fn determinism() -> Outcome {
    let start = Instant::now();
    let scenario = Scenario::prototype();
    let dirs = [tempfile::tempdir().map_err(|e| e.to_string())?, tempfile::tempdir().map_err(|e| e.to_string())?];
    let mut reports = Vec::new();
    for d in &dirs {
        reports.push(run(scenario.clone(), d.path()).map_err(|e| e.to_string())?);
    }
    let elapsed = start.elapsed();
    let (a, b) = (read_tree(dirs[0].path())?, read_tree(dirs[1].path())?);
    for name in ["telemetry.csv", "radar_frames.txt", "summary.json", "summary.txt"] {
        check(a.contains_key(name), || format!("{name} missing"))?;
    }
    check(a == b, || "outputs differ between runs".into())?;
    let report = &reports[0];
    check(report.all_completed(), || format!("{}/{} jobs", report.completed_jobs, report.total_jobs))?;
    let measured_s = report.makespan_ticks as f64 * scenario.sim.dt_s;
    let estimate_s = analytic_makespan_s(&scenario);
    let rel = (measured_s - estimate_s).abs() / estimate_s;
    check(rel <= 0.20, || format!("makespan {measured_s:.2} s vs estimate {estimate_s:.2} s"))?;
    within(elapsed, 10.0)?;
    Ok(format!(
        "{} identical files, makespan {measured_s:.2} s vs estimate {estimate_s:.2} s ({:+.1}%), {:.2} s",
        a.len(),
        (measured_s - estimate_s) / estimate_s * 100.0,
        elapsed.as_secs_f64()
    ))
}

// --------------------------------------------------------------- 8 liveness

fn lossy_liveness() -> Outcome {
    let mut worst = 0;
    for seed in 0..20 {
        let mut s = Scenario::prototype();
        s.medium.loss_probability = 0.3;
        s.medium.seed = seed;
        let max_ticks = s.sim.max_ticks;
        let r = run_fleet(s)?.report;
        check(r.all_completed() && r.makespan_ticks < max_ticks, || {
            format!("seed {seed}: {}/{} jobs after {} ticks", r.completed_jobs, r.total_jobs, r.ticks_run)
        })?;
        worst = worst.max(r.makespan_ticks);
    }
    Ok(format!("20/20 seeds complete, slowest makespan {worst} ticks"))
}

// ------------------------------------------------------------------- runner

fn main() {
    let start = Instant::now();
    let fleet: Result<Vec<FleetRun>, String> = (0..50).map(|seed| run_fleet(crossing_scenario(seed))).collect();
    let fleet_elapsed = start.elapsed();
    let criteria: Vec<(&str, Outcome)> = vec![
        ("planner oracle agreement", planners()),
        ("reservation safety", fleet.as_ref().map_err(Clone::clone).and_then(|r| reservation_safety(r, fleet_elapsed))),
        ("retrace closure", fleet.as_ref().map_err(Clone::clone).and_then(|r| retrace_closure(r))),
        ("speed regulation", regulation()),
        ("radar geometry", radar()),
        ("codec and channels", radio()),
        ("determinism and makespan", determinism()),
        ("lossy-medium liveness", lossy_liveness()),
    ];
    let mut failed = 0;
    for (i, (name, outcome)) in criteria.iter().enumerate() {
        match outcome {
            Ok(detail) => println!("criterion {} {name}: PASS ({detail})", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {} {name}: FAIL ({why})", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
