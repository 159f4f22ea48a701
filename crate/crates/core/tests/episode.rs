//! Closed-loop episodes on hand-built and generated fleets.

use fleetplan::geometry::footprints_overlap;
use fleetplan::road::GuidanceTrajectory;
use fleetplan::sim::{
    generate_scenario, run_episode, states_csv, EpisodeOptions, FleetMember, Outcome, RunLog, ScenarioConfig,
};
use fleetplan::vehicle::{step_dynamics, VehicleState};
use fleetplan::Execution;
use nalgebra::Vector2;

fn straight_member(from: Vector2<f64>, heading: f64, length: f64, v0: f64, v_ref: f64) -> FleetMember {
    let dir = Vector2::new(heading.cos(), heading.sin());
    let points: Vec<(f64, f64)> = (0..=length as usize)
        .map(|k| {
            let p = from + dir * k as f64;
            (p.x, p.y)
        })
        .collect();
    FleetMember {
        start: VehicleState::new(from.x, from.y, heading, v0),
        trajectory: GuidanceTrajectory::from_points(&points, v_ref),
        goal: from + dir * length,
        v_ref,
    }
}

/// Two vehicles that would reach a crossing together at their reference speed.
fn crossing_pair() -> Vec<FleetMember> {
    vec![
        straight_member(Vector2::new(-40.0, 0.0), 0.0, 100.0, 10.0, 10.0),
        straight_member(Vector2::new(0.0, -41.0), std::f64::consts::FRAC_PI_2, 100.0, 10.0, 10.0),
    ]
}

fn config(cav_count: usize) -> ScenarioConfig {
    ScenarioConfig {
        cav_count,
        ..ScenarioConfig::default()
    }
}

fn run(fleet: &[FleetMember], cfg: &ScenarioConfig, opts: EpisodeOptions) -> RunLog {
    run_episode(fleet, cfg, &opts).unwrap_or_else(|e| panic!("episode failed: {e}"))
}

#[test]
fn single_vehicle_settles_at_reference_speed() {
    let fleet = vec![straight_member(Vector2::new(0.0, 0.0), 0.3, 200.0, 4.0, 10.0)];
    let log = run(&fleet, &config(1), EpisodeOptions::default());
    assert_eq!(log.outcome, Outcome::Completed);
    assert!(log.reached[0]);
    let cruise: Vec<f64> = log
        .records
        .iter()
        .filter(|r| r.step >= 50 && r.step + 20 < log.steps)
        .map(|r| r.state.v)
        .collect();
    assert!(!cruise.is_empty());
    for v in cruise {
        assert!((v - 10.0).abs() <= 0.5, "speed {v} outside 5% of 10 m/s");
    }
}

#[test]
fn crossing_vehicles_keep_their_distance() {
    let cfg = config(2);
    let log = run(&crossing_pair(), &cfg, EpisodeOptions::default());
    assert_eq!(log.outcome, Outcome::Completed);
    assert!(log.reached.iter().all(|r| *r));
    assert!(log.min_distance() >= 2.5, "min distance {}", log.min_distance());
    let mut by_step: std::collections::BTreeMap<usize, Vec<VehicleState>> = Default::default();
    for r in &log.records {
        by_step.entry(r.step).or_default().push(r.state);
    }
    for states in by_step.values().filter(|s| s.len() == 2) {
        assert!(!footprints_overlap(&states[0], &cfg.vehicle, &states[1], &cfg.vehicle));
    }
    assert!(log.subgraph_sizes().contains(&2));
}

#[test]
fn logged_states_follow_the_model_exactly() {
    let cfg = config(2);
    let log = run(&crossing_pair(), &cfg, EpisodeOptions::default());
    for vehicle in 0..2 {
        let rows: Vec<_> = log.records.iter().filter(|r| r.vehicle == vehicle).collect();
        for w in rows.windows(2) {
            assert_eq!(w[1].step, w[0].step + 1);
            let next = step_dynamics(&w[0].state, &w[0].control, cfg.solver.dt, &cfg.vehicle).unwrap();
            assert_eq!(next, w[1].state, "vehicle {vehicle} step {}", w[1].step);
            assert!(w[0].control.a >= cfg.limits.a_min && w[0].control.a <= cfg.limits.a_max);
            assert!(w[0].control.delta.abs() <= cfg.limits.delta_max);
        }
    }
}

#[test]
fn solve_order_and_execution_do_not_change_results() {
    let cfg = ScenarioConfig {
        seed: 4,
        ..ScenarioConfig::default()
    };
    let map = cfg.road_graph().unwrap();
    let fleet = generate_scenario(&cfg, &map).unwrap();
    let base = EpisodeOptions {
        max_epochs: Some(8),
        ..EpisodeOptions::default()
    };
    let reference = states_csv(&run(&fleet, &cfg, base));
    let reversed = EpisodeOptions {
        reverse_order: true,
        ..base
    };
    let sequential = EpisodeOptions {
        execution: Execution::Sequential,
        ..base
    };
    assert_eq!(states_csv(&run(&fleet, &cfg, reversed)), reference);
    assert_eq!(states_csv(&run(&fleet, &cfg, sequential)), reference);
}

#[test]
fn full_horizon_execution_runs() {
    let mut cfg = config(2);
    cfg.solver.t_e = cfg.solver.t_s;
    let log = run(&crossing_pair(), &cfg, EpisodeOptions::default());
    assert_eq!(log.outcome, Outcome::Completed);
    assert!(log.min_distance() >= 2.5);
    assert!(log.epochs.iter().skip(1).all(|e| e.start_step % cfg.solver.t_s == 0));
}

#[test]
fn epoch_limit_stops_early() {
    let log = run(
        &crossing_pair(),
        &config(2),
        EpisodeOptions {
            max_epochs: Some(2),
            ..EpisodeOptions::default()
        },
    );
    assert_eq!(log.outcome, Outcome::EpochLimit);
    assert_eq!(log.epochs.len(), 2);
    assert_eq!(log.steps, 20);
}

#[test]
fn overlapping_start_is_rejected() {
    let fleet = vec![
        straight_member(Vector2::new(0.0, 0.0), 0.0, 50.0, 5.0, 10.0),
        straight_member(Vector2::new(1.0, 0.5), 0.0, 50.0, 5.0, 10.0),
    ];
    let err = run_episode(&fleet, &config(2), &EpisodeOptions::default()).unwrap_err();
    assert!(err.log.records.is_empty());
}

#[test]
fn generation_is_seeded_and_respects_ranges() {
    let cfg = ScenarioConfig {
        seed: 11,
        ..ScenarioConfig::default()
    };
    let map = cfg.road_graph().unwrap();
    let a = generate_scenario(&cfg, &map).unwrap();
    assert_eq!(a, generate_scenario(&cfg, &map).unwrap());
    assert_ne!(
        a,
        generate_scenario(
            &ScenarioConfig {
                seed: 12,
                ..cfg.clone()
            },
            &map
        )
        .unwrap()
    );
    assert_eq!(a.len(), cfg.cav_count);
    for m in &a {
        let d = m.start.position().norm();
        assert!(d >= cfg.spawn_ring[0] && d <= cfg.spawn_ring[1], "spawn distance {d}");
        assert_eq!(m.v_ref, 10.0);
        assert_eq!(m.start.v, m.v_ref);
        let trip = (m.goal - m.start.position()).norm();
        assert!(trip >= cfg.destination_ring[0] - cfg.goal_tol, "trip {trip}");
    }
    for (i, p) in a.iter().enumerate() {
        for q in &a[i + 1..] {
            assert!((p.start.position() - q.start.position()).norm() >= 2.0 * cfg.vehicle.length);
        }
    }
}

#[test]
fn sampled_reference_speeds_stay_in_range() {
    let cfg = ScenarioConfig {
        seed: 3,
        cav_count: 16,
        spawn_ring: [7.5, 70.0],
        v_ref: [5.0, 20.0],
        ..ScenarioConfig::default()
    };
    let map = cfg.road_graph().unwrap();
    let fleet = generate_scenario(&cfg, &map).unwrap();
    assert!(fleet.iter().all(|m| m.v_ref >= 5.0 && m.v_ref <= 20.0));
    assert!(fleet.windows(2).any(|w| w[0].v_ref != w[1].v_ref));
}

#[test]
fn too_many_vehicles_for_the_ring_is_an_error() {
    let cfg = ScenarioConfig {
        cav_count: 500,
        ..ScenarioConfig::default()
    };
    let map = cfg.road_graph().unwrap();
    assert!(generate_scenario(&cfg, &map).is_err());
}

#[test]
fn outputs_are_written_and_parse() {
    let cfg = config(2);
    let opts = EpisodeOptions {
        trace: true,
        ..EpisodeOptions::default()
    };
    let log = run(&crossing_pair(), &cfg, opts);
    let dir = tempfile::tempdir().unwrap();
    fleetplan::sim::write_outputs(dir.path(), &log, true).unwrap();

    let states = std::fs::read_to_string(dir.path().join("states.csv")).unwrap();
    assert_eq!(states.lines().count(), log.records.len() + 1);
    let metrics: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["outcome"], "completed");
    assert_eq!(metrics["vehicles"], 2);
    assert!((metrics["min_distance"].as_f64().unwrap() - log.min_distance()).abs() < 1e-12);
    let partition: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("partition.json")).unwrap()).unwrap();
    assert_eq!(partition.as_array().unwrap().len(), log.epochs.len());
    let trace = std::fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), log.trace.len() + 1);
    assert!(!log.trace.is_empty());
}
