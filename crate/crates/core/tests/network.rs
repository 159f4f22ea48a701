//! Partitioning and the road layer against independent oracles.

use fleetplan::oracle::{
    dijkstra_length, linear_scan_nearest, resampled_point, savgol_by_regression, union_find_components,
};
use fleetplan::partition::{build_partition, safe_distance, FleetSnapshot, SnapshotVehicle};
use fleetplan::road::{
    astar_route, generate_grid_map, reference_window, savgol_filter, smooth_path, GridMapConfig, GuidanceTrajectory,
    RoadGraph, WaypointIndex,
};
use fleetplan::vehicle::VehicleState;
use fleetplan::verify;
use nalgebra::Vector2;
use proptest::prelude::*;

const HORIZON: f64 = 1.5;

fn vehicle() -> impl Strategy<Value = SnapshotVehicle> {
    (
        -150.0..150.0f64,
        -150.0..150.0f64,
        -3.2..3.2f64,
        5.0..20.0f64,
        20.0..120.0f64,
    )
        .prop_map(|(x, y, theta, v_ref, r_tele)| SnapshotVehicle {
            x,
            y,
            theta,
            v_ref,
            r_tele,
        })
}

fn grid() -> RoadGraph {
    generate_grid_map(&GridMapConfig::default()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn partition_matches_union_find(vehicles in prop::collection::vec(vehicle(), 1..60)) {
        let snap = FleetSnapshot { vehicles };
        let parts = build_partition(&snap, HORIZON);
        let mut members: Vec<Vec<usize>> = parts.iter().map(|p| p.members.clone()).collect();
        members.sort_by_key(|m| m[0]);
        prop_assert_eq!(members, union_find_components(&snap, HORIZON));

        let mut owner = vec![usize::MAX; snap.len()];
        for (k, p) in parts.iter().enumerate() {
            for &m in &p.members {
                owner[m] = k;
            }
            for &(a, b) in &p.edges {
                let (ga, gb) = (p.members[a], p.members[b]);
                prop_assert!(snap.manhattan(ga, gb) <= snap.vehicles[ga].r_tele.min(snap.vehicles[gb].r_tele));
            }
        }
        for i in 0..snap.len() {
            for j in i + 1..snap.len() {
                if owner[i] != owner[j] {
                    prop_assert!(snap.manhattan(i, j) >= snap.safe_distance(i, j, HORIZON));
                }
            }
        }
    }

    #[test]
    fn safe_distance_is_symmetric_and_bounded(vi in 0.0..25.0f64, vj in 0.0..25.0f64, gap in 0.0..std::f64::consts::PI) {
        let d = safe_distance(vi, vj, gap, HORIZON);
        prop_assert_eq!(d, safe_distance(vj, vi, gap, HORIZON));
        prop_assert!(d >= HORIZON * vi.max(vj) - 1e-12);
        prop_assert!(d <= HORIZON * (vi + vj) + 1e-12);
    }

    #[test]
    fn kd_tree_matches_linear_scan(points in prop::collection::vec((-100.0..100.0f64, -100.0..100.0f64), 1..200), qx in -120.0..120.0f64, qy in -120.0..120.0f64) {
        let pts: Vec<Vector2<f64>> = points.iter().map(|&(x, y)| Vector2::new(x, y)).collect();
        let q = Vector2::new(qx, qy);
        let tree = WaypointIndex::new(pts.clone());
        let got = tree.nearest(&q);
        let want = linear_scan_nearest(&pts, &q);
        prop_assert_eq!((pts[got] - q).norm(), (pts[want] - q).norm());
    }

    #[test]
    fn savgol_matches_windowed_regression(values in prop::collection::vec(-10.0..10.0f64, 11..60), wi in 0usize..4, order in 1usize..4) {
        let window = [5, 7, 9, 11][wi];
        prop_assume!(order < window && values.len() >= window);
        let fast = savgol_filter(&values, window, order).unwrap();
        let slow = savgol_by_regression(&values, window, order);
        for (a, b) in fast.iter().zip(&slow) {
            prop_assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0));
        }
        prop_assert_eq!(fast[0], values[0]);
        prop_assert_eq!(fast[values.len() - 1], values[values.len() - 1]);
    }

    #[test]
    fn savgol_reproduces_low_order_polynomials(c in prop::array::uniform4(-2.0..2.0f64), len in 11usize..40) {
        let values: Vec<f64> = (0..len).map(|k| {
            let x = k as f64 / 10.0;
            c[0] + c[1] * x + c[2] * x * x + c[3] * x * x * x
        }).collect();
        let out = savgol_filter(&values, 9, 3).unwrap();
        for (a, b) in out.iter().zip(&values) {
            prop_assert!((a - b).abs() <= 1e-9);
        }
    }

    #[test]
    fn reference_window_walks_arc_length(start in 0usize..40, v_ref in 2.0..20.0f64) {
        let pts: Vec<(f64, f64)> = (0..60).map(|k| {
            let s = k as f64 * 1.5;
            (s, 5.0 * (s / 20.0).sin())
        }).collect();
        let traj = GuidanceTrajectory::from_points(&pts, v_ref);
        let idx = traj.index();
        let wp = traj.position(start);
        let z = VehicleState::new(wp.x, wp.y, 0.0, v_ref);
        let refs = reference_window(&traj, &idx, &z, 15, 0.1);
        prop_assert_eq!(refs.len(), 16);
        let tail: Vec<Vector2<f64>> = (start..pts.len()).map(|k| traj.position(k)).collect();
        for (k, r) in refs.iter().enumerate() {
            let want = resampled_point(&tail, v_ref * 0.1 * k as f64, 0.5);
            prop_assert!((Vector2::new(r.x, r.y) - want).norm() <= 1e-9, "knot {k}: ({}, {}) vs {want}", r.x, r.y);
            prop_assert_eq!(r.v, v_ref);
        }
    }
}

#[test]
fn astar_matches_dijkstra_on_the_grid() {
    let map = grid();
    let ids: Vec<u64> = map.nodes().iter().map(|n| n.id).collect();
    let stride = ids.len() / 25;
    for &s in ids.iter().step_by(stride) {
        for &g in ids.iter().skip(stride / 2).step_by(stride) {
            match (astar_route(&map, s, g), dijkstra_length(&map, s, g)) {
                (Ok(route), Some(d)) => {
                    assert_eq!(route.first(), Some(&s));
                    assert_eq!(route.last(), Some(&g));
                    assert!((map.path_length(&route).unwrap() - d).abs() <= 1e-9 * d.max(1.0));
                }
                (Err(_), None) => {}
                (a, b) => panic!("{s} -> {g}: A* {a:?}, Dijkstra {b:?}"),
            }
        }
    }
}

/// Nodes away from the boundary, where lanes leaving the map dead-end.
fn interior(map: &RoadGraph) -> Vec<u64> {
    map.nodes()
        .iter()
        .filter(|n| n.x.abs() <= 110.0 && n.y.abs() <= 110.0)
        .map(|n| n.id)
        .collect()
}

#[test]
fn grid_interior_is_strongly_connected() {
    let map = grid();
    assert!(map.edges().all(|e| e.length > 0.0));
    let ids = interior(&map);
    for &a in ids.iter().step_by(ids.len() / 12) {
        for &b in ids.iter().skip(5).step_by(ids.len() / 12) {
            assert!(astar_route(&map, a, b).is_ok(), "{a} -> {b}");
        }
    }
}

#[test]
fn smoothed_route_keeps_endpoints() {
    let map = grid();
    let ids = interior(&map);
    let route = astar_route(&map, ids[3], ids[ids.len() - 7]).unwrap();
    let raw = GuidanceTrajectory::from_route(&map, &route, 10.0).unwrap();
    let smooth = smooth_path(&raw, 9, 3).unwrap();
    assert_eq!(smooth.len(), raw.len());
    assert_eq!(smooth.position(0), raw.position(0));
    assert_eq!(smooth.position(raw.len() - 1), raw.position(raw.len() - 1));
}

#[test]
fn map_json_round_trips() {
    let map = grid();
    let back = RoadGraph::from_json(&map.to_json()).unwrap();
    assert_eq!(back.nodes().len(), map.nodes().len());
    assert_eq!(back.edge_count(), map.edge_count());
}

#[test]
fn hundred_snapshot_partition_sweep_passes() {
    let r = verify::partition_oracle(3, 100);
    assert!(r.passed, "{}", r.line());
}

#[test]
fn road_oracle_sweep_passes() {
    let r = verify::road_oracles(3, 200);
    assert!(r.passed, "{}", r.line());
}
