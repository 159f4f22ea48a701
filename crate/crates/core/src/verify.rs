//! Randomized equivalence checks of the fast paths against the oracles.
//!
//! Each check draws its instances from a seeded generator, reports the worst
//! error it saw and whether that stayed inside the pinned tolerance.

use nalgebra::{DMatrix, DVector, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::admm::{
    dual_prox, dual_update_box, project_box_cone, solve_lqr, AdmmEngine, BlockVars, BoxBounds, LqrSubproblem,
    SolverVariant,
};
use crate::exec::Execution;
use crate::geometry::{circle_center, collision_jacobians, pair_transform, Circle};
use crate::ocp::{DynamicsBlocks, SolverConfig};
use crate::oracle::{
    dijkstra_length, finite_difference_jacobian, kkt_solve, linear_scan_nearest, naive_box_dual_step,
    savgol_by_regression, union_find_components, DenseQp,
};
use crate::partition::{build_partition, FleetSnapshot, SnapshotVehicle};
use crate::road::{astar_route, generate_grid_map, savgol_filter, GridMapConfig, WaypointIndex};
use crate::scaling::{ring_problem, Topology};
use crate::vehicle::{linearize_dynamics, step_dynamics, ControlInput, VehicleGeometry, VehicleState};

pub const BOX_RECURSION_TOL: f64 = 1e-12;
pub const LQR_REL_TOL: f64 = 1e-6;
pub const DYNAMICS_RESIDUAL_TOL: f64 = 1e-9;
pub const JACOBIAN_REL_TOL: f64 = 1e-5;
pub const MOREAU_TOL: f64 = 1e-15;
pub const SAVGOL_TOL: f64 = 1e-9;
pub const VARIANT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub instances: usize,
    pub max_error: f64,
    pub tolerance: f64,
    pub detail: String,
}

impl CheckResult {
    fn from_error(name: &'static str, instances: usize, max_error: f64, tolerance: f64) -> Self {
        Self {
            name,
            passed: max_error <= tolerance,
            instances,
            max_error,
            tolerance,
            detail: String::new(),
        }
    }

    pub fn line(&self) -> String {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        let mut s = format!(
            "{verdict} {}: {} instances, max error {:.3e} (tolerance {:.0e})",
            self.name, self.instances, self.max_error, self.tolerance
        );
        if !self.detail.is_empty() {
            s.push_str(", ");
            s.push_str(&self.detail);
        }
        s
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

/// Compressed box-block recursion against the literal per-agent copies on
/// complete subgraphs with zero-initialized duals.
pub fn box_recursion_equivalence(seed: u64, instances: usize, iterations: usize) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = SolverConfig::default();
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let n = rng.random_range(2..=4usize);
        let t = if rng.random_bool(0.5) { 2 } else { 5 };
        let len = 3 * t + 1;
        let bounds: Vec<BoxBounds> = (0..n)
            .map(|_| {
                let lower = DVector::from_fn(len, |_, _| rng.random_range(-2.0..0.0));
                let upper = DVector::from_fn(len, |r, _| lower[r] + rng.random_range(0.0..3.0));
                BoxBounds {
                    lower,
                    upper,
                    share: n as f64,
                }
            })
            .collect();
        let neighbors: Vec<Vec<usize>> = (0..n).map(|v| (0..n).filter(|&u| u != v).collect()).collect();
        let mut copies = vec![vec![BlockVars::zeros(len); n]; n];
        let mut own = vec![BlockVars::zeros(len); n];
        let mut shared = vec![BlockVars::zeros(len); n];
        for _ in 0..iterations {
            let o_dz: Vec<DVector<f64>> = (0..n)
                .map(|_| DVector::from_fn(len, |_, _| rng.random_range(-1.0..1.0)))
                .collect();
            naive_box_dual_step(&mut copies, &neighbors, &o_dz, &bounds, &cfg);
            for i in 0..n {
                dual_update_box(&mut own[i], &mut shared[i], &o_dz[i], n - 1, n - 1, &bounds[i], &cfg);
            }
            for i in 0..n {
                for (v, row) in copies.iter().enumerate() {
                    let reference = if v == i { &own[i] } else { &shared[i] };
                    worst = worst.max(row[i].max_abs_diff(reference));
                }
            }
        }
    }
    CheckResult::from_error("box-recursion", instances, worst, BOX_RECURSION_TOL)
}

fn random_state(rng: &mut ChaCha8Rng) -> VehicleState {
    VehicleState::new(
        rng.random_range(-50.0..50.0),
        rng.random_range(-50.0..50.0),
        rng.random_range(-std::f64::consts::PI..std::f64::consts::PI),
        rng.random_range(0.0..20.0),
    )
}

fn random_control(rng: &mut ChaCha8Rng) -> ControlInput {
    ControlInput::new(rng.random_range(-3.0..3.0), rng.random_range(-0.5..0.5))
}

/// Riccati solutions against a dense KKT solve of the same equality-constrained QP.
pub fn lqr_kkt(seed: u64, instances: usize) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let geom = VehicleGeometry::default();
    let dt = 0.1;
    let mut worst_rel: f64 = 0.0;
    let mut worst_res: f64 = 0.0;
    for _ in 0..instances {
        let t = rng.random_range(1..=5usize);
        let mut a = Vec::new();
        let mut b = Vec::new();
        for _ in 0..t {
            let lin = linearize_dynamics(&random_state(&mut rng), &random_control(&mut rng), dt, &geom)
                .expect("sampled inputs are in the model's domain");
            a.push(lin.a);
            b.push(lin.b);
        }
        let dynamics = DynamicsBlocks { a, b };
        let n = crate::ocp::decision_len(t);
        let l1 = DVector::from_fn(n, |_, _| rng.random_range(-5.0..5.0));
        let l2 = DVector::from_fn(n, |_, _| rng.random_range(0.1..5.0));
        let mut sub = LqrSubproblem::from_cost(&dynamics, &l1, &l2);
        for _ in 0..3 {
            let stage = rng.random_range(0..=t);
            let coeff: [f64; 6] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
            sub.add_penalty(stage, &coeff, rng.random_range(0.0..10.0), rng.random_range(-1.0..1.0));
        }
        let dz = match solve_lqr(&sub, 0.0) {
            Ok(dz) => dz,
            Err(_) => {
                worst_rel = f64::INFINITY;
                continue;
            }
        };
        let (h, g) = sub.dense_objective();
        let (l3, l4) = dynamics.dense();
        let mut aeq = DMatrix::zeros(4 + 4 * t, n);
        aeq.view_mut((0, 0), (4, 4)).fill_with_identity();
        aeq.view_mut((4, 0), (4 * t, n)).copy_from(&(&l3 - &l4));
        let qp = DenseQp {
            h,
            g,
            aeq,
            beq: DVector::zeros(4 + 4 * t),
        };
        let Ok(kkt) = kkt_solve(&qp) else {
            worst_rel = f64::INFINITY;
            continue;
        };
        worst_rel = worst_rel.max((&dz - &kkt.x).norm() / kkt.x.norm().max(1e-12));
        worst_res = worst_res.max((&qp.aeq * &dz).amax());
    }
    let mut r = CheckResult::from_error("lqr-kkt", instances, worst_rel, LQR_REL_TOL);
    r.passed &= worst_res <= DYNAMICS_RESIDUAL_TOL;
    r.detail = format!("max dynamics residual {worst_res:.3e} (tolerance {DYNAMICS_RESIDUAL_TOL:.0e})");
    r
}

/// Analytic dynamics Jacobians against central differences.
pub fn dynamics_jacobians(seed: u64, samples: usize) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let geom = VehicleGeometry::default();
    let dt = 0.1;
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let z = random_state(&mut rng);
        let u = random_control(&mut rng);
        let lin = linearize_dynamics(&z, &u, dt, &geom).expect("in domain");
        let f = |w: &DVector<f64>| {
            let z = VehicleState::new(w[0], w[1], w[2], w[3]);
            let next = step_dynamics(&z, &ControlInput::new(w[4], w[5]), dt, &geom).expect("in domain");
            DVector::from_column_slice(next.to_vector().as_slice())
        };
        let w = DVector::from_vec(vec![z.x, z.y, z.theta, z.v, u.a, u.delta]);
        let fd = finite_difference_jacobian(f, &w, 1e-6);
        for r in 0..4 {
            for c in 0..4 {
                worst = worst.max(rel_err(lin.a[(r, c)], fd[(r, c)]));
            }
            for c in 0..2 {
                worst = worst.max(rel_err(lin.b[(r, c)], fd[(r, 4 + c)]));
            }
        }
    }
    CheckResult::from_error("dynamics-jacobians", samples, worst, JACOBIAN_REL_TOL)
}

/// Collision discriminant gradients against central differences.
pub fn collision_gradients(seed: u64, samples: usize) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let geom = VehicleGeometry::default();
    let mut worst: f64 = 0.0;
    let mut done = 0;
    while done < samples {
        let zi = random_state(&mut rng);
        let offset = Vector2::new(rng.random_range(-15.0..15.0), rng.random_range(-15.0..15.0));
        let mut zj = random_state(&mut rng);
        zj.x = zi.x + offset.x;
        zj.y = zi.y + offset.y;
        let which = if rng.random_bool(0.5) {
            Circle::Front
        } else {
            Circle::Rear
        };
        let Ok(jac) = collision_jacobians(&zi, &zj, which, &geom, &geom) else {
            continue;
        };
        if jac.norm < 0.2 {
            continue;
        }
        let norm_of = |zi: &VehicleState, zj: &VehicleState| {
            pair_transform(&circle_center(zi, which, &geom), zj, &geom, &geom).norm()
        };
        let fi = |w: &DVector<f64>| DVector::from_element(1, norm_of(&VehicleState::new(w[0], w[1], w[2], w[3]), &zj));
        let fj = |w: &DVector<f64>| DVector::from_element(1, norm_of(&zi, &VehicleState::new(w[0], w[1], w[2], w[3])));
        let gi = finite_difference_jacobian(fi, &DVector::from_column_slice(zi.to_vector().as_slice()), 1e-6);
        let gj = finite_difference_jacobian(fj, &DVector::from_column_slice(zj.to_vector().as_slice()), 1e-6);
        for c in 0..4 {
            worst = worst.max(rel_err(jac.circle[c], gi[(0, c)]));
            worst = worst.max(rel_err(jac.ellipse[c], gj[(0, c)]));
        }
        done += 1;
    }
    CheckResult::from_error("collision-jacobians", samples, worst, JACOBIAN_REL_TOL)
}

/// Box projection splits a vector exactly, and the clamp form of the dual
/// proximal step matches its piecewise closed form.
pub fn moreau(seed: u64, vectors: usize) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = 8;
    let mut worst: f64 = 0.0;
    for _ in 0..vectors {
        let v = DVector::from_fn(len, |_, _| rng.random_range(-10.0..10.0));
        let cone = rng.random_bool(0.5);
        let lower = DVector::from_fn(len, |_, _| if cone { 0.0 } else { rng.random_range(-5.0..0.0) });
        let upper = DVector::from_fn(len, |r, _| {
            if cone {
                f64::INFINITY
            } else {
                lower[r] + rng.random_range(0.0..5.0)
            }
        });
        let (polar, proj) = project_box_cone(&v, &lower, &upper);
        for e in 0..len {
            worst = worst.max(((polar[e] + proj[e]) - v[e]).abs() / v[e].abs().max(1.0));
            if cone {
                worst = worst.max((proj[e] - v[e].max(0.0)).abs());
                worst = worst.max((polar[e] - v[e].min(0.0)).abs());
            }
            let sigma = rng.random_range(0.01..1.0);
            let share = rng.random_range(1..=6) as f64;
            let (lo, hi) = (lower[e] / share, upper[e] / share);
            let a = v[e];
            let closed = if a > hi / sigma {
                a - hi / sigma
            } else if a < lo / sigma {
                a - lo / sigma
            } else {
                0.0
            };
            let prox = dual_prox(a, lower[e], upper[e], share, sigma);
            // Relative to the largest finite magnitude entering the step.
            let scale = [a, lo / sigma, hi / sigma]
                .iter()
                .filter(|x| x.is_finite())
                .fold(1.0_f64, |m, x| m.max(x.abs()));
            worst = worst.max((prox - closed).abs() / scale);
        }
    }
    CheckResult::from_error("moreau-projection", vectors, worst, MOREAU_TOL)
}

/// Random fleet snapshot with vehicles spread over an annulus.
pub fn random_snapshot(rng: &mut ChaCha8Rng, n: usize, ring: [f64; 2], v_ref: [f64; 2], r_tele: f64) -> FleetSnapshot {
    FleetSnapshot {
        vehicles: (0..n)
            .map(|_| {
                let d = rng.random_range(ring[0]..=ring[1]);
                let phi = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
                SnapshotVehicle {
                    x: d * phi.cos(),
                    y: d * phi.sin(),
                    theta: rng.random_range(-std::f64::consts::PI..std::f64::consts::PI),
                    v_ref: rng.random_range(v_ref[0]..=v_ref[1]),
                    r_tele,
                }
            })
            .collect(),
    }
}

/// Partition components against union-find and the cross-subgraph distance guarantee.
pub fn partition_oracle(seed: u64, snapshots: usize) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let horizon = SolverConfig::default().horizon_seconds();
    let mut mismatches = 0;
    let mut worst_violation: f64 = 0.0;
    for _ in 0..snapshots {
        let snap = random_snapshot(&mut rng, 80, [10.0, 340.0], [5.0, 20.0], 100.0);
        let parts = build_partition(&snap, horizon);
        let mut members: Vec<Vec<usize>> = parts.iter().map(|p| p.members.clone()).collect();
        members.sort_by_key(|m| m[0]);
        if members != union_find_components(&snap, horizon) {
            mismatches += 1;
        }
        let mut owner = vec![usize::MAX; snap.len()];
        for (k, p) in parts.iter().enumerate() {
            for &m in &p.members {
                if owner[m] != usize::MAX {
                    mismatches += 1;
                }
                owner[m] = k;
            }
            for (a, nb) in p.neighbors.iter().enumerate() {
                if nb.iter().any(|&b| !p.neighbors[b].contains(&a)) {
                    mismatches += 1;
                }
            }
        }
        if owner.contains(&usize::MAX) {
            mismatches += 1;
        }
        for i in 0..snap.len() {
            for j in i + 1..snap.len() {
                if owner[i] != owner[j] {
                    worst_violation = worst_violation.max(snap.safe_distance(i, j, horizon) - snap.manhattan(i, j));
                }
            }
        }
    }
    CheckResult {
        name: "partition-oracle",
        passed: mismatches == 0 && worst_violation <= 0.0,
        instances: snapshots,
        max_error: worst_violation.max(0.0),
        tolerance: 0.0,
        detail: format!("{mismatches} structural mismatches"),
    }
}

/// A* against Dijkstra, the k-d tree against a linear scan and the smoothing
/// filter against direct per-window regression.
pub fn road_oracles(seed: u64, queries: usize) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let map = generate_grid_map(&GridMapConfig::default()).expect("default grid is valid");
    let ids: Vec<u64> = map.nodes().iter().map(|n| n.id).collect();
    let mut worst: f64 = 0.0;
    let mut mismatches = 0;
    for _ in 0..queries {
        let s = ids[rng.random_range(0..ids.len())];
        let g = ids[rng.random_range(0..ids.len())];
        match (astar_route(&map, s, g), dijkstra_length(&map, s, g)) {
            (Ok(route), Some(d)) => worst = worst.max(rel_err(map.path_length(&route).expect("valid route"), d)),
            (Err(_), None) => {}
            _ => mismatches += 1,
        }
    }
    let points: Vec<Vector2<f64>> = map.nodes().iter().map(|n| Vector2::new(n.x, n.y)).collect();
    let tree = WaypointIndex::new(points.clone());
    for _ in 0..queries {
        let q = Vector2::new(rng.random_range(-260.0..260.0), rng.random_range(-260.0..260.0));
        if tree.nearest(&q) != linear_scan_nearest(&points, &q) {
            mismatches += 1;
        }
    }
    for _ in 0..queries / 10 {
        let len = rng.random_range(15..60);
        let window = [5, 7, 9, 11][rng.random_range(0..4)];
        let order = rng.random_range(2..=3);
        let values: Vec<f64> = (0..len).map(|_| rng.random_range(-10.0..10.0)).collect();
        let fast = savgol_filter(&values, window, order).expect("valid parameters");
        let slow = savgol_by_regression(&values, window, order);
        for (a, b) in fast.iter().zip(&slow) {
            worst = worst.max(rel_err(*a, *b));
        }
    }
    let mut r = CheckResult::from_error("road-oracles", queries, worst, SAVGOL_TOL);
    r.passed &= mismatches == 0;
    r.detail = format!("{mismatches} route or nearest-neighbor mismatches");
    r
}

/// On a complete graph the two dual layouts hold the same rows with the same
/// partners, so their iterates must agree.
pub fn layout_equivalence(sizes: &[usize], iterations: usize) -> CheckResult {
    let cfg = SolverConfig {
        t_s: 4,
        ..SolverConfig::default()
    };
    let mut worst: f64 = 0.0;
    for &n in sizes {
        let problem = ring_problem(n, Topology::Complete, &cfg).expect("ring placement is valid");
        let mut a = AdmmEngine::new(&problem, &cfg, SolverVariant::Improved, Execution::Sequential);
        let mut b = AdmmEngine::new(&problem, &cfg, SolverVariant::Naive, Execution::Sequential);
        a.begin_outer().expect("assembly succeeds");
        b.begin_outer().expect("assembly succeeds");
        for _ in 0..iterations {
            a.inner_iteration().expect("iteration succeeds");
            b.inner_iteration().expect("iteration succeeds");
            let (da, db) = (a.duals(), b.duals());
            for v in 0..n {
                for row in 0..b.layout().global_rows {
                    let (Some(sa), Some(sb)) = (a.layout().slot_of(v, row), b.layout().slot_of(v, row)) else {
                        continue;
                    };
                    let pairs = [
                        (&da[v].y, &db[v].y),
                        (&da[v].x, &db[v].x),
                        (&da[v].p, &db[v].p),
                        (&da[v].s, &db[v].s),
                    ];
                    for (va, vb) in pairs {
                        worst = worst.max((va[sa] - vb[sb]).abs());
                    }
                }
            }
            for (za, zb) in a.steps().iter().zip(b.steps()) {
                worst = worst.max((za - zb).amax());
            }
        }
    }
    CheckResult::from_error("layout-equivalence", sizes.len(), worst, VARIANT_TOL)
}

/// Every suite with its default instance counts.
pub fn run_all(seed: u64) -> Vec<CheckResult> {
    vec![
        box_recursion_equivalence(seed, 20, 30),
        lqr_kkt(seed, 50),
        dynamics_jacobians(seed, 1000),
        collision_gradients(seed, 1000),
        moreau(seed, 100_000),
        partition_oracle(seed, 100),
        road_oracles(seed, 200),
        layout_equivalence(&[2, 3, 4], 20),
    ]
}
