//! LQ subproblem, dual recursions and the two dual layouts.

use fleetplan::admm::{
    admm_solve_naive, admm_solve_subgraph, clamp, dual_prox, dual_update_box, solve_lqr, AdmmEngine, BlockVars,
    BoxBounds, Layout, LqrSubproblem, SolveOptions, SolverVariant,
};
use fleetplan::ocp::{decision_len, DynamicsBlocks, SolverConfig};
use fleetplan::oracle::{kkt_solve, naive_box_dual_step, DenseQp};
use fleetplan::partition::Subgraph;
use fleetplan::scaling::{ring_problem, Topology};
use fleetplan::vehicle::{linearize_dynamics, ControlInput, VehicleGeometry, VehicleState};
use fleetplan::{verify, Execution};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn riccati_matches_dense_kkt(seed in any::<u64>(), t in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let geom = VehicleGeometry::default();
        let (mut a, mut b) = (Vec::new(), Vec::new());
        for _ in 0..t {
            let z = VehicleState::new(0.0, 0.0, rng.random_range(-3.0..3.0), rng.random_range(0.0..20.0));
            let u = ControlInput::new(rng.random_range(-3.0..3.0), rng.random_range(-0.5..0.5));
            let lin = linearize_dynamics(&z, &u, 0.1, &geom).unwrap();
            a.push(lin.a);
            b.push(lin.b);
        }
        let dynamics = DynamicsBlocks { a, b };
        let n = decision_len(t);
        let l1 = DVector::from_fn(n, |_, _| rng.random_range(-5.0..5.0));
        let l2 = DVector::from_fn(n, |_, _| rng.random_range(0.1..5.0));
        let sub = LqrSubproblem::from_cost(&dynamics, &l1, &l2);
        let dz = solve_lqr(&sub, 0.0).unwrap();

        let (h, g) = sub.dense_objective();
        let (l3, l4) = dynamics.dense();
        let mut aeq = DMatrix::zeros(4 + 4 * t, n);
        aeq.view_mut((0, 0), (4, 4)).fill_with_identity();
        aeq.view_mut((4, 0), (4 * t, n)).copy_from(&(&l3 - &l4));
        let qp = DenseQp { h, g, aeq, beq: DVector::zeros(4 + 4 * t) };
        let kkt = kkt_solve(&qp).unwrap();
        prop_assert!((&dz - &kkt.x).norm() <= 1e-6 * kkt.x.norm().max(1e-12));
        prop_assert!((&qp.aeq * &dz).amax() <= 1e-9);
        prop_assert!(sub.objective(&dz) <= sub.objective(&kkt.x) + 1e-9 * sub.objective(&kkt.x).abs().max(1.0));
    }

    #[test]
    fn compressed_box_recursion_equals_copies(seed in any::<u64>(), n in 2usize..6, t in 1usize..6, iterations in 1usize..30) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = SolverConfig::default();
        let len = 3 * t + 1;
        let bounds: Vec<BoxBounds> = (0..n)
            .map(|_| {
                let lower = DVector::from_fn(len, |_, _| rng.random_range(-2.0..0.0));
                let upper = DVector::from_fn(len, |r, _| lower[r] + rng.random_range(0.0..3.0));
                BoxBounds { lower, upper, share: n as f64 }
            })
            .collect();
        let neighbors: Vec<Vec<usize>> = (0..n).map(|v| (0..n).filter(|&u| u != v).collect()).collect();
        let mut copies = vec![vec![BlockVars::zeros(len); n]; n];
        let mut own = vec![BlockVars::zeros(len); n];
        let mut shared = vec![BlockVars::zeros(len); n];
        for _ in 0..iterations {
            let o_dz: Vec<DVector<f64>> = (0..n).map(|_| DVector::from_fn(len, |_, _| rng.random_range(-1.0..1.0))).collect();
            naive_box_dual_step(&mut copies, &neighbors, &o_dz, &bounds, &cfg);
            for i in 0..n {
                dual_update_box(&mut own[i], &mut shared[i], &o_dz[i], n - 1, n - 1, &bounds[i], &cfg);
            }
        }
        for i in 0..n {
            for (v, row) in copies.iter().enumerate() {
                let reference = if v == i { &own[i] } else { &shared[i] };
                prop_assert!(row[i].max_abs_diff(reference) <= 1e-12);
            }
        }
    }

    #[test]
    fn dual_prox_decomposes_its_argument(a in -50.0..50.0f64, lo in -10.0..10.0f64, width in 0.0..10.0f64, share in 1.0..8.0f64, sigma in 0.01..2.0f64) {
        let hi = lo + width;
        let p = dual_prox(a, lo, hi, share, sigma);
        let b = sigma * a;
        prop_assert!((sigma * p + clamp(b, lo / share, hi / share) - b).abs() <= 1e-12 * b.abs().max(1.0));
        if b >= lo / share && b <= hi / share {
            prop_assert_eq!(p, 0.0);
        }
    }

    #[test]
    fn cone_prox_is_polar_projection(a in -50.0..50.0f64, sigma in 0.01..2.0f64) {
        prop_assert!((dual_prox(a, 0.0, f64::INFINITY, 1.0, sigma) - a.min(0.0)).abs() <= 1e-15 * a.abs().max(1.0));
    }
}

#[test]
fn layouts_agree_on_complete_graphs() {
    let r = verify::layout_equivalence(&[2, 3, 4, 5], 20);
    assert!(r.passed, "{}", r.line());
}

#[test]
fn improved_layout_holds_only_neighborhood_rows() {
    let cfg = SolverConfig::default();
    for n in [4, 8, 16] {
        let improved = Layout::new(&Subgraph::ring(n), cfg.t_s, SolverVariant::Improved);
        let naive = Layout::new(&Subgraph::ring(n), cfg.t_s, SolverVariant::Naive);
        assert_eq!(naive.total_slots(), n * naive.global_rows);
        // Each agent holds three box blocks and the two edge groups it sits on.
        assert!(improved.total_slots() < naive.total_slots());
        assert_eq!(improved.total_slots() % n, 0);
        let per_agent = improved.total_slots() / n;
        let box_rows = 3 * cfg.t_s + 1;
        assert_eq!(per_agent, 3 * box_rows + 2 * 2 * (cfg.t_s + 1));
    }
}

#[test]
fn ring_work_doubles_with_fleet_size() {
    let cfg = SolverConfig::default();
    let work = |n| {
        let problem = ring_problem(n, Topology::Ring, &cfg).unwrap();
        let mut engine = AdmmEngine::new(&problem, &cfg, SolverVariant::Improved, Execution::Sequential);
        engine.begin_outer().unwrap();
        engine.inner_iteration().unwrap();
        engine.work()
    };
    assert_eq!(work(16), 2 * work(8));
    assert_eq!(work(32), 2 * work(16));
}

#[test]
fn parallel_and_sequential_solves_are_identical() {
    let cfg = SolverConfig {
        outer_max: 2,
        k_max: 20,
        ..SolverConfig::default()
    };
    let problem = ring_problem(6, Topology::Ring, &cfg).unwrap();
    let seq = admm_solve_subgraph(
        &problem,
        &cfg,
        &SolveOptions {
            execution: Execution::Sequential,
            ..Default::default()
        },
    )
    .unwrap();
    let par = admm_solve_subgraph(
        &problem,
        &cfg,
        &SolveOptions {
            execution: Execution::default(),
            ..Default::default()
        },
    )
    .unwrap();
    assert_eq!(seq, par);
}

#[test]
fn naive_solver_matches_improved_on_a_pair() {
    let cfg = SolverConfig {
        outer_max: 2,
        k_max: 20,
        ..SolverConfig::default()
    };
    let problem = ring_problem(2, Topology::Complete, &cfg).unwrap();
    let a = admm_solve_subgraph(&problem, &cfg, &SolveOptions::default()).unwrap();
    let b = admm_solve_naive(&problem, &cfg, &SolveOptions::default()).unwrap();
    for (na, nb) in a.nominals.iter().zip(&b.nominals) {
        for (za, zb) in na.states.iter().zip(&nb.states) {
            assert!((za.to_vector() - zb.to_vector()).amax() <= 1e-9);
        }
    }
}
