//! Convexified subgraph problem: cost expansion, linear dynamics and the
//! stacked coupling rows with their bounds.
//!
//! Each agent's decision is the perturbation `ΔZ = [Δz_0, Δu_0, …, Δz_T]`
//! (length `6T + 4`) around its nominal trajectory. Coupling rows form a single
//! global space shared by the subgraph:
//!
//! * collision rows, `N(N-1)(T+1)` of them: for step `τ`, pair `(j, k)` with
//!   `j < k` and circle `c`, row `τ·N(N-1) + 2·pair + c`. The lower-indexed
//!   vehicle `j` contributes its ellipse Jacobian and `k` its circle Jacobian;
//! * box rows, `(3T+1)·N` of them: agent `i` owns rows
//!   `N(N-1)(T+1) + i(3T+1) + 3τ + e` for `[v, a, δ]` at step `τ`, then the
//!   terminal speed.

use nalgebra::{DMatrix, DVector, Matrix4, Matrix4x2};
use serde::{Deserialize, Serialize};

use crate::error::{PlanError, Result};
use crate::geometry::{collision_jacobians, Circle};
use crate::partition::Subgraph;
use crate::road::ReferencePoint;
use crate::vehicle::{linearize_dynamics, ControlInput, VehicleGeometry, VehicleLimits, VehicleState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub sigma: f64,
    pub rho: f64,
    pub epsilon: f64,
    /// Planning horizon in steps.
    pub t_s: usize,
    /// Executed steps per planning epoch.
    pub t_e: usize,
    pub dt: f64,
    pub k_max: usize,
    pub outer_max: usize,
    pub outer_tol: f64,
    /// Diagonal state weights for `[x, y, θ, v]`.
    pub q: [f64; 4],
    /// Diagonal input weights for `[a, δ]`.
    pub r: [f64; 2],
    pub d_safe: f64,
    /// Initial Riccati regularization.
    pub regularization: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            sigma: 0.05,
            rho: 0.002,
            epsilon: 0.1,
            t_s: 15,
            t_e: 10,
            dt: 0.1,
            k_max: 50,
            outer_max: 5,
            outer_tol: 1e-3,
            q: [0.1, 0.1, 0.2, 0.1],
            r: [0.05, 0.5],
            d_safe: 1.05,
            regularization: 1e-8,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(PlanError::Config(m.to_string()));
        if !(self.sigma > 0.0 && self.rho > 0.0) {
            return bad("sigma and rho must be positive");
        }
        if !(self.epsilon >= 0.0) {
            return bad("epsilon must be non-negative");
        }
        if self.t_s == 0 || self.t_e == 0 || self.t_e > self.t_s {
            return bad("horizon lengths must satisfy 1 <= t_e <= t_s");
        }
        if self.k_max == 0 || self.outer_max == 0 {
            return bad("iteration limits must be at least 1");
        }
        if !(self.dt > 0.0) {
            return bad("dt must be positive");
        }
        if self.q.iter().chain(&self.r).any(|w| !(*w >= 0.0)) {
            return bad("cost weights must be non-negative");
        }
        if !(self.d_safe >= 1.0) {
            return bad("d_safe must be at least 1");
        }
        Ok(())
    }

    /// Horizon in seconds, used for the partition safe distance.
    pub fn horizon_seconds(&self) -> f64 {
        self.t_s as f64 * self.dt
    }

    /// Per-row ADMM step weight `1 / (2(σ + 2ρ·partners))`.
    pub fn gamma(&self, partners: usize) -> f64 {
        1.0 / (2.0 * (self.sigma + 2.0 * self.rho * partners as f64))
    }
}

pub fn decision_len(t: usize) -> usize {
    6 * t + 4
}

pub fn state_offset(tau: usize) -> usize {
    6 * tau
}

pub fn control_offset(tau: usize) -> usize {
    6 * tau + 4
}

fn wrap_angle(a: f64) -> f64 {
    let w = (a + std::f64::consts::PI).rem_euclid(std::f64::consts::TAU) - std::f64::consts::PI;
    if w == -std::f64::consts::PI {
        std::f64::consts::PI
    } else {
        w
    }
}

/// Tracking error `z - z_ref` with the heading difference wrapped to `(-π, π]`.
pub fn tracking_error(z: &VehicleState, r: &ReferencePoint) -> [f64; 4] {
    [z.x - r.x, z.y - r.y, wrap_angle(z.theta - r.theta), z.v - r.v]
}

/// One agent's nominal trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Nominal {
    pub states: Vec<VehicleState>,
    pub controls: Vec<ControlInput>,
}

impl Nominal {
    pub fn horizon(&self) -> usize {
        self.controls.len()
    }
}

/// Gradient and (diagonal) Hessian of
/// `Σ_τ<T ‖z_τ - ref_τ‖²_Q + ‖u_τ‖²_R + ‖z_T - ref_T‖²_Q`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostExpansion {
    pub l1: DVector<f64>,
    pub l2_diag: DVector<f64>,
}

impl CostExpansion {
    pub fn l2(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.l2_diag)
    }
}

pub fn assemble_cost(refs: &[ReferencePoint], nominal: &Nominal, cfg: &SolverConfig) -> CostExpansion {
    let t = nominal.horizon();
    assert_eq!(nominal.states.len(), t + 1, "nominal needs T+1 states");
    assert_eq!(refs.len(), t + 1, "references need T+1 samples");
    let n = decision_len(t);
    let mut l1 = DVector::zeros(n);
    let mut l2 = DVector::zeros(n);
    for (tau, (z, r)) in nominal.states.iter().zip(refs).enumerate() {
        let e = tracking_error(z, r);
        let o = state_offset(tau);
        for c in 0..4 {
            l1[o + c] = 2.0 * cfg.q[c] * e[c];
            l2[o + c] = 2.0 * cfg.q[c];
        }
        if tau < t {
            let u = nominal.controls[tau];
            let o = control_offset(tau);
            l1[o] = 2.0 * cfg.r[0] * u.a;
            l1[o + 1] = 2.0 * cfg.r[1] * u.delta;
            l2[o] = 2.0 * cfg.r[0];
            l2[o + 1] = 2.0 * cfg.r[1];
        }
    }
    CostExpansion { l1, l2_diag: l2 }
}

/// Value of the tracking cost, used as the reference for derivative checks.
pub fn tracking_cost(refs: &[ReferencePoint], nominal: &Nominal, cfg: &SolverConfig) -> f64 {
    let t = nominal.horizon();
    let mut total = 0.0;
    for (tau, (z, r)) in nominal.states.iter().zip(refs).enumerate() {
        let e = tracking_error(z, r);
        total += (0..4).map(|c| cfg.q[c] * e[c] * e[c]).sum::<f64>();
        if tau < t {
            let u = nominal.controls[tau];
            total += cfg.r[0] * u.a * u.a + cfg.r[1] * u.delta * u.delta;
        }
    }
    total
}

/// Linearized dynamics `Δz_{τ+1} = A_τ Δz_τ + B_τ Δu_τ` along a nominal.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicsBlocks {
    pub a: Vec<Matrix4<f64>>,
    pub b: Vec<Matrix4x2<f64>>,
}

impl DynamicsBlocks {
    pub fn horizon(&self) -> usize {
        self.a.len()
    }

    /// Dense `(L3, L4)` so that `(L3 - L4)·ΔZ = 0` encodes the recursion.
    pub fn dense(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        let t = self.horizon();
        let n = decision_len(t);
        let mut l3 = DMatrix::zeros(4 * t, n);
        let mut l4 = DMatrix::zeros(4 * t, n);
        for tau in 0..t {
            let r = 4 * tau;
            l3.view_mut((r, state_offset(tau)), (4, 4)).copy_from(&self.a[tau]);
            l3.view_mut((r, control_offset(tau)), (4, 2)).copy_from(&self.b[tau]);
            l4.view_mut((r, state_offset(tau + 1)), (4, 4)).fill_with_identity();
        }
        (l3, l4)
    }
}

pub fn assemble_dynamics(nominal: &Nominal, cfg: &SolverConfig, geom: &VehicleGeometry) -> Result<DynamicsBlocks> {
    let t = nominal.horizon();
    let mut a = Vec::with_capacity(t);
    let mut b = Vec::with_capacity(t);
    for tau in 0..t {
        let lin = linearize_dynamics(&nominal.states[tau], &nominal.controls[tau], cfg.dt, geom)?;
        a.push(lin.a);
        b.push(lin.b);
    }
    Ok(DynamicsBlocks { a, b })
}

/// One agent's contribution to a coupling row: coefficients over the stage
/// variables `[Δz_τ, Δu_τ]` (the last two are unused at `τ = T`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RowTerm {
    pub agent: usize,
    pub stage: usize,
    pub coeff: [f64; 6],
}

#[derive(Debug, Clone, PartialEq)]
pub struct CouplingRow {
    /// Collision rows of pairs without a communication edge carry no terms
    /// and unbounded limits.
    pub active: bool,
    pub terms: Vec<RowTerm>,
    pub k: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Coupling {
    pub n: usize,
    pub t: usize,
    pub rows: Vec<CouplingRow>,
}

pub fn pair_count(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

/// Position of pair `(j, k)`, `j < k`, in lexicographic order.
pub fn pair_index(n: usize, j: usize, k: usize) -> usize {
    debug_assert!(j < k && k < n);
    j * n - j * (j + 1) / 2 + (k - j - 1)
}

impl Coupling {
    pub fn collision_rows(&self) -> usize {
        self.n * self.n.saturating_sub(1) * (self.t + 1)
    }

    pub fn box_rows(&self) -> usize {
        (3 * self.t + 1) * self.n
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn collision_row(&self, tau: usize, j: usize, k: usize, c: Circle) -> usize {
        tau * self.n * (self.n - 1) + 2 * pair_index(self.n, j, k) + c.index()
    }

    pub fn box_block_offset(&self, i: usize) -> usize {
        self.collision_rows() + i * (3 * self.t + 1)
    }

    pub fn lower(&self) -> DVector<f64> {
        DVector::from_iterator(self.len(), self.rows.iter().map(|r| r.lower))
    }

    pub fn upper(&self) -> DVector<f64> {
        DVector::from_iterator(self.len(), self.rows.iter().map(|r| r.upper))
    }

    pub fn k(&self) -> DVector<f64> {
        DVector::from_iterator(self.len(), self.rows.iter().map(|r| r.k))
    }

    /// Dense `J^i = [Ĵ^i; Ô^i]` for one agent.
    pub fn jacobian_dense(&self, agent: usize) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.len(), decision_len(self.t));
        for (row, r) in self.rows.iter().enumerate() {
            for term in r.terms.iter().filter(|t| t.agent == agent) {
                let width = if term.stage < self.t { 6 } else { 4 };
                for c in 0..width {
                    m[(row, state_offset(term.stage) + c)] += term.coeff[c];
                }
            }
        }
        m
    }
}

/// Collision rows (linearized around the nominals), box rows and bounds for
/// one subgraph. `nominals`, `geoms` are indexed by local subgraph position.
pub fn assemble_coupling(
    sub: &Subgraph,
    nominals: &[Nominal],
    geoms: &[VehicleGeometry],
    limits: &[VehicleLimits],
    cfg: &SolverConfig,
) -> Result<Coupling> {
    let n = sub.len();
    assert_eq!(nominals.len(), n);
    let t = nominals.first().map_or(cfg.t_s, Nominal::horizon);
    let collision = n * n.saturating_sub(1) * (t + 1);
    let inert = CouplingRow {
        active: false,
        terms: Vec::new(),
        k: 0.0,
        lower: f64::NEG_INFINITY,
        upper: f64::INFINITY,
    };
    let mut rows = vec![inert; collision + (3 * t + 1) * n];
    let mut coupling = Coupling { n, t, rows: Vec::new() };

    for &(j, k) in &sub.edges {
        for tau in 0..=t {
            let zj = &nominals[j].states[tau];
            let zk = &nominals[k].states[tau];
            for c in Circle::BOTH {
                let jac = collision_jacobians(zk, zj, c, &geoms[k], &geoms[j])?;
                let mut ce = [0.0; 6];
                let mut cc = [0.0; 6];
                for col in 0..4 {
                    ce[col] = jac.ellipse[col];
                    cc[col] = jac.circle[col];
                }
                let row = tau * n * (n - 1) + 2 * pair_index(n, j, k) + c.index();
                rows[row] = CouplingRow {
                    active: true,
                    terms: vec![
                        RowTerm {
                            agent: j,
                            stage: tau,
                            coeff: ce,
                        },
                        RowTerm {
                            agent: k,
                            stage: tau,
                            coeff: cc,
                        },
                    ],
                    k: -jac.norm + cfg.d_safe,
                    lower: cfg.epsilon,
                    upper: f64::INFINITY,
                };
            }
        }
    }

    for i in 0..n {
        let base = collision + i * (3 * t + 1);
        let lim = &limits[i];
        for tau in 0..=t {
            let z = &nominals[i].states[tau];
            let v_row = if tau < t { base + 3 * tau } else { base + 3 * t };
            let mut coeff = [0.0; 6];
            coeff[3] = 1.0;
            rows[v_row] = box_row(i, tau, coeff, lim.v_min - z.v, lim.v_max - z.v, cfg.epsilon);
            if tau < t {
                let u = &nominals[i].controls[tau];
                let mut ca = [0.0; 6];
                ca[4] = 1.0;
                rows[base + 3 * tau + 1] = box_row(i, tau, ca, lim.a_min - u.a, lim.a_max - u.a, cfg.epsilon);
                let mut cd = [0.0; 6];
                cd[5] = 1.0;
                rows[base + 3 * tau + 2] = box_row(
                    i,
                    tau,
                    cd,
                    -lim.delta_max - u.delta,
                    lim.delta_max - u.delta,
                    cfg.epsilon,
                );
            }
        }
    }
    coupling.rows = rows;
    Ok(coupling)
}

fn box_row(agent: usize, stage: usize, coeff: [f64; 6], lo: f64, hi: f64, eps: f64) -> CouplingRow {
    // A nominal sitting on (or beyond) a limit would give an empty shrunken
    // interval; collapse it onto its midpoint instead.
    let (mut lower, mut upper) = (lo + eps, hi - eps);
    if lower > upper {
        let mid = 0.5 * (lo + hi);
        lower = mid;
        upper = mid;
    }
    CouplingRow {
        active: true,
        terms: vec![RowTerm { agent, stage, coeff }],
        k: 0.0,
        lower,
        upper,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn straight(t: usize, v: f64) -> Nominal {
        let states = (0..=t)
            .map(|k| VehicleState::new(v * 0.1 * k as f64, 0.0, 0.0, v))
            .collect();
        Nominal {
            states,
            controls: vec![ControlInput::default(); t],
        }
    }

    fn refs_of(n: &Nominal) -> Vec<ReferencePoint> {
        n.states
            .iter()
            .map(|s| ReferencePoint {
                x: s.x,
                y: s.y,
                theta: s.theta,
                v: s.v,
            })
            .collect()
    }

    #[test]
    fn pair_indices_are_lexicographic() {
        let n = 4;
        let mut expect = 0;
        for j in 0..n {
            for k in j + 1..n {
                assert_eq!(pair_index(n, j, k), expect);
                expect += 1;
            }
        }
        assert_eq!(expect, pair_count(n));
    }

    #[test]
    fn zero_gradient_on_reference() {
        let nom = straight(5, 10.0);
        let c = assemble_cost(&refs_of(&nom), &nom, &SolverConfig::default());
        assert!(c.l1.iter().all(|&g| g == 0.0));
        assert_eq!(c.l1.len(), decision_len(5));
    }

    #[test]
    fn factor_two_gradient() {
        let nom = straight(3, 10.0);
        let mut refs = refs_of(&nom);
        refs[0].x -= 3.0;
        let cfg = SolverConfig {
            q: [1.0, 0.0, 0.0, 0.0],
            r: [0.0, 0.0],
            ..Default::default()
        };
        let c = assemble_cost(&refs, &nom, &cfg);
        assert_eq!(c.l1[0], 6.0);
    }

    #[test]
    fn heading_error_wraps() {
        let z = VehicleState::new(0.0, 0.0, 3.1, 0.0);
        let r = ReferencePoint {
            x: 0.0,
            y: 0.0,
            theta: -3.1,
            v: 0.0,
        };
        let e = tracking_error(&z, &r);
        assert!((e[2] - (6.2 - std::f64::consts::TAU)).abs() < 1e-12);
    }

    #[test]
    fn dynamics_pattern_for_one_step() {
        let nom = straight(1, 10.0);
        let d = assemble_dynamics(&nom, &SolverConfig::default(), &VehicleGeometry::default()).unwrap();
        let (l3, l4) = d.dense();
        let m = l3 - l4;
        assert_eq!(m.nrows(), 4);
        assert_eq!(m.ncols(), 10);
        assert_eq!(m.view((0, 0), (4, 4)).into_owned(), d.a[0]);
        assert_eq!(m.view((0, 4), (4, 2)).into_owned(), d.b[0]);
        assert_eq!(m.view((0, 6), (4, 4)).into_owned(), -Matrix4::identity());
    }

    #[test]
    fn coupling_dimensions_and_sparsity() {
        let n0 = straight(1, 10.0);
        let mut n1 = straight(1, 10.0);
        for s in &mut n1.states {
            s.y = 20.0;
        }
        let sub = Subgraph::complete(2);
        let g = vec![VehicleGeometry::default(); 2];
        let l = vec![VehicleLimits::default(); 2];
        let c = assemble_coupling(&sub, &[n0, n1], &g, &l, &SolverConfig::default()).unwrap();
        assert_eq!(c.collision_rows(), 4);
        assert_eq!(c.len(), 4 + 2 * 4);
        let o1 = c.jacobian_dense(1);
        // Agent 1's box rows live only in its own block.
        for row in c.box_block_offset(0)..c.box_block_offset(1) {
            assert!(o1.row(row).iter().all(|&x| x == 0.0));
        }
        assert!(c.lower().iter().zip(c.upper().iter()).all(|(a, b)| a <= b));
    }
}
