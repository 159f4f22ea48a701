//! Consensus ADMM over the dual of one subgraph's convexified problem.

use nalgebra::DVector;
use serde::Serialize;

use super::layout::{AgentLayout, Layout, SolverVariant};
use super::lqr::{solve_lqr, LqrSubproblem};
use super::projection::dual_prox;
use crate::error::{PlanError, Result};
use crate::exec::{map, map_mut, Execution};
use crate::geometry::footprints_overlap;
use crate::ocp::{
    assemble_cost, assemble_coupling, assemble_dynamics, control_offset, state_offset, Coupling, Nominal, SolverConfig,
};
use crate::partition::Subgraph;
use crate::road::ReferencePoint;
use crate::vehicle::{rollout, ControlInput, VehicleGeometry, VehicleLimits};

/// Fixed per-row cost of one dual update, in counted floating-point operations.
pub const WORK_PER_ROW: u64 = 20;
/// Additional counted operations per consensus partner of a row.
pub const WORK_PER_PARTNER: u64 = 4;

/// One agent's dual iterates over the rows it holds.
#[derive(Debug, Clone, PartialEq)]
pub struct DualState {
    pub p: DVector<f64>,
    pub s: DVector<f64>,
    pub r: DVector<f64>,
    pub y: DVector<f64>,
    pub x: DVector<f64>,
}

impl DualState {
    pub fn zeros(len: usize) -> Self {
        Self {
            p: DVector::zeros(len),
            s: DVector::zeros(len),
            r: DVector::zeros(len),
            y: DVector::zeros(len),
            x: DVector::zeros(len),
        }
    }
}

/// Row data an agent needs during one outer iteration.
#[derive(Debug, Clone)]
struct SlotData {
    lower: f64,
    upper: f64,
    k: f64,
    share: f64,
    gamma: f64,
    collision: bool,
}

#[derive(Debug, Clone)]
struct OwnTerm {
    slot: usize,
    stage: usize,
    coeff: [f64; 6],
}

struct AgentRun {
    dual: DualState,
    slots: Vec<SlotData>,
    terms: Vec<OwnTerm>,
    base: Option<LqrSubproblem>,
    dz: DVector<f64>,
}

/// Inputs of one subgraph solve; all vectors are indexed by local position.
#[derive(Debug, Clone)]
pub struct SubgraphProblem {
    pub sub: Subgraph,
    pub nominals: Vec<Nominal>,
    pub refs: Vec<Vec<ReferencePoint>>,
    pub geoms: Vec<VehicleGeometry>,
    pub limits: Vec<VehicleLimits>,
}

impl SubgraphProblem {
    pub fn len(&self) -> usize {
        self.sub.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sub.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SolveOptions {
    pub variant: Option<SolverVariant>,
    pub execution: Execution,
    pub trace: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRow {
    pub outer: usize,
    pub iteration: usize,
    pub agent: usize,
    pub dz_inf: f64,
    /// Smallest linearized collision margin over the rows the agent enters.
    pub min_margin: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub nominals: Vec<Nominal>,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub dual_work: u64,
    /// `max_i ‖ΔZ^i‖∞` of the last outer iteration.
    pub last_step: f64,
    pub trace: Vec<TraceRow>,
}

/// Snapshot of the iterates after an inner iteration, for equivalence checks.
#[derive(Debug, Clone, PartialEq)]
pub struct IterateSnapshot {
    pub outer: usize,
    pub iteration: usize,
    pub duals: Vec<DualState>,
    pub dz: Vec<DVector<f64>>,
}

/// Consensus ADMM driver for one subgraph.
pub struct AdmmEngine<'a> {
    problem: &'a SubgraphProblem,
    cfg: &'a SolverConfig,
    layout: Layout,
    execution: Execution,
    agents: Vec<AgentRun>,
    nominals: Vec<Nominal>,
    coupling: Option<Coupling>,
    work: u64,
}

impl<'a> AdmmEngine<'a> {
    pub fn new(
        problem: &'a SubgraphProblem,
        cfg: &'a SolverConfig,
        variant: SolverVariant,
        execution: Execution,
    ) -> Self {
        let t = problem.nominals.first().map_or(cfg.t_s, Nominal::horizon);
        let layout = Layout::new(&problem.sub, t, variant);
        let agents = layout
            .agents
            .iter()
            .map(|a| AgentRun {
                dual: DualState::zeros(a.len),
                slots: Vec::new(),
                terms: Vec::new(),
                base: None,
                dz: DVector::zeros(crate::ocp::decision_len(t)),
            })
            .collect();
        Self {
            problem,
            cfg,
            layout,
            execution,
            agents,
            nominals: problem.nominals.clone(),
            coupling: None,
            work: 0,
        }
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn nominals(&self) -> &[Nominal] {
        &self.nominals
    }

    pub fn coupling(&self) -> Option<&Coupling> {
        self.coupling.as_ref()
    }

    pub fn work(&self) -> u64 {
        self.work
    }

    pub fn duals(&self) -> Vec<DualState> {
        self.agents.iter().map(|a| a.dual.clone()).collect()
    }

    pub fn steps(&self) -> Vec<DVector<f64>> {
        self.agents.iter().map(|a| a.dz.clone()).collect()
    }

    /// Re-linearizes around the current nominals and resets the duals for a
    /// new outer iteration: `p = s = 0`, collision `y, x` kept, box `y, x` zeroed.
    pub fn begin_outer(&mut self) -> Result<()> {
        let p = self.problem;
        let cfg = self.cfg;
        let coupling = assemble_coupling(&p.sub, &self.nominals, &p.geoms, &p.limits, cfg)?;
        let nominals = &self.nominals;
        let bases = map(self.execution, nominals, |i, nom| -> Result<LqrSubproblem> {
            let cost = assemble_cost(&p.refs[i], nom, cfg);
            let dynamics = assemble_dynamics(nom, cfg, &p.geoms[i])?;
            Ok(LqrSubproblem::from_cost(&dynamics, &cost.l1, &cost.l2_diag))
        });
        for (i, base) in bases.into_iter().enumerate() {
            let agent = &mut self.agents[i];
            agent.base = Some(base?);
            let (slots, terms) = slot_data(&self.layout, i, &coupling, cfg);
            agent.slots = slots;
            agent.terms = terms;
            let d = &mut agent.dual;
            d.p.fill(0.0);
            d.s.fill(0.0);
            for (l, slot) in agent.slots.iter().enumerate() {
                if !slot.collision {
                    d.y[l] = 0.0;
                    d.x[l] = 0.0;
                }
            }
        }
        self.coupling = Some(coupling);
        Ok(())
    }

    /// One synchronous inner iteration across all agents.
    pub fn inner_iteration(&mut self) -> Result<()> {
        let snapshot: Vec<DVector<f64>> = self.agents.iter().map(|a| a.dual.y.clone()).collect();
        let layout = &self.layout;
        let cfg = self.cfg;
        let results = map_mut(self.execution, &mut self.agents, |i, agent| -> Result<u64> {
            let work = dual_update(&layout.agents[i], &agent.slots, &mut agent.dual, &snapshot, cfg);
            let mut sub = agent.base.clone().expect("outer iteration started");
            for term in &agent.terms {
                let slot = &agent.slots[term.slot];
                sub.add_penalty(term.stage, &term.coeff, slot.gamma, agent.dual.r[term.slot]);
            }
            let dz = solve_lqr(&sub, cfg.regularization)?;
            primal_dual_finish(agent, &dz, cfg);
            agent.dz = dz;
            Ok(work)
        });
        for w in results {
            self.work += w?;
        }
        Ok(())
    }

    /// Applies the current steps to the nominal controls and re-rolls the
    /// nominal trajectories through the nonlinear model.
    pub fn end_outer(&mut self) -> Result<f64> {
        let p = self.problem;
        let cfg = self.cfg;
        let mut step = 0.0f64;
        for (i, agent) in self.agents.iter().enumerate() {
            step = step.max(agent.dz.amax());
            let nom = &self.nominals[i];
            let controls: Vec<ControlInput> = nom
                .controls
                .iter()
                .enumerate()
                .map(|(tau, u)| {
                    let o = control_offset(tau);
                    ControlInput::new(u.a + agent.dz[o], u.delta + agent.dz[o + 1])
                })
                .collect();
            let (states, applied) = rollout(&nom.states[0], &controls, cfg.dt, &p.geoms[i], &p.limits[i])?;
            self.nominals[i] = Nominal {
                states,
                controls: applied,
            };
        }
        Ok(step)
    }

    /// Linearized collision margin per agent for the current steps.
    pub fn min_margins(&self) -> Vec<f64> {
        let mut out = vec![f64::INFINITY; self.agents.len()];
        if let Some(c) = &self.coupling {
            for row in c.rows.iter().take(c.collision_rows()).filter(|r| r.active) {
                let mut v = -row.k;
                for term in &row.terms {
                    let dz = &self.agents[term.agent].dz;
                    let o = state_offset(term.stage);
                    v += (0..4).map(|c| term.coeff[c] * dz[o + c]).sum::<f64>();
                }
                for term in &row.terms {
                    out[term.agent] = out[term.agent].min(v);
                }
            }
        }
        out
    }

    /// Full outer/inner loop. `observer` sees the iterates after every inner
    /// iteration.
    pub fn run(mut self, trace: bool, mut observer: impl FnMut(&IterateSnapshotRef<'_>)) -> Result<SolveReport> {
        let cfg = self.cfg;
        check_start(self.problem)?;
        let mut rows = Vec::new();
        let mut outer_done = 0;
        let mut inner_done = 0;
        let mut last_step = 0.0;
        for outer in 0..cfg.outer_max {
            self.begin_outer()?;
            for iteration in 0..cfg.k_max {
                self.inner_iteration()?;
                inner_done += 1;
                observer(&IterateSnapshotRef {
                    outer,
                    iteration,
                    engine: &self,
                });
                if trace {
                    let margins = self.min_margins();
                    for (agent, a) in self.agents.iter().enumerate() {
                        rows.push(TraceRow {
                            outer,
                            iteration,
                            agent,
                            dz_inf: a.dz.amax(),
                            min_margin: margins[agent],
                        });
                    }
                }
            }
            last_step = self.end_outer()?;
            outer_done += 1;
            if last_step < cfg.outer_tol {
                break;
            }
        }
        Ok(SolveReport {
            nominals: self.nominals,
            outer_iterations: outer_done,
            inner_iterations: inner_done,
            dual_work: self.work,
            last_step,
            trace: rows,
        })
    }
}

/// Borrowed view handed to iteration observers.
pub struct IterateSnapshotRef<'e> {
    pub outer: usize,
    pub iteration: usize,
    engine: &'e AdmmEngine<'e>,
}

impl IterateSnapshotRef<'_> {
    pub fn to_owned(&self) -> IterateSnapshot {
        IterateSnapshot {
            outer: self.outer,
            iteration: self.iteration,
            duals: self.engine.duals(),
            dz: self.engine.steps(),
        }
    }

    pub fn layout(&self) -> &Layout {
        &self.engine.layout
    }
}

fn slot_data(layout: &Layout, agent: usize, coupling: &Coupling, cfg: &SolverConfig) -> (Vec<SlotData>, Vec<OwnTerm>) {
    let al = &layout.agents[agent];
    let mut slots = Vec::with_capacity(al.len);
    let mut terms = Vec::new();
    for held in &al.held {
        let group = &layout.groups[held.group];
        let share = layout.share(held.group);
        let gamma = cfg.gamma(held.partners.len());
        for (p, &row) in group.rows.iter().enumerate() {
            let r = &coupling.rows[row];
            for term in r.terms.iter().filter(|t| t.agent == agent) {
                terms.push(OwnTerm {
                    slot: held.offset + p,
                    stage: term.stage,
                    coeff: term.coeff,
                });
            }
            slots.push(SlotData {
                lower: r.lower,
                upper: r.upper,
                k: r.k,
                share,
                gamma,
                collision: group.collision,
            });
        }
    }
    (slots, terms)
}

/// Consensus updates of `p`, `s` and `r` over every held row, using the
/// neighbors' `y` from the previous iteration. Returns the counted work.
fn dual_update(
    layout: &AgentLayout,
    slots: &[SlotData],
    dual: &mut DualState,
    y_prev: &[DVector<f64>],
    cfg: &SolverConfig,
) -> u64 {
    let mut work = 0;
    for held in &layout.held {
        for q in 0..held.len {
            let l = held.offset + q;
            let yi = dual.y[l];
            let mut diff = 0.0;
            let mut sum = 0.0;
            for &(u, off) in &held.partners {
                let yj = y_prev[u][off + q];
                diff += yi - yj;
                sum += yi + yj;
            }
            let slot = &slots[l];
            dual.p[l] += cfg.rho * diff;
            dual.s[l] += cfg.sigma * (yi - dual.x[l]);
            dual.r[l] = cfg.sigma * dual.x[l] + cfg.rho * sum - (slot.k / slot.share + dual.p[l] + dual.s[l]);
            work += WORK_PER_ROW + WORK_PER_PARTNER * held.partners.len() as u64;
        }
    }
    work
}

/// `y = 2γ(JΔZ + r)` followed by the proximal `x` step.
fn primal_dual_finish(agent: &mut AgentRun, dz: &DVector<f64>, cfg: &SolverConfig) {
    let d = &mut agent.dual;
    let mut jz = vec![0.0; d.y.len()];
    for term in &agent.terms {
        let o = state_offset(term.stage);
        let width = if o + 6 <= dz.len() { 6 } else { 4 };
        jz[term.slot] += (0..width).map(|c| term.coeff[c] * dz[o + c]).sum::<f64>();
    }
    for (l, slot) in agent.slots.iter().enumerate() {
        d.y[l] = 2.0 * slot.gamma * (jz[l] + d.r[l]);
        let a = d.s[l] / cfg.sigma + d.y[l];
        d.x[l] = dual_prox(a, slot.lower, slot.upper, slot.share, cfg.sigma);
    }
}

/// Rejects problems whose current footprints already overlap.
pub fn check_start(problem: &SubgraphProblem) -> Result<()> {
    let n = problem.len();
    for a in 0..n {
        for b in a + 1..n {
            let za = &problem.nominals[a].states[0];
            let zb = &problem.nominals[b].states[0];
            if footprints_overlap(za, &problem.geoms[a], zb, &problem.geoms[b]) {
                return Err(PlanError::InfeasibleStart(
                    problem.sub.members[a],
                    problem.sub.members[b],
                ));
            }
        }
    }
    Ok(())
}

/// Solves one subgraph with the degree-local dual layout.
pub fn admm_solve_subgraph(
    problem: &SubgraphProblem,
    cfg: &SolverConfig,
    options: &SolveOptions,
) -> Result<SolveReport> {
    let variant = options.variant.unwrap_or(SolverVariant::Improved);
    AdmmEngine::new(problem, cfg, variant, options.execution).run(options.trace, |_| {})
}

/// Solves one subgraph with full-length dual vectors at every agent.
pub fn admm_solve_naive(problem: &SubgraphProblem, cfg: &SolverConfig, options: &SolveOptions) -> Result<SolveReport> {
    AdmmEngine::new(problem, cfg, SolverVariant::Naive, options.execution).run(options.trace, |_| {})
}
