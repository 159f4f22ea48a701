//! Closed-loop receding-horizon driving.
//!
//! Every epoch the active fleet is partitioned, each subgraph's problem is
//! solved independently, and the first `t_e` planned controls are executed
//! with exact collision checks. Vehicles leave the simulation once they reach
//! their goal.

use std::time::Instant;

use serde::Serialize;

use super::scenario::{FleetMember, ScenarioConfig};
use crate::admm::{AdmmEngine, SolverVariant, TraceRow};
use crate::error::{PlanError, Result};
use crate::exec::{self, Execution};
use crate::geometry::footprints_overlap;
use crate::ocp::Nominal;
use crate::partition::{build_partition, FleetSnapshot, SnapshotVehicle, Subgraph};
use crate::road::{reference_window, ReferencePoint, WaypointIndex};
use crate::vehicle::{rollout, step_dynamics, ControlInput, VehicleState};

/// Look-ahead time of the pure-pursuit initial guess, seconds.
const PURSUIT_TIME: f64 = 0.6;
const PURSUIT_MIN_DISTANCE: f64 = 4.0;
/// Proportional speed gain of the initial guess, 1/s.
const PURSUIT_SPEED_GAIN: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeOptions {
    pub execution: Execution,
    pub variant: SolverVariant,
    /// Solve subgraphs last to first; results must not depend on it.
    pub reverse_order: bool,
    pub trace: bool,
    /// Stop after this many epochs even if vehicles are still driving.
    pub max_epochs: Option<usize>,
}

impl Default for EpisodeOptions {
    fn default() -> Self {
        Self {
            execution: Execution::default(),
            variant: SolverVariant::Improved,
            reverse_order: false,
            trace: false,
            max_epochs: None,
        }
    }
}

/// State of one vehicle at one step and the control applied from it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub epoch: usize,
    pub step: usize,
    pub vehicle: usize,
    pub state: VehicleState,
    pub control: ControlInput,
    pub subgraph: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubgraphRecord {
    /// Fleet indices.
    pub members: Vec<usize>,
    /// Communication edges as fleet index pairs.
    pub edges: Vec<(usize, usize)>,
    pub comm_disconnected: bool,
    #[serde(skip)]
    pub solve_seconds: f64,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub dual_work: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub start_step: usize,
    pub subgraphs: Vec<SubgraphRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpisodeTraceRow {
    pub epoch: usize,
    pub subgraph: usize,
    #[serde(flatten)]
    pub row: TraceRow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Completed,
    EpochLimit,
    Collision { step: usize, a: usize, b: usize },
    StepBudgetExceeded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    pub v_ref: Vec<f64>,
    pub records: Vec<StepRecord>,
    pub epochs: Vec<EpochRecord>,
    /// Smallest body-center distance among active vehicles at each step.
    pub min_distance_trace: Vec<(usize, f64)>,
    pub steps: usize,
    pub reached: Vec<bool>,
    pub outcome: Outcome,
    pub trace: Vec<EpisodeTraceRow>,
}

impl RunLog {
    pub fn min_distance(&self) -> f64 {
        self.min_distance_trace
            .iter()
            .map(|m| m.1)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn subgraph_sizes(&self) -> Vec<usize> {
        self.epochs
            .iter()
            .flat_map(|e| e.subgraphs.iter().map(|s| s.members.len()))
            .collect()
    }

    /// Mean `|v - v_ref|` over all logged states.
    pub fn mean_speed_error(&self) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        let total: f64 = self
            .records
            .iter()
            .map(|r| (r.state.v - self.v_ref[r.vehicle]).abs())
            .sum();
        total / self.records.len() as f64
    }

    /// Longest wall time spent solving any one epoch, seconds.
    pub fn max_epoch_solve_seconds(&self) -> f64 {
        self.epochs
            .iter()
            .map(|e| e.subgraphs.iter().map(|s| s.solve_seconds).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

/// An episode that ended in a collision or ran out of steps, with the log so far.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeError {
    pub error: PlanError,
    pub log: Box<RunLog>,
}

impl std::fmt::Display for EpisodeError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.error.fmt(f)
    }
}

impl std::error::Error for EpisodeError {}

struct Agent<'f> {
    member: &'f FleetMember,
    index: WaypointIndex,
    state: VehicleState,
    plan: Vec<ControlInput>,
    active: bool,
}

/// Pure-pursuit steering and proportional speed control rolled out over the
/// horizon, used as the first nominal of a vehicle.
pub fn pursuit_nominal(
    member: &FleetMember,
    index: &WaypointIndex,
    z0: &VehicleState,
    cfg: &ScenarioConfig,
) -> Result<Nominal> {
    let s = &cfg.solver;
    let geom = &cfg.vehicle;
    let mut states = vec![*z0];
    let mut controls = Vec::with_capacity(s.t_s);
    let mut z = *z0;
    for _ in 0..s.t_s {
        let look = (z.v.max(member.v_ref) * PURSUIT_TIME).max(PURSUIT_MIN_DISTANCE);
        let target = reference_window(&member.trajectory, index, &z, 1, look / member.v_ref)[1];
        let alpha = (target.y - z.y).atan2(target.x - z.x) - z.theta;
        let dist = (target.y - z.y).hypot(target.x - z.x).max(1e-6);
        let delta = (2.0 * geom.wheelbase * alpha.sin()).atan2(dist);
        let u = cfg.limits.saturate(
            &z,
            ControlInput::new(PURSUIT_SPEED_GAIN * (member.v_ref - z.v), delta),
            s.dt,
        );
        z = step_dynamics(&z, &u, s.dt, geom)?;
        controls.push(u);
        states.push(z);
    }
    Ok(Nominal { states, controls })
}

fn body_center(z: &VehicleState, cfg: &ScenarioConfig) -> nalgebra::Vector2<f64> {
    z.position() + z.heading() * cfg.vehicle.body_center_offset()
}

struct SolvedSubgraph {
    plans: Vec<Vec<ControlInput>>,
    record: SubgraphRecord,
    trace: Vec<TraceRow>,
}

fn solve_subgraph(
    agents: &[Agent<'_>],
    sub: &Subgraph,
    cfg: &ScenarioConfig,
    opts: &EpisodeOptions,
) -> Result<SolvedSubgraph> {
    let s = &cfg.solver;
    let mut nominals = Vec::with_capacity(sub.len());
    let mut refs: Vec<Vec<ReferencePoint>> = Vec::with_capacity(sub.len());
    for &m in &sub.members {
        let a = &agents[m];
        let nominal = if a.plan.is_empty() {
            pursuit_nominal(a.member, &a.index, &a.state, cfg)?
        } else {
            let hold = *a.plan.last().expect("non-empty plan");
            let mut controls: Vec<ControlInput> = a.plan.iter().skip(s.t_e).copied().collect();
            controls.resize(s.t_s, hold);
            let (states, controls) = rollout(&a.state, &controls, s.dt, &cfg.vehicle, &cfg.limits)?;
            Nominal { states, controls }
        };
        nominals.push(nominal);
        refs.push(reference_window(&a.member.trajectory, &a.index, &a.state, s.t_s, s.dt));
    }
    let problem = crate::admm::SubgraphProblem {
        sub: Subgraph::from_edges((0..sub.len()).collect(), &sub.edges),
        nominals,
        refs,
        geoms: vec![cfg.vehicle; sub.len()],
        limits: vec![cfg.limits; sub.len()],
    };
    let started = Instant::now();
    let report = AdmmEngine::new(&problem, s, opts.variant, opts.execution).run(opts.trace, |_| {})?;
    let solve_seconds = started.elapsed().as_secs_f64();
    Ok(SolvedSubgraph {
        plans: report.nominals.into_iter().map(|n| n.controls).collect(),
        record: SubgraphRecord {
            members: sub.members.clone(),
            edges: sub
                .edges
                .iter()
                .map(|&(a, b)| (sub.members[a], sub.members[b]))
                .collect(),
            comm_disconnected: sub.comm_disconnected,
            solve_seconds,
            outer_iterations: report.outer_iterations,
            inner_iterations: report.inner_iterations,
            dual_work: report.dual_work,
        },
        trace: report.trace,
    })
}

/// Runs the closed loop until every vehicle reaches its goal, a collision
/// occurs or the step budget runs out.
pub fn run_episode(
    fleet: &[FleetMember],
    cfg: &ScenarioConfig,
    opts: &EpisodeOptions,
) -> std::result::Result<RunLog, EpisodeError> {
    let mut log = RunLog {
        v_ref: fleet.iter().map(|m| m.v_ref).collect(),
        records: Vec::new(),
        epochs: Vec::new(),
        min_distance_trace: Vec::new(),
        steps: 0,
        reached: vec![false; fleet.len()],
        outcome: Outcome::Completed,
        trace: Vec::new(),
    };
    match drive(fleet, cfg, opts, &mut log) {
        Ok(()) => Ok(log),
        Err(error) => Err(EpisodeError {
            error,
            log: Box::new(log),
        }),
    }
}

fn drive(fleet: &[FleetMember], cfg: &ScenarioConfig, opts: &EpisodeOptions, log: &mut RunLog) -> Result<()> {
    cfg.validate()?;
    let s = &cfg.solver;
    let mut agents: Vec<Agent<'_>> = fleet
        .iter()
        .map(|m| Agent {
            member: m,
            index: m.trajectory.index(),
            state: m.start,
            plan: Vec::new(),
            active: true,
        })
        .collect();
    let n = agents.len();
    let mut step = 0;
    record_min_distance(&agents, cfg, step, log);

    for epoch in 0.. {
        let active: Vec<usize> = (0..n).filter(|&i| agents[i].active).collect();
        if active.is_empty() {
            log.outcome = Outcome::Completed;
            return Ok(());
        }
        if opts.max_epochs.is_some_and(|m| epoch >= m) {
            log.outcome = Outcome::EpochLimit;
            return Ok(());
        }

        let snap = FleetSnapshot {
            vehicles: active
                .iter()
                .map(|&i| {
                    let z = &agents[i].state;
                    SnapshotVehicle {
                        x: z.x,
                        y: z.y,
                        theta: z.theta,
                        v_ref: agents[i].member.v_ref,
                        r_tele: cfg.r_tele,
                    }
                })
                .collect(),
        };
        let mut subgraphs = build_partition(&snap, s.horizon_seconds());
        for sub in &mut subgraphs {
            for m in &mut sub.members {
                *m = active[*m];
            }
        }

        let mut order: Vec<usize> = (0..subgraphs.len()).collect();
        if opts.reverse_order {
            order.reverse();
        }
        let solved = exec::map(opts.execution, &order, |_, &k| {
            solve_subgraph(&agents, &subgraphs[k], cfg, opts)
        });
        let mut results: Vec<Option<SolvedSubgraph>> = (0..subgraphs.len()).map(|_| None).collect();
        for (&k, r) in order.iter().zip(solved) {
            results[k] = Some(r?);
        }

        let mut subgraph_of = vec![usize::MAX; n];
        let mut epoch_record = EpochRecord {
            epoch,
            start_step: step,
            subgraphs: Vec::new(),
        };
        for (k, r) in results.into_iter().enumerate() {
            let r = r.expect("every subgraph solved");
            for (&m, plan) in r.record.members.iter().zip(r.plans) {
                agents[m].plan = plan;
                subgraph_of[m] = k;
            }
            log.trace.extend(r.trace.into_iter().map(|row| EpisodeTraceRow {
                epoch,
                subgraph: k,
                row,
            }));
            epoch_record.subgraphs.push(r.record);
        }
        log.epochs.push(epoch_record);

        for local in 0..s.t_e {
            if step >= cfg.step_budget {
                log.outcome = Outcome::StepBudgetExceeded;
                return Err(PlanError::StepBudgetExceeded(cfg.step_budget));
            }
            for (i, a) in agents.iter_mut().enumerate() {
                if !a.active {
                    continue;
                }
                let u = cfg.limits.saturate(&a.state, a.plan[local], s.dt);
                log.records.push(StepRecord {
                    epoch,
                    step,
                    vehicle: i,
                    state: a.state,
                    control: u,
                    subgraph: subgraph_of[i],
                });
                a.state = step_dynamics(&a.state, &u, s.dt, &cfg.vehicle)?;
            }
            step += 1;
            log.steps = step;

            let live: Vec<usize> = (0..n).filter(|&i| agents[i].active).collect();
            for (p, &i) in live.iter().enumerate() {
                for &j in &live[p + 1..] {
                    if footprints_overlap(&agents[i].state, &cfg.vehicle, &agents[j].state, &cfg.vehicle) {
                        record_min_distance(&agents, cfg, step, log);
                        log.outcome = Outcome::Collision { step, a: i, b: j };
                        return Err(PlanError::CollisionDetected { step, a: i, b: j });
                    }
                }
            }
            record_min_distance(&agents, cfg, step, log);

            for (i, a) in agents.iter_mut().enumerate() {
                if a.active && (a.state.position() - a.member.goal).norm() <= cfg.goal_tol {
                    a.active = false;
                    log.reached[i] = true;
                    log.records.push(StepRecord {
                        epoch,
                        step,
                        vehicle: i,
                        state: a.state,
                        control: ControlInput::new(0.0, 0.0),
                        subgraph: subgraph_of[i],
                    });
                }
            }
            if agents.iter().all(|a| !a.active) {
                break;
            }
        }
    }
    unreachable!("the epoch loop only exits by returning")
}

fn record_min_distance(agents: &[Agent<'_>], cfg: &ScenarioConfig, step: usize, log: &mut RunLog) {
    let live: Vec<_> = agents
        .iter()
        .filter(|a| a.active)
        .map(|a| body_center(&a.state, cfg))
        .collect();
    let mut best = f64::INFINITY;
    for (p, a) in live.iter().enumerate() {
        for b in &live[p + 1..] {
            best = best.min((a - b).norm());
        }
    }
    if best.is_finite() {
        log.min_distance_trace.push((step, best));
    }
}
