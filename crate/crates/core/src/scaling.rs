//! Synthetic single-subgraph workloads for measuring how the dual updates
//! scale with fleet size.

use std::time::Instant;

use serde::Serialize;

use crate::admm::{AdmmEngine, SolverVariant, SubgraphProblem};
use crate::error::Result;
use crate::exec::Execution;
use crate::ocp::{Nominal, SolverConfig};
use crate::partition::Subgraph;
use crate::road::ReferencePoint;
use crate::vehicle::{rollout, ControlInput, VehicleGeometry, VehicleLimits, VehicleState};

/// Arc length between neighboring vehicles of the ring placement, metres.
pub const RING_SPACING: f64 = 12.0;
pub const RING_SPEED: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Topology {
    /// Each vehicle talks to its two ring neighbors.
    Ring,
    /// Everyone talks to everyone.
    Complete,
}

/// Vehicles evenly spaced on a circle, driving counter-clockwise, with
/// straight-ahead references and coasting nominals.
pub fn ring_problem(n: usize, topology: Topology, cfg: &SolverConfig) -> Result<SubgraphProblem> {
    let geom = VehicleGeometry::default();
    let limits = VehicleLimits::default();
    let radius = (n as f64 * RING_SPACING / std::f64::consts::TAU).max(30.0);
    let mut nominals = Vec::with_capacity(n);
    let mut refs = Vec::with_capacity(n);
    for i in 0..n {
        let phi = std::f64::consts::TAU * i as f64 / n as f64;
        let heading = phi + std::f64::consts::FRAC_PI_2;
        let z0 = VehicleState::new(radius * phi.cos(), radius * phi.sin(), heading, RING_SPEED);
        let (states, controls) = rollout(&z0, &vec![ControlInput::new(0.0, 0.0); cfg.t_s], cfg.dt, &geom, &limits)?;
        refs.push(
            (0..=cfg.t_s)
                .map(|k| {
                    let s = RING_SPEED * cfg.dt * k as f64;
                    ReferencePoint {
                        x: z0.x + s * heading.cos(),
                        y: z0.y + s * heading.sin(),
                        theta: heading,
                        v: RING_SPEED,
                    }
                })
                .collect(),
        );
        nominals.push(Nominal { states, controls });
    }
    let sub = match topology {
        Topology::Ring => Subgraph::ring(n),
        Topology::Complete => Subgraph::complete(n),
    };
    Ok(SubgraphProblem {
        sub,
        nominals,
        refs,
        geoms: vec![geom; n],
        limits: vec![limits; n],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingRow {
    pub n: usize,
    pub variant: SolverVariant,
    pub topology: Topology,
    pub max_degree: usize,
    /// Counted dual-update operations per inner iteration.
    pub work_per_iteration: f64,
    /// Best wall time per inner iteration over the repeats, seconds.
    pub seconds_per_iteration: f64,
}

/// Times `iterations` inner iterations after one re-linearization.
pub fn measure(
    n: usize,
    variant: SolverVariant,
    topology: Topology,
    iterations: usize,
    repeats: usize,
    execution: Execution,
    cfg: &SolverConfig,
) -> Result<ScalingRow> {
    let problem = ring_problem(n, topology, cfg)?;
    let mut best = f64::INFINITY;
    let mut work = 0.0;
    for _ in 0..repeats.max(1) {
        let mut engine = AdmmEngine::new(&problem, cfg, variant, execution);
        engine.begin_outer()?;
        let started = Instant::now();
        for _ in 0..iterations {
            engine.inner_iteration()?;
        }
        best = best.min(started.elapsed().as_secs_f64() / iterations as f64);
        work = engine.work() as f64 / iterations as f64;
    }
    Ok(ScalingRow {
        n,
        variant,
        topology,
        max_degree: problem.sub.max_degree(),
        work_per_iteration: work,
        seconds_per_iteration: best,
    })
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingSeries {
    pub variant: SolverVariant,
    pub topology: Topology,
    pub rows: Vec<ScalingRow>,
    pub work_slope: f64,
    pub time_slope: f64,
}

/// Runs one variant/topology pair over every size.
pub fn scaling_series(
    sizes: &[usize],
    variant: SolverVariant,
    topology: Topology,
    iterations: usize,
    repeats: usize,
    execution: Execution,
    cfg: &SolverConfig,
) -> Result<ScalingSeries> {
    let rows = sizes
        .iter()
        .map(|&n| measure(n, variant, topology, iterations, repeats, execution, cfg))
        .collect::<Result<Vec<_>>>()?;
    let x: Vec<f64> = rows.iter().map(|r| r.n as f64).collect();
    let w: Vec<f64> = rows.iter().map(|r| r.work_per_iteration).collect();
    let t: Vec<f64> = rows.iter().map(|r| r.seconds_per_iteration).collect();
    Ok(ScalingSeries {
        variant,
        topology,
        work_slope: loglog_slope(&x, &w),
        time_slope: loglog_slope(&x, &t),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_power_law() {
        let x = [4.0, 8.0, 16.0, 32.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powi(2)).collect();
        assert!((loglog_slope(&x, &y) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn ring_starts_collision_free() {
        let cfg = SolverConfig::default();
        for n in [4, 8, 32] {
            let p = ring_problem(n, Topology::Ring, &cfg).unwrap();
            crate::admm::check_start(&p).unwrap();
            assert_eq!(p.sub.max_degree(), 2);
        }
    }
}
