//! Episode output files: `states.csv`, `metrics.json`, `partition.json` and
//! an optional solver trace.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use super::episode::{Outcome, RunLog};
use crate::error::Result;

/// Width of the velocity histogram bins, m/s.
pub const VELOCITY_BIN: f64 = 1.0;

pub fn states_csv(log: &RunLog) -> String {
    let mut out = String::from("epoch,step,vehicle,x,y,theta,v,a,delta,subgraph\n");
    for r in &log.records {
        let z = &r.state;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.epoch, r.step, r.vehicle, z.x, z.y, z.theta, z.v, r.control.a, r.control.delta, r.subgraph
        );
    }
    out
}

pub fn trace_csv(log: &RunLog) -> String {
    let mut out = String::from("epoch,subgraph,outer,iteration,agent,dz_inf,min_margin\n");
    for t in &log.trace {
        let r = &t.row;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            t.epoch, t.subgraph, r.outer, r.iteration, r.agent, r.dz_inf, r.min_margin
        );
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VelocityHistogram {
    pub bin_width: f64,
    pub counts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics {
    pub outcome: Outcome,
    pub steps: usize,
    pub vehicles: usize,
    pub reached: usize,
    pub min_distance: f64,
    pub min_distance_trace: Vec<(usize, f64)>,
    pub mean_speed: f64,
    pub mean_speed_error: f64,
    pub velocity_histogram: VelocityHistogram,
    pub epoch_solve_seconds: Vec<f64>,
    pub max_epoch_solve_seconds: f64,
    /// Subgraph sizes per epoch.
    pub subgraph_sizes: Vec<Vec<usize>>,
    pub max_subgraph_size: usize,
    pub median_subgraph_size: f64,
}

pub fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(f64::total_cmp);
    let m = values.len() / 2;
    if values.len() % 2 == 1 {
        values[m]
    } else {
        0.5 * (values[m - 1] + values[m])
    }
}

pub fn metrics(log: &RunLog) -> Metrics {
    let speeds: Vec<f64> = log.records.iter().map(|r| r.state.v).collect();
    let bins = speeds
        .iter()
        .map(|v| (v / VELOCITY_BIN).floor().max(0.0) as usize)
        .max()
        .map_or(0, |b| b + 1);
    let mut counts = vec![0; bins];
    for v in &speeds {
        counts[(v / VELOCITY_BIN).floor().max(0.0) as usize] += 1;
    }
    let mut sizes: Vec<f64> = log.subgraph_sizes().iter().map(|&s| s as f64).collect();
    Metrics {
        outcome: log.outcome,
        steps: log.steps,
        vehicles: log.v_ref.len(),
        reached: log.reached.iter().filter(|r| **r).count(),
        min_distance: log.min_distance(),
        min_distance_trace: log.min_distance_trace.clone(),
        mean_speed: if speeds.is_empty() {
            0.0
        } else {
            speeds.iter().sum::<f64>() / speeds.len() as f64
        },
        mean_speed_error: log.mean_speed_error(),
        velocity_histogram: VelocityHistogram {
            bin_width: VELOCITY_BIN,
            counts,
        },
        epoch_solve_seconds: log
            .epochs
            .iter()
            .map(|e| e.subgraphs.iter().map(|s| s.solve_seconds).sum())
            .collect(),
        max_epoch_solve_seconds: log.max_epoch_solve_seconds(),
        subgraph_sizes: log
            .epochs
            .iter()
            .map(|e| e.subgraphs.iter().map(|s| s.members.len()).collect())
            .collect(),
        max_subgraph_size: log.subgraph_sizes().into_iter().max().unwrap_or(0),
        median_subgraph_size: median(&mut sizes),
    }
}

pub fn partition_json(log: &RunLog) -> String {
    serde_json::to_string_pretty(&log.epochs).expect("partition log serializes")
}

/// Writes all episode outputs into `dir`, creating it if needed.
pub fn write_outputs(dir: &Path, log: &RunLog, trace: bool) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("states.csv"), states_csv(log))?;
    let m = serde_json::to_string_pretty(&metrics(log)).expect("metrics serialize");
    std::fs::write(dir.join("metrics.json"), m)?;
    std::fs::write(dir.join("partition.json"), partition_json(log))?;
    if trace {
        std::fs::write(dir.join("trace.csv"), trace_csv(log))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_of_odd_and_even() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_eq!(median(&mut []), 0.0);
    }
}
