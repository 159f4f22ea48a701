//! Scenario files and random fleet generation.

use std::path::{Path, PathBuf};

use nalgebra::Vector2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{PlanError, Result};
use crate::geometry::pair_discriminant;
use crate::ocp::SolverConfig;
use crate::road::{astar_route, generate_grid_map, smooth_path, GridMapConfig, GuidanceTrajectory, RoadGraph};
use crate::vehicle::{VehicleGeometry, VehicleLimits, VehicleState};

/// Where the road network comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MapSource {
    /// JSON road graph, relative paths resolved against the scenario file.
    File(PathBuf),
    Grid(GridMapConfig),
}

impl Default for MapSource {
    fn default() -> Self {
        MapSource::Grid(GridMapConfig::default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub cav_count: usize,
    pub seed: u64,
    /// Center of the spawn ring.
    pub center: [f64; 2],
    /// Spawn distance range from `center`, metres.
    pub spawn_ring: [f64; 2],
    /// Destination distance range from each vehicle's spawn point, metres.
    pub destination_ring: [f64; 2],
    /// Reference speed range, m/s.
    pub v_ref: [f64; 2],
    /// Communication radius, metres.
    pub r_tele: f64,
    pub goal_tol: f64,
    pub step_budget: usize,
    pub smoothing_window: usize,
    pub smoothing_order: usize,
    /// Longest accepted route as a multiple of the straight-line distance.
    pub max_detour: f64,
    pub max_attempts: usize,
    pub map: MapSource,
    pub solver: SolverConfig,
    pub vehicle: VehicleGeometry,
    pub limits: VehicleLimits,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            name: "scenario".into(),
            cav_count: 8,
            seed: 0,
            center: [0.0, 0.0],
            spawn_ring: [7.5, 30.0],
            destination_ring: [100.0, 150.0],
            v_ref: [10.0, 10.0],
            r_tele: 100.0,
            goal_tol: 3.0,
            step_budget: 3000,
            smoothing_window: 9,
            smoothing_order: 3,
            max_detour: 2.0,
            max_attempts: 1000,
            map: MapSource::default(),
            solver: SolverConfig::default(),
            vehicle: VehicleGeometry::default(),
            limits: VehicleLimits::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| PlanError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a scenario and resolves a relative map path against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| PlanError::Io(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        if let MapSource::File(p) = &mut cfg.map {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let ordered = |r: [f64; 2]| r[0] >= 0.0 && r[0] <= r[1];
        if self.cav_count == 0 {
            return Err(PlanError::Config("cav_count must be positive".into()));
        }
        if !ordered(self.spawn_ring) || !ordered(self.destination_ring) || !ordered(self.v_ref) {
            return Err(PlanError::Config("ranges must satisfy 0 <= min <= max".into()));
        }
        if !(self.v_ref[0] > 0.0) {
            return Err(PlanError::Config("reference speeds must be positive".into()));
        }
        if !(self.max_detour >= 1.0) {
            return Err(PlanError::Config("max_detour must be at least 1".into()));
        }
        if !(self.r_tele > 0.0 && self.goal_tol > 0.0) {
            return Err(PlanError::Config("r_tele and goal_tol must be positive".into()));
        }
        self.solver.validate()?;
        self.vehicle.validate()?;
        self.limits.validate()
    }

    pub fn road_graph(&self) -> Result<RoadGraph> {
        match &self.map {
            MapSource::File(p) => RoadGraph::load(p),
            MapSource::Grid(g) => generate_grid_map(g),
        }
    }
}

/// One generated vehicle.
#[derive(Debug, Clone, PartialEq)]
pub struct FleetMember {
    pub start: VehicleState,
    pub trajectory: GuidanceTrajectory,
    pub goal: Vector2<f64>,
    pub v_ref: f64,
}

/// Samples spawn points, destinations and reference speeds.
///
/// Spawn sets are redrawn whole when two vehicles sit closer than twice the
/// body length, their collision envelopes already intersect, or they would
/// still meet if both braked as hard as possible along their routes.
pub fn generate_scenario(cfg: &ScenarioConfig, map: &RoadGraph) -> Result<Vec<FleetMember>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let center = Vector2::new(cfg.center[0], cfg.center[1]);
    let pos = |id| {
        let n = map.node(id).expect("node ids come from the map");
        Vector2::new(n.x, n.y)
    };
    let spawnable: Vec<_> = map
        .nodes()
        .iter()
        .filter(|n| map.out_degree(n.id) > 0)
        .filter(|n| {
            let d = (Vector2::new(n.x, n.y) - center).norm();
            d >= cfg.spawn_ring[0] && d <= cfg.spawn_ring[1]
        })
        .map(|n| n.id)
        .collect();
    if spawnable.len() < cfg.cav_count {
        return Err(PlanError::ScenarioInfeasible(format!(
            "{} map nodes inside the spawn ring, need {}",
            spawnable.len(),
            cfg.cav_count
        )));
    }

    let min_gap = 2.0 * cfg.vehicle.length;
    let clearance = cfg.solver.d_safe + cfg.solver.epsilon;
    for _ in 0..cfg.max_attempts {
        let mut picked: Vec<_> = Vec::with_capacity(cfg.cav_count);
        let mut attempts = 0;
        while picked.len() < cfg.cav_count && attempts < 50 * cfg.cav_count {
            attempts += 1;
            let id = spawnable[rng.random_range(0..spawnable.len())];
            if picked.iter().all(|&q| (pos(q) - pos(id)).norm() >= min_gap) {
                picked.push(id);
            }
        }
        if picked.len() < cfg.cav_count {
            continue;
        }

        let mut fleet = Vec::with_capacity(cfg.cav_count);
        for &start_id in &picked {
            let Some(member) = route_member(cfg, map, start_id, &mut rng) else {
                break;
            };
            fleet.push(member);
        }
        if fleet.len() < cfg.cav_count {
            continue;
        }
        if envelopes_clear(&fleet, &cfg.vehicle, clearance) && braking_clear(&fleet, cfg) {
            return Ok(fleet);
        }
    }
    Err(PlanError::ScenarioInfeasible(format!(
        "no valid spawn set after {} attempts",
        cfg.max_attempts
    )))
}

fn route_member(cfg: &ScenarioConfig, map: &RoadGraph, start_id: u64, rng: &mut ChaCha8Rng) -> Option<FleetMember> {
    let start = map.node(start_id)?;
    let sp = Vector2::new(start.x, start.y);
    let goals: Vec<_> = map
        .nodes()
        .iter()
        .filter(|n| {
            let d = (Vector2::new(n.x, n.y) - sp).norm();
            d >= cfg.destination_ring[0] && d <= cfg.destination_ring[1]
        })
        .map(|n| n.id)
        .collect();
    if goals.is_empty() {
        return None;
    }
    let v_ref = if cfg.v_ref[0] == cfg.v_ref[1] {
        cfg.v_ref[0]
    } else {
        rng.random_range(cfg.v_ref[0]..=cfg.v_ref[1])
    };
    for _ in 0..20 {
        let goal_id = goals[rng.random_range(0..goals.len())];
        let Ok(route) = astar_route(map, start_id, goal_id) else {
            continue;
        };
        let goal = map.node(goal_id)?;
        let direct = (Vector2::new(goal.x, goal.y) - sp).norm();
        if map.path_length(&route).ok()? > cfg.max_detour * direct {
            continue;
        }
        let Ok(raw) = GuidanceTrajectory::from_route(map, &route, v_ref) else {
            continue;
        };
        if raw.len() < cfg.smoothing_window.max(2) {
            continue;
        }
        let Ok(trajectory) = smooth_path(&raw, cfg.smoothing_window, cfg.smoothing_order) else {
            continue;
        };
        let w0 = trajectory.waypoints[0];
        let last = trajectory.last()?;
        return Some(FleetMember {
            start: VehicleState::new(w0.x, w0.y, w0.phi, v_ref),
            goal: Vector2::new(last.x, last.y),
            trajectory,
            v_ref,
        });
    }
    None
}

/// True when every ordered pair's circle centers lie outside the other's
/// enlarged ellipse by at least `clearance`.
fn envelopes_clear(fleet: &[FleetMember], geom: &VehicleGeometry, clearance: f64) -> bool {
    for (i, a) in fleet.iter().enumerate() {
        for b in &fleet[i + 1..] {
            let ab = pair_discriminant(&a.start, &b.start, geom, geom);
            let ba = pair_discriminant(&b.start, &a.start, geom, geom);
            if ab < clearance || ba < clearance {
                return false;
            }
        }
    }
    true
}

/// States of a vehicle braking at `a_min` along its route until it stops.
fn braking_profile(member: &FleetMember, cfg: &ScenarioConfig) -> Vec<VehicleState> {
    let dt = cfg.solver.dt;
    let decel = -cfg.limits.a_min;
    let mut out = Vec::new();
    let (mut s, mut v) = (0.0, member.start.v);
    loop {
        let w = member.trajectory.point_at(s);
        out.push(VehicleState::new(w.x, w.y, w.phi, v));
        if v <= 0.0 {
            return out;
        }
        let next = (v - decel * dt).max(0.0);
        s += 0.5 * (v + next) * dt;
        v = next;
    }
}

/// True when no pair's envelopes come within `d_safe` while both brake to a
/// stop; otherwise a collision is already unavoidable at spawn.
fn braking_clear(fleet: &[FleetMember], cfg: &ScenarioConfig) -> bool {
    let geom = &cfg.vehicle;
    let profiles: Vec<Vec<VehicleState>> = fleet.iter().map(|m| braking_profile(m, cfg)).collect();
    let at = |p: &[VehicleState], k: usize| p[k.min(p.len() - 1)];
    for (i, a) in profiles.iter().enumerate() {
        for b in &profiles[i + 1..] {
            // Far-apart pairs cannot meet within the combined stopping distances.
            let reach = a.len().max(b.len()) as f64 * cfg.solver.dt * (fleet[i].v_ref.max(cfg.limits.v_max));
            if (a[0].position() - b[0].position()).norm() > 2.0 * reach + 20.0 {
                continue;
            }
            for k in 0..a.len().max(b.len()) {
                let (za, zb) = (at(a, k), at(b, k));
                if pair_discriminant(&za, &zb, geom, geom).min(pair_discriminant(&zb, &za, geom, geom))
                    < cfg.solver.d_safe
                {
                    return false;
                }
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip_keeps_defaults() {
        let cfg = ScenarioConfig::default();
        let back = ScenarioConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn partial_file_fills_defaults() {
        let cfg = ScenarioConfig::from_toml("cav_count = 3\n[solver]\nk_max = 7\n").unwrap();
        assert_eq!(cfg.cav_count, 3);
        assert_eq!(cfg.solver.k_max, 7);
        assert_eq!(cfg.solver.sigma, 0.05);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(
            ScenarioConfig::from_toml("cavs = 3"),
            Err(PlanError::Config(_))
        ));
    }
}
