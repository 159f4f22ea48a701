//! Kinematic bicycle model, physical limits and first-order linearization.
//!
//! The state is the rear-axle position, heading and speed `z = [x, y, theta, v]`;
//! the input is `u = [a, delta]` (acceleration, front-wheel steering angle).

use nalgebra::{Matrix4, Matrix4x2, Vector2, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{PlanError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VehicleState {
    pub x: f64,
    pub y: f64,
    /// Heading measured from the +x axis, radians.
    pub theta: f64,
    pub v: f64,
}

impl VehicleState {
    pub fn new(x: f64, y: f64, theta: f64, v: f64) -> Self {
        Self { x, y, theta, v }
    }

    pub fn position(&self) -> Vector2<f64> {
        Vector2::new(self.x, self.y)
    }

    pub fn heading(&self) -> Vector2<f64> {
        Vector2::new(self.theta.cos(), self.theta.sin())
    }

    pub fn to_vector(&self) -> Vector4<f64> {
        Vector4::new(self.x, self.y, self.theta, self.v)
    }

    pub fn from_vector(z: &Vector4<f64>) -> Self {
        Self::new(z[0], z[1], z[2], z[3])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlInput {
    /// Longitudinal acceleration, m/s².
    pub a: f64,
    /// Front-wheel steering angle, radians.
    pub delta: f64,
}

impl ControlInput {
    pub fn new(a: f64, delta: f64) -> Self {
        Self { a, delta }
    }
}

/// Body and collision-envelope dimensions. Every vehicle carries both an
/// ellipse (used when it is the lower-indexed member of a pair) and a pair of
/// circles (used otherwise).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VehicleGeometry {
    pub wheelbase: f64,
    pub length: f64,
    pub width: f64,
    /// Distance from the rear axle to the front circle center.
    pub d_front: f64,
    /// Signed rear circle offset; the rear center sits at `p - heading * d_rear`.
    pub d_rear: f64,
    pub ellipse_a: f64,
    pub ellipse_b: f64,
    pub circle_radius: f64,
}

impl Default for VehicleGeometry {
    fn default() -> Self {
        Self {
            wheelbase: 2.4,
            length: 3.8,
            width: 1.7,
            d_front: 2.68,
            d_rear: -0.28,
            ellipse_a: 3.0,
            ellipse_b: 1.1,
            circle_radius: 2.55,
        }
    }
}

impl VehicleGeometry {
    pub fn validate(&self) -> Result<()> {
        if !(self.ellipse_a > self.ellipse_b && self.ellipse_b > 0.0) {
            return Err(PlanError::Config("ellipse axes must satisfy a > b > 0".into()));
        }
        if !(self.circle_radius > 0.0 && self.wheelbase > 0.0) {
            return Err(PlanError::Config("circle radius and wheelbase must be positive".into()));
        }
        if !(self.length > 0.0 && self.width > 0.0) {
            return Err(PlanError::Config("body dimensions must be positive".into()));
        }
        Ok(())
    }

    /// Longitudinal offset of the body center ahead of the rear axle.
    pub fn body_center_offset(&self) -> f64 {
        self.wheelbase / 2.0
    }
}

/// Actuator and speed limits shared by all vehicles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VehicleLimits {
    pub a_min: f64,
    pub a_max: f64,
    pub delta_max: f64,
    pub v_min: f64,
    pub v_max: f64,
}

impl Default for VehicleLimits {
    fn default() -> Self {
        Self {
            a_min: -5.0,
            a_max: 3.0,
            delta_max: 0.6,
            v_min: 0.0,
            v_max: 25.0,
        }
    }
}

impl VehicleLimits {
    pub fn validate(&self) -> Result<()> {
        if !(self.a_min < self.a_max && self.delta_max > 0.0 && self.v_min < self.v_max) {
            return Err(PlanError::Config("vehicle limits must be non-degenerate".into()));
        }
        Ok(())
    }

    /// Saturates a command so the steering stays in range and the next speed
    /// `v + dt * a` stays inside `[v_min, v_max]`.
    pub fn saturate(&self, z: &VehicleState, u: ControlInput, dt: f64) -> ControlInput {
        let a_lo = self.a_min.max((self.v_min - z.v) / dt);
        let a_hi = self.a_max.min((self.v_max - z.v) / dt);
        let a = if a_lo > a_hi { a_hi } else { u.a.clamp(a_lo, a_hi) };
        ControlInput::new(a, u.delta.clamp(-self.delta_max, self.delta_max))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearizedDynamics {
    pub a: Matrix4<f64>,
    pub b: Matrix4x2<f64>,
}

struct ArcTerms {
    g: f64,
    root: f64,
    travel: f64,
}

fn arc_terms(v: f64, delta: f64, dt: f64, wheelbase: f64) -> Result<ArcTerms> {
    let g = v * dt * delta.sin();
    let disc = wheelbase * wheelbase - g * g;
    if !(disc > 0.0) || !(g / wheelbase).abs().le(&1.0) {
        return Err(PlanError::Domain { g, wheelbase });
    }
    let root = disc.sqrt();
    let travel = wheelbase + v * dt * delta.cos() - root;
    Ok(ArcTerms { g, root, travel })
}

/// Advances one step of the discrete bicycle model.
pub fn step_dynamics(z: &VehicleState, u: &ControlInput, dt: f64, geom: &VehicleGeometry) -> Result<VehicleState> {
    let t = arc_terms(z.v, u.delta, dt, geom.wheelbase)?;
    let (s, c) = z.theta.sin_cos();
    Ok(VehicleState {
        x: z.x + t.travel * c,
        y: z.y + t.travel * s,
        theta: z.theta + (t.g / geom.wheelbase).asin(),
        v: z.v + dt * u.a,
    })
}

/// Analytic Jacobians of [`step_dynamics`] with respect to state and input.
pub fn linearize_dynamics(
    z: &VehicleState,
    u: &ControlInput,
    dt: f64,
    geom: &VehicleGeometry,
) -> Result<LinearizedDynamics> {
    let t = arc_terms(z.v, u.delta, dt, geom.wheelbase)?;
    let (sd, cd) = u.delta.sin_cos();
    let (s, c) = z.theta.sin_cos();

    let dg_dv = dt * sd;
    let dg_dd = z.v * dt * cd;
    let df_dv = dt * cd + t.g * dg_dv / t.root;
    let df_dd = -z.v * dt * sd + t.g * dg_dd / t.root;

    #[rustfmt::skip]
    let a = Matrix4::new(
        1.0, 0.0, -t.travel * s, df_dv * c,
        0.0, 1.0,  t.travel * c, df_dv * s,
        0.0, 0.0, 1.0, dg_dv / t.root,
        0.0, 0.0, 0.0, 1.0,
    );
    #[rustfmt::skip]
    let b = Matrix4x2::new(
        0.0, df_dd * c,
        0.0, df_dd * s,
        0.0, dg_dd / t.root,
        dt, 0.0,
    );
    Ok(LinearizedDynamics { a, b })
}

/// Rolls a control sequence forward from `z0`, saturating each command first.
/// Returns the saturated controls together with the `controls.len() + 1` states.
pub fn rollout(
    z0: &VehicleState,
    controls: &[ControlInput],
    dt: f64,
    geom: &VehicleGeometry,
    limits: &VehicleLimits,
) -> Result<(Vec<VehicleState>, Vec<ControlInput>)> {
    let mut states = Vec::with_capacity(controls.len() + 1);
    let mut applied = Vec::with_capacity(controls.len());
    states.push(*z0);
    let mut z = *z0;
    for u in controls {
        let u = limits.saturate(&z, *u, dt);
        z = step_dynamics(&z, &u, dt, geom)?;
        applied.push(u);
        states.push(z);
    }
    Ok((states, applied))
}
