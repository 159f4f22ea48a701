//! Ellipse/double-circle collision geometry between two vehicles.
//!
//! For an ordered pair the "ellipse" vehicle `j` is enclosed by an ellipse
//! enlarged by the other vehicle's circle radius, and the "circle" vehicle `i`
//! is covered by a front and a rear circle. A circle center outside the
//! enlarged ellipse means the two bodies cannot overlap. Positions are mapped
//! into a frame aligned with the ellipse's major axis and scaled so that the
//! enlarged ellipse becomes the unit circle; `‖p̄‖ ≥ 1` is the safety condition.

use nalgebra::{Matrix2, RowVector4, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{PlanError, Result};
use crate::vehicle::{VehicleGeometry, VehicleState};

/// Below this norm of `p̄` the unit direction of the discriminant is undefined.
pub const DEGENERATE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Circle {
    Front,
    Rear,
}

impl Circle {
    pub const BOTH: [Circle; 2] = [Circle::Front, Circle::Rear];

    pub fn index(self) -> usize {
        match self {
            Circle::Front => 0,
            Circle::Rear => 1,
        }
    }

    /// Signed offset along the heading: `+d_front` for the front circle,
    /// `-d_rear` for the rear one.
    fn offset(self, geom: &VehicleGeometry) -> f64 {
        match self {
            Circle::Front => geom.d_front,
            Circle::Rear => -geom.d_rear,
        }
    }
}

/// Centers of the front and rear covering circles.
pub fn circle_centers(z: &VehicleState, geom: &VehicleGeometry) -> [Vector2<f64>; 2] {
    [
        circle_center(z, Circle::Front, geom),
        circle_center(z, Circle::Rear, geom),
    ]
}

pub fn circle_center(z: &VehicleState, which: Circle, geom: &VehicleGeometry) -> Vector2<f64> {
    z.position() + z.heading() * which.offset(geom)
}

fn rotation(theta: f64) -> Matrix2<f64> {
    let (s, c) = theta.sin_cos();
    Matrix2::new(c, s, -s, c)
}

fn rotation_derivative(theta: f64) -> Matrix2<f64> {
    let (s, c) = theta.sin_cos();
    Matrix2::new(-s, c, -c, -s)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairTransform {
    pub s: Matrix2<f64>,
    pub r: Matrix2<f64>,
    pub p_bar: Vector2<f64>,
}

impl PairTransform {
    pub fn norm(&self) -> f64 {
        self.p_bar.norm()
    }
}

fn scaling(circle_geom: &VehicleGeometry, ellipse_geom: &VehicleGeometry) -> Matrix2<f64> {
    let r = circle_geom.circle_radius;
    Matrix2::new(
        1.0 / (ellipse_geom.ellipse_a + r),
        0.0,
        0.0,
        1.0 / (ellipse_geom.ellipse_b + r),
    )
}

/// Maps a circle center of vehicle `i` into the scaled, major-axis aligned
/// frame of the ellipse carried by vehicle `j`.
pub fn pair_transform(
    circle_center: &Vector2<f64>,
    z_j: &VehicleState,
    geom_i: &VehicleGeometry,
    geom_j: &VehicleGeometry,
) -> PairTransform {
    let s = scaling(geom_i, geom_j);
    let r = rotation(z_j.theta);
    let p_bar = s * r * (circle_center - z_j.position());
    PairTransform { s, r, p_bar }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollisionJacobians {
    /// Gradient of `‖p̄‖` with respect to the ellipse vehicle's state.
    pub ellipse: RowVector4<f64>,
    /// Gradient of `‖p̄‖` with respect to the circle vehicle's state.
    pub circle: RowVector4<f64>,
    /// `‖p̄‖` at the linearization point.
    pub norm: f64,
}

/// Gradients of the safety discriminant `‖p̄‖` for circle `which` of vehicle
/// `z_i` against the ellipse of vehicle `z_j`.
pub fn collision_jacobians(
    z_i: &VehicleState,
    z_j: &VehicleState,
    which: Circle,
    geom_i: &VehicleGeometry,
    geom_j: &VehicleGeometry,
) -> Result<CollisionJacobians> {
    let center = circle_center(z_i, which, geom_i);
    let t = pair_transform(&center, z_j, geom_i, geom_j);
    let norm = t.norm();
    if norm < DEGENERATE_TOL {
        return Err(PlanError::DegeneratePair);
    }
    let k = t.p_bar / norm;
    let sr = t.s * t.r;
    let rel = center - z_j.position();

    let kt_sr = k.transpose() * sr;
    let d_theta_j = (k.transpose() * t.s * rotation_derivative(z_j.theta) * rel)[0];
    let ellipse = RowVector4::new(-kt_sr[0], -kt_sr[1], d_theta_j, 0.0);

    let d = which.offset(geom_i);
    let (si, ci) = z_i.theta.sin_cos();
    let d_center_d_theta = Vector2::new(-d * si, d * ci);
    let circle = RowVector4::new(kt_sr[0], kt_sr[1], (kt_sr * d_center_d_theta)[0], 0.0);

    Ok(CollisionJacobians { ellipse, circle, norm })
}

/// First-order model of `‖p̄‖ - d_safe` after perturbing both vehicles.
#[allow(clippy::too_many_arguments)]
pub fn linearized_safety(
    z_i: &VehicleState,
    z_j: &VehicleState,
    dz_i: &nalgebra::Vector4<f64>,
    dz_j: &nalgebra::Vector4<f64>,
    which: Circle,
    d_safe: f64,
    geom_i: &VehicleGeometry,
    geom_j: &VehicleGeometry,
) -> Result<f64> {
    let jac = collision_jacobians(z_i, z_j, which, geom_i, geom_j)?;
    Ok(jac.norm + (jac.ellipse * dz_j)[0] + (jac.circle * dz_i)[0] - d_safe)
}

/// Smallest `‖p̄‖` over both circles of `z_i` against the ellipse of `z_j`.
pub fn pair_discriminant(
    z_i: &VehicleState,
    z_j: &VehicleState,
    geom_i: &VehicleGeometry,
    geom_j: &VehicleGeometry,
) -> f64 {
    circle_centers(z_i, geom_i)
        .iter()
        .map(|c| pair_transform(c, z_j, geom_i, geom_j).norm())
        .fold(f64::INFINITY, f64::min)
}

/// Corners of the rectangular body footprint, counter-clockwise.
pub fn footprint(z: &VehicleState, geom: &VehicleGeometry) -> [Vector2<f64>; 4] {
    let dir = z.heading();
    let normal = Vector2::new(-dir.y, dir.x);
    let center = z.position() + dir * geom.body_center_offset();
    let hl = dir * (geom.length / 2.0);
    let hw = normal * (geom.width / 2.0);
    [center - hl - hw, center + hl - hw, center + hl + hw, center - hl + hw]
}

/// Separating-axis test for two vehicle body rectangles.
pub fn footprints_overlap(
    a: &VehicleState,
    geom_a: &VehicleGeometry,
    b: &VehicleState,
    geom_b: &VehicleGeometry,
) -> bool {
    let pa = footprint(a, geom_a);
    let pb = footprint(b, geom_b);
    let axes = [
        a.heading(),
        Vector2::new(-a.theta.sin(), a.theta.cos()),
        b.heading(),
        Vector2::new(-b.theta.sin(), b.theta.cos()),
    ];
    for axis in axes {
        let (amin, amax) = project(&pa, &axis);
        let (bmin, bmax) = project(&pb, &axis);
        if amax < bmin || bmax < amin {
            return false;
        }
    }
    true
}

fn project(poly: &[Vector2<f64>; 4], axis: &Vector2<f64>) -> (f64, f64) {
    poly.iter()
        .map(|p| p.dot(axis))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), d| (lo.min(d), hi.max(d)))
}
