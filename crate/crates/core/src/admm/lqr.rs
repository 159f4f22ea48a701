//! Equality-constrained LQ subproblem solved by a backward Riccati sweep.
//!
//! Minimizes `Σ_τ<T ½ w_τᵀ H_τ w_τ + g_τᵀ w_τ + ½ Δz_Tᵀ H_T Δz_T + g_Tᵀ Δz_T`
//! over `w_τ = [Δz_τ; Δu_τ]` subject to `Δz_{τ+1} = A_τ Δz_τ + B_τ Δu_τ` and
//! `Δz_0 = 0`.

use nalgebra::{DMatrix, DVector, Matrix2, Matrix4, Matrix4x2, Matrix6, Vector2, Vector4, Vector6};

use crate::error::{PlanError, Result};
use crate::ocp::{control_offset, decision_len, state_offset, DynamicsBlocks};

#[derive(Debug, Clone, PartialEq)]
pub struct LqrSubproblem {
    pub a: Vec<Matrix4<f64>>,
    pub b: Vec<Matrix4x2<f64>>,
    pub h: Vec<Matrix6<f64>>,
    pub g: Vec<Vector6<f64>>,
    pub h_terminal: Matrix4<f64>,
    pub g_terminal: Vector4<f64>,
}

impl LqrSubproblem {
    /// Stage-wise split of a diagonal Hessian and gradient over `ΔZ`.
    pub fn from_cost(dynamics: &DynamicsBlocks, l1: &DVector<f64>, l2_diag: &DVector<f64>) -> Self {
        let t = dynamics.horizon();
        let mut h = Vec::with_capacity(t);
        let mut g = Vec::with_capacity(t);
        for tau in 0..t {
            let o = state_offset(tau);
            h.push(Matrix6::from_diagonal(&Vector6::from_fn(|k, _| l2_diag[o + k])));
            g.push(Vector6::from_fn(|k, _| l1[o + k]));
        }
        let o = state_offset(t);
        Self {
            a: dynamics.a.clone(),
            b: dynamics.b.clone(),
            h,
            g,
            h_terminal: Matrix4::from_diagonal(&Vector4::from_fn(|k, _| l2_diag[o + k])),
            g_terminal: Vector4::from_fn(|k, _| l1[o + k]),
        }
    }

    pub fn horizon(&self) -> usize {
        self.a.len()
    }

    /// Adds `weight·(cᵀw + r)²` to stage `stage`.
    pub fn add_penalty(&mut self, stage: usize, coeff: &[f64; 6], weight: f64, r: f64) {
        if stage < self.horizon() {
            let c = Vector6::from_column_slice(coeff);
            self.h[stage] += c * c.transpose() * (2.0 * weight);
            self.g[stage] += c * (2.0 * weight * r);
        } else {
            let c = Vector4::new(coeff[0], coeff[1], coeff[2], coeff[3]);
            self.h_terminal += c * c.transpose() * (2.0 * weight);
            self.g_terminal += c * (2.0 * weight * r);
        }
    }

    /// Dense Hessian and gradient over the full decision vector.
    pub fn dense_objective(&self) -> (DMatrix<f64>, DVector<f64>) {
        let t = self.horizon();
        let n = decision_len(t);
        let mut h = DMatrix::zeros(n, n);
        let mut g = DVector::zeros(n);
        for tau in 0..t {
            let o = state_offset(tau);
            h.view_mut((o, o), (6, 6)).copy_from(&self.h[tau]);
            g.rows_mut(o, 6).copy_from(&self.g[tau]);
        }
        let o = state_offset(t);
        h.view_mut((o, o), (4, 4)).copy_from(&self.h_terminal);
        g.rows_mut(o, 4).copy_from(&self.g_terminal);
        (h, g)
    }

    pub fn objective(&self, dz: &DVector<f64>) -> f64 {
        let (h, g) = self.dense_objective();
        0.5 * dz.dot(&(&h * dz)) + g.dot(dz)
    }
}

/// Returns the minimizing `ΔZ`. `regularization` is added to the input
/// Hessian of every stage and grown tenfold while a factorization fails.
pub fn solve_lqr(sub: &LqrSubproblem, regularization: f64) -> Result<DVector<f64>> {
    let mut mu = regularization;
    for _ in 0..8 {
        if let Some(dz) = riccati(sub, mu) {
            return Ok(dz);
        }
        mu = if mu > 0.0 { mu * 10.0 } else { 1e-8 };
    }
    Err(PlanError::Numerical(
        "Riccati factorization failed after regularization".into(),
    ))
}

fn riccati(sub: &LqrSubproblem, mu: f64) -> Option<DVector<f64>> {
    let t = sub.horizon();
    let mut gains: Vec<(nalgebra::Matrix2x4<f64>, Vector2<f64>)> = Vec::with_capacity(t);
    let mut v_mat = sub.h_terminal;
    let mut v_vec = sub.g_terminal;
    for tau in (0..t).rev() {
        let a = &sub.a[tau];
        let b = &sub.b[tau];
        let h = &sub.h[tau];
        let g = &sub.g[tau];
        let hzz = h.fixed_view::<4, 4>(0, 0);
        let huu = h.fixed_view::<2, 2>(4, 4);
        let huz = h.fixed_view::<2, 4>(4, 0);
        let vb = v_mat * b;
        let qzz = hzz + a.transpose() * v_mat * a;
        let quu = huu + b.transpose() * vb + Matrix2::identity() * mu;
        let quz = huz + vb.transpose() * a;
        let qz = g.fixed_rows::<4>(0) + a.transpose() * v_vec;
        let qu = g.fixed_rows::<2>(4) + b.transpose() * v_vec;

        let chol = quu.cholesky()?;
        let k_fb = -chol.solve(&quz);
        let k_ff = -chol.solve(&qu);
        let vm = qzz + quz.transpose() * k_fb;
        v_mat = (vm + vm.transpose()) * 0.5;
        v_vec = qz + quz.transpose() * k_ff;
        if !v_mat.iter().all(|x| x.is_finite()) {
            return None;
        }
        gains.push((k_fb, k_ff));
    }
    gains.reverse();

    let mut dz = DVector::zeros(decision_len(t));
    let mut z = Vector4::zeros();
    for (tau, (k_fb, k_ff)) in gains.iter().enumerate() {
        let u = k_fb * z + k_ff;
        dz.fixed_rows_mut::<4>(state_offset(tau)).copy_from(&z);
        dz.fixed_rows_mut::<2>(control_offset(tau)).copy_from(&u);
        z = sub.a[tau] * z + sub.b[tau] * u;
    }
    dz.fixed_rows_mut::<4>(state_offset(t)).copy_from(&z);
    Some(dz)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_dynamics(t: usize) -> LqrSubproblem {
        let mut b = Matrix4x2::zeros();
        b[(3, 0)] = 0.1;
        b[(2, 1)] = 0.5;
        LqrSubproblem {
            a: vec![Matrix4::identity(); t],
            b: vec![b; t],
            h: vec![Matrix6::identity(); t],
            g: vec![Vector6::zeros(); t],
            h_terminal: Matrix4::identity(),
            g_terminal: Vector4::zeros(),
        }
    }

    #[test]
    fn zero_gradient_gives_zero_step() {
        let dz = solve_lqr(&identity_dynamics(4), 1e-8).unwrap();
        assert!(dz.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn pulls_toward_negative_gradient() {
        let mut sub = identity_dynamics(2);
        sub.g_terminal[3] = -1.0;
        let dz = solve_lqr(&sub, 0.0).unwrap();
        // Terminal speed increases, so the acceleration inputs are positive.
        assert!(dz[control_offset(0)] > 0.0);
        assert!(dz[state_offset(2) + 3] > 0.0);
        assert!(dz.rows(0, 4).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn indefinite_input_hessian_fails() {
        let mut sub = identity_dynamics(1);
        sub.h[0][(4, 4)] = -1.0;
        sub.b[0] = Matrix4x2::zeros();
        assert!(solve_lqr(&sub, 1e-8).is_err());
    }
}
