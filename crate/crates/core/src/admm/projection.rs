//! Box projections and the dual proximal step built on them.

use nalgebra::DVector;

/// Splits `v` into its projection onto `[lower, upper]` and the remainder:
/// returns `(v - λ, λ)` with `λ = clamp(v, lower, upper)`.
pub fn project_box_cone(v: &DVector<f64>, lower: &DVector<f64>, upper: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
    let lambda = DVector::from_iterator(
        v.len(),
        v.iter()
            .zip(lower.iter().zip(upper.iter()))
            .map(|(&a, (&lo, &hi))| clamp(a, lo, hi)),
    );
    (v - &lambda, lambda)
}

/// `max(lo, min(hi, a))`, tolerant of infinite bounds.
#[inline]
pub fn clamp(a: f64, lo: f64, hi: f64) -> f64 {
    lo.max(hi.min(a))
}

/// Proximal step of the scaled support function of `[lo, hi] / share` at
/// `a`, with step `1/σ`: `a - Π(σa)/σ`. For a cone (`lo = 0`, `hi = ∞`) this is
/// the projection of `a` onto the polar cone.
#[inline]
pub fn dual_prox(a: f64, lo: f64, hi: f64, share: f64, sigma: f64) -> f64 {
    let b = sigma * a;
    (b - clamp(b, lo / share, hi / share)) / sigma
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interior_point_has_zero_remainder() {
        let v = DVector::from_vec(vec![0.5, -0.2]);
        let lo = DVector::from_vec(vec![0.0, -1.0]);
        let hi = DVector::from_vec(vec![1.0, 1.0]);
        let (x, l) = project_box_cone(&v, &lo, &hi);
        assert_eq!(x, DVector::zeros(2));
        assert_eq!(l, v);
    }

    #[test]
    fn below_lower_bound() {
        let v = DVector::from_vec(vec![-3.0]);
        let (x, l) = project_box_cone(
            &v,
            &DVector::from_vec(vec![-1.0]),
            &DVector::from_vec(vec![f64::INFINITY]),
        );
        assert_eq!(x[0], -2.0);
        assert_eq!(l[0], -1.0);
    }

    #[test]
    fn prox_of_cone_is_polar_projection() {
        for a in [-2.0, -0.1, 0.0, 0.3, 5.0] {
            let x = dual_prox(a, 0.0, f64::INFINITY, 3.0, 0.05);
            assert!((x - a.min(0.0)).abs() < 1e-15);
        }
    }
}
