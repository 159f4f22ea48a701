//! Compressed box-block recursion.
//!
//! When every agent starts from identical duals, all non-owners' copies of
//! agent `i`'s box rows stay equal to each other for every iteration. One
//! shared copy then stands in for all of them, and the owner's consensus sums
//! collapse into a single difference scaled by its degree.

use nalgebra::DVector;

use super::projection::dual_prox;
use crate::ocp::SolverConfig;

/// `p, s, r, y, x` restricted to one agent's `3T + 1` box rows.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockVars {
    pub p: DVector<f64>,
    pub s: DVector<f64>,
    pub r: DVector<f64>,
    pub y: DVector<f64>,
    pub x: DVector<f64>,
}

impl BlockVars {
    pub fn zeros(len: usize) -> Self {
        Self {
            p: DVector::zeros(len),
            s: DVector::zeros(len),
            r: DVector::zeros(len),
            y: DVector::zeros(len),
            x: DVector::zeros(len),
        }
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        [
            (&self.p, &other.p),
            (&self.s, &other.s),
            (&self.r, &other.r),
            (&self.y, &other.y),
            (&self.x, &other.x),
        ]
        .iter()
        .map(|(a, b)| (*a - *b).amax())
        .fold(0.0, f64::max)
    }
}

/// Bounds of one box block and the number of agents sharing them.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxBounds {
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
    pub share: f64,
}

/// Advances the owner's block and the shared non-owner copy by one iteration.
///
/// `o_dz` is `O^i ΔZ^i` for the owner's fresh primal step, `owner_degree` the
/// owner's neighbor count and `holder_degree` the neighbor count of the
/// agents holding the shared copy.
pub fn dual_update_box(
    own: &mut BlockVars,
    shared: &mut BlockVars,
    o_dz: &DVector<f64>,
    owner_degree: usize,
    holder_degree: usize,
    bounds: &BoxBounds,
    cfg: &SolverConfig,
) {
    let (rho, sigma) = (cfg.rho, cfg.sigma);
    let d_own = owner_degree as f64;
    let d_hold = holder_degree as f64;
    let y_own = own.y.clone();
    let y_sh = shared.y.clone();
    let g_own = cfg.gamma(owner_degree);
    let g_sh = cfg.gamma(holder_degree);

    for e in 0..own.p.len() {
        own.p[e] += rho * d_own * (y_own[e] - y_sh[e]);
        own.s[e] += sigma * (y_own[e] - own.x[e]);
        own.r[e] = sigma * own.x[e] + rho * d_own * (y_own[e] + y_sh[e]) - (own.p[e] + own.s[e]);
        own.y[e] = 2.0 * g_own * (o_dz[e] + own.r[e]);
        let a = own.s[e] / sigma + own.y[e];
        own.x[e] = dual_prox(a, bounds.lower[e], bounds.upper[e], bounds.share, sigma);

        shared.p[e] += rho * (y_sh[e] - y_own[e]);
        shared.s[e] += sigma * (y_sh[e] - shared.x[e]);
        shared.r[e] =
            sigma * shared.x[e] + rho * ((2.0 * d_hold - 1.0) * y_sh[e] + y_own[e]) - (shared.p[e] + shared.s[e]);
        shared.y[e] = 2.0 * g_sh * shared.r[e];
        let a = shared.s[e] / sigma + shared.y[e];
        shared.x[e] = dual_prox(a, bounds.lower[e], bounds.upper[e], bounds.share, sigma);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_start_is_a_fixed_point() {
        let len = 7;
        let mut own = BlockVars::zeros(len);
        let mut shared = BlockVars::zeros(len);
        let bounds = BoxBounds {
            lower: DVector::from_element(len, -1.0),
            upper: DVector::from_element(len, 1.0),
            share: 3.0,
        };
        for _ in 0..5 {
            dual_update_box(
                &mut own,
                &mut shared,
                &DVector::zeros(len),
                2,
                2,
                &bounds,
                &SolverConfig::default(),
            );
        }
        assert_eq!(own, BlockVars::zeros(len));
        assert_eq!(shared, BlockVars::zeros(len));
    }

    #[test]
    fn single_agent_has_no_consensus_terms() {
        let cfg = SolverConfig::default();
        let mut own = BlockVars::zeros(1);
        own.y[0] = 0.4;
        let mut shared = BlockVars::zeros(1);
        shared.y[0] = 100.0;
        let bounds = BoxBounds {
            lower: DVector::from_element(1, -1.0),
            upper: DVector::from_element(1, 1.0),
            share: 1.0,
        };
        dual_update_box(
            &mut own,
            &mut shared,
            &DVector::from_element(1, 0.5),
            0,
            0,
            &bounds,
            &cfg,
        );
        assert_eq!(own.p[0], 0.0);
        assert!((own.s[0] - cfg.sigma * 0.4).abs() < 1e-15);
        assert!((own.r[0] + cfg.sigma * 0.4).abs() < 1e-15);
        assert!((own.y[0] - (0.5 - cfg.sigma * 0.4) / cfg.sigma).abs() < 1e-12);
    }
}
