//! Slow, direct reference implementations used to check the fast paths.

use std::collections::{BinaryHeap, HashMap};

use nalgebra::{DMatrix, DVector, Vector2};

use crate::admm::{dual_prox, BlockVars, BoxBounds};
use crate::error::{PlanError, Result};
use crate::ocp::SolverConfig;
use crate::partition::FleetSnapshot;
use crate::road::{NodeId, RoadGraph};

/// `min ½xᵀHx + gᵀx  s.t.  Aeq·x = beq`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseQp {
    pub h: DMatrix<f64>,
    pub g: DVector<f64>,
    pub aeq: DMatrix<f64>,
    pub beq: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KktSolution {
    pub x: DVector<f64>,
    pub multipliers: DVector<f64>,
}

/// Solves the KKT system `[[H, Aᵀ], [A, 0]]·[x; ν] = [-g; b]` densely.
pub fn kkt_solve(qp: &DenseQp) -> Result<KktSolution> {
    let n = qp.h.nrows();
    let m = qp.aeq.nrows();
    let mut kkt = DMatrix::zeros(n + m, n + m);
    kkt.view_mut((0, 0), (n, n)).copy_from(&qp.h);
    if m > 0 {
        kkt.view_mut((0, n), (n, m)).copy_from(&qp.aeq.transpose());
        kkt.view_mut((n, 0), (m, n)).copy_from(&qp.aeq);
    }
    let mut rhs = DVector::zeros(n + m);
    rhs.rows_mut(0, n).copy_from(&(-&qp.g));
    if m > 0 {
        rhs.rows_mut(n, m).copy_from(&qp.beq);
    }
    let lu = kkt.full_piv_lu();
    if !lu.is_invertible() {
        return Err(PlanError::SingularKkt);
    }
    let sol = lu.solve(&rhs).ok_or(PlanError::SingularKkt)?;
    Ok(KktSolution {
        x: sol.rows(0, n).into_owned(),
        multipliers: sol.rows(n, m).into_owned(),
    })
}

/// Central-difference Jacobian of `f` at `x`.
pub fn finite_difference_jacobian(f: impl Fn(&DVector<f64>) -> DVector<f64>, x: &DVector<f64>, h: f64) -> DMatrix<f64> {
    let m = f(x).len();
    let mut jac = DMatrix::zeros(m, x.len());
    for c in 0..x.len() {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[c] += h;
        xm[c] -= h;
        let d = (f(&xp) - f(&xm)) / (2.0 * h);
        jac.set_column(c, &d);
    }
    jac
}

/// Central-difference gradient of a scalar function.
pub fn finite_difference_gradient(f: impl Fn(&DVector<f64>) -> f64, x: &DVector<f64>, h: f64) -> DVector<f64> {
    DVector::from_iterator(
        x.len(),
        (0..x.len()).map(|c| {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[c] += h;
            xm[c] -= h;
            (f(&xp) - f(&xm)) / (2.0 * h)
        }),
    )
}

/// Per-agent copies of every agent's box block: `copies[v][i]` is agent `v`'s
/// copy of the rows owned by agent `i`.
pub type BoxCopies = Vec<Vec<BlockVars>>;

/// One literal iteration of the per-agent box-block updates, every agent
/// keeping a full set of copies. `o_dz[i]` is `O^i ΔZ^i`.
pub fn naive_box_dual_step(
    copies: &mut BoxCopies,
    neighbors: &[Vec<usize>],
    o_dz: &[DVector<f64>],
    bounds: &[BoxBounds],
    cfg: &SolverConfig,
) {
    let n = copies.len();
    let prev_y: Vec<Vec<DVector<f64>>> = copies
        .iter()
        .map(|row| row.iter().map(|b| b.y.clone()).collect())
        .collect();
    for v in 0..n {
        let gamma = cfg.gamma(neighbors[v].len());
        for i in 0..n {
            let c = &mut copies[v][i];
            for e in 0..c.p.len() {
                let yv = prev_y[v][i][e];
                let mut diff = 0.0;
                let mut sum = 0.0;
                for &j in &neighbors[v] {
                    diff += yv - prev_y[j][i][e];
                    sum += yv + prev_y[j][i][e];
                }
                c.p[e] += cfg.rho * diff;
                c.s[e] += cfg.sigma * (yv - c.x[e]);
                c.r[e] = cfg.sigma * c.x[e] + cfg.rho * sum - (c.p[e] + c.s[e]);
                let own = if v == i { o_dz[i][e] } else { 0.0 };
                c.y[e] = 2.0 * gamma * (own + c.r[e]);
                let a = c.s[e] / cfg.sigma + c.y[e];
                c.x[e] = dual_prox(a, bounds[i].lower[e], bounds[i].upper[e], bounds[i].share, cfg.sigma);
            }
        }
    }
}

/// Dijkstra shortest-path length, or `None` when unreachable.
pub fn dijkstra_length(g: &RoadGraph, start: NodeId, goal: NodeId) -> Option<f64> {
    #[derive(PartialEq)]
    struct Item(f64, NodeId);
    impl Eq for Item {}
    impl Ord for Item {
        fn cmp(&self, o: &Self) -> std::cmp::Ordering {
            o.0.total_cmp(&self.0).then(o.1.cmp(&self.1))
        }
    }
    impl PartialOrd for Item {
        fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
            Some(self.cmp(o))
        }
    }
    let mut dist: HashMap<NodeId, f64> = HashMap::new();
    let mut heap = BinaryHeap::new();
    dist.insert(start, 0.0);
    heap.push(Item(0.0, start));
    while let Some(Item(d, u)) = heap.pop() {
        if u == goal {
            return Some(d);
        }
        if d > dist[&u] {
            continue;
        }
        for (v, l) in g.successors(u) {
            let nd = d + l;
            if dist.get(&v).is_none_or(|&old| nd < old) {
                dist.insert(v, nd);
                heap.push(Item(nd, v));
            }
        }
    }
    None
}

/// Exhaustive nearest point, lowest ordinal on ties.
pub fn linear_scan_nearest(points: &[Vector2<f64>], p: &Vector2<f64>) -> usize {
    let mut best = (f64::INFINITY, 0);
    for (k, q) in points.iter().enumerate() {
        let d = (q - p).norm_squared();
        if d < best.0 {
            best = (d, k);
        }
    }
    best.1
}

/// Savitzky-Golay output computed by fitting a polynomial to each window
/// directly. Edge samples use the first/last full window with the fit forced
/// through the end sample, eliminated by substitution.
pub fn savgol_by_regression(values: &[f64], window: usize, order: usize) -> Vec<f64> {
    let n = values.len();
    let half = window / 2;
    let fit_eval = |xs: &[f64], ys: &[f64], at: f64, pin: Option<(f64, f64)>| -> f64 {
        match pin {
            None => {
                // Polynomial in (x - at), so the fitted value is the constant term.
                let a = DMatrix::from_fn(xs.len(), order + 1, |r, c| (xs[r] - at).powi(c as i32));
                let b = DVector::from_column_slice(ys);
                let coef = a.svd(true, true).solve(&b, 1e-14).expect("least squares");
                coef[0]
            }
            Some((x0, y0)) => {
                // Polynomial in (x - x0) with the constant fixed to y0.
                let a = DMatrix::from_fn(xs.len(), order, |r, c| (xs[r] - x0).powi(c as i32 + 1));
                let b = DVector::from_iterator(ys.len(), ys.iter().map(|y| y - y0));
                let coef = a.svd(true, true).solve(&b, 1e-14).expect("least squares");
                y0 + (0..order).map(|c| coef[c] * (at - x0).powi(c as i32 + 1)).sum::<f64>()
            }
        }
    };
    let mut out = vec![0.0; n];
    for (k, o) in out.iter_mut().enumerate() {
        *o = if k < half {
            let xs: Vec<f64> = (0..window).map(|q| q as f64).collect();
            fit_eval(&xs, &values[..window], k as f64, Some((0.0, values[0])))
        } else if k + half >= n {
            let xs: Vec<f64> = (n - window..n).map(|q| q as f64).collect();
            fit_eval(
                &xs,
                &values[n - window..],
                k as f64,
                Some(((n - 1) as f64, values[n - 1])),
            )
        } else {
            let xs: Vec<f64> = (k - half..=k + half).map(|q| q as f64).collect();
            fit_eval(&xs, &values[k - half..=k + half], k as f64, None)
        };
    }
    out[0] = values[0];
    out[n - 1] = values[n - 1];
    out
}

/// Connected components of the safe-distance adjacency via union-find,
/// returned as sorted member lists ordered by their smallest member.
pub fn union_find_components(snap: &FleetSnapshot, horizon: f64) -> Vec<Vec<usize>> {
    let m = snap.len();
    let mut parent: Vec<usize> = (0..m).collect();
    fn find(p: &mut [usize], mut a: usize) -> usize {
        while p[a] != a {
            p[a] = p[p[a]];
            a = p[a];
        }
        a
    }
    for i in 0..m {
        for j in i + 1..m {
            if snap.manhattan(i, j) < snap.safe_distance(i, j, horizon) {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for i in 0..m {
        let r = find(&mut parent, i);
        groups.entry(r).or_default().push(i);
    }
    let mut out: Vec<Vec<usize>> = groups.into_values().collect();
    out.sort_by_key(|g| g[0]);
    out
}

/// Point at arc length `s` along a polyline resampled every `step` metres.
pub fn resampled_point(points: &[Vector2<f64>], s: f64, step: f64) -> Vector2<f64> {
    let mut fine = vec![points[0]];
    for w in points.windows(2) {
        let len = (w[1] - w[0]).norm();
        let m = (len / step).ceil().max(1.0) as usize;
        for q in 1..=m {
            fine.push(w[0] + (w[1] - w[0]) * (q as f64 / m as f64));
        }
    }
    let mut acc = 0.0;
    for w in fine.windows(2) {
        let len = (w[1] - w[0]).norm();
        if acc + len >= s {
            let t = if len > 0.0 { (s - acc) / len } else { 0.0 };
            return w[0] + (w[1] - w[0]) * t;
        }
        acc += len;
    }
    *fine.last().unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unconstrained_identity_qp() {
        let qp = DenseQp {
            h: DMatrix::identity(3, 3),
            g: DVector::zeros(3),
            aeq: DMatrix::zeros(0, 3),
            beq: DVector::zeros(0),
        };
        assert_eq!(kkt_solve(&qp).unwrap().x, DVector::zeros(3));
    }

    #[test]
    fn minimum_norm_point_on_hyperplane() {
        let qp = DenseQp {
            h: DMatrix::identity(3, 3),
            g: DVector::zeros(3),
            aeq: DMatrix::from_row_slice(1, 3, &[1.0, 0.0, 0.0]),
            beq: DVector::from_element(1, 1.0),
        };
        let x = kkt_solve(&qp).unwrap().x;
        assert!((x - DVector::from_vec(vec![1.0, 0.0, 0.0])).amax() < 1e-15);
    }

    #[test]
    fn singular_system_is_reported() {
        let qp = DenseQp {
            h: DMatrix::zeros(2, 2),
            g: DVector::zeros(2),
            aeq: DMatrix::zeros(0, 2),
            beq: DVector::zeros(0),
        };
        assert_eq!(kkt_solve(&qp).unwrap_err(), PlanError::SingularKkt);
    }
}
