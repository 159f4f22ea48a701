//! Balanced 2-D k-d tree for nearest-waypoint queries.

use nalgebra::Vector2;

#[derive(Debug, Clone)]
pub struct WaypointIndex {
    points: Vec<Vector2<f64>>,
    /// Implicit balanced tree: `order[lo..hi]` is a subtree whose median
    /// element `order[(lo + hi) / 2]` is the splitting node.
    order: Vec<usize>,
}

impl WaypointIndex {
    pub fn new(points: Vec<Vector2<f64>>) -> Self {
        let mut order: Vec<usize> = (0..points.len()).collect();
        build(&points, &mut order, 0);
        Self { points, order }
    }

    pub fn from_xy<I: IntoIterator<Item = (f64, f64)>>(it: I) -> Self {
        Self::new(it.into_iter().map(|(x, y)| Vector2::new(x, y)).collect())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, ordinal: usize) -> Vector2<f64> {
        self.points[ordinal]
    }

    /// Ordinal of the closest point; equal distances resolve to the lowest ordinal.
    ///
    /// # Panics
    /// Panics when the index is empty.
    pub fn nearest(&self, p: &Vector2<f64>) -> usize {
        assert!(!self.is_empty(), "nearest query on an empty index");
        let mut best = (f64::INFINITY, usize::MAX);
        self.search(p, 0, self.order.len(), 0, &mut best);
        best.1
    }

    fn search(&self, p: &Vector2<f64>, lo: usize, hi: usize, depth: usize, best: &mut (f64, usize)) {
        if lo >= hi {
            return;
        }
        let mid = (lo + hi) / 2;
        let k = self.order[mid];
        let d2 = (self.points[k] - p).norm_squared();
        if d2 < best.0 || (d2 == best.0 && k < best.1) {
            *best = (d2, k);
        }
        let axis = depth % 2;
        let diff = p[axis] - self.points[k][axis];
        let (near, far) = if diff < 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.search(p, near.0, near.1, depth + 1, best);
        // Visit the far side on ties too so the lowest-ordinal rule holds.
        if diff * diff <= best.0 {
            self.search(p, far.0, far.1, depth + 1, best);
        }
    }
}

fn build(points: &[Vector2<f64>], order: &mut [usize], depth: usize) {
    if order.len() <= 1 {
        return;
    }
    let axis = depth % 2;
    let mid = order.len() / 2;
    order.select_nth_unstable_by(mid, |&a, &b| {
        points[a][axis].total_cmp(&points[b][axis]).then(a.cmp(&b))
    });
    let (left, right) = order.split_at_mut(mid);
    build(points, left, depth + 1);
    build(points, &mut right[1..], depth + 1);
}
