//! Static 3D k-d tree for exact fixed-radius queries.

use nalgebra::Vector3;

const LEAF_SIZE: usize = 16;

#[derive(Clone, Debug)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: f64, left: Box<Node>, right: Box<Node> },
}

#[derive(Clone, Debug)]
pub struct KdTree<'a> {
    points: &'a [Vector3<f64>],
    order: Vec<usize>,
    root: Node,
}

impl<'a> KdTree<'a> {
    pub fn new(points: &'a [Vector3<f64>]) -> Self {
        let mut order: Vec<usize> = (0..points.len()).collect();
        let root = build(points, &mut order, 0);
        Self { points, order, root }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Indices of all points with `‖p − query‖ ≤ radius`, in ascending order.
    pub fn within_radius(&self, query: &Vector3<f64>, radius: f64) -> Vec<usize> {
        let mut out = Vec::new();
        self.search(&self.root, query, radius, radius * radius, &mut out);
        out.sort_unstable();
        out
    }

    fn search(&self, node: &Node, q: &Vector3<f64>, r: f64, r2: f64, out: &mut Vec<usize>) {
        match node {
            Node::Leaf { start, end } => {
                out.extend(
                    self.order[*start..*end]
                        .iter()
                        .copied()
                        .filter(|&i| (self.points[i] - q).norm_squared() <= r2),
                );
            }
            Node::Split { axis, value, left, right } => {
                let diff = q[*axis] - value;
                if diff <= r {
                    self.search(left, q, r, r2, out);
                }
                if diff >= -r {
                    self.search(right, q, r, r2, out);
                }
            }
        }
    }
}

/// Splits on the widest axis at the median. Points equal to the split value
/// may land on either side, which is why both children are searched when the
/// query is within `r` of the plane.
fn build(points: &[Vector3<f64>], order: &mut [usize], offset: usize) -> Node {
    let n = order.len();
    if n <= LEAF_SIZE {
        return Node::Leaf { start: offset, end: offset + n };
    }
    let mut lo = Vector3::repeat(f64::INFINITY);
    let mut hi = Vector3::repeat(f64::NEG_INFINITY);
    for &i in order.iter() {
        lo = lo.inf(&points[i]);
        hi = hi.sup(&points[i]);
    }
    let axis = (hi - lo).imax();
    if hi[axis] <= lo[axis] {
        return Node::Leaf { start: offset, end: offset + n };
    }
    let mid = n / 2;
    order.select_nth_unstable_by(mid, |&a, &b| points[a][axis].total_cmp(&points[b][axis]));
    let value = points[order[mid]][axis];
    let (left, right) = order.split_at_mut(mid);
    Node::Split {
        axis,
        value,
        left: Box::new(build(points, left, offset)),
        right: Box::new(build(points, right, offset + mid)),
    }
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn brute(points: &[Vector3<f64>], q: &Vector3<f64>, r: f64) -> Vec<usize> {
        (0..points.len()).filter(|&i| (points[i] - q).norm_squared() <= r * r).collect()
    }

    #[test]
    fn matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let points: Vec<Vector3<f64>> =
            (0..2000).map(|_| Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0))).collect();
        let tree = KdTree::new(&points);
        for _ in 0..200 {
            let q = Vector3::from_fn(|_, _| rng.random_range(-1.2..1.2));
            let r = rng.random_range(0.0..0.5);
            assert_eq!(tree.within_radius(&q, r), brute(&points, &q, r));
        }
    }

    #[test]
    fn planar_and_duplicate_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut points: Vec<Vector3<f64>> =
            (0..500).map(|_| Vector3::new(rng.random_range(0.0..1.0), rng.random_range(0.0..1.0), 0.0)).collect();
        points.extend(std::iter::repeat_n(Vector3::new(0.5, 0.5, 0.0), 100));
        let tree = KdTree::new(&points);
        for q in &points[..50] {
            assert_eq!(tree.within_radius(q, 0.1), brute(&points, q, 0.1));
        }
        let same = vec![Vector3::zeros(); 40];
        assert_eq!(KdTree::new(&same).within_radius(&Vector3::zeros(), 0.0).len(), 40);
        assert!(KdTree::new(&[]).within_radius(&Vector3::zeros(), 1.0).is_empty());
    }
}
