//! Bounding-volume hierarchy for exact nearest-primitive queries.
//!
//! The tree only prunes with caller-supplied lower bounds, so every query
//! returns the same minimum (and the same lowest-index argmin on ties) as an
//! exhaustive scan.

use crate::mesh::Vec3;

const LEAF_SIZE: usize = 6;

#[derive(Debug, Clone, Copy)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn empty() -> Self {
        Self { min: Vec3::repeat(f64::INFINITY), max: Vec3::repeat(f64::NEG_INFINITY) }
    }

    pub fn from_points<'a>(pts: impl IntoIterator<Item = &'a Vec3>) -> Self {
        let mut b = Self::empty();
        for p in pts {
            b.grow(p);
        }
        b
    }

    pub fn grow(&mut self, p: &Vec3) {
        self.min = self.min.inf(p);
        self.max = self.max.sup(p);
    }

    pub fn merge(&self, o: &Aabb) -> Aabb {
        Aabb { min: self.min.inf(&o.min), max: self.max.sup(&o.max) }
    }

    /// Per-axis gap between `p` and the box (zero inside).
    fn gap_to_point(&self, p: &Vec3) -> Vec3 {
        Vec3::from_fn(|k, _| (self.min[k] - p[k]).max(p[k] - self.max[k]).max(0.0))
    }

    pub fn dist_sq_to_point(&self, p: &Vec3) -> f64 {
        self.gap_to_point(p).norm_squared()
    }

    /// L1 distance from `p` to the box.
    pub fn dist_l1_to_point(&self, p: &Vec3) -> f64 {
        self.gap_to_point(p).iter().sum()
    }

    pub fn dist_sq_to_box(&self, o: &Aabb) -> f64 {
        Vec3::from_fn(|k, _| (self.min[k] - o.max[k]).max(o.min[k] - self.max[k]).max(0.0)).norm_squared()
    }
}

#[derive(Debug, Clone)]
struct Node {
    bounds: Aabb,
    /// Leaves own `order[start..start + count]`; interior nodes have `count == 0`.
    start: usize,
    count: usize,
    left: usize,
    right: usize,
}

/// Hierarchy over primitives given by their bounding boxes.
#[derive(Debug, Clone)]
pub struct Bvh {
    nodes: Vec<Node>,
    order: Vec<usize>,
}

impl Bvh {
    pub fn build(boxes: &[Aabb]) -> Self {
        let mut order: Vec<usize> = (0..boxes.len()).collect();
        let centers: Vec<Vec3> = boxes.iter().map(|b| (b.min + b.max) * 0.5).collect();
        let mut nodes = Vec::with_capacity(2 * boxes.len() / LEAF_SIZE + 1);
        if !boxes.is_empty() {
            build_node(boxes, &centers, &mut order, 0, boxes.len(), &mut nodes);
        }
        Self { nodes, order }
    }

    pub fn over_points(points: &[Vec3]) -> Self {
        let boxes: Vec<Aabb> = points.iter().map(|p| Aabb { min: *p, max: *p }).collect();
        Self::build(&boxes)
    }

    pub fn over_triangles(tris: &[[Vec3; 3]]) -> Self {
        let boxes: Vec<Aabb> = tris.iter().map(|t| Aabb::from_points(t.iter())).collect();
        Self::build(&boxes)
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// Minimum of `cost(i)` over all primitives, with the lowest index on
    /// ties. `bound(aabb)` must never exceed the cost of any primitive
    /// inside `aabb`.
    pub fn nearest(&self, bound: impl Fn(&Aabb) -> f64, cost: impl Fn(usize) -> f64) -> Option<(usize, f64)> {
        if self.nodes.is_empty() {
            return None;
        }
        let mut best: Option<(usize, f64)> = None;
        let mut stack: Vec<(usize, f64)> = vec![(0, bound(&self.nodes[0].bounds))];
        while let Some((ni, lb)) = stack.pop() {
            if let Some((_, bd)) = best {
                if lb > bd {
                    continue;
                }
            }
            let node = &self.nodes[ni];
            if node.count > 0 {
                for &prim in &self.order[node.start..node.start + node.count] {
                    let c = cost(prim);
                    best = match best {
                        Some((bi, bd)) if c > bd || (c == bd && prim > bi) => Some((bi, bd)),
                        _ => Some((prim, c)),
                    };
                }
            } else {
                let (l, r) = (node.left, node.right);
                let (bl, br) = (bound(&self.nodes[l].bounds), bound(&self.nodes[r].bounds));
                // push the farther child first so the nearer is visited first
                if bl <= br {
                    stack.push((r, br));
                    stack.push((l, bl));
                } else {
                    stack.push((l, bl));
                    stack.push((r, br));
                }
            }
        }
        best
    }
}

fn build_node(
    boxes: &[Aabb],
    centers: &[Vec3],
    order: &mut [usize],
    start: usize,
    end: usize,
    nodes: &mut Vec<Node>,
) -> usize {
    let bounds = order[start..end].iter().fold(Aabb::empty(), |acc, &i| acc.merge(&boxes[i]));
    let me = nodes.len();
    nodes.push(Node { bounds, start, count: end - start, left: 0, right: 0 });
    if end - start <= LEAF_SIZE {
        return me;
    }
    let cb = Aabb::from_points(order[start..end].iter().map(|&i| &centers[i]));
    let ext = cb.max - cb.min;
    let axis = if ext.x >= ext.y && ext.x >= ext.z {
        0
    } else if ext.y >= ext.z {
        1
    } else {
        2
    };
    let mid = (start + end) / 2;
    order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
        centers[a][axis].total_cmp(&centers[b][axis]).then(a.cmp(&b))
    });
    let left = build_node(boxes, centers, order, start, mid, nodes);
    let right = build_node(boxes, centers, order, mid, end, nodes);
    let n = &mut nodes[me];
    n.count = 0;
    n.left = left;
    n.right = right;
    me
}
