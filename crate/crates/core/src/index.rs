//! Build-once kd-tree for open-ball range queries and nearest neighbors.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::geometry::{Ball, Vector, MAX_DIM};

const LEAF_SIZE: usize = 12;

#[derive(Clone, Debug)]
struct Node {
    lo: [f64; MAX_DIM],
    hi: [f64; MAX_DIM],
    start: u32,
    end: u32,
    // children are `None` for leaves
    children: Option<(u32, u32)>,
}

/// A kd-tree over a frozen point list. Query results are indices into that list.
#[derive(Clone, Debug)]
pub struct SpatialIndex {
    points: Vec<Vector>,
    order: Vec<u32>,
    nodes: Vec<Node>,
    dim: usize,
}

impl SpatialIndex {
    pub fn new(points: &[Vector]) -> Self {
        let dim = points.first().map_or(1, |p| p.dim());
        let mut index = SpatialIndex {
            points: points.to_vec(),
            order: (0..points.len() as u32).collect(),
            nodes: Vec::new(),
            dim,
        };
        if !points.is_empty() {
            index.build(0, points.len());
        }
        index
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vector] {
        &self.points
    }

    fn build(&mut self, start: usize, end: usize) -> u32 {
        let mut lo = [f64::INFINITY; MAX_DIM];
        let mut hi = [f64::NEG_INFINITY; MAX_DIM];
        for &i in &self.order[start..end] {
            let p = &self.points[i as usize];
            for a in 0..self.dim {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        let id = self.nodes.len() as u32;
        self.nodes.push(Node {
            lo,
            hi,
            start: start as u32,
            end: end as u32,
            children: None,
        });
        if end - start > LEAF_SIZE {
            let axis = (0..self.dim)
                .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
                .unwrap_or(0);
            if hi[axis] > lo[axis] {
                let mid = (start + end) / 2;
                let points = &self.points;
                self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
                    points[a as usize][axis].total_cmp(&points[b as usize][axis])
                });
                let left = self.build(start, mid);
                let right = self.build(mid, end);
                self.nodes[id as usize].children = Some((left, right));
            }
        }
        id
    }

    fn box_dist2(&self, node: &Node, q: &Vector) -> (f64, f64) {
        let mut near = 0.0;
        let mut far = 0.0;
        for a in 0..self.dim {
            let c = q[a];
            let dn = if c < node.lo[a] {
                node.lo[a] - c
            } else if c > node.hi[a] {
                c - node.hi[a]
            } else {
                0.0
            };
            let df = (c - node.lo[a]).abs().max((node.hi[a] - c).abs());
            near += dn * dn;
            far += df * df;
        }
        (near, far)
    }

    /// Calls `visit(i)` for every point with `|p_i - center| < radius`.
    pub fn for_each_in_ball(&self, center: &Vector, radius: f64, mut visit: impl FnMut(usize)) {
        if self.nodes.is_empty() || !(radius > 0.0) {
            return;
        }
        let r2 = radius * radius;
        let mut stack = vec![0u32];
        while let Some(id) = stack.pop() {
            let node = &self.nodes[id as usize];
            let (near, far) = self.box_dist2(node, center);
            if near >= r2 {
                continue;
            }
            let range = node.start as usize..node.end as usize;
            if far < r2 {
                for &i in &self.order[range] {
                    visit(i as usize);
                }
                continue;
            }
            match node.children {
                Some((l, r)) => {
                    stack.push(r);
                    stack.push(l);
                }
                None => {
                    for &i in &self.order[range] {
                        if self.points[i as usize].dist_squared(center) < r2 {
                            visit(i as usize);
                        }
                    }
                }
            }
        }
    }

    /// Indices of points strictly inside the ball.
    pub fn range_query(&self, ball: &Ball) -> Vec<usize> {
        let mut out = Vec::new();
        self.for_each_in_ball(&ball.center, ball.radius, |i| out.push(i));
        out
    }

    /// The `k` nearest points to `q` as `(index, distance)`, closest first.
    pub fn knn(&self, q: &Vector, k: usize) -> Vec<(usize, f64)> {
        #[derive(PartialEq)]
        struct Cand(f64, u32);
        impl Eq for Cand {}
        impl PartialOrd for Cand {
            fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
                Some(self.cmp(o))
            }
        }
        impl Ord for Cand {
            fn cmp(&self, o: &Self) -> Ordering {
                self.0.total_cmp(&o.0).then(self.1.cmp(&o.1))
            }
        }
        if k == 0 || self.nodes.is_empty() {
            return Vec::new();
        }
        let mut heap: BinaryHeap<Cand> = BinaryHeap::with_capacity(k + 1);
        let mut stack = vec![0u32];
        while let Some(id) = stack.pop() {
            let node = &self.nodes[id as usize];
            let (near, _) = self.box_dist2(node, q);
            if heap.len() == k && near > heap.peek().map_or(f64::INFINITY, |c| c.0) {
                continue;
            }
            match node.children {
                Some((l, r)) => {
                    // visit the closer child first
                    let (dl, _) = self.box_dist2(&self.nodes[l as usize], q);
                    let (dr, _) = self.box_dist2(&self.nodes[r as usize], q);
                    if dl <= dr {
                        stack.push(r);
                        stack.push(l);
                    } else {
                        stack.push(l);
                        stack.push(r);
                    }
                }
                None => {
                    for &i in &self.order[node.start as usize..node.end as usize] {
                        let d2 = self.points[i as usize].dist_squared(q);
                        if heap.len() < k {
                            heap.push(Cand(d2, i));
                        } else if d2 < heap.peek().unwrap().0 {
                            heap.pop();
                            heap.push(Cand(d2, i));
                        }
                    }
                }
            }
        }
        let mut out: Vec<(usize, f64)> = heap.into_iter().map(|c| (c.1 as usize, c.0.sqrt())).collect();
        out.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        out
    }

    pub fn nearest(&self, q: &Vector) -> Option<(usize, f64)> {
        self.knn(q, 1).into_iter().next()
    }
}

pub fn range_query(index: &SpatialIndex, ball: &Ball) -> Vec<usize> {
    index.range_query(ball)
}
