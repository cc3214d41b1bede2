//! Static k-d tree over balls (centre + radius) supporting "which balls
//! contain this point" and "which balls touch this box" queries.

#[derive(Debug, Clone)]
struct Node {
    lo: Vec<f64>,
    hi: Vec<f64>,
    max_radius: f64,
    start: usize,
    end: usize,
    children: Option<(usize, usize)>,
}

#[derive(Debug, Clone, Default)]
pub(crate) struct BallTree {
    dim: usize,
    /// Item keys in tree order.
    keys: Vec<u64>,
    centres: Vec<f64>,
    radii: Vec<f64>,
    nodes: Vec<Node>,
}

const LEAF_SIZE: usize = 4;
// Slack on pruning bounds so rounding never hides a boundary ball; final
// membership is decided by the caller with exact arithmetic.
const PRUNE_SLACK: f64 = 1e-9;

impl BallTree {
    pub fn build(dim: usize, items: &[(u64, &[f64], f64)]) -> Self {
        let mut tree = BallTree {
            dim,
            keys: Vec::with_capacity(items.len()),
            centres: Vec::with_capacity(items.len() * dim),
            radii: Vec::with_capacity(items.len()),
            nodes: Vec::new(),
        };
        if items.is_empty() {
            return tree;
        }
        let mut order: Vec<usize> = (0..items.len()).collect();
        tree.build_node(items, &mut order, 0, items.len());
        for &i in &order {
            tree.keys.push(items[i].0);
            tree.centres.extend_from_slice(items[i].1);
            tree.radii.push(items[i].2);
        }
        tree
    }

    fn build_node(
        &mut self,
        items: &[(u64, &[f64], f64)],
        order: &mut [usize],
        start: usize,
        end: usize,
    ) -> usize {
        let dim = self.dim;
        let mut lo = vec![f64::INFINITY; dim];
        let mut hi = vec![f64::NEG_INFINITY; dim];
        let mut max_radius: f64 = 0.0;
        for &i in &order[start..end] {
            let (_, c, r) = items[i];
            for d in 0..dim {
                lo[d] = lo[d].min(c[d]);
                hi[d] = hi[d].max(c[d]);
            }
            max_radius = max_radius.max(r);
        }
        let id = self.nodes.len();
        self.nodes.push(Node { lo: lo.clone(), hi: hi.clone(), max_radius, start, end, children: None });
        if end - start > LEAF_SIZE {
            let axis = (0..dim)
                .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
                .unwrap_or(0);
            let mid = start + (end - start) / 2;
            order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
                items[a].1[axis].total_cmp(&items[b].1[axis]).then(a.cmp(&b))
            });
            let left = self.build_node(items, order, start, mid);
            let right = self.build_node(items, order, mid, end);
            self.nodes[id].children = Some((left, right));
        }
        id
    }

    #[cfg(test)]
    pub fn len(&self) -> usize {
        self.keys.len()
    }

    fn box_distance_sq(lo: &[f64], hi: &[f64], x: &[f64]) -> f64 {
        let mut s = 0.0;
        for d in 0..x.len() {
            let v = if x[d] < lo[d] {
                lo[d] - x[d]
            } else if x[d] > hi[d] {
                x[d] - hi[d]
            } else {
                0.0
            };
            s += v * v;
        }
        s
    }

    /// Distance between two boxes (0 when overlapping), squared.
    fn box_box_distance_sq(alo: &[f64], ahi: &[f64], blo: &[f64], bhi: &[f64]) -> f64 {
        let mut s = 0.0;
        for d in 0..alo.len() {
            let v = if ahi[d] < blo[d] {
                blo[d] - ahi[d]
            } else if bhi[d] < alo[d] {
                alo[d] - bhi[d]
            } else {
                0.0
            };
            s += v * v;
        }
        s
    }

    /// Keys whose stored ball may contain `x` (superset, never misses).
    pub fn candidates_containing(&self, x: &[f64], out: &mut Vec<u64>) {
        if self.nodes.is_empty() {
            return;
        }
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            let node = &self.nodes[id];
            let reach = node.max_radius * (1.0 + PRUNE_SLACK) + PRUNE_SLACK;
            if Self::box_distance_sq(&node.lo, &node.hi, x) > reach * reach {
                continue;
            }
            match node.children {
                Some((l, r)) => {
                    stack.push(r);
                    stack.push(l);
                }
                None => {
                    for i in node.start..node.end {
                        let c = &self.centres[i * self.dim..(i + 1) * self.dim];
                        let r = self.radii[i] * (1.0 + PRUNE_SLACK) + PRUNE_SLACK;
                        let d2: f64 = c.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
                        if d2 <= r * r {
                            out.push(self.keys[i]);
                        }
                    }
                }
            }
        }
    }

    /// Keys whose stored ball may intersect the box `[lo, hi]`.
    pub fn candidates_touching_box(&self, lo: &[f64], hi: &[f64], out: &mut Vec<u64>) {
        if self.nodes.is_empty() {
            return;
        }
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            let node = &self.nodes[id];
            let reach = node.max_radius * (1.0 + PRUNE_SLACK) + PRUNE_SLACK;
            if Self::box_box_distance_sq(&node.lo, &node.hi, lo, hi) > reach * reach {
                continue;
            }
            match node.children {
                Some((l, r)) => {
                    stack.push(r);
                    stack.push(l);
                }
                None => {
                    for i in node.start..node.end {
                        let c = &self.centres[i * self.dim..(i + 1) * self.dim];
                        let r = self.radii[i] * (1.0 + PRUNE_SLACK) + PRUNE_SLACK;
                        if Self::box_distance_sq(lo, hi, c) <= r * r {
                            out.push(self.keys[i]);
                        }
                    }
                }
            }
        }
    }
}
