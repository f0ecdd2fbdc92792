//! Static kd-tree over a point set, used to prune the Euclidean path
//! heuristics without changing their results.
//!
//! Besides ordinary ball queries the tree keeps one radius per point and the
//! maximum radius per subtree, which answers "which points `p` have
//! `|q - p| <= radius[p]`" in roughly logarithmic time.

use crate::tsp::euclidean;

/// Slack added to every pruning bound so that rounding in box distances can
/// never exclude a point the exact test would accept.
const MARGIN: f64 = 1e-9;
const LEAF_SIZE: usize = 8;
const NONE: usize = usize::MAX;

struct Node {
    start: usize,
    end: usize,
    left: usize,
    right: usize,
    parent: usize,
}

pub(crate) struct KdTree<'a> {
    dim: usize,
    coords: &'a [f64],
    perm: Vec<usize>,
    nodes: Vec<Node>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    leaf_of: Vec<usize>,
    radius: Vec<f64>,
    max_radius: Vec<f64>,
    live: Vec<bool>,
    alive: Vec<usize>,
}

impl<'a> KdTree<'a> {
    pub(crate) fn new(dim: usize, coords: &'a [f64]) -> Self {
        let n = coords.len() / dim;
        let mut tree = KdTree {
            dim,
            coords,
            perm: (0..n).collect(),
            nodes: Vec::new(),
            lo: Vec::new(),
            hi: Vec::new(),
            leaf_of: vec![NONE; n],
            radius: vec![0.0; n],
            max_radius: Vec::new(),
            live: vec![true; n],
            alive: Vec::new(),
        };
        if n > 0 {
            tree.build(0, n, NONE);
        }
        tree.max_radius = vec![0.0; tree.nodes.len()];
        tree.alive = tree.nodes.iter().map(|nd| nd.end - nd.start).collect();
        tree
    }

    #[inline]
    fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    fn build(&mut self, start: usize, end: usize, parent: usize) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node { start, end, left: NONE, right: NONE, parent });
        let d = self.dim;
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        for &p in &self.perm[start..end] {
            for k in 0..d {
                let x = self.coords[p * d + k];
                lo[k] = lo[k].min(x);
                hi[k] = hi[k].max(x);
            }
        }
        self.lo.extend_from_slice(&lo);
        self.hi.extend_from_slice(&hi);
        if end - start <= LEAF_SIZE {
            for &p in &self.perm[start..end] {
                self.leaf_of[p] = id;
            }
            return id;
        }
        let axis = (0..d).max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b]))).unwrap_or(0);
        let mid = start + (end - start) / 2;
        let coords = self.coords;
        self.perm[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            coords[a * d + axis].total_cmp(&coords[b * d + axis]).then(a.cmp(&b))
        });
        let left = self.build(start, mid, id);
        let right = self.build(mid, end, id);
        self.nodes[id].left = left;
        self.nodes[id].right = right;
        id
    }

    fn box_distance(&self, node: usize, q: &[f64]) -> f64 {
        let d = self.dim;
        let (lo, hi) = (&self.lo[node * d..(node + 1) * d], &self.hi[node * d..(node + 1) * d]);
        let mut s = 0.0;
        for ((&x, &l), &h) in q.iter().zip(lo).zip(hi) {
            let gap = (l - x).max(x - h).max(0.0);
            s += gap * gap;
        }
        s.sqrt()
    }

    /// Calls `f` for every point within `r` of `q`.
    pub(crate) fn within(&self, q: &[f64], r: f64, mut f: impl FnMut(usize)) {
        if self.nodes.is_empty() {
            return;
        }
        let mut stack = vec![0];
        while let Some(node) = stack.pop() {
            if self.box_distance(node, q) > r + MARGIN {
                continue;
            }
            let nd = &self.nodes[node];
            if nd.left == NONE {
                for &p in &self.perm[nd.start..nd.end] {
                    if euclidean(q, self.point(p)) <= r + MARGIN {
                        f(p);
                    }
                }
            } else {
                stack.push(nd.right);
                stack.push(nd.left);
            }
        }
    }

    /// Calls `f` for every point `p` with `|q - p| <= radius[p]`.
    pub(crate) fn reaching(&self, q: &[f64], mut f: impl FnMut(usize)) {
        if self.nodes.is_empty() {
            return;
        }
        let mut stack = vec![0];
        while let Some(node) = stack.pop() {
            if self.box_distance(node, q) > self.max_radius[node] + MARGIN {
                continue;
            }
            let nd = &self.nodes[node];
            if nd.left == NONE {
                for &p in &self.perm[nd.start..nd.end] {
                    if euclidean(q, self.point(p)) <= self.radius[p] + MARGIN {
                        f(p);
                    }
                }
            } else {
                stack.push(nd.right);
                stack.push(nd.left);
            }
        }
    }

    /// Sets every radius at once.
    pub(crate) fn set_radii(&mut self, radius: impl Fn(usize) -> f64) {
        for p in 0..self.radius.len() {
            self.radius[p] = radius(p);
        }
        for node in (0..self.nodes.len()).rev() {
            self.refresh(node);
        }
    }

    pub(crate) fn set_radius(&mut self, p: usize, r: f64) {
        self.radius[p] = r;
        let mut node = self.leaf_of[p];
        while node != NONE {
            self.refresh(node);
            node = self.nodes[node].parent;
        }
    }

    fn refresh(&mut self, node: usize) {
        let nd = &self.nodes[node];
        self.max_radius[node] = if nd.left == NONE {
            self.perm[nd.start..nd.end].iter().map(|&p| self.radius[p]).fold(0.0, f64::max)
        } else {
            self.max_radius[nd.left].max(self.max_radius[nd.right])
        };
    }

    pub(crate) fn remove(&mut self, p: usize) {
        if !std::mem::replace(&mut self.live[p], false) {
            return;
        }
        let mut node = self.leaf_of[p];
        while node != NONE {
            self.alive[node] -= 1;
            node = self.nodes[node].parent;
        }
    }

    /// Closest live point to `q`, lowest index among exact ties.
    pub(crate) fn nearest_live(&self, q: &[f64]) -> Option<usize> {
        if self.nodes.is_empty() || self.alive[0] == 0 {
            return None;
        }
        let mut best = (f64::INFINITY, NONE);
        let mut stack = vec![0];
        while let Some(node) = stack.pop() {
            if self.alive[node] == 0 || self.box_distance(node, q) > best.0 + MARGIN {
                continue;
            }
            let nd = &self.nodes[node];
            if nd.left == NONE {
                for &p in &self.perm[nd.start..nd.end] {
                    if !self.live[p] {
                        continue;
                    }
                    let d = euclidean(q, self.point(p));
                    if d < best.0 || (d == best.0 && p < best.1) {
                        best = (d, p);
                    }
                }
            } else {
                let (l, r) = (nd.left, nd.right);
                if self.box_distance(l, q) <= self.box_distance(r, q) {
                    stack.push(r);
                    stack.push(l);
                } else {
                    stack.push(l);
                    stack.push(r);
                }
            }
        }
        Some(best.1)
    }
}
