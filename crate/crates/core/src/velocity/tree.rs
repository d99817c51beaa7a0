//! Cartesian Taylor treecode for the vertical-force Stokeslet sum.
//!
//! The column `E_ε(x) e₃` is `(δ_{i3} φ₁(x) + x_i x₃ φ₃(x)) / 8π` with
//! `φ_s(x) = (|x|² + ε²)^{-s/2}`. Both `φ₁` and `φ₃` are expanded about the
//! cluster center to a fixed order; Taylor coefficients come from the
//! recurrence satisfied by powers of `|x|² + ε²`.

use std::f64::consts::PI;

use crate::kernel::stokeslet_column3;
use crate::Vec3;

/// Multi-indices of total degree `≤ max_degree`, graded by degree.
#[derive(Debug, Clone)]
pub(crate) struct MultiIndexTable {
    pub max_degree: usize,
    pub indices: Vec<[usize; 3]>,
    lookup: Vec<usize>,
}

impl MultiIndexTable {
    pub fn new(max_degree: usize) -> Self {
        let side = max_degree + 1;
        let mut lookup = vec![usize::MAX; side * side * side];
        let mut indices = Vec::new();
        for n in 0..=max_degree {
            for a in (0..=n).rev() {
                for b in (0..=n - a).rev() {
                    let c = n - a - b;
                    lookup[(a * side + b) * side + c] = indices.len();
                    indices.push([a, b, c]);
                }
            }
        }
        MultiIndexTable {
            max_degree,
            indices,
            lookup,
        }
    }

    /// Number of multi-indices of degree `≤ n`.
    pub fn count_upto(n: usize) -> usize {
        (n + 1) * (n + 2) * (n + 3) / 6
    }

    #[inline]
    pub fn get(&self, k: [usize; 3]) -> usize {
        let side = self.max_degree + 1;
        self.lookup[(k[0] * side + k[1]) * side + k[2]]
    }
}

/// Tree parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeConfig {
    /// Cluster radius over target distance below which the expansion is used.
    pub opening_angle: f64,
    /// Taylor order of the far-field expansion.
    pub order: usize,
    /// Clusters with at most this many particles are not split.
    pub leaf_size: usize,
}

impl Default for TreeConfig {
    fn default() -> Self {
        TreeConfig {
            opening_angle: 0.3,
            order: 10,
            leaf_size: 32,
        }
    }
}

#[derive(Debug, Clone)]
struct Node {
    center: Vec3,
    radius: f64,
    start: usize,
    end: usize,
    children: Vec<usize>,
    moments: Vec<f64>,
}

/// Octree over source particles with per-node weighted moments.
#[derive(Debug, Clone)]
pub(crate) struct Tree {
    nodes: Vec<Node>,
    order: Vec<usize>,
    positions: Vec<Vec3>,
    weights: Vec<f64>,
    table: MultiIndexTable,
    config: TreeConfig,
}

const MAX_DEPTH: usize = 40;

impl Tree {
    pub fn build(positions: &[Vec3], weights: &[f64], config: TreeConfig) -> Tree {
        let table = MultiIndexTable::new(config.order + 2);
        let mut tree = Tree {
            nodes: Vec::new(),
            order: (0..positions.len()).collect(),
            positions: positions.to_vec(),
            weights: weights.to_vec(),
            table,
            config,
        };
        if !positions.is_empty() {
            tree.build_node(0, positions.len(), 0);
        }
        tree
    }

    fn build_node(&mut self, start: usize, end: usize, depth: usize) -> usize {
        let (mut lo, mut hi) = (Vec3::repeat(f64::INFINITY), Vec3::repeat(f64::NEG_INFINITY));
        for &i in &self.order[start..end] {
            lo = lo.inf(&self.positions[i]);
            hi = hi.sup(&self.positions[i]);
        }
        let center = (lo + hi) * 0.5;
        let radius = self.order[start..end]
            .iter()
            .map(|&i| (self.positions[i] - center).norm())
            .fold(0.0, f64::max);
        let moments = self.moments(&center, start, end);
        let id = self.nodes.len();
        self.nodes.push(Node {
            center,
            radius,
            start,
            end,
            children: Vec::new(),
            moments,
        });
        if end - start > self.config.leaf_size && depth < MAX_DEPTH && radius > 0.0 {
            // stable partition into octants keeps the layout deterministic
            let octant = |x: &Vec3| {
                (usize::from(x[0] >= center[0]))
                    | (usize::from(x[1] >= center[1]) << 1)
                    | (usize::from(x[2] >= center[2]) << 2)
            };
            let slice = &mut self.order[start..end];
            let positions = &self.positions;
            slice.sort_by_key(|&i| octant(&positions[i]));
            let mut bounds = vec![start];
            let mut current = start;
            for oct in 0..8 {
                let count = self.order[current..end]
                    .iter()
                    .take_while(|&&i| octant(&self.positions[i]) == oct)
                    .count();
                current += count;
                bounds.push(current);
            }
            let mut children = Vec::new();
            for w in bounds.windows(2) {
                if w[1] > w[0] {
                    children.push(self.build_node(w[0], w[1], depth + 1));
                }
            }
            self.nodes[id].children = children;
        }
        id
    }

    /// `M_k = Σ w (c − x)^k` for all `|k| ≤ order + 2`.
    fn moments(&self, center: &Vec3, start: usize, end: usize) -> Vec<f64> {
        let deg = self.table.max_degree;
        let mut m = vec![0.0; self.table.indices.len()];
        let mut pw = [vec![1.0; deg + 1], vec![1.0; deg + 1], vec![1.0; deg + 1]];
        for &i in &self.order[start..end] {
            let d = center - self.positions[i];
            for (a, p) in pw.iter_mut().enumerate() {
                for n in 1..=deg {
                    p[n] = p[n - 1] * d[a];
                }
            }
            let w = self.weights[i];
            for (slot, k) in m.iter_mut().zip(&self.table.indices) {
                *slot += w * pw[0][k[0]] * pw[1][k[1]] * pw[2][k[2]];
            }
        }
        m
    }

    /// `Σ_j w_j E_ε(y − x_j) e₃`, skipping source `skip` if given.
    pub fn column_sum(
        &self,
        y: &Vec3,
        eps2: f64,
        skip: Option<usize>,
        scratch: &mut Scratch,
    ) -> Result<Vec3, ()> {
        if self.nodes.is_empty() {
            return Ok(Vec3::zeros());
        }
        let mut acc = Vec3::zeros();
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            let node = &self.nodes[id];
            let x = y - node.center;
            let dist = x.norm();
            let admissible = node.radius < self.config.opening_angle * dist;
            // an expansion costs several direct terms per coefficient, so small nodes go direct
            let large = node.end - node.start >= 8 * MultiIndexTable::count_upto(self.config.order);
            if admissible && large {
                acc += self.far_field(node, &x, eps2, scratch);
            } else if admissible || node.children.is_empty() {
                for &j in &self.order[node.start..node.end] {
                    if Some(j) == skip {
                        continue;
                    }
                    let d = y - self.positions[j];
                    let r2 = d.norm_squared() + eps2;
                    if r2 == 0.0 {
                        return Err(());
                    }
                    acc += stokeslet_column3(&d, r2) * self.weights[j];
                }
            } else {
                // reverse push so children are visited in construction order
                stack.extend(node.children.iter().rev());
            }
        }
        Ok(acc)
    }

    fn far_field(&self, node: &Node, x: &Vec3, eps2: f64, s: &mut Scratch) -> Vec3 {
        let p = self.config.order;
        let r2 = x.norm_squared() + eps2;
        taylor_coefficients(&self.table, p, x, r2, 0.5, &mut s.a1);
        taylor_coefficients(&self.table, p, x, r2, 1.5, &mut s.a3);
        let m = &node.moments;
        let t = &self.table;
        let mut phi1 = 0.0;
        let mut acc = [0.0; 3];
        for (n, k) in t.indices[..MultiIndexTable::count_upto(p)]
            .iter()
            .enumerate()
        {
            phi1 += s.a1[n] * m[n];
            let a3 = s.a3[n];
            let k3 = [k[0], k[1], k[2] + 1];
            let m_k = m[n];
            let m_k3 = m[t.get(k3)];
            for (i, slot) in acc.iter_mut().enumerate() {
                let mut ki = *k;
                ki[i] += 1;
                let mut ki3 = ki;
                ki3[2] += 1;
                *slot +=
                    a3 * (x[i] * x[2] * m_k + x[i] * m_k3 + x[2] * m[t.get(ki)] + m[t.get(ki3)]);
            }
        }
        acc[2] += phi1;
        Vec3::new(acc[0], acc[1], acc[2]) / (8.0 * PI)
    }
}

/// Per-thread buffers for the Taylor coefficients.
#[derive(Debug, Default)]
pub(crate) struct Scratch {
    a1: Vec<f64>,
    a3: Vec<f64>,
}

/// Coefficients `a_k` of `ψ(x + d) = Σ_k a_k d^k` for `ψ = (|·|² + ε²)^{-s}`, `|k| ≤ p`.
///
/// `R² |k| a_k + (2|k| − 2 + 2s) Σ_j x_j a_{k−e_j} + (|k| − 2 + 2s) Σ_j a_{k−2e_j} = 0`.
fn taylor_coefficients(
    table: &MultiIndexTable,
    p: usize,
    x: &Vec3,
    r2: f64,
    s: f64,
    out: &mut Vec<f64>,
) {
    let count = MultiIndexTable::count_upto(p);
    out.clear();
    out.resize(count, 0.0);
    out[0] = r2.powf(-s);
    for n in 1..count {
        let k = table.indices[n];
        let deg = (k[0] + k[1] + k[2]) as f64;
        let mut first = 0.0;
        let mut second = 0.0;
        for j in 0..3 {
            if k[j] >= 1 {
                let mut km = k;
                km[j] -= 1;
                first += x[j] * out[table.get(km)];
                if k[j] >= 2 {
                    km[j] -= 1;
                    second += out[table.get(km)];
                }
            }
        }
        out[n] =
            -((2.0 * deg - 2.0 + 2.0 * s) * first + (deg - 2.0 + 2.0 * s) * second) / (r2 * deg);
    }
}
