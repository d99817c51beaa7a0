//! Primal network simplex for the uncapacitated transportation problem.
//!
//! The spanning tree is stored with parent/thread/successor arrays, and the
//! entering arc is picked by block search with the lowest scanned index
//! winning ties, so runs are reproducible.

const NONE: usize = usize::MAX;
const STATE_TREE: i8 = 0;
const STATE_LOWER: i8 = 1;
const DIR_UP: f64 = 1.0;
const DIR_DOWN: f64 = -1.0;

/// Result of a transportation solve: flows on the `n1 × n2` arcs (row major).
pub(crate) struct SimplexSolution {
    pub flows: Vec<f64>,
}

pub(crate) enum SimplexFailure {
    IterationLimit { iterations: usize },
    Infeasible { residual: f64 },
}

struct Network {
    arc_num: usize,
    source: Vec<usize>,
    target: Vec<usize>,
    cost: Vec<f64>,
    flow: Vec<f64>,
    state: Vec<i8>,
    parent: Vec<usize>,
    pred: Vec<usize>,
    pred_dir: Vec<f64>,
    thread: Vec<usize>,
    rev_thread: Vec<usize>,
    succ_num: Vec<usize>,
    last_succ: Vec<usize>,
    pi: Vec<f64>,
    dirty_revs: Vec<usize>,
    // pivot state
    in_arc: usize,
    join: usize,
    u_in: usize,
    v_in: usize,
    u_out: usize,
    next_arc: usize,
    block_size: usize,
    tolerance: f64,
}

/// Solves `min Σ c_ij f_ij` subject to row sums `a`, column sums `b`, `f ≥ 0`.
/// `cost(i, j)` is called once per arc.
pub(crate) fn solve(
    a: &[f64],
    b: &[f64],
    cost: impl Fn(usize, usize) -> f64,
    max_iterations: usize,
) -> Result<SimplexSolution, SimplexFailure> {
    let (n1, n2) = (a.len(), b.len());
    let node_num = n1 + n2;
    let arc_num = n1 * n2;
    let all = arc_num + node_num;
    let root = node_num;
    let mut net = Network {
        arc_num,
        source: vec![0; all],
        target: vec![0; all],
        cost: vec![0.0; all],
        flow: vec![0.0; all],
        state: vec![STATE_LOWER; all],
        parent: vec![NONE; node_num + 1],
        pred: vec![NONE; node_num + 1],
        pred_dir: vec![0.0; node_num + 1],
        thread: vec![0; node_num + 1],
        rev_thread: vec![0; node_num + 1],
        succ_num: vec![0; node_num + 1],
        last_succ: vec![0; node_num + 1],
        pi: vec![0.0; node_num + 1],
        dirty_revs: Vec::new(),
        in_arc: 0,
        join: 0,
        u_in: 0,
        v_in: 0,
        u_out: 0,
        next_arc: 0,
        block_size: ((arc_num as f64).sqrt().ceil() as usize).max(10),
        tolerance: 0.0,
    };
    let mut max_cost = 0.0_f64;
    for i in 0..n1 {
        for j in 0..n2 {
            let e = i * n2 + j;
            let c = cost(i, j);
            net.source[e] = i;
            net.target[e] = n1 + j;
            net.cost[e] = c;
            max_cost = max_cost.max(c.abs());
        }
    }
    net.tolerance = 1e-13 * max_cost.max(f64::MIN_POSITIVE);
    let art_cost = (max_cost + 1.0) * (node_num as f64 + 1.0);
    let supply = |u: usize| if u < n1 { a[u] } else { -b[u - n1] };

    net.thread[root] = 0;
    net.rev_thread[0] = root;
    net.succ_num[root] = node_num + 1;
    net.last_succ[root] = root.wrapping_sub(1);
    if node_num == 0 {
        net.last_succ[root] = root;
        net.thread[root] = root;
        net.rev_thread[root] = root;
    }
    for u in 0..node_num {
        let e = arc_num + u;
        net.parent[u] = root;
        net.pred[u] = e;
        net.thread[u] = u + 1;
        net.rev_thread[u + 1] = u;
        net.succ_num[u] = 1;
        net.last_succ[u] = u;
        net.state[e] = STATE_TREE;
        let s = supply(u);
        if s >= 0.0 {
            net.pred_dir[u] = DIR_UP;
            net.pi[u] = 0.0;
            net.source[e] = u;
            net.target[e] = root;
            net.flow[e] = s;
            net.cost[e] = 0.0;
        } else {
            net.pred_dir[u] = DIR_DOWN;
            net.pi[u] = art_cost;
            net.source[e] = root;
            net.target[e] = u;
            net.flow[e] = -s;
            net.cost[e] = art_cost;
        }
    }

    let mut iterations = 0;
    while net.find_entering_arc() {
        iterations += 1;
        if iterations > max_iterations {
            return Err(SimplexFailure::IterationLimit { iterations });
        }
        net.find_join_node();
        let delta = net.find_leaving_arc();
        net.change_flow(delta);
        net.update_tree_structure();
        net.update_potential();
    }
    let total: f64 = a.iter().sum::<f64>().max(b.iter().sum::<f64>());
    let residual = (arc_num..all)
        .map(|e| net.flow[e].abs())
        .fold(0.0, f64::max);
    if residual > 1e-9 * total.max(f64::MIN_POSITIVE) {
        return Err(SimplexFailure::Infeasible { residual });
    }
    let mut flows = net.flow;
    flows.truncate(arc_num);
    for f in &mut flows {
        if *f < 0.0 {
            *f = 0.0;
        }
    }
    Ok(SimplexSolution { flows })
}

impl Network {
    #[inline]
    fn reduced(&self, e: usize) -> f64 {
        self.state[e] as f64 * (self.cost[e] + self.pi[self.source[e]] - self.pi[self.target[e]])
    }

    fn find_entering_arc(&mut self) -> bool {
        let m = self.arc_num;
        if m == 0 {
            return false;
        }
        let mut min = -self.tolerance;
        let mut best = NONE;
        let mut count = self.block_size;
        for offset in 0..m {
            let e = (self.next_arc + offset) % m;
            let c = self.reduced(e);
            if c < min {
                min = c;
                best = e;
            }
            count -= 1;
            if count == 0 {
                if best != NONE {
                    self.in_arc = best;
                    self.next_arc = (e + 1) % m;
                    return true;
                }
                count = self.block_size;
            }
        }
        if best != NONE {
            self.in_arc = best;
            self.next_arc = (best + 1) % m;
            return true;
        }
        false
    }

    fn find_join_node(&mut self) {
        let mut u = self.source[self.in_arc];
        let mut v = self.target[self.in_arc];
        while u != v {
            if self.succ_num[u] < self.succ_num[v] {
                u = self.parent[u];
            } else {
                v = self.parent[v];
            }
        }
        self.join = u;
    }

    fn find_leaving_arc(&mut self) -> f64 {
        // entering arcs are always at their lower bound
        let first = self.source[self.in_arc];
        let second = self.target[self.in_arc];
        let mut delta = f64::INFINITY;
        let mut result = 0;
        let mut u = first;
        while u != self.join {
            if self.pred_dir[u] == DIR_UP {
                let d = self.flow[self.pred[u]].max(0.0);
                if d < delta {
                    delta = d;
                    self.u_out = u;
                    result = 1;
                }
            }
            u = self.parent[u];
        }
        let mut u = second;
        while u != self.join {
            if self.pred_dir[u] == DIR_DOWN {
                let d = self.flow[self.pred[u]].max(0.0);
                if d <= delta {
                    delta = d;
                    self.u_out = u;
                    result = 2;
                }
            }
            u = self.parent[u];
        }
        debug_assert!(result != 0, "uncapacitated cycle with negative cost");
        if result == 1 {
            self.u_in = first;
            self.v_in = second;
        } else {
            self.u_in = second;
            self.v_in = first;
        }
        delta
    }

    fn change_flow(&mut self, delta: f64) {
        if delta > 0.0 {
            self.flow[self.in_arc] += delta;
            let mut u = self.source[self.in_arc];
            while u != self.join {
                self.flow[self.pred[u]] -= self.pred_dir[u] * delta;
                u = self.parent[u];
            }
            let mut u = self.target[self.in_arc];
            while u != self.join {
                self.flow[self.pred[u]] += self.pred_dir[u] * delta;
                u = self.parent[u];
            }
        }
        self.state[self.in_arc] = STATE_TREE;
        let out = self.pred[self.u_out];
        self.flow[out] = 0.0;
        self.state[out] = STATE_LOWER;
    }

    fn update_tree_structure(&mut self) {
        let (u_in, v_in, u_out, join, in_arc) =
            (self.u_in, self.v_in, self.u_out, self.join, self.in_arc);
        let old_rev_thread = self.rev_thread[u_out];
        let old_succ_num = self.succ_num[u_out];
        let old_last_succ = self.last_succ[u_out];
        let v_out = self.parent[u_out];

        if u_in == u_out {
            self.parent[u_in] = v_in;
            self.pred[u_in] = in_arc;
            self.pred_dir[u_in] = if u_in == self.source[in_arc] {
                DIR_UP
            } else {
                DIR_DOWN
            };
            if self.thread[v_in] != u_out {
                let mut after = self.thread[old_last_succ];
                self.thread[old_rev_thread] = after;
                self.rev_thread[after] = old_rev_thread;
                after = self.thread[v_in];
                self.thread[v_in] = u_out;
                self.rev_thread[u_out] = v_in;
                self.thread[old_last_succ] = after;
                self.rev_thread[after] = old_last_succ;
            }
        } else {
            let thread_continue = if old_rev_thread == v_in {
                self.thread[old_last_succ]
            } else {
                self.thread[v_in]
            };
            let mut stem = u_in;
            let mut par_stem = v_in;
            let mut last = self.last_succ[u_in];
            let mut after = self.thread[last];
            self.thread[v_in] = u_in;
            self.dirty_revs.clear();
            self.dirty_revs.push(v_in);
            while stem != u_out {
                let next_stem = self.parent[stem];
                self.thread[last] = next_stem;
                self.dirty_revs.push(last);
                let before = self.rev_thread[stem];
                self.thread[before] = after;
                self.rev_thread[after] = before;
                self.parent[stem] = par_stem;
                par_stem = stem;
                stem = next_stem;
                last = if self.last_succ[stem] == self.last_succ[par_stem] {
                    self.rev_thread[par_stem]
                } else {
                    self.last_succ[stem]
                };
                after = self.thread[last];
            }
            self.parent[u_out] = par_stem;
            self.thread[last] = thread_continue;
            self.rev_thread[thread_continue] = last;
            self.last_succ[u_out] = last;
            if old_rev_thread != v_in {
                self.thread[old_rev_thread] = after;
                self.rev_thread[after] = old_rev_thread;
            }
            for k in 0..self.dirty_revs.len() {
                let u = self.dirty_revs[k];
                let t = self.thread[u];
                self.rev_thread[t] = u;
            }
            let mut tmp_sc = 0usize;
            let tmp_ls = self.last_succ[u_out];
            let mut u = u_out;
            while u != u_in {
                let p = self.parent[u];
                self.pred[u] = self.pred[p];
                self.pred_dir[u] = -self.pred_dir[p];
                tmp_sc = tmp_sc + self.succ_num[u] - self.succ_num[p];
                self.succ_num[u] = tmp_sc;
                self.last_succ[p] = tmp_ls;
                u = p;
            }
            self.pred[u_in] = in_arc;
            self.pred_dir[u_in] = if u_in == self.source[in_arc] {
                DIR_UP
            } else {
                DIR_DOWN
            };
            self.succ_num[u_in] = old_succ_num;
        }

        let up_limit_out = if self.last_succ[join] == v_in {
            join
        } else {
            NONE
        };
        let last_succ_out = self.last_succ[u_out];
        let mut u = v_in;
        while u != NONE && self.last_succ[u] == v_in {
            self.last_succ[u] = last_succ_out;
            u = self.parent[u];
        }
        if join != old_rev_thread && v_in != old_rev_thread {
            let mut u = v_out;
            while u != up_limit_out && self.last_succ[u] == old_last_succ {
                self.last_succ[u] = old_rev_thread;
                u = self.parent[u];
            }
        } else if last_succ_out != old_last_succ {
            let mut u = v_out;
            while u != up_limit_out && self.last_succ[u] == old_last_succ {
                self.last_succ[u] = last_succ_out;
                u = self.parent[u];
            }
        }
        let mut u = v_in;
        while u != join {
            self.succ_num[u] += old_succ_num;
            u = self.parent[u];
        }
        let mut u = v_out;
        while u != join {
            self.succ_num[u] -= old_succ_num;
            u = self.parent[u];
        }
    }

    fn update_potential(&mut self) {
        let sigma = self.pi[self.v_in]
            - self.pi[self.u_in]
            - self.pred_dir[self.u_in] * self.cost[self.in_arc];
        let end = self.thread[self.last_succ[self.u_in]];
        let mut u = self.u_in;
        while u != end {
            self.pi[u] += sigma;
            u = self.thread[u];
        }
    }
}
