//! Minimum-cost flow via the network simplex method, used to solve the
//! volume-constrained assignment LP in `lpfit`. Node potentials of the
//! optimal basis are the LP duals.
//!
//! The implementation keeps an explicit spanning tree (parent / predecessor
//! arc / depth / children) rooted at an artificial node, uses block pricing
//! for the entering arc, and exploits that a pivot shifts the potentials of
//! the re-hung subtree by a constant. Potentials are recomputed from the
//! final tree before returning, so they are exact sums of arc costs.

use crate::error::{Error, Result};

const LOWER: u8 = 0;
const TREE: u8 = 1;
const UPPER: u8 = 2;

/// Effectively unbounded capacity.
pub const CAP_INF: f64 = 1e18;

#[derive(Debug, Clone)]
pub struct MinCostFlow {
    num_nodes: usize,
    tail: Vec<u32>,
    head: Vec<u32>,
    cap: Vec<f64>,
    cost: Vec<f64>,
    supply: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct FlowSolution {
    /// Flow per user arc, in insertion order.
    pub flow: Vec<f64>,
    /// Node potential per user node; reduced cost of arc a is
    /// `cost[a] + potential[tail] - potential[head]`.
    pub potential: Vec<f64>,
    pub objective: f64,
}

impl MinCostFlow {
    pub fn new(num_nodes: usize) -> Self {
        MinCostFlow {
            num_nodes,
            tail: Vec::new(),
            head: Vec::new(),
            cap: Vec::new(),
            cost: Vec::new(),
            supply: vec![0.0; num_nodes],
        }
    }

    pub fn add_arc(&mut self, tail: usize, head: usize, cap: f64, cost: f64) -> usize {
        debug_assert!(tail < self.num_nodes && head < self.num_nodes && cap >= 0.0);
        self.tail.push(tail as u32);
        self.head.push(head as u32);
        self.cap.push(cap);
        self.cost.push(cost);
        self.tail.len() - 1
    }

    pub fn set_supply(&mut self, node: usize, b: f64) {
        self.supply[node] = b;
    }

    pub fn solve(mut self) -> Result<FlowSolution> {
        let n = self.num_nodes;
        let m_user = self.tail.len();
        let total: f64 = self.supply.iter().sum();
        if total.abs() > 1e-9 * (1.0 + self.supply.iter().map(|s| s.abs()).sum::<f64>()) {
            return Err(Error::Infeasible(format!("supplies do not balance (sum {total})")));
        }
        let max_cost = self.cost.iter().fold(0.0f64, |a, &c| a.max(c.abs()));
        let big = (max_cost + 1.0) * (n as f64 + 1.0);
        let tol = 1e-9 * (1.0 + max_cost);

        // Artificial arcs node <-> root form the initial spanning tree.
        let root = n;
        for i in 0..n {
            if self.supply[i] >= 0.0 {
                self.tail.push(i as u32);
                self.head.push(root as u32);
            } else {
                self.tail.push(root as u32);
                self.head.push(i as u32);
            }
            self.cap.push(CAP_INF);
            self.cost.push(big);
        }
        let m = self.tail.len();
        let mut flow = vec![0.0f64; m];
        let mut state = vec![LOWER; m];
        let mut pi = vec![0.0f64; n + 1];
        let mut parent = vec![usize::MAX; n + 1];
        let mut pred = vec![usize::MAX; n + 1];
        let mut depth = vec![0u32; n + 1];
        let mut children: Vec<Vec<u32>> = vec![Vec::new(); n + 1];
        for i in 0..n {
            let a = m_user + i;
            flow[a] = self.supply[i].abs();
            state[a] = TREE;
            parent[i] = root;
            pred[i] = a;
            depth[i] = 1;
            children[root].push(i as u32);
            pi[i] = if self.supply[i] >= 0.0 { -big } else { big };
        }

        let block = ((m as f64).sqrt() as usize).clamp(64, 4096);
        let mut scan_start = 0usize;
        loop {
            // Entering arc: best violation within a block, scanning cyclically.
            let mut entering = usize::MAX;
            let mut best = tol;
            let mut scanned = 0usize;
            let mut pos = scan_start;
            while scanned < m {
                let stop = (scanned + block).min(m);
                while scanned < stop {
                    let a = pos;
                    pos += 1;
                    if pos == m {
                        pos = 0;
                    }
                    scanned += 1;
                    if state[a] == TREE {
                        continue;
                    }
                    let r = self.cost[a] + pi[self.tail[a] as usize] - pi[self.head[a] as usize];
                    let viol = if state[a] == LOWER { -r } else { r };
                    if viol > best {
                        best = viol;
                        entering = a;
                    }
                }
                if entering != usize::MAX {
                    break;
                }
            }
            if entering == usize::MAX {
                break; // optimal
            }
            scan_start = pos;

            // Cycle: push from u across the entering arc to v, then back
            // through the tree. `forward` arcs gain flow, `backward` lose it.
            let e = entering;
            let (u, v) = if state[e] == LOWER {
                (self.tail[e] as usize, self.head[e] as usize)
            } else {
                (self.head[e] as usize, self.tail[e] as usize)
            };
            let mut delta = if state[e] == LOWER { self.cap[e] - flow[e] } else { flow[e] };
            let mut leaving = e;
            let mut leaving_child = usize::MAX; // child endpoint of leaving tree arc
            let (a_node, b_node) = (u, v);
            // Residual of the tree arc at `w` (toward parent) given the cycle
            // traverses it in direction `to_parent`.
            let residual = |w: usize, to_parent: bool, flow: &[f64]| -> f64 {
                let a = pred[w];
                let arc_up = self.tail[a] as usize == w; // arc points w -> parent
                if arc_up == to_parent {
                    self.cap[a] - flow[a]
                } else {
                    flow[a]
                }
            };
            // Walk both endpoints up to the LCA, tracking the bottleneck.
            {
                let (mut x, mut y) = (a_node, b_node);
                while depth[x] > depth[y] {
                    // u-side: cycle goes parent -> x, i.e. not to_parent
                    let r = residual(x, false, &flow);
                    if r < delta {
                        delta = r;
                        leaving = pred[x];
                        leaving_child = x;
                    }
                    x = parent[x];
                }
                while depth[y] > depth[x] {
                    let r = residual(y, true, &flow);
                    if r < delta {
                        delta = r;
                        leaving = pred[y];
                        leaving_child = y;
                    }
                    y = parent[y];
                }
                while x != y {
                    let r = residual(x, false, &flow);
                    if r < delta {
                        delta = r;
                        leaving = pred[x];
                        leaving_child = x;
                    }
                    let r = residual(y, true, &flow);
                    if r < delta {
                        delta = r;
                        leaving = pred[y];
                        leaving_child = y;
                    }
                    x = parent[x];
                    y = parent[y];
                }
            }
            // Augment by delta along the cycle.
            if delta > 0.0 {
                if state[e] == LOWER {
                    flow[e] += delta;
                } else {
                    flow[e] -= delta;
                }
                let (mut x, mut y) = (a_node, b_node);
                while depth[x] > depth[y] {
                    let a = pred[x];
                    let arc_up = self.tail[a] as usize == x;
                    flow[a] += if arc_up { -delta } else { delta };
                    x = parent[x];
                }
                while depth[y] > depth[x] {
                    let a = pred[y];
                    let arc_up = self.tail[a] as usize == y;
                    flow[a] += if arc_up { delta } else { -delta };
                    y = parent[y];
                }
                while x != y {
                    let a = pred[x];
                    let arc_up = self.tail[a] as usize == x;
                    flow[a] += if arc_up { -delta } else { delta };
                    x = parent[x];
                    let a = pred[y];
                    let arc_up = self.tail[a] as usize == y;
                    flow[a] += if arc_up { delta } else { -delta };
                    y = parent[y];
                }
            }

            if leaving == e {
                // Bottleneck is the entering arc itself: it flips bound.
                state[e] = if state[e] == LOWER { UPPER } else { LOWER };
                continue;
            }

            // Leaving arc drops to a bound.
            state[leaving] =
                if flow[leaving] <= self.cap[leaving] * 0.5 { LOWER } else { UPPER };

            // Re-hang the subtree rooted at `leaving_child` so that the
            // entering arc's endpoint inside it becomes its root.
            let lc = leaving_child;
            let pl = parent[lc];
            children[pl].retain(|&c| c as usize != lc);
            // Which endpoint of e lies inside the detached subtree?
            let in_subtree = |mut w: usize| -> bool {
                loop {
                    if w == lc {
                        return true;
                    }
                    if depth[w] <= depth[lc] || w == root {
                        return false;
                    }
                    w = parent[w];
                }
            };
            let (q, q_other) = if in_subtree(u) { (u, v) } else { (v, u) };
            debug_assert!(in_subtree(q));
            // Reverse the parent chain q -> ... -> lc.
            let mut chain = Vec::new();
            let mut w = q;
            while w != lc {
                chain.push(w);
                w = parent[w];
            }
            chain.push(lc);
            for k in (1..chain.len()).rev() {
                let hi = chain[k]; // closer to lc
                let lo = chain[k - 1];
                children[lo].push(hi as u32);
                children[hi].retain(|&c| c as usize != lo);
                parent[hi] = lo;
                pred[hi] = pred[lo];
            }
            parent[q] = q_other;
            pred[q] = e;
            children[q_other].push(q as u32);
            state[e] = TREE;

            // New potential of q from the (now basic, zero-reduced-cost)
            // entering arc; the whole subtree shifts by the same amount.
            let pi_q_new = if self.tail[e] as usize == q_other {
                self.cost[e] + pi[q_other]
            } else {
                pi[q_other] - self.cost[e]
            };
            let shift = pi_q_new - pi[q];
            // DFS over the re-hung subtree: fix depths, apply the shift.
            let mut stack = vec![q];
            depth[q] = depth[q_other] + 1;
            while let Some(w) = stack.pop() {
                pi[w] += shift;
                for &c in &children[w] {
                    depth[c as usize] = depth[w] + 1;
                    stack.push(c as usize);
                }
            }
        }

        // Any residual flow on an artificial arc means the instance is
        // infeasible.
        for a in m_user..m {
            if flow[a] > 1e-6 {
                return Err(Error::Infeasible(
                    "volume bounds admit no feasible assignment".into(),
                ));
            }
        }
        // Exact potentials: BFS over the final tree from the root.
        pi[root] = 0.0;
        let mut stack = vec![root];
        while let Some(w) = stack.pop() {
            for &c in &children[w] {
                let c = c as usize;
                let a = pred[c];
                pi[c] = if self.tail[a] as usize == w {
                    self.cost[a] + pi[w]
                } else {
                    pi[w] - self.cost[a]
                };
                stack.push(c);
            }
        }
        let objective = (0..m_user).map(|a| self.cost[a] * flow[a]).sum();
        flow.truncate(m_user);
        pi.truncate(n);
        Ok(FlowSolution { flow, potential: pi, objective })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Successive-shortest-path (Bellman-Ford) oracle for small instances.
    fn ssp_min_cost(
        n: usize,
        arcs: &[(usize, usize, f64, f64)],
        supply: &[f64],
    ) -> Option<f64> {
        // residual graph: forward and backward arcs
        let cap: Vec<f64> = arcs.iter().map(|a| a.2).collect();
        let mut flow = vec![0.0; arcs.len()];
        // super source/sink
        let s = n;
        let t = n + 1;
        let mut all: Vec<(usize, usize, f64)> = Vec::new(); // (tail, head, cost), cap tracked separately
        for &(u, v, _, c) in arcs {
            all.push((u, v, c));
        }
        let base = all.len();
        let mut scap = Vec::new();
        for (i, &b) in supply.iter().enumerate() {
            if b > 0.0 {
                all.push((s, i, 0.0));
                scap.push(b);
            } else if b < 0.0 {
                all.push((i, t, 0.0));
                scap.push(-b);
            }
        }
        let mut sflow = vec![0.0; all.len() - base];
        let need: f64 = supply.iter().filter(|&&b| b > 0.0).sum();
        let mut sent = 0.0;
        let mut total = 0.0;
        while sent + 1e-12 < need {
            // Bellman-Ford on the residual graph
            let nn = n + 2;
            let mut dist = vec![f64::INFINITY; nn];
            let mut from: Vec<Option<(usize, bool)>> = vec![None; nn]; // (arc, forward)
            dist[s] = 0.0;
            for _ in 0..nn {
                let mut improved = false;
                for (i, &(u, v, c)) in all.iter().enumerate() {
                    let (cp, fl) = if i < base {
                        (cap[i], flow[i])
                    } else {
                        (scap[i - base], sflow[i - base])
                    };
                    if fl < cp && dist[u] + c < dist[v] - 1e-12 {
                        dist[v] = dist[u] + c;
                        from[v] = Some((i, true));
                        improved = true;
                    }
                    if fl > 0.0 && dist[v] - c < dist[u] - 1e-12 {
                        dist[u] = dist[v] - c;
                        from[u] = Some((i, false));
                        improved = true;
                    }
                }
                if !improved {
                    break;
                }
            }
            if dist[t].is_infinite() {
                return None; // infeasible
            }
            // bottleneck
            let mut d = f64::INFINITY;
            let mut w = t;
            while w != s {
                let (i, fwd) = from[w].unwrap();
                let (u, v, _) = all[i];
                let (cp, fl) =
                    if i < base { (cap[i], flow[i]) } else { (scap[i - base], sflow[i - base]) };
                d = d.min(if fwd { cp - fl } else { fl });
                w = if fwd { u } else { v };
            }
            let mut w = t;
            while w != s {
                let (i, fwd) = from[w].unwrap();
                let (u, v, c) = all[i];
                if i < base {
                    flow[i] += if fwd { d } else { -d };
                } else {
                    sflow[i - base] += if fwd { d } else { -d };
                }
                total += if fwd { c * d } else { -c * d };
                w = if fwd { u } else { v };
            }
            sent += d;
            let _ = cap.len();
        }
        Some(total)
    }

    fn lcg(state: &mut u64) -> u64 {
        *state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        *state >> 33
    }

    #[test]
    fn matches_ssp_oracle_on_random_instances() {
        let mut seed = 42u64;
        for trial in 0..30 {
            let n = 4 + (lcg(&mut seed) % 6) as usize;
            let m = n + (lcg(&mut seed) % (2 * n as u64)) as usize;
            let mut arcs = Vec::new();
            for _ in 0..m {
                let u = (lcg(&mut seed) % n as u64) as usize;
                let mut v = (lcg(&mut seed) % n as u64) as usize;
                if u == v {
                    v = (v + 1) % n;
                }
                let cap = (1 + lcg(&mut seed) % 8) as f64;
                let cost = (lcg(&mut seed) % 20) as f64;
                arcs.push((u, v, cap, cost));
            }
            // Balanced random supplies, kept small so feasibility is likely.
            let mut supply = vec![0.0; n];
            let amount = (1 + lcg(&mut seed) % 3) as f64;
            let a = (lcg(&mut seed) % n as u64) as usize;
            let mut b = (lcg(&mut seed) % n as u64) as usize;
            if a == b {
                b = (b + 1) % n;
            }
            supply[a] = amount;
            supply[b] = -amount;

            let mut mcf = MinCostFlow::new(n);
            for &(u, v, cap, cost) in &arcs {
                mcf.add_arc(u, v, cap, cost);
            }
            for (i, &s) in supply.iter().enumerate() {
                mcf.set_supply(i, s);
            }
            let got = mcf.solve();
            let want = ssp_min_cost(n, &arcs, &supply);
            match (got, want) {
                (Ok(sol), Some(obj)) => {
                    assert!(
                        (sol.objective - obj).abs() < 1e-6,
                        "trial {trial}: simplex {} vs oracle {obj}",
                        sol.objective
                    );
                }
                (Err(_), None) => {}
                (g, w) => panic!("trial {trial}: feasibility disagreement {g:?} vs {w:?}"),
            }
        }
    }

    #[test]
    fn potentials_certify_optimality() {
        // 2 sources, 3 sinks transportation instance.
        let costs = [[4.0, 2.0, 5.0], [3.0, 6.0, 1.0]];
        let mut mcf = MinCostFlow::new(5);
        for i in 0..2 {
            for j in 0..3 {
                mcf.add_arc(i, 2 + j, 10.0, costs[i][j]);
            }
        }
        mcf.set_supply(0, 2.0);
        mcf.set_supply(1, 2.0);
        for j in 0..3 {
            mcf.set_supply(2 + j, if j < 2 { -1.0 } else { -2.0 });
        }
        let sol = mcf.solve().unwrap();
        // optimum: x->sink1 (2), y->sink2 (1@3? ) compute: supply0=2, supply1=2,
        // demands (1,1,2). Best: src0 covers sink1 (cost 2) + sink0 (4) = 6;
        // src1 covers sink2 twice (1+1). total 8.
        assert!((sol.objective - 8.0).abs() < 1e-9);
        // reduced-cost optimality on every arc
        for i in 0..2 {
            for j in 0..3 {
                let a = i * 3 + j;
                let r = costs[i][j] + sol.potential[i] - sol.potential[2 + j];
                if sol.flow[a] < 1e-9 {
                    assert!(r >= -1e-9);
                } else if sol.flow[a] > 10.0 - 1e-9 {
                    assert!(r <= 1e-9);
                } else {
                    assert!(r.abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn infeasible_supplies_detected() {
        let mut mcf = MinCostFlow::new(2);
        mcf.add_arc(0, 1, 1.0, 1.0);
        mcf.set_supply(0, 5.0);
        mcf.set_supply(1, -5.0);
        assert!(mcf.solve().is_err()); // capacity 1 < required 5

        let mut mcf = MinCostFlow::new(2);
        mcf.add_arc(0, 1, 1.0, 1.0);
        mcf.set_supply(0, 2.0);
        mcf.set_supply(1, -1.0);
        assert!(mcf.solve().is_err()); // unbalanced
    }
}
