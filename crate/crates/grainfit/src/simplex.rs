//! Dense two-phase primal simplex for small general LPs (the SVM-style
//! boundary LP has no flow structure, so the network solver does not apply).
//!
//! Variables are nonnegative; rows may be `<=`, `=` or `>=`. Free variables
//! must be split by the caller. Dantzig pricing with a Bland fallback guards
//! against cycling on degenerate instances.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone)]
pub struct DenseLp {
    num_vars: usize,
    objective: Vec<f64>,
    rows: Vec<(Vec<f64>, Sense, f64)>,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
}

const TOL: f64 = 1e-9;

impl DenseLp {
    /// Minimize `objective . x` subject to rows added later, `x >= 0`.
    pub fn minimize(objective: Vec<f64>) -> Self {
        DenseLp { num_vars: objective.len(), objective, rows: Vec::new() }
    }

    pub fn add_row(&mut self, coeffs: Vec<f64>, sense: Sense, rhs: f64) {
        debug_assert_eq!(coeffs.len(), self.num_vars);
        self.rows.push((coeffs, sense, rhs));
    }

    pub fn solve(&self) -> Result<LpSolution> {
        let n = self.num_vars;
        let m = self.rows.len();
        if m == 0 {
            return Ok(LpSolution { x: vec![0.0; n], objective: 0.0 });
        }
        // Standard form: x, then one slack/surplus per inequality row, then
        // one artificial per row; rows flipped so rhs >= 0.
        let num_slack = self.rows.iter().filter(|r| r.1 != Sense::Eq).count();
        let total = n + num_slack + m;
        // tableau[r] = row of length total + 1 (rhs last)
        let mut t = vec![vec![0.0f64; total + 1]; m];
        let mut basis = vec![0usize; m];
        let mut slack_idx = 0usize;
        for (r, (coeffs, sense, rhs)) in self.rows.iter().enumerate() {
            let flip = if *rhs < 0.0 { -1.0 } else { 1.0 };
            for (j, &a) in coeffs.iter().enumerate() {
                t[r][j] = flip * a;
            }
            t[r][total] = flip * rhs;
            if *sense != Sense::Eq {
                let s = match sense {
                    Sense::Le => 1.0,
                    Sense::Ge => -1.0,
                    Sense::Eq => unreachable!(),
                };
                t[r][n + slack_idx] = flip * s;
                slack_idx += 1;
            }
            let art = n + num_slack + r;
            t[r][art] = 1.0;
            basis[r] = art;
        }
        // Phase 1: minimize sum of artificials.
        let mut cost1 = vec![0.0f64; total];
        for j in n + num_slack..total {
            cost1[j] = 1.0;
        }
        let phase1 = Self::run(&mut t, &mut basis, &cost1, total)?;
        if phase1 > 1e-7 {
            return Err(Error::Infeasible(format!(
                "LP infeasible (phase-1 objective {phase1:.3e})"
            )));
        }
        // Pivot any artificial still in the basis out (or its row is
        // redundant and can stay with zero value; forbid re-entry below).
        for r in 0..m {
            if basis[r] >= n + num_slack {
                if let Some(j) = (0..n + num_slack).find(|&j| t[r][j].abs() > 1e-7) {
                    Self::pivot(&mut t, &mut basis, r, j);
                }
            }
        }
        // Phase 2 on the real objective, artificial columns disabled.
        let mut cost2 = vec![0.0f64; total];
        cost2[..n].copy_from_slice(&self.objective);
        for j in n + num_slack..total {
            cost2[j] = f64::INFINITY; // never priced in
        }
        let obj = Self::run(&mut t, &mut basis, &cost2, n + num_slack)?;
        let mut x = vec![0.0f64; n];
        for (r, &b) in basis.iter().enumerate() {
            if b < n {
                x[b] = t[r][total];
            }
        }
        Ok(LpSolution { x, objective: obj })
    }

    /// Primal simplex on the current tableau; prices only columns < limit.
    /// Returns the optimal objective value for `cost`.
    fn run(t: &mut [Vec<f64>], basis: &mut [usize], cost: &[f64], limit: usize) -> Result<f64> {
        let m = t.len();
        let total = t[0].len() - 1;
        // reduced costs maintained implicitly: z_j = cost_j - cb . column_j
        let mut iters = 0usize;
        loop {
            iters += 1;
            if iters > 200_000 {
                return Err(Error::Numerical("simplex iteration limit exceeded".into()));
            }
            let bland = iters > 20_000;
            let mut enter = usize::MAX;
            let mut best = -TOL;
            for j in 0..limit {
                if cost[j].is_infinite() || basis.contains(&j) {
                    continue;
                }
                let mut red = cost[j];
                for r in 0..m {
                    if cost[basis[r]].is_finite() && cost[basis[r]] != 0.0 {
                        red -= cost[basis[r]] * t[r][j];
                    }
                }
                if red < best {
                    best = red;
                    enter = j;
                    if bland {
                        break;
                    }
                }
            }
            if enter == usize::MAX {
                let obj = (0..m)
                    .map(|r| if cost[basis[r]].is_finite() { cost[basis[r]] * t[r][total] } else { 0.0 })
                    .sum();
                return Ok(obj);
            }
            // ratio test
            let mut leave = usize::MAX;
            let mut best_ratio = f64::INFINITY;
            for r in 0..m {
                if t[r][enter] > TOL {
                    let ratio = t[r][total] / t[r][enter];
                    if ratio < best_ratio - TOL
                        || (ratio < best_ratio + TOL
                            && (leave == usize::MAX || basis[r] < basis[leave]))
                    {
                        best_ratio = ratio;
                        leave = r;
                    }
                }
            }
            if leave == usize::MAX {
                return Err(Error::Numerical("LP is unbounded".into()));
            }
            Self::pivot(t, basis, leave, enter);
        }
    }

    fn pivot(t: &mut [Vec<f64>], basis: &mut [usize], r: usize, j: usize) {
        let m = t.len();
        let piv = t[r][j];
        for v in t[r].iter_mut() {
            *v /= piv;
        }
        for i in 0..m {
            if i != r && t[i][j].abs() > 0.0 {
                let f = t[i][j];
                // borrow juggling: clone the pivot row once
                let (pr, ri) = if i < r {
                    let (a, b) = t.split_at_mut(r);
                    (&b[0], &mut a[i])
                } else {
                    let (a, b) = t.split_at_mut(i);
                    (&a[r], &mut b[0])
                };
                for (x, &p) in ri.iter_mut().zip(pr.iter()) {
                    *x -= f * p;
                }
            }
        }
        basis[r] = j;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netflow::MinCostFlow;
    use approx::assert_relative_eq;

    #[test]
    fn textbook_maximization() {
        // max 3x + 5y s.t. x <= 4, 2y <= 12, 3x + 2y <= 18 -> (2, 6), 36.
        let mut lp = DenseLp::minimize(vec![-3.0, -5.0]);
        lp.add_row(vec![1.0, 0.0], Sense::Le, 4.0);
        lp.add_row(vec![0.0, 2.0], Sense::Le, 12.0);
        lp.add_row(vec![3.0, 2.0], Sense::Le, 18.0);
        let s = lp.solve().unwrap();
        assert_relative_eq!(s.objective, -36.0, epsilon = 1e-8);
        assert_relative_eq!(s.x[0], 2.0, epsilon = 1e-8);
        assert_relative_eq!(s.x[1], 6.0, epsilon = 1e-8);
    }

    #[test]
    fn equality_and_ge_rows() {
        // min x + 2y s.t. x + y = 3, x >= 1 -> (3, 0) obj 3
        let mut lp = DenseLp::minimize(vec![1.0, 2.0]);
        lp.add_row(vec![1.0, 1.0], Sense::Eq, 3.0);
        lp.add_row(vec![1.0, 0.0], Sense::Ge, 1.0);
        let s = lp.solve().unwrap();
        assert_relative_eq!(s.objective, 3.0, epsilon = 1e-8);
        assert_relative_eq!(s.x[0], 3.0, epsilon = 1e-8);
    }

    #[test]
    fn infeasible_detected() {
        let mut lp = DenseLp::minimize(vec![1.0]);
        lp.add_row(vec![1.0], Sense::Le, 1.0);
        lp.add_row(vec![1.0], Sense::Ge, 2.0);
        assert!(lp.solve().is_err());
    }

    #[test]
    fn unbounded_detected() {
        let mut lp = DenseLp::minimize(vec![-1.0]);
        lp.add_row(vec![-1.0], Sense::Le, 1.0);
        assert!(lp.solve().is_err());
    }

    #[test]
    fn negative_rhs_handled() {
        // min x s.t. -x <= -2  (i.e. x >= 2)
        let mut lp = DenseLp::minimize(vec![1.0]);
        lp.add_row(vec![-1.0], Sense::Le, -2.0);
        let s = lp.solve().unwrap();
        assert_relative_eq!(s.x[0], 2.0, epsilon = 1e-8);
    }

    /// Cross-check against the independent network-simplex solver on random
    /// transportation LPs.
    #[test]
    fn agrees_with_network_simplex_on_transportation() {
        let mut seed = 7u64;
        let mut lcg = move || {
            seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            seed >> 33
        };
        for _ in 0..10 {
            let ns = 3;
            let nd = 4;
            let costs: Vec<f64> = (0..ns * nd).map(|_| (lcg() % 30) as f64).collect();
            let demand = [2.0, 1.0, 3.0, 2.0];
            let supply = [3.0, 3.0, 2.0];
            // dense LP: vars x_ij >= 0; rows: per source sum = supply, per
            // dest sum = demand
            let mut lp = DenseLp::minimize(costs.clone());
            for i in 0..ns {
                let mut row = vec![0.0; ns * nd];
                for j in 0..nd {
                    row[i * nd + j] = 1.0;
                }
                lp.add_row(row, Sense::Eq, supply[i]);
            }
            for j in 0..nd {
                let mut row = vec![0.0; ns * nd];
                for i in 0..ns {
                    row[i * nd + j] = 1.0;
                }
                lp.add_row(row, Sense::Eq, demand[j]);
            }
            let dense = lp.solve().unwrap();

            let mut mcf = MinCostFlow::new(ns + nd);
            for i in 0..ns {
                for j in 0..nd {
                    mcf.add_arc(i, ns + j, f64::MAX / 4.0, costs[i * nd + j]);
                }
            }
            for i in 0..ns {
                mcf.set_supply(i, supply[i]);
            }
            for j in 0..nd {
                mcf.set_supply(ns + j, -demand[j]);
            }
            let flow = mcf.solve().unwrap();
            assert_relative_eq!(dense.objective, flow.objective, epsilon = 1e-6);
        }
    }
}
