//! Dense two-phase simplex and the discretized best-response problem.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prior::Prior;

const PIVOT_TOL: f64 = 1e-9;
const COST_TOL: f64 = 1e-10;
const PRIMAL_TOL: f64 = 1e-11;
const FEAS_TOL: f64 = 1e-9;
const DEGENERATE_RUN: usize = 50;
const REINVERT_EVERY: usize = 64;
const MAX_PIVOTS: usize = 200_000;

/// One constraint: `coef . x <= rhs` or `coef . x = rhs`.
#[derive(Debug, Clone)]
pub struct LpRow {
    pub coef: Vec<f64>,
    pub rhs: f64,
    pub equality: bool,
}

/// Constraint matrix with slack and artificial columns, kept pristine so the
/// working tableau can be rebuilt from the current basis.
struct Tableau {
    rows: usize,
    width: usize,
    original: Vec<f64>,
    data: Vec<f64>,
    basis: Vec<usize>,
    cost: Vec<f64>,
    pivots: usize,
}

impl Tableau {
    fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.width + j]
    }

    fn eliminate(data: &mut [f64], width: usize, rows: usize, pr: usize, pc: usize) {
        let p = data[pr * width + pc];
        for j in 0..width {
            data[pr * width + j] /= p;
        }
        let pivot_row: Vec<f64> = data[pr * width..(pr + 1) * width].to_vec();
        for i in 0..rows {
            if i == pr {
                continue;
            }
            let f = data[i * width + pc];
            if f == 0.0 {
                continue;
            }
            let row = &mut data[i * width..(i + 1) * width];
            for (x, &y) in row.iter_mut().zip(&pivot_row) {
                *x -= f * y;
            }
            row[pc] = 0.0;
        }
    }

    fn pivot(&mut self, pr: usize, pc: usize) {
        Self::eliminate(&mut self.data, self.width, self.rows + 1, pr, pc);
        self.basis[pr] = pc;
        self.pivots += 1;
    }

    /// Objective row for maximising `cost`: reduced costs, negative entries improve.
    fn price(&mut self) {
        let w = self.width;
        let obj = self.rows * w;
        for j in 0..w {
            self.data[obj + j] = if j < self.cost.len() { -self.cost[j] } else { 0.0 };
        }
        for i in 0..self.rows {
            let cb = self.cost.get(self.basis[i]).copied().unwrap_or(0.0);
            if cb != 0.0 {
                for j in 0..w {
                    self.data[obj + j] += cb * self.data[i * w + j];
                }
            }
        }
    }

    /// Rebuilds B^{-1} [A | b] from the original matrix by Gauss-Jordan
    /// elimination with partial pivoting over the basic columns.
    fn reinvert(&mut self) {
        let (w, m) = (self.width, self.rows);
        let mut data = self.original.clone();
        let mut assigned = vec![false; m];
        let mut basis = vec![usize::MAX; m];
        for &col in &self.basis {
            let best = (0..m)
                .filter(|&i| !assigned[i])
                .max_by(|&a, &b| data[a * w + col].abs().total_cmp(&data[b * w + col].abs()));
            match best {
                Some(r) if data[r * w + col].abs() > 1e-12 => {
                    Self::eliminate(&mut data, w, m, r, col);
                    assigned[r] = true;
                    basis[r] = col;
                }
                _ => {}
            }
        }
        // Rows left without a basic column keep their slack or artificial.
        for i in 0..m {
            if basis[i] == usize::MAX {
                let col = (self.cost.len()..w - 1)
                    .find(|&j| !basis.contains(&j) && data[i * w + j].abs() > 1e-12)
                    .expect("every row owns a slack or artificial column");
                Self::eliminate(&mut data, w, m, i, col);
                basis[i] = col;
            }
        }
        data.extend(std::iter::repeat(0.0).take(w));
        self.data = data;
        self.basis = basis;
        self.price();
    }

    /// Maximises the current objective. Columns at or beyond `allowed` never enter.
    fn optimise(&mut self, allowed: usize) -> Result<()> {
        let rhs = self.width - 1;
        let obj = self.rows;
        let mut degenerate = 0usize;
        let mut since_reinvert = 0usize;
        loop {
            if since_reinvert >= REINVERT_EVERY {
                self.reinvert();
                since_reinvert = 0;
            }
            let bland = degenerate >= DEGENERATE_RUN;
            let mut enter = None;
            let mut best = -COST_TOL;
            for j in 0..allowed {
                let d = self.at(obj, j);
                if d < best {
                    enter = Some(j);
                    if bland {
                        break;
                    }
                    best = d;
                }
            }
            let Some(pc) = enter else {
                if since_reinvert == 0 {
                    return Ok(());
                }
                self.reinvert();
                since_reinvert = 0;
                continue;
            };
            // Harris ratio test: a relaxed bound first, then the largest pivot under it.
            let mut bound = f64::INFINITY;
            for i in 0..self.rows {
                let a = self.at(i, pc);
                if a > PIVOT_TOL {
                    bound = bound.min((self.at(i, rhs).max(0.0) + PRIMAL_TOL) / a);
                }
            }
            if bound == f64::INFINITY {
                return Err(Error::Lp("objective is unbounded".into()));
            }
            let mut leave: Option<usize> = None;
            for i in 0..self.rows {
                let a = self.at(i, pc);
                if a <= PIVOT_TOL || self.at(i, rhs).max(0.0) / a > bound {
                    continue;
                }
                leave = match leave {
                    None => Some(i),
                    Some(k) => {
                        let better = if bland {
                            self.basis[i] < self.basis[k]
                        } else {
                            a > self.at(k, pc)
                        };
                        Some(if better { i } else { k })
                    }
                };
            }
            let pr = leave.expect("the bound is attained by some row");
            if self.at(pr, rhs).max(0.0) / self.at(pr, pc) <= 1e-14 {
                degenerate += 1;
            } else {
                degenerate = 0;
            }
            self.pivot(pr, pc);
            since_reinvert += 1;
            if self.pivots > MAX_PIVOTS {
                return Err(Error::Lp(format!("no convergence after {MAX_PIVOTS} pivots")));
            }
        }
    }
}

/// Maximises `c . x` subject to the rows and x >= 0. Returns the optimal x and
/// the number of pivots.
pub fn simplex_max(c: &[f64], rows: &[LpRow]) -> Result<(Vec<f64>, usize)> {
    let nx = c.len();
    let m = rows.len();
    if rows.iter().any(|r| r.coef.len() != nx) {
        return Err(Error::Lp("row length differs from the objective".into()));
    }
    let n_slack = rows.iter().filter(|r| !r.equality).count();
    let n_art = rows.iter().filter(|r| r.equality || r.rhs < 0.0).count();
    let art0 = nx + n_slack;
    let width = art0 + n_art + 1;
    let mut original = vec![0.0; m * width];
    let mut basis = vec![0; m];
    let (mut slack, mut art) = (nx, art0);
    for (i, r) in rows.iter().enumerate() {
        let sign = if r.rhs < 0.0 { -1.0 } else { 1.0 };
        for j in 0..nx {
            original[i * width + j] = sign * r.coef[j];
        }
        original[i * width + width - 1] = sign * r.rhs;
        if !r.equality {
            original[i * width + slack] = sign;
            if sign > 0.0 {
                basis[i] = slack;
            }
            slack += 1;
        }
        if r.equality || sign < 0.0 {
            original[i * width + art] = 1.0;
            basis[i] = art;
            art += 1;
        }
    }
    let mut data = original.clone();
    data.extend(std::iter::repeat(0.0).take(width));
    let mut phase_one = vec![0.0; art0 + n_art];
    for x in &mut phase_one[art0..] {
        *x = -1.0;
    }
    let mut t = Tableau {
        rows: m,
        width,
        original,
        data,
        basis,
        cost: phase_one,
        pivots: 0,
    };
    t.price();
    t.optimise(art0)?;
    let infeasibility: f64 = (0..m)
        .filter(|&i| t.basis[i] >= art0)
        .map(|i| t.at(i, width - 1))
        .sum();
    if infeasibility > FEAS_TOL {
        return Err(Error::Lp(format!("infeasible: artificial mass {infeasibility:e} remains")));
    }
    for i in 0..m {
        if t.basis[i] >= art0 {
            if let Some(j) = (0..art0).find(|&j| t.at(i, j).abs() > 1e-9) {
                t.pivot(i, j);
            }
        }
    }

    let mut cost = c.to_vec();
    cost.resize(art0 + n_art, 0.0);
    t.cost = cost;
    t.reinvert();
    t.optimise(art0)?;

    let mut x = vec![0.0; nx];
    for i in 0..m {
        if t.basis[i] < nx {
            x[t.basis[i]] = t.at(i, width - 1);
        }
    }
    Ok((x, t.pivots))
}

/// How the prior enters the discretized problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Discretization {
    /// F's mass of the cell around each node sits on the node; convex-order
    /// constraints at the nodes against that discrete prior.
    CellMass,
    /// Convex-order constraints against the exact integrated cdf of F at the
    /// nodes and at the crossings of its tangents, so every feasible point is
    /// a mean-preserving contraction of F itself.
    Certified,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub value: f64,
    pub grid: Vec<f64>,
    pub masses: Vec<f64>,
    pub pivots: usize,
}

fn stop_loss_row(grid: &[f64], x: f64, rhs: f64) -> LpRow {
    LpRow {
        coef: grid.iter().map(|&v| (x - v).max(0.0)).collect(),
        rhs,
        equality: false,
    }
}

/// Best response over distributions supported on `grid`: maximises the
/// expected payoff subject to the mean and convex-order constraints.
pub fn best_response_oracle(
    u_values: &[f64],
    prior: &Prior,
    grid: &[f64],
    disc: Discretization,
) -> Result<OracleResult> {
    let m = grid.len();
    if m < 3 || u_values.len() != m {
        return Err(Error::Lp("grid and payoff values must match, with at least 3 nodes".into()));
    }
    if grid.windows(2).any(|w| !(w[0] < w[1])) || grid[0] != 0.0 || grid[m - 1] != 1.0 {
        return Err(Error::Lp("grid must increase strictly from 0 to 1".into()));
    }
    let mut rows = vec![LpRow {
        coef: vec![1.0; m],
        rhs: 1.0,
        equality: true,
    }];
    match disc {
        Discretization::CellMass => {
            let mut edges = vec![0.0];
            edges.extend(grid.windows(2).map(|w| 0.5 * (w[0] + w[1])));
            edges.push(1.0);
            let f: Vec<f64> = edges
                .windows(2)
                .map(|e| prior.cdf_at(e[1]) - prior.cdf_at(e[0]))
                .collect();
            let mean: f64 = f.iter().zip(grid).map(|(p, v)| p * v).sum();
            rows.push(LpRow {
                coef: grid.to_vec(),
                rhs: mean,
                equality: true,
            });
            for &x in &grid[1..m - 1] {
                let rhs = f.iter().zip(grid).map(|(p, v)| p * (x - v).max(0.0)).sum();
                rows.push(stop_loss_row(grid, x, rhs));
            }
        }
        Discretization::Certified => {
            rows.push(LpRow {
                coef: grid.to_vec(),
                rhs: prior.mean(),
                equality: true,
            });
            let pi: Vec<f64> = grid.iter().map(|&v| prior.integral_cdf(0.0, v)).collect();
            let fv: Vec<f64> = grid.iter().map(|&v| prior.cdf_at(v)).collect();
            for k in 1..m - 1 {
                rows.push(stop_loss_row(grid, grid[k], pi[k]));
            }
            for k in 0..m - 1 {
                let (f0, f1) = (fv[k], fv[k + 1]);
                if f1 - f0 <= 1e-15 {
                    continue;
                }
                let x = (pi[k + 1] - pi[k] + f0 * grid[k] - f1 * grid[k + 1]) / (f0 - f1);
                if !(x > grid[k] && x < grid[k + 1]) {
                    continue;
                }
                let t = pi[k] + f0 * (x - grid[k]);
                rows.push(stop_loss_row(grid, x, t.max(0.0)));
            }
        }
    }
    let (x, pivots) = simplex_max(u_values, &rows)?;
    let masses: Vec<f64> = x.iter().map(|&g| g.max(0.0)).collect();
    let value = masses.iter().zip(u_values).map(|(g, u)| g * u).sum();
    Ok(OracleResult {
        value,
        grid: grid.to_vec(),
        masses,
        pivots,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::posterior::grid_with;

    #[test]
    fn small_lp() {
        // max 3x + 2y, x + y <= 4, x + 3y <= 6, x <= 3
        let rows = vec![
            LpRow { coef: vec![1.0, 1.0], rhs: 4.0, equality: false },
            LpRow { coef: vec![1.0, 3.0], rhs: 6.0, equality: false },
            LpRow { coef: vec![1.0, 0.0], rhs: 3.0, equality: false },
        ];
        let (x, _) = simplex_max(&[3.0, 2.0], &rows).unwrap();
        assert!((x[0] - 3.0).abs() < 1e-12 && (x[1] - 1.0).abs() < 1e-12);
        let rows = vec![LpRow { coef: vec![1.0, 1.0], rhs: 1.0, equality: true }];
        let (x, _) = simplex_max(&[1.0, 2.0], &rows).unwrap();
        assert!((x[1] - 1.0).abs() < 1e-12);
        let rows = vec![
            LpRow { coef: vec![1.0, 1.0], rhs: 1.0, equality: true },
            LpRow { coef: vec![1.0, 1.0], rhs: 3.0, equality: true },
        ];
        assert!(simplex_max(&[1.0, 1.0], &rows).is_err());
    }

    #[test]
    fn convex_payoff_prefers_full_disclosure() {
        let p = Prior::Uniform;
        let grid = grid_with(101, &[]);
        let u: Vec<f64> = grid.iter().map(|v| v * v).collect();
        let res = best_response_oracle(&u, &p, &grid, Discretization::CellMass).unwrap();
        let exact: f64 = {
            let mut e = vec![0.0];
            e.extend(grid.windows(2).map(|w| 0.5 * (w[0] + w[1])));
            e.push(1.0);
            e.windows(2).zip(&grid).map(|(w, v)| (w[1] - w[0]) * v * v).sum()
        };
        assert!((res.value - exact).abs() < 1e-10, "{} vs {exact}", res.value);
    }

    #[test]
    fn indicator_payoff_pools_above_cutoff() {
        let p = Prior::Uniform;
        let grid = grid_with(101, &[0.3]);
        let u: Vec<f64> = grid.iter().map(|&v| if v >= 0.3 { 1.0 } else { 0.0 }).collect();
        for disc in [Discretization::CellMass, Discretization::Certified] {
            let res = best_response_oracle(&u, &p, &grid, disc).unwrap();
            assert!((res.value - 1.0).abs() < 1e-10);
        }
    }
}
