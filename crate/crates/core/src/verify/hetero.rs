//! Sufficient condition for the single-cost equilibrium to survive a
//! distribution of search costs among inexperienced consumers.

use serde::{Deserialize, Serialize};

use super::{multiplier_phi, payoff_u, PayoffContext};
use crate::endogenous::solve_endog;
use crate::error::{invariant, Error, Result};
use crate::posterior::grid_with;
use crate::prior::Prior;

/// Search costs of inexperienced consumers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CostDistribution {
    /// (cost, probability) pairs.
    Discrete { points: Vec<(f64, f64)> },
    /// Piecewise-linear cdf through (cost, K) knots, from K = 0 to K = 1.
    Continuous { knots: Vec<(f64, f64)> },
}

impl CostDistribution {
    pub fn validate(&self, mu: f64) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidCost(m));
        let pts = match self {
            CostDistribution::Discrete { points } => points,
            CostDistribution::Continuous { knots } => knots,
        };
        if pts.is_empty() {
            return bad("no support points".into());
        }
        if pts.windows(2).any(|w| !(w[0].0 < w[1].0)) {
            return bad("costs must increase strictly".into());
        }
        if !(pts[0].0 > 0.0) || !(pts[pts.len() - 1].0 < mu) {
            return bad(format!("support must lie inside (0, {mu})"));
        }
        match self {
            CostDistribution::Discrete { points } => {
                if points.iter().any(|p| !(p.1 > 0.0)) {
                    return bad("probabilities must be positive".into());
                }
                let total: f64 = points.iter().map(|p| p.1).sum();
                if (total - 1.0).abs() > 1e-12 {
                    return bad(format!("probabilities sum to {total}"));
                }
            }
            CostDistribution::Continuous { knots } => {
                if knots.len() < 2 || knots[0].1 != 0.0 || knots[knots.len() - 1].1 != 1.0 {
                    return bad("cdf knots must run from 0 to 1".into());
                }
                if knots.windows(2).any(|w| w[1].1 < w[0].1) {
                    return bad("cdf must be nondecreasing".into());
                }
                if !(knots[1].1 > 0.0) {
                    return bad("density at the lowest cost must be positive".into());
                }
            }
        }
        Ok(())
    }

    pub fn s_min(&self) -> f64 {
        match self {
            CostDistribution::Discrete { points } => points[0].0,
            CostDistribution::Continuous { knots } => knots[0].0,
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            CostDistribution::Discrete { points } => {
                points.iter().filter(|p| p.0 <= x).map(|p| p.1).sum::<f64>().min(1.0)
            }
            CostDistribution::Continuous { knots } => {
                if x <= knots[0].0 {
                    return 0.0;
                }
                for w in knots.windows(2) {
                    let ((s0, k0), (s1, k1)) = (w[0], w[1]);
                    if x <= s1 {
                        return k0 + (k1 - k0) * (x - s0) / (s1 - s0);
                    }
                }
                1.0
            }
        }
    }

    /// Inverse cdf.
    pub fn sample(&self, u01: f64) -> f64 {
        match self {
            CostDistribution::Discrete { points } => {
                let mut cum = 0.0;
                for &(s, p) in points {
                    cum += p;
                    if u01 < cum {
                        return s;
                    }
                }
                points[points.len() - 1].0
            }
            CostDistribution::Continuous { knots } => {
                for w in knots.windows(2) {
                    let ((s0, k0), (s1, k1)) = (w[0], w[1]);
                    if u01 < k1 && k1 > k0 {
                        return s0 + (s1 - s0) * (u01 - k0) / (k1 - k0);
                    }
                }
                knots[knots.len() - 1].0
            }
        }
    }

    /// Infimum of K(mu - v) / (r1 - v) over v in [0, r1), with r1 = mu - s_min,
    /// from the finitely many places it can occur.
    pub fn b_star(&self, mu: f64) -> f64 {
        let s1 = self.s_min();
        let at_zero = self.cdf(mu) / (mu - s1);
        match self {
            CostDistribution::Discrete { points } => {
                let mut cum = 0.0;
                let mut best = at_zero;
                for (j, &(s, p)) in points.iter().enumerate() {
                    if j > 0 && s <= mu {
                        best = best.min(cum / (s - s1));
                    }
                    cum += p;
                }
                best
            }
            CostDistribution::Continuous { knots } => {
                let density = (knots[1].1 - knots[0].1) / (knots[1].0 - knots[0].0);
                knots
                    .iter()
                    .skip(1)
                    .filter(|k| k.0 <= mu)
                    .map(|&(s, k)| k / (s - s1))
                    .fold(at_zero.min(density), f64::min)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeteroReport {
    pub n: u32,
    pub s_1: f64,
    /// Whether the single-cost equilibrium at s_1 conceals everything below r.
    pub conceals_bottom: bool,
    pub holds: bool,
    pub b_star: f64,
    /// Minimum of the same ratio over a grid, never below `b_star`.
    pub b_star_grid: f64,
    /// (1 - alpha_tilde) beta.
    pub lhs: f64,
    /// alpha_tilde b_star.
    pub rhs: f64,
    pub phi_at_zero: f64,
    pub phi_vs_uk_min_gap: f64,
}

/// Payoff with heterogeneous costs when firms keep the single-cost strategy at s_1.
pub fn payoff_uk(ctx: &PayoffContext, k: &CostDistribution, v: f64) -> f64 {
    if v < ctx.r {
        ctx.alpha_tilde * (1.0 - k.cdf(ctx.prior.mean() - v))
    } else {
        payoff_u(ctx, v)
    }
}

pub fn hetero_check(prior: &Prior, n: u32, alpha: f64, k: &CostDistribution) -> Result<HeteroReport> {
    let mu = prior.mean();
    k.validate(mu)?;
    let s1 = k.s_min();
    let eq = solve_endog(prior, n, alpha, s1)?;
    let ctx = PayoffContext::from_equilibrium(&eq);
    let r1 = mu - s1;
    let b_star = k.b_star(mu);

    let grid: Vec<f64> = (0..4000).map(|i| r1 * i as f64 / 4000.0).collect();
    let b_star_grid = grid
        .iter()
        .map(|&v| k.cdf(mu - v) / (r1 - v))
        .fold(f64::INFINITY, f64::min);
    if b_star_grid < b_star * (1.0 - 1e-12) {
        return Err(invariant(
            "b* is the infimum of the interpolation slope",
            format!("grid {b_star_grid} below closed form {b_star}"),
        ));
    }

    let mut extra = vec![r1, eq.r_star, eq.v_h_star, eq.v_t_star];
    let atoms: Vec<f64> = match k {
        CostDistribution::Discrete { points } => points.iter().map(|p| mu - p.0).collect(),
        CostDistribution::Continuous { knots } => knots.iter().map(|p| mu - p.0).collect(),
    };
    for a in atoms {
        extra.extend([a, a + 1e-12]);
    }
    let phi_vs_uk_min_gap = grid_with(2001, &extra)
        .into_iter()
        .map(|v| multiplier_phi(&ctx, v) - payoff_uk(&ctx, k, v))
        .fold(f64::INFINITY, f64::min);

    let conceals_bottom = eq.v_l_star == 0.0;
    let lhs = (1.0 - eq.alpha_tilde) * eq.beta_star;
    let rhs = eq.alpha_tilde * b_star;
    Ok(HeteroReport {
        n,
        s_1: s1,
        conceals_bottom,
        holds: conceals_bottom && lhs < rhs,
        b_star,
        b_star_grid,
        lhs,
        rhs,
        phi_at_zero: multiplier_phi(&ctx, 0.0),
        phi_vs_uk_min_gap,
    })
}

/// First n on the sequence 2, 4, 8, ... at which the condition holds.
pub fn first_holding_n(
    prior: &Prior,
    alpha: f64,
    k: &CostDistribution,
    cap: u32,
) -> Result<HeteroReport> {
    let mut n = 2u32;
    loop {
        let rep = hetero_check(prior, n, alpha, k)?;
        if rep.holds {
            return Ok(rep);
        }
        n = n.checked_mul(2).filter(|&m| m <= cap).ok_or_else(|| {
            Error::CapExceeded(format!("condition fails for every n up to {cap}"))
        })?;
    }
}
