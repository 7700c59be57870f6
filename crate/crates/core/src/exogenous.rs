//! Equilibrium for a fixed reservation value r.

use serde::{Deserialize, Serialize};

use crate::candidate::{candidate_exists, solve_beta, BetaSolution, Candidate};
use crate::error::{invariant, Error, Result};
use crate::posterior::PosteriorDistribution;
use crate::prior::Prior;
use crate::roots::bisect;
use crate::tolerances::{ENDPOINT_GUARD, ROOT_ABS_TOL, STRUCT_TOL, Z_TIE_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    NoDisclosureAtBottom,
    DisclosureAtBottom,
    /// Only arises with no inexperienced consumers.
    FullDisclosure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExogEquilibrium {
    pub r: f64,
    pub v_l_eq: f64,
    pub n: u32,
    pub alpha: f64,
    /// None for full disclosure.
    pub candidate: Option<Candidate>,
    pub posterior: PosteriorDistribution,
    pub eta: f64,
    pub alpha_tilde: f64,
    pub regime: Regime,
}

/// Probability that a firm is visited when each firm's value lies below r with
/// probability g: (1 - g^n) / (n (1 - g)).
pub fn visit_probability(g: f64, n: u32) -> f64 {
    let nf = n as f64;
    if 1.0 - g < 1e-9 {
        let e = 1.0 - g;
        return 1.0 - (nf - 1.0) * e / 2.0;
    }
    (1.0 - g.powi(n as i32)) / (nf * (1.0 - g))
}

/// Posterior probability that a visitor is inexperienced.
pub fn posterior_belief(alpha: f64, eta: f64) -> f64 {
    alpha * eta / (alpha * eta + 1.0 - alpha)
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if alpha == 1.0 {
        return Err(Error::UnsupportedBoundary { alpha });
    }
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::Domain(format!("alpha = {alpha} outside [0, 1)")));
    }
    Ok(())
}

pub(crate) fn check_model(prior: &Prior, n: u32) -> Result<()> {
    if n < 2 {
        return Err(Error::Domain(format!("n = {n} must be at least 2")));
    }
    if !prior.check_convexity(n) {
        return Err(Error::InvalidPrior(format!("F^(n-1) is not convex for n = {n}")));
    }
    Ok(())
}

fn z_from(prior: &Prior, n: u32, alpha: f64, v_l: f64, r: f64, beta: f64) -> f64 {
    let g = prior.cdf_at(v_l);
    let eta = visit_probability(g, n);
    alpha * (eta - g.powi(n as i32 - 1)) - (1.0 - alpha) * beta * (r - v_l)
}

/// Continuity gap of the multiplier at v_L, scaled by the visit weight.
pub fn z_function(prior: &Prior, n: u32, alpha: f64, v_l: f64, r: f64) -> Result<f64> {
    let sol = solve_beta(prior, n, v_l, r)?;
    Ok(z_from(prior, n, alpha, v_l, r, sol.beta))
}

/// Reservation value below which nothing under r is disclosed.
pub fn r_lower_bar(prior: &Prior, n: u32, alpha: f64) -> Result<f64> {
    check_model(prior, n)?;
    if !(alpha > 0.0 && alpha < 1.0) {
        check_alpha(alpha)?;
        return Err(Error::Domain("r_lower_bar needs alpha in (0, 1)".into()));
    }
    let mu = prior.mean();
    Ok(bisect(ENDPOINT_GUARD, mu - ENDPOINT_GUARD, ROOT_ABS_TOL, |r| {
        z_function(prior, n, alpha, 0.0, r).map_or(true, |z| z < 0.0)
    }))
}

/// Smallest v_L admitting a candidate at r.
fn feasible_floor(prior: &Prior, n: u32, r: f64) -> f64 {
    if candidate_exists(prior, n, 0.0, r) {
        return 0.0;
    }
    bisect(0.0, r, ROOT_ABS_TOL, |v| candidate_exists(prior, n, v, r))
}

/// The equilibrium lower threshold at r with its slope solution.
pub(crate) fn lower_threshold(
    prior: &Prior,
    n: u32,
    alpha: f64,
    r: f64,
) -> Result<(f64, BetaSolution, f64)> {
    if candidate_exists(prior, n, 0.0, r) {
        let sol = solve_beta(prior, n, 0.0, r)?;
        let z0 = z_from(prior, n, alpha, 0.0, r, sol.beta);
        if z0 >= -Z_TIE_TOL {
            return Ok((0.0, sol, 0.0));
        }
    }
    let lo = feasible_floor(prior, n, r);
    let v_l = bisect(lo, r, ROOT_ABS_TOL, |v| {
        if !candidate_exists(prior, n, v, r) {
            return false;
        }
        z_function(prior, n, alpha, v, r).map_or(false, |z| z >= 0.0)
    });
    let sol = solve_beta(prior, n, v_l, r)?;
    Ok((v_l, sol, lo))
}

/// Z(v_L, v_L, r) crosses zero once, from below, on the feasible part of (lo, r).
fn assert_single_crossing(prior: &Prior, n: u32, alpha: f64, lo: f64, r: f64, root: f64) -> Result<()> {
    let mut seen_nonneg = false;
    for k in 1..=16 {
        let v = lo + (r - lo) * k as f64 / 17.0;
        if !candidate_exists(prior, n, v, r) {
            continue;
        }
        let z = z_function(prior, n, alpha, v, r)?;
        if z >= 0.0 {
            seen_nonneg = true;
        } else if seen_nonneg && z < -STRUCT_TOL {
            return Err(invariant(
                "Z crosses zero once in v_L",
                format!("Z = {z} < 0 at v_L = {v} above a nonnegative sample"),
            ));
        }
        if (v < root && z > STRUCT_TOL) || (v > root && z < -STRUCT_TOL) {
            return Err(invariant("Z crosses zero once in v_L", format!("Z = {z} at v_L = {v}, root {root}")));
        }
    }
    let h = 1e-6 * (r - lo);
    if root - h > lo && candidate_exists(prior, n, root - h, r) && root + h < r {
        let below = z_function(prior, n, alpha, root - h, r)?;
        let above = z_function(prior, n, alpha, root + h, r)?;
        if above <= below {
            return Err(invariant(
                "Z increasing at its root",
                format!("Z({}) = {below}, Z({}) = {above}", root - h, root + h),
            ));
        }
    }
    Ok(())
}

fn full_disclosure(prior: &Prior, n: u32, r: f64) -> ExogEquilibrium {
    let eta = visit_probability(prior.cdf_at(r), n);
    ExogEquilibrium {
        r,
        v_l_eq: r,
        n,
        alpha: 0.0,
        candidate: None,
        posterior: PosteriorDistribution::full_disclosure(prior),
        eta,
        alpha_tilde: 0.0,
        regime: Regime::FullDisclosure,
    }
}

/// Unique symmetric equilibrium when every inexperienced consumer holds reservation value r.
pub fn solve_exog(prior: &Prior, n: u32, alpha: f64, r: f64) -> Result<ExogEquilibrium> {
    check_model(prior, n)?;
    check_alpha(alpha)?;
    if !(r > 0.0 && r < 1.0) {
        return Err(Error::Domain(format!("r = {r} outside (0, 1)")));
    }
    if alpha == 0.0 {
        return Ok(full_disclosure(prior, n, r));
    }
    let (v_l, sol, lo) = lower_threshold(prior, n, alpha, r)?;
    if v_l > 0.0 {
        assert_single_crossing(prior, n, alpha, lo, r, v_l)?;
    }
    assemble(prior, n, alpha, r, v_l, sol)
}

pub(crate) fn assemble(
    prior: &Prior,
    n: u32,
    alpha: f64,
    r: f64,
    v_l: f64,
    sol: BetaSolution,
) -> Result<ExogEquilibrium> {
    let candidate = Candidate {
        v_l,
        r,
        beta: sol.beta,
        v_h: sol.v_h,
        v_t: sol.v_t,
        n,
        prior: prior.clone(),
    };
    candidate.validate(2001)?;
    let g = candidate.posterior()?;
    let gr = prior.cdf_at(v_l);
    let eta = visit_probability(gr, n);
    let alpha_tilde = posterior_belief(alpha, eta);

    let m = n as i32 - 1;
    let eta_g = g.expect(|v| if v >= r { g.cdf(v).powi(m) } else { 0.0 }, &[r]) / (1.0 - g.cdf_left(r));
    if (eta_g - eta).abs() > 1e-10 {
        return Err(invariant(
            "visit probability equals E_G[G^(n-1) | v >= r]",
            format!("{eta} vs {eta_g}"),
        ));
    }
    let regime = if v_l == 0.0 {
        let z0 = z_from(prior, n, alpha, 0.0, r, sol.beta);
        if z0 < -STRUCT_TOL {
            return Err(invariant("phi(0) >= 0 without disclosure at the bottom", format!("Z = {z0}")));
        }
        Regime::NoDisclosureAtBottom
    } else {
        let lhs = (1.0 - alpha) * sol.beta;
        let rhs = prior.power_slope(n, v_l);
        if lhs < rhs - STRUCT_TOL {
            return Err(invariant(
                "multiplier convex at v_L",
                format!("(1 - alpha) beta = {lhs} < slope {rhs}"),
            ));
        }
        Regime::DisclosureAtBottom
    };
    Ok(ExogEquilibrium {
        r,
        v_l_eq: v_l,
        n,
        alpha,
        candidate: Some(candidate),
        posterior: g,
        eta,
        alpha_tilde,
        regime,
    })
}
