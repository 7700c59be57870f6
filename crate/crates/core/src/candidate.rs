//! Structural equilibrium candidates for a given lower threshold and reservation value.
//!
//! Above r the candidate pools values so that G^{n-1} is affine with slope beta
//! until it meets F (at v_H) or reaches 1 (at v_T). The slope is pinned by
//! requiring the integrated cdf gap to vanish at v_H.

use serde::{Deserialize, Serialize};

use crate::error::{invariant, Error, Result};
use crate::posterior::{grid_with, PosteriorDistribution, Segment};
use crate::prior::Prior;
use crate::roots::{bisect, bisect_geometric};
use crate::tolerances::{BETA_ROUTE_TOL, MAX_DOUBLINGS, ROOT_REL_TOL, STRUCT_TOL};

const CONTACT_TOL: f64 = 1e-15;

/// Thresholds and slope describing the shape of G.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisclosureShape {
    pub v_l: f64,
    pub r: f64,
    pub v_h: f64,
    pub v_t: f64,
    pub beta: f64,
}

/// Roots and extremum of D(., beta).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RootBundle {
    pub v_m: f64,
    pub v_1d: Option<f64>,
    /// None when the upper root lies at or beyond 1.
    pub v_2d: Option<f64>,
    pub v_bar: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaSolution {
    pub beta: f64,
    pub v_h: f64,
    pub v_t: f64,
    pub roots: RootBundle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub v_l: f64,
    pub r: f64,
    pub beta: f64,
    pub v_h: f64,
    pub v_t: f64,
    pub n: u32,
    pub prior: Prior,
}

/// E_F[v | v > v_L] > r.
pub fn candidate_exists(prior: &Prior, _n: u32, v_l: f64, r: f64) -> bool {
    prior.upper_conditional_mean(v_l) > r + 1e-12
}

/// F(v_L)^{n-1} + beta (v - r) - F(v)^{n-1}.
pub fn d_function(prior: &Prior, n: u32, v_l: f64, r: f64, beta: f64, v: f64) -> f64 {
    let m = n as i32 - 1;
    prior.cdf_at(v_l).powi(m) + beta * (v - r) - prior.cdf_at(v).powi(m)
}

/// v_H(beta) together with the roots of D.
pub fn upper_contact(prior: &Prior, n: u32, v_l: f64, r: f64, beta: f64) -> Result<(f64, RootBundle)> {
    let m = n as i32 - 1;
    let c = prior.cdf_at(v_l).powi(m);
    let d = |v: f64| d_function(prior, n, v_l, r, beta, v);
    let v_bar = r + (1.0 - c) / beta;
    let d_one = d(1.0);

    if let Some(k) = prior.affine_power_slope(n) {
        if beta <= k || d_one < 0.0 {
            return Err(Error::NoUpperRoot { beta });
        }
        let v_1 = r + (prior.cdf_at(r).powi(m) - c) / (beta - k);
        let roots = RootBundle {
            v_m: 1.0,
            v_1d: Some(v_1.min(1.0)),
            v_2d: None,
            v_bar,
        };
        return Ok((1.0, roots));
    }

    let v_m = prior.slope_contact(n, beta, r, 1.0);
    let d_m = d(v_m);
    if d_one >= 0.0 {
        let v_1 = bisect(r, v_m, CONTACT_TOL, |v| d(v) >= 0.0);
        let roots = RootBundle {
            v_m,
            v_1d: Some(v_1),
            v_2d: None,
            v_bar,
        };
        return Ok((1.0, roots));
    }
    if d_m <= 0.0 {
        return Err(Error::NoUpperRoot { beta });
    }
    let v_1 = bisect(r, v_m, CONTACT_TOL, |v| d(v) >= 0.0);
    let v_2 = bisect(v_m, 1.0, CONTACT_TOL, |v| d(v) < 0.0);
    let roots = RootBundle {
        v_m,
        v_1d: Some(v_1),
        v_2d: Some(v_2),
        v_bar,
    };
    Ok((v_2, roots))
}

/// Integral of (c + beta (v - r))^{1/(n-1)} over [r, x].
fn affine_power_integral(n: u32, c: f64, beta: f64, r: f64, x: f64) -> f64 {
    let nf = n as f64;
    let p = nf / (nf - 1.0);
    let top = (c + beta * (x - r)).max(0.0);
    (top.powf(p) - c.powf(p)) * (nf - 1.0) / (nf * beta)
}

/// Integrated cdf gap H* at v_H(beta).
pub fn h_star(prior: &Prior, n: u32, v_l: f64, r: f64, beta: f64) -> Result<f64> {
    let (v_h, roots) = upper_contact(prior, n, v_l, r, beta)?;
    let c = prior.cdf_at(v_l).powi(n as i32 - 1);
    let v_t = roots.v_bar.min(1.0);
    let top = v_h.min(v_t);
    let int_g = affine_power_integral(n, c, beta, r, top) + (v_h - v_t).max(0.0);
    Ok(prior.integral_cdf(v_l, v_h) - prior.cdf_at(v_l) * (r - v_l) - int_g)
}

/// Limit of H* as beta grows without bound: (1 - F(v_L)) (r - E[v | v > v_L]).
pub fn h_star_limit(prior: &Prior, v_l: f64, r: f64) -> f64 {
    (1.0 - prior.cdf_at(v_l)) * (r - prior.upper_conditional_mean(v_l))
}

/// Slope from the truncated moments on [v_L, v_H].
pub fn beta_closed_form(prior: &Prior, n: u32, v_l: f64, r: f64, v_h: f64) -> Result<f64> {
    let tm = prior.truncated_moments(v_l, v_h, n)?;
    let c = prior.cdf_at(v_l).powi(n as i32 - 1);
    Ok((tm.eta_tilde - c) / (tm.mu_tilde - r))
}

/// Slope beta with H*(beta) = 0, with the implied v_H and v_T.
pub fn solve_beta(prior: &Prior, n: u32, v_l: f64, r: f64) -> Result<BetaSolution> {
    if n < 2 {
        return Err(Error::Domain(format!("n = {n} must be at least 2")));
    }
    if !(0.0 <= v_l && v_l < r && r < 1.0) {
        return Err(Error::Domain(format!("need 0 <= v_L < r < 1, got v_L = {v_l}, r = {r}")));
    }
    if !candidate_exists(prior, n, v_l, r) {
        return Err(Error::InfeasibleCandidate { v_l, r });
    }
    let positive = |beta: f64| match h_star(prior, n, v_l, r, beta) {
        Ok(h) => h >= 0.0,
        Err(_) => true,
    };
    // In large markets beta is of order F(v_H)^{n-1}, far below one.
    let (mut lo, mut hi) = (1.0, 1.0);
    let mut steps = 0;
    if positive(hi) {
        while positive(hi) {
            lo = hi;
            hi *= 2.0;
            steps += 1;
            if steps > MAX_DOUBLINGS {
                return Err(Error::BracketFailure { what: "H*(beta)" });
            }
        }
    } else {
        while !positive(lo) {
            hi = lo;
            lo *= 1e-4;
            if lo < 1e-200 {
                return Err(Error::BracketFailure { what: "H*(beta)" });
            }
        }
    }
    let (lo, hi) = bisect_geometric(lo, hi, ROOT_REL_TOL, |b| !positive(b));
    let mut beta = 0.5 * (lo + hi);
    let (v_h, roots) = match upper_contact(prior, n, v_l, r, beta) {
        Ok(x) => x,
        Err(_) => {
            beta = hi;
            upper_contact(prior, n, v_l, r, beta)?
        }
    };
    Ok(BetaSolution {
        beta,
        v_h,
        v_t: roots.v_bar.min(1.0),
        roots,
    })
}

impl Candidate {
    pub fn solve(prior: &Prior, n: u32, v_l: f64, r: f64) -> Result<Self> {
        let sol = solve_beta(prior, n, v_l, r)?;
        Ok(Candidate {
            v_l,
            r,
            beta: sol.beta,
            v_h: sol.v_h,
            v_t: sol.v_t,
            n,
            prior: prior.clone(),
        })
    }

    pub fn shape(&self) -> DisclosureShape {
        DisclosureShape {
            v_l: self.v_l,
            r: self.r,
            v_h: self.v_h,
            v_t: self.v_t,
            beta: self.beta,
        }
    }

    /// F(v_L)^{n-1}.
    pub fn base(&self) -> f64 {
        self.prior.cdf_at(self.v_l).powi(self.n as i32 - 1)
    }

    /// The distribution G: F below v_L, flat to r, affine-power to
    /// min(v_H, v_T), then flat at 1 or back on F.
    pub fn posterior(&self) -> Result<PosteriorDistribution> {
        let mut segs = Vec::new();
        if self.v_l > 0.0 {
            segs.push(Segment::FullDisclosure { a: 0.0, b: self.v_l });
        }
        segs.push(Segment::Flat {
            a: self.v_l,
            b: self.r,
            level: self.prior.cdf_at(self.v_l),
        });
        let top = self.v_h.min(self.v_t);
        segs.push(Segment::AffinePower {
            a: self.r,
            b: top,
            base: self.base(),
            beta: self.beta,
            anchor: self.r,
            degree: self.n - 1,
        });
        if top < 1.0 {
            if self.v_t < 1.0 {
                segs.push(Segment::Flat { a: top, b: 1.0, level: 1.0 });
            } else {
                segs.push(Segment::FullDisclosure { a: top, b: 1.0 });
            }
        }
        PosteriorDistribution::new(self.prior.clone(), segs, vec![])
    }

    /// Slope computed from the truncated moments instead of from H*.
    pub fn beta_closed_form(&self) -> Result<f64> {
        beta_closed_form(&self.prior, self.n, self.v_l, self.r, self.v_h)
    }

    /// Checks the structural invariants of the candidate.
    pub fn validate(&self, grid_size: usize) -> Result<()> {
        let g = self.posterior()?;
        if self.v_h < 1.0 {
            let gap = (g.cdf(self.v_h) - self.prior.cdf_at(self.v_h)).abs();
            if gap > STRUCT_TOL {
                return Err(invariant("G(v_H) = F(v_H)", format!("gap {gap:e}")));
            }
        }
        let mpc = verify_mpc(&g, &self.prior, grid_size);
        if !mpc.pass {
            return Err(invariant(
                "G in MPC(F)",
                format!("min gap {:e}, mean error {:e}", mpc.min_gap, mpc.mean_error),
            ));
        }
        let b8 = self.beta_closed_form()?;
        if (b8 - self.beta).abs() > BETA_ROUTE_TOL * self.beta {
            return Err(invariant(
                "slope matches truncated-moment formula",
                format!("bisection {} vs closed form {}", self.beta, b8),
            ));
        }
        if (self.v_h < 1.0 && self.v_t < 1.0) || self.v_h > 1.0 || self.v_t > 1.0 {
            return Err(invariant(
                "disclosure at the top excludes v_T < 1",
                format!("v_H = {}, v_T = {}", self.v_h, self.v_t),
            ));
        }
        Ok(())
    }
}

/// Integral of F - G over [0, z].
pub fn h_gap(g: &PosteriorDistribution, prior: &Prior, z: f64) -> f64 {
    let z = z.clamp(0.0, 1.0);
    prior.integral_cdf(0.0, z) - g.integral_cdf(z)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MpcReport {
    pub min_gap: f64,
    pub mean_error: f64,
    pub pass: bool,
}

/// Whether G is a mean-preserving contraction of F, checked on a grid merged with
/// the breakpoints of G.
pub fn verify_mpc(g: &PosteriorDistribution, prior: &Prior, grid_size: usize) -> MpcReport {
    let pts = grid_with(grid_size, &g.breakpoints());
    let min_gap = pts
        .iter()
        .map(|&z| h_gap(g, prior, z))
        .fold(f64::INFINITY, f64::min);
    let mean_error = h_gap(g, prior, 1.0);
    MpcReport {
        min_gap,
        mean_error,
        pass: min_gap >= -STRUCT_TOL && mean_error.abs() <= STRUCT_TOL,
    }
}
