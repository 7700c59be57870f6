//! Equilibrium with the reservation value pinned by the search cost.

use serde::{Deserialize, Serialize};

use crate::candidate::{candidate_exists, solve_beta, DisclosureShape};
use crate::error::{invariant, Error, Result};
use crate::exogenous::{
    check_alpha, check_model, lower_threshold, solve_exog, ExogEquilibrium, Regime,
};
use crate::posterior::{Atom, PosteriorDistribution, Segment};
use crate::prior::Prior;
use crate::roots::bisect;
use crate::tolerances::{ROOT_ABS_TOL, STRUCT_TOL, Z_TIE_TOL};

const N_CAP: u32 = 1 << 20;

/// Solved market with an endogenous reservation value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Equilibrium {
    pub prior: Prior,
    pub n: u32,
    pub alpha: f64,
    pub s: f64,
    pub r_star: f64,
    pub v_l_star: f64,
    pub v_h_star: f64,
    pub v_t_star: f64,
    pub beta_star: f64,
    pub eta: f64,
    pub alpha_tilde: f64,
    pub bottom_disclosure: bool,
    pub top_disclosure: bool,
    pub full_disclosure: bool,
    #[serde(rename = "G")]
    pub g: PosteriorDistribution,
}

/// Limit of the equilibrium distribution as the number of firms grows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitEquilibrium {
    pub v_h_inf: f64,
    pub atom_location: f64,
    pub atom_mass: f64,
    #[serde(rename = "G_inf")]
    pub g_inf: PosteriorDistribution,
}

fn check_cost(prior: &Prior, s: f64) -> Result<f64> {
    let mu = prior.mean();
    if !(s > 0.0 && s < mu) {
        return Err(Error::Domain(format!("s = {s} outside (0, {mu})")));
    }
    Ok(mu)
}

/// Expected gain from one more draw from F at reservation value r.
fn search_gain(prior: &Prior, v_l: f64, r: f64) -> f64 {
    prior.partial_mean(v_l, 1.0) - r * (1.0 - prior.cdf_at(v_l))
}

/// Reservation value under full disclosure.
pub fn r_full_info(prior: &Prior, s: f64) -> Result<f64> {
    check_cost(prior, s)?;
    Ok(bisect(0.0, 1.0, ROOT_ABS_TOL, |r| search_gain(prior, r, r) < s))
}

/// Reservation value consistent with search when G discloses F below v_L.
pub fn r_search(prior: &Prior, v_l: f64, s: f64) -> f64 {
    (prior.partial_mean(v_l, 1.0) - s) / (1.0 - prior.cdf_at(v_l))
}

impl Equilibrium {
    pub fn shape(&self) -> DisclosureShape {
        DisclosureShape {
            v_l: self.v_l_star,
            r: self.r_star,
            v_h: self.v_h_star,
            v_t: self.v_t_star,
            beta: self.beta_star,
        }
    }

    /// Equilibrium at the same r viewed as a fixed-reservation problem.
    pub fn exogenous(&self) -> ExogEquilibrium {
        ExogEquilibrium {
            r: self.r_star,
            v_l_eq: self.v_l_star,
            n: self.n,
            alpha: self.alpha,
            candidate: (!self.full_disclosure).then(|| crate::candidate::Candidate {
                v_l: self.v_l_star,
                r: self.r_star,
                beta: self.beta_star,
                v_h: self.v_h_star,
                v_t: self.v_t_star,
                n: self.n,
                prior: self.prior.clone(),
            }),
            posterior: self.g.clone(),
            eta: self.eta,
            alpha_tilde: self.alpha_tilde,
            regime: if self.full_disclosure {
                Regime::FullDisclosure
            } else if self.bottom_disclosure {
                Regime::DisclosureAtBottom
            } else {
                Regime::NoDisclosureAtBottom
            },
        }
    }

    /// Checks both forms of the search equation and the ranking against full information.
    pub fn validate(&self) -> Result<()> {
        let resid = search_gain(&self.prior, self.v_l_star, self.r_star) - self.s;
        if resid.abs() > STRUCT_TOL {
            return Err(invariant("search equation on F", format!("residual {resid:e}")));
        }
        let tail = (1.0 - self.r_star) - (self.g.integral_cdf(1.0) - self.g.integral_cdf(self.r_star));
        if (tail - self.s).abs() > 1e-8 {
            return Err(invariant("search equation on G", format!("residual {:e}", tail - self.s)));
        }
        if !self.full_disclosure {
            let r_fi = r_full_info(&self.prior, self.s)?;
            if self.r_star >= r_fi + 1e-12 {
                return Err(invariant(
                    "r* below the full-information reservation value",
                    format!("r* = {}, r_fi = {r_fi}", self.r_star),
                ));
            }
            if !self.bottom_disclosure && (self.r_star - (self.prior.mean() - self.s)).abs() > 1e-15 {
                return Err(invariant("r* = mu - s without disclosure at the bottom", format!("{}", self.r_star)));
            }
        }
        Ok(())
    }
}

fn from_exog(prior: &Prior, s: f64, ex: ExogEquilibrium) -> Equilibrium {
    let full = ex.regime == Regime::FullDisclosure;
    let (v_h, v_t, beta) = match &ex.candidate {
        Some(c) => (c.v_h, c.v_t, c.beta),
        None => (ex.r, 1.0, prior.power_slope(ex.n, ex.r)),
    };
    Equilibrium {
        prior: prior.clone(),
        n: ex.n,
        alpha: ex.alpha,
        s,
        r_star: ex.r,
        v_l_star: ex.v_l_eq,
        v_h_star: v_h,
        v_t_star: v_t,
        beta_star: beta,
        eta: ex.eta,
        alpha_tilde: ex.alpha_tilde,
        bottom_disclosure: ex.v_l_eq > 0.0,
        top_disclosure: v_h < 1.0,
        full_disclosure: full,
        g: ex.posterior,
    }
}

/// Whether the market conceals everything below r at r = mu - s.
fn conceals_bottom(prior: &Prior, n: u32, alpha: f64, s: f64) -> Result<bool> {
    let r0 = prior.mean() - s;
    if !candidate_exists(prior, n, 0.0, r0) {
        return Ok(false);
    }
    let sol = solve_beta(prior, n, 0.0, r0)?;
    let eta = 1.0 / n as f64;
    let z0 = alpha * eta - (1.0 - alpha) * sol.beta * r0;
    Ok(z0 >= -Z_TIE_TOL)
}

/// Unique symmetric equilibrium with search cost s.
pub fn solve_endog(prior: &Prior, n: u32, alpha: f64, s: f64) -> Result<Equilibrium> {
    check_model(prior, n)?;
    check_alpha(alpha)?;
    let mu = check_cost(prior, s)?;
    if alpha == 0.0 {
        let r = r_full_info(prior, s)?;
        let eq = from_exog(prior, s, solve_exog(prior, n, 0.0, r)?);
        eq.validate()?;
        return Ok(eq);
    }
    let r0 = mu - s;
    let r_star = if conceals_bottom(prior, n, alpha, s)? {
        r0
    } else {
        let r_fi = r_full_info(prior, s)?;
        bisect(r0 + 1e-12, r_fi - 1e-12, ROOT_ABS_TOL, |r| {
            lower_threshold(prior, n, alpha, r)
                .map_or(true, |(v_l, _, _)| r_search(prior, v_l, s) < r)
        })
    };
    let ex = solve_exog(prior, n, alpha, r_star)?;
    let eq = from_exog(prior, s, ex);
    if eq.r_star == r0 && eq.bottom_disclosure {
        return Err(invariant("regime split at mu - s", "disclosure at the bottom at r = mu - s"));
    }
    eq.validate()?;
    Ok(eq)
}

/// Smallest market size at which nothing below r* is disclosed.
pub fn n_lower_bar(prior: &Prior, alpha: f64, s: f64) -> Result<u32> {
    check_cost(prior, s)?;
    if !(alpha > 0.0 && alpha < 1.0) {
        check_alpha(alpha)?;
        return Err(Error::Domain("n_lower_bar needs alpha in (0, 1)".into()));
    }
    let holds = |n: u32| -> Result<bool> {
        check_model(prior, n)?;
        conceals_bottom(prior, n, alpha, s)
    };
    if holds(2)? {
        return Ok(2);
    }
    let mut lo = 2u32;
    let mut hi = 4u32;
    while !holds(hi)? {
        lo = hi;
        hi = hi.saturating_mul(2);
        if hi > N_CAP {
            return Err(Error::CapExceeded(format!("n_lower_bar beyond {N_CAP}")));
        }
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if holds(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Upper disclosure threshold of a large market, from
/// E_F[v | v < v_H] = v_H / n + (n - 1)(mu - s) / n.
pub fn v_h_large_n(prior: &Prior, n: u32, s: f64) -> Result<f64> {
    let mu = check_cost(prior, s)?;
    let r = mu - s;
    let nf = n as f64;
    let h = |v: f64| prior.partial_mean(0.0, v) - prior.cdf_at(v) * (v + (nf - 1.0) * r) / nf;
    if h(1.0) <= 0.0 {
        return Err(Error::NoInteriorRoot(format!("v_H = 1 at n = {n}")));
    }
    Ok(bisect(r, 1.0, ROOT_ABS_TOL, |v| h(v) > 0.0))
}

/// Pointwise limit of G as n grows: an atom at mu - s pooling [0, v_H_inf), F above.
pub fn limit_equilibrium(prior: &Prior, alpha: f64, s: f64) -> Result<LimitEquilibrium> {
    check_alpha(alpha)?;
    let mu = check_cost(prior, s)?;
    let r = mu - s;
    let v_h = bisect(r, 1.0, ROOT_ABS_TOL, |v| prior.partial_mean(0.0, v) - r * prior.cdf_at(v) > 0.0);
    let mass = prior.cdf_at(v_h);
    let g_inf = PosteriorDistribution::new(
        prior.clone(),
        vec![
            Segment::Flat { a: 0.0, b: r, level: 0.0 },
            Segment::Flat { a: r, b: v_h, level: mass },
            Segment::FullDisclosure { a: v_h, b: 1.0 },
        ],
        vec![Atom { location: r, mass }],
    )?;
    Ok(LimitEquilibrium {
        v_h_inf: v_h,
        atom_location: r,
        atom_mass: mass,
        g_inf,
    })
}

/// Sup distance between G and the limit over the midpoints of m equal cells.
/// The atom of the limit sits on a cell edge, where cdfs need not converge.
pub fn sup_distance_to_limit(g: &PosteriorDistribution, limit: &LimitEquilibrium, m: usize) -> f64 {
    let pts: Vec<f64> = (0..m.max(1)).map(|i| (i as f64 + 0.5) / m.max(1) as f64).collect();
    g.sup_distance(&limit.g_inf, &pts)
}
