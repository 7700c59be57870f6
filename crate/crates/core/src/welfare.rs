//! Consumer surplus, informativeness and comparative statics.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::endogenous::{solve_endog, Equilibrium};
use crate::error::Result;
use crate::exogenous::r_lower_bar;
use crate::posterior::{grid_with, PosteriorDistribution};
use crate::prior::Prior;

const VERDICT_TOL: f64 = 1e-9;

/// Expected maximum of n independent draws from G.
pub fn cs_savvy(g: &PosteriorDistribution, n: u32) -> f64 {
    1.0 - g.integral_cdf_pow(n as f64)
}

/// Expected maximum of n draws of min(v, r*), the surplus of a consumer who
/// searches with reservation value r*.
pub fn cs_inexperienced(eq: &Equilibrium) -> Result<f64> {
    let censored = eq.g.censor_above(eq.r_star)?;
    Ok(cs_savvy(&censored, eq.n))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurplusReport {
    pub cs_savvy: f64,
    pub cs_inexperienced: f64,
    pub bottom_disclosure: bool,
}

pub fn surplus(eq: &Equilibrium) -> Result<SurplusReport> {
    Ok(SurplusReport {
        cs_savvy: cs_savvy(&eq.g, eq.n),
        cs_inexperienced: cs_inexperienced(eq)?,
        bottom_disclosure: eq.bottom_disclosure,
    })
}

/// How the first distribution compares with the second.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    LessInformative,
    MoreInformative,
    EquallyInformative,
    Incomparable,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InformativenessVerdict {
    pub verdict: Verdict,
    /// min over z of the integral of G1 - G0 on [0, z].
    pub min_gap_forward: f64,
    /// min over z of the integral of G0 - G1 on [0, z].
    pub min_gap_backward: f64,
    /// Difference of the means, G0 minus G1.
    pub mean_gap: f64,
}

/// Ranks G0 against G1: G0 is less informative when it is a mean-preserving
/// contraction of G1.
pub fn informativeness_compare(
    g0: &PosteriorDistribution,
    g1: &PosteriorDistribution,
    grid_size: usize,
) -> InformativenessVerdict {
    let mut extra = g0.breakpoints();
    extra.extend(g1.breakpoints());
    let pts = grid_with(grid_size, &extra);
    let mut fwd = f64::INFINITY;
    let mut bwd = f64::INFINITY;
    for &z in &pts {
        let d = g1.integral_cdf(z) - g0.integral_cdf(z);
        fwd = fwd.min(d);
        bwd = bwd.min(-d);
    }
    let mean_gap = g0.mean() - g1.mean();
    let same_mean = mean_gap.abs() <= VERDICT_TOL;
    let less = same_mean && fwd >= -VERDICT_TOL;
    let more = same_mean && bwd >= -VERDICT_TOL;
    let verdict = match (less, more) {
        (true, true) => Verdict::EquallyInformative,
        (true, false) => Verdict::LessInformative,
        (false, true) => Verdict::MoreInformative,
        (false, false) => Verdict::Incomparable,
    };
    InformativenessVerdict {
        verdict,
        min_gap_forward: fwd,
        min_gap_backward: bwd,
        mean_gap,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchStats {
    pub p_stop_first: f64,
    pub p_multi_visit: f64,
    pub expected_visits: f64,
    pub eta: f64,
    pub alpha_tilde: f64,
}

/// Search behaviour of an inexperienced consumer in equilibrium.
pub fn search_stats(eq: &Equilibrium) -> SearchStats {
    let g = eq.prior.cdf_at(eq.v_l_star);
    let n = eq.n as f64;
    let expected_visits = if 1.0 - g < 1e-9 {
        n - n * (n - 1.0) * (1.0 - g) / 2.0
    } else {
        (1.0 - g.powi(eq.n as i32)) / (1.0 - g)
    };
    SearchStats {
        p_stop_first: 1.0 - g,
        p_multi_visit: g,
        expected_visits,
        eta: eq.eta,
        alpha_tilde: eq.alpha_tilde,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    N,
    S,
    Alpha,
}

/// One row of a comparative-statics sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub x: f64,
    pub r_star: Option<f64>,
    pub v_l_star: Option<f64>,
    pub v_h_star: Option<f64>,
    pub beta_star: Option<f64>,
    pub cs_savvy: Option<f64>,
    pub cs_inexperienced: Option<f64>,
    pub p_multi_visit: Option<f64>,
    pub verdict_vs_prev: Option<Verdict>,
    pub error: Option<String>,
}

/// Solved equilibria along one axis, in grid order.
pub fn sweep_equilibria(
    prior: &Prior,
    n: u32,
    alpha: f64,
    s: f64,
    axis: Axis,
    grid: &[f64],
) -> Vec<Result<Equilibrium>> {
    grid.par_iter()
        .map(|&x| match axis {
            Axis::N => {
                if x < 2.0 || x.fract() != 0.0 || x > u32::MAX as f64 {
                    return Err(crate::Error::Domain(format!("n = {x} is not an integer >= 2")));
                }
                solve_endog(prior, x as u32, alpha, s)
            }
            Axis::S => solve_endog(prior, n, alpha, x),
            Axis::Alpha => solve_endog(prior, n, x, s),
        })
        .collect()
}

/// Sweep rows with surplus, search statistics and a verdict of each row
/// against the previous solved row.
pub fn sweep(
    prior: &Prior,
    n: u32,
    alpha: f64,
    s: f64,
    axis: Axis,
    grid: &[f64],
    grid_size: usize,
) -> Vec<SweepRow> {
    let eqs = sweep_equilibria(prior, n, alpha, s, axis, grid);
    sweep_rows(grid, &eqs, grid_size)
}

fn sweep_rows(grid: &[f64], eqs: &[Result<Equilibrium>], grid_size: usize) -> Vec<SweepRow> {
    let surpluses: Vec<Option<Result<SurplusReport>>> = eqs
        .par_iter()
        .map(|e| e.as_ref().ok().map(surplus))
        .collect();
    let mut rows = Vec::with_capacity(grid.len());
    let mut prev: Option<&Equilibrium> = None;
    for ((&x, eq), sur) in grid.iter().zip(eqs.iter()).zip(surpluses) {
        let mut row = SweepRow {
            x,
            r_star: None,
            v_l_star: None,
            v_h_star: None,
            beta_star: None,
            cs_savvy: None,
            cs_inexperienced: None,
            p_multi_visit: None,
            verdict_vs_prev: None,
            error: None,
        };
        match (eq, sur) {
            (Ok(eq), Some(Ok(sur))) => {
                row.r_star = Some(eq.r_star);
                row.v_l_star = Some(eq.v_l_star);
                row.v_h_star = Some(eq.v_h_star);
                row.beta_star = Some(eq.beta_star);
                row.cs_savvy = Some(sur.cs_savvy);
                row.cs_inexperienced = Some(sur.cs_inexperienced);
                row.p_multi_visit = Some(search_stats(eq).p_multi_visit);
                row.verdict_vs_prev =
                    prev.map(|p| informativeness_compare(&eq.g, &p.g, grid_size).verdict);
                prev = Some(eq);
            }
            (Ok(_), Some(Err(e))) => row.error = Some(e.to_string()),
            (Err(e), _) => row.error = Some(e.to_string()),
            (Ok(_), None) => unreachable!("surplus is computed for every solved row"),
        }
        rows.push(row);
    }
    rows
}

pub fn write_sweep_csv<W: std::io::Write>(rows: &[SweepRow], axis: Axis, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let axis_name = match axis {
        Axis::N => "n",
        Axis::S => "s",
        Axis::Alpha => "alpha",
    };
    w.write_record([
        axis_name,
        "r_star",
        "v_L_star",
        "v_H_star",
        "beta_star",
        "cs_savvy",
        "cs_inexperienced",
        "p_multi_visit",
        "verdict_vs_prev",
        "error",
    ])?;
    let num = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
    for r in rows {
        w.write_record([
            r.x.to_string(),
            num(r.r_star),
            num(r.v_l_star),
            num(r.v_h_star),
            num(r.beta_star),
            num(r.cs_savvy),
            num(r.cs_inexperienced),
            num(r.p_multi_visit),
            r.verdict_vs_prev.map(|v| format!("{v:?}")).unwrap_or_default(),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdReport {
    pub s_bar: f64,
    /// Largest grid cost up to which every grid point below s_bar has v_H* = 1.
    pub s_lower_est: Option<f64>,
    /// First grid cost at which a lower cost stops being strictly more
    /// informative and better for both segments than `s_lower_est`.
    pub s_tilde_est: Option<f64>,
    pub grid_resolution: f64,
    /// Adjacent pairs above s_bar: the higher cost is more informative.
    pub informativeness_increasing_above: bool,
    pub cs_savvy_increasing_above: bool,
    pub cs_inexperienced_decreasing_above: bool,
    /// Adjacent pairs below s_lower_est: the lower cost is never less informative.
    pub never_less_informative_below: bool,
    pub rows: Vec<SweepRow>,
}

/// Locates the cost thresholds on a grid of search costs.
pub fn threshold_scan(
    prior: &Prior,
    n: u32,
    alpha: f64,
    s_grid: &[f64],
    grid_size: usize,
) -> Result<ThresholdReport> {
    let mu = prior.mean();
    if s_grid.windows(2).any(|w| !(w[0] < w[1])) || s_grid.iter().any(|&s| !(s > 0.0 && s < mu)) {
        return Err(crate::Error::Domain("cost grid must increase strictly inside (0, mu)".into()));
    }
    let s_bar = mu - r_lower_bar(prior, n, alpha)?;
    let solved = sweep_equilibria(prior, n, alpha, 0.0, Axis::S, s_grid);
    let rows = sweep_rows(s_grid, &solved, grid_size);
    let eqs: Vec<Equilibrium> = solved.into_iter().collect::<Result<_>>()?;
    let surplus: Vec<SurplusReport> = eqs.par_iter().map(surplus).collect::<Result<_>>()?;
    let grid_resolution = s_grid
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(0.0, f64::max);

    let mut lower = None;
    for (i, eq) in eqs.iter().enumerate() {
        if s_grid[i] < s_bar && eq.v_h_star == 1.0 {
            lower = Some(i);
        } else {
            break;
        }
    }

    let s_tilde_est = lower.map(|k| {
        let reference = &eqs[k];
        let first_fail = (0..k).find(|&j| {
            let v = informativeness_compare(&eqs[j].g, &reference.g, grid_size).verdict;
            !(v == Verdict::MoreInformative
                && surplus[j].cs_savvy > surplus[k].cs_savvy
                && surplus[j].cs_inexperienced > surplus[k].cs_inexperienced)
        });
        s_grid[first_fail.unwrap_or(k)]
    });

    let above: Vec<usize> = (0..eqs.len()).filter(|&i| s_grid[i] > s_bar).collect();
    let pairs_above = above.windows(2);
    let mut inf_up = true;
    let mut css_up = true;
    let mut csi_down = true;
    for w in pairs_above {
        let (i, j) = (w[0], w[1]);
        inf_up &= informativeness_compare(&eqs[j].g, &eqs[i].g, grid_size).verdict
            == Verdict::MoreInformative;
        css_up &= surplus[j].cs_savvy > surplus[i].cs_savvy;
        csi_down &= surplus[j].cs_inexperienced < surplus[i].cs_inexperienced;
    }
    let never_less = match lower {
        Some(k) => (0..k).all(|i| {
            informativeness_compare(&eqs[i].g, &eqs[i + 1].g, grid_size).verdict
                != Verdict::LessInformative
        }),
        None => true,
    };
    Ok(ThresholdReport {
        s_bar,
        s_lower_est: lower.map(|k| s_grid[k]),
        s_tilde_est,
        grid_resolution,
        informativeness_increasing_above: inf_up,
        cs_savvy_increasing_above: css_up,
        cs_inexperienced_decreasing_above: csi_down,
        never_less_informative_below: never_less,
        rows,
    })
}
