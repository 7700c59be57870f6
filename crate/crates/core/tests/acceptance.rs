//! Acceptance suite: one PASS/FAIL line per criterion, with runtime limits.
//!
//! Run with `cargo test -p disclose-eq-core --test acceptance`; the report
//! goes to stderr.

use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use disclose_eq::candidate::Candidate;
use disclose_eq::endogenous::{
    limit_equilibrium, n_lower_bar, solve_endog, sup_distance_to_limit, v_h_large_n, Equilibrium,
};
use disclose_eq::exogenous::{r_lower_bar, solve_exog};
use disclose_eq::montecarlo::{simulate_market, CostModel, SimConfig, SimReport};
use disclose_eq::posterior::grid_with;
use disclose_eq::verify::{
    certified_deviation, check_dm_conditions, first_holding_n, hetero_check, oracle_compare, CostDistribution,
    Discretization, PayoffContext, ORACLE_GAP_CONSTANT,
};
use disclose_eq::welfare::{cs_inexperienced, informativeness_compare, search_stats, threshold_scan, Verdict};
use disclose_eq::Prior;

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn uniform_closed_form() -> Check {
    let u = Prior::Uniform;
    let mut worst_v: f64 = 0.0;
    let mut worst_b: f64 = 0.0;
    let mut worst_r: f64 = 0.0;
    for i in 1..=9 {
        let alpha = i as f64 / 10.0;
        let rb = r_lower_bar(&u, 2, alpha).map_err(|e| e.to_string())?;
        worst_r = worst_r.max((rb - alpha / 2.0).abs());
        for j in 1..=19 {
            let r = j as f64 / 20.0;
            let eq = solve_exog(&u, 2, alpha, r).map_err(|e| format!("alpha {alpha} r {r}: {e}"))?;
            let v_l = ((2.0 * r - alpha) / (2.0 - alpha)).max(0.0);
            // 1 / (1 - 2r) stands for +infinity once r >= 1/2.
            let beta = if r < 0.5 {
                (1.0 / (1.0 - alpha)).min(1.0 / (1.0 - 2.0 * r))
            } else {
                1.0 / (1.0 - alpha)
            };
            let cand = eq.candidate.as_ref().ok_or(format!("alpha {alpha} r {r}: full disclosure"))?;
            worst_v = worst_v.max((eq.v_l_eq - v_l).abs());
            worst_b = worst_b.max((cand.beta - beta).abs());
        }
    }
    ensure(worst_v <= 1e-8 && worst_b <= 1e-8 && worst_r <= 1e-10, || {
        format!("max errors v_L {worst_v:e}, beta {worst_b:e}, r_lower {worst_r:e}")
    })?;
    Ok(format!("171 points; max |dv_L| {worst_v:.1e}, |dbeta| {worst_b:.1e}, |dr_lower| {worst_r:.1e}"))
}

fn endogenous_uniform_oracle() -> Check {
    let u = Prior::Uniform;
    let mut worst: f64 = 0.0;
    let mut exact = 0;
    let mut interior = 0;
    for alpha in [0.3, 0.5, 0.65, 0.8] {
        for s in [0.02, 0.05, 0.1, 0.15] {
            let eq = solve_endog(&u, 2, alpha, s).map_err(|e| format!("alpha {alpha} s {s}: {e}"))?;
            if s < (1.0 - alpha) / 2.0 {
                let k = (2.0 * s / (1.0 - alpha)).sqrt();
                let v_l = 1.0 - k;
                let r = 1.0 - (2.0 - alpha) / 2.0 * k;
                worst = worst.max((eq.v_l_star - v_l).abs()).max((eq.r_star - r).abs());
                interior += 1;
            } else {
                ensure(eq.r_star == 0.5 - s && eq.v_l_star == 0.0, || {
                    format!("alpha {alpha} s {s}: r* {} v_L* {}", eq.r_star, eq.v_l_star)
                })?;
                exact += 1;
            }
        }
    }
    ensure(worst <= 1e-8, || format!("max closed-form error {worst:e}"))?;
    Ok(format!("{interior} interior cases within {worst:.1e}; {exact} no-bottom cases exact"))
}

fn certificate_suite() -> Check {
    let priors = [
        Prior::Uniform,
        Prior::power(1.5).unwrap(),
        Prior::power(2.0).unwrap(),
        Prior::power(3.0).unwrap(),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let params: Vec<(Prior, u32, f64, f64)> = (0..100)
        .map(|_| {
            let p = priors[rng.random_range(0..priors.len())].clone();
            let n = rng.random_range(2..=8);
            let alpha = rng.random_range(0.05..0.95);
            let s = p.mean() * rng.random_range(0.02..0.9);
            (p, n, alpha, s)
        })
        .collect();
    let results: Vec<Result<(f64, f64), String>> = params
        .par_iter()
        .map(|(p, n, alpha, s)| {
            let tag = format!("{p:?} n={n} alpha={alpha:.4} s={s:.4}");
            let eq = solve_endog(p, *n, *alpha, *s).map_err(|e| format!("{tag}: {e}"))?;
            let rep = check_dm_conditions(&PayoffContext::from_equilibrium(&eq), 2001);
            if rep.pass && rep.dual_gap.abs() <= 1e-8 && rep.payoff_identity_gap.abs() <= 1e-9 {
                Ok((rep.dual_gap.abs(), rep.payoff_identity_gap.abs()))
            } else {
                Err(format!("{tag}: {rep:?}"))
            }
        })
        .collect();
    let failures: Vec<&String> = results.iter().filter_map(|r| r.as_ref().err()).collect();
    ensure(failures.is_empty(), || {
        format!("{} of 100 fail; first: {}", failures.len(), failures[0])
    })?;
    let (dual, ident) = results
        .iter()
        .flatten()
        .fold((0.0f64, 0.0f64), |(a, b), &(x, y)| (a.max(x), b.max(y)));
    Ok(format!("100 equilibria pass DM1-DM4; max |dual gap| {dual:.1e}, max |payoff identity| {ident:.1e}"))
}

fn lp_oracle() -> Check {
    let cases = [
        (Prior::Uniform, 2u32, 0.65, 0.1),
        (Prior::power(2.0).unwrap(), 3, 0.5, 0.05),
        (Prior::Uniform, 5, 0.5, 0.1),
    ];
    let mut summary = Vec::new();
    let mut calibration: f64 = 0.0;
    let mut min_gain = f64::INFINITY;
    for (p, n, alpha, s) in cases {
        let tag = format!("{p:?} n={n} alpha={alpha}");
        let eq = solve_endog(&p, n, alpha, s).map_err(|e| format!("{tag}: {e}"))?;
        let ctx = PayoffContext::from_equilibrium(&eq);
        let mut gaps = Vec::new();
        for m in [101usize, 201, 401] {
            let (cmp, _) = oracle_compare(&ctx, m, Discretization::CellMass).map_err(|e| format!("{tag}: {e}"))?;
            gaps.push(cmp.gap);
            calibration = calibration.max(m as f64 * cmp.gap);
        }
        // Gaps within round-off of zero count as zero.
        let clean: Vec<f64> = gaps.iter().map(|&g| if g.abs() <= 1e-12 { 0.0 } else { g }).collect();
        ensure(clean.iter().all(|&g| g >= 0.0), || format!("{tag}: negative gap {gaps:?}"))?;
        ensure(clean[1] <= clean[0] && clean[2] <= clean[1], || format!("{tag}: gaps not shrinking {gaps:?}"))?;
        ensure(clean[1] < ORACLE_GAP_CONSTANT / 201.0, || {
            format!("{tag}: gap {} at m = 201 above {}", gaps[1], ORACLE_GAP_CONSTANT / 201.0)
        })?;
        summary.push(format!("{:.1e}/{:.1e}/{:.1e}", gaps[0], gaps[1], gaps[2]));

        let mut perturbed = Vec::new();
        for d in [0.05, -0.05, 0.01, -0.01] {
            if eq.v_l_star + d >= 0.0 {
                perturbed.push((eq.v_l_star + d, eq.r_star));
            }
        }
        for d in [0.01, -0.01] {
            perturbed.push((eq.v_l_star, eq.r_star + d));
        }
        for (v_l, r) in perturbed {
            let Ok(c) = Candidate::solve(&p, n, v_l, r) else {
                continue;
            };
            let cx = PayoffContext::from_candidate(&c, alpha).map_err(|e| e.to_string())?;
            let dev = certified_deviation(&cx, 201).map_err(|e| format!("{tag} v_L {v_l} r {r}: {e}"))?;
            ensure(dev.gain > 0.0, || format!("{tag} v_L {v_l} r {r}: certified gain {}", dev.gain))?;
            min_gain = min_gain.min(dev.gain);
        }
    }
    Ok(format!(
        "gaps at m=101/201/401: {}; max m*gap {calibration:.1e} vs bound constant {ORACLE_GAP_CONSTANT}; min certified gain {min_gain:.1e}",
        summary.join(", ")
    ))
}

fn market_structure() -> Check {
    let u = Prior::Uniform;
    let (alpha, s) = (0.5, 0.1);
    let n_bar = n_lower_bar(&u, alpha, s).map_err(|e| e.to_string())?;
    ensure(n_bar > 2, || format!("n_lower_bar = {n_bar}"))?;
    let top = 2 * n_bar + 2;
    let eqs: Vec<Equilibrium> = (2..=top)
        .into_par_iter()
        .map(|n| solve_endog(&u, n, alpha, s))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let at = |n: u32| &eqs[(n - 2) as usize];
    for n in 2..=top {
        let p = search_stats(at(n)).p_multi_visit;
        if n < n_bar {
            ensure(p > 0.0, || format!("n = {n} below n_lower_bar has no multi-visit probability"))?;
        } else {
            ensure(p == 0.0, || format!("n = {n} has multi-visit probability {p}"))?;
        }
    }
    let mut worst_root: f64 = 0.0;
    for n in n_bar..=top {
        let root = v_h_large_n(&u, n, s).map_err(|e| e.to_string())?;
        worst_root = worst_root.max((at(n).v_h_star - root).abs());
        if n < top {
            ensure(at(n + 1).v_h_star < at(n).v_h_star, || format!("v_H not decreasing at n = {n}"))?;
            let v = informativeness_compare(&at(n + 1).g, &at(n).g, 2001).verdict;
            ensure(v == Verdict::MoreInformative, || format!("G({}) vs G({n}): {v:?}", n + 1))?;
        }
    }
    ensure(worst_root <= 1e-6, || format!("v_H off its large-market root by {worst_root:e}"))?;
    let cs: Vec<f64> = eqs
        .iter()
        .map(cs_inexperienced)
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let large_max = cs[(n_bar - 2) as usize..].iter().copied().fold(f64::MIN, f64::max);
    let large_err = cs[(n_bar - 2) as usize..]
        .iter()
        .map(|c| (c - 0.4).abs())
        .fold(0.0, f64::max);
    let small_min = cs[..(n_bar - 2) as usize].iter().copied().fold(f64::MAX, f64::min);
    ensure(small_min > large_max && large_err <= 1e-10, || {
        format!("CS_i small-market min {small_min}, large-market max {large_max}, |CS_i - 0.4| {large_err:e}")
    })?;
    Ok(format!(
        "n_lower_bar = {n_bar}; n = 2..{top} checked; |v_H - root| <= {worst_root:.1e}; CS_i below n_lower_bar >= {small_min:.6} > 0.4"
    ))
}

fn infinite_market() -> Check {
    let u = Prior::Uniform;
    let (alpha, s) = (0.5, 0.1);
    let lim = limit_equilibrium(&u, alpha, s).map_err(|e| e.to_string())?;
    ensure(
        (lim.v_h_inf - 0.8).abs() <= 1e-10 && (lim.atom_mass - 0.8).abs() <= 1e-10 && (lim.atom_location - 0.4).abs() <= 1e-12,
        || format!("{} {} {}", lim.v_h_inf, lim.atom_mass, lim.atom_location),
    )?;
    let n_bar = n_lower_bar(&u, alpha, s).map_err(|e| e.to_string())?;
    let dists: Vec<f64> = (0..=6)
        .into_par_iter()
        .map(|k| {
            let eq = solve_endog(&u, n_bar << k, alpha, s)?;
            Ok(sup_distance_to_limit(&eq.g, &lim, 2001))
        })
        .collect::<Result<_, disclose_eq::Error>>()
        .map_err(|e| e.to_string())?;
    ensure(dists.windows(2).all(|w| w[1] < w[0]), || format!("distances {dists:?}"))?;
    Ok(format!(
        "v_H_inf = {:.12}, atom {:.12} at {:.12}; sup distance {:.3e} -> {:.3e} over n = {n_bar}..{}",
        lim.v_h_inf,
        lim.atom_mass,
        lim.atom_location,
        dists[0],
        dists[6],
        n_bar << 6
    ))
}

fn search_cost_statics() -> Check {
    let u = Prior::Uniform;
    let (n, alpha) = (2, 0.5);
    let mu = u.mean();
    let mut grid = vec![1e-6];
    grid.extend((0..48).map(|i| 0.005 + 0.49 * i as f64 / 47.0));
    grid.push(mu - 1e-4);
    let rep = threshold_scan(&u, n, alpha, &grid, 2001).map_err(|e| e.to_string())?;
    let pts = grid_with(2001, &[]);
    let first = solve_endog(&u, n, alpha, grid[0]).map_err(|e| e.to_string())?;
    let last = solve_endog(&u, n, alpha, grid[49]).map_err(|e| e.to_string())?;
    let d_lo = first.g.sup_distance_to_prior(&[pts.clone(), first.g.breakpoints()].concat());
    let d_hi = last.g.sup_distance_to_prior(&[pts, last.g.breakpoints()].concat());
    ensure(d_lo < 1e-3 && d_hi < 1e-3, || format!("boundary distances {d_lo:e}, {d_hi:e}"))?;
    ensure(
        rep.informativeness_increasing_above && rep.cs_savvy_increasing_above && rep.cs_inexperienced_decreasing_above,
        || format!("above s_bar: {rep:?}"),
    )?;
    let exact = rep
        .rows
        .iter()
        .filter(|r| r.x > rep.s_bar)
        .map(|r| (r.cs_inexperienced.unwrap() - (mu - r.x)).abs())
        .fold(0.0, f64::max);
    ensure(exact <= 1e-10, || format!("CS_i differs from mu - s by {exact:e} above s_bar"))?;
    ensure(rep.never_less_informative_below, || "an adjacent pair below s_lower is LessInformative".into())?;
    let s_lower = rep.s_lower_est.ok_or("no grid point with v_H = 1")?;
    ensure(s_lower > 0.0 && s_lower <= rep.s_bar + rep.grid_resolution, || {
        format!("s_lower {s_lower} vs s_bar {}", rep.s_bar)
    })?;
    Ok(format!(
        "50 costs; s_bar = {:.6}, s_lower ~ {s_lower:.6}, s_tilde ~ {:?}; boundary distances {d_lo:.1e}, {d_hi:.1e}",
        rep.s_bar, rep.s_tilde_est
    ))
}

fn sim_config(n: u32, alpha: f64, s: f64, parallel: bool) -> SimConfig {
    SimConfig {
        consumers: 1_000_000,
        seed: 20_250_101,
        n,
        alpha,
        cost_model: CostModel::SingleCost(s),
        bins: 10,
        parallel,
    }
}

fn monte_carlo() -> Check {
    let (n, alpha, s) = (2, 0.65, 0.1);
    let eq = solve_endog(&Prior::Uniform, n, alpha, s).map_err(|e| e.to_string())?;
    let ctx = PayoffContext::from_equilibrium(&eq);
    let a = simulate_market(&ctx, &sim_config(n, alpha, s, true)).map_err(|e| e.to_string())?;
    let b = simulate_market(&ctx, &sim_config(n, alpha, s, true)).map_err(|e| e.to_string())?;
    let c = simulate_market(&ctx, &sim_config(n, alpha, s, false)).map_err(|e| e.to_string())?;
    ensure(a == b, || "rerun with the same seed differs".into())?;
    ensure(a == c, || "serial and parallel runs differ".into())?;
    let z = a.z_scores.ok_or("no analytic comparison")?;
    let scores = [z.eta, z.cs_savvy, z.cs_inexperienced, z.multi_search];
    ensure(scores.iter().all(|x| x.is_some_and(|v| v.abs() <= 3.0)) && z.max_share <= 3.0 && z.max_curve <= 3.0, || {
        format!("{z:?}")
    })?;
    let below = a.conditional_sale_curve.iter().filter(|b| b.bin_right <= ctx.r && b.u_hat.is_some()).count();
    let above = a.conditional_sale_curve.iter().filter(|b| b.bin_left >= ctx.r && b.u_hat.is_some()).count();
    ensure(below > 0 && above > 0, || "payoff curve not estimated on both sides of r".into())?;

    let big = solve_endog(&Prior::Uniform, 30, 0.5, 0.1).map_err(|e| e.to_string())?;
    let big_rep: SimReport = simulate_market(&PayoffContext::from_equilibrium(&big), &sim_config(30, 0.5, 0.1, true))
        .map_err(|e| e.to_string())?;
    ensure(big_rep.multi_search_freq == 0.0, || format!("large market multi-search {}", big_rep.multi_search_freq))?;
    Ok(format!(
        "1e6 consumers; max |z| {:.2} (eta {:.2}, CS_s {:.2}, CS_i {:.2}, shares {:.2}, curve {:.2}); reruns and serial/parallel identical",
        z.max_abs(),
        z.eta.unwrap(),
        z.cs_savvy.unwrap(),
        z.cs_inexperienced.unwrap(),
        z.max_share,
        z.max_curve
    ))
}

fn truncated_linear() -> CostDistribution {
    // Density proportional to 0.35 - c on [0.05, 0.3], cdf through knots every 0.05.
    let (lo, hi, top) = (0.05f64, 0.3f64, 0.35f64);
    let norm = (top - lo).powi(2) - (top - hi).powi(2);
    let knots = (0..=5)
        .map(|i| {
            let c = lo + 0.05 * i as f64;
            let k = ((top - lo).powi(2) - (top - c).powi(2)) / norm;
            (c, if i == 5 { 1.0 } else { k })
        })
        .collect();
    CostDistribution::Continuous { knots }
}

fn heterogeneity() -> Check {
    let u = Prior::Uniform;
    let alpha = 0.5;
    let mut found = Vec::new();
    for (name, k) in [
        ("two-point", CostDistribution::Discrete { points: vec![(0.1, 0.5), (0.2, 0.5)] }),
        ("truncated-linear", truncated_linear()),
    ] {
        let rep = first_holding_n(&u, alpha, &k, 1 << 12).map_err(|e| format!("{name}: {e}"))?;
        ensure(rep.holds && rep.phi_vs_uk_min_gap >= -1e-9, || format!("{name}: {rep:?}"))?;
        found.push(format!("{name} holds at n = {} (min phi - u_K {:.1e})", rep.n, rep.phi_vs_uk_min_gap));
    }
    let single = CostDistribution::Discrete { points: vec![(0.1, 1.0)] };
    for n in [2, 8, 19, 32] {
        let rep = hetero_check(&u, n, alpha, &single).map_err(|e| e.to_string())?;
        let eq = solve_endog(&u, n, alpha, 0.1).map_err(|e| e.to_string())?;
        ensure(rep.holds == (eq.v_l_star == 0.0 && rep.phi_at_zero > 0.0), || format!("single point at n = {n}: {rep:?}"))?;
    }
    Ok(format!("{}; single-point K matches the standard check", found.join("; ")))
}

#[test]
fn acceptance_criteria() {
    let criteria: [(&str, fn() -> Check, Option<Duration>); 9] = [
        ("1 uniform closed form", uniform_closed_form, Some(Duration::from_secs(5))),
        ("2 endogenous uniform oracle", endogenous_uniform_oracle, Some(Duration::from_secs(5))),
        ("3 certificate suite", certificate_suite, Some(Duration::from_secs(60))),
        ("4 LP oracle equivalence", lp_oracle, Some(Duration::from_secs(120))),
        ("5 market structure", market_structure, Some(Duration::from_secs(30))),
        ("6 infinite-market limit", infinite_market, None),
        ("7 search-cost statics", search_cost_statics, None),
        ("8 Monte Carlo", monte_carlo, Some(Duration::from_secs(60))),
        ("9 heterogeneity", heterogeneity, None),
    ];
    let mut failed = Vec::new();
    for (name, f, limit) in criteria {
        let t = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            Err(e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let elapsed = t.elapsed();
        let outcome = match (outcome, limit) {
            (Ok(msg), Some(l)) if elapsed > l => Err(format!("{msg}; took {elapsed:.1?}, limit {l:?}")),
            (o, _) => o,
        };
        // Written to the raw stderr handle so the report shows without --nocapture.
        let line = match outcome {
            Ok(msg) => format!("PASS criterion {name} [{elapsed:.2?}]: {msg}"),
            Err(msg) => {
                failed.push(name);
                format!("FAIL criterion {name} [{elapsed:.2?}]: {msg}")
            }
        };
        let _ = writeln!(std::io::stderr(), "{line}");
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
