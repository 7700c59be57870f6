use proptest::prelude::*;

use disclose_eq::candidate::{verify_mpc, Candidate};
use disclose_eq::endogenous::solve_endog;
use disclose_eq::exogenous::solve_exog;
use disclose_eq::montecarlo::{reservation_for_cost, simulate_market, CostModel, SimConfig};
use disclose_eq::quad::integrate_composite;
use disclose_eq::verify::{check_dm_conditions, expected_payoff, payoff_jump, payoff_u, symmetric_payoff, PayoffContext};
use disclose_eq::welfare::{cs_inexperienced, cs_savvy, informativeness_compare, search_stats, Verdict};
use disclose_eq::{PosteriorDistribution, Prior};

fn any_prior() -> impl Strategy<Value = Prior> {
    let piecewise = prop::collection::vec((0.02f64..0.98, 0.02f64..0.98), 1..5).prop_filter_map(
        "knots need distinct coordinates",
        |mut inner| {
            let mut xs: Vec<f64> = inner.iter().map(|p| p.0).collect();
            let mut ys: Vec<f64> = inner.drain(..).map(|p| p.1).collect();
            xs.sort_by(f64::total_cmp);
            ys.sort_by(f64::total_cmp);
            let mut knots = vec![(0.0, 0.0)];
            knots.extend(xs.into_iter().zip(ys));
            knots.push((1.0, 1.0));
            Prior::piecewise(knots).ok()
        },
    );
    prop_oneof![
        Just(Prior::Uniform),
        (0.5f64..4.0).prop_map(|a| Prior::power(a).unwrap()),
        piecewise,
    ]
}

/// Priors for which F^{n-1} is convex for every n >= 2.
fn solvable_prior() -> impl Strategy<Value = Prior> {
    prop_oneof![Just(Prior::Uniform), (1.0f64..3.0).prop_map(|a| Prior::power(a).unwrap())]
}

fn market() -> impl Strategy<Value = (Prior, u32, f64, f64)> {
    (solvable_prior(), 2u32..8, 0.05f64..0.95, 0.03f64..0.85)
        .prop_map(|(p, n, alpha, frac)| {
            let s = frac * p.mean();
            (p, n, alpha, s)
        })
}

fn config() -> ProptestConfig {
    ProptestConfig { cases: 24, ..ProptestConfig::default() }
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn quantile_inverts_cdf(prior in any_prior(), v in 0.0f64..=1.0) {
        let q = prior.quantile_at(prior.cdf_at(v));
        prop_assert!((q - v).abs() < 1e-12, "v = {v}, quantile(cdf(v)) = {q}");
    }

    #[test]
    fn mean_is_tail_integral(prior in any_prior()) {
        let mut cuts = vec![0.0];
        cuts.extend(prior.kinks());
        cuts.push(1.0);
        cuts.dedup();
        let tail: f64 = match prior {
            // 1 - v^a is not smooth at 0 when a < 1.
            Prior::Power { a } => a / (a + 1.0),
            _ => cuts
                .windows(2)
                .map(|w| integrate_composite(|v| 1.0 - prior.cdf_at(v), w[0], w[1], 16))
                .sum(),
        };
        prop_assert!((prior.mean() - tail).abs() < 1e-10);
        let whole = prior.truncated_moments(0.0, 1.0, 3).unwrap();
        prop_assert!((whole.mu_tilde - prior.mean()).abs() < 1e-12);
    }

    #[test]
    fn truncated_power_mean_is_bracketed(prior in any_prior(), a in 0.0f64..0.9, w in 0.02f64..1.0, n in 2u32..9) {
        let b = (a + w).min(1.0);
        let m = prior.truncated_moments(a, b, n).unwrap();
        let lo = prior.cdf_at(a).powi(n as i32 - 1);
        let hi = prior.cdf_at(b).powi(n as i32 - 1);
        prop_assert!(m.eta_tilde >= lo - 1e-12 && m.eta_tilde <= hi + 1e-12);
    }

    #[test]
    fn candidate_beta_routes_agree_and_g_is_a_contraction(
        prior in solvable_prior(), n in 2u32..7, x in 0.0f64..0.95, y in 0.1f64..0.9,
    ) {
        // r below E[v | v > v_L], and v_L below r.
        let v_l = 0.0;
        let cap = prior.upper_conditional_mean(v_l);
        let r = y * cap;
        let v_l = x * r;
        prop_assume!(prior.upper_conditional_mean(v_l) > r + 1e-6 && r - v_l > 1e-6);
        let c = Candidate::solve(&prior, n, v_l, r).unwrap();
        let closed = c.beta_closed_form().unwrap();
        prop_assert!((closed - c.beta).abs() <= 1e-8 * c.beta, "beta {} vs {closed}", c.beta);
        let g = c.posterior().unwrap();
        prop_assert!(verify_mpc(&g, &prior, 1001).pass);
    }

    #[test]
    fn beta_rises_with_r_and_falls_with_v_l(
        prior in solvable_prior(), n in 2u32..6, x in 0.05f64..0.9, r in 0.1f64..0.7,
    ) {
        let v_l = x * r;
        let h = 1e-6;
        prop_assume!(prior.upper_conditional_mean(v_l + h) > r + 1e-3 && r - v_l > 1e-3);
        let beta = |v_l: f64, r: f64| Candidate::solve(&prior, n, v_l, r).unwrap().beta;
        let b0 = beta(v_l, r);
        prop_assert!(beta(v_l, r + h) > b0);
        prop_assert!(beta(v_l + h, r) < b0);
    }

    #[test]
    fn equilibrium_certificate_and_identities((prior, n, alpha, s) in market()) {
        let eq = solve_endog(&prior, n, alpha, s).unwrap();
        prop_assert!(verify_mpc(&eq.g, &prior, 1001).pass);

        let ctx = PayoffContext::from_equilibrium(&eq);
        let cert = check_dm_conditions(&ctx, 1001);
        prop_assert!(cert.pass, "{cert:?}");
        prop_assert!(cert.dual_gap.abs() < 1e-8);

        // Unit demand and symmetry fix the sale probability per visit.
        let own = expected_payoff(&ctx, &eq.g);
        prop_assert!((own - symmetric_payoff(&ctx)).abs() < 1e-9);
        let direct = 1.0 / (n as f64 * (alpha * eq.eta + 1.0 - alpha));
        prop_assert!((own - direct).abs() < 1e-9);

        // Jump at r, from the two branches of u.
        let jump = payoff_jump(&ctx);
        let left = payoff_u(&ctx, eq.r_star * (1.0 - 1e-13));
        let right = payoff_u(&ctx, eq.r_star);
        prop_assert!(jump > 0.0);
        prop_assert!((right - left - jump).abs() < 1e-9, "jump {jump} vs {}", right - left);
    }

    #[test]
    fn fixed_point_and_surplus_ordering((prior, n, alpha, s) in market()) {
        let eq = solve_endog(&prior, n, alpha, s).unwrap();
        let ex = solve_exog(&prior, n, alpha, eq.r_star).unwrap();
        prop_assert!((ex.v_l_eq - eq.v_l_star).abs() < 1e-9);

        let stats = search_stats(&eq);
        prop_assert!((stats.expected_visits - n as f64 * eq.eta).abs() < 1e-9);

        let cs_s = cs_savvy(&eq.g, n);
        let cs_i = cs_inexperienced(&eq).unwrap();
        prop_assert!(cs_s >= cs_i - 1e-12);
        prop_assert!(cs_s <= cs_savvy(&PosteriorDistribution::full_disclosure(&prior), n) + 1e-12);

        let r = reservation_for_cost(&eq.g, s).unwrap();
        prop_assert!((r - eq.r_star).abs() < 1e-8, "reservation {r} vs {}", eq.r_star);
    }

    #[test]
    fn more_informative_means_more_savvy_surplus(
        prior in solvable_prior(), n in 2u32..6, alpha in 0.05f64..0.95, f0 in 0.05f64..0.85, f1 in 0.05f64..0.85,
    ) {
        let mu = prior.mean();
        let e0 = solve_endog(&prior, n, alpha, f0 * mu).unwrap();
        let e1 = solve_endog(&prior, n, alpha, f1 * mu).unwrap();
        let v = informativeness_compare(&e0.g, &e1.g, 1001);
        let tol = 1e-9;
        let forward = v.min_gap_forward >= -tol;
        let backward = v.min_gap_backward >= -tol;
        let expected = match (forward, backward) {
            (true, true) => Verdict::EquallyInformative,
            (true, false) => Verdict::LessInformative,
            (false, true) => Verdict::MoreInformative,
            (false, false) => Verdict::Incomparable,
        };
        if v.mean_gap.abs() <= tol {
            prop_assert_eq!(v.verdict, expected);
        }
        let (s0, s1) = (cs_savvy(&e0.g, n), cs_savvy(&e1.g, n));
        match v.verdict {
            Verdict::MoreInformative => prop_assert!(s0 >= s1 - 1e-9),
            Verdict::LessInformative => prop_assert!(s0 <= s1 + 1e-9),
            _ => {}
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 8, ..ProptestConfig::default() })]

    #[test]
    fn simulated_shares_are_a_distribution((prior, n, alpha, s) in market(), seed in any::<u64>()) {
        let eq = solve_endog(&prior, n, alpha, s).unwrap();
        let ctx = PayoffContext::from_equilibrium(&eq);
        let config = SimConfig {
            consumers: 20_000,
            seed,
            n,
            alpha,
            cost_model: CostModel::SingleCost(s),
            bins: 20,
            parallel: true,
        };
        let report = simulate_market(&ctx, &config).unwrap();
        let total: f64 = report.firm_sale_shares.iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        prop_assert!(report.firm_sale_shares.iter().all(|x| (0.0..=1.0).contains(x)));
        prop_assert!((0.0..=1.0).contains(&report.multi_search_freq));
        prop_assert_eq!(report.savvy + report.inexperienced, config.consumers);
        prop_assert_eq!(report.visit_histogram.iter().sum::<u64>(), report.inexperienced);
        let serial = simulate_market(&ctx, &SimConfig { parallel: false, ..config.clone() }).unwrap();
        prop_assert_eq!(serial, report);
    }
}
