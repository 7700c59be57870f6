//! Agent-level simulation of the search market.
//!
//! Consumers are simulated in blocks of `BLOCK` with one ChaCha8 stream per
//! block (seeded from the configured seed, stream index = block index). Block
//! totals are combined in block order, so serial and parallel runs agree bit
//! for bit.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::candidate::verify_mpc;
use crate::error::{Error, Result};
use crate::exogenous::visit_probability;
use crate::posterior::PosteriorDistribution;
use crate::roots::bisect;
use crate::verify::{expected_payoff, payoff_u, CostDistribution, PayoffContext};
use crate::welfare::cs_savvy;

const BLOCK: u64 = 1 << 14;
/// A computed reservation value this close to the equilibrium one is snapped to it.
const RESERVATION_SNAP: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostModel {
    SingleCost(f64),
    Heterogeneous(CostDistribution),
}

fn default_parallel() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub consumers: u64,
    pub seed: u64,
    pub n: u32,
    pub alpha: f64,
    pub cost_model: CostModel,
    pub bins: usize,
    #[serde(default = "default_parallel")]
    pub parallel: bool,
}

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveBin {
    pub bin_left: f64,
    pub bin_right: f64,
    pub v_mid: f64,
    pub visits: u64,
    pub u_hat: Option<f64>,
    pub se: Option<f64>,
    /// Average of u over the bin under G; absent when G puts no mass there.
    pub u_analytic: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Analytic {
    pub eta: f64,
    pub cs_savvy: f64,
    pub cs_inexperienced: f64,
    pub multi_search: f64,
    pub share: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZScores {
    pub eta: Option<f64>,
    pub cs_savvy: Option<f64>,
    pub cs_inexperienced: Option<f64>,
    pub multi_search: Option<f64>,
    pub max_share: f64,
    pub max_curve: f64,
}

impl ZScores {
    pub fn max_abs(&self) -> f64 {
        [self.eta, self.cs_savvy, self.cs_inexperienced, self.multi_search]
            .into_iter()
            .flatten()
            .chain([self.max_share, self.max_curve])
            .map(f64::abs)
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub consumers: u64,
    pub savvy: u64,
    pub inexperienced: u64,
    /// Common reservation value under a single cost.
    pub reservation: Option<f64>,
    pub eta_hat: Option<Estimate>,
    pub cs_savvy_hat: Option<Estimate>,
    pub cs_inexperienced_hat: Option<Estimate>,
    pub firm_sale_shares: Vec<f64>,
    /// Entry k counts inexperienced consumers who visited k + 1 firms.
    pub visit_histogram: Vec<u64>,
    pub multi_search_freq: f64,
    pub conditional_sale_curve: Vec<CurveBin>,
    /// Closed-form counterparts, available for a single cost.
    pub analytic: Option<Analytic>,
    pub z_scores: Option<ZScores>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviationReport {
    pub firm_index: usize,
    pub share: Estimate,
    /// (alpha eta + 1 - alpha) times the expected payoff of the deviation.
    pub share_analytic: f64,
    pub z: f64,
}

/// Inverse-cdf draw from G.
pub fn sample_posterior(g: &PosteriorDistribution, u01: f64) -> f64 {
    g.quantile(u01)
}

/// Reservation value of a searcher with cost s facing G: the root of
/// E_G[(v - r)^+] = s.
pub fn reservation_for_cost(g: &PosteriorDistribution, s: f64) -> Result<f64> {
    let mean = g.mean();
    if !(s > 0.0 && s < mean - 1e-12) {
        return Err(Error::Domain(format!("search cost {s} must lie in (0, {mean})")));
    }
    let total = g.integral_cdf(1.0);
    let gain = |r: f64| (1.0 - r) - (total - g.integral_cdf(r));
    Ok(bisect(0.0, 1.0, 1e-15, |r| gain(r) < s))
}

#[derive(Clone, Default)]
struct BinAcc {
    visits: u64,
    sales: u64,
    vv: u64,
    ss: u64,
    sv: u64,
}

#[derive(Clone)]
struct Acc {
    savvy: u64,
    inexp: u64,
    visits: u64,
    visits_sq: u64,
    hist: Vec<u64>,
    cs_s: f64,
    cs_s_sq: f64,
    cs_i: f64,
    cs_i_sq: f64,
    sales: Vec<u64>,
    bins: Vec<BinAcc>,
}

impl Acc {
    fn new(n: usize, bins: usize) -> Self {
        Acc {
            savvy: 0,
            inexp: 0,
            visits: 0,
            visits_sq: 0,
            hist: vec![0; n],
            cs_s: 0.0,
            cs_s_sq: 0.0,
            cs_i: 0.0,
            cs_i_sq: 0.0,
            sales: vec![0; n],
            bins: vec![BinAcc::default(); bins],
        }
    }

    fn merge(mut self, o: &Acc) -> Acc {
        self.savvy += o.savvy;
        self.inexp += o.inexp;
        self.visits += o.visits;
        self.visits_sq += o.visits_sq;
        self.cs_s += o.cs_s;
        self.cs_s_sq += o.cs_s_sq;
        self.cs_i += o.cs_i;
        self.cs_i_sq += o.cs_i_sq;
        for (a, b) in self.hist.iter_mut().zip(&o.hist) {
            *a += b;
        }
        for (a, b) in self.sales.iter_mut().zip(&o.sales) {
            *a += b;
        }
        for (a, b) in self.bins.iter_mut().zip(&o.bins) {
            a.visits += b.visits;
            a.sales += b.sales;
            a.vv += b.vv;
            a.ss += b.ss;
            a.sv += b.sv;
        }
        self
    }
}

enum Reservation {
    Fixed(f64),
    Table(Vec<f64>),
    PerConsumer,
}

struct Engine<'a> {
    ctx: &'a PayoffContext,
    config: &'a SimConfig,
    reservation: Reservation,
    edges: Vec<f64>,
    deviation: Option<(usize, &'a PosteriorDistribution)>,
}

impl Engine<'_> {
    fn new<'a>(
        ctx: &'a PayoffContext,
        config: &'a SimConfig,
        deviation: Option<(usize, &'a PosteriorDistribution)>,
    ) -> Result<Engine<'a>> {
        if config.consumers == 0 {
            return Err(Error::Domain("at least one consumer is required".into()));
        }
        if config.bins < 10 {
            return Err(Error::Domain(format!("bins = {} is below 10", config.bins)));
        }
        if config.n != ctx.n || config.alpha != ctx.alpha {
            return Err(Error::Domain(format!(
                "config (n = {}, alpha = {}) does not match the equilibrium (n = {}, alpha = {})",
                config.n, config.alpha, ctx.n, ctx.alpha
            )));
        }
        let reservation = match &config.cost_model {
            CostModel::SingleCost(s) => Reservation::Fixed(snap(ctx, reservation_for_cost(&ctx.g, *s)?)),
            CostModel::Heterogeneous(k) => {
                k.validate(ctx.prior.mean())?;
                match k {
                    CostDistribution::Discrete { points } => Reservation::Table(
                        points
                            .iter()
                            .map(|p| reservation_for_cost(&ctx.g, p.0).map(|r| snap(ctx, r)))
                            .collect::<Result<_>>()?,
                    ),
                    CostDistribution::Continuous { .. } => Reservation::PerConsumer,
                }
            }
        };
        Ok(Engine {
            ctx,
            config,
            reservation,
            edges: bin_edges(config.bins, ctx.r),
            deviation,
        })
    }

    fn draw(&self, firm: usize, rng: &mut ChaCha8Rng) -> f64 {
        let u: f64 = rng.random();
        match self.deviation {
            Some((i, dev)) if i == firm => sample_posterior(dev, u),
            _ => sample_posterior(&self.ctx.g, u),
        }
    }

    fn cost_and_reservation(&self, rng: &mut ChaCha8Rng) -> (f64, f64) {
        match (&self.config.cost_model, &self.reservation) {
            (CostModel::SingleCost(s), Reservation::Fixed(r)) => (*s, *r),
            (CostModel::Heterogeneous(k), res) => {
                let u: f64 = rng.random();
                let c = k.sample(u);
                let r = match (k, res) {
                    (CostDistribution::Discrete { points }, Reservation::Table(t)) => {
                        t[points.iter().position(|p| p.0 == c).expect("sampled cost is a support point")]
                    }
                    _ => snap(self.ctx, reservation_for_cost(&self.ctx.g, c).expect("cost lies below the mean")),
                };
                (c, r)
            }
            _ => unreachable!("reservation mode follows the cost model"),
        }
    }

    fn bin_of(&self, v: f64) -> usize {
        let k = self.edges.partition_point(|&e| e <= v);
        k.saturating_sub(1).min(self.edges.len() - 2)
    }

    fn block(&self, b: u64) -> Acc {
        let n = self.config.n as usize;
        let mut acc = Acc::new(n, self.edges.len() - 1);
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(b);
        let start = b * BLOCK;
        let end = (start + BLOCK).min(self.config.consumers);
        let mut order: Vec<usize> = (0..n).collect();
        let mut values = vec![0.0; n];
        let mut seen: Vec<(usize, usize)> = Vec::with_capacity(n);
        for _ in start..end {
            let inexperienced = rng.random::<f64>() < self.config.alpha;
            seen.clear();
            let buy;
            if inexperienced {
                let (cost, r) = self.cost_and_reservation(&mut rng);
                order.shuffle(&mut rng);
                let mut chosen = None;
                for &f in &order {
                    values[f] = self.draw(f, &mut rng);
                    seen.push((f, self.bin_of(values[f])));
                    if values[f] >= r {
                        chosen = Some(f);
                        break;
                    }
                }
                buy = chosen.unwrap_or_else(|| argmax(&values));
                let k = seen.len() as u64;
                acc.inexp += 1;
                acc.visits += k;
                acc.visits_sq += k * k;
                acc.hist[seen.len() - 1] += 1;
                let payoff = values[buy] - cost * k as f64;
                acc.cs_i += payoff;
                acc.cs_i_sq += payoff * payoff;
            } else {
                for (f, v) in values.iter_mut().enumerate() {
                    *v = self.draw(f, &mut rng);
                    seen.push((f, 0));
                }
                for item in seen.iter_mut() {
                    item.1 = self.bin_of(values[item.0]);
                }
                buy = argmax(&values);
                acc.savvy += 1;
                acc.cs_s += values[buy];
                acc.cs_s_sq += values[buy] * values[buy];
            }
            acc.sales[buy] += 1;
            // Per-consumer counts per bin feed a ratio estimator clustered by consumer.
            seen.sort_unstable_by_key(|x| x.1);
            let mut i = 0;
            while i < seen.len() {
                let bin = seen[i].1;
                let (mut v, mut s) = (0u64, 0u64);
                while i < seen.len() && seen[i].1 == bin {
                    v += 1;
                    s += u64::from(seen[i].0 == buy);
                    i += 1;
                }
                let a = &mut acc.bins[bin];
                a.visits += v;
                a.sales += s;
                a.vv += v * v;
                a.ss += s * s;
                a.sv += s * v;
            }
        }
        acc
    }

    fn run(&self) -> Acc {
        let blocks = self.config.consumers.div_ceil(BLOCK);
        let n = self.config.n as usize;
        let empty = Acc::new(n, self.edges.len() - 1);
        if self.config.parallel {
            let parts: Vec<Acc> = (0..blocks).into_par_iter().map(|b| self.block(b)).collect();
            parts.iter().fold(empty, Acc::merge)
        } else {
            (0..blocks).map(|b| self.block(b)).fold(empty, |a, p| a.merge(&p))
        }
    }
}

fn snap(ctx: &PayoffContext, r: f64) -> f64 {
    if (r - ctx.r).abs() <= RESERVATION_SNAP {
        ctx.r
    } else {
        r
    }
}

/// Index of the largest value, lowest index on ties.
fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Equal-width bins on each side of r, with r itself an edge.
fn bin_edges(bins: usize, r: f64) -> Vec<f64> {
    if !(r > 0.0 && r < 1.0) {
        return (0..=bins).map(|i| i as f64 / bins as f64).collect();
    }
    let below = ((bins as f64 * r).round() as usize).clamp(1, bins - 1);
    let above = bins - below;
    let mut edges: Vec<f64> = (0..below).map(|i| r * i as f64 / below as f64).collect();
    edges.extend((0..above).map(|i| r + (1.0 - r) * i as f64 / above as f64));
    edges.push(1.0);
    edges
}

fn estimate(sum: f64, sum_sq: f64, count: u64) -> Option<Estimate> {
    if count == 0 {
        return None;
    }
    let n = count as f64;
    let mean = sum / n;
    let var = if count > 1 {
        ((sum_sq - sum * mean) / (n - 1.0)).max(0.0)
    } else {
        0.0
    };
    Some(Estimate {
        value: mean,
        se: (var / n).sqrt(),
    })
}

fn z(hat: f64, se: f64, truth: f64) -> f64 {
    let d = hat - truth;
    if se > 0.0 {
        d / se
    } else if d.abs() <= 1e-12 {
        0.0
    } else {
        f64::INFINITY.copysign(d)
    }
}

fn bin_average_u(ctx: &PayoffContext, a: f64, b: f64, last: bool) -> Option<f64> {
    let upper = if last { 1.0 } else { ctx.g.cdf_left(b) };
    let mass = upper - ctx.g.cdf_left(a);
    if mass <= 1e-12 {
        return None;
    }
    let inside = |v: f64| v >= a && (v < b || (last && v <= b));
    let mut breaks = vec![a, b, ctx.r, ctx.shape.v_l, ctx.shape.v_h, ctx.shape.v_t];
    breaks.retain(|x| x.is_finite());
    let total = ctx.g.expect(|v| if inside(v) { payoff_u(ctx, v) } else { 0.0 }, &breaks);
    Some(total / mass)
}

fn curve(ctx: &PayoffContext, edges: &[f64], bins: &[BinAcc]) -> Vec<CurveBin> {
    let last = bins.len() - 1;
    bins.iter()
        .enumerate()
        .map(|(i, b)| {
            let (lo, hi) = (edges[i], edges[i + 1]);
            let (u_hat, se) = if b.visits == 0 {
                (None, None)
            } else {
                let tot = b.visits as f64;
                let u = b.sales as f64 / tot;
                // Linearised variance of a ratio of per-consumer sums.
                let resid = b.ss as f64 - 2.0 * u * b.sv as f64 + u * u * b.vv as f64;
                (Some(u), Some(resid.max(0.0).sqrt() / tot))
            };
            CurveBin {
                bin_left: lo,
                bin_right: hi,
                v_mid: 0.5 * (lo + hi),
                visits: b.visits,
                u_hat,
                se,
                u_analytic: bin_average_u(ctx, lo, hi, i == last),
            }
        })
        .collect()
}

/// Simulates the market with every firm drawing from the context's G.
pub fn simulate_market(ctx: &PayoffContext, config: &SimConfig) -> Result<SimReport> {
    let engine = Engine::new(ctx, config, None)?;
    let acc = engine.run();
    let n = config.n as usize;
    let total = config.consumers as f64;
    let eta_hat = estimate(acc.visits as f64 / n as f64, acc.visits_sq as f64 / (n * n) as f64, acc.inexp);
    let cs_savvy_hat = estimate(acc.cs_s, acc.cs_s_sq, acc.savvy);
    let cs_inexperienced_hat = estimate(acc.cs_i, acc.cs_i_sq, acc.inexp);
    let firm_sale_shares: Vec<f64> = acc.sales.iter().map(|&c| c as f64 / total).collect();
    let multi = acc.inexp - acc.hist[0];
    let multi_search_freq = if acc.inexp == 0 { 0.0 } else { multi as f64 / acc.inexp as f64 };
    let conditional_sale_curve = curve(ctx, &engine.edges, &acc.bins);

    let reservation = match engine.reservation {
        Reservation::Fixed(r) => Some(r),
        _ => None,
    };
    let analytic = match reservation {
        Some(r) => {
            let below = ctx.g.cdf_left(r);
            Some(Analytic {
                eta: visit_probability(below, config.n),
                cs_savvy: cs_savvy(&ctx.g, config.n),
                cs_inexperienced: cs_savvy(&ctx.g.censor_above(r)?, config.n),
                multi_search: if config.n > 1 { below } else { 0.0 },
                share: 1.0 / n as f64,
            })
        }
        None => None,
    };
    // The payoff curve is only meaningful when searchers hold the context's r.
    let curve_applies = reservation == Some(ctx.r);
    let z_scores = analytic.map(|a| {
        let share_se = (a.share * (1.0 - a.share) / total).sqrt();
        let max_share = firm_sale_shares
            .iter()
            .map(|&p| z(p, share_se, a.share).abs())
            .fold(0.0, f64::max);
        let max_curve = if curve_applies {
            conditional_sale_curve
                .iter()
                .filter_map(|c| match (c.u_hat, c.se, c.u_analytic) {
                    (Some(u), Some(se), Some(ua)) => {
                        // A bin with no sales (or only sales) has a zero plug-in se.
                        let null_se = (ua * (1.0 - ua) / c.visits as f64).sqrt();
                        Some(z(u, se.max(null_se), ua).abs())
                    }
                    _ => None,
                })
                .fold(0.0, f64::max)
        } else {
            0.0
        };
        let multi_se = (a.multi_search * (1.0 - a.multi_search) / acc.inexp.max(1) as f64).sqrt();
        ZScores {
            eta: eta_hat.map(|e| z(e.value, e.se, a.eta)),
            cs_savvy: cs_savvy_hat.map(|e| z(e.value, e.se, a.cs_savvy)),
            cs_inexperienced: cs_inexperienced_hat.map(|e| z(e.value, e.se, a.cs_inexperienced)),
            multi_search: (acc.inexp > 0).then(|| z(multi_search_freq, multi_se, a.multi_search)),
            max_share,
            max_curve,
        }
    });

    Ok(SimReport {
        consumers: config.consumers,
        savvy: acc.savvy,
        inexperienced: acc.inexp,
        reservation,
        eta_hat,
        cs_savvy_hat,
        cs_inexperienced_hat,
        firm_sale_shares,
        visit_histogram: acc.hist,
        multi_search_freq,
        conditional_sale_curve,
        analytic,
        z_scores,
    })
}

/// Simulates the market with one firm drawing from `g_dev` while rivals and
/// searchers keep their equilibrium strategies and beliefs.
pub fn simulate_deviation(
    ctx: &PayoffContext,
    firm_index: usize,
    g_dev: &PosteriorDistribution,
    config: &SimConfig,
) -> Result<DeviationReport> {
    if firm_index >= ctx.n as usize {
        return Err(Error::Domain(format!("firm {firm_index} does not exist among {}", ctx.n)));
    }
    let mpc = verify_mpc(g_dev, &ctx.prior, 2001);
    if !mpc.pass {
        return Err(Error::Domain(format!(
            "deviation is not a mean-preserving contraction of the prior (min gap {:e}, mean error {:e})",
            mpc.min_gap, mpc.mean_error
        )));
    }
    let engine = Engine::new(ctx, config, Some((firm_index, g_dev)))?;
    let acc = engine.run();
    let total = config.consumers as f64;
    let p = acc.sales[firm_index] as f64 / total;
    let se = (p * (1.0 - p) / total).sqrt();
    let share_analytic = (ctx.alpha * ctx.eta + 1.0 - ctx.alpha) * expected_payoff(ctx, g_dev);
    Ok(DeviationReport {
        firm_index,
        share: Estimate { value: p, se },
        share_analytic,
        z: z(p, se, share_analytic),
    })
}

/// Writes the conditional-sale curve as CSV.
pub fn write_curve_csv<W: std::io::Write>(curve: &[CurveBin], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["bin_left", "bin_right", "v_mid", "u_hat", "se", "u_analytic"])?;
    let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
    for c in curve {
        w.write_record([
            c.bin_left.to_string(),
            c.bin_right.to_string(),
            c.v_mid.to_string(),
            opt(c.u_hat),
            opt(c.se),
            opt(c.u_analytic),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::endogenous::solve_endog;
    use crate::exogenous::solve_exog;
    use crate::prior::Prior;

    fn config(n: u32, alpha: f64, s: f64, consumers: u64) -> SimConfig {
        SimConfig {
            consumers,
            seed: 7,
            n,
            alpha,
            cost_model: CostModel::SingleCost(s),
            bins: 10,
            parallel: true,
        }
    }

    #[test]
    fn affine_piece_inverse() {
        let eq = solve_exog(&Prior::Uniform, 2, 0.6, 0.25).unwrap();
        assert_eq!(eq.v_l_eq, 0.0);
        assert!((eq.candidate.unwrap().beta - 2.0).abs() < 1e-12);
        assert!((sample_posterior(&eq.posterior, 0.5) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn bottom_piece_inverse() {
        let eq = solve_endog(&Prior::Uniform, 2, 0.65, 0.1).unwrap();
        let q = 0.5 * eq.v_l_star;
        let v = sample_posterior(&eq.g, q);
        assert!(v <= eq.v_l_star && (eq.g.cdf(v) - q).abs() < 1e-12);
    }

    #[test]
    fn reservation_recovers_equilibrium() {
        for (n, alpha, s) in [(2, 0.65, 0.1), (2, 0.95, 0.1), (5, 0.5, 0.1), (30, 0.5, 0.1)] {
            let eq = solve_endog(&Prior::Uniform, n, alpha, s).unwrap();
            let r = reservation_for_cost(&eq.g, s).unwrap();
            assert!((r - eq.r_star).abs() < 1e-9, "{n} {alpha} {s}: {r} vs {}", eq.r_star);
        }
        let eq = solve_endog(&Prior::Uniform, 30, 0.5, 0.1).unwrap();
        let mu = 0.5;
        let r = reservation_for_cost(&eq.g, 0.15).unwrap();
        assert!((r - (mu - 0.15)).abs() < 1e-9);
        assert!(reservation_for_cost(&eq.g, 0.5).is_err());
        let tiny = reservation_for_cost(&eq.g, 1e-10).unwrap();
        assert!((tiny - eq.v_t_star).abs() < 1e-4);
    }

    #[test]
    fn edges_put_r_on_a_boundary() {
        let e = bin_edges(10, 0.4898);
        assert_eq!(e.len(), 11);
        assert!(e.contains(&0.4898));
        assert_eq!(e[10], 1.0);
        assert!(e.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn empirical_cdf_close_to_g() {
        let eq = solve_endog(&Prior::Uniform, 2, 0.65, 0.1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m = 1_000_000;
        let mut xs: Vec<f64> = (0..m).map(|_| sample_posterior(&eq.g, rng.random())).collect();
        xs.sort_by(f64::total_cmp);
        let mut d: f64 = 0.0;
        for (i, &x) in xs.iter().enumerate() {
            let c = eq.g.cdf(x);
            d = d.max((c - (i + 1) as f64 / m as f64).abs());
            d = d.max((eq.g.cdf_left(x) - i as f64 / m as f64).abs());
        }
        assert!(d < 0.002, "Kolmogorov distance {d}");
    }

    #[test]
    fn serial_equals_parallel_and_reruns_match() {
        let eq = solve_endog(&Prior::Uniform, 3, 0.65, 0.1).unwrap();
        let ctx = PayoffContext::from_equilibrium(&eq);
        let mut cfg = config(3, 0.65, 0.1, 50_000);
        let a = simulate_market(&ctx, &cfg).unwrap();
        let b = simulate_market(&ctx, &cfg).unwrap();
        cfg.parallel = false;
        let c = simulate_market(&ctx, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, c);
        let sum: f64 = a.firm_sale_shares.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn large_market_never_searches_twice() {
        let eq = solve_endog(&Prior::Uniform, 30, 0.5, 0.1).unwrap();
        assert_eq!(eq.v_l_star, 0.0);
        let ctx = PayoffContext::from_equilibrium(&eq);
        let rep = simulate_market(&ctx, &config(30, 0.5, 0.1, 100_000)).unwrap();
        assert_eq!(rep.multi_search_freq, 0.0);
        let cs_i = rep.cs_inexperienced_hat.unwrap();
        assert!((cs_i.value - 0.4).abs() < 4.0 * cs_i.se + 1e-12);
    }

    #[test]
    fn deviation_to_prior_does_not_pay() {
        let eq = solve_endog(&Prior::Uniform, 2, 0.65, 0.1).unwrap();
        let ctx = PayoffContext::from_equilibrium(&eq);
        let cfg = config(2, 0.65, 0.1, 200_000);
        let same = simulate_deviation(&ctx, 0, &eq.g, &cfg).unwrap();
        assert!((same.share.value - 0.5).abs() < 3.0 * same.share.se);
        let f = PosteriorDistribution::full_disclosure(&Prior::Uniform);
        let dev = simulate_deviation(&ctx, 1, &f, &cfg).unwrap();
        assert!(dev.share.value <= 0.5 + 3.0 * dev.share.se);
        assert!(dev.z.abs() < 4.0, "{dev:?}");
    }

    #[test]
    fn rejects_non_mpc_deviation() {
        let eq = solve_endog(&Prior::Uniform, 2, 0.65, 0.1).unwrap();
        let ctx = PayoffContext::from_equilibrium(&eq);
        let bad = PosteriorDistribution::point_mass(&Prior::Uniform, 0.7).unwrap();
        assert!(simulate_deviation(&ctx, 0, &bad, &config(2, 0.65, 0.1, 10)).is_err());
    }
}
