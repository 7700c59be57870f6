//! `disclose-eq`: solve, sweep, verify, simulate and analyse the disclosure
//! equilibrium from a JSON run configuration.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use disclose_eq::candidate::Candidate;
use disclose_eq::endogenous::{
    limit_equilibrium, n_lower_bar, solve_endog, sup_distance_to_limit, v_h_large_n, Equilibrium,
};
use disclose_eq::montecarlo::{simulate_market, write_curve_csv, CostModel, SimConfig};
use disclose_eq::verify::{
    certified_deviation, check_dm_conditions, first_holding_n, hetero_check, oracle_compare, CostDistribution,
    Discretization, PayoffContext, ORACLE_GAP_CONSTANT,
};
use disclose_eq::welfare::{search_stats, surplus, sweep, write_sweep_csv, Axis};
use disclose_eq::{Error, Prior};

const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
const THREADS_ENV: &str = "DISCLOSE_EQ_THREADS";
const Z_FAIL: f64 = 5.0;

#[derive(Parser)]
#[command(name = "disclose-eq", version, about = "Equilibrium information disclosure under consumer search")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file; standard output when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Resolution of grid-based checks.
    #[arg(long, global = true, default_value_t = 2001)]
    grid_size: usize,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Also solve the discretized best-response LP on about this many nodes.
    #[arg(long, global = true)]
    oracle_grid: Option<usize>,
    /// Shift a threshold of the solved equilibrium: v_l or r, then the delta.
    #[arg(long, global = true, num_args = 2, value_names = ["FIELD", "DELTA"], allow_hyphen_values = true)]
    perturb: Option<Vec<String>>,
    /// Reuse an equilibrium written by `solve` instead of solving again.
    #[arg(long, global = true)]
    equilibrium: Option<PathBuf>,
}

#[derive(Subcommand, Clone, PartialEq, Debug)]
enum Command {
    /// Solve for the equilibrium.
    Solve,
    /// Solve along a grid of n, s or alpha and write CSV.
    Sweep {
        #[arg(long, value_parser = parse_axis)]
        axis: Option<Axis>,
        /// Comma-separated values, or lo:hi:count.
        #[arg(long)]
        grid: Option<GridSpec>,
    },
    /// Check the optimality certificate of the equilibrium.
    Verify,
    /// Simulate consumers and compare with closed forms.
    Simulate {
        /// Where to write the conditional-sale curve as CSV.
        #[arg(long)]
        curve: Option<PathBuf>,
    },
    /// Market-size threshold and the large-market limit.
    Limit,
    /// Sufficient condition under heterogeneous search costs.
    Hetero,
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct GridSpec(String);

impl std::str::FromStr for GridSpec {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_grid(s).map(|_| GridSpec(s.to_string()))
    }
}

fn parse_axis(s: &str) -> Result<Axis, String> {
    match s {
        "n" => Ok(Axis::N),
        "s" => Ok(Axis::S),
        "alpha" => Ok(Axis::Alpha),
        _ => Err(format!("axis {s:?} is not one of n, s, alpha")),
    }
}

fn parse_grid(s: &str) -> Result<Vec<f64>, String> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() == 3 {
        let lo: f64 = parts[0].trim().parse().map_err(|e| format!("grid start: {e}"))?;
        let hi: f64 = parts[1].trim().parse().map_err(|e| format!("grid end: {e}"))?;
        let count: usize = parts[2].trim().parse().map_err(|e| format!("grid count: {e}"))?;
        if count < 2 || !(hi > lo) {
            return Err("lo:hi:count needs hi > lo and count >= 2".into());
        }
        return Ok((0..count).map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64).collect());
    }
    s.split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|e| format!("grid value {x:?}: {e}")))
        .collect()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn config(m: impl Into<String>) -> Self {
        Failure { code: 1, message: m.into() }
    }
    fn certificate(m: impl Into<String>) -> Self {
        Failure { code: 4, message: m.into() }
    }
    fn statistical(m: impl Into<String>) -> Self {
        Failure { code: 5, message: m.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Domain(_) | Error::InvalidPrior(_) | Error::InvalidCost(_) => 1,
            Error::UnsupportedBoundary { .. } => 3,
            _ => 2,
        };
        Failure { code, message: e.to_string() }
    }
}

type Outcome<T> = Result<T, Failure>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum CostSpec {
    Single(f64),
    Distribution(CostDistribution),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunConfig {
    prior: Prior,
    #[serde(default)]
    n: Option<u32>,
    alpha: f64,
    s: CostSpec,
    #[serde(default)]
    axis: Option<Axis>,
    #[serde(default)]
    grid: Option<Vec<f64>>,
    #[serde(default)]
    consumers: Option<u64>,
    #[serde(default)]
    bins: Option<usize>,
    #[serde(default)]
    n_cap: Option<u32>,
    #[serde(default)]
    doublings: Option<u32>,
}

impl RunConfig {
    fn load(path: Option<&Path>) -> Outcome<Self> {
        let path = path.ok_or_else(|| Failure::config("--config <path> is required"))?;
        let text = fs::read_to_string(path).map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
        let cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Outcome<()> {
        if let Some(n) = self.n {
            if n < 2 {
                return Err(Failure::config(format!("n = {n} must be at least 2")));
            }
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Failure::config(format!("alpha = {} must lie in [0, 1]", self.alpha)));
        }
        let mu = self.prior.mean();
        match &self.s {
            CostSpec::Single(s) => {
                if !(*s > 0.0 && *s < mu) {
                    return Err(Failure::config(format!("s = {s} must lie in (0, {mu})")));
                }
            }
            CostSpec::Distribution(k) => k.validate(mu)?,
        }
        if let Some(b) = self.bins {
            if b < 10 {
                return Err(Failure::config(format!("bins = {b} must be at least 10")));
            }
        }
        if self.consumers == Some(0) {
            return Err(Failure::config("consumers must be at least 1"));
        }
        Ok(())
    }

    fn n(&self) -> Outcome<u32> {
        self.n.ok_or_else(|| Failure::config("this command needs n in the configuration"))
    }

    fn single_cost(&self) -> Outcome<f64> {
        match self.s {
            CostSpec::Single(s) => Ok(s),
            CostSpec::Distribution(_) => Err(Failure::config("this command needs a single search cost s")),
        }
    }
}

fn configure_threads() -> Outcome<()> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let k: usize = v
            .parse()
            .ok()
            .filter(|&k| k > 0)
            .ok_or_else(|| Failure::config(format!("{THREADS_ENV}={v} is not a positive integer")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| Failure::config(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn config_hash(cli: &Cli, cfg: &RunConfig) -> String {
    let (name, extra) = match &cli.command {
        Command::Solve => ("solve", json!({})),
        Command::Sweep { axis, grid } => ("sweep", json!({"axis": axis, "grid": grid.as_ref().map(|g| &g.0)})),
        Command::Verify => ("verify", json!({})),
        Command::Simulate { .. } => ("simulate", json!({})),
        Command::Limit => ("limit", json!({})),
        Command::Hetero => ("hetero", json!({})),
    };
    let payload = json!({
        "command": name,
        "config": cfg,
        "options": {
            "grid_size": cli.grid_size,
            "seed": cli.seed,
            "oracle_grid": cli.oracle_grid,
            "perturb": cli.perturb,
            "command": extra,
        },
    });
    hex::encode(Sha256::digest(payload.to_string().as_bytes()))
}

fn envelope(command: &str, hash: &str, result: Value) -> Value {
    json!({
        "tool": "disclose-eq",
        "tool_version": TOOL_VERSION,
        "config_hash": hash,
        "command": command,
        "result": result,
    })
}

fn write_out(path: Option<&Path>, bytes: &[u8]) -> Outcome<()> {
    match path {
        Some(p) => fs::write(p, bytes).map_err(|e| Failure::config(format!("{}: {e}", p.display()))),
        None => std::io::stdout()
            .write_all(bytes)
            .map_err(|e| Failure::config(format!("stdout: {e}"))),
    }
}

fn emit_json(path: Option<&Path>, value: &Value) -> Outcome<()> {
    let mut text = serde_json::to_string_pretty(value).expect("results serialize");
    text.push('\n');
    write_out(path, text.as_bytes())
}

fn run(cli: &Cli) -> Outcome<()> {
    configure_threads()?;
    let cfg = RunConfig::load(cli.config.as_deref())?;
    let hash = config_hash(cli, &cfg);
    if cli.perturb.is_some() && cli.command != Command::Verify {
        return Err(Failure::config("--perturb only applies to verify"));
    }
    match &cli.command {
        Command::Solve => cmd_solve(cli, &cfg, &hash),
        Command::Sweep { axis, grid } => cmd_sweep(cli, &cfg, &hash, *axis, grid.as_ref()),
        Command::Verify => cmd_verify(cli, &cfg, &hash),
        Command::Simulate { curve } => cmd_simulate(cli, &cfg, &hash, curve.as_deref()),
        Command::Limit => cmd_limit(cli, &cfg, &hash),
        Command::Hetero => cmd_hetero(cli, &cfg, &hash),
    }
}

/// The equilibrium named by --equilibrium, checked against the configuration,
/// or a fresh solve at cost s.
fn equilibrium(cli: &Cli, cfg: &RunConfig, s: f64) -> Outcome<Equilibrium> {
    let n = cfg.n()?;
    let Some(path) = &cli.equilibrium else {
        return Ok(solve_endog(&cfg.prior, n, cfg.alpha, s)?);
    };
    let text = fs::read_to_string(path).map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
    let mut v: Value =
        serde_json::from_str(&text).map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
    if let Some(r) = v.get_mut("result") {
        v = r.take();
    }
    if let Some(e) = v.get_mut("equilibrium") {
        v = e.take();
    }
    let eq: Equilibrium =
        serde_json::from_value(v).map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
    if eq.prior != cfg.prior || eq.n != n || eq.alpha != cfg.alpha || eq.s != s {
        return Err(Failure::config(format!(
            "{} was solved for different parameters than the configuration",
            path.display()
        )));
    }
    eq.validate()?;
    Ok(eq)
}

fn cmd_solve(cli: &Cli, cfg: &RunConfig, hash: &str) -> Outcome<()> {
    let s = cfg.single_cost()?;
    let eq = equilibrium(cli, cfg, s)?;
    let sur = surplus(&eq)?;
    let note = (cfg.alpha == 0.0).then_some("alpha = 0: every firm discloses fully and G = F");
    eprintln!(
        "r* = {:.10}  v_L* = {:.10}  v_H* = {:.10}  v_T* = {:.10}  beta* = {:.10}",
        eq.r_star, eq.v_l_star, eq.v_h_star, eq.v_t_star, eq.beta_star
    );
    eprintln!("CS_s = {:.10}  CS_i = {:.10}", sur.cs_savvy, sur.cs_inexperienced);
    if let Some(n) = note {
        eprintln!("{n}");
    }
    let result = json!({
        "equilibrium": eq,
        "surplus": sur,
        "search": search_stats(&eq),
        "note": note,
    });
    emit_json(cli.out.as_deref(), &envelope("solve", hash, result))
}

fn cmd_sweep(cli: &Cli, cfg: &RunConfig, hash: &str, axis: Option<Axis>, grid: Option<&GridSpec>) -> Outcome<()> {
    let axis = axis
        .or(cfg.axis)
        .ok_or_else(|| Failure::config("sweep needs --axis or an axis in the configuration"))?;
    let grid = match grid {
        Some(g) => parse_grid(&g.0).map_err(Failure::config)?,
        None => cfg
            .grid
            .clone()
            .ok_or_else(|| Failure::config("sweep needs --grid or a grid in the configuration"))?,
    };
    if grid.is_empty() {
        return Err(Failure::config("sweep grid is empty"));
    }
    let s = cfg.single_cost()?;
    let n = match axis {
        Axis::N => cfg.n.unwrap_or(2),
        _ => cfg.n()?,
    };
    let rows = sweep(&cfg.prior, n, cfg.alpha, s, axis, &grid, cli.grid_size);
    let mut buf = format!("# tool_version={TOOL_VERSION} config_hash={hash}\n").into_bytes();
    write_sweep_csv(&rows, axis, &mut buf).map_err(|e| Failure::config(format!("csv: {e}")))?;
    let failed = rows.iter().filter(|r| r.error.is_some()).count();
    eprintln!("{} rows, {failed} failed", rows.len());
    write_out(cli.out.as_deref(), &buf)
}

fn cmd_verify(cli: &Cli, cfg: &RunConfig, hash: &str) -> Outcome<()> {
    let s = cfg.single_cost()?;
    let eq = equilibrium(cli, cfg, s)?;
    let (ctx, perturbation) = match &cli.perturb {
        None => (PayoffContext::from_equilibrium(&eq), Value::Null),
        Some(args) => {
            let delta: f64 = args[1]
                .parse()
                .map_err(|e| Failure::config(format!("perturbation delta {:?}: {e}", args[1])))?;
            let (v_l, r) = match args[0].to_ascii_lowercase().as_str() {
                "v_l" | "v_l_star" => (eq.v_l_star + delta, eq.r_star),
                "r" | "r_star" => (eq.v_l_star, eq.r_star + delta),
                other => return Err(Failure::config(format!("cannot perturb {other:?}; use v_l or r"))),
            };
            let c = Candidate::solve(&cfg.prior, eq.n, v_l, r)?;
            (
                PayoffContext::from_candidate(&c, cfg.alpha)?,
                json!({"field": args[0], "delta": delta}),
            )
        }
    };
    let cert = check_dm_conditions(&ctx, cli.grid_size);
    let mut failures = Vec::new();
    if !cert.pass {
        failures.push(format!(
            "certificate fails: dm1 convex {} (continuity {:e}, chord {:e}), dm2 min gap {:e}, dm3 contact {:e}, dm4 gap {:e}, payoff identity {:e}",
            cert.dm1_convex,
            cert.dm1_continuity_gap,
            cert.dm1_chord_violation,
            cert.dm2_min_gap,
            cert.dm3_max_contact_violation,
            cert.dm4_integral_gap,
            cert.payoff_identity_gap
        ));
    }
    let oracle = match cli.oracle_grid {
        None => Value::Null,
        Some(m) => {
            if m < 3 {
                return Err(Failure::config("--oracle-grid must be at least 3"));
            }
            let (cmp, _) = oracle_compare(&ctx, m, Discretization::CellMass)?;
            let bound = ORACLE_GAP_CONSTANT / m as f64;
            let dev = certified_deviation(&ctx, m)?;
            let pass = cmp.gap <= bound;
            if !pass {
                failures.push(format!("oracle gap {:e} exceeds {bound:e} at m = {m}", cmp.gap));
            }
            json!({"comparison": cmp, "bound": bound, "pass": pass, "certified_deviation": dev})
        }
    };
    let sh = ctx.shape;
    let result = json!({
        "scalars": {
            "r": sh.r, "v_l": sh.v_l, "v_h": sh.v_h, "v_t": sh.v_t, "beta": sh.beta,
            "eta": ctx.eta, "alpha_tilde": ctx.alpha_tilde,
        },
        "perturbation": perturbation,
        "certificate": cert,
        "oracle": oracle,
        "pass": failures.is_empty(),
    });
    emit_json(cli.out.as_deref(), &envelope("verify", hash, result))?;
    if failures.is_empty() {
        eprintln!("certificate passes");
        Ok(())
    } else {
        Err(Failure::certificate(failures.join("; ")))
    }
}

fn cmd_simulate(cli: &Cli, cfg: &RunConfig, hash: &str, curve: Option<&Path>) -> Outcome<()> {
    let seed = cli
        .seed
        .ok_or_else(|| Failure::config("simulate needs --seed"))?;
    let (s, cost_model) = match &cfg.s {
        CostSpec::Single(s) => (*s, CostModel::SingleCost(*s)),
        CostSpec::Distribution(k) => (k.s_min(), CostModel::Heterogeneous(k.clone())),
    };
    let eq = equilibrium(cli, cfg, s)?;
    let ctx = PayoffContext::from_equilibrium(&eq);
    let sim = SimConfig {
        consumers: cfg.consumers.unwrap_or(1_000_000),
        seed,
        n: eq.n,
        alpha: eq.alpha,
        cost_model,
        bins: cfg.bins.unwrap_or(10),
        parallel: true,
    };
    let report = simulate_market(&ctx, &sim)?;
    let max_z = report.z_scores.map(|z| z.max_abs());
    if let Some(path) = curve {
        let mut buf = format!("# tool_version={TOOL_VERSION} config_hash={hash}\n").into_bytes();
        write_curve_csv(&report.conditional_sale_curve, &mut buf).map_err(|e| Failure::config(format!("csv: {e}")))?;
        write_out(Some(path), &buf)?;
    }
    if let (Some(z), Some(a)) = (report.z_scores, report.analytic) {
        let show = |name: &str, hat: Option<f64>, truth: f64, z: Option<f64>| {
            if let (Some(h), Some(z)) = (hat, z) {
                eprintln!("{name:<18} simulated {h:.6}  analytic {truth:.6}  z = {z:+.2}");
            }
        };
        show("eta", report.eta_hat.map(|e| e.value), a.eta, z.eta);
        show("CS_s", report.cs_savvy_hat.map(|e| e.value), a.cs_savvy, z.cs_savvy);
        show("CS_i", report.cs_inexperienced_hat.map(|e| e.value), a.cs_inexperienced, z.cs_inexperienced);
        show("multi-search freq", Some(report.multi_search_freq), a.multi_search, z.multi_search);
        eprintln!("max |z| over sale shares {:.2}, over the payoff curve {:.2}", z.max_share, z.max_curve);
    }
    let result = json!({
        "equilibrium_scalars": {
            "r_star": eq.r_star, "v_l_star": eq.v_l_star, "v_h_star": eq.v_h_star,
            "v_t_star": eq.v_t_star, "beta_star": eq.beta_star, "eta": eq.eta, "alpha_tilde": eq.alpha_tilde,
        },
        "config": sim,
        "report": report,
        "max_abs_z": max_z,
    });
    emit_json(cli.out.as_deref(), &envelope("simulate", hash, result))?;
    match max_z {
        Some(z) if z > Z_FAIL => Err(Failure::statistical(format!("a z-score reached {z:.2}, above {Z_FAIL}"))),
        _ => Ok(()),
    }
}

fn cmd_limit(cli: &Cli, cfg: &RunConfig, hash: &str) -> Outcome<()> {
    let s = cfg.single_cost()?;
    let n_bar = n_lower_bar(&cfg.prior, cfg.alpha, s)?;
    let limit = limit_equilibrium(&cfg.prior, cfg.alpha, s)?;
    let doublings = cfg.doublings.unwrap_or(6);
    let ns: Vec<u32> = (0..=doublings)
        .map(|k| n_bar.checked_mul(1u32.checked_shl(k).unwrap_or(0)).filter(|&n| n > 0))
        .collect::<Option<_>>()
        .ok_or_else(|| Failure::config(format!("{doublings} doublings of {n_bar} overflow")))?;
    let rows: Vec<Outcome<Value>> = ns
        .par_iter()
        .map(|&n| {
            let eq = solve_endog(&cfg.prior, n, cfg.alpha, s)?;
            let root = v_h_large_n(&cfg.prior, n, s).ok();
            Ok(json!({
                "n": n,
                "v_h_star": eq.v_h_star,
                "v_h_root": root,
                "sup_distance_to_limit": sup_distance_to_limit(&eq.g, &limit, cli.grid_size),
            }))
        })
        .collect();
    let rows = rows.into_iter().collect::<Outcome<Vec<Value>>>()?;
    eprintln!("n_lower_bar = {n_bar}, v_H_inf = {:.10}, atom {:.10} at {:.10}", limit.v_h_inf, limit.atom_mass, limit.atom_location);
    let result = json!({
        "n_lower_bar": n_bar,
        "v_h_sequence": rows,
        "limit": limit,
    });
    emit_json(cli.out.as_deref(), &envelope("limit", hash, result))
}

fn cmd_hetero(cli: &Cli, cfg: &RunConfig, hash: &str) -> Outcome<()> {
    let k = match &cfg.s {
        CostSpec::Distribution(k) => k.clone(),
        CostSpec::Single(s) => CostDistribution::Discrete { points: vec![(*s, 1.0)] },
    };
    let at_n = match cfg.n {
        Some(n) => Some(hetero_check(&cfg.prior, n, cfg.alpha, &k)?),
        None => None,
    };
    let cap = cfg.n_cap.unwrap_or(1 << 12);
    let (first, scan_error) = match first_holding_n(&cfg.prior, cfg.alpha, &k, cap) {
        Ok(r) => (Some(r), None),
        Err(Error::CapExceeded(m)) => (None, Some(m)),
        Err(e) => return Err(e.into()),
    };
    if let Some(r) = &at_n {
        eprintln!("n = {}: holds = {}, lhs {:.6e} vs rhs {:.6e}", r.n, r.holds, r.lhs, r.rhs);
    }
    match &first {
        Some(r) => eprintln!("first n on the doubling scan where the condition holds: {}", r.n),
        None => eprintln!("condition fails on the doubling scan up to {cap}"),
    }
    let result = json!({
        "cost_distribution": k,
        "at_n": at_n,
        "first_holding": first,
        "scan_cap": cap,
        "scan_error": scan_error,
    });
    emit_json(cli.out.as_deref(), &envelope("hetero", hash, result))
}
