//! The prior valuation distribution F on [0, 1].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tolerances::{MAX_BISECTIONS, ROOT_ABS_TOL};

/// Valuation distribution with full support on [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PriorRepr", into = "PriorRepr")]
pub enum Prior {
    Uniform,
    /// F(v) = v^a.
    Power { a: f64 },
    /// Linear interpolation between (value, probability) knots.
    Piecewise { knots: Vec<(f64, f64)> },
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase", deny_unknown_fields)]
enum PriorRepr {
    Uniform,
    Power { a: f64 },
    Piecewise { knots: Vec<(f64, f64)> },
}

impl TryFrom<PriorRepr> for Prior {
    type Error = Error;

    fn try_from(repr: PriorRepr) -> Result<Self> {
        match repr {
            PriorRepr::Uniform => Ok(Prior::Uniform),
            PriorRepr::Power { a } => Prior::power(a),
            PriorRepr::Piecewise { knots } => Prior::piecewise(knots),
        }
    }
}

impl From<Prior> for PriorRepr {
    fn from(p: Prior) -> Self {
        match p {
            Prior::Uniform => PriorRepr::Uniform,
            Prior::Power { a } => PriorRepr::Power { a },
            Prior::Piecewise { knots } => PriorRepr::Piecewise { knots },
        }
    }
}

/// Moments of F restricted to (a, b).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncatedMoments {
    pub mass: f64,
    /// E_F[v | a < v < b].
    pub mu_tilde: f64,
    /// E_F[F(v)^{n-1} | a < v < b].
    pub eta_tilde: f64,
}

fn check_unit(what: &str, x: f64) -> Result<()> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(Error::Domain(format!("{what} = {x} outside [0, 1]")))
    }
}

impl Prior {
    pub fn power(a: f64) -> Result<Self> {
        if !(a.is_finite() && a > 0.0) {
            return Err(Error::InvalidPrior(format!("power exponent {a} must be positive")));
        }
        Ok(Prior::Power { a })
    }

    pub fn piecewise(knots: Vec<(f64, f64)>) -> Result<Self> {
        if knots.len() < 2 {
            return Err(Error::InvalidPrior("need at least two knots".into()));
        }
        let first = knots[0];
        let last = knots[knots.len() - 1];
        if first != (0.0, 0.0) || last != (1.0, 1.0) {
            return Err(Error::InvalidPrior("knots must start at (0,0) and end at (1,1)".into()));
        }
        for w in knots.windows(2) {
            if !(w[1].0 > w[0].0 && w[1].1 > w[0].1) {
                return Err(Error::InvalidPrior(format!(
                    "knots must be strictly increasing in both coordinates: {:?} -> {:?}",
                    w[0], w[1]
                )));
            }
        }
        Ok(Prior::Piecewise { knots })
    }

    /// F(v); errors outside [0, 1].
    pub fn cdf(&self, v: f64) -> Result<f64> {
        check_unit("v", v)?;
        Ok(self.cdf_at(v))
    }

    /// F(v) with v clamped to [0, 1].
    pub fn cdf_at(&self, v: f64) -> f64 {
        let v = v.clamp(0.0, 1.0);
        match self {
            Prior::Uniform => v,
            Prior::Power { a } => v.powf(*a),
            Prior::Piecewise { knots } => {
                let j = segment_index(knots, v);
                let (x0, y0) = knots[j];
                let (x1, y1) = knots[j + 1];
                y0 + (y1 - y0) * (v - x0) / (x1 - x0)
            }
        }
    }

    /// Right density f(v+) (left density at v = 1).
    pub fn density(&self, v: f64) -> f64 {
        let v = v.clamp(0.0, 1.0);
        match self {
            Prior::Uniform => 1.0,
            Prior::Power { a } => {
                if v == 0.0 {
                    if *a < 1.0 {
                        f64::INFINITY
                    } else if *a == 1.0 {
                        1.0
                    } else {
                        0.0
                    }
                } else {
                    a * v.powf(a - 1.0)
                }
            }
            Prior::Piecewise { knots } => {
                let j = segment_index(knots, v);
                slope(knots, j)
            }
        }
    }

    /// Smallest v with F(v) >= q.
    pub fn quantile(&self, q: f64) -> Result<f64> {
        check_unit("q", q)?;
        Ok(self.quantile_at(q))
    }

    pub fn quantile_at(&self, q: f64) -> f64 {
        let q = q.clamp(0.0, 1.0);
        match self {
            Prior::Uniform => q,
            Prior::Power { a } => q.powf(1.0 / a),
            Prior::Piecewise { knots } => {
                let j = knots
                    .windows(2)
                    .position(|w| q <= w[1].1)
                    .unwrap_or(knots.len() - 2);
                let (x0, y0) = knots[j];
                let (x1, y1) = knots[j + 1];
                (x0 + (q - y0) * (x1 - x0) / (y1 - y0)).clamp(x0, x1)
            }
        }
    }

    pub fn mean(&self) -> f64 {
        self.partial_mean(0.0, 1.0)
    }

    /// Integral of v dF over [a, b].
    pub fn partial_mean(&self, a: f64, b: f64) -> f64 {
        let (a, b) = (a.clamp(0.0, 1.0), b.clamp(0.0, 1.0));
        if b <= a {
            return 0.0;
        }
        match self {
            Prior::Uniform => 0.5 * (b * b - a * a),
            Prior::Power { a: k } => k / (k + 1.0) * (b.powf(k + 1.0) - a.powf(k + 1.0)),
            Prior::Piecewise { knots } => over_segments(knots, a, b, |j, lo, hi| {
                0.5 * slope(knots, j) * (hi * hi - lo * lo)
            }),
        }
    }

    /// Integral of F(v)^k dv over [a, b], k >= 0.
    pub fn integral_cdf_pow(&self, k: f64, a: f64, b: f64) -> f64 {
        let (a, b) = (a.clamp(0.0, 1.0), b.clamp(0.0, 1.0));
        if b <= a {
            return 0.0;
        }
        match self {
            Prior::Uniform => (b.powf(k + 1.0) - a.powf(k + 1.0)) / (k + 1.0),
            Prior::Power { a: e } => {
                let p = e * k + 1.0;
                (b.powf(p) - a.powf(p)) / p
            }
            Prior::Piecewise { knots } => over_segments(knots, a, b, |j, lo, hi| {
                let d = slope(knots, j);
                let (flo, fhi) = (self.cdf_at(lo), self.cdf_at(hi));
                (fhi.powf(k + 1.0) - flo.powf(k + 1.0)) / ((k + 1.0) * d)
            }),
        }
    }

    /// Integral of F(v) dv over [a, b].
    pub fn integral_cdf(&self, a: f64, b: f64) -> f64 {
        self.integral_cdf_pow(1.0, a, b)
    }

    pub fn truncated_moments(&self, a: f64, b: f64, n: u32) -> Result<TruncatedMoments> {
        if !(b > a) {
            return Err(Error::DegenerateInterval { lo: a, hi: b });
        }
        check_unit("a", a)?;
        check_unit("b", b)?;
        let (fa, fb) = (self.cdf_at(a), self.cdf_at(b));
        let mass = fb - fa;
        if mass <= 0.0 {
            return Err(Error::DegenerateInterval { lo: a, hi: b });
        }
        let nf = n as f64;
        Ok(TruncatedMoments {
            mass,
            mu_tilde: (self.partial_mean(a, b) / mass).clamp(a, b),
            eta_tilde: (fb.powi(n as i32) - fa.powi(n as i32)) / (nf * mass),
        })
    }

    /// E_F[v | v > a].
    pub fn upper_conditional_mean(&self, a: f64) -> f64 {
        let mass = 1.0 - self.cdf_at(a);
        if mass <= 0.0 {
            return 1.0;
        }
        self.partial_mean(a, 1.0) / mass
    }

    /// Right derivative of F(v)^{n-1}.
    pub fn power_slope(&self, n: u32, v: f64) -> f64 {
        let m = n.saturating_sub(1);
        if m == 0 {
            return 0.0;
        }
        match self {
            Prior::Uniform => m as f64 * v.clamp(0.0, 1.0).powi(m as i32 - 1),
            Prior::Power { a } => {
                let e = a * m as f64;
                if e == 1.0 {
                    1.0
                } else {
                    e * v.clamp(0.0, 1.0).powf(e - 1.0)
                }
            }
            _ => m as f64 * self.density(v) * self.cdf_at(v).powi(m as i32 - 1),
        }
    }

    /// Constant slope of F^{n-1} when that function is affine.
    pub fn affine_power_slope(&self, n: u32) -> Option<f64> {
        let m = n.saturating_sub(1) as f64;
        match self {
            Prior::Uniform if n == 2 => Some(1.0),
            Prior::Power { a } if (a * m - 1.0).abs() < 1e-15 => Some(1.0),
            Prior::Piecewise { knots } if knots.len() == 2 && n == 2 => Some(1.0),
            _ => None,
        }
    }

    /// Whether F^{n-1} is weakly convex on [0, 1].
    pub fn check_convexity(&self, n: u32) -> bool {
        let m = n.saturating_sub(1) as f64;
        match self {
            Prior::Uniform => true,
            Prior::Power { a } => a * m >= 1.0,
            Prior::Piecewise { .. } => {
                let k = 1000;
                let h = 1.0 / k as f64;
                let g: Vec<f64> = (0..=k)
                    .map(|i| self.cdf_at(i as f64 * h).powf(m))
                    .collect();
                g.windows(3).all(|w| w[2] - 2.0 * w[1] + w[0] >= -1e-10)
            }
        }
    }

    /// Point in [lo, hi] maximizing beta*v - F(v)^{n-1}, for convex F^{n-1}.
    pub fn slope_contact(&self, n: u32, beta: f64, lo: f64, hi: f64) -> f64 {
        if self.power_slope(n, lo) >= beta {
            return lo;
        }
        if self.power_slope(n, hi) <= beta {
            return hi;
        }
        if let Prior::Power { a } = self {
            let e = a * (n - 1) as f64;
            if e > 1.0 {
                return (beta / e).powf(1.0 / (e - 1.0)).clamp(lo, hi);
            }
        }
        if let Prior::Uniform = self {
            let m = (n - 1) as f64;
            if m > 1.0 {
                return (beta / m).powf(1.0 / (m - 1.0)).clamp(lo, hi);
            }
        }
        let (mut a, mut b) = (lo, hi);
        for _ in 0..MAX_BISECTIONS {
            if b - a <= ROOT_ABS_TOL {
                break;
            }
            let mid = 0.5 * (a + b);
            if self.power_slope(n, mid) < beta {
                a = mid;
            } else {
                b = mid;
            }
        }
        0.5 * (a + b)
    }

    /// Points where F fails to be smooth.
    pub fn kinks(&self) -> Vec<f64> {
        match self {
            Prior::Piecewise { knots } => knots[1..knots.len() - 1].iter().map(|k| k.0).collect(),
            _ => Vec::new(),
        }
    }
}

fn slope(knots: &[(f64, f64)], j: usize) -> f64 {
    (knots[j + 1].1 - knots[j].1) / (knots[j + 1].0 - knots[j].0)
}

fn segment_index(knots: &[(f64, f64)], v: f64) -> usize {
    let j = knots.partition_point(|k| k.0 <= v);
    j.saturating_sub(1).min(knots.len() - 2)
}

fn over_segments<F: Fn(usize, f64, f64) -> f64>(knots: &[(f64, f64)], a: f64, b: f64, f: F) -> f64 {
    let mut total = 0.0;
    for j in 0..knots.len() - 1 {
        let lo = knots[j].0.max(a);
        let hi = knots[j + 1].0.min(b);
        if hi > lo {
            total += f(j, lo, hi);
        }
    }
    total
}
