//! Piecewise representation of a posterior-mean distribution G on [0, 1].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prior::Prior;
use crate::quad;
use crate::tolerances::STRUCT_TOL;

/// One piece of G on [a, b).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Segment {
    /// G = F.
    FullDisclosure { a: f64, b: f64 },
    Flat { a: f64, b: f64, level: f64 },
    /// G = (base + beta (v - anchor))^(1/degree).
    AffinePower {
        a: f64,
        b: f64,
        base: f64,
        beta: f64,
        anchor: f64,
        degree: u32,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub location: f64,
    pub mass: f64,
}

impl Segment {
    pub fn bounds(&self) -> (f64, f64) {
        match *self {
            Segment::FullDisclosure { a, b }
            | Segment::Flat { a, b, .. }
            | Segment::AffinePower { a, b, .. } => (a, b),
        }
    }

    fn carries_mass(&self) -> bool {
        !matches!(self, Segment::Flat { .. })
    }

    fn value(&self, prior: &Prior, v: f64) -> f64 {
        match *self {
            Segment::FullDisclosure { .. } => prior.cdf_at(v),
            Segment::Flat { level, .. } => level,
            Segment::AffinePower {
                base,
                beta,
                anchor,
                degree,
                ..
            } => affine_level(base, beta, anchor, v).powf(1.0 / degree as f64),
        }
    }

    /// Integral of G^k over [lo, hi] inside the segment.
    fn integral_pow(&self, prior: &Prior, k: f64, lo: f64, hi: f64) -> f64 {
        if hi <= lo {
            return 0.0;
        }
        match *self {
            Segment::FullDisclosure { .. } => prior.integral_cdf_pow(k, lo, hi),
            Segment::Flat { level, .. } => level.powf(k) * (hi - lo),
            Segment::AffinePower {
                base,
                beta,
                anchor,
                degree,
                ..
            } => {
                let p = k / degree as f64 + 1.0;
                let l_hi = affine_level(base, beta, anchor, hi);
                let l_lo = affine_level(base, beta, anchor, lo);
                (l_hi.powf(p) - l_lo.powf(p)) / (p * beta)
            }
        }
    }

    fn with_end(&self, end: f64) -> Segment {
        let mut s = self.clone();
        match &mut s {
            Segment::FullDisclosure { b, .. }
            | Segment::Flat { b, .. }
            | Segment::AffinePower { b, .. } => *b = end,
        }
        s
    }

    fn inverse(&self, prior: &Prior, q: f64) -> f64 {
        let (a, b) = self.bounds();
        let v = match *self {
            Segment::FullDisclosure { .. } => prior.quantile_at(q),
            Segment::Flat { .. } => a,
            Segment::AffinePower {
                base,
                beta,
                anchor,
                degree,
                ..
            } => anchor + (q.powi(degree as i32) - base) / beta,
        };
        v.clamp(a, b)
    }
}

fn affine_level(base: f64, beta: f64, anchor: f64, v: f64) -> f64 {
    (base + beta * (v - anchor)).max(0.0)
}

/// A distribution of posterior means, stored as contiguous segments plus atoms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PosteriorRepr", into = "PosteriorRepr")]
pub struct PosteriorDistribution {
    prior: Prior,
    segments: Vec<Segment>,
    atoms: Vec<Atom>,
    prefix: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PosteriorRepr {
    prior: Prior,
    segments: Vec<Segment>,
    #[serde(default)]
    atoms: Vec<Atom>,
}

impl TryFrom<PosteriorRepr> for PosteriorDistribution {
    type Error = Error;

    fn try_from(r: PosteriorRepr) -> Result<Self> {
        PosteriorDistribution::new(r.prior, r.segments, r.atoms)
    }
}

impl From<PosteriorDistribution> for PosteriorRepr {
    fn from(g: PosteriorDistribution) -> Self {
        PosteriorRepr {
            prior: g.prior,
            segments: g.segments,
            atoms: g.atoms,
        }
    }
}

fn bad(msg: String) -> Error {
    Error::InvalidPosterior(msg)
}

impl PosteriorDistribution {
    /// Validates contiguity, monotonicity and that every cdf jump is a declared atom.
    pub fn new(prior: Prior, segments: Vec<Segment>, mut atoms: Vec<Atom>) -> Result<Self> {
        if segments.is_empty() {
            return Err(bad("no segments".into()));
        }
        if segments[0].bounds().0 != 0.0 || segments[segments.len() - 1].bounds().1 != 1.0 {
            return Err(bad("segments must cover [0, 1]".into()));
        }
        for s in &segments {
            let (a, b) = s.bounds();
            if !(a < b) {
                return Err(bad(format!("empty segment [{a}, {b}]")));
            }
            match *s {
                Segment::Flat { level, .. } if !(0.0..=1.0 + STRUCT_TOL).contains(&level) => {
                    return Err(bad(format!("flat level {level} outside [0, 1]")));
                }
                Segment::AffinePower { beta, degree, .. } if !(beta > 0.0) || degree == 0 => {
                    return Err(bad("affine-power piece needs beta > 0 and degree >= 1".into()));
                }
                _ => {}
            }
        }
        for w in segments.windows(2) {
            if w[0].bounds().1 != w[1].bounds().0 {
                return Err(bad(format!("gap between {:?} and {:?}", w[0], w[1])));
            }
        }
        atoms.retain(|a| a.mass > 0.0);
        atoms.sort_by(|x, y| x.location.total_cmp(&y.location));
        for a in &atoms {
            if !(0.0..=1.0).contains(&a.location) || a.mass > 1.0 + STRUCT_TOL {
                return Err(bad(format!("atom {a:?} out of range")));
            }
        }
        let atom_at = |x: f64| -> f64 {
            atoms
                .iter()
                .filter(|a| a.location == x)
                .map(|a| a.mass)
                .sum()
        };
        let mut declared = 0.0;
        let mut left = 0.0;
        for s in &segments {
            let (a, b) = s.bounds();
            let start = s.value(&prior, a);
            let jump = start - left;
            let expected = atom_at(a);
            if (jump - expected).abs() > STRUCT_TOL {
                return Err(bad(format!(
                    "cdf jumps by {jump} at {a} but declared atom mass is {expected}"
                )));
            }
            declared += expected;
            let end = s.value(&prior, b);
            if end < start - STRUCT_TOL {
                return Err(bad(format!("cdf decreases on [{a}, {b}]")));
            }
            left = end;
        }
        let at_one = atom_at(1.0);
        if (left + at_one - 1.0).abs() > STRUCT_TOL {
            return Err(bad(format!("cdf reaches {} at 1", left + at_one)));
        }
        declared += at_one;
        let total: f64 = atoms.iter().map(|a| a.mass).sum();
        if (total - declared).abs() > STRUCT_TOL {
            return Err(bad("an atom sits where the cdf does not jump".into()));
        }
        let mut prefix = Vec::with_capacity(segments.len() + 1);
        let mut acc = 0.0;
        prefix.push(0.0);
        for s in &segments {
            let (a, b) = s.bounds();
            acc += s.integral_pow(&prior, 1.0, a, b);
            prefix.push(acc);
        }
        Ok(Self {
            prior,
            segments,
            atoms,
            prefix,
        })
    }

    pub fn full_disclosure(prior: &Prior) -> Self {
        Self::new(prior.clone(), vec![Segment::FullDisclosure { a: 0.0, b: 1.0 }], vec![])
            .expect("full disclosure is a valid distribution")
    }

    /// All mass at `x`, for x in (0, 1).
    pub fn point_mass(prior: &Prior, x: f64) -> Result<Self> {
        Self::discrete(prior, &[(x, 1.0)])
    }

    /// Finitely many atoms (location, mass).
    pub fn discrete(prior: &Prior, points: &[(f64, f64)]) -> Result<Self> {
        let mut pts: Vec<(f64, f64)> = points.iter().copied().filter(|p| p.1 > 0.0).collect();
        pts.sort_by(|x, y| x.0.total_cmp(&y.0));
        let total: f64 = pts.iter().map(|p| p.1).sum();
        if pts.is_empty() || (total - 1.0).abs() > STRUCT_TOL {
            return Err(bad(format!("atom masses sum to {total}")));
        }
        let mut merged: Vec<(f64, f64)> = Vec::new();
        for (x, m) in pts {
            match merged.last_mut() {
                Some(last) if last.0 == x => last.1 += m,
                _ => merged.push((x, m)),
            }
        }
        let mut segments = Vec::new();
        let mut edges: Vec<f64> = merged.iter().map(|p| p.0).filter(|&x| x > 0.0 && x < 1.0).collect();
        edges.insert(0, 0.0);
        edges.push(1.0);
        let mut cum = 0.0;
        for w in edges.windows(2) {
            cum += merged
                .iter()
                .filter(|p| p.0 == w[0])
                .map(|p| p.1)
                .sum::<f64>();
            segments.push(Segment::Flat {
                a: w[0],
                b: w[1],
                level: cum.min(1.0),
            });
        }
        let atoms = merged
            .iter()
            .map(|&(location, mass)| Atom { location, mass })
            .collect();
        Self::new(prior.clone(), segments, atoms)
    }

    pub fn prior(&self) -> &Prior {
        &self.prior
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    fn locate(&self, v: f64) -> usize {
        let j = self.segments.partition_point(|s| s.bounds().0 <= v);
        j.saturating_sub(1)
    }

    /// Right-continuous cdf.
    pub fn cdf(&self, v: f64) -> f64 {
        if v < 0.0 {
            return 0.0;
        }
        if v >= 1.0 {
            return 1.0;
        }
        self.segments[self.locate(v)].value(&self.prior, v).min(1.0)
    }

    /// Left limit G(v-).
    pub fn cdf_left(&self, v: f64) -> f64 {
        let atom: f64 = self
            .atoms
            .iter()
            .filter(|a| a.location == v)
            .map(|a| a.mass)
            .sum();
        (self.cdf(v) - atom).max(0.0)
    }

    /// Integral of G over [0, z].
    pub fn integral_cdf(&self, z: f64) -> f64 {
        if z <= 0.0 {
            return 0.0;
        }
        if z >= 1.0 {
            return self.prefix[self.segments.len()];
        }
        let j = self.locate(z);
        let s = &self.segments[j];
        self.prefix[j] + s.integral_pow(&self.prior, 1.0, s.bounds().0, z)
    }

    /// Integral of G^k over [0, 1].
    pub fn integral_cdf_pow(&self, k: f64) -> f64 {
        self.integral_cdf_pow_upto(k, 1.0)
    }

    /// Integral of G^k over [0, z].
    pub fn integral_cdf_pow_upto(&self, k: f64, z: f64) -> f64 {
        self.segments
            .iter()
            .map(|s| {
                let (a, b) = s.bounds();
                s.integral_pow(&self.prior, k, a, b.min(z))
            })
            .sum()
    }

    pub fn mean(&self) -> f64 {
        1.0 - self.integral_cdf(1.0)
    }

    /// Smallest v with G(v) >= q.
    pub fn quantile(&self, q: f64) -> f64 {
        for s in &self.segments {
            let (a, b) = s.bounds();
            if q <= s.value(&self.prior, a) {
                return a;
            }
            if s.carries_mass() && q <= s.value(&self.prior, b) {
                return s.inverse(&self.prior, q);
            }
        }
        1.0
    }

    /// Expectation of f under G; continuous pieces are integrated in quantile
    /// space and split at `breaks`.
    pub fn expect<F: Fn(f64) -> f64>(&self, f: F, breaks: &[f64]) -> f64 {
        let mut total: f64 = self.atoms.iter().map(|a| a.mass * f(a.location)).sum();
        for s in self.segments.iter().filter(|s| s.carries_mass()) {
            let (a, b) = s.bounds();
            let mut cuts = vec![a];
            cuts.extend(breaks.iter().copied().filter(|&x| x > a && x < b));
            cuts.push(b);
            cuts.sort_by(f64::total_cmp);
            if matches!(s, Segment::FullDisclosure { .. }) {
                cuts.extend(self.prior.kinks().into_iter().filter(|&x| x > a && x < b));
                cuts.sort_by(f64::total_cmp);
            }
            for w in cuts.windows(2) {
                let (lo, hi) = (w[0], w[1]);
                total += match s {
                    Segment::FullDisclosure { .. } => self.expect_on_prior(&f, lo, hi),
                    _ => {
                        let q0 = s.value(&self.prior, lo);
                        let q1 = s.value(&self.prior, hi);
                        quad::integrate_composite(
                            |q| f(s.inverse(&self.prior, q).clamp(lo, hi)),
                            q0,
                            q1.max(q0),
                            4,
                        )
                    }
                };
            }
        }
        total
    }

    /// Integral of f dF over [lo, hi], with panels graded toward 0 where the
    /// density of a power prior is not smooth.
    fn expect_on_prior<F: Fn(f64) -> f64>(&self, f: &F, lo: f64, hi: f64) -> f64 {
        let g = |v: f64| f(v) * self.prior.density(v);
        let graded = matches!(self.prior, Prior::Power { a } if a.fract() != 0.0) && lo == 0.0;
        if !graded {
            return quad::integrate_composite(g, lo, hi, 4);
        }
        let mut edges = vec![0.0];
        edges.extend((1..=48).rev().map(|k| hi * 0.5f64.powi(k)));
        edges.push(hi);
        edges.windows(2).map(|w| quad::integrate(g, w[0], w[1])).sum()
    }

    /// Distribution of min(v, r): G below r and the remaining mass as an atom at r.
    pub fn censor_above(&self, r: f64) -> Result<Self> {
        if !(r > 0.0 && r < 1.0) {
            return Err(bad(format!("censoring point {r} outside (0, 1)")));
        }
        let mut segments: Vec<Segment> = self
            .segments
            .iter()
            .filter(|s| s.bounds().0 < r)
            .map(|s| if s.bounds().1 > r { s.with_end(r) } else { s.clone() })
            .collect();
        segments.push(Segment::Flat { a: r, b: 1.0, level: 1.0 });
        let mut atoms: Vec<Atom> = self.atoms.iter().copied().filter(|a| a.location < r).collect();
        atoms.push(Atom {
            location: r,
            mass: 1.0 - self.cdf_left(r),
        });
        Self::new(self.prior.clone(), segments, atoms)
    }

    /// Smallest v with G(v) = 1.
    pub fn top(&self) -> f64 {
        self.quantile(1.0)
    }

    /// Closed intervals carrying continuous mass, and atom locations as
    /// degenerate intervals.
    pub fn support(&self) -> Vec<(f64, f64)> {
        let mut out: Vec<(f64, f64)> = self
            .segments
            .iter()
            .filter(|s| s.carries_mass())
            .filter_map(|s| {
                let (a, b) = s.bounds();
                let top = match *s {
                    Segment::AffinePower { .. } if s.value(&self.prior, b) >= 1.0 => {
                        s.inverse(&self.prior, 1.0)
                    }
                    _ => b,
                };
                (s.value(&self.prior, top) > s.value(&self.prior, a)).then_some((a, top))
            })
            .collect();
        out.extend(self.atoms.iter().map(|a| (a.location, a.location)));
        out.sort_by(|x, y| x.0.total_cmp(&y.0));
        out
    }

    /// Segment endpoints and atom locations.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut pts: Vec<f64> = self.segments.iter().map(|s| s.bounds().0).collect();
        pts.push(1.0);
        pts.extend(self.atoms.iter().map(|a| a.location));
        pts.extend(self.prior.kinks());
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        pts
    }

    /// Largest |G - F| over the given points.
    pub fn sup_distance_to_prior(&self, points: &[f64]) -> f64 {
        points
            .iter()
            .map(|&v| (self.cdf(v) - self.prior.cdf_at(v)).abs())
            .fold(0.0, f64::max)
    }

    /// Largest |G - H| over the given points.
    pub fn sup_distance(&self, other: &PosteriorDistribution, points: &[f64]) -> f64 {
        points
            .iter()
            .map(|&v| (self.cdf(v) - other.cdf(v)).abs())
            .fold(0.0, f64::max)
    }
}

/// Uniform grid of `m` points on [0, 1] merged with `extra`.
pub fn grid_with(m: usize, extra: &[f64]) -> Vec<f64> {
    let m = m.max(2);
    let mut pts: Vec<f64> = (0..m).map(|i| i as f64 / (m - 1) as f64).collect();
    pts.extend(extra.iter().copied().filter(|x| (0.0..=1.0).contains(x)));
    pts.sort_by(f64::total_cmp);
    pts.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
    pts
}
