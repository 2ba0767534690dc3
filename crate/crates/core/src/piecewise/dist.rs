use serde::{Deserialize, Serialize};

use super::arc::PowerArc;
use super::curve::{CurveSegment, MonotoneCurve};
use crate::error::{Error, Result};
use crate::numeric::{binomial, integrate_split};

const COORD_TOL: f64 = 1e-12;
/// Sub-pieces used when two non-uniform pieces overlap in a mixture.
const MIXTURE_SUBDIVISION: usize = 64;

/// One power-law piece: on `[lo, hi)` the CDF rises by `mass·arc((x−lo)/(hi−lo))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistPiece {
    pub lo: f64,
    pub hi: f64,
    pub mass: f64,
    pub arc: PowerArc,
}

impl DistPiece {
    pub fn new(lo: f64, hi: f64, mass: f64, exponent: f64) -> Self {
        DistPiece { lo, hi, mass, arc: PowerArc::full(exponent) }
    }

    pub fn uniform(lo: f64, hi: f64, mass: f64) -> Self {
        DistPiece::new(lo, hi, mass, 1.0)
    }

    /// A uniform sliver of width `eps` standing in for a point mass at `at`.
    /// Centred on `at` and clipped into `[0, 1]`.
    pub fn sliver(at: f64, mass: f64, eps: f64) -> Self {
        let mut lo = at - 0.5 * eps;
        let mut hi = at + 0.5 * eps;
        if lo < 0.0 {
            lo = 0.0;
            hi = eps;
        }
        if hi > 1.0 {
            hi = 1.0;
            lo = 1.0 - eps;
        }
        DistPiece::uniform(lo, hi, mass)
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    fn local(&self, x: f64) -> f64 {
        ((x - self.lo) / self.width()).clamp(0.0, 1.0)
    }

    fn cdf_within(&self, x: f64) -> f64 {
        self.mass * self.arc.value(self.local(x))
    }

    fn point_at(&self, lam: f64) -> f64 {
        self.lo + self.width() * lam
    }

    /// Splits at `x` strictly inside the piece.
    fn split(&self, x: f64) -> (DistPiece, DistPiece) {
        let lam = self.local(x);
        let left_mass = self.mass * self.arc.value(lam);
        (
            DistPiece { lo: self.lo, hi: x, mass: left_mass, arc: self.arc.restrict(0.0, lam) },
            DistPiece { lo: x, hi: self.hi, mass: self.mass - left_mass, arc: self.arc.restrict(lam, 1.0) },
        )
    }

    fn scaled(&self, factor: f64) -> DistPiece {
        DistPiece { mass: self.mass * factor, ..*self }
    }
}

/// A distribution on `[0, 1]` made of disjoint, ordered power-law pieces.
///
/// The total mass is usually one; intermediate market states (remaining jobs,
/// remaining students) carry their un-normalized mass.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<DistPiece>", into = "Vec<DistPiece>")]
pub struct PiecewisePowerDist {
    pieces: Vec<DistPiece>,
    cum: Vec<f64>,
}

impl TryFrom<Vec<DistPiece>> for PiecewisePowerDist {
    type Error = Error;
    fn try_from(pieces: Vec<DistPiece>) -> Result<Self> {
        PiecewisePowerDist::new(pieces)
    }
}

impl From<PiecewisePowerDist> for Vec<DistPiece> {
    fn from(d: PiecewisePowerDist) -> Self {
        d.pieces
    }
}

/// Remove `fraction` of the mass lying in `[lo, hi]`, uniformly across it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Removal {
    pub lo: f64,
    pub hi: f64,
    pub fraction: f64,
}

impl PiecewisePowerDist {
    pub fn new(pieces: Vec<DistPiece>) -> Result<Self> {
        let mut out: Vec<DistPiece> = Vec::with_capacity(pieces.len());
        for (i, mut p) in pieces.into_iter().enumerate() {
            if !(p.lo.is_finite() && p.hi.is_finite() && p.mass.is_finite()) {
                return Err(Error::InvalidDistribution(format!("piece {i} has non-finite fields")));
            }
            if p.lo < -COORD_TOL || p.hi > 1.0 + COORD_TOL {
                return Err(Error::InvalidDistribution(format!(
                    "piece {i} [{}, {}] leaves [0, 1]",
                    p.lo, p.hi
                )));
            }
            p.lo = p.lo.max(0.0);
            p.hi = p.hi.min(1.0);
            if !(p.hi > p.lo) {
                return Err(Error::InvalidDistribution(format!("piece {i} has lo >= hi")));
            }
            if p.mass < 0.0 {
                return Err(Error::InvalidDistribution(format!("piece {i} has negative mass")));
            }
            if !(p.arc.exponent > 0.0) || !p.arc.exponent.is_finite() {
                return Err(Error::InvalidDistribution(format!("piece {i} has non-positive exponent")));
            }
            if let Some(prev) = out.last() {
                if p.lo < prev.hi - COORD_TOL {
                    return Err(Error::InvalidDistribution(format!(
                        "piece {i} overlaps or precedes its predecessor"
                    )));
                }
                p.lo = p.lo.max(prev.hi);
                if !(p.hi > p.lo) {
                    return Err(Error::InvalidDistribution(format!("piece {i} is empty after ordering")));
                }
            }
            if p.mass > 0.0 {
                out.push(p);
            }
        }
        if out.is_empty() {
            return Err(Error::InvalidDistribution("distribution has no mass".into()));
        }
        let mut cum = Vec::with_capacity(out.len());
        let mut acc = 0.0;
        for p in &out {
            cum.push(acc);
            acc += p.mass;
        }
        Ok(PiecewisePowerDist { pieces: out, cum })
    }

    pub fn uniform() -> Self {
        PiecewisePowerDist::new(vec![DistPiece::uniform(0.0, 1.0, 1.0)]).expect("valid")
    }

    /// CDF `x^exponent` on `[0, 1]`.
    pub fn power(exponent: f64) -> Result<Self> {
        PiecewisePowerDist::new(vec![DistPiece::new(0.0, 1.0, 1.0, exponent)])
    }

    pub fn pieces(&self) -> &[DistPiece] {
        &self.pieces
    }

    pub fn total_mass(&self) -> f64 {
        let last = self.pieces.len() - 1;
        self.cum[last] + self.pieces[last].mass
    }

    pub fn support(&self) -> (f64, f64) {
        (self.pieces[0].lo, self.pieces[self.pieces.len() - 1].hi)
    }

    /// Every piece endpoint, sorted and de-duplicated.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.pieces.iter().flat_map(|p| [p.lo, p.hi]).collect();
        v.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
        v
    }

    /// Index of the last piece with `lo <= x`, if any.
    fn piece_at(&self, x: f64) -> Option<usize> {
        let idx = self.pieces.partition_point(|p| p.lo <= x);
        idx.checked_sub(1)
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let x = x.clamp(0.0, 1.0);
        match self.piece_at(x) {
            None => 0.0,
            Some(i) => self.cum[i] + self.pieces[i].cdf_within(x),
        }
    }

    /// Smallest point whose cumulative mass reaches `m`.
    pub fn quantile(&self, m: f64) -> f64 {
        let total = self.total_mass();
        if m <= 0.0 {
            return self.pieces[0].lo;
        }
        if m >= total {
            return self.pieces[self.pieces.len() - 1].hi;
        }
        let i = self.cum.partition_point(|&c| c < m).saturating_sub(1);
        // cum[i] < m <= cum[i] + mass_i unless m sits exactly on the start of piece i+1
        let mut i = i;
        while i + 1 < self.pieces.len() && self.cum[i] + self.pieces[i].mass < m {
            i += 1;
        }
        let p = &self.pieces[i];
        let v = ((m - self.cum[i]) / p.mass).clamp(0.0, 1.0);
        p.point_at(p.arc.inverse_value(v))
    }

    pub fn mean(&self) -> f64 {
        self.partial_moment(0.0, 1.0, 1.0) / self.total_mass()
    }

    /// `∫_l^u t^k dD(t)`, closed form where the piece shape allows it,
    /// adaptive quadrature otherwise.
    pub fn partial_moment(&self, l: f64, u: f64, k: f64) -> f64 {
        self.moment_pieces(l, u, |p, x1, x2| {
            closed_form_moment(p, x1, x2, k).unwrap_or_else(|| quadrature_moment(p, x1, x2, k))
        })
    }

    /// The same integral always evaluated by quadrature in mass coordinates.
    pub fn partial_moment_quadrature(&self, l: f64, u: f64, k: f64) -> f64 {
        self.moment_pieces(l, u, |p, x1, x2| quadrature_moment(p, x1, x2, k))
    }

    fn moment_pieces<F: Fn(&DistPiece, f64, f64) -> f64>(&self, l: f64, u: f64, per_piece: F) -> f64 {
        let (l, u) = (l.max(0.0), u.min(1.0));
        if !(u > l) {
            return 0.0;
        }
        self.pieces
            .iter()
            .filter(|p| p.hi > l && p.lo < u)
            .map(|p| per_piece(p, p.lo.max(l), p.hi.min(u)))
            .sum()
    }

    /// `∫_l^u h(t) dD(t)` by quadrature over each piece's mass coordinate.
    /// `breaks` are points where `h` has kinks or jumps.
    pub fn expect<H: Fn(f64) -> f64>(&self, h: H, l: f64, u: f64, breaks: &[f64], tol: f64) -> f64 {
        let (l, u) = (l.max(0.0), u.min(1.0));
        if !(u > l) {
            return 0.0;
        }
        let overlapping: Vec<&DistPiece> = self.pieces.iter().filter(|p| p.hi > l && p.lo < u).collect();
        let per = tol / overlapping.len().max(1) as f64;
        let mut total = 0.0;
        for p in overlapping {
            let v1 = p.arc.value(p.local(l.max(p.lo)));
            let v2 = p.arc.value(p.local(u.min(p.hi)));
            let vb: Vec<f64> = breaks
                .iter()
                .filter(|&&b| b > p.lo && b < p.hi)
                .map(|&b| p.arc.value(p.local(b)))
                .collect();
            let g = |v: f64| h(p.point_at(p.arc.inverse_value(v)));
            total += p.mass * integrate_split(g, v1, v2, &vb, per / p.mass.max(1e-300));
        }
        total
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        PiecewisePowerDist::new(self.pieces.iter().map(|p| p.scaled(factor)).collect())
    }

    pub fn normalized(&self) -> Self {
        let t = self.total_mass();
        self.scaled(1.0 / t).expect("scaling a valid distribution by a positive factor")
    }

    /// Pieces split so that each point in `cuts` is a piece boundary.
    fn split_at(&self, cuts: &[f64]) -> Vec<DistPiece> {
        let mut cuts: Vec<f64> = cuts.to_vec();
        cuts.sort_by(|a, b| a.total_cmp(b));
        let mut out = Vec::with_capacity(self.pieces.len() + cuts.len());
        for p in &self.pieces {
            let mut rest = *p;
            for &c in cuts.iter().filter(|&&c| c > p.lo + 1e-15 && c < p.hi - 1e-15) {
                if c <= rest.lo + 1e-15 {
                    continue;
                }
                let (left, right) = rest.split(c);
                out.push(left);
                rest = right;
            }
            out.push(rest);
        }
        out
    }

    /// Removes mass per `removals` without renormalizing.
    pub fn remove(&self, removals: &[Removal]) -> Result<Self> {
        for r in removals {
            if !(r.fraction >= 0.0 && r.fraction <= 1.0 + 1e-12) || r.hi < r.lo {
                return Err(Error::RemovalExceedsMass { lo: r.lo, hi: r.hi, requested: r.fraction });
            }
        }
        let cuts: Vec<f64> = removals.iter().flat_map(|r| [r.lo, r.hi]).collect();
        let pieces = self
            .split_at(&cuts)
            .into_iter()
            .map(|p| {
                let mid = 0.5 * (p.lo + p.hi);
                let keep: f64 = removals
                    .iter()
                    .filter(|r| mid >= r.lo && mid <= r.hi)
                    .map(|r| (1.0 - r.fraction).max(0.0))
                    .product();
                p.scaled(keep)
            })
            .filter(|p| p.mass > 1e-300)
            .collect();
        PiecewisePowerDist::new(pieces)
    }

    /// Removes an absolute `mass` spread uniformly over `[lo, hi]`.
    pub fn remove_mass(&self, lo: f64, hi: f64, mass: f64) -> Result<Self> {
        let available = self.cdf(hi) - self.cdf(lo);
        if mass > available * (1.0 + 1e-9) + 1e-15 || mass < 0.0 {
            return Err(Error::RemovalExceedsMass { lo, hi, requested: mass / available.max(1e-300) });
        }
        if mass <= 0.0 {
            return Ok(self.clone());
        }
        self.remove(&[Removal { lo, hi, fraction: (mass / available).min(1.0) }])
    }

    /// Removes the listed portions and renormalizes the remainder to mass one.
    pub fn restrict_renormalize(&self, removed: &[Removal]) -> Result<Self> {
        Ok(self.remove(removed)?.normalized())
    }

    /// The sub-distribution lying between cumulative masses `m1` and `m2`.
    pub fn restrict_mass_range(&self, m1: f64, m2: f64) -> Result<Self> {
        let total = self.total_mass();
        let (m1, m2) = (m1.max(0.0), m2.min(total));
        if !(m2 > m1) {
            return Err(Error::InvalidDistribution("empty mass range".into()));
        }
        let pieces: Vec<DistPiece> = self
            .pieces
            .iter()
            .zip(&self.cum)
            .filter_map(|(p, &c)| {
                let (s, e) = (c.max(m1), (c + p.mass).min(m2));
                if e <= s {
                    return None;
                }
                let l1 = p.arc.inverse_value((s - c) / p.mass);
                let l2 = p.arc.inverse_value((e - c) / p.mass);
                let (x1, x2) = (p.point_at(l1), p.point_at(l2));
                if !(x2 > x1) {
                    return None;
                }
                Some(DistPiece { lo: x1, hi: x2, mass: e - s, arc: p.arc.restrict(l1, l2) })
            })
            .collect();
        PiecewisePowerDist::new(pieces)
    }

    /// `Σ wᵢ·Dᵢ`, with overlapping pieces merged onto a common partition.
    pub fn mixture(components: &[(f64, &PiecewisePowerDist)]) -> Result<Self> {
        let mut cuts: Vec<f64> = components.iter().flat_map(|(_, d)| d.breakpoints()).collect();
        cuts.sort_by(|a, b| a.total_cmp(b));
        cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
        let split: Vec<(f64, Vec<DistPiece>)> = components
            .iter()
            .filter(|(w, _)| *w > 0.0)
            .map(|(w, d)| (*w, d.split_at(&cuts)))
            .collect();
        let mut out = Vec::new();
        for win in cuts.windows(2) {
            let (a, b) = (win[0], win[1]);
            if !(b > a) {
                continue;
            }
            let mid = 0.5 * (a + b);
            let contrib: Vec<DistPiece> = split
                .iter()
                .flat_map(|(w, ps)| {
                    ps.iter().filter(move |p| p.lo <= mid && p.hi >= mid).map(move |p| p.scaled(*w))
                })
                .collect();
            match contrib.len() {
                0 => {}
                1 => out.push(DistPiece { lo: a, hi: b, ..contrib[0] }),
                _ if contrib.iter().all(|p| p.arc.is_linear()) => {
                    out.push(DistPiece::uniform(a, b, contrib.iter().map(|p| p.mass).sum()));
                }
                _ => {
                    let step = (b - a) / MIXTURE_SUBDIVISION as f64;
                    let cdf = |x: f64| contrib.iter().map(|p| p.cdf_within(x)).sum::<f64>();
                    for j in 0..MIXTURE_SUBDIVISION {
                        let x1 = a + step * j as f64;
                        let x2 = if j + 1 == MIXTURE_SUBDIVISION { b } else { x1 + step };
                        out.push(DistPiece::uniform(x1, x2, cdf(x2) - cdf(x1)));
                    }
                }
            }
        }
        PiecewisePowerDist::new(out)
    }

    /// Sup-distance between this CDF and the identity on `[0, 1]`.
    pub fn sup_deviation_from_uniform(&self) -> f64 {
        let mut pts = self.breakpoints();
        pts.extend((0..=1000).map(|i| i as f64 / 1000.0));
        pts.iter().map(|&x| (self.cdf(x) - x).abs()).fold(0.0, f64::max)
    }

    /// The CDF as a monotone curve from points to cumulative mass.
    pub fn cdf_curve(&self) -> MonotoneCurve {
        let mut segs = Vec::with_capacity(2 * self.pieces.len() + 1);
        let mut x = 0.0;
        for (p, &c) in self.pieces.iter().zip(&self.cum) {
            if p.lo > x {
                segs.push(CurveSegment::flat(x, p.lo, c));
            }
            segs.push(CurveSegment::power(p.lo, p.hi, c, c + p.mass, p.arc));
            x = p.hi;
        }
        if x < 1.0 {
            segs.push(CurveSegment::flat(x, 1.0, self.total_mass()));
        }
        MonotoneCurve::from_segments_unchecked(segs)
    }

    /// The quantile function as a monotone curve on `[0, total_mass]`;
    /// gaps in the support become jump segments.
    pub fn quantile_curve(&self) -> MonotoneCurve {
        let mut segs = Vec::with_capacity(2 * self.pieces.len());
        let mut prev_hi: Option<f64> = None;
        for (p, &c) in self.pieces.iter().zip(&self.cum) {
            if let Some(h) = prev_hi {
                if p.lo > h {
                    segs.push(CurveSegment::jump(c, h, p.lo));
                }
            }
            segs.push(CurveSegment::power(c, c + p.mass, p.lo, p.hi, p.arc.inverse()));
            prev_hi = Some(p.hi);
        }
        MonotoneCurve::from_segments_unchecked(segs)
    }
}

fn closed_form_moment(p: &DistPiece, x1: f64, x2: f64, k: f64) -> Option<f64> {
    let w = p.width();
    if p.arc.is_linear() {
        if (k + 1.0).abs() < 1e-300 {
            return None;
        }
        return Some(p.mass * (x2.powf(k + 1.0) - x1.powf(k + 1.0)) / ((k + 1.0) * w));
    }
    if p.arc.t_lo != 0.0 {
        return None;
    }
    let e = p.arc.exponent;
    let th = p.arc.t_hi;
    // x = lo + β·τ on τ ∈ [0, t_hi]; dD = mass·e·τ^{e−1}/t_hi^e dτ
    let beta = w / th;
    let tau = |x: f64| ((x - p.lo) / beta).clamp(0.0, th);
    let (t1, t2) = (tau(x1), tau(x2));
    let scale = p.mass * e / th.powf(e);
    if p.lo == 0.0 {
        return Some(scale * beta.powf(k) * (t2.powf(k + e) - t1.powf(k + e)) / (k + e));
    }
    if k >= 0.0 && k.fract() == 0.0 && k <= 32.0 {
        let n = k as u32;
        let s: f64 = (0..=n)
            .map(|j| {
                let jf = j as f64;
                binomial(n, j)
                    * p.lo.powi((n - j) as i32)
                    * beta.powi(j as i32)
                    * (t2.powf(jf + e) - t1.powf(jf + e))
                    / (jf + e)
            })
            .sum();
        return Some(scale * s);
    }
    None
}

fn quadrature_moment(p: &DistPiece, x1: f64, x2: f64, k: f64) -> f64 {
    let v1 = p.arc.value(p.local(x1));
    let v2 = p.arc.value(p.local(x2));
    let g = |v: f64| p.point_at(p.arc.inverse_value(v)).powf(k);
    p.mass * integrate_split(g, v1, v2, &[], 1e-12)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn figure_one_jobs() -> PiecewisePowerDist {
        PiecewisePowerDist::new(vec![
            DistPiece::uniform(0.0, 0.5, 1.0 / 3.0),
            DistPiece::uniform(0.5, 1.0, 2.0 / 3.0),
        ])
        .unwrap()
    }

    #[test]
    fn cdf_examples() {
        assert_eq!(PiecewisePowerDist::uniform().cdf(0.5), 0.5);
        let sq = PiecewisePowerDist::power(2.0).unwrap();
        assert!((sq.cdf(0.5) - 0.25).abs() < 1e-15);
        assert!((figure_one_jobs().cdf(0.5) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(sq.cdf(-3.0), 0.0);
        assert_eq!(sq.cdf(7.0), 1.0);
    }

    #[test]
    fn quantile_examples() {
        assert!((PiecewisePowerDist::uniform().quantile(0.25) - 0.25).abs() < 1e-15);
        assert!((PiecewisePowerDist::power(2.0).unwrap().quantile(0.25) - 0.5).abs() < 1e-15);
        assert!((figure_one_jobs().quantile(1.0 / 3.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn quantile_in_gap_returns_left_edge() {
        let d = PiecewisePowerDist::new(vec![
            DistPiece::uniform(0.0, 0.2, 0.5),
            DistPiece::uniform(0.6, 1.0, 0.5),
        ])
        .unwrap();
        assert!((d.quantile(0.5) - 0.2).abs() < 1e-15);
        assert!((d.quantile(0.5 + 1e-12) - 0.6).abs() < 1e-9);
        assert_eq!(d.cdf(0.4), 0.5);
    }

    #[test]
    fn partial_moment_examples() {
        assert!((PiecewisePowerDist::uniform().partial_moment(0.0, 1.0, 1.0) - 0.5).abs() < 1e-15);
        let sq = PiecewisePowerDist::power(2.0).unwrap();
        assert!((sq.partial_moment(0.0, 1.0, 1.0) - 2.0 / 3.0).abs() < 1e-14);
        let f = figure_one_jobs();
        let expected = 7.0 / 12.0;
        assert!((f.partial_moment(0.0, 1.0, 1.0) - expected).abs() < 1e-14);
        assert!((f.partial_moment_quadrature(0.0, 1.0, 1.0) - expected).abs() < 1e-10);
    }

    #[test]
    fn closed_form_agrees_with_quadrature_on_shifted_power_piece() {
        let d = PiecewisePowerDist::new(vec![
            DistPiece::new(0.0, 0.3, 0.4, 0.5),
            DistPiece::new(0.3, 1.0, 0.6, 2.5),
        ])
        .unwrap();
        for k in [0.0, 1.0, 2.0, 3.0] {
            for (l, u) in [(0.0, 1.0), (0.1, 0.7), (0.35, 0.9)] {
                let a = d.partial_moment(l, u, k);
                let b = d.partial_moment_quadrature(l, u, k);
                assert!((a - b).abs() < 1e-8, "k={k} [{l},{u}] {a} vs {b}");
            }
        }
    }

    #[test]
    fn restrict_renormalize_examples() {
        let u = PiecewisePowerDist::uniform();
        let r = u.restrict_renormalize(&[Removal { lo: 0.25, hi: 0.75, fraction: 1.0 }]).unwrap();
        assert_eq!(r.pieces().len(), 2);
        assert!((r.pieces()[0].mass - 0.5).abs() < 1e-15);
        assert!((r.pieces()[1].hi - 1.0).abs() < 1e-15 && (r.pieces()[1].lo - 0.75).abs() < 1e-15);
        assert_eq!(u.restrict_renormalize(&[]).unwrap(), u);
        assert!(u.remove(&[Removal { lo: 0.0, hi: 0.5, fraction: 1.5 }]).is_err());
    }

    #[test]
    fn restrict_renormalize_on_lowerbound_jobs() {
        let eps = 1e-3;
        let jobs = PiecewisePowerDist::new(vec![
            DistPiece::sliver(0.0, 0.25, eps),
            DistPiece::sliver(0.5 + eps, 0.5, eps),
            DistPiece::sliver(1.0, 0.25, eps),
        ])
        .unwrap();
        let mid = jobs.pieces()[1];
        let top = jobs.pieces()[2];
        let r = jobs
            .remove(&[
                Removal { lo: mid.lo, hi: mid.hi, fraction: 1.0 },
                Removal { lo: top.lo, hi: top.hi, fraction: 0.15 / 0.25 },
            ])
            .unwrap();
        assert!((r.total_mass() - 0.35).abs() < 1e-12);
        let n = r.normalized();
        assert_eq!(n.pieces().len(), 2);
        assert!((n.pieces()[1].mass - 0.1 / 0.35).abs() < 1e-12);
    }

    #[test]
    fn mixture_of_figure_one_schools_is_uniform() {
        let s1 = PiecewisePowerDist::new(vec![DistPiece::uniform(0.0, 2.0 / 3.0, 1.0)]).unwrap();
        let s2 = PiecewisePowerDist::new(vec![
            DistPiece::uniform(0.0, 2.0 / 3.0, 0.5),
            DistPiece::uniform(2.0 / 3.0, 1.0, 0.5),
        ])
        .unwrap();
        let m = PiecewisePowerDist::mixture(&[(1.0 / 3.0, &s1), (2.0 / 3.0, &s2)]).unwrap();
        assert!(m.sup_deviation_from_uniform() < 1e-14);
    }

    #[test]
    fn restrict_mass_range_is_exact_for_power_piece() {
        let sq = PiecewisePowerDist::power(2.0).unwrap();
        let top = sq.restrict_mass_range(0.25, 1.0).unwrap();
        assert!((top.total_mass() - 0.75).abs() < 1e-15);
        assert!((top.cdf(0.75) - (0.5625 - 0.25)).abs() < 1e-12);
    }

    #[test]
    fn quantile_curve_inverts_cdf() {
        let d = PiecewisePowerDist::new(vec![
            DistPiece::new(0.0, 0.3, 0.4, 0.5),
            DistPiece::new(0.5, 1.0, 0.6, 2.5),
        ])
        .unwrap();
        let q = d.quantile_curve();
        for i in 0..=100 {
            let m = i as f64 / 100.0;
            assert!((q.eval(m).unwrap() - d.quantile(m)).abs() < 1e-9, "{m}");
        }
        let c = d.cdf_curve();
        for i in 0..=100 {
            let x = i as f64 / 100.0;
            assert!((c.eval(x).unwrap() - d.cdf(x)).abs() < 1e-12);
        }
    }
}
