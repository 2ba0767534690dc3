use serde::{Deserialize, Serialize};

use super::arc::PowerArc;
use crate::error::{Error, Result};

const CHAIN_TOL: f64 = 1e-9;
const DOMAIN_TOL: f64 = 1e-9;
/// Linear pieces used when composing two non-linear power segments.
const COMPOSE_SUBDIVISION: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentKind {
    Power,
    Flat,
    Jump,
}

/// One piece of a monotone curve, `x ↦ q_lo + (q_hi − q_lo)·arc((x − a_lo)/(a_hi − a_lo))`.
///
/// `Flat` pieces have `q_lo == q_hi`; `Jump` pieces are vertical (`a_lo == a_hi`).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveSegment {
    pub a_lo: f64,
    pub a_hi: f64,
    pub q_lo: f64,
    pub q_hi: f64,
    pub arc: PowerArc,
    pub kind: SegmentKind,
}

impl CurveSegment {
    pub fn power(a_lo: f64, a_hi: f64, q_lo: f64, q_hi: f64, arc: PowerArc) -> Self {
        if q_hi <= q_lo {
            return CurveSegment::flat(a_lo, a_hi, q_lo);
        }
        CurveSegment { a_lo, a_hi, q_lo, q_hi, arc, kind: SegmentKind::Power }
    }

    pub fn linear(a_lo: f64, a_hi: f64, q_lo: f64, q_hi: f64) -> Self {
        CurveSegment::power(a_lo, a_hi, q_lo, q_hi, PowerArc::LINEAR)
    }

    pub fn flat(a_lo: f64, a_hi: f64, q: f64) -> Self {
        CurveSegment { a_lo, a_hi, q_lo: q, q_hi: q, arc: PowerArc::LINEAR, kind: SegmentKind::Flat }
    }

    pub fn jump(a: f64, q_lo: f64, q_hi: f64) -> Self {
        CurveSegment { a_lo: a, a_hi: a, q_lo, q_hi, arc: PowerArc::LINEAR, kind: SegmentKind::Jump }
    }

    fn width(&self) -> f64 {
        self.a_hi - self.a_lo
    }

    fn local(&self, x: f64) -> f64 {
        if self.width() <= 0.0 {
            return 0.0;
        }
        ((x - self.a_lo) / self.width()).clamp(0.0, 1.0)
    }

    pub fn value(&self, x: f64) -> f64 {
        match self.kind {
            SegmentKind::Flat => self.q_lo,
            SegmentKind::Jump => self.q_lo,
            SegmentKind::Power => self.q_lo + (self.q_hi - self.q_lo) * self.arc.value(self.local(x)),
        }
    }

    fn inverse_local(&self, q: f64) -> f64 {
        match self.kind {
            SegmentKind::Flat => 0.5 * (self.a_lo + self.a_hi),
            SegmentKind::Jump => self.a_lo,
            SegmentKind::Power => {
                let v = ((q - self.q_lo) / (self.q_hi - self.q_lo)).clamp(0.0, 1.0);
                self.a_lo + self.width() * self.arc.inverse_value(v)
            }
        }
    }

    fn slope_at(&self, x: f64) -> f64 {
        match self.kind {
            SegmentKind::Flat => 0.0,
            SegmentKind::Jump => f64::INFINITY,
            SegmentKind::Power => {
                (self.q_hi - self.q_lo) / self.width() * self.arc.derivative(self.local(x))
            }
        }
    }

    /// `∫_{a_lo}^{x} value`.
    fn integral_to(&self, x: f64) -> f64 {
        match self.kind {
            SegmentKind::Jump => 0.0,
            SegmentKind::Flat => self.q_lo * (x.clamp(self.a_lo, self.a_hi) - self.a_lo),
            SegmentKind::Power => {
                let lam = self.local(x);
                self.width() * (self.q_lo * lam + (self.q_hi - self.q_lo) * self.arc.integral(lam))
            }
        }
    }

    fn restrict(&self, x1: f64, x2: f64) -> CurveSegment {
        let (l1, l2) = (self.local(x1), self.local(x2));
        match self.kind {
            SegmentKind::Power => CurveSegment::power(x1, x2, self.value(x1), self.value(x2), self.arc.restrict(l1, l2)),
            SegmentKind::Flat => CurveSegment::flat(x1, x2, self.q_lo),
            SegmentKind::Jump => *self,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Convexity {
    Convex,
    Concave,
    Linear,
}

/// A nondecreasing curve assembled from power, flat and jump segments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<CurveSegment>", into = "Vec<CurveSegment>")]
pub struct MonotoneCurve {
    segments: Vec<CurveSegment>,
    prefix: Vec<f64>,
}

impl TryFrom<Vec<CurveSegment>> for MonotoneCurve {
    type Error = Error;
    fn try_from(s: Vec<CurveSegment>) -> Result<Self> {
        MonotoneCurve::new(s)
    }
}

impl From<MonotoneCurve> for Vec<CurveSegment> {
    fn from(c: MonotoneCurve) -> Self {
        c.segments
    }
}

impl MonotoneCurve {
    pub fn new(segments: Vec<CurveSegment>) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::InvalidCurve("no segments".into()));
        }
        for (i, s) in segments.iter().enumerate() {
            let finite = [s.a_lo, s.a_hi, s.q_lo, s.q_hi].iter().all(|v| v.is_finite());
            if !finite {
                return Err(Error::InvalidCurve(format!("segment {i} has non-finite fields")));
            }
            let ok = match s.kind {
                SegmentKind::Power => s.a_hi > s.a_lo && s.q_hi >= s.q_lo && s.arc.exponent > 0.0,
                SegmentKind::Flat => s.a_hi > s.a_lo && s.q_hi == s.q_lo,
                SegmentKind::Jump => s.a_hi == s.a_lo && s.q_hi > s.q_lo,
            };
            if !ok {
                return Err(Error::InvalidCurve(format!("segment {i} is not a nondecreasing {:?} piece", s.kind)));
            }
        }
        for (i, w) in segments.windows(2).enumerate() {
            if (w[0].a_hi - w[1].a_lo).abs() > CHAIN_TOL || (w[0].q_hi - w[1].q_lo).abs() > CHAIN_TOL {
                return Err(Error::InvalidCurve(format!(
                    "segments {i} and {} do not chain: ({}, {}) vs ({}, {})",
                    i + 1,
                    w[0].a_hi,
                    w[0].q_hi,
                    w[1].a_lo,
                    w[1].q_lo
                )));
            }
        }
        Ok(Self::from_segments_unchecked(segments))
    }

    /// Builds from segments already known to chain; snaps endpoints exactly.
    pub(crate) fn from_segments_unchecked(mut segments: Vec<CurveSegment>) -> Self {
        for i in 1..segments.len() {
            let (a, q) = (segments[i - 1].a_hi, segments[i - 1].q_hi);
            let s = &mut segments[i];
            s.a_lo = a;
            s.q_lo = q;
            if s.kind == SegmentKind::Jump {
                s.a_hi = a;
            }
            if s.kind == SegmentKind::Flat {
                s.q_hi = q;
            }
        }
        let mut prefix = Vec::with_capacity(segments.len());
        let mut acc = 0.0;
        for s in &segments {
            prefix.push(acc);
            acc += s.integral_to(s.a_hi);
        }
        MonotoneCurve { segments, prefix }
    }

    /// Assembles ordered Power/Flat pieces, inserting jump segments at upward gaps.
    pub fn assemble(pieces: Vec<CurveSegment>) -> Result<Self> {
        let mut out: Vec<CurveSegment> = Vec::with_capacity(pieces.len() + 4);
        for p in pieces {
            if p.kind != SegmentKind::Jump && p.a_hi - p.a_lo < 1e-15 {
                if let Some(last) = out.last() {
                    if p.q_hi > last.q_hi + 1e-12 {
                        out.push(CurveSegment::jump(last.a_hi, last.q_hi, p.q_hi));
                    }
                }
                continue;
            }
            if let Some(last) = out.last() {
                if (p.a_lo - last.a_hi).abs() > CHAIN_TOL {
                    return Err(Error::InvalidCurve(format!(
                        "pieces leave a domain gap between {} and {}",
                        last.a_hi, p.a_lo
                    )));
                }
                if p.q_lo > last.q_hi + 1e-12 {
                    let j = CurveSegment::jump(last.a_hi, last.q_hi, p.q_lo);
                    out.push(j);
                } else if p.q_lo < last.q_hi - CHAIN_TOL {
                    return Err(Error::InvalidCurve(format!("pieces decrease at x = {}", p.a_lo)));
                }
            }
            if p.kind == SegmentKind::Jump {
                if let Some(last) = out.last() {
                    if last.kind == SegmentKind::Jump {
                        let merged = CurveSegment::jump(last.a_lo, last.q_lo, p.q_hi);
                        *out.last_mut().unwrap() = merged;
                        continue;
                    }
                }
            }
            out.push(p);
        }
        if out.is_empty() {
            return Err(Error::InvalidCurve("no pieces".into()));
        }
        Ok(Self::from_segments_unchecked(out))
    }

    pub fn identity() -> Self {
        Self::from_segments_unchecked(vec![CurveSegment::linear(0.0, 1.0, 0.0, 1.0)])
    }

    /// `x ↦ x^exponent` on `[0, 1]`.
    pub fn power_map(exponent: f64) -> Result<Self> {
        if !(exponent > 0.0) {
            return Err(Error::InvalidCurve("exponent must be positive".into()));
        }
        Ok(Self::from_segments_unchecked(vec![CurveSegment::power(0.0, 1.0, 0.0, 1.0, PowerArc::full(exponent))]))
    }

    /// Piecewise-linear interpolation of `(x, y)` points with increasing `x`.
    pub fn linear_through(points: &[(f64, f64)]) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidCurve("need at least two points".into()));
        }
        let mut pieces = Vec::with_capacity(points.len());
        for w in points.windows(2) {
            let ((x0, y0), (x1, y1)) = (w[0], w[1]);
            if !(x1 > x0) {
                return Err(Error::InvalidCurve(format!("x values must increase ({x0} then {x1})")));
            }
            if y1 < y0 {
                return Err(Error::InvalidCurve(format!("curve decreases between x = {x0} and x = {x1}")));
            }
            pieces.push(CurveSegment::linear(x0, x1, y0, y1));
        }
        Self::assemble(pieces)
    }

    pub fn segments(&self) -> &[CurveSegment] {
        &self.segments
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.segments[0].a_lo, self.segments[self.segments.len() - 1].a_hi)
    }

    pub fn range(&self) -> (f64, f64) {
        (self.segments[0].q_lo, self.segments[self.segments.len() - 1].q_hi)
    }

    fn check_domain(&self, x: f64) -> Result<f64> {
        let (lo, hi) = self.domain();
        if !(x >= lo - DOMAIN_TOL && x <= hi + DOMAIN_TOL) {
            return Err(Error::OutsideDomain { value: x, lo, hi });
        }
        Ok(x.clamp(lo, hi))
    }

    /// Left-continuous evaluation: at a jump location this is the lower value.
    pub fn eval(&self, x: f64) -> Result<f64> {
        let x = self.check_domain(x)?;
        let i = self.segments.partition_point(|s| s.a_hi < x).min(self.segments.len() - 1);
        Ok(self.segments[i].value(x))
    }

    /// Right-continuous evaluation.
    pub fn eval_right(&self, x: f64) -> Result<f64> {
        let x = self.check_domain(x)?;
        let i = self.segments.partition_point(|s| s.a_lo <= x).saturating_sub(1);
        let s = &self.segments[i];
        Ok(match s.kind {
            SegmentKind::Jump => s.q_hi,
            _ => s.value(x),
        })
    }

    /// Generalized inverse. Flat segments resolve to their midpoint and jump
    /// segments to their location.
    pub fn inverse(&self, q: f64) -> Result<f64> {
        let (lo, hi) = self.range();
        if !(q >= lo - DOMAIN_TOL && q <= hi + DOMAIN_TOL) {
            return Err(Error::OutsideDomain { value: q, lo, hi });
        }
        let q = q.clamp(lo, hi);
        let i = self.segments.partition_point(|s| s.q_hi < q).min(self.segments.len() - 1);
        let s = &self.segments[i];
        if s.kind == SegmentKind::Power && q >= s.q_hi {
            if let Some(next) = self.segments.get(i + 1) {
                if next.kind == SegmentKind::Flat {
                    return Ok(next.inverse_local(q));
                }
            }
        }
        Ok(s.inverse_local(q))
    }

    /// `∫_{x1}^{x2} curve(x) dx`.
    pub fn integral(&self, x1: f64, x2: f64) -> Result<f64> {
        let x1 = self.check_domain(x1)?;
        let x2 = self.check_domain(x2)?;
        Ok(self.cumulative(x2) - self.cumulative(x1))
    }

    /// `∫_{x1}^{x2} (Q − base)`, summed piecewise so short spans keep their precision.
    pub fn excess_integral(&self, x1: f64, x2: f64, base: f64) -> Result<f64> {
        let x1 = self.check_domain(x1)?;
        let x2 = self.check_domain(x2)?;
        let mut total = 0.0;
        for s in &self.segments {
            let (l, r) = (s.a_lo.max(x1), s.a_hi.min(x2));
            if r <= l {
                continue;
            }
            total += if s.kind != SegmentKind::Power || s.arc.is_linear() {
                (r - l) * ((s.value(l) - base) + (s.value(r) - base)) / 2.0
            } else {
                let sub = s.restrict(l, r);
                (r - l) * ((sub.q_lo - base) + (sub.q_hi - sub.q_lo) * sub.arc.integral(1.0))
            };
        }
        Ok(total)
    }

    fn cumulative(&self, x: f64) -> f64 {
        let i = self.segments.partition_point(|s| s.a_hi < x).min(self.segments.len() - 1);
        self.prefix[i] + self.segments[i].integral_to(x)
    }

    /// Slope of the non-vertical piece leaving `x` to the right.
    pub fn derivative_right(&self, x: f64) -> Result<f64> {
        let x = self.check_domain(x)?;
        let i = self.segments.partition_point(|s| s.a_lo <= x).saturating_sub(1);
        let s = &self.segments[i];
        if s.kind == SegmentKind::Jump || x >= s.a_hi {
            return Ok(s.slope_at(s.a_hi));
        }
        Ok(s.slope_at(x))
    }

    /// Slope of the non-vertical piece arriving at `x` from the left.
    pub fn derivative_left(&self, x: f64) -> Result<f64> {
        let x = self.check_domain(x)?;
        let i = self.segments.partition_point(|s| s.a_hi < x).min(self.segments.len() - 1);
        Ok(self.segments[i].slope_at(x))
    }

    /// Every segment boundary on the domain axis.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.segments.iter().flat_map(|s| [s.a_lo, s.a_hi]).collect();
        v.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
        v
    }

    /// Every segment boundary on the range axis.
    pub fn range_breakpoints(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.segments.iter().flat_map(|s| [s.q_lo, s.q_hi]).collect();
        v.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
        v
    }

    /// The sub-curve on `[x1, x2]`.
    pub fn restrict(&self, x1: f64, x2: f64) -> Result<Self> {
        let x1 = self.check_domain(x1)?;
        let x2 = self.check_domain(x2)?;
        if !(x2 > x1) {
            return Err(Error::InvalidCurve("empty restriction".into()));
        }
        let pieces: Vec<CurveSegment> = self
            .segments
            .iter()
            .filter(|s| match s.kind {
                SegmentKind::Jump => s.a_lo > x1 && s.a_lo < x2,
                _ => s.a_hi > x1 && s.a_lo < x2,
            })
            .map(|s| s.restrict(s.a_lo.max(x1), s.a_hi.min(x2)))
            .collect();
        Self::assemble(pieces)
    }

    /// `x ↦ self(inner(x))`.
    pub fn compose(&self, inner: &MonotoneCurve) -> Result<Self> {
        let (dlo, dhi) = self.domain();
        let (rlo, rhi) = inner.range();
        if rlo < dlo - DOMAIN_TOL || rhi > dhi + DOMAIN_TOL {
            return Err(Error::OutsideDomain { value: if rlo < dlo { rlo } else { rhi }, lo: dlo, hi: dhi });
        }
        let mut pieces = Vec::new();
        for s in &inner.segments {
            match s.kind {
                SegmentKind::Jump => {}
                SegmentKind::Flat => {
                    pieces.push(CurveSegment::flat(s.a_lo, s.a_hi, self.eval(s.q_lo)?));
                }
                SegmentKind::Power => self.compose_power(s, &mut pieces),
            }
        }
        Self::assemble(pieces)
    }

    fn compose_power(&self, s: &CurveSegment, out: &mut Vec<CurveSegment>) {
        let (y1, y2) = (s.q_lo, s.q_hi);
        for o in self.segments.iter().filter(|o| o.kind != SegmentKind::Jump && o.a_hi > y1 && o.a_lo < y2) {
            let (c1, c2) = (o.a_lo.max(y1), o.a_hi.min(y2));
            let (xc1, xc2) = (s.inverse_local(c1), s.inverse_local(c2));
            if !(xc2 > xc1) {
                continue;
            }
            let inner_r = s.restrict(xc1, xc2);
            let outer_r = o.restrict(c1, c2);
            let (z1, z2) = (outer_r.q_lo, outer_r.q_hi);
            if outer_r.kind == SegmentKind::Flat || z2 <= z1 {
                out.push(CurveSegment::flat(xc1, xc2, z1));
            } else if outer_r.arc.is_linear() {
                out.push(CurveSegment::power(xc1, xc2, z1, z2, inner_r.arc));
            } else if inner_r.kind == SegmentKind::Flat {
                out.push(CurveSegment::flat(xc1, xc2, z1));
            } else if inner_r.arc.is_linear() {
                out.push(CurveSegment::power(xc1, xc2, z1, z2, outer_r.arc));
            } else {
                let step = (xc2 - xc1) / COMPOSE_SUBDIVISION as f64;
                let mut prev = (xc1, z1);
                for j in 1..=COMPOSE_SUBDIVISION {
                    let x = if j == COMPOSE_SUBDIVISION { xc2 } else { xc1 + step * j as f64 };
                    let z = if j == COMPOSE_SUBDIVISION { z2 } else { outer_r.value(inner_r.value(x)) };
                    out.push(CurveSegment::linear(prev.0, x, prev.1, z.max(prev.1)));
                    prev = (x, z.max(prev.1));
                }
            }
        }
    }

    /// Exhaustive partition of the domain into convex, concave and linear
    /// stretches. Linear stretches of different slope stay separate.
    pub fn convexity_segments(&self) -> Vec<(f64, f64, Convexity)> {
        let mut out: Vec<(f64, f64, Convexity, f64)> = Vec::new();
        for s in self.segments.iter().filter(|s| s.kind != SegmentKind::Jump) {
            let label = match (s.kind, s.arc.curvature_sign()) {
                (SegmentKind::Flat, _) | (_, 0) => Convexity::Linear,
                (_, 1) => Convexity::Convex,
                _ => Convexity::Concave,
            };
            let slope = if label == Convexity::Linear { (s.q_hi - s.q_lo) / (s.a_hi - s.a_lo) } else { 0.0 };
            if let Some(last) = out.last_mut() {
                let same = last.2 == label
                    && (label != Convexity::Linear || (last.3 - slope).abs() <= 1e-9 * slope.abs().max(1.0));
                if same {
                    last.1 = s.a_hi;
                    continue;
                }
            }
            out.push((s.a_lo, s.a_hi, label, slope));
        }
        out.into_iter().map(|(a, b, l, _)| (a, b, l)).collect()
    }

    /// `n + 1` evenly spaced samples over the domain.
    pub fn sample(&self, n: usize) -> Vec<(f64, f64)> {
        let (lo, hi) = self.domain();
        (0..=n)
            .map(|i| {
                let x = lo + (hi - lo) * i as f64 / n as f64;
                (x, self.eval(x).expect("inside domain"))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::piecewise::dist::{DistPiece, PiecewisePowerDist};

    fn figure_one() -> MonotoneCurve {
        MonotoneCurve::linear_through(&[(0.0, 0.0), (1.0 / 3.0, 0.5), (1.0, 1.0)]).unwrap()
    }

    #[test]
    fn eval_examples() {
        assert!((MonotoneCurve::identity().eval(0.7).unwrap() - 0.7).abs() < 1e-15);
        assert!((figure_one().eval(1.0 / 3.0).unwrap() - 0.5).abs() < 1e-15);
        assert!((figure_one().inverse(0.75).unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert!(figure_one().eval(1.5).is_err());
    }

    #[test]
    fn excess_integral_keeps_short_spans_exact() {
        let c = figure_one();
        let a0 = 1.0 / 3.0 - 1e-7;
        let q0 = c.eval(a0).unwrap();
        let d = 2e-7;
        // 1.5 slope then 0.75 slope, each over 1e-7
        let expected = 1.5 * 1e-14 / 2.0 + (1.5e-7 * 1e-7 + 0.75 * 1e-14 / 2.0);
        let got = c.excess_integral(a0, a0 + d, q0).unwrap();
        assert!((got - expected).abs() < 1e-9 * expected, "{got} vs {expected}");
    }

    #[test]
    fn flat_inverse_is_midpoint_and_jump_inverse_is_location() {
        let c = MonotoneCurve::assemble(vec![
            CurveSegment::linear(0.0, 0.2, 0.0, 0.4),
            CurveSegment::flat(0.2, 0.6, 0.4),
            CurveSegment::linear(0.6, 1.0, 0.7, 1.0),
        ])
        .unwrap();
        assert!((c.inverse(0.4).unwrap() - 0.4).abs() < 1e-15);
        assert!((c.inverse(0.55).unwrap() - 0.6).abs() < 1e-15);
        assert!((c.eval(0.6).unwrap() - 0.4).abs() < 1e-15);
        assert!((c.eval_right(0.6).unwrap() - 0.7).abs() < 1e-15);
        assert!(c.derivative_right(0.6).unwrap().is_finite());
    }

    #[test]
    fn convexity_examples() {
        let sqrt = MonotoneCurve::power_map(0.5).unwrap();
        assert_eq!(sqrt.convexity_segments(), vec![(0.0, 1.0, Convexity::Concave)]);
        assert_eq!(MonotoneCurve::identity().convexity_segments(), vec![(0.0, 1.0, Convexity::Linear)]);
        let f = figure_one().convexity_segments();
        assert_eq!(f.len(), 2);
        assert!((f[0].1 - 1.0 / 3.0).abs() < 1e-15);
        assert!(f.iter().all(|s| s.2 == Convexity::Linear));
    }

    #[test]
    fn integral_of_power_map() {
        let c = MonotoneCurve::power_map(0.5).unwrap();
        assert!((c.integral(0.0, 1.0).unwrap() - 2.0 / 3.0).abs() < 1e-14);
        let r = c.restrict(0.25, 1.0).unwrap();
        assert!((r.integral(0.25, 1.0).unwrap() - (2.0 / 3.0 - 2.0 / 3.0 * 0.125)).abs() < 1e-12);
        assert!((r.eval(0.36).unwrap() - 0.6).abs() < 1e-12);
    }

    #[test]
    fn compose_cdf_with_quantile_is_identity() {
        let d = PiecewisePowerDist::new(vec![
            DistPiece::new(0.0, 0.4, 0.3, 2.0),
            DistPiece::new(0.6, 1.0, 0.7, 0.5),
        ])
        .unwrap();
        let id = d.quantile_curve().compose(&d.cdf_curve()).unwrap();
        for i in 0..=50 {
            let x = 0.4 * i as f64 / 50.0;
            assert!((id.eval(x).unwrap() - x).abs() < 1e-9, "{x}");
        }
        let back = d.cdf_curve().compose(&d.quantile_curve()).unwrap();
        for i in 0..=50 {
            let m = i as f64 / 50.0;
            assert!((back.eval(m).unwrap() - m).abs() < 1e-9);
        }
    }

    #[test]
    fn compose_with_nonlinear_pieces_is_close() {
        let outer = MonotoneCurve::power_map(2.0).unwrap();
        let inner = MonotoneCurve::power_map(0.5).unwrap().restrict(0.1, 1.0).unwrap();
        let c = outer.compose(&inner).unwrap();
        for i in 0..=20 {
            let x = 0.1 + 0.9 * i as f64 / 20.0;
            assert!((c.eval(x).unwrap() - x).abs() < 1e-4);
        }
    }
}
