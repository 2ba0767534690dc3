//! Connected strategic-grading equilibrium by the sweeping-ray construction.
//!
//! From an origin `(a0, q0)` on the truthful map, a pooled linear section of
//! slope `k` ending at `a` is mass-balanced exactly when
//! `k = m(a) = 2(Ψ(a) − Ψ(a0) − q0·(a − a0)) / (a − a0)²` with `Ψ = ∫ Q_T`.
//! The rotating ray first meets such a point at the minimum of `m`, whose
//! stationarity condition `D(a) = Ψ(a) − Ψ(a0) − (a − a0)(q0 + Q_T(a))/2 = 0`
//! says the endpoint lies on the ray. Pooling starts wherever that minimal
//! slope is below the right derivative of `Q_T`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::{truthful_mapping, Scenario};
use crate::numeric::{bisect, bisect_predicate};
use crate::piecewise::{Convexity, CurveSegment, MonotoneCurve, PiecewisePowerDist, SegmentKind};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepOptions {
    pub grid: usize,
    pub tolerance: f64,
    pub max_iter: usize,
    pub on_ray_tol: f64,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions { grid: 4096, tolerance: 1e-10, max_iter: 200, on_ray_tol: 1e-9 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EqSegment {
    Informative {
        a_lo: f64,
        a_hi: f64,
    },
    /// Linear section from `(a0, q0)` to `(a1, q1)` pooling true abilities `[alpha0, alpha1]`.
    Pooled {
        a0: f64,
        q0: f64,
        a1: f64,
        q1: f64,
        alpha0: f64,
        alpha1: f64,
        residual: f64,
    },
    Unclassified {
        a_lo: f64,
        a_hi: f64,
    },
}

impl EqSegment {
    pub fn a_range(&self) -> (f64, f64) {
        match *self {
            EqSegment::Informative { a_lo, a_hi } | EqSegment::Unclassified { a_lo, a_hi } => (a_lo, a_hi),
            EqSegment::Pooled { a0, a1, .. } => (a0, a1),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumCurve {
    pub segments: Vec<EqSegment>,
    pub a_hat_low: f64,
    pub a_hat_high: f64,
    pub curve: MonotoneCurve,
    #[serde(default)]
    pub notes: Vec<String>,
}

impl EquilibriumCurve {
    /// Re-derives segment tags for an arbitrary monotone curve against `Q_T`.
    pub fn classify(curve: MonotoneCurve, q_t: &MonotoneCurve) -> Self {
        let mut segments: Vec<EqSegment> = Vec::new();
        for s in curve.segments() {
            let tag = classify_segment(s, q_t);
            if let (Some(last), Some(new)) = (segments.last_mut(), tag) {
                match (last, new) {
                    (EqSegment::Informative { a_hi, .. }, EqSegment::Informative { a_hi: h, .. }) => {
                        *a_hi = h;
                        continue;
                    }
                    (EqSegment::Pooled { a0, q0, a1, q1, .. }, EqSegment::Pooled { a1: b1, q1: r1, .. }) => {
                        let k_old = (*q1 - *q0) / (*a1 - *a0);
                        let k_new = (r1 - *q1) / (b1 - *a1);
                        if (k_old - k_new).abs() <= 1e-9 * k_old.abs().max(1.0) {
                            *a1 = b1;
                            *q1 = r1;
                            continue;
                        }
                    }
                    _ => {}
                }
            }
            if let Some(t) = tag {
                segments.push(t);
            }
        }
        for seg in &mut segments {
            if let EqSegment::Pooled { a0, q0, a1, q1, alpha0, alpha1, residual } = seg {
                *alpha0 = true_ability(q_t, *q0);
                *alpha1 = true_ability(q_t, *q1);
                *residual = mass_balance_residual(q_t, (*a0, *q0), (*a1, *q1)).unwrap_or(f64::NAN);
            }
        }
        let (a_hat_low, a_hat_high) = curve.domain();
        EquilibriumCurve { segments, a_hat_low, a_hat_high, curve, notes: Vec::new() }
    }

    /// `Q_eq` extended by its top value above `â_H`.
    pub fn eval_extended(&self, x: f64) -> f64 {
        let (lo, hi) = self.curve.domain();
        if x >= hi {
            return self.curve.range().1;
        }
        self.curve.eval(x.max(lo)).expect("clamped into domain")
    }

    pub fn pooled_mass(&self) -> f64 {
        self.segments
            .iter()
            .map(|s| match *s {
                EqSegment::Pooled { alpha0, alpha1, .. } => alpha1 - alpha0,
                _ => 0.0,
            })
            .sum()
    }
}

fn classify_segment(s: &CurveSegment, q_t: &MonotoneCurve) -> Option<EqSegment> {
    if s.kind == SegmentKind::Jump {
        return Some(EqSegment::Unclassified { a_lo: s.a_lo, a_hi: s.a_hi });
    }
    let (dlo, dhi) = q_t.domain();
    let matches = s.a_lo >= dlo - 1e-12
        && s.a_hi <= dhi + 1e-12
        && (0..=8).all(|i| {
            let x = s.a_lo + (s.a_hi - s.a_lo) * i as f64 / 8.0;
            let qt = if i == 0 { q_t.eval_right(x) } else { q_t.eval(x) };
            qt.map(|v| (v - s.value(x)).abs() <= 1e-8).unwrap_or(false)
        });
    if matches {
        return Some(EqSegment::Informative { a_lo: s.a_lo, a_hi: s.a_hi });
    }
    if s.kind == SegmentKind::Flat || s.arc.is_linear() {
        return Some(EqSegment::Pooled {
            a0: s.a_lo,
            q0: s.q_lo,
            a1: s.a_hi,
            q1: s.q_hi,
            alpha0: f64::NAN,
            alpha1: f64::NAN,
            residual: f64::NAN,
        });
    }
    Some(EqSegment::Unclassified { a_lo: s.a_lo, a_hi: s.a_hi })
}

/// True ability of the marginal student holding a quality-`q` job: `μ(q)`.
fn true_ability(q_t: &MonotoneCurve, q: f64) -> f64 {
    let (lo, hi) = q_t.range();
    q_t.inverse(q.clamp(lo, hi)).expect("clamped into range")
}

/// `(α1² − α0²)/2 − ∫_{q0}^{q1} L⁻¹(q) dμ(q)` for the segment through the two
/// points, where `α = μ(q)` are the true-ability bounds and `L⁻¹` maps a
/// job quality back to the expected ability on the segment.
pub fn mass_balance_residual(q_t: &MonotoneCurve, p0: (f64, f64), p1: (f64, f64)) -> Result<f64> {
    let ((a0, q0), (a1, q1)) = (p0, p1);
    if !(a1 > a0) || !(q1 > q0) {
        return Err(Error::SweepFailed(format!("degenerate segment ({a0}, {q0}) to ({a1}, {q1})")));
    }
    let (al0, al1) = (true_ability(q_t, q0), true_ability(q_t, q1));
    let s = (a1 - a0) / (q1 - q0);
    let moment = q_t.integral(al0, al1)?;
    let served = a0 * (al1 - al0) + s * (moment - q0 * (al1 - al0));
    Ok(0.5 * (al1 * al1 - al0 * al0) - served)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepCase {
    ConcaveStart,
    ConvexStart,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SweepStep {
    /// A pooled section; `terminal` when it ends at the top quality before `a = 1`.
    Pooled { a1: f64, q1: f64, slope: f64, terminal: bool },
    /// `Q_T` is followed up to `until`.
    Informative { until: f64 },
}

enum Choice {
    Terminal(f64),
    Valley(f64, f64),
    Grid(usize),
}

struct Scan {
    start: usize,
    vals: Vec<f64>,
    rs: f64,
}

impl Scan {
    fn m_end(&self) -> f64 {
        self.vals.last().copied().unwrap_or(f64::NAN)
    }

    fn below_rs(&self, v: f64) -> bool {
        self.rs.is_infinite() || v < self.rs - 1e-7 * self.rs.max(1.0)
    }
}

/// Precomputed `Ψ` and `Q_T` on the candidate grid for repeated sweeps.
pub struct Sweeper<'a> {
    q_t: &'a MonotoneCurve,
    opts: SweepOptions,
    grid: Vec<f64>,
    psi: Vec<f64>,
    a_start: f64,
    a_end: f64,
    q_top: f64,
    labels: Vec<(f64, f64, Convexity)>,
}

impl<'a> Sweeper<'a> {
    pub fn new(q_t: &'a MonotoneCurve, opts: SweepOptions) -> Self {
        let (a_start, a_end) = q_t.domain();
        let n = opts.grid.max(8);
        let mut grid: Vec<f64> = (0..=n).map(|i| a_start + (a_end - a_start) * i as f64 / n as f64).collect();
        let span = a_end - a_start;
        for b in q_t.breakpoints() {
            grid.push(b);
            for h in [1e-6, 3e-6, 1e-5, 3e-5, 1e-4, 3e-4, 1e-3] {
                grid.extend([b - h * span, b + h * span].into_iter().filter(|x| *x > a_start && *x < a_end));
            }
        }
        grid.sort_by(|a, b| a.total_cmp(b));
        grid.dedup_by(|a, b| (*a - *b).abs() < 1e-13);
        let psi = grid.iter().map(|&a| q_t.integral(a_start, a).expect("grid inside domain")).collect();
        Sweeper {
            q_t,
            opts,
            grid,
            psi,
            a_start,
            a_end,
            q_top: q_t.range().1,
            labels: q_t.convexity_segments(),
        }
    }

    fn psi_at(&self, a: f64) -> f64 {
        self.q_t.integral(self.a_start, a).expect("inside domain")
    }

    fn m(d: f64, excess: f64) -> f64 {
        2.0 * excess / (d * d)
    }

    /// `∫_{a0}^{a} (Q_T − q0)`, integrated locally when `a` is close to `a0`.
    fn excess(&self, a0: f64, q0: f64, psi0: f64, a: f64, psi_a: f64) -> f64 {
        if a - a0 < 1e-2 * (self.a_end - self.a_start) {
            self.q_t.excess_integral(a0, a, q0).expect("inside domain")
        } else {
            psi_a - psi0 - q0 * (a - a0)
        }
    }

    fn d(&self, a0: f64, q0: f64, a: f64) -> f64 {
        let qa = self.q_t.eval(a).expect("inside domain");
        self.q_t.excess_integral(a0, a, q0).expect("inside domain") - (a - a0) * (qa - q0) / 2.0
    }

    /// Balanced slopes from `(a0, q0)` on the grid beyond `a0`.
    fn scan(&self, a0: f64, q0: f64) -> Scan {
        let psi0 = self.psi_at(a0);
        let start = self.grid.partition_point(|&g| g <= a0 + 1e-9);
        let vals = (start..self.grid.len())
            .map(|j| Self::m(self.grid[j] - a0, self.excess(a0, q0, psi0, self.grid[j], self.psi[j])))
            .collect();
        Scan { start, vals, rs: self.right_slope(a0, q0) }
    }

    /// Grid index and value of the minimal balanced slope, ties to the largest `a`.
    fn min_slope(sc: &Scan) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for (i, &v) in sc.vals.iter().enumerate() {
            if !v.is_finite() {
                continue;
            }
            match best {
                Some((_, b)) if v > b + 1e-12 * b.abs().max(1.0) => {}
                _ => best = Some((sc.start + i, v.min(best.map_or(v, |b| b.1)))),
            }
        }
        best
    }

    fn right_slope(&self, a0: f64, q0: f64) -> f64 {
        let top = self.q_t.eval_right(a0).expect("inside domain");
        if q0 < top - 1e-12 {
            return f64::INFINITY;
        }
        self.q_t.derivative_right(a0).expect("inside domain")
    }

    fn pools(&self, a0: f64, q0: f64) -> bool {
        if a0 >= self.a_end - 1e-12 {
            return false;
        }
        let sc = self.scan(a0, q0);
        Self::min_slope(&sc).is_some_and(|(j, k)| sc.below_rs(k.min(self.probe_min(a0, q0, j))))
    }

    /// Smallest balanced slope between the grid neighbours of `j`.
    fn probe_min(&self, a0: f64, q0: f64, j: usize) -> f64 {
        const PROBES: usize = 32;
        let lo = if j > 0 { self.grid[j - 1].max(a0) } else { a0 };
        let hi = self.grid[(j + 1).min(self.grid.len() - 1)];
        (1..PROBES)
            .map(|i| lo + (hi - lo) * i as f64 / PROBES as f64)
            .filter(|&a| a > a0 + 1e-12)
            .map(|a| Self::m(a - a0, self.q_t.excess_integral(a0, a, q0).expect("inside domain")))
            .fold(f64::INFINITY, f64::min)
    }

    /// Convexity label of `Q_T` just to the right of `a0`.
    pub fn case_at(&self, a0: f64) -> SweepCase {
        let label = self
            .labels
            .iter()
            .find(|l| a0 >= l.0 - 1e-12 && a0 < l.1 - 1e-12)
            .or(self.labels.last())
            .map(|l| l.2)
            .unwrap_or(Convexity::Linear);
        match label {
            Convexity::Concave => SweepCase::ConcaveStart,
            _ => SweepCase::ConvexStart,
        }
    }

    fn at_label_boundary(&self, a0: f64) -> bool {
        a0 > self.a_start + 1e-12 && self.labels.iter().any(|l| (l.0 - a0).abs() < 1e-9 && l.0 > self.a_start)
    }

    /// One step of the construction from `origin`.
    pub fn step(&self, origin: (f64, f64)) -> Result<SweepStep> {
        let (a0, q0) = origin;
        if self.pools(a0, q0) {
            return self.pooled_from(a0, q0);
        }
        let start = self.grid.partition_point(|&g| g <= a0 + 1e-12);
        let hit = (start..self.grid.len()).find(|&j| {
            let a = self.grid[j];
            self.pools(a, self.q_t.eval(a).expect("grid inside domain"))
        });
        let Some(j) = hit else {
            return Ok(SweepStep::Informative { until: self.a_end });
        };
        let lo = if j > start { self.grid[j - 1] } else { a0 };
        let pred = |a: f64| self.pools(a, self.q_t.eval(a).expect("inside domain"));
        let (_, first) = bisect_predicate(pred, lo, self.grid[j], self.opts.tolerance, self.opts.max_iter);
        Ok(SweepStep::Informative { until: self.tangent_origin(first, a0) })
    }

    /// Moves a pooling origin back along `Q_T` until its chord is tangent there; a grid
    /// trigger can fire late when the balancing endpoint sits in a narrow valley.
    fn tangent_origin(&self, a: f64, floor: f64) -> f64 {
        let q = self.q_t.eval(a).expect("inside domain");
        let rs = self.right_slope(a, q);
        if !rs.is_finite() || a <= self.a_start + 1e-12 {
            return a;
        }
        let ls = self.q_t.derivative_left(a).expect("inside domain");
        let sc = self.scan(a, q);
        let w = 4.0 * (self.a_end - self.a_start) / self.opts.grid.max(8) as f64;
        let (slope, valley) = match self.choose(a, q, &sc) {
            Some(Choice::Terminal(k)) => (k, None),
            Some(Choice::Valley(a1, k)) => (k, Some(a1)),
            _ => return a,
        };
        let gap = |x: f64| {
            let qx = self.q_t.eval(x).expect("inside domain");
            let rx = self.q_t.derivative_right(x).expect("inside domain");
            let e = match valley {
                Some(a1) => match self.refine_endpoint(x, qx, (a1 - w).max(x), (a1 + w).min(self.a_end)) {
                    Some(e) => e,
                    None => return 1.0,
                },
                None => self.a_end,
            };
            Self::m(e - x, self.q_t.excess_integral(x, e, qx).expect("inside domain")) - rx
        };
        if slope >= ls - 1e-12 * ls.abs().max(1.0) {
            return a;
        }
        let lo = floor.max(a - w);
        if gap(lo) <= 0.0 {
            return a;
        }
        bisect(gap, lo, a, self.opts.tolerance.min(1e-14 * a.abs()), self.opts.max_iter)
    }

    /// Root of the balance gap on `[lo, hi]` where it turns negative, lowest slope first.
    fn refine_endpoint(&self, a0: f64, q0: f64, lo: f64, hi: f64) -> Option<f64> {
        const PROBES: usize = 64;
        let lo = lo.max(a0 + 1e-7 * (self.a_end - self.a_start));
        if !(hi > lo) {
            return None;
        }
        let xs: Vec<f64> = (0..=PROBES).map(|i| lo + (hi - lo) * i as f64 / PROBES as f64).collect();
        let ds: Vec<f64> = xs
            .iter()
            .map(|&x| if x > a0 + 1e-12 { self.d(a0, q0, x) } else { 1.0 })
            .collect();
        (0..PROBES)
            .filter(|&i| ds[i] > 0.0 && ds[i + 1] <= 0.0)
            .map(|i| bisect(|a| self.d(a0, q0, a), xs[i], xs[i + 1], self.opts.tolerance, self.opts.max_iter))
            .map(|a| (a, Self::m(a - a0, self.q_t.excess_integral(a0, a, q0).expect("inside domain"))))
            .min_by(|x, y| x.1.total_cmp(&y.1))
            .map(|(a, _)| a)
    }

    /// Refined endpoint of the deepest balanced-slope valley, ties to the largest `a`.
    fn best_valley(&self, a0: f64, q0: f64, sc: &Scan, gmin: f64) -> Option<(f64, f64)> {
        const VALLEYS: usize = 16;
        let band = gmin + 1e-3 * gmin.abs().max(1.0);
        let vals = &sc.vals;
        let last = self.grid.len() - 1;
        let mut picks: Vec<(usize, f64)> = (0..vals.len())
            .filter(|&i| sc.start + i < last)
            .filter_map(|i| {
                let v = vals[i];
                let left = if i > 0 { vals[i - 1] } else { f64::INFINITY };
                let right = vals[i + 1];
                let valley = v.is_finite() && v <= band && v <= left && v <= right && (v < left || v < right);
                valley.then_some((sc.start + i, v))
            })
            .collect();
        picks.sort_by(|x, y| x.1.total_cmp(&y.1));
        picks.truncate(VALLEYS);
        let mut best: Option<(f64, f64)> = None;
        for (idx, _) in picks {
            let lo = if idx > 0 { self.grid[idx - 1].max(a0) } else { a0 };
            let Some(a) = self.refine_endpoint(a0, q0, lo, self.grid[idx + 1]) else { continue };
            let m = Self::m(a - a0, self.q_t.excess_integral(a0, a, q0).expect("inside domain"));
            let tie = 1e-9 * m.abs().max(1.0);
            best = match best {
                Some(b) if m > b.1 + tie || (m >= b.1 - tie && a <= b.0) => Some(b),
                _ => Some((a, m)),
            };
        }
        best
    }

    /// The pooled section leaving `(a0, q0)`.
    /// Terminal chord or deepest valley from `(a0, q0)`, falling back to the grid minimum.
    fn choose(&self, a0: f64, q0: f64, sc: &Scan) -> Option<Choice> {
        let (j, gmin) = Self::min_slope(sc)?;
        let last = self.grid.len() - 1;
        let best = self.best_valley(a0, q0, sc, gmin);
        let tie = 1e-9 * gmin.abs().max(1.0);
        if j == last && self.d(a0, q0, self.a_end) > 1e-13 && best.is_none_or(|b| sc.m_end() <= b.1 + tie) {
            return Some(Choice::Terminal(sc.m_end()));
        }
        Some(match best {
            Some((a1, k)) => Choice::Valley(a1, k),
            None => Choice::Grid(j),
        })
    }

    pub fn pooled_from(&self, a0: f64, q0: f64) -> Result<SweepStep> {
        let sc = self.scan(a0, q0);
        let choice = self
            .choose(a0, q0, &sc)
            .ok_or_else(|| Error::SweepFailed(format!("no candidate endpoint beyond a = {a0}")))?;
        let last = self.grid.len() - 1;
        if let Choice::Terminal(k) = choice {
            if !(k > 0.0 && k.is_finite()) {
                return Err(Error::SweepFailed(format!("terminal slope {k} from ({a0}, {q0}) is invalid")));
            }
            let a1 = a0 + (self.q_top - q0) / k;
            return Ok(SweepStep::Pooled { a1: a1.min(self.a_end), q1: self.q_top, slope: k, terminal: true });
        }
        let mut a1 = match choice {
            Choice::Valley(a1, _) => a1,
            Choice::Grid(j) => {
                let lo = if j > 0 { self.grid[j - 1].max(a0) } else { a0 };
                let hi = if j < last { self.grid[j + 1] } else { self.a_end };
                self.refine_endpoint(a0, q0, lo, hi).unwrap_or(self.grid[j])
            }
            Choice::Terminal(_) => unreachable!("handled above"),
        };
        let jumps = |b: &f64| self.q_t.eval_right(*b).expect("inside domain") - self.q_t.eval(*b).expect("inside domain") > 1e-12;
        if let Some(b) = self.q_t.breakpoints().into_iter().find(|b| (b - a1).abs() < 1e-8 && jumps(b)) {
            a1 = b;
        }
        let (below, above) = (self.q_t.eval(a1)?, self.q_t.eval_right(a1)?);
        let k_bal = Self::m(a1 - a0, self.q_t.excess_integral(a0, a1, q0)?);
        let q_ray = q0 + k_bal * (a1 - a0);
        let mut q1 = if above - below > 1e-12 { q_ray.clamp(below, above) } else { below };
        // on a steep crossing the ray's quality is better conditioned than `a1`
        if above - below <= 1e-12 && (q_ray - below).abs() > 1e-12 && self.q_t.derivative_right(a1)? > k_bal {
            let (lo, hi) = self.q_t.range();
            q1 = q_ray.clamp(lo, hi);
            a1 = self.q_t.inverse(q1)?;
        }
        let slope = (q1 - q0) / (a1 - a0);
        if !(slope > 0.0 && slope.is_finite()) {
            return Err(Error::SweepFailed(format!("pooled slope {slope} from ({a0}, {q0}) is invalid")));
        }
        Ok(SweepStep::Pooled { a1, q1, slope, terminal: false })
    }
}

/// Whether `Q_T` bends upward before it bends downward when leaving its left end.
pub fn starts_convex(q_t: &MonotoneCurve) -> Result<bool> {
    let (lo, hi) = q_t.domain();
    let q0 = q_t.eval(lo)?;
    let scale = (hi - lo) * (q_t.range().1 - q0);
    for i in 1..=4096 {
        let a = lo + (hi - lo) * i as f64 / 4096.0;
        let d = q_t.excess_integral(lo, a, q0)? - (a - lo) * (q_t.eval(a)? - q0) / 2.0;
        if d.abs() > 1e-10 * scale {
            return Ok(d < 0.0);
        }
    }
    Ok(false)
}

/// Runs the full construction on a truthful map.
pub fn solve_from_truthful(q_t: &MonotoneCurve, opts: SweepOptions) -> Result<EquilibriumCurve> {
    let sw = Sweeper::new(q_t, opts);
    let (a_start, a_end) = q_t.domain();
    let mut origin = (a_start, q_t.eval(a_start)?);
    let mut segments = Vec::new();
    let mut pieces: Vec<CurveSegment> = Vec::new();
    let mut notes = Vec::new();
    let mut a_hat_high = a_end;
    let cap = 4 * sw.grid.len() + 16;
    let mut pool_next = false;
    for _ in 0..cap {
        let (a0, q0) = origin;
        if a0 >= a_end - 1e-12 {
            break;
        }
        if sw.at_label_boundary(a0) {
            notes.push(format!(
                "origin a = {a0:.9} sits on a convexity change; treated as {:?}",
                sw.case_at(a0)
            ));
        }
        let step = if pool_next { sw.pooled_from(a0, q0)? } else { sw.step(origin)? };
        pool_next = false;
        match step {
            SweepStep::Informative { until } => {
                let until = until.min(a_end);
                if until > a0 + 1e-15 {
                    pieces.extend_from_slice(q_t.restrict(a0, until)?.segments());
                    segments.push(EqSegment::Informative { a_lo: a0, a_hi: until });
                }
                origin = (until, q_t.eval(until)?);
                if until >= a_end - 1e-12 {
                    break;
                }
                pool_next = true;
            }
            SweepStep::Pooled { a1, q1, slope: _, terminal } => {
                let residual = mass_balance_residual(q_t, (a0, q0), (a1, q1))?;
                segments.push(EqSegment::Pooled {
                    a0,
                    q0,
                    a1,
                    q1,
                    alpha0: true_ability(q_t, q0),
                    alpha1: true_ability(q_t, q1),
                    residual,
                });
                pieces.push(CurveSegment::linear(a0, a1, q0, q1));
                origin = (a1, q1);
                if terminal || q1 >= sw.q_top - 1e-15 {
                    a_hat_high = a1;
                    break;
                }
            }
        }
    }
    let curve = MonotoneCurve::assemble(pieces)?;
    Ok(EquilibriumCurve { segments, a_hat_low: a_start, a_hat_high, curve, notes })
}

pub fn solve_grading_equilibrium(s: &Scenario) -> Result<EquilibriumCurve> {
    solve_grading_equilibrium_with(s, SweepOptions::default())
}

pub fn solve_grading_equilibrium_with(s: &Scenario, opts: SweepOptions) -> Result<EquilibriumCurve> {
    let q_t = truthful_mapping(s)?;
    solve_from_truthful(&q_t, opts)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropertyCheck {
    pub name: String,
    pub passed: bool,
    pub worst: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviationCheck {
    pub school: usize,
    pub equilibrium_placement: f64,
    pub revelation_placement: f64,
    pub best_deviation_placement: f64,
    pub max_gain: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradingVerification {
    pub properties: Vec<PropertyCheck>,
    pub deviations: Vec<DeviationCheck>,
    pub global_mass: f64,
    pub passed: bool,
}

impl GradingVerification {
    pub fn failures(&self) -> Vec<String> {
        let mut v: Vec<String> = self.properties.iter().filter(|p| !p.passed).map(|p| p.name.clone()).collect();
        v.extend(self.deviations.iter().filter(|d| !d.passed).map(|d| format!("no_profitable_deviation[{}]", d.school)));
        v
    }
}

pub const VERIFY_TOL: f64 = 1e-8;
pub const DEVIATION_SAMPLES: usize = 200;
pub const DEFAULT_SEED: u64 = 7;

pub fn verify_grading_equilibrium(c: &EquilibriumCurve, s: &Scenario) -> Result<GradingVerification> {
    verify_grading_equilibrium_seeded(c, s, DEFAULT_SEED)
}

fn check(name: &str, worst: f64, tol: f64) -> PropertyCheck {
    PropertyCheck { name: name.to_string(), passed: worst.is_finite() && worst <= tol, worst }
}

pub fn verify_grading_equilibrium_seeded(c: &EquilibriumCurve, s: &Scenario, seed: u64) -> Result<GradingVerification> {
    let q_t = truthful_mapping(s)?;
    let curve = &c.curve;
    let mut props = Vec::new();

    let gap = curve
        .segments()
        .iter()
        .map(|sg| match sg.kind {
            SegmentKind::Jump => sg.q_hi - sg.q_lo,
            SegmentKind::Flat => sg.a_hi - sg.a_lo,
            SegmentKind::Power => 0.0,
        })
        .fold(0.0, f64::max);
    props.push(check("invertible_continuous", gap, 1e-12));

    let mut bend: f64 = 0.0;
    for sg in curve.segments().iter().filter(|x| x.kind == SegmentKind::Power && x.arc.curvature_sign() < 0) {
        bend = bend.max(sg.q_hi - sg.q_lo);
    }
    for w in curve.breakpoints().windows(3) {
        let x = w[1];
        let (l, r) = (curve.derivative_left(x)?, curve.derivative_right(x)?);
        if l.is_finite() && r.is_finite() {
            bend = bend.max(l - r);
        }
    }
    props.push(check("convex", bend, 1e-9));

    let (dlo, _) = curve.domain();
    props.push(check("lowest_expected_ability", (dlo - q_t.domain().0).abs(), 1e-9));

    let mut inform_gap: f64 = 0.0;
    let mut slope_excess: f64 = 0.0;
    let mut max_residual: f64 = 0.0;
    let mut unclassified = 0.0;
    for seg in &c.segments {
        match *seg {
            EqSegment::Informative { a_lo, a_hi } => {
                for i in 0..=100 {
                    let x = a_lo + (a_hi - a_lo) * i as f64 / 100.0;
                    let qt = if i == 0 { q_t.eval_right(x)? } else { q_t.eval(x)? };
                    inform_gap = inform_gap.max((curve.eval(x.clamp(a_lo, a_hi))? - qt).abs());
                }
            }
            EqSegment::Pooled { a0, a1, .. } => {
                let (q0, q1) = (curve.eval_right(a0)?, curve.eval(a1)?);
                let slope = (q1 - q0) / (a1 - a0);
                let top = q_t.eval_right(a0.min(q_t.domain().1))?;
                let rd = if q0 < top - 1e-12 { f64::INFINITY } else { q_t.derivative_right(a0)? };
                if rd.is_finite() {
                    slope_excess = slope_excess.max((slope - rd) / rd.abs().max(1.0));
                }
                let r = mass_balance_residual(&q_t, (a0, q0), (a1, q1)).unwrap_or(f64::INFINITY);
                max_residual = max_residual.max(r.abs());
            }
            EqSegment::Unclassified { a_lo, a_hi } => unclassified += (a_hi - a_lo).max(1e-12),
        }
    }
    props.push(check("segment_structure", unclassified, 0.0));
    props.push(check("informative_matches_truthful", inform_gap, VERIFY_TOL));
    props.push(check("slope_within_right_derivative", slope_excess, VERIFY_TOL));
    props.push(check("pooled_mass_balance", max_residual, VERIFY_TOL));

    let global_mass = global_mass_balance(c, &q_t);
    props.push(check("global_mass_balance", (global_mass - 0.5).abs(), VERIFY_TOL));

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut deviations = Vec::new();
    for (i, t) in s.school_types.iter().enumerate() {
        deviations.push(deviation_check(i, c, &q_t, &t.abilities, &mut rng));
    }
    let passed = props.iter().all(|p| p.passed) && deviations.iter().all(|d| d.passed);
    Ok(GradingVerification { properties: props, deviations, global_mass, passed })
}

/// `∫ Q_eq⁻¹(q) dμ(q)`, in mass coordinates `u` with `q = Q_T(u)`.
fn global_mass_balance(c: &EquilibriumCurve, q_t: &MonotoneCurve) -> f64 {
    let (_, hi) = c.curve.range();
    let mut total = 0.0;
    let mut covered_to = q_t.domain().0;
    for seg in &c.segments {
        match *seg {
            EqSegment::Informative { a_lo, a_hi } => {
                total += 0.5 * (a_hi * a_hi - a_lo * a_lo);
                covered_to = a_hi;
            }
            EqSegment::Pooled { a0, q0, a1, q1, .. } => {
                let (al0, al1) = (true_ability(q_t, q0), true_ability(q_t, q1));
                let s = (a1 - a0) / (q1 - q0);
                let moment = q_t.integral(al0, al1).unwrap_or(f64::NAN);
                total += a0 * (al1 - al0) + s * (moment - q0 * (al1 - al0));
                covered_to = al1;
            }
            EqSegment::Unclassified { a_lo, a_hi } => {
                let (ql, qh) = (c.curve.eval_right(a_lo).unwrap_or(0.0), c.curve.eval(a_hi).unwrap_or(0.0));
                let (al0, al1) = (true_ability(q_t, ql), true_ability(q_t, qh));
                let inv = |u: f64| {
                    let q = q_t.eval(u).expect("inside domain").clamp(ql, qh);
                    c.curve.inverse(q).unwrap_or(a_hi)
                };
                total += crate::numeric::integrate(inv, al0, al1, 1e-11);
                covered_to = al1;
            }
        }
    }
    let end = q_t.domain().1;
    if covered_to < end - 1e-12 {
        // students whose jobs lie above the curve's range all map to its top
        let top = c.curve.inverse(hi).unwrap_or(c.a_hat_high);
        total += top * (end - covered_to);
    }
    total
}

/// Average placement of one school when everyone follows `c`.
fn equilibrium_placement(c: &EquilibriumCurve, q_t: &MonotoneCurve, f: &PiecewisePowerDist) -> f64 {
    let breaks = q_t.breakpoints();
    let total = f.total_mass();
    let mut v = 0.0;
    let mut covered_to = 0.0;
    for seg in &c.segments {
        match *seg {
            EqSegment::Informative { a_lo, a_hi } => {
                v += f.expect(|x| q_t.eval(x).expect("inside domain"), a_lo, a_hi, &breaks, 1e-13);
                covered_to = a_hi;
            }
            EqSegment::Pooled { a0, q0, a1, q1, alpha0, alpha1, .. } => {
                let (al0, al1) = if alpha0.is_finite() && alpha1.is_finite() {
                    (alpha0, alpha1)
                } else {
                    (true_ability(q_t, q0), true_ability(q_t, q1))
                };
                let k = (q1 - q0) / (a1 - a0);
                let mass = f.cdf(al1) - f.cdf(al0);
                let first = f.partial_moment(al0, al1, 1.0);
                v += (q0 - k * a0) * mass + k * first;
                covered_to = al1;
            }
            EqSegment::Unclassified { a_lo, a_hi } => {
                v += f.expect(|x| c.eval_extended(x), a_lo, a_hi, &c.curve.breakpoints(), 1e-13);
                covered_to = a_hi;
            }
        }
    }
    if covered_to < 1.0 {
        v += f.expect(|x| c.eval_extended(x), covered_to, 1.0, &[], 1e-13);
    }
    v / total
}

/// Placement when the school pools quantile cell `[u1, u2]` and reveals the rest.
fn pooled_cell_placement(c: &EquilibriumCurve, f: &PiecewisePowerDist, u1: f64, u2: f64) -> f64 {
    let total = f.total_mass();
    let breaks = c.curve.breakpoints();
    let h = |x: f64| c.eval_extended(x);
    let (x1, x2) = (f.quantile(u1 * total), f.quantile(u2 * total));
    let revealed = f.expect(h, 0.0, x1, &breaks, 1e-13) + f.expect(h, x2, 1.0, &breaks, 1e-13);
    let mass = (u2 - u1) * total;
    let mean = if mass > 0.0 { f.partial_moment(x1, x2, 1.0) / mass } else { x1 };
    (revealed + mass * h(mean)) / total
}

fn deviation_check(
    school: usize,
    c: &EquilibriumCurve,
    q_t: &MonotoneCurve,
    f: &PiecewisePowerDist,
    rng: &mut ChaCha8Rng,
) -> DeviationCheck {
    let eq = equilibrium_placement(c, q_t, f);
    let breaks = c.curve.breakpoints();
    let revelation = f.expect(|x| c.eval_extended(x), 0.0, 1.0, &breaks, 1e-13) / f.total_mass();
    let mut best = revelation.max(pooled_cell_placement(c, f, 0.0, 1.0));
    for _ in 0..DEVIATION_SAMPLES {
        let (a, b): (f64, f64) = (rng.gen(), rng.gen());
        let (u1, u2) = (a.min(b), a.max(b));
        if u2 - u1 < 1e-9 {
            continue;
        }
        best = best.max(pooled_cell_placement(c, f, u1, u2));
    }
    let max_gain = best - eq;
    DeviationCheck {
        school,
        equilibrium_placement: eq,
        revelation_placement: revelation,
        best_deviation_placement: best,
        max_gain,
        passed: max_gain <= VERIFY_TOL,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::piecewise::PiecewisePowerDist;

    fn power_scenario(x: f64) -> Scenario {
        Scenario::new(PiecewisePowerDist::power(x).unwrap(), vec![(1.0, PiecewisePowerDist::uniform())]).unwrap()
    }

    #[test]
    fn residual_examples() {
        let sqrt = MonotoneCurve::power_map(0.5).unwrap();
        assert!(mass_balance_residual(&sqrt, (0.0, 0.0), (0.75, 1.0)).unwrap().abs() < 1e-14);
        let id = MonotoneCurve::identity();
        assert!(mass_balance_residual(&id, (0.0, 0.0), (1.0, 1.0)).unwrap().abs() < 1e-15);
        assert!(mass_balance_residual(&id, (0.0, 0.0), (0.5, 1.0)).unwrap().abs() > 0.1);
        assert!(mass_balance_residual(&id, (0.5, 0.5), (0.5, 1.0)).is_err());
    }

    #[test]
    fn sqrt_truthful_gives_single_terminal_segment() {
        let sqrt = MonotoneCurve::power_map(0.5).unwrap();
        let eq = solve_from_truthful(&sqrt, SweepOptions::default()).unwrap();
        assert_eq!(eq.segments.len(), 1);
        assert!((eq.a_hat_high - 0.75).abs() < 1e-9, "{}", eq.a_hat_high);
        assert!((eq.curve.eval(0.3).unwrap() - 0.4).abs() < 1e-9);
    }

    #[test]
    fn linear_truthful_is_fully_informative() {
        let eq = solve_from_truthful(&MonotoneCurve::identity(), SweepOptions::default()).unwrap();
        assert_eq!(eq.segments, vec![EqSegment::Informative { a_lo: 0.0, a_hi: 1.0 }]);
        assert_eq!(eq.a_hat_high, 1.0);
    }

    #[test]
    fn power_family_slopes() {
        for x in [1.5, 2.0, 2.73, 4.0] {
            let eq = solve_grading_equilibrium(&power_scenario(x)).unwrap();
            assert_eq!(eq.segments.len(), 1, "{x}");
            let slope = eq.curve.derivative_right(0.0).unwrap();
            assert!((slope - 2.0 * x / (x + 1.0)).abs() < 1e-6, "{x}: {slope}");
        }
    }

    #[test]
    fn solver_output_verifies() {
        for x in [1.0, 2.0] {
            let s = power_scenario(x);
            let eq = solve_grading_equilibrium(&s).unwrap();
            let rep = verify_grading_equilibrium(&eq, &s).unwrap();
            assert!(rep.passed, "{x}: {:?}", rep.failures());
        }
    }

    #[test]
    fn concave_truthful_candidate_fails_deviation() {
        let s = power_scenario(2.0);
        let q_t = truthful_mapping(&s).unwrap();
        let cand = EquilibriumCurve::classify(q_t.clone(), &q_t);
        let rep = verify_grading_equilibrium(&cand, &s).unwrap();
        assert!(!rep.passed);
        assert!(rep.deviations[0].max_gain > 1e-3);
        assert!(rep.properties.iter().any(|p| p.name == "convex" && !p.passed));
    }

    #[test]
    fn convex_then_concave_truthful_map() {
        // Q_T convex on [0, ½] then concave: informative first, then pooling to the top
        let q_t = MonotoneCurve::assemble(vec![
            CurveSegment::power(0.0, 0.5, 0.0, 0.4, crate::piecewise::PowerArc::full(2.0)),
            CurveSegment::power(0.5, 1.0, 0.4, 1.0, crate::piecewise::PowerArc::full(0.5)),
        ])
        .unwrap();
        let eq = solve_from_truthful(&q_t, SweepOptions::default()).unwrap();
        assert!(matches!(eq.segments[0], EqSegment::Informative { .. }));
        assert!(matches!(eq.segments.last().unwrap(), EqSegment::Pooled { .. }));
        for seg in &eq.segments {
            if let EqSegment::Pooled { residual, .. } = seg {
                assert!(residual.abs() < 1e-8);
            }
        }
        assert!((global_mass_balance(&eq, &q_t) - 0.5).abs() < 1e-8);
    }

    #[test]
    fn start_curvature() {
        assert!(!starts_convex(&MonotoneCurve::power_map(0.5).unwrap()).unwrap());
        assert!(starts_convex(&MonotoneCurve::power_map(2.0).unwrap()).unwrap());
        assert!(!starts_convex(&MonotoneCurve::identity()).unwrap());
        let kinked = MonotoneCurve::assemble(vec![
            CurveSegment::linear(0.0, 0.2, 0.0, 0.2),
            CurveSegment::linear(0.2, 0.4, 0.2, 0.8),
            CurveSegment::linear(0.4, 1.0, 0.8, 1.0),
        ])
        .unwrap();
        assert!(starts_convex(&kinked).unwrap());
    }
}
