//! Market scenarios, the truthful mapping, grading policies and school placements.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::piecewise::{DistPiece, MonotoneCurve, PiecewisePowerDist};

/// Sup-distance of the aggregate CDF from the identity still treated as uniform.
pub const UNIFORM_TOL: f64 = 1e-6;
pub const DEFAULT_EPSILON: f64 = 1e-3;

/// Product welfare `∫ f(q)·g(â) dμ(q)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WelfarePair {
    pub f: MonotoneCurve,
    pub g: MonotoneCurve,
    pub g_concave: bool,
}

impl WelfarePair {
    pub fn new(f: MonotoneCurve, g: MonotoneCurve) -> Result<Self> {
        for (name, c) in [("f", &f), ("g", &g)] {
            let (lo, hi) = c.domain();
            if lo > 1e-12 || hi < 1.0 - 1e-12 {
                return Err(Error::InvalidScenario(format!("welfare factor {name} must be defined on [0, 1]")));
            }
        }
        if g.eval(0.0)? < 0.0 {
            return Err(Error::InvalidScenario("welfare factor g must satisfy g(0) >= 0".into()));
        }
        let g_concave = is_concave(&g);
        Ok(WelfarePair { f, g, g_concave })
    }

    pub fn identity() -> Self {
        WelfarePair { f: MonotoneCurve::identity(), g: MonotoneCurve::identity(), g_concave: true }
    }
}

fn is_concave(c: &MonotoneCurve) -> bool {
    use crate::piecewise::{Convexity, SegmentKind};
    if c.segments().iter().any(|s| s.kind == SegmentKind::Jump) {
        return false;
    }
    if c.convexity_segments().iter().any(|s| s.2 == Convexity::Convex) {
        return false;
    }
    let mut last = f64::INFINITY;
    for s in c.segments() {
        let (l, r) = (c.derivative_right(s.a_lo).unwrap_or(0.0), c.derivative_left(s.a_hi).unwrap_or(0.0));
        if l > last + 1e-9 {
            return false;
        }
        last = r;
    }
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchoolType {
    pub mass_fraction: f64,
    /// Conditional ability law of one school of this type (mass one).
    pub abilities: PiecewisePowerDist,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ranges {
    pub ability: (f64, f64),
    pub quality: (f64, f64),
}

impl Default for Ranges {
    fn default() -> Self {
        Ranges { ability: (0.0, 1.0), quality: (0.0, 1.0) }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub jobs: PiecewisePowerDist,
    pub school_types: Vec<SchoolType>,
    pub welfare: WelfarePair,
    pub raw_ranges: Ranges,
    pub epsilon: f64,
}

/// A piece of un-normalized input: a power-law block or a point mass.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RawPiece {
    Block { lo: f64, hi: f64, mass: f64, exponent: Option<f64> },
    Atom { at: f64, mass: f64 },
}

impl RawPiece {
    fn mass(&self) -> f64 {
        match *self {
            RawPiece::Block { mass, .. } | RawPiece::Atom { mass, .. } => mass,
        }
    }
}

/// Scenario input in original units and population masses.
#[derive(Clone, Debug, PartialEq)]
pub struct RawScenario {
    pub jobs: Vec<RawPiece>,
    pub schools: Vec<Vec<RawPiece>>,
    pub welfare: WelfarePair,
    pub ranges: Ranges,
    pub epsilon: f64,
}

fn affine(range: (f64, f64)) -> impl Fn(f64) -> f64 {
    move |x| (x - range.0) / (range.1 - range.0)
}

fn build_dist(pieces: &[RawPiece], range: (f64, f64), eps: f64, what: &str) -> Result<PiecewisePowerDist> {
    if pieces.is_empty() {
        return Err(Error::InvalidScenario(format!("{what} has no pieces")));
    }
    let map = affine(range);
    let mut out = Vec::with_capacity(pieces.len());
    for (i, p) in pieces.iter().enumerate() {
        let m = p.mass();
        if !(m >= 0.0) || !m.is_finite() {
            return Err(Error::InvalidScenario(format!("{what} piece {i} has negative mass {m}")));
        }
        if m == 0.0 {
            continue;
        }
        let piece = match *p {
            RawPiece::Block { lo, hi, mass, exponent } => {
                let (l, h) = (map(lo), map(hi));
                if !(h > l) || l < -1e-12 || h > 1.0 + 1e-12 {
                    return Err(Error::InvalidScenario(format!(
                        "{what} piece {i} [{lo}, {hi}] is empty or outside the declared range"
                    )));
                }
                let e = exponent.unwrap_or(1.0);
                if !(e > 0.0) {
                    return Err(Error::InvalidScenario(format!("{what} piece {i} exponent must be positive")));
                }
                DistPiece::new(l.max(0.0), h.min(1.0), mass, e)
            }
            RawPiece::Atom { at, mass } => {
                let a = map(at);
                if !(-1e-12..=1.0 + 1e-12).contains(&a) {
                    return Err(Error::InvalidScenario(format!("{what} atom {i} at {at} outside the declared range")));
                }
                DistPiece::sliver(a.clamp(0.0, 1.0), mass, eps)
            }
        };
        out.push(PiecewisePowerDist::new(vec![piece])?);
    }
    if out.is_empty() {
        return Err(Error::InvalidScenario(format!("{what} has zero total mass")));
    }
    let comps: Vec<(f64, &PiecewisePowerDist)> = out.iter().map(|d| (1.0, d)).collect();
    if comps.len() == 1 {
        return Ok(out[0].clone());
    }
    PiecewisePowerDist::mixture(&comps)
}

/// Affine-rescales both axes to `[0, 1]`, turns atoms into ε-slivers and
/// normalizes job and student masses to one.
pub fn normalize_scenario(raw: &RawScenario) -> Result<Scenario> {
    for (name, r) in [("ability", raw.ranges.ability), ("quality", raw.ranges.quality)] {
        if !(r.1 > r.0) || !r.0.is_finite() || !r.1.is_finite() {
            return Err(Error::InvalidScenario(format!("{name} range [{}, {}] is degenerate", r.0, r.1)));
        }
    }
    if !(raw.epsilon > 0.0 && raw.epsilon < 0.5) {
        return Err(Error::InvalidScenario(format!("epsilon {} must lie in (0, 0.5)", raw.epsilon)));
    }
    let jobs = build_dist(&raw.jobs, raw.ranges.quality, raw.epsilon, "jobs")?.normalized();
    if raw.schools.is_empty() {
        return Err(Error::InvalidScenario("no school types".into()));
    }
    let dists = raw
        .schools
        .iter()
        .enumerate()
        .map(|(i, s)| build_dist(s, raw.ranges.ability, raw.epsilon, &format!("school {i}")))
        .collect::<Result<Vec<_>>>()?;
    let total: f64 = dists.iter().map(|d| d.total_mass()).sum();
    let school_types = dists
        .into_iter()
        .map(|d| SchoolType { mass_fraction: d.total_mass() / total, abilities: d.normalized() })
        .collect();
    Ok(Scenario { jobs, school_types, welfare: raw.welfare.clone(), raw_ranges: raw.ranges, epsilon: raw.epsilon })
}

impl Scenario {
    /// A scenario already on `[0, 1]` with identity welfare.
    pub fn new(jobs: PiecewisePowerDist, schools: Vec<(f64, PiecewisePowerDist)>) -> Result<Self> {
        let total: f64 = schools.iter().map(|s| s.0).sum();
        if schools.is_empty() || !(total > 0.0) || schools.iter().any(|s| !(s.0 >= 0.0)) {
            return Err(Error::InvalidScenario("school mass fractions must be nonnegative with positive sum".into()));
        }
        Ok(Scenario {
            jobs: jobs.normalized(),
            school_types: schools
                .into_iter()
                .map(|(m, d)| SchoolType { mass_fraction: m / total, abilities: d.normalized() })
                .collect(),
            welfare: WelfarePair::identity(),
            raw_ranges: Ranges::default(),
            epsilon: DEFAULT_EPSILON,
        })
    }

    pub fn with_welfare(mut self, welfare: WelfarePair) -> Self {
        self.welfare = welfare;
        self
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AggregateAbilities {
    pub distribution: PiecewisePowerDist,
    pub deviation: f64,
    pub is_uniform: bool,
}

pub fn aggregate_abilities(s: &Scenario) -> Result<AggregateAbilities> {
    let comps: Vec<(f64, &PiecewisePowerDist)> =
        s.school_types.iter().map(|t| (t.mass_fraction, &t.abilities)).collect();
    let distribution = PiecewisePowerDist::mixture(&comps)?;
    let deviation = distribution.sup_deviation_from_uniform();
    Ok(AggregateAbilities { distribution, deviation, is_uniform: deviation <= UNIFORM_TOL })
}

/// `Q_T`, the job quantile function, valid when aggregate abilities are uniform.
pub fn truthful_mapping(s: &Scenario) -> Result<MonotoneCurve> {
    let agg = aggregate_abilities(s)?;
    if !agg.is_uniform {
        return Err(Error::NonUniformAggregate { deviation: agg.deviation });
    }
    Ok(s.jobs.quantile_curve())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellKind {
    Reveal,
    Pool,
}

/// A quantile interval of one school's students and how its grades are set.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyCell {
    pub lo: f64,
    pub hi: f64,
    pub kind: CellKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradingPolicy {
    pub schools: Vec<Vec<PolicyCell>>,
}

impl GradingPolicy {
    pub fn full_revelation(n: usize) -> Self {
        GradingPolicy { schools: vec![vec![PolicyCell { lo: 0.0, hi: 1.0, kind: CellKind::Reveal }]; n] }
    }

    pub fn full_pooling(n: usize) -> Self {
        GradingPolicy { schools: vec![vec![PolicyCell { lo: 0.0, hi: 1.0, kind: CellKind::Pool }]; n] }
    }

    pub fn validate(&self, n_schools: usize) -> Result<()> {
        if self.schools.len() != n_schools {
            return Err(Error::InvalidPolicy(format!(
                "policy lists {} schools, scenario has {n_schools}",
                self.schools.len()
            )));
        }
        for (i, cells) in self.schools.iter().enumerate() {
            let mut at = 0.0;
            for (j, c) in cells.iter().enumerate() {
                if (c.lo - at).abs() > 1e-12 || !(c.hi > c.lo) {
                    return Err(Error::InvalidPolicy(format!(
                        "school {i} cell {j} [{}, {}] does not continue the partition at {at}",
                        c.lo, c.hi
                    )));
                }
                at = c.hi;
            }
            if (at - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidPolicy(format!("school {i} cells stop at {at} instead of 1")));
            }
        }
        Ok(())
    }
}

/// Expected-ability laws induced by a policy: per school `G_i` and the aggregate `G`.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyOutcome {
    pub per_school: Vec<PiecewisePowerDist>,
    pub aggregate: PiecewisePowerDist,
}

/// A sliver of the given mass whose mean is exactly `at` whenever possible.
fn mean_preserving_sliver(at: f64, mass: f64, eps: f64) -> DistPiece {
    let w = eps.min(2.0 * at).min(2.0 * (1.0 - at));
    if w < 1e-12 {
        return DistPiece::sliver(at, mass, eps);
    }
    DistPiece::uniform(at - 0.5 * w, at + 0.5 * w, mass)
}

/// The expected-ability law of one school under a quantile partition.
pub fn pooled_distribution(f: &PiecewisePowerDist, cells: &[PolicyCell], eps: f64) -> Result<PiecewisePowerDist> {
    let total = f.total_mass();
    let mut parts = Vec::with_capacity(cells.len());
    for c in cells {
        let sub = f.restrict_mass_range(c.lo * total, c.hi * total)?;
        parts.push(match c.kind {
            CellKind::Reveal => sub,
            CellKind::Pool => {
                PiecewisePowerDist::new(vec![mean_preserving_sliver(sub.mean(), sub.total_mass(), eps)])?
            }
        });
    }
    let comps: Vec<(f64, &PiecewisePowerDist)> = parts.iter().map(|d| (1.0, d)).collect();
    PiecewisePowerDist::mixture(&comps)
}

pub fn apply_grading_policy(s: &Scenario, p: &GradingPolicy) -> Result<PolicyOutcome> {
    p.validate(s.school_types.len())?;
    let per_school = s
        .school_types
        .iter()
        .zip(&p.schools)
        .map(|(t, cells)| {
            if cells.iter().all(|c| c.kind == CellKind::Reveal) {
                Ok(t.abilities.clone())
            } else {
                pooled_distribution(&t.abilities, cells, s.epsilon)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let comps: Vec<(f64, &PiecewisePowerDist)> =
        s.school_types.iter().zip(&per_school).map(|(t, g)| (t.mass_fraction, g)).collect();
    let aggregate = PiecewisePowerDist::mixture(&comps)?;
    Ok(PolicyOutcome { per_school, aggregate })
}

/// Average job quality `∫ Q(â) dG_i(â)` received by a school.
pub fn placement_value(q_map: &MonotoneCurve, g_i: &PiecewisePowerDist) -> Result<f64> {
    let (dlo, dhi) = q_map.domain();
    let (slo, shi) = g_i.support();
    if slo < dlo - 1e-9 || shi > dhi + 1e-9 {
        return Err(Error::OutsideDomain { value: if slo < dlo { slo } else { shi }, lo: dlo, hi: dhi });
    }
    let h = |x: f64| q_map.eval(x.clamp(dlo, dhi)).expect("clamped into domain");
    let v = g_i.expect(h, 0.0, 1.0, &q_map.breakpoints(), 1e-12);
    Ok(v / g_i.total_mass())
}

/// Welfare of the assortative matching between `jobs` and `grades`, two laws of
/// equal mass: `M·∫₀¹ f(q(t))·g(â(t)) dt` over common mass rank `t`.
pub fn assortative_welfare(jobs: &PiecewisePowerDist, grades: &PiecewisePowerDist, w: &WelfarePair) -> Result<f64> {
    let (mj, mg) = (jobs.total_mass(), grades.total_mass());
    if (mj - mg).abs() > 1e-6 * mj.max(mg).max(1e-300) {
        return Err(Error::MassMismatch { students: mg, jobs: mj });
    }
    let (qj, qg) = (jobs.quantile_curve(), grades.quantile_curve());
    let mut breaks: Vec<f64> = qj.breakpoints().iter().map(|b| b / mj).collect();
    breaks.extend(qg.breakpoints().iter().map(|b| b / mg));
    breaks.extend(w.f.breakpoints().iter().map(|&q| jobs.cdf(q) / mj));
    breaks.extend(w.g.breakpoints().iter().map(|&a| grades.cdf(a) / mg));
    let h = |t: f64| {
        let q = qj.eval((t * mj).min(mj)).expect("inside domain");
        let a = qg.eval((t * mg).min(mg)).expect("inside domain");
        w.f.eval(q.clamp(0.0, 1.0)).expect("unit domain") * w.g.eval(a.clamp(0.0, 1.0)).expect("unit domain")
    };
    Ok(mj * crate::numeric::integrate_split(h, 0.0, 1.0, &breaks, 1e-11))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn figure_one_scenario() -> Scenario {
        let jobs = PiecewisePowerDist::new(vec![
            DistPiece::uniform(0.0, 0.5, 1.0 / 3.0),
            DistPiece::uniform(0.5, 1.0, 2.0 / 3.0),
        ])
        .unwrap();
        let s1 = PiecewisePowerDist::new(vec![DistPiece::uniform(0.0, 2.0 / 3.0, 1.0)]).unwrap();
        let s2 = PiecewisePowerDist::new(vec![
            DistPiece::uniform(0.0, 2.0 / 3.0, 0.5),
            DistPiece::uniform(2.0 / 3.0, 1.0, 0.5),
        ])
        .unwrap();
        Scenario::new(jobs, vec![(1.0 / 3.0, s1), (2.0 / 3.0, s2)]).unwrap()
    }

    #[test]
    fn figure_one_aggregate_is_uniform() {
        let agg = aggregate_abilities(&figure_one_scenario()).unwrap();
        assert!(agg.is_uniform, "{}", agg.deviation);
    }

    #[test]
    fn truthful_mapping_examples() {
        let s = Scenario::new(PiecewisePowerDist::uniform(), vec![(1.0, PiecewisePowerDist::uniform())]).unwrap();
        let q = truthful_mapping(&s).unwrap();
        assert!((q.eval(0.3).unwrap() - 0.3).abs() < 1e-15);
        let s = Scenario::new(PiecewisePowerDist::power(2.0).unwrap(), vec![(1.0, PiecewisePowerDist::uniform())])
            .unwrap();
        let q = truthful_mapping(&s).unwrap();
        assert!((q.eval(0.49).unwrap() - 0.7).abs() < 1e-12);
        let bad = Scenario::new(PiecewisePowerDist::uniform(), vec![(1.0, PiecewisePowerDist::power(2.0).unwrap())])
            .unwrap();
        assert!(matches!(truthful_mapping(&bad), Err(Error::NonUniformAggregate { .. })));
    }

    #[test]
    fn figure_one_placements() {
        let s = figure_one_scenario();
        let q = truthful_mapping(&s).unwrap();
        assert!((q.eval(1.0 / 3.0).unwrap() - 0.5).abs() < 1e-12);
        let f2 = &s.school_types[1].abilities;
        let truthful = placement_value(&q, f2).unwrap();
        assert!((truthful - 21.0 / 32.0).abs() < 1e-10, "{truthful}");
        let mut cells = GradingPolicy::full_revelation(2);
        cells.schools[1] = vec![PolicyCell { lo: 0.0, hi: 1.0, kind: CellKind::Pool }];
        let out = apply_grading_policy(&s, &cells).unwrap();
        assert!((out.per_school[1].mean() - 7.0 / 12.0).abs() < 1e-12);
        let pooled = placement_value(&q, &out.per_school[1]).unwrap();
        assert!((pooled - 11.0 / 16.0).abs() < 1e-10, "{pooled}");
    }

    #[test]
    fn full_pooling_of_uniform_school_is_a_sliver_at_half() {
        let s = Scenario::new(PiecewisePowerDist::uniform(), vec![(1.0, PiecewisePowerDist::uniform())]).unwrap();
        let out = apply_grading_policy(&s, &GradingPolicy::full_pooling(1)).unwrap();
        let g = &out.per_school[0];
        assert!((g.mean() - 0.5).abs() < 1e-12);
        let (lo, hi) = g.support();
        assert!(hi - lo <= s.epsilon + 1e-15);
    }

    #[test]
    fn assortative_welfare_examples() {
        let u = PiecewisePowerDist::uniform();
        let w = assortative_welfare(&u, &u, &WelfarePair::identity()).unwrap();
        assert!((w - 1.0 / 3.0).abs() < 1e-12);
        let half = u.scaled(0.5).unwrap();
        assert!(matches!(assortative_welfare(&u, &half, &WelfarePair::identity()), Err(Error::MassMismatch { .. })));
    }

    #[test]
    fn normalize_rescales_axes_and_masses() {
        let raw = RawScenario {
            jobs: vec![RawPiece::Block { lo: 10.0, hi: 20.0, mass: 3.0, exponent: None }],
            schools: vec![
                vec![RawPiece::Block { lo: 2.0, hi: 3.0, mass: 1.0, exponent: None }],
                vec![RawPiece::Block { lo: 3.0, hi: 4.0, mass: 1.0, exponent: None }],
            ],
            welfare: WelfarePair::identity(),
            ranges: Ranges { ability: (2.0, 4.0), quality: (10.0, 20.0) },
            epsilon: 1e-3,
        };
        let s = normalize_scenario(&raw).unwrap();
        assert!((s.jobs.total_mass() - 1.0).abs() < 1e-15);
        assert_eq!(s.school_types[1].abilities.support(), (0.5, 1.0));
        assert!((s.school_types[0].mass_fraction - 0.5).abs() < 1e-15);
        assert!(aggregate_abilities(&s).unwrap().is_uniform);
    }

    #[test]
    fn normalize_turns_atoms_into_slivers() {
        let raw = RawScenario {
            jobs: vec![
                RawPiece::Atom { at: 0.0, mass: 0.25 },
                RawPiece::Atom { at: 0.501, mass: 0.5 },
                RawPiece::Atom { at: 1.0, mass: 0.25 },
            ],
            schools: vec![vec![RawPiece::Block { lo: 0.0, hi: 1.0, mass: 1.0, exponent: None }]],
            welfare: WelfarePair::identity(),
            ranges: Ranges::default(),
            epsilon: 1e-3,
        };
        let s = normalize_scenario(&raw).unwrap();
        let p = s.jobs.pieces();
        assert_eq!(p.len(), 3);
        assert_eq!((p[0].lo, p[0].hi), (0.0, 1e-3));
        assert!((p[2].lo - (1.0 - 1e-3)).abs() < 1e-15);
        let bad = RawScenario { jobs: vec![RawPiece::Atom { at: 0.5, mass: -1.0 }], ..raw };
        assert!(normalize_scenario(&bad).is_err());
    }
}
