//! Two-stage early-contracting game: symmetric-interval solution for one
//! uniform school type and a δ-quantum cascade for general markets.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grading_eq::PropertyCheck;
use crate::market::{
    apply_grading_policy, assortative_welfare, placement_value, truthful_mapping, GradingPolicy, Scenario,
    UNIFORM_TOL,
};
use crate::numeric::bisect;
use crate::piecewise::{MonotoneCurve, PiecewisePowerDist};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EarlyOptions {
    /// Job mass contracted per cascade round.
    pub delta: f64,
    /// Blocking mass below which the cascade stops.
    pub tolerance: f64,
    /// Scan points for the boundary condition of the symmetric solution.
    pub grid: usize,
}

impl Default for EarlyOptions {
    fn default() -> Self {
        EarlyOptions { delta: 1e-3, tolerance: 1e-6, grid: 10_000 }
    }
}

/// Jobs contracted in stage 1 by one school type.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContractBlock {
    pub school: usize,
    pub q_lo: f64,
    pub q_hi: f64,
    pub mass: f64,
    /// Grade the employers see: the school's average expected ability.
    pub school_average: f64,
    pub jobs: PiecewisePowerDist,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EarlyContractOutcome {
    pub contracted_jobs: Vec<ContractBlock>,
    /// Fraction of each school type's students contracted in stage 1.
    pub contracted_students: Vec<f64>,
    pub ability_interval: Option<(f64, f64)>,
    pub stage2_map: MonotoneCurve,
    pub remaining_jobs: Option<PiecewisePowerDist>,
    pub welfare_stage1: f64,
    pub welfare_stage2: f64,
    /// Boundary-condition roots that passed verification (symmetric solver only).
    pub passing_candidates: Vec<f64>,
    pub rounds: usize,
}

impl EarlyContractOutcome {
    pub fn welfare(&self) -> f64 {
        self.welfare_stage1 + self.welfare_stage2
    }

    pub fn contracted_mass(&self) -> f64 {
        self.contracted_jobs.iter().map(|b| b.mass).sum()
    }

    /// Contracted job mass with quality in `[lo, hi]`.
    pub fn contracted_between(&self, lo: f64, hi: f64) -> f64 {
        self.contracted_jobs.iter().map(|b| b.jobs.cdf(hi) - b.jobs.cdf(lo)).sum()
    }
}

/// The assortative map from remaining grades to remaining jobs, `Q̂ = μ̂ₙ⁻¹ ∘ Ĝₙ`.
pub fn stage2_mapping(remaining_jobs: &PiecewisePowerDist, remaining_grades: &PiecewisePowerDist) -> Result<MonotoneCurve> {
    let (mj, mg) = (remaining_jobs.total_mass(), remaining_grades.total_mass());
    if (mj - mg).abs() > 1e-6 * mj.max(mg) {
        return Err(Error::MassMismatch { students: mg, jobs: mj });
    }
    remaining_jobs.normalized().quantile_curve().compose(&remaining_grades.normalized().cdf_curve())
}

/// Stage-2 market defined by remaining jobs and remaining student fractions.
struct Remnant {
    jobs: Option<PiecewisePowerDist>,
    grades: Option<PiecewisePowerDist>,
}

impl Remnant {
    fn new(jobs: Option<PiecewisePowerDist>, s: &Scenario, g: &[PiecewisePowerDist], remaining: &[f64]) -> Result<Self> {
        let comps: Vec<(f64, &PiecewisePowerDist)> = s
            .school_types
            .iter()
            .zip(g)
            .zip(remaining)
            .filter(|(_, &r)| r > 1e-15)
            .map(|((t, gi), &r)| (t.mass_fraction * r, gi))
            .collect();
        let grades = if comps.is_empty() { None } else { Some(PiecewisePowerDist::mixture(&comps)?) };
        Ok(Remnant { jobs, grades })
    }

    fn mass(&self) -> f64 {
        self.jobs.as_ref().map_or(0.0, |j| j.total_mass())
    }

    fn active(&self) -> Option<(&PiecewisePowerDist, &PiecewisePowerDist)> {
        match (&self.jobs, &self.grades) {
            (Some(j), Some(g)) if j.total_mass() > 1e-12 => Some((j, g)),
            _ => None,
        }
    }

    fn map(&self) -> Result<MonotoneCurve> {
        match self.active() {
            Some((j, g)) => stage2_mapping(j, g),
            None => Ok(MonotoneCurve::identity()),
        }
    }
}

fn school_averages(g: &[PiecewisePowerDist]) -> Vec<f64> {
    g.iter().map(|d| d.mean()).collect()
}

fn finish(
    s: &Scenario,
    remnant: &Remnant,
    blocks: Vec<ContractBlock>,
    remaining: &[f64],
    ability_interval: Option<(f64, f64)>,
    rounds: usize,
) -> Result<EarlyContractOutcome> {
    let w = &s.welfare;
    let welfare_stage1 = blocks
        .iter()
        .map(|b| {
            let fq = b.jobs.expect(|q| w.f.eval(q).expect("unit domain"), 0.0, 1.0, &w.f.breakpoints(), 1e-13);
            fq * w.g.eval(b.school_average.clamp(0.0, 1.0)).expect("unit domain")
        })
        .sum();
    let welfare_stage2 = match remnant.active() {
        Some((j, gr)) => assortative_welfare(j, gr, w)?,
        None => 0.0,
    };
    Ok(EarlyContractOutcome {
        contracted_jobs: blocks,
        contracted_students: remaining.iter().map(|r| 1.0 - r).collect(),
        ability_interval,
        stage2_map: remnant.map()?,
        remaining_jobs: remnant.jobs.clone(),
        welfare_stage1,
        welfare_stage2,
        passing_candidates: Vec::new(),
        rounds,
    })
}

fn block_from(school: usize, average: f64, jobs: PiecewisePowerDist) -> ContractBlock {
    let (q_lo, q_hi) = jobs.support();
    ContractBlock { school, q_lo, q_hi, mass: jobs.total_mass(), school_average: average, jobs }
}

/// Jobs outside the mass ranks `[m1, m2]`.
fn complement(jobs: &PiecewisePowerDist, m1: f64, m2: f64) -> Result<Option<PiecewisePowerDist>> {
    let total = jobs.total_mass();
    let mut parts = Vec::new();
    if m1 > 1e-15 {
        parts.push(jobs.restrict_mass_range(0.0, m1)?);
    }
    if m2 < total - 1e-15 {
        parts.push(jobs.restrict_mass_range(m2, total)?);
    }
    if parts.is_empty() {
        return Ok(None);
    }
    let comps: Vec<(f64, &PiecewisePowerDist)> = parts.iter().map(|d| (1.0, d)).collect();
    Ok(Some(PiecewisePowerDist::mixture(&comps)?))
}

fn check_single_uniform(s: &Scenario) -> Result<()> {
    if s.school_types.len() != 1 {
        return Err(Error::InvalidScenario(format!(
            "symmetric solution needs one school type, found {}",
            s.school_types.len()
        )));
    }
    let dev = s.school_types[0].abilities.sup_deviation_from_uniform();
    if dev > UNIFORM_TOL {
        return Err(Error::NonUniformAggregate { deviation: dev });
    }
    Ok(())
}

/// Outcome in which the jobs of truthful ranks `[a, 1 − a]` contract early.
pub fn interval_outcome(s: &Scenario, a: f64) -> Result<EarlyContractOutcome> {
    check_single_uniform(s)?;
    let f = s.school_types[0].abilities.clone();
    let g = vec![f.clone()];
    let avg = f.mean();
    if a >= 0.5 - 1e-12 {
        let remnant = Remnant::new(Some(s.jobs.clone()), s, &g, &[1.0])?;
        return finish(s, &remnant, Vec::new(), &[1.0], None, 0);
    }
    let a = a.max(0.0);
    let contracted = s.jobs.restrict_mass_range(a, 1.0 - a)?;
    let rest = complement(&s.jobs, a, 1.0 - a)?;
    let remaining = [2.0 * a];
    let remnant = Remnant::new(rest, s, &g, &remaining)?;
    let blocks = vec![block_from(0, avg, contracted)];
    finish(s, &remnant, blocks, &remaining, Some((a, 1.0 - a)), 1)
}

/// `R(a) = Q_T(a) − (average quality of the jobs outside ranks [a, 1 − a])`.
pub fn boundary_residual(q_t: &MonotoneCurve, a: f64) -> f64 {
    let psi = |x: f64| q_t.integral(0.0, x).expect("unit domain");
    let avg = (psi(a) + psi(1.0) - psi(1.0 - a)) / (2.0 * a);
    q_t.eval(a).expect("unit domain") - avg
}

pub fn solve_uniform_interval(s: &Scenario) -> Result<EarlyContractOutcome> {
    solve_uniform_interval_with(s, EarlyOptions::default())
}

pub fn solve_uniform_interval_with(s: &Scenario, opts: EarlyOptions) -> Result<EarlyContractOutcome> {
    check_single_uniform(s)?;
    let q_t = truthful_mapping(s)?;
    let n = opts.grid.max(10);
    let pts: Vec<f64> = (1..=n).map(|j| 0.5 * j as f64 / n as f64).collect();
    let r: Vec<f64> = pts.iter().map(|&a| boundary_residual(&q_t, a)).collect();
    let mut candidates = Vec::new();
    for j in 1..n {
        if r[j - 1] < 0.0 && r[j] >= 0.0 {
            candidates.push(bisect(|a| boundary_residual(&q_t, a), pts[j - 1], pts[j], 1e-13, 200));
        }
    }
    if r[n - 1] <= 0.0 {
        candidates.push(0.5);
    }
    let policy = GradingPolicy::full_revelation(1);
    let mut passing = Vec::new();
    let mut chosen: Option<EarlyContractOutcome> = None;
    for &a in &candidates {
        let o = interval_outcome(s, a)?;
        let rep = verify_early_equilibrium(&o, s, &policy)?;
        if rep.passed {
            passing.push(a);
            if chosen.is_none() {
                chosen = Some(o);
            }
        }
    }
    match chosen {
        Some(mut o) => {
            o.passing_candidates = passing;
            Ok(o)
        }
        None => Err(Error::EarlySolverFailed(format!(
            "no boundary candidate passed verification (candidates {candidates:?})"
        ))),
    }
}

pub fn solve_cascade(s: &Scenario, p: &GradingPolicy) -> Result<EarlyContractOutcome> {
    solve_cascade_with(s, p, EarlyOptions::default())
}

/// Executes blocking contracts in δ quanta, best-average willing school first,
/// until no school–job pair blocks by more than the tolerance.
pub fn solve_cascade_with(s: &Scenario, p: &GradingPolicy, opts: EarlyOptions) -> Result<EarlyContractOutcome> {
    if !(opts.delta > 0.0) {
        return Err(Error::InvalidScenario("delta must be positive".into()));
    }
    let g = apply_grading_policy(s, p)?.per_school;
    let avg = school_averages(&g);
    let mut order: Vec<usize> = (0..g.len()).collect();
    order.sort_by(|&i, &j| {
        if (avg[i] - avg[j]).abs() <= 1e-9 {
            i.cmp(&j)
        } else {
            avg[j].total_cmp(&avg[i])
        }
    });
    let mut remaining = vec![1.0; g.len()];
    let mut jobs = Some(s.jobs.clone());
    let mut blocks: Vec<ContractBlock> = Vec::new();
    let max_rounds = 2 * (1.0 / opts.delta).ceil() as usize + 100;
    let mut rounds = 0;
    loop {
        let remnant = Remnant::new(jobs.clone(), s, &g, &remaining)?;
        let Some((jd, gd)) = remnant.active() else { break };
        let mass = remnant.mass();
        let q_hat = stage2_mapping(jd, gd)?;
        let (jn, gn) = (jd.normalized(), gd.normalized());
        let mut pick = None;
        for &i in &order {
            if remaining[i] <= 1e-15 {
                continue;
            }
            let placement = placement_value(&q_hat, &g[i])?;
            let (t1, t2) = (jn.cdf(placement), gn.cdf(avg[i]));
            if (t2 - t1) * mass > opts.tolerance {
                pick = Some((i, t1, t2));
                break;
            }
        }
        let Some((i, t1, t2)) = pick else { break };
        rounds += 1;
        if rounds > max_rounds {
            return Err(Error::EarlySolverFailed(format!("cascade did not settle within {max_rounds} rounds")));
        }
        let students = s.school_types[i].mass_fraction * remaining[i];
        let take = opts.delta.min((t2 - t1) * mass).min(students);
        let m_hi = t2 * mass;
        let m_lo = (m_hi - take).max(0.0);
        let sub = jd.restrict_mass_range(m_lo, m_hi)?;
        let taken = sub.total_mass();
        jobs = complement(jd, m_lo, m_hi)?;
        remaining[i] = if taken >= students - 1e-15 { 0.0 } else { remaining[i] - taken / s.school_types[i].mass_fraction };
        let block = block_from(i, avg[i], sub);
        match blocks.last_mut() {
            Some(last) if last.school == i && touches(last, &block) => merge_into(last, block)?,
            _ => blocks.push(block),
        }
    }
    let remnant = Remnant::new(jobs, s, &g, &remaining)?;
    let interval = if s.school_types.len() == 1 && !blocks.is_empty() {
        let b = blocks.iter().map(|x| x.q_lo).fold(f64::INFINITY, f64::min);
        let c = blocks.iter().map(|x| x.q_hi).fold(f64::NEG_INFINITY, f64::max);
        Some((s.jobs.cdf(b), s.jobs.cdf(c)))
    } else {
        None
    };
    finish(s, &remnant, blocks, &remaining, interval, rounds)
}

fn touches(a: &ContractBlock, b: &ContractBlock) -> bool {
    (a.q_lo - b.q_hi).abs() < 1e-12 || (a.q_hi - b.q_lo).abs() < 1e-12
}

fn merge_into(last: &mut ContractBlock, b: ContractBlock) -> Result<()> {
    let jobs = PiecewisePowerDist::mixture(&[(1.0, &last.jobs), (1.0, &b.jobs)])?;
    *last = block_from(last.school, last.school_average, jobs);
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EarlyVerification {
    pub conditions: Vec<PropertyCheck>,
    /// `|μ(b) − (1 − μ(c))|` for one uniform school type with contracts.
    pub symmetry_gap: Option<f64>,
    /// `c − 2b` in the same case.
    pub c_minus_2b: Option<f64>,
    pub passed: bool,
}

impl EarlyVerification {
    pub fn failures(&self) -> Vec<String> {
        self.conditions.iter().filter(|c| !c.passed).map(|c| c.name.clone()).collect()
    }

    pub fn worst(&self, name: &str) -> Option<f64> {
        self.conditions.iter().find(|c| c.name == name).map(|c| c.worst)
    }
}

pub fn verify_early_equilibrium(o: &EarlyContractOutcome, s: &Scenario, p: &GradingPolicy) -> Result<EarlyVerification> {
    verify_early_equilibrium_tol(o, s, p, 1e-6)
}

/// Verification slack for cascade outcomes, which are exact only up to the round size.
pub fn cascade_tolerance(delta: f64) -> f64 {
    1e-6 + 5.0 * delta
}

/// Re-evaluates every equilibrium condition from the outcome's remaining
/// market, independent of the stored stage-2 map.
pub fn verify_early_equilibrium_tol(
    o: &EarlyContractOutcome,
    s: &Scenario,
    p: &GradingPolicy,
    tol: f64,
) -> Result<EarlyVerification> {
    let g = apply_grading_policy(s, p)?.per_school;
    let avg = school_averages(&g);
    let remaining: Vec<f64> = o.contracted_students.iter().map(|c| (1.0 - c).max(0.0)).collect();
    if remaining.len() != g.len() {
        return Err(Error::InvalidPolicy("outcome and policy disagree on the number of schools".into()));
    }
    let remnant = Remnant::new(o.remaining_jobs.clone(), s, &g, &remaining)?;
    let mut conds = Vec::new();
    let mk = |name: &str, worst: f64| PropertyCheck { name: name.into(), passed: worst <= tol, worst };

    let contracted = o.contracted_mass();
    let mut cons: f64 = (contracted + remnant.mass() - s.jobs.total_mass()).abs();
    for (i, t) in s.school_types.iter().enumerate() {
        let by_school: f64 = o.contracted_jobs.iter().filter(|b| b.school == i).map(|b| b.mass).sum();
        cons = cons.max((by_school - t.mass_fraction * o.contracted_students[i]).abs());
    }
    conds.push(PropertyCheck { name: "mass_conservation".into(), passed: cons <= 1e-9, worst: cons });

    let (mut c1a, mut c1b, mut c2, mut mono): (f64, f64, f64, f64) = (0.0, 0.0, 0.0, 0.0);
    let mut stage2_dip: f64 = 0.0;
    if let Some((jd, gd)) = remnant.active() {
        let q_hat = stage2_mapping(jd, gd)?;
        let (jn, gn) = (jd.normalized(), gd.normalized());
        let mass = jd.total_mass();
        let placement = g.iter().map(|gi| placement_value(&q_hat, gi)).collect::<Result<Vec<_>>>()?;
        let ability_of = |q: f64| gn.quantile(jn.cdf(q));
        for b in &o.contracted_jobs {
            c1a = c1a.max(ability_of(b.q_hi) - b.school_average);
            c1b = c1b.max(placement[b.school] - b.q_lo);
            let t_lo = jn.cdf(b.q_lo);
            if t_lo * mass > 1e-12 {
                mono = mono.max(gn.quantile(t_lo) - b.school_average);
            }
            let t_hi = jn.cdf(b.q_hi);
            if (1.0 - t_hi) * mass > 1e-12 {
                mono = mono.max(b.school_average - gn.quantile(t_hi));
            }
        }
        for (i, &r) in remaining.iter().enumerate() {
            if r > 1e-15 {
                let blocking = (gn.cdf(avg[i]) - jn.cdf(placement[i])).max(0.0) * mass;
                c2 = c2.max(blocking);
            }
        }
        let mut last = f64::NEG_INFINITY;
        for (_, q) in q_hat.sample(1000) {
            stage2_dip = stage2_dip.max(last - q);
            last = q;
        }
    }
    let mut c3: f64 = 0.0;
    for x in &o.contracted_jobs {
        for y in &o.contracted_jobs {
            if x.q_hi <= y.q_lo + 1e-12 && x.mass > 0.0 && y.mass > 0.0 {
                c3 = c3.max(x.school_average - y.school_average);
            }
        }
    }
    conds.push(mk("job_prefers_contract", c1a));
    conds.push(mk("student_prefers_contract", c1b));
    conds.push(mk("no_blocking_pair", c2));
    conds.push(mk("better_jobs_to_better_schools", c3.max(0.0) - 1e-9));
    conds.push(mk("monotone_assignment", mono));
    conds.push(mk("stage2_monotone", stage2_dip));

    let (mut symmetry_gap, mut c_minus_2b) = (None, None);
    let single_uniform = s.school_types.len() == 1
        && g[0].sup_deviation_from_uniform() <= UNIFORM_TOL
        && !o.contracted_jobs.is_empty();
    if single_uniform {
        let b = o.contracted_jobs.iter().map(|x| x.q_lo).fold(f64::INFINITY, f64::min);
        let c = o.contracted_jobs.iter().map(|x| x.q_hi).fold(f64::NEG_INFINITY, f64::max);
        let gap = (s.jobs.cdf(b) - (1.0 - s.jobs.cdf(c))).abs();
        symmetry_gap = Some(gap);
        c_minus_2b = Some(c - 2.0 * b);
        conds.push(mk("symmetric_interval", gap));
        conds.push(mk("c_at_most_2b", c - 2.0 * b));
    }
    let passed = conds.iter().all(|c| c.passed);
    Ok(EarlyVerification { conditions: conds, symmetry_gap, c_minus_2b, passed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::piecewise::DistPiece;

    fn uniform_school(jobs: PiecewisePowerDist) -> Scenario {
        Scenario::new(jobs, vec![(1.0, PiecewisePowerDist::uniform())]).unwrap().with_epsilon(1e-4)
    }

    fn example_111() -> Scenario {
        let eps = 1e-4;
        let jobs = PiecewisePowerDist::new(vec![
            DistPiece::sliver(0.0, 0.2, eps),
            DistPiece::sliver(0.64, 0.45, eps),
            DistPiece::sliver(1.0, 0.35, eps),
        ])
        .unwrap();
        uniform_school(jobs)
    }

    fn early_example() -> Scenario {
        uniform_school(
            PiecewisePowerDist::new(vec![DistPiece::uniform(0.0, 0.5, 0.25), DistPiece::uniform(0.5, 1.0, 0.75)])
                .unwrap(),
        )
    }

    #[test]
    fn stage2_expands_outer_blocks() {
        let jobs = PiecewisePowerDist::new(vec![DistPiece::uniform(0.0, 0.4, 0.4), DistPiece::uniform(0.6, 1.0, 0.4)])
            .unwrap();
        let grades = PiecewisePowerDist::uniform().scaled(0.8).unwrap();
        let q = stage2_mapping(&jobs, &grades).unwrap();
        assert!((q.eval(0.25).unwrap() - 0.2).abs() < 1e-12);
        assert!((q.eval(0.5).unwrap() - 0.4).abs() < 1e-12);
        assert!((q.eval_right(0.5).unwrap() - 0.6).abs() < 1e-12);
        assert!((q.eval(0.75).unwrap() - 0.8).abs() < 1e-12);
        assert!(stage2_mapping(&jobs, &PiecewisePowerDist::uniform()).is_err());
    }

    #[test]
    fn early_example_quality_five_eighths_maps_to_seven_sixteenths() {
        let s = early_example();
        let o = interval_outcome(&s, 0.5).unwrap();
        assert!((o.stage2_map.inverse(0.625).unwrap() - 7.0 / 16.0).abs() < 1e-9);
        let rep = verify_early_equilibrium(&o, &s, &GradingPolicy::full_revelation(1)).unwrap();
        assert!(!rep.passed);
        assert!((rep.worst("no_blocking_pair").unwrap() - 1.0 / 16.0).abs() < 1e-9);
    }

    #[test]
    fn uniform_jobs_have_no_early_contracts() {
        let s = uniform_school(PiecewisePowerDist::uniform());
        let o = solve_uniform_interval(&s).unwrap();
        assert!(o.contracted_jobs.is_empty());
        assert!((o.welfare() - 1.0 / 3.0).abs() < 1e-9);
        let c = solve_cascade(&s, &GradingPolicy::full_revelation(1)).unwrap();
        assert!(c.contracted_jobs.is_empty());
        let pooled = solve_cascade(&s, &GradingPolicy::full_pooling(1)).unwrap();
        assert!(pooled.contracted_mass() < 1e-6);
    }

    #[test]
    fn example_111_contracts_the_middle_interval() {
        let s = example_111();
        let o = solve_uniform_interval(&s).unwrap();
        let (lo, hi) = o.ability_interval.unwrap();
        assert!((lo - 0.2).abs() < 1e-6 && (hi - 0.8).abs() < 1e-6, "{lo} {hi}");
        assert!((o.contracted_between(0.5, 0.8) - 0.45).abs() < 1e-9);
        assert!((o.contracted_between(0.9, 1.0) - 0.15).abs() < 1e-6);
        assert!((o.welfare() - 0.369).abs() < 1e-3, "{}", o.welfare());
        let empty = interval_outcome(&s, 0.5).unwrap();
        let rep = verify_early_equilibrium(&empty, &s, &GradingPolicy::full_revelation(1)).unwrap();
        assert!(rep.failures().contains(&"no_blocking_pair".to_string()));
    }

    #[test]
    fn cascade_agrees_with_symmetric_solution() {
        let s = example_111();
        let sym = solve_uniform_interval(&s).unwrap();
        let cas = solve_cascade(&s, &GradingPolicy::full_revelation(1)).unwrap();
        assert!((cas.contracted_mass() - sym.contracted_mass()).abs() < 5e-3, "{}", cas.contracted_mass());
        assert!((cas.welfare() - sym.welfare()).abs() < 5e-3);
        let rep = verify_early_equilibrium_tol(&cas, &s, &GradingPolicy::full_revelation(1), 5e-3).unwrap();
        assert!(rep.passed, "{:?}", rep.conditions);
    }
}
