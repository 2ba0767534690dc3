//! Welfare integrals, price-of-anarchy reports and their bound checks.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::early_eq::{solve_cascade_with, solve_uniform_interval_with, EarlyContractOutcome, EarlyOptions};
use crate::error::{Error, Result};
use crate::grading_eq::{solve_grading_equilibrium_with, EqSegment, EquilibriumCurve, SweepOptions};
use crate::market::{aggregate_abilities, assortative_welfare, GradingPolicy, Scenario, WelfarePair};
use crate::numeric::golden_section_max;
use crate::piecewise::{DistPiece, MonotoneCurve, PiecewisePowerDist};

/// Stated constant of the linear-equilibrium bound for the grading game.
pub const LINEAR_GRADING_BOUND: f64 = 1.36;
pub const MIN_WELFARE: f64 = 1e-12;

pub enum Mapping<'a> {
    Curve(&'a MonotoneCurve),
    Early(&'a EarlyContractOutcome),
}

/// `∫ f(q)·g(Q⁻¹(q)) dμ(q)`; early outcomes already carry their two-stage welfare.
pub fn welfare(m: Mapping<'_>, s: &Scenario) -> Result<f64> {
    match m {
        Mapping::Early(o) => Ok(o.welfare()),
        Mapping::Curve(q) => curve_welfare(q, &s.jobs, &s.welfare, 0.0, 1.0),
    }
}

fn curve_welfare(q: &MonotoneCurve, jobs: &PiecewisePowerDist, w: &WelfarePair, lo: f64, hi: f64) -> Result<f64> {
    let (rlo, rhi) = q.range();
    let slo = jobs.support().0;
    if slo < rlo - 1e-6 {
        return Err(Error::OutsideDomain { value: slo, lo: rlo, hi: rhi });
    }
    let mut breaks = q.range_breakpoints();
    breaks.extend(w.f.breakpoints());
    breaks.extend(w.g.breakpoints().iter().filter_map(|&a| q.eval(a.clamp(q.domain().0, q.domain().1)).ok()));
    let h = |x: f64| {
        let a = q.inverse(x.clamp(rlo, rhi)).expect("clamped into range");
        w.f.eval(x.clamp(0.0, 1.0)).expect("unit domain") * w.g.eval(a.clamp(0.0, 1.0)).expect("unit domain")
    };
    Ok(jobs.expect(h, lo, hi, &breaks, 1e-12))
}

/// Welfare of the assortative matching of jobs to true abilities.
pub fn optimal_welfare(s: &Scenario) -> Result<f64> {
    let agg = aggregate_abilities(s)?;
    assortative_welfare(&s.jobs, &agg.distribution, &s.welfare)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Game {
    Grading,
    EarlyUniform,
    EarlyCascade,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub name: String,
    pub value: f64,
    pub satisfied: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WelfareReport {
    pub game: Game,
    pub welfare_opt: f64,
    pub welfare_eq: f64,
    pub poa: f64,
    pub bounds: Vec<BoundCheck>,
    pub diagnostics: Vec<(String, f64)>,
}

#[derive(Clone, Debug, Default)]
pub struct PoaOptions {
    pub sweep: SweepOptions,
    pub early: EarlyOptions,
    pub policy: Option<GradingPolicy>,
}

pub enum Solved {
    Grading(EquilibriumCurve),
    Early(EarlyContractOutcome),
}

pub fn poa_report(s: &Scenario, game: Game) -> Result<WelfareReport> {
    Ok(poa_report_with(s, game, &PoaOptions::default())?.0)
}

/// Runs the selected solver and evaluates both welfares and every applicable bound.
pub fn poa_report_with(s: &Scenario, game: Game, opts: &PoaOptions) -> Result<(WelfareReport, Solved)> {
    let welfare_opt = optimal_welfare(s)?;
    let (welfare_eq, diagnostics, solved) = match game {
        Game::Grading => {
            let eq = solve_grading_equilibrium_with(s, opts.sweep)?;
            let (w, d) = grading_welfare(&eq, s)?;
            (w, d, Solved::Grading(eq))
        }
        Game::EarlyUniform | Game::EarlyCascade => {
            let o = if game == Game::EarlyUniform {
                solve_uniform_interval_with(s, opts.early)?
            } else {
                let p = opts.policy.clone().unwrap_or_else(|| GradingPolicy::full_revelation(s.school_types.len()));
                solve_cascade_with(s, &p, opts.early)?
            };
            let d = vec![("stage1".to_string(), o.welfare_stage1), ("stage2".to_string(), o.welfare_stage2)];
            (o.welfare(), d, Solved::Early(o))
        }
    };
    if !(welfare_eq >= MIN_WELFARE) {
        return Err(Error::DegenerateWelfare(welfare_eq));
    }
    let poa = welfare_opt / welfare_eq;
    let bounds = applicable_bounds(s, game)?
        .into_iter()
        .map(|(name, value)| BoundCheck { satisfied: poa <= value + 1e-6, name, value })
        .collect();
    Ok((WelfareReport { game, welfare_opt, welfare_eq, poa, bounds, diagnostics }, solved))
}

fn is_identity(c: &MonotoneCurve) -> bool {
    (0..=20).all(|i| {
        let x = i as f64 / 20.0;
        c.eval(x).map(|v| (v - x).abs() < 1e-12).unwrap_or(false)
    })
}

fn applicable_bounds(s: &Scenario, game: Game) -> Result<Vec<(String, f64)>> {
    let agg = aggregate_abilities(s)?;
    let identity = is_identity(&s.welfare.f) && is_identity(&s.welfare.g);
    let mut b = Vec::new();
    if s.welfare.g_concave {
        b.push(("2".to_string(), 2.0));
        b.push(("1/avg(G)".to_string(), 1.0 / agg.distribution.mean()));
    }
    if identity {
        b.push(("1/avg(mu)".to_string(), 1.0 / s.jobs.mean()));
    }
    match game {
        Game::Grading if identity && agg.is_uniform => b.push(("1.36".to_string(), LINEAR_GRADING_BOUND)),
        Game::EarlyUniform if identity => b.push(("4/3".to_string(), 4.0 / 3.0)),
        Game::EarlyCascade
            if identity
                && s.school_types.len() == 1
                && s.school_types[0].abilities.sup_deviation_from_uniform() <= crate::market::UNIFORM_TOL =>
        {
            b.push(("4/3".to_string(), 4.0 / 3.0))
        }
        _ => {}
    }
    Ok(b)
}

/// Equilibrium welfare of a grading curve with its per-segment decomposition.
pub fn grading_welfare(eq: &EquilibriumCurve, s: &Scenario) -> Result<(f64, Vec<(String, f64)>)> {
    let mut parts = Vec::new();
    let mut total = 0.0;
    for (i, seg) in eq.segments.iter().enumerate() {
        let (q_lo, q_hi, label) = match *seg {
            EqSegment::Informative { a_lo, a_hi } => {
                (eq.curve.eval_right(a_lo)?, eq.curve.eval(a_hi)?, "informative")
            }
            EqSegment::Pooled { q0, q1, .. } => (q0, q1, "pooled"),
            EqSegment::Unclassified { a_lo, a_hi } => {
                (eq.curve.eval_right(a_lo)?, eq.curve.eval(a_hi)?, "unclassified")
            }
        };
        let lo = if i == 0 { 0.0 } else { q_lo };
        let hi = if i + 1 == eq.segments.len() { 1.0 } else { q_hi };
        let v = curve_welfare(&eq.curve, &s.jobs, &s.welfare, lo, hi)?;
        parts.push((format!("{label}[{i}]"), v));
        total += v;
    }
    Ok((total, parts))
}

/// Floor `avg(G)·g(1)·∫ f dμ` from the factor-two argument.
pub fn random_assignment_floor(s: &Scenario) -> Result<f64> {
    let agg = aggregate_abilities(s)?;
    let f = &s.welfare.f;
    let int_f = s.jobs.expect(|q| f.eval(q).expect("unit domain"), 0.0, 1.0, &f.breakpoints(), 1e-13);
    Ok(agg.distribution.mean() * s.welfare.g.eval(1.0)? * int_f)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LemmaCheck {
    pub holds: bool,
    pub worst_q: f64,
    pub margin: f64,
}

/// `∫₀^{q′} q dμ(q) ≥ μ(q′)·q′/2` on a grid plus piece boundaries.
pub fn check_lemma_constraint(mu: &PiecewisePowerDist) -> LemmaCheck {
    let mut pts: Vec<f64> = (1..1000).map(|i| i as f64 / 1000.0).collect();
    pts.extend(mu.breakpoints().into_iter().filter(|&b| b > 0.0 && b < 1.0));
    let total = mu.total_mass();
    let mut worst = (f64::NAN, f64::INFINITY);
    for q in pts {
        let margin = (mu.partial_moment(0.0, q, 1.0) - mu.cdf(q) * q / 2.0) / total;
        if margin < worst.1 {
            worst = (q, margin);
        }
    }
    LemmaCheck { holds: worst.1 >= -1e-8, worst_q: worst.0, margin: worst.1 }
}

/// `h(a) = (2/a)·[(1 − s)³/3 + (1 − (1 − s)²)/2]` with `s = √(2a − 1)`.
pub fn lemma136_objective(a: f64) -> f64 {
    let s = (2.0 * a - 1.0).max(0.0).sqrt();
    let t = 1.0 - s;
    2.0 / a * (t.powi(3) / 3.0 + (1.0 - t * t) / 2.0)
}

/// Maximizer and maximum of the linear-equilibrium bound expression on `[½, 1]`.
pub fn maximize_lemma136() -> (f64, f64) {
    golden_section_max(lemma136_objective, 0.5, 1.0, 1e-10)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerFamilyRow {
    pub x: f64,
    pub slope: f64,
    pub slope_closed_form: f64,
    pub a_hat_high: f64,
    pub poa_numeric: f64,
    pub poa_closed_form: f64,
}

pub fn power_family_closed_form(x: f64) -> f64 {
    2.0 * x * (x + 2.0) / ((x + 1.0) * (2.0 * x + 1.0))
}

pub fn power_scenario(x: f64) -> Result<Scenario> {
    Scenario::new(PiecewisePowerDist::power(x)?, vec![(1.0, PiecewisePowerDist::uniform())])
}

fn power_family_row(x: f64, sweep: SweepOptions) -> Result<PowerFamilyRow> {
    let s = power_scenario(x)?;
    let opts = PoaOptions { sweep, ..Default::default() };
    let (rep, solved) = poa_report_with(&s, Game::Grading, &opts)?;
    let Solved::Grading(eq) = solved else { unreachable!("grading game returns a curve") };
    Ok(PowerFamilyRow {
        x,
        slope: eq.curve.derivative_right(0.0)?,
        slope_closed_form: 2.0 * x / (x + 1.0),
        a_hat_high: eq.a_hat_high,
        poa_numeric: rep.poa,
        poa_closed_form: power_family_closed_form(x),
    })
}

pub fn sweep_power_family(xs: &[f64]) -> Result<Vec<PowerFamilyRow>> {
    xs.iter().map(|&x| power_family_row(x, SweepOptions::default())).collect()
}

/// Argmax of the numeric pipeline's PoA over `x ∈ [lo, hi]`: coarse grid then golden section.
pub fn power_family_argmax(lo: f64, hi: f64) -> Result<(f64, f64)> {
    let sweep = SweepOptions { grid: 1024, ..SweepOptions::default() };
    let eval = |x: f64| power_family_row(x, sweep).map(|r| r.poa_numeric).unwrap_or(f64::NEG_INFINITY);
    let n = 20;
    let step = (hi - lo) / n as f64;
    let (mut best_i, mut best_v) = (0, f64::NEG_INFINITY);
    for i in 0..=n {
        let v = eval(lo + step * i as f64);
        if v > best_v {
            best_i = i;
            best_v = v;
        }
    }
    let a = (lo + step * (best_i as f64 - 1.0)).max(lo);
    let b = (lo + step * (best_i as f64 + 1.0)).min(hi);
    Ok(golden_section_max(eval, a, b, 1e-6))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub n: usize,
    pub trials: usize,
    pub seed: u64,
    pub assortative: f64,
    pub reversed: f64,
    pub best_permutation: f64,
    pub continuum: f64,
    pub gap: f64,
    pub assortative_dominates: bool,
}

/// Brute-force check of assortative optimality on `n` midpoint quantiles.
pub fn discrete_oracle(s: &Scenario, n: usize, trials: usize, seed: u64) -> Result<OracleReport> {
    if n < 2 {
        return Err(Error::InvalidScenario("oracle needs at least two agents".into()));
    }
    let agg = aggregate_abilities(s)?.distribution;
    let w = &s.welfare;
    let fq: Vec<f64> = (0..n)
        .map(|i| w.f.eval(s.jobs.quantile((i as f64 + 0.5) / n as f64).clamp(0.0, 1.0)).expect("unit domain"))
        .collect();
    let ga: Vec<f64> = (0..n)
        .map(|i| w.g.eval(agg.quantile((i as f64 + 0.5) / n as f64).clamp(0.0, 1.0)).expect("unit domain"))
        .collect();
    let score = |perm: &[usize]| perm.iter().enumerate().map(|(i, &j)| fq[i] * ga[j]).sum::<f64>() / n as f64;
    let ident: Vec<usize> = (0..n).collect();
    let assortative = score(&ident);
    let rev: Vec<usize> = (0..n).rev().collect();
    let reversed = score(&rev);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perm = ident.clone();
    let mut best_permutation = f64::NEG_INFINITY;
    for _ in 0..trials {
        perm.shuffle(&mut rng);
        best_permutation = best_permutation.max(score(&perm));
    }
    let continuum = optimal_welfare(s)?;
    Ok(OracleReport {
        n,
        trials,
        seed,
        assortative,
        reversed,
        best_permutation,
        continuum,
        gap: (assortative - continuum).abs(),
        assortative_dominates: assortative >= best_permutation - 1e-15 && assortative >= reversed - 1e-15,
    })
}

/// Job law with piecewise-constant density on `pieces` random cells.
pub fn random_piecewise_constant(rng: &mut impl Rng, pieces: usize) -> PiecewisePowerDist {
    let mut cuts: Vec<f64> = (0..pieces - 1).map(|_| rng.gen_range(0.02..0.98)).collect();
    cuts.push(0.0);
    cuts.push(1.0);
    cuts.sort_by(|a, b| a.total_cmp(b));
    cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-3);
    let cells: Vec<DistPiece> = cuts
        .windows(2)
        .map(|w| DistPiece::uniform(w[0], w[1], (w[1] - w[0]) * rng.gen_range(0.05..3.0)))
        .collect();
    PiecewisePowerDist::new(cells).expect("valid random cells").normalized()
}

/// Concave nondecreasing piecewise-linear curve on `[0, 1]` with `g(0) ≥ 0`.
pub fn random_concave_curve(rng: &mut impl Rng, knots: usize) -> MonotoneCurve {
    let mut slopes: Vec<f64> = (0..knots).map(|_| rng.gen_range(0.0..3.0)).collect();
    slopes.sort_by(|a, b| b.total_cmp(a));
    if slopes[0] <= 0.0 {
        slopes[0] = 1.0;
    }
    let mut y = rng.gen_range(0.0..0.3);
    let mut pts = vec![(0.0, y)];
    for (i, s) in slopes.iter().enumerate() {
        let x1 = (i + 1) as f64 / knots as f64;
        y += s / knots as f64;
        pts.push((x1, y));
    }
    MonotoneCurve::linear_through(&pts).expect("increasing knots")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomSuiteReport {
    pub seed: u64,
    pub cases: usize,
    pub max_grading_poa: f64,
    pub worst_grading_vs_inverse_avg_mu: f64,
    pub max_early_uniform_poa: f64,
    pub concave_cases: usize,
    pub worst_floor_gap: f64,
    pub worst_inverse_avg_g_gap: f64,
    pub passed: bool,
}

/// Randomized bound checks over piecewise-constant job laws and concave `g`.
pub fn random_suite(seed: u64, cases: usize, concave_cases: usize) -> Result<RandomSuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut max_g, mut worst_mu, mut max_e) = (0.0f64, f64::NEG_INFINITY, 0.0f64);
    for _ in 0..cases {
        let pieces = rng.gen_range(4..=12);
        let jobs = random_piecewise_constant(&mut rng, pieces);
        let s = Scenario::new(jobs.clone(), vec![(1.0, PiecewisePowerDist::uniform())])?;
        let g = poa_report(&s, Game::Grading)?;
        max_g = max_g.max(g.poa);
        worst_mu = worst_mu.max(g.poa - 1.0 / jobs.mean());
        let e = poa_report(&s, Game::EarlyUniform)?;
        max_e = max_e.max(e.poa);
    }
    let (mut worst_floor, mut worst_avg_g) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for _ in 0..concave_cases {
        let pieces = rng.gen_range(4..=12);
        let jobs = random_piecewise_constant(&mut rng, pieces);
        let knots = rng.gen_range(2..=6);
        let g = random_concave_curve(&mut rng, knots);
        let f = MonotoneCurve::identity();
        let s = Scenario::new(jobs, vec![(1.0, PiecewisePowerDist::uniform())])?
            .with_welfare(WelfarePair::new(f, g)?);
        for game in [Game::Grading, Game::EarlyUniform] {
            let rep = poa_report(&s, game)?;
            worst_floor = worst_floor.max(random_assignment_floor(&s)? - rep.welfare_eq);
            let avg_g = aggregate_abilities(&s)?.distribution.mean();
            worst_avg_g = worst_avg_g.max(rep.poa - 1.0 / avg_g);
        }
    }
    let passed = max_g <= LINEAR_GRADING_BOUND + 1e-6
        && worst_mu <= 1e-6
        && max_e <= 4.0 / 3.0 + 1e-6
        && worst_floor <= 1e-8
        && worst_avg_g <= 1e-6;
    Ok(RandomSuiteReport {
        seed,
        cases,
        max_grading_poa: max_g,
        worst_grading_vs_inverse_avg_mu: worst_mu,
        max_early_uniform_poa: max_e,
        concave_cases,
        worst_floor_gap: worst_floor,
        worst_inverse_avg_g_gap: worst_avg_g,
        passed,
    })
}
