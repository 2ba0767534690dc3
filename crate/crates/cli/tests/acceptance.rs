use std::process::ExitCode;

use gradeq_cli::reproduce::{fixture, grading_example, FIXTURES};
use gradeq_core::early_eq::{
    interval_outcome, solve_cascade_with, solve_uniform_interval_with, verify_early_equilibrium, EarlyOptions,
};
use gradeq_core::grading_eq::{solve_grading_equilibrium, starts_convex, verify_grading_equilibrium, EqSegment};
use gradeq_core::market::{aggregate_abilities, truthful_mapping, GradingPolicy, Scenario};
use gradeq_core::piecewise::PiecewisePowerDist;
use gradeq_core::welfare_poa::{
    check_lemma_constraint, discrete_oracle, lemma136_objective, maximize_lemma136, optimal_welfare, poa_report,
    power_family_argmax, power_scenario, random_piecewise_constant, random_suite, sweep_power_family, Game,
};
use rand::SeedableRng;

const SUITE_SEED: u64 = 20_240_601;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn power_closed(x: f64) -> (f64, f64) {
    (2.0 * x / (x + 1.0), 2.0 * x * (x + 2.0) / ((x + 1.0) * (2.0 * x + 1.0)))
}

fn criterion_1() -> Outcome {
    let xs = [1.0, 1.5, 2.0, 2.732, 4.0];
    let rows = sweep_power_family(&xs).unwrap();
    let mut worst_slope = 0.0f64;
    let mut worst_poa = 0.0f64;
    for r in &rows {
        let (slope, poa) = power_closed(r.x);
        worst_slope = worst_slope.max((r.slope - slope).abs());
        worst_poa = worst_poa.max((r.poa_numeric - poa).abs());
    }
    // closed-form maximizer solves x² − 2x − 2 = 0
    let x_star = 1.0 + 3f64.sqrt();
    let (x, v) = power_family_argmax(1.0, 6.0).unwrap();
    let passed = worst_slope < 1e-6
        && worst_poa < 1e-6
        && (x - x_star).abs() < 1e-2
        && (v - power_closed(x_star).1).abs() < 1e-6
        && (v - 1.0718).abs() < 1e-4;
    outcome(passed, format!("slope err {worst_slope:.2e}, poa err {worst_poa:.2e}, max {v:.6} at x = {x:.4}"))
}

fn criterion_2() -> Outcome {
    let s = power_scenario(2.0).unwrap();
    let eq = solve_grading_equilibrium(&s).unwrap();
    // ∫ q d(q²) = 2/3
    let a_hat = 0.5 / (2.0 / 3.0);
    let poa = poa_report(&s, Game::Grading).unwrap().poa;
    let passed = (eq.a_hat_high - a_hat).abs() < 1e-8 && (poa - 16.0 / 15.0).abs() < 1e-6;
    outcome(passed, format!("a_hat_high {:.10}, poa {poa:.10}", eq.a_hat_high))
}

fn criterion_3() -> Outcome {
    let (a, v) = maximize_lemma136();
    let (h_half, h_one) = (lemma136_objective(0.5), lemma136_objective(1.0));
    let passed = (v - 1.3557).abs() < 1e-4
        && v < 1.36
        && (a - 0.555).abs() < 5e-3
        && (h_half - 4.0 / 3.0).abs() < 1e-9
        && (h_one - 1.0).abs() < 1e-9;
    outcome(passed, format!("max {v:.6} at a = {a:.5}, h(1/2) = {h_half:.10}, h(1) = {h_one:.10}"))
}

fn criterion_4() -> Outcome {
    let l = fixture("example_1_11.scn").unwrap();
    let s = l.scenario.clone().with_epsilon(1e-4);
    let opts = EarlyOptions { delta: 1e-3, ..EarlyOptions::default() };
    let w_opt = optimal_welfare(&s).unwrap();
    let mut passed = true;
    let mut detail = Vec::new();
    let cascade = solve_cascade_with(&s, &GradingPolicy::full_revelation(1), opts).unwrap();
    let symmetric = solve_uniform_interval_with(&s, opts).unwrap();
    for (name, o) in [("cascade", cascade), ("symmetric", symmetric)] {
        let (lo, hi) = o.ability_interval.unwrap_or((f64::NAN, f64::NAN));
        let middle = o.contracted_between(0.5, 0.8);
        let top = o.contracted_between(0.9, 1.0);
        let bottom = o.contracted_between(0.0, 0.1);
        let poa = w_opt / o.welfare();
        passed &= (middle - 0.45).abs() < 5e-3
            && (top - 0.15).abs() < 5e-3
            && bottom < 5e-3
            && (lo - 0.2).abs() < 5e-3
            && (hi - 0.8).abs() < 5e-3
            && (poa - 1.114).abs() < 1e-2;
        detail.push(format!("{name}: [{lo:.4}, {hi:.4}], 0.64-jobs {middle:.4}, top {top:.4}, poa {poa:.4}"));
    }
    outcome(passed, detail.join("; "))
}

fn criterion_5() -> Outcome {
    let s = fixture("lowerbound.scn").unwrap().scenario;
    let o = solve_cascade_with(&s, &GradingPolicy::full_revelation(2), EarlyOptions::default()).unwrap();
    let (w_opt, w_eq) = (optimal_welfare(&s).unwrap(), o.welfare());
    let poa = w_opt / w_eq;
    let passed = s.epsilon == 1e-3
        && (w_eq - 9.0 / 32.0).abs() < 1e-2
        && (w_opt - 11.0 / 32.0).abs() < 5e-3
        && (poa - 11.0 / 9.0).abs() < 2e-2;
    outcome(passed, format!("W_eq {w_eq:.5}, W_opt {w_opt:.5}, poa {poa:.5}"))
}

fn criterion_6() -> Outcome {
    let r = grading_example().unwrap();
    let get = |q: &str| r.checks.iter().find(|c| c.quantity == q).unwrap().value;
    let (truthful, pooled) = (get("truthful_placement"), get("pooled_placement"));
    let recorded = r.notes.iter().any(|n| n.contains("0.75") && n.contains("unreconciled"));
    let passed = (truthful - 21.0 / 32.0).abs() < 1e-8 && (pooled - 11.0 / 16.0).abs() < 1e-8 && recorded;
    outcome(passed, format!("truthful {truthful:.10}, pooled {pooled:.10}, 0.75 recorded as unreconciled: {recorded}"))
}

fn criterion_7() -> Outcome {
    let s = fixture("early_example.scn").unwrap().scenario;
    let empty = interval_outcome(&s, 0.5).unwrap();
    let a = empty.stage2_map.inverse(5.0 / 8.0).unwrap();
    let q_of = |x: f64| empty.stage2_map.eval(x).unwrap();
    // a job above 5/8 but below 2/3 sees truthful ability below the school mean of 1/2,
    // and the 7/16 student prefers it to the 5/8 job
    let above = [5.0 / 8.0 + 1e-3, 0.65];
    let fires = above
        .iter()
        .all(|&q| empty.stage2_map.inverse(q).unwrap() < 0.5 && q > q_of(7.0 / 16.0));
    let below = 5.0 / 8.0 - 1e-3;
    let quiet_below = below <= q_of(7.0 / 16.0);
    let rep = verify_early_equilibrium(&empty, &s, &GradingPolicy::full_revelation(1)).unwrap();
    let flagged = rep.failures().iter().any(|f| f == "no_blocking_pair");
    let passed = (a - 7.0 / 16.0).abs() < 1e-9 && fires && quiet_below && flagged;
    outcome(passed, format!("Q^-1(5/8) = {a:.12}, blocking above 5/8: {fires}, verifier flags it: {flagged}"))
}

fn criterion_8() -> Outcome {
    let r = random_suite(SUITE_SEED, 100, 20).unwrap();
    outcome(
        r.passed,
        format!(
            "seed {}: max grading poa {:.5}, worst poa - 1/avg(mu) {:.2e}, max early poa {:.5}, worst floor gap {:.2e}, worst poa - 1/avg(G) {:.2e}",
            r.seed,
            r.max_grading_poa,
            r.worst_grading_vs_inverse_avg_mu,
            r.max_early_uniform_poa,
            r.worst_floor_gap,
            r.worst_inverse_avg_g_gap
        ),
    )
}

fn criterion_9() -> Outcome {
    let mut scenarios: Vec<Scenario> = [1.0, 1.5, 2.0, 2.732, 4.0].iter().map(|&x| power_scenario(x).unwrap()).collect();
    for (name, _) in FIXTURES {
        let s = fixture(name).unwrap().scenario;
        if aggregate_abilities(&s).unwrap().is_uniform {
            scenarios.push(s);
        }
    }
    let curated = scenarios.len();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(SUITE_SEED);
    for i in 0..30 {
        let jobs = random_piecewise_constant(&mut rng, 4 + i % 9);
        scenarios.push(Scenario::new(jobs, vec![(1.0, PiecewisePowerDist::uniform())]).unwrap());
    }
    let (mut failed, mut single_pools, mut constraint_ok, mut steep_ok) = (Vec::new(), 0, true, true);
    let (mut random_pools, mut random_violations, mut random_margin, mut convex_start) = (0, 0, 0.0f64, 0);
    let mut worst_gain = f64::NEG_INFINITY;
    for (i, s) in scenarios.iter().enumerate() {
        let eq = solve_grading_equilibrium(s).unwrap();
        let v = verify_grading_equilibrium(&eq, s).unwrap();
        worst_gain = v.deviations.iter().map(|d| d.max_gain).fold(worst_gain, f64::max);
        if !v.passed {
            failed.push(format!("#{i}: {:?}", v.failures()));
        }
        if eq.segments.len() == 1 && matches!(eq.segments[0], EqSegment::Pooled { .. }) {
            let q_t = truthful_mapping(s).unwrap();
            steep_ok &= q_t.derivative_right(0.0).unwrap() >= 1.0 - 1e-9;
            let check = check_lemma_constraint(&s.jobs);
            if i < curated {
                single_pools += 1;
                constraint_ok &= check.holds;
            } else {
                random_pools += 1;
                if !check.holds {
                    random_violations += 1;
                    random_margin = random_margin.min(check.margin);
                    convex_start += starts_convex(&q_t).unwrap() as usize;
                }
            }
        }
    }
    outcome(
        failed.is_empty() && constraint_ok && steep_ok,
        format!(
            "{} equilibria verified, worst deviation gain {worst_gain:.2e}, constraint on {single_pools} fixed single pools: {constraint_ok}, slope at 0 >= 1 on all single pools: {steep_ok}; random laws: {random_violations} of {random_pools} single pools below the constraint (worst margin {random_margin:.2e}, {convex_start} convex at 0) {}",
            scenarios.len(),
            failed.join(" ")
        ),
    )
}

fn criterion_10() -> Outcome {
    let n = 2000;
    let mut passed = true;
    let mut worst = 0.0f64;
    for (i, (name, _)) in FIXTURES.iter().enumerate() {
        let s = fixture(name).unwrap().scenario;
        let r = discrete_oracle(&s, n, 100, SUITE_SEED + i as u64).unwrap();
        worst = worst.max(r.gap * n as f64);
        passed &= r.gap <= 2.0 / n as f64 && r.assortative_dominates;
    }
    outcome(passed, format!("n = {n}, worst gap {worst:.4}/n over {} fixtures, 100 permutations each", FIXTURES.len()))
}

fn main() -> ExitCode {
    let start = std::time::Instant::now();
    let criteria: [fn() -> Outcome; 10] = [
        criterion_1,
        criterion_2,
        criterion_3,
        criterion_4,
        criterion_5,
        criterion_6,
        criterion_7,
        criterion_8,
        criterion_9,
        criterion_10,
    ];
    let mut all = true;
    for (i, c) in criteria.iter().enumerate() {
        let o = c();
        all &= o.passed;
        println!("criterion {:>2}: {} ({})", i + 1, if o.passed { "PASS" } else { "FAIL" }, o.detail);
    }
    println!("acceptance: {} in {:.1}s", if all { "PASS" } else { "FAIL" }, start.elapsed().as_secs_f64());
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
