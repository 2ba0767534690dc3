use std::path::{Path, PathBuf};

use gradeq_core::early_eq::{
    cascade_tolerance, solve_cascade_with, solve_uniform_interval_with, verify_early_equilibrium_tol, EarlyContractOutcome,
    EarlyOptions,
};
use gradeq_core::grading_eq::{
    solve_grading_equilibrium_with, verify_grading_equilibrium_seeded, EqSegment, EquilibriumCurve, SweepOptions,
    DEFAULT_SEED,
};
use gradeq_core::market::{aggregate_abilities, truthful_mapping, GradingPolicy, Scenario};
use gradeq_core::welfare_poa::{
    check_lemma_constraint, grading_welfare, optimal_welfare, poa_report_with, power_family_argmax, sweep_power_family,
    Game, PoaOptions, Solved,
};
use serde_json::{json, Value};

use crate::error::{CliError, Result};
use crate::report::{emit_report, CurveSamples, Format};
use crate::reproduce::reproduce_all;
use crate::scenario::{load_scenario_with, parse_scenario, CurveSpec, Loaded};

const SAMPLE_POINTS: usize = 200;
const DEFAULT_POWER_XS: [f64; 5] = [1.0, 1.5, 2.0, 2.732, 4.0];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Truthful,
    GradingEq,
    EarlyEq,
    Poa,
    Verify,
    Sweep,
    Reproduce,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Truthful => "truthful",
            Command::GradingEq => "grading-eq",
            Command::EarlyEq => "early-eq",
            Command::Poa => "poa",
            Command::Verify => "verify",
            Command::Sweep => "sweep",
            Command::Reproduce => "reproduce",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Overrides {
    pub epsilon: Option<f64>,
    pub delta: Option<f64>,
    pub grid: Option<usize>,
    pub tolerance: Option<f64>,
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub scenario_path: Option<PathBuf>,
    pub curve_path: Option<PathBuf>,
    pub game: Option<Game>,
    pub output_dir: PathBuf,
    pub formats: Vec<Format>,
    pub overrides: Overrides,
    pub xs: Option<Vec<f64>>,
}

impl RunConfig {
    pub fn new(command: Command, output_dir: impl Into<PathBuf>) -> Self {
        RunConfig {
            command,
            scenario_path: None,
            curve_path: None,
            game: None,
            output_dir: output_dir.into(),
            formats: vec![Format::Json],
            overrides: Overrides::default(),
            xs: None,
        }
    }

    fn validate(&self) -> Result<()> {
        let o = &self.overrides;
        for (name, v) in [("--epsilon", o.epsilon), ("--delta", o.delta), ("--tolerance", o.tolerance)] {
            if let Some(x) = v {
                if !(x > 0.0 && x.is_finite()) {
                    return Err(CliError::validation(name, format!("{x} must be positive")));
                }
            }
        }
        if o.grid == Some(0) {
            return Err(CliError::validation("--grid", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunOutcome {
    pub report: Value,
    pub files: Vec<PathBuf>,
    pub failures: Vec<String>,
}

impl RunOutcome {
    pub fn exit_code(&self) -> i32 {
        if self.failures.is_empty() {
            0
        } else {
            4
        }
    }
}

/// Resolved solver settings: command-line overrides win over scenario params.
#[derive(Clone, Copy, Debug)]
pub struct Settings {
    pub sweep: SweepOptions,
    pub early: EarlyOptions,
    pub seed: u64,
}

impl Settings {
    fn resolve(cfg: &RunConfig, loaded: Option<&Loaded>) -> Self {
        let p = loaded.map(|l| l.params).unwrap_or_default();
        let o = cfg.overrides;
        let mut sweep = SweepOptions::default();
        if let Some(g) = o.grid.or(p.grid) {
            sweep.grid = g;
        }
        if let Some(t) = o.tolerance.or(p.tolerance) {
            sweep.tolerance = t;
        }
        let mut early = EarlyOptions::default();
        if let Some(d) = o.delta.or(p.delta) {
            early.delta = d;
        }
        Settings { sweep, early, seed: o.seed.or(p.seed).unwrap_or(DEFAULT_SEED) }
    }
}

fn sample_grid() -> impl Iterator<Item = f64> {
    (0..=SAMPLE_POINTS).map(|i| i as f64 / SAMPLE_POINTS as f64)
}

/// `μ⁻¹(G(x))`, which is `Q_T` whenever the aggregate is uniform.
fn truthful_samples(s: &Scenario) -> Result<Vec<(f64, f64)>> {
    let agg = aggregate_abilities(s)?.distribution;
    Ok(sample_grid().map(|x| (x, s.jobs.quantile(agg.cdf(x)))).collect())
}

fn with_second(s: &Scenario, second: impl Fn(f64) -> Option<f64>) -> Result<CurveSamples> {
    Ok(CurveSamples { rows: truthful_samples(s)?.into_iter().map(|(x, t)| (x, t, second(x))).collect() })
}

fn grading_samples(s: &Scenario, eq: &EquilibriumCurve) -> Result<CurveSamples> {
    with_second(s, |x| Some(eq.eval_extended(x)))
}

fn early_samples(s: &Scenario, o: &EarlyContractOutcome) -> Result<CurveSamples> {
    let (lo, hi) = o.stage2_map.domain();
    with_second(s, |x| (x >= lo && x <= hi).then(|| o.stage2_map.eval(x).ok()).flatten())
}

fn require_scenario(cfg: &RunConfig) -> Result<Loaded> {
    let path = cfg
        .scenario_path
        .as_deref()
        .ok_or_else(|| CliError::validation("--scenario", format!("required by {}", cfg.command.name())))?;
    load_scenario_with(path, cfg.overrides.epsilon)
}

fn early_game(cfg: &RunConfig, s: &Scenario) -> Game {
    match cfg.game {
        Some(g @ (Game::EarlyUniform | Game::EarlyCascade)) => g,
        _ if s.school_types.len() == 1 => Game::EarlyUniform,
        _ => Game::EarlyCascade,
    }
}

fn policy_for(l: &Loaded) -> GradingPolicy {
    l.policy.clone().unwrap_or_else(|| GradingPolicy::full_revelation(l.scenario.school_types.len()))
}

fn scenario_label(cfg: &RunConfig) -> Value {
    cfg.scenario_path
        .as_deref()
        .and_then(Path::file_name)
        .map(|n| Value::String(n.to_string_lossy().into_owned()))
        .unwrap_or(Value::Null)
}

/// Integral constraint on the job law when the solver returned a single pooled segment.
fn single_pool_constraint(eq: &EquilibriumCurve, s: &Scenario) -> Value {
    let pooled = eq.segments.iter().filter(|g| matches!(g, EqSegment::Pooled { .. })).count();
    if eq.segments.len() == 1 && pooled == 1 {
        json!(check_lemma_constraint(&s.jobs))
    } else {
        Value::Null
    }
}

fn run_truthful(cfg: &RunConfig) -> Result<(Value, Option<CurveSamples>, Vec<String>)> {
    let l = require_scenario(cfg)?;
    let s = &l.scenario;
    let agg = aggregate_abilities(s)?;
    let q_t = truthful_mapping(s).ok();
    let report = json!({
        "aggregate_deviation": agg.deviation,
        "aggregate_uniform": agg.is_uniform,
        "truthful_curve": q_t.as_ref().map(|c| c.segments().to_vec()),
        "welfare_truthful": optimal_welfare(s)?,
    });
    let rows = truthful_samples(s)?.into_iter().map(|(x, t)| (x, t, Some(t))).collect();
    Ok((report, Some(CurveSamples { rows }), Vec::new()))
}

fn run_grading(cfg: &RunConfig) -> Result<(Value, Option<CurveSamples>, Vec<String>)> {
    let l = require_scenario(cfg)?;
    let s = &l.scenario;
    let st = Settings::resolve(cfg, Some(&l));
    let eq = solve_grading_equilibrium_with(s, st.sweep)?;
    let v = verify_grading_equilibrium_seeded(&eq, s, st.seed)?;
    let (w, parts) = grading_welfare(&eq, s)?;
    let report = json!({
        "a_hat_high": eq.a_hat_high,
        "a_hat_low": eq.a_hat_low,
        "lemma_constraint": single_pool_constraint(&eq, s),
        "notes": eq.notes,
        "seed": st.seed,
        "segments": eq.segments,
        "verification": v,
        "welfare_eq": w,
        "welfare_opt": optimal_welfare(s)?,
        "welfare_parts": parts,
    });
    Ok((report, Some(grading_samples(s, &eq)?), v.failures()))
}

fn solve_early(l: &Loaded, game: Game, opts: EarlyOptions) -> Result<EarlyContractOutcome> {
    Ok(match game {
        Game::EarlyUniform => solve_uniform_interval_with(&l.scenario, opts)?,
        _ => solve_cascade_with(&l.scenario, &policy_for(l), opts)?,
    })
}

fn run_early(cfg: &RunConfig) -> Result<(Value, Option<CurveSamples>, Vec<String>)> {
    let l = require_scenario(cfg)?;
    let s = &l.scenario;
    let st = Settings::resolve(cfg, Some(&l));
    let game = early_game(cfg, s);
    let o = solve_early(&l, game, st.early)?;
    let tol = if game == Game::EarlyCascade { cascade_tolerance(st.early.delta) } else { 1e-6 };
    let v = verify_early_equilibrium_tol(&o, s, &policy_for(&l), tol)?;
    let contracts: Vec<Value> = o
        .contracted_jobs
        .iter()
        .map(|b| json!({"mass": b.mass, "q_hi": b.q_hi, "q_lo": b.q_lo, "school": b.school, "school_average": b.school_average}))
        .collect();
    let report = json!({
        "ability_interval": o.ability_interval,
        "contracted_students": o.contracted_students,
        "contracts": contracts,
        "delta": st.early.delta,
        "tolerance": tol,
        "game": game,
        "rounds": o.rounds,
        "verification": v,
        "welfare_eq": o.welfare(),
        "welfare_opt": optimal_welfare(s)?,
        "welfare_stage1": o.welfare_stage1,
        "welfare_stage2": o.welfare_stage2,
    });
    Ok((report, Some(early_samples(s, &o)?), v.failures()))
}

fn run_poa(cfg: &RunConfig) -> Result<(Value, Option<CurveSamples>, Vec<String>)> {
    let l = require_scenario(cfg)?;
    let s = &l.scenario;
    let st = Settings::resolve(cfg, Some(&l));
    let game = cfg.game.unwrap_or(Game::Grading);
    let opts = PoaOptions { sweep: st.sweep, early: st.early, policy: Some(policy_for(&l)) };
    let (rep, solved) = poa_report_with(s, game, &opts)?;
    let failures: Vec<String> = rep.bounds.iter().filter(|b| !b.satisfied).map(|b| format!("bound {}", b.name)).collect();
    let (samples, constraint) = match &solved {
        Solved::Grading(eq) => (grading_samples(s, eq)?, single_pool_constraint(eq, s)),
        Solved::Early(o) => (early_samples(s, o)?, Value::Null),
    };
    let mut report = serde_json::to_value(&rep).expect("report serializes");
    report["lemma_constraint"] = constraint;
    Ok((report, Some(samples), failures))
}

fn run_verify(cfg: &RunConfig) -> Result<(Value, Option<CurveSamples>, Vec<String>)> {
    let l = require_scenario(cfg)?;
    let s = &l.scenario;
    let st = Settings::resolve(cfg, Some(&l));
    let path = cfg.curve_path.as_deref().ok_or_else(|| CliError::validation("--curve", "required by verify"))?;
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.display().to_string(), source })?;
    let spec: CurveSpec = serde_json::from_str(&text).map_err(|e| {
        CliError::validation(format!("{}: line {}, column {}", path.display(), e.line(), e.column()), e.to_string())
    })?;
    let curve = spec.build(&path.display().to_string())?;
    let q_t = truthful_mapping(s)?;
    let eq = EquilibriumCurve::classify(curve, &q_t);
    let v = verify_grading_equilibrium_seeded(&eq, s, st.seed)?;
    let report = json!({"curve": path.display().to_string(), "failures": v.failures(), "seed": st.seed, "verification": v});
    Ok((report, Some(grading_samples(s, &eq)?), v.failures()))
}

fn run_sweep(cfg: &RunConfig) -> Result<(Value, Option<CurveSamples>, Vec<String>)> {
    let xs = cfg.xs.clone().unwrap_or_else(|| DEFAULT_POWER_XS.to_vec());
    if let Some(x) = xs.iter().find(|&&x| !(x >= 1.0 && x.is_finite())) {
        return Err(CliError::validation("--xs", format!("{x} must be at least 1")));
    }
    let rows = sweep_power_family(&xs)?;
    let (x_max, poa_max) = power_family_argmax(1.0, 6.0)?;
    let failures = rows
        .iter()
        .filter(|r| (r.poa_numeric - r.poa_closed_form).abs() > 1e-6 || (r.slope - r.slope_closed_form).abs() > 1e-6)
        .map(|r| format!("power family x = {}", r.x))
        .collect();
    let report = json!({"argmax_x": x_max, "argmax_poa": poa_max, "rows": rows});
    Ok((report, None, failures))
}

/// Dispatches one command, writes its artifacts, and reports verification failures.
pub fn run_command(cfg: &RunConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    let (mut report, samples, failures) = match cfg.command {
        Command::Truthful => run_truthful(cfg)?,
        Command::GradingEq => run_grading(cfg)?,
        Command::EarlyEq => run_early(cfg)?,
        Command::Poa => run_poa(cfg)?,
        Command::Verify => run_verify(cfg)?,
        Command::Sweep => run_sweep(cfg)?,
        Command::Reproduce => {
            let r = reproduce_all(cfg.overrides.seed.unwrap_or(DEFAULT_SEED))?;
            let failures = r.failures();
            (serde_json::to_value(&r).expect("report serializes"), None, failures)
        }
    };
    report["command"] = json!(cfg.command.name());
    report["scenario"] = scenario_label(cfg);
    report["passed"] = json!(failures.is_empty());
    let files = emit_report(cfg.command.name(), &report, samples.as_ref(), &cfg.formats, &cfg.output_dir)?;
    Ok(RunOutcome { report, files, failures })
}

/// Parses a scenario document from memory; used by the bundled fixtures.
pub fn load_embedded(text: &str, epsilon: Option<f64>) -> Result<Loaded> {
    parse_scenario(text)?.load_with(epsilon)
}
