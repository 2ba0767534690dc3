//! The `.scn` scenario file: a JSON document with `jobs`, `schools`, `welfare`,
//! `ranges`, `policy` and `params` sections.

use std::path::Path;

use gradeq_core::market::{normalize_scenario, GradingPolicy, PolicyCell, Ranges, RawPiece, RawScenario, Scenario, WelfarePair, DEFAULT_EPSILON};
use gradeq_core::piecewise::{CurveSegment, MonotoneCurve};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

const MASS_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockSpec {
    pub lo: f64,
    pub hi: f64,
    pub mass: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exponent: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomSpec {
    pub at: f64,
    pub mass: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PieceSpec {
    Block(BlockSpec),
    Atom(AtomSpec),
}

impl PieceSpec {
    fn mass(&self) -> f64 {
        match self {
            PieceSpec::Block(b) => b.mass,
            PieceSpec::Atom(a) => a.mass,
        }
    }

    fn raw(&self) -> RawPiece {
        match *self {
            PieceSpec::Block(BlockSpec { lo, hi, mass, exponent }) => RawPiece::Block { lo, hi, mass, exponent },
            PieceSpec::Atom(AtomSpec { at, mass }) => RawPiece::Atom { at, mass },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchoolSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mass: Option<f64>,
    pub pieces: Vec<PieceSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerSpec {
    pub power: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointsSpec {
    pub points: Vec<[f64; 2]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentsSpec {
    pub segments: Vec<CurveSegment>,
}

/// `"identity"`, `{"power": p}`, `{"points": [[x, y], ...]}` or raw `{"segments": [...]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CurveSpec {
    Named(String),
    Power(PowerSpec),
    Points(PointsSpec),
    Segments(SegmentsSpec),
}

impl Default for CurveSpec {
    fn default() -> Self {
        CurveSpec::Named("identity".into())
    }
}

impl CurveSpec {
    pub fn build(&self, path: &str) -> Result<MonotoneCurve> {
        let built = match self {
            CurveSpec::Named(n) if n == "identity" => Ok(MonotoneCurve::identity()),
            CurveSpec::Named(n) => return Err(CliError::validation(path, format!("unknown curve name {n:?}"))),
            CurveSpec::Power(p) => MonotoneCurve::power_map(p.power),
            CurveSpec::Points(p) => {
                MonotoneCurve::linear_through(&p.points.iter().map(|xy| (xy[0], xy[1])).collect::<Vec<_>>())
            }
            CurveSpec::Segments(s) => MonotoneCurve::new(s.segments.clone()),
        };
        built.map_err(|e| CliError::validation(path, e.to_string()))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WelfareSpec {
    #[serde(default)]
    pub f: CurveSpec,
    #[serde(default)]
    pub g: CurveSpec,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RangesSpec {
    pub ability: [f64; 2],
    pub quality: [f64; 2],
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub jobs: Vec<PieceSpec>,
    pub schools: Vec<SchoolSpec>,
    #[serde(default)]
    pub welfare: WelfareSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ranges: Option<RangesSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy: Option<Vec<Vec<PolicyCell>>>,
    #[serde(default)]
    pub params: Params,
}

/// A validated scenario together with the run settings stored next to it.
#[derive(Clone, Debug)]
pub struct Loaded {
    pub file: ScenarioFile,
    pub scenario: Scenario,
    pub params: Params,
    pub policy: Option<GradingPolicy>,
}

fn check_mass(pieces: &[PieceSpec], expected: f64, path: &str) -> Result<f64> {
    for (i, p) in pieces.iter().enumerate() {
        if !(p.mass() >= 0.0 && p.mass().is_finite()) {
            return Err(CliError::validation(format!("{path}[{i}].mass"), "must be a nonnegative number"));
        }
    }
    let total: f64 = pieces.iter().map(PieceSpec::mass).sum();
    if (total - expected).abs() > MASS_TOL {
        return Err(CliError::validation(path, format!("masses sum to {total}, expected {expected}")));
    }
    Ok(total)
}

fn check_positive(v: Option<f64>, path: &str) -> Result<()> {
    match v {
        Some(x) if !(x > 0.0 && x.is_finite()) => Err(CliError::validation(path, format!("{x} must be positive"))),
        _ => Ok(()),
    }
}

impl ScenarioFile {
    fn validate(&self) -> Result<()> {
        check_mass(&self.jobs, 1.0, "jobs")?;
        if self.schools.is_empty() {
            return Err(CliError::validation("schools", "at least one school is required"));
        }
        let mut total = 0.0;
        for (i, s) in self.schools.iter().enumerate() {
            let own: f64 = s.pieces.iter().map(PieceSpec::mass).sum();
            let m = check_mass(&s.pieces, s.mass.unwrap_or(own), &format!("schools[{i}].pieces"))?;
            total += m;
        }
        if (total - 1.0).abs() > MASS_TOL {
            return Err(CliError::validation("schools", format!("school masses sum to {total}, expected 1")));
        }
        check_positive(self.params.epsilon, "params.epsilon")?;
        check_positive(self.params.delta, "params.delta")?;
        check_positive(self.params.tolerance, "params.tolerance")?;
        if self.params.grid == Some(0) {
            return Err(CliError::validation("params.grid", "must be positive"));
        }
        Ok(())
    }

    /// Validates and normalizes with `epsilon` overriding the file's own value.
    pub fn load_with(&self, epsilon: Option<f64>) -> Result<Loaded> {
        self.validate()?;
        check_positive(epsilon, "epsilon")?;
        let f = self.welfare.f.build("welfare.f")?;
        let g = self.welfare.g.build("welfare.g")?;
        let welfare = WelfarePair::new(f, g).map_err(|e| CliError::validation("welfare", e.to_string()))?;
        let ranges = self
            .ranges
            .map(|r| Ranges { ability: (r.ability[0], r.ability[1]), quality: (r.quality[0], r.quality[1]) })
            .unwrap_or_default();
        let raw = RawScenario {
            jobs: self.jobs.iter().map(PieceSpec::raw).collect(),
            schools: self.schools.iter().map(|s| s.pieces.iter().map(PieceSpec::raw).collect()).collect(),
            welfare,
            ranges,
            epsilon: epsilon.or(self.params.epsilon).unwrap_or(DEFAULT_EPSILON),
        };
        let scenario = normalize_scenario(&raw).map_err(|e| CliError::validation("scenario", e.to_string()))?;
        let policy = match &self.policy {
            None => None,
            Some(cells) => {
                let p = GradingPolicy { schools: cells.clone() };
                p.validate(scenario.school_types.len()).map_err(|e| CliError::validation("policy", e.to_string()))?;
                Some(p)
            }
        };
        Ok(Loaded { file: self.clone(), scenario, params: self.params, policy })
    }
}

pub fn parse_scenario(text: &str) -> Result<ScenarioFile> {
    serde_json::from_str(text).map_err(|e| {
        CliError::validation(format!("line {}, column {}", e.line(), e.column()), e.to_string())
    })
}

pub fn load_scenario(path: &Path) -> Result<Loaded> {
    load_scenario_with(path, None)
}

pub fn load_scenario_with(path: &Path, epsilon: Option<f64>) -> Result<Loaded> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| CliError::Io { path: path.display().to_string(), source })?;
    parse_scenario(&text)
        .and_then(|f| f.load_with(epsilon))
        .map_err(|e| match e {
            CliError::Validation { path: field, message } => {
                CliError::validation(format!("{}: {field}", path.display()), message)
            }
            other => other,
        })
}

/// File form of a normalized scenario; reloading it reproduces the same scenario.
pub fn export_scenario(s: &Scenario) -> Result<ScenarioFile> {
    let pieces = |d: &gradeq_core::piecewise::PiecewisePowerDist, scale: f64, path: &str| {
        d.pieces()
            .iter()
            .map(|p| {
                if p.arc.t_lo != 0.0 || p.arc.t_hi != 1.0 {
                    return Err(CliError::validation(path, "restricted power arcs have no file form"));
                }
                let exponent = (p.arc.exponent != 1.0).then_some(p.arc.exponent);
                Ok(PieceSpec::Block(BlockSpec { lo: p.lo, hi: p.hi, mass: p.mass * scale, exponent }))
            })
            .collect::<Result<Vec<_>>>()
    };
    let schools = s
        .school_types
        .iter()
        .enumerate()
        .map(|(i, t)| {
            Ok(SchoolSpec {
                mass: Some(t.mass_fraction),
                pieces: pieces(&t.abilities, t.mass_fraction, &format!("schools[{i}]"))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let seg = |c: &MonotoneCurve| CurveSpec::Segments(SegmentsSpec { segments: c.segments().to_vec() });
    Ok(ScenarioFile {
        jobs: pieces(&s.jobs, 1.0, "jobs")?,
        schools,
        welfare: WelfareSpec { f: seg(&s.welfare.f), g: seg(&s.welfare.g) },
        ranges: None,
        policy: None,
        params: Params { epsilon: Some(s.epsilon), ..Params::default() },
    })
}
