//! Problem data, the JSON run configuration and the shipped presets.
//!
//! A [`ProblemSpec`] is what a user writes: control set, harmonics, targets
//! (explicit or `m` times a pattern), penalty, grid, solver options and the
//! optional sweep and baseline sections. [`Problem`] is the compiled form the
//! solver works on, with the terminal map assembled once and shared.

use std::sync::Arc;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::dynamics::{DynamicsSpec, TerminalMap, TimeGrid};
use crate::penalty::{PenaltyConfig, PenaltyMode, PenaltyModel, Window};
use crate::signal::{Coefficients, ControlSet, HarmonicSpec};
use crate::solver::SolverOptions;
use crate::{Error, Result};

/// Everything that defines the continuous problem; embedded in reports so
/// they can be verified without the original config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemData {
    pub levels: ControlSet,
    pub harmonics: HarmonicSpec,
    pub targets: Coefficients,
    pub penalty: PenaltyConfig,
}

/// A problem bound to a time grid, ready for the solver.
#[derive(Clone, Debug)]
pub struct Problem {
    data: ProblemData,
    model: PenaltyModel,
    dynamics: DynamicsSpec,
    grid: TimeGrid,
    map: Arc<TerminalMap>,
    weights: Vec<f64>,
}

impl Problem {
    pub fn new(data: ProblemData, grid: TimeGrid) -> Result<Self> {
        let map = Arc::new(TerminalMap::new(&data.harmonics, &grid));
        Self::with_map(data, grid, map)
    }

    fn with_map(data: ProblemData, grid: TimeGrid, map: Arc<TerminalMap>) -> Result<Self> {
        let model = PenaltyModel::new(data.levels.clone(), &data.penalty)?;
        let dynamics = DynamicsSpec::new(data.harmonics.clone(), &data.targets)?;
        let weights = grid.trapezoid_weights();
        Ok(Self {
            data,
            model,
            dynamics,
            grid,
            map,
            weights,
        })
    }

    /// Same problem with other targets; the terminal map is shared.
    pub fn retarget(&self, targets: Coefficients) -> Result<Self> {
        let data = ProblemData {
            targets,
            ..self.data.clone()
        };
        Self::with_map(data, self.grid.clone(), Arc::clone(&self.map))
    }

    pub fn data(&self) -> &ProblemData {
        &self.data
    }

    pub fn model(&self) -> &PenaltyModel {
        &self.model
    }

    pub fn dynamics(&self) -> &DynamicsSpec {
        &self.dynamics
    }

    pub fn harmonics(&self) -> &HarmonicSpec {
        &self.data.harmonics
    }

    pub fn levels(&self) -> &ControlSet {
        &self.data.levels
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn map(&self) -> &TerminalMap {
        &self.map
    }

    /// Trapezoid weights `w_k` of the grid.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `x_0 = [a_T; b_T]`.
    pub fn initial_state(&self) -> &[f64] {
        self.dynamics.initial_state()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum GridSpec {
    /// `N_t` equally spaced nodes.
    Uniform(usize),
    /// Explicit nodes from 0 to π.
    Nodes(Vec<f64>),
    /// `{0, h, 2h, …, π}`.
    Step(f64),
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec::Uniform(630)
    }
}

impl GridSpec {
    pub fn build(&self) -> Result<TimeGrid> {
        match self {
            GridSpec::Uniform(n) => TimeGrid::uniform(*n),
            GridSpec::Nodes(nodes) => TimeGrid::new(nodes.clone()),
            GridSpec::Step(h) => TimeGrid::stepped(*h),
        }
    }
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub m_values: Vec<f64>,
    #[serde(default = "default_true")]
    pub warm_start: bool,
}

fn default_restarts() -> usize {
    20
}

fn default_budget() -> u128 {
    100_000
}

fn default_solved_tol() -> f64 {
    1e-8
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineConfig {
    /// Number of switching angles `M`.
    pub switches: usize,
    /// Explicit waveforms; every staircase waveform with `M` switches when
    /// absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub waveforms: Option<Vec<Vec<f64>>>,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    #[serde(default = "default_budget")]
    pub budget: u128,
    /// Scan targets `m · pattern`.
    #[serde(default)]
    pub m_values: Vec<f64>,
    /// Additional explicit scan targets.
    #[serde(default)]
    pub targets: Vec<Coefficients>,
    #[serde(default = "default_solved_tol")]
    pub solved_tol: f64,
}

/// The run configuration: one JSON document per run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub levels: ControlSet,
    pub harmonics: HarmonicSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub targets: Option<Coefficients>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pattern: Option<Coefficients>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub penalty: Option<PenaltyConfig>,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline: Option<BaselineConfig>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
}

const KEYS: &[&str] = &[
    "levels", "harmonics", "targets", "pattern", "m", "penalty", "grid", "solver", "sweep", "baseline",
    "seed", "workers",
];

fn field<T: DeserializeOwned>(map: &Map<String, Value>, key: &str) -> Result<Option<T>> {
    map.get(key)
        .filter(|v| !v.is_null())
        .map(|v| T::deserialize(v).map_err(|e| Error::config(key, e.to_string())))
        .transpose()
}

fn required<T: DeserializeOwned>(map: &Map<String, Value>, key: &str) -> Result<T> {
    field(map, key)?.ok_or_else(|| Error::config(key, "missing"))
}

impl ProblemSpec {
    /// Parses and validates a config; errors name the offending key.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text).map_err(|e| Error::config("<document>", e.to_string()))?;
        let Value::Object(map) = value else {
            return Err(Error::config("<document>", "expected a JSON object"));
        };
        if let Some(key) = map.keys().find(|k| !KEYS.contains(&k.as_str())) {
            return Err(Error::config(key.clone(), "unknown key"));
        }
        let spec = Self {
            levels: required(&map, "levels")?,
            harmonics: required(&map, "harmonics")?,
            targets: field(&map, "targets")?,
            pattern: field(&map, "pattern")?,
            m: field(&map, "m")?,
            penalty: field(&map, "penalty")?,
            grid: field(&map, "grid")?.unwrap_or_default(),
            solver: field(&map, "solver")?.unwrap_or_default(),
            sweep: field(&map, "sweep")?,
            baseline: field(&map, "baseline")?,
            seed: field(&map, "seed")?.unwrap_or_default(),
            workers: field(&map, "workers")?,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Checks everything that can be checked without running anything.
    pub fn validate(&self) -> Result<()> {
        for (key, coeffs) in [("targets", &self.targets), ("pattern", &self.pattern)] {
            if let Some(c) = coeffs {
                c.check_against(&self.harmonics)
                    .map_err(|e| Error::config(key, e.to_string()))?;
            }
        }
        if self.targets.is_some() && self.pattern.is_some() {
            return Err(Error::config("targets", "give either `targets` or `pattern`, not both"));
        }
        if let Some(m) = self.m {
            if !m.is_finite() {
                return Err(Error::config("m", "must be finite"));
            }
        }
        if let Some(penalty) = &self.penalty {
            PenaltyModel::new(self.levels.clone(), penalty).map_err(|e| Error::config("penalty", e.to_string()))?;
        }
        self.grid.build().map_err(|e| Error::config("grid", e.to_string()))?;
        self.solver.validate()?;
        if let Some(sweep) = &self.sweep {
            check_m_values(&sweep.m_values).map_err(|m| Error::config("sweep.m_values", m))?;
            if self.pattern.is_none() {
                return Err(Error::config("pattern", "a sweep needs a target pattern"));
            }
        }
        if let Some(baseline) = &self.baseline {
            if baseline.switches == 0 {
                return Err(Error::config("baseline.switches", "need at least one switch"));
            }
            if baseline.restarts == 0 {
                return Err(Error::config("baseline.restarts", "need at least one restart"));
            }
            for (i, t) in baseline.targets.iter().enumerate() {
                t.check_against(&self.harmonics)
                    .map_err(|e| Error::config(format!("baseline.targets[{i}]"), e.to_string()))?;
            }
            if !baseline.m_values.is_empty() && self.pattern.is_none() {
                return Err(Error::config("pattern", "baseline m_values need a target pattern"));
            }
        }
        if self.workers == Some(0) {
            return Err(Error::config("workers", "must be at least 1"));
        }
        Ok(())
    }

    pub fn time_grid(&self) -> Result<TimeGrid> {
        self.grid.build().map_err(|e| Error::config("grid", e.to_string()))
    }

    /// `m · pattern`.
    pub fn pattern_targets(&self, m: f64) -> Result<Coefficients> {
        let pattern = self
            .pattern
            .as_ref()
            .ok_or_else(|| Error::config("pattern", "missing"))?;
        Ok(Coefficients {
            a: pattern.a.iter().map(|v| m * v).collect(),
            b: pattern.b.iter().map(|v| m * v).collect(),
        })
    }

    /// Targets of a single solve: explicit `targets`, or `m · pattern`.
    pub fn solve_targets(&self) -> Result<Coefficients> {
        match (&self.targets, self.m) {
            (Some(t), _) => Ok(t.clone()),
            (None, Some(m)) => self.pattern_targets(m),
            (None, None) => Err(Error::config("targets", "give `targets`, or `pattern` with `m`")),
        }
    }

    pub fn penalty(&self) -> Result<&PenaltyConfig> {
        self.penalty.as_ref().ok_or_else(|| Error::config("penalty", "missing"))
    }

    pub fn data(&self, targets: Coefficients) -> Result<ProblemData> {
        Ok(ProblemData {
            levels: self.levels.clone(),
            harmonics: self.harmonics.clone(),
            targets,
            penalty: self.penalty()?.clone(),
        })
    }

    /// The compiled single-solve problem.
    pub fn problem(&self) -> Result<Problem> {
        Problem::new(self.data(self.solve_targets()?)?, self.time_grid()?)
    }
}

fn check_m_values(values: &[f64]) -> std::result::Result<(), String> {
    if values.is_empty() {
        return Err("empty list".into());
    }
    if values.iter().any(|m| !m.is_finite()) {
        return Err("values must be finite".into());
    }
    let increasing = values.windows(2).all(|w| w[0] < w[1]);
    let decreasing = values.windows(2).all(|w| w[0] > w[1]);
    if !(increasing || decreasing) {
        return Err("values must be strictly monotone".into());
    }
    Ok(())
}

/// `start, start + step, …` up to `stop`, computed as `start + i·step` so
/// the values do not drift.
pub fn m_range(start: f64, stop: f64, step: f64) -> Vec<f64> {
    let count = ((stop - start) / step + 1e-9).floor() as i64;
    (0..=count).map(|i| start + i as f64 * step).collect()
}

/// Names accepted by [`preset`].
pub const PRESETS: &[&str] = &[
    "fig6-bilevel",
    "fig6-bang-off-bang",
    "fig6-multilevel5",
    "fig8-counterexample",
    "fig2-baseline",
];

/// `{-0.8, -0.75, …, 0.8}`: `i / 20` for `i` in `-16..=16`.
pub fn default_m_values() -> Vec<f64> {
    (-16..=16).map(|i| i as f64 / 20.0).collect()
}

/// Built-in reproduction recipes.
pub fn preset(name: &str) -> Result<ProblemSpec> {
    let fig6_harmonics = HarmonicSpec::symmetric(&[1, 5, 7, 11, 13])?;
    let fig6_pattern = Coefficients {
        a: vec![1.0, 0.0, 0.0, 0.0, 0.0],
        b: vec![1.0, 0.0, 0.0, 0.0, 0.0],
    };
    let penalty = |mode| PenaltyConfig {
        mode,
        alpha: 1.0,
        beta: 0.0,
        epsilon: 1e-5,
        theta: 1e5,
        window: Window::OpenEnds,
    };
    let fig6 = |levels: Vec<f64>, mode| -> Result<ProblemSpec> {
        Ok(ProblemSpec {
            levels: ControlSet::new(levels)?,
            harmonics: fig6_harmonics.clone(),
            targets: None,
            pattern: Some(fig6_pattern.clone()),
            m: Some(0.5),
            penalty: Some(penalty(mode)),
            grid: GridSpec::default(),
            solver: SolverOptions::default(),
            sweep: Some(SweepConfig {
                m_values: default_m_values(),
                warm_start: true,
            }),
            baseline: None,
            seed: 0,
            workers: None,
        })
    };
    match name {
        "fig6-bilevel" => fig6(vec![-1.0, 1.0], PenaltyMode::Linear),
        "fig6-bang-off-bang" => fig6(vec![-1.0, 0.0, 1.0], PenaltyMode::SmoothPiecewiseAffine),
        "fig6-multilevel5" => fig6(vec![-1.0, -0.5, 0.0, 0.5, 1.0], PenaltyMode::SmoothPiecewiseAffine),
        "fig8-counterexample" => {
            let mut spec = fig6(
                vec![-1.0, -0.6, -0.2, 0.2, 0.6, 1.0],
                PenaltyMode::SmoothPiecewiseAffine,
            )?;
            spec.m = Some(0.05);
            Ok(spec)
        }
        "fig2-baseline" => Ok(ProblemSpec {
            levels: ControlSet::new(vec![-1.0, 0.0, 1.0])?,
            harmonics: HarmonicSpec::new(vec![1], vec![1, 5])?,
            targets: None,
            pattern: Some(Coefficients {
                a: vec![1.0],
                b: vec![0.0, 0.0],
            }),
            m: None,
            penalty: None,
            grid: GridSpec::default(),
            solver: SolverOptions::default(),
            sweep: None,
            baseline: Some(BaselineConfig {
                switches: 3,
                waveforms: None,
                restarts: default_restarts(),
                budget: default_budget(),
                m_values: (0..=12).map(|i| i as f64 / 10.0).collect(),
                targets: Vec::new(),
                solved_tol: default_solved_tol(),
            }),
            seed: 0,
            workers: None,
        }),
        other => Err(Error::config(
            "preset",
            format!("unknown preset `{other}`, expected one of {}", PRESETS.join(", ")),
        )),
    }
}
