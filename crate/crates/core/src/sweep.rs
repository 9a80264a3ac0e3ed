//! Sweeps over the modulation index `m` and continuity diagnostics.
//!
//! Each row solves the problem with targets `m · pattern`. Warm sweeps run in
//! order and start every solve from the previous row's control; cold sweeps
//! start every row from the zero-target control and run in parallel.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::problem::{Problem, ProblemSpec};
use crate::signal::Coefficients;
use crate::solver::{solve, DiscreteControl, SolveReport, SolverOptions};
use crate::{Error, Result};

#[derive(Clone, Debug)]
pub struct SweepSpec {
    base: Problem,
    pattern: Coefficients,
    m_values: Vec<f64>,
    warm_start: bool,
    options: SolverOptions,
    workers: Option<usize>,
}

impl SweepSpec {
    pub fn new(
        base: Problem,
        pattern: Coefficients,
        m_values: Vec<f64>,
        warm_start: bool,
        options: SolverOptions,
    ) -> Result<Self> {
        pattern.check_against(base.harmonics())?;
        if m_values.is_empty() {
            return Err(Error::config("sweep.m_values", "empty list"));
        }
        let increasing = m_values.windows(2).all(|w| w[0] < w[1]);
        let decreasing = m_values.windows(2).all(|w| w[0] > w[1]);
        if !(increasing || decreasing) || m_values.iter().any(|m| !m.is_finite()) {
            return Err(Error::config("sweep.m_values", "values must be finite and strictly monotone"));
        }
        Ok(Self {
            base,
            pattern,
            m_values,
            warm_start,
            options,
            workers: None,
        })
    }

    /// The sweep section of a run configuration.
    pub fn from_config(spec: &ProblemSpec) -> Result<Self> {
        let sweep = spec
            .sweep
            .as_ref()
            .ok_or_else(|| Error::config("sweep", "missing"))?;
        let pattern = spec
            .pattern
            .clone()
            .ok_or_else(|| Error::config("pattern", "a sweep needs a target pattern"))?;
        let base = Problem::new(spec.data(Coefficients::zeros(&spec.harmonics))?, spec.time_grid()?)?;
        let out = Self::new(base, pattern, sweep.m_values.clone(), sweep.warm_start, spec.solver.clone())?;
        Ok(out.with_workers(spec.workers))
    }

    /// Bounds the thread count of cold sweeps; all logical cores when `None`.
    pub fn with_workers(mut self, workers: Option<usize>) -> Self {
        self.workers = workers;
        self
    }

    pub fn with_m_values(&self, m_values: Vec<f64>) -> Result<Self> {
        Ok(Self::new(self.base.clone(), self.pattern.clone(), m_values, self.warm_start, self.options.clone())?
            .with_workers(self.workers))
    }

    pub fn with_warm_start(mut self, warm_start: bool) -> Self {
        self.warm_start = warm_start;
        self
    }

    pub fn m_values(&self) -> &[f64] {
        &self.m_values
    }

    pub fn warm_start(&self) -> bool {
        self.warm_start
    }

    fn targets(&self, m: f64) -> Coefficients {
        Coefficients {
            a: self.pattern.a.iter().map(|v| m * v).collect(),
            b: self.pattern.b.iter().map(|v| m * v).collect(),
        }
    }

    fn solve_row(&self, m: f64, init: Option<&[f64]>) -> SweepRow {
        let outcome = self
            .base
            .retarget(self.targets(m))
            .and_then(|p| solve(&p, init, &self.options));
        match outcome {
            Ok(report) => SweepRow {
                m,
                report: Some(report),
                error: None,
            },
            Err(e) => SweepRow {
                m,
                report: None,
                error: Some(e.to_string()),
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub m: f64,
    pub report: Option<SolveReport>,
    /// Why the row has no report.
    pub error: Option<String>,
}

impl SweepRow {
    pub fn converged(&self) -> bool {
        self.report.as_ref().is_some_and(|r| r.converged)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    /// `∫|u_{m_i} - u_{m_{i+1}}| dt`; absent when either row failed.
    pub gaps: Vec<Option<f64>>,
}

impl SweepResult {
    pub fn m_values(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.m).collect()
    }

    /// Terminal residual per row.
    pub fn residuals(&self) -> Vec<Option<f64>> {
        self.rows
            .iter()
            .map(|r| r.report.as_ref().map(|rep| rep.terminal_residual))
            .collect()
    }

    pub fn all_converged(&self) -> bool {
        self.rows.iter().all(SweepRow::converged)
    }

    /// Rows whose extraction was flagged unreliable.
    pub fn unreliable(&self) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.report.as_ref().is_some_and(|rep| !rep.extraction_reliable))
            .map(|r| r.m)
            .collect()
    }
}

fn consecutive_gaps(rows: &[SweepRow]) -> Vec<Option<f64>> {
    rows.windows(2)
        .map(|w| match (&w[0].report, &w[1].report) {
            (Some(a), Some(b)) => a.control.l1_distance(&b.control).ok(),
            _ => None,
        })
        .collect()
}

/// Solves every row; failures are recorded per row and the sweep goes on.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepResult> {
    let rows: Vec<SweepRow> = if spec.warm_start {
        let mut rows: Vec<SweepRow> = Vec::with_capacity(spec.m_values.len());
        for &m in &spec.m_values {
            let init = rows
                .last()
                .and_then(|r| r.report.as_ref())
                .map(|rep| rep.control.values().to_vec());
            rows.push(spec.solve_row(m, init.as_deref()));
        }
        rows
    } else {
        let run = || spec.m_values.par_iter().map(|&m| spec.solve_row(m, None)).collect();
        match spec.workers {
            Some(n) => rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::config("workers", e.to_string()))?
                .install(run),
            None => run(),
        }
    };
    Ok(SweepResult {
        gaps: consecutive_gaps(&rows),
        rows,
    })
}

/// `m,t,u` rows, one per (m, node); rows without a report are skipped.
pub fn policy_csv(result: &SweepResult) -> String {
    let mut out = String::from("m,t,u\n");
    for row in &result.rows {
        if let Some(report) = &row.report {
            for (t, u) in report.control.grid().nodes().iter().zip(report.control.values()) {
                out.push_str(&format!("{},{t},{u}\n", row.m));
            }
        }
    }
    out
}

/// The midpoints of `m_values` interleaved with the values themselves.
pub fn refine_m_values(m_values: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * m_values.len());
    for w in m_values.windows(2) {
        out.push(w[0]);
        out.push(0.5 * (w[0] + w[1]));
    }
    out.extend(m_values.last());
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapRow {
    pub m_from: f64,
    pub m_to: f64,
    pub gap: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResolutionSummary {
    /// Largest `|m_{i+1} - m_i|`.
    pub step: f64,
    pub rows: usize,
    pub max_gap: f64,
    pub mean_gap: f64,
    pub gaps: Vec<GapRow>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContinuityReport {
    pub resolutions: Vec<ResolutionSummary>,
    /// `max_gap` of the second resolution over that of the first.
    pub max_gap_ratio: Option<f64>,
}

fn summarize(result: &SweepResult) -> Result<ResolutionSummary> {
    if result.rows.len() < 2 {
        return Err(Error::config("sweep.m_values", "continuity needs at least two rows"));
    }
    let gaps: Vec<GapRow> = result
        .rows
        .windows(2)
        .zip(&result.gaps)
        .map(|(w, g)| GapRow {
            m_from: w[0].m,
            m_to: w[1].m,
            gap: *g,
        })
        .collect();
    let known: Vec<f64> = gaps.iter().filter_map(|g| g.gap).collect();
    let max_gap = known.iter().copied().fold(0.0, f64::max);
    let mean_gap = if known.is_empty() {
        0.0
    } else {
        known.iter().sum::<f64>() / known.len() as f64
    };
    let step = gaps.iter().map(|g| (g.m_to - g.m_from).abs()).fold(0.0, f64::max);
    Ok(ResolutionSummary {
        step,
        rows: result.rows.len(),
        max_gap,
        mean_gap,
        gaps,
    })
}

/// Gap statistics for one sweep, or for two sweeps side by side (typically
/// at `Δm` and `Δm / 2`). Observational only.
pub fn continuity_report(results: &[&SweepResult]) -> Result<ContinuityReport> {
    if results.is_empty() || results.len() > 2 {
        return Err(Error::config("sweep", "continuity compares one or two sweeps"));
    }
    let resolutions = results.iter().map(|r| summarize(r)).collect::<Result<Vec<_>>>()?;
    let max_gap_ratio = match resolutions.as_slice() {
        [a, b] if a.max_gap > 0.0 => Some(b.max_gap / a.max_gap),
        [a, b] if b.max_gap == 0.0 && a.max_gap == 0.0 => Some(1.0),
        _ => None,
    };
    Ok(ContinuityReport {
        resolutions,
        max_gap_ratio,
    })
}

/// Controls of the converged rows.
pub fn controls(result: &SweepResult) -> Vec<(f64, &DiscreteControl)> {
    result
        .rows
        .iter()
        .filter_map(|r| r.report.as_ref().map(|rep| (r.m, &rep.control)))
        .collect()
}
