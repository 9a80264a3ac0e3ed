//! Turning a sampled control into a staircase signal.

use crate::penalty::PenaltyModel;
use crate::signal::{ControlSet, HarmonicSpec, StaircaseSignal};
use crate::solver::pmp::crossings;
use crate::solver::{DiscreteControl, SolverOptions};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Extraction {
    /// Absent when no sample sits on a level.
    pub signal: Option<StaircaseSignal>,
    /// Fraction of all samples within `snap_tol` of a level.
    pub snap_fraction: f64,
    /// `snap_fraction` reached the reliability threshold.
    pub reliable: bool,
}

/// Data for placing switches on the zero crossings of the switching function
/// instead of at bracket midpoints.
pub struct Refinement<'a> {
    pub model: &'a PenaltyModel,
    pub harmonics: &'a HarmonicSpec,
    pub terminal_state: &'a [f64],
}

/// [`extract_with`] using default options apart from `snap_tol`.
pub fn extract_staircase(control: &DiscreteControl, set: &ControlSet, snap_tol: f64) -> Result<Extraction> {
    let options = SolverOptions {
        snap_tol,
        ..SolverOptions::default()
    };
    extract_with(control, set, &options, None)
}

/// Snaps samples to the nearest level within `options.snap_tol`, merges
/// equal neighbours (unsnapped samples in between are skipped) and puts a
/// switch between the last sample of one level and the first of the next.
///
/// The sample at `t = π` is left out of the waveform: it carries no weight in
/// the dynamics, and the signal is defined on `[0, π)`.
pub fn extract_with(
    control: &DiscreteControl,
    set: &ControlSet,
    options: &SolverOptions,
    refine: Option<&Refinement>,
) -> Result<Extraction> {
    if !(options.snap_tol > 0.0) {
        return Err(Error::Domain {
            what: "snap_tol",
            value: options.snap_tol,
            domain: "(0, ∞)",
        });
    }
    let values = control.values();
    let nodes = control.grid().nodes();
    let snapped: Vec<Option<usize>> = values
        .iter()
        .map(|&u| {
            let (k, dist) = set.nearest(u);
            (dist <= options.snap_tol).then_some(k)
        })
        .collect();
    let snap_fraction = snapped.iter().filter(|s| s.is_some()).count() as f64 / values.len() as f64;

    // (level index, first node, last node)
    let mut runs: Vec<(usize, usize, usize)> = Vec::new();
    for (k, s) in snapped[..snapped.len() - 1].iter().enumerate() {
        let Some(level) = *s else { continue };
        match runs.last_mut() {
            Some(run) if run.0 == level => run.2 = k,
            _ => runs.push((level, k, k)),
        }
    }
    let signal = if runs.is_empty() {
        None
    } else {
        let levels = set.levels();
        let waveform: Vec<f64> = runs.iter().map(|r| levels[r.0]).collect();
        let midpoints: Vec<f64> = runs
            .windows(2)
            .map(|w| 0.5 * (nodes[w[0].2] + nodes[w[1].1]))
            .collect();
        let refined = refine.map(|r| {
            runs.windows(2)
                .map(|w| {
                    let bracket = (nodes[w[0].2], nodes[w[1].1]);
                    let roots = crossings(r.model, r.harmonics, r.terminal_state, bracket, (w[0].0, w[1].0), options.bisection_tol);
                    // a skipped level leaves several ties; the signal jumps once
                    roots[roots.len() / 2]
                })
                .collect::<Vec<f64>>()
        });
        match refined.map(|angles| StaircaseSignal::new(set.clone(), waveform.clone(), angles)) {
            Some(Ok(signal)) => Some(signal),
            _ => Some(StaircaseSignal::new(set.clone(), waveform, midpoints)?),
        }
    };
    Ok(Extraction {
        signal,
        snap_fraction,
        reliable: snap_fraction >= options.unreliable_below,
    })
}
