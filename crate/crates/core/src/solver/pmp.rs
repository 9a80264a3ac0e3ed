//! The control predicted by the maximum principle.
//!
//! The adjoint is constant and equal to the terminal state, so the optimal
//! control minimizes `ε 𝓛(u) - μ(t) u` pointwise with the trigonometric
//! polynomial `μ(t) = (2/π) 𝒟(t)·x(π)`. Switches sit where `μ` crosses one of
//! the ties `ε p_k`.

use std::f64::consts::PI;

use crate::dynamics::{basis_vector, dot, TimeGrid};
use crate::penalty::PenaltyModel;
use crate::signal::HarmonicSpec;
use crate::solver::{DiscreteControl, SolverOptions};
use crate::{Error, Result};

/// `μ(t) = (2/π) 𝒟(t)·x`.
pub fn switching_function(harmonics: &HarmonicSpec, x: &[f64], t: f64) -> f64 {
    2.0 / PI * dot(&basis_vector(harmonics, t), x)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PmpSolution {
    /// Pointwise argmin at every node; left endpoint at ties.
    pub control: DiscreteControl,
    /// Switching angles in increasing order.
    pub switches: Vec<f64>,
    /// Nodes where `μ` hit a tie exactly.
    pub ties: usize,
}

/// Root of a continuous `f` with a sign change on `[lo, hi]`.
pub(crate) fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let mut f_lo = f(lo);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        let f_mid = f(mid);
        if f_mid == 0.0 {
            return mid;
        }
        if (f_mid > 0.0) == (f_lo > 0.0) {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Crossings of `μ` with the ties separating level `from` and level `to`
/// (indices into the control set) inside `[lo, hi]`; midpoint where `μ`
/// shows no sign change.
pub(crate) fn crossings(
    model: &PenaltyModel,
    harmonics: &HarmonicSpec,
    x: &[f64],
    (lo, hi): (f64, f64),
    (from, to): (usize, usize),
    tol: f64,
) -> Vec<f64> {
    let eps = model.epsilon();
    let slopes = model.segment_slopes();
    let (a, b) = (from.min(to), from.max(to));
    let mut roots: Vec<f64> = (a..b)
        .map(|q| {
            let tie = eps * slopes[q];
            let f = |t: f64| switching_function(harmonics, x, t) - tie;
            if f(lo) * f(hi) < 0.0 {
                bisect(f, lo, hi, tol)
            } else {
                0.5 * (lo + hi)
            }
        })
        .collect();
    roots.sort_by(f64::total_cmp);
    roots
}

/// Pointwise Hamiltonian minimizer on `grid` for the terminal state `x`.
pub fn pmp_reconstruct(
    model: &PenaltyModel,
    harmonics: &HarmonicSpec,
    terminal_state: &[f64],
    grid: &TimeGrid,
    bisection_tol: f64,
) -> Result<PmpSolution> {
    if terminal_state.len() != harmonics.dim() {
        return Err(Error::Dimension(format!(
            "terminal state has {} entries, harmonics need {}",
            terminal_state.len(),
            harmonics.dim()
        )));
    }
    let set = model.set();
    let mut values = Vec::with_capacity(grid.len());
    let mut ties = 0;
    for &t in grid.nodes() {
        let argmin = model.hamiltonian_argmin(switching_function(harmonics, terminal_state, t));
        if matches!(argmin, crate::penalty::Argmin::Segment(..)) {
            ties += 1;
        }
        values.push(argmin.pick());
    }
    let mut switches = Vec::new();
    for (k, pair) in values.windows(2).enumerate() {
        if pair[0] != pair[1] {
            let from = set.index_of(pair[0]).expect("argmin is a level");
            let to = set.index_of(pair[1]).expect("argmin is a level");
            let bracket = (grid.nodes()[k], grid.nodes()[k + 1]);
            switches.extend(crossings(model, harmonics, terminal_state, bracket, (from, to), bisection_tol));
        }
    }
    Ok(PmpSolution {
        control: DiscreteControl::new(grid.clone(), values)?,
        switches,
        ties,
    })
}

/// Fraction of nodes where `u` agrees with the pointwise minimizer for the
/// switching-function samples `mu`. A node agrees when `u_k` is within
/// `snap_tol` of the minimizer, or when `μ_k` is within `tie_band` of a tie
/// and `u_k` lies on the tied segment (the minimizer is then the segment).
pub fn pmp_agreement(model: &PenaltyModel, u: &[f64], mu: &[f64], options: &SolverOptions) -> f64 {
    if u.is_empty() {
        return 1.0;
    }
    let agree = u
        .iter()
        .zip(mu)
        .filter(|(&v, &m)| {
            model.hamiltonian_argmin(m).contains(v, options.snap_tol)
                || model.argmin_with_band(m, options.tie_band).contains(v, options.snap_tol)
        })
        .count();
    agree as f64 / u.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::penalty::{PenaltyConfig, PenaltyMode, Window};
    use crate::signal::ControlSet;

    fn linear() -> PenaltyModel {
        PenaltyModel::new(
            ControlSet::bilevel(),
            &PenaltyConfig {
                mode: PenaltyMode::Linear,
                alpha: 1.0,
                beta: 0.0,
                epsilon: 1e-5,
                theta: 1e5,
                window: Window::OpenEnds,
            },
        )
        .unwrap()
    }

    #[test]
    fn zero_state_gives_the_constant_minimizer() {
        let model = PenaltyModel::unit_parabola(ControlSet::new(vec![-1.0, 0.0, 1.0]).unwrap(), 1e-5).unwrap();
        let harmonics = HarmonicSpec::symmetric(&[1, 5]).unwrap();
        let grid = TimeGrid::uniform(100).unwrap();
        let sol = pmp_reconstruct(&model, &harmonics, &[0.0; 4], &grid, 1e-10).unwrap();
        assert!(sol.control.values().iter().all(|&u| u == 0.0));
        assert!(sol.switches.is_empty());
    }

    #[test]
    fn single_cosine_switch() {
        // μ(t) = (2/π) x_1 cos t = cos t
        let harmonics = HarmonicSpec::new(vec![1], vec![]).unwrap();
        let x = [PI / 2.0];
        let grid = TimeGrid::uniform(630).unwrap();
        let sol = pmp_reconstruct(&linear(), &harmonics, &x, &grid, 1e-10).unwrap();
        assert_eq!(sol.switches.len(), 1);
        let expected = (1e-5_f64).acos();
        assert!((sol.switches[0] - expected).abs() < 1e-9, "{}", sol.switches[0]);
        assert!((expected - (PI / 2.0 - 1e-5)).abs() < 1e-12);
        let u = sol.control.values();
        assert_eq!(u[0], 1.0);
        assert_eq!(u[u.len() - 1], -1.0);
        assert_eq!(u.windows(2).filter(|w| w[0] != w[1]).count(), 1);
    }

    #[test]
    fn bisection_oracle() {
        let root = bisect(|t| t.cos() - 0.3, 0.0, 3.0, 1e-12);
        assert!((root - 0.3_f64.acos()).abs() < 1e-11);
    }

    #[test]
    fn agreement_respects_ties() {
        let model = linear();
        let options = SolverOptions::default();
        // μ exactly at the tie: any value in [-1, 1] agrees
        assert_eq!(pmp_agreement(&model, &[0.3], &[1e-5], &options), 1.0);
        assert_eq!(pmp_agreement(&model, &[0.3], &[1e-5 + 1e-9], &options), 1.0);
        assert_eq!(pmp_agreement(&model, &[0.3], &[1e-3], &options), 0.0);
        assert_eq!(pmp_agreement(&model, &[1.0, -1.0], &[1e-3, -1.0], &options), 1.0);
    }
}
