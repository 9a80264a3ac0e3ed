//! The direct method: discretized cost, analytic gradient, minimization over
//! the box `[-1, 1]^{N_t}`, then staircase extraction and a check against the
//! control the maximum principle predicts.
//!
//! The discrete cost is
//! `F(u) = ½‖x_{N_t}‖² + ε Σ_k w_k 𝓛(u_k)` with trapezoid weights `w_k` and
//! `x_{N_t} = x_0 + B u` the explicit Euler terminal state. It is convex for
//! the linear and the exact piecewise penalty, and those are minimized by a
//! proximal point method (see `dual`). Gradient steps in the metric
//! `diag(w)` finish the job: the step on node `k` uses `ĝ_k = g_k / w_k`,
//! which is the switching function up to the penalty slope. They polish the
//! smooth surrogate and certify stationarity. Barzilai-Borwein lengths are
//! safeguarded by a monotone backtracking test.

mod dual;
mod extract;
mod pmp;

use serde::{Deserialize, Serialize};

pub use extract::{extract_staircase, extract_with, Extraction, Refinement};
pub use pmp::{pmp_agreement, pmp_reconstruct, switching_function, PmpSolution};

use crate::dynamics::{check_control, dot, TimeGrid};
use crate::penalty::{Argmin, PenaltyConfig, PenaltyMode, PenaltyModel};
use crate::problem::{Problem, ProblemData};
use crate::signal::StaircaseSignal;
use crate::{Error, Result};

/// Sampled control `u_1, …, u_{N_t}` on a grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawControl", into = "RawControl")]
pub struct DiscreteControl {
    grid: TimeGrid,
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawControl {
    grid: TimeGrid,
    values: Vec<f64>,
}

impl TryFrom<RawControl> for DiscreteControl {
    type Error = Error;

    fn try_from(raw: RawControl) -> Result<Self> {
        Self::new(raw.grid, raw.values)
    }
}

impl From<DiscreteControl> for RawControl {
    fn from(c: DiscreteControl) -> Self {
        RawControl {
            grid: c.grid,
            values: c.values,
        }
    }
}

impl DiscreteControl {
    pub fn new(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        check_control(&grid, &values)?;
        Ok(Self { grid, values })
    }

    pub fn constant(grid: TimeGrid, value: f64) -> Result<Self> {
        let values = vec![value; grid.len()];
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Trapezoid approximation of `∫_0^π |u - v| dt` on the shared grid.
    pub fn l1_distance(&self, other: &Self) -> Result<f64> {
        if self.grid != other.grid {
            return Err(Error::Dimension("controls live on different grids".into()));
        }
        Ok(self
            .grid
            .trapezoid_weights()
            .iter()
            .zip(self.values.iter().zip(&other.values))
            .map(|(w, (u, v))| w * (u - v).abs())
            .sum())
    }

    /// `t,u` rows with a header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,u\n");
        for (t, u) in self.grid.nodes().iter().zip(&self.values) {
            out.push_str(&format!("{t},{u}\n"));
        }
        out
    }
}

fn default_tol() -> f64 {
    1e-8
}
fn default_max_iters() -> usize {
    20_000
}
fn default_snap_tol() -> f64 {
    1e-2
}
fn default_bisection_tol() -> f64 {
    1e-10
}
fn default_unreliable_below() -> f64 {
    0.95
}
fn default_tie_band() -> f64 {
    1e-7
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverOptions {
    /// Stationarity tolerance on `‖u - prox(u - ĝ)‖_∞`.
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    /// Distance within which a sample counts as sitting on a level.
    #[serde(default = "default_snap_tol")]
    pub snap_tol: f64,
    /// Bisection tolerance for switching angles, in radians.
    #[serde(default = "default_bisection_tol")]
    pub bisection_tol: f64,
    /// Extraction is unreliable when the snapped fraction falls below this.
    #[serde(default = "default_unreliable_below")]
    pub unreliable_below: f64,
    /// Switching-function values within this of a tie `ε p_k` count as the
    /// tie when comparing with the maximum principle.
    #[serde(default = "default_tie_band")]
    pub tie_band: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: default_tol(),
            max_iters: default_max_iters(),
            snap_tol: default_snap_tol(),
            bisection_tol: default_bisection_tol(),
            unreliable_below: default_unreliable_below(),
            tie_band: default_tie_band(),
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("solver.tol", self.tol),
            ("solver.snap_tol", self.snap_tol),
            ("solver.bisection_tol", self.bisection_tol),
        ];
        for (key, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(key, format!("must be positive, got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.unreliable_below) {
            return Err(Error::config("solver.unreliable_below", "must lie in [0, 1]"));
        }
        if !(self.tie_band >= 0.0 && self.tie_band.is_finite()) {
            return Err(Error::config("solver.tie_band", "must be nonnegative"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveReport {
    pub problem: ProblemData,
    pub control: DiscreteControl,
    pub terminal_state: Vec<f64>,
    /// `‖x_{N_t}‖`.
    pub terminal_residual: f64,
    /// `F` with the exact penalty.
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Final `‖u - prox(u - ĝ)‖_∞`.
    pub stationarity: f64,
    pub extracted: Option<StaircaseSignal>,
    pub snap_fraction: f64,
    pub extraction_reliable: bool,
    pub pmp_agreement: f64,
    pub options: SolverOptions,
}

/// `F(u)` and `∇F(u)` as the optimizer sees them: the smooth surrogate in
/// smooth mode, `α u` in linear mode, and for the exact piecewise penalty its
/// value with the slope of the segment holding `u_k` (`[u_k, u_{k+1})`) as
/// the derivative.
pub fn objective_and_gradient(problem: &Problem, u: &[f64]) -> Result<(f64, Vec<f64>)> {
    check_control(problem.grid(), u)?;
    let model = problem.model();
    let eps = model.epsilon();
    let x = problem.map().terminal(problem.initial_state(), u);
    let mut grad = problem.map().adjoint(&x);
    let mut value = 0.5 * dot(&x, &x);
    for ((g, &w), &v) in grad.iter_mut().zip(problem.weights()).zip(u) {
        let (l, dl) = match model.mode() {
            PenaltyMode::SmoothPiecewiseAffine => (model.smooth_value(v), model.smooth_derivative(v)),
            _ => (model.exact_value(v), model.segment_slopes()[model.segment_of(v)]),
        };
        value += eps * w * l;
        *g += eps * w * dl;
    }
    Ok((value, grad))
}

/// `F` with the exact penalty (the smooth surrogate is never reported).
pub fn exact_objective(problem: &Problem, u: &[f64]) -> Result<f64> {
    check_control(problem.grid(), u)?;
    let x = problem.map().terminal(problem.initial_state(), u);
    let eps = problem.model().epsilon();
    let penalty: f64 = problem
        .weights()
        .iter()
        .zip(u)
        .map(|(w, &v)| w * problem.model().exact_value(v))
        .sum();
    Ok(0.5 * dot(&x, &x) + eps * penalty)
}

/// The zero-target solution `u ≡ argmin 𝓛` (midpoint of a flat argmin).
pub fn default_init(problem: &Problem) -> Vec<f64> {
    let value = match problem.model().minimizers() {
        Argmin::Level(u) => u,
        Argmin::Segment(lo, hi) => 0.5 * (lo + hi),
    };
    vec![value; problem.grid().len()]
}

/// State of one iterate: terminal state, smooth part of `F` and its
/// gradient, and the prox-handled part of `F`.
struct Iterate {
    u: Vec<f64>,
    x: Vec<f64>,
    grad: Vec<f64>,
}

struct Minimizer<'a> {
    problem: &'a Problem,
    prox: bool,
}

impl Minimizer<'_> {
    fn iterate(&self, u: Vec<f64>) -> Iterate {
        let p = self.problem;
        let x = p.map().terminal(p.initial_state(), &u);
        let mut grad = p.map().adjoint(&x);
        let model = p.model();
        let eps = model.epsilon();
        match model.mode() {
            PenaltyMode::Linear => {
                let slope = model.segment_slopes()[0];
                for (g, w) in grad.iter_mut().zip(p.weights()) {
                    *g += eps * w * slope;
                }
            }
            PenaltyMode::SmoothPiecewiseAffine => {
                for ((g, w), &v) in grad.iter_mut().zip(p.weights()).zip(&u) {
                    *g += eps * w * model.smooth_derivative(v);
                }
            }
            PenaltyMode::PiecewiseAffine => {}
        }
        Iterate { u, x, grad }
    }

    fn penalty(&self, v: f64) -> f64 {
        let model = self.problem.model();
        match model.mode() {
            PenaltyMode::SmoothPiecewiseAffine => model.smooth_value(v),
            _ => model.exact_value(v),
        }
    }

    /// `F(new) - F(old)`, computed from differences so that it stays
    /// accurate when both values agree to many digits.
    fn change(&self, old: &Iterate, new: &Iterate) -> f64 {
        let dx: Vec<f64> = new.x.iter().zip(&old.x).map(|(a, b)| a - b).collect();
        let quadratic: f64 = old.x.iter().zip(&dx).map(|(x, d)| (x + 0.5 * d) * d).sum();
        let eps = self.problem.model().epsilon();
        let penalty: f64 = self
            .problem
            .weights()
            .iter()
            .zip(new.u.iter().zip(&old.u))
            .filter(|(_, (a, b))| a != b)
            .map(|(w, (&a, &b))| w * (self.penalty(a) - self.penalty(b)))
            .sum();
        quadratic + eps * penalty
    }

    fn value(&self, it: &Iterate) -> f64 {
        let eps = self.problem.model().epsilon();
        let penalty: f64 = self
            .problem
            .weights()
            .iter()
            .zip(&it.u)
            .map(|(w, &v)| w * self.penalty(v))
            .sum();
        0.5 * dot(&it.x, &it.x) + eps * penalty
    }

    /// Forward-backward step of length `s` in the weighted metric.
    fn step(&self, it: &Iterate, s: f64) -> Vec<f64> {
        let model = self.problem.model();
        it.u.iter()
            .zip(&it.grad)
            .zip(self.problem.weights())
            .map(|((&u, &g), &w)| {
                let z = u - s * g / w;
                if self.prox {
                    model.prox(z, s)
                } else {
                    z.clamp(-1.0, 1.0)
                }
            })
            .collect()
    }

    fn stationarity(&self, it: &Iterate) -> f64 {
        self.step(it, 1.0)
            .iter()
            .zip(&it.u)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

pub(crate) struct Minimized {
    pub u: Vec<f64>,
    pub iterations: usize,
    pub stationarity: f64,
    pub converged: bool,
}

const SIGMA: f64 = 1e-4;
const STEP_MIN: f64 = 1e-12;
const STEP_MAX: f64 = 1e8;
const MAX_BACKTRACKS: usize = 60;

/// Minimizes `F` from `init`.
///
/// The convex modes go through the proximal point method and finish with
/// gradient steps, which normally stop at once. The smooth mode starts from
/// the minimizer with the exact penalty and polishes it by gradient steps on
/// the surrogate; `trace` then records the surrogate `F` of the polish only.
pub(crate) fn minimize(
    problem: &Problem,
    init: Vec<f64>,
    options: &SolverOptions,
    mut trace: Option<&mut Vec<f64>>,
) -> Minimized {
    let model = problem.model();
    let exact;
    let (convex, start_model) = match model.mode() {
        PenaltyMode::SmoothPiecewiseAffine => {
            let config = PenaltyConfig {
                mode: PenaltyMode::PiecewiseAffine,
                ..model.config()
            };
            exact = PenaltyModel::new(model.set().clone(), &config).expect("smooth settings are valid exact settings");
            (false, &exact)
        }
        _ => (true, model),
    };
    let warm = dual::proximal_point(problem, start_model, init, options, if convex { trace.as_deref_mut() } else { None });
    let remaining = options.max_iters.saturating_sub(warm.iterations);
    if convex && (warm.converged || remaining == 0) {
        return warm;
    }
    let polish = SolverOptions {
        max_iters: remaining,
        ..options.clone()
    };
    let mut run = projected_gradient(problem, warm.u, &polish, trace);
    run.iterations += warm.iterations;
    run
}

/// Proximal gradient steps with Barzilai-Borwein lengths and monotone
/// backtracking.
fn projected_gradient(
    problem: &Problem,
    init: Vec<f64>,
    options: &SolverOptions,
    mut trace: Option<&mut Vec<f64>>,
) -> Minimized {
    let m = Minimizer {
        problem,
        prox: problem.model().mode() == PenaltyMode::PiecewiseAffine,
    };
    let weights = problem.weights();
    let init = init.into_iter().map(|v| v.clamp(-1.0, 1.0)).collect();
    let mut current = m.iterate(init);
    let mut s = 1.0;
    let mut iterations = 0;
    let mut stationarity = m.stationarity(&current);
    if let Some(t) = trace.as_deref_mut() {
        t.push(m.value(&current));
    }
    while stationarity > options.tol && iterations < options.max_iters {
        iterations += 1;
        let mut accepted = None;
        let mut trial_step = s;
        for _ in 0..MAX_BACKTRACKS {
            let candidate = m.iterate(m.step(&current, trial_step));
            let norm2: f64 = candidate
                .u
                .iter()
                .zip(&current.u)
                .zip(weights)
                .map(|((a, b), w)| w * (a - b) * (a - b))
                .sum();
            if norm2 == 0.0 {
                break;
            }
            if m.change(&current, &candidate) <= -SIGMA / (2.0 * trial_step) * norm2 {
                accepted = Some(candidate);
                break;
            }
            trial_step *= 0.5;
        }
        let Some(next) = accepted else {
            break;
        };
        let (mut uu, mut ug) = (0.0, 0.0);
        for (k, w) in weights.iter().enumerate() {
            let du = next.u[k] - current.u[k];
            uu += w * du * du;
            ug += du * (next.grad[k] - current.grad[k]);
        }
        s = if ug > 0.0 { (uu / ug).clamp(STEP_MIN, STEP_MAX) } else { STEP_MAX };
        current = next;
        stationarity = m.stationarity(&current);
        if let Some(t) = trace.as_deref_mut() {
            t.push(m.value(&current));
        }
    }
    Minimized {
        converged: stationarity <= options.tol,
        u: current.u,
        iterations,
        stationarity,
    }
}

/// Solves the discrete problem from `init` (or [`default_init`]) and
/// assembles the report. Non-convergence is flagged in the report.
pub fn solve(problem: &Problem, init: Option<&[f64]>, options: &SolverOptions) -> Result<SolveReport> {
    let start = match init {
        Some(u) => {
            if u.len() != problem.grid().len() {
                return Err(Error::Dimension(format!(
                    "initial control has {} samples, grid has {}",
                    u.len(),
                    problem.grid().len()
                )));
            }
            u.to_vec()
        }
        None => default_init(problem),
    };
    let run = minimize(problem, start, options, None);
    report(problem, run, options)
}

pub(crate) fn report(problem: &Problem, run: Minimized, options: &SolverOptions) -> Result<SolveReport> {
    let control = DiscreteControl::new(problem.grid().clone(), run.u)?;
    let x = problem.map().terminal(problem.initial_state(), control.values());
    let objective = exact_objective(problem, control.values())?;
    let extraction = extract_with(
        &control,
        problem.levels(),
        options,
        Some(&Refinement {
            model: problem.model(),
            harmonics: problem.harmonics(),
            terminal_state: &x,
        }),
    )?;
    let mu = problem.map().switching_function(&x);
    let agreement = pmp_agreement(problem.model(), control.values(), &mu, options);
    Ok(SolveReport {
        problem: problem.data().clone(),
        terminal_residual: dot(&x, &x).sqrt(),
        terminal_state: x,
        objective,
        iterations: run.iterations,
        converged: run.converged,
        stationarity: run.stationarity,
        extracted: extraction.signal,
        snap_fraction: extraction.snap_fraction,
        extraction_reliable: extraction.reliable,
        pmp_agreement: agreement,
        options: options.clone(),
        control,
    })
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;
    use crate::dynamics::TimeGrid;
    use crate::penalty::{PenaltyConfig, Window};
    use crate::signal::tests::random_staircase;
    use crate::signal::{fourier_closed_form, is_staircase, Coefficients, ControlSet, HarmonicSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn penalty(mode: PenaltyMode, epsilon: f64, theta: f64) -> PenaltyConfig {
        PenaltyConfig {
            mode,
            alpha: 1.0,
            beta: 0.0,
            epsilon,
            theta,
            window: Window::OpenEnds,
        }
    }

    fn fig6_harmonics() -> HarmonicSpec {
        HarmonicSpec::symmetric(&[1, 5, 7, 11, 13]).unwrap()
    }

    fn problem(levels: &[f64], targets: Coefficients, config: PenaltyConfig, nodes: usize) -> Problem {
        let data = ProblemData {
            levels: ControlSet::new(levels.to_vec()).unwrap(),
            harmonics: fig6_harmonics(),
            targets,
            penalty: config,
        };
        Problem::new(data, TimeGrid::uniform(nodes).unwrap()).unwrap()
    }

    fn fig6_targets(m: f64) -> Coefficients {
        Coefficients {
            a: vec![m, 0.0, 0.0, 0.0, 0.0],
            b: vec![m, 0.0, 0.0, 0.0, 0.0],
        }
    }

    fn random_targets(rng: &mut impl Rng) -> Coefficients {
        Coefficients {
            a: (0..5).map(|_| rng.gen_range(-0.5..0.5)).collect(),
            b: (0..5).map(|_| rng.gen_range(-0.5..0.5)).collect(),
        }
    }

    fn fd_check(problem: &Problem, u: &[f64], h: f64, tol: f64) {
        let (_, g) = objective_and_gradient(problem, u).unwrap();
        for k in [0, 1, u.len() / 3, u.len() / 2, u.len() - 2, u.len() - 1] {
            let mut up = u.to_vec();
            let mut down = u.to_vec();
            up[k] += h;
            down[k] -= h;
            let fd = (objective_and_gradient(problem, &up).unwrap().0
                - objective_and_gradient(problem, &down).unwrap().0)
                / (2.0 * h);
            let scale = g[k].abs().max(1e-12);
            assert!((fd - g[k]).abs() <= tol * scale, "node {k}: fd {fd} vs {}", g[k]);
        }
    }

    #[test]
    fn zero_everything() {
        let p = problem(
            &[-1.0, 0.0, 1.0],
            fig6_targets(0.0),
            penalty(PenaltyMode::PiecewiseAffine, 1e-300, 1e5),
            50,
        );
        let (f, g) = objective_and_gradient(&p, &vec![0.0; 50]).unwrap();
        assert!(f.abs() < 1e-300);
        assert!(g.iter().all(|v| v.abs() < 1e-300));
    }

    #[test]
    fn dynamics_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..5 {
            let p = problem(
                &[-1.0, 0.0, 1.0],
                random_targets(&mut rng),
                penalty(PenaltyMode::SmoothPiecewiseAffine, 1e-300, 10.0),
                200,
            );
            let u: Vec<f64> = (0..200).map(|_| rng.gen_range(-0.9..0.9)).collect();
            // F is quadratic here, so central differences are exact up to
            // rounding, which a wide step keeps small
            fd_check(&p, &u, 1e-3, 1e-7);
        }
    }

    #[test]
    fn smooth_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let p = problem(
                &[-1.0, -0.5, 0.0, 0.5, 1.0],
                random_targets(&mut rng),
                penalty(PenaltyMode::SmoothPiecewiseAffine, 1e-2, 10.0),
                200,
            );
            let u: Vec<f64> = (0..200).map(|_| rng.gen_range(-0.99..0.99)).collect();
            fd_check(&p, &u, 1e-6, 1e-5);
        }
    }

    #[test]
    fn objective_is_convex_for_exact_penalties() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for (levels, mode) in [
            (vec![-1.0, 0.0, 1.0], PenaltyMode::PiecewiseAffine),
            (vec![-1.0, 1.0], PenaltyMode::Linear),
        ] {
            let p = problem(&levels, random_targets(&mut rng), penalty(mode, 1e-2, 1e5), 120);
            for _ in 0..10 {
                let u: Vec<f64> = (0..120).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let v: Vec<f64> = (0..120).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let (fu, fv) = (exact_objective(&p, &u).unwrap(), exact_objective(&p, &v).unwrap());
                for i in 1..=20 {
                    let l = i as f64 / 21.0;
                    let w: Vec<f64> = u.iter().zip(&v).map(|(a, b)| l * a + (1.0 - l) * b).collect();
                    assert!(exact_objective(&p, &w).unwrap() <= l * fu + (1.0 - l) * fv + 1e-10);
                }
            }
        }
    }

    #[test]
    fn objective_is_nonincreasing_along_iterations() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for mode in [PenaltyMode::Linear, PenaltyMode::PiecewiseAffine, PenaltyMode::SmoothPiecewiseAffine] {
            let levels: &[f64] = if mode == PenaltyMode::Linear { &[-1.0, 1.0] } else { &[-1.0, 0.0, 1.0] };
            let p = problem(levels, random_targets(&mut rng), penalty(mode, 1e-5, 1e5), 315);
            let mut trace = Vec::new();
            minimize(&p, default_init(&p), &SolverOptions::default(), Some(&mut trace));
            assert!(trace.len() > 2);
            for w in trace.windows(2) {
                assert!(w[1] <= w[0] + 1e-14 * w[0].abs(), "{mode:?}: {} -> {}", w[0], w[1]);
            }
        }
    }

    #[test]
    fn zero_target_stays_at_the_minimizer() {
        let p = problem(&[-1.0, 0.0, 1.0], fig6_targets(0.0), penalty(PenaltyMode::PiecewiseAffine, 1e-5, 1e5), 630);
        let report = solve(&p, None, &SolverOptions::default()).unwrap();
        assert!(report.converged);
        assert!(report.control.values().iter().all(|&u| u == 0.0));
        assert_eq!(report.terminal_residual, 0.0);
        assert_eq!(report.extracted.as_ref().unwrap().switches(), 0);
    }

    #[test]
    fn bilevel_half_sine_target() {
        let targets = Coefficients {
            a: vec![0.0; 5],
            b: vec![0.5, 0.0, 0.0, 0.0, 0.0],
        };
        let p = problem(&[-1.0, 1.0], targets, penalty(PenaltyMode::Linear, 1e-5, 1e5), 630);
        let report = solve(&p, None, &SolverOptions::default()).unwrap();
        assert!(report.converged, "stationarity {}", report.stationarity);
        assert!(report.terminal_residual <= 3e-2, "{}", report.terminal_residual);
        assert!(report.pmp_agreement >= 0.98);
        eprintln!(
            "half-sine: residual {:.3e}, snap {:.4}, iterations {}",
            report.terminal_residual, report.snap_fraction, report.iterations
        );
    }

    #[test]
    fn fig6_multilevel_runs_are_staircases() {
        for levels in [vec![-1.0, 0.0, 1.0], vec![-1.0, -0.5, 0.0, 0.5, 1.0]] {
            for m in [-0.6, 0.3, 0.7] {
                let p = problem(&levels, fig6_targets(m), penalty(PenaltyMode::SmoothPiecewiseAffine, 1e-5, 1e5), 630);
                let report = solve(&p, None, &SolverOptions::default()).unwrap();
                assert!(report.converged, "{levels:?} m={m}: stationarity {}", report.stationarity);
                assert!(report.snap_fraction >= 0.95, "{levels:?} m={m}: snap {}", report.snap_fraction);
                assert!(report.pmp_agreement >= 0.98, "{levels:?} m={m}: pmp {}", report.pmp_agreement);
                let signal = report.extracted.as_ref().unwrap();
                assert!(is_staircase(signal, p.levels()));
                assert!(report.terminal_residual <= 3e-2);
            }
        }
    }

    #[test]
    fn exact_piecewise_mode_matches_smooth_mode() {
        let levels = [-1.0, 0.0, 1.0];
        let exact = problem(&levels, fig6_targets(0.4), penalty(PenaltyMode::PiecewiseAffine, 1e-5, 1e5), 630);
        let smooth = problem(&levels, fig6_targets(0.4), penalty(PenaltyMode::SmoothPiecewiseAffine, 1e-5, 1e5), 630);
        let a = solve(&exact, None, &SolverOptions::default()).unwrap();
        let b = solve(&smooth, None, &SolverOptions::default()).unwrap();
        assert!(a.converged && b.converged);
        assert!((a.terminal_residual - b.terminal_residual).abs() < 1e-4);
        assert!(a.control.l1_distance(&b.control).unwrap() < 5e-2);
    }

    #[test]
    fn reachable_target_obeys_the_residual_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let set = ControlSet::bilevel();
        let signal = loop {
            let s = random_staircase(&mut rng, &set, 3);
            if s.switches() == 3 {
                break s;
            }
        };
        let targets = fourier_closed_form(&signal, &fig6_harmonics());
        let p = problem(&[-1.0, 1.0], targets, penalty(PenaltyMode::Linear, 1e-5, 1e5), 2520);
        let report = solve(&p, None, &SolverOptions::default()).unwrap();
        let bound = 4.0 * 1e-5 * PI * p.model().max_abs();
        assert!(report.terminal_residual.powi(2) <= 2.0 * bound, "{}", report.terminal_residual);
    }

    #[test]
    fn forced_non_convergence_is_flagged() {
        let p = problem(&[-1.0, 1.0], fig6_targets(0.5), penalty(PenaltyMode::Linear, 1e-5, 1e5), 630);
        let options = SolverOptions {
            max_iters: 1,
            ..SolverOptions::default()
        };
        let report = solve(&p, None, &options).unwrap();
        assert!(!report.converged);
        assert_eq!(report.iterations, 1);
    }

    #[test]
    fn report_round_trips_through_json() {
        let p = problem(&[-1.0, 0.0, 1.0], fig6_targets(0.3), penalty(PenaltyMode::SmoothPiecewiseAffine, 1e-5, 1e5), 315);
        let report = solve(&p, None, &SolverOptions::default()).unwrap();
        let text = serde_json::to_string(&report).unwrap();
        let back: SolveReport = serde_json::from_str(&text).unwrap();
        assert_eq!(back, report);
    }

    #[test]
    fn control_validation_and_l1() {
        let grid = TimeGrid::uniform(5).unwrap();
        assert!(DiscreteControl::new(grid.clone(), vec![0.0; 4]).is_err());
        assert!(DiscreteControl::new(grid.clone(), vec![0.0, 0.0, 1.5, 0.0, 0.0]).is_err());
        let a = DiscreteControl::constant(grid.clone(), 1.0).unwrap();
        let b = DiscreteControl::constant(grid, -1.0).unwrap();
        assert!((a.l1_distance(&b).unwrap() - 2.0 * PI).abs() < 1e-12);
        assert_eq!(a.l1_distance(&a).unwrap(), 0.0);
        assert!(a.to_csv().starts_with("t,u\n0,1\n"));
    }
}
