//! Proximal point method for the convex discrete problem (linear or exact
//! piecewise penalty).
//!
//! Plain gradient steps stall here: the penalty pulls with force `ε` while
//! the quadratic part has curvature of order one on a rank `2 N_h` subspace.
//! Each outer step instead minimizes
//! `F(v) + (γ/2) Σ_k w_k (v_k - ū_k)²`. The dual of that subproblem lives in
//! the terminal state `y`, is smooth and strongly concave, and its maximizer
//! gives `v` node by node through the proximal map of `ε 𝓛`, which is the
//! maximum-principle argmin blurred by `γ`. A semismooth Newton method
//! solves the dual. `γ` shrinks tenfold per outer step, so the iterates settle
//! on the exact minimizer with the tied nodes resolved by the dynamics.

use nalgebra::{DMatrix, DVector};

use crate::dynamics::dot;
use crate::penalty::PenaltyModel;
use crate::problem::Problem;
use crate::solver::{Minimized, SolverOptions};

const GAMMA_START: f64 = 1.0;
const GAMMA_FLOOR: f64 = 1e-10;
const INNER_ITERS: usize = 200;
const ARMIJO: f64 = 1e-4;

struct Dual<'a> {
    problem: &'a Problem,
    model: &'a PenaltyModel,
    /// `(2/π) Δt_k`, zero at the last node.
    scale: Vec<f64>,
}

struct DualPoint {
    value: f64,
    grad: Vec<f64>,
    v: Vec<f64>,
    /// Nodes whose `v_k` lies strictly inside a segment.
    interior: Vec<bool>,
}

impl<'a> Dual<'a> {
    fn new(problem: &'a Problem, model: &'a PenaltyModel) -> Self {
        let mut scale: Vec<f64> = problem.grid().steps().iter().map(|dt| 2.0 / std::f64::consts::PI * dt).collect();
        scale.push(0.0);
        Self { problem, model, scale }
    }

    /// Dual value, gradient `x_0 + B v(y) - y` and the primal response.
    fn eval(&self, y: &[f64], center: &[f64], gamma: f64) -> DualPoint {
        let p = self.problem;
        let eps = self.model.epsilon();
        let levels = self.model.set().levels();
        // s_k = (2/π) Δt_k 𝒟_k·y = -(Bᵀy)_k
        let s = p.map().adjoint(y);
        let mut value = dot(y, p.initial_state()) - 0.5 * dot(y, y);
        let mut v = Vec::with_capacity(s.len());
        let mut interior = Vec::with_capacity(s.len());
        for (k, (&w, &ub)) in p.weights().iter().zip(center).enumerate() {
            let s_k = -s[k];
            let z = ub + s_k / (gamma * w);
            let vk = self.model.prox(z, 1.0 / gamma);
            value += eps * w * self.model.exact_value(vk) - s_k * vk + 0.5 * gamma * w * (vk - ub) * (vk - ub);
            interior.push(!levels.contains(&vk));
            v.push(vk);
        }
        let x = p.map().terminal(p.initial_state(), &v);
        let grad = x.iter().zip(y).map(|(a, b)| a - b).collect();
        DualPoint { value, grad, v, interior }
    }

    /// Maximizes the dual of the subproblem centred at `center`, starting
    /// from `y`. Returns the final dual point and its `y`.
    fn maximize(&self, mut y: Vec<f64>, center: &[f64], gamma: f64) -> (Vec<f64>, DualPoint) {
        let n = y.len();
        let map = self.problem.map();
        let gtol = 1e-15 * (1.0 + self.problem.initial_state().iter().fold(0.0_f64, |m, v| m.max(v.abs())));
        let mut point = self.eval(&y, center, gamma);
        for _ in 0..INNER_ITERS {
            if point.grad.iter().all(|g| g.abs() <= gtol) {
                break;
            }
            let mut h = DMatrix::<f64>::identity(n, n);
            for (k, (&inside, &w)) in point.interior.iter().zip(self.problem.weights()).enumerate() {
                let c = self.scale[k];
                if !inside || c == 0.0 {
                    continue;
                }
                let d = map.basis_at(k);
                let jk = c * c / (gamma * w);
                for i in 0..n {
                    for j in 0..n {
                        h[(i, j)] += jk * d[i] * d[j];
                    }
                }
            }
            let rhs = DVector::from_column_slice(&point.grad);
            let Some(chol) = h.cholesky() else { break };
            let dir = chol.solve(&rhs);
            let slope = rhs.dot(&dir);
            let mut t = 1.0;
            let mut accepted = None;
            while t >= 1e-12 {
                let trial: Vec<f64> = y.iter().zip(dir.iter()).map(|(a, d)| a + t * d).collect();
                let next = self.eval(&trial, center, gamma);
                if next.value >= point.value + ARMIJO * t * slope {
                    accepted = Some((trial, next));
                    break;
                }
                t *= 0.5;
            }
            let Some((trial, next)) = accepted else { break };
            y = trial;
            point = next;
        }
        (y, point)
    }
}

/// `‖u - prox(u - ĝ)‖_∞` for the exact penalty of `model`.
pub(crate) fn exact_stationarity(problem: &Problem, model: &PenaltyModel, u: &[f64], x: &[f64]) -> f64 {
    let grad = problem.map().adjoint(x);
    grad.iter()
        .zip(problem.weights())
        .zip(u)
        .map(|((g, w), &v)| (model.prox(v - g / w, 1.0) - v).abs())
        .fold(0.0, f64::max)
}

/// `F(new) - F(old)` for the exact penalty, from differences.
fn change(problem: &Problem, model: &PenaltyModel, old: (&[f64], &[f64]), new: (&[f64], &[f64])) -> f64 {
    let quadratic: f64 = old.1.iter().zip(new.1).map(|(a, b)| (a + 0.5 * (b - a)) * (b - a)).sum();
    let penalty: f64 = problem
        .weights()
        .iter()
        .zip(new.0.iter().zip(old.0))
        .filter(|(_, (a, b))| a != b)
        .map(|(w, (&a, &b))| w * (model.exact_value(a) - model.exact_value(b)))
        .sum();
    quadratic + model.epsilon() * penalty
}

pub(crate) fn exact_value(problem: &Problem, model: &PenaltyModel, u: &[f64], x: &[f64]) -> f64 {
    let penalty: f64 = problem.weights().iter().zip(u).map(|(w, &v)| w * model.exact_value(v)).sum();
    0.5 * dot(x, x) + model.epsilon() * penalty
}

/// Minimizes `F` with the exact penalty of `model` from `init`. Every
/// accepted outer step lowers `F`; a step that would not is refused and ends
/// the run.
pub(crate) fn proximal_point(
    problem: &Problem,
    model: &PenaltyModel,
    init: Vec<f64>,
    options: &SolverOptions,
    mut trace: Option<&mut Vec<f64>>,
) -> Minimized {
    let dual = Dual::new(problem, model);
    let mut u: Vec<f64> = init.into_iter().map(|v| v.clamp(-1.0, 1.0)).collect();
    let mut x = problem.map().terminal(problem.initial_state(), &u);
    let mut y = x.clone();
    let mut gamma = GAMMA_START;
    let mut stationarity = exact_stationarity(problem, model, &u, &x);
    let mut iterations = 0;
    if let Some(t) = trace.as_deref_mut() {
        t.push(exact_value(problem, model, &u, &x));
    }
    // below the floor the tied nodes are pinned to well under `tol`
    let done = |stationarity: f64, gamma: f64| stationarity <= 1e-3 * options.tol || (gamma <= GAMMA_FLOOR && stationarity <= options.tol);
    while !done(stationarity, gamma) && iterations < options.max_iters {
        iterations += 1;
        let (next_y, point) = dual.maximize(y.clone(), &u, gamma);
        let next_x = problem.map().terminal(problem.initial_state(), &point.v);
        if change(problem, model, (&u, &x), (&point.v, &next_x)) > 0.0 {
            if gamma <= GAMMA_FLOOR {
                break;
            }
            gamma = (0.1 * gamma).max(GAMMA_FLOOR);
            continue;
        }
        y = next_y;
        u = point.v;
        x = next_x;
        stationarity = exact_stationarity(problem, model, &u, &x);
        if let Some(t) = trace.as_deref_mut() {
            t.push(exact_value(problem, model, &u, &x));
        }
        gamma = (0.1 * gamma).max(GAMMA_FLOOR);
    }
    Minimized {
        converged: stationarity <= options.tol,
        u,
        iterations,
        stationarity,
    }
}
