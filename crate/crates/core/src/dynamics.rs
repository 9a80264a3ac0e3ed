//! The controlled system whose terminal state carries the Fourier
//! coefficients.
//!
//! With `𝒟(t) = [cos(e_a^1 t), …, cos(e_a^{N_a} t), sin(e_b^1 t), …]` the
//! reversed-time dynamics read `x' = -(2/π) 𝒟(t) u(t)`, `x(0) = [a_T; b_T]`,
//! so `x(π) = x(0) - [a(u); b(u)]` and `x(π) = 0` exactly when `u` carries the
//! target coefficients.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::signal::{fourier_closed_form, FourierTargets, HarmonicSpec, StaircaseSignal};
use crate::{Error, Result};

/// Harmonic layout plus the initial state `x_0 = [a_T; b_T]`.
#[derive(Clone, Debug, PartialEq)]
pub struct DynamicsSpec {
    harmonics: HarmonicSpec,
    initial: Vec<f64>,
}

impl DynamicsSpec {
    pub fn new(harmonics: HarmonicSpec, targets: &FourierTargets) -> Result<Self> {
        targets.check_against(&harmonics)?;
        Ok(Self {
            initial: targets.stacked(),
            harmonics,
        })
    }

    pub fn from_initial_state(harmonics: HarmonicSpec, initial: Vec<f64>) -> Result<Self> {
        if initial.len() != harmonics.dim() {
            return Err(Error::Dimension(format!(
                "initial state has {} entries, harmonics need {}",
                initial.len(),
                harmonics.dim()
            )));
        }
        Ok(Self { harmonics, initial })
    }

    pub fn harmonics(&self) -> &HarmonicSpec {
        &self.harmonics
    }

    pub fn initial_state(&self) -> &[f64] {
        &self.initial
    }

    pub fn dim(&self) -> usize {
        self.initial.len()
    }
}

/// Partition `0 = t_1 < … < t_{N_t} = π`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct TimeGrid {
    nodes: Vec<f64>,
}

impl TimeGrid {
    pub fn new(mut nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(Error::Grid(format!("need at least 2 nodes, got {}", nodes.len())));
        }
        let last = nodes.len() - 1;
        if nodes[0] != 0.0 {
            return Err(Error::Grid(format!("first node must be 0, got {}", nodes[0])));
        }
        if (nodes[last] - PI).abs() > 1e-12 {
            return Err(Error::Grid(format!("last node must be π, got {}", nodes[last])));
        }
        nodes[last] = PI;
        if nodes.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Grid("nodes must be strictly increasing".into()));
        }
        Ok(Self { nodes })
    }

    /// `count` equally spaced nodes on `[0, π]`.
    pub fn uniform(count: usize) -> Result<Self> {
        if count < 2 {
            return Err(Error::Grid(format!("need at least 2 nodes, got {count}")));
        }
        let h = PI / (count - 1) as f64;
        let mut nodes: Vec<f64> = (0..count).map(|k| k as f64 * h).collect();
        nodes[count - 1] = PI;
        Ok(Self { nodes })
    }

    /// `{0, step, 2·step, …} ∪ {π}`; a multiple of `step` within `1e-9` of π
    /// is merged into π.
    pub fn stepped(step: f64) -> Result<Self> {
        if !(step > 0.0 && step <= PI) {
            return Err(Error::Grid(format!("step must lie in (0, π], got {step}")));
        }
        let mut nodes = Vec::new();
        let mut k = 0usize;
        loop {
            let t = k as f64 * step;
            if t >= PI - 1e-9 {
                break;
            }
            nodes.push(t);
            k += 1;
        }
        nodes.push(PI);
        Self::new(nodes)
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `Δt_k = t_{k+1} - t_k`, `N_t - 1` entries.
    pub fn steps(&self) -> Vec<f64> {
        self.nodes.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Trapezoid weights: `Δt_1/2`, `(Δt_{k-1} + Δt_k)/2`, `Δt_{N_t-1}/2`.
    pub fn trapezoid_weights(&self) -> Vec<f64> {
        let steps = self.steps();
        let mut weights = vec![0.0; self.len()];
        for (k, dt) in steps.iter().enumerate() {
            weights[k] += 0.5 * dt;
            weights[k + 1] += 0.5 * dt;
        }
        weights
    }
}

impl TryFrom<Vec<f64>> for TimeGrid {
    type Error = Error;

    fn try_from(nodes: Vec<f64>) -> Result<Self> {
        Self::new(nodes)
    }
}

impl From<TimeGrid> for Vec<f64> {
    fn from(grid: TimeGrid) -> Self {
        grid.nodes
    }
}

/// `𝒟(t)`: cosines of the `cos` indices followed by sines of the `sin` indices.
pub fn basis_vector(spec: &HarmonicSpec, t: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(spec.dim());
    fill_basis(spec, t, &mut out);
    out
}

fn fill_basis(spec: &HarmonicSpec, t: f64, out: &mut Vec<f64>) {
    out.extend(spec.cos_indices().iter().map(|&j| (j as f64 * t).cos()));
    out.extend(spec.sin_indices().iter().map(|&j| (j as f64 * t).sin()));
}

/// Exact `x(π)` for a staircase control: `x_0 - [a(u); b(u)]`.
pub fn terminal_state_exact(dynamics: &DynamicsSpec, signal: &StaircaseSignal) -> Vec<f64> {
    let coefficients = fourier_closed_form(signal, dynamics.harmonics()).stacked();
    dynamics
        .initial_state()
        .iter()
        .zip(coefficients)
        .map(|(x, c)| x - c)
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    /// `x_1 = x_0, …, x_{N_t}`.
    pub states: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn terminal(&self) -> &[f64] {
        self.states.last().expect("trajectory has at least the initial state")
    }
}

/// Explicit Euler: `x_{k+1} = x_k - Δt_k (2/π) 𝒟(t_k) u_k`. The last sample
/// `u_{N_t}` does not enter the dynamics.
pub fn euler_integrate(dynamics: &DynamicsSpec, grid: &TimeGrid, control: &[f64]) -> Result<Trajectory> {
    check_control(grid, control)?;
    let mut states = Vec::with_capacity(grid.len());
    let mut x = dynamics.initial_state().to_vec();
    let mut basis = Vec::with_capacity(dynamics.dim());
    states.push(x.clone());
    for (k, dt) in grid.steps().into_iter().enumerate() {
        basis.clear();
        fill_basis(dynamics.harmonics(), grid.nodes()[k], &mut basis);
        let scale = 2.0 / PI * dt * control[k];
        for (xi, di) in x.iter_mut().zip(&basis) {
            *xi -= scale * di;
        }
        states.push(x.clone());
    }
    Ok(Trajectory { states })
}

pub(crate) fn check_control(grid: &TimeGrid, control: &[f64]) -> Result<()> {
    if control.len() != grid.len() {
        return Err(Error::Dimension(format!(
            "control has {} samples, grid has {} nodes",
            control.len(),
            grid.len()
        )));
    }
    if let Some(&v) = control.iter().find(|v| !(v.abs() <= 1.0)) {
        return Err(Error::Domain {
            what: "control sample",
            value: v,
            domain: "[-1, 1]",
        });
    }
    Ok(())
}

/// The linear map `u ↦ x_{N_t} - x_0 = B u` of the Euler scheme, with
/// `B[:, k] = -(2/π) Δt_k 𝒟(t_k)` for `k < N_t` and a zero last column.
///
/// Holds `𝒟(t_k)` at every node, so the switching function
/// `μ(t_k) = (2/π) 𝒟(t_k)·x` is available from the same table.
#[derive(Clone, Debug)]
pub struct TerminalMap {
    dim: usize,
    /// `𝒟(t_k)` for every node, node-major.
    basis: Vec<f64>,
    steps: Vec<f64>,
}

impl TerminalMap {
    pub fn new(harmonics: &HarmonicSpec, grid: &TimeGrid) -> Self {
        let dim = harmonics.dim();
        let mut basis = Vec::with_capacity(dim * grid.len());
        for &t in grid.nodes() {
            fill_basis(harmonics, t, &mut basis);
        }
        Self {
            dim,
            basis,
            steps: grid.steps(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nodes(&self) -> usize {
        self.steps.len() + 1
    }

    pub fn basis_at(&self, k: usize) -> &[f64] {
        &self.basis[k * self.dim..(k + 1) * self.dim]
    }

    /// Column `k` of `B` (zero for the last node).
    pub fn column(&self, k: usize) -> Vec<f64> {
        let scale = self.steps.get(k).map_or(0.0, |dt| -2.0 / PI * dt);
        self.basis_at(k).iter().map(|d| scale * d).collect()
    }

    /// `x_0 + B u`.
    pub fn terminal(&self, initial: &[f64], control: &[f64]) -> Vec<f64> {
        let mut x = initial.to_vec();
        for (k, (&u, dt)) in control.iter().zip(&self.steps).enumerate() {
            let scale = 2.0 / PI * dt * u;
            if scale == 0.0 {
                continue;
            }
            for (xi, di) in x.iter_mut().zip(self.basis_at(k)) {
                *xi -= scale * di;
            }
        }
        x
    }

    /// `Bᵀ y`, one entry per node.
    pub fn adjoint(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.nodes()];
        for (k, dt) in self.steps.iter().enumerate() {
            out[k] = -2.0 / PI * dt * dot(self.basis_at(k), y);
        }
        out
    }

    /// `μ(t_k) = (2/π) 𝒟(t_k)·x` at every node.
    pub fn switching_function(&self, x: &[f64]) -> Vec<f64> {
        (0..self.nodes())
            .map(|k| 2.0 / PI * dot(self.basis_at(k), x))
            .collect()
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
