//! Convex penalties on the control value and the pointwise Hamiltonian
//! minimizer they induce.
//!
//! The piecewise-affine penalty `𝓛` interpolates the parabola
//! `𝒫(u) = α (u - β)²` at the levels of the control set; on segment `k`
//! (between `u_k` and `u_{k+1}`) it is the chord `λ_k` with slope `p_k`.
//! For `μ` fixed, `𝒥(u, μ) = ε 𝓛(u) - μ u` is minimized on the control set
//! except at the finitely many ties `μ = ε p_k`, where the whole segment
//! minimizes it. The bilevel linear penalty `𝓛(u) = α u` is the one-segment
//! case with slope `α`.
//!
//! Segment indices are zero-based throughout: segment `k` spans
//! `[levels[k], levels[k + 1]]`.

use serde::{Deserialize, Serialize};

use crate::signal::ControlSet;
use crate::{Error, Result};

/// Slopes this close to zero count as flat.
const FLAT_SLOPE_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PenaltyMode {
    /// `𝓛(u) = α u` on `{-1, 1}`.
    Linear,
    /// Exact piecewise-affine interpolant.
    PiecewiseAffine,
    /// Piecewise-affine interpolant with `tanh` windows of sharpness `θ`
    /// inside the optimizer.
    SmoothPiecewiseAffine,
}

/// Shape of the `tanh` windows `χ^θ` at the two outermost levels.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    /// `χ^θ_k(x) = (tanh θ(x - u_k) + tanh θ(u_{k+1} - x)) / 2` on every
    /// segment. It equals 1/2 at `x = ±1`, so `𝓛^θ(±1) = 𝒫(±1) / 2`.
    Closed,
    /// Same as `Closed` except the first window has no lower edge and the
    /// last window no upper edge, so `𝓛^θ → 𝓛` on all of `[-1, 1]` away
    /// from the interior levels.
    #[default]
    OpenEnds,
}

fn default_theta() -> f64 {
    1e5
}

/// The JSON form of a penalty; the control set comes from the problem.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PenaltyConfig {
    pub mode: PenaltyMode,
    pub alpha: f64,
    #[serde(default)]
    pub beta: f64,
    pub epsilon: f64,
    #[serde(default = "default_theta")]
    pub theta: f64,
    #[serde(default)]
    pub window: Window,
}

/// Set of minimizers of a convex one-dimensional function on `[-1, 1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Argmin {
    Level(f64),
    /// Every point of `[lo, hi]` minimizes.
    Segment(f64, f64),
}

impl Argmin {
    /// A single representative; the left endpoint for segments.
    pub fn pick(&self) -> f64 {
        match *self {
            Argmin::Level(u) => u,
            Argmin::Segment(lo, _) => lo,
        }
    }

    pub fn contains(&self, u: f64, tol: f64) -> bool {
        match *self {
            Argmin::Level(v) => (u - v).abs() <= tol,
            Argmin::Segment(lo, hi) => u >= lo - tol && u <= hi + tol,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PenaltyModel {
    set: ControlSet,
    mode: PenaltyMode,
    alpha: f64,
    beta: f64,
    epsilon: f64,
    theta: f64,
    window: Window,
    /// Chord slopes `p_k` (the single slope `α` in linear mode).
    slopes: Vec<f64>,
}

impl PenaltyModel {
    pub fn new(set: ControlSet, config: &PenaltyConfig) -> Result<Self> {
        let PenaltyConfig {
            mode,
            alpha,
            beta,
            epsilon,
            theta,
            window,
        } = *config;
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::Penalty(format!("epsilon must be positive, got {epsilon}")));
        }
        if !beta.is_finite() {
            return Err(Error::Penalty(format!("beta must be finite, got {beta}")));
        }
        match mode {
            PenaltyMode::Linear => {
                if alpha == 0.0 || !alpha.is_finite() {
                    return Err(Error::Penalty(format!(
                        "linear penalty needs a finite nonzero alpha, got {alpha}"
                    )));
                }
                if set.len() != 2 {
                    return Err(Error::Penalty(format!(
                        "linear penalty needs the control set {{-1, 1}}, got {} levels",
                        set.len()
                    )));
                }
            }
            PenaltyMode::PiecewiseAffine | PenaltyMode::SmoothPiecewiseAffine => {
                if !(alpha > 0.0 && alpha.is_finite()) {
                    return Err(Error::Penalty(format!(
                        "piecewise penalty needs alpha > 0, got {alpha}"
                    )));
                }
            }
        }
        if mode == PenaltyMode::SmoothPiecewiseAffine && !(theta > 0.0 && theta.is_finite()) {
            return Err(Error::Penalty(format!("theta must be positive, got {theta}")));
        }
        let slopes = match mode {
            PenaltyMode::Linear => vec![alpha],
            _ => {
                let parabola = |u: f64| alpha * (u - beta).powi(2);
                set.levels()
                    .windows(2)
                    .map(|w| (parabola(w[1]) - parabola(w[0])) / (w[1] - w[0]))
                    .collect()
            }
        };
        Ok(Self {
            set,
            mode,
            alpha,
            beta,
            epsilon,
            theta,
            window,
            slopes,
        })
    }

    /// Piecewise-affine interpolant of `u²` (α = 1, β = 0).
    pub fn unit_parabola(set: ControlSet, epsilon: f64) -> Result<Self> {
        Self::new(
            set,
            &PenaltyConfig {
                mode: PenaltyMode::PiecewiseAffine,
                alpha: 1.0,
                beta: 0.0,
                epsilon,
                theta: default_theta(),
                window: Window::default(),
            },
        )
    }

    pub fn config(&self) -> PenaltyConfig {
        PenaltyConfig {
            mode: self.mode,
            alpha: self.alpha,
            beta: self.beta,
            epsilon: self.epsilon,
            theta: self.theta,
            window: self.window,
        }
    }

    pub fn set(&self) -> &ControlSet {
        &self.set
    }

    pub fn mode(&self) -> PenaltyMode {
        self.mode
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn with_window(mut self, window: Window) -> Self {
        self.window = window;
        self
    }

    pub fn with_theta(mut self, theta: f64) -> Self {
        self.theta = theta;
        self
    }

    pub fn parabola(&self, u: f64) -> f64 {
        self.alpha * (u - self.beta).powi(2)
    }

    fn segments(&self) -> usize {
        self.set.len() - 1
    }

    fn level(&self, k: usize) -> f64 {
        self.set.levels()[k]
    }

    /// The chord `λ_k` through `(u_k, 𝒫(u_k))` and `(u_{k+1}, 𝒫(u_{k+1}))`
    /// evaluated at `u`. In linear mode the single segment is `α u`.
    pub fn lambda_segment(&self, k: usize, u: f64) -> f64 {
        match self.mode {
            PenaltyMode::Linear => self.alpha * u,
            _ => {
                let (lo, hi) = (self.level(k), self.level(k + 1));
                ((u - lo) * self.parabola(hi) + (hi - u) * self.parabola(lo)) / (hi - lo)
            }
        }
    }

    /// Segment holding `u`: `[u_k, u_{k+1})`, with `u = 1` on the last one.
    pub fn segment_of(&self, u: f64) -> usize {
        let levels = self.set.levels();
        let k = levels.partition_point(|&level| level <= u);
        k.saturating_sub(1).min(self.segments() - 1)
    }

    /// `p_k`, nondecreasing in `k`.
    pub fn segment_slopes(&self) -> &[f64] {
        &self.slopes
    }

    /// `𝓛(u)` as the mode defines it: `α u`, the exact interpolant, or the
    /// smooth surrogate.
    pub fn penalty_value(&self, u: f64) -> Result<f64> {
        check_unit(u)?;
        Ok(match self.mode {
            PenaltyMode::SmoothPiecewiseAffine => self.smooth_value(u),
            _ => self.exact_value(u),
        })
    }

    /// The nonsmooth penalty `𝓛` regardless of mode (no smoothing).
    pub fn exact_value(&self, u: f64) -> f64 {
        self.lambda_segment(self.segment_of(u), u)
    }

    /// `max_{[-1, 1]} |𝓛|`, attained at a level.
    pub fn max_abs(&self) -> f64 {
        self.set
            .levels()
            .iter()
            .map(|&u| self.exact_value(u).abs())
            .fold(0.0, f64::max)
    }

    fn window_edges(&self, k: usize) -> (bool, bool) {
        match self.window {
            Window::Closed => (true, true),
            Window::OpenEnds => (k > 0, k + 1 < self.segments()),
        }
    }

    /// `𝓛^θ(u) = Σ_k λ_k(u) χ^θ_k(u)`. Linear mode has no kinks and returns
    /// `α u`.
    pub fn smooth_value(&self, u: f64) -> f64 {
        if self.mode == PenaltyMode::Linear {
            return self.alpha * u;
        }
        let theta = self.theta;
        (0..self.segments())
            .map(|k| {
                let (lower, upper) = self.window_edges(k);
                let left = if lower { (theta * (u - self.level(k))).tanh() } else { 1.0 };
                let right = if upper { (theta * (self.level(k + 1) - u)).tanh() } else { 1.0 };
                let chi = 0.5 * (left + right);
                if chi == 0.0 {
                    0.0
                } else {
                    self.lambda_segment(k, u) * chi
                }
            })
            .sum()
    }

    /// Exact derivative of [`smooth_value`](Self::smooth_value).
    pub fn smooth_derivative(&self, u: f64) -> f64 {
        if self.mode == PenaltyMode::Linear {
            return self.alpha;
        }
        let theta = self.theta;
        let sech2 = |z: f64| {
            let c = z.cosh();
            1.0 / (c * c)
        };
        (0..self.segments())
            .map(|k| {
                let (lower, upper) = self.window_edges(k);
                let (lo, hi) = (self.level(k), self.level(k + 1));
                let (left, dleft) = if lower {
                    let z = theta * (u - lo);
                    (z.tanh(), theta * sech2(z))
                } else {
                    (1.0, 0.0)
                };
                let (right, dright) = if upper {
                    let z = theta * (hi - u);
                    (z.tanh(), -theta * sech2(z))
                } else {
                    (1.0, 0.0)
                };
                let chi = 0.5 * (left + right);
                let dchi = 0.5 * (dleft + dright);
                if chi == 0.0 && dchi == 0.0 {
                    return 0.0;
                }
                self.slopes[k] * chi + self.lambda_segment(k, u) * dchi
            })
            .sum()
    }

    /// Minimizers of `𝒥(u, μ) = ε 𝓛(u) - μ u` over `[-1, 1]`, with the exact
    /// (unsmoothed) penalty.
    pub fn hamiltonian_argmin(&self, mu: f64) -> Argmin {
        self.argmin_with_band(mu, 0.0)
    }

    /// Like [`hamiltonian_argmin`](Self::hamiltonian_argmin) but treats every
    /// `μ` within `band` of a tie `ε p_k` as that tie.
    pub fn argmin_with_band(&self, mu: f64, band: f64) -> Argmin {
        let levels = self.set.levels();
        let thresholds = self.slopes.iter().map(|p| self.epsilon * p);
        let mut k = 0;
        for (j, threshold) in thresholds.enumerate() {
            if (mu - threshold).abs() <= band {
                return Argmin::Segment(levels[j], levels[j + 1]);
            }
            if mu > threshold {
                k = j + 1;
            }
        }
        Argmin::Level(levels[k])
    }

    /// Minimizers of `𝓛` itself.
    pub fn minimizers(&self) -> Argmin {
        self.hamiltonian_argmin(0.0)
    }

    /// True iff `𝓛` has a unique minimizer on `[-1, 1]`, i.e. no segment is
    /// flat.
    pub fn has_unique_minimizer(&self) -> bool {
        let scale = self.slopes.iter().fold(1.0_f64, |m, p| m.max(p.abs()));
        self.slopes.iter().all(|p| p.abs() > FLAT_SLOPE_TOL * scale)
    }

    /// `argmin_{|v| ≤ 1} ε 𝓛(v) + (v - z)² / (2 step)` for the exact penalty.
    pub fn prox(&self, z: f64, step: f64) -> f64 {
        let levels = self.set.levels();
        let shift = |k: usize| step * self.epsilon * self.slopes[k];
        if z - shift(0) <= -1.0 {
            return -1.0;
        }
        for k in 0..self.segments() {
            let v = z - shift(k);
            if v > levels[k] && v < levels[k + 1] {
                return v;
            }
            if k + 1 < self.segments() {
                let kink = levels[k + 1];
                if z - kink >= shift(k) && z - kink <= shift(k + 1) {
                    return kink;
                }
            }
        }
        1.0
    }
}

fn check_unit(u: f64) -> Result<()> {
    if u.abs() <= 1.0 + 1e-12 {
        Ok(())
    } else {
        Err(Error::Domain {
            what: "u",
            value: u,
            domain: "[-1, 1]",
        })
    }
}
