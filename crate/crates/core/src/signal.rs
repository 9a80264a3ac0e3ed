//! Staircase signals on the half period `[0, π)` and their odd Fourier
//! coefficients.
//!
//! A signal is stored by its waveform `s_0 … s_M` and switching angles
//! `φ_1 < … < φ_M`, with implicit `φ_0 = 0` and `φ_{M+1} = π`. Each level is
//! held on the half-open interval `[φ_m, φ_{m+1})`. The second half period is
//! never stored: `u(t + π) = -u(t)` generates it on demand.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Two levels closer than this are the same level.
pub const LEVEL_TOL: f64 = 1e-12;

/// Switching angles closer than this (to each other, to 0 or to π) are
/// rejected as degenerate steps.
pub const MIN_ANGLE_SEPARATION: f64 = 1e-9;

/// The finite set of admissible signal values, `-1 = u_1 < … < u_L = 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ControlSet {
    levels: Vec<f64>,
}

impl ControlSet {
    pub fn new(levels: Vec<f64>) -> Result<Self> {
        if levels.len() < 2 {
            return Err(Error::ControlSet(format!(
                "need at least 2 levels, got {}",
                levels.len()
            )));
        }
        if levels.iter().any(|v| !v.is_finite()) {
            return Err(Error::ControlSet("levels must be finite".into()));
        }
        if levels[0] != -1.0 || levels[levels.len() - 1] != 1.0 {
            return Err(Error::ControlSet(format!(
                "levels must start at -1 and end at 1, got {:?}",
                levels
            )));
        }
        if levels.windows(2).any(|w| w[1] - w[0] <= LEVEL_TOL) {
            return Err(Error::ControlSet(format!(
                "levels must be strictly increasing, got {:?}",
                levels
            )));
        }
        Ok(Self { levels })
    }

    /// `{-1, 1}`.
    pub fn bilevel() -> Self {
        Self {
            levels: vec![-1.0, 1.0],
        }
    }

    /// `count` equally spaced levels on `[-1, 1]`.
    pub fn equispaced(count: usize) -> Result<Self> {
        if count < 2 {
            return Self::new(vec![]);
        }
        let step = 2.0 / (count - 1) as f64;
        let mut levels: Vec<f64> = (0..count).map(|k| -1.0 + step * k as f64).collect();
        levels[count - 1] = 1.0;
        Self::new(levels)
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn index_of(&self, value: f64) -> Option<usize> {
        self.levels
            .iter()
            .position(|&level| (level - value).abs() <= LEVEL_TOL)
    }

    pub fn contains(&self, value: f64) -> bool {
        self.index_of(value).is_some()
    }

    /// Index of the closest level and the distance to it.
    pub fn nearest(&self, value: f64) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for (k, &level) in self.levels.iter().enumerate() {
            let d = (level - value).abs();
            if d < best.1 {
                best = (k, d);
            }
        }
        best
    }
}

impl TryFrom<Vec<f64>> for ControlSet {
    type Error = Error;

    fn try_from(levels: Vec<f64>) -> Result<Self> {
        Self::new(levels)
    }
}

impl From<ControlSet> for Vec<f64> {
    fn from(set: ControlSet) -> Self {
        set.levels
    }
}

/// The harmonic index sets whose cosine (`cos`) and sine (`sin`)
/// coefficients are prescribed.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawHarmonics", into = "RawHarmonics")]
pub struct HarmonicSpec {
    cos: Vec<u32>,
    sin: Vec<u32>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawHarmonics {
    cos: Vec<u32>,
    sin: Vec<u32>,
}

impl TryFrom<RawHarmonics> for HarmonicSpec {
    type Error = Error;

    fn try_from(raw: RawHarmonics) -> Result<Self> {
        Self::new(raw.cos, raw.sin)
    }
}

impl From<HarmonicSpec> for RawHarmonics {
    fn from(spec: HarmonicSpec) -> Self {
        RawHarmonics {
            cos: spec.cos,
            sin: spec.sin,
        }
    }
}

impl HarmonicSpec {
    pub fn new(cos: Vec<u32>, sin: Vec<u32>) -> Result<Self> {
        for (name, set) in [("cos", &cos), ("sin", &sin)] {
            if let Some(&j) = set.iter().find(|&&j| j == 0 || j % 2 == 0) {
                return Err(Error::Harmonics(format!(
                    "{name} index {j} must be odd and positive"
                )));
            }
            let mut sorted = set.clone();
            sorted.sort_unstable();
            if sorted.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::Harmonics(format!("duplicate {name} index")));
            }
        }
        if cos.is_empty() && sin.is_empty() {
            return Err(Error::Harmonics("no harmonics selected".into()));
        }
        Ok(Self { cos, sin })
    }

    /// The same odd indices for both the cosine and the sine set.
    pub fn symmetric(indices: &[u32]) -> Result<Self> {
        Self::new(indices.to_vec(), indices.to_vec())
    }

    pub fn cos_indices(&self) -> &[u32] {
        &self.cos
    }

    pub fn sin_indices(&self) -> &[u32] {
        &self.sin
    }

    /// `N = N_a + N_b`.
    pub fn dim(&self) -> usize {
        self.cos.len() + self.sin.len()
    }
}

/// A pair of coefficient vectors laid out like a [`HarmonicSpec`]: `a` for
/// the cosine indices, `b` for the sine indices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Coefficients {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

/// Prescribed coefficients `a_T`, `b_T`.
pub type FourierTargets = Coefficients;

impl Coefficients {
    pub fn zeros(spec: &HarmonicSpec) -> Self {
        Self {
            a: vec![0.0; spec.cos.len()],
            b: vec![0.0; spec.sin.len()],
        }
    }

    /// Splits a stacked `[a; b]` vector.
    pub fn from_stacked(spec: &HarmonicSpec, stacked: &[f64]) -> Result<Self> {
        if stacked.len() != spec.dim() {
            return Err(Error::Dimension(format!(
                "stacked vector has {} entries, harmonics need {}",
                stacked.len(),
                spec.dim()
            )));
        }
        let (a, b) = stacked.split_at(spec.cos.len());
        Ok(Self {
            a: a.to_vec(),
            b: b.to_vec(),
        })
    }

    pub fn check_against(&self, spec: &HarmonicSpec) -> Result<()> {
        if self.a.len() != spec.cos.len() || self.b.len() != spec.sin.len() {
            return Err(Error::Dimension(format!(
                "targets have {}+{} entries, harmonics have {}+{}",
                self.a.len(),
                self.b.len(),
                spec.cos.len(),
                spec.sin.len()
            )));
        }
        if self.a.iter().chain(&self.b).any(|v| !v.is_finite()) {
            return Err(Error::Dimension("targets must be finite".into()));
        }
        Ok(())
    }

    pub fn stacked(&self) -> Vec<f64> {
        self.a.iter().chain(&self.b).copied().collect()
    }

    /// Euclidean distance between the stacked vectors.
    pub fn distance(&self, other: &Self) -> f64 {
        self.stacked()
            .iter()
            .zip(other.stacked())
            .map(|(x, y)| (x - y).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

/// A staircase signal: waveform levels and switching angles in `(0, π)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSignal", into = "RawSignal")]
pub struct StaircaseSignal {
    levels: ControlSet,
    waveform: Vec<f64>,
    angles: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSignal {
    levels: ControlSet,
    waveform: Vec<f64>,
    angles: Vec<f64>,
}

impl TryFrom<RawSignal> for StaircaseSignal {
    type Error = Error;

    fn try_from(raw: RawSignal) -> Result<Self> {
        Self::new(raw.levels, raw.waveform, raw.angles)
    }
}

impl From<StaircaseSignal> for RawSignal {
    fn from(signal: StaircaseSignal) -> Self {
        RawSignal {
            levels: signal.levels,
            waveform: signal.waveform,
            angles: signal.angles,
        }
    }
}

impl StaircaseSignal {
    pub fn new(levels: ControlSet, waveform: Vec<f64>, angles: Vec<f64>) -> Result<Self> {
        if waveform.len() != angles.len() + 1 {
            return Err(Error::Signal(format!(
                "{} levels need {} angles, got {}",
                waveform.len(),
                waveform.len().saturating_sub(1),
                angles.len()
            )));
        }
        if let Some(&s) = waveform.iter().find(|&&s| !levels.contains(s)) {
            return Err(Error::Signal(format!(
                "waveform value {s} is not in the control set"
            )));
        }
        if waveform.windows(2).any(|w| (w[0] - w[1]).abs() <= LEVEL_TOL) {
            return Err(Error::Signal(
                "consecutive waveform values must differ".into(),
            ));
        }
        let mut previous = 0.0;
        for &phi in angles.iter().chain(std::iter::once(&PI)) {
            if !phi.is_finite() || phi - previous < MIN_ANGLE_SEPARATION {
                return Err(Error::Signal(format!(
                    "angles must satisfy 0 < φ_1 < … < φ_M < π with separation ≥ {MIN_ANGLE_SEPARATION}, got {angles:?}"
                )));
            }
            previous = phi;
        }
        // snap to the canonical level values so equality checks are exact
        let waveform = waveform
            .into_iter()
            .map(|s| levels.levels()[levels.nearest(s).0])
            .collect();
        Ok(Self {
            levels,
            waveform,
            angles,
        })
    }

    pub fn constant(levels: ControlSet, value: f64) -> Result<Self> {
        Self::new(levels, vec![value], vec![])
    }

    pub fn levels(&self) -> &ControlSet {
        &self.levels
    }

    pub fn waveform(&self) -> &[f64] {
        &self.waveform
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    /// Number of switches `M`.
    pub fn switches(&self) -> usize {
        self.angles.len()
    }

    /// `(s_m, φ_m, φ_{m+1})` for `m = 0 … M`.
    pub fn pieces(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.waveform.iter().enumerate().map(move |(m, &s)| {
            let start = if m == 0 { 0.0 } else { self.angles[m - 1] };
            let end = self.angles.get(m).copied().unwrap_or(PI);
            (s, start, end)
        })
    }

    /// Value of the half-wave symmetric extension at `t ∈ [0, 2π)`.
    pub fn evaluate(&self, t: f64) -> Result<f64> {
        if !(0.0..2.0 * PI).contains(&t) {
            return Err(Error::Domain {
                what: "t",
                value: t,
                domain: "[0, 2π)",
            });
        }
        if t < PI {
            Ok(self.value_on_half(t))
        } else {
            Ok(-self.value_on_half(t - PI))
        }
    }

    /// Value on `[0, π]`, right-continuous inside and left-continuous at π.
    pub fn value_on_half(&self, t: f64) -> f64 {
        let m = self.angles.partition_point(|&phi| phi <= t);
        self.waveform[m]
    }

    /// The mirrored signal `t ↦ u(π - t)`: reversed waveform, angles `π - φ`.
    pub fn mirrored(&self) -> Result<Self> {
        let waveform = self.waveform.iter().rev().copied().collect();
        let angles = self.angles.iter().rev().map(|phi| PI - phi).collect();
        Self::new(self.levels.clone(), waveform, angles)
    }
}

/// Closed-form coefficients of a staircase signal:
///
/// ```text
/// a_j = 2/(jπ) Σ_m s_m [sin(jφ_{m+1}) - sin(jφ_m)]
/// b_j = 2/(jπ) Σ_m s_m [cos(jφ_m) - cos(jφ_{m+1})]
/// ```
pub fn fourier_closed_form(signal: &StaircaseSignal, spec: &HarmonicSpec) -> Coefficients {
    let a = spec
        .cos_indices()
        .iter()
        .map(|&j| {
            let j = j as f64;
            let sum: f64 = signal
                .pieces()
                .map(|(s, lo, hi)| s * ((j * hi).sin() - (j * lo).sin()))
                .sum();
            2.0 / (j * PI) * sum
        })
        .collect();
    let b = spec
        .sin_indices()
        .iter()
        .map(|&j| {
            let j = j as f64;
            let sum: f64 = signal
                .pieces()
                .map(|(s, lo, hi)| s * ((j * lo).cos() - (j * hi).cos()))
                .sum();
            2.0 / (j * PI) * sum
        })
        .collect();
    Coefficients { a, b }
}

/// Composite trapezoid approximation of `a_j = 2/π ∫_0^π u cos(jτ) dτ` and
/// `b_j = 2/π ∫_0^π u sin(jτ) dτ` on `nodes` equally spaced nodes
/// (endpoints included).
pub fn fourier_quadrature<F>(u: F, spec: &HarmonicSpec, nodes: usize) -> Result<Coefficients>
where
    F: Fn(f64) -> f64,
{
    if nodes < 2 {
        return Err(Error::Domain {
            what: "nodes",
            value: nodes as f64,
            domain: "[2, ∞)",
        });
    }
    let h = PI / (nodes - 1) as f64;
    let mut a = vec![0.0; spec.cos_indices().len()];
    let mut b = vec![0.0; spec.sin_indices().len()];
    for i in 0..nodes {
        let t = if i == nodes - 1 { PI } else { i as f64 * h };
        let weight = if i == 0 || i == nodes - 1 { 0.5 * h } else { h };
        let value = u(t);
        if value == 0.0 {
            continue;
        }
        let wv = weight * value;
        for (acc, &j) in a.iter_mut().zip(spec.cos_indices()) {
            *acc += wv * (j as f64 * t).cos();
        }
        for (acc, &j) in b.iter_mut().zip(spec.sin_indices()) {
            *acc += wv * (j as f64 * t).sin();
        }
    }
    let scale = 2.0 / PI;
    a.iter_mut().chain(b.iter_mut()).for_each(|c| *c *= scale);
    Ok(Coefficients { a, b })
}

/// Coefficients `(1/π ∫_0^{2π} u cos(jt), 1/π ∫_0^{2π} u sin(jt))` of the full
/// period by the periodic trapezoid rule on `nodes` points. Any index `j ≥ 1`
/// is accepted, including even ones.
pub fn full_period_coefficient(signal: &StaircaseSignal, j: u32, nodes: usize) -> (f64, f64) {
    let h = 2.0 * PI / nodes as f64;
    let (mut a, mut b) = (0.0, 0.0);
    for i in 0..nodes {
        let t = i as f64 * h;
        // nodes are in [0, 2π) by construction
        let value = signal.evaluate(t).unwrap_or(0.0);
        a += value * (j as f64 * t).cos();
        b += value * (j as f64 * t).sin();
    }
    (a * h / PI, b * h / PI)
}

/// True iff no level of `set` lies strictly between two consecutive waveform
/// values. Signals whose values are not all in `set` are not staircase.
pub fn is_staircase(signal: &StaircaseSignal, set: &ControlSet) -> bool {
    let indices: Option<Vec<usize>> = signal.waveform().iter().map(|&s| set.index_of(s)).collect();
    match indices {
        Some(indices) => indices.windows(2).all(|w| w[0].abs_diff(w[1]) == 1),
        None => false,
    }
}
