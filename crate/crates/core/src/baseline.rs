//! The classical fixed-waveform approach: pick a waveform, then fit its
//! switching angles to the targets by least squares.
//!
//! For a waveform `s_0, …, s_M` and angles `0 < φ_1 < … < φ_M < π`, summation
//! by parts gives, for odd `j`,
//!
//! ```text
//! a_j = 2/(jπ) Σ_m (s_{m-1} - s_m) sin(j φ_m)
//! b_j = 2/(jπ) [s_0 + s_M - Σ_m (s_{m-1} - s_m) cos(j φ_m)]
//! ```
//!
//! The optimizer works on the increments `δ_1 = φ_1`, `δ_m = φ_m - φ_{m-1}`,
//! which turns the ordering constraint into a simplex-like set with a cheap
//! projection.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::signal::{is_staircase, Coefficients, ControlSet, FourierTargets, HarmonicSpec, StaircaseSignal};
use crate::{Error, Result};

/// Smallest gap kept between consecutive angles and at both ends.
const ANGLE_GAP: f64 = 1e-6;
const MAX_ITERS: usize = 5_000;

/// A waveform with the staircase property and exactly `M` switches.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WaveformCandidate {
    levels: Vec<f64>,
}

impl WaveformCandidate {
    pub fn new(set: &ControlSet, levels: Vec<f64>) -> Result<Self> {
        if levels.len() < 2 {
            return Err(Error::Signal("a waveform needs at least one switch".into()));
        }
        let angles: Vec<f64> = (1..levels.len()).map(|m| m as f64 * PI / levels.len() as f64).collect();
        let signal = StaircaseSignal::new(set.clone(), levels, angles)?;
        if !is_staircase(&signal, set) {
            return Err(Error::Signal(format!("waveform {:?} skips a level", signal.waveform())));
        }
        Ok(Self {
            levels: signal.waveform().to_vec(),
        })
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    /// `M`.
    pub fn switches(&self) -> usize {
        self.levels.len() - 1
    }

    /// Jump weights `s_{m-1} - s_m`, one per angle.
    fn jumps(&self) -> Vec<f64> {
        self.levels.windows(2).map(|w| w[0] - w[1]).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineResult {
    pub angles: Vec<f64>,
    /// `V_𝒮`, the best objective value found.
    pub optimal_value: f64,
    pub solved: bool,
}

/// `a_𝒮(Φ)`, `b_𝒮(Φ)`; angles are not checked.
pub fn waveform_coefficients(waveform: &WaveformCandidate, angles: &[f64], spec: &HarmonicSpec) -> Coefficients {
    let jumps = waveform.jumps();
    let s = waveform.levels();
    let ends = s[0] + s[s.len() - 1];
    let a = spec
        .cos_indices()
        .iter()
        .map(|&j| {
            let jf = j as f64;
            let sum: f64 = jumps.iter().zip(angles).map(|(d, phi)| d * (jf * phi).sin()).sum();
            2.0 / (jf * PI) * sum
        })
        .collect();
    let b = spec
        .sin_indices()
        .iter()
        .map(|&j| {
            let jf = j as f64;
            let sum: f64 = jumps.iter().zip(angles).map(|(d, phi)| d * (jf * phi).cos()).sum();
            2.0 / (jf * PI) * (ends - sum)
        })
        .collect();
    Coefficients { a, b }
}

fn check_angles(angles: &[f64], switches: usize) -> Result<()> {
    if angles.len() != switches {
        return Err(Error::Dimension(format!("{} angles for {switches} switches", angles.len())));
    }
    let ordered = angles.first().is_some_and(|&a| a > 0.0)
        && angles.last().is_some_and(|&a| a < PI)
        && angles.windows(2).all(|w| w[0] < w[1]);
    if !ordered {
        let bad = angles.iter().copied().find(|a| !(0.0..PI).contains(a)).unwrap_or(f64::NAN);
        return Err(Error::Domain {
            what: "angles",
            value: bad,
            domain: "0 < φ_1 < … < φ_M < π",
        });
    }
    Ok(())
}

/// Unchecked objective and gradient with respect to the angles.
fn objective(waveform: &WaveformCandidate, angles: &[f64], spec: &HarmonicSpec, targets: &FourierTargets) -> (f64, Vec<f64>) {
    let coeffs = waveform_coefficients(waveform, angles, spec);
    let jumps = waveform.jumps();
    let mut value = 0.0;
    let mut grad = vec![0.0; angles.len()];
    for ((&j, a), t) in spec.cos_indices().iter().zip(&coeffs.a).zip(&targets.a) {
        let r = a - t;
        value += r * r;
        for ((g, d), phi) in grad.iter_mut().zip(&jumps).zip(angles) {
            *g += 2.0 * r * 2.0 / PI * d * (j as f64 * phi).cos();
        }
    }
    for ((&j, b), t) in spec.sin_indices().iter().zip(&coeffs.b).zip(&targets.b) {
        let r = b - t;
        value += r * r;
        for ((g, d), phi) in grad.iter_mut().zip(&jumps).zip(angles) {
            *g += 2.0 * r * 2.0 / PI * d * (j as f64 * phi).sin();
        }
    }
    (value, grad)
}

/// `‖a_𝒮(Φ) - a_T‖² + ‖b_𝒮(Φ) - b_T‖²` and its gradient in `Φ`.
pub fn angle_objective(
    waveform: &WaveformCandidate,
    angles: &[f64],
    spec: &HarmonicSpec,
    targets: &FourierTargets,
) -> Result<(f64, Vec<f64>)> {
    targets.check_against(spec)?;
    check_angles(angles, waveform.switches())?;
    Ok(objective(waveform, angles, spec, targets))
}

/// Projection onto `{δ_m ≥ g, Σ δ_m ≤ π - g}`.
fn project_increments(delta: &mut [f64]) {
    let n = delta.len();
    let cap = PI - ANGLE_GAP * (n as f64 + 1.0);
    for d in delta.iter_mut() {
        *d = (*d - ANGLE_GAP).max(0.0);
    }
    if delta.iter().sum::<f64>() > cap {
        // Euclidean projection onto the simplex {y ≥ 0, Σ y = cap}
        let mut sorted = delta.to_vec();
        sorted.sort_by(|a, b| b.total_cmp(a));
        let mut cumulative = 0.0;
        let mut shift = 0.0;
        for (i, v) in sorted.iter().enumerate() {
            cumulative += v;
            let candidate = (cumulative - cap) / (i as f64 + 1.0);
            if v - candidate > 0.0 {
                shift = candidate;
            }
        }
        for d in delta.iter_mut() {
            *d = (*d - shift).max(0.0);
        }
    }
    for d in delta.iter_mut() {
        *d += ANGLE_GAP;
    }
}

fn to_angles(delta: &[f64]) -> Vec<f64> {
    delta
        .iter()
        .scan(0.0, |acc, d| {
            *acc += d;
            Some(*acc)
        })
        .collect()
}

fn to_increments(angles: &[f64]) -> Vec<f64> {
    let mut prev = 0.0;
    angles
        .iter()
        .map(|&a| {
            let d = a - prev;
            prev = a;
            d
        })
        .collect()
}

/// `M` sorted uniform angles in `(0, π)`.
pub fn random_angles(rng: &mut impl Rng, switches: usize) -> Vec<f64> {
    let mut angles: Vec<f64> = (0..switches).map(|_| rng.gen_range(0.0..PI)).collect();
    angles.sort_by(f64::total_cmp);
    let mut delta = to_increments(&angles);
    project_increments(&mut delta);
    to_angles(&delta)
}

/// Projected gradient with Barzilai-Borwein steps and monotone backtracking
/// on the increments, started from `angles`.
fn descend(waveform: &WaveformCandidate, angles: &[f64], spec: &HarmonicSpec, targets: &FourierTargets) -> (Vec<f64>, f64) {
    let mut delta = to_increments(angles);
    project_increments(&mut delta);
    let grad_delta = |g: &[f64]| {
        // ∂V/∂δ_i = Σ_{m ≥ i} ∂V/∂φ_m
        let mut out = g.to_vec();
        for i in (0..out.len().saturating_sub(1)).rev() {
            out[i] += out[i + 1];
        }
        out
    };
    let (mut value, g) = objective(waveform, &to_angles(&delta), spec, targets);
    let mut grad = grad_delta(&g);
    let mut step = 1.0;
    for _ in 0..MAX_ITERS {
        if value <= 1e-24 {
            break;
        }
        let mut accepted = None;
        let mut s = step;
        for _ in 0..50 {
            let mut trial: Vec<f64> = delta.iter().zip(&grad).map(|(d, g)| d - s * g).collect();
            project_increments(&mut trial);
            let diff2: f64 = trial.iter().zip(&delta).map(|(a, b)| (a - b).powi(2)).sum();
            if diff2 == 0.0 {
                break;
            }
            let (v, g) = objective(waveform, &to_angles(&trial), spec, targets);
            if v <= value - 1e-4 / (2.0 * s) * diff2 {
                accepted = Some((trial, v, grad_delta(&g)));
                break;
            }
            s *= 0.5;
        }
        let Some((next, v, next_grad)) = accepted else {
            break;
        };
        let (mut ss, mut sy) = (0.0, 0.0);
        for i in 0..delta.len() {
            let ds = next[i] - delta[i];
            ss += ds * ds;
            sy += ds * (next_grad[i] - grad[i]);
        }
        step = if sy > 0.0 { (ss / sy).clamp(1e-10, 1e6) } else { 1e3 };
        let converged = ss.sqrt() <= 1e-15;
        delta = next;
        value = v;
        grad = next_grad;
        if converged {
            break;
        }
    }
    (to_angles(&delta), value)
}

/// Best of `restarts` descents from the given random source.
pub fn optimize_angles_with(
    waveform: &WaveformCandidate,
    spec: &HarmonicSpec,
    targets: &FourierTargets,
    restarts: usize,
    rng: &mut impl Rng,
    solved_tol: f64,
) -> Result<BaselineResult> {
    targets.check_against(spec)?;
    let mut best: Option<(Vec<f64>, f64)> = None;
    for _ in 0..restarts.max(1) {
        let start = random_angles(rng, waveform.switches());
        let (angles, value) = descend(waveform, &start, spec, targets);
        if best.as_ref().is_none_or(|b| value < b.1) {
            best = Some((angles, value));
        }
    }
    let (angles, optimal_value) = best.expect("at least one restart");
    Ok(BaselineResult {
        solved: optimal_value <= solved_tol,
        angles,
        optimal_value,
    })
}

/// Multistart fit with a generator seeded by `seed`; solved means
/// `V ≤ 1e-8`.
pub fn optimize_angles(
    waveform: &WaveformCandidate,
    spec: &HarmonicSpec,
    targets: &FourierTargets,
    restarts: usize,
    seed: u64,
) -> Result<BaselineResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    optimize_angles_with(waveform, spec, targets, restarts, &mut rng, 1e-8)
}

/// Number of staircase waveforms with `switches` switches over `set`.
pub fn count_waveforms(set: &ControlSet, switches: usize) -> u128 {
    let n = set.len();
    let mut ways = vec![1u128; n];
    for _ in 0..switches {
        ways = (0..n)
            .map(|k| {
                let down = if k > 0 { ways[k - 1] } else { 0 };
                let up = if k + 1 < n { ways[k + 1] } else { 0 };
                down.saturating_add(up)
            })
            .collect();
    }
    ways.iter().fold(0u128, |acc, w| acc.saturating_add(*w))
}

/// Every waveform with exactly `switches` adjacent-level moves, refusing to
/// build more than `budget` of them.
pub fn enumerate_waveforms(set: &ControlSet, switches: usize, budget: u128) -> Result<Vec<WaveformCandidate>> {
    if switches == 0 {
        return Err(Error::Signal("need at least one switch".into()));
    }
    let count = count_waveforms(set, switches);
    if count > budget {
        return Err(Error::Budget { count, budget });
    }
    let n = set.len();
    let mut paths: Vec<Vec<usize>> = (0..n).map(|k| vec![k]).collect();
    for _ in 0..switches {
        paths = paths
            .into_iter()
            .flat_map(|p| {
                let last = *p.last().expect("nonempty");
                [last.checked_sub(1), (last + 1 < n).then_some(last + 1)]
                    .into_iter()
                    .flatten()
                    .map(move |next| {
                        let mut q = p.clone();
                        q.push(next);
                        q
                    })
            })
            .collect();
    }
    Ok(paths
        .into_iter()
        .map(|p| WaveformCandidate {
            levels: p.into_iter().map(|k| set.levels()[k]).collect(),
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanCell {
    pub waveform_id: usize,
    pub target_index: usize,
    pub result: BaselineResult,
}

/// Fits every waveform to every target, in parallel. Each cell draws its
/// restarts from its own stream of the seed, so results do not depend on
/// scheduling. Cells are ordered waveform-major.
pub fn solvable_set_scan(
    waveforms: &[WaveformCandidate],
    spec: &HarmonicSpec,
    targets: &[FourierTargets],
    restarts: usize,
    seed: u64,
    solved_tol: f64,
) -> Result<Vec<ScanCell>> {
    for t in targets {
        t.check_against(spec)?;
    }
    let cells: Vec<(usize, usize)> = (0..waveforms.len())
        .flat_map(|w| (0..targets.len()).map(move |t| (w, t)))
        .collect();
    cells
        .into_par_iter()
        .map(|(w, t)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(((w as u64) << 32) | t as u64);
            let result = optimize_angles_with(&waveforms[w], spec, &targets[t], restarts, &mut rng, solved_tol)?;
            Ok(ScanCell {
                waveform_id: w,
                target_index: t,
                result,
            })
        })
        .collect()
}

/// `solved[waveform][target]`.
pub fn solved_matrix(cells: &[ScanCell], waveforms: usize, targets: usize) -> Vec<Vec<bool>> {
    let mut out = vec![vec![false; targets]; waveforms];
    for c in cells {
        out[c.waveform_id][c.target_index] = c.result.solved;
    }
    out
}

/// `waveform_id,target_index,V,solved,angles` with angles joined by `;`.
pub fn scan_csv(cells: &[ScanCell]) -> String {
    let mut out = String::from("waveform_id,target_index,V,solved,angles\n");
    for c in cells {
        let angles: Vec<String> = c.result.angles.iter().map(|a| a.to_string()).collect();
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            c.waveform_id,
            c.target_index,
            c.result.optimal_value,
            c.result.solved,
            angles.join(";")
        ));
    }
    out
}
