//! Topological feature detection from the running state history: state
//! stagnation (local minima), small value gradients (plateaus), and sharp
//! gradient turns or ill-conditioned Hessians (high curvature).

use std::collections::VecDeque;
use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Feature classification `κ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FeatureKind {
    LocalMinimum,
    LowGradient,
    HighCurvature,
}

impl FeatureKind {
    pub fn code(self) -> u8 {
        match self {
            FeatureKind::LocalMinimum => 1,
            FeatureKind::LowGradient => 2,
            FeatureKind::HighCurvature => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            1 => Some(FeatureKind::LocalMinimum),
            2 => Some(FeatureKind::LowGradient),
            3 => Some(FeatureKind::HighCurvature),
            _ => None,
        }
    }

    /// Whether features of this kind carry a direction vector.
    pub fn is_directional(self) -> bool {
        !matches!(self, FeatureKind::LocalMinimum)
    }
}

impl Serialize for FeatureKind {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_u8(self.code())
    }
}

impl<'de> Deserialize<'de> for FeatureKind {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let code = u8::deserialize(d)?;
        FeatureKind::from_code(code)
            .ok_or_else(|| serde::de::Error::custom(format!("feature kind {code} not in 1..=3")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionThresholds {
    /// Stagnation when window variance is strictly below this.
    pub var: f64,
    /// Plateau when the value gradient norm is below this.
    pub grad: f64,
    /// Hessian condition-number bound (≥ 1).
    pub curv: f64,
    /// Gradient direction change, radians.
    pub angle: f64,
    /// Window length `K_w`.
    pub window: usize,
    pub cadence_grad: u64,
    pub cadence_curv: u64,
    /// Candidate radius gain `κ_r`.
    pub radius_gain: f64,
    /// Radius floor `r_min`.
    pub min_radius: f64,
    /// Finite-difference step for gradients and Hessians.
    pub fd_step: f64,
}

impl Default for DetectionThresholds {
    fn default() -> Self {
        Self {
            var: 0.01,
            grad: 0.01,
            curv: 100.0,
            angle: 1.0,
            window: 10,
            cadence_grad: 5,
            cadence_curv: 20,
            radius_gain: 2.5,
            min_radius: 0.05,
            fd_step: 1e-4,
        }
    }
}

impl DetectionThresholds {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.var >= 0.0) {
            problems.push("detection.var must be >= 0");
        }
        if !(self.grad >= 0.0) {
            problems.push("detection.grad must be >= 0");
        }
        if !(self.curv >= 1.0) {
            problems.push("detection.curv must be >= 1 (condition-number bound)");
        }
        if !(self.angle > 0.0 && self.angle <= PI) {
            problems.push("detection.angle must be in (0, pi]");
        }
        if self.window < 2 {
            problems.push("detection.window must be >= 2");
        }
        if self.cadence_grad == 0 || self.cadence_curv == 0 {
            problems.push("detection cadences must be >= 1");
        }
        if !(self.radius_gain > 0.0) || !(self.min_radius > 0.0) {
            problems.push("detection.radius_gain and detection.min_radius must be > 0");
        }
        if !(self.fd_step > 0.0) {
            problems.push("detection.fd_step must be > 0");
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(problems.join("; ")))
        }
    }
}

/// Ring buffer of the most recent states, oldest first.
#[derive(Debug, Clone)]
pub struct StateWindow {
    capacity: usize,
    entries: VecDeque<(u64, Vec<f64>)>,
}

impl StateWindow {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "window capacity must be positive");
        Self { capacity, entries: VecDeque::with_capacity(capacity) }
    }

    pub fn from_states(states: &[Vec<f64>]) -> Self {
        let mut w = Self::new(states.len().max(1));
        for (i, s) in states.iter().enumerate() {
            w.push(i as u64, s.clone());
        }
        w
    }

    pub fn push(&mut self, step: u64, state: Vec<f64>) {
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back((step, state));
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.entries.len() == self.capacity
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }

    pub fn states(&self) -> impl Iterator<Item = &[f64]> {
        self.entries.iter().map(|(_, s)| s.as_slice())
    }

    pub fn steps(&self) -> impl Iterator<Item = u64> + '_ {
        self.entries.iter().map(|(t, _)| *t)
    }

    pub fn latest(&self) -> Option<&[f64]> {
        self.entries.back().map(|(_, s)| s.as_slice())
    }

    pub fn mean(&self) -> Option<Vec<f64>> {
        let first = self.entries.front()?;
        let mut mean = vec![0.0; first.1.len()];
        for s in self.states() {
            for (m, v) in mean.iter_mut().zip(s) {
                *m += v;
            }
        }
        let k = self.entries.len() as f64;
        mean.iter_mut().for_each(|m| *m /= k);
        Some(mean)
    }

    /// RMS distance of the window states from their mean.
    pub fn spread(&self) -> f64 {
        state_variance(self).map_or(0.0, f64::sqrt)
    }
}

/// `(1/K) Σ ‖x_i − x̄‖²` over the window.
pub fn state_variance(window: &StateWindow) -> Result<f64> {
    if window.len() < 2 {
        return Err(Error::WindowUnderfilled { have: window.len(), need: 2 });
    }
    let mean = window.mean().expect("non-empty");
    let total: f64 = window
        .states()
        .map(|s| s.iter().zip(&mean).map(|(v, m)| (v - m) * (v - m)).sum::<f64>())
        .sum();
    Ok(total / window.len() as f64)
}

/// Stagnation test on a full window: variance strictly below `threshold`.
pub fn detect_stagnation(window: &StateWindow, threshold: f64) -> bool {
    window.is_full() && state_variance(window).is_ok_and(|v| v < threshold)
}

/// Central-difference gradient of `value` at `x`.
pub fn numeric_gradient<F: Fn(&[f64]) -> f64 + ?Sized>(
    value: &F,
    x: &[f64],
    h: f64,
) -> Result<Vec<f64>> {
    if !(h > 0.0) {
        return Err(Error::Contract(format!("finite-difference step must be > 0, got {h}")));
    }
    let mut probe = x.to_vec();
    let mut grad = vec![0.0; x.len()];
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let plus = value(&probe);
        probe[i] = x[i] - h;
        let minus = value(&probe);
        probe[i] = x[i];
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NonFinite("value during gradient evaluation"));
        }
        grad[i] = (plus - minus) / (2.0 * h);
    }
    Ok(grad)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Angle between consecutive gradient vectors, in `[0, π]`.
pub fn gradient_angle_change(now: &[f64], prev: &[f64]) -> Result<f64> {
    let (a, b) = (norm(now), norm(prev));
    if a == 0.0 || b == 0.0 {
        return Err(Error::UndefinedAngle);
    }
    let dot: f64 = now.iter().zip(prev).map(|(x, y)| x * y).sum();
    Ok((dot / (a * b)).clamp(-1.0, 1.0).acos())
}

/// Central-difference Hessian, symmetrized.
pub fn numeric_hessian<F: Fn(&[f64]) -> f64 + ?Sized>(
    value: &F,
    x: &[f64],
    h: f64,
) -> Result<DMatrix<f64>> {
    let n = x.len();
    let mut probe = x.to_vec();
    let eval = |probe: &mut Vec<f64>, i: usize, di: f64, j: usize, dj: f64| {
        probe[i] += di;
        probe[j] += dj;
        let v = value(probe);
        probe[i] = x[i];
        probe[j] = x[j];
        v
    };
    let centre = value(x);
    let mut hess = DMatrix::zeros(n, n);
    for i in 0..n {
        let plus = eval(&mut probe, i, h, i, 0.0);
        let minus = eval(&mut probe, i, -h, i, 0.0);
        hess[(i, i)] = (plus - 2.0 * centre + minus) / (h * h);
        for j in (i + 1)..n {
            let pp = eval(&mut probe, i, h, j, h);
            let pm = eval(&mut probe, i, h, j, -h);
            let mp = eval(&mut probe, i, -h, j, h);
            let mm = eval(&mut probe, i, -h, j, -h);
            let v = (pp - pm - mp + mm) / (4.0 * h * h);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    if hess.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("Hessian"));
    }
    Ok((&hess + hess.transpose()) * 0.5)
}

/// `max |λ| / min |λ|` of the central-difference Hessian; `+∞` when the
/// smallest magnitude is below `1e-12`.
pub fn hessian_condition<F: Fn(&[f64]) -> f64 + ?Sized>(
    value: &F,
    x: &[f64],
    h: f64,
) -> Result<f64> {
    let hess = numeric_hessian(value, x, h)?;
    let eig = hess.symmetric_eigen();
    let mags: Vec<f64> = eig.eigenvalues.iter().map(|v| v.abs()).collect();
    let max = mags.iter().copied().fold(0.0, f64::max);
    let min = mags.iter().copied().fold(f64::INFINITY, f64::min);
    if min < 1e-12 {
        return Ok(f64::INFINITY);
    }
    Ok(max / min)
}

/// A detected feature awaiting insertion into memory.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateFeature {
    pub position: Vec<f64>,
    pub kind: FeatureKind,
    pub direction: Option<Vec<f64>>,
    pub radius: f64,
}

impl CandidateFeature {
    pub fn new(
        position: Vec<f64>,
        kind: FeatureKind,
        direction: Option<Vec<f64>>,
        radius: f64,
    ) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::Contract(format!("candidate radius must be > 0, got {radius}")));
        }
        match (&direction, kind.is_directional()) {
            (Some(_), false) => {
                return Err(Error::Contract("local-minimum candidates carry no direction".into()))
            }
            (None, true) => {
                return Err(Error::Contract("directional candidate without direction".into()))
            }
            (Some(d), true) => {
                if d.len() != position.len() || (norm(d) - 1.0).abs() > 1e-9 {
                    return Err(Error::Contract("direction must be a unit vector".into()));
                }
            }
            (None, false) => {}
        }
        Ok(Self { position, kind, direction, radius })
    }
}

/// Signals evaluated at the current state on this step; absent entries were
/// not due at this cadence.
#[derive(Debug, Clone, Default)]
pub struct DetectionSignals {
    pub gradient: Option<Vec<f64>>,
    pub angle_change: Option<f64>,
    pub condition: Option<f64>,
}

/// Unit descent direction `−∇V/‖∇V‖`, or the first axis when the gradient
/// is (numerically) zero or unavailable.
pub fn fallback_direction(gradient: Option<&[f64]>, dim: usize) -> Vec<f64> {
    if let Some(g) = gradient {
        let n = norm(g);
        if n >= 1e-12 {
            return g.iter().map(|v| -v / n).collect();
        }
    }
    let mut axis = vec![0.0; dim];
    axis[0] = 1.0;
    axis
}

fn within(a: &[f64], b: &[f64], r: f64) -> bool {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() <= r * r
}

/// Rule-based classification with priority local minimum > low gradient >
/// high curvature. `goal` suppresses local-minimum and plateau candidates
/// within `2·r_min` of it.
pub fn classify(
    window: &StateWindow,
    signals: &DetectionSignals,
    thresholds: &DetectionThresholds,
    goal: Option<&[f64]>,
) -> Option<CandidateFeature> {
    let current = window.latest()?;
    let dim = current.len();
    let radius = thresholds.radius_gain * window.spread().max(thresholds.min_radius);
    let near_goal = |p: &[f64]| goal.is_some_and(|g| within(p, g, 2.0 * thresholds.min_radius));

    if detect_stagnation(window, thresholds.var) {
        let mean = window.mean().expect("full window");
        if near_goal(&mean) {
            return None;
        }
        return Some(CandidateFeature {
            position: mean,
            kind: FeatureKind::LocalMinimum,
            direction: None,
            radius,
        });
    }
    if let Some(g) = &signals.gradient {
        if norm(g) < thresholds.grad && !near_goal(current) {
            return Some(CandidateFeature {
                position: current.to_vec(),
                kind: FeatureKind::LowGradient,
                direction: Some(fallback_direction(Some(g), dim)),
                radius,
            });
        }
    }
    let turned = signals.angle_change.is_some_and(|a| a > thresholds.angle);
    let ill_conditioned = signals.condition.is_some_and(|c| c > thresholds.curv);
    if turned || ill_conditioned {
        return Some(CandidateFeature {
            position: current.to_vec(),
            kind: FeatureKind::HighCurvature,
            direction: Some(fallback_direction(signals.gradient.as_deref(), dim)),
            radius,
        });
    }
    None
}

/// Unit displacement from `centre` to the first recorded state farther than
/// `radius` from it.
pub fn escape_direction<'a, I>(history: I, centre: &[f64], radius: f64) -> Result<Vec<f64>>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    for s in history {
        if !within(s, centre, radius) {
            let d: Vec<f64> = s.iter().zip(centre).map(|(a, b)| a - b).collect();
            let n = norm(&d);
            return Ok(d.into_iter().map(|v| v / n).collect());
        }
    }
    Err(Error::DirectionUnavailable)
}

/// What the detector concluded on one step.
#[derive(Debug, Clone, Default)]
pub struct DetectionOutcome {
    pub stagnating: bool,
    pub candidate: Option<CandidateFeature>,
    pub signals: DetectionSignals,
}

/// Stateful detector run once per control step on feature-space states.
#[derive(Debug, Clone)]
pub struct Detector {
    thresholds: DetectionThresholds,
    window: StateWindow,
    last_gradient: Option<Vec<f64>>,
    observed: u64,
}

impl Detector {
    pub fn new(thresholds: DetectionThresholds) -> Self {
        let window = StateWindow::new(thresholds.window);
        Self { thresholds, window, last_gradient: None, observed: 0 }
    }

    pub fn thresholds(&self) -> &DetectionThresholds {
        &self.thresholds
    }

    pub fn window(&self) -> &StateWindow {
        &self.window
    }

    pub fn reset(&mut self) {
        self.window.clear();
        self.last_gradient = None;
        self.observed = 0;
    }

    /// Records `z` and only checks stagnation.
    pub fn observe_stagnation(&mut self, step: u64, z: &[f64]) -> bool {
        self.window.push(step, z.to_vec());
        self.observed += 1;
        detect_stagnation(&self.window, self.thresholds.var)
    }

    /// Records `z` and runs every check due this step.
    ///
    /// `gradient` supplies `∇V` (analytic or numeric); `value` is used for
    /// the Hessian.
    pub fn observe<V, G>(
        &mut self,
        step: u64,
        z: &[f64],
        value: &V,
        gradient: &G,
        goal: Option<&[f64]>,
    ) -> DetectionOutcome
    where
        V: Fn(&[f64]) -> f64 + ?Sized,
        G: Fn(&[f64]) -> Option<Vec<f64>> + ?Sized,
    {
        self.window.push(step, z.to_vec());
        let tick = self.observed;
        self.observed += 1;
        let stagnating = detect_stagnation(&self.window, self.thresholds.var);

        let mut signals = DetectionSignals::default();
        let curv_due = tick.is_multiple_of(self.thresholds.cadence_curv);
        let grad_due = tick.is_multiple_of(self.thresholds.cadence_grad) || curv_due;
        if grad_due {
            if let Some(g) = gradient(z) {
                if let Some(prev) = &self.last_gradient {
                    signals.angle_change = gradient_angle_change(&g, prev).ok();
                }
                self.last_gradient = Some(g.clone());
                signals.gradient = Some(g);
            }
        }
        if curv_due {
            signals.condition = hessian_condition(value, z, self.thresholds.fd_step).ok();
        }
        let candidate = if self.window.is_full() {
            classify(&self.window, &signals, &self.thresholds, goal)
        } else {
            None
        };
        DetectionOutcome { stagnating, candidate, signals }
    }
}
