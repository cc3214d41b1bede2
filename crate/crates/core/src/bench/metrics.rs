//! Episode metrics: trap events, escape rate, trap frequency, sample
//! efficiency, value consistency, and summary statistics.
//!
//! Everything here is a pure function of logged values, so a summary can be
//! recomputed from persisted logs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::memory::distance;

/// Parameters of the trap-state test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrapCriteria {
    /// `T_threshold`: minimum trapped duration in steps.
    pub min_duration: usize,
    /// A state is low-return when `exp(−(V − V_goal)/value_scale)` is below
    /// this fraction of the value at the goal.
    pub value_threshold_frac: f64,
    /// Improvement must exceed `improvement_tol · value_scale`.
    pub improvement_tol: f64,
    /// Neighborhood radius as a multiple of the positional spread over the
    /// first `spread_window` states of a candidate interval.
    pub neighborhood_gain: f64,
    pub spread_window: usize,
    /// Fixed neighborhood radius; overrides the spread rule when set.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub neighborhood_radius: Option<f64>,
    /// Lower bound on the spread-derived radius.
    pub min_radius: f64,
}

impl Default for TrapCriteria {
    fn default() -> Self {
        Self {
            min_duration: 50,
            value_threshold_frac: 0.5,
            improvement_tol: 1e-6,
            neighborhood_gain: 3.0,
            spread_window: 10,
            neighborhood_radius: None,
            min_radius: 0.05,
        }
    }
}

impl TrapCriteria {
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if self.min_duration == 0 {
            bad.push("min_duration must be >= 1");
        }
        if !(self.value_threshold_frac > 0.0 && self.value_threshold_frac <= 1.0) {
            bad.push("value_threshold_frac must be in (0, 1]");
        }
        if !(self.improvement_tol >= 0.0) {
            bad.push("improvement_tol must be >= 0");
        }
        if !(self.neighborhood_gain > 0.0) {
            bad.push("neighborhood_gain must be > 0");
        }
        if self.spread_window == 0 {
            bad.push("spread_window must be >= 1");
        }
        if let Some(r) = self.neighborhood_radius {
            if !(r > 0.0) {
                bad.push("neighborhood_radius must be > 0");
            }
        }
        if !(self.min_radius >= 0.0) {
            bad.push("min_radius must be >= 0");
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(bad.join("; ")))
        }
    }
}

/// Feature-space positions and base values along one episode, plus the
/// landscape constants the trap test needs.
#[derive(Debug, Clone)]
pub struct TrapTrace<'a> {
    pub features: &'a [Vec<f64>],
    pub values: &'a [f64],
    pub goal_value: f64,
    pub value_scale: f64,
}

impl TrapTrace<'_> {
    fn len(&self) -> usize {
        self.values.len().min(self.features.len())
    }

    fn low_return(&self, t: usize, frac: f64) -> bool {
        let q = (-(self.values[t] - self.goal_value) / self.value_scale).exp();
        q < frac
    }

    fn tolerance(&self, c: &TrapCriteria) -> f64 {
        c.improvement_tol * self.value_scale
    }

    /// Neighborhood radius for an interval starting at `start`.
    fn radius(&self, start: usize, c: &TrapCriteria) -> f64 {
        if let Some(r) = c.neighborhood_radius {
            return r;
        }
        let end = (start + c.spread_window).min(self.len());
        let window = &self.features[start..end];
        let dim = window[0].len();
        let n = window.len() as f64;
        let mut var = 0.0;
        for i in 0..dim {
            let mean = window.iter().map(|z| z[i]).sum::<f64>() / n;
            var += window.iter().map(|z| (z[i] - mean).powi(2)).sum::<f64>() / n;
        }
        (c.neighborhood_gain * var.sqrt()).max(c.min_radius)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrapEvent {
    pub entry: usize,
    /// First step outside the trap, or `None` if it lasted to the end.
    pub exit: Option<usize>,
    pub length: usize,
    pub radius: f64,
    pub value: f64,
}

/// Maximal intervals that stay within the neighborhood of their entry
/// state, never improve the best value seen since entry, remain low-return,
/// and last at least `min_duration` steps.
pub fn detect_trap_episodes(trace: &TrapTrace<'_>, c: &TrapCriteria) -> Vec<TrapEvent> {
    let n = trace.len();
    let tol = trace.tolerance(c);
    let mut events = Vec::new();
    let mut s = 0;
    while s + c.min_duration <= n {
        if !trace.low_return(s, c.value_threshold_frac) {
            s += 1;
            continue;
        }
        let radius = trace.radius(s, c);
        let center = &trace.features[s];
        let mut best = trace.values[s];
        let mut t = s + 1;
        while t < n {
            let v = trace.values[t];
            if v < best - tol
                || distance(&trace.features[t], center) > radius
                || !trace.low_return(t, c.value_threshold_frac)
            {
                break;
            }
            best = best.min(v);
            t += 1;
        }
        let length = t - s;
        if length >= c.min_duration {
            events.push(TrapEvent {
                entry: s,
                exit: (t < n).then_some(t),
                length,
                radius,
                value: trace.values[s],
            });
            s = t;
        } else {
            s += 1;
        }
    }
    events
}

/// Whether an episode started at a trap state leaves the trap: some state is
/// outside the start neighborhood with a value below the start value.
pub fn escaped_from_start(trace: &TrapTrace<'_>, c: &TrapCriteria) -> bool {
    if trace.len() == 0 {
        return false;
    }
    let radius = trace.radius(0, c);
    let v0 = trace.values[0];
    let tol = trace.tolerance(c);
    (1..trace.len()).any(|t| {
        distance(&trace.features[t], &trace.features[0]) > radius && trace.values[t] < v0 - tol
    })
}

/// `P_escape`, in percent.
pub fn escape_rate(escaped: &[bool]) -> Result<f64> {
    if escaped.is_empty() {
        return Err(Error::Metric("escape rate over zero trials".into()));
    }
    Ok(percentage(escaped.iter().filter(|&&e| e).count(), escaped.len()))
}

/// `F_trap`, in percent of episodes with at least one trap event.
pub fn trap_frequency(trapped: &[bool]) -> Result<f64> {
    if trapped.is_empty() {
        return Err(Error::Metric("trap frequency over zero episodes".into()));
    }
    Ok(percentage(trapped.iter().filter(|&&e| e).count(), trapped.len()))
}

fn percentage(hits: usize, total: usize) -> f64 {
    100.0 * hits as f64 / total as f64
}

/// `N_80%`: first index with `curve[n] ≥ 0.8 · asymptote`; `None` if never.
pub fn sample_efficiency(curve: &[f64], asymptote: f64) -> Option<usize> {
    let target = 0.8 * asymptote;
    curve.iter().position(|&r| r >= target)
}

/// Mean of the trailing `frac` of a curve (at least one point).
pub fn trailing_mean(curve: &[f64], frac: f64) -> Option<f64> {
    if curve.is_empty() {
        return None;
    }
    let k = ((curve.len() as f64 * frac).ceil() as usize).clamp(1, curve.len());
    let tail = &curve[curve.len() - k..];
    Some(tail.iter().sum::<f64>() / k as f64)
}

/// Pearson correlation of paired samples.
pub fn value_consistency(predicted: &[f64], realized: &[f64]) -> Result<f64> {
    if predicted.len() != realized.len() {
        return Err(Error::DimensionMismatch { expected: predicted.len(), got: realized.len() });
    }
    if predicted.len() < 2 {
        return Err(Error::Metric("value consistency needs at least two pairs".into()));
    }
    let a = two_pass(predicted);
    let b = two_pass(realized);
    if a.std == 0.0 || b.std == 0.0 {
        return Err(Error::Metric("value consistency undefined for zero variance".into()));
    }
    let n = predicted.len() as f64;
    let cov = predicted
        .iter()
        .zip(realized)
        .map(|(x, y)| (x - a.mean) * (y - b.mean))
        .sum::<f64>()
        / n;
    Ok((cov / (a.std * b.std)).clamp(-1.0, 1.0))
}

/// Realized cost-to-go over `horizon` steps, for every start that has a full
/// horizon ahead of it.
pub fn realized_cost_to_go(costs: &[f64], horizon: usize) -> Vec<f64> {
    if horizon == 0 || costs.len() < horizon {
        return Vec::new();
    }
    let mut out = Vec::with_capacity(costs.len() - horizon + 1);
    let mut acc: f64 = costs[..horizon].iter().sum();
    out.push(acc);
    for t in horizon..costs.len() {
        acc += costs[t] - costs[t - horizon];
        out.push(acc);
    }
    out
}

/// Population mean and standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

/// Welford's streaming accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunningStats {
    n: usize,
    mean: f64,
    m2: f64,
}

impl RunningStats {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn finish(&self) -> MeanStd {
        if self.n == 0 {
            return MeanStd { mean: f64::NAN, std: f64::NAN, n: 0 };
        }
        MeanStd { mean: self.mean, std: (self.m2 / self.n as f64).max(0.0).sqrt(), n: self.n }
    }
}

impl FromIterator<f64> for RunningStats {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = RunningStats::default();
        iter.into_iter().for_each(|x| s.push(x));
        s
    }
}

/// Reference two-pass mean and standard deviation.
pub fn two_pass(xs: &[f64]) -> MeanStd {
    if xs.is_empty() {
        return MeanStd { mean: f64::NAN, std: f64::NAN, n: 0 };
    }
    let n = xs.len() as f64;
    let rough = xs.iter().sum::<f64>() / n;
    // second pass corrects the rounding of the first
    let mean = rough + xs.iter().map(|x| x - rough).sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    MeanStd { mean, std: var.sqrt(), n: xs.len() }
}

/// Mann–Whitney probability that a draw from `a` is smaller than one from
/// `b`, ties counting half. `0.5` means no separation.
pub fn rank_auc(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Metric("rank comparison needs two non-empty samples".into()));
    }
    let mut pooled: Vec<(f64, bool)> =
        a.iter().map(|&x| (x, true)).chain(b.iter().map(|&x| (x, false))).collect();
    if pooled.iter().any(|(x, _)| x.is_nan()) {
        return Err(Error::NonFinite("rank comparison sample"));
    }
    pooled.sort_by(|x, y| x.0.total_cmp(&y.0));
    // average ranks over ties
    let mut rank_sum_b = 0.0;
    let mut i = 0;
    while i < pooled.len() {
        let mut j = i;
        while j < pooled.len() && pooled[j].0 == pooled[i].0 {
            j += 1;
        }
        let avg = (i + j + 1) as f64 / 2.0;
        rank_sum_b += avg * pooled[i..j].iter().filter(|(_, in_a)| !in_a).count() as f64;
        i = j;
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let u_b = rank_sum_b - nb * (nb + 1.0) / 2.0;
    Ok(u_b / (na * nb))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trace_of<'a>(features: &'a [Vec<f64>], values: &'a [f64]) -> TrapTrace<'a> {
        TrapTrace { features, values, goal_value: 0.0, value_scale: 1.0 }
    }

    #[test]
    fn frozen_segment_is_one_event() {
        // approach for 20 steps, freeze for 60, then move on to the goal
        let mut z = Vec::new();
        for i in 0..20 {
            z.push(vec![i as f64 * 0.5]);
        }
        for _ in 0..60 {
            z.push(vec![10.0]);
        }
        for i in 1..=20 {
            z.push(vec![10.0 + i as f64 * 0.5]);
        }
        let v: Vec<f64> = z.iter().map(|p| (20.0 - p[0]).abs()).collect();
        let events = detect_trap_episodes(&trace_of(&z, &v), &TrapCriteria::default());
        assert_eq!(events.len(), 1);
        assert_eq!((events[0].entry, events[0].length, events[0].exit), (20, 60, Some(80)));
    }

    #[test]
    fn short_segment_and_improving_run_have_no_events() {
        let mut z: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        z.extend((0..30).map(|_| vec![10.0]));
        z.extend((1..40).map(|i| vec![10.0 + i as f64]));
        let v: Vec<f64> = z.iter().map(|p| 100.0 - p[0]).collect();
        assert!(detect_trap_episodes(&trace_of(&z, &v), &TrapCriteria::default()).is_empty());

        let z: Vec<Vec<f64>> = (0..200).map(|i| vec![i as f64 * 0.01]).collect();
        let v: Vec<f64> = (0..200).map(|i| 10.0 - i as f64 * 0.01).collect();
        assert!(detect_trap_episodes(&trace_of(&z, &v), &TrapCriteria::default()).is_empty());
    }

    #[test]
    fn resting_at_the_goal_is_not_a_trap() {
        let z = vec![vec![0.0]; 100];
        let v = vec![0.0; 100];
        assert!(detect_trap_episodes(&trace_of(&z, &v), &TrapCriteria::default()).is_empty());
    }

    #[test]
    fn trap_until_the_end_has_no_exit() {
        let z = vec![vec![1.0, 1.0]; 70];
        let v = vec![5.0; 70];
        let e = detect_trap_episodes(&trace_of(&z, &v), &TrapCriteria::default());
        assert_eq!(e.len(), 1);
        assert_eq!((e[0].length, e[0].exit), (70, None));
    }

    #[test]
    fn escape_from_start() {
        let c = TrapCriteria::default();
        let stay = vec![vec![0.0]; 30];
        let v = vec![3.0; 30];
        assert!(!escaped_from_start(&trace_of(&stay, &v), &c));
        let mut away = stay.clone();
        away.push(vec![2.0]);
        let mut va = v.clone();
        va.push(1.0);
        assert!(escaped_from_start(&trace_of(&away, &va), &c));
        // leaving uphill is not an escape
        *va.last_mut().unwrap() = 4.0;
        assert!(!escaped_from_start(&trace_of(&away, &va), &c));
    }

    #[test]
    fn rates() {
        let seven: Vec<bool> = (0..10).map(|i| i < 7).collect();
        assert_eq!(escape_rate(&seven).unwrap(), 70.0);
        assert_eq!(escape_rate(&[true; 4]).unwrap(), 100.0);
        assert_eq!(escape_rate(&[false; 4]).unwrap(), 0.0);
        assert!(escape_rate(&[]).is_err());
        let two: Vec<bool> = (0..100).map(|i| i < 2).collect();
        assert_eq!(trap_frequency(&two).unwrap(), 2.0);
        assert_eq!(trap_frequency(&[false; 50]).unwrap(), 0.0);
        let many: Vec<bool> = (0..1000).map(|i| i < 57).collect();
        assert!((trap_frequency(&many).unwrap() - 5.7).abs() < 1e-12);
    }

    #[test]
    fn sample_efficiency_rule() {
        assert_eq!(sample_efficiency(&[0.0, 50.0, 80.0, 90.0, 100.0], 100.0), Some(2));
        assert_eq!(sample_efficiency(&[5.0; 4], 5.0), Some(0));
        assert_eq!(sample_efficiency(&[0.0, 10.0, 70.0], 100.0), None);
        assert_eq!(trailing_mean(&[1.0, 2.0, 3.0, 5.0], 0.5), Some(4.0));
    }

    #[test]
    fn pearson() {
        let a = [1.0, 2.0, 3.0];
        assert!((value_consistency(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        assert!((value_consistency(&a, &[-1.0, -2.0, -3.0]).unwrap() + 1.0).abs() < 1e-12);
        assert!((value_consistency(&a, &[2.0, 4.0, 6.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!(value_consistency(&a, &[1.0, 1.0, 1.0]).is_err());
        assert!(value_consistency(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn cost_to_go_windows() {
        assert_eq!(realized_cost_to_go(&[1.0, 2.0, 3.0, 4.0], 2), vec![3.0, 5.0, 7.0]);
        assert!(realized_cost_to_go(&[1.0], 2).is_empty());
    }

    #[test]
    fn streaming_matches_two_pass() {
        let xs: Vec<f64> = (0..1000).map(|i| ((i * 7919) % 113) as f64 * 0.37 + 1e6).collect();
        let a: RunningStats = xs.iter().copied().collect();
        let (a, b) = (a.finish(), two_pass(&xs));
        assert!((a.mean - b.mean).abs() < 1e-9 && (a.std - b.std).abs() < 1e-9);
        assert_eq!(a.n, b.n);
    }

    #[test]
    fn auc() {
        assert_eq!(rank_auc(&[1.0, 2.0], &[3.0, 4.0]).unwrap(), 1.0);
        assert_eq!(rank_auc(&[3.0, 4.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(rank_auc(&[1.0, 1.0], &[1.0]).unwrap(), 0.5);
        // of four pairs only the tie counts, as a half
        assert_eq!(rank_auc(&[2.0, 3.0], &[2.0, 1.0]).unwrap(), 0.125);
    }
}
