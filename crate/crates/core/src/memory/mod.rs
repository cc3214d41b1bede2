//! The evolving feature memory: novelty-checked insertion, same-kind
//! consolidation, strength growth and decay, pruning, and spatial queries.

mod kdtree;

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::detect::{CandidateFeature, FeatureKind};
use crate::error::{Error, Result};
use kdtree::BallTree;

/// One memorized topological feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MemoryFeature {
    pub id: u64,
    pub position: Vec<f64>,
    pub radius: f64,
    pub strength: f64,
    pub kind: FeatureKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<Vec<f64>>,
    pub last_inside_step: u64,
    pub created_step: u64,
}

impl MemoryFeature {
    pub fn distance_to(&self, x: &[f64]) -> f64 {
        distance(&self.position, x)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.distance_to(x) <= self.radius
    }
}

#[inline]
pub(crate) fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MemoryParams {
    /// `γ₀`, strength of a newly inserted feature.
    pub initial_strength: f64,
    pub max_strength: f64,
    /// `Δγ` per stagnating step inside a feature.
    pub strength_increment: f64,
    /// `β_decay` applied per step once a feature has been left alone.
    pub decay: f64,
    /// `t_threshold`: steps outside before decay starts.
    pub decay_after: u64,
    /// `γ_min`: features weaker than this are removed.
    pub min_strength: f64,
    /// `θ_merge` on `‖m_new − m_i‖ / r_i`.
    pub merge_ratio: f64,
    /// `θ_dist`: a non-merged candidate must be farther than this from
    /// every stored feature.
    pub novelty_distance: f64,
    pub capacity: usize,
}

impl Default for MemoryParams {
    fn default() -> Self {
        Self {
            initial_strength: 1.0,
            max_strength: 5.0,
            strength_increment: 0.1,
            decay: 0.99,
            decay_after: 100,
            min_strength: 0.1,
            merge_ratio: 1.5,
            novelty_distance: 0.1,
            capacity: 100,
        }
    }
}

impl MemoryParams {
    /// Robot-experiment preset: faster forgetting (`β_decay = 0.95`).
    pub fn fast_decay() -> Self {
        Self { decay: 0.95, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(0.0 < self.min_strength
            && self.min_strength < self.initial_strength
            && self.initial_strength <= self.max_strength)
        {
            problems.push("memory strengths must satisfy 0 < min < initial <= max");
        }
        if !(self.decay > 0.0 && self.decay < 1.0) {
            problems.push("memory.decay must be in (0, 1)");
        }
        if !(self.strength_increment >= 0.0) {
            problems.push("memory.strength_increment must be >= 0");
        }
        if !(self.merge_ratio > 0.0) {
            problems.push("memory.merge_ratio must be > 0");
        }
        if !(self.novelty_distance >= 0.0) {
            problems.push("memory.novelty_distance must be >= 0");
        }
        if self.capacity == 0 {
            problems.push("memory.capacity must be >= 1");
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(problems.join("; ")))
        }
    }
}

/// Consolidates `b` into `a` (same kind required).
///
/// Position is the strength-weighted mean, the radius grows to half the gap
/// plus the smaller radius (never below either input),
/// strengths add up to `max_strength`, and directions are averaged by
/// strength and renormalized (keeping `a`'s direction if they cancel).
pub fn merge(a: &MemoryFeature, b: &MemoryFeature, max_strength: f64) -> Result<MemoryFeature> {
    if a.kind != b.kind {
        return Err(Error::Contract(format!(
            "cannot merge kind {} into kind {}",
            b.kind.code(),
            a.kind.code()
        )));
    }
    if a.position.len() != b.position.len() {
        return Err(Error::DimensionMismatch { expected: a.position.len(), got: b.position.len() });
    }
    let (ga, gb) = (a.strength, b.strength);
    let total = ga + gb;
    let position: Vec<f64> =
        a.position.iter().zip(&b.position).map(|(x, y)| (ga * x + gb * y) / total).collect();
    let gap = distance(&a.position, &b.position);
    let radius = a.radius.max(b.radius).max(gap / 2.0 + a.radius.min(b.radius));
    let direction = match (&a.direction, &b.direction) {
        (Some(da), Some(db)) => {
            let sum: Vec<f64> = da.iter().zip(db).map(|(x, y)| ga * x + gb * y).collect();
            let n = norm(&sum);
            if n < 1e-12 {
                Some(da.clone())
            } else {
                Some(sum.into_iter().map(|v| v / n).collect())
            }
        }
        (Some(d), None) | (None, Some(d)) => Some(d.clone()),
        (None, None) => None,
    };
    Ok(MemoryFeature {
        id: a.id,
        position,
        radius,
        strength: total.min(max_strength),
        kind: a.kind,
        direction,
        last_inside_step: a.last_inside_step.max(b.last_inside_step),
        created_step: a.created_step,
    })
}

/// Result of offering a candidate to the store.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InsertOutcome {
    Merged { id: u64 },
    Added { id: u64, evicted: Option<u64> },
    /// Too close to an existing feature of a different kind.
    Dropped,
}

/// Bounded feature set with a lazily rebuilt spatial index.
#[derive(Debug, Clone)]
pub struct MemoryStore {
    params: MemoryParams,
    dim: usize,
    features: Vec<MemoryFeature>,
    step: u64,
    next_id: u64,
    index: BallTree,
    /// Features whose geometry changed (or that were added) since the last
    /// index build; scanned linearly.
    dirty: HashSet<u64>,
    slot: HashMap<u64, usize>,
    mutations: usize,
}

impl PartialEq for MemoryStore {
    fn eq(&self, other: &Self) -> bool {
        self.params == other.params
            && self.dim == other.dim
            && self.features == other.features
            && self.step == other.step
            && self.next_id == other.next_id
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StoreDocument {
    dim: usize,
    step: u64,
    next_id: u64,
    params: MemoryParams,
    features: Vec<MemoryFeature>,
}

impl MemoryStore {
    pub fn new(dim: usize, params: MemoryParams) -> Result<Self> {
        params.validate()?;
        if dim == 0 {
            return Err(Error::InvalidConfig("memory dimension must be >= 1".into()));
        }
        Ok(Self {
            params,
            dim,
            features: Vec::new(),
            step: 0,
            next_id: 0,
            index: BallTree::default(),
            dirty: HashSet::new(),
            slot: HashMap::new(),
            mutations: 0,
        })
    }

    pub fn params(&self) -> &MemoryParams {
        &self.params
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn features(&self) -> &[MemoryFeature] {
        &self.features
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn get(&self, id: u64) -> Option<&MemoryFeature> {
        self.slot.get(&id).map(|&i| &self.features[i])
    }

    pub fn clear(&mut self) {
        self.features.clear();
        self.rebuild();
    }

    /// Inserts a fully specified feature, bypassing merge and novelty rules
    /// (evicting the weakest feature at capacity). Used to seed memories.
    pub fn push_feature(&mut self, mut feature: MemoryFeature) -> Result<u64> {
        self.check_feature_shape(&feature)?;
        if !(feature.strength > 0.0 && feature.strength <= self.params.max_strength) {
            return Err(Error::Contract(format!(
                "strength {} outside (0, {}]",
                feature.strength, self.params.max_strength
            )));
        }
        if self.features.len() >= self.params.capacity {
            self.evict_weakest();
        }
        feature.id = self.next_id;
        self.next_id += 1;
        let id = feature.id;
        self.slot.insert(id, self.features.len());
        self.features.push(feature);
        self.touch(id);
        Ok(id)
    }

    fn check_feature_shape(&self, f: &MemoryFeature) -> Result<()> {
        if f.position.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: f.position.len() });
        }
        if !(f.radius > 0.0) || f.position.iter().any(|v| !v.is_finite()) {
            return Err(Error::Contract("feature needs finite position and radius > 0".into()));
        }
        match (&f.direction, f.kind.is_directional()) {
            (None, false) => Ok(()),
            (Some(d), true) if d.len() == self.dim && (norm(d) - 1.0).abs() <= 1e-9 => Ok(()),
            _ => Err(Error::Contract(format!(
                "kind {} direction invariant violated",
                f.kind.code()
            ))),
        }
    }

    fn touch(&mut self, id: u64) {
        self.dirty.insert(id);
        self.mutations += 1;
        if self.mutations > 16.max(self.features.len() / 4) {
            self.rebuild();
        }
    }

    fn rebuild(&mut self) {
        self.slot = self.features.iter().enumerate().map(|(i, f)| (f.id, i)).collect();
        let items: Vec<(u64, &[f64], f64)> =
            self.features.iter().map(|f| (f.id, f.position.as_slice(), f.radius)).collect();
        self.index = BallTree::build(self.dim, &items);
        self.dirty.clear();
        self.mutations = 0;
    }

    fn remove_where<P: Fn(&MemoryFeature) -> bool>(&mut self, pred: P) -> usize {
        let before = self.features.len();
        self.features.retain(|f| !pred(f));
        let removed = before - self.features.len();
        if removed > 0 {
            self.slot = self.features.iter().enumerate().map(|(i, f)| (f.id, i)).collect();
            self.mutations += removed;
            if self.mutations > 16.max(self.features.len() / 4) {
                self.rebuild();
            }
        }
        removed
    }

    fn evict_weakest(&mut self) -> Option<u64> {
        let (idx, _) = self
            .features
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.strength.total_cmp(&b.1.strength).then(a.0.cmp(&b.0)))?;
        let id = self.features[idx].id;
        self.remove_where(|f| f.id == id);
        Some(id)
    }

    /// `(feature index, distance)` for every feature with `‖x − m_i‖ ≤ r_i`,
    /// in storage order.
    pub fn query_active(&self, x: &[f64]) -> Vec<(usize, f64)> {
        let mut keys = Vec::new();
        self.index.candidates_containing(x, &mut keys);
        let mut out: Vec<(usize, f64)> = keys
            .into_iter()
            .filter(|k| !self.dirty.contains(k))
            .chain(self.dirty.iter().copied())
            .filter_map(|k| self.slot.get(&k).copied())
            .filter_map(|i| {
                let f = &self.features[i];
                let d = f.distance_to(x);
                (d <= f.radius).then_some((i, d))
            })
            .collect();
        out.sort_unstable_by_key(|&(i, _)| i);
        out.dedup_by_key(|e| e.0);
        out
    }

    /// Indices of features whose influence ball intersects the box.
    pub fn query_box(&self, lo: &[f64], hi: &[f64]) -> Vec<usize> {
        let mut keys = Vec::new();
        self.index.candidates_touching_box(lo, hi, &mut keys);
        let mut out: Vec<usize> = keys
            .into_iter()
            .filter(|k| !self.dirty.contains(k))
            .chain(self.dirty.iter().copied())
            .filter_map(|k| self.slot.get(&k).copied())
            .filter(|&i| {
                let f = &self.features[i];
                let d2: f64 = f
                    .position
                    .iter()
                    .enumerate()
                    .map(|(d, c)| {
                        let v = if *c < lo[d] {
                            lo[d] - c
                        } else if *c > hi[d] {
                            c - hi[d]
                        } else {
                            0.0
                        };
                        v * v
                    })
                    .sum();
                d2.sqrt() <= f.radius
            })
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Offers a candidate: merge into the nearest same-kind feature within
    /// `θ_merge` (normalized by its radius), else append when farther than
    /// `θ_dist` from everything, else drop.
    pub fn insert(&mut self, candidate: &CandidateFeature) -> Result<InsertOutcome> {
        if candidate.position.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: candidate.position.len(),
            });
        }
        let mut best: Option<(usize, f64)> = None;
        let mut nearest = f64::INFINITY;
        for (i, f) in self.features.iter().enumerate() {
            let d = f.distance_to(&candidate.position);
            nearest = nearest.min(d);
            if f.kind == candidate.kind {
                let ratio = d / f.radius;
                if ratio < self.params.merge_ratio && best.is_none_or(|(_, r)| ratio < r) {
                    best = Some((i, ratio));
                }
            }
        }
        let incoming = MemoryFeature {
            id: u64::MAX,
            position: candidate.position.clone(),
            radius: candidate.radius,
            strength: self.params.initial_strength,
            kind: candidate.kind,
            direction: candidate.direction.clone(),
            last_inside_step: self.step,
            created_step: self.step,
        };
        self.check_feature_shape(&incoming)?;
        if let Some((i, _)) = best {
            let merged = merge(&self.features[i], &incoming, self.params.max_strength)?;
            let id = merged.id;
            self.features[i] = merged;
            self.touch(id);
            return Ok(InsertOutcome::Merged { id });
        }
        if nearest > self.params.novelty_distance {
            let evicted =
                if self.features.len() >= self.params.capacity { self.evict_weakest() } else { None };
            let mut f = incoming;
            f.id = self.next_id;
            self.next_id += 1;
            let id = f.id;
            self.slot.insert(id, self.features.len());
            self.features.push(f);
            self.touch(id);
            return Ok(InsertOutcome::Added { id, evicted });
        }
        Ok(InsertOutcome::Dropped)
    }

    /// Grows features the state is stagnating inside, decays features left
    /// alone for more than `t_threshold` steps.
    pub fn update_strengths(&mut self, x: &[f64], stagnating: bool) {
        let now = self.step;
        let p = &self.params;
        for f in &mut self.features {
            let inside = distance(&f.position, x) <= f.radius;
            if inside {
                if stagnating {
                    f.strength = (f.strength + p.strength_increment).min(p.max_strength);
                }
                f.last_inside_step = now;
            } else if now.saturating_sub(f.last_inside_step) > p.decay_after {
                f.strength *= p.decay;
            }
        }
    }

    /// Removes every feature weaker than `γ_min`.
    pub fn prune(&mut self) -> usize {
        let floor = self.params.min_strength;
        self.remove_where(|f| f.strength < floor)
    }

    /// One application of the update function: strengths, then insertion,
    /// then pruning; advances the step counter.
    pub fn memory_update(
        &mut self,
        x: &[f64],
        candidate: Option<&CandidateFeature>,
        stagnating: bool,
    ) -> Result<Option<InsertOutcome>> {
        self.update_strengths(x, stagnating);
        let outcome = candidate.map(|c| self.insert(c)).transpose()?;
        self.prune();
        self.step += 1;
        Ok(outcome)
    }

    /// Replaces a directional feature's direction (e.g. with an observed
    /// escape direction).
    pub fn set_direction(&mut self, id: u64, direction: Vec<f64>) -> Result<()> {
        let i = *self.slot.get(&id).ok_or_else(|| Error::Contract(format!("no feature {id}")))?;
        let mut f = self.features[i].clone();
        f.direction = Some(direction);
        self.check_feature_shape(&f)?;
        self.features[i] = f;
        Ok(())
    }

    /// Checks every structural invariant; used by tests and after loading.
    pub fn validate(&self) -> Result<()> {
        if self.features.len() > self.params.capacity {
            return Err(Error::Contract("capacity exceeded".into()));
        }
        let mut ids = HashSet::new();
        for f in &self.features {
            self.check_feature_shape(f)?;
            if !(f.strength > 0.0 && f.strength <= self.params.max_strength) {
                return Err(Error::Contract(format!("strength {} out of range", f.strength)));
            }
            if !ids.insert(f.id) || f.id >= self.next_id {
                return Err(Error::Contract(format!("bad feature id {}", f.id)));
            }
            if self.slot.get(&f.id).map(|&i| self.features[i].id) != Some(f.id) {
                return Err(Error::Contract("index slot map out of sync".into()));
            }
        }
        if self.slot.len() != self.features.len() {
            return Err(Error::Contract("index slot map out of sync".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = StoreDocument {
            dim: self.dim,
            step: self.step,
            next_id: self.next_id,
            params: self.params.clone(),
            features: self.features.clone(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: StoreDocument = serde_json::from_str(text)?;
        let mut store = MemoryStore::new(doc.dim, doc.params)?;
        store.features = doc.features;
        store.step = doc.step;
        store.next_id = doc.next_id;
        store.rebuild();
        store.validate()?;
        Ok(store)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn feature(pos: &[f64], r: f64, g: f64) -> MemoryFeature {
        MemoryFeature {
            id: 0,
            position: pos.to_vec(),
            radius: r,
            strength: g,
            kind: FeatureKind::LocalMinimum,
            direction: None,
            last_inside_step: 0,
            created_step: 0,
        }
    }

    fn candidate(pos: &[f64], kind: FeatureKind) -> CandidateFeature {
        let direction = kind.is_directional().then(|| {
            let mut d = vec![0.0; pos.len()];
            d[0] = 1.0;
            d
        });
        CandidateFeature { position: pos.to_vec(), kind, direction, radius: 1.0 }
    }

    #[test]
    fn merge_examples() {
        let a = feature(&[0.0], 1.0, 1.0);
        let b = feature(&[2.0], 1.0, 1.0);
        let m = merge(&a, &b, 5.0).unwrap();
        assert_eq!(m.position, vec![1.0]);
        assert_eq!(m.radius, 2.0);
        assert_eq!(m.strength, 2.0);
        let m = merge(&a, &a, 5.0).unwrap();
        assert_eq!((m.position.clone(), m.radius, m.strength), (vec![0.0], 1.0, 2.0));
        let strong = feature(&[0.0], 1.0, 3.0);
        assert_eq!(merge(&strong, &strong, 5.0).unwrap().strength, 5.0);
        // the centre follows strength, the radius does not
        let m = merge(&strong, &b, 5.0).unwrap();
        assert_eq!((m.position.clone(), m.radius), (vec![0.5], 2.0));
        let mut other = b.clone();
        other.kind = FeatureKind::LowGradient;
        other.direction = Some(vec![1.0]);
        assert!(matches!(merge(&a, &other, 5.0), Err(Error::Contract(_))));
    }

    #[test]
    fn antiparallel_directions_keep_first() {
        let mut a = feature(&[0.0, 0.0], 1.0, 1.0);
        a.kind = FeatureKind::LowGradient;
        a.direction = Some(vec![1.0, 0.0]);
        let mut b = a.clone();
        b.direction = Some(vec![-1.0, 0.0]);
        assert_eq!(merge(&a, &b, 5.0).unwrap().direction, Some(vec![1.0, 0.0]));
        b.direction = Some(vec![0.0, 1.0]);
        let d = merge(&a, &b, 5.0).unwrap().direction.unwrap();
        assert!((d[0] - 0.5f64.sqrt()).abs() < 1e-15 && (d[1] - 0.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn insert_merge_and_drop() {
        let mut s = MemoryStore::new(2, MemoryParams::default()).unwrap();
        let c = candidate(&[0.0, 0.0], FeatureKind::LocalMinimum);
        assert!(matches!(s.insert(&c).unwrap(), InsertOutcome::Added { .. }));
        assert_eq!(s.features()[0].strength, 1.0);
        assert!(matches!(s.insert(&c).unwrap(), InsertOutcome::Merged { .. }));
        assert_eq!(s.len(), 1);
        // a different kind right next to it is not novel
        let near = candidate(&[0.05, 0.0], FeatureKind::LowGradient);
        assert_eq!(s.insert(&near).unwrap(), InsertOutcome::Dropped);
        let far = candidate(&[5.0, 0.0], FeatureKind::LowGradient);
        assert!(matches!(s.insert(&far).unwrap(), InsertOutcome::Added { .. }));
        assert_eq!(s.len(), 2);
    }

    #[test]
    fn capacity_evicts_weakest() {
        let params = MemoryParams { capacity: 3, ..MemoryParams::default() };
        let mut s = MemoryStore::new(1, params).unwrap();
        for (x, g) in [(0.0, 0.2), (10.0, 1.0), (20.0, 2.0)] {
            s.push_feature(feature(&[x], 1.0, g)).unwrap();
        }
        let out = s.insert(&candidate(&[30.0], FeatureKind::LocalMinimum)).unwrap();
        assert_eq!(out, InsertOutcome::Added { id: 3, evicted: Some(0) });
        let strengths: Vec<f64> = s.features().iter().map(|f| f.strength).collect();
        assert_eq!(strengths, vec![1.0, 2.0, 1.0]);
    }

    #[test]
    fn strength_rules() {
        let mut s = MemoryStore::new(1, MemoryParams::default()).unwrap();
        s.push_feature(feature(&[0.0], 1.0, 1.0)).unwrap();
        s.push_feature(feature(&[0.5], 1.0, 4.95)).unwrap();
        s.update_strengths(&[0.2], true);
        assert!((s.features()[0].strength - 1.1).abs() < 1e-12);
        assert_eq!(s.features()[1].strength, 5.0);

        let mut s = MemoryStore::new(1, MemoryParams::default()).unwrap();
        s.push_feature(feature(&[0.0], 1.0, 1.0)).unwrap();
        for _ in 0..=100 {
            s.memory_update(&[10.0], None, false).unwrap();
        }
        assert_eq!(s.features()[0].strength, 1.0);
        s.memory_update(&[10.0], None, false).unwrap();
        assert!((s.features()[0].strength - 0.99).abs() < 1e-12);
    }

    #[test]
    fn prune_rules() {
        let mut s = MemoryStore::new(1, MemoryParams::default()).unwrap();
        assert_eq!(s.prune(), 0);
        s.push_feature(feature(&[0.0], 1.0, 0.05)).unwrap();
        s.push_feature(feature(&[5.0], 1.0, 0.5)).unwrap();
        assert_eq!(s.prune(), 1);
        assert_eq!(s.features()[0].strength, 0.5);
        assert_eq!(s.prune(), 0);
    }

    #[test]
    fn repeated_stagnation_merges_into_one_growing_feature() {
        let mut s = MemoryStore::new(2, MemoryParams::default()).unwrap();
        let mut last = 0.0;
        for i in 0..40 {
            let jitter = 0.01 * ((i % 3) as f64 - 1.0);
            let c = candidate(&[1.0 + jitter, -1.0], FeatureKind::LocalMinimum);
            s.memory_update(&[1.0, -1.0], Some(&c), true).unwrap();
            assert_eq!(s.len(), 1);
            let g = s.features()[0].strength;
            assert!(g > last || g == s.params().max_strength);
            last = g;
        }
        assert_eq!(last, 5.0);
    }

    #[test]
    fn json_round_trip_is_lossless() {
        let mut s = MemoryStore::new(2, MemoryParams::default()).unwrap();
        s.insert(&candidate(&[0.1 + 0.2, 1.0 / 3.0], FeatureKind::HighCurvature)).unwrap();
        s.insert(&candidate(&[7.0, std::f64::consts::PI], FeatureKind::LocalMinimum)).unwrap();
        s.update_strengths(&[0.3, 0.33], true);
        let back = MemoryStore::from_json(&s.to_json().unwrap()).unwrap();
        assert_eq!(back, s);
    }
}
