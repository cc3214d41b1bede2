//! Memory potentials, the blended value `Ṽ = αV_base + (1−α)V_mem`, its
//! analytic gradient, and the temperature/covariance adaptation driven by α.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::detect::FeatureKind;
use crate::error::{Error, Result};
use crate::memory::{distance, MemoryFeature, MemoryStore};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum AlphaVariant {
    /// `min(1, δ₀/(δ+ε))`.
    #[default]
    Reciprocal,
    /// `σ(β · min_i ‖x−m_i‖/r_i)`.
    Sigmoid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SaddleVariant {
    /// `(1−s/r²)·((d·Δ)² − ‖(I−ddᵀ)Δ‖²)`.
    #[default]
    Product,
    /// `(1−s/r²)·((d·Δ)²/‖Δ‖² − β)`.
    Normalized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PotentialParams {
    pub delta0: f64,
    pub epsilon: f64,
    /// Temperature enhancement `η`.
    pub eta: f64,
    /// Covariance enhancement `μ`.
    pub mu: f64,
    pub saddle_beta: f64,
    pub sigmoid_beta: f64,
    pub alpha_variant: AlphaVariant,
    pub saddle_variant: SaddleVariant,
    /// Directional sampling bias, in units of the per-dimension control std.
    pub bias_gain: f64,
    pub adapt_temperature: bool,
    pub adapt_covariance: bool,
}

impl Default for PotentialParams {
    fn default() -> Self {
        Self {
            delta0: 0.5,
            epsilon: 1e-6,
            eta: 2.0,
            mu: 1.0,
            saddle_beta: 0.5,
            sigmoid_beta: 1.0,
            alpha_variant: AlphaVariant::Reciprocal,
            saddle_variant: SaddleVariant::Product,
            bias_gain: 0.5,
            adapt_temperature: true,
            adapt_covariance: true,
        }
    }
}

impl PotentialParams {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.delta0 > 0.0) {
            problems.push("potential.delta0 must be > 0");
        }
        if !(self.epsilon > 0.0) {
            problems.push("potential.epsilon must be > 0");
        }
        if !(self.eta >= 0.0) {
            problems.push("potential.eta must be >= 0");
        }
        if !(self.mu >= 0.0) {
            problems.push("potential.mu must be >= 0");
        }
        if !(self.saddle_beta > 0.0 && self.saddle_beta < 1.0) {
            problems.push("potential.saddle_beta must be in (0, 1)");
        }
        if !(self.sigmoid_beta > 0.0) {
            problems.push("potential.sigmoid_beta must be > 0");
        }
        if !(self.bias_gain >= 0.0) {
            problems.push("potential.bias_gain must be >= 0");
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(problems.join("; ")))
        }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn phi1(x: &[f64], m: &[f64], r: f64) -> f64 {
    let s = sq_dist(x, m);
    let w = 1.0 - s / (r * r);
    if w <= 0.0 {
        0.0
    } else {
        w * w
    }
}

pub fn phi2(x: &[f64], m: &[f64], r: f64, d: &[f64]) -> f64 {
    let w = 1.0 - sq_dist(x, m) / (r * r);
    if w <= 0.0 {
        return 0.0;
    }
    let p: f64 = x.iter().zip(m).zip(d).map(|((a, b), c)| (a - b) * c).sum();
    (w * p).max(0.0)
}

pub fn phi3(x: &[f64], m: &[f64], r: f64, d: &[f64], variant: SaddleVariant, beta: f64) -> f64 {
    let s = sq_dist(x, m);
    let w = 1.0 - s / (r * r);
    if w <= 0.0 {
        return 0.0;
    }
    let p: f64 = x.iter().zip(m).zip(d).map(|((a, b), c)| (a - b) * c).sum();
    let q = match variant {
        // ‖(I−ddᵀ)Δ‖² = s − p² for unit d
        SaddleVariant::Product => 2.0 * p * p - s,
        SaddleVariant::Normalized => {
            if s == 0.0 {
                return 0.0;
            }
            p * p / s - beta
        }
    };
    (w * q).max(0.0)
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `γ·φ_κ(x)` for one feature.
pub fn feature_potential(f: &MemoryFeature, x: &[f64], params: &PotentialParams) -> f64 {
    let phi = match f.kind {
        FeatureKind::LocalMinimum => phi1(x, &f.position, f.radius),
        FeatureKind::LowGradient => phi2(x, &f.position, f.radius, dir(f)),
        FeatureKind::HighCurvature => {
            phi3(x, &f.position, f.radius, dir(f), params.saddle_variant, params.saddle_beta)
        }
    };
    f.strength * phi
}

fn dir(f: &MemoryFeature) -> &[f64] {
    f.direction.as_deref().expect("directional feature carries a direction")
}

/// Adds `γ∇φ_κ(x)` into `out`, using the interior derivative at kinks.
fn add_feature_gradient(f: &MemoryFeature, x: &[f64], params: &PotentialParams, out: &mut [f64]) {
    let r2 = f.radius * f.radius;
    let delta: Vec<f64> = x.iter().zip(&f.position).map(|(a, b)| a - b).collect();
    let s = dot(&delta, &delta);
    let w = 1.0 - s / r2;
    if w <= 0.0 {
        return;
    }
    let g = f.strength;
    // ∇w = −2Δ/r²
    match f.kind {
        FeatureKind::LocalMinimum => {
            for (o, dl) in out.iter_mut().zip(&delta) {
                *o += g * (-4.0 * w * dl / r2);
            }
        }
        FeatureKind::LowGradient => {
            let d = dir(f);
            let p = dot(d, &delta);
            if p <= 0.0 {
                return;
            }
            for i in 0..out.len() {
                out[i] += g * (p * (-2.0 * delta[i] / r2) + w * d[i]);
            }
        }
        FeatureKind::HighCurvature => {
            let d = dir(f);
            let p = dot(d, &delta);
            match params.saddle_variant {
                SaddleVariant::Product => {
                    let q = 2.0 * p * p - s;
                    if q <= 0.0 {
                        return;
                    }
                    for i in 0..out.len() {
                        let dq = 4.0 * p * d[i] - 2.0 * delta[i];
                        out[i] += g * (q * (-2.0 * delta[i] / r2) + w * dq);
                    }
                }
                SaddleVariant::Normalized => {
                    if s == 0.0 {
                        return;
                    }
                    let c = p * p / s - params.saddle_beta;
                    if c <= 0.0 {
                        return;
                    }
                    for i in 0..out.len() {
                        let dc = 2.0 * p * d[i] / s - 2.0 * p * p * delta[i] / (s * s);
                        out[i] += g * (c * (-2.0 * delta[i] / r2) + w * dc);
                    }
                }
            }
        }
    }
}

fn active<'a>(x: &[f64], store: &'a MemoryStore) -> impl Iterator<Item = (&'a MemoryFeature, f64)> {
    store.query_active(x).into_iter().map(move |(i, d)| (&store.features()[i], d))
}

/// `V_mem(x) = Σ γ_i φ_κᵢ(x)` over features whose ball contains `x`.
pub fn memory_potential(x: &[f64], store: &MemoryStore, params: &PotentialParams) -> f64 {
    active(x, store).map(|(f, _)| feature_potential(f, x, params)).sum()
}

/// `V_mem` split by feature kind (local minimum, low gradient, high curvature).
pub fn memory_potential_by_kind(x: &[f64], store: &MemoryStore, params: &PotentialParams) -> [f64; 3] {
    let mut out = [0.0; 3];
    for (f, _) in active(x, store) {
        out[f.kind.code() as usize - 1] += feature_potential(f, x, params);
    }
    out
}

/// `δ(x) = Σ γ_i max(0, 1 − ‖x−m_i‖/r_i)`.
pub fn proximity(x: &[f64], store: &MemoryStore) -> f64 {
    active(x, store).map(|(f, d)| f.strength * (1.0 - d / f.radius).max(0.0)).sum()
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn nearest_ratio<'a, I: Iterator<Item = &'a MemoryFeature>>(x: &[f64], feats: I) -> Option<(f64, &'a MemoryFeature)> {
    feats
        .map(|f| (f.distance_to(x) / f.radius, f))
        .min_by(|a, b| a.0.total_cmp(&b.0))
}

/// Adaptive blend weight in `[0, 1]`; `1` far from every feature.
pub fn alpha(x: &[f64], store: &MemoryStore, params: &PotentialParams) -> f64 {
    match params.alpha_variant {
        AlphaVariant::Reciprocal => reciprocal_alpha(proximity(x, store), params),
        AlphaVariant::Sigmoid => match nearest_ratio(x, store.features().iter()) {
            None => 1.0,
            Some((ratio, _)) => sigmoid(params.sigmoid_beta * ratio),
        },
    }
}

fn reciprocal_alpha(delta: f64, params: &PotentialParams) -> f64 {
    (params.delta0 / (delta + params.epsilon)).min(1.0)
}

/// `αV_base + (1−α)V_mem`, given `V_base(x)`.
pub fn enhanced_value(x: &[f64], store: &MemoryStore, v_base: f64, params: &PotentialParams) -> f64 {
    if store.is_empty() {
        return v_base;
    }
    let a = alpha(x, store, params);
    a * v_base + (1.0 - a) * memory_potential(x, store, params)
}

/// `∇Ṽ = α∇V_base + (1−α)∇V_mem + ∇α·(V_base − V_mem)`.
pub fn enhanced_gradient(
    x: &[f64],
    store: &MemoryStore,
    v_base: f64,
    base_grad: &[f64],
    params: &PotentialParams,
) -> Vec<f64> {
    if store.is_empty() {
        return base_grad.to_vec();
    }
    let n = x.len();
    let feats: Vec<(&MemoryFeature, f64)> = active(x, store).collect();
    let mut v_mem = 0.0;
    let mut g_mem = vec![0.0; n];
    for (f, _) in &feats {
        v_mem += feature_potential(f, x, params);
        add_feature_gradient(f, x, params, &mut g_mem);
    }
    let mut g_alpha = vec![0.0; n];
    let a = match params.alpha_variant {
        AlphaVariant::Reciprocal => {
            let mut delta = 0.0;
            let mut g_delta = vec![0.0; n];
            for (f, d) in &feats {
                delta += f.strength * (1.0 - d / f.radius).max(0.0);
                if *d > 0.0 && *d < f.radius {
                    for i in 0..n {
                        g_delta[i] -= f.strength * (x[i] - f.position[i]) / (d * f.radius);
                    }
                }
            }
            let raw = params.delta0 / (delta + params.epsilon);
            if raw < 1.0 {
                let k = -params.delta0 / ((delta + params.epsilon) * (delta + params.epsilon));
                for i in 0..n {
                    g_alpha[i] = k * g_delta[i];
                }
            }
            raw.min(1.0)
        }
        AlphaVariant::Sigmoid => match nearest_ratio(x, store.features().iter()) {
            None => 1.0,
            Some((ratio, f)) => {
                let a = sigmoid(params.sigmoid_beta * ratio);
                let d = f.distance_to(x);
                if d > 0.0 {
                    let k = params.sigmoid_beta * a * (1.0 - a) / (d * f.radius);
                    for i in 0..n {
                        g_alpha[i] = k * (x[i] - f.position[i]);
                    }
                }
                a
            }
        },
    };
    (0..n)
        .map(|i| a * base_grad[i] + (1.0 - a) * g_mem[i] + g_alpha[i] * (v_base - v_mem))
        .collect()
}

/// `λ₀(1 + η(1−α))`.
pub fn adaptive_temperature(lambda0: f64, eta: f64, alpha: f64) -> f64 {
    lambda0 * (1.0 + eta * (1.0 - alpha))
}

/// `Σ_{u,0}(1 + μ(1−α))`.
pub fn adaptive_covariance(base: &DMatrix<f64>, mu: f64, alpha: f64) -> DMatrix<f64> {
    base * (1.0 + mu * (1.0 - alpha))
}

/// Mean-shift for control sampling from active low-gradient features.
///
/// Each feature direction is mapped to control space by `map`; the mapped
/// directions are averaged by strength, normalized, and scaled per
/// dimension by `gain · control_std`.
pub fn directional_bias<F>(
    x: &[f64],
    store: &MemoryStore,
    map: F,
    control_std: &[f64],
    gain: f64,
) -> Option<Vec<f64>>
where
    F: Fn(&[f64]) -> Option<Vec<f64>>,
{
    let mut sum: Option<Vec<f64>> = None;
    for (f, _) in active(x, store) {
        if f.kind != FeatureKind::LowGradient {
            continue;
        }
        let mapped = map(dir(f))?;
        let acc = sum.get_or_insert_with(|| vec![0.0; mapped.len()]);
        for (a, v) in acc.iter_mut().zip(&mapped) {
            *a += f.strength * v;
        }
    }
    let sum = sum?;
    let n = dot(&sum, &sum).sqrt();
    if n < 1e-12 {
        return None;
    }
    Some(sum.iter().zip(control_std).map(|(v, s)| gain * s * v / n).collect())
}

/// Snapshot of the features that can influence a region, bucketed on a
/// uniform grid over that region for the rollout hot loop.
#[derive(Debug, Clone)]
pub struct LocalField {
    dim: usize,
    params: PotentialParams,
    features: Vec<MemoryFeature>,
    /// All features, needed only by the sigmoid α (global minimum ratio).
    everyone: Vec<MemoryFeature>,
    lo: Vec<f64>,
    inv_cell: Vec<f64>,
    shape: Vec<usize>,
    /// CSR layout: features of cell `c` are `members[offsets[c]..offsets[c+1]]`,
    /// in ascending feature order.
    offsets: Vec<u32>,
    members: Vec<u32>,
}

const MAX_CELLS: usize = 4096;

impl LocalField {
    /// Features whose ball intersects the box `[lo, hi]`.
    pub fn from_box(store: &MemoryStore, lo: &[f64], hi: &[f64], params: &PotentialParams) -> Self {
        let features: Vec<MemoryFeature> =
            store.query_box(lo, hi).into_iter().map(|i| store.features()[i].clone()).collect();
        let everyone = match params.alpha_variant {
            AlphaVariant::Sigmoid => store.features().to_vec(),
            AlphaVariant::Reciprocal => Vec::new(),
        };
        let dim = store.dim();
        let per_dim_cap = (MAX_CELLS as f64).powf(1.0 / dim as f64).floor().max(1.0) as usize;
        // cells about one typical radius wide
        let typical = if features.is_empty() {
            f64::INFINITY
        } else {
            features.iter().map(|f| f.radius).sum::<f64>() / features.len() as f64
        };
        let mut shape = Vec::with_capacity(dim);
        let mut inv_cell = Vec::with_capacity(dim);
        for d in 0..dim {
            let extent = (hi[d] - lo[d]).max(0.0);
            let n = if extent > 0.0 && typical.is_finite() {
                ((extent / typical).ceil() as usize).clamp(1, per_dim_cap)
            } else {
                1
            };
            shape.push(n);
            inv_cell.push(if extent > 0.0 { n as f64 / extent } else { 0.0 });
        }
        let total: usize = shape.iter().product();
        let mut buckets: Vec<Vec<u32>> = vec![Vec::new(); total];
        for (i, f) in features.iter().enumerate() {
            let range: Vec<(usize, usize)> = (0..dim)
                .map(|d| {
                    let cell = |v: f64| cell_index(v, lo[d], inv_cell[d], shape[d]);
                    (cell(f.position[d] - f.radius), cell(f.position[d] + f.radius))
                })
                .collect();
            let mut idx: Vec<usize> = range.iter().map(|r| r.0).collect();
            loop {
                buckets[flatten(&idx, &shape)].push(i as u32);
                let mut d = 0;
                while d < dim {
                    if idx[d] < range[d].1 {
                        idx[d] += 1;
                        break;
                    }
                    idx[d] = range[d].0;
                    d += 1;
                }
                if d == dim {
                    break;
                }
            }
        }
        let mut offsets = Vec::with_capacity(total + 1);
        let mut members = Vec::new();
        offsets.push(0);
        for b in buckets {
            members.extend(b);
            offsets.push(members.len() as u32);
        }
        Self { dim, params: params.clone(), features, everyone, lo: lo.to_vec(), inv_cell, shape, offsets, members }
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty() && self.everyone.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `(α(z), V_mem(z))` for a point inside the box the field was built for.
    /// Points outside are clamped to the border cells, which still hold
    /// every feature reaching past the border.
    pub fn evaluate(&self, z: &[f64]) -> (f64, f64) {
        let mut delta = 0.0;
        let mut v_mem = 0.0;
        if !self.features.is_empty() {
            let mut c = 0;
            for d in (0..self.dim).rev() {
                c = c * self.shape[d] + cell_index(z[d], self.lo[d], self.inv_cell[d], self.shape[d]);
            }
            let (a, b) = (self.offsets[c] as usize, self.offsets[c + 1] as usize);
            for &i in &self.members[a..b] {
                let f = &self.features[i as usize];
                let d = distance(&f.position, z);
                if d > f.radius {
                    continue;
                }
                delta += f.strength * (1.0 - d / f.radius);
                v_mem += feature_potential(f, z, &self.params);
            }
        }
        let a = match self.params.alpha_variant {
            AlphaVariant::Reciprocal => reciprocal_alpha(delta, &self.params),
            AlphaVariant::Sigmoid => match nearest_ratio(z, self.everyone.iter()) {
                None => 1.0,
                Some((ratio, _)) => sigmoid(self.params.sigmoid_beta * ratio),
            },
        };
        (a, v_mem)
    }
}

#[inline]
fn cell_index(v: f64, lo: f64, inv_cell: f64, n: usize) -> usize {
    let c = ((v - lo) * inv_cell).floor();
    if c <= 0.0 {
        0
    } else {
        (c as usize).min(n - 1)
    }
}

/// Row-major with dimension 0 fastest.
fn flatten(idx: &[usize], shape: &[usize]) -> usize {
    idx.iter().zip(shape).rev().fold(0, |acc, (&i, &n)| acc * n + i)
}
