use mamppi::detect::{CandidateFeature, FeatureKind};
use mamppi::memory::InsertOutcome;
use mamppi::model::stream_rng;
use mamppi::{MemoryFeature, MemoryParams, MemoryStore};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{ensure, Check};

const DIM: usize = 2;

fn unit(rng: &mut ChaCha8Rng) -> Vec<f64> {
    let a: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    vec![a.cos(), a.sin()]
}

fn random_kind(rng: &mut ChaCha8Rng) -> FeatureKind {
    match rng.random_range(0..3) {
        0 => FeatureKind::LocalMinimum,
        1 => FeatureKind::LowGradient,
        _ => FeatureKind::HighCurvature,
    }
}

fn random_candidate(rng: &mut ChaCha8Rng, extent: f64) -> CandidateFeature {
    let kind = random_kind(rng);
    CandidateFeature {
        position: (0..DIM).map(|_| rng.random_range(-extent..extent)).collect(),
        kind,
        direction: kind.is_directional().then(|| unit(rng)),
        radius: rng.random_range(0.05..0.6),
    }
}

fn brute_active(store: &MemoryStore, x: &[f64]) -> Vec<usize> {
    store.features().iter().enumerate().filter(|(_, f)| f.contains(x)).map(|(i, _)| i).collect()
}

fn brute_box(store: &MemoryStore, lo: &[f64], hi: &[f64]) -> Vec<usize> {
    store
        .features()
        .iter()
        .enumerate()
        .filter(|(_, f)| {
            let d2: f64 =
                (0..DIM).map(|d| (f.position[d] - f.position[d].clamp(lo[d], hi[d])).powi(2)).sum();
            d2.sqrt() <= f.radius
        })
        .map(|(i, _)| i)
        .collect()
}

fn check_invariants(store: &MemoryStore, p: &MemoryParams) -> Result<(), String> {
    store.validate().map_err(|e| e.to_string())?;
    ensure!(store.len() <= p.capacity, "{} features over capacity {}", store.len(), p.capacity);
    for f in store.features() {
        ensure!(f.strength > 0.0 && f.strength <= p.max_strength, "strength {} out of bounds", f.strength);
        ensure!(f.radius > 0.0, "radius {}", f.radius);
        match &f.direction {
            None => ensure!(!f.kind.is_directional(), "directional feature without direction"),
            Some(d) => {
                let n = d.iter().map(|v| v * v).sum::<f64>().sqrt();
                ensure!(f.kind.is_directional() && (n - 1.0).abs() <= 1e-9, "bad direction norm {n}");
            }
        }
    }
    Ok(())
}

/// Random insert / update / prune / query sequence checking every invariant
/// and both spatial queries against linear scans after each operation.
pub fn fuzz(ops: usize, seed: u64) -> Check {
    let params = MemoryParams { capacity: 40, decay_after: 20, decay: 0.9, ..MemoryParams::default() };
    let mut store = MemoryStore::new(DIM, params.clone()).map_err(|e| e.to_string())?;
    let mut rng = stream_rng(seed, 0, 0);
    let (mut merges, mut adds, mut evictions, mut queries) = (0usize, 0usize, 0usize, 0usize);
    // small arena so merges, drops and evictions all happen
    let extent = 6.0;
    for op in 0..ops {
        match rng.random_range(0..10) {
            0..=3 => {
                let c = random_candidate(&mut rng, extent);
                let before: Vec<MemoryFeature> = store.features().to_vec();
                match store.insert(&c).map_err(|e| e.to_string())? {
                    InsertOutcome::Merged { id } => {
                        merges += 1;
                        let old = before.iter().find(|f| f.id == id).ok_or("merged into unknown id")?;
                        let new = store.get(id).ok_or("merged feature vanished")?;
                        ensure!(
                            new.radius >= old.radius && new.radius >= c.radius,
                            "op {op}: merge shrank radius {} -> {}",
                            old.radius,
                            new.radius
                        );
                        let want = (old.strength + params.initial_strength).min(params.max_strength);
                        ensure!((new.strength - want).abs() < 1e-12, "op {op}: merged strength {}", new.strength);
                        ensure!(store.len() == before.len(), "op {op}: merge changed the count");
                    }
                    InsertOutcome::Added { id, evicted } => {
                        adds += 1;
                        let f = store.get(id).ok_or("added feature missing")?;
                        ensure!(f.strength == params.initial_strength, "op {op}: new strength {}", f.strength);
                        match evicted {
                            Some(e) => {
                                evictions += 1;
                                let weakest =
                                    before.iter().map(|f| f.strength).fold(f64::INFINITY, f64::min);
                                let gone = before.iter().find(|f| f.id == e).ok_or("evicted unknown id")?;
                                ensure!(gone.strength == weakest, "op {op}: evicted a non-weakest feature");
                                ensure!(store.len() == before.len(), "op {op}: eviction changed the count");
                            }
                            None => ensure!(store.len() == before.len() + 1, "op {op}: add did not grow"),
                        }
                    }
                    InsertOutcome::Dropped => {
                        ensure!(store.features() == &before[..], "op {op}: dropped candidate mutated the store")
                    }
                }
            }
            4..=5 => {
                let x: Vec<f64> = (0..DIM).map(|_| rng.random_range(-extent..extent)).collect();
                let stagnating = rng.random_bool(0.5);
                let candidate = rng.random_bool(0.3).then(|| random_candidate(&mut rng, extent));
                store.memory_update(&x, candidate.as_ref(), stagnating).map_err(|e| e.to_string())?;
                ensure!(
                    store.features().iter().all(|f| f.strength >= params.min_strength),
                    "op {op}: feature below the floor survived an update"
                );
            }
            6 => {
                store.prune();
                ensure!(
                    store.features().iter().all(|f| f.strength >= params.min_strength),
                    "op {op}: prune left a weak feature"
                );
            }
            7..=8 => {
                queries += 1;
                let x: Vec<f64> = (0..DIM).map(|_| rng.random_range(-extent - 1.0..extent + 1.0)).collect();
                let got: Vec<usize> = store.query_active(&x).into_iter().map(|(i, _)| i).collect();
                ensure!(got == brute_active(&store, &x), "op {op}: active query disagrees with scan");
                let a: Vec<f64> = (0..DIM).map(|_| rng.random_range(-extent..extent)).collect();
                let b: Vec<f64> = (0..DIM).map(|_| rng.random_range(-extent..extent)).collect();
                let lo: Vec<f64> = a.iter().zip(&b).map(|(p, q)| p.min(*q)).collect();
                let hi: Vec<f64> = a.iter().zip(&b).map(|(p, q)| p.max(*q)).collect();
                ensure!(store.query_box(&lo, &hi) == brute_box(&store, &lo, &hi), "op {op}: box query disagrees");
            }
            _ => {
                let directional: Vec<u64> =
                    store.features().iter().filter(|f| f.kind.is_directional()).map(|f| f.id).collect();
                if let Some(&id) = directional.get(rng.random_range(0..directional.len().max(1))) {
                    store.set_direction(id, unit(&mut rng)).map_err(|e| e.to_string())?;
                }
            }
        }
        check_invariants(&store, &params).map_err(|e| format!("op {op}: {e}"))?;
    }
    let restored = MemoryStore::from_json(&store.to_json().map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    ensure!(restored == store, "JSON round trip changed the store");
    ensure!(
        merges > 0 && adds > 0 && evictions > 0,
        "fuzz missed a branch: {adds} adds, {merges} merges, {evictions} evictions"
    );
    Ok(format!("{ops} ops: {adds} adds ({evictions} evicting), {merges} merges, {queries} query pairs"))
}

/// 100 random features, 1000 random points: index queries equal a scan.
pub fn query_oracle() -> Check {
    let params = MemoryParams { capacity: 100, novelty_distance: 0.0, merge_ratio: 1e-9, ..MemoryParams::default() };
    let mut store = MemoryStore::new(DIM, params).map_err(|e| e.to_string())?;
    let mut rng = stream_rng(99, 0, 0);
    while store.len() < 100 {
        store.insert(&random_candidate(&mut rng, 10.0)).map_err(|e| e.to_string())?;
    }
    for _ in 0..1000 {
        let x: Vec<f64> = (0..DIM).map(|_| rng.random_range(-11.0..11.0)).collect();
        let got: Vec<usize> = store.query_active(&x).into_iter().map(|(i, _)| i).collect();
        ensure!(got == brute_active(&store, &x), "query at {x:?} disagrees with scan");
    }
    Ok("1000 queries over 100 features".into())
}

pub fn all(ops: usize) -> Vec<(&'static str, Check)> {
    vec![("fuzz", fuzz(ops, 2024)), ("query oracle", query_oracle())]
}
