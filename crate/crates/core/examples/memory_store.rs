//! Feature memory bookkeeping: novelty merges, stagnation growth, decay,
//! pruning and persistence.

use mamppi::detect::{CandidateFeature, FeatureKind};
use mamppi::{MemoryParams, MemoryStore};

fn main() -> mamppi::Result<()> {
    let params = MemoryParams { capacity: 4, decay_after: 5, ..MemoryParams::default() };
    let mut store = MemoryStore::new(2, params)?;

    let pocket = CandidateFeature::new(vec![1.0, 0.0], FeatureKind::LocalMinimum, None, 0.5)?;
    let plateau = CandidateFeature::new(vec![-2.0, 1.0], FeatureKind::LowGradient, Some(vec![1.0, 0.0]), 0.4)?;
    println!("insert pocket:        {:?}", store.insert(&pocket)?);
    println!("insert plateau:       {:?}", store.insert(&plateau)?);
    let nearby = CandidateFeature::new(vec![1.1, 0.1], FeatureKind::LocalMinimum, None, 0.5)?;
    println!("insert nearby pocket: {:?}", store.insert(&nearby)?);

    // sitting in the pocket while stagnating strengthens it; the plateau decays
    for _ in 0..30 {
        store.memory_update(&[1.05, 0.05], None, true)?;
    }
    for f in store.features() {
        println!("  {:?} at {:?} r={:.2} γ={:.3}", f.kind, f.position, f.radius, f.strength);
    }

    let x = [1.2, 0.0];
    println!("active at {x:?}: {:?}", store.query_active(&x));

    let json = store.to_json()?;
    assert_eq!(MemoryStore::from_json(&json)?, store);
    println!("JSON round trip ok ({} bytes)", json.len());
    Ok(())
}
