mod common;

use mamppi::detect::FeatureKind;
use mamppi::memory::merge;
use mamppi::{MemoryFeature, MemoryParams, MemoryStore};
use approx::assert_relative_eq;
use proptest::prelude::*;

#[test]
fn fuzz_upholds_invariants() {
    common::memory_suite::fuzz(100_000, 2024).unwrap();
}

#[test]
fn fuzz_other_seeds() {
    for seed in [1, 2, 3] {
        common::memory_suite::fuzz(20_000, seed).unwrap();
    }
}

#[test]
fn indexed_queries_match_scan() {
    common::memory_suite::query_oracle().unwrap();
}

fn local_min(x: f64, y: f64, r: f64, g: f64) -> MemoryFeature {
    MemoryFeature {
        id: 0,
        position: vec![x, y],
        radius: r,
        strength: g,
        kind: FeatureKind::LocalMinimum,
        direction: None,
        last_inside_step: 0,
        created_step: 0,
    }
}

proptest! {
    #[test]
    fn merge_follows_strength_and_never_shrinks(
        (ax, ay, ar, ag) in (-5f64..5.0, -5f64..5.0, 0.05f64..2.0, 0.1f64..5.0),
        (bx, by, br, bg) in (-5f64..5.0, -5f64..5.0, 0.05f64..2.0, 0.1f64..5.0),
    ) {
        let (a, b) = (local_min(ax, ay, ar, ag), local_min(bx, by, br, bg));
        let m = merge(&a, &b, 5.0).unwrap();
        prop_assert!(m.radius >= ar && m.radius >= br);
        prop_assert!((m.strength - (ag + bg).min(5.0)).abs() < 1e-12);
        let w = ag / (ag + bg);
        assert_relative_eq!(m.position[0], w * ax + (1.0 - w) * bx, epsilon = 1e-12);
        assert_relative_eq!(m.position[1], w * ay + (1.0 - w) * by, epsilon = 1e-12);
        let gap = (ax - bx).hypot(ay - by);
        assert_relative_eq!(m.radius, ar.max(br).max(gap / 2.0 + ar.min(br)), max_relative = 1e-14);
    }

    #[test]
    fn json_round_trip(features in prop::collection::vec((-5f64..5.0, -5f64..5.0, 0.05f64..2.0, 0.2f64..5.0), 0..30)) {
        let mut store = MemoryStore::new(2, MemoryParams::default()).unwrap();
        for (x, y, r, g) in features {
            store.push_feature(local_min(x, y, r, g)).unwrap();
        }
        let back = MemoryStore::from_json(&store.to_json().unwrap()).unwrap();
        prop_assert_eq!(&back, &store);
        for q in [[0.0, 0.0], [1.0, -1.0], [3.0, 2.5]] {
            prop_assert_eq!(back.query_active(&q), store.query_active(&q));
        }
    }

    #[test]
    fn strengths_stay_bounded(stagnating in prop::collection::vec(any::<bool>(), 1..400)) {
        let p = MemoryParams::default();
        let mut store = MemoryStore::new(2, p.clone()).unwrap();
        store.push_feature(local_min(0.0, 0.0, 1.0, 1.0)).unwrap();
        for (t, s) in stagnating.iter().enumerate() {
            let x = if t % 3 == 0 { [5.0, 5.0] } else { [0.1, 0.0] };
            store.memory_update(&x, None, *s).unwrap();
            for f in store.features() {
                prop_assert!(f.strength >= p.min_strength && f.strength <= p.max_strength);
            }
        }
    }
}
