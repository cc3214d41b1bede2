use mamppi::detect::FeatureKind;
use mamppi::potential::{
    adaptive_temperature, alpha, enhanced_gradient, enhanced_value, memory_potential, phi1, phi2, phi3,
    LocalField, PotentialParams, SaddleVariant,
};
use mamppi::{MemoryFeature, MemoryParams, MemoryStore};
use proptest::prelude::*;

type Spec = (f64, f64, f64, f64, u8, f64);

fn spec() -> impl Strategy<Value = Spec> {
    (-3f64..3.0, -3f64..3.0, 0.2f64..1.5, 0.2f64..4.0, 1u8..=3, 0f64..std::f64::consts::TAU)
}

fn store_from(specs: &[Spec]) -> MemoryStore {
    let mut store = MemoryStore::new(2, MemoryParams { capacity: 64, ..MemoryParams::default() }).unwrap();
    for &(x, y, r, g, code, angle) in specs {
        let kind = FeatureKind::from_code(code).unwrap();
        store
            .push_feature(MemoryFeature {
                id: 0,
                position: vec![x, y],
                radius: r,
                strength: g,
                kind,
                direction: kind.is_directional().then(|| vec![angle.cos(), angle.sin()]),
                last_inside_step: 0,
                created_step: 0,
            })
            .unwrap();
    }
    store
}

proptest! {
    #[test]
    fn alpha_is_a_blend_weight(specs in prop::collection::vec(spec(), 0..12), x in prop::array::uniform2(-5f64..5.0)) {
        let store = store_from(&specs);
        let p = PotentialParams::default();
        let a = alpha(&x, &store, &p);
        prop_assert!((0.0..=1.0).contains(&a));
        // outside every ball memory has no say
        if store.query_active(&x).is_empty() {
            prop_assert_eq!(a, 1.0);
            prop_assert_eq!(enhanced_value(&x, &store, 3.5, &p), 3.5);
        }
    }

    #[test]
    fn basis_functions_are_nonnegative_and_local(
        x in prop::array::uniform2(-3f64..3.0),
        r in 0.1f64..2.0,
        angle in 0f64..std::f64::consts::TAU,
    ) {
        let (m, d) = ([0.0, 0.0], [angle.cos(), angle.sin()]);
        let outside = x[0].hypot(x[1]) >= r;
        for v in [
            phi1(&x, &m, r),
            phi2(&x, &m, r, &d),
            phi3(&x, &m, r, &d, SaddleVariant::Product, 0.5),
            phi3(&x, &m, r, &d, SaddleVariant::Normalized, 0.5),
        ] {
            prop_assert!(v >= 0.0 && v.is_finite());
            if outside {
                prop_assert_eq!(v, 0.0);
            }
        }
        prop_assert!(phi1(&x, &m, r) <= 1.0);
    }

    #[test]
    fn empty_memory_is_transparent(x in prop::array::uniform2(-5f64..5.0), v in -10f64..10.0, g in prop::array::uniform2(-5f64..5.0)) {
        let store = store_from(&[]);
        let p = PotentialParams::default();
        prop_assert_eq!(enhanced_value(&x, &store, v, &p), v);
        prop_assert_eq!(enhanced_gradient(&x, &store, v, &g, &p), g.to_vec());
        prop_assert_eq!(memory_potential(&x, &store, &p), 0.0);
    }

    #[test]
    fn temperature_grows_near_memory(lambda0 in 1e-3f64..10.0, eta in 0f64..5.0, a in 0f64..=1.0) {
        let t = adaptive_temperature(lambda0, eta, a);
        prop_assert!(t >= lambda0 && t <= lambda0 * (1.0 + eta) + 1e-12);
        prop_assert_eq!(adaptive_temperature(lambda0, eta, 1.0), lambda0);
    }

    #[test]
    fn local_field_matches_direct_evaluation(
        specs in prop::collection::vec(spec(), 1..20),
        pts in prop::collection::vec(prop::array::uniform2(-4f64..4.0), 1..40),
    ) {
        let store = store_from(&specs);
        let p = PotentialParams::default();
        let field = LocalField::from_box(&store, &[-4.0, -4.0], &[4.0, 4.0], &p);
        for x in pts {
            let (a, v) = field.evaluate(&x);
            prop_assert_eq!(a, alpha(&x, &store, &p));
            prop_assert!((v - memory_potential(&x, &store, &p)).abs() <= 1e-12 * (1.0 + v.abs()));
        }
    }
}
