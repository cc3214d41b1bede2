mod common;

use mamppi::mppi::{mppi_weights, optimal_control, ControlBound, ControlSamples};
use proptest::prelude::*;

#[test]
fn shift_invariance() {
    common::mppi_suite::shift_invariance().unwrap();
}

#[test]
fn normalization_and_monotonicity() {
    common::mppi_suite::normalization_and_monotonicity().unwrap();
}

#[test]
fn temperature_limits() {
    common::mppi_suite::temperature_limits().unwrap();
}

#[test]
fn convex_hull() {
    common::mppi_suite::convex_hull().unwrap();
}

#[test]
fn seed_determinism() {
    common::mppi_suite::seed_determinism().unwrap();
}

proptest! {
    #[test]
    fn weights_are_a_distribution(costs in prop::collection::vec(-1e3f64..1e3, 1..64), lambda in 1e-3f64..1e3) {
        let w = mppi_weights(&costs, lambda).unwrap();
        prop_assert!(w.iter().all(|&x| (0.0..=1.0).contains(&x)));
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let best = costs.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        prop_assert!(w.iter().all(|&x| x <= w[best]));
    }

    #[test]
    fn shifting_costs_leaves_weights(costs in prop::collection::vec(0f64..100.0, 1..32), c in -500f64..500.0, lambda in 0.01f64..50.0) {
        let a = mppi_weights(&costs, lambda).unwrap();
        let shifted: Vec<f64> = costs.iter().map(|s| s + c).collect();
        let b = mppi_weights(&shifted, lambda).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn average_stays_in_sample_hull(
        seqs in prop::collection::vec(prop::collection::vec(-50f64..50.0, 6), 1..20),
        raw in prop::collection::vec(0f64..10.0, 20),
    ) {
        let k = seqs.len();
        let samples = ControlSamples::from_sequences(3, 2, &seqs).unwrap();
        let w = mppi_weights(&raw[..k], 0.5).unwrap();
        let plan = optimal_control(&samples, &w, &[ControlBound::UNBOUNDED; 2]);
        for (i, u) in plan.iter().enumerate() {
            let lo = seqs.iter().map(|s| s[i]).fold(f64::INFINITY, f64::min);
            let hi = seqs.iter().map(|s| s[i]).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(*u >= lo - 1e-9 && *u <= hi + 1e-9);
        }
    }

    #[test]
    fn clipped_average_respects_bounds(seqs in prop::collection::vec(prop::collection::vec(-5f64..5.0, 4), 1..10)) {
        let samples = ControlSamples::from_sequences(4, 1, &seqs).unwrap();
        let w = vec![1.0 / seqs.len() as f64; seqs.len()];
        let plan = optimal_control(&samples, &w, &[ControlBound::new(-1.0, 1.0)]);
        prop_assert!(plan.iter().all(|u| (-1.0..=1.0).contains(u)));
    }
}
