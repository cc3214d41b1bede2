//! Runs the detector over three hand-made trajectories on the double-well
//! landscape and prints what each one reports.

use mamppi::detect::{DetectionThresholds, Detector};
use mamppi::envs::DoubleWell;

fn report(label: &str, path: impl Iterator<Item = [f64; 2]>) {
    let mut detector = Detector::new(DetectionThresholds::default());
    let value = |z: &[f64]| DoubleWell::potential(z);
    let gradient = |z: &[f64]| Some(DoubleWell::potential_gradient(z).to_vec());
    let goal = [1.0, 0.0];
    let mut first = None;
    for (t, z) in path.enumerate() {
        let out = detector.observe(t as u64, &z, &value, &gradient, Some(&goal));
        if first.is_none() {
            first = out.candidate.map(|c| (t, c));
        }
    }
    match first {
        Some((t, c)) => println!(
            "{label:18} step {t:3}: {:?} at ({:+.2}, {:+.2}) r={:.2} dir={:?}",
            c.kind, c.position[0], c.position[1], c.radius, c.direction
        ),
        None => println!("{label:18} nothing detected"),
    }
}

fn main() {
    // jitter around the left minimum
    report("stuck in a well", (0..60).map(|t| [-1.0 + 0.01 * (t as f64).sin(), 0.01 * (t as f64 * 0.7).cos()]));
    // a steady sweep over the barrier top, where the gradient vanishes
    report("crossing the ridge", (0..30).map(|t| [-0.75 + 0.05 * t as f64, 0.0]));
    // the same jitter at the goal is suppressed
    report("resting at the goal", (0..60).map(|t| [1.0 + 0.01 * (t as f64).sin(), 0.0]));
}
