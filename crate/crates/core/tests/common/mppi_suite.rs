use mamppi::envs::{Environment, Pendulum};
use mamppi::model::stream_rng;
use mamppi::mppi::{mppi_weights, optimal_control, ControlBound, ControlSamples};
use mamppi::{Mppi, MppiConfig};
use nalgebra::DMatrix;
use rand::Rng;

use super::{ensure, Check};

fn pendulum_start() -> Vec<f64> {
    vec![std::f64::consts::PI - 0.3, 0.0]
}

fn random_costs(seed: u64, k: usize, spread: f64) -> Vec<f64> {
    let mut rng = stream_rng(seed, 0, 0);
    (0..k).map(|_| rng.random::<f64>() * spread).collect()
}

pub fn shift_invariance() -> Check {
    let mut worst: f64 = 0.0;
    for seed in 0..200 {
        let costs = random_costs(seed, 64, 50.0);
        let mut rng = stream_rng(seed, 1, 0);
        let c = rng.random_range(-1e3..1e3);
        let lambda = rng.random_range(0.05..20.0);
        let shifted: Vec<f64> = costs.iter().map(|s| s + c).collect();
        let a = mppi_weights(&costs, lambda).map_err(|e| e.to_string())?;
        let b = mppi_weights(&shifted, lambda).map_err(|e| e.to_string())?;
        for (x, y) in a.iter().zip(&b) {
            worst = worst.max((x - y).abs());
        }
    }
    ensure!(worst <= 1e-12, "shifted weights differ by {worst:e}");
    Ok(format!("max deviation {worst:.1e}"))
}

pub fn normalization_and_monotonicity() -> Check {
    for seed in 0..200 {
        let costs = random_costs(seed, 128, 10.0);
        let w = mppi_weights(&costs, 1.0 + seed as f64 * 0.05).map_err(|e| e.to_string())?;
        let total: f64 = w.iter().sum();
        ensure!((total - 1.0).abs() <= 1e-12, "weights sum to {total}");
        for i in 0..costs.len() {
            for j in 0..costs.len() {
                if costs[i] < costs[j] {
                    ensure!(w[i] > w[j], "S{i} < S{j} but w{i} <= w{j}");
                }
            }
        }
    }
    let w = mppi_weights(&[5.0, 5.0, 5.0], 0.7).map_err(|e| e.to_string())?;
    ensure!(w.iter().all(|x| (x - 1.0 / 3.0).abs() < 1e-15), "equal costs gave {w:?}");
    let w = mppi_weights(&[0.0, 1.0], 1.0).map_err(|e| e.to_string())?;
    let e = (-1.0f64).exp();
    ensure!((w[0] - 1.0 / (1.0 + e)).abs() < 1e-12, "softmax of [0, 1] gave {w:?}");
    let w = mppi_weights(&[3.0, f64::INFINITY], 1.0).map_err(|e| e.to_string())?;
    ensure!(w == vec![1.0, 0.0], "infeasible sample kept weight: {w:?}");
    ensure!(mppi_weights(&[f64::INFINITY; 3], 1.0).is_err(), "all-infeasible costs accepted");
    Ok("sums within 1e-12, strictly monotone".into())
}

pub fn temperature_limits() -> Check {
    let w = mppi_weights(&[0.0, 1.0], 1e-6).map_err(|e| e.to_string())?;
    ensure!(w == vec![1.0, 0.0], "λ→0 limit gave {w:?}");
    let costs = random_costs(7, 100, 100.0);
    let spread = |lambda: f64| -> Result<f64, String> {
        let w = mppi_weights(&costs, lambda).map_err(|e| e.to_string())?;
        let hi = w.iter().copied().fold(f64::MIN, f64::max);
        let lo = w.iter().copied().fold(f64::MAX, f64::min);
        Ok(hi - lo)
    };
    let (s6, s9) = (spread(1e6)?, spread(1e9)?);
    ensure!(s9 < s6 && s9 < 1e-9, "weight spread {s6:e} at 1e6, {s9:e} at 1e9");

    // uniform weights return the mean of the sampled first controls
    let env = Pendulum::default();
    let cfg = MppiConfig {
        samples: 500,
        horizon: 10,
        temperature: 1e9,
        control_covariance: DMatrix::from_element(1, 1, 1.0),
        control_bounds: vec![ControlBound::UNBOUNDED],
        seed: 3,
    };
    let nominal = mamppi::mppi::NominalPlan::zeros(10, 1);
    let samples = mamppi::mppi::sample_controls(&cfg, &nominal, &cfg.control_covariance, None, 0)
        .map_err(|e| e.to_string())?;
    let batch = mamppi::mppi::evaluate_batch(&env, &env, &pendulum_start(), samples)
        .map_err(|e| e.to_string())?;
    let w = mppi_weights(&batch.costs, cfg.temperature).map_err(|e| e.to_string())?;
    let plan = optimal_control(&batch.controls, &w, &cfg.control_bounds);
    let mean = (0..cfg.samples).map(|k| batch.controls.control(k, 0)[0]).sum::<f64>() / cfg.samples as f64;
    ensure!((plan[0] - mean).abs() < 1e-6, "λ→∞ control {} vs sample mean {mean}", plan[0]);
    Ok(format!("spread {s6:.1e} → {s9:.1e}"))
}

pub fn convex_hull() -> Check {
    for seed in 0..100u64 {
        let mut rng = stream_rng(seed, 2, 0);
        let (k, h, m) = (rng.random_range(1..40), rng.random_range(1..8), rng.random_range(1..4));
        let seqs: Vec<Vec<f64>> =
            (0..k).map(|_| (0..h * m).map(|_| rng.random_range(-10.0..10.0)).collect()).collect();
        let samples = ControlSamples::from_sequences(h, m, &seqs).map_err(|e| e.to_string())?;
        let costs: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..5.0)).collect();
        let w = mppi_weights(&costs, rng.random_range(0.01..3.0)).map_err(|e| e.to_string())?;
        let plan = optimal_control(&samples, &w, &vec![ControlBound::UNBOUNDED; m]);
        for (i, &u) in plan.iter().enumerate() {
            let lo = seqs.iter().map(|s| s[i]).fold(f64::INFINITY, f64::min);
            let hi = seqs.iter().map(|s| s[i]).fold(f64::NEG_INFINITY, f64::max);
            let tol = 1e-12 * (1.0 + lo.abs().max(hi.abs()));
            ensure!(u >= lo - tol && u <= hi + tol, "entry {i}: {u} outside [{lo}, {hi}]");
        }
    }
    Ok("100 random batches".into())
}

pub fn seed_determinism() -> Check {
    let env = Pendulum::default();
    let cfg = MppiConfig {
        samples: 200,
        horizon: 15,
        temperature: 0.5,
        control_covariance: DMatrix::from_element(1, 1, 1.0),
        control_bounds: env.control_bounds(),
        seed: 11,
    };
    let run = || -> Result<Vec<u64>, String> {
        let mut ctrl = Mppi::new(cfg.clone(), env.clone(), env.clone()).map_err(|e| e.to_string())?;
        let mut x = pendulum_start();
        let mut bits = Vec::new();
        for _ in 0..30 {
            let (u, _) = ctrl.step(&x).map_err(|e| e.to_string())?;
            bits.push(u.as_slice()[0].to_bits());
            x = env.step(&x, u.as_slice());
        }
        Ok(bits)
    };
    let (a, b) = (run()?, run()?);
    ensure!(a == b, "two runs with seed 11 diverged");
    let mut other = cfg.clone();
    other.seed = 12;
    let mut ctrl = Mppi::new(other, env.clone(), env.clone()).map_err(|e| e.to_string())?;
    let (u, _) = ctrl.step(&pendulum_start()).map_err(|e| e.to_string())?;
    ensure!(u.as_slice()[0].to_bits() != a[0], "seed 12 reproduced seed 11");
    Ok("30 closed-loop steps bit-identical".into())
}

pub fn all() -> Vec<(&'static str, Check)> {
    vec![
        ("shift invariance", shift_invariance()),
        ("normalization", normalization_and_monotonicity()),
        ("temperature limits", temperature_limits()),
        ("convex hull", convex_hull()),
        ("seed determinism", seed_determinism()),
    ]
}
