//! ASCII map of the memory-enhanced value over the double-well landscape
//! after a local minimum is remembered in the left well.

use mamppi::detect::FeatureKind;
use mamppi::envs::DoubleWell;
use mamppi::potential::{alpha, enhanced_value, PotentialParams};
use mamppi::{MemoryFeature, MemoryParams, MemoryStore};

fn main() -> mamppi::Result<()> {
    let mut store = MemoryStore::new(2, MemoryParams::default())?;
    store.push_feature(MemoryFeature {
        id: 0,
        position: vec![-1.0, 0.0],
        radius: 0.8,
        strength: 5.0,
        kind: FeatureKind::LocalMinimum,
        direction: None,
        last_inside_step: 0,
        created_step: 0,
    })?;
    let params = PotentialParams::default();
    let shades = [' ', '.', ':', '-', '=', '+', '*', '#', '%', '@'];
    for (label, with_memory) in [("base value", false), ("with memory", true)] {
        println!("{label}:");
        for row in 0..13 {
            let y = 1.2 - 0.2 * row as f64;
            let line: String = (0..49)
                .map(|col| {
                    let x = [-2.0 + col as f64 / 12.0, y];
                    let base = DoubleWell::potential(&x);
                    let v = if with_memory { enhanced_value(&x, &store, base, &params) } else { base };
                    shades[((v / 0.5) as usize).min(shades.len() - 1)]
                })
                .collect();
            println!("  |{line}|");
        }
    }
    for x in [[-1.0, 0.0], [-0.5, 0.0], [1.0, 0.0]] {
        let base = DoubleWell::potential(&x);
        println!(
            "x={x:?}  V_base={base:.3}  α={:.3}  Ṽ={:.3}",
            alpha(&x, &store, &params),
            enhanced_value(&x, &store, base, &params)
        );
    }
    Ok(())
}
