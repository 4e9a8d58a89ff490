//! Build a tree and a DAG once, then reuse them for several evaluations.

use pbbem::engine::{DagOptions, DagState, Engine, Strength};
use pbbem::multipole::{Kernel, Layer, View};
use pbbem::Vec3;

fn main() -> pbbem::Result<()> {
    let n = 2000;
    let points: Vec<Vec3> = (0..n)
        .map(|i| {
            let t = i as f64 * 0.618_033_988_75;
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - z * z).sqrt();
            20.0 * Vec3::new(r * (2.0 * std::f64::consts::PI * t).cos(), r * (2.0 * std::f64::consts::PI * t).sin(), z)
        })
        .collect();
    let views = vec![
        View { kernel: Kernel::Laplace, layer: Layer::Single },
        View { kernel: Kernel::Yukawa(0.1), layer: Layer::Single },
    ];

    let mut engine = Engine::new(0)?;
    let tree = engine.create_tree(&points, &points, None, 40)?;
    let dag = engine.create_dag(tree, DagOptions::new(views, 3))?;
    println!("edges: {:?}", engine.edge_counts(dag)?);

    for round in 0..3 {
        let s: Vec<Strength> = (0..n)
            .map(|i| Strength {
                charge: ((i + round) % 7) as f64 - 3.0,
                dipole: Vec3::zeros(),
            })
            .collect();
        if engine.dag_state(dag)? == DagState::Completed {
            engine.reset_dag(dag)?;
        }
        let out = engine.execute_dag(dag, &[&s, &s])?;
        println!(
            "round {round} (generation {}): laplace φ₀ = {:.6e}, yukawa φ₀ = {:.6e}",
            engine.dag_generation(dag)?,
            out[0][0].potential,
            out[1][0].potential
        );
    }
    engine.destroy_dag(dag)?;
    engine.destroy_tree(tree)?;
    Ok(())
}
