//! One matrix-free product split into its near and far parts, with the
//! per-phase timings the operator keeps.

use pbbem::kernels::PhysicalConfig;
use pbbem::solver::{BoundaryOperator, SolveConfig};
use pbbem::surface::{build_node_patches, generate_icosphere};
use pbbem::Vec3;

fn main() -> pbbem::Result<()> {
    let s: u32 = std::env::args().nth(1).map_or(4, |s| s.parse().expect("subdivisions"));
    let patches = build_node_patches(&generate_icosphere(30.0, Vec3::zeros(), s));
    let n = patches.len();
    let cfg = SolveConfig {
        localities: 2,
        ..SolveConfig::with_accuracy(3)
    };
    let mut op = BoundaryOperator::new(&patches, &PhysicalConfig::default(), &cfg)?;
    println!("{n} nodes, {} near pairs, J = {:.5}", op.near_pairs(), op.jump());

    // potential of a unit charge at the centre, and its normal derivative
    let f: Vec<f64> = patches.iter().map(|p| 1.0 / p.position.norm()).collect();
    let h: Vec<f64> = patches.iter().map(|p| -p.normal.dot(&p.position) / p.position.norm().powi(3)).collect();
    for round in 0..3 {
        let (y1, y2) = op.apply_global(&f, &h)?;
        let t = op.timings();
        println!(
            "product {round}: y₁[0] = {:.6e}, y₂[0] = {:.6e}; cumulative far {:.2} s, near {:.2} s, near setup {:.2} s",
            y1[0],
            y2[0],
            t.far_field.as_secs_f64(),
            t.near_field.as_secs_f64(),
            t.near_setup.as_secs_f64()
        );
    }
    println!("traffic between localities: {:?}", op.group().traffic());
    Ok(())
}
