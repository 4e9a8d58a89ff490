//! Solvation energy of a charged sphere against the Born formula.
//!
//! `cargo run --release --example born_sphere -- [subdivisions] [accuracy]`

use pbbem::io::AtomRecord;
use pbbem::kernels::PhysicalConfig;
use pbbem::solver::{solve, SolveConfig};
use pbbem::surface::generate_icosphere;
use pbbem::{Vec3, COULOMB_KCAL};

fn main() -> pbbem::Result<()> {
    let mut args = std::env::args().skip(1);
    let subdivisions: u32 = args.next().map_or(4, |s| s.parse().expect("subdivisions"));
    let accuracy: u32 = args.next().map_or(3, |s| s.parse().expect("accuracy"));

    let (radius, charge) = (50.0, 50.0);
    let mesh = generate_icosphere(radius, Vec3::zeros(), subdivisions);
    let atoms = [AtomRecord {
        center: Vec3::zeros(),
        charge,
        radius: 1.0,
    }];
    let phys = PhysicalConfig::new(2.0, 80.0, 0.0, 300.0);
    let out = solve(&atoms, &mesh, &phys, &SolveConfig::with_accuracy(accuracy))?;

    let exact = -0.5 * COULOMB_KCAL * charge * charge / radius * (1.0 / phys.eps_int - 1.0 / phys.eps_ext);
    let e = out.report.energy.polar;
    println!("{} nodes, {} triangles", mesh.vertices.len(), mesh.triangles.len());
    println!("GMRES: {} iterations, {} inner products", out.report.gmres.iterations, out.report.gmres.inner_products);
    println!("polar energy {e:.3} kcal/mol, Born {exact:.3}, error {:.3}%", 100.0 * (e - exact).abs() / exact.abs());
    Ok(())
}
