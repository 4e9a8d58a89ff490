//! Polar energy of two opposite charges in a sphere as the ionic strength
//! grows. The operator is rebuilt for each κ.

use pbbem::io::AtomRecord;
use pbbem::kernels::PhysicalConfig;
use pbbem::solver::{solve, SolveConfig};
use pbbem::surface::generate_icosphere;
use pbbem::Vec3;

fn main() -> pbbem::Result<()> {
    let mesh = generate_icosphere(12.0, Vec3::zeros(), 4);
    let atoms = [
        AtomRecord { center: Vec3::new(4.0, 0.0, 0.0), charge: 1.0, radius: 1.5 },
        AtomRecord { center: Vec3::new(-4.0, 1.0, 0.0), charge: -1.0, radius: 1.5 },
        AtomRecord { center: Vec3::new(0.0, 0.0, 6.0), charge: 1.0, radius: 1.5 },
    ];
    println!("{:>10} {:>10} {:>14} {:>6}", "I (mM)", "1/κ (Å)", "E_pol", "iters");
    for ionic in [0.0, 10.0, 50.0, 150.0, 500.0] {
        let phys = PhysicalConfig::new(2.0, 80.0, ionic, 300.0);
        let out = solve(&atoms, &mesh, &phys, &SolveConfig::with_accuracy(6))?;
        let debye = if phys.kappa > 0.0 { 1.0 / phys.kappa } else { f64::INFINITY };
        println!(
            "{ionic:>10.1} {debye:>10.3} {:>14.6} {:>6}",
            out.report.energy.polar, out.report.gmres.iterations
        );
    }
    Ok(())
}
