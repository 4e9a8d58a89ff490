//! Patch-integrated near-field coefficients, including the singular self
//! patch, next to the one-point rule the far field uses.

use pbbem::kernels::{eval_laplace, eval_yukawa, near_coefficients, PhysicalConfig};
use pbbem::surface::{build_node_patches, generate_icosphere};
use pbbem::Vec3;

fn main() -> pbbem::Result<()> {
    let patches = build_node_patches(&generate_icosphere(10.0, Vec3::zeros(), 3));
    let phys = PhysicalConfig::default();
    let inv = 1.0 / phys.eps_bar();
    let target = &patches[0];
    println!("κ = {:.5} 1/Å, ε̄ = {}", phys.kappa, phys.eps_bar());

    let mut by_distance: Vec<usize> = (0..patches.len()).collect();
    by_distance.sort_by(|&a, &b| {
        let d = |i: usize| (patches[i].position - target.position).norm();
        d(a).total_cmp(&d(b))
    });
    println!("{:>8} {:>12} {:>12} {:>12}", "dist", "A patch", "A point", "B patch");
    for &j in by_distance.iter().step_by(40).take(8) {
        let src = &patches[j];
        let c = near_coefficients(target, src, &phys)?;
        let dist = (src.position - target.position).norm();
        let point = if j == 0 {
            f64::NAN
        } else {
            let g = eval_laplace(&target.position, &src.position, &src.normal, &target.normal)?;
            let u = eval_yukawa(&target.position, &src.position, &src.normal, &target.normal, phys.kappa)?;
            src.area * (g.value - u.value)
        };
        println!("{dist:8.3} {:12.5e} {point:12.5e} {:12.5e}", c.a, c.b);
    }
    // the B coefficient vanishes on the self patch of a flat fan
    let own = near_coefficients(target, target, &phys)?;
    println!("self patch: a {:.5e}, b {:.5e}, c {:.5e}, d {:.5e} (1/ε̄ = {inv:.4})", own.a, own.b, own.c, own.d);
    Ok(())
}
