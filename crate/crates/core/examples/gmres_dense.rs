//! Restarted GMRES on a small dense system spread over three localities.

use nalgebra::{DMatrix, DVector};
use pbbem::distribution::{DistVector, LocalityGroup, Partition};
use pbbem::solver::{gmres, GmresConfig};

fn main() -> pbbem::Result<()> {
    let n = 60;
    let a = DMatrix::from_fn(n, n, |i, j| if i == j { 3.0 } else { 1.0 / (1.0 + (i as f64 - j as f64).abs()).powi(2) });
    let b: Vec<f64> = (0..n).map(|i| (i as f64 * 0.3).sin()).collect();
    let partition = Partition::contiguous(n, 3)?;
    let group = LocalityGroup::new(3)?;

    for restart in [60, 10, 4] {
        let cfg = GmresConfig {
            restart,
            max_restart: 50,
            eps_rel: 1e-10,
            eps_abs: 0.0,
        };
        let (x, stats) = gmres(
            |v: &DistVector| {
                let y = &a * DVector::from_vec(v.to_fields(&partition).remove(0));
                Ok(DistVector::from_fields(&partition, &[y.as_slice()]))
            },
            &DistVector::from_fields(&partition, &[&b]),
            &cfg,
            &group,
        )?;
        let x = DVector::from_vec(x.to_fields(&partition).remove(0));
        println!(
            "restart {restart:>2}: {:>3} iterations, {} restarts, {:>4} inner products, residual {:.2e}, check {:.2e}",
            stats.iterations,
            stats.restarts,
            stats.inner_products,
            stats.residual,
            (&a * x - DVector::from_vec(b.clone())).norm()
        );
    }
    Ok(())
}
