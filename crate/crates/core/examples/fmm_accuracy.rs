//! Multipole engine against direct summation for every kernel and layer.
//!
//! `cargo run --release --example fmm_accuracy -- [points]`

use pbbem::engine::{direct_sum, DagOptions, Engine, Strength};
use pbbem::multipole::{Kernel, Layer, View};
use pbbem::Vec3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> pbbem::Result<()> {
    let n: usize = std::env::args().nth(1).map_or(3000, |s| s.parse().expect("point count"));
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let point = |rng: &mut ChaCha8Rng| Vec3::new(rng.gen_range(0.0..40.0), rng.gen_range(0.0..40.0), rng.gen_range(0.0..40.0));
    let sources: Vec<Vec3> = (0..n).map(|_| point(&mut rng)).collect();
    let targets: Vec<Vec3> = (0..n).map(|_| point(&mut rng)).collect();
    let normals: Vec<Vec3> = (0..n)
        .map(|_| Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)).normalize())
        .collect();
    let strengths: Vec<Strength> = (0..n)
        .map(|_| Strength {
            charge: rng.gen_range(-1.0..1.0),
            dipole: Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
        })
        .collect();

    let mut engine = Engine::new(0)?;
    for kernel in [Kernel::Laplace, Kernel::Yukawa(0.128)] {
        for layer in [Layer::Single, Layer::Double] {
            let views = vec![View { kernel, layer }];
            let exact = direct_sum(&sources, &targets, Some(&normals), &views, &[&strengths]);
            for accuracy in [3, 6] {
                let t = std::time::Instant::now();
                let got = engine.evaluate(&sources, &targets, Some(&normals), 40, DagOptions::new(views.clone(), accuracy), &[&strengths])?;
                let (mut num, mut den) = (0.0, 0.0);
                for (g, e) in got[0].iter().zip(&exact[0]) {
                    num += (g.potential - e.potential).powi(2);
                    den += e.potential.powi(2);
                }
                println!(
                    "{kernel:?} {layer:?} accuracy {accuracy}: relative error {:.2e} in {:.2} s",
                    (num / den).sqrt(),
                    t.elapsed().as_secs_f64()
                );
            }
        }
    }
    Ok(())
}
