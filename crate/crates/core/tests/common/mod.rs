#![allow(dead_code)]

use nalgebra::DMatrix;
use pbbem::engine::{Engine, MethodPolicy};
use pbbem::io::AtomRecord;
use pbbem::kernels::{eval_laplace, eval_yukawa, near_coefficients, PhysicalConfig};
use pbbem::surface::NodePatch;
use pbbem::Vec3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const BORN_RADIUS: f64 = 50.0;
pub const BORN_CHARGE: f64 = 50.0;

/// `−(332.0637/2)·q²/R·(1/ε_int − 1/ε_ext)`.
pub fn born_energy(q: f64, r: f64, eps_int: f64, eps_ext: f64) -> f64 {
    -(332.0637 / 2.0) * q * q / r * (1.0 / eps_int - 1.0 / eps_ext)
}

pub fn central_charge() -> Vec<AtomRecord> {
    vec![AtomRecord {
        center: Vec3::zeros(),
        charge: BORN_CHARGE,
        radius: 1.0,
    }]
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_values(n: usize, seed: u64) -> Vec<f64> {
    let mut r = rng(seed);
    (0..n).map(|_| r.gen_range(-1.0..1.0)).collect()
}

pub fn rel_l2(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    (num / den).sqrt()
}

/// Dense `2N × 2N` boundary matrix over unknowns `(f₁…f_N, h₁…h_N)`.
/// Pairs in the engine's direct lists use patch quadrature; every other
/// pair collapses the source patch to its node with weight `ΔS`.
pub fn dense_operator(patches: &[NodePatch], phys: &PhysicalConfig, leaf_threshold: usize) -> DMatrix<f64> {
    let n = patches.len();
    let pos: Vec<Vec3> = patches.iter().map(|p| p.position).collect();
    let nrm: Vec<Vec3> = patches.iter().map(|p| p.normal).collect();
    let mut engine = Engine::new(1).unwrap();
    let t = engine.create_tree(&pos, &pos, Some(&nrm), leaf_threshold).unwrap();
    let pairs = engine.tree(t).unwrap().direct_pairs(MethodPolicy::DirectListThree);

    let inv = 1.0 / (phys.eps_ext / phys.eps_int);
    let jump = 0.5 * inv + 0.5;
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        m[(i, i)] += jump;
        m[(n + i, n + i)] += jump;
        let near: std::collections::HashSet<usize> = pairs[i].iter().copied().collect();
        for j in 0..n {
            let (a, b, c, d) = if near.contains(&j) {
                let k = near_coefficients(&patches[i], &patches[j], phys).unwrap();
                (k.a, k.b, k.c, k.d)
            } else {
                let (x, y, nj, ni) = (&pos[i], &pos[j], &nrm[j], &nrm[i]);
                let g = eval_laplace(x, y, nj, ni).unwrap();
                let u = if phys.kappa > 0.0 {
                    eval_yukawa(x, y, nj, ni, phys.kappa).unwrap()
                } else {
                    g
                };
                let w = patches[j].area;
                (
                    w * (g.value - u.value),
                    w * (inv * g.dn - u.dn),
                    w * (g.dn0 - inv * u.dn0),
                    w * inv * (g.dn0dn - u.dn0dn),
                )
            };
            m[(i, j)] += b;
            m[(i, n + j)] -= a;
            m[(n + i, j)] += d;
            m[(n + i, n + j)] -= c;
        }
    }
    m
}
