//! Restarted GMRES(m) on node-partitioned vectors.
//!
//! Arnoldi uses modified Gram-Schmidt. A new basis vector is orthogonalized
//! a second time when its norm after the first pass is below `1/√2` of its
//! norm before. The least-squares problem is kept triangular with Givens
//! rotations. Every inner product is a [`LocalityGroup::all_reduce_sum`].
//!
//! Each cycle starts from the true residual `b - A x` (skipping the product
//! while `x = 0`), and a final true residual is taken after the last cycle,
//! so the reported residual is never just the recurrence estimate.
//! Inner products: one norm per residual check, and per Arnoldi step `j`
//! (0-based) `j + 3` (norm before, `j + 1` projections, norm after), plus
//! `j + 2` when the step is reorthogonalized.

use std::f64::consts::SQRT_2;
use std::time::{Duration, Instant};

use super::SolveError;
use crate::distribution::{DistVector, LocalityGroup};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmresConfig {
    /// Krylov dimension per cycle.
    pub restart: usize,
    /// Cycles after the first.
    pub max_restart: usize,
    pub eps_rel: f64,
    pub eps_abs: f64,
}

impl Default for GmresConfig {
    fn default() -> Self {
        Self {
            restart: 80,
            max_restart: 5,
            eps_rel: 1e-3,
            eps_abs: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub cycle: usize,
    /// Step within the cycle, from 0.
    pub step: usize,
    /// Least-squares residual estimate after this step.
    pub residual: f64,
    pub reorthogonalized: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GmresStats {
    /// Arnoldi steps (operator products inside cycles).
    pub iterations: usize,
    pub cycles: usize,
    pub restarts: usize,
    pub inner_products: usize,
    /// Operator products, including residual recomputations.
    pub matvecs: usize,
    pub b_norm: f64,
    pub tolerance: f64,
    /// True residual norm of the returned solution.
    pub residual: f64,
    pub converged: bool,
    /// An Arnoldi vector vanished.
    pub breakdown: bool,
    pub history: Vec<IterationRecord>,
    pub reduction_time: Duration,
}

struct Ctx<'a> {
    group: &'a LocalityGroup,
    stats: GmresStats,
}

impl Ctx<'_> {
    fn dot(&mut self, a: &DistVector, b: &DistVector) -> Result<f64, SolveError> {
        let t = Instant::now();
        let v = a.dot(b, self.group)?;
        self.stats.inner_products += 1;
        self.stats.reduction_time += t.elapsed();
        Ok(v)
    }

    fn norm(&mut self, a: &DistVector) -> Result<f64, SolveError> {
        Ok(self.dot(a, a)?.sqrt())
    }
}

/// Solve `A x = b` from `x = 0`. Non-convergence is not an error here: the
/// returned stats say whether the tolerance `eps_rel ‖b‖ + eps_abs` was met.
pub fn gmres<F>(mut apply: F, b: &DistVector, cfg: &GmresConfig, group: &LocalityGroup) -> Result<(DistVector, GmresStats), SolveError>
where
    F: FnMut(&DistVector) -> Result<DistVector, SolveError>,
{
    if cfg.restart == 0 {
        return Err(SolveError::InvalidConfig("GMRES restart length must be at least 1".into()));
    }
    let m = cfg.restart;
    let mut cx = Ctx {
        group,
        stats: GmresStats::default(),
    };
    let b_norm = cx.norm(b)?;
    if !b_norm.is_finite() {
        return Err(SolveError::InvalidConfig("right-hand side is not finite".into()));
    }
    let tol = cfg.eps_rel * b_norm + cfg.eps_abs;
    cx.stats.b_norm = b_norm;
    cx.stats.tolerance = tol;
    let mut x = b.clone();
    x.scale(0.0);
    let mut first = true;

    loop {
        let r = if first {
            // x = 0: the residual is b, and ‖b‖ is already known
            first = false;
            cx.stats.residual = b_norm;
            b.clone()
        } else {
            let mut r = apply(&x)?;
            cx.stats.matvecs += 1;
            r.scale(-1.0);
            r.axpy(1.0, b);
            cx.stats.residual = cx.norm(&r)?;
            r
        };
        let beta = cx.stats.residual;
        if beta <= tol {
            cx.stats.converged = true;
            break;
        }
        if cx.stats.cycles > cfg.max_restart || cx.stats.breakdown {
            break;
        }
        if cx.stats.cycles > 0 {
            cx.stats.restarts += 1;
        }
        let cycle = cx.stats.cycles;
        cx.stats.cycles += 1;

        let mut v0 = r;
        v0.scale(1.0 / beta);
        let mut basis = vec![v0];
        let mut cols: Vec<Vec<f64>> = Vec::with_capacity(m);
        let (mut cs, mut sn) = (Vec::<f64>::with_capacity(m), Vec::<f64>::with_capacity(m));
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        for j in 0..m {
            let mut w = apply(&basis[j])?;
            cx.stats.matvecs += 1;
            cx.stats.iterations += 1;
            let before = cx.norm(&w)?;
            let mut h = vec![0.0; j + 2];
            for (i, v) in basis.iter().enumerate() {
                h[i] = cx.dot(&w, v)?;
                w.axpy(-h[i], v);
            }
            let mut after = cx.norm(&w)?;
            let reorth = after < before / SQRT_2;
            if reorth {
                for (i, v) in basis.iter().enumerate() {
                    let c = cx.dot(&w, v)?;
                    h[i] += c;
                    w.axpy(-c, v);
                }
                after = cx.norm(&w)?;
            }
            h[j + 1] = after;
            for i in 0..j {
                let t = cs[i] * h[i] + sn[i] * h[i + 1];
                h[i + 1] = -sn[i] * h[i] + cs[i] * h[i + 1];
                h[i] = t;
            }
            let d = h[j].hypot(h[j + 1]);
            let (c, s) = if d == 0.0 { (1.0, 0.0) } else { (h[j] / d, h[j + 1] / d) };
            cs.push(c);
            sn.push(s);
            h[j] = d;
            h[j + 1] = 0.0;
            g[j + 1] = -s * g[j];
            g[j] *= c;
            cols.push(h);
            let res = g[j + 1].abs();
            cx.stats.history.push(IterationRecord {
                cycle,
                step: j,
                residual: res,
                reorthogonalized: reorth,
            });
            if after == 0.0 {
                cx.stats.breakdown = true;
                break;
            }
            if res <= tol {
                break;
            }
            w.scale(1.0 / after);
            basis.push(w);
        }
        // back substitution on the k×k triangle
        let k = cols.len();
        let mut y = vec![0.0; k];
        for i in (0..k).rev() {
            let mut s = g[i];
            for (jj, yj) in y.iter().enumerate().skip(i + 1) {
                s -= cols[jj][i] * yj;
            }
            y[i] = if cols[i][i] == 0.0 { 0.0 } else { s / cols[i][i] };
        }
        for (yi, v) in y.iter().zip(&basis) {
            x.axpy(*yi, v);
        }
    }
    Ok((x, cx.stats))
}

#[cfg(test)]
mod tests {
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::distribution::Partition;

    fn dense_apply<'a>(a: &'a DMatrix<f64>, p: &'a Partition) -> impl FnMut(&DistVector) -> Result<DistVector, SolveError> + 'a {
        move |x| {
            let v = DVector::from_vec(x.to_fields(p).remove(0));
            let y = a * v;
            Ok(DistVector::from_fields(p, &[y.as_slice()]))
        }
    }

    fn random_system(n: usize, seed: u64) -> (DMatrix<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = DMatrix::from_fn(n, n, |i, j| if i == j { 4.0 } else { 0.0 } + rng.gen::<f64>() - 0.5);
        let b = (0..n).map(|_| rng.gen::<f64>() - 0.5).collect();
        (a, b)
    }

    fn expected_inner_products(stats: &GmresStats) -> usize {
        let steps: usize = stats
            .history
            .iter()
            .map(|r| r.step + 3 + if r.reorthogonalized { r.step + 2 } else { 0 })
            .sum();
        // initial ‖b‖ doubles as the first residual check
        stats.cycles + 1 + steps
    }

    #[test]
    fn zero_rhs_gives_zero_without_iterations() {
        let p = Partition::contiguous(5, 2).unwrap();
        let g = LocalityGroup::new(2).unwrap();
        let a = DMatrix::<f64>::identity(5, 5);
        let b = DistVector::zeros(&p, 1);
        let (x, s) = gmres(dense_apply(&a, &p), &b, &GmresConfig::default(), &g).unwrap();
        assert!(x.is_zero());
        assert_eq!(s.iterations, 0);
        assert!(s.converged);
    }

    #[test]
    fn identity_converges_in_one_step() {
        let p = Partition::contiguous(7, 3).unwrap();
        let g = LocalityGroup::new(3).unwrap();
        let a = DMatrix::<f64>::identity(7, 7);
        let bv: Vec<f64> = (0..7).map(|i| i as f64 - 2.5).collect();
        let b = DistVector::from_fields(&p, &[&bv]);
        let (x, s) = gmres(dense_apply(&a, &p), &b, &GmresConfig::default(), &g).unwrap();
        assert_eq!(s.iterations, 1);
        for (u, v) in x.to_fields(&p)[0].iter().zip(&bv) {
            assert!((u - v).abs() <= 1e-15 * 2.5);
        }
    }

    #[test]
    fn dense_system_matches_direct_solve() {
        for nl in [1, 3] {
            let (a, bv) = random_system(20, 4);
            let p = Partition::contiguous(20, nl).unwrap();
            let g = LocalityGroup::new(nl).unwrap();
            let b = DistVector::from_fields(&p, &[&bv]);
            let cfg = GmresConfig {
                restart: 20,
                max_restart: 2,
                eps_rel: 1e-13,
                eps_abs: 0.0,
            };
            let (x, s) = gmres(dense_apply(&a, &p), &b, &cfg, &g).unwrap();
            assert!(s.converged);
            let want = a.clone().lu().solve(&DVector::from_vec(bv.clone())).unwrap();
            let got = DVector::from_vec(x.to_fields(&p).remove(0));
            assert!((&got - &want).norm() <= 1e-10 * want.norm());
            assert_eq!(s.inner_products, expected_inner_products(&s));
        }
    }

    #[test]
    fn restarted_runs_meet_the_tolerance_and_count_products() {
        let (a, bv) = random_system(60, 9);
        let p = Partition::contiguous(60, 4).unwrap();
        let g = LocalityGroup::new(4).unwrap();
        let b = DistVector::from_fields(&p, &[&bv]);
        let cfg = GmresConfig {
            restart: 4,
            max_restart: 50,
            eps_rel: 1e-9,
            eps_abs: 1e-14,
        };
        let (x, s) = gmres(dense_apply(&a, &p), &b, &cfg, &g).unwrap();
        assert!(s.converged && s.restarts > 0);
        assert_eq!(s.restarts + 1, s.cycles);
        let r = DVector::from_vec(bv.clone()) - &a * DVector::from_vec(x.to_fields(&p).remove(0));
        assert!(r.norm() <= cfg.eps_rel * s.b_norm + cfg.eps_abs);
        assert!((r.norm() - s.residual).abs() <= 1e-12 * s.b_norm);
        assert_eq!(s.inner_products, expected_inner_products(&s));
        assert_eq!(g.traffic().reductions as usize, s.inner_products);
        for w in s.history.windows(2) {
            if w[0].cycle == w[1].cycle {
                assert!(w[1].residual <= w[0].residual * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn non_convergence_is_reported() {
        let (a, bv) = random_system(40, 2);
        let p = Partition::contiguous(40, 1).unwrap();
        let g = LocalityGroup::new(1).unwrap();
        let b = DistVector::from_fields(&p, &[&bv]);
        let cfg = GmresConfig {
            restart: 2,
            max_restart: 1,
            eps_rel: 1e-12,
            eps_abs: 0.0,
        };
        let (_, s) = gmres(dense_apply(&a, &p), &b, &cfg, &g).unwrap();
        assert!(!s.converged);
        assert_eq!(s.cycles, 2);
        assert!(s.residual > s.tolerance);
    }

    #[test]
    fn orthogonality_loss_triggers_reorthogonalization() {
        // nearly parallel columns make A·v close to span(v)
        let n = 12;
        let a = DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 + 1e-9 * i as f64 } else { 1e-9 * ((i * j) as f64).sin() });
        let bv: Vec<f64> = (0..n).map(|i| 1.0 + i as f64).collect();
        let p = Partition::contiguous(n, 2).unwrap();
        let g = LocalityGroup::new(2).unwrap();
        let b = DistVector::from_fields(&p, &[&bv]);
        let cfg = GmresConfig {
            restart: n,
            max_restart: 0,
            eps_rel: 1e-15,
            eps_abs: 0.0,
        };
        let (_, s) = gmres(dense_apply(&a, &p), &b, &cfg, &g).unwrap();
        assert!(s.history.iter().any(|r| r.reorthogonalized));
        assert_eq!(s.inner_products, expected_inner_products(&s));
    }
}
