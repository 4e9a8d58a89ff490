//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the lines always reach stdout.
//! Exits nonzero if any criterion fails, except the threading speedup,
//! which is only enforced on machines with at least four cores.

mod common;

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use common::*;
use nalgebra::{DMatrix, DVector};
use pbbem::distribution::{DistVector, FullPatchSerializer, KrylovSerializer, LocalityGroup, NodeState, Partition, Serializer};
use pbbem::engine::{DagOptions, Engine, FieldValue, Strength};
use pbbem::io::AtomRecord;
use pbbem::kernels::{eval_laplace, eval_yukawa, PhysicalConfig};
use pbbem::multipole::{Kernel, Layer, View};
use pbbem::solver::{compute_rhs, gmres, solve_with, BoundaryOperator, GmresConfig, SolveConfig, SolveOutput};
use pbbem::surface::{build_node_patches, generate_icosphere, NodePatch};
use pbbem::Vec3;
use rand::Rng;

struct Outcome {
    failures: Vec<usize>,
    waived: Vec<usize>,
    residuals: Vec<(String, f64, f64)>,
    /// Largest relative energy difference between restart lengths, and a summary.
    restart: Option<(f64, String)>,
}

impl Outcome {
    fn report(&mut self, id: usize, name: &str, pass: bool, detail: String) {
        println!("{} {id} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
        if !pass {
            self.failures.push(id);
        }
    }
}

/// Charges near the surface of the Born sphere; unlike the central charge
/// these need many GMRES iterations.
fn off_centre() -> Vec<AtomRecord> {
    [(Vec3::new(38.0, 5.0, -3.0), 20.0), (Vec3::new(-20.0, 30.0, 12.0), -15.0), (Vec3::new(4.0, -9.0, -41.0), 25.0)]
        .into_iter()
        .map(|(center, charge)| AtomRecord { center, charge, radius: 1.0 })
        .collect()
}

fn born_phys(eps_int: f64, eps_ext: f64) -> PhysicalConfig {
    PhysicalConfig::new(eps_int, eps_ext, 0.0, 300.0)
}

fn born_config(accuracy: u32, threads: usize, localities: usize) -> SolveConfig {
    SolveConfig {
        threads,
        localities,
        ..SolveConfig::with_accuracy(accuracy)
    }
}

/// Solve and independently recompute `‖b − A x‖` with a fresh right-hand
/// side and one extra product.
fn solve_checked(
    out: &mut Outcome,
    label: &str,
    op: &mut BoundaryOperator,
    patches: &[NodePatch],
    atoms: &[AtomRecord],
    cfg: &SolveConfig,
) -> SolveOutput {
    let sol = solve_with(op, patches, atoms, cfg).unwrap_or_else(|e| panic!("{label}: {e}"));
    let phys = *op.physical();
    let mut engine = Engine::new(1).unwrap();
    let (b1, b2) = compute_rhs(atoms, patches, &phys, &mut engine, cfg).unwrap();
    let (y1, y2) = op.apply_global(&sol.fields.f, &sol.fields.h).unwrap();
    let r: f64 = b1.iter().zip(&y1).chain(b2.iter().zip(&y2)).map(|(b, y)| (b - y) * (b - y)).sum::<f64>().sqrt();
    let bn: f64 = b1.iter().chain(&b2).map(|b| b * b).sum::<f64>().sqrt();
    out.residuals.push((label.to_string(), r, cfg.eps_rel * bn + cfg.eps_abs));
    sol
}

/// Criteria 1, 5 and 9 and the restart half of 7, all on the s=6 Born
/// sphere. One operator serves every solve with one thread and one
/// locality, so the near field is integrated as few times as possible.
fn born_sphere(out: &mut Outcome) {
    let mesh = generate_icosphere(BORN_RADIUS, Vec3::zeros(), 6);
    let patches = build_node_patches(&mesh);
    let atoms = central_charge();
    let phys = born_phys(2.0, 80.0);
    let exact = born_energy(BORN_CHARGE, BORN_RADIUS, 2.0, 80.0);
    println!("  born sphere: {} nodes, {} triangles", patches.len(), mesh.triangles.len());

    // 1: accuracy 3 and 6
    let mut op = BoundaryOperator::new(&patches, &phys, &born_config(3, 1, 1)).unwrap();
    let mut energies = vec![];
    for acc in [3, 6] {
        let t = Instant::now();
        let sol = solve_checked(out, &format!("born acc {acc}"), &mut op, &patches, &atoms, &born_config(acc, 1, 1));
        let e = sol.report.energy.polar;
        println!(
            "  born acc {acc}: E_pol {e:.3} kcal/mol, {} iterations, {:.1} s",
            sol.report.gmres.iterations,
            t.elapsed().as_secs_f64()
        );
        energies.push(e);
    }
    let err: Vec<f64> = energies.iter().map(|e| ((e - exact) / exact).abs()).collect();
    out.report(
        1,
        "Born sphere polar energy",
        err[0] <= 0.015 && err[1] <= 0.015 && err[1] <= err[0],
        format!(
            "acc3 {:.3} ({:.3}%), acc6 {:.3} ({:.3}%), analytic {exact:.3}, tol 1.5%",
            energies[0],
            100.0 * err[0],
            energies[1],
            100.0 * err[1]
        ),
    );

    // 7: restart 200 vs 10 at accuracy 6. The second-kind system converges
    // in a handful of iterations, so a cycle of 2 is added to make sure
    // restarts actually happen, and off-centre charges to need more steps.
    let long = SolveConfig {
        restart: 200,
        ..born_config(6, 1, 1)
    };
    let short = SolveConfig {
        restart: 10,
        max_restart: 100,
        ..born_config(6, 1, 1)
    };
    let forced = SolveConfig {
        restart: 2,
        max_restart: 200,
        ..born_config(6, 1, 1)
    };
    let mut rel: f64 = 0.0;
    let mut detail = vec![];
    for (label, atoms) in [("central", central_charge()), ("off-centre", off_centre())] {
        let l = solve_checked(out, &format!("{label} restart 200"), &mut op, &patches, &atoms, &long).report;
        for (m, cfg) in [(10, &short), (2, &forced)] {
            let s = solve_checked(out, &format!("{label} restart {m}"), &mut op, &patches, &atoms, cfg).report;
            rel = rel.max(((l.energy.polar - s.energy.polar) / l.energy.polar).abs());
            detail.push(format!(
                "{label} restart 200 {:.4} ({} it) vs {m} {:.4} ({} it, {} restarts)",
                l.energy.polar, l.gmres.iterations, s.energy.polar, s.gmres.iterations, s.gmres.restarts
            ));
        }
    }
    out.restart = Some((rel, detail.join(", ")));

    // 5: localities, accuracy 3; the single-locality runs reuse `op`
    op.set_accuracy(3).unwrap();
    let configs = [("central", central_charge()), ("off-centre", off_centre())];
    let mut runs: Vec<Vec<(usize, f64, usize, u64)>> = vec![vec![]; configs.len()];
    for n in [1, 2, 4, 8] {
        let cfg = born_config(3, 1, n);
        let mut fresh = (n > 1).then(|| BoundaryOperator::new(&patches, &phys, &cfg).unwrap());
        let o = fresh.as_mut().unwrap_or(&mut op);
        for (k, (label, atoms)) in configs.iter().enumerate() {
            let sol = solve_checked(out, &format!("{label} {n} localities"), o, &patches, atoms, &cfg);
            runs[k].push((n, sol.report.energy.polar, sol.report.gmres.iterations, o.group().traffic().bytes));
        }
    }
    let mut pass = true;
    let mut detail = vec![];
    for ((label, _), runs) in configs.iter().zip(&runs) {
        let e0 = runs[0].1;
        let spread = runs.iter().map(|r| ((r.1 - e0) / e0).abs()).fold(0.0, f64::max);
        pass &= spread <= 1e-10 && runs.iter().all(|r| r.2 == runs[0].2);
        detail.push(format!(
            "{label} [{}] spread {spread:.1e}",
            runs.iter()
                .map(|(n, e, it, b)| format!("{n}: {e:.6} in {it} it, {b} B"))
                .collect::<Vec<_>>()
                .join(", ")
        ));
    }
    out.report(5, "locality invariance", pass, format!("{} (tol 1e-10)", detail.join("; ")));

    // 9: the same operator at 1 thread vs a fresh one at 4
    let n = patches.len();
    let (f, h) = (random_values(n, 91), random_values(n, 92));
    let time = |op: &mut BoundaryOperator| {
        op.apply_global(&f, &h).unwrap();
        let t = Instant::now();
        let mut last = None;
        for _ in 0..3 {
            last = Some(op.apply_global(&f, &h).unwrap());
        }
        (t.elapsed(), last.unwrap())
    };
    let (t1, y1) = time(&mut op);
    drop(op);
    let mut op4 = BoundaryOperator::new(&patches, &phys, &born_config(3, 4, 1)).unwrap();
    let (t4, y4) = time(&mut op4);
    let bitwise = y1.0.iter().zip(&y4.0).chain(y1.1.iter().zip(&y4.1)).all(|(a, b)| a.to_bits() == b.to_bits());
    let speedup = t1.as_secs_f64() / t4.as_secs_f64();
    let cores = std::thread::available_parallelism().map_or(1, |c| c.get());
    let pass = bitwise && speedup >= 2.0;
    out.report(
        9,
        "thread scaling and determinism",
        pass,
        format!(
            "3 products: 1 thread {:.2} s, 4 threads {:.2} s, speedup {speedup:.2}x (need 2x), bitwise identical {bitwise}, {cores} core(s) available",
            t1.as_secs_f64(),
            t4.as_secs_f64()
        ),
    );
    if !pass && bitwise && cores < 4 {
        out.failures.retain(|&c| c != 9);
        out.waived.push(9);
    }
}

fn direct_views(src: &[Vec3], tgt: &[Vec3], nrm: &[Vec3], views: &[View], s: &[Vec<Strength>]) -> Vec<Vec<FieldValue>> {
    use rayon::prelude::*;
    views
        .iter()
        .zip(s)
        .map(|(v, s)| {
            (0..tgt.len())
                .into_par_iter()
                .map(|i| {
                    let mut acc = FieldValue::default();
                    for (j, p) in src.iter().enumerate() {
                        let q = s[j].charge;
                        let d = s[j].dipole;
                        let dl = d.norm();
                        let dir = if dl > 0.0 { d / dl } else { Vec3::x() };
                        let k = match v.kernel {
                            Kernel::Laplace => eval_laplace(&tgt[i], p, &dir, &nrm[i]),
                            Kernel::Yukawa(kappa) => eval_yukawa(&tgt[i], p, &dir, &nrm[i], kappa),
                        }
                        .unwrap();
                        if v.layer != Layer::Double {
                            acc.potential += q * k.value;
                            acc.dn0 += q * k.dn0;
                        }
                        if v.layer != Layer::Single {
                            acc.potential += dl * k.dn;
                            acc.dn0 += dl * k.dn0dn;
                        }
                    }
                    acc
                })
                .collect()
        })
        .collect()
}

fn random_points(n: usize, side: f64, seed: u64) -> Vec<Vec3> {
    let mut r = rng(seed);
    (0..n)
        .map(|_| Vec3::new(r.gen_range(0.0..side), r.gen_range(0.0..side), r.gen_range(0.0..side)))
        .collect()
}

fn random_unit(n: usize, seed: u64) -> Vec<Vec3> {
    let mut r = rng(seed);
    (0..n)
        .map(|_| loop {
            let v = Vec3::new(r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0));
            let l = v.norm();
            if l > 0.1 && l < 1.0 {
                break v / l;
            }
        })
        .collect()
}

fn random_strengths(n: usize, seed: u64) -> Vec<Strength> {
    let mut r = rng(seed);
    let dirs = random_unit(n, seed + 1);
    dirs.into_iter()
        .map(|d| Strength {
            charge: r.gen_range(-1.0..1.0),
            dipole: r.gen_range(-1.0..1.0) * d,
        })
        .collect()
}

fn criterion_2(out: &mut Outcome) {
    let n = 5000;
    let src = random_points(n, 40.0, 1);
    let tgt = random_points(n, 40.0, 2);
    let nrm = random_unit(n, 3);
    let kappa = PhysicalConfig::default().kappa;
    let views = vec![
        View { kernel: Kernel::Laplace, layer: Layer::Single },
        View { kernel: Kernel::Laplace, layer: Layer::Double },
        View { kernel: Kernel::Yukawa(kappa), layer: Layer::Single },
        View { kernel: Kernel::Yukawa(kappa), layer: Layer::Double },
    ];
    let strengths: Vec<Vec<Strength>> = (0..4).map(|v| random_strengths(n, 10 + 2 * v)).collect();
    let exact = direct_views(&src, &tgt, &nrm, &views, &strengths);
    let refs: Vec<&[Strength]> = strengths.iter().map(Vec::as_slice).collect();
    let mut engine = Engine::new(0).unwrap();
    let mut worst = vec![];
    for (acc, tol) in [(3, 1e-3), (6, 1e-6)] {
        let got = engine.evaluate(&src, &tgt, Some(&nrm), 40, DagOptions::new(views.clone(), acc), &refs).unwrap();
        let mut errs = vec![];
        for v in 0..4 {
            let pick = |x: &[FieldValue], f: fn(&FieldValue) -> f64| x.iter().map(f).collect::<Vec<_>>();
            let ep = rel_l2(&pick(&got[v], |x| x.potential), &pick(&exact[v], |x| x.potential));
            let ed = rel_l2(&pick(&got[v], |x| x.dn0), &pick(&exact[v], |x| x.dn0));
            errs.push(ep.max(ed));
        }
        let m = errs.iter().cloned().fold(0.0, f64::max);
        worst.push((acc, m, tol, errs));
    }
    let pass = worst.iter().all(|(_, m, tol, _)| m <= tol);
    let detail = worst
        .iter()
        .map(|(acc, m, tol, e)| format!("acc{acc} worst {m:.2e} <= {tol:.0e} [LS {:.1e} LD {:.1e} YS {:.1e} YD {:.1e}]", e[0], e[1], e[2], e[3]))
        .collect::<Vec<_>>()
        .join("; ");
    out.report(2, "FMM accuracy classes, 5000 points", pass, detail);
}

fn criterion_3(out: &mut Outcome) {
    let mesh = generate_icosphere(BORN_RADIUS, Vec3::zeros(), 2);
    let patches = build_node_patches(&mesh);
    let phys = PhysicalConfig::default();
    // a small leaf threshold so both near and far pairs occur
    let cfg = SolveConfig {
        leaf_threshold: 8,
        ..born_config(6, 1, 1)
    };
    let n = patches.len();
    let dense = dense_operator(&patches, &phys, cfg.leaf_threshold);
    let (f, h) = (random_values(n, 31), random_values(n, 32));
    let x = DVector::from_iterator(2 * n, f.iter().chain(&h).copied());
    let want = &dense * &x;
    let mut op = BoundaryOperator::new(&patches, &phys, &cfg).unwrap();
    let (y1, y2) = op.apply_global(&f, &h).unwrap();
    let got: Vec<f64> = y1.into_iter().chain(y2).collect();
    let err = rel_l2(&got, want.as_slice());
    out.report(
        3,
        "dense operator oracle, s=2",
        err <= 1e-5,
        format!(
            "{n} nodes, {} of {} pairs near, relative error {err:.2e} (tol 1e-5)",
            op.near_pairs(),
            n * n
        ),
    );
}

fn criterion_4(out: &mut Outcome) {
    let phys = born_phys(80.0, 80.0);
    let small = build_node_patches(&generate_icosphere(BORN_RADIUS, Vec3::zeros(), 2));
    let mut op = BoundaryOperator::new(&small, &phys, &born_config(6, 1, 1)).unwrap();
    let (f, h) = (random_values(small.len(), 41), random_values(small.len(), 42));
    let (y1, y2) = op.apply_global(&f, &h).unwrap();
    let id_err = y1.iter().zip(&f).chain(y2.iter().zip(&h)).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);

    let mesh = generate_icosphere(BORN_RADIUS, Vec3::zeros(), 5);
    let patches = build_node_patches(&mesh);
    let atoms = vec![
        AtomRecord { center: Vec3::new(10.0, -5.0, 3.0), charge: 30.0, radius: 1.0 },
        AtomRecord { center: Vec3::new(-12.0, 8.0, -20.0), charge: 20.0, radius: 1.0 },
    ];
    let cfg = born_config(6, 1, 1);
    let mut op = BoundaryOperator::new(&patches, &phys, &cfg).unwrap();
    let sol = solve_checked(out, "matched dielectric s=5", &mut op, &patches, &atoms, &cfg);
    let coulomb: Vec<f64> = patches
        .iter()
        .map(|p| atoms.iter().map(|a| a.charge / (4.0 * PI * 80.0 * (p.position - a.center).norm())).sum())
        .collect();
    let f_err = rel_l2(&sol.fields.f, &coulomb);
    // Born magnitude of the same charge and sphere in a uniform ε = 80
    let scale = (332.0637 / 2.0) * BORN_CHARGE * BORN_CHARGE / BORN_RADIUS / 80.0;
    let e = sol.report.energy.polar;
    out.report(
        4,
        "matched-dielectric identity",
        id_err <= 1e-12 && f_err <= 1e-6 && e.abs() <= 0.005 * scale,
        format!(
            "identity max error {id_err:.1e} (tol 1e-12); f vs Coulomb {f_err:.1e} (tol 1e-6); |E_pol| {:.2e} <= 0.5% of {scale:.2}",
            e.abs()
        ),
    );
}

fn criterion_6(out: &mut Outcome) {
    let n = 2000;
    let src = random_points(n, 30.0, 61);
    let tgt = random_points(n, 30.0, 62);
    let nrm = random_unit(n, 63);
    let views = vec![
        View { kernel: Kernel::Laplace, layer: Layer::Combined },
        View { kernel: Kernel::Yukawa(0.2), layer: Layer::Combined },
    ];
    let mut engine = Engine::new(0).unwrap();
    let t = engine.create_tree(&src, &tgt, Some(&nrm), 40).unwrap();
    let d = engine.create_dag(t, DagOptions::new(views.clone(), 6)).unwrap();
    let mut worst: f64 = 0.0;
    for k in 0..3 {
        let s: Vec<Vec<Strength>> = (0..2).map(|v| random_strengths(n, 100 + 10 * k + 2 * v)).collect();
        let refs: Vec<&[Strength]> = s.iter().map(Vec::as_slice).collect();
        if k > 0 {
            engine.reset_dag(d).unwrap();
        }
        let phased = engine.execute_dag(d, &refs).unwrap();
        let mut fresh_engine = Engine::new(0).unwrap();
        let fresh = fresh_engine.evaluate(&src, &tgt, Some(&nrm), 40, DagOptions::new(views.clone(), 6), &refs).unwrap();
        for (a, b) in phased.iter().flatten().zip(fresh.iter().flatten()) {
            for (x, y) in [(a.potential, b.potential), (a.dn0, b.dn0)] {
                worst = worst.max((x - y).abs() / y.abs().max(f64::MIN_POSITIVE));
            }
        }
    }
    out.report(6, "phased API equivalence", worst <= 1e-14, format!("3 reset products, max relative difference {worst:.1e} (tol 1e-14)"));
}

fn criterion_7(out: &mut Outcome) {
    // dense 20×20 against LU
    let mut r = rng(71);
    let n = 20;
    let a = DMatrix::from_fn(n, n, |i, j| if i == j { 4.0 } else { 0.0 } + r.gen_range(-0.5..0.5));
    let b: Vec<f64> = (0..n).map(|_| r.gen_range(-1.0..1.0)).collect();
    let exact = a.clone().lu().solve(&DVector::from_vec(b.clone())).unwrap();
    let part = Partition::contiguous(n, 3).unwrap();
    let group = LocalityGroup::new(3).unwrap();
    let cfg = GmresConfig {
        restart: 20,
        max_restart: 2,
        eps_rel: 1e-14,
        eps_abs: 0.0,
    };
    let (x, _) = gmres(
        |v: &DistVector| {
            let xv = DVector::from_vec(v.to_fields(&part).remove(0));
            let y = &a * xv;
            Ok(DistVector::from_fields(&part, &[y.as_slice()]))
        },
        &DistVector::from_fields(&part, &[&b]),
        &cfg,
        &group,
    )
    .unwrap();
    let x = x.to_fields(&part).remove(0);
    let dense_err = x.iter().zip(exact.iter()).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max) / exact.amax();

    let (rel, restart_detail) = out.restart.clone().expect("Born-sphere restart runs");

    let worst = out.residuals.iter().map(|(_, r, t)| r / t).fold(0.0, f64::max);
    let all_ok = out.residuals.iter().all(|(_, r, t)| r <= t);
    for (label, r, t) in &out.residuals {
        println!("  residual {label}: {r:.3e} <= {t:.3e}");
    }
    out.report(
        7,
        "GMRES contract",
        all_ok && dense_err <= 1e-10 && rel <= 0.002,
        format!(
            "{} solves, worst residual/tolerance {worst:.3}; dense 20x20 error {dense_err:.1e} (tol 1e-10); {restart_detail}; max difference {:.4}% (tol 0.2%)",
            out.residuals.len(),
            100.0 * rel
        ),
    );
}

fn criterion_8(out: &mut Outcome) {
    let patches = build_node_patches(&generate_icosphere(BORN_RADIUS, Vec3::zeros(), 3));
    let mut r = rng(81);
    let (full, krylov) = (FullPatchSerializer, KrylovSerializer);
    let (mut full_bytes, mut krylov_bytes, mut ok, mut min_ratio) = (0usize, 0usize, true, f64::INFINITY);
    for (i, p) in patches.iter().enumerate() {
        let node = NodeState {
            index: i as u64,
            patch: p.clone(),
            f: r.gen_range(-1.0..1.0),
            h: r.gen_range(-1.0..1.0),
        };
        let mut buf = vec![];
        full.serialize(&node, &mut buf);
        let mut back = NodeState::default();
        ok &= buf.len() == full.size(&node) && full.deserialize(&buf, &mut back) == Ok(buf.len()) && back == node;
        full_bytes += buf.len();
        let fb = buf.len();

        let mut buf = vec![];
        krylov.serialize(&node, &mut buf);
        let mut back = NodeState { f: 0.0, h: 0.0, ..node.clone() };
        ok &= buf.len() == krylov.size(&node) && krylov.deserialize(&buf, &mut back) == Ok(buf.len()) && back == node;
        krylov_bytes += buf.len();
        min_ratio = min_ratio.min(fb as f64 / buf.len() as f64);
    }
    let ratio = full_bytes as f64 / krylov_bytes as f64;
    out.report(
        8,
        "serializer contract",
        ok && min_ratio >= 5.0,
        format!(
            "{} nodes round-trip {ok}; full {full_bytes} B vs Krylov {krylov_bytes} B, ratio {ratio:.1}x (per node min {min_ratio:.1}x, need 5x)",
            patches.len()
        ),
    );
}

fn main() {
    if std::env::args().any(|a| a == "--list") {
        // nothing to list for test discovery
        return;
    }
    let start = Instant::now();
    let mut out = Outcome {
        failures: vec![],
        waived: vec![],
        residuals: vec![],
        restart: None,
    };
    let steps: [(&str, fn(&mut Outcome)); 7] = [
        ("2", criterion_2),
        ("3", criterion_3),
        ("4", criterion_4),
        ("6", criterion_6),
        ("8", criterion_8),
        ("1, 5, 9", born_sphere),
        ("7", criterion_7),
    ];
    let mut times: Vec<(&str, Duration)> = vec![];
    for (name, step) in steps {
        let t = Instant::now();
        step(&mut out);
        times.push((name, t.elapsed()));
    }
    for (name, t) in times {
        println!("  time criterion {name}: {:.1} s", t.as_secs_f64());
    }
    if !out.waived.is_empty() {
        println!("  not enforced on this machine (fewer than 4 cores): {:?}", out.waived);
    }
    println!("acceptance finished in {:.0} s", start.elapsed().as_secs_f64());
    if !out.failures.is_empty() {
        println!("failed criteria: {:?}", out.failures);
        std::process::exit(1);
    }
}
