//! Physical parameters, right-hand side, the boundary operator, restarted
//! GMRES and energies.
//!
//! Potentials here carry the `1/(4π)` of the Green's functions, so the
//! exterior potential of a charge `q` in a uniform medium `ε` is
//! `q/(4π ε r)`; energies multiply by `4π` and [`COULOMB_KCAL`] to reach
//! kcal/mol.

mod gmres;
mod operator;

use std::collections::HashSet;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::time::{Duration, Instant};

use thiserror::Error;

pub use gmres::{gmres, GmresConfig, GmresStats, IterationRecord};
pub use operator::{BoundaryOperator, OperatorTimings, Parts};

use crate::distribution::{DistVector, DistributionError};
use crate::engine::{DagOptions, Engine, EngineError, Strength, DEFAULT_LEAF_THRESHOLD};
use crate::io::AtomRecord;
use crate::kernels::{KernelError, PhysicalConfig};
use crate::multipole::{Kernel, Layer, View};
use crate::surface::{build_node_patches, NodePatch, SurfaceMesh};
use crate::{Vec3, COULOMB_KCAL};

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error("atom {atom} sits exactly on surface node {node}")]
    CoincidentAtom { atom: usize, node: usize },
    #[error("expected {expected} {what}, got {found}")]
    Dimension { what: &'static str, expected: usize, found: usize },
    #[error("GMRES did not converge: residual {residual:e} > tolerance {tolerance:e} after {iterations} iterations")]
    NotConverged {
        residual: f64,
        tolerance: f64,
        iterations: usize,
        report: Box<SolveReport>,
    },
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Distribution(#[from] DistributionError),
}

/// Numerical settings of a solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveConfig {
    /// Accuracy class of the far field, 3 or 6.
    pub accuracy: u32,
    pub restart: usize,
    pub max_restart: usize,
    pub eps_rel: f64,
    pub eps_abs: f64,
    pub leaf_threshold: usize,
    /// Worker threads; 0 uses every core.
    pub threads: usize,
    /// Simulated localities.
    pub localities: usize,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self::with_accuracy(3)
    }
}

impl SolveConfig {
    /// Defaults with `eps_rel = 10^-accuracy`.
    pub fn with_accuracy(accuracy: u32) -> Self {
        Self {
            accuracy,
            restart: 80,
            max_restart: 5,
            eps_rel: 10f64.powi(-(accuracy as i32)),
            eps_abs: 0.0,
            leaf_threshold: DEFAULT_LEAF_THRESHOLD,
            threads: 0,
            localities: 1,
        }
    }

    pub fn validate(&self) -> Result<(), SolveError> {
        let bad = |m: String| Err(SolveError::InvalidConfig(m));
        if self.accuracy != 3 && self.accuracy != 6 {
            return bad(format!("accuracy {} (available choices are 3 and 6)", self.accuracy));
        }
        // a tolerance below the far-field accuracy cannot be reached
        let floor = 10f64.powi(-(self.accuracy as i32));
        if !(self.eps_rel >= floor * (1.0 - 1e-12)) || !self.eps_rel.is_finite() {
            return bad(format!("relative tolerance {} is below 1e-{} for accuracy {}", self.eps_rel, self.accuracy, self.accuracy));
        }
        if !(self.eps_abs >= 0.0) || !self.eps_abs.is_finite() {
            return bad(format!("absolute tolerance {} must be finite and non-negative", self.eps_abs));
        }
        if self.restart == 0 {
            return bad("restart length must be at least 1".into());
        }
        if self.leaf_threshold == 0 {
            return bad("leaf threshold must be at least 1".into());
        }
        if self.localities == 0 {
            return bad("at least one locality is required".into());
        }
        Ok(())
    }

    pub fn gmres(&self) -> GmresConfig {
        GmresConfig {
            restart: self.restart,
            max_restart: self.max_restart,
            eps_rel: self.eps_rel,
            eps_abs: self.eps_abs,
        }
    }
}

/// Inverse Debye length in Å⁻¹:
/// `κ² = 8π N_A e² I / (1000 ε_ext k_B T)` in CGS units with `I` in mol/L.
pub fn compute_kappa(cfg: &PhysicalConfig) -> f64 {
    // CODATA 2018 exact values
    const N_A: f64 = 6.022_140_76e23;
    const K_B_ERG: f64 = 1.380_649e-16;
    // elementary charge in statcoulomb: e[C] · c[cm/s] / 10
    const E_STATC: f64 = 1.602_176_634e-19 * 2.997_924_58e10 / 10.0;
    if cfg.ionic_strength <= 0.0 {
        return 0.0;
    }
    let molar = cfg.ionic_strength / 1000.0;
    let kappa2_cm = 8.0 * PI * N_A * E_STATC * E_STATC * molar / (1000.0 * cfg.eps_ext * K_B_ERG * cfg.temperature);
    // cm⁻² → Å⁻²
    (kappa2_cm * 1e-16).sqrt()
}

fn check_coincident(atoms: &[AtomRecord], nodes: &[NodePatch]) -> Result<(), SolveError> {
    let key = |v: &Vec3| [v.x.to_bits(), v.y.to_bits(), v.z.to_bits()];
    let at: HashSet<[u64; 3]> = atoms.iter().map(|a| key(&a.center)).collect();
    if let Some(node) = nodes.iter().position(|n| at.contains(&key(&n.position))) {
        let atom = atoms.iter().position(|a| a.center == nodes[node].position).unwrap();
        return Err(SolveError::CoincidentAtom { atom, node });
    }
    Ok(())
}

/// `b₁ = (1/ε_ext) Σ_k q_k G(p, r_k)` and `b₂ = (1/ε_ext) Σ_k q_k ∂G/∂n₀`
/// at every node `p`, from one engine evaluation.
pub fn compute_rhs(
    atoms: &[AtomRecord],
    nodes: &[NodePatch],
    phys: &PhysicalConfig,
    engine: &mut Engine,
    cfg: &SolveConfig,
) -> Result<(Vec<f64>, Vec<f64>), SolveError> {
    check_coincident(atoms, nodes)?;
    if atoms.is_empty() {
        return Ok((vec![0.0; nodes.len()], vec![0.0; nodes.len()]));
    }
    let src: Vec<Vec3> = atoms.iter().map(|a| a.center).collect();
    let tgt: Vec<Vec3> = nodes.iter().map(|n| n.position).collect();
    let nrm: Vec<Vec3> = nodes.iter().map(|n| n.normal).collect();
    let s: Vec<Strength> = atoms
        .iter()
        .map(|a| Strength {
            charge: a.charge / phys.eps_ext,
            dipole: Vec3::zeros(),
        })
        .collect();
    let view = View {
        kernel: Kernel::Laplace,
        layer: Layer::Single,
    };
    let out = engine.evaluate(&src, &tgt, Some(&nrm), cfg.leaf_threshold, DagOptions::new(vec![view], cfg.accuracy), &[&s])?;
    Ok((out[0].iter().map(|v| v.potential).collect(), out[0].iter().map(|v| v.dn0).collect()))
}

/// Reaction potential at every atom, `Σ_j (ε̄ h_j G − f_j ∂G/∂n) ΔS_j`, from
/// one engine evaluation with the nodes as sources.
pub fn reaction_potential(
    atoms: &[AtomRecord],
    nodes: &[NodePatch],
    f: &[f64],
    h: &[f64],
    phys: &PhysicalConfig,
    engine: &mut Engine,
    cfg: &SolveConfig,
) -> Result<Vec<f64>, SolveError> {
    check_coincident(atoms, nodes)?;
    if f.len() != nodes.len() || h.len() != nodes.len() {
        return Err(SolveError::Dimension {
            what: "node values",
            expected: nodes.len(),
            found: f.len().min(h.len()),
        });
    }
    if atoms.is_empty() {
        return Ok(vec![]);
    }
    let eb = phys.eps_bar();
    let src: Vec<Vec3> = nodes.iter().map(|n| n.position).collect();
    let tgt: Vec<Vec3> = atoms.iter().map(|a| a.center).collect();
    let s: Vec<Strength> = nodes
        .iter()
        .zip(f.iter().zip(h))
        .map(|(n, (&f, &h))| Strength {
            charge: eb * h * n.area,
            dipole: -f * n.area * n.normal,
        })
        .collect();
    let view = View {
        kernel: Kernel::Laplace,
        layer: Layer::Combined,
    };
    let out = engine.evaluate(&src, &tgt, None, cfg.leaf_threshold, DagOptions::new(vec![view], cfg.accuracy), &[&s])?;
    Ok(out[0].iter().map(|v| v.potential).collect())
}

/// `½ Σ_k q_k φ_reac(r_k)` in kcal/mol.
pub fn polar_energy(
    atoms: &[AtomRecord],
    nodes: &[NodePatch],
    f: &[f64],
    h: &[f64],
    phys: &PhysicalConfig,
    engine: &mut Engine,
    cfg: &SolveConfig,
) -> Result<f64, SolveError> {
    let phi = reaction_potential(atoms, nodes, f, h, phys, engine, cfg)?;
    let sum: f64 = atoms.iter().zip(&phi).map(|(a, p)| a.charge * p).sum();
    Ok(0.5 * sum * 4.0 * PI * COULOMB_KCAL)
}

/// `γ·area + p·volume` in kcal/mol.
pub fn nonpolar_energy(mesh: &SurfaceMesh, phys: &PhysicalConfig) -> f64 {
    phys.surface_tension * mesh.total_area + phys.pressure * mesh.volume
}

/// Surface potential `f` and its normal derivative `h` per node.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolutionFields {
    pub f: Vec<f64>,
    pub h: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EnergyReport {
    pub polar: f64,
    pub nonpolar: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PhaseTimings {
    pub setup: Duration,
    pub rhs: Duration,
    pub solve: Duration,
    pub energy: Duration,
    pub operator: OperatorTimings,
    pub reduction: Duration,
}

/// Everything a solve produced except the fields.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolveReport {
    pub atoms: usize,
    pub nodes: usize,
    pub triangles: usize,
    pub localities: usize,
    pub threads: usize,
    pub kappa: f64,
    pub accuracy: u32,
    pub near_pairs: usize,
    pub gmres: GmresStats,
    pub energy: EnergyReport,
    pub timings: PhaseTimings,
}

impl SolveReport {
    /// Log text. Lines starting with `time` hold wall-clock timings; all
    /// other lines depend only on the inputs.
    pub fn log(&self) -> String {
        let mut s = String::new();
        let g = &self.gmres;
        let _ = writeln!(s, "atoms {}", self.atoms);
        let _ = writeln!(s, "nodes {} triangles {}", self.nodes, self.triangles);
        let _ = writeln!(s, "localities {}", self.localities);
        let _ = writeln!(s, "kappa {:.10e} 1/A", self.kappa);
        let _ = writeln!(s, "accuracy {}", self.accuracy);
        let _ = writeln!(s, "near_pairs {}", self.near_pairs);
        let _ = writeln!(s, "rhs_norm {:.10e} tolerance {:.10e}", g.b_norm, g.tolerance);
        for r in &g.history {
            let _ = writeln!(
                s,
                "iter cycle {} step {} residual {:.10e}{}",
                r.cycle,
                r.step,
                r.residual,
                if r.reorthogonalized { " reorth" } else { "" }
            );
        }
        let _ = writeln!(
            s,
            "gmres {} iterations {} restarts {} inner_products {} matvecs residual {:.10e} {}",
            g.iterations,
            g.restarts,
            g.inner_products,
            g.matvecs,
            g.residual,
            if g.converged { "converged" } else { "not_converged" }
        );
        let _ = writeln!(s, "energy polar {:.10} kcal/mol", self.energy.polar);
        let _ = writeln!(s, "energy nonpolar {:.10} kcal/mol", self.energy.nonpolar);
        let _ = writeln!(s, "energy total {:.10} kcal/mol", self.energy.total);
        let t = &self.timings;
        let o = &t.operator;
        let _ = writeln!(s, "time threads {}", self.threads);
        for (name, d) in [
            ("setup", t.setup),
            ("rhs", t.rhs),
            ("solve", t.solve),
            ("energy", t.energy),
            ("far_field", o.far_field),
            ("near_field", o.near_field),
            ("near_setup", o.near_setup),
            ("exchange", o.exchange),
            ("reduction", t.reduction),
        ] {
            let _ = writeln!(s, "time {name} {:.6} s", d.as_secs_f64());
        }
        s
    }
}

#[derive(Debug, Clone)]
pub struct SolveOutput {
    pub fields: SolutionFields,
    pub report: SolveReport,
}

/// Patches, operator, right-hand side, GMRES and energies.
pub fn solve(atoms: &[AtomRecord], mesh: &SurfaceMesh, phys: &PhysicalConfig, cfg: &SolveConfig) -> Result<SolveOutput, SolveError> {
    let t = Instant::now();
    let patches = build_node_patches(mesh);
    let mut op = BoundaryOperator::new(&patches, phys, cfg)?;
    let setup = t.elapsed();
    let mut out = solve_with(&mut op, &patches, atoms, cfg)?;
    out.report.triangles = mesh.triangles.len();
    out.report.timings.setup += setup;
    out.report.energy.nonpolar = nonpolar_energy(mesh, phys);
    out.report.energy.total = out.report.energy.polar + out.report.energy.nonpolar;
    Ok(out)
}

/// Solve with an existing operator, reusing its near-field cache. The
/// operator is switched to `cfg.accuracy`; its thread count and locality
/// partition are kept. Nonpolar energy is left at zero.
pub fn solve_with(op: &mut BoundaryOperator, patches: &[NodePatch], atoms: &[AtomRecord], cfg: &SolveConfig) -> Result<SolveOutput, SolveError> {
    cfg.validate()?;
    if patches.len() != op.len() {
        return Err(SolveError::Dimension {
            what: "patches",
            expected: op.len(),
            found: patches.len(),
        });
    }
    op.set_accuracy(cfg.accuracy)?;
    let phys = *op.physical();
    let mut engine = Engine::new(op.threads())?;
    let before = op.timings();

    let t = Instant::now();
    let (b1, b2) = compute_rhs(atoms, patches, &phys, &mut engine, cfg)?;
    let rhs = t.elapsed();

    let t = Instant::now();
    let partition = op.partition().clone();
    let group = op.group().clone();
    let b = DistVector::from_fields(&partition, &[&b1, &b2]);
    let (x, stats) = gmres(|v| op.apply(v), &b, &cfg.gmres(), &group)?;
    let solve_time = t.elapsed();
    let mut fields = x.to_fields(&partition);
    let h = fields.pop().unwrap();
    let f = fields.pop().unwrap();

    let after = op.timings();
    let mut report = SolveReport {
        atoms: atoms.len(),
        nodes: patches.len(),
        localities: partition.n_localities(),
        threads: op.threads(),
        kappa: phys.kappa,
        accuracy: cfg.accuracy,
        near_pairs: op.near_pairs(),
        timings: PhaseTimings {
            rhs,
            solve: solve_time,
            reduction: stats.reduction_time,
            operator: OperatorTimings {
                far_field: after.far_field - before.far_field,
                near_field: after.near_field - before.near_field,
                near_setup: after.near_setup - before.near_setup,
                exchange: after.exchange - before.exchange,
                products: after.products - before.products,
            },
            ..Default::default()
        },
        gmres: stats,
        ..Default::default()
    };
    if !report.gmres.converged {
        return Err(SolveError::NotConverged {
            residual: report.gmres.residual,
            tolerance: report.gmres.tolerance,
            iterations: report.gmres.iterations,
            report: Box::new(report),
        });
    }

    let t = Instant::now();
    report.energy.polar = polar_energy(atoms, patches, &f, &h, &phys, &mut engine, cfg)?;
    report.energy.total = report.energy.polar;
    report.timings.energy = t.elapsed();
    Ok(SolveOutput {
        fields: SolutionFields { f, h },
        report,
    })
}
