//! Command-line front end: flag parsing, input loading, solve, outputs.
//!
//! Exit codes:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | solved and converged |
//! | 1 | GMRES did not converge; the log holds the final residual |
//! | 2 | usage error (unknown flag, bad value, missing input) |
//! | 3 | an input or output file could not be read or written |
//! | 4 | an input file is malformed |
//! | 5 | the mesh is not a closed orientable surface |
//! | 6 | any other solver failure |

use std::fs;
use std::io::Write;
use std::path::PathBuf;

use clap::Parser;

use crate::io::{read_msms, read_off, read_pqr, write_potential_file, FormatError};
use crate::kernels::PhysicalConfig;
use crate::solver::{self, SolveConfig, SolveError, SolveReport};
use crate::surface::{build_node_patches, generate_icosphere, validate_and_orient, SurfaceMesh};
use crate::Vec3;

pub const EXIT_OK: i32 = 0;
pub const EXIT_NOT_CONVERGED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_FILE: i32 = 3;
pub const EXIT_FORMAT: i32 = 4;
pub const EXIT_TOPOLOGY: i32 = 5;
pub const EXIT_SOLVER: i32 = 6;

fn parse_accuracy(s: &str) -> Result<u32, String> {
    match s.trim() {
        "3" => Ok(3),
        "6" => Ok(6),
        _ => Err(format!("'{s}' is not supported; available choices are 3 and 6")),
    }
}

fn parse_format(s: &str) -> Result<u8, String> {
    match s.trim() {
        "0" => Err("format 0 (built-in molecular surface mesher) is not supported; \
                    supply an MSMS (1) or OFF (2) mesh, or use the analytic sphere (3)"
            .into()),
        "1" => Ok(1),
        "2" => Ok(2),
        "3" => Ok(3),
        _ => Err(format!("'{s}' is not a mesh format; available choices are 1 (MSMS), 2 (OFF) and 3 (sphere)")),
    }
}

fn parse_positive(s: &str) -> Result<usize, String> {
    match s.trim().parse::<usize>() {
        Ok(0) | Err(_) => Err(format!("'{s}' is not a positive integer")),
        Ok(v) => Ok(v),
    }
}

/// Linearized Poisson-Boltzmann solver on a node-patch boundary mesh.
#[derive(Debug, Clone, PartialEq, Parser)]
#[command(name = "pbbem", version, args_override_self = true)]
pub struct CliOptions {
    /// Charges and radii in PQR format.
    #[arg(long, value_name = "FILE")]
    pub pqr_file: PathBuf,

    /// 1 = MSMS (.vert/.face), 2 = OFF, 3 = analytic icosphere.
    #[arg(long, value_name = "NUM", default_value = "2", value_parser = parse_format)]
    pub mesh_format: u8,

    /// Mesh file; for MSMS the .vert, the .face, or their common stem.
    #[arg(long, value_name = "FILE", required_if_eq_any = [("mesh_format", "1"), ("mesh_format", "2")])]
    pub mesh_file: Option<PathBuf>,

    /// Accepted for compatibility; only used by molecular meshing.
    #[arg(long, value_name = "NUM")]
    pub mesh_density: Option<f64>,

    /// Accepted for compatibility; only used by molecular meshing.
    #[arg(long, value_name = "NUM")]
    pub probe_radius: Option<f64>,

    /// Sphere radius in Å for mesh format 3; the sphere is centred at the origin.
    #[arg(long, value_name = "NUM", default_value_t = 50.0)]
    pub sphere_radius: f64,

    /// Icosphere subdivision level for mesh format 3.
    #[arg(long, value_name = "NUM", default_value_t = 6)]
    pub sphere_subdivisions: u32,

    #[arg(long, value_name = "NUM", default_value_t = 2.0)]
    pub dielectric_interior: f64,

    #[arg(long, value_name = "NUM", default_value_t = 80.0)]
    pub dielectric_exterior: f64,

    /// Ionic strength in mM.
    #[arg(long, value_name = "NUM", default_value_t = 150.0)]
    pub ion_concentration: f64,

    /// Kelvin.
    #[arg(long, value_name = "NUM", default_value_t = 300.0)]
    pub temperature: f64,

    /// kcal/(mol·Å²).
    #[arg(long, value_name = "NUM", default_value_t = 0.0)]
    pub surface_tension: f64,

    /// kcal/(mol·Å³).
    #[arg(long, value_name = "NUM", default_value_t = 0.0)]
    pub pressure: f64,

    /// Digits of far-field accuracy; available choices are 3 and 6.
    #[arg(long, value_name = "NUM", default_value = "3", value_parser = parse_accuracy)]
    pub accuracy: u32,

    /// Relative GMRES tolerance; defaults to 10^-accuracy and may not be smaller.
    #[arg(long, value_name = "NUM")]
    pub rel_tolerance: Option<f64>,

    #[arg(long, value_name = "NUM", default_value_t = 0.0)]
    pub abs_tolerance: f64,

    /// Krylov vectors per GMRES cycle.
    #[arg(long, value_name = "NUM", default_value = "80", value_parser = parse_positive)]
    pub restart: usize,

    #[arg(long, value_name = "NUM", default_value_t = 5)]
    pub max_restart: usize,

    #[arg(long, value_name = "FILE", default_value = "pbbem.log")]
    pub log_file: PathBuf,

    /// Per-node f and h, written only when given.
    #[arg(long, value_name = "FILE")]
    pub potential_file: Option<PathBuf>,

    /// Simulated localities.
    #[arg(long, value_name = "NUM", default_value = "1", value_parser = parse_positive)]
    pub localities: usize,

    /// Worker threads; 0 uses every core.
    #[arg(long, value_name = "NUM", default_value_t = 0)]
    pub threads: usize,

    #[arg(long, value_name = "NUM", default_value = "40", value_parser = parse_positive)]
    pub leaf_threshold: usize,
}

/// Parse `argv` including the program name. `--help` and `--version` come
/// back as errors whose [`clap::Error::exit_code`] is 0.
pub fn parse_args<I, T>(argv: I) -> Result<CliOptions, clap::Error>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    CliOptions::try_parse_from(argv)
}

impl CliOptions {
    pub fn physical(&self) -> PhysicalConfig {
        PhysicalConfig {
            surface_tension: self.surface_tension,
            pressure: self.pressure,
            ..PhysicalConfig::new(self.dielectric_interior, self.dielectric_exterior, self.ion_concentration, self.temperature)
        }
    }

    pub fn solve_config(&self) -> SolveConfig {
        SolveConfig {
            restart: self.restart,
            max_restart: self.max_restart,
            eps_rel: self.rel_tolerance.unwrap_or(10f64.powi(-(self.accuracy as i32))),
            eps_abs: self.abs_tolerance,
            leaf_threshold: self.leaf_threshold,
            threads: self.threads,
            localities: self.localities,
            ..SolveConfig::with_accuracy(self.accuracy)
        }
    }

    pub fn load_mesh(&self) -> Result<SurfaceMesh, CliError> {
        let raw = match self.mesh_format {
            3 => {
                if !(self.sphere_radius > 0.0) || !self.sphere_radius.is_finite() {
                    return Err(CliError::Usage(format!("sphere radius {} must be positive", self.sphere_radius)));
                }
                return Ok(generate_icosphere(self.sphere_radius, Vec3::zeros(), self.sphere_subdivisions));
            }
            f => {
                let path = self.mesh_file.as_ref().ok_or_else(|| CliError::Usage("--mesh-file is required for mesh formats 1 and 2".into()))?;
                if f == 1 {
                    read_msms(path)?
                } else {
                    read_off(path)?
                }
            }
        };
        validate_and_orient(&raw).map_err(|e| CliError::Topology(e.to_string()))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error("mesh topology: {0}")]
    Topology(String),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("{path}: {source}")]
    Output {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Format(FormatError::Io { .. }) | CliError::Output { .. } => EXIT_FILE,
            CliError::Format(_) => EXIT_FORMAT,
            CliError::Topology(_) => EXIT_TOPOLOGY,
            CliError::Solve(SolveError::NotConverged { .. }) => EXIT_NOT_CONVERGED,
            CliError::Solve(SolveError::InvalidConfig(_)) => EXIT_USAGE,
            CliError::Solve(_) => EXIT_SOLVER,
        }
    }
}

fn write_log(opts: &CliOptions, header: &str, report: &SolveReport) -> Result<(), CliError> {
    fs::write(&opts.log_file, format!("{header}{}", report.log())).map_err(|source| CliError::Output {
        path: opts.log_file.clone(),
        source,
    })
}

fn log_header(opts: &CliOptions, phys: &PhysicalConfig, cfg: &SolveConfig) -> String {
    let mesh = match opts.mesh_format {
        3 => format!("sphere radius {} subdivisions {}", opts.sphere_radius, opts.sphere_subdivisions),
        f => format!("format {f} {}", opts.mesh_file.as_ref().map_or(String::new(), |p| p.display().to_string())),
    };
    format!(
        "pbbem {}\npqr {}\nmesh {mesh}\ndielectric {} {}\nionic_strength {} mM temperature {} K\n\
         gmres restart {} max_restart {} eps_rel {:e} eps_abs {:e}\nleaf_threshold {}\n",
        env!("CARGO_PKG_VERSION"),
        opts.pqr_file.display(),
        phys.eps_int,
        phys.eps_ext,
        phys.ionic_strength,
        phys.temperature,
        cfg.restart,
        cfg.max_restart,
        cfg.eps_rel,
        cfg.eps_abs,
        cfg.leaf_threshold,
    )
}

/// Load inputs, solve, write the log and the optional potential file, and
/// print energies to `out`.
pub fn execute(opts: &CliOptions, out: &mut dyn Write, err: &mut dyn Write) -> Result<SolveReport, CliError> {
    if opts.probe_radius.is_some() {
        let _ = writeln!(err, "warning: --probe-radius is ignored; the mesh is read as given");
    }
    if opts.mesh_density.is_some() {
        let _ = writeln!(err, "warning: --mesh-density is ignored; the mesh is read as given");
    }
    let phys = opts.physical();
    let cfg = opts.solve_config();
    cfg.validate()?;
    phys.validate().map_err(SolveError::from)?;
    let atoms = read_pqr(&opts.pqr_file)?;
    let mesh = opts.load_mesh()?;
    let header = log_header(opts, &phys, &cfg);

    let result = match solver::solve(&atoms, &mesh, &phys, &cfg) {
        Err(SolveError::NotConverged {
            residual,
            tolerance,
            iterations,
            report,
        }) => {
            write_log(opts, &header, &report)?;
            return Err(SolveError::NotConverged {
                residual,
                tolerance,
                iterations,
                report,
            }
            .into());
        }
        r => r?,
    };
    write_log(opts, &header, &result.report)?;
    if let Some(path) = &opts.potential_file {
        let patches = build_node_patches(&mesh);
        write_potential_file(&patches, &result.fields.f, &result.fields.h, path)?;
    }
    let e = result.report.energy;
    let g = &result.report.gmres;
    let _ = writeln!(out, "iterations {} inner_products {} residual {:.6e}", g.iterations, g.inner_products, g.residual);
    let _ = writeln!(out, "polar energy    {:.6} kcal/mol", e.polar);
    let _ = writeln!(out, "nonpolar energy {:.6} kcal/mol", e.nonpolar);
    let _ = writeln!(out, "total energy    {:.6} kcal/mol", e.total);
    Ok(result.report)
}

/// [`execute`] mapped to an exit code, with errors reported on `err`.
pub fn run(opts: &CliOptions, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    match execute(opts, out, err) {
        Ok(_) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

/// Full program: parse, run, exit code.
pub fn main_with<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match parse_args(argv) {
        Ok(opts) => run(&opts, out, err),
        Err(e) => {
            let code = if e.exit_code() == 0 { EXIT_OK } else { EXIT_USAGE };
            let text = e.render();
            if code == EXIT_OK {
                let _ = write!(out, "{text}");
            } else {
                let _ = write!(err, "{}", text.ansi());
            }
            code
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn argv(s: &str) -> Vec<String> {
        std::iter::once("pbbem".to_string()).chain(s.split_whitespace().map(String::from)).collect()
    }

    #[test]
    fn minimal_off_invocation_parses_with_defaults() {
        let o = parse_args(argv("--pqr-file=a.pqr --mesh-format=2 --mesh-file=a.off")).unwrap();
        assert_eq!(o.mesh_format, 2);
        assert_eq!(o.mesh_file.as_deref(), Some(std::path::Path::new("a.off")));
        assert_eq!(o.accuracy, 3);
        let c = o.solve_config();
        assert_eq!((c.restart, c.max_restart, c.eps_rel, c.eps_abs), (80, 5, 1e-3, 0.0));
        let p = o.physical();
        assert_eq!((p.eps_int, p.eps_ext, p.ionic_strength, p.temperature), (2.0, 80.0, 150.0, 300.0));
    }

    #[test]
    fn accuracy_four_is_a_usage_error() {
        let e = parse_args(argv("--pqr-file=a.pqr --mesh-file=a.off --accuracy=4")).unwrap_err();
        assert!(e.to_string().contains("available choices are 3 and 6"));
        assert_ne!(e.exit_code(), 0);
    }

    #[test]
    fn missing_pqr_is_reported() {
        let e = parse_args(argv("")).unwrap_err();
        assert!(e.to_string().contains("--pqr-file"));
        let mut out = vec![];
        let mut err = vec![];
        assert_eq!(main_with(argv(""), &mut out, &mut err), EXIT_USAGE);
    }

    #[test]
    fn format_zero_is_rejected_and_sphere_needs_no_mesh_file() {
        let e = parse_args(argv("--pqr-file=a.pqr --mesh-format=0")).unwrap_err();
        assert!(e.to_string().contains("not supported"));
        assert!(parse_args(argv("--pqr-file=a.pqr --mesh-format=2")).is_err());
        let o = parse_args(argv("--pqr-file=a.pqr --mesh-format=3 --sphere-subdivisions=2")).unwrap();
        assert_eq!(o.load_mesh().unwrap().vertices.len(), 162);
    }

    #[test]
    fn help_exits_successfully() {
        let mut out = vec![];
        let mut err = vec![];
        assert_eq!(main_with(argv("--help"), &mut out, &mut err), EXIT_OK);
        let text = String::from_utf8(out).unwrap();
        for flag in ["--pqr-file", "--mesh-format", "--accuracy", "--threads", "--localities", "--surface-tension"] {
            assert!(text.contains(flag), "{flag}");
        }
    }

    #[test]
    fn tolerance_below_the_accuracy_floor_is_a_usage_error() {
        let o = parse_args(argv("--pqr-file=a.pqr --mesh-format=3 --rel-tolerance=1e-5")).unwrap();
        let e = execute(&o, &mut vec![], &mut vec![]).unwrap_err();
        assert_eq!(e.exit_code(), EXIT_USAGE);
    }
}
