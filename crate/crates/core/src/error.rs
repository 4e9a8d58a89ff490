use thiserror::Error;

use crate::distribution::DistributionError;
use crate::engine::EngineError;
use crate::io::FormatError;
use crate::kernels::KernelError;
use crate::solver::SolveError;
use crate::surface::TopologyError;

/// Crate-level error; each variant wraps one subsystem's error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Distribution(#[from] DistributionError),
    #[error(transparent)]
    Solve(#[from] SolveError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
