//! Hierarchical multipole engine: adaptive dual octrees, interaction lists,
//! an operator DAG, and a phased lifecycle
//! (`create_tree → create_dag → execute_dag → reset_dag … → destroy`).
//!
//! A DAG evaluates several kernel/layer views in one traversal. Under
//! [`MethodPolicy::DirectListThree`] the list-3 boxes of a leaf are summed
//! directly like list-1, so every pair the multipole expansions do not cover
//! is one of [`DualTree::direct_pairs`].

mod dag;
pub mod tree;

use std::sync::Arc;

use thiserror::Error;

pub use dag::DagState;
use dag::Dag;
pub use tree::{BoxNode, DualTree, InteractionLists, Octree, RootCube};

use crate::kernels::KernelError;
use crate::multipole::{orders_for_accuracy, View};
use crate::Vec3;

/// Leaf threshold used when none is configured.
pub const DEFAULT_LEAF_THRESHOLD: usize = 40;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("empty {0} point list")]
    Empty(&'static str),
    #[error("leaf threshold must be at least 1")]
    Threshold,
    #[error("non-finite point coordinate")]
    NonFinite,
    #[error("{count} points share a box at depth {depth}, above the leaf threshold {threshold}; duplicate points?")]
    DepthCap { count: usize, threshold: usize, depth: u32 },
    #[error("expected {expected} {what}, got {found}")]
    Dimension { what: &'static str, expected: usize, found: usize },
    #[error("{0} handle {1} does not exist or was destroyed")]
    Handle(&'static str, usize),
    #[error("the DAG has executed and must be reset first")]
    NotReset,
    #[error("DAG state error: {0}")]
    State(&'static str),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

/// How list-3 interactions are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MethodPolicy {
    /// Classical adaptive method: list-3 via M2T.
    Standard,
    /// List-3 summed directly (S2T) like list-1. The boundary-element
    /// operator uses this so every near interaction can be replaced by
    /// patch quadrature.
    #[default]
    DirectListThree,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DagOptions {
    pub method: MethodPolicy,
    pub views: Vec<View>,
    /// Expansion orders `(Laplace, Yukawa)`.
    pub orders: (usize, usize),
    /// Whether S2T edges are part of the DAG. Without them the DAG computes
    /// exactly the far field that complements [`DualTree::direct_pairs`].
    pub include_direct: bool,
}

impl DagOptions {
    pub fn new(views: Vec<View>, accuracy: u32) -> Self {
        Self {
            method: MethodPolicy::default(),
            views,
            orders: orders_for_accuracy(accuracy),
            include_direct: true,
        }
    }
}

/// Per-source values for one view: monopole charge and dipole moment.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Strength {
    pub charge: f64,
    pub dipole: Vec3,
}

/// Potential and normal derivative at one target.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FieldValue {
    pub potential: f64,
    pub dn0: f64,
}

/// Number of edges of each operator type.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EdgeCounts {
    pub s2m: usize,
    pub m2m: usize,
    pub m2l: usize,
    pub l2l: usize,
    pub l2t: usize,
    pub s2l: usize,
    pub m2t: usize,
    pub s2t: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TreeHandle(usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DagHandle(usize);

/// Owns the worker pool and every live tree and DAG.
pub struct Engine {
    pool: rayon::ThreadPool,
    threads: usize,
    trees: Vec<Option<Arc<DualTree>>>,
    dags: Vec<Option<Dag>>,
}

impl std::fmt::Debug for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Engine").field("threads", &self.threads).finish_non_exhaustive()
    }
}

impl Engine {
    /// `threads = 0` uses one worker per available core.
    pub fn new(threads: usize) -> Result<Self, EngineError> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|_| EngineError::State("could not start the worker pool"))?;
        Ok(Self {
            threads: pool.current_num_threads(),
            pool,
            trees: vec![],
            dags: vec![],
        })
    }

    pub fn threads(&self) -> usize {
        self.threads
    }

    /// Run `f` on the engine's workers.
    pub fn install<R: Send>(&self, f: impl FnOnce() -> R + Send) -> R {
        self.pool.install(f)
    }

    pub fn create_tree(&mut self, sources: &[Vec3], targets: &[Vec3], target_normals: Option<&[Vec3]>, threshold: usize) -> Result<TreeHandle, EngineError> {
        let tree = DualTree::new(sources, targets, target_normals, threshold)?;
        self.trees.push(Some(Arc::new(tree)));
        Ok(TreeHandle(self.trees.len() - 1))
    }

    pub fn tree(&self, h: TreeHandle) -> Result<&Arc<DualTree>, EngineError> {
        self.trees.get(h.0).and_then(Option::as_ref).ok_or(EngineError::Handle("tree", h.0))
    }

    pub fn create_dag(&mut self, tree: TreeHandle, options: DagOptions) -> Result<DagHandle, EngineError> {
        let tree = self.tree(tree)?.clone();
        self.dags.push(Some(Dag::new(tree, options)?));
        Ok(DagHandle(self.dags.len() - 1))
    }

    fn dag(&self, h: DagHandle) -> Result<&Dag, EngineError> {
        self.dags.get(h.0).and_then(Option::as_ref).ok_or(EngineError::Handle("DAG", h.0))
    }

    fn dag_mut(&mut self, h: DagHandle) -> Result<&mut Dag, EngineError> {
        self.dags.get_mut(h.0).and_then(Option::as_mut).ok_or(EngineError::Handle("DAG", h.0))
    }

    /// Evaluate every view. `strengths[v][i]` belongs to source `i` in the
    /// caller's order; the result is `[view][target]` in the caller's order.
    pub fn execute_dag(&mut self, h: DagHandle, strengths: &[&[Strength]]) -> Result<Vec<Vec<FieldValue>>, EngineError> {
        let dag = self.dags.get_mut(h.0).and_then(Option::as_mut).ok_or(EngineError::Handle("DAG", h.0))?;
        dag.execute(&self.pool, strengths)
    }

    /// [`execute_dag`](Self::execute_dag) with `side` running on the same
    /// workers at the same time; neither waits for the other to start.
    pub fn execute_dag_alongside<R: Send>(
        &mut self,
        h: DagHandle,
        strengths: &[&[Strength]],
        side: impl FnOnce() -> R + Send,
    ) -> (Result<Vec<Vec<FieldValue>>, EngineError>, R) {
        let pool = &self.pool;
        match self.dags.get_mut(h.0).and_then(Option::as_mut) {
            Some(dag) => pool.install(|| rayon::join(|| dag.execute(pool, strengths), side)),
            None => (Err(EngineError::Handle("DAG", h.0)), pool.install(side)),
        }
    }

    /// Clear expansion slots and pending counts, keeping the topology.
    pub fn reset_dag(&mut self, h: DagHandle) -> Result<(), EngineError> {
        self.dag_mut(h)?.reset()
    }

    pub fn dag_state(&self, h: DagHandle) -> Result<DagState, EngineError> {
        Ok(self.dag(h)?.state)
    }

    pub fn dag_generation(&self, h: DagHandle) -> Result<u64, EngineError> {
        Ok(self.dag(h)?.generation)
    }

    pub fn edge_counts(&self, h: DagHandle) -> Result<EdgeCounts, EngineError> {
        Ok(self.dag(h)?.counts())
    }

    pub fn dag_options(&self, h: DagHandle) -> Result<&DagOptions, EngineError> {
        Ok(self.dag(h)?.options())
    }

    pub fn dag_tree(&self, h: DagHandle) -> Result<&Arc<DualTree>, EngineError> {
        Ok(self.dag(h)?.tree())
    }

    /// Destroying an already destroyed DAG is a no-op; unknown handles are
    /// errors.
    pub fn destroy_dag(&mut self, h: DagHandle) -> Result<(), EngineError> {
        match self.dags.get_mut(h.0) {
            Some(slot) => {
                slot.take();
                Ok(())
            }
            None => Err(EngineError::Handle("DAG", h.0)),
        }
    }

    /// DAGs built on the tree keep their own reference and stay usable.
    pub fn destroy_tree(&mut self, h: TreeHandle) -> Result<(), EngineError> {
        match self.trees.get_mut(h.0) {
            Some(slot) => {
                slot.take();
                Ok(())
            }
            None => Err(EngineError::Handle("tree", h.0)),
        }
    }

    /// One-shot evaluation: build, execute and destroy a tree and a DAG.
    pub fn evaluate(
        &mut self,
        sources: &[Vec3],
        targets: &[Vec3],
        target_normals: Option<&[Vec3]>,
        threshold: usize,
        options: DagOptions,
        strengths: &[&[Strength]],
    ) -> Result<Vec<Vec<FieldValue>>, EngineError> {
        let t = self.create_tree(sources, targets, target_normals, threshold)?;
        let d = self.create_dag(t, options)?;
        let out = self.execute_dag(d, strengths);
        self.destroy_dag(d)?;
        self.destroy_tree(t)?;
        out
    }
}

/// Direct O(MN) sum of every view; the reference the engine approximates.
pub fn direct_sum(
    sources: &[Vec3],
    targets: &[Vec3],
    target_normals: Option<&[Vec3]>,
    views: &[View],
    strengths: &[&[Strength]],
) -> Vec<Vec<FieldValue>> {
    use crate::multipole::{s_to_t, SourceDensity, TargetAccumulator};
    views
        .iter()
        .zip(strengths)
        .map(|(v, s)| {
            let src: Vec<SourceDensity> = sources
                .iter()
                .zip(s.iter())
                .map(|(&position, s)| SourceDensity {
                    position,
                    charge: if v.layer.charges() { s.charge } else { 0.0 },
                    dipole: if v.layer.dipoles() { s.dipole } else { Vec3::zeros() },
                })
                .collect();
            targets
                .iter()
                .enumerate()
                .map(|(i, &p)| {
                    let n = target_normals.map_or(Vec3::zeros(), |n| n[i]);
                    let mut a = [TargetAccumulator::new(p, n)];
                    s_to_t(v.kernel, &src, &mut a);
                    FieldValue {
                        potential: a[0].potential,
                        dn0: a[0].dn0,
                    }
                })
                .collect()
        })
        .collect()
}
