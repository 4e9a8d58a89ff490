//! Matrix-free boundary operator on node-partitioned `(f, h)` vectors.
//!
//! For target node `i`,
//! `y₁ = J f + Σ_j (B_ij f_j − A_ij h_j)` and
//! `y₂ = J h + Σ_j (D_ij f_j − C_ij h_j)` with `J = 1/(2ε̄) + 1/2`.
//! Pairs the tree marks as near use patch-integrated coefficients
//! ([`near_coefficients`]); all other pairs collapse each source patch to a
//! point carrying `h ΔS` and `f ΔS n`, evaluated by the multipole engine as
//! two combined views:
//!
//! * view G (Laplace): charge `h ΔS`, dipole `−f ΔS n / ε̄`;
//! * view U (Yukawa, or Laplace when κ = 0): charge `−h ΔS`, dipole `f ΔS n`;
//!
//! so that the far parts are `−(φ_G + φ_U)` and `−(∂φ_G + ∂φ_U / ε̄)` with
//! `∂` the derivative along the target normal.
//!
//! Each locality owns a span of nodes in tree order. Near sources owned by
//! another locality are fetched through [`DistributedArray::exchange`]: whole
//! patches on the first product, which also builds the near-field cache
//! while the far-field pass runs, and only `(f, h)` afterwards.

use std::sync::Arc;
use std::time::{Duration, Instant};

use rayon::prelude::*;

use super::{SolveConfig, SolveError};
use crate::distribution::{
    partition_by_tree, DistVector, DistributedArray, FullPatchSerializer, KrylovSerializer, LocalityGroup, NodeState, Partition,
};
use crate::engine::{DagHandle, DagOptions, DagState, Engine, FieldValue, MethodPolicy, Strength, TreeHandle};
use crate::kernels::{near_coefficients, Coefficients, PhysicalConfig};
use crate::multipole::{Kernel, Layer, View};
use crate::surface::NodePatch;

const GHOST: u32 = 1 << 31;

/// Near-field data of one locality: for each owned target (segment order)
/// its near sources as local indices, or ghost slots tagged with [`GHOST`].
struct LocalNear {
    offsets: Vec<usize>,
    sources: Vec<u32>,
    coefficients: Vec<Coefficients>,
    /// Remote globals this locality needs, sorted; ghost slot `s` holds
    /// `remote[s]`.
    remote: Vec<usize>,
}

/// Wall-clock time spent per phase, summed over products.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct OperatorTimings {
    pub far_field: Duration,
    pub near_field: Duration,
    /// First-product coefficient generation, overlapped with the far field.
    pub near_setup: Duration,
    pub exchange: Duration,
    pub products: usize,
}

/// Which parts of the operator [`BoundaryOperator::apply_parts`] includes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Parts {
    pub near: bool,
    pub far: bool,
}

pub struct BoundaryOperator {
    phys: PhysicalConfig,
    accuracy: u32,
    engine: Engine,
    tree: TreeHandle,
    dag: DagHandle,
    group: Arc<LocalityGroup>,
    nodes: DistributedArray<NodeState>,
    near: Vec<LocalNear>,
    ghosts: Vec<Vec<NodeState>>,
    near_ready: bool,
    near_pairs: usize,
    timings: OperatorTimings,
}

impl std::fmt::Debug for BoundaryOperator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BoundaryOperator")
            .field("nodes", &self.nodes.len())
            .field("localities", &self.group.n_localities())
            .field("accuracy", &self.accuracy)
            .field("near_pairs", &self.near_pairs)
            .finish_non_exhaustive()
    }
}

impl BoundaryOperator {
    /// Build the tree, the far-field DAG and the near-pair lists. Near-field
    /// coefficients are computed during the first product.
    pub fn new(patches: &[NodePatch], phys: &PhysicalConfig, cfg: &SolveConfig) -> Result<Self, SolveError> {
        phys.validate()?;
        cfg.validate()?;
        if patches.is_empty() {
            return Err(SolveError::InvalidConfig("no surface nodes".into()));
        }
        let mut engine = Engine::new(cfg.threads)?;
        let pos: Vec<_> = patches.iter().map(|p| p.position).collect();
        let nrm: Vec<_> = patches.iter().map(|p| p.normal).collect();
        let tree = engine.create_tree(&pos, &pos, Some(&nrm), cfg.leaf_threshold)?;
        let dag = engine.create_dag(tree, Self::dag_options(phys, cfg.accuracy))?;

        let dual = engine.tree(tree)?.clone();
        let partition = Arc::new(partition_by_tree(&dual.targets, cfg.localities)?);
        let group = Arc::new(LocalityGroup::new(cfg.localities)?);
        let nodes = DistributedArray::new(partition.clone(), Arc::new(FullPatchSerializer), |g| NodeState {
            index: g as u64,
            patch: patches[g].clone(),
            f: 0.0,
            h: 0.0,
        });

        let pairs = dual.direct_pairs(MethodPolicy::DirectListThree);
        let near_pairs = pairs.iter().map(Vec::len).sum();
        let near = (0..partition.n_localities()).map(|k| local_near(&partition, k, &pairs)).collect();
        Ok(Self {
            phys: *phys,
            accuracy: cfg.accuracy,
            engine,
            tree,
            dag,
            ghosts: vec![vec![]; partition.n_localities()],
            group,
            nodes,
            near,
            near_ready: false,
            near_pairs,
            timings: OperatorTimings::default(),
        })
    }

    fn dag_options(phys: &PhysicalConfig, accuracy: u32) -> DagOptions {
        let u = if phys.kappa > 0.0 { Kernel::Yukawa(phys.kappa) } else { Kernel::Laplace };
        let views = vec![
            View {
                kernel: Kernel::Laplace,
                layer: Layer::Combined,
            },
            View {
                kernel: u,
                layer: Layer::Combined,
            },
        ];
        DagOptions {
            include_direct: false,
            ..DagOptions::new(views, accuracy)
        }
    }

    /// Replace the far-field DAG with one for another accuracy class; the
    /// tree and the near-field cache are kept.
    pub fn set_accuracy(&mut self, accuracy: u32) -> Result<(), SolveError> {
        if accuracy == self.accuracy {
            return Ok(());
        }
        SolveConfig {
            accuracy,
            eps_rel: 10f64.powi(-(accuracy as i32)),
            ..SolveConfig::default()
        }
        .validate()?;
        let dag = self.engine.create_dag(self.tree, Self::dag_options(&self.phys, accuracy))?;
        self.engine.destroy_dag(self.dag)?;
        self.dag = dag;
        self.accuracy = accuracy;
        Ok(())
    }

    pub fn accuracy(&self) -> u32 {
        self.accuracy
    }

    pub fn physical(&self) -> &PhysicalConfig {
        &self.phys
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn partition(&self) -> &Arc<Partition> {
        self.nodes.partition()
    }

    pub fn group(&self) -> &Arc<LocalityGroup> {
        &self.group
    }

    pub fn engine(&self) -> &Engine {
        &self.engine
    }

    pub fn threads(&self) -> usize {
        self.engine.threads()
    }

    /// Number of (target, source) pairs integrated as near field.
    pub fn near_pairs(&self) -> usize {
        self.near_pairs
    }

    pub fn timings(&self) -> OperatorTimings {
        self.timings
    }

    /// Whether the near-field cache has been built.
    pub fn near_ready(&self) -> bool {
        self.near_ready
    }

    /// `J = 1/(2ε̄) + 1/2`.
    pub fn jump(&self) -> f64 {
        0.5 / self.phys.eps_bar() + 0.5
    }

    /// `x` and the result have width 2: `(f, h)` per node.
    pub fn apply(&mut self, x: &DistVector) -> Result<DistVector, SolveError> {
        self.apply_parts(
            x,
            Parts {
                near: true,
                far: true,
            },
        )
    }

    /// The identity part plus the selected near and far contributions.
    pub fn apply_parts(&mut self, x: &DistVector, parts: Parts) -> Result<DistVector, SolveError> {
        let partition = self.nodes.partition().clone();
        let n = partition.len();
        if x.width() != 2 || x.segments().iter().enumerate().any(|(k, s)| s.len() != 2 * partition.span(k).len()) {
            return Err(SolveError::Dimension {
                what: "operator input values",
                expected: 2 * n,
                found: x.segments().iter().map(Vec::len).sum(),
            });
        }
        for (k, seg) in x.segments().iter().enumerate() {
            for (node, fh) in self.nodes.local_mut(k).iter_mut().zip(seg.chunks_exact(2)) {
                node.f = fh[0];
                node.h = fh[1];
            }
        }

        let t = Instant::now();
        let requests: Vec<Vec<usize>> = self.near.iter().map(|l| l.remote.clone()).collect();
        self.nodes.exchange(&self.group, &requests, &mut self.ghosts)?;
        if !self.near_ready {
            // geometry travels once
            self.nodes.set_manager(Arc::new(KrylovSerializer));
        }
        self.timings.exchange += t.elapsed();

        // far-field strengths in global order
        let inv = 1.0 / self.phys.eps_bar();
        let (mut sg, mut su) = (vec![Strength::default(); n], vec![Strength::default(); n]);
        for k in 0..partition.n_localities() {
            for (node, &g) in self.nodes.local(k).iter().zip(partition.globals(k)) {
                let (a, nn) = (node.patch.area, node.patch.normal);
                sg[g] = Strength {
                    charge: node.h * a,
                    dipole: -inv * node.f * a * nn,
                };
                su[g] = Strength {
                    charge: -node.h * a,
                    dipole: node.f * a * nn,
                };
            }
        }

        let need_setup = parts.near && !self.near_ready;
        let far = if parts.far {
            if self.engine.dag_state(self.dag)? == DagState::Completed {
                self.engine.reset_dag(self.dag)?;
            }
            let t = Instant::now();
            let (near, nodes, ghosts, phys) = (&mut self.near, &self.nodes, &self.ghosts, &self.phys);
            let (far, setup) = self.engine.execute_dag_alongside(self.dag, &[&sg, &su], || {
                need_setup.then(|| {
                    let t = Instant::now();
                    build_near(near, nodes, ghosts, phys).map(|_| t.elapsed())
                })
            });
            let elapsed = t.elapsed();
            if let Some(setup) = setup {
                self.timings.near_setup += setup?;
                self.near_ready = true;
            }
            self.timings.far_field += elapsed;
            Some(far?)
        } else {
            if need_setup {
                let t = Instant::now();
                let (near, nodes, ghosts, phys) = (&mut self.near, &self.nodes, &self.ghosts, &self.phys);
                self.engine.install(|| build_near(near, nodes, ghosts, phys))?;
                self.timings.near_setup += t.elapsed();
                self.near_ready = true;
            }
            None
        };

        let t = Instant::now();
        let jump = self.jump();
        let mut y = DistVector::zeros(&partition, 2);
        let (near, nodes, ghosts) = (&self.near, &self.nodes, &self.ghosts);
        let far_ref = far.as_ref();
        self.engine.install(|| {
            y.segments_mut().par_iter_mut().enumerate().for_each(|(k, seg)| {
                let local = nodes.local(k);
                let globals = partition.globals(k);
                let ln = &near[k];
                seg.par_chunks_exact_mut(2).enumerate().for_each(|(i, out)| {
                    let (mut y1, mut y2) = (0.0, 0.0);
                    if parts.near {
                        for (&s, c) in ln.sources[ln.offsets[i]..ln.offsets[i + 1]]
                            .iter()
                            .zip(&ln.coefficients[ln.offsets[i]..ln.offsets[i + 1]])
                        {
                            let src = if s & GHOST != 0 { &ghosts[k][(s & !GHOST) as usize] } else { &local[s as usize] };
                            y1 += c.b * src.f - c.a * src.h;
                            y2 += c.d * src.f - c.c * src.h;
                        }
                    }
                    if let Some(far) = far_ref {
                        let g = globals[i];
                        let (fg, fu): (&FieldValue, &FieldValue) = (&far[0][g], &far[1][g]);
                        y1 -= fg.potential + fu.potential;
                        y2 -= fg.dn0 + inv * fu.dn0;
                    }
                    out[0] = jump * local[i].f + y1;
                    out[1] = jump * local[i].h + y2;
                });
            });
        });
        if parts.near {
            self.timings.near_field += t.elapsed();
        }
        self.timings.products += 1;
        Ok(y)
    }

    /// Convenience wrapper taking and returning global `(f, h)` arrays.
    pub fn apply_global(&mut self, f: &[f64], h: &[f64]) -> Result<(Vec<f64>, Vec<f64>), SolveError> {
        let n = self.len();
        if f.len() != n || h.len() != n {
            return Err(SolveError::Dimension {
                what: "node values",
                expected: n,
                found: f.len().min(h.len()),
            });
        }
        let p = self.partition().clone();
        let y = self.apply(&DistVector::from_fields(&p, &[f, h]))?;
        let mut out = y.to_fields(&p);
        let h = out.pop().unwrap();
        Ok((out.pop().unwrap(), h))
    }
}

fn local_near(partition: &Partition, k: usize, pairs: &[Vec<usize>]) -> LocalNear {
    let globals = partition.globals(k);
    let mut remote: Vec<usize> = globals
        .iter()
        .flat_map(|&g| pairs[g].iter().copied())
        .filter(|&s| partition.owner(s) != k)
        .collect();
    remote.sort_unstable();
    remote.dedup();
    let mut offsets = Vec::with_capacity(globals.len() + 1);
    offsets.push(0);
    let mut sources = vec![];
    for &g in globals {
        for &s in &pairs[g] {
            sources.push(if partition.owner(s) == k {
                partition.local_index(s) as u32
            } else {
                GHOST | remote.binary_search(&s).unwrap() as u32
            });
        }
        offsets.push(sources.len());
    }
    LocalNear {
        offsets,
        sources,
        coefficients: vec![],
        remote,
    }
}

fn build_near(near: &mut [LocalNear], nodes: &DistributedArray<NodeState>, ghosts: &[Vec<NodeState>], phys: &PhysicalConfig) -> Result<(), SolveError> {
    for (k, ln) in near.iter_mut().enumerate() {
        let local = nodes.local(k);
        let per_target: Result<Vec<Vec<Coefficients>>, _> = (0..local.len())
            .into_par_iter()
            .map(|i| {
                ln.sources[ln.offsets[i]..ln.offsets[i + 1]]
                    .iter()
                    .map(|&s| {
                        let src = if s & GHOST != 0 { &ghosts[k][(s & !GHOST) as usize] } else { &local[s as usize] };
                        near_coefficients(&local[i].patch, &src.patch, phys)
                    })
                    .collect()
            })
            .collect();
        ln.coefficients = per_target?.into_iter().flatten().collect();
    }
    Ok(())
}
