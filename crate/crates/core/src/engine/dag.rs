//! Operator graph over a dual tree and its data-driven execution.
//!
//! Every task computes one value (a box's expansions, or one target leaf's
//! far or direct contributions) as a pure function of its inputs, summed in
//! a fixed order. A task runs as soon as its inputs exist, on any worker,
//! and results do not depend on the schedule.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, OnceLock};

use super::tree::DualTree;
use super::{DagOptions, EdgeCounts, EngineError, FieldValue, MethodPolicy, Strength};
use crate::multipole::{self, Expansion, ExpansionKind, SourceDensity, TargetAccumulator, Translator};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DagState {
    Ready,
    Running,
    Completed,
}

#[derive(Debug, Clone, Copy)]
enum Task {
    /// Multipole expansions of a source box.
    Multipole(usize),
    /// Local expansions of a target box.
    Local(usize),
    /// L2T and M2T into a target leaf.
    Far(usize),
    /// S2T into a target leaf.
    Direct(usize),
}

enum Output {
    Expansions(Vec<Expansion>),
    /// `[view][k]` for the k-th target slot of the leaf.
    Fields(Vec<Vec<FieldValue>>),
}

pub struct Dag {
    tree: Arc<DualTree>,
    options: DagOptions,
    translators: Vec<Arc<Translator>>,
    tasks: Vec<Task>,
    dependents: Vec<Vec<usize>>,
    pending: Vec<usize>,
    m_task: Vec<Option<usize>>,
    l_task: Vec<Option<usize>>,
    far_task: Vec<Option<usize>>,
    direct_task: Vec<Option<usize>>,
    slots: Vec<OnceLock<Output>>,
    counts: EdgeCounts,
    pub(super) generation: u64,
    pub(super) state: DagState,
}

impl Dag {
    pub fn new(tree: Arc<DualTree>, options: DagOptions) -> Result<Self, EngineError> {
        let (lap, yuk) = options.orders;
        let mut translators: Vec<Arc<Translator>> = vec![];
        for v in &options.views {
            let order = match v.kernel {
                multipole::Kernel::Laplace => lap,
                multipole::Kernel::Yukawa(_) => yuk,
            };
            let shared = translators.iter().find(|t| t.kernel() == v.kernel && t.order() == order).cloned();
            translators.push(match shared {
                Some(t) => t,
                None => Arc::new(Translator::new(v.kernel, order)?),
            });
        }
        let standard = options.method == MethodPolicy::Standard;
        let src = &tree.sources;
        let tgt = &tree.targets;
        let lists = &tree.lists;

        // which source boxes need multipoles: used by M2L/M2T, or their parent is
        let mut m_needed = vec![false; src.boxes.len()];
        for l in lists {
            for &s in &l.list2 {
                m_needed[s] = true;
            }
            if standard {
                for &s in &l.list3 {
                    m_needed[s] = true;
                }
            }
        }
        // a parent multipole is built from all of its children; parents
        // precede children in depth-first order
        for b in 0..src.boxes.len() {
            if let Some(p) = src.boxes[b].parent {
                if m_needed[p] {
                    m_needed[b] = true;
                }
            }
        }
        let mut l_needed = vec![false; tgt.boxes.len()];
        for b in 0..tgt.boxes.len() {
            let l = &lists[b];
            l_needed[b] = !l.list2.is_empty() || !l.list4.is_empty() || tgt.boxes[b].parent.is_some_and(|p| l_needed[p]);
        }

        let mut tasks = vec![];
        let mut m_task = vec![None; src.boxes.len()];
        let mut l_task = vec![None; tgt.boxes.len()];
        let mut far_task = vec![None; tgt.boxes.len()];
        let mut direct_task = vec![None; tgt.boxes.len()];
        let mut counts = EdgeCounts::default();
        // multipoles bottom-up so children get lower ids
        for b in (0..src.boxes.len()).rev() {
            if m_needed[b] {
                m_task[b] = Some(tasks.len());
                tasks.push(Task::Multipole(b));
                if src.boxes[b].is_leaf() {
                    counts.s2m += 1;
                } else {
                    counts.m2m += src.boxes[b].children.len();
                }
            }
        }
        for b in 0..tgt.boxes.len() {
            let l = &lists[b];
            if l_needed[b] {
                l_task[b] = Some(tasks.len());
                tasks.push(Task::Local(b));
                counts.m2l += l.list2.len();
                counts.s2l += l.list4.len();
                if tgt.boxes[b].parent.is_some_and(|p| l_needed[p]) {
                    counts.l2l += 1;
                }
            }
            if tgt.boxes[b].is_leaf() {
                let m2t = if standard { l.list3.len() } else { 0 };
                if l_needed[b] || m2t > 0 {
                    far_task[b] = Some(tasks.len());
                    tasks.push(Task::Far(b));
                    counts.m2t += m2t;
                    counts.l2t += usize::from(l_needed[b]);
                }
                let s2t = l.list1.len() + if standard { 0 } else { l.list3.len() };
                if options.include_direct && s2t > 0 {
                    direct_task[b] = Some(tasks.len());
                    tasks.push(Task::Direct(b));
                    counts.s2t += s2t;
                }
            }
        }

        let mut dependents = vec![vec![]; tasks.len()];
        let mut pending = vec![0; tasks.len()];
        let mut depend = |on: usize, task: usize, pending: &mut Vec<usize>| {
            dependents[on].push(task);
            pending[task] += 1;
        };
        for (i, task) in tasks.iter().enumerate() {
            match *task {
                Task::Multipole(b) => {
                    for &c in &src.boxes[b].children {
                        depend(m_task[c].expect("child multipole"), i, &mut pending);
                    }
                }
                Task::Local(b) => {
                    if let Some(p) = tgt.boxes[b].parent.and_then(|p| l_task[p]) {
                        depend(p, i, &mut pending);
                    }
                    for &s in &lists[b].list2 {
                        depend(m_task[s].expect("list-2 multipole"), i, &mut pending);
                    }
                }
                Task::Far(b) => {
                    if let Some(l) = l_task[b] {
                        depend(l, i, &mut pending);
                    }
                    if standard {
                        for &s in &lists[b].list3 {
                            depend(m_task[s].expect("list-3 multipole"), i, &mut pending);
                        }
                    }
                }
                Task::Direct(_) => {}
            }
        }
        let slots = (0..tasks.len()).map(|_| OnceLock::new()).collect();
        Ok(Self {
            tree,
            options,
            translators,
            tasks,
            dependents,
            pending,
            m_task,
            l_task,
            far_task,
            direct_task,
            slots,
            counts,
            generation: 0,
            state: DagState::Ready,
        })
    }

    pub fn counts(&self) -> EdgeCounts {
        self.counts
    }

    pub fn options(&self) -> &DagOptions {
        &self.options
    }

    pub fn tree(&self) -> &Arc<DualTree> {
        &self.tree
    }

    pub fn reset(&mut self) -> Result<(), EngineError> {
        if self.state == DagState::Running {
            return Err(EngineError::State("reset while the DAG is executing"));
        }
        for s in &mut self.slots {
            s.take();
        }
        self.state = DagState::Ready;
        self.generation += 1;
        Ok(())
    }

    pub fn execute(&mut self, pool: &rayon::ThreadPool, strengths: &[&[Strength]]) -> Result<Vec<Vec<FieldValue>>, EngineError> {
        match self.state {
            DagState::Ready => {}
            DagState::Completed => return Err(EngineError::NotReset),
            DagState::Running => return Err(EngineError::State("DAG is already executing")),
        }
        let nv = self.options.views.len();
        if strengths.len() != nv {
            return Err(EngineError::Dimension {
                what: "views",
                expected: nv,
                found: strengths.len(),
            });
        }
        let ns = self.tree.sources.order.len();
        for s in strengths {
            if s.len() != ns {
                return Err(EngineError::Dimension {
                    what: "source strengths",
                    expected: ns,
                    found: s.len(),
                });
            }
        }
        let sources: Vec<Vec<SourceDensity>> = self
            .options
            .views
            .iter()
            .zip(strengths)
            .map(|(v, s)| {
                self.tree
                    .sources
                    .order
                    .iter()
                    .zip(&self.tree.sources.points)
                    .map(|(&g, &position)| SourceDensity {
                        position,
                        charge: if v.layer.charges() { s[g].charge } else { 0.0 },
                        dipole: if v.layer.dipoles() { s[g].dipole } else { crate::Vec3::zeros() },
                    })
                    .collect()
            })
            .collect();

        self.state = DagState::Running;
        let pending: Vec<AtomicUsize> = self.pending.iter().map(|&p| AtomicUsize::new(p)).collect();
        {
            let ctx = Ctx {
                dag: self,
                sources: &sources,
                pending: &pending,
            };
            pool.install(|| {
                rayon::scope(|sc| {
                    for (i, &p) in ctx.dag.pending.iter().enumerate() {
                        if p == 0 {
                            let ctx = &ctx;
                            sc.spawn(move |sc| ctx.run(sc, i));
                        }
                    }
                })
            });
        }

        let nt = self.tree.targets.order.len();
        let mut out = vec![vec![FieldValue::default(); nt]; nv];
        let tgt = &self.tree.targets;
        for leaf in tgt.leaves() {
            let b = &tgt.boxes[leaf];
            let far = self.far_task[leaf].map(|t| self.fields(t));
            let direct = self.direct_task[leaf].map(|t| self.fields(t));
            for (v, out) in out.iter_mut().enumerate() {
                for (k, slot) in (b.start..b.end).enumerate() {
                    let mut acc = FieldValue::default();
                    for part in [far, direct].into_iter().flatten() {
                        acc.potential += part[v][k].potential;
                        acc.dn0 += part[v][k].dn0;
                    }
                    out[tgt.order[slot]] = acc;
                }
            }
        }
        self.state = DagState::Completed;
        Ok(out)
    }

    fn fields(&self, task: usize) -> &Vec<Vec<FieldValue>> {
        match self.slots[task].get() {
            Some(Output::Fields(f)) => f,
            _ => unreachable!("field task did not complete"),
        }
    }

    fn expansions(&self, task: usize) -> &[Expansion] {
        match self.slots[task].get() {
            Some(Output::Expansions(e)) => e,
            _ => unreachable!("expansion task did not complete"),
        }
    }
}

struct Ctx<'a> {
    dag: &'a Dag,
    sources: &'a [Vec<SourceDensity>],
    pending: &'a [AtomicUsize],
}

impl Ctx<'_> {
    fn run<'s>(&'s self, sc: &rayon::Scope<'s>, task: usize) {
        let out = self.compute(task);
        if self.dag.slots[task].set(out).is_err() {
            unreachable!("task {task} ran twice");
        }
        for &d in &self.dag.dependents[task] {
            if self.pending[d].fetch_sub(1, Ordering::AcqRel) == 1 {
                sc.spawn(move |sc| self.run(sc, d));
            }
        }
    }

    fn compute(&self, task: usize) -> Output {
        let dag = self.dag;
        let tree = &*dag.tree;
        let root = &tree.root;
        match dag.tasks[task] {
            Task::Multipole(b) => {
                let bx = &tree.sources.boxes[b];
                let center = root.center(bx.level, bx.coord);
                let radius = root.radius(bx.level);
                let exps = dag
                    .translators
                    .iter()
                    .enumerate()
                    .map(|(v, tr)| {
                        let mut e = tr.zero(ExpansionKind::Multipole, center, radius);
                        if bx.is_leaf() {
                            tr.s_to_m(&self.sources[v][bx.start..bx.end], &mut e);
                        } else {
                            for &c in &bx.children {
                                let child = dag.m_task[c].expect("child multipole");
                                tr.m_to_m(&dag.expansions(child)[v], &mut e);
                            }
                        }
                        e
                    })
                    .collect();
                Output::Expansions(exps)
            }
            Task::Local(b) => {
                let bx = &tree.targets.boxes[b];
                let center = root.center(bx.level, bx.coord);
                let radius = root.radius(bx.level);
                let lists = &tree.lists[b];
                let parent = bx.parent.and_then(|p| dag.l_task[p]);
                let exps = dag
                    .translators
                    .iter()
                    .enumerate()
                    .map(|(v, tr)| {
                        let mut e = tr.zero(ExpansionKind::Local, center, radius);
                        if let Some(p) = parent {
                            tr.l_to_l(&dag.expansions(p)[v], &mut e);
                        }
                        for &s in &lists.list2 {
                            tr.m_to_l(&dag.expansions(dag.m_task[s].expect("list-2 multipole"))[v], &mut e);
                        }
                        for &s in &lists.list4 {
                            let sb = &tree.sources.boxes[s];
                            tr.s_to_l(&self.sources[v][sb.start..sb.end], &mut e);
                        }
                        e
                    })
                    .collect();
                Output::Expansions(exps)
            }
            Task::Far(b) => {
                let bx = &tree.targets.boxes[b];
                let lists = &tree.lists[b];
                let standard = dag.options.method == MethodPolicy::Standard;
                let fields = dag
                    .translators
                    .iter()
                    .enumerate()
                    .map(|(v, tr)| {
                        let mut acc = self.accumulators(bx.start, bx.end);
                        if let Some(l) = dag.l_task[b] {
                            tr.l_to_t(&dag.expansions(l)[v], &mut acc);
                        }
                        if standard {
                            for &s in &lists.list3 {
                                tr.m_to_t(&dag.expansions(dag.m_task[s].expect("list-3 multipole"))[v], &mut acc);
                            }
                        }
                        to_fields(&acc)
                    })
                    .collect();
                Output::Fields(fields)
            }
            Task::Direct(b) => {
                let bx = &tree.targets.boxes[b];
                let lists = &tree.lists[b];
                let extra: &[usize] = if dag.options.method == MethodPolicy::DirectListThree {
                    &lists.list3
                } else {
                    &[]
                };
                let fields = dag
                    .translators
                    .iter()
                    .enumerate()
                    .map(|(v, tr)| {
                        let mut acc = self.accumulators(bx.start, bx.end);
                        for &s in lists.list1.iter().chain(extra) {
                            let sb = &tree.sources.boxes[s];
                            tr.s_to_t(&self.sources[v][sb.start..sb.end], &mut acc);
                        }
                        to_fields(&acc)
                    })
                    .collect();
                Output::Fields(fields)
            }
        }
    }

    fn accumulators(&self, start: usize, end: usize) -> Vec<TargetAccumulator> {
        let t = &self.dag.tree.targets;
        (start..end)
            .map(|s| TargetAccumulator::new(t.points[s], self.dag.tree.target_normals[t.order[s]]))
            .collect()
    }
}

fn to_fields(acc: &[TargetAccumulator]) -> Vec<FieldValue> {
    acc.iter()
        .map(|a| FieldValue {
            potential: a.potential,
            dn0: a.dn0,
        })
        .collect()
}
