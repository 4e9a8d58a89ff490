//! Adaptive octrees over a shared cubic root and the dual-tree interaction
//! lists.

use super::EngineError;
use crate::Vec3;

/// Deepest level a box may reach. Points that still crowd a leaf past this
/// depth are reported as a depth-cap error.
pub const MAX_DEPTH: u32 = 40;

/// The cube every box of both trees subdivides.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RootCube {
    pub corner: Vec3,
    pub width: f64,
}

impl RootCube {
    /// Smallest padded cube around all points, centred on their bounding box.
    pub fn enclosing<'a>(points: impl IntoIterator<Item = &'a Vec3>) -> Self {
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for p in points {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        let extent = (hi - lo).max();
        let width = if extent > 0.0 { extent * (1.0 + 1e-9) } else { 1.0 };
        Self {
            corner: 0.5 * (lo + hi) - Vec3::repeat(0.5 * width),
            width,
        }
    }

    pub fn box_width(&self, level: u32) -> f64 {
        self.width / (1u64 << level) as f64
    }

    pub fn center(&self, level: u32, coord: [u64; 3]) -> Vec3 {
        let w = self.box_width(level);
        self.corner + Vec3::new(coord[0] as f64 + 0.5, coord[1] as f64 + 0.5, coord[2] as f64 + 0.5) * w
    }

    /// Radius of the sphere circumscribing a box of `level`.
    pub fn radius(&self, level: u32) -> f64 {
        0.5 * 3f64.sqrt() * self.box_width(level)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoxNode {
    pub level: u32,
    pub coord: [u64; 3],
    pub parent: Option<usize>,
    /// Non-empty children in octant order.
    pub children: Vec<usize>,
    /// Range of tree-order point slots owned by this box.
    pub start: usize,
    pub end: usize,
}

impl BoxNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }
}

/// Boxes share at least one boundary point (or overlap).
pub fn adjacent(a: &BoxNode, b: &BoxNode) -> bool {
    let level = a.level.max(b.level);
    let (sa, sb) = (level - a.level, level - b.level);
    (0..3).all(|k| {
        let (alo, ahi) = (a.coord[k] << sa, (a.coord[k] + 1) << sa);
        let (blo, bhi) = (b.coord[k] << sb, (b.coord[k] + 1) << sb);
        alo <= bhi && blo <= ahi
    })
}

/// One adaptive octree. Boxes are stored in depth-first order, so every box
/// owns a contiguous range of tree-order points and box 0 is the root.
#[derive(Debug, Clone)]
pub struct Octree {
    pub boxes: Vec<BoxNode>,
    /// `order[slot]` is the global index of the point in tree slot `slot`.
    pub order: Vec<usize>,
    /// Inverse of `order`.
    pub slot_of: Vec<usize>,
    /// Positions in tree order.
    pub points: Vec<Vec3>,
}

impl Octree {
    pub fn build(root: &RootCube, points: &[Vec3], threshold: usize) -> Result<Self, EngineError> {
        let mut order: Vec<usize> = (0..points.len()).collect();
        let mut boxes = vec![BoxNode {
            level: 0,
            coord: [0; 3],
            parent: None,
            children: vec![],
            start: 0,
            end: points.len(),
        }];
        let mut stack = vec![0usize];
        // children are pushed so that the depth-first order is octant order
        let mut dfs = Vec::with_capacity(points.len() / threshold.max(1) * 2 + 1);
        while let Some(b) = stack.pop() {
            dfs.push(b);
            let BoxNode {
                level, coord, start, end, ..
            } = boxes[b].clone();
            if end - start <= threshold {
                continue;
            }
            if level >= MAX_DEPTH {
                return Err(EngineError::DepthCap {
                    count: end - start,
                    threshold,
                    depth: MAX_DEPTH,
                });
            }
            let w = root.box_width(level + 1);
            let octant = |p: &Vec3| {
                let mut o = 0usize;
                for k in 0..3 {
                    let cell = ((p[k] - root.corner[k]) / w).floor() as i64 - 2 * coord[k] as i64;
                    if cell.clamp(0, 1) == 1 {
                        o |= 1 << k;
                    }
                }
                o
            };
            let slice = &mut order[start..end];
            slice.sort_by_key(|&i| octant(&points[i]));
            let mut first = vec![];
            let mut at = start;
            for o in 0..8 {
                let from = at;
                while at < end && octant(&points[order[at]]) == o {
                    at += 1;
                }
                if at > from {
                    let c = boxes.len();
                    boxes.push(BoxNode {
                        level: level + 1,
                        coord: [
                            2 * coord[0] + (o & 1) as u64,
                            2 * coord[1] + ((o >> 1) & 1) as u64,
                            2 * coord[2] + ((o >> 2) & 1) as u64,
                        ],
                        parent: Some(b),
                        children: vec![],
                        start: from,
                        end: at,
                    });
                    first.push(c);
                }
            }
            boxes[b].children = first.clone();
            stack.extend(first.into_iter().rev());
        }
        // renumber boxes into depth-first order
        let mut new_id = vec![0; boxes.len()];
        for (i, &b) in dfs.iter().enumerate() {
            new_id[b] = i;
        }
        let mut sorted: Vec<BoxNode> = dfs.iter().map(|&b| boxes[b].clone()).collect();
        for b in &mut sorted {
            b.parent = b.parent.map(|p| new_id[p]);
            for c in &mut b.children {
                *c = new_id[*c];
            }
        }
        let mut slot_of = vec![0; order.len()];
        for (s, &g) in order.iter().enumerate() {
            slot_of[g] = s;
        }
        let pts = order.iter().map(|&g| points[g]).collect();
        Ok(Self {
            boxes: sorted,
            order,
            slot_of,
            points: pts,
        })
    }

    pub fn leaves(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.boxes.len()).filter(|&b| self.boxes[b].is_leaf())
    }

    pub fn depth(&self) -> u32 {
        self.boxes.iter().map(|b| b.level).max().unwrap_or(0)
    }
}

/// Interaction lists of one target box. Entries are source-tree box ids.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct InteractionLists {
    /// Adjacent source leaves (leaf targets only).
    pub list1: Vec<usize>,
    /// Same-level, well-separated children of the parent's neighbours.
    pub list2: Vec<usize>,
    /// Finer source boxes separated from this leaf but not from its parent.
    pub list3: Vec<usize>,
    /// Coarser source leaves separated from this box but not its parent.
    pub list4: Vec<usize>,
}

/// Lists for every target box, by dual traversal from the roots.
pub fn interaction_lists(sources: &Octree, targets: &Octree) -> Vec<InteractionLists> {
    let mut lists = vec![InteractionLists::default(); targets.boxes.len()];
    let mut stack = vec![(0usize, vec![0usize])];
    while let Some((t, near)) = stack.pop() {
        let tb = &targets.boxes[t];
        if tb.is_leaf() {
            for &s in &near {
                collect_leaf(sources, tb, s, &mut lists[t]);
            }
            continue;
        }
        for &tc in tb.children.iter().rev() {
            let cb = &targets.boxes[tc];
            let mut child_near = vec![];
            for &s in &near {
                let sb = &sources.boxes[s];
                if sb.is_leaf() {
                    if adjacent(sb, cb) {
                        child_near.push(s);
                    } else {
                        lists[tc].list4.push(s);
                    }
                } else {
                    for &sc in &sb.children {
                        if adjacent(&sources.boxes[sc], cb) {
                            child_near.push(sc);
                        } else {
                            lists[tc].list2.push(sc);
                        }
                    }
                }
            }
            stack.push((tc, child_near));
        }
    }
    lists
}

fn collect_leaf(sources: &Octree, t: &BoxNode, s: usize, out: &mut InteractionLists) {
    let sb = &sources.boxes[s];
    if sb.is_leaf() {
        out.list1.push(s);
        return;
    }
    for &c in &sb.children {
        if adjacent(&sources.boxes[c], t) {
            collect_leaf(sources, t, c, out);
        } else {
            out.list3.push(c);
        }
    }
}

/// Source and target octrees over one shared root cube.
#[derive(Debug, Clone)]
pub struct DualTree {
    pub root: RootCube,
    pub threshold: usize,
    pub sources: Octree,
    pub targets: Octree,
    /// Unit normals of the targets (global order); zero skips gradients.
    pub target_normals: Vec<Vec3>,
    pub lists: Vec<InteractionLists>,
}

impl DualTree {
    pub fn new(sources: &[Vec3], targets: &[Vec3], target_normals: Option<&[Vec3]>, threshold: usize) -> Result<Self, EngineError> {
        if sources.is_empty() {
            return Err(EngineError::Empty("source"));
        }
        if targets.is_empty() {
            return Err(EngineError::Empty("target"));
        }
        if threshold == 0 {
            return Err(EngineError::Threshold);
        }
        if sources.iter().chain(targets).any(|p| !p.iter().all(|x| x.is_finite())) {
            return Err(EngineError::NonFinite);
        }
        let normals = match target_normals {
            Some(n) if n.len() != targets.len() => {
                return Err(EngineError::Dimension {
                    what: "target normals",
                    expected: targets.len(),
                    found: n.len(),
                })
            }
            Some(n) => n.to_vec(),
            None => vec![Vec3::zeros(); targets.len()],
        };
        let root = RootCube::enclosing(sources.iter().chain(targets));
        let s = Octree::build(&root, sources, threshold)?;
        let t = Octree::build(&root, targets, threshold)?;
        let lists = interaction_lists(&s, &t);
        Ok(Self {
            root,
            threshold,
            sources: s,
            targets: t,
            target_normals: normals,
            lists,
        })
    }

    /// `(target, source)` global index pairs handled by direct summation
    /// under `method`, grouped by target: entry `t` lists the sources whose
    /// interaction with target `t` never passes through an expansion.
    pub fn direct_pairs(&self, method: super::MethodPolicy) -> Vec<Vec<usize>> {
        let mut out = vec![vec![]; self.targets.order.len()];
        for t in self.targets.leaves() {
            let l = &self.lists[t];
            let extra: &[usize] = if method == super::MethodPolicy::DirectListThree {
                &l.list3
            } else {
                &[]
            };
            let tb = &self.targets.boxes[t];
            for &s in l.list1.iter().chain(extra) {
                let sb = &self.sources.boxes[s];
                for ts in tb.start..tb.end {
                    let tg = self.targets.order[ts];
                    out[tg].extend(self.sources.order[sb.start..sb.end].iter().copied());
                }
            }
        }
        for v in &mut out {
            v.sort_unstable();
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn random_points(seed: u64, n: usize, clustered: bool) -> Vec<Vec3> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let u = Vec3::new(rng.gen(), rng.gen(), rng.gen());
                if clustered && i % 3 != 0 {
                    // a tight cluster in one corner makes the trees non-uniform
                    Vec3::repeat(0.1) + 0.05 * u
                } else {
                    u
                }
            })
            .collect()
    }

    fn ancestors(tree: &Octree, mut b: usize) -> Vec<usize> {
        let mut out = vec![b];
        while let Some(p) = tree.boxes[b].parent {
            out.push(p);
            b = p;
        }
        out
    }

    /// Count, for every (source leaf, target leaf) pair, how many list
    /// entries cover it.
    fn coverage(tree: &DualTree) -> Vec<((usize, usize), usize)> {
        let mut out = vec![];
        for t in tree.targets.leaves() {
            let t_anc = ancestors(&tree.targets, t);
            for s in tree.sources.leaves() {
                let s_anc = ancestors(&tree.sources, s);
                let mut n = 0;
                for &ta in &t_anc {
                    let l = &tree.lists[ta];
                    let far = l.list2.iter().chain(&l.list4);
                    n += far.filter(|x| s_anc.contains(x)).count();
                    if ta == t {
                        n += l.list1.iter().chain(&l.list3).filter(|x| s_anc.contains(x)).count();
                    }
                }
                out.push(((s, t), n));
            }
        }
        out
    }

    #[test]
    fn every_pair_is_covered_exactly_once() {
        for (seed, clustered, threshold) in [(1, false, 5), (2, true, 5), (3, true, 1), (4, false, 40)] {
            let src = random_points(seed, 200, clustered);
            let tgt = random_points(seed + 100, 200, clustered);
            let tree = DualTree::new(&src, &tgt, None, threshold).unwrap();
            for ((s, t), n) in coverage(&tree) {
                assert_eq!(n, 1, "seed {seed}: source leaf {s}, target leaf {t}");
            }
        }
        // identical trees
        let pts = random_points(7, 200, true);
        let tree = DualTree::new(&pts, &pts, None, 4).unwrap();
        assert!(coverage(&tree).iter().all(|&(_, n)| n == 1));
    }

    #[test]
    fn adaptive_trees_produce_list3_and_list4() {
        let pts = random_points(2, 400, true);
        let tree = DualTree::new(&pts, &pts, None, 4).unwrap();
        assert!(tree.lists.iter().any(|l| !l.list3.is_empty()));
        assert!(tree.lists.iter().any(|l| !l.list4.is_empty()));
    }

    #[test]
    fn small_inputs_are_single_leaves() {
        let tree = DualTree::new(&[Vec3::zeros()], &[Vec3::x()], None, 40).unwrap();
        assert_eq!(tree.sources.boxes.len(), 1);
        assert_eq!(tree.targets.boxes.len(), 1);
        assert_eq!(tree.lists[0].list1, vec![0]);
        let pts = random_points(3, 40, false);
        let tree = DualTree::new(&pts, &pts, None, 40).unwrap();
        assert_eq!(tree.sources.boxes.len(), 1);
    }

    #[test]
    fn disjoint_sets_build() {
        let atoms = random_points(4, 10, false);
        let nodes: Vec<Vec3> = random_points(5, 300, false).iter().map(|p| p + Vec3::new(5.0, 0.0, 0.0)).collect();
        let tree = DualTree::new(&atoms, &nodes, None, 8).unwrap();
        assert!(coverage(&tree).iter().all(|&(_, n)| n == 1));
    }

    #[test]
    fn duplicate_points_hit_depth_cap() {
        let pts = vec![Vec3::new(0.3, 0.3, 0.3); 5];
        let mut all = pts.clone();
        all.push(Vec3::zeros());
        assert!(matches!(DualTree::new(&all, &all, None, 2), Err(EngineError::DepthCap { .. })));
        // within the threshold duplicates are fine
        assert!(DualTree::new(&all, &all, None, 5).is_ok());
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(DualTree::new(&[], &[Vec3::zeros()], None, 4), Err(EngineError::Empty(_))));
        assert!(matches!(DualTree::new(&[Vec3::zeros()], &[Vec3::zeros()], None, 0), Err(EngineError::Threshold)));
        let nan = Vec3::new(f64::NAN, 0.0, 0.0);
        assert!(matches!(DualTree::new(&[nan], &[Vec3::zeros()], None, 4), Err(EngineError::NonFinite)));
    }

    #[test]
    fn direct_pairs_for_identical_trees() {
        use super::super::MethodPolicy;
        let pts = random_points(9, 300, true);
        let tree = DualTree::new(&pts, &pts, None, 6).unwrap();
        let std = tree.direct_pairs(MethodPolicy::Standard);
        let all = tree.direct_pairs(MethodPolicy::DirectListThree);
        for (t, srcs) in std.iter().enumerate() {
            assert!(srcs.contains(&t));
            // list-1 adjacency is mutual
            for &s in srcs {
                assert!(std[s].binary_search(&t).is_ok(), "{t} {s}");
                assert!(all[t].binary_search(&s).is_ok());
            }
        }
        // the list-3 side of a pair is list-4 seen from the other box
        assert!(all.iter().map(Vec::len).sum::<usize>() > std.iter().map(Vec::len).sum::<usize>());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn leaves_partition_points(seed in 0u64..1000, n in 1usize..300, threshold in 1usize..50) {
            let pts = random_points(seed, n, seed % 2 == 0);
            let root = RootCube::enclosing(&pts);
            let tree = Octree::build(&root, &pts, threshold).unwrap();
            let mut seen = vec![0; n];
            for l in tree.leaves() {
                let b = &tree.boxes[l];
                prop_assert!(b.len() <= threshold);
                let w = root.box_width(b.level);
                let lo = root.corner + Vec3::new(b.coord[0] as f64, b.coord[1] as f64, b.coord[2] as f64) * w;
                for s in b.start..b.end {
                    seen[tree.order[s]] += 1;
                    let p = tree.points[s];
                    for k in 0..3 {
                        prop_assert!(p[k] >= lo[k] - 1e-12 && p[k] <= lo[k] + w + 1e-12);
                    }
                }
            }
            prop_assert!(seen.iter().all(|&c| c == 1));
            for (i, b) in tree.boxes.iter().enumerate() {
                if let Some(p) = b.parent {
                    prop_assert!(p < i);
                    prop_assert!(tree.boxes[p].start <= b.start && b.end <= tree.boxes[p].end);
                }
            }
        }
    }
}
