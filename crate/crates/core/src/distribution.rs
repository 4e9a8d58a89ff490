//! Simulated localities: node data partitioned in tree order, moved between
//! localities only as serialized messages, and combined only through
//! ordered reductions.
//!
//! Localities live in one process. Each has a mailbox of byte messages;
//! [`DistributedArray::exchange`] serializes requested elements at their
//! owner, posts them, and deserializes them at the requester through the
//! array's currently bound [`Serializer`].
//!
//! Wire format (all little-endian): an 8-byte message header
//! `[version: u8][serializer id: u8][0u8; 2][count: u32]`, followed by `count`
//! element payloads whose layout is documented on each serializer.

use std::collections::VecDeque;
use std::ops::Range;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use thiserror::Error;

use crate::engine::Octree;
use crate::surface::{NodePatch, SubElement};
use crate::Vec3;

/// Version byte of every message header.
pub const WIRE_VERSION: u8 = 1;
const HEADER_LEN: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DistributionError {
    #[error("at least one locality is required")]
    NoLocalities,
    #[error("global index {index} out of range for an array of length {len}")]
    UnknownIndex { index: usize, len: usize },
    #[error("expected {expected} values per locality, got {found}")]
    Dimension { expected: usize, found: usize },
    #[error("invalid partition: {0}")]
    Partition(String),
    #[error("malformed message: {0}")]
    Wire(String),
}

/// Assignment of global indices to localities: locality `k` owns the
/// contiguous span `starts[k]..starts[k+1]` of `order`.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    order: Vec<usize>,
    starts: Vec<usize>,
    owner: Vec<usize>,
    local: Vec<usize>,
}

impl Partition {
    /// `order` must be a permutation of `0..order.len()` and `starts` a
    /// non-decreasing list from 0 to `order.len()`.
    pub fn new(order: Vec<usize>, starts: Vec<usize>) -> Result<Self, DistributionError> {
        let n = order.len();
        if starts.len() < 2 {
            return Err(DistributionError::NoLocalities);
        }
        if starts[0] != 0 || *starts.last().unwrap() != n || starts.windows(2).any(|w| w[0] > w[1]) {
            return Err(DistributionError::Partition(format!("span starts {starts:?} do not cover 0..{n}")));
        }
        let mut owner = vec![usize::MAX; n];
        let mut local = vec![0; n];
        for k in 0..starts.len() - 1 {
            for (i, &g) in order[starts[k]..starts[k + 1]].iter().enumerate() {
                if g >= n || owner[g] != usize::MAX {
                    return Err(DistributionError::Partition(format!("index {g} is out of range or repeated")));
                }
                owner[g] = k;
                local[g] = i;
            }
        }
        Ok(Self { order, starts, owner, local })
    }

    /// Identity order split into near-equal contiguous blocks.
    pub fn contiguous(len: usize, n_localities: usize) -> Result<Self, DistributionError> {
        if n_localities == 0 {
            return Err(DistributionError::NoLocalities);
        }
        let starts = (0..=n_localities).map(|k| k * len / n_localities).collect();
        Self::new((0..len).collect(), starts)
    }

    pub fn n_localities(&self) -> usize {
        self.starts.len() - 1
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn owner(&self, global: usize) -> usize {
        self.owner[global]
    }

    /// Position of `global` within its owner's segment.
    pub fn local_index(&self, global: usize) -> usize {
        self.local[global]
    }

    /// Global indices owned by locality `k`, in segment order.
    pub fn globals(&self, k: usize) -> &[usize] {
        &self.order[self.span(k)]
    }

    pub fn span(&self, k: usize) -> Range<usize> {
        self.starts[k]..self.starts[k + 1]
    }
}

/// Split the points of `tree` into `n_localities` contiguous runs of tree
/// order. Cuts fall on leaf boundaries, each at the boundary closest to the
/// even split, so spans are balanced to within one leaf.
pub fn partition_by_tree(tree: &Octree, n_localities: usize) -> Result<Partition, DistributionError> {
    if n_localities == 0 {
        return Err(DistributionError::NoLocalities);
    }
    let n = tree.order.len();
    let mut cuts: Vec<usize> = tree.leaves().map(|b| tree.boxes[b].start).collect();
    cuts.push(n);
    cuts.sort_unstable();
    let mut starts = vec![0];
    for k in 1..n_localities {
        let want = k * n / n_localities;
        let prev = *starts.last().unwrap();
        let best = cuts
            .iter()
            .copied()
            .filter(|&c| c >= prev)
            .min_by_key(|&c| c.abs_diff(want))
            .unwrap_or(n);
        starts.push(best);
    }
    starts.push(n);
    Partition::new(tree.order.clone(), starts)
}

/// Size/serialize/deserialize contract of one wire format.
pub trait Serializer<T>: Send + Sync {
    /// Written into message headers; receivers reject other formats.
    fn id(&self) -> u8;
    /// Bytes [`serialize`](Self::serialize) writes for `x`.
    fn size(&self, x: &T) -> usize;
    /// Append exactly `size(x)` bytes.
    fn serialize(&self, x: &T, out: &mut Vec<u8>);
    /// Overwrite the transported fields of `into` from the front of `buf`;
    /// returns the number of bytes consumed.
    fn deserialize(&self, buf: &[u8], into: &mut T) -> Result<usize, DistributionError>;
}

/// Cumulative traffic of a [`LocalityGroup`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Traffic {
    pub messages: u64,
    pub bytes: u64,
    pub reductions: u64,
}

struct Message {
    from: usize,
    bytes: Vec<u8>,
}

/// Mailboxes and reductions of `n` simulated localities.
pub struct LocalityGroup {
    mailboxes: Vec<Mutex<VecDeque<Message>>>,
    messages: AtomicU64,
    bytes: AtomicU64,
    reductions: AtomicU64,
}

impl std::fmt::Debug for LocalityGroup {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LocalityGroup").field("n", &self.mailboxes.len()).field("traffic", &self.traffic()).finish()
    }
}

impl LocalityGroup {
    pub fn new(n_localities: usize) -> Result<Self, DistributionError> {
        if n_localities == 0 {
            return Err(DistributionError::NoLocalities);
        }
        Ok(Self {
            mailboxes: (0..n_localities).map(|_| Mutex::new(VecDeque::new())).collect(),
            messages: AtomicU64::new(0),
            bytes: AtomicU64::new(0),
            reductions: AtomicU64::new(0),
        })
    }

    pub fn n_localities(&self) -> usize {
        self.mailboxes.len()
    }

    pub fn traffic(&self) -> Traffic {
        Traffic {
            messages: self.messages.load(Ordering::Relaxed),
            bytes: self.bytes.load(Ordering::Relaxed),
            reductions: self.reductions.load(Ordering::Relaxed),
        }
    }

    pub fn send(&self, from: usize, to: usize, bytes: Vec<u8>) {
        self.messages.fetch_add(1, Ordering::Relaxed);
        self.bytes.fetch_add(bytes.len() as u64, Ordering::Relaxed);
        self.mailboxes[to].lock().expect("mailbox").push_back(Message { from, bytes });
    }

    /// Next message for `to`, with its sender.
    pub fn receive(&self, to: usize) -> Option<(usize, Vec<u8>)> {
        self.mailboxes[to].lock().expect("mailbox").pop_front().map(|m| (m.from, m.bytes))
    }

    /// Sum one value per locality, always in locality order, so every
    /// locality and every run sees the same bits.
    pub fn all_reduce_sum(&self, values: &[f64]) -> Result<f64, DistributionError> {
        if values.len() != self.n_localities() {
            return Err(DistributionError::Dimension {
                expected: self.n_localities(),
                found: values.len(),
            });
        }
        self.reductions.fetch_add(1, Ordering::Relaxed);
        Ok(values.iter().fold(0.0, |a, v| a + v))
    }
}

/// What one [`DistributedArray::exchange`] moved.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ExchangeReport {
    pub messages: usize,
    /// Element payload bytes, without headers.
    pub payload_bytes: usize,
    pub serialized: usize,
    /// Requests served from the requester's own segment without
    /// serialization.
    pub local_copies: usize,
}

/// Elements indexed `0..len`, stored in per-locality segments.
pub struct DistributedArray<T> {
    partition: Arc<Partition>,
    segments: Vec<Vec<T>>,
    serializer: Arc<dyn Serializer<T>>,
}

impl<T: Clone + Default> DistributedArray<T> {
    /// `init(g)` builds element `g` on its owner.
    pub fn new(partition: Arc<Partition>, serializer: Arc<dyn Serializer<T>>, init: impl Fn(usize) -> T) -> Self {
        let segments = (0..partition.n_localities())
            .map(|k| partition.globals(k).iter().map(|&g| init(g)).collect())
            .collect();
        Self {
            partition,
            segments,
            serializer,
        }
    }

    pub fn partition(&self) -> &Arc<Partition> {
        &self.partition
    }

    pub fn len(&self) -> usize {
        self.partition.len()
    }

    pub fn is_empty(&self) -> bool {
        self.partition.is_empty()
    }

    pub fn get(&self, global: usize) -> Option<&T> {
        (global < self.len()).then(|| &self.segments[self.partition.owner(global)][self.partition.local_index(global)])
    }

    pub fn local(&self, k: usize) -> &[T] {
        &self.segments[k]
    }

    pub fn local_mut(&mut self, k: usize) -> &mut [T] {
        &mut self.segments[k]
    }

    pub fn serializer(&self) -> &Arc<dyn Serializer<T>> {
        &self.serializer
    }

    /// Rebind the wire format used by later exchanges.
    pub fn set_manager(&mut self, serializer: Arc<dyn Serializer<T>>) {
        self.serializer = serializer;
    }

    /// Deliver `requests[r][i]` into `ghosts[r][i]` for every requesting
    /// locality `r`. Remote elements are serialized by their owner (one
    /// message per owner–requester pair) and deserialized into the existing
    /// ghost, so fields a serializer does not carry keep their old values.
    /// Elements the requester owns are cloned directly.
    pub fn exchange(&self, group: &LocalityGroup, requests: &[Vec<usize>], ghosts: &mut [Vec<T>]) -> Result<ExchangeReport, DistributionError> {
        let nl = self.partition.n_localities();
        if requests.len() != nl || ghosts.len() != nl || group.n_localities() != nl {
            return Err(DistributionError::Dimension {
                expected: nl,
                found: requests.len().min(ghosts.len()).min(group.n_localities()),
            });
        }
        let len = self.len();
        if let Some(&index) = requests.iter().flatten().find(|&&g| g >= len) {
            return Err(DistributionError::UnknownIndex { index, len });
        }
        let mut report = ExchangeReport::default();
        let ser = &self.serializer;
        // request positions of each (requester, owner) pair, in request order
        let positions = |r: usize, o: usize| requests[r].iter().enumerate().filter(move |(_, &g)| self.partition.owner(g) == o).map(|(i, _)| i);

        for (r, req) in requests.iter().enumerate() {
            for o in (0..nl).filter(|&o| o != r) {
                let idx: Vec<usize> = positions(r, o).collect();
                if idx.is_empty() {
                    continue;
                }
                let mut buf = Vec::with_capacity(HEADER_LEN + idx.len() * 32);
                buf.extend_from_slice(&[WIRE_VERSION, ser.id(), 0, 0]);
                buf.extend_from_slice(&(idx.len() as u32).to_le_bytes());
                for &i in &idx {
                    let x = &self.segments[o][self.partition.local_index(req[i])];
                    let before = buf.len();
                    ser.serialize(x, &mut buf);
                    debug_assert_eq!(buf.len() - before, ser.size(x));
                    report.payload_bytes += buf.len() - before;
                    report.serialized += 1;
                }
                group.send(o, r, buf);
                report.messages += 1;
            }
        }

        for (r, (req, ghost)) in requests.iter().zip(ghosts.iter_mut()).enumerate() {
            ghost.resize(req.len(), T::default());
            for i in positions(r, r) {
                ghost[i] = self.segments[r][self.partition.local_index(req[i])].clone();
                report.local_copies += 1;
            }
            while let Some((from, bytes)) = group.receive(r) {
                let count = read_header(&bytes, ser.id())?;
                let idx: Vec<usize> = positions(r, from).collect();
                if idx.len() != count {
                    return Err(DistributionError::Wire(format!("expected {} elements from locality {from}, header says {count}", idx.len())));
                }
                let mut at = HEADER_LEN;
                for i in idx {
                    at += ser.deserialize(&bytes[at..], &mut ghost[i])?;
                }
                if at != bytes.len() {
                    return Err(DistributionError::Wire(format!("{} trailing bytes", bytes.len() - at)));
                }
            }
        }
        Ok(report)
    }
}

fn read_header(bytes: &[u8], id: u8) -> Result<usize, DistributionError> {
    if bytes.len() < HEADER_LEN {
        return Err(DistributionError::Wire("truncated header".into()));
    }
    if bytes[0] != WIRE_VERSION {
        return Err(DistributionError::Wire(format!("wire version {} (expected {WIRE_VERSION})", bytes[0])));
    }
    if bytes[1] != id {
        return Err(DistributionError::Wire(format!("serializer id {} (expected {id})", bytes[1])));
    }
    Ok(u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize)
}

/// Per-node state of the boundary solve.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NodeState {
    pub index: u64,
    pub patch: NodePatch,
    /// Current Krylov components: surface potential and normal derivative.
    pub f: f64,
    pub h: f64,
}

struct Reader<'a> {
    buf: &'a [u8],
    at: usize,
}

impl Reader<'_> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N], DistributionError> {
        let b = self
            .buf
            .get(self.at..self.at + N)
            .ok_or_else(|| DistributionError::Wire("truncated element".into()))?;
        self.at += N;
        Ok(b.try_into().unwrap())
    }
    fn f64(&mut self) -> Result<f64, DistributionError> {
        Ok(f64::from_le_bytes(self.take()?))
    }
    fn vec3(&mut self) -> Result<Vec3, DistributionError> {
        Ok(Vec3::new(self.f64()?, self.f64()?, self.f64()?))
    }
}

fn put_vec3(v: &Vec3, out: &mut Vec<u8>) {
    for c in v.iter() {
        out.extend_from_slice(&c.to_le_bytes());
    }
}

/// Whole node: geometry for near-field integration plus `f`, `h`.
///
/// Layout: `index: u64`, position, normal (3 × f64 each), area `f64`,
/// `n_sub: u32`, then per sub-element three corners, centroid, normal
/// (3 × f64 each) and weight `f64`; finally `f`, `h` as `f64`.
/// `84 + 128·n_sub` bytes.
#[derive(Debug, Clone, Copy, Default)]
pub struct FullPatchSerializer;

/// Only the index and the Krylov components: `index: u64, f: f64, h: f64`,
/// 24 bytes. Deserializing leaves the patch geometry untouched.
#[derive(Debug, Clone, Copy, Default)]
pub struct KrylovSerializer;

impl Serializer<NodeState> for FullPatchSerializer {
    fn id(&self) -> u8 {
        1
    }

    fn size(&self, x: &NodeState) -> usize {
        84 + 128 * x.patch.sub_elements.len()
    }

    fn serialize(&self, x: &NodeState, out: &mut Vec<u8>) {
        out.extend_from_slice(&x.index.to_le_bytes());
        put_vec3(&x.patch.position, out);
        put_vec3(&x.patch.normal, out);
        out.extend_from_slice(&x.patch.area.to_le_bytes());
        out.extend_from_slice(&(x.patch.sub_elements.len() as u32).to_le_bytes());
        for s in &x.patch.sub_elements {
            for c in &s.corners {
                put_vec3(c, out);
            }
            put_vec3(&s.centroid, out);
            put_vec3(&s.normal, out);
            out.extend_from_slice(&s.weight.to_le_bytes());
        }
        out.extend_from_slice(&x.f.to_le_bytes());
        out.extend_from_slice(&x.h.to_le_bytes());
    }

    fn deserialize(&self, buf: &[u8], into: &mut NodeState) -> Result<usize, DistributionError> {
        let mut r = Reader { buf, at: 0 };
        into.index = u64::from_le_bytes(r.take()?);
        into.patch.position = r.vec3()?;
        into.patch.normal = r.vec3()?;
        into.patch.area = r.f64()?;
        let n = u32::from_le_bytes(r.take()?) as usize;
        if n > buf.len() / 128 {
            return Err(DistributionError::Wire(format!("{n} sub-elements do not fit the message")));
        }
        into.patch.sub_elements.clear();
        for _ in 0..n {
            let corners = [r.vec3()?, r.vec3()?, r.vec3()?];
            into.patch.sub_elements.push(SubElement {
                corners,
                centroid: r.vec3()?,
                normal: r.vec3()?,
                weight: r.f64()?,
            });
        }
        into.f = r.f64()?;
        into.h = r.f64()?;
        Ok(r.at)
    }
}

impl Serializer<NodeState> for KrylovSerializer {
    fn id(&self) -> u8 {
        2
    }

    fn size(&self, _: &NodeState) -> usize {
        24
    }

    fn serialize(&self, x: &NodeState, out: &mut Vec<u8>) {
        out.extend_from_slice(&x.index.to_le_bytes());
        out.extend_from_slice(&x.f.to_le_bytes());
        out.extend_from_slice(&x.h.to_le_bytes());
    }

    fn deserialize(&self, buf: &[u8], into: &mut NodeState) -> Result<usize, DistributionError> {
        let mut r = Reader { buf, at: 0 };
        into.index = u64::from_le_bytes(r.take()?);
        into.f = r.f64()?;
        into.h = r.f64()?;
        Ok(r.at)
    }
}

/// Numeric vector with `width` values per node, stored in the segments of a
/// [`Partition`]. Inner products reduce per-locality partial sums with
/// [`LocalityGroup::all_reduce_sum`].
#[derive(Debug, Clone, PartialEq)]
pub struct DistVector {
    width: usize,
    segments: Vec<Vec<f64>>,
}

impl DistVector {
    pub fn zeros(partition: &Partition, width: usize) -> Self {
        Self {
            width,
            segments: (0..partition.n_localities()).map(|k| vec![0.0; partition.span(k).len() * width]).collect(),
        }
    }

    /// `fields[c][g]` is component `c` of node `g`.
    pub fn from_fields(partition: &Partition, fields: &[&[f64]]) -> Self {
        let width = fields.len();
        let segments = (0..partition.n_localities())
            .map(|k| partition.globals(k).iter().flat_map(|&g| fields.iter().map(move |f| f[g])).collect())
            .collect();
        Self { width, segments }
    }

    /// Inverse of [`from_fields`](Self::from_fields).
    pub fn to_fields(&self, partition: &Partition) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; partition.len()]; self.width];
        for (k, seg) in self.segments.iter().enumerate() {
            for (i, &g) in partition.globals(k).iter().enumerate() {
                for (c, f) in out.iter_mut().enumerate() {
                    f[g] = seg[i * self.width + c];
                }
            }
        }
        out
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn segments(&self) -> &[Vec<f64>] {
        &self.segments
    }

    pub fn segments_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.segments
    }

    pub fn dot(&self, other: &Self, group: &LocalityGroup) -> Result<f64, DistributionError> {
        let partial: Vec<f64> = self
            .segments
            .iter()
            .zip(&other.segments)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x * y).sum())
            .collect();
        group.all_reduce_sum(&partial)
    }

    pub fn norm(&self, group: &LocalityGroup) -> Result<f64, DistributionError> {
        Ok(self.dot(self, group)?.sqrt())
    }

    /// `self += a·x`
    pub fn axpy(&mut self, a: f64, x: &Self) {
        for (s, xs) in self.segments.iter_mut().zip(&x.segments) {
            for (v, w) in s.iter_mut().zip(xs) {
                *v += a * w;
            }
        }
    }

    pub fn scale(&mut self, a: f64) {
        self.segments.iter_mut().flatten().for_each(|v| *v *= a);
    }

    pub fn is_zero(&self) -> bool {
        self.segments.iter().flatten().all(|&v| v == 0.0)
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::engine::{Octree, RootCube};
    use crate::surface::{build_node_patches, generate_icosphere};

    fn nodes() -> Vec<NodeState> {
        build_node_patches(&generate_icosphere(10.0, Vec3::zeros(), 2))
            .into_iter()
            .enumerate()
            .map(|(i, patch)| NodeState {
                index: i as u64,
                f: (i as f64).sin(),
                h: -(i as f64) / 7.0,
                patch,
            })
            .collect()
    }

    fn round_trip(ser: &dyn Serializer<NodeState>, x: &NodeState, into: &mut NodeState) {
        let mut buf = vec![];
        ser.serialize(x, &mut buf);
        assert_eq!(buf.len(), ser.size(x));
        assert_eq!(ser.deserialize(&buf, into).unwrap(), buf.len());
    }

    #[test]
    fn serializers_round_trip() {
        for x in nodes() {
            let mut full = NodeState::default();
            round_trip(&FullPatchSerializer, &x, &mut full);
            assert_eq!(full, x);
            let mut k = NodeState {
                patch: x.patch.clone(),
                ..Default::default()
            };
            round_trip(&KrylovSerializer, &x, &mut k);
            assert_eq!(k, x);
        }
    }

    #[test]
    fn krylov_payload_is_much_smaller() {
        for x in nodes() {
            assert!(x.patch.sub_elements.len() >= 10);
            assert!(FullPatchSerializer.size(&x) > 5 * KrylovSerializer.size(&x));
        }
    }

    #[test]
    fn truncated_and_foreign_messages_are_rejected() {
        let x = &nodes()[0];
        let mut buf = vec![];
        FullPatchSerializer.serialize(x, &mut buf);
        let mut into = NodeState::default();
        assert!(FullPatchSerializer.deserialize(&buf[..buf.len() - 1], &mut into).is_err());
        assert!(read_header(&[WIRE_VERSION, 2, 0, 0, 1, 0, 0, 0], 1).is_err());
        assert!(read_header(&[9, 1, 0, 0, 1, 0, 0, 0], 1).is_err());
        assert_eq!(read_header(&[WIRE_VERSION, 1, 0, 0, 3, 0, 0, 0], 1).unwrap(), 3);
    }

    fn random_points(n: usize, seed: u64) -> Vec<Vec3> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| Vec3::new(rng.gen(), rng.gen(), rng.gen()) * 10.0).collect()
    }

    fn octree(points: &[Vec3], threshold: usize) -> Octree {
        Octree::build(&RootCube::enclosing(points), points, threshold).unwrap()
    }

    #[test]
    fn one_locality_owns_everything() {
        let t = octree(&random_points(100, 1), 10);
        let p = partition_by_tree(&t, 1).unwrap();
        assert_eq!(p.globals(0).len(), 100);
        assert!((0..100).all(|g| p.owner(g) == 0));
    }

    #[test]
    fn two_localities_are_balanced_within_a_leaf() {
        let threshold = 10;
        let t = octree(&random_points(100, 2), threshold);
        let p = partition_by_tree(&t, 2).unwrap();
        for k in 0..2 {
            assert!(p.span(k).len().abs_diff(50) <= threshold, "{:?}", p.span(k));
        }
    }

    proptest! {
        #[test]
        fn partition_is_a_disjoint_cover(n in 1usize..400, nl in 1usize..9, threshold in 1usize..50, seed in 0u64..1000) {
            let t = octree(&random_points(n, seed), threshold);
            let p = partition_by_tree(&t, nl).unwrap();
            let mut seen = vec![0; n];
            for k in 0..nl {
                for (i, &g) in p.globals(k).iter().enumerate() {
                    seen[g] += 1;
                    prop_assert_eq!(p.owner(g), k);
                    prop_assert_eq!(p.local_index(g), i);
                }
            }
            prop_assert!(seen.iter().all(|&c| c == 1));
        }
    }

    fn array(nl: usize) -> (DistributedArray<NodeState>, Vec<NodeState>) {
        let all = nodes();
        let p = Arc::new(Partition::contiguous(all.len(), nl).unwrap());
        let a = DistributedArray::new(p, Arc::new(FullPatchSerializer), |g| all[g].clone());
        (a, all)
    }

    #[test]
    fn exchange_delivers_owner_values() {
        let (a, all) = array(3);
        let g = LocalityGroup::new(3).unwrap();
        let requests = vec![vec![100, 5, 161], vec![0, 1, 150], vec![]];
        let mut ghosts = vec![vec![]; 3];
        let rep = a.exchange(&g, &requests, &mut ghosts).unwrap();
        for (req, gh) in requests.iter().zip(&ghosts) {
            for (&i, x) in req.iter().zip(gh) {
                assert_eq!(x, &all[i]);
            }
        }
        // spans 0..54, 54..108, 108..162: only 5 is requested by its owner
        assert_eq!(rep.local_copies, 1);
        assert_eq!(rep.serialized, 5);
        let want: usize = [100, 161, 0, 1, 150].iter().map(|&i| FullPatchSerializer.size(&all[i])).sum();
        assert_eq!(rep.payload_bytes, want);
    }

    #[test]
    fn self_requests_are_not_serialized() {
        let (a, _) = array(2);
        let g = LocalityGroup::new(2).unwrap();
        let requests = vec![a.partition().globals(0).to_vec(), vec![]];
        let mut ghosts = vec![vec![]; 2];
        let rep = a.exchange(&g, &requests, &mut ghosts).unwrap();
        assert_eq!(rep.serialized, 0);
        assert_eq!(g.traffic().messages, 0);
    }

    #[test]
    fn remote_bytes_equal_the_sum_of_sizes() {
        let (a, all) = array(2);
        let g = LocalityGroup::new(2).unwrap();
        let requests = vec![a.partition().globals(1).to_vec(), vec![]];
        let mut ghosts = vec![vec![]; 2];
        let rep = a.exchange(&g, &requests, &mut ghosts).unwrap();
        let want: usize = requests[0].iter().map(|&i| FullPatchSerializer.size(&all[i])).sum();
        assert_eq!(rep.payload_bytes, want);
        assert_eq!(g.traffic().bytes as usize, want + HEADER_LEN);
    }

    #[test]
    fn rebinding_shrinks_messages_and_keeps_delivered_data() {
        let (mut a, all) = array(2);
        let g = LocalityGroup::new(2).unwrap();
        let requests = vec![vec![120, 130], vec![3]];
        let mut ghosts = vec![vec![]; 2];
        let full = a.exchange(&g, &requests, &mut ghosts).unwrap();
        let delivered = ghosts.clone();
        a.set_manager(Arc::new(KrylovSerializer));
        for seg in 0..2 {
            for x in a.local_mut(seg) {
                x.f += 1.0;
            }
        }
        let kry = a.exchange(&g, &requests, &mut ghosts).unwrap();
        assert!(kry.payload_bytes < full.payload_bytes);
        for (r, req) in requests.iter().enumerate() {
            for (i, &gi) in req.iter().enumerate() {
                assert_eq!(ghosts[r][i].patch, delivered[r][i].patch);
                assert_eq!(ghosts[r][i].f, all[gi].f + 1.0);
                assert_eq!(ghosts[r][i].h, all[gi].h);
            }
        }
    }

    #[test]
    fn unknown_index_is_an_error() {
        let (a, _) = array(2);
        let g = LocalityGroup::new(2).unwrap();
        let err = a.exchange(&g, &[vec![10_000], vec![]], &mut [vec![], vec![]]).unwrap_err();
        assert!(matches!(err, DistributionError::UnknownIndex { index: 10_000, .. }));
    }

    #[test]
    fn reductions() {
        let g1 = LocalityGroup::new(1).unwrap();
        assert_eq!(g1.all_reduce_sum(&[0.3]).unwrap(), 0.3);
        let g4 = LocalityGroup::new(4).unwrap();
        assert_eq!(g4.all_reduce_sum(&[1.0, 2.0, 3.0, 4.0]).unwrap(), 10.0);
        let v = [0.1, 1e16, -1e16, 0.7];
        let first = g4.all_reduce_sum(&v).unwrap();
        for _ in 0..10 {
            assert_eq!(g4.all_reduce_sum(&v).unwrap().to_bits(), first.to_bits());
        }
        assert!(g4.all_reduce_sum(&[1.0]).is_err());
        assert_eq!(g4.traffic().reductions, 12);
        assert!(LocalityGroup::new(0).is_err());
    }

    #[test]
    fn dist_vector_fields_round_trip() {
        let t = octree(&random_points(50, 3), 4);
        let p = partition_by_tree(&t, 3).unwrap();
        let f: Vec<f64> = (0..50).map(|i| i as f64).collect();
        let h: Vec<f64> = (0..50).map(|i| -(i as f64)).collect();
        let v = DistVector::from_fields(&p, &[&f, &h]);
        assert_eq!(v.to_fields(&p), vec![f.clone(), h.clone()]);
        let g = LocalityGroup::new(3).unwrap();
        let want: f64 = f.iter().map(|x| 2.0 * x * x).sum();
        assert!((v.dot(&v, &g).unwrap() - want).abs() <= 1e-12 * want);
    }
}
