//! Closed triangle surfaces and node patches.
//!
//! Every vertex `v` of a validated mesh owns a patch made of two flat
//! sub-triangles per incident triangle `(v, a, b)`:
//! `(v, (v+a)/2, c)` and `(v, c, (v+b)/2)` with `c` the centroid. Each has a
//! sixth of the triangle's area, so the patches partition the surface.

use std::collections::{HashMap, VecDeque};

use thiserror::Error;

use crate::io::RawMesh;
use crate::Vec3;

#[derive(Debug, Error, PartialEq)]
pub enum TopologyError {
    #[error("mesh has no triangles")]
    Empty,
    #[error("{count} edge(s) not shared by exactly two triangles, e.g. {sample:?} (vertex a, vertex b, uses)")]
    BadEdges {
        count: usize,
        sample: Vec<(usize, usize, usize)>,
    },
    #[error("mesh component containing triangle {0} cannot be oriented consistently")]
    NonOrientable(usize),
    #[error("vertex {0} belongs to no triangle")]
    IsolatedVertex(usize),
    #[error("triangle {0} has zero area")]
    Degenerate(usize),
    #[error("enclosed volume {0} is not positive")]
    NonPositiveVolume(f64),
}

/// Validated, outward-oriented closed surface.
#[derive(Debug, Clone)]
pub struct SurfaceMesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[usize; 3]>,
    /// Outward unit normal per triangle.
    pub normals: Vec<Vec3>,
    /// Area per triangle, Å².
    pub areas: Vec<f64>,
    pub total_area: f64,
    /// Enclosed volume, Å³.
    pub volume: f64,
}

/// One flat piece of a node patch.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SubElement {
    /// Corners; `corners[0]` is the patch's node.
    pub corners: [Vec3; 3],
    pub centroid: Vec3,
    /// Normal of the parent triangle.
    pub normal: Vec3,
    /// Area, Å².
    pub weight: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct NodePatch {
    pub position: Vec3,
    /// Area-weighted mean of the sub-element normals, normalized.
    pub normal: Vec3,
    /// ΔS, Å².
    pub area: f64,
    pub sub_elements: Vec<SubElement>,
}

fn triangle_geometry(v: &[Vec3], t: [usize; 3]) -> (Vec3, f64) {
    let cross = (v[t[1]] - v[t[0]]).cross(&(v[t[2]] - v[t[0]]));
    let norm = cross.norm();
    (cross / norm, 0.5 * norm)
}

fn signed_volume(v: &[Vec3], tris: &[[usize; 3]]) -> f64 {
    tris.iter()
        .map(|t| v[t[0]].dot(&v[t[1]].cross(&v[t[2]])) / 6.0)
        .sum()
}

/// Check that `raw` is a closed 2-manifold and orient every connected
/// component so its enclosed volume is positive (normals point outward).
/// Nested surfaces such as internal cavities are therefore not supported.
pub fn validate_and_orient(raw: &RawMesh) -> Result<SurfaceMesh, TopologyError> {
    if raw.triangles.is_empty() {
        return Err(TopologyError::Empty);
    }
    let mut used = vec![false; raw.vertices.len()];
    for t in &raw.triangles {
        for &i in t {
            used[i] = true;
        }
    }
    if let Some(v) = used.iter().position(|u| !u) {
        return Err(TopologyError::IsolatedVertex(v));
    }

    // undirected edge -> triangles using it
    let mut edges: HashMap<(usize, usize), Vec<usize>> = HashMap::with_capacity(raw.triangles.len() * 2);
    for (ti, t) in raw.triangles.iter().enumerate() {
        for k in 0..3 {
            let (a, b) = (t[k], t[(k + 1) % 3]);
            edges.entry((a.min(b), a.max(b))).or_default().push(ti);
        }
    }
    let mut bad: Vec<(usize, usize, usize)> = edges
        .iter()
        .filter(|(_, ts)| ts.len() != 2)
        .map(|(&(a, b), ts)| (a, b, ts.len()))
        .collect();
    if !bad.is_empty() {
        bad.sort_unstable();
        let count = bad.len();
        bad.truncate(8);
        return Err(TopologyError::BadEdges { count, sample: bad });
    }

    let mut tris = raw.triangles.clone();
    let has_directed = |t: &[usize; 3], a: usize, b: usize| (0..3).any(|k| t[k] == a && t[(k + 1) % 3] == b);
    let mut component = vec![usize::MAX; tris.len()];
    let mut n_components = 0;
    for seed in 0..tris.len() {
        if component[seed] != usize::MAX {
            continue;
        }
        let id = n_components;
        n_components += 1;
        component[seed] = id;
        let mut queue = VecDeque::from([seed]);
        while let Some(ti) = queue.pop_front() {
            let t = tris[ti];
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                let pair = &edges[&(a.min(b), a.max(b))];
                let nj = if pair[0] == ti { pair[1] } else { pair[0] };
                // a consistent neighbour traverses the shared edge as b -> a
                let agrees = !has_directed(&tris[nj], a, b);
                if component[nj] == usize::MAX {
                    if !agrees {
                        tris[nj].swap(1, 2);
                    }
                    component[nj] = id;
                    queue.push_back(nj);
                } else if !agrees {
                    return Err(TopologyError::NonOrientable(seed));
                }
            }
        }
    }
    for id in 0..n_components {
        let members: Vec<usize> = (0..tris.len()).filter(|&i| component[i] == id).collect();
        let part: Vec<[usize; 3]> = members.iter().map(|&i| tris[i]).collect();
        if signed_volume(&raw.vertices, &part) < 0.0 {
            for &i in &members {
                tris[i].swap(1, 2);
            }
        }
    }
    SurfaceMesh::from_oriented(raw.vertices.clone(), tris)
}

impl SurfaceMesh {
    /// Build from vertices and triangles already known to be closed and
    /// outward-oriented.
    fn from_oriented(vertices: Vec<Vec3>, triangles: Vec<[usize; 3]>) -> Result<Self, TopologyError> {
        let mut normals = Vec::with_capacity(triangles.len());
        let mut areas = Vec::with_capacity(triangles.len());
        let mut volume = 0.0;
        for (i, &t) in triangles.iter().enumerate() {
            let (n, a) = triangle_geometry(&vertices, t);
            if a == 0.0 || !a.is_finite() {
                return Err(TopologyError::Degenerate(i));
            }
            let centroid = (vertices[t[0]] + vertices[t[1]] + vertices[t[2]]) / 3.0;
            volume += centroid.dot(&n) * a / 3.0;
            normals.push(n);
            areas.push(a);
        }
        if !(volume > 0.0) {
            return Err(TopologyError::NonPositiveVolume(volume));
        }
        Ok(Self {
            total_area: areas.iter().sum(),
            vertices,
            triangles,
            normals,
            areas,
            volume,
        })
    }

    pub fn node_count(&self) -> usize {
        self.vertices.len()
    }

    /// The mesh as plain vertex/triangle lists.
    pub fn to_raw(&self) -> RawMesh {
        RawMesh {
            vertices: self.vertices.clone(),
            triangles: self.triangles.clone(),
            normals: None,
        }
    }
}

/// One patch per vertex, in vertex order.
pub fn build_node_patches(mesh: &SurfaceMesh) -> Vec<NodePatch> {
    let mut patches: Vec<NodePatch> = mesh
        .vertices
        .iter()
        .map(|&position| NodePatch {
            position,
            normal: Vec3::zeros(),
            area: 0.0,
            sub_elements: Vec::with_capacity(12),
        })
        .collect();
    for (ti, t) in mesh.triangles.iter().enumerate() {
        let c = (mesh.vertices[t[0]] + mesh.vertices[t[1]] + mesh.vertices[t[2]]) / 3.0;
        let n = mesh.normals[ti];
        let w = mesh.areas[ti] / 6.0;
        for k in 0..3 {
            let v = mesh.vertices[t[k]];
            let next = 0.5 * (v + mesh.vertices[t[(k + 1) % 3]]);
            let prev = 0.5 * (v + mesh.vertices[t[(k + 2) % 3]]);
            let patch = &mut patches[t[k]];
            for corners in [[v, next, c], [v, c, prev]] {
                patch.sub_elements.push(SubElement {
                    corners,
                    centroid: (corners[0] + corners[1] + corners[2]) / 3.0,
                    normal: n,
                    weight: w,
                });
            }
        }
    }
    for patch in &mut patches {
        let mut weighted = Vec3::zeros();
        for s in &patch.sub_elements {
            weighted += s.weight * s.normal;
            patch.area += s.weight;
        }
        patch.normal = weighted.normalize();
    }
    patches
}

/// Icosahedron refined `subdivisions` times by edge bisection, with every
/// vertex projected onto the sphere.
pub fn generate_icosphere(radius: f64, center: Vec3, subdivisions: u32) -> SurfaceMesh {
    assert!(radius > 0.0, "icosphere radius must be positive");
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<Vec3> = [
        (-1.0, phi, 0.0),
        (1.0, phi, 0.0),
        (-1.0, -phi, 0.0),
        (1.0, -phi, 0.0),
        (0.0, -1.0, phi),
        (0.0, 1.0, phi),
        (0.0, -1.0, -phi),
        (0.0, 1.0, -phi),
        (phi, 0.0, -1.0),
        (phi, 0.0, 1.0),
        (-phi, 0.0, -1.0),
        (-phi, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vec3::new(x, y, z).normalize())
    .collect();
    let mut tris: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut midpoint: HashMap<(usize, usize), usize> = HashMap::with_capacity(tris.len() * 3 / 2);
        let mut mid = |a: usize, b: usize, verts: &mut Vec<Vec3>| {
            *midpoint.entry((a.min(b), a.max(b))).or_insert_with(|| {
                verts.push((0.5 * (verts[a] + verts[b])).normalize());
                verts.len() - 1
            })
        };
        let mut next = Vec::with_capacity(tris.len() * 4);
        for &[a, b, c] in &tris {
            let ab = mid(a, b, &mut verts);
            let bc = mid(b, c, &mut verts);
            let ca = mid(c, a, &mut verts);
            next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        tris = next;
    }
    let vertices = verts.into_iter().map(|u| center + radius * u).collect();
    SurfaceMesh::from_oriented(vertices, tris).expect("icosphere is a valid closed surface")
}
