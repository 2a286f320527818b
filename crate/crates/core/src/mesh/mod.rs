//! Triangle meshes: storage, validation and the discrete operators built on them.

mod io;
mod operators;

pub use io::{load_mesh, read_mesh, write_obj, write_off, write_ply_colored, MeshFormat};
pub use operators::{cotangent_laplacian, lumped_areas, MassDiagonal};

use std::collections::HashMap;

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

use crate::hash::ContentHasher;

/// Triangles whose area falls below this fraction of the mean triangle area are rejected.
pub const DEGENERATE_AREA_FRACTION: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("mesh has no triangles")]
    Empty,
    #[error("triangle {triangle} references vertex {index} but the mesh has {count} vertices")]
    IndexOutOfRange {
        triangle: usize,
        index: usize,
        count: usize,
    },
    #[error("degenerate triangle {triangle}: {reason}")]
    DegenerateTriangle { triangle: usize, reason: String },
    #[error("non-manifold edge ({0}, {1}) shared by more than two triangles")]
    NonManifoldEdge(usize, usize),
    #[error("mesh is disconnected: {components} components")]
    Disconnected { components: usize },
    #[error("label count {labels} does not match vertex count {vertices}")]
    LabelCount { labels: usize, vertices: usize },
}

/// A validated, connected, edge-manifold triangle mesh.
///
/// Construction always goes through [`TriMesh::new`], so every instance
/// satisfies the index, manifoldness, connectivity and non-degeneracy checks.
#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh {
    vertices: Vec<Vector3<f64>>,
    triangles: Vec<[usize; 3]>,
    labels: Option<Vec<usize>>,
}

impl TriMesh {
    pub fn new(vertices: Vec<Vector3<f64>>, triangles: Vec<[usize; 3]>) -> Result<Self, MeshError> {
        validate(&vertices, &triangles)?;
        Ok(Self {
            vertices,
            triangles,
            labels: None,
        })
    }

    /// Attaches per-vertex correspondence labels (indices into a template).
    pub fn with_labels(mut self, labels: Vec<usize>) -> Result<Self, MeshError> {
        if labels.len() != self.vertices.len() {
            return Err(MeshError::LabelCount {
                labels: labels.len(),
                vertices: self.vertices.len(),
            });
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn vertices(&self) -> &[Vector3<f64>] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        triangle_area(&self.vertices[a], &self.vertices[b], &self.vertices[c])
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.triangle_area(t)).sum()
    }

    /// Undirected edges, each reported once as `(min, max)`, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut edges: Vec<(usize, usize)> = self
            .triangles
            .iter()
            .flat_map(|&[a, b, c]| [(a, b), (b, c), (c, a)])
            .map(|(i, j)| (i.min(j), i.max(j)))
            .collect();
        edges.sort_unstable();
        edges.dedup();
        edges
    }

    /// Vertex adjacency lists, sorted ascending.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.vertices.len()];
        for (i, j) in self.edges() {
            adj[i].push(j);
            adj[j].push(i);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        adj
    }

    /// The coordinate functions as an `N x 3` row-per-vertex array.
    pub fn coordinates(&self) -> Vec<[f64; 3]> {
        self.vertices.iter().map(|v| [v.x, v.y, v.z]).collect()
    }

    /// Applies `x -> R x + t`. The result is revalidated, since scaling can in
    /// principle push a triangle below the degeneracy threshold.
    pub fn transformed(&self, linear: &Matrix3<f64>, translation: &Vector3<f64>) -> Result<Self, MeshError> {
        let vertices = self.vertices.iter().map(|v| linear * v + translation).collect();
        let mut mesh = TriMesh::new(vertices, self.triangles.clone())?;
        mesh.labels = self.labels.clone();
        Ok(mesh)
    }

    pub fn scaled(&self, factor: f64) -> Result<Self, MeshError> {
        self.transformed(&(Matrix3::identity() * factor), &Vector3::zeros())
    }

    /// Relabels vertices so that old vertex `perm[i]` becomes new vertex `i`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self, MeshError> {
        let n = self.vertices.len();
        assert_eq!(perm.len(), n, "permutation length must equal vertex count");
        let mut inverse = vec![usize::MAX; n];
        for (new, &old) in perm.iter().enumerate() {
            inverse[old] = new;
        }
        let vertices = perm.iter().map(|&old| self.vertices[old]).collect();
        let triangles = self
            .triangles
            .iter()
            .map(|t| [inverse[t[0]], inverse[t[1]], inverse[t[2]]])
            .collect();
        let mut mesh = TriMesh::new(vertices, triangles)?;
        mesh.labels = self
            .labels
            .as_ref()
            .map(|l| perm.iter().map(|&old| l[old]).collect());
        Ok(mesh)
    }

    /// SHA-256 over vertex positions and triangle indices, hex encoded.
    pub fn content_hash(&self) -> String {
        let mut h = ContentHasher::new("trimesh");
        h.update_u64(self.vertices.len() as u64);
        for v in &self.vertices {
            h.update_f64s(v.as_slice());
        }
        h.update_u64(self.triangles.len() as u64);
        for t in &self.triangles {
            for &i in t {
                h.update_u64(i as u64);
            }
        }
        h.finish()
    }
}

pub fn triangle_area(a: &Vector3<f64>, b: &Vector3<f64>, c: &Vector3<f64>) -> f64 {
    0.5 * (b - a).cross(&(c - a)).norm()
}

fn validate(vertices: &[Vector3<f64>], triangles: &[[usize; 3]]) -> Result<(), MeshError> {
    let n = vertices.len();
    if triangles.is_empty() {
        return Err(MeshError::Empty);
    }
    for (t, tri) in triangles.iter().enumerate() {
        for &i in tri {
            if i >= n {
                return Err(MeshError::IndexOutOfRange {
                    triangle: t,
                    index: i,
                    count: n,
                });
            }
        }
        if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
            return Err(MeshError::DegenerateTriangle {
                triangle: t,
                reason: format!("repeated vertex index in {tri:?}"),
            });
        }
        if vertices[tri[0]].iter().chain(&vertices[tri[1]]).chain(&vertices[tri[2]]).any(|x| !x.is_finite()) {
            return Err(MeshError::DegenerateTriangle {
                triangle: t,
                reason: "non-finite vertex coordinate".into(),
            });
        }
    }

    let areas: Vec<f64> = triangles
        .iter()
        .map(|t| triangle_area(&vertices[t[0]], &vertices[t[1]], &vertices[t[2]]))
        .collect();
    let mean = areas.iter().sum::<f64>() / areas.len() as f64;
    for (t, &area) in areas.iter().enumerate() {
        if !(area >= DEGENERATE_AREA_FRACTION * mean) || area == 0.0 {
            return Err(MeshError::DegenerateTriangle {
                triangle: t,
                reason: format!("area {area:e} below threshold"),
            });
        }
    }

    let mut edge_use: HashMap<(usize, usize), u32> = HashMap::new();
    for &[a, b, c] in triangles {
        for (i, j) in [(a, b), (b, c), (c, a)] {
            *edge_use.entry((i.min(j), i.max(j))).or_insert(0) += 1;
        }
    }
    let mut bad: Vec<_> = edge_use.iter().filter(|(_, &c)| c > 2).map(|(&e, _)| e).collect();
    if !bad.is_empty() {
        bad.sort_unstable();
        return Err(MeshError::NonManifoldEdge(bad[0].0, bad[0].1));
    }

    let components = count_components(n, triangles);
    if components != 1 {
        return Err(MeshError::Disconnected { components });
    }
    Ok(())
}

/// Connected components of the vertex graph; unreferenced vertices count as their own component.
fn count_components(n: usize, triangles: &[[usize; 3]]) -> usize {
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for &[a, b, c] in triangles {
        for (i, j) in [(a, b), (b, c)] {
            let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
            if ri != rj {
                parent[ri.max(rj)] = ri.min(rj);
            }
        }
    }
    (0..n).filter(|&i| find(&mut parent, i) == i).count()
}
