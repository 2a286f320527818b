//! Procedural meshes: icospheres, a bendable bumpy bar and a flat strip.
//!
//! The bar is the synthetic deforming shape used for training and matching
//! experiments. Its rest surface is parametrized by `(u, theta)`; poses bend
//! the centerline at a joint without stretching it, and tessellations differ
//! only in how `(u, theta)` is sampled, so poses of one tessellation share
//! vertex indices exactly.

use std::collections::HashMap;
use std::f64::consts::PI;

use nalgebra::Vector3;

use crate::mesh::TriMesh;

/// Icosahedron subdivided `subdivisions` times and projected onto a sphere;
/// `10 * 4^s + 2` vertices.
pub fn icosphere(subdivisions: u32, radius: f64) -> TriMesh {
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let mut vertices: Vec<Vector3<f64>> = [
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
    .map(|&(x, y, z)| Vector3::new(x, y, z).normalize())
    .collect();
    let mut faces: Vec<[usize; 3]> = vec![
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
        let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
        let mut mid = |i: usize, j: usize, vertices: &mut Vec<Vector3<f64>>| {
            *midpoint.entry((i.min(j), i.max(j))).or_insert_with(|| {
                vertices.push(((vertices[i] + vertices[j]) * 0.5).normalize());
                vertices.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for &[a, b, c] in &faces {
            let ab = mid(a, b, &mut vertices);
            let bc = mid(b, c, &mut vertices);
            let ca = mid(c, a, &mut vertices);
            next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    let vertices = vertices.into_iter().map(|v| v * radius).collect();
    TriMesh::new(vertices, faces).expect("icosphere is a valid closed mesh")
}

/// A flat strip of `segments` quads along x: bottom row `y = 0` holds vertices
/// `0..=segments`, top row `y = 1` the rest.
pub fn strip(segments: usize, spacing: f64) -> TriMesh {
    let n = segments + 1;
    let mut vertices = Vec::with_capacity(2 * n);
    for row in 0..2 {
        for i in 0..n {
            vertices.push(Vector3::new(i as f64 * spacing, row as f64, 0.0));
        }
    }
    let mut triangles = Vec::with_capacity(2 * segments);
    for i in 0..segments {
        let (a, b, c, d) = (i, i + 1, n + i + 1, n + i);
        triangles.push([a, b, c]);
        triangles.push([a, c, d]);
    }
    TriMesh::new(vertices, triangles).expect("strip is valid")
}

/// Geometry and sampling of the synthetic bar.
#[derive(Debug, Clone, PartialEq)]
pub struct BarParams {
    /// Samples along the bar (rings).
    pub rings: usize,
    /// Samples around each ring.
    pub sectors: usize,
    pub length: f64,
    pub radius: f64,
    /// Relative radius growth from one end to the other.
    pub taper: f64,
    /// Angular offset of the ring samples, in units of one sector.
    pub sector_offset: f64,
    /// Joint location and half width along the bar, as fractions of its length.
    pub joint: (f64, f64),
    /// Extra samples on top of the uniform grid; every uniform sample is kept.
    pub refine: Option<Refinement>,
    /// Flips every quad diagonal when odd.
    pub diagonal_phase: usize,
}

/// Inserts a sector inside every sector interval and a ring inside every
/// `ring_every`-th ring interval, each at `fraction` of the interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Refinement {
    pub ring_every: usize,
    pub fraction: f64,
}

impl Default for BarParams {
    /// 25 rings of 8 sectors: 200 vertices.
    fn default() -> Self {
        Self {
            rings: 25,
            sectors: 8,
            length: 4.0,
            radius: 0.35,
            taper: 0.6,
            sector_offset: 0.0,
            joint: (0.5, 0.12),
            refine: None,
            diagonal_phase: 0,
        }
    }
}

impl BarParams {
    /// The default tessellation refined to 31 rings of 16 sectors (496
    /// vertices, about 2.5x). It contains every default vertex, but its
    /// triangles are different.
    pub fn refined() -> Self {
        Self {
            refine: Some(Refinement {
                ring_every: 4,
                fraction: 0.45,
            }),
            ..Self::default()
        }
    }

    /// Ring positions `u` in `[0, 1]`, increasing.
    pub fn ring_positions(&self) -> Vec<f64> {
        let base: Vec<f64> = (0..self.rings).map(|i| i as f64 / (self.rings - 1) as f64).collect();
        match self.refine {
            None => base,
            Some(r) => {
                let mut out = Vec::new();
                for (i, w) in base.windows(2).enumerate() {
                    out.push(w[0]);
                    if r.ring_every > 0 && i % r.ring_every == 0 {
                        out.push(w[0] + r.fraction * (w[1] - w[0]));
                    }
                }
                out.push(1.0);
                out
            }
        }
    }

    /// Sample angles around a ring, increasing from the offset.
    pub fn sector_angles(&self) -> Vec<f64> {
        let step = 2.0 * PI / self.sectors as f64;
        let base = (0..self.sectors).map(|j| step * (j as f64 + self.sector_offset));
        match self.refine {
            None => base.collect(),
            Some(r) => base.flat_map(|t| [t, t + r.fraction * step]).collect(),
        }
    }

    pub fn num_vertices(&self) -> usize {
        self.ring_positions().len() * self.sector_angles().len()
    }
}

/// Off-axis bumps `(u, theta, amplitude, width_u, width_theta)` that break every
/// intrinsic symmetry of the tube.
const BUMPS: [(f64, f64, f64, f64, f64); 4] = [
    (0.18, 1.0, 0.45, 0.07, 0.7),
    (0.42, 3.6, 0.30, 0.06, 0.6),
    (0.71, 5.2, 0.40, 0.08, 0.8),
    (0.88, 2.3, 0.25, 0.05, 0.6),
];

/// Cross-section radius at `(u, theta)` on the rest shape.
pub fn bar_radius(p: &BarParams, u: f64, theta: f64) -> f64 {
    let profile = 1.0 + 0.22 * theta.cos() + 0.12 * (2.0 * theta).sin();
    let mut r = p.radius * (1.0 + p.taper * u) * profile;
    for &(bu, bt, amp, wu, wt) in &BUMPS {
        let dt = (theta - bt + PI).rem_euclid(2.0 * PI) - PI;
        r += p.radius * amp * (-(((u - bu) / wu).powi(2) + (dt / wt).powi(2))).exp();
    }
    r
}

/// Centerline frame after bending by `bend` radians at the joint.
/// Returns `(point, normal)`; the binormal is always +z.
fn centerline(p: &BarParams, bend: f64, u: f64) -> (Vector3<f64>, Vector3<f64>) {
    // Tangent angle rises smoothly from 0 to `bend` across the joint; the
    // centerline is integrated at unit speed so arc length is preserved.
    let (c, w) = p.joint;
    let angle = |s: f64| {
        let x = ((s - (c - w)) / (2.0 * w)).clamp(0.0, 1.0);
        bend * x * x * (3.0 - 2.0 * x)
    };
    const STEPS: usize = 2000;
    let mut pos = Vector3::zeros();
    let steps = ((u * STEPS as f64).ceil() as usize).max(1);
    let h = u / steps as f64;
    for i in 0..steps {
        let a = angle((i as f64 + 0.5) * h);
        pos += Vector3::new(a.cos(), a.sin(), 0.0) * (h * p.length);
    }
    let a = angle(u);
    (pos, Vector3::new(-a.sin(), a.cos(), 0.0))
}

/// The bar in the pose bent by `bend` radians.
pub fn bent_bar(p: &BarParams, bend: f64) -> TriMesh {
    assert!(p.rings >= 2 && p.sectors >= 3, "bar needs at least 2 rings of 3 sectors");
    let us = p.ring_positions();
    let thetas = p.sector_angles();
    let sectors = thetas.len();
    let mut vertices = Vec::with_capacity(us.len() * sectors);
    for &u in &us {
        let (c, n) = centerline(p, bend, u);
        let b = Vector3::z();
        for &theta in &thetas {
            let r = bar_radius(p, u, theta);
            vertices.push(c + (n * theta.cos() + b * theta.sin()) * r);
        }
    }
    let idx = |i: usize, j: usize| i * sectors + j % sectors;
    let mut triangles = Vec::with_capacity(2 * (us.len() - 1) * sectors);
    for i in 0..us.len() - 1 {
        for j in 0..sectors {
            let (a, b, c, d) = (idx(i, j), idx(i, j + 1), idx(i + 1, j + 1), idx(i + 1, j));
            // Alternate diagonals so the tessellation has no preferred direction.
            if (i + j + p.diagonal_phase).is_multiple_of(2) {
                triangles.push([a, b, c]);
                triangles.push([a, c, d]);
            } else {
                triangles.push([a, b, d]);
                triangles.push([b, c, d]);
            }
        }
    }
    let labels = (0..vertices.len()).collect();
    TriMesh::new(vertices, triangles)
        .and_then(|m| m.with_labels(labels))
        .expect("bar parameters produce a valid mesh")
}

/// Surface parameters `(u, theta)` of every vertex of a bar tessellation.
pub fn bar_parameters(p: &BarParams) -> Vec<(f64, f64)> {
    let thetas = p.sector_angles();
    p.ring_positions().into_iter().flat_map(|u| thetas.iter().map(move |&t| (u, t))).collect()
}
