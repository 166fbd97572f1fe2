//! Model domains, simplicial meshes and quadrature.
//!
//! Supported domains are the unit square/cube and the unit disk/ball. The
//! curved domains are meshed by mapping a structured simplicial grid on
//! `[-1,1]^n` with the "spherified cube" map, which sends the box boundary
//! exactly onto the unit sphere, so boundary vertices need no snapping
//! afterwards. Meshes are immutable after construction and shared through
//! `Arc`; every derived quantity a hot loop needs (volumes, centroids,
//! boundary flags) is precomputed.

use std::sync::Arc;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Geometric tolerance for "this vertex lies on the boundary".
pub const BOUNDARY_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainKind {
    UnitSquare,
    UnitDisk,
    UnitCube,
    UnitBall,
}

impl DomainKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "unit_square" => Ok(DomainKind::UnitSquare),
            "unit_disk" => Ok(DomainKind::UnitDisk),
            "unit_cube" => Ok(DomainKind::UnitCube),
            "unit_ball" => Ok(DomainKind::UnitBall),
            other => Err(Error::invalid(format!("unsupported domain kind `{other}`"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            DomainKind::UnitSquare => "unit_square",
            DomainKind::UnitDisk => "unit_disk",
            DomainKind::UnitCube => "unit_cube",
            DomainKind::UnitBall => "unit_ball",
        }
    }
}

/// A bounded Lipschitz model domain.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Domain {
    pub kind: DomainKind,
}

impl Domain {
    pub fn new(kind: DomainKind) -> Self {
        Domain { kind }
    }

    pub fn dimension(&self) -> usize {
        match self.kind {
            DomainKind::UnitSquare | DomainKind::UnitDisk => 2,
            DomainKind::UnitCube | DomainKind::UnitBall => 3,
        }
    }

    pub fn diameter(&self) -> f64 {
        match self.kind {
            DomainKind::UnitSquare => std::f64::consts::SQRT_2,
            DomainKind::UnitCube => 3f64.sqrt(),
            DomainKind::UnitDisk | DomainKind::UnitBall => 2.0,
        }
    }

    /// Measure of the domain (area in 2-D, volume in 3-D).
    pub fn measure(&self) -> f64 {
        match self.kind {
            DomainKind::UnitSquare | DomainKind::UnitCube => 1.0,
            DomainKind::UnitDisk => std::f64::consts::PI,
            DomainKind::UnitBall => 4.0 * std::f64::consts::PI / 3.0,
        }
    }

    /// Bounding box as (lower corner, upper corner).
    pub fn bounding_box(&self) -> ([f64; 3], [f64; 3]) {
        match self.kind {
            DomainKind::UnitSquare => ([0.0, 0.0, 0.0], [1.0, 1.0, 0.0]),
            DomainKind::UnitCube => ([0.0, 0.0, 0.0], [1.0, 1.0, 1.0]),
            DomainKind::UnitDisk => ([-1.0, -1.0, 0.0], [1.0, 1.0, 0.0]),
            DomainKind::UnitBall => ([-1.0; 3], [1.0; 3]),
        }
    }

    /// Whether an axis-aligned cube `[lo, lo+s]^n` lies inside the domain.
    pub fn contains_cube(&self, lo: [f64; 3], s: f64) -> bool {
        let tol = 1e-12;
        match self.kind {
            DomainKind::UnitSquare | DomainKind::UnitCube => {
                let dim = self.dimension();
                (0..dim).all(|d| lo[d] >= -tol && lo[d] + s <= 1.0 + tol)
            }
            DomainKind::UnitDisk => {
                // all four corners inside the unit circle
                let mut worst = 0.0f64;
                for bx in [0.0, s] {
                    for by in [0.0, s] {
                        let x = lo[0] + bx;
                        let y = lo[1] + by;
                        worst = worst.max(x * x + y * y);
                    }
                }
                worst <= 1.0 + tol
            }
            DomainKind::UnitBall => {
                let mut worst = 0.0f64;
                for bx in [0.0, s] {
                    for by in [0.0, s] {
                        for bz in [0.0, s] {
                            let x = lo[0] + bx;
                            let y = lo[1] + by;
                            let z = lo[2] + bz;
                            worst = worst.max(x * x + y * y + z * z);
                        }
                    }
                }
                worst <= 1.0 + tol
            }
        }
    }
}

static MESH_ID: AtomicU64 = AtomicU64::new(0);

/// Conforming simplicial mesh of a model domain.
///
/// Vertices are stored flattened with stride `dim`, cells with stride
/// `dim + 1`. Orientation is positive for every cell.
#[derive(Debug)]
pub struct Mesh {
    pub domain: Domain,
    pub resolution: u32,
    dim: usize,
    vertices: Vec<f64>,
    cells: Vec<usize>,
    boundary_vertex: Vec<bool>,
    /// Max cell diameter.
    h: f64,
    volumes: Vec<f64>,
    centroids: Vec<f64>,
    id: u64,
}

impl Mesh {
    /// Build a structured simplicial mesh of the given domain.
    ///
    /// `resolution` is the number of grid intervals per axis of the
    /// generating box; the mesh size satisfies `h <= C / resolution`.
    pub fn build(domain: Domain, resolution: u32) -> Result<Arc<Mesh>> {
        if resolution < 2 {
            return Err(Error::invalid(format!(
                "resolution must be >= 2, got {resolution}"
            )));
        }
        let mesh = match domain.kind {
            DomainKind::UnitSquare => build_2d(domain, resolution, |x, y| [x, y]),
            DomainKind::UnitDisk => build_2d(domain, resolution, |x, y| {
                // map [0,1]^2 -> [-1,1]^2 -> unit disk (spherified square)
                let (u, v) = (2.0 * x - 1.0, 2.0 * y - 1.0);
                [
                    u * (1.0 - v * v / 2.0).max(0.0).sqrt(),
                    v * (1.0 - u * u / 2.0).max(0.0).sqrt(),
                ]
            }),
            DomainKind::UnitCube => build_3d(domain, resolution, |x, y, z| [x, y, z]),
            DomainKind::UnitBall => build_3d(domain, resolution, |x, y, z| {
                let (u, v, w) = (2.0 * x - 1.0, 2.0 * y - 1.0, 2.0 * z - 1.0);
                let (u2, v2, w2) = (u * u, v * v, w * w);
                [
                    u * (1.0 - v2 / 2.0 - w2 / 2.0 + v2 * w2 / 3.0).max(0.0).sqrt(),
                    v * (1.0 - w2 / 2.0 - u2 / 2.0 + w2 * u2 / 3.0).max(0.0).sqrt(),
                    w * (1.0 - u2 / 2.0 - v2 / 2.0 + u2 * v2 / 3.0).max(0.0).sqrt(),
                ]
            }),
        };
        Ok(Arc::new(mesh))
    }

    /// Rebuild from raw arrays (used by the CSV importer). Validates
    /// orientation and recomputes derived data.
    pub fn from_raw(
        domain: Domain,
        resolution: u32,
        vertices: Vec<f64>,
        cells: Vec<usize>,
        boundary_vertex: Vec<bool>,
    ) -> Result<Arc<Mesh>> {
        let dim = domain.dimension();
        if vertices.len() % dim != 0 {
            return Err(Error::invalid("vertex table length not a multiple of dim"));
        }
        if cells.len() % (dim + 1) != 0 {
            return Err(Error::invalid("cell table length not a multiple of dim+1"));
        }
        let nv = vertices.len() / dim;
        if boundary_vertex.len() != nv {
            return Err(Error::invalid("boundary flag table length mismatch"));
        }
        if cells.iter().any(|&v| v >= nv) {
            return Err(Error::invalid("cell table references nonexistent vertex"));
        }
        let mut mesh = Mesh {
            domain,
            resolution,
            dim,
            vertices,
            cells,
            boundary_vertex,
            h: 0.0,
            volumes: Vec::new(),
            centroids: Vec::new(),
            id: MESH_ID.fetch_add(1, Ordering::Relaxed),
        };
        mesh.finalize()?;
        Ok(Arc::new(mesh))
    }

    fn finalize(&mut self) -> Result<()> {
        let dim = self.dim;
        let ncells = self.cells.len() / (dim + 1);
        self.volumes = Vec::with_capacity(ncells);
        self.centroids = Vec::with_capacity(ncells * dim);
        let mut h: f64 = 0.0;
        for c in 0..ncells {
            let vol = self.signed_volume(c);
            if vol <= 0.0 {
                return Err(Error::invalid(format!(
                    "cell {c} has non-positive volume {vol:.3e}"
                )));
            }
            self.volumes.push(vol);
            let k = dim + 1;
            let vs: Vec<usize> = self.cells[c * k..c * k + k].to_vec();
            for d in 0..dim {
                let mut acc = 0.0;
                for &v in &vs {
                    acc += self.vertices[v * dim + d];
                }
                self.centroids.push(acc / (dim + 1) as f64);
            }
            // cell diameter = longest edge
            for i in 0..=dim {
                for j in (i + 1)..=dim {
                    let mut e2 = 0.0;
                    for d in 0..dim {
                        let diff =
                            self.vertices[vs[i] * dim + d] - self.vertices[vs[j] * dim + d];
                        e2 += diff * diff;
                    }
                    h = h.max(e2);
                }
            }
        }
        self.h = h.sqrt();
        Ok(())
    }

    fn signed_volume(&self, c: usize) -> f64 {
        let dim = self.dim;
        let vs = self.cell(c);
        let p0 = &self.vertices[vs[0] * dim..vs[0] * dim + dim];
        if dim == 2 {
            let p1 = &self.vertices[vs[1] * 2..vs[1] * 2 + 2];
            let p2 = &self.vertices[vs[2] * 2..vs[2] * 2 + 2];
            0.5 * ((p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]))
        } else {
            let p1 = &self.vertices[vs[1] * 3..vs[1] * 3 + 3];
            let p2 = &self.vertices[vs[2] * 3..vs[2] * 3 + 3];
            let p3 = &self.vertices[vs[3] * 3..vs[3] * 3 + 3];
            let a = [p1[0] - p0[0], p1[1] - p0[1], p1[2] - p0[2]];
            let b = [p2[0] - p0[0], p2[1] - p0[1], p2[2] - p0[2]];
            let c3 = [p3[0] - p0[0], p3[1] - p0[1], p3[2] - p0[2]];
            (a[0] * (b[1] * c3[2] - b[2] * c3[1]) - a[1] * (b[0] * c3[2] - b[2] * c3[0])
                + a[2] * (b[0] * c3[1] - b[1] * c3[0]))
                / 6.0
        }
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len() / self.dim
    }

    pub fn cell_count(&self) -> usize {
        self.cells.len() / (self.dim + 1)
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// Vertex coordinates, zero-padded to 3 components.
    pub fn vertex(&self, v: usize) -> [f64; 3] {
        let d = self.dim;
        let mut p = [0.0; 3];
        p[..d].copy_from_slice(&self.vertices[v * d..v * d + d]);
        p
    }

    pub fn vertices_flat(&self) -> &[f64] {
        &self.vertices
    }

    pub fn cells_flat(&self) -> &[usize] {
        &self.cells
    }

    /// Vertex indices of cell `c`.
    pub fn cell(&self, c: usize) -> &[usize] {
        let k = self.dim + 1;
        &self.cells[c * k..c * k + k]
    }

    pub fn volume(&self, c: usize) -> f64 {
        self.volumes[c]
    }

    pub fn volumes(&self) -> &[f64] {
        &self.volumes
    }

    pub fn centroid(&self, c: usize) -> [f64; 3] {
        let d = self.dim;
        let mut p = [0.0; 3];
        p[..d].copy_from_slice(&self.centroids[c * d..c * d + d]);
        p
    }

    pub fn total_volume(&self) -> f64 {
        self.volumes.iter().sum()
    }

    pub fn is_boundary_vertex(&self, v: usize) -> bool {
        self.boundary_vertex[v]
    }

    pub fn boundary_flags(&self) -> &[bool] {
        &self.boundary_vertex
    }

    pub fn interior_vertices(&self) -> Vec<usize> {
        (0..self.vertex_count())
            .filter(|&v| !self.boundary_vertex[v])
            .collect()
    }

    /// Gradients of the P1 basis functions of cell `c`, one `[f64;3]`
    /// (zero-padded) per local vertex.
    pub fn basis_gradients(&self, c: usize) -> [[f64; 3]; 4] {
        let d = self.dim;
        let vs = self.cell(c);
        let mut grads = [[0.0; 3]; 4];
        if d == 2 {
            let p0 = self.vertex(vs[0]);
            let p1 = self.vertex(vs[1]);
            let p2 = self.vertex(vs[2]);
            let det = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]);
            grads[1] = [(p2[1] - p0[1]) / det, -(p2[0] - p0[0]) / det, 0.0];
            grads[2] = [-(p1[1] - p0[1]) / det, (p1[0] - p0[0]) / det, 0.0];
            for k in 0..2 {
                grads[0][k] = -grads[1][k] - grads[2][k];
            }
        } else {
            let p0 = self.vertex(vs[0]);
            let e: Vec<[f64; 3]> = (1..4)
                .map(|i| {
                    let p = self.vertex(vs[i]);
                    [p[0] - p0[0], p[1] - p0[1], p[2] - p0[2]]
                })
                .collect();
            // rows of inverse(E)^T where E has rows e[i]
            let det = e[0][0] * (e[1][1] * e[2][2] - e[1][2] * e[2][1])
                - e[0][1] * (e[1][0] * e[2][2] - e[1][2] * e[2][0])
                + e[0][2] * (e[1][0] * e[2][1] - e[1][1] * e[2][0]);
            let cross = |a: [f64; 3], b: [f64; 3]| {
                [
                    a[1] * b[2] - a[2] * b[1],
                    a[2] * b[0] - a[0] * b[2],
                    a[0] * b[1] - a[1] * b[0],
                ]
            };
            let g1 = cross(e[1], e[2]);
            let g2 = cross(e[2], e[0]);
            let g3 = cross(e[0], e[1]);
            for k in 0..3 {
                grads[1][k] = g1[k] / det;
                grads[2][k] = g2[k] / det;
                grads[3][k] = g3[k] / det;
                grads[0][k] = -grads[1][k] - grads[2][k] - grads[3][k];
            }
        }
        grads
    }

    /// Degree-2 quadrature nodes and weights in barycentric coordinates:
    /// edge midpoints in 2-D, the standard 4-point rule in 3-D.
    pub fn quadrature_deg2(&self) -> Vec<([f64; 4], f64)> {
        if self.dim == 2 {
            vec![
                ([0.5, 0.5, 0.0, 0.0], 1.0 / 3.0),
                ([0.0, 0.5, 0.5, 0.0], 1.0 / 3.0),
                ([0.5, 0.0, 0.5, 0.0], 1.0 / 3.0),
            ]
        } else {
            let a = 0.585_410_196_624_968_5;
            let b = 0.138_196_601_125_010_5;
            vec![
                ([a, b, b, b], 0.25),
                ([b, a, b, b], 0.25),
                ([b, b, a, b], 0.25),
                ([b, b, b, a], 0.25),
            ]
        }
    }

    /// Physical coordinates of a barycentric point of cell `c`.
    pub fn barycentric_point(&self, c: usize, bary: &[f64; 4]) -> [f64; 3] {
        let vs = self.cell(c);
        let mut p = [0.0; 3];
        for (i, &v) in vs.iter().enumerate() {
            let pv = self.vertex(v);
            for k in 0..3 {
                p[k] += bary[i] * pv[k];
            }
        }
        p
    }

    /// Boundary faces as (cell index, local face) with outward unit normal
    /// and face measure. A face of a 2-D cell is an edge.
    pub fn boundary_faces(&self) -> Vec<BoundaryFace> {
        let d = self.dim;
        let mut out = Vec::new();
        for c in 0..self.cell_count() {
            let vs = self.cell(c);
            // face opposite local vertex i consists of the other vertices
            for i in 0..=d {
                let face: Vec<usize> = (0..=d).filter(|&j| j != i).map(|j| vs[j]).collect();
                if !face.iter().all(|&v| self.boundary_vertex[v]) {
                    continue;
                }
                // outward normal: gradient of barycentric i points inward
                let g = self.basis_gradients(c)[i];
                let gn = (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt();
                let normal = [-g[0] / gn, -g[1] / gn, -g[2] / gn];
                let measure = self.face_measure(&face);
                let mut centroid = [0.0; 3];
                for &v in &face {
                    let p = self.vertex(v);
                    for k in 0..3 {
                        centroid[k] += p[k] / d as f64;
                    }
                }
                out.push(BoundaryFace {
                    cell: c,
                    vertices: face,
                    normal,
                    measure,
                    centroid,
                });
            }
        }
        out
    }

    fn face_measure(&self, face: &[usize]) -> f64 {
        if self.dim == 2 {
            let p0 = self.vertex(face[0]);
            let p1 = self.vertex(face[1]);
            ((p1[0] - p0[0]).powi(2) + (p1[1] - p0[1]).powi(2)).sqrt()
        } else {
            let p0 = self.vertex(face[0]);
            let p1 = self.vertex(face[1]);
            let p2 = self.vertex(face[2]);
            let a = [p1[0] - p0[0], p1[1] - p0[1], p1[2] - p0[2]];
            let b = [p2[0] - p0[0], p2[1] - p0[1], p2[2] - p0[2]];
            let cr = [
                a[1] * b[2] - a[2] * b[1],
                a[2] * b[0] - a[0] * b[2],
                a[0] * b[1] - a[1] * b[0],
            ];
            0.5 * (cr[0] * cr[0] + cr[1] * cr[1] + cr[2] * cr[2]).sqrt()
        }
    }

    /// Locate the cell containing a point, for structured meshes, by
    /// inverting the generating-box map and testing the candidate cells.
    /// Returns `None` for points outside the domain.
    pub fn locate(&self, p: [f64; 3]) -> Option<usize> {
        let r = self.resolution as usize;
        let d = self.dim;
        // invert the box map
        let q = match self.domain.kind {
            DomainKind::UnitSquare | DomainKind::UnitCube => p,
            DomainKind::UnitDisk => {
                let m = invert_spherified_2d([p[0], p[1]]);
                [(m[0] + 1.0) / 2.0, (m[1] + 1.0) / 2.0, 0.0]
            }
            DomainKind::UnitBall => {
                let m = invert_spherified_3d(p);
                [(m[0] + 1.0) / 2.0, (m[1] + 1.0) / 2.0, (m[2] + 1.0) / 2.0]
            }
        };
        let cell_index = |ix: usize, iy: usize, iz: usize, sub: usize| -> usize {
            if d == 2 {
                (ix * r + iy) * 2 + sub
            } else {
                ((ix * r + iy) * r + iz) * 6 + sub
            }
        };
        let clampi = |x: f64| -> usize {
            if !(x.is_finite()) {
                return 0;
            }
            (x.floor() as i64).clamp(0, r as i64 - 1) as usize
        };
        let ix = clampi(q[0] * r as f64);
        let iy = clampi(q[1] * r as f64);
        let iz = if d == 3 { clampi(q[2] * r as f64) } else { 0 };
        let nsub = if d == 2 { 2 } else { 6 };
        // search the candidate box and its neighbors (map inversion is
        // approximate near curved boundaries)
        for ring in 0..2usize {
            let lo = |i: usize| i.saturating_sub(ring);
            let hi = |i: usize| (i + ring).min(r - 1);
            for jx in lo(ix)..=hi(ix) {
                for jy in lo(iy)..=hi(iy) {
                    let zr = if d == 3 { (lo(iz), hi(iz)) } else { (0, 0) };
                    for jz in zr.0..=zr.1 {
                        for sub in 0..nsub {
                            let c = cell_index(jx, jy, jz, sub);
                            if c < self.cell_count() && self.cell_contains(c, p, 1e-10) {
                                return Some(c);
                            }
                        }
                    }
                }
            }
        }
        None
    }

    fn cell_contains(&self, c: usize, p: [f64; 3], tol: f64) -> bool {
        self.barycentric_of(c, p).iter().all(|&l| l >= -tol)
    }

    /// Barycentric coordinates of `p` with respect to cell `c`.
    pub fn barycentric_of(&self, c: usize, p: [f64; 3]) -> [f64; 4] {
        let grads = self.basis_gradients(c);
        let vs = self.cell(c);
        let p0 = self.vertex(vs[0]);
        let dp = [p[0] - p0[0], p[1] - p0[1], p[2] - p0[2]];
        let mut bary = [0.0; 4];
        let d = self.dim;
        let mut rest = 1.0;
        for i in 1..=d {
            let l = grads[i][0] * dp[0] + grads[i][1] * dp[1] + grads[i][2] * dp[2];
            bary[i] = l;
            rest -= l;
        }
        bary[0] = rest;
        bary
    }
}

/// One boundary face with outward geometry data.
#[derive(Clone, Debug)]
pub struct BoundaryFace {
    pub cell: usize,
    pub vertices: Vec<usize>,
    pub normal: [f64; 3],
    pub measure: f64,
    pub centroid: [f64; 3],
}

fn build_2d(domain: Domain, r: u32, map: impl Fn(f64, f64) -> [f64; 2]) -> Mesh {
    let r = r as usize;
    let n = r + 1;
    let mut vertices = Vec::with_capacity(n * n * 2);
    let mut boundary = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let x = i as f64 / r as f64;
            let y = j as f64 / r as f64;
            let p = map(x, y);
            vertices.extend_from_slice(&p);
            boundary.push(i == 0 || j == 0 || i == r || j == r);
        }
    }
    let vid = |i: usize, j: usize| i * n + j;
    let mut cells = Vec::with_capacity(r * r * 2 * 3);
    for i in 0..r {
        for j in 0..r {
            let (v00, v10, v01, v11) = (vid(i, j), vid(i + 1, j), vid(i, j + 1), vid(i + 1, j + 1));
            cells.extend_from_slice(&[v00, v10, v11]);
            cells.extend_from_slice(&[v00, v11, v01]);
        }
    }
    let mut mesh = Mesh {
        domain,
        resolution: r as u32,
        dim: 2,
        vertices,
        cells,
        boundary_vertex: boundary,
        h: 0.0,
        volumes: Vec::new(),
        centroids: Vec::new(),
        id: MESH_ID.fetch_add(1, Ordering::Relaxed),
    };
    mesh.finalize().expect("structured 2-D mesh is positively oriented");
    mesh
}

/// Kuhn split of each grid cube into 6 tetrahedra sharing the main diagonal.
const KUHN_PERMS: [[usize; 3]; 6] = [
    [0, 1, 2],
    [0, 2, 1],
    [1, 0, 2],
    [1, 2, 0],
    [2, 0, 1],
    [2, 1, 0],
];

fn build_3d(domain: Domain, r: u32, map: impl Fn(f64, f64, f64) -> [f64; 3]) -> Mesh {
    let r = r as usize;
    let n = r + 1;
    let mut vertices = Vec::with_capacity(n * n * n * 3);
    let mut boundary = Vec::with_capacity(n * n * n);
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let p = map(i as f64 / r as f64, j as f64 / r as f64, k as f64 / r as f64);
                vertices.extend_from_slice(&p);
                boundary.push(i == 0 || j == 0 || k == 0 || i == r || j == r || k == r);
            }
        }
    }
    let vid = |i: usize, j: usize, k: usize| (i * n + j) * n + k;
    let mut cells = Vec::with_capacity(r * r * r * 6 * 4);
    for i in 0..r {
        for j in 0..r {
            for k in 0..r {
                for perm in &KUHN_PERMS {
                    let mut b = [0usize; 3];
                    let v0 = vid(i, j, k);
                    b[perm[0]] = 1;
                    let v1 = vid(i + b[0], j + b[1], k + b[2]);
                    b[perm[1]] = 1;
                    let v2 = vid(i + b[0], j + b[1], k + b[2]);
                    let v3 = vid(i + 1, j + 1, k + 1);
                    cells.extend_from_slice(&[v0, v1, v2, v3]);
                }
            }
        }
    }
    let mut mesh = Mesh {
        domain,
        resolution: r as u32,
        dim: 3,
        vertices,
        cells,
        boundary_vertex: boundary,
        h: 0.0,
        volumes: Vec::new(),
        centroids: Vec::new(),
        id: MESH_ID.fetch_add(1, Ordering::Relaxed),
    };
    // Kuhn tetrahedra alternate in parity; orient them positively.
    orient_positive(&mut mesh);
    mesh.finalize().expect("oriented 3-D mesh has positive volumes");
    mesh
}

fn orient_positive(mesh: &mut Mesh) {
    let ncells = mesh.cells.len() / 4;
    for c in 0..ncells {
        if mesh.signed_volume(c) < 0.0 {
            mesh.cells.swap(c * 4 + 2, c * 4 + 3);
        }
    }
}

/// Invert `u -> u sqrt(1 - v^2/2), v -> v sqrt(1 - u^2/2)` by Newton iteration.
fn invert_spherified_2d(p: [f64; 2]) -> [f64; 2] {
    let mut u = p[0];
    let mut v = p[1];
    for _ in 0..30 {
        let fu = u * (1.0 - v * v / 2.0).max(0.0).sqrt() - p[0];
        let fv = v * (1.0 - u * u / 2.0).max(0.0).sqrt() - p[1];
        if fu.abs() + fv.abs() < 1e-14 {
            break;
        }
        let su = (1.0 - v * v / 2.0).max(1e-9).sqrt();
        let sv = (1.0 - u * u / 2.0).max(1e-9).sqrt();
        let j00 = su;
        let j01 = -u * v / (2.0 * su);
        let j10 = -u * v / (2.0 * sv);
        let j11 = sv;
        let det = j00 * j11 - j01 * j10;
        u -= (fu * j11 - fv * j01) / det;
        v -= (fv * j00 - fu * j10) / det;
        u = u.clamp(-1.0, 1.0);
        v = v.clamp(-1.0, 1.0);
    }
    [u, v]
}

fn invert_spherified_3d(p: [f64; 3]) -> [f64; 3] {
    let mut q = p;
    for _ in 0..60 {
        let (u, v, w) = (q[0], q[1], q[2]);
        let (u2, v2, w2) = (u * u, v * v, w * w);
        let f = [
            u * (1.0 - v2 / 2.0 - w2 / 2.0 + v2 * w2 / 3.0).max(0.0).sqrt() - p[0],
            v * (1.0 - w2 / 2.0 - u2 / 2.0 + w2 * u2 / 3.0).max(0.0).sqrt() - p[1],
            w * (1.0 - u2 / 2.0 - v2 / 2.0 + u2 * v2 / 3.0).max(0.0).sqrt() - p[2],
        ];
        if f.iter().map(|x| x.abs()).sum::<f64>() < 1e-13 {
            break;
        }
        // damped fixed-point step with the diagonal of the Jacobian
        for k in 0..3 {
            let (a, b) = match k {
                0 => (v2, w2),
                1 => (w2, u2),
                _ => (u2, v2),
            };
            let s = (1.0 - a / 2.0 - b / 2.0 + a * b / 3.0).max(1e-9).sqrt();
            q[k] -= f[k] / s;
            q[k] = q[k].clamp(-1.0, 1.0);
        }
    }
    q
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smallest_structured_square() {
        let mesh = Mesh::build(Domain::new(DomainKind::UnitSquare), 2).unwrap();
        assert_eq!(mesh.vertex_count(), 9);
        assert_eq!(mesh.cell_count(), 8);
        assert!((mesh.total_volume() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn resolution_below_two_rejected() {
        assert!(Mesh::build(Domain::new(DomainKind::UnitSquare), 1).is_err());
    }

    #[test]
    fn disk_area_converges_to_pi() {
        // polygon-area oracle: the mesh is an inscribed polygon triangulation,
        // its total area must approach pi
        let mesh = Mesh::build(Domain::new(DomainKind::UnitDisk), 64).unwrap();
        assert!((mesh.total_volume() - std::f64::consts::PI).abs() < 5e-3);
    }

    #[test]
    fn ball_volume_converges() {
        let mesh = Mesh::build(Domain::new(DomainKind::UnitBall), 32).unwrap();
        assert!((mesh.total_volume() - 4.0 * std::f64::consts::PI / 3.0).abs() < 2e-2);
    }

    #[test]
    fn boundary_vertices_on_sphere() {
        for (kind, radius_dim) in [(DomainKind::UnitDisk, 2), (DomainKind::UnitBall, 3)] {
            let mesh = Mesh::build(Domain::new(kind), 8).unwrap();
            for v in 0..mesh.vertex_count() {
                if mesh.is_boundary_vertex(v) {
                    let p = mesh.vertex(v);
                    let r: f64 = p[..radius_dim].iter().map(|x| x * x).sum::<f64>().sqrt();
                    assert!((r - 1.0).abs() < BOUNDARY_TOL, "vertex {v} radius {r}");
                }
            }
        }
    }

    #[test]
    fn refinement_at_least_halves_h() {
        for kind in [
            DomainKind::UnitSquare,
            DomainKind::UnitDisk,
            DomainKind::UnitCube,
            DomainKind::UnitBall,
        ] {
            let coarse = Mesh::build(Domain::new(kind), 8).unwrap();
            let fine = Mesh::build(Domain::new(kind), 16).unwrap();
            assert!(
                fine.h() <= 0.6 * coarse.h(),
                "{kind:?}: h {} vs {}",
                fine.h(),
                coarse.h()
            );
        }
    }

    #[test]
    fn all_cells_positive() {
        for kind in [DomainKind::UnitCube, DomainKind::UnitBall] {
            let mesh = Mesh::build(Domain::new(kind), 6).unwrap();
            assert!(mesh.volumes().iter().all(|&v| v > 0.0));
        }
    }

    #[test]
    fn locate_finds_centroids() {
        for kind in [
            DomainKind::UnitSquare,
            DomainKind::UnitDisk,
            DomainKind::UnitBall,
        ] {
            let mesh = Mesh::build(Domain::new(kind), 6).unwrap();
            for c in (0..mesh.cell_count()).step_by(7) {
                let found = mesh.locate(mesh.centroid(c)).expect("centroid located");
                let bary = mesh.barycentric_of(found, mesh.centroid(c));
                assert!(bary.iter().all(|&l| l >= -1e-9));
            }
        }
    }

    #[test]
    fn conforming_no_hanging_vertices() {
        // every interior edge of the structured split is shared by exactly
        // two cells in 2-D
        let mesh = Mesh::build(Domain::new(DomainKind::UnitSquare), 4).unwrap();
        use std::collections::HashMap;
        let mut edges: HashMap<(usize, usize), usize> = HashMap::new();
        for c in 0..mesh.cell_count() {
            let vs = mesh.cell(c);
            for (i, j) in [(0, 1), (1, 2), (0, 2)] {
                let key = (vs[i].min(vs[j]), vs[i].max(vs[j]));
                *edges.entry(key).or_insert(0) += 1;
            }
        }
        for ((a, b), count) in edges {
            let both_boundary = mesh.is_boundary_vertex(a) && mesh.is_boundary_vertex(b);
            assert!(count == 2 || (count == 1 && both_boundary));
        }
    }
}
