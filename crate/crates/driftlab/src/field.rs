//! Discrete scalar, vector and skew-matrix fields, and the quadrature
//! operations shared by every other module.
//!
//! Scalar fields are either continuous piecewise-linear (one value per
//! vertex) or piecewise-constant (one value per cell). Vector and skew
//! fields are cellwise. Integration is exact for piecewise polynomials up
//! to degree 2 on each simplex.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::Mesh;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    Vertex,
    Cell,
}

/// Piecewise-linear (vertex) or piecewise-constant (cell) scalar field.
#[derive(Clone, Debug)]
pub struct ScalarField {
    pub mesh: Arc<Mesh>,
    pub layout: Layout,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn new(mesh: Arc<Mesh>, layout: Layout, values: Vec<f64>) -> Result<Self> {
        let expect = match layout {
            Layout::Vertex => mesh.vertex_count(),
            Layout::Cell => mesh.cell_count(),
        };
        if values.len() != expect {
            return Err(Error::invalid(format!(
                "scalar field length {} does not match {layout:?} count {expect}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("scalar field contains non-finite values"));
        }
        Ok(ScalarField { mesh, layout, values })
    }

    pub fn from_vertex_fn(mesh: &Arc<Mesh>, f: impl Fn([f64; 3]) -> f64) -> Self {
        let values = (0..mesh.vertex_count()).map(|v| f(mesh.vertex(v))).collect();
        ScalarField {
            mesh: mesh.clone(),
            layout: Layout::Vertex,
            values,
        }
    }

    pub fn from_cell_fn(mesh: &Arc<Mesh>, f: impl Fn([f64; 3]) -> f64) -> Self {
        let values = (0..mesh.cell_count()).map(|c| f(mesh.centroid(c))).collect();
        ScalarField {
            mesh: mesh.clone(),
            layout: Layout::Cell,
            values,
        }
    }

    pub fn zeros(mesh: &Arc<Mesh>, layout: Layout) -> Self {
        let n = match layout {
            Layout::Vertex => mesh.vertex_count(),
            Layout::Cell => mesh.cell_count(),
        };
        ScalarField {
            mesh: mesh.clone(),
            layout,
            values: vec![0.0; n],
        }
    }

    /// Mean of the vertex values over cell `c` (the exact cell average of a
    /// P1 function), or the cell value itself for cell layout.
    pub fn cell_mean(&self, c: usize) -> f64 {
        match self.layout {
            Layout::Cell => self.values[c],
            Layout::Vertex => {
                let vs = self.mesh.cell(c);
                vs.iter().map(|&v| self.values[v]).sum::<f64>() / vs.len() as f64
            }
        }
    }

    /// Value at a barycentric point of cell `c`.
    pub fn eval_bary(&self, c: usize, bary: &[f64; 4]) -> f64 {
        match self.layout {
            Layout::Cell => self.values[c],
            Layout::Vertex => {
                let vs = self.mesh.cell(c);
                vs.iter()
                    .enumerate()
                    .map(|(i, &v)| bary[i] * self.values[v])
                    .sum()
            }
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        ScalarField {
            mesh: self.mesh.clone(),
            layout: self.layout,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// Cellwise-constant vector field with `dim` components per cell.
#[derive(Clone, Debug)]
pub struct VectorField {
    pub mesh: Arc<Mesh>,
    /// Flattened, stride = mesh dimension.
    pub values: Vec<f64>,
}

impl VectorField {
    pub fn new(mesh: Arc<Mesh>, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.cell_count() * mesh.dim() {
            return Err(Error::invalid(format!(
                "vector field length {} does not match {} cells x dim {}",
                values.len(),
                mesh.cell_count(),
                mesh.dim()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("vector field contains non-finite values"));
        }
        Ok(VectorField { mesh, values })
    }

    pub fn from_fn(mesh: &Arc<Mesh>, f: impl Fn([f64; 3]) -> [f64; 3]) -> Self {
        let d = mesh.dim();
        let mut values = Vec::with_capacity(mesh.cell_count() * d);
        for c in 0..mesh.cell_count() {
            let v = f(mesh.centroid(c));
            values.extend_from_slice(&v[..d]);
        }
        VectorField {
            mesh: mesh.clone(),
            values,
        }
    }

    pub fn zeros(mesh: &Arc<Mesh>) -> Self {
        VectorField {
            mesh: mesh.clone(),
            values: vec![0.0; mesh.cell_count() * mesh.dim()],
        }
    }

    /// Cell value, zero-padded to three components.
    pub fn cell(&self, c: usize) -> [f64; 3] {
        let d = self.mesh.dim();
        let mut out = [0.0; 3];
        out[..d].copy_from_slice(&self.values[c * d..c * d + d]);
        out
    }

    /// Cellwise magnitude as a cell-layout scalar field.
    pub fn magnitude(&self) -> ScalarField {
        let d = self.mesh.dim();
        let values = (0..self.mesh.cell_count())
            .map(|c| {
                self.values[c * d..c * d + d]
                    .iter()
                    .map(|x| x * x)
                    .sum::<f64>()
                    .sqrt()
            })
            .collect();
        ScalarField {
            mesh: self.mesh.clone(),
            layout: Layout::Cell,
            values,
        }
    }

    /// L2 norm sqrt(sum vol |a_c|^2).
    pub fn l2_norm(&self) -> f64 {
        let d = self.mesh.dim();
        let mut acc = 0.0;
        for c in 0..self.mesh.cell_count() {
            let m: f64 = self.values[c * d..c * d + d].iter().map(|x| x * x).sum();
            acc += self.mesh.volume(c) * m;
        }
        acc.sqrt()
    }
}

/// Cellwise skew-symmetric matrix field. Only the strict upper triangle is
/// stored, so the reconstructed matrix satisfies `A^T = -A` exactly.
///
/// Entry order: 2-D `[a12]`; 3-D `[a12, a13, a23]`.
#[derive(Clone, Debug)]
pub struct SkewField {
    pub mesh: Arc<Mesh>,
    /// Flattened, stride = dim (dim-1) / 2.
    pub entries: Vec<f64>,
}

impl SkewField {
    pub fn entry_count(dim: usize) -> usize {
        dim * (dim - 1) / 2
    }

    pub fn new(mesh: Arc<Mesh>, entries: Vec<f64>) -> Result<Self> {
        let k = Self::entry_count(mesh.dim());
        if entries.len() != mesh.cell_count() * k {
            return Err(Error::invalid(format!(
                "skew field length {} does not match {} cells x {k} entries",
                entries.len(),
                mesh.cell_count()
            )));
        }
        Ok(SkewField { mesh, entries })
    }

    pub fn zeros(mesh: &Arc<Mesh>) -> Self {
        let k = Self::entry_count(mesh.dim());
        SkewField {
            mesh: mesh.clone(),
            entries: vec![0.0; mesh.cell_count() * k],
        }
    }

    pub fn from_fn(mesh: &Arc<Mesh>, f: impl Fn([f64; 3]) -> Vec<f64>) -> Self {
        let k = Self::entry_count(mesh.dim());
        let mut entries = Vec::with_capacity(mesh.cell_count() * k);
        for c in 0..mesh.cell_count() {
            let e = f(mesh.centroid(c));
            debug_assert_eq!(e.len(), k);
            entries.extend_from_slice(&e);
        }
        SkewField {
            mesh: mesh.clone(),
            entries,
        }
    }

    /// In 3-D, the skew matrix acting as `A xi = w x xi`.
    pub fn from_axial_fn(mesh: &Arc<Mesh>, w: impl Fn([f64; 3]) -> [f64; 3]) -> Self {
        assert_eq!(mesh.dim(), 3);
        SkewField::from_fn(mesh, |p| {
            let wv = w(p);
            vec![-wv[2], wv[1], -wv[0]]
        })
    }

    pub fn entry(&self, c: usize, k: usize) -> f64 {
        let stride = Self::entry_count(self.mesh.dim());
        self.entries[c * stride + k]
    }

    pub fn entries_of(&self, c: usize) -> &[f64] {
        let stride = Self::entry_count(self.mesh.dim());
        &self.entries[c * stride..(c + 1) * stride]
    }

    /// Full matrix of cell `c`, zero-padded to 3x3.
    pub fn matrix(&self, c: usize) -> [[f64; 3]; 3] {
        let mut m = [[0.0; 3]; 3];
        let e = self.entries_of(c);
        if self.mesh.dim() == 2 {
            m[0][1] = e[0];
            m[1][0] = -e[0];
        } else {
            m[0][1] = e[0];
            m[0][2] = e[1];
            m[1][2] = e[2];
            m[1][0] = -e[0];
            m[2][0] = -e[1];
            m[2][1] = -e[2];
        }
        m
    }

    /// `A xi` for the matrix of cell `c`.
    pub fn apply(&self, c: usize, xi: [f64; 3]) -> [f64; 3] {
        let e = self.entries_of(c);
        if self.mesh.dim() == 2 {
            [e[0] * xi[1], -e[0] * xi[0], 0.0]
        } else {
            [
                e[0] * xi[1] + e[1] * xi[2],
                -e[0] * xi[0] + e[2] * xi[2],
                -e[1] * xi[0] - e[2] * xi[1],
            ]
        }
    }

    /// Frobenius norm of the full matrix (counts both triangles).
    pub fn frobenius(&self, c: usize) -> f64 {
        let s: f64 = self.entries_of(c).iter().map(|x| x * x).sum();
        (2.0 * s).sqrt()
    }

    /// Cellwise Frobenius magnitude as a cell-layout scalar field.
    pub fn magnitude(&self) -> ScalarField {
        let values = (0..self.mesh.cell_count()).map(|c| self.frobenius(c)).collect();
        ScalarField {
            mesh: self.mesh.clone(),
            layout: Layout::Cell,
            values,
        }
    }

    pub fn max_entry(&self) -> f64 {
        self.entries.iter().fold(0.0f64, |m, &x| m.max(x.abs()))
    }
}

/// Right-hand side `f = div(flux) + density` in weak form:
/// `(f, phi) = int density phi - int flux . grad phi`.
#[derive(Clone, Debug)]
pub struct Functional {
    pub density: Option<ScalarField>,
    pub flux: Option<VectorField>,
}

impl Functional {
    pub fn from_density(density: ScalarField) -> Self {
        Functional {
            density: Some(density),
            flux: None,
        }
    }

    pub fn from_parts(density: Option<ScalarField>, flux: Option<VectorField>) -> Result<Self> {
        if density.is_none() && flux.is_none() {
            return Err(Error::invalid(
                "a functional needs a density part or a flux part",
            ));
        }
        if let (Some(d), Some(f)) = (&density, &flux) {
            check_same_mesh(&d.mesh, &f.mesh)?;
        }
        Ok(Functional { density, flux })
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        self.density
            .as_ref()
            .map(|d| &d.mesh)
            .or_else(|| self.flux.as_ref().map(|f| &f.mesh))
            .expect("functional has at least one part")
    }

    /// `(f, u)` for a vertex-layout `u`, by exact degree-2 quadrature.
    pub fn apply(&self, u: &ScalarField) -> Result<f64> {
        check_same_mesh(self.mesh(), &u.mesh)?;
        if u.layout != Layout::Vertex {
            return Err(Error::Layout("functional pairing needs a vertex field".into()));
        }
        let mesh = &u.mesh;
        let mut acc = 0.0;
        if let Some(d) = &self.density {
            acc += integrate_product(d, u)?;
        }
        if let Some(fl) = &self.flux {
            for c in 0..mesh.cell_count() {
                let g = gradient_on_cell(u, c);
                let f = fl.cell(c);
                acc -= mesh.volume(c) * (f[0] * g[0] + f[1] * g[1] + f[2] * g[2]);
            }
        }
        Ok(acc)
    }
}

pub fn check_same_mesh(a: &Arc<Mesh>, b: &Arc<Mesh>) -> Result<()> {
    if a.id() != b.id() {
        return Err(Error::MeshMismatch(format!(
            "operands live on different meshes (ids {} and {})",
            a.id(),
            b.id()
        )));
    }
    Ok(())
}

/// Gradient of the P1 interpolant of `u` on cell `c` (constant there).
pub fn gradient_on_cell(u: &ScalarField, c: usize) -> [f64; 3] {
    debug_assert_eq!(u.layout, Layout::Vertex);
    let grads = u.mesh.basis_gradients(c);
    let vs = u.mesh.cell(c);
    let mut g = [0.0; 3];
    for (i, &v) in vs.iter().enumerate() {
        for k in 0..3 {
            g[k] += u.values[v] * grads[i][k];
        }
    }
    g
}

/// Exact cellwise-constant gradient of a vertex-layout scalar field.
pub fn gradient(u: &ScalarField) -> Result<VectorField> {
    if u.layout != Layout::Vertex {
        return Err(Error::Layout(
            "gradient needs a vertex-layout field (cell fields have no weak gradient here)".into(),
        ));
    }
    let mesh = &u.mesh;
    let d = mesh.dim();
    let mut values = Vec::with_capacity(mesh.cell_count() * d);
    for c in 0..mesh.cell_count() {
        let g = gradient_on_cell(u, c);
        values.extend_from_slice(&g[..d]);
    }
    Ok(VectorField {
        mesh: mesh.clone(),
        values,
    })
}

/// `int f dx`, exact for the stored piecewise representation.
pub fn integrate(f: &ScalarField) -> f64 {
    let mesh = &f.mesh;
    let mut acc = 0.0;
    for c in 0..mesh.cell_count() {
        acc += mesh.volume(c) * f.cell_mean(c);
    }
    acc
}

/// `int f dx` restricted to a cell subset.
pub fn integrate_over(f: &ScalarField, cells: impl IntoIterator<Item = usize>) -> f64 {
    let mesh = &f.mesh;
    cells
        .into_iter()
        .map(|c| mesh.volume(c) * f.cell_mean(c))
        .sum()
}

/// `int f g dx`, exact up to degree 2 (P1 x P1 uses the closed-form element
/// mass pairing; mixed layouts reduce to cell means).
pub fn integrate_product(f: &ScalarField, g: &ScalarField) -> Result<f64> {
    check_same_mesh(&f.mesh, &g.mesh)?;
    let mesh = &f.mesh;
    let d = mesh.dim();
    let mut acc = 0.0;
    match (f.layout, g.layout) {
        (Layout::Vertex, Layout::Vertex) => {
            // int_T lambda_i lambda_j = vol (1 + delta_ij) / ((d+1)(d+2))
            let scale = 1.0 / ((d + 1) as f64 * (d + 2) as f64);
            for c in 0..mesh.cell_count() {
                let vs = mesh.cell(c);
                let mut sum_f = 0.0;
                let mut sum_g = 0.0;
                let mut sum_fg = 0.0;
                for &v in vs {
                    sum_f += f.values[v];
                    sum_g += g.values[v];
                    sum_fg += f.values[v] * g.values[v];
                }
                acc += mesh.volume(c) * scale * (sum_f * sum_g + sum_fg);
            }
        }
        _ => {
            for c in 0..mesh.cell_count() {
                acc += mesh.volume(c) * f.cell_mean(c) * g.cell_mean(c);
            }
        }
    }
    Ok(acc)
}

/// `int a . b dx` for two cellwise vector fields.
pub fn integrate_dot(a: &VectorField, b: &VectorField) -> Result<f64> {
    check_same_mesh(&a.mesh, &b.mesh)?;
    let mesh = &a.mesh;
    let d = mesh.dim();
    let mut acc = 0.0;
    for c in 0..mesh.cell_count() {
        let mut dot = 0.0;
        for k in 0..d {
            dot += a.values[c * d + k] * b.values[c * d + k];
        }
        acc += mesh.volume(c) * dot;
    }
    Ok(acc)
}

/// H1 seminorm `sqrt(int |grad u|^2)`, computed cellwise-exactly.
pub fn h1_seminorm(u: &ScalarField) -> Result<f64> {
    if u.layout != Layout::Vertex {
        return Err(Error::Layout("h1_seminorm needs a vertex-layout field".into()));
    }
    let mesh = &u.mesh;
    let mut acc = 0.0;
    for c in 0..mesh.cell_count() {
        let g = gradient_on_cell(u, c);
        acc += mesh.volume(c) * (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]);
    }
    Ok(acc.sqrt())
}

/// L2 norm of a scalar field by degree-2 quadrature.
pub fn l2_norm(f: &ScalarField) -> f64 {
    let mesh = &f.mesh;
    let quad = mesh.quadrature_deg2();
    let mut acc = 0.0;
    match f.layout {
        Layout::Cell => {
            for c in 0..mesh.cell_count() {
                acc += mesh.volume(c) * f.values[c] * f.values[c];
            }
        }
        Layout::Vertex => {
            for c in 0..mesh.cell_count() {
                let mut cell_acc = 0.0;
                for (bary, w) in &quad {
                    let v = f.eval_bary(c, bary);
                    cell_acc += w * v * v;
                }
                acc += mesh.volume(c) * cell_acc;
            }
        }
    }
    acc.sqrt()
}

/// `sqrt(int |grad(u - v)|^2)` for two vertex fields on one mesh.
pub fn h1_distance(u: &ScalarField, v: &ScalarField) -> Result<f64> {
    check_same_mesh(&u.mesh, &v.mesh)?;
    let mesh = &u.mesh;
    let mut acc = 0.0;
    for c in 0..mesh.cell_count() {
        let gu = gradient_on_cell(u, c);
        let gv = gradient_on_cell(v, c);
        let d = [gu[0] - gv[0], gu[1] - gv[1], gu[2] - gv[2]];
        acc += mesh.volume(c) * (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]);
    }
    Ok(acc.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{Domain, DomainKind};

    fn square(r: u32) -> Arc<Mesh> {
        Mesh::build(Domain::new(DomainKind::UnitSquare), r).unwrap()
    }

    #[test]
    fn integrate_constants_and_linear_exactly() {
        let mesh = square(4);
        let one = ScalarField::from_vertex_fn(&mesh, |_| 1.0);
        assert!((integrate(&one) - 1.0).abs() < 1e-14);
        let x = ScalarField::from_vertex_fn(&mesh, |p| p[0]);
        assert!((integrate(&x) - 0.5).abs() < 1e-14);
    }

    #[test]
    fn integrate_quadratic_on_disk() {
        let mesh = Mesh::build(Domain::new(DomainKind::UnitDisk), 64).unwrap();
        let f = ScalarField::from_vertex_fn(&mesh, |p| 1.0 - p[0] * p[0] - p[1] * p[1]);
        // analytic radial integral: int_0^1 (1 - r^2) 2 pi r dr = pi / 2
        assert!((integrate_product(&f, &ScalarField::from_vertex_fn(&mesh, |_| 1.0)).unwrap()
            - std::f64::consts::PI / 2.0)
            .abs()
            < 5e-3);
        assert!((integrate(&f) - std::f64::consts::PI / 2.0).abs() < 5e-3);
    }

    #[test]
    fn gradient_of_linear_is_exact() {
        let mesh = square(3);
        let u = ScalarField::from_vertex_fn(&mesh, |p| p[0]);
        let g = gradient(&u).unwrap();
        for c in 0..mesh.cell_count() {
            let v = g.cell(c);
            assert!((v[0] - 1.0).abs() < 1e-13 && v[1].abs() < 1e-13);
        }
        let konst = ScalarField::from_vertex_fn(&mesh, |_| 3.0);
        let gz = gradient(&konst).unwrap();
        assert!(gz.values.iter().all(|&x| x.abs() < 1e-13));
    }

    #[test]
    fn gradient_of_x_squared_first_order_at_centroids() {
        for r in [8, 16] {
            let mesh = square(r);
            let u = ScalarField::from_vertex_fn(&mesh, |p| p[0] * p[0]);
            let g = gradient(&u).unwrap();
            let h = mesh.h();
            let mut max_err: f64 = 0.0;
            for c in 0..mesh.cell_count() {
                let cen = mesh.centroid(c);
                let v = g.cell(c);
                max_err = max_err.max((v[0] - 2.0 * cen[0]).abs()).max(v[1].abs());
            }
            assert!(max_err <= 2.0 * h, "r={r}: err {max_err} vs h {h}");
        }
    }

    #[test]
    fn gradient_rejects_cell_layout() {
        let mesh = square(3);
        let f = ScalarField::from_cell_fn(&mesh, |p| p[0]);
        assert!(gradient(&f).is_err());
    }

    #[test]
    fn h1_seminorm_values() {
        let mesh = square(5);
        let zero = ScalarField::from_vertex_fn(&mesh, |_| 0.0);
        assert_eq!(h1_seminorm(&zero).unwrap(), 0.0);
        let x = ScalarField::from_vertex_fn(&mesh, |p| p[0]);
        assert!((h1_seminorm(&x).unwrap() - 1.0).abs() < 1e-13);
    }

    #[test]
    fn h1_seminorm_disk_bubble() {
        let mesh = Mesh::build(Domain::new(DomainKind::UnitDisk), 64).unwrap();
        let u = ScalarField::from_vertex_fn(&mesh, |p| 1.0 - p[0] * p[0] - p[1] * p[1]);
        // int |grad u|^2 = int 4 r^2 = 2 pi
        let expect = (2.0 * std::f64::consts::PI).sqrt();
        assert!((h1_seminorm(&u).unwrap() - expect).abs() < 1e-2);
    }

    #[test]
    fn integrate_additive_over_disjoint_subsets() {
        let mesh = square(6);
        let f = ScalarField::from_vertex_fn(&mesh, |p| p[0] * p[1] + 0.3);
        let n = mesh.cell_count();
        let total = integrate(&f);
        let a = integrate_over(&f, 0..n / 2);
        let b = integrate_over(&f, n / 2..n);
        assert!((a + b - total).abs() < 1e-13);
    }

    #[test]
    fn stiffness_pairing_symmetric_bilinear() {
        let mesh = square(6);
        let u = ScalarField::from_vertex_fn(&mesh, |p| (p[0] * 2.1).sin() + p[1]);
        let v = ScalarField::from_vertex_fn(&mesh, |p| p[0] - 0.7 * p[1] * p[1]);
        let gu = gradient(&u).unwrap();
        let gv = gradient(&v).unwrap();
        let uv = integrate_dot(&gu, &gv).unwrap();
        let vu = integrate_dot(&gv, &gu).unwrap();
        assert!((uv - vu).abs() < 1e-14 * (1.0 + uv.abs()));
    }

    #[test]
    fn mesh_mismatch_rejected() {
        let m1 = square(3);
        let m2 = square(3);
        let f = ScalarField::from_vertex_fn(&m1, |p| p[0]);
        let g = ScalarField::from_vertex_fn(&m2, |p| p[0]);
        assert!(integrate_product(&f, &g).is_err());
    }

    #[test]
    fn skew_reconstruction_is_exactly_skew() {
        let mesh = Mesh::build(Domain::new(DomainKind::UnitBall), 4).unwrap();
        let a = SkewField::from_fn(&mesh, |p| vec![p[0], p[1] - 0.2, p[2] * p[0]]);
        for c in (0..mesh.cell_count()).step_by(17) {
            let m = a.matrix(c);
            for i in 0..3 {
                for j in 0..3 {
                    assert_eq!(m[i][j], -m[j][i]);
                }
            }
        }
    }

    #[test]
    fn functional_needs_a_part() {
        assert!(Functional::from_parts(None, None).is_err());
    }
}
