//! Skew potentials: construct a skew-symmetric matrix field `A` with
//! `div A = a` from a solenoidal field `a`, three ways.
//!
//! * `stream_function_2d`: in the plane, `a = (-alpha_y, alpha_x)` for a
//!   scalar stream function recovered from a discrete Poisson problem.
//! * `poincare_potential_ball`: on the ball, the line-integral potential
//!   `w(x) = int_0^1 a(tx) x tx dt` with `A xi = w x xi`.
//! * `newtonian_potential`: curl of the Newtonian potential of `a`
//!   (zero-extended), valid when the normal trace of `a` vanishes.
//!
//! `weak_div_residual` measures `div A - a` against piecewise-linear test
//! functions and is the shared verification gate.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{check_same_mesh, Layout, ScalarField, SkewField, VectorField};
use crate::mesh::DomainKind;
use crate::quad::gauss_legendre;
use crate::sparse::{self, Csr, SolveOptions};

/// Relative weak-divergence tolerance for "this field is solenoidal".
pub const SOLENOIDAL_RTOL: f64 = 1e-6;

/// Relative boundary-flux tolerance for "this field has zero normal trace".
pub const NORMAL_TRACE_RTOL: f64 = 1e-6;

/// Max of `|int a . grad phi| / |phi|_W12` over a fixed family of smooth
/// zero-boundary test functions (low-frequency sine products interpolated
/// at interior vertices).
///
/// Divide by the L2 norm of `a` for the relative gate. A genuine
/// divergence registers at O(1) against these test functions, while the
/// quadrature noise of a centroid-sampled solenoidal field is O(h^2).
pub fn solenoidality_residual(a: &VectorField) -> Result<f64> {
    let mesh = &a.mesh;
    let nv = mesh.vertex_count();
    let d = mesh.dim();
    let (lo, hi) = mesh.domain.bounding_box();
    let mass_scale = 1.0 / ((d + 1) as f64 * (d + 2) as f64);
    let mut worst = 0.0f64;
    let max_mode = 3u32;
    let mode_count = if d == 2 { max_mode.pow(2) } else { max_mode.pow(3) };
    for mode in 0..mode_count {
        let mx = 1 + mode % max_mode;
        let my = 1 + (mode / max_mode) % max_mode;
        let mz = 1 + (mode / (max_mode * max_mode)) % max_mode;
        let modes = [mx, my, mz];
        let mut phi = vec![0.0f64; nv];
        for v in 0..nv {
            if mesh.is_boundary_vertex(v) {
                continue;
            }
            let p = mesh.vertex(v);
            let mut prod = 1.0;
            for k in 0..d {
                let t = (p[k] - lo[k]) / (hi[k] - lo[k]);
                prod *= (std::f64::consts::PI * modes[k] as f64 * t).sin();
            }
            phi[v] = prod;
        }
        let mut dot = 0.0;
        let mut grad2 = 0.0;
        let mut mass = 0.0;
        for c in 0..mesh.cell_count() {
            let vs = mesh.cell(c);
            let grads = mesh.basis_gradients(c);
            let vol = mesh.volume(c);
            let ac = a.cell(c);
            let mut g = [0.0f64; 3];
            let mut sum_phi = 0.0;
            let mut sum_phi2 = 0.0;
            for (i, &v) in vs.iter().enumerate() {
                for k in 0..3 {
                    g[k] += phi[v] * grads[i][k];
                }
                sum_phi += phi[v];
                sum_phi2 += phi[v] * phi[v];
            }
            dot += vol * (ac[0] * g[0] + ac[1] * g[1] + ac[2] * g[2]);
            grad2 += vol * (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]);
            mass += vol * mass_scale * (sum_phi * sum_phi + sum_phi2);
        }
        let norm = (grad2 + mass).sqrt();
        if norm > 0.0 {
            worst = worst.max(dot.abs() / norm);
        }
    }
    Ok(worst)
}

/// Relative gate: the fixed tolerance admits exactly-solenoidal discrete
/// fields; the h^2 floor admits analytically solenoidal fields sampled at
/// centroids, whose discrete weak divergence is pure quadrature error.
pub(crate) fn require_solenoidal(a: &VectorField) -> Result<()> {
    let res = solenoidality_residual(a)?;
    let rel = res / a.l2_norm().max(1e-300);
    let tol = SOLENOIDAL_RTOL.max(a.mesh.h() * a.mesh.h());
    if rel > tol {
        return Err(Error::NotSolenoidal {
            residual: rel,
            tolerance: tol,
        });
    }
    Ok(())
}

/// Stream function and the induced single-entry skew field in 2-D.
pub struct StreamFunction {
    /// Zero-mean vertex field with `(-alpha_y, alpha_x) ~ a`.
    pub alpha: ScalarField,
    /// Skew field with entry `alpha` per cell.
    pub skew: SkewField,
}

/// Recover `alpha` with `a = (-alpha_y, alpha_x)` by solving the Neumann
/// Poisson problem `int grad alpha . grad phi = int (a_2, -a_1) . grad phi`
/// with one pinned vertex, then removing the mean.
pub fn stream_function_2d(a: &VectorField) -> Result<StreamFunction> {
    let mesh = &a.mesh;
    if mesh.dim() != 2 {
        return Err(Error::invalid("stream_function_2d needs a planar mesh"));
    }
    require_solenoidal(a)?;
    let nv = mesh.vertex_count();
    let mut rows = Vec::new();
    let mut cols = Vec::new();
    let mut vals = Vec::new();
    let mut rhs = vec![0.0f64; nv];
    for c in 0..mesh.cell_count() {
        let vs = mesh.cell(c);
        let grads = mesh.basis_gradients(c);
        let vol = mesh.volume(c);
        let ac = a.cell(c);
        let v_field = [ac[1], -ac[0]]; // grad alpha = (a2, -a1)
        for (i, &vi) in vs.iter().enumerate() {
            if vi == 0 {
                continue;
            }
            rhs[vi] += vol * (v_field[0] * grads[i][0] + v_field[1] * grads[i][1]);
            for (j, &vj) in vs.iter().enumerate() {
                if vj == 0 {
                    continue;
                }
                rows.push(vi as u32);
                cols.push(vj as u32);
                vals.push(
                    vol * (grads[j][0] * grads[i][0] + grads[j][1] * grads[i][1]),
                );
            }
        }
    }
    // pinned vertex 0
    rows.push(0);
    cols.push(0);
    vals.push(1.0);
    let matrix = Csr::from_triplets(nv, &rows, &cols, &vals);
    let (alpha_raw, _) = sparse::solve(
        &matrix,
        &rhs,
        None,
        SolveOptions {
            rel_tol: 1e-12,
            max_iter: 50_000,
        },
    )?;
    // remove the volume-weighted mean
    let mut field = ScalarField::new(mesh.clone(), Layout::Vertex, alpha_raw)?;
    let mean = crate::field::integrate(&field) / mesh.total_volume();
    for v in field.values.iter_mut() {
        *v -= mean;
    }
    let entries: Vec<f64> = (0..mesh.cell_count()).map(|c| field.cell_mean(c)).collect();
    let skew = SkewField::new(mesh.clone(), entries)?;
    Ok(StreamFunction { alpha: field, skew })
}

/// Line-integral potential on the unit ball: `w(x) = int_0^1 a(tx) x (tx) dt`,
/// `A xi = w x xi`. Uses 32 Gauss-Legendre nodes along each ray and samples
/// the cellwise drift by point location.
pub fn poincare_potential_ball(a: &VectorField) -> Result<SkewField> {
    let mesh = &a.mesh;
    if mesh.dim() != 3 || mesh.domain.kind != DomainKind::UnitBall {
        return Err(Error::invalid(
            "poincare_potential_ball needs a mesh of the unit ball",
        ));
    }
    require_solenoidal(a)?;
    // 4 panels x 8 nodes on [0,1]
    let gl = gauss_legendre(8);
    let mut nodes = Vec::with_capacity(32);
    for p in 0..4 {
        let lo = p as f64 / 4.0;
        let hi = lo + 0.25;
        for &(x, w) in &gl {
            nodes.push((lo + (x + 1.0) * 0.5 * (hi - lo), w * 0.5 * (hi - lo)));
        }
    }
    let ncells = mesh.cell_count();
    let entries: Vec<f64> = (0..ncells)
        .into_par_iter()
        .flat_map_iter(|c| {
            let x = mesh.centroid(c);
            let mut w = [0.0f64; 3];
            for &(t, wt) in &nodes {
                let p = [t * x[0], t * x[1], t * x[2]];
                if let Some(cell) = mesh.locate(p) {
                    let av = a.cell(cell);
                    let tx = p;
                    // a(tx) x (tx)
                    w[0] += wt * (av[1] * tx[2] - av[2] * tx[1]);
                    w[1] += wt * (av[2] * tx[0] - av[0] * tx[2]);
                    w[2] += wt * (av[0] * tx[1] - av[1] * tx[0]);
                }
            }
            [-w[2], w[1], -w[0]].into_iter()
        })
        .collect();
    SkewField::new(mesh.clone(), entries)
}

/// Curl of the Newtonian potential of the zero-extension of `a` (3-D).
///
/// `V_i(x) = (4 pi)^{-1} int a_i(y) |x-y|^{-1} dy`, then `A_ij = V_{i,x_j} -
/// V_{j,x_i}` cellwise. Requires vanishing normal trace on the boundary.
pub fn newtonian_potential(a: &VectorField) -> Result<SkewField> {
    let mesh = &a.mesh;
    if mesh.dim() != 3 {
        return Err(Error::invalid("newtonian_potential is implemented for n = 3"));
    }
    require_solenoidal(a)?;
    let flux = normal_trace_residual(a);
    let rel = flux / a.l2_norm().max(1e-300);
    if rel > NORMAL_TRACE_RTOL {
        return Err(Error::NormalTrace {
            flux: rel,
            tolerance: NORMAL_TRACE_RTOL,
        });
    }
    let nv = mesh.vertex_count();
    let ncells = mesh.cell_count();
    // cell diameters for the near-field test
    let diams: Vec<f64> = (0..ncells)
        .map(|c| {
            let vs = mesh.cell(c);
            let mut m = 0.0f64;
            for i in 0..4 {
                for j in (i + 1)..4 {
                    let p = mesh.vertex(vs[i]);
                    let q = mesh.vertex(vs[j]);
                    let d2 = (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2);
                    m = m.max(d2);
                }
            }
            m.sqrt()
        })
        .collect();
    let inv4pi = 1.0 / (4.0 * std::f64::consts::PI);
    let v_values: Vec<[f64; 3]> = (0..nv)
        .into_par_iter()
        .map(|v| {
            let x = mesh.vertex(v);
            let mut acc = [0.0f64; 3];
            for c in 0..ncells {
                let cen = mesh.centroid(c);
                let dx = [x[0] - cen[0], x[1] - cen[1], x[2] - cen[2]];
                let dist = (dx[0] * dx[0] + dx[1] * dx[1] + dx[2] * dx[2]).sqrt();
                let ac = a.cell(c);
                if ac[0] == 0.0 && ac[1] == 0.0 && ac[2] == 0.0 {
                    continue;
                }
                if dist > 2.0 * diams[c] {
                    let k = mesh.volume(c) / dist;
                    acc[0] += k * ac[0];
                    acc[1] += k * ac[1];
                    acc[2] += k * ac[2];
                } else {
                    // graded subdivision toward the evaluation point
                    let vs = mesh.cell(c);
                    let pts = [
                        mesh.vertex(vs[0]),
                        mesh.vertex(vs[1]),
                        mesh.vertex(vs[2]),
                        mesh.vertex(vs[3]),
                    ];
                    let k = near_kernel_integral(&pts, x, 3);
                    acc[0] += k * ac[0];
                    acc[1] += k * ac[1];
                    acc[2] += k * ac[2];
                }
            }
            [acc[0] * inv4pi, acc[1] * inv4pi, acc[2] * inv4pi]
        })
        .collect();
    // discrete curl: A_ij = V_{i,x_j} - V_{j,x_i} per cell from P1 gradients
    let mut entries = Vec::with_capacity(ncells * 3);
    for c in 0..ncells {
        let vs = mesh.cell(c);
        let grads = mesh.basis_gradients(c);
        let mut dv = [[0.0f64; 3]; 3]; // dv[i][j] = d V_i / d x_j
        for (loc, &vert) in vs.iter().enumerate() {
            for i in 0..3 {
                for j in 0..3 {
                    dv[i][j] += v_values[vert][i] * grads[loc][j];
                }
            }
        }
        entries.push(dv[0][1] - dv[1][0]);
        entries.push(dv[0][2] - dv[2][0]);
        entries.push(dv[1][2] - dv[2][1]);
    }
    SkewField::new(mesh.clone(), entries)
}

/// `int_T |x - y|^{-1} dy / vol(T)`-weighted volume, by recursive midpoint
/// subdivision toward the singularity (the kernel is integrable).
fn near_kernel_integral(pts: &[[f64; 3]; 4], x: [f64; 3], depth: usize) -> f64 {
    if depth == 0 {
        let cen = [
            (pts[0][0] + pts[1][0] + pts[2][0] + pts[3][0]) / 4.0,
            (pts[0][1] + pts[1][1] + pts[2][1] + pts[3][1]) / 4.0,
            (pts[0][2] + pts[1][2] + pts[2][2] + pts[3][2]) / 4.0,
        ];
        let d2 = (x[0] - cen[0]).powi(2) + (x[1] - cen[1]).powi(2) + (x[2] - cen[2]).powi(2);
        let vol = tet_volume(pts);
        // regularize by the sub-cell radius so coincident points stay finite
        let reg = (3.0 * vol / (4.0 * std::f64::consts::PI)).powf(1.0 / 3.0);
        return vol / d2.sqrt().max(0.5 * reg);
    }
    let mid = |a: [f64; 3], b: [f64; 3]| {
        [
            (a[0] + b[0]) / 2.0,
            (a[1] + b[1]) / 2.0,
            (a[2] + b[2]) / 2.0,
        ]
    };
    let (v0, v1, v2, v3) = (pts[0], pts[1], pts[2], pts[3]);
    let m01 = mid(v0, v1);
    let m02 = mid(v0, v2);
    let m03 = mid(v0, v3);
    let m12 = mid(v1, v2);
    let m13 = mid(v1, v3);
    let m23 = mid(v2, v3);
    let subs: [[[f64; 3]; 4]; 8] = [
        [v0, m01, m02, m03],
        [v1, m01, m12, m13],
        [v2, m02, m12, m23],
        [v3, m03, m13, m23],
        [m01, m02, m03, m13],
        [m01, m02, m12, m13],
        [m02, m03, m13, m23],
        [m02, m12, m13, m23],
    ];
    subs.iter().map(|s| near_kernel_integral(s, x, depth - 1)).sum()
}

fn tet_volume(pts: &[[f64; 3]; 4]) -> f64 {
    let a = [
        pts[1][0] - pts[0][0],
        pts[1][1] - pts[0][1],
        pts[1][2] - pts[0][2],
    ];
    let b = [
        pts[2][0] - pts[0][0],
        pts[2][1] - pts[0][1],
        pts[2][2] - pts[0][2],
    ];
    let c = [
        pts[3][0] - pts[0][0],
        pts[3][1] - pts[0][1],
        pts[3][2] - pts[0][2],
    ];
    ((a[0] * (b[1] * c[2] - b[2] * c[1]) - a[1] * (b[0] * c[2] - b[2] * c[0])
        + a[2] * (b[0] * c[1] - b[1] * c[0]))
        / 6.0)
        .abs()
}

/// L2 norm of the normal trace of `a` over the boundary (adjacent-cell values).
pub fn normal_trace_residual(a: &VectorField) -> f64 {
    let mesh = &a.mesh;
    let mut acc = 0.0;
    for face in mesh.boundary_faces() {
        let av = a.cell(face.cell);
        let an = av[0] * face.normal[0] + av[1] * face.normal[1] + av[2] * face.normal[2];
        acc += face.measure * an * an;
    }
    acc.sqrt()
}

/// Max over `test_count` hat functions (plus 10 random combinations) and
/// components `i` of `|int A_{ji} d_j phi + int a_i phi| / |phi|_W12`.
pub fn weak_div_residual(
    a_skew: &SkewField,
    a: &VectorField,
    test_count: usize,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    check_same_mesh(&a_skew.mesh, &a.mesh)?;
    let mesh = &a.mesh;
    let interior = mesh.interior_vertices();
    if interior.is_empty() {
        return Err(Error::invalid("mesh has no interior vertices"));
    }
    let count = test_count.max(1).min(interior.len());
    let stride = interior.len() / count;
    let hats: Vec<usize> = (0..count).map(|k| interior[k * stride]).collect();

    let nv = mesh.vertex_count();
    let mut tests: Vec<Vec<f64>> = Vec::with_capacity(hats.len() + 10);
    for &v in &hats {
        let mut phi = vec![0.0f64; nv];
        phi[v] = 1.0;
        tests.push(phi);
    }
    // global random test functions: low-frequency sine combinations over
    // the bounding box, interpolated at interior vertices (these carry O(1)
    // mass and detect volume defects that single hats only see at O(h^2))
    let (lo, hi) = mesh.domain.bounding_box();
    let d = mesh.dim();
    for _ in 0..10 {
        let modes: Vec<([u32; 3], f64)> = (0..4)
            .map(|_| {
                let m = [
                    rng.gen_range(1..=3u32),
                    rng.gen_range(1..=3u32),
                    rng.gen_range(1..=3u32),
                ];
                (m, rng.gen_range(-1.0..1.0f64))
            })
            .collect();
        let mut phi = vec![0.0f64; nv];
        for v in 0..nv {
            if mesh.is_boundary_vertex(v) {
                continue;
            }
            let p = mesh.vertex(v);
            let mut acc = 0.0;
            for (m, c) in &modes {
                let mut prod = *c;
                for k in 0..d {
                    let t = (p[k] - lo[k]) / (hi[k] - lo[k]);
                    prod *= (std::f64::consts::PI * m[k] as f64 * t).sin();
                }
                acc += prod;
            }
            phi[v] = acc;
        }
        tests.push(phi);
    }

    let mut worst = 0.0f64;
    let mass_scale = 1.0 / ((d + 1) as f64 * (d + 2) as f64);
    for phi in &tests {
        let mut res = [0.0f64; 3];
        let mut grad2 = 0.0;
        let mut mass = 0.0;
        for c in 0..mesh.cell_count() {
            let vs = mesh.cell(c);
            if vs.iter().all(|&v| phi[v] == 0.0) {
                continue;
            }
            let grads = mesh.basis_gradients(c);
            let vol = mesh.volume(c);
            let mut g = [0.0f64; 3];
            let mut sum_phi = 0.0;
            let mut sum_phi2 = 0.0;
            for (loc, &v) in vs.iter().enumerate() {
                for k in 0..3 {
                    g[k] += phi[v] * grads[loc][k];
                }
                sum_phi += phi[v];
                sum_phi2 += phi[v] * phi[v];
            }
            // A^T grad phi = -A grad phi
            let ag = a_skew.apply(c, g);
            let ac = a.cell(c);
            let phibar = sum_phi / (d + 1) as f64;
            for k in 0..3 {
                res[k] += vol * (-ag[k] + ac[k] * phibar);
            }
            grad2 += vol * (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]);
            mass += vol * mass_scale * (sum_phi * sum_phi + sum_phi2);
        }
        let norm = (grad2 + mass).sqrt();
        if norm > 0.0 {
            for k in 0..d {
                worst = worst.max(res[k].abs() / norm);
            }
        }
    }
    Ok(worst)
}
