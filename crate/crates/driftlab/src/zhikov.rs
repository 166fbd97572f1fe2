//! The explicit nonuniqueness example on the unit ball in R^3:
//! drift `a = a0(x/|x|) x |x|^{-3}` and candidate `u = (1 - |x|^4) u0(x/|x|)`
//! with the sphere moments `int a0 = int u0 a0 = 0`, `int a0 u0^2 = -2`,
//! for which the bracket is `[u,u] = -int a u grad u dx = -1`: a strict
//! violation of the energy inequality that approximation solutions obey.
//!
//! The minimal-degree realization used here takes `u0 = omega_z` (degree 1)
//! and `a0 = beta (3 omega_z^2 - 1)` (zonal degree 2), with `beta` solved
//! from the cubic sphere moment, never hard-coded.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::{self, Functional, ScalarField, SkewField, VectorField};
use crate::mesh::{Domain, DomainKind, Mesh};
use crate::norms::{self, DriftSample, NormReport};
use crate::quad::sphere_quadrature;
use crate::solver::{self, SolveReport};
use crate::sparse::SolveOptions;

/// Real orthonormal spherical harmonic Y_l^m at a unit direction, l <= 4.
pub fn real_sh(l: u32, m: i32, omega: [f64; 3]) -> f64 {
    let (x, y, z) = (omega[0], omega[1], omega[2]);
    let ct = z;
    let st = (1.0 - z * z).max(0.0).sqrt();
    let phi = y.atan2(x);
    let ma = m.unsigned_abs();
    let plm = assoc_legendre(l, ma, ct, st);
    let norm = sh_norm(l, ma);
    if m == 0 {
        norm * plm
    } else if m > 0 {
        std::f64::consts::SQRT_2 * norm * plm * (ma as f64 * phi).cos()
    } else {
        std::f64::consts::SQRT_2 * norm * plm * (ma as f64 * phi).sin()
    }
}

fn sh_norm(l: u32, m: u32) -> f64 {
    let mut ratio = 1.0;
    for k in (l - m + 1)..=(l + m) {
        ratio *= k as f64;
    }
    ((2.0 * l as f64 + 1.0) / (4.0 * std::f64::consts::PI) / ratio).sqrt()
}

/// Associated Legendre P_l^m (no Condon-Shortley phase), l <= 4.
fn assoc_legendre(l: u32, m: u32, ct: f64, st: f64) -> f64 {
    debug_assert!(m <= l && l <= 4);
    // P_m^m = (2m-1)!! st^m, then upward recurrence in l
    let mut pmm = 1.0;
    let mut fact = 1.0;
    for _ in 0..m {
        pmm *= fact * st;
        fact += 2.0;
    }
    if l == m {
        return pmm;
    }
    let mut pm1 = ct * (2.0 * m as f64 + 1.0) * pmm;
    if l == m + 1 {
        return pm1;
    }
    let mut pm0 = pmm;
    for ll in (m + 2)..=l {
        let llf = ll as f64;
        let mf = m as f64;
        let p = ((2.0 * llf - 1.0) * ct * pm1 - (llf + mf - 1.0) * pm0) / (llf - mf);
        pm0 = pm1;
        pm1 = p;
    }
    pm1
}

/// The boundary data of the example: finite real spherical-harmonic
/// expansions for `u0` and `a0` (degree <= 4) plus the scaling applied
/// to `a0` so that the cubic moment is exactly -2.
#[derive(Debug, Clone, Serialize)]
pub struct SphericalPair {
    /// `(l, m, coefficient)` in the orthonormal real basis.
    pub u0_coefficients: Vec<(u32, i32, f64)>,
    pub a0_coefficients: Vec<(u32, i32, f64)>,
    /// Scaling applied to the a0 expansion.
    pub normalization: f64,
}

impl SphericalPair {
    pub fn u0(&self, omega: [f64; 3]) -> f64 {
        self.u0_coefficients
            .iter()
            .map(|&(l, m, c)| c * real_sh(l, m, omega))
            .sum()
    }

    pub fn a0(&self, omega: [f64; 3]) -> f64 {
        self.normalization
            * self
                .a0_coefficients
                .iter()
                .map(|&(l, m, c)| c * real_sh(l, m, omega))
                .sum::<f64>()
    }

    /// Surface stream function `psi` with `Delta_S psi = a0`:
    /// eigenfunction scaling `-1/(l(l+1))` per harmonic.
    fn psi(&self, omega: [f64; 3]) -> f64 {
        self.normalization
            * self
                .a0_coefficients
                .iter()
                .map(|&(l, m, c)| {
                    -c / (l as f64 * (l as f64 + 1.0)) * real_sh(l, m, omega)
                })
                .sum::<f64>()
    }

    /// Surface gradient of psi: ambient gradient of the 0-homogeneous
    /// extension `psi(x/|x|)`, evaluated at `omega` by central differences
    /// (tangential automatically).
    fn psi_surface_gradient(&self, omega: [f64; 3]) -> [f64; 3] {
        let h = 1e-6;
        let mut g = [0.0; 3];
        for k in 0..3 {
            let mut pp = omega;
            let mut pm = omega;
            pp[k] += h;
            pm[k] -= h;
            let np = (pp[0] * pp[0] + pp[1] * pp[1] + pp[2] * pp[2]).sqrt();
            let nm = (pm[0] * pm[0] + pm[1] * pm[1] + pm[2] * pm[2]).sqrt();
            let fp = self.psi([pp[0] / np, pp[1] / np, pp[2] / np]);
            let fm = self.psi([pm[0] / nm, pm[1] / nm, pm[2] / nm]);
            g[k] = (fp - fm) / (2.0 * h);
        }
        g
    }

    /// The three sphere moments `(int a0, int u0 a0, int a0 u0^2)`.
    pub fn moments(&self, polar_order: usize) -> (f64, f64, f64) {
        let quad = sphere_quadrature(polar_order, 2 * polar_order + 2);
        let mut m0 = 0.0;
        let mut m1 = 0.0;
        let mut m2 = 0.0;
        for &(omega, w) in &quad {
            let a = self.a0(omega);
            let u = self.u0(omega);
            m0 += w * a;
            m1 += w * u * a;
            m2 += w * a * u * u;
        }
        (m0, m1, m2)
    }
}

/// Build the minimal-degree pair: `u0` a degree-1 axis-aligned harmonic,
/// `a0` a zonal degree-2 harmonic scaled so `int_S a0 u0^2 = -2`.
pub fn build_pair() -> Result<SphericalPair> {
    // u0 = omega_z, a0 (unscaled) = 3 omega_z^2 - 1, expressed in the
    // orthonormal basis:
    let u0_coeff = (4.0 * std::f64::consts::PI / 3.0).sqrt();
    let a0_coeff = (16.0 * std::f64::consts::PI / 5.0).sqrt();
    let mut pair = SphericalPair {
        u0_coefficients: vec![(1, 0, u0_coeff)],
        a0_coefficients: vec![(2, 0, a0_coeff)],
        normalization: 1.0,
    };
    // solve the cubic moment for the scaling
    let quad = sphere_quadrature(10, 22);
    let mut cubic = 0.0;
    for &(omega, w) in &quad {
        let a = pair.a0(omega);
        let u = pair.u0(omega);
        cubic += w * a * u * u;
    }
    if cubic.abs() < 1e-12 {
        return Err(Error::invalid(
            "degenerate sphere quadrature: cubic moment below 1e-12",
        ));
    }
    pair.normalization = -2.0 / cubic;
    // verify the constraints at two quadrature orders
    for order in [6, 10] {
        let (m0, m1, m2) = pair.moments(order);
        if m0.abs() > 1e-10 || m1.abs() > 1e-10 || (m2 + 2.0).abs() > 1e-8 {
            return Err(Error::invalid(format!(
                "sphere moment constraints violated at order {order}: {m0:.2e} {m1:.2e} {m2:.8}"
            )));
        }
    }
    Ok(pair)
}

fn require_ball(mesh: &Arc<Mesh>) -> Result<()> {
    if mesh.domain.kind != DomainKind::UnitBall {
        return Err(Error::invalid("the example lives on the unit ball"));
    }
    Ok(())
}

fn check_rho(rho: f64) -> Result<()> {
    if !(rho > 0.0 && rho <= 0.1) {
        return Err(Error::invalid(format!(
            "excision radius must lie in (0, 0.1], got {rho}"
        )));
    }
    Ok(())
}

/// Cellwise drift `a = a0(x/|x|) x |x|^{-3}`, zeroed on cells whose
/// centroid lies inside the excision ball.
pub fn drift_field(pair: &SphericalPair, mesh: &Arc<Mesh>, rho: f64) -> Result<VectorField> {
    require_ball(mesh)?;
    check_rho(rho)?;
    Ok(VectorField::from_fn(mesh, |p| {
        let r = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
        if r < rho {
            return [0.0; 3];
        }
        let omega = [p[0] / r, p[1] / r, p[2] / r];
        let a0 = pair.a0(omega);
        let s = a0 / (r * r);
        [s * omega[0], s * omega[1], s * omega[2]]
    }))
}

/// Vertexwise candidate `u = (1 - |x|^4) u0(x/|x|)`; the origin vertex is
/// set to 0 (the radial limit is direction-dependent there) and snapped
/// boundary vertices are exactly 0.
pub fn candidate_solution(pair: &SphericalPair, mesh: &Arc<Mesh>) -> Result<ScalarField> {
    require_ball(mesh)?;
    let mut u = ScalarField::from_vertex_fn(mesh, |p| {
        let r = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
        if r == 0.0 {
            return 0.0;
        }
        (1.0 - r.powi(4)) * pair.u0([p[0] / r, p[1] / r, p[2] / r])
    });
    for v in 0..mesh.vertex_count() {
        if mesh.is_boundary_vertex(v) {
            u.values[v] = 0.0;
        }
    }
    Ok(u)
}

/// Skew potential of the drift: `A xi = w x xi` with
/// `w = (omega x grad_S psi)/r`, `Delta_S psi = a0`, excised like the
/// drift. Then `div A = a` away from the excision boundary.
///
/// (The ball line-integral potential degenerates identically here: the
/// drift is radial, so `a(tx) x tx = 0` along every ray.)
pub fn skew_potential(pair: &SphericalPair, mesh: &Arc<Mesh>, rho: f64) -> Result<SkewField> {
    require_ball(mesh)?;
    check_rho(rho)?;
    Ok(SkewField::from_axial_fn(mesh, |p| {
        let r = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
        if r < rho {
            return [0.0; 3];
        }
        let omega = [p[0] / r, p[1] / r, p[2] / r];
        let g = pair.psi_surface_gradient(omega);
        [
            (omega[1] * g[2] - omega[2] * g[1]) / r,
            (omega[2] * g[0] - omega[0] * g[2]) / r,
            (omega[0] * g[1] - omega[1] * g[0]) / r,
        ]
    }))
}

#[derive(Debug, Clone, Serialize)]
pub struct BracketReport {
    /// Quadrature of the analytic excised integrand `-a . u grad u`;
    /// converges to -1 as `(h, rho) -> 0`.
    pub value: f64,
    /// The naive cellwise pairing `-sum vol (a_c . grad u_h) u_bar` of the
    /// discrete fields. Diagnostic only: the interpolation error of the
    /// singular pairing keeps it away from -1 at any fixed `rho/h`.
    pub discrete_pairing: f64,
    pub resolution: u32,
    pub rho: f64,
}

/// `[u,u] = -int_{B_1 minus B_rho} a . u grad u dx` by cell quadrature.
pub fn bracket_value(pair: &SphericalPair, mesh: &Arc<Mesh>, rho: f64) -> Result<BracketReport> {
    require_ball(mesh)?;
    check_rho(rho)?;
    // analytic integrand: a . u grad u = -4 r (1 - r^4) a0 u0^2
    let mut value = 0.0;
    for c in 0..mesh.cell_count() {
        let p = mesh.centroid(c);
        let r = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
        if r < rho {
            continue;
        }
        let omega = [p[0] / r, p[1] / r, p[2] / r];
        let a0 = pair.a0(omega);
        let u0 = pair.u0(omega);
        value += mesh.volume(c) * 4.0 * r * (1.0 - r.powi(4)) * a0 * u0 * u0;
    }
    // diagnostic: pair the discrete fields directly
    let a = drift_field(pair, mesh, rho)?;
    let u = candidate_solution(pair, mesh)?;
    let mut discrete = 0.0;
    for c in 0..mesh.cell_count() {
        let ac = a.cell(c);
        let gu = field::gradient_on_cell(&u, c);
        let dot = ac[0] * gu[0] + ac[1] * gu[1] + ac[2] * gu[2];
        discrete -= mesh.volume(c) * dot * u.cell_mean(c);
    }
    Ok(BracketReport {
        value,
        discrete_pairing: discrete,
        resolution: mesh.resolution,
        rho,
    })
}

/// The right-hand side `f = L u_Z` in weak form: flux part `-grad u_Z`
/// (discrete) and density part `-(a . grad u_Z)` evaluated through the
/// bounded analytic product `a . grad u = -4 r a0 u0`, excised.
pub fn candidate_functional(
    pair: &SphericalPair,
    mesh: &Arc<Mesh>,
    rho: f64,
) -> Result<Functional> {
    require_ball(mesh)?;
    check_rho(rho)?;
    let u = candidate_solution(pair, mesh)?;
    let grad_u = field::gradient(&u)?;
    let flux = VectorField::new(mesh.clone(), grad_u.values.iter().map(|v| -v).collect())?;
    let density = ScalarField::from_cell_fn(mesh, |p| {
        let r = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
        if r < rho {
            return 0.0;
        }
        let omega = [p[0] / r, p[1] / r, p[2] / r];
        4.0 * r * pair.a0(omega) * pair.u0(omega)
    });
    Functional::from_parts(Some(density), Some(flux))
}

#[derive(Debug, Serialize)]
pub struct ZhikovReport {
    pub bracket: BracketReport,
    /// Energy defect `(f, u_Z) - int |grad u_Z|^2` of the candidate:
    /// converges to the bracket value -1 (strict energy violation).
    pub candidate_defect: f64,
    /// The approximation solution for the same f, driven through the skew
    /// potential of the excised drift.
    pub approximation: SolveReport,
    /// `|grad(u_approx - u_Z)|_2`: bounded away from zero, the two
    /// solutions genuinely differ.
    pub h1_gap: f64,
    pub norms: NormReport,
    pub reproduced: bool,
    pub verdict: String,
}

/// Classification ladder used for the drift criteria: (resolution, rho)
/// shrink together, which is what makes the divergent norms visible.
pub const CLASSIFY_LADDER: [(u32, f64); 2] = [(16, 0.1), (32, 0.05)];

/// Assemble the full dichotomy report at one (mesh, rho).
pub fn nonuniqueness_report(
    pair: &SphericalPair,
    mesh: &Arc<Mesh>,
    rho: f64,
    schedule: &[f64],
    opts: SolveOptions,
    tolerance: f64,
) -> Result<ZhikovReport> {
    let bracket = bracket_value(pair, mesh, rho)?;
    let u_z = candidate_solution(pair, mesh)?;
    let f = candidate_functional(pair, mesh, rho)?;
    let h1_uz = field::h1_seminorm(&u_z)?;
    let candidate_defect = f.apply(&u_z)? - h1_uz * h1_uz;

    let a_skew = skew_potential(pair, mesh, rho)?;
    let approximation = solver::approximation_solution(mesh, &a_skew, &f, schedule, opts)?;
    let h1_gap = field::h1_distance(&approximation.u, &u_z)?;

    let ladder: Vec<Arc<Mesh>> = CLASSIFY_LADDER
        .iter()
        .map(|&(r, _)| Mesh::build(Domain::new(DomainKind::UnitBall), r))
        .collect::<Result<_>>()?;
    let rhos: Vec<f64> = CLASSIFY_LADDER.iter().map(|&(_, r)| r).collect();
    let pair_clone = pair.clone();
    let norms = norms::classify_drift(&ladder, &move |m: &Arc<Mesh>| {
        let idx = ladder_index(m.resolution);
        DriftSample::Vector(
            drift_field(&pair_clone, m, rhos[idx]).expect("ladder meshes are unit balls"),
        )
    })?;

    let reproduced = (candidate_defect + 1.0).abs() <= tolerance
        && approximation.energy_defect >= -1e-6
        && (bracket.value + 1.0).abs() <= tolerance;
    let verdict = format!(
        "nonapproximation defect {:.3} (target -1 +- {:.0e}), approximation defect {:.1e} (>= -1e-6) reproduced: {}",
        candidate_defect,
        tolerance,
        approximation.energy_defect,
        if reproduced { "yes" } else { "no" }
    );
    Ok(ZhikovReport {
        bracket,
        candidate_defect,
        approximation,
        h1_gap,
        norms,
        reproduced,
        verdict,
    })
}

fn ladder_index(resolution: u32) -> usize {
    CLASSIFY_LADDER
        .iter()
        .position(|&(r, _)| r == resolution)
        .unwrap_or(CLASSIFY_LADDER.len() - 1)
}
