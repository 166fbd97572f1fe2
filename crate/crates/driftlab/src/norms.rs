//! Function-space diagnostics behind the uniqueness criteria: Lp norms and
//! their growth limit, exponential summability, BMO over dyadic cubes,
//! Morrey, grand Lebesgue and weak-Lp norms, the Hardy-Littlewood maximal
//! function, the Riesz potential, and the per-criterion drift classifier.
//!
//! Divergence cannot be read off a single discrete field, so the estimators
//! that must distinguish "finite" from "infinite" take the same function
//! sampled on a ladder of refined meshes and apply a stability convention:
//! an estimate (or its underlying moment) growing by a factor >= 1.5 under
//! one refinement of the two finest levels is flagged divergent.

use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::{Layout, ScalarField, SkewField, VectorField};
use crate::mesh::Mesh;

/// Growth factor across one refinement that flags an estimate as divergent.
pub const DIVERGENCE_RATIO: f64 = 1.5;

/// Stability threshold for the exponential-summability bisection.
pub const GAMMA_STABILITY_RATIO: f64 = 1.15;

/// Moment-stability threshold for selecting resolved Lp samples.
pub const MOMENT_STABILITY_RATIO: f64 = 1.4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Holds,
    Fails,
    Inconclusive,
}

/// Full diagnostic battery for one drift.
#[derive(Debug, Serialize)]
pub struct NormReport {
    /// `(p, |f|_p)` on the finest level.
    pub lp_samples: Vec<(f64, f64)>,
    /// Extrapolated `lim p^{-1} |f|_p`; infinite when the samples blow up.
    pub growth_limit_l: f64,
    /// Largest stable exponential-summability exponent.
    pub gamma_star: f64,
    pub bmo: f64,
    pub bmo_depth_profile: Vec<(u32, f64)>,
    pub morrey_n: f64,
    pub grand_lebesgue_n: f64,
    pub weak_n: f64,
    pub criteria: BTreeMap<String, Verdict>,
}

// ---------------------------------------------------------------------------
// Lp norms and the growth limit
// ---------------------------------------------------------------------------

/// log of `int |f|^p dx` by the log-sum-exp trick (vertex fields are
/// evaluated at the degree-2 quadrature points of each cell).
fn log_moment(f: &ScalarField, p: f64) -> f64 {
    let mesh = &f.mesh;
    let neg_inf = f64::NEG_INFINITY;
    let terms: Vec<f64> = match f.layout {
        Layout::Cell => (0..mesh.cell_count())
            .map(|c| {
                let v = f.values[c].abs();
                if v == 0.0 {
                    neg_inf
                } else {
                    mesh.volume(c).ln() + p * v.ln()
                }
            })
            .collect(),
        Layout::Vertex => {
            let quad = mesh.quadrature_deg2();
            (0..mesh.cell_count())
                .flat_map(|c| {
                    quad.iter()
                        .map(|(bary, w)| {
                            let v = f.eval_bary(c, bary).abs();
                            if v == 0.0 {
                                neg_inf
                            } else {
                                (mesh.volume(c) * w).ln() + p * v.ln()
                            }
                        })
                        .collect::<Vec<_>>()
                })
                .collect()
        }
    };
    let m = terms.iter().cloned().fold(neg_inf, f64::max);
    if m == neg_inf {
        return neg_inf;
    }
    let sum: f64 = terms.iter().map(|&t| (t - m).exp()).sum();
    m + sum.ln()
}

/// `(int |f|^p)^{1/p}` by quadrature. Monotone in `|f|` pointwise.
pub fn lp_norm(f: &ScalarField, p: f64) -> Result<f64> {
    if !(p >= 1.0) || !p.is_finite() {
        return Err(Error::invalid(format!("lp_norm needs 1 <= p < inf, got {p}")));
    }
    let lm = log_moment(f, p);
    if lm == f64::NEG_INFINITY {
        return Ok(0.0);
    }
    Ok((lm / p).exp())
}

#[derive(Debug, Serialize)]
pub struct GrowthLimit {
    /// `(p, p^{-1} |f|_p)` on the finest ladder level.
    pub samples: Vec<(f64, f64)>,
    /// Largest p whose moment was refinement-stable.
    pub resolved_p_max: f64,
    /// Richardson extrapolation over the largest resolved doubling pair;
    /// `None` when the samples grow under refinement (divergent).
    pub limit: Option<f64>,
}

impl GrowthLimit {
    pub fn value(&self) -> f64 {
        self.limit.unwrap_or(f64::INFINITY)
    }
}

/// Estimate `L = lim p^{-1} |f|_p` from the same function sampled on a
/// ladder of meshes (coarse to fine).
///
/// Moments at each p are cross-checked between the two finest levels;
/// unresolved samples (quadrature still growing) are excluded, and the
/// model `v(p) = L + c/p` is eliminated on the largest resolved pair
/// `(p, 2p)`. Divergent inputs keep no resolved samples and map to `None`.
pub fn growth_limit(ladder: &[ScalarField], p_max: f64) -> Result<GrowthLimit> {
    if ladder.len() < 2 {
        return Err(Error::invalid("growth_limit needs at least two ladder levels"));
    }
    if p_max < 16.0 {
        return Err(Error::invalid("p_max must be at least 16"));
    }
    let coarse = &ladder[ladder.len() - 2];
    let fine = &ladder[ladder.len() - 1];
    let mut ps = vec![4.0];
    let mut p = 8.0;
    while p <= p_max {
        ps.push(p);
        p *= 2.0;
    }
    let mut samples = Vec::new();
    let mut resolved = Vec::new();
    for &p in &ps {
        let lm_c = log_moment(coarse, p);
        let lm_f = log_moment(fine, p);
        let v = if lm_f == f64::NEG_INFINITY {
            0.0
        } else {
            (lm_f / p).exp() / p
        };
        samples.push((p, v));
        let ratio = (lm_f - lm_c).exp();
        if ratio < MOMENT_STABILITY_RATIO && ratio > 1.0 / MOMENT_STABILITY_RATIO {
            resolved.push((p, v));
        }
    }
    // Richardson needs a resolved doubling pair; fields whose only stable
    // moments sit at isolated small p (log-divergent quadrature) get none
    // and are flagged divergent.
    let mut best: Option<(f64, f64, f64)> = None;
    for i in 0..resolved.len() {
        for j in (i + 1)..resolved.len() {
            if (resolved[j].0 - 2.0 * resolved[i].0).abs() < 1e-9 {
                best = Some((resolved[i].0, resolved[i].1, resolved[j].1));
            }
        }
    }
    let limit = best.map(|(_, v1, v2)| (2.0 * v2 - v1).max(0.0));
    Ok(GrowthLimit {
        samples,
        resolved_p_max: resolved.last().map(|&(p, _)| p).unwrap_or(0.0),
        limit,
    })
}

/// Largest `gamma` for which `int exp(gamma |f|)` is stable under one mesh
/// refinement, by bisection; `+inf` for fields bounded on every level.
pub fn exp_gamma_star(ladder: &[ScalarField]) -> Result<f64> {
    if ladder.len() < 2 {
        return Err(Error::invalid("exp_gamma_star needs at least two ladder levels"));
    }
    let coarse = &ladder[ladder.len() - 2];
    let fine = &ladder[ladder.len() - 1];
    // bounded fields are exponentially summable for every gamma; detect
    // them by a refinement-stable maximum
    let max_of = |f: &ScalarField| f.values.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    let (mc, mf) = (max_of(coarse), max_of(fine));
    if mf <= mc * 1.08 + 1e-12 {
        return Ok(f64::INFINITY);
    }
    let log_exp_int = |f: &ScalarField, gamma: f64| -> f64 {
        let mesh = &f.mesh;
        let terms: Vec<f64> = (0..mesh.cell_count())
            .map(|c| mesh.volume(c).ln() + gamma * f.cell_mean(c).abs())
            .collect();
        let m = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        m + terms.iter().map(|&t| (t - m).exp()).sum::<f64>().ln()
    };
    let ratio = |gamma: f64| (log_exp_int(fine, gamma) - log_exp_int(coarse, gamma)).exp();
    let stable = |gamma: f64| ratio(gamma) < GAMMA_STABILITY_RATIO;
    let mut hi = 1.0;
    let max_gamma = 1024.0;
    while stable(hi) {
        hi *= 2.0;
        if hi > max_gamma {
            return Ok(f64::INFINITY);
        }
    }
    let mut lo = 0.0;
    if !stable(lo + 1e-6) {
        return Ok(0.0);
    }
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        if stable(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

// ---------------------------------------------------------------------------
// BMO
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct BmoReport {
    /// Supremum over all inspected cubes.
    pub value: f64,
    /// Running supremum per depth.
    pub profile: Vec<(u32, f64)>,
}

/// Mean-oscillation supremum over the dyadic cubes of the domain's bounding
/// box (and their half-shifted translates) that lie inside the domain, up
/// to `max_depth`. Cube means use the cellwise decomposition of the field.
pub fn bmo_norm(f: &ScalarField, max_depth: u32) -> Result<BmoReport> {
    let mesh = &f.mesh;
    let dim = mesh.dim();
    let (lo, hi) = mesh.domain.bounding_box();
    let box_side = (0..dim).map(|d| hi[d] - lo[d]).fold(0.0f64, f64::max);
    let min_side = box_side * 0.5f64.powi(max_depth as i32);
    if min_side < 2.0 * mesh.h() {
        return Err(Error::invalid(format!(
            "max_depth {max_depth} under-resolved: cube side {min_side:.3e} below 2h = {:.3e}",
            2.0 * mesh.h()
        )));
    }
    let ncells = mesh.cell_count();
    let mut cell_val = Vec::with_capacity(ncells);
    for c in 0..ncells {
        cell_val.push(f.cell_mean(c));
    }
    let shifts_1d = [-0.5f64, 0.0, 0.5];
    let mut profile = Vec::new();
    let mut best = 0.0f64;
    for depth in 0..=max_depth {
        let s = box_side * 0.5f64.powi(depth as i32);
        let cells_per_axis = (box_side / s).round() as i64 + 2;
        let n_keys = cells_per_axis.pow(dim as u32) as usize;
        let mut shift_vecs: Vec<[f64; 3]> = Vec::new();
        for &sx in &shifts_1d {
            for &sy in &shifts_1d {
                if dim == 2 {
                    shift_vecs.push([sx * s, sy * s, 0.0]);
                } else {
                    for &sz in &shifts_1d {
                        shift_vecs.push([sx * s, sy * s, sz * s]);
                    }
                }
            }
        }
        let mut keys = vec![usize::MAX; ncells];
        let mut vol_acc = vec![0.0f64; n_keys];
        let mut val_acc = vec![0.0f64; n_keys];
        let mut dev_acc = vec![0.0f64; n_keys];
        for shift in &shift_vecs {
            for x in vol_acc.iter_mut() {
                *x = 0.0;
            }
            for x in val_acc.iter_mut() {
                *x = 0.0;
            }
            for x in dev_acc.iter_mut() {
                *x = 0.0;
            }
            for c in 0..ncells {
                let cen = mesh.centroid(c);
                let mut key = 0usize;
                let mut inside = true;
                let mut corner = [0.0f64; 3];
                for d in 0..dim {
                    let idx = ((cen[d] - lo[d] - shift[d]) / s).floor();
                    corner[d] = lo[d] + shift[d] + idx * s;
                    let i = idx as i64 + 1; // offset so shifted cubes stay nonnegative
                    if i < 0 || i >= cells_per_axis {
                        inside = false;
                        break;
                    }
                    key = key * cells_per_axis as usize + i as usize;
                }
                if inside && mesh.domain.contains_cube(corner, s) {
                    keys[c] = key;
                    vol_acc[key] += mesh.volume(c);
                    val_acc[key] += mesh.volume(c) * cell_val[c];
                } else {
                    keys[c] = usize::MAX;
                }
            }
            for c in 0..ncells {
                let key = keys[c];
                if key != usize::MAX {
                    let mean = val_acc[key] / vol_acc[key];
                    dev_acc[key] += mesh.volume(c) * (cell_val[c] - mean).abs();
                }
            }
            // only count cubes that are essentially filled by mesh cells
            let full = s.powi(dim as i32);
            for k in 0..n_keys {
                if vol_acc[k] > 0.9 * full {
                    best = best.max(dev_acc[k] / vol_acc[k]);
                }
            }
        }
        profile.push((depth, best));
    }
    Ok(BmoReport { value: best, profile })
}

// ---------------------------------------------------------------------------
// Morrey, grand Lebesgue, weak Lp
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct MorreyReport {
    pub value: f64,
    pub max_center: [f64; 3],
    pub max_radius: f64,
}

/// `sup_R R^{-n(1-1/p)} int_{Omega cap B_R} |f|` over balls centered at
/// mesh vertices with dyadic radii `diam * 2^{-k} >= 2h`.
///
/// Small meshes scan every vertex; large meshes run a two-phase search
/// (spatially uniform candidate centers, then every vertex near the top
/// candidates), since one center costs a pass over all cells.
pub fn morrey_norm(f: &ScalarField, p: f64) -> Result<MorreyReport> {
    if !(1.0..=f64::INFINITY).contains(&p) {
        return Err(Error::invalid("morrey_norm needs 1 <= p <= inf"));
    }
    let mesh = &f.mesh;
    let n = mesh.dim() as f64;
    let exponent = if p.is_infinite() { n } else { n * (1.0 - 1.0 / p) };
    let diam = mesh.domain.diameter();
    let mut radii = Vec::new();
    let mut r = diam;
    while r >= 2.0 * mesh.h() {
        radii.push(r);
        r *= 0.5;
    }
    if radii.is_empty() {
        radii.push(diam);
    }
    let ncells = mesh.cell_count();
    let mut mass = Vec::with_capacity(ncells);
    let mut centroids = Vec::with_capacity(ncells * 3);
    for c in 0..ncells {
        mass.push(mesh.volume(c) * f.cell_mean(c).abs());
        let cen = mesh.centroid(c);
        centroids.extend_from_slice(&cen);
    }
    let r2: Vec<f64> = radii.iter().map(|&r| r * r).collect();
    let evaluate = |x: [f64; 3]| -> (f64, usize) {
        let mut sums = vec![0.0f64; radii.len()];
        for c in 0..ncells {
            let dx = centroids[c * 3] - x[0];
            let dy = centroids[c * 3 + 1] - x[1];
            let dz = centroids[c * 3 + 2] - x[2];
            let d2 = dx * dx + dy * dy + dz * dz;
            // radii are sorted decreasing: find the smallest ball containing c
            let mut k = 0;
            while k < r2.len() && d2 < r2[k] {
                k += 1;
            }
            // c is inside radii[0..k]
            if k > 0 {
                sums[k - 1] += mass[c];
            }
        }
        // suffix sums turn "smallest containing ball" into "inside ball k"
        for k in (0..sums.len().saturating_sub(1)).rev() {
            sums[k] += sums[k + 1];
        }
        let mut best = 0.0;
        let mut best_k = 0;
        for (k, &s) in sums.iter().enumerate() {
            let val = s * radii[k].powf(-exponent);
            if val > best {
                best = val;
                best_k = k;
            }
        }
        (best, best_k)
    };
    let nv = mesh.vertex_count();
    let centers: Vec<usize> = if (nv as u64) * (ncells as u64) <= 2_000_000_000 {
        (0..nv).collect()
    } else {
        two_phase_centers(mesh, &evaluate)
    };
    let per_center: Vec<(f64, usize)> = centers
        .par_iter()
        .map(|&v| evaluate(mesh.vertex(v)))
        .collect();
    let mut value = 0.0;
    let mut max_center = [0.0; 3];
    let mut max_radius = radii[0];
    for (&v, &(val, k)) in centers.iter().zip(&per_center) {
        if val > value {
            value = val;
            max_center = mesh.vertex(v);
            max_radius = radii[k];
        }
    }
    Ok(MorreyReport {
        value,
        max_center,
        max_radius,
    })
}

/// Candidate centers for the two-phase supremum: one vertex per coarse
/// spatial bucket, plus every vertex near the best-scoring buckets.
fn two_phase_centers(mesh: &Arc<Mesh>, evaluate: &(dyn Fn([f64; 3]) -> (f64, usize) + Sync)) -> Vec<usize> {
    let (lo, hi) = mesh.domain.bounding_box();
    let dim = mesh.dim();
    let buckets_per_axis = 16usize;
    let side = (0..dim)
        .map(|d| (hi[d] - lo[d]) / buckets_per_axis as f64)
        .fold(0.0f64, f64::max);
    let key_of = |p: [f64; 3]| -> usize {
        let mut key = 0;
        for d in 0..dim {
            let i = (((p[d] - lo[d]) / side).floor() as i64)
                .clamp(0, buckets_per_axis as i64 - 1) as usize;
            key = key * buckets_per_axis + i;
        }
        key
    };
    let nbuckets = buckets_per_axis.pow(dim as u32);
    let mut representative = vec![usize::MAX; nbuckets];
    for v in 0..mesh.vertex_count() {
        let key = key_of(mesh.vertex(v));
        if representative[key] == usize::MAX {
            representative[key] = v;
        }
    }
    let coarse: Vec<usize> = representative.into_iter().filter(|&v| v != usize::MAX).collect();
    let scored: Vec<(f64, usize)> = coarse
        .par_iter()
        .map(|&v| (evaluate(mesh.vertex(v)).0, v))
        .collect();
    let mut ranked = scored;
    ranked.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    let top: Vec<[f64; 3]> = ranked.iter().take(10).map(|&(_, v)| mesh.vertex(v)).collect();
    let reach = 1.5 * side;
    let mut centers: Vec<usize> = (0..mesh.vertex_count())
        .filter(|&v| {
            let p = mesh.vertex(v);
            top.iter().any(|t| {
                let d2: f64 = (0..3).map(|k| (p[k] - t[k]).powi(2)).sum();
                d2 <= reach * reach
            })
        })
        .collect();
    for &(_, v) in &ranked {
        centers.push(v);
    }
    centers.sort_unstable();
    centers.dedup();
    centers
}

/// Grand Lebesgue norm
/// `sup_{1 <= s < n} ((n-s) |Omega|^{-1} int |f|^s)^{1/s}`, sampled on the
/// grid `s in {1, 1+delta, ..., n-delta}` with `delta = 2^{-6} (n-1)`.
pub fn grand_lebesgue_norm(f: &ScalarField, n: usize) -> Result<f64> {
    let mesh = &f.mesh;
    if n != mesh.dim() {
        return Err(Error::invalid("grand_lebesgue_norm: n must equal the dimension"));
    }
    let nf = n as f64;
    let delta = (nf - 1.0) * 0.5f64.powi(6);
    let omega = mesh.total_volume();
    let mut best = 0.0f64;
    let mut s = 1.0;
    while s <= nf - delta + 1e-12 {
        let lm = log_moment(f, s);
        let val = if lm == f64::NEG_INFINITY {
            0.0
        } else {
            (((nf - s).ln() - omega.ln() + lm) / s).exp()
        };
        best = best.max(val);
        s += delta;
    }
    Ok(best)
}

/// Weak-Lp norm `sup_t t |{|f| > t}|^{1/p}` from the sorted cell values.
pub fn weak_lp_norm(f: &ScalarField, p: f64) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(Error::invalid("weak_lp_norm needs p >= 1"));
    }
    let mesh = &f.mesh;
    let mut pairs: Vec<(f64, f64)> = (0..mesh.cell_count())
        .map(|c| (f.cell_mean(c).abs(), mesh.volume(c)))
        .collect();
    pairs.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    let mut cum = 0.0;
    let mut best = 0.0f64;
    for (v, vol) in pairs {
        cum += vol;
        best = best.max(v * cum.powf(1.0 / p));
    }
    Ok(best)
}

// ---------------------------------------------------------------------------
// Maximal function and Riesz potential
// ---------------------------------------------------------------------------

/// Centered Hardy-Littlewood maximal function of the zero-extension of `f`,
/// evaluated at mesh vertices over the radius grid `{h 2^k}` up to the
/// domain diameter. Ball averages divide by the full ball volume (the
/// extension vanishes outside the domain).
pub fn maximal_function(f: &ScalarField) -> ScalarField {
    let mesh = &f.mesh;
    let n = mesh.dim();
    let diam = mesh.domain.diameter();
    let mut radii = Vec::new();
    let mut r = mesh.h();
    while r < diam {
        radii.push(r);
        r *= 2.0;
    }
    radii.push(diam);
    radii.reverse(); // decreasing, for the suffix-sum trick
    let r2: Vec<f64> = radii.iter().map(|&r| r * r).collect();
    let unit_ball = if n == 2 {
        std::f64::consts::PI
    } else {
        4.0 * std::f64::consts::PI / 3.0
    };
    let ncells = mesh.cell_count();
    let mut mass = Vec::with_capacity(ncells);
    let mut centroids = Vec::with_capacity(ncells * 3);
    for c in 0..ncells {
        mass.push(mesh.volume(c) * f.cell_mean(c).abs());
        centroids.extend_from_slice(&mesh.centroid(c));
    }
    let values: Vec<f64> = (0..mesh.vertex_count())
        .into_par_iter()
        .map(|v| {
            let x = mesh.vertex(v);
            let mut sums = vec![0.0f64; radii.len()];
            for c in 0..ncells {
                let dx = centroids[c * 3] - x[0];
                let dy = centroids[c * 3 + 1] - x[1];
                let dz = centroids[c * 3 + 2] - x[2];
                let d2 = dx * dx + dy * dy + dz * dz;
                let mut k = 0;
                while k < r2.len() && d2 < r2[k] {
                    k += 1;
                }
                if k > 0 {
                    sums[k - 1] += mass[c];
                }
            }
            for k in (0..sums.len().saturating_sub(1)).rev() {
                sums[k] += sums[k + 1];
            }
            let mut best = 0.0f64;
            for (k, &s) in sums.iter().enumerate() {
                best = best.max(s / (unit_ball * radii[k].powi(n as i32)));
            }
            best
        })
        .collect();
    ScalarField {
        mesh: mesh.clone(),
        layout: Layout::Vertex,
        values,
    }
}

/// Riesz potential `I f(x) = int |x-y|^{1-n} |f(y)| dy` at mesh vertices.
/// Near cells are integrated by graded midpoint subdivision (the kernel is
/// integrable).
pub fn riesz_potential(f: &ScalarField) -> ScalarField {
    let points: Vec<[f64; 3]> = (0..f.mesh.vertex_count()).map(|v| f.mesh.vertex(v)).collect();
    let values = riesz_potential_at(f, &points);
    ScalarField {
        mesh: f.mesh.clone(),
        layout: Layout::Vertex,
        values,
    }
}

/// Riesz potential at selected evaluation points (one pass over all cells
/// per point).
pub fn riesz_potential_at(f: &ScalarField, points: &[[f64; 3]]) -> Vec<f64> {
    let mesh = &f.mesh;
    let n = mesh.dim();
    let ncells = mesh.cell_count();
    let mut absval = Vec::with_capacity(ncells);
    let mut centroids = Vec::with_capacity(ncells * 3);
    let mut diams = Vec::with_capacity(ncells);
    for c in 0..ncells {
        absval.push(f.cell_mean(c).abs());
        centroids.extend_from_slice(&mesh.centroid(c));
        let vs = mesh.cell(c);
        let mut m = 0.0f64;
        for i in 0..=n {
            for j in (i + 1)..=n {
                let p = mesh.vertex(vs[i]);
                let q = mesh.vertex(vs[j]);
                let d2: f64 = (0..3).map(|k| (p[k] - q[k]).powi(2)).sum();
                m = m.max(d2);
            }
        }
        diams.push(m.sqrt());
    }
    let kexp = (n as f64) - 1.0;
    points
        .par_iter()
        .map(|&x| {
            let mut acc = 0.0f64;
            for c in 0..ncells {
                if absval[c] == 0.0 {
                    continue;
                }
                let dx = centroids[c * 3] - x[0];
                let dy = centroids[c * 3 + 1] - x[1];
                let dz = centroids[c * 3 + 2] - x[2];
                let dist = (dx * dx + dy * dy + dz * dz).sqrt();
                if dist > 2.0 * diams[c] {
                    acc += absval[c] * mesh.volume(c) / dist.powf(kexp);
                } else {
                    acc += absval[c] * near_riesz(mesh, c, x, kexp, 3);
                }
            }
            acc
        })
        .collect()
}

fn near_riesz(mesh: &Arc<Mesh>, c: usize, x: [f64; 3], kexp: f64, depth: usize) -> f64 {
    let n = mesh.dim();
    let vs = mesh.cell(c);
    let mut pts = [[0.0f64; 3]; 4];
    for (i, &v) in vs.iter().enumerate() {
        pts[i] = mesh.vertex(v);
    }
    near_riesz_rec(&pts[..=n], x, kexp, depth)
}

fn near_riesz_rec(pts: &[[f64; 3]], x: [f64; 3], kexp: f64, depth: usize) -> f64 {
    let n = pts.len() - 1;
    let vol = simplex_volume(pts);
    if depth == 0 {
        let mut cen = [0.0f64; 3];
        for p in pts {
            for k in 0..3 {
                cen[k] += p[k] / pts.len() as f64;
            }
        }
        let d2: f64 = (0..3).map(|k| (x[k] - cen[k]).powi(2)).sum();
        let reg = if n == 2 {
            (vol / std::f64::consts::PI).sqrt()
        } else {
            (3.0 * vol / (4.0 * std::f64::consts::PI)).powf(1.0 / 3.0)
        };
        return vol / d2.sqrt().max(0.5 * reg).powf(kexp);
    }
    let mid = |a: [f64; 3], b: [f64; 3]| {
        [
            (a[0] + b[0]) / 2.0,
            (a[1] + b[1]) / 2.0,
            (a[2] + b[2]) / 2.0,
        ]
    };
    let mut acc = 0.0;
    if n == 2 {
        let (v0, v1, v2) = (pts[0], pts[1], pts[2]);
        let (m01, m02, m12) = (mid(v0, v1), mid(v0, v2), mid(v1, v2));
        for s in [
            [v0, m01, m02],
            [v1, m01, m12],
            [v2, m02, m12],
            [m01, m02, m12],
        ] {
            acc += near_riesz_rec(&s, x, kexp, depth - 1);
        }
    } else {
        let (v0, v1, v2, v3) = (pts[0], pts[1], pts[2], pts[3]);
        let m01 = mid(v0, v1);
        let m02 = mid(v0, v2);
        let m03 = mid(v0, v3);
        let m12 = mid(v1, v2);
        let m13 = mid(v1, v3);
        let m23 = mid(v2, v3);
        for s in [
            [v0, m01, m02, m03],
            [v1, m01, m12, m13],
            [v2, m02, m12, m23],
            [v3, m03, m13, m23],
            [m01, m02, m03, m13],
            [m01, m02, m12, m13],
            [m02, m03, m13, m23],
            [m02, m12, m13, m23],
        ] {
            acc += near_riesz_rec(&s, x, kexp, depth - 1);
        }
    }
    acc
}

fn simplex_volume(pts: &[[f64; 3]]) -> f64 {
    if pts.len() == 3 {
        let a = [pts[1][0] - pts[0][0], pts[1][1] - pts[0][1], pts[1][2] - pts[0][2]];
        let b = [pts[2][0] - pts[0][0], pts[2][1] - pts[0][1], pts[2][2] - pts[0][2]];
        let cx = a[1] * b[2] - a[2] * b[1];
        let cy = a[2] * b[0] - a[0] * b[2];
        let cz = a[0] * b[1] - a[1] * b[0];
        0.5 * (cx * cx + cy * cy + cz * cz).sqrt()
    } else {
        let a = [pts[1][0] - pts[0][0], pts[1][1] - pts[0][1], pts[1][2] - pts[0][2]];
        let b = [pts[2][0] - pts[0][0], pts[2][1] - pts[0][1], pts[2][2] - pts[0][2]];
        let c = [pts[3][0] - pts[0][0], pts[3][1] - pts[0][1], pts[3][2] - pts[0][2]];
        ((a[0] * (b[1] * c[2] - b[2] * c[1]) - a[1] * (b[0] * c[2] - b[2] * c[0])
            + a[2] * (b[0] * c[1] - b[1] * c[0]))
            / 6.0)
            .abs()
    }
}

/// Upper bound of the potential estimate
/// `|I f|_q <= ((1-d)/(mu-d))^{1-d} w_n^{1-mu} |Omega|^{mu-d} |f|_p`,
/// `d = 1/p - 1/q < mu = 1/n`.
pub fn riesz_lq_bound(n: usize, p: f64, q: f64, omega_measure: f64, f_lp: f64) -> Option<f64> {
    let mu = 1.0 / n as f64;
    let delta = 1.0 / p - 1.0 / q;
    if !(0.0..mu).contains(&delta) {
        return None;
    }
    let w_n = if n == 2 {
        std::f64::consts::PI
    } else {
        4.0 * std::f64::consts::PI / 3.0
    };
    Some(
        ((1.0 - delta) / (mu - delta)).powf(1.0 - delta)
            * w_n.powf(1.0 - mu)
            * omega_measure.powf(mu - delta)
            * f_lp,
    )
}

// ---------------------------------------------------------------------------
// Drift classification
// ---------------------------------------------------------------------------

/// A drift sampled on one mesh, either as a vector field or as a skew
/// matrix field (the Frobenius norm is the pointwise magnitude).
pub enum DriftSample {
    Vector(VectorField),
    Skew(SkewField),
}

impl DriftSample {
    pub fn magnitude(&self) -> ScalarField {
        match self {
            DriftSample::Vector(a) => a.magnitude(),
            DriftSample::Skew(a) => a.magnitude(),
        }
    }
}

/// Classify a drift against every uniqueness criterion, using the same
/// drift sampled on a refinement ladder of meshes.
///
/// Criterion names: `Linf`, `ZC` (o(p) growth), `ZC1` (O(p) growth /
/// exp-summability), `L2`, `Ln`, `Mn` (Morrey), `GrandLn` (the eps^{1/n}
/// limit), `T2` (sqrt(eps) limit, n = 2 only), `AC` (L^{2n/(n+2)}, n >= 3).
pub fn classify_drift(
    meshes: &[Arc<Mesh>],
    sampler: &dyn Fn(&Arc<Mesh>) -> DriftSample,
) -> Result<NormReport> {
    classify_magnitude(meshes, &|m| sampler(m).magnitude())
}

/// Same classification from the pointwise magnitude alone.
pub fn classify_magnitude(
    meshes: &[Arc<Mesh>],
    sampler: &dyn Fn(&Arc<Mesh>) -> ScalarField,
) -> Result<NormReport> {
    if meshes.len() < 2 {
        return Err(Error::invalid("classify_drift needs a ladder of >= 2 meshes"));
    }
    let n = meshes[0].dim();
    let nf = n as f64;
    let mags: Vec<ScalarField> = meshes.iter().map(|m| sampler(m)).collect();
    let fine = &mags[mags.len() - 1];
    let coarse = &mags[mags.len() - 2];
    let mut criteria = BTreeMap::new();

    // Linf: compare max values across levels
    let max_fine = fine.values.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    let max_coarse = coarse.values.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    criteria.insert(
        "Linf".to_string(),
        ratio_verdict(max_fine / max_coarse.max(1e-300)),
    );

    // moment-based criteria: L2, Ln, AC
    let mut moment_criterion = |name: &str, p: f64, enabled: bool| {
        if !enabled {
            return;
        }
        let mc = log_moment(coarse, p);
        let mf = log_moment(fine, p);
        let ratio = (mf - mc).exp();
        criteria.insert(name.to_string(), ratio_verdict(ratio));
    };
    moment_criterion("L2", 2.0, true);
    moment_criterion("Ln", nf, n >= 3);
    moment_criterion("AC", 2.0 * nf / (nf + 2.0), n >= 3);

    // growth limit (ZC / ZC1)
    let gl = growth_limit(&mags, 64.0)?;
    let l_value = gl.value();
    criteria.insert(
        "ZC1".to_string(),
        if l_value.is_finite() {
            Verdict::Holds
        } else {
            Verdict::Fails
        },
    );
    criteria.insert(
        "ZC".to_string(),
        if l_value.is_finite() && l_value <= 1e-3 {
            Verdict::Holds
        } else if l_value.is_finite() {
            Verdict::Inconclusive
        } else {
            Verdict::Fails
        },
    );

    // Morrey M^n with refinement stability
    let morrey_coarse = morrey_norm(coarse, nf)?;
    let morrey_fine = morrey_norm(fine, nf)?;
    criteria.insert(
        "Mn".to_string(),
        ratio_verdict(morrey_fine.value / morrey_coarse.value.max(1e-300)),
    );

    // eps-limit criteria: fit eps^{1/n} |a|_{n-eps} on eps = 2^{-k};
    // verdict combines the fitted slope sign with refinement stability.
    let eps_limit = |field: &ScalarField, root: f64| -> Vec<(f64, f64)> {
        (0..=6)
            .map(|k| {
                let eps = 0.5f64.powi(k);
                let p = (nf - eps).max(1.0);
                let lm = log_moment(field, p);
                let v = if lm == f64::NEG_INFINITY {
                    0.0
                } else {
                    (eps.ln() / root + lm / p).exp()
                };
                (eps, v)
            })
            .collect()
    };
    let c2_fine = eps_limit(fine, nf);
    let c2_coarse = eps_limit(coarse, nf);
    criteria.insert(
        "GrandLn".to_string(),
        eps_verdict(&c2_coarse, &c2_fine),
    );
    if n == 2 {
        let t2_fine = eps_limit(fine, 2.0);
        let t2_coarse = eps_limit(coarse, 2.0);
        // Theorem-2-style condition requires the limit to be zero, not
        // merely finite: ask for a decisively positive slope as eps -> 0
        let v = match eps_verdict(&t2_coarse, &t2_fine) {
            Verdict::Fails => Verdict::Fails,
            _ => {
                let slope = fitted_slope(&t2_fine);
                if slope > 0.1 {
                    Verdict::Holds
                } else {
                    Verdict::Inconclusive
                }
            }
        };
        criteria.insert("T2".to_string(), v);
    }

    // report values on the finest level
    let lp_samples: Vec<(f64, f64)> = [1.0, 2.0, 4.0, 8.0, 16.0]
        .iter()
        .map(|&p| (p, lp_norm(fine, p).unwrap_or(f64::NAN)))
        .collect();
    let gamma_star = exp_gamma_star(&mags)?;
    let bmo = bmo_for_domain(fine);
    let grand = grand_lebesgue_norm(fine, n)?;
    let weak = weak_lp_norm(fine, nf)?;

    Ok(NormReport {
        lp_samples,
        growth_limit_l: l_value,
        gamma_star,
        bmo: bmo.as_ref().map(|b| b.value).unwrap_or(f64::NAN),
        bmo_depth_profile: bmo.map(|b| b.profile).unwrap_or_default(),
        morrey_n: morrey_fine.value,
        grand_lebesgue_n: grand,
        weak_n: weak,
        criteria,
    })
}

fn bmo_for_domain(f: &ScalarField) -> Option<BmoReport> {
    // pick the deepest resolvable profile up to depth 6
    let mesh = &f.mesh;
    let (lo, hi) = mesh.domain.bounding_box();
    let box_side = (0..mesh.dim()).map(|d| hi[d] - lo[d]).fold(0.0f64, f64::max);
    let mut depth = 0u32;
    while depth < 6 && box_side * 0.5f64.powi(depth as i32 + 1) >= 2.0 * mesh.h() {
        depth += 1;
    }
    bmo_norm(f, depth).ok()
}

fn ratio_verdict(ratio: f64) -> Verdict {
    if ratio >= DIVERGENCE_RATIO {
        Verdict::Fails
    } else if ratio <= 1.2 {
        Verdict::Holds
    } else {
        Verdict::Inconclusive
    }
}

fn fitted_slope(samples: &[(f64, f64)]) -> f64 {
    // least-squares slope of log v against log eps over nonzero samples
    let pts: Vec<(f64, f64)> = samples
        .iter()
        .filter(|&&(_, v)| v > 0.0)
        .map(|&(e, v)| (e.ln(), v.ln()))
        .collect();
    if pts.len() < 2 {
        return 0.0;
    }
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

fn eps_verdict(coarse: &[(f64, f64)], fine: &[(f64, f64)]) -> Verdict {
    // stability at the smallest eps across refinement
    let (_, vc) = coarse[coarse.len() - 1];
    let (_, vf) = fine[fine.len() - 1];
    if vc > 0.0 && vf / vc >= DIVERGENCE_RATIO {
        return Verdict::Fails;
    }
    // finite limit: slope >= 0 as eps -> 0 (value does not blow up)
    let slope = fitted_slope(fine);
    if slope >= -0.05 {
        Verdict::Holds
    } else {
        Verdict::Inconclusive
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{Domain, DomainKind};

    fn disk(r: u32) -> Arc<Mesh> {
        Mesh::build(Domain::new(DomainKind::UnitDisk), r).unwrap()
    }

    fn square(r: u32) -> Arc<Mesh> {
        Mesh::build(Domain::new(DomainKind::UnitSquare), r).unwrap()
    }

    fn ball(r: u32) -> Arc<Mesh> {
        Mesh::build(Domain::new(DomainKind::UnitBall), r).unwrap()
    }

    fn neg_log_r(mesh: &Arc<Mesh>) -> ScalarField {
        ScalarField::from_cell_fn(mesh, |p| {
            let r = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
            -r.max(1e-300).ln()
        })
    }

    #[test]
    fn lp_of_constants_and_linear() {
        let mesh = square(8);
        let one = ScalarField::from_vertex_fn(&mesh, |_| 1.0);
        assert!((lp_norm(&one, 7.0).unwrap() - 1.0).abs() < 1e-12);
        let x = ScalarField::from_vertex_fn(&mesh, |p| p[0]);
        // degree-2 quadrature integrates x^2 exactly
        assert!((lp_norm(&x, 2.0).unwrap() - 1.0 / 3f64.sqrt()).abs() < 1e-10);
        assert!(lp_norm(&x, 0.5).is_err());
    }

    #[test]
    fn lp_of_neg_log_r_matches_gamma_moment() {
        // closed form: int |log r|^p = 2 pi int_0^inf t^p e^{-2t} dt = pi p! / 2^p
        let mesh = disk(128);
        let f = neg_log_r(&mesh);
        let expect = (std::f64::consts::PI * 24.0 / 16.0).powf(0.25);
        let got = lp_norm(&f, 4.0).unwrap();
        assert!(
            (got - expect).abs() / expect < 2e-2,
            "got {got}, expect {expect}"
        );
    }

    #[test]
    fn growth_limit_of_bounded_field_vanishes() {
        let ladder: Vec<ScalarField> = [16u32, 32]
            .iter()
            .map(|&r| ScalarField::from_cell_fn(&disk(r), |_| 5.0))
            .collect();
        let gl = growth_limit(&ladder, 64.0).unwrap();
        let l = gl.limit.expect("bounded field is stable");
        assert!(l < 0.2, "L = {l}");
    }

    #[test]
    fn growth_limit_of_neg_log_r() {
        let ladder: Vec<ScalarField> = [256u32, 512]
            .iter()
            .map(|&r| neg_log_r(&disk(r)))
            .collect();
        let gl = growth_limit(&ladder, 64.0).unwrap();
        let l = gl.limit.expect("log singularity is exp-summable");
        let target = 0.5 / std::f64::consts::E;
        assert!(
            (l - target).abs() / target < 0.1,
            "L = {l}, target {target}"
        );
    }

    #[test]
    fn growth_limit_flags_power_singularity() {
        // r^{-1/2} has infinite L^p norms for p >= 4
        let ladder: Vec<ScalarField> = [64u32, 128]
            .iter()
            .map(|&r| {
                ScalarField::from_cell_fn(&disk(r), |p| {
                    let rr = (p[0] * p[0] + p[1] * p[1]).sqrt();
                    1.0 / rr.sqrt()
                })
            })
            .collect();
        let gl = growth_limit(&ladder, 64.0).unwrap();
        assert!(gl.limit.is_none(), "samples {:?}", gl.samples);
        assert!(gl.value().is_infinite());
    }

    #[test]
    fn gamma_star_bounded_is_infinite() {
        let ladder: Vec<ScalarField> = [8u32, 16]
            .iter()
            .map(|&r| ScalarField::from_cell_fn(&disk(r), |p| p[0]))
            .collect();
        assert!(exp_gamma_star(&ladder).unwrap().is_infinite());
    }

    #[test]
    fn gamma_star_of_neg_log_r_near_two() {
        let ladder: Vec<ScalarField> = [128u32, 256]
            .iter()
            .map(|&r| neg_log_r(&disk(r)))
            .collect();
        let g = exp_gamma_star(&ladder).unwrap();
        assert!((g - 2.0).abs() / 2.0 < 0.15, "gamma* = {g}");
    }

    #[test]
    fn bmo_of_constant_is_zero() {
        let mesh = square(32);
        let f = ScalarField::from_cell_fn(&mesh, |_| 3.5);
        let rep = bmo_norm(&f, 3).unwrap();
        assert!(rep.value.abs() < 1e-14);
    }

    #[test]
    fn bmo_affine_invariance() {
        let mesh = square(64);
        let f = ScalarField::from_cell_fn(&mesh, |p| {
            ((p[0] - 0.5).powi(2) + (p[1] - 0.5).powi(2)).sqrt().max(1e-12).ln()
        });
        let base = bmo_norm(&f, 4).unwrap().value;
        let shifted = bmo_norm(&f.map(|v| v + 11.0), 4).unwrap().value;
        let scaled = bmo_norm(&f.map(|v| -2.0 * v), 4).unwrap().value;
        assert!((base - shifted).abs() < 1e-12);
        assert!((scaled - 2.0 * base).abs() < 1e-12);
    }

    #[test]
    fn bmo_depth_gate() {
        let mesh = square(8);
        let f = ScalarField::from_cell_fn(&mesh, |p| p[0]);
        assert!(bmo_norm(&f, 6).is_err());
        assert!(bmo_norm(&f, 1).is_ok());
    }

    #[test]
    fn bmo_profile_nondecreasing() {
        let mesh = square(128);
        let f = ScalarField::from_cell_fn(&mesh, |p| {
            ((p[0] - 0.5).powi(2) + (p[1] - 0.5).powi(2)).sqrt().max(1e-12).ln()
        });
        let rep = bmo_norm(&f, 5).unwrap();
        for w in rep.profile.windows(2) {
            assert!(w[1].1 >= w[0].1 - 1e-15);
        }
    }

    #[test]
    fn morrey_of_inv_r_on_ball() {
        let mesh = ball(24);
        let f = ScalarField::from_cell_fn(&mesh, |p| {
            1.0 / (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt()
        });
        let rep = morrey_norm(&f, 3.0).unwrap();
        let expect = 2.0 * std::f64::consts::PI;
        assert!(
            (rep.value - expect).abs() / expect < 0.05,
            "morrey {} vs {expect}",
            rep.value
        );
        // maximizer sits at the origin
        let r0: f64 = rep.max_center.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(r0 < 0.2, "maximizing center at radius {r0}");
    }

    #[test]
    fn morrey_of_bounded_field_is_finite() {
        let mesh = ball(12);
        let f = ScalarField::from_cell_fn(&mesh, |_| 1.0);
        let rep = morrey_norm(&f, 3.0).unwrap();
        assert!(rep.value <= 4.0 * std::f64::consts::PI / 3.0 * mesh.domain.diameter());
    }

    #[test]
    fn grand_lebesgue_of_inv_r_on_disk() {
        let mesh = disk(256);
        let f = ScalarField::from_cell_fn(&mesh, |p| {
            1.0 / (p[0] * p[0] + p[1] * p[1]).sqrt()
        });
        let v = grand_lebesgue_norm(&f, 2).unwrap();
        assert!((v - 2.0).abs() < 0.1, "grand lebesgue {v}");
    }

    #[test]
    fn grand_lebesgue_of_one() {
        let mesh = disk(16);
        let f = ScalarField::from_cell_fn(&mesh, |_| 1.0);
        let v = grand_lebesgue_norm(&f, 2).unwrap();
        // sup_s (n-s)^{1/s} = n-1 at s=1
        assert!((v - 1.0).abs() < 2e-2, "value {v}");
    }

    #[test]
    fn maximal_function_dominates_constants() {
        let mesh = ball(8);
        let f = ScalarField::from_cell_fn(&mesh, |_| 2.0);
        let m = maximal_function(&f);
        // at the center, small balls are inside the domain: Mf = 2
        let center = (0..mesh.vertex_count())
            .min_by(|&a, &b| {
                let ra: f64 = mesh.vertex(a).iter().map(|x| x * x).sum();
                let rb: f64 = mesh.vertex(b).iter().map(|x| x * x).sum();
                ra.partial_cmp(&rb).unwrap()
            })
            .unwrap();
        assert!((m.values[center] - 2.0).abs() < 0.15, "Mf(0) = {}", m.values[center]);
    }

    #[test]
    fn maximal_function_monotone_and_positive() {
        let mesh = disk(16);
        let f = ScalarField::from_cell_fn(&mesh, |p| p[0]);
        let g = ScalarField::from_cell_fn(&mesh, |p| p[0].abs() + 0.5);
        let mf = maximal_function(&f);
        let mg = maximal_function(&g);
        for v in 0..mesh.vertex_count() {
            assert!(mf.values[v] <= mg.values[v] + 1e-12);
        }
        // scaling commutes
        let m2 = maximal_function(&f.map(|v| 3.0 * v));
        for v in 0..mesh.vertex_count() {
            assert!((m2.values[v] - 3.0 * mf.values[v]).abs() < 1e-12);
        }
        // Mf of a nonzero field vanishes nowhere inside
        assert!(mf.values.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn maximal_function_indicator_matches_lens_oracle() {
        // f = indicator of B_{1/2}(0), evaluated at |x| = 3/4: brute-force
        // oracle over the same radius grid with the analytic lens volume
        let mesh = ball(16);
        let f = ScalarField::from_cell_fn(&mesh, |p| {
            if p[0] * p[0] + p[1] * p[1] + p[2] * p[2] < 0.25 {
                1.0
            } else {
                0.0
            }
        });
        let m = maximal_function(&f);
        // closest vertex to (3/4, 0, 0)
        let target = [0.75, 0.0, 0.0];
        let v = (0..mesh.vertex_count())
            .min_by(|&a, &b| {
                let da: f64 = mesh
                    .vertex(a)
                    .iter()
                    .zip(&target)
                    .map(|(x, t)| (x - t) * (x - t))
                    .sum();
                let db: f64 = mesh
                    .vertex(b)
                    .iter()
                    .zip(&target)
                    .map(|(x, t)| (x - t) * (x - t))
                    .sum();
                da.partial_cmp(&db).unwrap()
            })
            .unwrap();
        let x = mesh.vertex(v);
        let d = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
        let lens = |r1: f64, r2: f64, dd: f64| -> f64 {
            if dd >= r1 + r2 {
                0.0
            } else if dd <= (r1 - r2).abs() {
                let rr = r1.min(r2);
                4.0 / 3.0 * std::f64::consts::PI * rr.powi(3)
            } else {
                std::f64::consts::PI * (r1 + r2 - dd).powi(2)
                    * (dd * dd + 2.0 * dd * (r1 + r2) - 3.0 * (r1 - r2).powi(2))
                    / (12.0 * dd)
            }
        };
        let mut oracle = 0.0f64;
        let mut r = mesh.h();
        while r <= mesh.domain.diameter() {
            let ball_vol = 4.0 / 3.0 * std::f64::consts::PI * r.powi(3);
            oracle = oracle.max(lens(0.5, r, d) / ball_vol);
            r *= 2.0;
        }
        let got = m.values[v];
        assert!(
            (got - oracle).abs() / oracle < 0.05,
            "Mf = {got}, oracle = {oracle}"
        );
        assert!(got > 0.0 && got < 1.0);
    }

    #[test]
    fn riesz_of_zero_is_zero() {
        let mesh = ball(6);
        let f = ScalarField::from_cell_fn(&mesh, |_| 0.0);
        let i = riesz_potential(&f);
        assert!(i.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn riesz_of_one_at_center() {
        let mesh = ball(24);
        let f = ScalarField::from_cell_fn(&mesh, |_| 1.0);
        let i = riesz_potential(&f);
        let center = (0..mesh.vertex_count())
            .min_by(|&a, &b| {
                let ra: f64 = mesh.vertex(a).iter().map(|x| x * x).sum();
                let rb: f64 = mesh.vertex(b).iter().map(|x| x * x).sum();
                ra.partial_cmp(&rb).unwrap()
            })
            .unwrap();
        let expect = 4.0 * std::f64::consts::PI;
        let got = i.values[center];
        assert!((got - expect).abs() / expect < 0.02, "I1(0) = {got}");
    }

    #[test]
    fn riesz_monotone() {
        let mesh = ball(8);
        let f = ScalarField::from_cell_fn(&mesh, |p| p[0].abs());
        let g = ScalarField::from_cell_fn(&mesh, |p| p[0].abs() + 0.3);
        let fi = riesz_potential(&f);
        let gi = riesz_potential(&g);
        for v in 0..mesh.vertex_count() {
            assert!(fi.values[v] <= gi.values[v] + 1e-12);
        }
    }

    #[test]
    fn weak_lp_of_inv_r_disk() {
        // |{1/r > t}| = pi/t^2, so sup t |{...}|^{1/2} = sqrt(pi). Centroid
        // sampling overstates the level-set measure right at the
        // singularity (the innermost ring of cells all carry near-peak
        // values), so the estimator sits a stable O(1) factor above the
        // continuum value; finite vs infinite is what the classifier
        // consumes, and the estimate must be refinement-stable.
        let expect = std::f64::consts::PI.sqrt();
        let mut vals = Vec::new();
        for r in [64, 128] {
            let mesh = disk(r);
            let f = ScalarField::from_cell_fn(&mesh, |p| {
                1.0 / (p[0] * p[0] + p[1] * p[1]).sqrt()
            });
            vals.push(weak_lp_norm(&f, 2.0).unwrap());
        }
        assert!(vals[1] / vals[0] < 1.1, "weak-L2 unstable: {vals:?}");
        assert!(vals[1] >= expect * 0.9 && vals[1] <= expect * 1.5, "weak-L2 {vals:?}");
        // exact on bounded fields
        let mesh = disk(32);
        let c = ScalarField::from_cell_fn(&mesh, |_| 2.0);
        let v = weak_lp_norm(&c, 2.0).unwrap();
        assert!((v - 2.0 * mesh.total_volume().sqrt()).abs() < 1e-12);
    }

    #[test]
    fn classify_bounded_drift_all_hold() {
        let meshes: Vec<Arc<Mesh>> = [8u32, 16].iter().map(|&r| ball(r)).collect();
        let report = classify_drift(&meshes, &|m| {
            DriftSample::Vector(VectorField::from_fn(m, |p| [-p[1], p[0], 0.2]))
        })
        .unwrap();
        for (name, verdict) in &report.criteria {
            assert_eq!(*verdict, Verdict::Holds, "criterion {name}: {verdict:?}");
        }
        assert!(report.gamma_star.is_infinite());
    }

    #[test]
    fn classify_log_entries_zc1_holds() {
        let meshes: Vec<Arc<Mesh>> = [128u32, 256].iter().map(|&r| disk(r)).collect();
        let report = classify_drift(&meshes, &|m| {
            DriftSample::Skew(SkewField::from_fn(m, |p| {
                let r = (p[0] * p[0] + p[1] * p[1]).sqrt().max(1e-300);
                vec![-r.ln()]
            }))
        })
        .unwrap();
        assert_eq!(report.criteria["ZC1"], Verdict::Holds);
        // Frobenius magnitude multiplies the entry by sqrt(2)
        let target = 2f64.sqrt() * 0.5 / std::f64::consts::E;
        assert!(
            (report.growth_limit_l - target).abs() / target < 0.12,
            "L = {} vs {target}",
            report.growth_limit_l
        );
    }

    #[test]
    fn jensen_monotonicity_of_normalized_lp() {
        use rand::Rng;
        use rand::SeedableRng;
        let mesh = square(12);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let omega = mesh.total_volume();
        for _ in 0..20 {
            let values: Vec<f64> = (0..mesh.cell_count()).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let f = ScalarField::new(mesh.clone(), Layout::Cell, values).unwrap();
            let mut prev = 0.0;
            for p in [1.0, 2.0, 4.0, 8.0] {
                let v = lp_norm(&f, p).unwrap() / omega.powf(1.0 / p);
                assert!(v >= prev - 1e-12, "p={p}: {v} < {prev}");
                prev = v;
            }
        }
    }
}
