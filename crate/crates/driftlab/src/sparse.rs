//! Minimal CSR matrix and Krylov solvers for the nonsymmetric systems
//! produced by the drift assembly.
//!
//! BiCGSTAB with Jacobi preconditioning is the workhorse; restarted GMRES is
//! the fallback when BiCGSTAB stagnates or breaks down. Both iterate a fixed
//! deterministic sequence for a given matrix ordering.

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct Csr {
    pub n: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<u32>,
    pub data: Vec<f64>,
}

impl Csr {
    /// Build from unsorted triplets, summing duplicates.
    pub fn from_triplets(n: usize, rows: &[u32], cols: &[u32], vals: &[f64]) -> Csr {
        assert_eq!(rows.len(), cols.len());
        assert_eq!(rows.len(), vals.len());
        let mut counts = vec![0usize; n + 1];
        for &r in rows {
            counts[r as usize + 1] += 1;
        }
        for i in 0..n {
            counts[i + 1] += counts[i];
        }
        let mut order_cols = vec![0u32; vals.len()];
        let mut order_vals = vec![0f64; vals.len()];
        let mut cursor = counts.clone();
        for k in 0..vals.len() {
            let r = rows[k] as usize;
            let pos = cursor[r];
            cursor[r] += 1;
            order_cols[pos] = cols[k];
            order_vals[pos] = vals[k];
        }
        // sort each row by column and compress duplicates
        let mut indptr = vec![0usize; n + 1];
        let mut indices = Vec::with_capacity(vals.len());
        let mut data = Vec::with_capacity(vals.len());
        let mut scratch: Vec<(u32, f64)> = Vec::new();
        for r in 0..n {
            scratch.clear();
            for k in counts[r]..counts[r + 1] {
                scratch.push((order_cols[k], order_vals[k]));
            }
            scratch.sort_unstable_by_key(|&(c, _)| c);
            let mut iter = scratch.iter().peekable();
            while let Some(&(c, v)) = iter.next() {
                let mut acc = v;
                while let Some(&&(c2, v2)) = iter.peek() {
                    if c2 == c {
                        acc += v2;
                        iter.next();
                    } else {
                        break;
                    }
                }
                indices.push(c);
                data.push(acc);
            }
            indptr[r + 1] = indices.len();
        }
        Csr {
            n,
            indptr,
            indices,
            data,
        }
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for r in 0..self.n {
            let mut acc = 0.0;
            for k in self.indptr[r]..self.indptr[r + 1] {
                acc += self.data[k] * x[self.indices[k] as usize];
            }
            y[r] = acc;
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n];
        for r in 0..self.n {
            for k in self.indptr[r]..self.indptr[r + 1] {
                if self.indices[k] as usize == r {
                    d[r] = self.data[k];
                }
            }
        }
        d
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        for k in self.indptr[r]..self.indptr[r + 1] {
            if self.indices[k] as usize == c {
                return self.data[k];
            }
        }
        0.0
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SolveOptions {
    pub rel_tol: f64,
    pub max_iter: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            rel_tol: 1e-10,
            max_iter: 20_000,
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Jacobi-preconditioned BiCGSTAB, GMRES(100) fallback.
pub fn solve(a: &Csr, b: &[f64], x0: Option<&[f64]>, opts: SolveOptions) -> Result<(Vec<f64>, Vec<f64>)> {
    let bnorm = norm(b);
    if bnorm == 0.0 {
        return Ok((vec![0.0; a.n], vec![0.0]));
    }
    match bicgstab(a, b, x0, opts) {
        Ok(out) => Ok(out),
        Err(_) => gmres(a, b, x0, 100, opts),
    }
}

fn bicgstab(
    a: &Csr,
    b: &[f64],
    x0: Option<&[f64]>,
    opts: SolveOptions,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = a.n;
    let inv_diag: Vec<f64> = a
        .diagonal()
        .iter()
        .map(|&d| if d.abs() > 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let bnorm = norm(b);
    let target = opts.rel_tol * bnorm;
    let mut x = x0.map(|v| v.to_vec()).unwrap_or_else(|| vec![0.0; n]);
    let mut r = vec![0.0; n];
    a.matvec(&x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let r0 = r.clone();
    let mut rho = 1.0f64;
    let mut alpha = 1.0f64;
    let mut omega = 1.0f64;
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut history = vec![norm(&r) / bnorm];
    let mut y = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut t = vec![0.0; n];
    for _it in 0..opts.max_iter {
        let rho_new = dot(&r0, &r);
        if rho_new.abs() < 1e-300 {
            return Err(Error::SolverDiverged {
                final_residual: *history.last().unwrap(),
                iterations: history.len() - 1,
                history,
            });
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        for i in 0..n {
            y[i] = inv_diag[i] * p[i];
        }
        a.matvec(&y, &mut v);
        alpha = rho / dot(&r0, &v);
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        if norm(&s) <= target {
            for i in 0..n {
                x[i] += alpha * y[i];
            }
            a.matvec(&x, &mut r);
            for i in 0..n {
                r[i] = b[i] - r[i];
            }
            history.push(norm(&r) / bnorm);
            if *history.last().unwrap() <= opts.rel_tol {
                return Ok((x, history));
            }
            continue;
        }
        for i in 0..n {
            z[i] = inv_diag[i] * s[i];
        }
        a.matvec(&z, &mut t);
        let tt = dot(&t, &t);
        if tt == 0.0 {
            return Err(Error::SolverDiverged {
                final_residual: *history.last().unwrap(),
                iterations: history.len() - 1,
                history,
            });
        }
        omega = dot(&t, &s) / tt;
        for i in 0..n {
            x[i] += alpha * y[i] + omega * z[i];
            r[i] = s[i] - omega * t[i];
        }
        let res = norm(&r) / bnorm;
        history.push(res);
        if res <= opts.rel_tol {
            // recompute the true residual to guard against drift
            a.matvec(&x, &mut t);
            for i in 0..n {
                t[i] = b[i] - t[i];
            }
            let true_res = norm(&t) / bnorm;
            if true_res <= opts.rel_tol * 10.0 {
                return Ok((x, history));
            }
        }
        if omega.abs() < 1e-300 {
            return Err(Error::SolverDiverged {
                final_residual: res,
                iterations: history.len() - 1,
                history,
            });
        }
    }
    Err(Error::SolverDiverged {
        final_residual: *history.last().unwrap(),
        iterations: opts.max_iter,
        history,
    })
}

/// Restarted GMRES(m) with Jacobi preconditioning (right-preconditioned).
fn gmres(
    a: &Csr,
    b: &[f64],
    x0: Option<&[f64]>,
    m: usize,
    opts: SolveOptions,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = a.n;
    let inv_diag: Vec<f64> = a
        .diagonal()
        .iter()
        .map(|&d| if d.abs() > 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let bnorm = norm(b);
    let mut x = x0.map(|v| v.to_vec()).unwrap_or_else(|| vec![0.0; n]);
    let mut history = Vec::new();
    let mut total_iters = 0usize;
    'outer: loop {
        let mut r = vec![0.0; n];
        a.matvec(&x, &mut r);
        for i in 0..n {
            r[i] = b[i] - r[i];
        }
        let beta = norm(&r);
        history.push(beta / bnorm);
        if beta / bnorm <= opts.rel_tol {
            return Ok((x, history));
        }
        if total_iters >= opts.max_iter {
            break 'outer;
        }
        let mut v: Vec<Vec<f64>> = vec![r.iter().map(|&t| t / beta).collect()];
        let mut h = vec![vec![0.0f64; m]; m + 1];
        let mut cs = vec![0.0f64; m];
        let mut sn = vec![0.0f64; m];
        let mut g = vec![0.0f64; m + 1];
        g[0] = beta;
        let mut k_used = 0;
        for k in 0..m {
            total_iters += 1;
            let mut w = vec![0.0; n];
            let zk: Vec<f64> = v[k].iter().zip(&inv_diag).map(|(t, d)| t * d).collect();
            a.matvec(&zk, &mut w);
            for j in 0..=k {
                h[j][k] = dot(&w, &v[j]);
                for i in 0..n {
                    w[i] -= h[j][k] * v[j][i];
                }
            }
            h[k + 1][k] = norm(&w);
            if h[k + 1][k] > 1e-300 {
                v.push(w.iter().map(|&t| t / h[k + 1][k]).collect());
            } else {
                v.push(vec![0.0; n]);
            }
            // apply stored Givens rotations
            for j in 0..k {
                let tmp = cs[j] * h[j][k] + sn[j] * h[j + 1][k];
                h[j + 1][k] = -sn[j] * h[j][k] + cs[j] * h[j + 1][k];
                h[j][k] = tmp;
            }
            let denom = (h[k][k] * h[k][k] + h[k + 1][k] * h[k + 1][k]).sqrt();
            cs[k] = h[k][k] / denom;
            sn[k] = h[k + 1][k] / denom;
            h[k][k] = denom;
            h[k + 1][k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            k_used = k + 1;
            let res = g[k + 1].abs() / bnorm;
            history.push(res);
            if res <= opts.rel_tol || total_iters >= opts.max_iter {
                break;
            }
        }
        // back substitution
        let mut ym = vec![0.0f64; k_used];
        for i in (0..k_used).rev() {
            let mut acc = g[i];
            for j in (i + 1)..k_used {
                acc -= h[i][j] * ym[j];
            }
            ym[i] = acc / h[i][i];
        }
        for (j, yj) in ym.iter().enumerate() {
            for i in 0..n {
                x[i] += yj * inv_diag[i] * v[j][i];
            }
        }
        if *history.last().unwrap() <= opts.rel_tol {
            // verify the true residual after the restart update
            let mut r2 = vec![0.0; n];
            a.matvec(&x, &mut r2);
            for i in 0..n {
                r2[i] = b[i] - r2[i];
            }
            let res = norm(&r2) / bnorm;
            if res <= opts.rel_tol * 10.0 {
                history.push(res);
                return Ok((x, history));
            }
        }
        if total_iters >= opts.max_iter {
            break 'outer;
        }
    }
    Err(Error::SolverDiverged {
        final_residual: *history.last().unwrap_or(&f64::NAN),
        iterations: total_iters,
        history,
    })
}
