//! Gauss-Legendre nodes for line and sphere quadrature.

/// Nodes and weights of the n-point Gauss-Legendre rule on `[-1, 1]`,
/// computed by Newton iteration on the Legendre polynomial.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    assert!(n >= 1);
    let mut out = Vec::with_capacity(n);
    let m = (n + 1) / 2;
    for i in 0..m {
        // Chebyshev initial guess
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        out.push((-x, w));
        if n - 1 - i != i {
            out.push((x, w));
        }
    }
    out.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    out
}

/// Legendre P_n(x) and its derivative.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Quadrature on the unit sphere: product of Gauss-Legendre in cos(theta)
/// and a uniform trapezoid rule in the azimuth. Exact for polynomial
/// integrands of degree <= 2 n_polar - 1 in cos(theta) and Fourier modes
/// below n_azimuth.
pub fn sphere_quadrature(n_polar: usize, n_azimuth: usize) -> Vec<([f64; 3], f64)> {
    let gl = gauss_legendre(n_polar);
    let mut pts = Vec::with_capacity(n_polar * n_azimuth);
    let dphi = 2.0 * std::f64::consts::PI / n_azimuth as f64;
    for &(ct, w) in &gl {
        let st = (1.0 - ct * ct).max(0.0).sqrt();
        for k in 0..n_azimuth {
            let phi = dphi * k as f64;
            pts.push(([st * phi.cos(), st * phi.sin(), ct], w * dphi));
        }
    }
    pts
}
