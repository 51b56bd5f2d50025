//! One-dimensional Gauss–Legendre rules and the radial/angular product
//! layout used by every synthetic grid.

use std::f64::consts::PI;

/// Gauss–Legendre nodes and weights on [-1, 1], ascending.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n > 0, "Gauss-Legendre order must be positive");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Tricomi initial guess, refined by Newton on P_n.
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
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

/// Radial rule on (0, ∞) via r = r_m (1 + x) / (1 - x). Weights include r² dr.
pub fn radial_semi_infinite(n: usize, r_m: f64) -> Vec<(f64, f64)> {
    let (xs, ws) = gauss_legendre(n);
    xs.iter()
        .zip(&ws)
        .map(|(&x, &w)| {
            let r = r_m * (1.0 + x) / (1.0 - x);
            let jac = 2.0 * r_m / ((1.0 - x) * (1.0 - x));
            (r, w * jac * r * r)
        })
        .collect()
}

/// Radial rule on (0, R) via r = R (1 + x) / 2. Weights include r² dr.
pub fn radial_ball(n: usize, radius: f64) -> Vec<(f64, f64)> {
    let (xs, ws) = gauss_legendre(n);
    xs.iter()
        .zip(&ws)
        .map(|(&x, &w)| {
            let r = radius * (1.0 + x) / 2.0;
            (r, w * 0.5 * radius * r * r)
        })
        .collect()
}

/// Product angular rule: Gauss–Legendre in cos θ, uniform midpoints in φ.
/// Returns unit vectors with weights summing to 4π.
pub fn angular_product(n_theta: usize, n_phi: usize) -> Vec<([f64; 3], f64)> {
    let (ys, wy) = gauss_legendre(n_theta);
    let dphi = 2.0 * PI / n_phi as f64;
    let mut out = Vec::with_capacity(n_theta * n_phi);
    for (&ct, &w) in ys.iter().zip(&wy) {
        let st = (1.0 - ct * ct).max(0.0).sqrt();
        for k in 0..n_phi {
            let phi = dphi * (k as f64 + 0.5);
            out.push(([st * phi.cos(), st * phi.sin(), ct], w * dphi));
        }
    }
    out
}
