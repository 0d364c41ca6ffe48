//! Quadrature rules and finite-difference weights.

use std::sync::OnceLock;

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            if n == 1 {
                p1 = z;
                p0 = 1.0;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
    }
    (x, w)
}

/// Cached 20-point rule mapped to `[0, 1]`.
pub fn gl20_unit() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| {
        let (x, w) = gauss_legendre(20);
        (x.iter().map(|t| 0.5 * (t + 1.0)).collect(), w.iter().map(|t| 0.5 * t).collect())
    })
}

/// Two-point Gauss rule on `[0, 1]`.
pub const G2_X: [f64; 2] = [0.211_324_865_405_187_1, 0.788_675_134_594_812_9];
pub const G2_W: [f64; 2] = [0.5, 0.5];

/// Weights for the `m`-th derivative at `x0` from samples at `xs` (Fornberg).
pub fn fd_weights(x0: f64, xs: &[f64], m: usize) -> Vec<f64> {
    let n = xs.len();
    let mut c = vec![vec![0.0; m + 1]; n];
    let mut c1 = 1.0;
    let mut c4 = xs[0] - x0;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = xs[i] - x0;
        for j in 0..i {
            let c3 = xs[i] - xs[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.iter().map(|r| r[m]).collect()
}

/// Composite Simpson weights for `n + 1` equispaced samples (trapezoid on a trailing odd panel).
pub fn simpson_weights(n: usize, h: f64) -> Vec<f64> {
    let mut w = vec![0.0; n + 1];
    let pairs = n / 2;
    for p in 0..pairs {
        w[2 * p] += h / 3.0;
        w[2 * p + 1] += 4.0 * h / 3.0;
        w[2 * p + 2] += h / 3.0;
    }
    if n % 2 == 1 {
        w[n - 1] += h / 2.0;
        w[n] += h / 2.0;
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;

    // [DERIVED]
    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let (x, w) = gauss_legendre(20);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(38)).sum();
        assert!((s - 2.0 / 39.0).abs() < 1e-14);
        let (x, w) = gl20_unit();
        let s: f64 = x.iter().zip(w).map(|(x, w)| w * x.exp()).sum();
        assert!((s - (1f64.exp() - 1.0)).abs() < 1e-14);
    }

    // [DERIVED]
    #[test]
    fn fornberg_matches_classical_stencils() {
        let w = fd_weights(0.0, &[-2.0, -1.0, 0.0, 1.0, 2.0], 1);
        let want = crate::spectral::D1_4;
        for k in 0..5 {
            assert!((w[k] - want[k]).abs() < 1e-14);
        }
        let w = fd_weights(0.0, &[0.0, 1.0, 2.0], 1);
        assert!((w[0] + 1.5).abs() < 1e-14 && (w[1] - 2.0).abs() < 1e-14 && (w[2] + 0.5).abs() < 1e-14);
    }

    // [DERIVED]
    #[test]
    fn simpson_is_exact_for_cubics() {
        let w = simpson_weights(8, 0.125);
        let s: f64 = (0..=8).map(|i| w[i] * (i as f64 * 0.125).powi(3)).sum();
        assert!((s - 0.25).abs() < 1e-15);
    }
}
