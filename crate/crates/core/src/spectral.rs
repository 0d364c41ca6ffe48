//! Periodic spectral differentiation and interpolation on uniform grids over [0, 2π).

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

pub struct Periodic {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl Periodic {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Periodic { n, fwd: planner.plan_fft_forward(n), inv: planner.plan_fft_inverse(n) }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    fn wavenumber(&self, k: usize) -> f64 {
        if k <= self.n / 2 {
            k as f64
        } else {
            k as f64 - self.n as f64
        }
    }

    /// Normalized Fourier coefficients `ĉ_k` with `f(θ) = Σ ĉ_k e^{ikθ}`.
    pub fn coefficients(&self, f: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = f.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.fwd.process(&mut buf);
        let s = 1.0 / self.n as f64;
        buf.iter_mut().for_each(|c| *c *= s);
        buf
    }

    /// Derivative of order `m` of a real periodic sample vector.
    pub fn derivative(&self, f: &[f64], m: u32) -> Vec<f64> {
        let mut c = self.coefficients(f);
        let even = self.n % 2 == 0;
        for (k, ck) in c.iter_mut().enumerate() {
            let kk = self.wavenumber(k);
            if even && k == self.n / 2 && m % 2 == 1 {
                *ck = Complex64::new(0.0, 0.0);
                continue;
            }
            let factor = Complex64::new(0.0, kk).powu(m);
            *ck *= factor;
        }
        self.inv.process(&mut c);
        c.iter().map(|z| z.re).collect()
    }

    /// Evaluates the trigonometric interpolant of the coefficients of a real signal at `θ`.
    pub fn eval(&self, c: &[Complex64], th: f64) -> f64 {
        let n = self.n;
        let z = Complex64::new(th.cos(), th.sin());
        let mut w = z;
        let mut s = c[0].re;
        for ck in &c[1..n.div_ceil(2)] {
            s += 2.0 * (ck * w).re;
            w *= z;
        }
        if n % 2 == 0 && n > 1 {
            s += c[n / 2].re * w.re;
        }
        s
    }

    /// Antiderivative `∫_0^θ f` of a real periodic function whose mean is `c[0]`.
    pub fn antiderivative(&self, c: &[Complex64], th: f64) -> f64 {
        let z = Complex64::new(th.cos(), th.sin());
        let mut w = z;
        let mut s = c[0].re * th;
        for (k, ck) in c[1..self.n.div_ceil(2)].iter().enumerate() {
            s += 2.0 * (ck * (w - 1.0) / Complex64::new(0.0, (k + 1) as f64)).re;
            w *= z;
        }
        s
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|i| 2.0 * PI * i as f64 / self.n as f64).collect()
    }
}

/// Fourth-order central first and second derivative weights at unit spacing.
pub const D1_4: [f64; 5] = [1.0 / 12.0, -2.0 / 3.0, 0.0, 2.0 / 3.0, -1.0 / 12.0];
pub const D2_4: [f64; 5] = [-1.0 / 12.0, 4.0 / 3.0, -5.0 / 2.0, 4.0 / 3.0, -1.0 / 12.0];
