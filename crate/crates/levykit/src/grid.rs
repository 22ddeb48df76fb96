//! Periodic uniform grids on [−L, L)^d with the dual frequency lattice
//! ξ_k = k/(2L) and FFT-based multiplier application.

use crate::error::{Error, Result};
use num_complex::Complex64;
use rustfft::FftPlanner;
use std::cell::RefCell;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralGrid {
    dim: usize,
    n: usize,
    half_width: f64,
}

impl SpectralGrid {
    pub fn new(dim: usize, n: usize, half_width: f64) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::domain(format!("grid dimension {dim} unsupported")));
        }
        if n < 2 || !n.is_power_of_two() {
            return Err(Error::domain(format!("grid size n = {n} must be a power of two ≥ 2")));
        }
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(Error::domain(format!("grid half width {half_width} must be positive")));
        }
        if dim == 2 && n > 4096 {
            return Err(Error::Resource(format!("2-d grid with n = {n} exceeds the 4096² limit")));
        }
        Ok(SpectralGrid { dim, n, half_width })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / self.n as f64
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Cell volume h^d.
    pub fn cell(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    pub fn coord(&self, j: usize) -> f64 {
        -self.half_width + j as f64 * self.spacing()
    }

    /// Signed frequency index of storage slot k.
    pub fn signed_index(&self, k: usize) -> i64 {
        if k < self.n / 2 {
            k as i64
        } else {
            k as i64 - self.n as i64
        }
    }

    pub fn freq(&self, k: usize) -> f64 {
        self.signed_index(k) as f64 / (2.0 * self.half_width)
    }

    /// Row-major points (x₁ slowest in d = 2).
    pub fn points(&self) -> Vec<[f64; 2]> {
        match self.dim {
            1 => (0..self.n).map(|j| [self.coord(j), 0.0]).collect(),
            _ => (0..self.n)
                .flat_map(|i| (0..self.n).map(move |j| (i, j)))
                .map(|(i, j)| [self.coord(i), self.coord(j)])
                .collect(),
        }
    }

    /// Frequencies in FFT storage order, same layout as [`points`](Self::points).
    pub fn frequencies(&self) -> Vec<[f64; 2]> {
        match self.dim {
            1 => (0..self.n).map(|k| [self.freq(k), 0.0]).collect(),
            _ => (0..self.n)
                .flat_map(|i| (0..self.n).map(move |j| (i, j)))
                .map(|(i, j)| [self.freq(i), self.freq(j)])
                .collect(),
        }
    }

    /// Same box, twice the resolution.
    pub fn refined(&self) -> Result<Self> {
        SpectralGrid::new(self.dim, 2 * self.n, self.half_width)
    }

    pub fn with_half_width(&self, half_width: f64) -> Result<Self> {
        SpectralGrid::new(self.dim, self.n, half_width)
    }

    fn transform(&self, data: &mut [Complex64], inverse: bool) {
        let fft = PLANNER.with(|p| {
            let mut planner = p.borrow_mut();
            if inverse {
                planner.plan_fft_inverse(self.n)
            } else {
                planner.plan_fft_forward(self.n)
            }
        });
        if self.dim == 1 {
            fft.process(data);
        } else {
            let n = self.n;
            for row in data.chunks_mut(n) {
                fft.process(row);
            }
            let mut col = vec![Complex64::new(0.0, 0.0); n];
            for j in 0..n {
                for i in 0..n {
                    col[i] = data[i * n + j];
                }
                fft.process(&mut col);
                for i in 0..n {
                    data[i * n + j] = col[i];
                }
            }
        }
        if inverse {
            let s = 1.0 / self.len() as f64;
            data.iter_mut().for_each(|v| *v *= s);
        }
    }

    /// Unnormalized forward DFT (kernel e^{−i2πkj/n}).
    pub fn forward(&self, field: &[f64]) -> Vec<Complex64> {
        let mut d: Vec<Complex64> = field.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.transform(&mut d, false);
        d
    }

    pub fn forward_complex(&self, data: &mut [Complex64]) {
        self.transform(data, false);
    }

    /// Normalized inverse DFT.
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.transform(data, true);
    }

    /// Real part of 𝓕⁻¹[mult · 𝓕 field].
    pub fn apply_multiplier(&self, field: &[f64], mult: &[Complex64]) -> Vec<f64> {
        let mut d = self.forward(field);
        for (v, m) in d.iter_mut().zip(mult) {
            *v *= m;
        }
        self.inverse(&mut d);
        d.iter().map(|v| v.re).collect()
    }

    /// Spectral coefficients of a field, multiplied and returned to space as
    /// complex values (for imaginary-residue diagnostics).
    pub fn apply_multiplier_complex(&self, field: &[f64], mult: &[Complex64]) -> Vec<Complex64> {
        let mut d = self.forward(field);
        for (v, m) in d.iter_mut().zip(mult) {
            *v *= m;
        }
        self.inverse(&mut d);
        d
    }

    /// Density from its characteristic function sampled on the frequency
    /// lattice: p(x_j) = (2L)^{-d} Σ_k e^{−i2πξ_k·x_j} φ_k.
    pub fn density_from_cf(&self, cf: &[Complex64]) -> Vec<Complex64> {
        let mut d: Vec<Complex64> = cf.to_vec();
        let n = self.n;
        // e^{−i2πξ_k·x_j} = (−1)^k e^{−i2πkj/n} with x_j = −L + jh
        for (idx, v) in d.iter_mut().enumerate() {
            let parity = match self.dim {
                1 => idx,
                _ => idx / n + idx % n,
            };
            if parity % 2 == 1 {
                *v = -*v;
            }
        }
        self.transform(&mut d, false);
        let s = (2.0 * self.half_width).powi(-(self.dim as i32));
        d.iter_mut().for_each(|v| *v *= s);
        d
    }

    /// Discrete L_p norm (Σ|f|^p h^d)^{1/p}.
    pub fn lp_norm(&self, field: &[f64], p: f64) -> f64 {
        let cell = self.cell();
        if p == 1.0 {
            return field.iter().map(|v| v.abs()).sum::<f64>() * cell;
        }
        if p == 2.0 {
            return (field.iter().map(|v| v * v).sum::<f64>() * cell).sqrt();
        }
        (field.iter().map(|v| v.abs().powf(p)).sum::<f64>() * cell).powf(1.0 / p)
    }

    pub fn integral(&self, field: &[f64]) -> f64 {
        field.iter().sum::<f64>() * self.cell()
    }

    /// Index of the point x = 0.
    pub fn origin_index(&self) -> usize {
        let c = self.n / 2;
        match self.dim {
            1 => c,
            _ => c * self.n + c,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn lattice_duality() {
        let g = SpectralGrid::new(1, 8, 2.0).unwrap();
        assert_eq!(g.spacing(), 0.5);
        assert_eq!(g.coord(4), 0.0);
        assert_eq!(g.freq(1), 0.25);
        assert_eq!(g.freq(4), -1.0);
        assert!(SpectralGrid::new(1, 12, 1.0).is_err());
    }

    #[test]
    fn derivative_multiplier() {
        let g = SpectralGrid::new(2, 32, 1.0).unwrap();
        let pts = g.points();
        let f: Vec<f64> = pts.iter().map(|p| (PI * p[0]).sin() * (2.0 * PI * p[1]).cos()).collect();
        let mult: Vec<Complex64> = g.frequencies().iter().map(|x| Complex64::new(0.0, 2.0 * PI * x[0])).collect();
        let d = g.apply_multiplier(&f, &mult);
        for (p, v) in pts.iter().zip(d) {
            let exact = PI * (PI * p[0]).cos() * (2.0 * PI * p[1]).cos();
            assert!((v - exact).abs() < 1e-10);
        }
    }

    #[test]
    fn gaussian_density_from_cf() {
        // N(0, s²): φ(ξ) = exp(−2π²s²ξ²)
        let g = SpectralGrid::new(1, 256, 16.0).unwrap();
        let s2: f64 = 2.0;
        let cf: Vec<Complex64> = g
            .frequencies()
            .iter()
            .map(|x| Complex64::new((-2.0 * PI * PI * s2 * x[0] * x[0]).exp(), 0.0))
            .collect();
        let p = g.density_from_cf(&cf);
        for (j, v) in p.iter().enumerate() {
            let x = g.coord(j);
            let exact = (-x * x / (2.0 * s2)).exp() / (2.0 * PI * s2).sqrt();
            assert!((v.re - exact).abs() < 1e-12 && v.im.abs() < 1e-12);
        }
    }
}
