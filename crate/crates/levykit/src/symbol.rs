//! Lévy symbols ψ(ξ) = ∫[e^{i2πξ·y} − 1 − i2πξ·y χ_σ(y)] m(y) ν(dy).
//!
//! Quadrature works ray by ray in the variable u = 2π|k| r: a near-origin
//! piece in ln u with cancellation-safe integrands, an oscillatory piece
//! summed over half periods and accelerated with Wynn's epsilon algorithm,
//! and the non-oscillatory remainders integrated separately. Rotation
//! invariant d = 2 measures use the Bessel form ∫[J₀(2π|ξ|r) − 1] g(r) dr.

use crate::coefficient::{CoefficientSpec, JumpWeight};
use crate::error::{Error, Result};
use crate::measures::{Chi, Family, MeasureSpec, Radial, Ray, Structure};
use crate::quad::{self, Tolerance};
use num_complex::Complex64;
use rayon::prelude::*;
use std::collections::HashMap;
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymbolValue {
    pub re: f64,
    pub im: f64,
    pub xi: [f64; 2],
}

impl SymbolValue {
    pub fn complex(&self) -> Complex64 {
        Complex64::new(self.re, self.im)
    }
}

/// C_{d,α} with ∫(1 − cos(ζ·y))|y|^{-d-α} dy = |ζ|^α / C_{d,α}.
pub fn stable_constant(d: usize, alpha: f64) -> f64 {
    let d = d as f64;
    alpha * (alpha - 1.0).exp2() * libm::tgamma((d + alpha) / 2.0)
        / (PI.powf(d / 2.0) * libm::tgamma(1.0 - alpha / 2.0))
}

/// ψ of c|y|^{-d-α}dy at frequency magnitude `k` (cycles per unit).
pub fn stable_symbol(d: usize, alpha: f64, c: f64, k: f64) -> f64 {
    -c * (2.0 * PI * k.abs()).powf(alpha) / stable_constant(d, alpha)
}

const REL_TOL: f64 = 1e-12;
const MAX_INTERVALS: usize = 4000;

fn sin_minus_id(u: f64) -> f64 {
    if u.abs() < 0.5 {
        // −u³/3! + u⁵/5! − …
        let u2 = u * u;
        let mut term = -u * u2 / 6.0;
        let mut sum = term;
        let mut n = 3.0;
        for _ in 0..8 {
            term *= -u2 / ((n + 1.0) * (n + 2.0));
            sum += term;
            n += 2.0;
        }
        sum
    } else {
        u.sin() - u
    }
}

fn j0_minus_one(u: f64) -> f64 {
    if u.abs() < 0.5 {
        let q = -u * u / 4.0;
        let mut term = 1.0;
        let mut sum = 0.0;
        for k in 1..=10 {
            term *= q / (k as f64 * k as f64);
            sum += term;
        }
        sum
    } else {
        libm::j0(u) - 1.0
    }
}

fn j0_zero(n: usize) -> f64 {
    const Z: [f64; 5] = [
        2.404825557695773,
        5.520078110286311,
        8.653727912911013,
        11.791534439014281,
        14.930917708487787,
    ];
    if n >= 1 && n <= 5 {
        return Z[n - 1];
    }
    let b = (n as f64 - 0.25) * PI;
    let e = 1.0 / (8.0 * b);
    b + e - 124.0 / 3.0 * e.powi(3) + 120928.0 / 15.0 * e.powi(5)
}

/// ∫_0^b F(u) du for F decaying like a power at 0, in the variable ln u.
fn integral_to_zero(f: impl Fn(f64) -> f64, b: f64) -> Result<f64> {
    let lb = b.ln();
    let e = quad::exp_tail(|v: f64| {
        let u = (lb - v).exp();
        u * f(u)
    }, 0.0, Tolerance::new(1e-300, REL_TOL), 740.0 + lb);
    if !e.converged || !e.value.is_finite() {
        return Err(Error::Divergent("symbol integrand not integrable at the origin (check sigma)".into()));
    }
    Ok(e.value)
}

/// ∫_a^∞ f(r) dr in the variable ln r.
fn integral_to_infinity(f: impl Fn(f64) -> f64, a: f64) -> Result<f64> {
    let e = quad::exp_tail(|s: f64| {
        let r = s.exp();
        r * f(r)
    }, a.ln(), Tolerance::new(1e-300, REL_TOL), 700.0);
    if !e.converged || !e.value.is_finite() {
        return Err(Error::Divergent("symbol integrand not integrable at infinity".into()));
    }
    Ok(e.value)
}

/// ∫_a^b in ln r on a finite range.
fn integral_log(f: impl Fn(f64) -> f64, a: f64, b: f64) -> Result<f64> {
    if b <= a {
        return Ok(0.0);
    }
    let e = quad::adaptive(|s: f64| {
        let r = s.exp();
        r * f(r)
    }, a.ln(), b.ln(), Tolerance::new(1e-300, REL_TOL), 2000);
    if !e.converged {
        return Err(Error::numerical("symbol quadrature on a finite range", e.error));
    }
    Ok(e.value)
}

/// Σ of interval integrals with Wynn acceleration. `interval(n)` returns
/// the n-th term (n ≥ 0); at least `min_terms` are summed directly.
fn accelerated_sum(mut interval: impl FnMut(usize) -> Result<Complex64>, min_terms: usize, scale: f64) -> Result<Complex64> {
    let mut re = Vec::new();
    let mut im = Vec::new();
    let mut acc = Complex64::new(0.0, 0.0);
    let mut last: Option<(f64, f64)> = None;
    for n in 0..MAX_INTERVALS {
        acc += interval(n)?;
        re.push(acc.re);
        im.push(acc.im);
        if n + 1 >= min_terms.max(12) && (n + 1) % 4 == 0 {
            let tail = 40.min(re.len());
            let (vr, er) = quad::wynn_epsilon(&re[re.len() - tail..]);
            let (vi, ei) = quad::wynn_epsilon(&im[im.len() - tail..]);
            let target = 1e-11 * scale.max(vr.abs()).max(vi.abs());
            if let Some((pr, pi)) = last {
                let dr = (vr - pr).abs().max(er.min(1.0));
                let di = (vi - pi).abs().max(ei.min(1.0));
                if dr <= target && di <= target {
                    return Ok(Complex64::new(vr, vi));
                }
            }
            last = Some((vr, vi));
        }
    }
    let (vr, er) = quad::wynn_epsilon(&re[re.len() - 40..]);
    let (vi, ei) = quad::wynn_epsilon(&im[im.len() - 40..]);
    let err = er.max(ei);
    if err > 1e-7 * scale.max(vr.abs()).max(vi.abs()) {
        return Err(Error::numerical("oscillatory symbol tail did not converge", err));
    }
    Ok(Complex64::new(vr, vi))
}

fn gk_interval(f: impl Fn(f64) -> Complex64, a: f64, b: f64) -> Result<Complex64> {
    let e = quad::adaptive(f, a, b, Tolerance::new(1e-300, 1e-13), 200);
    Ok(e.value)
}

/// ∫_0^∞ [e^{i2πkr} − 1 − i2πkr χ(r)] h(r) dr.
pub(crate) fn ray_integral(h: &(dyn Fn(f64) -> f64 + Sync), k: f64, chi: Chi, breaks: &[f64]) -> Result<Complex64> {
    if k == 0.0 {
        return Ok(Complex64::new(0.0, 0.0));
    }
    if k < 0.0 {
        return ray_integral(h, -k, chi, breaks).map(|z| z.conj());
    }
    let om = 2.0 * PI * k;
    let hu = |u: f64| h(u / om) / om;
    let u0 = PI;
    let chi_on = |u: f64| chi.at(u / om) > 0.5;
    let re_f = |u: f64| -2.0 * (0.5 * u).sin().powi(2) * hu(u);
    let im_f = |u: f64| {
        let s = if chi_on(u) { sin_minus_id(u) } else { u.sin() };
        s * hu(u)
    };
    // near piece (0, u0]
    let mut re = integral_to_zero(re_f, u0)?;
    let mut im;
    if chi == Chi::UnitBall && om < u0 {
        im = integral_to_zero(|u| sin_minus_id(u) * hu(u), om)?;
        im += integral_log(|u| u.sin() * hu(u), om, u0)?;
    } else {
        im = integral_to_zero(im_f, u0)?;
    }
    let near_scale = re.abs() + im.abs();
    // non-oscillatory remainders on [u0, ∞)
    let minus_one = integral_to_infinity(&hu, u0)?;
    re -= minus_one;
    match chi {
        Chi::Zero => {}
        Chi::One => im -= integral_to_infinity(|u| u * hu(u), u0)?,
        Chi::UnitBall => {
            if om > u0 {
                im -= integral_log(|u| u * hu(u), u0, om)?;
            }
        }
    }
    // oscillatory piece ∫_{u0}^∞ e^{iu} h_u du over half periods
    let last_break = breaks.iter().fold(0.0f64, |m, &b| m.max(b * om));
    let min_terms = ((last_break / PI).ceil() as usize + 2).min(MAX_INTERVALS / 2);
    let osc = accelerated_sum(
        |n| {
            let a = u0 + n as f64 * PI;
            gk_interval(|u| Complex64::new(u.cos(), u.sin()) * hu(u), a, a + PI)
        },
        min_terms,
        near_scale + minus_one,
    )?;
    Ok(Complex64::new(re, im) + osc)
}

/// ∫_0^∞ [J₀(2πkr) − 1] g(r) dr.
pub(crate) fn bessel_integral(g: &(dyn Fn(f64) -> f64 + Sync), k: f64, breaks: &[f64]) -> Result<f64> {
    let k = k.abs();
    if k == 0.0 {
        return Ok(0.0);
    }
    let om = 2.0 * PI * k;
    let gu = |u: f64| g(u / om) / om;
    let u0 = j0_zero(1);
    let mut total = integral_to_zero(|u| j0_minus_one(u) * gu(u), u0)?;
    let minus_one = integral_to_infinity(&gu, u0)?;
    let scale = total.abs() + minus_one;
    total -= minus_one;
    let last_break = breaks.iter().fold(0.0f64, |m, &b| m.max(b * om));
    let min_terms = ((last_break / PI).ceil() as usize + 2).min(MAX_INTERVALS / 2);
    let osc = accelerated_sum(
        |n| {
            let (a, b) = (j0_zero(n + 1), j0_zero(n + 2));
            gk_interval(|u| Complex64::new(libm::j0(u) * gu(u), 0.0), a, b)
        },
        min_terms,
        scale,
    )?;
    Ok(total + osc.re)
}

/// A symbol ready for evaluation: measure structure, weight and χ.
#[derive(Clone)]
pub struct Symbol {
    dim: usize,
    chi: Chi,
    structure: Structure,
    weight: JumpWeight,
    closed: Option<Closed>,
}

#[derive(Clone, Debug)]
enum Closed {
    Stable { alpha: f64, c: f64 },
    Anisotropic { alpha: f64, c: Vec<f64> },
}

impl Symbol {
    pub fn new(spec: &MeasureSpec) -> Self {
        Self::weighted(spec, JumpWeight::constant(1.0))
    }

    pub fn weighted(spec: &MeasureSpec, weight: JumpWeight) -> Self {
        let closed = if weight.is_constant() {
            match spec.family() {
                Family::RadialStable { alpha, c } => Some(Closed::Stable { alpha: *alpha, c: *c }),
                Family::Anisotropic { alpha, c } => Some(Closed::Anisotropic {
                    alpha: *alpha,
                    c: c.clone(),
                }),
                _ => None,
            }
        } else {
            None
        };
        let mut structure = spec.structure();
        if let Structure::Isotropic { g } = &structure {
            if !weight.is_radial() {
                // angular trapezoid for non-radial weights
                let n = 256;
                let rays = (0..n)
                    .map(|j| {
                        let th = 2.0 * PI * j as f64 / n as f64;
                        Ray {
                            dir: [th.cos(), th.sin()],
                            weight: 1.0 / n as f64,
                        }
                    })
                    .collect();
                structure = Structure::Rays { rays, g: g.clone() };
            }
        }
        Symbol {
            dim: spec.dim(),
            chi: spec.chi(),
            structure,
            weight,
            closed,
        }
    }

    /// Disable closed forms (for cross-checks).
    pub fn quadrature_only(mut self) -> Self {
        self.closed = None;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn radial(&self) -> &Radial {
        self.structure.radial()
    }

    pub fn eval(&self, xi: [f64; 2]) -> Result<Complex64> {
        let xi = if self.dim == 1 { [xi[0], 0.0] } else { xi };
        if xi == [0.0, 0.0] {
            return Ok(Complex64::new(0.0, 0.0));
        }
        let scale = self.weight.scale;
        if let Some(c) = &self.closed {
            let v = match c {
                Closed::Stable { alpha, c } => stable_symbol(self.dim, *alpha, *c, xi[0].hypot(xi[1])),
                Closed::Anisotropic { alpha, c } => c
                    .iter()
                    .zip(xi.iter())
                    .map(|(ci, x)| stable_symbol(1, *alpha, *ci, *x))
                    .sum(),
            };
            return Ok(Complex64::new(scale * v, 0.0));
        }
        let g = self.radial();
        let breaks = g.breakpoints();
        match &self.structure {
            Structure::Isotropic { .. } => {
                let w = &self.weight;
                let f = |r: f64| g.eval(r) * w.at([r, 0.0]);
                Ok(Complex64::new(bessel_integral(&f, xi[0].hypot(xi[1]), &breaks)?, 0.0))
            }
            Structure::Rays { rays, .. } => {
                let mut total = Complex64::new(0.0, 0.0);
                for ray in rays {
                    let k = ray.dir[0] * xi[0] + ray.dir[1] * xi[1];
                    if k == 0.0 || ray.weight == 0.0 {
                        continue;
                    }
                    total += self.ray_value(ray, k, &breaks)? * ray.weight;
                }
                Ok(total)
            }
        }
    }

    fn ray_value(&self, ray: &Ray, k: f64, breaks: &[f64]) -> Result<Complex64> {
        let g = self.radial();
        let w = &self.weight;
        if w.is_constant() {
            Ok(ray_integral(&|r: f64| g.eval(r), k, self.chi, breaks)? * w.scale)
        } else {
            let dir = ray.dir;
            let f = move |r: f64| g.eval(r) * w.at([r * dir[0], r * dir[1]]);
            ray_integral(&f, k, self.chi, breaks)
        }
    }

    /// Evaluate on many frequencies, sharing work between frequencies with
    /// equal radial or directional projections.
    pub fn eval_many(&self, xis: &[[f64; 2]]) -> Result<Vec<Complex64>> {
        if self.closed.is_some() {
            return xis.iter().map(|&x| self.eval(x)).collect();
        }
        match &self.structure {
            Structure::Isotropic { .. } => {
                let mags: Vec<f64> = xis.iter().map(|x| x[0].hypot(x[1])).collect();
                let table = ScalarTable::build(&mags, |k| Ok(self.eval([k, 0.0])?.re))?;
                Ok(mags.iter().map(|&k| Complex64::new(table.get(k), 0.0)).collect())
            }
            Structure::Rays { rays, .. } => {
                let breaks = self.radial().breakpoints();
                let xis: Vec<[f64; 2]> =
                    xis.iter().map(|x| if self.dim == 1 { [x[0], 0.0] } else { *x }).collect();
                let mut out = vec![Complex64::new(0.0, 0.0); xis.len()];
                let shared = self.weight.is_constant();
                let mut shared_table: Option<ComplexTable> = None;
                for ray in rays {
                    if ray.weight == 0.0 {
                        continue;
                    }
                    let ks: Vec<f64> = xis.iter().map(|x| ray.dir[0] * x[0] + ray.dir[1] * x[1]).collect();
                    let local;
                    let table = if shared {
                        if shared_table.is_none() {
                            let all: Vec<f64> = rays
                                .iter()
                                .flat_map(|r| xis.iter().map(move |x| r.dir[0] * x[0] + r.dir[1] * x[1]))
                                .collect();
                            shared_table = Some(ComplexTable::build(&all, |k| self.ray_value(ray, k, &breaks))?);
                        }
                        shared_table.as_ref().unwrap()
                    } else {
                        local = ComplexTable::build(&ks, |k| self.ray_value(ray, k, &breaks))?;
                        &local
                    };
                    for (o, &k) in out.iter_mut().zip(&ks) {
                        *o += table.get(k) * ray.weight;
                    }
                }
                Ok(out)
            }
        }
    }
}

/// Distinct-value cache, or a cubic log-spaced table when there are many
/// distinct magnitudes.
const DIRECT_LIMIT: usize = 1024;
const TABLE_PER_OCTAVE: f64 = 32.0;

struct ScalarTable {
    exact: HashMap<u64, f64>,
    table: Option<LogTable>,
}

struct LogTable {
    ln_k0: f64,
    step: f64,
    ln_neg: Vec<f64>,
    ratio: Vec<f64>,
}

impl LogTable {
    fn build(kmin: f64, kmax: f64, f: &(dyn Fn(f64) -> Result<Complex64> + Sync)) -> Result<Self> {
        let step = std::f64::consts::LN_2 / TABLE_PER_OCTAVE;
        let ln_k0 = kmin.ln() - 2.0 * step;
        let n = ((kmax.ln() - ln_k0) / step).ceil() as usize + 3;
        let vals: Vec<Complex64> = (0..n)
            .into_par_iter()
            .map(|i| f((ln_k0 + i as f64 * step).exp()))
            .collect::<Result<_>>()?;
        if vals.iter().any(|v| !(v.re < 0.0)) {
            return Err(Error::numerical("symbol table needs strictly negative real parts", 0.0));
        }
        Ok(LogTable {
            ln_k0,
            step,
            ln_neg: vals.iter().map(|v| (-v.re).ln()).collect(),
            ratio: vals.iter().map(|v| v.im / -v.re).collect(),
        })
    }

    fn get(&self, k: f64) -> Complex64 {
        let x = (k.ln() - self.ln_k0) / self.step;
        let last = self.ln_neg.len() - 1;
        if x < 1.0 || x > (last - 1) as f64 {
            // power-law continuation along the end segment
            let (i, j) = if x < 1.0 { (1, 2) } else { (last - 2, last - 1) };
            let lerp = |v: &[f64]| v[i] + (v[j] - v[i]) * (x - i as f64);
            let re = -lerp(&self.ln_neg).exp();
            let ratio = if x < 1.0 { self.ratio[1] } else { self.ratio[last - 1] };
            return Complex64::new(re, -re * ratio);
        }
        let i = (x.floor() as usize).clamp(1, self.ln_neg.len() - 3);
        let t = x - i as f64;
        let cubic = |v: &[f64]| {
            let (a, b, c, d) = (v[i - 1], v[i], v[i + 1], v[i + 2]);
            // 4-point Lagrange at nodes −1, 0, 1, 2
            -t * (t - 1.0) * (t - 2.0) / 6.0 * a + (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0 * b
                - (t + 1.0) * t * (t - 2.0) / 2.0 * c
                + (t + 1.0) * t * (t - 1.0) / 6.0 * d
        };
        let re = -cubic(&self.ln_neg).exp();
        Complex64::new(re, -re * cubic(&self.ratio))
    }
}

impl ScalarTable {
    fn build(ks: &[f64], f: impl Fn(f64) -> Result<f64> + Sync) -> Result<Self> {
        let c = ComplexTable::build(ks, |k| Ok(Complex64::new(f(k)?, 0.0)))?;
        Ok(ScalarTable {
            exact: c.exact.into_iter().map(|(k, v)| (k, v.re)).collect(),
            table: c.table,
        })
    }

    fn get(&self, k: f64) -> f64 {
        if k == 0.0 {
            return 0.0;
        }
        match &self.table {
            Some(t) => t.get(k).re,
            None => self.exact[&k.to_bits()],
        }
    }
}

struct ComplexTable {
    exact: HashMap<u64, Complex64>,
    table: Option<LogTable>,
    conj_negative: bool,
}

impl ComplexTable {
    /// Values at ±k are conjugate; the table is built on |k|.
    fn build(ks: &[f64], f: impl Fn(f64) -> Result<Complex64> + Sync) -> Result<Self> {
        let mut distinct: Vec<f64> = ks.iter().map(|k| k.abs()).filter(|&k| k > 0.0).collect();
        distinct.sort_by(f64::total_cmp);
        distinct.dedup();
        if distinct.len() <= DIRECT_LIMIT {
            let vals: Vec<Complex64> = distinct.par_iter().map(|&k| f(k)).collect::<Result<_>>()?;
            Ok(ComplexTable {
                exact: distinct.iter().map(|k| k.to_bits()).zip(vals).collect(),
                table: None,
                conj_negative: true,
            })
        } else {
            let table = LogTable::build(distinct[0], *distinct.last().unwrap(), &f)?;
            Ok(ComplexTable {
                exact: HashMap::new(),
                table: Some(table),
                conj_negative: true,
            })
        }
    }

    fn get(&self, k: f64) -> Complex64 {
        if k == 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        let v = match &self.table {
            Some(t) => t.get(k.abs()),
            None => self.exact[&k.abs().to_bits()],
        };
        if k < 0.0 && self.conj_negative {
            v.conj()
        } else {
            v
        }
    }
}

/// ρ ↦ ψ(ρe₁) for a symmetric measure that is one-dimensional or rotation
/// invariant, tabulated on [k_min, k_max] when no closed form exists.
pub struct RadialSymbol {
    symbol: Symbol,
    table: Option<LogTable>,
}

impl RadialSymbol {
    pub fn new(spec: &MeasureSpec, k_min: f64, k_max: f64) -> Result<Self> {
        if !spec.is_symmetric() {
            return Err(Error::precondition("radial transforms need a symmetric measure"));
        }
        let symbol = Symbol::new(spec);
        let radial = spec.dim() == 1
            || matches!(spec.family(), Family::RadialStable { .. })
            || matches!(symbol.structure, Structure::Isotropic { .. });
        if !radial {
            return Err(Error::precondition(format!(
                "radial transforms need a rotation-invariant measure; {} in d = 2 is not",
                spec.family_name()
            )));
        }
        let table = if symbol.closed.is_some() {
            None
        } else {
            let sym = symbol.clone();
            Some(LogTable::build(k_min, k_max, &move |k| sym.eval([k, 0.0]))?)
        };
        Ok(RadialSymbol { symbol, table })
    }

    pub fn eval(&self, k: f64) -> f64 {
        let k = k.abs();
        if k == 0.0 {
            return 0.0;
        }
        match &self.table {
            Some(t) => t.get(k).re,
            None => self.symbol.eval([k, 0.0]).map(|v| v.re).unwrap_or(f64::NAN),
        }
    }
}

/// ∫_{ℝ^d} e^{−i2πξ·x} f(|ξ|) dξ at |x| = r for d ∈ {1, 2}: the cosine
/// transform (d = 1) or the Hankel transform of order zero (d = 2).
pub fn radial_fourier(f: &(dyn Fn(f64) -> f64 + Sync), dim: usize, r: f64) -> Result<f64> {
    let r = r.abs();
    let jac = |rho: f64| if dim == 1 { f(rho) } else { rho * f(rho) };
    let factor = if dim == 1 { 2.0 } else { 2.0 * PI };
    if r == 0.0 {
        let v = integral_to_zero(jac, 1.0)? + integral_to_infinity(jac, 1.0)?;
        return Ok(factor * v);
    }
    let om = 2.0 * PI * r;
    let g = |u: f64| jac(u / om) / om;
    let (kernel, zero): (fn(f64) -> f64, fn(usize) -> f64) = if dim == 1 {
        (f64::cos, |n| (n as f64 - 0.5) * PI)
    } else {
        (libm::j0, j0_zero)
    };
    let u0 = zero(1);
    let near = integral_to_zero(|u| kernel(u) * g(u), u0)?;
    let osc = accelerated_sum(
        |n| {
            let (a, b) = (zero(n + 1), zero(n + 2));
            gk_interval(|u| Complex64::new(kernel(u) * g(u), 0.0), a, b)
        },
        0,
        near.abs(),
    )?;
    Ok(factor * (near + osc.re))
}

fn xi_array(spec: &MeasureSpec, xi: &[f64]) -> Result<[f64; 2]> {
    if xi.len() != spec.dim() {
        return Err(Error::domain(format!(
            "frequency has {} components, measure dimension is {}",
            xi.len(),
            spec.dim()
        )));
    }
    Ok(if xi.len() == 1 { [xi[0], 0.0] } else { [xi[0], xi[1]] })
}

fn value(z: Complex64, xi: [f64; 2]) -> SymbolValue {
    SymbolValue { re: z.re, im: z.im, xi }
}

/// ψ^ν(ξ); closed forms for the stable and anisotropic families.
pub fn psi(spec: &MeasureSpec, xi: &[f64]) -> Result<SymbolValue> {
    let x = xi_array(spec, xi)?;
    Ok(value(Symbol::new(spec).eval(x)?, x))
}

/// ψ^ν(ξ) by quadrature regardless of closed forms.
pub fn psi_quadrature(spec: &MeasureSpec, xi: &[f64]) -> Result<SymbolValue> {
    let x = xi_array(spec, xi)?;
    Ok(value(Symbol::new(spec).quadrature_only().eval(x)?, x))
}

/// ∫_s^t ψ^{m,ν}(r, ξ) dr for an x-independent coefficient.
pub fn psi_time_avg(spec: &MeasureSpec, coeff: &CoefficientSpec, s: f64, t: f64, xi: &[f64]) -> Result<SymbolValue> {
    if !(0.0 <= s && s < t) {
        return Err(Error::domain(format!("need 0 ≤ s < t, got s = {s}, t = {t}")));
    }
    if t > 1.0 {
        coeff.check_bounds(t, 4.0)?;
    }
    let x = xi_array(spec, xi)?;
    let w = coeff.jump_weight(s, t)?;
    Ok(value(Symbol::weighted(spec, w).eval(x)? * (t - s), x))
}

/// −(−ψ^{ν_sym}(ξ))^δ.
pub fn psi_fractional(spec: &MeasureSpec, delta: f64, xi: &[f64]) -> Result<SymbolValue> {
    if !(delta > 0.0 && delta < 2.0) {
        return Err(Error::domain(format!("fractional order {delta} outside (0, 2)")));
    }
    let x = xi_array(spec, xi)?;
    let v = Symbol::new(&spec.symmetrize()).eval(x)?;
    Ok(value(Complex64::new(fractional_power(v.re, delta), 0.0), x))
}

/// Principal branch: −|v|^δ for real v ≤ 0.
pub fn fractional_power(v: f64, delta: f64) -> f64 {
    -(-v).max(0.0).powf(delta)
}

#[derive(Debug, Clone, Copy)]
pub struct SymbolBoundReport {
    /// sup of |ψ^{π̃_R}(ξ)| · w̃_R(1/|ξ|)
    pub upper: f64,
    pub upper_witness: ([f64; 2], f64),
    /// inf of −ℜψ^{π̃_R}(ξ) · w̃_R(1/|ξ|) / k
    pub lower: f64,
    pub lower_witness: ([f64; 2], f64),
}

/// Sup/inf of the normalized symbol over frequency and scale grids; the
/// coefficient (if any) is frozen at t = 0, x = 0.
pub fn verify_symbol_bounds(
    spec: &MeasureSpec,
    coeff: Option<&CoefficientSpec>,
    xi_grid: &[[f64; 2]],
    r_grid: &[f64],
) -> Result<SymbolBoundReport> {
    if xi_grid.is_empty() || r_grid.is_empty() {
        return Err(Error::domain("symbol bound check needs non-empty grids"));
    }
    let w = spec.w_profile();
    let (weight, k) = match coeff {
        Some(c) => (c.jump_weight_at(0.0, 0.0, [0.0; 2]), c.k),
        None => (JumpWeight::constant(1.0), 1.0),
    };
    let mut rep = SymbolBoundReport {
        upper: 0.0,
        upper_witness: ([f64::NAN; 2], f64::NAN),
        lower: f64::INFINITY,
        lower_witness: ([f64::NAN; 2], f64::NAN),
    };
    for &r in r_grid {
        let tilde = spec.rescale(r)?;
        let sym = Symbol::weighted(&tilde, weight.scaled_y(r));
        let wr = w.try_eval(r)?;
        let vals = sym.eval_many(xi_grid)?;
        for (xi, v) in xi_grid.iter().zip(vals) {
            let m = xi[0].hypot(xi[1]);
            if m == 0.0 {
                continue;
            }
            let wt = w.try_eval(r / m)? / wr;
            let up = v.norm() * wt;
            let lo = -v.re * wt / k;
            if up > rep.upper {
                rep.upper = up;
                rep.upper_witness = (*xi, r);
            }
            if lo < rep.lower {
                rep.lower = lo;
                rep.lower_witness = (*xi, r);
            }
        }
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::{Angular, Atom};
    use crate::profile::RadialProfile;

    fn cauchy() -> MeasureSpec {
        MeasureSpec::radial_stable(1, 1.0, 1.0).unwrap()
    }

    #[test]
    fn cauchy_closed_form_and_quadrature() {
        let s = cauchy();
        assert!((psi(&s, &[1.0]).unwrap().re + 2.0 * PI * PI).abs() < 1e-12);
        for j in -6..=6 {
            let xi = (j as f64).exp2();
            let q = psi_quadrature(&s, &[xi]).unwrap();
            let exact = -2.0 * PI * PI * xi;
            assert!((q.re / exact - 1.0).abs() < 1e-9, "xi = {xi}: {}", q.re / exact - 1.0);
            assert!(q.im.abs() < 1e-9 * exact.abs());
        }
    }

    #[test]
    fn stable_quadrature_other_orders() {
        for &(alpha, sigma) in &[(0.5, 0.5), (1.5, 1.5), (1.9, 1.9), (0.2, 0.2)] {
            let s = MeasureSpec::radial_stable_with_sigma(1, alpha, 0.7, sigma).unwrap();
            for &xi in &[0.01, 0.3, 5.0] {
                let q = psi_quadrature(&s, &[xi]).unwrap();
                let e = psi(&s, &[xi]).unwrap();
                assert!((q.re / e.re - 1.0).abs() < 1e-8, "alpha {alpha} xi {xi}: {} vs {}", q.re, e.re);
                assert!(q.im.abs() < 1e-8 * e.re.abs());
            }
        }
    }

    #[test]
    fn bessel_form_matches_2d_stable() {
        for &alpha in &[0.6, 1.0, 1.7] {
            let s = MeasureSpec::radial_stable(2, alpha, 1.0).unwrap();
            for &xi in &[[0.05, 0.0], [0.3, 0.4], [3.0, -4.0]] {
                let q = psi_quadrature(&s, &xi).unwrap();
                let e = psi(&s, &xi).unwrap();
                assert!((q.re / e.re - 1.0).abs() < 1e-8, "alpha {alpha}: {} vs {}", q.re, e.re);
            }
        }
    }

    #[test]
    fn anisotropic_quadrature() {
        let s = MeasureSpec::anisotropic(1.2, vec![1.0, 0.5]).unwrap();
        let xi = [0.7, -1.3];
        let q = psi_quadrature(&s, &xi).unwrap();
        let e = psi(&s, &xi).unwrap();
        assert!((q.re / e.re - 1.0).abs() < 1e-8);
    }

    #[test]
    fn asymmetric_measure_is_conjugate_symmetric() {
        let atoms = Angular::Atoms(vec![
            Atom { dir: [1.0, 0.0], weight: 1.0 },
            Atom { dir: [-1.0, 0.0], weight: 0.3 },
        ]);
        for sigma in [0.5, 1.5] {
            let s = MeasureSpec::radial_angular(1, RadialProfile::power(1.0, -1.0 - sigma), atoms.clone(), sigma).unwrap();
            let a = psi(&s, &[0.8]).unwrap();
            let b = psi(&s, &[-0.8]).unwrap();
            assert!((a.re - b.re).abs() < 1e-10 * a.re.abs() && (a.im + b.im).abs() < 1e-10 * a.re.abs());
            assert!(a.re < 0.0 && a.im.abs() > 1e-3);
        }
    }

    #[test]
    fn fractional_and_zero() {
        let s = cauchy();
        let f = psi_fractional(&s, 0.5, &[1.0]).unwrap();
        assert!((f.re + (2.0 * PI * PI).sqrt()).abs() < 1e-12);
        assert_eq!(psi(&s, &[0.0]).unwrap().re, 0.0);
        assert_eq!(psi_fractional(&s, 0.3, &[0.0]).unwrap().re, 0.0);
    }

    #[test]
    fn time_average_separable() {
        use crate::coefficient::CoefficientForm;
        use crate::expr::Expr;
        let s = cauchy();
        let c = CoefficientSpec::new(
            CoefficientForm::TimeSeparable {
                time: Expr::parse("1 + 0.5*sin(2*pi*t)").unwrap(),
                space: Expr::constant(1.0),
            },
            0.5,
            1.5,
            1.0,
            vec![],
        )
        .unwrap();
        let v = psi_time_avg(&s, &c, 0.1, 0.6, &[0.5]).unwrap();
        let integral = 0.5 + 0.5 / (2.0 * PI) * ((0.2 * PI).cos() - (1.2 * PI).cos());
        assert!((v.re - integral * psi(&s, &[0.5]).unwrap().re).abs() < 1e-10);
    }

    #[test]
    fn unimodal_table_profile() {
        // γ(r) = r as a table: kernel r^-2 in d = 1, i.e. the Cauchy measure
        let g = RadialProfile::table(&[(0.5, 0.5), (2.0, 2.0)]).unwrap();
        let s = MeasureSpec::isotropic_unimodal(1, g, 1.0, 2.0, 1.0).unwrap();
        let v = psi(&s, &[0.25]).unwrap();
        assert!((v.re + 2.0 * PI * PI * 0.25).abs() < 1e-8, "{}", v.re);
    }

    #[test]
    fn many_matches_single() {
        let g = RadialProfile::power_log(1.0, -2.5, 0.3);
        let s = MeasureSpec::radial_angular(2, g, Angular::Uniform, 1.5).unwrap();
        let sym = Symbol::new(&s);
        let xis: Vec<[f64; 2]> = (0..40).map(|j| [0.1 * j as f64, 0.05 * j as f64]).collect();
        let many = sym.eval_many(&xis).unwrap();
        for (x, v) in xis.iter().zip(&many) {
            let one = sym.eval(*x).unwrap();
            assert!((one - v).norm() <= 1e-12 * one.norm().max(1e-300));
        }
    }
}
