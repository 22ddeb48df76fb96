//! Bessel-potential and generator norms of grid fields, space-time norms of
//! trajectories, operator comparison ratios, and the versioned test corpus.

use crate::error::{Error, Result};
use crate::grid::SpectralGrid;
use crate::measures::MeasureSpec;
use crate::quad;
use crate::symbol::{self, Symbol};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use std::fmt;
use std::str::FromStr;

pub const CORPUS_VERSION: &str = "corpus-v1";
pub const CORPUS_SEED: u64 = 0x6c76_6b31;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MultiplierKind {
    /// (1 − ψ^{ν_sym})^s
    Bessel,
    /// −(−ψ^{ν_sym})^s
    Fractional,
    /// ψ^ν (s ignored)
    Generator,
}

impl FromStr for MultiplierKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bessel" => Ok(MultiplierKind::Bessel),
            "fractional" => Ok(MultiplierKind::Fractional),
            "generator" => Ok(MultiplierKind::Generator),
            _ => Err(Error::domain(format!("unknown multiplier kind '{s}'"))),
        }
    }
}

fn check_p(p: f64) -> Result<()> {
    if !(p >= 1.0 && p.is_finite()) {
        return Err(Error::domain(format!("norm exponent p = {p} must lie in [1, ∞)")));
    }
    Ok(())
}

/// Multiplier samples on the grid frequencies.
pub fn multiplier(grid: &SpectralGrid, spec: &MeasureSpec, s: f64, kind: MultiplierKind) -> Result<Vec<Complex64>> {
    if !s.is_finite() {
        return Err(Error::domain(format!("smoothness s = {s} must be a finite real")));
    }
    if spec.dim() != grid.dim() {
        return Err(Error::domain("measure and grid dimensions differ"));
    }
    let freqs = grid.frequencies();
    match kind {
        MultiplierKind::Generator => Symbol::new(spec).eval_many(&freqs),
        MultiplierKind::Bessel | MultiplierKind::Fractional => {
            let sym = Symbol::new(&spec.symmetrize()).eval_many(&freqs)?;
            Ok(sym
                .iter()
                .map(|v| {
                    let re = v.re.min(0.0);
                    let m = match kind {
                        MultiplierKind::Bessel => (1.0 - re).powf(s),
                        _ if s == 0.0 => 1.0,
                        _ => symbol::fractional_power(re, s),
                    };
                    Complex64::new(m, 0.0)
                })
                .collect())
        }
    }
}

fn check_field(grid: &SpectralGrid, field: &[f64]) -> Result<()> {
    if field.len() != grid.len() {
        return Err(Error::domain(format!("field has {} values, grid has {}", field.len(), grid.len())));
    }
    Ok(())
}

/// |𝓕⁻¹[m 𝓕 f]|_{L_p} for the chosen multiplier.
pub fn multiplier_norm(
    grid: &SpectralGrid,
    field: &[f64],
    spec: &MeasureSpec,
    s: f64,
    p: f64,
    kind: MultiplierKind,
) -> Result<f64> {
    check_p(p)?;
    check_field(grid, field)?;
    if kind == MultiplierKind::Bessel && s == 0.0 {
        return Ok(grid.lp_norm(field, p));
    }
    let m = multiplier(grid, spec, s, kind)?;
    Ok(grid.lp_norm(&grid.apply_multiplier(field, &m), p))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormReport {
    pub lp: f64,
    pub generator_lp: f64,
    pub bessel: f64,
    pub s: f64,
    pub p: f64,
}

impl NormReport {
    pub fn csv_header() -> &'static str {
        "s,p,lp,generator_lp,bessel"
    }

    pub fn csv_row(&self) -> String {
        format!("{},{},{:e},{:e},{:e}", self.s, self.p, self.lp, self.generator_lp, self.bessel)
    }
}

pub fn norm_report(grid: &SpectralGrid, field: &[f64], spec: &MeasureSpec, s: f64, p: f64) -> Result<NormReport> {
    Ok(NormReport {
        lp: multiplier_norm(grid, field, spec, 0.0, p, MultiplierKind::Bessel)?,
        generator_lp: multiplier_norm(grid, field, spec, 0.0, p, MultiplierKind::Generator)?,
        bessel: multiplier_norm(grid, field, spec, s, p, MultiplierKind::Bessel)?,
        s,
        p,
    })
}

/// (∫ |f(t)|_{L_p}^p dt)^{1/p} over the node span, by the cumulative
/// degree-5 rule.
pub fn spacetime_norm(grid: &SpectralGrid, times: &[f64], fields: &[Vec<f64>], p: f64) -> Result<f64> {
    check_p(p)?;
    if times.len() != fields.len() {
        return Err(Error::domain("time nodes and fields differ in number"));
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::domain("time nodes must be strictly increasing"));
    }
    for f in fields {
        check_field(grid, f)?;
    }
    if times.len() < 2 {
        return Ok(0.0);
    }
    let powers: Vec<f64> = fields.par_iter().map(|f| grid.lp_norm(f, p).powf(p)).collect();
    let c = quad::cumulative(times, &powers);
    Ok(c.last().unwrap().max(0.0).powf(1.0 / p))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContinuityReport {
    pub sup: f64,
    pub argsup: Option<String>,
    /// fields with |L^ν f|_p below the guard
    pub skipped: Vec<String>,
}

/// sup over the named fields of |L^π f|_p / |L^ν f|_p; π is any symbol
/// (for instance a weighted one, m(y)ν).
pub fn continuity_ratio(
    grid: &SpectralGrid,
    pi: &Symbol,
    spec: &MeasureSpec,
    fields: &[(String, Vec<f64>)],
    p: f64,
) -> Result<ContinuityReport> {
    check_p(p)?;
    let freqs = grid.frequencies();
    let mp = pi.eval_many(&freqs)?;
    let mn = Symbol::new(spec).eval_many(&freqs)?;
    let mut rep = ContinuityReport {
        sup: 0.0,
        argsup: None,
        skipped: Vec::new(),
    };
    for (name, f) in fields {
        check_field(grid, f)?;
        let den = grid.lp_norm(&grid.apply_multiplier(f, &mn), p);
        if den < 1e-12 {
            rep.skipped.push(name.clone());
            continue;
        }
        let q = grid.lp_norm(&grid.apply_multiplier(f, &mp), p) / den;
        if q > rep.sup {
            rep.sup = q;
            rep.argsup = Some(name.clone());
        }
    }
    Ok(rep)
}

/// Range of (|f| + |L^{ν;1} f|)/(|f| + |L^ν f|) over the fields.
pub fn equivalence_range(grid: &SpectralGrid, spec: &MeasureSpec, fields: &[(String, Vec<f64>)], p: f64) -> Result<(f64, f64)> {
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for (_, f) in fields {
        let plain = grid.lp_norm(f, p);
        let frac = multiplier_norm(grid, f, spec, 1.0, p, MultiplierKind::Fractional)?;
        let gen = multiplier_norm(grid, f, spec, 0.0, p, MultiplierKind::Generator)?;
        let q = (plain + frac) / (plain + gen);
        lo = lo.min(q);
        hi = hi.max(q);
    }
    Ok((lo, hi))
}

/// A named corpus field.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusField {
    pub name: String,
    pub values: Vec<f64>,
}

impl fmt::Display for CorpusField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.name)
    }
}

/// The fixed test corpus: Gaussians of three widths, differences of
/// smooth bumps, and band-limited fields with seeded spectra. Widths scale
/// with the box so the corpus refines with the grid.
pub fn corpus(grid: &SpectralGrid) -> Vec<CorpusField> {
    let l = grid.half_width();
    let pts = grid.points();
    let r2 = |p: &[f64; 2], c: [f64; 2]| (p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2);
    let mut out = Vec::new();
    for (k, &w) in [l / 32.0, l / 16.0, l / 8.0].iter().enumerate() {
        out.push(CorpusField {
            name: format!("gauss-{k}"),
            values: pts.iter().map(|p| (-r2(p, [0.0; 2]) / (2.0 * w * w)).exp()).collect(),
        });
    }
    let bump = |p: &[f64; 2], c: [f64; 2], rad: f64| {
        let q = r2(p, c) / (rad * rad);
        if q < 1.0 {
            (-1.0 / (1.0 - q)).exp()
        } else {
            0.0
        }
    };
    for (k, &sep) in [l / 8.0, l / 4.0].iter().enumerate() {
        let rad = l / 8.0;
        out.push(CorpusField {
            name: format!("bump-diff-{k}"),
            values: pts.iter().map(|p| bump(p, [sep, 0.0], rad) - bump(p, [-sep, 0.0], rad)).collect(),
        });
    }
    for k in 0..3u64 {
        out.push(CorpusField {
            name: format!("band-{k}"),
            values: band_limited(grid, 8, CORPUS_SEED + k),
        });
    }
    out
}

/// Real field whose spectrum is Gaussian noise on |k|_∞ ≤ kmax (integer
/// lattice indices), zero elsewhere and at k = 0.
pub fn band_limited(grid: &SpectralGrid, kmax: i64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = grid.n();
    let mut spec = vec![Complex64::new(0.0, 0.0); grid.len()];
    let idx = |k: i64| -> usize { k.rem_euclid(n as i64) as usize };
    let d = grid.dim();
    let k2max = if d == 2 { kmax } else { 0 };
    for k1 in -kmax..=kmax {
        for k2 in -k2max..=k2max {
            if (k1, k2) == (0, 0) {
                continue;
            }
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            let slot = if d == 1 { idx(k1) } else { idx(k1) * n + idx(k2) };
            spec[slot] = Complex64::new(re, im);
        }
    }
    grid.inverse(&mut spec);
    // the real part keeps the band and symmetrizes the spectrum
    let v: Vec<f64> = spec.iter().map(|c| c.re).collect();
    let m = v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    v.iter().map(|x| x / m).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn cauchy() -> MeasureSpec {
        MeasureSpec::radial_stable(1, 1.0, 1.0).unwrap()
    }

    #[test]
    fn bessel_zero_is_plain_norm() {
        let g = SpectralGrid::new(1, 128, 8.0).unwrap();
        let f = band_limited(&g, 5, 3);
        let a = multiplier_norm(&g, &f, &cauchy(), 0.0, 2.0, MultiplierKind::Bessel).unwrap();
        assert_eq!(a, g.lp_norm(&f, 2.0));
    }

    #[test]
    fn generator_eigenvalue() {
        let g = SpectralGrid::new(1, 128, 8.0).unwrap();
        let xi0 = 0.375;
        let f: Vec<f64> = g.points().iter().map(|p| (2.0 * PI * xi0 * p[0]).cos()).collect();
        let v = multiplier_norm(&g, &f, &cauchy(), 0.0, 2.0, MultiplierKind::Generator).unwrap();
        assert!((v - 2.0 * PI * PI * xi0 * g.lp_norm(&f, 2.0)).abs() < 1e-10);
    }

    #[test]
    fn spacetime_linear_growth() {
        let g = SpectralGrid::new(1, 64, 4.0).unwrap();
        let base = band_limited(&g, 4, 1);
        let times: Vec<f64> = (0..=20).map(|i| i as f64 / 20.0).collect();
        let traj: Vec<Vec<f64>> = times.iter().map(|t| base.iter().map(|b| t * b).collect()).collect();
        let v = spacetime_norm(&g, &times, &traj, 2.0).unwrap();
        let exact = (1.0f64 / 3.0).sqrt() * g.lp_norm(&base, 2.0);
        assert!((v / exact - 1.0).abs() < 1e-12);
        assert!(spacetime_norm(&g, &[1.0, 0.5], &traj[..2], 2.0).is_err());
    }

    #[test]
    fn corpus_is_reproducible() {
        let g = SpectralGrid::new(2, 32, 4.0).unwrap();
        assert_eq!(corpus(&g), corpus(&g));
        assert_eq!(corpus(&g).len(), 8);
    }
}
