//! Lévy measure families, tail functions, rescalings, truncated moments and
//! the non-degeneracy functional.
//!
//! Every family is reduced internally to a [`Structure`]: either a finite set
//! of rays carrying a common radial density, or (in d = 2) a rotation
//! invariant radial density. All radial integrals go through that reduction.

use crate::error::{Error, Result};
use crate::profile::RadialProfile;
use crate::quad::{self, Tolerance};
use std::f64::consts::PI;

/// Unit sphere measure with angular density for the radial-angular family.
#[derive(Debug, Clone, PartialEq)]
pub enum Angular {
    /// Uniform sphere measure (counting measure on {±1} in d = 1, arc
    /// length in d = 2) with a ≡ 1.
    Uniform,
    /// Angular density sampled at equispaced directions (d = 1: values at
    /// +1 and −1; d = 2: angles 2πk/n, interpolated linearly) against the
    /// uniform sphere measure.
    Table(Vec<f64>),
    /// Finite atomic sphere measure.
    Atoms(Vec<Atom>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Atom {
    pub dir: [f64; 2],
    pub weight: f64,
}

#[derive(Debug, Clone)]
pub enum Family {
    /// ν(dy) = c |y|^{-d-α} dy
    RadialStable { alpha: f64, c: f64 },
    /// ν = Σ_i c_i |y_i|^{-1-α} dy_i on the coordinate axes.
    Anisotropic { alpha: f64, c: Vec<f64> },
    /// ν(B) = ∫∫ 1_B(rz) a(z) j(r) r^{d-1} S(dz) dr
    RadialAngular { j: RadialProfile, angular: Angular },
    /// ν(dy) = |y|^{-d} γ(|y|)^{-1} dy with derivative bounds
    /// c_low ≤ (-1)^n j^{(n)}(r) r^{d+n} γ(r) ≤ c_high for n ∈ {0, 1}.
    IsotropicUnimodal {
        gamma: RadialProfile,
        c_low: f64,
        c_high: f64,
    },
}

/// Truncation convention for the compensator term.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Chi {
    /// σ < 1: no compensation.
    Zero,
    /// σ = 1: compensate on |y| ≤ 1.
    UnitBall,
    /// σ > 1: full compensation.
    One,
}

impl Chi {
    pub fn at(&self, r: f64) -> f64 {
        match self {
            Chi::Zero => 0.0,
            Chi::UnitBall => {
                if r <= 1.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Chi::One => 1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MeasureSpec {
    dim: usize,
    sigma: f64,
    family: Family,
    symmetric: bool,
    warnings: Vec<String>,
}

/// Radial density along a ray (d = 1, axes, atoms) or integrated over the
/// circle (rotation-invariant d = 2).
#[derive(Debug, Clone)]
pub(crate) enum Radial {
    /// c · r^exponent
    Power { c: f64, exponent: f64 },
    /// c · j(r) · r^r_pow
    Profile { j: RadialProfile, c: f64, r_pow: f64 },
}

impl Radial {
    pub(crate) fn eval(&self, r: f64) -> f64 {
        match self {
            Radial::Power { c, exponent } => c * r.powf(*exponent),
            Radial::Profile { j, c, r_pow } => c * j.eval(r) * r.powf(*r_pow),
        }
    }

    /// ∫_a^b r^p g(r) dr with a ∈ [0, ∞), b ∈ (a, ∞].
    pub(crate) fn moment(&self, p: f64, a: f64, b: f64) -> Result<f64> {
        if b <= a {
            return Ok(0.0);
        }
        match self {
            Radial::Power { c, exponent } => {
                let q = p + exponent + 1.0;
                if a == 0.0 && q <= 0.0 {
                    return Err(Error::Divergent(format!(
                        "∫_0 r^{p} g(r) dr diverges at the origin (local exponent {})",
                        q - 1.0
                    )));
                }
                if b.is_infinite() && q >= 0.0 {
                    return Err(Error::Divergent(format!(
                        "∫^∞ r^{p} g(r) dr diverges at infinity (local exponent {})",
                        q - 1.0
                    )));
                }
                if q == 0.0 {
                    return Ok(c * (b / a).ln());
                }
                let hi = if b.is_infinite() { 0.0 } else { b.powf(q) };
                let lo = if a == 0.0 { 0.0 } else { a.powf(q) };
                Ok(c * (hi - lo) / q)
            }
            Radial::Profile { .. } => {
                let h = |s: f64| {
                    let r = s.exp();
                    r.powf(p + 1.0) * self.eval(r)
                };
                let tol = Tolerance::new(1e-300, 1e-13);
                let mut total = 0.0;
                let lo = if a == 0.0 { 0.0f64.max(b.min(1.0)) } else { a };
                // inner part: (0, lo]
                if a == 0.0 {
                    let hb = lo.ln();
                    let e = quad::exp_tail(|u: f64| h(hb - u), 0.0, tol, 700.0 + hb);
                    if !e.converged || !e.value.is_finite() {
                        return Err(Error::Divergent(format!(
                            "∫_0 r^{p} g(r) dr does not converge at the origin"
                        )));
                    }
                    total += e.value;
                }
                let mid_hi = if b.is_infinite() { lo.max(1.0) } else { b };
                if mid_hi > lo {
                    let e = quad::adaptive(h, lo.ln(), mid_hi.ln(), tol, 400);
                    if !e.converged {
                        return Err(Error::numerical("radial moment quadrature", e.error));
                    }
                    total += e.value;
                }
                if b.is_infinite() {
                    let e = quad::exp_tail(h, mid_hi.ln(), tol, 700.0);
                    if !e.converged || !e.value.is_finite() {
                        return Err(Error::Divergent(format!(
                            "∫^∞ r^{p} g(r) dr does not converge at infinity"
                        )));
                    }
                    total += e.value;
                }
                Ok(total)
            }
        }
    }

    /// Leading local exponent of g near `r` (d ln g / d ln r).
    pub(crate) fn local_exponent(&self, r: f64) -> f64 {
        match self {
            Radial::Power { exponent, .. } => *exponent,
            _ => {
                let h: f64 = 1e-3;
                ((self.eval(r * h.exp())).ln() - (self.eval(r * (-h).exp())).ln()) / (2.0 * h)
            }
        }
    }

    pub(crate) fn breakpoints(&self) -> Vec<f64> {
        match self {
            Radial::Power { .. } => Vec::new(),
            Radial::Profile { j, .. } => j.breakpoints(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Ray {
    pub dir: [f64; 2],
    pub weight: f64,
}

#[derive(Debug, Clone)]
pub(crate) enum Structure {
    Rays { rays: Vec<Ray>, g: Radial },
    Isotropic { g: Radial },
}

impl Structure {
    pub(crate) fn radial(&self) -> &Radial {
        match self {
            Structure::Rays { g, .. } | Structure::Isotropic { g } => g,
        }
    }

    pub(crate) fn total_weight(&self) -> f64 {
        match self {
            Structure::Rays { rays, .. } => rays.iter().map(|r| r.weight).sum(),
            Structure::Isotropic { .. } => 1.0,
        }
    }
}

/// Moments of the rescaled measure ν̃_R.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentReport {
    pub small_moment: f64,
    pub large_moment: f64,
    pub r: f64,
    pub alpha1: f64,
    pub alpha2: f64,
}

/// Sampled infimum of ∫_{|y|≤1}|ξ̂·y|² ν̃_R(dy) with its minimiser.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NondegeneracyReport {
    pub value: f64,
    pub witness_r: f64,
    pub witness_dir: [f64; 2],
}

/// Surface measure of the unit sphere in d = 1, 2.
pub fn sphere_area(d: usize) -> f64 {
    if d == 1 {
        2.0
    } else {
        2.0 * PI
    }
}

fn check_dim(d: usize) -> Result<()> {
    if d == 1 || d == 2 {
        Ok(())
    } else {
        Err(Error::domain(format!("dimension {d} unsupported (d ∈ {{1, 2}})")))
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 2.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("alpha = {alpha} outside (0, 2)")))
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma > 0.0 && sigma < 2.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("sigma = {sigma} outside (0, 2)")))
    }
}

impl MeasureSpec {
    pub fn radial_stable(dim: usize, alpha: f64, c: f64) -> Result<Self> {
        Self::radial_stable_with_sigma(dim, alpha, c, alpha)
    }

    pub fn radial_stable_with_sigma(dim: usize, alpha: f64, c: f64, sigma: f64) -> Result<Self> {
        check_dim(dim)?;
        check_alpha(alpha)?;
        if !(c > 0.0) {
            return Err(Error::domain(format!("c = {c} must be positive")));
        }
        Self::build(dim, sigma, Family::RadialStable { alpha, c })
    }

    pub fn anisotropic(alpha: f64, c: Vec<f64>) -> Result<Self> {
        Self::anisotropic_with_sigma(alpha, c, alpha)
    }

    pub fn anisotropic_with_sigma(alpha: f64, c: Vec<f64>, sigma: f64) -> Result<Self> {
        check_dim(c.len())?;
        check_alpha(alpha)?;
        if c.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::domain("anisotropic weights c_i must all be positive"));
        }
        Self::build(c.len(), sigma, Family::Anisotropic { alpha, c })
    }

    pub fn radial_angular(dim: usize, j: RadialProfile, angular: Angular, sigma: f64) -> Result<Self> {
        check_dim(dim)?;
        match &angular {
            Angular::Uniform => {}
            Angular::Table(a) => {
                if dim == 1 && a.len() != 2 {
                    return Err(Error::domain("d = 1 angular table needs exactly two values (+1, -1)"));
                }
                if dim == 2 && (a.len() < 2 || a.len() % 2 != 0) {
                    return Err(Error::domain("d = 2 angular table needs an even number of values"));
                }
                if a.iter().any(|&v| !(v >= 0.0)) || a.iter().all(|&v| v == 0.0) {
                    return Err(Error::domain("angular density must be non-negative and not identically zero"));
                }
            }
            Angular::Atoms(atoms) => {
                if atoms.is_empty() {
                    return Err(Error::domain("atomic sphere measure needs at least one atom"));
                }
                for a in atoms {
                    let n = (a.dir[0] * a.dir[0] + a.dir[1] * a.dir[1]).sqrt();
                    if (n - 1.0).abs() > 1e-9 || !(a.weight > 0.0) || (dim == 1 && a.dir[1] != 0.0) {
                        return Err(Error::domain(format!("invalid atom {a:?}: unit direction and positive weight required")));
                    }
                }
            }
        }
        Self::build(dim, sigma, Family::RadialAngular { j, angular })
    }

    pub fn isotropic_unimodal(dim: usize, gamma: RadialProfile, c_low: f64, c_high: f64, sigma: f64) -> Result<Self> {
        check_dim(dim)?;
        if !(c_low > 0.0 && c_high >= c_low) {
            return Err(Error::domain("need 0 < c_low ≤ c_high"));
        }
        let spec = Self::build(dim, sigma, Family::IsotropicUnimodal { gamma, c_low, c_high })?;
        spec.check_unimodal_bounds()?;
        Ok(spec)
    }

    fn build(dim: usize, sigma: f64, family: Family) -> Result<Self> {
        check_sigma(sigma)?;
        let mut spec = MeasureSpec {
            dim,
            sigma,
            family,
            symmetric: false,
            warnings: Vec::new(),
        };
        spec.symmetric = spec.compute_symmetric();
        let st = spec.structure();
        let g = st.radial();
        // ∫ (|y|² ∧ 1) ν(dy) < ∞
        g.moment(2.0, 0.0, 1.0)
            .map_err(|e| Error::precondition(format!("∫_{{|y|≤1}}|y|²ν(dy) must be finite: {e}")))?;
        g.moment(0.0, 1.0, f64::INFINITY)
            .map_err(|e| Error::precondition(format!("ν(|y|>1) must be finite: {e}")))?;
        if sigma == 1.0 {
            let m = spec.first_moment(0.5, 2.0)?;
            let scale = st.total_weight() * g.moment(1.0, 0.5, 2.0)?;
            if m[0].hypot(m[1]) > 1e-12 * scale.max(1.0) {
                return Err(Error::precondition(
                    "σ = 1 requires ∫_{r<|y|≤R} y ν(dy) = 0 on every annulus",
                ));
            }
        }
        if let Some(est) = spec.estimated_order() {
            let implied = match &spec.family {
                Family::RadialStable { .. } | Family::Anisotropic { .. } => None,
                _ => Some(est),
            };
            if let Some(est) = implied {
                if (est - sigma).abs() > 0.1 {
                    spec.warnings.push(format!(
                        "supplied sigma = {sigma} differs from the estimated small-jump exponent {est:.3}"
                    ));
                }
            }
        }
        Ok(spec)
    }

    /// Divergence exponent of ∫_{|y|≤1}|y|^a ν(dy) estimated at r = 2^-30.
    fn estimated_order(&self) -> Option<f64> {
        let g = self.structure().radial().clone();
        let e = g.local_exponent((-30.0f64).exp2());
        e.is_finite().then_some(-1.0 - e)
    }

    fn check_unimodal_bounds(&self) -> Result<()> {
        let Family::IsotropicUnimodal { gamma, c_low, c_high } = &self.family else {
            return Ok(());
        };
        let d = self.dim as f64;
        if *c_low > 1.0 + 1e-12 || *c_high < 1.0 - 1e-12 {
            return Err(Error::precondition(format!(
                "kernel r^-d/γ(r) needs c_low ≤ 1 ≤ c_high, got [{c_low}, {c_high}]"
            )));
        }
        let j = |r: f64| r.powf(-d) / gamma.eval(r);
        for k in -80..=80 {
            let r = (k as f64 / 4.0).exp2();
            let h: f64 = 1e-4;
            let dj = (j(r * h.exp()) - j(r * (-h).exp())) / (r * (h.exp() - (-h).exp()));
            let ratio = -dj * r.powf(d + 1.0) * gamma.eval(r);
            if !(ratio >= c_low * (1.0 - 1e-6) && ratio <= c_high * (1.0 + 1e-6)) {
                return Err(Error::precondition(format!(
                    "derivative bound violated at r = {r:e}: -j'(r) r^(d+1) γ(r) = {ratio:.6} ∉ [{c_low}, {c_high}]"
                )));
            }
        }
        Ok(())
    }

    fn compute_symmetric(&self) -> bool {
        match &self.family {
            Family::RadialStable { .. } | Family::Anisotropic { .. } | Family::IsotropicUnimodal { .. } => true,
            Family::RadialAngular { angular, .. } => match angular {
                Angular::Uniform => true,
                Angular::Table(a) => {
                    let n = a.len();
                    (0..n).all(|k| (a[k] - a[(k + n / 2) % n]).abs() <= 1e-14 * a[k].abs().max(1.0))
                }
                Angular::Atoms(atoms) => atoms.iter().all(|a| {
                    atoms.iter().any(|b| {
                        (a.dir[0] + b.dir[0]).abs() < 1e-12
                            && (a.dir[1] + b.dir[1]).abs() < 1e-12
                            && (a.weight - b.weight).abs() <= 1e-14 * a.weight
                    })
                }),
            },
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn chi(&self) -> Chi {
        if self.sigma < 1.0 {
            Chi::Zero
        } else if self.sigma == 1.0 {
            Chi::UnitBall
        } else {
            Chi::One
        }
    }

    pub fn family_name(&self) -> &'static str {
        match self.family {
            Family::RadialStable { .. } => "radial_stable",
            Family::Anisotropic { .. } => "anisotropic",
            Family::RadialAngular { .. } => "radial_angular",
            Family::IsotropicUnimodal { .. } => "isotropic_unimodal",
        }
    }

    /// Stability index for the self-similar families.
    pub fn stable_alpha(&self) -> Option<f64> {
        match &self.family {
            Family::RadialStable { alpha, .. } | Family::Anisotropic { alpha, .. } => Some(*alpha),
            _ => None,
        }
    }

    pub(crate) fn structure(&self) -> Structure {
        let d = self.dim;
        let axis_rays = |weights: &[f64]| -> Vec<Ray> {
            let mut v = Vec::new();
            for (i, &w) in weights.iter().enumerate() {
                let mut e = [0.0; 2];
                e[i] = 1.0;
                v.push(Ray { dir: e, weight: w });
                v.push(Ray {
                    dir: [-e[0], -e[1]],
                    weight: w,
                });
            }
            v
        };
        match &self.family {
            Family::RadialStable { alpha, c } => {
                if d == 1 {
                    Structure::Rays {
                        rays: axis_rays(&[1.0]),
                        g: Radial::Power {
                            c: *c,
                            exponent: -1.0 - alpha,
                        },
                    }
                } else {
                    Structure::Isotropic {
                        g: Radial::Power {
                            c: 2.0 * PI * c,
                            exponent: -1.0 - alpha,
                        },
                    }
                }
            }
            Family::Anisotropic { alpha, c } => Structure::Rays {
                rays: axis_rays(c),
                g: Radial::Power {
                    c: 1.0,
                    exponent: -1.0 - alpha,
                },
            },
            Family::RadialAngular { j, angular } => {
                let rp = (d - 1) as f64;
                let g = |c: f64| Radial::Profile {
                    j: j.clone(),
                    c,
                    r_pow: rp,
                };
                match angular {
                    Angular::Uniform => {
                        if d == 1 {
                            Structure::Rays {
                                rays: axis_rays(&[1.0]),
                                g: g(1.0),
                            }
                        } else {
                            Structure::Isotropic { g: g(2.0 * PI) }
                        }
                    }
                    Angular::Table(a) => {
                        if d == 1 {
                            Structure::Rays {
                                rays: vec![
                                    Ray {
                                        dir: [1.0, 0.0],
                                        weight: a[0],
                                    },
                                    Ray {
                                        dir: [-1.0, 0.0],
                                        weight: a[1],
                                    },
                                ],
                                g: g(1.0),
                            }
                        } else {
                            let n = (8 * a.len()).max(64);
                            let rays = (0..n)
                                .map(|k| {
                                    let th = 2.0 * PI * k as f64 / n as f64;
                                    Ray {
                                        dir: [th.cos(), th.sin()],
                                        weight: 2.0 * PI / n as f64 * angular_interp(a, th),
                                    }
                                })
                                .collect();
                            Structure::Rays { rays, g: g(1.0) }
                        }
                    }
                    Angular::Atoms(atoms) => Structure::Rays {
                        rays: atoms
                            .iter()
                            .map(|a| Ray {
                                dir: a.dir,
                                weight: a.weight,
                            })
                            .collect(),
                        g: g(1.0),
                    },
                }
            }
            Family::IsotropicUnimodal { gamma, .. } => {
                let j = gamma.reciprocal();
                if d == 1 {
                    Structure::Rays {
                        rays: axis_rays(&[1.0]),
                        g: Radial::Profile { j, c: 1.0, r_pow: -1.0 },
                    }
                } else {
                    Structure::Isotropic {
                        g: Radial::Profile {
                            j,
                            c: 2.0 * PI,
                            r_pow: -1.0,
                        },
                    }
                }
            }
        }
    }

    /// δ_ν(r) = ν(|y| > r).
    pub fn tail_mass(&self, r: f64) -> Result<f64> {
        if !(r > 0.0) {
            return Err(Error::domain(format!("tail_mass needs r > 0, got {r}")));
        }
        match &self.family {
            Family::RadialStable { alpha, c } => Ok(c * sphere_area(self.dim) * r.powf(-alpha) / alpha),
            Family::Anisotropic { alpha, c } => Ok(2.0 * c.iter().sum::<f64>() * r.powf(-alpha) / alpha),
            _ => self.tail_mass_quadrature(r),
        }
    }

    /// Tail mass by quadrature regardless of closed forms.
    pub fn tail_mass_quadrature(&self, r: f64) -> Result<f64> {
        if !(r > 0.0) {
            return Err(Error::domain(format!("tail_mass needs r > 0, got {r}")));
        }
        let st = self.structure();
        let g = match st.radial() {
            Radial::Power { c, exponent } => Radial::Profile {
                j: RadialProfile::power(*c, *exponent),
                c: 1.0,
                r_pow: 0.0,
            },
            other => other.clone(),
        };
        Ok(st.total_weight() * g.moment(0.0, r, f64::INFINITY)?)
    }

    /// w(r) = 1/δ_ν(r).
    pub fn w_profile(&self) -> RadialProfile {
        match &self.family {
            Family::RadialStable { alpha, c } => RadialProfile::power(alpha / (c * sphere_area(self.dim)), *alpha),
            Family::Anisotropic { alpha, c } => RadialProfile::power(alpha / (2.0 * c.iter().sum::<f64>()), *alpha),
            _ => RadialProfile::InverseTail(std::sync::Arc::new(self.clone())),
        }
    }

    /// a(t): left-continuous inverse of w.
    pub fn scale_inverse(&self) -> RadialProfile {
        self.w_profile().inverse()
    }

    /// ν̃_R(dy) = w_ν(R) ν(R dy).
    pub fn rescale(&self, r: f64) -> Result<Self> {
        if !(r > 0.0) {
            return Err(Error::domain(format!("rescale needs R > 0, got {r}")));
        }
        let delta = self.tail_mass(r)?;
        if delta <= 0.0 {
            return Err(Error::precondition("zero tail mass: degenerate measure"));
        }
        self.rescale_with_weight(r, 1.0 / delta)
    }

    /// weight · ν(R dy) for an arbitrary positive weight.
    pub fn rescale_with_weight(&self, r: f64, weight: f64) -> Result<Self> {
        if !(r > 0.0 && weight > 0.0) {
            return Err(Error::domain("rescale needs R > 0 and a positive weight"));
        }
        let d = self.dim as f64;
        let family = match &self.family {
            Family::RadialStable { alpha, c } => Family::RadialStable {
                alpha: *alpha,
                c: c * weight * r.powf(-alpha),
            },
            Family::Anisotropic { alpha, c } => Family::Anisotropic {
                alpha: *alpha,
                c: c.iter().map(|ci| ci * weight * r.powf(-alpha)).collect(),
            },
            Family::RadialAngular { j, angular } => Family::RadialAngular {
                j: j.scaled(r, weight * r.powf(d)),
                angular: angular.clone(),
            },
            Family::IsotropicUnimodal { gamma, c_low, c_high } => Family::IsotropicUnimodal {
                gamma: gamma.scaled(r, 1.0 / weight),
                c_low: *c_low,
                c_high: *c_high,
            },
        };
        Ok(MeasureSpec {
            dim: self.dim,
            sigma: self.sigma,
            family,
            symmetric: self.symmetric,
            warnings: self.warnings.clone(),
        })
    }

    /// factor · ν.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        self.rescale_with_weight(1.0, factor)
    }

    /// Truncated moments of the rescaled measure.
    pub fn truncated_moments(&self, alpha1: f64, alpha2: f64, r: f64) -> Result<MomentReport> {
        let tilde = self.rescale(r)?;
        let st = tilde.structure();
        let w = st.total_weight();
        let small = st.radial().moment(alpha1, 0.0, 1.0).map_err(|e| {
            Error::Divergent(format!("small-jump side ∫_{{|y|≤1}}|y|^{alpha1} ν̃_R(dy): {e}"))
        })? * w;
        let large = st.radial().moment(alpha2, 1.0, f64::INFINITY).map_err(|e| {
            Error::Divergent(format!("large-jump side ∫_{{|y|>1}}|y|^{alpha2} ν̃_R(dy): {e}"))
        })? * w;
        Ok(MomentReport {
            small_moment: small,
            large_moment: large,
            r,
            alpha1,
            alpha2,
        })
    }

    /// Sampled infimum of the non-degeneracy functional.
    pub fn nondegeneracy(&self, r_grid: &[f64], n_dirs: usize) -> Result<NondegeneracyReport> {
        if r_grid.is_empty() {
            return Err(Error::domain("nondegeneracy needs a non-empty R grid"));
        }
        if self.dim == 1 && n_dirs != 2 {
            return Err(Error::domain("d = 1 uses exactly 2 directions"));
        }
        if self.dim == 2 && n_dirs < 4 {
            return Err(Error::domain("d = 2 needs at least 4 directions"));
        }
        let dirs: Vec<[f64; 2]> = if self.dim == 1 {
            vec![[1.0, 0.0], [-1.0, 0.0]]
        } else {
            (0..n_dirs)
                .map(|k| {
                    let th = 2.0 * PI * k as f64 / n_dirs as f64;
                    [th.cos(), th.sin()]
                })
                .collect()
        };
        let mut best = NondegeneracyReport {
            value: f64::INFINITY,
            witness_r: f64::NAN,
            witness_dir: [f64::NAN; 2],
        };
        for &r in r_grid {
            let st = self.rescale(r)?.structure();
            let m2 = st.radial().moment(2.0, 0.0, 1.0)?;
            for dir in &dirs {
                let v = match &st {
                    Structure::Rays { rays, .. } => {
                        rays.iter()
                            .map(|ray| {
                                let p = ray.dir[0] * dir[0] + ray.dir[1] * dir[1];
                                ray.weight * p * p
                            })
                            .sum::<f64>()
                            * m2
                    }
                    Structure::Isotropic { .. } => 0.5 * m2,
                };
                if v < best.value {
                    best = NondegeneracyReport {
                        value: v,
                        witness_r: r,
                        witness_dir: *dir,
                    };
                }
            }
        }
        Ok(best)
    }

    /// ∫_{r_lo < |y| ≤ r_hi} y ν(dy).
    pub fn first_moment(&self, r_lo: f64, r_hi: f64) -> Result<[f64; 2]> {
        match self.structure() {
            Structure::Isotropic { .. } => Ok([0.0, 0.0]),
            Structure::Rays { rays, g } => {
                let m = g.moment(1.0, r_lo, r_hi)?;
                let mut v = [0.0; 2];
                for ray in &rays {
                    v[0] += ray.weight * ray.dir[0] * m;
                    v[1] += ray.weight * ray.dir[1] * m;
                }
                Ok(v)
            }
        }
    }

    /// ν*(dy) = ν(−dy).
    pub fn reflect(&self) -> Self {
        let mut out = self.clone();
        if let Family::RadialAngular { angular, .. } = &mut out.family {
            match angular {
                Angular::Uniform => {}
                Angular::Table(a) => {
                    let n = a.len();
                    let rotated: Vec<f64> = (0..n).map(|k| a[(k + n / 2) % n]).collect();
                    *a = rotated;
                }
                Angular::Atoms(atoms) => {
                    for at in atoms.iter_mut() {
                        at.dir = [-at.dir[0] + 0.0, -at.dir[1] + 0.0];
                    }
                }
            }
        }
        out
    }

    /// ν_sym = (ν + ν*)/2.
    pub fn symmetrize(&self) -> Self {
        let mut out = self.clone();
        if let Family::RadialAngular { angular, .. } = &mut out.family {
            match angular {
                Angular::Uniform => {}
                Angular::Table(a) => {
                    let n = a.len();
                    let sym: Vec<f64> = (0..n).map(|k| 0.5 * (a[k] + a[(k + n / 2) % n])).collect();
                    *a = sym;
                }
                Angular::Atoms(atoms) => {
                    let mut merged: Vec<Atom> = Vec::new();
                    for at in atoms.iter() {
                        for dir in [at.dir, [-at.dir[0] + 0.0, -at.dir[1] + 0.0]] {
                            let half = 0.5 * at.weight;
                            match merged
                                .iter_mut()
                                .find(|m| (m.dir[0] - dir[0]).abs() < 1e-12 && (m.dir[1] - dir[1]).abs() < 1e-12)
                            {
                                Some(m) => m.weight += half,
                                None => merged.push(Atom { dir, weight: half }),
                            }
                        }
                    }
                    merged.sort_by(|a, b| a.dir[0].total_cmp(&b.dir[0]).then(a.dir[1].total_cmp(&b.dir[1])));
                    *atoms = merged;
                }
            }
        }
        out.symmetric = true;
        out
    }
}

fn angular_interp(a: &[f64], theta: f64) -> f64 {
    let n = a.len();
    let u = theta / (2.0 * PI) * n as f64;
    let k = u.floor();
    let frac = u - k;
    let i = (k as i64).rem_euclid(n as i64) as usize;
    a[i] * (1.0 - frac) + a[(i + 1) % n] * frac
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1.0)
    }

    #[test]
    fn stable_tail_closed_form_and_quadrature() {
        let s = MeasureSpec::radial_stable(1, 0.5, 1.0).unwrap();
        assert!(close(s.tail_mass(4.0).unwrap(), 2.0, 1e-14));
        assert!(close(s.tail_mass_quadrature(4.0).unwrap(), 2.0, 1e-10));
        assert!(close(s.w_profile().eval(4.0), 0.5, 1e-14));
    }

    #[test]
    fn anisotropic_example_values() {
        let s = MeasureSpec::anisotropic(1.0, vec![1.0, 1.0]).unwrap();
        assert!(close(s.tail_mass(2.0).unwrap(), 2.0, 1e-14));
        assert!(close(s.w_profile().eval(8.0), 2.0, 1e-12));
        let q = s.tail_mass_quadrature(2.0).unwrap();
        assert!(close(q, 2.0, 1e-8), "{q}");
    }

    #[test]
    fn rescaled_stable_constant() {
        let s = MeasureSpec::radial_stable(1, 0.5, 1.0).unwrap();
        let t = s.rescale(16.0).unwrap();
        match t.family() {
            Family::RadialStable { c, .. } => assert!(close(*c, 0.25, 1e-14)),
            _ => unreachable!(),
        }
    }

    #[test]
    fn moments_of_half_stable() {
        let s = MeasureSpec::radial_stable(1, 0.5, 1.0).unwrap();
        for &r in &[1.0 / 256.0, 1.0, 256.0] {
            let m = s.truncated_moments(1.0, 0.25, r).unwrap();
            assert!(close(m.small_moment, 1.0, 1e-12));
            assert!(close(m.large_moment, 2.0, 1e-12));
        }
        assert!(matches!(s.truncated_moments(0.3, 0.25, 1.0), Err(Error::Divergent(_))));
    }

    #[test]
    fn nondegeneracy_examples() {
        let grid: Vec<f64> = (-10..=10).map(|j| (j as f64).exp2()).collect();
        let an = MeasureSpec::anisotropic(1.0, vec![1.0, 1.0]).unwrap();
        assert!(close(an.nondegeneracy(&grid, 8).unwrap().value, 0.5, 1e-12));
        let st = MeasureSpec::radial_stable(2, 1.0, 1.0).unwrap();
        assert!(close(st.nondegeneracy(&grid, 8).unwrap().value, 0.5, 1e-12));
        let axis = MeasureSpec::radial_angular(
            2,
            RadialProfile::power(1.0, -3.0),
            Angular::Atoms(vec![
                Atom { dir: [1.0, 0.0], weight: 1.0 },
                Atom { dir: [-1.0, 0.0], weight: 1.0 },
            ]),
            1.0,
        )
        .unwrap();
        let rep = axis.nondegeneracy(&grid, 4).unwrap();
        assert!(rep.value < 1e-25);
        assert!(rep.witness_dir[0].abs() < 1e-12 && (rep.witness_dir[1].abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unimodal_needs_derivative_bounds() {
        let g = RadialProfile::power(1.0, 1.0);
        assert!(MeasureSpec::isotropic_unimodal(1, g.clone(), 1.0, 2.0, 1.0).is_ok());
        assert!(MeasureSpec::isotropic_unimodal(1, g, 1.0, 1.5, 1.0).is_err());
    }

    #[test]
    fn sigma_one_requires_cancellation() {
        let lopsided = Angular::Atoms(vec![Atom { dir: [1.0, 0.0], weight: 1.0 }]);
        assert!(MeasureSpec::radial_angular(1, RadialProfile::power(1.0, -2.0), lopsided.clone(), 1.0).is_err());
        assert!(MeasureSpec::radial_angular(1, RadialProfile::power(1.0, -2.0), lopsided, 0.9).is_ok());
    }

    #[test]
    fn reflect_and_symmetrize() {
        let atoms = Angular::Atoms(vec![
            Atom { dir: [1.0, 0.0], weight: 2.0 },
            Atom { dir: [0.0, 1.0], weight: 1.0 },
        ]);
        let s = MeasureSpec::radial_angular(2, RadialProfile::power(1.0, -2.5), atoms, 0.5).unwrap();
        assert!(!s.is_symmetric());
        let rr = s.reflect().reflect();
        match (rr.family(), s.family()) {
            (Family::RadialAngular { angular: a, .. }, Family::RadialAngular { angular: b, .. }) => assert_eq!(a, b),
            _ => unreachable!(),
        }
        let sym = s.symmetrize();
        assert!(sym.compute_symmetric());
        match (sym.symmetrize().family(), sym.family()) {
            (Family::RadialAngular { angular: a, .. }, Family::RadialAngular { angular: b, .. }) => assert_eq!(a, b),
            _ => unreachable!(),
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(MeasureSpec::radial_stable(3, 1.0, 1.0).is_err());
        assert!(MeasureSpec::radial_stable(1, 2.0, 1.0).is_err());
        assert!(MeasureSpec::radial_stable(1, 1.0, -1.0).is_err());
        assert!(MeasureSpec::anisotropic(1.0, vec![1.0, 0.0]).is_err());
        let s = MeasureSpec::radial_stable(1, 1.0, 1.0).unwrap();
        assert!(s.tail_mass(0.0).is_err());
    }
}
