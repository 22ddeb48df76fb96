//! Monte Carlo increments Z_t − Z_s of the jump process driven by the
//! intensity m(r, y)ν(dy)dr: jumps larger than ε are simulated as a
//! compound Poisson process (thinned against K·ν), the compensator of the
//! truncated χ_σ part is added as a drift, and jumps below ε are dropped.

use crate::coefficient::CoefficientSpec;
use crate::error::{Error, Result};
use crate::measures::{Chi, MeasureSpec, Radial, Structure};
use crate::quad::{self, Tolerance};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use std::f64::consts::PI;

/// Largest tolerated expected jump count per path.
pub const MAX_JUMPS_PER_PATH: f64 = 1e8;

#[derive(Debug, Clone)]
pub struct SamplePlan {
    pub spec: MeasureSpec,
    pub coeff: CoefficientSpec,
    pub s: f64,
    pub t: f64,
    pub n: usize,
    pub eps: f64,
    pub seed: u64,
}

impl SamplePlan {
    pub fn new(spec: MeasureSpec, s: f64, t: f64, n: usize, eps: f64, seed: u64) -> Self {
        SamplePlan {
            spec,
            coeff: CoefficientSpec::unit(),
            s,
            t,
            n,
            eps,
            seed,
        }
    }

    pub fn with_coefficient(mut self, coeff: CoefficientSpec) -> Self {
        self.coeff = coeff;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::domain(format!("truncation radius eps = {} must be positive", self.eps)));
        }
        if self.n == 0 {
            return Err(Error::domain("sample count must be at least 1"));
        }
        if !(self.s >= 0.0 && self.t > self.s) {
            return Err(Error::domain(format!("need t > s ≥ 0, got s = {}, t = {}", self.s, self.t)));
        }
        if self.coeff.depends_on_x() {
            return Err(Error::precondition(
                "path simulation needs a coefficient independent of x",
            ));
        }
        Ok(())
    }

    /// Expected number of proposed jumps per path, K(t−s)δ_ν(ε).
    pub fn expected_jumps(&self) -> Result<f64> {
        Ok(self.coeff.k_upper * (self.t - self.s) * self.spec.tail_mass(self.eps)?)
    }
}

/// n samples of dimension `dim`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Samples {
    pub dim: usize,
    pub data: Vec<[f64; 2]>,
}

impl Samples {
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn mean(&self) -> [f64; 2] {
        let n = self.data.len() as f64;
        let s = self.data.iter().fold([0.0; 2], |a, x| [a[0] + x[0], a[1] + x[1]]);
        [s[0] / n, s[1] / n]
    }

    pub fn std(&self) -> [f64; 2] {
        let m = self.mean();
        let n = self.data.len() as f64;
        let v = self
            .data
            .iter()
            .fold([0.0; 2], |a, x| [a[0] + (x[0] - m[0]).powi(2), a[1] + (x[1] - m[1]).powi(2)]);
        [(v[0] / n).sqrt(), (v[1] / n).sqrt()]
    }
}

/// Radius law of g restricted to (ε, ∞).
enum RadiusLaw {
    /// g ∝ r^{−1−α}: r = ε U^{−1/α}
    Pareto { alpha: f64 },
    /// Tabulated tail function T(r) = ∫_r^∞ g on a log grid, inverted by
    /// log-log interpolation, continued as a power law past the last node.
    Table { ln_r: Vec<f64>, ln_tail: Vec<f64>, slope: f64 },
}

const TABLE_PER_OCTAVE: f64 = 16.0;
const TABLE_OCTAVES: f64 = 64.0;

impl RadiusLaw {
    fn new(g: &Radial, eps: f64) -> Result<(Self, f64)> {
        match g {
            Radial::Power { c, exponent } => {
                let alpha = -1.0 - exponent;
                let mass = c * eps.powf(-alpha) / alpha;
                Ok((RadiusLaw::Pareto { alpha }, mass))
            }
            Radial::Profile { .. } => {
                let count = (TABLE_PER_OCTAVE * TABLE_OCTAVES) as usize;
                let step = std::f64::consts::LN_2 / TABLE_PER_OCTAVE;
                let ln_r: Vec<f64> = (0..=count).map(|k| eps.ln() + k as f64 * step).collect();
                let pieces: Vec<f64> = ln_r
                    .par_windows(2)
                    .map(|w| g.moment(0.0, w[0].exp(), w[1].exp()))
                    .collect::<Result<_>>()?;
                let far = g.moment(0.0, ln_r[count].exp(), f64::INFINITY)?;
                let mut tail = vec![far; count + 1];
                for k in (0..count).rev() {
                    tail[k] = tail[k + 1] + pieces[k];
                }
                if !(tail[0] > 0.0) {
                    return Err(Error::precondition("truncated measure has no mass beyond eps"));
                }
                let slope = g.local_exponent(ln_r[count].exp()) + 1.0;
                let ln_tail = tail.iter().map(|v| v.max(1e-300).ln()).collect();
                let mass = tail[0];
                Ok((RadiusLaw::Table { ln_r, ln_tail, slope }, mass))
            }
        }
    }

    fn sample(&self, eps: f64, u: f64) -> f64 {
        match self {
            RadiusLaw::Pareto { alpha } => eps * u.powf(-1.0 / alpha),
            RadiusLaw::Table { ln_r, ln_tail, slope } => {
                // T(r) = u T(ε)
                let target = u.ln() + ln_tail[0];
                let last = ln_tail.len() - 1;
                if target <= ln_tail[last] {
                    return (ln_r[last] + (target - ln_tail[last]) / slope).exp();
                }
                let i = ln_tail.partition_point(|&v| v > target).max(1);
                let (a, b) = (ln_tail[i - 1], ln_tail[i]);
                let f = if a == b { 0.0 } else { (target - a) / (b - a) };
                (ln_r[i - 1] + f * (ln_r[i] - ln_r[i - 1])).exp()
            }
        }
    }
}

/// Direction law: a finite set of weighted rays or the uniform circle.
enum DirectionLaw {
    Rays { dirs: Vec<[f64; 2]>, cumulative: Vec<f64> },
    Uniform,
}

impl DirectionLaw {
    fn sample(&self, u: f64) -> [f64; 2] {
        match self {
            DirectionLaw::Rays { dirs, cumulative } => {
                let total = *cumulative.last().unwrap();
                let i = cumulative.partition_point(|&c| c <= u * total).min(dirs.len() - 1);
                dirs[i]
            }
            DirectionLaw::Uniform => {
                let th = 2.0 * PI * u;
                [th.cos(), th.sin()]
            }
        }
    }
}

struct Sampler {
    dim: usize,
    radius: RadiusLaw,
    direction: DirectionLaw,
    eps: f64,
    rate: f64,
    drift: [f64; 2],
    k_upper: f64,
    thinning: bool,
    timed: bool,
}

impl Sampler {
    fn new(plan: &SamplePlan) -> Result<Self> {
        let structure = plan.spec.structure();
        let g = structure.radial().clone();
        let (radius, radial_mass) = RadiusLaw::new(&g, plan.eps)?;
        let (direction, dir_weight) = match &structure {
            Structure::Rays { rays, .. } => {
                let mut acc = 0.0;
                let mut dirs = Vec::new();
                let mut cumulative = Vec::new();
                for r in rays.iter().filter(|r| r.weight > 0.0) {
                    acc += r.weight;
                    dirs.push(r.dir);
                    cumulative.push(acc);
                }
                (DirectionLaw::Rays { dirs, cumulative }, acc)
            }
            Structure::Isotropic { .. } => (DirectionLaw::Uniform, 1.0),
        };
        let span = plan.t - plan.s;
        let rate = plan.coeff.k_upper * span * radial_mass * dir_weight;
        if rate > MAX_JUMPS_PER_PATH {
            return Err(Error::precondition(format!(
                "jump rate overflow: {rate:.3e} expected jumps per path exceeds {MAX_JUMPS_PER_PATH:.0e}; use a larger eps"
            )));
        }
        let drift = compensator_drift(plan, &structure)?;
        Ok(Sampler {
            dim: plan.spec.dim(),
            radius,
            direction,
            eps: plan.eps,
            rate,
            drift,
            k_upper: plan.coeff.k_upper,
            thinning: plan.coeff.constant_value() != Some(plan.coeff.k_upper),
            timed: plan.coeff.depends_on_t(),
        })
    }

    fn path(&self, plan: &SamplePlan, index: u64) -> [f64; 2] {
        let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
        rng.set_stream(index);
        let mut x = self.drift;
        if self.rate <= 0.0 {
            return x;
        }
        let count = Poisson::new(self.rate).map(|p| p.sample(&mut rng) as u64).unwrap_or(0);
        let span = plan.t - plan.s;
        for _ in 0..count {
            let r = self.radius.sample(self.eps, 1.0 - rng.random::<f64>());
            let dir = self.direction.sample(rng.random::<f64>());
            let y = [r * dir[0], r * dir[1]];
            if self.thinning {
                let time = if self.timed { plan.s + span * rng.random::<f64>() } else { plan.s };
                let m = plan.coeff.eval(time, [0.0; 2], y);
                if rng.random::<f64>() * self.k_upper >= m {
                    continue;
                }
            }
            x[0] += y[0];
            x[1] += y[1];
        }
        if self.dim == 1 {
            x[1] = 0.0;
        }
        x
    }
}

/// −∫_s^t ∫_{|y|>ε} χ_σ(y) y m(r, y) ν(dy) dr.
fn compensator_drift(plan: &SamplePlan, structure: &Structure) -> Result<[f64; 2]> {
    let chi = plan.spec.chi();
    if chi == Chi::Zero {
        return Ok([0.0; 2]);
    }
    let span = plan.t - plan.s;
    let weight = plan.coeff.jump_weight(plan.s, plan.t)?;
    let g = structure.radial();
    let upper = if chi == Chi::UnitBall { 1.0 } else { f64::INFINITY };
    if plan.eps >= upper {
        return Ok([0.0; 2]);
    }
    let along = |dir: [f64; 2]| -> Result<f64> {
        if weight.is_constant() {
            return Ok(weight.scale * g.moment(1.0, plan.eps, upper)?);
        }
        let f = |s: f64| {
            let r = s.exp();
            r * r * g.eval(r) * weight.at([r * dir[0], r * dir[1]])
        };
        let tol = Tolerance::new(1e-300, 1e-10);
        let e = if upper.is_finite() {
            quad::adaptive(f, plan.eps.ln(), upper.ln(), tol, 400)
        } else {
            quad::exp_tail(f, plan.eps.ln(), tol, 700.0)
        };
        if !e.converged || !e.value.is_finite() {
            return Err(Error::Divergent("compensator drift integral diverges".into()));
        }
        Ok(e.value)
    };
    let mut drift = [0.0; 2];
    match structure {
        Structure::Rays { rays, .. } => {
            for r in rays {
                let m = along(r.dir)? * r.weight;
                drift[0] -= m * r.dir[0];
                drift[1] -= m * r.dir[1];
            }
        }
        Structure::Isotropic { .. } => {
            if !weight.is_radial() {
                let n = 256;
                for k in 0..n {
                    let th = 2.0 * PI * k as f64 / n as f64;
                    let dir = [th.cos(), th.sin()];
                    let m = along(dir)? / n as f64;
                    drift[0] -= m * dir[0];
                    drift[1] -= m * dir[1];
                }
            }
        }
    }
    Ok([drift[0] * span, drift[1] * span])
}

/// Independent increments, one RNG stream per path: the output does not
/// depend on the thread count.
pub fn sample_increments(plan: &SamplePlan) -> Result<Samples> {
    plan.validate()?;
    let sampler = Sampler::new(plan)?;
    let data = (0..plan.n as u64)
        .into_par_iter()
        .map(|i| sampler.path(plan, i))
        .collect();
    Ok(Samples {
        dim: plan.spec.dim(),
        data,
    })
}

/// (1/n) Σ_j e^{i2πξ·X_j}.
pub fn empirical_cf(samples: &Samples, xis: &[[f64; 2]]) -> Result<Vec<Complex64>> {
    if samples.is_empty() {
        return Err(Error::domain("empirical CF needs at least one sample"));
    }
    let n = samples.len() as f64;
    Ok(xis
        .iter()
        .map(|xi| {
            let sum = samples.data.iter().fold(Complex64::new(0.0, 0.0), |acc, x| {
                acc + Complex64::from_polar(1.0, 2.0 * PI * (xi[0] * x[0] + xi[1] * x[1]))
            });
            sum / n
        })
        .collect())
}

/// (t−s) ∫_{|y|≤ε} |2πξ·y|² m ν(dy), bounding the effect of the dropped
/// small jumps on the characteristic function; m is bounded by K.
pub fn truncation_bias(plan: &SamplePlan, xi: [f64; 2]) -> Result<f64> {
    let structure = plan.spec.structure();
    let g = structure.radial();
    let second = g.moment(2.0, 0.0, plan.eps)?;
    let k2 = 4.0 * PI * PI;
    let proj = match &structure {
        Structure::Rays { rays, .. } => rays
            .iter()
            .map(|r| r.weight * (r.dir[0] * xi[0] + r.dir[1] * xi[1]).powi(2))
            .sum::<f64>(),
        // angular mean of cos² is ½
        Structure::Isotropic { .. } => 0.5 * (xi[0] * xi[0] + xi[1] * xi[1]),
    };
    let m = plan.coeff.constant_value().unwrap_or(plan.coeff.k_upper);
    Ok((plan.t - plan.s) * k2 * proj * second * m)
}

/// Histogram density on `bins` equal cells of [−half_width, half_width) in
/// d = 1; samples outside are counted in `outside`.
pub fn histogram(samples: &Samples, half_width: f64, bins: usize) -> (Vec<f64>, f64) {
    let w = 2.0 * half_width / bins as f64;
    let mut counts = vec![0.0; bins];
    let mut outside = 0.0;
    for x in &samples.data {
        let k = ((x[0] + half_width) / w).floor();
        if k >= 0.0 && (k as usize) < bins {
            counts[k as usize] += 1.0;
        } else {
            outside += 1.0;
        }
    }
    let n = samples.len() as f64;
    (counts.iter().map(|c| c / (n * w)).collect(), outside / n)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cauchy() -> MeasureSpec {
        MeasureSpec::radial_stable(1, 1.0, 1.0).unwrap()
    }

    #[test]
    fn deterministic_streams() {
        let plan = SamplePlan::new(cauchy(), 0.0, 1.0, 200, 1e-2, 7);
        let a = sample_increments(&plan).unwrap();
        let b = sample_increments(&plan).unwrap();
        assert_eq!(a, b);
        let other = sample_increments(&SamplePlan { seed: 8, ..plan }).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn ecf_at_zero_and_conjugate() {
        let plan = SamplePlan::new(cauchy(), 0.0, 1.0, 500, 1e-2, 1);
        let s = sample_increments(&plan).unwrap();
        let v = empirical_cf(&s, &[[0.0, 0.0], [0.3, 0.0], [-0.3, 0.0]]).unwrap();
        assert_eq!(v[0], Complex64::new(1.0, 0.0));
        assert!((v[1] - v[2].conj()).norm() < 1e-12);
    }

    #[test]
    fn poisson_jump_count() {
        // with ε = 1 the truncated Cauchy rate is 2 per unit time
        let plan = SamplePlan::new(cauchy(), 0.0, 1.5, 1, 1.0, 3);
        let sampler = Sampler::new(&plan).unwrap();
        assert!((sampler.rate - 3.0).abs() < 1e-12);
    }

    #[test]
    fn rate_overflow() {
        let plan = SamplePlan::new(cauchy(), 0.0, 1.0, 1, 1e-9, 3);
        assert!(sample_increments(&plan).unwrap_err().to_string().contains("overflow"));
    }

    #[test]
    fn tabulated_radius_law_matches_pareto() {
        let g = Radial::Profile {
            j: crate::profile::RadialProfile::power(1.0, 2.0).reciprocal(),
            c: 1.0,
            r_pow: 0.0,
        };
        let (law, mass) = RadiusLaw::new(&g, 0.5).unwrap();
        assert!((mass - 2.0).abs() < 1e-9);
        for &u in &[0.9, 0.5, 0.1, 1e-6, 1e-25] {
            let exact = 0.5 / u;
            assert!((law.sample(0.5, u) / exact - 1.0).abs() < 1e-6, "u {u}");
        }
    }
}
