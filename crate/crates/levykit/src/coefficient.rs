//! Jump-intensity coefficients m(t, x, y) with their bounds k ≤ m ≤ K and
//! Hölder modulus κ.

use crate::error::{Error, Result};
use crate::expr::{Env, Expr, Var};
use crate::profile::RadialProfile;
use crate::quad;
use std::fmt;
use std::sync::Arc;

#[derive(Debug, Clone)]
pub enum CoefficientForm {
    Constant(f64),
    /// time(t) · space(x, y)
    TimeSeparable { time: Expr, space: Expr },
    /// General closed form in t, x, y.
    Sampled(Expr),
}

#[derive(Debug, Clone)]
enum Kind {
    Form(CoefficientForm),
    /// Average of the inner coefficient over a set of x nodes.
    XAverage { inner: Arc<CoefficientSpec>, nodes: Arc<Vec<[f64; 2]>> },
}

#[derive(Debug, Clone)]
pub struct CoefficientSpec {
    kind: Kind,
    pub k: f64,
    pub k_upper: f64,
    pub beta: f64,
    kappa: Vec<(f64, f64)>,
}

/// y-dependent weight multiplying ν, already averaged in time where needed.
#[derive(Clone)]
pub struct JumpWeight {
    pub(crate) scale: f64,
    pub(crate) func: Option<Arc<dyn Fn([f64; 2]) -> f64 + Send + Sync>>,
    pub(crate) radial: bool,
}

impl fmt::Debug for JumpWeight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("JumpWeight")
            .field("scale", &self.scale)
            .field("y_dependent", &self.func.is_some())
            .field("radial", &self.radial)
            .finish()
    }
}

impl JumpWeight {
    pub fn constant(v: f64) -> Self {
        JumpWeight {
            scale: v,
            func: None,
            radial: true,
        }
    }

    pub fn from_fn(f: impl Fn([f64; 2]) -> f64 + Send + Sync + 'static, radial: bool) -> Self {
        JumpWeight {
            scale: 1.0,
            func: Some(Arc::new(f)),
            radial,
        }
    }

    pub fn at(&self, y: [f64; 2]) -> f64 {
        match &self.func {
            None => self.scale,
            Some(f) => self.scale * f(y),
        }
    }

    pub fn is_constant(&self) -> bool {
        self.func.is_none()
    }

    pub fn is_radial(&self) -> bool {
        self.radial
    }

    /// The weight y ↦ m(R y).
    pub fn scaled_y(&self, r: f64) -> Self {
        match &self.func {
            None => self.clone(),
            Some(f) => {
                let f = f.clone();
                JumpWeight {
                    scale: self.scale,
                    func: Some(Arc::new(move |y: [f64; 2]| f([r * y[0], r * y[1]]))),
                    radial: self.radial,
                }
            }
        }
    }

    pub fn times(&self, c: f64) -> Self {
        JumpWeight {
            scale: self.scale * c,
            ..self.clone()
        }
    }
}

fn env(t: f64, x: [f64; 2], y: [f64; 2]) -> Env {
    Env { t, x, y }
}

impl CoefficientSpec {
    pub fn constant(v: f64) -> Result<Self> {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::domain(format!("constant coefficient {v} must be positive")));
        }
        Ok(CoefficientSpec {
            kind: Kind::Form(CoefficientForm::Constant(v)),
            k: v,
            k_upper: v,
            beta: 1.0,
            kappa: Vec::new(),
        })
    }

    pub fn unit() -> Self {
        Self::constant(1.0).expect("unit coefficient")
    }

    /// Validates the bounds on a sample lattice covering t ∈ [0, 1],
    /// x ∈ [−4, 4]², |y| ∈ [2^-10, 2^10], and the Hölder modulus table.
    pub fn new(form: CoefficientForm, k: f64, k_upper: f64, beta: f64, kappa: Vec<(f64, f64)>) -> Result<Self> {
        if !(k > 0.0 && k_upper >= k && k_upper.is_finite()) {
            return Err(Error::domain(format!("need 0 < k ≤ K, got k = {k}, K = {k_upper}")));
        }
        if !(beta > 0.0 && beta <= 1.0) {
            return Err(Error::domain(format!("Hölder order beta = {beta} outside (0, 1]")));
        }
        if let CoefficientForm::Constant(v) = form {
            if !(v > 0.0) {
                return Err(Error::domain(format!("constant coefficient {v} must be positive")));
            }
        }
        let spec = CoefficientSpec {
            kind: Kind::Form(form),
            k,
            k_upper,
            beta,
            kappa,
        };
        spec.check_kappa()?;
        spec.check_bounds(1.0, 4.0)?;
        Ok(spec)
    }

    fn check_kappa(&self) -> Result<()> {
        if self.kappa.is_empty() {
            return Ok(());
        }
        let mut pts = self.kappa.clone();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        for w in pts.windows(2) {
            if w[1].1 < w[0].1 {
                return Err(Error::domain("Hölder modulus κ must be non-decreasing"));
            }
        }
        if pts.len() < 2 {
            return Err(Error::domain("Hölder modulus table needs at least two points"));
        }
        let prof = RadialProfile::table(&pts)?;
        let (r0, r1) = (pts[0].0, pts[1].0);
        let slope = (prof.eval(r1) / prof.eval(r0)).ln() / (r1 / r0).ln();
        if slope <= self.beta {
            return Err(Error::precondition(format!(
                "∫_{{|y|≤1}} κ(|y|)|y|^(-d-β) dy diverges: κ behaves like τ^{slope:.3} near 0, need exponent > β = {}",
                self.beta
            )));
        }
        Ok(())
    }

    /// Spot-check k ≤ m ≤ K on t ∈ [0, t_max], x ∈ [−half_width, half_width]².
    pub fn check_bounds(&self, t_max: f64, half_width: f64) -> Result<()> {
        if let Kind::Form(CoefficientForm::Constant(v)) = &self.kind {
            return self.check_value(*v, 0.0, [0.0; 2], [0.0; 2]);
        }
        let nt = if self.depends_on_t() { 8 } else { 0 };
        let nx = if self.depends_on_x() { 16 } else { 0 };
        let ny = self.depends_on_y();
        let radii: Vec<f64> = if ny { (-10..=10).map(|j| (j as f64).exp2()).collect() } else { vec![1.0] };
        let ndir = if ny { 8 } else { 1 };
        for it in 0..=nt {
            let t = if nt == 0 { 0.0 } else { t_max * it as f64 / nt as f64 };
            for ix in 0..=nx {
                for jx in 0..=nx {
                    let x = if nx == 0 {
                        [0.0; 2]
                    } else {
                        let s = |i: usize| -half_width + 2.0 * half_width * i as f64 / nx as f64;
                        [s(ix), s(jx)]
                    };
                    for &r in &radii {
                        for kd in 0..ndir {
                            let th = 2.0 * std::f64::consts::PI * kd as f64 / ndir as f64;
                            let y = [r * th.cos(), r * th.sin()];
                            self.check_value(self.eval(t, x, y), t, x, y)?;
                        }
                    }
                }
            }
        }
        Ok(())
    }

    fn check_value(&self, v: f64, t: f64, x: [f64; 2], y: [f64; 2]) -> Result<()> {
        let slack = 1e-12 * self.k_upper;
        if !(v >= self.k - slack && v <= self.k_upper + slack) {
            return Err(Error::domain(format!(
                "coefficient value {v} at t = {t}, x = {x:?}, y = {y:?} violates k = {} ≤ m ≤ K = {}",
                self.k, self.k_upper
            )));
        }
        Ok(())
    }

    pub fn form(&self) -> Option<&CoefficientForm> {
        match &self.kind {
            Kind::Form(f) => Some(f),
            Kind::XAverage { .. } => None,
        }
    }

    pub fn kappa(&self) -> &[(f64, f64)] {
        &self.kappa
    }

    pub fn eval(&self, t: f64, x: [f64; 2], y: [f64; 2]) -> f64 {
        match &self.kind {
            Kind::Form(CoefficientForm::Constant(v)) => *v,
            Kind::Form(CoefficientForm::TimeSeparable { time, space }) => {
                let e = env(t, x, y);
                time.eval(&e) * space.eval(&e)
            }
            Kind::Form(CoefficientForm::Sampled(e)) => e.eval(&env(t, x, y)),
            Kind::XAverage { inner, nodes } => {
                nodes.iter().map(|&xn| inner.eval(t, xn, y)).sum::<f64>() / nodes.len() as f64
            }
        }
    }

    fn exprs(&self) -> Vec<&Expr> {
        match &self.kind {
            Kind::Form(CoefficientForm::Constant(_)) => vec![],
            Kind::Form(CoefficientForm::TimeSeparable { time, space }) => vec![time, space],
            Kind::Form(CoefficientForm::Sampled(e)) => vec![e],
            Kind::XAverage { inner, .. } => inner.exprs(),
        }
    }

    pub fn depends_on_t(&self) -> bool {
        self.exprs().iter().any(|e| e.depends_on(Var::T))
    }

    pub fn depends_on_x(&self) -> bool {
        match &self.kind {
            Kind::XAverage { .. } => false,
            _ => self.exprs().iter().any(|e| e.depends_on_x()),
        }
    }

    pub fn depends_on_y(&self) -> bool {
        self.exprs().iter().any(|e| e.depends_on_y())
    }

    pub fn is_radial_in_y(&self) -> bool {
        self.exprs().iter().all(|e| e.is_radial_in_y())
    }

    pub fn constant_value(&self) -> Option<f64> {
        match &self.kind {
            Kind::Form(CoefficientForm::Constant(v)) => Some(*v),
            _ if !self.depends_on_t() && !self.depends_on_x() && !self.depends_on_y() => {
                Some(self.eval(0.0, [0.0; 2], [0.0; 2]))
            }
            _ => None,
        }
    }

    /// Factor as a(t, x) · b(t, y) when the closed form allows it.
    pub fn split_xy(&self) -> Option<(Expr, Expr)> {
        match &self.kind {
            Kind::Form(CoefficientForm::Constant(v)) => Some((Expr::constant(1.0), Expr::constant(*v))),
            Kind::Form(CoefficientForm::TimeSeparable { time, space }) => {
                let (a, b) = space.split_xy()?;
                Some((a, time.mul(&b)))
            }
            Kind::Form(CoefficientForm::Sampled(e)) => e.split_xy(),
            Kind::XAverage { .. } => None,
        }
    }

    /// m̄(t, y): average of m(t, ·, y) over the given x nodes.
    pub fn x_average(&self, nodes: Vec<[f64; 2]>) -> Self {
        if !self.depends_on_x() {
            return self.clone();
        }
        CoefficientSpec {
            kind: Kind::XAverage {
                inner: Arc::new(self.clone()),
                nodes: Arc::new(nodes),
            },
            ..self.clone()
        }
    }

    /// τ·m + (1 − τ) as a coefficient; bounds widen to include 1.
    pub fn homotopy(&self, tau: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&tau) {
            return Err(Error::domain(format!("homotopy level {tau} outside [0, 1]")));
        }
        let k = tau * self.k + (1.0 - tau);
        let k_upper = tau * self.k_upper + (1.0 - tau);
        let kind = match &self.kind {
            Kind::Form(CoefficientForm::Constant(v)) => Kind::Form(CoefficientForm::Constant(tau * v + 1.0 - tau)),
            Kind::Form(form) => {
                let text = match form {
                    CoefficientForm::TimeSeparable { time, space } => format!("({time})*({space})"),
                    CoefficientForm::Sampled(e) => format!("{e}"),
                    CoefficientForm::Constant(_) => unreachable!(),
                };
                let e = Expr::parse(&format!("{tau:e}*({text}) + {:e}", 1.0 - tau))?;
                Kind::Form(CoefficientForm::Sampled(e))
            }
            Kind::XAverage { .. } => {
                return Err(Error::precondition("homotopy is defined on closed-form coefficients only"));
            }
        };
        Ok(CoefficientSpec {
            kind,
            k: k.min(k_upper),
            k_upper: k.max(k_upper),
            beta: self.beta,
            kappa: self.kappa.clone(),
        })
    }

    /// Jump weight y ↦ (t−s)^{-1}∫_s^t m(r, x, y) dr at a fixed x
    /// (x is ignored for x-independent coefficients). s = t evaluates at t.
    pub fn jump_weight_at(&self, s: f64, t: f64, x: [f64; 2]) -> JumpWeight {
        let tdep = self.depends_on_t() && t > s;
        let time_avg = move |f: &dyn Fn(f64) -> f64| -> f64 {
            if tdep {
                quad::composite_gl(f, s, t, 4) / (t - s)
            } else {
                f(t)
            }
        };
        if !self.depends_on_y() {
            let c = time_avg(&|r| self.eval(r, x, [0.0; 2]));
            return JumpWeight::constant(c);
        }
        let radial = self.is_radial_in_y();
        if let Some(CoefficientForm::TimeSeparable { time, space }) = self.form() {
            if !space.depends_on(Var::T) {
                let c = time_avg(&|r| time.eval(&env(r, x, [0.0; 2])));
                let space = space.clone();
                return JumpWeight::from_fn(move |y| space.eval(&env(0.0, x, y)), radial).times(c);
            }
        }
        let me = self.clone();
        if tdep {
            JumpWeight::from_fn(
                move |y| quad::composite_gl(|r| me.eval(r, x, y), s, t, 4) / (t - s),
                radial,
            )
        } else {
            JumpWeight::from_fn(move |y| me.eval(t, x, y), radial)
        }
    }

    /// Jump weight for an x-independent coefficient; errors otherwise.
    pub fn jump_weight(&self, s: f64, t: f64) -> Result<JumpWeight> {
        if self.depends_on_x() {
            return Err(Error::precondition(
                "coefficient depends on x; use the frozen-coefficient iteration",
            ));
        }
        Ok(self.jump_weight_at(s, t, [0.0; 2]))
    }

    /// ∫_s^t m(r, x, y) dr for y-independent coefficients, by Gauss–Legendre.
    pub fn time_integral(&self, s: f64, t: f64) -> f64 {
        if !self.depends_on_t() {
            return (t - s) * self.eval(s, [0.0; 2], [0.0; 2]);
        }
        quad::composite_gl(|r| self.eval(r, [0.0; 2], [0.0; 2]), s, t, 8)
    }
}

impl fmt::Display for CoefficientSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            Kind::Form(CoefficientForm::Constant(v)) => write!(f, "{v}"),
            Kind::Form(CoefficientForm::TimeSeparable { time, space }) => write!(f, "({time})*({space})"),
            Kind::Form(CoefficientForm::Sampled(e)) => write!(f, "{e}"),
            Kind::XAverage { inner, nodes } => write!(f, "mean_x[{inner}] over {} nodes", nodes.len()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sampled(src: &str, k: f64, kk: f64) -> Result<CoefficientSpec> {
        CoefficientSpec::new(CoefficientForm::Sampled(Expr::parse(src)?), k, kk, 1.0, vec![])
    }

    #[test]
    fn bounds_are_checked() {
        assert!(sampled("1 + 0.1*cos(2*pi*x)", 0.9, 1.1).is_ok());
        assert!(sampled("1 + 0.5*cos(2*pi*x)", 0.9, 1.1).is_err());
        assert!(CoefficientSpec::constant(0.0).is_err());
    }

    #[test]
    fn kappa_integrability() {
        let form = CoefficientForm::Constant(1.0);
        let ok = vec![(0.01, 0.01), (1.0, 1.0)];
        assert!(CoefficientSpec::new(form.clone(), 1.0, 1.0, 0.5, ok).is_ok());
        let bad = vec![(0.01, 0.1), (1.0, 1.0)];
        assert!(CoefficientSpec::new(form.clone(), 1.0, 1.0, 0.5, bad).is_err());
        let decreasing = vec![(0.01, 1.0), (1.0, 0.5)];
        assert!(CoefficientSpec::new(form, 1.0, 1.0, 0.5, decreasing).is_err());
    }

    #[test]
    fn time_average_weight() {
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
        let w = c.jump_weight(0.0, 0.25).unwrap();
        assert!(w.is_constant());
        let exact = 1.0 + 0.5 / (2.0 * std::f64::consts::PI) * (1.0 - (0.5 * std::f64::consts::PI).cos()) / 0.25;
        assert!((w.at([0.3, 0.0]) - exact).abs() < 1e-12);
    }

    #[test]
    fn x_average_and_split() {
        let c = sampled("(1 + 0.1*cos(2*pi*x))*(1 + 0.2*cos(y))", 0.7, 1.4).unwrap();
        let (a, b) = c.split_xy().unwrap();
        assert!(a.depends_on_x() && !a.depends_on_y());
        assert!(b.depends_on_y() && !b.depends_on_x());
        let nodes: Vec<[f64; 2]> = (0..8).map(|j| [j as f64 / 8.0, 0.0]).collect();
        let avg = c.x_average(nodes);
        assert!(!avg.depends_on_x());
        assert!((avg.eval(0.0, [0.3, 0.0], [0.0, 0.0]) - 1.2).abs() < 1e-12);
        assert!(c.jump_weight(0.0, 1.0).is_err());
    }

    #[test]
    fn homotopy_endpoints() {
        let c = sampled("1 + 0.1*cos(2*pi*x)", 0.9, 1.1).unwrap();
        let h0 = c.homotopy(0.0).unwrap();
        let h1 = c.homotopy(1.0).unwrap();
        for &x in &[0.0, 0.3, 0.7] {
            assert!((h0.eval(0.0, [x, 0.0], [0.0; 2]) - 1.0).abs() < 1e-14);
            assert!((h1.eval(0.0, [x, 0.0], [0.0; 2]) - c.eval(0.0, [x, 0.0], [0.0; 2])).abs() < 1e-14);
        }
    }
}
