//! Positive functions of the radius: scale profiles w, kernel profiles γ,
//! tabulated data and left-continuous inverses.

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::measures::MeasureSpec;
use std::sync::Arc;

/// Working interval for inversion and monotonicity checks, in ln r.
pub const LN_RANGE: f64 = 600.0;

#[derive(Debug, Clone)]
pub enum RadialProfile {
    /// scale · r^exponent
    Power { scale: f64, exponent: f64 },
    /// scale · r^exponent · ln(1+r)^log_exponent
    PowerLog {
        scale: f64,
        exponent: f64,
        log_exponent: f64,
    },
    /// Log-log linear interpolation of positive samples, extrapolated along
    /// the end segments.
    Table(Arc<Table>),
    /// Closed-form expression in `r`.
    Expr(Expr),
    /// value · inner(arg · r)
    Scaled {
        inner: Arc<RadialProfile>,
        arg: f64,
        value: f64,
    },
    /// 1 / inner(r)
    Reciprocal(Arc<RadialProfile>),
    /// r ↦ 1/ν(|y| > r), evaluated by quadrature on demand.
    InverseTail(Arc<MeasureSpec>),
    /// Left-continuous inverse t ↦ inf{s > 0 : inner(s) ≥ t}.
    Inverse(Arc<RadialProfile>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    ln_r: Vec<f64>,
    ln_v: Vec<f64>,
}

impl Table {
    pub fn new(points: &[(f64, f64)]) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::domain("a tabulated profile needs at least two points"));
        }
        let mut pts = points.to_vec();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        for w in pts.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::domain(format!("duplicate radius {} in table", w[0].0)));
            }
        }
        if pts.iter().any(|&(r, v)| !(r > 0.0 && v > 0.0 && r.is_finite() && v.is_finite())) {
            return Err(Error::domain("tabulated profile entries must be finite and positive"));
        }
        Ok(Table {
            ln_r: pts.iter().map(|p| p.0.ln()).collect(),
            ln_v: pts.iter().map(|p| p.1.ln()).collect(),
        })
    }

    fn eval(&self, r: f64) -> f64 {
        let x = r.ln();
        let n = self.ln_r.len();
        let i = match self.ln_r.binary_search_by(|v| v.total_cmp(&x)) {
            Ok(i) => return self.ln_v[i].exp(),
            Err(i) => i.clamp(1, n - 1),
        };
        let (x0, x1) = (self.ln_r[i - 1], self.ln_r[i]);
        let (y0, y1) = (self.ln_v[i - 1], self.ln_v[i]);
        (y0 + (y1 - y0) * (x - x0) / (x1 - x0)).exp()
    }
}

impl RadialProfile {
    pub fn power(scale: f64, exponent: f64) -> Self {
        RadialProfile::Power { scale, exponent }
    }

    pub fn power_log(scale: f64, exponent: f64, log_exponent: f64) -> Self {
        RadialProfile::PowerLog {
            scale,
            exponent,
            log_exponent,
        }
    }

    pub fn table(points: &[(f64, f64)]) -> Result<Self> {
        Ok(RadialProfile::Table(Arc::new(Table::new(points)?)))
    }

    pub fn expr(src: &str) -> Result<Self> {
        let e = Expr::parse(src)?;
        if e.depends_on_x() || e.depends_on(crate::expr::Var::T) {
            return Err(Error::domain(format!("profile expression '{src}' may only use r")));
        }
        Ok(RadialProfile::Expr(e))
    }

    /// value · self(arg · r), simplified for closed forms.
    pub fn scaled(&self, arg: f64, value: f64) -> Self {
        match self {
            RadialProfile::Power { scale, exponent } => RadialProfile::Power {
                scale: scale * value * arg.powf(*exponent),
                exponent: *exponent,
            },
            RadialProfile::Scaled { inner, arg: a, value: v } => RadialProfile::Scaled {
                inner: inner.clone(),
                arg: a * arg,
                value: v * value,
            },
            other => RadialProfile::Scaled {
                inner: Arc::new(other.clone()),
                arg,
                value,
            },
        }
    }

    pub fn reciprocal(&self) -> Self {
        match self {
            RadialProfile::Power { scale, exponent } => RadialProfile::Power {
                scale: 1.0 / scale,
                exponent: -exponent,
            },
            RadialProfile::Reciprocal(inner) => (**inner).clone(),
            other => RadialProfile::Reciprocal(Arc::new(other.clone())),
        }
    }

    /// Evaluate; non-evaluable points (inverse out of range, failed
    /// quadrature) give NaN. Use [`try_eval`](Self::try_eval) for errors.
    pub fn eval(&self, r: f64) -> f64 {
        self.try_eval(r).unwrap_or(f64::NAN)
    }

    pub fn try_eval(&self, r: f64) -> Result<f64> {
        if !(r > 0.0) {
            return Err(Error::domain(format!("profile evaluated at non-positive radius {r}")));
        }
        Ok(match self {
            RadialProfile::Power { scale, exponent } => scale * r.powf(*exponent),
            RadialProfile::PowerLog {
                scale,
                exponent,
                log_exponent,
            } => scale * r.powf(*exponent) * r.ln_1p().powf(*log_exponent),
            RadialProfile::Table(t) => t.eval(r),
            RadialProfile::Expr(e) => e.eval_r(r),
            RadialProfile::Scaled { inner, arg, value } => value * inner.try_eval(arg * r)?,
            RadialProfile::Reciprocal(inner) => 1.0 / inner.try_eval(r)?,
            RadialProfile::InverseTail(spec) => {
                let d = spec.tail_mass(r)?;
                if d <= 0.0 {
                    return Err(Error::precondition(format!("zero tail mass at r = {r}: degenerate measure")));
                }
                1.0 / d
            }
            RadialProfile::Inverse(inner) => invert(inner, r)?,
        })
    }

    /// Left-continuous inverse a(t) = inf{s > 0 : w(s) ≥ t}.
    pub fn inverse(&self) -> Self {
        match self {
            RadialProfile::Power { scale, exponent } if *exponent != 0.0 => RadialProfile::Power {
                scale: scale.powf(-1.0 / exponent),
                exponent: 1.0 / exponent,
            },
            RadialProfile::Scaled { inner, arg, value } => {
                // value·f(arg·s) ≥ t  ⇔  s ≥ f⁻¹(t/value)/arg
                inner.inverse().scaled(1.0 / value, 1.0 / arg)
            }
            RadialProfile::Inverse(inner) => (**inner).clone(),
            other => RadialProfile::Inverse(Arc::new(other.clone())),
        }
    }

    /// Exponent of the leading power if the profile is an exact power law.
    pub fn power_exponent(&self) -> Option<f64> {
        match self {
            RadialProfile::Power { exponent, .. } => Some(*exponent),
            RadialProfile::Scaled { inner, .. } => inner.power_exponent(),
            RadialProfile::Reciprocal(inner) => inner.power_exponent().map(|e| -e),
            RadialProfile::Inverse(inner) => inner.power_exponent().and_then(|e| (e != 0.0).then(|| 1.0 / e)),
            _ => None,
        }
    }

    /// Radii where the profile is known to be non-smooth (table nodes).
    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            RadialProfile::Table(t) => t.ln_r.iter().map(|v| v.exp()).collect(),
            RadialProfile::Scaled { inner, arg, .. } => inner.breakpoints().into_iter().map(|b| b / arg).collect(),
            RadialProfile::Reciprocal(inner) => inner.breakpoints(),
            _ => Vec::new(),
        }
    }

    /// Sampled check that the profile is positive and non-decreasing on
    /// [2^-j, 2^j].
    pub fn check_nondecreasing(&self, j: i32) -> Result<()> {
        let mut prev = 0.0;
        for k in -8 * j..=8 * j {
            let r = (k as f64 / 8.0).exp2();
            let v = self.try_eval(r)?;
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::domain(format!("profile not positive at r = {r:e}: {v}")));
            }
            if v < prev * (1.0 - 1e-12) {
                return Err(Error::domain(format!("profile decreases near r = {r:e}")));
            }
            prev = v;
        }
        Ok(())
    }
}

/// w for the inverse search: a vanishing tail means w = +∞ there.
fn eval_for_inverse(w: &RadialProfile, r: f64) -> Result<f64> {
    match w {
        RadialProfile::InverseTail(spec) => {
            let d = spec.tail_mass(r)?;
            Ok(if d <= 0.0 { f64::INFINITY } else { 1.0 / d })
        }
        _ => w.try_eval(r),
    }
}

fn invert(w: &RadialProfile, t: f64) -> Result<f64> {
    // bracket outward from r = 1 so extreme radii are only touched when needed
    let (mut lo, mut hi) = (0.0f64, 0.0f64);
    let mut step = 1.0;
    if eval_for_inverse(w, 1.0)? >= t {
        loop {
            lo = (hi - step).max(-LN_RANGE);
            if eval_for_inverse(w, lo.exp())? < t {
                break;
            }
            if lo <= -LN_RANGE {
                return Err(Error::domain(format!(
                    "inverse: t = {t:e} lies below the range of the profile on the working interval"
                )));
            }
            hi = lo;
            step *= 2.0;
        }
    } else {
        loop {
            hi = (lo + step).min(LN_RANGE);
            if eval_for_inverse(w, hi.exp())? >= t {
                break;
            }
            if hi >= LN_RANGE {
                return Err(Error::domain(format!(
                    "inverse: t = {t:e} lies above the range of the profile on the working interval"
                )));
            }
            lo = hi;
            step *= 2.0;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if eval_for_inverse(w, mid.exp())? >= t {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi.exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_inverse() {
        let w = RadialProfile::power(0.25, 1.0);
        assert!((w.inverse().eval(2.0) - 8.0).abs() < 1e-12);
    }

    #[test]
    fn sqrt_inverse() {
        let w = RadialProfile::power(1.0, 0.5);
        assert!((w.inverse().eval(3.0) - 9.0).abs() < 1e-12);
    }

    #[test]
    fn bisection_inverse_round_trip() {
        let w = RadialProfile::power_log(1.0, 0.5, 0.25);
        let a = w.inverse();
        for &t in &[1e-3, 0.1, 1.0, 7.5, 1e4] {
            let s = a.eval(t);
            assert!((w.eval(s) / t - 1.0).abs() < 1e-10, "t = {t}");
        }
        for &r in &[1e-4, 0.3, 2.0, 1e5] {
            assert!((a.eval(w.eval(r)) / r - 1.0).abs() < 1e-9, "r = {r}");
        }
    }

    #[test]
    fn inverse_out_of_range() {
        let w = RadialProfile::table(&[(1.0, 1.0), (2.0, 1.0)]).unwrap();
        assert!(w.inverse().try_eval(2.0).is_err());
    }

    #[test]
    fn table_is_exact_on_power_laws() {
        let pts: Vec<_> = [0.5, 1.0, 4.0].iter().map(|&r: &f64| (r, 3.0 * r.powf(0.7))).collect();
        let t = RadialProfile::table(&pts).unwrap();
        for &r in &[0.01, 0.7, 2.0, 100.0] {
            assert!((t.eval(r) / (3.0 * f64::powf(r, 0.7)) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn scaled_inverse_is_consistent() {
        let g = RadialProfile::power_log(1.0, 1.5, 0.2).scaled(3.0, 0.5);
        let a = g.inverse();
        assert!((g.eval(a.eval(2.0)) - 2.0).abs() < 1e-10);
    }
}
