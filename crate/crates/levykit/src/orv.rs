//! O-regular variation: index estimation from dyadic ladders, the
//! index conditions on σ, Karamata-type integral ratios and the power-law
//! sandwich for scale profiles.

use crate::error::{Error, Result};
use crate::measures::{Family, MeasureSpec};
use crate::profile::RadialProfile;
use crate::quad::{self, Tolerance};
use std::fmt;

/// Dyadic ladder: ε = 2^{∓j} for j in `eps_octaves`, x = 2^k for |k| ≤ `x_octaves`.
#[derive(Debug, Clone, Copy)]
pub struct Ladder {
    pub eps_octaves: (i32, i32),
    pub x_octaves: i32,
}

impl Default for Ladder {
    fn default() -> Self {
        Ladder {
            eps_octaves: (8, 20),
            x_octaves: 6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Zero,
    Infinity,
}

#[derive(Debug, Clone, Copy)]
pub struct LadderSample {
    pub side: Side,
    pub x: f64,
    /// max over the ε ladder of w(εx)/w(ε)
    pub ratio: f64,
    /// ε attaining the maximum
    pub eps: f64,
}

#[derive(Debug, Clone)]
pub struct AssumptionCheck {
    pub sigma: f64,
    pub pass: bool,
    pub reasons: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct OrvReport {
    pub p1: f64,
    pub q1: f64,
    pub p2: f64,
    pub q2: f64,
    pub ladder: Vec<LadderSample>,
    pub assumption_a: Option<AssumptionCheck>,
}

impl OrvReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("quantity,value\n");
        for (k, v) in [("p1", self.p1), ("q1", self.q1), ("p2", self.p2), ("q2", self.q2)] {
            s.push_str(&format!("{k},{v:.12e}\n"));
        }
        if let Some(a) = &self.assumption_a {
            s.push_str(&format!("sigma,{:.12e}\n", a.sigma));
            s.push_str(&format!("assumption_A,{}\n", if a.pass { "pass" } else { "fail" }));
        }
        s
    }
}

impl fmt::Display for OrvReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "indices at zero:     p1 = {:.4}, q1 = {:.4}", self.p1, self.q1)?;
        writeln!(f, "indices at infinity: p2 = {:.4}, q2 = {:.4}", self.p2, self.q2)?;
        if let Some(a) = &self.assumption_a {
            if a.pass {
                writeln!(f, "index condition for sigma = {}: pass", a.sigma)?;
            } else {
                writeln!(f, "index condition for sigma = {}: fail ({})", a.sigma, a.reasons.join("; "))?;
            }
        }
        Ok(())
    }
}

fn eval_positive(w: &RadialProfile, r: f64) -> Result<f64> {
    let v = w.try_eval(r)?;
    if !(v > 0.0 && v.is_finite()) {
        return Err(Error::domain(format!("profile is not positive and finite at r = {r:e} (value {v})")));
    }
    Ok(v)
}

fn slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

pub fn estimate_indices(profile: &RadialProfile) -> Result<OrvReport> {
    estimate_indices_with(profile, Ladder::default())
}

pub fn estimate_indices_with(profile: &RadialProfile, ladder: Ladder) -> Result<OrvReport> {
    let (j0, j1) = ladder.eps_octaves;
    if j1 - j0 + 1 < 6 || ladder.x_octaves < 6 || j0 < 1 {
        return Err(Error::domain(
            "insufficient range: index ladders need at least 6 octaves in ε and in x",
        ));
    }
    let kmax = ladder.x_octaves;
    let mut samples = Vec::new();
    for side in [Side::Zero, Side::Infinity] {
        for k in -kmax..=kmax {
            let x = (k as f64).exp2();
            let mut best = (f64::NEG_INFINITY, 0.0);
            for j in j0..=j1 {
                let eps = match side {
                    Side::Zero => (-(j as f64)).exp2(),
                    Side::Infinity => (j as f64).exp2(),
                };
                let ratio = eval_positive(profile, eps * x)? / eval_positive(profile, eps)?;
                if ratio > best.0 {
                    best = (ratio, eps);
                }
            }
            samples.push(LadderSample {
                side,
                x,
                ratio: best.0,
                eps: best.1,
            });
        }
    }
    // least squares over the outer octaves on each side of x = 1
    let fit = |side: Side, small: bool| {
        let pts: Vec<(f64, f64)> = samples
            .iter()
            .filter(|s| s.side == side)
            .filter(|s| {
                let k = s.x.log2().round() as i32;
                if small {
                    k <= -(kmax - 4)
                } else {
                    k >= kmax - 4
                }
            })
            .map(|s| (s.x.ln(), s.ratio.ln()))
            .collect();
        slope(&pts)
    };
    let report = OrvReport {
        p1: fit(Side::Zero, true),
        q1: fit(Side::Zero, false),
        p2: fit(Side::Infinity, true),
        q2: fit(Side::Infinity, false),
        ladder: samples,
        assumption_a: None,
    };
    if [report.p1, report.q1, report.p2, report.q2].iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("index estimate is not finite"));
    }
    Ok(report)
}

/// Slack on the non-strict inequalities of the index condition.
const INDEX_SLACK: f64 = 1e-6;

/// Index condition: 0 < p ≤ q < 1 (σ < 1), 0 < p ≤ 1 ≤ q < 2 (σ = 1),
/// 1 < p ≤ q < 2 (σ > 1), for both index pairs.
pub fn check_assumption_a(report: &OrvReport, sigma: f64) -> AssumptionCheck {
    let mut reasons = Vec::new();
    for (i, p, q) in [(1, report.p1, report.q1), (2, report.p2, report.q2)] {
        if p > q + INDEX_SLACK {
            reasons.push(format!("p{i} > q{i}"));
        }
        if sigma < 1.0 {
            if p <= 0.0 {
                reasons.push(format!("p{i} ≤ 0"));
            }
            if q >= 1.0 {
                reasons.push(format!("q{i} ≥ 1"));
            }
        } else if sigma == 1.0 {
            if p <= 0.0 {
                reasons.push(format!("p{i} ≤ 0"));
            }
            if p > 1.0 + INDEX_SLACK {
                reasons.push(format!("p{i} > 1"));
            }
            if q < 1.0 - INDEX_SLACK {
                reasons.push(format!("q{i} < 1"));
            }
            if q >= 2.0 {
                reasons.push(format!("q{i} ≥ 2"));
            }
        } else {
            if p <= 1.0 {
                reasons.push(format!("p{i} ≤ 1"));
            }
            if q >= 2.0 {
                reasons.push(format!("q{i} ≥ 2"));
            }
        }
    }
    AssumptionCheck {
        sigma,
        pass: reasons.is_empty(),
        reasons,
    }
}

/// Estimate indices and attach the index-condition verdict for σ.
pub fn analyze(profile: &RadialProfile, sigma: f64) -> Result<OrvReport> {
    let mut r = estimate_indices(profile)?;
    r.assumption_a = Some(check_assumption_a(&r, sigma));
    Ok(r)
}

/// a(t) = inf{s > 0 : w(s) ≥ t}.
pub fn inverse_profile(profile: &RadialProfile) -> RadialProfile {
    profile.inverse()
}

/// Worst relative deviation of w(a(t)) = t and a(w(r)) = r over dyadic
/// samples in [2^-j, 2^j].
pub fn inverse_round_trip(profile: &RadialProfile, j: i32) -> Result<f64> {
    let a = profile.inverse();
    let mut worst: f64 = 0.0;
    for k in -j..=j {
        let v = (k as f64).exp2();
        worst = worst.max((profile.try_eval(a.try_eval(v)?)? / v - 1.0).abs());
        worst = worst.max((a.try_eval(profile.try_eval(v)?)? / v - 1.0).abs());
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    ZeroA,
    ZeroB,
    ZeroC,
    ZeroD,
    InfA,
    InfB,
    InfC,
    InfD,
}

impl Regime {
    pub const ALL: [Regime; 8] = [
        Regime::ZeroA,
        Regime::ZeroB,
        Regime::ZeroC,
        Regime::ZeroD,
        Regime::InfA,
        Regime::InfB,
        Regime::InfC,
        Regime::InfD,
    ];

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "zero-a" => Regime::ZeroA,
            "zero-b" => Regime::ZeroB,
            "zero-c" => Regime::ZeroC,
            "zero-d" => Regime::ZeroD,
            "inf-a" => Regime::InfA,
            "inf-b" => Regime::InfB,
            "inf-c" => Regime::InfC,
            "inf-d" => Regime::InfD,
            _ => return Err(Error::domain(format!("unknown Karamata regime '{s}'"))),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Regime::ZeroA => "zero-a",
            Regime::ZeroB => "zero-b",
            Regime::ZeroC => "zero-c",
            Regime::ZeroD => "zero-d",
            Regime::InfA => "inf-a",
            Regime::InfB => "inf-b",
            Regime::InfC => "inf-c",
            Regime::InfD => "inf-d",
        }
    }

    fn at_zero(&self) -> bool {
        matches!(self, Regime::ZeroA | Regime::ZeroB | Regime::ZeroC | Regime::ZeroD)
    }

    /// Whether the integral runs from the singular endpoint (0 or ∞) to x.
    fn from_endpoint(&self) -> bool {
        matches!(self, Regime::ZeroA | Regime::ZeroC | Regime::InfA | Regime::InfC)
    }

    /// Admissible cone for (τ, β) given the indices.
    pub fn admissible(&self, r: &OrvReport, tau: f64, beta: f64) -> bool {
        match self {
            Regime::ZeroA => beta > 0.0 && tau > -beta * r.p1,
            Regime::ZeroB => beta > 0.0 && tau < -beta * r.q1,
            Regime::ZeroC => beta < 0.0 && tau > -beta * r.q1,
            Regime::ZeroD => beta < 0.0 && tau < -beta * r.p1,
            Regime::InfA => beta > 0.0 && -tau > beta * r.q2,
            Regime::InfB => beta > 0.0 && -tau < beta * r.p2,
            Regime::InfC => beta < 0.0 && tau < -beta * r.p2,
            Regime::InfD => beta < 0.0 && tau > -beta * r.q2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct KaramataReport {
    pub regime: Regime,
    pub tau: f64,
    pub beta: f64,
    /// sup over the sampled x of ∫ t^τ w(t)^β dt/t ÷ x^τ w(x)^β; +∞ on divergence.
    pub sup: f64,
    pub argsup: f64,
    pub divergent_endpoint: Option<&'static str>,
    /// x^τ w(x)^β at the extreme sampled x (tends to 0 or ∞ per regime).
    pub limit_value: f64,
    pub samples: Vec<(f64, f64)>,
}

/// Karamata configuration: x spans 2^{-octaves}..1 (zero regimes) or
/// 1..2^{octaves} (infinity regimes); integrals use composite
/// Gauss–Legendre with `panels_per_octave` panels.
#[derive(Debug, Clone, Copy)]
pub struct KaramataConfig {
    pub octaves: u32,
    pub panels_per_octave: usize,
}

impl Default for KaramataConfig {
    fn default() -> Self {
        KaramataConfig {
            octaves: 60,
            panels_per_octave: 2,
        }
    }
}

pub fn karamata_check(profile: &RadialProfile, tau: f64, beta: f64, regime: Regime) -> Result<KaramataReport> {
    let idx = estimate_indices(profile)?;
    karamata_check_with(profile, &idx, tau, beta, regime, KaramataConfig::default())
}

pub fn karamata_check_with(
    profile: &RadialProfile,
    indices: &OrvReport,
    tau: f64,
    beta: f64,
    regime: Regime,
    cfg: KaramataConfig,
) -> Result<KaramataReport> {
    if !regime.admissible(indices, tau, beta) {
        return Err(Error::precondition(format!(
            "(tau, beta) = ({tau}, {beta}) lies outside the admissible cone of regime {} for indices p1 = {:.3}, q1 = {:.3}, p2 = {:.3}, q2 = {:.3}",
            regime.name(),
            indices.p1,
            indices.q1,
            indices.p2,
            indices.q2
        )));
    }
    let ln2 = std::f64::consts::LN_2;
    let w = |s: f64| profile.try_eval(s.exp());
    // integrand in s = ln t
    let f = |s: f64| -> f64 {
        match w(s) {
            Ok(v) => (tau * s).exp() * v.powf(beta),
            Err(_) => f64::NAN,
        }
    };
    let oct = cfg.octaves as i64;
    // sample nodes s_i = ±i·ln2, i = 0..octaves, ordered from x = 1 outwards
    let sign = if regime.at_zero() { -1.0 } else { 1.0 };
    let nodes: Vec<f64> = (0..=oct).map(|i| sign * i as f64 * ln2).collect();
    let panels = cfg.panels_per_octave.max(1);
    let seg: Vec<f64> = nodes
        .windows(2)
        .map(|p| {
            let (a, b) = if p[0] < p[1] { (p[0], p[1]) } else { (p[1], p[0]) };
            quad::composite_gl(f, a, b, panels)
        })
        .collect();
    if seg.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("profile could not be evaluated on the Karamata range"));
    }
    let mut integrals = vec![0.0; nodes.len()];
    let mut divergent = None;
    if regime.from_endpoint() {
        // ∫ from the singular endpoint to x: tail beyond the last node, then
        // cumulative sums back towards x = 1.
        let s_end = *nodes.last().unwrap();
        let tol = Tolerance::new(1e-300, 1e-12);
        let tail = if regime.at_zero() {
            quad::exp_tail(|u| f(s_end - u), 0.0, tol, 700.0)
        } else {
            quad::exp_tail(|u| f(s_end + u), 0.0, tol, 700.0)
        };
        let mut acc = if tail.converged && tail.value.is_finite() {
            tail.value
        } else {
            divergent = Some(if regime.at_zero() { "0" } else { "∞" });
            f64::INFINITY
        };
        let n = nodes.len();
        integrals[n - 1] = acc;
        for i in (0..n - 1).rev() {
            acc += seg[i];
            integrals[i] = acc;
        }
    } else {
        // ∫ between x = 1 and x
        let mut acc = 0.0;
        for i in 1..nodes.len() {
            acc += seg[i - 1];
            integrals[i] = acc;
        }
    }
    let mut samples = Vec::with_capacity(nodes.len());
    let mut sup = f64::NEG_INFINITY;
    let mut argsup = 1.0;
    for (i, &s) in nodes.iter().enumerate() {
        if !regime.from_endpoint() && i == 0 {
            continue;
        }
        let ratio = integrals[i] / f(s);
        samples.push((s.exp(), ratio));
        if ratio > sup {
            sup = ratio;
            argsup = s.exp();
        }
    }
    Ok(KaramataReport {
        regime,
        tau,
        beta,
        sup: if divergent.is_some() { f64::INFINITY } else { sup },
        argsup,
        divergent_endpoint: divergent,
        limit_value: f(*nodes.last().unwrap()),
        samples,
    })
}

/// Empirical constants of c₁(y/x)^{α₂} ≤ w(y)/w(x) ≤ c₂(y/x)^{α₁}, 0 < x ≤ y.
#[derive(Debug, Clone, Copy)]
pub struct Sandwich {
    pub c1: f64,
    pub c2: f64,
}

fn sandwich_extremes(profile: &RadialProfile, alpha1: f64, alpha2: f64, j: i32) -> Result<Sandwich> {
    let pts: Vec<(f64, f64)> = (-2 * j..=2 * j)
        .map(|k| {
            let r = (k as f64 / 2.0).exp2();
            eval_positive(profile, r).map(|v| (r, v))
        })
        .collect::<Result<_>>()?;
    let mut c1 = f64::INFINITY;
    let mut c2: f64 = 0.0;
    for (i, &(x, wx)) in pts.iter().enumerate() {
        for &(y, wy) in &pts[i..] {
            let q = wy / wx;
            c1 = c1.min(q / (y / x).powf(alpha2));
            c2 = c2.max(q / (y / x).powf(alpha1));
        }
    }
    Ok(Sandwich { c1, c2 })
}

/// Extremal sandwich constants on [2^-16, 2^16]; fails when extending the
/// range to [2^-32, 2^32] moves either constant by more than a factor 2,
/// which signals c₁ → 0 or c₂ → ∞.
pub fn profile_sandwich(profile: &RadialProfile, alpha1: f64, alpha2: f64) -> Result<Sandwich> {
    let coarse = sandwich_extremes(profile, alpha1, alpha2, 16)?;
    let wide = sandwich_extremes(profile, alpha1, alpha2, 32)?;
    if !(wide.c1 > 0.0) || coarse.c1 / wide.c1 > 2.0 {
        return Err(Error::precondition(format!(
            "exponent choice: lower bound with alpha2 = {alpha2} fails (c1 drops from {:.3e} to {:.3e} as the range widens)",
            coarse.c1, wide.c1
        )));
    }
    if !wide.c2.is_finite() || wide.c2 / coarse.c2 > 2.0 {
        return Err(Error::precondition(format!(
            "exponent choice: upper bound with alpha1 = {alpha1} fails (c2 grows from {:.3e} to {:.3e} as the range widens)",
            coarse.c2, wide.c2
        )));
    }
    Ok(wide)
}

/// min and max of w_ν(r)/γ(r) over r ∈ [2^-j, 2^j] for a unimodal spec.
pub fn unimodal_comparability(spec: &MeasureSpec, j: i32) -> Result<(f64, f64)> {
    let Family::IsotropicUnimodal { gamma, .. } = spec.family() else {
        return Err(Error::precondition("comparability w ≍ γ applies to the isotropic unimodal family"));
    };
    let w = spec.w_profile();
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    for k in -j..=j {
        let r = (k as f64).exp2();
        let q = w.try_eval(r)? / gamma.try_eval(r)?;
        lo = lo.min(q);
        hi = hi.max(q);
    }
    Ok((lo, hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn power_law_indices() {
        let r = estimate_indices(&RadialProfile::power(1.0, 0.7)).unwrap();
        for v in [r.p1, r.q1, r.p2, r.q2] {
            assert!((v - 0.7).abs() < 1e-9, "{v}");
        }
        let r = estimate_indices(&RadialProfile::power(0.25, 1.0)).unwrap();
        for v in [r.p1, r.q1, r.p2, r.q2] {
            assert!((v - 1.0).abs() < 0.02);
        }
    }

    #[test]
    fn log_corrected_indices() {
        let r = estimate_indices(&RadialProfile::power_log(1.0, 0.5, 0.25)).unwrap();
        assert!((r.p1 - 0.75).abs() < 0.05 && (r.q1 - 0.75).abs() < 0.05, "{r}");
        assert!((r.p2 - 0.5).abs() < 0.05 && (r.q2 - 0.5).abs() < 0.05, "{r}");
    }

    #[test]
    fn short_ladder_rejected() {
        let l = Ladder {
            eps_octaves: (8, 11),
            x_octaves: 6,
        };
        assert!(estimate_indices_with(&RadialProfile::power(1.0, 0.5), l).is_err());
    }

    #[test]
    fn index_condition_cases() {
        let r = estimate_indices(&RadialProfile::power(1.0, 0.7)).unwrap();
        assert!(check_assumption_a(&r, 0.7).pass);
        let bad = check_assumption_a(&r, 1.5);
        assert!(!bad.pass && bad.reasons.iter().any(|s| s == "p1 ≤ 1"));
        let one = estimate_indices(&RadialProfile::power(1.0, 1.0)).unwrap();
        assert!(check_assumption_a(&one, 1.0).pass);
    }

    #[test]
    fn karamata_closed_forms() {
        let w = RadialProfile::power(1.0, 0.5);
        let a = karamata_check(&w, 0.5, 1.0, Regime::ZeroA).unwrap();
        assert!((a.sup - 1.0).abs() < 1e-6, "{}", a.sup);
        let b = karamata_check(&w, -1.0, 1.0, Regime::ZeroB).unwrap();
        assert!((b.sup - 2.0).abs() < 1e-6, "{}", b.sup);
        assert!(karamata_check(&w, -0.1, 1.0, Regime::ZeroB).is_err());
    }

    #[test]
    fn sandwich() {
        let s = profile_sandwich(&RadialProfile::power(1.0, 0.7), 0.9, 0.5).unwrap();
        assert!((s.c1 - 1.0).abs() < 1e-12 && (s.c2 - 1.0).abs() < 1e-12);
        assert!(profile_sandwich(&RadialProfile::power_log(1.0, 0.5, 0.25), 0.9, 0.3).is_ok());
        assert!(profile_sandwich(&RadialProfile::power(1.0, 0.5), 0.9, 0.6).is_err());
    }

    #[test]
    fn round_trip() {
        let w = RadialProfile::power_log(1.0, 0.5, 0.25);
        assert!(inverse_round_trip(&w, 20).unwrap() < 1e-9);
    }
}
