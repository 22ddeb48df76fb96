//! Quadrature building blocks: adaptive Gauss-Kronrod on finite intervals,
//! Gauss-Legendre panels, log-variable tails and Wynn's epsilon acceleration.

use num_complex::Complex64;
use std::ops::{Add, Mul, Sub};
use std::sync::OnceLock;

/// Scalars the integrators can accumulate.
pub trait Value: Copy + Default + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self> {
    fn magnitude(&self) -> f64;
}

impl Value for f64 {
    fn magnitude(&self) -> f64 {
        self.abs()
    }
}

impl Value for Complex64 {
    fn magnitude(&self) -> f64 {
        self.norm()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
}

impl Tolerance {
    pub const fn new(abs: f64, rel: f64) -> Self {
        Tolerance { abs, rel }
    }

    fn target(&self, value: f64) -> f64 {
        self.abs.max(self.rel * value)
    }
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance::new(1e-300, 1e-12)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Estimate<T> {
    pub value: T,
    pub error: f64,
    pub converged: bool,
}

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

/// One 15-point Kronrod panel with the QUADPACK error heuristic.
pub fn gk15<T: Value>(f: &mut impl FnMut(f64) -> T, a: f64, b: f64) -> (T, f64) {
    let c = 0.5 * (a + b);
    let hl = 0.5 * (b - a);
    let fc = f(c);
    let mut resk = fc * WGK[7];
    let mut resg = fc * WG[3];
    let mut fv1 = [T::default(); 7];
    let mut fv2 = [T::default(); 7];
    for j in 0..7 {
        let dx = hl * XGK[j];
        let f1 = f(c - dx);
        let f2 = f(c + dx);
        fv1[j] = f1;
        fv2[j] = f2;
        resk = resk + (f1 + f2) * WGK[j];
        if j % 2 == 1 {
            resg = resg + (f1 + f2) * WG[j / 2];
        }
    }
    let mean = resk * 0.5;
    let mut resasc = WGK[7] * (fc - mean).magnitude();
    for j in 0..7 {
        resasc += WGK[j] * ((fv1[j] - mean).magnitude() + (fv2[j] - mean).magnitude());
    }
    resasc *= hl.abs();
    let value = resk * hl;
    let mut err = ((resk - resg) * hl).magnitude();
    if resasc != 0.0 && err != 0.0 {
        err = resasc * (1.0f64).min((200.0 * err / resasc).powf(1.5));
    }
    (value, err.max(f64::EPSILON * 50.0 * value.magnitude()))
}

/// Globally adaptive bisection of the panel with the largest error.
pub fn adaptive<T: Value>(
    mut f: impl FnMut(f64) -> T,
    a: f64,
    b: f64,
    tol: Tolerance,
    max_panels: usize,
) -> Estimate<T> {
    if a == b {
        return Estimate {
            value: T::default(),
            error: 0.0,
            converged: true,
        };
    }
    let (v, e) = gk15(&mut f, a, b);
    let mut panels = vec![(a, b, v, e)];
    let mut total = v;
    let mut err = e;
    while err > tol.target(total.magnitude()) && panels.len() < max_panels {
        let (idx, _) = panels
            .iter()
            .enumerate()
            .fold((0, -1.0), |acc, (i, p)| if p.3 > acc.1 { (i, p.3) } else { acc });
        let (pa, pb, pv, pe) = panels.swap_remove(idx);
        let mid = 0.5 * (pa + pb);
        if mid <= pa.min(pb) || mid >= pa.max(pb) {
            panels.push((pa, pb, pv, pe));
            break;
        }
        let (v1, e1) = gk15(&mut f, pa, mid);
        let (v2, e2) = gk15(&mut f, mid, pb);
        total = total - pv + v1 + v2;
        err = err - pe + e1 + e2;
        panels.push((pa, mid, v1, e1));
        panels.push((mid, pb, v2, e2));
    }
    // Re-sum to shed accumulated cancellation in the running total.
    let value = panels.iter().fold(T::default(), |s, p| s + p.2);
    let error: f64 = panels.iter().map(|p| p.3).sum();
    Estimate {
        value,
        error,
        converged: error <= tol.target(value.magnitude()),
    }
}

/// Adaptive integral over consecutive breakpoints.
pub fn adaptive_pieces<T: Value>(
    mut f: impl FnMut(f64) -> T,
    breaks: &[f64],
    tol: Tolerance,
    max_panels: usize,
) -> Estimate<T> {
    let mut out = Estimate {
        value: T::default(),
        error: 0.0,
        converged: true,
    };
    for w in breaks.windows(2) {
        let e = adaptive(&mut f, w[0], w[1], tol, max_panels);
        out.value = out.value + e.value;
        out.error += e.error;
        out.converged &= e.converged;
    }
    out
}

/// Gauss-Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = (n + 1) / 2;
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p1, mut p2) = (1.0, 0.0);
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                p1 = ((2 * j + 1) as f64 * z * p2 - j as f64 * p3) / (j + 1) as f64;
            }
            dp = n as f64 * (z * p1 - p2) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Cached 8-point rule.
pub fn gl8() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(8))
}

/// Running integrals ∫_{t_0}^{t_i} y dt on ordered nodes, integrating on
/// each interval the degree-5 interpolant through the six nearest nodes
/// (fewer when fewer nodes exist).
pub fn cumulative(t: &[f64], y: &[f64]) -> Vec<f64> {
    cumulative_weights(t)
        .iter()
        .map(|row| row.iter().map(|&(j, w)| w * y[j]).sum())
        .collect()
}

/// Sparse weights of [`cumulative`]: row i lists (j, w_ij) with
/// ∫_{t_0}^{t_i} y ≈ Σ_j w_ij y_j.
pub fn cumulative_weights(t: &[f64]) -> Vec<Vec<(usize, f64)>> {
    let n = t.len();
    let mut rows = vec![Vec::new(); n];
    if n < 2 {
        return rows;
    }
    let width = n.min(6);
    let (gx, gw) = gl8();
    let mut dense = vec![0.0; n];
    for i in 0..n - 1 {
        let start = (i + 1).saturating_sub(width / 2).min(n - width);
        let nodes = &t[start..start + width];
        let (a, b) = (t[i], t[i + 1]);
        for (xi, wi) in gx.iter().zip(gw.iter()) {
            let x = 0.5 * (a + b) + 0.5 * (b - a) * xi;
            for (j, &tj) in nodes.iter().enumerate() {
                let mut l = 1.0;
                for (k, &tk) in nodes.iter().enumerate() {
                    if k != j {
                        l *= (x - tk) / (tj - tk);
                    }
                }
                dense[start + j] += 0.5 * (b - a) * wi * l;
            }
        }
        rows[i + 1] = dense.iter().enumerate().filter(|(_, w)| **w != 0.0).map(|(j, &w)| (j, w)).collect();
    }
    rows
}

/// Fixed composite Gauss-Legendre over equal panels.
pub fn composite_gl<T: Value>(mut f: impl FnMut(f64) -> T, a: f64, b: f64, panels: usize) -> T {
    let (x, w) = gl8();
    let h = (b - a) / panels as f64;
    let mut acc = T::default();
    for p in 0..panels {
        let c = a + (p as f64 + 0.5) * h;
        for (xi, wi) in x.iter().zip(w) {
            acc = acc + f(c + 0.5 * h * xi) * (0.5 * h * wi);
        }
    }
    acc
}

/// ∫_{s0}^{∞} h(s) ds for an integrand that eventually decays like e^{-κs}.
/// Chunks double in length; once the local decay rate is resolved the
/// remainder is added in closed form.
pub fn exp_tail<T: Value>(mut h: impl FnMut(f64) -> T, s0: f64, tol: Tolerance, s_cap: f64) -> Estimate<T> {
    let mut total = T::default();
    let mut err = 0.0;
    let mut converged = true;
    let mut a = s0;
    let mut len = 1.0;
    let mut prev_kappa = f64::NAN;
    loop {
        let b = (a + len).min(s_cap);
        let e = adaptive(&mut h, a, b, tol, 200);
        total = total + e.value;
        err += e.error;
        converged &= e.converged;
        let hb = h(b).magnitude();
        let hm = h(b - 0.25).magnitude();
        let scale = total.magnitude();
        let kappa = if hb > 0.0 && hm > 0.0 { (hm / hb).ln() / 0.25 } else { f64::INFINITY };
        // a decay rate that no longer changes means the closed-form remainder
        // is exact to rounding (pure power law in the original variable)
        let stable = (kappa - prev_kappa).abs() <= 1e-10 * kappa.abs();
        prev_kappa = kappa;
        if hb == 0.0 || (kappa > 1e-3 && (hb / kappa <= tol.target(scale) * 0.1 || stable)) {
            if kappa.is_finite() && hb > 0.0 {
                total = total + h(b) * (1.0 / kappa);
            }
            break;
        }
        if b >= s_cap {
            if kappa > 1e-3 {
                total = total + h(b) * (1.0 / kappa);
                err += hb / kappa * 0.1;
            } else {
                return Estimate {
                    value: total,
                    error: f64::INFINITY,
                    converged: false,
                };
            }
            break;
        }
        a = b;
        len = (len * 2.0).min(32.0);
    }
    Estimate {
        value: total,
        error: err,
        converged,
    }
}

/// Wynn's epsilon algorithm applied to a sequence of partial sums; returns
/// the best extrapolated limit and a crude error estimate.
pub fn wynn_epsilon(sums: &[f64]) -> (f64, f64) {
    let n = sums.len();
    if n < 3 {
        let last = sums.last().copied().unwrap_or(0.0);
        return (last, f64::INFINITY);
    }
    let mut prev = vec![0.0; n + 1];
    let mut cur: Vec<f64> = sums.to_vec();
    let mut best = *sums.last().unwrap();
    let mut best_err = (sums[n - 1] - sums[n - 2]).abs();
    let mut k = 0;
    while cur.len() > 1 {
        let mut next = Vec::with_capacity(cur.len() - 1);
        for i in 0..cur.len() - 1 {
            let d = cur[i + 1] - cur[i];
            let base = if k == 0 { 0.0 } else { prev[i + 1] };
            if d == 0.0 {
                next.push(f64::INFINITY);
            } else {
                next.push(base + 1.0 / d);
            }
        }
        k += 1;
        if k % 2 == 0 && next.len() >= 2 {
            let m = next.len();
            let (a, b) = (next[m - 1], next[m - 2]);
            if a.is_finite() && b.is_finite() {
                let e = (a - b).abs();
                if e < best_err {
                    best_err = e;
                    best = a;
                }
            }
        }
        prev = cur;
        cur = next;
    }
    (best, best_err)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gk_polynomial_exact() {
        let e = adaptive(|x: f64| x.powi(5) - 3.0 * x * x, 0.0, 2.0, Tolerance::default(), 50);
        assert!((e.value - (64.0 / 6.0 - 8.0)).abs() < 1e-13);
    }

    #[test]
    fn adaptive_handles_endpoint_singularity() {
        let e = adaptive(|x: f64| x.powf(-0.5), 0.0, 1.0, Tolerance::new(1e-300, 1e-10), 500);
        assert!((e.value - 2.0).abs() < 1e-8, "{}", e.value);
    }

    #[test]
    fn gauss_legendre_integrates_degree_15() {
        let (x, w) = gauss_legendre(8);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(14)).sum();
        assert!((s - 2.0 / 15.0).abs() < 1e-14);
        let total: f64 = w.iter().sum();
        assert!((total - 2.0).abs() < 1e-14);
    }

    #[test]
    fn exp_tail_matches_closed_form() {
        let e = exp_tail(|s: f64| (-0.3 * s).exp(), 0.0, Tolerance::new(1e-300, 1e-12), 700.0);
        assert!((e.value - 1.0 / 0.3).abs() < 1e-10, "{}", e.value);
    }

    #[test]
    fn wynn_accelerates_alternating_harmonic() {
        let mut s = 0.0;
        let sums: Vec<f64> = (1..=20)
            .map(|k| {
                s += if k % 2 == 1 { 1.0 } else { -1.0 } / k as f64;
                s
            })
            .collect();
        let (v, _) = wynn_epsilon(&sums);
        assert!((v - std::f64::consts::LN_2).abs() < 1e-10, "{v}");
    }

    #[test]
    fn cumulative_is_exact_for_quintics() {
        let t: Vec<f64> = (0..11).map(|i| (i as f64 * 0.1).powf(1.3)).collect();
        let y: Vec<f64> = t.iter().map(|x| 1.0 - 2.0 * x + x.powi(5)).collect();
        let c = cumulative(&t, &y);
        for (x, v) in t.iter().zip(&c) {
            let exact = x - x * x + x.powi(6) / 6.0;
            assert!((v - exact).abs() < 1e-13);
        }
    }
}
