//! Browser bindings: three curve producers driven by a measure block typed
//! into the page. The plain functions are usable natively; the
//! `#[wasm_bindgen]` wrappers hand curves to JavaScript as
//! `{ x: Float64Array, y: Float64Array, note: string }`.

use std::path::Path;

use levykit::coefficient::CoefficientSpec;
use levykit::density::transition_density;
use levykit::grid::SpectralGrid;
use levykit::io::{measure_from_config, Config, SolveConfig};
use levykit::measures::MeasureSpec;
use levykit::symbol::Symbol;
use wasm_bindgen::prelude::*;

/// A sampled curve with a one-line summary.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub note: String,
}

fn parse(text: &str, name: &str) -> Result<Config, String> {
    Config::parse(text, Path::new(name)).map_err(|e| e.to_string())
}

pub fn measure(text: &str) -> Result<MeasureSpec, String> {
    measure_from_config(&parse(text, "measure")?).map_err(|e| e.to_string())
}

/// Indices of the x1 axis (x2 = 0 in d = 2), in ascending x.
fn axis(grid: &SpectralGrid) -> Vec<(f64, usize)> {
    let n = grid.n();
    let row = if grid.dim() == 1 { 0 } else { grid.origin_index() % n };
    let mut idx: Vec<(f64, usize)> = (0..n)
        .map(|j| {
            let flat = if grid.dim() == 1 { j } else { j * n + row };
            (grid.coord(j), flat)
        })
        .collect();
    idx.sort_by(|a, b| a.0.total_cmp(&b.0));
    idx
}

/// p(0, t, ·) along the first axis.
pub fn density(text: &str, t: f64, n: usize, half_width: f64) -> Result<Curve, String> {
    let spec = measure(text)?;
    let grid = SpectralGrid::new(spec.dim(), n, half_width).map_err(|e| e.to_string())?;
    let p = transition_density(&spec, &CoefficientSpec::unit(), 0.0, t, &grid).map_err(|e| e.to_string())?;
    let (x, y) = axis(&grid).into_iter().map(|(x, k)| (x, p.values[k])).unzip();
    Ok(Curve {
        x,
        y,
        note: format!("mass {:.10}, peak {:.4e}, tail beyond box ≤ {:.2e}", p.mass(), p.peak(), p.tail_estimate),
    })
}

/// −ℜψ(ξ, 0) on `points` frequencies spread logarithmically over
/// [ξ_max·2^-10, ξ_max].
pub fn symbol(text: &str, xi_max: f64, points: usize) -> Result<Curve, String> {
    if !(xi_max > 0.0) || points < 2 {
        return Err("need ξ_max > 0 and at least two points".into());
    }
    let spec = measure(text)?;
    let x: Vec<f64> = (0..points)
        .map(|i| xi_max * (-10.0 * (1.0 - i as f64 / (points - 1) as f64)).exp2())
        .collect();
    let xis: Vec<[f64; 2]> = x.iter().map(|&v| [v, 0.0]).collect();
    let vals = Symbol::new(&spec).eval_many(&xis).map_err(|e| e.to_string())?;
    let y: Vec<f64> = vals.iter().map(|v| -v.re).collect();
    let slope = (y[points - 1] / y[points - 2]).ln() / (x[points - 1] / x[points - 2]).ln();
    Ok(Curve {
        x,
        y,
        note: format!("local log-log slope at ξ_max: {slope:.4}"),
    })
}

/// Solution of the parabolic problem at the final time along the first
/// axis, and its L2 norm over time. `run` holds solve keys (lambda, T, nt,
/// grid.n, grid.L, coeff.form, forcing, ...).
pub fn solve(measure_text: &str, run: &str) -> Result<(Curve, Curve), String> {
    let mcfg = parse(measure_text, "measure")?;
    let cfg = parse(run, "run")?;
    let sc = SolveConfig::from_configs(&cfg, &mcfg, None, None).map_err(|e| e.to_string())?;
    let (r, _) = sc.solve().map_err(|e| e.to_string())?;
    let last = r.trajectory.last().ok_or("empty trajectory")?;
    let (x, y) = axis(&sc.grid).into_iter().map(|(x, k)| (x, last[k])).unzip();
    let norms = r.trajectory.iter().map(|u| sc.grid.lp_norm(u, 2.0)).collect();
    let d = &r.diagnostics;
    let note = format!(
        "residual {:.2e}, |u|/(ρ|f|) = {:.4}, iterations {:?}",
        d.residual, d.constants.n_size, d.iterations
    );
    Ok((
        Curve { x, y, note: note.clone() },
        Curve {
            x: r.times.clone(),
            y: norms,
            note,
        },
    ))
}

fn to_js(c: &Curve) -> Result<JsValue, JsValue> {
    let o = js_sys::Object::new();
    js_sys::Reflect::set(&o, &"x".into(), &js_sys::Float64Array::from(c.x.as_slice()))?;
    js_sys::Reflect::set(&o, &"y".into(), &js_sys::Float64Array::from(c.y.as_slice()))?;
    js_sys::Reflect::set(&o, &"note".into(), &c.note.as_str().into())?;
    Ok(o.into())
}

#[wasm_bindgen(js_name = densityCurve)]
pub fn density_curve(measure: &str, t: f64, n: usize, half_width: f64) -> Result<JsValue, JsValue> {
    to_js(&density(measure, t, n, half_width)?)
}

#[wasm_bindgen(js_name = symbolCurve)]
pub fn symbol_curve(measure: &str, xi_max: f64, points: usize) -> Result<JsValue, JsValue> {
    to_js(&symbol(measure, xi_max, points)?)
}

/// `[final profile, norm over time]`.
#[wasm_bindgen(js_name = solveCurves)]
pub fn solve_curves(measure: &str, run: &str) -> Result<JsValue, JsValue> {
    let (a, b) = solve(measure, run)?;
    let arr = js_sys::Array::new();
    arr.push(&to_js(&a)?);
    arr.push(&to_js(&b)?);
    Ok(arr.into())
}

#[wasm_bindgen]
pub fn version() -> String {
    levykit::VERSION.to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    const CAUCHY: &str = "family = radial_stable\ndim = 1\nalpha = 1\n";

    #[test]
    fn density_matches_cauchy() {
        let c = density(CAUCHY, 1.0, 1024, 64.0).unwrap();
        let err = c
            .x
            .iter()
            .zip(&c.y)
            .map(|(x, p)| (p - 1.0 / (std::f64::consts::PI.powi(2) + x * x)).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-3);
        assert!(c.x.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn symbol_slope_is_alpha() {
        let c = symbol("family = radial_stable\nalpha = 0.6\n", 4.0, 40).unwrap();
        assert!(c.note.contains("0.6000"), "{}", c.note);
    }

    #[test]
    fn flat_solve_curve() {
        let (u, norm) = solve(CAUCHY, "lambda = 2\nT = 1\nnt = 32\ngrid.n = 32\ngrid.L = 4\n").unwrap();
        let exact = (1.0 - (-2.0f64).exp()) / 2.0;
        assert!(u.y.iter().all(|v| (v - exact).abs() < 1e-8));
        assert_eq!(norm.x.len(), 33);
        assert_eq!(norm.y[0], 0.0);
    }

    #[test]
    fn two_dimensional_slice() {
        let c = density("family = anisotropic\ndim = 2\nalpha = 1\nc = 1, 1\n", 0.5, 128, 32.0).unwrap();
        assert_eq!(c.x.len(), 128);
        assert!(c.y.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn page_presets_run() {
        let presets = [
            "family = radial_stable\ndim = 1\nalpha = 0.7\nc = 1",
            "family = radial_angular\ndim = 1\nprofile = r^(-2.5) * exp(-r)\nangular = uniform\nsigma = 1.5",
        ];
        for p in presets {
            density(p, 1.0, 1024, 64.0).unwrap();
            symbol(p, 16.0, 200).unwrap();
        }
        let run = "lambda = 2\nT = 1\nnt = 64\ngrid.n = 256\ngrid.L = 16\nforcing = exp(-x^2) * cos(pi*t)\ncoeff.form = 1";
        solve(CAUCHY, run).unwrap();
        let aniso = "family = anisotropic\ndim = 2\nalpha = 1\nc = 1, 1";
        solve(aniso, &run.replace("grid.n = 256", "grid.n = 64")).unwrap();
    }

    #[test]
    fn errors_are_messages() {
        assert!(density("family = nope\n", 1.0, 64, 8.0).unwrap_err().contains("unknown family"));
        assert!(symbol(CAUCHY, -1.0, 10).is_err());
    }
}
