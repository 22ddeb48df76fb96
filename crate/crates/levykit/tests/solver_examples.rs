//! Worked solver examples: manufactured solutions, time-step refinement and
//! the frozen-coefficient entry point on x-independent data.

use levykit::coefficient::CoefficientSpec;
use levykit::grid::SpectralGrid;
use levykit::measures::MeasureSpec;
use levykit::solver::{apply_nonlocal, solve_duhamel, solve_frozen_iteration, FrozenOptions, Operator, Trajectory};
use levykit::spaces;

fn cauchy() -> MeasureSpec {
    MeasureSpec::radial_stable(1, 1.0, 1.0).unwrap()
}

#[test]
fn manufactured_solution_recovered() {
    let spec = MeasureSpec::radial_stable(1, 1.5, 1.0).unwrap();
    let unit = CoefficientSpec::unit();
    let grid = SpectralGrid::new(1, 256, 16.0).unwrap();
    let g = spaces::band_limited(&grid, 8, 3);
    let lg = Operator::new(&spec, &unit, &grid).unwrap().apply(&g, 0.0).unwrap();
    let lambda = 3.0;
    let times = Trajectory::uniform_times(1.0, 32).unwrap();
    let fields = times.iter().map(|&t| g.iter().zip(&lg).map(|(a, b)| a - t * b + lambda * t * a).collect()).collect();
    let f = Trajectory::new(times, fields).unwrap();
    let r = solve_duhamel(&spec, &unit, lambda, &f, &grid, 2.0).unwrap();
    for (t, u) in r.times.iter().zip(&r.trajectory) {
        let e: Vec<f64> = u.iter().zip(&g).map(|(u, a)| u - t * a).collect();
        assert!(grid.lp_norm(&e, 2.0) < 1e-3 * grid.lp_norm(&g, 2.0));
    }
}

#[test]
fn halving_step_reduces_residual() {
    let spec = cauchy();
    let unit = CoefficientSpec::unit();
    let grid = SpectralGrid::new(1, 128, 16.0).unwrap();
    let run = |nt: usize| {
        let f = Trajectory::sample(&grid, 1.0, nt, |t, x| (5.0 * t).sin() * (1.0 + (x[0] / 4.0).cos())).unwrap();
        solve_duhamel(&spec, &unit, 100.0, &f, &grid, 2.0).unwrap().diagnostics.residual
    };
    let (coarse, fine) = (run(32), run(64));
    assert!(coarse / fine >= 1.8, "{coarse:e} → {fine:e}");
}

#[test]
fn frozen_on_x_free_coefficient_is_direct() {
    let spec = cauchy();
    let m = CoefficientSpec::constant(1.3).unwrap();
    let grid = SpectralGrid::new(1, 128, 16.0).unwrap();
    let g = spaces::band_limited(&grid, 6, 5);
    let f = Trajectory::steady(1.0, 32, &g).unwrap();
    let a = solve_duhamel(&spec, &m, 4.0, &f, &grid, 2.0).unwrap();
    let b = solve_frozen_iteration(&spec, &m, 4.0, &f, &grid, 2.0, FrozenOptions::default()).unwrap();
    assert_eq!(b.diagnostics.iterations.iter().sum::<usize>(), 1);
    let d = a
        .trajectory
        .iter()
        .zip(&b.trajectory)
        .flat_map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q).abs()))
        .fold(0.0, f64::max);
    assert!(d < 1e-12);
}

#[test]
fn nonlocal_annihilates_constants() {
    let spec = MeasureSpec::radial_stable(1, 0.7, 1.0).unwrap();
    let grid = SpectralGrid::new(1, 64, 8.0).unwrap();
    let out = apply_nonlocal(&spec, &CoefficientSpec::unit(), &vec![2.5; 64], 0.0, &grid).unwrap();
    assert!(out.iter().all(|v| v.abs() < 1e-10), "{:?}", &out[..4]);
}
