//! Invariants checked over randomized inputs.

use std::f64::consts::PI;

use levykit::coefficient::{CoefficientForm, CoefficientSpec};
use levykit::density::transition_density;
use levykit::expr::Expr;
use levykit::grid::SpectralGrid;
use levykit::io::{Config, Lvf1};
use levykit::measures::{Angular, MeasureSpec};
use levykit::orv::estimate_indices;
use levykit::profile::RadialProfile;
use levykit::simulate::{empirical_cf, sample_increments, SamplePlan};
use levykit::solver::{solve_duhamel, solve_frozen_iteration, FrozenOptions, SolveResult, Trajectory};
use levykit::spaces;
use levykit::symbol::Symbol;
use proptest::prelude::*;

fn max_diff(a: &SolveResult, b: &[Vec<f64>]) -> f64 {
    a.trajectory
        .iter()
        .zip(b)
        .flat_map(|(u, v)| u.iter().zip(v).map(|(x, y)| (x - y).abs()))
        .fold(0.0, f64::max)
}

fn sup(fields: &[Vec<f64>]) -> f64 {
    fields.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()))
}

fn forcing(grid: &SpectralGrid, seed: u64, nt: usize) -> Trajectory {
    let g = spaces::band_limited(grid, 4, seed);
    let times = Trajectory::uniform_times(1.0, nt).unwrap();
    let fields = times
        .iter()
        .map(|&t| g.iter().map(|v| (1.0 + t * t) * v + (3.0 * t).sin()).collect())
        .collect();
    Trajectory::new(times, fields).unwrap()
}

fn oscillating() -> CoefficientSpec {
    CoefficientSpec::new(
        CoefficientForm::Sampled(Expr::parse("1 + 0.1*cos(2*pi*x/8)").unwrap()),
        0.9,
        1.1,
        1.0,
        vec![],
    )
    .unwrap()
}

fn tight() -> FrozenOptions {
    FrozenOptions {
        homotopy: 1,
        tol: 1e-13,
        max_iter: 60,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn rescaled_tail_is_one(alpha in 0.2f64..1.9, c in 0.1f64..10.0, j in -10i32..=10, fam in 0usize..3) {
        let spec = match fam {
            0 => MeasureSpec::radial_stable(1, alpha, c).unwrap(),
            1 => MeasureSpec::anisotropic(alpha, vec![c, 1.0 / c]).unwrap(),
            _ => MeasureSpec::radial_stable(2, alpha, c).unwrap(),
        };
        let m = spec.rescale((j as f64).exp2()).unwrap().tail_mass(1.0).unwrap();
        prop_assert!((m - 1.0).abs() < 1e-10, "{m}");
    }

    #[test]
    fn scale_profile_inverts_tail(alpha in 0.2f64..1.9, c in 0.1f64..10.0, r in 1e-3f64..1e3) {
        let spec = MeasureSpec::radial_stable(1, alpha, c).unwrap();
        let prod = spec.w_profile().eval(r) * spec.tail_mass(r).unwrap();
        prop_assert!((prod - 1.0).abs() < 1e-12);
    }

    #[test]
    fn symbol_of_symmetric_measure(alpha in 0.3f64..1.9, xi in -20.0f64..20.0) {
        let spec = MeasureSpec::radial_stable(1, alpha, 1.0).unwrap();
        let s = Symbol::new(&spec);
        let a = s.eval([xi, 0.0]).unwrap();
        let b = s.eval([-xi, 0.0]).unwrap();
        prop_assert!(a.re <= 0.0);
        prop_assert!(a.im.abs() <= 1e-12 * (1.0 + a.re.abs()));
        prop_assert!((a - b.conj()).norm() <= 1e-12 * (1.0 + a.norm()));
        prop_assert!(s.eval([0.0, 0.0]).unwrap().norm() == 0.0);
    }

    #[test]
    fn stable_symbol_is_homogeneous(alpha in 0.3f64..1.9, xi in 0.01f64..10.0, k in 0.1f64..10.0) {
        let spec = MeasureSpec::radial_stable(1, alpha, 1.0).unwrap();
        let s = Symbol::new(&spec);
        let a = s.eval([k * xi, 0.0]).unwrap().re;
        let b = s.eval([xi, 0.0]).unwrap().re * k.powf(alpha);
        prop_assert!((a / b - 1.0).abs() < 1e-9);
    }

    #[test]
    fn power_law_indices(e in 0.1f64..1.9) {
        let r = estimate_indices(&RadialProfile::power(1.0, e)).unwrap();
        for v in [r.p1, r.q1, r.p2, r.q2] {
            prop_assert!((v - e).abs() < 1e-6);
        }
    }

    #[test]
    fn lvf1_round_trip(vals in proptest::collection::vec(-1e300f64..1e300, 16), l in 0.5f64..100.0) {
        let g = SpectralGrid::new(1, 16, l).unwrap();
        let dump = Lvf1::from_grid(&g, &vals).unwrap();
        let back = Lvf1::decode(&dump.encode()).unwrap();
        prop_assert_eq!(back, dump);
    }

    #[test]
    fn config_canonical_is_stable(a in 0.1f64..2.0, pad in 0usize..4) {
        let sp = " ".repeat(pad);
        let text = format!("# comment\nfamily{sp}={sp}radial_stable\n\nalpha = {a}\n{sp}dim = 1\n");
        let cfg = Config::parse(&text, std::path::Path::new("mem.cfg")).unwrap();
        let again = Config::parse(&cfg.canonical(), std::path::Path::new("mem.cfg")).unwrap();
        prop_assert_eq!(cfg.canonical(), again.canonical());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn density_has_unit_mass(alpha in 0.6f64..1.9, t in 0.2f64..2.0) {
        let spec = MeasureSpec::radial_stable(1, alpha, 1.0).unwrap();
        let g = SpectralGrid::new(1, 2048, 256.0).unwrap();
        let p = transition_density(&spec, &CoefficientSpec::unit(), 0.0, t, &g).unwrap();
        prop_assert!((p.mass() - 1.0).abs() < 1e-8);
        prop_assert!(p.min() > -1e-6 * p.peak());
    }

    #[test]
    fn empirical_cf_is_a_cf(seed in 0u64..1000, xi in -2.0f64..2.0) {
        let plan = SamplePlan::new(MeasureSpec::radial_stable(1, 1.0, 1.0).unwrap(), 0.0, 1.0, 400, 1e-2, seed);
        let s = sample_increments(&plan).unwrap();
        let v = empirical_cf(&s, &[[0.0, 0.0], [xi, 0.0]]).unwrap();
        prop_assert!((v[0].re - 1.0).abs() < 1e-15 && v[0].im.abs() < 1e-15);
        prop_assert!(v[1].norm() <= 1.0 + 1e-12);
    }

    #[test]
    fn duhamel_is_linear(s1 in 0u64..1000, s2 in 0u64..1000, a in -3.0f64..3.0, lambda in 0.0f64..20.0) {
        let spec = MeasureSpec::radial_stable(1, 1.2, 1.0).unwrap();
        let unit = CoefficientSpec::unit();
        let g = SpectralGrid::new(1, 64, 8.0).unwrap();
        let (f1, f2) = (forcing(&g, s1, 16), forcing(&g, s2, 16));
        let u1 = solve_duhamel(&spec, &unit, lambda, &f1, &g, 2.0).unwrap();
        let u2 = solve_duhamel(&spec, &unit, lambda, &f2, &g, 2.0).unwrap();
        let u = solve_duhamel(&spec, &unit, lambda, &f1.combine(&f2, a, 1.0).unwrap(), &g, 2.0).unwrap();
        let expect: Vec<Vec<f64>> = u1.trajectory.iter().zip(&u2.trajectory)
            .map(|(x, y)| x.iter().zip(y).map(|(p, q)| a * p + q).collect()).collect();
        prop_assert!(max_diff(&u, &expect) <= 1e-10 * (1.0 + sup(&expect)));
    }

    #[test]
    fn duhamel_is_causal(seed in 0u64..1000, cut in 1usize..15, lambda in 0.0f64..20.0) {
        let spec = MeasureSpec::radial_stable(1, 0.8, 1.0).unwrap();
        let unit = CoefficientSpec::unit();
        let g = SpectralGrid::new(1, 64, 8.0).unwrap();
        let f = forcing(&g, seed, 16);
        let t0 = f.times[cut];
        let full = solve_duhamel(&spec, &unit, lambda, &f, &g, 2.0).unwrap();
        let cut_run = solve_duhamel(&spec, &unit, lambda, &f.truncated(t0), &g, 2.0).unwrap();
        for i in 0..=cut {
            let d = full.trajectory[i].iter().zip(&cut_run.trajectory[i]).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
            prop_assert!(d <= 1e-12, "node {i}: {d}");
        }
        prop_assert!(full.trajectory[0].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn frozen_iteration_is_linear(s1 in 0u64..1000, s2 in 0u64..1000, a in -2.0f64..2.0) {
        let spec = MeasureSpec::radial_stable(1, 1.0, 1.0).unwrap();
        let m = oscillating();
        let g = SpectralGrid::new(1, 64, 8.0).unwrap();
        let (f1, f2) = (forcing(&g, s1, 16), forcing(&g, s2, 16));
        let run = |f: &Trajectory| solve_frozen_iteration(&spec, &m, 10.0, f, &g, 2.0, tight()).unwrap();
        let (u1, u2) = (run(&f1), run(&f2));
        let u = run(&f1.combine(&f2, a, 1.0).unwrap());
        let expect: Vec<Vec<f64>> = u1.trajectory.iter().zip(&u2.trajectory)
            .map(|(x, y)| x.iter().zip(y).map(|(p, q)| a * p + q).collect()).collect();
        prop_assert!(max_diff(&u, &expect) <= 1e-10 * (1.0 + sup(&expect)));
        prop_assert!(u.trajectory[0].iter().all(|&v| v == 0.0));
    }
}

#[test]
fn flat_field_solves_scalar_ode() {
    let spec = MeasureSpec::radial_angular(
        1,
        RadialProfile::power(1.0, -1.5),
        Angular::Table(vec![1.0, 2.0]),
        0.5,
    )
    .unwrap();
    let g = SpectralGrid::new(1, 64, 8.0).unwrap();
    let f = Trajectory::sample(&g, 1.0, 32, |_, _| 1.0).unwrap();
    let r = solve_duhamel(&spec, &CoefficientSpec::unit(), 2.0, &f, &g, 2.0).unwrap();
    for (t, u) in r.times.iter().zip(&r.trajectory) {
        let exact = (1.0 - (-2.0 * t).exp()) / 2.0;
        assert!(u.iter().all(|v| (v - exact).abs() < 1e-8));
    }
    assert!(r.diagnostics.residual < 1e-8);
}

#[test]
fn residual_flags_nonzero_start() {
    use levykit::solver::residual;
    let spec = MeasureSpec::radial_stable(1, 1.0, 1.0).unwrap();
    let unit = CoefficientSpec::unit();
    let g = SpectralGrid::new(1, 64, 8.0).unwrap();
    let f = Trajectory::sample(&g, 1.0, 32, |t, x| (PI * t).cos() * (2.0 * PI * x[0] / 16.0).sin()).unwrap();
    let mut r = solve_duhamel(&spec, &unit, 1.0, &f, &g, 2.0).unwrap();
    for u in r.trajectory.iter_mut() {
        for v in u.iter_mut() {
            *v += 0.5;
        }
    }
    let bad = residual(&r, &spec, &unit, 1.0, &f).unwrap();
    assert!(bad > 0.05, "{bad}");
}
