//! Subcommand bodies. Each returns the process exit code on completion.

use std::path::Path;

use levykit::coefficient::CoefficientSpec;
use levykit::density::transition_density;
use levykit::grid::SpectralGrid;
use levykit::io::{csv_table, field_csv, measure_from_config, Config, Lvf1, SolveConfig};
use levykit::measures::MeasureSpec;
use levykit::simulate::{empirical_cf, sample_increments, truncation_bias, SamplePlan};
use levykit::symbol::Symbol;
use levykit::verify::{self, VerifyOptions};
use levykit::{orv, Result};

use crate::output::OutDir;
use crate::{AnalyzeArgs, Command, DensityArgs, GridArgs, SimulateArgs, SolveArgs, VerifyArgs};

pub fn run(cmd: Command) -> Result<u8> {
    match cmd {
        Command::Analyze(a) => analyze(a),
        Command::Symbol(a) => symbol(a),
        Command::Density(a) => density(a),
        Command::Simulate(a) => simulate(a),
        Command::Solve(a) => solve(a),
        Command::Verify(a) => verify(a),
    }
}

fn load_measure(path: &Path) -> Result<(MeasureSpec, String)> {
    let cfg = Config::load(path)?;
    Ok((measure_from_config(&cfg)?, cfg.canonical()))
}

fn analyze(a: AnalyzeArgs) -> Result<u8> {
    let (spec, canon) = load_measure(&a.measure)?;
    let w = spec.w_profile();
    let report = orv::analyze(&w, spec.sigma())?;
    let rows = (-40..=40).map(|j| {
        let r = (j as f64 / 2.0).exp2();
        let tail = spec.tail_mass(r).unwrap_or(f64::NAN);
        vec![r, tail, w.eval(r)]
    });
    let scale = csv_table(&["r", "tail_mass", "w"], rows);
    let mut out = OutDir::create(&a.output.out)?;
    out.write("orv.csv", report.to_csv().as_bytes())?;
    out.write("scale.csv", scale.as_bytes())?;
    out.finish("analyze", &canon, &[], None)?;
    print!("{report}");
    Ok(0)
}

fn grid_for(spec: &MeasureSpec, g: &GridArgs, n1: usize, n2: usize, l: f64) -> Result<SpectralGrid> {
    let n = g.grid_n.unwrap_or(if spec.dim() == 1 { n1 } else { n2 });
    SpectralGrid::new(spec.dim(), n, g.grid_l.unwrap_or(l))
}

fn grid_params(grid: &SpectralGrid) -> Vec<(&'static str, String)> {
    vec![("grid.n", grid.n().to_string()), ("grid.L", grid.half_width().to_string())]
}

fn symbol(a: GridArgs) -> Result<u8> {
    let (spec, canon) = load_measure(&a.measure)?;
    let grid = grid_for(&spec, &a, 256, 64, 16.0)?;
    let mut xis = grid.frequencies();
    // ascending frequency order reads better in d = 1 plots
    if grid.dim() == 1 {
        xis.sort_by(|p, q| p[0].total_cmp(&q[0]));
    }
    let vals = Symbol::new(&spec).eval_many(&xis)?;
    let csv = if grid.dim() == 1 {
        csv_table(&["xi", "re", "im"], xis.iter().zip(&vals).map(|(x, v)| vec![x[0], v.re, v.im]))
    } else {
        csv_table(&["xi1", "xi2", "re", "im"], xis.iter().zip(&vals).map(|(x, v)| vec![x[0], x[1], v.re, v.im]))
    };
    let mut out = OutDir::create(&a.output.out)?;
    out.write("symbol.csv", csv.as_bytes())?;
    out.finish("symbol", &canon, &grid_params(&grid), None)?;
    println!("symbol at {} frequencies written to {}", xis.len(), a.output.out.display());
    Ok(0)
}

fn density(a: DensityArgs) -> Result<u8> {
    let (spec, canon) = load_measure(&a.grid.measure)?;
    let grid = grid_for(&spec, &a.grid, 1024, 256, 64.0)?;
    let p = transition_density(&spec, &CoefficientSpec::unit(), a.s, a.t, &grid)?;
    let mut out = OutDir::create(&a.grid.output.out)?;
    out.write("density.lvf1", &Lvf1::from_grid(&grid, &p.values)?.encode())?;
    if grid.dim() == 1 {
        out.write("density.csv", field_csv(&grid, &p.values).as_bytes())?;
    }
    let mut params = grid_params(&grid);
    params.push(("s", a.s.to_string()));
    params.push(("t", a.t.to_string()));
    out.finish("density", &canon, &params, None)?;
    println!(
        "mass {:.12}, mass defect {:.3e}, tail estimate {:.3e}, peak {:.6e}",
        p.mass(),
        p.mass_defect,
        p.tail_estimate,
        p.peak()
    );
    Ok(0)
}

fn simulate(a: SimulateArgs) -> Result<u8> {
    let (spec, canon) = load_measure(&a.measure)?;
    let plan = SamplePlan::new(spec, 0.0, a.t, a.samples, a.eps, a.seed);
    let samples = sample_increments(&plan)?;
    let sym = Symbol::new(&plan.spec);
    let xis: Vec<[f64; 2]> = (-4..=1).map(|j| [(j as f64).exp2(), 0.0]).collect();
    let ecf = empirical_cf(&samples, &xis)?;
    let mut rows = Vec::new();
    for (xi, e) in xis.iter().zip(&ecf) {
        let exact = (sym.eval(*xi)? * plan.t).exp();
        let bound = 5.0 / (a.samples as f64).sqrt() + truncation_bias(&plan, *xi)?;
        rows.push(vec![xi[0], xi[1], e.re, e.im, exact.re, exact.im, bound]);
    }
    let mut out = OutDir::create(&a.output.out)?;
    out.write("increments.lvf1", &Lvf1::from_samples(samples.dim, &samples.data).encode())?;
    out.write(
        "ecf.csv",
        csv_table(&["xi1", "xi2", "ecf_re", "ecf_im", "cf_re", "cf_im", "envelope"], rows).as_bytes(),
    )?;
    let params = [
        ("samples", a.samples.to_string()),
        ("t", a.t.to_string()),
        ("eps", a.eps.to_string()),
    ];
    out.finish("simulate", &canon, &params, Some(a.seed))?;
    let m = samples.mean();
    println!("{} increments, sample mean ({:.4e}, {:.4e})", samples.len(), m[0], m[1]);
    Ok(0)
}

fn solve(a: SolveArgs) -> Result<u8> {
    let cfg = SolveConfig::load(&a.config, a.grid_n, a.grid_l)?;
    let (result, _) = cfg.solve()?;
    let mut out = OutDir::create(&a.output.out)?;
    let width = result.times.len().to_string().len().max(4);
    for (i, u) in result.trajectory.iter().enumerate() {
        let dump = Lvf1::from_grid(&cfg.grid, u)?;
        out.write(&format!("trajectory/u_{i:0width$}.lvf1"), &dump.encode())?;
    }
    out.write(
        "times.csv",
        csv_table(&["index", "t"], result.times.iter().enumerate().map(|(i, &t)| vec![i as f64, t])).as_bytes(),
    )?;
    if cfg.grid.dim() == 1 {
        let last = result.trajectory.last().expect("at least one node");
        out.write("u_final.csv", field_csv(&cfg.grid, last).as_bytes())?;
    }
    out.write("diagnostics.csv", result.diagnostics.to_csv().as_bytes())?;
    out.finish("solve", &cfg.canonical, &grid_params(&cfg.grid), None)?;
    let d = &result.diagnostics;
    println!(
        "residual {:.3e}, |u| {:.4e}, |L u| {:.4e}, |du/dt| {:.4e}, rho {:.4e}, iterations {:?}",
        d.residual, d.constants.u_lp, d.constants.generator_lp, d.constants.dt_lp, d.constants.rho, d.iterations
    );
    Ok(0)
}

fn verify(a: VerifyArgs) -> Result<u8> {
    let suite = a.suite;
    let (measure, canon) = match &a.measure {
        Some(p) => {
            let (m, c) = load_measure(p)?;
            (Some(m), c)
        }
        None => (None, String::new()),
    };
    let opts = VerifyOptions {
        suite: suite.clone(),
        tol_scale: a.tol_scale,
        seed: a.seed,
        measure,
    };
    let report = verify::run(&opts)?;
    print!("{}", report.table());
    if let Some(dir) = &a.out {
        let mut out = OutDir::create(dir)?;
        out.write("verify.csv", report.to_csv().as_bytes())?;
        let params = [("suite", suite.to_string()), ("tol_scale", a.tol_scale.to_string())];
        out.finish("verify", &canon, &params, Some(a.seed))?;
    }
    Ok(if report.all_pass() { 0 } else { 2 })
}
