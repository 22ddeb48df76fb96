//! File formats: `LVF1` binary field dumps, CSV tables, line-oriented
//! `key = value` configuration, and atomic writes.

use crate::coefficient::{CoefficientForm, CoefficientSpec};
use crate::error::{Error, Result};
use crate::expr::{Env, Expr};
use crate::grid::SpectralGrid;
use crate::measures::{Angular, Atom, MeasureSpec};
use crate::profile::RadialProfile;
use crate::solver::{solve_duhamel, solve_frozen_iteration, FrozenOptions, SolveResult, Trajectory};
use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

pub const LVF1_MAGIC: &[u8; 4] = b"LVF1";

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Write through a temporary sibling file and rename it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| Error::domain(format!("output path {} has no file name", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp-{}", name.to_string_lossy(), std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(io_err(path, e));
    }
    Ok(())
}

pub fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| io_err(path, e))
}

/// A decoded `LVF1` dump.
#[derive(Debug, Clone, PartialEq)]
pub struct Lvf1 {
    pub dim: u32,
    /// points per axis (sample count for sample dumps)
    pub n: u32,
    /// half width L (0 for sample dumps)
    pub half_width: f64,
    pub values: Vec<f64>,
}

impl Lvf1 {
    pub fn from_grid(grid: &SpectralGrid, values: &[f64]) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::domain("field does not match the grid"));
        }
        Ok(Lvf1 {
            dim: grid.dim() as u32,
            n: grid.n() as u32,
            half_width: grid.half_width(),
            values: values.to_vec(),
        })
    }

    /// Point samples, one row of `dim` coordinates per sample.
    pub fn from_samples(dim: usize, rows: &[[f64; 2]]) -> Self {
        Lvf1 {
            dim: dim as u32,
            n: rows.len() as u32,
            half_width: 0.0,
            values: rows.iter().flat_map(|r| r[..dim].iter().copied()).collect(),
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(20 + 8 * self.values.len());
        out.extend_from_slice(LVF1_MAGIC);
        out.extend_from_slice(&self.dim.to_le_bytes());
        out.extend_from_slice(&self.n.to_le_bytes());
        out.extend_from_slice(&self.half_width.to_le_bytes());
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    /// Payload length is n^dim for grid dumps (L > 0), n·dim for samples.
    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 20 || &bytes[..4] != LVF1_MAGIC {
            return Err(Error::domain("not an LVF1 dump (bad magic or truncated header)"));
        }
        let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
        let dim = u32_at(4);
        let n = u32_at(8);
        let half_width = f64::from_le_bytes(bytes[12..20].try_into().unwrap());
        let count = if half_width > 0.0 {
            (n as usize).checked_pow(dim)
        } else {
            (n as usize).checked_mul(dim as usize)
        }
        .ok_or_else(|| Error::domain("LVF1 header describes an impossible size"))?;
        let payload = &bytes[20..];
        if payload.len() != 8 * count {
            return Err(Error::domain(format!(
                "LVF1 payload holds {} bytes, header implies {}",
                payload.len(),
                8 * count
            )));
        }
        let values = payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        Ok(Lvf1 {
            dim,
            n,
            half_width,
            values,
        })
    }
}

/// Plain-number formatting shared by every CSV writer: shortest
/// round-trip representation.
pub fn num(v: f64) -> String {
    format!("{v:e}")
}

/// CSV with a header row and numeric rows.
pub fn csv_table(header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> String {
    let mut s = header.join(",");
    s.push('\n');
    for row in rows {
        let cells: Vec<String> = row.into_iter().map(num).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}

/// Grid field as CSV: `x,value` in d = 1, `x1,x2,value` in d = 2.
pub fn field_csv(grid: &SpectralGrid, values: &[f64]) -> String {
    let pts = grid.points();
    if grid.dim() == 1 {
        csv_table(&["x", "value"], pts.iter().zip(values).map(|(p, v)| vec![p[0], *v]))
    } else {
        csv_table(&["x1", "x2", "value"], pts.iter().zip(values).map(|(p, v)| vec![p[0], p[1], *v]))
    }
}

/// Parsed `key = value` file; `#` starts a comment.
#[derive(Debug, Clone)]
pub struct Config {
    path: PathBuf,
    entries: BTreeMap<String, (String, usize)>,
}

impl Config {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| Error::Parse {
                path: path.display().to_string(),
                line: i + 1,
                message,
            };
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, found '{line}'")))?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() {
                return Err(err("empty key".into()));
            }
            if entries.insert(k.to_string(), (v.to_string(), i + 1)).is_some() {
                return Err(err(format!("duplicate key '{k}'")));
            }
        }
        Ok(Config {
            path: path.to_path_buf(),
            entries,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        Self::parse(&text, path)
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Resolve a path relative to the directory holding this file.
    pub fn resolve(&self, rel: &str) -> PathBuf {
        let p = Path::new(rel);
        if p.is_absolute() {
            return p.to_path_buf();
        }
        self.path.parent().unwrap_or(Path::new(".")).join(p)
    }

    fn parse_err(&self, line: usize, message: String) -> Error {
        Error::Parse {
            path: self.path.display().to_string(),
            line,
            message,
        }
    }

    /// Reject keys outside the allowed set.
    pub fn check_keys(&self, allowed: &[&str]) -> Result<()> {
        for (k, (_, line)) in &self.entries {
            if !allowed.contains(&k.as_str()) {
                return Err(self.parse_err(*line, format!("unknown key '{k}'")));
            }
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(v, _)| v.as_str())
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key).ok_or_else(|| self.parse_err(0, format!("missing required key '{key}'")))
    }

    fn typed<T: std::str::FromStr>(&self, key: &str, what: &str) -> Result<Option<T>> {
        match self.entries.get(key) {
            None => Ok(None),
            Some((v, line)) => v
                .parse::<T>()
                .map(Some)
                .map_err(|_| self.parse_err(*line, format!("'{key}' expects {what}, found '{v}'"))),
        }
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        Ok(self.typed(key, "a number")?.unwrap_or(default))
    }

    pub fn f64_req(&self, key: &str) -> Result<f64> {
        self.typed(key, "a number")?
            .ok_or_else(|| self.parse_err(0, format!("missing required key '{key}'")))
    }

    pub fn usize_or(&self, key: &str, default: usize) -> Result<usize> {
        Ok(self.typed(key, "a non-negative integer")?.unwrap_or(default))
    }

    pub fn f64_list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        let Some((v, line)) = self.entries.get(key) else {
            return Ok(None);
        };
        v.split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| self.parse_err(*line, format!("'{key}' expects a comma list of numbers, found '{v}'")))
            })
            .collect::<Result<Vec<_>>>()
            .map(Some)
    }

    pub fn expr(&self, key: &str) -> Result<Option<Expr>> {
        let Some((v, line)) = self.entries.get(key) else {
            return Ok(None);
        };
        Expr::parse(v)
            .map(Some)
            .map_err(|e| self.parse_err(*line, format!("'{key}': {e}")))
    }

    /// Sorted `key = value` rendering, the input to the config hash.
    pub fn canonical(&self) -> String {
        self.entries.iter().map(|(k, (v, _))| format!("{k} = {v}\n")).collect()
    }
}

/// Two-column CSV of (r, value); a non-numeric first row is a header.
pub fn read_table(path: &Path) -> Result<Vec<(f64, f64)>> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut out = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let err = |message: String| Error::Parse {
            path: path.display().to_string(),
            line: i + 1,
            message,
        };
        let rec = rec.map_err(|e| err(e.to_string()))?;
        if rec.len() != 2 {
            return Err(err(format!("expected two columns, found {}", rec.len())));
        }
        match (rec[0].parse::<f64>(), rec[1].parse::<f64>()) {
            (Ok(a), Ok(b)) => out.push((a, b)),
            _ if i == 0 => continue,
            _ => return Err(err(format!("non-numeric row '{},{}'", &rec[0], &rec[1]))),
        }
    }
    Ok(out)
}

pub const MEASURE_KEYS: &[&str] = &["family", "dim", "alpha", "c", "sigma", "gamma_table", "profile", "angular"];

/// Build a measure from its configuration block.
///
/// `family` is one of `radial_stable`, `anisotropic`, `radial_angular`,
/// `isotropic_unimodal`. Stable families take `alpha` and `c` (`sigma`
/// defaults to `alpha`); the radial-angular family takes its radial
/// profile j from `profile` (expression in r) or `gamma_table`, and
/// `angular` (`uniform`, a comma list of densities, or `atoms: x y w; ...`);
/// the unimodal family takes γ from `gamma_table` or `profile` and
/// `c = c_low, c_high`.
pub fn measure_from_config(cfg: &Config) -> Result<MeasureSpec> {
    cfg.check_keys(MEASURE_KEYS)?;
    let family = cfg.require("family")?;
    let dim = cfg.usize_or("dim", 1)?;
    let profile = |cfg: &Config| -> Result<RadialProfile> {
        if let Some(t) = cfg.get("gamma_table") {
            return RadialProfile::table(&read_table(&cfg.resolve(t))?);
        }
        if let Some(src) = cfg.get("profile") {
            return RadialProfile::expr(src);
        }
        Err(cfg.parse_err(0, "tabulated families need 'gamma_table' or 'profile'".into()))
    };
    match family {
        "radial_stable" => {
            let alpha = cfg.f64_req("alpha")?;
            let c = cfg.f64_list("c")?.unwrap_or_else(|| vec![1.0]);
            if c.len() != 1 {
                return Err(cfg.parse_err(0, "radial_stable takes a single 'c'".into()));
            }
            MeasureSpec::radial_stable_with_sigma(dim, alpha, c[0], cfg.f64_or("sigma", alpha)?)
        }
        "anisotropic" => {
            let alpha = cfg.f64_req("alpha")?;
            let c = cfg.f64_list("c")?.unwrap_or_else(|| vec![1.0; dim]);
            if c.len() != dim {
                return Err(cfg.parse_err(0, format!("anisotropic needs {dim} weights in 'c'")));
            }
            MeasureSpec::anisotropic_with_sigma(alpha, c, cfg.f64_or("sigma", alpha)?)
        }
        "radial_angular" => {
            let angular = parse_angular(cfg)?;
            MeasureSpec::radial_angular(dim, profile(cfg)?, angular, cfg.f64_req("sigma")?)
        }
        "isotropic_unimodal" => {
            let c = cfg.f64_list("c")?.unwrap_or_else(|| vec![1.0, 1.0]);
            if c.len() != 2 {
                return Err(cfg.parse_err(0, "isotropic_unimodal takes 'c = c_low, c_high'".into()));
            }
            MeasureSpec::isotropic_unimodal(dim, profile(cfg)?, c[0], c[1], cfg.f64_req("sigma")?)
        }
        other => {
            let line = cfg.entries.get("family").map(|e| e.1).unwrap_or(0);
            Err(cfg.parse_err(line, format!("unknown family '{other}'")))
        }
    }
}

fn parse_angular(cfg: &Config) -> Result<Angular> {
    let Some(src) = cfg.get("angular") else {
        return Ok(Angular::Uniform);
    };
    let line = cfg.entries.get("angular").map(|e| e.1).unwrap_or(0);
    let bad = || cfg.parse_err(line, format!("cannot read angular part '{src}'"));
    if src == "uniform" {
        return Ok(Angular::Uniform);
    }
    if let Some(rest) = src.strip_prefix("atoms:") {
        let atoms = rest
            .split(';')
            .map(|a| {
                let v: Vec<f64> = a.split_whitespace().map(|s| s.parse::<f64>()).collect::<std::result::Result<_, _>>().map_err(|_| bad())?;
                match v.as_slice() {
                    [x, w] => Ok(Atom { dir: [*x, 0.0], weight: *w }),
                    [x, y, w] => Ok(Atom { dir: [*x, *y], weight: *w }),
                    _ => Err(bad()),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        return Ok(Angular::Atoms(atoms));
    }
    cfg.f64_list("angular")?.map(Angular::Table).ok_or_else(bad)
}

pub fn load_measure(path: &Path) -> Result<MeasureSpec> {
    measure_from_config(&Config::load(path)?)
}

/// Coefficient from `coeff.form` (a number or an expression in t, x, y),
/// with bounds from `coeff.k`/`coeff.K` or, when absent, from sampling the
/// form on the validation lattice.
pub fn coefficient_from_config(cfg: &Config, half_width: f64) -> Result<CoefficientSpec> {
    let Some(src) = cfg.get("coeff.form") else {
        return Ok(CoefficientSpec::unit());
    };
    if let Ok(v) = src.parse::<f64>() {
        return CoefficientSpec::constant(v);
    }
    let e = cfg.expr("coeff.form")?.unwrap();
    let beta = cfg.f64_or("coeff.beta", 1.0)?;
    let (lo, hi) = sample_range(&e, cfg.f64_or("T", 1.0)?.max(1.0), half_width.max(4.0));
    let k = cfg.f64_or("coeff.k", lo)?;
    let k_upper = cfg.f64_or("coeff.K", hi)?;
    let spec = CoefficientSpec::new(CoefficientForm::Sampled(e), k, k_upper, beta, Vec::new())?;
    spec.check_bounds(cfg.f64_or("T", 1.0)?, half_width)?;
    Ok(spec)
}

fn sample_range(e: &Expr, t_max: f64, half_width: f64) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for it in 0..=8 {
        let t = t_max * it as f64 / 8.0;
        for ix in 0..=32 {
            for jx in 0..=32 {
                let s = |i: usize| -half_width + 2.0 * half_width * i as f64 / 32.0;
                let x = [s(ix), s(jx)];
                for k in -10..=10 {
                    let r = (k as f64).exp2();
                    for kd in 0..8 {
                        let th = std::f64::consts::PI * kd as f64 / 4.0;
                        let v = e.eval(&Env { t, x, y: [r * th.cos(), r * th.sin()] });
                        lo = lo.min(v);
                        hi = hi.max(v);
                    }
                }
            }
        }
    }
    (lo, hi)
}

pub const SOLVE_KEYS: &[&str] = &[
    "measure",
    "lambda",
    "T",
    "nt",
    "grid.n",
    "grid.L",
    "p",
    "coeff.form",
    "coeff.k",
    "coeff.K",
    "coeff.beta",
    "homotopy",
    "tol",
    "max_iter",
    "forcing",
];

/// A parsed solve run. `forcing` is an expression in t and x (default 1).
#[derive(Debug, Clone)]
pub struct SolveConfig {
    pub measure: MeasureSpec,
    pub coeff: CoefficientSpec,
    pub lambda: f64,
    pub t_final: f64,
    pub nt: usize,
    pub grid: SpectralGrid,
    pub p: f64,
    pub forcing: Expr,
    pub frozen: FrozenOptions,
    /// canonical text of the run file followed by the measure file
    pub canonical: String,
}

impl SolveConfig {
    /// Reads the run file and the measure file it references; explicit
    /// grid overrides replace `grid.n` / `grid.L`.
    pub fn load(path: &Path, grid_n: Option<usize>, grid_l: Option<f64>) -> Result<Self> {
        let cfg = Config::load(path)?;
        cfg.check_keys(SOLVE_KEYS)?;
        let mcfg = Config::load(&cfg.resolve(cfg.require("measure")?))?;
        Self::from_configs(&cfg, &mcfg, grid_n, grid_l)
    }

    /// Builds the run from an already parsed run block and measure block;
    /// the `measure` key of the run block is not consulted.
    pub fn from_configs(cfg: &Config, mcfg: &Config, grid_n: Option<usize>, grid_l: Option<f64>) -> Result<Self> {
        cfg.check_keys(SOLVE_KEYS)?;
        let measure = measure_from_config(mcfg)?;
        let n = match grid_n {
            Some(n) => n,
            None => cfg.usize_or("grid.n", 256)?,
        };
        let l = match grid_l {
            Some(l) => l,
            None => cfg.f64_or("grid.L", 16.0)?,
        };
        let grid = SpectralGrid::new(measure.dim(), n, l)?;
        let defaults = FrozenOptions::default();
        let forcing = cfg.expr("forcing")?.unwrap_or_else(|| Expr::constant(1.0));
        if forcing.depends_on_y() {
            return Err(Error::domain("forcing may depend on t and x only"));
        }
        Ok(SolveConfig {
            coeff: coefficient_from_config(cfg, l)?,
            lambda: cfg.f64_req("lambda")?,
            t_final: cfg.f64_or("T", 1.0)?,
            nt: cfg.usize_or("nt", 64)?,
            p: cfg.f64_or("p", 2.0)?,
            frozen: FrozenOptions {
                homotopy: cfg.usize_or("homotopy", defaults.homotopy)?,
                tol: cfg.f64_or("tol", defaults.tol)?,
                max_iter: cfg.usize_or("max_iter", defaults.max_iter)?,
            },
            canonical: format!("{}---\n{}", cfg.canonical(), mcfg.canonical()),
            measure,
            grid,
            forcing,
        })
    }

    pub fn forcing_trajectory(&self) -> Result<Trajectory> {
        let e = &self.forcing;
        Trajectory::sample(&self.grid, self.t_final, self.nt, |t, x| e.eval(&Env { t, x, y: [0.0; 2] }))
    }

    /// The direct solver when the coefficient ignores x, the frozen
    /// iteration otherwise.
    pub fn solve(&self) -> Result<(SolveResult, Trajectory)> {
        let f = self.forcing_trajectory()?;
        let r = if self.coeff.depends_on_x() {
            solve_frozen_iteration(&self.measure, &self.coeff, self.lambda, &f, &self.grid, self.p, self.frozen)?
        } else {
            solve_duhamel(&self.measure, &self.coeff, self.lambda, &f, &self.grid, self.p)?
        };
        Ok((r, f))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lvf1_round_trip_and_layout() {
        let g = SpectralGrid::new(2, 4, 1.5).unwrap();
        let vals: Vec<f64> = (0..16).map(|i| i as f64 * 0.25).collect();
        let f = Lvf1::from_grid(&g, &vals).unwrap();
        let bytes = f.encode();
        assert_eq!(&bytes[..4], b"LVF1");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 4);
        assert_eq!(f64::from_le_bytes(bytes[12..20].try_into().unwrap()), 1.5);
        assert_eq!(bytes.len(), 20 + 16 * 8);
        assert_eq!(Lvf1::decode(&bytes).unwrap(), f);
        assert!(Lvf1::decode(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn config_errors_carry_line_numbers() {
        let p = Path::new("m.cfg");
        let e = Config::parse("family = radial_stable\n\nalpha 1\n", p).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 3, .. }));
        let c = Config::parse("family = radial_stable # comment\nalpha = x\n", p).unwrap();
        assert!(matches!(c.f64_req("alpha"), Err(Error::Parse { line: 2, .. })));
        let c = Config::parse("family = radial_stable\nalpha = 1\nbogus = 2\n", p).unwrap();
        assert!(matches!(measure_from_config(&c), Err(Error::Parse { line: 3, .. })));
    }

    #[test]
    fn measure_blocks() {
        let p = Path::new("m.cfg");
        let c = Config::parse("family = anisotropic\ndim = 2\nalpha = 1\nc = 1, 1\n", p).unwrap();
        let m = measure_from_config(&c).unwrap();
        assert_eq!(m.dim(), 2);
        let c = Config::parse("family = radial_stable\nalpha = 2.5\n", p).unwrap();
        assert!(matches!(measure_from_config(&c), Err(Error::Domain(_))));
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = std::env::temp_dir().join(format!("levykit-io-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let p = dir.join("a.csv");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(fs::read(&p).unwrap(), b"two");
        assert_eq!(fs::read_dir(&dir).unwrap().count(), 1);
        fs::remove_dir_all(&dir).unwrap();
    }
}
