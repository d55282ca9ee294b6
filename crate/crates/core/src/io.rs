//! Configuration files, CSV series and run manifests.
//!
//! Configs are flat `key = value` text with `#` comments. Series are CSV
//! with a header row, preceded by a `# manifest: <path>` comment line, and
//! carry every double at 17 significant digits.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::duhamel::DuhamelError;
use crate::grid::{Field, Grid1D, GridError};
use crate::kernel_lab::KernelError;
use crate::params::{ParamError, RawParams};
use crate::shooting::ShootError;
use crate::shrinking_set::{SetError, TrajectorySample};
use crate::similarity::{Boundary, SolverError};
use crate::spectral::SpectralError;
use crate::verify::VerifyError;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config: line {line}: expected key = value")]
    Syntax { line: usize },
    #[error("config: line {line}: duplicate key {key}")]
    Duplicate { line: usize, key: String },
    #[error("config: unknown key {0}")]
    UnknownKey(String),
    #[error("config: {key}: cannot parse {value:?}")]
    Value { key: String, value: String },
    #[error("config: override {0:?} is not key=value")]
    Override(String),
}

#[derive(Debug, Error)]
pub enum CsvError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("csv: i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: header mismatch, expected {expected:?}")]
    Header { expected: Vec<&'static str> },
    #[error("csv: row {row}: {msg}")]
    Row { row: usize, msg: String },
}

/// Shell exit status for each failure class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorClass {
    Io,
    Validation,
    Precondition,
    Numeric,
}

impl ErrorClass {
    pub fn code(self) -> i32 {
        match self {
            ErrorClass::Io => 1,
            ErrorClass::Validation => 2,
            ErrorClass::Precondition => 3,
            ErrorClass::Numeric => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ErrorClass::Io => "io",
            ErrorClass::Validation => "validation",
            ErrorClass::Precondition => "precondition",
            ErrorClass::Numeric => "numeric",
        }
    }
}

/// Maps an error onto its exit class.
pub trait Classify {
    fn class(&self) -> ErrorClass;
}

impl Classify for ParamError {
    fn class(&self) -> ErrorClass {
        ErrorClass::Validation
    }
}

impl Classify for ConfigError {
    fn class(&self) -> ErrorClass {
        ErrorClass::Validation
    }
}

impl Classify for GridError {
    fn class(&self) -> ErrorClass {
        ErrorClass::Validation
    }
}

impl Classify for CsvError {
    fn class(&self) -> ErrorClass {
        match self {
            CsvError::Io(_) => ErrorClass::Io,
            CsvError::Csv(e) if matches!(e.kind(), csv::ErrorKind::Io(_)) => ErrorClass::Io,
            _ => ErrorClass::Validation,
        }
    }
}

impl Classify for SpectralError {
    fn class(&self) -> ErrorClass {
        match self {
            SpectralError::DegreeTooHigh(_) | SpectralError::Grid(_) => ErrorClass::Validation,
            SpectralError::WeightTail { .. } | SpectralError::CutoffSupport { .. } => ErrorClass::Precondition,
        }
    }
}

impl Classify for SolverError {
    fn class(&self) -> ErrorClass {
        match self {
            SolverError::GridMismatch | SolverError::BadOption(_) => ErrorClass::Validation,
            _ => ErrorClass::Numeric,
        }
    }
}

impl Classify for SetError {
    fn class(&self) -> ErrorClass {
        match self {
            SetError::AfterExit { .. } => ErrorClass::Precondition,
            SetError::TimeTooSmall { .. } => ErrorClass::Validation,
            SetError::Spectral(e) => e.class(),
        }
    }
}

impl Classify for ShootError {
    fn class(&self) -> ErrorClass {
        match self {
            ShootError::Unresolved { .. } | ShootError::InitialDegree(_) => ErrorClass::Precondition,
            ShootError::DegreeLost { .. } | ShootError::NoSurvivor { .. } | ShootError::PolishBracket { .. } => {
                ErrorClass::Numeric
            }
            ShootError::Solver(e) => e.class(),
        }
    }
}

impl Classify for VerifyError {
    fn class(&self) -> ErrorClass {
        ErrorClass::Precondition
    }
}

impl Classify for KernelError {
    fn class(&self) -> ErrorClass {
        match self {
            KernelError::NonFinitePotential { .. } | KernelError::Covariance => ErrorClass::Numeric,
            KernelError::Spectral(e) => e.class(),
            _ => ErrorClass::Validation,
        }
    }
}

impl Classify for DuhamelError {
    fn class(&self) -> ErrorClass {
        match self {
            DuhamelError::ContractionFailure { .. } | DuhamelError::NonFinite(_) | DuhamelError::Solver(_) => {
                ErrorClass::Numeric
            }
            _ => ErrorClass::Validation,
        }
    }
}

/// Parses `key = value` lines. Blank lines and `#` comments are skipped.
pub fn parse_key_values(text: &str) -> Result<BTreeMap<String, String>, ConfigError> {
    let mut out = BTreeMap::new();
    for (k, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or(ConfigError::Syntax { line: k + 1 })?;
        let key = key.trim();
        let value = value.trim();
        if key.is_empty() || key.contains(char::is_whitespace) {
            return Err(ConfigError::Syntax { line: k + 1 });
        }
        if out.insert(key.to_string(), value.to_string()).is_some() {
            return Err(ConfigError::Duplicate { line: k + 1, key: key.to_string() });
        }
    }
    Ok(out)
}

/// Everything a subcommand needs: model parameters plus run controls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub params: RawParams,
    pub d0: f64,
    pub d1: f64,
    /// Grid spacing in `y`.
    pub h: f64,
    pub ds: f64,
    /// Length of the run in `s` past `s0`.
    pub horizon: f64,
    pub boundary: Boundary,
    /// Keep a field snapshot every this many monitor checks.
    pub field_every: usize,
    /// Half-width of the initial shooting square.
    pub rect: f64,
    pub tol: f64,
    /// Target for the final unstable modes after the search; 0 skips polishing.
    pub polish: f64,
    pub seed: u64,
    pub paths: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            params: RawParams::default(),
            d0: 0.0,
            d1: 0.0,
            h: 0.1,
            ds: 0.01,
            horizon: 20.0,
            boundary: Boundary::Outflow,
            field_every: 10,
            rect: 2.0,
            tol: 1e-3,
            polish: 1e-6,
            seed: 0,
            paths: 10_000,
        }
    }
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
    value.parse().map_err(|_| ConfigError::Value { key: key.to_string(), value: value.to_string() })
}

impl RunConfig {
    pub const KEYS: [&'static str; 23] = [
        "p", "q", "mu", "beta", "eps", "n", "k0", "a", "s0", "t", "d0", "d1", "h", "ds", "horizon", "boundary",
        "field_every", "rect", "tol", "polish", "seed", "paths", "version",
    ];

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let p = &mut self.params;
        match key {
            "p" => p.p = num(key, value)?,
            "q" => p.q = num(key, value)?,
            "mu" => p.mu = num(key, value)?,
            "beta" => p.beta = num(key, value)?,
            "eps" => p.eps = if value == "auto" { None } else { Some(num(key, value)?) },
            "n" => p.n = num(key, value)?,
            "k0" => p.k0 = num(key, value)?,
            "a" => p.a = num(key, value)?,
            "s0" => p.s0 = num(key, value)?,
            "t" => p.t = num(key, value)?,
            "d0" => self.d0 = num(key, value)?,
            "d1" => self.d1 = num(key, value)?,
            "h" => self.h = num(key, value)?,
            "ds" => self.ds = num(key, value)?,
            "horizon" => self.horizon = num(key, value)?,
            "boundary" => {
                self.boundary = match value {
                    "outflow" => Boundary::Outflow,
                    "profile" => Boundary::ProfileDirichlet,
                    "neumann" => Boundary::Neumann,
                    _ => return Err(ConfigError::Value { key: key.to_string(), value: value.to_string() }),
                }
            }
            "field_every" => self.field_every = num(key, value)?,
            "rect" => self.rect = num(key, value)?,
            "tol" => self.tol = num(key, value)?,
            "polish" => self.polish = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "paths" => self.paths = num(key, value)?,
            // Written into snapshots for provenance, ignored on input.
            "version" => {}
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        for (k, v) in parse_key_values(text)? {
            cfg.set(&k, &v)?;
        }
        Ok(cfg)
    }

    /// Applies `key=value` overrides in order.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<(), ConfigError> {
        for o in overrides {
            let o = o.as_ref();
            let (k, v) = o.split_once('=').ok_or_else(|| ConfigError::Override(o.to_string()))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    /// Canonical text form; parsing it back gives the same config.
    pub fn to_text(&self) -> String {
        let p = &self.params;
        let eps = p.eps.map_or_else(|| "auto".to_string(), fmt17);
        let boundary = match self.boundary {
            Boundary::Outflow => "outflow",
            Boundary::ProfileDirichlet => "profile",
            Boundary::Neumann => "neumann",
        };
        let rows: [(&str, String); 22] = [
            ("p", fmt17(p.p)),
            ("q", fmt17(p.q)),
            ("mu", fmt17(p.mu)),
            ("beta", fmt17(p.beta)),
            ("eps", eps),
            ("n", p.n.to_string()),
            ("k0", fmt17(p.k0)),
            ("a", fmt17(p.a)),
            ("s0", fmt17(p.s0)),
            ("t", fmt17(p.t)),
            ("d0", fmt17(self.d0)),
            ("d1", fmt17(self.d1)),
            ("h", fmt17(self.h)),
            ("ds", fmt17(self.ds)),
            ("horizon", fmt17(self.horizon)),
            ("boundary", boundary.to_string()),
            ("field_every", self.field_every.to_string()),
            ("rect", fmt17(self.rect)),
            ("tol", fmt17(self.tol)),
            ("polish", fmt17(self.polish)),
            ("seed", self.seed.to_string()),
            ("paths", self.paths.to_string()),
        ];
        rows.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

/// Seventeen significant digits, enough to round-trip any double.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_comment<W: Write>(w: &mut W, manifest: &str) -> std::io::Result<()> {
    writeln!(w, "# manifest: {manifest}")
}

fn reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().comment(Some(b'#')).has_headers(true).trim(csv::Trim::All).from_reader(r)
}

fn check_header<R: Read>(rdr: &mut csv::Reader<R>, expected: &[&'static str]) -> Result<(), CsvError> {
    let h = rdr.headers()?;
    if h.len() != expected.len() || h.iter().zip(expected).any(|(a, b)| a != *b) {
        return Err(CsvError::Header { expected: expected.to_vec() });
    }
    Ok(())
}

fn field_f64(rec: &csv::StringRecord, i: usize, row: usize) -> Result<f64, CsvError> {
    let s = rec.get(i).ok_or_else(|| CsvError::Row { row, msg: format!("missing column {i}") })?;
    s.parse().map_err(|_| CsvError::Row { row, msg: format!("bad number {s:?}") })
}

pub const TRAJECTORY_HEADER: [&str; 9] =
    ["s", "v0", "v1", "v2", "vminus_weighted", "ve_inf", "ve_beta", "gradv_beta", "in_set"];

pub fn write_trajectory_csv<W: Write>(mut w: W, manifest: &str, samples: &[TrajectorySample]) -> Result<(), CsvError> {
    write_comment(&mut w, manifest)?;
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(TRAJECTORY_HEADER)?;
    for t in samples {
        let nums = [t.s, t.v0, t.v1, t.v2, t.norm_vminus_weighted, t.norm_ve_inf, t.norm_ve_beta, t.norm_gradv_beta];
        let mut row: Vec<String> = nums.iter().map(|x| fmt17(*x)).collect();
        row.push(u8::from(t.in_set).to_string());
        wr.write_record(&row)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_trajectory_csv<R: Read>(r: R) -> Result<Vec<TrajectorySample>, CsvError> {
    let mut rdr = reader(r);
    check_header(&mut rdr, &TRAJECTORY_HEADER)?;
    let mut out = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let f = |i| field_f64(&rec, i, row + 1);
        let in_set = match rec.get(8) {
            Some("1") => true,
            Some("0") => false,
            other => return Err(CsvError::Row { row: row + 1, msg: format!("bad flag {other:?}") }),
        };
        out.push(TrajectorySample {
            s: f(0)?,
            v0: f(1)?,
            v1: f(2)?,
            v2: f(3)?,
            norm_vminus_weighted: f(4)?,
            norm_ve_inf: f(5)?,
            norm_ve_beta: f(6)?,
            norm_gradv_beta: f(7)?,
            in_set,
        });
    }
    Ok(out)
}

pub const FIELDS_HEADER: [&str; 3] = ["s", "y", "w"];

/// Snapshots in long form, one `(s, y, w)` row per node.
pub fn write_fields_csv<W: Write>(mut w: W, manifest: &str, fields: &[(f64, Field)]) -> Result<(), CsvError> {
    write_comment(&mut w, manifest)?;
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(FIELDS_HEADER)?;
    for (s, f) in fields {
        for (y, v) in f.grid.nodes().zip(&f.values) {
            wr.write_record([fmt17(*s), fmt17(y), fmt17(*v)])?;
        }
    }
    wr.flush()?;
    Ok(())
}

/// Inverse of [`write_fields_csv`]. Each snapshot must sit on a symmetric
/// uniform grid.
pub fn read_fields_csv<R: Read>(r: R) -> Result<Vec<(f64, Field)>, CsvError> {
    let mut rdr = reader(r);
    check_header(&mut rdr, &FIELDS_HEADER)?;
    let mut groups: Vec<(f64, Vec<f64>, Vec<f64>)> = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let (s, y, w) = (field_f64(&rec, 0, row + 1)?, field_f64(&rec, 1, row + 1)?, field_f64(&rec, 2, row + 1)?);
        match groups.last_mut() {
            Some(g) if g.0.to_bits() == s.to_bits() => {
                g.1.push(y);
                g.2.push(w);
            }
            _ => groups.push((s, vec![y], vec![w])),
        }
    }
    let mut out = Vec::with_capacity(groups.len());
    for (s, ys, ws) in groups {
        let bad = |msg: &str| CsvError::Row { row: 0, msg: format!("snapshot s = {s}: {msg}") };
        let half = *ys.last().ok_or_else(|| bad("empty"))?;
        let grid = Grid1D::new(half, ys.len()).map_err(|e| bad(&e.to_string()))?;
        let tol = 1e-9 * grid.spacing().max(half.abs());
        if ys.iter().enumerate().any(|(i, y)| (grid.node(i) - y).abs() > tol) {
            return Err(bad("nodes are not a symmetric uniform grid"));
        }
        out.push((s, Field::new(grid, ws).map_err(|e| bad(&e.to_string()))?));
    }
    Ok(out)
}

/// Artifact written by a run, with its content digest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputFile {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub config: RunConfig,
    pub seed: u64,
    pub outputs: Vec<OutputFile>,
}

/// Envelope of every JSON report. `manifest` names the run manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report<T> {
    pub manifest: String,
    pub kind: String,
    pub body: T,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trips() {
        let mut cfg = RunConfig::default();
        cfg.apply_overrides(&["p=7", "boundary = neumann", "eps=auto", "seed=42"]).unwrap();
        let back = RunConfig::from_text(&cfg.to_text()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.params.p, 7.0);
        assert_eq!(back.params.eps, None);
    }

    #[test]
    fn comments_and_blank_lines() {
        let cfg = RunConfig::from_text("# ref\n\np = 6 # trailing\n  d0=0.25\n").unwrap();
        assert_eq!(cfg.params.p, 6.0);
        assert_eq!(cfg.d0, 0.25);
    }

    #[test]
    fn config_errors() {
        assert!(matches!(RunConfig::from_text("p 5"), Err(ConfigError::Syntax { line: 1 })));
        assert!(matches!(RunConfig::from_text("p=5\np=6"), Err(ConfigError::Duplicate { line: 2, .. })));
        assert!(matches!(RunConfig::from_text("zeta=1"), Err(ConfigError::UnknownKey(_))));
        assert!(matches!(RunConfig::from_text("p=five"), Err(ConfigError::Value { .. })));
    }

    #[test]
    fn trajectory_csv_round_trips_exactly() {
        let samples: Vec<TrajectorySample> = (0..5)
            .map(|k| TrajectorySample {
                s: 50.0 + 0.1 * k as f64,
                v0: 1.0 / 3.0 * k as f64,
                v1: -1e-300,
                v2: std::f64::consts::PI,
                norm_vminus_weighted: 0.1,
                norm_ve_inf: 2.0,
                norm_ve_beta: 3.0,
                norm_gradv_beta: 4.0,
                in_set: k % 2 == 0,
            })
            .collect();
        let mut buf = Vec::new();
        write_trajectory_csv(&mut buf, "manifest.json", &samples).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# manifest: manifest.json\ns,v0,"));
        assert_eq!(read_trajectory_csv(&buf[..]).unwrap(), samples);
    }

    #[test]
    fn fields_csv_round_trips_exactly() {
        let g = Grid1D::new(3.0, 7).unwrap();
        let fields = vec![(50.0, Field::from_fn(g, |y| y.sin())), (51.5, Field::from_fn(g, |y| y * y / 7.0))];
        let mut buf = Vec::new();
        write_fields_csv(&mut buf, "m.json", &fields).unwrap();
        let back = read_fields_csv(&buf[..]).unwrap();
        assert_eq!(back.len(), 2);
        for ((s0, f0), (s1, f1)) in fields.iter().zip(&back) {
            assert_eq!(s0, s1);
            assert_eq!(f0.values, f1.values);
            assert_eq!(f0.grid, f1.grid);
        }
    }

    #[test]
    fn malformed_csv_rejected() {
        assert!(read_trajectory_csv("a,b\n1,2\n".as_bytes()).is_err());
        assert!(read_fields_csv("s,y,w\n1,0,1\n1,0.5,2\n".as_bytes()).is_err());
        assert!(read_fields_csv("s,y,w\n1,-1,1\n1,0.5,2\n1,1,3\n".as_bytes()).is_err());
    }
}
