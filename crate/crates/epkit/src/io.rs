//! File formats: versioned JSON matrix files with a canonical byte form,
//! experiment configuration, CSV emission for plot traces, and atomic
//! writes.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CMatrix, CVector, ToleranceConfig, C64};

pub const FORMAT_TAG: &str = "epkit/1";

pub fn pair(z: C64) -> [f64; 2] {
    [z.re, z.im]
}

pub fn from_pair(p: [f64; 2]) -> C64 {
    C64::new(p[0], p[1])
}

/// Scientific notation with exactly 17 significant digits. Built by
/// zero-padding the shortest exact representation, so reparsing always
/// recovers the identical bits.
fn sig17(v: f64) -> String {
    let s = format!("{v:e}");
    let (mantissa, exp) = s.split_once('e').expect("scientific form has an exponent");
    let (int_part, frac) = match mantissa.split_once('.') {
        Some((i, f)) => (i, f),
        None => (mantissa, ""),
    };
    debug_assert!(frac.len() <= 16);
    format!("{int_part}.{frac:0<16}e{exp}")
}

/// Row-major complex matrix with a format version and an optional label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixFile {
    pub format: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl MatrixFile {
    pub fn parse_str(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| {
            Error::Parse(format!(
                "line {}, column {}: {e}",
                e.line(),
                e.column()
            ))
        })
    }

    pub fn to_matrix(&self) -> Result<CMatrix> {
        if self.format != FORMAT_TAG {
            return Err(Error::Parse(format!(
                "unsupported format tag {:?}; this build reads {:?}",
                self.format, FORMAT_TAG
            )));
        }
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::Parse("matrix must be nonempty".into()));
        }
        let expected = self
            .rows
            .checked_mul(self.cols)
            .ok_or_else(|| Error::Parse("matrix shape overflows".into()))?;
        if self.data.len() != expected {
            return Err(Error::Parse(format!(
                "data holds {} entries, shape {}x{} needs {expected}",
                self.data.len(),
                self.rows,
                self.cols
            )));
        }
        if self
            .data
            .iter()
            .any(|p| !(p[0].is_finite() && p[1].is_finite()))
        {
            return Err(Error::Parse("matrix entries must be finite".into()));
        }
        Ok(CMatrix::from_fn(self.rows, self.cols, |i, j| {
            from_pair(self.data[i * self.cols + j])
        }))
    }

    pub fn from_matrix(m: &CMatrix, label: Option<&str>) -> Result<Self> {
        let mut data = Vec::with_capacity(m.nrows() * m.ncols());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                let z = m[(i, j)];
                if !(z.re.is_finite() && z.im.is_finite()) {
                    return Err(Error::InvalidInput(
                        "cannot serialize a non-finite matrix".into(),
                    ));
                }
                data.push(pair(z));
            }
        }
        Ok(Self {
            format: FORMAT_TAG.to_string(),
            rows: m.nrows(),
            cols: m.ncols(),
            data,
            label: label.map(str::to_string),
        })
    }

    /// Canonical byte form: keys in sorted order, floats at 17 significant
    /// digits, one matrix row per line, trailing newline. Parsing a
    /// canonical file and rewriting it is byte-identical.
    pub fn canonical_json(&self) -> String {
        let mut s = String::from("{\n");
        let _ = writeln!(s, "  \"cols\": {},", self.cols);
        s.push_str("  \"data\": [");
        for (idx, p) in self.data.iter().enumerate() {
            if idx % self.cols.max(1) == 0 {
                s.push_str("\n    ");
            } else {
                s.push(' ');
            }
            let _ = write!(s, "[{}, {}]", sig17(p[0]), sig17(p[1]));
            if idx + 1 < self.data.len() {
                s.push(',');
            }
        }
        s.push_str("\n  ],\n");
        let _ = writeln!(
            s,
            "  \"format\": {},",
            serde_json::to_string(&self.format).expect("string serializes")
        );
        if let Some(label) = &self.label {
            let _ = writeln!(
                s,
                "  \"label\": {},",
                serde_json::to_string(label).expect("string serializes")
            );
        }
        let _ = writeln!(s, "  \"rows\": {}", self.rows);
        s.push_str("}\n");
        s
    }
}

pub fn load_matrix_file(path: &Path) -> Result<MatrixFile> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    MatrixFile::parse_str(&text).map_err(|e| match e {
        Error::Parse(msg) => Error::Parse(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn save_matrix_file(path: &Path, file: &MatrixFile) -> Result<()> {
    write_text_atomic(path, &file.canonical_json())
}

/// Writes via a sibling temp file plus rename, so readers never observe a
/// partial file.
pub fn write_text_atomic(path: &Path, text: &str) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let mut tmp = match dir {
        Some(d) => tempfile::NamedTempFile::new_in(d)?,
        None => tempfile::NamedTempFile::new_in(".")?,
    };
    tmp.write_all(text.as_bytes())?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// CSV with a header row, comma delimiter, LF endings, '.' decimals, and
/// shortest round-trip float formatting.
pub fn csv_string(header: &[&str], rows: &[Vec<f64>]) -> String {
    let mut s = header.join(",");
    s.push('\n');
    for row in rows {
        debug_assert_eq!(row.len(), header.len());
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                s.push(',');
            }
            let _ = write!(s, "{v}");
        }
        s.push('\n');
    }
    s
}

pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    write_text_atomic(path, &csv_string(header, rows))
}

/// Bundled example matrices and experiment configs.
pub fn fixtures_dir() -> PathBuf {
    match std::env::var_os("EPKIT_FIXTURES") {
        Some(p) => PathBuf::from(p),
        None => Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures"),
    }
}

/// A matrix referenced from a config: a path (resolved against the config
/// file's directory) or an inline matrix object.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSource {
    Path(String),
    Inline(MatrixFile),
}

impl MatrixSource {
    pub fn load(&self, base: &Path) -> Result<MatrixFile> {
        match self {
            MatrixSource::Path(p) => {
                let path = Path::new(p);
                let resolved = if path.is_absolute() {
                    path.to_path_buf()
                } else {
                    base.join(path)
                };
                load_matrix_file(&resolved)
            }
            MatrixSource::Inline(f) => Ok(f.clone()),
        }
    }
}

/// Epsilon values, either verbatim or as a log-spaced grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EpsilonGrid {
    List(Vec<f64>),
    Log { start: f64, stop: f64, count: usize },
}

impl EpsilonGrid {
    pub fn values(&self) -> Result<Vec<f64>> {
        match self {
            EpsilonGrid::List(v) => Ok(v.clone()),
            EpsilonGrid::Log { start, stop, count } => {
                if !(start.is_finite() && stop.is_finite()) || *start <= 0.0 || stop <= start {
                    return Err(Error::InvalidInput(
                        "log grid needs 0 < start < stop".into(),
                    ));
                }
                if *count < 2 {
                    return Err(Error::InvalidInput("log grid needs at least 2 points".into()));
                }
                Ok((0..*count)
                    .map(|i| start * (stop / start).powf(i as f64 / (*count - 1) as f64))
                    .collect())
            }
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ToleranceOverrides {
    pub rank_rtol: Option<f64>,
    pub cluster_atol: Option<f64>,
    pub nilpotency_rtol: Option<f64>,
}

impl ToleranceOverrides {
    pub fn apply(&self, mut base: ToleranceConfig) -> Result<ToleranceConfig> {
        if let Some(v) = self.rank_rtol {
            base.rank_rtol = v;
        }
        if let Some(v) = self.cluster_atol {
            base.cluster_atol = v;
        }
        if let Some(v) = self.nilpotency_rtol {
            base.nilpotency_rtol = v;
        }
        base.validate()?;
        Ok(base)
    }
}

/// Initial or reference state: a named maximally entangled basis state
/// (e1..e4) or explicit components.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StateSpec {
    Named(String),
    Components(Vec<[f64; 2]>),
}

impl StateSpec {
    pub fn build(&self, dim: usize) -> Result<CVector> {
        match self {
            StateSpec::Named(name) => {
                let idx = match name.as_str() {
                    "e1" => 0,
                    "e2" => 1,
                    "e3" => 2,
                    "e4" => 3,
                    other => {
                        return Err(Error::InvalidInput(format!(
                            "unknown state name {other:?}; expected e1..e4 or components"
                        )))
                    }
                };
                if dim != 4 {
                    return Err(Error::InvalidInput(format!(
                        "named states are 4-dimensional, the system has dimension {dim}"
                    )));
                }
                Ok(crate::dynamics::bell_states()[idx].clone())
            }
            StateSpec::Components(pairs) => {
                if pairs.len() != dim {
                    return Err(Error::InvalidInput(format!(
                        "state has {} components, the system has dimension {dim}",
                        pairs.len()
                    )));
                }
                if pairs
                    .iter()
                    .any(|p| !(p[0].is_finite() && p[1].is_finite()))
                {
                    return Err(Error::InvalidInput("state components must be finite".into()));
                }
                Ok(CVector::from_fn(dim, |i| from_pair(pairs[i])))
            }
        }
    }
}

/// A perturbation confined to one subsystem of a product space.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LocalPerturbationConfig {
    pub dims: Vec<usize>,
    pub subsystem: usize,
    pub factor: MatrixSource,
}

/// Paired local-versus-global comparison on a composite built from files.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompareLocalityConfig {
    pub subsystems: Vec<MatrixSource>,
    pub subsystem: usize,
    pub factor: MatrixSource,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExperimentConfig {
    Analyze {
        matrix: MatrixSource,
        #[serde(default)]
        tolerances: ToleranceOverrides,
    },
    Compose {
        subsystems: Vec<MatrixSource>,
        #[serde(default)]
        verify: bool,
        #[serde(default)]
        tolerances: ToleranceOverrides,
    },
    Perturb {
        #[serde(default)]
        matrix: Option<MatrixSource>,
        epsilons: EpsilonGrid,
        #[serde(default)]
        perturbation: Option<MatrixSource>,
        #[serde(default)]
        random_global: bool,
        #[serde(default)]
        local: Option<Box<LocalPerturbationConfig>>,
        #[serde(default)]
        compare_locality: Option<Box<CompareLocalityConfig>>,
        #[serde(default)]
        eigenvalue: Option<[f64; 2]>,
        #[serde(default)]
        tolerances: ToleranceOverrides,
    },
    Evolve {
        matrix: MatrixSource,
        initial: StateSpec,
        t_max: f64,
        samples: usize,
        #[serde(default)]
        method: Option<String>,
        #[serde(default)]
        reference: Option<StateSpec>,
        #[serde(default)]
        tolerances: ToleranceOverrides,
    },
    Figure1 {
        epsilon: f64,
        #[serde(default)]
        t_max: Option<f64>,
        #[serde(default)]
        samples: Option<usize>,
    },
}

/// Loads a config and returns it with the directory used to resolve
/// relative matrix paths.
pub fn load_config(path: &Path) -> Result<(ExperimentConfig, PathBuf)> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    let config: ExperimentConfig = serde_json::from_str(&text).map_err(|e| {
        Error::Parse(format!(
            "{}: line {}, column {}: {e}",
            path.display(),
            e.line(),
            e.column()
        ))
    })?;
    let base = path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    Ok((config, base))
}
