use std::fmt;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{norm2, DenseMatrix};
use crate::model::{init_network, Activation, ArchSpec};

/// Rows with a larger norm trigger a warning when loaded from CSV.
pub const LARGE_ROW_NORM: f64 = 10.0;

const TEACHER_WIDTH: usize = 32;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("dataset has no data rows")]
    EmptyDataset,
    #[error("invalid dataset: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    /// Outputs of a hidden width-32 tanh two-layer network.
    TeacherNet,
    /// `y = X w*` for a hidden unit-norm `w*`.
    Linear,
    /// Uniform on `[-1, 1]`, independent of the inputs.
    Random,
}

impl fmt::Display for TargetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TargetKind::TeacherNet => "teacher_net",
            TargetKind::Linear => "linear",
            TargetKind::Random => "random",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    Synthetic { seed: u64, target: TargetKind },
    Csv { path: PathBuf },
    Manual,
}

/// Inputs `X` (`n × d`) and scalar targets `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: DenseMatrix,
    pub y: Vec<f64>,
    pub provenance: Provenance,
}

impl Dataset {
    pub fn new(x: DenseMatrix, y: Vec<f64>) -> Result<Self, DataError> {
        if x.rows() != y.len() {
            return Err(DataError::Invalid(format!(
                "{} input rows but {} targets",
                x.rows(),
                y.len()
            )));
        }
        if x.rows() == 0 {
            return Err(DataError::EmptyDataset);
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(DataError::Invalid("non-finite target".into()));
        }
        Ok(Self {
            x,
            y,
            provenance: Provenance::Manual,
        })
    }

    pub fn n(&self) -> usize {
        self.x.rows()
    }

    pub fn d(&self) -> usize {
        self.x.cols()
    }

    /// Inputs and targets of the given rows, in order.
    pub fn subset(&self, indices: &[usize]) -> (DenseMatrix, Vec<f64>) {
        (
            self.x.select_rows(indices),
            indices.iter().map(|&i| self.y[i]).collect(),
        )
    }

    pub fn max_row_norm(&self) -> f64 {
        (0..self.n()).map(|i| norm2(self.x.row(i))).fold(0.0, f64::max)
    }

    /// Writes `x1,…,xd,y` with a header row.
    pub fn write_csv(&self, path: &Path) -> Result<(), DataError> {
        let io = |source| DataError::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut w = csv::Writer::from_path(path).map_err(|e| io(e.into()))?;
        let mut header: Vec<String> = (1..=self.d()).map(|j| format!("x{j}")).collect();
        header.push("y".into());
        w.write_record(&header).map_err(|e| io(e.into()))?;
        for i in 0..self.n() {
            let mut rec: Vec<String> = self.x.row(i).iter().map(|v| v.to_string()).collect();
            rec.push(self.y[i].to_string());
            w.write_record(&rec).map_err(|e| io(e.into()))?;
        }
        w.flush().map_err(io)
    }
}

/// Seeded synthetic regression data with unit-norm inputs and `|y| ≤ 1`.
pub fn generate_synthetic(n: usize, d: usize, seed: u64, target: TargetKind) -> Dataset {
    assert!(n >= 1 && d >= 1, "synthetic dataset needs n, d ≥ 1");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(n * d);
    for _ in 0..n {
        let mut row: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
        let mut norm = norm2(&row);
        while norm == 0.0 {
            row = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
            norm = norm2(&row);
        }
        data.extend(row.iter().map(|v| v / norm));
    }
    let x = DenseMatrix::new(n, d, data).expect("finite by construction");
    let y: Vec<f64> = match target {
        TargetKind::Random => (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect(),
        TargetKind::Linear => {
            let w: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
            let norm = norm2(&w).max(f64::MIN_POSITIVE);
            let w: Vec<f64> = w.iter().map(|v| v / norm).collect();
            (0..n).map(|i| crate::linalg::dot(x.row(i), &w)).collect()
        }
        TargetKind::TeacherNet => {
            let teacher_seed: u64 = rng.random();
            let teacher = init_network(
                &ArchSpec::two_layer(d, TEACHER_WIDTH, Activation::Tanh),
                teacher_seed,
            )
            .expect("valid teacher spec");
            teacher.predict(&x).expect("shapes agree")
        }
    };
    let y = y.into_iter().map(|v| v.clamp(-1.0, 1.0)).collect();
    Dataset {
        x,
        y,
        provenance: Provenance::Synthetic { seed, target },
    }
}

/// Reads `x1,…,xd,y` rows after a header line. No normalization is applied.
pub fn load_csv(path: &Path) -> Result<Dataset, DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(source) => DataError::Io {
                path: path.to_path_buf(),
                source,
            },
            other => DataError::Parse {
                line: 1,
                message: format!("{other:?}"),
            },
        })?;
    let cols = reader
        .headers()
        .map_err(|e| DataError::Parse {
            line: 1,
            message: e.to_string(),
        })?
        .len();
    if cols < 2 {
        return Err(DataError::Parse {
            line: 1,
            message: format!("expected header x1,…,xd,y with at least 2 columns, got {cols}"),
        });
    }
    let d = cols - 1;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| DataError::Parse {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != cols {
            return Err(DataError::Parse {
                line,
                message: format!("expected {cols} fields, found {}", record.len()),
            });
        }
        for (j, field) in record.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| DataError::Parse {
                line,
                message: format!("column {}: `{field}` is not a number", j + 1),
            })?;
            if !v.is_finite() {
                return Err(DataError::Parse {
                    line,
                    message: format!("column {}: non-finite value", j + 1),
                });
            }
            if j < d {
                xs.push(v);
            } else {
                ys.push(v);
            }
        }
    }
    if ys.is_empty() {
        return Err(DataError::EmptyDataset);
    }
    let x = DenseMatrix::new(ys.len(), d, xs).map_err(|e| DataError::Invalid(e.to_string()))?;
    let mut ds = Dataset::new(x, ys)?;
    ds.provenance = Provenance::Csv {
        path: path.to_path_buf(),
    };
    let max_norm = ds.max_row_norm();
    if max_norm > LARGE_ROW_NORM {
        log::warn!(
            "{}: largest input row norm is {max_norm:.3}; inputs are used unnormalized",
            path.display()
        );
    }
    Ok(ds)
}
