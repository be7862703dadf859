//! CSV datasets, preprocessing and model files.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::boost::{GbhtConfig, GbhtModel};
use crate::error::{Error, Result};
use crate::ht::HtDensity;
use crate::matrix::Matrix;
use crate::transform::{BinIndex, HistogramTransform, RotationMatrix, ScaleParams};

/// Numeric observations with optional binary labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub matrix: Matrix,
    pub labels: Option<Vec<bool>>,
    pub names: Option<Vec<String>>,
}

impl Dataset {
    pub fn unlabeled(matrix: Matrix) -> Self {
        Self {
            matrix,
            labels: None,
            names: None,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::Io {
            path: path.to_path_buf(),
            source,
        },
        other => Error::Parse {
            row: 0,
            column: 0,
            message: format!("{other:?}"),
        },
    }
}

/// Reads a comma-separated numeric table.
///
/// The first row is a header iff any of its cells fails to parse as a number.
/// `label_column` names a header column (or gives a zero-based column index)
/// to split out as binary labels. Rows and columns in errors are one-based.
pub fn load_csv(path: &Path, label_column: Option<&str>) -> Result<Dataset> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let mut records = Vec::new();
    for rec in reader.records() {
        records.push(rec.map_err(|e| csv_err(path, e))?);
    }
    if records.is_empty() {
        return Err(Error::Empty);
    }
    let is_header = records[0].iter().any(|cell| cell.parse::<f64>().is_err());
    let names: Option<Vec<String>> = is_header.then(|| records[0].iter().map(str::to_string).collect());
    let first_data = usize::from(is_header);
    let width = records[0].len();

    let label_idx = match label_column {
        None => None,
        Some(col) => {
            let by_name = names.as_ref().and_then(|n| n.iter().position(|c| c == col));
            let idx = by_name.or_else(|| col.parse::<usize>().ok().filter(|i| *i < width));
            Some(idx.ok_or_else(|| Error::Parse {
                row: 1,
                column: 0,
                message: format!("label column `{col}` not found"),
            })?)
        }
    };

    let cols = width - usize::from(label_idx.is_some());
    let mut data = Vec::with_capacity((records.len() - first_data) * cols);
    let mut labels = label_idx.map(|_| Vec::with_capacity(records.len()));
    for (r, rec) in records.iter().enumerate().skip(first_data) {
        let row = r + 1;
        if rec.len() != width {
            return Err(Error::Parse {
                row,
                column: rec.len().min(width) + 1,
                message: format!("expected {width} fields, found {}", rec.len()),
            });
        }
        for (c, cell) in rec.iter().enumerate() {
            let column = c + 1;
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                row,
                column,
                message: format!("`{cell}` is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row,
                    column,
                    message: format!("`{cell}` is not finite"),
                });
            }
            if Some(c) == label_idx {
                let label = match v {
                    0.0 => false,
                    1.0 => true,
                    _ => {
                        return Err(Error::Parse {
                            row,
                            column,
                            message: format!("label `{cell}` is not 0 or 1"),
                        })
                    }
                };
                labels.as_mut().expect("label column set").push(label);
            } else {
                data.push(v);
            }
        }
    }
    let n = records.len() - first_data;
    let names = names.map(|n| {
        n.into_iter()
            .enumerate()
            .filter(|(i, _)| Some(*i) != label_idx)
            .map(|(_, s)| s)
            .collect()
    });
    Ok(Dataset {
        matrix: Matrix::new(n, cols, data)?,
        labels,
        names,
    })
}

/// Writes a dataset with shortest round-trip float formatting. Labels, when
/// present, go in a trailing `label` column.
pub fn write_csv(path: &Path, ds: &Dataset) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut out = csv::Writer::from_writer(BufWriter::new(file));
    let d = ds.matrix.ncols();
    if let Some(names) = &ds.names {
        let mut header = names.clone();
        if ds.labels.is_some() {
            header.push("label".into());
        }
        out.write_record(&header).map_err(|e| csv_err(path, e))?;
    }
    let mut fields = Vec::with_capacity(d + 1);
    for (i, row) in ds.matrix.rows().enumerate() {
        fields.clear();
        fields.extend(row.iter().map(|v| v.to_string()));
        if let Some(labels) = &ds.labels {
            fields.push(if labels[i] { "1" } else { "0" }.to_string());
        }
        out.write_record(&fields).map_err(|e| csv_err(path, e))?;
    }
    out.flush().map_err(io_err(path))?;
    Ok(())
}

/// Per-axis affine map onto `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MinMaxScaling {
    pub data: Matrix,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub warnings: Vec<String>,
}

/// Scales each column to `[0, 1]`; constant columns become 0 with a warning.
pub fn minmax_scale(data: &Matrix) -> Result<MinMaxScaling> {
    if data.nrows() == 0 {
        return Err(Error::Empty);
    }
    let d = data.ncols();
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for r in data.rows() {
        for j in 0..d {
            lo[j] = lo[j].min(r[j]);
            hi[j] = hi[j].max(r[j]);
        }
    }
    let warnings = (0..d)
        .filter(|&j| hi[j] == lo[j])
        .map(|j| format!("column {} is constant ({}); mapped to 0", j + 1, lo[j]))
        .collect();
    let scaled = apply_minmax(data, &lo, &hi);
    Ok(MinMaxScaling {
        data: scaled,
        lo,
        hi,
        warnings,
    })
}

/// Applies previously fitted bounds, e.g. to a test split.
pub fn apply_minmax(data: &Matrix, lo: &[f64], hi: &[f64]) -> Matrix {
    let mut out = data.clone();
    for i in 0..out.nrows() {
        for (j, v) in out.row_mut(i).iter_mut().enumerate() {
            let span = hi[j] - lo[j];
            *v = if span > 0.0 { (*v - lo[j]) / span } else { 0.0 };
        }
    }
    out
}

/// Projection onto the leading principal axes.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaProjection {
    pub mean: Vec<f64>,
    /// `d × d′`, row-major, orthonormal columns.
    pub basis: Vec<f64>,
    pub input_dim: usize,
    pub target_dim: usize,
    /// Variances along the retained axes, descending.
    pub explained_variance: Vec<f64>,
}

impl PcaProjection {
    pub fn project(&self, data: &Matrix) -> Result<Matrix> {
        crate::error::check_dim(self.input_dim, data.ncols())?;
        let k = self.target_dim;
        let mut out = Matrix::zeros(data.nrows(), k);
        for (i, x) in data.rows().enumerate() {
            let row = out.row_mut(i);
            for ((xj, mj), basis_row) in x.iter().zip(&self.mean).zip(self.basis.chunks_exact(k)) {
                let c = xj - mj;
                for (r, b) in row.iter_mut().zip(basis_row) {
                    *r += c * b;
                }
            }
        }
        Ok(out)
    }
}

pub fn pca_reduce(data: &Matrix, target_dim: usize) -> Result<(PcaProjection, Matrix)> {
    let (n, d) = (data.nrows(), data.ncols());
    if n < 2 {
        return Err(Error::InsufficientData { needed: 2, found: n });
    }
    if target_dim == 0 || target_dim > d {
        return Err(Error::InvalidParameter(format!(
            "target dimension {target_dim} outside 1..={d}"
        )));
    }
    let mean = data.column_means();
    let mut cov = DMatrix::<f64>::zeros(d, d);
    for x in data.rows() {
        for a in 0..d {
            let ca = x[a] - mean[a];
            for b in a..d {
                cov[(a, b)] += ca * (x[b] - mean[b]);
            }
        }
    }
    for a in 0..d {
        for b in a..d {
            let v = cov[(a, b)] / (n as f64 - 1.0);
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
    }
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut basis = vec![0.0; d * target_dim];
    let mut explained_variance = Vec::with_capacity(target_dim);
    for (p, &col) in order.iter().take(target_dim).enumerate() {
        let v = eig.eigenvectors.column(col);
        let mut pivot = 0;
        for j in 1..d {
            if v[j].abs() > v[pivot].abs() {
                pivot = j;
            }
        }
        let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..d {
            basis[j * target_dim + p] = sign * v[j];
        }
        explained_variance.push(eig.eigenvalues[col]);
    }
    let proj = PcaProjection {
        mean,
        basis,
        input_dim: d,
        target_dim,
        explained_variance,
    };
    let projected = proj.project(data)?;
    Ok((proj, projected))
}

pub const MODEL_FORMAT: u64 = 1;

#[derive(Serialize, Deserialize)]
struct DensityRecord {
    rotation: Vec<f64>,
    scales: Vec<f64>,
    translation: Vec<f64>,
    cells: Vec<(Vec<i64>, f64)>,
    cell_volume: f64,
}

#[derive(Serialize, Deserialize)]
struct ModelRecord {
    format: u64,
    config: GbhtConfig,
    scale_params: ScaleParams,
    f0: DensityRecord,
    components: Vec<DensityRecord>,
    alphas: Vec<f64>,
    mixture_weights: Vec<f64>,
    train_nll_trace: Vec<f64>,
}

impl DensityRecord {
    fn from_density(f: &HtDensity) -> Self {
        let t = f.transform();
        Self {
            rotation: t.rotation().entries().to_vec(),
            scales: t.scales().to_vec(),
            translation: t.translation().to_vec(),
            cells: f.cells_sorted().into_iter().map(|(k, v)| (k.0, v)).collect(),
            cell_volume: f.cell_volume(),
        }
    }

    fn into_density(self) -> Result<HtDensity> {
        let d = self.scales.len();
        let rotation = RotationMatrix::from_row_major(d, self.rotation)?;
        let t = HistogramTransform::new(rotation, self.scales, self.translation)?;
        let cells = self.cells.into_iter().map(|(k, v)| (BinIndex(k), v)).collect();
        let f = HtDensity::from_cells(t, cells)?;
        if (f.cell_volume() - self.cell_volume).abs() > 1e-12 * self.cell_volume.abs() {
            return Err(Error::Schema(format!(
                "stored cell volume {} disagrees with scales ({})",
                self.cell_volume,
                f.cell_volume()
            )));
        }
        Ok(f)
    }
}

pub fn model_to_json(model: &GbhtModel) -> String {
    let record = ModelRecord {
        format: MODEL_FORMAT,
        config: *model.config(),
        scale_params: *model.scale_params(),
        f0: DensityRecord::from_density(model.f0()),
        components: model.components().iter().map(DensityRecord::from_density).collect(),
        alphas: model.alphas().to_vec(),
        mixture_weights: model.mixture_weights().to_vec(),
        train_nll_trace: model.train_nll_trace().to_vec(),
    };
    serde_json::to_string(&record).expect("model serializes")
}

pub fn model_from_json(text: &str) -> Result<GbhtModel> {
    let version: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
    match version.get("format").and_then(serde_json::Value::as_u64) {
        Some(MODEL_FORMAT) => {}
        Some(found) => {
            return Err(Error::VersionMismatch {
                found,
                expected: MODEL_FORMAT,
            })
        }
        None => return Err(Error::Schema("missing `format` field".into())),
    }
    let record: ModelRecord = serde_json::from_value(version).map_err(|e| Error::Schema(e.to_string()))?;
    let schema = |e: Error| Error::Schema(e.to_string());
    let f0 = record.f0.into_density().map_err(schema)?;
    let components = record
        .components
        .into_iter()
        .map(DensityRecord::into_density)
        .collect::<Result<Vec<_>>>()
        .map_err(schema)?;
    let model = GbhtModel::from_parts(
        record.config,
        record.scale_params,
        f0,
        components,
        record.alphas,
        record.train_nll_trace,
    )
    .map_err(schema)?;
    let stored = &record.mixture_weights;
    let consistent = stored.len() == model.mixture_weights().len()
        && stored
            .iter()
            .zip(model.mixture_weights())
            .all(|(a, b)| (a - b).abs() <= 1e-12);
    if !consistent {
        return Err(Error::Schema("mixture weights disagree with step sizes".into()));
    }
    Ok(model)
}

pub fn save_model(model: &GbhtModel, path: &Path) -> Result<()> {
    let mut file = BufWriter::new(File::create(path).map_err(io_err(path))?);
    file.write_all(model_to_json(model).as_bytes()).map_err(io_err(path))?;
    file.flush().map_err(io_err(path))
}

pub fn load_model(path: &Path) -> Result<GbhtModel> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    model_from_json(&text)
}
