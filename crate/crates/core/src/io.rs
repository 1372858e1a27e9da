//! File formats: network and data files (JSON, CSV), the provenance sidecar
//! of synthetic data and learned-coefficient files.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::net::{NetworkSpec, NoiseMode, Provenance, Sample, TrainingSet};

fn parse_error(source: &str, message: impl Into<String>) -> Error {
    Error::Parse {
        source_name: source.to_string(),
        message: message.into(),
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNetwork {
    dims: Vec<usize>,
    act_degrees: Vec<usize>,
    weights: Vec<Value>,
}

#[derive(Serialize)]
struct NetworkOut<'a> {
    dims: &'a [usize],
    act_degrees: &'a [usize],
    weights: Vec<Vec<Vec<f64>>>,
}

fn number(v: &Value, field: &str, source: &str) -> Result<f64> {
    v.as_f64()
        .ok_or_else(|| parse_error(source, format!("{field}: expected a number, found {v}")))
}

/// A weight matrix given either as nested rows or as one row-major list.
fn matrix(v: &Value, rows: usize, cols: usize, field: &str, source: &str) -> Result<DMatrix<f64>> {
    let items = v
        .as_array()
        .ok_or_else(|| parse_error(source, format!("{field}: expected an array")))?;
    if items.iter().all(Value::is_array) {
        if items.len() != rows {
            return Err(Error::Shape(format!(
                "{field} has {} rows, expected {rows}",
                items.len()
            )));
        }
        let mut m = DMatrix::zeros(rows, cols);
        for (r, row) in items.iter().enumerate() {
            let row = row.as_array().expect("checked above");
            if row.len() != cols {
                return Err(Error::Shape(format!(
                    "{field}[{r}] has {} entries, expected {cols}",
                    row.len()
                )));
            }
            for (c, v) in row.iter().enumerate() {
                m[(r, c)] = number(v, &format!("{field}[{r}][{c}]"), source)?;
            }
        }
        Ok(m)
    } else {
        if items.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{field} has {} entries, expected {rows}x{cols} = {} in row-major order",
                items.len(),
                rows * cols
            )));
        }
        let flat = items
            .iter()
            .enumerate()
            .map(|(i, v)| number(v, &format!("{field}[{i}]"), source))
            .collect::<Result<Vec<f64>>>()?;
        Ok(DMatrix::from_row_slice(rows, cols, &flat))
    }
}

/// Parses `{"dims": [...], "act_degrees": [...], "weights": [...]}`. Each
/// weight matrix is a list of rows or a flat row-major list.
pub fn parse_network(text: &str, source: &str) -> Result<NetworkSpec> {
    let raw: RawNetwork = serde_json::from_str(text).map_err(|e| parse_error(source, e.to_string()))?;
    if raw.dims.len() < 2 {
        return Err(Error::InvalidNetwork(format!(
            "dims must list at least two widths, got {}",
            raw.dims.len()
        )));
    }
    if raw.weights.len() != raw.dims.len() - 1 {
        return Err(Error::InvalidNetwork(format!(
            "weights: expected {} matrices for {} widths, got {}",
            raw.dims.len() - 1,
            raw.dims.len(),
            raw.weights.len()
        )));
    }
    let weights = raw
        .weights
        .iter()
        .enumerate()
        .map(|(l, w)| {
            matrix(
                w,
                raw.dims[l + 1],
                raw.dims[l],
                &format!("weights[{l}] (W_{})", l + 1),
                source,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    NetworkSpec::new(raw.dims, raw.act_degrees, weights)
}

pub fn network_to_json(net: &NetworkSpec) -> String {
    let weights = net
        .weights()
        .iter()
        .map(|w| (0..w.nrows()).map(|r| w.row(r).iter().copied().collect()).collect())
        .collect();
    let out = NetworkOut {
        dims: net.dims(),
        act_degrees: net.act_degrees(),
        weights,
    };
    serde_json::to_string_pretty(&out).expect("network serializes")
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DataFile {
    samples: Vec<Sample>,
}

/// Parses `{"samples": [{"x": [...], "y": [...]}, ...]}`.
pub fn parse_data_json(text: &str, source: &str) -> Result<TrainingSet> {
    let raw: DataFile = serde_json::from_str(text).map_err(|e| parse_error(source, e.to_string()))?;
    TrainingSet::new(raw.samples)
}

pub fn data_to_json(data: &TrainingSet) -> String {
    let out = DataFile {
        samples: data.samples.clone(),
    };
    serde_json::to_string_pretty(&out).expect("data serializes")
}

/// Parses a CSV with header `x_1, ..., x_{m0}, y_1, ..., y_{m}`.
pub fn parse_data_csv(text: &str, source: &str) -> Result<TrainingSet> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| parse_error(source, format!("header: {e}")))?
        .clone();
    let mut n_x = 0;
    let mut n_y = 0;
    for (col, name) in header.iter().enumerate() {
        let expected_x = format!("x_{}", n_x + 1);
        let expected_y = format!("y_{}", n_y + 1);
        if n_y == 0 && name == expected_x {
            n_x += 1;
        } else if name == expected_y {
            n_y += 1;
        } else {
            return Err(parse_error(
                source,
                format!(
                    "header column {} is `{name}`, expected `{expected_x}` or `{expected_y}`",
                    col + 1
                ),
            ));
        }
    }
    if n_x == 0 || n_y == 0 {
        return Err(parse_error(source, "header needs at least one x_ and one y_ column"));
    }
    let mut samples = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| parse_error(source, format!("line {line}: {e}")))?;
        let values = record
            .iter()
            .enumerate()
            .map(|(col, s)| {
                s.parse::<f64>().map_err(|_| {
                    parse_error(
                        source,
                        format!("line {line}, column `{}`: `{s}` is not a number", &header[col]),
                    )
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        samples.push(Sample {
            x: values[..n_x].to_vec(),
            y: values[n_x..].to_vec(),
        });
    }
    if samples.is_empty() {
        return Err(parse_error(source, "no data rows"));
    }
    TrainingSet::new(samples)
}

pub fn data_to_csv(data: &TrainingSet) -> String {
    let (mx, my) = data.samples.first().map_or((0, 0), |s| (s.x.len(), s.y.len()));
    let mut writer = csv::Writer::from_writer(Vec::new());
    let header: Vec<String> = (1..=mx)
        .map(|i| format!("x_{i}"))
        .chain((1..=my).map(|j| format!("y_{j}")))
        .collect();
    writer.write_record(&header).expect("in-memory write");
    for s in &data.samples {
        let row: Vec<String> = s.x.iter().chain(&s.y).map(|v| format!("{v:e}")).collect();
        writer.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(writer.into_inner().expect("in-memory flush")).expect("csv is utf-8")
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| parse_error(&path.display().to_string(), e.to_string()))
}

pub fn read_network(path: &Path) -> Result<NetworkSpec> {
    parse_network(&read_text(path)?, &path.display().to_string())
}

/// Reads a data file, choosing CSV for a `.csv` extension and JSON otherwise.
pub fn read_data(path: &Path) -> Result<TrainingSet> {
    let text = read_text(path)?;
    let source = path.display().to_string();
    let is_csv = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if is_csv {
        parse_data_csv(&text, &source)
    } else {
        parse_data_json(&text, &source)
    }
}

/// Sidecar written next to synthetic data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProvenanceSidecar {
    pub c_true: Vec<f64>,
    pub seed: u64,
    pub noise_scale: f64,
    pub noise_mode: NoiseMode,
    pub noise_norms: Vec<f64>,
    pub mean_noise_norm: f64,
    pub mean_sample_noise_norm: f64,
}

impl From<&Provenance> for ProvenanceSidecar {
    fn from(p: &Provenance) -> Self {
        ProvenanceSidecar {
            c_true: p.c_true.clone(),
            seed: p.seed,
            noise_scale: p.noise_scale,
            noise_mode: p.noise_mode,
            noise_norms: p.sample_noise_norms(),
            mean_noise_norm: p.mean_noise_norm(),
            mean_sample_noise_norm: p.mean_sample_noise_norm(),
        }
    }
}

/// Learned coefficients in the network's coefficient order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientsFile {
    pub names: Vec<String>,
    pub values: Vec<f64>,
    pub theta: Option<f64>,
    pub certified: bool,
}

impl CoefficientsFile {
    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let file: CoefficientsFile = serde_json::from_str(text).map_err(|e| parse_error(source, e.to_string()))?;
        if file.names.len() != file.values.len() {
            return Err(parse_error(
                source,
                format!(
                    "names has {} entries but values has {}",
                    file.names.len(),
                    file.values.len()
                ),
            ));
        }
        Ok(file)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&read_text(path)?, &path.display().to_string())
    }

    /// Checks the names against the network's coefficient layout.
    pub fn check_against(&self, net: &NetworkSpec) -> Result<()> {
        let expected = net.coefficient_names();
        if self.names != expected {
            return Err(Error::Shape(format!(
                "coefficients {:?} do not match the network's layout {:?}",
                self.names, expected
            )));
        }
        Ok(())
    }
}
