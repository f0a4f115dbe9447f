//! Data ingestion, model persistence and report formatting.
//!
//! Score files are CSV with header `id,label,<voter_1>,...,<voter_n>`;
//! labels are -1/1 and scores finite decimal reals. Model files carry a
//! one-line header `fusionq-model/1 sha256=<hex>` followed by a JSON payload
//! whose floats are written with 17 significant digits, so every value
//! round-trips exactly and identical models serialize to identical bytes.
//! All writes go through a temp file plus rename.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{FusionError, Result};
use crate::kernel::KernelLayer;
use crate::linalg::Mat;
use crate::mincq::Prediction;
use crate::num::Real;
use crate::types::{Algorithm, EvalReport, FusionModel, ModelWeights, ScoreMatrix, VoterWeights};

const MODEL_FORMAT_VERSION: u32 = 1;
const MODEL_MAGIC: &str = "fusionq-model/";

/// Decimal with 17 significant digits: enough for an exact f64 round-trip.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

/// Atomic write: temp file in the same directory, then rename.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

fn data_err(line: u64, message: impl Into<String>) -> FusionError {
    FusionError::DataFormat {
        line,
        message: message.into(),
    }
}

/// Reads a score CSV into a matrix, rejecting malformed rows with their
/// line number.
pub fn read_scores<F: Real>(path: &Path) -> Result<ScoreMatrix<F>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| FusionError::Io(e.to_string()))?;
    let headers = reader
        .headers()
        .map_err(|e| data_err(1, e.to_string()))?
        .clone();
    if headers.len() < 3 {
        return Err(data_err(1, "header needs id,label and at least one voter column"));
    }
    if &headers[0] != "id" || &headers[1] != "label" {
        return Err(data_err(1, "header must start with id,label"));
    }
    let voter_names: Vec<String> = headers.iter().skip(2).map(str::to_string).collect();

    let mut labels = Vec::new();
    let mut example_ids: Vec<String> = Vec::new();
    let mut rows: Vec<Vec<F>> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, csv::Position::line);
            data_err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, csv::Position::line);
        if record.len() != headers.len() {
            return Err(data_err(
                line,
                format!("expected {} fields, got {}", headers.len(), record.len()),
            ));
        }
        let id = record[0].to_string();
        if !seen.insert(id.clone()) {
            return Err(data_err(line, format!("duplicate id {id:?}")));
        }
        let label = match &record[1] {
            "1" | "+1" => 1,
            "-1" => -1,
            other => {
                return Err(FusionError::InvalidLabel {
                    value: other.to_string(),
                    line: Some(line),
                })
            }
        };
        let mut row = Vec::with_capacity(voter_names.len());
        for (i, field) in record.iter().skip(2).enumerate() {
            let value: f64 = field.parse().map_err(|_| {
                data_err(
                    line,
                    format!("column {:?}: invalid score {field:?}", voter_names[i]),
                )
            })?;
            if !value.is_finite() {
                return Err(data_err(
                    line,
                    format!("column {:?}: non-finite score {field:?}", voter_names[i]),
                ));
            }
            row.push(F::of(value));
        }
        labels.push(label);
        example_ids.push(id);
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(FusionError::EmptySample);
    }
    ScoreMatrix::new(Mat::from_rows(&rows), labels, voter_names, example_ids)
}

/// Writes a score matrix in the standard CSV format.
pub fn write_scores<F: Real>(s: &ScoreMatrix<F>, path: &Path) -> Result<()> {
    let mut out = String::from("id,label");
    for name in s.voter_names() {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for j in 0..s.examples() {
        out.push_str(&s.example_ids()[j]);
        out.push(',');
        out.push_str(if s.label(j) == 1 { "1" } else { "-1" });
        for i in 0..s.voters() {
            out.push(',');
            out.push_str(&fmt17(s.score(j, i).widen()));
        }
        out.push('\n');
    }
    atomic_write(path, out.as_bytes())
}

/// Writes per-example predictions as `id,score,label`.
pub fn write_predictions<F: Real>(
    ids: &[String],
    predictions: &[Prediction<F>],
    path: &Path,
) -> Result<()> {
    let mut out = String::from("id,score,label\n");
    for (id, p) in ids.iter().zip(predictions) {
        out.push_str(id);
        out.push(',');
        out.push_str(&fmt17(p.score.widen()));
        out.push(',');
        out.push_str(if p.label == 1 { "1" } else { "-1" });
        out.push('\n');
    }
    atomic_write(path, out.as_bytes())
}

/// Reads a per-concept metric file (`concept,value` CSV) for `compare`.
pub fn read_metric_file(path: &Path) -> Result<Vec<(String, f64)>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| FusionError::Io(e.to_string()))?;
    let headers = reader.headers().map_err(|e| data_err(1, e.to_string()))?;
    if headers.len() != 2 || &headers[0] != "concept" || &headers[1] != "value" {
        return Err(data_err(1, "header must be concept,value"));
    }
    let mut out = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, csv::Position::line);
            data_err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, csv::Position::line);
        let concept = record[0].to_string();
        if !seen.insert(concept.clone()) {
            return Err(data_err(line, format!("duplicate concept {concept:?}")));
        }
        let value: f64 = record[1]
            .parse()
            .map_err(|_| data_err(line, format!("invalid value {:?}", &record[1])))?;
        if !value.is_finite() {
            return Err(data_err(line, format!("non-finite value {:?}", &record[1])));
        }
        out.push((concept, value));
    }
    if out.is_empty() {
        return Err(FusionError::EmptySample);
    }
    Ok(out)
}

// --- model files ------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct WeightsPayload {
    kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    q_prime: Option<Vec<f64>>,
    q: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct KernelPayload {
    gamma: f64,
    means: Vec<f64>,
    stds: Vec<f64>,
    anchor_count: usize,
    anchor_ids: Vec<String>,
    anchors: Vec<Vec<f64>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelPayload {
    algorithm: String,
    voter_names: Vec<String>,
    weights: WeightsPayload,
    #[serde(skip_serializing_if = "Option::is_none")]
    kernel: Option<KernelPayload>,
    hyperparams: BTreeMap<String, f64>,
}

/// JSON formatter writing every float with 17 significant digits.
struct SigFigFormatter;

impl serde_json::ser::Formatter for SigFigFormatter {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()>
    where
        W: ?Sized + std::io::Write,
    {
        write!(writer, "{value:.16e}")
    }
}

fn to_payload<F: Real>(model: &FusionModel<F>) -> ModelPayload {
    let weights = match &model.weights {
        ModelWeights::Learned(w) => WeightsPayload {
            kind: "learned".into(),
            q_prime: Some(w.q_prime().iter().map(|v| v.widen()).collect()),
            q: w.q().iter().map(|v| v.widen()).collect(),
        },
        ModelWeights::Fixed(w) => WeightsPayload {
            kind: "fixed".into(),
            q_prime: None,
            q: w.iter().map(|v| v.widen()).collect(),
        },
    };
    let kernel = model.kernel.as_ref().map(|layer| KernelPayload {
        gamma: layer.gamma().widen(),
        means: layer.means().iter().map(|v| v.widen()).collect(),
        stds: layer.stds().iter().map(|v| v.widen()).collect(),
        anchor_count: layer.anchor_count(),
        anchor_ids: layer.anchor_ids().to_vec(),
        anchors: (0..layer.anchor_count())
            .map(|a| layer.anchors().row(a).iter().map(|v| v.widen()).collect())
            .collect(),
    });
    ModelPayload {
        algorithm: model.algorithm.name().to_string(),
        voter_names: model.voter_names.clone(),
        weights,
        kernel,
        hyperparams: model.hyperparams.clone(),
    }
}

fn from_payload<F: Real>(payload: ModelPayload) -> Result<FusionModel<F>> {
    let algorithm: Algorithm = payload.algorithm.parse()?;
    let weights = match payload.weights.kind.as_str() {
        "learned" => {
            let q_prime = payload
                .weights
                .q_prime
                .ok_or_else(|| data_err(0, "learned weights missing q_prime"))?;
            let w = VoterWeights::from_q_prime(q_prime.iter().map(|&v| F::of(v)).collect())?;
            let rederived: Vec<f64> = w.q().iter().map(|v| v.widen()).collect();
            if rederived != payload.weights.q {
                return Err(data_err(0, "stored q inconsistent with q_prime"));
            }
            ModelWeights::Learned(w)
        }
        "fixed" => ModelWeights::Fixed(payload.weights.q.iter().map(|&v| F::of(v)).collect()),
        other => return Err(data_err(0, format!("unknown weight kind {other:?}"))),
    };
    let kernel = match payload.kernel {
        Some(k) => {
            if k.anchors.len() != k.anchor_count {
                return Err(data_err(0, "anchor_count disagrees with anchors"));
            }
            let rows: Vec<Vec<F>> = k
                .anchors
                .iter()
                .map(|row| row.iter().map(|&v| F::of(v)).collect())
                .collect();
            Some(KernelLayer::from_parts(
                F::of(k.gamma),
                k.means.iter().map(|&v| F::of(v)).collect(),
                k.stds.iter().map(|&v| F::of(v)).collect(),
                Mat::from_rows(&rows),
                k.anchor_ids,
            )?)
        }
        None => None,
    };
    let model = FusionModel {
        algorithm,
        weights,
        kernel,
        hyperparams: payload.hyperparams,
        voter_names: payload.voter_names,
    };
    if model.voter_count() != model.voter_names.len() {
        return Err(data_err(0, "weight count disagrees with voter names"));
    }
    Ok(model)
}

fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Serializes a model to its on-disk byte representation.
pub fn model_to_bytes<F: Real>(model: &FusionModel<F>) -> Result<Vec<u8>> {
    let payload = to_payload(model);
    let mut body = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut body, SigFigFormatter);
    payload
        .serialize(&mut ser)
        .map_err(|e| FusionError::Io(e.to_string()))?;
    body.push(b'\n');
    let mut out = format!(
        "{MODEL_MAGIC}{MODEL_FORMAT_VERSION} sha256={}\n",
        sha256_hex(&body)
    )
    .into_bytes();
    out.extend_from_slice(&body);
    Ok(out)
}

/// Writes a model file (version header, checksum, JSON payload).
pub fn write_model<F: Real>(model: &FusionModel<F>, path: &Path) -> Result<()> {
    atomic_write(path, &model_to_bytes(model)?)
}

/// Reads a model file back, verifying version and checksum.
pub fn read_model<F: Real>(path: &Path) -> Result<FusionModel<F>> {
    let bytes = fs::read(path)?;
    let newline = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| data_err(1, "missing model header"))?;
    let header = std::str::from_utf8(&bytes[..newline])
        .map_err(|_| data_err(1, "model header is not utf-8"))?;
    let body = &bytes[newline + 1..];

    let rest = header
        .strip_prefix(MODEL_MAGIC)
        .ok_or_else(|| data_err(1, "not a fusionq model file"))?;
    let (version, checksum) = rest
        .split_once(" sha256=")
        .ok_or_else(|| data_err(1, "malformed model header"))?;
    if version != MODEL_FORMAT_VERSION.to_string() {
        return Err(FusionError::VersionMismatch {
            found: version.to_string(),
        });
    }
    if sha256_hex(body) != checksum {
        return Err(FusionError::ChecksumMismatch);
    }
    let payload: ModelPayload = serde_json::from_slice(body)
        .map_err(|e| data_err(e.line() as u64 + 1, e.to_string()))?;
    from_payload(payload)
}

// --- evaluation report ------------------------------------------------------

/// Renders an evaluation report as deterministic `key=value` text.
pub fn format_eval_report<F: Real>(
    model: &FusionModel<F>,
    examples: usize,
    report: &EvalReport<F>,
) -> String {
    let mut out = String::new();
    let mut line = |k: &str, v: String| {
        out.push_str(k);
        out.push('=');
        out.push_str(&v);
        out.push('\n');
    };
    line("algorithm", model.algorithm.name().to_string());
    line("examples", examples.to_string());
    line("voters", model.voter_count().to_string());
    for (k, v) in &model.hyperparams {
        line(&format!("hyperparam.{k}"), format!("{v}"));
    }
    line("risk", format!("{}", report.risk.widen()));
    line("map", format!("{}", report.map.widen()));
    line("first_moment", format!("{}", report.first_moment.widen()));
    line("second_moment", format!("{}", report.second_moment.widen()));
    match report.c_bound {
        Some(c) => line("c_bound", format!("{}", c.widen())),
        None => line("c_bound", "undefined".to_string()),
    }
    let n = report.diversity.rows();
    line("diversity.voters", n.to_string());
    let mut diag = 0.0;
    for i in 0..n {
        diag += report.diversity[(i, i)].widen();
    }
    line("diversity.diag_mean", format!("{}", diag / n as f64));
    if n > 1 {
        let mut sum = 0.0;
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    let v = report.diversity[(i, j)].widen();
                    sum += v;
                    min = min.min(v);
                    max = max.max(v);
                }
            }
        }
        let count = (n * (n - 1)) as f64;
        line("diversity.offdiag_mean", format!("{}", sum / count));
        line("diversity.offdiag_min", format!("{min}"));
        line("diversity.offdiag_max", format!("{max}"));
    }
    out
}
