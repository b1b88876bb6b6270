//! CSV and JSON serialization of experiment results. Floats are written
//! with 17 significant digits so they parse back to the same bits.

use std::io::{self, Write};

use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::experiments::ExperimentResult;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

/// Pretty printer that writes every `f64` as `d.dddddddddddddddde±x`.
struct ExactFloats<'a> {
    inner: PrettyFormatter<'a>,
}

impl<'a> ExactFloats<'a> {
    fn new() -> Self {
        Self { inner: PrettyFormatter::new() }
    }
}

impl Formatter for ExactFloats<'_> {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        if value.is_finite() {
            write!(writer, "{}", format_f64(value))
        } else {
            writer.write_all(b"null")
        }
    }

    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_array(w)
    }

    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_array(w)
    }

    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.inner.begin_array_value(w, first)
    }

    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_array_value(w)
    }

    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_object(w)
    }

    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_object(w)
    }

    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.inner.begin_object_key(w, first)
    }

    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_object_value(w)
    }

    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_object_value(w)
    }
}

/// 17 significant digits in scientific notation.
pub fn format_f64(value: f64) -> String {
    format!("{value:.16e}")
}

/// Pretty JSON with exact floats and a trailing newline.
pub fn to_json_bytes<T: Serialize + ?Sized>(value: &T) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, ExactFloats::new());
    value.serialize(&mut ser).map_err(|e| Error::Serialization(e.to_string()))?;
    out.push(b'\n');
    Ok(out)
}

/// The JSON summary of a run, without per-sample data.
pub fn summary(result: &ExperimentResult, manifest: Option<&Value>) -> Value {
    let mut v = json!({
        "experiment": result.metadata.experiment,
        "samples": result.per_sample_distances.len(),
        "mean": result.mean,
        "std_error": result.std_error,
        "bound_exact": result.bound_exact,
        "bound_asymptotic": result.bound_asymptotic,
        "mean_within_bound": result.within_bound(2.0),
        "gamma": result.gamma,
        "Q": result.capacity,
        "typical_dim": result.typical_dim,
        "details": result.details,
        "warnings": result.warnings,
        "config": result.metadata.config,
        "seed": result.metadata.seed,
        "elapsed_seconds": result.metadata.elapsed_seconds,
    });
    if let Some(m) = manifest {
        v["manifest"] = m.clone();
    }
    v
}

/// `sample_index,distance` rows, optionally preceded by `# <comment>` lines.
pub fn to_csv(result: &ExperimentResult, comment: Option<&str>) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    if let Some(c) = comment {
        for line in c.lines() {
            out.extend_from_slice(b"# ");
            out.extend_from_slice(line.as_bytes());
            out.push(b'\n');
        }
    }
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| Error::Serialization(e.to_string());
    w.write_record(["sample_index", "distance"]).map_err(err)?;
    for (i, d) in result.per_sample_distances.iter().enumerate() {
        w.write_record([i.to_string(), format_f64(*d)]).map_err(err)?;
    }
    w.into_inner().map_err(|e| Error::Serialization(e.to_string()))
}

/// CSV of the per-sample distances, or the JSON summary. `manifest` is
/// embedded in the JSON and, compacted, in a CSV comment line.
pub fn serialize_result(result: &ExperimentResult, format: Format, manifest: Option<&Value>) -> Result<Vec<u8>> {
    match format {
        Format::Json => to_json_bytes(&summary(result, manifest)),
        Format::Csv => {
            let comment = manifest
                .map(|m| serde_json::to_string(m).map(|s| format!("manifest: {s}")))
                .transpose()
                .map_err(|e| Error::Serialization(e.to_string()))?;
            to_csv(result, comment.as_deref())
        }
    }
}
