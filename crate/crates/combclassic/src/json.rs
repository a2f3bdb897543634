//! JSON (de)serialization, schema "v1".
//!
//! Complex entries are [re, im] pairs in row-major nested arrays; all
//! documents carry explicit dimension, time, and port metadata.
//! Deserialization walks the document manually so that every failure
//! reports a JSON-pointer location.

use std::fmt;

use combclassic_core::comb::{Comb, Dilation};
use combclassic_core::instrument::Instrument;
use combclassic_core::tensor::{C64, ComplexMatrix, Port};
use serde::Serialize;
use serde_json::{json, Value};

pub use combclassic_core::comb::ChoiState;

#[derive(Debug, Clone)]
pub struct SchemaError {
    pub pointer: String,
    pub message: String,
}

impl fmt::Display for SchemaError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "schema error at {}: {}", self.pointer, self.message)
    }
}

impl std::error::Error for SchemaError {}

fn err(pointer: &str, message: impl Into<String>) -> SchemaError {
    SchemaError { pointer: pointer.to_string(), message: message.into() }
}

fn field<'v>(v: &'v Value, pointer: &str, name: &str) -> Result<&'v Value, SchemaError> {
    v.get(name).ok_or_else(|| err(&format!("{}/{}", pointer, name), "missing field"))
}

fn as_array<'v>(v: &'v Value, pointer: &str) -> Result<&'v Vec<Value>, SchemaError> {
    v.as_array().ok_or_else(|| err(pointer, "expected an array"))
}

fn as_f64(v: &Value, pointer: &str) -> Result<f64, SchemaError> {
    v.as_f64().ok_or_else(|| err(pointer, "expected a number"))
}

fn as_usize(v: &Value, pointer: &str) -> Result<usize, SchemaError> {
    v.as_u64().map(|x| x as usize).ok_or_else(|| err(pointer, "expected a non-negative integer"))
}

fn as_str<'v>(v: &'v Value, pointer: &str) -> Result<&'v str, SchemaError> {
    v.as_str().ok_or_else(|| err(pointer, "expected a string"))
}

fn check_header(v: &Value, kind: &str) -> Result<(), SchemaError> {
    let schema = as_str(field(v, "", "schema")?, "/schema")?;
    if schema != "v1" {
        return Err(err("/schema", format!("unsupported schema version {:?}", schema)));
    }
    let k = as_str(field(v, "", "kind")?, "/kind")?;
    if k != kind {
        return Err(err("/kind", format!("expected kind {:?}, found {:?}", kind, k)));
    }
    Ok(())
}

pub fn document_kind(v: &Value) -> Result<String, SchemaError> {
    Ok(as_str(field(v, "", "kind")?, "/kind")?.to_string())
}

// ---------------------------------------------------------------------
// matrices

fn matrix_to_json(m: &ComplexMatrix) -> Value {
    let rows: Vec<Value> = (0..m.rows())
        .map(|i| {
            let row: Vec<Value> =
                (0..m.cols()).map(|j| json!([m[(i, j)].re, m[(i, j)].im])).collect();
            Value::Array(row)
        })
        .collect();
    Value::Array(rows)
}

fn matrix_from_json(v: &Value, pointer: &str) -> Result<ComplexMatrix, SchemaError> {
    let rows = as_array(v, pointer)?;
    let n = rows.len();
    if n == 0 {
        return Err(err(pointer, "matrix must not be empty"));
    }
    let mut out = ComplexMatrix::zeros(n, as_array(&rows[0], &format!("{}/0", pointer))?.len());
    for (i, row_v) in rows.iter().enumerate() {
        let rp = format!("{}/{}", pointer, i);
        let row = as_array(row_v, &rp)?;
        if row.len() != out.cols() {
            return Err(err(&rp, "ragged matrix rows"));
        }
        for (j, entry) in row.iter().enumerate() {
            let ep = format!("{}/{}", rp, j);
            let pair = as_array(entry, &ep)?;
            if pair.len() != 2 {
                return Err(err(&ep, "complex entries are [re, im] pairs"));
            }
            let re = as_f64(&pair[0], &format!("{}/0", ep))?;
            let im = as_f64(&pair[1], &format!("{}/1", ep))?;
            out[(i, j)] = C64::new(re, im);
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------
// combs

pub fn comb_to_json(comb: &Comb) -> Value {
    let dims: Vec<usize> = comb.layout.dims();
    let slots: Vec<usize> = comb.layout.factors().iter().map(|f| f.slot).collect();
    let ports: Vec<&str> = comb
        .layout
        .factors()
        .iter()
        .map(|f| match f.port {
            Port::Output => "o",
            Port::Input => "i",
        })
        .collect();
    json!({
        "schema": "v1",
        "kind": "comb",
        "system_dim": comb.system_dim,
        "times": comb.times,
        "relaxed": comb.relaxed,
        "layout": { "dims": dims, "slots": slots, "ports": ports },
        "matrix": matrix_to_json(&comb.choi),
    })
}

pub fn comb_from_json(v: &Value) -> Result<Comb, SchemaError> {
    check_header(v, "comb")?;
    let system_dim = as_usize(field(v, "", "system_dim")?, "/system_dim")?;
    let times_v = as_array(field(v, "", "times")?, "/times")?;
    let times: Vec<f64> = times_v
        .iter()
        .enumerate()
        .map(|(i, t)| as_f64(t, &format!("/times/{}", i)))
        .collect::<Result<_, _>>()?;
    let relaxed = field(v, "", "relaxed")?
        .as_bool()
        .ok_or_else(|| err("/relaxed", "expected a boolean"))?;
    let layout = field(v, "", "layout")?;
    let dims_v = as_array(field(layout, "/layout", "dims")?, "/layout/dims")?;
    let expected: usize = 2 * times.len();
    if dims_v.len() != expected {
        return Err(err("/layout/dims", format!("expected {} factors", expected)));
    }
    for (i, d) in dims_v.iter().enumerate() {
        if as_usize(d, &format!("/layout/dims/{}", i))? != system_dim {
            return Err(err(
                &format!("/layout/dims/{}", i),
                "factor dimensions must equal system_dim",
            ));
        }
    }
    let matrix = matrix_from_json(field(v, "", "matrix")?, "/matrix")?;
    if !matrix.is_square() {
        return Err(err("/matrix", "matrix must be square"));
    }
    Comb::new(matrix, times, system_dim, relaxed)
        .map_err(|e| err("/matrix", format!("invalid comb: {}", e)))
}

// ---------------------------------------------------------------------
// dilations

pub fn dilation_to_json(d: &Dilation) -> Value {
    json!({
        "schema": "v1",
        "kind": "dilation",
        "dims": { "system": d.system_dim, "environment": d.env_dim },
        "times": d.times,
        "t0": d.t0,
        "initial_state": matrix_to_json(&d.initial_state),
        "maps": d.maps.iter().map(matrix_to_json).collect::<Vec<_>>(),
    })
}

pub fn dilation_from_json(v: &Value) -> Result<Dilation, SchemaError> {
    check_header(v, "dilation")?;
    let dims = field(v, "", "dims")?;
    let system_dim = as_usize(field(dims, "/dims", "system")?, "/dims/system")?;
    let env_dim = as_usize(field(dims, "/dims", "environment")?, "/dims/environment")?;
    let times_v = as_array(field(v, "", "times")?, "/times")?;
    let times: Vec<f64> = times_v
        .iter()
        .enumerate()
        .map(|(i, t)| as_f64(t, &format!("/times/{}", i)))
        .collect::<Result<_, _>>()?;
    let t0 = match field(v, "", "t0")? {
        Value::Null => None,
        other => Some(as_f64(other, "/t0")?),
    };
    let initial_state = matrix_from_json(field(v, "", "initial_state")?, "/initial_state")?;
    let maps_v = as_array(field(v, "", "maps")?, "/maps")?;
    let maps: Vec<ComplexMatrix> = maps_v
        .iter()
        .enumerate()
        .map(|(i, m)| matrix_from_json(m, &format!("/maps/{}", i)))
        .collect::<Result<_, _>>()?;
    let dilation = Dilation { initial_state, maps, system_dim, env_dim, times, t0 };
    dilation
        .validate(1e-7)
        .map_err(|e| err("/maps", format!("invalid dilation: {}", e)))?;
    Ok(dilation)
}

// ---------------------------------------------------------------------
// instruments

pub fn instrument_to_json(inst: &Instrument) -> Value {
    json!({
        "schema": "v1",
        "kind": "instrument",
        "dim": inst.dim,
        "labels": inst.labels,
        "elements": inst.elements.iter().map(|e| matrix_to_json(&e.matrix)).collect::<Vec<_>>(),
    })
}

pub fn instrument_from_json(v: &Value) -> Result<Instrument, SchemaError> {
    check_header(v, "instrument")?;
    let dim = as_usize(field(v, "", "dim")?, "/dim")?;
    let labels_v = as_array(field(v, "", "labels")?, "/labels")?;
    let labels: Vec<String> = labels_v
        .iter()
        .enumerate()
        .map(|(i, l)| as_str(l, &format!("/labels/{}", i)).map(|s| s.to_string()))
        .collect::<Result<_, _>>()?;
    let elements_v = as_array(field(v, "", "elements")?, "/elements")?;
    let elements: Vec<ChoiState> = elements_v
        .iter()
        .enumerate()
        .map(|(i, m)| {
            matrix_from_json(m, &format!("/elements/{}", i))
                .map(|mat| ChoiState::single_slot(mat, dim, 0))
        })
        .collect::<Result<_, _>>()?;
    Instrument::new(elements, dim, labels)
        .map_err(|e| err("/elements", format!("invalid instrument: {}", e)))
}

// ---------------------------------------------------------------------
// propagator chains (for the NCGD check) and states (for discord)

pub fn propagators_from_json(v: &Value) -> Result<(Vec<ChoiState>, usize), SchemaError> {
    check_header(v, "propagators")?;
    let dim = as_usize(field(v, "", "dim")?, "/dim")?;
    let maps_v = as_array(field(v, "", "maps")?, "/maps")?;
    let maps: Vec<ChoiState> = maps_v
        .iter()
        .enumerate()
        .map(|(i, m)| {
            matrix_from_json(m, &format!("/maps/{}", i))
                .map(|mat| ChoiState::single_slot(mat, dim, 0))
        })
        .collect::<Result<_, _>>()?;
    Ok((maps, dim))
}

pub fn propagators_to_json(maps: &[ChoiState], dim: usize) -> Value {
    json!({
        "schema": "v1",
        "kind": "propagators",
        "dim": dim,
        "maps": maps.iter().map(|m| matrix_to_json(&m.matrix)).collect::<Vec<_>>(),
    })
}

pub fn state_from_json(v: &Value) -> Result<(ComplexMatrix, usize, usize), SchemaError> {
    check_header(v, "state")?;
    let dims = field(v, "", "dims")?;
    let ds = as_usize(field(dims, "/dims", "system")?, "/dims/system")?;
    let de = as_usize(field(dims, "/dims", "environment")?, "/dims/environment")?;
    let matrix = matrix_from_json(field(v, "", "matrix")?, "/matrix")?;
    if matrix.rows() != ds * de || !matrix.is_square() {
        return Err(err("/matrix", "matrix dimension must equal system * environment"));
    }
    Ok((matrix, ds, de))
}

pub fn state_to_json(m: &ComplexMatrix, ds: usize, de: usize) -> Value {
    json!({
        "schema": "v1",
        "kind": "state",
        "dims": { "system": ds, "environment": de },
        "matrix": matrix_to_json(m),
    })
}

// ---------------------------------------------------------------------
// reports

#[derive(Debug, Serialize)]
pub struct WitnessJson {
    pub subset: Vec<usize>,
    pub dropped_slot: usize,
    pub outcomes: Vec<usize>,
}

#[derive(Debug, Serialize)]
pub struct ClassicalityReportJson {
    pub pass: bool,
    pub worst_violation: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<WitnessJson>,
    pub tol: f64,
}

impl From<&combclassic_core::classicality::ClassicalityReport> for ClassicalityReportJson {
    fn from(r: &combclassic_core::classicality::ClassicalityReport) -> Self {
        ClassicalityReportJson {
            pass: r.pass,
            worst_violation: r.worst_violation,
            witness: r.witness.as_ref().map(|w| WitnessJson {
                subset: w.subset.clone(),
                dropped_slot: w.dropped_slot,
                outcomes: w.outcomes.clone(),
            }),
            tol: r.tol,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct MeasureReportJson {
    #[serde(rename = "M")]
    pub measure: f64,
    #[serde(rename = "P_B")]
    pub bob_win_probability: f64,
    pub primal: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gap: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bound: Option<f64>,
    pub cap: usize,
    pub pivot_cap: usize,
}

pub fn to_pretty(v: &Value) -> String {
    serde_json::to_string_pretty(v).expect("serializable value")
}
