//! IO companion to `combclassic-core`: JSON schemas for combs,
//! dilations, instruments and reports, plus the named scenarios the CLI
//! exposes.

pub mod json;
pub mod scenario;

use std::fs;
use std::io::Write;
use std::path::Path;

/// Atomic file write: write to a sibling temp file, then rename.
pub fn write_atomic(path: &Path, contents: &str) -> std::io::Result<()> {
    let tmp = path.with_extension("tmp~");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents.as_bytes())?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

/// Parse a CLI instrument spec: a named builtin, "bloch:r0,rx,ry,rz",
/// or a path to an instrument JSON document.
pub fn parse_instrument_spec(
    spec: &str,
    dim: usize,
) -> Result<combclassic_core::instrument::Instrument, String> {
    use combclassic_core::instrument::{
        dephasing_choi, identity_choi, projective_instrument, BlochPovm, Instrument,
    };
    match spec {
        "projective" => Ok(projective_instrument(dim)),
        "dephasing" => {
            let c = dephasing_choi(dim);
            Instrument::new(vec![c], dim, vec!["dephased".to_string()])
                .map_err(|e| e.to_string())
        }
        "identity" => {
            let c = identity_choi(dim);
            Instrument::new(vec![c], dim, vec!["untouched".to_string()])
                .map_err(|e| e.to_string())
        }
        other if other.starts_with("bloch:") => {
            if dim != 2 {
                return Err("bloch POVMs are qubit instruments".to_string());
            }
            let nums: Vec<f64> = other["bloch:".len()..]
                .split(',')
                .map(|s| s.trim().parse::<f64>().map_err(|e| e.to_string()))
                .collect::<Result<_, _>>()?;
            if nums.len() != 4 {
                return Err("bloch spec needs r0,rx,ry,rz".to_string());
            }
            let povm = BlochPovm::new(nums[0], [nums[1], nums[2], nums[3]])
                .map_err(|e| e.to_string())?;
            povm.instrument().map_err(|e| e.to_string())
        }
        path => {
            let text = fs::read_to_string(path)
                .map_err(|e| format!("cannot read instrument {:?}: {}", path, e))?;
            let value: serde_json::Value =
                serde_json::from_str(&text).map_err(|e| e.to_string())?;
            json::instrument_from_json(&value).map_err(|e| e.to_string())
        }
    }
}
