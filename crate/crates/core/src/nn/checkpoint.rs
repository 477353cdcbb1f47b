//! Text checkpoints: JSON with a format version, the segment layout and the
//! flat values. Values are written in shortest round-trip decimal form, so a
//! save/load cycle reproduces every bit.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::params::{ParamVector, Segment};
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Document {
    format_version: u32,
    layout: Vec<Segment>,
    values: Vec<f64>,
}

pub fn to_string(params: &ParamVector) -> Result<String> {
    if let Some((name, idx, value)) = params.first_non_finite() {
        return Err(Error::NonFinite {
            context: "checkpoint",
            detail: format!("{name}[{idx}] = {value}"),
        });
    }
    let doc = Document {
        format_version: CHECKPOINT_FORMAT_VERSION,
        layout: params.layout().to_vec(),
        values: params.values().to_vec(),
    };
    serde_json::to_string_pretty(&doc).map_err(|e| Error::Checkpoint(e.to_string()))
}

pub fn from_str(text: &str) -> Result<ParamVector> {
    let doc: Document = serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))?;
    if doc.format_version != CHECKPOINT_FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported format version {} (expected {CHECKPOINT_FORMAT_VERSION})",
            doc.format_version
        )));
    }
    ParamVector::from_values(doc.layout, doc.values)
        .map_err(|e| Error::Checkpoint(e.to_string()))
}

pub fn save(path: &Path, params: &ParamVector) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, to_string(params)?)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<ParamVector> {
    from_str(&fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(values in proptest::collection::vec(-1e300f64..1e300, 1..40)) {
            let n = values.len();
            let p = ParamVector::from_values(vec![Segment::new("x", vec![n])], values).unwrap();
            let back = from_str(&to_string(&p).unwrap()).unwrap();
            prop_assert_eq!(p.layout(), back.layout());
            for (a, b) in p.values().iter().zip(back.values()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn tiny_and_negative_zero_survive() {
        let vals = vec![5e-324, -0.0, 1.0 / 3.0, f64::MAX];
        let p = ParamVector::from_values(vec![Segment::new("x", vec![2, 2])], vals.clone()).unwrap();
        let back = from_str(&to_string(&p).unwrap()).unwrap();
        for (a, b) in vals.iter().zip(back.values()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn rejects_bad_documents() {
        let p = ParamVector::from_values(vec![Segment::new("x", vec![1])], vec![f64::NAN]).unwrap();
        assert!(to_string(&p).is_err());
        assert!(from_str("{}").is_err());
        let wrong_version = r#"{"format_version": 9, "layout": [], "values": []}"#;
        assert!(from_str(wrong_version).is_err());
        let wrong_len = r#"{"format_version": 1, "layout": [{"name":"x","shape":[2]}], "values": [1.0]}"#;
        assert!(from_str(wrong_len).is_err());
    }
}
