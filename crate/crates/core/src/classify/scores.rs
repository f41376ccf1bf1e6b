//! Adapter for per-image probabilities produced outside this crate
//! (e.g. by a fine-tuned CNN). CSV layout: `image_id,p_0,...,p_{K-1}`.

use std::collections::{BTreeMap, HashSet};
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::confidence::ConfidenceVector;
use crate::dataset::Dataset;
use crate::error::{Error, Result};

/// Rows whose probabilities sum further than this from one are rejected.
pub const ROW_SUM_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RejectedRow {
    /// 1-based line number in the file, header included.
    pub line: u64,
    pub image_id: Option<String>,
    pub reason: String,
}

#[derive(Clone, Debug, Default)]
pub struct ExternalScores {
    pub vectors: BTreeMap<String, ConfidenceVector>,
    pub rejected: Vec<RejectedRow>,
    /// Dataset images without a score row.
    pub missing: Vec<String>,
}

pub fn load_external_scores<R: Read>(reader: R, ds: &Dataset) -> Result<ExternalScores> {
    let k = ds.num_classes();
    let known: HashSet<&str> = ds
        .specimens
        .iter()
        .flat_map(|s| s.frames.iter().map(|f| f.image_id.as_str()))
        .collect();
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.get(0) != Some("image_id") || headers.len() != k + 1 {
        return Err(Error::Data(format!(
            "score file header must be image_id,p_0,...,p_{}; got {} columns",
            k.saturating_sub(1),
            headers.len()
        )));
    }
    let mut out = ExternalScores::default();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let image_id = record.get(0).map(str::to_owned);
        let reject = |reason: String| RejectedRow {
            line,
            image_id: image_id.clone(),
            reason,
        };
        let Some(id) = image_id.as_deref() else {
            out.rejected.push(reject("empty row".into()));
            continue;
        };
        if !known.contains(id) {
            out.rejected.push(reject(format!("unknown image_id `{id}`")));
            continue;
        }
        if record.len() != k + 1 {
            out.rejected
                .push(reject(format!("expected {k} probabilities, got {}", record.len() - 1)));
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> =
            record.iter().skip(1).map(|s| s.trim().parse::<f64>()).collect();
        let probs = match parsed {
            Ok(p) => p,
            Err(e) => {
                out.rejected.push(reject(format!("unparsable probability: {e}")));
                continue;
            }
        };
        match ConfidenceVector::renormalized(probs, ROW_SUM_TOLERANCE) {
            Ok(v) => {
                if out.vectors.insert(id.to_owned(), v).is_some() {
                    out.rejected.push(reject(format!("duplicate image_id `{id}`, later row kept")));
                }
            }
            Err(e) => out.rejected.push(reject(e.to_string())),
        }
    }
    let mut missing: Vec<String> = known
        .into_iter()
        .filter(|id| !out.vectors.contains_key(*id))
        .map(str::to_owned)
        .collect();
    missing.sort();
    out.missing = missing;
    Ok(out)
}

/// Write vectors in the score-file layout.
pub fn write_scores<W: std::io::Write>(
    writer: W,
    k: usize,
    rows: impl IntoIterator<Item = (String, ConfidenceVector)>,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["image_id".to_owned()];
    header.extend((0..k).map(|i| format!("p_{i}")));
    w.write_record(&header)?;
    for (id, v) in rows {
        let mut rec = vec![id];
        rec.extend(v.probs().iter().map(|p| p.to_string()));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("<scores>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::fixtures::specimen;
    use crate::dataset::{CameraSettings, LabelRegistry};

    fn ds10() -> Dataset {
        let mut ds = Dataset::new(
            CameraSettings::default(),
            LabelRegistry::new(["A", "B"]).unwrap(),
        );
        ds.specimens = vec![specimen("s1", 0, 5), specimen("s2", 1, 5)];
        ds
    }

    fn file(rows: &[&str]) -> String {
        let mut s = String::from("image_id,p_0,p_1\n");
        for r in rows {
            s.push_str(r);
            s.push('\n');
        }
        s
    }

    fn all_rows() -> Vec<String> {
        (0..5)
            .flat_map(|k| [format!("s1_{k},0.9,0.1"), format!("s2_{k},0.25,0.75")])
            .collect()
    }

    #[test]
    fn exact_file_loads_cleanly() {
        let rows = all_rows();
        let refs: Vec<&str> = rows.iter().map(String::as_str).collect();
        let s = load_external_scores(file(&refs).as_bytes(), &ds10()).unwrap();
        assert_eq!(s.vectors.len(), 10);
        assert!(s.rejected.is_empty() && s.missing.is_empty());
    }

    #[test]
    fn bad_sum_is_rejected_with_line_number() {
        let mut rows = all_rows();
        rows[3] = "s2_1,0.4,0.4".into();
        let refs: Vec<&str> = rows.iter().map(String::as_str).collect();
        let s = load_external_scores(file(&refs).as_bytes(), &ds10()).unwrap();
        assert_eq!(s.rejected.len(), 1);
        assert_eq!(s.rejected[0].line, 5);
        assert_eq!(s.missing, vec!["s2_1".to_owned()]);
    }

    #[test]
    fn missing_and_unknown_rows_are_reported() {
        let mut rows = all_rows();
        rows.pop();
        rows.push("ghost,0.5,0.5".into());
        let refs: Vec<&str> = rows.iter().map(String::as_str).collect();
        let s = load_external_scores(file(&refs).as_bytes(), &ds10()).unwrap();
        assert_eq!(s.vectors.len(), 9);
        assert_eq!(s.missing, vec!["s2_4".to_owned()]);
        assert_eq!(s.rejected.len(), 1);
        assert!(s.rejected[0].reason.contains("unknown"));
    }

    #[test]
    fn wrong_header_is_an_error() {
        let text = "id,a\nx,1\n";
        assert!(load_external_scores(text.as_bytes(), &ds10()).is_err());
    }

    #[test]
    fn near_one_sums_are_renormalised() {
        let mut rows = all_rows();
        rows[0] = "s1_0,0.9000004,0.1".into();
        let refs: Vec<&str> = rows.iter().map(String::as_str).collect();
        let s = load_external_scores(file(&refs).as_bytes(), &ds10()).unwrap();
        let v = &s.vectors["s1_0"];
        assert!((v.probs().iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn write_then_load() {
        let ds = ds10();
        let mut buf = Vec::new();
        let rows = ds.specimens.iter().flat_map(|s| {
            s.frames
                .iter()
                .map(|f| (f.image_id.clone(), ConfidenceVector::new(vec![0.375, 0.625]).unwrap()))
        });
        write_scores(&mut buf, 2, rows).unwrap();
        let s = load_external_scores(buf.as_slice(), &ds).unwrap();
        assert_eq!(s.vectors.len(), 10);
    }
}
