use std::io::{Read, Write};

use super::{GridReport, NmaxPoint, PredictionRow};
use crate::error::{Error, Result};

pub fn write_predictions_csv<W: Write>(w: W, rows: &[PredictionRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["repetition", "specimen_id", "rule", "predicted", "true", "n_images"])?;
    for r in rows {
        out.write_record([
            r.repetition.to_string(),
            r.specimen_id.clone(),
            r.rule.to_string(),
            r.predicted.clone(),
            r.truth.clone(),
            r.n_images.to_string(),
        ])?;
    }
    out.flush().map_err(|e| Error::io("predictions", e))
}

/// Square matrix with a `true\predicted` corner cell, species names as the
/// header row and first column.
pub fn write_confusion_csv<W: Write>(w: W, classes: &[String], matrix: &[Vec<f64>]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["true\\predicted".to_owned()];
    header.extend(classes.iter().cloned());
    out.write_record(&header)?;
    for (name, row) in classes.iter().zip(matrix) {
        let mut rec = vec![name.clone()];
        rec.extend(row.iter().map(|v| v.to_string()));
        out.write_record(&rec)?;
    }
    out.flush().map_err(|e| Error::io("confusion", e))
}

pub fn read_confusion_csv<R: Read>(r: R) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut rdr = csv::Reader::from_reader(r);
    let classes: Vec<String> = rdr.headers()?.iter().skip(1).map(str::to_owned).collect();
    let mut matrix = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.get(0) != classes.get(i).map(String::as_str) {
            return Err(Error::Data(format!("confusion row {i} is not labelled `{:?}`", classes.get(i))));
        }
        let row = rec
            .iter()
            .skip(1)
            .map(|v| v.parse::<f64>().map_err(|e| Error::Data(format!("confusion cell `{v}`: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        if row.len() != classes.len() {
            return Err(Error::Data(format!("confusion row {i} has {} cells", row.len())));
        }
        matrix.push(row);
    }
    if matrix.len() != classes.len() {
        return Err(Error::Data("confusion matrix is not square".into()));
    }
    Ok((classes, matrix))
}

pub fn write_curve_csv<W: Write>(w: W, points: &[NmaxPoint]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["n_max", "mean", "std"])?;
    for p in points {
        let n = p.n_max.map_or_else(|| "inf".to_owned(), |n| n.to_string());
        out.write_record([n, p.mean.to_string(), p.std.to_string()])?;
    }
    out.flush().map_err(|e| Error::io("curve", e))
}

pub fn write_grid_csv<W: Write>(w: W, grid: &GridReport) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["aperture", "exposure_us", "mean", "std", "best"])?;
    for (r, a) in grid.apertures.iter().enumerate() {
        for (c, e) in grid.exposures.iter().enumerate() {
            if let Some(cell) = grid.cells[r][c] {
                out.write_record([
                    format!("1:{a}"),
                    e.to_string(),
                    cell.mean.to_string(),
                    cell.std.to_string(),
                    (grid.best == (r, c)).to_string(),
                ])?;
            }
        }
    }
    out.flush().map_err(|e| Error::io("grid", e))
}

/// Percentages with standard deviations; the best cell in bold.
pub fn write_grid_markdown<W: Write>(mut w: W, grid: &GridReport) -> Result<()> {
    let io = |e| Error::io("grid markdown", e);
    let mut header = String::from("| aperture |");
    let mut rule = String::from("|---|");
    for e in &grid.exposures {
        header.push_str(&format!(" {e} us |"));
        rule.push_str("---|");
    }
    writeln!(w, "{header}").map_err(io)?;
    writeln!(w, "{rule}").map_err(io)?;
    for (r, a) in grid.apertures.iter().enumerate() {
        let mut line = format!("| 1:{a} |");
        for c in 0..grid.exposures.len() {
            let text = match grid.cells[r][c] {
                None => "n/a".to_owned(),
                Some(cell) => {
                    let t = format!("{:.1} ± {:.1}", 100.0 * cell.mean, 100.0 * cell.std);
                    if grid.best == (r, c) {
                        format!("**{t}**")
                    } else {
                        t
                    }
                }
            };
            line.push_str(&format!(" {text} |"));
        }
        writeln!(w, "{line}").map_err(io)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::CellSummary;

    #[test]
    fn confusion_round_trips() {
        let classes = vec!["Bembidion grapii".to_owned(), "B, with comma".to_owned()];
        let m = vec![vec![0.9, 0.1], vec![1.0 / 3.0, 2.0 / 3.0]];
        let mut buf = Vec::new();
        write_confusion_csv(&mut buf, &classes, &m).unwrap();
        let (c, back) = read_confusion_csv(buf.as_slice()).unwrap();
        assert_eq!(c, classes);
        assert_eq!(back, m);
    }

    #[test]
    fn markdown_marks_best_cell() {
        let cell = |m| Some(CellSummary { mean: m, std: 0.01 });
        let grid = GridReport {
            apertures: vec![3.8, 8.0],
            exposures: vec![1000, 2000],
            cells: vec![vec![cell(0.5), cell(0.6)], vec![cell(0.7), None]],
            best: (1, 0),
            reports: Vec::new(),
        };
        let mut buf = Vec::new();
        write_grid_markdown(&mut buf, &grid).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("**70.0 ± 1.0**"), "{text}");
        assert!(text.contains("n/a"));
        assert_eq!(text.matches("**").count(), 2);
    }

    #[test]
    fn curve_writes_inf() {
        let p = |n| NmaxPoint {
            n_max: n,
            mean: 0.5,
            std: 0.0,
            accuracies: vec![0.5],
        };
        let mut buf = Vec::new();
        write_curve_csv(&mut buf, &[p(Some(3)), p(None)]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.lines().last().unwrap().starts_with("inf,"));
    }
}
