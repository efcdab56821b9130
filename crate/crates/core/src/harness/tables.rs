//! CSV readers and writers for every file the pipeline produces. All tables
//! carry a header row.

use std::path::Path;

use crate::datagen::LabeledTimestamp;
use crate::error::{Error, Result};
use crate::fusion::{AnomalyScore, Unscorable};
use crate::harness::eval::EvalReport;
use crate::harness::pca::PcaProjection;
use crate::label::Label;

pub const SCORE_HEADER: [&str; 6] = ["timestamp", "sigma_d", "sigma_m", "sigma_l", "N", "label"];
pub const PREDICTION_HEADER: [&str; 3] = ["timestamp", "angle_degrees", "sigma_l"];
pub const TRUTH_HEADER: [&str; 3] = ["timestamp", "label", "tilt_degrees"];
pub const REPORT_HEADER: [&str; 8] = ["tp", "fp", "tn", "fn", "accuracy", "precision", "recall", "f1"];

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        kind => Error::Parse {
            path: path.to_path_buf(),
            line,
            reason: format!("{kind:?}"),
        },
    }
}

fn writer(path: &Path, header: &[&str]) -> Result<csv::Writer<std::fs::File>> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(header).map_err(|e| csv_error(path, e))?;
    Ok(w)
}

fn write_rows<I>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut w = writer(path, header)?;
    for r in rows {
        w.write_record(&r).map_err(|e| csv_error(path, e))?;
    }
    w.flush()?;
    Ok(())
}

/// Rows of a headed CSV as strings, with their 1-based file line numbers.
fn read_rows(path: &Path, header: &[&str]) -> Result<Vec<(usize, csv::StringRecord)>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let found = r.headers().map_err(|e| csv_error(path, e))?.clone();
    if found.iter().map(str::trim).ne(header.iter().copied()) {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            reason: format!("expected header `{}`, found `{}`", header.join(","), found.iter().collect::<Vec<_>>().join(",")),
        });
    }
    r.records()
        .map(|rec| {
            let rec = rec.map_err(|e| csv_error(path, e))?;
            let line = rec.position().map_or(0, |p| p.line() as usize);
            Ok((line, rec))
        })
        .collect()
}

fn field<T: std::str::FromStr>(path: &Path, line: usize, rec: &csv::StringRecord, i: usize, name: &str) -> Result<T> {
    let raw = rec.get(i).map(str::trim).unwrap_or("");
    raw.parse().map_err(|_| Error::Parse {
        path: path.to_path_buf(),
        line,
        reason: format!("bad `{name}` value `{raw}`"),
    })
}

pub fn write_scores(path: impl AsRef<Path>, scores: &[AnomalyScore]) -> Result<()> {
    write_rows(
        path.as_ref(),
        &SCORE_HEADER,
        scores.iter().map(|s| {
            vec![
                s.timestamp.to_string(),
                s.sigma_data.to_string(),
                s.sigma_mag.to_string(),
                s.sigma_angle.to_string(),
                s.combined.to_string(),
                s.label.to_string(),
            ]
        }),
    )
}

pub fn read_scores(path: impl AsRef<Path>) -> Result<Vec<AnomalyScore>> {
    let path = path.as_ref();
    read_rows(path, &SCORE_HEADER)?
        .into_iter()
        .map(|(line, r)| {
            Ok(AnomalyScore {
                timestamp: field(path, line, &r, 0, "timestamp")?,
                sigma_data: field(path, line, &r, 1, "sigma_d")?,
                sigma_mag: field(path, line, &r, 2, "sigma_m")?,
                sigma_angle: field(path, line, &r, 3, "sigma_l")?,
                combined: field(path, line, &r, 4, "N")?,
                label: field(path, line, &r, 5, "label")?,
            })
        })
        .collect()
}

pub fn write_unscorable(path: impl AsRef<Path>, rows: &[Unscorable]) -> Result<()> {
    write_rows(
        path.as_ref(),
        &["timestamp", "missing"],
        rows.iter().map(|u| {
            vec![
                u.timestamp.to_string(),
                u.missing.iter().map(|m| m.as_str()).collect::<Vec<_>>().join(";"),
            ]
        }),
    )
}

/// Per-frame angle estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnglePrediction {
    pub timestamp: f64,
    pub angle_degrees: f32,
    pub sigma_l: f32,
}

pub fn write_predictions(path: impl AsRef<Path>, rows: &[AnglePrediction]) -> Result<()> {
    write_rows(
        path.as_ref(),
        &PREDICTION_HEADER,
        rows.iter()
            .map(|p| vec![p.timestamp.to_string(), p.angle_degrees.to_string(), p.sigma_l.to_string()]),
    )
}

pub fn read_predictions(path: impl AsRef<Path>) -> Result<Vec<AnglePrediction>> {
    let path = path.as_ref();
    read_rows(path, &PREDICTION_HEADER)?
        .into_iter()
        .map(|(line, r)| {
            Ok(AnglePrediction {
                timestamp: field(path, line, &r, 0, "timestamp")?,
                angle_degrees: field(path, line, &r, 1, "angle_degrees")?,
                sigma_l: field(path, line, &r, 2, "sigma_l")?,
            })
        })
        .collect()
}

pub fn write_truth(path: impl AsRef<Path>, rows: &[LabeledTimestamp]) -> Result<()> {
    write_rows(
        path.as_ref(),
        &TRUTH_HEADER,
        rows.iter()
            .map(|t| vec![t.timestamp.to_string(), t.label.to_string(), t.tilt_degrees.to_string()]),
    )
}

pub fn read_truth(path: impl AsRef<Path>) -> Result<Vec<LabeledTimestamp>> {
    let path = path.as_ref();
    read_rows(path, &TRUTH_HEADER)?
        .into_iter()
        .map(|(line, r)| {
            Ok(LabeledTimestamp {
                timestamp: field(path, line, &r, 0, "timestamp")?,
                label: field::<Label>(path, line, &r, 1, "label")?,
                tilt_degrees: field(path, line, &r, 2, "tilt_degrees")?,
            })
        })
        .collect()
}

pub fn write_report(path: impl AsRef<Path>, r: &EvalReport) -> Result<()> {
    write_rows(
        path.as_ref(),
        &REPORT_HEADER,
        [vec![
            r.true_positives.to_string(),
            r.false_positives.to_string(),
            r.true_negatives.to_string(),
            r.false_negatives.to_string(),
            r.accuracy.to_string(),
            r.precision.to_string(),
            r.recall.to_string(),
            r.f1.to_string(),
        ]],
    )
}

/// Numeric feature table. `timestamp` and `label` columns, when present, are
/// carried alongside rather than treated as features.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub timestamps: Option<Vec<f64>>,
    pub labels: Option<Vec<String>>,
}

pub fn write_features(path: impl AsRef<Path>, table: &FeatureTable) -> Result<()> {
    let mut header: Vec<&str> = Vec::new();
    if table.timestamps.is_some() {
        header.push("timestamp");
    }
    header.extend(table.columns.iter().map(String::as_str));
    if table.labels.is_some() {
        header.push("label");
    }
    write_rows(
        path.as_ref(),
        &header,
        table.rows.iter().enumerate().map(|(i, r)| {
            let mut rec = Vec::with_capacity(header.len());
            if let Some(ts) = &table.timestamps {
                rec.push(ts[i].to_string());
            }
            rec.extend(r.iter().map(f64::to_string));
            if let Some(ls) = &table.labels {
                rec.push(ls[i].clone());
            }
            rec
        }),
    )
}

pub fn read_features(path: impl AsRef<Path>) -> Result<FeatureTable> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let header: Vec<String> = r.headers().map_err(|e| csv_error(path, e))?.iter().map(|h| h.trim().to_string()).collect();
    let ts_col = header.iter().position(|h| h == "timestamp");
    let label_col = header.iter().position(|h| h == "label");
    let feature_cols: Vec<usize> = (0..header.len()).filter(|&i| Some(i) != ts_col && Some(i) != label_col).collect();
    let mut table = FeatureTable {
        columns: feature_cols.iter().map(|&i| header[i].clone()).collect(),
        rows: Vec::new(),
        timestamps: ts_col.map(|_| Vec::new()),
        labels: label_col.map(|_| Vec::new()),
    };
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if let (Some(c), Some(ts)) = (ts_col, table.timestamps.as_mut()) {
            ts.push(field(path, line, &rec, c, "timestamp")?);
        }
        if let (Some(c), Some(ls)) = (label_col, table.labels.as_mut()) {
            ls.push(rec.get(c).unwrap_or("").trim().to_string());
        }
        let row = feature_cols
            .iter()
            .map(|&c| field(path, line, &rec, c, &header[c]))
            .collect::<Result<Vec<f64>>>()?;
        table.rows.push(row);
    }
    Ok(table)
}

/// Projection rows `pc1..pck`, with timestamp and label passed through.
pub fn write_projection(path: impl AsRef<Path>, table: &FeatureTable, projection: &PcaProjection) -> Result<()> {
    let k = projection.components.len();
    let out = FeatureTable {
        columns: (1..=k).map(|i| format!("pc{i}")).collect(),
        rows: projection.projected.clone(),
        timestamps: table.timestamps.clone(),
        labels: table.labels.clone(),
    };
    write_features(path, &out)
}

pub fn write_explained_variance(path: impl AsRef<Path>, projection: &PcaProjection) -> Result<()> {
    write_rows(
        path.as_ref(),
        &["component", "explained_variance_ratio"],
        projection
            .explained_variance_ratio
            .iter()
            .enumerate()
            .map(|(i, r)| vec![format!("pc{}", i + 1), r.to_string()]),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scores_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("scores.csv");
        let scores = vec![AnomalyScore {
            timestamp: 0.1,
            sigma_data: 0.25,
            sigma_mag: 1.0 / 3.0,
            sigma_angle: 0.01,
            combined: 0.5575,
            label: Label::Normal,
        }];
        write_scores(&p, &scores).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("timestamp,sigma_d,sigma_m,sigma_l,N,label\n"));
        assert_eq!(read_scores(&p).unwrap(), scores);
    }

    #[test]
    fn truth_roundtrip_and_bad_row_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("truth.csv");
        let rows = vec![
            LabeledTimestamp { timestamp: 0.0, label: Label::Normal, tilt_degrees: 0.0 },
            LabeledTimestamp { timestamp: 0.1, label: Label::Abnormal, tilt_degrees: 47.5 },
        ];
        write_truth(&p, &rows).unwrap();
        assert_eq!(read_truth(&p).unwrap(), rows);
        std::fs::write(&p, "timestamp,label,tilt_degrees\n0,normal,0\n0.1,maybe,3\n").unwrap();
        match read_truth(&p) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn wrong_header_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        std::fs::write(&p, "a,b\n1,2\n").unwrap();
        assert!(matches!(read_scores(&p), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn features_keep_timestamp_and_label_aside() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.csv");
        std::fs::write(&p, "timestamp,x,label,y\n0,1.5,normal,2\n0.1,3,abnormal,4\n").unwrap();
        let t = read_features(&p).unwrap();
        assert_eq!(t.columns, vec!["x", "y"]);
        assert_eq!(t.rows, vec![vec![1.5, 2.0], vec![3.0, 4.0]]);
        assert_eq!(t.timestamps, Some(vec![0.0, 0.1]));
        assert_eq!(t.labels, Some(vec!["normal".to_string(), "abnormal".to_string()]));
    }
}
