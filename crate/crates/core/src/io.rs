//! CSV point dumps shared by the explorer and the baselines.
//!
//! Schema: `kind,parent,coord_0,...,coord_{D-1}`. `parent` is empty for
//! points without a tree parent.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PointRow {
    pub kind: String,
    pub parent: Option<usize>,
    pub coords: Vec<f64>,
}

pub fn points_header(dim: usize) -> Vec<String> {
    let mut h = vec!["kind".to_string(), "parent".to_string()];
    h.extend((0..dim).map(|i| format!("coord_{i}")));
    h
}

pub fn points_to_csv(rows: &[PointRow], dim: usize) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(points_header(dim))?;
    for r in rows {
        if r.coords.len() != dim {
            return Err(Error::Dimension {
                what: "point",
                expected: dim,
                found: r.coords.len(),
            });
        }
        let mut rec = vec![
            r.kind.clone(),
            r.parent.map(|p| p.to_string()).unwrap_or_default(),
        ];
        rec.extend(r.coords.iter().map(|c| c.to_string()));
        w.write_record(&rec)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Format {
        what: "points csv".into(),
        reason: e.to_string(),
    })?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn points_from_csv(text: &str) -> Result<Vec<PointRow>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let headers = r.headers()?.clone();
    let dim = headers.len().saturating_sub(2);
    if headers.get(0) != Some("kind") || headers.get(1) != Some("parent") {
        return Err(Error::Format {
            what: "points csv".into(),
            reason: "header must start with kind,parent".into(),
        });
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let bad = |reason: String| Error::Format {
            what: "points csv".into(),
            reason,
        };
        let parent = match rec.get(1).unwrap_or("") {
            "" => None,
            s => Some(s.parse::<usize>().map_err(|e| bad(format!("parent `{s}`: {e}")))?),
        };
        let coords = (0..dim)
            .map(|i| {
                let s = rec.get(i + 2).unwrap_or("");
                s.parse::<f64>().map_err(|e| bad(format!("coordinate `{s}`: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(PointRow {
            kind: rec.get(0).unwrap_or("").to_string(),
            parent,
            coords,
        });
    }
    Ok(rows)
}

pub fn write_points(path: &Path, rows: &[PointRow], dim: usize) -> Result<()> {
    fs::write(path, points_to_csv(rows, dim)?).map_err(|e| Error::io(path, e))
}

pub fn read_points(path: &Path) -> Result<Vec<PointRow>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    points_from_csv(&text)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout() {
        assert_eq!(
            points_header(3),
            vec!["kind", "parent", "coord_0", "coord_1", "coord_2"]
        );
    }

    #[test]
    fn rows_survive_text_form() {
        let rows = vec![
            PointRow { kind: "accepted".into(), parent: None, coords: vec![0.1, -2.5] },
            PointRow { kind: "accepted".into(), parent: Some(0), coords: vec![1.0 / 3.0, 1e-300] },
            PointRow { kind: "rejected".into(), parent: None, coords: vec![f64::MIN_POSITIVE, 7.0] },
        ];
        let text = points_to_csv(&rows, 2).unwrap();
        assert!(text.starts_with("kind,parent,coord_0,coord_1\naccepted,,0.1,-2.5\n"));
        assert_eq!(points_from_csv(&text).unwrap(), rows);
    }

    #[test]
    fn bad_rows_are_reported() {
        assert!(points_from_csv("x,y\n").is_err());
        assert!(points_from_csv("kind,parent,coord_0\naccepted,,abc\n").is_err());
        assert!(points_to_csv(
            &[PointRow { kind: "a".into(), parent: None, coords: vec![1.0] }],
            2
        )
        .is_err());
    }
}
