use crate::error::{Error, Result};
use crate::graph::{Point, NUM_LANDMARKS};
use std::path::Path;

fn header() -> Vec<String> {
    let mut h = vec!["frame".to_string()];
    for k in 0..NUM_LANDMARKS {
        h.push(format!("x{k}"));
        h.push(format!("y{k}"));
    }
    h
}

/// Read a per-frame 68-point landmark CSV. Rows must be numbered `0..N` in order.
pub fn read_landmarks(path: &Path) -> Result<Vec<Vec<Point>>> {
    if !path.is_file() {
        return Err(Error::LandmarksNotFound(path.to_path_buf()));
    }
    let mut rdr = csv::Reader::from_path(path)?;
    let expected = header();
    let got: Vec<String> = rdr.headers()?.iter().map(|s| s.trim().to_string()).collect();
    if got != expected {
        return Err(Error::Parse(format!("{}: unexpected landmark header", path.display())));
    }
    let mut frames = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let parse = |i: usize| -> Result<f64> {
            rec[i]
                .trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Parse(format!("{}: row {row}, column {i}", path.display())))
        };
        let frame = parse(0)?;
        if frame != row as f64 {
            return Err(Error::Parse(format!(
                "{}: expected frame {row}, found {frame}",
                path.display()
            )));
        }
        let pts = (0..NUM_LANDMARKS)
            .map(|k| Ok((parse(1 + 2 * k)?, parse(2 + 2 * k)?)))
            .collect::<Result<Vec<_>>>()?;
        frames.push(pts);
    }
    Ok(frames)
}

pub fn write_landmarks(path: &Path, frames: &[Vec<Point>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header())?;
    for (i, pts) in frames.iter().enumerate() {
        if pts.len() != NUM_LANDMARKS {
            return Err(Error::InvalidArgument(format!("frame {i} has {} landmarks", pts.len())));
        }
        let mut rec = vec![i.to_string()];
        for (x, y) in pts {
            rec.push(format!("{x:.4}"));
            rec.push(format!("{y:.4}"));
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
