//! Point-list CSV: one point per line, comma-separated reals, no header.
//! Blank lines are skipped and lines starting with `#` are comments.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::metric::{CenterSet, Dataset};
use crate::sampler::SamplingTrace;
use crate::scalar::Scalar;

pub fn read_points<T: Scalar, R: Read>(reader: R) -> Result<Vec<Vec<T>>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut points = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.iter().all(str::is_empty) {
            continue;
        }
        let point = record
            .iter()
            .map(|field| {
                field
                    .parse::<f64>()
                    .ok()
                    .and_then(T::from_f64)
                    .ok_or_else(|| Error::Parse {
                        line,
                        message: format!("`{field}` is not a real number"),
                    })
            })
            .collect::<Result<Vec<T>>>()?;
        points.push(point);
    }
    Ok(points)
}

pub fn write_points<T: Scalar, W: Write, P: AsRef<[T]>>(writer: W, points: impl IntoIterator<Item = P>) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    for p in points {
        wtr.write_record(p.as_ref().iter().map(|c| c.to_string()))?;
    }
    wtr.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_dataset<T: Scalar>(path: impl AsRef<Path>) -> Result<Dataset<T>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Dataset::new(read_points(file)?)
}

pub fn read_centers<T: Scalar>(path: impl AsRef<Path>) -> Result<CenterSet<T>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    CenterSet::from_points(read_points(file)?)
}

pub fn write_centers<T: Scalar>(path: impl AsRef<Path>, cs: &CenterSet<T>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_points(file, cs.centers())
}

pub fn write_dataset<T: Scalar>(path: impl AsRef<Path>, ds: &Dataset<T>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_points(file, ds.points())
}

pub const TRACE_COLUMNS: [&str; 3] = ["step", "chosen_index", "phi_after"];

/// Writes a sampling trace with a `step,chosen_index,phi_after` header.
/// Steps count from 1.
pub fn write_trace<T: Scalar, W: Write>(writer: W, trace: &SamplingTrace<T>) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(TRACE_COLUMNS)?;
    for (step, (idx, phi)) in trace.chosen.iter().zip(&trace.phi_after).enumerate() {
        wtr.write_record([(step + 1).to_string(), idx.to_string(), phi.to_string()])?;
    }
    wtr.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn write_trace_file<T: Scalar>(path: impl AsRef<Path>, trace: &SamplingTrace<T>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_trace(file, trace)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn comments_and_blank_lines_are_skipped() {
        let text = "# header comment\n0, 1.5\n\n  2,-3e1 \n# trailing\n";
        let pts: Vec<Vec<f64>> = read_points(text.as_bytes()).unwrap();
        assert_eq!(pts, vec![vec![0.0, 1.5], vec![2.0, -30.0]]);
    }

    #[test]
    fn bad_field_reports_line() {
        let text = "1,2\n3,abc\n";
        let err = read_points::<f64, _>(text.as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn ragged_rows_fail_dataset_validation() {
        let pts: Vec<Vec<f64>> = read_points("1,2\n3\n".as_bytes()).unwrap();
        assert!(Dataset::new(pts).is_err());
    }

    #[test]
    fn write_then_read_preserves_values() {
        let pts = vec![vec![0.1_f64, -2.5], vec![1e-300, 3.0]];
        let mut buf = Vec::new();
        write_points(&mut buf, &pts).unwrap();
        let back: Vec<Vec<f64>> = read_points(buf.as_slice()).unwrap();
        assert_eq!(back, pts);
    }
}
