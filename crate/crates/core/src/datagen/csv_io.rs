use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numkit::Matrix;

/// Reads headerless rows `label,feat_0,...,feat_{d-1}`.
pub fn load_csv_dataset(path: impl AsRef<Path>) -> Result<(Matrix, Vec<usize>)> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_csv(file)
}

pub(crate) fn parse_csv(reader: impl std::io::Read) -> Result<(Matrix, Vec<usize>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut labels = Vec::new();
    let mut data = Vec::new();
    let mut width: Option<usize> = None;
    for record in rdr.records() {
        let record = record.map_err(|e| Error::MalformedRow {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let malformed = |message: String| Error::MalformedRow { line, message };
        if record.len() < 2 {
            return Err(malformed("expected a label and at least one feature".into()));
        }
        let d = record.len() - 1;
        match width {
            None => width = Some(d),
            Some(w) if w != d => {
                return Err(malformed(format!("expected {w} features, found {d}")));
            }
            _ => {}
        }
        let label: usize = record[0]
            .parse()
            .map_err(|_| malformed(format!("label {:?} is not a non-negative integer", &record[0])))?;
        labels.push(label);
        for field in record.iter().skip(1) {
            let v: f64 = field
                .parse()
                .map_err(|_| malformed(format!("feature {field:?} is not a number")))?;
            if !v.is_finite() {
                return Err(malformed(format!("feature {field:?} is not finite")));
            }
            data.push(v);
        }
    }
    let Some(d) = width else {
        return Err(Error::EmptyDataset);
    };
    Ok((Matrix::from_vec(labels.len(), d, data)?, labels))
}

/// Writes rows in the format read by [`load_csv_dataset`], with shortest
/// round-trip float formatting.
pub fn write_csv_dataset(path: impl AsRef<Path>, features: &Matrix, labels: &[usize]) -> Result<()> {
    let path = path.as_ref();
    if features.rows() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: features.rows(),
            got: labels.len(),
        });
    }
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    for (r, label) in labels.iter().enumerate() {
        let mut line = label.to_string();
        for v in features.row(r) {
            line.push(',');
            line.push_str(&v.to_string());
        }
        line.push('\n');
        out.write_all(line.as_bytes()).map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_row() {
        let (x, y) = parse_csv("1,0.5,0.25\n".as_bytes()).unwrap();
        assert_eq!(y, vec![1]);
        assert_eq!(x.rows(), 1);
        assert_eq!(x.row(0), &[0.5, 0.25]);
    }

    #[test]
    fn empty_file() {
        assert!(matches!(parse_csv("".as_bytes()), Err(Error::EmptyDataset)));
    }

    #[test]
    fn width_mismatch_names_line() {
        let err = parse_csv("0,1,2\n1,3,4\n0,5\n".as_bytes()).unwrap_err();
        match err {
            Error::MalformedRow { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        assert!(parse_csv("0,1,2\n1,3,4\n0,5\n".as_bytes())
            .unwrap_err()
            .to_string()
            .starts_with("line 3"));
    }

    #[test]
    fn bad_label() {
        for text in ["-1,0.5\n", "a,0.5\n", "1.5,0.5\n"] {
            assert!(matches!(parse_csv(text.as_bytes()), Err(Error::MalformedRow { line: 1, .. })));
        }
    }

    #[test]
    fn write_then_read() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        let x = Matrix::from_rows(&[vec![0.1, -2.5e-7], vec![3.0, 1.0 / 3.0]]).unwrap();
        write_csv_dataset(&p, &x, &[2, 0]).unwrap();
        let (x2, y2) = load_csv_dataset(&p).unwrap();
        assert_eq!(x2, x);
        assert_eq!(y2, vec![2, 0]);
    }

    #[test]
    fn missing_file_names_path() {
        let err = load_csv_dataset("/nonexistent/data.csv").unwrap_err();
        assert!(err.to_string().contains("/nonexistent/data.csv"));
    }
}
