//! Metrics CSV and model checkpoint files.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::federation::MetricsRow;
use crate::numkit::ParamVector;

pub const METRICS_HEADER: [&str; 9] = [
    "round",
    "iteration",
    "pers_train_loss",
    "pers_val_acc",
    "locglob_train_loss",
    "locglob_val_acc",
    "global_val_acc",
    "mean_alpha",
    "wallclock_ms",
];

/// Shortest decimal form of `x` rounded to 9 significant digits.
pub fn format_sig9(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    let rounded: f64 = format!("{x:.8e}").parse().expect("formatted float parses");
    let mag = rounded.abs();
    if rounded == 0.0 || (1e-5..1e15).contains(&mag) {
        format!("{rounded}")
    } else {
        format!("{rounded:e}")
    }
}

pub fn write_metrics_to<W: Write>(out: W, rows: &[MetricsRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::Format(e.to_string());
    w.write_record(METRICS_HEADER).map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.round.to_string(),
            r.iteration.to_string(),
            format_sig9(r.pers_train_loss),
            format_sig9(r.pers_val_acc),
            format_sig9(r.locglob_train_loss),
            format_sig9(r.locglob_val_acc),
            format_sig9(r.global_val_acc),
            format_sig9(r.mean_alpha),
            r.wallclock_ms.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Format(e.to_string()))
}

pub fn write_metrics(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_metrics_to(BufWriter::new(file), rows).map_err(|e| match e {
        Error::Format(m) => Error::io(path, std::io::Error::other(m)),
        other => other,
    })
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::Reader::from_reader(BufReader::new(file));
    let header = r.headers().map_err(|e| Error::Format(e.to_string()))?;
    if header.iter().ne(METRICS_HEADER) {
        return Err(Error::Format(format!("{}: unexpected metrics header", path.display())));
    }
    r.deserialize()
        .map(|row| row.map_err(|e| Error::Format(format!("{}: {e}", path.display()))))
        .collect()
}

const MAGIC: &[u8; 8] = b"APFLPARM";
const VERSION: u32 = 1;

/// Writes `APFLPARM`, a `u32` version and a `u32` vector count, then each
/// vector as a `u64` length followed by its `f64` entries, all little-endian.
pub fn write_models(path: &Path, models: &[ParamVector]) -> Result<()> {
    let count = u32::try_from(models.len()).map_err(|_| Error::invalid("too many vectors for a checkpoint"))?;
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&count.to_le_bytes());
    for m in models {
        buf.extend_from_slice(&(m.len() as u64).to_le_bytes());
        for x in m.as_slice() {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn read_models(path: &Path) -> Result<Vec<ParamVector>> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let bad = |m: &str| Error::Format(format!("{}: {m}", path.display()));
    let mut rest = bytes.as_slice();
    let mut take = |n: usize| -> Result<&[u8]> {
        if rest.len() < n {
            return Err(bad("truncated checkpoint"));
        }
        let (head, tail) = rest.split_at(n);
        rest = tail;
        Ok(head)
    };
    if take(8)? != MAGIC {
        return Err(bad("not a checkpoint (bad magic)"));
    }
    let version = u32::from_le_bytes(take(4)?.try_into().unwrap());
    if version != VERSION {
        return Err(bad(&format!("unsupported checkpoint version {version}")));
    }
    let count = u32::from_le_bytes(take(4)?.try_into().unwrap());
    let mut out = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let len = u64::from_le_bytes(take(8)?.try_into().unwrap());
        let len = usize::try_from(len).map_err(|_| bad("vector too long"))?;
        let raw = take(len.checked_mul(8).ok_or_else(|| bad("vector too long"))?)?;
        let values = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        out.push(ParamVector::new(values)?);
    }
    if !rest.is_empty() {
        return Err(bad("trailing bytes after checkpoint"));
    }
    Ok(out)
}
