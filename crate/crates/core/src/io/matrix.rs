//! Matrix files.
//!
//! Binary layout (little-endian): `b"MKSM"`, `u32` version, `u64` rows,
//! `u64` cols, then `rows * cols` `f64` values in row-major order. Plain
//! comma-separated text is accepted for matrices up to 2000 x 2000.

use std::path::Path;

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"MKSM";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 24;
/// Largest row or column count accepted in CSV form.
pub const CSV_MAX_DIM: usize = 2000;

pub fn encode_mksm(a: ArrayView2<'_, f64>) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * a.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(a.nrows() as u64).to_le_bytes());
    out.extend_from_slice(&(a.ncols() as u64).to_le_bytes());
    for v in a.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_mksm(bytes: &[u8]) -> Result<Array2<f64>> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format(format!("matrix file too short ({} bytes)", bytes.len())));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let rows = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
    let cols = u64::from_le_bytes(bytes[16..24].try_into().expect("8 bytes"));
    let payload = &bytes[HEADER_LEN..];
    let expected = rows
        .checked_mul(cols)
        .and_then(|c| c.checked_mul(8))
        .filter(|&len| len == payload.len() as u64)
        .ok_or_else(|| {
            Error::Format(format!(
                "{rows}x{cols} header does not match {} payload bytes",
                payload.len()
            ))
        })?;
    let (rows, cols) = (rows as usize, cols as usize);
    debug_assert_eq!(expected as usize, payload.len());
    let values: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Array2::from_shape_vec((rows, cols), values).map_err(|e| Error::Format(e.to_string()))
}

/// Comma-separated rows. Blank lines and `#` comments are skipped.
pub fn parse_csv(text: &str) -> Result<Array2<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut values = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for record in reader.records() {
        let record = record.map_err(|e| Error::Format(e.to_string()))?;
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        match cols {
            None => cols = Some(record.len()),
            Some(c) if c != record.len() => {
                return Err(Error::Format(format!(
                    "row {} has {} fields, expected {c}",
                    rows + 1,
                    record.len()
                )))
            }
            _ => {}
        }
        rows += 1;
        if rows > CSV_MAX_DIM || record.len() > CSV_MAX_DIM {
            return Err(Error::Format(format!("CSV matrices are limited to {CSV_MAX_DIM}x{CSV_MAX_DIM}")));
        }
        for field in record.iter() {
            let v: f64 = field
                .parse()
                .map_err(|_| Error::Format(format!("row {rows}: not a number: {field:?}")))?;
            values.push(v);
        }
    }
    let cols = cols.unwrap_or(0);
    Array2::from_shape_vec((rows, cols), values).map_err(|e| Error::Format(e.to_string()))
}

/// CSV text whose numbers parse back to the same bits.
pub fn to_csv(a: ArrayView2<'_, f64>) -> String {
    let mut out = String::new();
    for row in a.rows() {
        let fields: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

/// Decodes either format, choosing by the magic bytes.
pub fn decode_matrix(bytes: &[u8]) -> Result<Array2<f64>> {
    if bytes.starts_with(MAGIC) {
        decode_mksm(bytes)
    } else {
        let text = std::str::from_utf8(bytes).map_err(|_| Error::Format("neither MKSM nor UTF-8 text".into()))?;
        parse_csv(text)
    }
}

pub fn read_matrix(path: &Path) -> Result<Array2<f64>> {
    let bytes = std::fs::read(path)?;
    decode_matrix(&bytes).map_err(|e| match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Writes CSV when the extension is `.csv`, the binary format otherwise.
pub fn write_matrix(path: &Path, a: ArrayView2<'_, f64>) -> Result<()> {
    let is_csv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if is_csv {
        if a.nrows() > CSV_MAX_DIM || a.ncols() > CSV_MAX_DIM {
            return Err(Error::InvalidParameter(format!(
                "CSV output is limited to {CSV_MAX_DIM}x{CSV_MAX_DIM}"
            )));
        }
        atomic_write(path, to_csv(a).as_bytes())
    } else {
        atomic_write(path, &encode_mksm(a))
    }
}

/// Writes to a temporary file in the target directory, then renames it.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    use std::io::Write;
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let bytes = encode_mksm(array![[1.0, 2.0, 3.0]].view());
        assert_eq!(&bytes[..4], b"MKSM");
        assert_eq!(&bytes[4..8], &[1, 0, 0, 0]);
        assert_eq!(&bytes[8..16], &1u64.to_le_bytes());
        assert_eq!(&bytes[16..24], &3u64.to_le_bytes());
        assert_eq!(&bytes[24..32], &1.0f64.to_le_bytes());
        assert_eq!(bytes.len(), 24 + 3 * 8);
    }

    #[test]
    fn rejects_bad_headers() {
        let good = encode_mksm(array![[1.0, 2.0], [3.0, 4.0]].view());
        assert!(decode_mksm(&good[..10]).is_err());
        assert!(decode_mksm(&good[..good.len() - 1]).is_err());
        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(decode_mksm(&bad).is_err());
        let mut bad = good.clone();
        bad[4] = 2;
        assert!(decode_mksm(&bad).is_err());
        let mut bad = good;
        bad[8..16].copy_from_slice(&u64::MAX.to_le_bytes());
        assert!(decode_mksm(&bad).is_err());
    }

    #[test]
    fn csv_parsing() {
        let m = parse_csv("# header\n1, 2.5\n\n-3e-2,4\n").unwrap();
        assert_eq!(m, array![[1.0, 2.5], [-0.03, 4.0]]);
        assert!(parse_csv("1,2\n3\n").is_err());
        assert!(parse_csv("1,x\n").is_err());
        assert_eq!(parse_csv("").unwrap().dim(), (0, 0));
    }

    #[test]
    fn sniffs_format() {
        let a = array![[0.1, 0.2], [0.3, 0.4]];
        assert_eq!(decode_matrix(&encode_mksm(a.view())).unwrap(), a);
        assert_eq!(decode_matrix(to_csv(a.view()).as_bytes()).unwrap(), a);
    }

    #[test]
    fn files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let a = array![[1.0 / 3.0, -0.0], [f64::MIN_POSITIVE, 1e300]];
        for name in ["m.mksm", "m.csv"] {
            let p = dir.path().join(name);
            write_matrix(&p, a.view()).unwrap();
            let b = read_matrix(&p).unwrap();
            for (x, y) in a.iter().zip(b.iter()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    proptest! {
        #[test]
        fn bitwise_round_trip(rows in 0usize..5, cols in 0usize..5, bits in prop::collection::vec(any::<u64>(), 25)) {
            let a = Array2::from_shape_fn((rows, cols), |(i, j)| {
                let v = f64::from_bits(bits[i * 5 + j]);
                if v.is_finite() { v } else { 0.5 }
            });
            let bin = decode_mksm(&encode_mksm(a.view())).unwrap();
            prop_assert_eq!(bin.dim(), a.dim());
            for (x, y) in a.iter().zip(bin.iter()) {
                prop_assert_eq!(x.to_bits(), y.to_bits());
            }
            if rows > 0 && cols > 0 {
                let text = parse_csv(&to_csv(a.view())).unwrap();
                for (x, y) in a.iter().zip(text.iter()) {
                    prop_assert_eq!(x.to_bits(), y.to_bits());
                }
            }
        }

        #[test]
        fn decoder_never_panics(bytes in prop::collection::vec(any::<u8>(), 0..64)) {
            let _ = decode_matrix(&bytes);
        }
    }
}
