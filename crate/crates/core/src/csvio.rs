//! Small helpers for the numeric CSV tables the toolkit exchanges.

use std::io::{Read, Write};

use crate::error::{Error, Result};

/// Shortest representation that parses back to the same double.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

/// Writes a header row and numeric rows, LF-terminated.
pub fn write_table<W: Write>(out: W, header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(header)?;
    for row in rows {
        debug_assert_eq!(row.len(), header.len());
        w.write_record(row.iter().map(|&x| fmt_f64(x)))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a numeric table whose header must contain `columns`, in any order.
/// Returns one vector per requested column.
pub fn read_table<R: Read>(input: R, columns: &[&str]) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let header = rdr.headers()?.clone();
    let idx = columns
        .iter()
        .map(|c| {
            header
                .iter()
                .position(|h| h == *c)
                .ok_or_else(|| Error::Format(format!("missing column `{c}`")))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = vec![Vec::new(); columns.len()];
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        for (k, &i) in idx.iter().enumerate() {
            let field = rec.get(i).unwrap_or("");
            let x: f64 = field.parse().map_err(|_| {
                Error::Format(format!("row {}: `{field}` is not a number in column `{}`", line + 1, columns[k]))
            })?;
            out[k].push(x);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let xs = [0.1, 1.0 / 3.0, -2.5e-17, 6.02e23];
        let mut buf = Vec::new();
        write_table(&mut buf, &["a", "b"], xs.iter().map(|&x| vec![x, -x])).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("a,b\n"));
        assert!(!text.contains('\r'));
        let cols = read_table(&buf[..], &["b", "a"]).unwrap();
        assert_eq!(cols[1], xs);
        assert_eq!(cols[0], xs.map(|x| -x));
    }

    #[test]
    fn reports_missing_column_and_bad_number() {
        assert!(matches!(read_table("a\n1\n".as_bytes(), &["b"]), Err(Error::Format(_))));
        assert!(matches!(read_table("a\nxyz\n".as_bytes(), &["a"]), Err(Error::Format(_))));
    }
}
