//! Complex-matrix CSV, the interchange format for mode bases, couplers,
//! POVM factors and density matrices.
//!
//! ```text
//! rows,cols
//! re(0,0),im(0,0),re(0,1),im(0,1),...
//! ...
//! ```
//!
//! One header line, then `rows` lines of `2·cols` decimal floats. UTF-8, LF
//! line endings. Values are written with 17 significant digits, which
//! round-trips every `f64` bit-exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::{CMat, C64};

pub fn to_string(m: &CMat) -> String {
    let mut out = String::with_capacity(16 + m.len() * 50);
    let _ = writeln!(out, "{},{}", m.nrows(), m.ncols());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let z = m[(i, j)];
            if j > 0 {
                out.push(',');
            }
            let _ = write!(out, "{:.16e},{:.16e}", z.re, z.im);
        }
        out.push('\n');
    }
    out
}

pub fn parse(text: &str) -> Result<CMat> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| Error::Format("empty file".into()))?;
    let dims: Vec<&str> = header.split(',').map(str::trim).collect();
    if dims.len() != 2 {
        return Err(Error::Format(format!("header must be 'rows,cols', got {header:?}")));
    }
    let parse_dim = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| Error::Format(format!("bad dimension {s:?}")))
    };
    let rows = parse_dim(dims[0])?;
    let cols = parse_dim(dims[1])?;
    let mut m = CMat::zeros(rows, cols);
    let mut seen = 0;
    for (i, line) in lines.enumerate() {
        if i >= rows {
            return Err(Error::Format(format!("more than {rows} data rows")));
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 2 * cols {
            return Err(Error::Format(format!(
                "row {i}: expected {} values, found {}",
                2 * cols,
                fields.len()
            )));
        }
        for j in 0..cols {
            let re = parse_float(fields[2 * j], i)?;
            let im = parse_float(fields[2 * j + 1], i)?;
            m[(i, j)] = C64::new(re, im);
        }
        seen += 1;
    }
    if seen != rows {
        return Err(Error::Format(format!("expected {rows} data rows, found {seen}")));
    }
    Ok(m)
}

fn parse_float(s: &str, row: usize) -> Result<f64> {
    s.parse::<f64>()
        .map_err(|_| Error::Format(format!("row {row}: bad number {s:?}")))
}

pub fn write(path: impl AsRef<Path>, m: &CMat) -> Result<()> {
    fs::write(path, to_string(m))?;
    Ok(())
}

pub fn read(path: impl AsRef<Path>) -> Result<CMat> {
    parse(&fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_and_layout() {
        let m = CMat::from_row_slice(1, 2, &[C64::new(1.0, -0.5), C64::new(0.0, 2.0)]);
        let s = to_string(&m);
        let mut lines = s.lines();
        assert_eq!(lines.next(), Some("1,2"));
        let row: Vec<f64> = lines.next().unwrap().split(',').map(|x| x.parse().unwrap()).collect();
        assert_eq!(row, vec![1.0, -0.5, 0.0, 2.0]);
        assert!(s.ends_with('\n'));
    }

    #[test]
    fn rejects_malformed() {
        assert!(parse("").is_err());
        assert!(parse("2\n").is_err());
        assert!(parse("1,1\n1.0\n").is_err());
        assert!(parse("2,1\n1.0,0.0\n").is_err());
        assert!(parse("1,1\n1.0,abc\n").is_err());
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(
            rows in 1usize..5,
            cols in 1usize..5,
            vals in proptest::collection::vec(any::<f64>().prop_filter("finite", |x| x.is_finite()), 50)
        ) {
            let m = CMat::from_fn(rows, cols, |i, j| {
                let k = 2 * (i * cols + j);
                C64::new(vals[k], vals[k + 1])
            });
            let back = parse(&to_string(&m)).unwrap();
            prop_assert_eq!(back.shape(), m.shape());
            for (a, b) in m.iter().zip(back.iter()) {
                prop_assert_eq!(a.re.to_bits(), b.re.to_bits());
                prop_assert_eq!(a.im.to_bits(), b.im.to_bits());
            }
        }
    }
}
