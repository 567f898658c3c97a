//! Plain-text matrix format: the first line holds `rows cols`, followed by
//! one line per row of whitespace-separated entries. Entries are written
//! with 17 significant digits, so doubles round trip exactly.

use std::fmt::Write as _;

use nalgebra::DMatrix;

pub fn write_matrix(m: &DMatrix<f64>) -> String {
    let mut out = format!("{} {}\n", m.nrows(), m.ncols());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if j > 0 {
                out.push(' ');
            }
            let _ = write!(out, "{:.16e}", m[(i, j)]);
        }
        out.push('\n');
    }
    out
}

pub fn parse_matrix(text: &str) -> Result<DMatrix<f64>, String> {
    let mut tokens = text.split_whitespace();
    let mut dim = |what: &str| -> Result<usize, String> {
        tokens
            .next()
            .ok_or_else(|| format!("missing {what} count"))?
            .parse()
            .map_err(|_| format!("bad {what} count"))
    };
    let rows = dim("row")?;
    let cols = dim("column")?;
    let values: Vec<f64> = tokens
        .map(|t| t.parse::<f64>().map_err(|_| format!("bad entry {t:?}")))
        .collect::<Result<_, _>>()?;
    if values.len() != rows * cols {
        return Err(format!("expected {} entries, found {}", rows * cols, values.len()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err("non-finite entry".into());
    }
    Ok(DMatrix::from_row_slice(rows, cols, &values))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let m = DMatrix::from_row_slice(2, 3, &[0.1, -2.0 / 3.0, 1e-300, f64::MAX, 5.0, -0.0]);
        let text = write_matrix(&m);
        assert!(text.starts_with("2 3\n"));
        assert_eq!(parse_matrix(&text).unwrap(), m);
    }

    #[test]
    fn row_major_layout() {
        let m = parse_matrix("2 2\n1 2\n3 4\n").unwrap();
        assert_eq!(m[(0, 1)], 2.0);
        assert_eq!(m[(1, 0)], 3.0);
    }

    #[test]
    fn malformed_inputs() {
        assert!(parse_matrix("").is_err());
        assert!(parse_matrix("2 2\n1 2 3").is_err());
        assert!(parse_matrix("1 1\nx").is_err());
        assert!(parse_matrix("1 1\nnan").is_err());
    }
}
