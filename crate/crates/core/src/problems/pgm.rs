use crate::error::{Error, Result};
use crate::linalg::Vector;

fn img_err(msg: impl Into<String>) -> Error {
    Error::Image(msg.into())
}

/// Reads the next header token, skipping whitespace and `#` comments.
/// Returns the token and the position just past it.
fn next_token(bytes: &[u8], mut pos: usize) -> Result<(&str, usize)> {
    loop {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        break;
    }
    let start = pos;
    while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() && bytes[pos] != b'#' {
        pos += 1;
    }
    if start == pos {
        return Err(img_err("truncated PGM header"));
    }
    let tok = std::str::from_utf8(&bytes[start..pos]).map_err(|_| img_err("non-ASCII PGM header"))?;
    Ok((tok, pos))
}

fn parse_usize(tok: &str, what: &str) -> Result<usize> {
    tok.parse().map_err(|_| img_err(format!("bad {what} {tok:?}")))
}

/// Decodes a P2 (ASCII) or P5 (binary) graymap. Returns the pixels scaled to
/// `[0, 1]` in row-major order, with the height and width.
pub fn load_pgm(bytes: &[u8]) -> Result<(Vector, usize, usize)> {
    let (magic, pos) = next_token(bytes, 0)?;
    let binary = match magic {
        "P5" => true,
        "P2" => false,
        other => return Err(img_err(format!("unsupported magic {other:?}"))),
    };
    let (w, pos) = next_token(bytes, pos)?;
    let width = parse_usize(w, "width")?;
    let (h, pos) = next_token(bytes, pos)?;
    let height = parse_usize(h, "height")?;
    let (mv, mut pos) = next_token(bytes, pos)?;
    let maxval = parse_usize(mv, "maxval")?;
    if maxval == 0 || maxval > 255 {
        return Err(img_err(format!("unsupported maxval {maxval}")));
    }
    if width == 0 || height == 0 {
        return Err(img_err("empty image"));
    }
    let n = width * height;
    let scale = maxval as f64;
    let mut pixels = Vector::zeros(n);
    if binary {
        // Exactly one whitespace byte separates the header from the raster.
        pos += 1;
        let data = bytes.get(pos..pos + n).ok_or_else(|| {
            img_err(format!("expected {n} raster bytes, found {}", bytes.len().saturating_sub(pos)))
        })?;
        for (p, &b) in pixels.iter_mut().zip(data) {
            *p = b as f64 / scale;
        }
    } else {
        for k in 0..n {
            let (tok, next) = next_token(bytes, pos).map_err(|_| img_err(format!("expected {n} samples, found {k}")))?;
            let v = parse_usize(tok, "sample")?;
            if v > maxval {
                return Err(img_err(format!("sample {v} exceeds maxval {maxval}")));
            }
            pixels[k] = v as f64 / scale;
            pos = next;
        }
    }
    Ok((pixels, height, width))
}

/// Encodes row-major pixels (clipped to `[0, 1]`) as a binary P5 graymap
/// with maxval 255.
pub fn write_pgm(pixels: &Vector, height: usize, width: usize) -> Result<Vec<u8>> {
    if pixels.len() != height * width {
        return Err(Error::DimensionMismatch {
            expected: height * width,
            found: pixels.len(),
        });
    }
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend(pixels.iter().map(|&v| {
        let v = if v.is_finite() { v.clamp(0.0, 1.0) } else { 0.0 };
        (v * 255.0).round() as u8
    }));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ascii_example() {
        let (v, h, w) = load_pgm(b"P2\n2 1\n255\n0 255\n").unwrap();
        assert_eq!((h, w), (1, 2));
        assert_eq!(v.as_slice(), &[0.0, 1.0]);
    }

    #[test]
    fn binary_length_contract() {
        let mut bytes = b"P5 64 64 255\n".to_vec();
        bytes.extend(std::iter::repeat_n(7u8, 4096));
        let (v, h, w) = load_pgm(&bytes).unwrap();
        assert_eq!((v.len(), h, w), (4096, 64, 64));
    }

    #[test]
    fn comments_and_errors() {
        let (v, _, _) = load_pgm(b"P2 # c\n# more\n1 1 255 128").unwrap();
        assert!((v[0] - 128.0 / 255.0).abs() < 1e-15);
        assert!(load_pgm(b"P3 1 1 255 0").is_err());
        assert!(load_pgm(b"P5 2 2 255\n\x00\x01").is_err());
        assert!(load_pgm(b"P2 2 1 255 3").is_err());
        assert!(write_pgm(&Vector::zeros(3), 2, 2).is_err());
    }

    proptest! {
        #[test]
        fn round_trip(vals in prop::collection::vec(0.0f64..=1.0, 1..64), w in 1usize..8) {
            let h = vals.len() / w;
            prop_assume!(h > 0);
            let v = Vector::from_column_slice(&vals[..h * w]);
            let (back, hh, ww) = load_pgm(&write_pgm(&v, h, w).unwrap()).unwrap();
            prop_assert_eq!((hh, ww), (h, w));
            prop_assert!((back - v).amax() <= 1.0 / 255.0);
        }
    }
}
