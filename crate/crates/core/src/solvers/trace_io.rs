//! Trace CSV format:
//!
//! ```text
//! iter,f,gnorm,r,lambda,traceG,restart,elapsed_s
//! ```
//!
//! Reals are written with 17 significant digits (`{:.16e}`), which round
//! trips every finite double exactly; `restart` is `0` or `1`.

use std::fmt::Write as _;

use super::IterateRecord;
use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "iter,f,gnorm,r,lambda,traceG,restart,elapsed_s";

pub fn write_trace_csv(records: &[IterateRecord]) -> String {
    let mut out = String::with_capacity(160 * (records.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(
            out,
            "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{},{:.16e}",
            r.k,
            r.f,
            r.gnorm,
            r.r,
            r.lambda,
            r.trace_g,
            u8::from(r.restarted),
            r.elapsed_s
        );
    }
    out
}

pub fn parse_trace_csv(text: &str) -> Result<Vec<IterateRecord>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == CSV_HEADER => {}
        _ => {
            return Err(Error::Parse {
                line: 1,
                message: format!("expected header {CSV_HEADER:?}"),
            })
        }
    }
    let mut records = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 8 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected 8 fields, found {}", fields.len()),
            });
        }
        let real = |i: usize| -> Result<f64> {
            fields[i].parse().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("bad number {:?}", fields[i]),
            })
        };
        let k: usize = fields[0].parse().map_err(|_| Error::Parse {
            line: line_no,
            message: format!("bad iteration index {:?}", fields[0]),
        })?;
        if k != records.len() {
            return Err(Error::Parse {
                line: line_no,
                message: format!("iteration {k} out of sequence"),
            });
        }
        let restarted = match fields[6] {
            "0" => false,
            "1" => true,
            other => {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("restart flag must be 0 or 1, got {other:?}"),
                })
            }
        };
        records.push(IterateRecord {
            k,
            f: real(1)?,
            gnorm: real(2)?,
            r: real(3)?,
            lambda: real(4)?,
            trace_g: real(5)?,
            restarted,
            elapsed_s: real(7)?,
        });
    }
    if records.is_empty() {
        return Err(Error::Parse {
            line: 2,
            message: "trace has no records".into(),
        });
    }
    Ok(records)
}
