//! Text model format.
//!
//! ```text
//! nnquad-relunet
//! version 1
//! kind <translational|rotational>
//! input_dim <d>
//! hidden <n>
//! in_mean 1 <d>      followed by 1 line of d values
//! in_std 1 <d>
//! W <d> <n>          followed by d lines of n values (row-major)
//! B 1 <n>
//! w <n> 3
//! b 1 3
//! out_mean 1 3
//! out_std 1 3
//! end
//! ```
//!
//! Values are space-separated shortest round-trip decimal representations,
//! so a load reproduces the saved `f64` bit patterns exactly.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector, Vector3};

use super::{NetKind, ReluNet};
use crate::error::{Error, Result};

const MAGIC: &str = "nnquad-relunet";
const VERSION: u32 = 1;

fn malformed(field: &str, reason: impl Into<String>) -> Error {
    Error::MalformedModelFile {
        field: field.to_string(),
        reason: reason.into(),
    }
}

fn write_block(out: &mut String, name: &str, rows: usize, cols: usize, at: impl Fn(usize, usize) -> f64) {
    let _ = writeln!(out, "{name} {rows} {cols}");
    for i in 0..rows {
        let line: Vec<String> = (0..cols).map(|j| at(i, j).to_string()).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
}

pub fn serialize_model(net: &ReluNet) -> String {
    let (d, n) = (net.input_dim(), net.hidden());
    let mut out = String::new();
    let _ = writeln!(out, "{MAGIC}\nversion {VERSION}\nkind {}\ninput_dim {d}\nhidden {n}", net.kind);
    write_block(&mut out, "in_mean", 1, d, |_, j| net.in_mean[j]);
    write_block(&mut out, "in_std", 1, d, |_, j| net.in_std[j]);
    write_block(&mut out, "W", d, n, |i, j| net.w_hidden[(i, j)]);
    write_block(&mut out, "B", 1, n, |_, j| net.b_hidden[j]);
    write_block(&mut out, "w", n, 3, |i, j| net.w_out[(i, j)]);
    write_block(&mut out, "b", 1, 3, |_, j| net.b_out[j]);
    write_block(&mut out, "out_mean", 1, 3, |_, j| net.out_mean[j]);
    write_block(&mut out, "out_std", 1, 3, |_, j| net.out_std[j]);
    out.push_str("end\n");
    out
}

pub fn save_model(net: &ReluNet, path: &Path) -> Result<()> {
    net.validate()?;
    std::fs::write(path, serialize_model(net))?;
    Ok(())
}

struct Cursor<'a> {
    lines: std::iter::Filter<std::str::Lines<'a>, fn(&&str) -> bool>,
}

impl<'a> Cursor<'a> {
    fn new(text: &'a str) -> Self {
        fn keep(l: &&str) -> bool {
            !l.trim().is_empty()
        }
        Cursor {
            lines: text.lines().filter(keep as fn(&&str) -> bool),
        }
    }

    fn line(&mut self, field: &str) -> Result<&'a str> {
        self.lines.next().map(str::trim).ok_or_else(|| malformed(field, "unexpected end of file"))
    }

    fn keyed<T: std::str::FromStr>(&mut self, key: &str) -> Result<T> {
        let line = self.line(key)?;
        let mut parts = line.split_whitespace();
        if parts.next() != Some(key) {
            return Err(malformed(key, format!("expected `{key} <value>`, found `{line}`")));
        }
        let value = parts.next().ok_or_else(|| malformed(key, "missing value"))?;
        if parts.next().is_some() {
            return Err(malformed(key, "trailing tokens"));
        }
        value.parse().map_err(|_| malformed(key, format!("cannot parse `{value}`")))
    }

    fn block(&mut self, name: &str, rows: usize, cols: usize) -> Result<DMatrix<f64>> {
        let header = self.line(name)?;
        let parts: Vec<&str> = header.split_whitespace().collect();
        if parts.len() != 3 || parts[0] != name {
            return Err(malformed(name, format!("expected block header `{name} {rows} {cols}`, found `{header}`")));
        }
        let (r, c): (usize, usize) = match (parts[1].parse(), parts[2].parse()) {
            (Ok(r), Ok(c)) => (r, c),
            _ => return Err(malformed(name, "bad block dimensions")),
        };
        if (r, c) != (rows, cols) {
            return Err(malformed(name, format!("dimensions {r}x{c}, expected {rows}x{cols}")));
        }
        let mut values = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            let line = self.line(name)?;
            let row: Vec<f64> = line
                .split_whitespace()
                .map(|x| x.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| malformed(name, format!("row {i}: non-numeric value")))?;
            if row.len() != cols {
                return Err(malformed(name, format!("row {i}: {} values, expected {cols}", row.len())));
            }
            if row.iter().any(|x| !x.is_finite()) {
                return Err(malformed(name, format!("row {i}: non-finite value")));
            }
            values.extend(row);
        }
        Ok(DMatrix::from_row_slice(rows, cols, &values))
    }
}

pub fn parse_model(text: &str) -> Result<ReluNet> {
    let mut c = Cursor::new(text);
    if c.line("magic")? != MAGIC {
        return Err(malformed("magic", format!("expected `{MAGIC}`")));
    }
    let version: u32 = c.keyed("version")?;
    if version != VERSION {
        return Err(malformed("version", format!("unsupported version {version}")));
    }
    let kind: NetKind = c.keyed::<String>("kind")?.parse().map_err(|e: Error| malformed("kind", e.to_string()))?;
    let d: usize = c.keyed("input_dim")?;
    if d != kind.input_dim() {
        return Err(malformed("input_dim", format!("{d} does not match {kind} layout ({})", kind.input_dim())));
    }
    let n: usize = c.keyed("hidden")?;
    if n == 0 {
        return Err(malformed("hidden", "must be positive"));
    }
    let vec = |m: DMatrix<f64>| DVector::from_iterator(m.len(), m.iter().copied());
    let v3 = |m: DMatrix<f64>| Vector3::new(m[0], m[1], m[2]);
    let in_mean = vec(c.block("in_mean", 1, d)?);
    let in_std = vec(c.block("in_std", 1, d)?);
    let w_hidden = c.block("W", d, n)?;
    let b_hidden = vec(c.block("B", 1, n)?);
    let w_out = c.block("w", n, 3)?;
    let b_out = v3(c.block("b", 1, 3)?);
    let out_mean = v3(c.block("out_mean", 1, 3)?);
    let out_std = v3(c.block("out_std", 1, 3)?);
    if c.line("end")? != "end" {
        return Err(malformed("end", "missing end marker"));
    }
    if out_std.iter().any(|&s| s <= 0.0) {
        return Err(malformed("out_std", "scales must be strictly positive"));
    }
    if in_std.iter().any(|&s| s <= 0.0) {
        return Err(malformed("in_std", "scales must be strictly positive"));
    }
    Ok(ReluNet {
        kind,
        in_mean,
        in_std,
        w_hidden,
        b_hidden,
        w_out,
        b_out,
        out_mean,
        out_std,
    })
}

pub fn load_model(path: &Path) -> Result<ReluNet> {
    parse_model(&std::fs::read_to_string(path).map_err(|e| Error::unreadable(path, e))?)
}
