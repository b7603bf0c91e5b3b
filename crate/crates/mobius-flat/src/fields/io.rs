//! Plain-text formats: grid fields, 4x4 matrix blocks and `key = expr` files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{BufRead, Write};

use nalgebra::Matrix4;

use super::expr::Expr;
use super::field::{MatrixField, ScalarField};
use super::grid::Grid;
use crate::error::{Error, Result};

fn header_line(tag: Option<&str>, g: &Grid) -> String {
    let prefix = tag.map(|t| format!("{t} ")).unwrap_or_default();
    format!("# {prefix}{} {} {} {} {} {}", g.nx(), g.ny(), g.x0(), g.y0(), g.dx(), g.dy())
}

fn parse_header(line: &str, tag: Option<&str>) -> Result<Grid> {
    let bad = |msg: &str| Error::Parse { line: 1, col: 1, msg: msg.to_string() };
    let rest = line.trim().strip_prefix('#').ok_or_else(|| bad("header must start with '#'"))?;
    let mut words: Vec<&str> = rest.split_whitespace().collect();
    if let Some(t) = tag {
        if words.first() != Some(&t) {
            return Err(bad(&format!("expected '{t}' header")));
        }
        words.remove(0);
    }
    if words.len() != 6 {
        return Err(bad("header needs nx ny x0 y0 dx dy"));
    }
    let nx: usize = words[0].parse().map_err(|_| bad("nx is not an integer"))?;
    let ny: usize = words[1].parse().map_err(|_| bad("ny is not an integer"))?;
    let mut reals = [0.0; 4];
    for (slot, w) in reals.iter_mut().zip(&words[2..]) {
        *slot = w.parse().map_err(|_| bad(&format!("'{w}' is not a number")))?;
    }
    Grid::new(nx, ny, reals[0], reals[1], reals[2], reals[3])
}

fn read_numbers(lines: impl Iterator<Item = std::io::Result<String>>, expected: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(expected);
    for (n, line) in lines.enumerate() {
        let line = line?;
        for (c, word) in line.split_whitespace().enumerate() {
            let v: f64 = word.parse().map_err(|_| Error::Parse {
                line: n + 2,
                col: c + 1,
                msg: format!("'{word}' is not a number"),
            })?;
            out.push(v);
        }
    }
    if out.len() != expected {
        return Err(Error::Invalid(format!("expected {expected} values, found {}", out.len())));
    }
    Ok(out)
}

/// Writes `# nx ny x0 y0 dx dy` followed by one value per line, x fastest.
pub fn write_scalar_field<W: Write>(mut w: W, f: &ScalarField) -> Result<()> {
    let mut s = header_line(None, f.grid());
    s.push('\n');
    for v in f.values() {
        writeln!(s, "{v}").expect("string write");
    }
    w.write_all(s.as_bytes())?;
    Ok(())
}

/// Reads a grid field file as a sampled field with the given stencil order.
pub fn read_scalar_field<R: BufRead>(r: R, stencil: usize) -> Result<ScalarField> {
    let mut lines = r.lines();
    let head = lines.next().ok_or_else(|| Error::Invalid("empty field file".into()))??;
    let grid = parse_header(&head, None)?;
    let values = read_numbers(lines, grid.len())?;
    ScalarField::sampled(grid, values, stencil)
}

/// Writes the 16-column block format, one row-major matrix per line.
pub fn write_matrix_field<W: Write>(mut w: W, f: &MatrixField) -> Result<()> {
    let mut s = header_line(Some("matrixfield"), f.grid());
    s.push('\n');
    for m in f.values() {
        let row: Vec<String> = (0..16).map(|k| format!("{}", m[(k / 4, k % 4)])).collect();
        s.push_str(&row.join(" "));
        s.push('\n');
    }
    w.write_all(s.as_bytes())?;
    Ok(())
}

pub fn read_matrix_field<R: BufRead>(r: R, stencil: usize) -> Result<MatrixField> {
    let mut lines = r.lines();
    let head = lines.next().ok_or_else(|| Error::Invalid("empty matrix file".into()))??;
    let grid = parse_header(&head, Some("matrixfield"))?;
    let values = read_numbers(lines, 16 * grid.len())?;
    let mats = values.chunks(16).map(Matrix4::from_row_slice).collect();
    MatrixField::sampled(grid, mats, stencil)
}

/// Contents of a `key = expr` input file.
#[derive(Clone, Debug, Default)]
pub struct Assignments {
    pub exprs: BTreeMap<String, Expr>,
    pub grid: Option<Grid>,
}

impl Assignments {
    pub fn get(&self, key: &str) -> Option<&Expr> {
        self.exprs.get(key)
    }

    pub fn require(&self, key: &str) -> Result<&Expr> {
        self.get(key).ok_or_else(|| Error::MissingKey(key.to_string()))
    }
}

/// Parses lines `key = expr`, an optional `grid = nx ny x0 y0 dx dy`, blank
/// lines and `#` comments. Keys outside `allowed` are rejected.
pub fn parse_assignments(text: &str, allowed: &[&str]) -> Result<Assignments> {
    let mut out = Assignments::default();
    for (n, raw) in text.lines().enumerate() {
        let line_no = n + 1;
        let line = raw.split('#').next().unwrap_or("");
        if line.trim().is_empty() {
            continue;
        }
        let eq = line.find('=').ok_or(Error::Parse { line: line_no, col: 1, msg: "expected 'key = value'".into() })?;
        let key = line[..eq].trim();
        let rhs = &line[eq + 1..];
        let rhs_col = eq + 2;
        if key == "grid" {
            let words: Vec<&str> = rhs.split_whitespace().collect();
            let bad = |msg: String| Error::Parse { line: line_no, col: rhs_col, msg };
            if words.len() != 6 {
                return Err(bad("grid needs nx ny x0 y0 dx dy".into()));
            }
            let nx: usize = words[0].parse().map_err(|_| bad("nx must be an integer".into()))?;
            let ny: usize = words[1].parse().map_err(|_| bad("ny must be an integer".into()))?;
            let mut r = [0.0; 4];
            for (slot, w) in r.iter_mut().zip(&words[2..]) {
                *slot = w.parse().map_err(|_| bad(format!("'{w}' is not a number")))?;
            }
            out.grid = Some(Grid::new(nx, ny, r[0], r[1], r[2], r[3])?);
            continue;
        }
        if !allowed.contains(&key) {
            return Err(Error::Parse { line: line_no, col: 1, msg: format!("unknown key '{key}'") });
        }
        let expr = Expr::parse_at_line(rhs, line_no).map_err(|e| match e {
            Error::Parse { line, col, msg } => Error::Parse { line, col: col + rhs_col - 1, msg },
            other => other,
        })?;
        if out.exprs.insert(key.to_string(), expr).is_some() {
            return Err(Error::Parse { line: line_no, col: 1, msg: format!("duplicate key '{key}'") });
        }
    }
    Ok(out)
}
