//! Lossless text snapshots of a [`State`] (format `CVF1`).
//!
//! ```text
//! CVF1
//! <ndim> <s1> [<s2>] [<s3>]
//! <L1> [<L2>] [<L3>]
//! t=<time>
//! u
//! <one value per line, row-major>
//! v
//! ...
//! w
//! ...
//! ```
//!
//! Floating-point values are written with 17 significant digits.

use std::fmt::Write as _;

use thiserror::Error;

use crate::grid::{Field, Grid, GridError, State};

pub const MAGIC: &str = "CVF1";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SnapshotError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("unexpected end of snapshot after line {line}: expected {expected}")]
    Truncated { line: usize, expected: String },
    #[error("line {line}: trailing content after the w block")]
    TrailingData { line: usize },
    #[error(transparent)]
    Grid(#[from] GridError),
}

fn sig17(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_snapshot(grid: &Grid, state: &State) -> Result<String, GridError> {
    state.check(grid)?;
    let mut out = String::with_capacity(24 * 3 * grid.len() + 64);
    out.push_str(MAGIC);
    out.push('\n');
    let _ = write!(out, "{}", grid.ndim());
    for s in grid.shape() {
        let _ = write!(out, " {s}");
    }
    out.push('\n');
    let lengths: Vec<String> = grid.lengths().iter().map(|&l| sig17(l)).collect();
    out.push_str(&lengths.join(" "));
    out.push('\n');
    let _ = writeln!(out, "t={}", sig17(state.t));
    for (label, field) in ["u", "v", "w"].into_iter().zip(state.fields()) {
        out.push_str(label);
        out.push('\n');
        for &x in field.values() {
            out.push_str(&sig17(x));
            out.push('\n');
        }
    }
    Ok(out)
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn next(&mut self, expected: &str) -> Result<&'a str, SnapshotError> {
        match self.inner.next() {
            Some((i, l)) => {
                self.line = i + 1;
                Ok(l.trim_end_matches('\r'))
            }
            None => Err(SnapshotError::Truncated {
                line: self.line,
                expected: expected.to_string(),
            }),
        }
    }

    fn malformed(&self, message: impl Into<String>) -> SnapshotError {
        SnapshotError::Malformed {
            line: self.line,
            message: message.into(),
        }
    }
}

fn parse_f64(lines: &Lines<'_>, token: &str, what: &str) -> Result<f64, SnapshotError> {
    match token.trim().parse::<f64>() {
        Ok(x) if x.is_finite() => Ok(x),
        _ => Err(lines.malformed(format!("invalid {what} '{token}'"))),
    }
}

/// Parses a `CVF1` snapshot back into its grid and state.
pub fn parse_snapshot(text: &str) -> Result<(Grid, State), SnapshotError> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
        line: 0,
    };
    if lines.next("magic")? != MAGIC {
        return Err(lines.malformed(format!("expected magic '{MAGIC}'")));
    }

    let header = lines.next("grid shape")?;
    let mut tokens = header.split_whitespace();
    let ndim: usize = tokens
        .next()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| lines.malformed("expected dimension"))?;
    if !(1..=3).contains(&ndim) {
        return Err(lines.malformed(format!("dimension {ndim} not in 1..=3")));
    }
    let shape: Vec<usize> = tokens
        .map(|t| {
            t.parse()
                .map_err(|_| lines.malformed(format!("invalid cell count '{t}'")))
        })
        .collect::<Result<_, _>>()?;
    if shape.len() != ndim {
        return Err(lines.malformed(format!("expected {ndim} cell counts, got {}", shape.len())));
    }
    if let Some(s) = shape.iter().find(|&&s| s < 3) {
        return Err(lines.malformed(format!("cell count {s} below the minimum of 3")));
    }

    let lengths_line = lines.next("lengths")?;
    let lengths: Vec<f64> = lengths_line
        .split_whitespace()
        .map(|t| parse_f64(&lines, t, "length"))
        .collect::<Result<_, _>>()?;
    let grid = Grid::new(&shape, &lengths).map_err(|e| lines.malformed(e.to_string()))?;

    let t_line = lines.next("time")?;
    let t = t_line
        .strip_prefix("t=")
        .ok_or_else(|| lines.malformed("expected 't=<time>'"))
        .and_then(|s| parse_f64(&lines, s, "time"))?;
    if t < 0.0 {
        return Err(lines.malformed("time must be nonnegative"));
    }

    // Every value needs a line of its own; refuse shapes the input cannot fill
    // before allocating for them.
    if grid.len().saturating_mul(3) > text.len() / 2 {
        return Err(SnapshotError::Truncated {
            line: lines.line,
            expected: format!("{} values per component", grid.len()),
        });
    }

    let mut fields = Vec::with_capacity(3);
    for label in ["u", "v", "w"] {
        if lines.next(label)? != label {
            return Err(lines.malformed(format!("expected block label '{label}'")));
        }
        let mut values = Vec::with_capacity(grid.len());
        for _ in 0..grid.len() {
            let l = lines.next("value")?;
            values.push(parse_f64(&lines, l, "value")?);
        }
        fields.push(Field::from_vec(values));
    }
    for (i, l) in lines.inner.by_ref() {
        if !l.trim().is_empty() {
            return Err(SnapshotError::TrailingData { line: i + 1 });
        }
    }
    let w = fields.pop().expect("three blocks");
    let v = fields.pop().expect("three blocks");
    let u = fields.pop().expect("three blocks");
    Ok((grid, State::new(u, v, w, t)))
}
