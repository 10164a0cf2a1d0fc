//! Plain-text field snapshots.
//!
//! ```text
//! pnp-field v1 dim=<d> N=<N> L=<L> name=<s> time=<t>
//! <N^dim whitespace-separated values, row-major>
//! ```
//!
//! Values are written with 17 significant digits, so a write/read cycle
//! reproduces every bit.

use std::io::{BufRead, Write};

use crate::diagnostics::fmt17;
use crate::error::{PnpError, Result};
use crate::grid::{CellField, Grid};

const MAGIC: &str = "pnp-field";
const VERSION: &str = "v1";

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub name: String,
    pub time: f64,
    pub field: CellField,
}

pub fn write_field<W: Write>(mut out: W, name: &str, time: f64, field: &CellField) -> Result<()> {
    if name.is_empty() || name.chars().any(char::is_whitespace) {
        return Err(PnpError::InvalidParameter {
            name: "name".into(),
            reason: format!("snapshot name must be a non-empty token, got {name:?}"),
        });
    }
    let g = field.grid();
    writeln!(
        out,
        "{MAGIC} {VERSION} dim={} N={} L={:e} name={name} time={:e}",
        g.dim(),
        g.n(),
        g.half_width(),
        time
    )?;
    let n = g.n();
    for row in field.values().chunks(n) {
        let line: Vec<String> = row.iter().map(|&v| fmt17(v)).collect();
        writeln!(out, "{}", line.join(" "))?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_field<R: BufRead>(input: R) -> Result<Snapshot> {
    let mut lines = input.lines();
    let header = lines
        .next()
        .ok_or_else(|| PnpError::Format("empty file".into()))??;
    let mut tokens = header.split_whitespace();
    if tokens.next() != Some(MAGIC) || tokens.next() != Some(VERSION) {
        return Err(PnpError::Format(format!("bad header: {header}")));
    }
    let (mut dim, mut n, mut l, mut name, mut time) = (None, None, None, None, None);
    for tok in tokens {
        let (key, value) = tok
            .split_once('=')
            .ok_or_else(|| PnpError::Format(format!("bad header token `{tok}`")))?;
        let num = |v: &str| -> Result<f64> {
            v.parse().map_err(|_| PnpError::Format(format!("bad number `{v}` for {key}")))
        };
        match key {
            "dim" => dim = Some(num(value)? as usize),
            "N" => n = Some(num(value)? as usize),
            "L" => l = Some(num(value)?),
            "name" => name = Some(value.to_string()),
            "time" => time = Some(num(value)?),
            _ => return Err(PnpError::Format(format!("unknown header key `{key}`"))),
        }
    }
    let missing = |k: &str| PnpError::Format(format!("header lacks `{k}`"));
    let grid = Grid::new(
        dim.ok_or_else(|| missing("dim"))?,
        n.ok_or_else(|| missing("N"))?,
        l.ok_or_else(|| missing("L"))?,
    )?;
    let mut values = Vec::with_capacity(grid.len());
    for line in lines {
        for tok in line?.split_whitespace() {
            values.push(
                tok.parse::<f64>()
                    .map_err(|_| PnpError::Format(format!("bad value `{tok}`")))?,
            );
        }
    }
    if values.len() != grid.len() {
        return Err(PnpError::Format(format!(
            "expected {} values, found {}",
            grid.len(),
            values.len()
        )));
    }
    Ok(Snapshot {
        name: name.ok_or_else(|| missing("name"))?,
        time: time.ok_or_else(|| missing("time"))?,
        field: CellField::from_values(grid, values)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn round_trip_is_exact(
            values in proptest::collection::vec(-1e300f64..1e300, 27),
            time in 0.0f64..1e6,
            l in 1e-3f64..1e3,
        ) {
            let g = Grid::new(3, 3, l).unwrap();
            let f = CellField::from_values(g, values).unwrap();
            let mut buf = Vec::new();
            write_field(&mut buf, "phi", time, &f).unwrap();
            let back = read_field(buf.as_slice()).unwrap();
            prop_assert_eq!(back.field, f);
            prop_assert_eq!(back.time, time);
            prop_assert_eq!(back.name, "phi");
        }
    }

    #[test]
    fn header_layout() {
        let g = Grid::new(2, 2, 1.0).unwrap();
        let f = CellField::from_values(g, vec![0.1, 0.2, 0.3, 1.0 / 3.0]).unwrap();
        let mut buf = Vec::new();
        write_field(&mut buf, "n", 0.5, &f).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), "pnp-field v1 dim=2 N=2 L=1e0 name=n time=5e-1");
        assert_eq!(text.lines().count(), 3);
    }

    #[test]
    fn rejects_malformed() {
        assert!(read_field("pnp-field v2 dim=2 N=2 L=1 name=n time=0\n1 2 3 4".as_bytes()).is_err());
        assert!(read_field("pnp-field v1 dim=2 N=2 L=1 name=n time=0\n1 2 3".as_bytes()).is_err());
        assert!(read_field("pnp-field v1 dim=2 N=2 L=1 time=0\n1 2 3 4".as_bytes()).is_err());
        assert!(read_field("".as_bytes()).is_err());
        let mut buf = Vec::new();
        let g = Grid::new(2, 2, 1.0).unwrap();
        assert!(write_field(&mut buf, "two words", 0.0, &CellField::zeros(g)).is_err());
    }
}
