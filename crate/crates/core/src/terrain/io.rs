//! ASCII heightmap format:
//!
//! ```text
//! TERRAIN v1
//! origin <x> <y>
//! resolution <r>
//! size <nx> <ny>
//! <nx heights>      (ny rows, y-major outer)
//! ```

use std::io::{BufRead, Write};

use super::{GridSpec, Heightmap};
use crate::{Error, Result};

fn fields<'a>(line: &'a str, lineno: usize, key: &str, n: usize) -> Result<Vec<&'a str>> {
    let mut it = line.split_whitespace();
    match it.next() {
        Some(k) if k == key => {}
        other => {
            return Err(Error::parse(
                lineno,
                format!("expected `{key}`, found `{}`", other.unwrap_or("")),
            ))
        }
    }
    let rest: Vec<&str> = it.collect();
    if rest.len() != n {
        return Err(Error::parse(
            lineno,
            format!("`{key}` expects {n} values, found {}", rest.len()),
        ));
    }
    Ok(rest)
}

fn num<T: std::str::FromStr>(s: &str, lineno: usize) -> Result<T> {
    s.parse()
        .map_err(|_| Error::parse(lineno, format!("invalid number `{s}`")))
}

pub fn read_heightmap<R: BufRead>(reader: R) -> Result<Heightmap<f64>> {
    let mut lines = reader
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| l.as_ref().map(|s| !s.trim().is_empty()).unwrap_or(true));

    let mut next = |what: &str| -> Result<(usize, String)> {
        match lines.next() {
            Some((n, Ok(l))) => Ok((n, l)),
            Some((_, Err(e))) => Err(Error::Io(e)),
            None => Err(Error::parse(
                0,
                format!("unexpected end of file, expected {what}"),
            )),
        }
    };

    let (n, header) = next("header")?;
    if header.trim() != "TERRAIN v1" {
        return Err(Error::parse(n, format!("bad header `{}`", header.trim())));
    }
    let (n, l) = next("origin")?;
    let o = fields(&l, n, "origin", 2)?;
    let (ox, oy): (f64, f64) = (num(o[0], n)?, num(o[1], n)?);
    let (n, l) = next("resolution")?;
    let res: f64 = num(fields(&l, n, "resolution", 1)?[0], n)?;
    let (n, l) = next("size")?;
    let s = fields(&l, n, "size", 2)?;
    let (nx, ny): (usize, usize) = (num(s[0], n)?, num(s[1], n)?);
    let spec = GridSpec::new(ox, oy, res, nx, ny).map_err(|e| Error::parse(n, e.to_string()))?;

    let mut heights = Vec::with_capacity(spec.len());
    for row in 0..ny {
        let (n, l) = next(&format!("height row {row}"))?;
        let before = heights.len();
        for tok in l.split_whitespace() {
            let h: f64 = num(tok, n)?;
            if !h.is_finite() {
                return Err(Error::parse(n, format!("non-finite height `{tok}`")));
            }
            heights.push(h);
        }
        if heights.len() - before != nx {
            return Err(Error::parse(
                n,
                format!("expected {nx} heights, found {}", heights.len() - before),
            ));
        }
    }
    if let Some((n, _)) = lines.next() {
        return Err(Error::parse(n, "trailing data after final height row"));
    }
    Heightmap::new(spec, heights)
}

pub fn write_heightmap<W: Write>(map: &Heightmap<f64>, mut w: W) -> Result<()> {
    let s = map.spec();
    writeln!(w, "TERRAIN v1")?;
    writeln!(w, "origin {} {}", s.origin_x, s.origin_y)?;
    writeln!(w, "resolution {}", s.resolution)?;
    writeln!(w, "size {} {}", s.nx, s.ny)?;
    for row in map.heights().chunks(s.nx) {
        let line: Vec<String> = row.iter().map(|h| h.to_string()).collect();
        writeln!(w, "{}", line.join(" "))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let spec = GridSpec::<f64>::new(-1.5, 2.0, 0.1, 5, 3).unwrap();
        let m = Heightmap::from_fn(spec, |x, y| x * 0.3 + y.sin()).unwrap();
        let mut buf = Vec::new();
        write_heightmap(&m, &mut buf).unwrap();
        let back = read_heightmap(&buf[..]).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn reports_line_numbers() {
        let text = "TERRAIN v1\norigin 0 0\nresolution 1\nsize 2 2\n0 0\n0 x\n";
        match read_heightmap(text.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 6),
            other => panic!("unexpected {other:?}"),
        }
        let text = "TERRAIN v1\norigin 0 0\nresolution 1\nsize 2 2\n0 0 0\n0 0\n";
        match read_heightmap(text.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 5),
            other => panic!("unexpected {other:?}"),
        }
        assert!(read_heightmap("TERRAIN v2\n".as_bytes()).is_err());
        assert!(
            read_heightmap("TERRAIN v1\norigin 0 0\nresolution 0\nsize 2 2\n".as_bytes()).is_err()
        );
    }
}
