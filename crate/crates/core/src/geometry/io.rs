//! Plain-text structured-grid geometry files.
//!
//! ```text
//! L rows cols
//! x y z measure weight      (L lines)
//! ```

use std::fmt::Write as _;
use std::path::Path;

use super::{DiscreteShape, Topology};
use crate::error::{PmeError, Result};

pub fn format_geometry(shape: &DiscreteShape) -> String {
    let topo = shape.topology();
    let mut out = String::with_capacity(shape.len() * 120);
    let _ = writeln!(out, "{} {} {}", shape.len(), topo.rows, topo.cols);
    for ((p, m), w) in shape.nodes().iter().zip(shape.measures()).zip(shape.weights()) {
        let _ = writeln!(out, "{:.16e} {:.16e} {:.16e} {:.16e} {:.16e}", p[0], p[1], p[2], m, w);
    }
    out
}

pub fn write_geometry(path: &Path, shape: &DiscreteShape) -> Result<()> {
    std::fs::write(path, format_geometry(shape))?;
    Ok(())
}

/// Parses a geometry file. The file carries no wrap or closure information;
/// the returned topology is an open, unwrapped grid.
pub fn parse_geometry(text: &str) -> Result<DiscreteShape> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| PmeError::Parse("empty geometry file".into()))?;
    let head: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse::<usize>().map_err(|e| PmeError::Parse(format!("header `{header}`: {e}"))))
        .collect::<Result<_>>()?;
    let [l, rows, cols] = head[..] else {
        return Err(PmeError::Parse(format!("header must be `L rows cols`, got `{header}`")));
    };
    if rows * cols != l {
        return Err(PmeError::Parse(format!("header {l} != {rows}x{cols}")));
    }
    let mut nodes = Vec::with_capacity(l);
    let mut measures = Vec::with_capacity(l);
    let mut weights = Vec::with_capacity(l);
    for (i, line) in lines.enumerate() {
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|e| PmeError::Parse(format!("line {}: {e}", i + 2))))
            .collect::<Result<_>>()?;
        let [x, y, z, m, w] = vals[..] else {
            return Err(PmeError::Parse(format!("line {} needs 5 values", i + 2)));
        };
        nodes.push([x, y, z]);
        measures.push(m);
        weights.push(w);
    }
    if nodes.len() != l {
        return Err(PmeError::Parse(format!("expected {l} node lines, found {}", nodes.len())));
    }
    DiscreteShape::new(nodes, measures, weights, Topology::grid(rows, cols))
}

pub fn read_geometry(path: &Path) -> Result<DiscreteShape> {
    parse_geometry(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::solids::{wigley_demi_hull, HullDimensions};
    use crate::geometry::MeasureScheme;

    #[test]
    fn round_trip_is_exact() {
        let hull = wigley_demi_hull(&HullDimensions::default(), MeasureScheme::PanelArea)
            .waterline_mask(0.0)
            .unwrap();
        let back = parse_geometry(&format_geometry(&hull)).unwrap();
        assert_eq!(back.nodes(), hull.nodes());
        assert_eq!(back.measures(), hull.measures());
        assert_eq!(back.weights(), hull.weights());
        assert_eq!(back.topology().rows, 25);
    }

    #[test]
    fn malformed_files_are_rejected() {
        assert!(parse_geometry("").is_err());
        assert!(parse_geometry("2 1 1\n0 0 0 1 1\n").is_err());
        assert!(parse_geometry("1 1 1\n0 0 0 1\n").is_err());
        assert!(parse_geometry("2 1 2\n0 0 0 1 1\n").is_err());
    }
}
