//! Text encodings of orbit windows.
//!
//! CSV: header `n,c0,c1,...` then one row per index. JSON: an array of rows
//! `[n, c0, c1, ...]`. Floats are written with 17 significant digits.

use nalgebra::DVector;

use super::space::ModelSpace;
use super::window::OrbitWindow;
use crate::error::{Error, Result};

fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn window_to_csv(w: &OrbitWindow) -> String {
    let d = w.space().dim();
    let mut out = String::from("n");
    for c in 0..d {
        out.push_str(&format!(",c{c}"));
    }
    out.push('\n');
    for (n, p) in w.indexed() {
        out.push_str(&n.to_string());
        for c in p.iter() {
            out.push(',');
            out.push_str(&fmt17(*c));
        }
        out.push('\n');
    }
    out
}

fn rows_to_window(space: &ModelSpace, rows: Vec<(isize, Vec<f64>)>, residual: f64) -> Result<OrbitWindow> {
    let first = rows
        .first()
        .ok_or_else(|| Error::Parse("empty window".into()))?
        .0;
    if first > 0 {
        return Err(Error::Parse("window must contain index 0".into()));
    }
    for (i, (n, _)) in rows.iter().enumerate() {
        if *n != first + i as isize {
            return Err(Error::Parse(format!("non-consecutive index {n}")));
        }
    }
    let coords = rows.into_iter().map(|(_, c)| DVector::from_vec(c)).collect();
    OrbitWindow::new(space.clone(), coords, (-first) as usize, residual)
}

/// Parses a CSV window. The residual is not part of the encoding and is set by the caller.
pub fn window_from_csv(space: &ModelSpace, text: &str, residual: f64) -> Result<OrbitWindow> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| Error::Parse("missing header".into()))?;
    if !header.starts_with('n') {
        return Err(Error::Parse(format!("bad header `{header}`")));
    }
    let mut rows = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let mut fields = line.split(',').map(str::trim);
        let n: isize = fields
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Parse(format!("line {}: bad index", lineno + 2)))?;
        let coords = fields
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 2)))?;
        rows.push((n, coords));
    }
    rows_to_window(space, rows, residual)
}

pub fn window_to_json(w: &OrbitWindow) -> String {
    let rows: Vec<Vec<serde_json::Value>> = w
        .indexed()
        .map(|(n, p)| {
            std::iter::once(serde_json::Value::from(n as i64))
                .chain(p.iter().map(|c| serde_json::Value::from(*c)))
                .collect()
        })
        .collect();
    serde_json::to_string(&rows).expect("finite floats serialize")
}

pub fn window_from_json(space: &ModelSpace, text: &str, residual: f64) -> Result<OrbitWindow> {
    let rows: Vec<Vec<f64>> = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    let rows = rows
        .into_iter()
        .map(|r| {
            let (n, c) = r.split_first().ok_or_else(|| Error::Parse("empty row".into()))?;
            if n.fract() != 0.0 {
                return Err(Error::Parse(format!("non-integer index {n}")));
            }
            Ok((*n as isize, c.to_vec()))
        })
        .collect::<Result<Vec<_>>>()?;
    rows_to_window(space, rows, residual)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;
    use proptest::prelude::*;

    fn window(vals: &[(f64, f64)]) -> OrbitWindow {
        let coords = vals.iter().map(|(a, b)| dvector![*a, *b]).collect();
        OrbitWindow::new(ModelSpace::torus(2), coords, 1, 0.0).unwrap()
    }

    #[test]
    fn csv_layout() {
        let w = window(&[(0.5, 0.25), (0.0, 1.0 / 3.0), (0.125, 0.75)]);
        let csv = window_to_csv(&w);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("n,c0,c1"));
        assert!(lines.next().unwrap().starts_with("-1,5.0000000000000000e-1"));
    }

    #[test]
    fn rejects_garbage() {
        let s = ModelSpace::circle();
        assert!(window_from_csv(&s, "n,c0\n-1,abc\n0,1\n1,2\n", 0.0).is_err());
        assert!(window_from_csv(&s, "n,c0\n-1,0\n1,1\n2,2\n", 0.0).is_err());
        assert!(window_from_json(&s, "[[0.5, 1.0]]", 0.0).is_err());
    }

    proptest! {
        #[test]
        fn text_encodings_round_trip(vals in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 3..12)) {
            let w = window(&vals);
            let space = ModelSpace::torus(2);
            prop_assert_eq!(window_from_csv(&space, &window_to_csv(&w), 0.0).unwrap(), w.clone());
            prop_assert_eq!(window_from_json(&space, &window_to_json(&w), 0.0).unwrap(), w);
        }
    }
}
