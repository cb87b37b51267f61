//! Gridded bounded functions with multilinear interpolation.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::grid::Axis;
use crate::error::{Error, Result};

/// Which state coordinate an axis measures.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AxisKind {
    Mass,
    Elapsed,
    Remaining,
}

impl AxisKind {
    pub fn name(self) -> &'static str {
        match self {
            AxisKind::Mass => "mass",
            AxisKind::Elapsed => "elapsed",
            AxisKind::Remaining => "remaining",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "mass" => Some(AxisKind::Mass),
            "elapsed" => Some(AxisKind::Elapsed),
            "remaining" => Some(AxisKind::Remaining),
            _ => None,
        }
    }
}

/// Values at the nodes of a tensor grid, stored row-major (first axis
/// slowest). Off-node queries interpolate multilinearly and clamp to the
/// grid on every axis.
#[derive(Clone, Debug, PartialEq)]
pub struct ValueField {
    axes: Vec<(AxisKind, Axis)>,
    values: Vec<f64>,
}

impl ValueField {
    pub fn new(axes: Vec<(AxisKind, Axis)>, values: Vec<f64>) -> Result<Self> {
        if axes.is_empty() || axes.len() > 3 {
            return Err(Error::FieldFormat(format!("{} axes; expected 1 to 3", axes.len())));
        }
        let len: usize = axes.iter().map(|(_, a)| a.n).product();
        if len != values.len() {
            return Err(Error::FieldFormat(format!("{} values for {len} nodes", values.len())));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::FieldFormat(format!("non-finite value {v}")));
        }
        Ok(ValueField { axes, values })
    }

    pub fn zeros(axes: Vec<(AxisKind, Axis)>) -> Self {
        let len = axes.iter().map(|(_, a)| a.n).product();
        ValueField {
            axes,
            values: vec![0.0; len],
        }
    }

    /// Fill from a function of the node coordinates.
    pub fn from_fn(axes: Vec<(AxisKind, Axis)>, f: impl Fn(&[f64]) -> f64) -> Self {
        let mut field = ValueField::zeros(axes);
        let dims = field.dims();
        let mut idx = vec![0usize; dims.len()];
        let mut point = vec![0.0; dims.len()];
        for flat in 0..field.values.len() {
            let mut rem = flat;
            for d in (0..dims.len()).rev() {
                idx[d] = rem % dims[d];
                rem /= dims[d];
            }
            for d in 0..dims.len() {
                point[d] = field.axes[d].1.node(idx[d]);
            }
            field.values[flat] = f(&point);
        }
        field
    }

    pub fn axes(&self) -> &[(AxisKind, Axis)] {
        &self.axes
    }

    pub fn axis(&self, kind: AxisKind) -> Option<&Axis> {
        self.axes.iter().find(|(k, _)| *k == kind).map(|(_, a)| a)
    }

    pub fn dims(&self) -> Vec<usize> {
        self.axes.iter().map(|(_, a)| a.n).collect()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn same_grid(&self, other: &ValueField) -> bool {
        self.axes == other.axes
    }

    fn flat_index(&self, idx: &[usize]) -> usize {
        let mut flat = 0;
        for (d, &i) in idx.iter().enumerate() {
            flat = flat * self.axes[d].1.n + i;
        }
        flat
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.values[self.flat_index(idx)]
    }

    /// Multilinear interpolation at `point` (one coordinate per axis).
    pub fn eval(&self, point: &[f64]) -> f64 {
        debug_assert_eq!(point.len(), self.axes.len());
        let mut cells = [(0usize, 0.0f64); 3];
        for (d, (_, ax)) in self.axes.iter().enumerate() {
            cells[d] = ax.locate(point[d]);
        }
        let nd = self.axes.len();
        let mut acc = 0.0;
        let mut idx = [0usize; 3];
        for corner in 0..(1usize << nd) {
            let mut w = 1.0;
            for d in 0..nd {
                let (i, t) = cells[d];
                if corner >> d & 1 == 1 {
                    if t == 0.0 {
                        w = 0.0;
                        break;
                    }
                    idx[d] = i + 1;
                    w *= t;
                } else {
                    idx[d] = i;
                    w *= 1.0 - t;
                }
            }
            if w != 0.0 {
                acc += w * self.get(&idx[..nd]);
            }
        }
        acc
    }

    /// Evaluate at a state `(mass, elapsed, remaining)`, ignoring coordinates
    /// the field has no axis for.
    pub fn eval_state(&self, a: f64, b: f64, c: f64) -> f64 {
        let mut point = [0.0; 3];
        for (d, (kind, _)) in self.axes.iter().enumerate() {
            point[d] = match kind {
                AxisKind::Mass => a,
                AxisKind::Elapsed => b,
                AxisKind::Remaining => c,
            };
        }
        self.eval(&point[..self.axes.len()])
    }

    /// `sup |v|` over the nodes.
    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `sup |self - other|` over the nodes. Panics on mismatched grids.
    pub fn distance(&self, other: &ValueField) -> f64 {
        assert!(self.same_grid(other), "fields live on different grids");
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ValueField {
        ValueField {
            axes: self.axes.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Plain-text layout: `#` header lines with the axis descriptors, a
    /// column header, then one row per node in row-major order.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let mut s = String::new();
        s.push_str("# twostop value field v1\n");
        for (kind, ax) in &self.axes {
            writeln!(s, "# axis {} {} {} {}", kind.name(), ax.lo, ax.hi, ax.n).unwrap();
        }
        let names: Vec<_> = self.axes.iter().map(|(k, _)| k.name()).collect();
        writeln!(s, "{},value", names.join(",")).unwrap();
        let dims = self.dims();
        let mut idx = vec![0usize; dims.len()];
        for (flat, v) in self.values.iter().enumerate() {
            let mut rem = flat;
            for d in (0..dims.len()).rev() {
                idx[d] = rem % dims[d];
                rem /= dims[d];
            }
            for (d, &i) in idx.iter().enumerate() {
                write!(s, "{},", self.axes[d].1.node(i)).unwrap();
            }
            writeln!(s, "{v}").unwrap();
        }
        w.write_all(s.as_bytes())?;
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut axes = Vec::new();
        let mut values = Vec::new();
        let mut seen_header = false;
        for line in r.lines() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("# axis ") {
                let parts: Vec<_> = rest.split_whitespace().collect();
                let bad = || Error::FieldFormat(format!("bad axis line `{line}`"));
                if parts.len() != 4 {
                    return Err(bad());
                }
                let kind = AxisKind::parse(parts[0]).ok_or_else(bad)?;
                let lo: f64 = parts[1].parse().map_err(|_| bad())?;
                let hi: f64 = parts[2].parse().map_err(|_| bad())?;
                let n: usize = parts[3].parse().map_err(|_| bad())?;
                if n == 0 {
                    return Err(bad());
                }
                axes.push((kind, Axis::new(lo, hi, n)));
                continue;
            }
            if line.starts_with('#') {
                continue;
            }
            if !seen_header {
                seen_header = true;
                continue;
            }
            let last = line
                .rsplit(',')
                .next()
                .ok_or_else(|| Error::FieldFormat(format!("bad row `{line}`")))?;
            values.push(
                last.parse::<f64>()
                    .map_err(|_| Error::FieldFormat(format!("bad value in row `{line}`")))?,
            );
        }
        ValueField::new(axes, values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn field3() -> ValueField {
        ValueField::from_fn(
            vec![
                (AxisKind::Mass, Axis::new(0.0, 4.0, 5)),
                (AxisKind::Elapsed, Axis::new(0.0, 2.0, 3)),
                (AxisKind::Remaining, Axis::new(0.0, 2.0, 3)),
            ],
            |p| (p[0] * 1.3).sin() + p[1] * p[2] - 0.1 * p[2],
        )
    }

    #[test]
    fn exact_at_nodes_and_linear_between() {
        let f = field3();
        assert_eq!(f.get(&[2, 1, 2]), f.eval(&[2.0, 1.0, 2.0]));
        let lin = ValueField::from_fn(
            vec![
                (AxisKind::Mass, Axis::new(0.0, 4.0, 5)),
                (AxisKind::Remaining, Axis::new(0.0, 2.0, 3)),
            ],
            |p| 2.0 * p[0] - 3.0 * p[1] + 1.0,
        );
        let v = lin.eval(&[1.37, 0.61]);
        assert!((v - (2.0 * 1.37 - 3.0 * 0.61 + 1.0)).abs() < 1e-12);
        // mass clamps above A
        assert_eq!(lin.eval(&[9.0, 0.5]), lin.eval(&[4.0, 0.5]));
    }

    #[test]
    fn interpolation_stays_within_neighbour_range() {
        let f = field3();
        let v = f.eval(&[1.5, 0.5, 1.5]);
        let corners: Vec<f64> = [1, 2]
            .iter()
            .flat_map(|&i| [0, 1].into_iter().flat_map(move |j| [1, 2].into_iter().map(move |k| (i, j, k))))
            .map(|(i, j, k)| f.get(&[i, j, k]))
            .collect();
        let lo = corners.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = corners.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!(v >= lo - 1e-15 && v <= hi + 1e-15);
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let f = field3().map(|v| v / 3.0);
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let back = ValueField::read_csv(&buf[..]).unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn malformed_inputs_are_rejected() {
        assert!(ValueField::new(vec![(AxisKind::Mass, Axis::new(0.0, 1.0, 3))], vec![0.0; 2]).is_err());
        assert!(ValueField::new(vec![(AxisKind::Mass, Axis::new(0.0, 1.0, 2))], vec![0.0, f64::NAN]).is_err());
        let text = "# axis mass 0 1 2\nmass,value\n0,1\n1,oops\n";
        assert!(ValueField::read_csv(text.as_bytes()).is_err());
    }

    #[test]
    fn norms() {
        let f = field3();
        let g = f.map(|v| v + 0.25);
        assert!((f.distance(&g) - 0.25).abs() < 1e-15);
        assert!(f.sup_norm() >= f.get(&[0, 2, 2]).abs());
    }
}
