//! Plain-text point tables: `#`-prefixed header lines, then one point per
//! line with whitespace-separated columns `x y [label [delta]]`.

use std::io::{BufRead, Write};

use super::losses::MeasurementSet;
use crate::autodiff::Point;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointTable {
    pub name: String,
    pub seed: Option<u64>,
    pub points: Vec<Point>,
    pub labels: Option<Vec<f64>>,
    pub deltas: Option<Vec<f64>>,
}

impl PointTable {
    pub fn plain(name: &str, seed: u64, points: &[Point]) -> Self {
        Self { name: name.into(), seed: Some(seed), points: points.to_vec(), labels: None, deltas: None }
    }

    pub fn from_measurements(name: &str, seed: u64, m: &MeasurementSet) -> Self {
        let deltas = m.deltas.clone().unwrap_or_else(|| vec![m.delta; m.len()]);
        Self {
            name: name.into(),
            seed: Some(seed),
            points: m.points.clone(),
            labels: Some(m.labels.clone()),
            deltas: Some(deltas),
        }
    }

    /// Measurements from a table; uniform per-point deltas collapse to the
    /// homoscedastic form.
    pub fn into_measurements(self, default_delta: f64) -> Result<MeasurementSet> {
        let labels =
            self.labels.ok_or_else(|| Error::Format(format!("point set '{}' has no label column", self.name)))?;
        let (delta, deltas) = match self.deltas {
            Some(d) if d.windows(2).all(|w| w[0] == w[1]) && !d.is_empty() => (d[0], None),
            Some(d) => (default_delta, Some(d)),
            None => (default_delta, None),
        };
        Ok(MeasurementSet { points: self.points, labels, delta, deltas })
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# set {}", self.name)?;
        if let Some(seed) = self.seed {
            writeln!(w, "# seed {seed}")?;
        }
        let cols = match (&self.labels, &self.deltas) {
            (Some(_), Some(_)) => "x y label delta",
            (Some(_), None) => "x y label",
            _ => "x y",
        };
        writeln!(w, "# columns {cols}")?;
        for (i, p) in self.points.iter().enumerate() {
            write!(w, "{} {}", p[0], p[1])?;
            if let Some(l) = &self.labels {
                write!(w, " {}", l[i])?;
                if let Some(d) = &self.deltas {
                    write!(w, " {}", d[i])?;
                }
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(r: R) -> Result<Self> {
        let mut table = PointTable::default();
        let mut labels = Vec::new();
        let mut deltas = Vec::new();
        let mut width = None;
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            let lineno = i + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            if let Some(header) = trimmed.strip_prefix('#') {
                let mut parts = header.split_whitespace();
                match parts.next() {
                    Some("set") => table.name = parts.collect::<Vec<_>>().join(" "),
                    Some("seed") => {
                        table.seed = parts.next().and_then(|s| s.parse().ok());
                    }
                    _ => {}
                }
                continue;
            }
            let values = trimmed
                .split_whitespace()
                .map(|s| s.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::MalformedLine { line: lineno, reason: e.to_string() })?;
            if !(2..=4).contains(&values.len()) || *width.get_or_insert(values.len()) != values.len() {
                return Err(Error::MalformedLine {
                    line: lineno,
                    reason: format!("unexpected column count {}", values.len()),
                });
            }
            table.points.push([values[0], values[1]]);
            if values.len() >= 3 {
                labels.push(values[2]);
            }
            if values.len() == 4 {
                deltas.push(values[3]);
            }
        }
        if width.unwrap_or(0) >= 3 {
            table.labels = Some(labels);
        }
        if width == Some(4) {
            table.deltas = Some(deltas);
        }
        Ok(table)
    }
}
