//! Time-indexed trajectory records and their CSV form.

use std::io::{Read, Write};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::hamiltonian::Snapshot;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Record {
    pub t: f64,
    pub norm: f64,
    pub energy: f64,
    pub x_mean: Vec<f64>,
    pub p_mean: Vec<f64>,
    pub force_mean: Vec<f64>,
    pub qform_x: Vec<f64>,
    pub qform_p: Vec<f64>,
    pub x_opnorm: Vec<f64>,
    /// `‖P_jψ‖`. Not part of the CSV format; empty for series read back from CSV.
    pub p_opnorm: Vec<f64>,
    pub h_opnorm: f64,
    pub boundary_mass: f64,
}

impl Record {
    pub fn from_snapshot(t: f64, s: Snapshot) -> Self {
        Self {
            t,
            norm: s.norm,
            energy: s.energy,
            x_mean: s.x_mean,
            p_mean: s.p_mean,
            force_mean: s.force_mean,
            qform_x: s.qform_x,
            qform_p: s.qform_p,
            x_opnorm: s.x_opnorm,
            p_opnorm: s.p_opnorm,
            h_opnorm: s.h_opnorm,
            boundary_mass: s.boundary_mass,
        }
    }
}

/// Ordered records with strictly increasing `t`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObservableSeries {
    dims: usize,
    records: Vec<Record>,
}

impl ObservableSeries {
    pub fn new(dims: usize) -> Self {
        Self {
            dims,
            records: Vec::new(),
        }
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn push(&mut self, record: Record) -> Result<()> {
        if record.x_mean.len() != self.dims {
            return Err(Error::InvalidSeries(format!(
                "record has {} axes, series has {}",
                record.x_mean.len(),
                self.dims
            )));
        }
        if let Some(last) = self.records.last() {
            if !(record.t > last.t) {
                return Err(Error::InvalidSeries(format!(
                    "time {} does not follow {}",
                    record.t, last.t
                )));
            }
        }
        self.records.push(record);
        Ok(())
    }

    pub fn times(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.t).collect()
    }

    pub fn column<F: Fn(&Record) -> f64>(&self, f: F) -> Vec<f64> {
        self.records.iter().map(f).collect()
    }

    /// Record spacing, if the time grid is uniform to a relative `1e-9`.
    pub fn uniform_spacing(&self) -> Result<f64> {
        if self.records.len() < 2 {
            return Err(Error::InvalidSeries("fewer than two records".into()));
        }
        let t = self.times();
        let tau = (t[t.len() - 1] - t[0]) / (t.len() - 1) as f64;
        for (k, w) in t.windows(2).enumerate() {
            if ((w[1] - w[0]) - tau).abs() > 1e-9 * tau.abs().max(1e-300) {
                return Err(Error::InvalidSeries(format!(
                    "non-uniform time grid at record {k}: step {} vs mean {tau}",
                    w[1] - w[0]
                )));
            }
        }
        Ok(tau)
    }

    /// Records with `t` inside `[start, end]`.
    pub fn window(&self, start: f64, end: f64) -> ObservableSeries {
        Self {
            dims: self.dims,
            records: self
                .records
                .iter()
                .filter(|r| r.t >= start && r.t <= end)
                .cloned()
                .collect(),
        }
    }

    pub fn csv_header(dims: usize) -> Vec<String> {
        let mut h = vec!["t".to_string(), "norm".to_string(), "energy".to_string()];
        for prefix in ["x_mean", "p_mean", "force", "qform_x", "qform_p", "x_opnorm"] {
            h.extend((1..=dims).map(|j| format!("{prefix}_{j}")));
        }
        h.push("h_opnorm".into());
        h.push("boundary_mass".into());
        h
    }

    /// CSV with 17 significant digits per value. `comment`, if given, becomes
    /// a leading `# …` line.
    pub fn write_csv<W: Write>(&self, mut out: W, comment: Option<&str>) -> Result<()> {
        if let Some(c) = comment {
            writeln!(out, "# {c}")?;
        }
        writeln!(out, "{}", Self::csv_header(self.dims).join(","))?;
        let mut row: Vec<String> = Vec::new();
        for r in &self.records {
            row.clear();
            row.push(fmt17(r.t));
            row.push(fmt17(r.norm));
            row.push(fmt17(r.energy));
            for col in [&r.x_mean, &r.p_mean, &r.force_mean, &r.qform_x, &r.qform_p, &r.x_opnorm] {
                row.extend(col.iter().map(|v| fmt17(*v)));
            }
            row.push(fmt17(r.h_opnorm));
            row.push(fmt17(r.boundary_mass));
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }

    /// Parse the CSV form back. Returns the series and any `#` comment lines.
    pub fn read_csv<R: Read>(reader: R) -> Result<(ObservableSeries, Vec<String>)> {
        let mut text = String::new();
        let mut reader = reader;
        reader.read_to_string(&mut text)?;
        let comments: Vec<String> = text
            .lines()
            .filter_map(|l| l.strip_prefix('#').map(|c| c.trim().to_string()))
            .collect();
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let fmt = |e: csv::Error| Error::InvalidSeries(e.to_string());
        let header: Vec<String> = rdr.headers().map_err(fmt)?.iter().map(String::from).collect();
        let dims = header.iter().filter(|h| h.starts_with("x_mean_")).count();
        let expected = Self::csv_header(dims);
        if let Some(missing) = expected.iter().find(|c| !header.contains(c)) {
            return Err(Error::InvalidSeries(format!("missing column '{missing}'")));
        }
        if header != expected {
            return Err(Error::InvalidSeries(format!(
                "unexpected columns {header:?}"
            )));
        }
        let mut series = ObservableSeries::new(dims);
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(fmt)?;
            let vals: Vec<f64> = rec
                .iter()
                .map(|s| {
                    s.trim().parse::<f64>().map_err(|_| {
                        Error::InvalidSeries(format!("row {}: bad number '{s}'", row + 1))
                    })
                })
                .collect::<Result<_>>()?;
            let take = |k: usize| vals[3 + k * dims..3 + (k + 1) * dims].to_vec();
            series.push(Record {
                t: vals[0],
                norm: vals[1],
                energy: vals[2],
                x_mean: take(0),
                p_mean: take(1),
                force_mean: take(2),
                qform_x: take(3),
                qform_p: take(4),
                x_opnorm: take(5),
                p_opnorm: Vec::new(),
                h_opnorm: vals[3 + 6 * dims],
                boundary_mass: vals[4 + 6 * dims],
            })?;
        }
        Ok((series, comments))
    }
}

/// 17 significant digits.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}
