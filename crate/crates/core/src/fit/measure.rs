//! Channel measurements and their comma-separated file format.
//!
//! ```text
//! tx_x,tx_y,tx_z,rx_x,rx_y,rx_z,freq_hz,kind,values...
//! 0,0,1,2.5,0.3,1,2400000000,power_db,-41.2
//! 0,0,1,2.5,0.3,1,2400000000,complex,0.0012,-0.0031,0.0011,-0.0030
//! ```
//!
//! `power_db` rows carry one value, `20 log10 |E|`. `complex` rows carry one
//! or more repeated snapshots of the channel as interleaved real and
//! imaginary parts.

use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::math::Vec3;

pub const CSV_HEADER: &str = "tx_x,tx_y,tx_z,rx_x,rx_y,rx_z,freq_hz,kind,values";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MeasurementKind {
    PowerDb,
    Complex,
}

impl MeasurementKind {
    pub fn name(self) -> &'static str {
        match self {
            MeasurementKind::PowerDb => "power_db",
            MeasurementKind::Complex => "complex",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "power_db" => Ok(MeasurementKind::PowerDb),
            "complex" => Ok(MeasurementKind::Complex),
            other => Err(Error::Format(format!("unknown measurement kind '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum MeasuredValue {
    PowerDb(f64),
    /// Repeated snapshots of the same channel.
    Complex(Vec<Complex64>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChannelMeasurement {
    pub tx: Vec3,
    pub rx: Vec3,
    pub freq: f64,
    pub value: MeasuredValue,
}

impl ChannelMeasurement {
    pub fn kind(&self) -> MeasurementKind {
        match self.value {
            MeasuredValue::PowerDb(_) => MeasurementKind::PowerDb,
            MeasuredValue::Complex(_) => MeasurementKind::Complex,
        }
    }

    /// Measured power in dB (mean snapshot power for complex records).
    pub fn power_db(&self) -> f64 {
        match &self.value {
            MeasuredValue::PowerDb(v) => *v,
            MeasuredValue::Complex(s) => 10.0 * mean_power(s).log10(),
        }
    }

    fn validate(&self) -> Result<()> {
        let finite = self.tx.is_finite()
            && self.rx.is_finite()
            && self.freq.is_finite()
            && match &self.value {
                MeasuredValue::PowerDb(v) => v.is_finite(),
                MeasuredValue::Complex(s) => !s.is_empty() && s.iter().all(|c| c.re.is_finite() && c.im.is_finite()),
            };
        if !finite {
            return Err(Error::Format("measurement has non-finite or missing values".into()));
        }
        if !(self.freq > 0.0) {
            return Err(Error::Format("measurement frequency must be positive".into()));
        }
        Ok(())
    }
}

pub(crate) fn mean_power(s: &[Complex64]) -> f64 {
    s.iter().map(|c| c.norm_sqr()).sum::<f64>() / s.len() as f64
}

/// Non-empty list of measurements of a single kind.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementSet {
    records: Vec<ChannelMeasurement>,
}

impl MeasurementSet {
    pub fn new(records: Vec<ChannelMeasurement>) -> Result<Self> {
        let first = records.first().ok_or(Error::EmptySamples)?;
        let kind = first.kind();
        for r in &records {
            r.validate()?;
            if r.kind() != kind {
                return Err(Error::Format("measurement set mixes kinds".into()));
            }
        }
        Ok(Self { records })
    }

    pub fn records(&self) -> &[ChannelMeasurement] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn kind(&self) -> MeasurementKind {
        self.records[0].kind()
    }

    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let recs = indices
            .iter()
            .map(|&i| {
                self.records
                    .get(i)
                    .cloned()
                    .ok_or_else(|| Error::Config(format!("measurement index {i} out of range")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(recs)
    }

    /// First `n` records and the rest.
    pub fn split_at(&self, n: usize) -> Result<(Self, Self)> {
        if n == 0 || n >= self.len() {
            return Err(Error::Config(format!("cannot split {} records at {n}", self.len())));
        }
        Ok((Self { records: self.records[..n].to_vec() }, Self { records: self.records[n..].to_vec() }))
    }

    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'));
        match lines.next() {
            Some((_, h)) if h.trim().starts_with("tx_x") => {}
            _ => return Err(Error::Format(format!("measurement file must start with the header '{CSV_HEADER}'"))),
        }
        let mut records = Vec::new();
        for (ln, line) in lines {
            let err = |m: &str| Error::Format(format!("measurement line {}: {m}", ln + 1));
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            if cols.len() < 9 {
                return Err(err("expected at least 9 columns"));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| err(&format!("bad number '{s}'")));
            let tx = Vec3::new(num(cols[0])?, num(cols[1])?, num(cols[2])?);
            let rx = Vec3::new(num(cols[3])?, num(cols[4])?, num(cols[5])?);
            let freq = num(cols[6])?;
            let vals = cols[8..].iter().map(|s| num(s)).collect::<Result<Vec<f64>>>()?;
            let value = match MeasurementKind::parse(cols[7]).map_err(|_| err("unknown kind"))? {
                MeasurementKind::PowerDb => {
                    if vals.len() != 1 {
                        return Err(err("power_db takes exactly one value"));
                    }
                    MeasuredValue::PowerDb(vals[0])
                }
                MeasurementKind::Complex => {
                    if vals.len() % 2 != 0 {
                        return Err(err("complex values come in re,im pairs"));
                    }
                    MeasuredValue::Complex(vals.chunks(2).map(|c| Complex64::new(c[0], c[1])).collect())
                }
            };
            let rec = ChannelMeasurement { tx, rx, freq, value };
            rec.validate().map_err(|e| err(&e.to_string()))?;
            records.push(rec);
        }
        Self::new(records)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(CSV_HEADER);
        s.push('\n');
        for r in &self.records {
            let _ = write!(
                s,
                "{:?},{:?},{:?},{:?},{:?},{:?},{:?},{}",
                r.tx.x,
                r.tx.y,
                r.tx.z,
                r.rx.x,
                r.rx.y,
                r.rx.z,
                r.freq,
                r.kind().name()
            );
            match &r.value {
                MeasuredValue::PowerDb(v) => {
                    let _ = write!(s, ",{v:?}");
                }
                MeasuredValue::Complex(c) => {
                    for z in c {
                        let _ = write!(s, ",{:?},{:?}", z.re, z.im);
                    }
                }
            }
            s.push('\n');
        }
        s
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse_csv(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}
