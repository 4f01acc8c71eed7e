//! Coverage grids: CSV round trip and 8-bit graymap export.
//!
//! CSV layout: a header line `origin_x,origin_y,origin_z,cell,nx,ny`, its
//! values, then `ny` rows of `nx` power values (dB), row `j` at
//! `y = origin_y + j * cell`. Cells without any path hold `-inf`.

use rfprim::math::Vec3;
use rfprim::Error;

const HEADER: &str = "origin_x,origin_y,origin_z,cell,nx,ny";

#[derive(Clone, Debug, PartialEq)]
pub struct HeatmapGrid {
    pub origin: Vec3,
    pub cell: f64,
    pub nx: usize,
    pub ny: usize,
    /// Row-major, `values[j * nx + i]`.
    pub values: Vec<f64>,
}

fn fmt_err(m: impl Into<String>) -> Error {
    Error::Format(m.into())
}

impl HeatmapGrid {
    pub fn new(origin: Vec3, cell: f64, nx: usize, ny: usize, values: Vec<f64>) -> rfprim::Result<Self> {
        if nx == 0 || ny == 0 || !(cell > 0.0) || !cell.is_finite() {
            return Err(Error::Config("grid needs nx, ny >= 1 and a positive cell size".into()));
        }
        if values.len() != nx * ny {
            return Err(Error::Shape(format!("{} values for a {nx}x{ny} grid", values.len())));
        }
        if values.iter().any(|v| !(v.is_finite() || *v == f64::NEG_INFINITY)) {
            return Err(Error::Config("grid values must be finite or -inf".into()));
        }
        Ok(Self { origin, cell, nx, ny, values })
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.nx + i]
    }

    pub fn to_csv(&self) -> String {
        let o = self.origin;
        let mut s = format!("{HEADER}\n{},{},{},{},{},{}\n", o.x, o.y, o.z, self.cell, self.nx, self.ny);
        for row in self.values.chunks(self.nx) {
            let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        s
    }

    pub fn parse_csv(text: &str) -> rfprim::Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        if lines.next().map(str::trim) != Some(HEADER) {
            return Err(fmt_err("missing heatmap header"));
        }
        let meta: Vec<&str> = lines.next().ok_or_else(|| fmt_err("missing grid description"))?.split(',').collect();
        if meta.len() != 6 {
            return Err(fmt_err("grid description needs 6 fields"));
        }
        let f = |k: usize| meta[k].trim().parse::<f64>().map_err(|e| fmt_err(format!("field {k}: {e}")));
        let u = |k: usize| meta[k].trim().parse::<usize>().map_err(|e| fmt_err(format!("field {k}: {e}")));
        let (nx, ny) = (u(4)?, u(5)?);
        let mut values = Vec::with_capacity(nx * ny);
        for (j, line) in lines.enumerate() {
            let row: Vec<f64> = line
                .split(',')
                .map(|v| v.trim().parse::<f64>().map_err(|e| fmt_err(format!("row {j}: {e}"))))
                .collect::<rfprim::Result<_>>()?;
            if row.len() != nx {
                return Err(fmt_err(format!("row {j} has {} values, expected {nx}", row.len())));
            }
            values.extend(row);
        }
        Self::new(Vec3::new(f(0)?, f(1)?, f(2)?), f(3)?, nx, ny, values)
    }

    /// Binary graymap, `floor_db` black, the grid maximum white, highest
    /// `y` row first.
    pub fn to_pgm(&self, floor_db: f64) -> Vec<u8> {
        let max = self.values.iter().copied().filter(|v| v.is_finite()).fold(f64::NEG_INFINITY, f64::max);
        let span = max - floor_db;
        let mut out = format!("P5\n{} {}\n255\n", self.nx, self.ny).into_bytes();
        for row in self.values.chunks(self.nx).rev() {
            for &v in row {
                let level = if !(v > floor_db) {
                    0.0
                } else if span > 0.0 {
                    (255.0 * (v - floor_db) / span).clamp(0.0, 255.0)
                } else {
                    255.0
                };
                out.push(level.round() as u8);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> HeatmapGrid {
        HeatmapGrid::new(Vec3::new(-1.0, 0.5, 1.25), 0.1, 3, 2, vec![-40.123456789, f64::NEG_INFINITY, -60.0, -50.0, 1e-17, -120.5]).unwrap()
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let g = grid();
        let back = HeatmapGrid::parse_csv(&g.to_csv()).unwrap();
        assert_eq!(back.nx, 3);
        for (a, b) in g.values.iter().zip(&back.values) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert_eq!(back, g);
    }

    #[test]
    fn malformed_grids_rejected() {
        assert!(HeatmapGrid::new(Vec3::ZERO, 0.1, 0, 1, vec![]).is_err());
        assert!(HeatmapGrid::new(Vec3::ZERO, 0.1, 1, 1, vec![f64::NAN]).is_err());
        assert!(HeatmapGrid::new(Vec3::ZERO, 0.1, 2, 1, vec![0.0]).is_err());
        let csv = grid().to_csv();
        assert!(HeatmapGrid::parse_csv(&csv.replace("origin_x", "ox")).is_err());
        assert!(HeatmapGrid::parse_csv(&csv.replacen("-60", "-60,1", 1)).is_err());
    }

    #[test]
    fn graymap_levels() {
        let g = HeatmapGrid::new(Vec3::ZERO, 1.0, 2, 2, vec![-100.0, -20.0, f64::NEG_INFINITY, -60.0]).unwrap();
        let pgm = g.to_pgm(-100.0);
        let header = b"P5\n2 2\n255\n";
        assert_eq!(&pgm[..header.len()], header);
        // top row is j = 1
        assert_eq!(&pgm[header.len()..], &[0, 128, 0, 255]);
    }
}
