//! Triangle meshes, a small OBJ reader/writer and ray/triangle intersection.
//!
//! The text format is the OBJ subset `v x y z`, `f a b c` (1-based, `a/b/c`
//! style references accepted, polygons fanned into triangles) and
//! `usemtl name` to tag the faces that follow. Comments start with `#`; `o`,
//! `g`, `s`, `vn`, `vt` and `mtllib` lines are ignored.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::math::Vec3;

pub const MIN_AREA: f64 = 1e-12;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[usize; 3]>,
    /// Material name per triangle.
    pub materials: Vec<String>,
}

/// Plane through a triangle: `normal . x = offset`, unit normal.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Plane {
    pub normal: Vec3,
    pub offset: f64,
}

impl Plane {
    pub fn signed_distance(&self, p: Vec3) -> f64 {
        self.normal.dot(p) - self.offset
    }

    pub fn mirror(&self, p: Vec3) -> Vec3 {
        p - self.normal * (2.0 * self.signed_distance(p))
    }
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<[usize; 3]>, materials: Vec<String>) -> Result<Self> {
        let m = Self { vertices, triangles, materials };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.triangles.len() != self.materials.len() {
            return Err(Error::Shape(format!(
                "{} triangles but {} material tags",
                self.triangles.len(),
                self.materials.len()
            )));
        }
        if let Some(v) = self.vertices.iter().find(|v| !v.is_finite()) {
            return Err(Error::Format(format!("non-finite vertex {v:?}")));
        }
        for (i, t) in self.triangles.iter().enumerate() {
            if t.iter().any(|&k| k >= self.vertices.len()) {
                return Err(Error::Format(format!("triangle {i} references a missing vertex")));
            }
            if self.area(i) <= MIN_AREA {
                return Err(Error::Format(format!("triangle {i} is degenerate")));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.triangles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn corners(&self, i: usize) -> [Vec3; 3] {
        let [a, b, c] = self.triangles[i];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn area(&self, i: usize) -> f64 {
        let [a, b, c] = self.corners(i);
        0.5 * (b - a).cross(c - a).norm()
    }

    pub fn plane(&self, i: usize) -> Plane {
        let [a, b, c] = self.corners(i);
        let normal = (b - a).cross(c - a).normalize();
        Plane { normal, offset: normal.dot(a) }
    }

    pub fn push_triangle(&mut self, corners: [Vec3; 3], material: &str) -> Result<()> {
        let base = self.vertices.len();
        self.vertices.extend_from_slice(&corners);
        self.triangles.push([base, base + 1, base + 2]);
        self.materials.push(material.to_string());
        if self.area(self.triangles.len() - 1) <= MIN_AREA {
            self.vertices.truncate(base);
            self.triangles.pop();
            self.materials.pop();
            return Err(Error::Format("degenerate triangle".into()));
        }
        Ok(())
    }

    /// Planar quad `a b c d` (in order) as two triangles.
    pub fn push_quad(&mut self, q: [Vec3; 4], material: &str) -> Result<()> {
        self.push_triangle([q[0], q[1], q[2]], material)?;
        self.push_triangle([q[0], q[2], q[3]], material)
    }

    /// Axis-aligned box surface, 12 triangles.
    pub fn cuboid(center: Vec3, half: Vec3, material: &str) -> Result<Self> {
        let mut m = Self::default();
        m.append_cuboid(center, half, material)?;
        Ok(m)
    }

    pub fn append_cuboid(&mut self, center: Vec3, half: Vec3, material: &str) -> Result<()> {
        let c = |sx: f64, sy: f64, sz: f64| center + Vec3::new(sx * half.x, sy * half.y, sz * half.z);
        let faces = [
            [c(-1., -1., -1.), c(-1., 1., -1.), c(-1., 1., 1.), c(-1., -1., 1.)],
            [c(1., -1., -1.), c(1., -1., 1.), c(1., 1., 1.), c(1., 1., -1.)],
            [c(-1., -1., -1.), c(-1., -1., 1.), c(1., -1., 1.), c(1., -1., -1.)],
            [c(-1., 1., -1.), c(1., 1., -1.), c(1., 1., 1.), c(-1., 1., 1.)],
            [c(-1., -1., -1.), c(1., -1., -1.), c(1., 1., -1.), c(-1., 1., -1.)],
            [c(-1., -1., 1.), c(-1., 1., 1.), c(1., 1., 1.), c(1., -1., 1.)],
        ];
        for f in faces {
            self.push_quad(f, material)?;
        }
        Ok(())
    }

    pub fn append(&mut self, other: &TriangleMesh) {
        let base = self.vertices.len();
        self.vertices.extend_from_slice(&other.vertices);
        self.triangles.extend(other.triangles.iter().map(|t| t.map(|k| k + base)));
        self.materials.extend(other.materials.iter().cloned());
    }

    pub fn parse_obj(text: &str) -> Result<Self> {
        let mut vertices = Vec::new();
        let mut triangles = Vec::new();
        let mut materials = Vec::new();
        let mut current = String::from("default");
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            let mut it = line.split_whitespace();
            let Some(tag) = it.next() else { continue };
            let err = |msg: &str| Error::Format(format!("mesh line {}: {msg}", ln + 1));
            match tag {
                "v" => {
                    let xs: Vec<f64> = it
                        .map(|s| s.parse::<f64>().map_err(|_| err("bad coordinate")))
                        .collect::<Result<_>>()?;
                    if xs.len() < 3 {
                        return Err(err("vertex needs three coordinates"));
                    }
                    vertices.push(Vec3::new(xs[0], xs[1], xs[2]));
                }
                "f" => {
                    let idx: Vec<usize> = it
                        .map(|s| {
                            let head = s.split('/').next().unwrap_or("");
                            let k: i64 = head.parse().map_err(|_| err("bad face index"))?;
                            let n = vertices.len() as i64;
                            let resolved = if k > 0 { k - 1 } else { n + k };
                            if k == 0 || resolved < 0 || resolved >= n {
                                return Err(err("face index out of range"));
                            }
                            Ok(resolved as usize)
                        })
                        .collect::<Result<_>>()?;
                    if idx.len() < 3 {
                        return Err(err("face needs at least three vertices"));
                    }
                    for k in 1..idx.len() - 1 {
                        triangles.push([idx[0], idx[k], idx[k + 1]]);
                        materials.push(current.clone());
                    }
                }
                "usemtl" => {
                    current = it.next().ok_or_else(|| err("usemtl needs a name"))?.to_string();
                }
                "o" | "g" | "s" | "vn" | "vt" | "mtllib" => {}
                other => return Err(err(&format!("unsupported record '{other}'"))),
            }
        }
        Self::new(vertices, triangles, materials)
    }

    pub fn to_obj(&self) -> String {
        let mut s = String::new();
        for v in &self.vertices {
            let _ = writeln!(s, "v {:?} {:?} {:?}", v.x, v.y, v.z);
        }
        let mut current: Option<&str> = None;
        for (t, m) in self.triangles.iter().zip(&self.materials) {
            if current != Some(m.as_str()) {
                let _ = writeln!(s, "usemtl {m}");
                current = Some(m);
            }
            let _ = writeln!(s, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1);
        }
        s
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse_obj(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_obj())?;
        Ok(())
    }
}

/// Nearest intersection with `t > 1e-9`: `(t, u, v)` where the hit point is
/// `(1 - u - v) a + u b + v c`.
pub fn moller_trumbore(origin: Vec3, dir: Vec3, tri: [Vec3; 3]) -> Option<(f64, f64, f64)> {
    let [a, b, c] = tri;
    let e1 = b - a;
    let e2 = c - a;
    let p = dir.cross(e2);
    let det = e1.dot(p);
    if det.abs() < 1e-14 {
        return None;
    }
    let inv = 1.0 / det;
    let s = origin - a;
    let u = s.dot(p) * inv;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let q = s.cross(e1);
    let v = dir.dot(q) * inv;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    let t = e2.dot(q) * inv;
    (t > 1e-9).then_some((t, u, v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit_tri() -> [Vec3; 3] {
        [Vec3::ZERO, Vec3::X, Vec3::Y]
    }

    #[test]
    fn axis_aligned_hit() {
        let (t, u, v) = moller_trumbore(Vec3::new(0.25, 0.25, 1.0), -Vec3::Z, unit_tri()).unwrap();
        assert!((t - 1.0).abs() < 1e-12 && (u - 0.25).abs() < 1e-12 && (v - 0.25).abs() < 1e-12);
    }

    #[test]
    fn wrong_half_space_misses() {
        assert!(moller_trumbore(Vec3::new(0.25, 0.25, 1.0), Vec3::Z, unit_tri()).is_none());
    }

    /// Plane intersection followed by barycentric coordinates from sub-areas.
    fn brute_force(o: Vec3, d: Vec3, tri: [Vec3; 3]) -> Option<(f64, f64, f64)> {
        let [a, b, c] = tri;
        let n = (b - a).cross(c - a);
        let denom = n.dot(d);
        if denom.abs() < 1e-12 {
            return None;
        }
        let t = n.dot(a - o) / denom;
        if t <= 1e-9 {
            return None;
        }
        let p = o + d * t;
        let nn = n.norm_sq();
        let u = (p - a).cross(c - a).dot(n) / nn;
        let v = (b - a).cross(p - a).dot(n) / nn;
        let w = 1.0 - u - v;
        (u >= 0.0 && v >= 0.0 && w >= 0.0).then_some((t, u, v))
    }

    #[test]
    fn random_pairs_agree_with_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut r = || Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let mut hits = 0;
        let mut checked = 0;
        while checked < 10_000 {
            let tri = [r(), r(), r()];
            let o = r() * 2.0;
            // half the rays aim at a point near the triangle
            let d = if checked % 2 == 0 { r() } else { (tri[0] + tri[1] + tri[2]) * (1.0 / 3.0) + r() * 0.3 - o };
            if d.norm() < 1e-3 || 0.5 * (tri[1] - tri[0]).cross(tri[2] - tri[0]).norm() < 1e-3 {
                continue;
            }
            let d = d.normalize();
            let a = moller_trumbore(o, d, tri);
            let b = brute_force(o, d, tri);
            checked += 1;
            match (a, b) {
                (Some(x), Some(y)) => {
                    hits += 1;
                    assert!((x.0 - y.0).abs() < 1e-8 && (x.1 - y.1).abs() < 1e-8 && (x.2 - y.2).abs() < 1e-8, "{x:?} {y:?}");
                }
                (None, None) => {}
                // boundary cases where the two disagree only by rounding
                (Some(x), None) | (None, Some(x)) => {
                    let margin = x.1.min(x.2).min(1.0 - x.1 - x.2).abs();
                    assert!(margin < 1e-9 || (x.0 - 1e-9).abs() < 1e-9, "{a:?} vs {b:?}");
                }
            }
        }
        assert!(hits > 2000, "{hits}");
    }

    #[test]
    fn obj_round_trip() {
        let mut m = TriangleMesh::cuboid(Vec3::new(1.0, 0.5, 0.0), Vec3::new(0.5, 1.0, 1.5), "concrete").unwrap();
        m.push_triangle([Vec3::ZERO, Vec3::X * 3.0, Vec3::Z * 0.1], "glass").unwrap();
        let back = TriangleMesh::parse_obj(&m.to_obj()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn obj_parsing_features() {
        let text = "# quad\nv 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nusemtl wood\nf 1/1 2/2 3/3 4/4\nf -4 -3 -1\n";
        let m = TriangleMesh::parse_obj(text).unwrap();
        assert_eq!(m.len(), 3);
        assert_eq!(m.triangles[1], [0, 2, 3]);
        assert!(m.materials.iter().all(|s| s == "wood"));
    }

    #[test]
    fn obj_rejects_bad_input() {
        for bad in ["v 0 0\n", "v 0 0 0\nf 1 2 3\n", "v 0 0 0\nv 1 0 0\nv 2 0 0\nf 1 2 3\n", "x 1\n", "usemtl\n"] {
            assert!(matches!(TriangleMesh::parse_obj(bad), Err(Error::Format(_))), "{bad}");
        }
    }

    #[test]
    fn plane_mirror_is_involution() {
        let m = TriangleMesh::cuboid(Vec3::ZERO, Vec3::new(1.0, 2.0, 3.0), "x").unwrap();
        for i in 0..m.len() {
            let pl = m.plane(i);
            let p = Vec3::new(0.3, -0.7, 2.2);
            assert!((pl.mirror(pl.mirror(p)) - p).norm() < 1e-12);
            assert!((pl.signed_distance(pl.mirror(p)) + pl.signed_distance(p)).abs() < 1e-12);
        }
    }
}
