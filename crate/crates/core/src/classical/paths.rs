//! Image-method path enumeration and coherent field summation.

use std::collections::BTreeSet;
use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;

use super::mesh::{moller_trumbore, Plane, TriangleMesh};
use crate::error::{Error, Result};
use crate::materials::MaterialTable;
use crate::math::{pairwise_sum, Vec3, C0};
use crate::scene::Radio;

pub const MAX_BOUNCES: usize = 3;

/// Perfect reflector: `R = -1`, opaque.
pub const PEC: &str = "pec";
/// Fully absorbing: `R = 0`, opaque.
pub const ABSORBER: &str = "absorber";

fn opaque(material: &str) -> bool {
    material == PEC || material == ABSORBER
}

/// A surface touched by a path, either as a bounce or a straight crossing.
#[derive(Clone, Debug, PartialEq)]
pub struct Contact {
    pub triangle: usize,
    pub point: Vec3,
    /// Angle between the ray and the surface normal, in `[0, pi/2]`.
    pub theta: f64,
    pub material: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpecularPath {
    /// `tx`, reflection points, `rx`.
    pub vertices: Vec<Vec3>,
    pub bounces: Vec<Contact>,
    /// Surfaces passed straight through, in travel order.
    pub crossings: Vec<Contact>,
    pub segments: Vec<f64>,
    pub length: f64,
}

impl SpecularPath {
    pub fn first_dir(&self) -> Vec3 {
        (self.vertices[1] - self.vertices[0]).normalize()
    }

    pub fn last_dir(&self) -> Vec3 {
        let n = self.vertices.len();
        (self.vertices[n - 1] - self.vertices[n - 2]).normalize()
    }
}

fn incidence(dir: Vec3, normal: Vec3) -> f64 {
    dir.dot(normal).abs().min(1.0).acos()
}

fn on_triangle(mesh: &TriangleMesh, tri: usize, p: Vec3) -> bool {
    let [a, b, c] = mesh.corners(tri);
    let n = (b - a).cross(c - a);
    let nn = n.norm_sq();
    let u = (p - a).cross(c - a).dot(n) / nn;
    let v = (b - a).cross(p - a).dot(n) / nn;
    let tol = 1e-9;
    u >= -tol && v >= -tol && u + v <= 1.0 + tol
}

fn same_plane(a: &Plane, b: &Plane) -> bool {
    let d = a.normal.dot(b.normal);
    d.abs() > 1.0 - 1e-12 && (a.offset - d.signum() * b.offset).abs() < 1e-9
}

/// Surfaces crossed strictly between `a` and `b`, or `None` if an opaque
/// one blocks the segment.
fn crossings(mesh: &TriangleMesh, a: Vec3, b: Vec3) -> Option<Vec<Contact>> {
    let len = (b - a).norm();
    let dir = (b - a) * (1.0 / len);
    let margin = 1e-7 * len.max(1.0);
    let mut hits: Vec<(f64, usize)> = (0..mesh.len())
        .filter_map(|i| {
            let (t, _, _) = moller_trumbore(a, dir, mesh.corners(i))?;
            (t > margin && t < len - margin).then_some((t, i))
        })
        .collect();
    hits.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
    let mut out: Vec<Contact> = Vec::new();
    let mut last_t = f64::NEG_INFINITY;
    for (t, i) in hits {
        // a shared edge is hit once per adjacent triangle
        if t - last_t < 1e-9 {
            continue;
        }
        last_t = t;
        if opaque(&mesh.materials[i]) {
            return None;
        }
        out.push(Contact {
            triangle: i,
            point: a + dir * t,
            theta: incidence(dir, mesh.plane(i).normal),
            material: mesh.materials[i].clone(),
        });
    }
    Some(out)
}

/// Validated path for one ordered triangle sequence, if it exists.
fn realize(mesh: &TriangleMesh, planes: &[Plane], seq: &[usize], tx: Vec3, rx: Vec3) -> Option<SpecularPath> {
    let mut images = vec![tx];
    for &t in seq {
        let last = *images.last().unwrap();
        images.push(planes[t].mirror(last));
    }
    let mut points = vec![Vec3::ZERO; seq.len()];
    let mut target = rx;
    for j in (0..seq.len()).rev() {
        let pl = &planes[seq[j]];
        let image = images[j + 1];
        let (di, dt) = (pl.signed_distance(image), pl.signed_distance(target));
        if !(di * dt < 0.0) {
            return None;
        }
        let p = image + (target - image) * (di / (di - dt));
        if !on_triangle(mesh, seq[j], p) {
            return None;
        }
        points[j] = p;
        target = p;
    }
    let mut vertices = Vec::with_capacity(seq.len() + 2);
    vertices.push(tx);
    vertices.extend_from_slice(&points);
    vertices.push(rx);
    let mut segments = Vec::with_capacity(vertices.len() - 1);
    let mut crossed = Vec::new();
    for w in vertices.windows(2) {
        let len = (w[1] - w[0]).norm();
        if len < 1e-9 {
            return None;
        }
        segments.push(len);
        crossed.extend(crossings(mesh, w[0], w[1])?);
    }
    let bounces = seq
        .iter()
        .enumerate()
        .map(|(j, &t)| Contact {
            triangle: t,
            point: points[j],
            theta: incidence((points[j] - vertices[j]).normalize(), planes[t].normal),
            material: mesh.materials[t].clone(),
        })
        .collect();
    let length = segments.iter().sum();
    Some(SpecularPath { vertices, bounces, crossings: crossed, segments, length })
}

fn extend(
    mesh: &TriangleMesh,
    planes: &[Plane],
    seq: &mut Vec<usize>,
    depth: usize,
    tx: Vec3,
    rx: Vec3,
    out: &mut Vec<SpecularPath>,
) {
    if let Some(p) = realize(mesh, planes, seq, tx, rx) {
        out.push(p);
    }
    if seq.len() == depth {
        return;
    }
    for t in 0..mesh.len() {
        if mesh.materials[t] == ABSORBER {
            continue;
        }
        if let Some(&prev) = seq.last() {
            if same_plane(&planes[prev], &planes[t]) {
                continue;
            }
        }
        seq.push(t);
        extend(mesh, planes, seq, depth, tx, rx, out);
        seq.pop();
    }
}

/// Every specular path from `tx` to `rx` with at most `max_bounces`
/// reflections, direct path first when unblocked. Surfaces crossed on the
/// way are recorded for a transmission factor; opaque ones drop the path.
pub fn enumerate_specular_paths(mesh: &TriangleMesh, tx: Vec3, rx: Vec3, max_bounces: usize) -> Result<Vec<SpecularPath>> {
    if max_bounces > MAX_BOUNCES {
        return Err(Error::Config(format!("at most {MAX_BOUNCES} bounces are supported")));
    }
    mesh.validate()?;
    let planes: Vec<Plane> = (0..mesh.len()).map(|i| mesh.plane(i)).collect();
    let mut out = Vec::new();
    if let Some(p) = realize(mesh, &planes, &[], tx, rx) {
        out.push(p);
    }
    if max_bounces > 0 {
        let per_first: Vec<Vec<SpecularPath>> = (0..mesh.len())
            .into_par_iter()
            .filter(|&t| mesh.materials[t] != ABSORBER)
            .map(|t| {
                let mut v = Vec::new();
                let mut seq = vec![t];
                extend(mesh, &planes, &mut seq, max_bounces, tx, rx, &mut v);
                v
            })
            .collect();
        out.extend(per_first.into_iter().flatten());
    }
    // a bounce on a shared edge is found once per adjacent triangle
    let mut seen = BTreeSet::new();
    out.retain(|p| {
        let key: Vec<i64> = p
            .vertices
            .iter()
            .flat_map(|v| v.to_array())
            .map(|x| (x * 1e7).round() as i64)
            .collect();
        seen.insert(key)
    });
    Ok(out)
}

pub fn reflection_coefficient(materials: &MaterialTable, name: &str, f: f64, theta: f64) -> Result<Complex64> {
    Ok(match name {
        PEC => Complex64::new(-1.0, 0.0),
        ABSORBER => Complex64::new(0.0, 0.0),
        _ => materials.get(name)?.r_perp_from_air(f, theta),
    })
}

pub fn transmission_coefficient(materials: &MaterialTable, name: &str, f: f64, theta: f64) -> Result<f64> {
    let r = reflection_coefficient(materials, name, f, theta)?;
    Ok(if opaque(name) { 0.0 } else { (1.0 - r.norm_sqr()).max(0.0).sqrt() })
}

/// Product of bounce and crossing coefficients.
pub fn path_coefficient(path: &SpecularPath, materials: &MaterialTable, f: f64) -> Result<Complex64> {
    let mut c = Complex64::new(1.0, 0.0);
    for b in &path.bounces {
        c *= reflection_coefficient(materials, &b.material, f, b.theta)?;
    }
    for x in &path.crossings {
        c *= transmission_coefficient(materials, &x.material, f, x.theta)?;
    }
    Ok(c)
}

/// `E0 / s * exp(-j k0 s) * coefficient` for one path.
pub fn path_field(path: &SpecularPath, materials: &MaterialTable, f: f64, e0: f64) -> Result<Complex64> {
    if !(path.length > 0.0) {
        return Err(Error::ZeroLengthPath);
    }
    let k0 = 2.0 * PI * f / C0;
    Ok(path_coefficient(path, materials, f)? * Complex64::from_polar(e0 / path.length, -k0 * path.length))
}

fn ordered_sum(mut terms: Vec<Complex64>) -> Complex64 {
    terms.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    pairwise_sum(&terms)
}

/// Coherent sum over `paths`; independent of their order.
pub fn efield_sum(paths: &[SpecularPath], materials: &MaterialTable, f: f64, e0: f64) -> Result<Complex64> {
    let terms = paths.iter().map(|p| path_field(p, materials, f, e0)).collect::<Result<Vec<_>>>()?;
    Ok(ordered_sum(terms))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassicalPrediction {
    pub frequencies: Vec<f64>,
    pub amplitudes: Vec<Complex64>,
    pub paths: Vec<SpecularPath>,
}

impl ClassicalPrediction {
    pub fn power_db(&self) -> f64 {
        20.0 * self.amplitudes[0].norm().log10()
    }
}

/// Field at `rx` including antenna gains and the transmitter amplitude.
pub fn predict_classical(
    mesh: &TriangleMesh,
    materials: &MaterialTable,
    tx: &Radio,
    rx: &Radio,
    frequencies: &[f64],
    max_bounces: usize,
) -> Result<ClassicalPrediction> {
    if frequencies.is_empty() {
        return Err(Error::Config("need at least one frequency".into()));
    }
    let paths = enumerate_specular_paths(mesh, tx.position, rx.position, max_bounces)?;
    let mut amplitudes = Vec::with_capacity(frequencies.len());
    for &f in frequencies {
        let terms = paths
            .iter()
            .map(|p| Ok(path_field(p, materials, f, tx.amplitude)? * tx.gain(p.first_dir()) * rx.gain(-p.last_dir())))
            .collect::<Result<Vec<_>>>()?;
        amplitudes.push(ordered_sum(terms));
    }
    Ok(ClassicalPrediction { frequencies: frequencies.to_vec(), amplitudes, paths })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn floor(material: &str) -> TriangleMesh {
        let mut m = TriangleMesh::default();
        let s = 1e3;
        m.push_quad(
            [Vec3::new(-s, -s, 0.0), Vec3::new(s, -s, 0.0), Vec3::new(s, s, 0.0), Vec3::new(-s, s, 0.0)],
            material,
        )
        .unwrap();
        m
    }

    fn room() -> TriangleMesh {
        TriangleMesh::cuboid(Vec3::new(0.0, 0.0, 1.5), Vec3::new(3.0, 2.0, 1.5), "concrete").unwrap()
    }

    #[test]
    fn empty_mesh_gives_direct_path() {
        let p = enumerate_specular_paths(&TriangleMesh::default(), Vec3::ZERO, Vec3::new(3.0, 4.0, 0.0), 3).unwrap();
        assert_eq!(p.len(), 1);
        assert!(p[0].bounces.is_empty() && p[0].crossings.is_empty());
        assert!((p[0].length - 5.0).abs() < 1e-12);
    }

    #[test]
    fn ground_bounce_at_specular_point() {
        let (tx, rx) = (Vec3::new(0.0, 0.0, 1.5), Vec3::new(4.0, 0.0, 1.0));
        let p = enumerate_specular_paths(&floor(PEC), tx, rx, 1).unwrap();
        assert_eq!(p.len(), 2);
        let b = p.iter().find(|p| p.bounces.len() == 1).unwrap();
        let x = 4.0 * 1.5 / 2.5;
        assert!((b.bounces[0].point - Vec3::new(x, 0.0, 0.0)).norm() < 1e-9);
        assert!((b.length - (16.0f64 + 2.5 * 2.5).sqrt()).abs() < 1e-9);
    }

    #[test]
    fn first_order_room_paths_match_per_wall_images() {
        let m = room();
        let (tx, rx) = (Vec3::new(-1.0, 0.5, 1.2), Vec3::new(2.0, -0.7, 1.8));
        let p = enumerate_specular_paths(&m, tx, rx, 1).unwrap();
        assert_eq!(p.len(), 7);
        // independent oracle: mirror tx across each axis-aligned wall
        let walls = [(0, -3.0), (0, 3.0), (1, -2.0), (1, 2.0), (2, 0.0), (2, 3.0)];
        let mut expected: Vec<f64> = walls
            .iter()
            .map(|&(axis, w)| {
                let mut a = tx.to_array();
                a[axis] = 2.0 * w - a[axis];
                (Vec3::from_array(a) - rx).norm()
            })
            .collect();
        expected.push((tx - rx).norm());
        expected.sort_by(f64::total_cmp);
        let mut got: Vec<f64> = p.iter().map(|p| p.length).collect();
        got.sort_by(f64::total_cmp);
        for (g, e) in got.iter().zip(&expected) {
            assert!((g - e).abs() < 1e-9);
        }
    }

    #[test]
    fn reflection_law_holds_for_every_bounce() {
        let m = room();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut r = || Vec3::new(rng.random_range(-2.5..2.5), rng.random_range(-1.5..1.5), rng.random_range(0.3..2.7));
        for _ in 0..3 {
            let paths = enumerate_specular_paths(&m, r(), r(), 3).unwrap();
            assert!(paths.len() > 30);
            for p in &paths {
                for (j, b) in p.bounces.iter().enumerate() {
                    let n = m.plane(b.triangle).normal;
                    let din = (p.vertices[j + 1] - p.vertices[j]).normalize();
                    let dout = (p.vertices[j + 2] - p.vertices[j + 1]).normalize();
                    let a_in = din.dot(n).abs().min(1.0).acos();
                    let a_out = dout.dot(n).abs().min(1.0).acos();
                    assert!((a_in - a_out).abs() < 1e-9);
                    // tangential component preserved
                    let t_in = din - n * din.dot(n);
                    let t_out = dout - n * dout.dot(n);
                    assert!((t_in - t_out).norm() < 1e-9);
                }
                assert!(p.crossings.is_empty());
            }
        }
    }

    #[test]
    fn too_many_bounces_rejected() {
        assert!(enumerate_specular_paths(&room(), Vec3::ZERO, Vec3::X, 4).is_err());
    }

    #[test]
    fn crossing_a_wall_applies_transmission() {
        let mut m = TriangleMesh::default();
        m.push_quad(
            [Vec3::new(1.0, -5.0, -5.0), Vec3::new(1.0, 5.0, -5.0), Vec3::new(1.0, 5.0, 5.0), Vec3::new(1.0, -5.0, 5.0)],
            "concrete",
        )
        .unwrap();
        let table = MaterialTable::default();
        let p = enumerate_specular_paths(&m, Vec3::ZERO, Vec3::new(3.0, 0.0, 0.0), 0).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].crossings.len(), 1);
        let r = table.get("concrete").unwrap().r_perp_from_air(2.4e9, 0.0);
        let c = path_coefficient(&p[0], &table, 2.4e9).unwrap();
        assert!((c.re - (1.0 - r.norm_sqr()).sqrt()).abs() < 1e-12 && c.im == 0.0);
        m.materials = vec![PEC.into(); 2];
        assert!(enumerate_specular_paths(&m, Vec3::ZERO, Vec3::new(3.0, 0.0, 0.0), 0).unwrap().is_empty());
    }

    #[test]
    fn direct_field_magnitude_and_phase() {
        let d = 7.3;
        let f = 2.4e9;
        let p = enumerate_specular_paths(&TriangleMesh::default(), Vec3::ZERO, Vec3::new(d, 0.0, 0.0), 0).unwrap();
        let e = efield_sum(&p, &MaterialTable::default(), f, 2.0).unwrap();
        assert!((e.norm() - 2.0 / d).abs() < 1e-12);
        let lambda = C0 / f;
        let expected = Complex64::from_polar(1.0, -2.0 * PI * d / lambda);
        assert!((e / e.norm() - expected).norm() < 1e-9);
    }

    #[test]
    fn two_ray_nulls_at_whole_wavelength_differences() {
        let f = 1e9;
        let lambda = C0 / f;
        let (h1, h2) = (1.0, 1.0);
        let mesh = floor(PEC);
        // horizontal distance where the path difference equals m lambda
        for m in 1..4 {
            let delta = m as f64 * lambda;
            // sqrt(d^2 + 4) - d = delta
            let d = (4.0 * h1 * h2 - delta * delta) / (2.0 * delta);
            let paths = enumerate_specular_paths(&mesh, Vec3::new(0.0, 0.0, h1), Vec3::new(d, 0.0, h2), 1).unwrap();
            let e = efield_sum(&paths, &MaterialTable::default(), f, 1.0).unwrap();
            let direct = 1.0 / d;
            let reflected = 1.0 / (d * d + 4.0f64).sqrt();
            assert!((e.norm() - (direct - reflected)).abs() < 1e-9, "m={m}");
        }
    }

    #[test]
    fn sum_is_order_independent_and_bounded() {
        let m = room();
        let mut paths = enumerate_specular_paths(&m, Vec3::new(-1.0, 0.3, 1.0), Vec3::new(1.5, -0.4, 2.0), 2).unwrap();
        let table = MaterialTable::default();
        let e = efield_sum(&paths, &table, 2.4e9, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..5 {
            paths.shuffle(&mut rng);
            assert!((efield_sum(&paths, &table, 2.4e9, 1.0).unwrap() - e).norm() < 1e-12);
        }
        let bound: f64 = paths.iter().map(|p| 1.0 / p.length).sum();
        assert!(e.norm() <= bound);
    }

    #[test]
    fn zero_length_path_rejected() {
        let p = SpecularPath { vertices: vec![Vec3::ZERO; 2], bounces: vec![], crossings: vec![], segments: vec![0.0], length: 0.0 };
        assert!(matches!(efield_sum(&[p], &MaterialTable::default(), 1e9, 1.0), Err(Error::ZeroLengthPath)));
    }
}
